//! The relaxed illumination-pattern subproblem.
//!
//! With precoders and auxiliary values fixed, each surrogate rate becomes
//! `g_{n,t}(x) = log2(1 + sqrt(x) . v_n^t - |xi_{n,t}|^2 (x . d_n^t + sigma^2))`
//! in the stacked pattern vector `x`, which is concave whenever every `v`
//! entry is nonnegative.

use nalgebra::{DMatrix, DVector};

use super::barrier::{maximize, BarrierSettings, ConcaveProgram, Derivatives, StartError};
use super::transform::AuxiliaryVars;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::pattern::RelaxedPattern;
use crate::CMatrix;

const LN2: f64 = std::f64::consts::LN_2;

/// Entries this close to the floor are released to exactly zero on output.
const SNAP_FACTOR: f64 = 10.0;

/// Coefficients of the pattern subproblem.
///
/// Each `v_n^t` has a single nonzero at stacked index `n + N_s t`, stored here
/// as `v[(n, t)]`; each `d_n^t` is zero outside slot `t`'s block and holds
/// `|h_n p_k^t|^2` at `k + N_s t` for `k != n`, stored as `gains[t][(n, k)]`.
#[derive(Debug, Clone)]
pub struct IpVectorization {
    pub n_s: usize,
    pub m: usize,
    pub v: DMatrix<f64>,
    /// Per slot, `N_s x N_s` with a zero diagonal.
    pub gains: Vec<DMatrix<f64>>,
    /// `|xi_{n,t}|^2`.
    pub xi_sq: DMatrix<f64>,
    pub sigma_sq: f64,
}

impl IpVectorization {
    pub fn index(&self, n: usize, t: usize) -> usize {
        n + self.n_s * t
    }

    pub fn v_vector(&self, n: usize, t: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_s * self.m);
        out[self.index(n, t)] = self.v[(n, t)];
        out
    }

    pub fn d_vector(&self, n: usize, t: usize) -> DVector<f64> {
        let mut out = DVector::zeros(self.n_s * self.m);
        for k in 0..self.n_s {
            out[self.index(k, t)] = self.gains[t][(n, k)];
        }
        out
    }

    /// The `N_s x (M N_s)` block row `[I, I, ..., I]`; `A x` gives row sums.
    pub fn a_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_s, self.n_s * self.m, |i, j| if j % self.n_s == i { 1.0 } else { 0.0 })
    }

    /// `g_{n,t}(x)` for every entry, evaluated through the stacked vectors.
    pub fn surrogate(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_s, self.m, |n, t| {
            let sqrt_x = x.map(|v| v.max(0.0).sqrt());
            let arg = 1.0 + sqrt_x.dot(&self.v_vector(n, t))
                - self.xi_sq[(n, t)] * (x.dot(&self.d_vector(n, t)) + self.sigma_sq);
            arg.ln() / LN2
        })
    }

    fn log_arg(&self, x: &DVector<f64>, n: usize, t: usize) -> f64 {
        let interference: f64 = (0..self.n_s).map(|k| self.gains[t][(n, k)] * x[self.index(k, t)]).sum();
        1.0 + x[self.index(n, t)].sqrt() * self.v[(n, t)] - self.xi_sq[(n, t)] * (interference + self.sigma_sq)
    }
}

/// Builds the stacked coefficients from fixed precoders and the `xi` values.
pub fn build_ip_vectorization(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    aux_xi: &AuxiliaryVars,
    sigma_sq: f64,
) -> Result<IpVectorization> {
    let (n_s, n_bs) = channel.h.shape();
    let m = precoders.len();
    if aux_xi.values.shape() != (n_s, m) || precoders.iter().any(|p| p.shape() != (n_bs, n_s)) {
        return Err(Error::DimensionMismatch("pattern subproblem inputs".into()));
    }
    let mut v = DMatrix::zeros(n_s, m);
    let mut gains = Vec::with_capacity(m);
    for (t, p) in precoders.iter().enumerate() {
        let eff = &channel.h * p;
        let mut g = eff.map(|z| z.norm_sqr());
        g.fill_diagonal(0.0);
        gains.push(g);
        for n in 0..n_s {
            // nonnegative at the stationary point; the clamp only guards rounding
            v[(n, t)] = (2.0 * (aux_xi.values[(n, t)].conj() * eff[(n, n)]).re).max(0.0);
        }
    }
    Ok(IpVectorization {
        n_s,
        m,
        v,
        gains,
        xi_sq: aux_xi.values.map(|z| z.norm_sqr()),
        sigma_sq,
    })
}

#[derive(Debug, Clone)]
pub struct IpSolution {
    pub relaxed: RelaxedPattern,
    /// Summed surrogate rates at the returned pattern.
    pub objective: f64,
    pub kkt_residual: f64,
    pub rate_feasible: bool,
    pub converged: bool,
    pub newton_steps: usize,
}

/// How the pattern polytope is parametrized.
enum Geometry {
    /// `K M = N_s`: column sums equal `K` and row sums equal 1, so the
    /// polytope has no interior in `x`. Work in `y` with `x = x0 + N y`.
    Transport { x0: DVector<f64>, basis: DMatrix<f64> },
    /// `K M > N_s`: the inequalities have an interior; `y = x`.
    Free,
}

struct IpProgram<'a> {
    vec: &'a IpVectorization,
    k: f64,
    floor: f64,
    gamma: Vec<(usize, f64)>,
    geometry: Geometry,
}

impl IpProgram<'_> {
    fn len(&self) -> usize {
        self.vec.n_s * self.vec.m
    }

    fn to_x(&self, y: &DVector<f64>) -> DVector<f64> {
        match &self.geometry {
            Geometry::Transport { x0, basis } => x0 + basis * y,
            Geometry::Free => y.clone(),
        }
    }

    fn n_polytope(&self) -> usize {
        match self.geometry {
            Geometry::Transport { .. } => 0,
            Geometry::Free => self.vec.m + self.vec.n_s,
        }
    }

    fn gamma_offset(&self) -> usize {
        2 * self.len() + self.n_polytope()
    }
}

impl ConcaveProgram for IpProgram<'_> {
    fn dim(&self) -> usize {
        match &self.geometry {
            Geometry::Transport { basis, .. } => basis.ncols(),
            Geometry::Free => self.len(),
        }
    }

    fn n_constraints(&self) -> usize {
        self.gamma_offset() + self.gamma.len()
    }

    fn soft_constraints(&self) -> Vec<usize> {
        (self.gamma_offset()..self.n_constraints()).collect()
    }

    fn values(&self, y: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let x = self.to_x(y);
        if x.iter().any(|&v| !(v > 0.0)) {
            return None;
        }
        let (n_s, m) = (self.vec.n_s, self.vec.m);
        let len = self.len();
        let mut c = DVector::zeros(self.n_constraints());
        for i in 0..len {
            c[i] = x[i] - self.floor;
            c[len + i] = 1.0 - x[i];
        }
        if let Geometry::Free = self.geometry {
            for t in 0..m {
                c[2 * len + t] = self.k - (0..n_s).map(|n| x[n + n_s * t]).sum::<f64>();
            }
            for n in 0..n_s {
                c[2 * len + m + n] = (0..m).map(|t| x[n + n_s * t]).sum::<f64>() - 1.0;
            }
        }
        let mut per_beam = vec![0.0; n_s];
        let mut total = 0.0;
        for t in 0..m {
            for n in 0..n_s {
                let a = self.vec.log_arg(&x, n, t);
                if !(a > 0.0) {
                    return None;
                }
                let g = a.ln() / LN2;
                per_beam[n] += g;
                total += g;
            }
        }
        let off = self.gamma_offset();
        for (i, &(n, gamma)) in self.gamma.iter().enumerate() {
            c[off + i] = per_beam[n] - gamma;
        }
        Some((total, c))
    }

    fn derivatives(&self, y: &DVector<f64>, w0: f64, w: &DVector<f64>) -> Derivatives {
        let x = self.to_x(y);
        let (n_s, m) = (self.vec.n_s, self.vec.m);
        let len = self.len();
        let nc = self.n_constraints();
        let mut grad = DVector::zeros(len);
        let mut hess = DMatrix::zeros(len, len);
        let mut jac = DMatrix::zeros(nc, len);

        for i in 0..len {
            jac[(i, i)] = 1.0;
            jac[(len + i, i)] = -1.0;
            grad[i] += w[i] - w[len + i];
        }
        if let Geometry::Free = self.geometry {
            for t in 0..m {
                for n in 0..n_s {
                    let i = n + n_s * t;
                    jac[(2 * len + t, i)] = -1.0;
                    jac[(2 * len + m + n, i)] = 1.0;
                    grad[i] += -w[2 * len + t] + w[2 * len + m + n];
                }
            }
        }

        let off = self.gamma_offset();
        for t in 0..m {
            for n in 0..n_s {
                let gi = self.gamma.iter().position(|&(b, _)| b == n);
                let weight = w0 + gi.map_or(0.0, |i| w[off + i]);
                let a = self.vec.log_arg(&x, n, t);
                let own = n + n_s * t;
                let xi_sq = self.vec.xi_sq[(n, t)];
                let v = self.vec.v[(n, t)];
                // gradient of the log argument
                let mut da = vec![0.0; n_s];
                for (k, d) in da.iter_mut().enumerate() {
                    *d = if k == n {
                        v / (2.0 * x[own].sqrt())
                    } else {
                        -xi_sq * self.vec.gains[t][(n, k)]
                    };
                }
                let d2a = -v / (4.0 * x[own].powf(1.5));
                for k in 0..n_s {
                    let ik = k + n_s * t;
                    let dg = da[k] / (a * LN2);
                    grad[ik] += weight * dg;
                    if let Some(i) = gi {
                        jac[(off + i, ik)] += dg;
                    }
                    for l in 0..n_s {
                        hess[(ik, l + n_s * t)] -= weight * da[k] * da[l] / (a * a * LN2);
                    }
                }
                hess[(own, own)] += weight * d2a / (a * LN2);
            }
        }

        match &self.geometry {
            Geometry::Free => Derivatives { grad, hess, jac },
            Geometry::Transport { basis, .. } => Derivatives {
                grad: basis.transpose() * grad,
                hess: basis.transpose() * hess * basis,
                jac: jac * basis,
            },
        }
    }
}

/// Null-space basis of the transportation equalities (unit column sums
/// across slots, fixed row sums within a slot), one vector per interior
/// cell `(n, t)` with `n < N_s - 1`, `t < M - 1`.
fn transport_basis(n_s: usize, m: usize) -> DMatrix<f64> {
    let cols = (n_s - 1) * (m - 1);
    let mut b = DMatrix::zeros(n_s * m, cols);
    for t in 0..m - 1 {
        for n in 0..n_s - 1 {
            let j = n + (n_s - 1) * t;
            b[(n + n_s * t, j)] = 1.0;
            b[(n_s - 1 + n_s * t, j)] = -1.0;
            b[(n + n_s * (m - 1), j)] = -1.0;
            b[(n_s - 1 + n_s * (m - 1), j)] = 1.0;
        }
    }
    b
}

/// Maximizes the summed surrogate rates over the relaxed pattern subject to
/// the rate thresholds, at most `K` beams per slot, every beam covered, and
/// `0 <= x <= 1`.
///
/// Entries are kept above `config.solver.barrier_floor` during the solve and
/// entries within a small multiple of it are set to zero in the result.
/// `warm` is the current relaxed pattern; the solve starts from a point
/// pulled slightly toward the polytope's center.
pub fn solve_ip_subproblem(
    vectorization: &IpVectorization,
    gamma: &[f64],
    k: usize,
    config: &SystemConfig,
    warm: &RelaxedPattern,
) -> Result<IpSolution> {
    let (n_s, m) = (vectorization.n_s, vectorization.m);
    if warm.n_s != n_s || warm.m != m || gamma.len() != n_s {
        return Err(Error::DimensionMismatch("pattern subproblem warm start".into()));
    }
    if k * m < n_s {
        return Err(Error::InvalidDimensions(format!("K*M = {} < N_s = {n_s}", k * m)));
    }
    let floor = config.solver.barrier_floor;
    let gamma_list: Vec<(usize, f64)> = gamma
        .iter()
        .enumerate()
        .filter(|&(_, &g)| g > 0.0)
        .map(|(n, &g)| (n, g))
        .collect();

    // patterns forced by the dimensions
    if m == 1 || k >= n_s && k * m == n_s {
        let x = DVector::from_element(n_s * m, 1.0);
        let g = vectorization.surrogate(&x);
        let per_beam: Vec<f64> = (0..n_s).map(|n| g.row(n).sum()).collect();
        return Ok(IpSolution {
            objective: g.sum(),
            relaxed: RelaxedPattern { n_s, m, x_vec: x },
            kkt_residual: 0.0,
            rate_feasible: gamma_list.iter().all(|&(n, gv)| per_beam[n] >= gv),
            converged: true,
            newton_steps: 0,
        });
    }

    let (geometry, center) = if k * m == n_s {
        let x0 = DVector::from_element(n_s * m, k as f64 / n_s as f64);
        (
            Geometry::Transport { x0: x0.clone(), basis: transport_basis(n_s, m) },
            x0,
        )
    } else {
        let hi = (k as f64 / n_s as f64).min(1.0);
        let u = 0.5 * (1.0 / m as f64 + hi);
        (Geometry::Free, DVector::from_element(n_s * m, u))
    };
    let prog = IpProgram {
        vec: vectorization,
        k: k as f64,
        floor,
        gamma: gamma_list,
        geometry,
    };
    let to_y = |x: &DVector<f64>| -> DVector<f64> {
        match &prog.geometry {
            Geometry::Free => x.clone(),
            Geometry::Transport { x0, .. } => DVector::from_fn((n_s - 1) * (m - 1), |j, _| {
                let (n, t) = (j % (n_s - 1), j / (n_s - 1));
                x[n + n_s * t] - x0[n + n_s * t]
            }),
        }
    };

    let settings = BarrierSettings::new(config.solver.eps2, config.solver.max_newton_iters);
    let mut beta = 1e-3;
    let outcome = loop {
        let start = &warm.x_vec * (1.0 - beta) + &center * beta;
        match maximize(&prog, to_y(&start), &settings) {
            Ok(out) => break out,
            Err(StartError::OutsideDomain | StartError::HardConstraintViolated(_)) if beta < 1.0 => {
                beta = (beta * 10.0).min(1.0);
            }
            Err(e) => {
                return Err(Error::NonFiniteInput(format!(
                    "no interior starting point for the pattern subproblem: {e:?}"
                )))
            }
        }
    };

    let mut x = prog.to_x(&outcome.z);
    for v in x.iter_mut() {
        if *v <= SNAP_FACTOR * floor {
            *v = 0.0;
        } else if *v > 1.0 {
            *v = 1.0;
        }
    }
    let objective = vectorization.surrogate(&x).sum();
    Ok(IpSolution {
        relaxed: RelaxedPattern { n_s, m, x_vec: x },
        objective,
        kkt_residual: outcome.kkt_residual,
        rate_feasible: outcome.feasible,
        converged: outcome.converged,
        newton_steps: outcome.newton_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fp::transform::update_xi;
    use crate::model::rate_matrix;
    use crate::Cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmatrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| Cx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn instance(seed: u64, n_s: usize, n_bs: usize, m: usize, x: &DMatrix<f64>) -> (ChannelSet, Vec<CMatrix>, IpVectorization) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelSet::new(random_cmatrix(n_s, n_bs, &mut rng));
        let p: Vec<CMatrix> = (0..m).map(|_| random_cmatrix(n_bs, n_s, &mut rng) * Cx::new(3.0, 0.0)).collect();
        let xi = update_xi(&ch, &p, x, 1.0).unwrap();
        let vec = build_ip_vectorization(&ch, &p, &xi, 1.0).unwrap();
        (ch, p, vec)
    }

    #[test]
    fn structure_of_small_case() {
        let x = DMatrix::from_element(2, 1, 0.5);
        let (_, _, vec) = instance(1, 2, 3, 1, &x);
        let d = vec.d_vector(0, 0);
        assert_eq!(d.iter().filter(|v| **v != 0.0).count(), 1);
        assert_eq!(d[0], 0.0);
        assert!(d[1] > 0.0);
        assert_eq!(vec.a_matrix().shape(), (2, 2));
    }

    #[test]
    fn zero_xi_gives_zero_v() {
        let x = DMatrix::zeros(3, 2);
        let (_, _, vec) = instance(2, 3, 4, 2, &x);
        assert!(vec.v.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn block_structure() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DMatrix::from_fn(4, 3, |_, _| rng.random::<f64>());
        let (_, _, vec) = instance(3, 4, 5, 3, &x);
        for t in 0..3 {
            for n in 0..4 {
                let v = vec.v_vector(n, t);
                assert!(v.iter().filter(|e| **e != 0.0).count() <= 1);
                let d = vec.d_vector(n, t);
                assert!(d.iter().filter(|e| **e != 0.0).count() <= 3);
                for (i, e) in d.iter().enumerate() {
                    if *e != 0.0 {
                        assert_eq!(i / 4, t);
                        assert!(*e > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn vectorized_form_matches_direct_rates() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let x = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
            let (ch, p, vec) = instance(seed, 4, 6, 2, &x);
            let g = vec.surrogate(&RelaxedPattern::from_matrix(&x).x_vec);
            let r = rate_matrix(&ch, &p, &x, 1.0).unwrap();
            assert!((g - r.rates).amax() < 1e-10);
        }
    }

    #[test]
    fn transport_basis_preserves_sums() {
        let b = transport_basis(4, 3);
        for j in 0..b.ncols() {
            let col = RelaxedPattern { n_s: 4, m: 3, x_vec: b.column(j).into_owned() }.to_matrix();
            for t in 0..3 {
                assert_eq!(col.column(t).sum(), 0.0);
            }
            for n in 0..4 {
                assert_eq!(col.row(n).sum(), 0.0);
            }
        }
        assert_eq!(b.clone().rank(1e-12), 6);
    }

    #[test]
    fn degenerate_objective_returns_feasible_point() {
        let vec = IpVectorization {
            n_s: 4,
            m: 2,
            v: DMatrix::zeros(4, 2),
            gains: vec![DMatrix::zeros(4, 4); 2],
            xi_sq: DMatrix::zeros(4, 2),
            sigma_sq: 1.0,
        };
        let cfg = SystemConfig::new(4, 4, 2, 2);
        let warm = RelaxedPattern::uniform(4, 2, 0.5);
        let sol = solve_ip_subproblem(&vec, &[0.0; 4], 2, &cfg, &warm).unwrap();
        let x = sol.relaxed.to_matrix();
        for t in 0..2 {
            assert!((x.column(t).sum() - 2.0).abs() < 1e-6);
        }
        for n in 0..4 {
            assert!((x.row(n).sum() - 1.0).abs() < 1e-6);
        }
        assert!(x.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn forced_single_slot_pattern() {
        let x = DMatrix::from_element(2, 1, 1.0);
        let (_, _, vec) = instance(5, 2, 3, 1, &x);
        let cfg = SystemConfig::new(3, 2, 2, 1);
        let sol = solve_ip_subproblem(&vec, &[0.0; 2], 2, &cfg, &RelaxedPattern::uniform(2, 1, 1.0)).unwrap();
        assert_eq!(sol.relaxed.x_vec, DVector::from_element(2, 1.0));
    }

    /// Brute-force maximum over the transportation polytope for N_s=4, K=2,
    /// M=2: x(:,1) free in [0,1]^4 with sum 2, x(:,2) = 1 - x(:,1).
    fn grid_max(vec: &IpVectorization, step: f64) -> f64 {
        let steps = (1.0 / step).round() as usize;
        let mut best = f64::NEG_INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                for c in 0..=steps {
                    let (xa, xb, xc) = (a as f64 * step, b as f64 * step, c as f64 * step);
                    let xd = 2.0 - xa - xb - xc;
                    if !(-1e-12..=1.0 + 1e-12).contains(&xd) {
                        continue;
                    }
                    let xd = xd.clamp(0.0, 1.0);
                    let col = [xa, xb, xc, xd];
                    let x = DVector::from_fn(8, |i, _| if i < 4 { col[i] } else { 1.0 - col[i - 4] });
                    let g = vec.surrogate(&x);
                    if g.iter().all(|v| v.is_finite()) {
                        best = best.max(g.sum());
                    }
                }
            }
        }
        best
    }

    #[test]
    fn matches_grid_search() {
        for seed in 0..3 {
            let x = DMatrix::from_element(4, 2, 0.5);
            let (_, _, vec) = instance(200 + seed, 4, 4, 2, &x);
            let cfg = SystemConfig::new(4, 4, 2, 2);
            let sol = solve_ip_subproblem(&vec, &[0.0; 4], 2, &cfg, &RelaxedPattern::uniform(4, 2, 0.5)).unwrap();
            let grid = grid_max(&vec, 0.05);
            assert!(sol.objective >= grid * 0.99, "{} vs grid {grid}", sol.objective);
            assert!(sol.objective <= grid * 1.01 + 1e-9, "{} vs grid {grid}", sol.objective);
        }
    }

    #[test]
    fn symmetric_channels_saturate_capacity() {
        // identical beams: every v entry positive, the best use of capacity is to fill it
        let n_s = 4;
        let mut h = CMatrix::zeros(n_s, n_s);
        for n in 0..n_s {
            h[(n, n)] = Cx::new(1.0, 0.0);
        }
        let ch = ChannelSet::new(h);
        let p = vec![CMatrix::identity(n_s, n_s) * Cx::new(2.0, 0.0); 2];
        let x = DMatrix::from_element(n_s, 2, 0.5);
        let xi = update_xi(&ch, &p, &x, 1.0).unwrap();
        let vec = build_ip_vectorization(&ch, &p, &xi, 1.0).unwrap();
        let cfg = SystemConfig::new(4, 4, 2, 2);
        let sol = solve_ip_subproblem(&vec, &[0.0; 4], 2, &cfg, &RelaxedPattern::uniform(4, 2, 0.5)).unwrap();
        let xm = sol.relaxed.to_matrix();
        for t in 0..2 {
            assert!((xm.column(t).sum() - 2.0).abs() < 1e-6);
        }
        assert!(sol.objective >= grid_max(&vec, 0.05) - 1e-6);
    }

    #[test]
    fn free_geometry_respects_capacity() {
        // K M > N_s: 3 beams, K = 2, M = 2
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = DMatrix::from_fn(3, 2, |_, _| 0.3 + 0.4 * rng.random::<f64>());
        let (_, _, vec) = instance(9, 3, 4, 2, &x);
        let cfg = SystemConfig::new(4, 3, 2, 2);
        let sol = solve_ip_subproblem(&vec, &[0.0; 3], 2, &cfg, &RelaxedPattern::from_matrix(&x)).unwrap();
        let xm = sol.relaxed.to_matrix();
        for t in 0..2 {
            assert!(xm.column(t).sum() <= 2.0 + 1e-9);
        }
        for n in 0..3 {
            assert!(xm.row(n).sum() >= 1.0 - 1e-9);
        }
    }
}
