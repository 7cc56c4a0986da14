//! The beamformer subproblem: maximize the summed surrogate rates over the
//! per-slot precoders for fixed auxiliary values, subject to the per-beam
//! rate thresholds and the per-slot power budget.
//!
//! The objective depends on `P_t` only through `H P_t`, so any component of a
//! precoder column orthogonal to the row space of `H` costs power and buys
//! nothing. The solver therefore works in an orthonormal basis `B` of that
//! row space, `P_t = B C_t`, which shrinks the variable count from `N_BS` to
//! at most `N_s` complex entries per column.

use nalgebra::{DMatrix, DVector};

use super::barrier::{maximize, BarrierSettings, ConcaveProgram, Derivatives, StartError};
use super::transform::AuxiliaryVars;
use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::model::{PrecoderSet, SystemConfig};
use crate::{CMatrix, Cx};

const LN2: f64 = std::f64::consts::LN_2;

/// Row-space basis of the channel and the channel expressed in it.
#[derive(Debug, Clone)]
pub struct ReducedChannel {
    /// `N_BS x r`, orthonormal columns.
    pub basis: CMatrix,
    /// `N_s x r`, equal to `H B`.
    pub g: CMatrix,
}

impl ReducedChannel {
    pub fn new(channel: &ChannelSet) -> Self {
        let basis = channel.h.adjoint().qr().q();
        let g = &channel.h * &basis;
        Self { basis, g }
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }
}

#[derive(Debug, Clone)]
pub struct BeamformerSolution {
    pub precoders: PrecoderSet,
    /// Summed surrogate rates at the returned precoders.
    pub objective: f64,
    pub kkt_residual: f64,
    /// False when the rate thresholds could not be met at these auxiliary
    /// values; the precoders then maximize the smallest threshold slack.
    pub rate_feasible: bool,
    pub converged: bool,
    pub newton_steps: usize,
}

struct SlotLayout {
    t: usize,
    beams: Vec<usize>,
    offset: usize,
}

struct BeamformerProgram<'a> {
    g: &'a CMatrix,
    r: usize,
    weights: &'a DMatrix<f64>,
    aux: &'a CMatrix,
    sigma_sq: f64,
    p_tot: f64,
    slots: Vec<SlotLayout>,
    /// `(beam, threshold)` pairs enforced as constraints.
    gamma: Vec<(usize, f64)>,
    dim: usize,
    /// Real-coordinate gradients of `Re(g_n c)` and `Im(g_n c)`.
    rho: Vec<DVector<f64>>,
    iota: Vec<DVector<f64>>,
}

impl<'a> BeamformerProgram<'a> {
    fn new(
        reduced: &'a ReducedChannel,
        weights: &'a DMatrix<f64>,
        aux: &'a CMatrix,
        sigma_sq: f64,
        p_tot: f64,
        slot_ids: &[usize],
        gamma: Vec<(usize, f64)>,
    ) -> Self {
        let r = reduced.rank();
        let mut offset = 0;
        let slots = slot_ids
            .iter()
            .map(|&t| {
                let beams: Vec<usize> = (0..weights.nrows()).filter(|&n| weights[(n, t)] > 0.0).collect();
                let layout = SlotLayout { t, offset, beams };
                offset += 2 * r * layout.beams.len();
                layout
            })
            .collect();
        let n_s = reduced.g.nrows();
        let rho = (0..n_s)
            .map(|n| real_grad(&row_of(&reduced.g, n, Cx::new(1.0, 0.0))))
            .collect();
        let iota = (0..n_s)
            .map(|n| real_grad(&row_of(&reduced.g, n, Cx::new(0.0, -1.0))))
            .collect();
        Self {
            g: &reduced.g,
            r,
            weights,
            aux,
            sigma_sq,
            p_tot,
            slots,
            gamma,
            dim: offset,
            rho,
            iota,
        }
    }

    fn column(&self, z: &DVector<f64>, start: usize) -> Vec<Cx> {
        (0..self.r).map(|i| Cx::new(z[start + i], z[start + self.r + i])).collect()
    }

    fn inner(&self, n: usize, c: &[Cx]) -> Cx {
        (0..self.r).map(|i| self.g[(n, i)] * c[i]).sum()
    }

    fn gamma_index(&self, n: usize) -> Option<usize> {
        self.gamma.iter().position(|&(b, _)| b == n)
    }

    /// Per-slot log arguments `a_n` for every active beam, with the columns
    /// and inner products used to form them.
    fn slot_terms(&self, z: &DVector<f64>, s: &SlotLayout) -> (Vec<Vec<Cx>>, Vec<Vec<Cx>>, Vec<f64>) {
        let cols: Vec<Vec<Cx>> = (0..s.beams.len())
            .map(|j| self.column(z, s.offset + 2 * self.r * j))
            .collect();
        let prods: Vec<Vec<Cx>> = s
            .beams
            .iter()
            .map(|&n| cols.iter().map(|c| self.inner(n, c)).collect())
            .collect();
        let args = s
            .beams
            .iter()
            .enumerate()
            .map(|(jn, &n)| {
                let x = self.weights[(n, s.t)];
                let mu = self.aux[(n, s.t)];
                let interference: f64 = s
                    .beams
                    .iter()
                    .enumerate()
                    .filter(|&(jk, _)| jk != jn)
                    .map(|(jk, &k)| self.weights[(k, s.t)] * prods[jn][jk].norm_sqr())
                    .sum();
                1.0 + 2.0 * (mu.conj() * prods[jn][jn]).re * x.sqrt()
                    - mu.norm_sqr() * (interference + self.sigma_sq)
            })
            .collect();
        (cols, prods, args)
    }
}

fn row_of(g: &CMatrix, n: usize, scale: Cx) -> Vec<Cx> {
    (0..g.ncols()).map(|i| g[(n, i)] * scale).collect()
}

/// Gradient of `Re(v c)` with respect to `[Re c; Im c]`.
fn real_grad(v: &[Cx]) -> DVector<f64> {
    let r = v.len();
    DVector::from_fn(2 * r, |i, _| if i < r { v[i].re } else { -v[i - r].im })
}

impl ConcaveProgram for BeamformerProgram<'_> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_constraints(&self) -> usize {
        self.slots.len() + self.gamma.len()
    }

    fn soft_constraints(&self) -> Vec<usize> {
        (self.slots.len()..self.n_constraints()).collect()
    }

    fn values(&self, z: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let mut c = DVector::zeros(self.n_constraints());
        let mut per_beam = vec![0.0; self.weights.nrows()];
        let mut total = 0.0;
        for (si, s) in self.slots.iter().enumerate() {
            let (cols, _, args) = self.slot_terms(z, s);
            for (j, &n) in s.beams.iter().enumerate() {
                if !(args[j] > 0.0) {
                    return None;
                }
                let f = args[j].ln() / LN2;
                total += f;
                per_beam[n] += f;
            }
            let power: f64 = cols.iter().flatten().map(|v| v.norm_sqr()).sum();
            c[si] = self.p_tot - power;
        }
        for (gi, &(n, gamma)) in self.gamma.iter().enumerate() {
            c[self.slots.len() + gi] = per_beam[n] - gamma;
        }
        Some((total, c))
    }

    fn derivatives(&self, z: &DVector<f64>, w0: f64, w: &DVector<f64>) -> Derivatives {
        let dim = self.dim;
        let r2 = 2 * self.r;
        let mut grad = DVector::zeros(dim);
        let mut hess = DMatrix::zeros(dim, dim);
        let mut jac = DMatrix::zeros(self.n_constraints(), dim);

        for (si, s) in self.slots.iter().enumerate() {
            let (_, prods, args) = self.slot_terms(z, s);
            let len = r2 * s.beams.len();
            for (jn, &n) in s.beams.iter().enumerate() {
                let x = self.weights[(n, s.t)];
                let mu = self.aux[(n, s.t)];
                let mu_sq = mu.norm_sqr();
                let a = args[jn];
                let gi = self.gamma_index(n);
                let weight = w0 + gi.map_or(0.0, |i| w[self.slots.len() + i]);

                let mut da = DVector::zeros(len);
                let signal_row = row_of(self.g, n, mu.conj() * x.sqrt());
                da.rows_mut(r2 * jn, r2).axpy(2.0, &real_grad(&signal_row), 0.0);
                for (jk, &k) in s.beams.iter().enumerate() {
                    if jk == jn {
                        continue;
                    }
                    let coef = -2.0 * mu_sq * self.weights[(k, s.t)];
                    let prod = prods[jn][jk];
                    let mut blk = da.rows_mut(r2 * jk, r2);
                    blk.axpy(coef * prod.re, &self.rho[n], 1.0);
                    blk.axpy(coef * prod.im, &self.iota[n], 1.0);
                }
                let df = &da / (a * LN2);

                let mut h = hess.view_mut((s.offset, s.offset), (len, len));
                h.ger(-weight / (a * a * LN2), &da, &da, 1.0);
                if mu_sq > 0.0 {
                    for (jk, &k) in s.beams.iter().enumerate() {
                        if jk == jn {
                            continue;
                        }
                        let coef = -2.0 * mu_sq * self.weights[(k, s.t)] * weight / (a * LN2);
                        let mut blk = h.view_mut((r2 * jk, r2 * jk), (r2, r2));
                        blk.ger(coef, &self.rho[n], &self.rho[n], 1.0);
                        blk.ger(coef, &self.iota[n], &self.iota[n], 1.0);
                    }
                }
                grad.rows_mut(s.offset, len).axpy(weight, &df, 1.0);
                if let Some(i) = gi {
                    let row = self.slots.len() + i;
                    for (j, v) in df.iter().enumerate() {
                        jac[(row, s.offset + j)] += v;
                    }
                }
            }
            // power budget P - ||z_t||^2
            let zt = z.rows(s.offset, len);
            grad.rows_mut(s.offset, len).axpy(-2.0 * w[si], &zt, 1.0);
            for j in 0..len {
                hess[(s.offset + j, s.offset + j)] -= 2.0 * w[si];
                jac[(si, s.offset + j)] = -2.0 * zt[j];
            }
        }
        Derivatives { grad, hess, jac }
    }
}

fn pack(prog: &BeamformerProgram, reduced: &ReducedChannel, warm: &PrecoderSet, p_tot: f64) -> DVector<f64> {
    let r = prog.r;
    let mut z = DVector::zeros(prog.dim);
    for s in &prog.slots {
        let c = reduced.basis.adjoint() * &warm.slots[s.t];
        let mut power = 0.0;
        for (j, &n) in s.beams.iter().enumerate() {
            let at = s.offset + 2 * r * j;
            for i in 0..r {
                z[at + i] = c[(i, n)].re;
                z[at + r + i] = c[(i, n)].im;
                power += c[(i, n)].norm_sqr();
            }
        }
        let cap = p_tot * (1.0 - 1e-6);
        if power > cap {
            let scale = (cap / power).sqrt();
            z.rows_mut(s.offset, 2 * r * s.beams.len()).scale_mut(scale);
        }
    }
    z
}

fn unpack(prog: &BeamformerProgram, reduced: &ReducedChannel, z: &DVector<f64>, out: &mut PrecoderSet) {
    let r = prog.r;
    for s in &prog.slots {
        let mut c = CMatrix::zeros(r, prog.weights.nrows());
        for (j, &n) in s.beams.iter().enumerate() {
            let col = prog.column(z, s.offset + 2 * r * j);
            for i in 0..r {
                c[(i, n)] = col[i];
            }
        }
        out.slots[s.t] = &reduced.basis * c;
    }
}

fn domain_error(prog: &BeamformerProgram, z: &DVector<f64>) -> Error {
    for s in &prog.slots {
        let (_, _, args) = prog.slot_terms(z, s);
        if let Some(j) = args.iter().position(|a| !(*a > 0.0)) {
            return Error::NonPositiveLogArgument { beam: s.beams[j], slot: s.t, value: args[j] };
        }
    }
    Error::NonFiniteInput("beamformer warm start".into())
}

struct Solved {
    z: DVector<f64>,
    objective: f64,
    kkt: f64,
    feasible: bool,
    converged: bool,
    steps: usize,
}

fn run(prog: &BeamformerProgram, z0: DVector<f64>, settings: &BarrierSettings) -> Result<Solved> {
    if prog.dim == 0 {
        return Ok(Solved {
            objective: prog.values(&z0).map_or(0.0, |v| v.0),
            z: z0,
            kkt: 0.0,
            feasible: prog.gamma.is_empty(),
            converged: true,
            steps: 0,
        });
    }
    match maximize(prog, z0.clone(), settings) {
        Ok(out) => Ok(Solved {
            objective: out.objective,
            kkt: out.kkt_residual,
            feasible: out.feasible,
            converged: out.converged,
            steps: out.newton_steps,
            z: out.z,
        }),
        Err(StartError::OutsideDomain) => Err(domain_error(prog, &z0)),
        Err(StartError::HardConstraintViolated(i)) => Err(Error::NonFiniteInput(format!(
            "warm start violates power constraint {i}"
        ))),
    }
}

/// Maximizes the summed surrogate rates for fixed auxiliary values.
///
/// `warm` must keep every surrogate log argument positive; the precoders the
/// auxiliary values were computed from always do. Thresholds equal to zero
/// are not enforced: true rates are never negative, so they cannot bind.
/// When the thresholds are positive the slots are first solved
/// independently; the coupled problem is only formed if that solution
/// misses a threshold.
pub fn solve_beamformer_subproblem(
    channel: &ChannelSet,
    weights: &DMatrix<f64>,
    aux: &AuxiliaryVars,
    config: &SystemConfig,
    warm: &PrecoderSet,
) -> Result<BeamformerSolution> {
    solve_reduced(&ReducedChannel::new(channel), weights, aux, config, warm)
}

pub(crate) fn solve_reduced(
    reduced: &ReducedChannel,
    weights: &DMatrix<f64>,
    aux: &AuxiliaryVars,
    config: &SystemConfig,
    warm: &PrecoderSet,
) -> Result<BeamformerSolution> {
    let (n_s, m) = weights.shape();
    if reduced.g.nrows() != n_s || aux.values.shape() != (n_s, m) || warm.n_slots() != m {
        return Err(Error::DimensionMismatch(format!(
            "beamformer subproblem: weights {:?}, aux {:?}, {} warm slots",
            weights.shape(),
            aux.values.shape(),
            warm.n_slots()
        )));
    }
    let settings = BarrierSettings::new(config.solver.eps1, config.solver.max_newton_iters);
    let sigma_sq = config.sigma_sq;
    let p_tot = config.p_tot;
    let n_bs = reduced.basis.nrows();
    let mut precoders = PrecoderSet::zeros(n_bs, n_s, m);

    let mut objective = 0.0;
    let mut kkt: f64 = 0.0;
    let mut converged = true;
    let mut steps = 0;
    let mut per_beam = vec![0.0; n_s];
    for t in 0..m {
        let prog = BeamformerProgram::new(reduced, weights, &aux.values, sigma_sq, p_tot, &[t], Vec::new());
        let z0 = pack(&prog, reduced, warm, p_tot);
        let sol = run(&prog, z0, &settings)?;
        objective += sol.objective;
        kkt = kkt.max(sol.kkt);
        converged &= sol.converged;
        steps += sol.steps;
        let (cols, _, args) = prog.slot_terms(&sol.z, &prog.slots[0]);
        drop(cols);
        for (j, &n) in prog.slots[0].beams.iter().enumerate() {
            per_beam[n] += args[j].ln() / LN2;
        }
        unpack(&prog, reduced, &sol.z, &mut precoders);
    }

    let gamma: Vec<(usize, f64)> = config
        .gamma
        .iter()
        .enumerate()
        .filter(|&(_, &g)| g > 0.0)
        .map(|(n, &g)| (n, g))
        .collect();
    let misses = gamma.iter().any(|&(n, g)| per_beam[n] < g);
    if !misses {
        return Ok(BeamformerSolution {
            precoders,
            objective,
            kkt_residual: kkt,
            rate_feasible: true,
            converged,
            newton_steps: steps,
        });
    }

    let all: Vec<usize> = (0..m).collect();
    let prog = BeamformerProgram::new(reduced, weights, &aux.values, sigma_sq, p_tot, &all, gamma);
    let z0 = pack(&prog, reduced, warm, p_tot);
    let sol = run(&prog, z0, &settings)?;
    let mut precoders = PrecoderSet::zeros(n_bs, n_s, m);
    unpack(&prog, reduced, &sol.z, &mut precoders);
    Ok(BeamformerSolution {
        precoders,
        objective: sol.objective,
        kkt_residual: sol.kkt,
        rate_feasible: sol.feasible,
        converged: sol.converged,
        newton_steps: steps + sol.steps,
    })
}
