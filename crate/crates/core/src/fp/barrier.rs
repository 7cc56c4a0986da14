//! Log-barrier interior-point method for smooth concave maximization with
//! smooth concave inequality constraints `c_i(z) > 0`.
//!
//! The barrier objective `f0 + tau * sum_i ln c_i` is maximized by damped
//! Newton steps; `tau` starts at 1 and shrinks geometrically until
//! `m * tau` drops below the gap target. Constraints flagged as soft may be
//! violated at the starting point, in which case a phase-I problem with a
//! shared slack variable first searches for a strictly feasible point.

use nalgebra::{DMatrix, DVector};

/// A concave program in the form the barrier solver consumes.
pub trait ConcaveProgram {
    fn dim(&self) -> usize;

    fn n_constraints(&self) -> usize;

    /// Constraints that may be violated at the starting point.
    fn soft_constraints(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Objective and constraint values, or `None` outside the objective's domain.
    fn values(&self, z: &DVector<f64>) -> Option<(f64, DVector<f64>)>;

    /// Weighted first and second derivatives plus the constraint Jacobian.
    fn derivatives(&self, z: &DVector<f64>, w0: f64, w: &DVector<f64>) -> Derivatives;
}

/// `grad = w0 grad f0 + sum_i w_i grad c_i`, `hess` likewise, and `jac`
/// holding one constraint gradient per row.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
    pub jac: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierSettings {
    pub tau0: f64,
    pub shrink: f64,
    /// Stop once `m * tau` falls below this.
    pub gap_tol: f64,
    pub max_newton_steps: usize,
    /// Centering ends when half the squared Newton decrement is below this.
    pub newton_tol: f64,
}

impl BarrierSettings {
    pub fn new(gap_tol: f64, max_newton_steps: usize) -> Self {
        Self {
            tau0: 1.0,
            shrink: 0.2,
            gap_tol,
            max_newton_steps,
            newton_tol: 1e-14,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BarrierOutcome {
    pub z: DVector<f64>,
    pub objective: f64,
    pub constraints: DVector<f64>,
    /// Max of the final Newton decrement and the duality-gap bound `m * tau`;
    /// both are in objective units and together bound the distance to the
    /// optimal value.
    pub kkt_residual: f64,
    pub newton_steps: usize,
    pub converged: bool,
    /// False when phase I could not make every soft constraint positive; `z`
    /// then maximizes the smallest soft-constraint value.
    pub feasible: bool,
}

/// Reason a starting point was rejected.
#[derive(Debug, Clone, PartialEq)]
pub enum StartError {
    OutsideDomain,
    HardConstraintViolated(usize),
}

/// Maximizes `prob` from `z0`, which must lie in the domain and strictly
/// satisfy every constraint not listed as soft.
pub fn maximize<P: ConcaveProgram>(
    prob: &P,
    z0: DVector<f64>,
    settings: &BarrierSettings,
) -> Result<BarrierOutcome, StartError> {
    let (_, c0) = prob.values(&z0).ok_or(StartError::OutsideDomain)?;
    let soft = prob.soft_constraints();
    if let Some(i) = (0..c0.len()).find(|i| !soft.contains(i) && c0[*i] <= 0.0) {
        return Err(StartError::HardConstraintViolated(i));
    }

    let mut steps = 0;
    let mut z = z0;
    if soft.iter().any(|&i| c0[i] <= 0.0) {
        let phase1 = PhaseOne { inner: prob, soft: &soft };
        let s0 = soft.iter().map(|&i| c0[i]).fold(f64::INFINITY, f64::min) - 1.0;
        let mut y = z.clone().insert_row(z.len(), s0);
        let done = |y: &DVector<f64>| {
            let zz = y.rows(0, y.len() - 1).into_owned();
            prob.values(&zz)
                .is_some_and(|(_, c)| soft.iter().all(|&i| c[i] > 0.0))
        };
        let out = run_barrier(&phase1, &mut y, settings, &done);
        steps += out.steps;
        z = y.rows(0, y.len() - 1).into_owned();
        if !out.early_exit {
            let (objective, constraints) = prob.values(&z).expect("phase I stays in domain");
            return Ok(BarrierOutcome {
                z,
                objective,
                constraints,
                kkt_residual: out.residual,
                newton_steps: steps,
                converged: out.converged,
                feasible: false,
            });
        }
    }

    let out = run_barrier(prob, &mut z, settings, &|_| false);
    steps += out.steps;
    let (objective, constraints) = prob.values(&z).expect("barrier iterate stays in domain");
    Ok(BarrierOutcome {
        z,
        objective,
        constraints,
        kkt_residual: out.residual,
        newton_steps: steps,
        converged: out.converged && steps <= settings.max_newton_steps,
        feasible: true,
    })
}

struct RunStats {
    steps: usize,
    residual: f64,
    converged: bool,
    early_exit: bool,
}

fn run_barrier<P: ConcaveProgram>(
    prob: &P,
    z: &mut DVector<f64>,
    settings: &BarrierSettings,
    stop_early: &dyn Fn(&DVector<f64>) -> bool,
) -> RunStats {
    let m = prob.n_constraints() as f64;
    let mut tau = settings.tau0;
    let mut steps = 0;
    loop {
        let c = center(prob, z, tau, settings, settings.max_newton_steps.saturating_sub(steps), stop_early);
        steps += c.steps;
        let residual = c.decrement_norm.max(m * tau);
        if c.early_exit {
            return RunStats { steps, residual, converged: true, early_exit: true };
        }
        if c.budget_exhausted {
            return RunStats { steps, residual, converged: false, early_exit: false };
        }
        if m * tau <= settings.gap_tol {
            return RunStats { steps, residual, converged: true, early_exit: false };
        }
        tau *= settings.shrink;
    }
}

struct CenterStats {
    steps: usize,
    decrement_norm: f64,
    budget_exhausted: bool,
    early_exit: bool,
}

fn barrier_value<P: ConcaveProgram>(prob: &P, z: &DVector<f64>, tau: f64) -> Option<f64> {
    let (f0, c) = prob.values(z)?;
    if !f0.is_finite() || c.iter().any(|&ci| !(ci > 0.0)) {
        return None;
    }
    Some(f0 + tau * c.iter().map(|ci| ci.ln()).sum::<f64>())
}

fn center<P: ConcaveProgram>(
    prob: &P,
    z: &mut DVector<f64>,
    tau: f64,
    settings: &BarrierSettings,
    budget: usize,
    stop_early: &dyn Fn(&DVector<f64>) -> bool,
) -> CenterStats {
    let mut steps = 0;
    let mut decrement_norm = f64::INFINITY;
    let mut value = barrier_value(prob, z, tau).expect("centering starts strictly feasible");
    loop {
        let (_, c) = prob.values(z).expect("iterate in domain");
        let w = c.map(|ci| tau / ci);
        let d = prob.derivatives(z, 1.0, &w);
        let mut neg_hess = -d.hess;
        // barrier curvature: tau * grad c grad c^T / c^2
        let scaled = DMatrix::from_fn(d.jac.nrows(), d.jac.ncols(), |i, j| d.jac[(i, j)] * tau.sqrt() / c[i]);
        neg_hess += scaled.transpose() * &scaled;
        let grad = d.grad;

        let Some(dir) = newton_direction(neg_hess, &grad) else {
            return CenterStats { steps, decrement_norm, budget_exhausted: false, early_exit: false };
        };
        let decrement = grad.dot(&dir).max(0.0);
        decrement_norm = decrement.sqrt();
        if decrement / 2.0 <= settings.newton_tol {
            return CenterStats { steps, decrement_norm, budget_exhausted: false, early_exit: false };
        }
        if steps >= budget {
            return CenterStats { steps, decrement_norm, budget_exhausted: true, early_exit: false };
        }

        let mut t = 1.0;
        let accepted = loop {
            let trial = &*z + t * &dir;
            if let Some(v) = barrier_value(prob, &trial, tau) {
                // near the optimum the predicted gain drops below the
                // resolution of `value`; a full step is then accepted unless
                // it loses more than rounding
                let noise = 8.0 * f64::EPSILON * value.abs().max(1.0);
                if v >= value + 0.25 * t * decrement || (t == 1.0 && decrement < noise && v >= value - noise) {
                    *z = trial;
                    value = v;
                    break true;
                }
            }
            t *= 0.5;
            if t < 1e-14 {
                break false;
            }
        };
        steps += 1;
        if !accepted {
            // no further progress is representable at this tau
            return CenterStats { steps, decrement_norm, budget_exhausted: false, early_exit: false };
        }
        if stop_early(z) {
            return CenterStats { steps, decrement_norm, budget_exhausted: false, early_exit: true };
        }
    }
}

/// Solves `A d = g` for symmetric positive definite `A`, regularizing if the
/// Cholesky factorization fails.
fn newton_direction(a: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    if a.nrows() == 0 {
        return None;
    }
    if let Some(ch) = a.clone().cholesky() {
        return Some(ch.solve(g));
    }
    let scale = a.diagonal().amax().max(1e-300);
    let mut delta = 1e-12 * scale;
    for _ in 0..12 {
        let mut reg = a.clone();
        for i in 0..reg.nrows() {
            reg[(i, i)] += delta;
        }
        if let Some(ch) = reg.cholesky() {
            return Some(ch.solve(g));
        }
        delta *= 10.0;
    }
    None
}

/// Phase-I problem over `(z, s)`: maximize `s` subject to `c_i(z) - s > 0` for
/// soft constraints and `c_i(z) > 0` for the rest.
struct PhaseOne<'a, P> {
    inner: &'a P,
    soft: &'a [usize],
}

impl<P: ConcaveProgram> ConcaveProgram for PhaseOne<'_, P> {
    fn dim(&self) -> usize {
        self.inner.dim() + 1
    }

    fn n_constraints(&self) -> usize {
        self.inner.n_constraints()
    }

    fn values(&self, y: &DVector<f64>) -> Option<(f64, DVector<f64>)> {
        let n = self.inner.dim();
        let s = y[n];
        let (_, mut c) = self.inner.values(&y.rows(0, n).into_owned())?;
        for &i in self.soft {
            c[i] -= s;
        }
        Some((s, c))
    }

    fn derivatives(&self, y: &DVector<f64>, w0: f64, w: &DVector<f64>) -> Derivatives {
        let n = self.inner.dim();
        let d = self.inner.derivatives(&y.rows(0, n).into_owned(), 0.0, w);
        let mut grad = d.grad.insert_row(n, w0);
        let mut jac = d.jac.insert_column(n, 0.0);
        for &i in self.soft {
            grad[n] -= w[i];
            jac[(i, n)] = -1.0;
        }
        let hess = d.hess.insert_row(n, 0.0).insert_column(n, 0.0);
        Derivatives { grad, hess, jac }
    }
}
