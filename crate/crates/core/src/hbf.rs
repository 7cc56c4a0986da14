//! Hybrid beamforming by alternating minimization: factor each fully-digital
//! precoder `P_t` into a unit-modulus analog matrix `F_t` and a digital
//! matrix `Q_t`, alternating a least-squares update of `Q` with Riemannian
//! descent of `F` on the product of unit circles, then scale `Q` so the
//! slot uses the full power budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{PrecoderSet, SystemConfig};
use crate::{CMatrix, Cx};

const ARMIJO_C: f64 = 1e-4;
const ARMIJO_SHRINK: f64 = 0.5;
const MAX_HALVINGS: usize = 50;
/// Relative residual below which further restarts cannot improve the fit.
const EXACT_FIT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct HybridPrecoder {
    /// `N_BS x N_RF`, unit-modulus entries.
    pub f: CMatrix,
    /// `N_RF x N_s`.
    pub q: CMatrix,
    /// `||P - F Q||_F / ||P||_F` before power normalization.
    pub residual: f64,
    /// Relative residual after each alternation.
    pub residual_trace: Vec<f64>,
    /// The least-squares step needed a ridge term.
    pub ridge_used: bool,
}

impl HybridPrecoder {
    pub fn effective(&self) -> CMatrix {
        &self.f * &self.q
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LsDigital {
    pub q: CMatrix,
    pub ridge_used: bool,
}

/// `Q = (F^H F)^{-1} F^H P`. A rank-deficient `F` gets a `1e-10` ridge
/// (relative to the Gram diagonal) and is flagged.
pub fn ls_digital(f: &CMatrix, p_target: &CMatrix) -> LsDigital {
    let gram = f.adjoint() * f;
    let rhs = f.adjoint() * p_target;
    let n = gram.nrows();
    let scale = (0..n).map(|i| gram[(i, i)].re).fold(0.0, f64::max).max(1.0);
    if let Some(ch) = gram.clone().cholesky() {
        let diag_min = (0..n).map(|i| ch.l_dirty()[(i, i)].re).fold(f64::INFINITY, f64::min);
        if diag_min * diag_min > 1e-12 * scale {
            return LsDigital { q: ch.solve(&rhs), ridge_used: false };
        }
    }
    let mut reg = gram;
    for i in 0..n {
        reg[(i, i)] += Cx::new(1e-10 * scale, 0.0);
    }
    let q = reg
        .cholesky()
        .map(|ch| ch.solve(&rhs))
        .unwrap_or_else(|| CMatrix::zeros(n, p_target.ncols()));
    LsDigital { q, ridge_used: true }
}

/// Descent rule of the analog update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Steepest descent with Armijo backtracking.
    #[default]
    Gradient,
    /// Polak-Ribiere conjugate directions with the same line search.
    ConjugateGradient,
}

#[derive(Debug, Clone)]
pub struct RiemannianOutcome {
    pub f: CMatrix,
    /// `||P - F Q||_F` at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub accepted_steps: usize,
}

fn project_tangent(x: &CMatrix, f: &CMatrix) -> CMatrix {
    x.zip_map(f, |xi, fi| xi - fi * (xi * fi.conj()).re)
}

fn retract(f: &CMatrix) -> CMatrix {
    f.map(|z| {
        let r = z.norm();
        if r > 0.0 {
            z / r
        } else {
            Cx::new(1.0, 0.0)
        }
    })
}

fn inner(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

fn spectral_norm_sq(q: &CMatrix) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    q.clone().singular_values().max().powi(2)
}

/// Minimizes `||P - F Q||_F` over unit-modulus `F` with `Q` fixed.
///
/// The Euclidean gradient `-(P - F Q) Q^H` is projected onto the tangent
/// space of the circle product, scaled by `1 / sigma_max(Q)^2`, and the step
/// is retracted by renormalizing every entry. Accepted steps never increase
/// the objective.
pub fn riemannian_analog(
    f_init: &CMatrix,
    q: &CMatrix,
    p_target: &CMatrix,
    max_iters: usize,
    rule: StepRule,
) -> RiemannianOutcome {
    let mut f = retract(f_init);
    let obj = |f: &CMatrix| (p_target - f * q).norm_squared();
    let mut value = obj(&f);
    let mut trace = vec![value.sqrt()];
    let lipschitz = spectral_norm_sq(q);
    if lipschitz == 0.0 {
        return RiemannianOutcome { f, objective_trace: trace, accepted_steps: 0 };
    }
    let tiny = 1e-30 * p_target.norm_squared().max(f64::MIN_POSITIVE);
    let mut prev: Option<(CMatrix, CMatrix)> = None;
    let mut accepted = 0;
    for _ in 0..max_iters {
        let egrad = -(p_target - &f * q) * q.adjoint();
        let rgrad = project_tangent(&egrad, &f);
        let gnorm = rgrad.norm_squared();
        if gnorm <= tiny {
            break;
        }
        let mut dir = &rgrad * Cx::new(1.0 / lipschitz, 0.0);
        if let (StepRule::ConjugateGradient, Some((g_old, d_old))) = (rule, &prev) {
            let g_old_t = project_tangent(g_old, &f);
            let beta = (inner(&rgrad, &(&rgrad - &g_old_t)) / g_old.norm_squared()).max(0.0);
            let cand = &dir + project_tangent(d_old, &f) * Cx::new(beta, 0.0);
            if inner(&egrad, &cand) > 0.0 {
                dir = cand;
            }
        }
        let slope = 2.0 * inner(&egrad, &dir);
        let mut step = 1.0;
        let mut next = None;
        for _ in 0..MAX_HALVINGS {
            let trial = retract(&(&f - &dir * Cx::new(step, 0.0)));
            let v = obj(&trial);
            if v <= value - ARMIJO_C * step * slope {
                next = Some((trial, v));
                break;
            }
            step *= ARMIJO_SHRINK;
        }
        let Some((f_new, v)) = next else {
            break;
        };
        prev = Some((rgrad, dir * Cx::new(step, 0.0)));
        f = f_new;
        value = v;
        trace.push(value.sqrt());
        accepted += 1;
    }
    RiemannianOutcome { f, objective_trace: trace, accepted_steps: accepted }
}

fn random_analog<R: Rng + ?Sized>(n_bs: usize, n_rf: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(n_bs, n_rf, |_, _| Cx::from_polar(1.0, rng.random::<f64>() * std::f64::consts::TAU))
}

struct Attempt {
    f: CMatrix,
    q: CMatrix,
    residual: f64,
    trace: Vec<f64>,
    ridge: bool,
}

fn alternate(p: &CMatrix, mut f: CMatrix, config: &SystemConfig) -> Attempt {
    let s = &config.solver;
    let rule = if s.hbf_conjugate_gradient {
        StepRule::ConjugateGradient
    } else {
        StepRule::Gradient
    };
    let ls = ls_digital(&f, p);
    let mut q = ls.q;
    let mut ridge = ls.ridge_used;
    let mut residual = (p - &f * &q).norm();
    let mut trace = vec![residual];
    for _ in 0..s.t5 {
        if residual < 1e-14 {
            break;
        }
        f = riemannian_analog(&f, &q, p, s.hbf_inner_iters, rule).f;
        let ls = ls_digital(&f, p);
        q = ls.q;
        ridge |= ls.ridge_used;
        let next = (p - &f * &q).norm();
        trace.push(next);
        let change = (residual - next).abs() / residual;
        residual = next;
        if change < s.hbf_rel_tol {
            break;
        }
    }
    Attempt { f, q, residual, trace, ridge }
}

/// Factors one slot's precoder. `config.n_rf` sets the RF-chain count and
/// `config.p_tot` the power the result is scaled to.
pub fn factorize<R: Rng + ?Sized>(p_target: &CMatrix, config: &SystemConfig, rng: &mut R) -> Result<HybridPrecoder> {
    let norm = p_target.norm();
    if !norm.is_finite() {
        return Err(Error::NonFiniteInput("precoder to factor".into()));
    }
    if norm == 0.0 {
        return Err(Error::InvalidSize("cannot factor an all-zero precoder".into()));
    }
    if config.n_rf == 0 {
        return Err(Error::InvalidSize("n_rf must be at least 1".into()));
    }
    // The alternation is scale-equivariant; work at unit norm.
    let p = p_target / Cx::new(norm, 0.0);
    let mut best: Option<Attempt> = None;
    for _ in 0..config.solver.hbf_restarts.max(1) {
        let mut sub = ChaCha8Rng::seed_from_u64(rng.random());
        let f0 = random_analog(p.nrows(), config.n_rf, &mut sub);
        let attempt = alternate(&p, f0, config);
        if best.as_ref().is_none_or(|b| attempt.residual < b.residual) {
            best = Some(attempt);
        }
        if best.as_ref().is_some_and(|b| b.residual <= EXACT_FIT) {
            break;
        }
    }
    let best = best.expect("at least one restart");
    let fq = (&best.f * &best.q).norm();
    let q = if fq > 0.0 {
        &best.q * Cx::new(config.p_tot.sqrt() / fq, 0.0)
    } else {
        best.q
    };
    Ok(HybridPrecoder {
        f: best.f,
        q,
        residual: best.residual,
        residual_trace: best.trace,
        ridge_used: best.ridge,
    })
}

/// Factors every slot. Seeds for the slots are drawn from `rng` up front, so
/// the outcome does not depend on evaluation order.
pub fn factorize_all<R: Rng + ?Sized>(
    precoders: &PrecoderSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Vec<Result<HybridPrecoder>> {
    let seeds: Vec<u64> = (0..precoders.n_slots()).map(|_| rng.random()).collect();
    precoders
        .slots
        .iter()
        .zip(seeds)
        .map(|(p, seed)| factorize(p, config, &mut ChaCha8Rng::seed_from_u64(seed)))
        .collect()
}
