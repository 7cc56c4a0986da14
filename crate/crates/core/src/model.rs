//! System parameters, the per-beam rate evaluator and the constraint checker.
//!
//! Rates are in bit/s/Hz. The link is represented only through the SINR of
//! each (beam position, slot) pair; transmitted symbols are never simulated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::hbf::HybridPrecoder;
use crate::pattern::IlluminationPattern;
use crate::CMatrix;

/// Relative slack used by every numeric feasibility comparison.
pub const FEASIBILITY_SLACK: f64 = 1e-9;

/// How the outer IPAO alternation decides to stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OuterStop {
    /// Stop once the relaxed objective stops increasing (relative change below
    /// `outer_rel_tol`) or after `t4` iterations.
    #[default]
    Plateau,
    /// Always run exactly `t4` outer iterations.
    FixedIterations,
}

/// Iteration caps and tolerances for every loop in the design pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// FP iterations per IPRS candidate.
    pub t1: usize,
    /// FP iterations of the IPAO beamformer loop.
    pub t2: usize,
    /// FP iterations of the IPAO pattern loop.
    pub t3: usize,
    /// IPAO outer iterations.
    pub t4: usize,
    /// HBF alternations.
    pub t5: usize,
    /// Duality-gap target of the beamformer barrier solver.
    pub eps1: f64,
    /// Duality-gap target of the pattern barrier solver.
    pub eps2: f64,
    /// Relative objective change that ends an FP loop early.
    pub fp_rel_tol: f64,
    /// Relative objective change that ends the IPAO outer loop.
    pub outer_rel_tol: f64,
    pub outer_stop: OuterStop,
    /// Relative residual change that ends the HBF alternation.
    pub hbf_rel_tol: f64,
    /// Riemannian descent steps per HBF alternation.
    pub hbf_inner_iters: usize,
    /// Random restarts of the HBF factorization (lowest residual wins).
    pub hbf_restarts: usize,
    /// Use Riemannian conjugate gradient instead of steepest descent.
    pub hbf_conjugate_gradient: bool,
    /// Lower clamp on relaxed pattern entries inside the pattern solver.
    pub barrier_floor: f64,
    /// Newton-step budget of a single barrier solve.
    pub max_newton_iters: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            t1: 20,
            t2: 20,
            t3: 20,
            t4: 15,
            t5: 50,
            eps1: 1e-6,
            eps2: 1e-6,
            fp_rel_tol: 1e-4,
            outer_rel_tol: 1e-4,
            outer_stop: OuterStop::Plateau,
            hbf_rel_tol: 1e-4,
            hbf_inner_iters: 25,
            hbf_restarts: 3,
            hbf_conjugate_gradient: false,
            barrier_floor: 1e-8,
            max_newton_iters: 2000,
        }
    }
}

/// Scalar system parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Satellite antennas.
    pub n_bs: usize,
    /// Beam positions.
    pub n_s: usize,
    /// RF chains.
    pub n_rf: usize,
    /// Simultaneous beams per slot.
    pub k_beams: usize,
    /// Slots per beam-hopping period.
    pub m_slots: usize,
    /// Per-slot transmit power budget in watts.
    pub p_tot: f64,
    /// Per-beam rate thresholds over one period, bit/s/Hz.
    pub gamma: Vec<f64>,
    /// Noise power after link-budget normalization.
    pub sigma_sq: f64,
    pub solver: SolverSettings,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Configuration with the default power (100 W), unit noise, zero thresholds
    /// and `n_rf = n_s` (clamped to `n_bs`).
    pub fn new(n_bs: usize, n_s: usize, k_beams: usize, m_slots: usize) -> Self {
        Self {
            n_bs,
            n_s,
            n_rf: n_s.min(n_bs).max(k_beams),
            k_beams,
            m_slots,
            p_tot: 100.0,
            gamma: vec![0.0; n_s],
            sigma_sq: 1.0,
            solver: SolverSettings::default(),
            rng_seed: 0,
        }
    }

    pub fn with_p_tot(mut self, p_tot: f64) -> Self {
        self.p_tot = p_tot;
        self
    }

    /// Broadcasts a single threshold to every beam position.
    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = vec![gamma; self.n_s];
        self
    }

    pub fn with_n_rf(mut self, n_rf: usize) -> Self {
        self.n_rf = n_rf;
        self
    }

    /// Every violated invariant, empty when the configuration is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("n_bs", self.n_bs),
            ("n_s", self.n_s),
            ("n_rf", self.n_rf),
            ("k_beams", self.k_beams),
            ("m_slots", self.m_slots),
        ] {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        }
        if self.k_beams * self.m_slots < self.n_s {
            out.push(format!(
                "k_beams*m_slots = {} < n_s = {}: every beam position must be illuminated at least once per period",
                self.k_beams * self.m_slots,
                self.n_s
            ));
        }
        if self.k_beams > self.n_rf {
            out.push(format!("k_beams = {} exceeds n_rf = {}", self.k_beams, self.n_rf));
        }
        if self.n_rf > self.n_bs {
            out.push(format!("n_rf = {} exceeds n_bs = {}", self.n_rf, self.n_bs));
        }
        if !(self.p_tot.is_finite() && self.p_tot > 0.0) {
            out.push(format!("p_tot must be positive and finite, got {}", self.p_tot));
        }
        if !(self.sigma_sq.is_finite() && self.sigma_sq > 0.0) {
            out.push(format!("sigma_sq must be positive and finite, got {}", self.sigma_sq));
        }
        if self.gamma.len() != self.n_s {
            out.push(format!(
                "gamma has {} entries, expected n_s = {}",
                self.gamma.len(),
                self.n_s
            ));
        }
        if self.gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
            out.push("gamma entries must be finite and nonnegative".to_string());
        }
        let s = &self.solver;
        if !(s.eps1 > 0.0 && s.eps2 > 0.0) {
            out.push("solver eps1/eps2 must be positive".to_string());
        }
        if !(s.barrier_floor > 0.0 && s.barrier_floor < 1e-3) {
            out.push("solver barrier_floor must lie in (0, 1e-3)".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidConfig(v))
        }
    }
}

/// Fully-digital precoders, one `N_BS x N_s` matrix per slot. Column `n` of
/// slot `t` is the precoder of beam position `n` in that slot.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecoderSet {
    pub slots: Vec<CMatrix>,
}

impl PrecoderSet {
    pub fn new(slots: Vec<CMatrix>) -> Self {
        Self { slots }
    }

    pub fn zeros(n_bs: usize, n_s: usize, m: usize) -> Self {
        Self {
            slots: vec![CMatrix::zeros(n_bs, n_s); m],
        }
    }

    pub fn n_slots(&self) -> usize {
        self.slots.len()
    }

    /// Transmit power of slot `t`, i.e. the squared Frobenius norm of `P_t`.
    pub fn slot_power(&self, t: usize) -> f64 {
        self.slots[t].norm_squared()
    }

    pub fn max_slot_power(&self) -> f64 {
        (0..self.n_slots())
            .map(|t| self.slot_power(t))
            .fold(0.0, f64::max)
    }

    /// Outer product `p_k^t (p_k^t)^H`, built on demand.
    pub fn outer_product(&self, t: usize, k: usize) -> CMatrix {
        let p = self.slots[t].column(k);
        &p * p.adjoint()
    }
}

/// Per-beam, per-slot rates and their aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    /// `N_s x M` matrix of rates in bit/s/Hz.
    pub rates: DMatrix<f64>,
    pub per_beam_sum: DVector<f64>,
    pub total: f64,
    pub gamma: Vec<f64>,
    pub gamma_satisfied: Vec<bool>,
}

impl RateReport {
    pub fn from_rates(rates: DMatrix<f64>) -> Self {
        let n_s = rates.nrows();
        let per_beam_sum = DVector::from_iterator(n_s, rates.row_iter().map(|r| r.sum()));
        let total = rates.iter().sum();
        let gamma = vec![0.0; n_s];
        let gamma_satisfied = per_beam_sum.iter().map(|s| *s >= 0.0).collect();
        Self {
            rates,
            per_beam_sum,
            total,
            gamma,
            gamma_satisfied,
        }
    }

    /// Re-evaluates `gamma_satisfied` against the given thresholds.
    pub fn with_thresholds(mut self, gamma: &[f64]) -> Self {
        self.gamma = gamma.to_vec();
        self.gamma_satisfied = self
            .per_beam_sum
            .iter()
            .zip(gamma)
            .map(|(s, g)| s >= g)
            .collect();
        self
    }

    pub fn all_thresholds_met(&self) -> bool {
        self.gamma_satisfied.iter().all(|b| *b)
    }

    /// Smallest per-beam period rate.
    pub fn min_per_beam(&self) -> f64 {
        self.per_beam_sum.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Evaluates `R_{n,t} = log2(1 + x_{n,t}|h_n p_n^t|^2 / (sum_{k!=n} x_{k,t}|h_n p_k^t|^2 + sigma^2))`.
///
/// `weights` may be a binary pattern or a relaxed one with entries in `[0, 1]`.
/// For a hybrid design pass the products `F_t Q_t` as `precoders`.
pub fn rate_matrix(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    weights: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<RateReport> {
    let h = &channel.h;
    let (n_s, n_bs) = h.shape();
    let m = precoders.len();
    if weights.shape() != (n_s, m) {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{}, expected {}x{}",
            weights.nrows(),
            weights.ncols(),
            n_s,
            m
        )));
    }
    for (t, p) in precoders.iter().enumerate() {
        if p.shape() != (n_bs, n_s) {
            return Err(Error::DimensionMismatch(format!(
                "precoder of slot {t} is {}x{}, expected {}x{}",
                p.nrows(),
                p.ncols(),
                n_bs,
                n_s
            )));
        }
        if p.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFiniteInput(format!("precoder of slot {t}")));
        }
    }
    if weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteInput("pattern weights".into()));
    }
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFiniteInput("channel".into()));
    }
    if !(sigma_sq.is_finite() && sigma_sq > 0.0) {
        return Err(Error::NonFiniteInput(format!("sigma_sq = {sigma_sq}")));
    }

    let mut rates = DMatrix::zeros(n_s, m);
    for (t, p) in precoders.iter().enumerate() {
        // gains[(n, k)] = |h_n p_k^t|^2
        let gains = (h * p).map(|z| z.norm_sqr());
        for n in 0..n_s {
            let x_n = weights[(n, t)];
            if x_n == 0.0 {
                continue;
            }
            let interference: f64 = (0..n_s)
                .filter(|&k| k != n)
                .map(|k| weights[(k, t)] * gains[(n, k)])
                .sum();
            let sinr = x_n * gains[(n, n)] / (interference + sigma_sq);
            rates[(n, t)] = sinr.ln_1p() / std::f64::consts::LN_2;
        }
    }
    Ok(RateReport::from_rates(rates))
}

/// The transmit design whose constraints are checked.
#[derive(Debug, Clone, Copy)]
pub enum Beamforming<'a> {
    Digital(&'a PrecoderSet),
    Hybrid(&'a [HybridPrecoder]),
}

/// One violated constraint family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// Period rate of a beam position is below its threshold.
    RateThreshold { beam: usize, achieved: f64, required: f64 },
    /// Slot transmit power exceeds the budget.
    SlotPower { slot: usize, power: f64, limit: f64 },
    /// Analog beamformer entry off the unit circle.
    UnitModulus { slot: usize, max_deviation: f64 },
    /// More than `K` beams lit in a slot.
    BeamCount { slot: usize, count: f64, limit: usize },
    /// Pattern entry that is neither 0 nor 1.
    NonBinary { beam: usize, slot: usize, value: f64 },
    /// Design shape does not match the pattern/config.
    Shape { detail: String },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeasibilityVerdict {
    pub violations: Vec<Violation>,
}

impl FeasibilityVerdict {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn power_violations(&self) -> Vec<usize> {
        self.violations
            .iter()
            .filter_map(|v| match v {
                Violation::SlotPower { slot, .. } => Some(*slot),
                _ => None,
            })
            .collect()
    }
}

/// Checks the constraint families of the joint problem against a binary pattern.
pub fn check_feasibility(
    report: &RateReport,
    pattern: &IlluminationPattern,
    design: Beamforming<'_>,
    config: &SystemConfig,
) -> FeasibilityVerdict {
    check_feasibility_weights(report, &pattern.weights(), design, config)
}

/// Same as [`check_feasibility`] for an arbitrary weight matrix; entries that
/// are not exactly 0 or 1 are reported as [`Violation::NonBinary`].
pub fn check_feasibility_weights(
    report: &RateReport,
    weights: &DMatrix<f64>,
    design: Beamforming<'_>,
    config: &SystemConfig,
) -> FeasibilityVerdict {
    let mut violations = Vec::new();
    let tol = FEASIBILITY_SLACK;

    for (n, (&achieved, &required)) in report
        .per_beam_sum
        .iter()
        .zip(config.gamma.iter())
        .enumerate()
    {
        if achieved < required * (1.0 - tol) {
            violations.push(Violation::RateThreshold {
                beam: n,
                achieved,
                required,
            });
        }
    }

    let limit = config.p_tot;
    match design {
        Beamforming::Digital(p) => {
            for t in 0..p.n_slots() {
                let power = p.slot_power(t);
                if power > limit * (1.0 + tol) {
                    violations.push(Violation::SlotPower { slot: t, power, limit });
                }
            }
        }
        Beamforming::Hybrid(slots) => {
            for (t, hp) in slots.iter().enumerate() {
                let power = (&hp.f * &hp.q).norm_squared();
                if power > limit * (1.0 + tol) {
                    violations.push(Violation::SlotPower { slot: t, power, limit });
                }
                let max_deviation = hp
                    .f
                    .iter()
                    .map(|z| (z.norm() - 1.0).abs())
                    .fold(0.0, f64::max);
                if max_deviation > tol {
                    violations.push(Violation::UnitModulus {
                        slot: t,
                        max_deviation,
                    });
                }
            }
        }
    }

    for t in 0..weights.ncols() {
        let count: f64 = weights.column(t).sum();
        if count > config.k_beams as f64 * (1.0 + tol) {
            violations.push(Violation::BeamCount {
                slot: t,
                count,
                limit: config.k_beams,
            });
        }
        for n in 0..weights.nrows() {
            let value = weights[(n, t)];
            if value != 0.0 && value != 1.0 {
                violations.push(Violation::NonBinary { beam: n, slot: t, value });
            }
        }
    }

    let slots = match design {
        Beamforming::Digital(p) => p.n_slots(),
        Beamforming::Hybrid(s) => s.len(),
    };
    if slots != weights.ncols() {
        violations.push(Violation::Shape {
            detail: format!("{} designed slots vs {} pattern slots", slots, weights.ncols()),
        });
    }

    FeasibilityVerdict { violations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cx;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmatrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| Cx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    // Scalar re-implementation of the rate formula, written without matrix
    // products.
    fn scalar_rate(h: &CMatrix, p: &CMatrix, x: &[f64], n: usize, sigma_sq: f64) -> f64 {
        let inner = |row: usize, col: usize| {
            let mut acc = Cx::new(0.0, 0.0);
            for i in 0..h.ncols() {
                acc += h[(row, i)] * p[(i, col)];
            }
            acc.re * acc.re + acc.im * acc.im
        };
        let mut interf = 0.0;
        for k in 0..x.len() {
            if k != n {
                interf += x[k] * inner(n, k);
            }
        }
        (1.0 + x[n] * inner(n, n) / (interf + sigma_sq)).log2()
    }

    #[test]
    fn dark_entries_have_zero_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = ChannelSet::new(random_cmatrix(&mut rng, 3, 4));
        let p = vec![random_cmatrix(&mut rng, 4, 3); 2];
        let w = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 0.0]);
        let r = rate_matrix(&ch, &p, &w, 1.0).unwrap();
        for n in 0..3 {
            for t in 0..2 {
                if w[(n, t)] == 0.0 {
                    assert_eq!(r.rates[(n, t)], 0.0);
                }
            }
        }
    }

    #[test]
    fn single_beam_matched_filter_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let h = random_cmatrix(&mut rng, 2, 4);
        let ch = ChannelSet::new(h.clone());
        let p_tot: f64 = 7.0;
        let hn = h.row(0).adjoint();
        let norm = hn.norm();
        let mut p = CMatrix::zeros(4, 2);
        p.set_column(0, &(hn * Cx::from(p_tot.sqrt() / norm)));
        let w = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let r = rate_matrix(&ch, &[p], &w, 1.0).unwrap();
        let expected = (1.0 + p_tot * norm * norm).log2();
        assert!((r.rates[(0, 0)] - expected).abs() < 1e-12 * expected.max(1.0));
    }

    #[test]
    fn two_beam_instance_matches_scalar_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let h = random_cmatrix(&mut rng, 2, 4);
        let p = random_cmatrix(&mut rng, 4, 2);
        let ch = ChannelSet::new(h.clone());
        let w = DMatrix::from_element(2, 1, 1.0);
        let r = rate_matrix(&ch, &[p.clone()], &w, 1.0).unwrap();
        for n in 0..2 {
            let oracle = scalar_rate(&h, &p, &[1.0, 1.0], n, 1.0);
            assert!((r.rates[(n, 0)] - oracle).abs() < 1e-13, "{n}");
        }
        assert!((r.total - r.rates.iter().sum::<f64>()).abs() <= 1e-12 * r.total.abs());
    }

    #[test]
    fn rejects_mismatched_shapes_and_nan() {
        let ch = ChannelSet::new(CMatrix::from_element(2, 3, Cx::new(1.0, 0.0)));
        let p = vec![CMatrix::zeros(3, 2)];
        let bad_w = DMatrix::zeros(3, 1);
        assert!(matches!(
            rate_matrix(&ch, &p, &bad_w, 1.0),
            Err(Error::DimensionMismatch(_))
        ));
        let mut p_nan = CMatrix::zeros(3, 2);
        p_nan[(0, 0)] = Cx::new(f64::NAN, 0.0);
        assert!(matches!(
            rate_matrix(&ch, &[p_nan], &DMatrix::zeros(2, 1), 1.0),
            Err(Error::NonFiniteInput(_))
        ));
    }

    #[test]
    fn zero_precoders_zero_gamma_feasible() {
        let config = SystemConfig::new(4, 4, 2, 2);
        let ch = ChannelSet::new(CMatrix::from_element(4, 4, Cx::new(0.3, 0.1)));
        let pattern = IlluminationPattern::from_rows(&[
            vec![1, 0],
            vec![1, 0],
            vec![0, 1],
            vec![0, 1],
        ])
        .unwrap();
        let p = PrecoderSet::zeros(4, 4, 2);
        let r = rate_matrix(&ch, &p.slots, &pattern.weights(), 1.0).unwrap();
        let v = check_feasibility(&r, &pattern, Beamforming::Digital(&p), &config);
        assert!(v.is_feasible(), "{v:?}");
    }

    #[test]
    fn overpowered_slot_is_reported_alone() {
        let config = SystemConfig::new(4, 4, 2, 2);
        let ch = ChannelSet::new(CMatrix::from_element(4, 4, Cx::new(0.3, 0.1)));
        let pattern =
            IlluminationPattern::from_rows(&[vec![1, 0], vec![1, 0], vec![0, 1], vec![0, 1]]).unwrap();
        let mut p = PrecoderSet::zeros(4, 4, 2);
        p.slots[0][(0, 0)] = Cx::new((1.01 * config.p_tot).sqrt(), 0.0);
        p.slots[1][(1, 2)] = Cx::new(config.p_tot.sqrt(), 0.0);
        let r = rate_matrix(&ch, &p.slots, &pattern.weights(), 1.0).unwrap();
        let v = check_feasibility(&r, &pattern, Beamforming::Digital(&p), &config);
        assert_eq!(v.power_violations(), vec![0]);
        assert_eq!(v.violations.len(), 1);
    }

    #[test]
    fn config_validation_lists_every_violation() {
        let mut c = SystemConfig::new(4, 7, 2, 3).with_n_rf(6);
        c.p_tot = -1.0;
        let v = c.violations();
        assert!(v.iter().any(|s| s.contains("k_beams*m_slots")));
        assert!(v.iter().any(|s| s.contains("p_tot")));
        assert!(v.iter().any(|s| s.contains("n_rf")));
    }

    use proptest::prelude::*;

    fn instance(seed: u64) -> (ChannelSet, CMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = random_cmatrix(&mut rng, 3, 4);
        let p = random_cmatrix(&mut rng, 4, 3);
        let w = DMatrix::from_fn(3, 1, |_, _| if rng.random::<bool>() { 1.0 } else { rng.random() });
        (ChannelSet::new(h), p, w)
    }

    proptest! {
        #[test]
        fn own_power_scaling_never_hurts(seed in 0u64..1000, c in 1.0f64..10.0, n in 0usize..3) {
            let (ch, p, w) = instance(seed);
            let base = rate_matrix(&ch, &[p.clone()], &w, 1.0).unwrap();
            let mut q = p.clone();
            q.column_mut(n).scale_mut(c);
            let scaled = rate_matrix(&ch, &[q], &w, 1.0).unwrap();
            prop_assert!(scaled.rates[(n, 0)] >= base.rates[(n, 0)] - 1e-15);
        }

        #[test]
        fn interferer_scaling_never_helps(seed in 0u64..1000, c in 1.0f64..10.0, n in 0usize..3, k in 0usize..3) {
            prop_assume!(n != k);
            let (ch, p, w) = instance(seed);
            let base = rate_matrix(&ch, &[p.clone()], &w, 1.0).unwrap();
            let mut q = p.clone();
            q.column_mut(k).scale_mut(c);
            let scaled = rate_matrix(&ch, &[q], &w, 1.0).unwrap();
            prop_assert!(scaled.rates[(n, 0)] <= base.rates[(n, 0)] + 1e-15);
        }

        #[test]
        fn slot_permutation_permutes_columns(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = ChannelSet::new(random_cmatrix(&mut rng, 3, 4));
            let ps: Vec<CMatrix> = (0..3).map(|_| random_cmatrix(&mut rng, 4, 3)).collect();
            let w = DMatrix::from_fn(3, 3, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 });
            let perm = [2usize, 0, 1];
            let ps_perm: Vec<CMatrix> = perm.iter().map(|&t| ps[t].clone()).collect();
            let w_perm = DMatrix::from_fn(3, 3, |n, t| w[(n, perm[t])]);
            let a = rate_matrix(&ch, &ps, &w, 1.0).unwrap();
            let b = rate_matrix(&ch, &ps_perm, &w_perm, 1.0).unwrap();
            for t in 0..3 {
                for n in 0..3 {
                    prop_assert_eq!(a.rates[(n, perm[t])], b.rates[(n, t)]);
                }
            }
        }

        #[test]
        fn binary_pattern_and_its_weights_agree_bitwise(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let ch = ChannelSet::new(random_cmatrix(&mut rng, 4, 4));
            let ps: Vec<CMatrix> = (0..2).map(|_| random_cmatrix(&mut rng, 4, 4)).collect();
            let rows: Vec<Vec<u8>> = (0..4).map(|_| (0..2).map(|_| rng.random_range(0..2u8)).collect()).collect();
            let pat = IlluminationPattern::from_rows(&rows).unwrap();
            let manual = DMatrix::from_fn(4, 2, |n, t| rows[n][t] as f64);
            let a = rate_matrix(&ch, &ps, &pat.weights(), 1.0).unwrap();
            let b = rate_matrix(&ch, &ps, &manual, 1.0).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}
