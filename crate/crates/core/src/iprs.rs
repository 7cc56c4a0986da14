//! Illumination-pattern random search: draw candidate patterns, design the
//! fully-digital beamformers for each by fractional programming, keep the
//! candidate with the largest sum-rate among those meeting the thresholds.

use std::collections::HashSet;

use rand::Rng;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::fp::beamformer::ReducedChannel;
use crate::fp::fdbf::{matched_filter_init, run_fdbf_reduced};
use crate::fp::AuxRole;
use crate::model::{PrecoderSet, RateReport, SystemConfig};
use crate::pattern::{random_pattern, random_pattern_with_remainder, IlluminationPattern};

#[derive(Debug, Clone)]
pub struct CandidateOutcome {
    pub pattern: IlluminationPattern,
    pub precoders: PrecoderSet,
    pub report: RateReport,
    pub feasible: bool,
}

#[derive(Debug, Clone)]
pub struct IprsResult {
    pub best_pattern: IlluminationPattern,
    pub best_precoders: PrecoderSet,
    pub best_report: RateReport,
    /// Sum-rate of every evaluated candidate in evaluation order; NaN where
    /// the solve failed.
    pub per_candidate_totals: Vec<f64>,
    /// Candidates drawn before removing duplicates.
    pub candidates_drawn: usize,
    pub candidates_evaluated: usize,
    pub candidates_infeasible: usize,
    /// False when no candidate met every threshold; the best-total candidate
    /// is returned anyway.
    pub feasible: bool,
}

/// Order-preserving removal of repeated patterns.
pub fn dedupe_candidates(candidates: Vec<IlluminationPattern>) -> Vec<IlluminationPattern> {
    let mut seen = HashSet::new();
    candidates.into_iter().filter(|p| seen.insert(p.clone())).collect()
}

/// Draws `i_candidates` patterns from `rng`. When `K M > N_s` the last
/// populated slot carries the remainder.
pub fn draw_candidates<R: Rng + ?Sized>(
    config: &SystemConfig,
    i_candidates: usize,
    rng: &mut R,
) -> Result<Vec<IlluminationPattern>> {
    let (n_s, k, m) = (config.n_s, config.k_beams, config.m_slots);
    (0..i_candidates)
        .map(|_| {
            if k * m == n_s {
                random_pattern(n_s, k, m, rng)
            } else {
                random_pattern_with_remainder(n_s, k, m, rng)
            }
        })
        .collect()
}

/// Designs beamformers for one pattern from the matched-filter start.
pub fn solve_candidate(channel: &ChannelSet, config: &SystemConfig, pattern: &IlluminationPattern) -> Result<CandidateOutcome> {
    solve_candidate_reduced(channel, &ReducedChannel::new(channel), config, pattern)
}

fn solve_candidate_reduced(
    channel: &ChannelSet,
    reduced: &ReducedChannel,
    config: &SystemConfig,
    pattern: &IlluminationPattern,
) -> Result<CandidateOutcome> {
    let weights = pattern.weights();
    let init = matched_filter_init(channel, &weights, config.p_tot);
    let out = run_fdbf_reduced(channel, reduced, &weights, config, &init, config.solver.t1, AuxRole::Mu)?;
    let feasible = out.report.all_thresholds_met();
    Ok(CandidateOutcome {
        pattern: pattern.clone(),
        precoders: out.precoders,
        report: out.report,
        feasible,
    })
}

/// Full search with `i_candidates` random draws, deduplicated.
pub fn run_iprs<R: Rng + ?Sized>(
    channel: &ChannelSet,
    config: &SystemConfig,
    i_candidates: usize,
    rng: &mut R,
) -> Result<IprsResult> {
    config.validate()?;
    let drawn = draw_candidates(config, i_candidates, rng)?;
    let mut result = run_iprs_with_candidates(channel, config, &dedupe_candidates(drawn))?;
    result.candidates_drawn = i_candidates;
    Ok(result)
}

/// Evaluates the given candidates in order. Ties go to the earliest candidate.
pub fn run_iprs_with_candidates(
    channel: &ChannelSet,
    config: &SystemConfig,
    candidates: &[IlluminationPattern],
) -> Result<IprsResult> {
    if candidates.is_empty() {
        return Err(Error::NoCandidates);
    }
    let reduced = ReducedChannel::new(channel);
    let mut totals = Vec::with_capacity(candidates.len());
    let mut infeasible = 0;
    let mut best_feasible: Option<CandidateOutcome> = None;
    let mut best_any: Option<CandidateOutcome> = None;
    let mut last_err = None;
    for pattern in candidates {
        match solve_candidate_reduced(channel, &reduced, config, pattern) {
            Ok(out) => {
                totals.push(out.report.total);
                if !out.feasible {
                    infeasible += 1;
                }
                if out.feasible && best_feasible.as_ref().is_none_or(|b| out.report.total > b.report.total) {
                    best_feasible = Some(out.clone());
                }
                if best_any.as_ref().is_none_or(|b| out.report.total > b.report.total) {
                    best_any = Some(out);
                }
            }
            Err(e) => {
                totals.push(f64::NAN);
                infeasible += 1;
                last_err = Some(e);
            }
        }
    }
    let feasible = best_feasible.is_some();
    let Some(best) = best_feasible.or(best_any) else {
        return Err(last_err.unwrap_or(Error::NoCandidates));
    };
    Ok(IprsResult {
        best_pattern: best.pattern,
        best_precoders: best.precoders,
        best_report: best.report,
        per_candidate_totals: totals,
        candidates_drawn: candidates.len(),
        candidates_evaluated: candidates.len(),
        candidates_infeasible: infeasible,
        feasible,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, LinkBudget, PathSpec};
    use crate::model::{check_feasibility, rate_matrix, Beamforming};
    use crate::pattern::enumerate_patterns;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (SystemConfig, ChannelSet) {
        let cfg = SystemConfig::new(8, 4, 2, 2).with_p_tot(1e4);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = generate_channel(&cfg, &LinkBudget::default(), &PathSpec::default(), &mut rng).unwrap();
        (cfg, ch)
    }

    #[test]
    fn dedupe_preserves_order() {
        let x = IlluminationPattern::from_rows(&[vec![1, 0], vec![0, 1]]).unwrap();
        let y = IlluminationPattern::from_rows(&[vec![0, 1], vec![1, 0]]).unwrap();
        assert_eq!(dedupe_candidates(vec![x.clone(), x.clone(), y.clone()]), vec![x.clone(), y.clone()]);
        assert_eq!(dedupe_candidates(vec![y.clone(), x.clone()]), vec![y, x]);
    }

    #[test]
    fn dedupe_is_bounded_by_pattern_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let cfg = SystemConfig::new(8, 6, 2, 3);
        let drawn = draw_candidates(&cfg, 1000, &mut rng).unwrap();
        assert!(dedupe_candidates(drawn).len() <= 90);
    }

    #[test]
    fn exhaustive_search_picks_best_candidate() {
        let (cfg, ch) = setup(3);
        let all = enumerate_patterns(4, 2, 2).unwrap();
        let res = run_iprs_with_candidates(&ch, &cfg, &all).unwrap();
        let best = res.per_candidate_totals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(res.best_report.total, best);
        let recomputed = rate_matrix(&ch, &res.best_precoders.slots, &res.best_pattern.weights(), 1.0).unwrap();
        assert!((recomputed.total - res.best_report.total).abs() <= 1e-9 * res.best_report.total.abs());
        let verdict = check_feasibility(&res.best_report, &res.best_pattern, Beamforming::Digital(&res.best_precoders), &cfg);
        assert!(verdict.is_feasible(), "{verdict:?}");
    }

    #[test]
    fn huge_thresholds_flag_every_candidate() {
        let (cfg, ch) = setup(5);
        let cfg = cfg.with_gamma(1e3);
        let res = run_iprs(&ch, &cfg, 3, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(!res.feasible);
        assert_eq!(res.candidates_infeasible, res.candidates_evaluated);
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (cfg, ch) = setup(6);
        let a = run_iprs(&ch, &cfg, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = run_iprs(&ch, &cfg, 5, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a.best_pattern, b.best_pattern);
        assert_eq!(a.best_precoders, b.best_precoders);
        assert_eq!(
            a.per_candidate_totals.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.per_candidate_totals.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn no_candidates_is_an_error() {
        let (cfg, ch) = setup(7);
        assert_eq!(run_iprs_with_candidates(&ch, &cfg, &[]).unwrap_err(), Error::NoCandidates);
    }
}
