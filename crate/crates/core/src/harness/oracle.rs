//! Exhaustive-pattern brute force for small instances.

use serde::Serialize;

use super::config::ExperimentSpec;
use super::experiment::trial_rng;
use crate::channel::generate_channel;
use crate::error::Result;
use crate::iprs::solve_candidate;
use crate::pattern::enumerate_patterns;

#[derive(Debug, Clone, Serialize)]
pub struct OracleEntry {
    pub pattern: Vec<Vec<u8>>,
    pub total: Option<f64>,
    pub feasible: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    pub trial: usize,
    pub seed_base: u64,
    pub entries: Vec<OracleEntry>,
    /// Index of the best feasible pattern, or of the best overall if none is feasible.
    pub best: Option<usize>,
}

/// Solves every ordered pattern on the channel of trial `trial`, using the
/// first sweep point of `spec`.
pub fn run_oracle(spec: &ExperimentSpec, trial: usize) -> Result<OracleReport> {
    let cfg = spec
        .config_at(&spec.sweep_values[0])
        .map_err(|m| crate::Error::InvalidConfig(vec![m]))?;
    cfg.validate()?;
    let patterns = enumerate_patterns(cfg.n_s, cfg.k_beams, cfg.m_slots)?;
    let mut rng = trial_rng(spec.seed_base, trial);
    let channel = generate_channel(&cfg, &spec.link_budget, &spec.paths, &mut rng)?;
    let entries: Vec<OracleEntry> = patterns
        .iter()
        .map(|p| match solve_candidate(&channel, &cfg, p) {
            Ok(out) => OracleEntry {
                pattern: p.to_rows(),
                total: Some(out.report.total),
                feasible: out.feasible,
                error: None,
            },
            Err(e) => OracleEntry {
                pattern: p.to_rows(),
                total: None,
                feasible: false,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let pick = |only_feasible: bool| {
        entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.total.is_some() && (e.feasible || !only_feasible))
            .fold(None, |best: Option<(usize, f64)>, (i, e)| {
                let t = e.total.unwrap_or(f64::NEG_INFINITY);
                match best {
                    Some((_, bt)) if bt >= t => best,
                    _ => Some((i, t)),
                }
            })
            .map(|(i, _)| i)
    };
    let best = pick(true).or_else(|| pick(false));
    Ok(OracleReport {
        trial,
        seed_base: spec.seed_base,
        entries,
        best,
    })
}
