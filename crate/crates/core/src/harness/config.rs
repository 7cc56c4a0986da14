//! Experiment configuration files.
//!
//! A config is one JSON object. Only `n_bs`, `n_s`, `k_beams` and `m_slots`
//! are required; everything else has a default. Unknown keys are rejected.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::channel::{LinkBudget, PathSpec};
use crate::model::{SolverSettings, SystemConfig};
use crate::pattern::count_unordered_patterns;

/// Quantity varied across the rows of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    #[default]
    PTot,
    Gamma,
    NBs,
    /// `(K, M)` pairs; `N_s` is set to `K M` for each pair.
    KmPairs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Iprs,
    #[default]
    Ipao,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    #[default]
    Fdbf,
    Hbf,
}

/// One point on the sweep axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SweepValue {
    Pair([usize; 2]),
    Number(f64),
}

impl fmt::Display for SweepValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SweepValue::Pair([k, m]) => write!(f, "{k}x{m}"),
            SweepValue::Number(v) => write!(f, "{v}"),
        }
    }
}

/// Rate threshold: one value for every beam, or one per beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Scalar(f64),
    PerBeam(Vec<f64>),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Scalar(0.0)
    }
}

impl GammaSpec {
    fn resolve(&self, n_s: usize) -> Vec<f64> {
        match self {
            GammaSpec::Scalar(g) => vec![*g; n_s],
            GammaSpec::PerBeam(v) => v.clone(),
        }
    }
}

/// The on-disk form; every field except the four sizes is optional.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    name: Option<String>,
    n_bs: usize,
    n_s: usize,
    k_beams: usize,
    m_slots: usize,
    n_rf: Option<usize>,
    p_tot: Option<f64>,
    gamma: Option<GammaSpec>,
    sigma_sq: Option<f64>,
    #[serde(default)]
    solver: SolverSettings,
    #[serde(default)]
    link_budget: LinkBudget,
    #[serde(default)]
    paths: PathSpec,
    sweep_axis: Option<SweepAxis>,
    sweep_values: Option<Vec<SweepValue>>,
    scheme: Option<Scheme>,
    stage: Option<Stage>,
    trials: Option<usize>,
    iprs_candidates: Option<usize>,
    seed_base: Option<u64>,
    output: Option<PathBuf>,
    record_timing: Option<bool>,
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub base: SystemConfig,
    pub gamma: GammaSpec,
    pub link_budget: LinkBudget,
    pub paths: PathSpec,
    pub sweep_axis: SweepAxis,
    pub sweep_values: Vec<SweepValue>,
    pub scheme: Scheme,
    pub stage: Stage,
    pub trials: usize,
    /// Random-search candidates per IPRS run; `None` uses the number of
    /// distinct patterns up to slot relabelling.
    pub iprs_candidates: Option<usize>,
    pub seed_base: u64,
    pub output: PathBuf,
    /// Write measured wall-clock times into the summary; off by default so
    /// reruns produce identical files.
    pub record_timing: bool,
}

pub const DEFAULT_TRIALS: usize = 50;
pub const DEFAULT_P_TOT: f64 = 100.0;

impl ExperimentSpec {
    /// System parameters at one sweep point.
    pub fn config_at(&self, value: &SweepValue) -> Result<SystemConfig, String> {
        let mut cfg = self.base.clone();
        match (self.sweep_axis, value) {
            (SweepAxis::PTot, SweepValue::Number(p)) => cfg.p_tot = *p,
            (SweepAxis::Gamma, SweepValue::Number(g)) => cfg.gamma = vec![*g; cfg.n_s],
            (SweepAxis::NBs, SweepValue::Number(n)) => {
                if n.fract() != 0.0 || *n < 1.0 {
                    return Err(format!("n_bs sweep value {n} is not a positive integer"));
                }
                cfg.n_bs = *n as usize;
                cfg.n_rf = cfg.n_rf.min(cfg.n_bs);
            }
            (SweepAxis::KmPairs, SweepValue::Pair([k, m])) => {
                cfg.k_beams = *k;
                cfg.m_slots = *m;
                cfg.n_s = k * m;
                cfg.n_rf = cfg.n_rf.max(*k);
                cfg.gamma = match &self.gamma {
                    GammaSpec::Scalar(g) => vec![*g; cfg.n_s],
                    GammaSpec::PerBeam(v) if v.len() == cfg.n_s => v.clone(),
                    GammaSpec::PerBeam(v) => {
                        return Err(format!(
                            "per-beam gamma has {} entries but ({k}, {m}) needs {}",
                            v.len(),
                            cfg.n_s
                        ))
                    }
                };
            }
            (axis, v) => return Err(format!("sweep value {v} does not fit axis {axis:?}")),
        }
        Ok(cfg)
    }

    pub fn candidates_for(&self, cfg: &SystemConfig) -> usize {
        self.iprs_candidates.unwrap_or_else(|| {
            count_unordered_patterns(cfg.n_s, cfg.k_beams, cfg.m_slots)
                .map(|c| c.clamp(1, 10_000) as usize)
                .unwrap_or(20)
        })
    }

    /// Every invariant violation across the spec and all sweep points.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.trials == 0 {
            v.push("trials must be at least 1".to_string());
        }
        if self.sweep_values.is_empty() {
            v.push("sweep_values must not be empty".to_string());
        }
        if self.iprs_candidates == Some(0) {
            v.push("iprs_candidates must be at least 1".to_string());
        }
        v.extend(self.link_budget.violations().into_iter().map(|m| format!("link_budget: {m}")));
        v.extend(self.paths.violations().into_iter().map(|m| format!("paths: {m}")));
        let mut seen = Vec::new();
        for value in &self.sweep_values {
            match self.config_at(value) {
                Ok(cfg) => {
                    for msg in cfg.violations() {
                        // the same base problem repeats at every sweep point
                        if !seen.contains(&msg) {
                            seen.push(msg.clone());
                            v.push(if self.sweep_values.len() > 1 {
                                format!("at {} = {value}: {msg}", axis_name(self.sweep_axis))
                            } else {
                                msg
                            });
                        }
                    }
                }
                Err(msg) => v.push(msg),
            }
        }
        v
    }
}

pub fn axis_name(axis: SweepAxis) -> &'static str {
    match axis {
        SweepAxis::PTot => "p_tot",
        SweepAxis::Gamma => "gamma",
        SweepAxis::NBs => "n_bs",
        SweepAxis::KmPairs => "km_pairs",
    }
}

/// Parses and validates a config held in memory. `origin` names the source
/// in diagnostics.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentSpec, HarnessError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| HarnessError::Parse {
        origin: origin.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let spec = resolve(file);
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(HarnessError::Validation(violations));
    }
    Ok(spec)
}

/// Reads a config file from disk.
pub fn load_config(path: &Path) -> Result<ExperimentSpec, HarnessError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

fn resolve(file: ConfigFile) -> ExperimentSpec {
    let gamma = file.gamma.unwrap_or_default();
    let mut base = SystemConfig::new(file.n_bs, file.n_s, file.k_beams, file.m_slots)
        .with_p_tot(file.p_tot.unwrap_or(DEFAULT_P_TOT));
    base.gamma = gamma.resolve(file.n_s);
    if let Some(n_rf) = file.n_rf {
        base.n_rf = n_rf;
    }
    if let Some(s) = file.sigma_sq {
        base.sigma_sq = s;
    }
    base.solver = file.solver;
    let seed_base = file.seed_base.unwrap_or(0);
    base.rng_seed = seed_base;
    let sweep_axis = file.sweep_axis.unwrap_or_default();
    let sweep_values = file.sweep_values.unwrap_or_else(|| match sweep_axis {
        SweepAxis::PTot => vec![SweepValue::Number(base.p_tot)],
        SweepAxis::Gamma => vec![SweepValue::Number(base.gamma.first().copied().unwrap_or(0.0))],
        SweepAxis::NBs => vec![SweepValue::Number(base.n_bs as f64)],
        SweepAxis::KmPairs => vec![SweepValue::Pair([base.k_beams, base.m_slots])],
    });
    let name = file.name.unwrap_or_else(|| "experiment".to_string());
    ExperimentSpec {
        output: file.output.unwrap_or_else(|| PathBuf::from("results").join(&name)),
        name,
        base,
        gamma,
        link_budget: file.link_budget,
        paths: file.paths,
        sweep_axis,
        sweep_values,
        scheme: file.scheme.unwrap_or_default(),
        stage: file.stage.unwrap_or_default(),
        trials: file.trials.unwrap_or(DEFAULT_TRIALS),
        iprs_candidates: file.iprs_candidates,
        seed_base,
        record_timing: file.record_timing.unwrap_or(false),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let spec = parse_config(r#"{"n_bs": 8, "n_s": 4, "k_beams": 2, "m_slots": 2}"#, "inline").unwrap();
        assert_eq!(spec.base.p_tot, DEFAULT_P_TOT);
        assert_eq!(spec.base.gamma, vec![0.0; 4]);
        assert_eq!(spec.base.sigma_sq, 1.0);
        assert_eq!(spec.base.n_rf, 4);
        assert_eq!(spec.base.solver, SolverSettings::default());
        assert_eq!(spec.link_budget, LinkBudget::default());
        assert_eq!(spec.paths, PathSpec::default());
        assert_eq!(spec.sweep_axis, SweepAxis::PTot);
        assert_eq!(spec.sweep_values, vec![SweepValue::Number(DEFAULT_P_TOT)]);
        assert_eq!(spec.scheme, Scheme::Ipao);
        assert_eq!(spec.stage, Stage::Fdbf);
        assert_eq!(spec.trials, DEFAULT_TRIALS);
        assert!(!spec.record_timing);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config(r#"{"n_bs": 8, "n_s": 4, "k_beams": 2, "m_slots": 2, "bogus": 1}"#, "x").unwrap_err();
        match err {
            HarnessError::Parse { message, line, .. } => {
                assert!(message.contains("bogus"), "{message}");
                assert_eq!(line, 1);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_config(r#"{"n_bs": 8, "n_s": 4, "k_beams": 2, "m_slots": 2, "solver": {"t9": 1}}"#, "x"),
            Err(HarnessError::Parse { .. })
        ));
    }

    #[test]
    fn coverage_requirement_is_reported() {
        let err = parse_config(r#"{"n_bs": 8, "n_s": 7, "k_beams": 2, "m_slots": 3}"#, "x").unwrap_err();
        match err {
            HarnessError::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("illuminated at least once")), "{v:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn all_violations_are_listed() {
        let err = parse_config(
            r#"{"n_bs": 8, "n_s": 4, "k_beams": 2, "m_slots": 2, "p_tot": -1, "trials": 0, "sweep_values": []}"#,
            "x",
        )
        .unwrap_err();
        match err {
            HarnessError::Validation(v) => assert!(v.len() >= 2, "{v:?}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn km_pairs_resize_the_problem() {
        let spec = parse_config(
            r#"{"n_bs": 32, "n_s": 6, "k_beams": 2, "m_slots": 3, "gamma": 0.01,
                "sweep_axis": "km_pairs", "sweep_values": [[2, 2], [3, 2]]}"#,
            "x",
        )
        .unwrap();
        let cfg = spec.config_at(&spec.sweep_values[1]).unwrap();
        assert_eq!((cfg.k_beams, cfg.m_slots, cfg.n_s), (3, 2, 6));
        assert_eq!(cfg.gamma, vec![0.01; 6]);
        assert_eq!(spec.sweep_values[0].to_string(), "2x2");
    }

    #[test]
    fn per_beam_gamma_is_accepted() {
        let spec = parse_config(
            r#"{"n_bs": 8, "n_s": 2, "k_beams": 2, "m_slots": 1, "gamma": [0.1, 0.2]}"#,
            "x",
        )
        .unwrap();
        assert_eq!(spec.base.gamma, vec![0.1, 0.2]);
        assert!(parse_config(r#"{"n_bs": 8, "n_s": 2, "k_beams": 2, "m_slots": 1, "gamma": [0.1]}"#, "x").is_err());
    }

    #[test]
    fn mismatched_sweep_value_is_invalid() {
        assert!(matches!(
            parse_config(
                r#"{"n_bs": 8, "n_s": 4, "k_beams": 2, "m_slots": 2, "sweep_axis": "km_pairs", "sweep_values": [3]}"#,
                "x"
            ),
            Err(HarnessError::Validation(_))
        ));
    }
}
