//! Trial execution and result files.
//!
//! Trial `i` at every sweep point draws its channel from a ChaCha8 stream
//! keyed by `(seed_base, i)`, so the points of a sweep are compared on the
//! same channel realizations whenever the problem size allows.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentSpec, Scheme, Stage, SweepValue};
use super::HarnessError;
use crate::channel::generate_channel;
use crate::error::Result;
use crate::hbf::factorize_all;
use crate::ipao::run_ipao;
use crate::iprs::run_iprs;
use crate::model::{rate_matrix, PrecoderSet, SystemConfig};

pub const SUMMARY_HEADER: [&str; 7] = [
    "axis",
    "mean_total",
    "std_total",
    "mean_per_beam_min",
    "infeasible_fraction",
    "wall_time_s",
    "seed_base",
];

/// One line of the summary CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    /// Mean sum-rate over trials that finished without error.
    pub mean_total: f64,
    /// Sample standard deviation; 0 with a single finished trial.
    pub std_total: f64,
    pub mean_per_beam_min: f64,
    /// Trials that errored or missed a threshold, over all trials.
    pub infeasible_fraction: f64,
    /// Total seconds spent on this sweep point; 0 unless timing is recorded.
    pub wall_time_s: f64,
    pub seed_base: u64,
}

/// Per-trial audit record, one JSON object per line of `trials.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub axis: String,
    pub trial: usize,
    pub seed_base: u64,
    pub total: Option<f64>,
    pub per_beam: Option<Vec<f64>>,
    pub feasible: bool,
    pub pattern: Option<Vec<Vec<u8>>>,
    /// Worst relative factorization residual across slots (HBF stage only).
    pub hbf_residual: Option<f64>,
    pub error: Option<String>,
}

impl TrialRecord {
    pub fn per_beam_min(&self) -> Option<f64> {
        self.per_beam.as_ref().map(|v| v.iter().copied().fold(f64::INFINITY, f64::min))
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Skip writing result files.
    pub dry_run: bool,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub rows: Vec<SweepRow>,
    pub trials: Vec<TrialRecord>,
    /// Trials that ended in an error rather than a (possibly flagged) design.
    pub errored: usize,
    pub output_dir: Option<PathBuf>,
}

/// RNG for trial `trial` of an experiment seeded with `seed_base`.
pub fn trial_rng(seed_base: u64, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed_base);
    rng.set_stream(trial as u64);
    rng
}

struct TrialDesign {
    pattern: Vec<Vec<u8>>,
    per_beam: Vec<f64>,
    total: f64,
    feasible: bool,
    hbf_residual: Option<f64>,
}

fn design(spec: &ExperimentSpec, cfg: &SystemConfig, trial: usize) -> Result<TrialDesign> {
    let mut rng = trial_rng(spec.seed_base, trial);
    let channel = generate_channel(cfg, &spec.link_budget, &spec.paths, &mut rng)?;
    let (pattern, precoders) = match spec.scheme {
        Scheme::Iprs => {
            let res = run_iprs(&channel, cfg, spec.candidates_for(cfg), &mut rng)?;
            (res.best_pattern, res.best_precoders)
        }
        Scheme::Ipao => {
            let res = run_ipao(&channel, cfg)?;
            (res.pattern, res.precoders)
        }
    };
    let (precoders, hbf_residual) = match spec.stage {
        Stage::Fdbf => (precoders, None),
        Stage::Hbf => {
            let mut slots = Vec::with_capacity(precoders.n_slots());
            let mut worst: f64 = 0.0;
            for hp in factorize_all(&precoders, cfg, &mut rng) {
                let hp = hp?;
                worst = worst.max(hp.residual);
                slots.push(hp.effective());
            }
            (PrecoderSet::new(slots), Some(worst))
        }
    };
    let report = rate_matrix(&channel, &precoders.slots, &pattern.weights(), cfg.sigma_sq)?.with_thresholds(&cfg.gamma);
    Ok(TrialDesign {
        pattern: pattern.to_rows(),
        per_beam: report.per_beam_sum.iter().copied().collect(),
        total: report.total,
        feasible: report.all_thresholds_met(),
        hbf_residual,
    })
}

/// Runs one trial at one sweep point. Scheme errors are captured in the record.
pub fn run_trial(spec: &ExperimentSpec, value: &SweepValue, trial: usize) -> TrialRecord {
    let axis = value.to_string();
    let outcome = spec
        .config_at(value)
        .and_then(|cfg| design(spec, &cfg, trial).map_err(|e| e.to_string()));
    match outcome {
        Ok(d) => TrialRecord {
            axis,
            trial,
            seed_base: spec.seed_base,
            total: Some(d.total),
            per_beam: Some(d.per_beam),
            feasible: d.feasible,
            pattern: Some(d.pattern),
            hbf_residual: d.hbf_residual,
            error: None,
        },
        Err(error) => TrialRecord {
            axis,
            trial,
            seed_base: spec.seed_base,
            total: None,
            per_beam: None,
            feasible: false,
            pattern: None,
            hbf_residual: None,
            error: Some(error),
        },
    }
}

/// Aggregates the trials of one sweep point, in trial order.
pub fn summarize(axis: String, seed_base: u64, records: &[TrialRecord], wall_time_s: f64) -> SweepRow {
    let totals: Vec<f64> = records.iter().filter_map(|r| r.total).collect();
    let mins: Vec<f64> = records.iter().filter_map(|r| r.per_beam_min()).collect();
    let mean = |v: &[f64]| if v.is_empty() { f64::NAN } else { v.iter().sum::<f64>() / v.len() as f64 };
    let mean_total = mean(&totals);
    let std_total = match totals.len() {
        0 => f64::NAN,
        1 => 0.0,
        n => (totals.iter().map(|t| (t - mean_total).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt(),
    };
    let infeasible = records.iter().filter(|r| !r.feasible).count();
    SweepRow {
        axis,
        mean_total,
        std_total,
        mean_per_beam_min: mean(&mins),
        infeasible_fraction: if records.is_empty() { 0.0 } else { infeasible as f64 / records.len() as f64 },
        wall_time_s,
        seed_base,
    }
}

fn summary_fields(row: &SweepRow) -> [String; 7] {
    [
        row.axis.clone(),
        row.mean_total.to_string(),
        row.std_total.to_string(),
        row.mean_per_beam_min.to_string(),
        row.infeasible_fraction.to_string(),
        row.wall_time_s.to_string(),
        row.seed_base.to_string(),
    ]
}

struct Sinks {
    summary: csv::Writer<File>,
    trials: BufWriter<File>,
}

impl Sinks {
    fn open(dir: &Path, spec: &ExperimentSpec) -> std::result::Result<Self, HarnessError> {
        fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
        let resolved = serde_json::to_string_pretty(spec).map_err(|e| HarnessError::Io(e.to_string()))?;
        fs::write(dir.join("resolved_spec.json"), resolved + "\n")?;
        let mut summary = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(dir.join("summary.csv"))?;
        summary.write_record(SUMMARY_HEADER)?;
        summary.flush()?;
        let trials = BufWriter::new(File::create(dir.join("trials.jsonl"))?);
        Ok(Self { summary, trials })
    }

    fn append(&mut self, row: &SweepRow, records: &[TrialRecord]) -> std::result::Result<(), HarnessError> {
        for r in records {
            let line = serde_json::to_string(r).map_err(|e| HarnessError::Io(e.to_string()))?;
            writeln!(self.trials, "{line}")?;
        }
        self.trials.flush()?;
        self.summary.write_record(summary_fields(row))?;
        self.summary.flush()?;
        Ok(())
    }
}

/// Runs every sweep point in order, trials in parallel, appending each
/// summary row as soon as its point completes.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> std::result::Result<ExperimentOutcome, HarnessError> {
    let violations = spec.violations();
    if !violations.is_empty() {
        return Err(HarnessError::Validation(violations));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(options.threads.unwrap_or(0))
        .build()
        .map_err(|e| HarnessError::Io(format!("thread pool: {e}")))?;
    let mut sinks = if options.dry_run { None } else { Some(Sinks::open(&spec.output, spec)?) };

    let mut rows = Vec::with_capacity(spec.sweep_values.len());
    let mut all = Vec::with_capacity(spec.sweep_values.len() * spec.trials);
    for value in &spec.sweep_values {
        let start = Instant::now();
        // collect() keeps trial order regardless of which worker finishes first
        let records: Vec<TrialRecord> =
            pool.install(|| (0..spec.trials).into_par_iter().map(|i| run_trial(spec, value, i)).collect());
        let wall = if spec.record_timing { start.elapsed().as_secs_f64() } else { 0.0 };
        let row = summarize(value.to_string(), spec.seed_base, &records, wall);
        if let Some(s) = sinks.as_mut() {
            s.append(&row, &records)?;
        }
        rows.push(row);
        all.extend(records);
    }
    Ok(ExperimentOutcome {
        errored: all.iter().filter(|r| r.error.is_some()).count(),
        rows,
        trials: all,
        output_dir: (!options.dry_run).then(|| spec.output.clone()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::parse_config;
    use rand::Rng;

    fn tiny(extra: &str) -> ExperimentSpec {
        parse_config(
            &format!(r#"{{"n_bs": 4, "n_s": 4, "k_beams": 2, "m_slots": 2, "trials": 2, "iprs_candidates": 2{extra}}}"#),
            "test",
        )
        .unwrap()
    }

    #[test]
    fn trial_streams_are_distinct_and_stable() {
        let a: u64 = trial_rng(5, 0).random();
        let b: u64 = trial_rng(5, 1).random();
        assert_ne!(a, b);
        assert_eq!(a, trial_rng(5, 0).random::<u64>());
    }

    #[test]
    fn summary_statistics() {
        let rec = |total: Option<f64>, feasible: bool| TrialRecord {
            axis: "1".into(),
            trial: 0,
            seed_base: 0,
            total,
            per_beam: total.map(|t| vec![t / 2.0, t / 2.0]),
            feasible,
            pattern: None,
            hbf_residual: None,
            error: total.is_none().then(|| "boom".into()),
        };
        let row = summarize("1".into(), 3, &[rec(Some(1.0), true), rec(Some(3.0), false), rec(None, false)], 0.0);
        assert_eq!(row.mean_total, 2.0);
        assert_eq!(row.std_total, 2f64.sqrt());
        assert_eq!(row.mean_per_beam_min, 1.0);
        assert!((row.infeasible_fraction - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(row.seed_base, 3);
    }

    #[test]
    fn trial_errors_are_recorded() {
        let mut spec = tiny("");
        spec.link_budget.distance_m = -1.0;
        let rec = run_trial(&spec, &spec.sweep_values[0].clone(), 0);
        assert!(rec.error.is_some());
        assert!(!rec.feasible);
    }

    #[test]
    fn dry_run_matches_serial_trials() {
        let spec = tiny(r#", "scheme": "iprs""#);
        let out = run_experiment(&spec, &RunOptions { threads: Some(2), dry_run: true }).unwrap();
        assert_eq!(out.rows.len(), 1);
        assert_eq!(out.errored, 0);
        for (i, r) in out.trials.iter().enumerate() {
            assert_eq!(r, &run_trial(&spec, &spec.sweep_values[0], i));
        }
    }
}
