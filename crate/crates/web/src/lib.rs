//! WebAssembly bindings for the browser demo. Every entry point takes a JSON
//! request and returns a JSON string; the plain-Rust `*_json` functions do the
//! work so they can be tested natively.

use beamhop::channel::{generate_channel, ChannelSet, LinkBudget, PathSpec};
use beamhop::hbf::factorize_all;
use beamhop::ipao::run_ipao;
use beamhop::iprs::run_iprs;
use beamhop::pattern::IlluminationPattern;
use beamhop::{rate_matrix, PrecoderSet, RateReport, SystemConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "lowercase")]
pub enum DemoScheme {
    #[default]
    Ipao,
    Iprs,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoRequest {
    pub n_bs: usize,
    pub n_s: usize,
    pub k_beams: usize,
    pub m_slots: usize,
    pub n_rf: usize,
    pub p_tot: f64,
    pub gamma: f64,
    pub scheme: DemoScheme,
    pub candidates: usize,
    pub seed: u64,
    /// Power levels for the sweep.
    pub p_values: Vec<f64>,
}

impl Default for DemoRequest {
    fn default() -> Self {
        Self {
            n_bs: 32,
            n_s: 6,
            k_beams: 2,
            m_slots: 3,
            n_rf: 6,
            p_tot: 120.0,
            gamma: 0.01,
            scheme: DemoScheme::Ipao,
            candidates: 15,
            seed: 1,
            p_values: vec![80.0, 90.0, 100.0, 110.0, 120.0],
        }
    }
}

impl DemoRequest {
    fn config(&self, p_tot: f64) -> Result<SystemConfig, String> {
        let cfg = SystemConfig::new(self.n_bs, self.n_s, self.k_beams, self.m_slots)
            .with_p_tot(p_tot)
            .with_gamma(self.gamma)
            .with_n_rf(self.n_rf);
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    fn channel(&self, cfg: &SystemConfig) -> Result<(ChannelSet, ChaCha8Rng), String> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let ch = generate_channel(cfg, &LinkBudget::default(), &PathSpec::default(), &mut rng).map_err(|e| e.to_string())?;
        Ok((ch, rng))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignView {
    pub pattern: Vec<Vec<u8>>,
    /// Per-beam, per-slot rates, one row per beam.
    pub rates: Vec<Vec<f64>>,
    pub per_beam: Vec<f64>,
    pub total: f64,
    pub feasible: bool,
}

impl DesignView {
    fn new(pattern: &IlluminationPattern, report: &RateReport, feasible: bool) -> Self {
        let rates = (0..report.rates.nrows())
            .map(|n| report.rates.row(n).iter().copied().collect())
            .collect();
        Self {
            pattern: pattern.to_rows(),
            rates,
            per_beam: report.per_beam_sum.iter().copied().collect(),
            total: report.total,
            feasible,
        }
    }
}

fn run_scheme(req: &DemoRequest, cfg: &SystemConfig, channel: &ChannelSet, rng: &mut ChaCha8Rng) -> Result<(IlluminationPattern, PrecoderSet, DesignView), String> {
    match req.scheme {
        DemoScheme::Ipao => {
            let r = run_ipao(channel, cfg).map_err(|e| e.to_string())?;
            let view = DesignView::new(&r.pattern, &r.report, r.feasible);
            Ok((r.pattern, r.precoders, view))
        }
        DemoScheme::Iprs => {
            let r = run_iprs(channel, cfg, req.candidates.max(1), rng).map_err(|e| e.to_string())?;
            let view = DesignView::new(&r.best_pattern, &r.best_report, r.feasible);
            Ok((r.best_pattern, r.best_precoders, view))
        }
    }
}

fn parse(request: &str) -> Result<DemoRequest, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

/// One fully-digital design on a seeded channel.
pub fn design_json(request: &str) -> Result<String, String> {
    let req = parse(request)?;
    let cfg = req.config(req.p_tot)?;
    let (channel, mut rng) = req.channel(&cfg)?;
    let (_, _, view) = run_scheme(&req, &cfg, &channel, &mut rng)?;
    to_json(&view)
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub p_tot: f64,
    pub total: f64,
    pub min_per_beam: f64,
    pub feasible: bool,
}

/// Sum rate against transmit power, all points on the same channel.
pub fn sweep_json(request: &str) -> Result<String, String> {
    let req = parse(request)?;
    if req.p_values.is_empty() {
        return Err("p_values is empty".into());
    }
    let mut points = Vec::with_capacity(req.p_values.len());
    for &p in &req.p_values {
        let cfg = req.config(p)?;
        let (channel, mut rng) = req.channel(&cfg)?;
        let (_, _, view) = run_scheme(&req, &cfg, &channel, &mut rng)?;
        points.push(SweepPoint {
            p_tot: p,
            total: view.total,
            min_per_beam: view.per_beam.iter().copied().fold(f64::INFINITY, f64::min),
            feasible: view.feasible,
        });
    }
    to_json(&points)
}

#[derive(Debug, Clone, Serialize)]
pub struct HybridView {
    pub digital: DesignView,
    pub hybrid_total: f64,
    pub hybrid_per_beam: Vec<f64>,
    /// Relative residual after each alternation, one trace per slot.
    pub residual_traces: Vec<Vec<f64>>,
}

/// Designs the digital precoders, then factors each slot into analog and
/// digital stages.
pub fn hybrid_json(request: &str) -> Result<String, String> {
    let req = parse(request)?;
    let cfg = req.config(req.p_tot)?;
    let (channel, mut rng) = req.channel(&cfg)?;
    let (pattern, precoders, digital) = run_scheme(&req, &cfg, &channel, &mut rng)?;
    let factored = factorize_all(&precoders, &cfg, &mut rng)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let effective: Vec<_> = factored.iter().map(|h| h.effective()).collect();
    let report = rate_matrix(&channel, &effective, &pattern.weights(), cfg.sigma_sq).map_err(|e| e.to_string())?;
    to_json(&HybridView {
        digital,
        hybrid_total: report.total,
        hybrid_per_beam: report.per_beam_sum.iter().copied().collect(),
        residual_traces: factored.iter().map(|h| h.residual_trace.clone()).collect(),
    })
}

fn js(result: Result<String, String>) -> Result<String, JsError> {
    result.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn design(request: &str) -> Result<String, JsError> {
    js(design_json(request))
}

#[wasm_bindgen]
pub fn power_sweep(request: &str) -> Result<String, JsError> {
    js(sweep_json(request))
}

#[wasm_bindgen]
pub fn hybrid(request: &str) -> Result<String, JsError> {
    js(hybrid_json(request))
}
