//! Fractional-programming loop for the fully-digital beamformers at a fixed
//! (binary or relaxed) pattern: alternate the closed-form auxiliary update and
//! the concave beamformer subproblem.

use nalgebra::DMatrix;

use super::beamformer::{solve_reduced, ReducedChannel};
use super::transform::{update_mu, update_zeta, AuxRole};
use crate::channel::ChannelSet;
use crate::error::Result;
use crate::model::{rate_matrix, PrecoderSet, RateReport, SystemConfig};
use crate::{CMatrix, Cx};

/// Matched-filter start: in each slot the beams with positive weight share
/// the power budget equally, `p_n^t = sqrt(P_tot / K_t) h_n^H / ||h_n||`.
pub fn matched_filter_init(channel: &ChannelSet, weights: &DMatrix<f64>, p_tot: f64) -> PrecoderSet {
    let (n_s, n_bs) = channel.h.shape();
    let slots = (0..weights.ncols())
        .map(|t| {
            let lit: Vec<usize> = (0..n_s).filter(|&n| weights[(n, t)] > 0.0).collect();
            let mut p = CMatrix::zeros(n_bs, n_s);
            if lit.is_empty() {
                return p;
            }
            let amp = (p_tot / lit.len() as f64).sqrt();
            for &n in &lit {
                let h = channel.h.row(n);
                let norm = h.norm();
                if norm > 0.0 {
                    for i in 0..n_bs {
                        p[(i, n)] = h[i].conj() * (amp / norm);
                    }
                }
            }
            p
        })
        .collect();
    PrecoderSet::new(slots)
}

#[derive(Debug, Clone)]
pub struct FdbfOutcome {
    pub precoders: PrecoderSet,
    /// Rates at `weights`, thresholds attached.
    pub report: RateReport,
    /// Weighted sum-rate before the first iteration and after each one.
    pub trace: Vec<f64>,
    pub iterations: usize,
    /// False if any subproblem missed the rate thresholds.
    pub subproblem_feasible: bool,
    pub kkt_residual: f64,
    pub converged: bool,
}

/// Runs at most `max_iters` FP iterations from `init`, stopping early when
/// the relative change of the weighted sum-rate drops below
/// `config.solver.fp_rel_tol`.
pub fn run_fdbf(
    channel: &ChannelSet,
    weights: &DMatrix<f64>,
    config: &SystemConfig,
    init: &PrecoderSet,
    max_iters: usize,
    role: AuxRole,
) -> Result<FdbfOutcome> {
    let reduced = ReducedChannel::new(channel);
    run_fdbf_reduced(channel, &reduced, weights, config, init, max_iters, role)
}

pub(crate) fn run_fdbf_reduced(
    channel: &ChannelSet,
    reduced: &ReducedChannel,
    weights: &DMatrix<f64>,
    config: &SystemConfig,
    init: &PrecoderSet,
    max_iters: usize,
    role: AuxRole,
) -> Result<FdbfOutcome> {
    let sigma_sq = config.sigma_sq;
    let mut precoders = init.clone();
    let mut value = rate_matrix(channel, &precoders.slots, weights, sigma_sq)?.total;
    let mut trace = vec![value];
    let mut feasible = true;
    let mut kkt: f64 = 0.0;
    let mut converged = true;
    let mut iterations = 0;
    for _ in 0..max_iters {
        let aux = match role {
            AuxRole::Zeta => update_zeta(channel, &precoders.slots, weights, sigma_sq)?,
            _ => update_mu(channel, &precoders.slots, weights, sigma_sq)?,
        };
        let sol = solve_reduced(reduced, weights, &aux, config, &precoders)?;
        precoders = sol.precoders;
        feasible = sol.rate_feasible;
        kkt = kkt.max(sol.kkt_residual);
        converged &= sol.converged;
        iterations += 1;

        let next = rate_matrix(channel, &precoders.slots, weights, sigma_sq)?.total;
        trace.push(next);
        let change = (next - value).abs() / value.abs().max(f64::MIN_POSITIVE);
        value = next;
        if change < config.solver.fp_rel_tol {
            break;
        }
    }
    fill_power_budget(&mut precoders, config.p_tot);
    let report = rate_matrix(channel, &precoders.slots, weights, sigma_sq)?.with_thresholds(&config.gamma);
    Ok(FdbfOutcome {
        precoders,
        report,
        trace,
        iterations,
        subproblem_feasible: feasible,
        kkt_residual: kkt,
        converged,
    })
}

/// The barrier solver stops strictly inside the power budget. Scaling a slot
/// up raises every SINR in it, so each slot is moved onto the budget.
fn fill_power_budget(precoders: &mut PrecoderSet, p_tot: f64) {
    for p in precoders.slots.iter_mut() {
        let power = p.norm_squared();
        if power > 0.0 && power < p_tot {
            *p *= Cx::new((p_tot / power).sqrt(), 0.0);
        }
    }
}
