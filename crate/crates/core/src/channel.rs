//! Rician multipath downlink channel for a uniform linear array.
//!
//! Row `n` of the channel matrix is `h_n = sum_l g_l v(N_BS, theta_l)^H`, where
//! `v` is the array steering vector and `g_l` a Rician path gain whose mean
//! power comes from the free-space link budget. Doppler is assumed
//! compensated and the channel is constant over a beam-hopping period.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::SystemConfig;
use crate::{CMatrix, Cx};

/// Free-space link-budget constants. Defaults follow a 20 GHz Ka-band LEO
/// downlink at 550 km with unity antenna gains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkBudget {
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub distance_m: f64,
    /// Boltzmann's constant, J/K.
    pub boltzmann: f64,
    pub noise_temp_k: f64,
    /// Satellite antenna gain (linear).
    pub tx_gain: f64,
    /// Ground terminal antenna gain (linear).
    pub rx_gain: f64,
    /// Element spacing in wavelengths.
    pub antenna_spacing_wavelengths: f64,
    pub light_speed: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        Self {
            bandwidth_hz: 250e6,
            carrier_hz: 20e9,
            distance_m: 550e3,
            boltzmann: 1.38e-23,
            noise_temp_k: 293.0,
            tx_gain: 1.0,
            rx_gain: 1.0,
            antenna_spacing_wavelengths: 0.5,
            light_speed: 299_792_458.0,
        }
    }
}

impl LinkBudget {
    pub fn violations(&self) -> Vec<String> {
        [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_hz", self.carrier_hz),
            ("distance_m", self.distance_m),
            ("boltzmann", self.boltzmann),
            ("noise_temp_k", self.noise_temp_k),
            ("tx_gain", self.tx_gain),
            ("rx_gain", self.rx_gain),
            ("antenna_spacing_wavelengths", self.antenna_spacing_wavelengths),
            ("light_speed", self.light_speed),
        ]
        .into_iter()
        .filter(|(_, v)| !(v.is_finite() && *v > 0.0))
        .map(|(k, v)| format!("link_budget.{k} must be positive and finite, got {v}"))
        .collect()
    }
}

/// Multipath structure of every beam-position channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    pub n_paths: usize,
    pub rician_factor_db: f64,
    /// Lower bound of the physical departure angle, radians.
    pub angle_min: f64,
    /// Upper bound of the physical departure angle, radians.
    pub angle_max: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self {
            n_paths: 2,
            rician_factor_db: 10.0,
            angle_min: -PI / 3.0,
            angle_max: PI / 3.0,
        }
    }
}

impl PathSpec {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.n_paths == 0 {
            out.push("paths.n_paths must be at least 1".to_string());
        }
        if !self.rician_factor_db.is_finite() {
            out.push("paths.rician_factor_db must be finite".to_string());
        }
        if !(self.angle_min.is_finite() && self.angle_max.is_finite() && self.angle_min <= self.angle_max) {
            out.push("paths angle bounds must be finite with angle_min <= angle_max".to_string());
        }
        out
    }
}

/// The `N_s x N_BS` downlink channel matrix; row `n` is `h_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    pub h: CMatrix,
}

impl ChannelSet {
    pub fn new(h: CMatrix) -> Self {
        Self { h }
    }

    pub fn n_s(&self) -> usize {
        self.h.nrows()
    }

    pub fn n_bs(&self) -> usize {
        self.h.ncols()
    }

    /// Row `n` as an owned `1 x N_BS` matrix.
    pub fn row(&self, n: usize) -> CMatrix {
        self.h.rows(n, 1).into_owned()
    }
}

/// Unit-norm ULA steering vector with entries `exp(j pi theta i) / sqrt(N)`.
pub fn steering_vector(n_ants: usize, theta: f64) -> Result<Vec<Cx>> {
    if n_ants == 0 {
        return Err(Error::InvalidSize("steering vector needs at least one antenna".into()));
    }
    let scale = 1.0 / (n_ants as f64).sqrt();
    Ok((0..n_ants)
        .map(|i| Cx::from_polar(scale, PI * theta * i as f64))
        .collect())
}

/// Mean path power `(v_c / (4 pi f_c d))^2 G_r G_t N_BS / (kappa B T_R)`.
pub fn path_power(budget: &LinkBudget, n_bs: usize) -> f64 {
    let free_space = budget.light_speed / (4.0 * PI * budget.carrier_hz * budget.distance_m);
    free_space * free_space * budget.rx_gain * budget.tx_gain * n_bs as f64
        / (budget.boltzmann * budget.bandwidth_hz * budget.noise_temp_k)
}

/// Draws a Rician path gain with mean power `eta`: a unit-power line-of-sight
/// term with uniform phase plus a circularly-symmetric Gaussian diffuse term,
/// weighted by the Rician factor.
pub fn sample_path_gain<R: Rng + ?Sized>(eta: f64, rician_factor_db: f64, rng: &mut R) -> Cx {
    let chi = 10f64.powf(rician_factor_db / 10.0);
    let los_w = (chi / (1.0 + chi)).sqrt();
    let nlos_w = (1.0 / (1.0 + chi)).sqrt();
    let phase = rng.sample(Uniform::new(0.0, 2.0 * PI).expect("valid range"));
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    let diffuse = Cx::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
    (Cx::from_polar(los_w, phase) + diffuse * nlos_w) * eta.sqrt()
}

/// `sum_l g_l v(N_BS, theta_l)^H` for explicit gains and electrical angles.
pub fn compose_row(n_bs: usize, gains: &[Cx], thetas: &[f64]) -> Result<Vec<Cx>> {
    if gains.len() != thetas.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} gains vs {} angles",
            gains.len(),
            thetas.len()
        )));
    }
    let mut row = vec![Cx::new(0.0, 0.0); n_bs];
    for (g, &theta) in gains.iter().zip(thetas) {
        let v = steering_vector(n_bs, theta)?;
        for (r, vi) in row.iter_mut().zip(v) {
            *r += g * vi.conj();
        }
    }
    Ok(row)
}

/// Electrical angle `2 (d_0 f_c / v_c) sin(physical angle)`.
pub fn electrical_angle(budget: &LinkBudget, physical: f64) -> f64 {
    2.0 * budget.antenna_spacing_wavelengths * physical.sin()
}

/// Generates the channel of every beam position. The RNG is consumed in the
/// same order (angle, then gain, per path, per beam) regardless of `n_bs`, so
/// the same seed yields the same geometry at every array size.
pub fn generate_channel<R: Rng + ?Sized>(
    config: &SystemConfig,
    budget: &LinkBudget,
    paths: &PathSpec,
    rng: &mut R,
) -> Result<ChannelSet> {
    let mut problems = budget.violations();
    problems.extend(paths.violations());
    if !problems.is_empty() {
        return Err(Error::InvalidConfig(problems));
    }
    if config.n_bs == 0 || config.n_s == 0 {
        return Err(Error::InvalidSize("n_bs and n_s must be positive".into()));
    }
    let eta = path_power(budget, config.n_bs);
    let mut h = CMatrix::zeros(config.n_s, config.n_bs);
    let mut gains = Vec::with_capacity(paths.n_paths);
    let mut thetas = Vec::with_capacity(paths.n_paths);
    for n in 0..config.n_s {
        gains.clear();
        thetas.clear();
        for _ in 0..paths.n_paths {
            let physical = if paths.angle_min == paths.angle_max {
                paths.angle_min
            } else {
                rng.sample(Uniform::new(paths.angle_min, paths.angle_max).expect("valid range"))
            };
            thetas.push(electrical_angle(budget, physical));
            gains.push(sample_path_gain(eta, paths.rician_factor_db, rng));
        }
        let row = compose_row(config.n_bs, &gains, &thetas)?;
        for (i, v) in row.into_iter().enumerate() {
            h[(n, i)] = v;
        }
    }
    Ok(ChannelSet::new(h))
}
