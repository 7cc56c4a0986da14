//! Auxiliary variables of the quadratic transform and the surrogate rates.
//!
//! For a fixed set of precoders and weights the stationary auxiliary value is
//! `sqrt(x_{n,t}) h_n p_n^t / (sum_{k!=n} x_{k,t}|h_n p_k^t|^2 + sigma^2)`;
//! substituting it into the surrogate reproduces the true rate exactly.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::{CMatrix, Cx};

/// Which loop an auxiliary matrix belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuxRole {
    /// Beamformer loop at a binary candidate pattern.
    Mu,
    /// Beamformer loop at a relaxed pattern.
    Zeta,
    /// Pattern loop.
    Xi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuxiliaryVars {
    pub role: AuxRole,
    /// `N_s x M`.
    pub values: CMatrix,
}

/// Per-slot signal terms `h_n p_n^t`, interference sums and gain matrices.
pub(crate) struct SlotTerms {
    /// `(n, k) -> h_n p_k^t`.
    pub(crate) effective: CMatrix,
}

impl SlotTerms {
    pub(crate) fn new(channel: &ChannelSet, precoder: &CMatrix) -> Self {
        Self {
            effective: &channel.h * precoder,
        }
    }

    pub(crate) fn gain(&self, n: usize, k: usize) -> f64 {
        self.effective[(n, k)].norm_sqr()
    }

    /// `sum_{k!=n} x_k |h_n p_k|^2`.
    pub(crate) fn interference(&self, n: usize, weights: &DMatrix<f64>, t: usize) -> f64 {
        (0..self.effective.ncols())
            .filter(|&k| k != n)
            .map(|k| weights[(k, t)] * self.gain(n, k))
            .sum()
    }
}

fn check_dims(channel: &ChannelSet, precoders: &[CMatrix], weights: &DMatrix<f64>) -> Result<()> {
    let (n_s, n_bs) = channel.h.shape();
    if weights.shape() != (n_s, precoders.len()) {
        return Err(Error::DimensionMismatch(format!(
            "weights are {:?}, expected ({n_s}, {})",
            weights.shape(),
            precoders.len()
        )));
    }
    if let Some(t) = precoders.iter().position(|p| p.shape() != (n_bs, n_s)) {
        return Err(Error::DimensionMismatch(format!(
            "precoder of slot {t} is {:?}, expected ({n_bs}, {n_s})",
            precoders[t].shape()
        )));
    }
    Ok(())
}

fn stationary(
    role: AuxRole,
    channel: &ChannelSet,
    precoders: &[CMatrix],
    weights: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<AuxiliaryVars> {
    check_dims(channel, precoders, weights)?;
    let n_s = channel.n_s();
    let mut values = CMatrix::zeros(n_s, precoders.len());
    for (t, p) in precoders.iter().enumerate() {
        let terms = SlotTerms::new(channel, p);
        for n in 0..n_s {
            let x = weights[(n, t)];
            if x == 0.0 {
                continue;
            }
            let denom = terms.interference(n, weights, t) + sigma_sq;
            values[(n, t)] = terms.effective[(n, n)] * (x.sqrt() / denom);
        }
    }
    Ok(AuxiliaryVars { role, values })
}

/// Stationary auxiliary values for the beamformer loop at a binary pattern.
pub fn update_mu(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    weights: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<AuxiliaryVars> {
    stationary(AuxRole::Mu, channel, precoders, weights, sigma_sq)
}

/// Same closed form as [`update_mu`], used with relaxed weights.
pub fn update_zeta(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    weights: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<AuxiliaryVars> {
    stationary(AuxRole::Zeta, channel, precoders, weights, sigma_sq)
}

/// Stationary auxiliary values for the pattern loop; precoders are held fixed.
pub fn update_xi(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    relaxed: &DMatrix<f64>,
    sigma_sq: f64,
) -> Result<AuxiliaryVars> {
    stationary(AuxRole::Xi, channel, precoders, relaxed, sigma_sq)
}

/// Surrogate rates
/// `log2(1 + 2 Re{sqrt(x) aux^* h_n p_n^t} - |aux|^2 (sum_{k!=n} x_k |h_n p_k^t|^2 + sigma^2))`.
pub fn surrogate_f(
    channel: &ChannelSet,
    precoders: &[CMatrix],
    weights: &DMatrix<f64>,
    aux: &AuxiliaryVars,
    sigma_sq: f64,
) -> Result<DMatrix<f64>> {
    check_dims(channel, precoders, weights)?;
    if aux.values.shape() != weights.shape() {
        return Err(Error::DimensionMismatch(format!(
            "auxiliary matrix is {:?}, expected {:?}",
            aux.values.shape(),
            weights.shape()
        )));
    }
    let n_s = channel.n_s();
    let mut f = DMatrix::zeros(n_s, precoders.len());
    for (t, p) in precoders.iter().enumerate() {
        let terms = SlotTerms::new(channel, p);
        for n in 0..n_s {
            let a = aux.values[(n, t)];
            let signal: Cx = a.conj() * terms.effective[(n, n)] * weights[(n, t)].sqrt();
            let arg = 1.0 + 2.0 * signal.re
                - a.norm_sqr() * (terms.interference(n, weights, t) + sigma_sq);
            if !(arg > 0.0) {
                return Err(Error::NonPositiveLogArgument { beam: n, slot: t, value: arg });
            }
            f[(n, t)] = arg.ln() / std::f64::consts::LN_2;
        }
    }
    Ok(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::rate_matrix;
    use crate::pattern::random_pattern;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cmatrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| Cx::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    fn instance(seed: u64) -> (ChannelSet, Vec<CMatrix>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ch = ChannelSet::new(random_cmatrix(4, 6, &mut rng));
        let p: Vec<CMatrix> = (0..2).map(|_| random_cmatrix(6, 4, &mut rng)).collect();
        let w = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>());
        (ch, p, w)
    }

    #[test]
    fn dark_entries_get_zero() {
        let (ch, p, mut w) = instance(1);
        w[(2, 1)] = 0.0;
        let mu = update_mu(&ch, &p, &w, 1.0).unwrap();
        assert_eq!(mu.values[(2, 1)], Cx::new(0.0, 0.0));
        assert_eq!(mu.role, AuxRole::Mu);
    }

    #[test]
    fn interference_free_value() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = ChannelSet::new(random_cmatrix(2, 3, &mut rng));
        let p = vec![random_cmatrix(3, 2, &mut rng)];
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let sigma_sq = 0.7;
        let mu = update_mu(&ch, &p, &w, sigma_sq).unwrap();
        let hp = (ch.row(0) * p[0].column(0))[(0, 0)];
        assert!((mu.values[(0, 0)] - hp / sigma_sq).norm() < 1e-14);
    }

    #[test]
    fn transform_identity_with_relaxed_weights() {
        for seed in 0..10 {
            let (ch, p, w) = instance(seed);
            let xi = update_xi(&ch, &p, &w, 1.3).unwrap();
            let f = surrogate_f(&ch, &p, &w, &xi, 1.3).unwrap();
            let r = rate_matrix(&ch, &p, &w, 1.3).unwrap();
            assert!((f - r.rates).amax() < 1e-10);
        }
    }

    #[test]
    fn transform_identity_with_binary_pattern() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = ChannelSet::new(random_cmatrix(4, 8, &mut rng));
        let p: Vec<CMatrix> = (0..2).map(|_| random_cmatrix(8, 4, &mut rng)).collect();
        let w = random_pattern(4, 2, 2, &mut rng).unwrap().weights();
        let mu = update_mu(&ch, &p, &w, 1.0).unwrap();
        let xi = update_xi(&ch, &p, &w, 1.0).unwrap();
        assert_eq!(mu.values, xi.values);
        let f = surrogate_f(&ch, &p, &w, &mu, 1.0).unwrap();
        let r = rate_matrix(&ch, &p, &w, 1.0).unwrap();
        assert!((f - r.rates).amax() < 1e-10);
    }

    #[test]
    fn zero_aux_gives_zero_surrogate() {
        let (ch, p, w) = instance(3);
        let aux = AuxiliaryVars { role: AuxRole::Mu, values: CMatrix::zeros(4, 2) };
        assert_eq!(surrogate_f(&ch, &p, &w, &aux, 1.0).unwrap(), DMatrix::zeros(4, 2));
    }

    #[test]
    fn perturbed_aux_lowers_surrogate() {
        let (ch, p, w) = instance(4);
        let mu = update_mu(&ch, &p, &w, 1.0).unwrap();
        let r = rate_matrix(&ch, &p, &w, 1.0).unwrap().rates;
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        for _ in 0..50 {
            let scale = 0.05;
            let delta = CMatrix::from_fn(4, 2, |_, _| {
                Cx::new(scale * (rng.random::<f64>() - 0.5), scale * (rng.random::<f64>() - 0.5))
            });
            let perturbed = AuxiliaryVars { role: AuxRole::Mu, values: &mu.values + delta };
            let f = surrogate_f(&ch, &p, &w, &perturbed, 1.0).unwrap();
            for i in 0..8 {
                assert!(f[i] < r[i], "entry {i}: {} vs {}", f[i], r[i]);
            }
        }
    }

    #[test]
    fn far_aux_is_rejected() {
        let (ch, p, w) = instance(6);
        let aux = AuxiliaryVars {
            role: AuxRole::Mu,
            values: CMatrix::from_element(4, 2, Cx::new(100.0, 0.0)),
        };
        assert!(matches!(
            surrogate_f(&ch, &p, &w, &aux, 1.0),
            Err(Error::NonPositiveLogArgument { .. })
        ));
    }
}
