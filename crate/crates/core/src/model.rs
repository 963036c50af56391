//! Model parameters and the algebraic boundary/flux formulas shared by all solvers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetics::Kinetics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParameters {
    /// Number of microbial species.
    pub n: usize,
    /// Number of dissolved substrates.
    pub m: usize,
    /// Density rho_i of each species (mass/volume).
    pub rho: Vec<f64>,
    /// Substrate diffusivities D_S,j (length^2/time).
    #[serde(rename = "D_S", alias = "d_s")]
    pub d_s: Vec<f64>,
    /// Planktonic diffusivities D_Psi,i (length^2/time).
    #[serde(rename = "D_Psi", alias = "d_psi")]
    pub d_psi: Vec<f64>,
    /// Attachment velocities v_a,i (length/time).
    pub v_a: Vec<f64>,
    /// Detachment coefficient delta (1/(length time)).
    #[serde(default)]
    pub delta: f64,
}

impl ModelParameters {
    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.n == 0 || self.m == 0 {
            return cfg(format!("need n >= 1 and m >= 1 (got n = {}, m = {})", self.n, self.m));
        }
        for (name, v, len) in [
            ("rho", &self.rho, self.n),
            ("d_s", &self.d_s, self.m),
            ("d_psi", &self.d_psi, self.n),
            ("v_a", &self.v_a, self.n),
        ] {
            if v.len() != len {
                return cfg(format!("params.{name} has {} entries, expected {len}", v.len()));
            }
        }
        for (name, v) in [("rho", &self.rho), ("d_s", &self.d_s), ("d_psi", &self.d_psi)] {
            if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
                return cfg(format!("params.{name} entries must be finite and > 0"));
            }
        }
        if self.v_a.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return cfg("params.v_a entries must be finite and >= 0".into());
        }
        if !self.v_a.iter().any(|&x| x > 0.0) {
            return cfg("params.v_a: at least one attachment velocity must be > 0".into());
        }
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return cfg("params.delta must be finite and >= 0".into());
        }
        Ok(())
    }

    fn check_species_len(&self, v: &[f64], what: &str) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::Config(format!(
                "{what} has {} entries, expected n = {}",
                v.len(),
                self.n
            )));
        }
        Ok(())
    }
}

/// Attachment velocity `sigma_a = sum_i v_a,i Psi*_i / rho_i`.
pub fn sigma_a(psi_star: &[f64], params: &ModelParameters) -> Result<f64> {
    params.check_species_len(psi_star, "psi_star")?;
    Ok(psi_star
        .iter()
        .zip(&params.v_a)
        .zip(&params.rho)
        .map(|((p, v), r)| v * p / r)
        .sum())
}

/// Detachment velocity `sigma_d = delta R^2`.
pub fn sigma_d(radius: f64, params: &ModelParameters) -> f64 {
    params.delta * radius * radius
}

/// Sessile concentrations of freshly attached biomass,
/// `X_i0 = v_a,i Psi*_i rho_i / sum_k v_a,k Psi*_k`.
pub fn boundary_fractions(psi_star: &[f64], params: &ModelParameters) -> Result<Vec<f64>> {
    params.check_species_len(psi_star, "psi_star")?;
    let flux: Vec<f64> = psi_star.iter().zip(&params.v_a).map(|(p, v)| v * p).collect();
    let total: f64 = flux.iter().sum();
    if !(total > 0.0) {
        return Err(Error::NoAttachingBiomass);
    }
    Ok(flux.iter().zip(&params.rho).map(|(f, r)| f / total * r).collect())
}

/// `G = sum_i (r_M,i + r_i)`, evaluated without clamping.
pub fn growth_sum_g(x: &[f64], s: &[f64], psi: &[f64], kin: &dyn Kinetics) -> f64 {
    let n = x.len();
    let mut rm = vec![0.0; n];
    let mut ri = vec![0.0; n];
    kin.sessile_growth(x, s, &mut rm);
    kin.invasion_growth(psi, s, &mut ri);
    rm.iter().zip(&ri).map(|(a, b)| a + b).sum()
}

/// `F_i = rho_i r_M,i + rho_i r_i - X_i G`, evaluated without clamping.
pub fn transport_rhs_f(x: &[f64], s: &[f64], psi: &[f64], kin: &dyn Kinetics, params: &ModelParameters) -> Vec<f64> {
    let n = x.len();
    let mut rm = vec![0.0; n];
    let mut ri = vec![0.0; n];
    kin.sessile_growth(x, s, &mut rm);
    kin.invasion_growth(psi, s, &mut ri);
    let g: f64 = rm.iter().zip(&ri).map(|(a, b)| a + b).sum();
    (0..n).map(|i| params.rho[i] * (rm[i] + ri[i]) - x[i] * g).collect()
}

/// Volume fractions `f_i = X_i / rho_i`.
pub fn volume_fractions(x: &[f64], params: &ModelParameters) -> Vec<f64> {
    x.iter().zip(&params.rho).map(|(x, r)| x / r).collect()
}
