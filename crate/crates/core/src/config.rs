//! Serializable run configuration.

use serde::{Deserialize, Serialize};

use crate::bulk::BulkEnvironment;
use crate::characteristics::Formulation;
use crate::elliptic::EllipticSettings;
use crate::error::{Error, Result};
use crate::freeboundary::Regime;
use crate::kinetics::{Affine, AffineKinetics, Kinetics, MonodKinetics};
use crate::model::ModelParameters;
use crate::picard::{ContractionSettings, HBox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Free-text description of the unit system; not interpreted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    pub params: ModelParameters,
    pub bulk: BulkEnvironment,
    pub kinetics: KineticsConfig,
    pub numerics: Numerics,
    #[serde(default)]
    pub contraction: ContractionConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// `model = "monod" | "affine" | "zero"`. Substrate indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum KineticsConfig {
    Monod {
        mu_max: Vec<f64>,
        half_saturation: Vec<f64>,
        /// Growth-limiting substrate of each species; defaults to substrate 1.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        limiting_substrate: Option<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        colonization: Option<Vec<f64>>,
        /// `yields[j][i]`, an `m x n` matrix.
        yields: Vec<Vec<f64>>,
    },
    Affine {
        #[serde(default)]
        sessile: AffineConfig,
        #[serde(default)]
        invasion: AffineConfig,
        #[serde(default)]
        substrate: AffineConfig,
        #[serde(default)]
        planktonic: AffineConfig,
    },
    Zero,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AffineConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<Vec<f64>>,
}

impl AffineConfig {
    fn build(&self, len: usize) -> Affine {
        Affine {
            offset: self.offset.clone().unwrap_or_else(|| vec![0.0; len]),
            slope: self.slope.clone().unwrap_or_else(|| vec![0.0; len]),
        }
    }
}

impl KineticsConfig {
    pub fn build(&self, params: &ModelParameters) -> Result<Box<dyn Kinetics>> {
        let (n, m) = (params.n, params.m);
        match self {
            KineticsConfig::Monod {
                mu_max,
                half_saturation,
                limiting_substrate,
                colonization,
                yields,
            } => {
                let limiting = match limiting_substrate {
                    None => vec![0; n],
                    Some(v) => {
                        if v.iter().any(|&a| a == 0 || a > m) {
                            return Err(Error::Config(format!(
                                "kinetics.limiting_substrate entries must be in 1..={m}"
                            )));
                        }
                        v.iter().map(|a| a - 1).collect()
                    }
                };
                let k = MonodKinetics {
                    rho: params.rho.clone(),
                    mu_max: mu_max.clone(),
                    half_saturation: half_saturation.clone(),
                    limiting_substrate: limiting,
                    colonization: colonization.clone().unwrap_or_else(|| vec![0.0; n]),
                    yields: yields.clone(),
                };
                k.validate()?;
                if k.yields.len() != m {
                    return Err(Error::Config(format!("kinetics.yields must have m = {m} rows")));
                }
                Ok(Box::new(k))
            }
            KineticsConfig::Affine {
                sessile,
                invasion,
                substrate,
                planktonic,
            } => {
                let k = AffineKinetics {
                    rho: params.rho.clone(),
                    sessile: sessile.build(n),
                    invasion: invasion.build(n),
                    substrate: substrate.build(m),
                    planktonic: planktonic.build(n),
                };
                k.validate()?;
                if k.substrate.offset.len() != m {
                    return Err(Error::Config(format!("kinetics.substrate must have m = {m} entries")));
                }
                Ok(Box::new(k))
            }
            KineticsConfig::Zero => Ok(Box::new(AffineKinetics::zero(&params.rho, m))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Numerics {
    pub dt: f64,
    /// Final time `T`; must be an integer multiple of `dt`.
    pub horizon: f64,
    #[serde(default)]
    pub formulation: Formulation,
    #[serde(default)]
    pub regime: Regime,
    #[serde(default)]
    pub elliptic: EllipticSettings,
    #[serde(default = "default_intervals")]
    pub picard_intervals: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    #[serde(default = "default_picard_iter")]
    pub picard_max_iter: usize,
    /// Run the Picard iteration even when the contraction is not certified.
    #[serde(default)]
    pub override_certification: bool,
}

fn default_intervals() -> usize {
    128
}

fn default_picard_tol() -> f64 {
    1e-10
}

fn default_picard_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionConfig {
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Interval on which bounds are sampled; defaults to the horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1: Option<f64>,
    /// Explicit h-box; defaults to half of each reference scale.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<HBox>,
}

impl Default for ContractionConfig {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            seed: default_seed(),
            t1: None,
            h: None,
        }
    }
}

impl ContractionConfig {
    pub fn settings(&self) -> ContractionSettings {
        ContractionSettings {
            samples: self.samples,
            seed: self.seed,
        }
    }
}

fn default_samples() -> usize {
    ContractionSettings::default().samples
}

fn default_seed() -> u64 {
    ContractionSettings::default().seed
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        p.validate()?;
        self.bulk.validate(p.n, p.m)?;
        self.kinetics.build(p)?;
        let nm = &self.numerics;
        let bad = |m: String| Err(Error::Config(m));
        if !(nm.dt > 0.0 && nm.dt.is_finite()) {
            return bad(format!("numerics.dt must be > 0 (got {})", nm.dt));
        }
        if !(nm.horizon > 0.0 && nm.horizon.is_finite()) {
            return bad(format!("numerics.horizon must be > 0 (got {})", nm.horizon));
        }
        let ratio = nm.horizon / nm.dt;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return bad(format!(
                "numerics.horizon ({}) must be an integer multiple of dt ({})",
                nm.horizon, nm.dt
            ));
        }
        let e = &nm.elliptic;
        if !(e.damping > 0.0 && e.damping <= 1.0) || !(e.tolerance > 0.0) || e.max_iter == 0 {
            return bad("numerics.elliptic: need 0 < damping <= 1, tolerance > 0, max_iter >= 1".into());
        }
        if nm.picard_intervals < 2 || !(nm.picard_tol > 0.0) || nm.picard_max_iter == 0 {
            return bad("numerics: need picard_intervals >= 2, picard_tol > 0, picard_max_iter >= 1".into());
        }
        for &t in &self.output.snapshots {
            if !(0.0..=nm.horizon).contains(&t) {
                return bad(format!("output.snapshots: {t} outside [0, {}]", nm.horizon));
            }
        }
        if self.contraction.samples < 2 {
            return bad("contraction.samples must be >= 2".into());
        }
        if let Some(t1) = self.contraction.t1 {
            if !(t1 > 0.0) {
                return bad("contraction.t1 must be > 0".into());
            }
        }
        if let Some(h) = &self.contraction.h {
            if h.h_x.len() != p.n || h.h_s.len() != p.m || h.h_psi.len() != p.n {
                return bad("contraction.h: h_x, h_s, h_psi must have lengths n, m, n".into());
            }
        }
        Ok(())
    }

    /// Number of marching steps, `horizon / dt`.
    pub fn steps(&self) -> usize {
        (self.numerics.horizon / self.numerics.dt).round() as usize
    }
}
