//! Free-boundary evolution and regime classification.

use serde::{Deserialize, Serialize};

use crate::bulk::BulkEnvironment;
use crate::error::{Error, Result};
use crate::model::{self, ModelParameters};

/// `AttachmentOnly`: `dR/dt = u(R) + sigma_a`. `General`: `dR/dt = u(R) + sigma_a - delta R^2`,
/// valid only while the boundary is space-like.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[default]
    AttachmentOnly,
    General,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    SpaceLike,
    TimeLike,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::SpaceLike => "space_like",
            Classification::TimeLike => "time_like",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeStatus {
    pub sigma_a: f64,
    pub sigma_d: f64,
    pub net_flux: f64,
    pub classification: Classification,
    /// `dR/dt`; equals `net_flux` until a boundary velocity is supplied via [`RegimeStatus::with_velocity`].
    pub boundary_speed: f64,
}

impl RegimeStatus {
    pub fn with_velocity(mut self, u_boundary: f64, regime: Regime) -> Self {
        self.boundary_speed = u_boundary + self.sigma_a
            - match regime {
                Regime::AttachmentOnly => 0.0,
                Regime::General => self.sigma_d,
            };
        self
    }
}

pub fn classify_regime(psi_star: &[f64], radius: f64, params: &ModelParameters) -> Result<RegimeStatus> {
    let sigma_a = model::sigma_a(psi_star, params)?;
    let sigma_d = model::sigma_d(radius, params);
    let net_flux = sigma_a - sigma_d;
    Ok(RegimeStatus {
        sigma_a,
        sigma_d,
        net_flux,
        classification: if net_flux > 0.0 {
            Classification::SpaceLike
        } else {
            Classification::TimeLike
        },
        boundary_speed: net_flux,
    })
}

/// Boundary flux entering `dR/dt` besides the biomass velocity.
pub fn boundary_flux(sigma_a: f64, radius: f64, params: &ModelParameters, regime: Regime) -> f64 {
    match regime {
        Regime::AttachmentOnly => sigma_a,
        Regime::General => sigma_a - model::sigma_d(radius, params),
    }
}

pub fn radius_rate(u_boundary: f64, sigma_a: f64, radius: f64, params: &ModelParameters, regime: Regime) -> f64 {
    u_boundary + boundary_flux(sigma_a, radius, params, regime)
}

/// Fails with [`Error::RegimeExit`] when the general regime has left the space-like domain.
pub fn check_regime(status: &RegimeStatus, regime: Regime, time: f64, radius: f64) -> Result<()> {
    if regime == Regime::General && status.net_flux <= 0.0 {
        return Err(Error::RegimeExit {
            time,
            radius,
            net_flux: status.net_flux,
        });
    }
    Ok(())
}

/// One Heun step of the radius ODE with boundary velocity `u(R, t)`.
pub fn radius_step(
    radius: f64,
    t: f64,
    dt: f64,
    bulk: &BulkEnvironment,
    params: &ModelParameters,
    regime: Regime,
    u: impl Fn(f64, f64) -> f64,
) -> Result<f64> {
    let psi0 = bulk.psi_star_at(t);
    let status = classify_regime(&psi0, radius, params)?;
    check_regime(&status, regime, t, radius)?;
    let k1 = radius_rate(u(radius, t), status.sigma_a, radius, params, regime);
    let predicted = radius + dt * k1;
    let sa1 = model::sigma_a(&bulk.psi_star_at(t + dt), params)?;
    let k2 = radius_rate(u(predicted, t + dt), sa1, predicted, params, regime);
    Ok(radius + 0.5 * dt * (k1 + k2))
}
