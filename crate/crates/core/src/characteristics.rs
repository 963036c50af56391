//! Lagrangian characteristic grid: biomass velocity by quadrature, Heun
//! advancement of characteristic positions and of the sessile concentrations
//! carried along them.
//!
//! Node `k` is the characteristic born at the free boundary at time `t0_k`.
//! Node 0 (`t0 = 0`) is the granule centre and stays at `c = 0`; the newest
//! node coincides with the boundary `R(t)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::NodeField;
use crate::kinetics::RateEvaluator;
use crate::model::ModelParameters;
use crate::quadrature::{self, PanelRule};

/// Which variables are time-advanced along a characteristic.
///
/// * `Direct`: `c` with `dc/dt = u`, and `c_t0` with `d c_t0/dt = c_t0 (G - 2u/c)`.
/// * `Cubic`: `c^3` with `d c^3/dt = 3 int_0^t0 c^2 G c_tau`, and `w = c^2 c_t0`
///   with `dw/dt = G w`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Direct,
    #[default]
    Cubic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CharacteristicGrid {
    t0: Vec<f64>,
    c: Vec<f64>,
    dc_dt0: Vec<f64>,
}

impl CharacteristicGrid {
    /// Grid at `t = 0`: the centre characteristic only.
    pub fn at_birth(dc_dt0: f64) -> Self {
        Self {
            t0: vec![0.0],
            c: vec![0.0],
            dc_dt0: vec![dc_dt0],
        }
    }

    /// Builds a grid from explicit arrays. `c[0]` must be 0 and `c` strictly increasing.
    pub fn from_parts(t0: Vec<f64>, c: Vec<f64>, dc_dt0: Vec<f64>) -> Result<Self> {
        if t0.is_empty() || t0.len() != c.len() || c.len() != dc_dt0.len() {
            return Err(Error::Config(
                "grid arrays must be non-empty and of equal length".into(),
            ));
        }
        if c[0] != 0.0 {
            return Err(Error::Config("centre characteristic must sit at c = 0".into()));
        }
        let g = Self { t0, c, dc_dt0 };
        g.check_monotone(f64::NAN)?;
        Ok(g)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn t0(&self) -> &[f64] {
        &self.t0
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }

    pub fn dc_dt0(&self) -> &[f64] {
        &self.dc_dt0
    }

    /// Position of the newest characteristic, i.e. the free boundary.
    pub fn radius(&self) -> f64 {
        *self.c.last().expect("grid is never empty")
    }

    /// Appends the characteristic born at the boundary at time `t0`.
    pub fn birth(&mut self, t0: f64, radius: f64, dc_dt0: f64) {
        self.t0.push(t0);
        self.c.push(radius);
        self.dc_dt0.push(dc_dt0);
    }

    /// Strict monotonicity of `c` in `t0` and positivity of `dc/dt0` off-centre.
    pub fn check_monotone(&self, time: f64) -> Result<()> {
        for k in 0..self.c.len().saturating_sub(1) {
            if !(self.c[k + 1] > self.c[k]) || !(self.dc_dt0[k + 1] > 0.0) {
                return Err(Error::CharacteristicCrossing { index: k, time });
            }
        }
        Ok(())
    }

    fn truncated(&self, len: usize) -> (&[f64], &[f64]) {
        (&self.c[..len], &self.dc_dt0[..len])
    }
}

/// Radius, grid and node fields at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct GranuleState {
    pub t: f64,
    pub grid: CharacteristicGrid,
    /// Sessile concentrations, `n` per node.
    pub x: NodeField,
    /// Substrate concentrations, `m` per node.
    pub s: NodeField,
    /// Planktonic concentrations, `n` per node.
    pub psi: NodeField,
}

impl GranuleState {
    pub fn radius(&self) -> f64 {
        self.grid.radius()
    }

    /// `max_k |sum_i x_ik / rho_i - 1|`.
    pub fn simplex_drift(&self, params: &ModelParameters) -> f64 {
        self.x
            .rows()
            .map(|row| (row.iter().zip(&params.rho).map(|(x, r)| x / r).sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Growth `G` and transport right-hand side `F` at every node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeRates {
    pub g: Vec<f64>,
    pub f: NodeField,
}

pub fn node_rates(state: &GranuleState, eval: &RateEvaluator) -> NodeRates {
    let nodes = state.grid.len();
    let n = state.x.width();
    let mut f = NodeField::filled(nodes, &vec![0.0; n]);
    let g = (0..nodes)
        .map(|k| eval.growth_and_transport(state.x.row(k), state.s.row(k), state.psi.row(k), f.row_mut(k)))
        .collect();
    NodeRates { g, f }
}

/// Velocity field sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    /// `int_0^{t0_k} c^2 G c_tau dtau`.
    pub moments: Vec<f64>,
    /// `u(c_k, t)`; exactly 0 at the centre.
    pub u: Vec<f64>,
}

pub fn velocities(grid: &CharacteristicGrid, g: &[f64], rule: PanelRule) -> Velocity {
    let k = grid.len();
    let mut moments = vec![0.0; k];
    let mut u = vec![0.0; k];
    quadrature::cubic_moments(grid.c(), g, rule, &mut moments);
    quadrature::radial_means(grid.c(), &moments, g, &mut u);
    Velocity { moments, u }
}

/// `u(c_k, t) = (1/c_k^2) int_0^{t0_k} c^2 G c_tau dtau`; 0 at the centre.
pub fn velocity_at(grid: &CharacteristicGrid, g: &[f64], k: usize, rule: PanelRule) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    if grid.c()[k] <= 0.0 {
        return Err(Error::DegenerateGrid { index: k });
    }
    let sub = CharacteristicGrid {
        t0: grid.t0[..=k].to_vec(),
        c: grid.c[..=k].to_vec(),
        dc_dt0: grid.dc_dt0[..=k].to_vec(),
    };
    Ok(*velocities(&sub, &g[..=k], rule).u.last().unwrap())
}

/// `du/dr` at the centre, `G(0, t) / 3`.
pub fn centre_velocity_gradient(g_centre: f64) -> f64 {
    g_centre / 3.0
}

/// Rate of the advanced position variable and of the advanced slope variable.
fn variable_rates(c: &[f64], dc_dt0: &[f64], g: &[f64], vel: &Velocity, form: Formulation) -> (Vec<f64>, Vec<f64>) {
    let len = c.len();
    let mut pos = vec![0.0; len];
    let mut slope = vec![0.0; len];
    for k in 0..len {
        // du/dr along the characteristic; G/3 in the centre limit
        let dudr = if c[k] > 0.0 {
            g[k] - 2.0 * vel.u[k] / c[k]
        } else {
            centre_velocity_gradient(g[k])
        };
        match form {
            Formulation::Direct => {
                pos[k] = vel.u[k];
                slope[k] = dc_dt0[k] * dudr;
            }
            Formulation::Cubic => {
                pos[k] = 3.0 * vel.moments[k];
                slope[k] = if k == 0 {
                    dc_dt0[k] * dudr
                } else {
                    g[k] * c[k] * c[k] * dc_dt0[k]
                };
            }
        }
    }
    (pos, slope)
}

fn position_var(c: f64, form: Formulation) -> f64 {
    match form {
        Formulation::Direct => c,
        Formulation::Cubic => c * c * c,
    }
}

fn slope_var(k: usize, c: f64, dc_dt0: f64, form: Formulation) -> f64 {
    match form {
        Formulation::Cubic if k > 0 => c * c * dc_dt0,
        _ => dc_dt0,
    }
}

/// Moves every existing characteristic over one step.
///
/// With `pred = None` this is the explicit Euler predictor; with the
/// predicted grid and its rates it is the Heun corrector. The centre stays at
/// 0. Newborn nodes are appended by the caller via [`CharacteristicGrid::birth`].
pub fn advance(
    grid: &CharacteristicGrid,
    g: &[f64],
    vel: &Velocity,
    pred: Option<(&CharacteristicGrid, &[f64], &Velocity)>,
    dt: f64,
    form: Formulation,
) -> CharacteristicGrid {
    let len = grid.len();
    let (rp0, rs0) = variable_rates(grid.c(), grid.dc_dt0(), g, vel, form);
    let rates1 = pred.map(|(pg, pgv, pv)| {
        let (c, d) = pg.truncated(len);
        variable_rates(c, d, &pgv[..len], pv, form)
    });
    let mut out = grid.clone();
    for k in 0..len {
        let (dp, ds) = match &rates1 {
            None => (rp0[k], rs0[k]),
            Some((rp1, rs1)) => (0.5 * (rp0[k] + rp1[k]), 0.5 * (rs0[k] + rs1[k])),
        };
        let p = position_var(grid.c[k], form) + dt * dp;
        let sv = slope_var(k, grid.c[k], grid.dc_dt0[k], form) + dt * ds;
        let c = if k == 0 {
            0.0
        } else {
            match form {
                Formulation::Direct => p,
                Formulation::Cubic => p.cbrt(),
            }
        };
        out.c[k] = c;
        out.dc_dt0[k] = match form {
            Formulation::Cubic if k > 0 => sv / (c * c),
            _ => sv,
        };
    }
    out
}

/// Heun/Euler update of the sessile concentrations along each characteristic,
/// `dX_i/dt = F_i`. The centre obeys the same ODE (the apparent `1/r`
/// singularity cancels there).
pub fn advance_sessile(
    x: &NodeField,
    f_now: &NodeField,
    f_pred: Option<&NodeField>,
    dt: f64,
    params: &ModelParameters,
) -> Result<NodeField> {
    let mut out = x.clone();
    for k in 0..x.nodes() {
        let row = out.row_mut(k);
        for i in 0..row.len() {
            let rate = match f_pred {
                None => f_now.row(k)[i],
                Some(fp) => 0.5 * (f_now.row(k)[i] + fp.row(k)[i]),
            };
            let v = row[i] + dt * rate;
            let tol = 1e-9 * params.rho[i];
            if v < -tol || v > params.rho[i] + tol {
                return Err(Error::StateBound {
                    node: k,
                    species: i,
                    value: v,
                });
            }
            row[i] = v;
        }
    }
    Ok(out)
}
