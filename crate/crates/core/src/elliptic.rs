//! Quasi-static spherical reaction-diffusion problems for substrates and
//! planktonic species at one time level,
//!
//! ```text
//! -D (1/r^2) (r^2 y')' = r(y),   y'(0) = 0,   y(R) = y*,
//! ```
//!
//! solved in characteristic coordinates through the nested-integral form
//! `y(c_k) = y* + (1/D) int_{c_k}^R (1/c^2) int_0^c r^2 r(y) dr dc` with a
//! damped fixed-point loop, plus an independent finite-volume oracle.

use serde::{Deserialize, Serialize};

use crate::characteristics::CharacteristicGrid;
use crate::error::{Error, Result};
use crate::field::NodeField;
use crate::kinetics::RateEvaluator;
use crate::model::ModelParameters;
use crate::quadrature::{self, PanelRule};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipticSettings {
    pub damping: f64,
    /// Relative tolerance on the max-norm successive difference.
    pub tolerance: f64,
    pub max_iter: usize,
    #[serde(skip)]
    pub rule: PanelRule,
}

impl Default for EllipticSettings {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-8,
            max_iter: 200,
            rule: PanelRule::TRAPEZOID,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EllipticSolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub clamped: u64,
}

/// One application of the nested-integral map to a single component:
/// `out_k = boundary + (1/D) int_{c_k}^{c_K} (1/c^2) int_0^c r^2 rate dr dc`.
pub fn integral_map(c: &[f64], rate: &[f64], boundary: f64, diffusivity: f64, rule: PanelRule, out: &mut [f64]) {
    let len = c.len();
    let mut moments = vec![0.0; len];
    let mut h = vec![0.0; len];
    quadrature::cubic_moments(c, rate, rule, &mut moments);
    quadrature::radial_means(c, &moments, rate, &mut h);
    quadrature::integrate_to_boundary(c, &h, boundary, 1.0 / diffusivity, rule, out);
}

/// Damped fixed-point solve of the coupled nested-integral system.
/// `rates(k, y_row, out)` evaluates the reaction at node `k`.
fn fixed_point(
    c: &[f64],
    prev: &NodeField,
    boundary: &[f64],
    diffusivity: &[f64],
    settings: &EllipticSettings,
    solver: &'static str,
    rates: impl Fn(usize, &[f64], &mut [f64]),
) -> Result<(NodeField, EllipticSolveReport)> {
    let nodes = c.len();
    let width = boundary.len();
    if nodes < 3 {
        return Ok((NodeField::filled(nodes, boundary), EllipticSolveReport::default()));
    }
    let mut y = prev.clone();
    if y.nodes() != nodes || y.width() != width {
        y = NodeField::filled(nodes, boundary);
    }
    let scale = boundary
        .iter()
        .fold(0.0f64, |a, b| a.max(b.abs()))
        .max(f64::MIN_POSITIVE);
    let mut omega = settings.damping;
    let mut history = Vec::new();
    let mut rate = NodeField::filled(nodes, &vec![0.0; width]);
    let mut column = vec![0.0; nodes];
    let mut mapped = vec![0.0; nodes];
    let mut image = y.clone();
    let mut best = f64::INFINITY;
    let mut rising = 0;
    for iter in 1..=settings.max_iter {
        for k in 0..nodes {
            rates(k, y.row(k), rate.row_mut(k));
        }
        for j in 0..width {
            for k in 0..nodes {
                column[k] = rate.row(k)[j];
            }
            integral_map(c, &column, boundary[j], diffusivity[j], settings.rule, &mut mapped);
            for k in 0..nodes {
                image.row_mut(k)[j] = mapped[k];
            }
        }
        let rel = image.max_abs_diff(&y) / scale;
        history.push(rel);
        if !rel.is_finite() {
            break;
        }
        if rel <= settings.tolerance {
            let report = EllipticSolveReport {
                iterations: iter,
                residual: rel,
                clamped: 0,
            };
            return Ok((image, report));
        }
        // back off the damping when the residual keeps growing
        if rel < best {
            best = rel;
            rising = 0;
        } else {
            rising += 1;
            if rising >= 3 && omega > 1.0 / 64.0 {
                omega *= 0.5;
                rising = 0;
            }
        }
        for (v, m) in y.as_mut_slice().iter_mut().zip(image.as_slice()) {
            *v += omega * (m - *v);
        }
    }
    Err(Error::NonConvergence {
        solver,
        iterations: history.len(),
        residual_history: history,
    })
}

/// Substrate profiles on the grid for sessile state `x` and bulk values `s_star`.
pub fn solve_substrates(
    grid: &CharacteristicGrid,
    x: &NodeField,
    s_prev: &NodeField,
    s_star: &[f64],
    eval: &RateEvaluator,
    params: &ModelParameters,
    settings: &EllipticSettings,
) -> Result<(NodeField, EllipticSolveReport)> {
    let before = eval.clamp_count();
    let (s, mut report) = fixed_point(
        grid.c(),
        s_prev,
        s_star,
        &params.d_s,
        settings,
        "elliptic substrates",
        |k, s, out| eval.substrate_conversion(x.row(k), s, out),
    )?;
    report.clamped = eval.clamp_count() - before;
    Ok((s, report))
}

/// Planktonic profiles on the grid for substrate state `s` and bulk values `psi_star`.
pub fn solve_planktonic(
    grid: &CharacteristicGrid,
    psi_prev: &NodeField,
    s: &NodeField,
    psi_star: &[f64],
    eval: &RateEvaluator,
    params: &ModelParameters,
    settings: &EllipticSettings,
) -> Result<(NodeField, EllipticSolveReport)> {
    let before = eval.clamp_count();
    let (psi, mut report) = fixed_point(
        grid.c(),
        psi_prev,
        psi_star,
        &params.d_psi,
        settings,
        "elliptic planktonic",
        |k, psi, out| eval.planktonic_conversion(psi, s.row(k), out),
    )?;
    report.clamped = eval.clamp_count() - before;
    Ok((psi, report))
}

/// Radial profile on the uniform oracle mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleProfile {
    pub r: Vec<f64>,
    pub y: Vec<f64>,
}

impl OracleProfile {
    /// Piecewise-linear interpolation at radius `r`.
    pub fn at(&self, r: f64) -> f64 {
        let n = self.r.len() - 1;
        let h = self.r[n] / n as f64;
        let i = ((r / h).floor() as usize).min(n - 1);
        let w = (r - self.r[i]) / h;
        (1.0 - w) * self.y[i] + w * self.y[i + 1]
    }
}

fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    let mut cp = vec![0.0; n];
    let mut b = diag[0];
    cp[0] = upper[0] / b;
    rhs[0] /= b;
    for i in 1..n {
        b = diag[i] - lower[i] * cp[i - 1];
        cp[i] = if i + 1 < n { upper[i] / b } else { 0.0 };
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / b;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= cp[i] * rhs[i + 1];
    }
}

/// Conservative finite-volume solution of `-D (1/r^2)(r^2 y')' = f(y, r)` with
/// `y'(0) = 0`, `y(R) = dirichlet` on `cells` uniform cells, by damped Newton
/// with a numerical `df/dy`.
pub fn fd_oracle(
    cells: usize,
    radius: f64,
    f: impl Fn(f64, f64) -> f64,
    diffusivity: f64,
    dirichlet: f64,
) -> Result<OracleProfile> {
    if !(radius > 0.0) || cells < 2 {
        return Err(Error::Oracle(format!(
            "invalid oracle mesh: R = {radius}, cells = {cells}"
        )));
    }
    let h = radius / cells as f64;
    let r: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
    // unknowns y_0..y_{N-1}; y_N is the Dirichlet value
    let n = cells;
    let face = |i: usize| -> f64 {
        let rf = (i as f64 + 0.5) * h;
        diffusivity * rf * rf / h
    };
    let volume = |i: usize| -> f64 {
        let lo = if i == 0 { 0.0 } else { r[i] - 0.5 * h };
        let hi = r[i] + 0.5 * h;
        (hi * hi * hi - lo * lo * lo) / 3.0
    };
    let residual = |y: &[f64], out: &mut [f64]| -> f64 {
        let mut norm: f64 = 0.0;
        for i in 0..n {
            let right = if i + 1 < n { y[i + 1] } else { dirichlet };
            let mut flux = face(i) * (y[i] - right);
            if i > 0 {
                flux += face(i - 1) * (y[i] - y[i - 1]);
            }
            out[i] = flux - volume(i) * f(y[i], r[i]);
            norm = norm.max(out[i].abs());
        }
        norm
    };
    let mut y = vec![dirichlet; n];
    let mut res = vec![0.0; n];
    let mut norm = residual(&y, &mut res);
    let scale = dirichlet.abs().max(1.0);
    for _ in 0..100 {
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            let eps = 1e-7 * y[i].abs().max(1e-3 * scale);
            let dfdy = (f(y[i] + eps, r[i]) - f(y[i] - eps, r[i])) / (2.0 * eps);
            diag[i] = face(i) + if i > 0 { face(i - 1) } else { 0.0 } - volume(i) * dfdy;
            if i > 0 {
                lower[i] = -face(i - 1);
            }
            if i + 1 < n {
                upper[i] = -face(i);
            }
        }
        let mut step: Vec<f64> = res.iter().map(|v| -v).collect();
        thomas(&lower, &diag, &upper, &mut step);
        let mut lambda = 1.0;
        let mut trial = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        loop {
            for i in 0..n {
                trial[i] = y[i] + lambda * step[i];
            }
            let tn = residual(&trial, &mut trial_res);
            if tn <= norm || lambda < 1e-4 {
                break;
            }
            lambda *= 0.5;
        }
        let change = step.iter().fold(0.0f64, |a, s| a.max((lambda * s).abs()));
        std::mem::swap(&mut y, &mut trial);
        std::mem::swap(&mut res, &mut trial_res);
        norm = residual(&y, &mut res);
        if !change.is_finite() {
            break;
        }
        if change <= 1e-13 * scale {
            let mut full = y;
            full.push(dirichlet);
            return Ok(OracleProfile { r, y: full });
        }
    }
    Err(Error::Oracle(format!(
        "finite-volume Newton did not converge (residual {norm:e})"
    )))
}
