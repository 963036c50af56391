//! Node-sampled quadrature in characteristic coordinates.
//!
//! Every integral of the model over a time level has the shape
//! `int_0^{t0} c^2(tau) v(tau) dc/dtau dtau`, i.e. `int v d(c^3/3)`. The rules
//! here apply the composite trapezoid to the rate factor `v` and integrate the
//! spherical Jacobian `c^2 dc/dtau` exactly on each panel, which makes them
//! exact for constant `v` and keeps the `1/c^2` prefactors bounded at the
//! granule centre.

/// Weights of the two-point panel rule. `TRAPEZOID` is the production rule;
/// other weights exist for fault-injection tests.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PanelRule {
    pub left: f64,
    pub right: f64,
}

impl PanelRule {
    pub const TRAPEZOID: PanelRule = PanelRule { left: 0.5, right: 0.5 };

    #[inline]
    pub fn apply(&self, a: f64, b: f64) -> f64 {
        self.left * a + self.right * b
    }
}

impl Default for PanelRule {
    fn default() -> Self {
        Self::TRAPEZOID
    }
}

/// Nodes with `c < NEAR_CENTRE * c_max` use the Taylor limit `J/c^2 = v c / 3`.
pub const NEAR_CENTRE: f64 = 1e-6;

/// Plain composite trapezoid over (possibly non-uniform) abscissae.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Running trapezoid integral `out[k] = int_{x_0}^{x_k} y`.
pub fn cumulative_trapezoid(x: &[f64], y: &[f64], out: &mut [f64]) {
    let mut acc = 0.0;
    out[0] = 0.0;
    for k in 1..x.len() {
        acc += 0.5 * (x[k] - x[k - 1]) * (y[k] + y[k - 1]);
        out[k] = acc;
    }
}

/// `out[k] = int_0^{t0_k} c^2 v dc/dtau dtau`, accumulated panel by panel as
/// `rule(v_l, v_{l+1}) * (c_{l+1}^3 - c_l^3) / 3`.
pub fn cubic_moments(c: &[f64], v: &[f64], rule: PanelRule, out: &mut [f64]) {
    debug_assert!(c.len() == v.len() && out.len() == c.len());
    if c.is_empty() {
        return;
    }
    let mut acc = 0.0;
    out[0] = 0.0;
    let mut c3_prev = c[0] * c[0] * c[0];
    for k in 1..c.len() {
        let c3 = c[k] * c[k] * c[k];
        acc += rule.apply(v[k - 1], v[k]) * (c3 - c3_prev) / 3.0;
        out[k] = acc;
        c3_prev = c3;
    }
}

/// `out[k] = moments[k] / c_k^2`, the radial mean `(1/c^2) int_0^c r^2 v dr`.
/// Zero at the centre; Taylor limit `v_k c_k / 3` for near-centre nodes.
pub fn radial_means(c: &[f64], moments: &[f64], v: &[f64], out: &mut [f64]) {
    let c_max = c.last().copied().unwrap_or(0.0);
    for k in 0..c.len() {
        out[k] = if c[k] <= 0.0 {
            0.0
        } else if c[k] < NEAR_CENTRE * c_max {
            v[k] * c[k] / 3.0
        } else {
            moments[k] / (c[k] * c[k])
        };
    }
}

/// `out[k] = boundary + scale * int_{c_k}^{c_K} h dc` by trapezoid in `c`,
/// accumulated inward from the last node.
pub fn integrate_to_boundary(c: &[f64], h: &[f64], boundary: f64, scale: f64, rule: PanelRule, out: &mut [f64]) {
    let k_last = c.len() - 1;
    let mut acc = 0.0;
    out[k_last] = boundary;
    for k in (0..k_last).rev() {
        acc += rule.apply(h[k], h[k + 1]) * (c[k + 1] - c[k]);
        out[k] = boundary + scale * acc;
    }
}
