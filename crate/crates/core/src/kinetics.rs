//! Reaction-rate interface and the shipped kinetics models.
//!
//! A [`Kinetics`] supplies four rate families:
//!
//! * `r_M,i(X, S)`   specific growth of sessile species `i` (1/time),
//! * `r_i(Psi, S)`   specific growth of sessile species `i` fed by invading planktonic cells,
//! * `r_S,j(X, S)`   conversion of substrate `j` (mass/volume/time, negative = consumption),
//! * `r_Psi,i(Psi, S)` conversion of planktonic species `i` (negative = loss to the sessile phase).
//!
//! Implementations must be pure. Solvers never call a model directly; they go
//! through [`RateEvaluator`], which clamps arguments to the [`AdmissibleBox`]
//! and counts clamping events.

use std::fmt::Debug;
use std::sync::atomic::{AtomicU64, Ordering};

use smallvec::SmallVec;

use crate::bulk::BulkEnvironment;
use crate::error::{Error, Result};
use crate::model::ModelParameters;

pub type Buf = SmallVec<[f64; 8]>;

pub trait Kinetics: Send + Sync + Debug {
    fn species(&self) -> usize;
    fn substrates(&self) -> usize;

    fn sessile_growth(&self, x: &[f64], s: &[f64], out: &mut [f64]);
    fn invasion_growth(&self, psi: &[f64], s: &[f64], out: &mut [f64]);
    fn substrate_conversion(&self, x: &[f64], s: &[f64], out: &mut [f64]);
    fn planktonic_conversion(&self, psi: &[f64], s: &[f64], out: &mut [f64]);

    /// Documented sup-norm bound and Lipschitz constant (w.r.t. the l1 norm of
    /// the arguments) of every rate on `admissible`, when known in closed form.
    fn rate_bounds(&self, _admissible: &AdmissibleBox) -> Option<RateBounds> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub max: f64,
    pub lipschitz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateBounds {
    pub sessile: Vec<Bound>,
    pub invasion: Vec<Bound>,
    pub substrate: Vec<Bound>,
    pub planktonic: Vec<Bound>,
}

/// `x in [0, max rho]`, `s in [0, max_t S*]`, `psi in [0, max_t Psi*]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleBox {
    pub x_max: f64,
    pub s_max: Vec<f64>,
    pub psi_max: Vec<f64>,
}

impl AdmissibleBox {
    pub fn new(params: &ModelParameters, bulk: &BulkEnvironment) -> Self {
        Self {
            x_max: params.rho.iter().copied().fold(0.0, f64::max),
            s_max: bulk.s_star_max(),
            psi_max: bulk.psi_star_max(),
        }
    }
}

fn clamp_into(values: &[f64], hi: impl Fn(usize) -> f64, out: &mut Buf) -> bool {
    out.clear();
    let mut clamped = false;
    for (k, &v) in values.iter().enumerate() {
        let h = hi(k);
        let slack = 1e-9 * h.max(1e-300);
        if v < -slack || v > h + slack {
            clamped = true;
        }
        out.push(v.clamp(0.0, h));
    }
    clamped
}

/// Clamping front-end over a [`Kinetics`] model.
#[derive(Debug)]
pub struct RateEvaluator<'a> {
    kinetics: &'a dyn Kinetics,
    rho: &'a [f64],
    admissible: AdmissibleBox,
    clamps: AtomicU64,
}

impl<'a> RateEvaluator<'a> {
    pub fn new(kinetics: &'a dyn Kinetics, params: &'a ModelParameters, admissible: AdmissibleBox) -> Self {
        Self {
            kinetics,
            rho: &params.rho,
            admissible,
            clamps: AtomicU64::new(0),
        }
    }

    pub fn species(&self) -> usize {
        self.rho.len()
    }

    pub fn substrates(&self) -> usize {
        self.admissible.s_max.len()
    }

    pub fn kinetics(&self) -> &dyn Kinetics {
        self.kinetics
    }

    pub fn admissible(&self) -> &AdmissibleBox {
        &self.admissible
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps.load(Ordering::Relaxed)
    }

    fn note(&self, clamped: bool) {
        if clamped {
            self.clamps.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn clamp_x(&self, x: &[f64], out: &mut Buf) {
        let hi = self.admissible.x_max;
        self.note(clamp_into(x, |_| hi, out));
    }

    fn clamp_s(&self, s: &[f64], out: &mut Buf) {
        self.note(clamp_into(s, |j| self.admissible.s_max[j], out));
    }

    fn clamp_psi(&self, psi: &[f64], out: &mut Buf) {
        self.note(clamp_into(psi, |i| self.admissible.psi_max[i], out));
    }

    /// Returns `G = sum_i (r_M,i + r_i)` and writes
    /// `F_i = rho_i r_M,i + rho_i r_i - X_i G` into `f`. The `-X_i G` term uses
    /// the unclamped `x` so the simplex identity holds exactly.
    pub fn growth_and_transport(&self, x: &[f64], s: &[f64], psi: &[f64], f: &mut [f64]) -> f64 {
        let n = x.len();
        let (mut xc, mut sc, mut pc) = (Buf::new(), Buf::new(), Buf::new());
        self.clamp_x(x, &mut xc);
        self.clamp_s(s, &mut sc);
        self.clamp_psi(psi, &mut pc);
        let mut rm: Buf = SmallVec::from_elem(0.0, n);
        let mut ri: Buf = SmallVec::from_elem(0.0, n);
        self.kinetics.sessile_growth(&xc, &sc, &mut rm);
        self.kinetics.invasion_growth(&pc, &sc, &mut ri);
        let g: f64 = rm.iter().zip(&ri).map(|(a, b)| a + b).sum();
        for i in 0..n {
            f[i] = self.rho[i] * (rm[i] + ri[i]) - x[i] * g;
        }
        g
    }

    pub fn growth(&self, x: &[f64], s: &[f64], psi: &[f64]) -> f64 {
        let mut f: Buf = SmallVec::from_elem(0.0, x.len());
        self.growth_and_transport(x, s, psi, &mut f)
    }

    pub fn substrate_conversion(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        let (mut xc, mut sc) = (Buf::new(), Buf::new());
        self.clamp_x(x, &mut xc);
        self.clamp_s(s, &mut sc);
        self.kinetics.substrate_conversion(&xc, &sc, out);
    }

    pub fn planktonic_conversion(&self, psi: &[f64], s: &[f64], out: &mut [f64]) {
        let (mut pc, mut sc) = (Buf::new(), Buf::new());
        self.clamp_psi(psi, &mut pc);
        self.clamp_s(s, &mut sc);
        self.kinetics.planktonic_conversion(&pc, &sc, out);
    }
}

fn monod(s: f64, k: f64) -> f64 {
    let d = k + s;
    if d > 0.0 {
        s / d
    } else {
        0.0
    }
}

/// Reference Monod model.
///
/// ```text
/// r_M,i   =  mu_i   * S_a(i) / (K_i + S_a(i)) * X_i / rho_i
/// r_i     =  kcol_i * S_a(i) / (K_i + S_a(i)) * Psi_i / rho_i
/// r_S,j   = -sum_i Y_ji * mu_i * S_j / (K_i + S_j) * X_i
/// r_Psi,i = -kcol_i * S_a(i) / (K_i + S_a(i)) * Psi_i
/// ```
///
/// `a(i)` is the growth-limiting substrate of species `i`. All rates vanish
/// with their own biomass argument.
#[derive(Debug, Clone, PartialEq)]
pub struct MonodKinetics {
    pub rho: Vec<f64>,
    pub mu_max: Vec<f64>,
    pub half_saturation: Vec<f64>,
    pub limiting_substrate: Vec<usize>,
    pub colonization: Vec<f64>,
    /// `yields[j][i]`, substrate `j` per unit growth of species `i`.
    pub yields: Vec<Vec<f64>>,
}

impl MonodKinetics {
    pub fn validate(&self) -> Result<()> {
        let n = self.rho.len();
        let m = self.yields.len();
        let bad = |what: &str| Err(Error::Config(format!("monod kinetics: {what}")));
        if self.mu_max.len() != n
            || self.half_saturation.len() != n
            || self.limiting_substrate.len() != n
            || self.colonization.len() != n
        {
            return bad("per-species arrays must all have length n");
        }
        if m == 0 || self.yields.iter().any(|row| row.len() != n) {
            return bad("yields must be an m x n matrix with m >= 1");
        }
        if self.limiting_substrate.iter().any(|&a| a >= m) {
            return bad("limiting substrate index out of range");
        }
        let all = self
            .mu_max
            .iter()
            .chain(&self.half_saturation)
            .chain(&self.colonization)
            .chain(self.yields.iter().flatten());
        for v in all {
            if !v.is_finite() || *v < 0.0 {
                return bad("coefficients must be finite and non-negative");
            }
        }
        Ok(())
    }

    fn saturation(&self, i: usize, s: &[f64]) -> f64 {
        monod(s[self.limiting_substrate[i]], self.half_saturation[i])
    }
}

impl Kinetics for MonodKinetics {
    fn species(&self) -> usize {
        self.rho.len()
    }

    fn substrates(&self) -> usize {
        self.yields.len()
    }

    fn sessile_growth(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = self.mu_max[i] * self.saturation(i, s) * (x[i] / self.rho[i]);
        }
    }

    fn invasion_growth(&self, psi: &[f64], s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = self.colonization[i] * self.saturation(i, s) * (psi[i] / self.rho[i]);
        }
    }

    fn substrate_conversion(&self, x: &[f64], s: &[f64], out: &mut [f64]) {
        for (j, row) in self.yields.iter().enumerate() {
            out[j] = -row
                .iter()
                .enumerate()
                .map(|(i, y)| y * self.mu_max[i] * monod(s[j], self.half_saturation[i]) * x[i])
                .sum::<f64>();
        }
    }

    fn planktonic_conversion(&self, psi: &[f64], s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = -self.colonization[i] * self.saturation(i, s) * psi[i];
        }
    }

    /// Bounds follow from `0 <= S/(K+S) <= Smax/(K+Smax)` and
    /// `d/dS [S/(K+S)] = K/(K+S)^2 <= 1/K`; each Lipschitz constant is the
    /// largest partial derivative over the box. `K = 0` gives an infinite
    /// constant (the Monod factor is a step).
    fn rate_bounds(&self, b: &AdmissibleBox) -> Option<RateBounds> {
        let n = self.rho.len();
        let inv_k = |k: f64| if k > 0.0 { 1.0 / k } else { f64::INFINITY };
        let sat_max = |i: usize, j: usize| monod(b.s_max[j], self.half_saturation[i]);
        let xm = b.x_max;

        let sessile = (0..n)
            .map(|i| {
                let a = self.limiting_substrate[i];
                let g = sat_max(i, a);
                let scale = self.mu_max[i] / self.rho[i];
                Bound {
                    max: scale * g * xm,
                    lipschitz: (scale * g).max(scale * xm * inv_k(self.half_saturation[i])),
                }
            })
            .collect();
        let invasion = (0..n)
            .map(|i| {
                let a = self.limiting_substrate[i];
                let g = sat_max(i, a);
                let scale = self.colonization[i] / self.rho[i];
                let pm = b.psi_max[i];
                Bound {
                    max: scale * g * pm,
                    lipschitz: (scale * g).max(scale * pm * inv_k(self.half_saturation[i])),
                }
            })
            .collect();
        let substrate = self
            .yields
            .iter()
            .enumerate()
            .map(|(j, row)| {
                let mut max = 0.0;
                let mut d_x: f64 = 0.0;
                let mut d_s = 0.0;
                for i in 0..n {
                    let coef = row[i] * self.mu_max[i];
                    if coef == 0.0 {
                        continue;
                    }
                    max += coef * sat_max(i, j) * xm;
                    d_x = d_x.max(coef * sat_max(i, j));
                    d_s += coef * xm * inv_k(self.half_saturation[i]);
                }
                Bound {
                    max,
                    lipschitz: d_x.max(d_s),
                }
            })
            .collect();
        let planktonic = (0..n)
            .map(|i| {
                let a = self.limiting_substrate[i];
                let g = sat_max(i, a);
                let k = self.colonization[i];
                let pm = b.psi_max[i];
                Bound {
                    max: k * g * pm,
                    lipschitz: (k * g).max(k * pm * inv_k(self.half_saturation[i])),
                }
            })
            .collect();
        Some(RateBounds {
            sessile,
            invasion,
            substrate,
            planktonic,
        })
    }
}

/// `offset + slope * argument` for each rate; the argument is the species'
/// own volume fraction `X_i/rho_i` for `r_M`, `Psi_i` for `r_i` and `r_Psi`,
/// and `S_j` for `r_S`. Constant and zero kinetics are special cases.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AffineKinetics {
    pub rho: Vec<f64>,
    pub sessile: Affine,
    pub invasion: Affine,
    pub substrate: Affine,
    pub planktonic: Affine,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Affine {
    pub offset: Vec<f64>,
    pub slope: Vec<f64>,
}

impl Affine {
    pub fn zeros(len: usize) -> Self {
        Self {
            offset: vec![0.0; len],
            slope: vec![0.0; len],
        }
    }

    pub fn constant(values: &[f64]) -> Self {
        Self {
            offset: values.to_vec(),
            slope: vec![0.0; values.len()],
        }
    }

    pub fn linear(slope: &[f64]) -> Self {
        Self {
            offset: vec![0.0; slope.len()],
            slope: slope.to_vec(),
        }
    }

    fn eval(&self, k: usize, arg: f64) -> f64 {
        self.offset[k] + self.slope[k] * arg
    }
}

impl AffineKinetics {
    pub fn zero(rho: &[f64], m: usize) -> Self {
        let n = rho.len();
        Self {
            rho: rho.to_vec(),
            sessile: Affine::zeros(n),
            invasion: Affine::zeros(n),
            substrate: Affine::zeros(m),
            planktonic: Affine::zeros(n),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.rho.len();
        for (name, a, len) in [
            ("sessile", &self.sessile, n),
            ("invasion", &self.invasion, n),
            ("planktonic", &self.planktonic, n),
            ("substrate", &self.substrate, self.substrate.offset.len()),
        ] {
            if a.offset.len() != len || a.slope.len() != len {
                return Err(Error::Config(format!(
                    "affine kinetics: {name} offset/slope must have length {len}"
                )));
            }
            if a.offset.iter().chain(&a.slope).any(|v| !v.is_finite()) {
                return Err(Error::Config(format!(
                    "affine kinetics: {name} coefficients must be finite"
                )));
            }
        }
        if self.substrate.offset.is_empty() {
            return Err(Error::Config("affine kinetics: need at least one substrate".into()));
        }
        Ok(())
    }
}

impl Kinetics for AffineKinetics {
    fn species(&self) -> usize {
        self.rho.len()
    }

    fn substrates(&self) -> usize {
        self.substrate.offset.len()
    }

    fn sessile_growth(&self, x: &[f64], _s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = self.sessile.eval(i, x[i] / self.rho[i]);
        }
    }

    fn invasion_growth(&self, psi: &[f64], _s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = self.invasion.eval(i, psi[i]);
        }
    }

    fn substrate_conversion(&self, _x: &[f64], s: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.substrate.eval(j, s[j]);
        }
    }

    fn planktonic_conversion(&self, psi: &[f64], _s: &[f64], out: &mut [f64]) {
        for i in 0..self.rho.len() {
            out[i] = self.planktonic.eval(i, psi[i]);
        }
    }

    fn rate_bounds(&self, b: &AdmissibleBox) -> Option<RateBounds> {
        let bound = |a: &Affine, k: usize, arg_max: f64| Bound {
            max: a.offset[k].abs().max((a.offset[k] + a.slope[k] * arg_max).abs()),
            lipschitz: a.slope[k].abs(),
        };
        let n = self.rho.len();
        Some(RateBounds {
            sessile: (0..n)
                .map(|i| {
                    let mut bd = bound(&self.sessile, i, b.x_max / self.rho[i]);
                    bd.lipschitz /= self.rho[i];
                    bd
                })
                .collect(),
            invasion: (0..n).map(|i| bound(&self.invasion, i, b.psi_max[i])).collect(),
            substrate: (0..self.substrates())
                .map(|j| bound(&self.substrate, j, b.s_max[j]))
                .collect(),
            planktonic: (0..n).map(|i| bound(&self.planktonic, i, b.psi_max[i])).collect(),
        })
    }
}
