//! Whole-interval fixed-point formulation on the triangle `0 <= t0 <= t <= T`.
//!
//! The unknowns `c`, `c_t0`, `x`, `s`, `psi` are sampled on a uniform
//! triangular grid and the operator `A` maps them to the right-hand sides of
//! the integral system (characteristic positions and slopes, sessile
//! transport along characteristics, nested integrals for the diffusing
//! components). Iterating `A` from the centre of the admissible `h`-box is the
//! construction of the existence argument; [`estimate_contraction`] estimates
//! the bounds and Lipschitz constants that certify it.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bulk::BulkEnvironment;
use crate::elliptic;
use crate::error::{Error, Result};
use crate::kinetics::RateEvaluator;
use crate::model::{self, ModelParameters};
use crate::quadrature::{self, PanelRule};

/// Position of `(a, b)`, `a <= b`, in triangular storage.
#[inline]
pub fn tri_index(a: usize, b: usize) -> usize {
    debug_assert!(a <= b);
    b * (b + 1) / 2 + a
}

pub fn tri_len(intervals: usize) -> usize {
    (intervals + 1) * (intervals + 2) / 2
}

/// Samples of all unknowns on the triangular grid with `intervals` steps of `horizon / intervals`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldBundle {
    pub intervals: usize,
    pub horizon: f64,
    pub n: usize,
    pub m: usize,
    pub c: Vec<f64>,
    pub c_t0: Vec<f64>,
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub psi: Vec<f64>,
}

impl FieldBundle {
    pub fn zeros(intervals: usize, horizon: f64, n: usize, m: usize) -> Self {
        let len = tri_len(intervals);
        Self {
            intervals,
            horizon,
            n,
            m,
            c: vec![0.0; len],
            c_t0: vec![0.0; len],
            x: vec![0.0; len * n],
            s: vec![0.0; len * m],
            psi: vec![0.0; len * n],
        }
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.intervals as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step()
    }

    /// `R(t_b) = c(t_b, t_b)`.
    pub fn radius(&self, b: usize) -> f64 {
        self.c[tri_index(b, b)]
    }

    pub fn x_at(&self, a: usize, b: usize) -> &[f64] {
        let p = tri_index(a, b);
        &self.x[p * self.n..(p + 1) * self.n]
    }

    pub fn s_at(&self, a: usize, b: usize) -> &[f64] {
        let p = tri_index(a, b);
        &self.s[p * self.m..(p + 1) * self.m]
    }

    pub fn psi_at(&self, a: usize, b: usize) -> &[f64] {
        let p = tri_index(a, b);
        &self.psi[p * self.n..(p + 1) * self.n]
    }

    /// `sum_i max|x_i| + sum_j max|s_j| + sum_i max|psi_i| + max|c| + max|c_t0|` of `self - other`.
    pub fn distance(&self, other: &FieldBundle) -> f64 {
        let max_diff = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        let comp = |a: &[f64], b: &[f64], w: usize| -> f64 {
            (0..w)
                .map(|i| {
                    a.iter()
                        .skip(i)
                        .step_by(w)
                        .zip(b.iter().skip(i).step_by(w))
                        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
                })
                .sum()
        };
        max_diff(&self.c, &other.c)
            + max_diff(&self.c_t0, &other.c_t0)
            + comp(&self.x, &other.x, self.n)
            + comp(&self.s, &other.s, self.m)
            + comp(&self.psi, &other.psi, self.n)
    }
}

/// Half-widths of the admissible box around `(X0, S*, Psi*, Sigma, sigma_a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HBox {
    pub h_x: Vec<f64>,
    pub h_s: Vec<f64>,
    pub h_psi: Vec<f64>,
    pub h_c1: f64,
    pub h_c2: f64,
}

impl HBox {
    /// Half of each reference scale: `rho_i`, `max S*_j`, `max Psi*_i`,
    /// `Sigma(t1)` and `max sigma_a`.
    pub fn default_for(params: &ModelParameters, bulk: &BulkEnvironment, t1: f64) -> Result<Self> {
        let sig = sigma_a_samples(params, bulk, t1, 256)?;
        let big_sigma = quadrature::trapezoid(&sig.0, &sig.1);
        let sa_max = sig.1.iter().copied().fold(0.0, f64::max);
        Ok(Self {
            h_x: params.rho.iter().map(|r| 0.5 * r).collect(),
            h_s: bulk.s_star_max().iter().map(|v| 0.5 * v).collect(),
            h_psi: bulk.psi_star_max().iter().map(|v| 0.5 * v).collect(),
            h_c1: 0.5 * big_sigma,
            h_c2: 0.5 * sa_max,
        })
    }
}

fn sigma_a_samples(
    params: &ModelParameters,
    bulk: &BulkEnvironment,
    t1: f64,
    k: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let t: Vec<f64> = (0..=k).map(|i| t1 * i as f64 / k as f64).collect();
    let s = t
        .iter()
        .map(|&t| model::sigma_a(&bulk.psi_star_at(t), params))
        .collect::<Result<_>>()?;
    Ok((t, s))
}

/// The operator `A` for a fixed problem and grid.
pub struct PicardOperator<'a> {
    eval: &'a RateEvaluator<'a>,
    params: &'a ModelParameters,
    intervals: usize,
    horizon: f64,
    hbox: HBox,
    rule: PanelRule,
    // boundary data on the time nodes
    sigma_a: Vec<f64>,
    big_sigma: Vec<f64>,
    x0: Vec<Vec<f64>>,
    s_star: Vec<Vec<f64>>,
    psi_star: Vec<Vec<f64>>,
}

impl<'a> PicardOperator<'a> {
    pub fn new(
        eval: &'a RateEvaluator<'a>,
        params: &'a ModelParameters,
        bulk: &'a BulkEnvironment,
        intervals: usize,
        horizon: f64,
        hbox: HBox,
    ) -> Result<Self> {
        if intervals < 2 {
            return Err(Error::Config("picard grid needs at least 2 intervals".into()));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Config(format!("horizon must be > 0 (got {horizon})")));
        }
        let times: Vec<f64> = (0..=intervals).map(|k| horizon * k as f64 / intervals as f64).collect();
        let psi_star: Vec<Vec<f64>> = times.iter().map(|&t| bulk.psi_star_at(t)).collect();
        let sigma_a = psi_star
            .iter()
            .map(|p| model::sigma_a(p, params))
            .collect::<Result<Vec<_>>>()?;
        let x0 = psi_star
            .iter()
            .map(|p| model::boundary_fractions(p, params))
            .collect::<Result<Vec<_>>>()?;
        let mut big_sigma = vec![0.0; times.len()];
        quadrature::cumulative_trapezoid(&times, &sigma_a, &mut big_sigma);
        Ok(Self {
            eval,
            params,
            intervals,
            horizon,
            hbox,
            rule: PanelRule::TRAPEZOID,
            sigma_a,
            big_sigma,
            x0,
            s_star: times.iter().map(|&t| bulk.s_star_at(t)).collect(),
            psi_star,
        })
    }

    pub fn with_rule(mut self, rule: PanelRule) -> Self {
        self.rule = rule;
        self
    }

    pub fn hbox(&self) -> &HBox {
        &self.hbox
    }

    pub fn intervals(&self) -> usize {
        self.intervals
    }

    /// Centre of the `h`-box: `c = Sigma(t0)`, `c_t0 = sigma_a(t0)`, `x = X0(t0)`, `s = S*(t)`, `psi = Psi*(t)`.
    pub fn centre(&self) -> FieldBundle {
        let (n, m) = (self.params.n, self.params.m);
        let mut v = FieldBundle::zeros(self.intervals, self.horizon, n, m);
        for b in 0..=self.intervals {
            for a in 0..=b {
                let p = tri_index(a, b);
                v.c[p] = self.big_sigma[a];
                v.c_t0[p] = self.sigma_a[a];
                v.x[p * n..(p + 1) * n].copy_from_slice(&self.x0[a]);
                v.s[p * m..(p + 1) * m].copy_from_slice(&self.s_star[b]);
                v.psi[p * n..(p + 1) * n].copy_from_slice(&self.psi_star[b]);
            }
        }
        v
    }

    /// Largest violation of the `h`-box, as `(component, excess)`, if any.
    pub fn hbox_excess(&self, v: &FieldBundle) -> Option<(String, f64)> {
        let (n, m) = (self.params.n, self.params.m);
        let mut worst: Option<(String, f64)> = None;
        let mut note = |name: String, dev: f64, h: f64| {
            let excess = dev - h;
            if excess > 1e-12 * h.max(f64::MIN_POSITIVE) && worst.as_ref().is_none_or(|w| excess > w.1) {
                worst = Some((name, excess));
            }
        };
        for b in 0..=self.intervals {
            for a in 0..=b {
                let p = tri_index(a, b);
                note("c".into(), (v.c[p] - self.big_sigma[a]).abs(), self.hbox.h_c1);
                note("c_t0".into(), (v.c_t0[p] - self.sigma_a[a]).abs(), self.hbox.h_c2);
                for i in 0..n {
                    note(
                        format!("x_{}", i + 1),
                        (v.x[p * n + i] - self.x0[a][i]).abs(),
                        self.hbox.h_x[i],
                    );
                    note(
                        format!("psi_{}", i + 1),
                        (v.psi[p * n + i] - self.psi_star[b][i]).abs(),
                        self.hbox.h_psi[i],
                    );
                }
                for j in 0..m {
                    note(
                        format!("s_{}", j + 1),
                        (v.s[p * m + j] - self.s_star[b][j]).abs(),
                        self.hbox.h_s[j],
                    );
                }
            }
        }
        worst
    }

    /// Growth `G` and velocity `u` along column `b` (time `t_b`) of `v`.
    pub fn column_velocity(&self, v: &FieldBundle, b: usize) -> (Vec<f64>, Vec<f64>) {
        let c: Vec<f64> = (0..=b).map(|a| v.c[tri_index(a, b)]).collect();
        let g: Vec<f64> = (0..=b)
            .map(|a| self.eval.growth(v.x_at(a, b), v.s_at(a, b), v.psi_at(a, b)))
            .collect();
        let mut moments = vec![0.0; b + 1];
        let mut u = vec![0.0; b + 1];
        quadrature::cubic_moments(&c, &g, self.rule, &mut moments);
        quadrature::radial_means(&c, &moments, &g, &mut u);
        (g, u)
    }

    /// Evaluates `A(v)`.
    pub fn apply(&self, v: &FieldBundle) -> FieldBundle {
        let (n, m, nn) = (self.params.n, self.params.m, self.intervals);
        let h = v.step();
        let rule = self.rule;

        // columns (fixed t): growth, transport rhs, velocity, diffusing components
        struct Column {
            g: Vec<f64>,
            f: Vec<f64>,
            u: Vec<f64>,
            s: Vec<f64>,
            psi: Vec<f64>,
        }
        let columns: Vec<Column> = (0..=nn)
            .into_par_iter()
            .map(|b| {
                let len = b + 1;
                let c: Vec<f64> = (0..len).map(|a| v.c[tri_index(a, b)]).collect();
                let mut g = vec![0.0; len];
                let mut f = vec![0.0; len * n];
                let mut rs = vec![0.0; len * m];
                let mut rp = vec![0.0; len * n];
                for a in 0..len {
                    let (x, s, psi) = (v.x_at(a, b), v.s_at(a, b), v.psi_at(a, b));
                    g[a] = self.eval.growth_and_transport(x, s, psi, &mut f[a * n..(a + 1) * n]);
                    self.eval.substrate_conversion(x, s, &mut rs[a * m..(a + 1) * m]);
                    self.eval.planktonic_conversion(psi, s, &mut rp[a * n..(a + 1) * n]);
                }
                let mut moments = vec![0.0; len];
                let mut u = vec![0.0; len];
                quadrature::cubic_moments(&c, &g, rule, &mut moments);
                quadrature::radial_means(&c, &moments, &g, &mut u);
                let mut s_out = vec![0.0; len * m];
                let mut psi_out = vec![0.0; len * n];
                let mut rate = vec![0.0; len];
                let mut mapped = vec![0.0; len];
                let solve = |width: usize,
                             src: &[f64],
                             star: &[f64],
                             d: &[f64],
                             out: &mut [f64],
                             rate: &mut [f64],
                             mapped: &mut [f64]| {
                    for j in 0..width {
                        if len < 3 {
                            mapped.iter_mut().for_each(|y| *y = star[j]);
                        } else {
                            for a in 0..len {
                                rate[a] = src[a * width + j];
                            }
                            elliptic::integral_map(&c, rate, star[j], d[j], rule, mapped);
                        }
                        for a in 0..len {
                            out[a * width + j] = mapped[a];
                        }
                    }
                };
                solve(
                    m,
                    &rs,
                    &self.s_star[b],
                    &self.params.d_s,
                    &mut s_out,
                    &mut rate,
                    &mut mapped,
                );
                solve(
                    n,
                    &rp,
                    &self.psi_star[b],
                    &self.params.d_psi,
                    &mut psi_out,
                    &mut rate,
                    &mut mapped,
                );
                Column {
                    g,
                    f,
                    u,
                    s: s_out,
                    psi: psi_out,
                }
            })
            .collect();

        // boundary: R(t_a) = Sigma(t_a) + int_0^{t_a} u(R(theta), theta) dtheta
        let mut diag = vec![0.0; nn + 1];
        for a in 1..=nn {
            diag[a] = diag[a - 1] + h * rule.apply(columns[a - 1].u[a - 1], columns[a].u[a]);
        }

        // rows (fixed t0): integrate along the characteristic in t
        struct Row {
            c: Vec<f64>,
            c_t0: Vec<f64>,
            x: Vec<f64>,
        }
        let rows: Vec<Row> = (0..=nn)
            .into_par_iter()
            .map(|a| {
                let len = nn - a + 1;
                let mut c = vec![0.0; len];
                let mut ct = vec![0.0; len];
                let mut x = vec![0.0; len * n];
                let slope_rate = |b: usize| {
                    let p = tri_index(a, b);
                    let g = columns[b].g[a];
                    let cc = v.c[p];
                    let dudr = if a == 0 || cc <= 0.0 {
                        g / 3.0
                    } else {
                        g - 2.0 * columns[b].u[a] / cc
                    };
                    v.c_t0[p] * dudr
                };
                c[0] = self.big_sigma[a] + diag[a];
                ct[0] = self.sigma_a[a];
                x[..n].copy_from_slice(&self.x0[a]);
                for k in 1..len {
                    let (b0, b1) = (a + k - 1, a + k);
                    c[k] = c[k - 1] + h * rule.apply(columns[b0].u[a], columns[b1].u[a]);
                    ct[k] = ct[k - 1] + h * rule.apply(slope_rate(b0), slope_rate(b1));
                    for i in 0..n {
                        x[k * n + i] =
                            x[(k - 1) * n + i] + h * rule.apply(columns[b0].f[a * n + i], columns[b1].f[a * n + i]);
                    }
                }
                if a == 0 {
                    c.iter_mut().for_each(|c| *c = 0.0);
                }
                Row { c, c_t0: ct, x }
            })
            .collect();

        let mut out = FieldBundle::zeros(nn, v.horizon, n, m);
        for b in 0..=nn {
            for a in 0..=b {
                let p = tri_index(a, b);
                let row = &rows[a];
                let k = b - a;
                out.c[p] = row.c[k];
                out.c_t0[p] = row.c_t0[k];
                out.x[p * n..(p + 1) * n].copy_from_slice(&row.x[k * n..(k + 1) * n]);
                out.s[p * m..(p + 1) * m].copy_from_slice(&columns[b].s[a * m..(a + 1) * m]);
                out.psi[p * n..(p + 1) * n].copy_from_slice(&columns[b].psi[a * n..(a + 1) * n]);
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PicardHistory {
    /// `||v_{k} - v_{k-1}||` for each iteration `k = 1, 2, ...`.
    pub differences: Vec<f64>,
}

impl PicardHistory {
    pub fn iterations(&self) -> usize {
        self.differences.len()
    }

    /// `e_{k+1} / e_k`.
    pub fn ratios(&self) -> Vec<f64> {
        self.differences.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// Iterates `v <- A(v)` until the successive difference drops to `tol`.
pub fn picard_solve(
    op: &PicardOperator,
    initial: FieldBundle,
    tol: f64,
    max_iter: usize,
) -> Result<(FieldBundle, PicardHistory)> {
    let mut v = initial;
    let mut history = PicardHistory::default();
    for _ in 0..max_iter {
        let next = op.apply(&v);
        if let Some((component, excess)) = op.hbox_excess(&next) {
            return Err(Error::HorizonTooLarge { component, excess });
        }
        let e = next.distance(&v);
        history.differences.push(e);
        v = next;
        if !e.is_finite() {
            break;
        }
        if e <= tol {
            return Ok((v, history));
        }
    }
    Err(Error::NonConvergence {
        solver: "picard",
        iterations: history.iterations(),
        residual_history: history.differences,
    })
}

/// Bounds, Lipschitz constants and the certified horizon of the fixed-point map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub lambda_x: Vec<f64>,
    pub lambda_s: Vec<f64>,
    pub lambda_psi: Vec<f64>,
    /// `lambda_c1, lambda_c2, lambda_c3`.
    pub lambda_c: [f64; 3],
    pub m_x: Vec<f64>,
    pub m_s: Vec<f64>,
    pub m_psi: Vec<f64>,
    pub m_c1: f64,
    pub m_c2: f64,
    pub h: HBox,
    pub a: f64,
    pub b: f64,
    /// Horizon the bounds were sampled for.
    pub t1: f64,
    /// Requested horizon.
    pub horizon: f64,
    /// Positive root of `a T^2 + b T = 1`.
    pub t_root: f64,
    pub t_guaranteed: f64,
    /// `a T^2 + b T` at the requested horizon.
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub certified: bool,
    pub samples: usize,
    pub seed: u64,
}

impl ContractionReport {
    pub fn lambda_at(&self, t: f64) -> f64 {
        self.a * t * t + self.b * t
    }
}

/// Positive root of `a T^2 + b T = 1`; `1/b` when `a = 0`, infinite when `a = b = 0`.
pub fn positive_root(a: f64, b: f64) -> f64 {
    if a > 0.0 {
        2.0 / (b + (b * b + 4.0 * a).sqrt())
    } else if b > 0.0 {
        1.0 / b
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractionSettings {
    pub samples: usize,
    pub seed: u64,
}

impl Default for ContractionSettings {
    fn default() -> Self {
        Self {
            samples: 4096,
            seed: 0x6772_616e,
        }
    }
}

struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi: hi.max(lo) }
    }
    fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Latin-hypercube points in the unit cube, `samples x dims`, row-major.
fn latin_hypercube(samples: usize, dims: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; samples * dims];
    let mut strata: Vec<usize> = (0..samples).collect();
    for d in 0..dims {
        strata.shuffle(rng);
        for (k, &st) in strata.iter().enumerate() {
            out[k * dims + d] = (st as f64 + rng.gen::<f64>()) / samples as f64;
        }
    }
    out
}

/// Max and Lipschitz estimate of a scalar kernel over sampled points.
#[derive(Default, Clone, Copy)]
struct Tally {
    max: f64,
    lip: f64,
}

impl Tally {
    fn value(&mut self, v: f64) -> Result<()> {
        if !v.is_finite() {
            return Err(Error::KineticsDomain(format!("non-finite kernel value {v}")));
        }
        self.max = self.max.max(v.abs());
        Ok(())
    }
    fn slope(&mut self, d: f64) -> Result<()> {
        if !d.is_finite() {
            return Err(Error::KineticsDomain(format!("non-finite kernel derivative {d}")));
        }
        self.lip = self.lip.max(d.abs());
        Ok(())
    }
}

/// Central difference of `f` along argument `k` of `point`, kept inside `ranges`.
fn partial(f: &mut impl FnMut(&[f64]) -> f64, point: &mut [f64], k: usize, ranges: &[Interval]) -> f64 {
    let r = &ranges[k];
    if r.width() <= 0.0 {
        return 0.0;
    }
    let eps = 1e-6 * r.width();
    let v = point[k];
    let (lo, hi) = ((v - eps).max(r.lo), (v + eps).min(r.hi));
    point[k] = hi;
    let fh = f(point);
    point[k] = lo;
    let fl = f(point);
    point[k] = v;
    (fh - fl) / (hi - lo)
}

/// Samples the kernels of the fixed-point system over the `h`-box for the
/// interval `[0, t1]` and assembles `a`, `b` and the guaranteed horizon.
pub fn estimate_contraction(
    eval: &RateEvaluator,
    params: &ModelParameters,
    bulk: &BulkEnvironment,
    hbox: &HBox,
    t1: f64,
    horizon: f64,
    settings: &ContractionSettings,
) -> Result<ContractionReport> {
    let (n, m) = (params.n, params.m);
    let adm = eval.admissible();
    let samples = settings.samples.max(2);
    let sig = sigma_a_samples(params, bulk, t1, 256)?;
    let (sa_min, sa_max) = sig
        .1
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let x0: Vec<Vec<f64>> = sig
        .0
        .iter()
        .map(|&t| model::boundary_fractions(&bulk.psi_star_at(t), params))
        .collect::<Result<_>>()?;
    let s_star: Vec<Vec<f64>> = sig.0.iter().map(|&t| bulk.s_star_at(t)).collect();
    let psi_star: Vec<Vec<f64>> = sig.0.iter().map(|&t| bulk.psi_star_at(t)).collect();
    let span = |vals: &[Vec<f64>], i: usize, h: f64, cap: f64| {
        let lo = vals.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min) - h;
        let hi = vals.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max) + h;
        Interval::new(lo.max(0.0), hi.min(cap))
    };

    // argument layout: x (n), s (m), psi (n), c_t0, c_theta slope, q
    let ix = 0;
    let is = n;
    let ip = n + m;
    let (i_ct, i_cth, i_q) = (2 * n + m, 2 * n + m + 1, 2 * n + m + 2);
    let dims = 2 * n + m + 3;
    let mut ranges: Vec<Interval> = Vec::with_capacity(dims);
    for i in 0..n {
        ranges.push(span(&x0, i, hbox.h_x[i], adm.x_max));
    }
    for j in 0..m {
        ranges.push(span(&s_star, j, hbox.h_s[j], adm.s_max[j]));
    }
    for i in 0..n {
        ranges.push(span(&psi_star, i, hbox.h_psi[i], adm.psi_max[i]));
    }
    let ct_range = Interval::new((sa_min - hbox.h_c2).max(0.0), sa_max + hbox.h_c2);
    let ct_max = ct_range.hi;
    ranges.push(Interval::new(ct_range.lo, ct_range.hi));
    ranges.push(Interval::new(ct_range.lo, ct_range.hi));
    ranges.push(Interval::new(0.0, 1.0));

    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let unit = latin_hypercube(samples, dims, &mut rng);
    let w_unit: Vec<f64> = (0..samples).map(|_| rng.gen::<f64>()).collect();
    let points: Vec<Vec<f64>> = (0..samples)
        .map(|k| {
            (0..dims)
                .map(|d| ranges[d].lo + unit[k * dims + d] * ranges[d].width())
                .collect()
        })
        .collect();

    let growth = |p: &[f64]| {
        let mut f = vec![0.0; n];
        eval.growth_and_transport(&p[ix..ix + n], &p[is..is + m], &p[ip..ip + n], &mut f)
    };
    let transport = |p: &[f64], i: usize| {
        let mut f = vec![0.0; n];
        eval.growth_and_transport(&p[ix..ix + n], &p[is..is + m], &p[ip..ip + n], &mut f);
        f[i]
    };
    let substrate = |p: &[f64], j: usize| {
        let mut r = vec![0.0; m];
        eval.substrate_conversion(&p[ix..ix + n], &p[is..is + m], &mut r);
        p[i_q] * p[i_q] * r[j] * p[i_ct] * p[i_cth] / params.d_s[j]
    };
    let planktonic = |p: &[f64], i: usize| {
        let mut r = vec![0.0; n];
        eval.planktonic_conversion(&p[ip..ip + n], &p[is..is + m], &mut r);
        p[i_q] * p[i_q] * r[i] * p[i_ct] * p[i_cth] / params.d_psi[i]
    };
    let geometric = |p: &[f64]| p[i_q] * p[i_q] * growth(p) * p[i_ct];

    let state_args: Vec<usize> = (0..2 * n + m).collect();
    let mut t_g = Tally::default();
    let mut t_x = vec![Tally::default(); n];
    let mut t_s = vec![Tally::default(); m];
    let mut t_p = vec![Tally::default(); n];
    let mut t_c1 = Tally::default();
    for p in &points {
        let mut p = p.clone();
        t_g.value(growth(&p))?;
        for &k in &state_args {
            let d = partial(&mut |q: &[f64]| growth(q), &mut p, k, &ranges);
            t_g.slope(d)?;
        }
        for i in 0..n {
            t_x[i].value(transport(&p, i))?;
            for &k in &state_args {
                let d = partial(&mut |q: &[f64]| transport(q, i), &mut p, k, &ranges);
                t_x[i].slope(d)?;
            }
        }
        // F_s depends on x, s and the two slopes; F_psi on psi, s and the slopes
        for j in 0..m {
            t_s[j].value(substrate(&p, j))?;
            for k in (ix..ix + n).chain(is..is + m).chain([i_ct, i_cth]) {
                let d = partial(&mut |q: &[f64]| substrate(q, j), &mut p, k, &ranges);
                t_s[j].slope(d)?;
            }
        }
        for i in 0..n {
            t_p[i].value(planktonic(&p, i))?;
            for k in (ip..ip + n).chain(is..is + m).chain([i_ct, i_cth]) {
                let d = partial(&mut |q: &[f64]| planktonic(q, i), &mut p, k, &ranges);
                t_p[i].slope(d)?;
            }
        }
        t_c1.value(geometric(&p))?;
        for k in state_args.iter().copied().chain([i_ct]) {
            let d = partial(&mut |q: &[f64]| geometric(q), &mut p, k, &ranges);
            t_c1.slope(d)?;
        }
    }

    // F_c3 = c_t0 (G - 2w), w = u/c in [0, max G / 3]
    let w_max = t_g.max / 3.0;
    let mut t_c3 = Tally::default();
    for (p, wu) in points.iter().zip(&w_unit) {
        let w = wu * w_max;
        let g = growth(p);
        let ct = p[i_ct];
        t_c3.value(ct * (g - 2.0 * w))?;
        t_c3.slope(g - 2.0 * w)?;
        if w_max > 0.0 {
            t_c3.slope(2.0 * ct)?;
        }
        for &k in &state_args {
            let mut q = p.clone();
            let d = partial(&mut |q: &[f64]| growth(q), &mut q, k, &ranges);
            t_c3.slope(ct * d)?;
        }
    }
    // w itself moves with the state through G
    let lambda_c3 = t_c3.lip + 2.0 / 3.0 * ct_max * t_g.lip;
    let lambda_c = [t_c1.lip, t_c1.lip, lambda_c3];
    let m_c1 = t_c1.max;
    let m_c2 = t_c3.max;

    let sum = |v: &[Tally]| v.iter().map(|t| t.lip).sum::<f64>();
    let a = sum(&t_s) + sum(&t_p) + lambda_c[0] + lambda_c[1];
    let b = sum(&t_x) + lambda_c[2];
    let t_root = positive_root(a, b);
    let ratio = |h: f64, m: f64| if m > 0.0 { h / m } else { f64::INFINITY };
    let mut t_g_min = t1;
    for i in 0..n {
        t_g_min = t_g_min.min(ratio(hbox.h_x[i], t_x[i].max));
        t_g_min = t_g_min.min(ratio(hbox.h_psi[i], t_p[i].max).sqrt());
    }
    for j in 0..m {
        t_g_min = t_g_min.min(ratio(hbox.h_s[j], t_s[j].max).sqrt());
    }
    t_g_min = t_g_min.min(ratio(hbox.h_c1, 2.0 * m_c1).sqrt());
    t_g_min = t_g_min.min(ratio(hbox.h_c2, m_c2));
    let t_guaranteed = t_g_min.min(t_root);
    let lambda = a * horizon * horizon + b * horizon;
    Ok(ContractionReport {
        lambda_x: t_x.iter().map(|t| t.lip).collect(),
        lambda_s: t_s.iter().map(|t| t.lip).collect(),
        lambda_psi: t_p.iter().map(|t| t.lip).collect(),
        lambda_c,
        m_x: t_x.iter().map(|t| t.max).collect(),
        m_s: t_s.iter().map(|t| t.max).collect(),
        m_psi: t_p.iter().map(|t| t.max).collect(),
        m_c1,
        m_c2,
        h: hbox.clone(),
        a,
        b,
        t1,
        horizon,
        t_root,
        t_guaranteed,
        lambda,
        certified: horizon <= t_guaranteed && lambda < 1.0,
        samples,
        seed: settings.seed,
    })
}
