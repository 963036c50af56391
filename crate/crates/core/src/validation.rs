//! Self-check suites run by `granulesim validate`.
//!
//! * `analytic`: closed-form solutions (zero growth, constant growth,
//!   constant consumption, detachment-limited radius).
//! * `oracle`: comparisons against independent solvers (finite-volume BVP,
//!   adaptive Runge-Kutta) and between the two solution modes.
//! * `invariants`: simplex preservation, centre regularity, formulation
//!   equivalence, regime handling, boundary seeding, contraction rate.
//!
//! Every suite accepts a [`PanelRule`] so that the quadrature can be
//! perturbed deliberately; the suites must then fail.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bulk::BulkEnvironment;
use crate::characteristics::{CharacteristicGrid, Formulation, GranuleState};
use crate::config::{AffineConfig, ContractionConfig, KineticsConfig, Numerics, OutputConfig, SimulationConfig};
use crate::elliptic::{self, EllipticSettings};
use crate::error::{Error, Result};
use crate::field::NodeField;
use crate::freeboundary::Regime;
use crate::kinetics::{AdmissibleBox, Kinetics, MonodKinetics, RateEvaluator};
use crate::marching::{MarchSettings, Stepper};
use crate::model::ModelParameters;
use crate::picard::{self, HBox, PicardOperator};
use crate::quadrature::PanelRule;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Analytic,
    Oracle,
    Invariants,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub suite: String,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl Check {
    fn le(suite: &str, name: &str, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            passed: measured <= threshold,
            measured,
            threshold,
            detail: detail.into(),
        }
    }

    fn within(suite: &str, name: &str, measured: f64, lo: f64, hi: f64, detail: impl Into<String>) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            passed: (lo..=hi).contains(&measured),
            measured,
            threshold: hi,
            detail: detail.into(),
        }
    }

    fn failed(suite: &str, name: &str, err: &Error) -> Self {
        Self {
            suite: suite.into(),
            name: name.into(),
            passed: false,
            measured: f64::NAN,
            threshold: f64::NAN,
            detail: format!("error: {err}"),
        }
    }
}

pub fn run_suite(suite: Suite, rule: PanelRule) -> Vec<Check> {
    match suite {
        Suite::Analytic => analytic_suite(rule),
        Suite::Oracle => oracle_suite(rule),
        Suite::Invariants => invariants_suite(rule),
        Suite::All => {
            let mut v = analytic_suite(rule);
            v.extend(oracle_suite(rule));
            v.extend(invariants_suite(rule));
            v
        }
    }
}

/// Adaptive Dormand-Prince 5(4) integration of `y' = f(t, y)` from `t0` to `t1`.
pub fn dopri45(
    f: impl Fn(f64, &[f64], &mut [f64]),
    y0: &[f64],
    t0: f64,
    t1: f64,
    rtol: f64,
    atol: f64,
) -> Result<Vec<f64>> {
    const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = (t1 - t0) * 1e-3;
    let mut k = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut steps = 0usize;
    while t < t1 {
        steps += 1;
        if steps > 1_000_000 {
            return Err(Error::Oracle("dopri45: step budget exhausted".into()));
        }
        h = h.min(t1 - t);
        for s in 0..7 {
            for i in 0..n {
                tmp[i] = y[i] + h * (0..s).map(|j| A[s][j] * k[j][i]).sum::<f64>();
            }
            let (before, rest) = k.split_at_mut(s);
            let _ = before;
            f(t + C[s] * h, &tmp, &mut rest[0]);
        }
        let mut err: f64 = 0.0;
        let mut y5 = vec![0.0; n];
        for i in 0..n {
            let d5: f64 = (0..7).map(|s| B5[s] * k[s][i]).sum();
            let d4: f64 = (0..7).map(|s| B4[s] * k[s][i]).sum();
            y5[i] = y[i] + h * d5;
            let sc = atol + rtol * y[i].abs().max(y5[i].abs());
            err = err.max((h * (d5 - d4)).abs() / sc);
        }
        if !err.is_finite() {
            return Err(Error::Oracle("dopri45: non-finite error estimate".into()));
        }
        if err <= 1.0 {
            t += h;
            y = y5;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < 1e-14 * (t1 - t0).abs() {
            return Err(Error::Oracle("dopri45: step size underflow".into()));
        }
    }
    Ok(y)
}

fn single_species(rho: f64, v_a: f64, delta: f64) -> ModelParameters {
    ModelParameters {
        n: 1,
        m: 1,
        rho: vec![rho],
        d_s: vec![1.0],
        d_psi: vec![1.0],
        v_a: vec![v_a],
        delta,
    }
}

fn config(
    params: ModelParameters,
    bulk: BulkEnvironment,
    kinetics: KineticsConfig,
    dt: f64,
    horizon: f64,
) -> SimulationConfig {
    SimulationConfig {
        units: None,
        params,
        bulk,
        kinetics,
        numerics: Numerics {
            dt,
            horizon,
            formulation: Formulation::Cubic,
            regime: Regime::AttachmentOnly,
            elliptic: EllipticSettings::default(),
            picard_intervals: 128,
            picard_tol: 1e-10,
            picard_max_iter: 200,
            override_certification: false,
        },
        contraction: ContractionConfig::default(),
        output: OutputConfig::default(),
    }
}

fn constant_growth(mu: f64) -> KineticsConfig {
    KineticsConfig::Affine {
        sessile: AffineConfig {
            offset: Some(vec![mu]),
            slope: None,
        },
        invasion: AffineConfig::default(),
        substrate: AffineConfig::default(),
        planktonic: AffineConfig::default(),
    }
}

/// Marches `cfg` with the given panel rule, calling `visit` at every level.
fn march(
    cfg: &SimulationConfig,
    rule: PanelRule,
    mut visit: impl FnMut(&Stepper) -> Result<()>,
) -> Result<GranuleState> {
    let p = &cfg.params;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let mut elliptic = cfg.numerics.elliptic;
    elliptic.rule = rule;
    let settings = MarchSettings {
        dt: cfg.numerics.dt,
        formulation: cfg.numerics.formulation,
        regime: cfg.numerics.regime,
        elliptic,
        rule,
    };
    let mut stepper = Stepper::new(&eval, p, &cfg.bulk, settings)?;
    let started = std::time::Instant::now();
    visit(&stepper)?;
    for _ in 0..cfg.steps() {
        stepper.step(started)?;
        visit(&stepper)?;
    }
    Ok(stepper.state().clone())
}

fn exp_radius(mu: f64, sigma: f64, t: f64) -> f64 {
    3.0 * sigma / mu * ((mu * t / 3.0).exp() - 1.0)
}

pub fn analytic_suite(rule: PanelRule) -> Vec<Check> {
    const S: &str = "analytic";
    let mut out = Vec::new();
    let bulk1 = BulkEnvironment::constant(&[1.0], &[1.0]);

    // zero growth: R(t) = sigma_a t
    let cfg = config(
        single_species(1.0, 0.1, 0.0),
        bulk1.clone(),
        KineticsConfig::Zero,
        0.01,
        1.0,
    );
    let mut worst: f64 = 0.0;
    match march(&cfg, rule, |st| {
        let s = st.state();
        worst = worst.max((s.radius() - 0.1 * s.t).abs());
        Ok(())
    }) {
        Ok(_) => out.push(Check::le(
            S,
            "zero_growth_radius",
            worst,
            1e-10,
            "max |R(t) - 0.1 t|, t in [0, 1]",
        )),
        Err(e) => out.push(Check::failed(S, "zero_growth_radius", &e)),
    }

    // constant growth G = 3: R(t) = 0.1 (e^t - 1), second order in dt
    let exact = exp_radius(3.0, 0.1, 1.0);
    let radius_error = |dt: f64| -> Result<f64> {
        let cfg = config(
            single_species(1.0, 0.1, 0.0),
            bulk1.clone(),
            constant_growth(3.0),
            dt,
            1.0,
        );
        Ok((march(&cfg, rule, |_| Ok(()))?.radius() - exact).abs())
    };
    match (radius_error(1e-3), radius_error(4e-3), radius_error(8e-3)) {
        (Ok(e1), Ok(e4), Ok(e8)) => {
            out.push(Check::le(
                S,
                "exponential_radius",
                e1 / exact,
                5e-3,
                "relative error of R(1), dt = 1e-3",
            ));
            out.push(Check::within(
                S,
                "exponential_radius_order",
                e8 / e4,
                3.5,
                4.5,
                "error ratio dt = 8e-3 vs 4e-3",
            ));
        }
        (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => out.push(Check::failed(S, "exponential_radius", &e)),
    }

    // characteristics of the constant-growth granule
    let cfg = config(
        single_species(1.0, 0.1, 0.0),
        bulk1.clone(),
        constant_growth(3.0),
        1e-3,
        1.0,
    );
    match march(&cfg, rule, |_| Ok(())) {
        Ok(st) => {
            let err = st
                .grid
                .t0()
                .iter()
                .zip(st.grid.c())
                .map(|(&t0, &c)| (c - exp_radius(3.0, 0.1, t0) * (1.0 - t0).exp()).abs())
                .fold(0.0, f64::max);
            out.push(Check::le(
                S,
                "characteristic_closed_form",
                err / exact,
                1e-4,
                "max |c - R(t0) e^{mu (t - t0)/3}| / R(1)",
            ));
        }
        Err(e) => out.push(Check::failed(S, "characteristic_closed_form", &e)),
    }

    // constant consumption
    out.push(match constant_consumption(rule) {
        Ok(err) => Check::le(
            S,
            "elliptic_constant_consumption",
            err,
            1e-6,
            "max |s - (S* - k (R^2 - r^2)/(6D))|",
        ),
        Err(e) => Check::failed(S, "elliptic_constant_consumption", &e),
    });

    // detachment without growth: dR/dt = sigma_a - delta R^2
    let mut cfg = config(single_species(1.0, 0.1, 0.5), bulk1, KineticsConfig::Zero, 1e-3, 2.0);
    cfg.numerics.regime = Regime::General;
    let result = march(&cfg, rule, |_| Ok(())).and_then(|st| {
        let y = dopri45(|_, r, d| d[0] = 0.1 - 0.5 * r[0] * r[0], &[0.0], 0.0, 2.0, 1e-12, 1e-14)?;
        Ok((st.radius() - y[0]).abs())
    });
    out.push(match result {
        Ok(err) => Check::le(
            S,
            "detachment_radius",
            err,
            1e-6,
            "R(2) vs adaptive RK oracle, delta = 0.5",
        ),
        Err(e) => Check::failed(S, "detachment_radius", &e),
    });
    out
}

fn uniform_grid(radius: f64, nodes: usize) -> Result<CharacteristicGrid> {
    let c: Vec<f64> = (0..nodes).map(|k| radius * k as f64 / (nodes - 1) as f64).collect();
    CharacteristicGrid::from_parts(c.clone(), c, vec![1.0; nodes])
}

fn constant_consumption(rule: PanelRule) -> Result<f64> {
    let p = single_species(1.0, 1.0, 0.0);
    let kin = crate::kinetics::AffineKinetics {
        substrate: crate::kinetics::Affine::constant(&[-0.6]),
        ..crate::kinetics::AffineKinetics::zero(&p.rho, 1)
    };
    let bulk = BulkEnvironment::constant(&[10.0], &[1.0]);
    let eval = RateEvaluator::new(&kin, &p, AdmissibleBox::new(&p, &bulk));
    let grid = uniform_grid(1.0, 101)?;
    let settings = EllipticSettings {
        rule,
        ..Default::default()
    };
    let x = NodeField::filled(grid.len(), &[1.0]);
    let (s, _) = elliptic::solve_substrates(&grid, &x, &NodeField::new(1), &[10.0], &eval, &p, &settings)?;
    Ok(grid
        .c()
        .iter()
        .enumerate()
        .map(|(k, r)| (s.row(k)[0] - (10.0 - 0.6 * (1.0 - r * r) / 6.0)).abs())
        .fold(0.0, f64::max))
}

/// Monod consumption on a non-uniform grid against the finite-volume oracle.
fn monod_oracle_draw(rng: &mut ChaCha8Rng, rule: PanelRule) -> Result<f64> {
    let radius = rng.gen_range(0.1..1.0);
    let d = rng.gen_range(0.5..2.0);
    let s_star = rng.gen_range(1.0..10.0);
    let mu = rng.gen_range(0.1..1.0);
    let k = rng.gen_range(0.5..2.0);
    let y = rng.gen_range(0.5..2.0);
    let rho = rng.gen_range(0.5..2.0);
    let mut p = single_species(rho, 1.0, 0.0);
    p.d_s = vec![d];
    let kin = MonodKinetics {
        rho: vec![rho],
        mu_max: vec![mu],
        half_saturation: vec![k],
        limiting_substrate: vec![0],
        colonization: vec![0.0],
        yields: vec![vec![y]],
    };
    let bulk = BulkEnvironment::constant(&[s_star], &[1.0]);
    let eval = RateEvaluator::new(&kin, &p, AdmissibleBox::new(&p, &bulk));
    let nodes = 120;
    // denser towards the boundary, as on a growing granule
    let c: Vec<f64> = (0..nodes)
        .map(|j| radius * (j as f64 / (nodes - 1) as f64).powf(0.6))
        .collect();
    let grid = CharacteristicGrid::from_parts(c.clone(), c, vec![1.0; nodes])?;
    let x_of = |r: f64| rho * (0.6 + 0.4 * (r / radius).powi(2));
    let mut x = NodeField::new(1);
    for &r in grid.c() {
        x.push_row(&[x_of(r)]);
    }
    let settings = EllipticSettings {
        rule,
        ..Default::default()
    };
    let (s, _) = elliptic::solve_substrates(&grid, &x, &NodeField::new(1), &[s_star], &eval, &p, &settings)?;
    let f = |sv: f64, r: f64| {
        let mut out = [0.0];
        kin.substrate_conversion(&[x_of(r)], &[sv.max(0.0)], &mut out);
        out[0]
    };
    let oracle = elliptic::fd_oracle(4000, radius, f, d, s_star)?;
    Ok(grid
        .c()
        .iter()
        .enumerate()
        .map(|(j, &r)| (s.row(j)[0] - oracle.at(r)).abs())
        .fold(0.0, f64::max))
}

/// Certified single-species Monod problem shared by the dual-mode and contraction checks.
pub fn certified_problem() -> SimulationConfig {
    let params = single_species(10.0, 1.0, 0.0);
    let bulk = BulkEnvironment::constant(&[50.0], &[1.0]);
    let kinetics = KineticsConfig::Monod {
        mu_max: vec![0.5],
        half_saturation: vec![1.0],
        limiting_substrate: None,
        colonization: None,
        yields: vec![vec![0.5]],
    };
    config(params, bulk, kinetics, 0.25 / 128.0, 0.25)
}

pub fn oracle_suite(rule: PanelRule) -> Vec<Check> {
    const S: &str = "oracle";
    let mut out = Vec::new();

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let mut error = None;
    for _ in 0..20 {
        match monod_oracle_draw(&mut rng, rule) {
            Ok(e) => worst = worst.max(e),
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }
    out.push(match error {
        None => Check::le(
            S,
            "elliptic_monod_vs_fd",
            worst,
            1e-4,
            "20 random draws, 120-node grids",
        ),
        Some(e) => Check::failed(S, "elliptic_monod_vs_fd", &e),
    });

    // linear decay of planktonic cells: closed form and oracle
    let decay = (|| -> Result<f64> {
        let (d, lam, radius, star) = (0.8, 2.0, 1.2, 1.5);
        let mut p = single_species(1.0, 1.0, 0.0);
        p.d_psi = vec![d];
        let kin = crate::kinetics::AffineKinetics {
            planktonic: crate::kinetics::Affine::linear(&[-lam]),
            ..crate::kinetics::AffineKinetics::zero(&p.rho, 1)
        };
        let bulk = BulkEnvironment::constant(&[1.0], &[star]);
        let eval = RateEvaluator::new(&kin, &p, AdmissibleBox::new(&p, &bulk));
        let grid = uniform_grid(radius, 151)?;
        let settings = EllipticSettings {
            rule,
            ..Default::default()
        };
        let s = NodeField::filled(grid.len(), &[1.0]);
        let (psi, _) = elliptic::solve_planktonic(&grid, &NodeField::new(1), &s, &[star], &eval, &p, &settings)?;
        let oracle = elliptic::fd_oracle(4000, radius, |y, _| -lam * y, d, star)?;
        Ok(grid
            .c()
            .iter()
            .enumerate()
            .map(|(k, &r)| (psi.row(k)[0] - oracle.at(r)).abs())
            .fold(0.0, f64::max))
    })();
    out.push(match decay {
        Ok(e) => Check::le(S, "planktonic_decay_vs_fd", e, 1e-5, "linear decay, 151-node grid"),
        Err(e) => Check::failed(S, "planktonic_decay_vs_fd", &e),
    });

    // two-species sessile transport at the centre against an adaptive RK oracle
    let sessile = (|| -> Result<f64> {
        let mut p = single_species(1.0, 0.1, 0.0);
        p.n = 2;
        p.rho = vec![1.0, 1.0];
        p.d_psi = vec![1.0, 1.0];
        p.v_a = vec![0.1, 0.3];
        let bulk = BulkEnvironment::constant(&[1.0], &[1.0, 1.0]);
        let (a, b) = (0.8, 0.3);
        let kin = KineticsConfig::Affine {
            sessile: AffineConfig {
                offset: Some(vec![a, b]),
                slope: None,
            },
            invasion: AffineConfig::default(),
            substrate: AffineConfig::default(),
            planktonic: AffineConfig::default(),
        };
        let cfg = config(p, bulk, kin, 1e-3, 1.0);
        let st = march(&cfg, rule, |_| Ok(()))?;
        let y = dopri45(|_, x, d| d[0] = a - (a + b) * x[0], &[0.25], 0.0, 1.0, 1e-12, 1e-14)?;
        Ok((st.x.row(0)[0] - y[0]).abs())
    })();
    out.push(match sessile {
        Ok(e) => Check::le(S, "sessile_vs_rk_oracle", e, 1e-6, "centre node, n = 2, constant rates"),
        Err(e) => Check::failed(S, "sessile_vs_rk_oracle", &e),
    });

    out.push(match dual_mode(rule) {
        Ok(e) => Check::le(
            S,
            "dual_mode_agreement",
            e,
            1e-3,
            "relative difference, marching vs picard",
        ),
        Err(e) => Check::failed(S, "dual_mode_agreement", &e),
    });
    out
}

/// Largest relative difference between the marching and Picard solutions of [`certified_problem`].
pub fn dual_mode(rule: PanelRule) -> Result<f64> {
    let cfg = certified_problem();
    let p = &cfg.params;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let horizon = cfg.numerics.horizon;
    let n_int = cfg.numerics.picard_intervals;
    let hbox = HBox::default_for(p, &cfg.bulk, horizon)?;
    let op = PicardOperator::new(&eval, p, &cfg.bulk, n_int, horizon, hbox)?.with_rule(rule);
    let (v, _) = picard::picard_solve(&op, op.centre(), cfg.numerics.picard_tol, cfg.numerics.picard_max_iter)?;
    let mut radii = Vec::new();
    let st = march(&cfg, rule, |s| {
        radii.push(s.state().radius());
        Ok(())
    })?;
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(f64::MIN_POSITIVE);
    let mut worst: f64 = 0.0;
    for (b, &r) in radii.iter().enumerate().skip(1) {
        worst = worst.max(rel(v.radius(b), r));
    }
    let b = n_int;
    for a in 1..=b {
        worst = worst.max(rel(v.c[picard::tri_index(a, b)], st.grid.c()[a]));
        worst = worst.max(rel(v.x_at(a, b)[0], st.x.row(a)[0]));
        worst = worst.max(rel(v.s_at(a, b)[0], st.s.row(a)[0]));
        worst = worst.max(rel(v.psi_at(a, b)[0], st.psi.row(a)[0]));
    }
    Ok(worst)
}

pub fn invariants_suite(rule: PanelRule) -> Vec<Check> {
    const S: &str = "invariants";
    let mut out = Vec::new();

    // three-species Monod run: simplex, centre regularity, maximum principle
    let mut params = single_species(1.0, 0.1, 0.0);
    params.n = 3;
    params.m = 2;
    params.rho = vec![1.0, 1.2, 0.8];
    params.d_s = vec![1.0, 0.5];
    params.d_psi = vec![1.0, 1.0, 1.0];
    params.v_a = vec![0.1, 0.05, 0.08];
    let bulk = BulkEnvironment::constant(&[5.0, 2.0], &[1.0, 0.5, 0.8]);
    let kinetics = KineticsConfig::Monod {
        mu_max: vec![1.5, 0.8, 1.0],
        half_saturation: vec![0.5, 1.0, 0.3],
        limiting_substrate: Some(vec![1, 2, 1]),
        colonization: Some(vec![0.2, 0.1, 0.3]),
        yields: vec![vec![1.0, 0.0, 0.5], vec![0.0, 1.5, 0.2]],
    };
    let cfg = config(params.clone(), bulk, kinetics, 1e-2, 1.0);
    let (mut drift, mut centre, mut centre_u, mut below, mut above) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let run = march(&cfg, rule, |st| {
        let s = st.state();
        drift = drift.max(s.simplex_drift(&params));
        centre_u = centre_u.max(st.velocity().u[0].abs());
        if s.grid.len() > 1 {
            let (c1, u1, g0) = (s.grid.c()[1], st.velocity().u[1], st.growth()[0]);
            centre = centre.max((u1 / c1 - g0 / 3.0).abs());
        }
        for row in s.s.rows() {
            for (j, v) in row.iter().enumerate() {
                below = below.max(-v);
                above = above.max(v - [5.0, 2.0][j]);
            }
        }
        Ok(())
    });
    match run {
        Ok(_) => {
            out.push(Check::le(
                S,
                "simplex_preservation",
                drift,
                1e-6,
                "max |sum f - 1|, 3-species Monod, T = 1",
            ));
            out.push(Check::le(S, "centre_velocity_zero", centre_u, 0.0, "max |u(0, t)|"));
            out.push(Check::le(
                S,
                "centre_regularity",
                centre,
                1e-3,
                "max |u(c1)/c1 - G(0)/3|",
            ));
            out.push(Check::le(
                S,
                "maximum_principle",
                below.max(above),
                1e-9,
                "substrate within [0, S*]",
            ));
        }
        Err(e) => out.push(Check::failed(S, "three_species_run", &e)),
    }

    out.push(match formulation_gap(rule) {
        Ok((gap, tol)) => Check::le(
            S,
            "formulation_equivalence",
            gap,
            10.0 * tol,
            format!("max |c_direct - c_cubic|, quadrature tolerance {tol:.3e}"),
        ),
        Err(e) => Check::failed(S, "formulation_equivalence", &e),
    });

    // regime exit
    let mut cfg = config(
        single_species(1.0, 0.1, 0.5),
        BulkEnvironment::constant(&[1.0], &[1.0]),
        constant_growth(3.0),
        1e-2,
        2.0,
    );
    cfg.numerics.regime = Regime::General;
    let mut last_flux = f64::NAN;
    let r = march(&cfg, rule, |st| {
        last_flux = st.record()?.status.net_flux;
        Ok(())
    });
    let exit_ok = match r.as_ref().map_err(|e| e.root()) {
        Err(Error::RegimeExit { net_flux, .. }) => *net_flux <= 0.0 && last_flux > 0.0,
        _ => false,
    };
    out.push(Check {
        suite: S.into(),
        name: "regime_exit".into(),
        passed: exit_ok,
        measured: last_flux,
        threshold: 0.0,
        detail: "general regime stops at the first level with sigma_a - sigma_d <= 0".into(),
    });
    cfg.params.delta = 0.0;
    out.push(match march(&cfg, rule, |_| Ok(())) {
        Ok(st) => Check::le(
            S,
            "no_exit_without_detachment",
            (st.t - 2.0).abs(),
            1e-9,
            "delta = 0 runs to the horizon",
        ),
        Err(e) => Check::failed(S, "no_exit_without_detachment", &e),
    });

    // boundary seeding
    let mut p2 = single_species(1.0, 0.1, 0.0);
    p2.n = 2;
    p2.rho = vec![1.0, 2.0];
    p2.d_psi = vec![1.0, 1.0];
    p2.v_a = vec![0.1, 0.3];
    let seed = crate::model::boundary_fractions(&[1.0, 1.0], &p2);
    let kin2 = KineticsConfig::Affine {
        sessile: AffineConfig {
            offset: Some(vec![1.0, 0.5]),
            slope: None,
        },
        invasion: AffineConfig::default(),
        substrate: AffineConfig::default(),
        planktonic: AffineConfig::default(),
    };
    let cfg = config(p2, BulkEnvironment::constant(&[1.0], &[1.0, 1.0]), kin2, 1e-2, 0.5);
    let mut seed_err: f64 = 0.0;
    let r = seed.and_then(|seed| {
        march(&cfg, rule, |st| {
            let s = st.state();
            let newest = s.x.row(s.grid.len() - 1);
            seed_err = seed_err.max(newest.iter().zip(&seed).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            Ok(())
        })
    });
    out.push(match r {
        Ok(_) => Check::le(
            S,
            "boundary_seeding",
            seed_err,
            0.0,
            "newborn composition equals boundary fractions",
        ),
        Err(e) => Check::failed(S, "boundary_seeding", &e),
    });

    out.push(match contraction_rate(rule) {
        Ok((worst, lambda)) => Check::le(
            S,
            "contraction_rate",
            worst,
            lambda + 0.05,
            format!("max e_(k+1)/e_k from k = 2, Lambda = {lambda:.4}"),
        ),
        Err(e) => Check::failed(S, "contraction_rate", &e),
    });
    out
}

/// `(max |c_direct - c_cubic|, Richardson estimate of the cubic-form error)` on a smooth run.
pub fn formulation_gap(rule: PanelRule) -> Result<(f64, f64)> {
    let params = single_species(1.0, 0.1, 0.0);
    let bulk = BulkEnvironment::constant(&[4.0], &[1.0]);
    let kinetics = KineticsConfig::Monod {
        mu_max: vec![2.0],
        half_saturation: vec![1.0],
        limiting_substrate: None,
        colonization: None,
        yields: vec![vec![1.0]],
    };
    let run = |dt: f64, form: Formulation| -> Result<GranuleState> {
        let mut cfg = config(params.clone(), bulk.clone(), kinetics.clone(), dt, 1.0);
        cfg.numerics.formulation = form;
        march(&cfg, rule, |_| Ok(()))
    };
    let cubic = run(1e-2, Formulation::Cubic)?;
    let direct = run(1e-2, Formulation::Direct)?;
    let fine = run(5e-3, Formulation::Cubic)?;
    let gap = cubic
        .grid
        .c()
        .iter()
        .zip(direct.grid.c())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let tol = cubic
        .grid
        .c()
        .iter()
        .enumerate()
        .map(|(k, a)| (a - fine.grid.c()[2 * k]).abs())
        .fold(0.0, f64::max);
    Ok((gap, tol))
}

/// `(max_{k >= 2} e_{k+1}/e_k, Lambda)` for [`certified_problem`].
pub fn contraction_rate(rule: PanelRule) -> Result<(f64, f64)> {
    let cfg = certified_problem();
    let p = &cfg.params;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let horizon = cfg.numerics.horizon;
    let hbox = HBox::default_for(p, &cfg.bulk, horizon)?;
    let report = picard::estimate_contraction(
        &eval,
        p,
        &cfg.bulk,
        &hbox,
        horizon,
        horizon,
        &cfg.contraction.settings(),
    )?;
    if !report.certified {
        return Err(Error::NotCertified {
            horizon,
            guaranteed: report.t_guaranteed,
            lambda: report.lambda,
        });
    }
    let op = PicardOperator::new(&eval, p, &cfg.bulk, cfg.numerics.picard_intervals, horizon, hbox)?.with_rule(rule);
    let (_, hist) = picard::picard_solve(&op, op.centre(), cfg.numerics.picard_tol, cfg.numerics.picard_max_iter)?;
    let worst = hist.ratios().iter().skip(1).copied().fold(0.0, f64::max);
    Ok((worst, report.lambda))
}
