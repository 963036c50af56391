//! Acceptance criteria 1-11. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. Reference values come from closed forms and
//! oracles written here, not from the solver's own validation module.

use std::panic::{self, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use granulesim_core::characteristics::CharacteristicGrid;
use granulesim_core::elliptic::{self, EllipticSettings};
use granulesim_core::kinetics::Affine;
use granulesim_core::simulation::{self, RunSummary};
use granulesim_core::{
    AdmissibleBox, AffineKinetics, BulkEnvironment, Error, Formulation, GranuleState, MarchSettings, ModelParameters,
    MonodKinetics, NodeField, RateEvaluator, SimulationConfig, Stepper,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;
type Criterion = (&'static str, fn() -> Outcome);
type CliRun = (i32, String, Vec<(f64, f64)>);

const BIN: &str = env!("CARGO_BIN_EXE_granulesim");

fn main() {
    let criteria: [Criterion; 11] = [
        ("zero-growth exactness", zero_growth),
        ("closed-form growth", closed_form_growth),
        ("elliptic closed form", elliptic_closed_form),
        ("oracle equivalence", oracle_equivalence),
        ("simplex invariant", simplex_invariant),
        ("centre regularity", centre_regularity),
        ("dual-mode agreement", dual_mode),
        ("contraction rate", contraction_rate),
        ("formulation equivalence", formulation_equivalence),
        ("regime handling", regime_handling),
        ("boundary seeding", boundary_seeding),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let (ok, detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {:>2} {} {name}: {detail}",
            k + 1,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn cfg(text: &str) -> SimulationConfig {
    let c: SimulationConfig = toml::from_str(text).expect("test config parses");
    c.validate().expect("test config is valid");
    c
}

fn single(v_a: f64, delta: f64, kinetics: &str, s_star: f64, dt: f64, horizon: f64, extra: &str) -> SimulationConfig {
    cfg(&format!(
        r#"
[params]
n = 1
m = 1
rho = [1.0]
D_S = [1.0]
D_Psi = [1.0]
v_a = [{v_a}]
delta = {delta}

[bulk]
S_star = [{s_star}]
Psi_star = [1.0]

[kinetics]
{kinetics}

[numerics]
dt = {dt}
horizon = {horizon}
{extra}
"#
    ))
}

fn run_ok(c: &SimulationConfig, mode: simulation::Mode) -> Result<RunSummary, String> {
    simulation::run(c, mode).map_err(|f| f.error.to_string())
}

fn max_abs(it: impl Iterator<Item = f64>) -> f64 {
    it.fold(0.0, |m, v| m.max(v.abs()))
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn read_radius(path: &Path) -> Vec<(f64, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect()
}

const ZERO_TOML: &str = r#"
[params]
n = 1
m = 1
rho = [1.0]
D_S = [1.0]
D_Psi = [1.0]
v_a = [0.1]

[bulk]
S_star = [1.0]
Psi_star = [1.0]

[kinetics]
model = "zero"

[numerics]
dt = 0.01
horizon = 1.0
"#;

fn zero_growth() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = write_config(dir.path(), "zero.toml", ZERO_TOML);
    let out = dir.path().join("out");
    let start = Instant::now();
    let status = Command::new(BIN)
        .args(["run", "--config"])
        .arg(&config)
        .args(["--mode", "marching", "--out"])
        .arg(&out)
        .status()
        .map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    if !status.success() {
        return Err(format!("granulesim exited with {status}"));
    }
    let rows = read_radius(&out.join("radius.csv"));
    let err = max_abs(rows.iter().map(|(t, r)| r - 0.1 * t));
    let last = rows.last().map(|r| r.0).unwrap_or(0.0);
    Ok((
        err <= 1e-10 && secs < 1.0 && (last - 1.0).abs() < 1e-12,
        format!("max |R - 0.1 t| = {err:.2e} over {} levels, {secs:.3} s", rows.len()),
    ))
}

fn closed_form_growth() -> Outcome {
    let exact = 0.1 * (1f64.exp() - 1.0);
    let rel = |dt: f64| -> Result<(f64, f64), String> {
        let c = single(
            0.1,
            0.0,
            "model = \"affine\"\nsessile = { offset = [3.0] }",
            1.0,
            dt,
            1.0,
            "",
        );
        let start = Instant::now();
        let s = run_ok(&c, simulation::Mode::Marching)?;
        Ok((
            (s.final_radius().unwrap() - exact).abs() / exact,
            start.elapsed().as_secs_f64(),
        ))
    };
    let (e1, secs) = rel(1e-3)?;
    let (e2, _) = rel(2e-3)?;
    let ratio = e2 / e1;
    Ok((
        e1 <= 5e-3 && (3.5..=4.5).contains(&ratio) && secs < 10.0,
        format!("relative error {e1:.2e} at dt = 1e-3, ratio e(2e-3)/e(1e-3) = {ratio:.3}, {secs:.2} s"),
    ))
}

fn elliptic_closed_form() -> Outcome {
    let (k, d, radius, s_star) = (0.6, 1.0, 1.0, 10.0);
    let p = ModelParameters {
        n: 1,
        m: 1,
        rho: vec![1.0],
        d_s: vec![d],
        d_psi: vec![1.0],
        v_a: vec![1.0],
        delta: 0.0,
    };
    let bulk = BulkEnvironment::constant(&[s_star], &[1.0]);
    let mut kin = AffineKinetics::zero(&p.rho, 1);
    kin.substrate = Affine::constant(&[-k]);
    let eval = RateEvaluator::new(&kin, &p, AdmissibleBox::new(&p, &bulk));
    let nodes = 101;
    let c: Vec<f64> = (0..nodes).map(|i| radius * i as f64 / (nodes - 1) as f64).collect();
    let grid = CharacteristicGrid::from_parts((0..nodes).map(|i| i as f64).collect(), c.clone(), vec![1.0; nodes])
        .map_err(|e| e.to_string())?;
    let x = NodeField::filled(nodes, &[1.0]);
    let prev = NodeField::filled(nodes, &[s_star]);
    let (s, _) = elliptic::solve_substrates(&grid, &x, &prev, &[s_star], &eval, &p, &EllipticSettings::default())
        .map_err(|e| e.to_string())?;
    let centre = (s.row(0)[0] - 9.9).abs();
    let profile = max_abs((0..nodes).map(|i| s.row(i)[0] - (s_star - k * (radius * radius - c[i] * c[i]) / (6.0 * d))));
    Ok((
        centre <= 1e-6 && profile <= 1e-6,
        format!("|S(0) - 9.9| = {centre:.2e}, profile max error {profile:.2e}"),
    ))
}

/// Node-centred finite differences for `D (r^2 y')' / r^2 = g(y)` on `[0, R]`
/// with `y'(0) = 0`, `y(R) = y_r`, solved by Newton with a tridiagonal solve.
fn fd_reference(cells: usize, radius: f64, d: f64, y_r: f64, g: impl Fn(f64) -> (f64, f64)) -> Vec<f64> {
    let h = radius / cells as f64;
    let mut y = vec![y_r; cells + 1];
    for _ in 0..100 {
        let mut lo = vec![0.0; cells];
        let mut di = vec![0.0; cells];
        let mut up = vec![0.0; cells];
        let mut rhs = vec![0.0; cells];
        for i in 0..cells {
            let (gv, dg) = g(y[i]);
            if i == 0 {
                // symmetry: Laplacian -> 6 (y1 - y0) / h^2
                let a = 6.0 * d / (h * h);
                di[0] = -a - dg;
                up[0] = a;
                rhs[0] = -(a * (y[1] - y[0]) - gv);
            } else {
                let r = i as f64 * h;
                let wp = (r + 0.5 * h).powi(2) / (r * r) * d / (h * h);
                let wm = (r - 0.5 * h).powi(2) / (r * r) * d / (h * h);
                lo[i] = wm;
                di[i] = -wp - wm - dg;
                up[i] = wp;
                rhs[i] = -(wp * (y[i + 1] - y[i]) - wm * (y[i] - y[i - 1]) - gv);
            }
        }
        up[cells - 1] = 0.0;
        // Thomas
        for i in 1..cells {
            let w = lo[i] / di[i - 1];
            di[i] -= w * up[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
        let mut dy = vec![0.0; cells];
        dy[cells - 1] = rhs[cells - 1] / di[cells - 1];
        for i in (0..cells - 1).rev() {
            dy[i] = (rhs[i] - up[i] * dy[i + 1]) / di[i];
        }
        let mut step = 0.0f64;
        for i in 0..cells {
            y[i] = (y[i] + dy[i]).max(0.0);
            step = step.max(dy[i].abs());
        }
        if step < 1e-13 * y_r.max(1.0) {
            break;
        }
    }
    y
}

fn interp(y: &[f64], radius: f64, r: f64) -> f64 {
    let cells = y.len() - 1;
    let pos = (r / radius * cells as f64).min(cells as f64);
    let i = (pos.floor() as usize).min(cells - 1);
    let w = pos - i as f64;
    y[i] * (1.0 - w) + y[i + 1] * w
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_611);
    let nodes = 200;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mu = rng.gen_range(0.5..2.0);
        let k_half = rng.gen_range(0.5..5.0);
        let yield_ = rng.gen_range(0.05..0.5);
        let rho = rng.gen_range(1.0..10.0);
        let d = rng.gen_range(0.5..2.0);
        let radius = rng.gen_range(0.2..1.0);
        let s_star = rng.gen_range(1.0..10.0);
        let p = ModelParameters {
            n: 1,
            m: 1,
            rho: vec![rho],
            d_s: vec![d],
            d_psi: vec![1.0],
            v_a: vec![1.0],
            delta: 0.0,
        };
        let bulk = BulkEnvironment::constant(&[s_star], &[1.0]);
        let kin = MonodKinetics {
            rho: vec![rho],
            mu_max: vec![mu],
            half_saturation: vec![k_half],
            limiting_substrate: vec![0],
            colonization: vec![0.0],
            yields: vec![vec![yield_]],
        };
        let eval = RateEvaluator::new(&kin, &p, AdmissibleBox::new(&p, &bulk));
        let c: Vec<f64> = (0..nodes).map(|i| radius * i as f64 / (nodes - 1) as f64).collect();
        let grid = CharacteristicGrid::from_parts((0..nodes).map(|i| i as f64).collect(), c.clone(), vec![1.0; nodes])
            .map_err(|e| e.to_string())?;
        let x = NodeField::filled(nodes, &[rho]);
        let prev = NodeField::filled(nodes, &[s_star]);
        let (s, _) = elliptic::solve_substrates(&grid, &x, &prev, &[s_star], &eval, &p, &EllipticSettings::default())
            .map_err(|e| e.to_string())?;
        // uptake Y mu S/(K+S) X and its derivative
        let a = yield_ * mu * rho;
        let reference = fd_reference(4000, radius, d, s_star, |y| {
            (a * y / (k_half + y), a * k_half / (k_half + y).powi(2))
        });
        let err = max_abs((0..nodes).map(|i| s.row(i)[0] - interp(&reference, radius, c[i])));
        worst = worst.max(err);
    }
    Ok((
        worst <= 1e-4,
        format!("max |S - S_fd| = {worst:.2e} over 20 Monod draws, {nodes}-node grids"),
    ))
}

fn with_stepper<T>(
    c: &SimulationConfig,
    formulation: Formulation,
    mut visit: impl FnMut(&Stepper) -> Result<T, String>,
) -> Result<Vec<T>, String> {
    let p = &c.params;
    let kin = c.kinetics.build(p).map_err(|e| e.to_string())?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &c.bulk));
    let mut settings = MarchSettings::new(c.numerics.dt);
    settings.formulation = formulation;
    settings.regime = c.numerics.regime;
    let mut stepper = Stepper::new(&eval, p, &c.bulk, settings).map_err(|e| e.to_string())?;
    let start = Instant::now();
    let mut out = vec![visit(&stepper)?];
    for _ in 0..c.steps() {
        stepper.step(start).map_err(|e| e.to_string())?;
        out.push(visit(&stepper)?);
    }
    Ok(out)
}

const THREE_SPECIES: &str = r#"
[params]
n = 3
m = 2
rho = [10.0, 12.0, 8.0]
D_S = [1.0, 0.6]
D_Psi = [0.1, 0.1, 0.1]
v_a = [1.0, 0.5, 0.8]

[bulk]
S_star = [5.0, 3.0]
Psi_star = [1.0, 2.0, 0.5]

[kinetics]
model = "monod"
mu_max = [1.2, 0.8, 1.0]
half_saturation = [0.5, 0.3, 1.0]
limiting_substrate = [1, 2, 1]
colonization = [0.2, 0.1, 0.3]
yields = [[0.05, 0.0, 0.04], [0.0, 0.06, 0.0]]

[numerics]
dt = 2.0e-3
horizon = 1.0
"#;

fn simplex_invariant() -> Outcome {
    let c = cfg(THREE_SPECIES);
    let rho = c.params.rho.clone();
    let drift = with_stepper(&c, Formulation::Cubic, |st| {
        let x = &st.state().x;
        Ok(max_abs(x.rows().map(|row| {
            row.iter().zip(&rho).map(|(x, r)| x / r).sum::<f64>() - 1.0
        })))
    })?;
    let worst = drift.iter().copied().fold(0.0, f64::max);
    Ok((
        worst <= 1e-6,
        format!("max |sum f - 1| = {worst:.2e} over {} levels", drift.len()),
    ))
}

fn monod_single(dt: f64, horizon: f64) -> SimulationConfig {
    single(
        0.1,
        0.0,
        "model = \"monod\"\nmu_max = [2.0]\nhalf_saturation = [1.0]\nyields = [[1.0]]",
        4.0,
        dt,
        horizon,
        "",
    )
}

fn centre_regularity() -> Outcome {
    let c = monod_single(1e-3, 1.0);
    let per_level = with_stepper(&c, Formulation::Cubic, |st| {
        let vel = st.velocity();
        let cc = st.state().grid.c();
        let u0 = vel.u[0].abs();
        let reg = if cc.len() > 1 {
            (vel.u[1] / cc[1] - st.growth()[0] / 3.0).abs()
        } else {
            0.0
        };
        Ok((u0, reg))
    })?;
    let u0 = per_level.iter().map(|v| v.0).fold(0.0, f64::max);
    let reg = per_level.iter().map(|v| v.1).fold(0.0, f64::max);
    Ok((
        u0 == 0.0 && reg <= 1e-3,
        format!("max |u(0,t)| = {u0:e}, max |u(c1)/c1 - G(0)/3| = {reg:.2e} (dt = 1e-3)"),
    ))
}

const CERTIFIED: &str = r#"
[params]
n = 1
m = 1
rho = [10.0]
D_S = [1.0]
D_Psi = [1.0]
v_a = [1.0]

[bulk]
S_star = [50.0]
Psi_star = [1.0]

[kinetics]
model = "monod"
mu_max = [0.5]
half_saturation = [1.0]
yields = [[0.5]]

[numerics]
dt = 0.001953125
horizon = 0.25
picard_intervals = 128

[output]
snapshots = [0.125, 0.25]
"#;

fn rel_diff(a: &NodeField, b: &NodeField) -> f64 {
    let scale = max_abs(b.as_slice().iter().copied()).max(f64::MIN_POSITIVE);
    max_abs(a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y)) / scale
}

fn dual_mode() -> Outcome {
    let c = cfg(CERTIFIED);
    let m = run_ok(&c, simulation::Mode::Marching)?;
    let p = run_ok(&c, simulation::Mode::Picard)?;
    let report = p.contraction.as_ref().ok_or("no contraction report")?;
    if m.radius.len() != p.radius.len() || m.profiles.len() != p.profiles.len() {
        return Err("time levels or snapshots differ between modes".into());
    }
    let r_scale = max_abs(p.radius.iter().map(|r| r.radius));
    let r_err = max_abs(m.radius.iter().zip(&p.radius).map(|(a, b)| a.radius - b.radius)) / r_scale;
    let mut field_err = 0.0f64;
    for (a, b) in m.profiles.iter().zip(&p.profiles) {
        if a.r.len() != b.r.len() {
            return Err(format!("snapshot t = {} has {} vs {} nodes", a.t, a.r.len(), b.r.len()));
        }
        let r_scale = max_abs(b.r.iter().copied());
        field_err = field_err.max(max_abs(a.r.iter().zip(&b.r).map(|(x, y)| x - y)) / r_scale);
        for (fa, fb) in [(&a.f, &b.f), (&a.s, &b.s), (&a.psi, &b.psi)] {
            field_err = field_err.max(rel_diff(fa, fb));
        }
    }
    let horizon = c.numerics.horizon;
    Ok((
        report.certified && horizon <= report.t_guaranteed && r_err <= 1e-3 && field_err <= 1e-3,
        format!(
            "T = {horizon} <= T_guaranteed = {:.4}, rel. diff R = {r_err:.2e}, node fields = {field_err:.2e}",
            report.t_guaranteed
        ),
    ))
}

fn contraction_rate() -> Outcome {
    let c = cfg(CERTIFIED);
    let s = run_ok(&c, simulation::Mode::Picard)?;
    let rep = s.contraction.as_ref().ok_or("no contraction report")?;
    let a = rep.lambda_s.iter().sum::<f64>() + rep.lambda_psi.iter().sum::<f64>() + rep.lambda_c[0] + rep.lambda_c[1];
    let b = rep.lambda_x.iter().sum::<f64>() + rep.lambda_c[2];
    let t = c.numerics.horizon;
    let lambda = a * t * t + b * t;
    let consistent = (lambda - rep.lambda).abs() <= 1e-12 * lambda.max(1.0);
    let d = &s.diagnostics.picard_differences;
    let worst = d.windows(2).skip(1).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    Ok((
        rep.certified && consistent && d.len() >= 3 && worst <= lambda + 0.05,
        format!(
            "Lambda = aT^2 + bT = {lambda:.4} (a = {a:.4}, b = {b:.4}), max ratio from iteration 2 = {worst:.3e}, {} iterations",
            d.len()
        ),
    ))
}

fn formulation_equivalence() -> Outcome {
    let grid_c = |dt: f64, form: Formulation| -> Result<Vec<f64>, String> {
        let c = monod_single(dt, 1.0);
        let states: Vec<GranuleState> = with_stepper(&c, form, |st| Ok(st.state().clone()))?;
        Ok(states.last().unwrap().grid.c().to_vec())
    };
    let cubic = grid_c(1e-2, Formulation::Cubic)?;
    let direct = grid_c(1e-2, Formulation::Direct)?;
    let fine = grid_c(5e-3, Formulation::Cubic)?;
    let gap = max_abs(cubic.iter().zip(&direct).map(|(a, b)| a - b));
    // Richardson estimate of the second-order discretisation error at dt = 1e-2
    let tol = max_abs(cubic.iter().enumerate().map(|(k, a)| a - fine[2 * k])) / 3.0;
    Ok((
        gap <= 10.0 * tol,
        format!("max |c_direct - c_cubic| = {gap:.2e}, quadrature tolerance {tol:.2e}"),
    ))
}

fn regime_handling() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let growth = "model = \"affine\"\nsessile = { offset = [3.0] }";
    let text = |delta: f64| {
        format!(
            "[params]\nn = 1\nm = 1\nrho = [1.0]\nD_S = [1.0]\nD_Psi = [1.0]\nv_a = [0.1]\ndelta = {delta}\n\n\
             [bulk]\nS_star = [1.0]\nPsi_star = [1.0]\n\n[kinetics]\n{growth}\n\n\
             [numerics]\ndt = 0.01\nhorizon = 3.0\nregime = \"general\"\n"
        )
    };
    let run = |name: &str, delta: f64| -> Result<CliRun, String> {
        let config = write_config(dir.path(), &format!("{name}.toml"), &text(delta));
        let out = dir.path().join(name);
        let o = Command::new(BIN)
            .args(["run", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        let code = o.status.code().unwrap_or(-1);
        Ok((
            code,
            String::from_utf8_lossy(&o.stderr).into_owned(),
            read_radius(&out.join("radius.csv")),
        ))
    };

    let (code, stderr, rows) = run("detach", 0.5)?;
    let net = |r: f64| 0.1 - 0.5 * r * r;
    let all_positive = rows.iter().all(|&(_, r)| net(r) > 0.0);
    let exit = match simulation::run_marching(&cfg(&text(0.5))) {
        Err(f) => match f.error.root() {
            Error::RegimeExit { time, radius, .. } => Some((*time, *radius)),
            _ => None,
        },
        Ok(_) => None,
    };
    let (t_exit, r_exit) = exit.ok_or("library run did not report a regime exit")?;
    let last_t = rows.last().map(|r| r.0).unwrap_or(f64::NAN);
    let first_step = (t_exit - (last_t + 0.01)).abs() < 1e-9 && net(r_exit) <= 0.0;

    let (code0, _, rows0) = run("no_detach", 0.0)?;
    let reached = rows0.last().map(|r| (r.0 - 3.0).abs() < 1e-9).unwrap_or(false);
    Ok((
        code == 4 && stderr.contains("regime exit") && all_positive && first_step && code0 == 0 && reached,
        format!(
            "delta = 0.5: exit code {code} at t = {t_exit:.2}, R = {r_exit:.5} (sigma_a - sigma_d = {:.2e}); delta = 0: exit code {code0}, reached T",
            net(r_exit)
        ),
    ))
}

fn boundary_seeding() -> Outcome {
    let mut detail = Vec::new();
    let mut ok = true;
    for (v_a, expected) in [([1.0, 1.0], [0.25, 0.75]), ([2.0, 1.0], [0.4, 0.6])] {
        let c = cfg(&format!(
            "[params]\nn = 2\nm = 1\nrho = [1.0, 1.0]\nD_S = [1.0]\nD_Psi = [1.0, 1.0]\nv_a = [{}, {}]\n\n\
             [bulk]\nS_star = [1.0]\nPsi_star = [2.0, 6.0]\n\n\
             [kinetics]\nmodel = \"affine\"\nsessile = {{ offset = [1.0, 2.0] }}\n\n\
             [numerics]\ndt = 0.01\nhorizon = 1.0\n",
            v_a[0], v_a[1]
        ));
        let newborn = with_stepper(&c, Formulation::Cubic, |st| {
            let x = &st.state().x;
            Ok(x.row(x.nodes() - 1).to_vec())
        })?;
        let exact = newborn.iter().all(|row| row[..] == expected[..]);
        ok &= exact;
        detail.push(format!(
            "v_a = {v_a:?}: {} newborn nodes {} {expected:?}",
            newborn.len(),
            if exact { "==" } else { "!=" }
        ));
    }
    Ok((ok, detail.join("; ")))
}
