//! Run drivers: marching and Picard modes, producing a [`RunSummary`].

use std::collections::BTreeSet;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::{Numerics, SimulationConfig};
use crate::error::{Error, Result};
use crate::field::NodeField;
use crate::freeboundary::{self, Classification, Regime};
use crate::kinetics::{AdmissibleBox, RateEvaluator};
use crate::marching::{MarchSettings, Stepper};
use crate::model::{self, ModelParameters};
use crate::picard::{self, ContractionReport, HBox, PicardOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Marching,
    Picard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusRow {
    pub t: f64,
    pub radius: f64,
    pub sigma_a: f64,
    pub sigma_d: f64,
    pub u_boundary: f64,
    pub regime: Classification,
}

/// Radial profile at one time level, sampled at the characteristic nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub t: f64,
    pub t0: Vec<f64>,
    pub r: Vec<f64>,
    /// Volume fractions `X_i / rho_i`.
    pub f: NodeField,
    pub s: NodeField,
    pub psi: NodeField,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub steps: usize,
    pub nodes: usize,
    /// `max |sum_i f_i - 1|` over all nodes and time levels.
    pub max_simplex_drift: f64,
    /// Largest deviation of a newborn node's composition from the boundary fractions.
    pub max_seed_error: f64,
    pub elliptic_iterations: usize,
    pub elliptic_max_residual: f64,
    pub clamp_events: u64,
    pub picard_iterations: usize,
    pub picard_differences: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub mode: Mode,
    pub numerics: Numerics,
    pub radius: Vec<RadiusRow>,
    pub profiles: Vec<Profile>,
    pub diagnostics: Diagnostics,
    pub contraction: Option<ContractionReport>,
}

impl RunSummary {
    fn new(mode: Mode, numerics: &Numerics) -> Self {
        Self {
            mode,
            numerics: numerics.clone(),
            radius: Vec::new(),
            profiles: Vec::new(),
            diagnostics: Diagnostics::default(),
            contraction: None,
        }
    }

    pub fn final_radius(&self) -> Option<f64> {
        self.radius.last().map(|r| r.radius)
    }
}

/// A failed run: the error plus whatever was computed before it.
#[derive(Debug)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Option<Box<RunSummary>>,
}

impl From<Error> for RunFailure {
    fn from(error: Error) -> Self {
        Self { error, partial: None }
    }
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub type RunResult = std::result::Result<RunSummary, RunFailure>;

/// Snapshot times keyed by the index of the nearest time level.
fn snapshot_levels(times: &[f64], step: f64) -> BTreeSet<usize> {
    times.iter().map(|t| (t / step).round() as usize).collect()
}

fn fractions(x: &NodeField, params: &ModelParameters) -> NodeField {
    let mut f = NodeField::new(x.width());
    for row in x.rows() {
        f.push_row(&model::volume_fractions(row, params));
    }
    f
}

fn simplex_drift(f: &NodeField) -> f64 {
    f.rows()
        .map(|r| (r.iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

pub fn run_marching(cfg: &SimulationConfig) -> RunResult {
    let started = Instant::now();
    cfg.validate()?;
    let p = &cfg.params;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let nm = &cfg.numerics;
    let settings = MarchSettings {
        dt: nm.dt,
        formulation: nm.formulation,
        regime: nm.regime,
        elliptic: nm.elliptic,
        rule: Default::default(),
    };
    let mut stepper = Stepper::new(&eval, p, &cfg.bulk, settings)?;
    let mut summary = RunSummary::new(Mode::Marching, nm);
    let snaps = snapshot_levels(&cfg.output.snapshots, nm.dt);
    let steps = cfg.steps();

    let observe = |stepper: &Stepper, summary: &mut RunSummary| -> Result<()> {
        let st = stepper.state();
        let rec = stepper.record()?;
        summary.radius.push(RadiusRow {
            t: rec.t,
            radius: rec.radius,
            sigma_a: rec.status.sigma_a,
            sigma_d: rec.status.sigma_d,
            u_boundary: rec.u_boundary,
            regime: rec.status.classification,
        });
        let f = fractions(&st.x, p);
        let d = &mut summary.diagnostics;
        d.max_simplex_drift = d.max_simplex_drift.max(simplex_drift(&f));
        let seed = model::boundary_fractions(&cfg.bulk.psi_star_at(st.t), p)?;
        let newest = st.x.row(st.grid.len() - 1);
        let err = newest.iter().zip(&seed).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        d.max_seed_error = d.max_seed_error.max(err);
        d.nodes = st.grid.len();
        if snaps.contains(&stepper.steps_taken()) {
            summary.profiles.push(Profile {
                t: st.t,
                t0: st.grid.t0().to_vec(),
                r: st.grid.c().to_vec(),
                f,
                s: st.s.clone(),
                psi: st.psi.clone(),
            });
        }
        Ok(())
    };

    let finish = |summary: &mut RunSummary, stepper: &Stepper| {
        summary.diagnostics.steps = stepper.steps_taken();
        summary.diagnostics.clamp_events = eval.clamp_count();
        summary.diagnostics.wall_time_s = started.elapsed().as_secs_f64();
    };

    let result = (|| -> Result<()> {
        observe(&stepper, &mut summary)?;
        for _ in 0..steps {
            let stats = stepper.step(started)?;
            let d = &mut summary.diagnostics;
            d.elliptic_iterations += stats.elliptic_iterations;
            d.elliptic_max_residual = d.elliptic_max_residual.max(stats.elliptic_max_residual);
            observe(&stepper, &mut summary)?;
        }
        Ok(())
    })();
    finish(&mut summary, &stepper);
    match result {
        Ok(()) => Ok(summary),
        Err(error) => Err(RunFailure {
            error,
            partial: Some(Box::new(summary)),
        }),
    }
}

fn picard_setup(cfg: &SimulationConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.numerics.regime == Regime::General && cfg.params.delta > 0.0 {
        return Err(Error::Config(
            "picard mode covers the attachment-only regime; set regime = \"attachment_only\" or delta = 0".into(),
        ));
    }
    Ok(())
}

fn hbox_for(cfg: &SimulationConfig, t1: f64) -> Result<HBox> {
    match &cfg.contraction.h {
        Some(h) => Ok(h.clone()),
        None => HBox::default_for(&cfg.params, &cfg.bulk, t1),
    }
}

/// Contraction estimate for the configured horizon.
pub fn contraction_report(cfg: &SimulationConfig) -> Result<ContractionReport> {
    picard_setup(cfg)?;
    let p = &cfg.params;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let horizon = cfg.numerics.horizon;
    let t1 = cfg.contraction.t1.unwrap_or(horizon);
    let hbox = hbox_for(cfg, t1)?;
    picard::estimate_contraction(&eval, p, &cfg.bulk, &hbox, t1, horizon, &cfg.contraction.settings())
}

pub fn run_picard(cfg: &SimulationConfig) -> RunResult {
    let started = Instant::now();
    picard_setup(cfg)?;
    let p = &cfg.params;
    let nm = &cfg.numerics;
    let kin = cfg.kinetics.build(p)?;
    let eval = RateEvaluator::new(kin.as_ref(), p, AdmissibleBox::new(p, &cfg.bulk));
    let mut summary = RunSummary::new(Mode::Picard, nm);
    let fail = |error: Error, summary: RunSummary| RunFailure {
        error,
        partial: Some(Box::new(summary)),
    };

    let report = contraction_report(cfg)?;
    let certified = report.certified;
    let (guaranteed, lambda) = (report.t_guaranteed, report.lambda);
    summary.contraction = Some(report.clone());
    if !certified && !nm.override_certification {
        summary.diagnostics.wall_time_s = started.elapsed().as_secs_f64();
        return Err(fail(
            Error::NotCertified {
                horizon: nm.horizon,
                guaranteed,
                lambda,
            },
            summary,
        ));
    }

    let op = match PicardOperator::new(&eval, p, &cfg.bulk, nm.picard_intervals, nm.horizon, report.h.clone()) {
        Ok(op) => op,
        Err(e) => return Err(fail(e, summary)),
    };
    let solved = picard::picard_solve(&op, op.centre(), nm.picard_tol, nm.picard_max_iter);
    let (v, history) = match solved {
        Ok(ok) => ok,
        Err(e) => {
            if let Error::NonConvergence { residual_history, .. } = &e {
                summary.diagnostics.picard_differences = residual_history.clone();
                summary.diagnostics.picard_iterations = residual_history.len();
            }
            summary.diagnostics.wall_time_s = started.elapsed().as_secs_f64();
            return Err(fail(e, summary));
        }
    };

    let snaps = snapshot_levels(&cfg.output.snapshots, v.step());
    let mut drift: f64 = 0.0;
    let mut seed_err: f64 = 0.0;
    for b in 0..=v.intervals {
        let t = v.time(b);
        let radius = v.radius(b);
        let psi_star = cfg.bulk.psi_star_at(t);
        let status = match freeboundary::classify_regime(&psi_star, radius, p) {
            Ok(s) => s,
            Err(e) => return Err(fail(e, summary)),
        };
        let (_, u) = op.column_velocity(&v, b);
        summary.radius.push(RadiusRow {
            t,
            radius,
            sigma_a: status.sigma_a,
            sigma_d: 0.0,
            u_boundary: u[b],
            regime: status.classification,
        });
        let mut x = NodeField::new(p.n);
        let mut s = NodeField::new(p.m);
        let mut psi = NodeField::new(p.n);
        for a in 0..=b {
            x.push_row(v.x_at(a, b));
            s.push_row(v.s_at(a, b));
            psi.push_row(v.psi_at(a, b));
        }
        let f = fractions(&x, p);
        drift = drift.max(simplex_drift(&f));
        if let Ok(seed) = model::boundary_fractions(&psi_star, p) {
            let e = x
                .row(b)
                .iter()
                .zip(&seed)
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            seed_err = seed_err.max(e);
        }
        if snaps.contains(&b) {
            summary.profiles.push(Profile {
                t,
                t0: (0..=b).map(|a| v.time(a)).collect(),
                r: (0..=b).map(|a| v.c[picard::tri_index(a, b)]).collect(),
                f,
                s,
                psi,
            });
        }
    }
    let d = &mut summary.diagnostics;
    d.steps = v.intervals;
    d.nodes = v.intervals + 1;
    d.max_simplex_drift = drift;
    d.max_seed_error = seed_err;
    d.picard_iterations = history.iterations();
    d.picard_differences = history.differences;
    d.clamp_events = eval.clamp_count();
    d.wall_time_s = started.elapsed().as_secs_f64();
    Ok(summary)
}

pub fn run(cfg: &SimulationConfig, mode: Mode) -> RunResult {
    match mode {
        Mode::Marching => run_marching(cfg),
        Mode::Picard => run_picard(cfg),
    }
}
