//! Time marching of the coupled characteristic / elliptic / free-boundary system.

use serde::{Deserialize, Serialize};

use crate::bulk::BulkEnvironment;
use crate::characteristics::{self, CharacteristicGrid, Formulation, GranuleState, NodeRates, Velocity};
use crate::elliptic::{self, EllipticSettings};
use crate::error::{Error, Result};
use crate::field::NodeField;
use crate::freeboundary::{self, Regime, RegimeStatus};
use crate::kinetics::RateEvaluator;
use crate::model::{self, ModelParameters};
use crate::quadrature::PanelRule;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSettings {
    pub dt: f64,
    pub formulation: Formulation,
    pub regime: Regime,
    pub elliptic: EllipticSettings,
    pub rule: PanelRule,
}

impl MarchSettings {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            formulation: Formulation::default(),
            regime: Regime::default(),
            elliptic: EllipticSettings::default(),
            rule: PanelRule::TRAPEZOID,
        }
    }
}

/// Boundary quantities at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelRecord {
    pub t: f64,
    pub radius: f64,
    pub u_boundary: f64,
    pub status: RegimeStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub elliptic_iterations: usize,
    pub elliptic_max_residual: f64,
    pub elliptic_clamped: u64,
}

impl StepStats {
    fn absorb(&mut self, r: &elliptic::EllipticSolveReport) {
        self.elliptic_iterations += r.iterations;
        self.elliptic_max_residual = self.elliptic_max_residual.max(r.residual);
        self.elliptic_clamped += r.clamped;
    }
}

/// Explicit Heun stepper. Each step predicts the grid, radius and sessile
/// state, solves the elliptic problems at the predicted level, corrects with
/// the trapezoid rule and solves the elliptic problems once more.
pub struct Stepper<'a> {
    eval: &'a RateEvaluator<'a>,
    params: &'a ModelParameters,
    bulk: &'a BulkEnvironment,
    settings: MarchSettings,
    state: GranuleState,
    rates: NodeRates,
    vel: Velocity,
    step: usize,
}

impl<'a> Stepper<'a> {
    /// State at `t = 0`: the centre characteristic carrying freshly attached biomass.
    pub fn new(
        eval: &'a RateEvaluator<'a>,
        params: &'a ModelParameters,
        bulk: &'a BulkEnvironment,
        settings: MarchSettings,
    ) -> Result<Self> {
        if !(settings.dt > 0.0 && settings.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be > 0 (got {})", settings.dt)));
        }
        let psi0 = bulk.psi_star_at(0.0);
        let sa = model::sigma_a(&psi0, params)?;
        let x0 = model::boundary_fractions(&psi0, params)?;
        let state = GranuleState {
            t: 0.0,
            grid: CharacteristicGrid::at_birth(sa),
            x: NodeField::filled(1, &x0),
            s: NodeField::filled(1, &bulk.s_star_at(0.0)),
            psi: NodeField::filled(1, &psi0),
        };
        let rates = characteristics::node_rates(&state, eval);
        let vel = characteristics::velocities(&state.grid, &rates.g, settings.rule);
        Ok(Self {
            eval,
            params,
            bulk,
            settings,
            state,
            rates,
            vel,
            step: 0,
        })
    }

    pub fn state(&self) -> &GranuleState {
        &self.state
    }

    pub fn steps_taken(&self) -> usize {
        self.step
    }

    /// Growth rate `G` at every node of the current level.
    pub fn growth(&self) -> &[f64] {
        &self.rates.g
    }

    pub fn velocity(&self) -> &Velocity {
        &self.vel
    }

    pub fn record(&self) -> Result<LevelRecord> {
        let t = self.state.t;
        let radius = self.state.radius();
        let u_boundary = *self.vel.u.last().unwrap();
        let status = freeboundary::classify_regime(&self.bulk.psi_star_at(t), radius, self.params)?
            .with_velocity(u_boundary, self.settings.regime);
        Ok(LevelRecord {
            t,
            radius,
            u_boundary,
            status,
        })
    }

    fn wrap(&self, e: Error, started: std::time::Instant) -> Error {
        Error::AtStep {
            step: self.step + 1,
            time: self.state.t,
            elapsed_ms: started.elapsed().as_millis(),
            source: Box::new(e),
        }
    }

    /// Advances one step of size `dt`.
    pub fn step(&mut self, started: std::time::Instant) -> Result<StepStats> {
        self.try_step().map_err(|e| self.wrap(e, started))
    }

    fn try_step(&mut self) -> Result<StepStats> {
        let MarchSettings {
            dt,
            formulation,
            regime,
            elliptic: ell,
            rule,
        } = self.settings;
        let p = self.params;
        let st = &self.state;
        let t = st.t;
        let t1 = (self.step + 1) as f64 * dt;
        let radius = st.radius();
        let psi_t = self.bulk.psi_star_at(t);
        let status = freeboundary::classify_regime(&psi_t, radius, p)?;
        freeboundary::check_regime(&status, regime, t, radius)?;

        let psi_t1 = self.bulk.psi_star_at(t1);
        let s_t1 = self.bulk.s_star_at(t1);
        let sa1 = model::sigma_a(&psi_t1, p)?;
        let x_born = model::boundary_fractions(&psi_t1, p)?;
        let mut stats = StepStats::default();

        // predictor
        let rdot0 = freeboundary::radius_rate(*self.vel.u.last().unwrap(), status.sigma_a, radius, p, regime);
        let r_pred = radius + dt * rdot0;
        let mut grid_p = characteristics::advance(&st.grid, &self.rates.g, &self.vel, None, dt, formulation);
        grid_p.birth(t1, r_pred, freeboundary::boundary_flux(sa1, r_pred, p, regime));
        let mut x_p = characteristics::advance_sessile(&st.x, &self.rates.f, None, dt, p)?;
        x_p.push_row(&x_born);
        let (s_p, rep) = elliptic::solve_substrates(&grid_p, &x_p, &extend(&st.s, &s_t1), &s_t1, self.eval, p, &ell)?;
        stats.absorb(&rep);
        let (psi_p, rep) =
            elliptic::solve_planktonic(&grid_p, &extend(&st.psi, &psi_t1), &s_p, &psi_t1, self.eval, p, &ell)?;
        stats.absorb(&rep);
        let pred = GranuleState {
            t: t1,
            grid: grid_p,
            x: x_p,
            s: s_p,
            psi: psi_p,
        };
        let rates_p = characteristics::node_rates(&pred, self.eval);
        let vel_p = characteristics::velocities(&pred.grid, &rates_p.g, rule);

        // corrector
        let rdot1 = freeboundary::radius_rate(*vel_p.u.last().unwrap(), sa1, r_pred, p, regime);
        let r_new = radius + 0.5 * dt * (rdot0 + rdot1);
        let mut grid = characteristics::advance(
            &st.grid,
            &self.rates.g,
            &self.vel,
            Some((&pred.grid, &rates_p.g, &vel_p)),
            dt,
            formulation,
        );
        let status1 = freeboundary::classify_regime(&psi_t1, r_new, p)?;
        freeboundary::check_regime(&status1, regime, t1, r_new)?;
        grid.birth(t1, r_new, freeboundary::boundary_flux(sa1, r_new, p, regime));
        grid.check_monotone(t1)?;
        let mut f_p = rates_p.f.clone();
        f_p.truncate(st.grid.len());
        let mut x = characteristics::advance_sessile(&st.x, &self.rates.f, Some(&f_p), dt, p)?;
        x.push_row(&x_born);
        let (s, rep) = elliptic::solve_substrates(&grid, &x, &pred.s, &s_t1, self.eval, p, &ell)?;
        stats.absorb(&rep);
        let (psi, rep) = elliptic::solve_planktonic(&grid, &pred.psi, &s, &psi_t1, self.eval, p, &ell)?;
        stats.absorb(&rep);

        self.state = GranuleState { t: t1, grid, x, s, psi };
        self.rates = characteristics::node_rates(&self.state, self.eval);
        self.vel = characteristics::velocities(&self.state.grid, &self.rates.g, rule);
        self.step += 1;
        Ok(stats)
    }
}

fn extend(field: &NodeField, row: &[f64]) -> NodeField {
    let mut f = field.clone();
    f.push_row(row);
    f
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinetics::{AdmissibleBox, Affine, AffineKinetics};

    fn params(n: usize, delta: f64) -> ModelParameters {
        ModelParameters {
            n,
            m: 1,
            rho: vec![1.0; n],
            d_s: vec![1.0],
            d_psi: vec![1.0; n],
            v_a: vec![0.1; n],
            delta,
        }
    }

    fn march(kin: &AffineKinetics, p: &ModelParameters, settings: MarchSettings, steps: usize) -> Result<GranuleState> {
        let bulk = BulkEnvironment::constant(&[1.0], &vec![1.0; p.n]);
        let eval = RateEvaluator::new(kin, p, AdmissibleBox::new(p, &bulk));
        let mut st = Stepper::new(&eval, p, &bulk, settings)?;
        let t = std::time::Instant::now();
        for _ in 0..steps {
            st.step(t)?;
        }
        Ok(st.state().clone())
    }

    #[test]
    fn zero_growth_keeps_characteristics_fixed() {
        let p = params(1, 0.0);
        let kin = AffineKinetics::zero(&p.rho, 1);
        let st = march(&kin, &p, MarchSettings::new(0.01), 100).unwrap();
        assert_eq!(st.grid.len(), 101);
        for (k, &c) in st.grid.c().iter().enumerate() {
            assert!((c - 0.1 * k as f64 * 0.01).abs() < 1e-13);
        }
        assert!((st.radius() - 0.1).abs() < 1e-13);
    }

    #[test]
    fn constant_growth_matches_closed_form() {
        let p = params(1, 0.0);
        let mut kin = AffineKinetics::zero(&p.rho, 1);
        kin.sessile = Affine::constant(&[3.0]);
        let exact = 0.1 * (1.0f64.exp() - 1.0);
        for form in [Formulation::Cubic, Formulation::Direct] {
            let mut s = MarchSettings::new(0.01);
            s.formulation = form;
            let st = march(&kin, &p, s, 100).unwrap();
            assert!(
                ((st.radius() - exact) / exact).abs() < 5e-3,
                "{form:?}: {}",
                st.radius()
            );
        }
    }

    #[test]
    fn regime_exit_in_general_mode() {
        let p = params(1, 0.5);
        let mut kin = AffineKinetics::zero(&p.rho, 1);
        kin.sessile = Affine::constant(&[3.0]);
        let mut s = MarchSettings::new(0.01);
        s.regime = Regime::General;
        let err = march(&kin, &p, s, 10_000).unwrap_err();
        match err.root() {
            Error::RegimeExit { radius, .. } => assert!((radius - 0.2f64.sqrt()).abs() < 0.01, "{radius}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_species_simplex_and_seeding() {
        let mut p = params(2, 0.0);
        p.v_a = vec![0.1, 0.3];
        let mut kin = AffineKinetics::zero(&p.rho, 1);
        kin.sessile = Affine::constant(&[1.0, 2.0]);
        let st = march(&kin, &p, MarchSettings::new(0.01), 50).unwrap();
        assert!(st.simplex_drift(&p) < 1e-12);
        let seeded = model::boundary_fractions(&[1.0, 1.0], &p).unwrap();
        assert!((seeded[0] - 0.25).abs() < 1e-15 && (seeded[1] - 0.75).abs() < 1e-15);
        assert_eq!(st.x.row(st.grid.len() - 1), &seeded[..]);
    }
}
