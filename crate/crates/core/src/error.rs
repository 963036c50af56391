use thiserror::Error;

/// Errors raised by the model, the solvers and the run drivers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("no attaching biomass: sum of v_a,i * Psi*_i is zero, boundary composition undefined")]
    NoAttachingBiomass,

    #[error("degenerate characteristic grid: node {index} has zero radius")]
    DegenerateGrid { index: usize },

    #[error("characteristics crossed between nodes {index} and {} at t = {time}; reduce dt", index + 1)]
    CharacteristicCrossing { index: usize, time: f64 },

    #[error("sessile concentration of species {species} at node {node} left [0, rho]: {value}")]
    StateBound { node: usize, species: usize, value: f64 },

    #[error("{solver} did not converge in {iterations} iterations (last residual {:.3e})", residual_history.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        solver: &'static str,
        iterations: usize,
        residual_history: Vec<f64>,
    },

    #[error("regime exit at t = {time}: sigma_a - sigma_d = {net_flux:.6e} <= 0 (R = {radius})")]
    RegimeExit { time: f64, radius: f64, net_flux: f64 },

    #[error("fixed-point iterate left the admissible h-box ({component}, excess {excess:.3e}); use a smaller horizon")]
    HorizonTooLarge { component: String, excess: f64 },

    #[error("contraction not certified: horizon {horizon} > guaranteed {guaranteed} or Lambda = {lambda:.4} >= 1")]
    NotCertified { horizon: f64, guaranteed: f64, lambda: f64 },

    #[error("kinetics produced a non-finite value: {0}")]
    KineticsDomain(String),

    #[error("oracle failure: {0}")]
    Oracle(String),

    #[error("step {step} (t = {time}, {elapsed_ms} ms): {source}")]
    AtStep {
        step: usize,
        time: f64,
        elapsed_ms: u128,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// The innermost error, with step context stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
