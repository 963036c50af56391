//! Fixtures shared by the criterion benches in `benches/`.

use granulesim_core::validation;
use granulesim_core::{CharacteristicGrid, NodeField, SimulationConfig};

/// Single-species Monod problem on which the Picard iteration is certified.
pub fn certified() -> SimulationConfig {
    validation::certified_problem()
}

/// Same problem with a custom step and horizon.
pub fn marching(dt: f64, horizon: f64) -> SimulationConfig {
    let mut cfg = certified();
    cfg.numerics.dt = dt;
    cfg.numerics.horizon = horizon;
    cfg.output.snapshots.clear();
    cfg
}

/// Uniform grid of `nodes` characteristics over `[0, radius]` with a uniform sessile state.
pub fn static_grid(nodes: usize, radius: f64, x: &[f64]) -> (CharacteristicGrid, NodeField) {
    let c = (0..nodes).map(|i| radius * i as f64 / (nodes - 1) as f64).collect();
    let grid = CharacteristicGrid::from_parts((0..nodes).map(|i| i as f64).collect(), c, vec![1.0; nodes])
        .expect("uniform grid is valid");
    (grid, NodeField::filled(nodes, x))
}
