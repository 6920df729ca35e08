#![allow(dead_code)]

use std::sync::{Arc, OnceLock};

use nlkg::evolve::EvolveConfig;
use nlkg::field::Grid;
use nlkg::groundstate::{solve_ground_state, GroundState};
use nlkg::modulation::GridModes;

pub const ALPHA: f64 = 0.5;

pub fn ground() -> Arc<GroundState> {
    static GS: OnceLock<Arc<GroundState>> = OnceLock::new();
    GS.get_or_init(|| Arc::new(solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap())).clone()
}

/// Grid modes at dx = 0.05 (maps, searches) and 0.02 (certificates).
pub fn coarse() -> &'static GridModes {
    static M: OnceLock<GridModes> = OnceLock::new();
    M.get_or_init(|| GridModes::new(ground(), ALPHA, 0.05).unwrap())
}

pub fn fine() -> &'static GridModes {
    static M: OnceLock<GridModes> = OnceLock::new();
    M.get_or_init(|| GridModes::new(ground(), ALPHA, 0.02).unwrap())
}

pub fn grid(modes: &GridModes, half_len: f64) -> Grid {
    Grid::new(half_len, modes.dx).unwrap()
}

pub fn ecfg(modes: &GridModes, t_max: f64, sample_dt: f64) -> EvolveConfig {
    let dt = modes.dx / 2.0;
    EvolveConfig {
        dt,
        t_max,
        blowup_norm_factor: 10.0,
        sample_every: (sample_dt / dt).round().max(1.0) as usize,
        p: 3.0,
        alpha: ALPHA,
        q_h_norm: modes.q_h_norm,
        linear: false,
    }
}
