//! Method-of-lines RK4 for `u_tt + 2α u_t − u_xx + u = f(u)` with Dirichlet
//! ends, observers, blow-up detection and the cut-off companion runs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{functionals, FieldState, Functionals};
use crate::modulation::FrameSummary;
use crate::numerics::Power;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_max: f64,
    pub blowup_norm_factor: f64,
    pub sample_every: usize,
    pub p: f64,
    pub alpha: f64,
    /// `‖Q⃗‖_𝓗`, the reference for the blow-up norm threshold.
    pub q_h_norm: f64,
    /// Debug switch: drop the nonlinearity.
    #[serde(default)]
    pub linear: bool,
}

impl EvolveConfig {
    pub fn validate(&self, dx: f64) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= 0.5 * dx + 1e-15) {
            return Err(Error::InvalidInput(format!("dt = {} violates dt <= 0.5 dx = {}", self.dt, 0.5 * dx)));
        }
        if !(self.t_max > 0.0) || self.sample_every == 0 {
            return Err(Error::InvalidInput("t_max must be positive and sample_every at least 1".into()));
        }
        Ok(())
    }

    pub fn sample_dt(&self) -> f64 {
        self.dt * self.sample_every as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Terminal {
    Blowup,
    Decay,
    Tmax,
    Stop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: Terminal,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub f: Functionals,
    /// `∫₀ᵗ 2α‖u̇‖²` accumulated by the integrator.
    pub dissipated: f64,
    /// `E(t) − E(t_prev) + 2α∫_{t_prev}^t ‖u̇‖²` over the preceding window.
    pub balance_residual: f64,
    /// `max(|u(−L)|, |u(L)|, |u| at the first interior nodes)`.
    pub boundary: f64,
    pub frame: Option<FrameSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupRecord {
    pub t: f64,
    pub h_norm: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: Vec<Event>,
    pub terminal: Terminal,
    #[serde(skip)]
    pub final_state: Option<FieldState>,
    pub blowup: Option<BlowupRecord>,
    /// Largest `‖δ‖_𝓗` of observer-requested corrections.
    pub max_correction: f64,
}

impl Trajectory {
    pub fn end_time(&self) -> f64 {
        self.events.last().map(|e| e.t).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Observation {
    pub stop: Option<(Terminal, String)>,
    pub frame: Option<FrameSummary>,
    /// Additive correction the observer asks the integrator to apply.
    pub correction: Option<FieldState>,
}

/// Receives samples in time order; it sees the state read-only.
pub trait Observer {
    fn observe(&mut self, state: &FieldState, f: &Functionals) -> Observation;
}

/// Preallocated RK4 stepper that also integrates `2α‖u̇‖²`.
pub struct Stepper {
    nl: Power,
    alpha: f64,
    linear: bool,
    k: [Vec<f64>; 8],
    tmp_u: Vec<f64>,
    tmp_v: Vec<f64>,
}

impl Stepper {
    pub fn new(n: usize, p: f64, alpha: f64, linear: bool) -> Self {
        Self {
            nl: Power::new(p),
            alpha,
            linear,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp_u: vec![0.0; n],
            tmp_v: vec![0.0; n],
        }
    }

    /// Writes `(u̇, ü)` into `(du, dv)` and returns `2α‖u̇‖²`.
    #[inline]
    fn rhs(nl: &Power, alpha: f64, linear: bool, inv_dx2: f64, dx: f64, u: &[f64], v: &[f64], du: &mut [f64], dv: &mut [f64]) -> f64 {
        let n = u.len();
        du[0] = 0.0;
        dv[0] = 0.0;
        du[n - 1] = 0.0;
        dv[n - 1] = 0.0;
        let mut diss = 0.0;
        for i in 1..n - 1 {
            let ui = u[i];
            let vi = v[i];
            let lap = ((u[i - 1] + u[i + 1]) - 2.0 * ui) * inv_dx2;
            let f = if linear { 0.0 } else { nl.f(ui) };
            du[i] = vi;
            dv[i] = lap - ui + f - 2.0 * alpha * vi;
            diss += vi * vi;
        }
        2.0 * alpha * diss * dx
    }

    /// One RK4 step; returns the dissipation increment `∫ 2α‖u̇‖² dt`.
    pub fn step(&mut self, s: &mut FieldState, dt: f64) -> f64 {
        let dx = s.grid.dx;
        let inv = 1.0 / (dx * dx);
        let n = s.u.len();
        let [k1u, k1v, k2u, k2v, k3u, k3v, k4u, k4v] = &mut self.k;
        let (nl, a, lin) = (&self.nl, self.alpha, self.linear);
        let g1 = Self::rhs(nl, a, lin, inv, dx, &s.u, &s.udot, k1u, k1v);
        for i in 0..n {
            self.tmp_u[i] = s.u[i] + 0.5 * dt * k1u[i];
            self.tmp_v[i] = s.udot[i] + 0.5 * dt * k1v[i];
        }
        let g2 = Self::rhs(nl, a, lin, inv, dx, &self.tmp_u, &self.tmp_v, k2u, k2v);
        for i in 0..n {
            self.tmp_u[i] = s.u[i] + 0.5 * dt * k2u[i];
            self.tmp_v[i] = s.udot[i] + 0.5 * dt * k2v[i];
        }
        let g3 = Self::rhs(nl, a, lin, inv, dx, &self.tmp_u, &self.tmp_v, k3u, k3v);
        for i in 0..n {
            self.tmp_u[i] = s.u[i] + dt * k3u[i];
            self.tmp_v[i] = s.udot[i] + dt * k3v[i];
        }
        let g4 = Self::rhs(nl, a, lin, inv, dx, &self.tmp_u, &self.tmp_v, k4u, k4v);
        let c = dt / 6.0;
        for i in 0..n {
            s.u[i] += c * (k1u[i] + 2.0 * k2u[i] + 2.0 * k3u[i] + k4u[i]);
            s.udot[i] += c * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
        s.time += dt;
        c * (g1 + 2.0 * g2 + 2.0 * g3 + g4)
    }
}

/// One RK4 step of the semi-discrete system.
pub fn step(state: &FieldState, dt: f64, p: f64, alpha: f64) -> Result<FieldState> {
    let mut s = state.clone();
    Stepper::new(s.grid.n, p, alpha, false).step(&mut s, dt);
    if s.is_finite() {
        Ok(s)
    } else {
        Err(Error::NonFinite(s.time))
    }
}

fn boundary_level(s: &FieldState) -> f64 {
    let n = s.u.len();
    s.u[1].abs().max(s.u[n - 2].abs())
}

/// NDJSON record for one sample.
pub fn sample_record(s: &Sample) -> serde_json::Value {
    let mut obj = serde_json::json!({
        "t": s.t,
        "E": s.f.energy,
        "K0": s.f.nehari,
        "P": s.f.p_func,
        "Hnorm": s.f.h_norm_sq.sqrt(),
        "dissipated": s.dissipated,
        "balance": s.balance_residual,
    });
    if let Some(fr) = &s.frame {
        if let (serde_json::Value::Object(o), Ok(serde_json::Value::Object(extra))) = (&mut obj, serde_json::to_value(fr)) {
            o.extend(extra);
        }
    }
    obj
}

pub fn terminal_record(traj: &Trajectory) -> serde_json::Value {
    let last = traj.events.last();
    serde_json::json!({
        "event": traj.terminal,
        "t": last.map(|e| e.t),
        "detail": last.map(|e| e.detail.clone()),
    })
}

/// Evolve until `t_max`, blow-up or an observer stop.
pub fn evolve(state: FieldState, cfg: &EvolveConfig, observers: &mut [&mut dyn Observer]) -> Result<Trajectory> {
    evolve_with_sink(state, cfg, observers, None)
}

/// As [`evolve`], streaming NDJSON records into `sink`.
pub fn evolve_with_sink(
    mut state: FieldState,
    cfg: &EvolveConfig,
    observers: &mut [&mut dyn Observer],
    mut sink: Option<&mut dyn Write>,
) -> Result<Trajectory> {
    cfg.validate(state.grid.dx)?;
    let mut stepper = Stepper::new(state.grid.n, cfg.p, cfg.alpha, cfg.linear);
    let threshold = cfg.blowup_norm_factor * cfg.q_h_norm;
    let mut samples = Vec::new();
    let mut dissipated = 0.0;
    let mut base_energy = f64::NAN;
    let mut base_dissipated = 0.0;
    let mut max_correction: f64 = 0.0;
    let n_steps = (cfg.t_max / cfg.dt).round() as usize;
    let t0 = state.time;
    let mut step_idx = 0usize;
    let finish = |samples: Vec<Sample>, kind: Terminal, t: f64, detail: String, final_state: Option<FieldState>, blowup: Option<BlowupRecord>, max_correction: f64| Trajectory {
        samples,
        events: vec![Event { t, kind, detail }],
        terminal: kind,
        final_state,
        blowup,
        max_correction,
    };
    loop {
        let t = state.time;
        if !state.is_finite() {
            let rec = BlowupRecord { t, h_norm: f64::INFINITY, reason: "non-finite value".into() };
            let traj = finish(samples, Terminal::Blowup, t, "non-finite value".into(), None, Some(rec), max_correction);
            write_terminal(&mut sink, &traj);
            return Ok(traj);
        }
        if step_idx.is_multiple_of(cfg.sample_every) || step_idx == n_steps {
            let f = functionals(&state, cfg.p, cfg.alpha);
            let balance = if base_energy.is_nan() { 0.0 } else { f.energy - base_energy + (dissipated - base_dissipated) };
            let mut sample = Sample { t, f, dissipated, balance_residual: balance, boundary: boundary_level(&state), frame: None };
            let h_norm = f.h_norm_sq.sqrt();
            if h_norm >= threshold || !h_norm.is_finite() {
                let reason = format!("norm {h_norm:.3e} >= {threshold:.3e}");
                emit(&mut sink, &sample);
                samples.push(sample);
                let rec = BlowupRecord { t, h_norm, reason: reason.clone() };
                let traj = finish(samples, Terminal::Blowup, t, reason, Some(state), Some(rec), max_correction);
                write_terminal(&mut sink, &traj);
                return Ok(traj);
            }
            let mut stop = None;
            let mut correction: Option<FieldState> = None;
            for obs in observers.iter_mut() {
                let o = obs.observe(&state, &f);
                if o.frame.is_some() {
                    sample.frame = o.frame;
                }
                if let Some(c) = o.correction {
                    match correction.as_mut() {
                        Some(acc) => acc.axpy(1.0, &c),
                        None => correction = Some(c),
                    }
                }
                if stop.is_none() {
                    stop = o.stop;
                }
            }
            emit(&mut sink, &sample);
            samples.push(sample);
            if let Some((kind, detail)) = stop {
                let rec = (kind == Terminal::Blowup).then(|| BlowupRecord { t, h_norm, reason: detail.clone() });
                let traj = finish(samples, kind, t, detail, Some(state), rec, max_correction);
                write_terminal(&mut sink, &traj);
                return Ok(traj);
            }
            if step_idx == n_steps {
                let traj = finish(samples, Terminal::Tmax, t, format!("t_max = {}", cfg.t_max), Some(state), None, max_correction);
                write_terminal(&mut sink, &traj);
                return Ok(traj);
            }
            base_energy = f.energy;
            if let Some(c) = correction {
                state.check_grid(&c)?;
                max_correction = max_correction.max(c.h_norm());
                state.axpy(1.0, &c);
                base_energy = functionals(&state, cfg.p, cfg.alpha).energy;
            }
            base_dissipated = dissipated;
        }
        dissipated += stepper.step(&mut state, cfg.dt);
        step_idx += 1;
        // keep the clock on the nominal grid of step times
        state.time = t0 + step_idx as f64 * cfg.dt;
    }
}

fn emit(sink: &mut Option<&mut dyn Write>, s: &Sample) {
    if let Some(w) = sink.as_deref_mut() {
        if let Err(e) = writeln!(w, "{}", sample_record(s)) {
            log::warn!("trajectory sink write failed: {e}");
        }
    }
}

fn write_terminal(sink: &mut Option<&mut dyn Write>, traj: &Trajectory) {
    if let Some(w) = sink.as_deref_mut() {
        if let Err(e) = writeln!(w, "{}", terminal_record(traj)) {
            log::warn!("trajectory sink write failed: {e}");
        }
    }
}

/// Fixed cut-off `χ`: 1 for `s <= 1/3`, 0 for `s >= 2/3`, cubic smoothstep between.
pub fn cutoff(s: f64) -> f64 {
    if s <= 1.0 / 3.0 {
        1.0
    } else if s >= 2.0 / 3.0 {
        0.0
    } else {
        let t = 3.0 * (s - 1.0 / 3.0);
        1.0 - t * t * (3.0 - 2.0 * t)
    }
}

/// Localized horizon `T_z* = D_z/6 − 1/2`.
pub fn localized_horizon(dz: f64) -> f64 {
    dz / 6.0 - 0.5
}

/// Cut-off initial data `χ_k u⃗(0)` for `k = 1..K` followed by the background
/// `χ₀ u⃗(0)`.
pub fn localized_data(state: &FieldState, z: &[f64]) -> Result<Vec<FieldState>> {
    let dz = crate::modulation::min_distance(z);
    if z.len() > 1 && dz < 15.0 {
        return Err(Error::CentersTooClose(dz));
    }
    let dz = if z.len() > 1 { dz } else { 3.0 * state.grid.half_len };
    let xs = state.grid.coords();
    let mut out = Vec::with_capacity(z.len() + 1);
    for &c in z {
        let mut s = state.clone();
        for (i, x) in xs.iter().enumerate() {
            let w = cutoff((x - c).abs() - 2.0 / 3.0 * dz);
            s.u[i] *= w;
            s.udot[i] *= w;
        }
        out.push(s);
    }
    let mut bg = state.clone();
    for (i, x) in xs.iter().enumerate() {
        let w = 1.0 - z.iter().map(|c| cutoff((x - c).abs() - dz / 3.0)).sum::<f64>();
        bg.u[i] *= w;
        bg.udot[i] *= w;
    }
    out.push(bg);
    Ok(out)
}

/// Evolve every cut-off piece independently (soliton pieces first, then the
/// background); runs fan out over `exec`.
pub fn localized_runs(state: &FieldState, z: &[f64], cfg: &EvolveConfig, exec: &crate::exec::Exec) -> Result<Vec<Trajectory>> {
    let data = localized_data(state, z)?;
    exec.map(&data, |s| evolve(s.clone(), cfg, &mut []))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::Grid;

    fn cfg(dt: f64, t_max: f64) -> EvolveConfig {
        EvolveConfig { dt, t_max, blowup_norm_factor: 10.0, sample_every: 10, p: 3.0, alpha: 0.5, q_h_norm: (16.0f64 / 3.0).sqrt(), linear: false }
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(cutoff(0.0), 1.0);
        assert_eq!(cutoff(1.0 / 3.0), 1.0);
        assert_eq!(cutoff(0.7), 0.0);
        assert!((cutoff(0.5) - 0.5).abs() < 1e-15);
        let mut prev = 1.0;
        for k in 0..=100 {
            let c = cutoff(k as f64 / 100.0);
            assert!(c <= prev);
            prev = c;
        }
    }

    #[test]
    fn small_gaussian_decays() {
        let grid = Grid::new(30.0, 0.05).unwrap();
        let s = FieldState::from_fn(grid, |x| 0.01 * (-x * x).exp(), |_| 0.0);
        let n0 = s.h_norm();
        let traj = evolve(s, &cfg(0.02, 20.0), &mut []).unwrap();
        assert_eq!(traj.terminal, Terminal::Tmax);
        let last = traj.samples.last().unwrap();
        assert!(last.f.h_norm_sq.sqrt() <= 0.2 * n0);
        for w in traj.samples.windows(2) {
            assert!(w[1].t > w[0].t);
        }
    }

    #[test]
    fn energy_balance_is_tight() {
        let grid = Grid::new(20.0, 0.05).unwrap();
        let s = FieldState::from_fn(grid, |x| 0.8 * (-x * x / 4.0).exp(), |x| 0.2 * x * (-x * x).exp());
        let traj = evolve(s, &cfg(0.025, 10.0), &mut []).unwrap();
        for smp in &traj.samples {
            assert!(smp.balance_residual.abs() < 1e-7 * (1.0 + smp.f.energy.abs()), "{}", smp.balance_residual);
        }
    }

    #[test]
    fn blowup_is_detected() {
        let grid = Grid::new(20.0, 0.05).unwrap();
        let s = FieldState::from_fn(grid, |x| 2.0 * 2f64.sqrt() / x.cosh(), |_| 0.0);
        let traj = evolve(s, &cfg(0.02, 20.0), &mut []).unwrap();
        assert_eq!(traj.terminal, Terminal::Blowup);
        assert!(traj.blowup.is_some());
    }

    #[test]
    fn ndjson_records_have_required_keys() {
        let grid = Grid::new(10.0, 0.1).unwrap();
        let s = FieldState::from_fn(grid, |x| 0.1 * (-x * x).exp(), |_| 0.0);
        let mut buf = Vec::new();
        evolve_with_sink(s, &cfg(0.05, 1.0), &mut [], Some(&mut buf)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        for l in &lines[..lines.len() - 1] {
            for key in ["t", "E", "K0", "P", "Hnorm"] {
                assert!(l.get(key).is_some());
            }
        }
        assert_eq!(lines.last().unwrap()["event"], "tmax");
    }

    #[test]
    fn cfl_is_enforced() {
        let grid = Grid::new(10.0, 0.1).unwrap();
        let s = FieldState::zeros(grid);
        assert!(evolve(s, &cfg(0.1, 1.0), &mut []).is_err());
    }
}
