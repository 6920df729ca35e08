//! Outcome certification for a single run: dichotomy and blow-up
//! certificates, soliton tracking with departure detection, hold windows,
//! stage times, and the localized collapse status.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::evolve::{cutoff, evolve_with_sink, localized_horizon, localized_runs, EvolveConfig, Observation, Observer, Terminal, Trajectory};
use crate::exec::Exec;
use crate::field::{blowup_criterion, functionals, subcritical_dichotomy, Dichotomy, FieldState, Functionals};
use crate::modulation::{min_distance, GridModes, Mode, SolitonFrame};

/// Classifier constants. `None` entries are derived from the calibrated
/// `m` (see [`ClassifyConfig::resolve`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifyConfig {
    pub eps_sol: f64,
    pub t_hold: f64,
    pub eps_dec: f64,
    pub delta_cert: f64,
    pub delta1: Option<f64>,
    pub delta2: f64,
    pub b1: Option<f64>,
    pub delta_r: f64,
    /// Keep every tracked soliton on its stable manifold by removing the
    /// predicted unstable drift at each sample (shadowing mode).
    pub track: bool,
    /// Label mode for quadrant searches: a soliton ejected towards blow-up is
    /// cut out of the field so the remaining ones can still be followed, and
    /// the run stops once every soliton has left its tube.
    pub quadrant: bool,
    pub eps_dec_loc: f64,
    pub p_bup_loc: f64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        Self {
            eps_sol: 0.02,
            t_hold: 50.0,
            eps_dec: 0.02,
            delta_cert: 1e-3,
            delta1: None,
            delta2: 0.1,
            b1: None,
            delta_r: 1e-3,
            track: false,
            quadrant: false,
            eps_dec_loc: 0.05,
            p_bup_loc: 50.0,
        }
    }
}

/// Stage thresholds after filling in the `m`-dependent defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageThresholds {
    pub delta1: f64,
    pub delta2: f64,
    pub b1: f64,
    pub delta_r: f64,
}

impl ClassifyConfig {
    /// `B₁ = max(2m, 8)` and `δ₁ = B₁δ₂`, which keeps the regions nested:
    /// `B₁|a⁺|² ≤ δ₁|a⁺|` whenever `|a⁺| ≤ δ₂`.
    pub fn resolve(&self, m_const: f64) -> StageThresholds {
        let b1 = self.b1.unwrap_or((2.0 * m_const).max(8.0));
        StageThresholds { delta1: self.delta1.unwrap_or(b1 * self.delta2), delta2: self.delta2, b1, delta_r: self.delta_r }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    Decay,
    Blowup,
    OneSoliton(i8),
    TwoSoliton,
    Undetermined,
}

impl Kind {
    pub fn label(&self) -> &'static str {
        match self {
            Kind::Decay => "Decay",
            Kind::Blowup => "Blowup",
            Kind::OneSoliton(s) if *s < 0 => "OneSoliton-",
            Kind::OneSoliton(_) => "OneSoliton+",
            Kind::TwoSoliton => "TwoSoliton",
            Kind::Undetermined => "Undetermined",
        }
    }

    /// Decay or blow-up, the two open outcomes.
    pub fn is_open(&self) -> bool {
        matches!(self, Kind::Decay | Kind::Blowup)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct StageTimes {
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub t3: Option<f64>,
    pub ts: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub t: f64,
    pub criterion: String,
    pub value: f64,
}

/// A soliton leaving its tube: `|a⁺_k| ≥ δ₂` (or a lost fit). `tau` is the
/// ejection direction `σ_k sign(a⁺_k)`: `+1` towards blow-up, `−1` towards decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub slot: usize,
    pub t: f64,
    pub tau: i8,
    pub a_plus: f64,
}

/// One point of the stage-time history, recorded while every initial
/// soliton is still tracked.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StagePoint {
    pub t: f64,
    pub n_energy: f64,
    pub a_plus: f64,
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kind: Kind,
    pub stage_times: StageTimes,
    pub evidence: Vec<Evidence>,
    pub final_centers: Option<Vec<f64>>,
    pub end_time: f64,
    pub departures: Vec<Departure>,
    /// Longest stretch with exactly one tracked soliton inside `|a⁺| ≤ ε_sol`.
    pub one_soliton_hold: f64,
    pub max_correction: f64,
    #[serde(skip)]
    pub history: Vec<StagePoint>,
}

impl Outcome {
    /// Ejection direction of `slot`, if it left its tube.
    pub fn tau(&self, slot: usize) -> Option<i8> {
        self.departures.iter().find(|d| d.slot == slot).map(|d| d.tau)
    }
}

/// First-hit stage times on a history. Raw first hits are capped so that
/// `T₁ ≤ T₂ ≤ T₃` whenever the later time exists. For `K = 1` (no `eta`)
/// `T_s = T₂`.
pub fn stage_times(history: &[StagePoint], th: &StageThresholds) -> StageTimes {
    let first = |pred: &dyn Fn(&StagePoint) -> bool| history.iter().find(|p| pred(p)).map(|p| p.t);
    let t3 = first(&|p| p.a_plus >= th.delta2);
    let mut t2 = first(&|p| p.a_plus > 0.0 && p.n_energy <= th.b1 * p.a_plus * p.a_plus);
    let mut t1 = first(&|p| p.a_plus > 0.0 && p.n_energy <= th.delta1 * p.a_plus);
    if let Some(t3) = t3 {
        t2 = Some(t2.map_or(t3, |t| t.min(t3)));
    }
    if let Some(t2) = t2 {
        t1 = Some(t1.map_or(t2, |t| t.min(t2)));
    }
    let has_eta = history.iter().any(|p| p.eta.is_some());
    let ts = if has_eta {
        first(&|p| match p.eta {
            Some(e) => e >= th.delta_r * p.n_energy.max(0.0).sqrt(),
            None => false,
        })
    } else {
        t2
    };
    StageTimes { t1, t2, t3, ts }
}

/// Least-squares slope of `log|a⁺|` on `[from, to]`.
pub fn growth_rate(history: &[StagePoint], from: f64, to: f64) -> Option<(f64, usize)> {
    let (x, y): (Vec<f64>, Vec<f64>) = history
        .iter()
        .filter(|p| p.t >= from && p.t <= to && p.a_plus > 0.0)
        .map(|p| (p.t, p.a_plus.ln()))
        .unzip();
    if x.len() < 3 {
        return None;
    }
    let (_, b, _) = crate::numerics::linear_fit(&x, &y);
    Some((b, x.len()))
}

/// Shadowing of the stable manifold: at every sample each tracked `a⁺_k` is
/// moved onto its quasi-static value `−F_k/ν⁺`, with the forcing `F_k` read
/// off the previous sample interval from `ȧ⁺ = ν⁺a⁺ + F`.
#[derive(Debug, Clone, Default)]
pub struct Tracker {
    prev: Option<(f64, Vec<f64>)>,
}

impl Tracker {
    /// Correction field `Σ_k (target_k − a⁺_k) Y⁺(x − z_k)` over the slots
    /// selected by `mask` (all when `None`).
    pub fn correction(&mut self, modes: &GridModes, state: &FieldState, frame: &SolitonFrame, mask: Option<&[bool]>) -> FieldState {
        let nu = modes.nu_plus;
        let t = state.time;
        let k = frame.a_plus.len();
        let targets: Vec<f64> = match &self.prev {
            Some((tp, prev)) if prev.len() == k && t > *tp => {
                let g = (nu * (t - tp)).exp();
                frame.a_plus.iter().zip(prev).map(|(a, a0)| -(a - g * a0) / (g - 1.0)).collect()
            }
            _ => vec![0.0; k],
        };
        let on = |j: usize| mask.is_none_or(|m| m[j]);
        let mut corr = FieldState::zeros(state.grid);
        for (j, &c) in frame.centers.iter().enumerate() {
            if on(j) {
                modes.add_mode(&mut corr, targets[j] - frame.a_plus[j], Mode::Plus, c);
            }
        }
        let mut v = state.clone();
        v.axpy(1.0, &corr);
        for (sg, zc) in frame.signs.iter().zip(&frame.centers) {
            modes.add_soliton(&mut v, -sg, *zc, 0.0);
        }
        let post = frame.centers.iter().map(|&c| modes.project(&v, Mode::Plus, c)).collect();
        self.prev = Some((t, post));
        corr
    }

    pub fn reset(&mut self) {
        self.prev = None;
    }
}

struct Classifier<'a> {
    modes: &'a GridModes,
    cfg: ClassifyConfig,
    th: StageThresholds,
    signs: Vec<f64>,
    z: Vec<f64>,
    active: Vec<usize>,
    k0: usize,
    evidence: Vec<Evidence>,
    departures: Vec<Departure>,
    history: Vec<StagePoint>,
    hold_start: Option<(f64, f64)>,
    one_start: Option<f64>,
    one_hold: f64,
    kind: Option<Kind>,
    last_a: Vec<f64>,
    tracker: Tracker,
    final_centers: Option<Vec<f64>>,
}

impl<'a> Classifier<'a> {
    fn new(modes: &'a GridModes, signs: &[f64], z0: &[f64], cfg: ClassifyConfig) -> Self {
        Self {
            modes,
            cfg,
            th: cfg.resolve(modes.m_const),
            signs: signs.to_vec(),
            z: z0.to_vec(),
            active: (0..signs.len()).collect(),
            k0: signs.len(),
            evidence: Vec::new(),
            departures: Vec::new(),
            history: Vec::new(),
            hold_start: None,
            one_start: None,
            one_hold: 0.0,
            kind: None,
            last_a: vec![0.0; signs.len()],
            tracker: Tracker::default(),
            final_centers: None,
        }
    }

    fn note(&mut self, t: f64, criterion: &str, value: f64) {
        self.evidence.push(Evidence { t, criterion: criterion.into(), value });
    }

    fn stop(&mut self, t: f64, kind: Kind, criterion: &str, value: f64) -> Observation {
        self.note(t, criterion, value);
        self.kind = Some(kind);
        let term = match kind {
            Kind::Blowup => Terminal::Blowup,
            Kind::Decay => Terminal::Decay,
            _ => Terminal::Stop,
        };
        Observation { stop: Some((term, format!("{} by {criterion}", kind.label()))), ..Default::default() }
    }

    fn depart(&mut self, slot: usize, t: f64, a: f64) -> i8 {
        let tau = if self.signs[slot] * a >= 0.0 { 1 } else { -1 };
        self.departures.push(Departure { slot, t, tau, a_plus: a });
        self.note(t, &format!("departure[{slot}]"), a);
        self.active.retain(|&k| k != slot);
        self.hold_start = None;
        tau
    }

    /// `−χ(|x − c|/D)·u⃗`: removes everything within `D/3` of `c` and leaves
    /// the field beyond `2D/3` untouched.
    fn excision(&self, state: &FieldState, c: f64) -> FieldState {
        let others: Vec<f64> = self.active.iter().map(|&k| (self.z[k] - c).abs()).collect();
        let d = others.iter().copied().fold(f64::INFINITY, f64::min).min(state.grid.half_len);
        let mut out = FieldState::zeros(state.grid);
        for i in 0..state.grid.n {
            let w = cutoff((state.grid.x(i) - c).abs() / d);
            out.u[i] = -w * state.u[i];
            out.udot[i] = -w * state.udot[i];
        }
        out
    }

    fn close_one_hold(&mut self, t: f64) {
        if let Some(s) = self.one_start.take() {
            self.one_hold = self.one_hold.max(t - s);
        }
    }

}

impl Observer for Classifier<'_> {
    fn observe(&mut self, state: &FieldState, f: &Functionals) -> Observation {
        let t = state.time;
        let m = self.modes;
        if blowup_criterion(f, m.p, m.alpha) {
            let margin = f.p_func - (m.p + 1.0) / (m.p - 1.0) * (1.0 + 2.0 * m.alpha) * f.energy;
            return self.stop(t, Kind::Blowup, "P-criterion", margin);
        }
        if subcritical_dichotomy(f, m.e_ground, self.cfg.delta_cert) == Dichotomy::DecayCertified {
            if self.cfg.quadrant {
                // the whole field decays, so every soliton still tracked went that way
                for slot in self.active.clone() {
                    self.departures.push(Departure { slot, t, tau: -1, a_plus: self.last_a[slot] });
                    self.note(t, &format!("departure[{slot}]"), self.last_a[slot]);
                }
                self.active.clear();
            }
            return self.stop(t, Kind::Decay, "dichotomy", f.energy - m.e_ground);
        }
        if self.active.is_empty() {
            return Observation::default();
        }
        let signs: Vec<f64> = self.active.iter().map(|&k| self.signs[k]).collect();
        let guess: Vec<f64> = self.active.iter().map(|&k| self.z[k]).collect();
        let frame = match m.fit_centers(state, &signs, &guess) {
            Ok(fr) => fr,
            Err(e) => {
                log::debug!("t = {t}: fit lost ({e})");
                for slot in self.active.clone() {
                    let a = self.last_a[slot];
                    self.depart(slot, t, a);
                }
                self.close_one_hold(t);
                self.note(t, "fit-lost", 0.0);
                return Observation::default();
            }
        };
        for (j, &slot) in self.active.iter().enumerate() {
            self.z[slot] = frame.centers[j];
            self.last_a[slot] = frame.a_plus[j];
        }
        self.final_centers = Some(frame.centers.clone());
        let a_norm = frame.a_plus_sq().sqrt();
        if self.active.len() == self.k0 {
            let eta = (self.k0 > 1).then(|| m.gs.eta0_fast(frame.dz).0);
            self.history.push(StagePoint { t, n_energy: frame.n_energy, a_plus: a_norm, eta });
        }
        let even = (frame.centers.len() == 2).then(|| m.even_part_norm(state, &frame));
        let summary = frame.summary(even);

        let leaving: Vec<(usize, f64)> = self
            .active
            .iter()
            .enumerate()
            .filter(|(j, _)| frame.a_plus[*j].abs() >= self.th.delta2)
            .map(|(j, &slot)| (slot, frame.a_plus[j]))
            .collect();
        if !leaving.is_empty() {
            let mut correction: Option<FieldState> = None;
            for (slot, a) in leaving {
                let tau = self.depart(slot, t, a);
                if self.cfg.quadrant && tau > 0 && !self.active.is_empty() {
                    let cut = self.excision(state, self.z[slot]);
                    match correction.as_mut() {
                        Some(acc) => acc.axpy(1.0, &cut),
                        None => correction = Some(cut),
                    }
                }
            }
            self.close_one_hold(t);
            if self.cfg.quadrant && self.active.is_empty() {
                let mut obs = self.stop(t, Kind::Undetermined, "all-departed", self.departures.len() as f64);
                obs.frame = Some(summary);
                return obs;
            }
            return Observation { frame: Some(summary), correction, ..Default::default() };
        }

        let a_max = frame.a_plus.iter().fold(0.0f64, |acc, a| acc.max(a.abs()));
        if self.active.len() == 1 && a_max <= self.cfg.eps_sol {
            self.one_start.get_or_insert(t);
            if let Some(s) = self.one_start {
                self.one_hold = self.one_hold.max(t - s);
            }
        } else {
            self.close_one_hold(t);
        }

        let holding = frame.v_norm <= self.cfg.eps_sol && a_max <= self.cfg.eps_sol;
        if holding {
            let (t0, dz0) = *self.hold_start.get_or_insert((t, frame.dz));
            if t - t0 >= self.cfg.t_hold {
                match self.active.len() {
                    1 => {
                        self.note(t, "hold", t - t0);
                        let s = self.signs[self.active[0]] as i8;
                        let mut obs = self.stop(t, Kind::OneSoliton(s), "vNorm", frame.v_norm);
                        obs.frame = Some(summary);
                        return obs;
                    }
                    2 if frame.dz > dz0 => {
                        self.note(t, "hold", t - t0);
                        self.note(t, "separation", frame.dz - dz0);
                        let mut obs = self.stop(t, Kind::TwoSoliton, "vNorm", frame.v_norm);
                        obs.frame = Some(summary);
                        return obs;
                    }
                    _ => {}
                }
            }
        } else {
            self.hold_start = None;
        }

        let correction = self.cfg.track.then(|| self.tracker.correction(m, state, &frame, None));
        Observation { stop: None, frame: Some(summary), correction }
    }
}

/// Classify the run from `init`, returning the outcome and the trajectory.
pub fn classify_run(
    init: FieldState,
    modes: &GridModes,
    signs: &[f64],
    z0: &[f64],
    cfg: &ClassifyConfig,
    ecfg: &EvolveConfig,
    sink: Option<&mut dyn Write>,
) -> Result<(Outcome, Trajectory)> {
    let mut obs = Classifier::new(modes, signs, z0, *cfg);
    let traj = evolve_with_sink(init, ecfg, &mut [&mut obs], sink)?;
    let end = traj.end_time();
    obs.close_one_hold(end);
    let kind = match (obs.kind, traj.terminal) {
        (Some(k), _) => k,
        (None, Terminal::Blowup) => {
            let h = traj.blowup.as_ref().map_or(f64::INFINITY, |b| b.h_norm);
            obs.note(end, "norm-threshold", h);
            Kind::Blowup
        }
        _ => {
            let f = traj.final_state.as_ref().map(|s| functionals(s, modes.p, modes.alpha));
            match f {
                Some(f) if f.h_norm_sq.sqrt() <= cfg.eps_dec && f.energy < modes.e_ground => {
                    obs.note(end, "small-norm", f.h_norm_sq.sqrt());
                    Kind::Decay
                }
                _ => Kind::Undetermined,
            }
        }
    };
    if cfg.track {
        obs.note(end, "max_correction", traj.max_correction);
    }
    let outcome = Outcome {
        kind,
        stage_times: stage_times(&obs.history, &obs.th),
        evidence: obs.evidence,
        final_centers: obs.final_centers,
        end_time: end,
        departures: obs.departures,
        one_soliton_hold: obs.one_hold,
        max_correction: traj.max_correction,
        history: obs.history,
    };
    Ok((outcome, traj))
}

pub fn classify_trajectory(
    init: FieldState,
    modes: &GridModes,
    signs: &[f64],
    z0: &[f64],
    cfg: &ClassifyConfig,
    ecfg: &EvolveConfig,
) -> Result<Outcome> {
    classify_run(init, modes, signs, z0, cfg, ecfg, None).map(|r| r.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Collapse {
    Holding,
    Decayed,
    BlowingUp,
}

/// Hold / decay / blow-up status of each cut-off soliton piece, evolved alone up to
/// the localized horizon `T_z*`.
pub fn collapse_status(state: &FieldState, z: &[f64], modes: &GridModes, cfg: &ClassifyConfig, ecfg: &EvolveConfig, exec: &Exec) -> Result<Vec<Collapse>> {
    let dz = if z.len() > 1 { min_distance(z) } else { 3.0 * state.grid.half_len };
    let mut local = *ecfg;
    local.t_max = (localized_horizon(dz) / ecfg.dt).floor().max(1.0) * ecfg.dt;
    let runs = localized_runs(state, z, &local, exec)?;
    Ok(runs[..z.len()]
        .iter()
        .map(|tr| {
            if tr.terminal == Terminal::Blowup {
                return Collapse::BlowingUp;
            }
            let mut status = Collapse::Holding;
            for s in &tr.samples {
                let f = &s.f;
                if blowup_criterion(f, modes.p, modes.alpha) || f.p_func >= cfg.p_bup_loc {
                    return Collapse::BlowingUp;
                }
                if f.h_norm_sq.sqrt() <= cfg.eps_dec_loc || subcritical_dichotomy(f, modes.e_ground, cfg.delta_cert) == Dichotomy::DecayCertified {
                    status = Collapse::Decayed;
                }
            }
            status
        })
        .collect())
}
