//! Threshold searches: `G₁`/`G₂` along segments by bisection, the
//! two-soliton point `G₀` by quadrant bisection, phase maps and Lipschitz
//! probes of the threshold function.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::classify::{classify_trajectory, ClassifyConfig, Kind, Outcome};
use crate::error::{Error, Result};
use crate::evolve::EvolveConfig;
use crate::exec::Exec;
use crate::field::{superpose, FieldState, Grid};
use crate::modulation::GridModes;

/// Everything needed to turn `(h_1, …, h_K)` into a classified run.
#[derive(Debug, Clone)]
pub struct Setup<'a> {
    pub modes: &'a GridModes,
    pub grid: Grid,
    pub signs: Vec<f64>,
    pub z: Vec<f64>,
    pub phi: Option<FieldState>,
    pub cfg: ClassifyConfig,
    pub ecfg: EvolveConfig,
    pub exec: Exec,
}

impl Setup<'_> {
    pub fn data(&self, h: &[f64]) -> Result<FieldState> {
        superpose(self.modes, self.grid, &self.signs, &self.z, h, self.phi.as_ref())
    }

    pub fn classify(&self, h: &[f64]) -> Result<Outcome> {
        self.classify_with(h, &self.cfg, &self.ecfg)
    }

    fn classify_with(&self, h: &[f64], cfg: &ClassifyConfig, ecfg: &EvolveConfig) -> Result<Outcome> {
        classify_trajectory(self.data(h)?, self.modes, &self.signs, &self.z, cfg, ecfg)
    }

    /// Classify; an `Undetermined` result is retried once with `t_max × 2`.
    pub fn classify_patient(&self, h: &[f64]) -> Result<Outcome> {
        let o = self.classify(h)?;
        if o.kind != Kind::Undetermined {
            return Ok(o);
        }
        let mut longer = self.ecfg;
        longer.t_max *= 2.0;
        log::info!("undetermined at h = {h:?}; retrying with t_max = {}", longer.t_max);
        self.classify_with(h, &self.cfg, &longer)
    }

    fn with_slot(&self, fixed_slot: usize, h_fixed: f64, h: f64) -> Vec<f64> {
        let mut v = vec![h_fixed; self.signs.len()];
        for (j, x) in v.iter_mut().enumerate() {
            if j != fixed_slot {
                *x = h;
            }
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub h: f64,
    pub kind: Kind,
    pub end_time: f64,
    pub one_soliton_hold: f64,
    pub t3: Option<f64>,
}

impl Probe {
    fn new(h: f64, o: &Outcome) -> Self {
        Self { h, kind: o.kind, end_time: o.end_time, one_soliton_hold: o.one_soliton_hold, t3: o.stage_times.t3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    /// `(fixed slot, fixed value)`; `None` for `K = 1`.
    pub fixed: Option<(usize, f64)>,
    pub range: (f64, f64),
    pub h_star: f64,
    pub bracket: (f64, f64),
    pub bracket_width: f64,
    pub left_outcome: Kind,
    pub right_outcome: Kind,
    pub steps: usize,
    /// Probes at the final bracket (and any probe certified on the threshold).
    pub near_threshold_trace: Vec<Probe>,
    /// Whether some near-threshold probe held one soliton in its tube.
    pub entered_tube: bool,
    /// Set when the search ended on a probe certified as a soliton.
    pub certified_on_threshold: Option<Kind>,
    pub undetermined_probes: usize,
}

/// Bisection on the varying coefficient(s). Every non-fixed slot receives
/// the same value `h`; with `K = 1` there is no fixed slot.
pub fn find_threshold(setup: &Setup, fixed: Option<(usize, f64)>, range: (f64, f64), tol: f64) -> Result<ThresholdResult> {
    let (lo0, hi0) = range;
    if !(lo0 < hi0) || !(tol > 0.0) {
        return Err(Error::BracketInvalid(format!("range ({lo0}, {hi0}) with tol {tol}")));
    }
    let vec_for = |h: f64| match fixed {
        Some((slot, hf)) => setup.with_slot(slot, hf, h),
        None => vec![h; setup.signs.len()],
    };
    let ends = setup.exec.map(&[lo0, hi0], |&h| setup.classify_patient(&vec_for(h)));
    let mut ends = ends.into_iter();
    let left = ends.next().expect("two endpoints")?;
    let right = ends.next().expect("two endpoints")?;
    if left.kind == right.kind {
        return Err(Error::SameOutcomeAtEndpoints(left.kind.label().into()));
    }
    if !left.kind.is_open() || !right.kind.is_open() {
        return Err(Error::BracketInvalid(format!("endpoint outcomes {} / {}", left.kind.label(), right.kind.label())));
    }
    let (mut lo, mut hi) = (lo0, hi0);
    let (mut lo_probe, mut hi_probe) = (Probe::new(lo, &left), Probe::new(hi, &right));
    let mut steps = 0;
    let mut undetermined_run = 0;
    let mut undetermined_total = 0;
    let mut certified = None;
    let mut extra = Vec::new();
    while hi - lo > tol && steps < 200 {
        steps += 1;
        let mid = 0.5 * (lo + hi);
        let o = setup.classify_patient(&vec_for(mid))?;
        let probe = Probe::new(mid, &o);
        match o.kind {
            k if k == left.kind => {
                lo = mid;
                lo_probe = probe;
                undetermined_run = 0;
            }
            k if k == right.kind => {
                hi = mid;
                hi_probe = probe;
                undetermined_run = 0;
            }
            Kind::OneSoliton(_) | Kind::TwoSoliton => {
                // certified on the manifold itself
                certified = Some(o.kind);
                extra.push(probe);
                lo = mid;
                hi = mid;
                break;
            }
            _ => {
                undetermined_run += 1;
                undetermined_total += 1;
                extra.push(probe);
                if undetermined_run >= 3 {
                    return Err(Error::UndeterminedDominates(undetermined_run));
                }
                // shrink around the undetermined midpoint from both sides
                let q = 0.25 * (hi - lo);
                let pts = [mid - q, mid + q];
                let outs: Vec<Result<Outcome>> = setup.exec.map(&pts, |&h| setup.classify_patient(&vec_for(h)));
                let (a, b) = (outs[0].as_ref().map_err(clone_err)?, outs[1].as_ref().map_err(clone_err)?);
                if a.kind == left.kind {
                    lo = pts[0];
                    lo_probe = Probe::new(pts[0], a);
                }
                if b.kind == right.kind {
                    hi = pts[1];
                    hi_probe = Probe::new(pts[1], b);
                }
                if a.kind != left.kind && b.kind != right.kind {
                    undetermined_run += 1;
                    undetermined_total += 1;
                    if undetermined_run >= 3 {
                        return Err(Error::UndeterminedDominates(undetermined_run));
                    }
                }
            }
        }
    }
    let mut trace = vec![lo_probe, hi_probe];
    trace.extend(extra);
    let entered_tube = trace.iter().any(|p| p.one_soliton_hold > 0.0);
    Ok(ThresholdResult {
        fixed,
        range,
        h_star: 0.5 * (lo + hi),
        bracket: (lo, hi),
        bracket_width: hi - lo,
        left_outcome: left.kind,
        right_outcome: right.kind,
        steps,
        near_threshold_trace: trace,
        entered_tube,
        certified_on_threshold: certified,
        undetermined_probes: undetermined_total,
    })
}

fn clone_err(e: &Error) -> Error {
    Error::InvalidInput(e.to_string())
}

/// One-soliton hold times near the threshold versus at `h* ± 10·tol`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slowdown {
    pub near_hold: f64,
    pub far: Vec<Probe>,
    pub ratio: f64,
}

pub fn slowdown(setup: &Setup, res: &ThresholdResult, tol: f64) -> Result<Slowdown> {
    let near_hold = res.near_threshold_trace.iter().map(|p| p.one_soliton_hold).fold(0.0, f64::max);
    let vec_for = |h: f64| match res.fixed {
        Some((slot, hf)) => setup.with_slot(slot, hf, h),
        None => vec![h; setup.signs.len()],
    };
    let pts = [res.h_star - 10.0 * tol, res.h_star + 10.0 * tol];
    let far: Vec<Probe> = setup
        .exec
        .map(&pts, |&h| setup.classify(&vec_for(h)).map(|o| Probe::new(h, &o)))
        .into_iter()
        .collect::<Result<_>>()?;
    let far_max = far.iter().map(|p| p.one_soliton_hold).fold(0.0, f64::max);
    let ratio = if far_max > 0.0 { near_hold / far_max } else { f64::INFINITY };
    Ok(Slowdown { near_hold, far, ratio })
}

/// Quadrant label `(τ₁, τ₂)` of a probe: the ejection direction of each
/// soliton. A soliton ejected towards blow-up is excised so the other one
/// can still be read off.
pub fn quadrant_label(setup: &Setup, h: [f64; 2]) -> Result<[i8; 2]> {
    let mut cfg = setup.cfg;
    cfg.quadrant = true;
    cfg.track = false;
    let o = setup.classify_with(&h, &cfg, &setup.ecfg)?;
    let mut out = [0i8; 2];
    for (slot, tau) in out.iter_mut().enumerate() {
        *tau = o
            .tau(slot)
            .ok_or_else(|| Error::QuadrantInconsistent(format!("soliton {slot} never left its tube at h = {h:?} ({})", o.kind.label())))?;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSolitonPoint {
    pub h1: f64,
    pub h2: f64,
    pub width: [f64; 2],
    pub rounds: usize,
    pub corners: Vec<([f64; 2], [i8; 2])>,
}

/// Shrink the box toward the point where the four ejection quadrants meet.
/// Each coordinate moves by its own label: `τ_k = +1` means `h_k` lies above
/// the threshold of soliton `k`.
pub fn find_2sol_point(setup: &Setup, box1: (f64, f64), box2: (f64, f64), tol: f64) -> Result<TwoSolitonPoint> {
    if setup.signs.len() != 2 || setup.signs[0] * setup.signs[1] >= 0.0 {
        return Err(Error::InvalidInput("the two-soliton point needs K = 2 with opposite signs".into()));
    }
    let d = (setup.z[1] - setup.z[0]).abs();
    if d < 14.0 {
        return Err(Error::CentersTooClose(d));
    }
    let (mut l1, mut u1) = box1;
    let (mut l2, mut u2) = box2;
    let corners = [[l1, l2], [u1, u2], [l1, u2], [u1, l2]];
    let labels: Vec<Result<[i8; 2]>> = setup.exec.map(&corners, |c| quadrant_label(setup, *c));
    let mut corner_log = Vec::new();
    for (c, (lab, want)) in corners.iter().zip(labels.into_iter().zip([[-1, -1], [1, 1], [-1, 1], [1, -1]])) {
        let lab = lab?;
        corner_log.push((*c, lab));
        if lab != want {
            return Err(Error::QuadrantInconsistent(format!("corner {c:?} has label {lab:?}, expected {want:?}")));
        }
    }
    let mut rounds = 0;
    while (u1 - l1 > tol || u2 - l2 > tol) && rounds < 120 {
        rounds += 1;
        let m = [0.5 * (l1 + u1), 0.5 * (l2 + u2)];
        let lab = quadrant_label(setup, m)?;
        if u1 - l1 > tol {
            if lab[0] > 0 {
                u1 = m[0];
            } else {
                l1 = m[0];
            }
        }
        if u2 - l2 > tol {
            if lab[1] > 0 {
                u2 = m[1];
            } else {
                l2 = m[1];
            }
        }
    }
    Ok(TwoSolitonPoint { h1: 0.5 * (l1 + u1), h2: 0.5 * (l2 + u2), width: [u1 - l1, u2 - l2], rounds, corners: corner_log })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub h1: f64,
    pub h2: Option<f64>,
    pub kind: Kind,
    pub t3: Option<f64>,
    pub dz_final: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMap {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    /// Row-major, `h2` outer.
    pub cells: Vec<Cell>,
    pub signs: Vec<f64>,
    pub z: Vec<f64>,
    pub phi_norm: f64,
    pub decay_components: usize,
    pub blowup_components: usize,
    pub connectivity_violation: bool,
}

fn linspace(r: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (r.0 + r.1)];
    }
    (0..n).map(|i| r.0 + (r.1 - r.0) * i as f64 / (n - 1) as f64).collect()
}

/// Classify every cell of an `n1 × n2` grid (`n2 = 1` and a single soliton
/// for a 1D slice).
pub fn phase_map(setup: &Setup, r1: (f64, f64), r2: (f64, f64), n1: usize, n2: usize) -> Result<PhaseMap> {
    if n1 == 0 || n2 == 0 || n1 > 64 || n2 > 64 {
        return Err(Error::InvalidInput(format!("resolution {n1}x{n2} outside 1..=64")));
    }
    let k = setup.signs.len();
    let h1 = linspace(r1, n1);
    let h2 = if k == 1 { vec![] } else { linspace(r2, n2) };
    let rows = if k == 1 { 1 } else { n2 };
    let points: Vec<(f64, Option<f64>)> = (0..rows)
        .flat_map(|j| h1.iter().map(move |&a| (a, (k > 1).then_some(j))))
        .map(|(a, j)| (a, j.map(|j| h2[j])))
        .collect();
    let cells: Vec<Cell> = setup
        .exec
        .map(&points, |&(a, b)| {
            let h: Vec<f64> = match b {
                Some(b) => vec![a, b],
                None => vec![a],
            };
            setup.classify(&h).map(|o| Cell {
                h1: a,
                h2: b,
                kind: o.kind,
                t3: o.stage_times.t3.or_else(|| o.departures.first().map(|d| d.t)),
                dz_final: o.final_centers.as_ref().filter(|c| c.len() > 1).map(|c| crate::modulation::min_distance(c)),
            })
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let decay_components = components(&cells, n1, rows, Kind::Decay);
    let blowup_components = components(&cells, n1, rows, Kind::Blowup);
    Ok(PhaseMap {
        h1,
        h2,
        signs: setup.signs.clone(),
        z: setup.z.clone(),
        phi_norm: setup.phi.as_ref().map_or(0.0, |p| p.h_norm()),
        connectivity_violation: decay_components > 1 || blowup_components > 1,
        decay_components,
        blowup_components,
        cells,
    })
}

/// Number of 4-connected components of cells with kind `kind`.
pub fn components(cells: &[Cell], n1: usize, rows: usize, kind: Kind) -> usize {
    let mut seen = vec![false; cells.len()];
    let mut count = 0;
    for start in 0..cells.len() {
        if seen[start] || cells[start].kind != kind {
            continue;
        }
        count += 1;
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(c) = queue.pop_front() {
            let (i, j) = (c % n1, c / n1);
            let mut nb = Vec::with_capacity(4);
            if i > 0 {
                nb.push(c - 1);
            }
            if i + 1 < n1 {
                nb.push(c + 1);
            }
            if j > 0 {
                nb.push(c - n1);
            }
            if j + 1 < rows {
                nb.push(c + n1);
            }
            for x in nb {
                if !seen[x] && cells[x].kind == kind {
                    seen[x] = true;
                    queue.push_back(x);
                }
            }
        }
    }
    count
}

impl PhaseMap {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("h1,h2,kind,T3_or_blank,Dz_final\n");
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.10e}")).unwrap_or_default();
        for c in &self.cells {
            s.push_str(&format!("{:.10e},{},{},{},{}\n", c.h1, opt(c.h2), c.kind.label(), opt(c.t3), opt(c.dz_final)));
        }
        s
    }

    pub fn kind_at(&self, i: usize, j: usize) -> Kind {
        self.cells[j * self.h1.len() + i].kind
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRow {
    pub direction: usize,
    pub norm: f64,
    pub h_star: f64,
    pub shift: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LipschitzTable {
    pub base_h_star: f64,
    pub rows: Vec<LipschitzRow>,
    pub max_ratio: f64,
}

/// Finite-difference ratios `|Δh*| / ‖Δφ‖` of the threshold along each
/// direction, with `Δφ = step · direction`.
pub fn lipschitz_probe(
    setup: &Setup,
    directions: &[FieldState],
    step: f64,
    fixed: Option<(usize, f64)>,
    range: (f64, f64),
    tol: f64,
) -> Result<LipschitzTable> {
    let base = find_threshold(setup, fixed, range, tol)?;
    let mut rows = Vec::with_capacity(directions.len());
    for (i, d) in directions.iter().enumerate() {
        let norm = step * d.h_norm();
        if norm == 0.0 {
            rows.push(LipschitzRow { direction: i, norm, h_star: base.h_star, shift: 0.0, ratio: 0.0 });
            continue;
        }
        let mut s = setup.clone();
        let mut phi = setup.phi.clone().unwrap_or_else(|| FieldState::zeros(setup.grid));
        phi.axpy(step, d);
        s.phi = Some(phi);
        let r = find_threshold(&s, fixed, range, tol)?;
        let shift = r.h_star - base.h_star;
        rows.push(LipschitzRow { direction: i, norm, h_star: r.h_star, shift, ratio: shift.abs() / norm });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(LipschitzTable { base_h_star: base.h_star, rows, max_ratio })
}

/// Remove the `Y⁺` and `Y¹` components at every center from `raw`
/// (the remainder `γ` of the mode splitting), giving a perturbation direction orthogonal to
/// the soliton modes.
pub fn orthogonal_direction(modes: &GridModes, raw: &FieldState, z: &[f64]) -> FieldState {
    modes.split(raw, z).2
}

/// Settings of the three-soliton merger experiment
/// `Q(x + r) − (1 − h₀)Q(x) + Q(x − r)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergerConfig {
    pub r: f64,
    pub h0: f64,
    /// Outer distance at which the approach stage hands over.
    pub d_switch: f64,
    pub t_approach: f64,
    /// Half-width of the amplitude bracket `1 + ε` searched after hand-over.
    pub eps_range: f64,
    pub tol: f64,
    /// Length of the terminal hold window.
    pub t_window: f64,
}

impl Default for MergerConfig {
    fn default() -> Self {
        Self { r: 5.0, h0: 0.1, d_switch: 4.0, t_approach: 4000.0, eps_range: 0.1, tol: 1e-14, t_window: 50.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergerEvent {
    pub t: f64,
    pub what: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergerReport {
    pub events: Vec<MergerEvent>,
    pub frames: Vec<(f64, crate::modulation::FrameSummary)>,
    pub switch_time: Option<f64>,
    pub eps_star: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub final_sign: Option<i8>,
    pub final_center: Option<f64>,
    pub final_v_norm: Option<f64>,
    pub final_a_plus: Option<f64>,
    pub hold: f64,
    pub held: bool,
    /// Largest shadowing correction while the outer pair approaches.
    pub approach_correction: f64,
    /// Largest shadowing correction during the terminal hold.
    pub terminal_correction: f64,
}

/// Approach stage: the middle soliton collapses on its own while the outer
/// pair is kept on its stable manifold and drifts together.
struct Approach<'a> {
    modes: &'a GridModes,
    delta2: f64,
    d_switch: f64,
    signs: Vec<f64>,
    z: Vec<f64>,
    slots: Vec<usize>,
    tracker: crate::classify::Tracker,
    events: Vec<MergerEvent>,
    frames: Vec<(f64, crate::modulation::FrameSummary)>,
}

impl crate::evolve::Observer for Approach<'_> {
    fn observe(&mut self, state: &FieldState, _f: &crate::field::Functionals) -> crate::evolve::Observation {
        use crate::evolve::{Observation, Terminal};
        let t = state.time;
        let signs: Vec<f64> = self.slots.iter().map(|&k| self.signs[k]).collect();
        let guess: Vec<f64> = self.slots.iter().map(|&k| self.z[k]).collect();
        let frame = match self.modes.fit_centers(state, &signs, &guess) {
            Ok(f) => f,
            Err(e) => {
                self.events.push(MergerEvent { t, what: format!("fit lost: {e}"), value: 0.0 });
                return Observation { stop: Some((Terminal::Stop, "fit lost".into())), ..Default::default() };
            }
        };
        for (j, &k) in self.slots.iter().enumerate() {
            self.z[k] = frame.centers[j];
        }
        self.frames.push((t, frame.summary(None)));
        if let Some(j) = self.slots.iter().position(|&k| k == 1) {
            let a = frame.a_plus[j];
            if a.abs() >= self.delta2 {
                let tau = if self.signs[1] * a >= 0.0 { 1.0 } else { -1.0 };
                self.events.push(MergerEvent { t, what: "middle left its tube".into(), value: tau });
                self.slots.retain(|&k| k != 1);
                self.tracker.reset();
                return Observation::default();
            }
        }
        let outer_d = (self.z[2] - self.z[0]).abs();
        if self.slots.len() == 2 && outer_d <= self.d_switch {
            self.events.push(MergerEvent { t, what: "outer pair reached hand-over distance".into(), value: outer_d });
            return Observation { stop: Some((Terminal::Stop, "hand-over".into())), ..Default::default() };
        }
        let mask: Vec<bool> = self.slots.iter().map(|&k| k != 1).collect();
        let corr = self.tracker.correction(self.modes, state, &frame, Some(&mask));
        Observation { correction: Some(corr), ..Default::default() }
    }
}

/// Terminal stage: look for a single soliton near the origin, then shadow it
/// for the hold window.
struct Terminal0<'a> {
    modes: &'a GridModes,
    cfg: MergerConfig,
    eps_sol: f64,
    tracker: crate::classify::Tracker,
    hold_start: Option<f64>,
    hold: f64,
    last: Option<(i8, f64, f64, f64)>,
    frames: Vec<(f64, crate::modulation::FrameSummary)>,
    held: bool,
}

impl crate::evolve::Observer for Terminal0<'_> {
    fn observe(&mut self, state: &FieldState, _f: &crate::field::Functionals) -> crate::evolve::Observation {
        use crate::evolve::{Observation, Terminal};
        let t = state.time;
        let mid = (state.grid.n - 1) / 2;
        let sign = if state.u[mid] >= 0.0 { 1.0 } else { -1.0 };
        let z0 = self.last.map_or(0.0, |l| l.1);
        let fit = self.modes.fit_centers(state, &[sign], &[z0]).ok();
        let Some(frame) = fit else {
            self.hold_start = None;
            self.tracker.reset();
            return Observation::default();
        };
        let (z, v, a) = (frame.centers[0], frame.v_norm, frame.a_plus[0]);
        self.last = Some((sign as i8, z, v, a));
        self.frames.push((t, frame.summary(None)));
        let inside = v <= self.eps_sol && a.abs() <= self.eps_sol && z.abs() <= 1.0;
        if !inside {
            self.hold_start = None;
            self.tracker.reset();
            return Observation { frame: Some(frame.summary(None)), ..Default::default() };
        }
        let start = *self.hold_start.get_or_insert(t);
        self.hold = self.hold.max(t - start);
        if t - start >= self.cfg.t_window {
            self.held = true;
            return Observation { stop: Some((Terminal::Stop, "terminal window held".into())), frame: Some(frame.summary(None)), ..Default::default() };
        }
        let corr = self.tracker.correction(self.modes, state, &frame, None);
        Observation { frame: Some(frame.summary(None)), correction: Some(corr), ..Default::default() }
    }
}

/// Merger experiment: approach, amplitude bisection at hand-over, terminal
/// hold of the emerging soliton.
pub fn merger(modes: &GridModes, grid: Grid, mcfg: &MergerConfig, cfg: &ClassifyConfig, ecfg: &EvolveConfig) -> Result<MergerReport> {
    let signs = vec![1.0, -1.0, 1.0];
    let z = vec![-mcfg.r, 0.0, mcfg.r];
    let mut init = superpose(modes, grid, &signs, &z, &[0.0, 0.0, 0.0], None)?;
    // −(1 − h₀)Q in the middle
    modes.add_soliton(&mut init, mcfg.h0, 0.0, 0.0);
    let th = cfg.resolve(modes.m_const);
    let mut approach = Approach {
        modes,
        delta2: th.delta2,
        d_switch: mcfg.d_switch,
        signs: signs.clone(),
        z,
        slots: vec![0, 1, 2],
        tracker: Default::default(),
        events: Vec::new(),
        frames: Vec::new(),
    };
    let mut e1 = *ecfg;
    e1.t_max = mcfg.t_approach;
    let traj = crate::evolve::evolve(init, &e1, &mut [&mut approach])?;
    let mut report = MergerReport {
        events: approach.events,
        frames: approach.frames,
        switch_time: None,
        eps_star: None,
        bracket: None,
        final_sign: None,
        final_center: None,
        final_v_norm: None,
        final_a_plus: None,
        hold: 0.0,
        held: false,
        approach_correction: traj.max_correction,
        terminal_correction: 0.0,
    };
    let handed_over = report.events.iter().any(|e| e.what.starts_with("outer pair"));
    let Some(state) = traj.final_state.clone().filter(|_| handed_over) else {
        report.events.push(MergerEvent { t: traj.end_time(), what: format!("approach ended without hand-over ({:?})", traj.terminal), value: 0.0 });
        return Ok(report);
    };
    report.switch_time = Some(state.time);

    let mut plain = *cfg;
    plain.track = false;
    let probe = |eps: f64| -> Result<Outcome> {
        let s = state.scaled(1.0 + eps);
        let mut s = s;
        s.time = state.time;
        classify_trajectory(s, modes, &[], &[], &plain, ecfg)
    };
    let lo = probe(-mcfg.eps_range)?;
    let hi = probe(mcfg.eps_range)?;
    if lo.kind == hi.kind || !lo.kind.is_open() || !hi.kind.is_open() {
        report.events.push(MergerEvent { t: state.time, what: format!("amplitude bracket not separating: {} / {}", lo.kind.label(), hi.kind.label()), value: mcfg.eps_range });
        return Ok(report);
    }
    let (mut a, mut b) = (-mcfg.eps_range, mcfg.eps_range);
    let mut steps = 0;
    while b - a > mcfg.tol && steps < 100 {
        steps += 1;
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let o = probe(m)?;
        if o.kind == lo.kind {
            a = m;
        } else if o.kind == hi.kind {
            b = m;
        } else {
            a = m;
            b = m;
        }
    }
    report.eps_star = Some(0.5 * (a + b));
    report.bracket = Some((a, b));
    report.events.push(MergerEvent { t: state.time, what: "amplitude threshold".into(), value: 0.5 * (a + b) });

    let mut best: Option<Terminal0> = None;
    let mut best_corr = 0.0;
    for eps in [a, b] {
        let mut s = state.scaled(1.0 + eps);
        s.time = state.time;
        let mut obs = Terminal0 { modes, cfg: *mcfg, eps_sol: cfg.eps_sol, tracker: Default::default(), hold_start: None, hold: 0.0, last: None, frames: Vec::new(), held: false };
        let tr = crate::evolve::evolve(s, ecfg, &mut [&mut obs])?;
        log::info!("merger terminal run from eps = {eps:e}: {:?} at {}", tr.terminal, tr.end_time());
        let better = best.as_ref().is_none_or(|bo| (obs.held, obs.hold) > (bo.held, bo.hold));
        if better {
            best_corr = tr.max_correction;
            best = Some(obs);
        }
    }
    if let Some(obs) = best {
        report.hold = obs.hold;
        report.held = obs.held;
        if let Some((sg, z, v, ap)) = obs.last {
            report.final_sign = Some(sg);
            report.final_center = Some(z);
            report.final_v_norm = Some(v);
            report.final_a_plus = Some(ap);
        }
        report.terminal_correction = best_corr;
        report.frames.extend(obs.frames);
        if obs.held {
            report.events.push(MergerEvent { t: report.frames.last().map_or(0.0, |f| f.0), what: "single soliton held at the origin".into(), value: obs.hold });
        }
    }
    Ok(report)
}
