//! Scenario execution and run directories.
//!
//! A run lives in `<out>/<scenario>-<hash>`, where `hash` is the first 12 hex
//! digits of the SHA-256 of the resolved configuration's JSON (with the
//! output directory blanked, so moving the output root does not change it).
//! Artifacts are buffered and written at the end together with
//! `manifest.json`; nothing time-dependent is recorded, so reruns are
//! byte-identical.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use nlkg::classify::{classify_run, Outcome};
use nlkg::evolve::{evolve_with_sink, terminal_record, EvolveConfig};
use nlkg::exec::Exec;
use nlkg::field::{blowup_criterion, functionals, superpose, FieldState, Grid};
use nlkg::groundstate::solve_ground_state;
use nlkg::manifold::{find_2sol_point, find_threshold, lipschitz_probe, merger, orthogonal_direction, phase_map, slowdown, Setup};
use nlkg::modulation::{reduced_gradient_flow, toy_crossing, toy_unstable_ode, GridModes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format, Params, PhiSpec, Solitons};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("numerical failure: {source} (diagnostics in {})", dir.display())]
    Numerical { source: nlkg::Error, dir: PathBuf },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub exec: Exec,
    /// Overrides `output.directory`.
    pub out: Option<PathBuf>,
    /// Plain evolution without the classifier (`single_soliton` only).
    pub evolve_only: bool,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub artifacts: Vec<String>,
    /// One-object summary of the result, printed by the binary.
    pub headline: Value,
}

/// Directory name `<scenario>-<hash>` for a resolved configuration
/// (`evolve-<hash>` for plain evolutions).
pub fn run_id(cfg: &ExperimentConfig, opts: &RunOptions) -> String {
    let mut c = cfg.clone();
    c.output.directory.clear();
    let bytes = serde_json::to_vec(&c).expect("config serializes");
    let digest = Sha256::digest(&bytes);
    let hex: String = digest.iter().take(6).map(|b| format!("{b:02x}")).collect();
    let prefix = if opts.evolve_only { "evolve" } else { cfg.scenario.name() };
    format!("{prefix}-{hex}")
}

/// Buffered artifacts keyed by file name; sorted, so the manifest order is fixed.
struct Artifacts<'a> {
    cfg: &'a ExperimentConfig,
    files: BTreeMap<String, Vec<u8>>,
}

impl Artifacts<'_> {
    fn put(&mut self, format: Format, name: &str, bytes: Vec<u8>) {
        if self.cfg.wants(format) {
            self.files.insert(name.to_string(), bytes);
        }
    }

    fn json<T: Serialize>(&mut self, name: &str, v: &T) {
        let mut bytes = serde_json::to_vec_pretty(v).expect("artifact serializes");
        bytes.push(b'\n');
        self.put(Format::Json, name, bytes);
    }
}

fn manifest(cfg: &ExperimentConfig, id: &str, files: &BTreeMap<String, Vec<u8>>, status: &str) -> Vec<u8> {
    let artifacts: Vec<Value> = files
        .iter()
        .map(|(name, bytes)| {
            let sha: String = Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect();
            json!({ "file": name, "bytes": bytes.len(), "sha256": sha })
        })
        .collect();
    let m = json!({
        "run": id,
        "status": status,
        "code_version": { "nlkg": nlkg::VERSION, "nlkg-cli": env!("CARGO_PKG_VERSION") },
        "seed": cfg.seed,
        "config": cfg,
        "artifacts": artifacts,
    });
    let mut bytes = serde_json::to_vec_pretty(&m).expect("manifest serializes");
    bytes.push(b'\n');
    bytes
}

fn flush(dir: &Path, files: &BTreeMap<String, Vec<u8>>) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Execute the configured scenario and write its run directory.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunSummary, RunError> {
    let root = opts.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.directory));
    let id = run_id(cfg, opts);
    let dir = root.join(&id);
    log::info!("run {id} -> {}", dir.display());
    let mut art = Artifacts { cfg, files: BTreeMap::new() };
    match execute(cfg, opts, &mut art) {
        Ok(headline) => {
            let mut files = art.files;
            let m = manifest(cfg, &id, &files, "ok");
            files.insert("manifest.json".into(), m);
            flush(&dir, &files)?;
            Ok(RunSummary { dir, artifacts: files.into_keys().collect(), headline })
        }
        Err(source) => {
            let mut files = art.files;
            let mut failure = serde_json::to_vec_pretty(&json!({
                "run": id,
                "scenario": cfg.scenario.name(),
                "error": source.to_string(),
                "detail": format!("{source:?}"),
            }))
            .expect("failure record serializes");
            failure.push(b'\n');
            files.insert("failure.json".into(), failure);
            let m = manifest(cfg, &id, &files, "failed");
            files.insert("manifest.json".into(), m);
            flush(&dir, &files)?;
            Err(RunError::Numerical { source, dir })
        }
    }
}

/// Ground state, grid modes, grid and evolution settings of a configuration.
struct Lab {
    modes: GridModes,
    grid: Grid,
    ecfg: EvolveConfig,
}

impl Lab {
    fn new(cfg: &ExperimentConfig) -> nlkg::Result<Self> {
        let gs = Arc::new(solve_ground_state(cfg.physics.dim, cfg.physics.p, 30.0, 1e-12)?);
        let modes = GridModes::new(gs, cfg.physics.alpha, cfg.grid.dx)?;
        let grid = Grid::new(cfg.grid.half_len, cfg.grid.dx)?;
        let ecfg = EvolveConfig {
            dt: cfg.time.dt,
            t_max: cfg.time.t_max,
            blowup_norm_factor: cfg.time.blowup_norm_factor,
            sample_every: cfg.time.sample_every,
            p: cfg.physics.p,
            alpha: cfg.physics.alpha,
            q_h_norm: modes.q_h_norm,
            linear: false,
        };
        Ok(Self { modes, grid, ecfg })
    }

    fn setup(&self, cfg: &ExperimentConfig, sol: &Solitons, phi: Option<FieldState>, exec: Exec) -> Setup<'_> {
        Setup { modes: &self.modes, grid: self.grid, signs: sol.signs.clone(), z: sol.z.clone(), phi, cfg: cfg.thresholds, ecfg: self.ecfg, exec }
    }
}

/// A seeded direction built from Gaussian bumps in both components, with the
/// soliton modes at `z` removed and unit `𝓗` norm.
fn random_direction(lab: &Lab, z: &[f64], rng: &mut ChaCha8Rng) -> FieldState {
    let reach = (lab.grid.half_len - 15.0).max(1.0);
    let bumps: Vec<[f64; 4]> = (0..8)
        .map(|_| [rng.gen_range(-reach..reach), rng.gen_range(0.5..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
        .collect();
    let eval = |x: f64, slot: usize| bumps.iter().map(|b| b[slot] * (-((x - b[0]) / b[1]).powi(2)).exp()).sum::<f64>();
    let raw = FieldState::from_fn(lab.grid, |x| eval(x, 2), |x| eval(x, 3));
    let d = orthogonal_direction(&lab.modes, &raw, z);
    let n = d.h_norm();
    if n > 0.0 {
        d.scaled(1.0 / n)
    } else {
        d
    }
}

/// Seeded stream `k` of the run's generator; separate streams keep `φ` and
/// the Lipschitz directions independent of each other.
fn rng(cfg: &ExperimentConfig, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(cfg.seed);
    r.set_stream(k);
    r
}

fn build_phi(cfg: &ExperimentConfig, lab: &Lab, kind: &PhiSpec, z: &[f64]) -> Option<FieldState> {
    match *kind {
        PhiSpec::None => None,
        PhiSpec::OddBump { amplitude, center, width } => {
            let b = |x: f64| (-((x - center) / width).powi(2)).exp();
            Some(FieldState::from_fn(lab.grid, |x| amplitude * (b(x) - b(-x)), |_| 0.0))
        }
        PhiSpec::Random { norm } => Some(random_direction(lab, z, &mut rng(cfg, 0)).scaled(norm)),
    }
}

fn ndjson<T: Serialize>(items: impl IntoIterator<Item = T>) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, &it).expect("record serializes");
        out.push(b'\n');
    }
    out
}

/// Least-squares line `y = a + b t` with the correlation coefficient.
fn linear_fit(t: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = t.len() as f64;
    let mt = t.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut stt, mut syy, mut sty) = (0.0, 0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        stt += (a - mt) * (a - mt);
        syy += (b - my) * (b - my);
        sty += (a - mt) * (b - my);
    }
    let slope = sty / stt;
    (my - slope * mt, slope, sty / (stt * syy).sqrt())
}

fn outcome_headline(o: &Outcome) -> Value {
    serde_json::to_value(o).expect("outcome serializes")
}

fn execute(cfg: &ExperimentConfig, opts: &RunOptions, art: &mut Artifacts) -> nlkg::Result<Value> {
    let exec = opts.exec;
    match &cfg.params {
        Params::ToyOde { eps, h0, t_end, dt, ratio } => {
            let mut csv = String::from("eps,t,h1,h2,angle\n");
            let mut rows = Vec::new();
            for &e in eps {
                let start = h0.unwrap_or(if e < 0.0 { [0.0, 1.0] } else { [1.0, 0.0] });
                let axis = if start[0].abs() >= start[1].abs() { 0 } else { 1 };
                let pts = toy_unstable_ode(e, start, *t_end, *dt);
                for p in &pts {
                    csv.push_str(&format!("{e},{:.10e},{:.10e},{:.10e},{:.10e}\n", p.t, p.h[0], p.h[1], p.angle));
                }
                let a0 = pts[0].angle;
                let drift = pts.iter().map(|p| (p.angle - a0).abs()).fold(0.0, f64::max);
                rows.push(json!({ "eps": e, "h0": start, "axis": axis, "crossing_time": toy_crossing(&pts, axis, *ratio), "max_angle_drift": drift }));
            }
            art.put(Format::Csv, "toy.csv", csv.into_bytes());
            let v = json!({ "ratio": ratio, "runs": rows });
            art.json("toy.json", &v);
            Ok(v)
        }
        Params::ReducedFlow { solitons, t_end, dt } => {
            let gs = Arc::new(solve_ground_state(cfg.physics.dim, cfg.physics.p, 30.0, 1e-12)?);
            let c_one = GridModes::new(gs.clone(), cfg.physics.alpha, cfg.grid.dx)?.c_one;
            let flow = reduced_gradient_flow(&solitons.signs, &solitons.z, *t_end, *dt, &gs, c_one)?;
            let mut csv = String::from("t");
            for k in 0..solitons.z.len() {
                csv.push_str(&format!(",z{}", k + 1));
            }
            csv.push_str(",eta0\n");
            for i in 0..flow.t.len() {
                csv.push_str(&format!("{:.10e}", flow.t[i]));
                for z in &flow.z[i] {
                    csv.push_str(&format!(",{z:.10e}"));
                }
                csv.push_str(&format!(",{:.10e}\n", flow.eta[i]));
            }
            art.put(Format::Csv, "reduced.csv", csv.into_bytes());
            // 1/η₀(D_z) should grow affinely in t
            let inv: Vec<f64> = flow.eta.iter().map(|e| 1.0 / e).collect();
            let (intercept, slope, corr) = linear_fit(&flow.t, &inv);
            let last = flow.z.last().cloned().unwrap_or_default();
            let v = json!({ "inv_eta_fit": { "intercept": intercept, "slope": slope, "correlation": corr }, "final_centers": last, "c_one": c_one });
            art.json("reduced.json", &v);
            Ok(v)
        }
        _ => execute_pde(cfg, opts, exec, art),
    }
}

fn execute_pde(cfg: &ExperimentConfig, opts: &RunOptions, exec: Exec, art: &mut Artifacts) -> nlkg::Result<Value> {
    let lab = Lab::new(cfg)?;
    let th = &cfg.thresholds;
    match &cfg.params {
        Params::Dichotomy { lambdas } => {
            let modes = &lab.modes;
            // the classifier may stop at the first certificate, so decay rates and
            // certificate persistence are read off a plain evolution to t_max
            let runs = exec.map(lambdas, |&l| {
                let init = FieldState::from_fn(lab.grid, |x| l * modes.q.value(x), |_| 0.0);
                let f0 = functionals(&init, cfg.physics.p, cfg.physics.alpha);
                let o = classify_run(init.clone(), modes, &[1.0], &[0.0], th, &lab.ecfg, None)?.0;
                let mut buf = Vec::new();
                let tr = evolve_with_sink(init, &lab.ecfg, &mut [], Some(&mut buf))?;
                Ok::<_, nlkg::Error>((l, f0, o, tr, buf))
            });
            let mut rows = Vec::new();
            for (i, r) in runs.into_iter().enumerate() {
                let (l, f0, o, tr, buf) = r?;
                let flags: Vec<bool> = tr.samples.iter().map(|s| blowup_criterion(&s.f, cfg.physics.p, cfg.physics.alpha)).collect();
                let first = flags.iter().position(|&b| b);
                let persistent = first.is_some_and(|k| flags[k..].iter().all(|&b| b));
                let tail: Vec<(f64, f64)> = tr.samples.iter().filter(|s| s.t >= 5.0 && s.f.h_norm_sq > 0.0).map(|s| (s.t, 0.5 * s.f.h_norm_sq.ln())).collect();
                let decay_rate = (o.kind == nlkg::classify::Kind::Decay && tail.len() >= 3).then(|| {
                    let (t, y): (Vec<f64>, Vec<f64>) = tail.into_iter().unzip();
                    linear_fit(&t, &y)
                });
                art.put(Format::Ndjson, &format!("trajectory_{i:02}.ndjson"), buf);
                rows.push(json!({
                    "lambda": l,
                    "energy": f0.energy,
                    "nehari": f0.nehari,
                    "below_ground_energy": f0.energy < modes.e_ground,
                    "kind": o.kind.label(),
                    "blowup_certificate_from": first.map(|k| tr.samples[k].t),
                    "blowup_certificate_persistent": persistent,
                    "log_norm_fit": decay_rate.map(|(_, slope, corr)| json!({ "slope": slope, "correlation": corr })),
                    "outcome": o,
                }));
            }
            let v = json!({ "e_ground": modes.e_ground, "runs": rows });
            art.json("dichotomy.json", &v);
            Ok(v)
        }
        Params::SingleSoliton { solitons, h, phi } => {
            let phi = build_phi(cfg, &lab, phi, &solitons.z);
            let init = superpose(&lab.modes, lab.grid, &solitons.signs, &solitons.z, h, phi.as_ref())?;
            let mut buf = Vec::new();
            if opts.evolve_only {
                let tr = evolve_with_sink(init, &lab.ecfg, &mut [], Some(&mut buf))?;
                art.put(Format::Ndjson, "trajectory.ndjson", buf);
                let v = terminal_record(&tr);
                art.json("terminal.json", &v);
                return Ok(v);
            }
            let (o, _) = classify_run(init, &lab.modes, &solitons.signs, &solitons.z, th, &lab.ecfg, Some(&mut buf))?;
            art.put(Format::Ndjson, "trajectory.ndjson", buf);
            art.json("outcome.json", &o);
            Ok(outcome_headline(&o))
        }
        Params::TwoSolitonMap { solitons, h1_range, h2_range, n1, n2, phi } => {
            let phi = build_phi(cfg, &lab, phi, &solitons.z);
            let setup = lab.setup(cfg, solitons, phi, exec);
            let map = phase_map(&setup, *h1_range, *h2_range, *n1, *n2)?;
            art.put(Format::Csv, "map.csv", map.to_csv().into_bytes());
            art.json("map.json", &map);
            Ok(json!({
                "decay_components": map.decay_components,
                "blowup_components": map.blowup_components,
                "connectivity_violation": map.connectivity_violation,
                "cells": map.cells.len(),
            }))
        }
        Params::Threshold { solitons, fixed, range, tol, phi, slowdown: want_slowdown, lipschitz } => {
            let phi = build_phi(cfg, &lab, phi, &solitons.z);
            let setup = lab.setup(cfg, solitons, phi, exec);
            let res = find_threshold(&setup, *fixed, *range, *tol)?;
            art.json("threshold.json", &res);
            let mut v = json!({
                "h_star": res.h_star,
                "bracket": res.bracket,
                "bracket_width": res.bracket_width,
                "steps": res.steps,
                "left": res.left_outcome.label(),
                "right": res.right_outcome.label(),
                "entered_tube": res.entered_tube,
            });
            if *want_slowdown {
                let s = slowdown(&setup, &res, *tol)?;
                art.json("slowdown.json", &s);
                v["slowdown_ratio"] = json!(s.ratio);
            }
            if let Some(l) = lipschitz {
                let mut r = rng(cfg, 1);
                let dirs: Vec<FieldState> = (0..l.directions).map(|_| random_direction(&lab, &solitons.z, &mut r)).collect();
                let table = lipschitz_probe(&setup, &dirs, l.step, *fixed, *range, *tol)?;
                art.json("lipschitz.json", &table);
                v["lipschitz_max_ratio"] = json!(table.max_ratio);
            }
            Ok(v)
        }
        Params::G0 { solitons, box1, box2, tol, phi } => {
            let phi = build_phi(cfg, &lab, phi, &solitons.z);
            let setup = lab.setup(cfg, solitons, phi, exec);
            let p = find_2sol_point(&setup, *box1, *box2, *tol)?;
            art.json("g0.json", &p);
            Ok(json!({ "h1": p.h1, "h2": p.h2, "gap": (p.h1 - p.h2).abs(), "width": p.width, "rounds": p.rounds }))
        }
        Params::Merger(m) => {
            let rep = merger(&lab.modes, lab.grid, m, th, &lab.ecfg)?;
            art.put(Format::Ndjson, "frames.ndjson", ndjson(rep.frames.iter().map(|(t, f)| json!({ "t": t, "frame": f }))));
            art.json("merger.json", &rep);
            Ok(json!({
                "events": rep.events,
                "final_sign": rep.final_sign,
                "final_center": rep.final_center,
                "final_v_norm": rep.final_v_norm,
                "held": rep.held,
                "hold": rep.hold,
            }))
        }
        Params::ToyOde { .. } | Params::ReducedFlow { .. } => unreachable!("handled without the PDE lab"),
    }
}
