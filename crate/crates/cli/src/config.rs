//! TOML experiment configuration. Parsing is two-phase: the file is read into
//! optional fields (so a single pass can report every missing key), then
//! resolved into an [`ExperimentConfig`] with defaults filled in and all
//! constraint violations collected.

use std::path::Path;

use nlkg::classify::ClassifyConfig;
use nlkg::manifold::MergerConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed configuration: {0}")]
    Parse(String),
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Dichotomy,
    SingleSoliton,
    TwoSolitonMap,
    Threshold,
    G0,
    Merger,
    ReducedFlow,
    ToyOde,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Dichotomy => "dichotomy",
            Scenario::SingleSoliton => "single_soliton",
            Scenario::TwoSolitonMap => "two_soliton_map",
            Scenario::Threshold => "threshold",
            Scenario::G0 => "g0",
            Scenario::Merger => "merger",
            Scenario::ReducedFlow => "reduced_flow",
            Scenario::ToyOde => "toy_ode",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Ndjson,
    Json,
    Csv,
}

/// Extra perturbation `φ` added to the soliton data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiSpec {
    None,
    /// `a[b(x) − b(−x)]` with `b` a Gaussian at `center`: odd, so the
    /// `u(x) ↦ −u(−x)` symmetry of antisymmetric pairs is kept.
    OddBump { amplitude: f64, center: f64, width: f64 },
    /// A seeded random direction with the soliton modes removed, scaled to
    /// `‖φ‖_𝓗 = norm`.
    Random { norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Physics {
    pub dim: usize,
    pub p: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridCfg {
    pub half_len: f64,
    pub dx: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeCfg {
    pub dt: f64,
    pub t_max: f64,
    pub sample_every: usize,
    pub blowup_norm_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputCfg {
    pub directory: String,
    pub formats: Vec<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Solitons {
    pub signs: Vec<f64>,
    pub z: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "scenario", rename_all = "snake_case")]
pub enum Params {
    Dichotomy { lambdas: Vec<f64> },
    SingleSoliton { solitons: Solitons, h: Vec<f64>, phi: PhiSpec },
    TwoSolitonMap { solitons: Solitons, h1_range: (f64, f64), h2_range: (f64, f64), n1: usize, n2: usize, phi: PhiSpec },
    Threshold { solitons: Solitons, fixed: Option<(usize, f64)>, range: (f64, f64), tol: f64, phi: PhiSpec, slowdown: bool, lipschitz: Option<Lipschitz> },
    G0 { solitons: Solitons, box1: (f64, f64), box2: (f64, f64), tol: f64, phi: PhiSpec },
    Merger(MergerConfig),
    ReducedFlow { solitons: Solitons, t_end: f64, dt: f64 },
    /// `h0 = None` starts each run on the axis the coupling rotates away
    /// from: `(1, 0)` for `ε ≥ 0` and `(0, 1)` for `ε < 0`.
    ToyOde { eps: Vec<f64>, h0: Option<[f64; 2]>, t_end: f64, dt: f64, ratio: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lipschitz {
    pub directions: usize,
    pub step: f64,
}

/// Fully resolved configuration. Its JSON form is what gets hashed and
/// written to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    pub physics: Physics,
    pub grid: GridCfg,
    pub time: TimeCfg,
    pub thresholds: ClassifyConfig,
    pub output: OutputCfg,
    pub params: Params,
}

impl ExperimentConfig {
    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

// ---- raw file layout -------------------------------------------------------

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    dim: Option<usize>,
    p: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    half_len: Option<f64>,
    dx: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    t_max: Option<f64>,
    sample_every: Option<usize>,
    blowup_norm_factor: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    directory: Option<String>,
    formats: Option<Vec<Format>>,
}

/// Keys shared by the soliton-based scenarios. Each scenario only reads the
/// ones it understands; [`resolve`] rejects the rest.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    signs: Option<Vec<f64>>,
    z: Option<Vec<f64>>,
    phi: Option<PhiSpec>,
    tol: Option<f64>,
    dt: Option<f64>,
    t_end: Option<f64>,
    // single_soliton
    h: Option<Vec<f64>>,
    // two_soliton_map
    h1_range: Option<(f64, f64)>,
    h2_range: Option<(f64, f64)>,
    n1: Option<usize>,
    n2: Option<usize>,
    // threshold
    fixed_slot: Option<usize>,
    h_fixed: Option<f64>,
    range: Option<(f64, f64)>,
    slowdown: Option<bool>,
    lipschitz_directions: Option<usize>,
    lipschitz_step: Option<f64>,
    // g0
    box1: Option<(f64, f64)>,
    box2: Option<(f64, f64)>,
}

impl RawSection {
    /// Names of the keys that are set, for the per-scenario whitelist.
    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        macro_rules! chk {
            ($($f:ident),*) => { $(if self.$f.is_some() { v.push(stringify!($f)); })* };
        }
        chk!(signs, z, phi, tol, dt, t_end, h, h1_range, h2_range, n1, n2, fixed_slot, h_fixed, range, slowdown, lipschitz_directions, lipschitz_step, box1, box2);
        v
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDichotomy {
    lambdas: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMerger {
    r: Option<f64>,
    h0: Option<f64>,
    d_switch: Option<f64>,
    t_approach: Option<f64>,
    eps_range: Option<f64>,
    tol: Option<f64>,
    t_window: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawToy {
    eps: Option<Vec<f64>>,
    h0: Option<[f64; 2]>,
    t_end: Option<f64>,
    dt: Option<f64>,
    ratio: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    seed: Option<u64>,
    #[serde(default)]
    physics: RawPhysics,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    thresholds: Option<ClassifyConfig>,
    #[serde(default)]
    output: RawOutput,
    dichotomy: Option<RawDichotomy>,
    single_soliton: Option<RawSection>,
    two_soliton_map: Option<RawSection>,
    threshold: Option<RawSection>,
    g0: Option<RawSection>,
    merger: Option<RawMerger>,
    reduced_flow: Option<RawSection>,
    toy_ode: Option<RawToy>,
}

/// Collects missing keys and broken constraints.
#[derive(Default)]
struct Violations(Vec<String>);

impl Violations {
    fn need<T>(&mut self, v: Option<T>, key: &str) -> Option<T> {
        if v.is_none() {
            self.0.push(format!("missing required key `{key}`"));
        }
        v
    }

    fn check(&mut self, ok: bool, msg: impl Into<String>) {
        if !ok {
            self.0.push(msg.into());
        }
    }
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    parse_str(&text)
}

pub fn parse_str(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    resolve(raw)
}

fn solitons(v: &mut Violations, s: &RawSection, section: &str, default_k1: bool) -> Solitons {
    let (signs, z) = if default_k1 {
        (s.signs.clone().unwrap_or_else(|| vec![1.0]), s.z.clone().unwrap_or_else(|| vec![0.0]))
    } else {
        (
            v.need(s.signs.clone(), &format!("{section}.signs")).unwrap_or_default(),
            v.need(s.z.clone(), &format!("{section}.z")).unwrap_or_default(),
        )
    };
    v.check(signs.len() == z.len(), format!("{section}: signs and z must have the same length"));
    v.check(signs.iter().all(|s| *s == 1.0 || *s == -1.0), format!("{section}: signs must be +1 or -1"));
    Solitons { signs, z }
}

/// The scenario's own section, reporting it when absent. Sections of other
/// scenarios are ignored.
fn section<T: Default>(s: Option<T>, name: &str, v: &mut Violations) -> T {
    if s.is_none() {
        v.0.push(format!("missing section [{name}]"));
    }
    s.unwrap_or_default()
}

/// A soliton section restricted to the keys its scenario reads.
fn soliton_section(s: Option<RawSection>, name: &str, allowed: &[&str], v: &mut Violations) -> RawSection {
    let s = section(s, name, v);
    for key in s.present() {
        if !allowed.contains(&key) {
            v.0.push(format!("unknown key `{name}.{key}`"));
        }
    }
    s
}

fn range_ok(v: &mut Violations, r: (f64, f64), key: &str) {
    v.check(r.0 < r.1, format!("{key} must satisfy lo < hi"));
}

fn resolve(raw: RawConfig) -> Result<ExperimentConfig, ConfigError> {
    let mut v = Violations::default();
    let scenario = v.need(raw.scenario, "scenario");
    let p = v.need(raw.physics.p, "physics.p");
    let alpha = v.need(raw.physics.alpha, "physics.alpha");
    let dim = raw.physics.dim.unwrap_or(1);
    let dx = v.need(raw.grid.dx, "grid.dx");
    let half_len = v.need(raw.grid.half_len, "grid.half_len");
    let dt = v.need(raw.time.dt, "time.dt");
    let t_max = v.need(raw.time.t_max, "time.t_max");

    if let Some(p) = p {
        v.check(p > 2.0, format!("physics.p = {p}: the restriction p > 2 is required"));
    }
    if let Some(a) = alpha {
        v.check(a > 0.0, format!("physics.alpha = {a}: damping alpha > 0 is required"));
    }
    v.check(dim == 1, format!("physics.dim = {dim}: evolution is one-dimensional (dim = 1)"));
    if let Some(dx) = dx {
        v.check(dx > 0.0, "grid.dx must be positive");
    }
    if let (Some(dt), Some(dx)) = (dt, dx) {
        v.check(dt > 0.0 && dt <= 0.5 * dx, format!("time.dt = {dt} violates the CFL bound dt <= 0.5 dx = {}", 0.5 * dx));
    }
    if let Some(t) = t_max {
        v.check(t > 0.0, "time.t_max must be positive");
    }
    let sample_every = raw.time.sample_every.unwrap_or(10);
    v.check(sample_every >= 1, "time.sample_every must be at least 1");
    let formats = raw.output.formats.unwrap_or_else(|| vec![Format::Ndjson, Format::Json, Format::Csv]);

    let params = scenario.map(|sc| match sc {
        Scenario::Dichotomy => {
            let s = section(raw.dichotomy, "dichotomy", &mut v);
            Params::Dichotomy { lambdas: s.lambdas.unwrap_or_else(|| vec![0.5, 0.9, 1.1, 2.0]) }
        }
        Scenario::SingleSoliton => {
            let s = soliton_section(raw.single_soliton, "single_soliton", &["signs", "z", "h", "phi"], &mut v);
            let sol = solitons(&mut v, &s, "single_soliton", true);
            let h = v.need(s.h.clone(), "single_soliton.h").unwrap_or_default();
            v.check(h.len() == sol.signs.len(), "single_soliton.h needs one entry per soliton");
            Params::SingleSoliton { solitons: sol, h, phi: s.phi.unwrap_or(PhiSpec::None) }
        }
        Scenario::TwoSolitonMap => {
            let s = soliton_section(raw.two_soliton_map, "two_soliton_map", &["signs", "z", "h1_range", "h2_range", "n1", "n2", "phi"], &mut v);
            let sol = solitons(&mut v, &s, "two_soliton_map", false);
            let h1 = v.need(s.h1_range, "two_soliton_map.h1_range").unwrap_or((0.0, 1.0));
            let h2 = s.h2_range.unwrap_or(h1);
            range_ok(&mut v, h1, "two_soliton_map.h1_range");
            range_ok(&mut v, h2, "two_soliton_map.h2_range");
            let n1 = s.n1.unwrap_or(17);
            let n2 = s.n2.unwrap_or(n1);
            v.check((1..=64).contains(&n1) && (1..=64).contains(&n2), "two_soliton_map: resolution must be within 1..=64 per axis");
            Params::TwoSolitonMap { solitons: sol, h1_range: h1, h2_range: h2, n1, n2, phi: s.phi.unwrap_or(PhiSpec::None) }
        }
        Scenario::Threshold => {
            let s = soliton_section(
                raw.threshold,
                "threshold",
                &["signs", "z", "fixed_slot", "h_fixed", "range", "tol", "phi", "slowdown", "lipschitz_directions", "lipschitz_step"],
                &mut v,
            );
            let sol = solitons(&mut v, &s, "threshold", true);
            let range = v.need(s.range, "threshold.range").unwrap_or((0.0, 1.0));
            range_ok(&mut v, range, "threshold.range");
            let tol = s.tol.unwrap_or(1e-8);
            v.check(tol > 0.0, "threshold.tol must be positive");
            let fixed = match (s.fixed_slot, s.h_fixed) {
                (Some(k), Some(h)) => {
                    v.check(k >= 1 && k <= sol.signs.len(), "threshold.fixed_slot is 1-based and must name a soliton");
                    Some((k.saturating_sub(1), h))
                }
                (None, None) => None,
                _ => {
                    v.0.push("threshold: fixed_slot and h_fixed go together".into());
                    None
                }
            };
            let lipschitz = s.lipschitz_directions.map(|n| Lipschitz { directions: n, step: s.lipschitz_step.unwrap_or(1e-3) });
            Params::Threshold { solitons: sol, fixed, range, tol, phi: s.phi.unwrap_or(PhiSpec::None), slowdown: s.slowdown.unwrap_or(true), lipschitz }
        }
        Scenario::G0 => {
            let s = soliton_section(raw.g0, "g0", &["signs", "z", "box1", "box2", "tol", "phi"], &mut v);
            let sol = solitons(&mut v, &s, "g0", false);
            v.check(sol.signs.len() == 2, "g0 needs exactly two solitons");
            let box1 = v.need(s.box1, "g0.box1").unwrap_or((0.0, 1.0));
            let box2 = s.box2.unwrap_or(box1);
            range_ok(&mut v, box1, "g0.box1");
            range_ok(&mut v, box2, "g0.box2");
            Params::G0 { solitons: sol, box1, box2, tol: s.tol.unwrap_or(1e-8), phi: s.phi.unwrap_or(PhiSpec::None) }
        }
        Scenario::Merger => {
            let s = section(raw.merger, "merger", &mut v);
            let d = MergerConfig::default();
            Params::Merger(MergerConfig {
                r: s.r.unwrap_or(d.r),
                h0: s.h0.unwrap_or(d.h0),
                d_switch: s.d_switch.unwrap_or(d.d_switch),
                t_approach: s.t_approach.unwrap_or(d.t_approach),
                eps_range: s.eps_range.unwrap_or(d.eps_range),
                tol: s.tol.unwrap_or(d.tol),
                t_window: s.t_window.unwrap_or(d.t_window),
            })
        }
        Scenario::ReducedFlow => {
            let s = soliton_section(raw.reduced_flow, "reduced_flow", &["signs", "z", "t_end", "dt"], &mut v);
            let sol = solitons(&mut v, &s, "reduced_flow", false);
            Params::ReducedFlow { solitons: sol, t_end: v.need(s.t_end, "reduced_flow.t_end").unwrap_or(1.0), dt: s.dt.unwrap_or(0.05) }
        }
        Scenario::ToyOde => {
            let s = section(raw.toy_ode, "toy_ode", &mut v);
            Params::ToyOde {
                eps: s.eps.unwrap_or_else(|| vec![0.0, 0.3, -0.3]),
                h0: s.h0,
                t_end: s.t_end.unwrap_or(1e8),
                dt: s.dt.unwrap_or(0.01),
                ratio: s.ratio.unwrap_or(10.0),
            }
        }
    });

    if !v.0.is_empty() {
        return Err(ConfigError::Validation(v.0));
    }
    // every `need` above succeeded, so the unwraps below cannot fail
    Ok(ExperimentConfig {
        scenario: scenario.expect("checked"),
        seed: raw.seed.unwrap_or(0),
        physics: Physics { dim, p: p.expect("checked"), alpha: alpha.expect("checked") },
        grid: GridCfg { half_len: half_len.expect("checked"), dx: dx.expect("checked") },
        time: TimeCfg { dt: dt.expect("checked"), t_max: t_max.expect("checked"), sample_every, blowup_norm_factor: raw.time.blowup_norm_factor.unwrap_or(10.0) },
        thresholds: raw.thresholds.unwrap_or_default(),
        output: OutputCfg { directory: raw.output.directory.unwrap_or_else(|| "runs".into()), formats },
        params: params.expect("checked"),
    })
}
