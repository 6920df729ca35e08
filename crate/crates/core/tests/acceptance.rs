//! One line per acceptance criterion, `PASS` or `FAIL` with the measured
//! numbers. Tolerances are pinned here and nowhere else.

mod common;

use std::io::Write;
use std::sync::OnceLock;
use std::time::Instant;

use common::*;
use nlkg::classify::*;
use nlkg::evolve::{evolve, Sample, Trajectory};
use nlkg::exec::Exec;
use nlkg::field::*;
use nlkg::groundstate::solve_ground_state;
use nlkg::manifold::*;
use nlkg::modulation::*;
use nlkg::numerics::linear_fit;
use nlkg::spectrum::{assemble_eigenmodes, kernel_residual, solve_internal_mode, symplectic_pair};

fn report(n: u32, pass: bool, detail: String) {
    let line = format!("acceptance criterion {n:>2}: {} | {detail}\n", if pass { "PASS" } else { "FAIL" });
    // bypass the test harness capture so the line always reaches the log
    let _ = std::io::stdout().write_all(line.as_bytes());
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_ground_state_exactness() {
    let clock = Instant::now();
    let gs3 = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
    let sup = gs3
        .values
        .iter()
        .enumerate()
        .map(|(i, q)| (q - 2f64.sqrt() / (i as f64 * gs3.step).cosh()).abs())
        .fold(0.0, f64::max);
    let gs5 = solve_ground_state(1, 5.0, 30.0, 1e-12).unwrap();
    let q0_err = (gs5.q0 - 3f64.powf(0.25)).abs();
    let secs = clock.elapsed().as_secs_f64();
    let pass = sup <= 1e-8 && q0_err <= 1e-6 && secs < 1.0;
    report(1, pass, format!("sup|Q - sqrt2 sech| = {sup:.2e} (<= 1e-8), |Q5(0) - 3^(1/4)| = {q0_err:.2e} (<= 1e-6), {secs:.2} s (< 1 s)"));
}

#[test]
fn criterion_02_internal_mode() {
    let clock = Instant::now();
    let gs = ground();
    let (nu0, phi) = solve_internal_mode(&gs, 1e-10).unwrap();
    let nu_err = (nu0 * nu0 - 3.0).abs();
    let phi_err = (phi.value(0.0) - 3f64.sqrt() / 2.0).abs();
    let kr = kernel_residual(&gs);
    let bound = 10.0 * gs.step * gs.step;
    let secs = clock.elapsed().as_secs_f64();
    let pass = nu_err <= 1e-6 && phi_err <= 1e-4 && kr <= bound && secs < 5.0;
    report(2, pass, format!("|nu0^2 - 3| = {nu_err:.2e}, |phi(0) - sqrt3/2| = {phi_err:.2e}, kernel residual {kr:.2e} (<= {bound:.2e}), {secs:.2} s"));
}

#[test]
fn criterion_03_eigenmode_algebra() {
    let m = fine();
    let g = grid(m, 30.0);
    let modes = [Mode::Plus, Mode::Minus, Mode::Trans, Mode::AntiTrans];
    let mut off = 0.0f64;
    let mut diag_err = 0.0f64;
    for &xi in &modes {
        for &eta in &modes {
            let w = symplectic_pair(&m.mode(g, xi, 0.0), &m.dual(g, eta, 0.0)).unwrap();
            if xi == eta {
                diag_err = diag_err.max((w - m.pairing(xi)).abs() / m.pairing(xi).abs());
            } else {
                off = off.max(w.abs());
            }
        }
    }
    let gs = ground();
    let (nu0, phi) = solve_internal_mode(&gs, 1e-10).unwrap();
    let spec = assemble_eigenmodes(nu0, phi, &gs, ALPHA).unwrap();
    let prod = (spec.nu_plus * spec.nu_minus + spec.nu0_sq).abs() / spec.nu0_sq;
    let w_plus = symplectic_pair(&m.mode(g, Mode::Plus, 0.0), &m.dual(g, Mode::Plus, 0.0)).unwrap();
    let c_formula = 2.0 * (ALPHA * ALPHA + m.nu0_sq).sqrt();
    let c_err = (w_plus - c_formula).abs() / c_formula;
    let pass = off <= 1e-6 && diag_err <= 1e-6 && prod <= 1e-12 && c_err <= 1e-8;
    report(
        3,
        pass,
        format!("max off-diagonal {off:.2e} (<= 1e-6), diagonal rel err {diag_err:.2e}, |nu+ nu- + nu0^2|/nu0^2 = {prod:.2e} (<= 1e-12), C+ rel err {c_err:.2e} (<= 1e-8)"),
    );
}

/// The h = 0 pair at `D = 14`, dx 0.02, dt 0.01 on [−60, 60], shadowed on
/// its stable manifold and run to t = 200 without stopping at the hold.
fn pair_run() -> &'static (Outcome, Trajectory) {
    static RUN: OnceLock<(Outcome, Trajectory)> = OnceLock::new();
    RUN.get_or_init(|| {
        let m = fine();
        let g = grid(m, 60.0);
        let signs = [1.0, -1.0];
        let z = [-7.0, 7.0];
        let s = superpose(m, g, &signs, &z, &[0.0, 0.0], None).unwrap();
        let cfg = ClassifyConfig { track: true, t_hold: 1e9, ..Default::default() };
        let mut e = ecfg(m, 200.0, 0.25);
        e.dt = 0.01;
        e.sample_every = 25;
        classify_run(s, m, &signs, &z, &cfg, &e, None).unwrap()
    })
}

#[test]
fn criterion_04_energy_dissipation_identity() {
    let (o, traj) = pair_run();
    let worst = traj.samples.iter().map(|s| s.balance_residual.abs() / (1.0 + s.f.energy.abs())).fold(0.0, f64::max);
    let pass = worst <= 1e-4 && traj.end_time() >= 100.0;
    report(
        4,
        pass,
        format!("max window residual / (1+|E|) = {worst:.2e} (<= 1e-4) over {} windows to t = {}, max shadowing kick {:.1e}", traj.samples.len(), traj.end_time(), o.max_correction),
    );
}

#[test]
fn criterion_05_linear_instability_rate() {
    let m = fine();
    let g = grid(m, 30.0);
    let s = superpose(m, g, &[1.0], &[0.0], &[0.01], None).unwrap();
    let (o, _) = classify_run(s, m, &[1.0], &[0.0], &ClassifyConfig::default(), &ecfg(m, 60.0, 0.02), None).unwrap();
    let st = o.stage_times;
    let fit = st.t2.zip(st.t3).and_then(|(a, b)| growth_rate(&o.history, a, b));
    let (rate, n) = fit.unwrap_or((f64::NAN, 0));
    let rel = (rate / m.nu_plus - 1.0).abs();
    let pass = n >= 5 && rel <= 0.1;
    report(5, pass, format!("slope of log|a+| on [T2, T3] = [{:?}, {:?}]: {rate:.4} from {n} samples vs nu+ = {:.4} ({:.1}%, <= 10%)", st.t2, st.t3, m.nu_plus, 100.0 * rel));
}

#[test]
fn criterion_06_sub_ground_state_dichotomy() {
    let m = coarse();
    let g = grid(m, 30.0);
    let cfg = ClassifyConfig::default();
    let lam = |l: f64| FieldState::from_fn(g, |x| l * m.q.value(x), |_| 0.0);
    let kinds: Vec<Kind> = [0.5, 0.9, 1.1, 2.0]
        .iter()
        .map(|&l| classify_trajectory(lam(l), m, &[1.0], &[0.0], &cfg, &ecfg(m, 100.0, 0.25)).unwrap().kind)
        .collect();
    // measured decay of the λ = 0.5 run
    let tr = evolve(lam(0.5), &ecfg(m, 30.0, 0.5), &mut []).unwrap();
    let (t, ln): (Vec<f64>, Vec<f64>) = tr.samples.iter().filter(|s| s.t >= 5.0).map(|s| (s.t, 0.5 * s.f.h_norm_sq.ln())).unzip();
    let (_, slope, corr) = linear_fit(&t, &ln);
    // the certificate for λ = 2 turns on and stays on
    let tr = evolve(lam(2.0), &ecfg(m, 30.0, 0.02), &mut []).unwrap();
    let flags: Vec<bool> = tr.samples.iter().map(|s: &Sample| blowup_criterion(&s.f, 3.0, ALPHA)).collect();
    let first = flags.iter().position(|&b| b);
    let persistent = first.is_some_and(|i| flags[i..].iter().all(|&b| b));
    let pass = kinds[0] == Kind::Decay && kinds[3] == Kind::Blowup && slope < 0.0 && corr <= -0.99 && persistent;
    report(
        6,
        pass,
        format!(
            "battery 0.5/0.9/1.1/2 -> {}/{}/{}/{}; lambda=0.5 log-norm slope {slope:.3} (corr {corr:.4}); lambda=2 certificate on from sample {:?} of {}, persistent {persistent}",
            kinds[0].label(),
            kinds[1].label(),
            kinds[2].label(),
            kinds[3].label(),
            first,
            flags.len()
        ),
    );
}

#[test]
fn criterion_07_repulsion_law() {
    let m = fine();
    let gs = ground();
    let flow = reduced_gradient_flow(&[1.0, -1.0], &[-7.0, 7.0], 500.0, 0.01, &gs, m.c_one).unwrap();
    let inv: Vec<f64> = flow.eta.iter().map(|e| 1.0 / e).collect();
    let (_, _, corr) = linear_fit(&flow.t, &inv);
    let (_, traj) = pair_run();
    let mut worst = 0.0f64;
    let mut count = 0;
    for s in traj.samples.iter().filter(|s| s.t <= 50.0 + 1e-9) {
        let Some(fr) = &s.frame else { continue };
        let k = ((s.t / 0.01).round() as usize).min(flow.t.len() - 1);
        for j in 0..2 {
            worst = worst.max((fr.centers[j] - flow.z[k][j]).abs());
        }
        count += 1;
    }
    let pass = corr >= 0.999 && worst <= 0.1 && count >= 150;
    report(7, pass, format!("corr(1/eta0(Dz), t) = {corr:.6} (>= 0.999); max |z_pde - z_reduced| on [0, 50] = {worst:.2e} (<= 0.1) over {count} samples"));
}

#[test]
fn criterion_08_even_part_cancellation() {
    let (_, traj) = pair_run();
    let gs = ground();
    let pts: Vec<(f64, f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.t >= 10.0 && s.t <= 200.0)
        .filter_map(|s| s.frame.as_ref().and_then(|f| f.even_norm.map(|e| (s.t, e, gs.eta0(f.dz)))))
        .collect();
    let trap = |sel: &dyn Fn(&(f64, f64, f64)) -> f64| pts.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (sel(&w[0]) + sel(&w[1]))).sum::<f64>();
    let even = trap(&|p| p.1);
    let eta = trap(&|p| p.2);
    let span = pts.last().map_or(0.0, |p| p.0);
    let pass = span >= 200.0 - 1e-9 && even <= 0.2 * eta;
    report(8, pass, format!("int even_part_norm = {even:.3e}, int eta0(Dz) = {eta:.3e} over [10, {span}] (ratio {:.2e}, <= 0.2)", even / eta));
}

#[test]
fn criterion_09_toy_rotation() {
    let still = toy_unstable_ode(0.0, [1.0, 0.5], 100.0, 0.01);
    let drift = still.iter().map(|p| (p.angle - still[0].angle).abs()).fold(0.0, f64::max);
    let plus = toy_unstable_ode(0.3, [1.0, 0.0], 1e9, 0.01);
    let minus = toy_unstable_ode(-0.3, [0.0, 1.0], 1e9, 0.01);
    let tp = toy_crossing(&plus, 0, 10.0);
    let tm = toy_crossing(&minus, 1, 10.0);
    let pass = drift == 0.0 && tp.is_some() && tm.is_some();
    let show = |t: Option<f64>| t.map_or("never".to_string(), |t| format!("{t:.3e}"));
    report(9, pass, format!("eps=0 angle drift {drift:e}; ratio 10 reached at t = {} (eps=0.3) and t = {} (eps=-0.3)", show(tp), show(tm)));
}

fn k1_setup() -> Setup<'static> {
    let m = coarse();
    Setup { modes: m, grid: grid(m, 30.0), signs: vec![1.0], z: vec![0.0], phi: None, cfg: ClassifyConfig::default(), ecfg: ecfg(m, 150.0, 0.25), exec: Exec::Parallel }
}

fn k2_setup(phi: Option<FieldState>) -> Setup<'static> {
    let m = coarse();
    Setup {
        modes: m,
        grid: grid(m, 40.0),
        signs: vec![1.0, -1.0],
        z: vec![-8.0, 8.0],
        phi,
        cfg: ClassifyConfig::default(),
        ecfg: ecfg(m, 150.0, 0.25),
        exec: Exec::Parallel,
    }
}

#[test]
fn criterion_10_threshold_structure() {
    let clock = Instant::now();
    let tol = 1e-8;
    let s1 = k1_setup();
    let r1 = find_threshold(&s1, None, (-0.1, 0.1), tol).unwrap();
    let slow = slowdown(&s1, &r1, tol).unwrap();

    let s2 = k2_setup(None);
    let map = phase_map(&s2, (-0.08, 0.08), (-0.08, 0.08), 17, 17).unwrap();
    let corners = (map.kind_at(0, 0), map.kind_at(16, 16), map.kind_at(0, 16), map.kind_at(16, 0));
    let undetermined = map.cells.iter().filter(|c| !c.kind.is_open()).count();

    // the two-soliton segment search, reported for reference only
    let r2 = find_threshold(&s2, Some((1, -0.05)), (-0.05, 0.05), tol).unwrap();
    let slow2 = slowdown(&s2, &r2, tol).unwrap();

    let pass = r1.h_star.abs() <= 1e-6
        && map.decay_components == 1
        && map.blowup_components == 1
        && corners.0 == Kind::Decay
        && corners.1 == Kind::Blowup
        && r1.entered_tube
        && slow.ratio >= 2.0;
    report(
        10,
        pass,
        format!(
            "K=1 h* = {:.2e} (|h*| <= 1e-6, bracket {:.1e}, {} steps); 17x17 map: {} Decay / {} Blowup components, {undetermined} open cells, corners (-,-)={} (+,+)={} (-,+)={} (+,-)={}; K=1 hold near {:.2} vs 10 tol away {:.2} (ratio {:.2}, >= 2); K=2 segment h1* = {:.3e} hold ratio {:.2} (reference); {:.0} s",
            r1.h_star,
            r1.bracket_width,
            r1.steps,
            map.decay_components,
            map.blowup_components,
            corners.0.label(),
            corners.1.label(),
            corners.2.label(),
            corners.3.label(),
            slow.near_hold,
            slow.far.iter().map(|p| p.one_soliton_hold).fold(0.0, f64::max),
            slow.ratio,
            r2.h_star,
            slow2.ratio,
            clock.elapsed().as_secs_f64()
        ),
    );
}

#[test]
fn criterion_11_g0_symmetry() {
    let m = coarse();
    let g = grid(m, 40.0);
    // odd φ, so the data keep the u(x) -> -u(-x) symmetry when h1 = h2
    let b = |x: f64| 0.003 * (-(x - 6.0f64).powi(2)).exp();
    let phi = FieldState::from_fn(g, |x| b(x) - b(-x), |_| 0.0);
    let s = k2_setup(Some(phi));
    let tol = 1e-8;
    let p = find_2sol_point(&s, (-0.02, 0.02), (-0.02, 0.02), tol).unwrap();
    let gap = (p.h1 - p.h2).abs();
    let pass = gap <= 10.0 * tol;
    report(11, pass, format!("G0 = ({:.6e}, {:.6e}), |h1* - h2*| = {gap:.1e} (<= {:.0e}) after {} rounds", p.h1, p.h2, 10.0 * tol, p.rounds));
}

#[test]
fn criterion_12_merger() {
    let m = coarse();
    let g = grid(m, 40.0);
    let mcfg = MergerConfig::default();
    let rep = merger(m, g, &mcfg, &ClassifyConfig::default(), &ecfg(m, 200.0, 0.25)).unwrap();
    let at = |what: &str| rep.events.iter().find(|e| e.what.starts_with(what));
    let middle = at("middle left its tube");
    let outer = at("outer pair reached hand-over");
    let thr = at("amplitude threshold");
    let held = at("single soliton held");
    let ordered = match (middle, outer, thr, held) {
        (Some(a), Some(b), Some(c), Some(d)) => a.t <= b.t && b.t <= c.t && c.t <= d.t,
        _ => false,
    };
    let zc = rep.final_center.unwrap_or(f64::NAN);
    let pass = ordered
        && middle.is_some_and(|e| e.value < 0.0)
        && rep.held
        && zc.abs() <= 1.0
        && rep.final_v_norm.is_some_and(|v| v <= 0.02)
        && rep.final_a_plus.is_some_and(|a| a.abs() <= 0.02);
    let seq: Vec<String> = rep.events.iter().map(|e| format!("{}@{:.1}", e.what, e.t)).collect();
    report(
        12,
        pass,
        format!(
            "r = {}: events [{}]; terminal sign {:?} at z = {zc:.1e}, v = {:.1e}, hold {:.1}; kicks approach {:.1e} / terminal {:.1e}",
            mcfg.r,
            seq.join(", "),
            rep.final_sign,
            rep.final_v_norm.unwrap_or(f64::NAN),
            rep.hold,
            rep.approach_correction,
            rep.terminal_correction
        ),
    );
}
