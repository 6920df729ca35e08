mod common;

use common::*;
use nlkg::field::{FieldState, Grid};
use nlkg::modulation::Mode;
use nlkg::spectrum::{assemble_eigenmodes, solve_internal_mode, symplectic_pair};

const MODES: [Mode; 4] = [Mode::Plus, Mode::Minus, Mode::Trans, Mode::AntiTrans];

#[test]
fn biorthogonality_matrix_is_diagonal() {
    let m = fine();
    let g = grid(m, 30.0);
    for (i, &xi) in MODES.iter().enumerate() {
        for (j, &eta) in MODES.iter().enumerate() {
            let w = symplectic_pair(&m.mode(g, xi, 0.0), &m.dual(g, eta, 0.0)).unwrap();
            if i == j {
                assert!((w - m.pairing(xi)).abs() <= 1e-6 * m.pairing(xi).abs(), "{xi:?}: {w} vs {}", m.pairing(xi));
            } else {
                assert!(w.abs() <= 1e-6, "{xi:?}/{eta:?}: {w:e}");
            }
        }
    }
    assert!((m.c_plus - 2.0 * (ALPHA * ALPHA + m.nu0_sq).sqrt()).abs() < 1e-12);
}

#[test]
fn pairing_is_antisymmetric_and_checks_grids() {
    let g = Grid::new(10.0, 0.1).unwrap();
    let f = FieldState::from_fn(g, |x| (-x * x).exp(), |x| x.sin() * (-x * x / 3.0).exp());
    let h = FieldState::from_fn(g, |x| x * (-x * x).exp(), |x| (x / 2.0).cos() * (-x * x).exp());
    assert_eq!(symplectic_pair(&f, &f).unwrap(), 0.0);
    let a = symplectic_pair(&f, &h).unwrap();
    let b = symplectic_pair(&h, &f).unwrap();
    assert!((a + b).abs() < 1e-15);
    let other = FieldState::zeros(Grid::new(10.0, 0.05).unwrap());
    assert!(matches!(symplectic_pair(&f, &other), Err(nlkg::Error::GridMismatch(_))));
}

#[test]
fn discrete_frequency_refines_at_second_order() {
    let gs = ground();
    let mut errs = Vec::new();
    for dx in [0.1, 0.05] {
        let m = nlkg::modulation::GridModes::new(gs.clone(), ALPHA, dx).unwrap();
        errs.push((m.nu0_sq - 3.0).abs());
    }
    // halving dx changes nu0² by at most 4x the O(dx²) model
    assert!((errs[0] - errs[1]).abs() <= 4.0 * errs[0]);
    assert!(errs[1] < errs[0] / 3.0);
}

#[test]
fn continuum_modes_match_constants() {
    let gs = ground();
    let (nu0, phi) = solve_internal_mode(&gs, 1e-10).unwrap();
    let spec = assemble_eigenmodes(nu0, phi, &gs, ALPHA).unwrap();
    assert!(spec.nu_plus > 0.0 && spec.nu_minus < 0.0);
    assert_eq!(spec.c_omega_minus, -spec.c_omega_plus);
    // ⟨φ, Q'⟩ vanishes by parity
    let h = 0.01;
    let dot: f64 = (-3000..=3000).map(|i| {
        let x = i as f64 * h;
        spec.phi.value(x) * gs.q_prime(x)
    }).sum::<f64>() * h;
    assert!(dot.abs() < 1e-10);
}
