//! Negative direction of `𝓛 = -Δ + 1 - pQ^{p-1}`, damped eigenvalues `ν±`
//! and the symplectic pairings of the eigenmodes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::FieldState;
use crate::groundstate::GroundState;
use crate::numerics::{solve_tridiagonal, sphere_area, sturm_count, ExpTail, RadialProfile};

#[derive(Debug, Clone, Serialize)]
pub struct SpectralData {
    pub dim: usize,
    pub nu0: f64,
    pub nu0_sq: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub alpha: f64,
    pub c_omega_plus: f64,
    pub c_omega_minus: f64,
    pub c_omega_1: f64,
    /// `‖(J𝓢^α − ν⁺)Y⁺‖` on the radial grid.
    pub eigen_residual: f64,
    #[serde(skip)]
    pub phi: RadialProfile,
}

/// Symmetric tridiagonal operator with its lowest eigenpair.
struct Lowest {
    lambda: f64,
    vector: Vec<f64>,
}

/// Lowest eigenpair of the symmetric tridiagonal `(diag, off)`: Sturm
/// bisection for the eigenvalue, then inverse iteration with a shift just
/// below it (the shifted matrix is positive definite, so the Thomas solve is
/// stable).
fn lowest_eigenpair(diag: &[f64], off: &[f64], tol: f64) -> Result<Lowest> {
    let n = diag.len();
    let radius = off.iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let mut lo = diag.iter().fold(f64::INFINITY, |m, &d| m.min(d)) - 2.0 * radius;
    let mut hi = diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d)) + 2.0 * radius;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sturm_count(diag, off, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let shift = lo - 1e-9 * lo.abs().max(1.0);
    let sub: Vec<f64> = std::iter::once(0.0).chain(off.iter().copied()).collect();
    let sup: Vec<f64> = off.iter().copied().chain(std::iter::once(0.0)).collect();
    let shifted: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mut y = diag[i] * v[i];
                if i > 0 {
                    y += off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    y += off[i] * v[i + 1];
                }
                y
            })
            .collect()
    };
    for _ in 0..50 {
        let mut w = v.clone();
        if !solve_tridiagonal(&sub, &shifted, &sup, &mut w) {
            return Err(Error::NotConverged { what: "inverse iteration" });
        }
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / norm).collect();
        let tv = apply(&v);
        let lambda: f64 = tv.iter().zip(&v).map(|(a, b)| a * b).sum();
        let res = tv.iter().zip(&v).map(|(a, b)| (a - lambda * b).powi(2)).sum::<f64>().sqrt();
        if res <= tol * lambda.abs().max(1.0) {
            return Ok(Lowest { lambda, vector: v });
        }
    }
    Err(Error::NotConverged { what: "inverse iteration" })
}

/// Lowest eigenpair `(ν₀, φ)` of the radial `𝓛` on the ground-state grid.
/// `φ` is `L²(R^N)`-normalized and positive at the origin.
pub fn solve_internal_mode(gs: &GroundState, tol: f64) -> Result<(f64, RadialProfile)> {
    let h = gs.step;
    let m = gs.values.len() - 1;
    let p = gs.power;
    let inv = 1.0 / (h * h);
    let pot = |r: f64| 1.0 - p * gs.q(r).powf(p - 1.0);
    let tail_rate = |lambda: f64| (1.0 - lambda).max(0.0).sqrt();
    if gs.dim == 1 {
        // full line, Dirichlet at ±r_max
        let nodes: Vec<f64> = (1..2 * m).map(|i| (i as f64 - m as f64) * h).collect();
        let diag: Vec<f64> = nodes.iter().map(|&x| 2.0 * inv + pot(x)).collect();
        let off = vec![-inv; nodes.len() - 1];
        let low = lowest_eigenpair(&diag, &off, tol)?;
        if low.lambda >= 0.0 {
            return Err(Error::PositiveGroundEigenvalue(low.lambda));
        }
        let centre = m - 1;
        let sgn = low.vector[centre].signum();
        let scale = sgn / h.sqrt();
        let mut half: Vec<f64> = (0..=m)
            .map(|i| {
                if i == m {
                    0.0
                } else {
                    0.5 * (low.vector[centre + i] + low.vector[centre - i]) * scale
                }
            })
            .collect();
        half[m] = 0.0;
        let tail = ExpTail { coeff: 0.0, power: 0.0, rate: tail_rate(low.lambda) };
        Ok(((-low.lambda).sqrt(), RadialProfile::new(h, half, tail)))
    } else {
        // ψ = r^{(N-1)/2} φ turns the radial operator into a symmetric one
        let n = gs.dim as f64;
        let cent = (n - 1.0) * (n - 3.0) / 4.0;
        let nodes: Vec<f64> = (1..m).map(|i| i as f64 * h).collect();
        let diag: Vec<f64> = nodes.iter().map(|&r| 2.0 * inv + pot(r) + cent / (r * r)).collect();
        let off = vec![-inv; nodes.len() - 1];
        let low = lowest_eigenpair(&diag, &off, tol)?;
        if low.lambda >= 0.0 {
            return Err(Error::PositiveGroundEigenvalue(low.lambda));
        }
        let sgn = low.vector[0].signum();
        let scale = sgn / (sphere_area(gs.dim) * h).sqrt();
        let s = (n - 1.0) / 2.0;
        let mut phi = vec![0.0; m + 1];
        for (i, r) in nodes.iter().enumerate() {
            phi[i + 1] = low.vector[i] * scale / r.powf(s);
        }
        // even extrapolation a + b r² through the first two nodes
        phi[0] = (4.0 * phi[1] - phi[2]) / 3.0;
        let tail = ExpTail { coeff: 0.0, power: 0.0, rate: tail_rate(low.lambda) };
        Ok(((-low.lambda).sqrt(), RadialProfile::new(h, phi, tail)))
    }
}

/// Damped eigenvalues and pairing constants for damping `alpha`.
pub fn assemble_eigenmodes(nu0: f64, phi: RadialProfile, gs: &GroundState, alpha: f64) -> Result<SpectralData> {
    if !(alpha > 0.0) {
        return Err(Error::InvalidInput(format!("damping {alpha} must be positive")));
    }
    let nu0_sq = nu0 * nu0;
    let root = (alpha * alpha + nu0_sq).sqrt();
    // ν⁺ written without cancellation: -α + √(α²+ν₀²) = ν₀² / (α + √(α²+ν₀²))
    let nu_plus = nu0_sq / (alpha + root);
    let nu_minus = -alpha - root;
    let c_omega_plus = nu_plus - nu_minus;
    let c_omega_1 = 2.0 * alpha * gs.grad_sq / gs.dim as f64;

    // (J𝓢^α − ν⁺)Y⁺ for Y⁺ = (φ, ν⁺φ): the first row vanishes identically,
    // the second is -𝓛φ - 2αν⁺φ - (ν⁺)²φ = (ν₀² - 2αν⁺ - (ν⁺)²)φ + (−𝓛φ − ν₀²φ).
    let h = phi.step();
    let m = phi.samples().len() - 1;
    let p = gs.power;
    let mut res = 0.0;
    for i in 1..m {
        let r = i as f64 * h;
        let s = phi.samples();
        let lap = if gs.dim == 1 {
            (s[i - 1] + s[i + 1] - 2.0 * s[i]) / (h * h)
        } else {
            (s[i - 1] + s[i + 1] - 2.0 * s[i]) / (h * h) + (gs.dim as f64 - 1.0) / r * (s[i + 1] - s[i - 1]) / (2.0 * h)
        };
        let lphi = -lap + (1.0 - p * gs.q(r).powf(p - 1.0)) * s[i];
        let row = -lphi - 2.0 * alpha * nu_plus * s[i] - nu_plus * nu_plus * s[i];
        res += row * row * r.powi(gs.dim as i32 - 1);
    }
    let eigen_residual = (res * h * sphere_area(gs.dim)).sqrt();
    Ok(SpectralData {
        dim: gs.dim,
        nu0,
        nu0_sq,
        nu_plus,
        nu_minus,
        alpha,
        c_omega_plus,
        c_omega_minus: -c_omega_plus,
        c_omega_1,
        eigen_residual,
        phi,
    })
}

/// `ω(f, g) = ∫ (f₂ g₁ − f₁ g₂) dx` by the trapezoid rule.
pub fn symplectic_pair(f: &FieldState, g: &FieldState) -> Result<f64> {
    f.check_grid(g)?;
    Ok(omega_unchecked(f, g))
}

#[inline]
pub(crate) fn omega_unchecked(f: &FieldState, g: &FieldState) -> f64 {
    let grid = &f.grid;
    let mut acc = 0.0;
    for i in 0..grid.n {
        acc += grid.weight(i) * (f.udot[i] * g.u[i] - f.u[i] * g.udot[i]);
    }
    acc * grid.dx
}

/// Discrete `L²` norm of `𝓛 ∂ₓQ` on the ground-state grid (1D, interior
/// nodes); translation invariance makes it `O(h²)`.
pub fn kernel_residual(gs: &GroundState) -> f64 {
    let h = gs.step;
    let m = gs.values.len() - 1;
    let p = gs.power;
    let dq = |i: i64| -> f64 {
        let j = i.unsigned_abs() as usize;
        if j > m {
            0.0
        } else {
            i.signum() as f64 * gs.deriv[j]
        }
    };
    let mut acc = 0.0;
    for i in -(m as i64) + 1..m as i64 {
        let x = i as f64 * h;
        let l = -(dq(i - 1) + dq(i + 1) - 2.0 * dq(i)) / (h * h) + (1.0 - p * gs.q(x).powf(p - 1.0)) * dq(i);
        acc += l * l;
    }
    (acc * h).sqrt()
}

/// Lowest eigenpair of the 3-point discrete `𝓛` around a grid-exact ground
/// state sampled with spacing `dx` (1D). Returns `ν₀²` and the even,
/// `L²`-normalized eigenvector as a profile on the same half-grid.
pub fn discrete_internal_mode(q: &RadialProfile, p: f64) -> Result<(f64, RadialProfile)> {
    let dx = q.step();
    let half = q.samples();
    let m = half.len() - 1;
    let inv = 1.0 / (dx * dx);
    let node = |i: usize| half[(i as i64 - m as i64).unsigned_abs() as usize];
    let diag: Vec<f64> = (0..=2 * m).map(|i| 2.0 * inv + 1.0 - p * node(i).abs().powf(p - 1.0)).collect();
    let off = vec![-inv; 2 * m];
    let low = lowest_eigenpair(&diag, &off, 1e-12)?;
    if low.lambda >= 0.0 {
        return Err(Error::PositiveGroundEigenvalue(low.lambda));
    }
    let sgn = low.vector[m].signum() / dx.sqrt();
    let samples: Vec<f64> = (0..=m).map(|i| 0.5 * (low.vector[m + i] + low.vector[m - i]) * sgn).collect();
    let tail = ExpTail { coeff: 0.0, power: 0.0, rate: 1.0 };
    Ok((-low.lambda, RadialProfile::new(dx, samples, tail)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groundstate::solve_ground_state;

    #[test]
    fn poschl_teller_mode() {
        let gs = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
        let (nu0, phi) = solve_internal_mode(&gs, 1e-10).unwrap();
        assert!((nu0 * nu0 - 3.0).abs() < 1e-6, "ν₀² = {}", nu0 * nu0);
        assert!((phi.value(0.0) - 3f64.sqrt() / 2.0).abs() < 1e-4);
        // closed form √3/2 sech²
        for x in [0.3f64, 1.0, 2.5] {
            let exact = 3f64.sqrt() / 2.0 / x.cosh().powi(2);
            assert!((phi.value(x) - exact).abs() < 1e-5);
        }
        assert!(kernel_residual(&gs) <= 10.0 * gs.step * gs.step);
        let spec = assemble_eigenmodes(nu0, phi, &gs, 0.5).unwrap();
        assert!((spec.nu_plus - 1.302_775_64).abs() < 1e-6);
        assert!((spec.c_omega_plus - 3.605_551_28).abs() < 1e-6);
        assert!((spec.c_omega_1 - 4.0 / 3.0).abs() < 1e-8);
        assert!((spec.nu_plus * spec.nu_minus + spec.nu0_sq).abs() <= 1e-12 * spec.nu0_sq);
        assert!(spec.eigen_residual < 1e-6, "{}", spec.eigen_residual);
    }

    #[test]
    fn higher_dimensional_modes_are_negative() {
        for dim in [2, 3] {
            let gs = solve_ground_state(dim, 3.0, 30.0, 1e-10).unwrap();
            let (nu0, phi) = solve_internal_mode(&gs, 1e-10).unwrap();
            assert!(nu0 > 0.0 && phi.value(0.0) > 0.0);
            let h = phi.step();
            let norm: f64 = phi
                .samples()
                .iter()
                .enumerate()
                .map(|(i, v)| v * v * (i as f64 * h).powi(dim as i32 - 1))
                .sum::<f64>()
                * h
                * sphere_area(dim);
            assert!((norm - 1.0).abs() < 1e-3, "N={dim} norm {norm}");
        }
    }

    #[test]
    fn discrete_mode_converges_to_continuum() {
        let gs = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
        let mut prev = f64::INFINITY;
        for dx in [0.1, 0.05, 0.025] {
            let q = crate::groundstate::discrete_ground_state(&gs, dx, 40.0).unwrap();
            let (nu0_sq, phi) = discrete_internal_mode(&q, 3.0).unwrap();
            let err = (nu0_sq - 3.0).abs();
            assert!(err < prev / 3.0, "dx={dx} err={err}");
            assert!((phi.value(0.0) - 3f64.sqrt() / 2.0).abs() < 10.0 * dx * dx);
            prev = err;
        }
    }
}
