//! Discretized states `(u, u̇)` on `[-L, L]` and the functionals `E`, `K₀`, `𝒫`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modulation::GridModes;
use crate::numerics::Power;

/// Uniform grid on `[-L, L]` with an odd node count so `x = 0` is a node and
/// the node set is exactly symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_len: f64,
    pub dx: f64,
    pub n: usize,
}

impl Grid {
    pub fn new(half_len: f64, dx: f64) -> Result<Self> {
        let cells = half_len / dx;
        if !(dx > 0.0 && half_len > 0.0) || (cells - cells.round()).abs() > 1e-9 * cells.max(1.0) {
            return Err(Error::InvalidInput(format!("L = {half_len} is not a multiple of dx = {dx}")));
        }
        Ok(Self { half_len, dx, n: 2 * cells.round() as usize + 1 })
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        (i as f64 - ((self.n - 1) / 2) as f64) * self.dx
    }

    pub fn coords(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }

    /// Trapezoid weight (without the `dx` factor).
    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        if i == 0 || i + 1 == self.n {
            0.5
        } else {
            1.0
        }
    }

    fn same(&self, other: &Grid) -> bool {
        self.n == other.n && self.dx == other.dx
    }
}

/// A pair field `(u, u̇)` on a grid, stamped with a time. Also used for
/// time-independent pair fields such as eigenmodes and perturbations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: Grid,
    pub u: Vec<f64>,
    pub udot: Vec<f64>,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Functionals {
    pub energy: f64,
    pub nehari: f64,
    pub p_func: f64,
    pub h_norm_sq: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dichotomy {
    DecayCertified,
    BlowupSide,
    Inconclusive,
}

/// Default margin below `E(Q)` for the sub-ground-state certificate.
pub const DELTA_CERT: f64 = 1e-3;

impl FieldState {
    pub fn zeros(grid: Grid) -> Self {
        Self { grid, u: vec![0.0; grid.n], udot: vec![0.0; grid.n], time: 0.0 }
    }

    pub fn from_fn(grid: Grid, u: impl Fn(f64) -> f64, udot: impl Fn(f64) -> f64) -> Self {
        let xs = grid.coords();
        Self {
            grid,
            u: xs.iter().map(|&x| u(x)).collect(),
            udot: xs.iter().map(|&x| udot(x)).collect(),
            time: 0.0,
        }
    }

    pub fn check_grid(&self, other: &FieldState) -> Result<()> {
        if self.grid.same(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{} nodes (dx {}) vs {} nodes (dx {})", self.grid.n, self.grid.dx, other.grid.n, other.grid.dx)))
        }
    }

    /// `self + c·other`.
    pub fn axpy(&mut self, c: f64, other: &FieldState) {
        for (a, b) in self.u.iter_mut().zip(&other.u) {
            *a += c * b;
        }
        for (a, b) in self.udot.iter_mut().zip(&other.udot) {
            *a += c * b;
        }
    }

    pub fn scaled(&self, c: f64) -> FieldState {
        let mut out = self.clone();
        out.u.iter_mut().for_each(|v| *v *= c);
        out.udot.iter_mut().for_each(|v| *v *= c);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.udot).all(|v| v.is_finite())
    }

    /// `‖(u, u̇)‖²_𝓗` with forward differences for the gradient.
    pub fn h_norm_sq(&self) -> f64 {
        let dx = self.grid.dx;
        let mut grad = 0.0;
        for w in self.u.windows(2) {
            let d = w[1] - w[0];
            grad += d * d;
        }
        let mut mass = 0.0;
        for i in 0..self.grid.n {
            mass += self.grid.weight(i) * (self.u[i] * self.u[i] + self.udot[i] * self.udot[i]);
        }
        grad / dx + mass * dx
    }

    pub fn h_norm(&self) -> f64 {
        self.h_norm_sq().sqrt()
    }

    /// `L²` inner product of the first components.
    pub fn dot_u(&self, g: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grid.n {
            acc += self.grid.weight(i) * self.u[i] * g[i];
        }
        acc * self.grid.dx
    }

    /// Flat little-endian layout: L, dx, node count, time, then `u` and `u̇`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 16 * self.grid.n);
        out.extend_from_slice(&self.grid.half_len.to_le_bytes());
        out.extend_from_slice(&self.grid.dx.to_le_bytes());
        out.extend_from_slice(&(self.grid.n as u64).to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        for v in self.u.iter().chain(&self.udot) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let word = |k: usize| -> Result<[u8; 8]> {
            bytes
                .get(8 * k..8 * k + 8)
                .map(|s| s.try_into().expect("8-byte slice"))
                .ok_or_else(|| Error::InvalidInput("truncated state".into()))
        };
        let half_len = f64::from_le_bytes(word(0)?);
        let dx = f64::from_le_bytes(word(1)?);
        let n = u64::from_le_bytes(word(2)?) as usize;
        let time = f64::from_le_bytes(word(3)?);
        if bytes.len() != 32 + 16 * n {
            return Err(Error::InvalidInput(format!("state payload has {} bytes, expected {}", bytes.len(), 32 + 16 * n)));
        }
        let grid = Grid::new(half_len, dx)?;
        if grid.n != n {
            return Err(Error::GridMismatch(format!("header says {n} nodes, grid has {}", grid.n)));
        }
        let read = |k: usize| f64::from_le_bytes(word(k).expect("length checked"));
        Ok(Self {
            grid,
            u: (0..n).map(|i| read(4 + i)).collect(),
            udot: (0..n).map(|i| read(4 + n + i)).collect(),
            time,
        })
    }

    /// Two-column text dump `x u`.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(48 * self.grid.n);
        for i in 0..self.grid.n {
            s.push_str(&format!("{:.12e} {:.17e}\n", self.grid.x(i), self.u[i]));
        }
        s
    }
}

pub fn functionals(state: &FieldState, p: f64, alpha: f64) -> Functionals {
    let nl = Power::new(p);
    let g = &state.grid;
    let dx = g.dx;
    let mut grad = 0.0;
    for w in state.u.windows(2) {
        let d = w[1] - w[0];
        grad += d * d;
    }
    grad /= dx;
    let (mut m2, mut k2, mut pot, mut lp1, mut cross) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..g.n {
        let w = g.weight(i);
        let (u, v) = (state.u[i], state.udot[i]);
        m2 += w * u * u;
        k2 += w * v * v;
        let prim = nl.primitive(u);
        pot += w * prim;
        lp1 += w * prim * (p + 1.0);
        cross += w * u * v;
    }
    let (m2, k2, pot, lp1, cross) = (m2 * dx, k2 * dx, pot * dx, lp1 * dx, cross * dx);
    Functionals {
        energy: 0.5 * (grad + m2 + k2) - pot,
        nehari: grad + m2 - lp1,
        p_func: cross + alpha * m2,
        h_norm_sq: grad + m2 + k2,
    }
}

/// The blow-up certificate `𝒫 > (p+1)/(p-1)·(1+2α)·E`.
pub fn blowup_criterion(f: &Functionals, p: f64, alpha: f64) -> bool {
    f.p_func > (p + 1.0) / (p - 1.0) * (1.0 + 2.0 * alpha) * f.energy
}

pub fn subcritical_dichotomy(f: &Functionals, e_ground: f64, delta_cert: f64) -> Dichotomy {
    if f.energy < e_ground - delta_cert {
        if f.nehari >= 0.0 {
            Dichotomy::DecayCertified
        } else {
            Dichotomy::BlowupSide
        }
    } else {
        Dichotomy::Inconclusive
    }
}

/// `Σ_k σ_k [Q + h_k Y⁺](x - z_k) + extra` on `grid`, using the grid-exact
/// discrete profiles in `modes`.
pub fn superpose(
    modes: &GridModes,
    grid: Grid,
    signs: &[f64],
    centers: &[f64],
    h: &[f64],
    extra: Option<&FieldState>,
) -> Result<FieldState> {
    assert_eq!(signs.len(), centers.len());
    assert_eq!(signs.len(), h.len());
    for &z in centers {
        if z.abs() > grid.half_len - 10.0 {
            return Err(Error::CenterOutOfDomain(z));
        }
    }
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            let d = (centers[i] - centers[j]).abs();
            if d < 5.0 {
                return Err(Error::CentersTooClose(d));
            }
        }
    }
    let mut state = FieldState::zeros(grid);
    for k in 0..signs.len() {
        modes.add_soliton(&mut state, signs[k], centers[k], h[k]);
    }
    if let Some(e) = extra {
        state.check_grid(e)?;
        state.axpy(1.0, e);
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sech_state(lambda: f64) -> FieldState {
        let grid = Grid::new(40.0, 0.02).unwrap();
        FieldState::from_fn(grid, |x| lambda * 2f64.sqrt() / x.cosh(), |_| 0.0)
    }

    #[test]
    fn grid_is_symmetric() {
        let g = Grid::new(3.0, 0.1).unwrap();
        assert_eq!(g.n, 61);
        for i in 0..g.n {
            assert_eq!(g.x(i), -g.x(g.n - 1 - i));
        }
        assert_eq!(g.x(30), 0.0);
        assert!(Grid::new(3.0, 0.07).is_err());
    }

    #[test]
    fn zero_state_functionals() {
        let f = functionals(&FieldState::zeros(Grid::new(5.0, 0.1).unwrap()), 3.0, 0.5);
        assert_eq!((f.energy, f.nehari, f.p_func, f.h_norm_sq), (0.0, 0.0, 0.0, 0.0));
        assert!(!blowup_criterion(&f, 3.0, 0.5));
    }

    #[test]
    fn scaled_ground_state_values() {
        for (lambda, e, k) in [(1.0, 4.0 / 3.0, 0.0), (2.0, -32.0 / 3.0, -64.0), (0.5, 0.583_333_333_333, 1.0)] {
            let f = functionals(&sech_state(lambda), 3.0, 0.5);
            assert!((f.energy - e).abs() < 1e-3, "λ={lambda}: E={}", f.energy);
            assert!((f.nehari - k).abs() < 1e-3, "λ={lambda}: K0={}", f.nehari);
            assert!((f.p_func - 0.5 * 4.0 * lambda * lambda).abs() < 1e-6);
            assert!(f.energy <= 0.5 * f.h_norm_sq);
        }
        let one = functionals(&sech_state(1.0), 3.0, 0.5);
        assert!(!blowup_criterion(&one, 3.0, 0.5));
        assert!(blowup_criterion(&functionals(&sech_state(2.0), 3.0, 0.5), 3.0, 0.5));
        let eg = 4.0 / 3.0;
        assert_eq!(subcritical_dichotomy(&functionals(&sech_state(0.5), 3.0, 0.5), eg, DELTA_CERT), Dichotomy::DecayCertified);
        assert_eq!(subcritical_dichotomy(&functionals(&sech_state(2.0), 3.0, 0.5), eg, DELTA_CERT), Dichotomy::BlowupSide);
        assert_eq!(subcritical_dichotomy(&one, one.energy, DELTA_CERT), Dichotomy::Inconclusive);
    }

    #[test]
    fn binary_roundtrip() {
        let mut s = sech_state(0.7);
        s.time = 3.25;
        s.udot[17] = -0.125;
        let back = FieldState::from_bytes(&s.to_bytes()).unwrap();
        assert_eq!(back, s);
        assert!(FieldState::from_bytes(&s.to_bytes()[..100]).is_err());
        assert_eq!(s.to_text().lines().count(), s.grid.n);
    }
}
