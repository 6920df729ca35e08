//! Soliton coordinates: grid-exact eigenmodes, symplectic projections,
//! center fitting, the soliton potential, the energy-distance `𝔑` and the
//! reduced collective-coordinate models.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{functionals, FieldState, Grid};
use crate::groundstate::{discrete_ground_state, GroundState};
use crate::numerics::RadialProfile;
use crate::spectrum::{discrete_internal_mode, SpectralData};

/// Half-width of the support used for the discrete profiles.
const PROFILE_HALF_LEN: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// `Y⁺ = (1, ν⁺)φ`
    Plus,
    /// `Y⁻ = (1, ν⁻)φ`
    Minus,
    /// `Y¹ = (1, 0)∂Q`
    Trans,
    /// `Y⁻¹ = (1, −2α)∂Q`
    AntiTrans,
}

/// Ground state, internal mode and pairings for one grid spacing. The
/// profiles solve the 3-point discrete equations, so `Q` is an exact
/// stationary point of the semi-discrete flow and `Y⁺` an exact eigenmode of
/// its linearization.
#[derive(Debug, Clone)]
pub struct GridModes {
    pub gs: Arc<GroundState>,
    pub dx: f64,
    pub p: f64,
    pub alpha: f64,
    pub q: RadialProfile,
    pub phi: RadialProfile,
    pub nu0_sq: f64,
    pub nu_plus: f64,
    pub nu_minus: f64,
    pub c_plus: f64,
    pub c_one: f64,
    /// Discrete energy of the discrete ground state.
    pub e_ground: f64,
    pub q_h_norm: f64,
    pub m_const: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolitonFrame {
    pub signs: Vec<f64>,
    pub centers: Vec<f64>,
    /// `a⁺_k = p⁺(z_k) v`
    pub a_plus: Vec<f64>,
    /// `p¹(z_k) v`
    pub a_center: Vec<f64>,
    /// Coefficients of `Y⁺_k` and `Y¹_k` in the mode splitting.
    pub split_plus: Vec<f64>,
    pub split_center: Vec<f64>,
    #[serde(skip)]
    pub gamma: Option<FieldState>,
    pub gamma_h: f64,
    pub v_norm: f64,
    pub dz: f64,
    pub v_pot: f64,
    pub n_energy: f64,
    pub residual: f64,
}

/// Compact frame record streamed with trajectory samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSummary {
    #[serde(rename = "z")]
    pub centers: Vec<f64>,
    #[serde(rename = "aplus")]
    pub a_plus: Vec<f64>,
    #[serde(rename = "gammaH")]
    pub gamma_h: f64,
    #[serde(rename = "V")]
    pub v_pot: f64,
    #[serde(rename = "Nenergy")]
    pub n_energy: f64,
    #[serde(rename = "Dz")]
    pub dz: f64,
    #[serde(rename = "vNorm")]
    pub v_norm: f64,
    #[serde(rename = "evenNorm", skip_serializing_if = "Option::is_none", default)]
    pub even_norm: Option<f64>,
    /// Signs of the solitons still tracked.
    #[serde(rename = "sigma")]
    pub signs: Vec<f64>,
}

impl SolitonFrame {
    pub fn summary(&self, even_norm: Option<f64>) -> FrameSummary {
        FrameSummary {
            centers: self.centers.clone(),
            a_plus: self.a_plus.clone(),
            gamma_h: self.gamma_h,
            v_pot: self.v_pot,
            n_energy: self.n_energy,
            dz: self.dz,
            v_norm: self.v_norm,
            even_norm,
            signs: self.signs.clone(),
        }
    }

    pub fn a_plus_sq(&self) -> f64 {
        self.a_plus.iter().map(|a| a * a).sum()
    }
}

/// Node index range within `radius` of `c`.
fn window(grid: &Grid, c: f64, radius: f64) -> std::ops::Range<usize> {
    let mid = ((grid.n - 1) / 2) as f64;
    let lo = ((c - radius) / grid.dx + mid).floor().max(0.0) as usize;
    let hi = (((c + radius) / grid.dx + mid).ceil() as usize + 1).min(grid.n);
    lo.min(grid.n)..hi
}

/// Smallest `m` (doubling then bisection) with the `(a⁺, a⁻)` block
/// `[[m/2 − αν⁺, −ν₀²], [−ν₀², −αν⁻]]` having minimum eigenvalue at least
/// `0.1`, doubled for safety.
pub fn calibrate_m_raw(alpha: f64, nu_plus: f64, nu_minus: f64, nu0_sq: f64) -> f64 {
    let ok = |m: f64| min_block_eigenvalue(m, alpha, nu_plus, nu_minus, nu0_sq) >= 0.1 && m / 2.0 >= 0.1;
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
    }
    let mut lo = if hi > 1.0 { hi / 2.0 } else { 0.0 };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    2.0 * hi
}

pub fn calibrate_m(spec: &SpectralData) -> f64 {
    calibrate_m_raw(spec.alpha, spec.nu_plus, spec.nu_minus, spec.nu0_sq)
}

/// Minimum eigenvalue of the `(a⁺, a⁻)` block of the single-soliton form.
pub fn min_block_eigenvalue(m: f64, alpha: f64, nu_plus: f64, nu_minus: f64, nu0_sq: f64) -> f64 {
    let a = m / 2.0 - alpha * nu_plus;
    let c = -alpha * nu_minus;
    let b = -nu0_sq;
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

impl GridModes {
    pub fn new(gs: Arc<GroundState>, alpha: f64, dx: f64) -> Result<Self> {
        if gs.dim != 1 {
            return Err(Error::InvalidInput("grid modes exist only in one dimension".into()));
        }
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput(format!("damping {alpha} must be positive")));
        }
        let p = gs.power;
        let q = discrete_ground_state(&gs, dx, PROFILE_HALF_LEN)?;
        let (nu0_sq, phi) = discrete_internal_mode(&q, p)?;
        let root = (alpha * alpha + nu0_sq).sqrt();
        let nu_plus = nu0_sq / (alpha + root);
        let nu_minus = -alpha - root;
        let mut modes = Self {
            gs,
            dx,
            p,
            alpha,
            q,
            phi,
            nu0_sq,
            nu_plus,
            nu_minus,
            c_plus: 0.0,
            c_one: 0.0,
            e_ground: 0.0,
            q_h_norm: 0.0,
            m_const: calibrate_m_raw(alpha, nu_plus, nu_minus, nu0_sq),
        };
        let grid = Grid::new(PROFILE_HALF_LEN, dx)?;
        let yp = modes.mode(grid, Mode::Plus, 0.0);
        let yb = modes.dual(grid, Mode::Plus, 0.0);
        modes.c_plus = crate::spectrum::omega_unchecked(&yp, &yb);
        let y1 = modes.mode(grid, Mode::Trans, 0.0);
        let y1b = modes.dual(grid, Mode::Trans, 0.0);
        modes.c_one = crate::spectrum::omega_unchecked(&y1, &y1b);
        let mut qs = FieldState::zeros(grid);
        modes.add_soliton(&mut qs, 1.0, 0.0, 0.0);
        let f = functionals(&qs, p, alpha);
        modes.e_ground = f.energy;
        modes.q_h_norm = f.h_norm_sq.sqrt();
        Ok(modes)
    }

    pub fn support(&self) -> f64 {
        self.q.r_end()
    }

    /// Pairing constant `C^ξ = ω(Y^ξ, Ȳ^ξ)`.
    pub fn pairing(&self, xi: Mode) -> f64 {
        match xi {
            Mode::Plus => self.c_plus,
            Mode::Minus => -self.c_plus,
            Mode::Trans => self.c_one,
            Mode::AntiTrans => -self.c_one,
        }
    }

    fn components(&self, xi: Mode) -> (bool, f64) {
        // (uses φ rather than ∂Q, velocity factor)
        match xi {
            Mode::Plus => (true, self.nu_plus),
            Mode::Minus => (true, self.nu_minus),
            Mode::Trans => (false, 0.0),
            Mode::AntiTrans => (false, -2.0 * self.alpha),
        }
    }

    fn dual_mode(xi: Mode) -> Mode {
        match xi {
            Mode::Plus => Mode::Minus,
            Mode::Minus => Mode::Plus,
            Mode::Trans => Mode::AntiTrans,
            Mode::AntiTrans => Mode::Trans,
        }
    }

    /// `Y^ξ(x − c)` on `grid`.
    pub fn mode(&self, grid: Grid, xi: Mode, c: f64) -> FieldState {
        let mut s = FieldState::zeros(grid);
        self.add_mode(&mut s, 1.0, xi, c);
        s
    }

    /// `Ȳ^ξ(x − c)` on `grid` (`Ȳ^± = Y^∓`, `Ȳ^{±1} = Y^{∓1}`).
    pub fn dual(&self, grid: Grid, xi: Mode, c: f64) -> FieldState {
        self.mode(grid, Self::dual_mode(xi), c)
    }

    /// `state += coeff · Y^ξ(x − c)`.
    pub fn add_mode(&self, state: &mut FieldState, coeff: f64, xi: Mode, c: f64) {
        let (is_phi, vel) = self.components(xi);
        let grid = state.grid;
        for i in window(&grid, c, self.support()) {
            let y = grid.x(i) - c;
            let g = if is_phi { self.phi.value(y) } else { self.q.deriv(y) };
            state.u[i] += coeff * g;
            state.udot[i] += coeff * vel * g;
        }
    }

    /// `state += σ [Q + h Y⁺](x − c)`.
    pub fn add_soliton(&self, state: &mut FieldState, sign: f64, c: f64, h: f64) {
        let grid = state.grid;
        for i in window(&grid, c, self.support()) {
            let y = grid.x(i) - c;
            let ph = self.phi.value(y);
            state.u[i] += sign * (self.q.value(y) + h * ph);
            state.udot[i] += sign * h * self.nu_plus * ph;
        }
    }

    /// `Q_Σ[z] = Σ σ_k Q(x − z_k)`.
    pub fn sum_state(&self, grid: Grid, signs: &[f64], z: &[f64]) -> FieldState {
        let mut s = FieldState::zeros(grid);
        for (sg, c) in signs.iter().zip(z) {
            self.add_soliton(&mut s, *sg, *c, 0.0);
        }
        s
    }

    /// `ω(v, Ȳ^ξ(x − c))` without materializing the mode.
    pub fn omega_dual(&self, v: &FieldState, xi: Mode, c: f64) -> f64 {
        let (is_phi, vel) = self.components(Self::dual_mode(xi));
        let grid = v.grid;
        let mut acc = 0.0;
        for i in window(&grid, c, self.support()) {
            let y = grid.x(i) - c;
            let g = if is_phi { self.phi.value(y) } else { self.q.deriv(y) };
            // ω(v, g) = ∫ v₂ g₁ − v₁ g₂
            acc += grid.weight(i) * (v.udot[i] * g - v.u[i] * vel * g);
        }
        acc * grid.dx
    }

    /// `p^ξ(c) v = ω(v, Ȳ^ξ(x − c)) / C^ξ`.
    pub fn project(&self, v: &FieldState, xi: Mode, c: f64) -> f64 {
        self.omega_dual(v, xi, c) / self.pairing(xi)
    }

    /// `Φ_k(z) = ω(u − Q_Σ[z], Ȳ¹(x − z_k))`.
    fn center_residuals(&self, state: &FieldState, signs: &[f64], z: &[f64]) -> (Vec<f64>, FieldState) {
        let mut v = state.clone();
        for (sg, c) in signs.iter().zip(z) {
            self.add_soliton(&mut v, -sg, *c, 0.0);
        }
        let phi = z.iter().map(|&c| self.omega_dual(&v, Mode::Trans, c)).collect();
        (phi, v)
    }

    /// Symplectically orthogonal center fit (Newton; full Jacobian on the
    /// first two iterations, then its leading diagonal `σ_k C¹`).
    pub fn fit_centers(&self, state: &FieldState, signs: &[f64], z_guess: &[f64]) -> Result<SolitonFrame> {
        let k = signs.len();
        let mut z = z_guess.to_vec();
        let tol = 1e-10;
        let mut converged = false;
        let (mut res, mut v) = self.center_residuals(state, signs, &z);
        for iter in 0..80 {
            let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
            if worst <= tol {
                converged = true;
                break;
            }
            let step: Vec<f64> = if iter < 2 {
                let eps = 1e-6;
                let mut jac = vec![vec![0.0; k]; k];
                for l in 0..k {
                    let mut zp = z.clone();
                    zp[l] += eps;
                    let (rp, _) = self.center_residuals(state, signs, &zp);
                    for r in 0..k {
                        jac[r][l] = (rp[r] - res[r]) / eps;
                    }
                }
                solve_dense(jac, res.clone()).ok_or_else(|| Error::NewtonDiverged("singular Jacobian".into()))?
            } else {
                (0..k).map(|i| res[i] / (signs[i] * self.c_one)).collect()
            };
            for i in 0..k {
                z[i] -= step[i];
            }
            if z.iter().zip(z_guess).any(|(a, b)| !a.is_finite() || (a - b).abs() > 3.0) {
                return Err(Error::NewtonDiverged(format!("centers moved to {z:?} from {z_guess:?}")));
            }
            let next = self.center_residuals(state, signs, &z);
            res = next.0;
            v = next.1;
        }
        if !converged {
            return Err(Error::NewtonDiverged("no convergence in 80 iterations".into()));
        }
        let residual = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        Ok(self.frame_from(state, signs, z, v, residual))
    }

    fn frame_from(&self, state: &FieldState, signs: &[f64], z: Vec<f64>, v: FieldState, residual: f64) -> SolitonFrame {
        let k = signs.len();
        let a_plus: Vec<f64> = z.iter().map(|&c| self.project(&v, Mode::Plus, c)).collect();
        let a_center: Vec<f64> = z.iter().map(|&c| self.project(&v, Mode::Trans, c)).collect();
        let (split_plus, split_center, gamma) = self.split(&v, &z);
        let dz = min_distance(&z);
        let v_pot = if k > 1 { soliton_potential(signs, &z, &self.gs).0 } else { 0.0 };
        let f = functionals(state, self.p, self.alpha);
        let a2: f64 = a_plus.iter().map(|a| a * a).sum();
        SolitonFrame {
            signs: signs.to_vec(),
            centers: z,
            a_plus,
            a_center,
            split_plus,
            split_center,
            gamma_h: gamma.h_norm(),
            gamma: Some(gamma),
            v_norm: v.h_norm(),
            dz,
            v_pot,
            n_energy: f.energy - k as f64 * self.e_ground + self.m_const * a2,
            residual,
        }
    }

    /// Matrix `A_{(l,η),(k,ξ)} = ω(Y^ξ_k, Ȳ^η_l)/C^η` over `◇ = {+, 1}`,
    /// ordered `(k, +), (k, 1)` per soliton.
    pub fn a_matrix(&self, grid: Grid, z: &[f64]) -> Vec<Vec<f64>> {
        let modes = [Mode::Plus, Mode::Trans];
        let cols: Vec<FieldState> = z
            .iter()
            .flat_map(|&c| modes.iter().map(move |&xi| (xi, c)))
            .map(|(xi, c)| self.mode(grid, xi, c))
            .collect();
        let rows: Vec<(Mode, f64)> = z.iter().flat_map(|&c| modes.iter().map(move |&xi| (xi, c))).collect();
        rows.iter()
            .map(|&(eta, c)| cols.iter().map(|y| self.project(y, eta, c)).collect())
            .collect()
    }

    /// Mode splitting `v = Σ_k (b⁺_k Y⁺_k + b¹_k Y¹_k) + γ` with `γ`
    /// annihilated by every `p^ξ(z_k)`, `ξ ∈ {+, 1}`.
    pub fn split(&self, v: &FieldState, z: &[f64]) -> (Vec<f64>, Vec<f64>, FieldState) {
        let k = z.len();
        let a = self.a_matrix(v.grid, z);
        let rhs: Vec<f64> = z
            .iter()
            .flat_map(|&c| [self.project(v, Mode::Plus, c), self.project(v, Mode::Trans, c)])
            .collect();
        let b = solve_dense(a, rhs).expect("A(z) is a small perturbation of the identity");
        let mut gamma = v.clone();
        let (mut bp, mut bc) = (Vec::with_capacity(k), Vec::with_capacity(k));
        for (j, &c) in z.iter().enumerate() {
            self.add_mode(&mut gamma, -b[2 * j], Mode::Plus, c);
            self.add_mode(&mut gamma, -b[2 * j + 1], Mode::Trans, c);
            bp.push(b[2 * j]);
            bc.push(b[2 * j + 1]);
        }
        (bp, bc, gamma)
    }

    /// `‖v + 𝓘v‖_𝓗` with `𝓘φ(x) = φ(−x + z₁ + z₂)` about the current midpoint.
    pub fn even_part_norm(&self, state: &FieldState, frame: &SolitonFrame) -> f64 {
        assert_eq!(frame.centers.len(), 2, "even part needs two solitons");
        let mut v = state.clone();
        for (sg, c) in frame.signs.iter().zip(&frame.centers) {
            self.add_soliton(&mut v, -sg, *c, 0.0);
        }
        even_part(&v, frame.centers[0] + frame.centers[1])
    }

    /// `η₊(a) = <f'(Q)φ | Q(x − a)>` (diagnostic quadrature).
    pub fn eta_plus(&self, a: f64) -> f64 {
        let grid = Grid::new(PROFILE_HALF_LEN, self.dx).expect("reference grid");
        let mut acc = 0.0;
        for i in 0..grid.n {
            let x = grid.x(i);
            let q = self.q.value(x);
            acc += grid.weight(i) * self.p * q.abs().powf(self.p - 1.0) * self.phi.value(x) * self.q.value(x - a);
        }
        acc * grid.dx
    }
}

/// `‖v + v(s − ·)‖_𝓗` with the reflected field read by 6-point Lagrange
/// interpolation on the grid (exact at nodes when `s` is node-aligned).
pub fn even_part(v: &FieldState, s: f64) -> f64 {
    let g = v.grid;
    let mut w = v.clone();
    for i in 0..g.n {
        let xr = s - g.x(i);
        w.u[i] += grid_interp(&v.u, &g, xr);
        w.udot[i] += grid_interp(&v.udot, &g, xr);
    }
    w.h_norm()
}

/// Value of grid data at `x` (zero outside the grid).
pub fn grid_interp(data: &[f64], grid: &Grid, x: f64) -> f64 {
    let mid = ((grid.n - 1) / 2) as f64;
    let t = x / grid.dx + mid;
    let r = t.round();
    if (t - r).abs() < 1e-9 {
        let i = r as i64;
        return if i >= 0 && (i as usize) < grid.n { data[i as usize] } else { 0.0 };
    }
    let base = t.floor() as i64 - 2;
    let s = t - base as f64;
    let mut acc = 0.0;
    for j in 0..6i64 {
        let idx = base + j;
        if idx < 0 || idx as usize >= grid.n {
            continue;
        }
        let mut wgt = 1.0;
        for m in 0..6i64 {
            if m != j {
                wgt *= (s - m as f64) / (j - m) as f64;
            }
        }
        acc += wgt * data[idx as usize];
    }
    acc
}

pub fn min_distance(z: &[f64]) -> f64 {
    let mut d = f64::INFINITY;
    for i in 0..z.len() {
        for j in i + 1..z.len() {
            d = d.min((z[i] - z[j]).abs());
        }
    }
    d
}

/// Gaussian elimination with partial pivoting for the small systems here.
pub(crate) fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut s = b[row];
        for c in row + 1..n {
            s -= a[row][c] * x[c];
        }
        x[row] = s / a[row][row];
    }
    Some(x)
}

fn kernel(gs: &GroundState, a: f64) -> (f64, f64) {
    if gs.dim == 1 {
        gs.eta0_fast(a)
    } else {
        (gs.eta0(a), gs.eta0_prime(a))
    }
}

/// `V_σ(z) = −Σ_{k<l} σ_k σ_l η₀(|z_k − z_l|)` and its gradient.
pub fn soliton_potential(signs: &[f64], z: &[f64], gs: &GroundState) -> (f64, Vec<f64>) {
    let k = z.len();
    let mut v = 0.0;
    let mut grad = vec![0.0; k];
    for i in 0..k {
        for j in i + 1..k {
            let d = z[i] - z[j];
            let (e, de) = kernel(gs, d.abs());
            let s = signs[i] * signs[j];
            v -= s * e;
            let g = -s * de * d.signum();
            grad[i] += g;
            grad[j] -= g;
        }
    }
    (v, grad)
}

/// Leading-order modulation law `ż = −∇V_σ(z)/C¹`.
pub fn modulation_rhs(signs: &[f64], z: &[f64], gs: &GroundState, c_one: f64) -> Vec<f64> {
    soliton_potential(signs, z, gs).1.iter().map(|g| -g / c_one).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReducedFlow {
    pub t: Vec<f64>,
    pub z: Vec<Vec<f64>>,
    /// `η₀(D_z(t))`
    pub eta: Vec<f64>,
}

/// RK4 integration of the reduced gradient flow.
pub fn reduced_gradient_flow(signs: &[f64], z0: &[f64], t_end: f64, dt: f64, gs: &GroundState, c_one: f64) -> Result<ReducedFlow> {
    let steps = (t_end / dt).round() as usize;
    let mut z = z0.to_vec();
    let mut out = ReducedFlow { t: vec![0.0], z: vec![z.clone()], eta: vec![kernel(gs, min_distance(&z)).0] };
    let rhs = |z: &[f64]| modulation_rhs(signs, z, gs, c_one);
    let add = |z: &[f64], k: &[f64], c: f64| -> Vec<f64> { z.iter().zip(k).map(|(a, b)| a + c * b).collect() };
    for n in 1..=steps {
        let k1 = rhs(&z);
        let k2 = rhs(&add(&z, &k1, 0.5 * dt));
        let k3 = rhs(&add(&z, &k2, 0.5 * dt));
        let k4 = rhs(&add(&z, &k3, dt));
        for i in 0..z.len() {
            z[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let d = min_distance(&z);
        let t = n as f64 * dt;
        if d < 3.0 || !d.is_finite() {
            return Err(Error::CollisionDetected { t, distance: d });
        }
        out.t.push(t);
        out.z.push(z.clone());
        out.eta.push(kernel(gs, d).0);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyPoint {
    pub t: f64,
    /// `e^{−ν⁺t} h(t)`: the common growth is factored out so long horizons
    /// stay finite. Ratios and the angle are those of `h`.
    pub h: [f64; 2],
    /// Direction angle of `h` in radians.
    pub angle: f64,
}

/// RK4 for `ḣ = [[ν⁺, ε²e^{−t}], [ε²e^{−t}, ν⁺ + ε/(1+t)]] h`, integrated in
/// the co-moving variable `e^{−ν⁺t}h`. The ratio drifts like `(1+t)^ε`, so
/// past `t = 50` the step grows with `1+t` (the coupling is below e^{−50}
/// there); `dt` is the step at the start.
pub fn toy_unstable_ode(eps: f64, h0: [f64; 2], t_end: f64, dt: f64) -> Vec<ToyPoint> {
    let rhs = |t: f64, g: [f64; 2]| -> [f64; 2] {
        let c = eps * eps * (-t).exp();
        [c * g[1], c * g[0] + eps / (1.0 + t) * g[1]]
    };
    let point = |t: f64, g: [f64; 2]| ToyPoint { t, h: g, angle: g[1].atan2(g[0]) };
    let mut g = h0;
    let mut t = 0.0;
    let mut out = vec![point(0.0, g)];
    let mut n = 0usize;
    while t < t_end {
        let step = (dt * ((1.0 + t) / 50.0).max(1.0)).min(t_end - t);
        let k1 = rhs(t, g);
        let k2 = rhs(t + 0.5 * step, [g[0] + 0.5 * step * k1[0], g[1] + 0.5 * step * k1[1]]);
        let k3 = rhs(t + 0.5 * step, [g[0] + 0.5 * step * k2[0], g[1] + 0.5 * step * k2[1]]);
        let k4 = rhs(t + step, [g[0] + step * k3[0], g[1] + step * k3[1]]);
        for i in 0..2 {
            g[i] += step / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        t += step;
        n += 1;
        if t <= 50.0 || n.is_multiple_of(100) || t >= t_end {
            out.push(point(t, g));
        }
    }
    out
}

/// First recorded time at which `|h_j/h_i| ≥ ratio` (j the off-axis index).
pub fn toy_crossing(points: &[ToyPoint], axis: usize, ratio: f64) -> Option<f64> {
    let off = 1 - axis;
    points.iter().find(|p| p.h[off].abs() >= ratio * p.h[axis].abs()).map(|p| p.t)
}
