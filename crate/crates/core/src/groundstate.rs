//! Radial ground state `-ΔQ + Q = |Q|^{p-1}Q` by shooting, and the soliton
//! interaction kernel `η₀(a) = <Q^p, Q(· - a e₁)>`.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, simpson, solve_tridiagonal, sphere_area, ExpTail, Power, RadialProfile};

/// Number of radial steps per 30 units of radius.
pub const DEFAULT_STEPS: usize = 1 << 15;

/// Agreement between the two bracketing shots that still counts as converged.
const SHOT_AGREEMENT: f64 = 1e-9;

const SERIES_TERMS: usize = 16;
/// RK4 substeps per grid step on the outward shot.
const SUBSTEPS: usize = 4;
const SERIES_RADIUS: f64 = 0.05;

/// Largest `a` covered by the tabulated kernel (1D only).
const ETA_TABLE_END: f64 = 40.0;
const ETA_TABLE_STEP: f64 = 0.02;

/// Step of the centered difference used by [`GroundState::eta0_prime`].
pub const ETA_FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    pub dim: usize,
    pub power: f64,
    pub step: f64,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub lp1: f64,
    pub grad_sq: f64,
    pub energy: f64,
    pub tail_c0: f64,
    /// Shooting parameter `Q(0)`.
    pub q0: f64,
    /// Radius where outward shooting hands over to the inward tail solve.
    pub r_match: f64,
    #[serde(skip)]
    profile: RadialProfile,
    #[serde(skip)]
    eta_table: OnceLock<EtaTable>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shot {
    /// `Q` crossed zero: `Q(0)` too large.
    Over,
    /// `Q'` turned positive or `Q` never left the equilibrium: `Q(0)` too small.
    Under,
}

/// Critical power `p*(N)`; infinite for `N <= 2`.
pub fn critical_power(dim: usize) -> f64 {
    if dim <= 2 {
        f64::INFINITY
    } else {
        (dim as f64 + 2.0) / (dim as f64 - 2.0)
    }
}

struct Radial {
    dim: usize,
    nl: Power,
}

impl Radial {
    #[inline]
    fn rhs(&self, r: f64, q: f64, qr: f64) -> (f64, f64) {
        let src = q - self.nl.f(q);
        let drift = if r == 0.0 {
            (self.dim as f64 - 1.0) * src / self.dim as f64
        } else {
            (self.dim as f64 - 1.0) / r * qr
        };
        (qr, src - drift)
    }

    #[inline]
    fn rk4(&self, r: f64, h: f64, q: f64, qr: f64) -> (f64, f64) {
        let (k1q, k1p) = self.rhs(r, q, qr);
        let (k2q, k2p) = self.rhs(r + 0.5 * h, q + 0.5 * h * k1q, qr + 0.5 * h * k1p);
        let (k3q, k3p) = self.rhs(r + 0.5 * h, q + 0.5 * h * k2q, qr + 0.5 * h * k2p);
        let (k4q, k4p) = self.rhs(r + h, q + h * k3q, qr + h * k3p);
        (
            q + h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q),
            qr + h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p),
        )
    }

    /// Taylor coefficients of `Q` in powers of `r^2` (Miller recurrence for `Q^p`).
    fn series(&self, q0: f64) -> [f64; SERIES_TERMS] {
        let p = self.nl.exponent();
        let n = self.dim as f64;
        let mut q = [0.0; SERIES_TERMS];
        let mut g = [0.0; SERIES_TERMS];
        q[0] = q0;
        g[0] = self.nl.f(q0);
        for k in 0..SERIES_TERMS - 1 {
            if k > 0 {
                let mut acc = 0.0;
                for j in 1..=k {
                    acc += ((p + 1.0) * j as f64 - k as f64) * q[j] * g[k - j];
                }
                g[k] = acc / (k as f64 * q0);
            }
            q[k + 1] = (q[k] - g[k]) / ((2.0 * k as f64 + 2.0) * (2.0 * k as f64 + n));
        }
        q
    }

    /// Outward shot from `Q(0) = q0`; optionally records the trajectory.
    fn shoot(&self, q0: f64, h: f64, steps: usize, record: Option<&mut Vec<(f64, f64)>>) -> Shot {
        let mut rec = record;
        if let Some(v) = rec.as_deref_mut() {
            v.clear();
            v.push((q0, 0.0));
        }
        // Power series in r^2 off the regular singular point, then RK4 once
        // the (N-1)/r drift is mild compared with the step.
        let coef = self.series(q0);
        let start = ((SERIES_RADIUS / h).ceil() as usize).clamp(1, steps);
        let (mut q, mut qr) = (q0, 0.0);
        for i in 1..=start {
            let r = i as f64 * h;
            let s = r * r;
            let (mut v, mut d, mut pw) = (0.0, 0.0, 1.0);
            for (k, c) in coef.iter().enumerate() {
                v += c * pw;
                if k > 0 {
                    d += 2.0 * k as f64 * c * pw / r;
                }
                pw *= s;
            }
            q = v;
            qr = d;
            if let Some(rv) = rec.as_deref_mut() {
                rv.push((q, qr));
            }
            if qr > 0.0 {
                return Shot::Under;
            }
        }
        if q == q0 {
            return Shot::Under;
        }
        let hs = h / SUBSTEPS as f64;
        for i in start..steps {
            for k in 0..SUBSTEPS {
                let (nq, nqr) = self.rk4(i as f64 * h + k as f64 * hs, hs, q, qr);
                q = nq;
                qr = nqr;
            }
            if let Some(v) = rec.as_deref_mut() {
                v.push((q, qr));
            }
            if q < 0.0 || !q.is_finite() {
                return Shot::Over;
            }
            if qr > 0.0 {
                return Shot::Under;
            }
        }
        Shot::Under
    }
}

/// Solve for the positive radial ground state with `r_max >= 30` and
/// shooting tolerance `tol <= 1e-9`.
pub fn solve_ground_state(dim: usize, p: f64, r_max: f64, tol: f64) -> Result<GroundState> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidInput(format!("dimension {dim} not in 1..=3")));
    }
    if !(p > 2.0 && p < critical_power(dim)) {
        return Err(Error::InvalidInput(format!(
            "power {p} outside (2, {}) for N = {dim}",
            critical_power(dim)
        )));
    }
    if r_max < 30.0 || !(tol > 0.0 && tol <= 1e-9) {
        return Err(Error::InvalidInput(format!("need r_max >= 30 and 0 < tol <= 1e-9 (got {r_max}, {tol})")));
    }
    let mut steps = DEFAULT_STEPS * (r_max / 30.0).ceil() as usize;
    steps += steps % 2;
    let h = r_max / steps as f64;
    let sys = Radial { dim, nl: Power::new(p) };

    let (mut lo, mut hi) = (1.0, 5.0);
    if sys.shoot(lo, h, steps, None) != Shot::Under {
        return Err(Error::NoBracket { lo, hi });
    }
    let mut expansions = 0;
    while sys.shoot(hi, h, steps, None) != Shot::Over {
        expansions += 1;
        if expansions > 6 {
            return Err(Error::NoBracket { lo, hi });
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut converged = false;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            converged = true;
            break;
        }
        match sys.shoot(mid, h, steps, None) {
            Shot::Over => hi = mid,
            Shot::Under => lo = mid,
        }
    }
    if !converged || hi - lo > tol {
        return Err(Error::NotConverged { what: "ground-state bisection" });
    }

    // Outward shots from both bracket ends agree until the unstable growing
    // mode separates them; past that radius the tail is solved inward, where
    // the decaying branch is the stable direction.
    let mut shot_lo = Vec::with_capacity(steps + 1);
    let mut shot_hi = Vec::with_capacity(steps + 1);
    sys.shoot(lo, h, steps, Some(&mut shot_lo));
    sys.shoot(hi, h, steps, Some(&mut shot_hi));
    let usable = shot_lo.len().min(shot_hi.len());
    let mut i_match = 0;
    for i in 0..usable {
        let (a, b) = (shot_lo[i].0, shot_hi[i].0);
        if (a - b).abs() > SHOT_AGREEMENT * 0.5 * (a + b) {
            break;
        }
        i_match = i;
    }
    i_match = i_match.min(steps / 2);
    if i_match < (5.0 / h) as usize {
        return Err(Error::NotConverged { what: "ground-state shot agreement" });
    }

    let mut values = vec![0.0; steps + 1];
    let mut deriv = vec![0.0; steps + 1];
    for i in 0..=i_match {
        values[i] = 0.5 * (shot_lo[i].0 + shot_hi[i].0);
        deriv[i] = 0.5 * (shot_lo[i].1 + shot_hi[i].1);
    }
    let s = (dim as f64 - 1.0) / 2.0;
    let lead = ExpTail { coeff: 1.0, power: s, rate: 1.0 };
    let q_match = values[i_match];
    let mut scale = q_match / lead.value(i_match as f64 * h);
    for _ in 0..6 {
        let (mut q, mut qr) = (scale * lead.value(r_max), scale * lead.deriv(r_max));
        values[steps] = q;
        deriv[steps] = qr;
        for i in (i_match..steps).rev() {
            let (nq, nqr) = sys.rk4((i + 1) as f64 * h, -h, q, qr);
            q = nq;
            qr = nqr;
            if i > i_match {
                values[i] = q;
                deriv[i] = qr;
            }
        }
        let ratio = q_match / q;
        scale *= ratio;
        for i in i_match + 1..=steps {
            values[i] *= ratio;
            deriv[i] *= ratio;
        }
        if (ratio - 1.0).abs() < 1e-15 {
            break;
        }
    }

    // Leading-order tail prefactor balanced over the last quarter of the grid.
    let (mut cmin, mut cmax) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 3 * steps / 4..=steps {
        let r = i as f64 * h;
        let c = values[i] / lead.value(r);
        cmin = cmin.min(c);
        cmax = cmax.max(c);
    }
    let tail_c0 = 0.5 * (cmin + cmax);

    let omega = sphere_area(dim);
    let radial = |g: &dyn Fn(usize) -> f64| -> f64 {
        let vals: Vec<f64> = (0..=steps)
            .map(|i| g(i) * (i as f64 * h).powi(dim as i32 - 1))
            .collect();
        omega * simpson(&vals, h)
    };
    let nl = Power::new(p);
    let l2_sq = radial(&|i| values[i] * values[i]);
    let grad_sq = radial(&|i| deriv[i] * deriv[i]);
    let lp1 = radial(&|i| values[i].abs().powf(p + 1.0));
    let prim = radial(&|i| nl.primitive(values[i]));
    let h1_sq = l2_sq + grad_sq;
    let energy = 0.5 * h1_sq - prim;

    let profile = RadialProfile::new(h, values.clone(), ExpTail { coeff: tail_c0, power: s, rate: 1.0 });
    log::debug!("ground state N={dim} p={p}: Q(0)={lo:.15} r_match={:.3}", i_match as f64 * h);
    Ok(GroundState {
        dim,
        power: p,
        step: h,
        values,
        deriv,
        l2_sq,
        h1_sq,
        lp1,
        grad_sq,
        energy,
        tail_c0,
        q0: 0.5 * (lo + hi),
        r_match: i_match as f64 * h,
        profile,
        eta_table: OnceLock::new(),
    })
}

#[derive(Debug, Clone)]
struct EtaTable {
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl GroundState {
    pub fn r_max(&self) -> f64 {
        self.step * (self.values.len() - 1) as f64
    }

    pub fn nonlinearity(&self) -> Power {
        Power::new(self.power)
    }

    /// `Q` at radius `r` (even extension for negative arguments).
    pub fn q(&self, r: f64) -> f64 {
        self.profile.value(r)
    }

    /// Derivative of the even extension of `Q` at signed coordinate `x`.
    pub fn q_prime(&self, x: f64) -> f64 {
        self.profile.deriv(x)
    }

    /// Leading-order tail `c0 r^{-(N-1)/2} e^{-r}`.
    pub fn tail(&self, r: f64) -> f64 {
        self.tail_c0 * r.powf(-(self.dim as f64 - 1.0) / 2.0) * (-r).exp()
    }

    /// Largest residual of `-Q'' - (N-1)/r Q' + Q - Q^p` on the grid: sixth-order
    /// differences for `Q''` (even reflection at `r = 0`, where the drift
    /// term becomes `(N-1) Q''(0)`), integrated `Q'` elsewhere.
    pub fn shooting_residual(&self) -> f64 {
        let h = self.step;
        let n = self.values.len();
        let nl = self.nonlinearity();
        let at = |i: i64| self.values[i.unsigned_abs() as usize];
        const W: [f64; 4] = [-490.0, 270.0, -27.0, 2.0];
        let mut worst: f64 = 0.0;
        for i in 0..(n as i64 - 3) {
            let mut q2 = W[0] * at(i);
            for (k, w) in W.iter().enumerate().skip(1) {
                q2 += w * (at(i - k as i64) + at(i + k as i64));
            }
            q2 /= 180.0 * h * h;
            let drift = if i == 0 {
                (self.dim as f64 - 1.0) * q2
            } else {
                (self.dim as f64 - 1.0) / (i as f64 * h) * self.deriv[i as usize]
            };
            let q = at(i);
            worst = worst.max((-q2 - drift + q - nl.f(q)).abs());
        }
        worst
    }

    /// `η₀(a)` by direct quadrature.
    pub fn eta0(&self, a: f64) -> f64 {
        let a = a.abs();
        let nl = self.nonlinearity();
        match self.dim {
            1 => {
                let hq = 0.05;
                let n = (self.r_max() / hq).round() as i64;
                let mut acc = 0.0;
                for i in -n..=n {
                    let x = i as f64 * hq;
                    acc += nl.f(self.q(x)) * self.q(x - a);
                }
                acc * hq
            }
            2 => self.radial_angular(a, |r, a| {
                let m = 512;
                let mut acc = 0.0;
                for j in 0..m {
                    let th = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
                    let rho = (r * r + a * a - 2.0 * a * r * th.cos()).max(0.0).sqrt();
                    acc += self.q(rho);
                }
                acc * 2.0 * std::f64::consts::PI / m as f64
            }),
            _ => {
                let (nodes, weights) = gauss_legendre(64);
                self.radial_angular(a, |r, a| {
                    if a == 0.0 || r == 0.0 {
                        return 4.0 * std::f64::consts::PI * self.q(a.max(r));
                    }
                    // substitute rho = |x - a e1|: dmu = rho drho / (a r)
                    let (lo, hi) = ((r - a).abs(), r + a);
                    let mut acc = 0.0;
                    for (t, w) in nodes.iter().zip(&weights) {
                        let rho = 0.5 * (hi + lo) + 0.5 * (hi - lo) * t;
                        acc += w * self.q(rho) * rho;
                    }
                    2.0 * std::f64::consts::PI * acc * 0.5 * (hi - lo) / (a * r)
                })
            }
        }
    }

    /// `∫_0^R r^{N-1} Q^p(r) S(r, a) dr` where `S` is the angular integral of
    /// the translate; the radius is cut where `Q^p` is negligible.
    fn radial_angular(&self, a: f64, angular: impl Fn(f64, f64) -> f64) -> f64 {
        let nl = self.nonlinearity();
        let hr = 0.02;
        let mut n = (self.r_max().min(16.0) / hr).round() as usize;
        n += n % 2;
        let vals: Vec<f64> = (0..=n)
            .map(|i| {
                let r = i as f64 * hr;
                if r == 0.0 && self.dim > 1 {
                    return 0.0;
                }
                r.powi(self.dim as i32 - 1) * nl.f(self.q(r)) * angular(r, a)
            })
            .collect();
        simpson(&vals, hr)
    }

    /// `η₀'(a)` by centered difference with step [`ETA_FD_STEP`].
    pub fn eta0_prime(&self, a: f64) -> f64 {
        let d = ETA_FD_STEP;
        (self.eta0(a + d) - self.eta0(a - d)) / (2.0 * d)
    }

    /// 1D slope `-∫ Q^p(x) Q'(x - a) dx` by quadrature.
    fn eta0_slope_1d(&self, a: f64) -> f64 {
        let nl = self.nonlinearity();
        let hq = 0.05;
        let n = (self.r_max() / hq).round() as i64;
        let mut acc = 0.0;
        for i in -n..=n {
            let x = i as f64 * hq;
            acc -= nl.f(self.q(x)) * self.q_prime(x - a);
        }
        acc * hq
    }

    fn table(&self) -> &EtaTable {
        self.eta_table.get_or_init(|| {
            assert_eq!(self.dim, 1, "tabulated kernel is one-dimensional");
            let n = (ETA_TABLE_END / ETA_TABLE_STEP).round() as usize;
            let grid: Vec<f64> = (0..=n).map(|i| i as f64 * ETA_TABLE_STEP).collect();
            EtaTable {
                values: grid.iter().map(|&a| self.eta0(a)).collect(),
                slopes: grid.iter().map(|&a| self.eta0_slope_1d(a)).collect(),
            }
        })
    }

    /// Tabulated `(η₀(a), η₀'(a))` for 1D dynamics (cubic Hermite; past the
    /// table end the kernel follows the `e^{-a}` law).
    pub fn eta0_fast(&self, a: f64) -> (f64, f64) {
        let a = a.abs();
        let tab = self.table();
        let n = tab.values.len() - 1;
        let hq = ETA_TABLE_STEP;
        if a >= n as f64 * hq {
            let v = tab.values[n] * (-(a - n as f64 * hq)).exp();
            return (v, -v);
        }
        let i = ((a / hq).floor() as usize).min(n - 1);
        let s = a / hq - i as f64;
        let (y0, y1) = (tab.values[i], tab.values[i + 1]);
        let (m0, m1) = (tab.slopes[i] * hq, tab.slopes[i + 1] * hq);
        let s2 = s * s;
        let s3 = s2 * s;
        let v = (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
        let d = (6.0 * s2 - 6.0 * s) * y0 + (3.0 * s2 - 4.0 * s + 1.0) * m0 + (-6.0 * s2 + 6.0 * s) * y1 + (3.0 * s2 - 2.0 * s) * m1;
        (v, d / hq)
    }

    /// `<f(Q) | e^{x₁}>`, the prefactor of the large-distance kernel law.
    pub fn eta_asymptotic_coeff(&self) -> f64 {
        let nl = self.nonlinearity();
        let pi = std::f64::consts::PI;
        let hr = 0.02;
        let n = (self.r_max().min(16.0) / hr).round() as usize;
        let vals: Vec<f64> = (0..=n)
            .map(|i| {
                let r = i as f64 * hr;
                let ang = match self.dim {
                    1 => 2.0 * r.cosh(),
                    2 => {
                        let m = 256;
                        (0..m).map(|j| (r * (2.0 * pi * j as f64 / m as f64).cos()).exp()).sum::<f64>() * 2.0 * pi
                            / m as f64
                    }
                    _ => {
                        if r == 0.0 {
                            4.0 * pi
                        } else {
                            4.0 * pi * r.sinh() / r
                        }
                    }
                };
                r.powi(self.dim as i32 - 1) * nl.f(self.q(r)) * ang
            })
            .collect();
        simpson(&vals, hr)
    }
}

/// Ground state of the 3-point finite-difference equation on `x_i = i·dx`,
/// `0 <= x_i <= half_len`, even about 0 and zero past `half_len`.
/// It is an exact stationary point of the semi-discrete evolution.
pub fn discrete_ground_state(gs: &GroundState, dx: f64, half_len: f64) -> Result<RadialProfile> {
    if gs.dim != 1 {
        return Err(Error::InvalidInput("discrete ground state is one-dimensional".into()));
    }
    let n = (half_len / dx).round() as usize + 1;
    let nl = gs.nonlinearity();
    let mut q: Vec<f64> = (0..n).map(|i| gs.q(i as f64 * dx)).collect();
    let inv = 1.0 / (dx * dx);
    let residual = |q: &[f64], out: &mut [f64]| {
        for i in 0..n {
            let left = if i == 0 { q[1] } else { q[i - 1] };
            let right = if i + 1 < n { q[i + 1] } else { 0.0 };
            out[i] = -((left + right) - 2.0 * q[i]) * inv + q[i] - nl.f(q[i]);
        }
    };
    let mut res = vec![0.0; n];
    let mut converged = false;
    for _ in 0..50 {
        residual(&q, &mut res);
        let worst = res.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        if worst < 1e-10 {
            converged = true;
            break;
        }
        let diag: Vec<f64> = q.iter().map(|&v| 2.0 * inv + 1.0 - nl.df(v)).collect();
        let lower = vec![-inv; n];
        let mut upper = vec![-inv; n];
        upper[0] = -2.0 * inv;
        let mut delta = res.clone();
        if !solve_tridiagonal(&lower, &diag, &upper, &mut delta) {
            return Err(Error::NotConverged { what: "discrete ground state" });
        }
        let mut step: f64 = 0.0;
        for (qi, di) in q.iter_mut().zip(&delta) {
            *qi -= di;
            step = step.max(di.abs());
        }
        if step < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NotConverged { what: "discrete ground state" });
    }
    let tail = ExpTail { coeff: 0.0, power: 0.0, rate: 1.0 };
    Ok(RadialProfile::new(dx, q, tail))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact_1d(p: f64, x: f64) -> f64 {
        ((p + 1.0) / 2.0).powf(1.0 / (p - 1.0)) * (1.0 / ((p - 1.0) * x / 2.0).cosh()).powf(2.0 / (p - 1.0))
    }

    #[test]
    fn cubic_ground_state_is_sech() {
        let gs = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
        let worst = gs
            .values
            .iter()
            .enumerate()
            .map(|(i, q)| (q - exact_1d(3.0, i as f64 * gs.step)).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "sup error {worst}");
        assert!((gs.l2_sq - 4.0).abs() < 1e-9);
        assert!((gs.grad_sq - 4.0 / 3.0).abs() < 1e-9);
        assert!((gs.lp1 - 16.0 / 3.0).abs() < 1e-9);
        assert!((gs.energy - 4.0 / 3.0).abs() < 1e-9);
        assert!((gs.tail_c0 - 2.0 * 2f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn closed_forms_for_other_powers() {
        for p in [4.0, 5.0] {
            let gs = solve_ground_state(1, p, 30.0, 1e-12).unwrap();
            let worst = gs
                .values
                .iter()
                .enumerate()
                .map(|(i, q)| (q - exact_1d(p, i as f64 * gs.step)).abs())
                .fold(0.0, f64::max);
            assert!(worst < 1e-8, "p={p} sup error {worst}");
        }
        let gs = solve_ground_state(1, 5.0, 30.0, 1e-12).unwrap();
        assert!((gs.q0 - 3f64.powf(0.25)).abs() < 1e-9);
    }

    #[test]
    fn invariants_hold_in_all_dimensions() {
        for (dim, p) in [(1, 3.0), (2, 3.0), (3, 3.0), (2, 2.5), (3, 4.0)] {
            let gs = solve_ground_state(dim, p, 30.0, 1e-10).unwrap();
            assert!(gs.values.windows(2).all(|w| w[0] > w[1] && w[1] > 0.0), "N={dim} p={p} monotone");
            assert!(*gs.values.last().unwrap() < 1e-10);
            assert!((gs.h1_sq - gs.lp1).abs() <= 1e-6 * gs.lp1, "N={dim} p={p} Nehari");
            assert!(gs.shooting_residual() < 1e-6, "N={dim} p={p} residual {}", gs.shooting_residual());
            let n = gs.values.len();
            for i in 3 * (n - 1) / 4..n {
                let r = i as f64 * gs.step;
                assert!((gs.values[i] - gs.tail(r)).abs() <= 1e-3 * gs.values[i], "N={dim} p={p} tail at {r}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(solve_ground_state(4, 3.0, 30.0, 1e-10), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_ground_state(3, 5.0, 30.0, 1e-10), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_ground_state(1, 1.5, 30.0, 1e-10), Err(Error::InvalidInput(_))));
        assert!(matches!(solve_ground_state(1, 3.0, 20.0, 1e-10), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn kernel_values() {
        let gs = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
        assert!((gs.eta0(0.0) - 16.0 / 3.0).abs() < 1e-9);
        // brute-force trapezoid with the closed-form profile
        let a = 10.0;
        let m = 200_000;
        let (lo, hi) = (-30.0, 40.0);
        let hq = (hi - lo) / m as f64;
        let brute: f64 = (0..=m)
            .map(|i| {
                let x = lo + i as f64 * hq;
                let w = if i == 0 || i == m { 0.5 } else { 1.0 };
                w * exact_1d(3.0, x).powi(3) * exact_1d(3.0, x - a)
            })
            .sum::<f64>()
            * hq;
        assert!((gs.eta0(a) - brute).abs() < 1e-8 * brute);
        let ratio = gs.eta0(15.0) / (gs.eta_asymptotic_coeff() * gs.q(15.0));
        assert!((ratio - 1.0).abs() < 0.02, "ratio {ratio}");
        let lg = gs.eta0_prime(15.0) / gs.eta0(15.0);
        assert!((lg + 1.0).abs() < 0.05);
        let hd = 1e-3;
        let fd = (gs.eta0(8.0 + hd) - gs.eta0(8.0 - hd)) / (2.0 * hd);
        assert!((fd - gs.eta0_prime(8.0)).abs() < 1e-6);
        for a in [2.0, 5.0, 12.0] {
            assert!(gs.eta0_prime(a) < 0.0);
        }
        for a in [0.3, 3.7, 11.11, 25.0, 45.0] {
            let (v, d) = gs.eta0_fast(a);
            assert!((v - gs.eta0(a)).abs() < 1e-8 * gs.eta0(a).max(1e-12), "a={a}");
            if a < 40.0 {
                assert!((d - gs.eta0_prime(a)).abs() < 1e-7 * gs.eta0(a).max(1e-12) + 1e-12, "a={a}");
            }
        }
    }

    #[test]
    fn kernel_in_higher_dimensions() {
        for dim in [2, 3] {
            let gs = solve_ground_state(dim, 3.0, 30.0, 1e-10).unwrap();
            assert!((gs.eta0(0.0) - gs.lp1).abs() < 1e-6 * gs.lp1, "N={dim}");
            let mut prev = gs.eta0(3.0);
            for k in 1..8 {
                let cur = gs.eta0(3.0 + k as f64 * 1.5);
                assert!(cur > 0.0 && cur < prev, "N={dim}");
                prev = cur;
            }
        }
    }

    #[test]
    fn discrete_ground_state_is_close_to_continuum() {
        let gs = solve_ground_state(1, 3.0, 30.0, 1e-12).unwrap();
        let prof = discrete_ground_state(&gs, 0.05, 40.0).unwrap();
        let worst = prof
            .samples()
            .iter()
            .enumerate()
            .map(|(i, q)| (q - gs.q(i as f64 * 0.05)).abs())
            .fold(0.0, f64::max);
        // O(dx^2) consistency error
        assert!(worst < 1e-3 && worst > 1e-7, "{worst}");
    }
}
