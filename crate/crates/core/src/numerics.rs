//! Small numerical kernels shared by the solvers: the power nonlinearity,
//! uniform-grid profile interpolation, tridiagonal solves and quadrature.

/// Focusing power nonlinearity `f(u) = |u|^{p-1} u`, evaluated as
/// `sign(u)|u|^p` so odd symmetry is exact for non-integer powers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Power {
    p: f64,
    int: Option<i32>,
}

impl Power {
    pub fn new(p: f64) -> Self {
        let int = if p.fract() == 0.0 && p.abs() < 64.0 {
            Some(p as i32)
        } else {
            None
        };
        Self { p, int }
    }

    #[inline]
    pub fn exponent(&self) -> f64 {
        self.p
    }

    /// `|u|^p` for `u >= 0` arguments and general sign otherwise.
    #[inline]
    fn abs_pow(&self, a: f64) -> f64 {
        match self.int {
            Some(2) => a * a,
            Some(3) => a * a * a,
            Some(n) => a.powi(n),
            None => a.powf(self.p),
        }
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        match self.int {
            Some(3) => u * u * u,
            _ => {
                let m = self.abs_pow(u.abs());
                if u < 0.0 {
                    -m
                } else {
                    m
                }
            }
        }
    }

    /// `f'(u) = p|u|^{p-1}`.
    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        match self.int {
            Some(3) => 3.0 * u * u,
            Some(n) => self.p * u.abs().powi(n - 1),
            None => self.p * u.abs().powf(self.p - 1.0),
        }
    }

    /// Primitive `F(u) = |u|^{p+1}/(p+1)`.
    #[inline]
    pub fn primitive(&self, u: f64) -> f64 {
        let a = u.abs();
        let m = match self.int {
            Some(3) => {
                let a2 = a * a;
                a2 * a2
            }
            Some(n) => a.powi(n + 1),
            None => a.powf(self.p + 1.0),
        };
        m / (self.p + 1.0)
    }
}

/// Surface measure of the unit sphere `S^{N-1}` (2 for the line).
pub fn sphere_area(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => panic!("unsupported dimension {dim}"),
    }
}

/// Exponential tail `c r^{-s} e^{-k r}` used to extend profiles past their grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTail {
    pub coeff: f64,
    pub power: f64,
    pub rate: f64,
}

impl ExpTail {
    pub fn value(&self, r: f64) -> f64 {
        self.coeff * r.powf(-self.power) * (-self.rate * r).exp()
    }

    pub fn deriv(&self, r: f64) -> f64 {
        self.value(r) * (-self.power / r - self.rate)
    }
}

const STENCIL: usize = 6;

/// Even radial profile sampled on `r_i = i h`, `i = 0..len`. Values between
/// nodes come from 6-point Lagrange interpolation with even reflection
/// across the origin; values past the last node come from an exponential tail.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    step: f64,
    samples: Vec<f64>,
    tail: ExpTail,
}

impl RadialProfile {
    pub fn new(step: f64, samples: Vec<f64>, tail: ExpTail) -> Self {
        assert!(samples.len() > STENCIL, "profile needs more than {STENCIL} samples");
        Self { step, samples, tail }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn tail(&self) -> ExpTail {
        self.tail
    }

    pub fn r_end(&self) -> f64 {
        (self.samples.len() - 1) as f64 * self.step
    }

    #[inline]
    fn sample(&self, i: i64) -> f64 {
        let j = i.unsigned_abs() as usize;
        if j < self.samples.len() {
            self.samples[j]
        } else {
            self.tail.value(j as f64 * self.step)
        }
    }

    /// Profile value at signed coordinate `x` (the profile is even).
    pub fn value(&self, x: f64) -> f64 {
        let r = x.abs();
        if r > self.r_end() {
            return self.tail.value(r);
        }
        let t = r / self.step;
        let i0 = t.round();
        if (t - i0).abs() < 1e-9 {
            return self.sample(i0 as i64);
        }
        let base = t.floor() as i64 - 2;
        let s = t - base as f64;
        let mut acc = 0.0;
        for j in 0..STENCIL {
            let mut w = 1.0;
            for m in 0..STENCIL {
                if m != j {
                    w *= (s - m as f64) / (j as f64 - m as f64);
                }
            }
            acc += w * self.sample(base + j as i64);
        }
        acc
    }

    /// Derivative with respect to the signed coordinate `x`.
    pub fn deriv(&self, x: f64) -> f64 {
        let r = x.abs();
        let sgn = if x < 0.0 { -1.0 } else { 1.0 };
        if r > self.r_end() {
            return sgn * self.tail.deriv(r);
        }
        // snap to the node so both sides of the origin use the same stencil
        let t = r / self.step;
        let t = if (t - t.round()).abs() < 1e-9 { t.round() } else { t };
        if t == 0.0 {
            return 0.0;
        }
        let base = t.floor() as i64 - 2;
        let s = t - base as f64;
        let mut acc = 0.0;
        for j in 0..STENCIL {
            // d/ds of the Lagrange basis polynomial l_j(s)
            let mut dl = 0.0;
            for k in 0..STENCIL {
                if k == j {
                    continue;
                }
                let mut prod = 1.0 / (j as f64 - k as f64);
                for m in 0..STENCIL {
                    if m != j && m != k {
                        prod *= (s - m as f64) / (j as f64 - m as f64);
                    }
                }
                dl += prod;
            }
            acc += dl * self.sample(base + j as i64);
        }
        sgn * acc / self.step
    }
}

/// Solve a tridiagonal system in place (Thomas algorithm).
/// `lower[i]` couples row `i` to `i-1`, `upper[i]` couples row `i` to `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> bool {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return false;
    }
    rhs[0] /= beta;
    for i in 1..n {
        c[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * c[i];
        if beta == 0.0 || !beta.is_finite() {
            return false;
        }
        rhs[i] = (rhs[i] - lower[i] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i + 1] * rhs[i + 1];
    }
    true
}

/// Number of eigenvalues of the symmetric tridiagonal matrix `(diag, off)`
/// strictly below `x` (Sturm sequence count).
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        let denom = if q == 0.0 { f64::EPSILON } else { q };
        q = diag[i] - x - off[i - 1] * off[i - 1] / denom;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Composite Simpson rule on uniformly spaced samples (odd sample count).
pub fn simpson(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "simpson needs an odd number of samples");
    let mut acc = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Ordinary least squares fit `y = a + b x`; returns `(a, b, r)` with
/// Pearson correlation `r`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
        sxy += (a - mx) * (b - my);
    }
    let slope = sxy / sxx;
    (my - slope * mx, slope, sxy / (sxx * syy).sqrt())
}

/// Gauss-Legendre nodes and weights on `[-1, 1]` (Newton on the recurrence).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}
