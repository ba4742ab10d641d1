//! The frame-state cycle matrices behind the second-order term: exact powers
//! of the unperturbed matrix, the perturbed matrix `ℳ(P)` and its spectrum,
//! and the Lagrange-interpolation bound on matrix powers.
//!
//! Eigenvalues are obtained from the characteristic polynomial rather than a
//! general eigensolver: Faddeev–LeVerrier for the coefficients, then Aberth
//! iteration for generic matrices or the quartic formula for `ℳ(P)`.

use crate::error::{Error, Result};
use num_complex::Complex64;
use std::fmt;

/// Relative tolerance of the power iteration for the operator norm.
pub const NORM_TOL: f64 = 1e-10;
/// Eigenvalue separations below this (relative to `max(1, |||M|||)`) count as
/// repeated. A root of multiplicity `m` is only resolved to about `ε^{1/m}`
/// by the polynomial route, so the threshold sits above the triple-root level.
pub const SEPARATION_TOL: f64 = 1e-5;

/// A dense square matrix of small dimension.
#[derive(Clone, PartialEq)]
pub struct SmallMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SmallMatrix {
    pub fn zeros(n: usize) -> Self {
        SmallMatrix { n, data: vec![0.0; n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = SmallMatrix::zeros(n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows<const N: usize>(rows: [[f64; N]; N]) -> Self {
        SmallMatrix { n: N, data: rows.iter().flatten().copied().collect() }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let mut m = SmallMatrix::zeros(values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn transpose(&self) -> SmallMatrix {
        let mut t = SmallMatrix::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn mul(&self, other: &SmallMatrix) -> SmallMatrix {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let n = self.n;
        let mut out = SmallMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn scale(&self, s: f64) -> SmallMatrix {
        SmallMatrix { n: self.n, data: self.data.iter().map(|x| x * s).collect() }
    }

    pub fn pow(&self, k: u32) -> SmallMatrix {
        let mut result = SmallMatrix::identity(self.n);
        let mut base = self.clone();
        let mut e = k;
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base);
            }
            base = base.mul(&base);
            e >>= 1;
        }
        result
    }

    pub fn trace(&self) -> f64 {
        (0..self.n).map(|i| self[(i, i)]).sum()
    }

    fn mat_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum()).collect()
    }
}

impl std::ops::Index<(usize, usize)> for SmallMatrix {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for SmallMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for SmallMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.rows()).finish()
    }
}

/// Adjacency of the good non-loop transitions between the frame states
/// `0, 1, 2, 3, 2', 1'` (in this order).
pub const CYCLE: [[u8; 6]; 6] = [
    [0, 1, 0, 0, 0, 0],
    [1, 0, 1, 0, 0, 0],
    [0, 1, 0, 1, 0, 0],
    [0, 0, 1, 0, 1, 0],
    [0, 0, 0, 1, 0, 1],
    [1, 0, 0, 0, 1, 0],
];

pub fn cycle_matrix() -> SmallMatrix {
    SmallMatrix::from_rows(CYCLE.map(|r| r.map(f64::from)))
}

/// `ℳ^{2K+3}(0, 3)` by exact integer matrix powers.
pub fn matrix_power_entry(k: u32) -> u128 {
    let m = CYCLE.map(|r| r.map(u128::from));
    let mut acc = [[0u128; 6]; 6];
    for (i, row) in acc.iter_mut().enumerate() {
        row[i] = 1;
    }
    for _ in 0..2 * k + 3 {
        let mut next = [[0u128; 6]; 6];
        for i in 0..6 {
            for l in 0..6 {
                if acc[i][l] == 0 {
                    continue;
                }
                for j in 0..6 {
                    next[i][j] += acc[i][l] * m[l][j];
                }
            }
        }
        acc = next;
    }
    acc[0][3]
}

/// `((1-√2)(2-√2)^K + (1+√2)(2+√2)^K)/2` in floating point.
pub fn closed_form_entry(k: u32) -> f64 {
    let s = std::f64::consts::SQRT_2;
    ((1.0 - s) * (2.0 - s).powi(k as i32) + (1.0 + s) * (2.0 + s).powi(k as i32)) / 2.0
}

/// The closed form evaluated exactly in `ℤ[√2]`. With `(2+√2)^K = x + y√2`
/// the conjugate terms cancel and the value is `x + 2y`.
pub fn closed_form_entry_exact(k: u32) -> i128 {
    let (mut x, mut y) = (1i128, 0i128);
    for _ in 0..k {
        (x, y) = (2 * x + 2 * y, x + 2 * y);
    }
    x + 2 * y
}

/// The perturbed matrix `ℳ(x)` on the states `0, 1, 2, 3, 2', 1'`. State
/// `1''` is folded into `1` by doubling the `3 → 1` entry.
pub fn perturbed_matrix(p: f64) -> Result<SmallMatrix> {
    if !(p > 0.0 && p < 0.25) {
        return Err(Error::Domain { name: "perturbed_matrix", value: p, domain: "(0, 1/4)" });
    }
    Ok(SmallMatrix::from_rows([
        [0.0, p, 0.0, 0.0, 0.0, 0.0],
        [1.0, 0.0, p, 0.0, 0.0, 0.0],
        [1.0, 1.0, 0.0, p, 0.0, 0.0],
        [1.0, 2.0, 1.0, 0.0, 1.0, 1.0],
        [1.0, 0.0, 0.0, p, 0.0, 1.0],
        [1.0, 0.0, 0.0, 0.0, p, 0.0],
    ]))
}

/// Coefficients of `det(X·I - M)` from the leading one down, by the
/// Faddeev–LeVerrier recursion.
pub fn characteristic_polynomial(m: &SmallMatrix) -> Vec<f64> {
    let n = m.dim();
    let mut coeffs = vec![1.0];
    let mut mk = SmallMatrix::zeros(n);
    for k in 1..=n {
        // M_k = M (M_{k-1} + c_{k-1} I), c_k = -tr(M M_k) / k
        let mut shifted = mk.clone();
        let c_prev = coeffs[k - 1];
        for i in 0..n {
            shifted[(i, i)] += c_prev;
        }
        mk = m.mul(&shifted);
        coeffs.push(-mk.trace() / k as f64);
    }
    coeffs
}

/// Coefficients of `(X-1)(X+1)(X⁴ - 4X² - 4√P·X + 2 - P)`, leading first.
pub fn perturbed_characteristic_closed_form(p: f64) -> Vec<f64> {
    let s = p.sqrt();
    vec![1.0, 0.0, -5.0, -4.0 * s, 6.0 - p, 4.0 * s, -(2.0 - p)]
}

fn horner(coeffs: &[f64], z: Complex64) -> Complex64 {
    coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
}

fn horner_with_derivative(coeffs: &[f64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = Complex64::new(0.0, 0.0);
    let mut dp = Complex64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// All complex roots of a polynomial (leading coefficient first) by Aberth
/// iteration, followed by one Newton polish on the original polynomial.
pub fn polynomial_roots(coeffs: &[f64]) -> Result<Vec<Complex64>> {
    let lead = *coeffs.first().ok_or_else(|| Error::InvalidArgument("empty polynomial".into()))?;
    if lead == 0.0 {
        return Err(Error::InvalidArgument("leading coefficient is zero".into()));
    }
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let n = monic.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    // Cauchy bound on the root moduli
    let radius = 1.0 + monic[1..].iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius * 0.5, 2.0 * std::f64::consts::PI * (k as f64 + 0.25) / n as f64))
        .collect();
    let mut converged = false;
    for _ in 0..500 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let (p, dp) = horner_with_derivative(&monic, z[i]);
            if p == Complex64::new(0.0, 0.0) {
                continue;
            }
            let ratio = p / dp;
            let repulsion: Complex64 =
                (0..n).filter(|&j| j != i).map(|j| Complex64::new(1.0, 0.0) / (z[i] - z[j])).sum();
            let step = ratio / (Complex64::new(1.0, 0.0) - ratio * repulsion);
            z[i] -= step;
            max_step = max_step.max(step.norm() / z[i].norm().max(1.0));
        }
        if max_step < 1e-15 {
            converged = true;
            break;
        }
    }
    if !converged {
        let residual = z.iter().map(|&r| horner(&monic, r).norm()).fold(0.0, f64::max);
        if residual > 1e-8 {
            return Err(Error::NonConvergence { tol: 1e-8, estimate: residual });
        }
    }
    for r in &mut z {
        let (p, dp) = horner_with_derivative(&monic, *r);
        if dp.norm() > 0.0 {
            *r -= p / dp;
        }
    }
    z.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(z)
}

/// Eigenvalues as roots of the characteristic polynomial.
pub fn eigenvalues(m: &SmallMatrix) -> Result<Vec<Complex64>> {
    polynomial_roots(&characteristic_polynomial(m))
}

pub fn spectral_radius(m: &SmallMatrix) -> Result<f64> {
    Ok(eigenvalues(m)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Positive root of the resolvent cubic `8y³ + 8by² + (2b² - 8d)y - c²`
/// by bisection, for the depressed quartic `X⁴ + bX² + cX + d`.
fn resolvent_root(b: f64, c: f64, d: f64) -> f64 {
    let cubic = |y: f64| ((8.0 * y + 8.0 * b) * y + (2.0 * b * b - 8.0 * d)) * y - c * c;
    let mut hi = 1.0;
    while cubic(hi) <= 0.0 {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if cubic(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

/// Roots of the depressed quartic `X⁴ + bX² + cX + d` (Ferrari).
pub fn depressed_quartic_roots(b: f64, c: f64, d: f64) -> Vec<Complex64> {
    let quad = |bb: Complex64, cc: Complex64| {
        let disc = (bb * bb - 4.0 * cc).sqrt();
        [(-bb + disc) / 2.0, (-bb - disc) / 2.0]
    };
    let mut roots = Vec::with_capacity(4);
    if c == 0.0 {
        for z2 in quad(Complex64::new(b, 0.0), Complex64::new(d, 0.0)) {
            let z = z2.sqrt();
            roots.extend([z, -z]);
        }
    } else {
        // (X² + b/2 + y)² = 2y·(X - c/(4y))²
        let y = resolvent_root(b, c, d);
        let s = (2.0 * y).sqrt();
        let shift = c / (2.0 * s);
        for sign in [1.0, -1.0] {
            let bb = Complex64::new(-sign * s, 0.0);
            let cc = Complex64::new(b / 2.0 + y + sign * shift, 0.0);
            roots.extend(quad(bb, cc));
        }
    }
    roots.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    roots
}

/// Eigenvalues of `ℳ(P)/√P` in closed form: `±1` and the roots of
/// `X⁴ - 4X² - 4√P·X + 2 - P`, in decreasing order.
pub fn perturbed_scaled_eigenvalues(p: f64) -> Result<Vec<f64>> {
    perturbed_matrix(p)?;
    let mut roots: Vec<f64> = depressed_quartic_roots(-4.0, -4.0 * p.sqrt(), 2.0 - p)
        .into_iter()
        .map(|z| z.re)
        .collect();
    roots.extend([1.0, -1.0]);
    roots.sort_by(|a, b| b.total_cmp(a));
    Ok(roots)
}

/// `ρ(ℳ(P))` from the closed-form spectrum.
pub fn perturbed_spectral_radius(p: f64) -> Result<f64> {
    let ev = perturbed_scaled_eigenvalues(p)?;
    Ok(p.sqrt() * ev.iter().fold(0.0f64, |m, x| m.max(x.abs())))
}

/// The unperturbed limits `±√(2+√2), ±1, ±√(2-√2)` in decreasing order.
pub fn unperturbed_scaled_eigenvalues() -> [f64; 6] {
    let s = std::f64::consts::SQRT_2;
    let (big, small) = ((2.0 + s).sqrt(), (2.0 - s).sqrt());
    [big, 1.0, small, -small, -1.0, -big]
}

/// `max_i |λᵢ(P) − λᵢ(0)| / √P` for the scaled spectra, both sorted descending.
pub fn eigenvalue_shift_ratio(p: f64) -> Result<f64> {
    let ev = perturbed_scaled_eigenvalues(p)?;
    let gap = ev.iter().zip(unperturbed_scaled_eigenvalues()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(gap / p.sqrt())
}

/// Operator norm induced by the Euclidean norm, by power iteration on `MᵀM`.
pub fn operator_norm(m: &SmallMatrix) -> f64 {
    let n = m.dim();
    let mtm = m.transpose().mul(m);
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.1 * i as f64).collect();
    let mut estimate = 0.0;
    for _ in 0..100_000 {
        let w = mtm.mat_vec(&v);
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        v = w.iter().map(|x| x / norm).collect();
        let done = (norm - estimate).abs() <= NORM_TOL * norm;
        estimate = norm;
        if done {
            break;
        }
    }
    estimate.sqrt()
}

/// `d((1 + |||I|||)|||M|||/ε)^{d-1} ρ(M)^n` with the operator norm, where
/// `ε` is the smallest eigenvalue separation.
pub fn lagrange_norm_bound(m: &SmallMatrix, n: u32) -> Result<f64> {
    let d = m.dim();
    let ev = eigenvalues(m)?;
    let norm = operator_norm(m);
    let mut eps = f64::INFINITY;
    for i in 0..d {
        for j in i + 1..d {
            eps = eps.min((ev[i] - ev[j]).norm());
        }
    }
    if eps < SEPARATION_TOL * norm.max(1.0) {
        return Err(Error::RepeatedEigenvalues(eps));
    }
    let rho = ev.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let identity_norm = 1.0;
    Ok(d as f64 * ((1.0 + identity_norm) * norm / eps).powi(d as i32 - 1) * rho.powi(n as i32))
}
