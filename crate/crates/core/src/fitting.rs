//! Asymptotic fits of `log Π(p)` against powers of `1/p`.
//!
//! The input is a [`PiDataset`], a list of `(k, log Π)` rows with `p = 2^{-k}`.
//! Every one- and two-parameter fit is an ordinary least-squares line through
//! the last [`DEFAULT_K_LAST`] transformed points; [`fit_four_param`] solves
//! the exactly determined system `log Π = λ₁ p^{-α} − λ₂ p^{-β}` on four rows.

use std::f64::consts::{LN_2, PI, SQRT_2};

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;

use crate::error::{Error, Result};

/// Number of trailing points used by the linear regressions.
pub const DEFAULT_K_LAST: usize = 3;

/// Number of rows consumed by [`fit_four_param`].
pub const FOUR_PARAM_ROWS: usize = 4;

/// Target residual norm of the four-parameter solve.
pub const FOUR_PARAM_TOL: f64 = 1e-12;

/// Largest relative residual accepted at the four-parameter solution.
pub const FOUR_PARAM_ACCEPT: f64 = 1e-8;

/// Published values of `log Π(p)` for `p = 2^{-k}`, `k = 2..=17`, under the
/// local Fröbose rule.
pub const TABLE3: [(u32, f64); 16] = [
    (2, 1.8231469544522168),
    (3, 4.742671577932995),
    (4, 12.392931032600497),
    (5, 30.54732365348029),
    (6, 71.22104704459092),
    (7, 159.10494055779233),
    (8, 344.5259389380065),
    (9, 729.489374480061),
    (10, 1519.9177238798902),
    (11, 3130.360634994818),
    (12, 6393.748024566681),
    (13, 12981.361913134877),
    (14, 26243.443273103207),
    (15, 52891.342141028406),
    (16, 106363.14234086743),
    (17, 213556.78508818566),
];

fn lambda1_f() -> f64 {
    PI * PI / 6.0
}

fn lambda2_f() -> f64 {
    PI * (2.0 + SQRT_2).sqrt()
}

/// Rows of `(log₂(1/p), log Π)`, sorted by `k`, with `log Π` strictly
/// increasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PiDataset {
    rows: Vec<(u32, f64)>,
}

impl PiDataset {
    /// Sorts the rows by `k` and checks the invariants.
    pub fn new(mut rows: Vec<(u32, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidArgument("empty dataset".into()));
        }
        rows.sort_by_key(|r| r.0);
        for &(k, v) in &rows {
            if k == 0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "row (k = {k}, log_pi = {v}) is not a valid data point"
                )));
            }
        }
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument(format!("duplicate row k = {}", w[0].0)));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::InvalidArgument(format!(
                    "log_pi not increasing between k = {} and k = {}",
                    w[0].0, w[1].0
                )));
            }
        }
        Ok(Self { rows })
    }

    /// The published table.
    pub fn table3() -> Self {
        Self { rows: TABLE3.to_vec() }
    }

    pub fn rows(&self) -> &[(u32, f64)] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Parses `k,log_pi` lines. Blank lines, `#` comments and a header line
    /// whose first field is not an integer are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut fields = line.split(',').map(str::trim);
            let (Some(k), Some(v)) = (fields.next(), fields.next()) else {
                return Err(Error::InvalidArgument(format!(
                    "line {}: expected two comma-separated fields",
                    lineno + 1
                )));
            };
            let Ok(k) = k.parse::<u32>() else {
                if rows.is_empty() {
                    continue;
                }
                return Err(Error::InvalidArgument(format!(
                    "line {}: bad k value {k:?}",
                    lineno + 1
                )));
            };
            let v = v.parse::<f64>().map_err(|_| {
                Error::InvalidArgument(format!("line {}: bad log_pi value {v:?}", lineno + 1))
            })?;
            rows.push((k, v));
        }
        Self::new(rows)
    }

    fn p(k: u32) -> f64 {
        (-(k as f64)).exp2()
    }
}

/// Result of an ordinary least-squares line fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares over the last `k_last` points.
pub fn linreg(points: &[(f64, f64)], k_last: usize) -> Result<LinearFit> {
    if k_last < 2 || k_last > points.len() {
        return Err(Error::InvalidArgument(format!(
            "k_last = {k_last} must lie in [2, {}]",
            points.len()
        )));
    }
    let pts = &points[points.len() - k_last..];
    if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegenerateRegression("non-finite coordinate".into()));
    }
    let n = k_last as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let scale = pts.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    if sxx <= (f64::EPSILON * scale).powi(2) * n {
        return Err(Error::DegenerateRegression("abscissae are all equal".into()));
    }
    let slope = sxy / sxx;
    Ok(LinearFit { slope, intercept: my - slope * mx })
}

/// The transformed coordinates behind each regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Figure {
    /// `log log Π` against `log(1/p)`.
    LogLog,
    /// `log Π` against `1/p`.
    Linear,
    /// `log(λ₁ᶠ/p − log Π)` against `log(1/p)`.
    SecondOrderLog,
    /// `λ₁ᶠ/p − log Π` against `1/√p`.
    SecondOrderLinear,
    /// `log(log Π − λ₁ᶠ/p + λ₂ᶠ/√p)` against `log(1/p)`.
    ThirdOrderLog,
}

impl Figure {
    pub const ALL: [Figure; 5] = [
        Figure::LogLog,
        Figure::Linear,
        Figure::SecondOrderLog,
        Figure::SecondOrderLinear,
        Figure::ThirdOrderLog,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Figure::LogLog => "loglog",
            Figure::Linear => "linear",
            Figure::SecondOrderLog => "second_order_log",
            Figure::SecondOrderLinear => "second_order_linear",
            Figure::ThirdOrderLog => "third_order_log",
        }
    }

    /// Maps every row of `data` to plot coordinates. Rows whose ordinate
    /// would need the logarithm of a non-positive number are rejected, as are
    /// negative second-order residuals.
    pub fn transform(self, data: &PiDataset) -> Result<Vec<(f64, f64)>> {
        let (l1, l2) = (lambda1_f(), lambda2_f());
        data.rows
            .iter()
            .enumerate()
            .map(|(i, &(k, lp))| {
                let p = PiDataset::p(k);
                let log_inv_p = k as f64 * LN_2;
                let positive = |value: f64| {
                    if value > 0.0 {
                        Ok(value)
                    } else {
                        Err(Error::NonPositiveResidual { index: i, value })
                    }
                };
                Ok(match self {
                    Figure::LogLog => (log_inv_p, positive(lp)?.ln()),
                    Figure::Linear => (1.0 / p, lp),
                    Figure::SecondOrderLog => (log_inv_p, positive(l1 / p - lp)?.ln()),
                    Figure::SecondOrderLinear => (1.0 / p.sqrt(), positive(l1 / p - lp)?),
                    Figure::ThirdOrderLog => {
                        (log_inv_p, positive(lp - l1 / p + l2 / p.sqrt())?.ln())
                    }
                })
            })
            .collect()
    }

    /// Regression through the last [`DEFAULT_K_LAST`] transformed points.
    /// Only those points need to be admissible.
    pub fn fit(self, data: &PiDataset) -> Result<LinearFit> {
        let start = data.len().saturating_sub(DEFAULT_K_LAST);
        let tail = PiDataset { rows: data.rows[start..].to_vec() };
        let pts = self.transform(&tail).map_err(|e| match e {
            Error::NonPositiveResidual { index, value } => {
                Error::NonPositiveResidual { index: index + start, value }
            }
            other => other,
        })?;
        linreg(&pts, DEFAULT_K_LAST)
    }
}

/// Leading-order exponent and prefactor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstOrderFit {
    pub alpha: f64,
    pub lambda1: f64,
}

/// Fits `log Π ≈ λ₁ p^{-α}` on a log-log scale.
pub fn fit_first_order(data: &PiDataset) -> Result<FirstOrderFit> {
    let fit = Figure::LogLog.fit(data)?;
    Ok(FirstOrderFit { alpha: fit.slope, lambda1: fit.intercept.exp() })
}

/// Fits `log Π ≈ λ₁/p + C` and returns `λ₁`.
pub fn fit_first_order_fixed_alpha(data: &PiDataset) -> Result<f64> {
    Ok(Figure::Linear.fit(data)?.slope)
}

/// Second-order exponent and prefactor with the leading term fixed at `π²/(6p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecondOrderFit {
    pub beta: f64,
    pub lambda2: f64,
}

pub fn fit_second_order(data: &PiDataset) -> Result<SecondOrderFit> {
    let fit = Figure::SecondOrderLog.fit(data)?;
    Ok(SecondOrderFit { beta: fit.slope, lambda2: fit.intercept.exp() })
}

/// Second-order prefactor with `β = 1/2` imposed.
pub fn fit_second_order_fixed_beta(data: &PiDataset) -> Result<f64> {
    Ok(Figure::SecondOrderLinear.fit(data)?.slope)
}

/// Exponent of the correction left after subtracting both known terms.
pub fn fit_third_order(data: &PiDataset) -> Result<f64> {
    Ok(Figure::ThirdOrderLog.fit(data)?.slope)
}

/// Solution of `log Π = λ₁ p^{-α} − λ₂ p^{-β}` on four rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourParamFit {
    pub alpha: f64,
    pub lambda1: f64,
    pub beta: f64,
    pub lambda2: f64,
    /// Largest `|model − log Π| / log Π` over the fitted rows.
    pub max_rel_residual: f64,
}

struct FourParamProblem {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl FourParamProblem {
    /// Best `(λ₁, λ₂)` for fixed exponents, weighting each row by `1/y`.
    fn inner(&self, alpha: f64, beta: f64) -> Option<(f64, f64)> {
        let (mut a11, mut a12, mut a22, mut b1, mut b2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in self.x.iter().zip(&self.y) {
            let u = (alpha * x).exp() / y;
            let v = -(beta * x).exp() / y;
            a11 += u * u;
            a12 += u * v;
            a22 += v * v;
            b1 += u;
            b2 += v;
        }
        let det = a11 * a22 - a12 * a12;
        if !(det.abs() > 1e-14 * a11 * a22) {
            return None;
        }
        Some(((b1 * a22 - b2 * a12) / det, (a11 * b2 - a12 * b1) / det))
    }

    fn residuals(&self, params: [f64; 4]) -> Vec<f64> {
        let [alpha, l1, beta, l2] = params;
        self.x
            .iter()
            .zip(&self.y)
            .map(|(&x, &y)| (l1 * (alpha * x).exp() - l2 * (beta * x).exp() - y) / y)
            .collect()
    }

    fn norm(&self, params: [f64; 4]) -> f64 {
        self.residuals(params).iter().map(|r| r * r).sum::<f64>().sqrt()
    }

    /// Newton steps on the square system, kept only while they reduce the
    /// residual norm.
    fn polish(&self, mut params: [f64; 4]) -> [f64; 4] {
        let mut best = self.norm(params);
        for _ in 0..20 {
            let [alpha, l1, beta, l2] = params;
            let mut jac = [[0.0; 4]; 4];
            let mut rhs = [0.0; 4];
            for (i, (&x, &y)) in self.x.iter().zip(&self.y).enumerate() {
                let (ea, eb) = ((alpha * x).exp(), (beta * x).exp());
                jac[i] = [l1 * x * ea / y, ea / y, -l2 * x * eb / y, -eb / y];
                rhs[i] = -(l1 * ea - l2 * eb - y) / y;
            }
            let Some(step) = solve4(jac, rhs) else { break };
            let mut next = params;
            for (n, s) in next.iter_mut().zip(step) {
                *n += s;
            }
            let norm = self.norm(next);
            if !(norm < best) {
                break;
            }
            params = next;
            best = norm;
            if best < FOUR_PARAM_TOL * 1e-3 {
                break;
            }
        }
        params
    }
}

impl CostFunction for FourParamProblem {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Self::Param) -> std::result::Result<f64, argmin::core::Error> {
        let (alpha, beta) = (p[0], p[1]);
        if !(alpha > beta) {
            return Ok(f64::INFINITY);
        }
        Ok(match self.inner(alpha, beta) {
            Some((l1, l2)) => {
                let r = self.residuals([alpha, l1, beta, l2]);
                r.iter().map(|r| r * r).sum()
            }
            None => f64::INFINITY,
        })
    }
}

/// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 || !a[piv][col].is_finite() {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for c in col..4 {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|c| a[row][c] * x[c]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves `log Π = λ₁ p^{-α} − λ₂ p^{-β}` on the last four rows.
///
/// The exponents are found by Nelder–Mead seeded at `(1, 1/2)`; for each
/// candidate pair the prefactors come from a linear least-squares solve. A
/// few Newton steps on the full system finish the job.
pub fn fit_four_param(data: &PiDataset) -> Result<FourParamFit> {
    if data.len() < FOUR_PARAM_ROWS {
        return Err(Error::InvalidArgument(format!(
            "four-parameter fit needs {FOUR_PARAM_ROWS} rows, got {}",
            data.len()
        )));
    }
    let tail = &data.rows[data.len() - FOUR_PARAM_ROWS..];
    if let Some((i, &(_, y))) = tail.iter().enumerate().find(|(_, r)| r.1 <= 0.0) {
        return Err(Error::NonPositiveResidual { index: data.len() - FOUR_PARAM_ROWS + i, value: y });
    }
    let problem = FourParamProblem {
        x: tail.iter().map(|r| r.0 as f64 * LN_2).collect(),
        y: tail.iter().map(|r| r.1).collect(),
    };
    let simplex = vec![vec![1.0, 0.5], vec![1.05, 0.5], vec![1.0, 0.55]];
    let solver = NelderMead::new(simplex)
        .with_sd_tolerance(FOUR_PARAM_TOL * FOUR_PARAM_TOL)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let result = Executor::new(problem, solver)
        .configure(|state| state.max_iters(5000))
        .run()
        .map_err(|_| Error::FitNonConvergence { residual: f64::NAN })?;
    let problem = result.problem.problem.as_ref().expect("problem is returned with the result");
    let best = result.state.best_param.as_ref().ok_or(Error::FitNonConvergence { residual: f64::NAN })?;
    let (alpha, beta) = (best[0], best[1]);
    let (l1, l2) = problem
        .inner(alpha, beta)
        .ok_or(Error::FitNonConvergence { residual: f64::NAN })?;
    let params = problem.polish([alpha, l1, beta, l2]);
    let max_rel_residual = problem.residuals(params).iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if !(max_rel_residual < FOUR_PARAM_ACCEPT) || !(params[0] > params[2]) {
        return Err(Error::FitNonConvergence { residual: problem.norm(params) });
    }
    let [alpha, lambda1, beta, lambda2] = params;
    Ok(FourParamFit { alpha, lambda1, beta, lambda2, max_rel_residual })
}
