//! Path functionals `W`, `Wᶠ` and their `p`-scaled versions, the optimal
//! growth paths, and the a priori bounds built from them.

use crate::error::{Error, Result};
use crate::lattice_sim::Model;
use crate::numerics::LogProb;
use crate::special_functions::{f_raw, g_raw, integrate, ModelParams};

/// Per-segment quadrature tolerance.
const SEGMENT_TOL: f64 = 1e-13;

/// A piecewise-linear, coordinatewise non-decreasing path in `[0, ∞)²`.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonePath {
    vertices: Vec<(f64, f64)>,
}

impl MonotonePath {
    /// Validates the vertices: at least one, all finite and non-negative,
    /// consecutive ones distinct and non-decreasing in both coordinates.
    pub fn new(vertices: Vec<(f64, f64)>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidPath("a path needs at least one vertex".into()));
        }
        for &(x, y) in &vertices {
            if !(x.is_finite() && y.is_finite() && x >= 0.0 && y >= 0.0) {
                return Err(Error::InvalidPath(format!("vertex ({x}, {y}) is not in [0, inf)^2")));
            }
        }
        for w in vertices.windows(2) {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            if x1 < x0 || y1 < y0 {
                return Err(Error::InvalidPath(format!("({x0}, {y0}) -> ({x1}, {y1}) is not monotone")));
            }
            if x1 == x0 && y1 == y0 {
                return Err(Error::InvalidPath(format!("repeated vertex ({x0}, {y0})")));
            }
        }
        Ok(MonotonePath { vertices })
    }

    /// Builds a path after dropping consecutive duplicate vertices.
    pub fn from_points(mut vertices: Vec<(f64, f64)>) -> Result<Self> {
        vertices.dedup();
        MonotonePath::new(vertices)
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn start(&self) -> (f64, f64) {
        self.vertices[0]
    }

    pub fn end(&self) -> (f64, f64) {
        *self.vertices.last().unwrap()
    }

    /// `self` followed by `other`, which must start where `self` ends.
    pub fn concat(&self, other: &MonotonePath) -> Result<MonotonePath> {
        if self.end() != other.start() {
            return Err(Error::InvalidPath("concatenated paths do not meet".into()));
        }
        let mut v = self.vertices.clone();
        v.extend_from_slice(&other.vertices[1..]);
        MonotonePath::new(v)
    }

    /// The mirror image under `(x, y) ↦ (y, x)`.
    pub fn reflect(&self) -> MonotonePath {
        MonotonePath { vertices: self.vertices.iter().map(|&(x, y)| (y, x)).collect() }
    }

    /// The path scaled by `s > 0`.
    pub fn scale(&self, s: f64) -> MonotonePath {
        MonotonePath { vertices: self.vertices.iter().map(|&(x, y)| (s * x, s * y)).collect() }
    }
}

/// `∫_γ K(x) dy + K(y) dx` for a kernel `K` that is integrable at 0.
///
/// On a segment the `dy` part only depends on `x` and vice versa, so each
/// part reduces to a mean of `K` over one coordinate range.
fn line_integral(path: &MonotonePath, kernel: fn(f64) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for w in path.vertices.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        let (dx, dy) = (x1 - x0, y1 - y0);
        if (dx > 0.0 && y0 == 0.0 && y1 == 0.0) || (dy > 0.0 && x0 == 0.0 && x1 == 0.0) {
            return Err(Error::InvalidPath(format!(
                "segment ({x0}, {y0}) -> ({x1}, {y1}) runs along an axis where the integrand diverges"
            )));
        }
        total += along(kernel, x0, x1, dy)? + along(kernel, y0, y1, dx)?;
    }
    Ok(total)
}

/// `weight · mean of K over [lo, hi]`, or `weight · K(lo)` for a point range.
fn along(kernel: fn(f64) -> f64, lo: f64, hi: f64, weight: f64) -> Result<f64> {
    if weight == 0.0 {
        return Ok(0.0);
    }
    if hi == lo {
        return Ok(weight * kernel(lo));
    }
    Ok(weight / (hi - lo) * integrate(kernel, lo, hi, SEGMENT_TOL)?)
}

/// `W(γ) = ∫ g(x) dy + g(y) dx`.
#[allow(non_snake_case)]
pub fn W(path: &MonotonePath) -> Result<f64> {
    line_integral(path, g_raw)
}

/// `Wᶠ(γ) = ∫ f(x) dy + f(y) dx`.
#[allow(non_snake_case)]
pub fn W_f(path: &MonotonePath) -> Result<f64> {
    line_integral(path, f_raw)
}

/// `W_p(γ) = ∫ g(qx) dy + g(qy) dx = W(qγ)/q`.
#[allow(non_snake_case)]
pub fn W_p(path: &MonotonePath, params: &ModelParams) -> Result<f64> {
    Ok(W(&path.scale(params.q()))? / params.q())
}

/// `Wᶠ_p(γ) = Wᶠ(qγ)/q`.
#[allow(non_snake_case)]
pub fn W_f_p(path: &MonotonePath, params: &ModelParams) -> Result<f64> {
    Ok(W_f(&path.scale(params.q()))? / params.q())
}

/// `∫_γ (x - y)(dy - dx)`. The form is exact, so it vanishes on every path
/// between two diagonal points.
pub fn diagonal_deviation_form(path: &MonotonePath) -> f64 {
    path.vertices
        .windows(2)
        .map(|w| {
            let ((x0, y0), (x1, y1)) = (w[0], w[1]);
            let (dx, dy) = (x1 - x0, y1 - y0);
            (x0 - y0) * (dy - dx) - (dx - dy) * (dx - dy) / 2.0
        })
        .sum()
}

/// The path from `S = (a, b)` to `T = (c, d)` that stays as close to the
/// diagonal as possible. `S = (0, 0)` gives `γ_T`.
pub fn optimal_path(s: (f64, f64), t: (f64, f64)) -> Result<MonotonePath> {
    let ((a, b), (c, d)) = (s, t);
    if !(a <= c && b <= d) {
        return Err(Error::InvalidPath(format!("({a}, {b}) is not below ({c}, {d})")));
    }
    let v = if d < a {
        vec![(a, b), (a, d), (c, d)]
    } else if c < b {
        vec![(a, b), (c, b), (c, d)]
    } else {
        let (hi, lo) = (a.max(b), c.min(d));
        vec![(a, b), (hi, hi), (lo, lo), (c, d)]
    };
    MonotonePath::from_points(v)
}

/// `γ_R = ((0,0), (min, min), (w, h))` for `R = R(w, h)`.
pub fn gamma_r(w: f64, h: f64) -> Result<MonotonePath> {
    optimal_path((0.0, 0.0), (w, h))
}

fn check_dims(w: u32, h: u32) -> Result<()> {
    if w == 0 || h == 0 {
        return Err(Error::InvalidArgument(format!("rectangle dimensions must be positive, got {w}x{h}")));
    }
    Ok(())
}

/// Lower bound on the local internal filling probability of `R(w, h)`:
/// `p³ exp(-W_p(γ_R))` for two-neighbour, `p exp(-Wᶠ_p(γ_R))` for Fröbose.
pub fn holroyd_lower(w: u32, h: u32, params: &ModelParams, model: Model) -> Result<LogProb> {
    check_dims(w, h)?;
    let gamma = gamma_r(w as f64, h as f64)?;
    let ln_p = params.p().ln();
    Ok(LogProb::from_ln(match model {
        Model::TwoNeighbour => 3.0 * ln_p - W_p(&gamma, params)?,
        Model::Frobose => ln_p - W_f_p(&gamma, params)?,
    }))
}

/// Upper bound `exp(1/(C₃p) - W_p(γ_R))` (resp. `Wᶠ_p`) on the internal
/// filling probability. The constant `C₃` is the caller's choice.
pub fn holroyd_upper(w: u32, h: u32, params: &ModelParams, c3: f64, model: Model) -> Result<LogProb> {
    check_dims(w, h)?;
    if !(c3 > 0.0 && c3.is_finite()) {
        return Err(Error::Domain { name: "holroyd_upper", value: c3, domain: "C3 > 0" });
    }
    let gamma = gamma_r(w as f64, h as f64)?;
    let cost = match model {
        Model::TwoNeighbour => W_p(&gamma, params)?,
        Model::Frobose => W_f_p(&gamma, params)?,
    };
    Ok(LogProb::from_ln(1.0 / (c3 * params.p()) - cost))
}
