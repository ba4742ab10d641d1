//! Scalar functions and constants: `f`, `g`, `β`, `β̄`, `α`, the entropy
//! functions `h`, `h₂`, `h₂′`, the large-aspect-ratio kernels `ξᶠ`, `ξ`,
//! exact traversability probabilities and the quadrature behind the `λ`
//! constants.

use crate::error::{Error, Result};
use std::f64::consts::{PI, SQRT_2};

/// `2 + √2`, the squared Perron–Frobenius eigenvalue of the frame-state cycle.
pub const TWO_PLUS_SQRT2: f64 = 2.0 + SQRT_2;

/// Beyond this point every kernel is replaced by its exponential envelope.
pub const TAIL_CUT: f64 = 60.0;

fn require_positive(name: &'static str, z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { name, value: z, domain: "(0, inf)" })
    }
}

/// The percolation parameter `p` with its companion `q = -log(1 - p)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelParams {
    p: f64,
    q: f64,
}

impl ModelParams {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain { name: "p", value: p, domain: "(0, 1)" });
        }
        Ok(ModelParams { p, q: -(-p).ln_1p() })
    }

    /// `p = 2^{-k}`.
    pub fn from_log2_inv_p(k: u32) -> Result<Self> {
        Self::new(2f64.powi(-(k as i32)))
    }

    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    #[inline]
    pub fn q(&self) -> f64 {
        self.q
    }

    /// `log(1/p)`.
    #[inline]
    pub fn log_inv_p(&self) -> f64 {
        -self.p.ln()
    }
}

#[inline]
pub(crate) fn f_raw(z: f64) -> f64 {
    if z > std::f64::consts::LN_2 {
        -(-(-z).exp()).ln_1p()
    } else {
        -(-(-z).exp_m1()).ln()
    }
}

/// `f(z) = -log(1 - e^{-z})`.
pub fn f(z: f64) -> Result<f64> {
    require_positive("f", z)?;
    Ok(f_raw(z))
}

fn check_unit(name: &'static str, u: f64) -> Result<()> {
    if u > 0.0 && u < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain { name, value: u, domain: "(0, 1)" })
    }
}

#[inline]
fn beta_raw(u: f64) -> f64 {
    (u + (u * (4.0 - 3.0 * u)).sqrt()) / 2.0
}

/// `β(u) = (u + √(u(4-3u)))/2`, the larger root of `X² - uX - u(1-u)`.
pub fn beta(u: f64) -> Result<f64> {
    check_unit("beta", u)?;
    Ok(beta_raw(u))
}

/// `β̄(u) = (u - √(u(4-3u)))/2`, the conjugate root.
pub fn beta_bar(u: f64) -> Result<f64> {
    check_unit("beta_bar", u)?;
    Ok((u - (u * (4.0 - 3.0 * u)).sqrt()) / 2.0)
}

#[inline]
pub(crate) fn g_raw(z: f64) -> f64 {
    // With v = e^{-z}, 1 - β(1 - v) = 2v²/(s + 1 + v) where s = √(u(4-3u));
    // this keeps full relative accuracy when β is within rounding of 1.
    let v = (-z).exp();
    let u = -(-z).exp_m1();
    let s = (u * (4.0 - 3.0 * u)).sqrt();
    -(-2.0 * v * v / (s + 1.0 + v)).ln_1p()
}

/// `g(z) = -log β(1 - e^{-z})`.
pub fn g(z: f64) -> Result<f64> {
    require_positive("g", z)?;
    Ok(g_raw(z))
}

#[inline]
fn alpha_raw(z: f64) -> f64 {
    let u = -(-z).exp_m1();
    2.0 * beta_raw(u) / (u * (4.0 - 3.0 * u)).sqrt()
}

/// `α(z) = 2β(u)/√(u(4-3u))` with `u = e^{-f(z)} = 1 - e^{-z}`.
pub fn alpha(z: f64) -> Result<f64> {
    require_positive("alpha", z)?;
    Ok(alpha_raw(z))
}

#[inline]
fn h_raw(z: f64) -> f64 {
    (TWO_PLUS_SQRT2 / z.exp_m1()).sqrt()
}

/// Fröbose entropy function `h(z) = √((2+√2)/(e^z - 1))`.
pub fn h(z: f64) -> Result<f64> {
    require_positive("h", z)?;
    Ok(h_raw(z))
}

#[inline]
fn h2_raw(z: f64) -> f64 {
    // The factor p in each kernel cancels against the division by p.
    let u = -(-z).exp_m1();
    let b = beta_raw(u);
    let ez = (-z).exp();
    let b3 = b * b * b;
    let b4 = b3 * b;
    let kernels = u / b3 + u / b4 + 2.0 * u * ez / b4 + u * u * ez / (b4 * b);
    alpha_raw(z) * (TWO_PLUS_SQRT2 * ez * ez * kernels).sqrt()
}

/// Two-neighbour entropy function `h₂`.
pub fn h2(z: f64) -> Result<f64> {
    require_positive("h2", z)?;
    Ok(h2_raw(z))
}

/// Entropy function of the modified model, `√(2+√2) / (2 sinh(z/2))`.
pub fn h_mod(z: f64) -> Result<f64> {
    require_positive("h_mod", z)?;
    Ok(TWO_PLUS_SQRT2.sqrt() / (2.0 * (z / 2.0).sinh()))
}

/// The same function written as `√((2+√2) e^{-z} e^{2f(z)})`.
pub fn h_mod_from_f(z: f64) -> Result<f64> {
    require_positive("h_mod", z)?;
    Ok((TWO_PLUS_SQRT2 * (-z).exp() * (2.0 * f_raw(z)).exp()).sqrt())
}

/// `ξᶠ(x) = x (x-1)^{(1-x)/x}` on `(1, 2]`.
pub fn xi_f(x: f64) -> Result<f64> {
    if !(x > 1.0 && x <= 2.0) {
        return Err(Error::Domain { name: "xi_f", value: x, domain: "(1, 2]" });
    }
    Ok(x * (x - 1.0).powf((1.0 - x) / x))
}

/// Positive root `T ≥ 1` of `(2x-1)T² - (1-x)T - 1 = 0` on `(1/2, 1]`.
pub fn xi_root(x: f64) -> Result<f64> {
    if !(x > 0.5 && x <= 1.0) {
        return Err(Error::Domain { name: "xi", value: x, domain: "(1/2, 1]" });
    }
    Ok(((x * x + 6.0 * x - 3.0).sqrt() + 1.0 - x) / (2.0 * (2.0 * x - 1.0)))
}

/// `ξ(x) = (1 + T + T²) / T^{1/x}` with `T` from [`xi_root`].
pub fn xi(x: f64) -> Result<f64> {
    let t = xi_root(x)?;
    Ok((1.0 + t + t * t) / t.powf(1.0 / x))
}

/// Exact probability that `R(n, b)` is East-traversable, in closed form
/// `(β^{n+1} - β̄^{n+1}) / (β - β̄)` with `u = 1 - e^{-bq}`. `u = 1` is
/// accepted and gives 1.
pub fn traversability_closed_form(n: u32, u: f64) -> Result<f64> {
    if u == 1.0 {
        return Ok(1.0);
    }
    let b = beta(u)?;
    let bb = beta_bar(u)?;
    Ok((b.powi(n as i32 + 1) - bb.powi(n as i32 + 1)) / (b - bb))
}

/// The same probability via `x_{n+2} = u x_{n+1} + u(1-u) x_n`, `x₀ = 1`, `x₁ = u`.
pub fn traversability_recurrence(n: u32, u: f64) -> Result<f64> {
    if u != 1.0 {
        check_unit("traversability", u)?;
    }
    let (mut x0, mut x1) = (1.0, u);
    if n == 0 {
        return Ok(x0);
    }
    for _ in 1..n {
        let x2 = x1 * u + x0 * (1.0 - u) * u;
        x0 = x1;
        x1 = x2;
    }
    Ok(x1)
}

/// `P(T_→(R(a, b)))` for the model parameters.
pub fn traversability_prob(a: u32, b: u32, params: &ModelParams) -> Result<f64> {
    if b == 0 {
        return Err(Error::InvalidArgument("rectangle height must be positive".into()));
    }
    traversability_closed_form(a, -(-(b as f64) * params.q()).exp_m1())
}

/// `(lower, upper)` bracket `(exp(-(a-1)g(bq) - f(bq)), exp(-a g(bq)))` for
/// the traversability probability of `R(a, b)`, `a ≥ 1`.
pub fn traversability_bracket(a: u32, b: u32, params: &ModelParams) -> Result<(f64, f64)> {
    if a == 0 || b == 0 {
        return Err(Error::InvalidArgument("rectangle sides must be positive".into()));
    }
    let z = b as f64 * params.q();
    let (gz, fz) = (g_raw(z), f_raw(z));
    let a = a as f64;
    Ok(((-(a - 1.0) * gz - fz).exp(), (-a * gz).exp()))
}

/// Adaptive quadrature of `func` over `[lower, upper]`, `upper` possibly `+inf`.
///
/// Integrable singularities are allowed at `lower` only: the substitution
/// `z = lower + (upper - lower) t²` removes `1/√z`-type behaviour before the
/// tanh-sinh rule is applied. An infinite upper limit is split at
/// `lower + TAIL_CUT` and the tail mapped onto `[0, 1)`.
pub fn integrate<F>(func: F, lower: f64, upper: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if !lower.is_finite() || upper.is_nan() || upper <= lower {
        return Err(Error::InvalidArgument(format!("bad interval [{lower}, {upper}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {tol}")));
    }
    if upper.is_infinite() {
        let cut = lower + TAIL_CUT;
        let head = integrate_finite(&func, lower, cut, tol / 2.0)?;
        let tail = quadrature::double_exponential::integrate(
            |s: f64| {
                if s >= 1.0 {
                    return 0.0;
                }
                let w = 1.0 - s;
                let v = func(cut + s / w);
                if v == 0.0 { 0.0 } else { v / (w * w) }
            },
            0.0,
            1.0,
            tol / 2.0,
        );
        check_convergence(tail.error_estimate, tol / 2.0)?;
        return Ok(head + tail.integral);
    }
    integrate_finite(&func, lower, upper, tol)
}

fn integrate_finite(func: &dyn Fn(f64) -> f64, lower: f64, upper: f64, tol: f64) -> Result<f64> {
    let width = upper - lower;
    let out = quadrature::double_exponential::integrate(
        |t: f64| {
            let z = lower + width * t * t;
            if z <= lower {
                return 0.0;
            }
            func(z) * 2.0 * width * t
        },
        0.0,
        1.0,
        tol,
    );
    check_convergence(out.error_estimate, tol)?;
    Ok(out.integral)
}

fn check_convergence(estimate: f64, tol: f64) -> Result<()> {
    if estimate.is_finite() && estimate <= tol {
        Ok(())
    } else {
        Err(Error::NonConvergence { tol, estimate })
    }
}

/// The integrands behind the `λ` constants.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kernel {
    F,
    G,
    H,
    H2,
}

impl Kernel {
    pub fn eval(self, z: f64) -> f64 {
        match self {
            Kernel::F => f_raw(z),
            Kernel::G => g_raw(z),
            Kernel::H => h_raw(z),
            Kernel::H2 => h2_raw(z),
        }
    }

    /// Integral of the leading exponential envelope over `[TAIL_CUT, inf)`.
    fn tail(self) -> f64 {
        match self {
            Kernel::F => (-TAIL_CUT).exp(),
            Kernel::G => (-2.0 * TAIL_CUT).exp() / 2.0,
            Kernel::H => 2.0 * TWO_PLUS_SQRT2.sqrt() * (-TAIL_CUT / 2.0).exp(),
            Kernel::H2 => 2.0 * (2.0 * TWO_PLUS_SQRT2).sqrt() * (-TAIL_CUT).exp(),
        }
    }
}

/// `∫₀^∞ kernel`: quadrature on `(0, TAIL_CUT]` plus the closed-form tail.
pub fn integrate_kernel(kernel: Kernel, tol: f64) -> Result<f64> {
    Ok(integrate(|z| kernel.eval(z), 0.0, TAIL_CUT, tol)? + kernel.tail())
}

/// The first- and second-order constants of both models.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub lambda1_f: f64,
    pub lambda1: f64,
    pub lambda2_f: f64,
    pub lambda2_2n: f64,
}

/// `λ₁ᶠ = π²/6`, `λ₁ = π²/18`, `λ₂ᶠ = π√(2+√2)` in closed form and the
/// two-neighbour `λ₂ = ∫h₂` by quadrature.
pub fn constants() -> Result<Constants> {
    Ok(Constants {
        lambda1_f: PI * PI / 6.0,
        lambda1: PI * PI / 18.0,
        lambda2_f: PI * TWO_PLUS_SQRT2.sqrt(),
        lambda2_2n: integrate_kernel(Kernel::H2, 1e-11)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn f_values() {
        assert!((f(2f64.ln()).unwrap() - 2f64.ln()).abs() < 1e-15);
        let z = 1e-6;
        assert!((f(z).unwrap() - (-z.ln() + z / 2.0)).abs() < 1e-11);
        assert!(rel(f(10.0).unwrap(), -(1.0 - (-10f64).exp()).ln()) < 1e-8);
        assert!(f(0.0).is_err() && f(-1.0).is_err());
    }

    #[test]
    fn g_values() {
        let z = 1e-8;
        assert!(rel(g(z).unwrap(), -(z.ln() + z.sqrt()) / 2.0) < 1e-3);
        let r = g(20.0).unwrap() / (-40f64).exp();
        assert!((r - 1.0).abs() < 0.01, "ratio {r}");
        assert!(g(0.0).is_err());
    }

    #[test]
    fn alpha_values() {
        assert!((alpha(1e-8).unwrap() - (1.0 + 5e-5)).abs() < 1e-6);
        assert!((alpha(30.0).unwrap() - 2.0).abs() < 1e-12);
        for i in -40..=30 {
            let a = alpha(10f64.powf(i as f64 / 10.0)).unwrap();
            assert!(a > 1.0 && a <= 2.0);
        }
    }

    #[test]
    fn entropy_functions() {
        let z = 1e-10;
        assert!(rel(h2(z).unwrap() * z.sqrt(), (3.0 * TWO_PLUS_SQRT2).sqrt()) < 1e-4);
        for &z in &[1e-6, 0.3, 1.0, 7.0, 40.0] {
            assert!(rel(h_mod(z).unwrap(), h_mod_from_f(z).unwrap()) < 1e-12);
            assert!(rel(h(z).unwrap().powi(2) * z.exp_m1(), TWO_PLUS_SQRT2) < 1e-14);
        }
    }

    #[test]
    fn decreasing_on_grid() {
        let grid: Vec<f64> = (-60..=17).map(|i| 10f64.powf(i as f64 / 10.0)).collect();
        for k in [Kernel::F, Kernel::G, Kernel::H, Kernel::H2] {
            for w in grid.windows(2) {
                assert!(k.eval(w[1]) < k.eval(w[0]), "{k:?} at {}", w[0]);
            }
        }
        for w in grid.windows(2) {
            assert!(h_mod(w[1]).unwrap() < h_mod(w[0]).unwrap());
        }
    }

    #[test]
    fn small_z_log_bound_for_g() {
        for i in 1..=200 {
            let z = 0.01 * i as f64 / 200.0;
            assert!(g(z).unwrap() < -0.5 * z.ln());
        }
    }

    #[test]
    fn h2_to_h_ratio_bounded() {
        // Both ends: ratio → √3 at 0 and decays like e^{-z/2} at infinity.
        let r0 = h2(1e-9).unwrap() / h(1e-9).unwrap();
        assert!((r0 - 3f64.sqrt()).abs() < 1e-3);
        let r1 = h2(30.0).unwrap() / h(30.0).unwrap() / (-15f64).exp();
        assert!((r1 - 2.0 * SQRT_2).abs() < 1e-3);
    }

    #[test]
    fn xi_functions() {
        assert_eq!(xi_f(2.0).unwrap(), 2.0);
        assert!((xi(0.5 + 1e-6).unwrap() - 1.0).abs() < 1e-3);
        assert!((xi(1.0).unwrap() - 3.0).abs() < 1e-15);
        assert!(xi(0.5).is_err() && xi_f(1.0).is_err());
    }

    #[test]
    fn integrals() {
        let l = constants().unwrap();
        assert!((integrate_kernel(Kernel::F, 1e-10).unwrap() - l.lambda1_f).abs() < 1e-8);
        assert!((integrate_kernel(Kernel::G, 1e-10).unwrap() - l.lambda1).abs() < 1e-8);
        assert!((integrate_kernel(Kernel::H, 1e-10).unwrap() - l.lambda2_f).abs() < 1e-8);
        assert!((l.lambda2_2n - 7.054547).abs() < 5e-6);
        assert!((l.lambda2_f - 5.8049063).abs() < 1e-4);
        assert!((l.lambda1 - 0.54831).abs() < 1e-5);
    }

    #[test]
    fn integrate_infinite_upper() {
        let v = integrate(f_raw, 0.0, f64::INFINITY, 1e-10).unwrap();
        assert!((v - PI * PI / 6.0).abs() < 1e-8);
        assert!(integrate(f_raw, 1.0, 0.5, 1e-8).is_err());
    }

    #[test]
    fn traversability_small_cases() {
        let u = 0.3;
        assert_eq!(traversability_closed_form(0, u).unwrap(), 1.0);
        assert!((traversability_closed_form(1, u).unwrap() - u).abs() < 1e-16);
        assert_eq!(traversability_recurrence(1, u).unwrap(), u);
    }

    proptest! {
        #[test]
        fn conjugate_roots(u in 1e-6f64..0.999999) {
            let (b, bb) = (beta(u).unwrap(), beta_bar(u).unwrap());
            prop_assert!((b + bb - u).abs() < 1e-15);
            prop_assert!((b * bb + u * (1.0 - u)).abs() < 1e-15);
            prop_assert!(b > 0.0 && b < 1.0 && bb < 0.0 && bb >= -1.0 / 3.0 - 1e-15);
        }

        #[test]
        fn g_below_f(z in 1e-6f64..30.0) {
            prop_assert!(g(z).unwrap() <= f(z).unwrap());
        }

        #[test]
        fn exp_minus_f_identity(z in 1e-6f64..50.0) {
            prop_assert!(((-f(z).unwrap()).exp() - (1.0 - (-z).exp())).abs() < 1e-14);
        }

        #[test]
        fn xi_root_residual(x in 0.55f64..1.0) {
            let t = xi_root(x).unwrap();
            let r = (2.0 * x - 1.0) * t * t - t * (1.0 - x) - 1.0;
            prop_assert!(t >= 1.0);
            prop_assert!(r.abs() < 1e-12 * (1.0 + t + (2.0 * x - 1.0) * t * t));
        }

        #[test]
        fn xi_f_range(x in 1.0001f64..2.0) {
            let v = xi_f(x).unwrap();
            prop_assert!((1.0..=2.0).contains(&v));
        }
    }
}
