//! Special functions and numeric utilities shared by every closed form:
//! Gaussian Q, modified Bessel I, generalized Marcum Q, the non-central
//! chi-squared density, a bracketing root-finder and adaptive quadrature.
//!
//! Everything here is a pure function of its arguments and safe to call
//! concurrently.

use crate::error::{Error, Result};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma_ur, ln_gamma};

/// Convergence budget for iterative routines.
#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_iter: usize,
}

impl Tolerance {
    pub fn new(abs_tol: f64, rel_tol: f64, max_iter: usize) -> Result<Self> {
        if !(abs_tol > 0.0) || !(rel_tol > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        if max_iter == 0 {
            return Err(Error::config("max_iter must be at least 1"));
        }
        Ok(Self { abs_tol, rel_tol, max_iter })
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self { abs_tol: 1e-12, rel_tol: 1e-12, max_iter: 200 }
    }
}

/// Clamp a computed probability to `[0, 1]`.
///
/// Values that stray outside by more than `1e-15` are still clamped; the
/// epsilon only exists so that downstream products cannot leave the range
/// through accumulated rounding.
pub const PROBABILITY_EPS: f64 = 1e-15;

pub fn clamp_probability(p: f64) -> f64 {
    if p < PROBABILITY_EPS {
        p.max(0.0)
    } else if p > 1.0 - PROBABILITY_EPS {
        p.min(1.0)
    } else {
        p
    }
}

/// Gaussian tail probability `Q(x) = erfc(x / sqrt(2)) / 2`.
///
/// Monotone decreasing with `Q(0) = 1/2`; deep tails underflow to zero.
pub fn gaussian_q(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::domain(format!("gaussian_q: non-finite argument {x}")));
    }
    Ok(clamp_probability(0.5 * erfc(x / std::f64::consts::SQRT_2)))
}

/// Exponentially scaled modified Bessel function `e^{-x} I_order(x)`.
///
/// The defining series is summed outward from its largest term, so the
/// result stays representable for any `x >= 0` and integer order.
pub fn bessel_i_scaled(order: u32, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::domain(format!("bessel_i: negative argument {x}")));
    }
    let nu = order as f64;
    if x == 0.0 {
        return Ok(if order == 0 { 1.0 } else { 0.0 });
    }
    // Series I_nu(x) = sum_k (x/2)^{2k+nu} / (k! (k+nu)!).
    // Term ratio t_{k+1}/t_k = (x/2)^2 / ((k+1)(k+1+nu)); the largest term
    // sits near k* = (-(nu+1) + sqrt((nu+1)^2 + x^2)) / 2.
    let half = 0.5 * x;
    let kstar = (0.5 * ((-(nu + 1.0)) + ((nu + 1.0).powi(2) + x * x).sqrt())).floor().max(0.0);
    let k0 = kstar as i64;
    let ln_t0 = (2.0 * kstar + nu) * half.ln()
        - ln_gamma(kstar + 1.0)
        - ln_gamma(kstar + nu + 1.0)
        - x;
    let t0 = ln_t0.exp();
    if t0 == 0.0 {
        return Ok(0.0);
    }
    let ratio = |k: f64| (half * half) / ((k + 1.0) * (k + 1.0 + nu));
    let mut sum = t0;
    // upward from k0
    let mut t = t0;
    let mut k = k0 as f64;
    for _ in 0..100_000 {
        t *= ratio(k);
        k += 1.0;
        sum += t;
        if t < sum * 1e-18 {
            break;
        }
    }
    // downward from k0
    t = t0;
    k = k0 as f64;
    while k > 0.0 {
        t /= ratio(k - 1.0);
        k -= 1.0;
        sum += t;
        if t < sum * 1e-18 {
            break;
        }
    }
    Ok(sum)
}

/// Modified Bessel function of the first kind `I_order(x)` for integer order.
///
/// Errors once `e^x` no longer fits in an `f64` (x above roughly 700);
/// callers that need large arguments use [`bessel_i_scaled`].
pub fn bessel_i(order: u32, x: f64) -> Result<f64> {
    let scaled = bessel_i_scaled(order, x)?;
    if scaled == 0.0 {
        return Ok(0.0);
    }
    let ln_val = scaled.ln() + x;
    if ln_val > 709.0 {
        return Err(Error::domain(format!(
            "bessel_i({order}, {x}) overflows f64; use bessel_i_scaled"
        )));
    }
    Ok(ln_val.exp())
}

/// Generalized Marcum Q-function `Q_order(a, b)`.
///
/// Evaluated as the Poisson mixture of regularized upper incomplete gamma
/// tails,
///
/// `Q_M(a,b) = sum_k  Pois(k; a^2/2) * Q_gamma(M + k, b^2/2)`,
///
/// summed outward from the Poisson mode so that every term is a product of
/// two quantities in `[0, 1]`. This stays stable for the large arguments the
/// power-sum statistics produce, where the classical Bessel series
/// overflows.
pub fn marcum_q(order: u32, a: f64, b: f64) -> Result<f64> {
    if order == 0 {
        return Err(Error::domain("marcum_q: order must be >= 1"));
    }
    if !(a >= 0.0) || !(b >= 0.0) {
        return Err(Error::domain(format!("marcum_q: negative argument a={a} b={b}")));
    }
    if b == 0.0 {
        return Ok(1.0);
    }
    let m = order as f64;
    let lambda = 0.5 * a * a;
    let y = 0.5 * b * b;
    if lambda == 0.0 {
        return Ok(clamp_probability(gamma_ur(m, y)));
    }
    // Poisson weights around the mode, by stable two-sided recurrence.
    let k0 = lambda.floor();
    let ln_w0 = -lambda + k0 * lambda.ln() - ln_gamma(k0 + 1.0);
    let w0 = ln_w0.exp();
    let mut total = w0 * gamma_ur(m + k0, y);
    let mut weight_mass = w0;
    // upward
    let mut w = w0;
    let mut k = k0;
    for _ in 0..200_000 {
        w *= lambda / (k + 1.0);
        k += 1.0;
        total += w * gamma_ur(m + k, y);
        weight_mass += w;
        if w < 1e-18 && 1.0 - weight_mass < 1e-16 {
            break;
        }
    }
    // downward
    w = w0;
    k = k0;
    while k > 0.0 {
        w *= k / lambda;
        k -= 1.0;
        total += w * gamma_ur(m + k, y);
        if w < 1e-18 {
            break;
        }
    }
    Ok(clamp_probability(total))
}

/// Density of the non-central chi-squared law with `2 * order` degrees of
/// freedom and non-centrality `lambda`, evaluated at `x`.
pub fn noncentral_chi2_pdf(order: u32, lambda: f64, x: f64) -> Result<f64> {
    if order == 0 {
        return Err(Error::domain("noncentral_chi2_pdf: order must be >= 1"));
    }
    if !(lambda >= 0.0) {
        return Err(Error::domain("noncentral_chi2_pdf: negative non-centrality"));
    }
    if x < 0.0 {
        return Ok(0.0);
    }
    let n = order as f64;
    if lambda == 0.0 {
        // central chi-squared with 2n dof
        let ln_f = (n - 1.0) * x.ln() - 0.5 * x - n * std::f64::consts::LN_2 - ln_gamma(n);
        return Ok(if x == 0.0 && order == 1 { 0.5 } else { ln_f.exp() });
    }
    if x == 0.0 {
        return Ok(if order == 1 { 0.5 * (-0.5 * lambda).exp() } else { 0.0 });
    }
    let arg = (lambda * x).sqrt();
    let scaled = bessel_i_scaled(order - 1, arg)?;
    if scaled == 0.0 {
        return Ok(0.0);
    }
    let ln_f = -0.5 * (x + lambda) + arg + scaled.ln()
        + 0.5 * (n - 1.0) * (x.ln() - lambda.ln())
        - std::f64::consts::LN_2;
    Ok(ln_f.exp())
}

/// Survival function of the same law: `P(X > x) = Q_order(sqrt(lambda), sqrt(x))`.
pub fn noncentral_chi2_sf(order: u32, lambda: f64, x: f64) -> Result<f64> {
    if x <= 0.0 {
        return Ok(1.0);
    }
    marcum_q(order, lambda.sqrt(), x.sqrt())
}

/// Bracketing root-finder (bisection).
///
/// Requires a sign change over `[lo, hi]`. Stops once the bracket is
/// narrower than the tolerance or `|f(mid)| <= abs_tol`.
pub fn find_root<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: Tolerance) -> Result<f64> {
    let (mut lo, mut hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(Error::domain(format!(
            "find_root: no sign change on [{lo}, {hi}] (f(lo)={flo}, f(hi)={fhi})"
        )));
    }
    for _ in 0..tol.max_iter {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid.abs() <= tol.abs_tol
            || (hi - lo) < tol.abs_tol.max(tol.rel_tol * mid.abs())
        {
            return Ok(mid);
        }
        if flo * fmid <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
            flo = fmid;
        }
    }
    Err(Error::convergence(format!(
        "find_root: bracket [{lo}, {hi}] not resolved in {} iterations",
        tol.max_iter
    )))
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance
/// `abs_tol` (default used by callers: 1e-10).
pub fn integrate<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, abs_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::domain("integrate: non-finite interval"));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    Ok(simpson_step(f, a, b, fa, fb, fm, whole, abs_tol, 60))
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, fm, flm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, fb, frm, right, 0.5 * tol, depth - 1)
    }
}

/// `ln C(n, k)` via log-gamma; exact enough for the largest daily horizons
/// (n up to a few thousand).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

/// Binomial pmf `C(n,k) p^k (1-p)^{n-k}`, evaluated in log space so that it
/// survives n in the thousands.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    let ln = ln_choose(n, k) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p();
    ln.exp()
}
