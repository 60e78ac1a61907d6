//! Bessel functions of the first kind for fractional orders in (-1, 1) and
//! their positive real zeros.
//!
//! Three regimes: the power series for small arguments, Miller's backward
//! recurrence (normalized with the Neumann sum for `(x/2)^ν`) in the middle,
//! and Hankel's asymptotic expansion for large arguments.

use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

const SERIES_MAX_X: f64 = 4.0;
const HANKEL_MIN_X: f64 = 25.0;

fn check_order(order: f64) -> Result<()> {
    if order > -1.0 && order < 1.0 && order != 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "Bessel order {order} unsupported; orders must lie in (-1,1) excluding 0"
        )))
    }
}

/// `J_order(x)` for `order` in (-1, 1) \ {0} and `x >= 0`.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    check_order(order)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!(
            "Bessel argument must be finite and nonnegative, got {x}"
        )));
    }
    Ok(if x == 0.0 {
        if order > 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else if x <= SERIES_MAX_X {
        series(order, x)
    } else if x < HANKEL_MIN_X {
        miller(order, x)
    } else {
        hankel(order, x)
    })
}

fn series(nu: f64, x: f64) -> f64 {
    let y = 0.25 * x * x;
    let mut term = (0.5 * x).powf(nu) / gamma(nu + 1.0);
    let mut sum = term;
    for k in 1..200 {
        let k = k as f64;
        term *= -y / (k * (k + nu));
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn miller(nu: f64, x: f64) -> f64 {
    let mut top = (x + 30.0 + 6.0 * x.cbrt()) as usize;
    top += top % 2;
    // coef[j] multiplies J_{nu+2j} in (x/2)^nu = sum_j coef[j] J_{nu+2j}
    let half = top / 2;
    let mut coef = Vec::with_capacity(half + 1);
    coef.push(gamma(nu + 1.0));
    let mut g = gamma(nu + 1.0);
    for j in 1..=half {
        if j > 1 {
            g *= (nu + (j - 1) as f64) / j as f64;
        }
        coef.push((nu + 2.0 * j as f64) * g);
    }
    let mut above = 0.0;
    let mut cur = 1e-300;
    let mut norm = 0.0;
    for k in (0..=top).rev() {
        if k % 2 == 0 {
            norm += coef[k / 2] * cur;
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * (nu + k as f64) / x * cur - above;
        above = cur;
        cur = below;
        if cur.abs() > 1e250 {
            above *= 1e-250;
            cur *= 1e-250;
            norm *= 1e-250;
        }
    }
    cur * (0.5 * x).powf(nu) / norm
}

fn hankel(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut p = 0.0;
    let mut q = 0.0;
    let mut term: f64 = 1.0;
    let mut last = f64::INFINITY;
    for k in 0..200 {
        if term.abs() > last || term.abs() < 1e-17 {
            break;
        }
        last = term.abs();
        match k % 4 {
            0 => p += term,
            1 => q += term,
            2 => p -= term,
            _ => q -= term,
        }
        let j = (2 * k + 1) as f64;
        term *= (mu - j * j) / ((k + 1) as f64 * 8.0 * x);
    }
    let chi = x - (0.5 * nu + 0.25) * std::f64::consts::PI;
    (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

const SCAN_START: f64 = 0.05;
const SCAN_STEP: f64 = 0.1;
const BRACKET_WIDTH: f64 = 1e-13;
const ZERO_TOLERANCE: f64 = 1e-10;

/// First `count` positive zeros of `J_order`, found by a sign-change scan
/// and refined by bisection.
pub fn bessel_j_zeros(order: f64, count: usize) -> Result<Vec<f64>> {
    check_order(order)?;
    if count == 0 {
        return Err(Error::Domain("zero count must be positive".into()));
    }
    let f = |x: f64| bessel_j(order, x).expect("order checked above");
    let mut zeros = Vec::with_capacity(count);
    let mut k = 0u64;
    let mut a = SCAN_START;
    let mut fa = f(a);
    while zeros.len() < count {
        k += 1;
        let b = SCAN_START + SCAN_STEP * k as f64;
        let fb = f(b);
        if fb == 0.0 {
            zeros.push(b);
        } else if fa != 0.0 && fa.signum() != fb.signum() {
            zeros.push(bisect(&f, a, fa, b)?);
        }
        a = b;
        fa = fb;
    }
    Ok(zeros)
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut flo: f64, mut hi: f64) -> Result<f64> {
    while hi - lo > BRACKET_WIDTH {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let residual = f(root).abs();
    if residual < ZERO_TOLERANCE {
        Ok(root)
    } else {
        Err(Error::RootFinding { lo, hi, residual })
    }
}
