//! The Sobolev pseudo-norm functional
//! `F = ∬_{[0,1]²} |B_t - B_s|^{2p} / |t - s|^q dt ds`, the path variance
//! `V_[a,b]` and the Li–Shao small-ball exponent.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::fbm::{FbmPath, HurstParam, PathEnsemble};
use crate::rng::par_map_indexed;

/// The standing constraint, spelled as in error messages.
pub const STANDING_CONSTRAINT: &str = "(2p−2)H>q−1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SobolevParams {
    pub p: f64,
    pub q: f64,
    pub h: HurstParam,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub params: SobolevParams,
    /// `p > 0`, `0 <= q < 1 + 2pH`, `q != 1`.
    pub li_shao_admissible: bool,
    /// Conditions of the Li–Shao regime that fail, if any.
    pub li_shao_failures: Vec<String>,
}

impl SobolevParams {
    /// Checks `p, q >= 0` and the standing constraint.
    pub fn new(p: f64, q: f64, h: HurstParam) -> Result<Self> {
        validate_params(p, q, h).map(|r| r.params)
    }

    #[inline]
    pub(crate) fn two_p(&self) -> f64 {
        2.0 * self.p
    }
}

pub fn validate_params(p: f64, q: f64, h: HurstParam) -> Result<ValidationReport> {
    if !(p >= 0.0 && p.is_finite()) || !(q >= 0.0 && q.is_finite()) {
        return Err(Error::Domain(format!(
            "p and q must be finite and nonnegative, got p={p}, q={q}"
        )));
    }
    let hv = h.value();
    let lhs = (2.0 * p - 2.0) * hv;
    let rhs = q - 1.0;
    if !(lhs > rhs) {
        return Err(Error::Constraint(format!(
            "{STANDING_CONSTRAINT} fails: (2p−2)H = {lhs} is not greater than q−1 = {rhs}"
        )));
    }
    let mut failures = Vec::new();
    if !(p > 0.0) {
        failures.push("p > 0".to_string());
    }
    if !(q < 1.0 + 2.0 * p * hv) {
        failures.push("q < 1+2pH".to_string());
    }
    if q == 1.0 {
        failures.push("q ≠ 1".to_string());
    }
    Ok(ValidationReport {
        params: SobolevParams { p, q, h },
        li_shao_admissible: failures.is_empty(),
        li_shao_failures: failures,
    })
}

/// Two-point Gauss–Legendre nodes on [0,1]; both weights are 1/2.
const GAUSS: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

#[derive(Clone, Copy)]
enum Power {
    Two,
    Int(i32),
    Real(f64),
}

impl Power {
    fn new(e: f64) -> Self {
        if e == 2.0 {
            Power::Two
        } else if e.fract() == 0.0 && e.abs() < 64.0 {
            Power::Int(e as i32)
        } else {
            Power::Real(e)
        }
    }

    #[inline]
    fn abs_pow(self, x: f64) -> f64 {
        match self {
            Power::Two => x * x,
            Power::Int(k) => x.abs().powi(k),
            Power::Real(e) => x.abs().powf(e),
        }
    }
}

/// Reusable lag tables for one `(grid length, step, q)` combination.
struct FQuadrature {
    h: f64,
    /// `lag_weight[4 * d + 2a + b]` = `(t - s)^{-q}` for cell lag `d >= 1`
    /// and Gauss nodes `a` (in t) and `b` (in s).
    lag_weight: Vec<f64>,
}

impl FQuadrature {
    fn new(cells: usize, h: f64, q: f64) -> Self {
        let mut lag_weight = vec![0.0; 4 * cells];
        for d in 1..cells {
            for a in 0..2 {
                for b in 0..2 {
                    let gap = h * (d as f64 + GAUSS[a] - GAUSS[b]);
                    lag_weight[4 * d + 2 * a + b] = if q == 0.0 { 1.0 } else { gap.powf(-q) };
                }
            }
        }
        FQuadrature { h, lag_weight }
    }
}

/// Path values at the two Gauss nodes of every cell.
fn gauss_values(values: &[f64]) -> Vec<[f64; 2]> {
    values
        .windows(2)
        .map(|w| [w[0] + GAUSS[0] * (w[1] - w[0]), w[0] + GAUSS[1] * (w[1] - w[0])])
        .collect()
}

/// `∬_{s<t, both in one cell} |m (t-s)|^{2p} (t-s)^{-q}` for slope `m`.
fn diagonal_cell(pow: Power, slope: f64, h: f64, alpha: f64) -> f64 {
    pow.abs_pow(slope) * h.powf(alpha + 2.0) / ((alpha + 1.0) * (alpha + 2.0))
}

fn f_triangle(path: &FbmPath, params: &SobolevParams, quad: &FQuadrature) -> f64 {
    let v = &path.values;
    let cells = v.len() - 1;
    let h = quad.h;
    let pow = Power::new(params.two_p());
    let alpha = params.two_p() - params.q;
    let g = gauss_values(v);
    let mut diag = 0.0;
    for i in 0..cells {
        diag += diagonal_cell(pow, (v[i + 1] - v[i]) / h, h, alpha);
    }
    let mut off = 0.0;
    for i in 1..cells {
        let gi = g[i];
        let mut row = 0.0;
        for j in 0..i {
            let gj = g[j];
            let w = &quad.lag_weight[4 * (i - j)..4 * (i - j) + 4];
            row += pow.abs_pow(gi[0] - gj[0]) * w[0]
                + pow.abs_pow(gi[0] - gj[1]) * w[1]
                + pow.abs_pow(gi[1] - gj[0]) * w[2]
                + pow.abs_pow(gi[1] - gj[1]) * w[3];
        }
        off += row;
    }
    diag + 0.25 * h * h * off
}

/// Quadrature value of F for a piecewise-linear path: twice the integral
/// over `{s < t}`. Cells on the diagonal are integrated exactly (the path is
/// linear there); the others use a 2x2 Gauss rule.
pub fn compute_f(path: &FbmPath, params: &SobolevParams) -> f64 {
    let quad = FQuadrature::new(path.values.len() - 1, path.grid.step(), params.q);
    2.0 * f_triangle(path, params, &quad)
}

/// The same quadrature over the full square, every ordered cell pair
/// visited. Agrees with [`compute_f`] up to summation order.
pub fn compute_f_full_square(path: &FbmPath, params: &SobolevParams) -> f64 {
    let v = &path.values;
    let cells = v.len() - 1;
    let h = path.grid.step();
    let quad = FQuadrature::new(cells, h, params.q);
    let pow = Power::new(params.two_p());
    let alpha = params.two_p() - params.q;
    let g = gauss_values(v);
    let mut total = 0.0;
    for i in 0..cells {
        for j in 0..cells {
            if i == j {
                total += 2.0 * diagonal_cell(pow, (v[i + 1] - v[i]) / h, h, alpha);
                continue;
            }
            let (hi, lo, swap) = if i > j { (i, j, false) } else { (j, i, true) };
            let w = &quad.lag_weight[4 * (hi - lo)..4 * (hi - lo) + 4];
            let mut cell = 0.0;
            for a in 0..2 {
                for b in 0..2 {
                    let (ta, sb) = if swap { (b, a) } else { (a, b) };
                    cell += pow.abs_pow(g[i][a] - g[j][b]) * w[2 * ta + sb];
                }
            }
            total += 0.25 * h * h * cell;
        }
    }
    total
}

/// F for every path of an ensemble, in path order.
pub fn compute_f_batch(ensemble: &PathEnsemble, params: &SobolevParams) -> Vec<f64> {
    let quad = FQuadrature::new(ensemble.grid.len() - 1, ensemble.grid.step(), params.q);
    par_map_indexed(ensemble.len(), |i| 2.0 * f_triangle(&ensemble.paths[i], params, &quad))
}

/// `E|Z|^{2p}` for a standard Gaussian `Z`.
pub fn gaussian_abs_moment(two_p: f64) -> f64 {
    let p = 0.5 * two_p;
    2f64.powf(p) * gamma(p + 0.5) / std::f64::consts::PI.sqrt()
}

/// `E F = m_{2p} · 2 / ((2pH - q + 1)(2pH - q + 2))`.
pub fn expected_f(params: &SobolevParams) -> Result<f64> {
    let e = params.two_p() * params.h.value() - params.q;
    if !(e > -1.0) {
        return Err(Error::Domain(format!(
            "2pH − q = {e} must exceed −1 for E F to be finite"
        )));
    }
    Ok(gaussian_abs_moment(params.two_p()) * 2.0 / ((e + 1.0) * (e + 2.0)))
}

/// Trapezoid-weighted time variance of the path over `[a, b]`; both ends
/// must be grid points.
pub fn path_variance(path: &FbmPath, a: f64, b: f64) -> Result<f64> {
    let (ia, ib) = interval_indices(path, a, b)?;
    Ok(variance_on(&path.values[ia..=ib]))
}

pub(crate) fn interval_indices(path: &FbmPath, a: f64, b: f64) -> Result<(usize, usize)> {
    if !(0.0 <= a && a < b && b <= path.grid.span()) {
        return Err(Error::Domain(format!("bad interval [{a}, {b}]")));
    }
    let ia = path.grid.index_of(a);
    let ib = path.grid.index_of(b);
    match (ia, ib) {
        (Some(ia), Some(ib)) => Ok((ia, ib)),
        _ => Err(Error::Domain(format!("interval ends {a}, {b} are not grid points"))),
    }
}

/// Equal-step trapezoid variance of `v` (normalized by the interval length).
pub(crate) fn variance_on(v: &[f64]) -> f64 {
    let m = v.len() - 1;
    let w = |i: usize| if i == 0 || i == m { 0.5 } else { 1.0 };
    let mean = v.iter().enumerate().map(|(i, x)| w(i) * x).sum::<f64>() / m as f64;
    let var = v
        .iter()
        .enumerate()
        .map(|(i, x)| w(i) * (x - mean) * (x - mean))
        .sum::<f64>()
        / m as f64;
    if var < 0.0 && var > -1e-14 {
        0.0
    } else {
        var
    }
}

pub fn path_variance_batch(ensemble: &PathEnsemble, a: f64, b: f64) -> Result<Vec<f64>> {
    let first = ensemble
        .paths
        .first()
        .ok_or_else(|| Error::Domain("empty ensemble".into()))?;
    let (ia, ib) = interval_indices(first, a, b)?;
    Ok(par_map_indexed(ensemble.len(), |i| {
        variance_on(&ensemble.paths[i].values[ia..=ib])
    }))
}

/// `(pH - max{0, q-1})^{-1}`.
pub fn li_shao_exponent(params: &SobolevParams) -> Result<f64> {
    let d = params.p * params.h.value() - (params.q - 1.0).max(0.0);
    if !(d > 0.0) {
        return Err(Error::Domain(format!("pH − max{{0, q−1}} = {d} must be positive")));
    }
    Ok(1.0 / d)
}

/// One value per path with `#`-prefixed header comments echoing parameters.
pub fn write_values_csv<W: Write>(mut out: W, comments: &[String], column: &str, values: &[f64]) -> Result<()> {
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    writeln!(out, "path_index,{column}")?;
    for (i, v) in values.iter().enumerate() {
        writeln!(out, "{i},{v:.17e}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::Grid;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    fn sp(p: f64, q: f64, h: f64) -> SobolevParams {
        SobolevParams::new(p, q, hp(h)).unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(validate_params(2.0, 0.0, hp(0.5)).is_ok());
        assert!(validate_params(1.0, 0.5, hp(0.25)).is_ok());
        match validate_params(1.0, 1.5, hp(0.5)) {
            Err(Error::Constraint(msg)) => assert!(msg.contains(STANDING_CONSTRAINT)),
            other => panic!("unexpected {other:?}"),
        }
        let r = validate_params(2.0, 1.0, hp(0.75)).unwrap();
        assert!(!r.li_shao_admissible);
        assert!(validate_params(-1.0, 0.0, hp(0.5)).is_err());
    }

    #[test]
    fn f_of_zero_path() {
        let z = FbmPath::zero(Grid::new(17).unwrap());
        assert_eq!(compute_f(&z, &sp(1.5, 0.3, 0.6)), 0.0);
    }

    #[test]
    fn f_of_identity_path() {
        let g = Grid::new(65).unwrap();
        let id = FbmPath::from_fn(g, |t| t);
        assert!((compute_f(&id, &sp(1.0, 0.0, 0.5)) - 1.0 / 6.0).abs() < 1e-12);
        assert!((compute_f(&id, &sp(1.0, 0.5, 0.5)) - 2.0 / (2.5 * 3.5)).abs() < 1e-4);
    }

    #[test]
    fn triangle_and_square_agree() {
        let g = Grid::new(40).unwrap();
        let path = FbmPath::from_fn(g, |t| (7.0 * t).sin() + t * t);
        for params in [sp(1.0, 0.0, 0.5), sp(1.5, 0.4, 0.7), sp(2.0, 0.5, 0.3)] {
            let a = compute_f(&path, &params);
            let b = compute_f_full_square(&path, &params);
            assert!((a - b).abs() < 1e-12 * a, "{a} vs {b}");
        }
    }

    #[test]
    fn grid_refinement_is_stable() {
        let f = |t: f64| (3.0 * t).sin() + 0.5 * (11.0 * t).cos();
        for params in [sp(1.0, 0.0, 0.5), sp(2.0, 0.5, 0.5), sp(1.0, 0.5, 0.25)] {
            let a = compute_f(&FbmPath::from_fn(Grid::new(257).unwrap(), f), &params);
            let b = compute_f(&FbmPath::from_fn(Grid::new(513).unwrap(), f), &params);
            assert!(((a - b) / b).abs() < 0.02);
        }
    }

    #[test]
    fn expected_f_examples() {
        assert!((expected_f(&sp(1.0, 0.0, 0.5)).unwrap() - 1.0 / 3.0).abs() < 1e-14);
        assert!((expected_f(&sp(2.0, 0.0, 0.5)).unwrap() - 0.5).abs() < 1e-14);
        assert!((expected_f(&sp(1.0, 0.0, 0.75)).unwrap() - 2.0 / (2.5 * 3.5)).abs() < 1e-14);
    }

    #[test]
    fn path_variance_examples() {
        let g = Grid::new(1001).unwrap();
        let c = FbmPath::from_fn(g, |_| 3.25);
        assert_eq!(path_variance(&c, 0.0, 1.0).unwrap(), 0.0);
        let id = FbmPath::from_fn(g, |t| t);
        assert!((path_variance(&id, 0.0, 1.0).unwrap() - 1.0 / 12.0).abs() < 1e-6);
        assert!((path_variance(&id, 0.2, 0.7).unwrap() - 0.25 / 12.0).abs() < 1e-6);
        assert!(path_variance(&id, 0.7, 0.2).is_err());
        assert!(path_variance(&id, 0.0, 0.0005).is_err());
    }

    #[test]
    fn li_shao_examples() {
        assert_eq!(li_shao_exponent(&sp(2.0, 0.0, 0.5)).unwrap(), 1.0);
        let p = SobolevParams {
            p: 1.0,
            q: 1.25,
            h: hp(0.5),
        };
        assert_eq!(li_shao_exponent(&p).unwrap(), 4.0);
        assert_eq!(li_shao_exponent(&sp(2.0, 0.0, 0.25)).unwrap(), 2.0);
    }
}
