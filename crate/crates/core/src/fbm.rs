//! Fractional Brownian motion: covariance, increment inner products and
//! exact Gaussian samplers on uniform grids.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::cholesky_lower;
use crate::rng::{fill_normal, par_map_indexed, path_stream};

/// Hurst index, strictly inside (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct HurstParam(f64);

impl HurstParam {
    pub fn new(h: f64) -> Result<Self> {
        if h > 0.0 && h < 1.0 {
            Ok(HurstParam(h))
        } else {
            Err(Error::Domain(format!(
                "Hurst parameter must lie in the open interval (0,1), got {h}"
            )))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// 2H, the exponent that appears everywhere in the covariance.
    #[inline]
    pub fn two_h(self) -> f64 {
        2.0 * self.0
    }
}

impl TryFrom<f64> for HurstParam {
    type Error = Error;
    fn try_from(h: f64) -> Result<Self> {
        HurstParam::new(h)
    }
}

impl From<HurstParam> for f64 {
    fn from(h: HurstParam) -> f64 {
        h.0
    }
}

impl fmt::Display for HurstParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Uniform grid `0 = t_0 < ... < t_{n-1} = span` with `span <= 1`.
///
/// `span` is 1 for every grid a sampler produces; shorter spans only arise
/// from [`rescale_selfsimilar`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    n: usize,
    span: f64,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self> {
        Grid::with_span(n, 1.0)
    }

    pub fn with_span(n: usize, span: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Domain(format!("grid needs at least 2 points, got {n}")));
        }
        if !(span > 0.0 && span <= 1.0) {
            return Err(Error::Domain(format!("grid span must lie in (0,1], got {span}")));
        }
        Ok(Grid { n, span })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn span(&self) -> f64 {
        self.span
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.span / (self.n - 1) as f64
    }

    /// The i-th grid point; the last point is exactly `span`.
    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        if i == self.n - 1 {
            self.span
        } else {
            self.span * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    /// Index of the grid point equal to `t` (to 1e-12 relative), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.step();
        let i = x.round();
        if i < 0.0 || i as usize >= self.n {
            return None;
        }
        ((x - i).abs() <= 1e-9).then_some(i as usize)
    }
}

/// One sampled path on a grid; `values[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct FbmPath {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl FbmPath {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Domain(format!(
                "path has {} values for a {}-point grid",
                values.len(),
                grid.len()
            )));
        }
        Ok(FbmPath { grid, values })
    }

    /// Builds a path by evaluating `f` at the grid points. Used mostly for
    /// deterministic test paths.
    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        FbmPath {
            grid,
            values: (0..grid.len()).map(|i| f(grid.point(i))).collect(),
        }
    }

    pub fn zero(grid: Grid) -> Self {
        FbmPath {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Piecewise-linear interpolation; `t` is clamped to the grid span.
    pub fn eval(&self, t: f64) -> f64 {
        let h = self.grid.step();
        let x = (t / h).clamp(0.0, (self.grid.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.grid.len() - 2);
        let frac = x - i as f64;
        self.values[i] + frac * (self.values[i + 1] - self.values[i])
    }

    pub fn scaled(&self, c: f64) -> Self {
        FbmPath {
            grid: self.grid,
            values: self.values.iter().map(|v| c * v).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerTag {
    Cholesky,
    Circulant,
    PaleyWiener,
}

impl fmt::Display for SamplerTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerTag::Cholesky => "cholesky",
            SamplerTag::Circulant => "circulant",
            SamplerTag::PaleyWiener => "paley_wiener",
        })
    }
}

impl std::str::FromStr for SamplerTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(SamplerTag::Cholesky),
            "circulant" => Ok(SamplerTag::Circulant),
            "paley_wiener" | "paley-wiener" => Ok(SamplerTag::PaleyWiener),
            _ => Err(Error::Domain(format!("unknown sampler '{s}'"))),
        }
    }
}

/// Any numerical regularization applied while sampling. Recorded in the
/// ensemble sidecar and the run manifest.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Regularization {
    /// Diagonal shift added after a failed Cholesky pivot.
    pub cholesky_shift: Option<f64>,
    /// Number of slightly negative circulant eigenvalues clipped to zero,
    /// and the most negative of them.
    pub clipped_eigenvalues: Option<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub grid: Grid,
    pub h: HurstParam,
    pub seed: u64,
    pub sampler: SamplerTag,
    pub paths: Vec<FbmPath>,
    pub regularization: Regularization,
}

impl PathEnsemble {
    pub fn new(
        grid: Grid,
        h: HurstParam,
        seed: u64,
        sampler: SamplerTag,
        values: Vec<Vec<f64>>,
        regularization: Regularization,
    ) -> Result<Self> {
        let paths = values
            .into_iter()
            .map(|v| FbmPath::new(grid, v))
            .collect::<Result<Vec<_>>>()?;
        Ok(PathEnsemble {
            grid,
            h,
            seed,
            sampler,
            paths,
            regularization,
        })
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

#[inline]
fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} lies outside [0,1]")))
    }
}

#[inline]
pub(crate) fn cov_raw(two_h: f64, t: f64, s: f64) -> f64 {
    0.5 * (t.abs().powf(two_h) + s.abs().powf(two_h) - (t - s).abs().powf(two_h))
}

#[inline]
pub(crate) fn increment_inner_raw(two_h: f64, t1: f64, t2: f64, s1: f64, s2: f64) -> f64 {
    0.5 * ((t2 - s1).abs().powf(two_h) + (t1 - s2).abs().powf(two_h)
        - (t2 - s2).abs().powf(two_h)
        - (t1 - s1).abs().powf(two_h))
}

/// `E[B_t B_s] = (|t|^{2H} + |s|^{2H} - |t-s|^{2H}) / 2`.
pub fn cov(h: HurstParam, t: f64, s: f64) -> Result<f64> {
    check_unit("t", t)?;
    check_unit("s", s)?;
    Ok(cov_raw(h.two_h(), t, s))
}

/// `E[(B_{t2} - B_{t1})(B_{s2} - B_{s1})]`, the inner product of the
/// indicators of `[t1,t2]` and `[s1,s2]`.
pub fn increment_inner(h: HurstParam, t1: f64, t2: f64, s1: f64, s2: f64) -> Result<f64> {
    for (name, x) in [("t1", t1), ("t2", t2), ("s1", s1), ("s2", s2)] {
        check_unit(name, x)?;
    }
    if t1 > t2 || s1 > s2 {
        return Err(Error::Domain(format!(
            "interval endpoints out of order: [{t1},{t2}], [{s1},{s2}]"
        )));
    }
    Ok(increment_inner_raw(h.two_h(), t1, t2, s1, s2))
}

/// Covariance matrix of `(B_{t_1}, ..., B_{t_{n-1}})`, row-major. The point
/// `t_0 = 0` is left out because its row vanishes.
pub fn covariance_matrix(h: HurstParam, grid: &Grid) -> Vec<f64> {
    let m = grid.len() - 1;
    let two_h = h.two_h();
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        let t = grid.point(i + 1);
        for j in 0..=i {
            let v = cov_raw(two_h, t, grid.point(j + 1));
            c[i * m + j] = v;
            c[j * m + i] = v;
        }
    }
    c
}

fn check_count(count: usize) -> Result<()> {
    if count == 0 {
        return Err(Error::Domain("ensemble size must be positive".into()));
    }
    Ok(())
}

/// Lower Cholesky factor of the grid covariance, retrying once with a
/// diagonal shift of `1e-12 * trace / n` if a pivot fails.
pub fn cholesky_factor(h: HurstParam, grid: &Grid) -> Result<(Vec<f64>, Option<f64>)> {
    let m = grid.len() - 1;
    let mut c = covariance_matrix(h, grid);
    match cholesky_lower(&c, m) {
        Ok(l) => Ok((l, None)),
        Err(Error::NonPositivePivot { .. }) => {
            let trace: f64 = (0..m).map(|i| c[i * m + i]).sum();
            let shift = 1e-12 * trace / m as f64;
            for i in 0..m {
                c[i * m + i] += shift;
            }
            let l = cholesky_lower(&c, m)?;
            Ok((l, Some(shift)))
        }
        Err(e) => Err(e),
    }
}

/// Exact Gaussian sampling through the Cholesky factor of the grid
/// covariance. Path `i` uses stream `(seed, i)`.
pub fn sample_cholesky(h: HurstParam, grid: Grid, count: usize, seed: u64) -> Result<PathEnsemble> {
    check_count(count)?;
    let (l, shift) = cholesky_factor(h, &grid)?;
    let m = grid.len() - 1;
    let values = par_map_indexed(count, |idx| {
        let mut rng = path_stream(seed, idx as u64);
        let mut z = vec![0.0; m];
        fill_normal(&mut rng, &mut z);
        let mut v = vec![0.0; m + 1];
        for i in 0..m {
            let row = &l[i * m..i * m + i + 1];
            v[i + 1] = row.iter().zip(&z).map(|(a, b)| a * b).sum();
        }
        v
    });
    PathEnsemble::new(
        grid,
        h,
        seed,
        SamplerTag::Cholesky,
        values,
        Regularization {
            cholesky_shift: shift,
            ..Default::default()
        },
    )
}

/// Autocovariance of fractional Gaussian noise with step `dt` at integer lag `k`.
pub fn fgn_autocovariance(h: HurstParam, dt: f64, k: usize) -> f64 {
    let two_h = h.two_h();
    let k = k as f64;
    let core = if k == 0.0 {
        1.0
    } else {
        0.5 * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).powf(two_h))
    };
    dt.powf(two_h) * core
}

/// Eigenvalues of the circulant embedding (length `2m`) of the first `m`
/// fGn autocovariances.
pub fn circulant_eigenvalues(h: HurstParam, dt: f64, m: usize) -> Vec<f64> {
    let len = 2 * m;
    let mut row: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); len];
    for (j, r) in row.iter_mut().enumerate() {
        let lag = if j <= m { j } else { len - j };
        *r = Complex64::new(fgn_autocovariance(h, dt, lag), 0.0);
    }
    let fft = FftPlanner::new().plan_fft_forward(len);
    fft.process(&mut row);
    row.iter().map(|c| c.re).collect()
}

const EMBEDDING_ABORT: f64 = -1e-9;

/// Davies–Harte style sampler: fGn increments from the circulant embedding
/// of their autocovariance, summed into paths.
pub fn sample_circulant(h: HurstParam, grid: Grid, count: usize, seed: u64) -> Result<PathEnsemble> {
    check_count(count)?;
    let m = grid.len() - 1;
    let len = 2 * m;
    let mut lambda = circulant_eigenvalues(h, grid.step(), m);
    let min = lambda.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < EMBEDDING_ABORT {
        return Err(Error::Embedding { min_eigenvalue: min });
    }
    let mut clipped = 0usize;
    for l in lambda.iter_mut() {
        if *l < 0.0 {
            *l = 0.0;
            clipped += 1;
        }
    }
    let scale: Vec<f64> = lambda.iter().map(|l| (l / len as f64).sqrt()).collect();
    let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(len);
    let values = par_map_indexed(count, |idx| {
        let mut rng = path_stream(seed, idx as u64);
        let mut z = vec![0.0; 2 * len];
        fill_normal(&mut rng, &mut z);
        let mut buf: Vec<Complex64> = (0..len)
            .map(|k| Complex64::new(scale[k] * z[2 * k], scale[k] * z[2 * k + 1]))
            .collect();
        fft.process(&mut buf);
        let mut v = vec![0.0; m + 1];
        for i in 0..m {
            v[i + 1] = v[i] + buf[i].re;
        }
        v
    });
    let regularization = Regularization {
        clipped_eigenvalues: (clipped > 0).then_some((clipped, min)),
        ..Default::default()
    };
    PathEnsemble::new(grid, h, seed, SamplerTag::Circulant, values, regularization)
}

/// Maps a path through the self-similarity `B_{c u} = c^H B_u`: the grid
/// span is multiplied by `factor` and the values by `factor^H`.
pub fn rescale_selfsimilar(h: HurstParam, path: &FbmPath, factor: f64) -> Result<FbmPath> {
    if !(factor > 0.0) {
        return Err(Error::Domain(format!("rescale factor must be positive, got {factor}")));
    }
    let span = path.grid.span() * factor;
    if span > 1.0 + 1e-12 {
        return Err(Error::Domain(format!("rescaled grid span {span} exits [0,1]")));
    }
    let grid = Grid::with_span(path.grid.len(), span.min(1.0))?;
    let c = factor.powf(h.value());
    Ok(FbmPath {
        grid,
        values: path.values.iter().map(|v| c * v).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn hurst_rejects_boundary() {
        for h in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(HurstParam::new(h).is_err());
        }
    }

    #[test]
    fn cov_examples() {
        assert!((cov(hp(0.5), 0.3, 0.7).unwrap() - 0.3).abs() < 1e-15);
        for h in [0.1, 0.5, 0.9] {
            assert!((cov(hp(h), 1.0, 1.0).unwrap() - 1.0).abs() < 1e-15);
        }
        // 40-digit reference value
        assert!((cov(hp(0.75), 0.2, 0.7).unwrap() - 0.160_775_673_540_285_35).abs() < 1e-14);
        assert!(cov(hp(0.5), 1.2, 0.1).is_err());
    }

    #[test]
    fn increment_inner_examples() {
        let h = hp(0.75);
        assert!((increment_inner(h, 0.0, 0.4, 0.0, 0.9).unwrap() - cov(h, 0.4, 0.9).unwrap()).abs() < 1e-15);
        assert!((increment_inner(hp(0.5), 0.2, 0.6, 0.4, 0.9).unwrap() - 0.2).abs() < 1e-15);
        assert!((increment_inner(h, 0.1, 0.4, 0.2, 0.8).unwrap() - 0.195_249_874_129_345_17).abs() < 1e-14);
        assert!(increment_inner(h, 0.5, 0.4, 0.2, 0.8).is_err());
        assert!(increment_inner(h, 0.1, 0.4, 0.2, 1.8).is_err());
    }

    #[test]
    fn grid_points_are_exact_at_ends() {
        let g = Grid::new(7).unwrap();
        assert_eq!(g.point(0), 0.0);
        assert_eq!(g.point(6), 1.0);
        assert_eq!(g.index_of(0.5), Some(3));
        assert_eq!(g.index_of(0.51), None);
        assert!(Grid::new(1).is_err());
    }

    #[test]
    fn cholesky_paths_start_at_zero() {
        let e = sample_cholesky(hp(0.3), Grid::new(3).unwrap(), 5, 9).unwrap();
        assert!(e.paths.iter().all(|p| p.values[0] == 0.0));
        let c = covariance_matrix(hp(0.5), &Grid::new(3).unwrap());
        assert_eq!(c, vec![0.5, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn samplers_are_deterministic() {
        let g = Grid::new(33).unwrap();
        for f in [sample_cholesky, sample_circulant] {
            let a = f(hp(0.7), g, 10, 5).unwrap();
            let b = f(hp(0.7), g, 10, 5).unwrap();
            let c = f(hp(0.7), g, 10, 6).unwrap();
            assert_eq!(a, b);
            assert_ne!(a.paths, c.paths);
        }
    }

    #[test]
    fn circulant_embedding_is_nonnegative() {
        for h in [0.1, 0.25, 0.5, 0.75, 0.95] {
            let l = circulant_eigenvalues(hp(h), 1.0 / 256.0, 256);
            let max = l.iter().cloned().fold(0.0, f64::max);
            assert!(l.iter().all(|&x| x > -1e-12 * max), "h={h}");
        }
    }

    #[test]
    fn fgn_lag_one_matches_closed_form() {
        let h = hp(0.75);
        let r = fgn_autocovariance(h, 0.1, 1) / fgn_autocovariance(h, 0.1, 0);
        assert!((r - (2f64.powf(0.5) - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn rescale_identity_and_zero() {
        let g = Grid::with_span(9, 0.25).unwrap();
        let p = FbmPath::from_fn(g, |t| t.sin());
        assert_eq!(rescale_selfsimilar(hp(0.3), &p, 1.0).unwrap(), p);
        let z = rescale_selfsimilar(hp(0.3), &FbmPath::zero(g), 4.0).unwrap();
        assert!(z.values.iter().all(|&v| v == 0.0));
        assert_eq!(z.grid.span(), 1.0);
        assert!(rescale_selfsimilar(hp(0.3), &p, 5.0).is_err());
    }

    #[test]
    fn interpolation_is_piecewise_linear() {
        let g = Grid::new(5).unwrap();
        let p = FbmPath::from_fn(g, |t| t * t);
        assert!((p.eval(0.125) - 0.5 * (0.0 + 0.0625)).abs() < 1e-15);
        assert_eq!(p.eval(1.0), 1.0);
    }
}
