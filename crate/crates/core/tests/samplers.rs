use fbm_sobolev::fbm::{cholesky_factor, cov, rescale_selfsimilar, sample_cholesky, sample_circulant};
use fbm_sobolev::paley_wiener::{bessel_zeros, sample_series_default};
use fbm_sobolev::stats::{correlation_with_stderr, covariance_with_stderr, summarize};
use fbm_sobolev::{Grid, HurstParam, PathEnsemble};

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

fn column(e: &PathEnsemble, i: usize) -> Vec<f64> {
    e.paths.iter().map(|p| p.values[i]).collect()
}

#[test]
fn two_point_cholesky_factor() {
    let (l, shift) = cholesky_factor(hp(0.5), &Grid::new(3).unwrap()).unwrap();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    for (got, want) in l.iter().zip([r, 0.0, r, r]) {
        assert!((got - want).abs() < 1e-6, "{l:?}");
    }
    assert!(shift.is_none());
}

#[test]
fn empirical_covariance_at_quarter_and_three_quarters() {
    let grid = Grid::new(5).unwrap();
    for e in [
        sample_cholesky(hp(0.5), grid, 10_000, 11).unwrap(),
        sample_circulant(hp(0.5), grid, 10_000, 12).unwrap(),
    ] {
        assert!(e.paths.iter().all(|p| p.values[0] == 0.0));
        let (c, se) = covariance_with_stderr(&column(&e, 1), &column(&e, 3));
        assert!((c - 0.25).abs() < 3.0 * se, "{} {c} ± {se}", e.sampler);
    }
}

#[test]
fn brownian_increments_are_uncorrelated() {
    let e = sample_circulant(hp(0.5), Grid::new(65).unwrap(), 10_000, 3).unwrap();
    let d = |i: usize| -> Vec<f64> { e.paths.iter().map(|p| p.values[i + 1] - p.values[i]).collect() };
    let (r, se) = correlation_with_stderr(&d(30), &d(31));
    assert!(r.abs() < 3.0 * se, "{r} ± {se}");
}

#[test]
fn long_memory_increments_correlate() {
    let h = hp(0.75);
    let e = sample_cholesky(h, Grid::new(257).unwrap(), 10_000, 5).unwrap();
    let d = |i: usize| -> Vec<f64> { e.paths.iter().map(|p| p.values[i + 1] - p.values[i]).collect() };
    let (r, se) = correlation_with_stderr(&d(100), &d(101));
    let want = 2f64.powf(2.0 * h.value() - 1.0) - 1.0;
    assert!((r - want).abs() < 3.0 * se, "{r} ± {se} vs {want}");
}

#[test]
fn rescaling_multiplies_variance() {
    // shrinking time by 4 at H=1/2 divides the end-point variance by 4
    let h = hp(0.5);
    let e = sample_cholesky(h, Grid::new(33).unwrap(), 10_000, 9).unwrap();
    let ends: Vec<f64> = e.paths.iter().map(|p| p.values[32]).collect();
    let shrunk: Vec<f64> = e
        .paths
        .iter()
        .map(|p| {
            let q = rescale_selfsimilar(h, p, 0.25).unwrap();
            *q.values.last().unwrap()
        })
        .collect();
    let var = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    let ratio = var(&ends) / var(&shrunk);
    assert!((ratio - 4.0).abs() < 0.2, "{ratio}");
}

#[test]
fn series_paths_have_unit_variance_at_one() {
    let e = sample_series_default(hp(0.5), 200, Grid::new(9).unwrap(), 10_000, 21).unwrap();
    let sq: Vec<f64> = e.paths.iter().map(|p| p.values[8] * p.values[8]).collect();
    let s = summarize(&sq);
    assert!((s.mean - 1.0).abs() < 5.0 * s.stderr, "{} ± {}", s.mean, s.stderr);
    assert!(e.paths.iter().all(|p| p.values[0] == 0.0));
}

#[test]
fn brownian_series_frequencies() {
    let z = bessel_zeros(hp(0.5), 2).unwrap();
    assert!((z.zeros[0] - std::f64::consts::FRAC_PI_2).abs() < 1e-10);
    assert!((z.zeros[1] - 1.5 * std::f64::consts::PI).abs() < 1e-10);
}

#[test]
fn covariance_is_self_similar() {
    let h = hp(0.3);
    let (t, s, c) = (0.2, 0.45, 2.0);
    let lhs = cov(h, c * t, c * s).unwrap();
    assert!((lhs - c.powf(0.6) * cov(h, t, s).unwrap()).abs() < 1e-12);
}
