use fbm_sobolev::fbm::sample_circulant;
use fbm_sobolev::small_deviation::{
    c_h, expected_path_variance, fit_rate, geometric_epsilons, kl_centered_eigs, quadform_cdf, smallball_kl,
    smallball_mc, Functional, RateModel,
};
use fbm_sobolev::{Grid, HurstParam};

fn hp(h: f64) -> HurstParam {
    HurstParam::new(h).unwrap()
}

#[test]
fn inversion_agrees_with_monte_carlo() {
    let h = hp(0.5);
    let n = 65;
    let e = sample_circulant(h, Grid::new(n).unwrap(), 10_000, 31).unwrap();
    let eps = geometric_epsilons(0.15, 0.6, 20).unwrap();
    let mc = smallball_mc(&e, &Functional::PathVariance { a: 0.0, b: 1.0 }, &eps).unwrap();
    let kl = smallball_kl(&kl_centered_eigs(h, 0.0, 1.0, n).unwrap().mu, &eps).unwrap();
    let mut compared = 0;
    for i in 0..eps.len() {
        if mc.probs[i] * 10_000.0 >= 100.0 {
            compared += 1;
            let z = (mc.probs[i] - kl.probs[i]) / mc.uncertainty[i];
            assert!(z.abs() < 3.0, "eps {} mc {} kl {}", eps[i], mc.probs[i], kl.probs[i]);
        }
    }
    assert!(compared >= 10);
}

#[test]
fn mean_level_probability_is_moderate() {
    let h = hp(0.5);
    let e = sample_circulant(h, Grid::new(129).unwrap(), 10_000, 2).unwrap();
    let eps = [(1.0f64 / 6.0).sqrt()];
    let p = smallball_mc(&e, &Functional::PathVariance { a: 0.0, b: 1.0 }, &eps)
        .unwrap()
        .probs[0];
    assert!(p > 0.2 && p < 0.9, "{p}");
    let q = smallball_kl(&kl_centered_eigs(h, 0.0, 1.0, 129).unwrap().mu, &eps)
        .unwrap()
        .probs[0];
    assert!((p - q).abs() < 0.02, "{p} vs {q}");
}

#[test]
fn centered_trace_scales_with_interval_length() {
    for (h, a, b) in [(0.5, 0.0, 0.5), (0.75, 0.25, 0.75), (0.3, 0.2, 1.0)] {
        let h = hp(h);
        let s = kl_centered_eigs(h, a, b, 256).unwrap();
        let want = (b - a).powf(h.two_h()) * expected_path_variance(h);
        assert!(
            (s.trace / want - 1.0).abs() < 0.01,
            "{h} [{a},{b}]: {} vs {want}",
            s.trace
        );
        assert!(s.mu.windows(2).all(|w| w[1] <= w[0]) && s.mu.iter().all(|&m| m > 0.0));
    }
}

#[test]
fn inversion_curve_rate_at_one_half() {
    let h = hp(0.5);
    let mu = kl_centered_eigs(h, 0.0, 1.0, 1024).unwrap().mu;
    let curve = smallball_kl(&mu, &geometric_epsilons(0.05, 1.0, 80).unwrap()).unwrap();
    assert!(curve.probs.windows(2).all(|w| w[1] <= w[0]));
    let fit = fit_rate(&curve, RateModel::stretched(h)).unwrap();
    assert!((fit.slope / -c_h(h) - 1.0).abs() < 0.25, "{}", fit.slope);
    assert!(fit.r_squared > 0.99);
    assert!(smallball_kl(&mu, &[10.0]).unwrap().probs[0] > 1.0 - 1e-12);
}

#[test]
fn quadform_is_a_distribution_function() {
    let mu = [0.7, 0.2, 0.05, 0.01];
    let mut prev = 0.0;
    for k in 0..40 {
        let x = 1e-3 * 1.3f64.powi(k);
        let p = quadform_cdf(&mu, x).unwrap();
        assert!(p >= prev && p <= 1.0);
        prev = p;
    }
}

#[test]
fn wrong_rate_constant_is_caught() {
    use fbm_sobolev::acceptance::{run_criterion, AcceptanceConfig};
    let cfg = AcceptanceConfig {
        c_h_override: Some(0.2),
        ..AcceptanceConfig::default()
    };
    let o = run_criterion(8, &cfg).unwrap();
    assert!(!o.passed, "{}", o.line());
}
