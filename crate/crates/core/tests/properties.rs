use fbm_sobolev::fbm::{cov, increment_inner};
use fbm_sobolev::sobolev::{compute_f, SobolevParams};
use fbm_sobolev::spectral::{build_mesh, q_kernel};
use fbm_sobolev::{FbmPath, Grid, HurstParam};
use proptest::prelude::*;

fn hurst() -> impl Strategy<Value = HurstParam> {
    (0.02f64..0.98).prop_map(|h| HurstParam::new(h).unwrap())
}

proptest! {
    #[test]
    fn covariance_symmetric_and_bounded(h in hurst(), t in 0.0f64..=1.0, s in 0.0f64..=1.0) {
        let c = cov(h, t, s).unwrap();
        prop_assert!((c - cov(h, s, t).unwrap()).abs() < 1e-15);
        prop_assert!((cov(h, t, t).unwrap() - t.powf(h.two_h())).abs() < 1e-15);
        prop_assert!(c * c <= cov(h, t, t).unwrap() * cov(h, s, s).unwrap() * (1.0 + 1e-12) + 1e-300);
    }

    #[test]
    fn increments_are_additive(h in hurst(), a in 0.0f64..0.3, b in 0.3f64..0.6, c in 0.6f64..1.0, s1 in 0.0f64..0.5, s2 in 0.5f64..1.0) {
        let whole = increment_inner(h, a, c, s1, s2).unwrap();
        let parts = increment_inner(h, a, b, s1, s2).unwrap() + increment_inner(h, b, c, s1, s2).unwrap();
        prop_assert!((whole - parts).abs() < 1e-12);
    }

    #[test]
    fn q_kernel_diagonal_is_increment_variance(h in hurst(), t in 0.01f64..1.0, frac in 0.0f64..1.0) {
        let tp = t * frac;
        let k = q_kernel(h, (t, tp), (t, tp)).unwrap();
        prop_assert!((k - (t - tp).powf(h.two_h())).abs() < 1e-12);
    }

    #[test]
    fn mesh_nodes_lie_below_the_diagonal(n in 2usize..40) {
        let mesh = build_mesh(n).unwrap();
        prop_assert!(mesh.nodes().iter().all(|(t, tp)| tp < t));
        prop_assert!((mesh.weight_sum() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn f_is_homogeneous(c in 0.1f64..3.0, p in 1.0f64..2.5, q in 0.0f64..0.8, h in 0.35f64..0.95) {
        let h = HurstParam::new(h).unwrap();
        prop_assume!(SobolevParams::new(p, q, h).is_ok());
        let params = SobolevParams::new(p, q, h).unwrap();
        let path = FbmPath::from_fn(Grid::new(17).unwrap(), |t| (5.0 * t).sin());
        let base = compute_f(&path, &params);
        let scaled = compute_f(&path.scaled(c), &params);
        prop_assert!((scaled - c.powf(2.0 * p) * base).abs() <= 1e-10 * scaled.abs().max(1e-300));
    }
}
