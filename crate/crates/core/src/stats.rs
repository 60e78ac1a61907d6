//! Ensemble summaries. Reductions are sequential over index order so they
//! are bit-stable regardless of how the inputs were produced.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub stderr: f64,
}

/// Sample mean with the standard error of the mean (n-1 denominator).
pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            count: 0,
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
        (ss / (n - 1) as f64 / n as f64).sqrt()
    } else {
        f64::NAN
    };
    Summary { count: n, mean, stderr }
}

/// Empirical covariance of two equally long samples and the standard error
/// of that estimate (delta method: sd of the centered products over sqrt n).
pub fn covariance_with_stderr(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let s = summarize(&prods);
    (s.mean * n / (n - 1.0), s.stderr)
}

/// Pearson correlation with its large-sample standard error `(1-r²)/sqrt n`.
pub fn correlation_with_stderr(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let r = sxy / (sxx * syy).sqrt();
    (r, (1.0 - r * r) / n.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_of_small_sample() {
        let s = summarize(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn perfect_correlation() {
        let x = [1.0, 2.0, 4.0];
        let (r, se) = correlation_with_stderr(&x, &[2.0, 4.0, 8.0]);
        assert!((r - 1.0).abs() < 1e-15 && se.abs() < 1e-7);
        let (c, _) = covariance_with_stderr(&x, &x);
        assert!((c - 7.0 / 3.0).abs() < 1e-14);
    }
}
