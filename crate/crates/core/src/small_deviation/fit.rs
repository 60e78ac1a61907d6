//! Weighted least-squares rate fits of small-ball curves.

use serde::{Deserialize, Serialize};

use super::{Method, SmallBallCurve};
use crate::error::{Error, Result};
use crate::fbm::HurstParam;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RateModel {
    /// `log P ≈ slope · ε^{-exponent} + intercept`; the exponent is 1/H.
    StretchedExponential { exponent: f64 },
    /// `log P ≈ slope · log ε + intercept`.
    LogLogPolynomial,
}

impl RateModel {
    pub fn stretched(h: HurstParam) -> Self {
        RateModel::StretchedExponential {
            exponent: 1.0 / h.value(),
        }
    }

    fn abscissa(&self, eps: f64) -> f64 {
        match *self {
            RateModel::StretchedExponential { exponent } => eps.powf(-exponent),
            RateModel::LogLogPolynomial => eps.ln(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub model: RateModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Probability window of the points a fit may use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitWindow {
    /// Points need `P < p_max`.
    pub p_max: f64,
    /// Points need `P >= p_min`.
    pub p_min: f64,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow { p_max: 0.1, p_min: 0.0 }
    }
}

pub const MIN_FIT_POINTS: usize = 5;

/// Fits with the default window `P < 0.1`.
pub fn fit_rate(curve: &SmallBallCurve, model: RateModel) -> Result<RateFit> {
    fit_rate_window(curve, model, FitWindow::default())
}

/// Uniform weights for inversion curves, `(P / stderr)²` (the inverse
/// variance of `log P`) for Monte Carlo curves. Zero-count points are skipped.
pub fn fit_rate_window(curve: &SmallBallCurve, model: RateModel, window: FitWindow) -> Result<RateFit> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    for i in 0..curve.epsilons.len() {
        let p = curve.probs[i];
        if !(p > 0.0 && p < window.p_max && p >= window.p_min) || curve.upper_bound[i] {
            continue;
        }
        let w = match curve.method {
            Method::KlInversion => 1.0,
            Method::MonteCarlo => {
                let se = curve.uncertainty[i];
                if !(se > 0.0) {
                    continue;
                }
                (p / se) * (p / se)
            }
        };
        xs.push(model.abscissa(curve.epsilons[i]));
        ys.push(p.ln());
        ws.push(w);
    }
    let (slope, intercept, r_squared) = weighted_regression(&xs, &ys, &ws)?;
    Ok(RateFit {
        model,
        slope,
        intercept,
        r_squared,
        n_points: xs.len(),
    })
}

/// Weighted least squares line; returns (slope, intercept, r²).
pub fn weighted_regression(xs: &[f64], ys: &[f64], ws: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() < MIN_FIT_POINTS {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            found: xs.len(),
        });
    }
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    if !(sxx > 0.0) {
        return Err(Error::InsufficientPoints {
            needed: MIN_FIT_POINTS,
            found: 1,
        });
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok((slope, intercept, r2))
}
