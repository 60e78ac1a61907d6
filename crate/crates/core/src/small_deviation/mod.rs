//! Small-ball probabilities: the rate constant `c_H`, Karhunen–Loève
//! eigenvalues of the centered covariance operator, exact quadratic-form
//! CDFs, Monte Carlo estimates and rate fits.

mod fit;
mod quadform;

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use faer::Mat;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

pub use fit::{fit_rate, fit_rate_window, weighted_regression, FitWindow, RateFit, RateModel, MIN_FIT_POINTS};
pub use quadform::{quadform_cdf, quadform_cdf_with_error, CdfValue};

use crate::error::{Error, Result};
use crate::fbm::{cov_raw, HurstParam, PathEnsemble};
use crate::linalg::sym_eigenvalues;
use crate::malliavin::df_norm_direct_with;
use crate::rng::par_map_indexed;
use crate::sobolev::{compute_f_batch, path_variance_batch, SobolevParams};
use crate::spectral::{build_mesh, kernel_matrix};

/// `c_H = H ((2H+1) sin(π/(2H+1)))^{-(2H+1)/(2H)} (Γ(2H+1) sin(πH))^{1/(2H)}`.
pub fn c_h(h: HurstParam) -> f64 {
    let h = h.value();
    let a = 2.0 * h + 1.0;
    h * (a * (PI / a).sin()).powf(-a / (2.0 * h)) * (gamma(a) * (PI * h).sin()).powf(1.0 / (2.0 * h))
}

/// `c_H (∫_0^1 ψ^{1/(2H+1)})^{(2H+1)/(2H)}` with `ψ` sampled on a uniform
/// grid over [0,1] and integrated by the trapezoid rule.
pub fn nn_constant(h: HurstParam, psi: &[f64]) -> Result<f64> {
    if psi.len() < 2 {
        return Err(Error::Domain("ψ needs at least two samples".into()));
    }
    if let Some(bad) = psi.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
        return Err(Error::Domain(format!("ψ must be nonnegative and finite, found {bad}")));
    }
    let a = 2.0 * h.value() + 1.0;
    let m = psi.len() - 1;
    let integral = psi
        .iter()
        .enumerate()
        .map(|(i, v)| if i == 0 || i == m { 0.5 } else { 1.0 } * v.powf(1.0 / a))
        .sum::<f64>()
        / m as f64;
    Ok(c_h(h) * integral.powf(a / (2.0 * h.value())))
}

/// Eigenvalues `μ_i` with `V_[a,b] ≗ Σ μ_i ξ_i²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlSpectrum {
    /// Retained eigenvalues, decreasing, `μ_i / μ_1 >= 1e-10`.
    pub mu: Vec<f64>,
    /// Sum of the eigenvalues dropped by the relative cut. Reported, never
    /// added back into any probability.
    pub discarded_mass: f64,
    /// Sum of every positive eigenvalue.
    pub trace: f64,
}

pub const KL_RELATIVE_CUT: f64 = 1e-10;

/// Nyström eigenvalues of the mean-centered fBm covariance on `[a, b]`
/// with `n` trapezoid nodes and the `1/(b-a)`-normalized inner product.
pub fn kl_centered_eigs(h: HurstParam, a: f64, b: f64, n: usize) -> Result<KlSpectrum> {
    if !(0.0 <= a && a < b && b <= 1.0) {
        return Err(Error::Domain(format!("bad interval [{a}, {b}]")));
    }
    if n < 16 {
        return Err(Error::Domain(format!("KL discretization needs n >= 16, got {n}")));
    }
    let m = n - 1;
    let x: Vec<f64> = (0..n)
        .map(|i| if i == m { b } else { a + (b - a) * i as f64 / m as f64 })
        .collect();
    let w: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 || i == m {
                0.5 / m as f64
            } else {
                1.0 / m as f64
            }
        })
        .collect();
    let two_h = h.two_h();
    let r = Mat::from_fn(n, n, |i, j| cov_raw(two_h, x[i], x[j]));
    let row: Vec<f64> = (0..n).map(|i| (0..n).map(|j| w[j] * r[(i, j)]).sum()).collect();
    let all: f64 = (0..n).map(|i| w[i] * row[i]).sum();
    let sw: Vec<f64> = w.iter().map(|v| v.sqrt()).collect();
    let k = Mat::from_fn(n, n, |i, j| sw[i] * (r[(i, j)] - row[i] - row[j] + all) * sw[j]);
    let values = sym_eigenvalues(k.as_ref())?;
    let positive: Vec<f64> = values.into_iter().filter(|&v| v > 0.0).collect();
    let trace = positive.iter().sum();
    let top = positive.first().copied().unwrap_or(0.0);
    let keep = positive.iter().take_while(|&&v| v >= KL_RELATIVE_CUT * top).count();
    let discarded_mass = positive[keep..].iter().sum();
    Ok(KlSpectrum {
        mu: positive[..keep].to_vec(),
        discarded_mass,
        trace,
    })
}

/// `E V_[0,1] = 1 / ((2H+1)(2H+2))`.
pub fn expected_path_variance(h: HurstParam) -> f64 {
    let e = h.two_h();
    1.0 / ((e + 1.0) * (e + 2.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MonteCarlo,
    KlInversion,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::MonteCarlo => "monte_carlo",
            Method::KlInversion => "kl_inversion",
        })
    }
}

/// Which functional a curve describes and how `ε` enters:
/// `P(V <= ε²)`, `P(F <= ε)`, `P(‖DF‖ <= ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    PathVariance,
    FunctionalF,
    DfNorm,
}

impl Target {
    /// `value` is V, F, or the squared norm ‖DF‖² respectively.
    fn within(self, value: f64, eps: f64) -> bool {
        match self {
            Target::PathVariance => value <= eps * eps,
            Target::FunctionalF => value <= eps,
            Target::DfNorm => value.sqrt() <= eps,
        }
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::PathVariance => "path_variance",
            Target::FunctionalF => "functional_f",
            Target::DfNorm => "df_norm",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmallBallCurve {
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub probs: Vec<f64>,
    /// Binomial standard error (Monte Carlo) or quadrature error (inversion).
    /// For zero counts, the rule-of-three 95% upper bound `3/N`.
    pub uncertainty: Vec<f64>,
    /// Marks zero-count points whose uncertainty is a one-sided bound.
    pub upper_bound: Vec<bool>,
    pub method: Method,
    pub target: Target,
}

fn sorted_epsilons(epsilons: &[f64]) -> Result<Vec<f64>> {
    if let Some(bad) = epsilons.iter().find(|e| !(**e >= 0.0 && e.is_finite())) {
        return Err(Error::Domain(format!("ε must be finite and nonnegative, found {bad}")));
    }
    let mut e = epsilons.to_vec();
    e.sort_by(|a, b| b.partial_cmp(a).unwrap());
    e.dedup();
    Ok(e)
}

/// `ε` values spaced geometrically from `max` down to `min`.
pub fn geometric_epsilons(min: f64, max: f64, points: usize) -> Result<Vec<f64>> {
    if !(0.0 < min && min < max) || points < 2 {
        return Err(Error::Domain(format!(
            "bad ε range [{min}, {max}] with {points} points"
        )));
    }
    let r = (min / max).ln() / (points - 1) as f64;
    Ok((0..points)
        .map(|k| {
            if k == points - 1 {
                min
            } else {
                max * (r * k as f64).exp()
            }
        })
        .collect())
}

impl SmallBallCurve {
    /// Indices where the probability rises as ε decreases by more than
    /// twice the combined uncertainty.
    pub fn monotonicity_violations(&self) -> Vec<usize> {
        (1..self.probs.len())
            .filter(|&i| {
                let tol = 2.0 * (self.uncertainty[i] + self.uncertainty[i - 1]);
                self.probs[i] > self.probs[i - 1] + tol
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "epsilon,prob,uncertainty,method,zero_count_bound")?;
        for i in 0..self.epsilons.len() {
            writeln!(
                out,
                "{:.17e},{:.17e},{:.17e},{},{}",
                self.epsilons[i], self.probs[i], self.uncertainty[i], self.method, self.upper_bound[i]
            )?;
        }
        Ok(())
    }
}

/// Inversion curve `P(Σ μ_i ξ_i² <= ε²)`.
pub fn smallball_kl(mu: &[f64], epsilons: &[f64]) -> Result<SmallBallCurve> {
    let eps = sorted_epsilons(epsilons)?;
    let values = eps
        .iter()
        .map(|e| quadform_cdf_with_error(mu, e * e))
        .collect::<Result<Vec<_>>>()?;
    Ok(SmallBallCurve {
        probs: values.iter().map(|v| v.prob).collect(),
        uncertainty: values.iter().map(|v| v.error).collect(),
        upper_bound: vec![false; eps.len()],
        epsilons: eps,
        method: Method::KlInversion,
        target: Target::PathVariance,
    })
}

/// Empirical curve from per-path functional values (for `DfNorm`, the
/// squared norms).
pub fn smallball_from_samples(values: &[f64], target: Target, epsilons: &[f64]) -> Result<SmallBallCurve> {
    if values.is_empty() {
        return Err(Error::Domain("no samples".into()));
    }
    let eps = sorted_epsilons(epsilons)?;
    let n = values.len() as f64;
    let mut probs = Vec::with_capacity(eps.len());
    let mut uncertainty = Vec::with_capacity(eps.len());
    let mut upper_bound = Vec::with_capacity(eps.len());
    for &e in &eps {
        let hits = values.iter().filter(|&&v| target.within(v, e)).count();
        let p = hits as f64 / n;
        probs.push(p);
        if hits == 0 {
            uncertainty.push(3.0 / n);
            upper_bound.push(true);
        } else {
            uncertainty.push((p * (1.0 - p) / n).sqrt());
            upper_bound.push(false);
        }
    }
    Ok(SmallBallCurve {
        epsilons: eps,
        probs,
        uncertainty,
        upper_bound,
        method: Method::MonteCarlo,
        target,
    })
}

/// A functional evaluated path by path for Monte Carlo curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    PathVariance {
        a: f64,
        b: f64,
    },
    SobolevF(SobolevParams),
    /// Squared norm ‖DF‖², direct form on a triangle mesh with `mesh_n` grid points.
    DfNorm {
        params: SobolevParams,
        mesh_n: usize,
    },
}

impl Functional {
    pub fn target(&self) -> Target {
        match self {
            Functional::PathVariance { .. } => Target::PathVariance,
            Functional::SobolevF(_) => Target::FunctionalF,
            Functional::DfNorm { .. } => Target::DfNorm,
        }
    }

    pub fn evaluate(&self, ensemble: &PathEnsemble) -> Result<Vec<f64>> {
        match *self {
            Functional::PathVariance { a, b } => path_variance_batch(ensemble, a, b),
            Functional::SobolevF(params) => Ok(compute_f_batch(ensemble, &params)),
            Functional::DfNorm { params, mesh_n } => {
                let mesh = build_mesh(mesh_n)?;
                let kernel = kernel_matrix(params.h, &mesh);
                Ok(par_map_indexed(ensemble.len(), |i| {
                    df_norm_direct_with(&ensemble.paths[i], &params, &mesh, &kernel)
                }))
            }
        }
    }
}

pub fn smallball_mc(ensemble: &PathEnsemble, functional: &Functional, epsilons: &[f64]) -> Result<SmallBallCurve> {
    if ensemble.is_empty() {
        return Err(Error::Domain("empty ensemble".into()));
    }
    let values = functional.evaluate(ensemble)?;
    smallball_from_samples(&values, functional.target(), epsilons)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub model: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exponent: Option<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    pub n_points: usize,
}

impl From<&RateFit> for FitSummary {
    fn from(f: &RateFit) -> Self {
        let (model, exponent) = match f.model {
            RateModel::StretchedExponential { exponent } => ("stretched_exponential", Some(exponent)),
            RateModel::LogLogPolynomial => ("log_log_polynomial", None),
        };
        FitSummary {
            model,
            exponent,
            slope: f.slope,
            intercept: f.intercept,
            r2: f.r_squared,
            n_points: f.n_points,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::{FbmPath, Grid};

    fn hp(h: f64) -> HurstParam {
        HurstParam::new(h).unwrap()
    }

    #[test]
    fn c_h_values() {
        assert!((c_h(hp(0.5)) - 0.125).abs() < 1e-15);
        assert!((c_h(hp(0.25)) - 0.044_785_169_487_264_638).abs() < 1e-13);
        assert!((c_h(hp(0.75)) - 0.169_914_916_978_902_21).abs() < 1e-13);
        assert!((c_h(hp(0.5 + 1e-6)) - 0.125).abs() < 1e-4);
        assert!((c_h(hp(0.5 - 1e-6)) - 0.125).abs() < 1e-4);
    }

    #[test]
    fn nn_constant_examples() {
        let h = hp(0.3);
        assert!((nn_constant(h, &[1.0; 11]).unwrap() - c_h(h)).abs() < 1e-15);
        assert_eq!(nn_constant(h, &[0.0; 11]).unwrap(), 0.0);
        assert!(nn_constant(h, &[1.0, -1.0]).is_err());
    }

    #[test]
    fn kl_trace_at_one_half() {
        let s = kl_centered_eigs(hp(0.5), 0.0, 1.0, 128).unwrap();
        assert!(((s.trace - 1.0 / 6.0) / (1.0 / 6.0)).abs() < 0.01);
        assert!(s.mu.windows(2).all(|w| w[0] >= w[1]) && s.mu.iter().all(|&m| m > 0.0));
        assert!(kl_centered_eigs(hp(0.5), 0.0, 1.0, 8).is_err());
    }

    #[test]
    fn kl_curve_limits() {
        let s = kl_centered_eigs(hp(0.5), 0.0, 1.0, 64).unwrap();
        let c = smallball_kl(&s.mu, &[3.0, 1.0, 0.3, 0.0]).unwrap();
        assert_eq!(c.epsilons, vec![3.0, 1.0, 0.3, 0.0]);
        assert!(c.probs[0] > 1.0 - 1e-9);
        assert_eq!(*c.probs.last().unwrap(), 0.0);
        assert!(c.probs.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn empirical_curve_edges() {
        let c = smallball_from_samples(&[0.1, 0.2, 0.5], Target::FunctionalF, &[0.0, 1.0, 0.15]).unwrap();
        assert_eq!(c.probs, vec![1.0, 1.0 / 3.0, 0.0]);
        assert!(c.upper_bound[2] && (c.uncertainty[2] - 1.0).abs() < 1e-15);
        let g = Grid::new(5).unwrap();
        let p = FbmPath::from_fn(g, |t| t);
        let e = PathEnsemble::new(
            g,
            hp(0.5),
            0,
            crate::fbm::SamplerTag::Cholesky,
            vec![p.values],
            Default::default(),
        )
        .unwrap();
        let c = smallball_mc(&e, &Functional::PathVariance { a: 0.0, b: 1.0 }, &[1.0]).unwrap();
        assert_eq!(c.probs, vec![1.0]);
    }

    #[test]
    fn geometric_grid() {
        let e = geometric_epsilons(0.01, 1.0, 3).unwrap();
        assert_eq!(e[0], 1.0);
        assert_eq!(e[2], 0.01);
        assert!((e[1] - 0.1).abs() < 1e-15);
    }
}
