//! Random trigonometric series for fBm with frequencies at the zeros of
//! `J_{-H}`.
//!
//! `B_t = t X + Σ_k ω_k^{-1} [X_k (cos(c ω_k t) - 1) + Y_k sin(c ω_k t)]`
//! with independent centered Gaussians. The frequency multiplier `c` and the
//! presence of the linear term are a [`SeriesVariant`]; [`select_variant`]
//! picks the one whose truncated covariance actually converges to the fBm
//! covariance.

mod bessel;

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

pub use bessel::{bessel_j, bessel_j_zeros};

use crate::error::{Error, Result};
use crate::fbm::{cov_raw, Grid, HurstParam, PathEnsemble, Regularization, SamplerTag};
use crate::rng::{fill_normal, par_map_indexed, path_stream};

#[derive(Debug, Clone, PartialEq)]
pub struct BesselZeros {
    pub order: f64,
    pub zeros: Vec<f64>,
}

/// The first `count` positive zeros of `J_{-H}`.
pub fn bessel_zeros(h: HurstParam, count: usize) -> Result<BesselZeros> {
    let order = -h.value();
    Ok(BesselZeros {
        order,
        zeros: bessel_j_zeros(order, count)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesCoefficients {
    /// Variance of the linear-term coefficient `X`.
    pub sigma_h_sq: f64,
    /// Common variance of `X_k` and `Y_k`.
    pub sigma_k_sq: Vec<f64>,
}

/// `Γ(3/2 - H) / (2H Γ(H + 1/2) Γ(3 - 2H))`.
pub fn sigma_h_sq(h: HurstParam) -> f64 {
    let h = h.value();
    gamma(1.5 - h) / (2.0 * h * gamma(h + 0.5) * gamma(3.0 - 2.0 * h))
}

/// `σ_k² = C_H (ω_k/2)^{-2H} J_{1-H}(ω_k)^{-2}` with
/// `C_H = 2^{1-4H} Γ(2H+1) sin(πH) / π`.
pub fn coefficient_variances(h: HurstParam, zeros: &BesselZeros) -> Result<SeriesCoefficients> {
    let hv = h.value();
    if (zeros.order + hv).abs() > 1e-15 {
        return Err(Error::Domain(format!(
            "zeros belong to order {}, expected {}",
            zeros.order, -hv
        )));
    }
    let c =
        2f64.powf(1.0 - 4.0 * hv) * gamma(2.0 * hv + 1.0) * (std::f64::consts::PI * hv).sin() / std::f64::consts::PI;
    let sigma_k_sq = zeros
        .zeros
        .iter()
        .map(|&w| {
            let j = bessel_j(1.0 - hv, w)?;
            Ok(c * (0.5 * w).powf(-2.0 * hv) / (j * j))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeriesCoefficients {
        sigma_h_sq: sigma_h_sq(h),
        sigma_k_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frequency {
    /// Basis `cos(2 ω_k t)`, `sin(2 ω_k t)`.
    Doubled,
    /// Basis `cos(ω_k t)`, `sin(ω_k t)`.
    Single,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeriesVariant {
    pub frequency: Frequency,
    pub linear_term: bool,
}

impl SeriesVariant {
    pub const ALL: [SeriesVariant; 4] = [
        SeriesVariant {
            frequency: Frequency::Doubled,
            linear_term: false,
        },
        SeriesVariant {
            frequency: Frequency::Doubled,
            linear_term: true,
        },
        SeriesVariant {
            frequency: Frequency::Single,
            linear_term: false,
        },
        SeriesVariant {
            frequency: Frequency::Single,
            linear_term: true,
        },
    ];

    fn multiplier(self) -> f64 {
        match self.frequency {
            Frequency::Doubled => 2.0,
            Frequency::Single => 1.0,
        }
    }
}

impl Default for SeriesVariant {
    /// The variant chosen by [`select_variant`]; a unit test pins the two
    /// together.
    fn default() -> Self {
        SeriesVariant {
            frequency: Frequency::Doubled,
            linear_term: false,
        }
    }
}

impl std::fmt::Display for SeriesVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let freq = match self.frequency {
            Frequency::Doubled => "2w",
            Frequency::Single => "w",
        };
        write!(f, "{freq}{}", if self.linear_term { "+linear" } else { "" })
    }
}

/// A truncated series ready for sampling and covariance evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesModel {
    pub h: HurstParam,
    pub variant: SeriesVariant,
    pub zeros: BesselZeros,
    pub coefficients: SeriesCoefficients,
}

impl SeriesModel {
    /// `terms` may be 0, leaving only the linear term (if the variant has one).
    pub fn new(h: HurstParam, terms: usize, variant: SeriesVariant) -> Result<Self> {
        let zeros = if terms == 0 {
            BesselZeros {
                order: -h.value(),
                zeros: Vec::new(),
            }
        } else {
            bessel_zeros(h, terms)?
        };
        let coefficients = coefficient_variances(h, &zeros)?;
        Ok(SeriesModel {
            h,
            variant,
            zeros,
            coefficients,
        })
    }

    pub fn terms(&self) -> usize {
        self.zeros.zeros.len()
    }

    fn linear_variance(&self) -> f64 {
        if self.variant.linear_term {
            self.coefficients.sigma_h_sq
        } else {
            0.0
        }
    }

    /// Truncated basis at `t`: `(ω_k^{-1}(cos(c ω_k t) - 1), ω_k^{-1} sin(c ω_k t))` per term.
    fn basis(&self, t: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = self.variant.multiplier();
        self.zeros.zeros.iter().map(move |&w| {
            let (s, co) = (c * w * t).sin_cos();
            ((co - 1.0) / w, s / w)
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,omega_k,sigma_k_sq")?;
        for (k, (w, s)) in self.zeros.zeros.iter().zip(&self.coefficients.sigma_k_sq).enumerate() {
            writeln!(out, "{},{:.17e},{:.17e}", k + 1, w, s)?;
        }
        Ok(())
    }
}

fn check_time(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("time {t} lies outside [0,1]")))
    }
}

/// Second moment `E[B_t B_s]` of the truncated series.
pub fn series_covariance(model: &SeriesModel, t: f64, s: f64) -> Result<f64> {
    check_time(t)?;
    check_time(s)?;
    let sum: f64 = model
        .basis(t)
        .zip(model.basis(s))
        .zip(&model.coefficients.sigma_k_sq)
        .map(|(((ct, st), (cs, ss)), v)| v * (ct * cs + st * ss))
        .sum();
    Ok(model.linear_variance() * t * s + sum)
}

/// Largest `|series_covariance - cov|` over all pairs of `points`.
pub fn covariance_sup_error(model: &SeriesModel, points: &[f64]) -> Result<f64> {
    let two_h = model.h.two_h();
    let mut worst = 0.0f64;
    for (i, &t) in points.iter().enumerate() {
        for &s in &points[..=i] {
            worst = worst.max((series_covariance(model, t, s)? - cov_raw(two_h, t, s)).abs());
        }
    }
    Ok(worst)
}

/// K-term series sampler. Path `i` draws `X` (if present) and then
/// `X_1, Y_1, X_2, Y_2, ...` from stream `(seed, i)`.
pub fn sample_series(model: &SeriesModel, grid: Grid, count: usize, seed: u64) -> Result<PathEnsemble> {
    if count == 0 {
        return Err(Error::Domain("ensemble size must be positive".into()));
    }
    let n = grid.len();
    let k = model.terms();
    let sd: Vec<f64> = model.coefficients.sigma_k_sq.iter().map(|v| v.sqrt()).collect();
    let linear_sd = model.linear_variance().sqrt();
    let basis: Vec<Vec<(f64, f64)>> = (0..n).map(|i| model.basis(grid.point(i)).collect()).collect();
    let values = par_map_indexed(count, |idx| {
        let mut rng = path_stream(seed, idx as u64);
        let mut z = vec![0.0; 2 * k + usize::from(model.variant.linear_term)];
        fill_normal(&mut rng, &mut z);
        let (x, zk) = if model.variant.linear_term {
            (z[0] * linear_sd, &z[1..])
        } else {
            (0.0, &z[..])
        };
        let coef: Vec<(f64, f64)> = (0..k).map(|j| (sd[j] * zk[2 * j], sd[j] * zk[2 * j + 1])).collect();
        (0..n)
            .map(|i| {
                if i == 0 {
                    return 0.0;
                }
                let series: f64 = basis[i].iter().zip(&coef).map(|((c, s), (a, b))| a * c + b * s).sum();
                x * grid.point(i) + series
            })
            .collect()
    });
    PathEnsemble::new(
        grid,
        model.h,
        seed,
        SamplerTag::PaleyWiener,
        values,
        Regularization::default(),
    )
}

/// Convenience wrapper: build the default-variant model and sample it.
pub fn sample_series_default(h: HurstParam, terms: usize, grid: Grid, count: usize, seed: u64) -> Result<PathEnsemble> {
    sample_series(
        &SeriesModel::new(h, terms, SeriesVariant::default())?,
        grid,
        count,
        seed,
    )
}

/// Audit row for one variant: sup covariance errors at each truncation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariantAudit {
    pub variant: SeriesVariant,
    pub terms: Vec<usize>,
    pub sup_errors: Vec<f64>,
}

impl VariantAudit {
    pub fn strictly_decreasing(&self) -> bool {
        self.sup_errors.windows(2).all(|w| w[1] < w[0])
    }

    pub fn final_error(&self) -> f64 {
        *self.sup_errors.last().unwrap_or(&f64::INFINITY)
    }
}

pub const AUDIT_TERMS: [usize; 3] = [10, 50, 200];
pub const AUDIT_POINTS: usize = 33;

/// Covariance-matching audit of every variant at `h` on the 33-point
/// validation grid.
pub fn audit_variants(h: HurstParam) -> Result<Vec<VariantAudit>> {
    let points = Grid::new(AUDIT_POINTS)?.points();
    let kmax = *AUDIT_TERMS.last().unwrap();
    let full = SeriesModel::new(h, kmax, SeriesVariant::default())?;
    SeriesVariant::ALL
        .iter()
        .map(|&variant| {
            let sup_errors = AUDIT_TERMS
                .iter()
                .map(|&k| {
                    let model = truncate(&full, k, variant);
                    covariance_sup_error(&model, &points)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(VariantAudit {
                variant,
                terms: AUDIT_TERMS.to_vec(),
                sup_errors,
            })
        })
        .collect()
}

fn truncate(model: &SeriesModel, k: usize, variant: SeriesVariant) -> SeriesModel {
    SeriesModel {
        h: model.h,
        variant,
        zeros: BesselZeros {
            order: model.zeros.order,
            zeros: model.zeros.zeros[..k].to_vec(),
        },
        coefficients: SeriesCoefficients {
            sigma_h_sq: model.coefficients.sigma_h_sq,
            sigma_k_sq: model.coefficients.sigma_k_sq[..k].to_vec(),
        },
    }
}

/// The variant with the smallest K=200 error among those whose error
/// strictly decreases in K, over all `hs`.
pub fn select_variant(hs: &[HurstParam]) -> Result<SeriesVariant> {
    let mut best: Option<(SeriesVariant, f64)> = None;
    let audits = hs.iter().map(|&h| audit_variants(h)).collect::<Result<Vec<_>>>()?;
    for variant in SeriesVariant::ALL {
        let rows: Vec<&VariantAudit> = audits
            .iter()
            .map(|a| a.iter().find(|r| r.variant == variant).unwrap())
            .collect();
        if !rows.iter().all(|r| r.strictly_decreasing()) {
            continue;
        }
        let worst = rows.iter().map(|r| r.final_error()).fold(0.0, f64::max);
        if best.is_none_or(|(_, e)| worst < e) {
            best = Some((variant, worst));
        }
    }
    best.map(|(v, _)| v)
        .ok_or_else(|| Error::Domain("no series variant converges to the fBm covariance".into()))
}
