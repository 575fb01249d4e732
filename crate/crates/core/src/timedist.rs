//! Parametric inter-event time families: the survival/pmf weight used inside
//! the joint model, sampling, and weighted maximum-likelihood fitting.

use crate::error::{Error, Result};
use crate::math::LOG_ZERO;
use rand::Rng;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

/// Family tag shared by every time cell of one model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeFamily {
    Geometric,
    Exponential,
    Weibull,
}

impl TimeFamily {
    pub const ALL: [TimeFamily; 3] = [
        TimeFamily::Geometric,
        TimeFamily::Exponential,
        TimeFamily::Weibull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TimeFamily::Geometric => "geometric",
            TimeFamily::Exponential => "exponential",
            TimeFamily::Weibull => "weibull",
        }
    }
}

impl std::str::FromStr for TimeFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "geometric" | "geom" => Ok(TimeFamily::Geometric),
            "exponential" | "exp" => Ok(TimeFamily::Exponential),
            "weibull" => Ok(TimeFamily::Weibull),
            other => Err(Error::InvalidParameter(format!(
                "unknown time family '{other}'"
            ))),
        }
    }
}

/// One fitted time distribution for a (a, a', c) cell. Units are days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum TimeDist {
    Geometric { p: f64 },
    Exponential { rate: f64 },
    Weibull { shape: f64, scale: f64 },
}

/// Clamp applied to observed intervals before continuous-family fitting;
/// exact zeros (same-day events) would otherwise degenerate the MLE. Half a
/// day is below integer-day data resolution.
pub const EPS_TAU: f64 = 0.5;

/// Lower clamp for the fitted geometric success probability.
pub const EPS_P: f64 = 1e-6;

impl TimeDist {
    pub fn family(&self) -> TimeFamily {
        match self {
            TimeDist::Geometric { .. } => TimeFamily::Geometric,
            TimeDist::Exponential { .. } => TimeFamily::Exponential,
            TimeDist::Weibull { .. } => TimeFamily::Weibull,
        }
    }

    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            TimeDist::Geometric { p } => p > 0.0 && p <= 1.0,
            TimeDist::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            TimeDist::Weibull { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("{self:?}")))
        }
    }

    /// Log time-weight as used inside the joint model: survival 1 - F(tau)
    /// for the continuous families, pmf for the geometric (with observed tau
    /// rounded and clamped to the {1, 2, ...} support).
    pub fn log_weight(&self, tau: f64) -> Result<f64> {
        self.check()?;
        if !(tau >= 0.0) {
            return Err(Error::InvalidParameter(format!("tau must be >= 0, got {tau}")));
        }
        Ok(match *self {
            TimeDist::Geometric { p } => {
                let t = geometric_support(tau);
                if p == 1.0 {
                    if t == 1.0 {
                        0.0
                    } else {
                        LOG_ZERO
                    }
                } else {
                    p.ln() + (t - 1.0) * (1.0 - p).ln()
                }
            }
            TimeDist::Exponential { rate } => -rate * tau,
            TimeDist::Weibull { shape, scale } => -(tau / scale).powf(shape),
        })
    }

    /// Draw from the family's standard distribution (not the survival
    /// weight): geometric on {1, 2, ...}, exponential/Weibull on (0, inf).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        self.check()?;
        Ok(match *self {
            TimeDist::Geometric { p } => {
                if p == 1.0 {
                    1.0
                } else {
                    // inverse-cdf draw on {1,2,...}
                    let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                    1.0 + (u.ln() / (1.0 - p).ln()).floor()
                }
            }
            TimeDist::Exponential { rate } => rand_distr::Exp::new(rate)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng),
            TimeDist::Weibull { shape, scale } => rand_distr::Weibull::new(scale, shape)
                .map_err(|e| Error::InvalidParameter(e.to_string()))?
                .sample(rng),
        })
    }

    /// Exact median of the distribution (diagnostic use).
    pub fn median(&self) -> f64 {
        match *self {
            TimeDist::Geometric { p } => (-(2f64.ln()) / (1.0 - p).ln()).ceil().max(1.0),
            TimeDist::Exponential { rate } => 2f64.ln() / rate,
            TimeDist::Weibull { shape, scale } => scale * 2f64.ln().powf(1.0 / shape),
        }
    }

    /// The numeric parameters, for parameter-delta norms.
    pub fn params(&self) -> [f64; 2] {
        match *self {
            TimeDist::Geometric { p } => [p, 0.0],
            TimeDist::Exponential { rate } => [rate, 0.0],
            TimeDist::Weibull { shape, scale } => [shape, scale],
        }
    }
}

/// Geometric support transform: tau' = max(1, round(tau)).
#[inline]
pub fn geometric_support(tau: f64) -> f64 {
    tau.round().max(1.0)
}

/// Zero-interval guard for the continuous MLEs: non-positive intervals are
/// replaced by eps_tau, positive ones pass through unchanged so the fits
/// stay unbiased.
#[inline]
pub fn clamp_tau(tau: f64, eps_tau: f64) -> f64 {
    if tau > 0.0 {
        tau
    } else {
        eps_tau
    }
}

/// One observation with its posterior responsibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightedTimeSample {
    pub tau: f64,
    pub weight: f64,
}

impl WeightedTimeSample {
    pub fn new(tau: f64, weight: f64) -> Self {
        WeightedTimeSample { tau, weight }
    }
}

fn total_weight(samples: &[WeightedTimeSample]) -> Result<f64> {
    let w: f64 = samples.iter().map(|s| s.weight).sum();
    if w > 0.0 {
        Ok(w)
    } else {
        Err(Error::EmptyData("total sample weight is zero".into()))
    }
}

/// Weighted geometric MLE on the rounded {1,2,...} support:
/// p = sum(w) / sum(w * tau'), clamped to [EPS_P, 1 - EPS_P] so that fitted
/// models never assign exactly zero probability to an observable interval.
pub fn fit_geometric(samples: &[WeightedTimeSample]) -> Result<TimeDist> {
    let w = total_weight(samples)?;
    let wt: f64 = samples
        .iter()
        .map(|s| s.weight * geometric_support(s.tau))
        .sum();
    let p = (w / wt).clamp(EPS_P, 1.0 - EPS_P);
    Ok(TimeDist::Geometric { p })
}

/// Weighted exponential MLE with the zero-interval guard:
/// rate = sum(w) / sum(w * clamp_tau(tau)), clamped to [1e-6, 1e6].
pub fn fit_exponential(samples: &[WeightedTimeSample]) -> Result<TimeDist> {
    fit_exponential_clamped(samples, EPS_TAU)
}

pub fn fit_exponential_clamped(samples: &[WeightedTimeSample], eps_tau: f64) -> Result<TimeDist> {
    let w = total_weight(samples)?;
    let wt: f64 = samples.iter().map(|s| s.weight * clamp_tau(s.tau, eps_tau)).sum();
    if wt <= 0.0 {
        return Err(Error::EmptyData("sum of weighted intervals is zero".into()));
    }
    let rate = (w / wt).clamp(1e-6, 1e6);
    Ok(TimeDist::Exponential { rate })
}

/// Weighted Weibull MLE via one-dimensional root finding on the profile
/// score in the shape k, where scale(k) = (sum(w tau^k)/sum(w))^(1/k).
/// Falls back to the exponential-equivalent (k = 1) when the data are
/// degenerate (all weighted tau identical: the profile equation has no root).
pub fn fit_weibull(samples: &[WeightedTimeSample]) -> Result<TimeDist> {
    fit_weibull_clamped(samples, EPS_TAU)
}

const WEIBULL_K_LO: f64 = 1e-2;
const WEIBULL_K_HI: f64 = 1e2;
const WEIBULL_SCORE_TOL: f64 = 1e-10;
const WEIBULL_MAX_ITERS: usize = 200;

pub fn fit_weibull_clamped(samples: &[WeightedTimeSample], eps_tau: f64) -> Result<TimeDist> {
    let w_total = total_weight(samples)?;
    let data: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.weight > 0.0)
        .map(|s| (clamp_tau(s.tau, eps_tau), s.weight))
        .collect();

    let first = data[0].0;
    if data.iter().all(|&(t, _)| t == first) {
        // documented fallback: exponential-equivalent shape
        return Ok(TimeDist::Weibull {
            shape: 1.0,
            scale: first,
        });
    }

    let mean_log: f64 = data.iter().map(|&(t, w)| w * t.ln()).sum::<f64>() / w_total;

    // profile score: S(k) = 1/k + mean_log - sum(w t^k ln t)/sum(w t^k)
    // S is strictly decreasing in k; bracket then bisect, Newton polish.
    let score = |k: f64| -> (f64, f64) {
        let mut s0 = 0.0; // sum w t^k
        let mut s1 = 0.0; // sum w t^k ln t
        let mut s2 = 0.0; // sum w t^k (ln t)^2
        // factor out max(t)^k to avoid overflow at large k
        let tmax = data.iter().map(|&(t, _)| t).fold(f64::MIN, f64::max);
        for &(t, w) in &data {
            let p = (k * (t / tmax).ln()).exp();
            let lt = t.ln();
            s0 += w * p;
            s1 += w * p * lt;
            s2 += w * p * lt * lt;
        }
        let b = s1 / s0;
        let s = 1.0 / k + mean_log - b;
        let bprime = (s2 * s0 - s1 * s1) / (s0 * s0);
        let sprime = -1.0 / (k * k) - bprime;
        (s, sprime)
    };

    let (mut lo, mut hi) = (WEIBULL_K_LO, WEIBULL_K_HI);
    let (slo, _) = score(lo);
    let (shi, _) = score(hi);
    let mut k = if slo <= 0.0 {
        lo
    } else if shi >= 0.0 {
        hi
    } else {
        let mut k = (lo * hi).sqrt();
        for _ in 0..WEIBULL_MAX_ITERS {
            let (s, sp) = score(k);
            if s.abs() < WEIBULL_SCORE_TOL {
                break;
            }
            if s > 0.0 {
                lo = k;
            } else {
                hi = k;
            }
            // Newton step, kept only when it stays inside the bracket
            let kn = k - s / sp;
            k = if kn.is_finite() && kn > lo && kn < hi {
                kn
            } else {
                0.5 * (lo + hi)
            };
        }
        k
    };
    k = k.clamp(WEIBULL_K_LO, WEIBULL_K_HI);

    let scale = profile_scale(&data, w_total, k);
    Ok(TimeDist::Weibull { shape: k, scale })
}

fn profile_scale(data: &[(f64, f64)], w_total: f64, k: f64) -> f64 {
    let tmax = data.iter().map(|&(t, _)| t).fold(f64::MIN, f64::max);
    let s0: f64 = data
        .iter()
        .map(|&(t, w)| w * (k * (t / tmax).ln()).exp())
        .sum();
    tmax * (s0 / w_total).powf(1.0 / k)
}

/// Weighted Weibull log-likelihood (density form), diagnostic for the score
/// check: sum_i w_i [ln k + (k-1) ln t - k ln scale - (t/scale)^k].
pub fn weibull_log_likelihood(samples: &[WeightedTimeSample], shape: f64, scale: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let t = clamp_tau(s.tau, EPS_TAU);
            s.weight * (shape.ln() + (shape - 1.0) * t.ln() - shape * scale.ln() - (t / scale).powf(shape))
        })
        .sum()
}

/// Analytic gradient of the weighted Weibull log-likelihood in the shape, at
/// fixed scale.
pub fn weibull_shape_score(samples: &[WeightedTimeSample], shape: f64, scale: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let t = clamp_tau(s.tau, EPS_TAU);
            let z = t / scale;
            s.weight * (1.0 / shape + z.ln() - z.powf(shape) * z.ln())
        })
        .sum()
}

/// Fit the configured family on weighted samples.
pub fn fit_family(
    family: TimeFamily,
    samples: &[WeightedTimeSample],
    eps_tau: f64,
) -> Result<TimeDist> {
    match family {
        TimeFamily::Geometric => fit_geometric(samples),
        TimeFamily::Exponential => fit_exponential_clamped(samples, eps_tau),
        TimeFamily::Weibull => fit_weibull_clamped(samples, eps_tau),
    }
}

/// Neutral default used for cells with no observations at all.
pub fn default_dist(family: TimeFamily) -> TimeDist {
    match family {
        TimeFamily::Geometric => TimeDist::Geometric { p: 0.5 },
        TimeFamily::Exponential => TimeDist::Exponential { rate: 0.1 },
        TimeFamily::Weibull => TimeDist::Weibull {
            shape: 1.0,
            scale: 10.0,
        },
    }
}
