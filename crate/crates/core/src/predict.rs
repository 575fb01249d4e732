//! Applications on a trained model: next-interval prediction, unsupervised
//! classification, and representative-sequence extraction, plus the
//! training-data baselines they are compared against.

use crate::error::{Error, Result};
use crate::inference::{posteriors_with, InferenceOpts};
use crate::model::{ActionVocab, EventSequence, ModelParams};
use crate::timedist::{fit_family, TimeDist, TimeFamily, WeightedTimeSample};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictionMode {
    /// Sample the class for every draw from the prefix posterior.
    Mixture,
    /// Condition every draw on the maximum-posterior class.
    Argmax,
}

impl std::str::FromStr for PredictionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mixture" => Ok(PredictionMode::Mixture),
            "argmax" => Ok(PredictionMode::Argmax),
            other => Err(Error::InvalidParameter(format!("unknown prediction mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictConfig {
    pub mode: PredictionMode,
    /// Number of Monte Carlo draws per prediction; odd so the median is a
    /// single order statistic.
    pub n_samples: usize,
    pub seed: u64,
    /// First position (0-based) at which a prediction is scored; 1 predicts
    /// from the second event on.
    pub t_start: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        PredictConfig {
            mode: PredictionMode::Mixture,
            n_samples: 501,
            seed: 0,
            t_start: 1,
        }
    }
}

impl PredictConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_samples < 3 || self.n_samples % 2 == 0 {
            return Err(Error::InvalidParameter(
                "n_samples must be odd and >= 3".into(),
            ));
        }
        if self.t_start < 1 {
            return Err(Error::InvalidParameter("t_start must be >= 1".into()));
        }
        Ok(())
    }
}

fn median_of(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

/// p(c | a_1..a_t, tau_1..tau_t) with the terminal stage window fully
/// relaxed, since a prefix may end at any stage.
pub fn class_posterior_prefix(params: &ModelParams, prefix: &EventSequence) -> Result<Vec<f64>> {
    let opts = InferenceOpts::prefix(params);
    Ok(posteriors_with(params, prefix, &opts)?.class_post)
}

/// Median-of-draws prediction of the interval preceding `a_next`, given an
/// observed prefix.
pub fn predict_next_time<R: Rng + ?Sized>(
    params: &ModelParams,
    prefix: &EventSequence,
    a_next: usize,
    cfg: &PredictConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.check()?;
    let q = class_posterior_prefix(params, prefix)?;
    let a_last = *prefix.actions.last().ok_or_else(|| {
        Error::EmptyData("empty prefix".into())
    })?;
    let c_star = argmax(&q);
    let mut draws = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        let c = match cfg.mode {
            PredictionMode::Argmax => c_star,
            PredictionMode::Mixture => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut picked = q.len() - 1;
                for (c, &qc) in q.iter().enumerate() {
                    acc += qc;
                    if u < acc {
                        picked = c;
                        break;
                    }
                }
                picked
            }
        };
        draws.push(params.theta_t[c][a_last][a_next].sample(rng)?);
    }
    Ok(median_of(draws))
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Training-data baselines, per action pair with pooled fallbacks.
#[derive(Debug, Clone)]
pub struct BaselineTables {
    pub family: TimeFamily,
    /// Parametric fit per (a, a'); None where the pair is unseen.
    pub pair_dist: Vec<Vec<Option<TimeDist>>>,
    /// Nonparametric training median per (a, a').
    pub pair_median: Vec<Vec<Option<f64>>>,
    pub pooled_dist: TimeDist,
    pub global_median: f64,
}

impl BaselineTables {
    pub fn fit(
        vocab: &ActionVocab,
        data: &[EventSequence],
        family: TimeFamily,
        eps_tau: f64,
    ) -> Result<Self> {
        let na = vocab.size();
        let end = vocab.end_id();
        let mut per_pair: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); na]; na];
        let mut all = Vec::new();
        for seq in data {
            for i in 1..seq.len() {
                if seq.actions[i] == end {
                    continue;
                }
                per_pair[seq.actions[i - 1]][seq.actions[i]].push(seq.times[i]);
                all.push(seq.times[i]);
            }
        }
        if all.is_empty() {
            return Err(Error::EmptyData("no observed intervals to fit baselines".into()));
        }
        let weighted = |v: &[f64]| -> Vec<WeightedTimeSample> {
            v.iter().map(|&t| WeightedTimeSample::new(t, 1.0)).collect()
        };
        let pooled_dist = fit_family(family, &weighted(&all), eps_tau)?;
        let global_median = median_of(all);
        let mut pair_dist = vec![vec![None; na]; na];
        let mut pair_median = vec![vec![None; na]; na];
        for a in 0..na {
            for a2 in 0..na {
                let cell = &per_pair[a][a2];
                if !cell.is_empty() {
                    pair_dist[a][a2] = Some(fit_family(family, &weighted(cell), eps_tau)?);
                    pair_median[a][a2] = Some(median_of(cell.clone()));
                }
            }
        }
        Ok(BaselineTables {
            family,
            pair_dist,
            pair_median,
            pooled_dist,
            global_median,
        })
    }

    /// Analytic median of the per-pair parametric fit (pooled fallback).
    pub fn parametric_prediction(&self, a: usize, a2: usize) -> f64 {
        self.pair_dist[a][a2].unwrap_or(self.pooled_dist).median()
    }

    pub fn median_prediction(&self, a: usize, a2: usize) -> f64 {
        self.pair_median[a][a2].unwrap_or(self.global_median)
    }
}

/// Mean-absolute-error report for one predictor over a test set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaeReport {
    /// Sum of absolute errors per (a, a'); pair MAE = abs_err / counts.
    pub abs_err: Vec<Vec<f64>>,
    pub counts: Vec<Vec<usize>>,
    pub overall: f64,
    pub n_predictions: usize,
}

impl MaeReport {
    pub fn pair_mae(&self, a: usize, a2: usize) -> Option<f64> {
        (self.counts[a][a2] > 0).then(|| self.abs_err[a][a2] / self.counts[a][a2] as f64)
    }
}

/// Score a predictor over all eligible positions of a test set. Targets are
/// the intervals at positions t_start..; transitions into END are skipped
/// because their interval is the fixed terminal marker, not an observation.
pub fn evaluate_predictor(
    vocab: &ActionVocab,
    data: &[EventSequence],
    t_start: usize,
    mut predict: impl FnMut(&EventSequence, usize, usize) -> Result<f64>,
) -> Result<MaeReport> {
    let na = vocab.size();
    let end = vocab.end_id();
    let mut abs_err = vec![vec![0.0; na]; na];
    let mut counts = vec![vec![0usize; na]; na];
    let mut total = 0.0;
    let mut n = 0usize;
    for seq in data {
        for i in t_start.max(1)..seq.len() {
            let a2 = seq.actions[i];
            if a2 == end {
                continue;
            }
            let prefix = EventSequence {
                actions: seq.actions[..i].to_vec(),
                times: seq.times[..i].to_vec(),
                complete: false,
            };
            let pred = predict(&prefix, seq.actions[i - 1], a2)?;
            let err = (pred - seq.times[i]).abs();
            abs_err[seq.actions[i - 1]][a2] += err;
            counts[seq.actions[i - 1]][a2] += 1;
            total += err;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyData("no eligible prediction targets".into()));
    }
    Ok(MaeReport {
        abs_err,
        counts,
        overall: total / n as f64,
        n_predictions: n,
    })
}

/// Model-based MAE over a test set.
pub fn evaluate_mae(
    params: &ModelParams,
    data: &[EventSequence],
    cfg: &PredictConfig,
) -> Result<MaeReport> {
    cfg.check()?;
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    evaluate_predictor(&params.vocab, data, cfg.t_start, |prefix, _a, a2| {
        predict_next_time(params, prefix, a2, cfg, &mut rng)
    })
}

/// Baseline MAE over a test set (no prefix inference needed).
pub fn evaluate_baseline_mae(
    vocab: &ActionVocab,
    baselines: &BaselineTables,
    data: &[EventSequence],
    t_start: usize,
    nonparametric: bool,
) -> Result<MaeReport> {
    evaluate_predictor(vocab, data, t_start, |_prefix, a, a2| {
        Ok(if nonparametric {
            baselines.median_prediction(a, a2)
        } else {
            baselines.parametric_prediction(a, a2)
        })
    })
}

/// Maximum-posterior class per sequence; ties break to the lowest index.
pub fn classify(params: &ModelParams, data: &[EventSequence]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(data.len());
    for seq in data {
        let tables = posteriors_with(params, seq, &InferenceOpts::for_sequence(params, seq))?;
        out.push(argmax(&tables.class_post));
    }
    Ok(out)
}

/// For each class, the index of the member sequence with the highest
/// length-normalized class-conditional log-likelihood; ties break to the
/// earliest index.
pub fn representatives(params: &ModelParams, data: &[EventSequence]) -> Result<Vec<usize>> {
    let k = params.n_classes();
    let labels = classify(params, data)?;
    let mut best: Vec<Option<(usize, f64)>> = vec![None; k];
    for (idx, seq) in data.iter().enumerate() {
        let c = labels[idx];
        let tables = posteriors_with(params, seq, &InferenceOpts::for_sequence(params, seq))?;
        let score = tables.per_class_loglik[c] / seq.len() as f64;
        match best[c] {
            Some((_, s)) if s >= score => {}
            _ => best[c] = Some((idx, score)),
        }
    }
    best.into_iter()
        .enumerate()
        .map(|(c, b)| b.map(|(idx, _)| idx).ok_or(Error::EmptyClass(c)))
        .collect()
}

/// One row of the MAE summary table.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaeTableRow {
    pub predictor: String,
    /// Overall MAE per parametric family, in `TimeFamily::ALL` order.
    pub by_family: [f64; 3],
    /// Nonparametric per-pair training-median baseline (family-free, so the
    /// same value on every row).
    pub median: f64,
}

/// Build the predictor-by-family MAE table: baselines fit on `train`,
/// models fit per family on `train` via the supplied closure, all scored on
/// `test`.
pub fn mae_table(
    vocab: &ActionVocab,
    train: &[EventSequence],
    test: &[EventSequence],
    cfg: &PredictConfig,
    eps_tau: f64,
    mut fit_model: impl FnMut(TimeFamily) -> Result<ModelParams>,
) -> Result<Vec<MaeTableRow>> {
    let mut empirical = [0.0; 3];
    let mut mixture = [0.0; 3];
    let mut arg = [0.0; 3];
    let mut median = 0.0;
    for (fi, &family) in TimeFamily::ALL.iter().enumerate() {
        let baselines = BaselineTables::fit(vocab, train, family, eps_tau)?;
        empirical[fi] =
            evaluate_baseline_mae(vocab, &baselines, test, cfg.t_start, false)?.overall;
        if fi == 0 {
            median =
                evaluate_baseline_mae(vocab, &baselines, test, cfg.t_start, true)?.overall;
        }
        let model = fit_model(family)?;
        let mut c = cfg.clone();
        c.mode = PredictionMode::Mixture;
        mixture[fi] = evaluate_mae(&model, test, &c)?.overall;
        c.mode = PredictionMode::Argmax;
        arg[fi] = evaluate_mae(&model, test, &c)?.overall;
    }
    Ok(vec![
        MaeTableRow { predictor: "empirical".into(), by_family: empirical, median },
        MaeTableRow { predictor: "mixture".into(), by_family: mixture, median },
        MaeTableRow { predictor: "argmax".into(), by_family: arg, median },
    ])
}

/// Render the table as CSV.
pub fn mae_table_csv(rows: &[MaeTableRow]) -> String {
    let mut out = String::from("predictor,geometric,exponential,weibull,median\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.predictor,
            crate::report::fmt_f64(r.by_family[0]),
            crate::report::fmt_f64(r.by_family[1]),
            crate::report::fmt_f64(r.by_family[2]),
            crate::report::fmt_f64(r.median),
        ));
    }
    out
}
