//! EM parameter estimation: initialization, streaming E-step over the DP
//! posteriors, closed-form/numerical M-steps, convergence control and fit
//! tracing.

use crate::error::{Error, Result};
use crate::inference::{posteriors_with, InferenceOpts};
use crate::model::{ActionVocab, EventSequence, ModelParams, StageRange};
use crate::timedist::{default_dist, fit_family, TimeFamily, WeightedTimeSample, EPS_TAU};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitMode {
    /// Uniform responsibilities; when class hints are given, epsilon is
    /// added to the hinted class and the row renormalized.
    UniformEps,
    /// Hints required; same epsilon scheme.
    ProvidedLabels,
    /// Labels from action-frequency clustering, then the epsilon scheme.
    FrequencySeeded,
}

impl std::str::FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform_eps" => Ok(InitMode::UniformEps),
            "provided_labels" => Ok(InitMode::ProvidedLabels),
            "frequency_seeded" => Ok(InitMode::FrequencySeeded),
            other => Err(Error::InvalidParameter(format!("unknown init mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    pub n_classes: usize,
    pub stages: StageRange,
    pub family: TimeFamily,
    pub max_iters: usize,
    pub min_iters: usize,
    pub loglik_rel_tol: f64,
    pub seed: u64,
    pub init_mode: InitMode,
    pub epsilon: f64,
    pub alpha0: f64,
    /// When false, EM runs with all time log-weights forced to 0 and the
    /// time distributions are fit once afterwards from the final
    /// responsibilities (the untimed two-step baseline).
    pub time_in_em: bool,
    pub eps_tau: f64,
}

impl FitConfig {
    pub fn new(n_classes: usize, stages: StageRange, family: TimeFamily, seed: u64) -> Self {
        FitConfig {
            n_classes,
            stages,
            family,
            max_iters: 200,
            min_iters: 5,
            loglik_rel_tol: 1e-6,
            seed,
            init_mode: InitMode::UniformEps,
            epsilon: 0.1,
            alpha0: 1e-3,
            time_in_em: true,
            eps_tau: EPS_TAU,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.n_classes < 1 {
            return Err(Error::InvalidParameter("n_classes must be >= 1".into()));
        }
        if !(self.loglik_rel_tol > 0.0) {
            return Err(Error::InvalidParameter("loglik_rel_tol must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidParameter("epsilon must be in [0, 1)".into()));
        }
        if self.alpha0 < 0.0 {
            return Err(Error::InvalidParameter("alpha0 must be >= 0".into()));
        }
        Ok(())
    }
}

/// Expected counts accumulated over one E-step pass.
#[derive(Debug, Clone)]
pub struct SufficientStats {
    /// N[c][a][s][a']: expected action-transition counts.
    pub trans: Vec<Vec<Vec<Vec<f64>>>>,
    /// M[c][a'][s][b]: expected stage-transition counts, b = stay/advance.
    pub stage_trans: Vec<Vec<Vec<[f64; 2]>>>,
    /// R[c]: total class responsibility.
    pub class_resp: Vec<f64>,
    /// I[c][a1]: initial-action responsibility.
    pub init_action: Vec<Vec<f64>>,
    /// Weighted interval samples per (c, a, a'), transitions into END excluded.
    pub time_samples: Vec<Vec<Vec<Vec<WeightedTimeSample>>>>,
    pub n_used: usize,
    pub n_skipped: usize,
}

impl SufficientStats {
    fn zeros(k: usize, na: usize, r: usize) -> Self {
        SufficientStats {
            trans: vec![vec![vec![vec![0.0; na]; r]; na]; k],
            stage_trans: vec![vec![vec![[0.0; 2]; r]; na]; k],
            class_resp: vec![0.0; k],
            init_action: vec![vec![0.0; na]; k],
            time_samples: vec![vec![vec![Vec::new(); na]; na]; k],
            n_used: 0,
            n_skipped: 0,
        }
    }
}

/// Per-iteration fit trace.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterRecord {
    pub iter: usize,
    pub total_loglik: f64,
    pub mean_loglik: f64,
    pub max_param_delta: f64,
    pub seconds: f64,
    pub n_skipped: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FitTrace {
    pub iters: Vec<IterRecord>,
    pub converged: bool,
}

impl FitTrace {
    /// CSV with the documented columns. The seconds column is wall time and
    /// is the one column not reproducible across re-runs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,total_loglik,mean_loglik,max_param_delta,seconds\n");
        for r in &self.iters {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.iter,
                crate::report::fmt_f64(r.total_loglik),
                crate::report::fmt_f64(r.mean_loglik),
                crate::report::fmt_f64(r.max_param_delta),
                crate::report::fmt_f64(r.seconds),
            ));
        }
        out
    }
}

/// Initial hard stage assignment: positions split into `r` equal-length
/// contiguous blocks, clamped to unit steps when r > m.
pub fn initial_stage_blocks(m: usize, r: usize) -> Vec<usize> {
    let mut stages = Vec::with_capacity(m);
    let mut prev = 0usize;
    for i in 0..m {
        let mut s = i * r / m;
        if i > 0 {
            s = s.min(prev + 1);
        } else {
            s = 0;
        }
        s = s.min(r - 1);
        stages.push(s);
        prev = s;
    }
    stages
}

/// Initial per-sequence class responsibilities.
pub fn initial_responsibilities(
    n: usize,
    k: usize,
    epsilon: f64,
    labels: Option<&[usize]>,
) -> Result<Vec<Vec<f64>>> {
    if let Some(labels) = labels {
        if labels.len() != n {
            return Err(Error::LabelOutOfRange(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::LabelOutOfRange(format!("label {bad} >= k = {k}")));
        }
        Ok(labels
            .iter()
            .map(|&l| {
                let mut row = vec![1.0 / k as f64; k];
                row[l] += epsilon;
                let z = 1.0 + epsilon;
                for v in &mut row {
                    *v /= z;
                }
                row
            })
            .collect())
    } else {
        Ok(vec![vec![1.0 / k as f64; k]; n])
    }
}

/// Lightweight k-medoids-style clustering on cosine similarity of
/// action-frequency vectors; stand-in for the K-medoids initialization used
/// on real data.
pub fn frequency_cluster(
    data: &[EventSequence],
    vocab: &ActionVocab,
    k: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    let n = data.len();
    if k <= 1 || n == 0 {
        return vec![0; n];
    }
    let na = vocab.size();
    let vectors: Vec<Vec<f64>> = data
        .iter()
        .map(|seq| {
            let mut v = vec![0.0; na];
            for &a in &seq.actions {
                if a != vocab.end_id() {
                    v[a] += 1.0;
                }
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                for x in &mut v {
                    *x /= norm;
                }
            }
            v
        })
        .collect();
    let dist = |a: &[f64], b: &[f64]| -> f64 {
        1.0 - a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>()
    };

    // farthest-point seeding
    let mut medoids = vec![rng.gen_range(0..n)];
    while medoids.len() < k {
        let next = (0..n)
            .max_by(|&i, &j| {
                let di = medoids.iter().map(|&m| dist(&vectors[i], &vectors[m])).fold(f64::MAX, f64::min);
                let dj = medoids.iter().map(|&m| dist(&vectors[j], &vectors[m])).fold(f64::MAX, f64::min);
                di.partial_cmp(&dj).unwrap()
            })
            .unwrap();
        medoids.push(next);
    }

    let assign = |medoids: &[usize]| -> Vec<usize> {
        (0..n)
            .map(|i| {
                medoids
                    .iter()
                    .enumerate()
                    .min_by(|(_, &a), (_, &b)| {
                        dist(&vectors[i], &vectors[a])
                            .partial_cmp(&dist(&vectors[i], &vectors[b]))
                            .unwrap()
                    })
                    .map(|(c, _)| c)
                    .unwrap()
            })
            .collect()
    };

    let mut labels = assign(&medoids);
    for _ in 0..3 {
        // medoid update: member minimizing total in-cluster distance
        for c in 0..k {
            let members: Vec<usize> = (0..n).filter(|&i| labels[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            medoids[c] = *members
                .iter()
                .min_by(|&&i, &&j| {
                    let di: f64 = members.iter().map(|&m| dist(&vectors[i], &vectors[m])).sum();
                    let dj: f64 = members.iter().map(|&m| dist(&vectors[j], &vectors[m])).sum();
                    di.partial_cmp(&dj).unwrap()
                })
                .unwrap();
        }
        labels = assign(&medoids);
    }
    labels
}

/// Initialize a model from hard equal-block stages and the configured class
/// responsibilities. Time distributions start uniform across classes, fit
/// on the pooled observed intervals per action pair.
pub fn initialize(
    data: &[EventSequence],
    vocab: &ActionVocab,
    cfg: &FitConfig,
    labels: Option<&[usize]>,
) -> Result<ModelParams> {
    cfg.check()?;
    if data.is_empty() {
        return Err(Error::EmptyData("no sequences to fit".into()));
    }
    let k = cfg.n_classes;
    let na = vocab.size();
    let r = cfg.stages.count();
    let end = vocab.end_id();

    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let seeded_labels;
    let labels = match cfg.init_mode {
        InitMode::UniformEps => labels,
        InitMode::ProvidedLabels => Some(labels.ok_or_else(|| {
            Error::InvalidParameter("provided_labels init requires class hints".into())
        })?),
        InitMode::FrequencySeeded => {
            seeded_labels = frequency_cluster(data, vocab, k, &mut rng);
            Some(seeded_labels.as_slice())
        }
    };
    let resp = initial_responsibilities(data.len(), k, cfg.epsilon, labels)?;

    let mut stats = SufficientStats::zeros(k, na, r);
    for (seq, resp_row) in data.iter().zip(&resp) {
        let m = seq.len();
        let stages = initial_stage_blocks(m, r);
        for c in 0..k {
            let w = resp_row[c];
            stats.class_resp[c] += w;
            stats.init_action[c][seq.actions[0]] += w;
            for i in 1..m {
                let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
                let (s_prev, s) = (stages[i - 1], stages[i]);
                stats.trans[c][a_prev][s_prev][a] += w;
                stats.stage_trans[c][a][s_prev][(s - s_prev).min(1)] += w;
            }
        }
        for i in 1..m {
            if seq.actions[i] != end {
                // pooled (class-independent) samples live in class slot 0
                stats.time_samples[0][seq.actions[i - 1]][seq.actions[i]]
                    .push(WeightedTimeSample::new(seq.times[i], 1.0));
            }
        }
        stats.n_used += 1;
    }

    let fallback = ModelParams::uniform(
        vocab.clone(),
        cfg.stages,
        k,
        default_dist(cfg.family),
    );
    let mut model = m_step_categoricals(&stats, cfg, &fallback);

    // uniform-across-classes time init: one fit per pair, copied to every class
    let pooled: Vec<WeightedTimeSample> = stats.time_samples[0]
        .iter()
        .flatten()
        .flatten()
        .copied()
        .collect();
    let global = if pooled.is_empty() {
        default_dist(cfg.family)
    } else {
        fit_family(cfg.family, &pooled, cfg.eps_tau)?
    };
    for a in 0..na {
        for a2 in 0..na {
            let cell = &stats.time_samples[0][a][a2];
            let d = if cell.is_empty() {
                global
            } else {
                fit_family(cfg.family, cell, cfg.eps_tau)?
            };
            for c in 0..k {
                model.theta_t[c][a][a2] = d;
            }
        }
    }
    Ok(model)
}

/// E-step: stream the DP posteriors over the dataset and accumulate
/// expected counts. Returns the stats, the total log-likelihood of the
/// scored sequences, and leaves skipped zero-likelihood sequences counted
/// in the stats.
pub fn e_step(
    params: &ModelParams,
    data: &[EventSequence],
    time_in_em: bool,
) -> Result<(SufficientStats, f64)> {
    let k = params.n_classes();
    let na = params.n_actions();
    let r = params.n_stages();
    let end = params.vocab.end_id();
    let mut stats = SufficientStats::zeros(k, na, r);
    let mut total_ll = 0.0;

    for seq in data {
        let mut opts = InferenceOpts::for_sequence(params, seq);
        if !time_in_em {
            opts = opts.without_time();
        }
        let tables = match posteriors_with(params, seq, &opts) {
            Ok(t) => t,
            Err(Error::ZeroLikelihood) => {
                stats.n_skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        total_ll += tables.loglik;
        stats.n_used += 1;
        let m = seq.len();
        for c in 0..k {
            let q = tables.class_post[c];
            if q == 0.0 {
                continue;
            }
            stats.class_resp[c] += q;
            stats.init_action[c][seq.actions[0]] += q;
            for i in 1..m {
                let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
                for s in 0..r {
                    let ms = tables.marginal(c, i - 1, s);
                    if ms > 0.0 {
                        stats.trans[c][a_prev][s][a] += q * ms;
                    }
                    let stay = tables.pair(c, i, s, 0);
                    if stay > 0.0 {
                        stats.stage_trans[c][a][s][0] += q * stay;
                    }
                    let adv = tables.pair(c, i, s, 1);
                    if adv > 0.0 {
                        stats.stage_trans[c][a][s][1] += q * adv;
                    }
                }
                if a != end {
                    stats.time_samples[c][a_prev][a].push(WeightedTimeSample::new(seq.times[i], q));
                }
            }
        }
    }
    Ok((stats, total_ll))
}

/// Categorical part of the M-step (theta_C, pi_A, theta_A, theta_S).
/// Zero-count rows retain the previous parameters.
fn m_step_categoricals(stats: &SufficientStats, cfg: &FitConfig, prev: &ModelParams) -> ModelParams {
    let k = cfg.n_classes;
    let na = prev.n_actions();
    let r = cfg.stages.count();
    let a0 = cfg.alpha0;
    let mut model = prev.clone();

    let total_resp: f64 = stats.class_resp.iter().sum();
    if total_resp > 0.0 {
        let z = total_resp + a0 * k as f64;
        model.theta_c = stats.class_resp.iter().map(|&x| (x + a0) / z).collect();
    }

    let end = prev.vocab.end_id();
    for c in 0..k {
        let init_total: f64 = stats.init_action[c].iter().sum();
        if init_total > 0.0 {
            // smoothed over non-END actions only; END stays at zero
            let z = init_total + a0 * (na - 1) as f64;
            model.pi_a[c] = stats.init_action[c]
                .iter()
                .enumerate()
                .map(|(a, &x)| if a == end { 0.0 } else { (x + a0) / z })
                .collect();
        }
        for a in 0..na {
            for s in 0..r {
                let row = &stats.trans[c][a][s];
                let raw: f64 = row.iter().sum();
                if raw > 0.0 {
                    let z = raw + a0 * na as f64;
                    model.theta_a[c][a][s] = row.iter().map(|&x| (x + a0) / z).collect();
                }
                let srow = stats.stage_trans[c][a][s];
                if s + 1 >= r {
                    model.theta_s[c][a][s] = [1.0, 0.0];
                } else {
                    let sraw = srow[0] + srow[1];
                    if sraw > 0.0 {
                        let z = sraw + 2.0 * a0;
                        model.theta_s[c][a][s] = [(srow[0] + a0) / z, (srow[1] + a0) / z];
                    }
                }
            }
        }
    }
    model
}

fn m_step_time(stats: &SufficientStats, cfg: &FitConfig, model: &mut ModelParams) -> Result<()> {
    let end = model.vocab.end_id();
    for c in 0..cfg.n_classes {
        for a in 0..model.n_actions() {
            for a2 in 0..model.n_actions() {
                if a2 == end {
                    continue;
                }
                let cell = &stats.time_samples[c][a][a2];
                let w: f64 = cell.iter().map(|s| s.weight).sum();
                if w > 1e-12 {
                    model.theta_t[c][a][a2] = fit_family(cfg.family, cell, cfg.eps_tau)?;
                }
            }
        }
    }
    Ok(())
}

/// Full M-step. Cells with zero expected weight keep the previous
/// parameters.
pub fn m_step(stats: &SufficientStats, cfg: &FitConfig, prev: &ModelParams) -> Result<ModelParams> {
    let mut model = m_step_categoricals(stats, cfg, prev);
    if cfg.time_in_em {
        m_step_time(stats, cfg, &mut model)?;
    }
    Ok(model)
}

/// Run EM to convergence. `labels` are optional per-sequence class hints
/// used by the initializer.
pub fn fit(
    data: &[EventSequence],
    vocab: &ActionVocab,
    cfg: &FitConfig,
    labels: Option<&[usize]>,
) -> Result<(ModelParams, FitTrace)> {
    let start = Instant::now();
    let mut params = initialize(data, vocab, cfg, labels)?;
    let mut trace = FitTrace::default();
    let mut prev_ll = f64::NEG_INFINITY;

    for iter in 0..cfg.max_iters {
        let (stats, ll) = e_step(&params, data, cfg.time_in_em)?;
        if stats.n_used == 0 {
            return Err(Error::ZeroLikelihood);
        }
        let next = m_step(&stats, cfg, &params)?;
        let delta = params.max_abs_delta(&next);
        trace.iters.push(IterRecord {
            iter,
            total_loglik: ll,
            mean_loglik: ll / stats.n_used as f64,
            max_param_delta: delta,
            seconds: start.elapsed().as_secs_f64(),
            n_skipped: stats.n_skipped,
        });
        params = next;
        if iter + 1 >= cfg.min_iters {
            let rel = (ll - prev_ll) / prev_ll.abs().max(1e-300);
            if rel >= 0.0 && rel < cfg.loglik_rel_tol {
                trace.converged = true;
                break;
            }
        }
        prev_ll = ll;
    }

    if !cfg.time_in_em {
        // two-step baseline: fit the time model once from the final
        // responsibilities of the untimed EM
        let (stats, _) = e_step(&params, data, false)?;
        m_step_time(&stats, cfg, &mut params)?;
    }
    Ok((params, trace))
}

/// Mean per-sequence log-likelihood of a dataset under a model; skipped
/// zero-likelihood sequences are excluded from the mean and counted.
pub fn mean_log_likelihood(params: &ModelParams, data: &[EventSequence]) -> (f64, usize) {
    let mut total = 0.0;
    let mut used = 0usize;
    for seq in data {
        if let Ok(ll) = crate::inference::sequence_log_likelihood(params, seq) {
            total += ll;
            used += 1;
        }
    }
    if used == 0 {
        (f64::NEG_INFINITY, 0)
    } else {
        (total / used as f64, data.len() - used)
    }
}
