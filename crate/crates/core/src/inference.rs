//! Exact posterior inference over stages and classes for one sequence: the
//! forward-backward dynamic program, and a brute-force enumeration oracle
//! for small instances.

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, log_sum_exp2, LOG_ZERO};
use crate::model::{EventSequence, ModelParams, StageSeq};

/// Per-call inference options. `window` is the 0-based inclusive range of
/// admissible final stages; `ignore_time` forces every time log-weight to 0
/// (the untimed degenerate mode).
#[derive(Debug, Clone, Copy)]
pub struct InferenceOpts {
    pub window: (usize, usize),
    pub ignore_time: bool,
}

impl InferenceOpts {
    /// Window from the sequence's completeness flag.
    pub fn for_sequence(params: &ModelParams, seq: &EventSequence) -> Self {
        InferenceOpts {
            window: params.stages.terminal_window(seq.complete),
            ignore_time: false,
        }
    }

    /// Fully relaxed terminal window, for prefixes that are not complete
    /// treatments.
    pub fn prefix(params: &ModelParams) -> Self {
        InferenceOpts {
            window: (0, params.n_stages() - 1),
            ignore_time: false,
        }
    }

    pub fn without_time(mut self) -> Self {
        self.ignore_time = true;
        self
    }
}

/// DP tables and posteriors for one sequence. Matrices are row-major m x r;
/// `stage_pair[c]` is indexed `((i-1) * r + s) * 2 + b` where `b` selects
/// stay (0) or advance (1), for i in 1..m.
#[derive(Debug, Clone)]
pub struct PosteriorTables {
    pub log_f: Vec<Vec<f64>>,
    pub log_g: Vec<Vec<f64>>,
    pub stage_marginal: Vec<Vec<f64>>,
    pub stage_pair: Vec<Vec<f64>>,
    pub class_post: Vec<f64>,
    pub per_class_loglik: Vec<f64>,
    pub loglik: f64,
    pub m: usize,
    pub r: usize,
}

impl PosteriorTables {
    #[inline]
    pub fn marginal(&self, c: usize, i: usize, s: usize) -> f64 {
        self.stage_marginal[c][i * self.r + s]
    }

    /// p(s_{i-1} = s, s_i = s + b | c, a, tau), i >= 1.
    #[inline]
    pub fn pair(&self, c: usize, i: usize, s: usize, b: usize) -> f64 {
        self.stage_pair[c][((i - 1) * self.r + s) * 2 + b]
    }
}

/// Time log-weights for positions 1..m (index i-1), one row per class.
fn time_log_weights(params: &ModelParams, seq: &EventSequence, opts: &InferenceOpts) -> Vec<Vec<f64>> {
    let m = seq.len();
    (0..params.n_classes())
        .map(|c| {
            (1..m)
                .map(|i| {
                    if opts.ignore_time {
                        0.0
                    } else {
                        params.log_time_weight(c, seq.actions[i - 1], seq.actions[i], seq.times[i])
                    }
                })
                .collect()
        })
        .collect()
}

fn forward_with_tlw(
    params: &ModelParams,
    c: usize,
    seq: &EventSequence,
    tlw: &[f64],
) -> Vec<f64> {
    let m = seq.len();
    let r = params.n_stages();
    let mut f = vec![LOG_ZERO; m * r];
    for s in 0..r {
        f[s] = params.log_pi_a(c, seq.actions[0]) + params.log_pi_s(c, seq.actions[0], s);
    }
    for i in 1..m {
        let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
        let t = tlw[i - 1];
        for s in 0..r {
            let stay = f[(i - 1) * r + s]
                + params.log_theta_a(c, a_prev, s, a)
                + params.log_theta_s(c, a, s, false);
            let advance = if s > 0 {
                f[(i - 1) * r + s - 1]
                    + params.log_theta_a(c, a_prev, s - 1, a)
                    + params.log_theta_s(c, a, s - 1, true)
            } else {
                LOG_ZERO
            };
            let v = log_sum_exp2(stay, advance);
            f[i * r + s] = if v == LOG_ZERO { LOG_ZERO } else { v + t };
        }
    }
    f
}

fn backward_with_tlw(
    params: &ModelParams,
    c: usize,
    seq: &EventSequence,
    tlw: &[f64],
    window: (usize, usize),
) -> Vec<f64> {
    let m = seq.len();
    let r = params.n_stages();
    let mut g = vec![LOG_ZERO; m * r];
    for s in window.0..=window.1 {
        g[(m - 1) * r + s] = 0.0;
    }
    for i in (0..m - 1).rev() {
        let (a, a_next) = (seq.actions[i], seq.actions[i + 1]);
        let t = tlw[i];
        for s in 0..r {
            let la = params.log_theta_a(c, a, s, a_next);
            let stay = g[(i + 1) * r + s] + la + params.log_theta_s(c, a_next, s, false);
            let advance = if s + 1 < r {
                g[(i + 1) * r + s + 1] + la + params.log_theta_s(c, a_next, s, true)
            } else {
                LOG_ZERO
            };
            let v = log_sum_exp2(stay, advance);
            g[i * r + s] = if v == LOG_ZERO { LOG_ZERO } else { v + t };
        }
    }
    g
}

/// Forward log-matrix log f_c(i, s), m x r row-major.
pub fn forward(params: &ModelParams, c: usize, seq: &EventSequence, opts: &InferenceOpts) -> Vec<f64> {
    let tlw = time_log_weights(params, seq, opts);
    forward_with_tlw(params, c, seq, &tlw[c])
}

/// Backward log-matrix log g_c(i, s), m x r row-major.
pub fn backward(params: &ModelParams, c: usize, seq: &EventSequence, opts: &InferenceOpts) -> Vec<f64> {
    let tlw = time_log_weights(params, seq, opts);
    backward_with_tlw(params, c, seq, &tlw[c], opts.window)
}

/// Full posterior tables for one sequence under the default options
/// (terminal window from the completeness flag, time factors active).
pub fn posteriors(params: &ModelParams, seq: &EventSequence) -> Result<PosteriorTables> {
    posteriors_with(params, seq, &InferenceOpts::for_sequence(params, seq))
}

pub fn posteriors_with(
    params: &ModelParams,
    seq: &EventSequence,
    opts: &InferenceOpts,
) -> Result<PosteriorTables> {
    let m = seq.len();
    let r = params.n_stages();
    let k = params.n_classes();
    if m < 1 {
        return Err(Error::Data("empty sequence".into()));
    }
    let tlw = time_log_weights(params, seq, opts);

    let mut log_f = Vec::with_capacity(k);
    let mut log_g = Vec::with_capacity(k);
    let mut per_class_loglik = vec![LOG_ZERO; k];
    for c in 0..k {
        let f = forward_with_tlw(params, c, seq, &tlw[c]);
        let g = backward_with_tlw(params, c, seq, &tlw[c], opts.window);
        let last = &f[(m - 1) * r..m * r];
        let glast = &g[(m - 1) * r..m * r];
        let ll: Vec<f64> = last.iter().zip(glast).map(|(a, b)| a + b).collect();
        per_class_loglik[c] = log_sum_exp(&ll);
        log_f.push(f);
        log_g.push(g);
    }

    let joint: Vec<f64> = (0..k)
        .map(|c| params.log_theta_c(c) + per_class_loglik[c])
        .collect();
    let loglik = log_sum_exp(&joint);
    if loglik == LOG_ZERO {
        return Err(Error::ZeroLikelihood);
    }
    let class_post: Vec<f64> = joint
        .iter()
        .map(|&j| if j == LOG_ZERO { 0.0 } else { (j - loglik).exp() })
        .collect();

    let mut stage_marginal = vec![vec![0.0; m * r]; k];
    let mut stage_pair = vec![vec![0.0; (m - 1) * r * 2]; k];
    for c in 0..k {
        let ll_c = per_class_loglik[c];
        if ll_c == LOG_ZERO {
            continue;
        }
        for i in 0..m {
            for s in 0..r {
                let v = log_f[c][i * r + s] + log_g[c][i * r + s];
                if v != LOG_ZERO {
                    stage_marginal[c][i * r + s] = (v - ll_c).exp();
                }
            }
        }
        for i in 1..m {
            let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
            let t = tlw[c][i - 1];
            for s in 0..r {
                for b in 0..2 {
                    let s_next = s + b;
                    if s_next >= r {
                        continue;
                    }
                    let v = log_f[c][(i - 1) * r + s]
                        + params.log_theta_a(c, a_prev, s, a)
                        + params.log_theta_s(c, a, s, b == 1)
                        + t
                        + log_g[c][i * r + s_next];
                    if v != LOG_ZERO {
                        stage_pair[c][((i - 1) * r + s) * 2 + b] = (v - ll_c).exp();
                    }
                }
            }
        }
    }

    Ok(PosteriorTables {
        log_f,
        log_g,
        stage_marginal,
        stage_pair,
        class_post,
        per_class_loglik,
        loglik,
        m,
        r,
    })
}

/// log p(a, tau) for one sequence.
pub fn sequence_log_likelihood(params: &ModelParams, seq: &EventSequence) -> Result<f64> {
    Ok(posteriors(params, seq)?.loglik)
}

/// Enumerate every monotone unit-step stage sequence with s_1 = first stage
/// and s_m inside the window.
pub fn enumerate_stage_seqs(m: usize, r: usize, window: (usize, usize)) -> Vec<StageSeq> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    fn rec(cur: &mut StageSeq, i: usize, m: usize, r: usize, window: (usize, usize), out: &mut Vec<StageSeq>) {
        if i == m {
            let last = cur[m - 1];
            if last >= window.0 && last <= window.1 {
                out.push(cur.clone());
            }
            return;
        }
        let prev = cur[i - 1];
        for s in prev..=(prev + 1).min(r - 1) {
            cur[i] = s;
            rec(cur, i + 1, m, r, window, out);
        }
    }
    if m == 1 {
        if window.0 == 0 {
            out.push(cur);
        }
    } else {
        rec(&mut cur, 1, m, r, window, &mut out);
    }
    out
}

/// Exact posteriors by explicit enumeration of all stage sequences and
/// classes. Test oracle for the DP; guarded against blow-up.
pub fn brute_force_posteriors(params: &ModelParams, seq: &EventSequence) -> Result<PosteriorTables> {
    brute_force_posteriors_with(params, seq, &InferenceOpts::for_sequence(params, seq))
}

pub fn brute_force_posteriors_with(
    params: &ModelParams,
    seq: &EventSequence,
    opts: &InferenceOpts,
) -> Result<PosteriorTables> {
    let m = seq.len();
    let r = params.n_stages();
    let k = params.n_classes();
    if m > 12 || r > 4 {
        return Err(Error::InstanceTooLarge { m, r });
    }
    let tlw = time_log_weights(params, seq, opts);
    let paths = enumerate_stage_seqs(m, r, opts.window);

    // log p(a, tau, s | c) for one path (theta_C excluded)
    let path_logprob = |c: usize, stages: &StageSeq| -> f64 {
        let mut lp = params.log_pi_a(c, seq.actions[0]) + params.log_pi_s(c, seq.actions[0], stages[0]);
        for i in 1..m {
            let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
            lp += params.log_theta_a(c, a_prev, stages[i - 1], a)
                + params.log_theta_s(c, a, stages[i - 1], stages[i] == stages[i - 1] + 1)
                + tlw[c][i - 1];
            if lp == LOG_ZERO {
                return LOG_ZERO;
            }
        }
        lp
    };

    let mut per_class_loglik = vec![LOG_ZERO; k];
    let mut marg = vec![vec![LOG_ZERO; m * r]; k];
    let mut pair = vec![vec![LOG_ZERO; (m - 1) * r * 2]; k];
    for c in 0..k {
        for stages in &paths {
            let lp = path_logprob(c, stages);
            if lp == LOG_ZERO {
                continue;
            }
            per_class_loglik[c] = log_sum_exp2(per_class_loglik[c], lp);
            for (i, &s) in stages.iter().enumerate() {
                marg[c][i * r + s] = log_sum_exp2(marg[c][i * r + s], lp);
            }
            for i in 1..m {
                let b = stages[i] - stages[i - 1];
                let idx = ((i - 1) * r + stages[i - 1]) * 2 + b;
                pair[c][idx] = log_sum_exp2(pair[c][idx], lp);
            }
        }
    }

    let joint: Vec<f64> = (0..k)
        .map(|c| params.log_theta_c(c) + per_class_loglik[c])
        .collect();
    let loglik = log_sum_exp(&joint);
    if loglik == LOG_ZERO {
        return Err(Error::ZeroLikelihood);
    }
    let class_post: Vec<f64> = joint
        .iter()
        .map(|&j| if j == LOG_ZERO { 0.0 } else { (j - loglik).exp() })
        .collect();

    let norm = |v: &Vec<f64>, ll: f64| -> Vec<f64> {
        v.iter()
            .map(|&x| if x == LOG_ZERO || ll == LOG_ZERO { 0.0 } else { (x - ll).exp() })
            .collect()
    };
    let stage_marginal: Vec<Vec<f64>> = (0..k).map(|c| norm(&marg[c], per_class_loglik[c])).collect();
    let stage_pair: Vec<Vec<f64>> = (0..k).map(|c| norm(&pair[c], per_class_loglik[c])).collect();

    Ok(PosteriorTables {
        log_f: Vec::new(),
        log_g: Vec::new(),
        stage_marginal,
        stage_pair,
        class_post,
        per_class_loglik,
        loglik,
        m,
        r,
    })
}
