//! Sampling: random models from the hyper-priors, and sequences from a
//! model via the generative process.

use crate::error::{Error, Result};
use crate::model::{ActionVocab, EventSequence, ModelParams, StageRange, StageSeq};
use crate::timedist::{TimeDist, TimeFamily};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

/// Hyper-laws for random model generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelHyperPrior {
    pub alpha_c: f64,
    pub alpha_a: f64,
    pub alpha_s_stay: f64,
    pub alpha_s_advance: f64,
    /// geometric p ~ Beta(a, b)
    pub geom_beta: (f64, f64),
    /// exponential rate ~ Gamma(shape, scale)
    pub exp_gamma: (f64, f64),
    /// Weibull shape ~ U(lo, hi)
    pub weib_shape: (f64, f64),
    /// Weibull scale ~ U(lo, hi)
    pub weib_scale: (f64, f64),
}

impl Default for ModelHyperPrior {
    fn default() -> Self {
        ModelHyperPrior {
            alpha_c: 1.0,
            alpha_a: 1.0,
            alpha_s_stay: 0.7,
            alpha_s_advance: 0.3,
            geom_beta: (5.0, 2.0),
            exp_gamma: (2.0, 1.0),
            weib_shape: (2.0, 5.0),
            weib_scale: (1.0, 1.5),
        }
    }
}

impl ModelHyperPrior {
    pub fn check(&self) -> Result<()> {
        let vals = [
            self.alpha_c,
            self.alpha_a,
            self.alpha_s_stay,
            self.alpha_s_advance,
            self.geom_beta.0,
            self.geom_beta.1,
            self.exp_gamma.0,
            self.exp_gamma.1,
            self.weib_shape.0,
            self.weib_scale.0,
        ];
        if vals.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::InvalidParameter(
                "hyper-parameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Symmetric/general Dirichlet draw via normalized gammas.
fn dirichlet<R: Rng + ?Sized>(alphas: &[f64], rng: &mut R) -> Vec<f64> {
    loop {
        let mut draws: Vec<f64> = alphas
            .iter()
            .map(|&a| Gamma::new(a, 1.0).expect("alpha > 0").sample(rng))
            .collect();
        let sum: f64 = draws.iter().sum();
        if sum > 0.0 && sum.is_finite() {
            for d in &mut draws {
                *d /= sum;
            }
            return draws;
        }
    }
}

fn sample_time_dist<R: Rng + ?Sized>(
    family: TimeFamily,
    hyper: &ModelHyperPrior,
    rng: &mut R,
) -> TimeDist {
    match family {
        TimeFamily::Geometric => {
            let (a, b) = hyper.geom_beta;
            let p = Beta::new(a, b).expect("valid beta").sample(rng);
            TimeDist::Geometric { p: p.clamp(1e-9, 1.0) }
        }
        TimeFamily::Exponential => {
            let (shape, scale) = hyper.exp_gamma;
            let rate = Gamma::new(shape, scale).expect("valid gamma").sample(rng);
            TimeDist::Exponential { rate: rate.max(1e-9) }
        }
        TimeFamily::Weibull => TimeDist::Weibull {
            shape: rng.gen_range(hyper.weib_shape.0..hyper.weib_shape.1),
            scale: rng.gen_range(hyper.weib_scale.0..hyper.weib_scale.1),
        },
    }
}

/// Draw a full random model from the hyper-priors. The result always passes
/// validation: pi_S is a point mass on the first stage, the top stage's
/// advance mass is forced to stay, and END is inert.
pub fn sample_model<R: Rng + ?Sized>(
    vocab: ActionVocab,
    stages: StageRange,
    k: usize,
    family: TimeFamily,
    hyper: &ModelHyperPrior,
    rng: &mut R,
) -> ModelParams {
    hyper.check().expect("valid hyper-prior");
    let na = vocab.size();
    let r = stages.count();
    let end = vocab.end_id();

    let theta_c = dirichlet(&vec![hyper.alpha_c; k], rng);

    let mut pi_a = Vec::with_capacity(k);
    let mut theta_a = Vec::with_capacity(k);
    let mut theta_s = Vec::with_capacity(k);
    let mut theta_t = Vec::with_capacity(k);
    let mut pi_s_row = vec![0.0; r];
    pi_s_row[0] = 1.0;

    let mut end_row = vec![0.0; na];
    end_row[end] = 1.0;

    for _ in 0..k {
        // initial action over non-terminal actions only
        let draw = dirichlet(&vec![hyper.alpha_a; na - 1], rng);
        let mut row = vec![0.0; na];
        let mut j = 0;
        for a in 0..na {
            if a != end {
                row[a] = draw[j];
                j += 1;
            }
        }
        pi_a.push(row);

        theta_a.push(
            (0..na)
                .map(|a| {
                    (0..r)
                        .map(|_| {
                            if a == end {
                                end_row.clone()
                            } else {
                                dirichlet(&vec![hyper.alpha_a; na], rng)
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );

        theta_s.push(
            (0..na)
                .map(|_| {
                    (0..r)
                        .map(|s| {
                            if s + 1 >= r {
                                [1.0, 0.0]
                            } else {
                                let d =
                                    dirichlet(&[hyper.alpha_s_stay, hyper.alpha_s_advance], rng);
                                [d[0], d[1]]
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );

        theta_t.push(
            (0..na)
                .map(|_| {
                    (0..na)
                        .map(|_| sample_time_dist(family, hyper, rng))
                        .collect::<Vec<_>>()
                })
                .collect::<Vec<_>>(),
        );
    }

    ModelParams {
        pi_s: vec![vec![pi_s_row; na]; k],
        vocab,
        stages,
        family,
        theta_c,
        pi_a,
        theta_a,
        theta_s,
        theta_t,
    }
}

fn sample_categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u: f64 = rng.gen();
    for (i, &p) in probs.iter().enumerate() {
        u -= p;
        if u <= 0.0 {
            return i;
        }
    }
    probs.len() - 1
}

const MAX_REJECTIONS: usize = 10_000;

/// Draw one sequence and its latent truth from the model. Whole-sequence
/// rejection enforces termination by `max_len` and a final stage inside the
/// configured window.
pub fn sample_sequence<R: Rng + ?Sized>(
    params: &ModelParams,
    rng: &mut R,
    max_len: usize,
) -> Result<(EventSequence, StageSeq, usize)> {
    let end = params.vocab.end_id();
    let window = params.stages.terminal_window(false);

    for _ in 0..MAX_REJECTIONS {
        let c = sample_categorical(&params.theta_c, rng);
        let a1 = sample_categorical(&params.pi_a[c], rng);
        let mut actions = vec![a1];
        let mut times = vec![0.0];
        let mut stages: StageSeq = vec![0];
        let mut ok = false;
        while actions.len() < max_len {
            let a_prev = *actions.last().unwrap();
            let s_prev = *stages.last().unwrap();
            let a = sample_categorical(&params.theta_a[c][a_prev][s_prev], rng);
            let advance = rng.gen::<f64>() < params.theta_s[c][a][s_prev][1];
            let s = if advance { s_prev + 1 } else { s_prev };
            if a == end {
                // END's interval is a model artifact, fixed at 0
                actions.push(a);
                times.push(0.0);
                stages.push(s);
                ok = true;
                break;
            }
            let tau = params.theta_t[c][a_prev][a].sample(rng)?;
            actions.push(a);
            times.push(tau);
            stages.push(s);
        }
        if !ok {
            continue;
        }
        let s_final = *stages.last().unwrap();
        if s_final < window.0 || s_final > window.1 {
            continue;
        }
        let seq = EventSequence::new(actions, times);
        return Ok((seq, stages, c));
    }
    Err(Error::UnreachableEnd(99))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn sampled_models_are_valid() {
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for family in TimeFamily::ALL {
            for _ in 0..5 {
                let m = sample_model(
                    ActionVocab::synthetic(5),
                    StageRange::new(2, 4).unwrap(),
                    3,
                    family,
                    &ModelHyperPrior::default(),
                    &mut rng,
                );
                let report = validate_model(&m);
                assert!(report.is_ok(), "{report}");
            }
        }
    }

    #[test]
    fn stage_row_dirichlet_means() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let hyper = ModelHyperPrior::default();
        // (0.7, 0.3) rows: empirical mean stay-probability near 0.7
        let mut sum = 0.0;
        let n = 10_000;
        for _ in 0..n {
            sum += dirichlet(&[hyper.alpha_s_stay, hyper.alpha_s_advance], &mut rng)[0];
        }
        assert!((sum / n as f64 - 0.7).abs() < 0.02);

        // symmetric alphas: mean 0.5
        let mut sum = 0.0;
        for _ in 0..n {
            sum += dirichlet(&[0.5, 0.5], &mut rng)[0];
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.02);
    }

    #[test]
    fn geometric_hyper_law_mean() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let hyper = ModelHyperPrior::default();
        let n = 10_000;
        let mean: f64 = (0..n)
            .map(|_| match sample_time_dist(TimeFamily::Geometric, &hyper, &mut rng) {
                TimeDist::Geometric { p } => p,
                _ => unreachable!(),
            })
            .sum::<f64>()
            / n as f64;
        assert!((mean - 5.0 / 7.0).abs() < 0.01);
    }

    #[test]
    fn immediate_end_model_gives_length_two() {
        let mut m = ModelParams::uniform(
            ActionVocab::synthetic(2),
            StageRange::fixed(1).unwrap(),
            1,
            TimeDist::Exponential { rate: 1.0 },
        );
        let end = m.vocab.end_id();
        for a in 0..m.n_actions() {
            let mut row = vec![0.0; m.n_actions()];
            row[end] = 1.0;
            m.theta_a[0][a][0] = row;
        }
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for _ in 0..50 {
            let (seq, stages, _) = sample_sequence(&m, &mut rng, 500).unwrap();
            assert_eq!(seq.len(), 2);
            assert_eq!(stages, vec![0, 0]);
        }
    }

    #[test]
    fn single_stage_truth_is_all_zeros() {
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let m = sample_model(
            ActionVocab::synthetic(3),
            StageRange::fixed(1).unwrap(),
            2,
            TimeFamily::Exponential,
            &ModelHyperPrior::default(),
            &mut rng,
        );
        for _ in 0..20 {
            let (_, stages, _) = sample_sequence(&m, &mut rng, 500).unwrap();
            assert!(stages.iter().all(|&s| s == 0));
        }
    }

    #[test]
    fn emitted_sequences_satisfy_invariants() {
        let mut rng = ChaCha12Rng::seed_from_u64(6);
        let m = sample_model(
            ActionVocab::synthetic(6),
            StageRange::new(2, 3).unwrap(),
            2,
            TimeFamily::Weibull,
            &ModelHyperPrior::default(),
            &mut rng,
        );
        let window = m.stages.terminal_window(false);
        for _ in 0..200 {
            let (seq, stages, c) = sample_sequence(&m, &mut rng, 500).unwrap();
            seq.validate(&m.vocab).unwrap();
            assert!(c < 2);
            assert_eq!(stages[0], 0);
            assert!(stages.windows(2).all(|w| w[1] >= w[0] && w[1] <= w[0] + 1));
            let last = *stages.last().unwrap();
            assert!(last >= window.0 && last <= window.1);
        }
    }

    #[test]
    fn seed_determinism() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m = sample_model(
            ActionVocab::synthetic(4),
            StageRange::new(1, 2).unwrap(),
            2,
            TimeFamily::Geometric,
            &ModelHyperPrior::default(),
            &mut rng,
        );
        let draw = |seed: u64| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            (0..20)
                .map(|_| sample_sequence(&m, &mut rng, 500).unwrap())
                .collect::<Vec<_>>()
        };
        let a = draw(99);
        let b = draw(99);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.0, y.0);
            assert_eq!(x.1, y.1);
            assert_eq!(x.2, y.2);
        }
    }

    /// Empirical bigram frequencies against exact marginal bigram
    /// probabilities for a single-stage, single-class model (where the
    /// action process is a plain absorbing Markov chain).
    #[test]
    fn bigram_frequencies_match_chain() {
        let mut m = ModelParams::uniform(
            ActionVocab::synthetic(2),
            StageRange::fixed(1).unwrap(),
            1,
            TimeDist::Exponential { rate: 1.0 },
        );
        m.theta_a[0][0][0] = vec![0.5, 0.3, 0.2];
        m.theta_a[0][1][0] = vec![0.2, 0.4, 0.4];
        m.pi_a[0] = vec![0.6, 0.4, 0.0];
        let max_len = 500;

        // exact expected bigram counts via occupancy of the chain
        let mut occ = vec![0.6, 0.4];
        let mut expected = vec![vec![0.0; 3]; 2];
        for _ in 1..max_len {
            for a in 0..2 {
                for b in 0..3 {
                    expected[a][b] += occ[a] * m.theta_a[0][a][0][b];
                }
            }
            let next = vec![
                occ[0] * m.theta_a[0][0][0][0] + occ[1] * m.theta_a[0][1][0][0],
                occ[0] * m.theta_a[0][0][0][1] + occ[1] * m.theta_a[0][1][0][1],
            ];
            occ = next;
        }
        let total: f64 = expected.iter().flatten().sum();
        for row in &mut expected {
            for v in row.iter_mut() {
                *v /= total;
            }
        }

        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let mut counts = vec![vec![0.0; 3]; 2];
        let mut n = 0.0;
        for _ in 0..100_000 {
            let (seq, _, _) = sample_sequence(&m, &mut rng, max_len).unwrap();
            for w in seq.actions.windows(2) {
                counts[w[0]][w[1]] += 1.0;
                n += 1.0;
            }
        }
        let mut tv = 0.0;
        for a in 0..2 {
            for b in 0..3 {
                tv += (counts[a][b] / n - expected[a][b]).abs();
            }
        }
        assert!(tv / 2.0 < 1e-2, "total variation {tv}");
    }

    /// Mean log-likelihood of samples under the generating model exceeds the
    /// value under an independently drawn model of the same shape.
    #[test]
    fn likelihood_separates_true_model() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for trial in 0..5 {
            let truth = sample_model(
                ActionVocab::synthetic(5),
                StageRange::new(1, 3).unwrap(),
                2,
                TimeFamily::Exponential,
                &ModelHyperPrior::default(),
                &mut rng,
            );
            let other = sample_model(
                ActionVocab::synthetic(5),
                StageRange::new(1, 3).unwrap(),
                2,
                TimeFamily::Exponential,
                &ModelHyperPrior::default(),
                &mut rng,
            );
            let mut ll_true = 0.0;
            let mut ll_other = 0.0;
            let n = 400;
            for _ in 0..n {
                let (seq, _, _) = sample_sequence(&truth, &mut rng, 500).unwrap();
                ll_true += crate::inference::sequence_log_likelihood(&truth, &seq).unwrap();
                ll_other += crate::inference::sequence_log_likelihood(&other, &seq)
                    .unwrap_or(f64::NEG_INFINITY);
            }
            assert!(ll_true > ll_other, "trial {trial}: {ll_true} vs {ll_other}");
        }
    }
}
