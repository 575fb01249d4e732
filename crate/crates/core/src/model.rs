//! Parameter containers, vocabularies, and the exact joint log-probability
//! of a fully observed (actions, times, stages, class) configuration.

use crate::error::{Error, Result};
use crate::math::{ln_prob, LOG_ZERO};
use crate::timedist::{TimeDist, TimeFamily};
use serde::{Deserialize, Serialize};

/// Reserved terminal action label.
pub const END_LABEL: &str = "__END__";

/// Action vocabulary. The terminal END action is always present and is, by
/// construction, the last id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionVocab {
    names: Vec<String>,
    end_id: usize,
}

impl ActionVocab {
    /// Build from non-terminal labels; END is appended.
    pub fn from_labels<S: AsRef<str>>(labels: &[S]) -> Result<Self> {
        let mut names: Vec<String> = Vec::with_capacity(labels.len() + 1);
        for l in labels {
            let l = l.as_ref();
            if l.is_empty() {
                return Err(Error::Data("empty action label".into()));
            }
            if l == END_LABEL {
                return Err(Error::Data(format!(
                    "reserved label {END_LABEL} may not appear in input"
                )));
            }
            if names.iter().any(|n| n == l) {
                return Err(Error::Data(format!("duplicate action label '{l}'")));
            }
            names.push(l.to_string());
        }
        names.push(END_LABEL.to_string());
        let end_id = names.len() - 1;
        Ok(ActionVocab { names, end_id })
    }

    /// Synthetic vocabulary a0..a{n-1} plus END.
    pub fn synthetic(n_actions: usize) -> Self {
        let labels: Vec<String> = (0..n_actions).map(|i| format!("a{i}")).collect();
        ActionVocab::from_labels(&labels).expect("synthetic labels are valid")
    }

    pub fn size(&self) -> usize {
        self.names.len()
    }

    pub fn end_id(&self) -> usize {
        self.end_id
    }

    pub fn label(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id_of(&self, label: &str) -> Option<usize> {
        self.names.iter().position(|n| n == label)
    }

    /// Ids of the non-terminal actions.
    pub fn non_end_ids(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.size()).filter(move |&a| a != self.end_id)
    }
}

/// Admissible final-stage window: complete sequences reach `r_plus` stages,
/// incomplete ones may stop anywhere in `r_minus..=r_plus`. Stage counts are
/// 1-based in this type; run-time stage indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRange {
    pub r_minus: usize,
    pub r_plus: usize,
}

impl StageRange {
    pub fn new(r_minus: usize, r_plus: usize) -> Result<Self> {
        if r_minus < 1 || r_minus > r_plus {
            return Err(Error::InvalidParameter(format!(
                "stage range requires 1 <= r_minus <= r_plus, got {r_minus}..{r_plus}"
            )));
        }
        Ok(StageRange { r_minus, r_plus })
    }

    pub fn fixed(r: usize) -> Result<Self> {
        StageRange::new(r, r)
    }

    /// Number of stages r (= r_plus).
    pub fn count(&self) -> usize {
        self.r_plus
    }

    /// 0-based inclusive terminal window for a sequence.
    pub fn terminal_window(&self, complete: bool) -> (usize, usize) {
        if complete {
            (self.r_plus - 1, self.r_plus - 1)
        } else {
            (self.r_minus - 1, self.r_plus - 1)
        }
    }
}

/// One record: action ids terminated by END, and the intervals (days)
/// between consecutive actions, with times[0] = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSequence {
    pub actions: Vec<usize>,
    pub times: Vec<f64>,
    /// Treatment finished before the data cutoff; narrows the terminal
    /// stage window to exactly r_plus stages.
    #[serde(default)]
    pub complete: bool,
}

impl EventSequence {
    pub fn new(actions: Vec<usize>, times: Vec<f64>) -> Self {
        EventSequence {
            actions,
            times,
            complete: false,
        }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self, vocab: &ActionVocab) -> Result<()> {
        let m = self.actions.len();
        if m != self.times.len() {
            return Err(Error::Data(format!(
                "actions/times length mismatch: {} vs {}",
                m,
                self.times.len()
            )));
        }
        if m < 2 {
            return Err(Error::Data("sequence must have at least 2 events".into()));
        }
        if self.times[0] != 0.0 {
            return Err(Error::Data(format!(
                "first interval must be 0, got {}",
                self.times[0]
            )));
        }
        if let Some(t) = self.times.iter().find(|&&t| !(t >= 0.0)) {
            return Err(Error::Data(format!("negative or NaN interval {t}")));
        }
        let end = vocab.end_id();
        if self.actions.iter().any(|&a| a >= vocab.size()) {
            return Err(Error::Data("action id out of vocabulary range".into()));
        }
        let end_count = self.actions.iter().filter(|&&a| a == end).count();
        if end_count != 1 || *self.actions.last().unwrap() != end {
            return Err(Error::Data(
                "END must occur exactly once, as the final action".into(),
            ));
        }
        Ok(())
    }
}

/// A latent stage assignment for one sequence, 0-based stage indices.
pub type StageSeq = Vec<usize>;

/// Full parameter set theta = {theta_C, pi_A, pi_S, theta_A, theta_S,
/// theta_T} plus vocabulary and stage-range metadata.
///
/// Index conventions (all 0-based): `theta_a[c][a][s]` is the categorical
/// over the next action given previous action `a`, previous stage `s`, class
/// `c`; `theta_s[c][a_next][s]` is `[stay, advance]` over the next stage
/// given the current action and previous stage; `theta_t[c][a][a_next]` is
/// the inter-event time distribution; `pi_a[c]` the initial-action
/// distribution; `pi_s[c][a1]` the initial-stage distribution (a point mass
/// on stage 0 throughout).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub vocab: ActionVocab,
    pub stages: StageRange,
    pub family: TimeFamily,
    pub theta_c: Vec<f64>,
    pub pi_a: Vec<Vec<f64>>,
    pub pi_s: Vec<Vec<Vec<f64>>>,
    pub theta_a: Vec<Vec<Vec<Vec<f64>>>>,
    pub theta_s: Vec<Vec<Vec<[f64; 2]>>>,
    pub theta_t: Vec<Vec<Vec<TimeDist>>>,
}

const SIMPLEX_TOL: f64 = 1e-9;

impl ModelParams {
    pub fn n_classes(&self) -> usize {
        self.theta_c.len()
    }

    pub fn n_actions(&self) -> usize {
        self.vocab.size()
    }

    pub fn n_stages(&self) -> usize {
        self.stages.count()
    }

    /// Uniform model (valid by construction); time cells take `dist`.
    pub fn uniform(
        vocab: ActionVocab,
        stages: StageRange,
        k: usize,
        dist: TimeDist,
    ) -> Self {
        let na = vocab.size();
        let r = stages.count();
        let end = vocab.end_id();
        let n_start = na - 1;
        let pi_a_row: Vec<f64> = (0..na)
            .map(|a| if a == end { 0.0 } else { 1.0 / n_start as f64 })
            .collect();
        let mut pi_s_row = vec![0.0; r];
        pi_s_row[0] = 1.0;
        let theta_a_row = |a: usize| -> Vec<f64> {
            if a == end {
                let mut row = vec![0.0; na];
                row[end] = 1.0;
                row
            } else {
                vec![1.0 / na as f64; na]
            }
        };
        let theta_s_row = |s: usize| -> [f64; 2] {
            if s + 1 >= r {
                [1.0, 0.0]
            } else {
                [0.5, 0.5]
            }
        };
        ModelParams {
            vocab,
            stages,
            family: dist.family(),
            theta_c: vec![1.0 / k as f64; k],
            pi_a: vec![pi_a_row; k],
            pi_s: vec![vec![pi_s_row; na]; k],
            theta_a: (0..k)
                .map(|_| (0..na).map(|a| vec![theta_a_row(a); r]).collect())
                .collect(),
            theta_s: (0..k)
                .map(|_| (0..na).map(|_| (0..r).map(theta_s_row).collect()).collect())
                .collect(),
            theta_t: vec![vec![vec![dist; na]; na]; k],
        }
    }

    #[inline]
    pub fn log_theta_c(&self, c: usize) -> f64 {
        ln_prob(self.theta_c[c])
    }

    #[inline]
    pub fn log_pi_a(&self, c: usize, a: usize) -> f64 {
        ln_prob(self.pi_a[c][a])
    }

    #[inline]
    pub fn log_pi_s(&self, c: usize, a1: usize, s: usize) -> f64 {
        ln_prob(self.pi_s[c][a1][s])
    }

    #[inline]
    pub fn log_theta_a(&self, c: usize, a_prev: usize, s_prev: usize, a_next: usize) -> f64 {
        ln_prob(self.theta_a[c][a_prev][s_prev][a_next])
    }

    /// log p(s_next | a_next, s_prev, c); `advance` selects s_next = s_prev + 1.
    #[inline]
    pub fn log_theta_s(&self, c: usize, a_next: usize, s_prev: usize, advance: bool) -> f64 {
        ln_prob(self.theta_s[c][a_next][s_prev][advance as usize])
    }

    /// Log time-weight of the transition (a_prev -> a_next) at interval tau.
    /// Transitions into END carry weight 1: the END event's interval is a
    /// model artifact, not observed data.
    #[inline]
    pub fn log_time_weight(&self, c: usize, a_prev: usize, a_next: usize, tau: f64) -> f64 {
        if a_next == self.vocab.end_id() {
            return 0.0;
        }
        self.theta_t[c][a_prev][a_next]
            .log_weight(tau)
            .unwrap_or(LOG_ZERO)
    }

    /// Serialize to the canonical JSON document.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: ModelParams =
            serde_json::from_str(s).map_err(|e| Error::Data(format!("model JSON: {e}")))?;
        Ok(m)
    }

    /// Largest absolute parameter difference against another model of the
    /// same shape (used for convergence traces).
    pub fn max_abs_delta(&self, other: &ModelParams) -> f64 {
        let mut d: f64 = 0.0;
        for (a, b) in self.theta_c.iter().zip(&other.theta_c) {
            d = d.max((a - b).abs());
        }
        for (ra, rb) in self.pi_a.iter().zip(&other.pi_a) {
            for (a, b) in ra.iter().zip(rb) {
                d = d.max((a - b).abs());
            }
        }
        for (c_a, c_b) in self.theta_a.iter().zip(&other.theta_a) {
            for (m_a, m_b) in c_a.iter().zip(c_b) {
                for (r_a, r_b) in m_a.iter().zip(m_b) {
                    for (a, b) in r_a.iter().zip(r_b) {
                        d = d.max((a - b).abs());
                    }
                }
            }
        }
        for (c_a, c_b) in self.theta_s.iter().zip(&other.theta_s) {
            for (m_a, m_b) in c_a.iter().zip(c_b) {
                for (r_a, r_b) in m_a.iter().zip(m_b) {
                    d = d.max((r_a[0] - r_b[0]).abs()).max((r_a[1] - r_b[1]).abs());
                }
            }
        }
        for (c_a, c_b) in self.theta_t.iter().zip(&other.theta_t) {
            for (m_a, m_b) in c_a.iter().zip(c_b) {
                for (t_a, t_b) in m_a.iter().zip(m_b) {
                    let pa = t_a.params();
                    let pb = t_b.params();
                    d = d.max((pa[0] - pb[0]).abs()).max((pa[1] - pb[1]).abs());
                }
            }
        }
        d
    }
}

/// Accumulated invariant violations; empty iff the model is well-formed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            writeln!(f, "model ok")
        } else {
            for v in &self.violations {
                writeln!(f, "{v}")?;
            }
            Ok(())
        }
    }
}

fn check_simplex(report: &mut Vec<String>, name: &str, row: &[f64]) {
    if let Some(x) = row.iter().find(|&&x| x < 0.0 || !x.is_finite()) {
        report.push(format!("{name} has negative or non-finite mass ({x})"));
        return;
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        report.push(format!("{name} not normalized (sum={sum})"));
    }
}

/// Report every violated model invariant.
pub fn validate_model(params: &ModelParams) -> ValidationReport {
    let mut v = Vec::new();
    let k = params.n_classes();
    let na = params.n_actions();
    let r = params.n_stages();
    let end = params.vocab.end_id();

    if k == 0 {
        v.push("model has zero classes".into());
    }
    if params.stages.r_minus < 1 || params.stages.r_minus > params.stages.r_plus {
        v.push(format!(
            "invalid stage range {}..{}",
            params.stages.r_minus, params.stages.r_plus
        ));
    }

    check_simplex(&mut v, "theta_C", &params.theta_c);

    let shape_ok = params.pi_a.len() == k
        && params.pi_s.len() == k
        && params.theta_a.len() == k
        && params.theta_s.len() == k
        && params.theta_t.len() == k
        && params.pi_a.iter().all(|x| x.len() == na)
        && params
            .theta_a
            .iter()
            .all(|x| x.len() == na && x.iter().all(|y| y.len() == r && y.iter().all(|z| z.len() == na)))
        && params
            .theta_s
            .iter()
            .all(|x| x.len() == na && x.iter().all(|y| y.len() == r))
        && params
            .theta_t
            .iter()
            .all(|x| x.len() == na && x.iter().all(|y| y.len() == na));
    if !shape_ok {
        v.push("parameter tensor shapes inconsistent with vocab/stages/classes".into());
        return ValidationReport { violations: v };
    }

    for c in 0..k {
        check_simplex(&mut v, &format!("pi_A[c={c}]"), &params.pi_a[c]);
        if params.pi_a[c][end] > 0.0 {
            v.push(format!("pi_A[c={c}] assigns mass to END as initial action"));
        }
        for a in 0..na {
            check_simplex(&mut v, &format!("pi_S[c={c},a={a}]"), &params.pi_s[c][a]);
            if params.pi_s[c][a].len() != r {
                v.push(format!("pi_S[c={c},a={a}] wrong length"));
                continue;
            }
            if params.pi_s[c][a][0] < 1.0 - SIMPLEX_TOL {
                v.push(format!(
                    "pi_S[c={c},a={a}] not a point mass on the first stage"
                ));
            }
            for s in 0..r {
                check_simplex(
                    &mut v,
                    &format!("theta_A[a={a},s={s},c={c}]"),
                    &params.theta_a[c][a][s],
                );
                let row = params.theta_s[c][a][s];
                check_simplex(&mut v, &format!("theta_S[a={a},s={s},c={c}]"), &row);
                // stage-skip mass: any advance at the top stage jumps out of S
                if s + 1 >= r && row[1] > 0.0 {
                    v.push(format!("stage-skip mass at (a={a},{},c={c})", s + 1));
                }
            }
            for a2 in 0..na {
                if let Err(e) = params.theta_t[c][a][a2].check() {
                    v.push(format!("theta_T[a={a},a'={a2},c={c}]: {e}"));
                }
                if params.theta_t[c][a][a2].family() != params.family {
                    v.push(format!(
                        "theta_T[a={a},a'={a2},c={c}] family differs from model family"
                    ));
                }
            }
        }
        // no transitions out of END: the END row must be inert (point mass END)
        for s in 0..r {
            let row = &params.theta_a[c][end][s];
            if (row[end] - 1.0).abs() > SIMPLEX_TOL {
                v.push(format!("theta_A[a=END,s={s},c={c}] allows transitions out of END"));
            }
        }
    }

    ValidationReport { violations: v }
}

fn check_stage_seq(stages: &StageSeq, m: usize, r: usize) -> Result<()> {
    if stages.len() != m {
        return Err(Error::InvalidStages(format!(
            "stage sequence length {} != {m}",
            stages.len()
        )));
    }
    if stages[0] != 0 {
        return Err(Error::InvalidStages("stages must start at the first stage".into()));
    }
    for w in stages.windows(2) {
        if w[1] < w[0] || w[1] > w[0] + 1 {
            return Err(Error::InvalidStages(format!(
                "stages must be non-decreasing with unit steps, got {} -> {}",
                w[0], w[1]
            )));
        }
    }
    if stages.iter().any(|&s| s >= r) {
        return Err(Error::InvalidStages("stage index out of range".into()));
    }
    Ok(())
}

/// Exact joint log-probability log p(a, tau, s, c) of a fully observed
/// configuration; -inf when any factor is zero.
pub fn log_joint(
    params: &ModelParams,
    seq: &EventSequence,
    stages: &StageSeq,
    c: usize,
) -> Result<f64> {
    let m = seq.len();
    check_stage_seq(stages, m, params.n_stages())?;
    if c >= params.n_classes() {
        return Err(Error::InvalidParameter(format!("class id {c} out of range")));
    }

    let mut lp = params.log_theta_c(c)
        + params.log_pi_a(c, seq.actions[0])
        + params.log_pi_s(c, seq.actions[0], stages[0]);
    for i in 1..m {
        let (a_prev, a) = (seq.actions[i - 1], seq.actions[i]);
        let (s_prev, s) = (stages[i - 1], stages[i]);
        lp += params.log_theta_a(c, a_prev, s_prev, a);
        lp += params.log_theta_s(c, a, s_prev, s == s_prev + 1);
        lp += params.log_time_weight(c, a_prev, a, seq.times[i]);
        if lp == LOG_ZERO {
            return Ok(LOG_ZERO);
        }
    }
    Ok(lp)
}
