//! `stagem` command-line interface: dataset validation, model fitting,
//! sampling, prediction/classification pipelines, and the synthetic
//! recovery experiment. Every command that writes outputs also writes its
//! resolved configuration next to them.
//!
//! Exit codes: 0 success, 2 configuration/validation failure, 3 data error.

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use stagem::dataset::Dataset;
use stagem::em::{FitConfig, InitMode};
use stagem::predict::{
    evaluate_baseline_mae, evaluate_mae, mae_table_csv, predict_next_time, BaselineTables,
    MaeReport, PredictConfig, PredictionMode,
};
use stagem::report::fmt_f64;
use stagem::{
    classify, fit, mae_table, parse_dataset, parse_dataset_with_vocab, representatives,
    run_synthetic_experiment, sample_model, sample_sequence, validate_model, write_dataset,
    ActionVocab, Error, EventSequence, ModelHyperPrior, ModelParams, StageRange, SyntheticConfig,
    TimeFamily,
};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;

#[derive(Parser)]
#[command(name = "stagem", version, about = "Time-aware latent-stage sequence model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_family(s: &str) -> Result<TimeFamily, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_init(s: &str) -> Result<InitMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<PredictionMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// MIN:MAX (e.g. 3:4) or a single fixed stage count.
fn parse_stages(s: &str) -> Result<StageRange, String> {
    let parse = |t: &str| t.parse::<usize>().map_err(|e| e.to_string());
    let range = match s.split_once(':') {
        Some((lo, hi)) => StageRange::new(parse(lo)?, parse(hi)?),
        None => StageRange::fixed(parse(s)?),
    };
    range.map_err(|e| e.to_string())
}

/// Model-fitting options shared by `fit` and `mae-table`.
#[derive(Args, Clone, Serialize, Deserialize)]
struct FitOpts {
    /// Time distribution family: geometric | exponential | weibull
    #[arg(long, default_value = "weibull", value_parser = parse_family)]
    family: TimeFamily,
    /// Number of latent classes
    #[arg(long, default_value_t = 2)]
    classes: usize,
    /// Final-stage window as MIN:MAX (or a single fixed count)
    #[arg(long, default_value = "3:4", value_parser = parse_stages)]
    stages: StageRange,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Class-hint tilt added to the uniform initial responsibilities
    #[arg(long, default_value_t = 0.1)]
    epsilon: f64,
    /// Dirichlet smoothing pseudo-count in the M-step
    #[arg(long, default_value_t = 1e-3)]
    alpha0: f64,
    /// false runs untimed EM and fits the time model once afterwards
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    time_in_em: bool,
    /// Replacement for non-positive intervals in the continuous MLEs
    #[arg(long, default_value_t = 0.5)]
    eps_tau: f64,
    /// uniform_eps | provided_labels | frequency_seeded
    #[arg(long, default_value = "uniform_eps", value_parser = parse_init)]
    init: InitMode,
    #[arg(long, default_value_t = 200)]
    max_iters: usize,
}

impl FitOpts {
    fn to_config(&self) -> FitConfig {
        let mut cfg = FitConfig::new(self.classes, self.stages, self.family, self.seed);
        cfg.epsilon = self.epsilon;
        cfg.alpha0 = self.alpha0;
        cfg.time_in_em = self.time_in_em;
        cfg.eps_tau = self.eps_tau;
        cfg.init_mode = self.init;
        cfg.max_iters = self.max_iters;
        cfg
    }
}

#[derive(Args, Clone, Serialize, Deserialize)]
struct PredictOpts {
    /// mixture | argmax
    #[arg(long, default_value = "mixture", value_parser = parse_mode)]
    mode: PredictionMode,
    /// Monte Carlo draws per prediction (odd)
    #[arg(long, default_value_t = 501)]
    n_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// First 0-based position scored
    #[arg(long, default_value_t = 1)]
    t_start: usize,
}

impl PredictOpts {
    fn to_config(&self) -> PredictConfig {
        PredictConfig {
            mode: self.mode,
            n_samples: self.n_samples,
            seed: self.seed,
            t_start: self.t_start,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a dataset and/or a serialized model for structural violations
    Validate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Fit a model on a JSONL dataset
    Fit {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// JSON file of FitOpts defaults; explicit flags that differ from
        /// the built-in defaults override it
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        opts: FitOpts,
    },
    /// Draw a random model from the generator hyper-prior
    SampleModel {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "weibull", value_parser = parse_family)]
        family: TimeFamily,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value = "3:4", value_parser = parse_stages)]
        stages: StageRange,
        /// Non-terminal action count
        #[arg(long, default_value_t = 10)]
        actions: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sample sequences from a model, with ground-truth annotations
    SampleData {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        max_len: usize,
    },
    /// Per-position next-interval predictions on a dataset
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: PredictOpts,
    },
    /// Maximum-posterior class per sequence
    Classify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Most representative sequence per class
    Representative {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Next-interval MAE of one predictor over a test set
    EvalMae {
        /// Required for mixture/argmax modes
        #[arg(long)]
        model: Option<PathBuf>,
        /// Test set
        #[arg(long)]
        data: PathBuf,
        /// Training set; required for the empirical/median baseline modes
        #[arg(long)]
        train: Option<PathBuf>,
        /// mixture | argmax | empirical | median
        #[arg(long, default_value = "mixture")]
        mode: String,
        /// Baseline family for empirical mode (model modes use the model's)
        #[arg(long, default_value = "weibull", value_parser = parse_family)]
        family: TimeFamily,
        #[arg(long, default_value_t = 501)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        t_start: usize,
        #[arg(long, default_value_t = 0.5)]
        eps_tau: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full predictor-by-family MAE table on a train/test split
    MaeTable {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        train_frac: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        fit_opts: FitOpts,
        /// Monte Carlo draws per prediction (odd)
        #[arg(long, default_value_t = 501)]
        n_samples: usize,
        /// First 0-based position scored
        #[arg(long, default_value_t = 1)]
        t_start: usize,
    },
    /// Synthetic recovery grid: sample a truth, fit at growing N, report
    /// train/test log-likelihood of fitted and true models
    SyntheticExperiment {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', default_values = ["geometric", "exponential", "weibull"], value_parser = parse_family)]
        families: Vec<TimeFamily>,
        #[arg(long, default_value_t = 5)]
        repetitions: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [300usize, 500, 800, 1000, 1200, 1500, 2000, 3000])]
        n_grid: Vec<usize>,
        #[arg(long, default_value_t = 4000)]
        test_n: usize,
        #[arg(long, default_value_t = 10)]
        actions: usize,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long, default_value = "3:4", value_parser = parse_stages)]
        stages: StageRange,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 400)]
        max_len: usize,
    },
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Parse { .. }
            | Error::Data(_)
            | Error::EmptyData(_)
            | Error::Io(_)
            | Error::LabelOutOfRange(_)
            | Error::ZeroLikelihood => EXIT_DATA,
            _ => EXIT_CONFIG,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn config_err(msg: impl Into<String>) -> Failure {
    Failure { code: EXIT_CONFIG, msg: msg.into() }
}

fn read(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| Failure {
        code: EXIT_DATA,
        msg: format!("{}: {e}", path.display()),
    })
}

fn write_out(dir: &Path, name: &str, content: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(Error::from)?;
    std::fs::write(dir.join(name), content).map_err(Error::from)?;
    Ok(())
}

/// Write the resolved configuration of this run next to its outputs.
fn write_config<T: Serialize>(dir: &Path, cfg: &T) -> Result<(), Failure> {
    let json = serde_json::to_string_pretty(cfg).expect("config serializes");
    write_out(dir, "resolved_config.json", &json)
}

/// Field-wise merge: the config file supplies defaults; a flag wins only
/// when it differs from the built-in default.
fn merge_config(cli: &FitOpts, path: &Path) -> Result<FitOpts, Failure> {
    let file: serde_json::Value = serde_json::from_str(&read(path)?)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let defaults = serde_json::to_value(FitOpts::parse_defaults()).unwrap();
    let from_cli = serde_json::to_value(cli).unwrap();
    let mut merged = defaults.clone();
    let (merged_map, default_map, cli_map) = match (&mut merged, &defaults, &from_cli) {
        (serde_json::Value::Object(m), serde_json::Value::Object(d), serde_json::Value::Object(c)) => (m, d, c),
        _ => unreachable!("FitOpts serializes to an object"),
    };
    if let serde_json::Value::Object(f) = &file {
        for (key, val) in f {
            if !default_map.contains_key(key) {
                return Err(config_err(format!("unknown config key '{key}'")));
            }
            merged_map.insert(key.clone(), val.clone());
        }
    } else {
        return Err(config_err("config file must be a JSON object"));
    }
    for (key, cli_val) in cli_map {
        if cli_val != &default_map[key] {
            merged_map.insert(key.clone(), cli_val.clone());
        }
    }
    serde_json::from_value(merged).map_err(|e| config_err(format!("invalid config: {e}")))
}

impl FitOpts {
    fn parse_defaults() -> FitOpts {
        #[derive(Parser)]
        struct Defaults {
            #[command(flatten)]
            opts: FitOpts,
        }
        Defaults::parse_from(["stagem"]).opts
    }
}

fn load_model(path: &Path) -> Result<ModelParams, Failure> {
    let model = ModelParams::from_json(&read(path)?)?;
    let report = validate_model(&model);
    if !report.is_ok() {
        return Err(config_err(format!(
            "{}: invalid model:\n{}",
            path.display(),
            report.violations.join("\n")
        )));
    }
    Ok(model)
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    Ok(parse_dataset(&read(path)?)?)
}

fn load_dataset_for(path: &Path, vocab: &ActionVocab) -> Result<Dataset, Failure> {
    Ok(parse_dataset_with_vocab(&read(path)?, vocab)?)
}

fn mae_csv(vocab: &ActionVocab, report: &MaeReport) -> String {
    let mut out = String::from("prev_action,next_action,count,mae\n");
    out.push_str(&format!("*,*,{},{}\n", report.n_predictions, fmt_f64(report.overall)));
    for a in 0..vocab.size() {
        for a2 in 0..vocab.size() {
            if let Some(mae) = report.pair_mae(a, a2) {
                out.push_str(&format!(
                    "{},{},{},{}\n",
                    vocab.label(a),
                    vocab.label(a2),
                    report.counts[a][a2],
                    fmt_f64(mae)
                ));
            }
        }
    }
    out
}

/// Deterministic shuffled split indices.
fn split_indices(n: usize, train_frac: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(0x51A6E));
    idx.shuffle(&mut rng);
    let cut = ((n as f64) * train_frac).round() as usize;
    let cut = cut.clamp(1, n.saturating_sub(1).max(1));
    let test = idx.split_off(cut);
    (idx, test)
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate { data, model } => {
            if data.is_none() && model.is_none() {
                return Err(config_err("validate needs --data and/or --model"));
            }
            if let Some(path) = model {
                let text = read(&path)?;
                let model = ModelParams::from_json(&text)?;
                let report = validate_model(&model);
                if report.is_ok() {
                    println!(
                        "model ok: {} classes, {} actions, stages {}..{}, {} family",
                        model.n_classes(),
                        model.n_actions(),
                        model.stages.r_minus,
                        model.stages.r_plus,
                        model.family.name()
                    );
                } else {
                    for v in &report.violations {
                        eprintln!("violation: {v}");
                    }
                    return Err(config_err(format!(
                        "model has {} violations",
                        report.violations.len()
                    )));
                }
            }
            if let Some(path) = data {
                let ds = load_dataset(&path)?;
                for (seq, id) in ds.sequences.iter().zip(&ds.ids) {
                    seq.validate(&ds.vocab)
                        .map_err(|e| Failure { code: EXIT_DATA, msg: format!("{id}: {e}") })?;
                }
                let events: usize = ds.sequences.iter().map(|s| s.len() - 1).sum();
                println!(
                    "data ok: {} sequences, {} events, {} actions",
                    ds.sequences.len(),
                    events,
                    ds.vocab.size() - 1
                );
            }
            Ok(())
        }

        Command::Fit { data, out, config, opts } => {
            let opts = match config {
                Some(path) => merge_config(&opts, &path)?,
                None => opts,
            };
            let cfg = opts.to_config();
            cfg.check()?;
            let ds = load_dataset(&data)?;
            let hints = ds.complete_hints();
            let (model, trace) = fit(&ds.sequences, &ds.vocab, &cfg, hints.as_deref())?;
            write_config(&out, &opts)?;
            write_out(&out, "model.json", &model.to_json())?;
            write_out(&out, "fit_trace.csv", &trace.to_csv())?;
            let last = trace.iters.last().expect("at least one iteration");
            println!(
                "fit: {} iterations, loglik {:.6}, converged: {}",
                trace.iters.len(),
                last.total_loglik,
                trace.converged
            );
            Ok(())
        }

        Command::SampleModel { out, family, classes, stages, actions, seed } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                family: &'a TimeFamily,
                classes: usize,
                stages: StageRange,
                actions: usize,
                seed: u64,
            }
            if actions < 1 || classes < 1 {
                return Err(config_err("--actions and --classes must be >= 1"));
            }
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let model = sample_model(
                ActionVocab::synthetic(actions),
                stages,
                classes,
                family,
                &ModelHyperPrior::default(),
                &mut rng,
            );
            write_config(&out, &Resolved { family: &family, classes, stages, actions, seed })?;
            write_out(&out, "model.json", &model.to_json())?;
            println!("model written to {}", out.join("model.json").display());
            Ok(())
        }

        Command::SampleData { model, out, n, seed, max_len } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                model: &'a Path,
                n: usize,
                seed: u64,
                max_len: usize,
            }
            let params = load_model(&model)?;
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mut sequences = Vec::with_capacity(n);
            let mut ids = Vec::with_capacity(n);
            let mut hints = Vec::with_capacity(n);
            let mut truths = Vec::with_capacity(n);
            for i in 0..n {
                let (seq, stages, c) = sample_sequence(&params, &mut rng, max_len)?;
                sequences.push(seq);
                ids.push(format!("s{i:06}"));
                hints.push(Some(c));
                truths.push(Some(stages));
            }
            let text = write_dataset(&params.vocab, &sequences, &ids, &hints, &truths);
            write_config(&out, &Resolved { model: &model, n, seed, max_len })?;
            write_out(&out, "data.jsonl", &text)?;
            println!("{n} sequences written to {}", out.join("data.jsonl").display());
            Ok(())
        }

        Command::Predict { model, data, out, opts } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                model: &'a Path,
                data: &'a Path,
                #[serde(flatten)]
                opts: &'a PredictOpts,
            }
            let params = load_model(&model)?;
            let ds = load_dataset_for(&data, &params.vocab)?;
            let cfg = opts.to_config();
            cfg.check()?;
            let end = params.vocab.end_id();
            let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
            let mut csv =
                String::from("id,position,prev_action,next_action,observed,predicted,abs_err\n");
            for (seq, id) in ds.sequences.iter().zip(&ds.ids) {
                for i in cfg.t_start.max(1)..seq.len() {
                    let a2 = seq.actions[i];
                    if a2 == end {
                        continue;
                    }
                    let prefix = EventSequence {
                        actions: seq.actions[..i].to_vec(),
                        times: seq.times[..i].to_vec(),
                        complete: false,
                    };
                    let pred = predict_next_time(&params, &prefix, a2, &cfg, &mut rng)?;
                    csv.push_str(&format!(
                        "{id},{i},{},{},{},{},{}\n",
                        params.vocab.label(seq.actions[i - 1]),
                        params.vocab.label(a2),
                        fmt_f64(seq.times[i]),
                        fmt_f64(pred),
                        fmt_f64((pred - seq.times[i]).abs()),
                    ));
                }
            }
            write_config(&out, &Resolved { model: &model, data: &data, opts: &opts })?;
            write_out(&out, "predictions.csv", &csv)?;
            println!("predictions written to {}", out.join("predictions.csv").display());
            Ok(())
        }

        Command::Classify { model, data, out } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                model: &'a Path,
                data: &'a Path,
            }
            let params = load_model(&model)?;
            let ds = load_dataset_for(&data, &params.vocab)?;
            let labels = classify(&params, &ds.sequences)?;
            let mut csv = String::from("id,class\n");
            for (id, l) in ds.ids.iter().zip(&labels) {
                csv.push_str(&format!("{id},{l}\n"));
            }
            write_config(&out, &Resolved { model: &model, data: &data })?;
            write_out(&out, "classes.csv", &csv)?;
            println!("classes written to {}", out.join("classes.csv").display());
            Ok(())
        }

        Command::Representative { model, data, out } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                model: &'a Path,
                data: &'a Path,
            }
            let params = load_model(&model)?;
            let ds = load_dataset_for(&data, &params.vocab)?;
            let reps = representatives(&params, &ds.sequences)?;
            let mut csv = String::from("class,id,actions\n");
            for (c, &idx) in reps.iter().enumerate() {
                let actions: Vec<&str> = ds.sequences[idx]
                    .actions
                    .iter()
                    .filter(|&&a| a != params.vocab.end_id())
                    .map(|&a| params.vocab.label(a))
                    .collect();
                csv.push_str(&format!("{c},{},{}\n", ds.ids[idx], actions.join(" ")));
            }
            write_config(&out, &Resolved { model: &model, data: &data })?;
            write_out(&out, "representatives.csv", &csv)?;
            println!("representatives written to {}", out.join("representatives.csv").display());
            Ok(())
        }

        Command::EvalMae {
            model,
            data,
            train,
            mode,
            family,
            n_samples,
            seed,
            t_start,
            eps_tau,
            out,
        } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                model: Option<&'a Path>,
                data: &'a Path,
                train: Option<&'a Path>,
                mode: &'a str,
                family: &'a str,
                n_samples: usize,
                seed: u64,
                t_start: usize,
                eps_tau: f64,
            }
            let (report, vocab) = match mode.as_str() {
                "mixture" | "argmax" => {
                    let model_path = model
                        .as_deref()
                        .ok_or_else(|| config_err("model modes need --model"))?;
                    let params = load_model(model_path)?;
                    let ds = load_dataset_for(&data, &params.vocab)?;
                    let cfg = PredictConfig {
                        mode: mode.parse()?,
                        n_samples,
                        seed,
                        t_start,
                    };
                    (evaluate_mae(&params, &ds.sequences, &cfg)?, params.vocab.clone())
                }
                "empirical" | "median" => {
                    let train_path = train
                        .as_deref()
                        .ok_or_else(|| config_err("baseline modes need --train"))?;
                    let train_ds = load_dataset(train_path)?;
                    let test_ds = load_dataset_for(&data, &train_ds.vocab)?;
                    let baselines =
                        BaselineTables::fit(&train_ds.vocab, &train_ds.sequences, family, eps_tau)?;
                    let report = evaluate_baseline_mae(
                        &train_ds.vocab,
                        &baselines,
                        &test_ds.sequences,
                        t_start,
                        mode == "median",
                    )?;
                    (report, train_ds.vocab)
                }
                other => return Err(config_err(format!("unknown mode '{other}'"))),
            };
            write_config(
                &out,
                &Resolved {
                    model: model.as_deref(),
                    data: &data,
                    train: train.as_deref(),
                    mode: &mode,
                    family: family.name(),
                    n_samples,
                    seed,
                    t_start,
                    eps_tau,
                },
            )?;
            write_out(&out, "mae.csv", &mae_csv(&vocab, &report))?;
            println!(
                "overall MAE {} over {} predictions",
                fmt_f64(report.overall),
                report.n_predictions
            );
            Ok(())
        }

        Command::MaeTable { data, train_frac, out, config, fit_opts, n_samples, t_start } => {
            #[derive(Serialize)]
            struct Resolved<'a> {
                data: &'a Path,
                train_frac: f64,
                #[serde(flatten)]
                fit_opts: &'a FitOpts,
                n_samples: usize,
                t_start: usize,
            }
            if !(0.0 < train_frac && train_frac < 1.0) {
                return Err(config_err("--train-frac must be in (0, 1)"));
            }
            let fit_opts = match config {
                Some(path) => merge_config(&fit_opts, &path)?,
                None => fit_opts,
            };
            let ds = load_dataset(&data)?;
            let (train_idx, test_idx) = split_indices(ds.sequences.len(), train_frac, fit_opts.seed);
            if test_idx.is_empty() {
                return Err(Failure {
                    code: EXIT_DATA,
                    msg: "dataset too small for the requested split".into(),
                });
            }
            let train: Vec<EventSequence> =
                train_idx.iter().map(|&i| ds.sequences[i].clone()).collect();
            let test: Vec<EventSequence> =
                test_idx.iter().map(|&i| ds.sequences[i].clone()).collect();
            let pcfg = PredictConfig {
                mode: PredictionMode::Mixture,
                n_samples,
                seed: fit_opts.seed,
                t_start,
            };
            pcfg.check()?;
            let rows = mae_table(&ds.vocab, &train, &test, &pcfg, fit_opts.eps_tau, |family| {
                let mut cfg = fit_opts.to_config();
                cfg.family = family;
                Ok(fit(&train, &ds.vocab, &cfg, None)?.0)
            })?;
            write_config(
                &out,
                &Resolved { data: &data, train_frac, fit_opts: &fit_opts, n_samples, t_start },
            )?;
            write_out(&out, "mae_table.csv", &mae_table_csv(&rows))?;
            println!("table written to {}", out.join("mae_table.csv").display());
            Ok(())
        }

        Command::SyntheticExperiment {
            out,
            families,
            repetitions,
            n_grid,
            test_n,
            actions,
            classes,
            stages,
            seed,
            max_len,
        } => {
            let cfg = SyntheticConfig {
                families,
                repetitions,
                n_grid,
                test_n,
                n_actions: actions,
                n_classes: classes,
                stages,
                base_seed: seed,
                max_len,
            };
            if cfg.n_grid.is_empty() || cfg.families.is_empty() || cfg.repetitions == 0 {
                return Err(config_err("empty experiment grid"));
            }
            let rows = run_synthetic_experiment(&cfg)?;
            write_config(&out, &cfg)?;
            write_out(&out, "experiment.csv", &stagem::experiment::experiment_csv(&rows))?;
            println!("{} rows written to {}", rows.len(), out.join("experiment.csv").display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
