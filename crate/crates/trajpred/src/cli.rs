//! Batch command-line front end.
//!
//! Subcommands: `generate` a synthetic corpus, `train` a predictor bundle,
//! `predict` per-scenario tracks, `evaluate` against the kinematic baseline,
//! `robustness` for the lossy-channel study, and `gradcheck` to verify
//! backpropagation against finite differences. Every run writes a
//! `manifest.json` (command, configuration, seeds, tool version) so a run
//! can be reproduced exactly; all randomness flows from the explicit seeds.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{apply_drops, zero_order_hold, ChannelConfig};
use crate::data::{parse_trajectory_csv, resample_uniform, to_rotated_enu, write_trajectory_csv, EnuTrack, Trajectory};
use crate::error::{Error, Result};
use crate::eval::{
    emit_report, emit_robustness, robustness_eval, sliding_eval_paired, EvalMeta, PredictorKind,
};
use crate::neural::{gradient_check, NetShape, Sequence, TdlNetwork, TrainConfig};
use crate::predict::{
    baseline_state, kinematics_predict, load_bundle, save_bundle, train_bundle, BaselineConfig,
    BundleDocument, PredictionHorizon, SplitIds, BUNDLE_FORMAT_VERSION, MIN_HISTORY,
};
use crate::seed;
use crate::synth::{generate_corpus, CorpusManifest, CorpusRanges};

#[derive(Parser, Debug)]
#[command(
    name = "trajpred",
    version,
    about = "Two-stage neural trajectory prediction with a kinematic baseline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cut-in corpus (one CSV per scenario plus a manifest).
    Generate(GenerateArgs),
    /// Train the predictor bundle on a corpus directory.
    Train(TrainArgs),
    /// Write per-window predicted tracks for the test scenarios.
    Predict(PredictArgs),
    /// Evaluate the bundle and baseline; write per-step p90/mean reports.
    Evaluate(EvaluateArgs),
    /// Ideal-vs-lossy channel comparison across drop rates.
    Robustness(RobustnessArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Serialize)]
struct GenerateArgs {
    /// Number of scenarios.
    #[arg(long, default_value_t = 90)]
    n: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Broadcast rate, Hz.
    #[arg(long, default_value_t = 10.0)]
    rate_hz: f64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
struct TrainArgs {
    /// Corpus directory (scenario CSVs).
    #[arg(long)]
    data: PathBuf,
    /// Output directory for model.json, loss_curves.csv, manifest.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Learning rate.
    #[arg(long, default_value_t = 0.05)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 1200)]
    epochs: usize,
    #[arg(long, default_value_t = 40)]
    patience: usize,
    /// Prediction horizon in steps.
    #[arg(long, default_value_t = 10)]
    horizon: usize,
}

#[derive(Args, Debug, Serialize)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Evaluate all scenarios instead of only the model's test split.
    #[arg(long, default_value_t = false)]
    all: bool,
}

#[derive(Args, Debug, Serialize)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional packet drop rate applied to the input stream before
    /// prediction (errors stay measured against the clean tracks).
    #[arg(long)]
    drop_rate: Option<f64>,
    #[arg(long, default_value_t = 1)]
    channel_seed: u64,
    /// Evaluate all scenarios instead of only the model's test split.
    #[arg(long, default_value_t = false)]
    all: bool,
    /// CI gate: exit nonzero if any learned-predictor step p90 exceeds this.
    #[arg(long)]
    fail_if_p90_above: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct RobustnessArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated drop rates.
    #[arg(long, default_value = "0.0,0.4")]
    rates: String,
    #[arg(long, default_value_t = 1)]
    channel_seed: u64,
    #[arg(long, default_value_t = false)]
    all: bool,
}

#[derive(Args, Debug, Serialize)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Number of random nets per kind.
    #[arg(long, default_value_t = 10)]
    nets: usize,
    #[arg(long, default_value_t = 1e-5)]
    epsilon: f64,
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    command: &'a str,
    tool_version: &'a str,
    config: &'a C,
}

fn write_manifest<C: Serialize>(dir: &Path, command: &str, config: &C) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let manifest = Manifest {
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join("manifest.json"), text)?;
    Ok(())
}

/// Loads every `*.csv` scenario in `dir`, sorted by filename, resampling any
/// jittered file onto its inferred rate.
fn load_corpus(dir: &Path) -> Result<Vec<Trajectory>> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|e| e == "csv").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut out = Vec::with_capacity(paths.len());
    for p in paths {
        let traj = parse_trajectory_csv(&p)?;
        let traj = if traj.len() >= 2 && !traj.is_uniform(1e-6) {
            resample_uniform(&traj, traj.rate_hz)?
        } else {
            traj
        };
        out.push(traj);
    }
    Ok(out)
}

fn select_subset(trajectories: Vec<Trajectory>, ids: &[String], all: bool) -> Result<Vec<Trajectory>> {
    if all {
        return Ok(trajectories);
    }
    let selected: Vec<Trajectory> = trajectories
        .into_iter()
        .filter(|t| ids.contains(&t.scenario_id))
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(selected)
}

fn enu_tracks(trajectories: &[Trajectory]) -> Result<Vec<EnuTrack>> {
    trajectories.iter().map(|t| to_rotated_enu(t, 0)).collect()
}

fn cmd_generate(args: &GenerateArgs) -> Result<i32> {
    let ranges = CorpusRanges::default();
    let corpus = generate_corpus(args.n, args.seed, &ranges, args.rate_hz)?;
    std::fs::create_dir_all(&args.out)?;
    let mut manifest = CorpusManifest {
        seed: args.seed,
        n: args.n,
        rate_hz: args.rate_hz,
        ranges,
        scenarios: Vec::with_capacity(corpus.len()),
    };
    for s in &corpus {
        write_trajectory_csv(&s.trajectory, &args.out.join(format!("{}.csv", s.id)))?;
        manifest.scenarios.push((s.id.clone(), s.spec));
    }
    write_manifest(&args.out, "generate", &manifest)?;
    println!(
        "generated {} scenarios at {} Hz into {} (seed {})",
        corpus.len(),
        args.rate_hz,
        args.out.display(),
        args.seed
    );
    Ok(0)
}

fn cmd_train(args: &TrainArgs) -> Result<i32> {
    let trajectories = load_corpus(&args.data)?;
    let tracks = enu_tracks(&trajectories)?;
    let ids: Vec<String> = trajectories.iter().map(|t| t.scenario_id.clone()).collect();
    let dt = 1.0 / trajectories[0].rate_hz;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        momentum: args.momentum,
        max_epochs: args.epochs,
        patience: args.patience,
        seed: args.seed,
        bptt_window: 15,
    };
    let horizon = PredictionHorizon {
        steps: args.horizon,
        dt,
    };
    let trained = train_bundle(&tracks, &cfg, horizon)?;

    std::fs::create_dir_all(&args.out)?;
    let doc = BundleDocument {
        format_version: BUNDLE_FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        train_config: cfg,
        split: SplitIds::from_split(&trained.split, &ids),
        bundle: trained.bundle,
    };
    save_bundle(&doc, &args.out.join("model.json"))?;

    let mut w = csv::Writer::from_path(args.out.join("loss_curves.csv"))?;
    w.write_record(["net", "epoch", "train_mse", "cv_mse"])?;
    for (name, history) in &trained.histories {
        for e in history {
            w.write_record([
                name.clone(),
                e.epoch.to_string(),
                e.train.to_string(),
                e.cv.to_string(),
            ])?;
        }
    }
    w.flush()?;
    write_manifest(&args.out, "train", args)?;

    for (name, history) in &trained.histories {
        if let Some(last) = history.last() {
            println!(
                "{name}: {} epochs, final train mse {:.3e}, cv mse {:.3e}",
                history.len(),
                last.train,
                last.cv
            );
        }
    }
    println!(
        "split: {} train / {} cv / {} test; model written to {}",
        doc.split.train.len(),
        doc.split.cv.len(),
        doc.split.test.len(),
        args.out.join("model.json").display()
    );
    Ok(0)
}

fn cmd_predict(args: &PredictArgs) -> Result<i32> {
    let doc = load_bundle(&args.model)?;
    let trajectories = load_corpus(&args.data)?;
    let selected = select_subset(trajectories, &doc.split.test, args.all)?;
    let baseline = BaselineConfig::default();
    std::fs::create_dir_all(&args.out)?;
    let steps = doc.bundle.horizon.steps;

    for traj in &selected {
        let track = to_rotated_enu(traj, 0)?;
        let m = track.len();
        if m < MIN_HISTORY + steps {
            eprintln!("skipping {}: too short for one window", traj.scenario_id);
            continue;
        }
        let mut w =
            csv::Writer::from_path(args.out.join(format!("pred_{}.csv", traj.scenario_id)))?;
        w.write_record([
            "window", "step", "pred_x", "pred_y", "kin_x", "kin_y", "true_x", "true_y",
        ])?;
        for p in (MIN_HISTORY - 1)..(m - steps) {
            let history = track.prefix(p + 1);
            let predicted = doc.bundle.predict_trajectory(&history)?;
            let state = baseline_state(&history, &baseline)?;
            let kinematic = kinematics_predict(&state, &doc.bundle.horizon)?;
            for s in 0..steps {
                w.write_record([
                    p.to_string(),
                    (s + 1).to_string(),
                    predicted[s].0.to_string(),
                    predicted[s].1.to_string(),
                    kinematic[s].0.to_string(),
                    kinematic[s].1.to_string(),
                    track.x[p + 1 + s].to_string(),
                    track.y[p + 1 + s].to_string(),
                ])?;
            }
        }
        w.flush()?;
    }
    write_manifest(&args.out, "predict", args)?;
    println!("predicted tracks for {} scenarios", selected.len());
    Ok(0)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<i32> {
    let doc = load_bundle(&args.model)?;
    let trajectories = load_corpus(&args.data)?;
    let selected = select_subset(trajectories, &doc.split.test, args.all)?;
    let truth_tracks = enu_tracks(&selected)?;

    let drop_rate = args.drop_rate.unwrap_or(0.0);
    let input_tracks: Vec<EnuTrack> = if let Some(rate) = args.drop_rate {
        let base = seed::derive(args.channel_seed, "evaluate-drop");
        selected
            .iter()
            .enumerate()
            .map(|(j, traj)| {
                let cfg = ChannelConfig::new(rate, seed::derive_indexed(base, j as u64))?;
                let held = zero_order_hold(&apply_drops(traj, &cfg))?;
                to_rotated_enu(&held, 0)
            })
            .collect::<Result<_>>()?
    } else {
        truth_tracks.clone()
    };

    let pairs: Vec<(&EnuTrack, &EnuTrack)> =
        input_tracks.iter().zip(truth_tracks.iter()).collect();
    let meta = EvalMeta {
        corpus_id: args.data.display().to_string(),
        seed: args.channel_seed,
        drop_rate,
    };
    let report = sliding_eval_paired(&doc.bundle, &BaselineConfig::default(), &pairs, meta)?;
    emit_report(&report, &args.out)?;
    write_manifest(&args.out, "evaluate", args)?;

    println!(
        "evaluated {} windows over {} scenarios (drop rate {})",
        report.n_windows,
        pairs.len(),
        drop_rate
    );
    for kind in PredictorKind::ALL {
        let p90s: Vec<String> = report
            .stats(kind)
            .iter()
            .map(|s| format!("{:.3}", s.p90))
            .collect();
        println!("{:>9} p90/step: {}", kind.name(), p90s.join(" "));
    }

    if let Some(gate) = args.fail_if_p90_above {
        let worst = [PredictorKind::NarxLong, PredictorKind::RnnLat]
            .iter()
            .flat_map(|k| report.stats(*k).iter().map(|s| s.p90))
            .fold(0.0_f64, f64::max);
        if worst > gate {
            eprintln!("p90 gate violated: {worst:.4} > {gate:.4}");
            return Ok(1);
        }
    }
    Ok(0)
}

fn cmd_robustness(args: &RobustnessArgs) -> Result<i32> {
    let doc = load_bundle(&args.model)?;
    let trajectories = load_corpus(&args.data)?;
    let selected = select_subset(trajectories, &doc.split.test, args.all)?;
    let rates: Vec<f64> = args
        .rates
        .split(',')
        .map(|r| {
            r.trim().parse::<f64>().map_err(|e| Error::NonFiniteValue {
                row: 0,
                column: "rates".into(),
                detail: format!("{e}"),
            })
        })
        .collect::<Result<_>>()?;
    let report = robustness_eval(&doc.bundle, &selected, &rates, args.channel_seed)?;
    emit_robustness(&report, &args.out)?;
    write_manifest(&args.out, "robustness", args)?;

    for (rate, achieved) in &report.achieved {
        println!("rate {rate}: achieved drop fraction {achieved:.4}");
    }
    for row in &report.channels {
        println!(
            "rate {} channel {:>14}: forecast mse vs ideal {:.3e}",
            row.drop_rate,
            row.channel.name(),
            row.mse_vs_ideal
        );
    }
    Ok(0)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let mut worst = 0.0_f64;
    for i in 0..args.nets {
        for recurrent in [false, true] {
            let shape = if recurrent {
                NetShape {
                    n_inputs: 1 + i % 3,
                    n_delays: 2 + i % 4,
                    n_hidden: 3 + i % 5,
                    n_outputs: 1,
                    n_feedback: 0,
                    recurrent: true,
                }
            } else {
                let n_inputs = 1 + i % 3;
                let n_outputs = 1 + i % 2;
                NetShape {
                    n_inputs,
                    n_delays: 2 + i % 4,
                    n_hidden: 3 + i % 5,
                    n_outputs,
                    n_feedback: n_inputs.min(n_outputs),
                    recurrent: false,
                }
            };
            let tag = if recurrent { "rec" } else { "ff" };
            let net_seed = seed::derive(args.seed, &format!("gradcheck-{tag}-{i}"));
            let net = TdlNetwork::random(shape, net_seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(net_seed, "data"));
            let mut seq = Sequence::default();
            for _ in 0..6 {
                let window: Vec<f64> =
                    (0..shape.window_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let target: Vec<f64> =
                    (0..shape.n_outputs).map(|_| rng.random_range(-1.0..1.0)).collect();
                seq.push(window, target);
            }
            let err = gradient_check(&net, &[seq], args.epsilon)?;
            println!("net {i:2} {tag:>3} ({} params): max rel err {err:.3e}", net.num_params());
            worst = worst.max(err);
        }
    }
    println!("worst over all nets: {worst:.3e}");
    Ok(if worst < 1e-4 { 0 } else { 1 })
}

/// Entry point used by both the binary and the integration tests. Returns
/// the process exit code: 0 on success, 1 on data/validation errors, 2 on
/// usage errors.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.exit_code() == 0 { 0 } else { 2 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Robustness(args) => cmd_robustness(args),
        Command::Gradcheck(args) => cmd_gradcheck(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
