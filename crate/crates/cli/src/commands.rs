//! Subcommand implementations.

use crate::{EXIT_BROKEN, EXIT_ERROR, EXIT_OK, EXIT_TIMEOUT, EXIT_USAGE};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graspstack_core::controller::{run_episode, EpisodeModels, EpisodeOutcome};
use graspstack_core::detection::{evaluate_map, Detection, GroundTruth};
use graspstack_core::models::{
    argmax_agreement, gen_dataset_sizes, load_model, make_grasp_force_dataset, save_model,
    save_model_json, train_gesture, train_grasp_force, GestureTrainOptions, GraspForceOptions,
    ModelGraph, QuantizedModel, ALL_GESTURES, GESTURE_WINDOW_LEN,
};
use graspstack_core::plant::{gen_gesture, make_gesture_dataset, ImuSynth};
use graspstack_core::rng;
use graspstack_core::scenario::{Report, Scenario};
use graspstack_core::tensor::Tensor;
use std::fmt;
use std::path::{Path, PathBuf};

/// Seed fallback environment variable.
pub const SEED_ENV: &str = "GRASPSTACK_SEED";

#[derive(Debug)]
pub struct CliError {
    message: String,
    code: i32,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_USAGE,
        }
    }

    fn runtime(message: impl Into<String>) -> Self {
        Self {
            message: message.into(),
            code: EXIT_ERROR,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.code
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "graspstack",
    version,
    about = "Deterministic control stack and plant simulator for a vision-enabled prosthetic hand"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one or more scenario episodes and write logs/reports.
    Run(RunArgs),
    /// Train a model on internally generated synthetic data.
    Train(TrainArgs),
    /// Evaluate detection fixtures (mAP) or INT8 agreement (quant).
    Eval(EvalArgs),
    /// Generate synthetic datasets and fixtures.
    Gen(GenArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file(s) to execute.
    #[arg(long, required = true, num_args = 1..)]
    scenario: Vec<PathBuf>,
    /// Seed override (falls back to $GRASPSTACK_SEED, then the scenario).
    #[arg(long)]
    seed: Option<u64>,
    /// Episode log path (single scenario only).
    #[arg(long)]
    log: Option<PathBuf>,
    /// Report path (single scenario only).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Output directory for logs/reports (default: current directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Trained gesture model; trained in-process from --seed when omitted.
    #[arg(long)]
    gesture_model: Option<PathBuf>,
    /// Trained grasp/force model; trained in-process when omitted.
    #[arg(long)]
    grasp_model: Option<PathBuf>,
    /// Run up to N scenarios in parallel, each with isolated state.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum TrainWhich {
    Gesture,
    Graspforce,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(value_enum)]
    which: TrainWhich,
    /// Output model file (binary container).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Simulate INT8 precision in the training forward pass.
    #[arg(long)]
    qat: bool,
    /// Always run the full epoch budget.
    #[arg(long)]
    no_early_stop: bool,
    /// Also write the JSON mirror of the model file.
    #[arg(long)]
    json_mirror: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum EvalWhich {
    Map,
    Quant,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(value_enum)]
    which: EvalWhich,
    /// Fixture directory holding predictions.jsonl and groundtruth.jsonl.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// Model file for quant evaluation.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Held-out sample count for quant agreement.
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum GenWhat {
    /// Labelled gesture windows (JSONL).
    GestureData,
    /// (object_id, grasp, force) triples (JSONL).
    GraspData,
    /// The shipped hand-enumerated detection fixture pair.
    DetectionFixtures,
    /// Raw IMU trace of a scenario's gesture script (JSONL).
    ImuTrace,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(value_enum)]
    what: GenWhat,
    /// Output file (or directory for detection-fixtures).
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Sample count (defaults: 660 gesture windows, 3000 grasp points).
    #[arg(long)]
    count: Option<usize>,
    /// Scenario file (imu-trace only).
    #[arg(long)]
    scenario: Option<PathBuf>,
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Gen(args) => cmd_gen(args),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .parse::<u64>()
            .map(Some)
            .map_err(|_| CliError::usage(format!("{SEED_ENV} is not a valid u64: {v:?}"))),
        Err(_) => Ok(None),
    }
}

fn resolve_seed(flag: Option<u64>, fallback: u64) -> Result<u64> {
    Ok(flag.or(env_seed()?).unwrap_or(fallback))
}

fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read scenario {}: {e}", path.display())))?;
    Scenario::from_json(&text)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::runtime(format!("mkdir {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, contents)
        .map_err(|e| CliError::runtime(format!("write {}: {e}", path.display())))
}

/// Loads a model file, or trains the default synthetic model when absent.
fn load_or_train(
    path: Option<&Path>,
    which: TrainWhich,
    seed: u64,
) -> Result<ModelGraph> {
    if let Some(path) = path {
        return load_model(path)
            .map_err(|e| CliError::usage(format!("model {}: {e}", path.display())));
    }
    eprintln!(
        "note: no {} model supplied; training from seed {seed} (pass --{}-model to skip)",
        match which {
            TrainWhich::Gesture => "gesture",
            TrainWhich::Graspforce => "grasp",
        },
        match which {
            TrainWhich::Gesture => "gesture",
            TrainWhich::Graspforce => "grasp",
        }
    );
    match which {
        TrainWhich::Gesture => {
            let data = make_gesture_dataset(gen_dataset_sizes::GESTURE_WINDOWS, seed);
            let opts = GestureTrainOptions {
                seed,
                ..Default::default()
            };
            let (model, _) = train_gesture(&data, &opts)
                .map_err(|e| CliError::runtime(format!("gesture training failed: {e}")))?;
            Ok(model)
        }
        TrainWhich::Graspforce => {
            let data = make_grasp_force_dataset(3000, 0.01, seed);
            let opts = GraspForceOptions {
                seed,
                ..Default::default()
            };
            let (model, _) = train_grasp_force(&data, &opts)
                .map_err(|e| CliError::runtime(format!("grasp training failed: {e}")))?;
            Ok(model)
        }
    }
}

fn outcome_exit(outcome: EpisodeOutcome) -> i32 {
    match outcome {
        EpisodeOutcome::Success => EXIT_OK,
        EpisodeOutcome::Aborted => EXIT_ERROR,
        EpisodeOutcome::Broken => EXIT_BROKEN,
        EpisodeOutcome::Timeout => EXIT_TIMEOUT,
    }
}

fn cmd_run(args: RunArgs) -> Result<i32> {
    if args.scenario.len() > 1 && (args.log.is_some() || args.report.is_some()) {
        return Err(CliError::usage(
            "--log/--report apply to a single scenario; use --out-dir for batches",
        ));
    }
    let scenarios: Vec<(PathBuf, Scenario)> = args
        .scenario
        .iter()
        .map(|p| read_scenario(p).map(|s| (p.clone(), s)))
        .collect::<Result<_>>()?;

    let model_seed = resolve_seed(args.seed, 0)?;
    let models = EpisodeModels {
        gesture: load_or_train(args.gesture_model.as_deref(), TrainWhich::Gesture, model_seed)?,
        grasp: load_or_train(args.grasp_model.as_deref(), TrainWhich::Graspforce, model_seed)?,
    };

    let out_dir = args.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let jobs = args.jobs.max(1);
    let seed_flag = args.seed;
    let env = env_seed()?;

    let mut results: Vec<Option<Result<i32>>> = (0..scenarios.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for chunk_start in (0..scenarios.len()).step_by(jobs) {
            let mut handles = Vec::new();
            for (offset, (path, scenario)) in
                scenarios[chunk_start..(chunk_start + jobs).min(scenarios.len())]
                    .iter()
                    .enumerate()
            {
                let models = &models;
                let out_dir = &out_dir;
                let log_path = if scenarios.len() == 1 {
                    args.log.clone()
                } else {
                    None
                };
                let report_path = if scenarios.len() == 1 {
                    args.report.clone()
                } else {
                    None
                };
                handles.push((
                    chunk_start + offset,
                    scope.spawn(move || {
                        run_one(
                            path,
                            scenario,
                            models,
                            seed_flag.or(env),
                            log_path,
                            report_path,
                            out_dir,
                        )
                    }),
                ));
            }
            for (idx, handle) in handles {
                results[idx] = Some(handle.join().expect("episode thread panicked"));
            }
        }
    });

    let mut exit = EXIT_OK;
    for r in results.into_iter().flatten() {
        let code = r?;
        // Broken trumps timeout trumps aborted.
        exit = match (exit, code) {
            (EXIT_BROKEN, _) | (_, EXIT_BROKEN) => EXIT_BROKEN,
            (EXIT_TIMEOUT, _) | (_, EXIT_TIMEOUT) => EXIT_TIMEOUT,
            (EXIT_ERROR, _) | (_, EXIT_ERROR) => EXIT_ERROR,
            _ => EXIT_OK,
        };
    }
    Ok(exit)
}

fn run_one(
    path: &Path,
    scenario: &Scenario,
    models: &EpisodeModels,
    seed_override: Option<u64>,
    log_path: Option<PathBuf>,
    report_path: Option<PathBuf>,
    out_dir: &Path,
) -> Result<i32> {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "episode".into());
    let log_path = log_path.unwrap_or_else(|| out_dir.join(format!("{stem}.log.jsonl")));
    let report_path = report_path.unwrap_or_else(|| out_dir.join(format!("{stem}.report.json")));

    let log = run_episode(scenario, models, seed_override)
        .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    write_file(&log_path, &log.to_jsonl())?;

    let o = &log.outcome;
    let mut report = Report::new(o.seed);
    report.insert("outcome", serde_json::to_value(o.outcome).unwrap());
    report.insert("scenario", o.scenario.clone());
    report.insert("end_ms", o.end_ms);
    report.insert("close_duration_ms", o.close_duration_ms);
    report.insert("open_duration_ms", o.open_duration_ms);
    report.insert("time_to_grasp_ms", o.time_to_grasp_ms);
    report.insert("energy_mwh", o.energy_mwh);
    report.insert("camera_frames", o.camera_frames);
    report.insert(
        "max_measured_force_n",
        serde_json::to_value(o.max_measured_force_n).unwrap(),
    );
    report.insert("predicted_max_force", o.predicted_max_force);
    write_file(&report_path, &report.to_json_pretty())?;
    println!(
        "{}: {} (log {}, report {})",
        stem,
        serde_json::to_value(o.outcome).unwrap().as_str().unwrap(),
        log_path.display(),
        report_path.display()
    );
    Ok(outcome_exit(o.outcome))
}

fn finite_or_null(v: Option<f64>) -> serde_json::Value {
    match v {
        Some(x) if x.is_finite() => serde_json::json!(x),
        _ => serde_json::Value::Null,
    }
}

fn cmd_train(args: TrainArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed, 0)?;
    let mut metrics = Report::new(seed);
    let model = match args.which {
        TrainWhich::Gesture => {
            let data = make_gesture_dataset(gen_dataset_sizes::GESTURE_WINDOWS, seed);
            let mut opts = GestureTrainOptions {
                seed,
                qat: args.qat,
                ..Default::default()
            };
            if let Some(e) = args.epochs {
                opts.epochs = e;
            }
            if let Some(lr) = args.lr {
                opts.lr = lr;
            }
            if let Some(b) = args.batch {
                opts.batch = b;
            }
            if args.no_early_stop {
                opts.early_stop = None;
            }
            let (model, m) = train_gesture(&data, &opts)
                .map_err(|e| CliError::runtime(format!("gesture training failed: {e}")))?;
            metrics.insert("gesture_train_acc", m.train_accuracy);
            metrics.insert("gesture_test_acc", m.test_accuracy);
            metrics.insert("gesture_val_acc", m.val_accuracy);
            metrics.insert(
                "confusion_matrix",
                serde_json::to_value(m.confusion).unwrap(),
            );
            metrics.insert("epochs_run", m.epochs_run);
            metrics.insert("final_loss", finite_or_null(Some(m.final_loss)));
            model
        }
        TrainWhich::Graspforce => {
            let data = make_grasp_force_dataset(3000, 0.01, seed);
            let mut opts = GraspForceOptions {
                seed,
                qat: args.qat,
                ..Default::default()
            };
            if let Some(e) = args.epochs {
                opts.epochs = e;
            }
            if let Some(lr) = args.lr {
                opts.lr = lr;
            }
            if let Some(b) = args.batch {
                opts.batch = b;
            }
            let (model, m) = train_grasp_force(&data, &opts)
                .map_err(|e| CliError::runtime(format!("grasp training failed: {e}")))?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            metrics.insert("grasp_accuracy", m.grasp_accuracy);
            metrics.insert("force_mae", m.force_mae);
            metrics.insert("grasp_val_accuracy", m.val_grasp_accuracy);
            metrics.insert("force_val_mae", m.val_force_mae);
            metrics.insert("epochs_run", m.epochs_run);
            metrics.insert("final_loss", finite_or_null(Some(m.final_loss)));
            model
        }
    };
    save_model(&model, &args.out)
        .map_err(|e| CliError::runtime(format!("save {}: {e}", args.out.display())))?;
    if let Some(mirror) = &args.json_mirror {
        save_model_json(&model, mirror)
            .map_err(|e| CliError::runtime(format!("save {}: {e}", mirror.display())))?;
    }
    println!("{}", metrics.to_json_pretty());
    Ok(EXIT_OK)
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            serde_json::from_str(line).map_err(|e| {
                CliError::usage(format!("{}:{}: {e}", path.display(), i + 1))
            })
        })
        .collect()
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct PredLine {
    image_id: u32,
    class_id: u8,
    confidence: f64,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

#[derive(serde::Serialize, serde::Deserialize)]
pub struct GtLine {
    image_id: u32,
    class_id: u8,
    cx: f64,
    cy: f64,
    w: f64,
    h: f64,
}

fn cmd_eval(args: EvalArgs) -> Result<i32> {
    match args.which {
        EvalWhich::Map => {
            let dir = args
                .fixtures
                .ok_or_else(|| CliError::usage("eval map requires --fixtures <dir>"))?;
            let preds: Vec<PredLine> = read_jsonl(&dir.join("predictions.jsonl"))?;
            let gts: Vec<GtLine> = read_jsonl(&dir.join("groundtruth.jsonl"))?;
            if gts.is_empty() {
                return Err(CliError::usage("empty ground-truth fixture: mAP undefined"));
            }
            let preds: Vec<(u32, Detection)> = preds
                .into_iter()
                .map(|p| {
                    (
                        p.image_id,
                        Detection {
                            class_id: p.class_id,
                            confidence: p.confidence,
                            bbox: graspstack_core::detection::BBox {
                                cx: p.cx,
                                cy: p.cy,
                                w: p.w,
                                h: p.h,
                            },
                        },
                    )
                })
                .collect();
            let gts: Vec<GroundTruth> = gts
                .into_iter()
                .map(|g| GroundTruth {
                    image_id: g.image_id,
                    class_id: g.class_id,
                    bbox: graspstack_core::detection::BBox {
                        cx: g.cx,
                        cy: g.cy,
                        w: g.w,
                        h: g.h,
                    },
                })
                .collect();
            let map = evaluate_map(&preds, &gts, 0.5)
                .map_err(|e| CliError::usage(format!("mAP evaluation failed: {e}")))?;
            println!("{}", serde_json::json!({ "map": map }));
            Ok(EXIT_OK)
        }
        EvalWhich::Quant => {
            let model_path = args
                .model
                .ok_or_else(|| CliError::usage("eval quant requires --model <file>"))?;
            let model = load_model(&model_path)
                .map_err(|e| CliError::usage(format!("model {}: {e}", model_path.display())))?;
            let seed = resolve_seed(args.seed, 0)?;
            let (calib, test) = quant_eval_inputs(&model, seed, args.samples)?;
            let qmodel = QuantizedModel::from_model(&model, &calib)
                .map_err(|e| CliError::runtime(format!("quantization failed: {e}")))?;
            let agreement = argmax_agreement(&model, &qmodel, &test)
                .map_err(|e| CliError::runtime(format!("agreement eval failed: {e}")))?;
            println!(
                "{}",
                serde_json::json!({ "agreement": agreement, "samples": test.len() })
            );
            Ok(EXIT_OK)
        }
    }
}

/// Deterministic calibration and held-out inputs for quant evaluation,
/// shaped by the model kind (gesture windows vs object ids).
fn quant_eval_inputs(
    model: &ModelGraph,
    seed: u64,
    samples: usize,
) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
    if model.input_shape == [1, 1, 1] {
        let calib: Vec<Tensor> = (0..graspstack_core::objects::NUM_CLASSES)
            .map(|i| graspstack_core::models::object_id_input(i, 6).unwrap())
            .collect();
        let test: Vec<Tensor> = (0..samples)
            .map(|i| graspstack_core::models::object_id_input(i % 6, 6).unwrap())
            .collect();
        Ok((calib, test))
    } else if model.input_shape == [GESTURE_WINDOW_LEN, 6, 1] {
        let window = |tag: u64, i: usize| {
            let class = ALL_GESTURES[i % 3];
            let s = rng::derive_seed(seed, tag << 40 | (class.id() as u64) << 32 | i as u64);
            gen_gesture(class, s).to_model_input()
        };
        let calib: Vec<Tensor> = (0..64).map(|i| window(1, i)).collect();
        let test: Vec<Tensor> = (0..samples).map(|i| window(2, i)).collect();
        Ok((calib, test))
    } else {
        Err(CliError::usage(format!(
            "unrecognised model input shape {:?}",
            model.input_shape
        )))
    }
}

fn cmd_gen(args: GenArgs) -> Result<i32> {
    let seed = resolve_seed(args.seed, 0)?;
    match args.what {
        GenWhat::GestureData => {
            let count = args.count.unwrap_or(gen_dataset_sizes::GESTURE_WINDOWS);
            let data = make_gesture_dataset(count, seed);
            let mut out = String::new();
            for w in &data {
                out.push_str(&serde_json::to_string(w).unwrap());
                out.push('\n');
            }
            write_file(&args.out, &out)?;
            println!("wrote {} gesture windows to {}", data.len(), args.out.display());
        }
        GenWhat::GraspData => {
            let count = args.count.unwrap_or(gen_dataset_sizes::GRASP_POINTS);
            let data = make_grasp_force_dataset(count, 0.01, seed);
            let mut out = String::new();
            for s in &data {
                out.push_str(&serde_json::to_string(s).unwrap());
                out.push('\n');
            }
            write_file(&args.out, &out)?;
            println!("wrote {} grasp samples to {}", data.len(), args.out.display());
        }
        GenWhat::DetectionFixtures => {
            let (preds, gts) = detection_fixture();
            let mut ptext = String::new();
            for p in &preds {
                ptext.push_str(&serde_json::to_string(p).unwrap());
                ptext.push('\n');
            }
            let mut gtext = String::new();
            for g in &gts {
                gtext.push_str(&serde_json::to_string(g).unwrap());
                gtext.push('\n');
            }
            write_file(&args.out.join("predictions.jsonl"), &ptext)?;
            write_file(&args.out.join("groundtruth.jsonl"), &gtext)?;
            println!("wrote detection fixtures to {}", args.out.display());
        }
        GenWhat::ImuTrace => {
            let path = args
                .scenario
                .ok_or_else(|| CliError::usage("gen imu-trace requires --scenario <file>"))?;
            let scenario = read_scenario(&path)?;
            let script: Vec<_> = scenario
                .gesture_script
                .iter()
                .map(|c| (c.t_ms, c.gesture))
                .collect();
            let plant_cfg = scenario.plant_config();
            let gen_cfg = scenario.gesture_gen_config();
            let mut synth = ImuSynth::new(&script, seed, &gen_cfg);
            let end = scenario
                .doffed_at_ms
                .unwrap_or(scenario.max_duration_ms);
            let mut out = String::new();
            let mut t = 0u64;
            let period_num = 1000u64;
            let mut k = 0u64;
            while t <= end {
                // 30 Hz sample times: t_k = ceil(k * 1000 / 30).
                t = (k * period_num).div_ceil(30);
                if t > end {
                    break;
                }
                let s = synth.sample_at(t, &plant_cfg);
                out.push_str(
                    &serde_json::json!({ "t_ms": t, "accel": s.accel, "gyro": s.gyro })
                        .to_string(),
                );
                out.push('\n');
                k += 1;
            }
            write_file(&args.out, &out)?;
            println!("wrote IMU trace ({k} samples) to {}", args.out.display());
        }
    }
    Ok(EXIT_OK)
}

/// The 3-image, 2-class hand-enumerated mAP fixture (frozen value 5/6).
pub fn detection_fixture() -> (Vec<PredLine>, Vec<GtLine>) {
    let p = |image_id, class_id, confidence, cx, cy, w, h| PredLine {
        image_id,
        class_id,
        confidence,
        cx,
        cy,
        w,
        h,
    };
    let g = |image_id, class_id, cx, cy| GtLine {
        image_id,
        class_id,
        cx,
        cy,
        w: 0.2,
        h: 0.2,
    };
    (
        vec![
            p(0, 0, 0.9, 0.3, 0.3, 0.2, 0.2),
            p(1, 0, 0.8, 0.52, 0.5, 0.2, 0.2),
            p(2, 0, 0.7, 0.1, 0.1, 0.1, 0.1),
            p(0, 1, 0.85, 0.7, 0.7, 0.1, 0.1),
            p(2, 1, 0.6, 0.4, 0.4, 0.2, 0.2),
            p(0, 1, 0.5, 0.7, 0.7, 0.2, 0.2),
        ],
        vec![
            g(0, 0, 0.3, 0.3),
            g(0, 1, 0.7, 0.7),
            g(1, 0, 0.5, 0.5),
            g(2, 1, 0.4, 0.4),
        ],
    )
}
