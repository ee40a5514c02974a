use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use copforge::dataio::{
    build_features, convert_directory, load_recording, manifest_path, save_recording, Alignment, ChannelKinds,
    Standardizer, TargetMatrix,
};
use copforge::experiments::{
    export_gaitogram, report, run_ablation, run_intra_subject, run_train_size_curve, run_transfer_all, rms_error,
    EvalConfig, ModelKind, RmsReport, TransferConfig,
};
use copforge::kinematics::ReferenceFields;
use copforge::models::{load_model, save_model, TrainConfig, DEFAULT_RIDGE};
use copforge::synthgait::{cohort_configs, generate_recording, SynthGaitConfig};
use copforge::types::{Constellation, Recording};
use copforge::Error;

/// Centre-of-pressure estimation from wearable IMU signals.
#[derive(Debug, Parser)]
#[command(name = "copforge", version, about, propagate_version = true)]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate synthetic recordings (CSV + manifest).
    Synth(SynthArgs),
    /// Convert per-segment quaternion or marker series into a recording.
    Convert(ConvertArgs),
    /// Fit a model on a whole recording and save it.
    Train(TrainArgs),
    /// Intra-subject evaluation, or scoring of a saved model.
    Eval(EvalArgs),
    /// Fit every sensor constellation (127 subsets).
    Ablate(ModelArgs),
    /// Test error as a function of training duration.
    Traincurve(TrainCurveArgs),
    /// Leave-one-subject-out transfer with standing calibration.
    Transfer(TransferArgs),
    /// Export a gaitogram (COP trace in the pelvis frame) as CSV and SVG.
    Gaitogram(GaitogramArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
struct SynthArgs {
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    /// Recording length in seconds.
    #[arg(long, default_value_t = 600.0)]
    duration: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Generate this many subjects instead of one.
    #[arg(long)]
    cohort: Option<usize>,
    /// Sensor noise as a fraction of each channel's std.
    #[arg(long, default_value_t = 0.03)]
    noise: f64,
    /// Let back tilt carry the COP (pelvis-dominant variant).
    #[arg(long)]
    pelvis_dominant: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ConvertArgs {
    /// Directory with cop.csv and <segment>.csv files.
    #[arg(short, long)]
    input: PathBuf,
    /// Output recording CSV; the manifest is written next to it.
    #[arg(short, long)]
    output: PathBuf,
    /// Alignment file (default: alignment.txt in the input directory, if any).
    #[arg(long)]
    alignment: Option<PathBuf>,
    /// Subject id (default: input directory name).
    #[arg(long)]
    subject: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct ModelArgs {
    /// Recording CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "linear", value_parser = parse_model)]
    #[serde(serialize_with = "display")]
    model: ModelKind,
    /// Channel kinds: gam, ga, ...
    #[arg(long, default_value = "gam", value_parser = parse_channels)]
    #[serde(serialize_with = "display")]
    channels: ChannelKinds,
    /// Past samples per channel (linear models).
    #[arg(long, default_value_t = 0)]
    history: usize,
    /// Sensor placements, e.g. 2,3,6 or back,r_thigh (default: all).
    #[arg(long, default_value = "all", value_parser = parse_imus)]
    #[serde(serialize_with = "display")]
    imus: Constellation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Ridge strength for the linear models.
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Maximum training epochs (iterative models).
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    /// LSTM hidden units.
    #[arg(long, default_value_t = 100)]
    units: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: ModelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: ModelArgs,
    /// Score this saved model on the whole recording instead of fitting.
    #[arg(long)]
    load: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TrainCurveArgs {
    #[command(flatten)]
    #[serde(flatten)]
    common: ModelArgs,
    /// Training durations in seconds.
    #[arg(long, value_delimiter = ',', default_values_t = [10.0, 30.0, 100.0, 300.0])]
    sizes: Vec<f64>,
    /// Repeats per size (at least 3).
    #[arg(long, default_value_t = 3)]
    repeats: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct TransferArgs {
    /// Recording CSVs, or directories holding them. Repeat for each subject.
    #[arg(short, long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(short, long)]
    output: PathBuf,
    #[arg(long, default_value = "linear", value_parser = parse_model)]
    #[serde(serialize_with = "display")]
    model: ModelKind,
    #[arg(long, default_value = "gam", value_parser = parse_channels)]
    #[serde(serialize_with = "display")]
    channels: ChannelKinds,
    #[arg(long, default_value_t = 0)]
    history: usize,
    #[arg(long, default_value = "all", value_parser = parse_imus)]
    #[serde(serialize_with = "display")]
    imus: Constellation,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Seconds of standing data used to calibrate; 0 disables calibration.
    #[arg(long, default_value_t = 30.0)]
    calib_seconds: f64,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
struct GaitogramArgs {
    /// Recording CSV.
    #[arg(short, long)]
    input: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    output: PathBuf,
    /// Overlay the prediction of this saved model.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Start time in seconds (default: middle of the first walking step).
    #[arg(long)]
    start: Option<f64>,
    /// Length of the exported trace in seconds.
    #[arg(long, default_value_t = 10.0)]
    seconds: f64,
}

fn display<T: std::fmt::Display, S: serde::Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(v)
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_channels(s: &str) -> Result<ChannelKinds, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_imus(s: &str) -> Result<Constellation, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
enum Failure {
    /// Bad flags, configuration or input format: exit 2.
    Usage(String),
    /// The computation itself failed: exit 1.
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::ConfigInvalid(_) | Error::SpecTooLarge { .. } | Error::InvalidSplit(_) => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Run(e),
        }
    }
}

type CliResult<T = ()> = Result<T, Failure>;

/// Every run records the resolved command and flags.
#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    flags: &'a T,
}

fn prepare_output(dir: &Path, command: &str, flags: &impl Serialize) -> CliResult {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Run(Error::Io { path: dir.into(), source: e }))?;
    let cfg = RunConfig { command, version: env!("CARGO_PKG_VERSION"), flags };
    report::write_json(&dir.join("config.json"), &cfg)?;
    Ok(())
}

fn load(path: &Path) -> CliResult<Recording> {
    log::info!("loading {}", path.display());
    Ok(load_recording(path)?)
}

fn eval_config(a: &ModelArgs) -> EvalConfig {
    EvalConfig {
        model: a.model,
        channels: a.channels,
        history: a.history,
        constellation: a.imus,
        ridge: a.ridge,
        train: TrainConfig { seed: a.seed, max_epochs: a.epochs, units: a.units, ..TrainConfig::default() },
    }
}

fn print_rms(label: &str, r: &RmsReport) {
    println!("{label}: total {:.2} mm, lateral {:.2} mm, anterior {:.2} mm", r.total, r.lateral, r.anterior);
}

fn cmd_synth(a: &SynthArgs) -> CliResult {
    let mut base = if a.pelvis_dominant {
        SynthGaitConfig::pelvis_dominant(a.duration)
    } else {
        SynthGaitConfig::with_duration(a.duration)
    };
    base.noise_frac = a.noise;
    base.seed = a.seed;
    base.subject_id = "subject".into();
    let configs = match a.cohort {
        Some(0) => return Err(Failure::Usage("--cohort must be at least 1".into())),
        Some(n) => cohort_configs(n, &base, a.seed)?,
        None => {
            base.validate()?;
            vec![base]
        }
    };
    prepare_output(&a.output, "synth", a)?;
    for cfg in &configs {
        let rec = generate_recording(cfg)?;
        let path = a.output.join(format!("{}_seed{}.csv", cfg.subject_id, a.seed));
        save_recording(&rec, &path)?;
        println!(
            "{}: {} samples, {:.1} s, noise {:.1}% -> {}",
            cfg.subject_id,
            rec.len(),
            rec.duration(),
            100.0 * cfg.noise_frac,
            path.display()
        );
    }
    Ok(())
}

fn cmd_convert(a: &ConvertArgs) -> CliResult {
    let usage = |e: Error| Failure::Usage(e.to_string());
    let alignment = a.alignment.as_deref().map(Alignment::load).transpose().map_err(usage)?;
    let subject = a.subject.clone().unwrap_or_else(|| {
        a.input.file_name().map_or_else(|| "subject".to_string(), |n| n.to_string_lossy().into_owned())
    });
    let rec = convert_directory(&a.input, &subject, alignment.as_ref(), &ReferenceFields::default()).map_err(usage)?;
    let dir = a.output.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    prepare_output(dir, "convert", a)?;
    save_recording(&rec, &a.output)?;
    println!(
        "{}: {} samples, {} sensors -> {} (+ {})",
        subject,
        rec.len(),
        rec.imu.len(),
        a.output.display(),
        manifest_path(&a.output).display()
    );
    Ok(())
}

fn cmd_train(a: &TrainArgs) -> CliResult {
    let c = &a.common;
    let rec = load(&c.input)?.into_pelvis_frame()?;
    prepare_output(&c.output, "train", a)?;
    let cfg = eval_config(c);
    let (x, y) = build_features(&rec, cfg.constellation, cfg.selection())?;
    let stats = Standardizer::fit(&x)?;
    let fitted = copforge::experiments::fit_matrices(&stats.apply(&x)?, &y, &cfg)?;
    save_model(&fitted.model, &c.output.join("model.json"))?;
    if let Some(curve) = &fitted.curve {
        report::write_json(&c.output.join("training_curve.json"), curve)?;
    }
    println!("{}: train RMS {:.2} mm", cfg.label(), fitted.train_mse.sqrt());
    Ok(())
}

fn cmd_eval(a: &EvalArgs) -> CliResult {
    let c = &a.common;
    let rec = load(&c.input)?.into_pelvis_frame()?;
    prepare_output(&c.output, "eval", a)?;
    let (label, rms) = match &a.load {
        Some(path) => {
            let model = load_model(path)?;
            let sel = model_selection(&model)?;
            let (x, y) = build_features(&rec, sel.0, sel.1)?;
            let pred = model.predict(&x)?;
            ("loaded model".to_string(), rms_error(&pred, &y)?)
        }
        None => {
            let cfg = eval_config(c);
            let ev = run_intra_subject(&rec, &cfg)?;
            (cfg.label(), ev.test)
        }
    };
    report::write_text(&c.output.join("eval.csv"), &report::rms_table_csv(&[(label.clone(), rms)])?)?;
    print_rms(&label, &rms);
    Ok(())
}

/// Constellation and channel selection a saved model was trained with.
fn model_selection(
    model: &copforge::models::Model,
) -> CliResult<(Constellation, copforge::dataio::ChannelSelection)> {
    let layout = match model {
        copforge::models::Model::Linear(m) => &m.layout,
        copforge::models::Model::Lstm(m) => &m.layout,
    };
    Ok((layout.constellation, layout.selection))
}

fn cmd_ablate(a: &ModelArgs) -> CliResult {
    let rec = load(&a.input)?;
    prepare_output(&a.output, "ablate", a)?;
    let cfg = eval_config(a);
    let res = run_ablation(&rec, &cfg)?;
    report::write_text(&a.output.join("ablation.csv"), &report::ablation_csv(&res)?)?;
    report::write_text(&a.output.join("ablation_extremes.csv"), &report::ablation_extremes_csv(&res)?)?;
    println!("{} constellations", res.entries.len());
    for x in res.extremes() {
        println!(
            "{} IMUs: best {} ({:.2} mm), worst {} ({:.2} mm)",
            x.count, x.best.constellation, x.best.test.total, x.worst.constellation, x.worst.test.total
        );
    }
    Ok(())
}

fn cmd_traincurve(a: &TrainCurveArgs) -> CliResult {
    let c = &a.common;
    let rec = load(&c.input)?;
    prepare_output(&c.output, "traincurve", a)?;
    let curve = run_train_size_curve(&rec, &a.sizes, a.repeats, c.seed, &eval_config(c))?;
    report::write_text(&c.output.join("train_size.csv"), &report::train_size_csv(&curve)?)?;
    report::write_text(&c.output.join("train_size_summary.csv"), &report::train_size_summary_csv(&curve)?)?;
    for p in &curve.points {
        println!("{:>6} s: {:.2} ± {:.2} mm", p.seconds, p.mean_total, p.std_total);
    }
    Ok(())
}

/// Recording CSVs named directly or found in the given directories, sorted.
fn recording_paths(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let rd = std::fs::read_dir(p).map_err(|e| Failure::Run(Error::Io { path: p.clone(), source: e }))?;
            let mut found: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "csv"))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn cmd_transfer(a: &TransferArgs) -> CliResult {
    let paths = recording_paths(&a.input)?;
    if paths.len() < 2 {
        return Err(Failure::Usage(format!("transfer needs at least 2 recordings, found {}", paths.len())));
    }
    let recs = paths.iter().map(|p| load(p)).collect::<CliResult<Vec<_>>>()?;
    prepare_output(&a.output, "transfer", a)?;
    let cfg = TransferConfig {
        eval: EvalConfig {
            model: a.model,
            channels: a.channels,
            history: a.history,
            constellation: a.imus,
            ridge: DEFAULT_RIDGE,
            train: TrainConfig { seed: a.seed, max_epochs: a.epochs, ..TrainConfig::default() },
        },
        calib_seconds: a.calib_seconds,
        include_target: false,
    };
    let results = run_transfer_all(&recs, &cfg)?;
    report::write_text(&a.output.join("transfer.csv"), &report::transfer_csv(&results)?)?;
    for r in &results {
        println!(
            "{}: uncalibrated {:.2} mm, calibrated {:.2} mm ({} samples)",
            r.target, r.uncalibrated.total, r.calibrated.total, r.calib_samples
        );
    }
    Ok(())
}

fn cmd_gaitogram(a: &GaitogramArgs) -> CliResult {
    let rec = load(&a.input)?.into_pelvis_frame()?;
    if !(a.seconds > 0.0) {
        return Err(Failure::Usage("--seconds must be positive".into()));
    }
    let rate = rec.manifest.sample_rate;
    let start = match a.start {
        Some(s) if s >= 0.0 => (s * rate).round() as usize,
        Some(_) => return Err(Failure::Usage("--start must be non-negative".into())),
        None => rec
            .step_runs()
            .into_iter()
            .find(|(_, r)| !rec.is_standing_sample(r.start))
            .map_or(0, |(_, r)| (r.start + r.end) / 2),
    };
    let end = (start + (a.seconds * rate).round() as usize).min(rec.len());
    if start >= end {
        return Err(Failure::Usage(format!("--start lies beyond the recording ({:.1} s)", rec.duration())));
    }
    prepare_output(&a.output, "gaitogram", a)?;
    let window = rec.slice(start..end);
    let truth = TargetMatrix::new(window.cop.iter().map(|c| [c.x_anterior, c.y_lateral]).collect());
    let predicted = match &a.load {
        Some(path) => {
            let model = load_model(path)?;
            let (c, sel) = model_selection(&model)?;
            // features for the window keep their history by predicting on the whole recording
            let (x, _) = build_features(&rec, c, sel)?;
            let pred = model.predict(&x)?;
            Some(TargetMatrix::new(pred.data[start..end].to_vec()))
        }
        None => None,
    };
    let files = export_gaitogram(&truth, predicted.as_ref(), &a.output.join("gaitogram"))?;
    if let Some(p) = &predicted {
        print_rms("prediction", &rms_error(p, &truth)?);
    }
    println!("wrote {} and {}", files.csv.display(), files.svg.display());
    Ok(())
}

fn run(cli: &Cli) -> CliResult {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(Failure::Usage("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Failure::Usage(format!("cannot configure {j} workers: {e}")))?;
    }
    match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Ablate(a) => cmd_ablate(a),
        Command::Traincurve(a) => cmd_traincurve(a),
        Command::Transfer(a) => cmd_transfer(a),
        Command::Gaitogram(a) => cmd_gaitogram(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("COPFORGE_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
