use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use nalgebra::DMatrix;

use kernel_zsl::config::RunConfig;
use kernel_zsl::data::{self, load_dataset, make_split, read_features, read_labels, read_side_info, Dataset, SideInfo};
use kernel_zsl::eval::{digest_bytes, digest_json, evaluate, write_roc_csv, TestPoints};
use kernel_zsl::io::{self, TransferHeader};
use kernel_zsl::kernels::KernelConfig;
use kernel_zsl::pipeline::{self, Solver};
use kernel_zsl::predict::{BiasPolicy, Method};
use kernel_zsl::side::side_gram;
use kernel_zsl::synth::{generate, CorrelationMode, SynthSpec};
use kernel_zsl::transfer::InitStrategy;
use kernel_zsl::ErrorKind;

#[derive(Parser)]
#[command(name = "kzsl", version, about = "Predict kernel classifiers for unseen classes from side information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log filter, e.g. warn, info, debug.
    #[arg(long, global = true, default_value = "warn")]
    log_level: String,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world and a config pointing at it.
    Synth(SynthArgs),
    /// Train one-vs-all SVMs on the seen classes.
    TrainSeen(TrainSeenArgs),
    /// Learn the transfer matrix from side information to classifiers.
    LearnTransfer(LearnTransferArgs),
    /// Predict classifiers for the unseen classes.
    Predict(PredictArgs),
    /// Score predicted classifiers on a test set.
    Evaluate(EvaluateArgs),
    /// Check a config and any produced files for consistency.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON); flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct DataArgs {
    /// Feature CSV (header row, one sample per row).
    #[arg(long)]
    features: Option<PathBuf>,
    /// Label CSV (header `label`).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Side-information JSON keyed by class id.
    #[arg(long)]
    side_info: Option<PathBuf>,
    /// Split JSON; without it a split is drawn from the seed.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Fraction of classes held out when drawing a split.
    #[arg(long)]
    unseen_fraction: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    LinearMap,
    SharedPrototype,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10)]
    classes: usize,
    #[arg(long, default_value_t = 8)]
    dim_visual: usize,
    /// Side-info dimension (linear-map mode only).
    #[arg(long, default_value_t = 8)]
    dim_side: usize,
    #[arg(long, default_value_t = 30)]
    samples_per_class: usize,
    /// Cluster spread of visual samples.
    #[arg(long, default_value_t = 0.3)]
    sigma_v: f64,
    /// Noise on side information.
    #[arg(long, default_value_t = 0.3)]
    sigma_e: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::SharedPrototype)]
    mode: ModeArg,
    /// Fraction of classes marked unseen in the written split.
    #[arg(long, default_value_t = 0.5)]
    unseen_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct TrainSeenArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    /// RBF bandwidth (default: inverse median distance).
    #[arg(long)]
    bandwidth: Option<f64>,
    /// SVM box constraint.
    #[arg(long)]
    svm_c: Option<f64>,
    /// SMO stopping tolerance.
    #[arg(long)]
    svm_tol: Option<f64>,
    /// Output model (JSON header; a .bin sidecar is written next to it).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Lbfgs,
    Bregman,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitArg {
    RegularizedInverse,
    Zero,
}

#[derive(Args)]
struct LearnTransferArgs {
    #[command(flatten)]
    common: Common,
    /// Seen model from `train-seen`.
    #[arg(long)]
    model: PathBuf,
    /// Side-information JSON.
    #[arg(long)]
    side_info: Option<PathBuf>,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    /// Lower bound on same-class responses.
    #[arg(long, allow_hyphen_values = true)]
    l: Option<f64>,
    /// Upper bound on different-class responses.
    #[arg(long, allow_hyphen_values = true)]
    u: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Epochs of the Bregman solver.
    #[arg(long)]
    passes: Option<usize>,
    #[arg(long, value_enum)]
    init: Option<InitArg>,
    /// Output transfer matrix (JSON header plus .bin sidecar).
    #[arg(long)]
    out: PathBuf,
    /// Objective trace CSV (default: `<out stem>_trace.csv`).
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dt,
    Svmdt,
}

#[derive(Clone, Copy, ValueEnum)]
enum BiasArg {
    Zero,
    Dt,
    OneClass,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    transfer: PathBuf,
    /// Side information of the classes to predict; merged over `--side-info`.
    #[arg(long)]
    unseen_side_info: Option<PathBuf>,
    #[arg(long, value_enum)]
    method: Option<MethodArg>,
    /// SVM-DT box bound.
    #[arg(long)]
    c: Option<f64>,
    /// SVM-DT weight on correlation with the DT prediction.
    #[arg(long)]
    zeta: Option<f64>,
    /// SVM-DT lower bound on the correlation.
    #[arg(long, allow_hyphen_values = true)]
    l: Option<f64>,
    /// Drop the SVM-DT correlation constraint.
    #[arg(long)]
    no_correlation: bool,
    /// Bias of SVM-DT classifiers.
    #[arg(long, value_enum)]
    bias: Option<BiasArg>,
    /// Choose c, zeta and l on seen-class pseudo splits.
    #[arg(long)]
    tune: bool,
    /// Output classifier bundle (JSON header plus .bin sidecar).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    classifiers: PathBuf,
    #[arg(long)]
    test_features: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Report JSON.
    #[arg(long)]
    out: PathBuf,
    /// Directory for per-class ROC CSVs (default: `<out stem>_roc`).
    #[arg(long)]
    roc_dir: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    transfer: Option<PathBuf>,
    /// Objective trace CSV to check for monotone descent.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    classifiers: Option<PathBuf>,
}

/// Failure with a fixed exit code, for errors raised by the tool itself.
#[derive(Debug)]
struct Exit {
    code: u8,
    message: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Exit {}

fn input_error(message: impl Into<String>) -> anyhow::Error {
    Exit {
        code: 2,
        message: message.into(),
    }
    .into()
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Exit>() {
            return e.code;
        }
        if let Some(e) = cause.downcast_ref::<kernel_zsl::Error>() {
            return match e.kind() {
                ErrorKind::Input => 2,
                ErrorKind::Validation => 3,
                ErrorKind::Numerical => 4,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log_level).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(kernel_zsl::Error::InvalidParameter("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::TrainSeen(a) => train_seen(a),
        Command::LearnTransfer(a) => learn_transfer(a),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Validate(a) => validate(a),
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn apply_data(cfg: &mut RunConfig, d: &DataArgs) {
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.data.features, &d.features);
    set(&mut cfg.data.labels, &d.labels);
    set(&mut cfg.data.side_info, &d.side_info);
    set(&mut cfg.data.split, &d.split);
    if let Some(f) = d.unseen_fraction {
        cfg.unseen_fraction = f;
    }
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref()
        .ok_or_else(|| input_error(format!("no {what} given (flag or config `data` section)")))
}

fn load_training_data(cfg: &RunConfig) -> Result<Dataset> {
    Ok(load_dataset(
        required(&cfg.data.features, "feature file")?,
        required(&cfg.data.labels, "label file")?,
        required(&cfg.data.side_info, "side-info file")?,
    )?)
}

fn synth(a: SynthArgs) -> Result<()> {
    let spec = SynthSpec {
        n_classes: a.classes,
        dim_visual: a.dim_visual,
        dim_side: a.dim_side,
        samples_per_class: a.samples_per_class,
        sigma_v: a.sigma_v,
        sigma_e: a.sigma_e,
        mode: match a.mode {
            ModeArg::LinearMap => CorrelationMode::LinearMap,
            ModeArg::SharedPrototype => CorrelationMode::SharedPrototype,
        },
        rng_seed: a.seed,
    };
    let world = generate(&spec)?;
    let split = make_split(&world.train, a.unseen_fraction, a.seed)?;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let out = |name: &str| a.out.join(name);
    world
        .train
        .save(&out("train_features.csv"), &out("train_labels.csv"), &out("side_info.json"))?;
    data::write_features(&out("test_features.csv"), &world.test.features)?;
    data::write_labels(&out("test_labels.csv"), &world.test.labels)?;
    data::write_split(&out("split.json"), &split)?;
    let protos = world.prototypes.transpose();
    let protos = data::Samples::new(world.prototypes.nrows(), world.prototypes.ncols(), protos.as_slice().to_vec())?;
    data::write_features(&out("prototypes.csv"), &protos)?;
    let mut cfg = RunConfig {
        seed: a.seed,
        unseen_fraction: a.unseen_fraction,
        ..RunConfig::default()
    };
    cfg.data.features = Some("train_features.csv".into());
    cfg.data.labels = Some("train_labels.csv".into());
    cfg.data.side_info = Some("side_info.json".into());
    cfg.data.split = Some("split.json".into());
    cfg.data.test_features = Some("test_features.csv".into());
    cfg.data.test_labels = Some("test_labels.csv".into());
    io::write_json(&out("config.json"), &cfg)?;
    io::write_json(&out("synth_spec.json"), &spec)?;
    info!("wrote synthetic world to {}", a.out.display());
    Ok(())
}

fn train_seen(a: TrainSeenArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    if let Some(b) = a.bandwidth {
        let squared = matches!(cfg.visual_kernel, KernelConfig::Rbf { squared: true, .. });
        cfg.visual_kernel = KernelConfig::Rbf {
            bandwidth: Some(b),
            squared,
        };
    }
    if let Some(c) = a.svm_c {
        cfg.svm.c = c;
    }
    if let Some(t) = a.svm_tol {
        cfg.svm.tol = t;
    }
    cfg.validate()?;
    let ds = load_training_data(&cfg)?;
    let split = match &cfg.data.split {
        Some(p) => data::read_split(p)?,
        None => make_split(&ds, cfg.unseen_fraction, cfg.seed)?,
    };
    let ds = ds.with_split(split.clone())?;
    let stage = pipeline::train_seen(&ds, &split, &cfg.visual_kernel, &cfg.svm, cfg.seed)?;
    if !stage.model.converged() {
        warn!("some seen-class SVMs stopped at the update cap");
    }
    io::save_seen(&a.out, &stage, &cfg.svm, &split)?;
    info!(
        "trained {} seen classifiers on {} samples",
        stage.model.n_classes(),
        stage.model.n_samples()
    );
    Ok(())
}

fn learn_transfer(a: LearnTransferArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if a.side_info.is_some() {
        cfg.data.side_info.clone_from(&a.side_info);
    }
    let t = &mut cfg.transfer;
    macro_rules! over {
        ($($field:ident),*) => { $( if let Some(v) = a.$field { t.$field = v; } )* };
    }
    over!(lambda1, lambda2, l, u, max_iters, grad_tol, passes);
    if let Some(s) = a.solver {
        t.solver = match s {
            SolverArg::Lbfgs => Solver::Lbfgs,
            SolverArg::Bregman => Solver::Bregman,
        };
    }
    if let Some(i) = a.init {
        t.init = match i {
            InitArg::RegularizedInverse => InitStrategy::RegularizedInverse,
            InitArg::Zero => InitStrategy::Zero,
        };
    }
    cfg.validate()?;
    let seen = io::load_seen(&a.model)?.stage;
    let side_info = read_side_info(required(&cfg.data.side_info, "side-info file")?)?;
    let (side, side_kernel) = side_gram(&cfg.side_kernel, &side_info, seen.class_ids(), cfg.seed)?;
    if side.oov_terms > 0 {
        info!("{} out-of-vocabulary term occurrences dropped", side.oov_terms);
    }
    let problem = pipeline::transfer_problem(&seen, &side, &cfg.transfer, cfg.seed)?;
    let tm = pipeline::learn_transfer(&problem, &cfg.transfer)?;
    if !tm.converged {
        warn!("transfer solver stopped after {} iterations without converging", tm.iterations);
    }
    let header = TransferHeader {
        seen_class_ids: seen.class_ids().to_vec(),
        side_kernel,
        config: cfg.transfer.clone(),
        converged: tm.converged,
        iterations: tm.iterations,
        final_objective: tm.objective_trace.last().copied().unwrap_or(f64::NAN),
        oov_terms: side.oov_terms,
    };
    io::save_transfer(&a.out, &header, &tm, problem.g())?;
    let trace = a.trace.unwrap_or_else(|| sibling(&a.out, "_trace.csv"));
    io::write_trace_csv(&trace, &tm.objective_trace)?;
    Ok(())
}

/// `dir/stem + suffix` for `dir/stem.ext`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn predict(a: PredictArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    let p = &mut cfg.predict;
    if let Some(m) = a.method {
        p.method = match m {
            MethodArg::Dt => Method::Dt,
            MethodArg::Svmdt => Method::SvmDt,
        };
    }
    if let Some(v) = a.c {
        p.c = v;
    }
    if let Some(v) = a.zeta {
        p.zeta = v;
    }
    if let Some(v) = a.l {
        p.l = v;
    }
    if a.no_correlation {
        p.correlation = false;
    }
    if let Some(b) = a.bias {
        p.bias = match b {
            BiasArg::Zero => BiasPolicy::Zero,
            BiasArg::Dt => BiasPolicy::Dt,
            BiasArg::OneClass => BiasPolicy::OneClass,
        };
    }
    p.tune |= a.tune;
    cfg.validate()?;

    let seen_file = io::load_seen(&a.model)?;
    let seen = &seen_file.stage;
    let (theader, t, g_trained) = io::load_transfer(&a.transfer)?;
    if theader.seen_class_ids != seen.class_ids() {
        return Err(kernel_zsl::Error::InvalidParameter("transfer matrix and model disagree on seen classes".into()).into());
    }
    let mut side_info: BTreeMap<String, SideInfo> = match &cfg.data.side_info {
        Some(path) => read_side_info(path)?,
        None => BTreeMap::new(),
    };
    let targets: Vec<String> = match &a.unseen_side_info {
        Some(path) => {
            let extra = read_side_info(path)?;
            if extra.is_empty() {
                return Err(input_error(format!("{} lists no classes", path.display())));
            }
            let ids = extra.keys().filter(|k| !seen_file.split.seen_class_ids.contains(*k)).cloned().collect();
            side_info.extend(extra);
            ids
        }
        None => seen_file.split.unseen(),
    };
    if targets.is_empty() {
        return Err(input_error("no unseen classes to predict"));
    }
    let (side, _) = side_gram(&theader.side_kernel, &side_info, seen.class_ids(), cfg.seed)?;
    let g_now = side.block(seen.class_ids())?;
    if (&g_now - &g_trained).amax() > 1e-9 * g_trained.amax().max(1.0) {
        warn!("side Gram of the seen classes differs from the one the transfer matrix was learned with");
    }
    let mut hyper = cfg.predict.hyper();
    if cfg.predict.tune && cfg.predict.method == Method::SvmDt {
        let ds = load_training_data(&cfg)?;
        hyper = pipeline::tune_svm_dt(
            &ds,
            &seen_file.split,
            seen,
            &side,
            &seen_file.svm,
            &theader.config,
            &cfg.predict,
            cfg.seed,
        )?;
        info!("tuned SVM-DT hyper-parameters: {hyper:?}");
    }
    let (predicted, failures) = pipeline::predict_unseen(&t, &side, seen, &targets, &cfg.predict, &hyper)?;
    for f in &failures {
        warn!("no classifier for `{}`: {}", f.class_id, f.reason);
    }
    io::save_classifiers(&a.out, &predicted, &failures)?;
    if !failures.is_empty() {
        eprintln!(
            "{} of {} classes failed: {}",
            failures.len(),
            targets.len(),
            failures.iter().map(|f| f.class_id.as_str()).collect::<Vec<_>>().join(", ")
        );
    }
    if predicted.is_empty() {
        return Err(kernel_zsl::Error::QpInfeasible("every class failed".into()).into());
    }
    Ok(())
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(digest_bytes(&bytes))
}

fn bundle_digests(json: &Path) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "header": file_digest(json)?,
        "data": file_digest(&json.with_extension("bin"))?,
    }))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    if a.test_features.is_some() {
        cfg.data.test_features.clone_from(&a.test_features);
    }
    if a.test_labels.is_some() {
        cfg.data.test_labels.clone_from(&a.test_labels);
    }
    cfg.validate()?;
    let features_path = required(&cfg.data.test_features, "test feature file")?;
    let labels_path = required(&cfg.data.test_labels, "test label file")?;
    let features = read_features(features_path)?;
    let labels = read_labels(labels_path)?;
    if labels.len() != features.rows() {
        return Err(kernel_zsl::Error::ShapeMismatch(format!(
            "{} test labels for {} test rows",
            labels.len(),
            features.rows()
        ))
        .into());
    }
    let seen_file = io::load_seen(&a.model)?;
    let (predicted, failures) = io::load_classifiers(&a.classifiers)?;
    if !failures.is_empty() {
        warn!("{} classes have no classifier and are left out", failures.len());
    }
    let kvecs: DMatrix<f64> = seen_file.stage.kernel_columns(&features)?;
    let digest = digest_json(&serde_json::json!({
        "config": cfg.hyper_json(),
        "model": bundle_digests(&a.model)?,
        "classifiers": bundle_digests(&a.classifiers)?,
        "test_features": file_digest(features_path)?,
        "test_labels": file_digest(labels_path)?,
    }));
    let mut split = seen_file.split.clone();
    split.unseen_class_ids = predicted.iter().map(|p| p.class_id.clone()).collect();
    let report = evaluate(
        &seen_file.stage.model,
        &predicted,
        &TestPoints {
            kvecs: &kvecs,
            labels: &labels,
        },
        &split,
        &digest,
    )?;
    io::write_json(&a.out, &report)?;
    let roc_dir = a.roc_dir.unwrap_or_else(|| sibling(&a.out, "_roc"));
    fs::create_dir_all(&roc_dir).with_context(|| format!("creating {}", roc_dir.display()))?;
    for (class, points) in &report.roc_points {
        write_roc_csv(&roc_dir.join(format!("roc_{}.csv", file_safe(class))), points)?;
    }
    println!(
        "MAU {:.4}  mean AUC {:.4}  mean recall {:.4}",
        report.mau, report.mean_auc, report.mean_recall
    );
    Ok(())
}

fn file_safe(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn validate(a: ValidateArgs) -> Result<()> {
    let mut cfg = load_config(&a.common)?;
    apply_data(&mut cfg, &a.data);
    cfg.validate()?;
    let mut problems = Vec::new();
    for (what, p) in [
        ("features", &cfg.data.features),
        ("labels", &cfg.data.labels),
        ("side_info", &cfg.data.side_info),
        ("split", &cfg.data.split),
        ("test_features", &cfg.data.test_features),
        ("test_labels", &cfg.data.test_labels),
    ] {
        if let Some(p) = p {
            if !p.exists() {
                return Err(input_error(format!("{what} file {} does not exist", p.display())));
            }
        }
    }
    if cfg.data.features.is_some() && cfg.data.labels.is_some() && cfg.data.side_info.is_some() {
        let ds = load_training_data(&cfg)?;
        if let Some(p) = &cfg.data.split {
            ds.with_split(data::read_split(p)?)?;
        }
    }
    if let Some(m) = &a.model {
        let seen = io::load_seen(m)?;
        for d in seen.stage.model.diagnostics.iter().filter(|d| !d.converged) {
            warn!("seen SVM `{}` did not converge (KKT gap {:.3e})", d.class_id, d.kkt_gap);
        }
    }
    let trace_path = a
        .trace
        .clone()
        .or_else(|| a.transfer.as_ref().map(|t| sibling(t, "_trace.csv")).filter(|p| p.exists()));
    if let Some(t) = &a.transfer {
        io::load_transfer(t)?;
    }
    if let Some(tp) = trace_path {
        let trace = io::read_trace_csv(&tp)?;
        for (i, w) in trace.windows(2).enumerate() {
            if w[1] > w[0] {
                problems.push(format!("objective increases at iteration {}: {} -> {}", i + 1, w[0], w[1]));
            }
        }
    }
    if let Some(c) = &a.classifiers {
        let (predicted, _) = io::load_classifiers(c)?;
        for p in predicted.iter().filter(|p| p.method == Method::SvmDt) {
            let Some(h) = p.hyper else {
                problems.push(format!("`{}` is SVM-DT but has no hyper-parameters", p.class_id));
                continue;
            };
            let n = p.beta.len() - 1;
            let head = p.beta.rows(0, n);
            let tol = 1e-6 * h.c.max(1.0);
            if head.iter().any(|&b| b > tol || b < -h.c - tol) {
                problems.push(format!("`{}` has coefficients outside [-C, 0]", p.class_id));
            }
            if (head.sum() + 1.0).abs() > 1e-6 {
                problems.push(format!("`{}` coefficients sum to {}, not -1", p.class_id, head.sum()));
            }
        }
    }
    if !problems.is_empty() {
        for p in &problems {
            eprintln!("invalid: {p}");
        }
        bail!(Exit {
            code: 3,
            message: format!("{} check(s) failed", problems.len()),
        });
    }
    println!("ok");
    Ok(())
}
