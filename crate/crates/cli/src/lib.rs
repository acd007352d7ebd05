//! The `bpn` command line: synthetic data, cycle extraction, training,
//! size/accuracy reports, enrollment and verification.

pub mod config;
pub mod data;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use bpnet::enroll::{check_partitions, enroll, evaluate, resume_global, verify, UserModel};
use bpnet::gait::{channel_scale, synthetic_stream, user_profile, write_archive, write_csv, CycleArchive, GaitCycle};
use bpnet::model_io::{self as model_io, format_mb, load_checkpoint, save_checkpoint};
use bpnet::net::{BinarizedModel, NetworkConfig, Precision};
use bpnet::train::{split_dataset, top1_accuracy, train, Dataset, LabelMap, TrainConfig};
use bpnet::{Error, Result};

use config::CliConfig;
use data::{load_cycles, read_streams, user_cycles};

#[derive(Debug, Parser)]
#[command(name = "bpn", version, about = "Binarized CNN gait identification and verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one synthetic sensor CSV per user.
    Synth(SynthArgs),
    /// Segment a sensor CSV into a normalized cycle archive.
    Extract(ExtractArgs),
    /// Train a network and save it with its checkpoint and log.
    Train(TrainArgs),
    /// Print parameter count, file size and validation top-1 per model.
    Report(ReportArgs),
    /// Fine-tune a global model for one user.
    Enroll(EnrollArgs),
    /// Verify cycles against an enrolled user model.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub users: usize,
    #[arg(long)]
    pub cycles: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Noise σ relative to each channel's RMS.
    #[arg(long, default_value_t = 0.05)]
    pub noise: f64,
    #[arg(long, default_value_t = 100.0)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub first_user: u32,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// User id for streams without a user column.
    #[arg(long)]
    pub user: Option<u32>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory (or single file) of sensor CSVs / cycle archives.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train real-valued weights (no binarization).
    #[arg(long)]
    pub full_precision: bool,
    /// Add an untrained extra output for later enrollment.
    #[arg(long)]
    pub dummy_class: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, num_args = 1..)]
    pub models: Vec<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Global model trained with --dummy-class; its checkpoint must sit
    /// next to it.
    #[arg(long)]
    pub global: PathBuf,
    /// Background data the global model was trained on.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub user_data: PathBuf,
    #[arg(long)]
    pub user: u32,
    /// Use only the first N cycles of the user (by cycle id).
    #[arg(long)]
    pub take: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Single-cycle mode: a CSV or archive holding the cycle to check.
    #[arg(long, conflicts_with_all = ["user_data", "attackers"])]
    pub cycles: Option<PathBuf>,
    /// Position of the cycle within --cycles.
    #[arg(long, default_value_t = 0, requires = "cycles")]
    pub index: usize,
    /// Report mode: the enrolled user's cycles.
    #[arg(long, requires = "attackers")]
    pub user_data: Option<PathBuf>,
    /// Report mode: impostor cycles.
    #[arg(long, requires = "user_data")]
    pub attackers: Option<PathBuf>,
    /// Skip the user's first N cycles (the ones used for enrollment).
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
}

/// Exit status for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) | Error::Config { .. } | Error::Parameter(_) | Error::Dimension(_) => 2,
        Error::Io { .. } => 3,
        Error::Format(_) => 4,
        Error::Data(_) | Error::NoGait(_) | Error::Enrollment(_) => 5,
        Error::Diverged { .. } | Error::NonFiniteGradient { .. } => 6,
    }
}

/// Runs a parsed command, writing results to `out`. Returns the exit
/// status of a successful run (verify's reject is 1).
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<i32> {
    match cli.command {
        Command::Synth(a) => cmd_synth(&a, out).map(|_| 0),
        Command::Extract(a) => cmd_extract(&a, out).map(|_| 0),
        Command::Train(a) => cmd_train(&a, out).map(|_| 0),
        Command::Report(a) => cmd_report(&a, out).map(|_| 0),
        Command::Enroll(a) => cmd_enroll(&a, out).map(|_| 0),
        Command::Verify(a) => cmd_verify(&a, out),
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

fn say(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<()> {
    out.write_fmt(text).map_err(|e| Error::io("<stdout>", e))
}

pub fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<Vec<PathBuf>> {
    if a.users < 2 {
        return Err(Error::Usage(format!("need at least 2 users (2 classes), got {}", a.users)));
    }
    if a.cycles == 0 {
        return Err(Error::Usage("need at least one cycle per user".into()));
    }
    std::fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;
    let mut written = Vec::new();
    for u in 0..a.users as u32 {
        let user = a.first_user + u;
        let stream = synthetic_stream(&user_profile(a.seed, user), a.cycles, a.seed, a.noise, a.rate)?;
        let path = a.out.join(format!("user_{user:04}.csv"));
        let f = File::create(&path).map_err(io_err(&path))?;
        let mut w = BufWriter::new(f);
        write_csv(&[stream], &mut w)?;
        w.flush().map_err(io_err(&path))?;
        written.push(path);
    }
    say(out, format_args!("wrote {} files to {}\n", written.len(), a.out.display()))?;
    Ok(written)
}

pub fn cmd_extract(a: &ExtractArgs, out: &mut dyn Write) -> Result<CycleArchive> {
    let mut cycles = Vec::new();
    let mut next: BTreeMap<u32, u32> = BTreeMap::new();
    for stream in read_streams(&a.input)? {
        let user = stream
            .user_id
            .or(a.user)
            .ok_or_else(|| Error::Usage(format!("{}: no user column; pass --user", a.input.display())))?;
        let first = next.entry(user).or_insert(0);
        let (fit, found) = bpnet::gait::extract_cycles(&stream, user, *first)?;
        say(
            out,
            format_args!("user {user}: {:.4} Hz, {} cycles, residual {:.4}\n", fit.frequency, found.len(), fit.residual_rms),
        )?;
        *first += found.len() as u32;
        cycles.extend(found);
    }
    let archive = CycleArchive { source: a.input.display().to_string(), cycles };
    std::fs::write(&a.out, write_archive(&archive)).map_err(io_err(&a.out))?;
    Ok(archive)
}

fn load_config(path: Option<&Path>) -> Result<CliConfig> {
    match path {
        Some(p) => CliConfig::load(p),
        None => Ok(CliConfig::default()),
    }
}

fn data_path(flag: Option<&PathBuf>, cfg: &CliConfig) -> Result<PathBuf> {
    flag.cloned()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| Error::Usage("no data: pass --data or set [data] path".into()))
}

/// File next to a model: `model.bpn` → `model.<ext>`.
pub fn sibling(model: &Path, ext: &str) -> PathBuf {
    model.with_extension(ext)
}

/// Network outputs for a label set: the configured count if it has room.
fn sized_network(net: &NetworkConfig, users: usize, dummy: bool) -> Result<NetworkConfig> {
    if dummy {
        return net.with_class_count(users + 1);
    }
    if users > net.class_count() {
        return Err(Error::Usage(format!(
            "{users} users but the network has {} outputs; set classes in [network]",
            net.class_count()
        )));
    }
    Ok(net.clone())
}

fn split_text(split: (f64, f64)) -> String {
    format!("{}/{}", split.0, split.1)
}

fn parse_split(text: &str) -> Result<(f64, f64)> {
    let bad = || Error::Format(bpnet::FormatError::InvalidField(format!("split {text:?}")));
    let (a, b) = text.split_once('/').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

/// Summary of a finished `train` command.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub val_top1: f64,
    pub model_bytes: u64,
    pub users: usize,
}

pub fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<TrainOutcome> {
    let cfg = load_config(a.config.as_deref())?;
    let mut hp: TrainConfig = cfg.train.clone();
    if let Some(e) = a.epochs {
        hp.epochs = e;
    }
    if let Some(s) = a.seed {
        hp.seed = s;
    }
    if a.full_precision {
        hp.precision = Precision::Full;
    }
    let cycles = load_cycles(&data_path(a.data.as_ref(), &cfg)?, None)?;
    let labels = LabelMap::from_cycles(&cycles);
    if labels.len() < 2 {
        return Err(Error::Data(format!("need cycles from at least 2 users, found {}", labels.len())));
    }
    let network = sized_network(&cfg.network, labels.len(), a.dummy_class)?;
    let split = split_dataset(&cycles, hp.split, hp.seed)?;
    for w in &split.warnings {
        log::warn!("{w}");
    }
    let rows = network.input_shape().height;
    let scale = channel_scale(&split.train, rows);
    let label_of = |c: &GaitCycle| labels.class_of(c.user_id);
    let tr = Dataset::from_cycles(&split.train, network.input_shape(), &scale, label_of)?;
    let va = Dataset::from_cycles(&split.val, network.input_shape(), &scale, label_of)?;
    if hp.epochs == 0 {
        log::warn!("0 epochs: writing the initialized model");
    }
    log::info!("training {} on {} train / {} val cycles from {} users", network.name(), tr.len(), va.len(), labels.len());

    let log_path = sibling(&a.out, "log");
    let ckpt_path = sibling(&a.out, "bps");
    let (state, run) = match train(&network, &tr, &va, &hp) {
        Ok(done) => done,
        Err(failure) => {
            // keep what was learned before the failure for inspection
            save_checkpoint(&failure.last_good, &ckpt_path)?;
            std::fs::write(&log_path, failure.run.to_log()).map_err(io_err(&log_path))?;
            return Err(failure.error);
        }
    };
    let mut meta = BTreeMap::new();
    meta.insert("labels".to_string(), labels.to_text());
    meta.insert("train_seed".to_string(), hp.seed.to_string());
    meta.insert("split".to_string(), split_text(hp.split));
    meta.insert("dummy".to_string(), u8::from(a.dummy_class).to_string());
    meta.insert("epochs".to_string(), state.epoch.to_string());
    let model = BinarizedModel::from_latent(&state.config, &state.weights, scale)?.with_metadata(meta);
    let val_top1 = top1_accuracy(&model, &va)?;
    let model_bytes = model_io::save(&model, &a.out)?;
    save_checkpoint(&state, &ckpt_path)?;
    std::fs::write(&log_path, run.to_log()).map_err(io_err(&log_path))?;
    say(out, format_args!("val top-1: {:.4}\n", val_top1))?;
    say(out, format_args!("model: {} ({} bytes)\n", a.out.display(), model_bytes))?;
    Ok(TrainOutcome { val_top1, model_bytes, users: labels.len() })
}

fn model_labels(model: &BinarizedModel, path: &Path) -> Result<LabelMap> {
    let text = model
        .metadata()
        .get("labels")
        .ok_or_else(|| Error::Usage(format!("{}: model has no label metadata", path.display())))?;
    LabelMap::parse(text)
}

/// The validation cycles a model was scored on during training, or every
/// cycle of its users if the model does not record its split.
fn validation_cycles(model: &BinarizedModel, labels: &LabelMap, cycles: &[GaitCycle]) -> Result<Vec<GaitCycle>> {
    let known: Vec<GaitCycle> = cycles.iter().filter(|c| labels.class_of(c.user_id).is_some()).cloned().collect();
    let meta = model.metadata();
    match (meta.get("train_seed"), meta.get("split")) {
        (Some(seed), Some(split)) => {
            let seed = seed
                .parse()
                .map_err(|_| Error::Format(bpnet::FormatError::InvalidField(format!("train_seed {seed:?}"))))?;
            Ok(split_dataset(&known, parse_split(split)?, seed)?.val)
        }
        _ => Ok(known),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub name: String,
    pub precision: Precision,
    pub params: usize,
    pub file_bytes: u64,
    pub top1: f64,
}

fn thousands(n: usize) -> String {
    let s = n.to_string();
    let mut out = String::new();
    for (i, ch) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

pub fn format_report(rows: &[ReportRow]) -> String {
    let mut s = format!("{:<32} {:>22} {:>18} {:>19}\n", "Model", "Number of Parameters", "Size on disk (MB)", "Top-1 Accuracy(%)");
    for r in rows {
        let tag = match r.precision {
            Precision::Binary => "binary",
            Precision::Full => "full precision",
        };
        let params = format!("{} ({}k)", thousands(r.params), (r.params as f64 / 1e3).round());
        s.push_str(&format!(
            "{:<32} {:>22} {:>18} {:>19.2}\n",
            format!("{} ({tag})", r.name),
            params,
            format_mb(r.file_bytes),
            100.0 * r.top1
        ));
    }
    s
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<Vec<ReportRow>> {
    if a.models.is_empty() {
        return Err(Error::Usage("no models given".into()));
    }
    let cycles = load_cycles(&a.data, None)?;
    let mut rows = Vec::new();
    for path in &a.models {
        let model = model_io::load(path)?;
        let labels = model_labels(&model, path)?;
        let val = validation_cycles(&model, &labels, &cycles)?;
        if val.is_empty() {
            return Err(Error::Data(format!("{}: none of its users appear in {}", path.display(), a.data.display())));
        }
        let shape = model.config().input_shape();
        let data = Dataset::from_cycles(&val, shape, model.input_scale(), |c| labels.class_of(c.user_id))?;
        let file_bytes = std::fs::metadata(path).map_err(io_err(path))?.len();
        rows.push(ReportRow {
            name: model.config().name().to_string(),
            precision: model.precision(),
            params: model.config().binary_param_count(),
            file_bytes,
            top1: top1_accuracy(&model, &data)?,
        });
    }
    say(out, format_args!("{}", format_report(&rows)))?;
    Ok(rows)
}

pub fn cmd_enroll(a: &EnrollArgs, out: &mut dyn Write) -> Result<UserModel> {
    let cfg = load_config(a.config.as_deref())?;
    let mut ecfg = cfg.enroll.clone();
    if let Some(s) = a.seed {
        ecfg.seed = s;
    }
    if let Some(e) = a.epochs {
        ecfg.fine_tune_epochs = e;
    }
    if let Some(lr) = a.lr {
        ecfg.lr = lr;
    }
    let model = model_io::load(&a.global)?;
    if model.metadata().get("dummy").map(String::as_str) != Some("1") {
        return Err(Error::Enrollment(format!("{} was not trained with --dummy-class", a.global.display())));
    }
    let labels = model_labels(&model, &a.global)?;
    let split = parse_split(model.metadata().get("split").map(String::as_str).unwrap_or("0.8/0.2"))?;
    let state = load_checkpoint(sibling(&a.global, "bps"))?;
    if state.config != *model.config() {
        return Err(Error::Format(bpnet::FormatError::ShapeInconsistency("checkpoint and model configs differ".into())));
    }
    let background: Vec<GaitCycle> = load_cycles(&data_path(a.data.as_ref(), &cfg)?, None)?
        .into_iter()
        .filter(|c| labels.class_of(c.user_id).is_some())
        .collect();
    let mut mine = user_cycles(&load_cycles(&a.user_data, Some(a.user))?, a.user);
    if let Some(n) = a.take {
        mine.truncate(n);
    }
    check_partitions(labels.users(), &[a.user], &[])?;
    let global = resume_global(state, labels, model.input_scale().to_vec(), &background, split)?;
    let user = enroll(&global, a.user, &mine, &ecfg)?;
    model_io::save(&user.model, &a.out)?;
    say(out, format_args!("enrolled user {} from {} cycles: {}\n", a.user, mine.len(), a.out.display()))?;
    Ok(user)
}

pub fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<i32> {
    let user = UserModel::from_model(model_io::load(&a.model)?)?;
    if let Some(path) = &a.cycles {
        let cycles = load_cycles(path, Some(user.user_id))?;
        let cycle = cycles
            .get(a.index)
            .ok_or_else(|| Error::Usage(format!("{} holds {} cycles; index {} is out of range", path.display(), cycles.len(), a.index)))?;
        let accept = verify(&user, cycle)?;
        say(out, format_args!("{}\n", if accept { "accept" } else { "reject" }))?;
        return Ok(if accept { 0 } else { 1 });
    }
    let (Some(up), Some(ap)) = (&a.user_data, &a.attackers) else {
        return Err(Error::Usage("pass --cycles, or --user-data with --attackers".into()));
    };
    let mine: Vec<GaitCycle> = user_cycles(&load_cycles(up, Some(user.user_id))?, user.user_id).into_iter().skip(a.skip).collect();
    let attackers = load_cycles(ap, None)?;
    let mut attacker_ids: Vec<u32> = attackers.iter().map(|c| c.user_id).collect();
    attacker_ids.dedup();
    let background = match user.model.metadata().get("labels") {
        Some(t) => LabelMap::parse(t)?.users().to_vec(),
        None => vec![],
    };
    check_partitions(&background, &[user.user_id], &attacker_ids)?;
    let report = evaluate(&user, &mine, &attackers)?;
    say(out, format_args!("{report}"))?;
    Ok(0)
}
