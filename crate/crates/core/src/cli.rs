//! `ctxagg` command line: generate data, train, evaluate, ablate, check
//! gradients and inspect frame weights.
//!
//! Settings resolve as flags over the `--config` file over defaults, and the
//! resolved configuration is written to `run.toml` in the output directory.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{self, AblationConfig};
use crate::model::{self, HeadParams, Hyper, Method, TrainSet};
use crate::synthdata::{self, CorruptionKind, DatasetConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const CHECKPOINT_FILE: &str = "head.csah";
pub const LOSS_FILE: &str = "loss.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const ABLATION_FILE: &str = "ablation.csv";

#[derive(Debug, Parser)]
#[command(name = "ctxagg", version, about = "Context-sensing attention heads for video re-identification")]
pub struct Cli {
    /// TOML file with run settings; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark as CSAF files plus a manifest.
    Gen(DatasetArgs),
    /// Train one head on a generated benchmark.
    Train {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long)]
        method: Option<Method>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Evaluate a checkpoint on the query/gallery split of a benchmark.
    Eval {
        #[arg(long, value_name = "DIR")]
        data: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate several methods over several seeds.
    Ablate {
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        dataset: DatasetArgs,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Finite-difference check of the loss gradient for every parameter group.
    Gradcheck {
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<Method>>,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Per-frame scores and aggregation weights of sequence files.
    Weights {
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// CSAF files to inspect.
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Default, Args)]
pub struct DatasetArgs {
    #[arg(long)]
    pub ids: Option<usize>,
    #[arg(long)]
    pub seqs_per_id: Option<usize>,
    #[arg(long)]
    pub eval_fraction: Option<f64>,
    /// Frames per generated sequence.
    #[arg(long = "seq-frames")]
    pub seq_frames: Option<usize>,
    #[arg(long = "channels")]
    pub channels: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    /// Fraction of corrupted frames.
    #[arg(long)]
    pub rate: Option<f64>,
    #[arg(long)]
    pub severity_min: Option<f64>,
    #[arg(long)]
    pub severity_max: Option<f64>,
    /// Comma-separated corruption kinds.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<CorruptionKind>>,
    #[arg(long)]
    pub jitter: Option<f64>,
    #[arg(long)]
    pub sequence_jitter: Option<f64>,
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Strength of a bystander present in every frame.
    #[arg(long)]
    pub clutter: Option<f64>,
    #[arg(long)]
    pub cap: Option<f64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct HyperArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub r1: Option<usize>,
    #[arg(long)]
    pub r2: Option<usize>,
    /// Frames sampled per training sequence (T).
    #[arg(long = "frames")]
    pub frames: Option<usize>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    #[arg(long)]
    pub batch_ids: Option<usize>,
    #[arg(long)]
    pub batch_seqs: Option<usize>,
    /// Channel count C; only used where no dataset fixes it.
    #[arg(long)]
    pub hyper_channels: Option<usize>,
}

fn set<T>(slot: &mut T, flag: &Option<T>)
where
    T: Clone,
{
    if let Some(v) = flag {
        *slot = v.clone();
    }
}

impl DatasetArgs {
    fn apply(&self, c: &mut DatasetConfig) {
        set(&mut c.ids, &self.ids);
        set(&mut c.seqs_per_id, &self.seqs_per_id);
        set(&mut c.eval_fraction, &self.eval_fraction);
        set(&mut c.frames, &self.seq_frames);
        set(&mut c.channels, &self.channels);
        set(&mut c.height, &self.height);
        set(&mut c.width, &self.width);
        set(&mut c.rate, &self.rate);
        set(&mut c.severity_min, &self.severity_min);
        set(&mut c.severity_max, &self.severity_max);
        set(&mut c.kinds, &self.kinds);
        set(&mut c.jitter, &self.jitter);
        set(&mut c.sequence_jitter, &self.sequence_jitter);
        set(&mut c.amplitude, &self.amplitude);
        set(&mut c.clutter, &self.clutter);
        set(&mut c.cap, &self.cap);
    }
}

impl HyperArgs {
    fn apply(&self, h: &mut Hyper) {
        set(&mut h.d, &self.d);
        set(&mut h.r1, &self.r1);
        set(&mut h.r2, &self.r2);
        set(&mut h.frames, &self.frames);
        set(&mut h.margin, &self.margin);
        set(&mut h.lr, &self.lr);
        set(&mut h.momentum, &self.momentum);
        set(&mut h.weight_decay, &self.weight_decay);
        set(&mut h.epochs, &self.epochs);
        set(&mut h.lr_decay_every, &self.lr_decay_every);
        set(&mut h.lr_decay_factor, &self.lr_decay_factor);
        set(&mut h.batch_ids, &self.batch_ids);
        set(&mut h.batch_seqs, &self.batch_seqs);
        set(&mut h.channels, &self.hyper_channels);
    }
}

/// Gradient-check settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GradcheckConfig {
    pub instances: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            tol: 1e-4,
            step: 1e-5,
        }
    }
}

/// Fully resolved settings of one invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: String,
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub method: Method,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub files: Vec<PathBuf>,
    pub dataset: DatasetConfig,
    pub hyper: Hyper,
    pub gradcheck: GradcheckConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: String::new(),
            seed: 0,
            out: PathBuf::from("out"),
            data: None,
            checkpoint: None,
            method: Method::CsaNet,
            methods: Method::ALL.to_vec(),
            seeds: vec![0, 1, 2, 3, 4],
            files: Vec::new(),
            dataset: DatasetConfig::benchmark(),
            hyper: Hyper::default(),
            gradcheck: GradcheckConfig::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then `--config`, then flags.
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let mut rc = match &cli.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
                toml::from_str(&text).map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        set(&mut rc.seed, &cli.seed);
        set(&mut rc.out, &cli.out);
        match &cli.command {
            Command::Gen(d) => {
                rc.command = "gen".into();
                d.apply(&mut rc.dataset);
            }
            Command::Train { data, method, hyper } => {
                rc.command = "train".into();
                rc.data = data.clone().or(rc.data);
                set(&mut rc.method, method);
                hyper.apply(&mut rc.hyper);
            }
            Command::Eval { data, checkpoint } => {
                rc.command = "eval".into();
                rc.data = data.clone().or(rc.data);
                rc.checkpoint = checkpoint.clone().or(rc.checkpoint);
            }
            Command::Ablate {
                methods,
                seeds,
                dataset,
                hyper,
            } => {
                rc.command = "ablate".into();
                set(&mut rc.methods, methods);
                set(&mut rc.seeds, seeds);
                dataset.apply(&mut rc.dataset);
                hyper.apply(&mut rc.hyper);
            }
            Command::Gradcheck {
                instances,
                tol,
                step,
                methods,
                hyper,
            } => {
                rc.command = "gradcheck".into();
                set(&mut rc.gradcheck.instances, instances);
                set(&mut rc.gradcheck.tol, tol);
                set(&mut rc.gradcheck.step, step);
                set(&mut rc.methods, methods);
                hyper.apply(&mut rc.hyper);
            }
            Command::Weights { checkpoint, files } => {
                rc.command = "weights".into();
                rc.checkpoint = checkpoint.clone().or(rc.checkpoint);
                rc.files = files.clone();
            }
        }
        Ok(rc)
    }

    fn require<'a>(&self, value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
        value
            .as_deref()
            .ok_or_else(|| Error::Config(format!("`{}` needs --{flag}", self.command)))
    }

    fn write(&self) -> Result<()> {
        fs::create_dir_all(&self.out)?;
        let text = toml::to_string(self).map_err(|e| Error::Format(format!("cannot serialize run config: {e}")))?;
        fs::write(self.out.join(RUN_CONFIG_FILE), text)?;
        Ok(())
    }
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Numerical(_) | Error::Degenerate(_) => EXIT_NUMERICAL,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Reports go to `out`, diagnostics to `err`.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if code == EXIT_OK { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match RunConfig::resolve(&cli).and_then(|rc| dispatch(&rc, out)) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if exit_code(&e) == EXIT_USAGE {
                let _ = writeln!(err, "run `ctxagg {} --help` for usage", command_name(&cli.command));
            }
            exit_code(&e)
        }
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen(_) => "gen",
        Command::Train { .. } => "train",
        Command::Eval { .. } => "eval",
        Command::Ablate { .. } => "ablate",
        Command::Gradcheck { .. } => "gradcheck",
        Command::Weights { .. } => "weights",
    }
}

fn dispatch(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    match rc.command.as_str() {
        "gen" => cmd_gen(rc, out),
        "train" => cmd_train(rc, out),
        "eval" => cmd_eval(rc, out),
        "ablate" => cmd_ablate(rc, out),
        "gradcheck" => cmd_gradcheck(rc, out),
        "weights" => cmd_weights(rc, out),
        other => Err(Error::Config(format!("unknown command `{other}`"))),
    }
}

pub fn cmd_gen(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    rc.dataset.validate()?;
    let dataset = synthdata::make_dataset(&rc.dataset, rc.seed)?;
    rc.write()?;
    synthdata::save_dataset(&rc.out, &dataset)?;
    writeln!(
        out,
        "wrote {} sequences ({} train, {} query, {} gallery) to {}",
        dataset.entries.len(),
        dataset.train.len(),
        dataset.query.len(),
        dataset.gallery.len(),
        rc.out.display()
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_train(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let data = rc.require(&rc.data, "data")?;
    let dataset = synthdata::load_dataset(data)?;
    let mut hyper = rc.hyper;
    hyper.channels = dataset.config.channels;
    let head = HeadParams::init(hyper, rc.method, dataset.train_ids.len(), rc.seed)?;
    let set = TrainSet::from_dataset(&dataset)?;
    let mut resolved = rc.clone();
    resolved.hyper = hyper;
    resolved.dataset = dataset.config.clone();
    resolved.write()?;
    let outcome = model::train(&set, head, rc.seed)?;
    let mut curve = String::from("epoch,loss\n");
    for (e, l) in outcome.loss_curve.iter().enumerate() {
        curve.push_str(&format!("{e},{l}\n"));
    }
    fs::write(rc.out.join(LOSS_FILE), curve)?;
    let path = rc.out.join(CHECKPOINT_FILE);
    model::save_head(&path, &outcome.head)?;
    let first = outcome.loss_curve.first().copied().unwrap_or(f64::NAN);
    let last = outcome.loss_curve.last().copied().unwrap_or(f64::NAN);
    writeln!(
        out,
        "trained {} for {} epochs: loss {first:.4} -> {last:.4}; checkpoint {}",
        rc.method,
        hyper.epochs,
        path.display()
    )?;
    Ok(EXIT_OK)
}

pub fn cmd_eval(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let data = rc.require(&rc.data, "data")?;
    let checkpoint = rc.require(&rc.checkpoint, "checkpoint")?;
    let dataset = synthdata::load_dataset(data)?;
    let head = model::load_head(checkpoint)?;
    rc.write()?;
    let metrics = eval::evaluate(&head, &dataset)?;
    write!(out, "{}", eval::metrics_table(head.method.name(), &metrics))?;
    fs::write(rc.out.join(METRICS_FILE), eval::metrics_csv(head.method.name(), rc.seed, &metrics))?;
    Ok(EXIT_OK)
}

pub fn cmd_ablate(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    rc.dataset.validate()?;
    let mut hyper = rc.hyper;
    hyper.channels = rc.dataset.channels;
    let config = AblationConfig {
        dataset: rc.dataset.clone(),
        hyper,
        methods: rc.methods.clone(),
    };
    let mut resolved = rc.clone();
    resolved.hyper = hyper;
    resolved.write()?;
    let report = eval::ablate(&config, &rc.seeds)?;
    write!(out, "{}", eval::ablation_table(&report.rows))?;
    for r in &report.runs {
        if let Err(e) = &r.outcome {
            writeln!(out, "run {} seed {} failed: {e}", r.method, r.seed)?;
        }
    }
    fs::write(rc.out.join(ABLATION_FILE), eval::runs_csv(&report.runs))?;
    Ok(EXIT_OK)
}

pub fn cmd_gradcheck(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    rc.write()?;
    let g = &rc.gradcheck;
    let mut all_passed = true;
    for &method in &rc.methods {
        let mut worst = 0.0f64;
        let mut failures = Vec::new();
        for k in 0..g.instances {
            let seed = crate::rng::derive_seed(rc.seed, "gradcheck", k as u64);
            let (head, batch) = model::gradcheck_instance(rc.hyper, method, seed)?;
            let report = model::check_gradients(&head, &batch, g.step, g.tol, None)?;
            worst = worst.max(report.max_rel_err());
            if !report.passed() {
                failures.push((k, report));
            }
        }
        let status = if failures.is_empty() { "ok" } else { "FAIL" };
        writeln!(
            out,
            "{:<10} {} instances  max rel err {worst:.3e}  {status}",
            method.name(),
            g.instances
        )?;
        for (k, report) in &failures {
            writeln!(out, "  instance {k}:")?;
            for line in report.to_string().lines() {
                writeln!(out, "    {line}")?;
            }
        }
        all_passed &= failures.is_empty();
    }
    Ok(if all_passed { EXIT_OK } else { EXIT_CHECK_FAILED })
}

pub fn cmd_weights(rc: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let checkpoint = rc.require(&rc.checkpoint, "checkpoint")?;
    let head = model::load_head(checkpoint)?;
    rc.write()?;
    for file in &rc.files {
        let seq = synthdata::load_csaf(file, 0)?;
        let dump = eval::dump_weights(&seq, &head)?;
        let csv = eval::weights_csv(&dump);
        writeln!(out, "# {}", file.display())?;
        write!(out, "{csv}")?;
        match dump.spearman {
            Some(rho) => writeln!(out, "# spearman(w, quality) = {rho:.4}")?,
            None => writeln!(out, "# spearman(w, quality) undefined (constant column)")?,
        }
        let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence");
        fs::write(rc.out.join(format!("{stem}.weights.csv")), csv)?;
    }
    Ok(EXIT_OK)
}

/// Process entry point.
pub fn main() -> i32 {
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}
