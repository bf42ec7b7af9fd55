//! `needrop` command-line front end.
//!
//! Every subcommand reads its settings from flags, falling back to an optional
//! `key = value` config file, then to built-in defaults. Outputs go to the
//! directory given by `--out-dir`, the `out_dir` config key, the
//! `NEEDROP_OUT_DIR` environment variable, or the working directory, in that
//! order. Each run writes `manifest_<command>.json` next to its outputs.

mod config;
mod plot;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{ConfigFile, KNOWN_KEYS};
pub use plot::loss_svg;

use crate::field::{evaluate_grid, marching_cubes, orient_field, ExtractionStatus, DEFAULT_RESOLUTION};
use crate::geometry::io::{read_mesh, read_xyz, write_mesh, write_xyz_file};
use crate::geometry::{sample_surface, Aabb, NormalizeTransform};
use crate::metrics::{evaluate_meshes, EvalOptions, DEFAULT_QUANTILES};
use crate::model::{
    read_checkpoint, write_checkpoint, Activation, LossCsvWriter, ModelConfig, Regime, SigmaSchedule,
    TrainConfig, Trainer,
};
use crate::needles::{audit_set, audit_sweep, sample_q_opp, sample_q_same, SigmaRule, DEFAULT_N_SAME};
use crate::rng::{SeedSplitter, Stream};
use crate::Error;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "NEEDROP_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Failure carrying the process exit code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::NonFiniteLoss { .. } | Error::NonFinite(_) => EXIT_NUMERIC,
            Error::InvalidArgument(_) => EXIT_USAGE,
            _ => EXIT_IO,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "needrop", version, about = "Occupancy reconstruction from sparse point clouds with needle losses")]
pub struct Cli {
    /// Plain-text `key = value` settings; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize a mesh and sample points on its surface.
    Sample(SampleArgs),
    /// Fit an occupancy model to a point cloud.
    Fit(FitArgs),
    /// Extract the 0.5 level set of a fitted model.
    Extract(ExtractArgs),
    /// Compare a predicted mesh with a reference mesh.
    Eval(EvalArgs),
    /// Rate of correctly labelled needles against a reference mesh.
    Audit(AuditArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    pub mesh: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output XYZ path (default `<out-dir>/cloud.xyz`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// XYZ point cloud in the normalized frame.
    pub cloud: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub n_same: Option<usize>,
    /// `resample` or `fixed`.
    #[arg(long)]
    pub regime: Option<String>,
    /// Sigma multipliers by start iteration, e.g. `1.0:0,0.5:2000`.
    #[arg(long)]
    pub sigma_schedule: Option<String>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Hidden layer widths, e.g. `128,128,128,128`.
    #[arg(long)]
    pub hidden: Option<String>,
    /// `softplus`, `softplus:<beta>` or `tanh`.
    #[arg(long)]
    pub activation: Option<String>,
    /// Skip the SVG loss plot.
    #[arg(long)]
    pub no_plot: bool,
    /// Checkpoint path (default `<out-dir>/model.ckpt`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub res: Option<usize>,
    /// Mesh path, `.obj` or `.ply` (default `<out-dir>/mesh.obj`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Also dump the oriented grid as a binary volume.
    #[arg(long)]
    pub volume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub pred: PathBuf,
    pub truth: PathBuf,
    /// Surface samples per mesh for Chamfer.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// IoU grid resolution.
    #[arg(long)]
    pub res: Option<usize>,
    /// Comma-separated quantiles in (0, 1].
    #[arg(long)]
    pub quantiles: Option<String>,
    /// CSV path (default `<out-dir>/metrics.csv`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AuditArgs {
    pub cloud: PathBuf,
    pub truth: PathBuf,
    /// Comma-separated sigma multipliers.
    #[arg(long)]
    pub alphas: Option<String>,
    /// Independent needle draws per multiplier.
    #[arg(long)]
    pub draws: Option<usize>,
    #[arg(long)]
    pub n_same: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write per-needle classifications of the first draw for every multiplier.
    #[arg(long)]
    pub dump_needles: bool,
    /// CSV path (default `<out-dir>/audit.csv`).
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

/// Settings resolution plus the record that ends up in the manifest.
struct Context {
    command: &'static str,
    file: ConfigFile,
    out_dir: PathBuf,
    settings: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: Vec<String>,
    details: BTreeMap<String, serde_json::Value>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    settings: &'a BTreeMap<String, String>,
    inputs: &'a BTreeMap<String, String>,
    outputs: &'a [String],
    details: &'a BTreeMap<String, serde_json::Value>,
}

fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

impl Context {
    fn new(command: &'static str, cli: &Cli) -> CliResult<Self> {
        let file = match &cli.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        let out_dir = cli
            .out_dir
            .clone()
            .or_else(|| file.get("out_dir").map(PathBuf::from))
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::io(format!("cannot create output directory {}: {e}", out_dir.display())))?;
        let mut settings = BTreeMap::new();
        if let Some(p) = &cli.config {
            settings.insert("config".into(), p.display().to_string());
        }
        Ok(Self {
            command,
            file,
            out_dir,
            settings,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            details: BTreeMap::new(),
        })
    }

    /// Flag value, else config value, else `default`.
    fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.file.get(key) {
                Some(text) => Some(
                    text.parse::<T>()
                        .map_err(|e| CliError::usage(format!("invalid value for `{key}`: {e}")))?,
                ),
                None => default,
            },
        };
        if let Some(v) = &value {
            self.settings.insert(key.into(), v.to_string());
        }
        Ok(value)
    }

    fn require<T>(&mut self, key: &str, flag: Option<T>, default: T) -> CliResult<T>
    where
        T: FromStr + ToString,
        T::Err: fmt::Display,
    {
        Ok(self.get(key, flag, Some(default))?.unwrap())
    }

    fn input(&mut self, path: &Path) -> CliResult<()> {
        if !path.is_file() {
            return Err(CliError::io(format!("input not found: {}", path.display())));
        }
        let hash = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    fn output_path(&self, explicit: &Option<PathBuf>, default_name: &str) -> PathBuf {
        explicit.clone().unwrap_or_else(|| self.out_dir.join(default_name))
    }

    fn wrote(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    fn detail(&mut self, key: &str, value: serde_json::Value) {
        self.details.insert(key.into(), value);
    }

    fn write_manifest(&self) -> CliResult<()> {
        let manifest = Manifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            settings: &self.settings,
            inputs: &self.inputs,
            outputs: &self.outputs,
            details: &self.details,
        };
        let path = self.out_dir.join(format!("manifest_{}.json", self.command));
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        fs::write(&path, text + "\n")
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
    }
}

fn parse_list<T: FromStr>(text: &str, what: &str) -> CliResult<Vec<T>> {
    let out = text
        .split(',')
        .map(|t| t.trim().parse::<T>())
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|_| CliError::usage(format!("invalid {what} list `{text}`")))?;
    if out.is_empty() {
        return Err(CliError::usage(format!("empty {what} list")));
    }
    Ok(out)
}

/// Parses `softplus`, `softplus:<beta>` or `tanh`.
pub fn parse_activation(text: &str) -> CliResult<Activation> {
    match text.split_once(':') {
        None if text == "tanh" => Ok(Activation::Tanh),
        None if text == "softplus" => Ok(Activation::default()),
        Some(("softplus", beta)) => match beta.parse::<f64>() {
            Ok(beta) if beta > 0.0 && beta.is_finite() => Ok(Activation::Softplus { beta }),
            _ => Err(CliError::usage(format!("invalid softplus beta `{beta}`"))),
        },
        _ => Err(CliError::usage(format!("unknown activation `{text}`"))),
    }
}

fn create(path: &Path) -> CliResult<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", path.display())))
}

fn cmd_sample(cli: &Cli, args: &SampleArgs) -> CliResult<()> {
    let mut ctx = Context::new("sample", cli)?;
    let n: usize = ctx
        .get("n", args.n, None)?
        .ok_or_else(|| CliError::usage("sample needs --n"))?;
    if n == 0 {
        return Err(CliError::usage("--n must be positive"));
    }
    let seed = ctx.require("seed", args.seed, 0u64)?;
    ctx.input(&args.mesh)?;
    let out = ctx.output_path(&args.output, "cloud.xyz");

    let mesh = read_mesh(&args.mesh)?;
    let bounds = mesh
        .bounds()
        .ok_or_else(|| CliError::io(format!("{} has no vertices", args.mesh.display())))?;
    let transform = NormalizeTransform::fit(&bounds).map_err(|e| CliError::io(e.to_string()))?;
    info!(
        "normalizing: center ({}, {}, {}), scale {}",
        transform.center.x, transform.center.y, transform.center.z, transform.scale
    );
    let mesh = mesh.transformed(&transform);
    let cloud = sample_surface(&mesh, n, SeedSplitter::new(seed).seed(Stream::Surface, 0))?;
    write_xyz_file(&cloud, &out)?;
    ctx.wrote(&out);
    ctx.detail(
        "normalization",
        serde_json::json!({
            "center": [transform.center.x, transform.center.y, transform.center.z],
            "scale": transform.scale,
        }),
    );
    ctx.write_manifest()?;
    println!("wrote {n} points to {}", out.display());
    Ok(())
}

fn cmd_fit(cli: &Cli, args: &FitArgs) -> CliResult<()> {
    let mut ctx = Context::new("fit", cli)?;
    let defaults = TrainConfig::default();
    let iterations = ctx.require("iterations", args.iterations, defaults.iterations)?;
    let n_same = ctx.require("n_same", args.n_same, defaults.n_same)?;
    let regime: Regime = ctx
        .require("regime", args.regime.clone(), defaults.regime.to_string())?
        .parse()?;
    let schedule: SigmaSchedule = ctx
        .require("sigma_schedule", args.sigma_schedule.clone(), defaults.schedule.to_string())?
        .parse()?;
    let lr = ctx.require("lr", args.lr, defaults.lr)?;
    let seed = ctx.require("seed", args.seed, defaults.seed)?;
    let default_hidden = defaults
        .model
        .hidden
        .iter()
        .map(|w| w.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let hidden: Vec<usize> = parse_list(&ctx.require("hidden", args.hidden.clone(), default_hidden)?, "width")?;
    let activation = parse_activation(&ctx.require("activation", args.activation.clone(), "softplus:100".into())?)?;
    let cfg = TrainConfig {
        iterations,
        n_same,
        regime,
        schedule,
        lr,
        seed,
        model: ModelConfig {
            hidden,
            activation,
            ..defaults.model
        },
        ..defaults
    };
    cfg.validate()?;
    ctx.input(&args.cloud)?;
    let ckpt_path = ctx.output_path(&args.output, "model.ckpt");
    let csv_path = ctx.out_dir.join("loss.csv");
    let svg_path = ctx.out_dir.join("loss.svg");

    let cloud = read_xyz(&args.cloud)?;
    let mut trainer = Trainer::new(cloud, cfg)?;
    let mut csv = LossCsvWriter::new(create(&csv_path)?)?;
    ctx.wrote(&csv_path);
    let result = trainer.run(iterations, |r| csv.write(r));
    drop(csv);
    let events: Vec<_> = trainer
        .events()
        .iter()
        .map(|e| serde_json::json!({"iteration": e.iteration, "multiplier": e.multiplier}))
        .collect();
    ctx.detail("sigma_events", serde_json::Value::Array(events));
    ctx.detail("completed_iterations", trainer.iteration().into());
    if !args.no_plot {
        fs::write(&svg_path, loss_svg(trainer.history()))
            .map_err(|e| CliError::io(format!("cannot write {}: {e}", svg_path.display())))?;
        ctx.wrote(&svg_path);
    }
    if let Err(e) = result {
        ctx.detail("error", e.to_string().into());
        ctx.write_manifest()?;
        return Err(e.into());
    }
    write_checkpoint(trainer.model(), create(&ckpt_path)?)?;
    ctx.wrote(&ckpt_path);
    let last = *trainer.history().last().expect("at least one iteration");
    ctx.detail(
        "final_loss",
        serde_json::json!({"l_opp": last.loss.l_opp, "l_same": last.loss.l_same, "l_total": last.loss.l_total}),
    );
    ctx.write_manifest()?;
    println!(
        "fitted {} iterations: l_opp {:.6} l_same {:.6} l_total {:.6}",
        trainer.iteration(),
        last.loss.l_opp,
        last.loss.l_same,
        last.loss.l_total
    );
    Ok(())
}

fn cmd_extract(cli: &Cli, args: &ExtractArgs) -> CliResult<()> {
    let mut ctx = Context::new("extract", cli)?;
    let res = ctx.require("res", args.res, DEFAULT_RESOLUTION)?;
    if res < 2 {
        return Err(CliError::usage("--res must be at least 2"));
    }
    ctx.input(&args.checkpoint)?;
    let out = ctx.output_path(&args.output, "mesh.obj");

    let file = fs::File::open(&args.checkpoint)
        .map_err(|e| CliError::io(format!("cannot open {}: {e}", args.checkpoint.display())))?;
    let model = read_checkpoint(std::io::BufReader::new(file))?;
    let grid = orient_field(&evaluate_grid(&model, &Aabb::unit_domain(), [res; 3])?);
    if let Some(v) = &args.volume {
        grid.write_volume(v)?;
        ctx.wrote(v);
    }
    let ex = marching_cubes(&grid, 0.5);
    write_mesh(&ex.mesh, &out)?;
    ctx.wrote(&out);
    let status = match ex.status {
        ExtractionStatus::Surface => "surface",
        ExtractionStatus::Empty => {
            warn!("extraction produced an empty mesh");
            "empty"
        }
    };
    ctx.detail("status", status.into());
    ctx.detail("vertices", ex.mesh.vertices.len().into());
    ctx.detail("faces", ex.mesh.faces.len().into());
    ctx.write_manifest()?;
    println!(
        "{status}: {} vertices, {} faces -> {}",
        ex.mesh.vertices.len(),
        ex.mesh.faces.len(),
        out.display()
    );
    Ok(())
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> CliResult<()> {
    let mut ctx = Context::new("eval", cli)?;
    let defaults = EvalOptions::default();
    let samples = ctx.require("samples", args.samples, defaults.samples)?;
    let seed = ctx.require("seed", args.seed, defaults.seed)?;
    let res = ctx.require("res", args.res, defaults.resolution)?;
    let default_q = DEFAULT_QUANTILES.map(|q| q.to_string()).join(",");
    let quantiles: Vec<f64> = parse_list(&ctx.require("quantiles", args.quantiles.clone(), default_q)?, "quantile")?;
    if samples == 0 || res < 2 {
        return Err(CliError::usage("--samples must be positive and --res at least 2"));
    }
    ctx.input(&args.pred)?;
    ctx.input(&args.truth)?;
    let out = ctx.output_path(&args.output, "metrics.csv");

    let pred = read_mesh(&args.pred)?;
    let truth = read_mesh(&args.truth)?;
    let opts = EvalOptions {
        samples,
        seed,
        quantiles,
        resolution: res,
        ..defaults
    };
    let report = evaluate_meshes(&pred, &truth, &opts)?;
    report.write_csv(create(&out)?)?;
    ctx.wrote(&out);
    ctx.write_manifest()?;
    println!("{}\n{}", report.csv_header(), report.csv_row());
    Ok(())
}

fn cmd_audit(cli: &Cli, args: &AuditArgs) -> CliResult<()> {
    let mut ctx = Context::new("audit", cli)?;
    let alphas: Vec<f64> = parse_list(
        &ctx.require("alphas", args.alphas.clone(), "2,1,0.5,0.1,0.01".into())?,
        "alpha",
    )?;
    for &a in &alphas {
        SigmaRule::new(a)?;
    }
    let draws = ctx.require("draws", args.draws, 1usize)?;
    let n_same = ctx.require("n_same", args.n_same, DEFAULT_N_SAME)?;
    let seed = ctx.require("seed", args.seed, 0u64)?;
    if draws == 0 || n_same == 0 {
        return Err(CliError::usage("--draws and --n-same must be positive"));
    }
    ctx.input(&args.cloud)?;
    ctx.input(&args.truth)?;
    let out = ctx.output_path(&args.output, "audit.csv");

    let cloud = read_xyz(&args.cloud)?;
    let truth = read_mesh(&args.truth)?;
    let domain = Aabb::unit_domain();
    let rows = audit_sweep(&cloud, &truth, &alphas, n_same, &domain, draws, seed)?;
    {
        use std::io::Write;
        let mut w = create(&out)?;
        let err = |e: std::io::Error| CliError::io(format!("cannot write {}: {e}", out.display()));
        writeln!(w, "alpha,opp_good_rate,same_good_rate,opp_needles,same_needles").map_err(err)?;
        for r in &rows {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.alpha, r.opp_good_rate, r.same_good_rate, r.opp_needles, r.same_needles
            )
            .map_err(err)?;
        }
        w.flush().map_err(err)?;
    }
    ctx.wrote(&out);
    if args.dump_needles {
        use std::io::Write;
        let index = crate::geometry::CrossingIndex::new(&truth);
        let split = SeedSplitter::new(seed);
        for &alpha in &alphas {
            let opp = sample_q_opp(&cloud, SigmaRule::new(alpha)?, split.seed(Stream::Offsets, 0))?;
            let same = sample_q_same(&opp.points, n_same, &domain, split.seed(Stream::FreeSpace, 0))?;
            let path = ctx.out_dir.join(format!("needles_alpha_{alpha}.csv"));
            let mut w = create(&path)?;
            let err = |e: std::io::Error| CliError::io(format!("cannot write {}: {e}", path.display()));
            writeln!(w, "ax,ay,az,bx,by,bz,target,crossings,good").map_err(err)?;
            for set in [&opp, &same] {
                let audit = audit_set(&set.needles, &index)?;
                for ((n, c), g) in set.needles.iter().zip(&audit.crossings).zip(&audit.good) {
                    writeln!(
                        w,
                        "{},{},{},{},{},{},{},{},{}",
                        n.a.x,
                        n.a.y,
                        n.a.z,
                        n.b.x,
                        n.b.y,
                        n.b.z,
                        n.target.value() as u8,
                        c,
                        *g as u8
                    )
                    .map_err(err)?;
                }
            }
            w.flush().map_err(err)?;
            ctx.wrote(&path);
        }
    }
    ctx.write_manifest()?;
    println!("alpha,opp_good_rate,same_good_rate");
    for r in &rows {
        println!("{},{:.4},{:.4}", r.alpha, r.opp_good_rate, r.same_good_rate);
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Sample(a) => cmd_sample(&cli, a),
        Command::Fit(a) => cmd_fit(&cli, a),
        Command::Extract(a) => cmd_extract(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Audit(a) => cmd_audit(&cli, a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
