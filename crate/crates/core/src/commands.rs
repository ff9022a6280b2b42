//! The `prl` command line: argument parsing, manifests and one function per
//! subcommand.
//!
//! Exit codes: 0 success, 1 validation failure (bad arguments, unreadable or
//! unmatched inputs, shape/config conflicts), 2 numerical failure (NaN,
//! divergence, gradient-check breach).

use std::ffi::OsString;
use std::fmt::{self, Display, Write as _};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checks;
use crate::config::Settings;
use crate::error::{Error, Result};
use crate::geometry::{self, BoundaryRule, Normalization};
use crate::io;
use crate::metrics;
use crate::net::train::{self, SweepParam, DEFAULT_STEPS};
use crate::net::{FrdfMode, NetConfig, ParamStore, Prediction, PrlNet, ShapeChain, TrainSample, Trainer};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const DEFAULT_SEED: u64 = 0;
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Provenance record written next to every output: version, seed, options
/// and hyperparameters. Never contains paths or timestamps, so reruns with
/// the same inputs produce identical bytes.
#[derive(Clone, Debug, Default)]
pub struct Manifest {
    header: Vec<(String, String)>,
    sections: Vec<(String, Vec<(String, String)>)>,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        let header = vec![
            ("version".into(), VERSION.into()),
            ("command".into(), command.into()),
            ("seed".into(), seed.to_string()),
            ("rng".into(), crate::rng::ALGORITHM.into()),
        ];
        Self { header, sections: Vec::new() }
    }

    /// Adds `key = value` to the named section, creating it on first use.
    pub fn set(&mut self, section: &str, key: &str, value: impl Display) -> &mut Self {
        let entry = (key.to_string(), value.to_string());
        match self.sections.iter_mut().find(|(s, _)| s == section) {
            Some((_, entries)) => entries.push(entry),
            None => self.sections.push((section.to_string(), vec![entry])),
        }
        self
    }

    pub fn hyperparameters(&mut self, settings: &Settings) -> &mut Self {
        for line in settings.hyperparameters().lines() {
            if let Some((k, v)) = line.split_once(" = ") {
                self.set("hyperparameters", k, v);
            }
        }
        self
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_string())?)
    }
}

impl Display for Manifest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, v) in &self.header {
            writeln!(f, "{k} = {v}")?;
        }
        for (section, entries) in &self.sections {
            writeln!(f, "\n[{section}]")?;
            for (k, v) in entries {
                writeln!(f, "{k} = {v}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Parser)]
#[command(name = "prl", version, about = "RGB-T salient object detection toolkit")]
pub struct Cli {
    /// Seed for every random draw (falls back to the config file, then 0).
    #[arg(long, global = true, env = "PRL_SEED")]
    pub seed: Option<u64>,

    /// INI-style `key = value` settings file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write signed distance maps and direction fields for binary masks.
    GenSupervision(GenSupervisionArgs),
    /// Score predictions against ground truth.
    Eval(EvalArgs),
    /// Run the network on one RGB-T pair, or print the shape chain.
    Forward(ForwardArgs),
    /// Compare reverse-mode gradients with finite differences.
    GradCheck(GradCheckArgs),
    /// Overfit the toy network on one aligned triple.
    TrainToy(TrainToyArgs),
}

#[derive(Debug, Args)]
pub struct GenSupervisionArgs {
    /// A mask image or a directory of them.
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "max-abs")]
    pub normalize: Normalization,
    #[arg(long, default_value = "interface")]
    pub border_rule: BoundaryRule,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
    #[arg(long, default_value = "pr.csv")]
    pub pr: PathBuf,
}

#[derive(Debug, Args)]
pub struct ForwardArgs {
    #[arg(long, required_unless_present = "dry_run")]
    pub rgb: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub thermal: Option<PathBuf>,
    /// Checkpoint written by train-toy; random init when absent.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    #[arg(long, required_unless_present = "dry_run")]
    pub out: Option<PathBuf>,
    /// Print the shape chain without allocating weights.
    #[arg(long)]
    pub dry_run: bool,
    /// Size preset: toy (96, c=16) or paper (384, c=128).
    #[arg(long, default_value = "toy")]
    pub preset: String,
    #[arg(long)]
    pub frdf_mode: Option<FrdfMode>,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    /// Random instances per checked operation.
    #[arg(long, default_value_t = checks::DEFAULT_INSTANCES)]
    pub instances: usize,
    /// Negate every reverse-mode gradient; the check must then fail.
    #[arg(long, hide = true)]
    pub inject_bug: bool,
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    #[arg(long, required_unless_present = "synthetic")]
    pub rgb: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub thermal: Option<PathBuf>,
    #[arg(long, required_unless_present = "synthetic")]
    pub mask: Option<PathBuf>,
    /// Train on the built-in bright-rectangle pair instead of files.
    #[arg(long, conflicts_with_all = ["rgb", "thermal", "mask"])]
    pub synthetic: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_STEPS)]
    pub steps: usize,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long = "K")]
    pub k: Option<usize>,
    #[arg(long)]
    pub frdf_mode: Option<FrdfMode>,
    #[arg(long, default_value = "max-abs")]
    pub normalize: Normalization,
    #[arg(long, default_value = "interface")]
    pub border_rule: BoundaryRule,
    /// Train once per value of this setting (K, lambda1 or lambda2).
    #[arg(long)]
    pub sweep: Option<SweepParam>,
    /// Comma-separated sweep values (K defaults to 0..=8).
    #[arg(long, value_delimiter = ',')]
    pub values: Vec<f64>,
}

/// Parses arguments and runs one command, printing to `out`/`err`.
/// Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let mut settings = match &cli.config {
        Some(path) => Settings::load(path)?,
        None => Settings::default(),
    };
    let seed = cli.seed.or(settings.seed).unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::GenSupervision(a) => {
            let report = gen_supervision(&a, seed)?;
            out.write_all(report.as_bytes())?;
        }
        Command::Eval(a) => {
            let report = eval(&a, seed)?;
            out.write_all(report.as_bytes())?;
        }
        Command::Forward(a) => {
            if a.preset != "toy" || a.dry_run {
                settings.net = preset(&a.preset, &settings.net)?;
            }
            if let Some(m) = a.frdf_mode {
                settings.net.frdf_mode = m;
            }
            let text = forward(&a, &settings, seed)?;
            out.write_all(text.as_bytes())?;
        }
        Command::GradCheck(a) => grad_check(&a, seed, out)?,
        Command::TrainToy(a) => {
            if let Some(v) = a.lambda1 {
                settings.loss.lambda1 = v;
            }
            if let Some(v) = a.lambda2 {
                settings.loss.lambda2 = v;
            }
            if let Some(k) = a.k {
                settings.net.frdf_iterations = k;
            }
            if let Some(m) = a.frdf_mode {
                settings.net.frdf_mode = m;
            }
            train_toy(&a, &settings, seed, out)?;
        }
    }
    Ok(())
}

/// `toy` keeps the configured network; `paper` switches to full size.
fn preset(name: &str, current: &NetConfig) -> Result<NetConfig> {
    match name {
        "toy" => Ok(current.clone()),
        "paper" => Ok(NetConfig { frdf_iterations: current.frdf_iterations, frdf_mode: current.frdf_mode, ..NetConfig::paper() }),
        _ => Err(Error::Config(format!("unknown preset {name:?} (toy or paper)"))),
    }
}

fn require_file(path: &Path) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Io(std::io::Error::new(std::io::ErrorKind::NotFound, format!("{} is not a file", path.display()))))
    }
}

fn ensure_dir(path: &Path) -> Result<()> {
    Ok(fs::create_dir_all(path)?)
}

/// Writes `<stem>_sdm.pfm`, `<stem>_fx.pfm` and `<stem>_fy.pfm` per mask and
/// a manifest; returns a per-file summary. Fails (after processing every
/// file) if any mask could not be read.
pub fn gen_supervision(a: &GenSupervisionArgs, seed: u64) -> Result<String> {
    let files = io::collect_images(&a.mask)?;
    if files.is_empty() {
        return Err(Error::Unmatched(a.mask.clone()));
    }
    ensure_dir(&a.out)?;
    let mut manifest = Manifest::new("gen-supervision", seed);
    manifest.set("options", "normalize", a.normalize.name()).set("options", "border_rule", a.border_rule.name());
    manifest.hyperparameters(&Settings::default());
    let mut summary = String::new();
    let mut failures = Vec::new();
    for (stem, path) in &files {
        let status = match write_supervision(stem, path, &a.out, a.normalize, a.border_rule) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("{stem}: {e}"));
                format!("error: {e}")
            }
        };
        let _ = writeln!(summary, "{stem}: {status}");
        manifest.set("files", stem, &status);
    }
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    if !failures.is_empty() {
        return Err(Error::Config(format!("{} of {} masks failed: {}", failures.len(), files.len(), failures.join("; "))));
    }
    Ok(summary)
}

fn write_supervision(stem: &str, path: &Path, out: &Path, mode: Normalization, rule: BoundaryRule) -> Result<String> {
    let (mask, gray) = io::read_mask_counting_gray(path)?;
    let sup = geometry::supervision(&mask, mode, rule);
    let (h, w) = (mask.height(), mask.width());
    io::write_pfm(&out.join(format!("{stem}_sdm.pfm")), h, w, sup.sdm.normalized())?;
    io::write_pfm(&out.join(format!("{stem}_fx.pfm")), h, w, sup.field.fx())?;
    io::write_pfm(&out.join(format!("{stem}_fy.pfm")), h, w, sup.field.fy())?;
    let mut status = if sup.degenerate {
        format!("{h}x{w} degenerate (constant mask, zero maps written)")
    } else {
        format!("{h}x{w} ok")
    };
    if gray > 0 {
        let _ = write!(status, ", warning: {gray} non-binary pixels thresholded at {}", io::MASK_THRESHOLD);
    }
    Ok(status)
}

/// Writes the per-image report and the averaged P-R curve.
pub fn eval(a: &EvalArgs, seed: u64) -> Result<String> {
    for dir in [&a.pred, &a.gt] {
        if !dir.is_dir() {
            return Err(Error::Config(format!("{} is not a directory", dir.display())));
        }
    }
    let report = metrics::evaluate_dir(&a.pred, &a.gt)?;
    fs::write(&a.out, report.report_csv())?;
    fs::write(&a.pr, report.pr_csv())?;
    let mut manifest = Manifest::new("eval", seed);
    manifest
        .set("options", "images", report.images.len())
        .set("options", "pr_thresholds", metrics::PR_THRESHOLDS)
        .set("hyperparameters", "f_beta2", metrics::DEFAULT_BETA2)
        .set("hyperparameters", "s_alpha", metrics::DEFAULT_S_ALPHA)
        .set("hyperparameters", "mask_threshold", io::MASK_THRESHOLD);
    manifest.write(&sidecar(&a.out))?;
    let m = &report.aggregate;
    Ok(format!(
        "{} images: S {:.4}  maxF {:.4}  meanF {:.4}  adpF {:.4}  E {:.4}  MAE {:.4}\n",
        report.images.len(),
        m.s_measure,
        m.max_f,
        m.mean_f,
        m.adaptive_f,
        m.e_measure,
        m.mae
    ))
}

/// `<path>.manifest`
pub fn sidecar(path: &Path) -> PathBuf {
    crate::net::params::manifest_path(path)
}

/// Writes `pred_sal.png`, `pred_sdm.pfm`, `pred_fx.pfm`, `pred_fy.pfm`.
pub fn write_prediction(dir: &Path, pred: &Prediction) -> Result<()> {
    let &[h, w, _] = pred.saliency.shape() else {
        return Err(Error::shape("write_prediction", format!("{:?}", pred.saliency.shape())));
    };
    io::write_gray_png(&dir.join("pred_sal.png"), h, w, pred.saliency.data())?;
    io::write_pfm(&dir.join("pred_sdm.pfm"), h, w, pred.sdm.data())?;
    let (fx, fy): (Vec<f64>, Vec<f64>) = pred.field.data().chunks_exact(2).map(|v| (v[0], v[1])).unzip();
    io::write_pfm(&dir.join("pred_fx.pfm"), h, w, &fx)?;
    io::write_pfm(&dir.join("pred_fy.pfm"), h, w, &fy)?;
    Ok(())
}

pub fn forward(a: &ForwardArgs, settings: &Settings, seed: u64) -> Result<String> {
    settings.validate()?;
    if a.dry_run {
        let chain = ShapeChain::new(&settings.net)?;
        return Ok(format!("shape chain ({}x{}, c={}):\n{chain}", settings.net.image_size, settings.net.image_size, settings.net.embed_dim));
    }
    let (rgb, thermal, out) = match (&a.rgb, &a.thermal, &a.out) {
        (Some(r), Some(t), Some(o)) => (r, t, o),
        _ => return Err(Error::Config("forward needs --rgb, --thermal and --out".into())),
    };
    require_file(rgb)?;
    require_file(thermal)?;
    let mut net = PrlNet::new(settings.net.clone(), seed)?;
    if let Some(ckpt) = &a.ckpt {
        net.params_mut().load_from(&ParamStore::load(ckpt)?)?;
    }
    let hw = settings.net.image_size;
    let pred = net.predict(&io::read_image(rgb, hw, hw)?, &io::read_image(thermal, hw, hw)?)?;
    ensure_dir(out)?;
    write_prediction(out, &pred)?;
    let mut manifest = Manifest::new("forward", seed);
    manifest
        .set("options", "weights", if a.ckpt.is_some() { "checkpoint" } else { "random-init" })
        .set("options", "preset", &a.preset);
    manifest.hyperparameters(settings);
    manifest.write(&out.join(MANIFEST_FILE))?;
    Ok(format!("wrote {hw}x{hw} predictions\n"))
}

pub fn grad_check(a: &GradCheckArgs, seed: u64, out: &mut dyn Write) -> Result<()> {
    if a.instances == 0 {
        return Err(Error::Config("--instances must be positive".into()));
    }
    writeln!(out, "prl {VERSION} grad-check seed={seed} instances={} tol={:e}", a.instances, checks::GRAD_TOL)?;
    let results = checks::gradient_suite(seed, a.instances, a.inject_bug)?;
    let mut failed = Vec::new();
    for r in &results {
        let verdict = if r.passed() { "ok" } else { "FAIL" };
        writeln!(out, "{:<40} {:>6} values  max rel err {:.3e}  {verdict}", r.name, r.report.checked, r.report.max_rel_err)?;
        if !r.passed() {
            failed.push(r.name);
        }
    }
    if failed.is_empty() {
        writeln!(out, "all {} operations passed", results.len())?;
        Ok(())
    } else {
        Err(Error::Numerical(format!("gradient check failed for {}", failed.join(", "))))
    }
}

fn load_sample(a: &TrainToyArgs, settings: &Settings) -> Result<TrainSample> {
    let hw = settings.net.image_size;
    if a.synthetic {
        return train::rectangle_scene(hw);
    }
    let (rgb, thermal, mask) = match (&a.rgb, &a.thermal, &a.mask) {
        (Some(r), Some(t), Some(m)) => (r, t, m),
        _ => return Err(Error::Config("train-toy needs --rgb, --thermal and --mask, or --synthetic".into())),
    };
    for p in [rgb, thermal, mask] {
        require_file(p)?;
    }
    TrainSample::with_options(
        io::read_image(rgb, hw, hw)?,
        io::read_image(thermal, hw, hw)?,
        io::read_mask_sized(mask, Some((hw, hw)))?,
        a.normalize,
        a.border_rule,
    )
}

pub fn train_toy(a: &TrainToyArgs, settings: &Settings, seed: u64, out: &mut dyn Write) -> Result<()> {
    settings.validate()?;
    let sample = load_sample(a, settings)?;
    ensure_dir(&a.out)?;
    let mut manifest = Manifest::new("train-toy", seed);
    manifest
        .set("options", "input", if a.synthetic { "synthetic" } else { "files" })
        .set("options", "steps", a.steps)
        .set("options", "normalize", a.normalize.name())
        .set("options", "border_rule", a.border_rule.name());
    manifest.hyperparameters(settings);
    if sample.targets.degenerate {
        writeln!(out, "warning: constant mask, zero SDM/DF targets")?;
    }

    if let Some(param) = a.sweep {
        let values = match (param, a.values.is_empty()) {
            (SweepParam::K, true) => (0..=8).map(f64::from).collect(),
            (_, true) => return Err(Error::Config(format!("--sweep {} needs --values", param.name()))),
            (_, false) => a.values.clone(),
        };
        let rows = train::sweep(&settings.net, seed, &sample, settings.loss, settings.adam, a.steps, param, &values)?;
        let csv = train::sweep_csv(param, &rows);
        fs::write(a.out.join(format!("sweep_{}.csv", param.name())), &csv)?;
        manifest.set("options", "sweep", param.name());
        manifest.write(&a.out.join(MANIFEST_FILE))?;
        out.write_all(csv.as_bytes())?;
        return Ok(());
    }

    let net = PrlNet::new(settings.net.clone(), seed)?;
    let mut trainer = Trainer::new(net, sample, settings.loss, settings.adam)?;
    let log = train::train(&mut trainer, a.steps)?;
    fs::write(a.out.join("losses.csv"), log.csv())?;
    write_prediction(&a.out, &trainer.predict()?)?;
    trainer.net().params().save(&a.out.join("model.prlt"))?;
    manifest.write(&a.out.join(MANIFEST_FILE))?;
    let l = log.last;
    writeln!(
        out,
        "{} steps: prl {:.3} (sal {:.3}, sdm {:.3}, df {:.3}), reduction {:.1}%, training MAE {:.4}",
        a.steps,
        l.prl,
        l.sal,
        l.sdm,
        l.df,
        100.0 * log.prl_reduction(),
        log.final_mae
    )?;
    Ok(())
}
