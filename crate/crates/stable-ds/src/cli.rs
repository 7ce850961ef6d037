//! The `stable-ds` command line.

use std::ffi::OsString;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use stable_ds_core::data::{default_target, normalize, Demonstration};
use stable_ds_core::dynamics::DynamicsMode;
use stable_ds_core::evaluation::{rollout_with, vector_field, GridSpec, Integrator, Rollout};
use stable_ds_core::training::{train, IterationRecord, TrainConfig};
use stable_ds_core::StableDsModel;

use crate::dataset::{self, LoadOptions};
use crate::error::{Error, Result};
use crate::persist::{load_model, save_model, write_atomic};
use crate::report::{self, RunManifest};
use crate::svg;

pub const EXIT_OK: i32 = 0;
/// Unreadable or invalid input, or bad arguments.
pub const EXIT_INPUT: i32 = 1;
/// Training diverged; a snapshot was written.
pub const EXIT_DIVERGED: i32 = 2;
/// The stability audit found violations.
pub const EXIT_UNSTABLE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "stable-ds", version, about = "Learn globally stable point-to-point motions from demonstrations")]
pub struct Cli {
    /// Seed for initialization, shuffling and audit sampling.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a dataset and print its summary.
    Check(DataArgs),
    /// Train a model and write it with a manifest and loss history.
    Train(TrainArgs),
    /// Reproduce every demonstration and score the model.
    Eval(EvalArgs),
    /// Integrate the learned system from demonstration starts or a given state.
    Rollout(RolloutArgs),
    /// Sample the learned vector field on a grid.
    Field(FieldArgs),
    /// Read states from stdin, one per line, and print their velocities.
    Query(QueryArgs),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Demonstration file (.csv or .json) or a directory of them.
    #[arg(long)]
    pub data: PathBuf,
    /// Sampling interval in seconds; overrides timestamps.
    #[arg(long)]
    pub dt: Option<f64>,
}

impl DataArgs {
    fn load(&self) -> Result<Vec<Demonstration>> {
        dataset::load_demonstrations(&self.data, &LoadOptions { dt: self.dt })
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Model file to write; the manifest and loss history go next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Learning-rate multiplier per pass over the data.
    #[arg(long, default_value_t = 0.99)]
    pub decay: f64,
    /// Contraction rate of the fallback latent velocity.
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    /// `learned` or `fixed-contraction`.
    #[arg(long, default_value = "learned")]
    pub mode: DynamicsMode,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum IntegratorArg {
    Euler,
    Rk4,
}

impl From<IntegratorArg> for Integrator {
    fn from(a: IntegratorArg) -> Self {
        match a {
            IntegratorArg::Euler => Integrator::Euler,
            IntegratorArg::Rk4 => Integrator::Rk4,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for an SVG plot of the dataset.
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Run a stability audit with this many samples per region.
    #[arg(long)]
    pub audit: Option<usize>,
    #[arg(long, value_enum, default_value = "euler")]
    pub integrator: IntegratorArg,
}

#[derive(Debug, Args)]
pub struct RolloutArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Start from every demonstration's first state.
    #[arg(long, conflicts_with = "start")]
    pub data: Option<PathBuf>,
    /// Start state, comma separated, in workspace units.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub start: Option<Vec<f64>>,
    /// Steps per rollout; defaults to the demonstration length.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Step size; defaults to the demonstration's.
    #[arg(long)]
    pub dt: Option<f64>,
    /// CSV output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "euler")]
    pub integrator: IntegratorArg,
}

#[derive(Debug, Args)]
pub struct FieldArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// CSV output path.
    #[arg(long)]
    pub out: PathBuf,
    /// Grid points per axis.
    #[arg(long, default_value_t = 20)]
    pub resolution: usize,
    /// Demonstrations to overlay (and reproduce) in the SVG.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// SVG output path.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QueryArgs {
    #[arg(long)]
    pub model: PathBuf,
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let mut io = Io { stdout, stderr };
    let seed = cli.seed;
    let result = match &cli.command {
        Command::Check(a) => check(a, &mut io),
        Command::Train(a) => cmd_train(a, seed, &mut io),
        Command::Eval(a) => cmd_eval(a, seed, &mut io),
        Command::Rollout(a) => cmd_rollout(a, &mut io),
        Command::Field(a) => cmd_field(a, &mut io),
        Command::Query(a) => cmd_query(a, stdin, &mut io),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {e}");
            EXIT_INPUT
        }
    }
}

struct Io<'a> {
    stdout: &'a mut dyn Write,
    stderr: &'a mut dyn Write,
}

fn out_err(e: std::io::Error) -> Error {
    Error::io("<stdout>", e)
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

fn check(a: &DataArgs, io: &mut Io<'_>) -> Result<i32> {
    let demos = a.load()?;
    let target = default_target(&demos)?;
    let ds = normalize(&demos, Some(&target))?;
    let w = &mut io.stdout;
    writeln!(w, "{}: {} demonstrations, {}-D states", a.data.display(), demos.len(), ds.dim()).map_err(out_err)?;
    for d in &demos {
        writeln!(
            w,
            "  demo {:>3}: K={:<6} dt={:<12} start=[{}] end=[{}]",
            d.index,
            d.len(),
            d.dt,
            fmt_vec(d.start()),
            fmt_vec(d.end())
        )
        .map_err(out_err)?;
    }
    let n = &ds.normalization;
    writeln!(w, "target      [{}]", fmt_vec(&n.target)).map_err(out_err)?;
    writeln!(w, "scale       [{}]", fmt_vec(&n.scale)).map_err(out_err)?;
    writeln!(w, "bounds      [{}] .. [{}]", fmt_vec(&n.lower), fmt_vec(&n.upper)).map_err(out_err)?;
    for i in &ds.degenerate_dims {
        writeln!(io.stderr, "warning: state dimension {} has zero range; scale set to 1", i + 1).map_err(out_err)?;
    }
    Ok(EXIT_OK)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn cmd_train(a: &TrainArgs, seed: u64, io: &mut Io<'_>) -> Result<i32> {
    let started = report::unix_now();
    let demos = a.data.load()?;
    let fingerprint = dataset::fingerprint(&a.data.data)?;
    let ds = normalize(&demos, None)?;
    for i in &ds.degenerate_dims {
        let _ = writeln!(io.stderr, "warning: state dimension {} has zero range; scale set to 1", i + 1);
    }
    let cfg = TrainConfig {
        learning_rate: a.lr,
        decay: a.decay,
        max_iterations: a.iters,
        batch_size: a.batch,
        beta: a.beta,
        seed,
        mode: a.mode,
    };
    let stderr = &mut *io.stderr;
    let last = cfg.max_iterations.saturating_sub(1);
    let mut progress = |r: &IterationRecord| {
        if r.iteration % 100 == 0 || r.iteration == last {
            let _ = writeln!(
                stderr,
                "iter {:>5}  epoch {:>3}  lr {:.3e}  loss {:.6e}  skipped {}",
                r.iteration, r.epoch, r.lr, r.loss, r.skipped
            );
        }
    };
    let outcome = match train(&ds, &cfg, &mut progress) {
        Ok(o) => o,
        Err(stable_ds_core::Error::Divergence {
            iteration,
            consecutive,
            snapshot,
        }) => {
            let snap = sibling(&a.out, "snapshot.json");
            save_model(&snapshot, &snap)?;
            let _ = writeln!(
                io.stderr,
                "error: training diverged at iteration {iteration} after {consecutive} non-finite losses; last finite parameters written to {}",
                snap.display()
            );
            return Ok(EXIT_DIVERGED);
        }
        Err(e) => return Err(e.into()),
    };
    save_model(&outcome.model, &a.out)?;
    let history_path = sibling(&a.out, "loss.csv");
    write_atomic(&history_path, report::history_to_csv(&outcome.history).as_bytes())?;
    let final_loss = outcome.history.last().map_or(f64::NAN, |r| r.loss);
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg,
        seed,
        dataset: a.data.data.display().to_string(),
        dataset_sha256: fingerprint,
        model_path: a.out.display().to_string(),
        metrics_path: history_path.display().to_string(),
        best_iteration: outcome.best_iteration,
        best_loss: outcome.best_loss,
        final_loss,
        started_unix: started,
        finished_unix: report::unix_now(),
    };
    manifest.write(&sibling(&a.out, "manifest.json"))?;
    writeln!(io.stdout, "final loss {final_loss:.6e}").map_err(out_err)?;
    writeln!(
        io.stdout,
        "best loss {:.6e} at iteration {} (kept)",
        outcome.best_loss, outcome.best_iteration
    )
    .map_err(out_err)?;
    Ok(EXIT_OK)
}

fn check_dims(model: &StableDsModel, demos: &[Demonstration], data: &Path) -> Result<()> {
    let d = demos[0].dim();
    if d != model.state_dim() {
        return Err(Error::format(
            data,
            None,
            format!("data has {d}-D states but the model expects {}", model.state_dim()),
        ));
    }
    Ok(())
}

/// Plot bounds covering the model's training box and the given paths.
fn plot_bounds(model: &StableDsModel, paths: &[&[Vec<f64>]]) -> ([f64; 2], [f64; 2]) {
    let n = &model.normalization;
    let mut lo = [n.lower[0], n.lower[1]];
    let mut hi = [n.upper[0], n.upper[1]];
    for p in paths.iter().flat_map(|p| p.iter()) {
        for i in 0..2 {
            lo[i] = lo[i].min(p[i]);
            hi[i] = hi[i].max(p[i]);
        }
    }
    for i in 0..2 {
        let pad = 0.08 * (hi[i] - lo[i]).max(1e-9);
        lo[i] -= pad;
        hi[i] += pad;
    }
    (lo, hi)
}

fn render_svg(model: &StableDsModel, demos: &[Demonstration], rollouts: &[Rollout], title: String) -> Result<String> {
    let mut paths: Vec<&[Vec<f64>]> = demos.iter().map(|d| d.states.as_slice()).collect();
    paths.extend(rollouts.iter().map(|r| r.states.as_slice()));
    let (lower, upper) = plot_bounds(model, &paths);
    let grid = GridSpec {
        lower: lower.to_vec(),
        upper: upper.to_vec(),
        resolution: 24,
    };
    let field = vector_field(model, &grid)?;
    let t = model.target();
    Ok(svg::render(&svg::Scene {
        lower,
        upper,
        field: &field,
        demos: demos.iter().map(|d| d.states.as_slice()).collect(),
        reproductions: rollouts.iter().map(|r| r.states.as_slice()).collect(),
        target: [t[0], t[1]],
        title,
    }))
}

fn cmd_eval(a: &EvalArgs, seed: u64, io: &mut Io<'_>) -> Result<i32> {
    let model = load_model(&a.model)?;
    let demos = a.data.load()?;
    check_dims(&model, &demos, &a.data.data)?;
    let (report, rollouts) = report::evaluate_dataset(&model, &demos, a.integrator.into(), a.audit.map(|n| (n, seed)))?;
    if let Some(out) = &a.out {
        write_atomic(out, report::report_to_json(&report).as_bytes())?;
    }
    if let Some(dir) = &a.svg {
        if model.state_dim() == 2 {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let stem = a.data.data.file_stem().map_or("dataset".into(), |s| s.to_string_lossy().into_owned());
            let doc = render_svg(&model, &demos, &rollouts, stem.clone())?;
            write_atomic(&dir.join(format!("{stem}.svg")), doc.as_bytes())?;
        } else {
            let _ = writeln!(io.stderr, "warning: SVG output needs 2-D states; skipped");
        }
    }
    write!(io.stdout, "{}", report::report_table(&report)).map_err(out_err)?;
    if report.has_stability_violation() {
        let _ = writeln!(io.stderr, "error: stability audit found violations");
        return Ok(EXIT_UNSTABLE);
    }
    Ok(EXIT_OK)
}

fn cmd_rollout(a: &RolloutArgs, io: &mut Io<'_>) -> Result<i32> {
    let model = load_model(&a.model)?;
    let starts: Vec<(Vec<f64>, usize, f64)> = match (&a.data, &a.start) {
        (Some(path), None) => {
            let demos = dataset::load_demonstrations(path, &LoadOptions { dt: a.dt })?;
            check_dims(&model, &demos, path)?;
            demos
                .iter()
                .map(|d| (d.start().to_vec(), a.steps.unwrap_or(d.len() - 1), d.dt))
                .collect()
        }
        (None, Some(x0)) => {
            let (Some(steps), Some(dt)) = (a.steps, a.dt) else {
                return Err(Error::Usage("--start needs --steps and --dt".into()));
            };
            vec![(x0.clone(), steps, dt)]
        }
        _ => return Err(Error::Usage("give either --data or --start".into())),
    };
    let mut out = Vec::new();
    for (i, (x0, steps, dt)) in starts.into_iter().enumerate() {
        let r = rollout_with(&model, &x0, steps, dt, a.integrator.into())?;
        let status = if r.diverged {
            "diverged".to_string()
        } else if r.aborted {
            "aborted on a singular Jacobian".to_string()
        } else {
            match r.steps_to_converge {
                Some(k) => format!("converged after {k} steps"),
                None => "not converged".to_string(),
            }
        };
        let _ = writeln!(io.stderr, "rollout {i}: {} states, {status}", r.states.len());
        if r.states.len() < 2 {
            continue;
        }
        out.push(Demonstration::new(r.states, r.velocities, dt, i)?);
    }
    let csv = dataset::to_csv(&out);
    match &a.out {
        Some(p) => write_atomic(p, csv.as_bytes())?,
        None => io.stdout.write_all(csv.as_bytes()).map_err(out_err)?,
    }
    Ok(EXIT_OK)
}

fn cmd_field(a: &FieldArgs, io: &mut Io<'_>) -> Result<i32> {
    let model = load_model(&a.model)?;
    let demos = match &a.data {
        Some(p) => {
            let d = dataset::load_demonstrations(p, &LoadOptions { dt: a.dt })?;
            check_dims(&model, &d, p)?;
            d
        }
        None => Vec::new(),
    };
    let grid = GridSpec::around(&model, 0.1, a.resolution);
    let samples = vector_field(&model, &grid)?;
    let d = model.state_dim();
    let mut csv = String::new();
    let names: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain((1..=d).map(|i| format!("v{i}"))).collect();
    csv.push_str(&names.join(","));
    csv.push('\n');
    for s in &samples {
        let v = s.velocity.as_ref().map_or(vec![String::new(); d], |v| v.iter().map(f64::to_string).collect());
        let x: Vec<String> = s.x.iter().map(f64::to_string).collect();
        csv.push_str(&x.into_iter().chain(v).collect::<Vec<_>>().join(","));
        csv.push('\n');
    }
    write_atomic(&a.out, csv.as_bytes())?;
    let singular = samples.iter().filter(|s| s.velocity.is_none()).count();
    let _ = writeln!(io.stderr, "{} grid points, {singular} with near-singular Jacobians", samples.len());
    if let Some(path) = &a.svg {
        if d != 2 {
            let _ = writeln!(io.stderr, "warning: SVG output needs 2-D states; skipped");
        } else {
            let rollouts = demos
                .iter()
                .map(|dm| rollout_with(&model, dm.start(), dm.len() - 1, dm.dt, Integrator::Euler))
                .collect::<Result<Vec<_>, _>>()?;
            let title = a.model.file_stem().map_or("field".into(), |s| s.to_string_lossy().into_owned());
            write_atomic(path, render_svg(&model, &demos, &rollouts, title)?.as_bytes())?;
        }
    }
    Ok(EXIT_OK)
}

fn parse_state(line: &str, dim: usize) -> Option<Vec<f64>> {
    let v: Vec<f64> = line
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
        .collect::<Option<_>>()?;
    (v.len() == dim).then_some(v)
}

fn cmd_query(a: &QueryArgs, stdin: &mut dyn BufRead, io: &mut Io<'_>) -> Result<i32> {
    let model = load_model(&a.model)?;
    let mut line = String::new();
    loop {
        line.clear();
        if stdin.read_line(&mut line).map_err(|e| Error::io("<stdin>", e))? == 0 {
            break;
        }
        let answer = parse_state(&line, model.state_dim())
            .and_then(|x| model.velocity(&x).ok())
            .map_or_else(|| "ERR".to_string(), |v| fmt_vec(&v));
        writeln!(io.stdout, "{answer}").map_err(out_err)?;
        io.stdout.flush().map_err(out_err)?;
    }
    Ok(EXIT_OK)
}
