//! The `infogail` command line: `gen-demos`, `train`, `eval` and `plot`.
//!
//! Settings resolve as flags over config file over defaults. Every failure
//! is reported as one `error: <kind>: <message>` line on stderr with exit
//! status 1.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{load_models, save_models, RunManifest, CHECKPOINT_FORMAT_VERSION, REVISION};
use crate::config::TrainConfig;
use crate::env::{generate_demos, DemoSet};
use crate::error::{Error, Result};
use crate::eval::{evaluate, export_trajectories, read_export, render_svg};
use crate::models::Objective;
use crate::training::{infogail_train, write_metrics, Algo};

/// Environment variable naming the default output root.
pub const OUT_ROOT_ENV: &str = "INFOGAIL_OUT";
const DEFAULT_OUT_ROOT: &str = "runs";

#[derive(Debug, Parser)]
#[command(name = "infogail", version, about = "BC, GAIL and InfoGAIL on a 2D multi-modal imitation task")]
pub struct Cli {
    /// Root for default output paths.
    #[arg(long, env = OUT_ROOT_ENV, default_value = DEFAULT_OUT_ROOT, global = true)]
    pub out_root: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write an expert demonstration set.
    GenDemos {
        #[command(flatten)]
        common: CommonArgs,
        /// Output file [default: <out-root>/demos.json].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a policy and write checkpoints, metrics and a run manifest.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        overrides: TrainOverrides,
        #[arg(long, value_enum, default_value_t = AlgoArg::Infogail)]
        algo: AlgoArg,
        /// Demonstrations [default: <out-root>/demos.json].
        #[arg(long)]
        demos: Option<PathBuf>,
        /// Run directory [default: <out-root>/<algo>-seed<seed>].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a trained run and export evaluation rollouts.
    Eval {
        /// Run directory holding the manifest and checkpoints.
        #[arg(long)]
        run: PathBuf,
        /// Demonstrations with mode labels [default: the run's demos].
        #[arg(long)]
        demos: Option<PathBuf>,
        #[arg(long, default_value_t = 30)]
        n_rollouts: usize,
        /// Evaluation seed [default: the run's seed].
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory [default: the run directory].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a trajectory export as SVG.
    Plot {
        /// Trajectory export (CSV).
        #[arg(long)]
        input: PathBuf,
        /// Output file [default: input with .svg extension].
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// TOML config with [env], [optim] and [training] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainOverrides {
    #[arg(long, value_enum)]
    pub objective: Option<ObjectiveArg>,
    #[arg(long)]
    pub use_replay: bool,
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub iters: Option<usize>,
    /// Parallel rollout workers; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgoArg {
    Bc,
    Gail,
    Infogail,
}

impl From<AlgoArg> for Algo {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::Bc => Algo::Bc,
            AlgoArg::Gail => Algo::Gail,
            AlgoArg::Infogail => Algo::Infogail,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Gan,
    Wgan,
}

impl From<ObjectiveArg> for Objective {
    fn from(o: ObjectiveArg) -> Self {
        match o {
            ObjectiveArg::Gan => Objective::Gan,
            ObjectiveArg::Wgan => Objective::Wgan,
        }
    }
}

/// Config file (or defaults) with the command-line overrides applied, validated.
pub fn resolve_config(common: &CommonArgs, overrides: &TrainOverrides) -> Result<TrainConfig> {
    let mut cfg = match &common.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let t = &mut cfg.training;
    if let Some(o) = overrides.objective {
        t.objective = o.into();
    }
    if overrides.use_replay {
        t.use_replay = true;
    }
    if let Some(v) = overrides.lambda0 {
        t.lambda0 = v;
    }
    if let Some(v) = overrides.lambda1 {
        t.lambda1 = v;
    }
    if let Some(v) = overrides.lambda2 {
        t.lambda2 = v;
    }
    if let Some(v) = overrides.iters {
        t.iters = v;
    }
    if let Some(v) = overrides.workers {
        t.workers = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => create_dir(p),
        _ => Ok(()),
    }
}

fn cmd_gen_demos(root: &Path, common: &CommonArgs, out: Option<PathBuf>) -> Result<()> {
    let cfg = resolve_config(common, &TrainOverrides::default())?;
    println!("seed: {}", cfg.seed);
    let out = out.unwrap_or_else(|| root.join("demos.json"));
    let env = cfg.env.build()?;
    let trajectories = generate_demos(&env, cfg.env.demos_per_mode, cfg.env.steps, cfg.seed)?;
    let set = DemoSet {
        env,
        steps: cfg.env.steps,
        seed: cfg.seed,
        trajectories,
    };
    ensure_parent(&out)?;
    set.save(&out)?;
    println!("wrote {} trajectories to {}", set.trajectories.len(), out.display());
    Ok(())
}

fn write_bc_log(path: &Path, nll: &[f64]) -> Result<()> {
    let mut text = String::from("epoch,nll\n");
    for (i, v) in nll.iter().enumerate() {
        text.push_str(&format!("{i},{}\n", crate::sig17::format(*v)));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn cmd_train(
    root: &Path,
    common: &CommonArgs,
    overrides: &TrainOverrides,
    algo: Algo,
    demos: Option<PathBuf>,
    out: Option<PathBuf>,
) -> Result<()> {
    let cfg = algo.apply(&resolve_config(common, overrides)?);
    println!("seed: {}", cfg.seed);
    let demos_path = demos.unwrap_or_else(|| root.join("demos.json"));
    let demo_set = DemoSet::load(&demos_path)?;
    if demo_set.env != cfg.env.build()? {
        eprintln!("warning: demonstrations were generated with a different [env] than the config");
    }
    let out = out.unwrap_or_else(|| root.join(format!("{algo}-seed{}", cfg.seed)));
    create_dir(&out)?;
    let every = cfg.training.checkpoint_every;
    let total = cfg.training.iters;
    let run = infogail_train(&cfg, &demo_set.trajectories, algo, |m, models| {
        if (m.iter + 1) % 10 == 0 || m.iter + 1 == total {
            eprintln!(
                "iter {:>4}/{total}  critic {:+.4}  L_I {:.4}  kl {:.4}  acc {}",
                m.iter + 1,
                m.critic_obj,
                m.l_i,
                m.mean_kl,
                m.posterior_acc.map_or("-".into(), |a| format!("{a:.3}"))
            );
        }
        if every > 0 && (m.iter + 1) % every == 0 && m.iter + 1 != total {
            save_models(models, &out.join(format!("iter_{:05}", m.iter + 1)))?;
        }
        Ok(())
    })?;
    write_bc_log(&out.join("bc.csv"), &run.bc.epoch_nll)?;
    let files = save_models(&run.models, &out)?;
    let metrics = if algo == Algo::Bc {
        None
    } else {
        write_metrics(&run.metrics, &out.join("metrics.csv"))?;
        Some("metrics.csv".to_string())
    };
    let manifest = RunManifest {
        format_version: CHECKPOINT_FORMAT_VERSION,
        revision: REVISION.to_string(),
        algo,
        seed: cfg.seed,
        config: cfg,
        checkpoints: files,
        metrics,
        demos: Some(demos_path.display().to_string()),
    };
    manifest.save(&out)?;
    println!("wrote run to {}", out.display());
    Ok(())
}

fn cmd_eval(
    run: &Path,
    demos: Option<PathBuf>,
    n_rollouts: usize,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let (manifest, models) = load_models(run)?;
    let seed = seed.unwrap_or(manifest.seed);
    println!("seed: {seed}");
    let demos_path = demos
        .or_else(|| manifest.demos.as_ref().map(PathBuf::from))
        .ok_or_else(|| Error::Missing("demonstration path (pass --demos)".into()))?;
    let demo_set = DemoSet::load(&demos_path)?;
    let env = manifest.config.env.build()?;
    let (report, rollouts) = evaluate(
        &models,
        &env,
        &demo_set.trajectories,
        n_rollouts,
        manifest.config.env.steps,
        seed,
    )?;
    let out = out.unwrap_or_else(|| run.to_path_buf());
    create_dir(&out)?;
    let report_path = out.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::InvalidArgument(format!("cannot serialize report: {e}")))?;
    text.push('\n');
    std::fs::write(&report_path, text).map_err(|e| Error::io(&report_path, e))?;
    export_trajectories(&rollouts, &out.join("trajectories.csv"))?;
    match &report.accuracy {
        Some(a) => println!("accuracy (best permutation): {:.4}", a.accuracy_best_perm),
        None => println!("accuracy: n/a (no posterior)"),
    }
    println!("mean final distance to nearest circle: {:.4}", report.mean_final_distance);
    println!("wrote {} and {}", report_path.display(), out.join("trajectories.csv").display());
    Ok(())
}

fn cmd_plot(input: &Path, out: Option<PathBuf>) -> Result<()> {
    let paths = read_export(input)?;
    let out = out.unwrap_or_else(|| input.with_extension("svg"));
    ensure_parent(&out)?;
    render_svg(&paths, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    let root = cli.out_root;
    match cli.command {
        Command::GenDemos { common, out } => cmd_gen_demos(&root, &common, out),
        Command::Train {
            common,
            overrides,
            algo,
            demos,
            out,
        } => cmd_train(&root, &common, &overrides, algo.into(), demos, out),
        Command::Eval {
            run,
            demos,
            n_rollouts,
            seed,
            out,
        } => cmd_eval(&run, demos, n_rollouts, seed, out),
        Command::Plot { input, out } => cmd_plot(&input, out),
    }
}

/// Parse arguments, run, and map failures to a one-line diagnostic.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            if !e.use_stderr() {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid usage");
            eprintln!("error: usage: {}", first.trim_start_matches("error: "));
            return ExitCode::FAILURE;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {msg}", e.kind());
            ExitCode::FAILURE
        }
    }
}
