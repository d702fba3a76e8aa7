//! `ulsph` command-line driver.
//!
//! Every `run` flag can also be set through an environment variable with the
//! `ULSPH_` prefix (`--end-time` is `ULSPH_END_TIME`). Precedence is flag,
//! then environment, then the `--config` file, then the scene default.
//!
//! Exit status: 0 on completion, 1 on a usage or configuration error, 2 on a
//! numerical abort.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand};
use ulsph::io::SnapshotFormat;
use ulsph::Method;

use config::{parse_format, parse_method, FileConfig, Overrides, RunConfig, SceneKind};
use run::{Outcome, ResumeOverrides};

#[derive(Debug, Parser)]
#[command(name = "ulsph", version, about = "Updated-Lagrangian SPH solid-dynamics solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a benchmark scene, or resume one from a checkpoint.
    Run(RunArgs),
    /// List the available scenes.
    Scenes,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Scene name (see `ulsph scenes`).
    #[arg(long, env = "ULSPH_SCENE", value_parser = |s: &str| s.parse::<SceneKind>())]
    scene: Option<SceneKind>,
    /// Particles across the scene's reference length.
    #[arg(long, env = "ULSPH_RATIO", conflicts_with = "dp")]
    ratio: Option<usize>,
    /// Particle spacing.
    #[arg(long, env = "ULSPH_DP")]
    dp: Option<f64>,
    /// Shear formulation: og or gnog.
    #[arg(long, env = "ULSPH_METHOD", value_parser = parse_method)]
    method: Option<Method>,
    /// Hourglass penalty coefficient for every material.
    #[arg(long, env = "ULSPH_XI")]
    xi: Option<f64>,
    #[arg(long, env = "ULSPH_END_TIME")]
    end_time: Option<f64>,
    /// Output directory.
    #[arg(long, env = "ULSPH_OUT")]
    out: Option<PathBuf>,
    /// Interval between particle snapshots (default: a tenth of the run).
    #[arg(long, env = "ULSPH_SNAPSHOT_EVERY")]
    snapshot_every: Option<f64>,
    /// Interval between time-series rows (default: the scene's).
    #[arg(long, env = "ULSPH_SAMPLE_EVERY")]
    sample_every: Option<f64>,
    /// Worker threads (default: all cores, or 1 with --deterministic).
    #[arg(long, env = "ULSPH_THREADS")]
    threads: Option<usize>,
    /// Run on a single worker thread unless --threads is given.
    #[arg(long, env = "ULSPH_DETERMINISTIC")]
    deterministic: bool,
    /// Snapshot format: csv or vtk.
    #[arg(long, env = "ULSPH_FORMAT", value_parser = parse_format)]
    format: Option<SnapshotFormat>,
    /// Plate tip velocity as a fraction of the sound speed.
    #[arg(long, env = "ULSPH_VF")]
    vf: Option<f64>,
    /// Ring approach speed as a fraction of the sound speed.
    #[arg(long, env = "ULSPH_V0_FACTOR")]
    v0_factor: Option<f64>,
    /// TOML file with [run], [material] and [body.<name>] sections.
    #[arg(long, env = "ULSPH_CONFIG")]
    config: Option<PathBuf>,
    /// Continue from a checkpoint file.
    #[arg(long, env = "ULSPH_RESUME")]
    resume: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            scene: self.scene,
            ratio: self.ratio,
            dp: self.dp,
            method: self.method,
            xi: self.xi,
            end_time: self.end_time,
            out: self.out.clone(),
            snapshot_every: self.snapshot_every,
            sample_every: self.sample_every,
            threads: self.threads,
            deterministic: self.deterministic,
            format: self.format,
            vf: self.vf,
            v0_factor: self.v0_factor,
        }
    }

    /// Flags that would change the physics of a resumed run.
    fn physics_flags(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut check = |set: bool, name| {
            if set {
                v.push(name);
            }
        };
        check(self.scene.is_some(), "--scene");
        check(self.ratio.is_some(), "--ratio");
        check(self.dp.is_some(), "--dp");
        check(self.method.is_some(), "--method");
        check(self.xi.is_some(), "--xi");
        check(self.sample_every.is_some(), "--sample-every");
        check(self.vf.is_some(), "--vf");
        check(self.v0_factor.is_some(), "--v0-factor");
        check(self.config.is_some(), "--config");
        v
    }
}

fn valid_run_flags() -> String {
    let cmd = Cli::command();
    let run = cmd.find_subcommand("run").expect("run subcommand");
    run.get_arguments().filter_map(|a| a.get_long()).map(|l| format!("--{l}")).collect::<Vec<_>>().join(", ")
}

fn configure_threads(threads: Option<usize>, deterministic: bool) -> anyhow::Result<()> {
    let n = threads.or(deterministic.then_some(1));
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

fn execute(args: RunArgs) -> Result<Outcome, Failure> {
    if let Some(path) = &args.resume {
        let fixed = args.physics_flags();
        if !fixed.is_empty() {
            return Err(Failure::Usage(anyhow::anyhow!(
                "{} cannot be combined with --resume; the checkpoint fixes them",
                fixed.join(", ")
            )));
        }
        configure_threads(args.threads, args.deterministic).map_err(Failure::Runtime)?;
        let o = ResumeOverrides {
            end_time: args.end_time,
            out: args.out.clone(),
            snapshot_every: args.snapshot_every,
            format: args.format,
        };
        return run::resume(path, &o).map_err(Failure::Runtime);
    }
    let file = match &args.config {
        Some(p) => FileConfig::load(p).map_err(Failure::Usage)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(file, args.overrides()).map_err(Failure::Usage)?;
    configure_threads(cfg.threads, cfg.deterministic).map_err(Failure::Runtime)?;
    run::run_config(&cfg).map_err(Failure::Runtime)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let kind = e.kind();
            let _ = e.print();
            return match kind {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand => ExitCode::from(1),
                ErrorKind::UnknownArgument => {
                    eprintln!("valid run flags: {}", valid_run_flags());
                    ExitCode::from(1)
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match cli.command {
        Command::Scenes => {
            for k in SceneKind::ALL {
                println!("{:<18} {}D", k.name(), k.dimension());
            }
            ExitCode::SUCCESS
        }
        Command::Run(args) => match execute(args) {
            Ok(Outcome::Completed { .. }) => ExitCode::SUCCESS,
            Ok(Outcome::Aborted { .. }) => ExitCode::from(2),
            Err(Failure::Usage(e)) => {
                eprintln!("error: {e:#}");
                ExitCode::from(1)
            }
            Err(Failure::Runtime(e)) => {
                log::error!("{e:#}");
                ExitCode::from(1)
            }
        },
    }
}
