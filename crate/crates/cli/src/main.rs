use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use loco_core::scenario::commands::{self, CheckMode, CheckOptions, RunOutput};
use loco_core::scenario::{builtin, exit_code, io, Scenario, ScenarioConfig};
use loco_core::Error;

#[derive(Parser)]
#[command(name = "loco", version, about = "Muscle-driven soft-body simulation and per-frame control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SceneArgs {
    /// Scene config (JSON), or `builtin:<name>`.
    #[arg(long)]
    config: String,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the optimizer's worker count.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Forward rollout with given (or zero) activations.
    Simulate {
        #[command(flatten)]
        scene: SceneArgs,
        /// CSV of per-frame activations, as written by `solve`.
        #[arg(long)]
        activations: Option<PathBuf>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Frame-by-frame inverse solve.
    Solve {
        #[command(flatten)]
        scene: SceneArgs,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare tape gradients and CSFD-AD Hessians with reference derivatives.
    CheckDerivatives {
        #[command(flatten)]
        scene: SceneArgs,
        /// Frame whose state is checked, reached with zero activations.
        #[arg(long, default_value_t = 0)]
        at: usize,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
        /// Complex-step size.
        #[arg(long, default_value_t = 1e-20)]
        h: f64,
    },
    /// Write a trajectory as a sequence of surface meshes.
    Export {
        #[command(flatten)]
        scene: SceneArgs,
        /// Folder containing `positions.csv`.
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::ObjSequence)]
        format: Format,
        #[arg(long, default_value = "obj")]
        out: PathBuf,
    },
    /// Built-in scenes.
    Scene {
        #[command(subcommand)]
        action: SceneAction,
    },
}

#[derive(Subcommand)]
enum SceneAction {
    List,
    /// Print (or write with --out) the config of a built-in scene.
    Dump {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Fd,
    Bicomplex,
    Both,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    ObjSequence,
}

fn load(args: &SceneArgs) -> Result<Scenario, Error> {
    let (mut cfg, base) = match args.config.strip_prefix("builtin:") {
        Some(name) => (builtin::builtin(name)?, PathBuf::from(".")),
        None => ScenarioConfig::load(Path::new(&args.config))?,
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(w) = args.workers {
        cfg.optimizer.workers = w;
    }
    cfg.build(&base)
}

fn finish_run(run: RunOutput, sc: &Scenario, out: &Path) -> Result<(), Error> {
    run.trajectory.write(out)?;
    std::fs::write(out.join("scenario.json"), sc.config.to_json())?;
    println!("wrote {} frames to {}", run.trajectory.activations.len(), out.display());
    match run.failure {
        Some((t, e)) => Err(Error::NoConvergence(format!("frame {t} failed: {e}"))),
        None => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate { scene, activations, frames, out } => {
            let sc = load(&scene)?;
            let acts = activations.as_deref().map(io::read_frames).transpose()?;
            let frames = frames.or(acts.as_ref().map(Vec::len)).unwrap_or(sc.config.frames);
            let run = commands::simulate(&sc, acts.as_deref(), frames)?;
            finish_run(run, &sc, &out)
        }
        Command::Solve { scene, frames, out } => {
            let sc = load(&scene)?;
            let run = commands::solve(&sc, frames.unwrap_or(sc.config.frames));
            finish_run(run, &sc, &out)
        }
        Command::CheckDerivatives { scene, at, mode, h } => {
            let sc = load(&scene)?;
            let mode = match mode {
                Mode::Fd => CheckMode::Fd,
                Mode::Bicomplex => CheckMode::Bicomplex,
                Mode::Both => CheckMode::Both,
            };
            let report = commands::check_derivatives(&sc, &CheckOptions { frame: at, mode, h, ..Default::default() })?;
            print!("{}", report.render());
            if report.passed() {
                Ok(())
            } else {
                let bad: Vec<String> = report
                    .comparisons
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| format!("{} at entry {:?}", c.name, c.worst))
                    .collect();
                Err(Error::NoConvergence(format!("derivative check failed: {}", bad.join("; "))))
            }
        }
        Command::Export { scene, trajectory, format: Format::ObjSequence, out } => {
            let sc = load(&scene)?;
            let n = commands::export(&sc, &trajectory, &out)?;
            println!("wrote {n} OBJ files to {}", out.display());
            Ok(())
        }
        Command::Scene { action: SceneAction::List } => {
            for name in builtin::NAMES {
                println!("{name}");
            }
            Ok(())
        }
        Command::Scene { action: SceneAction::Dump { name, out } } => {
            let json = builtin::builtin(&name)?.to_json();
            match out {
                Some(p) => std::fs::write(p, json + "\n")?,
                None => println!("{json}"),
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
