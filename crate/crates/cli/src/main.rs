use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dodge_core::checkpoint;
use dodge_core::config::Config;
use dodge_core::env::Plane;
use dodge_core::eval::{self, Controllers};
use dodge_core::rl::{PolicyKind, PolicyParams};
use dodge_core::trainer::{self, Ablation, Ablations, TrainOptions};

#[derive(Parser)]
#[command(name = "dodge", version, about = "Train and evaluate reflexive obstacle evasion for a simulated quadruped")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train an avoidance, recovery or point-mass policy.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PolicyKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Continue from a checkpoint of the same policy.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long = "ablate")]
        ablate: Vec<Ablation>,
        /// Directory receiving checkpoints and the training CSV.
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Override `ppo.max_iterations`.
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Run evaluation episodes and write one CSV row per episode.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        avoidance: PathBuf,
        /// Without it the PD stance handles the recovery stage.
        #[arg(long)]
        recovery: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        /// Reaction-time interval `lo:hi` in seconds.
        #[arg(long = "t-react")]
        t_react: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "ablate")]
        ablate: Vec<Ablation>,
        #[arg(long, default_value = "eval_episodes.csv")]
        out: PathBuf,
    },
    /// Sweep approach angle and reaction time over one plane.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        avoidance: PathBuf,
        #[arg(long)]
        recovery: Option<PathBuf>,
        #[arg(long)]
        plane: Plane,
        #[arg(long)]
        angles: Option<usize>,
        /// Reaction-time grid `lo:hi:steps`.
        #[arg(long = "t-react")]
        t_react: Option<String>,
        #[arg(long = "episodes-per-cell")]
        episodes_per_cell: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long = "ablate")]
        ablate: Vec<Ablation>,
        #[arg(long, default_value = "sweep.csv")]
        out: PathBuf,
    },
    /// Print the configuration, defaults filled in, as TOML.
    PrintConfig {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn parse_floats(text: &str, n: usize, what: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != n {
        bail!("{what} expects {n} colon-separated values, got `{text}`");
    }
    parts.iter().map(|p| p.trim().parse::<f64>().with_context(|| format!("{what}: `{p}` is not a number"))).collect()
}

fn load_policy(path: &Path, kind: PolicyKind) -> Result<PolicyParams> {
    let p = checkpoint::load(path).with_context(|| format!("loading checkpoint {}", path.display()))?;
    if p.kind != kind {
        bail!("{} holds a {} policy, expected {}", path.display(), p.kind.as_str(), kind.as_str());
    }
    Ok(p)
}

fn load_policies(avoidance: &Path, recovery: Option<&Path>, config: &Config) -> Result<(PolicyParams, Option<PolicyParams>)> {
    let avoid = load_policy(avoidance, PolicyKind::Avoidance)?;
    let rec = match recovery {
        Some(p) if config.eval.recovery_policy => Some(load_policy(p, PolicyKind::Recovery)?),
        _ => None,
    };
    Ok((avoid, rec))
}

fn ablations_for(list: &[Ablation], recovery: Option<&Path>) -> Ablations {
    let mut a = Ablations::from_list(list);
    a.no_recovery |= recovery.is_none();
    a
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, policy, seed, resume, ablate, out, iterations, quiet } => {
            let mut cfg = load_config(Some(&config))?;
            if let Some(n) = iterations {
                cfg.ppo.max_iterations = n;
            }
            let opts = TrainOptions { kind: policy, seed, out_dir: out, resume, ablations: Ablations::from_list(&ablate) };
            let total = cfg.ppo.max_iterations;
            let outcome = trainer::train(&cfg, &opts, |r| {
                if !quiet {
                    eprintln!(
                        "iter {:>5}/{total} stage {} return {:>9.3} asr {:.3} kl {:.4} lr {:.2e} var {:.3}",
                        r.iteration, r.curriculum_stage, r.mean_return, r.asr_rolling, r.update.approx_kl, r.update.lr, r.action_variance
                    );
                }
            })?;
            println!("checkpoint {}", outcome.final_checkpoint.display());
            println!("csv {}", outcome.csv.display());
        }
        Command::Eval { config, avoidance, recovery, episodes, t_react, seed, ablate, out } => {
            let ablations = ablations_for(&ablate, recovery.as_deref());
            let cfg = ablations.apply(&load_config(config.as_deref())?);
            let range = match t_react {
                Some(t) => {
                    let v = parse_floats(&t, 2, "--t-react")?;
                    [v[0], v[1]]
                }
                None => cfg.eval.t_react,
            };
            let (avoid, rec) = load_policies(&avoidance, recovery.as_deref(), &cfg)?;
            let controllers = Controllers::new(&avoid, rec.as_ref());
            let eps = eval::evaluate(&controllers, &cfg, range, episodes.unwrap_or(cfg.eval.episodes), seed)?;
            let agg = eval::aggregate(&eps)?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            eval::write_episode_csv(file, &eps, &ablations.label())?;
            println!("episodes {}", agg.episodes);
            println!("asr {:.4}", agg.asr);
            println!("rsr {:.4}", agg.rsr);
            println!("mjp_w {:.3}", agg.mjp);
            println!("amd_m {:.4}", agg.amd);
            println!("gdi {:.5}", agg.gdi);
            println!("failures {}", agg.failures);
            println!("region {}", eval::classify_region(agg.asr, agg.mjp).as_str());
        }
        Command::Sweep { config, avoidance, recovery, plane, angles, t_react, episodes_per_cell, seed, ablate, out } => {
            let ablations = ablations_for(&ablate, recovery.as_deref());
            let cfg = ablations.apply(&load_config(config.as_deref())?);
            let t_grid = match t_react {
                Some(t) => {
                    let v = parse_floats(&t, 3, "--t-react")?;
                    if v[2] < 1.0 || v[2].fract() != 0.0 {
                        bail!("--t-react steps must be a positive integer");
                    }
                    eval::grid([v[0], v[1]], v[2] as usize)
                }
                None => eval::grid(cfg.eval.t_react, cfg.eval.t_react_steps),
            };
            let a_grid = eval::grid([0.0, std::f64::consts::PI], angles.unwrap_or(cfg.eval.angles));
            let (avoid, rec) = load_policies(&avoidance, recovery.as_deref(), &cfg)?;
            let controllers = Controllers::new(&avoid, rec.as_ref());
            let m = episodes_per_cell.unwrap_or(cfg.eval.episodes_per_cell);
            let cells = eval::sweep(&controllers, &cfg, plane, &a_grid, &t_grid, m, seed)?;
            let file = std::fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            eval::write_sweep_csv(file, &cells, &ablations.label())?;
            println!("cells {}", cells.len());
            println!("csv {}", out.display());
        }
        Command::PrintConfig { config } => {
            print!("{}", load_config(config.as_deref())?.to_toml_string()?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("REBOT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: REBOT_THREADS: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
