use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use buckrl::harness::config::Config;
use buckrl::harness::metrics::{compute_metrics, DEFAULT_SETTLING_BAND};
use buckrl::harness::plot::render_svg;
use buckrl::harness::run;
use buckrl::harness::scenario::Scenario;
use buckrl::harness::trace::load_trace;

#[derive(Parser)]
#[command(name = "buckrl", version, about = "Buck converter DQN control workbench")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a controller and write checkpoint, curve, and manifest.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a scenario with the greedy policy.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// "A", "B", or a scenario file path.
        #[arg(long, default_value = "A")]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the double-loop PI baseline on a scenario.
    Baseline {
        #[arg(long, default_value = "B")]
        scenario: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate every sweep cell; write summary.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute disturbance metrics for an existing trace CSV.
    Metrics {
        trace: PathBuf,
        /// Scenario providing v_ref and the disturbance edges.
        #[arg(long, default_value = "A")]
        scenario: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render a trace CSV as an SVG line plot.
    Plot {
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also draw the inductor current.
        #[arg(long, default_value_t = true)]
        current: bool,
    },
}

fn load_config(path: &Option<PathBuf>) -> buckrl::Result<Config> {
    match path {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn run_cli() -> buckrl::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Train { config, seed, out } => {
            let cfg = load_config(&config)?;
            let artifacts = run::run_train_with_progress(&cfg, seed, &out, |s| {
                if s.episode % 10 == 0 || s.aborted {
                    eprintln!(
                        "episode {:4} steps {:5} mean_r {:+.4} |e|tail {:8.3} eps {:.2} loss {:.5}{}",
                        s.episode, s.steps, s.mean_reward, s.mean_abs_error, s.epsilon,
                        s.loss_mean, if s.aborted { " ABORT" } else { "" }
                    );
                }
            })?;
            let last = artifacts.result.curve.last();
            println!("trained {} episodes, checkpoint {}", artifacts.result.curve.len(),
                artifacts.checkpoint_path.display());
            if let Some(s) = last {
                println!(
                    "final episode: steps {} mean_reward {:.4} mean_abs_error {:.4}",
                    s.steps, s.mean_reward, s.mean_abs_error
                );
            }
        }
        Command::Eval { checkpoint, scenario, config, out } => {
            let cfg = load_config(&config)?;
            let scenario = Scenario::resolve(&scenario)?;
            let (_, metrics) = run::run_eval(&checkpoint, &scenario, &cfg, &out)?;
            print!("{metrics}");
        }
        Command::Baseline { scenario, config, out } => {
            let cfg = load_config(&config)?;
            let scenario = Scenario::resolve(&scenario)?;
            let (_, metrics) = run::run_baseline(&scenario, &cfg.pi_gains(), &cfg, Some(&out))?;
            print!("{metrics}");
        }
        Command::Sweep { config, seed, out } => {
            let cfg = Config::load(&config)?;
            let rows = run::run_sweep(&cfg, seed, &out)?;
            println!("sweep complete: {} rows in {}", rows.len(), out.join("summary.csv").display());
        }
        Command::Metrics { trace, scenario, out } => {
            let rows = load_trace(&trace)?;
            let scenario = Scenario::resolve(&scenario)?;
            let metrics = compute_metrics(
                &rows,
                scenario.circuit.v_ref,
                &scenario.disturbance_edges(),
                DEFAULT_SETTLING_BAND,
            )?;
            if let Some(out) = out {
                if let Some(parent) = out.parent() {
                    if !parent.as_os_str().is_empty() {
                        std::fs::create_dir_all(parent)?;
                    }
                }
                let file = std::fs::File::create(&out)?;
                metrics.write_csv(std::io::BufWriter::new(file))?;
            }
            print!("{metrics}");
        }
        Command::Plot { trace, out, current } => {
            let rows = load_trace(&trace)?;
            let svg = render_svg(&rows, current)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&out, svg)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run_cli() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
