use anyhow::Context;
use clap::{Parser, Subcommand};
use gne_cli::config::{parse_stepsizes_flag, ExperimentConfig};
use gne_cli::{certify, compare_forms, fit_rates_from_csv, run_experiment};
use gne_core::io::{save_game, save_topology};
use std::path::PathBuf;

#[derive(Parser)]
#[command(
    name = "gne",
    about = "Decentralized seeking of variational generalized Nash equilibria \
             for games with coupled affine inequality constraints",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded market instance and write game + topology JSON.
    Generate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Full-scale instance (50 firms, 5 markets).
        #[arg(long)]
        full: bool,
    },
    /// Print the stepsize certification report as JSON.
    Certify {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// `certified` or explicit `alpha,beta,gamma`.
        #[arg(long)]
        stepsizes: Option<String>,
        #[arg(long)]
        full: bool,
    },
    /// Run the end-to-end experiment: oracle, solver, CSV and JSON report.
    Solve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Full-scale reproduction (50 firms, 5 markets, 5000 iterations).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        stepsizes: Option<String>,
    },
    /// Fit a geometric convergence rate to a trajectory CSV column.
    Rates {
        csv: PathBuf,
        #[arg(long, default_value = "dist_to_star")]
        column: String,
        #[arg(long, default_value_t = 0.5)]
        tail_fraction: f64,
    },
    /// Render trajectory CSV columns as a static SVG with a log y axis.
    Plot {
        csvs: Vec<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "dist_to_star")]
        columns: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run both iteration forms and report the worst trajectory deviation.
    CompareForms {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 200)]
        iters: usize,
    },
}

fn load_config(
    path: &Option<PathBuf>,
    seed: Option<u64>,
    stepsizes: Option<&String>,
    full: bool,
) -> anyhow::Result<ExperimentConfig> {
    let mut config = match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if full {
        config = config.full_scale();
    }
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(flag) = stepsizes {
        config.stepsizes = parse_stepsizes_flag(flag)?;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            seed,
            out,
            full,
        } => {
            let config = load_config(&config, seed, None, full)?;
            let instance = gne_cli::generate_cournot(&config)?;
            std::fs::create_dir_all(&out)?;
            let game_path = out.join("game.json");
            let topo_path = out.join("topology.json");
            save_game(&instance.game, &game_path)?;
            save_topology(&instance.topology, &topo_path)?;
            println!(
                "{}",
                serde_json::json!({
                    "config_hash": config.config_hash(),
                    "game": game_path,
                    "topology": topo_path,
                    "mu": instance.constants.mu,
                    "l": instance.constants.l,
                    "sigma": instance.constants.sigma,
                })
            );
        }
        Command::Certify {
            config,
            seed,
            stepsizes,
            full,
        } => {
            let config = load_config(&config, seed, stepsizes.as_ref(), full)?;
            let report = certify(&config)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Solve {
            config,
            seed,
            out,
            full,
            stepsizes,
        } => {
            let config = load_config(&config, seed, stepsizes.as_ref(), full)?;
            let output = run_experiment(&config, &out)?;
            println!("{}", serde_json::to_string_pretty(&output.report)?);
        }
        Command::Rates {
            csv,
            column,
            tail_fraction,
        } => {
            let report = fit_rates_from_csv(&csv, &column, tail_fraction)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Plot { csvs, columns, out } => {
            anyhow::ensure!(!csvs.is_empty(), "need at least one CSV path");
            gne_cli::emit_svg_plot(&csvs, &columns, &out)?;
            println!("wrote {}", out.display());
        }
        Command::CompareForms {
            config,
            seed,
            iters,
        } => {
            let config = load_config(&config, seed, None, false)?;
            let report = compare_forms(&config, iters)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
    }
    Ok(())
}
