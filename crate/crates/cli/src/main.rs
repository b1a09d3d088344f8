use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ovg_core::commands;
use ovg_core::config::{RunConfig, OUTPUT_DIR_ENV};

/// Open-vocabulary grounding and grasping experiments on a synthetic tabletop.
#[derive(Parser)]
#[command(name = "ovg", version)]
struct Cli {
    /// Run configuration; built-in defaults when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Configuration file helpers.
    Config {
        #[command(subcommand)]
        action: ConfigAction,
    },
    /// Build the scene suites, depth maps and point clouds.
    Generate,
    /// Ground every test and grasp scene; report precision@0.5.
    Ground,
    /// Run the attempt protocol on the grasp scenes.
    Grasp,
    /// Ground the test suites under all four module combinations.
    Ablate,
    /// Write report.md and the output manifest.
    Report,
}

#[derive(Subcommand)]
enum ConfigAction {
    /// Write the default configuration with comments.
    Init {
        #[arg(default_value = "ovg.toml")]
        path: PathBuf,
        #[arg(long)]
        force: bool,
    },
}

fn load(path: Option<&PathBuf>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    let env = std::env::var(OUTPUT_DIR_ENV).ok();
    Ok(cfg.with_output_override(env.as_deref()))
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{:.1}%", 100.0 * v))
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Config {
            action: ConfigAction::Init { path, force },
        } => {
            commands::cmd_config_init(&path, force)?;
            println!("wrote {}", path.display());
        }
        Command::Generate => {
            let cfg = load(cli.config.as_ref())?;
            let summary = commands::cmd_generate(&cfg)?;
            for (suite, n) in &summary.manifest.scene_counts {
                println!("{suite}: {n} scenes");
            }
            println!("manifest: {}", summary.manifest_path.display());
        }
        Command::Ground => {
            let cfg = load(cli.config.as_ref())?;
            let report = commands::cmd_ground(&cfg)?;
            println!(
                "precision@0.5  base {}  novel {}",
                pct(report.base.map(|s| s.precision())),
                pct(report.novel.map(|s| s.precision()))
            );
        }
        Command::Grasp => {
            let cfg = load(cli.config.as_ref())?;
            let report = commands::cmd_grasp(&cfg)?;
            for (name, table) in [("base", &report.base), ("novel", &report.novel)] {
                let last = table.rows.last().and_then(|r| r[2]);
                println!("{name}: success within {} attempts {}", table.rows.len(), pct(last));
            }
        }
        Command::Ablate => {
            let cfg = load(cli.config.as_ref())?;
            for row in commands::cmd_ablate(&cfg)? {
                println!(
                    "igla={:<5} lgia={:<5} base {} novel {}",
                    row.igla,
                    row.lgia,
                    pct(row.base),
                    pct(row.novel)
                );
            }
        }
        Command::Report => {
            let cfg = load(cli.config.as_ref())?;
            print!("{}", commands::cmd_report(&cfg)?);
        }
    }
    Ok(())
}
