use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use soliton_lab::runner::config::{ConfigError, RawConfig};
use soliton_lab::runner::{run_and_write, Scenario, ScenarioConfig, EXIT_CONFIG};

#[derive(Parser)]
#[command(name = "soliton-lab", version, about = "Run a soliton laboratory scenario and write its report")]
struct Cli {
    /// One of: verify-residuals, soliton-propagation, free-spreading,
    /// choquard-stationary, yukawa-oracle, perturbation-stability, param-sweep
    scenario: String,
    /// Config file; keys absent from it take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`)
    #[arg(long)]
    out: Option<PathBuf>,
    /// `section.key=value`, applied after the config file
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn load(cli: &Cli) -> Result<ScenarioConfig, ConfigError> {
    let scenario = Scenario::parse(&cli.scenario)?;
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?,
        None => String::new(),
    };
    let mut raw = RawConfig::parse(&text)?;
    raw.set("scenario", scenario.name());
    for o in &cli.overrides {
        raw.apply_override(o)?;
    }
    ScenarioConfig::from_raw(raw)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match load(&cli) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    let (code, result) = run_and_write(&cfg, &out);
    match result {
        Ok(report) => {
            for c in report.criteria.iter().chain(report.children.iter().flat_map(|c| &c.criteria)) {
                println!("{}", c.line());
            }
            for f in &report.findings {
                println!("finding: {f}");
            }
            println!("report: {}", out.join("report.json").display());
        }
        Err(e) => eprintln!("error: {e}\nreport: {}", out.join("report.json").display()),
    }
    ExitCode::from(code as u8)
}
