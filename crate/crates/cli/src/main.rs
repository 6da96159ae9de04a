//! `shockform`: run, verify and sweep shock-formation scenarios.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shockform::output::{self, wall_clock};
use shockform::scenario::{ScenarioConfig, STOCK_SCENARIOS};
use shockform::sweep::{self, SweepParameter};
use shockform::verify;
use shockform::Error;

/// Environment variable that overrides the output root.
const OUTPUT_ROOT_ENV: &str = "SHOCKFORM_OUTPUT_ROOT";
const GIT_DESCRIBE: &str = env!("SHOCKFORM_GIT_DESCRIBE");

const EXIT_CERTIFICATE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER: u8 = 3;

#[derive(Debug, Parser)]
#[command(name = "shockform", version, about = "Shock formation in geometric coordinates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct Target {
    /// TOML scenario file, or the name of a stock scenario.
    config: String,
    /// Output directory; overrides the scenario and the output root.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory and summary.
    Run(Target),
    /// Run a scenario with its oracles and check every certificate.
    Verify(Target),
    /// Run a one-parameter sweep and write a sweep CSV.
    Sweep {
        #[command(flatten)]
        target: Target,
        /// One of kappa, eps_ripple, Nu, Ntheta, dt.
        #[arg(short, long)]
        parameter: String,
        /// Comma-separated parameter values.
        #[arg(short, long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Check the structural conditions of the scenario's system.
    Validate {
        /// TOML scenario file, or the name of a stock scenario.
        config: String,
    },
}

/// Failure carrying its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self {
            code: if e.is_config() { EXIT_CONFIG } else { EXIT_SOLVER },
            message: e.to_string(),
        }
    }
}

fn load(config: &str) -> Result<ScenarioConfig, Error> {
    let path = Path::new(config);
    if !path.exists() {
        if let Some(cfg) = ScenarioConfig::stock(config) {
            return Ok(cfg);
        }
        return Err(Error::Config(format!(
            "{config} is neither a file nor a stock scenario ({})",
            STOCK_SCENARIOS.join(", ")
        )));
    }
    ScenarioConfig::load(path)
}

fn output_dir(cfg: &ScenarioConfig, explicit: Option<&Path>) -> PathBuf {
    if let Some(p) = explicit {
        return p.to_path_buf();
    }
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(cfg.output_dir()),
        _ => cfg.output_dir(),
    }
}

fn run(target: &Target) -> Result<u8, Failure> {
    let cfg = load(&target.config)?;
    let dir = output_dir(&cfg, target.output.as_deref());
    let start = wall_clock();
    let sim = cfg.simulate()?;
    output::write_run(&dir, &cfg, &sim.output, Some(GIT_DESCRIBE), start)?;
    output::write_json(&dir.join(output::VALIDATION_FILE), &sim.validation)?;
    let s = &sim.output.summary;
    println!(
        "{}: stop_reason={} t_stop={:.6} steps={} mu_star={:.4} t_pred={:.6} t_extrapolated={}",
        cfg.name,
        s.stop_reason,
        s.t_stop,
        s.steps,
        s.mu_star_final,
        s.t_pred,
        s.lifespan
            .t_extrapolated
            .map_or("none".into(), |t| format!("{t:.6}")),
    );
    println!("wrote {}", dir.display());
    Ok(0)
}

fn verify_cmd(target: &Target) -> Result<u8, Failure> {
    let cfg = load(&target.config)?;
    let dir = output_dir(&cfg, target.output.as_deref());
    let verdict = verify::verify(&cfg)?;
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let path = dir.join("verdict.json");
    output::write_json(&path, &verdict)?;
    for c in &verdict.checks {
        println!(
            "{:<4} {:<28} value={:.4e} threshold={:.4e}",
            if c.pass { "ok" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    let branch = match verdict.branch {
        verify::Branch::Shock => "shock",
        verify::Branch::NoShock => "no-shock",
    };
    if verdict.pass {
        println!("{}: pass ({branch})", cfg.name);
        Ok(0)
    } else {
        println!("{}: fail ({branch}): {}", cfg.name, verdict.failures.join(", "));
        Ok(EXIT_CERTIFICATE)
    }
}

fn sweep_cmd(target: &Target, parameter: &str, values: &[f64]) -> Result<u8, Failure> {
    let cfg = load(&target.config)?;
    let parameter: SweepParameter = parameter.parse()?;
    if values.is_empty() {
        return Err(Error::Config("no sweep values given".into()).into());
    }
    for &v in values {
        parameter.apply(&cfg, v)?.validate()?;
    }
    let dir = output_dir(&cfg, target.output.as_deref());
    let rows = sweep::sweep(&cfg, parameter, values);
    std::fs::create_dir_all(&dir).map_err(Error::from)?;
    let path = dir.join(format!("sweep_{parameter}.csv"));
    sweep::write_sweep(&path, &rows)?;
    let mut failed = 0;
    for r in &rows {
        if r.error.is_empty() {
            println!(
                "{}={}: t_extrapolated={} lifespan_gap={}",
                parameter,
                r.value,
                r.t_extrapolated.map_or("none".into(), |t| format!("{t:.6}")),
                r.lifespan_gap.map_or("none".into(), |g| format!("{g:.3e}")),
            );
        } else {
            failed += 1;
            eprintln!("{}={}: error: {}", parameter, r.value, r.error);
        }
    }
    println!("wrote {}", path.display());
    Ok(if failed > 0 { EXIT_SOLVER } else { 0 })
}

fn validate_cmd(config: &str) -> Result<u8, Failure> {
    let cfg = load(config)?;
    let sys = cfg.build_system()?;
    let report = shockform::system::validate_system(&sys, &cfg.probe_box())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).map_err(Error::from)?
    );
    Ok(if report.pass { 0 } else { EXIT_CONFIG })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run(t) => run(t),
        Command::Verify(t) => verify_cmd(t),
        Command::Sweep {
            target,
            parameter,
            values,
        } => sweep_cmd(target, parameter, values),
        Command::Validate { config } => validate_cmd(config),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
