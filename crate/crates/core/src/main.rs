use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use smfsync::scenario::{self, MetricsReport, ScenarioConfig, ScenarioError};
use smfsync::sdp::TolProfile;

#[derive(Parser)]
#[command(name = "smfsync", version, about = "Set-membership filtering and leader-follower synchronization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run a built-in scenario.
    Preset {
        #[arg(value_parser = clap::builder::PossibleValuesParser::new(scenario::PRESETS))]
        name: String,
        /// Disturbance setting of the multi-agent preset (1, 2 or 3).
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=3))]
        setting: u8,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Tabulate the metrics of several output directories.
    Compare {
        #[arg(required = true, num_args = 1..)]
        dirs: Vec<PathBuf>,
        /// Also write comparison.csv here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file without running it.
    Validate { config: PathBuf },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    tol_profile: Option<Tol>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Tol {
    Strict,
    Default,
    Loose,
}

impl From<Tol> for TolProfile {
    fn from(t: Tol) -> Self {
        match t {
            Tol::Strict => TolProfile::Strict,
            Tol::Default => TolProfile::Default,
            Tol::Loose => TolProfile::Loose,
        }
    }
}

impl Overrides {
    fn apply(&self, cfg: &mut ScenarioConfig) {
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(o) = &self.out {
            cfg.output = Some(o.clone());
        }
        if let Some(t) = self.tol_profile {
            cfg.tol_profile = t.into();
        }
    }
}

fn execute(mut cfg: ScenarioConfig, overrides: &Overrides) -> Result<ExitCode, ScenarioError> {
    overrides.apply(&mut cfg);
    let run = scenario::run_scenario(&cfg)?;
    let dir = cfg.output_dir();
    run.write(&dir)?;
    for (k, v) in run.report.to_rows() {
        println!("{k:<24} {v}");
    }
    println!("wrote {}", dir.display());
    if run.report.containment_violations == 0 {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("{} containment violations", run.report.containment_violations);
        Ok(ExitCode::from(1))
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, ScenarioError> {
    match cli.command {
        Command::Run { config, overrides } => execute(scenario::load_config(&config)?, &overrides),
        Command::Preset { name, setting, overrides } => {
            let cfg = scenario::preset(&name, setting).expect("clap restricts preset names and settings");
            execute(cfg, &overrides)
        }
        Command::Compare { dirs, out } => {
            let reports =
                dirs.iter().map(|d| MetricsReport::from_csv(&d.join("metrics.csv"))).collect::<Result<Vec<_>, _>>()?;
            let cmp = scenario::compare_runs(&reports)?;
            print!("{}", cmp.text);
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| ScenarioError::Io { path: dir.clone(), message: e.to_string() })?;
                let path = dir.join(&cmp.table.file);
                std::fs::write(&path, cmp.table.to_bytes()?)
                    .map_err(|e| ScenarioError::Io { path: path.clone(), message: e.to_string() })?;
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Validate { config } => {
            let cfg = scenario::load_config(&config)?;
            println!("{}: valid {} scenario `{}`", config.display(), cfg.mode, cfg.name);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
