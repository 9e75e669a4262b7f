use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use evostefan::harness::{
    list_presets, preset, rough_data_study, run, sweep, write_rough_csv, write_sweep_csv, ScenarioConfig, SweepAxis,
};
use evostefan::verify::{summary, write_reports_csv};

#[derive(Parser)]
#[command(name = "evostefan", version, about = "Stefan problem on evolving surfaces: runs, sweeps and checks")]
struct Cli {
    /// Worker threads for assembly and linear algebra.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Source {
    /// Scenario file (TOML).
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario name, see `list-presets`.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory; overrides `output.dir` of the scenario.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a scenario, run its checks and write artifacts.
    Run {
        #[command(flatten)]
        source: Source,
        /// Seed of the random dual terminal data.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convergence table along h (icosphere levels), tau (step counts) or eps.
    Sweep {
        #[command(flatten)]
        source: Source,
        #[arg(long, value_parser = ["h", "tau", "eps"])]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        values: Vec<f64>,
    },
    /// Clamp-level study for unbounded data.
    RoughData {
        #[command(flatten)]
        source: Source,
    },
    /// Print the built-in scenarios.
    ListPresets,
}

fn load(source: &Source) -> Result<(ScenarioConfig, PathBuf)> {
    let cfg = match (&source.config, &source.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ScenarioConfig::parse(&text).with_context(|| format!("in {}", path.display()))?
        }
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!("give --config or --preset"),
    };
    let out = source
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().map(|o| o.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out").join(&cfg.name));
    Ok((cfg, out))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<fs::File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(BufWriter::new(fs::File::create(dir.join(name))?))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { source, seed } => {
            let (cfg, dir) = load(&source)?;
            let out = run(&cfg, &dir, seed)?;
            print!("{}", summary(&out.reports));
            println!("artifacts in {}", dir.display());
            Ok(out.success())
        }
        Command::Sweep { source, axis, values } => {
            let (cfg, dir) = load(&source)?;
            let axis: SweepAxis = axis.parse()?;
            let rows = sweep(&cfg, axis, &values)?;
            write_sweep_csv(&rows, create(&dir, "sweep.csv")?)?;
            write_sweep_csv(&rows, std::io::stdout().lock())?;
            Ok(true)
        }
        Command::RoughData { source } => {
            let (cfg, dir) = load(&source)?;
            let report = rough_data_study(&cfg)?;
            write_rough_csv(&report.pairs, create(&dir, "rough.csv")?)?;
            write_reports_csv(&report.reports, create(&dir, "reports.csv")?)?;
            print!("{}", summary(&report.reports));
            Ok(report.success())
        }
        Command::ListPresets => {
            for (name, description) in list_presets() {
                println!("{name:<20} {description}");
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
