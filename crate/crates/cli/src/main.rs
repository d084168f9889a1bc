//! `dsfttd`: runs the simulator's parameter sweeps and writes CSV results.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dsfttd::experiment::{run_experiment, ExperimentConfig, ExperimentKind, Profile};
use dsfttd::Error;

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "dsfttd", version, about = "Wideband DS-FTTD hybrid beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Beam-squint array gain across the band (closed form).
    GainVsFrequency(RunArgs),
    /// Single-chain DS-FTTD array gain versus delays per chain.
    GainVsQ(RunArgs),
    /// Spectral efficiency versus delays per chain.
    SeVsQ(RunArgs),
    /// Energy efficiency versus delays per chain.
    EeVsQ(RunArgs),
    /// Spectral efficiency versus transmit power.
    SeVsPower(RunArgs),
    /// Energy efficiency versus transmit power.
    EeVsPower(RunArgs),
    /// Spectral efficiency versus antenna count.
    SeVsAntennas(RunArgs),
    /// Energy efficiency versus antenna count.
    EeVsAntennas(RunArgs),
    /// Spectral efficiency versus bandwidth.
    SeVsBandwidth(RunArgs),
    /// Spectral efficiency versus CSI accuracy.
    SeVsCsi(RunArgs),
    /// Objective value per RD iteration.
    ConvergenceTrace(RunArgs),
    /// Print the effective configuration as TOML.
    Config(ConfigArgs),
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum ProfileArg {
    Paper,
    Desk,
}

impl From<ProfileArg> for Profile {
    fn from(p: ProfileArg) -> Self {
        match p {
            ProfileArg::Paper => Profile::Paper,
            ProfileArg::Desk => Profile::Desk,
        }
    }
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// Bundled defaults the config file is layered on.
    #[arg(long, value_enum, default_value = "paper")]
    profile: ProfileArg,
    /// TOML file overriding profile values.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    base: ConfigArgs,
    /// Seeds, e.g. `1,2,3` or `1-10`; replaces the configured list.
    #[arg(long, value_name = "LIST", value_parser = parse_seeds)]
    seed: Option<SeedList>,
    /// CSV destination; the manifest goes next to it with a .json extension.
    /// Without it the CSV is printed to stdout.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Exit with status 3 when a solver run hit a rank-deficient update.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Debug)]
struct SeedList(Vec<u64>);

fn parse_seeds(text: &str) -> Result<SeedList, String> {
    let mut seeds = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let parse = |s: &str| s.trim().parse::<u64>().map_err(|e| format!("bad seed `{s}`: {e}"));
        match part.split_once('-') {
            Some((lo, hi)) => {
                let (lo, hi) = (parse(lo)?, parse(hi)?);
                if lo > hi {
                    return Err(format!("empty seed range `{part}`"));
                }
                seeds.extend(lo..=hi);
            }
            None => seeds.push(parse(part)?),
        }
    }
    if seeds.is_empty() {
        return Err("no seeds given".into());
    }
    Ok(SeedList(seeds))
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Error> {
    let overlay = match &args.config {
        Some(path) => Some(std::fs::read_to_string(path).map_err(|e| Error::Config {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?),
        None => None,
    };
    ExperimentConfig::load(args.profile.into(), overlay.as_deref())
}

fn run(kind: ExperimentKind, args: RunArgs) -> Result<ExitCode, Error> {
    let mut cfg = load(&args.base)?;
    cfg.kind = Some(kind);
    if let Some(SeedList(seeds)) = args.seed {
        cfg.seeds = seeds;
    }
    if let Some(out) = args.out {
        cfg.output = Some(out);
    }
    if let Some(n) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n as usize)
            .build_global()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
    }
    let output = run_experiment(&cfg)?;
    match &cfg.output {
        Some(path) => {
            let manifest = output.write(path)?;
            eprintln!(
                "wrote {} rows to {} (manifest {})",
                output.table.rows.len(),
                path.display(),
                manifest.display()
            );
        }
        None => output.table.write_csv(std::io::stdout().lock())?,
    }
    if output.has_degeneracy() {
        eprintln!(
            "warning: rank-deficient digital update on {} of {} rows (see the notes column)",
            output.manifest.degenerate_rows,
            output.table.rows.len()
        );
        if args.strict {
            return Ok(ExitCode::from(EXIT_DEGENERATE));
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn kind_of(command: &Command) -> Option<ExperimentKind> {
    Some(match command {
        Command::GainVsFrequency(_) => ExperimentKind::GainVsFrequency,
        Command::GainVsQ(_) => ExperimentKind::GainVsQ,
        Command::SeVsQ(_) => ExperimentKind::SeVsQ,
        Command::EeVsQ(_) => ExperimentKind::EeVsQ,
        Command::SeVsPower(_) => ExperimentKind::SeVsPower,
        Command::EeVsPower(_) => ExperimentKind::EeVsPower,
        Command::SeVsAntennas(_) => ExperimentKind::SeVsAntennas,
        Command::EeVsAntennas(_) => ExperimentKind::EeVsAntennas,
        Command::SeVsBandwidth(_) => ExperimentKind::SeVsBandwidth,
        Command::SeVsCsi(_) => ExperimentKind::SeVsCsi,
        Command::ConvergenceTrace(_) => ExperimentKind::ConvergenceTrace,
        Command::Config(_) => return None,
    })
}

fn dispatch(command: Command) -> Result<ExitCode, Error> {
    let kind = kind_of(&command);
    match command {
        Command::Config(args) => {
            print!("{}", load(&args)?.to_toml()?);
            Ok(ExitCode::SUCCESS)
        }
        Command::GainVsFrequency(a)
        | Command::GainVsQ(a)
        | Command::SeVsQ(a)
        | Command::EeVsQ(a)
        | Command::SeVsPower(a)
        | Command::EeVsPower(a)
        | Command::SeVsAntennas(a)
        | Command::EeVsAntennas(a)
        | Command::SeVsBandwidth(a)
        | Command::SeVsCsi(a)
        | Command::ConvergenceTrace(a) => run(kind.expect("experiment subcommand"), a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(match err {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}
