//! Argument parsing and dispatch. Exit codes: 0 success, 1 usage error,
//! 2 bad input or model error, 3 degenerate data.

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use phononwalk::spectral::Window;

use phononwalk_cli::commands;
use phononwalk_cli::error::CliError;
use phononwalk_cli::scenario::Scenario;

#[derive(Parser)]
#[command(name = "phononwalk", version, about = "Local-phonon walk toolkit for linear ion crystals")]
struct Cli {
    /// Scenario file; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,

    /// Output directory, overriding the scenario's output.dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Sampling seed; falls back to the scenario's run.seed, then the
    /// PHONONWALK_SEED environment variable, then 1.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Source ion (1-based), overriding the scenario's run.source.
    #[arg(long, global = true)]
    source: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum WindowArg {
    Rect,
    Hann,
}

impl WindowArg {
    fn to_window(self) -> Window {
        match self {
            WindowArg::Rect => Window::Rectangular,
            WindowArg::Hann => Window::Hann,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve the chain geometry and report positions and gaps
    Positions,
    /// Propagate the walk and synthesize a measured dataset
    Simulate,
    /// Fourier-analyze a trace and match peaks against predicted lines
    Spectrum {
        /// Analyze this trace file instead of an ideal propagation
        #[arg(long, value_name = "PATH")]
        trace: Option<PathBuf>,

        /// DFT window
        #[arg(long, value_enum, default_value = "rect")]
        window: WindowArg,
    },
    /// Recover measurement parameters from a dataset file
    Fit {
        /// Dataset to fit, as written by `simulate`
        #[arg(long, value_name = "PATH")]
        dataset: PathBuf,

        /// Search bound override, repeatable: key=lo:hi with keys
        /// kappa0_khz, t_offset_us, scale, heating
        #[arg(long, value_name = "KEY=LO:HI")]
        bounds: Vec<String>,
    },
    /// Tabulate hopping scale and geometry against one swept parameter
    Sweep {
        /// Which knob to vary
        #[arg(long, value_parser = ["omega_y", "omega_z", "n_ions"])]
        param: String,

        /// Comma-separated parameter values
        #[arg(long)]
        values: Option<String>,

        /// Inclusive linear range lo:hi:count
        #[arg(long)]
        range: Option<String>,
    },
}

/// Highest to lowest: --seed, scenario run.seed, PHONONWALK_SEED, then 1.
fn resolve_seed(flag: Option<u64>, scenario: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag.or(scenario) {
        return Ok(s);
    }
    match std::env::var("PHONONWALK_SEED") {
        Ok(text) => text.trim().parse().map_err(|_| {
            CliError::input(format!("PHONONWALK_SEED is not an unsigned integer: `{text}`"))
        }),
        Err(_) => Ok(1),
    }
}

fn run(cli: Cli) -> Result<String, CliError> {
    let mut scn = match &cli.scenario {
        Some(path) => Scenario::load(path)?,
        None => Scenario::default(),
    };
    if let Some(out) = &cli.out {
        scn.out_dir = out.display().to_string();
    }
    if let Some(source) = cli.source {
        scn.source = source;
    }
    let seed = resolve_seed(cli.seed, scn.seed)?;
    match cli.cmd {
        Cmd::Positions => commands::positions(&scn),
        Cmd::Simulate => commands::simulate(&scn, seed),
        Cmd::Spectrum { trace, window } => {
            commands::spectrum(&scn, window.to_window(), trace.as_deref())
        }
        Cmd::Fit { dataset, bounds } => {
            let out_dir = PathBuf::from(&scn.out_dir);
            commands::fit(&dataset, &out_dir, &bounds)
        }
        Cmd::Sweep { param, values, range } => {
            commands::sweep(&scn, &param, values.as_deref(), range.as_deref())
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version land here too; those exit 0.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match run(cli) {
        Ok(text) => print!("{text}"),
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
