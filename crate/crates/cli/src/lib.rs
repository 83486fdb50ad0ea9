//! Command-line front end: load model files, run propagation,
//! verification, composition, the trajectory ansatz, and parameter
//! sweeps; emit tab-separated reports.
//!
//! Output is deterministic for fixed inputs and flags; timing goes to
//! stderr. Exit codes: 0 all checks pass, 1 usage or parse error,
//! 2 numerical failure, 3 constraint violation.

pub mod commands;
pub mod report;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "mlz", version, about = "Multistate Landau-Zener workbench")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Model file to load.
    pub model: String,
    /// Also write the report to this path (same bytes as stdout).
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args)]
pub struct PropagationArgs {
    /// Half-width of the integration window [-tmax, tmax].
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Fixed step for the raw scheme.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration scheme.
    #[arg(long, value_parser = ["adaptive", "raw"], default_value = "adaptive")]
    pub scheme: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse and canonicalize a model file, reporting the permutation and
    /// any structural problems.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Propagate the model and print its scattering and transition
    /// matrices.
    Simulate {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        prop: PropagationArgs,
        /// Integrator tolerance (adaptive scheme).
        #[arg(long)]
        tol: Option<f64>,
        /// Comma-separated window schedule for a convergence study.
        #[arg(long)]
        converge: Option<String>,
    },
    /// Check exact constraints against a propagated scattering matrix.
    /// With no selection flags, every applicable check runs.
    Verify {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        prop: PropagationArgs,
        /// Hierarchy constraints (corner minors).
        #[arg(long)]
        hc: bool,
        /// Band no-go zeros.
        #[arg(long)]
        nogo: bool,
        /// Bilinear band relations.
        #[arg(long)]
        band: bool,
        /// Chain relation between P22 and P12.
        #[arg(long)]
        chain: bool,
        /// Unitarity defect.
        #[arg(long)]
        unitarity: bool,
        /// Tolerance for propagation-backed checks.
        #[arg(long, default_value_t = 5e-3)]
        tol: f64,
    },
    /// Build the M-fermion sector model (emitted as a model file); with
    /// --compare, check it against the exterior power of the propagated
    /// single-particle matrix.
    Fermionize {
        #[command(flatten)]
        common: CommonArgs,
        /// Number of fermions.
        #[arg(long)]
        particles: usize,
        /// Propagate both routes and report the deviation.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        prop: PropagationArgs,
    },
    /// Transition probabilities from the trajectory-sum rules (exact for
    /// Demkov-Osherov and bow-tie classes).
    Semiclassical {
        #[command(flatten)]
        common: CommonArgs,
        /// Also propagate and report the deviation.
        #[arg(long)]
        compare: bool,
        #[command(flatten)]
        prop: PropagationArgs,
    },
    /// Sweep the half-distance of the parallel pair and tabulate the
    /// transition probabilities at each point.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Sweep specification `eps:<from>:<to>:<points>`.
        #[arg(long)]
        param: String,
        /// Add partial-constraint predictions (`con43`) computed from the
        /// measured P12 and P22.
        #[arg(long)]
        predict: Option<String>,
        #[command(flatten)]
        prop: PropagationArgs,
    },
}

/// Result of one command: the report text and the process exit code.
pub struct CmdResult {
    pub output: String,
    pub code: i32,
}

pub fn execute(cli: &Cli) -> CmdResult {
    let outcome = match &cli.command {
        Command::Validate { common } => commands::validate(common),
        Command::Simulate {
            common,
            prop,
            tol,
            converge,
        } => commands::simulate(common, prop, *tol, converge.as_deref()),
        Command::Verify {
            common,
            prop,
            hc,
            nogo,
            band,
            chain,
            unitarity,
            tol,
        } => commands::verify(
            common,
            prop,
            commands::VerifySelection {
                hc: *hc,
                nogo: *nogo,
                band: *band,
                chain: *chain,
                unitarity: *unitarity,
            },
            *tol,
        ),
        Command::Fermionize {
            common,
            particles,
            compare,
            prop,
        } => commands::fermionize(common, *particles, *compare, prop),
        Command::Semiclassical {
            common,
            compare,
            prop,
        } => commands::semiclassical(common, *compare, prop),
        Command::Sweep {
            common,
            param,
            predict,
            prop,
        } => commands::sweep(common, param, predict.as_deref(), prop),
    };
    match outcome {
        Ok((output, code)) => CmdResult { output, code },
        Err(e) => CmdResult {
            output: format!("# error: {e}\n"),
            code: e.code(),
        },
    }
}

/// Executes the command and honors its `--out` flag.
pub fn run(cli: &Cli) -> std::io::Result<CmdResult> {
    let result = execute(cli);
    if let Some(path) = out_path(cli) {
        std::fs::write(path, result.output.as_bytes())?;
    }
    Ok(result)
}

/// Output destination of the command that produced `result`.
pub fn out_path(cli: &Cli) -> Option<&str> {
    let common = match &cli.command {
        Command::Validate { common } => common,
        Command::Simulate { common, .. } => common,
        Command::Verify { common, .. } => common,
        Command::Fermionize { common, .. } => common,
        Command::Semiclassical { common, .. } => common,
        Command::Sweep { common, .. } => common,
    };
    common.out.as_deref()
}
