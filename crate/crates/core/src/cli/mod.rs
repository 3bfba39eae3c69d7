//! Command-line driver: `run`, `model` and `verify`.
//!
//! Exit codes: 0 success, 1 property or oracle failure, 2 usage or shape
//! error, 3 I/O error.

mod grid;
mod model;
mod run;
mod verify;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::buffer::{ElementKind, ReduceOp};
use crate::error::Error;

pub use grid::parse_grid;
pub use run::{serial_fold, ExperimentSpec};
pub use verify::{run_suite, PropertyOutcome, VerifyConfig};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "napcoll",
    version,
    about = "Simulate and model allreduce algorithms"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a collective on seeded inputs and check it against a serial reduction.
    Run(RunArgs),
    /// Evaluate the RD, SMP and NAP cost models over a grid.
    Model(ModelArgs),
    /// Run the property suite.
    Verify(VerifyArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlgChoice {
    Tree,
    Rd,
    Smp,
    Nap,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ElemArg {
    I64,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OpArg {
    Sum,
    Max,
    Min,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    alg: AlgChoice,
    #[arg(long)]
    nodes: usize,
    #[arg(long)]
    ppn: usize,
    /// Elements per rank.
    #[arg(long, default_value_t = 1)]
    size: usize,
    #[arg(long, value_enum, default_value = "i64")]
    elem: ElemArg,
    #[arg(long, value_enum, default_value = "sum")]
    op: OpArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trace CSV destination; omitted means no trace file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, env = "NAPCOLL_PARAMS")]
    params: Option<PathBuf>,
    /// Process counts: comma list, `a..b` doubles from a up to b.
    #[arg(long = "p-grid")]
    p_grid: String,
    #[arg(long, default_value = "16")]
    ppn: String,
    /// Reduction sizes in bytes, same syntax as --p-grid.
    #[arg(long = "s-grid", default_value = "8")]
    s_grid: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Largest rank count simulated with payloads.
    #[arg(long = "max-ranks", default_value_t = 4096)]
    max_ranks: usize,
    /// Swap in a deliberately broken pairing rule (mutation fixture).
    #[arg(long, hide = true)]
    mutate: Option<String>,
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(args) => run_command(args, out),
        Command::Model(args) => model::cmd_model(
            args.params.as_deref(),
            &args.p_grid,
            &args.ppn,
            &args.s_grid,
            args.out.as_deref(),
            out,
        ),
        Command::Verify(args) => verify::cmd_verify(args.max_ranks, args.mutate.as_deref(), out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn run_command(args: RunArgs, out: &mut dyn Write) -> Result<u8, Error> {
    let spec = ExperimentSpec {
        algorithm: args.alg,
        num_nodes: args.nodes,
        ppn: args.ppn,
        reduction_size: args.size,
        element_kind: match args.elem {
            ElemArg::I64 => ElementKind::I64,
            ElemArg::F64 => ElementKind::F64,
        },
        op: match args.op {
            OpArg::Sum => ReduceOp::Sum,
            OpArg::Max => ReduceOp::Max,
            OpArg::Min => ReduceOp::Min,
        },
        seed: args.seed,
        output_path: args.out,
    };
    run::cmd_run(&spec, out)
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_USAGE,
    }
}
