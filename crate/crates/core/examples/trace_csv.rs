//! Writes the message trace of a small NAP run as CSV to stdout.

use std::io;

use napcoll::collectives::run_nap;
use napcoll::inputs::seeded_inputs;
use napcoll::simnet::write_trace_csv;
use napcoll::{ClusterShape, ElementKind, ReduceOp};

fn main() -> napcoll::Result<()> {
    let shape = ClusterShape::new(4, 2)?;
    let inputs = seeded_inputs(shape.total_ranks(), 1, ElementKind::F64, 0);
    let result = run_nap(&inputs, ReduceOp::Max, &shape)?;
    write_trace_csv(&result.trace.records, io::stdout().lock())?;
    Ok(())
}
