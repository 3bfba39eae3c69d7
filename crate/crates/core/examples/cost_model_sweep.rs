//! Evaluates the three closed-form models across process counts.
//!
//! Takes an optional parameter file; without one the illustrative values are used.

use std::io;

use napcoll::costmodel::{sweep, write_sweep_csv, ModelAlgorithm};
use napcoll::CostParams;

fn main() -> napcoll::Result<()> {
    let params = match std::env::args().nth(1) {
        Some(path) => CostParams::load(path.as_ref())?,
        None => CostParams::ILLUSTRATIVE,
    };
    let p_grid: Vec<usize> = (4..=15).map(|k| 1 << k).collect();
    let rows = sweep(&ModelAlgorithm::ALL, &p_grid, &[16], &[8, 2048], &params)?;
    write_sweep_csv(&rows, io::stdout().lock())?;
    Ok(())
}
