use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::costmodel::{sweep, write_sweep_csv, CostParams, ModelAlgorithm};
use crate::error::{Error, Result};

use super::{parse_grid, EXIT_OK};

pub(super) fn cmd_model(
    params: Option<&Path>,
    p_grid: &str,
    ppn_grid: &str,
    s_grid: &str,
    out_path: Option<&Path>,
    out: &mut dyn Write,
) -> Result<u8> {
    let path = params.ok_or_else(|| {
        Error::Params("no parameter file: pass --params or set NAPCOLL_PARAMS".into())
    })?;
    let params = CostParams::load(path)?;
    let rows = sweep(
        &ModelAlgorithm::ALL,
        &parse_grid(p_grid)?,
        &parse_grid(ppn_grid)?,
        &parse_grid(s_grid)?,
        &params,
    )?;
    match out_path {
        Some(path) => write_sweep_csv(&rows, BufWriter::new(File::create(path)?))?,
        None => write_sweep_csv(&rows, out)?,
    }
    Ok(EXIT_OK)
}
