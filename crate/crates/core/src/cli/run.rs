use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use crate::buffer::{ElementKind, Elements, ReduceOp, ReductionBuffer};
use crate::collectives::{Algorithm, CollectiveResult};
use crate::error::{Error, Result};
use crate::inputs::seeded_inputs;
use crate::simnet::{write_trace_csv, MessageRecord};
use crate::topology::ClusterShape;

use super::{AlgChoice, EXIT_FAILURE, EXIT_OK};

#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub algorithm: AlgChoice,
    pub num_nodes: usize,
    pub ppn: usize,
    pub reduction_size: usize,
    pub element_kind: ElementKind,
    pub op: ReduceOp,
    pub seed: u64,
    pub output_path: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn shape(&self) -> Result<ClusterShape> {
        ClusterShape::new(self.num_nodes, self.ppn)
    }

    fn algorithms(&self) -> Vec<Algorithm> {
        match self.algorithm {
            AlgChoice::Tree => vec![Algorithm::Tree],
            AlgChoice::Rd => vec![Algorithm::RecursiveDoubling],
            AlgChoice::Smp => vec![Algorithm::Smp],
            AlgChoice::Nap => vec![Algorithm::Nap],
            AlgChoice::All => Algorithm::ALL.to_vec(),
        }
    }
}

/// Left fold over ranks in ascending order.
pub fn serial_fold(inputs: &[ReductionBuffer], op: ReduceOp) -> Result<ReductionBuffer> {
    let (first, rest) = inputs
        .split_first()
        .ok_or_else(|| Error::Validation("no inputs to fold".into()))?;
    rest.iter()
        .try_fold(first.clone(), |acc, b| op.combine(&acc, b))
}

/// Float sums are accepted within `p * s * 2^-48` of the serial fold,
/// relative to the sum of input magnitudes.
fn first_mismatch(
    result: &CollectiveResult,
    inputs: &[ReductionBuffer],
    op: ReduceOp,
) -> Result<Option<usize>> {
    let expected = serial_fold(inputs, op)?;
    let p = inputs.len();
    let tolerance = p as f64 * expected.len() as f64 * 2f64.powi(-48);
    let magnitude: Vec<f64> = match expected.elements() {
        Elements::F64(v) => (0..v.len())
            .map(|j| inputs.iter().map(|b| b.as_f64().unwrap()[j].abs()).sum())
            .collect(),
        Elements::I64(_) => Vec::new(),
    };
    for (rank, got) in result.buffers.iter().enumerate() {
        let ok = match (got.elements(), expected.elements()) {
            (Elements::I64(a), Elements::I64(b)) => a == b,
            (Elements::F64(a), Elements::F64(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b)
                        .zip(&magnitude)
                        .all(|((x, y), m)| (x - y).abs() <= tolerance * m)
            }
            _ => false,
        };
        if !ok {
            return Ok(Some(rank));
        }
    }
    Ok(None)
}

pub(super) fn cmd_run(spec: &ExperimentSpec, out: &mut dyn Write) -> Result<u8> {
    let shape = spec.shape()?;
    let algorithms = spec.algorithms();
    let supported: Vec<Algorithm> = algorithms
        .iter()
        .copied()
        .filter(|a| a.check_shape(&shape).is_ok())
        .collect();
    if supported.is_empty() {
        // Report the first algorithm's own reason.
        algorithms[0].check_shape(&shape)?;
    }

    let inputs = seeded_inputs(
        shape.total_ranks(),
        spec.reduction_size,
        spec.element_kind,
        spec.seed,
    );
    let mut records: Vec<MessageRecord> = Vec::new();
    let mut status = EXIT_OK;
    for algorithm in algorithms {
        if let Err(e) = algorithm.check_shape(&shape) {
            writeln!(out, "SKIP alg={algorithm} reason=\"{e}\"")?;
            continue;
        }
        let result = algorithm.run(&inputs, spec.op, &shape)?;
        let params = format!(
            "alg={algorithm} nodes={} ppn={} size={} elem={} op={}",
            spec.num_nodes, spec.ppn, spec.reduction_size, spec.element_kind, spec.op
        );
        match first_mismatch(&result, &inputs, spec.op)? {
            None => writeln!(
                out,
                "OK {params} oracle=match internode_steps={} max_internode_msgs_per_rank={} messages={}",
                result.trace.internode_step_count,
                result.trace.max_internode_msgs_per_rank,
                result.trace.total_messages()
            )?,
            Some(rank) => {
                status = EXIT_FAILURE;
                writeln!(out, "FAIL {params} oracle=mismatch first_mismatch_rank={rank}")?;
            }
        }
        records.extend(result.trace.records);
    }

    if let Some(path) = &spec.output_path {
        let file = File::create(path)?;
        write_trace_csv(&records, BufWriter::new(file))?;
    }
    Ok(status)
}
