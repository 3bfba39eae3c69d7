use crate::buffer::{ReduceOp, ReductionBuffer};
use crate::error::Result;
use crate::topology::ClusterShape;

use super::{Algorithm, CollectiveResult, Run};

/// Binomial reduce onto rank 0 followed by a binomial broadcast.
pub fn run_tree(
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
) -> Result<CollectiveResult> {
    let mut run = Run::new(Algorithm::Tree, inputs, op, shape)?;
    let everyone = vec![(0..shape.total_ranks()).collect::<Vec<_>>()];
    run.binomial_reduce("tree/reduce", &everyone)?;
    run.binomial_broadcast("tree/bcast", &everyone)?;
    Ok(run.finish())
}
