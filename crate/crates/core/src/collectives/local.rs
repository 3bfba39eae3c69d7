use crate::buffer::{ReduceOp, ReductionBuffer};
use crate::error::{Error, Result};
use crate::topology::ClusterShape;

use super::{CollectiveResult, Run};

/// Intra-node recursive-doubling allreduce over one node's `ppn` buffers.
pub fn local_allreduce(node_inputs: &[ReductionBuffer], op: ReduceOp) -> Result<CollectiveResult> {
    let ppn = node_inputs.len();
    if !ppn.is_power_of_two() {
        return Err(Error::UnsupportedShape {
            algorithm: "local",
            reason: format!("ppn {ppn} is not a power of two"),
        });
    }
    let shape = ClusterShape::new(1, ppn)?;
    let mut run = Run::unchecked(node_inputs, op, &shape)?;
    run.allreduce_within_nodes("local")?;
    Ok(run.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_ranks_sum() {
        let inputs: Vec<_> = (1..=4)
            .map(|v| ReductionBuffer::from_i64(vec![v]))
            .collect();
        let result = local_allreduce(&inputs, ReduceOp::Sum).unwrap();
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [10]));
    }

    #[test]
    fn single_rank_is_identity() {
        let inputs = vec![ReductionBuffer::from_f64(vec![0.5, 2.0])];
        let result = local_allreduce(&inputs, ReduceOp::Max).unwrap();
        assert_eq!(result.buffers, inputs);
        assert_eq!(result.trace.total_messages(), 0);
    }

    #[test]
    fn sixteen_ones() {
        let inputs = vec![ReductionBuffer::from_i64(vec![1]); 16];
        let result = local_allreduce(&inputs, ReduceOp::Sum).unwrap();
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [16]));
        assert_eq!(result.trace.intranode_step_count, 4);
        assert_eq!(result.trace.internode_step_count, 0);
    }

    #[test]
    fn rejects_non_power_of_two() {
        let inputs = vec![ReductionBuffer::from_i64(vec![1]); 3];
        assert!(local_allreduce(&inputs, ReduceOp::Sum).is_err());
    }
}
