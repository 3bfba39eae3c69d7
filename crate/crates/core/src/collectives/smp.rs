use crate::buffer::{ReduceOp, ReductionBuffer};
use crate::error::Result;
use crate::topology::ClusterShape;

use super::{Algorithm, CollectiveResult, Run};

/// Reduce to the local-rank-0 master of each node, recursive doubling among
/// masters, then broadcast back inside each node.
pub fn run_smp(
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
) -> Result<CollectiveResult> {
    let mut run = Run::new(Algorithm::Smp, inputs, op, shape)?;
    let ppn = shape.ppn();
    let nodes: Vec<Vec<usize>> = (0..shape.num_nodes())
        .map(|node| (0..ppn).map(|local| shape.rank_at(node, local)).collect())
        .collect();

    run.binomial_reduce("smp/reduce", &nodes)?;
    let mut bit = 1;
    while bit < shape.num_nodes() {
        run.butterfly(format!("smp/masters/{}", bit.trailing_zeros()), |rank| {
            (rank % ppn == 0).then(|| ((rank / ppn) ^ bit) * ppn)
        })?;
        bit *= 2;
    }
    run.binomial_broadcast("smp/bcast", &nodes)?;
    Ok(run.finish())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_ids(p: usize) -> Vec<ReductionBuffer> {
        (0..p as i64)
            .map(|r| ReductionBuffer::from_i64(vec![r]))
            .collect()
    }

    #[test]
    fn masters_carry_internode_traffic() {
        let shape = ClusterShape::new(4, 4).unwrap();
        let result = run_smp(&rank_ids(16), ReduceOp::Sum, &shape).unwrap();
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [120]));
        assert_eq!(
            result
                .trace
                .internode_ranks()
                .into_iter()
                .collect::<Vec<_>>(),
            [0, 4, 8, 12]
        );
        assert_eq!(result.trace.max_internode_msgs_per_rank, 2);
        assert_eq!(
            result
                .trace
                .per_rank_internode_msgs
                .keys()
                .copied()
                .collect::<Vec<_>>(),
            [0, 4, 8, 12]
        );
    }

    #[test]
    fn single_node_has_no_internode_records() {
        let shape = ClusterShape::new(1, 8).unwrap();
        let result = run_smp(&rank_ids(8), ReduceOp::Min, &shape).unwrap();
        assert_eq!(result.trace.total_internode_bytes, 0);
        assert_eq!(result.trace.internode_step_count, 0);
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [0]));
    }
}
