use crate::buffer::{ReduceOp, ReductionBuffer};
use crate::error::Result;
use crate::topology::ClusterShape;

use super::{Algorithm, CollectiveResult, Run};

/// Butterfly allreduce: at level `i` rank `r` swaps with `r ^ 2^i`.
pub fn run_recursive_doubling(
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
) -> Result<CollectiveResult> {
    let mut run = Run::new(Algorithm::RecursiveDoubling, inputs, op, shape)?;
    let mut bit = 1;
    while bit < shape.total_ranks() {
        run.butterfly(format!("rd/{}", bit.trailing_zeros()), |rank| {
            Some(rank ^ bit)
        })?;
        bit *= 2;
    }
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
    fn sixteen_ranks_on_four_nodes() {
        let shape = ClusterShape::new(4, 4).unwrap();
        let result = run_recursive_doubling(&rank_ids(16), ReduceOp::Sum, &shape).unwrap();
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [120]));
        for rank in 0..16 {
            assert_eq!(
                result.trace.internode_msgs(rank) + result.trace.intranode_msgs(rank),
                4
            );
            assert_eq!(result.trace.internode_msgs(rank), 2);
        }
        assert_eq!(result.trace.max_internode_msgs_per_rank, 2);
    }

    #[test]
    fn max_of_rank_ids() {
        let shape = ClusterShape::new(4, 4).unwrap();
        let result = run_recursive_doubling(&rank_ids(16), ReduceOp::Max, &shape).unwrap();
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [15]));
    }

    #[test]
    fn two_ranks_single_exchange() {
        let shape = ClusterShape::new(1, 2).unwrap();
        let inputs = vec![
            ReductionBuffer::from_i64(vec![3, 1]),
            ReductionBuffer::from_i64(vec![4, 1]),
        ];
        let result = run_recursive_doubling(&inputs, ReduceOp::Sum, &shape).unwrap();
        assert_eq!(result.trace.total_messages(), 2);
        assert!(result.buffers.iter().all(|b| b.as_i64().unwrap() == [7, 2]));
    }
}
