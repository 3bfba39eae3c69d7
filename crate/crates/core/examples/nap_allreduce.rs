//! Runs one NAP allreduce on 12 nodes of 4 ranks and checks the result by hand.

use napcoll::collectives::run_nap;
use napcoll::{ClusterShape, ReduceOp, ReductionBuffer};

fn main() -> napcoll::Result<()> {
    let shape = ClusterShape::new(12, 4)?;
    let p = shape.total_ranks();
    // Rank r contributes [r, 1]: the sums are 0 + 1 + ... + (p - 1) and p.
    let inputs: Vec<_> = (0..p as i64)
        .map(|r| ReductionBuffer::from_i64(vec![r, 1]))
        .collect();

    let result = run_nap(&inputs, ReduceOp::Sum, &shape)?;
    let expected = [(p * (p - 1) / 2) as i64, p as i64];
    assert!(result
        .buffers
        .iter()
        .all(|b| b.as_i64() == Some(&expected[..])));

    let trace = &result.trace;
    println!("every rank holds {expected:?}");
    println!("inter-node steps: {}", trace.internode_step_count);
    println!(
        "max inter-node messages per rank: {}",
        trace.max_internode_msgs_per_rank
    );
    println!(
        "inter-node bytes: {}, intra-node bytes: {}",
        trace.total_internode_bytes, trace.total_intranode_bytes
    );
    println!("max flops on one rank: {}", result.max_flops());
    Ok(())
}
