//! Runs all four allreduce algorithms on one shape and tabulates their traffic.

use napcoll::collectives::Algorithm;
use napcoll::inputs::seeded_inputs;
use napcoll::{ClusterShape, ElementKind, ReduceOp};

fn main() -> napcoll::Result<()> {
    let shape = ClusterShape::new(16, 4)?;
    let inputs = seeded_inputs(shape.total_ranks(), 8, ElementKind::I64, 1);

    println!("{shape}, 8 x i64 per rank");
    println!(
        "{:<5} {:>7} {:>10} {:>12} {:>10} {:>6}",
        "alg", "phases", "inter-msgs", "max/rank", "inter-B", "flops"
    );
    let mut results = Vec::new();
    for alg in Algorithm::ALL {
        let r = alg.run(&inputs, ReduceOp::Sum, &shape)?;
        let t = &r.trace;
        println!(
            "{:<5} {:>7} {:>10} {:>12} {:>10} {:>6}",
            alg.name(),
            t.phase_count,
            t.per_rank_internode_msgs.values().sum::<usize>(),
            t.max_internode_msgs_per_rank,
            t.total_internode_bytes,
            r.max_flops()
        );
        results.push(r.buffers);
    }
    assert!(
        results.windows(2).all(|w| w[0] == w[1]),
        "algorithms disagree"
    );
    Ok(())
}
