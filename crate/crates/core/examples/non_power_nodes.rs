//! NAP on node counts that are not powers of ppn.

use napcoll::collectives::{nap_message_profile, run_nap};
use napcoll::inputs::seeded_inputs;
use napcoll::topology::nap_partner;
use napcoll::{ClusterShape, ElementKind, ReduceOp};

fn main() -> napcoll::Result<()> {
    let ppn = 4;
    println!(
        "{:>5} {:>14} {:>6} {:>9}",
        "nodes", "layout", "steps", "max/rank"
    );
    for nodes in [3, 5, 8, 12, 16, 20, 48, 64] {
        let shape = ClusterShape::new(nodes, ppn)?;
        let inputs = seeded_inputs(shape.total_ranks(), 4, ElementKind::I64, 2);
        let result = run_nap(&inputs, ReduceOp::Sum, &shape)?;
        let profile = nap_message_profile(&shape, nap_partner)?;
        assert_eq!(
            profile.max_internode_msgs_per_rank(),
            result.trace.max_internode_msgs_per_rank
        );
        println!(
            "{nodes:>5} {:>14} {:>6} {:>9}",
            format!("{:?}", shape.nap_layout()?),
            result.trace.internode_step_count,
            result.trace.max_internode_msgs_per_rank
        );
    }
    Ok(())
}
