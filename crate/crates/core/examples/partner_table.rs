//! Prints who each rank talks to at every NAP inter-node step.
//!
//! `cargo run --example partner_table -- 5 4` shows a shape whose node count
//! is not a multiple of ppn, including the extra-node forwarding.

use napcoll::topology::nap_partner;
use napcoll::{ClusterShape, PartnerAction};

fn main() -> napcoll::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let (nodes, ppn) = match args[..] {
        [n, ppn] => (n, ppn),
        _ => (16, 4),
    };
    let shape = ClusterShape::new(nodes, ppn)?;
    println!("{shape}, layout {:?}", shape.nap_layout()?);
    for step in 0..shape.nap_steps()? {
        println!("step {step}");
        for rank in 0..shape.total_ranks() {
            let action = match nap_partner(rank, step, &shape)? {
                PartnerAction::Exchange(peer) => format!("exchange with {peer}"),
                PartnerAction::Idle => "idle".to_string(),
                PartnerAction::ExtraSendTo(targets) => format!("forward to {targets:?}"),
                PartnerAction::ExtraRecvFrom(src) => format!("receive from {src}"),
            };
            println!(
                "  rank {rank:>4} (node {:>3}, local {}): {action}",
                shape.node_of(rank)?,
                shape.local_rank_of(rank)?
            );
        }
    }
    Ok(())
}
