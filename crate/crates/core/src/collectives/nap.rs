//! Node-aware parallel allreduce.
//!
//! Every node first reduces locally so that all of its ranks hold the node's
//! partial. Each inter-node step then lets every non-idle rank fetch the
//! partial of a different subgroup, after which a local allreduce combines
//! the fetched partials into the group's result.
//!
//! Ahead of each local allreduce a node's ranks hold the following
//! contributions: the lowest rank that received a partial folds the node's
//! own partial into it, other receivers keep the received partial as is, and
//! ranks that received nothing contribute the identity. The local allreduce
//! therefore counts every subgroup exactly once.

use crate::buffer::{ReduceOp, ReductionBuffer};
use crate::error::Result;
use crate::topology::{nap_partner, ClusterShape, PartnerAction, PartnerFn};

use super::{Algorithm, CollectiveResult, Run};

pub fn run_nap(
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
) -> Result<CollectiveResult> {
    run_nap_with(inputs, op, shape, nap_partner)
}

/// [`run_nap`] driven by an arbitrary pairing rule.
pub fn run_nap_with(
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
    partner: PartnerFn,
) -> Result<CollectiveResult> {
    let mut run = Run::new(Algorithm::Nap, inputs, op, shape)?;
    let p = shape.total_ranks();
    let ppn = shape.ppn();

    run.allreduce_within_nodes("nap/local/0")?;
    for step in 0..shape.nap_steps()? {
        let actions = (0..p)
            .map(|rank| partner(rank, step, shape))
            .collect::<Result<Vec<_>>>()?;

        let mut phase = run.net.phase(format!("nap/inter/{step}"))?;
        for (rank, action) in actions.iter().enumerate() {
            match action {
                PartnerAction::Exchange(peer) => {
                    phase.exchange(rank, *peer, run.buffers[rank].clone())?
                }
                PartnerAction::ExtraSendTo(targets) => {
                    for &target in targets {
                        phase.send_oneway(rank, target, run.buffers[rank].clone())?;
                    }
                }
                PartnerAction::ExtraRecvFrom(source) => phase.recv_oneway(rank, *source)?,
                PartnerAction::Idle => {}
            }
        }
        let mut delivery = phase.complete()?;

        for node in 0..shape.num_nodes() {
            let ranks = node * ppn..(node + 1) * ppn;
            let own = run.buffers[ranks.start].clone();
            let mut anchored = false;
            for rank in ranks.clone() {
                run.buffers[rank] = match delivery.take_any(rank) {
                    Some((_, received)) if !anchored => {
                        anchored = true;
                        run.merge(rank, &received, &own)?
                    }
                    Some((_, received)) => received,
                    None => run.identity(),
                };
            }
            if !anchored {
                run.buffers[ranks.start] = own;
            }
        }
        run.allreduce_within_nodes(&format!("nap/local/{}", step + 1))?;
    }
    Ok(run.finish())
}

/// Message counts of a NAP schedule, derived from the pairing rule alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NapProfile {
    pub steps: usize,
    /// Steps in which at least one inter-node message is sent.
    pub internode_steps: usize,
    /// Inter-node messages sent by each rank over all steps.
    pub per_rank_sends: Vec<usize>,
}

impl NapProfile {
    pub fn max_internode_msgs_per_rank(&self) -> usize {
        self.per_rank_sends.iter().copied().max().unwrap_or(0)
    }
}

/// Walks the pairing rule for every rank and step without moving payloads.
pub fn nap_message_profile(shape: &ClusterShape, partner: PartnerFn) -> Result<NapProfile> {
    let steps = shape.nap_steps()?;
    let mut per_rank_sends = vec![0; shape.total_ranks()];
    let mut internode_steps = 0;
    for step in 0..steps {
        let mut sent = false;
        for (rank, sends) in per_rank_sends.iter_mut().enumerate() {
            let count = match partner(rank, step, shape)? {
                PartnerAction::Exchange(_) => 1,
                PartnerAction::ExtraSendTo(targets) => targets.len(),
                PartnerAction::ExtraRecvFrom(_) | PartnerAction::Idle => 0,
            };
            *sends += count;
            sent |= count > 0;
        }
        internode_steps += usize::from(sent);
    }
    Ok(NapProfile {
        steps,
        internode_steps,
        per_rank_sends,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rank_ids(p: usize) -> Vec<ReductionBuffer> {
        (0..p as i64)
            .map(|r| ReductionBuffer::from_i64(vec![r]))
            .collect()
    }

    fn serial_sum(p: usize) -> i64 {
        (0..p as i64).sum()
    }

    fn check_sum(n: usize, ppn: usize) -> CollectiveResult {
        let shape = ClusterShape::new(n, ppn).unwrap();
        let p = shape.total_ranks();
        let result = run_nap(&rank_ids(p), ReduceOp::Sum, &shape).unwrap();
        for (rank, buffer) in result.buffers.iter().enumerate() {
            assert_eq!(
                buffer.as_i64().unwrap(),
                [serial_sum(p)],
                "rank {rank} of {shape}"
            );
        }
        result
    }

    #[test]
    fn sixteen_by_sixteen_needs_one_internode_step() {
        let result = check_sum(16, 16);
        assert_eq!(result.trace.internode_step_count, 1);
        assert_eq!(result.trace.max_internode_msgs_per_rank, 1);
    }

    #[test]
    fn single_node_is_local_only() {
        let result = check_sum(1, 4);
        assert_eq!(result.trace.total_internode_bytes, 0);
        assert_eq!(result.trace.intranode_step_count, 2);
    }

    #[test]
    fn twelve_nodes_reduced_final_step() {
        let result = check_sum(12, 4);
        assert_eq!(result.trace.internode_step_count, 2);
        assert_eq!(result.trace.max_internode_msgs_per_rank, 2);
        let idle_final: Vec<_> = result
            .trace
            .records
            .iter()
            .filter(|r| r.step_label == "nap/inter/1" && r.src % 4 == 3)
            .collect();
        assert!(idle_final.is_empty());
    }

    #[test]
    fn non_divisible_node_counts() {
        for n in [3, 5, 6, 7, 9, 17, 36] {
            check_sum(n, 4);
        }
        check_sum(5, 2);
        check_sum(11, 8);
    }

    #[test]
    fn flops_match_closed_form_on_powers() {
        // s * (log2(p) + log_ppn(n)) on the busiest rank.
        let shape = ClusterShape::new(16, 4).unwrap();
        let inputs = vec![ReductionBuffer::from_i64(vec![1; 3]); 64];
        let result = run_nap(&inputs, ReduceOp::Sum, &shape).unwrap();
        assert_eq!(result.max_flops(), 3 * (6 + 2));
    }

    #[test]
    fn profile_matches_trace() {
        for (n, ppn) in [(16, 4), (12, 4), (5, 4), (8, 2)] {
            let shape = ClusterShape::new(n, ppn).unwrap();
            let result = check_sum(n, ppn);
            let profile = nap_message_profile(&shape, nap_partner).unwrap();
            assert_eq!(profile.internode_steps, result.trace.internode_step_count);
            assert_eq!(
                profile.max_internode_msgs_per_rank(),
                result.trace.max_internode_msgs_per_rank
            );
        }
    }

    #[test]
    fn profile_of_large_shape() {
        let shape = ClusterShape::new(4096, 16).unwrap();
        let profile = nap_message_profile(&shape, nap_partner).unwrap();
        assert_eq!(profile.internode_steps, 3);
        assert_eq!(profile.max_internode_msgs_per_rank(), 3);
    }
}
