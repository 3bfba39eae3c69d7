//! Allreduce algorithms over the simulated transport.
//!
//! Each algorithm takes one input buffer per rank and returns the final
//! buffer of every rank, the summarized message trace and the number of
//! element operations each rank performed.

mod local;
mod nap;
mod rd;
mod smp;
mod tree;

use std::fmt;
use std::str::FromStr;

use crate::buffer::{ElementKind, ReduceOp, ReductionBuffer};
use crate::error::{Error, Result};
use crate::simnet::{summarize, SimNet, TraceSummary};
use crate::topology::ClusterShape;

pub use local::local_allreduce;
pub use nap::{nap_message_profile, run_nap, run_nap_with, NapProfile};
pub use rd::run_recursive_doubling;
pub use smp::run_smp;
pub use tree::run_tree;

#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveResult {
    /// Final buffer of each rank, indexed by rank.
    pub buffers: Vec<ReductionBuffer>,
    pub trace: TraceSummary,
    /// Element operations performed by each rank.
    pub flop_count_per_rank: Vec<usize>,
}

impl CollectiveResult {
    pub fn max_flops(&self) -> usize {
        self.flop_count_per_rank.iter().copied().max().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    Tree,
    RecursiveDoubling,
    Smp,
    Nap,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [
        Algorithm::Tree,
        Algorithm::RecursiveDoubling,
        Algorithm::Smp,
        Algorithm::Nap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Tree => "tree",
            Algorithm::RecursiveDoubling => "rd",
            Algorithm::Smp => "smp",
            Algorithm::Nap => "nap",
        }
    }

    /// Checks the algorithm's shape preconditions.
    pub fn check_shape(self, shape: &ClusterShape) -> Result<()> {
        let unsupported = |reason: String| Error::UnsupportedShape {
            algorithm: self.name(),
            reason,
        };
        match self {
            Algorithm::Tree | Algorithm::RecursiveDoubling => {
                if !shape.total_ranks().is_power_of_two() {
                    return Err(unsupported(format!(
                        "rank count {} is not a power of two",
                        shape.total_ranks()
                    )));
                }
            }
            Algorithm::Smp => {
                if !shape.ppn().is_power_of_two() || !shape.num_nodes().is_power_of_two() {
                    return Err(unsupported(format!(
                        "{shape} needs power-of-two nodes and ppn"
                    )));
                }
            }
            Algorithm::Nap => {
                if shape.ppn() < 2 || !shape.ppn().is_power_of_two() {
                    return Err(unsupported(format!(
                        "ppn {} must be a power of two and at least 2",
                        shape.ppn()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn run(
        self,
        inputs: &[ReductionBuffer],
        op: ReduceOp,
        shape: &ClusterShape,
    ) -> Result<CollectiveResult> {
        match self {
            Algorithm::Tree => run_tree(inputs, op, shape),
            Algorithm::RecursiveDoubling => run_recursive_doubling(inputs, op, shape),
            Algorithm::Smp => run_smp(inputs, op, shape),
            Algorithm::Nap => run_nap(inputs, op, shape),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tree" => Ok(Algorithm::Tree),
            "rd" => Ok(Algorithm::RecursiveDoubling),
            "smp" => Ok(Algorithm::Smp),
            "nap" => Ok(Algorithm::Nap),
            other => Err(Error::Validation(format!("unknown algorithm {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBounds {
    pub min_messages: usize,
    pub min_bytes: f64,
    pub min_flops: f64,
}

/// Lower bounds for an allreduce of `s` units over `p` ranks.
pub fn lower_bounds(p: usize, s: usize) -> Result<LowerBounds> {
    if p == 0 {
        return Err(Error::Validation("rank count must be positive".into()));
    }
    let spread = (p - 1) as f64 * s as f64 / p as f64;
    Ok(LowerBounds {
        min_messages: p.next_power_of_two().trailing_zeros() as usize,
        min_bytes: 2.0 * spread,
        min_flops: spread,
    })
}

/// Mutable state shared by the rank programs of one collective call.
struct Run {
    net: SimNet,
    op: ReduceOp,
    kind: ElementKind,
    len: usize,
    buffers: Vec<ReductionBuffer>,
    flops: Vec<usize>,
}

impl Run {
    fn new(
        algorithm: Algorithm,
        inputs: &[ReductionBuffer],
        op: ReduceOp,
        shape: &ClusterShape,
    ) -> Result<Self> {
        algorithm.check_shape(shape)?;
        Self::unchecked(inputs, op, shape)
    }

    fn unchecked(inputs: &[ReductionBuffer], op: ReduceOp, shape: &ClusterShape) -> Result<Self> {
        if inputs.len() != shape.total_ranks() {
            return Err(Error::Validation(format!(
                "{} input buffers for {} ranks",
                inputs.len(),
                shape.total_ranks()
            )));
        }
        let first = &inputs[0];
        if let Some(rank) = inputs.iter().position(|b| !b.same_layout(first)) {
            return Err(Error::Validation(format!(
                "rank {rank} holds {} x {}, rank 0 holds {} x {}",
                inputs[rank].len(),
                inputs[rank].element_kind(),
                first.len(),
                first.element_kind()
            )));
        }
        Ok(Self {
            net: SimNet::new(*shape),
            op,
            kind: first.element_kind(),
            len: first.len(),
            buffers: inputs.to_vec(),
            flops: vec![0; inputs.len()],
        })
    }

    fn shape(&self) -> ClusterShape {
        *self.net.shape()
    }

    fn identity(&self) -> ReductionBuffer {
        ReductionBuffer::identity(self.kind, self.len, self.op)
    }

    /// Combines two buffers on behalf of `rank`, lower-ranked operand first.
    fn merge(
        &mut self,
        rank: usize,
        first: &ReductionBuffer,
        second: &ReductionBuffer,
    ) -> Result<ReductionBuffer> {
        self.flops[rank] += self.len;
        self.op.combine(first, second)
    }

    /// One butterfly phase: every rank with a partner swaps and merges.
    fn butterfly(&mut self, label: String, partner: impl Fn(usize) -> Option<usize>) -> Result<()> {
        let p = self.buffers.len();
        let mut phase = self.net.phase(label)?;
        for rank in 0..p {
            if let Some(peer) = partner(rank) {
                phase.exchange(rank, peer, self.buffers[rank].clone())?;
            }
        }
        let mut delivery = phase.complete()?;
        for rank in 0..p {
            if let Some(peer) = partner(rank) {
                let received = delivery.take(rank, peer)?;
                let own = self.buffers[rank].clone();
                self.buffers[rank] = if rank < peer {
                    self.merge(rank, &own, &received)?
                } else {
                    self.merge(rank, &received, &own)?
                };
            }
        }
        Ok(())
    }

    /// Binomial reduction of `members` onto `members[0]`, one phase per level.
    fn binomial_reduce(&mut self, prefix: &str, groups: &[Vec<usize>]) -> Result<()> {
        let width = groups.iter().map(Vec::len).max().unwrap_or(0);
        let mut span = 1;
        while span < width {
            let mut phase = self
                .net
                .phase(format!("{prefix}/{}", span.trailing_zeros()))?;
            let mut pairs = Vec::new();
            for members in groups {
                for (i, &src) in members.iter().enumerate() {
                    if i % (2 * span) == span {
                        let dst = members[i - span];
                        phase.send_oneway(src, dst, self.buffers[src].clone())?;
                        phase.recv_oneway(dst, src)?;
                        pairs.push((src, dst));
                    }
                }
            }
            let mut delivery = phase.complete()?;
            for (src, dst) in pairs {
                let received = delivery.take(dst, src)?;
                let own = self.buffers[dst].clone();
                self.buffers[dst] = self.merge(dst, &own, &received)?;
            }
            span *= 2;
        }
        Ok(())
    }

    /// Binomial broadcast from `members[0]`, mirroring [`Run::binomial_reduce`].
    fn binomial_broadcast(&mut self, prefix: &str, groups: &[Vec<usize>]) -> Result<()> {
        let width = groups.iter().map(Vec::len).max().unwrap_or(0);
        let mut span = width.next_power_of_two() / 2;
        while span >= 1 {
            let mut phase = self
                .net
                .phase(format!("{prefix}/{}", span.trailing_zeros()))?;
            let mut pairs = Vec::new();
            for members in groups {
                for (i, &src) in members.iter().enumerate() {
                    if i % (2 * span) == 0 && i + span < members.len() {
                        let dst = members[i + span];
                        phase.send_oneway(src, dst, self.buffers[src].clone())?;
                        phase.recv_oneway(dst, src)?;
                        pairs.push((src, dst));
                    }
                }
            }
            let mut delivery = phase.complete()?;
            for (src, dst) in pairs {
                self.buffers[dst] = delivery.take(dst, src)?;
            }
            span /= 2;
        }
        Ok(())
    }

    /// Recursive-doubling allreduce inside every node at once.
    fn allreduce_within_nodes(&mut self, prefix: &str) -> Result<()> {
        let ppn = self.shape().ppn();
        debug_assert!(ppn.is_power_of_two());
        let mut bit = 1;
        while bit < ppn {
            self.butterfly(format!("{prefix}/{}", bit.trailing_zeros()), |rank| {
                Some(rank ^ bit)
            })?;
            bit *= 2;
        }
        Ok(())
    }

    fn finish(self) -> CollectiveResult {
        CollectiveResult {
            buffers: self.buffers,
            trace: summarize(&self.net.into_records()),
            flop_count_per_rank: self.flops,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_examples() {
        let b = lower_bounds(4, 8).unwrap();
        assert_eq!(b.min_messages, 2);
        assert_eq!(b.min_bytes, 12.0);
        assert_eq!(b.min_flops, 6.0);
        let b = lower_bounds(1, 64).unwrap();
        assert_eq!((b.min_messages, b.min_bytes, b.min_flops), (0, 0.0, 0.0));
        assert_eq!(lower_bounds(2, 2).unwrap().min_bytes, 2.0);
        assert!(lower_bounds(0, 1).is_err());
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in Algorithm::ALL {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
        assert!("ring".parse::<Algorithm>().is_err());
    }

    #[test]
    fn shape_preconditions() {
        let s = |n, ppn| ClusterShape::new(n, ppn).unwrap();
        assert!(Algorithm::Tree.check_shape(&s(3, 4)).is_err());
        assert!(Algorithm::RecursiveDoubling.check_shape(&s(4, 4)).is_ok());
        assert!(Algorithm::Smp.check_shape(&s(2, 8)).is_ok());
        assert!(Algorithm::Smp.check_shape(&s(6, 8)).is_err());
        assert!(Algorithm::Nap.check_shape(&s(5, 4)).is_ok());
        assert!(Algorithm::Nap.check_shape(&s(4, 1)).is_err());
        assert!(Algorithm::Nap.check_shape(&s(4, 6)).is_err());
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let shape = ClusterShape::new(1, 2).unwrap();
        let inputs = vec![
            ReductionBuffer::from_i64(vec![1]),
            ReductionBuffer::from_i64(vec![1, 2]),
        ];
        assert!(matches!(
            run_recursive_doubling(&inputs, ReduceOp::Sum, &shape),
            Err(Error::Validation(_))
        ));
        assert!(run_tree(&inputs[..1], ReduceOp::Sum, &shape).is_err());
    }
}
