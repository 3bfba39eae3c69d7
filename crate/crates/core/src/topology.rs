//! Rank/node arithmetic under SMP rank ordering and the NAP partner rule.
//!
//! Ranks are laid out node-major: `rank = node * ppn + local_rank`. At NAP
//! inter-node step `i`, nodes are split into groups of `ppn^(i+1)` nodes, each
//! made of up to `ppn` subgroups of `ppn^i` nodes. A rank with local rank `r`
//! in subgroup `m` pairs with the rank of local rank `m` in subgroup `r` at
//! the same node position; the rank whose local rank equals its subgroup index
//! sits out the exchange.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ClusterShape {
    num_nodes: usize,
    ppn: usize,
    socket_size: usize,
}

impl ClusterShape {
    /// Shape with the default two-socket split (`socket_size = ppn / 2`).
    ///
    /// Odd `ppn` values cannot be split evenly and are treated as a single
    /// socket per node.
    pub fn new(num_nodes: usize, ppn: usize) -> Result<Self> {
        let socket_size = if ppn >= 2 && ppn.is_multiple_of(2) {
            ppn / 2
        } else {
            ppn.max(1)
        };
        Self::with_socket_size(num_nodes, ppn, socket_size)
    }

    pub fn with_socket_size(num_nodes: usize, ppn: usize, socket_size: usize) -> Result<Self> {
        if num_nodes == 0 {
            return Err(Error::InvalidShape("node count must be positive".into()));
        }
        if ppn == 0 {
            return Err(Error::InvalidShape("ppn must be positive".into()));
        }
        if socket_size == 0 || !ppn.is_multiple_of(socket_size) {
            return Err(Error::InvalidShape(format!(
                "socket size {socket_size} does not divide ppn {ppn}"
            )));
        }
        if num_nodes.checked_mul(ppn).is_none() {
            return Err(Error::InvalidShape("rank count overflows".into()));
        }
        Ok(Self {
            num_nodes,
            ppn,
            socket_size,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn ppn(&self) -> usize {
        self.ppn
    }

    pub fn socket_size(&self) -> usize {
        self.socket_size
    }

    pub fn total_ranks(&self) -> usize {
        self.num_nodes * self.ppn
    }

    pub fn check_rank(&self, rank: usize) -> Result<()> {
        if rank >= self.total_ranks() {
            return Err(Error::RankOutOfRange {
                rank,
                total: self.total_ranks(),
            });
        }
        Ok(())
    }

    pub fn node_of(&self, rank: usize) -> Result<usize> {
        self.check_rank(rank)?;
        Ok(rank / self.ppn)
    }

    pub fn local_rank_of(&self, rank: usize) -> Result<usize> {
        self.check_rank(rank)?;
        Ok(rank % self.ppn)
    }

    pub fn coord(&self, rank: usize) -> Result<RankCoord> {
        self.check_rank(rank)?;
        Ok(RankCoord {
            rank,
            node: rank / self.ppn,
            local_rank: rank % self.ppn,
        })
    }

    /// Inverse of [`ClusterShape::coord`]; callers guarantee the bounds.
    pub fn rank_at(&self, node: usize, local_rank: usize) -> usize {
        debug_assert!(node < self.num_nodes && local_rank < self.ppn);
        node * self.ppn + local_rank
    }

    /// Socket index of a rank within its node.
    pub fn socket_of(&self, rank: usize) -> Result<usize> {
        Ok(self.local_rank_of(rank)? / self.socket_size)
    }

    /// Number of NAP inter-node steps, `ceil(log_ppn(n))`; zero for one node.
    pub fn nap_steps(&self) -> Result<usize> {
        if self.ppn < 2 {
            return Err(Error::UnsupportedShape {
                algorithm: "nap",
                reason: format!("ppn must be at least 2, got {}", self.ppn),
            });
        }
        Ok(ceil_log(self.num_nodes, self.ppn))
    }

    /// How the node count relates to powers of `ppn`.
    pub fn nap_layout(&self) -> Result<NapLayout> {
        let steps = self.nap_steps()?;
        if steps == 0 {
            return Ok(NapLayout::SingleNode);
        }
        let below = self.ppn.pow(steps as u32 - 1);
        Ok(if below * self.ppn == self.num_nodes {
            NapLayout::PowerOfPpn
        } else if self.num_nodes.is_multiple_of(below) {
            NapLayout::Divisible
        } else {
            NapLayout::NonDivisible
        })
    }
}

impl fmt::Display for ClusterShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} nodes x {} ppn", self.num_nodes, self.ppn)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NapLayout {
    SingleNode,
    /// `n == ppn^k`.
    PowerOfPpn,
    /// Every subgroup of the final step is complete; the final group holds
    /// fewer than `ppn` subgroups.
    Divisible,
    /// The final subgroup of some group is short, leaving extra nodes in the
    /// complete subgroups without a partner.
    NonDivisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RankCoord {
    pub rank: usize,
    pub node: usize,
    pub local_rank: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepGeometry {
    pub step: usize,
    /// `ppn^step` nodes.
    pub subgroup_size_nodes: usize,
    /// Nodes in this rank's group, clamped to the nodes that exist.
    pub group_size_nodes: usize,
    pub group_start_node: usize,
    /// Number of (possibly short) subgroups in this rank's group.
    pub subgroup_count: usize,
    pub subgroup_index: usize,
    pub node_position: usize,
}

impl StepGeometry {
    fn group_end_node(&self) -> usize {
        self.group_start_node + self.group_size_nodes
    }

    /// Nodes in subgroup `index` of this group.
    pub fn subgroup_len(&self, index: usize) -> usize {
        let start = self.group_start_node + index * self.subgroup_size_nodes;
        self.group_end_node()
            .saturating_sub(start)
            .min(self.subgroup_size_nodes)
    }

    fn subgroup_start(&self, index: usize) -> usize {
        self.group_start_node + index * self.subgroup_size_nodes
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PartnerAction {
    Exchange(usize),
    Idle,
    /// Forward this node's partial to extra nodes of complete subgroups, in order.
    ExtraSendTo(Vec<usize>),
    ExtraRecvFrom(usize),
}

impl PartnerAction {
    pub fn is_idle(&self) -> bool {
        matches!(self, PartnerAction::Idle)
    }
}

/// Signature shared by [`nap_partner`] and substitute pairing rules.
pub type PartnerFn = fn(usize, usize, &ClusterShape) -> Result<PartnerAction>;

pub fn node_of(rank: usize, shape: &ClusterShape) -> Result<usize> {
    shape.node_of(rank)
}

pub fn local_rank_of(rank: usize, shape: &ClusterShape) -> Result<usize> {
    shape.local_rank_of(rank)
}

pub fn step_geometry(rank: usize, step: usize, shape: &ClusterShape) -> Result<StepGeometry> {
    let steps = shape.nap_steps()?;
    if step >= steps {
        return Err(Error::StepOutOfRange { step, steps });
    }
    let node = shape.node_of(rank)?;
    let ppn = shape.ppn();
    let subgroup = ppn.pow(step as u32);
    let group = subgroup * ppn;
    let group_start = node / group * group;
    let group_len = group.min(shape.num_nodes() - group_start);
    let offset = node - group_start;
    Ok(StepGeometry {
        step,
        subgroup_size_nodes: subgroup,
        group_size_nodes: group_len,
        group_start_node: group_start,
        subgroup_count: group_len.div_ceil(subgroup),
        subgroup_index: offset / subgroup,
        node_position: offset % subgroup,
    })
}

/// The role of `rank` in NAP inter-node step `step`.
pub fn nap_partner(rank: usize, step: usize, shape: &ClusterShape) -> Result<PartnerAction> {
    let geom = step_geometry(rank, step, shape)?;
    let local = rank % shape.ppn();
    let own = geom.subgroup_index;

    if local == own || local >= geom.subgroup_count {
        return Ok(match extra_targets(&geom, local, shape) {
            targets if targets.is_empty() => PartnerAction::Idle,
            targets => PartnerAction::ExtraSendTo(targets),
        });
    }

    let target_len = geom.subgroup_len(local);
    if geom.node_position < target_len {
        let node = geom.subgroup_start(local) + geom.node_position;
        return Ok(PartnerAction::Exchange(shape.rank_at(node, own)));
    }

    // The target subgroup is the short final one and has no node at this position.
    let short = ShortSubgroup::of(&geom, shape).expect("missing partner implies a short subgroup");
    let extra_index = own * short.missing + (geom.node_position - short.len);
    Ok(PartnerAction::ExtraRecvFrom(
        short.sender_rank(extra_index, shape),
    ))
}

/// The short last subgroup of a group and the ranks on it that are free to
/// forward its partial to the extra nodes.
struct ShortSubgroup {
    index: usize,
    start: usize,
    len: usize,
    /// Positions absent from the short subgroup, per complete subgroup.
    missing: usize,
    /// Free local ranks on each short-subgroup node: the idle one, then any
    /// local rank with no subgroup to pair with.
    sender_locals: Vec<usize>,
}

impl ShortSubgroup {
    fn of(geom: &StepGeometry, shape: &ClusterShape) -> Option<Self> {
        let index = geom.subgroup_count - 1;
        let len = geom.subgroup_len(index);
        if index == 0 || len == geom.subgroup_size_nodes {
            return None;
        }
        let mut sender_locals = vec![index];
        sender_locals.extend(geom.subgroup_count..shape.ppn());
        Some(Self {
            index,
            start: geom.subgroup_start(index),
            len,
            missing: geom.subgroup_size_nodes - len,
            sender_locals,
        })
    }

    fn extra_count(&self) -> usize {
        self.index * self.missing
    }

    fn slot_count(&self) -> usize {
        self.sender_locals.len() * self.len
    }

    // Slots enumerate the idle ranks in ascending node order first.
    fn sender_rank(&self, extra_index: usize, shape: &ClusterShape) -> usize {
        let slot = extra_index % self.slot_count();
        let local = self.sender_locals[slot / self.len];
        shape.rank_at(self.start + slot % self.len, local)
    }
}

fn extra_targets(geom: &StepGeometry, local: usize, shape: &ClusterShape) -> Vec<usize> {
    let Some(short) = ShortSubgroup::of(geom, shape) else {
        return Vec::new();
    };
    if geom.subgroup_index != short.index {
        return Vec::new();
    }
    let Some(round) = short.sender_locals.iter().position(|&l| l == local) else {
        return Vec::new();
    };
    let slot = round * short.len + geom.node_position;
    (slot..short.extra_count())
        .step_by(short.slot_count())
        .map(|extra| {
            let subgroup = extra / short.missing;
            let position = short.len + extra % short.missing;
            let node = geom.group_start_node + subgroup * geom.subgroup_size_nodes + position;
            shape.rank_at(node, short.index)
        })
        .collect()
}

/// Smallest `k` with `base^k >= n`.
pub fn ceil_log(n: usize, base: usize) -> usize {
    assert!(base >= 2 && n >= 1);
    let mut k = 0;
    let mut reach = 1usize;
    while reach < n {
        reach = reach.saturating_mul(base);
        k += 1;
    }
    k
}

/// `log2(x)` when `x` is a power of two.
pub fn exact_log2(x: usize) -> Option<usize> {
    x.is_power_of_two().then(|| x.trailing_zeros() as usize)
}
