//! Deterministic lock-step message transport.
//!
//! Rank programs post their operations for one phase (exchange, one-way send,
//! one-way receive) and the phase completes by matching them rendezvous
//! style. Anything left unmatched is reported as a deadlock. Every matched
//! message becomes a [`MessageRecord`] classified by locality.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{self, Write};

use crate::buffer::ReductionBuffer;
use crate::error::{Error, Result};
use crate::topology::ClusterShape;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Locality {
    IntraSocket,
    IntraNode,
    InterNode,
}

impl Locality {
    pub fn classify(src: usize, dst: usize, shape: &ClusterShape) -> Result<Self> {
        let (src_node, dst_node) = (shape.node_of(src)?, shape.node_of(dst)?);
        Ok(if src_node != dst_node {
            Locality::InterNode
        } else if shape.socket_of(src)? == shape.socket_of(dst)? {
            Locality::IntraSocket
        } else {
            Locality::IntraNode
        })
    }

    pub fn is_internode(self) -> bool {
        self == Locality::InterNode
    }
}

impl fmt::Display for Locality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Locality::IntraSocket => "intra_socket",
            Locality::IntraNode => "intra_node",
            Locality::InterNode => "inter_node",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageRecord {
    pub step_label: String,
    pub src: usize,
    pub dst: usize,
    pub bytes: usize,
    pub locality: Locality,
}

pub struct SimNet {
    shape: ClusterShape,
    records: Vec<MessageRecord>,
    labels: HashSet<String>,
}

impl SimNet {
    pub fn new(shape: ClusterShape) -> Self {
        Self {
            shape,
            records: Vec::new(),
            labels: HashSet::new(),
        }
    }

    pub fn shape(&self) -> &ClusterShape {
        &self.shape
    }

    /// Opens a phase. Labels must be unique within one simulation.
    pub fn phase(&mut self, label: impl Into<String>) -> Result<Phase<'_>> {
        let label = label.into();
        if label.contains([',', '\n', '\r']) {
            return Err(Error::Validation(format!(
                "phase label {label:?} is not CSV-safe"
            )));
        }
        if !self.labels.insert(label.clone()) {
            return Err(Error::Protocol {
                phase: label,
                detail: "phase label reused".into(),
            });
        }
        Ok(Phase {
            net: self,
            label,
            posted: Vec::new(),
        })
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    pub fn into_records(self) -> Vec<MessageRecord> {
        self.records
    }
}

#[derive(Debug)]
enum Posted {
    Exchange { buffer: ReductionBuffer },
    Send { buffer: ReductionBuffer },
    Recv,
}

/// Operations posted by all ranks for one phase.
pub struct Phase<'a> {
    net: &'a mut SimNet,
    label: String,
    posted: Vec<(usize, usize, Posted)>,
}

impl Phase<'_> {
    fn check_pair(&self, rank: usize, peer: usize) -> Result<()> {
        self.net.shape.check_rank(rank)?;
        self.net.shape.check_rank(peer)?;
        if rank == peer {
            return Err(Error::Validation(format!(
                "rank {rank} cannot communicate with itself in phase {}",
                self.label
            )));
        }
        Ok(())
    }

    /// Symmetric send/receive with `peer`; `peer` must post the mirror exchange.
    pub fn exchange(&mut self, rank: usize, peer: usize, buffer: ReductionBuffer) -> Result<()> {
        self.check_pair(rank, peer)?;
        self.posted.push((rank, peer, Posted::Exchange { buffer }));
        Ok(())
    }

    pub fn send_oneway(&mut self, rank: usize, peer: usize, buffer: ReductionBuffer) -> Result<()> {
        self.check_pair(rank, peer)?;
        self.posted.push((rank, peer, Posted::Send { buffer }));
        Ok(())
    }

    pub fn recv_oneway(&mut self, rank: usize, peer: usize) -> Result<()> {
        self.check_pair(rank, peer)?;
        self.posted.push((rank, peer, Posted::Recv));
        Ok(())
    }

    /// Matches every posted operation and appends the phase's records.
    pub fn complete(self) -> Result<Delivery> {
        let mut exchanges: BTreeMap<(usize, usize), ReductionBuffer> = BTreeMap::new();
        let mut sends: BTreeMap<(usize, usize), ReductionBuffer> = BTreeMap::new();
        let mut recvs: BTreeSet<(usize, usize)> = BTreeSet::new();

        let Phase { net, label, posted } = self;
        let this = PhaseCtx { label: &label };

        for (rank, peer, op) in posted {
            let duplicate = match op {
                Posted::Exchange { buffer } => exchanges.insert((rank, peer), buffer).is_some(),
                Posted::Send { buffer } => sends.insert((rank, peer), buffer).is_some(),
                Posted::Recv => !recvs.insert((rank, peer)),
            };
            if duplicate {
                return Err(this.protocol(format!(
                    "rank {rank} posted the same operation towards rank {peer} twice"
                )));
            }
        }

        let mut messages: Vec<(usize, usize, ReductionBuffer)> = Vec::new();
        for (&(rank, peer), buffer) in &exchanges {
            let Some(mirror) = exchanges.get(&(peer, rank)) else {
                return Err(this.deadlock(rank, peer));
            };
            if mirror.byte_len() != buffer.byte_len() || !mirror.same_layout(buffer) {
                return Err(this.protocol(format!(
                    "ranks {rank} and {peer} exchange {} and {} bytes",
                    buffer.byte_len(),
                    mirror.byte_len()
                )));
            }
            messages.push((rank, peer, buffer.clone()));
        }
        for ((src, dst), buffer) in sends {
            if !recvs.remove(&(dst, src)) {
                return Err(this.deadlock(src, dst));
            }
            messages.push((src, dst, buffer));
        }
        if let Some(&(rank, peer)) = recvs.iter().next() {
            return Err(this.deadlock(rank, peer));
        }

        let mut incoming: BTreeMap<usize, usize> = BTreeMap::new();
        for (src, dst, _) in &messages {
            if let Some(first) = incoming.insert(*dst, *src) {
                return Err(this.protocol(format!(
                    "rank {dst} receives from both rank {first} and rank {src}"
                )));
            }
        }

        // Pairs ordered by their lower rank; within a pair the lower rank sends first.
        messages.sort_by_key(|(src, dst, _)| ((*src).min(*dst), (*src).max(*dst), *src));

        let mut delivered = BTreeMap::new();
        for (src, dst, buffer) in messages {
            net.records.push(MessageRecord {
                step_label: label.clone(),
                src,
                dst,
                bytes: buffer.byte_len(),
                locality: Locality::classify(src, dst, &net.shape)?,
            });
            delivered.insert(dst, (src, buffer));
        }
        Ok(Delivery { delivered })
    }
}

struct PhaseCtx<'a> {
    label: &'a str,
}

impl PhaseCtx<'_> {
    fn protocol(&self, detail: String) -> Error {
        Error::Protocol {
            phase: self.label.to_string(),
            detail,
        }
    }

    fn deadlock(&self, rank: usize, peer: usize) -> Error {
        Error::Deadlock {
            phase: self.label.to_string(),
            rank,
            peer,
        }
    }
}

/// Buffers received in a completed phase, at most one per rank.
#[derive(Debug, Default)]
pub struct Delivery {
    delivered: BTreeMap<usize, (usize, ReductionBuffer)>,
}

impl Delivery {
    /// Removes the buffer `dst` received from `src`.
    pub fn take(&mut self, dst: usize, src: usize) -> Result<ReductionBuffer> {
        match self.delivered.remove(&dst) {
            Some((from, buffer)) if from == src => Ok(buffer),
            other => {
                if let Some(entry) = other {
                    self.delivered.insert(dst, entry);
                }
                Err(Error::Validation(format!(
                    "rank {dst} received nothing from rank {src}"
                )))
            }
        }
    }

    /// Removes whatever `dst` received, with its sender.
    pub fn take_any(&mut self, dst: usize) -> Option<(usize, ReductionBuffer)> {
        self.delivered.remove(&dst)
    }

    pub fn is_empty(&self) -> bool {
        self.delivered.is_empty()
    }
}

/// Aggregated view of a trace. Message counts are per sending rank.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceSummary {
    pub per_rank_internode_msgs: BTreeMap<usize, usize>,
    /// Intra-socket and intra-node messages together.
    pub per_rank_intranode_msgs: BTreeMap<usize, usize>,
    pub max_internode_msgs_per_rank: usize,
    pub total_internode_bytes: usize,
    pub total_intranode_bytes: usize,
    /// Distinct phases with at least one inter-node message.
    pub internode_step_count: usize,
    /// Distinct phases with at least one intra-node message.
    pub intranode_step_count: usize,
    /// Distinct phases with any message.
    pub phase_count: usize,
    pub records: Vec<MessageRecord>,
}

impl TraceSummary {
    pub fn total_messages(&self) -> usize {
        self.records.len()
    }

    pub fn internode_msgs(&self, rank: usize) -> usize {
        self.per_rank_internode_msgs
            .get(&rank)
            .copied()
            .unwrap_or(0)
    }

    pub fn intranode_msgs(&self, rank: usize) -> usize {
        self.per_rank_intranode_msgs
            .get(&rank)
            .copied()
            .unwrap_or(0)
    }

    /// Ranks appearing as source or destination of an inter-node message.
    pub fn internode_ranks(&self) -> BTreeSet<usize> {
        self.records
            .iter()
            .filter(|r| r.locality.is_internode())
            .flat_map(|r| [r.src, r.dst])
            .collect()
    }
}

pub fn summarize(records: &[MessageRecord]) -> TraceSummary {
    let mut summary = TraceSummary {
        records: records.to_vec(),
        ..TraceSummary::default()
    };
    let mut inter_phases = HashSet::new();
    let mut intra_phases = HashSet::new();
    let mut phases = HashSet::new();
    for record in records {
        phases.insert(record.step_label.as_str());
        if record.locality.is_internode() {
            *summary
                .per_rank_internode_msgs
                .entry(record.src)
                .or_default() += 1;
            summary.total_internode_bytes += record.bytes;
            inter_phases.insert(record.step_label.as_str());
        } else {
            *summary
                .per_rank_intranode_msgs
                .entry(record.src)
                .or_default() += 1;
            summary.total_intranode_bytes += record.bytes;
            intra_phases.insert(record.step_label.as_str());
        }
    }
    summary.max_internode_msgs_per_rank = summary
        .per_rank_internode_msgs
        .values()
        .copied()
        .max()
        .unwrap_or(0);
    summary.internode_step_count = inter_phases.len();
    summary.intranode_step_count = intra_phases.len();
    summary.phase_count = phases.len();
    summary
}

pub const TRACE_CSV_HEADER: &str = "phase,src,dst,bytes,locality";

/// Writes `phase,src,dst,bytes,locality` rows with LF endings and no quoting.
pub fn write_trace_csv<W: Write>(records: &[MessageRecord], mut out: W) -> io::Result<()> {
    writeln!(out, "{TRACE_CSV_HEADER}")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.step_label, r.src, r.dst, r.bytes, r.locality
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn buf(len: usize) -> ReductionBuffer {
        ReductionBuffer::from_i64(vec![7; len])
    }

    fn net44() -> SimNet {
        SimNet::new(ClusterShape::new(4, 4).unwrap())
    }

    #[test]
    fn exchange_records_both_directions() {
        let mut net = net44();
        let mut phase = net.phase("x").unwrap();
        phase
            .exchange(9, 6, ReductionBuffer::from_i64(vec![9]))
            .unwrap();
        phase
            .exchange(6, 9, ReductionBuffer::from_i64(vec![6]))
            .unwrap();
        let mut got = phase.complete().unwrap();
        assert_eq!(got.take(9, 6).unwrap().as_i64().unwrap(), &[6]);
        assert_eq!(got.take(6, 9).unwrap().as_i64().unwrap(), &[9]);
        let records = net.records();
        assert_eq!(records.len(), 2);
        // Lower rank first.
        assert_eq!((records[0].src, records[0].dst), (6, 9));
        assert!(records
            .iter()
            .all(|r| r.bytes == 8 && r.locality == Locality::InterNode));
    }

    #[test]
    fn same_node_exchange_is_local() {
        // ppn = 4 splits into sockets {0,1} and {2,3}.
        let mut net = net44();
        let mut phase = net.phase("y").unwrap();
        phase.exchange(0, 1, buf(1)).unwrap();
        phase.exchange(1, 0, buf(1)).unwrap();
        phase.exchange(2, 3, buf(1)).unwrap();
        phase.exchange(3, 2, buf(1)).unwrap();
        phase.complete().unwrap();
        assert!(net
            .records()
            .iter()
            .all(|r| r.locality == Locality::IntraSocket));
        let mut phase = net.phase("z").unwrap();
        phase.exchange(1, 2, buf(1)).unwrap();
        phase.exchange(2, 1, buf(1)).unwrap();
        phase.complete().unwrap();
        assert_eq!(net.records()[4].locality, Locality::IntraNode);
    }

    #[test]
    fn oneway_transfer() {
        let shape = ClusterShape::new(9, 4).unwrap();
        let mut net = SimNet::new(shape);
        let mut phase = net.phase("extra").unwrap();
        phase.send_oneway(34, 14, buf(2)).unwrap();
        phase.recv_oneway(14, 34).unwrap();
        let mut got = phase.complete().unwrap();
        assert_eq!(got.take(14, 34).unwrap(), buf(2));
        assert!(got.is_empty());
        assert_eq!(net.records().len(), 1);
        assert_eq!(net.records()[0].locality, Locality::InterNode);
        assert_eq!(net.records()[0].bytes, 16);
    }

    #[test]
    fn unmatched_send_is_a_deadlock() {
        let mut net = net44();
        let mut phase = net.phase("p").unwrap();
        phase.send_oneway(3, 12, buf(1)).unwrap();
        match phase.complete() {
            Err(Error::Deadlock {
                rank: 3, peer: 12, ..
            }) => {}
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn unmatched_exchange_and_recv_are_deadlocks() {
        let mut net = net44();
        let mut phase = net.phase("a").unwrap();
        phase.exchange(1, 5, buf(1)).unwrap();
        assert!(matches!(
            phase.complete(),
            Err(Error::Deadlock {
                rank: 1,
                peer: 5,
                ..
            })
        ));
        let mut phase = net.phase("b").unwrap();
        phase.recv_oneway(2, 7).unwrap();
        assert!(matches!(
            phase.complete(),
            Err(Error::Deadlock {
                rank: 2,
                peer: 7,
                ..
            })
        ));
    }

    #[test]
    fn self_send_is_rejected() {
        let mut net = net44();
        let mut phase = net.phase("p").unwrap();
        assert!(matches!(
            phase.send_oneway(4, 4, buf(1)),
            Err(Error::Validation(_))
        ));
        assert!(matches!(
            phase.exchange(4, 4, buf(1)),
            Err(Error::Validation(_))
        ));
        assert!(phase.exchange(4, 16, buf(1)).is_err());
    }

    #[test]
    fn two_sends_to_one_receiver_is_a_protocol_error() {
        let mut net = net44();
        let mut phase = net.phase("p").unwrap();
        phase.send_oneway(1, 0, buf(1)).unwrap();
        phase.send_oneway(2, 0, buf(1)).unwrap();
        phase.recv_oneway(0, 1).unwrap();
        phase.recv_oneway(0, 2).unwrap();
        assert!(matches!(phase.complete(), Err(Error::Protocol { .. })));
    }

    #[test]
    fn mismatched_exchange_sizes_are_a_protocol_error() {
        let mut net = net44();
        let mut phase = net.phase("p").unwrap();
        phase.exchange(0, 4, buf(1)).unwrap();
        phase.exchange(4, 0, buf(2)).unwrap();
        assert!(matches!(phase.complete(), Err(Error::Protocol { .. })));
    }

    #[test]
    fn phase_labels_are_unique() {
        let mut net = net44();
        net.phase("p").unwrap().complete().unwrap();
        assert!(net.phase("p").is_err());
        assert!(net.phase("a,b").is_err());
    }

    #[test]
    fn empty_trace_summary() {
        let s = summarize(&[]);
        assert_eq!(s, TraceSummary::default());
        assert_eq!(s.max_internode_msgs_per_rank, 0);
    }

    #[test]
    fn summary_totals_match_records() {
        let mut net = net44();
        let mut phase = net.phase("a").unwrap();
        phase.exchange(0, 4, buf(2)).unwrap();
        phase.exchange(4, 0, buf(2)).unwrap();
        phase.send_oneway(1, 2, buf(3)).unwrap();
        phase.recv_oneway(2, 1).unwrap();
        phase.complete().unwrap();
        let s = summarize(net.records());
        assert_eq!(s.total_internode_bytes, 32);
        assert_eq!(s.total_intranode_bytes, 24);
        assert_eq!(s.internode_msgs(0), 1);
        assert_eq!(s.intranode_msgs(1), 1);
        assert_eq!(s.internode_step_count, 1);
        assert_eq!(s.phase_count, 1);
        assert_eq!(summarize(&s.records), s);
    }

    #[test]
    fn csv_layout() {
        let records = vec![MessageRecord {
            step_label: "rd/0".into(),
            src: 1,
            dst: 0,
            bytes: 8,
            locality: Locality::IntraSocket,
        }];
        let mut out = Vec::new();
        write_trace_csv(&records, &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "phase,src,dst,bytes,locality\nrd/0,1,0,8,intra_socket\n"
        );
    }
}
