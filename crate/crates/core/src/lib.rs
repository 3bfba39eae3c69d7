//! Simulation of allreduce collectives over a modeled multi-node cluster.
//!
//! Four algorithms are provided (binomial tree, recursive doubling, the
//! master-per-node SMP scheme and the node-aware parallel "NAP" scheme).
//! Every algorithm runs as a set of lock-step rank programs over
//! [`simnet::SimNet`], which records each message together with its
//! locality class. The [`costmodel`] module evaluates the postal, split and
//! max-rate models along with closed-form costs for RD, SMP and NAP.

pub mod buffer;
pub mod cli;
pub mod collectives;
pub mod costmodel;
pub mod error;
pub mod inputs;
pub mod simnet;
pub mod topology;

pub use buffer::{ElementKind, Elements, ReduceOp, ReductionBuffer};
pub use collectives::{Algorithm, CollectiveResult};
pub use costmodel::{CommVolume, CostParams};
pub use error::{Error, Result};
pub use simnet::{Locality, MessageRecord, SimNet, TraceSummary};
pub use topology::{ClusterShape, PartnerAction, RankCoord, StepGeometry};
