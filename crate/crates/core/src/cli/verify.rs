//! Batch property runner behind `napcoll verify`.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::buffer::{ElementKind, ReduceOp, ReductionBuffer};
use crate::collectives::{nap_message_profile, run_nap_with, Algorithm, CollectiveResult};
use crate::costmodel::{
    maxrate_cost, model_rd, model_smp, nap_internode_terms, split_cost, CommVolume, CostParams,
};
use crate::error::Result;
use crate::inputs::seeded_inputs;
use crate::topology::{
    ceil_log, nap_partner, step_geometry, ClusterShape, NapLayout, PartnerAction, PartnerFn,
};

use super::{serial_fold, EXIT_FAILURE, EXIT_OK, EXIT_USAGE};

const PPN_CHOICES: [usize; 5] = [1, 2, 4, 8, 16];
const OPS: [ReduceOp; 3] = [ReduceOp::Sum, ReduceOp::Max, ReduceOp::Min];
const PARTNER_RANK_LIMIT: usize = 65_536;
const MODEL_SAMPLES: usize = 1_000;

#[derive(Clone, Copy)]
pub struct VerifyConfig {
    /// Largest rank count simulated with payloads.
    pub max_ranks: usize,
    pub partner: PartnerFn,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            max_ranks: 4096,
            partner: nap_partner,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PropertyOutcome {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

struct Check {
    name: &'static str,
    cases: usize,
    failure: Option<String>,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            cases: 0,
            failure: None,
        }
    }

    /// Records one case; keeps the first failure message.
    fn case(&mut self, ok: bool, why: impl FnOnce() -> String) {
        self.cases += 1;
        if !ok && self.failure.is_none() {
            self.failure = Some(why());
        }
    }

    fn outcome(self) -> PropertyOutcome {
        match self.failure {
            None => PropertyOutcome {
                name: self.name,
                passed: true,
                detail: format!("{} cases", self.cases),
            },
            Some(why) => PropertyOutcome {
                name: self.name,
                passed: false,
                detail: why,
            },
        }
    }
}

fn run_alg(
    alg: Algorithm,
    inputs: &[ReductionBuffer],
    op: ReduceOp,
    shape: &ClusterShape,
    cfg: &VerifyConfig,
) -> Result<CollectiveResult> {
    match alg {
        Algorithm::Nap => run_nap_with(inputs, op, shape, cfg.partner),
        other => other.run(inputs, op, shape),
    }
}

/// Shapes of the correctness sweep: up to 16 nodes, within the rank limit.
fn sweep_shapes(cfg: &VerifyConfig) -> Vec<ClusterShape> {
    let mut shapes = Vec::new();
    for ppn in PPN_CHOICES {
        for n in 1..=16 {
            if n * ppn <= cfg.max_ranks {
                shapes.push(ClusterShape::new(n, ppn).expect("valid sweep shape"));
            }
        }
    }
    shapes
}

fn power_of_ppn_shapes(limit: usize) -> Vec<ClusterShape> {
    let mut shapes = Vec::new();
    for ppn in [2, 4, 8, 16] {
        let mut n = 1;
        while n * ppn <= limit {
            shapes.push(ClusterShape::new(n, ppn).expect("valid power shape"));
            n *= ppn;
        }
    }
    shapes
}

fn oracle_equivalence(cfg: &VerifyConfig) -> (PropertyOutcome, PropertyOutcome) {
    let mut equivalence = Check::new("oracle-equivalence");
    let mut agreement = Check::new("cross-algorithm-agreement");
    for shape in sweep_shapes(cfg) {
        for (i, op) in OPS.into_iter().enumerate() {
            for size in [1, 3] {
                let inputs =
                    seeded_inputs(shape.total_ranks(), size, ElementKind::I64, 17 + i as u64);
                let expected = serial_fold(&inputs, op).expect("non-empty inputs");
                let mut seen: Option<(Algorithm, Vec<ReductionBuffer>)> = None;
                for alg in Algorithm::ALL {
                    if alg.check_shape(&shape).is_err() {
                        continue;
                    }
                    match run_alg(alg, &inputs, op, &shape, cfg) {
                        Ok(result) => {
                            let bad = result.buffers.iter().position(|b| *b != expected);
                            equivalence.case(bad.is_none(), || {
                                format!("{alg} {op} on {shape}: rank {} differs", bad.unwrap())
                            });
                            if let Some((first, buffers)) = &seen {
                                agreement.case(*buffers == result.buffers, || {
                                    format!("{first} and {alg} disagree on {shape}")
                                });
                            } else {
                                seen = Some((alg, result.buffers));
                            }
                        }
                        Err(e) => equivalence.case(false, || format!("{alg} {op} on {shape}: {e}")),
                    }
                }
            }
        }
    }
    (equivalence.outcome(), agreement.outcome())
}

fn float_tolerance(cfg: &VerifyConfig) -> PropertyOutcome {
    let mut check = Check::new("float-tolerance");
    for shape in sweep_shapes(cfg) {
        let size = 3;
        let inputs = seeded_inputs(shape.total_ranks(), size, ElementKind::F64, 5);
        let expected = serial_fold(&inputs, ReduceOp::Sum).expect("non-empty inputs");
        let expected = expected.as_f64().expect("f64");
        let tolerance = (shape.total_ranks() * size) as f64 * 2f64.powi(-48);
        for alg in Algorithm::ALL {
            if alg.check_shape(&shape).is_err() {
                continue;
            }
            match run_alg(alg, &inputs, ReduceOp::Sum, &shape, cfg) {
                Ok(result) => {
                    let worst = result
                        .buffers
                        .iter()
                        .flat_map(|b| b.as_f64().expect("f64").iter().zip(expected))
                        .map(|(x, y)| (x - y).abs() / y.abs().max(f64::MIN_POSITIVE))
                        .fold(0.0, f64::max);
                    check.case(worst <= tolerance, || {
                        format!("{alg} on {shape}: relative error {worst:e} > {tolerance:e}")
                    });
                }
                Err(e) => check.case(false, || format!("{alg} on {shape}: {e}")),
            }
        }
    }
    check.outcome()
}

fn partner_structure(cfg: &VerifyConfig) -> Vec<PropertyOutcome> {
    let mut involution = Check::new("partner-involution");
    let mut partition = Check::new("partner-partition");
    let mut coverage = Check::new("partner-coverage");

    let mut shapes = power_of_ppn_shapes(PARTNER_RANK_LIMIT);
    for ppn in [2, 4, 8, 16] {
        for n in 1..=64 {
            let shape = ClusterShape::new(n, ppn).expect("valid shape");
            if !matches!(
                shape.nap_layout(),
                Ok(NapLayout::PowerOfPpn | NapLayout::SingleNode)
            ) {
                shapes.push(shape);
            }
        }
    }

    for shape in shapes {
        let power = matches!(shape.nap_layout(), Ok(NapLayout::PowerOfPpn));
        let steps = shape.nap_steps().expect("ppn >= 2");
        let p = shape.total_ranks();
        let ppn = shape.ppn();
        let mut nodes = UnionFind::new(shape.num_nodes());
        for step in 0..steps {
            let actions: Result<Vec<PartnerAction>> =
                (0..p).map(|r| (cfg.partner)(r, step, &shape)).collect();
            let actions = match actions {
                Ok(actions) => actions,
                Err(e) => {
                    involution.case(false, || format!("{shape} step {step}: {e}"));
                    continue;
                }
            };
            let mut idle_per_node = vec![0usize; shape.num_nodes()];
            let mut covered = vec![false; p];
            for (rank, action) in actions.iter().enumerate() {
                match action {
                    PartnerAction::Exchange(u) => {
                        let u = *u;
                        let mirrored = u < p && actions[u] == PartnerAction::Exchange(rank);
                        involution.case(mirrored, || {
                            format!("{shape} step {step}: rank {rank} -> {u} is not mirrored")
                        });
                        let remote = u < p && u / ppn != rank / ppn;
                        partition.case(remote, || {
                            format!("{shape} step {step}: rank {rank} pairs on-node with {u}")
                        });
                        if u < p {
                            covered[rank] = true;
                            nodes.union(rank / ppn, u / ppn);
                        }
                    }
                    PartnerAction::ExtraSendTo(targets) => {
                        involution.case(!power, || {
                            format!("{shape} step {step}: extra send on a power shape")
                        });
                        for &t in targets {
                            let mirrored =
                                t < p && actions[t] == PartnerAction::ExtraRecvFrom(rank);
                            involution.case(mirrored, || {
                                format!(
                                    "{shape} step {step}: extra send {rank} -> {t} is not mirrored"
                                )
                            });
                            if t < p {
                                nodes.union(rank / ppn, t / ppn);
                            }
                        }
                        covered[rank] = true;
                    }
                    PartnerAction::ExtraRecvFrom(s) => {
                        let s = *s;
                        let mirrored = s < p
                            && matches!(&actions[s], PartnerAction::ExtraSendTo(t) if t.contains(&rank));
                        involution.case(mirrored, || {
                            format!(
                                "{shape} step {step}: extra receive {s} -> {rank} is not mirrored"
                            )
                        });
                        covered[rank] = true;
                    }
                    PartnerAction::Idle => {
                        covered[rank] = true;
                        let local = rank % ppn;
                        if let Ok(geom) = step_geometry(rank, step, &shape) {
                            if local == geom.subgroup_index {
                                idle_per_node[rank / ppn] += 1;
                            }
                        }
                    }
                }
            }
            if power {
                partition.case(covered.iter().all(|&c| c), || {
                    format!("{shape} step {step}: ranks left out")
                });
                let bad_node = idle_per_node.iter().position(|&c| c != 1);
                partition.case(bad_node.is_none(), || {
                    format!(
                        "{shape} step {step}: node {} has {} idle ranks",
                        bad_node.unwrap(),
                        idle_per_node[bad_node.unwrap()]
                    )
                });
            }
        }
        coverage.case(nodes.components() == 1, || {
            format!("{shape}: node graph is disconnected")
        });
    }
    vec![
        involution.outcome(),
        partition.outcome(),
        coverage.outcome(),
    ]
}

fn message_counts(cfg: &VerifyConfig) -> Vec<PropertyOutcome> {
    let mut rd = Check::new("rd-message-counts");
    let mut smp = Check::new("smp-master-locality");
    let mut tree = Check::new("tree-phase-count");
    let mut nap = Check::new("nap-message-count");
    let mut monotone = Check::new("nap-monotonicity");
    let mut flops = Check::new("nap-flop-accounting");
    let mut consistency = Check::new("model-trace-consistency");

    let limit = cfg.max_ranks;
    let mut pow2 = Vec::new();
    for ppn in PPN_CHOICES {
        let mut n = 1;
        while n * ppn <= limit {
            pow2.push(ClusterShape::new(n, ppn).expect("valid shape"));
            n *= 2;
        }
    }
    for shape in &pow2 {
        let p = shape.total_ranks();
        let log2_n = shape.num_nodes().trailing_zeros() as usize;
        let inputs = seeded_inputs(p, 1, ElementKind::I64, 3);
        match Algorithm::RecursiveDoubling.run(&inputs, ReduceOp::Sum, shape) {
            Ok(r) => {
                let bad = (0..p).find(|&q| r.trace.internode_msgs(q) != log2_n);
                rd.case(bad.is_none(), || {
                    format!(
                        "{shape}: rank {} sends off-node {} times",
                        bad.unwrap(),
                        r.trace.internode_msgs(bad.unwrap())
                    )
                });
            }
            Err(e) => rd.case(false, || format!("{shape}: {e}")),
        }
        match Algorithm::Smp.run(&inputs, ReduceOp::Sum, shape) {
            Ok(r) => {
                let off_master = r
                    .trace
                    .internode_ranks()
                    .into_iter()
                    .find(|q| q % shape.ppn() != 0);
                smp.case(off_master.is_none(), || {
                    format!(
                        "{shape}: non-master rank {} crosses nodes",
                        off_master.unwrap()
                    )
                });
                let bad = (0..shape.num_nodes())
                    .find(|m| r.trace.internode_msgs(m * shape.ppn()) != log2_n);
                smp.case(bad.is_none(), || {
                    format!(
                        "{shape}: master of node {} has the wrong count",
                        bad.unwrap()
                    )
                });
            }
            Err(e) => smp.case(false, || format!("{shape}: {e}")),
        }
        match Algorithm::Tree.run(&inputs, ReduceOp::Sum, shape) {
            Ok(r) => {
                let want = 2 * p.trailing_zeros() as usize;
                tree.case(r.trace.phase_count == want, || {
                    format!("{shape}: {} phases, expected {want}", r.trace.phase_count)
                });
            }
            Err(e) => tree.case(false, || format!("{shape}: {e}")),
        }
    }

    // NAP: powers of ppn and divisible shapes, simulated and profiled.
    let mut nap_shapes = power_of_ppn_shapes(limit);
    for ppn in [2, 4, 8, 16] {
        for n in 2..=64 {
            let shape = ClusterShape::new(n, ppn).expect("valid shape");
            if shape.total_ranks() <= limit && shape.nap_layout().ok() == Some(NapLayout::Divisible)
            {
                nap_shapes.push(shape);
            }
        }
    }
    for shape in &nap_shapes {
        let steps = ceil_log(shape.num_nodes(), shape.ppn());
        let size = 2;
        let inputs = seeded_inputs(shape.total_ranks(), size, ElementKind::I64, 9);
        match run_nap_with(&inputs, ReduceOp::Sum, shape, cfg.partner) {
            Ok(r) => {
                nap.case(
                    r.trace.max_internode_msgs_per_rank == steps
                        && r.trace.internode_step_count == steps,
                    || {
                        format!(
                            "{shape}: max {} msgs over {} steps, expected {steps}",
                            r.trace.max_internode_msgs_per_rank, r.trace.internode_step_count
                        )
                    },
                );
                if shape.num_nodes() >= 2 {
                    let rd_steps = shape.num_nodes().next_power_of_two().trailing_zeros() as usize;
                    monotone.case(r.trace.internode_step_count <= rd_steps, || {
                        format!("{shape}: NAP needs more steps than RD")
                    });
                }
                if shape.nap_layout().ok() == Some(NapLayout::PowerOfPpn) || shape.num_nodes() == 1
                {
                    let log2_p = shape.total_ranks().trailing_zeros() as usize;
                    let want = size * (log2_p + steps);
                    flops.case(r.max_flops() == want, || {
                        format!("{shape}: {} flops, expected {want}", r.max_flops())
                    });
                    let terms = nap_internode_terms(shape.total_ranks(), shape.ppn()).ok();
                    consistency.case(terms == Some(r.trace.internode_step_count), || {
                        format!(
                            "{shape}: model terms {terms:?} vs trace {}",
                            r.trace.internode_step_count
                        )
                    });
                }
            }
            Err(e) => nap.case(false, || format!("{shape}: {e}")),
        }
    }
    let big = ClusterShape::new(4096, 16).expect("valid shape");
    match nap_message_profile(&big, cfg.partner) {
        Ok(profile) => nap.case(
            profile.internode_steps == 3 && profile.max_internode_msgs_per_rank() == 3,
            || {
                format!(
                    "{big}: {} steps, max {} msgs",
                    profile.internode_steps,
                    profile.max_internode_msgs_per_rank()
                )
            },
        ),
        Err(e) => nap.case(false, || format!("{big}: {e}")),
    }

    vec![
        rd.outcome(),
        smp.outcome(),
        tree.outcome(),
        nap.outcome(),
        monotone.outcome(),
        flops.outcome(),
        consistency.outcome(),
    ]
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn model_identities() -> Vec<PropertyOutcome> {
    let mut degeneration = Check::new("maxrate-degeneration");
    let mut dominance = Check::new("rd-vs-smp-model");
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..MODEL_SAMPLES {
        let ppn = 1usize << rng.gen_range(0..=5);
        let r_b = log_uniform(&mut rng, 1e8, 1e10);
        // Half the samples sit at or above ppn * R_b, half below.
        let ratio = if rng.gen_bool(0.5) {
            rng.gen_range(1.0..8.0)
        } else {
            rng.gen_range(0.05..0.95)
        };
        let params = CostParams {
            alpha_local: log_uniform(&mut rng, 1e-7, 1e-5),
            beta_local: log_uniform(&mut rng, 1e-11, 1e-8),
            alpha: log_uniform(&mut rng, 1e-7, 1e-4),
            r_b,
            r_n: ratio * ppn as f64 * r_b,
            gamma: log_uniform(&mut rng, 1e-12, 1e-8),
        };
        let volume = CommVolume {
            t: rng.gen_range(0..64) as f64,
            s: rng.gen_range(0..1 << 20) as f64,
            t_local: rng.gen_range(0..64) as f64,
            s_local: rng.gen_range(0..1 << 20) as f64,
            c: rng.gen_range(0..1 << 20) as f64,
            ppn_active: ppn as f64,
        };
        let unlimited = ppn as f64 * params.r_b <= params.r_n;
        if unlimited {
            let maxrate = maxrate_cost(&volume, &params).expect("ppn_active >= 1");
            degeneration.case(maxrate == split_cost(&volume, &params), || {
                format!("maxrate {maxrate:e} != split for {params:?}")
            });
        }

        let p = ppn << rng.gen_range(1..=10);
        let s = if rng.gen_bool(0.1) {
            0.0
        } else {
            rng.gen_range(1..1 << 16) as f64
        };
        let (rd, smp) = (
            model_rd(p, ppn, s, &params).expect("valid shape"),
            model_smp(p, ppn, s, &params).expect("valid shape"),
        );
        let equal_expected = s == 0.0 || unlimited;
        dominance.case(rd >= smp && (rd == smp) == equal_expected, || {
            format!("p={p} ppn={ppn} s={s}: rd {rd:e} smp {smp:e}")
        });
    }
    vec![degeneration.outcome(), dominance.outcome()]
}

fn determinism(cfg: &VerifyConfig) -> PropertyOutcome {
    let mut check = Check::new("trace-determinism");
    for (n, ppn) in [(4, 4), (5, 4), (12, 4), (16, 2)] {
        let shape = ClusterShape::new(n, ppn).expect("valid shape");
        if shape.total_ranks() > cfg.max_ranks {
            continue;
        }
        let inputs = seeded_inputs(shape.total_ranks(), 2, ElementKind::F64, 11);
        let a = run_nap_with(&inputs, ReduceOp::Sum, &shape, cfg.partner);
        let b = run_nap_with(&inputs, ReduceOp::Sum, &shape, cfg.partner);
        match (a, b) {
            (Ok(a), Ok(b)) => check.case(a == b, || format!("{shape}: runs differ")),
            (Err(e), _) | (_, Err(e)) => check.case(false, || format!("{shape}: {e}")),
        }
    }
    check.outcome()
}

/// Runs every property and returns one outcome per property.
pub fn run_suite(cfg: &VerifyConfig) -> Vec<PropertyOutcome> {
    let (equivalence, agreement) = oracle_equivalence(cfg);
    let mut outcomes = vec![equivalence, agreement, float_tolerance(cfg)];
    outcomes.extend(partner_structure(cfg));
    outcomes.extend(message_counts(cfg));
    outcomes.extend(model_identities());
    outcomes.push(determinism(cfg));
    outcomes
}

/// Pairs each rank with the first node of its partner's subgroup instead of
/// the position-matched node.
fn position_dropping_partner(
    rank: usize,
    step: usize,
    shape: &ClusterShape,
) -> Result<PartnerAction> {
    Ok(match nap_partner(rank, step, shape)? {
        PartnerAction::Exchange(u) => {
            let geom = step_geometry(u, step, shape)?;
            let node = u / shape.ppn() - geom.node_position;
            PartnerAction::Exchange(shape.rank_at(node, u % shape.ppn()))
        }
        other => other,
    })
}

pub(super) fn cmd_verify(
    max_ranks: usize,
    mutate: Option<&str>,
    out: &mut dyn Write,
) -> Result<u8> {
    let partner: PartnerFn = match mutate {
        None => nap_partner,
        Some("pairing") => position_dropping_partner,
        Some(other) => {
            writeln!(out, "unknown mutation {other:?}")?;
            return Ok(EXIT_USAGE);
        }
    };
    let outcomes = run_suite(&VerifyConfig { max_ranks, partner });
    for o in &outcomes {
        writeln!(
            out,
            "{:<4} {:<28} {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.detail
        )?;
    }
    Ok(if outcomes.iter().all(|o| o.passed) {
        EXIT_OK
    } else {
        EXIT_FAILURE
    })
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut x = x;
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a != b {
            self.parent[a] = b;
        }
    }

    fn components(&mut self) -> usize {
        (0..self.parent.len())
            .filter(|&x| self.find(x) == x)
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn union_find_counts_components() {
        let mut uf = UnionFind::new(5);
        uf.union(0, 1);
        uf.union(3, 4);
        assert_eq!(uf.components(), 3);
        uf.union(1, 4);
        assert_eq!(uf.components(), 2);
    }

    #[test]
    fn mutated_pairing_breaks_involution() {
        let cfg = VerifyConfig {
            max_ranks: 64,
            partner: position_dropping_partner,
        };
        let outcomes = partner_structure(&cfg);
        assert!(
            !outcomes
                .iter()
                .find(|o| o.name == "partner-involution")
                .unwrap()
                .passed
        );
    }
}
