//! Analytic communication cost models.
//!
//! Three generic models price a [`CommVolume`]: the postal model, the split
//! model with separate intra-node terms, and the max-rate model that caps a
//! node's aggregate inter-node bandwidth at its injection rate. Closed forms
//! for recursive doubling, SMP and NAP are built on the same terms.

use std::fs;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::topology::{ceil_log, exact_log2};

/// Model parameters in SI units (seconds, bytes/second, seconds/flop).
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    /// Intra-node per-message startup.
    pub alpha_local: f64,
    /// Intra-node per-byte cost.
    pub beta_local: f64,
    /// Inter-node per-message startup.
    pub alpha: f64,
    /// Inter-process bandwidth; the inter-node per-byte cost is its inverse.
    #[serde(rename = "R_b")]
    pub r_b: f64,
    /// Per-node injection bandwidth.
    #[serde(rename = "R_N")]
    pub r_n: f64,
    pub gamma: f64,
}

impl CostParams {
    /// Illustrative values for smoke tests. These are not measurements.
    pub const ILLUSTRATIVE: CostParams = CostParams {
        alpha_local: 5e-7,
        beta_local: 2.5e-10,
        alpha: 3e-6,
        r_b: 1e9,
        r_n: 4e9,
        gamma: 1e-10,
    };

    pub fn validate(self) -> Result<Self> {
        let fields = [
            ("alpha_local", self.alpha_local),
            ("beta_local", self.beta_local),
            ("alpha", self.alpha),
            ("R_b", self.r_b),
            ("R_N", self.r_n),
            ("gamma", self.gamma),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::Params(format!(
                    "{name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(self)
    }

    /// True when intra-node messages start faster than inter-node ones.
    pub fn local_startup_is_cheaper(&self) -> bool {
        self.alpha_local <= self.alpha
    }

    /// Parses a flat `key = value` file. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let params: CostParams =
            toml::from_str(text).map_err(|e| Error::Params(e.message().to_string()))?;
        params.validate()
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn beta(&self) -> f64 {
        1.0 / self.r_b
    }

    /// Per-message inter-node transfer time when `ppn` ranks per node
    /// inject `bytes` each. Equals `bytes / R_b` whenever
    /// `ppn * R_b <= R_N`.
    pub fn injection_limited_transfer(&self, ppn: f64, bytes: f64) -> f64 {
        if ppn * self.r_b <= self.r_n {
            bytes / self.r_b
        } else {
            ppn * bytes / self.r_n
        }
    }
}

/// Counts of one communication pattern. Byte and flop counts are totals.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CommVolume {
    pub t: f64,
    pub s: f64,
    pub t_local: f64,
    pub s_local: f64,
    pub c: f64,
    pub ppn_active: f64,
}

/// `alpha * t + s / R_b + gamma * c`, pricing intra-node traffic as inter-node.
pub fn postal_cost(v: &CommVolume, params: &CostParams) -> f64 {
    params.alpha * (v.t + v.t_local) + (v.s + v.s_local) / params.r_b + params.gamma * v.c
}

pub fn split_cost(v: &CommVolume, params: &CostParams) -> f64 {
    params.alpha_local * v.t_local
        + params.beta_local * v.s_local
        + params.alpha * v.t
        + v.s / params.r_b
        + params.gamma * v.c
}

pub fn maxrate_cost(v: &CommVolume, params: &CostParams) -> Result<f64> {
    if v.ppn_active < 1.0 {
        return Err(Error::Validation(format!(
            "ppn_active must be at least 1, got {}",
            v.ppn_active
        )));
    }
    Ok(params.alpha_local * v.t_local
        + params.beta_local * v.s_local
        + params.alpha * v.t
        + params.injection_limited_transfer(v.ppn_active, v.s)
        + params.gamma * v.c)
}

/// Logarithms of a model cell.
#[derive(Debug, Clone, Copy, PartialEq)]
struct ModelShape {
    ppn: f64,
    log2_p: f64,
    log2_ppn: f64,
    log2_n: f64,
    log_ppn_n: f64,
}

impl ModelShape {
    fn new(p: usize, ppn: usize) -> Result<Self> {
        let invalid = |why: &str| Error::InvalidShape(format!("p = {p}, ppn = {ppn}: {why}"));
        let log2_p = exact_log2(p).ok_or_else(|| invalid("p must be a power of two"))?;
        let log2_ppn = exact_log2(ppn).ok_or_else(|| invalid("ppn must be a power of two"))?;
        if ppn > p {
            return Err(invalid("ppn must divide p"));
        }
        let n = p / ppn;
        // log_ppn(n) rounds up to the next power of ppn; ppn = 1 has no node-aware steps.
        let log_ppn_n = if ppn >= 2 { ceil_log(n, ppn) } else { 0 };
        Ok(Self {
            ppn: ppn as f64,
            log2_p: log2_p as f64,
            log2_ppn: log2_ppn as f64,
            log2_n: (log2_p - log2_ppn) as f64,
            log_ppn_n: log_ppn_n as f64,
        })
    }
}

/// Recursive doubling: every rank of a node crosses the network `log2(n)` times.
pub fn model_rd(p: usize, ppn: usize, s_bytes: f64, params: &CostParams) -> Result<f64> {
    let m = ModelShape::new(p, ppn)?;
    Ok(
        (params.alpha_local + params.beta_local * s_bytes) * m.log2_ppn
            + (params.alpha + params.injection_limited_transfer(m.ppn, s_bytes)) * m.log2_n
            + params.gamma * s_bytes * m.log2_p,
    )
}

/// SMP: one master per node, so inter-node messages see the full `R_b`.
pub fn model_smp(p: usize, ppn: usize, s_bytes: f64, params: &CostParams) -> Result<f64> {
    let m = ModelShape::new(p, ppn)?;
    Ok(
        (params.alpha_local + params.beta_local * s_bytes) * m.log2_ppn
            + (params.alpha + s_bytes / params.r_b) * m.log2_n
            + params.gamma * s_bytes * m.log2_p,
    )
}

/// NAP: `log2(p)` intra-node levels and `log_ppn(n)` inter-node steps.
pub fn model_nap(p: usize, ppn: usize, s_bytes: f64, params: &CostParams) -> Result<f64> {
    let m = ModelShape::new(p, ppn)?;
    Ok(
        (params.alpha_local + params.beta_local * s_bytes) * m.log2_p
            + (params.alpha + params.injection_limited_transfer(m.ppn, s_bytes)) * m.log_ppn_n
            + params.gamma * s_bytes * (m.log2_p + m.log_ppn_n),
    )
}

/// Inter-node terms in the NAP closed form.
pub fn nap_internode_terms(p: usize, ppn: usize) -> Result<usize> {
    Ok(ModelShape::new(p, ppn)?.log_ppn_n as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelAlgorithm {
    Nap,
    Rd,
    Smp,
}

impl ModelAlgorithm {
    /// In name order, which is also sweep row order.
    pub const ALL: [ModelAlgorithm; 3] =
        [ModelAlgorithm::Nap, ModelAlgorithm::Rd, ModelAlgorithm::Smp];

    pub fn name(self) -> &'static str {
        match self {
            ModelAlgorithm::Nap => "nap",
            ModelAlgorithm::Rd => "rd",
            ModelAlgorithm::Smp => "smp",
        }
    }

    pub fn evaluate(self, p: usize, ppn: usize, s_bytes: f64, params: &CostParams) -> Result<f64> {
        match self {
            ModelAlgorithm::Nap => model_nap(p, ppn, s_bytes, params),
            ModelAlgorithm::Rd => model_rd(p, ppn, s_bytes, params),
            ModelAlgorithm::Smp => model_smp(p, ppn, s_bytes, params),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub p: usize,
    pub ppn: usize,
    pub s_bytes: usize,
    pub algorithm: ModelAlgorithm,
    pub seconds: f64,
}

pub const SWEEP_CSV_HEADER: &str = "p,ppn,s_bytes,algorithm,model_seconds";

/// Evaluates every model on the grid. Rows come out ordered by `p`, then
/// `ppn`, then `s`, then algorithm name; grid order does not matter.
pub fn sweep(
    algorithms: &[ModelAlgorithm],
    p_grid: &[usize],
    ppn_grid: &[usize],
    s_grid: &[usize],
    params: &CostParams,
) -> Result<Vec<SweepRow>> {
    if algorithms.is_empty() || p_grid.is_empty() || ppn_grid.is_empty() || s_grid.is_empty() {
        return Err(Error::Validation("sweep grids must be non-empty".into()));
    }
    let sorted = |grid: &[usize]| {
        let mut v = grid.to_vec();
        v.sort_unstable();
        v.dedup();
        v
    };
    let mut algorithms = algorithms.to_vec();
    algorithms.sort_by_key(|a| a.name());
    algorithms.dedup();

    let mut rows = Vec::new();
    for &p in &sorted(p_grid) {
        for &ppn in &sorted(ppn_grid) {
            for &s in &sorted(s_grid) {
                for &algorithm in &algorithms {
                    rows.push(SweepRow {
                        p,
                        ppn,
                        s_bytes: s,
                        algorithm,
                        seconds: algorithm.evaluate(p, ppn, s as f64, params)?,
                    });
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{:e}",
            r.p,
            r.ppn,
            r.s_bytes,
            r.algorithm.name(),
            r.seconds
        )?;
    }
    out.flush()
}

/// Finds the reduction size where `model_smp` overtakes `model_nap` by
/// bisection on `[lo, hi]` bytes. Returns `None` when NAP is not cheaper at
/// `lo` or not more expensive at `hi`.
pub fn nap_smp_crossover(
    p: usize,
    ppn: usize,
    lo: f64,
    hi: f64,
    params: &CostParams,
) -> Result<Option<f64>> {
    let gap = |s: f64| -> Result<f64> {
        Ok(model_nap(p, ppn, s, params)? - model_smp(p, ppn, s, params)?)
    };
    let (mut lo, mut hi) = (lo, hi);
    if gap(lo)? >= 0.0 || gap(hi)? <= 0.0 {
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-9 * hi {
            break;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}
