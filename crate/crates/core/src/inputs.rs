//! Seeded input generator for reproducible runs.

use crate::buffer::{ElementKind, ReductionBuffer};

const MODULUS: u64 = 1 << 31;

/// Element `j` of rank `r` is `(seed ^ r ^ j) mod 2^31`; the float variant
/// divides that integer by `2^31`.
pub fn seeded_value(seed: u64, rank: usize, index: usize) -> i64 {
    ((seed ^ rank as u64 ^ index as u64) % MODULUS) as i64
}

pub fn seeded_inputs(
    ranks: usize,
    size: usize,
    kind: ElementKind,
    seed: u64,
) -> Vec<ReductionBuffer> {
    (0..ranks)
        .map(|rank| {
            let values = (0..size).map(|j| seeded_value(seed, rank, j));
            match kind {
                ElementKind::I64 => ReductionBuffer::from_i64(values.collect()),
                ElementKind::F64 => {
                    ReductionBuffer::from_f64(values.map(|v| v as f64 / MODULUS as f64).collect())
                }
            }
        })
        .collect()
}
