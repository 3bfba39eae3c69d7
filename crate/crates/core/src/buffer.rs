//! Reduction payloads and elementwise operators.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    I64,
    F64,
}

impl ElementKind {
    pub fn width(self) -> usize {
        8
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i64" | "int64" => Ok(Self::I64),
            "f64" | "float64" => Ok(Self::F64),
            other => Err(Error::Validation(format!("unknown element kind {other:?}"))),
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementKind::I64 => "i64",
            ElementKind::F64 => "f64",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Elements {
    I64(Vec<i64>),
    F64(Vec<f64>),
}

/// The `s`-element payload contributed by one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct ReductionBuffer {
    elements: Elements,
}

impl ReductionBuffer {
    pub fn from_i64(values: Vec<i64>) -> Self {
        Self {
            elements: Elements::I64(values),
        }
    }

    pub fn from_f64(values: Vec<f64>) -> Self {
        Self {
            elements: Elements::F64(values),
        }
    }

    /// A buffer of `len` copies of the identity of `op`.
    pub fn identity(kind: ElementKind, len: usize, op: ReduceOp) -> Self {
        match kind {
            ElementKind::I64 => Self::from_i64(vec![op.identity_i64(); len]),
            ElementKind::F64 => Self::from_f64(vec![op.identity_f64(); len]),
        }
    }

    pub fn elements(&self) -> &Elements {
        &self.elements
    }

    pub fn as_i64(&self) -> Option<&[i64]> {
        match &self.elements {
            Elements::I64(v) => Some(v),
            Elements::F64(_) => None,
        }
    }

    pub fn as_f64(&self) -> Option<&[f64]> {
        match &self.elements {
            Elements::F64(v) => Some(v),
            Elements::I64(_) => None,
        }
    }

    pub fn element_kind(&self) -> ElementKind {
        match self.elements {
            Elements::I64(_) => ElementKind::I64,
            Elements::F64(_) => ElementKind::F64,
        }
    }

    pub fn element_width(&self) -> usize {
        self.element_kind().width()
    }

    pub fn len(&self) -> usize {
        match &self.elements {
            Elements::I64(v) => v.len(),
            Elements::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Payload size on the wire; no header is modeled.
    pub fn byte_len(&self) -> usize {
        self.len() * self.element_width()
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.element_kind() == other.element_kind() && self.len() == other.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReduceOp {
    Sum,
    Max,
    Min,
}

impl ReduceOp {
    pub fn identity_i64(self) -> i64 {
        match self {
            ReduceOp::Sum => 0,
            ReduceOp::Max => i64::MIN,
            ReduceOp::Min => i64::MAX,
        }
    }

    pub fn identity_f64(self) -> f64 {
        match self {
            ReduceOp::Sum => 0.0,
            ReduceOp::Max => f64::NEG_INFINITY,
            ReduceOp::Min => f64::INFINITY,
        }
    }

    /// Integer sums wrap on overflow.
    pub fn apply_i64(self, a: i64, b: i64) -> i64 {
        match self {
            ReduceOp::Sum => a.wrapping_add(b),
            ReduceOp::Max => a.max(b),
            ReduceOp::Min => a.min(b),
        }
    }

    pub fn apply_f64(self, a: f64, b: f64) -> f64 {
        match self {
            ReduceOp::Sum => a + b,
            ReduceOp::Max => a.max(b),
            ReduceOp::Min => a.min(b),
        }
    }

    /// `first ⊕ second`, elementwise, in that operand order.
    pub fn combine(
        self,
        first: &ReductionBuffer,
        second: &ReductionBuffer,
    ) -> Result<ReductionBuffer> {
        match (&first.elements, &second.elements) {
            (Elements::I64(a), Elements::I64(b)) if a.len() == b.len() => {
                Ok(ReductionBuffer::from_i64(
                    a.iter()
                        .zip(b)
                        .map(|(&x, &y)| self.apply_i64(x, y))
                        .collect(),
                ))
            }
            (Elements::F64(a), Elements::F64(b)) if a.len() == b.len() => {
                Ok(ReductionBuffer::from_f64(
                    a.iter()
                        .zip(b)
                        .map(|(&x, &y)| self.apply_f64(x, y))
                        .collect(),
                ))
            }
            _ => Err(Error::Validation(format!(
                "cannot combine {} x {} with {} x {}",
                first.len(),
                first.element_kind(),
                second.len(),
                second.element_kind()
            ))),
        }
    }
}

impl FromStr for ReduceOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sum" => Ok(Self::Sum),
            "max" => Ok(Self::Max),
            "min" => Ok(Self::Min),
            other => Err(Error::Validation(format!("unknown reduce op {other:?}"))),
        }
    }
}

impl fmt::Display for ReduceOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReduceOp::Sum => "sum",
            ReduceOp::Max => "max",
            ReduceOp::Min => "min",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combine_elementwise() {
        let a = ReductionBuffer::from_i64(vec![1, 5, -3]);
        let b = ReductionBuffer::from_i64(vec![4, 2, 7]);
        assert_eq!(
            ReduceOp::Sum.combine(&a, &b).unwrap().as_i64().unwrap(),
            &[5, 7, 4]
        );
        assert_eq!(
            ReduceOp::Max.combine(&a, &b).unwrap().as_i64().unwrap(),
            &[4, 5, 7]
        );
        assert_eq!(
            ReduceOp::Min.combine(&a, &b).unwrap().as_i64().unwrap(),
            &[1, 2, -3]
        );
    }

    #[test]
    fn identity_is_neutral() {
        let a = ReductionBuffer::from_f64(vec![0.25, -1.5]);
        for op in [ReduceOp::Sum, ReduceOp::Max, ReduceOp::Min] {
            let id = ReductionBuffer::identity(ElementKind::F64, 2, op);
            assert_eq!(op.combine(&id, &a).unwrap(), a);
        }
    }

    #[test]
    fn mismatched_layouts_are_rejected() {
        let a = ReductionBuffer::from_i64(vec![1, 2]);
        assert!(ReduceOp::Sum
            .combine(&a, &ReductionBuffer::from_i64(vec![1]))
            .is_err());
        assert!(ReduceOp::Sum
            .combine(&a, &ReductionBuffer::from_f64(vec![1.0, 2.0]))
            .is_err());
    }

    #[test]
    fn byte_len_is_count_times_width() {
        assert_eq!(ReductionBuffer::from_f64(vec![0.0; 3]).byte_len(), 24);
        assert!(ReductionBuffer::from_i64(vec![]).is_empty());
    }

    #[test]
    fn parse_names() {
        assert_eq!("max".parse::<ReduceOp>().unwrap(), ReduceOp::Max);
        assert_eq!("f64".parse::<ElementKind>().unwrap(), ElementKind::F64);
        assert!("avg".parse::<ReduceOp>().is_err());
    }
}
