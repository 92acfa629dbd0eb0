//! Hyperrectangle geometry over byte inputs.
//!
//! An [`InputRegion`] is a product of inclusive byte intervals. A
//! [`TotalOrder`] ranks the dimensions so that halving a region is
//! unambiguous: the highest-priority dimension that still has more than one
//! value is cut at its midpoint.

use std::fmt;

use num_bigint::BigUint;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive byte interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub lo: u8,
    pub hi: u8,
}

impl Interval {
    pub const FULL: Interval = Interval { lo: 0, hi: 255 };

    pub fn new(lo: u8, hi: u8) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidRegion(format!("interval [{lo}, {hi}] is empty")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn point(v: u8) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn width(&self) -> u32 {
        u32::from(self.hi) - u32::from(self.lo) + 1
    }

    pub fn contains(&self, v: u8) -> bool {
        self.lo <= v && v <= self.hi
    }
}

/// A concrete program input: one byte per dimension.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ByteInput(pub Vec<u8>);

impl ByteInput {
    pub fn new(bytes: Vec<u8>) -> Self {
        ByteInput(bytes)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl From<Vec<u8>> for ByteInput {
    fn from(v: Vec<u8>) -> Self {
        ByteInput(v)
    }
}

impl fmt::Display for ByteInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|b| b.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// Priority over input dimensions, highest priority first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TotalOrder {
    priority: Vec<usize>,
}

impl TotalOrder {
    /// Validates that `priority` is a permutation of `0..priority.len()`.
    pub fn new(priority: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; priority.len()];
        for &dim in &priority {
            if dim >= priority.len() || seen[dim] {
                return Err(Error::InvalidOrder(format!("{priority:?} is not a permutation")));
            }
            seen[dim] = true;
        }
        Ok(TotalOrder { priority })
    }

    /// Byte 0 first, then byte 1, and so on.
    pub fn lexicographic(dims: usize) -> Self {
        TotalOrder { priority: (0..dims).collect() }
    }

    pub fn priority(&self) -> &[usize] {
        &self.priority
    }

    pub fn dims(&self) -> usize {
        self.priority.len()
    }

    /// Sort key of an input under this order.
    pub fn key(&self, input: &ByteInput) -> Vec<u8> {
        self.priority.iter().map(|&j| input.0[j]).collect()
    }
}

impl fmt::Display for TotalOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.priority.iter().map(|d| d.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A d-dimensional byte hyperrectangle.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputRegion {
    intervals: Vec<Interval>,
}

impl InputRegion {
    pub fn new(intervals: Vec<Interval>) -> Result<Self> {
        if intervals.is_empty() {
            return Err(Error::InvalidRegion("region needs at least one dimension".into()));
        }
        if let Some(bad) = intervals.iter().find(|iv| iv.lo > iv.hi) {
            return Err(Error::InvalidRegion(format!("interval [{}, {}] is empty", bad.lo, bad.hi)));
        }
        Ok(InputRegion { intervals })
    }

    /// `[0,255]^dims`.
    pub fn full(dims: usize) -> Self {
        InputRegion { intervals: vec![Interval::FULL; dims] }
    }

    /// The region holding exactly `input`.
    pub fn singleton(input: &ByteInput) -> Self {
        InputRegion { intervals: input.0.iter().map(|&b| Interval::point(b)).collect() }
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn dims(&self) -> usize {
        self.intervals.len()
    }

    pub fn cardinality(&self) -> BigUint {
        self.intervals.iter().fold(BigUint::from(1u32), |acc, iv| acc * iv.width())
    }

    /// `log2(cardinality)`, exact when every width is a power of two.
    pub fn log2_cardinality(&self) -> f64 {
        self.intervals.iter().map(|iv| f64::from(iv.width()).log2()).sum()
    }

    pub fn is_singleton(&self) -> bool {
        self.intervals.iter().all(|iv| iv.lo == iv.hi)
    }

    pub fn contains(&self, input: &ByteInput) -> bool {
        input.len() == self.dims() && self.intervals.iter().zip(&input.0).all(|(iv, &b)| iv.contains(b))
    }

    /// Lowest input of the region (each dimension at its lower bound).
    pub fn min_input(&self) -> ByteInput {
        ByteInput(self.intervals.iter().map(|iv| iv.lo).collect())
    }

    /// Highest input of the region (each dimension at its upper bound).
    pub fn max_input(&self) -> ByteInput {
        ByteInput(self.intervals.iter().map(|iv| iv.hi).collect())
    }

    /// Halves the region along the highest-priority dimension that is not
    /// degenerate. The left half keeps the midpoint `(lo + hi) / 2`.
    pub fn split_half(&self, order: &TotalOrder) -> Result<(InputRegion, InputRegion)> {
        if order.dims() != self.dims() {
            return Err(Error::InvalidOrder(format!(
                "order has {} dimensions, region has {}",
                order.dims(),
                self.dims()
            )));
        }
        let dim = order
            .priority()
            .iter()
            .copied()
            .find(|&j| self.intervals[j].lo < self.intervals[j].hi)
            .ok_or(Error::SingletonRegion)?;
        let Interval { lo, hi } = self.intervals[dim];
        let mid = ((u16::from(lo) + u16::from(hi)) / 2) as u8;
        let mut left = self.clone();
        let mut right = self.clone();
        left.intervals[dim] = Interval { lo, hi: mid };
        right.intervals[dim] = Interval { lo: mid + 1, hi };
        Ok((left, right))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ByteInput {
        ByteInput(self.intervals.iter().map(|iv| rng.gen_range(iv.lo..=iv.hi)).collect())
    }

    /// Draws `k` independent uniform inputs. A seed lying inside the region
    /// takes slot 0 so the batch size stays `k`.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, seed: Option<&ByteInput>) -> Vec<ByteInput> {
        let mut out: Vec<ByteInput> = (0..k).map(|_| self.sample(rng)).collect();
        if let Some(seed) = seed {
            if k > 0 && self.contains(seed) {
                out[0] = seed.clone();
            }
        }
        out
    }

    /// Every input of the region in lexicographic byte order. Only sensible
    /// for small regions.
    pub fn enumerate(&self) -> impl Iterator<Item = ByteInput> + '_ {
        let total: u64 = self.intervals.iter().map(|iv| u64::from(iv.width())).product();
        (0..total).map(move |mut idx| {
            let mut bytes = vec![0u8; self.dims()];
            for (j, iv) in self.intervals.iter().enumerate().rev() {
                let w = u64::from(iv.width());
                bytes[j] = iv.lo + (idx % w) as u8;
                idx /= w;
            }
            ByteInput(bytes)
        })
    }
}

impl fmt::Display for InputRegion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.intervals.iter().map(|iv| format!("[{},{}]", iv.lo, iv.hi)).collect();
        write!(f, "{}", parts.join("x"))
    }
}
