//! Closed intervals and axis-aligned boxes.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    #[inline]
    pub const fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    #[inline]
    pub const fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    pub const ENTIRE: Interval = Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY };

    #[inline]
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    #[inline]
    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    #[inline]
    pub fn clamp(&self, x: f64) -> f64 {
        x.max(self.lo).min(self.hi)
    }

    /// Smallest interval containing both.
    #[inline]
    pub fn hull(&self, other: &Interval) -> Interval {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }

    /// Intersection; if the two are disjoint (only possible through roundoff
    /// when both enclose the same quantity) the hull of the gap is returned.
    #[inline]
    pub fn intersect(&self, other: &Interval) -> Interval {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        if lo <= hi {
            Interval::new(lo, hi)
        } else {
            Interval::new(hi, lo)
        }
    }

    #[inline]
    pub fn add(&self, other: &Interval) -> Interval {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    /// `self * c` for a scalar.
    #[inline]
    pub fn scale(&self, c: f64) -> Interval {
        if c >= 0.0 {
            Interval::new(self.lo * c, self.hi * c)
        } else {
            Interval::new(self.hi * c, self.lo * c)
        }
    }

    #[inline]
    pub fn shift(&self, c: f64) -> Interval {
        Interval::new(self.lo + c, self.hi + c)
    }

    /// Widens by `eps` on both sides.
    #[inline]
    pub fn widen(&self, eps: f64) -> Interval {
        Interval::new(self.lo - eps, self.hi + eps)
    }
}

/// Axis-aligned closed box `[lo, hi]` in ℝⁿ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Region {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::Dimension { expected: lo.len(), got: hi.len() });
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("region bounds must satisfy lo <= hi".into()));
        }
        Ok(Region { lo, hi })
    }

    pub fn from_intervals(iv: &[Interval]) -> Self {
        Region { lo: iv.iter().map(|i| i.lo).collect(), hi: iv.iter().map(|i| i.hi).collect() }
    }

    pub fn point(x: &[f64]) -> Self {
        Region { lo: x.to_vec(), hi: x.to_vec() }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    #[inline]
    pub fn interval(&self, j: usize) -> Interval {
        Interval::new(self.lo[j], self.hi[j])
    }

    pub fn intervals(&self) -> Vec<Interval> {
        (0..self.dim()).map(|j| self.interval(j)).collect()
    }

    #[inline]
    pub fn width(&self, j: usize) -> f64 {
        self.hi[j] - self.lo[j]
    }

    pub fn center(&self) -> Vec<f64> {
        self.lo.iter().zip(&self.hi).map(|(a, b)| 0.5 * (a + b)).collect()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|j| self.width(j)).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim() && x.iter().enumerate().all(|(j, &v)| self.lo[j] <= v && v <= self.hi[j])
    }

    pub fn contains_region(&self, other: &Region) -> bool {
        (0..self.dim()).all(|j| self.lo[j] <= other.lo[j] && other.hi[j] <= self.hi[j])
    }

    /// True if the interiors overlap.
    pub fn overlaps_interior(&self, other: &Region) -> bool {
        (0..self.dim()).all(|j| self.lo[j] < other.hi[j] && other.lo[j] < self.hi[j])
    }

    /// Halves the box along `dim`.
    pub fn split_half(&self, dim: usize) -> (Region, Region) {
        let mid = 0.5 * (self.lo[dim] + self.hi[dim]);
        self.split_at(dim, mid)
    }

    pub fn split_at(&self, dim: usize, at: f64) -> (Region, Region) {
        let mut left = self.clone();
        let mut right = self.clone();
        left.hi[dim] = at;
        right.lo[dim] = at;
        (left, right)
    }

    /// Uniform sample from the box.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim())
            .map(|j| {
                let (a, b) = (self.lo[j], self.hi[j]);
                if a == b {
                    a
                } else {
                    a + (b - a) * rng.random::<f64>()
                }
            })
            .collect()
    }

    /// Largest distance from `x` to a point of the box.
    pub fn max_dist_sq(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|j| {
                let d = (x[j] - self.lo[j]).abs().max((x[j] - self.hi[j]).abs());
                d * d
            })
            .sum()
    }

    /// Smallest distance from `x` to the box (zero inside).
    pub fn min_dist_sq(&self, x: &[f64]) -> f64 {
        (0..self.dim())
            .map(|j| {
                let c = x[j].max(self.lo[j]).min(self.hi[j]);
                (x[j] - c) * (x[j] - c)
            })
            .sum()
    }
}
