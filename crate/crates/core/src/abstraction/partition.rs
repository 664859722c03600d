//! Grid partitions of the domain that respect labeled regions.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{LabelMap, LabelSet};
use crate::error::{Error, Result};
use crate::geometry::{Interval, Region};

/// What to do with a grid cell that a labeled region only partly covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AlignPolicy {
    /// Split the cell along the region boundary.
    #[default]
    Split,
    /// Fail with [`Error::Misaligned`].
    Reject,
}

/// Boundaries closer than this (relative to the domain width) count as aligned.
pub const SNAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub region: Region,
    pub labels: LabelSet,
}

/// Cells covering the domain with disjoint interiors. Every cell lies inside
/// one cell of a uniform base grid, which is used for point location.
/// The unsafe state `q_u` has index [`Partition::unsafe_state`].
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    domain: Region,
    grid: Vec<usize>,
    props: Vec<String>,
    cells: Vec<Cell>,
    /// Cells inside each base-grid cell.
    base: Vec<Vec<usize>>,
    /// Base-grid cell of each cell.
    home: Vec<usize>,
}

impl Partition {
    /// Uniform grid with `grid[j]` cells along dimension `j`; base cells that
    /// a labeled region cuts are split along its boundary (or rejected).
    pub fn build(domain: &Region, labels: &LabelMap, grid: &[usize], policy: AlignPolicy) -> Result<Self> {
        if grid.len() != domain.dim() {
            return Err(Error::Dimension { expected: domain.dim(), got: grid.len() });
        }
        if grid.contains(&0) {
            return Err(Error::InvalidArgument("grid needs at least one cell per dimension".into()));
        }
        let total: usize = grid.iter().product();
        let tol: Vec<f64> = (0..domain.dim()).map(|j| SNAP_TOL * domain.width(j)).collect();
        let mut p = Partition {
            domain: domain.clone(),
            grid: grid.to_vec(),
            props: labels.props.clone(),
            cells: Vec::with_capacity(total),
            base: Vec::with_capacity(total),
            home: Vec::with_capacity(total),
        };
        let mut pieces = Vec::new();
        for b in 0..total {
            let region = p.base_region(b);
            pieces.clear();
            split_for_labels(region, labels, &tol, policy, &mut pieces)?;
            let mut leaves = Vec::with_capacity(pieces.len());
            for piece in pieces.drain(..) {
                let l = labels_with_tol(labels, &piece, &tol);
                leaves.push(p.cells.len());
                p.cells.push(Cell { region: piece, labels: l });
                p.home.push(b);
            }
            p.base.push(leaves);
        }
        Ok(p)
    }

    fn base_region(&self, b: usize) -> Region {
        let idx = self.unflatten(b);
        let d = self.domain.dim();
        let mut lo = vec![0.0; d];
        let mut hi = vec![0.0; d];
        for j in 0..d {
            let (a, w, k) = (self.domain.lo[j], self.domain.width(j), self.grid[j] as f64);
            lo[j] = a + w * idx[j] as f64 / k;
            hi[j] = if idx[j] + 1 == self.grid[j] { self.domain.hi[j] } else { a + w * (idx[j] + 1) as f64 / k };
        }
        Region { lo, hi }
    }

    fn unflatten(&self, mut b: usize) -> Vec<usize> {
        self.grid
            .iter()
            .map(|&k| {
                let i = b % k;
                b /= k;
                i
            })
            .collect()
    }

    fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.grid).rev().fold(0, |acc, (&i, &k)| acc * k + i)
    }

    fn base_coord(&self, j: usize, v: f64) -> usize {
        let t = (v - self.domain.lo[j]) / self.domain.width(j) * self.grid[j] as f64;
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.grid[j] - 1)
        }
    }

    pub fn domain(&self) -> &Region {
        &self.domain
    }

    pub fn grid(&self) -> &[usize] {
        &self.grid
    }

    pub fn props(&self) -> &[String] {
        &self.props
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.len()
    }

    /// Index of `q_u`; the IMDP has `num_cells() + 1` states.
    pub fn unsafe_state(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> &Cell {
        &self.cells[i]
    }

    /// Fraction of the domain volume taken by cell `i`.
    pub fn volume_fraction(&self, i: usize) -> f64 {
        self.cells[i].region.volume() / self.domain.volume()
    }

    /// Cell containing `x`, or `None` outside the domain. Points on shared
    /// faces go to the lowest-index cell of their base cell.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if !self.domain.contains(x) {
            return None;
        }
        let idx: Vec<usize> = (0..self.dim()).map(|j| self.base_coord(j, x[j])).collect();
        let b = self.flatten(&idx);
        if let Some(&c) = self.base[b].iter().find(|&&c| self.cells[c].region.contains(x)) {
            return Some(c);
        }
        // rounding at a base-grid face: look in the neighbours
        let d = self.dim();
        for code in 0..3usize.pow(d as u32) {
            let mut rem = code;
            let mut nb = idx.clone();
            let mut ok = true;
            for (j, v) in nb.iter_mut().enumerate() {
                let step = rem % 3;
                rem /= 3;
                let t = *v as isize + step as isize - 1;
                if t < 0 || t >= self.grid[j] as isize {
                    ok = false;
                }
                *v = t.max(0) as usize;
            }
            if !ok {
                continue;
            }
            let b = self.flatten(&nb);
            if let Some(&c) = self.base[b].iter().find(|&&c| self.cells[c].region.contains(x)) {
                return Some(c);
            }
        }
        None
    }

    /// Cells meeting the closed box `b`, in increasing index order.
    pub fn cells_overlapping(&self, b: &[Interval]) -> Vec<usize> {
        let d = self.dim();
        let mut lo = vec![0; d];
        let mut hi = vec![0; d];
        for j in 0..d {
            if b[j].hi < self.domain.lo[j] || b[j].lo > self.domain.hi[j] {
                return Vec::new();
            }
            lo[j] = self.base_coord(j, b[j].lo);
            hi[j] = self.base_coord(j, b[j].hi);
        }
        let mut out = Vec::new();
        let mut idx = lo.clone();
        loop {
            for &c in &self.base[self.flatten(&idx)] {
                let r = &self.cells[c].region;
                if (0..d).all(|j| r.lo[j] <= b[j].hi && b[j].lo <= r.hi[j]) {
                    out.push(c);
                }
            }
            let mut j = 0;
            loop {
                if j == d {
                    out.sort_unstable();
                    return out;
                }
                if idx[j] < hi[j] {
                    idx[j] += 1;
                    break;
                }
                idx[j] = lo[j];
                j += 1;
            }
        }
    }

    /// Splits the listed cells in half along the given dimensions. Every
    /// other cell keeps its position relative to the others; children take
    /// the place of their parent. Returns the new partition and, for each new
    /// cell, the index of the cell it came from.
    pub fn split(&self, splits: &[(usize, usize)]) -> Result<(Partition, Vec<usize>)> {
        let mut dim_of = vec![None; self.cells.len()];
        for &(c, d) in splits {
            if c >= self.cells.len() || d >= self.dim() {
                return Err(Error::InvalidArgument("split refers to a missing cell or dimension".into()));
            }
            dim_of[c] = Some(d);
        }
        let mut cells = Vec::with_capacity(self.cells.len() + splits.len());
        let mut home = Vec::with_capacity(cells.capacity());
        let mut lineage = Vec::with_capacity(cells.capacity());
        let mut base = vec![Vec::new(); self.base.len()];
        for (i, cell) in self.cells.iter().enumerate() {
            let parts = match dim_of[i] {
                Some(d) => {
                    let (a, b) = cell.region.split_half(d);
                    vec![a, b]
                }
                None => vec![cell.region.clone()],
            };
            for r in parts {
                base[self.home[i]].push(cells.len());
                home.push(self.home[i]);
                lineage.push(i);
                cells.push(Cell { region: r, labels: cell.labels });
            }
        }
        let p = Partition { domain: self.domain.clone(), grid: self.grid.clone(), props: self.props.clone(), cells, base, home };
        Ok((p, lineage))
    }

    /// Rebuilds a partition from stored cells (each must lie in one base cell).
    pub fn from_cells(domain: Region, grid: Vec<usize>, props: Vec<String>, cells: Vec<Cell>) -> Result<Self> {
        let mut p = Partition { domain, grid, props, cells: Vec::new(), base: Vec::new(), home: Vec::new() };
        if p.grid.len() != p.domain.dim() || p.grid.contains(&0) {
            return Err(Error::InvalidArgument("grid does not match the domain".into()));
        }
        p.base = vec![Vec::new(); p.grid.iter().product()];
        for (i, c) in cells.iter().enumerate() {
            let center = c.region.center();
            if !p.domain.contains_region(&c.region) {
                return Err(Error::InvalidArgument("cell outside the domain".into()));
            }
            let idx: Vec<usize> = (0..p.dim()).map(|j| p.base_coord(j, center[j])).collect();
            let b = p.flatten(&idx);
            p.base[b].push(i);
            p.home.push(b);
        }
        p.cells = cells;
        Ok(p)
    }
}

fn split_for_labels(cell: Region, labels: &LabelMap, tol: &[f64], policy: AlignPolicy, out: &mut Vec<Region>) -> Result<()> {
    for lr in &labels.regions {
        let r = &lr.region;
        if !(0..cell.dim()).all(|j| r.lo[j] < cell.hi[j] - tol[j] && cell.lo[j] + tol[j] < r.hi[j]) {
            continue;
        }
        for j in 0..cell.dim() {
            for at in [r.lo[j], r.hi[j]] {
                if cell.lo[j] + tol[j] < at && at < cell.hi[j] - tol[j] {
                    if policy == AlignPolicy::Reject {
                        return Err(Error::Misaligned { dim: j, value: at });
                    }
                    let (a, b) = cell.split_at(j, at);
                    split_for_labels(a, labels, tol, policy, out)?;
                    return split_for_labels(b, labels, tol, policy, out);
                }
            }
        }
    }
    out.push(cell);
    Ok(())
}

fn labels_with_tol(labels: &LabelMap, cell: &Region, tol: &[f64]) -> LabelSet {
    labels
        .regions
        .iter()
        .filter(|lr| (0..cell.dim()).all(|j| lr.region.lo[j] < cell.hi[j] - tol[j] && cell.lo[j] + tol[j] < lr.region.hi[j]))
        .fold(LabelSet::EMPTY, |l, r| l.union(r.labels))
}
