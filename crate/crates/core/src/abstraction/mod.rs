//! Finite abstraction of a learned model as an interval MDP.
//!
//! For every cell `q` and action `a` the posterior ranges over `q` are
//! computed once; each destination cell then gets the interval
//! `[min_x T_a(q'|x), max_x T_a(q'|x)]` bound from those ranges. Mass leaving
//! the domain goes to the absorbing state `q_u`, bounded through the whole
//! domain as a single destination.

mod bounds;
mod imdp;
mod partition;

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bounds::{dim_bounds, h, transition_bounds};
pub use imdp::{repair_row, Imdp, Transition, REPAIR_CAP};
pub use partition::{AlignPolicy, Cell, Partition, SNAP_TOL};

use crate::dkl::{DeepKernelModel, PosteriorRanges};
use crate::dynamics::{LabelMap, SystemSpec};
use crate::error::{Error, Result};
use crate::geometry::{Interval, Region};
use crate::math;
use crate::nn::LinearRelaxation;
use crate::par;

/// Entries whose upper bound does not exceed this are dropped from rows;
/// their mass is moved to the upper bound of `q_u`.
pub const PRUNE: f64 = 1e-12;
/// Destinations farther than this many standard deviations from the mean
/// range are not enumerated.
const REACH_SDS: f64 = 8.5;

/// Per-(cell, action) quantities reused across rows and refinement rounds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    /// Network relaxation valid on the cell (none for the plain GP).
    pub relax: Option<LinearRelaxation>,
    /// Network output box over the cell.
    pub net_box: Option<Vec<Interval>>,
    pub ranges: PosteriorRanges,
}

fn intersect_or_keep(fresh: Interval, inherited: Interval) -> Interval {
    let cut = fresh.intersect(&inherited);
    if cut.lo <= cut.hi {
        cut
    } else {
        fresh
    }
}

/// Bounds for one cell. With a `parent` (whose region contains `region`) the
/// parent's relaxation, network box and ranges are intersected in, so a child
/// is never looser than its parent.
pub fn cell_bounds(
    model: &DeepKernelModel,
    region: &Region,
    parent: Option<&[ActionBounds]>,
    fresh: Option<Vec<Option<LinearRelaxation>>>,
) -> Result<Vec<ActionBounds>> {
    let mut fresh = fresh;
    (0..model.num_actions())
        .map(|a| {
            let given = fresh.as_mut().and_then(|f| f[a].take());
            let (relax, mut net_box) = match given {
                Some(r) => {
                    let z = r.eval_on(region);
                    (Some(r), Some(z))
                }
                None => match model.net_bounds(a, region)? {
                    Some((r, z)) => (Some(r), Some(z)),
                    None => (None, None),
                },
            };
            let pb = parent.map(|p| &p[a]);
            if let (Some(z), Some(pb)) = (net_box.as_mut(), pb) {
                if let Some(pr) = &pb.relax {
                    for (zi, pi) in z.iter_mut().zip(pr.eval_on(region)) {
                        *zi = intersect_or_keep(*zi, pi);
                    }
                }
                if let Some(pz) = &pb.net_box {
                    for (zi, pi) in z.iter_mut().zip(pz) {
                        *zi = intersect_or_keep(*zi, *pi);
                    }
                }
            }
            let mut ranges = model.posterior_ranges(a, region, net_box.as_deref())?;
            if let Some(pb) = pb {
                for j in 0..ranges.mean.len() {
                    ranges.mean[j] = intersect_or_keep(ranges.mean[j], pb.ranges.mean[j]);
                    ranges.var[j] = intersect_or_keep(ranges.var[j], pb.ranges.var[j]);
                }
            }
            Ok(ActionBounds { relax, net_box, ranges })
        })
        .collect()
}

/// Interval row of `(q, a)` over all cells and `q_u`.
pub fn row_bounds(partition: &Partition, ranges: &PosteriorRanges, noise_var: &[f64], state: usize, action: usize) -> Result<Vec<Transition>> {
    let d = partition.dim();
    let mut reach = Vec::with_capacity(d);
    let mut tail = 0.0;
    for j in 0..d {
        let sd = math::sqrt(ranges.var[j].hi.max(0.0) + noise_var[j]);
        reach.push(Interval::new(ranges.mean[j].lo - REACH_SDS * sd, ranges.mean[j].hi + REACH_SDS * sd));
        tail += math::erfc(REACH_SDS / core::f64::consts::SQRT_2);
    }
    let mut row = Vec::new();
    let mut pruned = tail;
    for c in partition.cells_overlapping(&reach) {
        let dest = partition.cell(c).region.intervals();
        let (lo, hi) = transition_bounds(ranges, noise_var, &dest);
        if hi > PRUNE {
            row.push(Transition { dest: c, lo, hi });
        } else {
            pruned += hi;
        }
    }
    let (lo_x, hi_x) = transition_bounds(ranges, noise_var, &partition.domain().intervals());
    let u_lo = (1.0 - hi_x).max(0.0);
    let u_hi = (1.0 - lo_x + pruned).min(1.0);
    if u_hi > PRUNE || u_lo > 0.0 {
        row.push(Transition { dest: partition.unsafe_state(), lo: u_lo, hi: u_hi.max(u_lo) });
    }
    repair_row(&mut row, state, action)?;
    Ok(row)
}

/// Assembles the IMDP from cached per-cell bounds.
pub fn build_imdp(partition: &Partition, bounds: &[Vec<ActionBounds>], noise_var: &[f64]) -> Result<Imdp> {
    let n = partition.num_cells();
    if bounds.len() != n {
        return Err(Error::Dimension { expected: n, got: bounds.len() });
    }
    let na = bounds.first().map_or(0, Vec::len);
    let rows = par::map_range(n * na, |i| row_bounds(partition, &bounds[i / na][i % na].ranges, noise_var, i / na, i % na));
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let labels = partition.cells().iter().map(|c| c.labels).collect();
    Imdp::new(na, partition.props().to_vec(), labels, rows)
}

/// Partition, cached bounds and IMDP of one abstraction round.
#[derive(Clone, Debug)]
pub struct Abstraction {
    pub partition: Partition,
    pub bounds: Vec<Vec<ActionBounds>>,
    pub imdp: Imdp,
    pub noise_var: Vec<f64>,
}

impl Abstraction {
    pub fn build(model: &DeepKernelModel, spec: &SystemSpec, labels: &LabelMap, grid: &[usize], align: AlignPolicy) -> Result<Self> {
        if model.dim() != spec.dim() || model.num_actions() != spec.num_actions() {
            return Err(Error::Dimension { expected: spec.dim(), got: model.dim() });
        }
        let partition = Partition::build(&spec.domain, labels, grid, align)?;
        Abstraction::from_partition(model, partition, spec.noise_var.clone())
    }

    pub fn from_partition(model: &DeepKernelModel, partition: Partition, noise_var: Vec<f64>) -> Result<Self> {
        let bounds = par::map_range(partition.num_cells(), |c| cell_bounds(model, &partition.cell(c).region, None, None));
        let bounds = bounds.into_iter().collect::<Result<Vec<_>>>()?;
        let imdp = build_imdp(&partition, &bounds, &noise_var)?;
        Ok(Abstraction { partition, bounds, imdp, noise_var })
    }
}

/// `T_a(q'|x) = Πⱼ h(q'⁽ʲ⁾, mⱼ(x), vⱼ(x) + Vⱼⱼ)` under the learned model.
pub fn point_transition_prob(model: &DeepKernelModel, noise_var: &[f64], x: &[f64], a: usize, dest: &[Interval]) -> Result<f64> {
    let (m, v) = model.predict(x, a)?;
    let mut p = 1.0;
    for j in 0..dest.len() {
        p *= h(dest[j], m[j], v[j] + noise_var[j])?;
    }
    Ok(p)
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub triples: usize,
    pub samples: usize,
    pub violations: usize,
    /// Largest amount by which a sampled probability left its interval.
    pub worst: f64,
}

/// Checks stored transition intervals against the exact per-point kernel at
/// sampled states of the source cell. Triples are drawn uniformly over
/// cells, actions and stored destinations (including `q_u`).
pub fn audit<R: Rng + ?Sized>(model: &DeepKernelModel, abs: &Abstraction, triples: usize, samples: usize, rng: &mut R) -> Result<AuditReport> {
    let p = &abs.partition;
    let domain = p.domain().intervals();
    let mut rep = AuditReport::default();
    for _ in 0..triples {
        let q = rng.random_range(0..p.num_cells());
        let a = rng.random_range(0..abs.imdp.num_actions());
        let row = abs.imdp.row(q, a);
        let t = row[rng.random_range(0..row.len())];
        rep.triples += 1;
        for _ in 0..samples {
            let x = p.cell(q).region.sample(rng);
            let prob = if t.dest == p.unsafe_state() {
                1.0 - point_transition_prob(model, &abs.noise_var, &x, a, &domain)?
            } else {
                point_transition_prob(model, &abs.noise_var, &x, a, &p.cell(t.dest).region.intervals())?
            };
            rep.samples += 1;
            let excess = (t.lo - prob).max(prob - t.hi);
            if excess > 0.0 {
                rep.violations += 1;
                rep.worst = rep.worst.max(excess);
            }
        }
    }
    Ok(rep)
}
