//! Score-and-split refinement of an abstraction.
//!
//! Cells are scored by `β(q) = (p̂(q) − p̌(q)) · Σ_a Σ_q' (P̂ − P̌)` and the
//! highest-scoring ones are halved along the dimension that gives the
//! smallest network output boxes.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::abstraction::{build_imdp, cell_bounds, Abstraction, Imdp};
use crate::dkl::DeepKernelModel;
use crate::error::{Error, Result};
use crate::geometry::{Interval, Region};
use crate::nn::{self, LinearRelaxation, MlpNetwork};
use crate::par;
use crate::synthesis::SynthesisResult;

/// Which stored successors enter the inner sum of the score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScoreSupport {
    /// Every stored entry of the row.
    #[default]
    AllStored,
    /// Only entries with a positive lower bound.
    SupportOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementConfig {
    pub n_ref: usize,
    pub rounds: usize,
    #[serde(default)]
    pub support: ScoreSupport,
}

impl RefinementConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_ref == 0 {
            return Err(Error::InvalidArgument("n_ref must be at least 1".into()));
        }
        Ok(())
    }
}

/// Only the widest dimensions of a cell are tried when it has more than this many.
const MAX_CANDIDATES: usize = 3;

pub fn score(result: &SynthesisResult, imdp: &Imdp, support: ScoreSupport) -> Result<Vec<f64>> {
    if result.num_cells() != imdp.num_cells() {
        return Err(Error::Dimension { expected: imdp.num_cells(), got: result.num_cells() });
    }
    Ok((0..imdp.num_cells())
        .map(|q| {
            let gap = (result.upper[q] - result.lower[q]).max(0.0);
            let slack: f64 = (0..imdp.num_actions())
                .flat_map(|a| imdp.row(q, a))
                .filter(|t| support == ScoreSupport::AllStored || t.lo > 0.0)
                .map(|t| t.hi - t.lo)
                .sum();
            gap * slack
        })
        .collect())
}

/// Split dimension of a cell with the relaxations computed on both halves.
#[derive(Clone, Debug)]
pub struct SplitChoice {
    pub dim: usize,
    /// Summed output-box volume over actions for each tried dimension.
    pub volumes: Vec<(usize, f64)>,
    pub halves: [Vec<Option<LinearRelaxation>>; 2],
}

fn box_volume(z: &[Interval]) -> f64 {
    z.iter().map(Interval::width).product()
}

/// Halves `region` along each candidate dimension, relaxes every action's
/// network on both halves and picks the dimension with the smallest summed
/// output-box volume. Actions without a network contribute the volume of
/// the halves themselves. Ties go to the wider dimension, then the lower
/// index.
pub fn choose_split_dimension(region: &Region, nets: &[Option<&MlpNetwork>]) -> SplitChoice {
    let d = region.dim();
    let mut dims: Vec<usize> = (0..d).collect();
    if d > MAX_CANDIDATES {
        dims.sort_by(|&i, &j| region.width(j).total_cmp(&region.width(i)).then(i.cmp(&j)));
        dims.truncate(MAX_CANDIDATES);
        dims.sort_unstable();
    }
    let mut best: Option<(usize, f64, [Vec<Option<LinearRelaxation>>; 2])> = None;
    let mut volumes = Vec::with_capacity(dims.len());
    for &k in &dims {
        let (lo, hi) = region.split_half(k);
        let mut vol = 0.0;
        let mut halves = [Vec::with_capacity(nets.len()), Vec::with_capacity(nets.len())];
        for net in nets {
            for (h, part) in [&lo, &hi].into_iter().enumerate() {
                match net {
                    Some(net) => {
                        let r = nn::relax(net, part);
                        vol += box_volume(&r.eval_on(part));
                        halves[h].push(Some(r));
                    }
                    None => {
                        vol += part.volume();
                        halves[h].push(None);
                    }
                }
            }
        }
        volumes.push((k, vol));
        let replace = match &best {
            None => true,
            Some((b, bv, _)) => {
                let tie = (vol - bv).abs() <= 1e-12 * vol.abs().max(bv.abs());
                if tie {
                    region.width(k) > region.width(*b)
                } else {
                    vol < *bv
                }
            }
        };
        if replace {
            best = Some((k, vol, halves));
        }
    }
    let (dim, _, halves) = best.expect("regions have at least one dimension");
    SplitChoice { dim, volumes, halves }
}

/// Indices of the `n` highest positive scores, highest first (ties by index).
pub fn select(scores: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] > 0.0).collect();
    idx.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    idx.truncate(n);
    idx
}

#[derive(Clone, Debug)]
pub struct Refined {
    pub abstraction: Abstraction,
    /// Parent cell (in the previous partition) of every new cell.
    pub lineage: Vec<usize>,
    /// `(cell, dimension)` of every split, in previous-partition indices.
    pub splits: Vec<(usize, usize)>,
}

/// One refinement round: split the top `n_ref` cells, compute bounds for
/// the children (intersected with their parent's) and rebuild every row.
pub fn refine(abs: &Abstraction, result: &SynthesisResult, model: &DeepKernelModel, cfg: &RefinementConfig) -> Result<Refined> {
    cfg.validate()?;
    let scores = score(result, &abs.imdp, cfg.support)?;
    let chosen = select(&scores, cfg.n_ref);
    let nets: Vec<Option<&MlpNetwork>> = (0..model.num_actions()).map(|a| model.action(a).map(|m| m.net.as_ref())).collect::<Result<_>>()?;
    let choices = par::map_range(chosen.len(), |k| choose_split_dimension(&abs.partition.cell(chosen[k]).region, &nets));
    let splits: Vec<(usize, usize)> = chosen.iter().zip(&choices).map(|(&c, ch)| (c, ch.dim)).collect();
    let (partition, lineage) = abs.partition.split(&splits)?;
    let mut which = vec![None; abs.partition.num_cells()];
    for (k, &c) in chosen.iter().enumerate() {
        which[c] = Some(k);
    }
    // each split parent yields two consecutive children
    let mut jobs = Vec::with_capacity(lineage.len());
    for (i, &p) in lineage.iter().enumerate() {
        let half = usize::from(i > 0 && lineage[i - 1] == p);
        jobs.push(which[p].map(|k| (k, half)));
    }
    let bounds = par::map_range(lineage.len(), |i| match jobs[i] {
        None => Ok(abs.bounds[lineage[i]].clone()),
        Some((k, half)) => {
            let fresh = choices[k].halves[half].clone();
            cell_bounds(model, &partition.cell(i).region, Some(&abs.bounds[lineage[i]]), Some(fresh))
        }
    });
    let bounds = bounds.into_iter().collect::<Result<Vec<_>>>()?;
    let imdp = build_imdp(&partition, &bounds, &abs.noise_var)?;
    Ok(Refined { abstraction: Abstraction { partition, bounds, imdp, noise_var: abs.noise_var.clone() }, lineage, splits })
}
