//! Deep kernel models: per-action feature networks feeding per-dimension GPs,
//! with certified posterior ranges over boxes of the state space.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Dataset, SystemSpec};
use crate::error::{Error, Result};
use crate::geometry::{Interval, Region};
use crate::gp::{optimize_hyperparams, GpPosterior, SeKernelParams, StepSchedule};
use crate::linalg::Matrix;
use crate::math;
use crate::nn::{self, LinearRelaxation, MlpNetwork, TrainConfig};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelVariant {
    /// GP on the raw state.
    PlainGp,
    /// Network predicts the dynamics, a GP on the raw state predicts its error.
    NnGp,
    /// Every output GP sees the full network output.
    DklFull,
    /// Output GP `j` sees only network output `j`.
    DklSingle,
}

/// A variant plus whether its network is trained on the prediction subset only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelKind {
    pub variant: ModelVariant,
    pub limited: bool,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind { variant: ModelVariant::PlainGp, limited: false },
        ModelKind { variant: ModelVariant::NnGp, limited: false },
        ModelKind { variant: ModelVariant::NnGp, limited: true },
        ModelKind { variant: ModelVariant::DklFull, limited: false },
        ModelKind { variant: ModelVariant::DklFull, limited: true },
        ModelKind { variant: ModelVariant::DklSingle, limited: false },
        ModelKind { variant: ModelVariant::DklSingle, limited: true },
    ];

    pub fn new(variant: ModelVariant, limited: bool) -> Result<Self> {
        if limited && variant == ModelVariant::PlainGp {
            return Err(Error::InvalidArgument("the plain GP has no network to limit".into()));
        }
        Ok(ModelKind { variant, limited })
    }

    pub fn name(&self) -> &'static str {
        match (self.variant, self.limited) {
            (ModelVariant::PlainGp, _) => "gp",
            (ModelVariant::NnGp, false) => "nn-gp",
            (ModelVariant::NnGp, true) => "nn-gp-l",
            (ModelVariant::DklFull, false) => "dkl-f",
            (ModelVariant::DklFull, true) => "dkl-fl",
            (ModelVariant::DklSingle, false) => "dkl-s",
            (ModelVariant::DklSingle, true) => "dkl-sl",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        ModelKind::ALL.into_iter().find(|k| k.name() == name).ok_or_else(|| Error::UnknownName(name.to_string()))
    }

    pub fn has_net(&self) -> bool {
        self.variant != ModelVariant::PlainGp
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig { hidden: vec![64, 64], train: TrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpConfig {
    pub init: SeKernelParams,
    /// Gradient steps on the marginal likelihood; 0 keeps `init`.
    pub iters: usize,
    pub schedule: StepSchedule,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig { init: SeKernelParams::default(), iters: 100, schedule: StepSchedule::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub net: NetConfig,
    pub gp: GpConfig,
}

/// `y = shift + scale · t` between raw and standardized targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub shift: f64,
    pub scale: f64,
}

impl Scaling {
    fn fit(values: &[f64]) -> Scaling {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let sd = math::sqrt(var);
        Scaling { shift: mean, scale: if sd > 1e-12 { sd } else { 1.0 } }
    }
}

#[derive(Clone, Debug)]
pub struct ActionModel {
    pub net: Option<MlpNetwork>,
    pub gps: Vec<GpPosterior>,
    pub scaling: Vec<Scaling>,
}

/// Sound per-dimension enclosures over a box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRanges {
    pub mean: Vec<Interval>,
    pub var: Vec<Interval>,
}

#[derive(Clone, Debug)]
pub struct DeepKernelModel {
    kind: ModelKind,
    dim: usize,
    actions: Vec<ActionModel>,
}

impl DeepKernelModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action(&self, a: usize) -> Result<&ActionModel> {
        self.actions.get(a).ok_or(Error::UnknownAction(a))
    }

    /// Fits the output GPs of every action around the given networks (one per
    /// action, `None` for the plain GP). Networks are used as-is.
    pub fn fit_with_nets(kind: ModelKind, dataset: &Dataset, nets: Vec<Option<MlpNetwork>>, gp: &GpConfig) -> Result<Self> {
        if nets.len() != dataset.num_actions {
            return Err(Error::Dimension { expected: dataset.num_actions, got: nets.len() });
        }
        let mut actions = Vec::with_capacity(nets.len());
        for (a, net) in nets.into_iter().enumerate() {
            actions.push(fit_action_gps(kind, dataset, a, net, gp)?);
        }
        Ok(DeepKernelModel { kind, dim: dataset.dim, actions })
    }

    pub fn features(&self, a: usize, x: &[f64]) -> Result<Vec<f64>> {
        let am = self.action(a)?;
        if x.len() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: x.len() });
        }
        Ok(match (&am.net, self.kind.variant) {
            (Some(net), ModelVariant::DklFull | ModelVariant::DklSingle) => net.forward(x),
            _ => x.to_vec(),
        })
    }

    /// Posterior mean and variance of `f(x, a)` per dimension, in raw units.
    pub fn predict(&self, x: &[f64], a: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let am = self.action(a)?;
        let z = self.features(a, x)?;
        let offset = match (&am.net, self.kind.variant) {
            (Some(net), ModelVariant::NnGp) => net.forward(x),
            _ => vec![0.0; self.dim],
        };
        let mut mean = Vec::with_capacity(self.dim);
        let mut var = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let (m, v) = match self.kind.variant {
                ModelVariant::DklSingle => am.gps[j].predict(&z[j..=j]),
                _ => am.gps[j].predict(&z),
            };
            let s = am.scaling[j];
            mean.push(offset[j] + s.shift + s.scale * m);
            var.push(s.scale * s.scale * v);
        }
        Ok((mean, var))
    }

    /// Largest posterior variance the model can report in dimension `j`.
    pub fn variance_cap(&self, a: usize, j: usize) -> Result<f64> {
        let am = self.action(a)?;
        let s = am.scaling[j].scale;
        Ok(s * s * am.gps[j].params().output_scale)
    }

    /// Linear relaxation of the action's network over `q` and the resulting
    /// output box. `None` for the plain GP.
    pub fn net_bounds(&self, a: usize, q: &Region) -> Result<Option<(LinearRelaxation, Vec<Interval>)>> {
        let am = self.action(a)?;
        Ok(am.net.as_ref().map(|net| {
            let r = nn::relax(net, q);
            let z = nn::feature_box(&r, q);
            (r, z)
        }))
    }

    /// Sound posterior ranges over `q`. `net_box` is the network's output box
    /// over `q` (feature box for the deep kernels, dynamics-prediction box for
    /// the NN-GP); it is computed fresh when `None`.
    pub fn posterior_ranges(&self, a: usize, q: &Region, net_box: Option<&[Interval]>) -> Result<PosteriorRanges> {
        let am = self.action(a)?;
        if q.dim() != self.dim {
            return Err(Error::Dimension { expected: self.dim, got: q.dim() });
        }
        let fresh;
        let nb: Option<&[Interval]> = match (net_box, &am.net) {
            (Some(b), _) => Some(b),
            (None, Some(_)) => {
                fresh = self.net_bounds(a, q)?.map(|(_, z)| z);
                fresh.as_deref()
            }
            (None, None) => None,
        };
        let qbox = q.intervals();
        let mut mean = Vec::with_capacity(self.dim);
        let mut var = Vec::with_capacity(self.dim);
        for j in 0..self.dim {
            let (m, v) = match (self.kind.variant, nb) {
                (ModelVariant::PlainGp | ModelVariant::NnGp, _) | (_, None) => am.gps[j].ranges(&qbox),
                (ModelVariant::DklFull, Some(z)) => am.gps[j].ranges(z),
                (ModelVariant::DklSingle, Some(z)) => am.gps[j].ranges(&z[j..=j]),
            };
            let s = am.scaling[j];
            let mut m = m.scale(s.scale).shift(s.shift);
            if self.kind.variant == ModelVariant::NnGp {
                if let Some(z) = nb {
                    m = m.add(&z[j]);
                }
            }
            mean.push(m);
            var.push(v.scale(s.scale * s.scale));
        }
        Ok(PosteriorRanges { mean, var })
    }

    pub fn to_record(&self) -> ModelRecord {
        ModelRecord {
            kind: self.kind,
            dim: self.dim,
            actions: self
                .actions
                .iter()
                .map(|am| ActionRecord {
                    net: am.net.clone(),
                    gps: am
                        .gps
                        .iter()
                        .map(|g| GpRecord { params: *g.params(), inputs: g.inputs().clone(), targets: g.targets().to_vec() })
                        .collect(),
                    scaling: am.scaling.clone(),
                })
                .collect(),
        }
    }

    /// Rebuilds a model; GP factorizations are recomputed from the stored data.
    pub fn from_record(rec: ModelRecord) -> Result<Self> {
        let mut actions = Vec::with_capacity(rec.actions.len());
        for ar in rec.actions {
            if ar.gps.len() != rec.dim || ar.scaling.len() != rec.dim {
                return Err(Error::Dimension { expected: rec.dim, got: ar.gps.len() });
            }
            if ar.net.is_some() != rec.kind.has_net() {
                return Err(Error::InvalidArgument("network presence does not match the model variant".into()));
            }
            let gps = ar
                .gps
                .into_iter()
                .map(|g| GpPosterior::fit(g.params, g.inputs, g.targets))
                .collect::<Result<Vec<_>>>()?;
            actions.push(ActionModel { net: ar.net, gps, scaling: ar.scaling });
        }
        Ok(DeepKernelModel { kind: rec.kind, dim: rec.dim, actions })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GpRecord {
    pub params: SeKernelParams,
    pub inputs: Matrix,
    pub targets: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionRecord {
    pub net: Option<MlpNetwork>,
    pub gps: Vec<GpRecord>,
    pub scaling: Vec<Scaling>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub kind: ModelKind,
    pub dim: usize,
    pub actions: Vec<ActionRecord>,
}

fn fit_action_gps(kind: ModelKind, dataset: &Dataset, a: usize, net: Option<MlpNetwork>, cfg: &GpConfig) -> Result<ActionModel> {
    if a >= dataset.num_actions {
        return Err(Error::UnknownAction(a));
    }
    if dataset.pred[a].is_empty() {
        return Err(Error::InvalidArgument("empty prediction subset".into()));
    }
    if kind.has_net() != net.is_some() {
        return Err(Error::InvalidArgument("network presence does not match the model variant".into()));
    }
    let n = dataset.dim;
    let (xs, ys) = dataset.gather(&dataset.pred[a]);
    let feats: Vec<Vec<f64>> = match (kind.variant, &net) {
        (ModelVariant::DklFull | ModelVariant::DklSingle, Some(g)) => xs.iter().map(|x| g.forward(x)).collect(),
        _ => xs.clone(),
    };
    let offsets: Option<Vec<Vec<f64>>> = match (kind.variant, &net) {
        (ModelVariant::NnGp, Some(g)) => Some(xs.iter().map(|x| g.forward(x)).collect()),
        _ => None,
    };
    let mut gps = Vec::with_capacity(n);
    let mut scaling = Vec::with_capacity(n);
    for j in 0..n {
        let raw: Vec<f64> = (0..ys.len()).map(|i| ys[i][j] - offsets.as_ref().map_or(0.0, |o| o[i][j])).collect();
        let s = Scaling::fit(&raw);
        let t: Vec<f64> = raw.iter().map(|v| (v - s.shift) / s.scale).collect();
        let inputs = match kind.variant {
            ModelVariant::DklSingle => Matrix::from_fn(feats.len(), 1, |i, _| feats[i][j]),
            _ => Matrix::from_rows(&feats),
        };
        let params = if cfg.iters > 0 {
            optimize_hyperparams(&inputs, &t, cfg.init, cfg.iters, cfg.schedule)?.params
        } else {
            cfg.init
        };
        gps.push(GpPosterior::fit(params, inputs, t)?);
        scaling.push(s);
    }
    Ok(ActionModel { net, gps, scaling })
}

/// Trains the action's network on standardized data. Deep-kernel nets output
/// standardized predictions (the features); the NN-GP net is folded back to
/// raw units.
fn train_net<R: Rng + ?Sized>(cfg: &ModelConfig, dataset: &Dataset, a: usize, rng: &mut R) -> Result<MlpNetwork> {
    let n = dataset.dim;
    let idx = if cfg.kind.limited { &dataset.pred[a] } else { &dataset.by_action[a] };
    let (xs, ys) = dataset.gather(idx);
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no training data for action".into()));
    }
    let col = |v: &[Vec<f64>], j: usize| v.iter().map(|r| r[j]).collect::<Vec<_>>();
    let xin: Vec<Scaling> = (0..n).map(|j| Scaling::fit(&col(&xs, j))).collect();
    let yout: Vec<Scaling> = (0..n).map(|j| Scaling::fit(&col(&ys, j))).collect();
    let u: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().zip(&xin).map(|(v, s)| (v - s.shift) / s.scale).collect()).collect();
    let t: Vec<Vec<f64>> = ys.iter().map(|y| y.iter().zip(&yout).map(|(v, s)| (v - s.shift) / s.scale).collect()).collect();
    let mut sizes = vec![n];
    sizes.extend_from_slice(&cfg.net.hidden);
    sizes.push(n);
    let mut net = MlpNetwork::init(&sizes, rng)?;
    let mut tc = cfg.net.train.clone();
    tc.batch_size = tc.batch_size.min(u.len());
    nn::train(&mut net, &u, &t, &tc, rng)?;
    let shift: Vec<f64> = xin.iter().map(|s| s.shift).collect();
    let scale: Vec<f64> = xin.iter().map(|s| s.scale).collect();
    net.fold_input_affine(&shift, &scale);
    if cfg.kind.variant == ModelVariant::NnGp {
        let shift: Vec<f64> = yout.iter().map(|s| s.shift).collect();
        let scale: Vec<f64> = yout.iter().map(|s| s.scale).collect();
        net.fold_output_affine(&shift, &scale);
    }
    Ok(net)
}

/// Trains one model per action. Per-action seeds are drawn from `rng` up
/// front, so the result does not depend on how actions are scheduled.
pub fn train_model<R: RngCore + ?Sized>(cfg: &ModelConfig, dataset: &Dataset, rng: &mut R) -> Result<DeepKernelModel> {
    if dataset.by_action.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("dataset does not cover every action".into()));
    }
    let seeds: Vec<u64> = (0..dataset.num_actions).map(|_| rng.next_u64()).collect();
    let results = par::map_range(dataset.num_actions, |a| -> Result<ActionModel> {
        let mut r = ChaCha8Rng::seed_from_u64(seeds[a]);
        let net = if cfg.kind.has_net() { Some(train_net(cfg, dataset, a, &mut r)?) } else { None };
        fit_action_gps(cfg.kind, dataset, a, net, &cfg.gp)
    });
    let actions = results.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(DeepKernelModel { kind: cfg.kind, dim: dataset.dim, actions })
}

/// Maximum of `‖E[f | D] − f‖₂` and `(Σⱼ varⱼ)^½` over `num_points` uniform
/// points of the domain.
pub fn evaluate_errors<R: Rng + ?Sized>(
    model: &DeepKernelModel,
    spec: &SystemSpec,
    num_points: usize,
    a: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    let points: Vec<Vec<f64>> = (0..num_points).map(|_| spec.domain.sample(rng)).collect();
    errors_at(model, spec, &points, a)
}

/// Same as [`evaluate_errors`] over given points.
pub fn errors_at(model: &DeepKernelModel, spec: &SystemSpec, points: &[Vec<f64>], a: usize) -> Result<(f64, f64)> {
    let (mut em, mut es) = (0.0f64, 0.0f64);
    for x in points {
        let truth = spec.mean_next(x, a)?;
        let (m, v) = model.predict(x, a)?;
        let d: f64 = m.iter().zip(&truth).map(|(p, t)| (p - t) * (p - t)).sum();
        em = em.max(math::sqrt(d));
        es = es.max(math::sqrt(v.iter().sum()));
    }
    Ok((em, es))
}

/// Human-readable one-line summary of fitted kernel parameters.
pub fn describe(model: &DeepKernelModel) -> String {
    let mut s = String::new();
    for (a, am) in model.actions.iter().enumerate() {
        for (j, g) in am.gps.iter().enumerate() {
            let p = g.params();
            s.push_str(&alloc::format!(
                "a{a} d{j}: sigma_s={:.4} l={:.4} noise={:.2e}\n",
                p.output_scale, p.length_scale, p.noise_var
            ));
        }
    }
    s
}
