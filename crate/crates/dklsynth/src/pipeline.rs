//! Pipeline stages. Each stage reads its inputs from the output directory
//! and writes its artifacts there, so any stage can be rerun on its own.
//! Wall-clock times only ever go to `run.log`.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context as _, Result};
use dklsynth_core::abstraction::{self, Abstraction};
use dklsynth_core::dkl::{self, errors_at, train_model, DeepKernelModel, ModelKind, ModelVariant};
use dklsynth_core::dynamics::{generate_dataset, Dataset, LabelMap, Sample, SystemSpec};
use dklsynth_core::nn::MlpNetwork;
use dklsynth_core::refinement;
use dklsynth_core::simulation::simulate_under_strategy;
use dklsynth_core::synthesis::{synthesize_with, Class, SynthesisResult};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{AuditFailure, ConfigError};
use crate::formats::{self, DatasetMeta, Lineage, Percentages, RoundRecord};
use crate::stats::clopper_pearson;

/// Random streams of the stages, all derived from the config seed.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stage {
    Data = 1,
    Train = 2,
    Eval = 3,
    Validate = 4,
    Audit = 5,
    Identity = 6,
}

pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stage as u64);
    r
}

pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub spec: SystemSpec,
    pub labels: LabelMap,
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub variant: String,
    pub points: usize,
    /// `(err_mu, err_sigma)` per action.
    pub per_action: Vec<(f64, f64)>,
    pub max_err_mu: f64,
    pub max_err_sigma: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub max_mean_diff: f64,
    pub max_var_diff: f64,
}

/// Identity-network models against plain GPs on the same inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub format: String,
    pub version: u32,
    pub points: usize,
    pub tolerance: f64,
    /// Full variant vs the plain GP on the raw state.
    pub full_vs_gp: Discrepancy,
    /// Single variant vs one-dimensional GPs on each coordinate.
    pub single_vs_coordinate_gp: Discrepancy,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellValidation {
    pub cell: usize,
    pub class: Class,
    pub lower: f64,
    pub upper: f64,
    pub runs: usize,
    pub successes: usize,
    pub ci: (f64, f64),
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub format: String,
    pub version: u32,
    pub round: usize,
    pub runs: usize,
    pub horizon: usize,
    pub confidence: f64,
    pub margin: f64,
    /// Sampled cells with `p̌ ≥ threshold`: pass when the interval's lower
    /// end is at least `p̌ − margin`.
    pub yes_cells: Vec<CellValidation>,
    /// Sampled cells with `p̂ = 0`: pass when no run succeeds.
    pub zero_cells: Vec<CellValidation>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditFile {
    pub format: String,
    pub version: u32,
    pub round: usize,
    pub triples: usize,
    pub samples: usize,
    pub violations: usize,
    pub worst: f64,
}

fn doc(format: &str) -> (String, u32) {
    (format.to_string(), formats::VERSION)
}

impl Pipeline {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.system_spec()?;
        let labels = cfg.label_map()?;
        let dir = cfg.output();
        std::fs::create_dir_all(&dir).with_context(|| format!("cannot create {}", dir.display()))?;
        Ok(Pipeline { cfg, spec, labels, dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn round_path(&self, stem: &str, round: usize, ext: &str) -> PathBuf {
        self.path(&format!("{stem}_r{round}.{ext}"))
    }

    pub fn log(&self, msg: &str) {
        let t = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        if let Ok(mut f) = OpenOptions::new().create(true).append(true).open(self.path("run.log")) {
            let _ = writeln!(f, "{t:.3} {msg}");
        }
    }

    fn timed<T>(&self, what: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t = Instant::now();
        let out = f();
        self.log(&format!("{what}: {:.3} s{}", t.elapsed().as_secs_f64(), if out.is_ok() { "" } else { " (failed)" }));
        out
    }

    pub fn gen_data(&self) -> Result<Dataset> {
        self.timed("gen-data", || {
            let c = &self.cfg;
            let ds = generate_dataset(&self.spec, c.data.per_action, c.data.pred, &mut stage_rng(c.seed, Stage::Data))?;
            let meta = DatasetMeta {
                format: "dklsynth-dataset".into(),
                version: formats::VERSION,
                system: self.spec.name.clone(),
                actions: self.spec.actions.clone(),
                dim: self.spec.dim(),
                per_action: c.data.per_action,
                pred: c.data.pred,
                seed: c.seed,
                samples: ds.len(),
            };
            formats::write_dataset(&self.path("dataset.csv"), &self.path("dataset.json"), &ds, &meta)?;
            Ok(ds)
        })
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        let (ds, meta) = formats::read_dataset(&self.path("dataset.csv"), &self.path("dataset.json")).context("run gen-data first")?;
        if meta.dim != self.spec.dim() || meta.actions.len() != self.spec.num_actions() {
            bail!(ConfigError::new("dataset does not match the configured system"));
        }
        Ok(ds)
    }

    pub fn train(&self) -> Result<DeepKernelModel> {
        let ds = self.load_dataset()?;
        self.timed("train", || {
            let model = train_model(&self.cfg.model_config()?, &ds, &mut stage_rng(self.cfg.seed, Stage::Train))?;
            formats::write_model(&self.path("model.json"), &self.path("nets.json"), &self.spec.name, &model)?;
            self.log(&format!("kernel parameters:\n{}", dkl::describe(&model)));
            Ok(model)
        })
    }

    pub fn load_model(&self) -> Result<DeepKernelModel> {
        let m = formats::read_model(&self.path("model.json")).context("run train first")?;
        if m.dim() != self.spec.dim() || m.num_actions() != self.spec.num_actions() {
            bail!(ConfigError::new("model does not match the configured system"));
        }
        Ok(m)
    }

    /// Fits identity-network models on the dataset and compares them with
    /// plain GPs that see the same inputs. Fails the audit above 1e-8.
    pub fn identity_check(&self) -> Result<IdentityReport> {
        const TOL: f64 = 1e-8;
        const POINTS: usize = 200;
        let ds = self.load_dataset()?;
        let n = ds.dim;
        let gp = &self.cfg.gp;
        let ids = || (0..ds.num_actions).map(|_| Some(MlpNetwork::identity(n))).collect::<Vec<_>>();
        let full = DeepKernelModel::fit_with_nets(ModelKind::new(ModelVariant::DklFull, false)?, &ds, ids(), gp)?;
        let single = DeepKernelModel::fit_with_nets(ModelKind::new(ModelVariant::DklSingle, false)?, &ds, ids(), gp)?;
        let plain = DeepKernelModel::fit_with_nets(ModelKind::ALL[0], &ds, vec![None; ds.num_actions], gp)?;
        let mut rng = stage_rng(self.cfg.seed, Stage::Identity);
        let points: Vec<Vec<f64>> = (0..POINTS).map(|_| self.spec.domain.sample(&mut rng)).collect();
        let mut fg = Discrepancy { max_mean_diff: 0.0, max_var_diff: 0.0 };
        let mut sg = fg;
        let bump = |d: &mut Discrepancy, m: f64, v: f64| {
            d.max_mean_diff = d.max_mean_diff.max(m.abs());
            d.max_var_diff = d.max_var_diff.max(v.abs());
        };
        for a in 0..ds.num_actions {
            let (xs, ys) = ds.gather(&ds.pred[a]);
            let coord: Vec<DeepKernelModel> = (0..n)
                .map(|j| {
                    let samples: Vec<Sample> =
                        xs.iter().zip(&ys).map(|(x, y)| Sample { action: 0, state: vec![x[j]], next: vec![y[j]] }).collect();
                    let m = samples.len();
                    let d1 = Dataset::from_samples(1, 1, samples, vec![(0..m).collect()])?;
                    Ok(DeepKernelModel::fit_with_nets(ModelKind::ALL[0], &d1, vec![None], gp)?)
                })
                .collect::<Result<_>>()?;
            for x in &points {
                let (m1, v1) = full.predict(x, a)?;
                let (m0, v0) = plain.predict(x, a)?;
                let (m2, v2) = single.predict(x, a)?;
                for j in 0..n {
                    bump(&mut fg, m1[j] - m0[j], v1[j] - v0[j]);
                    let (mc, vc) = coord[j].predict(&[x[j]], 0)?;
                    bump(&mut sg, m2[j] - mc[0], v2[j] - vc[0]);
                }
            }
        }
        let passed = [fg, sg].iter().all(|d| d.max_mean_diff <= TOL && d.max_var_diff <= TOL);
        let (format, version) = doc("dklsynth-identity");
        let rep = IdentityReport { format, version, points: POINTS, tolerance: TOL, full_vs_gp: fg, single_vs_coordinate_gp: sg, passed };
        formats::write_json(&self.path("identity.json"), &rep)?;
        if !passed {
            bail!(AuditFailure(format!("identity-network models differ from plain GPs: {fg:?} {sg:?}")));
        }
        Ok(rep)
    }

    pub fn eval_model(&self) -> Result<EvalReport> {
        let model = self.load_model()?;
        self.timed("eval-model", || {
            let mut rng = stage_rng(self.cfg.seed, Stage::Eval);
            let points: Vec<Vec<f64>> = (0..self.cfg.eval.points).map(|_| self.spec.domain.sample(&mut rng)).collect();
            let per_action = (0..model.num_actions()).map(|a| Ok(errors_at(&model, &self.spec, &points, a)?)).collect::<Result<Vec<_>>>()?;
            let (format, version) = doc("dklsynth-eval");
            let rep = EvalReport {
                format,
                version,
                variant: model.kind().name().into(),
                points: points.len(),
                max_err_mu: per_action.iter().map(|e| e.0).fold(0.0, f64::max),
                max_err_sigma: per_action.iter().map(|e| e.1).fold(0.0, f64::max),
                per_action,
            };
            formats::write_json(&self.path("eval.json"), &rep)?;
            Ok(rep)
        })
    }

    fn write_round(&self, abs: &Abstraction, round: usize) -> Result<()> {
        formats::write_imdp(&self.round_path("imdp", round, "json"), &self.round_path("imdp", round, "csv"), abs, &self.spec.actions, round)?;
        formats::write_bounds(&self.round_path("bounds", round, "json"), &abs.bounds, round)
    }

    pub fn build_abstraction(&self) -> Result<Abstraction> {
        let model = self.load_model()?;
        self.timed("abstract", || {
            let abs = Abstraction::build(&model, &self.spec, &self.labels, &self.cfg.grid, self.cfg.align)?;
            self.write_round(&abs, 0)?;
            Ok(abs)
        })
    }

    pub fn load_abstraction(&self, round: usize) -> Result<Abstraction> {
        let (header, abs) = formats::read_abstraction(&self.round_path("imdp", round, "json"), &self.round_path("bounds", round, "json"))
            .with_context(|| format!("no abstraction for round {round}"))?;
        if header.actions != self.spec.actions {
            bail!(ConfigError::new("abstraction does not match the configured system"));
        }
        Ok(abs)
    }

    fn solve(&self, abs: &Abstraction, round: usize) -> Result<(SynthesisResult, Percentages)> {
        let dfa = self.cfg.dfa()?;
        let s = &self.cfg.synthesis;
        let res = synthesize_with(&abs.imdp, &dfa, self.cfg.threshold, s.tol, s.max_iters)?;
        formats::write_dfa(&self.path("dfa.json"), &dfa)?;
        let pct = formats::write_result(&self.round_path("result", round, "json"), &res, &abs.partition, round)?;
        formats::write_heatmap(&self.round_path("heatmap", round, "csv"), &res, &abs.partition)?;
        Ok((res, pct))
    }

    pub fn synthesize(&self, round: usize) -> Result<(SynthesisResult, Percentages)> {
        let abs = self.load_abstraction(round)?;
        self.timed(&format!("synthesize round {round}"), || self.solve(&abs, round))
    }

    /// Runs the configured number of refinement rounds on top of round 0,
    /// synthesizing after each, and writes the lineage manifest.
    pub fn refine(&self) -> Result<Lineage> {
        let model = self.load_model()?;
        let mut abs = self.load_abstraction(0)?;
        let first = self.round_path("result", 0, "json");
        let mut res = if first.exists() { formats::read_result(&first)?.result } else { self.synthesize(0)?.0 };
        let cfg = self.cfg.refinement_config();
        let mut lineage = Lineage::new();
        lineage.rounds.push(RoundRecord {
            round: 0,
            cells: abs.partition.num_cells(),
            percentages: Percentages::of(&res, &abs.partition),
            iterations: res.iterations,
            splits: Vec::new(),
            parents: Vec::new(),
        });
        formats::write_json(&self.path("lineage.json"), &lineage)?;
        for round in 1..=cfg.rounds {
            let r = self.timed(&format!("refine round {round}"), || Ok(refinement::refine(&abs, &res, &model, &cfg)?))?;
            self.write_round(&r.abstraction, round)?;
            let (next, pct) = self.timed(&format!("synthesize round {round}"), || self.solve(&r.abstraction, round))?;
            lineage.rounds.push(RoundRecord {
                round,
                cells: r.abstraction.partition.num_cells(),
                percentages: pct,
                iterations: next.iterations,
                splits: formats::split_records(&r.splits, &r.lineage),
                parents: r.lineage.clone(),
            });
            formats::write_json(&self.path("lineage.json"), &lineage)?;
            abs = r.abstraction;
            res = next;
        }
        Ok(lineage)
    }

    /// Highest round with a stored result.
    pub fn latest_round(&self) -> Result<usize> {
        (0..)
            .take_while(|&r| self.round_path("result", r, "json").exists())
            .last()
            .ok_or_else(|| ConfigError::new("no synthesis result found; run synthesize first").into())
    }

    pub fn validate(&self, round: usize) -> Result<ValidationReport> {
        let (header, partition, _) = formats::read_imdp(&self.round_path("imdp", round, "json"))?;
        if header.actions != self.spec.actions {
            bail!(ConfigError::new("abstraction does not match the configured system"));
        }
        let res = formats::read_result(&self.round_path("result", round, "json"))?.result;
        let v = self.cfg.validation;
        self.timed(&format!("validate round {round}"), || {
            let mut rng = stage_rng(self.cfg.seed, Stage::Validate);
            let mut pick = |pool: Vec<usize>| -> Vec<usize> {
                if pool.len() <= v.cells {
                    return pool;
                }
                let mut idx: Vec<usize> = sample_indices(&mut rng, pool.len(), v.cells).into_iter().map(|k| pool[k]).collect();
                idx.sort_unstable();
                idx
            };
            let yes = pick((0..res.num_cells()).filter(|&q| res.lower[q] >= self.cfg.threshold).collect());
            let zero = pick((0..res.num_cells()).filter(|&q| res.upper[q] == 0.0).collect());
            let run_cell = |q: usize| -> Result<CellValidation> {
                let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
                rng.set_stream(((Stage::Validate as u64) << 32) | q as u64);
                let region = &partition.cell(q).region;
                let mut successes = 0;
                for _ in 0..v.runs {
                    let x0 = region.sample(&mut rng);
                    let t = simulate_under_strategy(&self.spec, &partition, &res, &self.labels, &x0, v.horizon, &mut rng)?;
                    successes += usize::from(t.outcome.is_success());
                }
                let ci = clopper_pearson(successes as u64, v.runs as u64, v.confidence);
                let passed = if res.upper[q] == 0.0 { successes == 0 } else { ci.0 >= res.lower[q] - v.margin };
                Ok(CellValidation { cell: q, class: res.classes[q], lower: res.lower[q], upper: res.upper[q], runs: v.runs, successes, ci, passed })
            };
            let yes_cells = yes.par_iter().map(|&q| run_cell(q)).collect::<Result<Vec<_>>>()?;
            let zero_cells = zero.par_iter().map(|&q| run_cell(q)).collect::<Result<Vec<_>>>()?;
            let passed = yes_cells.iter().chain(&zero_cells).all(|c| c.passed);
            let (format, version) = doc("dklsynth-validation");
            let rep = ValidationReport {
                format,
                version,
                round,
                runs: v.runs,
                horizon: v.horizon,
                confidence: v.confidence,
                margin: v.margin,
                yes_cells,
                zero_cells,
                passed,
            };
            formats::write_json(&self.round_path("validation", round, "json"), &rep)?;
            Ok(rep)
        })
    }

    pub fn audit(&self, round: usize) -> Result<AuditFile> {
        let model = self.load_model()?;
        let abs = self.load_abstraction(round)?;
        let a = self.cfg.audit;
        let rep = self.timed(&format!("audit round {round}"), || {
            Ok(abstraction::audit(&model, &abs, a.triples, a.samples, &mut stage_rng(self.cfg.seed, Stage::Audit))?)
        })?;
        let (format, version) = doc("dklsynth-audit");
        let out = AuditFile { format, version, round, triples: rep.triples, samples: rep.samples, violations: rep.violations, worst: rep.worst };
        formats::write_json(&self.round_path("audit", round, "json"), &out)?;
        if rep.violations > 0 {
            bail!(AuditFailure(format!("{} of {} sampled probabilities left their intervals (worst by {:e})", rep.violations, rep.samples, rep.worst)));
        }
        Ok(out)
    }
}

/// Loads a config file and applies the output directory relative to the
/// current directory when given on the command line.
pub fn with_output(mut cfg: ExperimentConfig, out: Option<&Path>) -> ExperimentConfig {
    if let Some(o) = out {
        cfg.output_dir = std::env::current_dir().map(|d| d.join(o)).unwrap_or_else(|_| o.to_path_buf());
    }
    cfg
}
