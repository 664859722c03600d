//! Command-line interface.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};

use crate::config::{preset, ExperimentConfig};
use crate::error::{AuditFailure, ConfigError};
use crate::pipeline::{with_output, Pipeline};

#[derive(Debug, Parser)]
#[command(name = "dklsynth", version, about = "Learning-based abstraction and robust strategy synthesis")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

/// Config selection and overrides; flags win over the config file.
#[derive(Debug, Default, Args)]
pub struct Common {
    /// Experiment config JSON.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in config: 2d, 3d or 5d.
    #[arg(long, global = true, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for the parallel stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Model variant: gp, nn-gp, nn-gp-l, dkl-f, dkl-fl, dkl-s, dkl-sl.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Cells per dimension, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(long, global = true)]
    pub threshold: Option<f64>,
    /// Built-in automaton name or DFA JSON file.
    #[arg(long, global = true)]
    pub spec: Option<String>,
    #[arg(long, global = true)]
    pub per_action: Option<usize>,
    #[arg(long, global = true)]
    pub pred: Option<usize>,
    #[arg(long, global = true)]
    pub rounds: Option<usize>,
    #[arg(long, global = true)]
    pub n_ref: Option<usize>,
    /// Simulation horizon for validate.
    #[arg(long, global = true)]
    pub horizon: Option<usize>,
    /// Simulations per start cell for validate.
    #[arg(long, global = true)]
    pub runs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the dataset.
    GenData,
    /// Train the model on the dataset.
    Train {
        /// Also check identity-network models against plain GPs.
        #[arg(long)]
        identity_check: bool,
    },
    /// Maximum mean error and predictive deviation on uniform test points.
    EvalModel {
        #[arg(long)]
        points: Option<usize>,
    },
    /// Build the partition and the round-0 IMDP.
    Abstract,
    /// Synthesize a strategy on one round's IMDP.
    Synthesize {
        #[arg(long, default_value_t = 0)]
        round: usize,
    },
    /// Refine and re-synthesize for the configured number of rounds.
    Refine,
    /// Simulate the true system under a synthesized strategy.
    Validate {
        /// Defaults to the latest round.
        #[arg(long)]
        round: Option<usize>,
        /// Start cells sampled per checked class.
        #[arg(long)]
        cells: Option<usize>,
    },
    /// Check transition intervals against the exact per-point kernel.
    Audit {
        /// Defaults to the latest abstraction round.
        #[arg(long)]
        round: Option<usize>,
        #[arg(long)]
        triples: Option<usize>,
        #[arg(long)]
        samples: Option<usize>,
    },
}

/// Loads the config named on the command line and applies the overrides.
pub fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match (&c.config, &c.preset) {
        (Some(p), _) => ExperimentConfig::load(p)?,
        (None, Some(name)) => preset(name)?,
        (None, None) => bail!(ConfigError::new("either --config or --preset is required")),
    };
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = &c.model {
        cfg.model = v.clone();
    }
    if let Some(v) = &c.grid {
        cfg.grid = v.clone();
    }
    if let Some(v) = c.threshold {
        cfg.threshold = v;
    }
    if let Some(v) = &c.spec {
        cfg.spec = v.clone();
    }
    if let Some(v) = c.per_action {
        cfg.data.per_action = v;
    }
    if let Some(v) = c.pred {
        cfg.data.pred = v;
    }
    if let Some(v) = c.rounds {
        cfg.refinement.rounds = v;
    }
    if let Some(v) = c.n_ref {
        cfg.refinement.n_ref = v;
    }
    if let Some(v) = c.horizon {
        cfg.validation.horizon = v;
    }
    if let Some(v) = c.runs {
        cfg.validation.runs = v;
    }
    Ok(with_output(cfg, c.out.as_deref()))
}

fn pct(p: &crate::formats::Percentages) -> String {
    format!("yes {:.2}%, no {:.2}%, unknown {:.2}%", p.yes, p.no, p.unknown)
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            bail!(ConfigError::new("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let mut cfg = load_config(&cli.common)?;
    match &cli.command {
        Command::EvalModel { points: Some(p) } => cfg.eval.points = *p,
        Command::Validate { cells: Some(c), .. } => cfg.validation.cells = *c,
        Command::Audit { triples, samples, .. } => {
            cfg.audit.triples = triples.unwrap_or(cfg.audit.triples);
            cfg.audit.samples = samples.unwrap_or(cfg.audit.samples);
        }
        _ => {}
    }
    let p = Pipeline::new(cfg)?;
    p.log(&format!("command {:?}", cli.command));
    match cli.command {
        Command::GenData => {
            let ds = p.gen_data()?;
            println!("wrote {} samples ({} per action, {} for prediction) to {}", ds.len(), p.cfg.data.per_action, p.cfg.data.pred, p.dir.display());
        }
        Command::Train { identity_check } => {
            let m = p.train()?;
            println!("trained {} model for {} actions", m.kind().name(), m.num_actions());
            if identity_check {
                let r = p.identity_check()?;
                println!(
                    "identity check passed: full vs GP max diff {:.2e}/{:.2e}, single vs coordinate GP {:.2e}/{:.2e}",
                    r.full_vs_gp.max_mean_diff, r.full_vs_gp.max_var_diff, r.single_vs_coordinate_gp.max_mean_diff, r.single_vs_coordinate_gp.max_var_diff
                );
            }
        }
        Command::EvalModel { .. } => {
            let r = p.eval_model()?;
            println!("{} over {} points: max err_mu {:.4}, max err_sigma {:.4}", r.variant, r.points, r.max_err_mu, r.max_err_sigma);
        }
        Command::Abstract => {
            let abs = p.build_abstraction()?;
            println!("abstraction: {} cells, {} transitions", abs.partition.num_cells(), abs.imdp.num_transitions());
        }
        Command::Synthesize { round } => {
            let (res, pc) = p.synthesize(round)?;
            println!("round {round}: {} cells, {} ({} iterations)", res.num_cells(), pct(&pc), res.iterations);
        }
        Command::Refine => {
            let lin = p.refine()?;
            for r in &lin.rounds {
                println!("round {}: {} cells, {}", r.round, r.cells, pct(&r.percentages));
            }
        }
        Command::Validate { round, .. } => {
            let round = match round {
                Some(r) => r,
                None => p.latest_round()?,
            };
            let r = p.validate(round)?;
            for c in r.yes_cells.iter().chain(&r.zero_cells) {
                println!(
                    "cell {:>6} [{:.4}, {:.4}]: {}/{} satisfied, {:.0}% CI [{:.4}, {:.4}] {}",
                    c.cell,
                    c.lower,
                    c.upper,
                    c.successes,
                    c.runs,
                    100.0 * r.confidence,
                    c.ci.0,
                    c.ci.1,
                    if c.passed { "ok" } else { "FAIL" }
                );
            }
            if !r.passed {
                bail!(AuditFailure("empirical satisfaction below the certified bound".into()));
            }
            println!("validation passed on {} cells", r.yes_cells.len() + r.zero_cells.len());
        }
        Command::Audit { round, .. } => {
            let round = match round {
                Some(r) => r,
                None => (0..).take_while(|&r| p.round_path("imdp", r, "json").exists()).last().unwrap_or(0),
            };
            let r = p.audit(round)?;
            println!("audit round {round}: {} triples, {} samples, 0 violations", r.triples, r.samples);
        }
    }
    Ok(())
}
