//! Flag parsing and config-file merging.
//!
//! Every option can come from the command line or from a JSON config file
//! (`--config`); flags override file entries, and anything still unset
//! falls back to the documented default.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use drpolicy_core::{
    CsvSchema, Error as CoreError, ForestParams, NuisanceLearnerSpec, PipelineConfig,
    ScoreFamily, TreatmentKind,
};

use crate::CliError;

#[derive(Parser, Debug)]
#[command(
    name = "drpolicy",
    version,
    about = "Doubly robust policy learning: simulate, learn, evaluate, crossval, sweep"
)]
pub struct Cli {
    /// JSON config file; command-line flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Draw a synthetic dataset and write it as CSV.
    Simulate(SimulateArgs),
    /// Learn a tree policy from a CSV dataset.
    Learn(PipelineArgs),
    /// Evaluate a stored policy JSON against a CSV dataset.
    Evaluate(PipelineArgs),
    /// Cross-validate the learning procedure.
    Crossval(PipelineArgs),
    /// Replication sweep over (n, seed) grids of a simulated DGP.
    Sweep(SweepArgs),
}

/// Config-file counterpart of the flags; one flat namespace shared by all
/// commands (each command reads the keys it understands).
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub schema: Option<String>,
    pub family: Option<String>,
    pub learner: Option<String>,
    pub trees: Option<usize>,
    pub subsample: Option<f64>,
    pub min_leaf: Option<usize>,
    pub mtry: Option<usize>,
    pub knn_k: Option<usize>,
    pub oracle_file: Option<PathBuf>,
    pub k: Option<usize>,
    pub depth: Option<usize>,
    pub c: Option<f64>,
    pub eta: Option<f64>,
    pub delta_min: Option<f64>,
    pub gmax: Option<f64>,
    pub seed: Option<u64>,
    pub mask: Option<String>,
    pub refit_scores_per_fold: Option<bool>,
    pub policy: Option<PathBuf>,
    pub dgp: Option<String>,
    pub tau: Option<String>,
    pub n: Option<String>,
    pub s: Option<usize>,
    pub tau_scale: Option<f64>,
    pub reps: Option<usize>,
    pub n_mc: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&PathBuf>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let raw = std::fs::read_to_string(p).map_err(|e| {
                    CliError::Config(format!("cannot read config file {}: {e}", p.display()))
                })?;
                serde_json::from_str(&raw).map_err(|e| {
                    CliError::Config(format!("invalid config file {}: {e}", p.display()))
                })
            }
        }
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Data-generating process: iv | ambiguous.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Treatment effect shape for the iv DGP: additive | product.
    #[arg(long)]
    pub tau: Option<String>,
    /// Number of observations.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Feature dimension of the ambiguous DGP.
    #[arg(long)]
    pub s: Option<usize>,
    /// Effect scale of the ambiguous DGP.
    #[arg(long)]
    pub tau_scale: Option<f64>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Input dataset CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Column mapping, e.g. outcome=y,treatment=w,instrument=z,features=rest.
    #[arg(long)]
    pub schema: Option<String>,
    /// Score family: aipw | iv | continuous | ipw.
    #[arg(long)]
    pub family: Option<String>,
    /// Nuisance learner: forest | knn | oracle-file.
    #[arg(long)]
    pub learner: Option<String>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub subsample: Option<f64>,
    #[arg(long)]
    pub min_leaf: Option<usize>,
    /// Features tried per forest split (0 = sqrt of p).
    #[arg(long)]
    pub mtry: Option<usize>,
    #[arg(long)]
    pub knn_k: Option<usize>,
    /// CSV of precomputed nuisance columns for the oracle-file learner.
    #[arg(long)]
    pub oracle_file: Option<PathBuf>,
    /// Number of cross-fitting folds.
    #[arg(long)]
    pub k: Option<usize>,
    /// Tree policy depth (0..=2).
    #[arg(long)]
    pub depth: Option<usize>,
    /// Treatment cost subtracted inside the scores.
    #[arg(long)]
    pub c: Option<f64>,
    /// Propensity clipping level in (0, 0.5).
    #[arg(long)]
    pub eta: Option<f64>,
    /// Weak-instrument threshold on |delta_hat|.
    #[arg(long)]
    pub delta_min: Option<f64>,
    /// Weight cap for the continuous family.
    #[arg(long)]
    pub gmax: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Features eligible for policy splits: comma list of names or 0-based
    /// indices. Defaults to all features.
    #[arg(long)]
    pub mask: Option<String>,
    /// Refit scores on the training folds of each CV fold instead of using
    /// the full-data cross-fitted scores.
    #[arg(long)]
    pub refit_scores_per_fold: bool,
    /// Policy JSON to evaluate (evaluate command only).
    #[arg(long)]
    pub policy: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    /// Data-generating process: iv | ambiguous.
    #[arg(long)]
    pub dgp: Option<String>,
    /// Treatment effect shape for the iv DGP: additive | product.
    #[arg(long)]
    pub tau: Option<String>,
    /// Comma-separated sample sizes, e.g. 500,2000,4000.
    #[arg(long)]
    pub n: Option<String>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub tau_scale: Option<f64>,
    /// Replications per sample size.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Monte Carlo draws for the true-improvement column.
    #[arg(long)]
    pub n_mc: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dgp {
    Iv,
    Ambiguous,
}

impl Dgp {
    pub fn name(self) -> &'static str {
        match self {
            Dgp::Iv => "iv",
            Dgp::Ambiguous => "ambiguous",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauKind {
    Additive,
    Product,
}

impl TauKind {
    pub fn name(self) -> &'static str {
        match self {
            TauKind::Additive => "additive",
            TauKind::Product => "product",
        }
    }

    pub fn to_spec(self) -> drpolicy_core::TauSpec {
        match self {
            TauKind::Additive => drpolicy_core::TauSpec::Additive,
            TauKind::Product => drpolicy_core::TauSpec::Product,
        }
    }
}

fn parse_dgp(s: &str) -> Result<Dgp, CliError> {
    match s {
        "iv" => Ok(Dgp::Iv),
        "ambiguous" => Ok(Dgp::Ambiguous),
        other => Err(CliError::Config(format!("unknown dgp `{other}`"))),
    }
}

fn parse_tau(s: &str) -> Result<TauKind, CliError> {
    match s {
        "additive" => Ok(TauKind::Additive),
        "product" => Ok(TauKind::Product),
        other => Err(CliError::Config(format!("unknown tau `{other}`"))),
    }
}

fn parse_n_list(s: &str) -> Result<Vec<usize>, CliError> {
    let out: Result<Vec<usize>, _> =
        s.split(',').filter(|t| !t.is_empty()).map(|t| t.trim().parse::<usize>()).collect();
    let out = out.map_err(|_| CliError::Config(format!("invalid sample size list `{s}`")))?;
    if out.is_empty() {
        return Err(CliError::Config("empty sample size list".into()));
    }
    Ok(out)
}

#[derive(Debug)]
pub struct SimulateCfg {
    pub dgp: Dgp,
    pub tau: TauKind,
    pub n: usize,
    pub seed: u64,
    pub s: usize,
    pub tau_scale: f64,
    pub output_dir: PathBuf,
}

impl SimulateCfg {
    pub fn resolve(a: SimulateArgs, f: &FileConfig) -> Result<Self, CliError> {
        let n_raw = a.n.or_else(|| f.n.clone()).unwrap_or_else(|| "1000".into());
        let ns = parse_n_list(&n_raw)?;
        if ns.len() != 1 {
            return Err(CliError::Config(
                "simulate takes a single --n; lists are for sweep".into(),
            ));
        }
        Ok(Self {
            dgp: parse_dgp(&a.dgp.or_else(|| f.dgp.clone()).unwrap_or_else(|| "iv".into()))?,
            tau: parse_tau(&a.tau.or_else(|| f.tau.clone()).unwrap_or_else(|| "product".into()))?,
            n: ns[0],
            seed: a.seed.or(f.seed).unwrap_or(1),
            s: a.s.or(f.s).unwrap_or(2),
            tau_scale: a.tau_scale.or(f.tau_scale).unwrap_or(1.0),
            output_dir: a
                .output_dir
                .or_else(|| f.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::json!({
            "dgp": self.dgp.name(),
            "tau": self.tau.name(),
            "n": self.n,
            "s": self.s,
            "tau_scale": self.tau_scale,
        })
    }
}

/// Learner choice after merging; the oracle table is loaded lazily because
/// it must match the dataset's row count.
#[derive(Debug, Clone)]
pub enum LearnerChoice {
    Spec(NuisanceLearnerSpec),
    OracleFile(PathBuf),
}

#[derive(Debug)]
pub struct PipelineCfg {
    pub input: PathBuf,
    pub schema_text: String,
    pub family: ScoreFamily,
    pub learner: LearnerChoice,
    pub k: usize,
    pub depth: usize,
    pub c: f64,
    pub eta: f64,
    pub delta_min: f64,
    pub gmax: f64,
    pub seed: u64,
    pub mask: Option<String>,
    pub refit_scores_per_fold: bool,
    pub policy: Option<PathBuf>,
    pub output_dir: PathBuf,
}

impl PipelineCfg {
    pub fn resolve(a: PipelineArgs, f: &FileConfig) -> Result<Self, CliError> {
        let family: ScoreFamily = a
            .family
            .or_else(|| f.family.clone())
            .unwrap_or_else(|| "aipw".into())
            .parse()
            .map_err(|e: CoreError| CliError::Config(e.to_string()))?;
        let learner_name =
            a.learner.or_else(|| f.learner.clone()).unwrap_or_else(|| "forest".into());
        let learner = match learner_name.as_str() {
            "forest" => LearnerChoice::Spec(NuisanceLearnerSpec::HonestForest(ForestParams {
                num_trees: a.trees.or(f.trees).unwrap_or(200),
                subsample: a.subsample.or(f.subsample).unwrap_or(0.5),
                min_leaf: a.min_leaf.or(f.min_leaf).unwrap_or(5),
                mtry: a.mtry.or(f.mtry).unwrap_or(0),
            })),
            "knn" => LearnerChoice::Spec(NuisanceLearnerSpec::Knn {
                k: a.knn_k.or(f.knn_k).unwrap_or(10),
            }),
            "oracle-file" => {
                let path = a.oracle_file.or_else(|| f.oracle_file.clone()).ok_or_else(|| {
                    CliError::Config("--learner oracle-file needs --oracle-file <path>".into())
                })?;
                LearnerChoice::OracleFile(path)
            }
            other => return Err(CliError::Config(format!("unknown learner `{other}`"))),
        };
        let schema_text = a.schema.or_else(|| f.schema.clone()).unwrap_or_else(|| {
            if family == ScoreFamily::Iv {
                "outcome=y,treatment=w,instrument=z,features=rest".into()
            } else {
                "outcome=y,treatment=w,features=rest".into()
            }
        });
        Ok(Self {
            input: a
                .input
                .or_else(|| f.input.clone())
                .ok_or_else(|| CliError::Config("missing --input".into()))?,
            schema_text,
            family,
            learner,
            k: a.k.or(f.k).unwrap_or(10),
            depth: a.depth.or(f.depth).unwrap_or(2),
            c: a.c.or(f.c).unwrap_or(0.0),
            eta: a.eta.or(f.eta).unwrap_or(0.05),
            delta_min: a.delta_min.or(f.delta_min).unwrap_or(0.05),
            gmax: a.gmax.or(f.gmax).unwrap_or(20.0),
            seed: a.seed.or(f.seed).unwrap_or(1),
            mask: a.mask.or_else(|| f.mask.clone()),
            refit_scores_per_fold: a.refit_scores_per_fold
                || f.refit_scores_per_fold.unwrap_or(false),
            policy: a.policy.or_else(|| f.policy.clone()),
            output_dir: a
                .output_dir
                .or_else(|| f.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn csv_schema(&self) -> Result<CsvSchema, CliError> {
        let kind = if self.family == ScoreFamily::Continuous {
            TreatmentKind::Continuous
        } else {
            TreatmentKind::Binary
        };
        CsvSchema::parse(&self.schema_text, kind).map_err(CliError::from)
    }

    /// Pipeline parameters for the core runs; errors for oracle-file, whose
    /// callers construct the nuisance themselves.
    pub fn core_config(&self) -> Result<PipelineConfig, CliError> {
        let learner = match &self.learner {
            LearnerChoice::Spec(s) => s.clone(),
            LearnerChoice::OracleFile(_) => {
                return Err(CliError::Config(
                    "oracle-file learner is only supported by learn and evaluate".into(),
                ))
            }
        };
        Ok(PipelineConfig {
            family: self.family,
            learner,
            depth: self.depth,
            k: self.k,
            c: self.c,
            eta: self.eta,
            delta_min: self.delta_min,
            gmax: self.gmax,
            refit_scores_per_fold: self.refit_scores_per_fold,
        })
    }

    /// Config echo for provenance blocks. The output directory is omitted:
    /// it does not affect results, so identical configurations produce
    /// byte-identical artifacts wherever they are written.
    pub fn echo(&self) -> serde_json::Value {
        let learner = match &self.learner {
            LearnerChoice::Spec(s) => s.provenance(),
            LearnerChoice::OracleFile(p) => {
                serde_json::json!({"kind": "oracle_file", "path": p.display().to_string()})
            }
        };
        serde_json::json!({
            "input": self.input.display().to_string(),
            "schema": self.schema_text,
            "family": self.family.name(),
            "learner": learner,
            "k": self.k,
            "depth": self.depth,
            "c": self.c,
            "eta": self.eta,
            "delta_min": self.delta_min,
            "gmax": self.gmax,
            "mask": self.mask,
            "refit_scores_per_fold": self.refit_scores_per_fold,
            "policy": self.policy.as_ref().map(|p| p.display().to_string()),
        })
    }
}

#[derive(Debug)]
pub struct SweepCfg {
    pub pipeline: PipelineCfg,
    pub dgp: Dgp,
    pub tau: TauKind,
    pub n_list: Vec<usize>,
    pub s: usize,
    pub tau_scale: f64,
    pub reps: usize,
    pub n_mc: usize,
}

impl SweepCfg {
    pub fn resolve(a: SweepArgs, f: &FileConfig) -> Result<Self, CliError> {
        let mut pa = a.pipeline;
        // sweeps simulate their own data; --input is not required
        if pa.input.is_none() && f.input.is_none() {
            pa.input = Some(PathBuf::from("<simulated>"));
        }
        let n_raw = a.n.or_else(|| f.n.clone()).unwrap_or_else(|| "500,2000,4000".into());
        Ok(Self {
            pipeline: PipelineCfg::resolve(pa, f)?,
            dgp: parse_dgp(&a.dgp.or_else(|| f.dgp.clone()).unwrap_or_else(|| "iv".into()))?,
            tau: parse_tau(&a.tau.or_else(|| f.tau.clone()).unwrap_or_else(|| "product".into()))?,
            n_list: parse_n_list(&n_raw)?,
            s: a.s.or(f.s).unwrap_or(2),
            tau_scale: a.tau_scale.or(f.tau_scale).unwrap_or(1.0),
            reps: a.reps.or(f.reps).unwrap_or(8),
            n_mc: a.n_mc.or(f.n_mc).unwrap_or(100_000),
        })
    }
}
