//! Learning constrained treatment-assignment policies from observational
//! data: cross-fitted doubly robust scores, exact decision-tree policy
//! search, policy evaluation and simulation harnesses.
//!
//! The crate is organized around the batch pipeline in [`eval::learn_policy`]:
//!
//! 1. [`data`] — datasets, CSV ingestion, fold assignment, simulators;
//! 2. [`nuisance`] — cross-fitted nuisance estimation with honest forests,
//!    k-NN or oracle learners;
//! 3. [`scores`] — per-observation doubly robust scores for the AIPW, IV,
//!    continuous-treatment and IPW identification strategies;
//! 4. [`policy`] — tree policies and exact search over depth <= 2 trees;
//! 5. [`eval`] — advantage estimates, cross-validation, agreement and
//!    regret-scaling diagnostics.
//!
//! Everything stochastic is a pure function of its arguments and a `u64`
//! seed (see [`rng`]), and nothing depends on thread count.

pub mod data;
pub mod error;
pub mod eval;
pub mod nuisance;
pub mod policy;
pub mod rng;
pub mod scores;

pub use data::{
    assign_folds, load_csv, simulate_ambiguous, simulate_iv, write_csv, CsvSchema, Dataset,
    FeatureSelect, FoldAssignment, Matrix, TauSpec, TreatmentKind,
};
pub use error::{Error, ErrorCategory, Result};
pub use eval::{
    advantage, ambiguous_improvement, cross_validate, fold_agreement, learn_policy,
    learn_policy_from_nuisance, regret_bound_diag, true_improvement, CrossValReport, EvalReport,
    LearnOutput, PipelineConfig, RegretBoundDiag, SweepRow,
};
pub use nuisance::{
    fit_crossfit, fit_honest_forest, fit_knn, CrossFitNuisance, ForestParams, HonestForest,
    KnnModel, NuisanceLearnerSpec, NuisanceTarget, OracleFunctions,
};
pub use policy::{brute_force_search, exact_tree_search, plugin_policy, PolicyNode, SearchResult, TreePolicy};
pub use scores::{
    aipw_scores, continuous_scores, ipw_scores, iv_scores, write_scores_csv, ScoreFamily,
    ScoreSet,
};
