//! Command implementations. One command = one batch run; every JSON
//! artifact embeds a provenance block (command, config echo, seed,
//! version) sufficient to re-run it exactly.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde_json::json;

use drpolicy_core::{
    advantage, ambiguous_improvement, assign_folds, cross_validate, fold_agreement, learn_policy,
    learn_policy_from_nuisance, load_csv, simulate_ambiguous, simulate_iv, true_improvement,
    write_csv, write_scores_csv, CrossFitNuisance, Dataset, Error as CoreError, LearnOutput,
    NuisanceLearnerSpec, NuisanceTarget, OracleFunctions, PipelineConfig, ScoreFamily, SweepRow,
    TreePolicy,
};

use crate::config::{Dgp, LearnerChoice, PipelineCfg, SimulateCfg, SweepCfg};
use crate::CliError;

fn provenance(command: &str, config: serde_json::Value, seed: u64) -> serde_json::Value {
    json!({
        "command": command,
        "config": config,
        "seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(CoreError::from)?;
    std::fs::write(path, text + "\n").map_err(CoreError::from)?;
    Ok(())
}

fn with_provenance(
    mut value: serde_json::Value,
    prov: &serde_json::Value,
) -> Result<serde_json::Value, CliError> {
    let obj = value
        .as_object_mut()
        .ok_or_else(|| CliError::Config("artifact is not a JSON object".into()))?;
    obj.insert("provenance".into(), prov.clone());
    Ok(value)
}

pub fn run_simulate(cfg: SimulateCfg) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(CoreError::from)?;
    let prov = provenance("simulate", cfg.echo(), cfg.seed);
    match cfg.dgp {
        Dgp::Iv => {
            let (data, true_tau) = simulate_iv(cfg.n, &cfg.tau.to_spec(), cfg.seed)?;
            write_csv(&data, cfg.output_dir.join("dataset.csv"))?;
            let mut w = csv::Writer::from_path(cfg.output_dir.join("true_tau.csv"))
                .map_err(CoreError::from)?;
            w.write_record(["index", "true_tau"]).map_err(CoreError::from)?;
            for (i, t) in true_tau.iter().enumerate() {
                w.write_record([i.to_string(), format!("{t}")]).map_err(CoreError::from)?;
            }
            w.flush().map_err(CoreError::from)?;
        }
        Dgp::Ambiguous => {
            let data = simulate_ambiguous(cfg.n, cfg.s, cfg.tau_scale, cfg.seed)?;
            write_csv(&data, cfg.output_dir.join("dataset.csv"))?;
        }
    }
    write_json(&cfg.output_dir.join("provenance.json"), &json!({"provenance": prov}))?;
    Ok(())
}

/// Turn a mask flag (names or 0-based indices) into column indices.
fn resolve_mask(text: &str, data: &Dataset) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for entry in text.split(',').filter(|e| !e.is_empty()) {
        let e = entry.trim();
        if let Ok(idx) = e.parse::<usize>() {
            out.push(idx);
        } else {
            let idx = data
                .feature_names()
                .iter()
                .position(|n| n == e)
                .ok_or_else(|| CliError::Config(format!("mask entry `{e}` is not a feature")))?;
            out.push(idx);
        }
    }
    Ok(out)
}

fn load_dataset(cfg: &PipelineCfg) -> Result<Dataset, CliError> {
    let schema = cfg.csv_schema()?;
    let mut data = load_csv(&cfg.input, &schema)?;
    if let Some(mask_text) = &cfg.mask {
        let mask = resolve_mask(mask_text, &data)?;
        data = data.with_mask(mask)?;
    }
    Ok(data)
}

fn oracle_column(name: &str) -> Option<NuisanceTarget> {
    match name {
        "f" => Some(NuisanceTarget::Outcome),
        "e" => Some(NuisanceTarget::Propensity),
        "tau" => Some(NuisanceTarget::Cate),
        "z" => Some(NuisanceTarget::InstrumentPropensity),
        "delta" => Some(NuisanceTarget::Compliance),
        "mu_w" => Some(NuisanceTarget::TreatmentMean),
        "sigma_w" => Some(NuisanceTarget::TreatmentStd),
        _ => None,
    }
}

/// Load a row-aligned nuisance table: columns named f, e, tau, z, delta,
/// mu_w, sigma_w (any subset).
fn load_oracle_table(
    path: &Path,
    n: usize,
) -> Result<BTreeMap<NuisanceTarget, Vec<f64>>, CliError> {
    let mut reader =
        csv::ReaderBuilder::new().has_headers(true).from_path(path).map_err(CoreError::from)?;
    let header: Vec<String> =
        reader.headers().map_err(CoreError::from)?.iter().map(|s| s.trim().to_string()).collect();
    let mut targets = Vec::new();
    for name in &header {
        let t = oracle_column(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown oracle column `{name}` (expected f, e, tau, z, delta, mu_w, sigma_w)"
            ))
        })?;
        targets.push(t);
    }
    let mut cols: BTreeMap<NuisanceTarget, Vec<f64>> =
        targets.iter().map(|&t| (t, Vec::new())).collect();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(CoreError::from)?;
        for (j, &t) in targets.iter().enumerate() {
            let raw = record.get(j).unwrap_or("").trim();
            let v: f64 = raw.parse().map_err(|_| {
                CoreError::NonNumeric {
                    row: row_idx + 1,
                    column: header[j].clone(),
                    value: raw.to_string(),
                }
            })?;
            cols.get_mut(&t).unwrap().push(v);
        }
    }
    for (t, col) in &cols {
        if col.len() != n {
            return Err(CoreError::LengthMismatch(format!(
                "oracle column `{}` has {} rows, dataset has {n}",
                t.name(),
                col.len()
            ))
            .into());
        }
    }
    Ok(cols)
}

/// Shared learn/evaluate plumbing: produce a LearnOutput (learn) or the
/// scores for a fixed policy (evaluate handles its own advantage call).
fn run_pipeline(cfg: &PipelineCfg, data: &Dataset) -> Result<LearnOutput, CliError> {
    match &cfg.learner {
        LearnerChoice::Spec(_) => {
            let core = cfg.core_config()?;
            Ok(learn_policy(data, &core, cfg.seed)?)
        }
        LearnerChoice::OracleFile(path) => {
            let folds = assign_folds(
                data.n(),
                cfg.k,
                drpolicy_core::rng::splitmix64(cfg.seed ^ 0xF01D),
            )?;
            let cols = load_oracle_table(path, data.n())?;
            let nu = CrossFitNuisance::from_columns(
                cols,
                folds,
                json!({"kind": "oracle_file", "path": path.display().to_string()}),
            )?;
            let core = PipelineConfig {
                family: cfg.family,
                learner: NuisanceLearnerSpec::Oracle(OracleFunctions::default()),
                depth: cfg.depth,
                k: cfg.k,
                c: cfg.c,
                eta: cfg.eta,
                delta_min: cfg.delta_min,
                gmax: cfg.gmax,
                refit_scores_per_fold: cfg.refit_scores_per_fold,
            };
            Ok(learn_policy_from_nuisance(data, &core, nu)?)
        }
    }
}

fn report_json(out: &LearnOutput, prov: &serde_json::Value) -> Result<serde_json::Value, CliError> {
    let mut v = serde_json::to_value(&out.report).map_err(CoreError::from)?;
    v.as_object_mut()
        .expect("report serializes to an object")
        .insert("search_objective".into(), json!(out.objective));
    with_provenance(v, prov)
}

pub fn run_learn(cfg: PipelineCfg) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(CoreError::from)?;
    let data = load_dataset(&cfg)?;
    let prov = provenance("learn", cfg.echo(), cfg.seed);
    let out = run_pipeline(&cfg, &data)?;

    let policy_json =
        with_provenance(serde_json::to_value(&out.policy).map_err(CoreError::from)?, &prov)?;
    write_json(&cfg.output_dir.join("policy.json"), &policy_json)?;
    write_json(&cfg.output_dir.join("report.json"), &report_json(&out, &prov)?)?;
    write_scores_csv(&out.scores, cfg.output_dir.join("scores.csv"))?;
    Ok(())
}

pub fn run_evaluate(cfg: PipelineCfg) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(CoreError::from)?;
    let data = load_dataset(&cfg)?;
    let policy_path = cfg
        .policy
        .clone()
        .ok_or_else(|| CliError::Config("evaluate needs --policy <policy.json>".into()))?;
    let raw = std::fs::read_to_string(&policy_path).map_err(CoreError::from)?;
    let policy: TreePolicy = serde_json::from_str(&raw).map_err(CoreError::from)?;
    let actions = policy.actions(data.features())?;

    // score the data with the configured family/learner, then report the
    // supplied policy's advantage; the pipeline runs at depth 0 because its
    // searched policy is discarded
    let mut cfg = cfg;
    let requested_depth = cfg.depth;
    cfg.depth = 0;
    let out = run_pipeline(&cfg, &data)?;
    cfg.depth = requested_depth;
    let mut report = advantage(&actions, &out.scores)?;
    if policy.depth() >= 1 {
        report.bound =
            Some(drpolicy_core::regret_bound_diag(&out.scores, policy.depth(), data.p(), 0.25)?);
    }
    let prov = provenance("evaluate", cfg.echo(), cfg.seed);
    let mut v = serde_json::to_value(&report).map_err(CoreError::from)?;
    v.as_object_mut()
        .expect("report serializes to an object")
        .insert("policy_depth".into(), json!(policy.depth()));
    write_json(&cfg.output_dir.join("report.json"), &with_provenance(v, &prov)?)?;
    Ok(())
}

pub fn run_crossval(cfg: PipelineCfg) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.output_dir).map_err(CoreError::from)?;
    let data = load_dataset(&cfg)?;
    let core = cfg.core_config()?;
    let prov = provenance("crossval", cfg.echo(), cfg.seed);

    let cv = cross_validate(&data, &core, cfg.k, cfg.seed)?;
    let full = learn_policy(&data, &core, cfg.seed)?;
    let agreement = fold_agreement(&full.policy, &cv.fold_policies, data.features())?;

    let policy_json =
        with_provenance(serde_json::to_value(&full.policy).map_err(CoreError::from)?, &prov)?;
    write_json(&cfg.output_dir.join("policy.json"), &policy_json)?;

    let mut fold_files = Vec::new();
    for (i, p) in cv.fold_policies.iter().enumerate() {
        let name = format!("fold_policy_{}.json", i + 1);
        let v = with_provenance(serde_json::to_value(p).map_err(CoreError::from)?, &prov)?;
        write_json(&cfg.output_dir.join(&name), &v)?;
        fold_files.push(name);
    }

    let cv_json = with_provenance(
        json!({
            "a_cv": cv.a_cv,
            "se": cv.se,
            "n": cv.n,
            "k": cv.k,
            "refit_scores_per_fold": cv.refit_scores_per_fold,
            "full_policy_file": "policy.json",
            "fold_policy_files": fold_files,
            "full_data_a_hat": full.report.a_hat,
        }),
        &prov,
    )?;
    write_json(&cfg.output_dir.join("crossval.json"), &cv_json)?;

    let mut w = csv::Writer::from_path(cfg.output_dir.join("agreement.csv"))
        .map_err(CoreError::from)?;
    w.write_record(["index", "agreement"]).map_err(CoreError::from)?;
    for (i, a) in agreement.iter().enumerate() {
        w.write_record([i.to_string(), format!("{a}")]).map_err(CoreError::from)?;
    }
    w.flush().map_err(CoreError::from)?;
    Ok(())
}

pub fn run_sweep(cfg: SweepCfg) -> Result<(), CliError> {
    std::fs::create_dir_all(&cfg.pipeline.output_dir).map_err(CoreError::from)?;
    let core = cfg.pipeline.core_config()?;
    if cfg.dgp == Dgp::Iv && cfg.pipeline.family == ScoreFamily::Continuous {
        return Err(CliError::Config("the iv DGP produces a binary treatment".into()));
    }

    let grid: Vec<(usize, u64)> = cfg
        .n_list
        .iter()
        .flat_map(|&n| (0..cfg.reps).map(move |r| (n, cfg.pipeline.seed + r as u64)))
        .collect();

    let rows: Result<Vec<SweepRow>, CliError> = grid
        .par_iter()
        .map(|&(n, sim_seed)| -> Result<SweepRow, CliError> {
            let learn_seed =
                drpolicy_core::rng::splitmix64(sim_seed ^ ((n as u64) << 17) ^ 0x5EED);
            let (data, out, improvement) = match cfg.dgp {
                Dgp::Iv => {
                    let (mut data, _) = simulate_iv(n, &cfg.tau.to_spec(), sim_seed)?;
                    if let Some(mask_text) = &cfg.pipeline.mask {
                        let mask = resolve_mask(mask_text, &data)?;
                        data = data.with_mask(mask)?;
                    }
                    let out = learn_policy(&data, &core, learn_seed)?;
                    let policy = out.policy.clone();
                    let imp = true_improvement(
                        move |x| policy.action(x).expect("simulated features cover the policy"),
                        &cfg.tau.to_spec(),
                        cfg.n_mc,
                        drpolicy_core::rng::splitmix64(sim_seed ^ 0x7A0),
                    )?;
                    (data, out, imp)
                }
                Dgp::Ambiguous => {
                    let mut data = simulate_ambiguous(n, cfg.s, cfg.tau_scale, sim_seed)?;
                    if let Some(mask_text) = &cfg.pipeline.mask {
                        let mask = resolve_mask(mask_text, &data)?;
                        data = data.with_mask(mask)?;
                    }
                    let out = learn_policy(&data, &core, learn_seed)?;
                    let imp = ambiguous_improvement(&out.policy, cfg.s, cfg.tau_scale)?
                        / (n as f64).sqrt();
                    (data, out, imp)
                }
            };
            let _ = data;
            Ok(SweepRow {
                seed: sim_seed,
                n,
                family: cfg.pipeline.family,
                a_hat: out.report.a_hat,
                se: out.report.se,
                true_improvement: improvement,
            })
        })
        .collect();
    let rows = rows?;

    let out_path = cfg.pipeline.output_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&out_path).map_err(CoreError::from)?;
    w.write_record(["seed", "n", "family", "a_hat", "se", "true_improvement"])
        .map_err(CoreError::from)?;
    for r in &rows {
        w.write_record([
            r.seed.to_string(),
            r.n.to_string(),
            r.family.name().to_string(),
            format!("{}", r.a_hat),
            format!("{}", r.se),
            format!("{}", r.true_improvement),
        ])
        .map_err(CoreError::from)?;
    }
    w.flush().map_err(CoreError::from)?;

    let prov = provenance(
        "sweep",
        json!({
            "pipeline": cfg.pipeline.echo(),
            "dgp": cfg.dgp.name(),
            "tau": cfg.tau.name(),
            "n": cfg.n_list,
            "s": cfg.s,
            "tau_scale": cfg.tau_scale,
            "reps": cfg.reps,
            "n_mc": cfg.n_mc,
        }),
        cfg.pipeline.seed,
    );
    write_json(
        &cfg.pipeline.output_dir.join("provenance.json"),
        &json!({"provenance": prov, "rows": rows.len(), "output": "sweep.csv"}),
    )?;
    Ok(())
}

