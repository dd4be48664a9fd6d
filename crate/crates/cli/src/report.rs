//! Figure data. Reporting only reads the store and uses fixed seeds, so
//! rerunning it reproduces every file byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use simbench::fit::ClassSize;
use simbench::imitation::Variant;
use simbench::metrics::{
    feature_importance, iqm_with_ci, linspace, mean, median, performance_profile,
    stratified_bootstrap_ci, ATTRIBUTES, BOOTSTRAP_REPS, CI_LEVEL,
};
use simbench::rng::derive_seed;

use crate::pipeline::select_best;
use crate::store::{EnvironmentRow, InterpretabilityRow, ResultStore, RunRow, VerificationRow};

/// Seed of every bootstrap and forest in the report.
pub const REPORT_SEED: u64 = 0x7265_706f_7274;

pub const FIGURES: [&str; 7] = [
    "tradeoff",
    "imitation",
    "profiles",
    "verification_scatter",
    "verification_summary",
    "importance",
    "folded_unfolded",
];

fn family(class: &str) -> String {
    class
        .parse::<ClassSize>()
        .map(|c| c.class().as_str().to_string())
        .unwrap_or_default()
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct TradeoffRow {
    pub env: String,
    pub class: String,
    pub family: String,
    pub run_key: String,
    pub variant: String,
    pub param_count: usize,
    pub size_bytes: usize,
    pub return_mean: f64,
    pub return_lo: f64,
    pub return_hi: f64,
    pub normalized_return: f64,
    pub test_return: f64,
    pub step_time_s: f64,
    pub step_time_lo: f64,
    pub step_time_hi: f64,
    pub episode_time_s: f64,
    pub episode_time_lo: f64,
    pub episode_time_hi: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct FoldedRow {
    pub env: String,
    pub class: String,
    pub family: String,
    pub param_count: usize,
    pub folded_step_time_s: f64,
    pub folded_step_time_lo: f64,
    pub folded_step_time_hi: f64,
    pub unfolded_step_time_s: f64,
    pub unfolded_step_time_lo: f64,
    pub unfolded_step_time_hi: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImitationRow {
    /// `all` for the aggregate over envs, else an env name.
    pub scope: String,
    pub variant: String,
    pub budget: usize,
    pub n_runs: usize,
    pub iqm: f64,
    pub iqm_lo: f64,
    pub iqm_hi: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ProfileRow {
    pub variant: String,
    pub budget: usize,
    pub tau: f64,
    pub fraction: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ScatterRow {
    pub env: String,
    pub class: String,
    pub family: String,
    pub param_count: usize,
    pub size_bytes: Option<usize>,
    pub step_time_s: Option<f64>,
    pub query_id: usize,
    pub wall_time_s: f64,
    pub nodes: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct VerificationSummaryRow {
    pub env: String,
    pub class: String,
    pub family: String,
    pub param_count: usize,
    pub n_queries: usize,
    pub n_sat: usize,
    pub n_unsat: usize,
    pub n_unknown: usize,
    pub median_unsat_time_s: Option<f64>,
    pub mean_unsat_time_s: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImportanceRow {
    pub target: String,
    pub attribute: String,
    pub importance: f64,
    pub rank: usize,
    pub n_records: usize,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IndexRow {
    pub figure: String,
    pub file: String,
    pub rows: usize,
    /// `ok`, or `empty` when the store lacks the data.
    pub status: String,
    pub note: String,
}

/// Everything the report reads.
#[derive(Debug, Clone, Default)]
pub struct StoreData {
    pub runs: Vec<RunRow>,
    pub interpretability: Vec<InterpretabilityRow>,
    pub verifications: Vec<VerificationRow>,
    pub environments: Vec<EnvironmentRow>,
}

impl StoreData {
    pub fn read(store: &ResultStore) -> Result<StoreData> {
        Ok(StoreData {
            runs: store.runs()?,
            interpretability: store.interpretability()?,
            verifications: store.verifications()?,
            environments: store.environments()?,
        })
    }

    /// Selected runs joined with their measurement, in selection order.
    pub fn measured(&self) -> Vec<(RunRow, &InterpretabilityRow)> {
        select_best(&self.runs)
            .into_iter()
            .filter_map(|r| {
                let m = self.interpretability.iter().find(|m| m.run_key == r.key)?;
                Some((r, m))
            })
            .collect()
    }
}

pub fn tradeoff(data: &StoreData) -> Result<Vec<TradeoffRow>> {
    let mut out = Vec::new();
    for (run, m) in data.measured() {
        let returns = run.returns()?;
        let seed = derive_seed(REPORT_SEED, &format!("return/{}", run.key));
        let (lo, hi) =
            stratified_bootstrap_ci(&[returns.clone()], mean, BOOTSTRAP_REPS, CI_LEVEL, seed)?;
        out.push(TradeoffRow {
            env: run.env.clone(),
            class: run.class.clone(),
            family: family(&run.class),
            run_key: run.key.clone(),
            variant: run.variant.clone(),
            param_count: m.param_count,
            size_bytes: m.size_bytes,
            return_mean: mean(&returns)?,
            return_lo: lo,
            return_hi: hi,
            normalized_return: run.normalized_return.unwrap_or(f64::NAN),
            test_return: m.mean_return,
            step_time_s: m.step_time_s,
            step_time_lo: m.step_time_lo,
            step_time_hi: m.step_time_hi,
            episode_time_s: m.episode_time_s,
            episode_time_lo: m.episode_time_lo,
            episode_time_hi: m.episode_time_hi,
        });
    }
    Ok(out)
}

pub fn folded_unfolded(data: &StoreData) -> Vec<FoldedRow> {
    data.measured()
        .into_iter()
        .map(|(run, m)| FoldedRow {
            env: run.env.clone(),
            class: run.class.clone(),
            family: family(&run.class),
            param_count: m.param_count,
            folded_step_time_s: m.folded_step_time_s,
            folded_step_time_lo: m.folded_step_time_lo,
            folded_step_time_hi: m.folded_step_time_hi,
            unfolded_step_time_s: m.step_time_s,
            unfolded_step_time_lo: m.step_time_lo,
            unfolded_step_time_hi: m.step_time_hi,
        })
        .collect()
}

fn variant_order(v: &str) -> usize {
    Variant::ALL
        .iter()
        .position(|x| x.as_str() == v)
        .unwrap_or(usize::MAX)
}

/// Normalized scores of successful runs grouped by (variant, budget), then
/// by env in first-seen order.
fn scores_by_variant(runs: &[RunRow]) -> BTreeMap<(usize, usize, String), Vec<(String, Vec<f64>)>> {
    let mut groups: BTreeMap<(usize, usize, String), Vec<(String, Vec<f64>)>> = BTreeMap::new();
    for r in runs.iter().filter(|r| r.is_ok()) {
        let Some(score) = r.normalized_return else {
            continue;
        };
        let strata = groups
            .entry((r.budget, variant_order(&r.variant), r.variant.clone()))
            .or_default();
        match strata.iter_mut().find(|(env, _)| *env == r.env) {
            Some((_, s)) => s.push(score),
            None => strata.push((r.env.clone(), vec![score])),
        }
    }
    groups
}

/// Normalized IQM with stratified bootstrap CIs, pooled over envs and per
/// env. Groups with fewer than four runs are left out.
pub fn imitation(data: &StoreData) -> Result<Vec<ImitationRow>> {
    let mut out = Vec::new();
    for ((budget, _, variant), strata) in scores_by_variant(&data.runs) {
        let mut scopes: Vec<(String, Vec<Vec<f64>>)> = vec![(
            "all".to_string(),
            strata.iter().map(|(_, s)| s.clone()).collect(),
        )];
        scopes.extend(strata.iter().map(|(env, s)| (env.clone(), vec![s.clone()])));
        for (scope, s) in scopes {
            let n: usize = s.iter().map(Vec::len).sum();
            if n < 4 {
                continue;
            }
            let seed = derive_seed(REPORT_SEED, &format!("iqm/{scope}/{variant}/{budget}"));
            let (iqm, lo, hi) = iqm_with_ci(&s, seed)?;
            out.push(ImitationRow {
                scope,
                variant: variant.clone(),
                budget,
                n_runs: n,
                iqm,
                iqm_lo: lo,
                iqm_hi: hi,
                mean: mean(&s.concat())?,
            });
        }
    }
    Ok(out)
}

/// Profile thresholds over normalized return.
pub fn profile_taus() -> Vec<f64> {
    linspace(0.0, 1.25, 26)
}

pub fn profiles(data: &StoreData) -> Vec<ProfileRow> {
    let taus = profile_taus();
    let mut out = Vec::new();
    for ((budget, _, variant), strata) in scores_by_variant(&data.runs) {
        let scores: Vec<f64> = strata.into_iter().flat_map(|(_, s)| s).collect();
        for (tau, fraction) in taus.iter().zip(performance_profile(&scores, &taus)) {
            out.push(ProfileRow {
                variant: variant.clone(),
                budget,
                tau: *tau,
                fraction,
                n_runs: scores.len(),
            });
        }
    }
    out
}

fn selected_verdicts(data: &StoreData) -> Vec<(RunRow, Vec<&VerificationRow>)> {
    select_best(&data.runs)
        .into_iter()
        .map(|r| {
            let v: Vec<&VerificationRow> = data
                .verifications
                .iter()
                .filter(|v| v.run_key == r.key)
                .collect();
            (r, v)
        })
        .filter(|(_, v)| !v.is_empty())
        .collect()
}

/// One point per UNSAT verdict; only UNSAT times are reported.
pub fn verification_scatter(data: &StoreData) -> Vec<ScatterRow> {
    let mut out = Vec::new();
    for (run, verdicts) in selected_verdicts(data) {
        let m = data.interpretability.iter().find(|m| m.run_key == run.key);
        for v in verdicts.into_iter().filter(|v| v.status == "UNSAT") {
            out.push(ScatterRow {
                env: run.env.clone(),
                class: run.class.clone(),
                family: family(&run.class),
                param_count: run.param_count.unwrap_or(0),
                size_bytes: m.map(|m| m.size_bytes),
                step_time_s: m.map(|m| m.step_time_s),
                query_id: v.query_id,
                wall_time_s: v.wall_time_s,
                nodes: v.nodes,
            });
        }
    }
    out
}

pub fn verification_summary(data: &StoreData) -> Result<Vec<VerificationSummaryRow>> {
    let mut out = Vec::new();
    for (run, verdicts) in selected_verdicts(data) {
        let count = |s: &str| verdicts.iter().filter(|v| v.status == s).count();
        let unsat: Vec<f64> = verdicts
            .iter()
            .filter(|v| v.status == "UNSAT")
            .map(|v| v.wall_time_s)
            .collect();
        out.push(VerificationSummaryRow {
            env: run.env.clone(),
            class: run.class.clone(),
            family: family(&run.class),
            param_count: run.param_count.unwrap_or(0),
            n_queries: verdicts.len(),
            n_sat: count("SAT"),
            n_unsat: unsat.len(),
            n_unknown: count("UNKNOWN"),
            median_unsat_time_s: if unsat.is_empty() {
                None
            } else {
                Some(median(&unsat)?)
            },
            mean_unsat_time_s: if unsat.is_empty() {
                None
            } else {
                Some(mean(&unsat)?)
            },
        });
    }
    Ok(out)
}

/// Interpretability targets explained by environment attributes.
pub const IMPORTANCE_TARGETS: [&str; 3] = ["step_time_s", "size_bytes", "episode_time_s"];

/// Attribute rows and targets of the measured records, one row per record.
pub fn importance_inputs(data: &StoreData) -> (Vec<Vec<f64>>, Vec<[f64; 3]>) {
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for (run, m) in data.measured() {
        let Some(env) = data.environments.iter().find(|e| e.env == run.env) else {
            continue;
        };
        rows.push(env.attributes());
        targets.push([m.step_time_s, m.size_bytes as f64, m.episode_time_s]);
    }
    (rows, targets)
}

pub fn importance(data: &StoreData) -> Result<Vec<ImportanceRow>> {
    let (rows, targets) = importance_inputs(data);
    let mut out = Vec::new();
    if rows.is_empty() {
        return Ok(out);
    }
    for (t, name) in IMPORTANCE_TARGETS.iter().enumerate() {
        let y: Vec<f64> = targets.iter().map(|v| v[t]).collect();
        let table = feature_importance(
            &ATTRIBUTES,
            &rows,
            &y,
            derive_seed(REPORT_SEED, &format!("importance/{name}")),
        )?;
        for (rank, (attribute, importance)) in table.rows.into_iter().enumerate() {
            out.push(ImportanceRow {
                target: name.to_string(),
                attribute,
                importance,
                rank: rank + 1,
                n_records: rows.len(),
            });
        }
    }
    Ok(out)
}

/// Column names of `T`, taken from serde so headers survive empty tables.
fn columns<T: Serialize + Default>() -> csv::StringRecord {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(T::default()).expect("serializable");
    let bytes = w.into_inner().expect("in memory");
    let mut rd = csv::Reader::from_reader(bytes.as_slice());
    rd.headers().expect("header row").clone()
}

fn write_csv<T: Serialize>(path: &Path, header: &csv::StringRecord, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .with_context(|| format!("writing {}", path.display()))?;
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_figure<T: Serialize + Default>(
    dir: &Path,
    name: &str,
    rows: &[T],
    note: &str,
) -> Result<IndexRow> {
    let file = format!("{name}.csv");
    write_csv(&dir.join(&file), &columns::<T>(), rows)?;
    let empty = rows.is_empty();
    Ok(IndexRow {
        figure: name.to_string(),
        file,
        rows: rows.len(),
        status: if empty { "empty" } else { "ok" }.to_string(),
        note: if empty {
            note.to_string()
        } else {
            String::new()
        },
    })
}

/// Writes every figure CSV plus `index.csv` into `out_dir`.
pub fn write_report(data: &StoreData, out_dir: &Path) -> Result<Vec<IndexRow>> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let index = vec![
        write_figure(out_dir, "tradeoff", &tradeoff(data)?, "no measured runs")?,
        write_figure(
            out_dir,
            "imitation",
            &imitation(data)?,
            "fewer than four successful runs per variant",
        )?,
        write_figure(out_dir, "profiles", &profiles(data), "no successful runs")?,
        write_figure(
            out_dir,
            "verification_scatter",
            &verification_scatter(data),
            "no UNSAT verdicts",
        )?,
        write_figure(
            out_dir,
            "verification_summary",
            &verification_summary(data)?,
            "no verification rows",
        )?,
        write_figure(
            out_dir,
            "importance",
            &importance(data)?,
            "no measured runs with environment attributes",
        )?,
        write_figure(
            out_dir,
            "folded_unfolded",
            &folded_unfolded(data),
            "no measured runs",
        )?,
    ];
    write_csv(&out_dir.join("index.csv"), &columns::<IndexRow>(), &index)?;
    Ok(index)
}

/// Reads `store` and writes its figures to `<store>/figures`.
pub fn report(store: &ResultStore) -> Result<Vec<IndexRow>> {
    let data = StoreData::read(store)?;
    write_report(&data, &store.dir().join("figures"))
}
