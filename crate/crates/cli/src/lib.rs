//! Reproducible scenario runner over `nlre-core`.
//!
//! `run` executes one config; `sweep` re-runs it over values of one config
//! path. Artifacts are held in memory and written only after every step has
//! succeeded, together with a JSON manifest.

pub mod analysis;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::analysis::{run_analysis, Outcome};
use crate::config::{apply_axis, load, value_label, LoadedConfig, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::output::{csv_bytes, num, sha256_hex, write_dir, Artifact, TOOL, VERSION};

fn target_dir(root: &Path, loaded: &LoadedConfig, cfg: &ScenarioConfig) -> PathBuf {
    root.join(cfg.output.name.clone().unwrap_or_else(|| loaded.stem.clone()))
}

fn base_manifest(loaded: &LoadedConfig, cfg: &ScenarioConfig) -> Value {
    json!({
        "tool": TOOL,
        "version": VERSION,
        "core_version": nlre_core::VERSION,
        "analysis": cfg.analysis.name(),
        "title": cfg.title,
        "seed": cfg.seed,
        "config_file": loaded.file_name,
        "config_sha256": sha256_hex(&loaded.bytes),
    })
}

/// Runs the config at `path`, or its embedded sweep, and writes the outputs
/// under `root`. Returns the output directory.
pub fn run_command(path: &Path, root: &Path, jobs: usize) -> CliResult<PathBuf> {
    let loaded = load(path)?;
    let cfg = ScenarioConfig::from_value(loaded.tree.clone())?;
    if let Some(sw) = cfg.sweep.clone() {
        return sweep_loaded(&loaded, &cfg, &sw.axis, sw.values, jobs, root);
    }
    let outcome = run_analysis(&cfg)?;
    let dir = target_dir(root, &loaded, &cfg);
    let mut manifest = base_manifest(&loaded, &cfg);
    fill_manifest(&mut manifest, &outcome);
    let mut files = outcome.artifacts;
    files.push(Artifact::json("manifest.json", &manifest));
    write_dir(&dir, &files)?;
    Ok(dir)
}

fn fill_manifest(manifest: &mut Value, outcome: &Outcome) {
    manifest["cutoff_certifications"] = json!(outcome.certifications);
    manifest["metrics"] = json!(outcome.metrics);
    manifest["artifacts"] = Value::Array(outcome.artifacts.iter().map(Artifact::record).collect());
}

/// Sweeps `axis` over `values`; the axis and values from the command line
/// replace any sweep stored in the config.
pub fn sweep_command(
    path: &Path,
    axis: Option<String>,
    values: Option<Vec<Value>>,
    jobs: usize,
    root: &Path,
) -> CliResult<PathBuf> {
    let loaded = load(path)?;
    let cfg = ScenarioConfig::from_value(loaded.tree.clone())?;
    let stored = cfg.sweep.clone();
    let axis = axis
        .or_else(|| stored.as_ref().map(|s| s.axis.clone()))
        .ok_or_else(|| CliError::Validation("sweep needs --axis".into()))?;
    let values = values
        .or_else(|| stored.map(|s| s.values))
        .ok_or_else(|| CliError::Validation("sweep needs --values".into()))?;
    sweep_loaded(&loaded, &cfg, &axis, values, jobs, root)
}

struct Point {
    label: String,
    tree_hash: String,
    result: CliResult<Outcome>,
}

fn sweep_loaded(
    loaded: &LoadedConfig,
    cfg: &ScenarioConfig,
    axis: &str,
    values: Vec<Value>,
    jobs: usize,
    root: &Path,
) -> CliResult<PathBuf> {
    if values.is_empty() {
        return Err(CliError::Validation("sweep value list is empty".into()));
    }
    if jobs == 0 {
        return Err(CliError::Validation("--jobs must be at least 1".into()));
    }
    let mut base = loaded.tree.clone();
    base.as_object_mut().expect("root is a table").remove("sweep");
    // A bad axis path aborts; a point whose config fails validation is recorded as failed.
    let mut configs = Vec::with_capacity(values.len());
    for v in &values {
        let mut tree = base.clone();
        apply_axis(&mut tree, axis, v)?;
        let hash = sha256_hex(serde_json::to_string(&tree).expect("tree serializes").as_bytes());
        let parsed = ScenarioConfig::from_value(tree);
        configs.push((value_label(v), hash, parsed));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Io(format!("thread pool: {e}")))?;
    let points: Vec<Point> = pool.install(|| {
        configs
            .into_par_iter()
            .map(|(label, tree_hash, parsed)| {
                let result = parsed.and_then(|c| run_analysis(&c));
                if let Err(e) = &result {
                    log::warn!("sweep point {axis} = {label} failed: {e}");
                }
                Point { label, tree_hash, result }
            })
            .collect()
    });
    let failures = points.iter().filter(|p| p.result.is_err()).count();
    if failures == points.len() {
        let first = points.into_iter().next().expect("nonempty sweep").result.err().expect("failed point");
        return Err(first);
    }
    assemble_sweep(loaded, cfg, axis, &values, points, root)
}

fn assemble_sweep(
    loaded: &LoadedConfig,
    cfg: &ScenarioConfig,
    axis: &str,
    values: &[Value],
    points: Vec<Point>,
    root: &Path,
) -> CliResult<PathBuf> {
    let mut metric_names: Vec<String> =
        points.iter().filter_map(|p| p.result.as_ref().ok()).flat_map(|o| o.metrics.keys().cloned()).collect();
    metric_names.sort();
    metric_names.dedup();
    let mut header = vec!["index".to_string(), axis.to_string(), "status".to_string(), "error".to_string()];
    header.extend(metric_names.iter().cloned());
    let mut rows = Vec::new();
    let mut files = Vec::new();
    let mut records = Vec::new();
    for (i, p) in points.into_iter().enumerate() {
        let dir = format!("point-{i:03}");
        let mut row = vec![i.to_string(), p.label.clone()];
        match p.result {
            Ok(outcome) => {
                row.push("ok".into());
                row.push(String::new());
                row.extend(metric_names.iter().map(|m| outcome.metrics.get(m).map(|&x| num(x)).unwrap_or_default()));
                records.push(json!({
                    "index": i,
                    "value": values[i],
                    "status": "ok",
                    "config_sha256": p.tree_hash,
                    "directory": dir,
                    "cutoff_certifications": outcome.certifications,
                    "metrics": outcome.metrics,
                    "artifacts": outcome.artifacts.iter().map(Artifact::record).collect::<Vec<_>>(),
                }));
                for a in outcome.artifacts {
                    files.push(Artifact { name: format!("{dir}/{}", a.name), bytes: a.bytes });
                }
            }
            Err(e) => {
                row.push(if e.exit_code() == 3 { "certification_failed" } else { "invalid" }.into());
                row.push(e.to_string());
                row.extend(metric_names.iter().map(|_| String::new()));
                records.push(json!({
                    "index": i,
                    "value": values[i],
                    "status": "failed",
                    "error": e.to_string(),
                    "exit_code": e.exit_code(),
                    "config_sha256": p.tree_hash,
                }));
            }
        }
        rows.push(row);
    }
    let meta = [
        ("tool", format!("{TOOL} {VERSION}")),
        ("analysis", cfg.analysis.name().to_string()),
        ("config_sha256", sha256_hex(&loaded.bytes)),
        ("axis", axis.to_string()),
    ];
    let summary = Artifact::new("summary.csv", csv_bytes(&meta, &header, &rows));
    let mut manifest = base_manifest(loaded, cfg);
    manifest["axis"] = json!(axis);
    manifest["values"] = json!(values);
    manifest["points"] = Value::Array(records);
    manifest["artifacts"] = json!([summary.record()]);
    files.insert(0, summary);
    files.push(Artifact::json("manifest.json", &manifest));
    let dir = target_dir(root, loaded, cfg);
    write_dir(&dir, &files)?;
    Ok(dir)
}
