//! Batch evaluation over instance sets, aggregate metrics, the exact
//! tiny-scale dynamic-programming oracle, feature-impact analysis, and
//! report emission.

pub mod impact;
pub mod metrics;
pub mod oracle;
pub mod report;

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instances::{load_instance, InstanceRealization};
use crate::policies::PolicyKind;
use crate::simulation::{run_episode, EpisodeResult};

pub use impact::{feature_impact_table, FeatureImpactRow, ImpactTable};
pub use metrics::{aggregate, instance_metrics, InstanceMetrics, MetricsReport, RevisitHistogram};
pub use oracle::{brute_force_post_value, brute_force_value, TinyScenario};
pub use report::{emit_report, provenance_hash};

/// Default spatial resolution of the inconvenience grid.
pub const DEFAULT_GRID_CELLS: usize = 20;

/// Evaluate a policy over in-memory realizations; episodes run in parallel
/// and aggregation is deterministic.
pub fn evaluate_realizations(
    policy: &PolicyKind,
    labeled: &[(String, InstanceRealization)],
) -> Result<(MetricsReport, Vec<(String, u64, EpisodeResult)>)> {
    if labeled.is_empty() {
        return Err(Error::Config("evaluation needs at least one instance".into()));
    }
    let episodes: Result<Vec<(String, u64, EpisodeResult)>> = labeled
        .par_iter()
        .map(|(label, realization)| {
            let episode = run_episode(realization, policy)?;
            Ok((label.clone(), realization.config.seed, episode))
        })
        .collect();
    let episodes = episodes?;
    let config = &labeled[0].1.config;
    let report = aggregate(
        &policy.label(),
        &episodes,
        config.cutoff_period(),
        config.area_side_km,
        DEFAULT_GRID_CELLS,
    );
    Ok((report, episodes))
}

/// Outcome of a directory evaluation: unreadable instances are collected
/// instead of aborting the run.
pub struct EvaluationRun {
    pub report: MetricsReport,
    pub episodes: Vec<(String, u64, EpisodeResult)>,
    pub failures: Vec<(PathBuf, String)>,
    pub warnings: Vec<String>,
}

/// List the instance documents of a directory in name order.
pub fn instance_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|ext| ext == "json")
                && p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("instance"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Evaluate a policy over every instance file in a directory.
pub fn evaluate(policy: &PolicyKind, instance_dir: &Path) -> Result<EvaluationRun> {
    let files = instance_files(instance_dir)?;
    if files.is_empty() {
        return Err(Error::Config(format!(
            "no instance files found in {}",
            instance_dir.display()
        )));
    }
    let mut labeled = Vec::new();
    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    for path in files {
        let label =
            path.file_stem().and_then(|s| s.to_str()).unwrap_or("instance").to_string();
        match load_instance(&path) {
            Ok((realization, mut file_warnings)) => {
                warnings.extend(file_warnings.drain(..).map(|w| format!("{label}: {w}")));
                labeled.push((label, realization));
            }
            Err(err) => failures.push((path, err.to_string())),
        }
    }
    if labeled.is_empty() {
        return Err(Error::Config("every instance file failed to load".into()));
    }
    let (report, episodes) = evaluate_realizations(policy, &labeled)?;
    Ok(EvaluationRun { report, episodes, failures, warnings })
}
