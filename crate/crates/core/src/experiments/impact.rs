//! Below/above-mean feature influence on the learned balance parameter:
//! for every feature, split all visited states at the feature's mean and
//! report the percentage change of the mean alpha in each half relative to
//! the overall mean.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::instances::InstanceRealization;
use crate::policies::{decide_score_based, EligibilityMask};
use crate::rl::{extract_features, PolicyModel, FEATURE_DIM, FEATURE_NAMES};
use crate::simulation::run_episode_with;

#[derive(Debug, Clone)]
pub struct FeatureImpactRow {
    pub feature: &'static str,
    pub below_pct: f64,
    pub above_pct: f64,
}

/// Derived row matching the reference analysis, which reports one total
/// availability count rather than the per-skill features the network sees.
pub const TOTAL_AVAILABILITY_FEATURE: &str = "available_technicians";

#[derive(Debug, Clone)]
pub struct ImpactTable {
    pub rows: Vec<FeatureImpactRow>,
    pub mean_alpha: f64,
    pub states: usize,
    pub warnings: Vec<String>,
}

/// Collect every state visited by the dynamic-balance policy over the
/// instances and measure per-feature influence on its alpha output.
pub fn feature_impact_table(
    model: &PolicyModel,
    instances: &[InstanceRealization],
) -> Result<ImpactTable> {
    if instances.is_empty() {
        return Err(Error::Config("feature impact needs at least one instance".into()));
    }
    let collected: Result<Vec<Vec<([f64; FEATURE_DIM], f64)>>> = instances
        .par_iter()
        .map(|realization| {
            let mut states = Vec::new();
            run_episode_with(realization, |state| {
                let raw = extract_features(state);
                let alpha = model.predict_alpha(state)?;
                states.push((raw.0, alpha));
                Ok(decide_score_based(state, alpha, EligibilityMask::AllPairs))
            })?;
            Ok(states)
        })
        .collect();
    let samples: Vec<([f64; FEATURE_DIM], f64)> = collected?.into_iter().flatten().collect();
    let mut warnings = Vec::new();
    if samples.len() < 100 {
        warnings.push(format!(
            "only {} states collected; impact estimates are statistically weak",
            samples.len()
        ));
    }
    let n = samples.len().max(1) as f64;
    let mean_alpha = samples.iter().map(|(_, a)| a).sum::<f64>() / n;
    let split_at_mean = |value_of: &dyn Fn(&[f64; FEATURE_DIM]) -> f64| {
        let feature_mean = samples.iter().map(|(f, _)| value_of(f)).sum::<f64>() / n;
        let mut below = (0.0, 0u64);
        let mut above = (0.0, 0u64);
        for (f, a) in &samples {
            if value_of(f) < feature_mean {
                below = (below.0 + a, below.1 + 1);
            } else {
                above = (above.0 + a, above.1 + 1);
            }
        }
        let pct = |(sum, count): (f64, u64)| {
            if count == 0 || mean_alpha.abs() < 1e-12 {
                0.0
            } else {
                (sum / count as f64 - mean_alpha) / mean_alpha * 100.0
            }
        };
        (pct(below), pct(above))
    };
    let mut rows = Vec::with_capacity(FEATURE_DIM + 1);
    for j in 0..FEATURE_DIM {
        let (below_pct, above_pct) = split_at_mean(&|f: &[f64; FEATURE_DIM]| f[j]);
        rows.push(FeatureImpactRow { feature: FEATURE_NAMES[j], below_pct, above_pct });
    }
    // Regular + expert counts combined, as the reference analysis reports.
    let (below_pct, above_pct) = split_at_mean(&|f: &[f64; FEATURE_DIM]| f[3] + f[4]);
    rows.push(FeatureImpactRow { feature: TOTAL_AVAILABILITY_FEATURE, below_pct, above_pct });
    Ok(ImpactTable { rows, mean_alpha, states: samples.len(), warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_instance, InstanceConfig};

    #[test]
    fn constant_model_has_zero_impacts() {
        let model = PolicyModel::zeroed();
        let config = InstanceConfig { seed: 51, ..InstanceConfig::default() };
        let instances = vec![generate_instance(&config).unwrap()];
        let table = feature_impact_table(&model, &instances).unwrap();
        assert!((table.mean_alpha - 0.5).abs() < 1e-12);
        for row in &table.rows {
            assert_eq!(row.below_pct, 0.0, "{}", row.feature);
            assert_eq!(row.above_pct, 0.0, "{}", row.feature);
        }
    }

    #[test]
    fn few_states_trigger_a_warning() {
        let model = PolicyModel::zeroed();
        // A single near-empty instance visits fewer than 100 states.
        let config = InstanceConfig {
            seed: 3,
            weekly_demand_mean: 2.0,
            arrival_days: 2,
            ..InstanceConfig::default()
        };
        let instances = vec![generate_instance(&config).unwrap()];
        let table = feature_impact_table(&model, &instances).unwrap();
        assert_eq!(table.warnings.len(), 1);
    }
}
