//! Metrics derived from episode results: inconvenience and delay means,
//! revisit and completion histograms, leftover duration, resource usage,
//! the per-period cost series, and the spatial inconvenience grid.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{Period, Task};
use crate::simulation::EpisodeResult;

/// Minutes in one technician-day.
pub const TECHNICIAN_DAY_MINUTES: f64 = 420.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMetrics {
    pub label: String,
    pub seed: u64,
    pub customers: u32,
    pub total_inconvenience: f64,
    pub mean_inconvenience: f64,
    pub mean_delay_days: f64,
    pub on_time_share: f64,
    pub leftover_days: f64,
    pub technician_days: f64,
    pub final_period: Period,
    pub divergent: bool,
}

/// Share of advanced customers by number of revisits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RevisitHistogram {
    pub none: f64,
    pub once: f64,
    pub twice_plus: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    pub cells_per_side: usize,
    pub area_side_km: f64,
    /// Row-major (iy * cells + ix) inconvenience sums and customer counts.
    pub sums: Vec<f64>,
    pub counts: Vec<u64>,
}

impl SpatialGrid {
    fn new(cells_per_side: usize, area_side_km: f64) -> Self {
        SpatialGrid {
            cells_per_side,
            area_side_km,
            sums: vec![0.0; cells_per_side * cells_per_side],
            counts: vec![0; cells_per_side * cells_per_side],
        }
    }

    fn cell_of(&self, x: f64, y: f64) -> usize {
        let w = self.area_side_km / self.cells_per_side as f64;
        let ix = ((x / w) as usize).min(self.cells_per_side - 1);
        let iy = ((y / w) as usize).min(self.cells_per_side - 1);
        iy * self.cells_per_side + ix
    }

    pub fn mean(&self, ix: usize, iy: usize) -> Option<f64> {
        let cell = iy * self.cells_per_side + ix;
        (self.counts[cell] > 0).then(|| self.sums[cell] / self.counts[cell] as f64)
    }

    /// Distance from the cell center to the area center.
    pub fn depot_distance(&self, ix: usize, iy: usize) -> f64 {
        let w = self.area_side_km / self.cells_per_side as f64;
        let cx = (ix as f64 + 0.5) * w - self.area_side_km / 2.0;
        let cy = (iy as f64 + 0.5) * w - self.area_side_km / 2.0;
        (cx * cx + cy * cy).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub policy: String,
    pub instances: Vec<InstanceMetrics>,
    pub mean_inconvenience: f64,
    pub se_inconvenience: f64,
    pub mean_delay_days: f64,
    pub se_delay_days: f64,
    pub revisits: RevisitHistogram,
    pub on_time_share: f64,
    /// Share of completed requests per (completion - deadline) day offset.
    pub completion_delta_shares: BTreeMap<i64, f64>,
    pub mean_leftover_days: f64,
    pub mean_technician_days: f64,
    /// Cumulative inconvenience per customer, averaged across instances.
    pub cumulative_per_period: Vec<f64>,
    pub spatial: SpatialGrid,
    pub divergent_count: u32,
}

/// Per-instance scalars from one episode.
pub fn instance_metrics(
    label: &str,
    seed: u64,
    cutoff_period: Period,
    result: &EpisodeResult,
) -> InstanceMetrics {
    let n = result.total_customers.max(1) as f64;
    let mut delay_sum = 0.0;
    let mut on_time = 0u32;
    for c in &result.customers {
        let completion = c.completion_period.unwrap_or(result.final_period);
        let delay = completion.saturating_sub(c.deadline) as f64;
        delay_sum += delay;
        if completion <= c.deadline {
            on_time += 1;
        }
    }
    let minutes: f64 =
        result.periods.iter().map(|p| p.minutes_worked.values().sum::<f64>()).sum();
    InstanceMetrics {
        label: label.to_string(),
        seed,
        customers: result.total_customers,
        total_inconvenience: result.total_cost,
        mean_inconvenience: result.total_cost / n,
        mean_delay_days: delay_sum / n,
        on_time_share: on_time as f64 / n,
        leftover_days: result.final_period.saturating_sub(cutoff_period) as f64,
        technician_days: minutes / TECHNICIAN_DAY_MINUTES,
        final_period: result.final_period,
        divergent: result.divergent,
    }
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Aggregate labeled episodes into one report. Instances are sorted by
/// label first so the float reductions are permutation-invariant.
pub fn aggregate(
    policy: &str,
    episodes: &[(String, u64, EpisodeResult)],
    cutoff_period: Period,
    area_side_km: f64,
    grid_cells: usize,
) -> MetricsReport {
    let mut order: Vec<usize> = (0..episodes.len()).collect();
    order.sort_by(|&a, &b| episodes[a].0.cmp(&episodes[b].0));

    let mut instances = Vec::with_capacity(episodes.len());
    let mut spatial = SpatialGrid::new(grid_cells, area_side_km);
    let mut advanced = [0u64; 3];
    let mut advanced_total = 0u64;
    let mut delta_counts: BTreeMap<i64, u64> = BTreeMap::new();
    let mut completed_total = 0u64;
    let mut on_time_total = 0u64;
    let mut customer_total = 0u64;
    let mut series_per_instance: Vec<Vec<f64>> = Vec::new();
    let mut divergent_count = 0u32;

    for &idx in &order {
        let (label, seed, result) = &episodes[idx];
        instances.push(instance_metrics(label, *seed, cutoff_period, result));
        if result.divergent {
            divergent_count += 1;
        }
        for c in &result.customers {
            customer_total += 1;
            let cell = spatial.cell_of(c.location.x, c.location.y);
            spatial.sums[cell] += c.inconvenience;
            spatial.counts[cell] += 1;
            if c.task == Task::Advanced {
                advanced_total += 1;
                let revisits = c.visits.saturating_sub(1).min(2) as usize;
                advanced[revisits] += 1;
            }
            if let Some(completion) = c.completion_period {
                completed_total += 1;
                let delta = completion as i64 - c.deadline as i64;
                *delta_counts.entry(delta).or_insert(0) += 1;
                if delta <= 0 {
                    on_time_total += 1;
                }
            }
        }
        let n = result.total_customers.max(1) as f64;
        let mut acc = 0.0;
        series_per_instance.push(
            result
                .periods
                .iter()
                .map(|p| {
                    acc += p.realized_cost;
                    acc / n
                })
                .collect(),
        );
    }
    // Instances of different lengths line up by holding their final value.
    let max_len = series_per_instance.iter().map(Vec::len).max().unwrap_or(0);
    let mut cumulative_sums = vec![0.0; max_len];
    for series in &series_per_instance {
        let last = *series.last().unwrap_or(&0.0);
        for (i, slot) in cumulative_sums.iter_mut().enumerate() {
            *slot += series.get(i).copied().unwrap_or(last);
        }
    }

    let count = instances.len().max(1) as f64;
    let (mean_inconvenience, se_inconvenience) =
        mean_and_se(&instances.iter().map(|m| m.mean_inconvenience).collect::<Vec<_>>());
    let (mean_delay_days, se_delay_days) =
        mean_and_se(&instances.iter().map(|m| m.mean_delay_days).collect::<Vec<_>>());
    let revisits = if advanced_total == 0 {
        RevisitHistogram { none: 1.0, once: 0.0, twice_plus: 0.0 }
    } else {
        RevisitHistogram {
            none: advanced[0] as f64 / advanced_total as f64,
            once: advanced[1] as f64 / advanced_total as f64,
            twice_plus: advanced[2] as f64 / advanced_total as f64,
        }
    };
    let completion_delta_shares = delta_counts
        .into_iter()
        .map(|(delta, c)| (delta, c as f64 / completed_total.max(1) as f64))
        .collect();
    MetricsReport {
        policy: policy.to_string(),
        mean_inconvenience,
        se_inconvenience,
        mean_delay_days,
        se_delay_days,
        revisits,
        on_time_share: on_time_total as f64 / customer_total.max(1) as f64,
        completion_delta_shares,
        mean_leftover_days: instances.iter().map(|m| m.leftover_days).sum::<f64>() / count,
        mean_technician_days: instances.iter().map(|m| m.technician_days).sum::<f64>() / count,
        cumulative_per_period: cumulative_sums.iter().map(|s| s / count).collect(),
        spatial,
        divergent_count,
        instances,
    }
}
