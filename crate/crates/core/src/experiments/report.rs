//! Deterministic report emission: per-instance rows, aggregate summary,
//! spatial grid, cumulative cost series, and textual route dumps, all
//! stamped with the config hash and instance seeds.

use std::fmt::Write as _;
use std::path::Path;

use crate::domain::Period;
use crate::error::{Error, Result};
use crate::experiments::metrics::MetricsReport;
use crate::instances::InstanceConfig;
use crate::simulation::EpisodeResult;

fn fnv64(data: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Stable hash over the generating config and the instance seeds, stamped
/// into every emitted file for provenance.
pub fn provenance_hash(config: &InstanceConfig, seeds: &[u64]) -> String {
    let mut text = serde_json::to_string(config).expect("config serializes");
    for seed in seeds {
        text.push(',');
        text.push_str(&seed.to_string());
    }
    format!("{:016x}", fnv64(text.as_bytes()))
}

fn header(report: &MetricsReport, hash: &str) -> String {
    let seeds: Vec<String> = report.instances.iter().map(|m| m.seed.to_string()).collect();
    format!("# policy={} config_hash={} seeds={}\n", report.policy, hash, seeds.join(" "))
}

/// Write all report files into `out_dir`. Fails before writing anything if
/// the directory cannot be created.
pub fn emit_report(
    report: &MetricsReport,
    episodes: &[(String, u64, EpisodeResult)],
    config: &InstanceConfig,
    out_dir: &Path,
    route_dump_periods: &[Period],
) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    if !out_dir.is_dir() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotADirectory,
            format!("{} is not a directory", out_dir.display()),
        )));
    }
    let seeds: Vec<u64> = report.instances.iter().map(|m| m.seed).collect();
    let hash = provenance_hash(config, &seeds);

    let mut rows = header(report, &hash);
    rows.push_str(
        "instance,seed,customers,total_inconvenience,mean_inconvenience,mean_delay_days,\
         on_time_share,leftover_days,technician_days,final_period,divergent\n",
    );
    for m in &report.instances {
        writeln!(
            rows,
            "{},{},{},{},{},{},{},{},{},{},{}",
            m.label,
            m.seed,
            m.customers,
            m.total_inconvenience,
            m.mean_inconvenience,
            m.mean_delay_days,
            m.on_time_share,
            m.leftover_days,
            m.technician_days,
            m.final_period,
            m.divergent
        )
        .expect("string write");
    }
    std::fs::write(out_dir.join("per_instance.csv"), rows)?;

    let mut summary = header(report, &hash);
    writeln!(summary, "policy: {}", report.policy).unwrap();
    writeln!(summary, "instances: {}", report.instances.len()).unwrap();
    writeln!(summary, "divergent: {}", report.divergent_count).unwrap();
    writeln!(
        summary,
        "mean_inconvenience_per_customer: {} (se {})",
        report.mean_inconvenience, report.se_inconvenience
    )
    .unwrap();
    writeln!(
        summary,
        "mean_delay_days_per_customer: {} (se {})",
        report.mean_delay_days, report.se_delay_days
    )
    .unwrap();
    writeln!(summary, "on_time_share: {}", report.on_time_share).unwrap();
    writeln!(
        summary,
        "revisit_shares_advanced: none={} once={} twice_plus={}",
        report.revisits.none, report.revisits.once, report.revisits.twice_plus
    )
    .unwrap();
    writeln!(summary, "mean_leftover_days: {}", report.mean_leftover_days).unwrap();
    writeln!(summary, "mean_technician_days: {}", report.mean_technician_days).unwrap();
    writeln!(summary, "completion_delta_shares:").unwrap();
    for (delta, share) in &report.completion_delta_shares {
        writeln!(summary, "  {delta}: {share}").unwrap();
    }
    std::fs::write(out_dir.join("summary.txt"), summary)?;

    let mut grid = header(report, &hash);
    grid.push_str("cell_x,cell_y,depot_distance_km,mean_inconvenience,customers\n");
    for iy in 0..report.spatial.cells_per_side {
        for ix in 0..report.spatial.cells_per_side {
            let cell = iy * report.spatial.cells_per_side + ix;
            writeln!(
                grid,
                "{},{},{},{},{}",
                ix,
                iy,
                report.spatial.depot_distance(ix, iy),
                report.spatial.mean(ix, iy).map_or(String::new(), |m| m.to_string()),
                report.spatial.counts[cell]
            )
            .expect("string write");
        }
    }
    std::fs::write(out_dir.join("spatial_grid.csv"), grid)?;

    let mut series = header(report, &hash);
    series.push_str("period,cumulative_mean_inconvenience\n");
    for (i, value) in report.cumulative_per_period.iter().enumerate() {
        writeln!(series, "{},{}", i + 1, value).expect("string write");
    }
    std::fs::write(out_dir.join("cumulative.csv"), series)?;

    let mut dumps = header(report, &hash);
    if let Some((label, _, episode)) = episodes.first() {
        for &period in route_dump_periods {
            if let Some(record) = episode.periods.iter().find(|p| p.period == period) {
                writeln!(dumps, "instance {label} period {period}:").unwrap();
                for (tech, route) in &record.routes {
                    let stops: Vec<String> = route.iter().map(|c| c.to_string()).collect();
                    writeln!(
                        dumps,
                        "  {tech}: depot -> {} -> depot ({} min)",
                        if stops.is_empty() { "(idle)".to_string() } else { stops.join(" -> ") },
                        record.minutes_worked.get(tech).copied().unwrap_or(0.0)
                    )
                    .unwrap();
                }
            }
        }
    }
    std::fs::write(out_dir.join("route_dumps.txt"), dumps)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::metrics::aggregate;
    use crate::instances::generate_instance;
    use crate::policies::PolicyKind;
    use crate::simulation::run_episode;

    #[test]
    fn report_files_are_deterministic_and_complete() {
        let config = InstanceConfig { seed: 17, ..InstanceConfig::default() };
        let episodes: Vec<(String, u64, EpisodeResult)> = (0..3)
            .map(|i| {
                let c = InstanceConfig { seed: 17 + i, ..config.clone() };
                let r = generate_instance(&c).unwrap();
                (
                    format!("instance_{i:04}"),
                    c.seed,
                    run_episode(&r, &PolicyKind::Sb(0.33)).unwrap(),
                )
            })
            .collect();
        let report = aggregate("sb:0.33", &episodes, 16, 200.0, 20);
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        emit_report(&report, &episodes, &config, dir_a.path(), &[1, 4]).unwrap();
        emit_report(&report, &episodes, &config, dir_b.path(), &[1, 4]).unwrap();
        for file in ["per_instance.csv", "summary.txt", "spatial_grid.csv", "cumulative.csv", "route_dumps.txt"]
        {
            let a = std::fs::read(dir_a.path().join(file)).unwrap();
            let b = std::fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
            assert!(!a.is_empty());
        }
        // One data row per instance plus hash header and column header.
        let rows = std::fs::read_to_string(dir_a.path().join("per_instance.csv")).unwrap();
        assert_eq!(rows.lines().count(), 2 + episodes.len());
        // Summary carries the means at full precision.
        let summary = std::fs::read_to_string(dir_a.path().join("summary.txt")).unwrap();
        assert!(summary.contains(&report.mean_inconvenience.to_string()));
        assert!(summary.contains(&report.mean_delay_days.to_string()));
    }
}
