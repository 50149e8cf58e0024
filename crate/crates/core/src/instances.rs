//! Generation, persistence, and replay of full problem realizations:
//! arrival schedules, absence tables, and per-customer rework coin streams.
//! Pre-drawing all randomness lets every policy face identical conditions
//! (common random numbers) and makes episodes reproducible byte for byte.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{Customer, CustomerId, Period, Point, Task, Technician, TechnicianId};
use crate::domain::Skill;
use crate::error::{Error, Result};

pub const INSTANCE_FORMAT_VERSION: u32 = 1;

/// Rework uniforms materialized per customer; later visits extend the
/// stream deterministically.
pub const STORED_REWORK_DRAWS: usize = 16;

/// All parameters of the instance generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstanceConfig {
    pub area_side_km: f64,
    pub num_regular: u32,
    pub num_expert: u32,
    pub absence_prob: f64,
    pub work_limit_minutes: f64,
    pub service_minutes: f64,
    pub speed_kmh: f64,
    pub weekly_demand_mean: f64,
    pub cv: f64,
    pub monday_multiplier: f64,
    pub deadline_offset_days: u32,
    pub eta: f64,
    pub rework_prob: f64,
    pub arrival_days: u32,
    pub easy_share: f64,
    pub seed: u64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            area_side_km: 200.0,
            num_regular: 3,
            num_expert: 3,
            absence_prob: 0.1,
            work_limit_minutes: 420.0,
            service_minutes: 30.0,
            speed_kmh: 60.0,
            weekly_demand_mean: 180.0,
            cv: 1.0 / 6.0,
            monday_multiplier: 3.0,
            deadline_offset_days: 2,
            eta: 1.1,
            rework_prob: 0.5,
            arrival_days: 15,
            easy_share: 0.5,
            seed: 0,
        }
    }
}

impl InstanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.absence_prob) {
            return Err(Error::Config(format!("absence_prob not in [0,1]: {}", self.absence_prob)));
        }
        if !(0.0..=1.0).contains(&self.easy_share) {
            return Err(Error::Config(format!("easy_share not in [0,1]: {}", self.easy_share)));
        }
        if !(self.rework_prob > 0.0 && self.rework_prob < 1.0) {
            return Err(Error::Config(format!("rework_prob not in (0,1): {}", self.rework_prob)));
        }
        if self.eta <= 1.0 {
            return Err(Error::Config(format!("eta must exceed 1: {}", self.eta)));
        }
        if self.area_side_km <= 0.0 || self.speed_kmh <= 0.0 || self.work_limit_minutes <= 0.0 {
            return Err(Error::Config("area, speed, and work limit must be positive".into()));
        }
        if self.service_minutes < 0.0 || self.cv < 0.0 || self.monday_multiplier <= 0.0 {
            return Err(Error::Config(
                "service time and cv must be nonnegative, monday multiplier positive".into(),
            ));
        }
        if self.weekly_demand_mean < 0.0 {
            return Err(Error::Config("weekly demand must be nonnegative".into()));
        }
        if self.arrival_days == 0 {
            return Err(Error::Config("arrival window must span at least one day".into()));
        }
        if self.num_regular + self.num_expert == 0 {
            return Err(Error::Config("the roster must contain at least one technician".into()));
        }
        Ok(())
    }

    /// Expected daily request count outside Mondays.
    pub fn daily_mean(&self) -> f64 {
        self.weekly_demand_mean / 7.0
    }

    /// Periods are working days, five per week; Mondays are days 1, 6, 11, ...
    pub fn is_monday(&self, day: Period) -> bool {
        (day - 1) % 5 == 0
    }

    /// First period without new arrivals.
    pub fn cutoff_period(&self) -> Period {
        self.arrival_days + 1
    }

    pub fn depot(&self) -> Point {
        Point::new(self.area_side_km / 2.0, self.area_side_km / 2.0)
    }

    /// Fixed roster: experts take the low ids, regulars follow. Ids double
    /// as the deterministic tie order, and anchoring equal-cost ties on
    /// experts keeps failed advanced customers from cycling through
    /// regulars under risk-blind policies.
    pub fn roster(&self) -> Vec<Technician> {
        let mut roster = Vec::with_capacity((self.num_regular + self.num_expert) as usize);
        for id in 0..self.num_expert {
            roster.push(Technician { id: TechnicianId(id), skill: Skill::Expert });
        }
        for id in self.num_expert..self.num_expert + self.num_regular {
            roster.push(Technician { id: TechnicianId(id), skill: Skill::Regular });
        }
        roster
    }
}

/// Pre-drawn absence table: `rows[technician][period - 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbsenceTable {
    pub horizon: Period,
    pub rows: Vec<Vec<bool>>,
}

/// A fully materialized realization of the stochastic process.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceRealization {
    pub config: InstanceConfig,
    /// Arrivals per period; only periods inside the arrival window appear.
    pub arrivals: BTreeMap<Period, Vec<Customer>>,
    pub absences: AbsenceTable,
    /// Rework uniforms per customer, consumed in risky-visit order.
    pub rework: BTreeMap<CustomerId, Vec<f64>>,
}

impl InstanceRealization {
    pub fn total_customers(&self) -> u32 {
        self.arrivals.values().map(|v| v.len() as u32).sum()
    }

    /// Absence lookup; periods beyond the pre-drawn horizon extend the
    /// stream deterministically from the seed.
    pub fn is_absent(&self, technician: TechnicianId, period: Period) -> bool {
        let idx = technician.0 as usize;
        if period >= 1 && period <= self.absences.horizon {
            self.absences.rows[idx][(period - 1) as usize]
        } else {
            let mut rng = stream_rng(
                self.config.seed,
                "absence-ext",
                (technician.0 as u64) << 32 | period as u64,
            );
            rng.gen::<f64>() < self.config.absence_prob
        }
    }

    /// The `k`-th rework uniform for a customer (0-based); indices beyond
    /// the stored table re-derive the customer's stream.
    pub fn rework_uniform(&self, customer: CustomerId, k: u32) -> f64 {
        if let Some(draws) = self.rework.get(&customer) {
            if (k as usize) < draws.len() {
                return draws[k as usize];
            }
        }
        let mut rng = stream_rng(self.config.seed, "rework", customer.0 as u64);
        let mut value = 0.0;
        for _ in 0..=k {
            value = rng.gen::<f64>();
        }
        value
    }

    pub fn available_technicians(&self, period: Period) -> Vec<Technician> {
        self.config
            .roster()
            .into_iter()
            .filter(|t| !self.is_absent(t.id, period))
            .collect()
    }

    /// Consistency warnings that do not prevent use, e.g. customers sharing
    /// an exact location (allowed; travel time between them is zero).
    pub fn validation_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        let mut by_location: BTreeMap<(u64, u64), Vec<CustomerId>> = BTreeMap::new();
        for customers in self.arrivals.values() {
            for c in customers {
                by_location
                    .entry((c.location.x.to_bits(), c.location.y.to_bits()))
                    .or_default()
                    .push(c.id);
            }
        }
        for ids in by_location.values() {
            if ids.len() > 1 {
                let list: Vec<String> = ids.iter().map(|c| c.to_string()).collect();
                warnings.push(format!("customers {} share one location", list.join(", ")));
            }
        }
        warnings
    }
}

fn fnv64(data: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in data {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent named RNG stream derived from the master seed. Consumption
/// in one stream can never shift another.
pub fn stream_rng(seed: u64, tag: &str, index: u64) -> ChaCha12Rng {
    let mut state = seed
        ^ fnv64(tag.as_bytes()).rotate_left(17)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    let mut bytes = [0u8; 32];
    for chunk in bytes.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(bytes)
}

/// Number of new requests on `day`: a normal draw around the daily mean,
/// tripled on Mondays, rounded to the nearest integer and clamped at zero.
pub fn daily_arrival_count<R: Rng>(day: Period, config: &InstanceConfig, rng: &mut R) -> u32 {
    let mu = config.daily_mean();
    let sigma = config.cv * mu;
    let normal = Normal::new(mu, sigma).expect("nonnegative standard deviation");
    let mut draw = normal.sample(rng);
    if config.is_monday(day) {
        draw *= config.monday_multiplier;
    }
    draw.round().max(0.0) as u32
}

/// Materialize a full realization from the config's seed. Arrivals,
/// locations, tasks, absences, and rework coins each come from their own
/// named stream.
pub fn generate_instance(config: &InstanceConfig) -> Result<InstanceRealization> {
    config.validate()?;
    let seed = config.seed;
    let mut arrivals_rng = stream_rng(seed, "arrivals", 0);
    let mut locations_rng = stream_rng(seed, "locations", 0);
    let mut tasks_rng = stream_rng(seed, "tasks", 0);
    let mut absence_rng = stream_rng(seed, "absences", 0);

    let mut arrivals: BTreeMap<Period, Vec<Customer>> = BTreeMap::new();
    let mut next_id = 1u32;
    for day in 1..=config.arrival_days {
        let count = daily_arrival_count(day, config, &mut arrivals_rng);
        let mut customers = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let x = locations_rng.gen::<f64>() * config.area_side_km;
            let y = locations_rng.gen::<f64>() * config.area_side_km;
            let task =
                if tasks_rng.gen::<f64>() < config.easy_share { Task::Easy } else { Task::Advanced };
            customers.push(Customer {
                id: CustomerId(next_id),
                location: Point::new(x, y),
                task,
                arrival_period: day,
                deadline: day + config.deadline_offset_days,
                visits_so_far: 0,
            });
            next_id += 1;
        }
        if !customers.is_empty() {
            arrivals.insert(day, customers);
        }
    }

    let horizon = 4 * config.arrival_days;
    let roster_size = (config.num_regular + config.num_expert) as usize;
    let mut rows = Vec::with_capacity(roster_size);
    for _ in 0..roster_size {
        let row: Vec<bool> =
            (0..horizon).map(|_| absence_rng.gen::<f64>() < config.absence_prob).collect();
        rows.push(row);
    }

    let mut rework = BTreeMap::new();
    for customers in arrivals.values() {
        for c in customers {
            let mut rng = stream_rng(seed, "rework", c.id.0 as u64);
            let draws: Vec<f64> = (0..STORED_REWORK_DRAWS).map(|_| rng.gen::<f64>()).collect();
            rework.insert(c.id, draws);
        }
    }

    Ok(InstanceRealization {
        config: config.clone(),
        arrivals,
        absences: AbsenceTable { horizon, rows },
        rework,
    })
}

#[derive(Serialize, Deserialize)]
struct DayArrivals {
    period: Period,
    customers: Vec<Customer>,
}

#[derive(Serialize, Deserialize)]
struct ReworkRow {
    customer: CustomerId,
    draws: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    format_version: u32,
    config: InstanceConfig,
    arrivals: Vec<DayArrivals>,
    absences: AbsenceTable,
    rework: Vec<ReworkRow>,
}

const INSTANCE_FILE_KEYS: &[&str] = &["format_version", "config", "arrivals", "absences", "rework"];

/// Write a realization as a versioned, self-describing JSON document.
pub fn save_instance(realization: &InstanceRealization, path: &Path) -> Result<()> {
    let file = InstanceFile {
        format_version: INSTANCE_FORMAT_VERSION,
        config: realization.config.clone(),
        arrivals: realization
            .arrivals
            .iter()
            .map(|(period, customers)| DayArrivals { period: *period, customers: customers.clone() })
            .collect(),
        absences: realization.absences.clone(),
        rework: realization
            .rework
            .iter()
            .map(|(customer, draws)| ReworkRow { customer: *customer, draws: draws.clone() })
            .collect(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Read a realization back. Unknown fields are tolerated and reported as
/// warnings; a wrong version or malformed content is an error.
pub fn load_instance(path: &Path) -> Result<(InstanceRealization, Vec<String>)> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    let version = value
        .get("format_version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: "missing format_version".into(),
        })?;
    if version != INSTANCE_FORMAT_VERSION as u64 {
        return Err(Error::Version { expected: INSTANCE_FORMAT_VERSION, found: version as u32 });
    }
    let mut warnings = Vec::new();
    if let Some(map) = value.as_object() {
        for key in map.keys() {
            if !INSTANCE_FILE_KEYS.contains(&key.as_str()) {
                warnings.push(format!("ignoring unknown field `{key}`"));
            }
        }
    }
    let file: InstanceFile = serde_json::from_value(value)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    file.config.validate()?;
    let realization = InstanceRealization {
        config: file.config,
        arrivals: file
            .arrivals
            .into_iter()
            .map(|day| (day.period, day.customers))
            .collect(),
        absences: file.absences,
        rework: file.rework.into_iter().map(|row| (row.customer, row.draws)).collect(),
    };
    Ok((realization, warnings))
}
