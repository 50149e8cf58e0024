//! Exact expected-cost computation for tiny scenarios by full enumeration
//! of assignments and rework outcomes. The arrival and availability scripts
//! are deterministic, so the only stochastic branching is over risky-visit
//! failures. Serves as the independent dynamic-programming check for the
//! value-function monotonicity arguments behind the score design.

use std::collections::HashMap;

use crate::domain::{inconvenience_increase, Customer, Period, Point, Skill, Task, Technician};
use crate::error::{Error, Result};

/// Enumeration size guards.
pub const MAX_HORIZON: Period = 3;
pub const MAX_TECHNICIANS: usize = 2;
pub const MAX_STATE_CUSTOMERS: usize = 5;
pub const MAX_TOTAL_CUSTOMERS: usize = 10;

/// A fully scripted miniature problem. Customers with `arrival_period > 1`
/// join the system at their arrival period; availability rows script which
/// technicians work each period.
#[derive(Debug, Clone)]
pub struct TinyScenario {
    pub horizon: Period,
    pub technicians: Vec<Technician>,
    /// `availability[t - 1][tech index]`.
    pub availability: Vec<Vec<bool>>,
    pub work_limit_minutes: f64,
    pub speed_kmh: f64,
    pub service_minutes: f64,
    pub depot: Point,
    pub rework_prob: f64,
    pub eta: f64,
    pub customers: Vec<Customer>,
}

impl TinyScenario {
    fn check_size(&self) -> Result<()> {
        if self.horizon == 0 || self.horizon > MAX_HORIZON {
            return Err(Error::OracleRefusal(format!(
                "horizon {} outside 1..={MAX_HORIZON}",
                self.horizon
            )));
        }
        if self.technicians.len() > MAX_TECHNICIANS {
            return Err(Error::OracleRefusal(format!(
                "{} technicians exceed the bound of {MAX_TECHNICIANS}",
                self.technicians.len()
            )));
        }
        if self.customers.len() > MAX_TOTAL_CUSTOMERS {
            return Err(Error::OracleRefusal(format!(
                "{} scripted customers exceed the bound of {MAX_TOTAL_CUSTOMERS}",
                self.customers.len()
            )));
        }
        if self.availability.len() < self.horizon as usize {
            return Err(Error::OracleRefusal(format!(
                "availability script covers {} periods, horizon needs {}",
                self.availability.len(),
                self.horizon
            )));
        }
        if !(self.rework_prob > 0.0 && self.rework_prob < 1.0) || self.eta <= 1.0 {
            return Err(Error::OracleRefusal("invalid rework probability or penalty base".into()));
        }
        Ok(())
    }

    fn arrivals_mask(&self, period: Period) -> u32 {
        let mut mask = 0;
        for (i, c) in self.customers.iter().enumerate() {
            if c.arrival_period == period {
                mask |= 1 << i;
            }
        }
        mask
    }

    fn travel_minutes(&self, a: &Point, b: &Point) -> f64 {
        a.distance(b) * (60.0 / self.speed_kmh)
    }
}

struct Solver<'a> {
    scenario: &'a TinyScenario,
    /// Minimal route duration (including services) per customer subset.
    tsp_cache: HashMap<u32, f64>,
    value_cache: HashMap<(Period, u32), f64>,
}

impl<'a> Solver<'a> {
    fn new(scenario: &'a TinyScenario) -> Self {
        Solver { scenario, tsp_cache: HashMap::new(), value_cache: HashMap::new() }
    }

    /// Minimal duration of a depot round trip over the subset, across all
    /// visit orders.
    fn min_route_duration(&mut self, mask: u32) -> f64 {
        if mask == 0 {
            return 0.0;
        }
        if let Some(&d) = self.tsp_cache.get(&mask) {
            return d;
        }
        let members: Vec<usize> =
            (0..self.scenario.customers.len()).filter(|i| mask & (1 << i) != 0).collect();
        let mut best = f64::INFINITY;
        let mut order: Vec<usize> = members.clone();
        permute(&mut order, 0, &mut |perm| {
            let mut duration = 0.0;
            let mut from = self.scenario.depot;
            for &i in perm.iter() {
                let to = self.scenario.customers[i].location;
                duration += self.scenario.travel_minutes(&from, &to)
                    + self.scenario.service_minutes;
                from = to;
            }
            duration += self.scenario.travel_minutes(&from, &self.scenario.depot);
            if duration < best {
                best = duration;
            }
        });
        self.tsp_cache.insert(mask, best);
        best
    }

    /// Is there a feasible split of `serve_masks` customers over the
    /// available technicians respecting skills and the work limit?
    /// `needs_regular` marks customers that must go to a regular technician
    /// (risky by construction), `needs_expert` those that must go to one.
    fn assignment_feasible(
        &mut self,
        period: Period,
        serve_mask: u32,
        needs_regular: u32,
        needs_expert: u32,
    ) -> bool {
        let available: Vec<&Technician> = self
            .scenario
            .technicians
            .iter()
            .enumerate()
            .filter(|(i, _)| self.scenario.availability[(period - 1) as usize][*i])
            .map(|(_, w)| w)
            .collect();
        if serve_mask == 0 {
            return true;
        }
        if available.is_empty() {
            return false;
        }
        let members: Vec<usize> =
            (0..self.scenario.customers.len()).filter(|i| serve_mask & (1 << i) != 0).collect();
        // Enumerate tech choice per served customer.
        let m = available.len();
        let mut choice = vec![0usize; members.len()];
        loop {
            let mut masks = vec![0u32; m];
            let mut valid = true;
            for (slot, &customer) in members.iter().enumerate() {
                let tech = available[choice[slot]];
                let bit = 1u32 << customer;
                if needs_regular & bit != 0 && tech.skill != Skill::Regular {
                    valid = false;
                    break;
                }
                if needs_expert & bit != 0 && tech.skill != Skill::Expert {
                    valid = false;
                    break;
                }
                masks[choice[slot]] |= bit;
            }
            if valid
                && masks.iter().all(|&mask| {
                    self.min_route_duration(mask)
                        <= self.scenario.work_limit_minutes + crate::routing::FEASIBILITY_EPS
                })
            {
                return true;
            }
            // Next choice vector.
            let mut slot = 0;
            loop {
                if slot == members.len() {
                    return false;
                }
                choice[slot] += 1;
                if choice[slot] < m {
                    break;
                }
                choice[slot] = 0;
                slot += 1;
            }
        }
    }

    /// Exact value of the decision state (`period`, open set `mask`).
    fn value(&mut self, period: Period, mask: u32) -> Result<f64> {
        if period > self.scenario.horizon {
            return Ok(0.0);
        }
        if let Some(&v) = self.value_cache.get(&(period, mask)) {
            return Ok(v);
        }
        let present: Vec<usize> =
            (0..self.scenario.customers.len()).filter(|i| mask & (1 << i) != 0).collect();
        if present.len() > MAX_STATE_CUSTOMERS {
            return Err(Error::OracleRefusal(format!(
                "state at period {period} holds {} customers, bound is {MAX_STATE_CUSTOMERS}",
                present.len()
            )));
        }
        let p = self.scenario.rework_prob;
        let eta = self.scenario.eta;
        let expert_available = self.scenario.availability[(period - 1) as usize]
            .iter()
            .zip(&self.scenario.technicians)
            .any(|(a, w)| *a && w.skill == Skill::Expert);
        let regular_available = self.scenario.availability[(period - 1) as usize]
            .iter()
            .zip(&self.scenario.technicians)
            .any(|(a, w)| *a && w.skill == Skill::Regular);

        let mut best = f64::INFINITY;
        // Trit per present customer: 0 unassigned, 1 risky, 2 safe.
        let mut trits = vec![0u8; present.len()];
        'classes: loop {
            let mut unassigned = 0u32;
            let mut risky = 0u32;
            let mut safe = 0u32;
            let mut valid = true;
            for (slot, &i) in present.iter().enumerate() {
                let customer = &self.scenario.customers[i];
                let bit = 1u32 << i;
                match trits[slot] {
                    0 => unassigned |= bit,
                    1 => {
                        // Risky means advanced served by a regular.
                        if customer.task != Task::Advanced || !regular_available {
                            valid = false;
                            break;
                        }
                        risky |= bit;
                    }
                    _ => {
                        if customer.task == Task::Advanced && !expert_available {
                            valid = false;
                            break;
                        }
                        safe |= bit;
                    }
                }
            }
            if valid {
                // Advanced-safe customers need experts; risky ones regulars.
                let needs_expert = safe
                    & present
                        .iter()
                        .filter(|&&i| self.scenario.customers[i].task == Task::Advanced)
                        .fold(0u32, |acc, &i| acc | (1 << i));
                if self.assignment_feasible(period, risky | safe, risky, needs_expert) {
                    let mut cost = 0.0;
                    for &i in &present {
                        let bit = 1u32 << i;
                        let f = inconvenience_increase(
                            self.scenario.customers[i].deadline,
                            period,
                            eta,
                        );
                        if unassigned & bit != 0 {
                            cost += f;
                        } else if risky & bit != 0 {
                            cost += p * f;
                        }
                    }
                    let future = self.post_value(period, unassigned, risky)?;
                    let total = cost + future;
                    if total < best {
                        best = total;
                    }
                }
            }
            // Advance the trit vector.
            let mut slot = 0;
            loop {
                if slot == trits.len() {
                    break 'classes;
                }
                trits[slot] += 1;
                if trits[slot] < 3 {
                    break;
                }
                trits[slot] = 0;
                slot += 1;
            }
        }
        // The all-unassigned class is always feasible, so a finite value
        // exists even with nobody available.
        let v = if best.is_finite() { best } else { 0.0 };
        self.value_cache.insert((period, mask), v);
        Ok(v)
    }

    /// Expected future cost after committing to (unassigned, risky):
    /// expectation over rework outcomes of the next decision state's value.
    fn post_value(&mut self, period: Period, unassigned: u32, risky: u32) -> Result<f64> {
        let p = self.scenario.rework_prob;
        let arrivals = self.scenario.arrivals_mask(period + 1);
        let risky_members: Vec<usize> =
            (0..self.scenario.customers.len()).filter(|i| risky & (1 << i) != 0).collect();
        let mut expectation = 0.0;
        for outcome in 0..(1u32 << risky_members.len()) {
            let mut failed = 0u32;
            for (slot, &i) in risky_members.iter().enumerate() {
                if outcome & (1 << slot) != 0 {
                    failed |= 1 << i;
                }
            }
            let failures = failed.count_ones() as i32;
            let prob = p.powi(failures) * (1.0 - p).powi(risky_members.len() as i32 - failures);
            let next_mask = unassigned | failed | arrivals;
            expectation += prob * self.value(period + 1, next_mask)?;
        }
        Ok(expectation)
    }
}

fn permute<F: FnMut(&[usize])>(items: &mut Vec<usize>, k: usize, visit: &mut F) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

/// Exact expected cost of the scenario from period 1 under optimal play.
pub fn brute_force_value(scenario: &TinyScenario) -> Result<f64> {
    scenario.check_size()?;
    let mut solver = Solver::new(scenario);
    let initial = scenario.arrivals_mask(1);
    solver.value(1, initial)
}

/// Exact expected future cost of a post-decision state at `period` given
/// the ids (indices into `scenario.customers`) left unassigned and assigned
/// risky.
pub fn brute_force_post_value(
    scenario: &TinyScenario,
    period: Period,
    unassigned: &[usize],
    risky: &[usize],
) -> Result<f64> {
    scenario.check_size()?;
    let mut solver = Solver::new(scenario);
    let to_mask = |ids: &[usize]| ids.iter().fold(0u32, |acc, &i| acc | (1 << i));
    solver.post_value(period, to_mask(unassigned), to_mask(risky))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CustomerId, TechnicianId};
    use rand::prelude::*;

    fn tiny(customers: Vec<Customer>, technicians: Vec<Technician>, horizon: Period) -> TinyScenario {
        let m = technicians.len();
        TinyScenario {
            horizon,
            technicians,
            availability: vec![vec![true; m]; horizon as usize],
            work_limit_minutes: 420.0,
            speed_kmh: 60.0,
            service_minutes: 30.0,
            depot: Point::new(0.0, 0.0),
            rework_prob: 0.5,
            eta: 1.1,
            customers,
        }
    }

    fn customer(id: u32, task: Task, arrival: Period, deadline: Period, x: f64, y: f64) -> Customer {
        Customer {
            id: CustomerId(id),
            location: Point::new(x, y),
            task,
            arrival_period: arrival,
            deadline,
            visits_so_far: 0,
        }
    }

    #[test]
    fn reachable_single_customer_costs_nothing() {
        let scenario = tiny(
            vec![customer(1, Task::Easy, 1, 1, 30.0, 0.0)],
            vec![Technician { id: TechnicianId(0), skill: Skill::Regular }],
            1,
        );
        assert_eq!(brute_force_value(&scenario).unwrap(), 0.0);
    }

    #[test]
    fn unreachable_customer_accrues_inconvenience() {
        // Out-and-back takes 430 minutes, over the limit in every period.
        let scenario = tiny(
            vec![customer(1, Task::Easy, 1, 1, 200.0, 0.0)],
            vec![Technician { id: TechnicianId(0), skill: Skill::Regular }],
            2,
        );
        let v = brute_force_value(&scenario).unwrap();
        // f(1,1) + f(1,2) = 1.1 + 1.21.
        assert!((v - 2.31).abs() < 1e-9);
    }

    #[test]
    fn risky_only_service_costs_expected_rework() {
        // One advanced customer due now, one regular technician: serving is
        // optimal, costs p * f against postponing at f.
        let scenario = tiny(
            vec![customer(1, Task::Advanced, 1, 1, 30.0, 0.0)],
            vec![Technician { id: TechnicianId(0), skill: Skill::Regular }],
            1,
        );
        let v = brute_force_value(&scenario).unwrap();
        assert!((v - 0.5 * 1.1).abs() < 1e-9);
    }

    #[test]
    fn size_bounds_are_enforced() {
        let many: Vec<Customer> =
            (0..11).map(|i| customer(i, Task::Easy, 1, 2, 10.0, 0.0)).collect();
        let scenario = tiny(many, vec![Technician { id: TechnicianId(0), skill: Skill::Regular }], 1);
        match brute_force_value(&scenario) {
            Err(Error::OracleRefusal(msg)) => assert!(msg.contains("11")),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    fn random_scenario(rng: &mut StdRng) -> TinyScenario {
        let horizon = rng.gen_range(1..=3);
        let m = rng.gen_range(1..=2);
        let technicians: Vec<Technician> = (0..m)
            .map(|i| Technician {
                id: TechnicianId(i),
                skill: if rng.gen_bool(0.5) { Skill::Regular } else { Skill::Expert },
            })
            .collect();
        let n = rng.gen_range(1..=4);
        let customers: Vec<Customer> = (0..n)
            .map(|i| {
                customer(
                    i + 1,
                    if rng.gen_bool(0.5) { Task::Easy } else { Task::Advanced },
                    rng.gen_range(1..=horizon.min(2)),
                    rng.gen_range(1..=4),
                    rng.gen::<f64>() * 160.0 - 80.0,
                    rng.gen::<f64>() * 160.0 - 80.0,
                )
            })
            .collect();
        let mut scenario = tiny(customers, technicians, horizon);
        for row in scenario.availability.iter_mut() {
            for slot in row.iter_mut() {
                *slot = rng.gen_bool(0.85);
            }
        }
        scenario.work_limit_minutes = rng.gen_range(150.0..420.0);
        scenario
    }

    /// Relaxing any single deadline never increases the exact value.
    #[test]
    fn deadline_relaxation_is_monotone() {
        let mut rng = StdRng::seed_from_u64(2717);
        for _ in 0..60 {
            let scenario = random_scenario(&mut rng);
            let base = brute_force_value(&scenario).unwrap();
            let which = rng.gen_range(0..scenario.customers.len());
            let mut relaxed = scenario.clone();
            relaxed.customers[which].deadline += rng.gen_range(1..=2);
            let relaxed_value = brute_force_value(&relaxed).unwrap();
            assert!(
                relaxed_value <= base + 1e-9,
                "relaxing deadline raised value: {base} -> {relaxed_value}"
            );
        }
    }
}
