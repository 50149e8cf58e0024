//! Core problem entities and the cost model of the sequential decision
//! process: customers with deadlines, technicians with skills, per-period
//! decision states, and the compounding inconvenience cost of late service.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::routing::{self, TravelModel};

/// Decision periods are counted from 1.
pub type Period = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CustomerId(pub u32);

impl std::fmt::Display for CustomerId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TechnicianId(pub u32);

impl std::fmt::Display for TechnicianId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "w{}", self.0)
    }
}

/// Task difficulty. Advanced tasks fail with the rework probability when
/// served by a regular technician.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Easy,
    Advanced,
}

/// Technician skill level. Experts complete any task with certainty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Skill {
    Regular,
    Expert,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Customer {
    pub id: CustomerId,
    pub location: Point,
    pub task: Task,
    pub arrival_period: Period,
    /// Last period this customer can be completed without inconvenience.
    pub deadline: Period,
    /// Completed-or-failed visits so far. For a still-open customer every
    /// prior visit was a failed risky one, so this doubles as the index into
    /// the customer's rework coin stream.
    pub visits_so_far: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Technician {
    pub id: TechnicianId,
    pub skill: Skill,
}

/// Failure probability of assigning `task` to a technician with `skill`.
/// Only the advanced-to-regular pairing is risky; everything else is safe.
pub fn assignment_risk(skill: Skill, task: Task, rework_prob: f64) -> f64 {
    match (skill, task) {
        (Skill::Regular, Task::Advanced) => rework_prob,
        _ => 0.0,
    }
}

/// Everything the dispatcher sees in one period: the available workforce,
/// the open customers, and the cost-model parameters. The risk matrix is
/// derived on demand from (task, skill) instead of being stored.
#[derive(Debug, Clone)]
pub struct DecisionState {
    pub period: Period,
    /// Available technicians, sorted by id.
    pub available_technicians: Vec<Technician>,
    /// Open customers, sorted by id.
    pub customers: Vec<Customer>,
    pub rework_prob: f64,
    pub cutoff_period: Period,
    pub penalty_base: f64,
    pub work_limit_minutes: f64,
    travel: TravelModel,
}

impl DecisionState {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        period: Period,
        mut available_technicians: Vec<Technician>,
        mut customers: Vec<Customer>,
        rework_prob: f64,
        cutoff_period: Period,
        penalty_base: f64,
        work_limit_minutes: f64,
        depot: Point,
        speed_kmh: f64,
        service_minutes: f64,
    ) -> Result<Self> {
        if !(rework_prob > 0.0 && rework_prob < 1.0) {
            return Err(Error::Config(format!(
                "rework probability must lie in (0,1), got {rework_prob}"
            )));
        }
        if penalty_base <= 1.0 {
            return Err(Error::Config(format!(
                "penalty base must exceed 1, got {penalty_base}"
            )));
        }
        if period == 0 {
            return Err(Error::Config("periods are counted from 1".into()));
        }
        for c in &customers {
            if c.arrival_period > period {
                return Err(Error::Config(format!(
                    "customer {} arrives in period {} but the state is in period {}",
                    c.id, c.arrival_period, period
                )));
            }
        }
        available_technicians.sort_by_key(|t| t.id);
        customers.sort_by_key(|c| c.id);
        let travel = TravelModel::new(
            depot,
            speed_kmh,
            service_minutes,
            customers.iter().map(|c| (c.id, c.location)).collect(),
        )?;
        Ok(DecisionState {
            period,
            available_technicians,
            customers,
            rework_prob,
            cutoff_period,
            penalty_base,
            work_limit_minutes,
            travel,
        })
    }

    pub fn travel(&self) -> &TravelModel {
        &self.travel
    }

    pub fn customer(&self, id: CustomerId) -> Option<&Customer> {
        self.customers
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| &self.customers[i])
    }

    pub fn technician(&self, id: TechnicianId) -> Option<&Technician> {
        self.available_technicians
            .binary_search_by_key(&id, |t| t.id)
            .ok()
            .map(|i| &self.available_technicians[i])
    }

    /// Derived risk-matrix entry for an available technician and an open
    /// customer.
    pub fn risk(&self, technician: &Technician, customer: &Customer) -> f64 {
        assignment_risk(technician.skill, customer.task, self.rework_prob)
    }
}

/// Per-technician ordered customer routes. Each route implicitly starts and
/// ends at the depot; assignment and routing are both encoded by the
/// sequences.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Decision {
    pub routes: BTreeMap<TechnicianId, Vec<CustomerId>>,
}

impl Decision {
    /// Empty routes for the given technicians.
    pub fn empty<I: IntoIterator<Item = TechnicianId>>(technicians: I) -> Self {
        Decision {
            routes: technicians.into_iter().map(|id| (id, Vec::new())).collect(),
        }
    }

    pub fn routed_customers(&self) -> impl Iterator<Item = (TechnicianId, CustomerId)> + '_ {
        self.routes
            .iter()
            .flat_map(|(w, route)| route.iter().map(move |c| (*w, *c)))
    }

    pub fn is_empty(&self) -> bool {
        self.routes.values().all(|r| r.is_empty())
    }
}

/// Partition of the state's customers induced by a decision: not routed,
/// routed with failure risk, and routed safely. Safely assigned customers
/// leave the system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PostDecisionState {
    pub period: Period,
    pub unassigned: BTreeSet<CustomerId>,
    pub risky_assigned: BTreeSet<CustomerId>,
    pub safe_assigned: BTreeSet<CustomerId>,
    /// Deadlines of the customers that may still be in the system next
    /// period (unassigned and risky).
    pub deadlines: BTreeMap<CustomerId, Period>,
}

/// Exogenous information revealed during the transition to the next period.
#[derive(Debug, Clone)]
pub struct StochasticInfo {
    pub available_next: Vec<Technician>,
    pub new_customers: Vec<Customer>,
    /// Risky assignments that remained unresolved.
    pub failed_risky: BTreeSet<CustomerId>,
}

/// Increase in inconvenience charged to a customer with the given deadline
/// during the transition out of period `t`: `eta^(t - deadline + 1)` once the
/// deadline is due, zero before.
///
/// Panics if `eta <= 1`; configurations are validated before reaching here.
pub fn inconvenience_increase(deadline: Period, t: Period, eta: f64) -> f64 {
    assert!(eta > 1.0, "configuration error: penalty base must exceed 1, got {eta}");
    if deadline > t {
        return 0.0;
    }
    let exponent = (t as i64) - (deadline as i64) + 1;
    eta.powi(exponent as i32)
}

/// Classify the customers of `state` under `decision`. Fails with the first
/// violated constraint if the decision is infeasible.
pub fn post_decision(state: &DecisionState, decision: &Decision) -> Result<PostDecisionState> {
    routing::ensure_feasible(state, decision)?;
    let mut risky = BTreeSet::new();
    let mut safe = BTreeSet::new();
    for (w, c) in decision.routed_customers() {
        let tech = state.technician(w).expect("validated above");
        let cust = state.customer(c).expect("validated above");
        if state.risk(tech, cust) > 0.0 {
            risky.insert(c);
        } else {
            safe.insert(c);
        }
    }
    let mut unassigned = BTreeSet::new();
    let mut deadlines = BTreeMap::new();
    for c in &state.customers {
        if !risky.contains(&c.id) && !safe.contains(&c.id) {
            unassigned.insert(c.id);
        }
        if !safe.contains(&c.id) {
            deadlines.insert(c.id, c.deadline);
        }
    }
    Ok(PostDecisionState {
        period: state.period,
        unassigned,
        risky_assigned: risky,
        safe_assigned: safe,
        deadlines,
    })
}

/// Expected immediate cost of a decision: the certain inconvenience of the
/// unassigned customers plus the rework-probability-weighted inconvenience
/// of the risky ones.
pub fn expected_immediate_cost(state: &DecisionState, decision: &Decision) -> Result<f64> {
    let post = post_decision(state, decision)?;
    let t = state.period;
    let eta = state.penalty_base;
    let unassigned: f64 = post
        .unassigned
        .iter()
        .map(|c| inconvenience_increase(post.deadlines[c], t, eta))
        .sum();
    let risky: f64 = post
        .risky_assigned
        .iter()
        .map(|c| inconvenience_increase(post.deadlines[c], t, eta))
        .sum();
    Ok(unassigned + state.rework_prob * risky)
}

/// Realized cost once the outcomes of the risky assignments are known: the
/// inconvenience of everyone still in the system after the period.
pub fn realized_cost(post: &PostDecisionState, info: &StochasticInfo, eta: f64) -> Result<f64> {
    for c in &info.failed_risky {
        if !post.risky_assigned.contains(c) {
            return Err(Error::Protocol(format!(
                "failed visit reported for {c}, which was not a risky assignment"
            )));
        }
    }
    let t = post.period;
    Ok(post
        .unassigned
        .iter()
        .chain(info.failed_risky.iter())
        .map(|c| inconvenience_increase(post.deadlines[c], t, eta))
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + b.abs())
    }

    fn tech(id: u32, skill: Skill) -> Technician {
        Technician { id: TechnicianId(id), skill }
    }

    fn customer(id: u32, task: Task, deadline: Period) -> Customer {
        Customer {
            id: CustomerId(id),
            location: Point::new(100.0, 100.0),
            task,
            arrival_period: 1,
            deadline,
            visits_so_far: 0,
        }
    }

    fn state(customers: Vec<Customer>, technicians: Vec<Technician>, t: Period) -> DecisionState {
        DecisionState::new(
            t,
            technicians,
            customers,
            0.5,
            16,
            1.1,
            420.0,
            Point::new(100.0, 100.0),
            60.0,
            30.0,
        )
        .unwrap()
    }

    #[test]
    fn inconvenience_at_deadline() {
        assert!(close(inconvenience_increase(4, 4, 1.1), 1.1));
    }

    #[test]
    fn inconvenience_before_deadline_is_zero() {
        assert_eq!(inconvenience_increase(5, 4, 1.1), 0.0);
    }

    #[test]
    fn inconvenience_one_period_overdue() {
        assert!(close(inconvenience_increase(3, 4, 1.1), 1.21));
    }

    #[test]
    #[should_panic(expected = "penalty base")]
    fn inconvenience_rejects_degenerate_penalty() {
        inconvenience_increase(3, 4, 1.0);
    }

    #[test]
    fn inconvenience_non_increasing_in_deadline() {
        let t = 12;
        let mut last = f64::INFINITY;
        for deadline in 1..=20 {
            let f = inconvenience_increase(deadline, t, 1.1);
            assert!(f <= last + 1e-12);
            if deadline > t {
                assert_eq!(f, 0.0);
            }
            last = f;
        }
    }

    #[test]
    fn expected_cost_mixed_example() {
        // One unassigned customer overdue by one period, one risky customer
        // due now: 1.21 + 0.5 * 1.1.
        let customers = vec![customer(1, Task::Easy, 3), customer(2, Task::Advanced, 4)];
        let technicians = vec![tech(0, Skill::Regular)];
        let st = state(customers, technicians, 4);
        let mut decision = Decision::empty([TechnicianId(0)]);
        decision.routes.get_mut(&TechnicianId(0)).unwrap().push(CustomerId(2));
        let cost = expected_immediate_cost(&st, &decision).unwrap();
        assert!(close(cost, 1.76));
    }

    #[test]
    fn expected_cost_all_safe_is_zero() {
        let customers = vec![customer(1, Task::Advanced, 3), customer(2, Task::Easy, 3)];
        let technicians = vec![tech(0, Skill::Expert)];
        let st = state(customers, technicians, 4);
        let mut decision = Decision::empty([TechnicianId(0)]);
        decision
            .routes
            .get_mut(&TechnicianId(0))
            .unwrap()
            .extend([CustomerId(1), CustomerId(2)]);
        assert_eq!(expected_immediate_cost(&st, &decision).unwrap(), 0.0);
    }

    #[test]
    fn expected_cost_non_urgent_unassigned_is_zero() {
        let customers = vec![customer(1, Task::Easy, 9), customer(2, Task::Advanced, 7)];
        let st = state(customers, vec![tech(0, Skill::Regular)], 4);
        let decision = Decision::empty([TechnicianId(0)]);
        assert_eq!(expected_immediate_cost(&st, &decision).unwrap(), 0.0);
    }

    #[test]
    fn expected_cost_rejects_infeasible_decision() {
        let customers = vec![customer(1, Task::Easy, 4)];
        let st = state(customers, vec![tech(0, Skill::Regular)], 4);
        let mut decision = Decision::empty([TechnicianId(7)]);
        decision.routes.get_mut(&TechnicianId(7)).unwrap().push(CustomerId(1));
        match expected_immediate_cost(&st, &decision) {
            Err(Error::Infeasible { technician: 7, .. }) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn realized_cost_examples() {
        let post = PostDecisionState {
            period: 4,
            unassigned: BTreeSet::from([CustomerId(1)]),
            risky_assigned: BTreeSet::new(),
            safe_assigned: BTreeSet::new(),
            deadlines: BTreeMap::from([(CustomerId(1), 4)]),
        };
        let info = StochasticInfo {
            available_next: vec![],
            new_customers: vec![],
            failed_risky: BTreeSet::new(),
        };
        assert!(close(realized_cost(&post, &info, 1.1).unwrap(), 1.1));

        let post = PostDecisionState {
            period: 4,
            unassigned: BTreeSet::new(),
            risky_assigned: BTreeSet::from([CustomerId(2)]),
            safe_assigned: BTreeSet::new(),
            deadlines: BTreeMap::from([(CustomerId(2), 3)]),
        };
        let all_succeed = StochasticInfo {
            available_next: vec![],
            new_customers: vec![],
            failed_risky: BTreeSet::new(),
        };
        assert_eq!(realized_cost(&post, &all_succeed, 1.1).unwrap(), 0.0);
        let failed = StochasticInfo {
            available_next: vec![],
            new_customers: vec![],
            failed_risky: BTreeSet::from([CustomerId(2)]),
        };
        assert!(close(realized_cost(&post, &failed, 1.1).unwrap(), 1.21));
    }

    #[test]
    fn realized_cost_rejects_non_risky_failures() {
        let post = PostDecisionState {
            period: 4,
            unassigned: BTreeSet::new(),
            risky_assigned: BTreeSet::new(),
            safe_assigned: BTreeSet::from([CustomerId(1)]),
            deadlines: BTreeMap::new(),
        };
        let info = StochasticInfo {
            available_next: vec![],
            new_customers: vec![],
            failed_risky: BTreeSet::from([CustomerId(1)]),
        };
        assert!(matches!(realized_cost(&post, &info, 1.1), Err(Error::Protocol(_))));
    }

    /// Exhaustive enumeration of all risky failure subsets reproduces the
    /// expected immediate cost exactly.
    #[test]
    fn expected_cost_matches_enumeration() {
        use rand::prelude::*;
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let n_risky = rng.gen_range(0..=6usize);
            let n_unassigned = rng.gen_range(0..=4usize);
            let t = 6;
            let mut customers = Vec::new();
            for i in 0..(n_risky + n_unassigned) {
                let task = if i < n_risky { Task::Advanced } else { Task::Easy };
                customers.push(customer(i as u32 + 1, task, rng.gen_range(3..10)));
            }
            let st = state(customers.clone(), vec![tech(0, Skill::Regular)], t);
            let mut decision = Decision::empty([TechnicianId(0)]);
            for c in customers.iter().take(n_risky) {
                decision.routes.get_mut(&TechnicianId(0)).unwrap().push(c.id);
            }
            // Single technician route with many stops can exceed the work
            // limit; use a permissive limit for this arithmetic check.
            let mut st = st;
            st.work_limit_minutes = 1e9;
            let expected = expected_immediate_cost(&st, &decision).unwrap();

            let post = post_decision(&st, &decision).unwrap();
            let risky: Vec<CustomerId> = post.risky_assigned.iter().copied().collect();
            let p = st.rework_prob;
            let mut enumerated = 0.0;
            for mask in 0..(1u32 << risky.len()) {
                let failed: BTreeSet<CustomerId> = risky
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, c)| *c)
                    .collect();
                let prob = p.powi(failed.len() as i32)
                    * (1.0 - p).powi((risky.len() - failed.len()) as i32);
                let info = StochasticInfo {
                    available_next: vec![],
                    new_customers: vec![],
                    failed_risky: failed,
                };
                enumerated += prob * realized_cost(&post, &info, st.penalty_base).unwrap();
            }
            assert!(
                (expected - enumerated).abs() <= 1e-12,
                "expected {expected} vs enumerated {enumerated}"
            );
        }
    }

    /// Relaxing a single deadline never increases the expected immediate
    /// cost of the same decision.
    #[test]
    fn expected_cost_monotone_in_deadline() {
        use rand::prelude::*;
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        for _ in 0..50 {
            let t = 6;
            let n = rng.gen_range(1..6usize);
            let customers: Vec<Customer> = (0..n)
                .map(|i| {
                    let task = if rng.gen_bool(0.5) { Task::Advanced } else { Task::Easy };
                    customer(i as u32 + 1, task, rng.gen_range(3..9))
                })
                .collect();
            let mut st = state(customers.clone(), vec![tech(0, Skill::Regular)], t);
            st.work_limit_minutes = 1e9;
            let mut decision = Decision::empty([TechnicianId(0)]);
            for c in customers.iter().filter(|_| rng.gen_bool(0.5)) {
                decision.routes.get_mut(&TechnicianId(0)).unwrap().push(c.id);
            }
            let base = expected_immediate_cost(&st, &decision).unwrap();
            let relax_idx = rng.gen_range(0..n);
            let mut relaxed = st.clone();
            relaxed.customers[relax_idx].deadline += rng.gen_range(1..3);
            let relaxed_cost = expected_immediate_cost(&relaxed, &decision).unwrap();
            assert!(relaxed_cost <= base + 1e-12);
        }
    }

    /// Realized cost is additive over disjoint customer sets.
    #[test]
    fn realized_cost_additive() {
        let deadlines: BTreeMap<CustomerId, Period> =
            (1..=4).map(|i| (CustomerId(i), 3 + i % 3)).collect();
        let post_a = PostDecisionState {
            period: 5,
            unassigned: BTreeSet::from([CustomerId(1)]),
            risky_assigned: BTreeSet::from([CustomerId(2)]),
            safe_assigned: BTreeSet::new(),
            deadlines: deadlines.clone(),
        };
        let post_b = PostDecisionState {
            period: 5,
            unassigned: BTreeSet::from([CustomerId(3)]),
            risky_assigned: BTreeSet::from([CustomerId(4)]),
            safe_assigned: BTreeSet::new(),
            deadlines: deadlines.clone(),
        };
        let post_union = PostDecisionState {
            period: 5,
            unassigned: BTreeSet::from([CustomerId(1), CustomerId(3)]),
            risky_assigned: BTreeSet::from([CustomerId(2), CustomerId(4)]),
            safe_assigned: BTreeSet::new(),
            deadlines,
        };
        let info = |failed: BTreeSet<CustomerId>| StochasticInfo {
            available_next: vec![],
            new_customers: vec![],
            failed_risky: failed,
        };
        let a = realized_cost(&post_a, &info(BTreeSet::from([CustomerId(2)])), 1.1).unwrap();
        let b = realized_cost(&post_b, &info(BTreeSet::from([CustomerId(4)])), 1.1).unwrap();
        let u = realized_cost(
            &post_union,
            &info(BTreeSet::from([CustomerId(2), CustomerId(4)])),
            1.1,
        )
        .unwrap();
        assert!(close(a + b, u));
    }
}
