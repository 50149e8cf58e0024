//! Drives the sequential decision process end to end: dispatch a decision,
//! resolve risky visits against the pre-drawn rework coins, charge the
//! realized inconvenience, and transition to the next period.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{
    inconvenience_increase, post_decision, realized_cost, Customer, CustomerId, Decision,
    DecisionState, Period, Point, StochasticInfo, Task, TechnicianId,
};
use crate::error::Result;
use crate::instances::InstanceRealization;
use crate::policies::{dispatch, PolicyKind};

/// Hard guard against pathological non-termination.
pub const EPISODE_PERIOD_CAP: Period = 400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRecord {
    pub id: CustomerId,
    pub task: Task,
    pub location: Point,
    pub arrival_period: Period,
    pub deadline: Period,
    /// Unset only when the episode hit the period cap first.
    pub completion_period: Option<Period>,
    pub visits: u32,
    pub inconvenience: f64,
    pub completed_by: Option<TechnicianId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub period: Period,
    pub open_customers: u32,
    pub realized_cost: f64,
    pub available: Vec<TechnicianId>,
    /// Route duration per technician with a nonempty route.
    pub minutes_worked: BTreeMap<TechnicianId, f64>,
    pub routes: BTreeMap<TechnicianId, Vec<CustomerId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub customers: Vec<CustomerRecord>,
    pub periods: Vec<PeriodRecord>,
    /// First period at or past the cutoff with an empty system.
    pub final_period: Period,
    pub divergent: bool,
    pub total_cost: f64,
    pub total_customers: u32,
}

/// Outcome of one decision → transition step.
pub struct StepOutcome {
    pub realized: f64,
    pub info: StochasticInfo,
    pub next: DecisionState,
    /// (customer, serving technician, total visits including this one).
    pub completed: Vec<(Customer, TechnicianId, u32)>,
}

fn build_state(
    realization: &InstanceRealization,
    period: Period,
    customers: Vec<Customer>,
) -> Result<DecisionState> {
    let config = &realization.config;
    DecisionState::new(
        period,
        realization.available_technicians(period),
        customers,
        config.rework_prob,
        config.cutoff_period(),
        config.eta,
        config.work_limit_minutes,
        config.depot(),
        config.speed_kmh,
        config.service_minutes,
    )
}

/// The first decision state: period 1 arrivals and the period-1 roster.
pub fn initial_state(realization: &InstanceRealization) -> Result<DecisionState> {
    let customers = realization.arrivals.get(&1).cloned().unwrap_or_default();
    build_state(realization, 1, customers)
}

/// Execute one period: classify the decision, resolve each risky visit by
/// consuming the customer's next rework coin, charge the realized cost, and
/// assemble the next state from survivors, new arrivals, and the next
/// absence row.
pub fn step(
    state: &DecisionState,
    decision: &Decision,
    realization: &InstanceRealization,
) -> Result<StepOutcome> {
    let post = post_decision(state, decision)?;
    let t = state.period;

    let mut failed = std::collections::BTreeSet::new();
    let mut completed = Vec::new();
    let mut survivors: Vec<Customer> = Vec::new();
    for (w, c) in decision.routed_customers() {
        let customer = state.customer(c).expect("feasibility checked");
        if post.risky_assigned.contains(&c) {
            let coin = realization.rework_uniform(c, customer.visits_so_far);
            if coin < state.rework_prob {
                failed.insert(c);
                let mut survivor = customer.clone();
                survivor.visits_so_far += 1;
                survivors.push(survivor);
            } else {
                completed.push((customer.clone(), w, customer.visits_so_far + 1));
            }
        } else {
            completed.push((customer.clone(), w, customer.visits_so_far + 1));
        }
    }
    for c in &state.customers {
        if post.unassigned.contains(&c.id) {
            survivors.push(c.clone());
        }
    }

    let next_period = t + 1;
    let new_customers = realization.arrivals.get(&next_period).cloned().unwrap_or_default();
    let info = StochasticInfo {
        available_next: realization.available_technicians(next_period),
        new_customers: new_customers.clone(),
        failed_risky: failed,
    };
    let realized = realized_cost(&post, &info, state.penalty_base)?;

    let mut next_customers = survivors;
    next_customers.extend(new_customers);
    let next = build_state(realization, next_period, next_customers)?;
    Ok(StepOutcome { realized, info, next, completed })
}

/// Run a full episode with a caller-supplied decision rule. The process
/// terminates at the first period at or past the cutoff with no open
/// customers; a safety cap marks runaway episodes as divergent instead of
/// looping forever.
pub fn run_episode_with<F>(
    realization: &InstanceRealization,
    mut decide: F,
) -> Result<EpisodeResult>
where
    F: FnMut(&DecisionState) -> Result<Decision>,
{
    let eta = realization.config.eta;
    let mut state = initial_state(realization)?;
    let mut periods = Vec::new();
    let mut records: BTreeMap<CustomerId, CustomerRecord> = BTreeMap::new();
    let mut total_cost = 0.0;
    let mut divergent = false;
    let final_period;
    loop {
        if state.period >= state.cutoff_period && state.customers.is_empty() {
            final_period = state.period;
            break;
        }
        if state.period > EPISODE_PERIOD_CAP {
            divergent = true;
            final_period = state.period;
            break;
        }
        for c in &state.customers {
            records.entry(c.id).or_insert_with(|| CustomerRecord {
                id: c.id,
                task: c.task,
                location: c.location,
                arrival_period: c.arrival_period,
                deadline: c.deadline,
                completion_period: None,
                visits: 0,
                inconvenience: 0.0,
                completed_by: None,
            });
        }
        let decision = decide(&state)?;
        let t = state.period;
        let outcome = step(&state, &decision, realization)?;

        let mut minutes_worked = BTreeMap::new();
        for (w, route) in &decision.routes {
            if !route.is_empty() {
                minutes_worked.insert(*w, state.travel().route_duration(route)?);
            }
        }
        periods.push(PeriodRecord {
            period: t,
            open_customers: state.customers.len() as u32,
            realized_cost: outcome.realized,
            available: state.available_technicians.iter().map(|w| w.id).collect(),
            minutes_worked,
            routes: decision.routes.clone(),
        });
        total_cost += outcome.realized;

        for (customer, by, visits) in &outcome.completed {
            let record = records.get_mut(&customer.id).expect("recorded on arrival");
            record.completion_period = Some(t);
            record.visits = *visits;
            record.completed_by = Some(*by);
        }
        // Charge the per-customer share of this period's realized cost.
        for c in &state.customers {
            let open_after = outcome.info.failed_risky.contains(&c.id)
                || outcome.next.customer(c.id).is_some();
            if open_after {
                let record = records.get_mut(&c.id).expect("recorded on arrival");
                record.inconvenience += inconvenience_increase(c.deadline, t, eta);
            }
        }
        state = outcome.next;
        // Visit counters for survivors are tracked inside the state; mirror
        // them into the records so partial histories survive divergence.
        for c in &state.customers {
            if let Some(record) = records.get_mut(&c.id) {
                record.visits = record.visits.max(c.visits_so_far);
            }
        }
    }
    Ok(EpisodeResult {
        total_customers: records.len() as u32,
        customers: records.into_values().collect(),
        periods,
        final_period,
        divergent,
        total_cost,
    })
}

/// Run a full episode under a fixed policy.
pub fn run_episode(realization: &InstanceRealization, policy: &PolicyKind) -> Result<EpisodeResult> {
    run_episode_with(realization, |state| dispatch(policy, state))
}
