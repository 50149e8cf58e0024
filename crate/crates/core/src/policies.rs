//! The iterative score-based assignment engine and the benchmark dispatch
//! policies. All policies build tours customer by customer through the same
//! cheapest-insertion heuristic; they differ only in how candidates are
//! ranked and which skill/task pairings they permit.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::domain::{
    assignment_risk, inconvenience_increase, Decision, DecisionState, Point, Skill, Task,
};
use crate::error::{Error, Result};
use crate::instances::InstanceRealization;
use crate::rl::{load_model, PolicyModel};
use crate::routing::FEASIBILITY_EPS;
use crate::scoring::ScoreContext;
use crate::simulation;

/// Which (technician skill, customer task) pairings a policy permits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EligibilityMask {
    /// No risky pairs: regular technicians never take advanced tasks.
    SafeOnly,
    /// Split workforce: regulars only easy tasks, experts only advanced.
    Exclusive,
    /// Every pairing allowed.
    AllPairs,
}

impl EligibilityMask {
    pub fn allows(&self, skill: Skill, task: Task) -> bool {
        match self {
            EligibilityMask::SafeOnly => !(skill == Skill::Regular && task == Task::Advanced),
            EligibilityMask::Exclusive => matches!(
                (skill, task),
                (Skill::Regular, Task::Easy) | (Skill::Expert, Task::Advanced)
            ),
            EligibilityMask::AllPairs => true,
        }
    }
}

/// The seven dispatch rules: three myopic deadline-first variants, three
/// efficiency-only variants, the static-balance score policy, and the
/// dynamic-balance policy driven by a trained model.
#[derive(Debug, Clone)]
pub enum PolicyKind {
    Mysf,
    Myex,
    Myef,
    Sf,
    Ex,
    Ef,
    Sb(f64),
    Db(Box<PolicyModel>),
}

impl PolicyKind {
    /// Parse a CLI policy spec: `mysf|myex|myef|sf|ex|ef|sb:<alpha>|db:<model-path>`.
    pub fn parse(spec: &str) -> Result<Self> {
        match spec {
            "mysf" => Ok(PolicyKind::Mysf),
            "myex" => Ok(PolicyKind::Myex),
            "myef" => Ok(PolicyKind::Myef),
            "sf" => Ok(PolicyKind::Sf),
            "ex" => Ok(PolicyKind::Ex),
            "ef" => Ok(PolicyKind::Ef),
            other => {
                if let Some(alpha) = other.strip_prefix("sb:") {
                    let alpha: f64 = alpha.parse().map_err(|_| {
                        Error::Config(format!("invalid alpha in policy spec `{other}`"))
                    })?;
                    if !(0.0..=1.0).contains(&alpha) {
                        return Err(Error::Config(format!("alpha {alpha} not in [0,1]")));
                    }
                    Ok(PolicyKind::Sb(alpha))
                } else if let Some(path) = other.strip_prefix("db:") {
                    let model = load_model(Path::new(path))?;
                    Ok(PolicyKind::Db(Box::new(model)))
                } else {
                    Err(Error::Config(format!(
                        "unknown policy `{other}` (expected mysf|myex|myef|sf|ex|ef|sb:<alpha>|db:<model-path>)"
                    )))
                }
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            PolicyKind::Mysf => "mysf".into(),
            PolicyKind::Myex => "myex".into(),
            PolicyKind::Myef => "myef".into(),
            PolicyKind::Sf => "sf".into(),
            PolicyKind::Ex => "ex".into(),
            PolicyKind::Ef => "ef".into(),
            PolicyKind::Sb(alpha) => format!("sb:{alpha}"),
            PolicyKind::Db(_) => "db".into(),
        }
    }
}

/// Dense per-state geometry so the inner insertion loops avoid id lookups:
/// customers are addressed by their position in the state.
struct DenseGeometry {
    depot: Point,
    points: Vec<Point>,
    minutes_per_km: f64,
    service: f64,
}

impl DenseGeometry {
    fn from_state(state: &DecisionState) -> Self {
        DenseGeometry {
            depot: state.travel().depot(),
            points: state.customers.iter().map(|c| c.location).collect(),
            minutes_per_km: 60.0 / state.travel().speed_kmh(),
            service: state.travel().service_minutes(),
        }
    }

    fn point(&self, node: Option<usize>) -> &Point {
        match node {
            None => &self.depot,
            Some(i) => &self.points[i],
        }
    }

    /// Leg time including service when the head is a customer.
    fn leg(&self, from: Option<usize>, to: Option<usize>) -> f64 {
        let minutes = self.point(from).distance(self.point(to)) * self.minutes_per_km;
        match to {
            Some(_) => minutes + self.service,
            None => minutes,
        }
    }

    fn insertion_delta(&self, route: &[usize], position: usize, customer: usize) -> f64 {
        let prev = if position == 0 { None } else { Some(route[position - 1]) };
        let next = if position == route.len() { None } else { Some(route[position]) };
        let added = self.leg(prev, Some(customer)) + self.leg(Some(customer), next);
        let removed = if prev.is_none() && next.is_none() { 0.0 } else { self.leg(prev, next) };
        added - removed
    }

    /// Best insertion position (earliest on ties) and its duration increase.
    fn cheapest_position(&self, route: &[usize], customer: usize) -> (usize, f64) {
        let mut best = (0usize, self.insertion_delta(route, 0, customer));
        for position in 1..=route.len() {
            let delta = self.insertion_delta(route, position, customer);
            if delta < best.1 {
                best = (position, delta);
            }
        }
        best
    }
}

/// Working scratch shared by the policy families.
struct Builder<'a> {
    state: &'a DecisionState,
    geometry: DenseGeometry,
    /// Routes over dense customer indices, one per available technician.
    routes: Vec<Vec<usize>>,
    durations: Vec<f64>,
    /// Risk per (customer index, technician index).
    risk: Vec<Vec<f64>>,
    allowed: Vec<Vec<bool>>,
}

impl<'a> Builder<'a> {
    fn new(state: &'a DecisionState, mask: EligibilityMask) -> Self {
        let geometry = DenseGeometry::from_state(state);
        let techs = &state.available_technicians;
        let risk = state
            .customers
            .iter()
            .map(|c| {
                techs
                    .iter()
                    .map(|w| assignment_risk(w.skill, c.task, state.rework_prob))
                    .collect()
            })
            .collect();
        let allowed = state
            .customers
            .iter()
            .map(|c| techs.iter().map(|w| mask.allows(w.skill, c.task)).collect())
            .collect();
        Builder {
            state,
            geometry,
            routes: vec![Vec::new(); techs.len()],
            durations: vec![0.0; techs.len()],
            risk,
            allowed,
        }
    }

    fn fits(&self, tech: usize, delta: f64) -> bool {
        self.durations[tech] + delta <= self.state.work_limit_minutes + FEASIBILITY_EPS
    }

    fn commit(&mut self, customer: usize, tech: usize, position: usize, delta: f64) {
        self.routes[tech].insert(position, customer);
        self.durations[tech] += delta;
    }

    fn into_decision(self) -> Decision {
        let techs = &self.state.available_technicians;
        let customers = &self.state.customers;
        let mut routes = BTreeMap::new();
        for (w, route) in techs.iter().zip(self.routes) {
            routes.insert(w.id, route.into_iter().map(|i| customers[i].id).collect());
        }
        Decision { routes }
    }
}

/// Lexicographic candidate rank; lower wins.
type Rank = (f64, f64);

#[derive(Clone, Copy)]
struct Candidate {
    customer: usize,
    tech: usize,
    position: usize,
    delta: f64,
    rank: Rank,
}

/// The score-based policy: repeatedly evaluate every remaining
/// (customer, technician) pair at its cheapest insertion, commit the
/// feasible candidate with the highest score, and stop once the pool is
/// empty or nothing feasible remains. Ties break to the lowest customer id,
/// then the lowest technician id.
pub fn decide_score_based(state: &DecisionState, alpha: f64, mask: EligibilityMask) -> Decision {
    let ctx = ScoreContext::new(alpha, state.penalty_base, state.rework_prob)
        .expect("state parameters are validated at construction");
    let t = state.period;
    rank_and_commit(state, mask, |builder, customer, tech, delta| {
        let deadline = builder.state.customers[customer].deadline;
        // Higher scores are better; negate for the shared min-rank loop.
        (-ctx.score(builder.risk[customer][tech], deadline, t, delta), 0.0)
    })
}

/// Efficiency-only global greedy: commit the candidate with the smallest
/// raw travel-time increase, blind to both deadlines and rework risk.
pub fn decide_efficiency_only(state: &DecisionState, mask: EligibilityMask) -> Decision {
    rank_and_commit(state, mask, |_, _, _, delta| (delta, 0.0))
}

/// Myopic deadline-first: candidates are ranked by the immediate
/// inconvenience their service avoids (most-overdue customers first; zero
/// before the deadline), with the travel-time increase deciding among equal
/// urgency. Once no urgent customers remain the loop keeps filling capacity
/// by cheapest insertion alone.
pub fn decide_myopic_deadline_first(state: &DecisionState, mask: EligibilityMask) -> Decision {
    let t = state.period;
    let eta = state.penalty_base;
    rank_and_commit(state, mask, |builder, customer, _, delta| {
        let deadline = builder.state.customers[customer].deadline;
        (-inconvenience_increase(deadline, t, eta), delta)
    })
}

/// Shared greedy loop: each round picks the feasible candidate minimizing
/// `rank`. Iteration runs customers-then-technicians in id order with strict
/// improvement, which fixes the tie order.
fn rank_and_commit(
    state: &DecisionState,
    mask: EligibilityMask,
    rank: impl Fn(&Builder, usize, usize, f64) -> Rank,
) -> Decision {
    let mut builder = Builder::new(state, mask);
    let n = state.customers.len();
    let m = state.available_technicians.len();
    if m == 0 || n == 0 {
        return builder.into_decision();
    }
    let mut pool: Vec<usize> = (0..n).collect();
    // Cached cheapest insertion per (customer, technician); only the
    // committed technician's column changes between rounds.
    let mut cache: Vec<Vec<(usize, f64)>> = (0..n)
        .map(|c| {
            (0..m).map(|w| builder.geometry.cheapest_position(&builder.routes[w], c)).collect()
        })
        .collect();
    loop {
        let mut best: Option<Candidate> = None;
        for &c in &pool {
            for w in 0..m {
                if !builder.allowed[c][w] {
                    continue;
                }
                let (position, delta) = cache[c][w];
                if !builder.fits(w, delta) {
                    continue;
                }
                let r = rank(&builder, c, w, delta);
                if best.map_or(true, |b| r < b.rank) {
                    best = Some(Candidate { customer: c, tech: w, position, delta, rank: r });
                }
            }
        }
        match best {
            Some(chosen) => {
                builder.commit(chosen.customer, chosen.tech, chosen.position, chosen.delta);
                pool.retain(|&c| c != chosen.customer);
                for &c in &pool {
                    cache[c][chosen.tech] =
                        builder.geometry.cheapest_position(&builder.routes[chosen.tech], c);
                }
            }
            None => break,
        }
    }
    builder.into_decision()
}

/// Route a state through the selected policy.
pub fn dispatch(policy: &PolicyKind, state: &DecisionState) -> Result<Decision> {
    Ok(match policy {
        PolicyKind::Mysf => decide_myopic_deadline_first(state, EligibilityMask::SafeOnly),
        PolicyKind::Myex => decide_myopic_deadline_first(state, EligibilityMask::Exclusive),
        PolicyKind::Myef => decide_myopic_deadline_first(state, EligibilityMask::AllPairs),
        PolicyKind::Sf => decide_efficiency_only(state, EligibilityMask::SafeOnly),
        PolicyKind::Ex => decide_efficiency_only(state, EligibilityMask::Exclusive),
        PolicyKind::Ef => decide_efficiency_only(state, EligibilityMask::AllPairs),
        PolicyKind::Sb(alpha) => decide_score_based(state, *alpha, EligibilityMask::AllPairs),
        PolicyKind::Db(model) => {
            // The balance parameter is computed once per state, not per
            // insertion round.
            let alpha = model.predict_alpha(state)?;
            decide_score_based(state, alpha, EligibilityMask::AllPairs)
        }
    })
}

#[derive(Debug, Clone)]
pub struct GridSearchResult {
    pub best_alpha: f64,
    /// (alpha, mean inconvenience per customer) per grid point.
    pub table: Vec<(f64, f64)>,
}

/// The grid evaluated for the static-balance policy: 0.10 to 0.60 in steps
/// of 0.05.
pub fn default_alpha_grid() -> Vec<f64> {
    (2..=12).map(|i| i as f64 * 0.05).collect()
}

/// Evaluate the static-balance policy on every grid point over the given
/// instances; returns the alpha minimizing mean inconvenience per customer
/// together with the full table.
pub fn grid_search_alpha(
    instances: &[InstanceRealization],
    grid: &[f64],
) -> Result<GridSearchResult> {
    if instances.is_empty() {
        return Err(Error::Config("grid search needs at least one instance".into()));
    }
    if grid.is_empty() {
        return Err(Error::Config("grid search needs a nonempty alpha grid".into()));
    }
    let mut table = Vec::with_capacity(grid.len());
    for &alpha in grid {
        let per_instance: Result<Vec<f64>> = instances
            .par_iter()
            .map(|realization| {
                let episode = simulation::run_episode(realization, &PolicyKind::Sb(alpha))?;
                Ok(episode.total_cost / episode.total_customers.max(1) as f64)
            })
            .collect();
        let per_instance = per_instance?;
        let mean = per_instance.iter().sum::<f64>() / per_instance.len() as f64;
        table.push((alpha, mean));
    }
    let best_alpha = table
        .iter()
        .fold((f64::NAN, f64::INFINITY), |acc, &(a, v)| if v < acc.1 { (a, v) } else { acc })
        .0;
    Ok(GridSearchResult { best_alpha, table })
}
