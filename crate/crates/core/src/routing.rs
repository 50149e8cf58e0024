//! Travel-time geometry, route feasibility, and the cheapest-insertion
//! heuristic shared by every dispatch policy.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::domain::{CustomerId, Decision, DecisionState, Point, TechnicianId};
use crate::error::{Error, Result};

/// Tolerance in minutes when comparing route durations against the work
/// limit, shared by policies and the validator so that a committed route is
/// never re-flagged over float noise.
pub const FEASIBILITY_EPS: f64 = 1e-9;

/// A node of the travel graph: the depot or one of the state's customers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Depot,
    Customer(CustomerId),
}

/// Euclidean travel-time model over the current customer set. Travel times
/// include the on-site service time at the head node; arriving at the depot
/// carries no service time.
#[derive(Debug, Clone)]
pub struct TravelModel {
    depot: Point,
    speed_kmh: f64,
    service_minutes: f64,
    locations: BTreeMap<CustomerId, Point>,
}

impl TravelModel {
    pub fn new(
        depot: Point,
        speed_kmh: f64,
        service_minutes: f64,
        locations: BTreeMap<CustomerId, Point>,
    ) -> Result<Self> {
        if speed_kmh <= 0.0 {
            return Err(Error::Config(format!("speed must be positive, got {speed_kmh}")));
        }
        if service_minutes < 0.0 {
            return Err(Error::Config(format!(
                "service time must be nonnegative, got {service_minutes}"
            )));
        }
        Ok(TravelModel { depot, speed_kmh, service_minutes, locations })
    }

    pub fn depot(&self) -> Point {
        self.depot
    }

    pub fn service_minutes(&self) -> f64 {
        self.service_minutes
    }

    pub fn speed_kmh(&self) -> f64 {
        self.speed_kmh
    }

    fn point(&self, node: Node) -> Result<Point> {
        match node {
            Node::Depot => Ok(self.depot),
            Node::Customer(id) => {
                self.locations.get(&id).copied().ok_or(Error::UnknownNode(id.0))
            }
        }
    }

    /// Travel time in minutes from `from` to `to`, including the service
    /// time when `to` is a customer.
    pub fn travel_time(&self, from: Node, to: Node) -> Result<f64> {
        if from == to {
            return Err(Error::Structure("travel time queried for a self-loop".into()));
        }
        let a = self.point(from)?;
        let b = self.point(to)?;
        let minutes = a.distance(&b) * (60.0 / self.speed_kmh);
        let service = match to {
            Node::Depot => 0.0,
            Node::Customer(_) => self.service_minutes,
        };
        Ok(minutes + service)
    }

    /// Duration of depot -> route[0] -> ... -> route[n-1] -> depot. An empty
    /// route has duration zero.
    pub fn route_duration(&self, route: &[CustomerId]) -> Result<f64> {
        if route.is_empty() {
            return Ok(0.0);
        }
        let mut seen = BTreeSet::new();
        for c in route {
            if !seen.insert(*c) {
                return Err(Error::Structure(format!("customer {c} appears twice in a route")));
            }
        }
        let mut total = self.travel_time(Node::Depot, Node::Customer(route[0]))?;
        for pair in route.windows(2) {
            total += self.travel_time(Node::Customer(pair[0]), Node::Customer(pair[1]))?;
        }
        total += self.travel_time(Node::Customer(route[route.len() - 1]), Node::Depot)?;
        Ok(total)
    }

    /// Duration increase of inserting `customer` at `position` (0..=len).
    pub fn insertion_delta(
        &self,
        route: &[CustomerId],
        position: usize,
        customer: CustomerId,
    ) -> Result<f64> {
        if position > route.len() {
            return Err(Error::Structure(format!(
                "insertion position {position} out of bounds for route of length {}",
                route.len()
            )));
        }
        let prev = if position == 0 { Node::Depot } else { Node::Customer(route[position - 1]) };
        let next = if position == route.len() {
            Node::Depot
        } else {
            Node::Customer(route[position])
        };
        let added = self.travel_time(prev, Node::Customer(customer))?
            + self.travel_time(Node::Customer(customer), next)?;
        let removed = if prev == Node::Depot && next == Node::Depot {
            0.0
        } else {
            self.travel_time(prev, next)?
        };
        Ok(added - removed)
    }

    /// Position minimizing the duration increase of inserting `customer`,
    /// together with that increase. Ties go to the earliest position.
    pub fn cheapest_insertion_position(
        &self,
        route: &[CustomerId],
        customer: CustomerId,
    ) -> Result<(usize, f64)> {
        if route.contains(&customer) {
            return Err(Error::Structure(format!("customer {customer} is already routed")));
        }
        let mut best = (0usize, self.insertion_delta(route, 0, customer)?);
        for position in 1..=route.len() {
            let delta = self.insertion_delta(route, position, customer)?;
            if delta < best.1 {
                best = (position, delta);
            }
        }
        Ok(best)
    }
}

/// Cheapest insertion of customer `i` into technician `w`'s route of
/// `decision`, returning the updated decision and the duration increase.
/// The work limit is deliberately not checked here; callers decide
/// feasibility.
pub fn cheapest_insertion(
    decision: &Decision,
    w: TechnicianId,
    i: CustomerId,
    model: &TravelModel,
) -> Result<(Decision, f64)> {
    if decision.routed_customers().any(|(_, c)| c == i) {
        return Err(Error::Structure(format!("customer {i} is already routed")));
    }
    let route = decision.routes.get(&w).map(Vec::as_slice).unwrap_or(&[]);
    let (position, delta) = model.cheapest_insertion_position(route, i)?;
    let mut updated = decision.clone();
    updated.routes.entry(w).or_default().insert(position, i);
    Ok((updated, delta))
}

/// Decision-space constraints checked at runtime. Depot start/end, flow
/// conservation, and subtour elimination hold by construction of the
/// sequence encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintTag {
    /// A customer appears in more than one route or more than once.
    DuplicateCustomer,
    /// A route exceeds the technician's working limit.
    WorkLimit,
    /// A route is assigned to a technician that is not available.
    UnavailableTechnician,
    /// A route visits a customer that is not part of the state.
    UnknownCustomer,
}

impl std::fmt::Display for ConstraintTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = match self {
            ConstraintTag::DuplicateCustomer => "duplicate-customer",
            ConstraintTag::WorkLimit => "work-limit",
            ConstraintTag::UnavailableTechnician => "unavailable-technician",
            ConstraintTag::UnknownCustomer => "unknown-customer",
        };
        f.write_str(tag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteEvaluation {
    pub duration_minutes: f64,
    pub feasible: bool,
    pub violated: Option<ConstraintTag>,
}

impl RouteEvaluation {
    fn ok(duration_minutes: f64) -> Self {
        RouteEvaluation { duration_minutes, feasible: true, violated: None }
    }

    fn violation(duration_minutes: f64, tag: ConstraintTag) -> Self {
        RouteEvaluation { duration_minutes, feasible: false, violated: Some(tag) }
    }
}

/// Check a decision against the state: every customer routed at most once,
/// every route within the work limit, only available technicians used, only
/// known customers visited. Returns one evaluation per route and never
/// fails on infeasible input.
pub fn validate_decision(
    state: &DecisionState,
    decision: &Decision,
) -> BTreeMap<TechnicianId, RouteEvaluation> {
    let mut seen: BTreeSet<CustomerId> = BTreeSet::new();
    let mut result = BTreeMap::new();
    for (w, route) in &decision.routes {
        let eval = evaluate_route(state, *w, route, &mut seen);
        result.insert(*w, eval);
    }
    result
}

fn evaluate_route(
    state: &DecisionState,
    w: TechnicianId,
    route: &[CustomerId],
    seen: &mut BTreeSet<CustomerId>,
) -> RouteEvaluation {
    if state.technician(w).is_none() {
        return RouteEvaluation::violation(0.0, ConstraintTag::UnavailableTechnician);
    }
    for c in route {
        if state.customer(*c).is_none() {
            return RouteEvaluation::violation(0.0, ConstraintTag::UnknownCustomer);
        }
        if !seen.insert(*c) {
            return RouteEvaluation::violation(0.0, ConstraintTag::DuplicateCustomer);
        }
    }
    match state.travel().route_duration(route) {
        Err(_) => RouteEvaluation::violation(0.0, ConstraintTag::DuplicateCustomer),
        Ok(duration) => {
            if duration > state.work_limit_minutes + FEASIBILITY_EPS {
                RouteEvaluation::violation(duration, ConstraintTag::WorkLimit)
            } else {
                RouteEvaluation::ok(duration)
            }
        }
    }
}

/// Like [`validate_decision`] but reduced to a single error carrying the
/// first violated constraint.
pub fn ensure_feasible(state: &DecisionState, decision: &Decision) -> Result<()> {
    for (w, eval) in validate_decision(state, decision) {
        if let Some(tag) = eval.violated {
            return Err(Error::Infeasible { technician: w.0, constraint: tag });
        }
    }
    Ok(())
}
