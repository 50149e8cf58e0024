//! Fixed-size featurization of a decision state: general counts, spatial
//! spread, and deadline pressure.

use serde::{Deserialize, Serialize};

use crate::domain::{DecisionState, Point, Skill, Task};

pub const FEATURE_DIM: usize = 14;

pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "period",
    "count_easy",
    "count_advanced",
    "available_regular",
    "available_expert",
    "depot_distance_easy",
    "depot_distance_advanced",
    "pairwise_distance_easy",
    "pairwise_distance_advanced",
    "non_urgent_easy",
    "non_urgent_advanced",
    "overdue_easy",
    "overdue_advanced",
    "mean_periods_overdue",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

fn mean_depot_distance(points: &[Point], depot: Point) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    points.iter().map(|p| p.distance(&depot)).sum::<f64>() / points.len() as f64
}

fn mean_pairwise_distance(points: &[Point]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut pairs = 0u64;
    for (i, a) in points.iter().enumerate() {
        for b in points.iter().skip(i + 1) {
            sum += a.distance(b);
            pairs += 1;
        }
    }
    sum / pairs as f64
}

/// The 14 state features. Distance features are zero for empty groups and
/// the overdue mean is zero when nobody is overdue.
pub fn extract_features(state: &DecisionState) -> FeatureVector {
    let depot = state.travel().depot();
    let t = state.period;
    let mut easy_points = Vec::new();
    let mut advanced_points = Vec::new();
    let mut non_urgent = [0.0f64; 2];
    let mut overdue = [0.0f64; 2];
    let mut overdue_periods = 0.0;
    let mut overdue_count = 0u32;
    for c in &state.customers {
        let group = match c.task {
            Task::Easy => {
                easy_points.push(c.location);
                0
            }
            Task::Advanced => {
                advanced_points.push(c.location);
                1
            }
        };
        if c.deadline > t {
            non_urgent[group] += 1.0;
        } else {
            overdue[group] += 1.0;
            overdue_periods += (t - c.deadline) as f64;
            overdue_count += 1;
        }
    }
    let regular = state
        .available_technicians
        .iter()
        .filter(|w| w.skill == Skill::Regular)
        .count() as f64;
    let expert = state.available_technicians.len() as f64 - regular;
    let mean_overdue =
        if overdue_count == 0 { 0.0 } else { overdue_periods / overdue_count as f64 };
    FeatureVector([
        t as f64,
        easy_points.len() as f64,
        advanced_points.len() as f64,
        regular,
        expert,
        mean_depot_distance(&easy_points, depot),
        mean_depot_distance(&advanced_points, depot),
        mean_pairwise_distance(&easy_points),
        mean_pairwise_distance(&advanced_points),
        non_urgent[0],
        non_urgent[1],
        overdue[0],
        overdue[1],
        mean_overdue,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Customer, CustomerId, Technician, TechnicianId};

    fn state(customers: Vec<Customer>, technicians: Vec<Technician>, t: u32) -> DecisionState {
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

    fn customer(id: u32, task: Task, deadline: u32, x: f64, y: f64) -> Customer {
        Customer {
            id: CustomerId(id),
            location: Point::new(x, y),
            task,
            arrival_period: 1,
            deadline,
            visits_so_far: 0,
        }
    }

    #[test]
    fn empty_customer_set_zeroes_customer_features() {
        let technicians = vec![
            Technician { id: TechnicianId(0), skill: Skill::Regular },
            Technician { id: TechnicianId(3), skill: Skill::Expert },
            Technician { id: TechnicianId(4), skill: Skill::Expert },
        ];
        let f = extract_features(&state(vec![], technicians, 5));
        assert_eq!(f.0[0], 5.0);
        assert_eq!(f.0[3], 1.0);
        assert_eq!(f.0[4], 2.0);
        for i in [1, 2, 5, 6, 7, 8, 9, 10, 11, 12, 13] {
            assert_eq!(f.0[i], 0.0, "feature {i}");
        }
    }

    #[test]
    fn single_customer_at_depot() {
        let c = customer(1, Task::Easy, 7, 100.0, 100.0);
        let f = extract_features(&state(vec![c], vec![], 5));
        assert_eq!(f.0[1], 1.0);
        assert_eq!(f.0[5], 0.0); // at the depot
        assert_eq!(f.0[7], 0.0); // no pair
        assert_eq!(f.0[9], 1.0); // non-urgent easy
        assert_eq!(f.0[11], 0.0);
        assert_eq!(f.0[13], 0.0);
    }

    #[test]
    fn pairwise_distance_of_two_customers() {
        let a = customer(1, Task::Easy, 3, 50.0, 100.0);
        let b = customer(2, Task::Easy, 5, 150.0, 100.0);
        let f = extract_features(&state(vec![a, b], vec![], 5));
        assert_eq!(f.0[7], 100.0);
        // One overdue by two periods, one due now: mean 1.0.
        assert_eq!(f.0[11], 2.0);
        assert_eq!(f.0[13], 1.0);
    }
}
