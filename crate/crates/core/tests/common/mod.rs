//! Shared helpers for the integration and acceptance suites.
//!
//! Not every test binary uses every helper.
#![allow(dead_code)]

use rand::prelude::*;

use techroute::domain::{
    Customer, CustomerId, DecisionState, Point, Skill, Task, Technician, TechnicianId,
};
use techroute::instances::{generate_instance, InstanceConfig, InstanceRealization};

/// Seed base of the canonical evaluation set; instance i uses base + i.
pub const EVAL_SEED_BASE: u64 = 42;

pub fn eval_config() -> InstanceConfig {
    InstanceConfig { seed: EVAL_SEED_BASE, ..InstanceConfig::default() }
}

/// The labeled evaluation set for a config variant, common random numbers
/// across variants by sharing the per-instance seeds.
pub fn labeled_instances(
    count: u32,
    mutate: impl Fn(&mut InstanceConfig),
) -> Vec<(String, InstanceRealization)> {
    (0..count)
        .map(|i| {
            let mut config = eval_config();
            config.seed = EVAL_SEED_BASE + i as u64;
            mutate(&mut config);
            let realization = generate_instance(&config).expect("valid config");
            (format!("instance_{i:04}"), realization)
        })
        .collect()
}

/// A small randomized decision state for property checks.
pub fn random_state(rng: &mut StdRng, max_customers: usize) -> DecisionState {
    let n = rng.gen_range(0..=max_customers);
    let customers = (0..n)
        .map(|i| Customer {
            id: CustomerId(i as u32 + 1),
            location: Point::new(rng.gen::<f64>() * 200.0, rng.gen::<f64>() * 200.0),
            task: if rng.gen_bool(0.5) { Task::Easy } else { Task::Advanced },
            arrival_period: 1,
            deadline: rng.gen_range(2..9),
            visits_so_far: 0,
        })
        .collect();
    let m = rng.gen_range(1..=4);
    let technicians = (0..m)
        .map(|i| Technician {
            id: TechnicianId(i),
            skill: if rng.gen_bool(0.5) { Skill::Regular } else { Skill::Expert },
        })
        .collect();
    DecisionState::new(
        rng.gen_range(1..12),
        technicians,
        customers,
        0.5,
        16,
        1.1,
        rng.gen_range(120.0..420.0),
        Point::new(100.0, 100.0),
        60.0,
        30.0,
    )
    .expect("valid random state")
}
