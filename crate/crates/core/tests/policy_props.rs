//! Randomized cross-module properties: every policy output validates,
//! masks are honored, the score loop degenerates correctly, and realized
//! risky-visit frequencies match the rework probability.

mod common;

use rand::prelude::*;

use common::{labeled_instances, random_state};
use techroute::domain::{Skill, Task};
use techroute::policies::{
    decide_efficiency_only, decide_myopic_deadline_first, decide_score_based, EligibilityMask,
    PolicyKind,
};
use techroute::routing::validate_decision;
use techroute::simulation::run_episode;

/// Every decision from every policy family passes the validator with zero
/// violations on 10,000 randomized states, and the masked families never
/// produce a risky pair.
#[test]
fn all_policies_validate_on_randomized_states() {
    let mut rng = StdRng::seed_from_u64(4242);
    for round in 0..10_000 {
        let state = random_state(&mut rng, 8);
        let decisions = [
            ("mysf", decide_myopic_deadline_first(&state, EligibilityMask::SafeOnly)),
            ("myex", decide_myopic_deadline_first(&state, EligibilityMask::Exclusive)),
            ("myef", decide_myopic_deadline_first(&state, EligibilityMask::AllPairs)),
            ("sf", decide_efficiency_only(&state, EligibilityMask::SafeOnly)),
            ("ex", decide_efficiency_only(&state, EligibilityMask::Exclusive)),
            ("ef", decide_efficiency_only(&state, EligibilityMask::AllPairs)),
            ("sb", decide_score_based(&state, rng.gen(), EligibilityMask::AllPairs)),
        ];
        for (label, decision) in decisions {
            for (w, eval) in validate_decision(&state, &decision) {
                assert!(
                    eval.feasible,
                    "round {round}: {label} violated {:?} for {w}",
                    eval.violated
                );
            }
            let masked = matches!(label, "mysf" | "myex" | "sf" | "ex");
            if masked {
                for (w, c) in decision.routed_customers() {
                    let skill = state.technician(w).unwrap().skill;
                    let task = state.customer(c).unwrap().task;
                    assert!(
                        !(skill == Skill::Regular && task == Task::Advanced),
                        "round {round}: {label} produced a risky pair"
                    );
                }
            }
        }
    }
}

/// Observed failure frequency across at least 1e5 resolved risky visits
/// stays within one point of the rework probability.
#[test]
fn risky_visit_failure_frequency() {
    let mut failures = 0u64;
    let mut risky_visits = 0u64;
    let mut batch = 0u32;
    while risky_visits < 100_000 {
        let instances = labeled_instances(40, |config| {
            config.seed = config.seed.wrapping_add(1_000_000 + batch as u64 * 40);
        });
        for (_, realization) in &instances {
            let roster = realization.config.roster();
            let episode = run_episode(realization, &PolicyKind::Myef).unwrap();
            for customer in &episode.customers {
                if customer.task != Task::Advanced {
                    continue;
                }
                let fails = (customer.visits - 1) as u64;
                failures += fails;
                risky_visits += fails;
                if let Some(by) = customer.completed_by {
                    let skill = roster.iter().find(|w| w.id == by).unwrap().skill;
                    if skill == Skill::Regular {
                        risky_visits += 1;
                    }
                }
            }
        }
        batch += 1;
        assert!(batch < 40, "needed too many episodes to observe 1e5 risky visits");
    }
    let frequency = failures as f64 / risky_visits as f64;
    assert!(
        (frequency - 0.5).abs() < 0.01,
        "failure frequency {frequency:.4} over {risky_visits} risky visits"
    );
}

/// The score loop commits nothing when no candidate fits and everything
/// when capacity allows, independent of alpha.
#[test]
fn score_loop_capacity_extremes() {
    let mut rng = StdRng::seed_from_u64(77);
    for _ in 0..200 {
        let mut state = random_state(&mut rng, 6);
        state.work_limit_minutes = 1.0; // nothing fits
        let decision = decide_score_based(&state, rng.gen(), EligibilityMask::AllPairs);
        assert!(decision.is_empty());
        state.work_limit_minutes = 1e9; // everything fits
        let decision = decide_score_based(&state, rng.gen(), EligibilityMask::AllPairs);
        let routed = decision.routed_customers().count();
        if !state.available_technicians.is_empty() {
            assert_eq!(routed, state.customers.len());
        }
    }
}
