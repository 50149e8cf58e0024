//! The score balancing service urgency against routing efficiency that
//! ranks candidate (technician, customer) assignments. Higher is better.

use crate::domain::Period;
use crate::error::{Error, Result};

/// Insertion increases enter the score in units of the mean depot round
/// trip (2.5 hours for the default geometry: 76.5 km average depot distance
/// at 60 km/h). Travel times elsewhere are minutes, but the urgency term is
/// of order one, and the balance parameter only has an interior optimum
/// when the efficiency term lives on a comparable scale.
pub const SCORE_TAU_UNIT_MINUTES: f64 = 150.0;

/// Parameters of the score: the urgency/efficiency balance `alpha` (clamped
/// to [0,1]), the inconvenience penalty base, and the rework probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreContext {
    pub alpha: f64,
    pub eta: f64,
    pub rework_prob: f64,
}

impl ScoreContext {
    pub fn new(alpha: f64, eta: f64, rework_prob: f64) -> Result<Self> {
        if eta <= 1.0 {
            return Err(Error::Config(format!("penalty base must exceed 1, got {eta}")));
        }
        if !(0.0..1.0).contains(&rework_prob) {
            return Err(Error::Config(format!(
                "rework probability must lie in [0,1), got {rework_prob}"
            )));
        }
        Ok(ScoreContext { alpha: alpha.clamp(0.0, 1.0), eta, rework_prob })
    }

    /// Final score of an assignment: `(1-alpha)*urgency - alpha*efficiency`,
    /// with `delta_tau` given in minutes and rescaled into score units.
    pub fn score(&self, rho: f64, deadline: Period, t: Period, delta_tau: f64) -> f64 {
        (1.0 - self.alpha) * service_urgency(rho, deadline, t, self.eta)
            - self.alpha * routing_efficiency(delta_tau / SCORE_TAU_UNIT_MINUTES, rho)
    }
}

/// Expected inconvenience increase saved by serving this customer now.
/// Unlike the cost-side inconvenience function, this is defined for all
/// deadlines including future ones, which ranks not-yet-urgent customers by
/// how soon they expire.
pub fn service_urgency(rho: f64, deadline: Period, t: Period, eta: f64) -> f64 {
    let exponent = (t as i64) - (deadline as i64) + 1;
    assert!(
        exponent.unsigned_abs() <= 64,
        "urgency exponent {exponent} out of the supported range"
    );
    (1.0 - rho) * eta.powi(exponent as i32)
}

/// Expected immediate-plus-future travel time of an assignment: the
/// insertion increase inflated by the geometric series of expected revisits.
/// Panics on `rho == 1`, which cannot occur with a valid rework probability.
pub fn routing_efficiency(delta_tau: f64, rho: f64) -> f64 {
    assert!(rho < 1.0, "rework risk of 1 makes expected travel diverge");
    delta_tau / (1.0 - rho)
}
