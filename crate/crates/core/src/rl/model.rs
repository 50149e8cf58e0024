//! The trained parametrization: policy and value heads, observation
//! normalizer, exploration scale, and cost scale, with versioned
//! persistence.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::DecisionState;
use crate::error::{Error, Result};
use crate::rl::features::{extract_features, FEATURE_DIM};
use crate::rl::net::{Activation, NeuralNet};
use crate::rl::normalizer::Normalizer;

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Hidden sizes of both heads.
pub const HIDDEN_DIMS: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyModel {
    /// Head producing the squashed balance parameter in [0,1].
    pub policy_net: NeuralNet,
    /// Head predicting the scaled cost-to-go.
    pub value_net: NeuralNet,
    pub normalizer: Normalizer,
    /// Exploration scale at the end of training.
    pub sigma: f64,
    /// Present when the exploration scale was learned as a parameter.
    pub log_sigma: Option<f64>,
    /// Denominator that maps raw cost-to-go into [0,1].
    pub cost_scale: f64,
    pub normalize_observations: bool,
}

fn default_dims() -> Vec<usize> {
    let mut dims = vec![FEATURE_DIM];
    dims.extend_from_slice(&HIDDEN_DIMS);
    dims.push(1);
    dims
}

impl PolicyModel {
    pub fn untrained<R: Rng>(rng: &mut R) -> Self {
        let dims = default_dims();
        PolicyModel {
            policy_net: NeuralNet::xavier(&dims, Activation::Tanh, Activation::Logistic, rng),
            value_net: NeuralNet::xavier(&dims, Activation::Tanh, Activation::Identity, rng),
            normalizer: Normalizer::new(FEATURE_DIM),
            sigma: 0.2,
            log_sigma: None,
            cost_scale: 1.0,
            normalize_observations: true,
        }
    }

    /// All-zero weights; the policy outputs 0.5 everywhere.
    pub fn zeroed() -> Self {
        let dims = default_dims();
        PolicyModel {
            policy_net: NeuralNet::zeros(&dims, Activation::Tanh, Activation::Logistic),
            value_net: NeuralNet::zeros(&dims, Activation::Tanh, Activation::Identity),
            normalizer: Normalizer::new(FEATURE_DIM),
            sigma: 0.2,
            log_sigma: None,
            cost_scale: 1.0,
            normalize_observations: true,
        }
    }

    /// The observation the networks consume for a state.
    pub fn observation(&self, state: &DecisionState) -> Vec<f64> {
        let features = extract_features(state);
        if self.normalize_observations {
            self.normalizer.normalize(features.as_slice())
        } else {
            features.as_slice().to_vec()
        }
    }

    pub fn policy_mean(&self, observation: &[f64]) -> f64 {
        self.policy_net.forward_scalar(observation)
    }

    pub fn value_estimate(&self, observation: &[f64]) -> f64 {
        self.value_net.forward_scalar(observation)
    }

    /// Deterministic evaluation mapping: the mode of the action density,
    /// which is the squashed network mean.
    pub fn predict_alpha(&self, state: &DecisionState) -> Result<f64> {
        let alpha = self.policy_mean(&self.observation(state));
        if !alpha.is_finite() {
            return Err(Error::ModelCorruption(format!(
                "policy head produced non-finite balance parameter {alpha}"
            )));
        }
        Ok(alpha)
    }

    pub fn check_shape(&self) -> Result<()> {
        for (name, net) in [("policy", &self.policy_net), ("value", &self.value_net)] {
            net.check_shape().map_err(|detail| Error::Shape {
                expected: format!("consistent {name} network"),
                found: detail,
            })?;
            if net.input_dim() != FEATURE_DIM {
                return Err(Error::Shape {
                    expected: format!("{FEATURE_DIM} input features"),
                    found: format!("{} ({name} network)", net.input_dim()),
                });
            }
            if !net.is_finite() {
                return Err(Error::ModelCorruption(format!(
                    "{name} network contains non-finite parameters"
                )));
            }
        }
        if self.normalizer.mean.len() != FEATURE_DIM {
            return Err(Error::Shape {
                expected: format!("normalizer over {FEATURE_DIM} features"),
                found: format!("{}", self.normalizer.mean.len()),
            });
        }
        if !(self.sigma > 0.0) || self.cost_scale <= 0.0 {
            return Err(Error::ModelCorruption(
                "sigma and cost scale must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub fn gaussian_log_density(x: f64, mean: f64, sigma: f64) -> f64 {
    let z = (x - mean) / sigma;
    -0.5 * z * z - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// A raw draw from the action density plus its log-density and the clamped
/// value handed to the environment.
pub(crate) fn draw_alpha<R: Rng>(mean: f64, sigma: f64, rng: &mut R) -> (f64, f64, f64) {
    let normal = rand_distr::Normal::new(mean, sigma).expect("positive sigma");
    let raw = rand_distr::Distribution::sample(&normal, rng);
    let clamped = raw.clamp(0.0, 1.0);
    (raw, clamped, gaussian_log_density(raw, mean, sigma))
}

/// Exploration draw for a state: normal around the squashed mean with the
/// model's exploration scale, clamped into [0,1]. The log-density of the
/// unclamped draw drives the update ratio during training.
pub fn sample_alpha<R: Rng>(model: &PolicyModel, state: &DecisionState, rng: &mut R) -> f64 {
    let mean = model.policy_mean(&model.observation(state));
    draw_alpha(mean, model.sigma, rng).1
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u32,
    feature_dim: usize,
    model: PolicyModel,
}

pub fn save_model(model: &PolicyModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        feature_dim: FEATURE_DIM,
        model: model.clone(),
    };
    let text = serde_json::to_string_pretty(&file)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<PolicyModel> {
    let text = std::fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    let version =
        value.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            detail: "missing format_version".into(),
        })?;
    if version != MODEL_FORMAT_VERSION as u64 {
        return Err(Error::Version { expected: MODEL_FORMAT_VERSION, found: version as u32 });
    }
    let feature_dim =
        value.get("feature_dim").and_then(|v| v.as_u64()).unwrap_or(FEATURE_DIM as u64);
    if feature_dim != FEATURE_DIM as u64 {
        return Err(Error::Shape {
            expected: format!("{FEATURE_DIM} features"),
            found: format!("{feature_dim}"),
        });
    }
    let file: ModelFile = serde_json::from_value(value)
        .map_err(|e| Error::Parse { path: path.to_path_buf(), detail: e.to_string() })?;
    file.model.check_shape()?;
    Ok(file.model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Customer, CustomerId, Point, Task, Technician, TechnicianId};
    use crate::domain::Skill;
    use rand::prelude::*;

    fn some_state(seed: u64) -> DecisionState {
        let mut rng = StdRng::seed_from_u64(seed);
        let n = rng.gen_range(0..8);
        let customers = (0..n)
            .map(|i| Customer {
                id: CustomerId(i + 1),
                location: Point::new(rng.gen::<f64>() * 200.0, rng.gen::<f64>() * 200.0),
                task: if rng.gen_bool(0.5) { Task::Easy } else { Task::Advanced },
                arrival_period: 1,
                deadline: rng.gen_range(1..9),
                visits_so_far: 0,
            })
            .collect();
        DecisionState::new(
            rng.gen_range(1..10),
            vec![
                Technician { id: TechnicianId(0), skill: Skill::Regular },
                Technician { id: TechnicianId(3), skill: Skill::Expert },
            ],
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
    fn zero_weights_predict_half_everywhere() {
        let model = PolicyModel::zeroed();
        for seed in 0..20 {
            assert_eq!(model.predict_alpha(&some_state(seed)).unwrap(), 0.5);
        }
    }

    #[test]
    fn prediction_is_deterministic() {
        let mut rng = StdRng::seed_from_u64(5);
        let model = PolicyModel::untrained(&mut rng);
        let state = some_state(3);
        assert_eq!(
            model.predict_alpha(&state).unwrap(),
            model.predict_alpha(&state).unwrap()
        );
    }

    #[test]
    fn sampling_statistics() {
        let mut rng = StdRng::seed_from_u64(8);
        // sigma -> 0 collapses onto the mean.
        let (raw, clamped, _) = draw_alpha(0.37, 1e-12, &mut rng);
        assert!((raw - 0.37).abs() < 1e-9);
        assert!((clamped - 0.37).abs() < 1e-9);
        // Monte Carlo mean of the raw draws.
        let n = 100_000;
        let mut sum = 0.0;
        for _ in 0..n {
            sum += draw_alpha(0.5, 0.2, &mut rng).0;
        }
        assert!((sum / n as f64 - 0.5).abs() < 0.01);
        // Means above 1 always clamp to at most 1.
        for _ in 0..1000 {
            let (_, clamped, _) = draw_alpha(1.2, 0.2, &mut rng);
            assert!(clamped <= 1.0);
        }
    }

    #[test]
    fn save_load_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut rng = StdRng::seed_from_u64(21);
        let mut model = PolicyModel::untrained(&mut rng);
        for seed in 0..50 {
            model.normalizer.update(extract_features(&some_state(seed)).as_slice());
        }
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        for seed in 0..100 {
            let state = some_state(seed);
            assert_eq!(
                model.predict_alpha(&state).unwrap().to_bits(),
                loaded.predict_alpha(&state).unwrap().to_bits()
            );
        }
    }

    #[test]
    fn corrupted_weight_count_is_a_shape_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let mut model = PolicyModel::zeroed();
        model.policy_net.layers[1].weights.pop();
        save_model(&model, &path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Shape { .. })));
    }

    #[test]
    fn wrong_feature_count_names_dimensions() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = PolicyModel::zeroed();
        save_model(&model, &path).unwrap();
        let mut value: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
        value.as_object_mut().unwrap().insert("feature_dim".into(), serde_json::json!(11));
        std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
        match load_model(&path) {
            Err(Error::Shape { expected, found }) => {
                assert!(expected.contains("14"));
                assert!(found.contains("11"));
            }
            other => panic!("expected shape error, got {other:?}"),
        }
    }
}
