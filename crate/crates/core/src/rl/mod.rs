//! State featurization, the feedforward heads with manual gradients, and
//! the PPO trainer for the state-dependent balance parameter.

pub mod features;
pub mod model;
pub mod net;
pub mod normalizer;
pub mod train;

pub use features::{extract_features, FeatureVector, FEATURE_DIM, FEATURE_NAMES};
pub use model::{
    gaussian_log_density, load_model, sample_alpha, save_model, PolicyModel,
    MODEL_FORMAT_VERSION,
};
pub use net::{Activation, Adam, Gradients, NeuralNet, ScalarAdam};
pub use normalizer::Normalizer;
pub use train::{
    advantage, ppo_objective, scale_cost, train, train_with_sampler, value_loss, CurvePoint,
    SigmaMode, TrainConfig, TrainOutcome, Trajectory, TrajectoryStep,
};
