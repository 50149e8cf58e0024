//! Proximal policy optimization over the balance parameter: collect
//! episodes with sampled alphas, regress the value head on scaled
//! cost-to-go, and ascend the clipped surrogate.

use rand::prelude::*;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instances::{generate_instance, stream_rng, InstanceConfig, InstanceRealization};
use crate::policies::{decide_score_based, EligibilityMask};
use crate::rl::features::extract_features;
use crate::rl::model::{draw_alpha, gaussian_log_density, PolicyModel};
use crate::rl::net::{Adam, Gradients, NeuralNet, ScalarAdam};
use crate::simulation::run_episode_with;

/// How the exploration scale evolves: decayed on a fixed schedule, or
/// learned as an optimizer-updated parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaMode {
    Decayed,
    Learned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub iterations: u32,
    pub episodes_per_iteration: u32,
    pub epochs: u32,
    pub minibatch: usize,
    pub lr_policy: f64,
    pub lr_value: f64,
    pub clip_epsilon: f64,
    pub sigma_initial: f64,
    pub sigma_decay: f64,
    pub sigma_min: f64,
    pub sigma_mode: SigmaMode,
    /// Scale cost-to-go targets into [0,1].
    pub cost_scaling: bool,
    /// Standardize and clip observations with running statistics.
    pub observation_scaling: bool,
    /// Smooth value targets with the clipped loss instead of plain MSE.
    pub value_clipping: bool,
    pub standardize_advantages: bool,
    /// Episodes under the static policy used to estimate the cost scale and
    /// seed the observation statistics.
    pub warmup_episodes: u32,
    pub seed: u64,
    pub instance: InstanceConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            iterations: 2000,
            episodes_per_iteration: 10,
            epochs: 4,
            minibatch: 256,
            lr_policy: 3e-4,
            lr_value: 1e-3,
            clip_epsilon: 0.2,
            sigma_initial: 0.2,
            sigma_decay: 0.9997,
            sigma_min: 0.02,
            sigma_mode: SigmaMode::Decayed,
            cost_scaling: true,
            observation_scaling: true,
            value_clipping: false,
            standardize_advantages: true,
            warmup_episodes: 50,
            seed: 1,
            instance: InstanceConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 || self.episodes_per_iteration == 0 || self.epochs == 0 {
            return Err(Error::Config("iterations, episodes, and epochs must be positive".into()));
        }
        if self.minibatch == 0 {
            return Err(Error::Config("minibatch size must be positive".into()));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return Err(Error::Config(format!(
                "clip epsilon must lie in (0,1), got {}",
                self.clip_epsilon
            )));
        }
        if self.lr_policy <= 0.0 || self.lr_value <= 0.0 {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.sigma_initial <= 0.0 || self.sigma_min <= 0.0 {
            return Err(Error::Config("exploration scales must be positive".into()));
        }
        if !(self.sigma_decay > 0.0 && self.sigma_decay <= 1.0) {
            return Err(Error::Config("sigma decay must lie in (0,1]".into()));
        }
        self.instance.validate()
    }

    /// The five analyzed augmentation configurations. Row 4 (cost scaling,
    /// observation scaling, no value clipping, decayed exploration) is the
    /// default.
    pub fn with_augmentation_row(mut self, row: u8) -> Result<Self> {
        let (cost, obs, clip, sigma) = match row {
            1 => (true, true, true, SigmaMode::Decayed),
            2 => (false, true, true, SigmaMode::Decayed),
            3 => (true, false, true, SigmaMode::Decayed),
            4 => (true, true, false, SigmaMode::Decayed),
            5 => (true, true, true, SigmaMode::Learned),
            other => {
                return Err(Error::Config(format!("unknown augmentation row {other} (1-5)")))
            }
        };
        self.cost_scaling = cost;
        self.observation_scaling = obs;
        self.value_clipping = clip;
        self.sigma_mode = sigma;
        Ok(self)
    }
}

/// One collected decision point.
#[derive(Debug, Clone)]
pub struct TrajectoryStep {
    /// Observation as the networks saw it at collection time.
    pub observation: Vec<f64>,
    /// Unclamped action draw; the clamp is an environment-side projection.
    pub alpha_raw: f64,
    pub logp_old: f64,
    pub v_old: f64,
    /// Scaled cost-to-go target.
    pub cost_to_go: f64,
}

/// Steps of one episode in period order.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub steps: Vec<TrajectoryStep>,
}

/// Advantage of an action: positive when the realized cost-to-go undercuts
/// the value prediction.
pub fn advantage(v_hat: f64, cost_to_go: f64) -> f64 {
    v_hat - cost_to_go
}

/// Clipped surrogate objective for one sample.
pub fn ppo_objective(ratio: f64, advantage: f64, epsilon: f64) -> f64 {
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
    (ratio * advantage).min(clipped * advantage)
}

/// Value regression loss, optionally smoothed by clipping the prediction
/// around its collection-time value.
pub fn value_loss(v_now: f64, v_old: f64, target: f64, epsilon: f64, clipped: bool) -> f64 {
    let plain = (v_now - target) * (v_now - target);
    if clipped {
        let clamped = v_now.clamp(v_old - epsilon, v_old + epsilon);
        plain.min((clamped - target) * (clamped - target))
    } else {
        plain
    }
}

/// Saturating map of raw cost-to-go into [0,1].
pub fn scale_cost(raw_cost_to_go: f64, cost_scale: f64) -> f64 {
    assert!(cost_scale > 0.0, "cost scale must be positive");
    (raw_cost_to_go / cost_scale).min(1.0)
}

pub(crate) fn standardize(values: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let std = var.sqrt() + 1e-8;
    for v in values.iter_mut() {
        *v = (*v - mean) / std;
    }
}

/// Mean clipped surrogate over a minibatch as a function of the policy
/// parameters; the finite-difference oracle perturbs `net` through this.
pub fn surrogate_objective(
    net: &NeuralNet,
    steps: &[TrajectoryStep],
    advantages: &[f64],
    indices: &[usize],
    sigma: f64,
    epsilon: f64,
) -> f64 {
    let mut total = 0.0;
    for &i in indices {
        let s = &steps[i];
        let mu = net.forward_scalar(&s.observation);
        let logp = gaussian_log_density(s.alpha_raw, mu, sigma);
        let ratio = (logp - s.logp_old).exp();
        total += ppo_objective(ratio, advantages[i], epsilon);
    }
    total / indices.len() as f64
}

/// Descent-direction gradient of the negated surrogate plus, in learned
/// mode, the gradient for the log exploration scale. `None` signals
/// non-finite values (the caller restores the snapshot).
pub(crate) fn surrogate_gradient(
    net: &NeuralNet,
    steps: &[TrajectoryStep],
    advantages: &[f64],
    indices: &[usize],
    sigma: f64,
    epsilon: f64,
    learned_sigma: bool,
) -> Option<(Gradients, f64)> {
    let mut grads = Gradients::zeros_like(net);
    let mut sigma_grad = 0.0;
    let inv = 1.0 / indices.len() as f64;
    for &i in indices {
        let s = &steps[i];
        let a = advantages[i];
        let trace = net.forward_trace(&s.observation);
        let mu = trace.output()[0];
        let logp = gaussian_log_density(s.alpha_raw, mu, sigma);
        let ratio = (logp - s.logp_old).exp();
        if !ratio.is_finite() {
            return None;
        }
        let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon);
        // The unclipped branch carries gradient whenever it attains the min;
        // otherwise the clip is active and the sample contributes nothing.
        if ratio * a <= clipped * a {
            let coeff = ratio * a;
            let dmu = coeff * (s.alpha_raw - mu) / (sigma * sigma);
            net.backward(&trace, &[-dmu * inv], &mut grads);
            if learned_sigma {
                let z = (s.alpha_raw - mu) / sigma;
                sigma_grad += -coeff * (z * z - 1.0) * inv;
            }
        }
    }
    if grads.is_finite() && sigma_grad.is_finite() {
        Some((grads, sigma_grad))
    } else {
        None
    }
}

/// Descent gradient of the mean value loss over a minibatch.
pub(crate) fn value_gradient(
    net: &NeuralNet,
    steps: &[TrajectoryStep],
    indices: &[usize],
    epsilon: f64,
    clipped: bool,
) -> Option<Gradients> {
    let mut grads = Gradients::zeros_like(net);
    let inv = 1.0 / indices.len() as f64;
    for &i in indices {
        let s = &steps[i];
        let trace = net.forward_trace(&s.observation);
        let v_now = trace.output()[0];
        if !v_now.is_finite() {
            return None;
        }
        let plain = v_now - s.cost_to_go;
        let coeff = if clipped {
            let clamped = v_now.clamp(s.v_old - epsilon, s.v_old + epsilon);
            if plain * plain <= (clamped - s.cost_to_go) * (clamped - s.cost_to_go) {
                2.0 * plain
            } else {
                0.0
            }
        } else {
            2.0 * plain
        };
        net.backward(&trace, &[coeff * inv], &mut grads);
    }
    grads.is_finite().then_some(grads)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub iteration: u32,
    /// Mean inconvenience per customer over the iteration's rollouts.
    pub eval_inconvenience: f64,
    pub sigma: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: PolicyModel,
    pub curve: Vec<CurvePoint>,
    /// One line per aborted iteration (non-finite loss or gradient).
    pub diagnostics: Vec<String>,
}

struct Rollout {
    trajectory: Trajectory,
    raw_features: Vec<Vec<f64>>,
    inconvenience_per_customer: f64,
}

fn rollout(
    model: &PolicyModel,
    sigma: f64,
    cost_scaling: bool,
    realization: &InstanceRealization,
    rng: &mut impl Rng,
) -> Result<Rollout> {
    let mut collected: Vec<(Vec<f64>, Vec<f64>, f64, f64, f64)> = Vec::new();
    let result = run_episode_with(realization, |state| {
        let raw = extract_features(state).as_slice().to_vec();
        let obs = if model.normalize_observations {
            model.normalizer.normalize(&raw)
        } else {
            raw.clone()
        };
        let mu = model.policy_mean(&obs);
        let (alpha_raw, alpha_env, logp) = draw_alpha(mu, sigma, rng);
        let v_old = model.value_estimate(&obs);
        collected.push((obs, raw, alpha_raw, logp, v_old));
        Ok(decide_score_based(state, alpha_env, EligibilityMask::AllPairs))
    })?;
    debug_assert_eq!(collected.len(), result.periods.len());
    // Undiscounted cost-to-go per period, then scaled.
    let mut suffix = vec![0.0; result.periods.len()];
    let mut acc = 0.0;
    for (i, period) in result.periods.iter().enumerate().rev() {
        acc += period.realized_cost;
        suffix[i] = acc;
    }
    let mut steps = Vec::with_capacity(collected.len());
    let mut raw_features = Vec::with_capacity(collected.len());
    for ((obs, raw, alpha_raw, logp_old, v_old), raw_ctg) in collected.into_iter().zip(suffix) {
        steps.push(TrajectoryStep {
            observation: obs,
            alpha_raw,
            logp_old,
            v_old,
            cost_to_go: if cost_scaling { scale_cost(raw_ctg, model.cost_scale) } else { raw_ctg },
        });
        raw_features.push(raw);
    }
    Ok(Rollout {
        trajectory: Trajectory { steps },
        raw_features,
        inconvenience_per_customer: result.total_cost / result.total_customers.max(1) as f64,
    })
}

/// Train with fresh instances drawn from the config's instance parameters;
/// episode index `i` uses an independently derived seed.
pub fn train(config: &TrainConfig) -> Result<TrainOutcome> {
    let base = config.seed;
    let instance = config.instance.clone();
    train_with_sampler(config, move |index| {
        let mut rng = stream_rng(base, "train-instance", index);
        let seed = rng.gen::<u64>();
        generate_instance(&InstanceConfig { seed, ..instance.clone() })
    })
}

/// Training loop against a caller-supplied instance sampler.
pub fn train_with_sampler<S>(config: &TrainConfig, sampler: S) -> Result<TrainOutcome>
where
    S: Fn(u64) -> Result<InstanceRealization> + Sync,
{
    config.validate()?;
    let mut init_rng = stream_rng(config.seed, "init", 0);
    let mut model = PolicyModel::untrained(&mut init_rng);
    model.normalize_observations = config.observation_scaling;
    model.sigma = config.sigma_initial;
    if config.sigma_mode == SigmaMode::Learned {
        model.log_sigma = Some(config.sigma_initial.ln());
    }

    warmup(config, &sampler, &mut model)?;

    let mut policy_opt = Adam::new(config.lr_policy, model.policy_net.param_count());
    let mut value_opt = Adam::new(config.lr_value, model.value_net.param_count());
    let mut sigma_opt = ScalarAdam::new(config.lr_policy);
    let mut shuffle_rng = stream_rng(config.seed, "shuffle", 0);
    let mut curve = Vec::with_capacity(config.iterations as usize);
    let mut diagnostics = Vec::new();

    let episodes_per_iter = config.episodes_per_iteration as u64;
    for k in 0..config.iterations {
        let sigma_k = match config.sigma_mode {
            SigmaMode::Decayed => {
                (config.sigma_initial * config.sigma_decay.powi(k as i32)).max(config.sigma_min)
            }
            SigmaMode::Learned => model.log_sigma.expect("set above").exp(),
        };
        model.sigma = sigma_k;

        let snapshot =
            (model.policy_net.clone(), model.value_net.clone(), model.log_sigma);

        let rollouts: Result<Vec<Rollout>> = (0..episodes_per_iter)
            .into_par_iter()
            .map(|e| {
                let index = config.warmup_episodes as u64 + k as u64 * episodes_per_iter + e;
                let realization = sampler(index)?;
                let mut rng = stream_rng(config.seed, "explore", index);
                rollout(&model, sigma_k, config.cost_scaling, &realization, &mut rng)
            })
            .collect();
        let rollouts = rollouts?;
        let mean_inconvenience = rollouts
            .iter()
            .map(|r| r.inconvenience_per_customer)
            .sum::<f64>()
            / rollouts.len() as f64;

        // Observation statistics move only between rollout batches; the
        // frozen observations inside the steps keep the collection-time
        // scaling so the first update ratio is exactly one.
        let mut steps = Vec::new();
        for r in rollouts {
            if config.observation_scaling {
                for raw in &r.raw_features {
                    model.normalizer.update(raw);
                }
            }
            steps.extend(r.trajectory.steps);
        }
        let mut advantages: Vec<f64> =
            steps.iter().map(|s| advantage(s.v_old, s.cost_to_go)).collect();
        if config.standardize_advantages {
            standardize(&mut advantages);
        }

        let mut aborted = false;
        'epochs: for _ in 0..config.epochs {
            let mut order: Vec<usize> = (0..steps.len()).collect();
            order.shuffle(&mut shuffle_rng);
            for chunk in order.chunks(config.minibatch) {
                let sigma_now = match config.sigma_mode {
                    SigmaMode::Decayed => sigma_k,
                    SigmaMode::Learned => model.log_sigma.expect("set above").exp(),
                };
                let learned = config.sigma_mode == SigmaMode::Learned;
                let policy_update = surrogate_gradient(
                    &model.policy_net,
                    &steps,
                    &advantages,
                    chunk,
                    sigma_now,
                    config.clip_epsilon,
                    learned,
                );
                let value_update = value_gradient(
                    &model.value_net,
                    &steps,
                    chunk,
                    config.clip_epsilon,
                    config.value_clipping,
                );
                let (Some((pgrads, sigma_grad)), Some(vgrads)) = (policy_update, value_update)
                else {
                    aborted = true;
                    break 'epochs;
                };
                policy_opt.step(&mut model.policy_net, &pgrads);
                value_opt.step(&mut model.value_net, &vgrads);
                if learned {
                    let log_sigma = model.log_sigma.as_mut().expect("set above");
                    sigma_opt.step(log_sigma, sigma_grad);
                    *log_sigma = log_sigma.clamp((1e-3f64).ln(), 0.0);
                }
                if !model.policy_net.is_finite() || !model.value_net.is_finite() {
                    aborted = true;
                    break 'epochs;
                }
            }
        }
        if aborted {
            // Non-finite loss or gradient: restore the snapshot and move on.
            model.policy_net = snapshot.0;
            model.value_net = snapshot.1;
            model.log_sigma = snapshot.2;
            diagnostics
                .push(format!("iteration {k}: non-finite update, parameters restored"));
        }
        curve.push(CurvePoint { iteration: k, eval_inconvenience: mean_inconvenience, sigma: sigma_k });
    }
    Ok(TrainOutcome { model, curve, diagnostics })
}

/// Cost scale from warmup episodes under the static policy: the 99th
/// percentile of per-state cost-to-go. Warmup features also seed the
/// observation statistics so the first iteration sees sane scaling.
fn warmup<S>(config: &TrainConfig, sampler: &S, model: &mut PolicyModel) -> Result<()>
where
    S: Fn(u64) -> Result<InstanceRealization> + Sync,
{
    let collected: Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>> = (0..config.warmup_episodes as u64)
        .into_par_iter()
        .map(|index| {
            let realization = sampler(index)?;
            let mut features = Vec::new();
            let result = run_episode_with(&realization, |state| {
                features.push(extract_features(state).as_slice().to_vec());
                Ok(decide_score_based(state, 0.33, EligibilityMask::AllPairs))
            })?;
            let mut suffix = vec![0.0; result.periods.len()];
            let mut acc = 0.0;
            for (i, period) in result.periods.iter().enumerate().rev() {
                acc += period.realized_cost;
                suffix[i] = acc;
            }
            Ok((features, suffix))
        })
        .collect();
    let collected = collected?;
    let mut cost_to_gos = Vec::new();
    for (features, suffix) in &collected {
        if config.observation_scaling {
            for f in features {
                model.normalizer.update(f);
            }
        }
        cost_to_gos.extend_from_slice(suffix);
    }
    if config.cost_scaling {
        cost_to_gos.sort_by(|a, b| a.partial_cmp(b).expect("finite costs"));
        let p99 = if cost_to_gos.is_empty() {
            1.0
        } else {
            let idx = ((cost_to_gos.len() as f64 * 0.99).ceil() as usize)
                .clamp(1, cost_to_gos.len());
            cost_to_gos[idx - 1]
        };
        model.cost_scale = p99.max(1e-6);
    } else {
        model.cost_scale = 1.0;
    }
    Ok(())
}

/// Write the learning curve as a comma-delimited table.
pub fn save_curve(path: &std::path::Path, curve: &[CurvePoint]) -> Result<()> {
    use std::fmt::Write as _;
    let mut text = String::from("iteration,eval_inconvenience,sigma\n");
    for point in curve {
        writeln!(text, "{},{},{}", point.iteration, point.eval_inconvenience, point.sigma)
            .expect("string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-9 * (1.0 + b.abs())
    }

    #[test]
    fn advantage_examples() {
        assert_eq!(advantage(2.0, 1.5), 0.5);
        assert_eq!(advantage(1.5, 1.5), 0.0);
    }

    #[test]
    fn standardized_advantages_are_centered() {
        let mut values: Vec<f64> = (0..257).map(|i| (i as f64) * 0.37 - 11.0).collect();
        standardize(&mut values);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        assert!(mean.abs() < 1e-12);
    }

    #[test]
    fn ppo_objective_examples() {
        assert!(close(ppo_objective(1.5, 1.0, 0.2), 1.2));
        assert!(close(ppo_objective(0.5, -1.0, 0.2), -0.8));
        for ratio in [0.85, 1.0, 1.15] {
            for adv in [-2.0, 0.5] {
                assert_eq!(ppo_objective(ratio, adv, 0.2), ratio * adv);
            }
        }
        // Ratio-one identity for any advantage.
        for adv in [-3.0, 0.0, 7.5] {
            assert_eq!(ppo_objective(1.0, adv, 0.2), adv);
        }
    }

    #[test]
    fn value_loss_examples() {
        assert_eq!(value_loss(0.7, 0.4, 0.7, 0.2, false), 0.0);
        let v_old = 0.4;
        assert!(close(
            value_loss(v_old, v_old, 0.9, 0.2, true),
            (v_old - 0.9) * (v_old - 0.9)
        ));
        // v_now two epsilons above v_old, target at v_old: clipping keeps
        // the smaller epsilon-squared branch.
        let eps = 0.2;
        assert!(close(value_loss(v_old + 2.0 * eps, v_old, v_old, eps, true), eps * eps));
    }

    #[test]
    fn scale_cost_saturates() {
        assert_eq!(scale_cost(0.0, 50.0), 0.0);
        assert_eq!(scale_cost(50.0, 50.0), 1.0);
        assert_eq!(scale_cost(100.0, 50.0), 1.0);
        assert!(close(scale_cost(25.0, 50.0), 0.5));
    }

    fn synthetic_batch(
        net: &NeuralNet,
        sigma: f64,
        rng: &mut StdRng,
        n: usize,
    ) -> (Vec<TrajectoryStep>, Vec<f64>) {
        let dim = net.input_dim();
        let mut steps = Vec::new();
        let mut advs = Vec::new();
        for _ in 0..n {
            let obs: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let mu = net.forward_scalar(&obs);
            let (alpha_raw, _, logp) = draw_alpha(mu, sigma, rng);
            steps.push(TrajectoryStep {
                observation: obs,
                alpha_raw,
                logp_old: logp,
                v_old: rng.gen::<f64>(),
                cost_to_go: rng.gen::<f64>(),
            });
            advs.push(rng.gen::<f64>() * 2.0 - 1.0);
        }
        (steps, advs)
    }

    /// Analytic surrogate gradient matches central finite differences on a
    /// frozen minibatch.
    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        use crate::rl::net::Activation;
        let mut rng = StdRng::seed_from_u64(17);
        let net = NeuralNet::xavier(&[5, 12, 1], Activation::Tanh, Activation::Logistic, &mut rng);
        let sigma = 0.2;
        let (steps, advs) = synthetic_batch(&net, sigma, &mut rng, 32);
        let indices: Vec<usize> = (0..steps.len()).collect();
        // Perturb mildly so both clip branches appear.
        let mut perturbed = net.clone();
        for i in 0..perturbed.param_count() {
            perturbed.set_param(i, perturbed.param(i) + 0.01 * ((i % 7) as f64 - 3.0));
        }
        let (grads, _) =
            surrogate_gradient(&perturbed, &steps, &advs, &indices, sigma, 0.1, false).unwrap();
        for _ in 0..10 {
            let idx = rng.gen_range(0..perturbed.param_count());
            let h = 1e-6;
            let mut plus = perturbed.clone();
            plus.set_param(idx, plus.param(idx) + h);
            let mut minus = perturbed.clone();
            minus.set_param(idx, minus.param(idx) - h);
            let numeric = (surrogate_objective(&plus, &steps, &advs, &indices, sigma, 0.1)
                - surrogate_objective(&minus, &steps, &advs, &indices, sigma, 0.1))
                / (2.0 * h);
            // surrogate_gradient descends the negated objective.
            let analytic = -grads.flat[idx];
            let err = (numeric - analytic).abs() / (numeric.abs() + analytic.abs()).max(1e-8);
            assert!(err <= 1e-4, "coord {idx}: numeric {numeric:.4e} analytic {analytic:.4e}");
        }
    }

    /// With an unreachable clip bound and ratios at one, the surrogate
    /// gradient is exactly the vanilla policy gradient of the same batch.
    #[test]
    fn wide_clip_equals_vanilla_policy_gradient() {
        use crate::rl::net::Activation;
        let mut rng = StdRng::seed_from_u64(23);
        let net = NeuralNet::xavier(&[4, 10, 1], Activation::Tanh, Activation::Logistic, &mut rng);
        let sigma = 0.3;
        let (steps, advs) = synthetic_batch(&net, sigma, &mut rng, 24);
        let indices: Vec<usize> = (0..steps.len()).collect();
        let (ppo, _) =
            surrogate_gradient(&net, &steps, &advs, &indices, sigma, 0.999, false).unwrap();
        // Vanilla: mean of advantage-weighted score-function gradients.
        let mut vanilla = Gradients::zeros_like(&net);
        let inv = 1.0 / steps.len() as f64;
        for (s, a) in steps.iter().zip(&advs) {
            let trace = net.forward_trace(&s.observation);
            let mu = trace.output()[0];
            let dmu = a * (s.alpha_raw - mu) / (sigma * sigma);
            net.backward(&trace, &[-dmu * inv], &mut vanilla);
        }
        for (p, v) in ppo.flat.iter().zip(&vanilla.flat) {
            assert!((p - v).abs() <= 1e-12 * (1.0 + v.abs()), "{p} vs {v}");
        }
    }

    #[test]
    fn augmentation_rows_toggle_flags() {
        let base = TrainConfig::default();
        let r1 = base.clone().with_augmentation_row(1).unwrap();
        assert!(r1.cost_scaling && r1.observation_scaling && r1.value_clipping);
        assert_eq!(r1.sigma_mode, SigmaMode::Decayed);
        let r2 = base.clone().with_augmentation_row(2).unwrap();
        assert!(!r2.cost_scaling);
        let r3 = base.clone().with_augmentation_row(3).unwrap();
        assert!(!r3.observation_scaling);
        let r4 = base.clone().with_augmentation_row(4).unwrap();
        assert!(r4.cost_scaling && r4.observation_scaling && !r4.value_clipping);
        let r5 = base.clone().with_augmentation_row(5).unwrap();
        assert_eq!(r5.sigma_mode, SigmaMode::Learned);
        assert!(base.clone().with_augmentation_row(6).is_err());
        // The default configuration is row 4.
        assert_eq!(base, TrainConfig::default().with_augmentation_row(4).unwrap());
    }

    #[test]
    fn non_finite_inputs_abort_the_update() {
        use crate::rl::net::Activation;
        let mut rng = StdRng::seed_from_u64(41);
        let net = NeuralNet::xavier(&[3, 6, 1], Activation::Tanh, Activation::Logistic, &mut rng);
        let (mut steps, advs) = synthetic_batch(&net, 0.2, &mut rng, 8);
        let indices: Vec<usize> = (0..steps.len()).collect();
        steps[3].logp_old = f64::NEG_INFINITY; // ratio blows up
        assert!(surrogate_gradient(&net, &steps, &advs, &indices, 0.2, 0.2, false).is_none());
        steps[3].logp_old = 0.0;
        steps[5].cost_to_go = f64::NAN;
        assert!(value_gradient(&net, &steps, &indices, 0.2, false).is_none());
    }

    fn tiny_train_config(seed: u64) -> TrainConfig {
        TrainConfig {
            iterations: 3,
            episodes_per_iteration: 2,
            warmup_episodes: 2,
            seed,
            instance: InstanceConfig {
                weekly_demand_mean: 20.0,
                arrival_days: 5,
                ..InstanceConfig::default()
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn training_is_deterministic_per_seed() {
        let config = tiny_train_config(11);
        let a = crate::rl::train(&config).unwrap();
        let b = crate::rl::train(&config).unwrap();
        assert_eq!(
            serde_json::to_string(&a.curve).unwrap(),
            serde_json::to_string(&b.curve).unwrap()
        );
        assert_eq!(a.model, b.model);
        let c = crate::rl::train(&tiny_train_config(12)).unwrap();
        assert_ne!(a.model, c.model, "different seeds should train different parameters");
    }

    #[test]
    fn learned_sigma_mode_trains_and_persists() {
        let config = TrainConfig {
            sigma_mode: SigmaMode::Learned,
            ..tiny_train_config(5)
        };
        let outcome = crate::rl::train(&config).unwrap();
        assert!(outcome.model.log_sigma.is_some());
        assert!(outcome.model.sigma > 0.0);
        assert_eq!(outcome.curve.len(), 3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        crate::rl::save_model(&outcome.model, &path).unwrap();
        assert_eq!(crate::rl::load_model(&path).unwrap(), outcome.model);
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let mut config = TrainConfig::default();
        config.clip_epsilon = 1.5;
        assert!(config.validate().is_err());
        config.clip_epsilon = 0.2;
        config.minibatch = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn sigma_schedule_decays_to_floor() {
        let config = TrainConfig { sigma_initial: 0.2, sigma_decay: 0.5, sigma_min: 0.04, ..TrainConfig::default() };
        let sigma_at = |k: i32| (config.sigma_initial * config.sigma_decay.powi(k)).max(config.sigma_min);
        assert_eq!(sigma_at(0), 0.2);
        assert_eq!(sigma_at(1), 0.1);
        assert_eq!(sigma_at(2), 0.05);
        assert_eq!(sigma_at(3), 0.04);
        assert_eq!(sigma_at(9), 0.04);
    }
}
