//! Goal-conditioned DDPG learner: actor, critic, target networks with
//! polyak averaging, running input normalization, exploratory action
//! selection, and one gradient update step per call.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, GoalObservation};
use crate::error::{Error, Result};
use crate::nn::{adam_step, Activation, AdamState, Gradients, Mlp};
use crate::replay::Transition;

/// The six GA-evolved learning parameters, each constrained to its search
/// interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hyperparams {
    pub gamma: f64,
    pub polyak: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub random_eps: f64,
    pub noise_eps: f64,
}

pub const GAMMA_RANGE: (f64, f64) = (0.8, 0.999);
pub const POLYAK_RANGE: (f64, f64) = (0.9, 0.9999);
pub const LR_RANGE: (f64, f64) = (1e-5, 1e-2);
pub const EPS_RANGE: (f64, f64) = (0.0, 0.5);

impl Hyperparams {
    /// Hand-set defaults used as the un-tuned comparison arm.
    pub fn baseline() -> Self {
        Hyperparams {
            gamma: 0.98,
            polyak: 0.95,
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            random_eps: 0.3,
            noise_eps: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let checks = [
            ("gamma", self.gamma, GAMMA_RANGE),
            ("polyak", self.polyak, POLYAK_RANGE),
            ("actor_lr", self.actor_lr, LR_RANGE),
            ("critic_lr", self.critic_lr, LR_RANGE),
            ("random_eps", self.random_eps, EPS_RANGE),
            ("noise_eps", self.noise_eps, EPS_RANGE),
        ];
        for (name, value, (low, high)) in checks {
            if !(low..=high).contains(&value) {
                return Err(Error::InvalidArgument(format!(
                    "hyperparameter {name}={value} outside [{low}, {high}]"
                )));
            }
        }
        Ok(())
    }
}

/// Network shape and fixed agent constants, outside the GA search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub hidden_sizes: Vec<usize>,
    pub normalizer_clip: f64,
    /// Coefficient of the quadratic action-magnitude penalty in the actor loss.
    pub action_l2: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig { hidden_sizes: vec![64, 64], normalizer_clip: 5.0, action_l2: 1.0 }
    }
}

/// Running per-component mean/std with a small count prior so a fresh
/// normalizer is finite. std has a floor of sqrt(VAR_EPS).
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub count: f64,
    pub sum: Vec<f64>,
    pub sum_sq: Vec<f64>,
    pub clip_range: f64,
}

const COUNT_PRIOR: f64 = 1e-4;
const VAR_EPS: f64 = 1e-4;

impl Normalizer {
    pub fn new(dim: usize, clip_range: f64) -> Self {
        Normalizer { count: COUNT_PRIOR, sum: vec![0.0; dim], sum_sq: vec![0.0; dim], clip_range }
    }

    pub fn dim(&self) -> usize {
        self.sum.len()
    }

    pub fn update<'a, I>(&mut self, rows: I)
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        for row in rows {
            debug_assert_eq!(row.len(), self.sum.len());
            self.count += 1.0;
            for (i, &x) in row.iter().enumerate() {
                self.sum[i] += x;
                self.sum_sq[i] += x * x;
            }
        }
    }

    pub fn mean(&self, i: usize) -> f64 {
        self.sum[i] / self.count
    }

    pub fn std(&self, i: usize) -> f64 {
        let mean = self.mean(i);
        (self.sum_sq[i] / self.count - mean * mean).max(VAR_EPS).sqrt()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(i, &xi)| ((xi - self.mean(i)) / self.std(i)).clamp(-self.clip_range, self.clip_range))
            .collect()
    }
}

pub struct Agent {
    pub actor: Mlp,
    pub critic: Mlp,
    pub actor_target: Mlp,
    pub critic_target: Mlp,
    pub actor_opt: AdamState,
    pub critic_opt: AdamState,
    pub normalizer: Normalizer,
    pub hp: Hyperparams,
    obs_dim: usize,
    goal_dim: usize,
    action_dim: usize,
    action_l2: f64,
}

impl Agent {
    pub fn new(spec: &EnvSpec, hp: Hyperparams, cfg: &AgentConfig, seed: u64) -> Result<Agent> {
        hp.validate()?;
        let input_dim = spec.obs_dim + spec.goal_dim;
        let mut actor_sizes = vec![input_dim];
        actor_sizes.extend_from_slice(&cfg.hidden_sizes);
        actor_sizes.push(spec.action_dim);
        let mut critic_sizes = vec![input_dim + spec.action_dim];
        critic_sizes.extend_from_slice(&cfg.hidden_sizes);
        critic_sizes.push(1);
        let actor = Mlp::init(&actor_sizes, Activation::Relu, Activation::Tanh, seed)?;
        let critic = Mlp::init(&critic_sizes, Activation::Relu, Activation::Identity, seed.wrapping_add(1))?;
        // Targets start as exact copies of the mains.
        let actor_target = actor.clone();
        let critic_target = critic.clone();
        let actor_opt = AdamState::new(actor.param_count());
        let critic_opt = AdamState::new(critic.param_count());
        Ok(Agent {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            normalizer: Normalizer::new(input_dim, cfg.normalizer_clip),
            hp,
            obs_dim: spec.obs_dim,
            goal_dim: spec.goal_dim,
            action_dim: spec.action_dim,
            action_l2: cfg.action_l2,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    /// Rebuild an agent from checkpointed pieces. Optimizer moments are not
    /// checkpointed; fresh Adam states are installed.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        spec: &EnvSpec,
        hp: Hyperparams,
        actor: Mlp,
        critic: Mlp,
        actor_target: Mlp,
        critic_target: Mlp,
        normalizer: Normalizer,
        action_l2: f64,
    ) -> Result<Agent> {
        hp.validate()?;
        let input_dim = spec.obs_dim + spec.goal_dim;
        if actor.input_dim() != input_dim
            || actor.output_dim() != spec.action_dim
            || critic.input_dim() != input_dim + spec.action_dim
            || critic.output_dim() != 1
            || actor_target.layer_sizes() != actor.layer_sizes()
            || critic_target.layer_sizes() != critic.layer_sizes()
            || normalizer.dim() != input_dim
        {
            return Err(Error::InvalidArgument(
                "checkpointed network shapes do not match the environment".into(),
            ));
        }
        let actor_opt = AdamState::new(actor.param_count());
        let critic_opt = AdamState::new(critic.param_count());
        Ok(Agent {
            actor,
            critic,
            actor_target,
            critic_target,
            actor_opt,
            critic_opt,
            normalizer,
            hp,
            obs_dim: spec.obs_dim,
            goal_dim: spec.goal_dim,
            action_dim: spec.action_dim,
            action_l2,
        })
    }

    /// Normalized actor input for an (observation, desired goal) pair.
    fn actor_input(&self, obs: &[f64], goal: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(obs.len() + goal.len());
        x.extend_from_slice(obs);
        x.extend_from_slice(goal);
        self.normalizer.normalize(&x)
    }

    fn critic_input(normalized: &[f64], action: &[f64]) -> Vec<f64> {
        let mut u = Vec::with_capacity(normalized.len() + action.len());
        u.extend_from_slice(normalized);
        u.extend_from_slice(action);
        u
    }

    /// Greedy actor output, or exploratory action when `explore` is set:
    /// Gaussian noise with std = noise_eps (actions live in [-1,1]), then
    /// with probability random_eps the whole action is replaced by a
    /// uniform draw from the box. Always clamped to [-1,1].
    pub fn select_action<R: Rng>(
        &self,
        obs: &GoalObservation,
        explore: bool,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if obs.observation.len() != self.obs_dim || obs.desired_goal.len() != self.goal_dim {
            return Err(Error::InvalidArgument(format!(
                "observation dims ({}, {}) do not match agent dims ({}, {})",
                obs.observation.len(),
                obs.desired_goal.len(),
                self.obs_dim,
                self.goal_dim
            )));
        }
        let x = self.actor_input(&obs.observation, &obs.desired_goal);
        let mut action = self.actor.forward_value(&x)?;
        if explore {
            if self.hp.noise_eps > 0.0 {
                let noise = Normal::new(0.0, self.hp.noise_eps).expect("valid noise std");
                for a in &mut action {
                    *a += noise.sample(rng);
                }
            }
            if rng.gen::<f64>() < self.hp.random_eps {
                for a in &mut action {
                    *a = rng.gen_range(-1.0..1.0);
                }
            }
        }
        for a in &mut action {
            *a = a.clamp(-1.0, 1.0);
        }
        Ok(action)
    }

    fn validate_batch(&self, batch: &[Transition]) -> Result<()> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        for t in batch {
            if t.obs.len() != self.obs_dim
                || t.next_obs.len() != self.obs_dim
                || t.desired_goal.len() != self.goal_dim
                || t.action.len() != self.action_dim
            {
                return Err(Error::InvalidArgument("transition dimensions inconsistent".into()));
            }
        }
        Ok(())
    }

    fn return_clamp(&self) -> f64 {
        1.0 / (1.0 - self.hp.gamma)
    }

    /// Critic regression targets y = clamp(r + gamma * Q'(s', pi'(s')),
    /// [-1/(1-gamma), 0]), computed from the target networks.
    fn critic_targets(&self, batch: &[Transition]) -> Result<Vec<f64>> {
        let clamp = self.return_clamp();
        batch
            .iter()
            .map(|t| {
                let xn = self.actor_input(&t.next_obs, &t.desired_goal);
                let an = self.actor_target.forward_value(&xn)?;
                let qn = self.critic_target.forward_value(&Self::critic_input(&xn, &an))?[0];
                Ok((t.reward + self.hp.gamma * qn).clamp(-clamp, 0.0))
            })
            .collect()
    }

    /// Mean squared TD error of `critic` against fixed targets; the loss
    /// function finite-difference tests perturb.
    pub fn critic_loss_given(&self, critic: &Mlp, batch: &[Transition], targets: &[f64]) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .zip(targets)
            .map(|(t, &y)| {
                let x = self.actor_input(&t.obs, &t.desired_goal);
                let q = critic.forward_value(&Self::critic_input(&x, &t.action)).unwrap()[0];
                (q - y) * (q - y)
            })
            .sum::<f64>()
            / n
    }

    pub fn critic_loss_and_grads(&self, batch: &[Transition]) -> Result<(f64, Gradients, Vec<f64>)> {
        self.validate_batch(batch)?;
        let targets = self.critic_targets(batch)?;
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.critic);
        let mut loss = 0.0;
        for (t, &y) in batch.iter().zip(&targets) {
            let x = self.actor_input(&t.obs, &t.desired_goal);
            let (q, cache) = self.critic.forward(&Self::critic_input(&x, &t.action))?;
            let err = q[0] - y;
            loss += err * err / n;
            let (g, _) = self.critic.backward(&cache, &[2.0 * err / n])?;
            grads.add_assign(&g);
        }
        Ok((loss, grads, targets))
    }

    /// Actor loss = -mean Q(s, pi(s)) + action_l2 * mean ||pi(s)||^2,
    /// evaluated with the main critic held fixed.
    pub fn actor_loss_given(&self, actor: &Mlp, batch: &[Transition]) -> f64 {
        let n = batch.len() as f64;
        batch
            .iter()
            .map(|t| {
                let x = self.actor_input(&t.obs, &t.desired_goal);
                let a = actor.forward_value(&x).unwrap();
                let q = self.critic.forward_value(&Self::critic_input(&x, &a)).unwrap()[0];
                let norm2: f64 = a.iter().map(|ai| ai * ai).sum();
                (-q + self.action_l2 * norm2) / n
            })
            .sum()
    }

    pub fn actor_loss_and_grads(&self, batch: &[Transition]) -> Result<(f64, Gradients)> {
        self.validate_batch(batch)?;
        let n = batch.len() as f64;
        let mut grads = Gradients::zeros_like(&self.actor);
        let mut loss = 0.0;
        for t in batch {
            let x = self.actor_input(&t.obs, &t.desired_goal);
            let (a, actor_cache) = self.actor.forward(&x)?;
            let (q, critic_cache) = self.critic.forward(&Self::critic_input(&x, &a))?;
            let norm2: f64 = a.iter().map(|ai| ai * ai).sum();
            loss += (-q[0] + self.action_l2 * norm2) / n;
            // dQ/da comes from the critic's input gradient, action slice.
            let (_, d_input) = self.critic.backward(&critic_cache, &[1.0])?;
            let dq_da = &d_input[x.len()..];
            let d_action: Vec<f64> = a
                .iter()
                .zip(dq_da)
                .map(|(&ai, &dq)| (-dq + 2.0 * self.action_l2 * ai) / n)
                .collect();
            let (g, _) = self.actor.backward(&actor_cache, &d_action)?;
            grads.add_assign(&g);
        }
        Ok((loss, grads))
    }

    /// One DDPG update: regress the critic toward its clamped bootstrap
    /// targets and ascend the actor along the critic, one Adam step each.
    pub fn update_step(&mut self, batch: &[Transition]) -> Result<(f64, f64)> {
        let (critic_loss, critic_grads, _) = self.critic_loss_and_grads(batch)?;
        let (actor_loss, actor_grads) = self.actor_loss_and_grads(batch)?;
        if !critic_loss.is_finite() || !actor_loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss (critic={critic_loss}, actor={actor_loss})"
            )));
        }
        adam_step(&mut self.critic, &critic_grads, &mut self.critic_opt, self.hp.critic_lr)?;
        adam_step(&mut self.actor, &actor_grads, &mut self.actor_opt, self.hp.actor_lr)?;
        Ok((critic_loss, actor_loss))
    }

    /// target <- polyak * target + (1 - polyak) * main, both networks.
    pub fn polyak_update(&mut self) {
        self.actor_target.polyak_from(&self.actor, self.hp.polyak);
        self.critic_target.polyak_from(&self.critic, self.hp.polyak);
    }

    /// Record raw (observation, desired goal) rows into the normalizer.
    pub fn normalizer_update(&mut self, transitions: &[Transition]) {
        let rows: Vec<Vec<f64>> = transitions
            .iter()
            .map(|t| {
                let mut x = Vec::with_capacity(self.obs_dim + self.goal_dim);
                x.extend_from_slice(&t.obs);
                x.extend_from_slice(&t.desired_goal);
                x
            })
            .collect();
        self.normalizer.update(rows.iter().map(|r| r.as_slice()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{EnvName, GoalEnv, PointReach};
    use crate::nn::finite_diff_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny_spec() -> EnvSpec {
        EnvSpec {
            name: EnvName::PointReach,
            obs_dim: 3,
            goal_dim: 2,
            action_dim: 2,
            max_episode_steps: 10,
            success_threshold_distance: 0.05,
            action_scale: 0.05,
        }
    }

    fn tiny_agent(hp: Hyperparams) -> Agent {
        // <= 200 parameters so finite differences stay cheap.
        let cfg = AgentConfig { hidden_sizes: vec![8, 8], ..Default::default() };
        Agent::new(&tiny_spec(), hp, &cfg, 17).unwrap()
    }

    fn random_batch(n: usize, seed: u64) -> Vec<Transition> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let reward = if rng.gen::<bool>() { 0.0 } else { -1.0 };
                let mut v = |d: usize| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>();
                Transition {
                    obs: v(3),
                    action: v(2),
                    reward,
                    next_obs: v(3),
                    achieved_goal: v(2),
                    next_achieved_goal: v(2),
                    desired_goal: v(2),
                }
            })
            .collect()
    }

    #[test]
    fn hyperparams_bounds_are_enforced() {
        let mut hp = Hyperparams::baseline();
        assert!(hp.validate().is_ok());
        hp.gamma = 0.5;
        assert!(hp.validate().is_err());
        hp = Hyperparams::baseline();
        hp.actor_lr = 0.5;
        assert!(hp.validate().is_err());
    }

    #[test]
    fn greedy_action_is_deterministic() {
        let agent = tiny_agent(Hyperparams::baseline());
        let obs = GoalObservation {
            observation: vec![0.1, 0.2, 0.3],
            achieved_goal: vec![0.0, 0.0],
            desired_goal: vec![0.5, -0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = agent.select_action(&obs, false, &mut rng).unwrap();
        let b = agent.select_action(&obs, false, &mut rng).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn zero_noise_explore_equals_greedy() {
        let mut hp = Hyperparams::baseline();
        hp.noise_eps = 0.0;
        hp.random_eps = 0.0;
        let agent = tiny_agent(hp);
        let obs = GoalObservation {
            observation: vec![0.1, 0.2, 0.3],
            achieved_goal: vec![0.0, 0.0],
            desired_goal: vec![0.5, -0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let greedy = agent.select_action(&obs, false, &mut rng).unwrap();
        let explore = agent.select_action(&obs, true, &mut rng).unwrap();
        assert_eq!(greedy, explore);
    }

    #[test]
    fn forced_random_actions_are_uniform_on_the_box() {
        // random_eps = 1 is outside the search interval; construct directly.
        let mut agent = tiny_agent(Hyperparams::baseline());
        agent.hp.random_eps = 1.0;
        agent.hp.noise_eps = 0.0;
        let obs = GoalObservation {
            observation: vec![0.1, 0.2, 0.3],
            achieved_goal: vec![0.0, 0.0],
            desired_goal: vec![0.5, -0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut mean = [0.0f64; 2];
        for _ in 0..n {
            let a = agent.select_action(&obs, true, &mut rng).unwrap();
            assert!(a.iter().all(|x| (-1.0..=1.0).contains(x)));
            mean[0] += a[0];
            mean[1] += a[1];
        }
        assert!((mean[0] / n as f64).abs() < 0.01);
        assert!((mean[1] / n as f64).abs() < 0.01);
    }

    #[test]
    fn select_action_rejects_dim_mismatch() {
        let agent = tiny_agent(Hyperparams::baseline());
        let obs = GoalObservation {
            observation: vec![0.1],
            achieved_goal: vec![0.0, 0.0],
            desired_goal: vec![0.5, -0.5],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(agent.select_action(&obs, false, &mut rng).is_err());
    }

    #[test]
    fn gamma_zero_targets_equal_rewards() {
        let mut agent = tiny_agent(Hyperparams::baseline());
        agent.hp.gamma = 0.0; // test-only out-of-band value
        let batch = random_batch(16, 3);
        let targets = agent.critic_targets(&batch).unwrap();
        for (t, y) in batch.iter().zip(targets) {
            assert_eq!(y, t.reward);
        }
    }

    #[test]
    fn targets_respect_return_clamp() {
        let agent = tiny_agent(Hyperparams::baseline()); // gamma = 0.98 -> bound 50
        let batch = random_batch(64, 4);
        let targets = agent.critic_targets(&batch).unwrap();
        assert!(targets.iter().all(|&y| (-50.0..=0.0).contains(&y)));
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let agent = tiny_agent(Hyperparams::baseline());
        let batch = random_batch(4, 5);
        let (_, grads, targets) = agent.critic_loss_and_grads(&batch).unwrap();
        let numeric = finite_diff_grad(
            &agent.critic,
            |c: &Mlp| agent.critic_loss_given(c, &batch, &targets),
            1e-5,
        )
        .unwrap();
        let (a, n) = (grads.flatten(), numeric.flatten());
        let err = a
            .iter()
            .zip(&n)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let agent = tiny_agent(Hyperparams::baseline());
        let batch = random_batch(4, 6);
        let (_, grads) = agent.actor_loss_and_grads(&batch).unwrap();
        let numeric = finite_diff_grad(
            &agent.actor,
            |a: &Mlp| agent.actor_loss_given(a, &batch),
            1e-5,
        )
        .unwrap();
        let (a, n) = (grads.flatten(), numeric.flatten());
        let err = a
            .iter()
            .zip(&n)
            .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
            .fold(0.0, f64::max);
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn polyak_edge_cases_are_exact() {
        let mut agent = tiny_agent(Hyperparams::baseline());
        let batch = random_batch(8, 7);
        agent.update_step(&batch).unwrap(); // make mains differ from targets

        let mut a0 = agent.actor.clone();
        a0 = {
            let mut t = agent.actor_target.clone();
            t.polyak_from(&agent.actor, 0.0);
            assert_eq!(t, agent.actor);
            a0
        };
        let _ = a0;
        let before = agent.actor_target.clone();
        let mut t1 = agent.actor_target.clone();
        t1.polyak_from(&agent.actor, 1.0);
        assert_eq!(t1, before);
    }

    #[test]
    fn polyak_blend_is_exact() {
        let spec = tiny_spec();
        let cfg = AgentConfig { hidden_sizes: vec![4], ..Default::default() };
        let mut hp = Hyperparams::baseline();
        hp.polyak = 0.95;
        let mut agent = Agent::new(&spec, hp, &cfg, 0).unwrap();
        // target = 0, main = 1 per parameter -> target' = 0.05 exactly.
        let ones = vec![1.0; agent.actor.param_count()];
        let zeros = vec![0.0; agent.actor.param_count()];
        agent.actor.set_from_flat(&ones).unwrap();
        agent.actor_target.set_from_flat(&zeros).unwrap();
        let c_ones = vec![1.0; agent.critic.param_count()];
        let c_zeros = vec![0.0; agent.critic.param_count()];
        agent.critic.set_from_flat(&c_ones).unwrap();
        agent.critic_target.set_from_flat(&c_zeros).unwrap();
        agent.polyak_update();
        // Exactly the per-parameter blend formula, to the last bit.
        let expected: f64 = 0.95 * 0.0 + (1.0 - 0.95) * 1.0;
        assert!((expected - 0.05).abs() <= f64::EPSILON);
        assert!(agent.actor_target.flatten().iter().all(|&x| x == expected));
        assert!(agent.critic_target.flatten().iter().all(|&x| x == expected));
    }

    #[test]
    fn polyak_is_a_contraction_toward_mains() {
        let mut agent = tiny_agent(Hyperparams::baseline());
        let batch = random_batch(8, 8);
        for _ in 0..3 {
            agent.update_step(&batch).unwrap();
        }
        let diff_before: Vec<f64> = agent
            .actor_target
            .flatten()
            .iter()
            .zip(agent.actor.flatten())
            .map(|(t, m)| t - m)
            .collect();
        let mut t = agent.actor_target.clone();
        t.polyak_from(&agent.actor, agent.hp.polyak);
        let diff_after: Vec<f64> =
            t.flatten().iter().zip(agent.actor.flatten()).map(|(t, m)| t - m).collect();
        for (b, a) in diff_before.iter().zip(&diff_after) {
            assert!((a - agent.hp.polyak * b).abs() < 1e-15);
        }
    }

    #[test]
    fn normalizer_constant_stream_maps_to_zero() {
        let mut norm = Normalizer::new(2, 5.0);
        let row = [3.0, -1.5];
        for _ in 0..10_000 {
            norm.update(std::iter::once(&row[..]));
        }
        // The small count prior shifts the mean by ~c/n and the variance
        // floor makes std 0.01, so "zero" here means |z| < c / (0.01 n).
        let z = norm.normalize(&row);
        assert!(z.iter().all(|&x| x.abs() < 1e-4), "{z:?}");
    }

    #[test]
    fn fresh_normalizer_is_finite() {
        let norm = Normalizer::new(3, 5.0);
        let z = norm.normalize(&[1e6, -1e6, 0.0]);
        assert!(z.iter().all(|x| x.is_finite()));
        assert!(z.iter().all(|&x| x.abs() <= 5.0));
    }

    #[test]
    fn normalizer_estimates_gaussian_moments() {
        let mut norm = Normalizer::new(1, 100.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let dist = Normal::new(5.0, 2.0).unwrap();
        for _ in 0..100_000 {
            let x = [dist.sample(&mut rng)];
            norm.update(std::iter::once(&x[..]));
        }
        assert!((norm.mean(0) - 5.0).abs() < 0.05, "mean {}", norm.mean(0));
        assert!((norm.std(0) - 2.0).abs() < 0.05, "std {}", norm.std(0));
    }

    #[test]
    fn update_step_runs_on_real_rollouts() {
        let mut env = PointReach::new();
        let spec = env.spec().clone();
        let cfg = AgentConfig { hidden_sizes: vec![16, 16], ..Default::default() };
        let mut agent = Agent::new(&spec, Hyperparams::baseline(), &cfg, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut obs = env.reset(9);
        let mut batch = Vec::new();
        for _ in 0..32 {
            let action = agent.select_action(&obs, true, &mut rng).unwrap();
            let step = env.step(&action).unwrap();
            batch.push(Transition {
                obs: obs.observation.clone(),
                action,
                reward: step.reward,
                next_obs: step.obs.observation.clone(),
                achieved_goal: obs.achieved_goal.clone(),
                next_achieved_goal: step.obs.achieved_goal.clone(),
                desired_goal: obs.desired_goal.clone(),
            });
            obs = if step.done { env.reset(10) } else { step.obs };
        }
        agent.normalizer_update(&batch);
        let (critic_loss, actor_loss) = agent.update_step(&batch).unwrap();
        assert!(critic_loss.is_finite() && actor_loss.is_finite());
    }
}
