//! Epoch/cycle/episode training loop producing the per-epoch metrics used
//! for the efficiency comparisons: cumulative episodes, steps, wall time,
//! evaluation success rate, and median evaluation return.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentConfig, Hyperparams};
use crate::env::{compute_reward, GoalEnv};
use crate::error::{Error, Result};
use crate::replay::{Episode, ReplayBuffer, Transition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs_max: usize,
    pub cycles_per_epoch: usize,
    pub episodes_per_cycle: usize,
    pub updates_per_cycle: usize,
    pub batch_size: usize,
    pub eval_episodes: usize,
    pub success_stop_threshold: f64,
    pub seed: u64,
    pub buffer_capacity_episodes: usize,
    /// HER "future" strategy relabel ratio; relabel fraction is k/(k+1).
    pub replay_k: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs_max: 50,
            cycles_per_epoch: 10,
            episodes_per_cycle: 2,
            updates_per_cycle: 40,
            batch_size: 256,
            eval_episodes: 10,
            success_stop_threshold: 0.9,
            seed: 0,
            buffer_capacity_episodes: 1000,
            replay_k: 4.0,
        }
    }
}

impl TrainConfig {
    pub fn episodes_per_epoch(&self) -> usize {
        self.cycles_per_epoch * self.episodes_per_cycle
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs_max", self.epochs_max),
            ("cycles_per_epoch", self.cycles_per_epoch),
            ("episodes_per_cycle", self.episodes_per_cycle),
            ("updates_per_cycle", self.updates_per_cycle),
            ("batch_size", self.batch_size),
            ("eval_episodes", self.eval_episodes),
            ("buffer_capacity_episodes", self.buffer_capacity_episodes),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0 < self.success_stop_threshold && self.success_stop_threshold <= 1.0) {
            return Err(Error::Config("success_stop_threshold must be in (0, 1]".into()));
        }
        if self.replay_k < 0.0 {
            return Err(Error::Config("replay_k must be non-negative".into()));
        }
        Ok(())
    }
}

/// One per-epoch metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub cumulative_episodes: usize,
    pub cumulative_steps: usize,
    pub wall_clock_s: f64,
    pub eval_success_rate: f64,
    pub eval_median_total_reward: f64,
}

/// Terminal summary of a run; the sentinel for a failed or unconverged run
/// is `epochs_to_goal = epochs_max + 1` with `reached = false`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub epochs_to_goal: usize,
    pub episodes_to_goal: usize,
    pub steps_to_goal: usize,
    pub time_to_goal_s: f64,
    pub reached: bool,
    pub final_success_rate: f64,
    pub final_median_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub epochs: Vec<EpochRecord>,
    pub summary: RunSummary,
}

fn collect_episode<R: Rng>(
    env: &mut dyn GoalEnv,
    agent: &Agent,
    explore: bool,
    episode_seed: u64,
    rng: &mut R,
) -> Result<Episode> {
    let mut obs = env.reset(episode_seed);
    let mut transitions = Vec::with_capacity(env.spec().max_episode_steps);
    loop {
        let action = agent.select_action(&obs, explore, rng)?;
        let step = env.step(&action)?;
        transitions.push(Transition {
            obs: obs.observation.clone(),
            action,
            reward: step.reward,
            next_obs: step.obs.observation.clone(),
            achieved_goal: obs.achieved_goal.clone(),
            next_achieved_goal: step.obs.achieved_goal.clone(),
            desired_goal: obs.desired_goal.clone(),
        });
        obs = step.obs;
        if step.done {
            break;
        }
    }
    Episode::new(transitions)
}

/// Greedy rollouts: success rate at the final step and the median total
/// reward over episodes. Deterministic given `seed`.
pub fn evaluate(env: &mut dyn GoalEnv, agent: &Agent, episodes: usize, seed: u64) -> Result<(f64, f64)> {
    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed);
    let mut greedy_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let mut successes = 0usize;
    let mut totals = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let mut obs = env.reset(seed_rng.gen());
        let mut total = 0.0;
        let mut last_success;
        loop {
            let action = agent.select_action(&obs, false, &mut greedy_rng)?;
            let step = env.step(&action)?;
            total += step.reward;
            last_success = step.is_success;
            obs = step.obs;
            if step.done {
                break;
            }
        }
        if last_success {
            successes += 1;
        }
        totals.push(total);
    }
    totals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = if totals.len() % 2 == 1 {
        totals[totals.len() / 2]
    } else {
        0.5 * (totals[totals.len() / 2 - 1] + totals[totals.len() / 2])
    };
    Ok((successes as f64 / episodes as f64, median))
}

/// Full training run. Loops epochs -> cycles -> {collect, store, normalizer
/// update, gradient updates, polyak update}, evaluates greedily after each
/// epoch, and stops early at the first epoch whose evaluation success rate
/// reaches the stop threshold. A numeric failure ends the run with the
/// sentinel summary instead of an error.
pub fn train_run(
    env: &mut dyn GoalEnv,
    hp: Hyperparams,
    agent_cfg: &AgentConfig,
    cfg: &TrainConfig,
    mut on_epoch: Option<&mut dyn FnMut(&EpochRecord)>,
) -> Result<(RunMetrics, Agent)> {
    hp.validate()?;
    cfg.validate()?;
    let spec = env.spec().clone();
    let horizon = spec.max_episode_steps;

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let net_seed: u64 = master.gen();
    let buffer_seed: u64 = master.gen();
    let explore_seed: u64 = master.gen();
    let mut episode_seeds = ChaCha8Rng::seed_from_u64(master.gen());
    let mut eval_seeds = ChaCha8Rng::seed_from_u64(master.gen());

    let mut agent = Agent::new(&spec, hp, agent_cfg, net_seed)?;
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity_episodes, horizon, buffer_seed);
    let mut explore_rng = ChaCha8Rng::seed_from_u64(explore_seed);

    let reward_spec = spec.clone();
    let reward_fn =
        move |achieved: &[f64], desired: &[f64]| compute_reward(achieved, desired, &reward_spec).unwrap();

    let start = Instant::now();
    let mut epochs = Vec::new();
    let mut episodes_done = 0usize;
    let mut failed = false;

    'epochs: for epoch in 1..=cfg.epochs_max {
        for _ in 0..cfg.cycles_per_epoch {
            for _ in 0..cfg.episodes_per_cycle {
                let ep = collect_episode(env, &agent, true, episode_seeds.gen(), &mut explore_rng)?;
                agent.normalizer_update(ep.transitions());
                buffer.store(ep)?;
                episodes_done += 1;
            }
            for _ in 0..cfg.updates_per_cycle {
                let batch = buffer.her_sample(cfg.batch_size, cfg.replay_k, &reward_fn)?;
                match agent.update_step(&batch) {
                    Ok(_) => {}
                    Err(Error::Numeric(_)) => {
                        failed = true;
                        break 'epochs;
                    }
                    Err(e) => return Err(e),
                }
            }
            agent.polyak_update();
        }
        let (success_rate, median_reward) =
            evaluate(env, &agent, cfg.eval_episodes, eval_seeds.gen())?;
        let record = EpochRecord {
            epoch,
            cumulative_episodes: episodes_done,
            cumulative_steps: episodes_done * horizon,
            wall_clock_s: start.elapsed().as_secs_f64(),
            eval_success_rate: success_rate,
            eval_median_total_reward: median_reward,
        };
        if let Some(cb) = on_epoch.as_deref_mut() {
            cb(&record);
        }
        epochs.push(record);
        if success_rate >= cfg.success_stop_threshold {
            break;
        }
    }

    let elapsed = start.elapsed().as_secs_f64();
    let last = epochs.last();
    let reached = !failed
        && last.map(|r| r.eval_success_rate >= cfg.success_stop_threshold).unwrap_or(false);
    let summary = if reached {
        let r = last.unwrap();
        RunSummary {
            epochs_to_goal: r.epoch,
            episodes_to_goal: r.cumulative_episodes,
            steps_to_goal: r.cumulative_steps,
            time_to_goal_s: elapsed,
            reached: true,
            final_success_rate: r.eval_success_rate,
            final_median_reward: r.eval_median_total_reward,
        }
    } else {
        // Sentinel fitness so the GA can rank unconverged or diverged runs.
        RunSummary {
            epochs_to_goal: cfg.epochs_max + 1,
            episodes_to_goal: episodes_done,
            steps_to_goal: episodes_done * horizon,
            time_to_goal_s: elapsed,
            reached: false,
            final_success_rate: last.map(|r| r.eval_success_rate).unwrap_or(0.0),
            final_median_reward: last
                .map(|r| r.eval_median_total_reward)
                .unwrap_or(-(horizon as f64)),
        }
    };
    Ok((RunMetrics { epochs, summary }, agent))
}
