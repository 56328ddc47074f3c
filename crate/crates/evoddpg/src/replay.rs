//! Episode-structured replay buffer with hindsight goal relabeling.
//!
//! Relabeling uses the "future" strategy: with probability k/(k+1) a sampled
//! transition's desired goal is replaced by the achieved goal of a uniformly
//! chosen strictly later timestep of the same episode, and its reward is
//! recomputed. The last transition of an episode has no future candidates
//! and keeps its original goal.

use std::collections::VecDeque;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Goal-conditioned experience tuple.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub next_achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

/// One fixed-horizon episode of transitions with verified chaining.
#[derive(Debug, Clone)]
pub struct Episode {
    transitions: Vec<Transition>,
}

impl Episode {
    pub fn new(transitions: Vec<Transition>) -> Result<Episode> {
        if transitions.is_empty() {
            return Err(Error::InvalidArgument("episode must be non-empty".into()));
        }
        for w in transitions.windows(2) {
            if w[0].next_obs != w[1].obs || w[0].next_achieved_goal != w[1].achieved_goal {
                return Err(Error::InvalidArgument(
                    "episode chaining violated: next state of step t must equal state of t+1".into(),
                ));
            }
        }
        Ok(Episode { transitions })
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }
}

/// Where a relabeled goal came from; test-facing provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelabelTrace {
    /// Index of the episode within the buffer at sampling time.
    pub episode: usize,
    /// Timestep of the sampled transition.
    pub t: usize,
    /// Strictly later timestep whose achieved goal became the new desired goal.
    pub future_t: usize,
}

/// Ring of episodes with oldest-first eviction and a seedable sampler.
pub struct ReplayBuffer {
    capacity_episodes: usize,
    horizon: usize,
    episodes: VecDeque<Episode>,
    rng: ChaCha8Rng,
}

impl ReplayBuffer {
    pub fn new(capacity_episodes: usize, horizon: usize, seed: u64) -> Self {
        ReplayBuffer {
            capacity_episodes,
            horizon,
            episodes: VecDeque::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn len_episodes(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn episodes(&self) -> impl Iterator<Item = &Episode> {
        self.episodes.iter()
    }

    pub fn store(&mut self, ep: Episode) -> Result<()> {
        if ep.len() != self.horizon {
            return Err(Error::InvalidArgument(format!(
                "episode length {} != horizon {}",
                ep.len(),
                self.horizon
            )));
        }
        if self.episodes.len() == self.capacity_episodes {
            self.episodes.pop_front();
        }
        self.episodes.push_back(ep);
        Ok(())
    }

    /// Sample a minibatch with "future" hindsight relabeling. `reward_fn`
    /// recomputes the sparse reward for a relabeled goal. Relabeling happens
    /// on copies; stored episodes are never mutated.
    pub fn her_sample<F>(
        &mut self,
        batch_size: usize,
        replay_k: f64,
        reward_fn: F,
    ) -> Result<Vec<Transition>>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        Ok(self
            .her_sample_traced(batch_size, replay_k, reward_fn)?
            .into_iter()
            .map(|(t, _)| t)
            .collect())
    }

    /// As `her_sample`, returning the relabel provenance per transition.
    pub fn her_sample_traced<F>(
        &mut self,
        batch_size: usize,
        replay_k: f64,
        reward_fn: F,
    ) -> Result<Vec<(Transition, Option<RelabelTrace>)>>
    where
        F: Fn(&[f64], &[f64]) -> f64,
    {
        if self.episodes.is_empty() {
            return Err(Error::EmptyBuffer);
        }
        let relabel_prob = if replay_k <= 0.0 { 0.0 } else { replay_k / (replay_k + 1.0) };
        let mut batch = Vec::with_capacity(batch_size);
        for _ in 0..batch_size {
            let ep_idx = self.rng.gen_range(0..self.episodes.len());
            let ep = &self.episodes[ep_idx];
            let t = self.rng.gen_range(0..ep.len());
            let mut tr = ep.transitions()[t].clone();
            let mut trace = None;
            // Future candidates are timesteps t+1..len-1; the last timestep
            // has none and keeps its original goal.
            if t + 1 < ep.len() && self.rng.gen::<f64>() < relabel_prob {
                let future_t = self.rng.gen_range(t + 1..ep.len());
                tr.desired_goal = ep.transitions()[future_t].achieved_goal.clone();
                tr.reward = reward_fn(&tr.next_achieved_goal, &tr.desired_goal);
                trace = Some(RelabelTrace { episode: ep_idx, t, future_t });
            }
            batch.push((tr, trace));
        }
        Ok(batch)
    }
}
