//! Goal-conditioned toy environments with sparse rewards.
//!
//! Three desk-scale kinematic tasks:
//! - `point-reach`: a 2-D point mass steered to a goal position.
//! - `arm-reach`: a 3-joint planar arm steered to a goal joint configuration.
//! - `planar-push`: an agent disk that pushes a block to a goal position.
//!
//! Episodes are fixed-horizon: `done` is true only when the step budget is
//! exhausted. Reward is 0 when the achieved goal is within the success
//! threshold of the desired goal, -1 otherwise.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EnvName {
    #[serde(rename = "point-reach")]
    PointReach,
    #[serde(rename = "arm-reach")]
    ArmReach,
    #[serde(rename = "planar-push")]
    PlanarPush,
}

impl fmt::Display for EnvName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EnvName::PointReach => "point-reach",
            EnvName::ArmReach => "arm-reach",
            EnvName::PlanarPush => "planar-push",
        };
        f.write_str(s)
    }
}

impl FromStr for EnvName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point-reach" => Ok(EnvName::PointReach),
            "arm-reach" => Ok(EnvName::ArmReach),
            "planar-push" => Ok(EnvName::PlanarPush),
            other => Err(Error::InvalidArgument(format!(
                "unknown env '{other}' (expected point-reach, arm-reach, or planar-push)"
            ))),
        }
    }
}

/// Static description of an environment's spaces and constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: EnvName,
    pub obs_dim: usize,
    pub goal_dim: usize,
    pub action_dim: usize,
    pub max_episode_steps: usize,
    pub success_threshold_distance: f64,
    /// Converts a [-1,1] action component into a per-step displacement.
    pub action_scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoalObservation {
    pub observation: Vec<f64>,
    pub achieved_goal: Vec<f64>,
    pub desired_goal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: GoalObservation,
    pub reward: f64,
    pub done: bool,
    pub is_success: bool,
}

/// Sparse reward: 0 within the success threshold, -1 outside. Pure, so HER
/// can recompute rewards for relabeled goals.
pub fn compute_reward(achieved_goal: &[f64], desired_goal: &[f64], spec: &EnvSpec) -> Result<f64> {
    if achieved_goal.len() != desired_goal.len() {
        return Err(Error::InvalidArgument(format!(
            "goal length mismatch: {} vs {}",
            achieved_goal.len(),
            desired_goal.len()
        )));
    }
    let dist2: f64 = achieved_goal
        .iter()
        .zip(desired_goal)
        .map(|(a, d)| (a - d) * (a - d))
        .sum();
    if dist2.sqrt() <= spec.success_threshold_distance {
        Ok(0.0)
    } else {
        Ok(-1.0)
    }
}

pub trait GoalEnv {
    fn spec(&self) -> &EnvSpec;

    /// Resample state and desired goal deterministically from `seed`.
    fn reset(&mut self, seed: u64) -> GoalObservation;

    /// Apply one action (components clamped to [-1,1]) and advance a step.
    fn step(&mut self, action: &[f64]) -> Result<StepResult>;

    /// Proportional expert controller for the current state; used by
    /// reachability tests and as a perfect-policy reference.
    fn scripted_action(&self) -> Vec<f64>;
}

pub fn make_env(name: EnvName) -> Box<dyn GoalEnv> {
    match name {
        EnvName::PointReach => Box::new(PointReach::new()),
        EnvName::ArmReach => Box::new(ArmReach::new()),
        EnvName::PlanarPush => Box::new(PlanarPush::new()),
    }
}

pub fn env_spec(name: EnvName) -> EnvSpec {
    make_env(name).spec().clone()
}

fn clamp_action(action: &[f64], dim: usize) -> Result<Vec<f64>> {
    if action.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "action length {} != action_dim {}",
            action.len(),
            dim
        )));
    }
    Ok(action.iter().map(|a| a.clamp(-1.0, 1.0)).collect())
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------------------
// point-reach

/// 2-D point mass. obs = [pos, vel] (vel is the last displacement), achieved
/// goal is the position, dynamics pos += action_scale * action.
pub struct PointReach {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    goal: [f64; 2],
    steps: usize,
}

impl PointReach {
    pub fn new() -> Self {
        PointReach {
            spec: EnvSpec {
                name: EnvName::PointReach,
                obs_dim: 4,
                goal_dim: 2,
                action_dim: 2,
                max_episode_steps: 50,
                success_threshold_distance: 0.05,
                action_scale: 0.08,
            },
            pos: [0.0; 2],
            vel: [0.0; 2],
            goal: [0.0; 2],
            steps: 0,
        }
    }

    /// Override the desired goal; test hook for unreachable-goal scenarios.
    pub fn set_goal(&mut self, goal: [f64; 2]) {
        self.goal = goal;
    }

    fn observation(&self) -> GoalObservation {
        GoalObservation {
            observation: vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]],
            achieved_goal: self.pos.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl GoalEnv for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.pos = [rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2)];
        // Keep the goal at least 0.15 away so epoch-one success is earned.
        loop {
            self.goal = [rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6)];
            if dist(&self.pos, &self.goal) >= 0.15 {
                break;
            }
        }
        self.vel = [0.0; 2];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clamp_action(action, self.spec.action_dim)?;
        self.vel = [self.spec.action_scale * a[0], self.spec.action_scale * a[1]];
        self.pos[0] += self.vel[0];
        self.pos[1] += self.vel[1];
        self.steps += 1;
        let reward = compute_reward(&self.pos, &self.goal, &self.spec)?;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done: self.steps >= self.spec.max_episode_steps,
            is_success: reward == 0.0,
        })
    }

    fn scripted_action(&self) -> Vec<f64> {
        (0..2)
            .map(|i| ((self.goal[i] - self.pos[i]) / self.spec.action_scale).clamp(-1.0, 1.0))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// arm-reach

/// Planar 3-joint arm with joint-space goals: the desired goal is a joint
/// configuration and the achieved goal is the current joint angles.
/// obs = [angles, end-effector x, end-effector y].
pub struct ArmReach {
    spec: EnvSpec,
    angles: [f64; 3],
    goal: [f64; 3],
    steps: usize,
}

/// Link lengths of the planar arm.
pub const ARM_LINKS: [f64; 3] = [0.4, 0.3, 0.2];
/// Joint angles are clamped to this symmetric bound (radians).
pub const ARM_JOINT_BOUND: f64 = std::f64::consts::FRAC_PI_2;
/// Goals are sampled inside this tighter bound so clamping never blocks them.
pub const ARM_GOAL_BOUND: f64 = 0.8;

/// End-effector position of the planar arm by accumulating joint angles.
pub fn arm_forward_kinematics(angles: &[f64; 3]) -> [f64; 2] {
    let mut theta = 0.0;
    let mut x = 0.0;
    let mut y = 0.0;
    for (link, angle) in ARM_LINKS.iter().zip(angles) {
        theta += angle;
        x += link * theta.cos();
        y += link * theta.sin();
    }
    [x, y]
}

impl ArmReach {
    pub fn new() -> Self {
        ArmReach {
            spec: EnvSpec {
                name: EnvName::ArmReach,
                obs_dim: 5,
                goal_dim: 3,
                action_dim: 3,
                max_episode_steps: 50,
                success_threshold_distance: 0.05,
                action_scale: 0.15,
            },
            angles: [0.0; 3],
            goal: [0.0; 3],
            steps: 0,
        }
    }

    fn observation(&self) -> GoalObservation {
        let ee = arm_forward_kinematics(&self.angles);
        GoalObservation {
            observation: vec![self.angles[0], self.angles[1], self.angles[2], ee[0], ee[1]],
            achieved_goal: self.angles.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl Default for ArmReach {
    fn default() -> Self {
        Self::new()
    }
}

impl GoalEnv for ArmReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for a in &mut self.angles {
            *a = rng.gen_range(-0.5..0.5);
        }
        loop {
            for g in &mut self.goal {
                *g = rng.gen_range(-ARM_GOAL_BOUND..ARM_GOAL_BOUND);
            }
            if dist(&self.angles, &self.goal) >= 0.2 {
                break;
            }
        }
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clamp_action(action, self.spec.action_dim)?;
        for (angle, ai) in self.angles.iter_mut().zip(&a) {
            *angle = (*angle + self.spec.action_scale * ai).clamp(-ARM_JOINT_BOUND, ARM_JOINT_BOUND);
        }
        self.steps += 1;
        let reward = compute_reward(&self.angles, &self.goal, &self.spec)?;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done: self.steps >= self.spec.max_episode_steps,
            is_success: reward == 0.0,
        })
    }

    fn scripted_action(&self) -> Vec<f64> {
        self.angles
            .iter()
            .zip(&self.goal)
            .map(|(a, g)| ((g - a) / self.spec.action_scale).clamp(-1.0, 1.0))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// planar-push

/// Agent disk pushing a block on a plane. The agent starts behind the block
/// relative to the goal; when the agent overlaps the contact radius, the
/// block is displaced along the agent-to-block direction by the overlap.
/// obs = [agent pos, block pos, block - agent], achieved goal is the block
/// position.
pub struct PlanarPush {
    spec: EnvSpec,
    agent: [f64; 2],
    block: [f64; 2],
    goal: [f64; 2],
    steps: usize,
}

/// Centre distance at which the agent disk contacts the block.
pub const PUSH_CONTACT_DIST: f64 = 0.08;

impl PlanarPush {
    pub fn new() -> Self {
        PlanarPush {
            spec: EnvSpec {
                name: EnvName::PlanarPush,
                obs_dim: 6,
                goal_dim: 2,
                action_dim: 2,
                max_episode_steps: 50,
                success_threshold_distance: 0.05,
                action_scale: 0.04,
            },
            agent: [0.0; 2],
            block: [0.0; 2],
            goal: [0.0; 2],
            steps: 0,
        }
    }

    fn observation(&self) -> GoalObservation {
        GoalObservation {
            observation: vec![
                self.agent[0],
                self.agent[1],
                self.block[0],
                self.block[1],
                self.block[0] - self.agent[0],
                self.block[1] - self.agent[1],
            ],
            achieved_goal: self.block.to_vec(),
            desired_goal: self.goal.to_vec(),
        }
    }
}

impl Default for PlanarPush {
    fn default() -> Self {
        Self::new()
    }
}

impl GoalEnv for PlanarPush {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> GoalObservation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.block = [rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)];
        // Goal offset from the block, then the agent placed behind the
        // block on the block-to-goal line so a straight push can succeed.
        let goal_angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let goal_r = rng.gen_range(0.12..0.25);
        self.goal = [
            (self.block[0] + goal_r * goal_angle.cos()).clamp(-0.8, 0.8),
            (self.block[1] + goal_r * goal_angle.sin()).clamp(-0.8, 0.8),
        ];
        let to_goal = [self.goal[0] - self.block[0], self.goal[1] - self.block[1]];
        let n = dist(&to_goal, &[0.0, 0.0]).max(1e-9);
        let back = rng.gen_range(0.12..0.2);
        self.agent = [
            self.block[0] - back * to_goal[0] / n,
            self.block[1] - back * to_goal[1] / n,
        ];
        self.steps = 0;
        self.observation()
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let a = clamp_action(action, self.spec.action_dim)?;
        self.agent[0] += self.spec.action_scale * a[0];
        self.agent[1] += self.spec.action_scale * a[1];
        let d = dist(&self.agent, &self.block);
        if d < PUSH_CONTACT_DIST {
            let overlap = PUSH_CONTACT_DIST - d;
            let dir = if d > 1e-9 {
                [(self.block[0] - self.agent[0]) / d, (self.block[1] - self.agent[1]) / d]
            } else {
                [1.0, 0.0]
            };
            self.block[0] += overlap * dir[0];
            self.block[1] += overlap * dir[1];
        }
        self.steps += 1;
        let reward = compute_reward(&self.block, &self.goal, &self.spec)?;
        Ok(StepResult {
            obs: self.observation(),
            reward,
            done: self.steps >= self.spec.max_episode_steps,
            is_success: reward == 0.0,
        })
    }

    fn scripted_action(&self) -> Vec<f64> {
        // Drive toward a point slightly behind the block on the goal line;
        // continued motion through the contact radius pushes the block.
        if compute_reward(&self.block, &self.goal, &self.spec).unwrap() == 0.0 {
            return vec![0.0, 0.0];
        }
        let to_goal = [self.goal[0] - self.block[0], self.goal[1] - self.block[1]];
        let n = dist(&to_goal, &[0.0, 0.0]).max(1e-9);
        let target = [
            self.block[0] - (PUSH_CONTACT_DIST - 0.02) * to_goal[0] / n,
            self.block[1] - (PUSH_CONTACT_DIST - 0.02) * to_goal[1] / n,
        ];
        (0..2)
            .map(|i| ((target[i] - self.agent[i]) / self.spec.action_scale).clamp(-1.0, 1.0))
            .collect()
    }
}
