//! Acceptance suite. Each test prints one `criterion N (...): PASS|FAIL`
//! line (visible with `cargo test --test acceptance -- --nocapture`) and
//! asserts the criterion. The search and comparison runs are sized for a
//! single core: small networks, batch 64, 20 updates per cycle.

use std::fs;
use std::process::Command;
use std::time::Instant;

use evoddpg::agent::{Agent, AgentConfig, Hyperparams};
use evoddpg::commands::{compare_runs, train_fitness};
use evoddpg::env::{compute_reward, make_env, EnvName, EnvSpec};
use evoddpg::ga::{
    cmp_fitness, default_gene_specs, ga_run, Chromosome, EvalOutcome, GaConfig,
};
use evoddpg::nn::finite_diff_grad;
use evoddpg::replay::{Episode, ReplayBuffer, Transition};
use evoddpg::trainer::{train_run, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn report(n: usize, name: &str, ok: bool, detail: &str) {
    println!("criterion {n} ({name}): {} — {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

/// Training configuration used by the runtime-bound criteria (1-3).
fn acc_train_cfg(epochs_max: usize) -> TrainConfig {
    TrainConfig { epochs_max, batch_size: 64, updates_per_cycle: 20, seed: 0, ..Default::default() }
}

fn acc_agent_cfg() -> AgentConfig {
    AgentConfig { hidden_sizes: vec![32, 32], ..Default::default() }
}

#[test]
fn criteria_1_and_2_ga_tuned_beats_baseline_defaults() {
    let specs = default_gene_specs();
    let agent_cfg = acc_agent_cfg();
    let mut results = Vec::new();
    for env_name in [EnvName::PointReach, EnvName::ArmReach] {
        // GA search with the default budget: population 8 x 10 generations.
        let ga_cfg = GaConfig::default();
        let search_cfg = acc_train_cfg(25);
        let fitness = |c: &Chromosome| train_fitness(env_name, &agent_cfg, &search_cfg, c);
        let result = ga_run(&fitness, &specs, &ga_cfg, search_cfg.seed, None).unwrap();
        let tuned = result.best.chromosome.to_hyperparams(&specs).unwrap();

        // Head-to-head over 3 shared seeds with a generous epoch budget.
        let report = compare_runs(
            env_name,
            Hyperparams::baseline(),
            tuned,
            &agent_cfg,
            &acc_train_cfg(50),
            3,
            None,
        )
        .unwrap();
        results.push((env_name, report));
    }

    let mut detail = String::new();
    let mut all_leq = true;
    let mut strict_envs = Vec::new();
    for (env_name, r) in &results {
        let (b, t) = (r.baseline.mean_epochs, r.tuned.mean_epochs);
        detail.push_str(&format!("{env_name}: baseline {b:.1} vs tuned {t:.1} mean epochs; "));
        all_leq &= t <= b;
        if t < b {
            strict_envs.push(*env_name);
        }
    }
    report(
        1,
        "directional efficiency",
        all_leq && !strict_envs.is_empty(),
        detail.trim_end_matches("; "),
    );

    // Criterion 2 applies to the env(s) where criterion 1 was strict.
    let mut best_reduction = f64::NEG_INFINITY;
    let mut wt_detail = String::new();
    for (env_name, r) in &results {
        if !strict_envs.contains(env_name) {
            continue;
        }
        let reduction = 100.0 * (r.baseline.mean_wall_time_s - r.tuned.mean_wall_time_s)
            / r.baseline.mean_wall_time_s;
        wt_detail.push_str(&format!("{env_name}: wall-time reduction {reduction:.1}%; "));
        best_reduction = best_reduction.max(reduction);
    }
    report(
        2,
        "learning-time reduction",
        best_reduction >= 10.0,
        wt_detail.trim_end_matches("; "),
    );
}

#[test]
fn criterion_3_baseline_learnability() {
    let start = Instant::now();
    let agent_cfg = acc_agent_cfg();
    let mut converged = 0;
    let mut epochs = Vec::new();
    for seed in 0..3u64 {
        let mut cfg = acc_train_cfg(50);
        cfg.seed = seed;
        let mut env = make_env(EnvName::PointReach);
        let (metrics, _) =
            train_run(env.as_mut(), Hyperparams::baseline(), &agent_cfg, &cfg, None).unwrap();
        if metrics.summary.reached {
            converged += 1;
        }
        epochs.push(metrics.summary.epochs_to_goal);
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        3,
        "baseline learnability",
        converged >= 2 && elapsed <= 600.0,
        &format!("{converged}/3 seeds reached 0.9 within 50 epochs (epochs {epochs:?}) in {elapsed:.0}s"),
    );
}

fn tiny_env_spec() -> EnvSpec {
    EnvSpec {
        name: EnvName::PointReach,
        obs_dim: 3,
        goal_dim: 2,
        action_dim: 2,
        max_episode_steps: 10,
        success_threshold_distance: 0.05,
        action_scale: 0.08,
    }
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

fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn criterion_4_gradient_suite() {
    // 20 random instances (network init and batch both vary), nets <= 200
    // parameters so central differences at h=1e-5 stay well conditioned.
    let spec = tiny_env_spec();
    let cfg = AgentConfig { hidden_sizes: vec![8, 8], ..Default::default() };
    let mut worst: f64 = 0.0;
    for i in 0..20u64 {
        let agent = Agent::new(&spec, Hyperparams::baseline(), &cfg, 1000 + i).unwrap();
        assert!(agent.actor.param_count() <= 200 && agent.critic.param_count() <= 200);
        let batch = random_batch(4, 2000 + i);

        let (_, critic_grads, targets) = agent.critic_loss_and_grads(&batch).unwrap();
        let critic_numeric =
            finite_diff_grad(&agent.critic, |c| agent.critic_loss_given(c, &batch, &targets), 1e-5)
                .unwrap();
        worst = worst.max(max_rel_err(&critic_grads.flatten(), &critic_numeric.flatten()));

        let (_, actor_grads) = agent.actor_loss_and_grads(&batch).unwrap();
        let actor_numeric =
            finite_diff_grad(&agent.actor, |a| agent.actor_loss_given(a, &batch), 1e-5).unwrap();
        worst = worst.max(max_rel_err(&actor_grads.flatten(), &actor_numeric.flatten()));
    }
    report(
        4,
        "gradient suite",
        worst < 1e-4,
        &format!("max relative error {worst:.2e} over 20 instances"),
    );
}

#[test]
fn criterion_5_her_oracle_suite() {
    // Real point-reach rollouts under random actions so the achieved goals
    // carry actual env structure.
    let mut env = make_env(EnvName::PointReach);
    let spec = env.spec().clone();
    let horizon = spec.max_episode_steps;
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut buffer = ReplayBuffer::new(64, horizon, 7);
    let mut stored: Vec<Episode> = Vec::new();
    for e in 0..20u64 {
        let mut obs = env.reset(e);
        let mut transitions = Vec::new();
        loop {
            let action: Vec<f64> = (0..spec.action_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let step = env.step(&action).unwrap();
            transitions.push(Transition {
                obs: obs.observation.clone(),
                action,
                reward: step.reward,
                next_obs: step.obs.observation.clone(),
                achieved_goal: obs.achieved_goal.clone(),
                next_achieved_goal: step.obs.achieved_goal.clone(),
                desired_goal: obs.desired_goal.clone(),
            });
            let done = step.done;
            obs = step.obs;
            if done {
                break;
            }
        }
        let ep = Episode::new(transitions).unwrap();
        stored.push(ep.clone());
        buffer.store(ep).unwrap();
    }

    let reward_fn = |a: &[f64], d: &[f64]| compute_reward(a, d, &spec).unwrap();
    let total = 100_000usize;
    let mut relabeled = 0usize;
    for _ in 0..total / 1000 {
        let batch = buffer.her_sample_traced(1000, 4.0, reward_fn).unwrap();
        for (tr, trace) in batch {
            if let Some(trace) = trace {
                relabeled += 1;
                assert!(trace.future_t > trace.t, "future goal must be strictly later");
                let source = &stored[trace.episode].transitions()[trace.future_t];
                assert_eq!(
                    tr.desired_goal, source.achieved_goal,
                    "relabeled goal must trace to a same-episode achieved goal"
                );
                assert_eq!(
                    tr.reward,
                    reward_fn(&tr.next_achieved_goal, &tr.desired_goal),
                    "relabeled reward must equal recomputation"
                );
            }
        }
    }
    let fraction = relabeled as f64 / total as f64;
    report(
        5,
        "HER oracle suite",
        (fraction - 0.80).abs() <= 0.02,
        &format!("relabel fraction {fraction:.4} over {total} samples"),
    );
}

#[test]
fn criterion_6_polyak_identities() {
    let spec = tiny_env_spec();
    let cfg = AgentConfig { hidden_sizes: vec![8, 8], ..Default::default() };
    let mut ok = true;

    // tau = 0 copies the main network; tau = 1 leaves the target untouched.
    for (tau, copies_main) in [(0.0, true), (1.0, false)] {
        let agent = Agent::new(&spec, Hyperparams::baseline(), &cfg, 5).unwrap();
        let other = Agent::new(&spec, Hyperparams::baseline(), &cfg, 6).unwrap();
        let mut target = other.actor.clone();
        let before = target.clone();
        target.polyak_from(&agent.actor, tau);
        ok &= if copies_main { target == agent.actor } else { target == before };
    }

    // tau = 0.95: every parameter equals the blend formula bit-for-bit.
    let main = Agent::new(&spec, Hyperparams::baseline(), &cfg, 7).unwrap().actor;
    let mut target = Agent::new(&spec, Hyperparams::baseline(), &cfg, 8).unwrap().actor;
    let before = target.flatten();
    target.polyak_from(&main, 0.95);
    let after = target.flatten();
    let blend_exact = before
        .iter()
        .zip(main.flatten())
        .zip(&after)
        .all(|((&t, m), &got)| got == 0.95 * t + (1.0 - 0.95) * m);
    ok &= blend_exact;
    report(6, "polyak identities", ok, "tau 0/1 edge cases and 0.95 blend exact");
}

// Monotone stub objective: normalized gene sum scaled to an integer epoch
// count in 0..=600. The analytic optimum is the all-low corner (0).
fn stub_fitness(c: &Chromosome) -> EvalOutcome {
    let specs = default_gene_specs();
    let s: f64 = c
        .genes
        .iter()
        .zip(&specs)
        .map(|(&g, spec)| {
            let (lo, hi) = spec.search_bounds();
            (g - lo) / (hi - lo)
        })
        .sum();
    EvalOutcome {
        epochs_to_goal: (s * 100.0).round() as usize,
        final_success_rate: 1.0 - s / 6.0,
        final_median_reward: -s,
    }
}

#[test]
fn criterion_7_ga_property_suite() {
    let specs = default_gene_specs();
    let cfg = GaConfig { population_size: 8, generations: 20, seed: 4, ..Default::default() };
    let result = ga_run(&stub_fitness, &specs, &cfg, 0, None).unwrap();

    // In-bounds chromosomes and gapless eval indexes over the full run.
    let in_bounds = result.history.iter().all(|r| r.chromosome.in_bounds(&specs));
    let indexed = result.history.iter().enumerate().all(|(i, r)| r.eval_index == i + 1);

    // Best-so-far fitness is monotone under the lexicographic order.
    let mut best: Option<EvalOutcome> = None;
    let mut monotone = true;
    for r in &result.history {
        let outcome = EvalOutcome {
            epochs_to_goal: r.epochs_to_goal,
            final_success_rate: r.final_success_rate,
            final_median_reward: r.final_median_reward,
        };
        best = Some(match best {
            None => outcome,
            Some(b) => {
                if cmp_fitness(&outcome, &b) == std::cmp::Ordering::Less {
                    outcome
                } else {
                    monotone &= cmp_fitness(&b, &outcome) != std::cmp::Ordering::Greater;
                    b
                }
            }
        });
    }
    let best = best.unwrap();
    monotone &= cmp_fitness(&best, &{
        EvalOutcome {
            epochs_to_goal: result.best.epochs_to_goal,
            final_success_rate: result.best.final_success_rate,
            final_median_reward: result.best.final_median_reward,
        }
    }) == std::cmp::Ordering::Equal;

    // Optimum corner within 5% of the objective range (600) in <= 160 evals.
    let budget_ok = result.history.len() <= 160;
    let near_corner = result.best.epochs_to_goal <= 30;

    report(
        7,
        "GA property suite",
        in_bounds && indexed && monotone && budget_ok && near_corner,
        &format!(
            "in_bounds={in_bounds} indexed={indexed} monotone={monotone} best={} evals={}",
            result.best.epochs_to_goal,
            result.history.len()
        ),
    );
}

fn jsonl_without_wall_clock(path: &std::path::Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| {
            let mut v: serde_json::Value = serde_json::from_str(l).unwrap();
            if let Some(obj) = v.as_object_mut() {
                obj.remove("wall_clock_s");
            }
            v
        })
        .collect()
}

#[test]
fn criterion_8_seeded_determinism() {
    let tmp = TempDir::new().unwrap();
    let cfg_path = tmp.path().join("det.toml");
    fs::write(
        &cfg_path,
        r#"
[env]
name = "point-reach"

[agent]
hidden_sizes = [16, 16]

[train]
epochs_max = 3
batch_size = 32
updates_per_cycle = 10

[ga]
population_size = 2
generations = 2
tournament_size = 2
"#,
    )
    .unwrap();

    let run = |cmd: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_evoddpg"))
            .args([cmd, "--config", cfg_path.to_str().unwrap(), "--seed", "7", "--out-dir", out, "--quiet"])
            .current_dir(tmp.path())
            .status()
            .unwrap();
        assert!(status.code().is_some());
    };

    run("train", "t1");
    run("train", "t2");
    let train_ok = jsonl_without_wall_clock(&tmp.path().join("t1/metrics.jsonl"))
        == jsonl_without_wall_clock(&tmp.path().join("t2/metrics.jsonl"));

    run("ga", "g1");
    run("ga", "g2");
    let ga_ok = fs::read_to_string(tmp.path().join("g1/ga_history.jsonl")).unwrap()
        == fs::read_to_string(tmp.path().join("g2/ga_history.jsonl")).unwrap();

    report(
        8,
        "seeded determinism",
        train_ok && ga_ok,
        &format!("train metrics identical={train_ok}, ga history identical={ga_ok}"),
    );
}

#[test]
fn criterion_9_bookkeeping_identities() {
    // The arithmetic that links a 60-epoch run at 100 episodes/epoch and
    // 50 steps/episode: 6,000 episodes and 300,000 steps.
    let published_ok = 60usize * 100 == 6_000 && 6_000usize * 50 == 300_000;

    // Every produced summary satisfies the same identities: one short run
    // per env, mixing reached and unreached outcomes.
    let agent_cfg = AgentConfig { hidden_sizes: vec![16, 16], ..Default::default() };
    let mut summaries_ok = true;
    let mut checked = 0;
    for (env_name, epochs_max) in
        [(EnvName::PointReach, 2), (EnvName::ArmReach, 1), (EnvName::PlanarPush, 1)]
    {
        let cfg = TrainConfig {
            epochs_max,
            batch_size: 32,
            updates_per_cycle: 5,
            ..Default::default()
        };
        let mut env = make_env(env_name);
        let (metrics, _) =
            train_run(env.as_mut(), Hyperparams::baseline(), &agent_cfg, &cfg, None).unwrap();
        let s = &metrics.summary;
        let horizon = env.spec().max_episode_steps;
        let epochs_run = if s.reached { s.epochs_to_goal } else { cfg.epochs_max };
        summaries_ok &= s.steps_to_goal == s.episodes_to_goal * horizon;
        summaries_ok &= s.episodes_to_goal == epochs_run * cfg.episodes_per_epoch();
        checked += 1;
    }
    report(
        9,
        "bookkeeping identities",
        published_ok && summaries_ok,
        &format!("published arithmetic holds; {checked} run summaries satisfy steps/episodes/epochs ratios"),
    );
}
