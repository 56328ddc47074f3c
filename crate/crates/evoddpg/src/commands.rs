//! Command implementations behind the CLI: training runs, GA searches,
//! baseline-vs-tuned comparisons, checkpoint evaluation, and plot-data
//! export. Exit codes: 0 success (goal reached where applicable), 2 goal
//! not reached, 1 error.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agent::{AgentConfig, Hyperparams};
use crate::config::{save_hyperparams, Config};
use crate::env::{env_spec, make_env, EnvName};
use crate::error::{Error, Result};
use crate::ga::{cmp_fitness, default_gene_specs, ga_run, Chromosome, EvalOutcome, FitnessRecord};
use crate::rundir::{
    read_jsonl, save_checkpoint, RunDirectory, BEST_HYPERPARAMS_FILE, CHECKPOINT_FILE,
    GA_HISTORY_FILE, METRICS_FILE,
};
use crate::trainer::{evaluate, train_run, EpochRecord, RunSummary, TrainConfig};

/// Thread cap for parallel GA fitness evaluations.
pub const THREADS_ENV_VAR: &str = "EVODDPG_THREADS";

pub fn cmd_train(
    cfg: &Config,
    out_dir: &Path,
    hp_override: Option<Hyperparams>,
    quiet: bool,
) -> Result<i32> {
    cfg.validate()?;
    let hp = hp_override.unwrap_or_else(|| cfg.agent.hyperparams());
    hp.validate()?;
    let run = RunDirectory::create(out_dir)?;
    run.write_config_snapshot(&cfg.to_toml())?;

    let mut env = make_env(cfg.env.name);
    let mut writer = run.jsonl_writer(METRICS_FILE)?;
    let mut write_err: Option<Error> = None;
    let mut on_epoch = |record: &EpochRecord| {
        if !quiet {
            println!(
                "epoch {:>3}  episodes {:>6}  success {:.2}  median reward {:>7.1}",
                record.epoch,
                record.cumulative_episodes,
                record.eval_success_rate,
                record.eval_median_total_reward
            );
        }
        if let Err(e) = writer.write(record) {
            write_err.get_or_insert(e);
        }
    };
    let (metrics, agent) =
        train_run(env.as_mut(), hp, &cfg.agent.agent_config(), &cfg.train, Some(&mut on_epoch))?;
    if let Some(e) = write_err {
        return Err(e);
    }
    run.write_summary(&metrics.summary)?;
    save_checkpoint(&run.file(CHECKPOINT_FILE), cfg.env.name, &agent)?;
    if !quiet {
        println!(
            "{}: reached={} epochs_to_goal={}",
            cfg.env.name, metrics.summary.reached, metrics.summary.epochs_to_goal
        );
    }
    Ok(if metrics.summary.reached { 0 } else { 2 })
}

/// Train-run-backed fitness for one chromosome: epochs to goal with the
/// sentinel for unconverged or diverged runs.
pub fn train_fitness(
    env_name: EnvName,
    agent_cfg: &AgentConfig,
    train_cfg: &TrainConfig,
    chromosome: &Chromosome,
) -> EvalOutcome {
    let specs = default_gene_specs();
    let sentinel = EvalOutcome {
        epochs_to_goal: train_cfg.epochs_max + 1,
        final_success_rate: 0.0,
        final_median_reward: f64::NEG_INFINITY,
    };
    let hp = match chromosome.to_hyperparams(&specs) {
        Ok(hp) => hp,
        Err(_) => return sentinel,
    };
    let mut env = make_env(env_name);
    match train_run(env.as_mut(), hp, agent_cfg, train_cfg, None) {
        Ok((metrics, _)) => EvalOutcome {
            epochs_to_goal: metrics.summary.epochs_to_goal,
            final_success_rate: metrics.summary.final_success_rate,
            final_median_reward: metrics.summary.final_median_reward,
        },
        Err(_) => sentinel,
    }
}

fn with_thread_cap<T>(f: impl FnOnce() -> T + Send) -> T
where
    T: Send,
{
    let cap = std::env::var(THREADS_ENV_VAR).ok().and_then(|v| v.parse::<usize>().ok());
    match cap {
        Some(n) if n > 0 => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("thread pool")
            .install(f),
        _ => f(),
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GaSummary {
    pub best: FitnessRecord,
    pub evaluations: usize,
    pub best_hyperparams: Hyperparams,
}

pub fn cmd_ga(cfg: &Config, out_dir: &Path, quiet: bool) -> Result<i32> {
    cfg.validate()?;
    let run = RunDirectory::create(out_dir)?;
    run.write_config_snapshot(&cfg.to_toml())?;

    let specs = default_gene_specs();
    let mut writer = run.jsonl_writer(GA_HISTORY_FILE)?;
    let mut write_err: Option<Error> = None;
    let mut on_eval = |record: &FitnessRecord| {
        if !quiet {
            println!(
                "eval {:>4}  epochs {:>3}  success {:.2}  median reward {:>7.1}",
                record.eval_index,
                record.epochs_to_goal,
                record.final_success_rate,
                record.final_median_reward
            );
        }
        if let Err(e) = writer.write(record) {
            write_err.get_or_insert(e);
        }
    };
    let env_name = cfg.env.name;
    let agent_cfg = cfg.agent.agent_config();
    let train_cfg = cfg.train.clone();
    let fitness =
        move |c: &Chromosome| train_fitness(env_name, &agent_cfg, &train_cfg, c);
    let result = with_thread_cap(|| {
        ga_run(&fitness, &specs, &cfg.ga, cfg.train.seed, Some(&mut on_eval))
    })?;
    if let Some(e) = write_err {
        return Err(e);
    }

    let best_hp = result.best.chromosome.to_hyperparams(&specs)?;
    save_hyperparams(&run.file(BEST_HYPERPARAMS_FILE), &best_hp)?;
    run.write_summary(&GaSummary {
        best: result.best.clone(),
        evaluations: result.history.len(),
        best_hyperparams: best_hp,
    })?;
    if !quiet {
        println!(
            "best after {} evaluations: epochs_to_goal={} hyperparams={best_hp:?}",
            result.history.len(),
            result.best.epochs_to_goal
        );
    }
    Ok(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmAggregate {
    pub mean_epochs: f64,
    pub mean_episodes: f64,
    pub mean_steps: f64,
    pub mean_wall_time_s: f64,
    pub all_reached: bool,
    pub runs: Vec<RunSummary>,
}

fn aggregate(runs: Vec<RunSummary>) -> ArmAggregate {
    let n = runs.len() as f64;
    ArmAggregate {
        mean_epochs: runs.iter().map(|r| r.epochs_to_goal as f64).sum::<f64>() / n,
        mean_episodes: runs.iter().map(|r| r.episodes_to_goal as f64).sum::<f64>() / n,
        mean_steps: runs.iter().map(|r| r.steps_to_goal as f64).sum::<f64>() / n,
        mean_wall_time_s: runs.iter().map(|r| r.time_to_goal_s).sum::<f64>() / n,
        all_reached: runs.iter().all(|r| r.reached),
        runs,
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Reductions {
    pub epochs_pct: f64,
    pub episodes_pct: f64,
    pub steps_pct: f64,
    pub wall_time_pct: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub env: EnvName,
    pub n_seeds: usize,
    pub baseline: ArmAggregate,
    pub tuned: ArmAggregate,
    /// 100 * (baseline - tuned) / baseline; present only when both arms
    /// reached the goal in every run.
    pub percent_reduction: Option<Reductions>,
}

/// Run both arms over the same seed list and aggregate the summaries.
/// When `out_dir` is given, each run's summary is persisted under
/// `runs/<arm>-seed<k>/summary.json`.
pub fn compare_runs(
    env_name: EnvName,
    baseline_hp: Hyperparams,
    tuned_hp: Hyperparams,
    agent_cfg: &AgentConfig,
    train_cfg: &TrainConfig,
    n_seeds: usize,
    out_dir: Option<&Path>,
) -> Result<ComparisonReport> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be >= 1".into()));
    }
    baseline_hp.validate()?;
    tuned_hp.validate()?;
    let mut arms = Vec::new();
    for (arm_name, hp) in [("baseline", baseline_hp), ("tuned", tuned_hp)] {
        let mut summaries = Vec::new();
        for k in 0..n_seeds {
            let mut cfg = train_cfg.clone();
            cfg.seed = train_cfg.seed.wrapping_add(k as u64);
            let mut env = make_env(env_name);
            let (metrics, _) = train_run(env.as_mut(), hp, agent_cfg, &cfg, None)?;
            if let Some(dir) = out_dir {
                let run = RunDirectory::create(&dir.join("runs").join(format!("{arm_name}-seed{k}")))?;
                run.write_summary(&metrics.summary)?;
            }
            summaries.push(metrics.summary);
        }
        arms.push(aggregate(summaries));
    }
    let tuned = arms.pop().unwrap();
    let baseline = arms.pop().unwrap();
    let pct = |b: f64, t: f64| 100.0 * (b - t) / b;
    let percent_reduction = if baseline.all_reached && tuned.all_reached {
        Some(Reductions {
            epochs_pct: pct(baseline.mean_epochs, tuned.mean_epochs),
            episodes_pct: pct(baseline.mean_episodes, tuned.mean_episodes),
            steps_pct: pct(baseline.mean_steps, tuned.mean_steps),
            wall_time_pct: pct(baseline.mean_wall_time_s, tuned.mean_wall_time_s),
        })
    } else {
        None
    };
    Ok(ComparisonReport { env: env_name, n_seeds, baseline, tuned, percent_reduction })
}

fn render_cell(value: f64, reached: bool) -> String {
    if reached {
        format!("{value:.1}")
    } else {
        "not reached".to_string()
    }
}

/// Human-readable table with the better arm marked `*` per metric.
pub fn render_comparison(report: &ComparisonReport) -> String {
    let rows = [
        ("epochs", report.baseline.mean_epochs, report.tuned.mean_epochs),
        ("episodes", report.baseline.mean_episodes, report.tuned.mean_episodes),
        ("steps", report.baseline.mean_steps, report.tuned.mean_steps),
        ("wall time (s)", report.baseline.mean_wall_time_s, report.tuned.mean_wall_time_s),
    ];
    let mut out = format!(
        "env: {}  (mean over {} seeds)\n{:<16} {:>16} {:>16}\n",
        report.env, report.n_seeds, "metric", "baseline", "ga-tuned"
    );
    for (name, b, t) in rows {
        let (mb, mt) = if t < b { ("", "*") } else if b < t { ("*", "") } else { ("", "") };
        out.push_str(&format!(
            "{:<16} {:>16} {:>16}\n",
            name,
            format!("{}{}", render_cell(b, report.baseline.all_reached), mb),
            format!("{}{}", render_cell(t, report.tuned.all_reached), mt),
        ));
    }
    if let Some(red) = &report.percent_reduction {
        out.push_str(&format!(
            "reduction: epochs {:.1}%  episodes {:.1}%  steps {:.1}%  wall time {:.1}%\n",
            red.epochs_pct, red.episodes_pct, red.steps_pct, red.wall_time_pct
        ));
    } else {
        out.push_str("reduction: n/a (an arm did not reach the goal)\n");
    }
    out
}

pub fn cmd_compare(
    cfg: &Config,
    out_dir: &Path,
    baseline_hp: Hyperparams,
    tuned_hp: Hyperparams,
    n_seeds: usize,
    quiet: bool,
) -> Result<i32> {
    cfg.validate()?;
    let report = compare_runs(
        cfg.env.name,
        baseline_hp,
        tuned_hp,
        &cfg.agent.agent_config(),
        &cfg.train,
        n_seeds,
        Some(out_dir),
    )?;
    let run = RunDirectory::create(out_dir)?;
    run.write_config_snapshot(&cfg.to_toml())?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| Error::Config(format!("report serialization: {e}")))?;
    fs::write(run.file("report.json"), text)?;
    if !quiet {
        print!("{}", render_comparison(&report));
    }
    Ok(0)
}

pub fn cmd_eval(checkpoint: &Path, episodes: usize, seed: u64, quiet: bool) -> Result<i32> {
    let (env_name, agent) = crate::rundir::load_checkpoint(checkpoint)?;
    let mut env = make_env(env_name);
    let (success_rate, median_reward) = evaluate(env.as_mut(), &agent, episodes, seed)?;
    let out = serde_json::json!({
        "env": env_name.to_string(),
        "episodes": episodes,
        "seed": seed,
        "success_rate": success_rate,
        "median_total_reward": median_reward,
    });
    if !quiet {
        println!("{out}");
    }
    Ok(0)
}

pub fn cmd_describe_env(name: EnvName) -> Result<i32> {
    let spec = env_spec(name);
    println!("{}", toml::to_string_pretty(&spec).expect("spec serializes"));
    Ok(0)
}

/// Export plot data from run directories:
/// - `reward_vs_episodes.csv`: per-epoch cumulative episodes and median
///   evaluation reward per run (from `metrics.jsonl`).
/// - `ga_progress.csv`: best-so-far fitness per evaluation (from
///   `ga_history.jsonl`).
///
/// Directories missing both files produce a warning and a nonzero exit;
/// present data is still exported.
pub fn cmd_export_plots(run_dirs: &[PathBuf], out_dir: &Path) -> Result<i32> {
    if run_dirs.is_empty() {
        eprintln!("export-plots: no run directories given");
        return Ok(1);
    }
    fs::create_dir_all(out_dir)?;
    let mut reward_rows = vec!["method,epoch,cumulative_episodes,eval_median_total_reward".to_string()];
    let mut ga_rows = vec!["eval_index,best_epochs,best_success_rate,best_median_reward".to_string()];
    let mut any_reward = false;
    let mut any_ga = false;
    let mut missing = false;

    for dir in run_dirs {
        let method = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| dir.display().to_string());
        let metrics_path = dir.join(METRICS_FILE);
        let history_path = dir.join(GA_HISTORY_FILE);
        let mut found = false;
        if metrics_path.is_file() {
            found = true;
            any_reward = true;
            let records: Vec<EpochRecord> = read_jsonl(&metrics_path)?;
            for r in records {
                reward_rows.push(format!(
                    "{method},{},{},{}",
                    r.epoch, r.cumulative_episodes, r.eval_median_total_reward
                ));
            }
        }
        if history_path.is_file() {
            found = true;
            any_ga = true;
            let records: Vec<FitnessRecord> = read_jsonl(&history_path)?;
            let mut best: Option<EvalOutcome> = None;
            for r in records {
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
                            b
                        }
                    }
                });
                let b = best.unwrap();
                ga_rows.push(format!(
                    "{},{},{},{}",
                    r.eval_index, b.epochs_to_goal, b.final_success_rate, b.final_median_reward
                ));
            }
        }
        if !found {
            eprintln!("export-plots: warning: {} has no metrics or history files", dir.display());
            missing = true;
        }
    }

    if any_reward {
        fs::write(out_dir.join("reward_vs_episodes.csv"), reward_rows.join("\n") + "\n")?;
    }
    if any_ga {
        fs::write(out_dir.join("ga_progress.csv"), ga_rows.join("\n") + "\n")?;
    }
    Ok(if missing { 1 } else { 0 })
}

/// Re-scan a GA history file for its lexicographic minimum; used to check
/// the summary's best record against the persisted history.
pub fn best_of_history(path: &Path) -> Result<Option<FitnessRecord>> {
    let records: Vec<FitnessRecord> = read_jsonl(path)?;
    Ok(records.into_iter().min_by(|a, b| {
        cmp_fitness(
            &EvalOutcome {
                epochs_to_goal: a.epochs_to_goal,
                final_success_rate: a.final_success_rate,
                final_median_reward: a.final_median_reward,
            },
            &EvalOutcome {
                epochs_to_goal: b.epochs_to_goal,
                final_success_rate: b.final_success_rate,
                final_median_reward: b.final_median_reward,
            },
        )
    }))
}
