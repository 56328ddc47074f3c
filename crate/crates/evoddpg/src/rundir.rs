//! Run-directory persistence: line-delimited metrics and GA history,
//! JSON summaries, the resolved config snapshot, and the versioned binary
//! checkpoint.
//!
//! Checkpoint layout (all integers and doubles little-endian):
//! - magic `EVODDPG\0` (8 bytes), format version u32
//! - env name: u32 length + utf8 bytes
//! - hyperparams: 6 f64 (gamma, polyak, actor_lr, critic_lr, random_eps, noise_eps)
//! - 4 networks (actor, critic, actor_target, critic_target), each:
//!   u32 layer count, u32 layer sizes, u8 hidden activation, u8 output
//!   activation (0 relu, 1 tanh, 2 identity), then the flat f64 parameters
//! - normalizer: u32 dim, f64 count, dim f64 sums, dim f64 sums of squares,
//!   f64 clip range

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::Serialize;

use crate::agent::{Agent, Hyperparams, Normalizer};
use crate::env::{env_spec, EnvName};
use crate::error::{Error, Result};
use crate::nn::{Activation, Mlp};

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const GA_HISTORY_FILE: &str = "ga_history.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config";
pub const BEST_HYPERPARAMS_FILE: &str = "best_hyperparams.toml";

const MAGIC: &[u8; 8] = b"EVODDPG\0";
const VERSION: u32 = 1;

/// Handle on one run's output directory.
pub struct RunDirectory {
    path: PathBuf,
}

impl RunDirectory {
    pub fn create(path: &Path) -> Result<RunDirectory> {
        fs::create_dir_all(path)?;
        Ok(RunDirectory { path: path.to_path_buf() })
    }

    pub fn open(path: &Path) -> Result<RunDirectory> {
        if !path.is_dir() {
            return Err(Error::InvalidArgument(format!("{} is not a directory", path.display())));
        }
        Ok(RunDirectory { path: path.to_path_buf() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.path.join(name)
    }

    pub fn write_config_snapshot(&self, toml_text: &str) -> Result<()> {
        fs::write(self.file(CONFIG_FILE), toml_text)?;
        Ok(())
    }

    pub fn write_summary<T: Serialize>(&self, summary: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(summary)
            .map_err(|e| Error::Config(format!("summary serialization: {e}")))?;
        fs::write(self.file(SUMMARY_FILE), text)?;
        Ok(())
    }

    /// Append-only writer for one-record-per-line JSON files; a truncated
    /// file still parses up to the last complete line.
    pub fn jsonl_writer(&self, name: &str) -> Result<JsonlWriter> {
        let file = File::create(self.file(name))?;
        Ok(JsonlWriter { out: BufWriter::new(file) })
    }
}

pub struct JsonlWriter {
    out: BufWriter<File>,
}

impl JsonlWriter {
    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record)
            .map_err(|e| Error::Config(format!("record serialization: {e}")))?;
        self.out.write_all(line.as_bytes())?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Parse every line of a jsonl file into `T`.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path)?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::Config(format!("bad record in {}: {e}", path.display())))?,
        );
    }
    Ok(records)
}

fn activation_code(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Tanh => 1,
        Activation::Identity => 2,
    }
}

fn activation_from_code(code: u8) -> Result<Activation> {
    match code {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Identity),
        other => Err(Error::Checkpoint(format!("unknown activation code {other}"))),
    }
}

fn write_net<W: Write>(out: &mut W, net: &Mlp) -> Result<()> {
    out.write_u32::<LittleEndian>(net.layer_sizes().len() as u32)?;
    for &s in net.layer_sizes() {
        out.write_u32::<LittleEndian>(s as u32)?;
    }
    out.write_u8(activation_code(net.hidden_activation()))?;
    out.write_u8(activation_code(net.output_activation()))?;
    for p in net.flatten() {
        out.write_f64::<LittleEndian>(p)?;
    }
    Ok(())
}

fn read_net<R: Read>(input: &mut R) -> Result<Mlp> {
    let n = input.read_u32::<LittleEndian>()? as usize;
    if !(2..=64).contains(&n) {
        return Err(Error::Checkpoint(format!("implausible layer count {n}")));
    }
    let mut sizes = Vec::with_capacity(n);
    for _ in 0..n {
        sizes.push(input.read_u32::<LittleEndian>()? as usize);
    }
    let hidden = activation_from_code(input.read_u8()?)?;
    let output = activation_from_code(input.read_u8()?)?;
    let mut net = Mlp::init(&sizes, hidden, output, 0)
        .map_err(|e| Error::Checkpoint(format!("bad layer sizes: {e}")))?;
    let mut flat = vec![0.0; net.param_count()];
    for p in &mut flat {
        *p = input.read_f64::<LittleEndian>()?;
    }
    net.set_from_flat(&flat).expect("shape just constructed");
    Ok(net)
}

pub fn save_checkpoint(path: &Path, env_name: EnvName, agent: &Agent) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(VERSION)?;
    let name = env_name.to_string();
    out.write_u32::<LittleEndian>(name.len() as u32)?;
    out.write_all(name.as_bytes())?;
    for v in [
        agent.hp.gamma,
        agent.hp.polyak,
        agent.hp.actor_lr,
        agent.hp.critic_lr,
        agent.hp.random_eps,
        agent.hp.noise_eps,
    ] {
        out.write_f64::<LittleEndian>(v)?;
    }
    for net in [&agent.actor, &agent.critic, &agent.actor_target, &agent.critic_target] {
        write_net(&mut out, net)?;
    }
    let norm = &agent.normalizer;
    out.write_u32::<LittleEndian>(norm.dim() as u32)?;
    out.write_f64::<LittleEndian>(norm.count)?;
    for &s in &norm.sum {
        out.write_f64::<LittleEndian>(s)?;
    }
    for &s in &norm.sum_sq {
        out.write_f64::<LittleEndian>(s)?;
    }
    out.write_f64::<LittleEndian>(norm.clip_range)?;
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EnvName, Agent)> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display())));
    }
    let version = input.read_u32::<LittleEndian>()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let name_len = input.read_u32::<LittleEndian>()? as usize;
    if name_len > 256 {
        return Err(Error::Checkpoint("implausible env name length".into()));
    }
    let mut name_bytes = vec![0u8; name_len];
    input.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| Error::Checkpoint("env name is not utf8".into()))?;
    let env_name = EnvName::from_str(&name)?;
    let mut hp_values = [0.0f64; 6];
    for v in &mut hp_values {
        *v = input.read_f64::<LittleEndian>()?;
    }
    let hp = Hyperparams {
        gamma: hp_values[0],
        polyak: hp_values[1],
        actor_lr: hp_values[2],
        critic_lr: hp_values[3],
        random_eps: hp_values[4],
        noise_eps: hp_values[5],
    };
    let actor = read_net(&mut input)?;
    let critic = read_net(&mut input)?;
    let actor_target = read_net(&mut input)?;
    let critic_target = read_net(&mut input)?;
    let dim = input.read_u32::<LittleEndian>()? as usize;
    let count = input.read_f64::<LittleEndian>()?;
    let mut sum = vec![0.0; dim];
    for s in &mut sum {
        *s = input.read_f64::<LittleEndian>()?;
    }
    let mut sum_sq = vec![0.0; dim];
    for s in &mut sum_sq {
        *s = input.read_f64::<LittleEndian>()?;
    }
    let clip_range = input.read_f64::<LittleEndian>()?;
    let normalizer = Normalizer { count, sum, sum_sq, clip_range };
    let spec = env_spec(env_name);
    let agent = Agent::from_parts(
        &spec,
        hp,
        actor,
        critic,
        actor_target,
        critic_target,
        normalizer,
        crate::agent::AgentConfig::default().action_l2,
    )?;
    Ok((env_name, agent))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::env::make_env;
    use crate::trainer::{evaluate, train_run, TrainConfig};

    #[test]
    fn jsonl_round_trips_and_survives_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let run = RunDirectory::create(dir.path()).unwrap();
        let mut w = run.jsonl_writer("records.jsonl").unwrap();
        for i in 0..5 {
            w.write(&serde_json::json!({"i": i})).unwrap();
        }
        drop(w);
        let path = run.file("records.jsonl");
        let rows: Vec<serde_json::Value> = read_jsonl(&path).unwrap();
        assert_eq!(rows.len(), 5);

        // Truncate at a line boundary; the prefix still parses.
        let text = fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(3).map(|l| format!("{l}\n")).collect();
        fs::write(&path, cut).unwrap();
        let rows: Vec<serde_json::Value> = read_jsonl(&path).unwrap();
        assert_eq!(rows.len(), 3);
    }

    #[test]
    fn checkpoint_round_trips_evaluation_exactly() {
        let mut env = make_env(crate::env::EnvName::PointReach);
        let cfg = TrainConfig {
            epochs_max: 1,
            cycles_per_epoch: 2,
            episodes_per_cycle: 2,
            updates_per_cycle: 2,
            batch_size: 16,
            eval_episodes: 4,
            ..Default::default()
        };
        let agent_cfg = AgentConfig { hidden_sizes: vec![16, 16], ..Default::default() };
        let (metrics, agent) =
            train_run(env.as_mut(), Hyperparams::baseline(), &agent_cfg, &cfg, None).unwrap();

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CHECKPOINT_FILE);
        save_checkpoint(&path, crate::env::EnvName::PointReach, &agent).unwrap();
        let (env_name, loaded) = load_checkpoint(&path).unwrap();
        assert_eq!(env_name, crate::env::EnvName::PointReach);
        assert_eq!(loaded.actor.flatten(), agent.actor.flatten());
        assert_eq!(loaded.normalizer, agent.normalizer);

        // Greedy evaluation with a shared seed matches the original agent
        // bit for bit.
        let mut env2 = make_env(env_name);
        let a = evaluate(env.as_mut(), &agent, 6, 123).unwrap();
        let b = evaluate(env2.as_mut(), &loaded, 6, 123).unwrap();
        assert_eq!(a, b);
        let _ = metrics;
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        fs::write(&path, b"NOTACKPT____").unwrap();
        assert!(load_checkpoint(&path).is_err());
    }
}
