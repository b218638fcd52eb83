//! Policy-gradient search over LEC circuits.
//!
//! The agent writes a circuit one action at a time. Its observation is the
//! one-hot history so far, and the only reward is the circuit's score at the
//! end of the episode. A run stops once the greedy circuit has not changed
//! for `patience` consecutive epochs.

pub mod env;
pub mod net;
pub mod ppo;

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Estimate;
use crate::error::Result;
use crate::geometry::CodeKind;
use crate::rng::derive_seed;

pub use env::{BanditEnv, RewardEnv, SimEnv, SimEnvConfig};
pub use ppo::{greedy_circuit, ppo_epoch, Agent, BuildMode, EpochStats, PpoHyper};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DepthMode {
    Fixed(usize),
    /// Upper bound on depth; NULL tokens let the agent stop short of it.
    Variable(usize),
}

impl DepthMode {
    pub fn horizon(self) -> usize {
        match self {
            DepthMode::Fixed(h) | DepthMode::Variable(h) => h,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub mode: DepthMode,
    pub hyper: PpoHyper,
    pub patience: usize,
    pub max_epochs: usize,
    pub runs: usize,
    pub final_samples: usize,
    pub seed: u64,
    /// Cap on retraining stages in variable-depth mode.
    pub max_stages: usize,
}

impl TrainConfig {
    pub fn paper_defaults(kind: CodeKind) -> Self {
        let (mode, patience) = match kind {
            CodeKind::Toric2D => (DepthMode::Variable(40), 40),
            CodeKind::Ising2D => (DepthMode::Fixed(60), 80),
            CodeKind::Toric4D => (DepthMode::Fixed(60), 40),
        };
        TrainConfig {
            mode,
            hyper: PpoHyper::default(),
            patience,
            max_epochs: 2000,
            runs: 4,
            final_samples: 10_000,
            seed: 0,
            max_stages: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub run: usize,
    pub stage: usize,
    pub epoch: usize,
    pub horizon: usize,
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub circuit_hash: String,
}

/// Short stable fingerprint of a token sequence.
pub fn circuit_hash(env: &dyn RewardEnv, tokens: &[usize]) -> String {
    let mut h = Sha256::new();
    for &t in tokens {
        h.update(env.token_name(t).as_bytes());
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..8])
}

/// Everything needed to resume a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub run: usize,
    pub stage: usize,
    pub epoch: usize,
    pub horizon: usize,
    pub seed: u64,
    pub agent: Agent,
    pub saved: Vec<usize>,
    pub stable: usize,
    pub log: Vec<LogRow>,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec(self)?)?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Agent tokens of the final greedy circuit (prefix excluded).
    pub circuit: Vec<usize>,
    pub horizon: usize,
    pub epochs: usize,
    pub converged: bool,
    pub log: Vec<LogRow>,
}

fn stage_seed(seed: u64, run: usize, stage: usize) -> u64 {
    derive_seed(derive_seed(seed, run as u64), stage as u64)
}

/// One independent training run, including variable-depth restarts.
pub fn train_run(env: &dyn RewardEnv, cfg: &TrainConfig, run: usize, checkpoint: Option<&Path>) -> Result<RunOutcome> {
    let prefix = env.prefix().len();
    let fresh = |stage: usize, horizon: usize| {
        let agent = Agent::new(env.n_actions(), horizon, cfg.hyper.hidden, cfg.hyper.lr, stage_seed(cfg.seed, run, stage));
        let saved = greedy_circuit(&agent, env);
        Checkpoint { run, stage, epoch: 0, horizon, seed: cfg.seed, agent, saved, stable: 0, log: Vec::new() }
    };
    let mut st = match checkpoint.filter(|p| p.exists()) {
        Some(p) => Checkpoint::load(p)?,
        None => fresh(0, cfg.mode.horizon()),
    };
    let mut total_epochs = st.log.len();
    loop {
        let mut converged = false;
        while st.epoch < cfg.max_epochs {
            let seed = derive_seed(stage_seed(cfg.seed, run, st.stage), 1 + st.epoch as u64);
            let stats = ppo_epoch(&mut st.agent, env, &cfg.hyper, seed);
            st.epoch += 1;
            total_epochs += 1;
            let g = greedy_circuit(&st.agent, env);
            if g == st.saved {
                st.stable += 1;
            } else {
                st.saved = g;
                st.stable = 0;
            }
            st.log.push(LogRow {
                run,
                stage: st.stage,
                epoch: st.epoch,
                horizon: st.horizon,
                mean_reward: stats.mean_reward,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
                circuit_hash: circuit_hash(env, &st.saved),
            });
            if let Some(p) = checkpoint {
                if st.epoch % cfg.patience.max(1) == 0 {
                    st.save(p)?;
                }
            }
            if st.stable >= cfg.patience {
                converged = true;
                break;
            }
        }
        let h_opt = prefix + st.saved.len();
        let retrain = matches!(cfg.mode, DepthMode::Variable(_))
            && converged
            && h_opt < st.horizon
            && h_opt > prefix
            && st.stage + 1 < cfg.max_stages;
        if !retrain {
            if let Some(p) = checkpoint {
                st.save(p)?;
            }
            return Ok(RunOutcome {
                circuit: st.saved,
                horizon: st.horizon,
                epochs: total_epochs,
                converged,
                log: st.log,
            });
        }
        let log = std::mem::take(&mut st.log);
        st = fresh(st.stage + 1, h_opt);
        st.log = log;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainResult {
    pub runs: Vec<RunOutcome>,
    /// Final-evaluation estimate per run, all on the same seed.
    pub scores: Vec<Estimate>,
    pub best: usize,
    /// Greedy circuit of an untrained agent, scored the same way.
    pub initial: Estimate,
}

impl TrainResult {
    pub fn best_circuit(&self) -> &[usize] {
        &self.runs[self.best].circuit
    }
}

/// Independent runs, then a paired high-precision comparison of their circuits.
pub fn train(env: &dyn RewardEnv, cfg: &TrainConfig, checkpoint_dir: Option<&Path>) -> Result<TrainResult> {
    let mut runs = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let ck = checkpoint_dir.map(|d| d.join(format!("run{run}.json")));
        runs.push(train_run(env, cfg, run, ck.as_deref())?);
    }
    let eval_seed = derive_seed(cfg.seed, u64::MAX);
    let scores: Vec<Estimate> = runs
        .iter()
        .map(|r| env.evaluate(&r.circuit, cfg.final_samples, eval_seed))
        .collect();
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.mean > scores[best].mean {
            best = i;
        }
    }
    let untrained = Agent::new(env.n_actions(), cfg.mode.horizon(), cfg.hyper.hidden, cfg.hyper.lr, stage_seed(cfg.seed, 0, 0));
    let initial = env.evaluate(&greedy_circuit(&untrained, env), cfg.final_samples, eval_seed);
    Ok(TrainResult { runs, scores, best, initial })
}

/// Training log as CSV.
pub fn write_log<W: Write>(out: W, rows: &[LogRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
