//! Reward environments for circuit search.

use std::sync::Arc;

use rayon::prelude::*;

use crate::actions::{enumerate_actions_with, ActionId, ActionLibrary, ActionSet};
use crate::engine::{reward_samples, Estimate, Evaluator};
use crate::error::Result;
use crate::frame::NoiseParams;
use crate::geometry::{CodeGeometry, CodeKind};
use crate::rng::derive_seed;

/// Scores whole token sequences. Sequences never contain the forced prefix
/// or padding tokens; those are handled by the environment.
pub trait RewardEnv: Sync {
    fn n_actions(&self) -> usize;
    /// Tokens fixed at the start of every circuit (not chosen by the agent).
    fn prefix(&self) -> Vec<usize> {
        Vec::new()
    }
    fn null_token(&self) -> Option<usize> {
        None
    }
    fn stop_token(&self) -> Option<usize> {
        None
    }
    fn token_name(&self, token: usize) -> String {
        token.to_string()
    }
    /// One reward per circuit; circuit `i` uses streams derived from `(seed, i)`.
    fn rewards(&self, circuits: &[Vec<usize>], seed: u64) -> Vec<f64>;
    /// High-precision estimate for comparing finished runs.
    fn evaluate(&self, circuit: &[usize], samples: usize, seed: u64) -> Estimate;
}

/// Monte Carlo environment: reward of a circuit after `rounds` LEC rounds.
pub struct SimEnv {
    lib: ActionLibrary,
    eval: Evaluator,
    noise: NoiseParams,
    samples: usize,
    rounds: usize,
    prefix: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimEnvConfig {
    pub kind: CodeKind,
    pub l: usize,
    pub noise: NoiseParams,
    pub samples: usize,
    pub rounds: usize,
    pub variable_depth: bool,
    pub stop_action: bool,
}

impl SimEnvConfig {
    /// Environment defaults used for circuit optimization.
    pub fn paper_defaults(kind: CodeKind, p_gate: f64) -> Self {
        let (l, p_amb, samples, rounds) = match kind {
            CodeKind::Toric2D => (8, 0.02, 100, 5),
            CodeKind::Ising2D => (8, 0.40, 100, 1),
            CodeKind::Toric4D => (4, 0.03, 50, 2),
        };
        SimEnvConfig {
            kind,
            l,
            noise: NoiseParams::new(p_amb, p_gate),
            samples,
            rounds,
            variable_depth: kind == CodeKind::Toric2D,
            stop_action: false,
        }
    }
}

impl SimEnv {
    pub fn new(cfg: &SimEnvConfig) -> Result<Self> {
        cfg.noise.validate()?;
        let geom = Arc::new(CodeGeometry::new(cfg.kind, cfg.l)?);
        let set = enumerate_actions_with(cfg.kind, cfg.variable_depth, cfg.stop_action);
        let lib = ActionLibrary::new(geom.clone(), set)?;
        let prefix = match cfg.kind {
            CodeKind::Toric2D => vec![lib.set().token_of(ActionId::SyndromeExtraction).unwrap()],
            _ => Vec::new(),
        };
        Ok(SimEnv {
            lib,
            eval: Evaluator::new(geom)?,
            noise: cfg.noise,
            samples: cfg.samples,
            rounds: cfg.rounds,
            prefix,
        })
    }

    pub fn library(&self) -> &ActionLibrary {
        &self.lib
    }

    pub fn set(&self) -> &ActionSet {
        self.lib.set()
    }

    fn full(&self, circuit: &[usize]) -> Vec<usize> {
        let mut t = self.prefix.clone();
        t.extend_from_slice(circuit);
        t
    }

    fn score(&self, circuit: &[usize], samples: usize, seed: u64) -> Vec<f64> {
        let compiled = self.lib.compile_tokens(&self.full(circuit));
        reward_samples(&compiled, &self.eval, &self.noise, samples, self.rounds, seed)
    }
}

impl RewardEnv for SimEnv {
    fn n_actions(&self) -> usize {
        self.lib.set().len()
    }

    fn prefix(&self) -> Vec<usize> {
        self.prefix.clone()
    }

    fn null_token(&self) -> Option<usize> {
        self.lib.set().token_of(ActionId::Null)
    }

    fn stop_token(&self) -> Option<usize> {
        self.lib.set().token_of(ActionId::Stop)
    }

    fn token_name(&self, token: usize) -> String {
        self.lib.set().get(token).name()
    }

    fn rewards(&self, circuits: &[Vec<usize>], seed: u64) -> Vec<f64> {
        circuits
            .par_iter()
            .enumerate()
            .map(|(i, c)| {
                let v = self.score(c, self.samples, derive_seed(seed, i as u64));
                v.iter().sum::<f64>() / v.len() as f64
            })
            .collect()
    }

    fn evaluate(&self, circuit: &[usize], samples: usize, seed: u64) -> Estimate {
        Estimate::from_values(&self.score(circuit, samples, seed))
    }
}

/// One-step bandit: reward 1 when the first chosen token is `best`.
#[derive(Clone, Debug)]
pub struct BanditEnv {
    pub n_actions: usize,
    pub best: usize,
}

impl RewardEnv for BanditEnv {
    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn rewards(&self, circuits: &[Vec<usize>], _seed: u64) -> Vec<f64> {
        circuits.iter().map(|c| if c.first() == Some(&self.best) { 1.0 } else { 0.0 }).collect()
    }

    fn evaluate(&self, circuit: &[usize], samples: usize, _seed: u64) -> Estimate {
        let r = if circuit.first() == Some(&self.best) { 1.0 } else { 0.0 };
        Estimate { mean: r, stderr: 0.0, n: samples }
    }
}
