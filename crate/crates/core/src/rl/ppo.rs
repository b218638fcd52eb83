//! Rollouts and the clipped-surrogate update.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, WeightedIndex};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::env::RewardEnv;
use super::net::{clip_grad_norm, log_softmax, Adam, Mlp};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoHyper {
    pub episodes_per_epoch: usize,
    pub minibatch_episodes: usize,
    /// Passes over the epoch's minibatches.
    pub passes: usize,
    pub clip: f64,
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub ent_coef: f64,
    pub vf_coef: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    pub hidden: usize,
}

impl Default for PpoHyper {
    fn default() -> Self {
        PpoHyper {
            episodes_per_epoch: 500,
            minibatch_episodes: 50,
            passes: 1,
            clip: 0.2,
            lr: 3e-4,
            gamma: 1.0,
            gae_lambda: 0.95,
            ent_coef: 0.0,
            vf_coef: 0.5,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            hidden: 128,
        }
    }
}

/// Separate policy and value networks plus their shared optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub policy: Mlp,
    pub value: Mlp,
    pub adam: Adam,
    n_actions: usize,
    horizon: usize,
}

impl Agent {
    pub fn new(n_actions: usize, horizon: usize, hidden: usize, lr: f64, seed: u64) -> Self {
        let mut rng = stream(seed, 0);
        let input = n_actions * horizon;
        let policy = Mlp::orthogonal(&[input, hidden, hidden, n_actions], 0.01, &mut rng);
        let value = Mlp::orthogonal(&[input, hidden, hidden, 1], 1.0, &mut rng);
        let adam = Adam::new(policy.params().len() + value.params().len(), lr);
        Agent { policy, value, adam, n_actions, horizon }
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Total circuit length the observation can hold, prefix included.
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn param_count(&self) -> usize {
        self.policy.params().len() + self.value.params().len()
    }
}

/// One-hot history, flattened step by step: entry `step * |A| + token`.
pub fn observation(history: &[usize], n_actions: usize) -> Vec<usize> {
    history.iter().enumerate().map(|(step, &t)| step * n_actions + t).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BuildMode {
    Sample,
    Greedy,
}

/// Lowest index among the maxima.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<usize>,
    pub action: usize,
    pub logp: f64,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    /// Raw agent choices, NULL and STOP included.
    pub choices: Vec<usize>,
    pub steps: Vec<Transition>,
}

impl Episode {
    /// Chosen tokens with NULL and STOP removed.
    pub fn circuit(&self, env: &dyn RewardEnv) -> Vec<usize> {
        let skip = [env.null_token(), env.stop_token()];
        self.choices.iter().copied().filter(|t| !skip.contains(&Some(*t))).collect()
    }
}

/// Builds one circuit autoregressively after the environment's fixed prefix.
pub fn rollout<R: Rng + ?Sized>(agent: &Agent, env: &dyn RewardEnv, mode: BuildMode, rng: &mut R) -> Episode {
    let mut history = env.prefix();
    let mut ep = Episode { choices: Vec::new(), steps: Vec::new() };
    while history.len() < agent.horizon {
        let obs = observation(&history, agent.n_actions);
        let logits = agent.policy.output(&obs);
        let logp = log_softmax(&logits);
        let action = match mode {
            BuildMode::Greedy => argmax(&logits),
            BuildMode::Sample => {
                let w = WeightedIndex::new(logp.iter().map(|l| l.exp())).expect("softmax weights are positive");
                w.sample(rng)
            }
        };
        let value = agent.value.output(&obs)[0];
        ep.steps.push(Transition { obs, action, logp: logp[action], value });
        ep.choices.push(action);
        history.push(action);
        if env.stop_token() == Some(action) {
            break;
        }
    }
    ep
}

/// Greedy circuit (prefix excluded, NULL/STOP stripped).
pub fn greedy_circuit(agent: &Agent, env: &dyn RewardEnv) -> Vec<usize> {
    rollout(agent, env, BuildMode::Greedy, &mut stream(0, 0)).circuit(env)
}

/// Per-step advantages and value targets for a terminal-reward episode.
pub fn gae(values: &[f64], reward: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    let n = values.len();
    let mut adv = vec![0.0; n];
    let mut last = 0.0;
    for h in (0..n).rev() {
        let (r, next) = if h + 1 == n { (reward, 0.0) } else { (0.0, values[h + 1]) };
        let delta = r + gamma * next - values[h];
        last = delta + gamma * lambda * last;
        adv[h] = last;
    }
    let ret = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, ret)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub obs: Vec<usize>,
    pub action: usize,
    pub old_logp: f64,
    pub advantage: f64,
    pub ret: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
}

impl LossTerms {
    pub fn total(&self, hyper: &PpoHyper) -> f64 {
        self.policy + hyper.vf_coef * self.value - hyper.ent_coef * self.entropy
    }

    fn add(&mut self, o: &LossTerms) {
        self.policy += o.policy;
        self.value += o.value;
        self.entropy += o.entropy;
        self.clip_fraction += o.clip_fraction;
    }
}

const CHUNK: usize = 64;

/// Minibatch loss terms and the gradient of the total loss with respect to
/// the policy parameters followed by the value parameters.
pub fn loss_and_grad(agent: &Agent, batch: &[Sample], hyper: &PpoHyper) -> (LossTerms, Vec<f64>) {
    let b = batch.len() as f64;
    let (mu, sd) = if hyper.normalize_advantage && batch.len() > 1 {
        let mu = batch.iter().map(|s| s.advantage).sum::<f64>() / b;
        let var = batch.iter().map(|s| (s.advantage - mu).powi(2)).sum::<f64>() / (b - 1.0);
        (mu, var.sqrt() + 1e-8)
    } else {
        (0.0, 1.0)
    };
    let np = agent.policy.params().len();
    let parts: Vec<(LossTerms, Vec<f64>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![0.0; agent.param_count()];
            let (gp, gv) = grad.split_at_mut(np);
            let mut terms = LossTerms::default();
            for s in chunk {
                let adv = (s.advantage - mu) / sd;
                let trace = agent.policy.forward(&s.obs);
                let logp = log_softmax(trace.last().unwrap());
                let p: Vec<f64> = logp.iter().map(|l| l.exp()).collect();
                let ent = -p.iter().zip(&logp).map(|(a, l)| a * l).sum::<f64>();
                let ratio = (logp[s.action] - s.old_logp).exp();
                let clipped = ratio.clamp(1.0 - hyper.clip, 1.0 + hyper.clip);
                let (s1, s2) = (ratio * adv, clipped * adv);
                terms.policy -= s1.min(s2) / b;
                terms.entropy += ent / b;
                if (ratio - 1.0).abs() > hyper.clip {
                    terms.clip_fraction += 1.0 / b;
                }
                let dlogp = if s1 <= s2 { -adv * ratio / b } else { 0.0 };
                let dz: Vec<f64> = (0..p.len())
                    .map(|j| {
                        let onehot = if j == s.action { 1.0 } else { 0.0 };
                        dlogp * (onehot - p[j]) + hyper.ent_coef * p[j] * (logp[j] + ent) / b
                    })
                    .collect();
                agent.policy.backward(&s.obs, &trace, &dz, gp);

                let vtrace = agent.value.forward(&s.obs);
                let v = vtrace.last().unwrap()[0];
                terms.value += (s.ret - v).powi(2) / b;
                let dv = hyper.vf_coef * 2.0 * (v - s.ret) / b;
                agent.value.backward(&s.obs, &vtrace, &[dv], gv);
            }
            (terms, grad)
        })
        .collect();
    let mut terms = LossTerms::default();
    let mut grad = vec![0.0; agent.param_count()];
    for (t, g) in parts {
        terms.add(&t);
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    (terms, grad)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub mean_reward: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub clip_fraction: f64,
    /// True when a non-finite loss rolled the update back.
    pub aborted: bool,
}

/// Collects one epoch of episodes and runs the clipped-surrogate update.
pub fn ppo_epoch(agent: &mut Agent, env: &dyn RewardEnv, hyper: &PpoHyper, seed: u64) -> EpochStats {
    let episodes: Vec<Episode> = (0..hyper.episodes_per_epoch)
        .into_par_iter()
        .map(|e| rollout(agent, env, BuildMode::Sample, &mut stream(seed, e as u64)))
        .collect();
    let circuits: Vec<Vec<usize>> = episodes.iter().map(|e| e.circuit(env)).collect();
    let rewards = env.rewards(&circuits, derive_seed(seed, u64::MAX));
    let mean_reward = rewards.iter().sum::<f64>() / rewards.len().max(1) as f64;

    let mut samples = Vec::new();
    for (ep, &r) in episodes.iter().zip(&rewards) {
        let values: Vec<f64> = ep.steps.iter().map(|t| t.value).collect();
        let (adv, ret) = gae(&values, r, hyper.gamma, hyper.gae_lambda);
        for (i, t) in ep.steps.iter().enumerate() {
            samples.push(Sample {
                obs: t.obs.clone(),
                action: t.action,
                old_logp: t.logp,
                advantage: adv[i],
                ret: ret[i],
            });
        }
    }

    let backup = agent.clone();
    let batches = (hyper.episodes_per_epoch / hyper.minibatch_episodes.max(1)).max(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut rng = stream(seed, u64::MAX - 1);
    let mut sum = LossTerms::default();
    let mut updates = 0.0;
    for _ in 0..hyper.passes {
        order.shuffle(&mut rng);
        let size = samples.len().div_ceil(batches);
        for idx in order.chunks(size.max(1)) {
            let batch: Vec<Sample> = idx.iter().map(|&i| samples[i].clone()).collect();
            let (terms, mut grad) = loss_and_grad(agent, &batch, hyper);
            if !terms.total(hyper).is_finite() || grad.iter().any(|g| !g.is_finite()) {
                *agent = backup;
                return EpochStats {
                    mean_reward,
                    policy_loss: f64::NAN,
                    value_loss: f64::NAN,
                    entropy: f64::NAN,
                    clip_fraction: f64::NAN,
                    aborted: true,
                };
            }
            clip_grad_norm(&mut grad, hyper.max_grad_norm);
            let Agent { policy, value, adam, .. } = agent;
            adam.step(&mut [policy.params_mut(), value.params_mut()], &grad);
            sum.add(&terms);
            updates += 1.0;
        }
    }
    EpochStats {
        mean_reward,
        policy_loss: sum.policy / updates,
        value_loss: sum.value / updates,
        entropy: sum.entropy / updates,
        clip_fraction: sum.clip_fraction / updates,
        aborted: false,
    }
}
