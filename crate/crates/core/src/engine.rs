//! LEC rounds, reward estimation and memory lifetimes.
//!
//! Samples run in batches of 64 (one frame word). Batch `b` draws from its own
//! stream derived from `(seed, b)`, so results do not depend on the thread
//! count.

use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::actions::CompiledCircuit;
use crate::decoder::{mwpm::mwpm_fails, ToomRecovery, TOOM_RECOVERY_ROUNDS};
use crate::error::Result;
use crate::frame::{apply_ambient, NoiseParams, PauliFrame};
use crate::geometry::{CodeGeometry, CodeKind};
use crate::rng::stream;

pub const BATCH: usize = 64;

/// One LEC round: ambient noise, fresh ancillas, then the circuit.
pub fn run_lec_round<R: Rng + ?Sized>(
    frame: &mut PauliFrame,
    circuit: &CompiledCircuit,
    noise: &NoiseParams,
    rng: &mut R,
) {
    apply_ambient(frame, noise.p_amb, rng);
    frame.clear_ancillas();
    circuit.apply(frame, noise, rng);
}

/// Code-specific final recovery and scoring.
#[derive(Clone, Debug)]
pub struct Evaluator {
    geom: Arc<CodeGeometry>,
    toom: Option<ToomRecovery>,
}

impl Evaluator {
    pub fn new(geom: Arc<CodeGeometry>) -> Result<Self> {
        let toom = match geom.kind() {
            CodeKind::Toric4D => Some(ToomRecovery::new(&geom, TOOM_RECOVERY_ROUNDS)?),
            _ => None,
        };
        Ok(Evaluator { geom, toom })
    }

    pub fn geometry(&self) -> &Arc<CodeGeometry> {
        &self.geom
    }

    fn flipped_counts(&self, frame: &PauliFrame) -> Vec<usize> {
        frame.error_weights()
    }

    /// Per-sample reward: decoding success for the toric codes, fraction of
    /// unflipped spins for the Ising code.
    pub fn scores(&self, frame: &PauliFrame) -> Vec<f64> {
        match self.geom.kind() {
            CodeKind::Ising2D => {
                let n = self.geom.data_count() as f64;
                self.flipped_counts(frame).iter().map(|&c| 1.0 - c as f64 / n).collect()
            }
            _ => self.failures(frame).iter().map(|&f| if f { 0.0 } else { 1.0 }).collect(),
        }
    }

    /// Per-sample decoding failure, evaluated without touching `frame`.
    pub fn failures(&self, frame: &PauliFrame) -> Vec<bool> {
        match self.geom.kind() {
            CodeKind::Ising2D => {
                let n = self.geom.data_count();
                self.flipped_counts(frame).iter().map(|&c| 2 * c >= n).collect()
            }
            CodeKind::Toric2D => {
                let weights = frame.error_weights();
                (0..frame.samples())
                    .map(|s| {
                        weights[s] > 0
                            && mwpm_fails(&self.geom, &frame.x_row(s), &frame.z_row(s))
                                .expect("syndromes of a valid frame pair up")
                    })
                    .collect()
            }
            CodeKind::Toric4D => self
                .toom
                .as_ref()
                .expect("4D evaluator carries a sweep decoder")
                .failures(&self.geom, frame),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Estimate { mean: 0.0, stderr: 0.0, n };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate { mean, stderr: (var / n as f64).sqrt(), n }
    }

    /// Normal-approximation 95% interval.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }
}

fn batch_sizes(n: usize) -> Vec<usize> {
    (0..n.div_ceil(BATCH)).map(|b| BATCH.min(n - b * BATCH)).collect()
}

/// Per-sample scores after `rounds` LEC rounds from an error-free start.
pub fn reward_samples(
    circuit: &CompiledCircuit,
    eval: &Evaluator,
    noise: &NoiseParams,
    samples: usize,
    rounds: usize,
    seed: u64,
) -> Vec<f64> {
    let geom = eval.geometry();
    batch_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(b, size)| {
            let mut rng = stream(seed, b as u64);
            let mut frame = PauliFrame::new(geom, size);
            for _ in 0..rounds {
                run_lec_round(&mut frame, circuit, noise, &mut rng);
            }
            eval.scores(&frame)
        })
        .flatten()
        .collect()
}

pub fn compute_reward(
    circuit: &CompiledCircuit,
    eval: &Evaluator,
    noise: &NoiseParams,
    samples: usize,
    rounds: usize,
    seed: u64,
) -> Estimate {
    Estimate::from_values(&reward_samples(circuit, eval, noise, samples, rounds, seed))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Lifetimes {
    pub rounds: Vec<u64>,
    /// Samples still alive at the cap; their entry equals the cap.
    pub censored: Vec<bool>,
}

impl Lifetimes {
    pub fn censored_count(&self) -> usize {
        self.censored.iter().filter(|&&c| c).count()
    }

    pub fn estimate(&self) -> Estimate {
        let v: Vec<f64> = self.rounds.iter().map(|&t| t as f64).collect();
        Estimate::from_values(&v)
    }
}

/// Memory lifetime: first round whose recovery (on a copy) fails.
pub fn run_lifetime(
    circuit: &CompiledCircuit,
    eval: &Evaluator,
    noise: &NoiseParams,
    max_rounds: u64,
    samples: usize,
    seed: u64,
) -> Lifetimes {
    let geom = eval.geometry();
    let parts: Vec<(Vec<u64>, Vec<bool>)> = batch_sizes(samples)
        .into_par_iter()
        .enumerate()
        .map(|(b, size)| {
            let mut rng = stream(seed, b as u64);
            let mut frame = PauliFrame::new(geom, size);
            let mut life = vec![0u64; size];
            let mut alive = size;
            let mut round = 0;
            while alive > 0 && round < max_rounds {
                round += 1;
                run_lec_round(&mut frame, circuit, noise, &mut rng);
                for (s, failed) in eval.failures(&frame).into_iter().enumerate() {
                    if failed && life[s] == 0 {
                        life[s] = round;
                        alive -= 1;
                    }
                }
            }
            let censored = life.iter().map(|&t| t == 0).collect();
            let rounds = life.iter().map(|&t| if t == 0 { max_rounds } else { t }).collect();
            (rounds, censored)
        })
        .collect();
    let mut out = Lifetimes::default();
    for (r, c) in parts {
        out.rounds.extend(r);
        out.censored.extend(c);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{baseline_circuit, enumerate_actions, ActionLibrary};

    fn setup(kind: CodeKind, l: usize) -> (ActionLibrary, Evaluator) {
        let g = Arc::new(CodeGeometry::new(kind, l).unwrap());
        let lib = ActionLibrary::new(g.clone(), enumerate_actions(kind, false)).unwrap();
        (lib, Evaluator::new(g).unwrap())
    }

    #[test]
    fn noiseless_reward_is_one() {
        for (kind, l) in [(CodeKind::Toric2D, 4), (CodeKind::Ising2D, 4), (CodeKind::Toric4D, 2)] {
            let (lib, eval) = setup(kind, l);
            let c = lib.compile(&baseline_circuit(kind, l)).unwrap();
            let r = compute_reward(&c, &eval, &NoiseParams::noiseless(), 100, 2, 1);
            assert_eq!(r.mean, 1.0);
        }
    }

    #[test]
    fn half_flip_rate_kills_immediately() {
        for (kind, l) in [(CodeKind::Toric2D, 4), (CodeKind::Ising2D, 4)] {
            let (_, eval) = setup(kind, l);
            let noise = NoiseParams::new(0.5, 0.0);
            let lt = run_lifetime(&CompiledCircuit::default(), &eval, &noise, 100, 200, 3);
            // a fresh random state fails with probability about one half per round
            assert!(lt.rounds.iter().all(|&t| t >= 1));
            assert!(lt.estimate().mean < 3.0);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (lib, eval) = setup(CodeKind::Toric2D, 4);
        let c = lib.compile(&baseline_circuit(CodeKind::Toric2D, 4)).unwrap();
        let noise = NoiseParams::new(0.05, 1e-3);
        let a = reward_samples(&c, &eval, &noise, 150, 3, 9);
        let b = reward_samples(&c, &eval, &noise, 150, 3, 9);
        assert_eq!(a, b);
        let la = run_lifetime(&c, &eval, &noise, 1000, 70, 4);
        let lb = run_lifetime(&c, &eval, &noise, 1000, 70, 4);
        assert_eq!(la, lb);
    }

    #[test]
    fn estimate_stats() {
        let e = Estimate::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }
}
