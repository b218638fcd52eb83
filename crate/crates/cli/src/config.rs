//! Experiment configuration: a TOML file, then command-line overrides.
//!
//! Optional fields fall back to per-code defaults when the configuration is
//! resolved. The hash stamped into outputs is taken over the resolved form,
//! so a flag and the equivalent file entry give the same hash.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use lecbench::geometry::CodeKind;
use lecbench::rl::{DepthMode, PpoHyper, SimEnvConfig, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const OUT_ENV: &str = "LECBENCH_OUT";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Thread count; 0 uses every core.
    pub workers: usize,
    pub code: CodeSection,
    pub noise: NoiseSection,
    pub rl: RlSection,
    pub campaign: CampaignSection,
    pub hybrid: HybridSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeSection {
    pub kind: Option<CodeKind>,
    #[serde(rename = "L")]
    pub l: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub p_gate: f64,
    /// Ambient rate during training; classification also uses it.
    pub p_amb: Option<f64>,
    /// Reward samples per circuit during training.
    pub samples: Option<usize>,
    /// LEC rounds per reward sample.
    pub rounds: Option<usize>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        NoiseSection { p_gate: 1e-3, p_amb: None, samples: None, rounds: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub horizon: Option<usize>,
    pub variable_depth: Option<bool>,
    pub stop_action: bool,
    pub patience: Option<usize>,
    pub max_epochs: usize,
    pub runs: usize,
    pub final_samples: usize,
    pub max_stages: usize,
    pub episodes_per_epoch: usize,
    pub minibatch_episodes: usize,
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
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for RlSection {
    fn default() -> Self {
        let h = PpoHyper::default();
        RlSection {
            horizon: None,
            variable_depth: None,
            stop_action: false,
            patience: None,
            max_epochs: 2000,
            runs: 4,
            final_samples: 10_000,
            max_stages: 10,
            episodes_per_epoch: h.episodes_per_epoch,
            minibatch_episodes: h.minibatch_episodes,
            passes: h.passes,
            clip: h.clip,
            lr: h.lr,
            gamma: h.gamma,
            gae_lambda: h.gae_lambda,
            ent_coef: h.ent_coef,
            vf_coef: h.vf_coef,
            max_grad_norm: h.max_grad_norm,
            normalize_advantage: h.normalize_advantage,
            hidden: h.hidden,
            checkpoint_dir: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampaignSection {
    pub sizes: Option<Vec<usize>>,
    pub p_amb: Option<Vec<f64>>,
    pub samples: usize,
    pub max_rounds: u64,
    /// LEC cycles before residual classification.
    pub cycles: usize,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection { sizes: None, p_amb: None, samples: 1000, max_rounds: 100_000, cycles: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub p_unit: f64,
    pub total_time: usize,
    pub target: f64,
    pub samples: usize,
    pub max_global: usize,
    pub max_lec: usize,
}

impl Default for HybridSection {
    fn default() -> Self {
        HybridSection { p_unit: 1e-3, total_time: 2000, target: 0.15, samples: 5000, max_global: 20, max_lec: 20 }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Fills per-code defaults and checks ranges. `fallback` supplies the
    /// code when neither the file nor a flag names one.
    pub fn resolve(mut self, fallback: Option<CodeKind>) -> anyhow::Result<Self> {
        let kind = self.code.kind.or(fallback).unwrap_or(CodeKind::Toric2D);
        self.code.kind = Some(kind);
        let env = SimEnvConfig::paper_defaults(kind, self.noise.p_gate);
        let train = TrainConfig::paper_defaults(kind);
        self.code.l.get_or_insert(env.l);
        self.noise.p_amb.get_or_insert(env.noise.p_amb);
        self.noise.samples.get_or_insert(env.samples);
        self.noise.rounds.get_or_insert(env.rounds);
        self.rl.horizon.get_or_insert(train.mode.horizon());
        self.rl.variable_depth.get_or_insert(matches!(train.mode, DepthMode::Variable(_)));
        self.rl.patience.get_or_insert(train.patience);
        self.campaign.sizes.get_or_insert_with(|| match kind {
            CodeKind::Toric2D => vec![4, 6, 8],
            CodeKind::Ising2D => vec![4, 6, 8],
            CodeKind::Toric4D => vec![2, 4],
        });
        self.campaign.p_amb.get_or_insert_with(|| match kind {
            CodeKind::Toric2D => vec![0.01, 0.02, 0.04],
            CodeKind::Ising2D => vec![0.15, 0.2, 0.25, 0.3],
            CodeKind::Toric4D => vec![0.02, 0.03, 0.04],
        });
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> anyhow::Result<()> {
        let prob = |name: &str, p: f64| -> anyhow::Result<()> {
            if !(0.0..=1.0).contains(&p) || p.is_nan() {
                bail!("{name} must lie in [0, 1], got {p}");
            }
            Ok(())
        };
        prob("noise.p_gate", self.noise.p_gate)?;
        prob("noise.p_amb", self.noise.p_amb.unwrap_or(0.0))?;
        prob("hybrid.p_unit", self.hybrid.p_unit)?;
        for &p in self.campaign.p_amb.as_deref().unwrap_or(&[]) {
            prob("campaign.p_amb", p)?;
        }
        let positive = [
            ("noise.samples", self.noise.samples.unwrap_or(1)),
            ("noise.rounds", self.noise.rounds.unwrap_or(1)),
            ("rl.horizon", self.rl.horizon.unwrap_or(1)),
            ("rl.runs", self.rl.runs),
            ("rl.max_epochs", self.rl.max_epochs),
            ("rl.final_samples", self.rl.final_samples),
            ("rl.episodes_per_epoch", self.rl.episodes_per_epoch),
            ("rl.minibatch_episodes", self.rl.minibatch_episodes),
            ("rl.passes", self.rl.passes),
            ("rl.hidden", self.rl.hidden),
            ("campaign.samples", self.campaign.samples),
            ("hybrid.total_time", self.hybrid.total_time),
            ("hybrid.samples", self.hybrid.samples),
        ];
        for (name, v) in positive {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        if self.campaign.max_rounds == 0 {
            bail!("campaign.max_rounds must be positive");
        }
        if self.rl.minibatch_episodes > self.rl.episodes_per_epoch {
            bail!("rl.minibatch_episodes exceeds rl.episodes_per_epoch");
        }
        if !(self.hybrid.target > 0.0 && self.hybrid.target <= 1.0) {
            bail!("hybrid.target must lie in (0, 1]");
        }
        if self.campaign.sizes.as_ref().is_some_and(|s| s.is_empty())
            || self.campaign.p_amb.as_ref().is_some_and(|s| s.is_empty())
        {
            bail!("campaign grids must be non-empty");
        }
        Ok(())
    }

    pub fn kind(&self) -> CodeKind {
        self.code.kind.expect("resolved config names a code")
    }

    pub fn l(&self) -> usize {
        self.code.l.expect("resolved config has L")
    }

    pub fn env_config(&self) -> SimEnvConfig {
        let mut env = SimEnvConfig::paper_defaults(self.kind(), self.noise.p_gate);
        env.l = self.l();
        env.noise.p_amb = self.noise.p_amb.expect("resolved");
        env.samples = self.noise.samples.expect("resolved");
        env.rounds = self.noise.rounds.expect("resolved");
        env.variable_depth = self.rl.variable_depth.expect("resolved");
        env.stop_action = self.rl.stop_action;
        env
    }

    pub fn train_config(&self) -> TrainConfig {
        let r = &self.rl;
        let h = r.horizon.expect("resolved");
        TrainConfig {
            mode: if r.variable_depth.expect("resolved") { DepthMode::Variable(h) } else { DepthMode::Fixed(h) },
            hyper: PpoHyper {
                episodes_per_epoch: r.episodes_per_epoch,
                minibatch_episodes: r.minibatch_episodes,
                passes: r.passes,
                clip: r.clip,
                lr: r.lr,
                gamma: r.gamma,
                gae_lambda: r.gae_lambda,
                ent_coef: r.ent_coef,
                vf_coef: r.vf_coef,
                max_grad_norm: r.max_grad_norm,
                normalize_advantage: r.normalize_advantage,
                hidden: r.hidden,
            },
            patience: r.patience.expect("resolved"),
            max_epochs: r.max_epochs,
            runs: r.runs,
            final_samples: r.final_samples,
            seed: self.seed,
            max_stages: r.max_stages,
        }
    }

    /// First 8 bytes of SHA-256 over the resolved TOML, hex encoded.
    /// Output location and thread count do not affect results and are left out.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = None;
        c.workers = 0;
        c.rl.checkpoint_dir = None;
        let text = toml::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..8])
    }

    pub fn header(&self) -> String {
        format!("# config={} seed={}\n", self.hash(), self.seed)
    }

    /// Flag, then file, then `LECBENCH_OUT`, then `./out`.
    pub fn out_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("[noise]\np_gat = 0.1\n").is_err());
        assert!(toml::from_str::<ExperimentConfig>("bogus = 1\n").is_err());
    }

    #[test]
    fn defaults_follow_code() {
        let c = ExperimentConfig::default().resolve(Some(CodeKind::Ising2D)).unwrap();
        assert_eq!(c.l(), 8);
        assert_eq!(c.noise.p_amb, Some(0.40));
        assert_eq!(c.rl.horizon, Some(60));
        assert_eq!(c.rl.variable_depth, Some(false));
        let c = ExperimentConfig::default().resolve(None).unwrap();
        assert_eq!(c.kind(), CodeKind::Toric2D);
        assert_eq!(c.rl.variable_depth, Some(true));
    }

    #[test]
    fn hash_ignores_output_location() {
        let a = ExperimentConfig::default().resolve(None).unwrap();
        let mut b = a.clone();
        b.output_dir = Some("elsewhere".into());
        b.workers = 3;
        assert_eq!(a.hash(), b.hash());
        b.seed = 9;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn file_round_trip() {
        let text = "seed = 5\n[code]\nkind = \"toric4d\"\nL = 4\n[noise]\np_gate = 0.0001\n";
        let c: ExperimentConfig = toml::from_str(text).unwrap();
        assert_eq!(c.code.kind, Some(CodeKind::Toric4D));
        assert_eq!(c.seed, 5);
    }
}
