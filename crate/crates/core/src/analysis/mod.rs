//! Lifetime campaigns, effective-distance fits, residual classification and
//! the hybrid global/LEC decoding scan.

pub mod classify;
pub mod fit;
pub mod hybrid;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::actions::{ActionLibrary, LecCircuit};
use crate::actions::enumerate_actions;
use crate::engine::{run_lifetime, Evaluator};
use crate::error::{invalid, Result};
use crate::frame::{check_probability, NoiseParams};
use crate::geometry::{CodeGeometry, CodeKind};
use crate::rng::derive_seed;

pub use classify::{classify_residuals, residual_frame, ResidualClass, ResidualCounts};
pub use fit::{fit_deff, fit_linear, fit_self_correcting, levenberg_marquardt, FitModel, FitResult, LmOptions};
pub use hybrid::{hybrid_scan, HybridConfig, HybridResult};

/// Threshold ambient rates used to express lifetimes as `p_th / p_amb`.
pub fn p_threshold(kind: CodeKind) -> f64 {
    match kind {
        CodeKind::Toric2D => 0.12,
        CodeKind::Ising2D => 0.50,
        CodeKind::Toric4D => 0.045,
    }
}

/// Wilson score interval for `k` successes in `n` trials at 95%.
pub fn binomial_ci95(k: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.96f64;
    let nf = n as f64;
    let p = k as f64 / nf;
    let denom = 1.0 + z * z / nf;
    let centre = (p + z * z / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LifetimePoint {
    pub p_amb: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
    pub censored: usize,
}

impl LifetimePoint {
    pub fn fully_censored(&self) -> bool {
        self.censored == self.n
    }

    /// 95% interval as mean ± 1.96 stderr.
    pub fn ci95(&self) -> (f64, f64) {
        (self.mean - 1.96 * self.stderr, self.mean + 1.96 * self.stderr)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LifetimeDataset {
    pub kind: CodeKind,
    pub circuit: String,
    pub l: usize,
    pub p_gate: f64,
    pub points: Vec<LifetimePoint>,
}

impl LifetimeDataset {
    pub fn rows(&self) -> Vec<LifetimeRow> {
        self.points
            .iter()
            .map(|p| LifetimeRow {
                code: self.kind.name().to_string(),
                l: self.l,
                p_gate: self.p_gate,
                p_amb: p.p_amb,
                mean_t: p.mean,
                stderr: p.stderr,
                n: p.n,
                censored: p.censored,
            })
            .collect()
    }

    /// Groups CSV rows by (code, L, p_gate), keeping file order inside a group.
    pub fn from_rows(rows: &[LifetimeRow], circuit: &str) -> Result<Vec<LifetimeDataset>> {
        let mut groups: BTreeMap<(CodeKind, usize, u64), Vec<LifetimePoint>> = BTreeMap::new();
        for r in rows {
            if r.n == 0 {
                return Err(invalid(format!("lifetime row at p_amb={} has no samples", r.p_amb)));
            }
            let kind: CodeKind = r.code.parse()?;
            groups.entry((kind, r.l, r.p_gate.to_bits())).or_default().push(LifetimePoint {
                p_amb: r.p_amb,
                mean: r.mean_t,
                stderr: r.stderr,
                n: r.n,
                censored: r.censored,
            });
        }
        Ok(groups
            .into_iter()
            .map(|((kind, l, pg), points)| LifetimeDataset {
                kind,
                circuit: circuit.to_string(),
                l,
                p_gate: f64::from_bits(pg),
                points,
            })
            .collect())
    }
}

/// One line of the lifetimes CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeRow {
    pub code: String,
    #[serde(rename = "L")]
    pub l: usize,
    pub p_gate: f64,
    pub p_amb: f64,
    #[serde(rename = "mean_T")]
    pub mean_t: f64,
    pub stderr: f64,
    pub n: usize,
    pub censored: usize,
}

#[derive(Clone, Debug)]
pub struct CampaignConfig {
    pub sizes: Vec<usize>,
    pub p_gate: f64,
    pub p_amb: Vec<f64>,
    pub samples: usize,
    pub max_rounds: u64,
    pub seed: u64,
}

/// Memory lifetimes of one circuit over a grid of lattice sizes and ambient
/// rates. The circuit's action names are recompiled for every size.
pub fn run_lifetime_campaign(circuit: &LecCircuit, circuit_id: &str, cfg: &CampaignConfig) -> Result<Vec<LifetimeDataset>> {
    if cfg.sizes.is_empty() || cfg.p_amb.is_empty() {
        return Err(invalid("campaign grids must be non-empty"));
    }
    if cfg.samples == 0 || cfg.max_rounds == 0 {
        return Err(invalid("campaign needs at least one sample and one round"));
    }
    check_probability("p_gate", cfg.p_gate)?;
    for &p in &cfg.p_amb {
        check_probability("p_amb", p)?;
    }
    circuit.validate()?;
    let kind = circuit.kind;
    let mut out = Vec::with_capacity(cfg.sizes.len());
    for (li, &l) in cfg.sizes.iter().enumerate() {
        let geom = Arc::new(CodeGeometry::new(kind, l)?);
        let lib = ActionLibrary::new(geom.clone(), enumerate_actions(kind, false))?;
        let compiled = lib.compile(&LecCircuit::new(kind, l, circuit.actions.clone()))?;
        let eval = Evaluator::new(geom)?;
        let mut points = Vec::with_capacity(cfg.p_amb.len());
        for (pi, &p_amb) in cfg.p_amb.iter().enumerate() {
            let seed = derive_seed(derive_seed(cfg.seed, li as u64), pi as u64);
            let noise = NoiseParams::new(p_amb, cfg.p_gate);
            let lt = run_lifetime(&compiled, &eval, &noise, cfg.max_rounds, cfg.samples, seed);
            let est = lt.estimate();
            points.push(LifetimePoint {
                p_amb,
                mean: est.mean,
                stderr: est.stderr,
                n: est.n,
                censored: lt.censored_count(),
            });
        }
        out.push(LifetimeDataset {
            kind,
            circuit: circuit_id.to_string(),
            l,
            p_gate: cfg.p_gate,
            points,
        });
    }
    Ok(out)
}

/// Serializes rows with a header; `#` lines written beforehand are skipped by [`read_csv`].
pub fn write_csv<W: Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read, T: for<'de> Deserialize<'de>>(input: R) -> Result<Vec<T>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let mut rows = Vec::new();
    for r in rdr.deserialize() {
        rows.push(r?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_interval_contains_estimate() {
        let (lo, hi) = binomial_ci95(30, 100);
        assert!(lo < 0.3 && 0.3 < hi);
        assert!((lo - 0.2189).abs() < 1e-3 && (hi - 0.3958).abs() < 1e-3);
        assert_eq!(binomial_ci95(0, 10).0, 0.0);
    }

    #[test]
    fn rows_round_trip() {
        let ds = LifetimeDataset {
            kind: CodeKind::Ising2D,
            circuit: "toom".into(),
            l: 4,
            p_gate: 1e-4,
            points: vec![
                LifetimePoint { p_amb: 0.1, mean: 12.5, stderr: 0.5, n: 100, censored: 0 },
                LifetimePoint { p_amb: 0.2, mean: 3.0, stderr: 0.1, n: 100, censored: 0 },
            ],
        };
        let mut buf = b"# config=abc seed=1\n".to_vec();
        write_csv(&mut buf, &ds.rows()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("code,L,p_gate,p_amb,mean_T,stderr,n,censored"));
        let rows: Vec<LifetimeRow> = read_csv(&buf[..]).unwrap();
        assert_eq!(LifetimeDataset::from_rows(&rows, "toom").unwrap(), vec![ds]);
    }

    #[test]
    fn campaign_rejects_empty_grid() {
        let c = LecCircuit::new(CodeKind::Toric2D, 4, Vec::new());
        let cfg = CampaignConfig { sizes: vec![4], p_gate: 0.0, p_amb: vec![], samples: 10, max_rounds: 10, seed: 0 };
        assert!(run_lifetime_campaign(&c, "none", &cfg).is_err());
    }

    #[test]
    fn half_rate_dies_in_first_rounds() {
        let c = LecCircuit::new(CodeKind::Ising2D, 4, Vec::new());
        let cfg = CampaignConfig { sizes: vec![4], p_gate: 0.0, p_amb: vec![0.5], samples: 200, max_rounds: 100, seed: 3 };
        let ds = run_lifetime_campaign(&c, "none", &cfg).unwrap();
        assert!(ds[0].points[0].mean < 3.0);
        assert_eq!(ds[0].points[0].censored, 0);
    }
}
