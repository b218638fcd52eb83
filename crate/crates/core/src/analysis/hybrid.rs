//! Original vs hybrid decoding on the 2D toric code.
//!
//! `T` unit steps each add independent X and Z flips at rate `p_unit`. The
//! original protocol runs `N` perfect-syndrome matching decodings at steps
//! `ceil(k T / (N + 1))`, `k = 1..=N`; the hybrid protocol also applies the
//! LEC circuit `M` times on the same kind of grid. When both land on one step
//! the LEC circuit runs first. A final perfect decoding scores the memory.

use rayon::prelude::*;
use serde::Serialize;

use crate::actions::CompiledCircuit;
use crate::decoder::decode_mwpm;
use crate::engine::BATCH;
use crate::error::{invalid, LecError, Result};
use crate::frame::{apply_ambient, check_probability, NoiseParams, PauliFrame};
use crate::geometry::{CodeGeometry, CodeKind, LogicalOutcome};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug)]
pub struct HybridConfig {
    pub p_unit: f64,
    pub p_gate: f64,
    pub total_time: usize,
    pub target: f64,
    pub samples: usize,
    pub max_global: usize,
    pub max_lec: usize,
    pub seed: u64,
}

impl HybridConfig {
    pub fn new(total_time: usize, samples: usize, seed: u64) -> Self {
        HybridConfig {
            p_unit: 1e-3,
            p_gate: 0.0,
            total_time,
            target: 0.15,
            samples,
            max_global: 20,
            max_lec: 20,
            seed,
        }
    }
}

/// One line of the hybrid CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HybridRow {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub p_unit: f64,
    pub protocol: String,
    #[serde(rename = "N_global")]
    pub n_global: usize,
    #[serde(rename = "N_LEC")]
    pub n_lec: usize,
    #[serde(rename = "P_L")]
    pub p_l: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HybridResult {
    pub rows: Vec<HybridRow>,
    /// `None` when the target is not reached within the scan bounds.
    pub original_min: Option<usize>,
    pub hybrid_min: Option<usize>,
    /// LEC count minimising `P_L` at `hybrid_min`.
    pub optimal_lec: Option<usize>,
}

/// Steps `ceil(k T / (n + 1))` for `k = 1..=n`.
pub fn insertion_steps(total: usize, n: usize) -> Vec<usize> {
    (1..=n).map(|k| (k * total).div_ceil(n + 1)).collect()
}

fn global_decode(geom: &CodeGeometry, f: &mut PauliFrame) -> Result<()> {
    let weights = f.error_weights();
    for s in 0..f.samples() {
        if weights[s] == 0 {
            continue;
        }
        let r = decode_mwpm(geom, &f.x_row(s), &f.z_row(s))?;
        for q in r.correction_x {
            let v = f.x_bit(q as usize, s);
            f.set_x(q as usize, s, !v);
        }
        for q in r.correction_z {
            let v = f.z_bit(q as usize, s);
            f.set_z(q as usize, s, !v);
        }
    }
    Ok(())
}

/// Logical error rate after `T` steps with `n_global` decodings and `n_lec`
/// circuit applications. Seeds depend on `n_global` but not `n_lec`, so
/// `n_lec = 0` reproduces the original protocol sample by sample.
pub fn logical_rate(
    geom: &CodeGeometry,
    circuit: &CompiledCircuit,
    cfg: &HybridConfig,
    n_global: usize,
    n_lec: usize,
) -> Result<f64> {
    let t = cfg.total_time;
    let mut globals = vec![0usize; t + 1];
    for s in insertion_steps(t, n_global) {
        globals[s] += 1;
    }
    let mut lecs = vec![0usize; t + 1];
    for s in insertion_steps(t, n_lec) {
        lecs[s] += 1;
    }
    let gate_noise = NoiseParams::new(0.0, cfg.p_gate);
    let seed = derive_seed(cfg.seed, n_global as u64);
    let batches = cfg.samples.div_ceil(BATCH);
    let fails: Vec<usize> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<usize> {
            let size = BATCH.min(cfg.samples - b * BATCH);
            let mut rng = stream(seed, b as u64);
            let mut f = PauliFrame::new(geom, size);
            for step in 1..=t {
                apply_ambient(&mut f, cfg.p_unit, &mut rng);
                for _ in 0..lecs[step] {
                    f.clear_ancillas();
                    circuit.apply(&mut f, &gate_noise, &mut rng);
                }
                for _ in 0..globals[step] {
                    global_decode(geom, &mut f)?;
                }
            }
            let mut bad = 0;
            for s in 0..size {
                let r = decode_mwpm(geom, &f.x_row(s), &f.z_row(s))?;
                if r.outcome != LogicalOutcome::Trivial {
                    bad += 1;
                }
            }
            Ok(bad)
        })
        .collect::<Result<_>>()?;
    Ok(fails.iter().sum::<usize>() as f64 / cfg.samples as f64)
}

/// 1D scan over `N_global` for the original protocol and 2D scan over
/// `(N_global, N_LEC)` for the hybrid one. Both scans stop at the first
/// `N_global` that reaches `P_L < target`.
pub fn hybrid_scan(geom: &CodeGeometry, circuit: &CompiledCircuit, cfg: &HybridConfig) -> Result<HybridResult> {
    if geom.kind() != CodeKind::Toric2D {
        return Err(LecError::GeometryMismatch("hybrid decoding needs the 2D toric code".into()));
    }
    check_probability("p_unit", cfg.p_unit)?;
    check_probability("p_gate", cfg.p_gate)?;
    if cfg.samples == 0 || cfg.total_time == 0 {
        return Err(invalid("hybrid scan needs samples and a positive total time"));
    }
    if !(cfg.target > 0.0 && cfg.target <= 1.0) {
        return Err(invalid(format!("target P_L must lie in (0, 1], got {}", cfg.target)));
    }
    let row = |protocol: &str, n_global, n_lec, p_l| HybridRow {
        l: geom.l(),
        t: cfg.total_time,
        p_unit: cfg.p_unit,
        protocol: protocol.to_string(),
        n_global,
        n_lec,
        p_l,
    };
    let mut rows = Vec::new();
    let mut original_min = None;
    for n in 0..=cfg.max_global {
        let p = logical_rate(geom, circuit, cfg, n, 0)?;
        rows.push(row("original", n, 0, p));
        if p < cfg.target {
            original_min = Some(n);
            break;
        }
    }
    let mut hybrid_min = None;
    let mut optimal_lec = None;
    for n in 0..=cfg.max_global {
        let mut best = (f64::INFINITY, 0);
        for m in 0..=cfg.max_lec {
            let p = logical_rate(geom, circuit, cfg, n, m)?;
            rows.push(row("hybrid", n, m, p));
            if p < best.0 {
                best = (p, m);
            }
        }
        if best.0 < cfg.target {
            hybrid_min = Some(n);
            optimal_lec = Some(best.1);
            break;
        }
    }
    Ok(HybridResult { rows, original_min, hybrid_min, optimal_lec })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_grid() {
        assert_eq!(insertion_steps(10, 0), Vec::<usize>::new());
        assert_eq!(insertion_steps(10, 1), vec![5]);
        assert_eq!(insertion_steps(10, 3), vec![3, 5, 8]);
        assert_eq!(insertion_steps(2000, 4), vec![400, 800, 1200, 1600]);
    }

    #[test]
    fn noiseless_needs_no_decoding() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 4).unwrap();
        let mut cfg = HybridConfig::new(50, 64, 1);
        cfg.p_unit = 0.0;
        cfg.max_lec = 2;
        let r = hybrid_scan(&g, &CompiledCircuit::default(), &cfg).unwrap();
        assert_eq!(r.original_min, Some(0));
        assert_eq!(r.hybrid_min, Some(0));
    }

    #[test]
    fn zero_lec_matches_original() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 4).unwrap();
        let mut cfg = HybridConfig::new(60, 128, 2);
        cfg.p_unit = 0.01;
        let a = logical_rate(&g, &CompiledCircuit::default(), &cfg, 2, 0).unwrap();
        let b = logical_rate(&g, &CompiledCircuit::default(), &cfg, 2, 0).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
