//! Final-recovery decoders.

pub mod blossom;
pub mod mwpm;

use crate::actions::{compile_action, ActionId, CompiledAction};
use crate::error::{LecError, Result};
use crate::frame::{NoiseParams, PauliFrame};
use crate::geometry::{CodeGeometry, CodeKind, LogicalOutcome};
use crate::rng::stream;

pub use mwpm::{decode_mwpm, min_weight_perfect_matching, DefectSet};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecoveryResult {
    pub correction_x: Vec<u32>,
    pub correction_z: Vec<u32>,
    pub outcome: LogicalOutcome,
}

impl RecoveryResult {
    pub fn is_trivial(&self) -> bool {
        self.outcome == LogicalOutcome::Trivial
    }
}

/// Majority vote over Ising spins. A tie counts as a failure.
pub fn majority_vote(geom: &CodeGeometry, x_err: &[bool]) -> Result<RecoveryResult> {
    if geom.kind() != CodeKind::Ising2D {
        return Err(LecError::GeometryMismatch("majority vote needs the Ising code".into()));
    }
    let flipped: Vec<u32> = (0..x_err.len() as u32).filter(|&q| x_err[q as usize]).collect();
    let n = x_err.len();
    if 2 * flipped.len() < n {
        Ok(RecoveryResult {
            correction_x: flipped,
            correction_z: Vec::new(),
            outcome: LogicalOutcome::Trivial,
        })
    } else {
        Ok(RecoveryResult {
            correction_x: (0..n as u32).filter(|&q| !x_err[q as usize]).collect(),
            correction_z: Vec::new(),
            outcome: LogicalOutcome::Logical(vec![true, false]),
        })
    }
}

/// Minimum number of full sweep cycles in the 4D recovery.
pub const TOOM_RECOVERY_ROUNDS: usize = 50;

/// Noiseless 4D recovery. One cycle sweeps configurations 1..=6 along
/// direction 0, then again along direction 2.
#[derive(Clone, Debug)]
pub struct ToomRecovery {
    cycle: Vec<CompiledAction>,
    rounds: usize,
}

impl ToomRecovery {
    pub fn new(geom: &CodeGeometry, rounds: usize) -> Result<Self> {
        if geom.kind() != CodeKind::Toric4D {
            return Err(LecError::GeometryMismatch("sweep recovery needs the 4D toric code".into()));
        }
        if rounds < TOOM_RECOVERY_ROUNDS {
            return Err(LecError::InvalidParameter(format!(
                "recovery needs at least {TOOM_RECOVERY_ROUNDS} rounds, got {rounds}"
            )));
        }
        let mut cycle = Vec::with_capacity(12);
        for dir in [0, 2] {
            for c in 1..=6 {
                cycle.push(compile_action(ActionId::Toom { config: Some(c), dir }, geom, &[])?);
            }
        }
        Ok(ToomRecovery { cycle, rounds })
    }

    /// Runs the sweeps in place. Stops early once a full cycle changes nothing.
    pub fn run(&self, frame: &mut PauliFrame) {
        let noise = NoiseParams::noiseless();
        let mut rng = stream(0, 0);
        for _ in 0..self.rounds {
            let (x0, z0) = (frame.x.clone(), frame.z.clone());
            for a in &self.cycle {
                a.apply(frame, &noise, &mut rng);
            }
            if frame.x == x0 && frame.z == z0 {
                break;
            }
        }
    }

    /// Per-sample failure after recovery: any syndrome or logical parity left.
    pub fn failures(&self, geom: &CodeGeometry, frame: &PauliFrame) -> Vec<bool> {
        let mut f = frame.clone();
        self.run(&mut f);
        let words = f.words();
        let mut bad = vec![0u64; words];
        for plane in [f.z_syndrome_words(geom), f.x_syndrome_words(geom), f.logical_words(geom)] {
            for (i, w) in plane.iter().enumerate() {
                bad[i % words] |= w;
            }
        }
        (0..f.samples()).map(|s| bad[s / 64] >> (s % 64) & 1 == 1).collect()
    }
}

/// Single-row wrapper around [`ToomRecovery`].
pub fn perfect_toom_recovery(geom: &CodeGeometry, x_err: &[bool], z_err: &[bool], rounds: usize) -> Result<RecoveryResult> {
    let rec = ToomRecovery::new(geom, rounds)?;
    let mut f = PauliFrame::from_rows(geom, &[x_err.to_vec()], &[z_err.to_vec()])?;
    rec.run(&mut f);
    let (x, z) = (f.x_row(0), f.z_row(0));
    let correction_x = (0..x.len() as u32).filter(|&q| x[q as usize] != x_err[q as usize]).collect();
    let correction_z = (0..z.len() as u32).filter(|&q| z[q as usize] != z_err[q as usize]).collect();
    let syn = geom.compute_syndromes(&x, &z);
    let outcome = if syn.is_zero() {
        geom.logical_parities(&x, &z)
    } else {
        // residual errors are failures even without a logical flip
        let mut bits = vec![true];
        bits.extend(geom.logical_z_supports().iter().map(|_| false));
        LogicalOutcome::Logical(bits)
    };
    Ok(RecoveryResult {
        correction_x,
        correction_z,
        outcome,
    })
}
