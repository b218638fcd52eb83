//! Classification of the errors left after LEC cycles.
//!
//! Per sample, with precedence logical > uncorrectable > correctable:
//!
//! * no syndrome and no logical flip: a stabilizer, dropped;
//! * the perfect final decoder leaves a logical flip: [`ResidualClass::Logical`];
//! * some single removal action, repeated up to `4L` times with perfect gates
//!   and fresh syndromes, clears every syndrome without a logical flip:
//!   [`ResidualClass::Correctable`];
//! * otherwise [`ResidualClass::Uncorrectable`].

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::actions::{canonical_directions, compile_action, ActionId, ActionSet, CompiledAction, CompiledCircuit};
use crate::decoder::{decode_mwpm, ToomRecovery, TOOM_RECOVERY_ROUNDS};
use crate::engine::{run_lec_round, BATCH};
use crate::error::{LecError, Result};
use crate::frame::{NoiseParams, PauliFrame};
use crate::geometry::{CodeGeometry, CodeKind, LogicalOutcome};
use crate::rng::stream;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ResidualClass {
    Correctable,
    Uncorrectable,
    Logical,
}

impl fmt::Display for ResidualClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResidualClass::Correctable => "correctable",
            ResidualClass::Uncorrectable => "uncorrectable",
            ResidualClass::Logical => "logical",
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ResidualCounts {
    pub correctable: usize,
    pub uncorrectable: usize,
    pub logical: usize,
    /// Samples with no residual error up to stabilizers; not classified.
    pub trivial: usize,
    /// Per-sample class, `None` for trivial samples.
    pub classes: Vec<Option<ResidualClass>>,
}

impl ResidualCounts {
    pub fn total(&self) -> usize {
        self.correctable + self.uncorrectable + self.logical
    }

    pub fn count(&self, c: ResidualClass) -> usize {
        match c {
            ResidualClass::Correctable => self.correctable,
            ResidualClass::Uncorrectable => self.uncorrectable,
            ResidualClass::Logical => self.logical,
        }
    }

    pub fn rows(&self, kind: CodeKind, circuit: &str, cycles: usize) -> Vec<ClassRow> {
        [ResidualClass::Correctable, ResidualClass::Uncorrectable, ResidualClass::Logical]
            .into_iter()
            .map(|c| ClassRow {
                code: kind.name().to_string(),
                circuit: circuit.to_string(),
                cycles,
                class: c.to_string(),
                count: self.count(c),
                total: self.total(),
            })
            .collect()
    }
}

/// One line of the classes CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClassRow {
    pub code: String,
    pub circuit: String,
    pub cycles: usize,
    pub class: String,
    pub count: usize,
    pub total: usize,
}

/// Frame after `cycles` noisy LEC rounds from an error-free start.
pub fn residual_frame(
    geom: &CodeGeometry,
    circuit: &CompiledCircuit,
    noise: &NoiseParams,
    cycles: usize,
    samples: usize,
    seed: u64,
) -> PauliFrame {
    let mut out = PauliFrame::new(geom, samples);
    for (b, start) in (0..samples).step_by(BATCH).enumerate() {
        let size = BATCH.min(samples - start);
        let mut rng = stream(seed, b as u64);
        let mut f = PauliFrame::new(geom, size);
        for _ in 0..cycles {
            run_lec_round(&mut f, circuit, noise, &mut rng);
        }
        for s in 0..size {
            out.set_x_row(start + s, &f.x_row(s)).expect("row lengths match");
            out.set_z_row(start + s, &f.z_row(s)).expect("row lengths match");
        }
    }
    out
}

/// Per-sample mask of "some syndrome or logical parity is set".
fn dirty(geom: &CodeGeometry, f: &PauliFrame, with_logicals: bool) -> Vec<bool> {
    let words = f.words();
    let mut bad = vec![0u64; words];
    let mut planes = vec![f.z_syndrome_words(geom), f.x_syndrome_words(geom)];
    if with_logicals {
        planes.push(f.logical_words(geom));
    }
    for plane in planes {
        for (i, w) in plane.iter().enumerate() {
            bad[i % words] |= w;
        }
    }
    (0..f.samples()).map(|s| bad[s / 64] >> (s % 64) & 1 == 1).collect()
}

/// True when the perfect final decoder would leave a logical flip.
fn logical_failures(geom: &CodeGeometry, frame: &PauliFrame) -> Result<Vec<bool>> {
    match geom.kind() {
        CodeKind::Toric2D => (0..frame.samples())
            .map(|s| Ok(decode_mwpm(geom, &frame.x_row(s), &frame.z_row(s))?.outcome != LogicalOutcome::Trivial))
            .collect(),
        CodeKind::Ising2D => {
            let n = geom.data_count();
            Ok(frame.error_weights().iter().map(|&c| 2 * c >= n).collect())
        }
        CodeKind::Toric4D => {
            // only a syndrome-free recovered state can carry a logical flip
            let mut f = frame.clone();
            ToomRecovery::new(geom, TOOM_RECOVERY_ROUNDS)?.run(&mut f);
            let syn = dirty(geom, &f, false);
            let all = dirty(geom, &f, true);
            Ok(syn.iter().zip(&all).map(|(&s, &a)| !s && a).collect())
        }
    }
}

/// Classifies every sample of `frame` against the removal actions of `set`.
pub fn classify_residuals(geom: &Arc<CodeGeometry>, frame: &PauliFrame, set: &ActionSet) -> Result<ResidualCounts> {
    if set.kind() != geom.kind() {
        return Err(LecError::GeometryMismatch(format!(
            "action set for {} used with {} lattice",
            set.kind(),
            geom.kind()
        )));
    }
    let order = canonical_directions(geom.dim());
    let extraction = match geom.kind() {
        CodeKind::Toric2D => Some(compile_action(ActionId::SyndromeExtraction, geom, &order)?),
        _ => None,
    };
    let removals: Vec<CompiledAction> = set
        .actions()
        .iter()
        .filter(|a| a.is_removal())
        .map(|a| compile_action(a.id, geom, &order))
        .collect::<Result<_>>()?;

    let nonzero = dirty(geom, frame, true);
    let logical = logical_failures(geom, frame)?;
    let has_syndrome = dirty(geom, frame, false);
    let mut cleared = vec![false; frame.samples()];
    let noise = NoiseParams::noiseless();
    let mut rng = stream(0, 0);
    for action in &removals {
        let mut f = frame.clone();
        for _ in 0..4 * geom.l() {
            if let Some(se) = &extraction {
                se.apply(&mut f, &noise, &mut rng);
            }
            action.apply(&mut f, &noise, &mut rng);
        }
        for (c, d) in cleared.iter_mut().zip(dirty(geom, &f, true)) {
            *c |= !d;
        }
    }

    let mut out = ResidualCounts::default();
    for s in 0..frame.samples() {
        let class = if logical[s] {
            Some(ResidualClass::Logical)
        } else if !nonzero[s] || !has_syndrome[s] {
            None
        } else if cleared[s] {
            Some(ResidualClass::Correctable)
        } else {
            Some(ResidualClass::Uncorrectable)
        };
        match class {
            Some(ResidualClass::Correctable) => out.correctable += 1,
            Some(ResidualClass::Uncorrectable) => out.uncorrectable += 1,
            Some(ResidualClass::Logical) => out.logical += 1,
            None => out.trivial += 1,
        }
        out.classes.push(class);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::actions::{enumerate_actions, ActionCategory, RemovalClass};

    fn d1_only(kind: CodeKind) -> ActionSet {
        let full = enumerate_actions(kind, false);
        let keep: Vec<ActionId> = full
            .actions()
            .iter()
            .filter(|a| {
                !a.is_removal()
                    || matches!(a.category, ActionCategory::Removal { class: RemovalClass::Distance(1), .. })
            })
            .map(|a| a.id)
            .collect();
        full.subset(&keep)
    }

    fn one_sample(g: &CodeGeometry, xs: &[u32], zs: &[u32]) -> PauliFrame {
        let n = g.data_count();
        let mut x = vec![false; n];
        let mut z = vec![false; n];
        xs.iter().for_each(|&q| x[q as usize] = true);
        zs.iter().for_each(|&q| z[q as usize] = true);
        PauliFrame::from_rows(g, &[x], &[z]).unwrap()
    }

    #[test]
    fn single_error_is_correctable() {
        let g = Arc::new(CodeGeometry::new(CodeKind::Toric2D, 6).unwrap());
        let f = one_sample(&g, &[7], &[]);
        let c = classify_residuals(&g, &f, &enumerate_actions(CodeKind::Toric2D, false)).unwrap();
        assert_eq!(c.classes, vec![Some(ResidualClass::Correctable)]);
    }

    #[test]
    fn length_two_chain_resists_d1() {
        let g = Arc::new(CodeGeometry::new(CodeKind::Toric2D, 6).unwrap());
        let a = g.data_at([1, 2, 0, 0]).unwrap();
        let b = g.data_at([1, 4, 0, 0]).unwrap();
        let f = one_sample(&g, &[a, b], &[]);
        let c = classify_residuals(&g, &f, &d1_only(CodeKind::Toric2D)).unwrap();
        assert_eq!(c.classes, vec![Some(ResidualClass::Uncorrectable)]);
    }

    #[test]
    fn logical_loop_is_logical() {
        let g = Arc::new(CodeGeometry::new(CodeKind::Toric2D, 4).unwrap());
        let f = one_sample(&g, &g.logical_x_supports()[0], &[]);
        let c = classify_residuals(&g, &f, &enumerate_actions(CodeKind::Toric2D, false)).unwrap();
        assert_eq!(c.classes, vec![Some(ResidualClass::Logical)]);
        assert_eq!(c.total(), 1);
    }

    #[test]
    fn stabilizer_is_dropped() {
        let g = Arc::new(CodeGeometry::new(CodeKind::Toric2D, 4).unwrap());
        // Z errors on a plaquette form a stabilizer
        let f = one_sample(&g, &[], &g.z_supports()[0].clone());
        let c = classify_residuals(&g, &f, &enumerate_actions(CodeKind::Toric2D, false)).unwrap();
        assert_eq!(c.trivial, 1);
        assert_eq!(c.total(), 0);
    }
}
