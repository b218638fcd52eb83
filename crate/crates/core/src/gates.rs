//! Parallel gate layers acting on a Pauli frame.

use rand::Rng;

use crate::error::{LecError, Result};
use crate::frame::{flip_rows, PauliFrame};
use crate::geometry::{CheckType, CodeGeometry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GateKind {
    /// CNOT data -> ancilla copying X errors (Z-check).
    CnotZCheck,
    /// CNOT copying Z errors into an X-check ancilla.
    CnotXCheck,
    Ccx,
    Ccz,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::CnotZCheck | GateKind::CnotXCheck => 2,
            GateKind::Ccx | GateKind::Ccz => 3,
        }
    }
}

/// One parallel layer. Tuples are `[data, ancilla]` for CNOTs and
/// `[ctrl_ancilla, ctrl_ancilla, data]` for CCX/CCZ. Ancilla indices use the
/// frame numbering (Z block first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GateLayer {
    kind: GateKind,
    tuples: Vec<[u32; 3]>,
    touched_data: Vec<u32>,
    touched_anc: Vec<u32>,
}

impl GateLayer {
    pub fn new(kind: GateKind, tuples: Vec<[u32; 3]>, geom: &CodeGeometry) -> Result<Self> {
        let nd = geom.data_count() as u32;
        let nz = geom.z_ancilla_count() as u32;
        let na = geom.ancilla_count() as u32;
        let mut data_used = vec![false; nd as usize];
        let mut anc_used = vec![false; na as usize];
        let mark = |used: &mut Vec<bool>, i: u32, what: &str| -> Result<()> {
            if i as usize >= used.len() {
                return Err(LecError::GeometryMismatch(format!("{what} index {i} out of range")));
            }
            if std::mem::replace(&mut used[i as usize], true) {
                return Err(LecError::ContractViolation(format!("{what} {i} appears twice in one layer")));
            }
            Ok(())
        };
        for t in &tuples {
            match kind {
                GateKind::CnotZCheck | GateKind::CnotXCheck => {
                    mark(&mut data_used, t[0], "data qubit")?;
                    mark(&mut anc_used, t[1], "ancilla")?;
                    let z_side = t[1] < nz;
                    if z_side != (kind == GateKind::CnotZCheck) {
                        return Err(LecError::ContractViolation(format!(
                            "ancilla {} has the wrong check type for {kind:?}",
                            t[1]
                        )));
                    }
                }
                GateKind::Ccx | GateKind::Ccz => {
                    mark(&mut anc_used, t[0], "ancilla")?;
                    mark(&mut anc_used, t[1], "ancilla")?;
                    mark(&mut data_used, t[2], "data qubit")?;
                }
            }
        }
        if kind == GateKind::Ccz && !geom.kind().has_x_checks() {
            return Err(LecError::GeometryMismatch("CCZ layers need a code with Z errors".into()));
        }
        let collect = |used: Vec<bool>| -> Vec<u32> {
            used.iter().enumerate().filter(|(_, &u)| u).map(|(i, _)| i as u32).collect()
        };
        Ok(GateLayer {
            kind,
            tuples,
            touched_data: collect(data_used),
            touched_anc: collect(anc_used),
        })
    }

    pub fn kind(&self) -> GateKind {
        self.kind
    }

    pub fn tuples(&self) -> &[[u32; 3]] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn touched_data(&self) -> &[u32] {
        &self.touched_data
    }

    pub fn touched_ancillas(&self) -> &[u32] {
        &self.touched_anc
    }

    pub fn check_type(&self) -> Option<CheckType> {
        match self.kind {
            GateKind::CnotZCheck => Some(CheckType::Z),
            GateKind::CnotXCheck => Some(CheckType::X),
            _ => None,
        }
    }
}

/// Applies the ideal layer, then gate noise at rate `p` on every touched qubit.
pub fn apply_gate_layer<R: Rng + ?Sized>(frame: &mut PauliFrame, layer: &GateLayer, p: f64, rng: &mut R) {
    let w = frame.words();
    let row = |i: u32| i as usize * w;
    match layer.kind {
        GateKind::CnotZCheck | GateKind::CnotXCheck => {
            let src_plane = if layer.kind == GateKind::CnotZCheck { &frame.x } else { &frame.z };
            if layer.kind == GateKind::CnotXCheck && !frame.has_z() {
                // no Z errors to copy
            } else {
                for t in &layer.tuples {
                    let (d, a) = (row(t[0]), row(t[1]));
                    for k in 0..w {
                        frame.anc[a + k] ^= src_plane[d + k];
                    }
                }
            }
        }
        GateKind::Ccx | GateKind::Ccz => {
            let dst = if layer.kind == GateKind::Ccx { &mut frame.x } else { &mut frame.z };
            for t in &layer.tuples {
                let (c1, c2, d) = (row(t[0]), row(t[1]), row(t[2]));
                for k in 0..w {
                    dst[d + k] ^= frame.anc[c1 + k] & frame.anc[c2 + k];
                }
            }
        }
    }
    if p > 0.0 {
        let s = frame.samples();
        flip_rows(&mut frame.x, w, s, &layer.touched_data, p, rng);
        if frame.has_z() {
            flip_rows(&mut frame.z, w, s, &layer.touched_data, p, rng);
        }
        flip_rows(&mut frame.anc, w, s, &layer.touched_anc, p, rng);
        if frame.has_z() {
            flip_rows(&mut frame.anc_phase, w, s, &layer.touched_anc, p, rng);
        }
    }
}
