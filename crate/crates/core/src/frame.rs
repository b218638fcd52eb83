//! Bit-packed Pauli frames and the noise model.
//!
//! Samples are packed 64 per word. Each plane is stored row-major by qubit:
//! bit `s` of qubit `q` lives at `plane[q * words + s / 64]`, bit `s % 64`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LecError, Result};
use crate::geometry::CodeGeometry;
use crate::rng::for_each_bernoulli;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p_amb: f64,
    pub p_gate: f64,
    /// Error rate for CCX/CCZ layers when it differs from `p_gate`.
    #[serde(default)]
    pub p_gate_3q: Option<f64>,
    #[serde(default)]
    pub p_unit: f64,
}

impl NoiseParams {
    pub fn new(p_amb: f64, p_gate: f64) -> Self {
        NoiseParams {
            p_amb,
            p_gate,
            p_gate_3q: None,
            p_unit: 0.0,
        }
    }

    pub fn noiseless() -> Self {
        Self::new(0.0, 0.0)
    }

    pub fn p_three_qubit(&self) -> f64 {
        self.p_gate_3q.unwrap_or(self.p_gate)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            ("p_amb", self.p_amb),
            ("p_gate", self.p_gate),
            ("p_gate_3q", self.p_three_qubit()),
            ("p_unit", self.p_unit),
        ];
        for (name, p) in all {
            check_probability(name, p)?;
        }
        Ok(())
    }
}

pub fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(invalid(format!("{name} must lie in [0, 1], got {p}")));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PauliFrame {
    samples: usize,
    words: usize,
    data: usize,
    ancillas: usize,
    has_z: bool,
    pub x: Vec<u64>,
    pub z: Vec<u64>,
    pub anc: Vec<u64>,
    /// Phase flips on ancillas. They never reach data under the classical
    /// ancilla model and are kept only for gate-fidelity accounting.
    pub anc_phase: Vec<u64>,
}

impl PauliFrame {
    pub fn new(geom: &CodeGeometry, samples: usize) -> Self {
        let words = samples.div_ceil(64);
        let data = geom.data_count();
        let ancillas = geom.ancilla_count();
        let has_z = geom.kind().has_x_checks();
        PauliFrame {
            samples,
            words,
            data,
            ancillas,
            has_z,
            x: vec![0; data * words],
            z: if has_z { vec![0; data * words] } else { Vec::new() },
            anc: vec![0; ancillas * words],
            anc_phase: if has_z { vec![0; ancillas * words] } else { Vec::new() },
        }
    }

    /// Builds a frame from per-sample error rows. `z_rows` may be empty.
    pub fn from_rows(geom: &CodeGeometry, x_rows: &[Vec<bool>], z_rows: &[Vec<bool>]) -> Result<Self> {
        let mut f = PauliFrame::new(geom, x_rows.len());
        if !z_rows.is_empty() && z_rows.len() != x_rows.len() {
            return Err(invalid("x and z row counts differ"));
        }
        if !z_rows.is_empty() && !f.has_z && z_rows.iter().any(|r| r.iter().any(|&b| b)) {
            return Err(LecError::GeometryMismatch("this code carries no Z errors".into()));
        }
        for (s, row) in x_rows.iter().enumerate() {
            f.set_x_row(s, row)?;
        }
        if f.has_z {
            for (s, row) in z_rows.iter().enumerate() {
                f.set_z_row(s, row)?;
            }
        }
        Ok(f)
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    pub fn words(&self) -> usize {
        self.words
    }

    pub fn data_count(&self) -> usize {
        self.data
    }

    pub fn ancilla_count(&self) -> usize {
        self.ancillas
    }

    pub fn has_z(&self) -> bool {
        self.has_z
    }

    /// Valid-sample mask for word `w`.
    pub fn word_mask(&self, w: usize) -> u64 {
        let rem = self.samples - 64 * w;
        if rem >= 64 {
            u64::MAX
        } else {
            (1u64 << rem) - 1
        }
    }

    fn get(plane: &[u64], words: usize, row: usize, s: usize) -> bool {
        plane[row * words + s / 64] >> (s % 64) & 1 == 1
    }

    fn put(plane: &mut [u64], words: usize, row: usize, s: usize, v: bool) {
        let w = &mut plane[row * words + s / 64];
        let bit = 1u64 << (s % 64);
        if v {
            *w |= bit;
        } else {
            *w &= !bit;
        }
    }

    pub fn x_bit(&self, q: usize, s: usize) -> bool {
        Self::get(&self.x, self.words, q, s)
    }

    pub fn z_bit(&self, q: usize, s: usize) -> bool {
        self.has_z && Self::get(&self.z, self.words, q, s)
    }

    pub fn anc_bit(&self, a: usize, s: usize) -> bool {
        Self::get(&self.anc, self.words, a, s)
    }

    pub fn set_x(&mut self, q: usize, s: usize, v: bool) {
        Self::put(&mut self.x, self.words, q, s, v);
    }

    pub fn set_z(&mut self, q: usize, s: usize, v: bool) {
        assert!(self.has_z || !v, "this code carries no Z errors");
        if self.has_z {
            Self::put(&mut self.z, self.words, q, s, v);
        }
    }

    pub fn set_anc(&mut self, a: usize, s: usize, v: bool) {
        Self::put(&mut self.anc, self.words, a, s, v);
    }

    pub fn x_row(&self, s: usize) -> Vec<bool> {
        (0..self.data).map(|q| self.x_bit(q, s)).collect()
    }

    /// Empty for codes without Z errors.
    pub fn z_row(&self, s: usize) -> Vec<bool> {
        if !self.has_z {
            return Vec::new();
        }
        (0..self.data).map(|q| self.z_bit(q, s)).collect()
    }

    pub fn anc_row(&self, s: usize) -> Vec<bool> {
        (0..self.ancillas).map(|a| self.anc_bit(a, s)).collect()
    }

    pub fn set_x_row(&mut self, s: usize, row: &[bool]) -> Result<()> {
        if row.len() != self.data {
            return Err(LecError::GeometryMismatch(format!(
                "row has {} bits, frame has {} data qubits",
                row.len(),
                self.data
            )));
        }
        for (q, &v) in row.iter().enumerate() {
            self.set_x(q, s, v);
        }
        Ok(())
    }

    pub fn set_z_row(&mut self, s: usize, row: &[bool]) -> Result<()> {
        if !self.has_z {
            return Err(LecError::GeometryMismatch("this code carries no Z errors".into()));
        }
        if row.len() != self.data {
            return Err(LecError::GeometryMismatch(format!(
                "row has {} bits, frame has {} data qubits",
                row.len(),
                self.data
            )));
        }
        for (q, &v) in row.iter().enumerate() {
            self.set_z(q, s, v);
        }
        Ok(())
    }

    pub fn clear_ancillas(&mut self) {
        self.anc.fill(0);
        self.anc_phase.fill(0);
    }

    pub fn reset_ancillas(&mut self, ancillas: &[u32]) {
        let w = self.words;
        for &a in ancillas {
            let r = a as usize * w;
            self.anc[r..r + w].fill(0);
            if self.has_z {
                self.anc_phase[r..r + w].fill(0);
            }
        }
    }

    /// Per-sample count of data qubits carrying any error.
    pub fn error_weights(&self) -> Vec<usize> {
        let mut out = vec![0; self.samples];
        for q in 0..self.data {
            for w in 0..self.words {
                let mut bits = self.x[q * self.words + w];
                if self.has_z {
                    bits |= self.z[q * self.words + w];
                }
                while bits != 0 {
                    out[64 * w + bits.trailing_zeros() as usize] += 1;
                    bits &= bits - 1;
                }
            }
        }
        out
    }

    /// Per-sample count of X plus Z error bits.
    pub fn error_weights_split(&self) -> Vec<usize> {
        let mut out = vec![0; self.samples];
        for plane in [&self.x, &self.z] {
            for (i, &word) in plane.iter().enumerate() {
                let w = i % self.words;
                let mut bits = word;
                while bits != 0 {
                    out[64 * w + bits.trailing_zeros() as usize] += 1;
                    bits &= bits - 1;
                }
            }
        }
        out
    }

    /// Packed Z-check syndromes of the current data state.
    pub fn z_syndrome_words(&self, geom: &CodeGeometry) -> Vec<u64> {
        parity_words(&self.x, self.words, geom.z_supports())
    }

    pub fn x_syndrome_words(&self, geom: &CodeGeometry) -> Vec<u64> {
        if !self.has_z {
            return vec![0; geom.x_ancilla_count() * self.words];
        }
        parity_words(&self.z, self.words, geom.x_supports())
    }

    /// Packed logical parities: Z-type logicals then X-type logicals.
    pub fn logical_words(&self, geom: &CodeGeometry) -> Vec<u64> {
        let mut out = parity_words(&self.x, self.words, geom.logical_z_supports());
        if self.has_z {
            out.extend(parity_words(&self.z, self.words, geom.logical_x_supports()));
        }
        out
    }

    /// Copies word column `w` (64 samples) of every plane from `other`.
    pub fn copy_word_from(&mut self, other: &PauliFrame, w: usize) {
        let copy = |dst: &mut [u64], src: &[u64], rows: usize, words: usize, sw: usize| {
            for r in 0..rows {
                dst[r * words + w] = src[r * sw + w];
            }
        };
        let (words, sw) = (self.words, other.words);
        copy(&mut self.x, &other.x, self.data, words, sw);
        if self.has_z {
            copy(&mut self.z, &other.z, self.data, words, sw);
            copy(&mut self.anc_phase, &other.anc_phase, self.ancillas, words, sw);
        }
        copy(&mut self.anc, &other.anc, self.ancillas, words, sw);
    }
}

fn parity_words(plane: &[u64], words: usize, supports: &[Vec<u32>]) -> Vec<u64> {
    let mut out = vec![0u64; supports.len() * words];
    for (i, sup) in supports.iter().enumerate() {
        let dst = &mut out[i * words..(i + 1) * words];
        for &q in sup {
            let src = &plane[q as usize * words..(q as usize + 1) * words];
            for (d, s) in dst.iter_mut().zip(src) {
                *d ^= s;
            }
        }
    }
    out
}

/// Flips each (row, sample) bit of the listed rows independently with probability `p`.
pub(crate) fn flip_rows<R: Rng + ?Sized>(
    plane: &mut [u64],
    words: usize,
    samples: usize,
    rows: &[u32],
    p: f64,
    rng: &mut R,
) {
    let n = (rows.len() * samples) as u64;
    for_each_bernoulli(n, p, rng, |i| {
        let (r, s) = ((i / samples as u64) as usize, (i % samples as u64) as usize);
        plane[rows[r] as usize * words + s / 64] ^= 1u64 << (s % 64);
    });
}

/// Same as [`flip_rows`] over every row of the plane.
pub(crate) fn flip_all<R: Rng + ?Sized>(plane: &mut [u64], words: usize, samples: usize, p: f64, rng: &mut R) {
    if words == 0 {
        return;
    }
    let rows = plane.len() / words;
    let n = (rows * samples) as u64;
    for_each_bernoulli(n, p, rng, |i| {
        let (r, s) = ((i / samples as u64) as usize, (i % samples as u64) as usize);
        plane[r * words + s / 64] ^= 1u64 << (s % 64);
    });
}

/// Ambient noise: independent X (and, for toric codes, Z) flips on every data qubit.
pub fn apply_ambient<R: Rng + ?Sized>(frame: &mut PauliFrame, p_amb: f64, rng: &mut R) {
    let (w, s) = (frame.words, frame.samples);
    flip_all(&mut frame.x, w, s, p_amb, rng);
    if frame.has_z {
        flip_all(&mut frame.z, w, s, p_amb, rng);
    }
}
