//! Lattice geometry for the three codes.
//!
//! All codes live on a periodic cubic lattice of linear size `L` written in
//! doubled coordinates: every site of the `(2L)^d` torus is a cell of the
//! cubic complex, and the number of odd coordinates is the cell dimension.
//! Each code places data qubits and the two ancilla families on fixed cell
//! dimensions:
//!
//! | code    | data        | Z-check ancillas | X-check ancillas |
//! |---------|-------------|------------------|------------------|
//! | toric2d | edges (1)   | plaquettes (2)   | vertices (0)     |
//! | ising2d | plaquettes (2) | edges (1)     | none             |
//! | toric4d | faces (2)   | edges (1)        | cubes (3)        |
//!
//! A check touches every data qubit one lattice step away. Indices are
//! canonical: lexicographic order of the doubled coordinates.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LecError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Toric2D,
    Ising2D,
    Toric4D,
}

impl CodeKind {
    pub const ALL: [CodeKind; 3] = [CodeKind::Toric2D, CodeKind::Ising2D, CodeKind::Toric4D];

    pub fn dim(self) -> usize {
        match self {
            CodeKind::Toric4D => 4,
            _ => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CodeKind::Toric2D => "toric2d",
            CodeKind::Ising2D => "ising2d",
            CodeKind::Toric4D => "toric4d",
        }
    }

    /// Only the Ising code lacks phase-flip protection.
    pub fn has_x_checks(self) -> bool {
        !matches!(self, CodeKind::Ising2D)
    }

    fn data_odd(self) -> u32 {
        match self {
            CodeKind::Toric2D => 1,
            _ => 2,
        }
    }

    fn z_odd(self) -> u32 {
        match self {
            CodeKind::Toric2D => 2,
            _ => 1,
        }
    }

    fn x_odd(self) -> Option<u32> {
        match self {
            CodeKind::Toric2D => Some(0),
            CodeKind::Ising2D => None,
            CodeKind::Toric4D => Some(3),
        }
    }
}

impl fmt::Display for CodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodeKind {
    type Err = LecError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "toric2d" => Ok(CodeKind::Toric2D),
            "ising2d" => Ok(CodeKind::Ising2D),
            "toric4d" => Ok(CodeKind::Toric4D),
            other => Err(invalid(format!("unknown code kind `{other}`"))),
        }
    }
}

/// Doubled coordinates; axes beyond the code dimension stay zero.
pub type Coord = [u16; 4];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Site {
    Data(u32),
    ZAncilla(u32),
    XAncilla(u32),
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CheckType {
    Z,
    X,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syndrome {
    pub z: Vec<bool>,
    pub x: Vec<bool>,
}

impl Syndrome {
    pub fn is_zero(&self) -> bool {
        !self.z.iter().chain(&self.x).any(|&b| b)
    }

    pub fn weight(&self) -> usize {
        self.z.iter().chain(&self.x).filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LogicalOutcome {
    Trivial,
    /// Parities over the Z-type logicals (X errors) followed by the
    /// X-type logicals (Z errors).
    Logical(Vec<bool>),
}

#[derive(Clone, Debug)]
pub struct CodeGeometry {
    kind: CodeKind,
    l: usize,
    side: usize,
    data: Vec<Coord>,
    z_anc: Vec<Coord>,
    x_anc: Vec<Coord>,
    z_supports: Vec<Vec<u32>>,
    x_supports: Vec<Vec<u32>>,
    logical_z: Vec<Vec<u32>>,
    logical_x: Vec<Vec<u32>>,
    sites: Vec<Site>,
}

impl CodeGeometry {
    pub fn new(kind: CodeKind, l: usize) -> Result<Self> {
        if l < 2 {
            return Err(invalid(format!("lattice size L must be at least 2, got {l}")));
        }
        if 2 * l > u16::MAX as usize || (kind == CodeKind::Toric4D && l > 24) || l > 512 {
            return Err(invalid(format!("lattice size L={l} is too large for {kind}")));
        }
        if kind == CodeKind::Toric4D && l % 2 == 1 {
            return Err(invalid(format!("toric4d needs an even lattice size, got L={l}")));
        }
        let dim = kind.dim();
        let side = 2 * l;
        let total = side.pow(dim as u32);
        let mut sites = vec![Site::Empty; total];
        let (mut data, mut z_anc, mut x_anc) = (Vec::new(), Vec::new(), Vec::new());
        for (idx, site) in sites.iter_mut().enumerate() {
            let c = unflatten(idx, side, dim);
            let odd = c.iter().take(dim).filter(|&&v| v % 2 == 1).count() as u32;
            if odd == kind.data_odd() {
                *site = Site::Data(data.len() as u32);
                data.push(c);
            } else if odd == kind.z_odd() {
                *site = Site::ZAncilla(z_anc.len() as u32);
                z_anc.push(c);
            } else if Some(odd) == kind.x_odd() {
                *site = Site::XAncilla(x_anc.len() as u32);
                x_anc.push(c);
            }
        }
        let mut geom = CodeGeometry {
            kind,
            l,
            side,
            data,
            z_anc,
            x_anc,
            z_supports: Vec::new(),
            x_supports: Vec::new(),
            logical_z: Vec::new(),
            logical_x: Vec::new(),
            sites,
        };
        geom.z_supports = geom.z_anc.iter().map(|&c| geom.support_of(c)).collect();
        geom.x_supports = geom.x_anc.iter().map(|&c| geom.support_of(c)).collect();
        geom.build_logicals();
        Ok(geom)
    }

    fn support_of(&self, c: Coord) -> Vec<u32> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for axis in 0..self.dim() {
            for delta in [-1, 1] {
                if let Some(q) = self.data_at(self.neighbor(c, axis, delta)) {
                    out.push(q);
                }
            }
        }
        out
    }

    fn select_data(&self, pred: impl Fn(&Coord) -> bool) -> Vec<u32> {
        (0..self.data.len() as u32).filter(|&q| pred(&self.data[q as usize])).collect()
    }

    fn build_logicals(&mut self) {
        let odd = |v: u16| v % 2 == 1;
        match self.kind {
            CodeKind::Toric2D => {
                self.logical_z = vec![
                    self.select_data(|c| c[0] == 0 && odd(c[1])),
                    self.select_data(|c| odd(c[0]) && c[1] == 0),
                ];
                self.logical_x = vec![
                    self.select_data(|c| c[0] == 1 && !odd(c[1])),
                    self.select_data(|c| !odd(c[0]) && c[1] == 1),
                ];
            }
            CodeKind::Ising2D => {
                self.logical_z = vec![vec![0]];
                self.logical_x = vec![(0..self.data.len() as u32).collect()];
            }
            CodeKind::Toric4D => {
                let (mut lz, mut lx) = (Vec::new(), Vec::new());
                for i in 0..4 {
                    for j in i + 1..4 {
                        lz.push(self.select_data(|c| {
                            (0..4).all(|a| if a == i || a == j { c[a] == 1 } else { !odd(c[a]) })
                        }));
                        lx.push(self.select_data(|c| {
                            (0..4).all(|a| if a == i || a == j { odd(c[a]) } else { c[a] == 0 })
                        }));
                    }
                }
                self.logical_z = lz;
                self.logical_x = lx;
            }
        }
    }

    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn dim(&self) -> usize {
        self.kind.dim()
    }

    /// Extent of the doubled lattice along each axis.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data_count(&self) -> usize {
        self.data.len()
    }

    pub fn z_ancilla_count(&self) -> usize {
        self.z_anc.len()
    }

    pub fn x_ancilla_count(&self) -> usize {
        self.x_anc.len()
    }

    /// Z ancillas come first in the frame, X ancillas after them.
    pub fn ancilla_count(&self) -> usize {
        self.z_anc.len() + self.x_anc.len()
    }

    pub fn data_coord(&self, q: u32) -> Coord {
        self.data[q as usize]
    }

    pub fn z_ancilla_coord(&self, a: u32) -> Coord {
        self.z_anc[a as usize]
    }

    pub fn x_ancilla_coord(&self, a: u32) -> Coord {
        self.x_anc[a as usize]
    }

    pub fn z_supports(&self) -> &[Vec<u32>] {
        &self.z_supports
    }

    pub fn x_supports(&self) -> &[Vec<u32>] {
        &self.x_supports
    }

    pub fn logical_z_supports(&self) -> &[Vec<u32>] {
        &self.logical_z
    }

    pub fn logical_x_supports(&self) -> &[Vec<u32>] {
        &self.logical_x
    }

    pub fn site_index(&self, c: Coord) -> usize {
        let mut idx = 0;
        for &v in c.iter().take(self.dim()) {
            idx = idx * self.side + (v as usize % self.side);
        }
        idx
    }

    pub fn site(&self, c: Coord) -> Site {
        self.sites[self.site_index(c)]
    }

    pub fn data_at(&self, c: Coord) -> Option<u32> {
        match self.site(c) {
            Site::Data(q) => Some(q),
            _ => None,
        }
    }

    pub fn z_ancilla_at(&self, c: Coord) -> Option<u32> {
        match self.site(c) {
            Site::ZAncilla(a) => Some(a),
            _ => None,
        }
    }

    pub fn x_ancilla_at(&self, c: Coord) -> Option<u32> {
        match self.site(c) {
            Site::XAncilla(a) => Some(a),
            _ => None,
        }
    }

    /// Ancilla frame index (Z block then X block) at a coordinate.
    pub fn ancilla_at(&self, c: Coord) -> Option<(CheckType, u32)> {
        match self.site(c) {
            Site::ZAncilla(a) => Some((CheckType::Z, a)),
            Site::XAncilla(a) => Some((CheckType::X, self.z_anc.len() as u32 + a)),
            _ => None,
        }
    }

    pub fn neighbor(&self, c: Coord, axis: usize, delta: i64) -> Coord {
        let mut out = c;
        let s = self.side as i64;
        out[axis] = (c[axis] as i64 + delta).rem_euclid(s) as u16;
        out
    }

    pub fn shift(&self, c: Coord, delta: [i64; 4]) -> Coord {
        let mut out = c;
        let s = self.side as i64;
        for a in 0..self.dim() {
            out[a] = (c[a] as i64 + delta[a]).rem_euclid(s) as u16;
        }
        out
    }

    /// Periodic Manhattan distance in lattice units (half the doubled distance).
    pub fn torus_distance(&self, a: Coord, b: Coord) -> usize {
        let mut d = 0;
        for ax in 0..self.dim() {
            let diff = (a[ax] as i64 - b[ax] as i64).rem_euclid(self.side as i64) as usize;
            d += diff.min(self.side - diff);
        }
        d / 2
    }

    pub fn z_syndrome(&self, x_err: &[bool]) -> Vec<bool> {
        self.z_supports.iter().map(|s| parity(s, x_err)).collect()
    }

    pub fn x_syndrome(&self, z_err: &[bool]) -> Vec<bool> {
        if z_err.is_empty() {
            return vec![false; self.x_anc.len()];
        }
        self.x_supports.iter().map(|s| parity(s, z_err)).collect()
    }

    pub fn compute_syndromes(&self, x_err: &[bool], z_err: &[bool]) -> Syndrome {
        Syndrome {
            z: self.z_syndrome(x_err),
            x: self.x_syndrome(z_err),
        }
    }

    /// Logical class of a syndrome-free error.
    pub fn logical_outcome(&self, x_err: &[bool], z_err: &[bool]) -> Result<LogicalOutcome> {
        if !self.compute_syndromes(x_err, z_err).is_zero() {
            return Err(LecError::ContractViolation(
                "logical_outcome called on an error with nonzero syndrome".into(),
            ));
        }
        Ok(self.logical_parities(x_err, z_err))
    }

    /// Logical parities without the syndrome check.
    pub fn logical_parities(&self, x_err: &[bool], z_err: &[bool]) -> LogicalOutcome {
        let mut bits: Vec<bool> = self.logical_z.iter().map(|s| parity(s, x_err)).collect();
        bits.extend(self.logical_x.iter().map(|s| !z_err.is_empty() && parity(s, z_err)));
        if bits.iter().any(|&b| b) {
            LogicalOutcome::Logical(bits)
        } else {
            LogicalOutcome::Trivial
        }
    }
}

fn parity(support: &[u32], bits: &[bool]) -> bool {
    support.iter().fold(false, |acc, &q| acc ^ bits[q as usize])
}

fn unflatten(mut idx: usize, side: usize, dim: usize) -> Coord {
    let mut c = [0u16; 4];
    for a in (0..dim).rev() {
        c[a] = (idx % side) as u16;
        idx /= side;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_cell_census() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 5).unwrap();
        assert_eq!((g.data_count(), g.z_ancilla_count(), g.x_ancilla_count()), (50, 25, 25));
        let g = CodeGeometry::new(CodeKind::Ising2D, 5).unwrap();
        assert_eq!((g.data_count(), g.z_ancilla_count(), g.x_ancilla_count()), (25, 50, 0));
        let g = CodeGeometry::new(CodeKind::Toric4D, 2).unwrap();
        assert_eq!(g.data_count(), 6 * 16);
        assert_eq!(g.z_ancilla_count(), 4 * 16);
        assert_eq!(g.x_ancilla_count(), 4 * 16);
    }

    #[test]
    fn canonical_order_is_lexicographic() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 3).unwrap();
        assert_eq!(g.data_coord(0), [0, 1, 0, 0]);
        assert_eq!(g.data_coord(1), [0, 3, 0, 0]);
        for q in 1..g.data_count() as u32 {
            assert!(g.data_coord(q - 1) < g.data_coord(q));
        }
    }

    #[test]
    fn rejects_small_lattice() {
        assert!(CodeGeometry::new(CodeKind::Ising2D, 1).is_err());
        assert!(CodeGeometry::new(CodeKind::Toric4D, 3).is_err());
    }

    #[test]
    fn parse_kind() {
        assert_eq!("Toric4D".parse::<CodeKind>().unwrap(), CodeKind::Toric4D);
        assert!("surface".parse::<CodeKind>().is_err());
    }
}
