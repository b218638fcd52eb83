//! Minimum-weight perfect matching decoder for the 2D toric code.

use crate::error::{LecError, Result};
use crate::geometry::{CodeGeometry, CodeKind, Coord, LogicalOutcome};

use super::blossom::MaxWeightMatching;
use super::RecoveryResult;

/// Largest defect count solved by subset dynamic programming.
const DP_LIMIT: usize = 14;

/// Exact minimum-weight perfect matching on a complete graph.
pub fn min_weight_perfect_matching(n: usize, dist: impl Fn(usize, usize) -> i64) -> Result<Vec<(usize, usize)>> {
    if n % 2 == 1 {
        return Err(LecError::ContractViolation(format!("cannot perfectly match {n} defects")));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    if n <= DP_LIMIT {
        return Ok(subset_dp(n, &dist));
    }
    let mut edges = Vec::with_capacity(n * (n - 1) / 2);
    let mut maxd = 0;
    for i in 0..n {
        for j in i + 1..n {
            let d = dist(i, j);
            maxd = maxd.max(d);
            edges.push((i, j, d));
        }
    }
    // maximize sum of (W - d) over maximum-cardinality matchings
    let w = maxd + 1;
    let edges = edges.into_iter().map(|(i, j, d)| (i, j, w - d)).collect();
    let mate = MaxWeightMatching::new(n, edges, true).solve();
    let mut pairs = Vec::with_capacity(n / 2);
    for (i, m) in mate.iter().enumerate() {
        match m {
            Some(j) if *j > i => pairs.push((i, *j)),
            Some(_) => {}
            None => return Err(LecError::ContractViolation("matching left a defect unpaired".into())),
        }
    }
    Ok(pairs)
}

fn subset_dp(n: usize, dist: &impl Fn(usize, usize) -> i64) -> Vec<(usize, usize)> {
    let full = (1usize << n) - 1;
    let mut cost = vec![i64::MAX; 1 << n];
    let mut choice = vec![(0u8, 0u8); 1 << n];
    cost[0] = 0;
    for mask in 0..full {
        if cost[mask] == i64::MAX {
            continue;
        }
        let i = (!mask).trailing_zeros() as usize;
        for j in i + 1..n {
            if mask >> j & 1 == 1 {
                continue;
            }
            let next = mask | 1 << i | 1 << j;
            let c = cost[mask] + dist(i, j);
            if c < cost[next] {
                cost[next] = c;
                choice[next] = (i as u8, j as u8);
            }
        }
    }
    let mut pairs = Vec::with_capacity(n / 2);
    let mut mask = full;
    while mask != 0 {
        let (i, j) = choice[mask];
        pairs.push((i as usize, j as usize));
        mask &= !(1 << i | 1 << j);
    }
    pairs.sort_unstable();
    pairs
}

/// Data qubits on the row-first shortest path between two checks of the same type.
pub fn correction_path(geom: &CodeGeometry, a: Coord, b: Coord) -> Vec<u32> {
    let side = geom.side() as i64;
    let mut cur = a;
    let mut out = Vec::new();
    for axis in 0..geom.dim() {
        let fwd = (b[axis] as i64 - cur[axis] as i64).rem_euclid(side);
        let (steps, sign) = if fwd <= side - fwd { (fwd / 2, 1) } else { ((side - fwd) / 2, -1) };
        for _ in 0..steps {
            let mid = geom.neighbor(cur, axis, sign);
            out.push(geom.data_at(mid).expect("check-to-check step crosses a data qubit"));
            cur = geom.neighbor(cur, axis, 2 * sign);
        }
    }
    out
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DefectSet {
    /// Z-check defects (from X errors).
    pub z: Vec<Coord>,
    /// X-check defects (from Z errors).
    pub x: Vec<Coord>,
}

impl DefectSet {
    pub fn from_errors(geom: &CodeGeometry, x_err: &[bool], z_err: &[bool]) -> Self {
        let syn = geom.compute_syndromes(x_err, z_err);
        DefectSet {
            z: (0..syn.z.len()).filter(|&i| syn.z[i]).map(|i| geom.z_ancilla_coord(i as u32)).collect(),
            x: (0..syn.x.len()).filter(|&i| syn.x[i]).map(|i| geom.x_ancilla_coord(i as u32)).collect(),
        }
    }
}

/// Matches one defect family and returns the flipped data qubits and total weight.
pub fn match_defects(geom: &CodeGeometry, defects: &[Coord]) -> Result<(Vec<u32>, usize)> {
    let pairs = min_weight_perfect_matching(defects.len(), |i, j| {
        geom.torus_distance(defects[i], defects[j]) as i64
    })?;
    let mut flips = Vec::new();
    let mut weight = 0;
    for (i, j) in pairs {
        weight += geom.torus_distance(defects[i], defects[j]);
        flips.extend(correction_path(geom, defects[i], defects[j]));
    }
    Ok((flips, weight))
}

pub fn decode_mwpm(geom: &CodeGeometry, x_err: &[bool], z_err: &[bool]) -> Result<RecoveryResult> {
    if geom.kind() != CodeKind::Toric2D {
        return Err(LecError::GeometryMismatch("matching decoder needs the 2D toric code".into()));
    }
    let defects = DefectSet::from_errors(geom, x_err, z_err);
    let (fx, _) = match_defects(geom, &defects.z)?;
    let (fz, _) = match_defects(geom, &defects.x)?;
    let mut x = x_err.to_vec();
    let mut z = z_err.to_vec();
    for &q in &fx {
        x[q as usize] ^= true;
    }
    for &q in &fz {
        z[q as usize] ^= true;
    }
    let outcome = geom.logical_outcome(&x, &z)?;
    Ok(RecoveryResult {
        correction_x: fx,
        correction_z: fz,
        outcome,
    })
}

/// Convenience: true when decoding leaves a logical error.
pub fn mwpm_fails(geom: &CodeGeometry, x_err: &[bool], z_err: &[bool]) -> Result<bool> {
    Ok(decode_mwpm(geom, x_err, z_err)?.outcome != LogicalOutcome::Trivial)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adjacent_defects_get_shared_edge() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 4).unwrap();
        let mut x = vec![false; g.data_count()];
        let q = g.data_at([1, 2, 0, 0]).unwrap();
        x[q as usize] = true;
        let r = decode_mwpm(&g, &x, &vec![false; g.data_count()]).unwrap();
        assert_eq!(r.correction_x, vec![q]);
        assert_eq!(r.outcome, LogicalOutcome::Trivial);
    }

    #[test]
    fn no_defects_reports_logical() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 4).unwrap();
        let mut x = vec![false; g.data_count()];
        for &q in &g.logical_x_supports()[0] {
            x[q as usize] = true;
        }
        let r = decode_mwpm(&g, &x, &vec![false; g.data_count()]).unwrap();
        assert!(r.correction_x.is_empty());
        assert!(matches!(r.outcome, LogicalOutcome::Logical(_)));
    }

    #[test]
    fn dp_and_blossom_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let n = 2 * rng.gen_range(1..=7);
            let pts: Vec<(i64, i64)> = (0..n).map(|_| (rng.gen_range(0..10), rng.gen_range(0..10))).collect();
            let d = |i: usize, j: usize| (pts[i].0 - pts[j].0).abs() + (pts[i].1 - pts[j].1).abs();
            let dp: i64 = subset_dp(n, &d).iter().map(|&(i, j)| d(i, j)).sum();
            let mut edges = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    edges.push((i, j, 100 - d(i, j)));
                }
            }
            let mate = MaxWeightMatching::new(n, edges, true).solve();
            let bl: i64 = (0..n).map(|i| d(i, mate[i].unwrap())).sum::<i64>() / 2;
            assert_eq!(dp, bl);
        }
    }

    #[test]
    fn odd_defects_rejected() {
        assert!(min_weight_perfect_matching(3, |_, _| 1).is_err());
    }
}
