//! Action vocabularies and their compilation into gate layers.
//!
//! Two-dimensional removal cells are written as a pair of offsets measured
//! from the first control ancilla (the anchor): `d` to the second control and
//! `t` to the target. Cells are tessellated greedily over anchors in
//! canonical order, skipping any placement whose controls are already used.
//! Toric2D applies the same cell on the plaquette lattice (CCX) and on the
//! vertex lattice (CCZ).

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;

use crate::error::{invalid, LecError, Result};
use crate::frame::{NoiseParams, PauliFrame};
use crate::gates::{apply_gate_layer, GateKind, GateLayer};
use crate::geometry::{CheckType, CodeGeometry, CodeKind, Coord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionId {
    SyndromeExtraction,
    Null,
    /// Ends construction early; only present when the stop variant is enabled.
    Stop,
    /// `d=N` chain removal; `target` is `None` when the cell has one target.
    Chain { d: u8, rot: u8, target: Option<u8> },
    /// `config` is `None` for the Ising code and 1..=6 for the 4D code.
    Toom { config: Option<u8>, dir: u8 },
    GroupedD1,
    GroupedD11,
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            ActionId::SyndromeExtraction => f.write_str("SE"),
            ActionId::Null => f.write_str("NULL"),
            ActionId::Stop => f.write_str("STOP"),
            ActionId::Chain { d, rot, target: None } => write!(f, "d{d}:r{rot}"),
            ActionId::Chain { d, rot, target: Some(t) } => write!(f, "d{d}:r{rot}:t{t}"),
            ActionId::Toom { config: None, dir } => write!(f, "toom:dir{dir}"),
            ActionId::Toom { config: Some(c), dir } => write!(f, "toom:t{c}:dir{dir}"),
            ActionId::GroupedD1 => f.write_str("g_d1"),
            ActionId::GroupedD11 => f.write_str("g_d11"),
        }
    }
}

impl FromStr for ActionId {
    type Err = LecError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || invalid(format!("unknown action name `{s}`"));
        let num = |part: &str, prefix: &str| -> Result<u8> {
            part.strip_prefix(prefix).and_then(|v| v.parse().ok()).ok_or_else(bad)
        };
        match s {
            "SE" => return Ok(ActionId::SyndromeExtraction),
            "NULL" => return Ok(ActionId::Null),
            "STOP" => return Ok(ActionId::Stop),
            "g_d1" => return Ok(ActionId::GroupedD1),
            "g_d11" => return Ok(ActionId::GroupedD11),
            _ => {}
        }
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["toom", dir] => Ok(ActionId::Toom { config: None, dir: num(dir, "dir")? }),
            ["toom", c, dir] => Ok(ActionId::Toom {
                config: Some(num(c, "t")?),
                dir: num(dir, "dir")?,
            }),
            [d, r] if d.starts_with('d') => Ok(ActionId::Chain {
                d: num(d, "d")?,
                rot: num(r, "r")?,
                target: None,
            }),
            [d, r, t] if d.starts_with('d') => Ok(ActionId::Chain {
                d: num(d, "d")?,
                rot: num(r, "r")?,
                target: Some(num(t, "t")?),
            }),
            _ => Err(bad()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemovalClass {
    Toom,
    Distance(u8),
    GroupedD1,
    GroupedD11,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActionCategory {
    SyndromeExtraction,
    Removal { class: RemovalClass, variant: usize },
    Null,
    Stop,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LecAction {
    pub kind: CodeKind,
    pub id: ActionId,
    pub category: ActionCategory,
}

impl LecAction {
    pub fn name(&self) -> String {
        self.id.to_string()
    }

    pub fn is_removal(&self) -> bool {
        matches!(self.category, ActionCategory::Removal { .. })
    }
}

/// Ordered token vocabulary: removal actions, then SE, NULL and STOP when present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionSet {
    kind: CodeKind,
    actions: Vec<LecAction>,
}

pub fn enumerate_actions(kind: CodeKind, variable_depth: bool) -> ActionSet {
    enumerate_actions_with(kind, variable_depth, false)
}

pub fn enumerate_actions_with(kind: CodeKind, variable_depth: bool, stop: bool) -> ActionSet {
    let mut actions = Vec::new();
    let mut push = |id: ActionId, category: ActionCategory| actions.push(LecAction { kind, id, category });
    match kind {
        CodeKind::Toric2D => {
            let mut variant = 0;
            for (d, targets) in [(1u8, 1u8), (2, 2), (3, 3)] {
                for rot in 0..4 {
                    for t in 0..targets {
                        let target = (d > 1).then_some(t);
                        let class = RemovalClass::Distance(d);
                        push(ActionId::Chain { d, rot, target }, ActionCategory::Removal { class, variant });
                        variant += 1;
                    }
                }
            }
            push(ActionId::SyndromeExtraction, ActionCategory::SyndromeExtraction);
        }
        CodeKind::Ising2D => {
            for dir in 0..4 {
                let category = ActionCategory::Removal { class: RemovalClass::Toom, variant: dir as usize };
                push(ActionId::Toom { config: None, dir }, category);
            }
            for d in 1..=2u8 {
                for rot in 0..4 {
                    let category = ActionCategory::Removal {
                        class: RemovalClass::Distance(d),
                        variant: rot as usize,
                    };
                    push(ActionId::Chain { d, rot, target: None }, category);
                }
            }
        }
        CodeKind::Toric4D => {
            for c in 1..=6u8 {
                for dir in 0..4 {
                    let variant = 4 * (c as usize - 1) + dir as usize;
                    let category = ActionCategory::Removal { class: RemovalClass::Toom, variant };
                    push(ActionId::Toom { config: Some(c), dir }, category);
                }
            }
            push(
                ActionId::GroupedD1,
                ActionCategory::Removal { class: RemovalClass::GroupedD1, variant: 0 },
            );
            push(
                ActionId::GroupedD11,
                ActionCategory::Removal { class: RemovalClass::GroupedD11, variant: 0 },
            );
        }
    }
    if variable_depth {
        push(ActionId::Null, ActionCategory::Null);
    }
    if stop {
        push(ActionId::Stop, ActionCategory::Stop);
    }
    ActionSet { kind, actions }
}

impl ActionSet {
    pub fn kind(&self) -> CodeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn actions(&self) -> &[LecAction] {
        &self.actions
    }

    pub fn get(&self, token: usize) -> &LecAction {
        &self.actions[token]
    }

    pub fn token_of(&self, id: ActionId) -> Option<usize> {
        self.actions.iter().position(|a| a.id == id)
    }

    pub fn removal_tokens(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.actions[i].is_removal()).collect()
    }

    /// The actions of `self` listed in `keep`, in vocabulary order.
    pub fn subset(&self, keep: &[ActionId]) -> ActionSet {
        ActionSet {
            kind: self.kind,
            actions: self.actions.iter().filter(|a| keep.contains(&a.id)).cloned().collect(),
        }
    }

    pub fn contains(&self, id: ActionId) -> bool {
        self.token_of(id).is_some()
    }
}

/// Depth-ordered list of actions, lattice size recorded for the file format.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LecCircuit {
    pub kind: CodeKind,
    pub l: usize,
    pub actions: Vec<ActionId>,
}

impl LecCircuit {
    pub fn new(kind: CodeKind, l: usize, actions: Vec<ActionId>) -> Self {
        LecCircuit { kind, l, actions }
    }

    /// Number of actions excluding NULL and STOP.
    pub fn depth(&self) -> usize {
        self.actions
            .iter()
            .filter(|a| !matches!(a, ActionId::Null | ActionId::Stop))
            .count()
    }

    pub fn names(&self) -> Vec<String> {
        self.actions.iter().map(|a| a.to_string()).collect()
    }

    /// Drops NULL and STOP tokens.
    pub fn stripped(&self) -> LecCircuit {
        LecCircuit {
            kind: self.kind,
            l: self.l,
            actions: self
                .actions
                .iter()
                .copied()
                .filter(|a| !matches!(a, ActionId::Null | ActionId::Stop))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let set = enumerate_actions_with(self.kind, true, true);
        for a in &self.actions {
            if !set.contains(*a) {
                return Err(invalid(format!("action `{a}` is not defined for {}", self.kind)));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("code={} L={} H={}\n", self.kind, self.l, self.depth());
        for a in &self.actions {
            s.push_str(&a.to_string());
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        // `#` lines carry provenance and are skipped
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(LecError::Parse {
            line: 1,
            msg: "empty circuit file".into(),
        })?;
        let hline = hline + 1;
        let perr = |line: usize, msg: String| LecError::Parse { line, msg };
        let (mut kind, mut l, mut h) = (None, None, None);
        for field in header.split_whitespace() {
            let (k, v) = field
                .split_once('=')
                .ok_or_else(|| perr(hline, format!("malformed header field `{field}`")))?;
            match k {
                "code" => kind = Some(v.parse::<CodeKind>().map_err(|e| perr(hline, e.to_string()))?),
                "L" => l = Some(v.parse::<usize>().map_err(|e| perr(hline, e.to_string()))?),
                "H" => h = Some(v.parse::<usize>().map_err(|e| perr(hline, e.to_string()))?),
                _ => return Err(perr(hline, format!("unknown header key `{k}`"))),
            }
        }
        let kind = kind.ok_or_else(|| perr(hline, "missing code".into()))?;
        let l = l.ok_or_else(|| perr(hline, "missing L".into()))?;
        let h = h.ok_or_else(|| perr(hline, "missing H".into()))?;
        let set = enumerate_actions_with(kind, true, true);
        let mut actions = Vec::new();
        for (i, line) in lines {
            let id: ActionId = line.trim().parse().map_err(|e: LecError| perr(i + 1, e.to_string()))?;
            if !set.contains(id) {
                return Err(perr(i + 1, format!("action `{line}` is not defined for {kind}")));
            }
            actions.push(id);
        }
        let c = LecCircuit { kind, l, actions };
        if c.depth() != h {
            return Err(perr(hline, format!("header says H={h} but the file lists {} actions", c.depth())));
        }
        Ok(c)
    }
}

/// Conventional circuits: NN LEC for toric2d, repeated Toom sweeps otherwise.
pub fn baseline_circuit(kind: CodeKind, l: usize) -> LecCircuit {
    let actions = match kind {
        CodeKind::Toric2D => std::iter::once(ActionId::SyndromeExtraction)
            .chain((0..4).map(|rot| ActionId::Chain { d: 1, rot, target: None }))
            .collect(),
        CodeKind::Ising2D => vec![ActionId::Toom { config: None, dir: 0 }; 60],
        CodeKind::Toric4D => (0..60)
            .map(|i| ActionId::Toom { config: Some(1 + (i % 6) as u8), dir: 0 })
            .collect(),
    };
    LecCircuit::new(kind, l, actions)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Step {
    /// Clears the listed ancillas (frame numbering).
    Reset(Vec<u32>),
    Layer(GateLayer),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CompiledAction {
    steps: Vec<Step>,
}

impl CompiledAction {
    pub fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub fn layers(&self) -> impl Iterator<Item = &GateLayer> {
        self.steps.iter().filter_map(|s| match s {
            Step::Layer(l) => Some(l),
            Step::Reset(_) => None,
        })
    }

    pub fn apply<R: Rng + ?Sized>(&self, frame: &mut PauliFrame, noise: &NoiseParams, rng: &mut R) {
        for step in &self.steps {
            match step {
                Step::Reset(a) => frame.reset_ancillas(a),
                Step::Layer(layer) => {
                    let p = match layer.kind() {
                        GateKind::Ccx | GateKind::Ccz => noise.p_three_qubit(),
                        _ => noise.p_gate,
                    };
                    apply_gate_layer(frame, layer, p, rng);
                }
            }
        }
    }
}

/// One extraction step direction: (axis, sign).
pub type Direction = (usize, i64);

pub fn canonical_directions(dim: usize) -> Vec<Direction> {
    (0..dim).flat_map(|a| [(a, -1), (a, 1)]).collect()
}

/// CNOT layers refreshing the given ancillas (frame numbering), one Z layer
/// then one X layer per direction. Empty layers are omitted.
pub fn extraction_layers(geom: &CodeGeometry, ancillas: &[u32], order: &[Direction]) -> Result<Vec<GateLayer>> {
    let nz = geom.z_ancilla_count() as u32;
    let mut layers = Vec::new();
    for &(axis, sign) in order {
        for check in [CheckType::Z, CheckType::X] {
            let mut tuples = Vec::new();
            for &a in ancillas {
                let (is_z, c) = if a < nz {
                    (true, geom.z_ancilla_coord(a))
                } else {
                    (false, geom.x_ancilla_coord(a - nz))
                };
                if is_z != (check == CheckType::Z) {
                    continue;
                }
                if let Some(q) = geom.data_at(geom.neighbor(c, axis, sign)) {
                    tuples.push([q, a, 0]);
                }
            }
            if !tuples.is_empty() {
                let kind = if check == CheckType::Z {
                    GateKind::CnotZCheck
                } else {
                    GateKind::CnotXCheck
                };
                layers.push(GateLayer::new(kind, tuples, geom)?);
            }
        }
    }
    Ok(layers)
}

fn rotate2(v: [i64; 2], k: u8) -> [i64; 2] {
    let mut v = v;
    for _ in 0..k {
        v = [v[1], -v[0]];
    }
    v
}

fn lift(v: [i64; 2]) -> [i64; 4] {
    [v[0], v[1], 0, 0]
}

/// Greedy tessellation of an anchor-relative cell over one ancilla lattice.
fn tessellate(geom: &CodeGeometry, check: CheckType, d: [i64; 2], t: [i64; 2]) -> Vec<[u32; 3]> {
    let count = match check {
        CheckType::Z => geom.z_ancilla_count(),
        CheckType::X => geom.x_ancilla_count(),
    };
    let mut used = vec![false; geom.ancilla_count()];
    let mut out = Vec::new();
    for i in 0..count as u32 {
        let a = match check {
            CheckType::Z => geom.z_ancilla_coord(i),
            CheckType::X => geom.x_ancilla_coord(i),
        };
        let Some((c1t, c1)) = geom.ancilla_at(a) else { continue };
        let Some((c2t, c2)) = geom.ancilla_at(geom.shift(a, lift(d))) else { continue };
        let Some(q) = geom.data_at(geom.shift(a, lift(t))) else { continue };
        if c1t != check || c2t != check || c1 == c2 || used[c1 as usize] || used[c2 as usize] {
            continue;
        }
        used[c1 as usize] = true;
        used[c2 as usize] = true;
        out.push([c1, c2, q]);
    }
    out
}

/// Target-driven family: every data qubit passing `select` gets controls at
/// the two offsets.
fn family(
    geom: &CodeGeometry,
    select: impl Fn(&Coord) -> bool,
    off1: [i64; 4],
    off2: [i64; 4],
) -> Result<Vec<[u32; 3]>> {
    let mut out = Vec::new();
    for q in 0..geom.data_count() as u32 {
        let c = geom.data_coord(q);
        if !select(&c) {
            continue;
        }
        let a1 = geom.ancilla_at(geom.shift(c, off1));
        let a2 = geom.ancilla_at(geom.shift(c, off2));
        match (a1, a2) {
            (Some((t1, c1)), Some((t2, c2))) if t1 == t2 => out.push([c1, c2, q]),
            _ => {
                return Err(LecError::ContractViolation(format!(
                    "cell offsets {off1:?}/{off2:?} do not land on one ancilla class"
                )))
            }
        }
    }
    Ok(out)
}

fn odd_axes(c: &Coord) -> u8 {
    (0..4).fold(0, |m, a| if c[a] % 2 == 1 { m | 1 << a } else { m })
}

fn unit(axis: usize, s: i64) -> [i64; 4] {
    let mut v = [0; 4];
    v[axis] = s;
    v
}

fn add(a: [i64; 4], b: [i64; 4]) -> [i64; 4] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2], a[3] + b[3]]
}

/// Sign pairs of the four sweep directions, successive 90 degree rotations.
/// Directions 0 and 2 give every 4D configuration the same orientation per
/// axis, so sweeps of different configurations push errors the same way.
pub const TOOM_SIGNS: [(i64, i64); 4] = [(1, 1), (1, -1), (-1, -1), (-1, 1)];

/// Axis pairs of the six 4D sweep configurations.
const TOOM_PAIRS: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// Grouped d=1 families per type: (control axis, target odd axes) for CCX then CCZ.
const GROUPED: [[(usize, [usize; 2]); 6]; 4] = [
    [(1, [0, 1]), (2, [1, 2]), (0, [0, 3]), (0, [2, 3]), (1, [0, 2]), (2, [1, 3])],
    [(0, [0, 1]), (1, [1, 2]), (3, [0, 3]), (1, [2, 3]), (3, [0, 2]), (0, [1, 3])],
    [(3, [2, 3]), (1, [1, 3]), (2, [0, 2]), (3, [0, 1]), (2, [0, 3]), (0, [1, 2])],
    [(2, [2, 3]), (3, [1, 3]), (0, [0, 2]), (2, [0, 1]), (1, [0, 3]), (3, [1, 2])],
];

fn mask(axes: &[usize]) -> u8 {
    axes.iter().fold(0, |m, &a| m | 1 << a)
}

fn toric2d_cell(d: u8, rot: u8, target: Option<u8>) -> Option<([i64; 2], [i64; 2])> {
    let t = target.unwrap_or(0) as usize;
    let (dd, path): ([i64; 2], &[[i64; 2]]) = match d {
        1 => ([0, 2], &[[0, 1]]),
        2 => ([2, 2], &[[0, 1], [1, 2]]),
        3 => ([2, 4], &[[0, 1], [0, 3], [1, 4]]),
        _ => return None,
    };
    if rot > 3 || t >= path.len() || (d == 1) != target.is_none() {
        return None;
    }
    Some((rotate2(dd, rot), rotate2(path[t], rot)))
}

fn ising_cell(id: ActionId) -> Option<([i64; 2], [i64; 2])> {
    match id {
        ActionId::Chain { d: 1, rot, target: None } if rot < 4 => Some((rotate2([2, 0], rot), rotate2([1, 0], rot))),
        ActionId::Chain { d: 2, rot, target: None } if rot < 4 => Some((rotate2([4, 0], rot), rotate2([1, 0], rot))),
        _ => None,
    }
}

/// Compiles one action for a lattice. `order` is the Toric2D extraction order.
pub fn compile_action(id: ActionId, geom: &CodeGeometry, order: &[Direction]) -> Result<CompiledAction> {
    let kind = geom.kind();
    let unknown = || invalid(format!("action `{id}` is not defined for {kind}"));
    let all_ancillas: Vec<u32> = (0..geom.ancilla_count() as u32).collect();
    let mut steps = Vec::new();
    match (kind, id) {
        (_, ActionId::Null) | (_, ActionId::Stop) => {}
        (CodeKind::Toric2D, ActionId::SyndromeExtraction) => {
            steps.push(Step::Reset(all_ancillas.clone()));
            for l in extraction_layers(geom, &all_ancillas, order)? {
                steps.push(Step::Layer(l));
            }
        }
        (CodeKind::Toric2D, ActionId::Chain { d, rot, target }) => {
            let (dd, t) = toric2d_cell(d, rot, target).ok_or_else(unknown)?;
            let ccx = tessellate(geom, CheckType::Z, dd, t);
            let ccz = tessellate(geom, CheckType::X, dd, t);
            steps.push(Step::Layer(GateLayer::new(GateKind::Ccx, ccx, geom)?));
            steps.push(Step::Layer(GateLayer::new(GateKind::Ccz, ccz, geom)?));
        }
        (CodeKind::Ising2D, ActionId::Toom { config: None, dir }) if dir < 4 => {
            let (s0, s1) = TOOM_SIGNS[dir as usize];
            let ccx = family(geom, |_| true, unit(0, s0), unit(1, s1))?;
            push_removal(&mut steps, geom, vec![ccx], Vec::new())?;
        }
        (CodeKind::Ising2D, ActionId::Chain { .. }) => {
            let (dd, t) = ising_cell(id).ok_or_else(unknown)?;
            let ccx = tessellate(geom, CheckType::Z, dd, t);
            push_removal(&mut steps, geom, vec![ccx], Vec::new())?;
        }
        (CodeKind::Toric4D, ActionId::Toom { config: Some(c), dir }) if (1..=6).contains(&c) && dir < 4 => {
            let (i, j) = TOOM_PAIRS[c as usize - 1];
            let (si, sj) = TOOM_SIGNS[dir as usize];
            let target_x = mask(&[i, j]);
            let target_z = 0b1111 ^ target_x;
            let ccx = family(geom, |q| odd_axes(q) == target_x, unit(i, si), unit(j, sj))?;
            let ccz = family(geom, |q| odd_axes(q) == target_z, unit(i, si), unit(j, sj))?;
            push_removal(&mut steps, geom, vec![ccx], vec![ccz])?;
        }
        (CodeKind::Toric4D, ActionId::GroupedD1) | (CodeKind::Toric4D, ActionId::GroupedD11) => {
            if geom.l() % 2 != 0 {
                return Err(invalid("grouped toric4d actions need an even lattice size"));
            }
            for fams in GROUPED.iter() {
                for group in 0..2i64 {
                    let shifts: Vec<Option<(usize, i64)>> = if id == ActionId::GroupedD1 {
                        vec![None]
                    } else {
                        (0..2).flat_map(|k| [Some((k, 1)), Some((k, -1))]).collect()
                    };
                    for shift in shifts {
                        let mut ccx = Vec::new();
                        let mut ccz = Vec::new();
                        for (f, &(a, tgt)) in fams.iter().enumerate() {
                            let is_ccx = f < 3;
                            let tmask = mask(&tgt);
                            // CCX targets are odd along the control axis, CCZ targets even.
                            let residue = if is_ccx { 1 + 2 * group } else { 2 * group };
                            let mut off2 = unit(a, 1);
                            if let Some((k, s)) = shift {
                                let other = if is_ccx { tgt.iter().copied().find(|&x| x != a) } else {
                                    (0..4).find(|&x| x != a && !tgt.contains(&x))
                                };
                                let spare: Vec<usize> =
                                    (0..4).filter(|&x| x != a && Some(x) != other).collect();
                                off2 = add(off2, unit(spare[k], 2 * s));
                            }
                            let fam = family(
                                geom,
                                |q| odd_axes(q) == tmask && q[a] as i64 % 4 == residue,
                                unit(a, -1),
                                off2,
                            )?;
                            if is_ccx {
                                ccx.extend(fam);
                            } else {
                                ccz.extend(fam);
                            }
                        }
                        push_removal(&mut steps, geom, vec![ccx], vec![ccz])?;
                    }
                }
            }
        }
        _ => return Err(unknown()),
    }
    Ok(CompiledAction { steps })
}

/// Reset and re-extract the control ancillas, then the CCX and CCZ layers.
fn push_removal(
    steps: &mut Vec<Step>,
    geom: &CodeGeometry,
    ccx: Vec<Vec<[u32; 3]>>,
    ccz: Vec<Vec<[u32; 3]>>,
) -> Result<()> {
    let mut controls: Vec<u32> = ccx
        .iter()
        .chain(&ccz)
        .flatten()
        .flat_map(|t| [t[0], t[1]])
        .collect();
    controls.sort_unstable();
    controls.dedup();
    steps.push(Step::Reset(controls.clone()));
    for l in extraction_layers(geom, &controls, &canonical_directions(geom.dim()))? {
        steps.push(Step::Layer(l));
    }
    for t in ccx {
        steps.push(Step::Layer(GateLayer::new(GateKind::Ccx, t, geom)?));
    }
    for t in ccz {
        steps.push(Step::Layer(GateLayer::new(GateKind::Ccz, t, geom)?));
    }
    Ok(())
}

/// Every token of an action set compiled for one lattice.
#[derive(Clone, Debug)]
pub struct ActionLibrary {
    geom: Arc<CodeGeometry>,
    set: ActionSet,
    compiled: Vec<Arc<CompiledAction>>,
    order: Vec<Direction>,
}

impl ActionLibrary {
    pub fn new(geom: Arc<CodeGeometry>, set: ActionSet) -> Result<Self> {
        let order = canonical_directions(geom.dim());
        Self::with_order(geom, set, order)
    }

    pub fn with_order(geom: Arc<CodeGeometry>, set: ActionSet, order: Vec<Direction>) -> Result<Self> {
        if set.kind() != geom.kind() {
            return Err(LecError::GeometryMismatch(format!(
                "action set for {} used with {} lattice",
                set.kind(),
                geom.kind()
            )));
        }
        let compiled = set
            .actions()
            .iter()
            .map(|a| compile_action(a.id, &geom, &order).map(Arc::new))
            .collect::<Result<Vec<_>>>()?;
        Ok(ActionLibrary { geom, set, compiled, order })
    }

    pub fn geometry(&self) -> &Arc<CodeGeometry> {
        &self.geom
    }

    pub fn set(&self) -> &ActionSet {
        &self.set
    }

    pub fn order(&self) -> &[Direction] {
        &self.order
    }

    pub fn compiled(&self, token: usize) -> &Arc<CompiledAction> {
        &self.compiled[token]
    }

    pub fn compile_tokens(&self, tokens: &[usize]) -> CompiledCircuit {
        CompiledCircuit {
            actions: tokens.iter().map(|&t| self.compiled[t].clone()).collect(),
        }
    }

    pub fn compile(&self, circuit: &LecCircuit) -> Result<CompiledCircuit> {
        if circuit.kind != self.geom.kind() {
            return Err(LecError::GeometryMismatch(format!(
                "{} circuit used with {} lattice",
                circuit.kind,
                self.geom.kind()
            )));
        }
        let mut actions = Vec::with_capacity(circuit.actions.len());
        for &id in &circuit.actions {
            match self.set.token_of(id) {
                Some(t) => actions.push(self.compiled[t].clone()),
                None => actions.push(Arc::new(compile_action(id, &self.geom, &self.order)?)),
            }
        }
        Ok(CompiledCircuit { actions })
    }

    pub fn tokens_to_circuit(&self, tokens: &[usize]) -> LecCircuit {
        LecCircuit::new(
            self.geom.kind(),
            self.geom.l(),
            tokens.iter().map(|&t| self.set.get(t).id).collect(),
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct CompiledCircuit {
    actions: Vec<Arc<CompiledAction>>,
}

impl CompiledCircuit {
    pub fn actions(&self) -> &[Arc<CompiledAction>] {
        &self.actions
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn apply<R: Rng + ?Sized>(&self, frame: &mut PauliFrame, noise: &NoiseParams, rng: &mut R) {
        for a in &self.actions {
            a.apply(frame, noise, rng);
        }
    }
}

/// All permutations of `0..n` in lexicographic order.
pub fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut cur: Vec<usize> = (0..n).collect();
    let mut out = vec![cur.clone()];
    loop {
        let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else { return out };
        let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).unwrap();
        cur.swap(i - 1, j);
        cur[i..].reverse();
        out.push(cur.clone());
    }
}

/// Scores every ordering of `steps` for a full extraction pass from an
/// error-free state. The per-sample cost is the number of data errors left
/// plus the number of ancillas disagreeing with the true syndrome. All
/// orderings see the same random streams.
///
/// Returns the lexicographically first permutation whose mean cost is within
/// five paired standard errors of the best one.
pub fn optimize_step_order(
    geom: &CodeGeometry,
    steps: &[Direction],
    p_gate: f64,
    samples: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    use rayon::prelude::*;
    if samples == 0 {
        return Err(invalid("extraction order search needs at least one sample"));
    }
    let all: Vec<u32> = (0..geom.ancilla_count() as u32).collect();
    let noise = NoiseParams::new(0.0, p_gate);
    let perms = permutations(steps.len());
    let costs: Vec<Vec<f64>> = perms
        .iter()
        .map(|perm| {
            let order: Vec<Direction> = perm.iter().map(|&i| steps[i]).collect();
            let layers = extraction_layers(geom, &all, &order)?;
            let batches = samples.div_ceil(64);
            let cost: Vec<f64> = (0..batches)
                .into_par_iter()
                .flat_map_iter(|b| {
                    let size = 64.min(samples - 64 * b);
                    let mut rng = crate::rng::stream(seed, b as u64);
                    let mut frame = PauliFrame::new(geom, size);
                    for layer in &layers {
                        apply_gate_layer(&mut frame, layer, noise.p_gate, &mut rng);
                    }
                    let mut truth = frame.z_syndrome_words(geom);
                    truth.extend(frame.x_syndrome_words(geom));
                    let mut c = frame.error_weights_split();
                    for (a, t) in frame.anc.iter().zip(&truth) {
                        let mut diff = a ^ t;
                        while diff != 0 {
                            c[diff.trailing_zeros() as usize] += 1;
                            diff &= diff - 1;
                        }
                    }
                    c.into_iter().map(|v| v as f64)
                })
                .collect();
            Ok(cost)
        })
        .collect::<Result<_>>()?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let best = (0..perms.len())
        .min_by(|&a, &b| mean(&costs[a]).total_cmp(&mean(&costs[b])))
        .unwrap();
    for (i, perm) in perms.iter().enumerate() {
        let d: Vec<f64> = costs[i].iter().zip(&costs[best]).map(|(a, b)| a - b).collect();
        let est = crate::engine::Estimate::from_values(&d);
        if est.mean <= 5.0 * est.stderr {
            return Ok(perm.clone());
        }
    }
    Ok(perms[best].clone())
}

/// Extraction order for a code: the best permutation of the canonical directions.
pub fn optimize_extraction_order(geom: &CodeGeometry, p_gate: f64, samples: usize, seed: u64) -> Result<Vec<Direction>> {
    let base = canonical_directions(geom.dim());
    let perm = optimize_step_order(geom, &base, p_gate, samples, seed)?;
    Ok(perm.into_iter().map(|i| base[i]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_sizes() {
        assert_eq!(enumerate_actions(CodeKind::Ising2D, false).len(), 12);
        assert_eq!(enumerate_actions(CodeKind::Toric4D, false).len(), 26);
        let t = enumerate_actions(CodeKind::Toric2D, true);
        assert_eq!(t.removal_tokens().len(), 24);
        assert_eq!(t.len(), 26);
    }

    #[test]
    fn names_round_trip() {
        for kind in CodeKind::ALL {
            for a in enumerate_actions_with(kind, true, true).actions() {
                assert_eq!(a.name().parse::<ActionId>().unwrap(), a.id);
            }
        }
        assert!("d9".parse::<ActionId>().is_err());
        assert!("toom:x".parse::<ActionId>().is_err());
    }

    #[test]
    fn circuit_text_round_trip() {
        let c = baseline_circuit(CodeKind::Toric2D, 8);
        let text = c.to_text();
        assert!(text.starts_with("code=toric2d L=8 H=5\nSE\nd1:r0\n"));
        let back = LecCircuit::parse(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn circuit_parse_rejects_bad_input() {
        assert!(LecCircuit::parse("code=toric2d L=8 H=2\nSE\n").is_err());
        assert!(LecCircuit::parse("code=ising2d L=8 H=1\nSE\n").is_err());
        assert!(LecCircuit::parse("code=ising2d L=8 H=1 extra=1\ntoom:dir0\n").is_err());
        assert!(LecCircuit::parse("").is_err());
    }

    #[test]
    fn toom_4d_gate_counts() {
        let g = CodeGeometry::new(CodeKind::Toric4D, 2).unwrap();
        let a = compile_action(ActionId::Toom { config: Some(1), dir: 0 }, &g, &[]).unwrap();
        let l4 = 16;
        let counts: Vec<(GateKind, usize)> = a
            .layers()
            .filter(|l| matches!(l.kind(), GateKind::Ccx | GateKind::Ccz))
            .map(|l| (l.kind(), l.len()))
            .collect();
        assert_eq!(counts, vec![(GateKind::Ccx, l4), (GateKind::Ccz, l4)]);
    }

    #[test]
    fn grouped_sub_operation_counts() {
        let g = CodeGeometry::new(CodeKind::Toric4D, 2).unwrap();
        let d1 = compile_action(ActionId::GroupedD1, &g, &[]).unwrap();
        let d11 = compile_action(ActionId::GroupedD11, &g, &[]).unwrap();
        let ccx = |a: &CompiledAction| a.layers().filter(|l| l.kind() == GateKind::Ccx).count();
        assert_eq!(ccx(&d1), 8);
        assert_eq!(ccx(&d11), 32);
        for l in d1.layers().filter(|l| l.kind() == GateKind::Ccx) {
            assert_eq!(l.len(), 3 * 16 / 2);
        }
    }

    #[test]
    fn toric2d_cell_gate_counts() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 4).unwrap();
        let d1 = compile_action(ActionId::Chain { d: 1, rot: 0, target: None }, &g, &[]).unwrap();
        let sizes: Vec<usize> = d1.layers().map(|l| l.len()).collect();
        assert_eq!(sizes, vec![8, 8]);
    }

    #[test]
    fn permutations_are_lexicographic() {
        let p = permutations(3);
        assert_eq!(p.len(), 6);
        assert_eq!(p[0], vec![0, 1, 2]);
        assert_eq!(p[1], vec![0, 2, 1]);
        assert_eq!(p[5], vec![2, 1, 0]);
        assert_eq!(permutations(1), vec![vec![0]]);
    }

    #[test]
    fn noiseless_order_search_returns_first() {
        let g = CodeGeometry::new(CodeKind::Toric2D, 3).unwrap();
        let order = optimize_extraction_order(&g, 0.0, 64, 1).unwrap();
        assert_eq!(order, canonical_directions(2));
        let one = optimize_step_order(&g, &[(0, 1)], 0.01, 64, 1).unwrap();
        assert_eq!(one, vec![0]);
    }

    #[test]
    fn unknown_action_for_code() {
        let g = CodeGeometry::new(CodeKind::Ising2D, 4).unwrap();
        assert!(compile_action(ActionId::SyndromeExtraction, &g, &[]).is_err());
        assert!(compile_action(ActionId::Chain { d: 3, rot: 0, target: None }, &g, &[]).is_err());
    }
}
