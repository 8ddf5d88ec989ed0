//! Graded dynamic quadtree carrying cell averages, details and the
//! thresholding / refinement machinery.
//!
//! Nodes live in a hash map keyed by [`NodeKey`]; parent and child links are
//! pure key arithmetic. The tree is kept *strongly graded*: for every node
//! at level `l >= 1`, all nodes in the `(2s+1)^2` prediction stencil of its
//! parent exist (boundary indices mirrored). This makes every prediction of
//! an existing node a direct lookup and implies that edge-adjacent leaves
//! differ by at most one level.

pub mod io;
pub mod mesh;
pub mod predict;

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fvcore::{InitialCondition, StimulusEvent};
use crate::grid::{Direction, GridSpec, NodeKey};
use crate::state::{CellState, FieldMask};
use predict::{child_slot, CoarseStencil, PredictionWeights, StencilWidth};

/// How per-field details are combined into one scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetailRule {
    /// Minimum over fields for refinement, maximum for coarsening.
    #[default]
    MinMax,
    /// Maximum over fields for both decisions.
    MaxBoth,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MrConfig {
    pub eps_r: f64,
    pub stencil: StencilWidth,
    #[serde(default)]
    pub detail_rule: DetailRule,
}

impl MrConfig {
    pub fn new(eps_r: f64) -> Self {
        Self { eps_r, stencil: StencilWidth::Two, detail_rule: DetailRule::MinMax }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eps_r >= 0.0) || !self.eps_r.is_finite() {
            return Err(Error::Config(format!("eps_R must be finite and >= 0, got {}", self.eps_r)));
        }
        Ok(())
    }
}

/// `eps_l = 2^{2(l-L)} eps_R` for `l = 0..=L`.
pub fn threshold_schedule(eps_r: f64, max_level: u8) -> Vec<f64> {
    (0..=max_level).map(|l| eps_r * 4f64.powi(l as i32 - max_level as i32)).collect()
}

/// `eps_R = C 2^{-(alpha+2) L} / (|Omega| m_c + |Omega|^{3/2} 2^{2+L} m_t)` with
/// `m_c = max(|I_ion| + 2|I_app|)` and `m_t = max(|M_i| + |M_e|)`.
pub fn reference_tolerance(
    domain_area: f64,
    max_level: u8,
    max_current: f64,
    max_tensor: f64,
    c: f64,
    alpha: f64,
) -> Result<f64> {
    let l = max_level as f64;
    let denom = domain_area * max_current + domain_area.powf(1.5) * 2f64.powf(2.0 + l) * max_tensor;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Degenerate("reference tolerance denominator vanishes".into()));
    }
    Ok(c * 2f64.powf(-(alpha + 2.0) * l) / denom)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeFlags {
    pub leaf: bool,
    pub virtual_leaf: bool,
    pub deletable: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Node {
    pub value: CellState,
    pub detail: CellState,
    pub flags: NodeFlags,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdaptOptions {
    /// Nodes below this level keep their children (used by local time stepping).
    pub floor_level: u8,
    /// Nodes that must have children after the pass.
    pub forced: Vec<NodeKey>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AdaptReport {
    pub changed: bool,
    pub created: usize,
    pub removed: usize,
}

#[derive(Debug, Clone)]
pub struct Tree {
    grid: GridSpec,
    cfg: MrConfig,
    fields: FieldMask,
    weights: PredictionWeights,
    eps: Vec<f64>,
    nodes: FxHashMap<NodeKey, Node>,
    by_level: Vec<Vec<NodeKey>>,
    virtual_leaves: FxHashMap<NodeKey, CellState>,
}

impl Tree {
    /// A tree holding only the root.
    pub fn root(grid: GridSpec, cfg: MrConfig, fields: FieldMask, value: CellState) -> Self {
        let mut nodes = FxHashMap::default();
        nodes.insert(NodeKey::ROOT, Node { value, detail: CellState::ZERO, flags: NodeFlags { leaf: true, ..Default::default() } });
        let mut t = Self {
            grid,
            weights: PredictionWeights::new(cfg.stencil),
            eps: threshold_schedule(cfg.eps_r, grid.max_level),
            cfg,
            fields,
            nodes,
            by_level: Vec::new(),
            virtual_leaves: FxHashMap::default(),
        };
        t.reindex();
        t
    }

    /// The complete tree down to level `L` with exact averages of the given finest values
    /// (row-major, `i` fastest).
    pub fn full(grid: GridSpec, cfg: MrConfig, fields: FieldMask, finest: &[CellState]) -> Self {
        let big_l = grid.max_level;
        let n = GridSpec::cells_per_side(big_l) as usize;
        assert_eq!(finest.len(), n * n, "finest array has the wrong size");
        let mut t = Self::root(grid, cfg, fields, CellState::ZERO);
        t.nodes.clear();
        let mut level_vals = finest.to_vec();
        for l in (0..=big_l).rev() {
            let m = GridSpec::cells_per_side(l) as usize;
            for j in 0..m {
                for i in 0..m {
                    let key = NodeKey::new(l, i as i32, j as i32);
                    let flags = NodeFlags { leaf: l == big_l, ..Default::default() };
                    t.nodes.insert(key, Node { value: level_vals[j * m + i], detail: CellState::ZERO, flags });
                }
            }
            if l > 0 {
                let mc = m / 2;
                let mut coarse = vec![CellState::ZERO; mc * mc];
                for j in 0..mc {
                    for i in 0..mc {
                        let s = level_vals[2 * j * m + 2 * i]
                            + level_vals[2 * j * m + 2 * i + 1]
                            + level_vals[(2 * j + 1) * m + 2 * i]
                            + level_vals[(2 * j + 1) * m + 2 * i + 1];
                        coarse[j * mc + i] = s * 0.25;
                    }
                }
                level_vals = coarse;
            }
        }
        t.reindex();
        t
    }

    /// Initial tree: exact finest-level midpoint averages, thresholded and graded.
    pub fn initial(grid: GridSpec, cfg: MrConfig, fields: FieldMask, ic: &InitialCondition) -> Self {
        let finest = crate::fvcore::init_cell_averages(ic, &grid, grid.max_level);
        let mut t = Self::full(grid, cfg, fields, &finest);
        t.adapt(&AdaptOptions::default());
        t
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn config(&self) -> &MrConfig {
        &self.cfg
    }

    pub fn fields(&self) -> FieldMask {
        self.fields
    }

    pub fn max_level(&self) -> u8 {
        self.grid.max_level
    }

    pub fn eps(&self, level: u8) -> f64 {
        self.eps[level as usize]
    }

    pub fn weights(&self) -> &PredictionWeights {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, key: NodeKey) -> Option<&Node> {
        self.nodes.get(&key)
    }

    pub fn contains(&self, key: NodeKey) -> bool {
        self.nodes.contains_key(&key)
    }

    pub fn is_leaf(&self, key: NodeKey) -> bool {
        self.nodes.get(&key).is_some_and(|n| n.flags.leaf)
    }

    /// Keys of all nodes at `level`, sorted.
    pub fn level_keys(&self, level: u8) -> &[NodeKey] {
        self.by_level.get(level as usize).map_or(&[], |v| v.as_slice())
    }

    /// All leaves sorted by `(level, i, j)`.
    pub fn leaves(&self) -> Vec<NodeKey> {
        self.by_level.iter().flatten().copied().filter(|k| self.nodes[k].flags.leaf).collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.values().filter(|n| n.flags.leaf).count()
    }

    pub fn value(&self, key: NodeKey) -> Option<CellState> {
        self.nodes.get(&key).map(|n| n.value)
    }

    /// Overwrite a leaf value (internal values become stale until [`Tree::project`]).
    pub fn set_value(&mut self, key: NodeKey, value: CellState) {
        if let Some(n) = self.nodes.get_mut(&key) {
            n.value = value;
        }
    }

    pub fn set_leaf_values(&mut self, keys: &[NodeKey], values: &[CellState]) {
        for (k, v) in keys.iter().zip(values) {
            self.set_value(*k, *v);
        }
    }

    fn reindex(&mut self) {
        let mut by_level = vec![Vec::new(); self.grid.max_level as usize + 1];
        for k in self.nodes.keys() {
            by_level[k.level as usize].push(*k);
        }
        for v in by_level.iter_mut() {
            v.sort_unstable();
        }
        self.by_level = by_level;
        self.virtual_leaves.clear();
    }

    /// Bottom-up averaging of children into every internal node.
    pub fn project(&mut self) {
        for l in (0..self.grid.max_level as usize).rev() {
            for idx in 0..self.by_level[l].len() {
                let key = self.by_level[l][idx];
                if self.nodes[&key].flags.leaf {
                    continue;
                }
                let mut s = CellState::ZERO;
                for c in key.children() {
                    s += self.nodes[&c].value;
                }
                self.nodes.get_mut(&key).unwrap().value = s * 0.25;
            }
        }
    }

    /// Value of any in-domain cell: stored, or reconstructed by recursive prediction.
    pub fn value_at(&self, key: NodeKey, memo: &mut FxHashMap<NodeKey, CellState>) -> CellState {
        let key = key.mirrored();
        if let Some(n) = self.nodes.get(&key) {
            return n.value;
        }
        if let Some(v) = memo.get(&key) {
            return *v;
        }
        let parent = key.parent().expect("the root always exists");
        let st = self.stencil_values(parent, memo);
        let (p, q) = key.offset_in_parent();
        let v = self.weights.apply(&st)[child_slot(p, q)];
        memo.insert(key, v);
        v
    }

    /// Coarse stencil around `key` (mirrored at the boundary).
    pub fn stencil_values(&self, key: NodeKey, memo: &mut FxHashMap<NodeKey, CellState>) -> CoarseStencil<CellState> {
        let s = self.cfg.stencil.width();
        let mut st = [[CellState::ZERO; 5]; 5];
        for dj in -s..=s {
            for di in -s..=s {
                let q = key.shifted(di, dj).mirrored();
                st[(dj + 2) as usize][(di + 2) as usize] = match self.nodes.get(&q) {
                    Some(n) => n.value,
                    None => self.value_at(q, memo),
                };
            }
        }
        st
    }

    /// Predicted values of the four children of `key`.
    pub fn predict_children(&self, key: NodeKey) -> [CellState; 4] {
        let mut memo = FxHashMap::default();
        self.weights.apply(&self.stencil_values(key, &mut memo))
    }

    /// Store `value - prediction` on every node that has a parent.
    pub fn compute_details(&mut self) {
        let mut memo = FxHashMap::default();
        for l in 0..self.grid.max_level as usize {
            for idx in 0..self.by_level[l].len() {
                let key = self.by_level[l][idx];
                if self.nodes[&key].flags.leaf {
                    continue;
                }
                let pred = self.weights.apply(&self.stencil_values(key, &mut memo));
                for (slot, c) in key.children().into_iter().enumerate() {
                    let n = self.nodes.get_mut(&c).unwrap();
                    n.detail = n.value - pred[slot];
                }
            }
        }
    }

    /// Componentwise max-abs over leaves.
    pub fn field_maxima(&self) -> CellState {
        let mut m = CellState::ZERO;
        for n in self.nodes.values().filter(|n| n.flags.leaf) {
            m.v = m.v.max(n.value.v.abs());
            m.ue = m.ue.max(n.value.ue.abs());
            m.w = m.w.max(n.value.w.abs());
        }
        m
    }

    /// Normalized `(min over fields, max over fields)` of a detail triple.
    pub fn combine_detail(&self, d: CellState, maxima: CellState) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for f in self.fields.iter() {
            let m = maxima.get(f);
            if m > 0.0 {
                let x = d.get(f).abs() / m;
                lo = lo.min(x);
                hi = hi.max(x);
            }
        }
        if lo.is_infinite() {
            lo = 0.0;
        }
        match self.cfg.detail_rule {
            DetailRule::MinMax => (lo, hi),
            DetailRule::MaxBoth => (hi, hi),
        }
    }

    /// Thresholding, safety zone, refinement and grading in one pass.
    ///
    /// Internal nodes whose sibling group of children carries a significant detail stay
    /// refined, together with their same-level neighbors (safety zone). A child of such
    /// a node is refined one level further when its own detail passes the refinement
    /// rule. The refined set is then closed under the grading constraint.
    pub fn adapt(&mut self, opts: &AdaptOptions) -> AdaptReport {
        self.project();
        self.compute_details();
        let maxima = self.field_maxima();
        let big_l = self.grid.max_level;
        let mut refined: FxHashSet<NodeKey> = FxHashSet::default();
        let mut deletable_groups = Vec::new();
        for l in 0..big_l as usize {
            let eps = self.eps[l];
            for &key in &self.by_level[l] {
                let node = &self.nodes[&key];
                if node.flags.leaf {
                    continue;
                }
                let children = key.children();
                let group = children
                    .iter()
                    .map(|c| self.combine_detail(self.nodes[c].detail, maxima).1)
                    .fold(0.0, f64::max);
                if (key.level as usize) < opts.floor_level as usize {
                    refined.insert(key);
                }
                if group >= eps {
                    refined.insert(key);
                    for dj in -1..=1 {
                        for di in -1..=1 {
                            let q = key.shifted(di, dj);
                            if q.in_domain() {
                                refined.insert(q);
                            }
                        }
                    }
                    for c in children {
                        if c.level < big_l && self.combine_detail(self.nodes[&c].detail, maxima).0 >= eps {
                            refined.insert(c);
                        }
                    }
                } else {
                    deletable_groups.push(key);
                }
            }
        }
        refined.extend(opts.forced.iter().copied());
        for n in self.nodes.values_mut() {
            n.flags.deletable = false;
        }
        for key in deletable_groups {
            for c in key.children() {
                self.nodes.get_mut(&c).unwrap().flags.deletable = true;
            }
        }
        self.rebuild(refined)
    }

    fn closure(&self, mut refined: FxHashSet<NodeKey>) -> FxHashSet<NodeKey> {
        let big_l = self.grid.max_level;
        refined.retain(|k| k.level < big_l && k.in_domain());
        let s = self.cfg.stencil.width();
        let mut buckets = vec![Vec::new(); big_l as usize];
        for k in &refined {
            buckets[k.level as usize].push(*k);
        }
        for l in (1..big_l as usize).rev() {
            let list = std::mem::take(&mut buckets[l]);
            for p in list {
                for dj in -s..=s {
                    for di in -s..=s {
                        let par = p.shifted(di, dj).mirrored().parent().unwrap();
                        if refined.insert(par) {
                            buckets[l - 1].push(par);
                        }
                    }
                }
            }
        }
        refined
    }

    /// Replace the node set by the root plus the children of the grading closure of
    /// `refined`. Surviving nodes keep their values, new nodes are predicted top-down.
    fn rebuild(&mut self, refined: FxHashSet<NodeKey>) -> AdaptReport {
        let refined = self.closure(refined);
        if refined.len() == self.nodes.len() - self.leaf_count() && refined.iter().all(|k| self.nodes.get(k).is_some_and(|n| !n.flags.leaf)) {
            return AdaptReport::default();
        }
        let big_l = self.grid.max_level as usize;
        let mut per_level = vec![Vec::new(); big_l];
        for k in &refined {
            per_level[k.level as usize].push(*k);
        }
        let mut new_nodes: FxHashMap<NodeKey, Node> = FxHashMap::default();
        new_nodes.reserve(4 * refined.len() + 1);
        let root = self.nodes[&NodeKey::ROOT];
        new_nodes.insert(NodeKey::ROOT, root);
        let mut created = 0usize;
        let mut memo = FxHashMap::default();
        for (l, parents) in per_level.iter_mut().enumerate() {
            parents.sort_unstable();
            for &p in parents.iter() {
                let missing = p.children().iter().any(|c| !self.nodes.contains_key(c));
                let pred = if missing {
                    // stencil nodes at level l exist in `new_nodes` by the grading closure
                    let s = self.cfg.stencil.width();
                    let mut st = [[CellState::ZERO; 5]; 5];
                    for dj in -s..=s {
                        for di in -s..=s {
                            let q = p.shifted(di, dj).mirrored();
                            st[(dj + 2) as usize][(di + 2) as usize] = match new_nodes.get(&q) {
                                Some(n) => n.value,
                                None => self.value_at(q, &mut memo),
                            };
                        }
                    }
                    Some(self.weights.apply(&st))
                } else {
                    None
                };
                for (slot, c) in p.children().into_iter().enumerate() {
                    let node = match self.nodes.get(&c) {
                        Some(n) => *n,
                        None => {
                            created += 1;
                            Node { value: pred.unwrap()[slot], ..Default::default() }
                        }
                    };
                    new_nodes.insert(c, node);
                }
            }
            debug_assert!(l < big_l);
        }
        for (k, n) in new_nodes.iter_mut() {
            n.flags.leaf = !refined.contains(k);
            n.flags.virtual_leaf = false;
        }
        let removed = self.nodes.keys().filter(|k| !new_nodes.contains_key(k)).count();
        let changed = created > 0 || removed > 0 || self.nodes.iter().any(|(k, n)| n.flags.leaf != new_nodes[k].flags.leaf);
        self.nodes = new_nodes;
        self.reindex();
        AdaptReport { changed, created, removed }
    }

    fn internal_set(&self) -> FxHashSet<NodeKey> {
        self.nodes.iter().filter(|(_, n)| !n.flags.leaf).map(|(k, _)| *k).collect()
    }

    /// Split a leaf (plus whatever the grading requires). Returns `false` if `key` is not a
    /// leaf below the finest level.
    pub fn refine_node(&mut self, key: NodeKey) -> bool {
        if !self.is_leaf(key) || key.level >= self.grid.max_level {
            return false;
        }
        self.project();
        let mut r = self.internal_set();
        r.insert(key);
        self.rebuild(r);
        true
    }

    /// Merge the four leaf children of `key` into it, unless the grading forbids it.
    pub fn coarsen_node(&mut self, key: NodeKey) -> bool {
        let Some(n) = self.nodes.get(&key) else { return false };
        if n.flags.leaf || key.children().iter().any(|c| !self.is_leaf(*c)) {
            return false;
        }
        let mut r = self.internal_set();
        r.remove(&key);
        let closed = self.closure(r.clone());
        if closed.contains(&key) {
            return false;
        }
        self.project();
        self.rebuild(r);
        true
    }

    /// Verify parent/sibling completeness, the strong grading constraint, and the
    /// one-level jump rule between edge-adjacent leaves.
    pub fn check_graded(&self) -> Result<()> {
        if !self.contains(NodeKey::ROOT) {
            return Err(Error::NotGraded(NodeKey::ROOT, "root missing".into()));
        }
        let s = self.cfg.stencil.width();
        for (&k, n) in &self.nodes {
            if !k.in_domain() {
                return Err(Error::NotGraded(k, "node outside the domain".into()));
            }
            let has_children = k.children().iter().filter(|c| self.contains(**c)).count();
            if has_children != 0 && has_children != 4 {
                return Err(Error::NotGraded(k, "incomplete sibling group".into()));
            }
            if n.flags.leaf != (has_children == 0) {
                return Err(Error::NotGraded(k, "stale leaf flag".into()));
            }
            if let Some(p) = k.parent() {
                if !self.contains(p) {
                    return Err(Error::NotGraded(k, "orphan node".into()));
                }
                for dj in -s..=s {
                    for di in -s..=s {
                        let q = p.shifted(di, dj).mirrored();
                        if !self.contains(q) {
                            return Err(Error::NotGraded(k, format!("parent stencil node {q} missing")));
                        }
                    }
                }
            }
        }
        for k in self.leaves() {
            for dir in Direction::ALL {
                let nb = k.neighbor(dir);
                if !nb.in_domain() {
                    continue;
                }
                if let Some(level) = self.covering_leaf_level(nb) {
                    if level + 1 < k.level {
                        return Err(Error::NotGraded(k, format!("neighbor leaf at level {level}")));
                    }
                } else {
                    // finer side: children touching the shared face must be leaves
                    for (p, q) in dir.opposite().face_children() {
                        let c = nb.child(p, q);
                        if !self.is_leaf(c) {
                            return Err(Error::NotGraded(k, format!("neighbor {c} is refined twice")));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Level of the leaf covering `key` if that leaf is at `key.level` or coarser.
    pub fn covering_leaf_level(&self, key: NodeKey) -> Option<u8> {
        let mut k = key;
        loop {
            if let Some(n) = self.nodes.get(&k) {
                return n.flags.leaf.then_some(k.level);
            }
            k = k.parent()?;
        }
    }

    /// Leaf covering `key` if it is at `key.level` or coarser.
    pub fn covering_leaf(&self, key: NodeKey) -> Option<NodeKey> {
        let mut k = key;
        loop {
            if let Some(n) = self.nodes.get(&k) {
                return n.flags.leaf.then_some(k);
            }
            k = k.parent()?;
        }
    }

    /// Materialize the `s' = 2` nearest cousins of every leaf that are not in the tree.
    pub fn refresh_virtual_leaves(&mut self) {
        let mut memo = FxHashMap::default();
        let mut virt = FxHashMap::default();
        for k in self.leaves() {
            for dir in Direction::ALL {
                for step in 1..=2 {
                    let (di, dj) = dir.offset();
                    let c = k.shifted(step * di, step * dj);
                    if c.in_domain() && !self.contains(c) && !virt.contains_key(&c) {
                        virt.insert(c, self.value_at(c, &mut memo));
                    }
                }
            }
        }
        self.virtual_leaves = virt;
    }

    pub fn virtual_leaves(&self) -> &FxHashMap<NodeKey, CellState> {
        &self.virtual_leaves
    }

    pub fn is_virtual_leaf(&self, key: NodeKey) -> bool {
        self.virtual_leaves.contains_key(&key)
    }

    /// Reconstruct every finest-level cell by recursive prediction from its covering leaf.
    /// Row-major with `i` fastest.
    pub fn flatten(&self) -> Vec<CellState> {
        let mut prev = vec![self.nodes[&NodeKey::ROOT].value];
        let s = self.cfg.stencil.width();
        for l in 1..=self.grid.max_level {
            let mc = GridSpec::cells_per_side(l - 1);
            let m = GridSpec::cells_per_side(l) as usize;
            let mut cur = vec![CellState::ZERO; m * m];
            for jc in 0..mc {
                for ic in 0..mc {
                    let pk = NodeKey::new(l - 1, ic, jc);
                    let children = pk.children();
                    let all_stored = children.iter().all(|c| self.contains(*c));
                    let vals = if all_stored {
                        [0, 1, 2, 3].map(|k| self.nodes[&children[k]].value)
                    } else {
                        let mut st = [[CellState::ZERO; 5]; 5];
                        for dj in -s..=s {
                            for di in -s..=s {
                                let q = pk.shifted(di, dj).mirrored();
                                st[(dj + 2) as usize][(di + 2) as usize] = prev[(q.j * mc + q.i) as usize];
                            }
                        }
                        self.weights.apply(&st)
                    };
                    for (slot, c) in children.iter().enumerate() {
                        cur[c.j as usize * m + c.i as usize] = vals[slot];
                    }
                }
            }
            prev = cur;
        }
        prev
    }

    /// `(sum over leaves |K| u_K) / |Omega|`.
    pub fn mean(&self) -> CellState {
        let mut s = CellState::ZERO;
        for (k, n) in &self.nodes {
            if n.flags.leaf {
                s += n.value * 4f64.powi(-(k.level as i32));
            }
        }
        s
    }

    /// Refine every leaf whose finest subcells are split by the disc boundary down to
    /// level `L`, then add the amplitude to all leaves whose subcell centers lie inside.
    /// Returns the adaptation report of the refinement.
    pub fn apply_stimulus(&mut self, event: &StimulusEvent) -> AdaptReport {
        let big_l = self.grid.max_level;
        let h = self.grid.h(big_l);
        let n = GridSpec::cells_per_side(big_l);
        let r = event.radius_sq.max(0.0).sqrt();
        let lo_i = (((event.center[0] - r) / h).floor() as i32 - 1).clamp(0, n - 1);
        let hi_i = (((event.center[0] + r) / h).ceil() as i32 + 1).clamp(0, n - 1);
        let lo_j = (((event.center[1] - r) / h).floor() as i32 - 1).clamp(0, n - 1);
        let hi_j = (((event.center[1] + r) / h).ceil() as i32 + 1).clamp(0, n - 1);
        // class: 0 = all outside, 1 = all inside, 2 = mixed
        let mut class: FxHashMap<NodeKey, u8> = FxHashMap::default();
        for j in lo_j..=hi_j {
            for i in lo_i..=hi_i {
                let k = NodeKey::new(big_l, i, j);
                let (x, y) = self.grid.center(k);
                class.insert(k, event.contains(x, y) as u8);
            }
        }
        let mut forced = Vec::new();
        let mut level_cells: Vec<(NodeKey, u8)> = class.iter().map(|(k, c)| (*k, *c)).collect();
        for _ in 0..big_l {
            let mut up: FxHashMap<NodeKey, u8> = FxHashMap::default();
            for (k, c) in &level_cells {
                let p = k.parent().unwrap();
                up.entry(p)
                    .and_modify(|e| {
                        if *e != *c {
                            *e = 2;
                        }
                    })
                    .or_insert(*c);
            }
            // parents only partly inside the box contain outside cells
            for (p, c) in up.iter_mut() {
                let complete = p.children().iter().all(|ch| class.contains_key(ch));
                if !complete && *c != 0 {
                    *c = 2;
                }
            }
            level_cells = up.iter().map(|(k, c)| (*k, *c)).collect();
            for (k, c) in &level_cells {
                class.insert(*k, *c);
                if *c == 2 {
                    forced.push(*k);
                }
            }
        }
        forced.sort_unstable();
        let report = if forced.is_empty() {
            AdaptReport::default()
        } else {
            self.project();
            let mut r = self.internal_set();
            r.extend(forced);
            self.rebuild(r)
        };
        let leaves = self.leaves();
        for k in leaves {
            let hit = match class.get(&k) {
                Some(1) => true,
                Some(2) => {
                    let (x, y) = self.grid.center(k);
                    event.contains(x, y)
                }
                _ => false,
            };
            if hit {
                let node = self.nodes.get_mut(&k).unwrap();
                *node.value.get_mut(event.target) += event.amplitude;
            }
        }
        self.project();
        report
    }
}
