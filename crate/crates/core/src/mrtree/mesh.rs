//! Finite-volume discretization on the leaves of a graded tree.
//!
//! Every leaf is a control volume. Faces between leaves of equal level use the
//! plain two-point flux. Across a level jump the fine leaf `K` sees a virtual
//! cell `N` of its own size inside the coarse leaf; `N` is a fixed linear
//! combination of leaf values (the prediction operator, applied recursively),
//! so the flux `g (u_N - u_K)` is credited to `K` and debited from the coarse
//! leaf, which keeps the scheme conservative.

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use super::predict::child_slot;
use super::Tree;
use crate::elliptic::{assemble_operator, solve_zero_mean, EllipticSystem, SolveOptions};
use crate::error::{Error, Result};
use crate::fvcore::{applied_current, Coefficients, PointKernel};
use crate::grid::{Axis, Direction, NodeKey};
use crate::model::ModelSpec;
use crate::state::CellState;

/// Center distance of the fine/coarse pair across a level jump, in fine cell widths.
/// Used only by the (symmetric) elliptic operator.
const INTERFACE_ELLIPTIC_FACTOR: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Face {
    /// Cell receiving `+F` (the fine side across a level jump).
    pub a: u32,
    /// Cell receiving `-F` (the coarse side across a level jump).
    pub b: u32,
    pub axis: Axis,
    /// Level of the face, i.e. of its finer side.
    pub level: u8,
    /// Range into [`LeafMesh::weights`] for the virtual value replacing `u_b`.
    pub virtual_range: Option<(u32, u32)>,
}

impl Face {
    pub fn is_interface(&self) -> bool {
        self.virtual_range.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct LeafMesh {
    pub keys: Vec<NodeKey>,
    pub index: FxHashMap<NodeKey, u32>,
    pub areas: Vec<f64>,
    pub centers: Vec<[f64; 2]>,
    pub levels: Vec<u8>,
    pub faces: Vec<Face>,
    pub weights: Vec<(u32, f64)>,
    /// Faces touching each cell.
    pub cell_faces: Vec<Vec<u32>>,
}

type Combo = Vec<(u32, f64)>;

impl LeafMesh {
    pub fn new(tree: &Tree) -> Self {
        let grid = tree.grid();
        let keys = tree.leaves();
        let index: FxHashMap<NodeKey, u32> = keys.iter().enumerate().map(|(i, k)| (*k, i as u32)).collect();
        let areas = keys.iter().map(|k| grid.area(k.level)).collect();
        let centers = keys
            .iter()
            .map(|k| {
                let (x, y) = grid.center(*k);
                [x, y]
            })
            .collect();
        let levels = keys.iter().map(|k| k.level).collect();
        let mut mesh = Self {
            keys,
            index,
            areas,
            centers,
            levels,
            faces: Vec::new(),
            weights: Vec::new(),
            cell_faces: Vec::new(),
        };
        let mut memo: FxHashMap<NodeKey, Combo> = FxHashMap::default();
        for a in 0..mesh.keys.len() {
            let k = mesh.keys[a];
            for dir in Direction::ALL {
                let nb = k.neighbor(dir);
                if !nb.in_domain() {
                    continue;
                }
                if let Some(&b) = mesh.index.get(&nb) {
                    if matches!(dir, Direction::East | Direction::North) {
                        mesh.faces.push(Face { a: a as u32, b, axis: dir.axis(), level: k.level, virtual_range: None });
                    }
                } else if !tree.contains(nb) {
                    // the neighbor region is covered by a coarser leaf
                    let coarse = nb.parent().expect("level-0 neighbors are out of the domain");
                    let b = *mesh.index.get(&coarse).expect("graded tree: coarse neighbor is a leaf");
                    let combo = combo_of(tree, &mesh.index, nb, &mut memo);
                    let start = mesh.weights.len() as u32;
                    mesh.weights.extend_from_slice(&combo);
                    let end = mesh.weights.len() as u32;
                    mesh.faces.push(Face { a: a as u32, b, axis: dir.axis(), level: k.level, virtual_range: Some((start, end)) });
                }
            }
        }
        let mut cell_faces = vec![Vec::new(); mesh.keys.len()];
        for (f, face) in mesh.faces.iter().enumerate() {
            cell_faces[face.a as usize].push(f as u32);
            cell_faces[face.b as usize].push(f as u32);
        }
        mesh.cell_faces = cell_faces;
        mesh
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn index_of(&self, key: NodeKey) -> Option<usize> {
        self.index.get(&key).map(|i| *i as usize)
    }

    /// Value standing in for `u_b` on this face.
    #[inline]
    pub fn partner_value(&self, face: &Face, u: &[f64]) -> f64 {
        match face.virtual_range {
            None => u[face.b as usize],
            Some((s, e)) => self.weights[s as usize..e as usize].iter().map(|(i, w)| w * u[*i as usize]).sum(),
        }
    }

    /// `F = g (u_partner - u_a)` with `g` the transmissibility of the face axis.
    #[inline]
    pub fn face_flux(&self, face: &Face, g: [f64; 2], u: &[f64]) -> f64 {
        g[Coefficients::axis_index(face.axis)] * (self.partner_value(face, u) - u[face.a as usize])
    }

    /// `(1/|K|) sum_faces F` for every cell.
    pub fn diffusion(&self, g: [f64; 2], u: &[f64]) -> Vec<f64> {
        let fluxes: Vec<f64> = self.faces.par_iter().map(|f| self.face_flux(f, g, u)).collect();
        let mut acc = vec![0.0; self.len()];
        for (f, flux) in self.faces.iter().zip(&fluxes) {
            acc[f.a as usize] += flux;
            acc[f.b as usize] -= flux;
        }
        for (a, area) in acc.iter_mut().zip(&self.areas) {
            *a /= area;
        }
        acc
    }

    /// Symmetric two-point operator with the coarse leaf value taken directly across
    /// level jumps.
    pub fn elliptic_operator(&self, g: [f64; 2]) -> crate::elliptic::CsrMatrix {
        assemble_operator(
            self.len(),
            self.faces.iter().map(|f| {
                let factor = if f.is_interface() { INTERFACE_ELLIPTIC_FACTOR } else { 1.0 };
                (f.a as usize, f.b as usize, factor * g[Coefficients::axis_index(f.axis)])
            }),
        )
    }
}

/// Leaf-value combination equal to the cell average of `key` that the tree would
/// reconstruct: the leaf itself, the mean of the children, or the prediction from
/// the parent stencil.
fn combo_of(tree: &Tree, index: &FxHashMap<NodeKey, u32>, key: NodeKey, memo: &mut FxHashMap<NodeKey, Combo>) -> Combo {
    let key = key.mirrored();
    if let Some(&i) = index.get(&key) {
        return vec![(i, 1.0)];
    }
    if let Some(c) = memo.get(&key) {
        return c.clone();
    }
    let mut acc: FxHashMap<u32, f64> = FxHashMap::default();
    if tree.contains(key) {
        for c in key.children() {
            for (i, w) in combo_of(tree, index, c, memo) {
                *acc.entry(i).or_insert(0.0) += 0.25 * w;
            }
        }
    } else {
        let parent = key.parent().expect("the root is always stored");
        let (p, q) = key.offset_in_parent();
        let slot = child_slot(p, q);
        let weights = tree.weights();
        let s = weights.width.width();
        for dj in -s..=s {
            for di in -s..=s {
                let w = weights.weight(slot, di, dj);
                if w == 0.0 {
                    continue;
                }
                for (i, cw) in combo_of(tree, index, parent.shifted(di, dj), memo) {
                    *acc.entry(i).or_insert(0.0) += w * cw;
                }
            }
        }
    }
    let mut combo: Combo = acc.into_iter().filter(|(_, w)| *w != 0.0).collect();
    combo.sort_unstable_by_key(|(i, _)| *i);
    memo.insert(key, combo.clone());
    combo
}

/// Leaf mesh plus the model-dependent operators on it.
#[derive(Debug, Clone)]
pub struct Discretization {
    pub mesh: LeafMesh,
    pub kernel: PointKernel,
    pub coeffs: Coefficients,
    pub elliptic: Option<EllipticSystem>,
    pub model: ModelSpec,
}

impl Discretization {
    pub fn new(tree: &Tree, model: &ModelSpec) -> Self {
        let mesh = LeafMesh::new(tree);
        let coeffs = Coefficients::new(model);
        let elliptic = model.is_bidomain().then(|| {
            EllipticSystem::new(mesh.elliptic_operator(coeffs.total), mesh.elliptic_operator(coeffs.intra), mesh.areas.clone())
        });
        Self { mesh, kernel: PointKernel::new(model), coeffs, elliptic, model: model.clone() }
    }

    pub fn len(&self) -> usize {
        self.mesh.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mesh.is_empty()
    }

    pub fn i_app(&self, t: f64) -> Vec<f64> {
        if !self.model.has_applied_current(t) {
            return vec![0.0; self.len()];
        }
        self.mesh.centers.iter().map(|c| applied_current(&self.model, c[0], c[1], t)).collect()
    }

    /// Diffusion term of the potential equation: `flux_e` (bidomain) or `flux_v`.
    pub fn parabolic_diffusion(&self, u: &[CellState]) -> Vec<f64> {
        let field: Vec<f64> = if self.kernel.bidomain {
            u.iter().map(|s| s.ue).collect()
        } else {
            u.iter().map(|s| s.v).collect()
        };
        self.mesh.diffusion(self.coeffs.parabolic, &field)
    }

    /// `(dv/dt, 0, dw/dt)` on every leaf.
    pub fn rates(&self, u: &[CellState], t: f64) -> Vec<CellState> {
        let diff = self.parabolic_diffusion(u);
        let iapp = self.i_app(t);
        u.par_iter()
            .zip(diff.par_iter())
            .zip(iapp.par_iter())
            .map(|((s, d), a)| self.kernel.rates(*s, *d, *a))
            .collect()
    }

    pub fn max_current(&self, u: &[CellState], t: f64) -> f64 {
        let iapp = self.i_app(t);
        u.par_iter()
            .zip(iapp.par_iter())
            .map(|(s, a)| self.kernel.current_magnitude(*s, *a))
            .reduce(|| 0.0, f64::max)
    }

    /// Recompute `u_e` from `v` (no-op for the monodomain). Returns the CG iteration count.
    pub fn solve_elliptic(&self, u: &mut [CellState], t: f64, opts: SolveOptions) -> Result<usize> {
        let Some(sys) = &self.elliptic else { return Ok(0) };
        let v: Vec<f64> = u.iter().map(|s| s.v).collect();
        let ue: Vec<f64> = u.iter().map(|s| s.ue).collect();
        let rhs = sys.rhs(&v, &self.i_app(t));
        let rep = solve_zero_mean(sys, &rhs, Some(&ue), opts)?;
        for (s, x) in u.iter_mut().zip(rep.solution) {
            s.ue = x;
        }
        Ok(rep.iterations)
    }

    /// Explicit Euler from `t` to `t + dt`, followed by the elliptic solve at `t + dt`.
    pub fn euler_step(&self, u: &mut [CellState], t: f64, dt: f64, opts: SolveOptions) -> Result<usize> {
        let r = self.rates(u, t);
        u.par_iter_mut().zip(r.par_iter()).for_each(|(s, r)| {
            s.v += dt * r.v;
            s.w += dt * r.w;
        });
        let it = self.solve_elliptic(u, t + dt, opts)?;
        check_finite(u, t + dt)?;
        Ok(it)
    }

    /// `sum |K| v_K`.
    pub fn total_v(&self, u: &[CellState]) -> f64 {
        u.iter().zip(&self.mesh.areas).map(|(s, a)| s.v * a).sum()
    }
}

pub fn check_finite(u: &[CellState], t: f64) -> Result<()> {
    for s in u {
        if !s.is_finite() {
            let field = if !s.v.is_finite() {
                "v"
            } else if !s.ue.is_finite() {
                "u_e"
            } else {
                "w"
            };
            return Err(Error::NonFinite { field, time: t });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fvcore::InitialCondition;
    use crate::grid::GridSpec;
    use crate::mrtree::MrConfig;
    use crate::state::FieldMask;

    fn tree_with_jump() -> Tree {
        let g = GridSpec::new(1.0, 5).unwrap();
        let mut t = Tree::root(g, MrConfig::new(1.0), FieldMask::MONODOMAIN, CellState::ZERO);
        assert!(t.refine_node(NodeKey::ROOT));
        for l in 1..5 {
            let k = NodeKey::new(l, 0, 0);
            assert!(t.refine_node(k));
        }
        t
    }

    fn tree_with_island() -> Tree {
        let g = GridSpec::new(1.0, 5).unwrap();
        let mut t = Tree::root(g, MrConfig::new(1.0), FieldMask::MONODOMAIN, CellState::ZERO);
        for l in 0..3 {
            for k in t.leaves().into_iter().filter(|k| k.level == l) {
                t.refine_node(k);
            }
        }
        assert!(t.refine_node(NodeKey::new(3, 3, 3)));
        assert!(t.refine_node(NodeKey::new(3, 4, 4)));
        t
    }

    #[test]
    fn faces_are_unique_and_cover_every_leaf_side() {
        for t in [tree_with_jump(), tree_with_island()] {
            t.check_graded().unwrap();
            let m = LeafMesh::new(&t);
            let mut seen = rustc_hash::FxHashSet::default();
            let mut covered = vec![0.0; m.len()];
            for f in &m.faces {
                assert!(seen.insert((f.a, f.b, f.axis == Axis::X, f.level)));
                if f.is_interface() {
                    assert_eq!(m.levels[f.a as usize], m.levels[f.b as usize] + 1);
                } else {
                    assert_eq!(m.levels[f.a as usize], m.levels[f.b as usize]);
                }
                covered[f.a as usize] += t.grid().h(f.level);
                covered[f.b as usize] += t.grid().h(f.level);
            }
            for (c, k) in m.keys.iter().enumerate() {
                let sides = Direction::ALL.iter().filter(|d| k.neighbor(**d).in_domain()).count() as f64;
                assert!((covered[c] - sides * t.grid().h(k.level)).abs() < 1e-12, "{k}");
            }
        }
    }

    #[test]
    fn virtual_combos_reproduce_constants_and_linears() {
        let t = tree_with_island();
        let m = LeafMesh::new(&t);
        let u: Vec<f64> = m.centers.iter().map(|c| 3.0 * c[0] - c[1]).collect();
        let mut checked = 0;
        for f in m.faces.iter().filter(|f| f.is_interface()) {
            let (s, e) = f.virtual_range.unwrap();
            let sum: f64 = m.weights[s as usize..e as usize].iter().map(|(_, w)| w).sum();
            assert!((sum - 1.0).abs() < 1e-12);
            let k = m.keys[f.a as usize];
            let coarse = m.keys[f.b as usize];
            let nb = Direction::ALL.into_iter().map(|d| k.neighbor(d)).find(|n| n.parent() == Some(coarse)).unwrap();
            let (x, y) = t.grid().center(nb);
            assert!((m.partner_value(f, &u) - (3.0 * x - y)).abs() < 1e-12);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn diffusion_conserves_mass_on_adaptive_mesh() {
        let t = tree_with_jump();
        let m = LeafMesh::new(&t);
        let u: Vec<f64> = m.centers.iter().map(|c| (5.0 * c[0]).sin() + c[1] * c[1]).collect();
        let d = m.diffusion([0.3, 0.7], &u);
        let total: f64 = d.iter().zip(&m.areas).map(|(d, a)| d * a).sum();
        assert!(total.abs() < 1e-12);
    }

    #[test]
    fn elliptic_operator_is_symmetric_with_zero_row_sums() {
        let t = tree_with_jump();
        let m = LeafMesh::new(&t);
        let a = m.elliptic_operator([1.0, 2.0]);
        assert!(a.is_symmetric(1e-14));
        assert!(a.row_sums().iter().all(|s| s.abs() < 1e-12));
    }

    #[test]
    fn uniform_tree_matches_uniform_solver() {
        use crate::fvcore::uniform::UniformSolver;
        use crate::kinetics::{ConductivitySpec, FhnParams, Kinetics, ModelConstants};
        use crate::model::ModelKind;
        let g = GridSpec::new(1.0, 4).unwrap();
        let model = ModelSpec {
            kind: ModelKind::Monodomain,
            constants: ModelConstants { beta: 1.0, c_m: 1.0, lambda_mono: 1.0 },
            kinetics: Kinetics::Fhn(FhnParams::EXAMPLE1),
            conductivity_i: ConductivitySpec { sigma_l: 0.02, sigma_t: 0.01, fiber_angle: 0.0 },
            conductivity_e: None,
            applied_currents: vec![],
        };
        let ic = InitialCondition::CornerSigmoid { steepness: 10.0, radius: 0.4 };
        let mut uni = UniformSolver::new(g, 4, model.clone(), &ic).unwrap();
        let tree = Tree::full(g, MrConfig::new(0.0), FieldMask::MONODOMAIN, &uni.values);
        let disc = Discretization::new(&tree, &model);
        let mut u: Vec<CellState> = disc.mesh.keys.iter().map(|k| tree.value(*k).unwrap()).collect();
        uni.euler_step(1e-3).unwrap();
        disc.euler_step(&mut u, 0.0, 1e-3, SolveOptions::default()).unwrap();
        for (k, s) in disc.mesh.keys.iter().zip(&u) {
            let r = uni.values[(k.j * 16 + k.i) as usize];
            assert!((r.v - s.v).abs() < 1e-14 && (r.w - s.w).abs() < 1e-14);
        }
    }
}
