//! Dyadic cell addressing on the unit square.
//!
//! The physical domain is a square of side `size` mapped onto `[0,1]^2`; a
//! cell `(l, i, j)` covers `2^-l [i, i+1] x [j, j+1]` in reference coordinates.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Maximum supported refinement depth. Indices are stored as `i32`.
pub const MAX_SUPPORTED_LEVEL: u8 = 14;

/// Geometry of the dyadic hierarchy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Side length of the square domain (cm).
    pub size: f64,
    /// Finest level `L`.
    pub max_level: u8,
}

impl GridSpec {
    pub fn new(size: f64, max_level: u8) -> Result<Self> {
        let g = Self { size, max_level };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.size.is_finite() && self.size > 0.0) {
            return Err(Error::Config(format!("domain size must be positive, got {}", self.size)));
        }
        if self.max_level < 1 || self.max_level > MAX_SUPPORTED_LEVEL {
            return Err(Error::Config(format!(
                "max level must lie in 1..={MAX_SUPPORTED_LEVEL}, got {}",
                self.max_level
            )));
        }
        Ok(())
    }

    /// Physical cell width at `level`: `|Omega|^{1/2} 2^{-l}`.
    #[inline]
    pub fn h(&self, level: u8) -> f64 {
        self.size / (1u64 << level) as f64
    }

    #[inline]
    pub fn h_finest(&self) -> f64 {
        self.h(self.max_level)
    }

    /// Physical cell area at `level`.
    #[inline]
    pub fn area(&self, level: u8) -> f64 {
        let h = self.h(level);
        h * h
    }

    /// `|Omega|`.
    pub fn domain_area(&self) -> f64 {
        self.size * self.size
    }

    /// Cells per side at `level`.
    #[inline]
    pub fn cells_per_side(level: u8) -> i32 {
        1i32 << level
    }

    /// Number of cells on the finest uniform grid, `N = 4^L`.
    pub fn finest_cell_count(&self) -> usize {
        1usize << (2 * self.max_level as usize)
    }

    /// Physical center of a cell.
    pub fn center(&self, key: NodeKey) -> (f64, f64) {
        let h = self.h(key.level);
        ((key.i as f64 + 0.5) * h, (key.j as f64 + 0.5) * h)
    }
}

/// Address of a dyadic cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeKey {
    pub level: u8,
    pub i: i32,
    pub j: i32,
}

impl fmt::Display for NodeKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.level, self.i, self.j)
    }
}

impl NodeKey {
    pub const ROOT: NodeKey = NodeKey { level: 0, i: 0, j: 0 };

    #[inline]
    pub const fn new(level: u8, i: i32, j: i32) -> Self {
        Self { level, i, j }
    }

    #[inline]
    pub fn in_domain(&self) -> bool {
        let n = GridSpec::cells_per_side(self.level);
        self.i >= 0 && self.j >= 0 && self.i < n && self.j < n
    }

    #[inline]
    pub fn parent(&self) -> Option<NodeKey> {
        (self.level > 0).then(|| NodeKey::new(self.level - 1, self.i >> 1, self.j >> 1))
    }

    /// Child with offset `(p, q)`, `p, q in {0, 1}`.
    #[inline]
    pub fn child(&self, p: i32, q: i32) -> NodeKey {
        NodeKey::new(self.level + 1, 2 * self.i + p, 2 * self.j + q)
    }

    /// The four children in `(p, q)` order `(0,0), (1,0), (0,1), (1,1)`.
    #[inline]
    pub fn children(&self) -> [NodeKey; 4] {
        [self.child(0, 0), self.child(1, 0), self.child(0, 1), self.child(1, 1)]
    }

    /// Offset of this node inside its parent.
    #[inline]
    pub fn offset_in_parent(&self) -> (i32, i32) {
        (self.i & 1, self.j & 1)
    }

    /// The four siblings (including `self`).
    pub fn siblings(&self) -> Option<[NodeKey; 4]> {
        self.parent().map(|p| p.children())
    }

    #[inline]
    pub fn shifted(&self, di: i32, dj: i32) -> NodeKey {
        NodeKey::new(self.level, self.i + di, self.j + dj)
    }

    #[inline]
    pub fn neighbor(&self, dir: Direction) -> NodeKey {
        let (di, dj) = dir.offset();
        self.shifted(di, dj)
    }

    /// Map an out-of-range key back into the domain by even reflection.
    #[inline]
    pub fn mirrored(&self) -> NodeKey {
        let n = GridSpec::cells_per_side(self.level);
        NodeKey::new(self.level, mirror_index(self.i, n), mirror_index(self.j, n))
    }

    /// Ancestor at `level <= self.level`.
    pub fn ancestor(&self, level: u8) -> NodeKey {
        debug_assert!(level <= self.level);
        let s = self.level - level;
        NodeKey::new(level, self.i >> s, self.j >> s)
    }

    /// Range of finest-level indices covered by this cell at `max_level`.
    pub fn fine_range(&self, max_level: u8) -> (std::ops::Range<i32>, std::ops::Range<i32>) {
        let s = max_level - self.level;
        let i0 = self.i << s;
        let j0 = self.j << s;
        let n = 1i32 << s;
        (i0..i0 + n, j0..j0 + n)
    }
}

/// Even reflection of index `i` into `0..n` (repeated for stencils wider than the grid).
#[inline]
pub fn mirror_index(i: i32, n: i32) -> i32 {
    let m = i.rem_euclid(2 * n);
    if m >= n {
        2 * n - 1 - m
    } else {
        m
    }
}

/// Face directions of a Cartesian cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    East,
    West,
    North,
    South,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::East, Direction::West, Direction::North, Direction::South];

    #[inline]
    pub fn offset(self) -> (i32, i32) {
        match self {
            Direction::East => (1, 0),
            Direction::West => (-1, 0),
            Direction::North => (0, 1),
            Direction::South => (0, -1),
        }
    }

    #[inline]
    pub fn axis(self) -> Axis {
        match self {
            Direction::East | Direction::West => Axis::X,
            Direction::North | Direction::South => Axis::Y,
        }
    }

    pub fn opposite(self) -> Direction {
        match self {
            Direction::East => Direction::West,
            Direction::West => Direction::East,
            Direction::North => Direction::South,
            Direction::South => Direction::North,
        }
    }

    pub fn index(self) -> usize {
        match self {
            Direction::East => 0,
            Direction::West => 1,
            Direction::North => 2,
            Direction::South => 3,
        }
    }

    /// Child offsets `(p, q)` of the two children touching this face.
    pub fn face_children(self) -> [(i32, i32); 2] {
        match self {
            Direction::East => [(1, 0), (1, 1)],
            Direction::West => [(0, 0), (0, 1)],
            Direction::North => [(0, 1), (1, 1)],
            Direction::South => [(0, 0), (1, 0)],
        }
    }
}

/// Coordinate axis of a face normal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn unit(self) -> [f64; 2] {
        match self {
            Axis::X => [1.0, 0.0],
            Axis::Y => [0.0, 1.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parent_child_navigation() {
        let k = NodeKey::new(3, 5, 2);
        for c in k.children() {
            assert_eq!(c.parent(), Some(k));
        }
        assert_eq!(NodeKey::ROOT.parent(), None);
        assert_eq!(k.child(1, 0).offset_in_parent(), (1, 0));
        assert_eq!(NodeKey::new(5, 23, 9).ancestor(3), NodeKey::new(3, 5, 2));
    }

    #[test]
    fn mirror_reflects_evenly() {
        assert_eq!(mirror_index(-1, 4), 0);
        assert_eq!(mirror_index(-2, 4), 1);
        assert_eq!(mirror_index(4, 4), 3);
        assert_eq!(mirror_index(5, 4), 2);
        assert_eq!(mirror_index(2, 4), 2);
        // grids narrower than the stencil reflect repeatedly
        assert_eq!(mirror_index(-2, 1), 0);
        assert_eq!(mirror_index(2, 1), 0);
        assert_eq!(mirror_index(-3, 2), 1);
    }

    #[test]
    fn geometry() {
        let g = GridSpec::new(5.0, 9).unwrap();
        assert_eq!(g.finest_cell_count(), 262_144);
        assert!((g.h(9) - 5.0 / 512.0).abs() < 1e-15);
        assert_eq!(g.center(NodeKey::ROOT), (2.5, 2.5));
        assert!(GridSpec::new(1.0, 0).is_err());
        assert!(GridSpec::new(-1.0, 3).is_err());
    }
}
