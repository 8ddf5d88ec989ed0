//! Polynomial prediction of child averages from a coarse stencil.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width `s` of the prediction stencil.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum StencilWidth {
    One,
    Two,
}

impl TryFrom<u8> for StencilWidth {
    type Error = Error;
    fn try_from(s: u8) -> Result<Self> {
        match s {
            1 => Ok(StencilWidth::One),
            2 => Ok(StencilWidth::Two),
            _ => Err(Error::Config(format!("stencil width must be 1 or 2, got {s}"))),
        }
    }
}

impl From<StencilWidth> for u8 {
    fn from(s: StencilWidth) -> u8 {
        s.width() as u8
    }
}

impl StencilWidth {
    pub fn width(self) -> i32 {
        match self {
            StencilWidth::One => 1,
            StencilWidth::Two => 2,
        }
    }

    /// `gamma~_n`, `n = 1..=s`.
    pub fn gammas(self) -> &'static [f64] {
        match self {
            StencilWidth::One => &[-1.0 / 8.0],
            StencilWidth::Two => &[-22.0 / 128.0, 3.0 / 128.0],
        }
    }
}

/// Side length of the coarse stencil array (always 5, unused entries zero for `s = 1`).
pub const STENCIL_SIDE: usize = 5;

/// Coarse values `u[dj + 2][di + 2]` for offsets `di, dj in -2..=2`.
pub type CoarseStencil<T> = [[T; STENCIL_SIDE]; STENCIL_SIDE];

/// Predicted averages of the four children in order `(0,0), (1,0), (0,1), (1,1)`:
/// `u + (-1)^e1 Q_x + (-1)^e2 Q_y + (-1)^(e1+e2) Q_xy`.
pub fn predict_children(u: &CoarseStencil<f64>, s: StencilWidth) -> [f64; 4] {
    let at = |di: i32, dj: i32| u[(dj + 2) as usize][(di + 2) as usize];
    let g = s.gammas();
    let mut qx = 0.0;
    let mut qy = 0.0;
    let mut qxy = 0.0;
    for (a, ga) in g.iter().enumerate() {
        let n = a as i32 + 1;
        qx += ga * (at(n, 0) - at(-n, 0));
        qy += ga * (at(0, n) - at(0, -n));
        for (b, gb) in g.iter().enumerate() {
            let p = b as i32 + 1;
            qxy += ga * gb * (at(n, p) - at(n, -p) - at(-n, p) + at(-n, -p));
        }
    }
    let c = at(0, 0);
    [c + qx + qy + qxy, c - qx + qy - qxy, c + qx - qy - qxy, c - qx - qy + qxy]
}

/// Linear weights of [`predict_children`]: `weights[child][dj + 2][di + 2]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionWeights {
    pub width: StencilWidth,
    pub weights: [CoarseStencil<f64>; 4],
}

impl PredictionWeights {
    pub fn new(width: StencilWidth) -> Self {
        let mut weights = [[[0.0; STENCIL_SIDE]; STENCIL_SIDE]; 4];
        for dj in 0..STENCIL_SIDE {
            for di in 0..STENCIL_SIDE {
                let mut unit = [[0.0; STENCIL_SIDE]; STENCIL_SIDE];
                unit[dj][di] = 1.0;
                let p = predict_children(&unit, width);
                for c in 0..4 {
                    weights[c][dj][di] = p[c];
                }
            }
        }
        Self { width, weights }
    }

    /// Stencil offsets with a nonzero weight for at least one child.
    pub fn support(&self) -> Vec<(i32, i32)> {
        let s = self.width.width();
        let mut out = Vec::new();
        for dj in -s..=s {
            for di in -s..=s {
                if (0..4).any(|c| self.weights[c][(dj + 2) as usize][(di + 2) as usize] != 0.0) {
                    out.push((di, dj));
                }
            }
        }
        out
    }

    #[inline]
    pub fn weight(&self, child: usize, di: i32, dj: i32) -> f64 {
        self.weights[child][(dj + 2) as usize][(di + 2) as usize]
    }

    /// Apply to a full stencil of generic values.
    pub fn apply<T>(&self, u: &CoarseStencil<T>) -> [T; 4]
    where
        T: Copy + Default + std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
    {
        let mut out = [T::default(); 4];
        let s = self.width.width();
        for dj in -s..=s {
            for di in -s..=s {
                let x = u[(dj + 2) as usize][(di + 2) as usize];
                for (c, o) in out.iter_mut().enumerate() {
                    let w = self.weight(c, di, dj);
                    if w != 0.0 {
                        *o = *o + x * w;
                    }
                }
            }
        }
        out
    }
}

/// Index of child `(p, q)` in the canonical order.
#[inline]
pub fn child_slot(p: i32, q: i32) -> usize {
    (p + 2 * q) as usize
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn stencil(mut f: impl FnMut(i32, i32) -> f64) -> CoarseStencil<f64> {
        let mut u = [[0.0; 5]; 5];
        for dj in -2..=2 {
            for di in -2..=2 {
                u[(dj + 2) as usize][(di + 2) as usize] = f(di, dj);
            }
        }
        u
    }

    #[test]
    fn constant_is_preserved() {
        for s in [StencilWidth::One, StencilWidth::Two] {
            assert_eq!(predict_children(&stencil(|_, _| 3.5), s), [3.5; 4]);
        }
    }

    #[test]
    fn linear_field_fixes_orientation() {
        // coarse averages 0..4 along x around a parent valued 2
        for s in [StencilWidth::One, StencilWidth::Two] {
            let p = predict_children(&stencil(|di, _| (di + 2) as f64), s);
            assert!((p[child_slot(0, 0)] - 1.75).abs() < 1e-15);
            assert!((p[child_slot(1, 0)] - 2.25).abs() < 1e-15);
            let p = predict_children(&stencil(|_, dj| (dj + 2) as f64), s);
            assert!((p[child_slot(0, 0)] - 1.75).abs() < 1e-15);
            assert!((p[child_slot(0, 1)] - 2.25).abs() < 1e-15);
        }
    }

    #[test]
    fn reproduces_x_y_xy() {
        // Coarse cells of unit width centered at integers: the averages of x, y and x y
        // are the center values; children of width 1/2 have centers at +-1/4.
        let s = StencilWidth::Two;
        for f in [
            Box::new(|x: f64, _y: f64| x) as Box<dyn Fn(f64, f64) -> f64>,
            Box::new(|_x: f64, y: f64| y),
            Box::new(|x: f64, y: f64| x * y),
        ] {
            let p = predict_children(&stencil(|di, dj| f(di as f64, dj as f64)), s);
            for q in 0..2 {
                for pp in 0..2 {
                    let cx = if pp == 0 { -0.25 } else { 0.25 };
                    let cy = if q == 0 { -0.25 } else { 0.25 };
                    assert!((p[child_slot(pp, q)] - f(cx, cy)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn quadratics_reproduced_with_wide_stencil() {
        // x^2: coarse average over [k-1/2, k+1/2] is k^2 + 1/12, child averages
        // over width 1/2 at c are c^2 + 1/48.
        let p = predict_children(&stencil(|di, _| (di * di) as f64 + 1.0 / 12.0), StencilWidth::Two);
        assert!((p[0] - (0.0625 + 1.0 / 48.0)).abs() < 1e-14);
        assert!((p[1] - (0.0625 + 1.0 / 48.0)).abs() < 1e-14);
    }

    #[test]
    fn right_inverse_of_projection() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        for s in [StencilWidth::One, StencilWidth::Two] {
            for _ in 0..1000 {
                let u = stencil(|_, _| rng.gen_range(-10.0..10.0));
                let p = predict_children(&u, s);
                let mean = p.iter().sum::<f64>() / 4.0;
                assert!((mean - u[2][2]).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn weights_match_formula() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let w = PredictionWeights::new(StencilWidth::Two);
        let u = stencil(|_, _| rng.gen_range(-1.0..1.0));
        let a = predict_children(&u, StencilWidth::Two);
        let b = w.apply(&u);
        for c in 0..4 {
            assert!((a[c] - b[c]).abs() < 1e-14);
        }
        assert_eq!(PredictionWeights::new(StencilWidth::One).support().len(), 9);
        // s = 2 uses the plus-shaped arms and the full 4x4 corner block
        assert_eq!(w.support().len(), 25);
    }

    #[test]
    fn stencil_width_parses() {
        assert_eq!(StencilWidth::try_from(2).unwrap(), StencilWidth::Two);
        assert!(StencilWidth::try_from(3).is_err());
    }
}
