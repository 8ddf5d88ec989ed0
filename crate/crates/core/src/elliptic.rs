//! Pure-Neumann elliptic problem for the extracellular potential.
//!
//! The assembled operator `A` has the sign of the discrete equation,
//! `(A u)_K = sum_L g_KL (u_L - u_K)`, so it is symmetric negative
//! semidefinite with constant null space. Solves run a Jacobi-preconditioned
//! conjugate gradient on `-A`.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from triplets; duplicate entries are summed and columns sorted per row.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(r, _, _) in triplets {
            counts[r + 1] += 1;
        }
        for r in 0..n {
            counts[r + 1] += counts[r];
        }
        let mut fill = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(r, c, v) in triplets {
            cols[fill[r]] = c;
            vals[fill[r]] = v;
            fill[r] += 1;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        row_ptr.push(0);
        let mut row: Vec<(usize, f64)> = Vec::new();
        for r in 0..n {
            row.clear();
            row.extend((counts[r]..counts[r + 1]).map(|k| (cols[k], vals[k])));
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                col_idx.push(c);
                values.push(s);
            }
            row_ptr.push(col_idx.len());
        }
        Self { n, row_ptr, col_idx, values }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr = s;
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]];
        match cols.binary_search(&c) {
            Ok(k) => self.values[self.row_ptr[r] + k],
            Err(_) => 0.0,
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|r| self.get(r, r)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|r| self.values[self.row_ptr[r]..self.row_ptr[r + 1]].iter().sum())
            .collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|r| {
            (self.row_ptr[r]..self.row_ptr[r + 1]).all(|k| (self.values[k] - self.get(self.col_idx[k], r)).abs() <= tol)
        })
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (r, row) in d.iter_mut().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                row[self.col_idx[k]] += self.values[k];
            }
        }
        d
    }
}

/// Assemble `A` from a list of symmetric couplings `(a, b, g)`, each contributing
/// `g (u_b - u_a)` to row `a` and `g (u_a - u_b)` to row `b`.
pub fn assemble_operator(n: usize, couplings: impl IntoIterator<Item = (usize, usize, f64)>) -> CsrMatrix {
    let mut t = Vec::new();
    for (a, b, g) in couplings {
        t.push((a, b, g));
        t.push((b, a, g));
        t.push((a, a, -g));
        t.push((b, b, -g));
    }
    CsrMatrix::from_triplets(n, &t)
}

/// The discrete elliptic problem on a fixed mesh.
#[derive(Debug, Clone)]
pub struct EllipticSystem {
    /// `A` with `(A u)_K = sum_L (d*_i + d*_e) |sigma|/d (u_L - u_K)`.
    pub matrix: CsrMatrix,
    /// `M_i` part of the coupling, used for the `v` contribution to the right-hand side.
    pub intra: CsrMatrix,
    pub areas: Vec<f64>,
}

impl EllipticSystem {
    pub fn new(matrix: CsrMatrix, intra: CsrMatrix, areas: Vec<f64>) -> Self {
        Self { matrix, intra, areas }
    }

    pub fn len(&self) -> usize {
        self.areas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.areas.is_empty()
    }

    /// `rhs_K = |K| I_app,K - sum_L d*_i |sigma|/d (v_L - v_K)`.
    pub fn rhs(&self, v: &[f64], i_app: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.len()];
        self.intra.matvec(v, &mut r);
        for k in 0..r.len() {
            r[k] = self.areas[k] * i_app[k] - r[k];
        }
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target `|r| / |b|`.
    pub tol: f64,
    /// Iteration cap; `None` means `10 n`.
    pub max_iter: Option<usize>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub solution: Vec<f64>,
    pub iterations: usize,
    /// Relative residual after each iteration (entry 0 is the initial guess).
    pub residual_history: Vec<f64>,
    /// True relative residual `|b - (-A) x| / |b|` of the returned solution.
    pub final_residual: f64,
}

/// Remove the area-weighted mean of `rhs / |K|`, making `sum rhs = 0`.
pub fn project_rhs(rhs: &mut [f64], areas: &[f64]) {
    let total: f64 = rhs.iter().sum();
    let area: f64 = areas.iter().sum();
    for (r, a) in rhs.iter_mut().zip(areas) {
        *r -= a * total / area;
    }
}

/// Shift `x` so that `sum |K| x_K = 0`.
pub fn remove_weighted_mean(x: &mut [f64], areas: &[f64]) {
    let m: f64 = x.iter().zip(areas).map(|(x, a)| x * a).sum::<f64>() / areas.iter().sum::<f64>();
    for xi in x.iter_mut() {
        *xi -= m;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solve `A u = rhs` with the zero-mean constraint `sum |K| u_K = 0`.
pub fn solve_zero_mean(system: &EllipticSystem, rhs: &[f64], x0: Option<&[f64]>, opts: SolveOptions) -> Result<SolveReport> {
    solve_zero_mean_monitored(system, rhs, x0, opts, |_| {})
}

/// As [`solve_zero_mean`], calling `monitor` with every iterate.
pub fn solve_zero_mean_monitored(
    system: &EllipticSystem,
    rhs: &[f64],
    x0: Option<&[f64]>,
    opts: SolveOptions,
    mut monitor: impl FnMut(&[f64]),
) -> Result<SolveReport> {
    let n = system.len();
    let a = &system.matrix;
    // B = -A, b = -rhs (projected)
    let mut b: Vec<f64> = rhs.iter().map(|r| -r).collect();
    project_rhs(&mut b, &system.areas);
    let b_norm = dot(&b, &b).sqrt();
    if b_norm == 0.0 {
        return Ok(SolveReport {
            solution: vec![0.0; n],
            iterations: 0,
            residual_history: vec![0.0],
            final_residual: 0.0,
        });
    }
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| if *d != 0.0 { -1.0 / d } else { 0.0 }).collect();
    let mut x = match x0 {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; n],
    };
    let mut ax = vec![0.0; n];
    a.matvec(&x, &mut ax);
    // r = b - Bx = b + Ax
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b + ax).collect();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut history = vec![dot(&r, &r).sqrt() / b_norm];
    let cap = opts.max_iter.unwrap_or(10 * n.max(1));
    let mut bp = vec![0.0; n];
    let mut iterations = 0;
    while *history.last().unwrap() > opts.tol && iterations < cap {
        a.matvec(&p, &mut bp);
        for v in bp.iter_mut() {
            *v = -*v;
        }
        let pbp = dot(&p, &bp);
        if !(pbp > 0.0) {
            break;
        }
        let alpha = rz / pbp;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * bp[k];
        }
        iterations += 1;
        monitor(&x);
        history.push(dot(&r, &r).sqrt() / b_norm);
        for k in 0..n {
            z[k] = r[k] * inv_diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    a.matvec(&x, &mut ax);
    let true_res = b.iter().zip(&ax).map(|(b, ax)| (b + ax) * (b + ax)).sum::<f64>().sqrt() / b_norm;
    if !(true_res <= opts.tol * 10.0) || !x.iter().all(|v| v.is_finite()) {
        return Err(Error::NoConvergence { iterations, final_residual: true_res, residual_history: history });
    }
    remove_weighted_mean(&mut x, &system.areas);
    Ok(SolveReport { solution: x, iterations, residual_history: history, final_residual: true_res })
}

/// 5-point operator on an `n x n` uniform grid with per-axis transmissibilities,
/// row-major with `i` fastest.
pub fn uniform_operator(n: usize, g: [f64; 2]) -> CsrMatrix {
    let mut t = Vec::with_capacity(5 * n * n);
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let mut diag = 0.0;
            let mut push = |c: usize, gc: f64| {
                t.push((k, c, gc));
                diag -= gc;
            };
            if i > 0 {
                push(k - 1, g[0]);
            }
            if i + 1 < n {
                push(k + 1, g[0]);
            }
            if j > 0 {
                push(k - n, g[1]);
            }
            if j + 1 < n {
                push(k + n, g[1]);
            }
            t.push((k, k, diag));
        }
    }
    CsrMatrix::from_triplets(n * n, &t)
}
