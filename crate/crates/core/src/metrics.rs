//! Compression rate, speed-up, errors against a reference and simple shape
//! diagnostics of the wavefront.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, NodeKey};
use crate::state::{CellState, Field};

/// `eta = N / (2^{-(L+1)} N + #leaves)`.
pub fn compression_rate(finest_cells: usize, max_level: u8, leaf_count: usize) -> f64 {
    let n = finest_cells as f64;
    n / (n * 2f64.powi(-(max_level as i32 + 1)) + leaf_count as f64)
}

/// `V = cpu_fv / cpu_mr`; absent unless both timings are present and positive.
pub fn speedup(cpu_fv: Option<f64>, cpu_mr: Option<f64>) -> Option<f64> {
    match (cpu_fv, cpu_mr) {
        (Some(a), Some(b)) if a > 0.0 && b > 0.0 => Some(a / b),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub e1: f64,
    pub e2: f64,
    pub e_inf: f64,
}

/// Average of the reference cells (level `ref_level`, row-major, `i` fastest) covered by `key`.
pub fn project_reference(key: NodeKey, reference: &[f64], ref_level: u8) -> Result<f64> {
    if key.level > ref_level {
        return Err(Error::Resolution(format!("leaf {key} is finer than the reference level {ref_level}")));
    }
    let n = GridSpec::cells_per_side(ref_level) as usize;
    if reference.len() != n * n {
        return Err(Error::Resolution(format!("reference has {} cells, expected {}", reference.len(), n * n)));
    }
    let (ri, rj) = key.fine_range(ref_level);
    let mut s = 0.0;
    let mut c = 0usize;
    for j in rj {
        let row = j as usize * n;
        for i in ri.clone() {
            s += reference[row + i as usize];
            c += 1;
        }
    }
    Ok(s / c as f64)
}

/// `e_inf = max |diff|`, `e_p = ((1/#leaves) sum |diff|^p)^{1/p}` over leaves, the
/// reference projected onto every leaf.
pub fn lp_errors(keys: &[NodeKey], values: &[f64], reference: &[f64], ref_level: u8) -> Result<ErrorReport> {
    if keys.len() != values.len() || keys.is_empty() {
        return Err(Error::Resolution("leaf keys and values differ in length".into()));
    }
    let mut r = ErrorReport::default();
    for (k, v) in keys.iter().zip(values) {
        let d = (v - project_reference(*k, reference, ref_level)?).abs();
        r.e1 += d;
        r.e2 += d * d;
        r.e_inf = r.e_inf.max(d);
    }
    let n = keys.len() as f64;
    r.e1 /= n;
    r.e2 = (r.e2 / n).sqrt();
    Ok(r)
}

/// Errors in `v` and, when present, `u_e`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FieldErrors {
    pub v: ErrorReport,
    pub ue: Option<ErrorReport>,
}

pub fn field_errors(keys: &[NodeKey], values: &[CellState], reference: &[CellState], ref_level: u8, with_ue: bool) -> Result<FieldErrors> {
    let pick = |src: &[CellState], f: Field| src.iter().map(|s| s.get(f)).collect::<Vec<f64>>();
    let v = lp_errors(keys, &pick(values, Field::V), &pick(reference, Field::V), ref_level)?;
    let ue = if with_ue {
        Some(lp_errors(keys, &pick(values, Field::Ue), &pick(reference, Field::Ue), ref_level)?)
    } else {
        None
    };
    Ok(FieldErrors { v, ue })
}

/// Area-weighted `L^1` distance between two finest-level arrays.
pub fn l1_distance(a: &[f64], b: &[f64], cell_area: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * cell_area
}

/// Shape of a field's footprint from the second moments of `|f|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub centroid: [f64; 2],
    /// `sqrt(lambda_max / lambda_min)` of the second-moment matrix.
    pub eccentricity: f64,
    /// Angle of the major axis with the x-axis, in `(-pi/2, pi/2]`.
    pub major_axis_angle: f64,
}

pub fn footprint(values: &[f64], level: u8, h: f64) -> Option<Footprint> {
    let n = GridSpec::cells_per_side(level) as usize;
    let mut m0 = 0.0;
    let (mut mx, mut my) = (0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let w = values[j * n + i].abs();
            m0 += w;
            mx += w * (i as f64 + 0.5) * h;
            my += w * (j as f64 + 0.5) * h;
        }
    }
    if !(m0 > 0.0) {
        return None;
    }
    let (cx, cy) = (mx / m0, my / m0);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for j in 0..n {
        for i in 0..n {
            let w = values[j * n + i].abs();
            let dx = (i as f64 + 0.5) * h - cx;
            let dy = (j as f64 + 0.5) * h - cy;
            sxx += w * dx * dx;
            syy += w * dy * dy;
            sxy += w * dx * dy;
        }
    }
    let tr = (sxx + syy) / m0;
    let det = (sxx * syy - sxy * sxy) / (m0 * m0);
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let (l1, l2) = (0.5 * tr + disc, 0.5 * tr - disc);
    let ecc = if l2 > 0.0 { (l1 / l2).sqrt() } else { f64::INFINITY };
    let angle = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(Footprint { centroid: [cx, cy], eccentricity: ecc, major_axis_angle: angle })
}

/// Fraction of the area of each distance band around the front that is covered by
/// finest-level leaves. Distances are Chebyshev distances, in finest cells, to the
/// nearest front cell (a finest cell whose value and that of an edge neighbor lie
/// on different sides of `level_value`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontDensity {
    /// Upper band edges (inclusive), in finest cells; the last band is open.
    pub bands: Vec<u32>,
    /// Finest-leaf area fraction per band (`bands.len() + 1` entries; NaN when empty).
    pub density: Vec<f64>,
    /// Share of all finest-level leaf area lying within `bands[0]` cells of the front.
    pub finest_share_near_front: f64,
    pub front_cells: usize,
}

pub fn front_density(flat: &[f64], leaf_keys: &[NodeKey], max_level: u8, level_value: f64, bands: &[u32]) -> FrontDensity {
    let n = GridSpec::cells_per_side(max_level) as usize;
    let above = |k: usize| flat[k] >= level_value;
    let mut front = Vec::new();
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let cross = (i + 1 < n && above(k) != above(k + 1))
                || (i > 0 && above(k) != above(k - 1))
                || (j + 1 < n && above(k) != above(k + n))
                || (j > 0 && above(k) != above(k - n));
            if cross {
                front.push((i as i64, j as i64));
            }
        }
    }
    // Chebyshev distance transform by two raster passes
    let inf = u32::MAX / 2;
    let mut dist = vec![inf; n * n];
    for (i, j) in &front {
        dist[*j as usize * n + *i as usize] = 0;
    }
    for j in 0..n {
        for i in 0..n {
            let k = j * n + i;
            let mut d = dist[k];
            for (di, dj) in [(-1i64, 0i64), (-1, -1), (0, -1), (1, -1)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= 0 && jj >= 0 && (ii as usize) < n {
                    d = d.min(dist[jj as usize * n + ii as usize] + 1);
                }
            }
            dist[k] = d;
        }
    }
    for j in (0..n).rev() {
        for i in (0..n).rev() {
            let k = j * n + i;
            let mut d = dist[k];
            for (di, dj) in [(1i64, 0i64), (1, 1), (0, 1), (-1, 1)] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if ii >= 0 && (ii as usize) < n && (jj as usize) < n {
                    d = d.min(dist[jj as usize * n + ii as usize] + 1);
                }
            }
            dist[k] = d;
        }
    }
    let mut finest = vec![false; n * n];
    for k in leaf_keys.iter().filter(|k| k.level == max_level) {
        finest[k.j as usize * n + k.i as usize] = true;
    }
    let band_of = |d: u32| bands.iter().position(|b| d <= *b).unwrap_or(bands.len());
    let mut total = vec![0usize; bands.len() + 1];
    let mut fine = vec![0usize; bands.len() + 1];
    for k in 0..n * n {
        let b = band_of(dist[k]);
        total[b] += 1;
        if finest[k] {
            fine[b] += 1;
        }
    }
    let all_fine: usize = fine.iter().sum();
    FrontDensity {
        bands: bands.to_vec(),
        density: total.iter().zip(&fine).map(|(t, f)| if *t == 0 { f64::NAN } else { *f as f64 / *t as f64 }).collect(),
        finest_share_near_front: if all_fine == 0 { 0.0 } else { fine[0] as f64 / all_fine as f64 },
        front_cells: front.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn compression_fixtures() {
        assert!((compression_rate(65536, 9, 4096) - 65536.0 / 4160.0).abs() < 1e-12);
        let full = compression_rate(1024, 5, 1024);
        assert!((full - 1.0 / (1.0 / 64.0 + 1.0)).abs() < 1e-15);
        assert!(compression_rate(1024, 5, 100) > compression_rate(1024, 5, 101));
    }

    #[test]
    fn speedup_fixtures() {
        assert_eq!(speedup(Some(2.0), Some(2.0)), Some(1.0));
        assert_eq!(speedup(Some(26.0), Some(1.0)), Some(26.0));
        assert_eq!(speedup(None, Some(1.0)), None);
        assert_eq!(speedup(Some(1.0), Some(0.0)), None);
    }

    #[test]
    fn single_leaf_error() {
        let reference = vec![1.0; 16];
        let r = lp_errors(&[NodeKey::ROOT], &[1.25], &reference, 2).unwrap();
        assert_eq!(r, ErrorReport { e1: 0.25, e2: 0.25, e_inf: 0.25 });
        assert!(lp_errors(&[NodeKey::new(3, 0, 0)], &[0.0], &reference, 2).is_err());
        assert!(lp_errors(&[NodeKey::ROOT], &[0.0], &reference[..15], 2).is_err());
    }

    #[test]
    fn errors_match_naive_oracle() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(9);
        let reference: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // quadrants at levels 1, 2 (one quadrant split), 3 (one subquadrant split)
        let mut keys = vec![NodeKey::new(1, 1, 0), NodeKey::new(1, 0, 1), NodeKey::new(1, 1, 1)];
        keys.extend([NodeKey::new(2, 1, 0), NodeKey::new(2, 0, 1), NodeKey::new(2, 1, 1)]);
        keys.extend(NodeKey::new(2, 0, 0).children());
        let values: Vec<f64> = keys.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let got = lp_errors(&keys, &values, &reference, 3).unwrap();
        let mut e = Vec::new();
        for (k, v) in keys.iter().zip(&values) {
            let w = 1usize << (3 - k.level);
            let mut s = 0.0;
            for j in 0..w {
                for i in 0..w {
                    s += reference[(k.j as usize * w + j) * 8 + k.i as usize * w + i];
                }
            }
            e.push((v - s / (w * w) as f64).abs());
        }
        let n = e.len() as f64;
        assert!((got.e1 - e.iter().sum::<f64>() / n).abs() < 1e-14);
        assert!((got.e2 - (e.iter().map(|x| x * x).sum::<f64>() / n).sqrt()).abs() < 1e-14);
        assert_eq!(got.e_inf, e.iter().copied().fold(0.0, f64::max));
    }

    #[test]
    fn footprint_of_tilted_ellipse() {
        let n = 64usize;
        let h = 1.0 / n as f64;
        let (c, s) = (std::f64::consts::FRAC_PI_4.cos(), std::f64::consts::FRAC_PI_4.sin());
        let vals: Vec<f64> = (0..n * n)
            .map(|k| {
                let (x, y) = (((k % n) as f64 + 0.5) * h - 0.5, ((k / n) as f64 + 0.5) * h - 0.5);
                let (a, b) = (c * x + s * y, -s * x + c * y);
                (-(a * a) / 0.02 - (b * b) / 0.005).exp()
            })
            .collect();
        let f = footprint(&vals, 6, h).unwrap();
        assert!((f.eccentricity - 2.0).abs() < 0.05, "{}", f.eccentricity);
        assert!((f.major_axis_angle - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
        let iso: Vec<f64> = (0..n * n).map(|_| 1.0).collect();
        assert!((footprint(&iso, 6, h).unwrap().eccentricity - 1.0).abs() < 1e-12);
        assert!(footprint(&vec![0.0; n * n], 6, h).is_none());
    }

    #[test]
    fn front_density_of_a_step() {
        // vertical step at i = 4 on an 8x8 grid, finest leaves on columns 2..6
        let flat: Vec<f64> = (0..64).map(|k| if k % 8 < 4 { 1.0 } else { 0.0 }).collect();
        let keys: Vec<NodeKey> = (0..64).filter(|k| (2..6).contains(&(k % 8))).map(|k| NodeKey::new(3, k % 8, k / 8)).collect();
        let d = front_density(&flat, &keys, 3, 0.5, &[0, 1]);
        assert_eq!(d.front_cells, 16);
        assert_eq!(d.density[0], 1.0);
        assert_eq!(d.density[1], 1.0);
        assert_eq!(d.density[2], 0.0);
        assert!((d.finest_share_near_front - 0.5).abs() < 1e-15);
    }
}
