#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Signed doubled area of `(a, b, p)`.
pub fn orient(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Closed point-in-triangle test by half-plane signs; false for zero area.
pub fn point_in_triangle(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    if orient(a, b, c) == 0.0 {
        return false;
    }
    let (d0, d1, d2) = (orient(a, b, p), orient(b, c, p), orient(c, a, p));
    (d0 >= 0.0 && d1 >= 0.0 && d2 >= 0.0) || (d0 <= 0.0 && d1 <= 0.0 && d2 <= 0.0)
}

/// Pixels of a `w x h` frame whose centers lie in at least one triangle.
pub fn brute_force_coverage(points: &[[f64; 2]], tris: &[[usize; 3]], w: usize, h: usize) -> Vec<bool> {
    (0..w * h)
        .map(|i| {
            let p = [(i % w) as f64 + 0.5, (i / w) as f64 + 0.5];
            tris.iter().any(|t| point_in_triangle(p, points[t[0]], points[t[1]], points[t[2]]))
        })
        .collect()
}

/// Central finite differences.
pub fn fd_gradient(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut y = x.to_vec();
    let mut g = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        g.push((fp - fm) / (2.0 * h));
    }
    g
}

/// Largest entry-wise difference relative to the largest reference entry.
pub fn max_rel_err(analytic: &[f64], reference: &[f64]) -> f64 {
    let scale = reference.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
    analytic
        .iter()
        .zip(reference)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
        / scale
}

pub fn uniform(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Largest `z` of the surface along the vertical line through `(x, y)`,
/// over every triangle whose closed footprint contains the point.
pub fn front_surface_z(x: f64, y: f64, verts: &[[f64; 3]], tris: &[[usize; 3]]) -> Option<f64> {
    let p = [x, y];
    tris.iter()
        .filter_map(|t| {
            let [a, b, c] = t.map(|i| [verts[i][0], verts[i][1]]);
            let area = orient(a, b, c);
            if area == 0.0 {
                return None;
            }
            let w = [orient(b, c, p) / area, orient(c, a, p) / area, orient(a, b, p) / area];
            if w.iter().any(|&v| v < -1e-9) {
                return None;
            }
            Some(w[0] * verts[t[0]][2] + w[1] * verts[t[1]][2] + w[2] * verts[t[2]][2])
        })
        .reduce(f64::max)
}
