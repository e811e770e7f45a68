use super::{from_normalized, FaceMask, SamplingGrid, UvMap};
use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::model::ProjectedVertices;
use crate::raster::VisibilityMask;

/// Two lattice taps along one axis: `(1 - frac) * a[lo] + frac * a[hi]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Taps {
    pub(crate) lo: usize,
    pub(crate) hi: usize,
    pub(crate) frac: f64,
    /// False when the coordinate was clamped to the border.
    inside: bool,
}

pub(crate) fn taps(u: f64, extent: usize) -> Taps {
    let max = (extent - 1) as f64;
    let inside = (0.0..=max).contains(&u);
    let u = u.clamp(0.0, max);
    let lo = (u.floor() as usize).min(extent - 1);
    let hi = (lo + 1).min(extent - 1);
    Taps {
        lo,
        hi,
        frac: u - lo as f64,
        inside,
    }
}

/// Bilinear sample at lattice coordinates (pixel `j` at `u = j`), border
/// clamped, written into `out` (one value per channel).
fn bilinear_lattice(image: &impl Planar, u: f64, v: f64, out: &mut [f64]) {
    let tx = taps(u, image.width());
    let ty = taps(v, image.height());
    let data = image.data();
    for (c, o) in out.iter_mut().enumerate() {
        let at = |x: usize, y: usize| data[image.index(x, y, c)];
        let top = (1.0 - tx.frac) * at(tx.lo, ty.lo) + tx.frac * at(tx.hi, ty.lo);
        let bottom = (1.0 - tx.frac) * at(tx.lo, ty.hi) + tx.frac * at(tx.hi, ty.hi);
        *o = (1.0 - ty.frac) * top + ty.frac * bottom;
    }
}

/// RGB bilinear sample at a continuous pixel coordinate (centers at `j + 0.5`).
pub fn bilinear_rgb(image: &Image, point: [f64; 2]) -> [f64; 3] {
    let mut out = vec![0.0; image.channels()];
    bilinear_lattice(image, point[0] - 0.5, point[1] - 0.5, &mut out);
    if out.len() == 1 {
        [out[0]; 3]
    } else {
        [out[0], out[1], out[2]]
    }
}

/// Colors of vertices that are visible and project onto a face-mask pixel.
/// Every other vertex gets color zero and a false sample flag.
pub fn sample_vertex_colors(
    image: &Image,
    projected: &ProjectedVertices,
    visibility: &VisibilityMask,
    face_mask: &FaceMask,
) -> Result<(Vec<[f64; 3]>, VisibilityMask)> {
    if face_mask.width != image.width() || face_mask.height != image.height() {
        return Err(Error::ShapeMismatch(format!(
            "face mask {}x{} vs image {}x{}",
            face_mask.width,
            face_mask.height,
            image.width(),
            image.height()
        )));
    }
    if visibility.len() != projected.len() {
        return Err(Error::ShapeMismatch(format!(
            "visibility has {} entries for {} vertices",
            visibility.len(),
            projected.len()
        )));
    }
    let mut colors = vec![[0.0; 3]; projected.len()];
    let mut sampled = vec![false; projected.len()];
    for (v, &p) in projected.points.iter().enumerate() {
        if !visibility.get(v) {
            continue;
        }
        let (x, y) = (p[0].floor(), p[1].floor());
        if x < 0.0 || y < 0.0 || x >= image.width() as f64 || y >= image.height() as f64 {
            continue;
        }
        if !face_mask.get(x as usize, y as usize) {
            continue;
        }
        colors[v] = bilinear_rgb(image, p);
        sampled[v] = true;
    }
    Ok((colors, VisibilityMask(sampled)))
}

/// Bilinear lookup of `image` at every valid grid coordinate; invalid texels
/// are zero.
pub fn grid_sample(image: &Image, grid: &SamplingGrid) -> Result<UvMap> {
    let channels = image.channels();
    let r = grid.resolution();
    let mut data = vec![0.0; r * r * channels];
    for (t, (&g, &ok)) in grid.coords().iter().zip(grid.valid()).enumerate() {
        if !ok {
            continue;
        }
        let u = from_normalized(g[0], image.width());
        let v = from_normalized(g[1], image.height());
        bilinear_lattice(image, u, v, &mut data[t * channels..(t + 1) * channels]);
    }
    UvMap::from_parts(r, channels, data, grid.valid().to_vec())
}

/// Gradients of a scalar loss through [`grid_sample`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridSampleGrads {
    /// Same layout as the image data.
    pub image: Vec<f64>,
    /// One `(d/dgx, d/dgy)` pair per texel.
    pub grid: Vec<[f64; 2]>,
}

/// Exact adjoint of [`grid_sample`] for both arguments. `upstream` has the
/// layout of the sampled map. Clamped coordinates get zero grid gradient
/// along the clamped axis.
pub fn grid_sample_backward(image: &Image, grid: &SamplingGrid, upstream: &[f64]) -> Result<GridSampleGrads> {
    let channels = image.channels();
    let r = grid.resolution();
    if upstream.len() != r * r * channels {
        return Err(Error::ShapeMismatch(format!(
            "upstream has {} values, expected {}",
            upstream.len(),
            r * r * channels
        )));
    }
    let (w, h) = (image.width(), image.height());
    let du_dg = 0.5 * w.saturating_sub(1) as f64;
    let dv_dg = 0.5 * h.saturating_sub(1) as f64;
    let data = image.data();
    let mut d_image = vec![0.0; data.len()];
    let mut d_grid = vec![[0.0; 2]; r * r];

    for (t, (&g, &ok)) in grid.coords().iter().zip(grid.valid()).enumerate() {
        if !ok {
            continue;
        }
        let tx = taps(from_normalized(g[0], w), w);
        let ty = taps(from_normalized(g[1], h), h);
        let (fx, fy) = (tx.frac, ty.frac);
        let mut dgx = 0.0;
        let mut dgy = 0.0;
        for c in 0..channels {
            let up = upstream[t * channels + c];
            if up == 0.0 {
                continue;
            }
            let i00 = image.index(tx.lo, ty.lo, c);
            let i10 = image.index(tx.hi, ty.lo, c);
            let i01 = image.index(tx.lo, ty.hi, c);
            let i11 = image.index(tx.hi, ty.hi, c);
            d_image[i00] += up * (1.0 - fx) * (1.0 - fy);
            d_image[i10] += up * fx * (1.0 - fy);
            d_image[i01] += up * (1.0 - fx) * fy;
            d_image[i11] += up * fx * fy;
            if tx.inside {
                let d_u = (1.0 - fy) * (data[i10] - data[i00]) + fy * (data[i11] - data[i01]);
                dgx += up * d_u * du_dg;
            }
            if ty.inside {
                let d_v = (1.0 - fx) * (data[i01] - data[i00]) + fx * (data[i11] - data[i10]);
                dgy += up * d_v * dv_dg;
            }
        }
        d_grid[t] = [dgx, dgy];
    }
    Ok(GridSampleGrads {
        image: d_image,
        grid: d_grid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_grid_reproduces_the_image() {
        let img = Image::from_fn(7, 7, 3, |x, y, c| ((x * 5 + y * 3 + c) % 11) as f64 / 10.0);
        let out = grid_sample(&img, &SamplingGrid::identity(7)).unwrap();
        for (a, b) in out.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn center_of_a_two_by_two_image() {
        let img = Image::from_data(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let grid = SamplingGrid::new(1, vec![[0.0, 0.0]], vec![true]).unwrap();
        assert_eq!(grid_sample(&img, &grid).unwrap().data(), &[0.5]);
    }

    #[test]
    fn constant_image_any_grid() {
        let img = Image::filled(6, 4, 3, 0.37);
        let coords = vec![[-3.0, 0.2], [0.9, -0.9], [0.1, 5.0], [0.33, 0.66]];
        let grid = SamplingGrid::new(2, coords, vec![true, true, false, true]).unwrap();
        let out = grid_sample(&img, &grid).unwrap();
        for t in 0..4 {
            let expected = if t == 2 { 0.0 } else { 0.37 };
            assert!(out.texel(t).iter().all(|&v| (v - expected).abs() < 1e-15));
        }
    }

    #[test]
    fn lattice_point_and_midpoint_vertex_colors() {
        let img = Image::from_fn(10, 10, 1, |x, y, _| if (x, y) == (3, 7) { 0.8 } else { 0.1 });
        let p = ProjectedVertices::planar(vec![[3.5, 7.5]]);
        let (c, m) = sample_vertex_colors(&img, &p, &VisibilityMask::all(1), &FaceMask::filled(10, 10, true)).unwrap();
        assert!(m.get(0));
        assert_eq!(c[0], [0.8; 3]);

        let img = Image::from_data(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        let p = ProjectedVertices::planar(vec![[1.0, 1.0]]);
        let (c, _) = sample_vertex_colors(&img, &p, &VisibilityMask::all(1), &FaceMask::filled(2, 2, true)).unwrap();
        assert_eq!(c[0], [0.5; 3]);
    }

    #[test]
    fn excluded_vertices_get_zero() {
        let img = Image::filled(4, 4, 3, 0.5);
        let mut mask = FaceMask::filled(4, 4, true);
        mask.data[0] = false;
        let p = ProjectedVertices::planar(vec![[0.5, 0.5], [2.5, 2.5], [9.0, 1.0], [1.5, 1.5]]);
        let vis = VisibilityMask(vec![true, true, true, false]);
        let (c, m) = sample_vertex_colors(&img, &p, &vis, &mask).unwrap();
        assert_eq!(m.0, vec![false, true, false, false]);
        assert_eq!(c[0], [0.0; 3]);
        assert_eq!(c[1], [0.5; 3]);
    }

    #[test]
    fn identity_grid_backward_with_unit_upstream() {
        let img = Image::from_fn(5, 5, 1, |x, y, _| (x * y) as f64 / 16.0);
        let grads = grid_sample_backward(&img, &SamplingGrid::identity(5), &[1.0; 25]).unwrap();
        for g in &grads.image {
            assert!((g - 1.0).abs() < 1e-12);
        }
        assert!(grads.grid.iter().flatten().all(|v| v.is_finite()));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let img = Image::from_fn(4, 4, 3, |x, y, c| (x + y + c) as f64 / 9.0);
        let grid = SamplingGrid::new(2, vec![[0.1, 0.2], [-0.4, 0.7], [0.9, -0.3], [0.0, 0.0]], vec![true; 4]).unwrap();
        let grads = grid_sample_backward(&img, &grid, &[0.0; 12]).unwrap();
        assert!(grads.image.iter().all(|&v| v == 0.0));
        assert!(grads.grid.iter().flatten().all(|&v| v == 0.0));
    }
}
