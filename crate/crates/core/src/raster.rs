//! Depth-buffered triangle rasterization with barycentric shading and its
//! exact adjoint with respect to vertex colors.
//!
//! Coverage is tested at pixel centers `(j + 0.5, i + 0.5)` with inclusive
//! edges. On equal depth the lower triangle index is kept. Barycentric weights
//! are computed in screen space (projection is orthographic).

use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::model::{project, Pose, ProjectedVertices, Triangle, Vertices};

/// Sentinel stored in [`RasterBuffers::tri_index`] for uncovered pixels.
pub const BACKGROUND: i64 = -1;

/// Per-pixel output of [`rasterize`].
#[derive(Debug, Clone, PartialEq)]
pub struct RasterBuffers {
    pub width: usize,
    pub height: usize,
    pub tri_index: Vec<i64>,
    pub bary: Vec<[f64; 3]>,
    pub depth: Vec<f64>,
}

impl RasterBuffers {
    pub fn triangle_at(&self, pixel: usize) -> Option<usize> {
        let t = self.tri_index[pixel];
        (t >= 0).then_some(t as usize)
    }

    pub fn coverage(&self) -> Vec<bool> {
        self.tri_index.iter().map(|&t| t != BACKGROUND).collect()
    }

    pub fn covered_count(&self) -> usize {
        self.tri_index.iter().filter(|&&t| t != BACKGROUND).count()
    }
}

/// Rasterize `triangles` over a `width` x `height` frame, keeping the
/// frontmost (largest depth) triangle per pixel.
pub fn rasterize(
    projected: &ProjectedVertices,
    triangles: &[Triangle],
    width: usize,
    height: usize,
) -> Result<RasterBuffers> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument("raster frame must be at least 1x1".into()));
    }
    check_indices(triangles, projected.len())?;
    let pixels = width * height;
    let mut buffers = RasterBuffers {
        width,
        height,
        tri_index: vec![BACKGROUND; pixels],
        bary: vec![[0.0; 3]; pixels],
        depth: vec![f64::NEG_INFINITY; pixels],
    };

    for (t, tri) in triangles.iter().enumerate() {
        let [a, b, c] = tri.map(|i| projected.points[i]);
        let area = edge(a, b, c);
        if area == 0.0 || !area.is_finite() {
            continue;
        }
        let za = projected.depth[tri[0]];
        let zb = projected.depth[tri[1]];
        let zc = projected.depth[tri[2]];

        let min_x = a[0].min(b[0]).min(c[0]);
        let max_x = a[0].max(b[0]).max(c[0]);
        let min_y = a[1].min(b[1]).min(c[1]);
        let max_y = a[1].max(b[1]).max(c[1]);
        let Some((x0, x1)) = pixel_span(min_x, max_x, width) else {
            continue;
        };
        let Some((y0, y1)) = pixel_span(min_y, max_y, height) else {
            continue;
        };

        for y in y0..=y1 {
            let py = y as f64 + 0.5;
            for x in x0..=x1 {
                let p = [x as f64 + 0.5, py];
                let w0 = edge(b, c, p) / area;
                let w1 = edge(c, a, p) / area;
                let w2 = edge(a, b, p) / area;
                if w0 < 0.0 || w1 < 0.0 || w2 < 0.0 {
                    continue;
                }
                let z = w0 * za + w1 * zb + w2 * zc;
                let pixel = y * width + x;
                if z > buffers.depth[pixel] {
                    buffers.depth[pixel] = z;
                    buffers.tri_index[pixel] = t as i64;
                    buffers.bary[pixel] = [w0, w1, w2];
                }
            }
        }
    }
    Ok(buffers)
}

/// Twice the signed area of `(a, b, p)`.
#[inline]
fn edge(a: [f64; 2], b: [f64; 2], p: [f64; 2]) -> f64 {
    (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
}

/// Pixel indices whose centers may fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, extent: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(extent as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

pub(crate) fn check_indices(triangles: &[Triangle], vertex_count: usize) -> Result<()> {
    for (t, tri) in triangles.iter().enumerate() {
        if let Some(&index) = tri.iter().find(|&&i| i >= vertex_count) {
            return Err(Error::IndexOutOfRange {
                triangle: t,
                index,
                vertex_count,
            });
        }
    }
    Ok(())
}

/// Interpolate `dim`-dimensional vertex attributes at every covered pixel.
/// Uncovered pixels are zero.
pub(crate) fn interpolate(
    buffers: &RasterBuffers,
    triangles: &[Triangle],
    attributes: &[f64],
    dim: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; buffers.width * buffers.height * dim];
    for pixel in 0..buffers.width * buffers.height {
        let Some(t) = buffers.triangle_at(pixel) else {
            continue;
        };
        let w = buffers.bary[pixel];
        for (k, &v) in triangles[t].iter().enumerate() {
            for c in 0..dim {
                out[pixel * dim + c] += w[k] * attributes[v * dim + c];
            }
        }
    }
    out
}

/// Barycentric shading of per-vertex RGB colors. Background pixels are zero
/// and masked out.
pub fn shade(buffers: &RasterBuffers, colors: &[[f64; 3]], triangles: &[Triangle]) -> Result<Image> {
    check_indices(triangles, colors.len())?;
    let flat: Vec<f64> = colors.iter().flatten().copied().collect();
    let data = interpolate(buffers, triangles, &flat, 3);
    Image::from_data(buffers.width, buffers.height, 3, data)?.with_mask(buffers.coverage())
}

/// Adjoint of [`shade`]: routes each pixel's upstream gradient to the three
/// vertices of its triangle, weighted by the barycentric coordinates.
pub fn shade_backward(
    buffers: &RasterBuffers,
    triangles: &[Triangle],
    upstream: &Image,
    vertex_count: usize,
) -> Result<Vec<[f64; 3]>> {
    if upstream.width() != buffers.width || upstream.height() != buffers.height || upstream.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {}x{}x{}, raster is {}x{}x3",
            upstream.width(),
            upstream.height(),
            upstream.channels(),
            buffers.width,
            buffers.height
        )));
    }
    check_indices(triangles, vertex_count)?;
    let grad = upstream.data();
    let mut out = vec![[0.0; 3]; vertex_count];
    // pixel order is fixed, so accumulation is deterministic
    for pixel in 0..buffers.width * buffers.height {
        let Some(t) = buffers.triangle_at(pixel) else {
            continue;
        };
        let w = buffers.bary[pixel];
        for (k, &v) in triangles[t].iter().enumerate() {
            for c in 0..3 {
                out[v][c] += w[k] * grad[pixel * 3 + c];
            }
        }
    }
    Ok(out)
}

/// Per-vertex visibility flags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VisibilityMask(pub Vec<bool>);

impl VisibilityMask {
    pub fn all(n: usize) -> Self {
        VisibilityMask(vec![true; n])
    }

    pub fn none(n: usize) -> Self {
        VisibilityMask(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> bool {
        self.0[i]
    }

    pub fn count(&self) -> usize {
        self.0.iter().filter(|&&v| v).count()
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.0
    }
}

/// Depth-buffer visibility of every vertex under `pose`.
pub fn visible_vertices(
    vertices: &Vertices,
    pose: &Pose,
    triangles: &[Triangle],
    width: usize,
    height: usize,
) -> Result<VisibilityMask> {
    let projected = project(vertices, pose);
    visibility_from_projection(&projected, triangles, width, height)
}

/// Visibility test on already projected vertices.
///
/// A vertex is visible when its depth is within `1e-4 * depth extent` of the
/// frontmost surface at its exact projected location. Candidate surfaces are
/// the triangles recorded in the 3x3 pixel block around the vertex; among
/// those whose closed footprint contains the point, the largest plane depth
/// wins. No containing candidate means nothing occludes the vertex. Vertices
/// projecting outside the frame are invisible.
pub fn visibility_from_projection(
    projected: &ProjectedVertices,
    triangles: &[Triangle],
    width: usize,
    height: usize,
) -> Result<VisibilityMask> {
    let buffers = rasterize(projected, triangles, width, height)?;
    let (lo, hi) = projected
        .depth
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &z| (lo.min(z), hi.max(z)));
    let eps = if hi > lo { 1e-4 * (hi - lo) } else { 0.0 };

    let visible = projected
        .points
        .iter()
        .zip(&projected.depth)
        .map(|(&p, &z)| {
            let (x, y) = (p[0].floor(), p[1].floor());
            if x < 0.0 || y < 0.0 || x >= width as f64 || y >= height as f64 {
                return false;
            }
            let (x, y) = (x as usize, y as usize);
            let mut candidates = [BACKGROUND; 9];
            for (k, (dx, dy)) in (0..3).flat_map(|dy| (0..3).map(move |dx| (dx, dy))).enumerate() {
                let (nx, ny) = ((x + dx).wrapping_sub(1), (y + dy).wrapping_sub(1));
                if nx < width && ny < height {
                    candidates[k] = buffers.tri_index[ny * width + nx];
                }
            }
            let surface = candidates
                .iter()
                .enumerate()
                .filter(|&(k, &t)| t != BACKGROUND && !candidates[..k].contains(&t))
                .filter_map(|(_, &t)| plane_depth(projected, triangles[t as usize], p))
                .fold(f64::NEG_INFINITY, f64::max);
            z >= surface - eps
        })
        .collect();
    Ok(VisibilityMask(visible))
}

/// Tolerance, in barycentric units, for a point to count as inside a
/// triangle's closed footprint.
const FOOTPRINT_TOLERANCE: f64 = 1e-9;

/// Depth of the plane through `tri` at screen point `p`, if `p` lies in the
/// triangle's closed footprint.
fn plane_depth(projected: &ProjectedVertices, tri: Triangle, p: [f64; 2]) -> Option<f64> {
    let [a, b, c] = tri.map(|i| projected.points[i]);
    let area = edge(a, b, c);
    if area == 0.0 {
        return None;
    }
    let w = [edge(b, c, p) / area, edge(c, a, p) / area, edge(a, b, p) / area];
    if w.iter().any(|&x| x < -FOOTPRINT_TOLERANCE) {
        return None;
    }
    Some(w[0] * projected.depth[tri[0]] + w[1] * projected.depth[tri[1]] + w[2] * projected.depth[tri[2]])
}
