use super::{to_normalized, SamplingGrid, UvMap, MIN_RESOLUTION};
use crate::error::{Error, Result};
use crate::model::{ProjectedVertices, Triangle};
use crate::raster::{check_indices, interpolate, rasterize, RasterBuffers, VisibilityMask};

/// Rasterize the triangles whose three vertices are flagged in `mask` over
/// the UV grid (uv scaled by `resolution`, so texel centers sit at `j + 0.5`).
fn rasterize_uv(
    mask: &VisibilityMask,
    uv_coords: &[[f64; 2]],
    triangles: &[Triangle],
    resolution: usize,
) -> Result<(Vec<Triangle>, RasterBuffers)> {
    if resolution < MIN_RESOLUTION {
        return Err(Error::InvalidArgument(format!(
            "uv resolution {resolution} is below the minimum of {MIN_RESOLUTION}"
        )));
    }
    if mask.len() != uv_coords.len() {
        return Err(Error::ShapeMismatch(format!(
            "sample mask has {} entries for {} uv coordinates",
            mask.len(),
            uv_coords.len()
        )));
    }
    check_indices(triangles, uv_coords.len())?;
    let scale = resolution as f64;
    let layout = ProjectedVertices::planar(uv_coords.iter().map(|uv| [uv[0] * scale, uv[1] * scale]).collect());
    let kept: Vec<Triangle> = triangles
        .iter()
        .filter(|tri| tri.iter().all(|&v| mask.get(v)))
        .copied()
        .collect();
    let buffers = rasterize(&layout, &kept, resolution, resolution)?;
    Ok((kept, buffers))
}

/// Render per-vertex colors into UV space. A texel is valid iff it is covered
/// by a triangle whose three vertices are sampled.
pub fn render_uv(
    colors: &[[f64; 3]],
    sample_mask: &VisibilityMask,
    uv_coords: &[[f64; 2]],
    triangles: &[Triangle],
    resolution: usize,
) -> Result<UvMap> {
    if colors.len() != uv_coords.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} colors for {} vertices",
            colors.len(),
            uv_coords.len()
        )));
    }
    let (kept, buffers) = rasterize_uv(sample_mask, uv_coords, triangles, resolution)?;
    let flat: Vec<f64> = colors.iter().flatten().copied().collect();
    let data = interpolate(&buffers, &kept, &flat, 3);
    UvMap::from_parts(resolution, 3, data, buffers.coverage())
}

/// The sampling grid implied by the geometry: each valid texel holds the
/// normalized image position its surface point projects to.
pub fn grid_from_projection(
    projected: &ProjectedVertices,
    sample_mask: &VisibilityMask,
    uv_coords: &[[f64; 2]],
    triangles: &[Triangle],
    resolution: usize,
    image_width: usize,
    image_height: usize,
) -> Result<SamplingGrid> {
    if projected.len() != uv_coords.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} projected vertices for {} uv coordinates",
            projected.len(),
            uv_coords.len()
        )));
    }
    let (kept, buffers) = rasterize_uv(sample_mask, uv_coords, triangles, resolution)?;
    let flat: Vec<f64> = projected.points.iter().flatten().copied().collect();
    let positions = interpolate(&buffers, &kept, &flat, 2);
    let valid = buffers.coverage();
    let coords = positions
        .chunks_exact(2)
        .zip(&valid)
        .map(|(p, &ok)| {
            if ok {
                [to_normalized(p[0], image_width), to_normalized(p[1], image_height)]
            } else {
                [0.0, 0.0]
            }
        })
        .collect();
    SamplingGrid::new(resolution, coords, valid)
}
