//! Textured rendering of the mesh from a UV map: rasterize the projected
//! mesh, interpolate uv coordinates per pixel and sample the map bilinearly.

use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::model::{project, MorphableModel, Pose, ProjectedVertices, Triangle};
use crate::raster::{check_indices, interpolate, rasterize};
use crate::uv::sampling::taps;
use crate::uv::UvMap;

/// Render `uv` onto the projected mesh. A pixel is valid when it is covered
/// and every texel with nonzero bilinear weight is valid.
pub fn render_textured(
    uv: &UvMap,
    projected: &ProjectedVertices,
    uv_coords: &[[f64; 2]],
    triangles: &[Triangle],
    width: usize,
    height: usize,
) -> Result<Image> {
    if projected.len() != uv_coords.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} projected vertices for {} uv coordinates",
            projected.len(),
            uv_coords.len()
        )));
    }
    if uv.channels() != 3 {
        return Err(Error::InvalidArgument(format!("cannot render a {}-channel map", uv.channels())));
    }
    check_indices(triangles, uv_coords.len())?;
    let buffers = rasterize(projected, triangles, width, height)?;
    let r = uv.resolution();
    let scale = r as f64;
    let flat: Vec<f64> = uv_coords.iter().flat_map(|c| [c[0] * scale, c[1] * scale]).collect();
    let texel_pos = interpolate(&buffers, triangles, &flat, 2);
    let covered = buffers.coverage();
    let data = uv.data();
    let mut out = vec![0.0; width * height * 3];
    let mut mask = vec![false; width * height];
    for p in 0..width * height {
        if !covered[p] {
            continue;
        }
        let tx = taps(texel_pos[2 * p] - 0.5, r);
        let ty = taps(texel_pos[2 * p + 1] - 0.5, r);
        let corners = [
            (tx.lo, ty.lo, (1.0 - tx.frac) * (1.0 - ty.frac)),
            (tx.hi, ty.lo, tx.frac * (1.0 - ty.frac)),
            (tx.lo, ty.hi, (1.0 - tx.frac) * ty.frac),
            (tx.hi, ty.hi, tx.frac * ty.frac),
        ];
        if corners.iter().any(|&(x, y, w)| w != 0.0 && !uv.is_valid(x, y)) {
            continue;
        }
        mask[p] = true;
        for c in 0..3 {
            out[p * 3 + c] = corners
                .iter()
                .map(|&(x, y, w)| if w == 0.0 { 0.0 } else { w * data[uv.index(x, y, c)] })
                .sum();
        }
    }
    Image::from_data(width, height, 3, out)?.with_mask(mask)
}

/// Synthesize the shape, project it with `pose` and render `uv` onto it.
#[allow(clippy::too_many_arguments)]
pub fn render_model(
    model: &MorphableModel,
    alpha_id: &[f64],
    alpha_exp: &[f64],
    pose: &Pose,
    uv: &UvMap,
    width: usize,
    height: usize,
) -> Result<Image> {
    let vertices = model.synthesize_shape(alpha_id, alpha_exp)?;
    let projected = project(&vertices, pose);
    render_textured(uv, &projected, model.uv_coords(), model.triangles(), width, height)
}
