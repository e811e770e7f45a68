//! UV-space texture maps: the incomplete map sampled from a photo, the
//! bilinear grid sampler and its adjoint, and the analytic sampling grid.
//!
//! Normalized grid coordinates put `-1` and `+1` on the first and last pixel
//! centers. Out-of-range coordinates are clamped to the border.

mod mask;
mod render;
pub(crate) mod sampling;

use std::path::Path;

pub use mask::{build_face_mask, erode_mask, FaceMask};
pub use render::{grid_from_projection, render_uv};
pub use sampling::{
    bilinear_rgb, grid_sample, grid_sample_backward, sample_vertex_colors, GridSampleGrads,
};

use crate::error::{Error, Result};
use crate::imaging::{self, Image, Planar};
use crate::model::{project, MorphableModel, Pose, ProjectedVertices, Vertices};
use crate::raster::{visibility_from_projection, VisibilityMask};

pub const MIN_RESOLUTION: usize = 8;
pub const DEFAULT_RESOLUTION: usize = 256;

/// Square texel grid with a validity mask. Invalid texels hold zero.
#[derive(Debug, Clone, PartialEq)]
pub struct UvMap {
    resolution: usize,
    channels: usize,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl UvMap {
    /// All-invalid map.
    pub fn empty(resolution: usize, channels: usize) -> Self {
        UvMap {
            resolution,
            channels,
            data: vec![0.0; resolution * resolution * channels],
            valid: vec![false; resolution * resolution],
        }
    }

    /// Fully valid constant map.
    pub fn filled(resolution: usize, channels: usize, value: f64) -> Self {
        UvMap {
            resolution,
            channels,
            data: vec![value; resolution * resolution * channels],
            valid: vec![true; resolution * resolution],
        }
    }

    /// Build from raw parts; data under invalid texels is zeroed.
    pub fn from_parts(resolution: usize, channels: usize, mut data: Vec<f64>, valid: Vec<bool>) -> Result<Self> {
        let texels = resolution * resolution;
        if resolution == 0 || channels == 0 {
            return Err(Error::InvalidArgument("uv map needs a positive resolution and channel count".into()));
        }
        if data.len() != texels * channels || valid.len() != texels {
            return Err(Error::ShapeMismatch(format!(
                "uv map {resolution}x{resolution}x{channels} got {} values and {} flags",
                data.len(),
                valid.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("uv map data".into()));
        }
        for (t, &ok) in valid.iter().enumerate() {
            if !ok {
                data[t * channels..(t + 1) * channels].fill(0.0);
            }
        }
        Ok(UvMap {
            resolution,
            channels,
            data,
            valid,
        })
    }

    pub fn from_fn(resolution: usize, channels: usize, mut f: impl FnMut(usize, usize, usize) -> Option<f64>) -> Self {
        let mut map = UvMap::empty(resolution, channels);
        for row in 0..resolution {
            for col in 0..resolution {
                let t = row * resolution + col;
                let values: Option<Vec<f64>> = (0..channels).map(|c| f(col, row, c)).collect();
                if let Some(values) = values {
                    map.valid[t] = true;
                    map.data[t * channels..(t + 1) * channels].copy_from_slice(&values);
                }
            }
        }
        map
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, col: usize, row: usize) -> bool {
        self.valid[row * self.resolution + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_fraction(&self) -> f64 {
        self.valid_count() as f64 / self.valid.len() as f64
    }

    pub fn get(&self, col: usize, row: usize, c: usize) -> f64 {
        self.data[self.index(col, row, c)]
    }

    pub fn texel(&self, t: usize) -> &[f64] {
        &self.data[t * self.channels..(t + 1) * self.channels]
    }

    /// Set a texel's value and mark it valid.
    pub fn set_texel(&mut self, t: usize, values: &[f64]) {
        self.data[t * self.channels..(t + 1) * self.channels].copy_from_slice(values);
        self.valid[t] = true;
    }

    pub fn invalidate(&mut self, t: usize) {
        self.valid[t] = false;
        self.data[t * self.channels..(t + 1) * self.channels].fill(0.0);
    }

    /// Left-right mirror: column `j` maps to `R - 1 - j`.
    pub fn mirrored(&self) -> UvMap {
        let r = self.resolution;
        let mut out = self.clone();
        for row in 0..r {
            for col in 0..r {
                let src = row * r + (r - 1 - col);
                let dst = row * r + col;
                out.valid[dst] = self.valid[src];
                out.data[dst * self.channels..(dst + 1) * self.channels].copy_from_slice(self.texel(src));
            }
        }
        out
    }

    /// Same data as an image whose mask is the validity.
    pub fn to_image(&self) -> Image {
        Image::from_data(self.resolution, self.resolution, self.channels, self.data.clone())
            .and_then(|img| img.with_mask(self.valid.clone()))
            .expect("uv map invariants imply a well-formed image")
    }

    /// Square image to uv map; without a mask every texel is valid.
    pub fn from_image(image: &Image) -> Result<Self> {
        if image.width() != image.height() {
            return Err(Error::ShapeMismatch(format!(
                "uv maps are square, image is {}x{}",
                image.width(),
                image.height()
            )));
        }
        UvMap::from_parts(image.width(), image.channels(), image.data().to_vec(), image.mask_or_full())
    }

    /// Data PNG plus a gray validity PNG.
    pub fn save_png_pair(&self, data_path: impl AsRef<Path>, valid_path: impl AsRef<Path>) -> Result<()> {
        self.to_image().save_png(data_path)?;
        imaging::save_mask_png(&self.valid, self.resolution, self.resolution, valid_path)
    }

    pub fn load_png_pair(data_path: impl AsRef<Path>, valid_path: impl AsRef<Path>) -> Result<Self> {
        let image = Image::load_png(data_path)?;
        let (valid, w, h) = imaging::load_mask_png(valid_path)?;
        if w != image.width() || h != image.height() {
            return Err(Error::ShapeMismatch("validity PNG size differs from data PNG".into()));
        }
        UvMap::from_image(&image.with_mask(valid)?)
    }

    /// Combined float file: tag `PF4`, otherwise PFM layout, four `f32` per
    /// texel (RGB, then validity as 0 or 1).
    pub fn save_pfm(&self, path: impl AsRef<Path>) -> Result<()> {
        if self.channels != 3 {
            return Err(Error::InvalidArgument("combined PFM holds 3-channel uv maps".into()));
        }
        let mut packed = Vec::with_capacity(self.valid.len() * 4);
        for (t, &ok) in self.valid.iter().enumerate() {
            packed.extend_from_slice(self.texel(t));
            packed.push(if ok { 1.0 } else { 0.0 });
        }
        imaging::write_file(
            path.as_ref(),
            &imaging::encode_pfm("PF4", self.resolution, self.resolution, 4, &packed),
        )
    }

    pub fn load_pfm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (w, h, channels, packed) = imaging::decode_pfm(&bytes, &["PF4"])?;
        if w != h || channels != 4 {
            return Err(Error::ImageFormat(format!(
                "combined uv PFM must be square with 4 channels, got {w}x{h}x{channels}"
            )));
        }
        let mut data = Vec::with_capacity(w * w * 3);
        let mut valid = Vec::with_capacity(w * w);
        for texel in packed.chunks_exact(4) {
            data.extend_from_slice(&texel[..3]);
            valid.push(texel[3] > 0.5);
        }
        UvMap::from_parts(w, 3, data, valid)
    }
}

impl Planar for UvMap {
    fn width(&self) -> usize {
        self.resolution
    }
    fn height(&self) -> usize {
        self.resolution
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-texel normalized source coordinates plus validity.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    resolution: usize,
    coords: Vec<[f64; 2]>,
    valid: Vec<bool>,
}

impl SamplingGrid {
    pub fn new(resolution: usize, coords: Vec<[f64; 2]>, valid: Vec<bool>) -> Result<Self> {
        let texels = resolution * resolution;
        if coords.len() != texels || valid.len() != texels {
            return Err(Error::ShapeMismatch(format!(
                "{resolution}x{resolution} grid got {} coordinates and {} flags",
                coords.len(),
                valid.len()
            )));
        }
        if coords.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampling grid".into()));
        }
        Ok(SamplingGrid {
            resolution,
            coords,
            valid,
        })
    }

    /// Grid that reproduces an `resolution` x `resolution` image.
    pub fn identity(resolution: usize) -> Self {
        let mut coords = Vec::with_capacity(resolution * resolution);
        for row in 0..resolution {
            for col in 0..resolution {
                coords.push([
                    to_normalized(col as f64 + 0.5, resolution),
                    to_normalized(row as f64 + 0.5, resolution),
                ]);
            }
        }
        SamplingGrid {
            resolution,
            coords,
            valid: vec![true; resolution * resolution],
        }
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }
}

/// Continuous pixel coordinate to `[-1, 1]` (pixel centers at the ends).
pub fn to_normalized(pixel: f64, extent: usize) -> f64 {
    if extent > 1 {
        2.0 * (pixel - 0.5) / (extent - 1) as f64 - 1.0
    } else {
        0.0
    }
}

/// Normalized coordinate to a lattice index (pixel `j` sits at `j`).
pub fn from_normalized(g: f64, extent: usize) -> f64 {
    (g + 1.0) * 0.5 * extent.saturating_sub(1) as f64
}

/// Default erosion: 2% of the image width, rounded up.
pub fn default_erosion_radius(image_width: usize) -> usize {
    (0.02 * image_width as f64).ceil() as usize
}

/// Intermediate products of [`make_uv_gt`].
#[derive(Debug, Clone)]
pub struct UvGtTrace {
    pub vertices: Vertices,
    pub projected: ProjectedVertices,
    pub visibility: VisibilityMask,
    pub face_mask: FaceMask,
    pub eroded_mask: FaceMask,
    pub colors: Vec<[f64; 3]>,
    pub sample_mask: VisibilityMask,
    pub uv: UvMap,
}

#[allow(clippy::too_many_arguments)]
pub fn trace_uv_gt(
    image: &Image,
    model: &MorphableModel,
    alpha_id: &[f64],
    alpha_exp: &[f64],
    pose: &Pose,
    resolution: usize,
    erosion_radius: usize,
) -> Result<UvGtTrace> {
    let vertices = model.synthesize_shape(alpha_id, alpha_exp)?;
    let projected = project(&vertices, pose);
    let (w, h) = (image.width(), image.height());
    let visibility = visibility_from_projection(&projected, model.triangles(), w, h)?;
    let face_mask = build_face_mask(&projected, &visibility, model.triangles(), w, h)?;
    let eroded_mask = erode_mask(&face_mask, erosion_radius);
    let (colors, sample_mask) = sample_vertex_colors(image, &projected, &visibility, &eroded_mask)?;
    let uv = render_uv(&colors, &sample_mask, model.uv_coords(), model.triangles(), resolution)?;
    Ok(UvGtTrace {
        vertices,
        projected,
        visibility,
        face_mask,
        eroded_mask,
        colors,
        sample_mask,
        uv,
    })
}

/// Incomplete UV map of the texture visible in `image`: synthesize, project,
/// test visibility, mask and erode the face region, sample vertex colors and
/// render them into UV space.
#[allow(clippy::too_many_arguments)]
pub fn make_uv_gt(
    image: &Image,
    model: &MorphableModel,
    alpha_id: &[f64],
    alpha_exp: &[f64],
    pose: &Pose,
    resolution: usize,
    erosion_radius: usize,
) -> Result<UvMap> {
    trace_uv_gt(image, model, alpha_id, alpha_exp, pose, resolution, erosion_radius).map(|t| t.uv)
}
