//! Linear morphable face model: shape synthesis, pose, orthographic projection,
//! and the `UVMM` binary container.
//!
//! # Container layout
//!
//! All integers are `u32` and all reals `f64`, little-endian, no padding:
//!
//! | offset | field |
//! |--------|-------|
//! | 0      | magic `b"UVMM"` |
//! | 4      | version (= 1) |
//! | 8      | N, vertex count |
//! | 12     | T, triangle count |
//! | 16     | K_id, identity basis columns |
//! | 20     | K_exp, expression basis columns |
//! | 24     | K_tex, texture basis columns |
//! | 28     | `mean_shape` 3N reals, xyz interleaved |
//! |        | `id_basis` 3N x K_id reals, row-major |
//! |        | `exp_basis` 3N x K_exp reals, row-major |
//! |        | `mean_texture` 3N reals, rgb interleaved |
//! |        | `tex_basis` 3N x K_tex reals, row-major |
//! |        | `uv_coords` N x 2 reals, (u, v) per vertex |
//! |        | triangles T x 3 `u32` vertex indices |
//!
//! The file must end exactly after the triangle block.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"UVMM";
pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_ID_DIM: usize = 40;
pub const DEFAULT_EXP_DIM: usize = 10;

const HEADER_LEN: usize = 28;

/// Vertex-index triple.
pub type Triangle = [usize; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct MorphableModel {
    mean_shape: DVector<f64>,
    id_basis: DMatrix<f64>,
    exp_basis: DMatrix<f64>,
    mean_texture: DVector<f64>,
    tex_basis: DMatrix<f64>,
    triangles: Vec<Triangle>,
    uv_coords: Vec<[f64; 2]>,
}

/// Owned pieces of a model, checked by [`MorphableModel::new`].
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub mean_shape: DVector<f64>,
    pub id_basis: DMatrix<f64>,
    pub exp_basis: DMatrix<f64>,
    pub mean_texture: DVector<f64>,
    pub tex_basis: DMatrix<f64>,
    pub triangles: Vec<Triangle>,
    pub uv_coords: Vec<[f64; 2]>,
}

impl MorphableModel {
    pub fn new(parts: ModelParts) -> Result<Self> {
        let n = parts.uv_coords.len();
        let rows = 3 * n;
        let check_rows = |name: &str, got: usize| {
            if got == rows {
                Ok(())
            } else {
                Err(Error::DimensionMismatch(format!(
                    "{name} has {got} rows, expected 3N = {rows}"
                )))
            }
        };
        check_rows("mean_shape", parts.mean_shape.len())?;
        check_rows("id_basis", parts.id_basis.nrows())?;
        check_rows("exp_basis", parts.exp_basis.nrows())?;
        check_rows("mean_texture", parts.mean_texture.len())?;
        check_rows("tex_basis", parts.tex_basis.nrows())?;

        let finite = |name: &str, values: &[f64]| {
            if values.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(Error::NonFinite(name.to_string()))
            }
        };
        finite("mean_shape", parts.mean_shape.as_slice())?;
        finite("id_basis", parts.id_basis.as_slice())?;
        finite("exp_basis", parts.exp_basis.as_slice())?;
        finite("mean_texture", parts.mean_texture.as_slice())?;
        finite("tex_basis", parts.tex_basis.as_slice())?;
        let flat_uv: Vec<f64> = parts.uv_coords.iter().flatten().copied().collect();
        finite("uv_coords", &flat_uv)?;

        for (t, tri) in parts.triangles.iter().enumerate() {
            for &index in tri {
                if index >= n {
                    return Err(Error::IndexOutOfRange {
                        triangle: t,
                        index,
                        vertex_count: n,
                    });
                }
            }
        }

        let mut seen = HashSet::with_capacity(n);
        for (i, uv) in parts.uv_coords.iter().enumerate() {
            if !(0.0..=1.0).contains(&uv[0]) || !(0.0..=1.0).contains(&uv[1]) {
                return Err(Error::InvalidModel(format!(
                    "uv coordinate of vertex {i} ({}, {}) is outside [0, 1]^2",
                    uv[0], uv[1]
                )));
            }
            if !seen.insert((uv[0].to_bits(), uv[1].to_bits())) {
                return Err(Error::InvalidModel(format!(
                    "vertex {i} duplicates the uv coordinate ({}, {})",
                    uv[0], uv[1]
                )));
            }
        }

        Ok(MorphableModel {
            mean_shape: parts.mean_shape,
            id_basis: parts.id_basis,
            exp_basis: parts.exp_basis,
            mean_texture: parts.mean_texture,
            tex_basis: parts.tex_basis,
            triangles: parts.triangles,
            uv_coords: parts.uv_coords,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.uv_coords.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn id_dim(&self) -> usize {
        self.id_basis.ncols()
    }

    pub fn exp_dim(&self) -> usize {
        self.exp_basis.ncols()
    }

    pub fn tex_dim(&self) -> usize {
        self.tex_basis.ncols()
    }

    pub fn mean_shape(&self) -> &DVector<f64> {
        &self.mean_shape
    }

    pub fn id_basis(&self) -> &DMatrix<f64> {
        &self.id_basis
    }

    pub fn exp_basis(&self) -> &DMatrix<f64> {
        &self.exp_basis
    }

    pub fn mean_texture(&self) -> &DVector<f64> {
        &self.mean_texture
    }

    pub fn tex_basis(&self) -> &DMatrix<f64> {
        &self.tex_basis
    }

    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn uv_coords(&self) -> &[[f64; 2]] {
        &self.uv_coords
    }

    /// Mean shape plus identity and expression displacements, one row per vertex.
    pub fn synthesize_shape(&self, alpha_id: &[f64], alpha_exp: &[f64]) -> Result<Vertices> {
        if alpha_id.len() != self.id_dim() {
            return Err(Error::ShapeMismatch(format!(
                "alpha_id has length {}, identity basis has {} columns",
                alpha_id.len(),
                self.id_dim()
            )));
        }
        if alpha_exp.len() != self.exp_dim() {
            return Err(Error::ShapeMismatch(format!(
                "alpha_exp has length {}, expression basis has {} columns",
                alpha_exp.len(),
                self.exp_dim()
            )));
        }
        let shape = &self.mean_shape
            + &self.id_basis * DVector::from_column_slice(alpha_id)
            + &self.exp_basis * DVector::from_column_slice(alpha_exp);
        Vertices::new(
            shape
                .as_slice()
                .chunks_exact(3)
                .map(|c| [c[0], c[1], c[2]])
                .collect(),
        )
    }

    /// Parse a `UVMM` container from memory.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::MalformedHeader(format!(
                "{} bytes is shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::MalformedHeader(format!(
                "bad magic {:?}, expected \"UVMM\"",
                &bytes[0..4]
            )));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
        let version = word(1);
        if version != FORMAT_VERSION {
            return Err(Error::MalformedHeader(format!(
                "unsupported version {version}"
            )));
        }
        let n = word(2) as usize;
        let t = word(3) as usize;
        let k_id = word(4) as usize;
        let k_exp = word(5) as usize;
        let k_tex = word(6) as usize;

        let reals = 3 * n * (2 + k_id + k_exp + k_tex) + 2 * n;
        let expected = HEADER_LEN as u128 + 8 * reals as u128 + 12 * t as u128;
        if bytes.len() as u128 != expected {
            return Err(Error::DimensionMismatch(format!(
                "header declares N={n}, T={t}, K_id={k_id}, K_exp={k_exp}, K_tex={k_tex} \
                 ({expected} bytes) but the file has {} bytes",
                bytes.len()
            )));
        }

        let mut cursor = HEADER_LEN;
        let mut take = |count: usize| -> Vec<f64> {
            let out = bytes[cursor..cursor + 8 * count]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            cursor += 8 * count;
            out
        };
        let mean_shape = DVector::from_vec(take(3 * n));
        let id_basis = DMatrix::from_row_slice(3 * n, k_id, &take(3 * n * k_id));
        let exp_basis = DMatrix::from_row_slice(3 * n, k_exp, &take(3 * n * k_exp));
        let mean_texture = DVector::from_vec(take(3 * n));
        let tex_basis = DMatrix::from_row_slice(3 * n, k_tex, &take(3 * n * k_tex));
        let uv_coords = take(2 * n)
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        let start = HEADER_LEN + 8 * reals;
        let triangles = bytes[start..]
            .chunks_exact(12)
            .map(|c| {
                let idx = |k: usize| u32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap()) as usize;
                [idx(0), idx(1), idx(2)]
            })
            .collect();

        MorphableModel::new(ModelParts {
            mean_shape,
            id_basis,
            exp_basis,
            mean_texture,
            tex_basis,
            triangles,
            uv_coords,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let n = self.vertex_count();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for word in [
            FORMAT_VERSION,
            n as u32,
            self.triangles.len() as u32,
            self.id_dim() as u32,
            self.exp_dim() as u32,
            self.tex_dim() as u32,
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        let mut put = |v: f64| out.extend_from_slice(&v.to_le_bytes());
        self.mean_shape.iter().for_each(|&v| put(v));
        for basis in [&self.id_basis, &self.exp_basis] {
            for r in 0..basis.nrows() {
                basis.row(r).iter().for_each(|&v| put(v));
            }
        }
        self.mean_texture.iter().for_each(|&v| put(v));
        for r in 0..self.tex_basis.nrows() {
            self.tex_basis.row(r).iter().for_each(|&v| put(v));
        }
        self.uv_coords.iter().flatten().for_each(|&v| put(v));
        for tri in &self.triangles {
            for &i in tri {
                out.extend_from_slice(&(i as u32).to_le_bytes());
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// Load a model from a `UVMM` container file.
pub fn load_model(path: impl AsRef<Path>) -> Result<MorphableModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    MorphableModel::from_bytes(&bytes)
}

/// Weak-perspective pose. Projection keeps the first two rows of
/// `scale * (rotation * s + translation)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
    scale: f64,
}

impl Pose {
    pub const ROTATION_TOLERANCE: f64 = 1e-6;

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>, scale: f64) -> Result<Self> {
        if !rotation.iter().chain(translation.iter()).all(|v| v.is_finite()) || !scale.is_finite() {
            return Err(Error::InvalidPose("non-finite entries".into()));
        }
        if scale <= 0.0 {
            return Err(Error::InvalidPose(format!("scale {scale} must be positive")));
        }
        let gram_err = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if gram_err > Self::ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {gram_err:e})"
            )));
        }
        let det = rotation.determinant();
        if (det - 1.0).abs() > Self::ROTATION_TOLERANCE {
            return Err(Error::InvalidPose(format!(
                "rotation determinant is {det}, expected +1"
            )));
        }
        Ok(Pose {
            rotation,
            translation,
            scale,
        })
    }

    pub fn identity() -> Self {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            scale: 1.0,
        }
    }

    /// Rotation `Rz(roll) * Rx(pitch) * Ry(yaw)`; yaw turns about the vertical axis.
    pub fn from_euler(yaw: f64, pitch: f64, roll: f64, translation: [f64; 3], scale: f64) -> Result<Self> {
        let (sy, cy) = yaw.sin_cos();
        let (sp, cp) = pitch.sin_cos();
        let (sr, cr) = roll.sin_cos();
        let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
        let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cp, -sp, 0.0, sp, cp);
        let rz = Matrix3::new(cr, -sr, 0.0, sr, cr, 0.0, 0.0, 0.0, 1.0);
        Pose::new(rz * rx * ry, Vector3::from(translation), scale)
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Recover the model-space z of a point from its projection and depth.
    pub fn unproject(&self, point: [f64; 2], depth: f64) -> Vector3<f64> {
        let camera = Vector3::new(point[0], point[1], depth) / self.scale - self.translation;
        self.rotation.transpose() * camera
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vertices {
    positions: Vec<[f64; 3]>,
}

impl Vertices {
    pub fn new(positions: Vec<[f64; 3]>) -> Result<Self> {
        if positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vertex positions".into()));
        }
        Ok(Vertices { positions })
    }

    pub fn positions(&self) -> &[[f64; 3]] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Screen-space vertices. `points` are continuous pixel coordinates where
/// pixel (row i, column j) has its center at (j + 0.5, i + 0.5). Larger
/// `depth` is closer to the viewer.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedVertices {
    pub points: Vec<[f64; 2]>,
    pub depth: Vec<f64>,
}

impl ProjectedVertices {
    pub fn new(points: Vec<[f64; 2]>, depth: Vec<f64>) -> Result<Self> {
        if points.len() != depth.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} points but {} depths",
                points.len(),
                depth.len()
            )));
        }
        if points.iter().flatten().chain(depth.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("projected vertices".into()));
        }
        Ok(ProjectedVertices { points, depth })
    }

    /// Flat 2D layout with zero depth, e.g. uv coordinates scaled to texels.
    pub fn planar(points: Vec<[f64; 2]>) -> Self {
        let depth = vec![0.0; points.len()];
        ProjectedVertices { points, depth }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn project(vertices: &Vertices, pose: &Pose) -> ProjectedVertices {
    let mut points = Vec::with_capacity(vertices.len());
    let mut depth = Vec::with_capacity(vertices.len());
    for p in vertices.positions() {
        let camera = pose.scale * (pose.rotation * Vector3::new(p[0], p[1], p[2]) + pose.translation);
        points.push([camera.x, camera.y]);
        depth.push(camera.z);
    }
    ProjectedVertices { points, depth }
}
