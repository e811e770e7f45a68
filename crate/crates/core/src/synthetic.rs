//! Synthetic test scenes: a subdivided icosahedron cut to a face-like cap,
//! an azimuthal UV layout, a smooth procedural texture and an exact render.
//!
//! The mesh, the layout and the default texture are symmetric under
//! `x -> -x`, which maps `u -> 1 - u` in UV space.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::imaging::Image;
use crate::model::{project, ModelParts, MorphableModel, Pose, Triangle, DEFAULT_EXP_DIM, DEFAULT_ID_DIM};
use crate::params::FaceParams;
use crate::raster::rasterize;

/// Unit icosphere: the icosahedron subdivided `level` times, vertices pushed
/// onto the sphere. Triangles are counter-clockwise seen from outside.
pub fn icosphere(level: usize) -> (Vec<[f64; 3]>, Vec<Triangle>) {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let normalize = |p: [f64; 3]| {
        let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        [p[0] / n, p[1] / n, p[2] / n]
    };
    let mut vertices: Vec<[f64; 3]> = raw.iter().map(|&p| normalize(p)).collect();
    let mut triangles: Vec<Triangle> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalize([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    (vertices, triangles)
}

/// Smooth RGB texture in `[0, 1]`, even in `x`.
pub fn procedural_color(p: [f64; 3]) -> [f64; 3] {
    let [x, y, z] = p;
    [
        0.5 + 0.3 * (2.5 * y + 0.5).sin() * (2.0 * x).cos(),
        0.45 + 0.25 * (3.0 * z).cos() + 0.1 * x * x,
        0.5 + 0.2 * (2.0 * y).sin() * z + 0.15 * (3.0 * x).cos(),
    ]
}

/// Quadratic monomials used as texture basis functions.
fn monomials(p: [f64; 3]) -> [f64; 10] {
    let [x, y, z] = p;
    [1.0, x, y, z, x * x, y * y, z * z, x * y, y * z, z * x]
}

const TEX_BASIS_SCALE: f64 = 0.1;

/// Texture basis column `k`: monomial `k / 3` on channel `k % 3`.
fn tex_basis_value(k: usize, p: [f64; 3], channel: usize) -> f64 {
    if k % 3 == channel {
        TEX_BASIS_SCALE * monomials(p)[(k / 3) % 10]
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapSpec {
    pub level: usize,
    /// Largest kept polar angle from `+z`, radians.
    pub theta_max: f64,
    pub id_dim: usize,
    pub exp_dim: usize,
    /// At most 30.
    pub tex_dim: usize,
    /// Magnitude of the random shape bases.
    pub shape_basis_scale: f64,
    pub seed: u64,
}

impl Default for CapSpec {
    fn default() -> Self {
        CapSpec {
            level: 4,
            theta_max: 0.75 * std::f64::consts::PI,
            id_dim: DEFAULT_ID_DIM,
            exp_dim: DEFAULT_EXP_DIM,
            tex_dim: 30,
            shape_basis_scale: 0.01,
            seed: 7,
        }
    }
}

/// Azimuthal layout: polar angle to radius, azimuth to direction.
pub fn cap_uv(p: [f64; 3], theta_max: f64) -> [f64; 2] {
    let rho = (p[0] * p[0] + p[1] * p[1]).sqrt();
    let theta = rho.atan2(p[2]);
    if rho < 1e-15 {
        return [0.5, 0.5];
    }
    let r = 0.5 * theta / theta_max;
    [0.5 + r * p[0] / rho, 0.5 + r * p[1] / rho]
}

/// Morphable model on the icosphere cap around `+z`.
pub fn face_cap_model(spec: &CapSpec) -> Result<MorphableModel> {
    let (sphere, tris) = icosphere(spec.level);
    let keep: Vec<bool> = sphere.iter().map(|p| p[2].clamp(-1.0, 1.0).acos() <= spec.theta_max + 1e-12).collect();
    let mut remap = vec![usize::MAX; sphere.len()];
    let mut positions = Vec::new();
    for (i, p) in sphere.iter().enumerate() {
        if keep[i] {
            remap[i] = positions.len();
            positions.push(*p);
        }
    }
    let triangles: Vec<Triangle> = tris
        .iter()
        .filter(|t| t.iter().all(|&v| keep[v]))
        .map(|t| [remap[t[0]], remap[t[1]], remap[t[2]]])
        .collect();
    let n = positions.len();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut random_basis = |cols: usize| {
        DMatrix::from_fn(3 * n, cols, |_, _| spec.shape_basis_scale * rng.gen_range(-1.0..1.0))
    };
    let id_basis = random_basis(spec.id_dim);
    let exp_basis = random_basis(spec.exp_dim);
    let tex_dim = spec.tex_dim.min(30);
    MorphableModel::new(ModelParts {
        mean_shape: DVector::from_iterator(3 * n, positions.iter().flatten().copied()),
        id_basis,
        exp_basis,
        mean_texture: DVector::from_iterator(3 * n, positions.iter().flat_map(|&p| procedural_color(p))),
        tex_basis: DMatrix::from_fn(3 * n, tex_dim, |r, k| tex_basis_value(k, positions[r / 3], r % 3)),
        triangles,
        uv_coords: positions.iter().map(|&p| cap_uv(p, spec.theta_max)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub cap: CapSpec,
    pub width: usize,
    pub height: usize,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// Projected radius of the sphere as a fraction of the width.
    pub radius_fraction: f64,
    /// Magnitude of the planted texture parameters; zero keeps the texture
    /// mirror symmetric.
    pub planted_scale: f64,
    pub background: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            cap: CapSpec::default(),
            width: 128,
            height: 128,
            yaw: 0.3,
            pitch: 0.1,
            roll: 0.0,
            radius_fraction: 0.38,
            planted_scale: 0.0,
            background: 0.05,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub model: MorphableModel,
    pub params: FaceParams,
    pub image: Image,
    /// Texture parameters the image was painted with.
    pub planted_tex: Vec<f64>,
}

/// Pose that centers the unit sphere in a `width x height` frame.
pub fn centered_pose(spec: &SceneSpec) -> Result<Pose> {
    let scale = spec.radius_fraction * spec.width as f64;
    let t = [0.5 * spec.width as f64 / scale, 0.5 * spec.height as f64 / scale, 0.0];
    Pose::from_euler(spec.yaw, spec.pitch, spec.roll, t, scale)
}

/// Color of the model-space surface point `p` under planted parameters.
fn scene_color(p: [f64; 3], planted: &[f64]) -> [f64; 3] {
    let mut c = procedural_color(p);
    for (k, &a) in planted.iter().enumerate() {
        for (ch, v) in c.iter_mut().enumerate() {
            *v += a * tex_basis_value(k, p, ch);
        }
    }
    c.map(|v| v.clamp(0.0, 1.0))
}

/// Build the model and paint the image with the exact texture of each
/// covered pixel's surface point.
pub fn face_scene(spec: &SceneSpec) -> Result<Scene> {
    let model = face_cap_model(&spec.cap)?;
    let pose = centered_pose(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.cap.seed ^ 0x5eed);
    let planted_tex: Vec<f64> = (0..model.tex_dim())
        .map(|_| spec.planted_scale * rng.gen_range(-1.0..1.0))
        .collect();
    let alpha_id = vec![0.0; model.id_dim()];
    let alpha_exp = vec![0.0; model.exp_dim()];
    let vertices = model.synthesize_shape(&alpha_id, &alpha_exp)?;
    let projected = project(&vertices, &pose);
    let buffers = rasterize(&projected, model.triangles(), spec.width, spec.height)?;
    let image = Image::from_fn(spec.width, spec.height, 3, |x, y, c| {
        let pixel = y * spec.width + x;
        match buffers.triangle_at(pixel) {
            None => spec.background,
            Some(_) => {
                let p = pose.unproject([x as f64 + 0.5, y as f64 + 0.5], buffers.depth[pixel]);
                scene_color([p[0], p[1], p[2]], &planted_tex)[c]
            }
        }
    });
    Ok(Scene {
        model,
        params: FaceParams {
            alpha_id,
            alpha_exp,
            pose,
        },
        image,
        planted_tex,
    })
}

/// Paths of a scene written to disk.
#[derive(Debug, Clone)]
pub struct ScenePaths {
    pub model: PathBuf,
    pub image: PathBuf,
    pub params: PathBuf,
}

/// Write `model.uvmm`, `image.pfm` and `params.txt` into `dir`.
pub fn write_scene(scene: &Scene, dir: impl AsRef<Path>) -> Result<ScenePaths> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
    let paths = ScenePaths {
        model: dir.join("model.uvmm"),
        image: dir.join("image.pfm"),
        params: dir.join("params.txt"),
    };
    scene.model.save(&paths.model)?;
    scene.image.save_pfm(&paths.image)?;
    scene.params.save(&paths.params)?;
    Ok(paths)
}
