//! End-to-end commands behind the CLI. Each failure names the stage it came
//! from; outputs contain no timestamps, so identical inputs give identical
//! files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::blend::{make_pseudo_uv, SolveStats};
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::metrics::{compare, downsample_features, MetricReport};
use crate::model::{load_model, MorphableModel};
use crate::params::FaceParams;
use crate::render::render_model;
use crate::texture_fit::{fit_texture, texture_to_uv, TextureFit};
use crate::uv::{default_erosion_radius, trace_uv_gt, UvMap};

/// An error tagged with the pipeline stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl StageError {
    /// Process exit code: 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        if self.error.is_numerical() {
            2
        } else {
            1
        }
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Stage<T> {
    fn stage(self, stage: &'static str) -> StageResult<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, stage: &'static str) -> StageResult<T> {
        self.map_err(|error| StageError { stage, error })
    }
}

/// Load an image by extension: `.pfm` or `.png`.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => Image::load_pfm(path),
        "png" => Image::load_png(path),
        other => Err(Error::ImageFormat(format!("unsupported image extension {other:?} in {}", path.display()))),
    }
}

/// Save an image by extension: `.pfm` or `.png`.
pub fn save_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => image.save_pfm(path),
        "png" => image.save_png(path),
        other => Err(Error::ImageFormat(format!("unsupported image extension {other:?} in {}", path.display()))),
    }
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

/// Validity image next to a UV data PNG: `name.png` pairs with `name_valid.png`.
pub fn validity_path(data_path: &Path) -> PathBuf {
    let stem = data_path.file_stem().and_then(|s| s.to_str()).unwrap_or("uv");
    data_path.with_file_name(format!("{stem}_valid.png"))
}

/// Load a UV map from a combined `.pfm` or from a PNG pair.
pub fn load_uv(path: impl AsRef<Path>) -> Result<UvMap> {
    let path = path.as_ref();
    match extension(path).as_str() {
        "pfm" => UvMap::load_pfm(path),
        "png" => UvMap::load_png_pair(path, validity_path(path)),
        other => Err(Error::ImageFormat(format!("unsupported UV map extension {other:?} in {}", path.display()))),
    }
}

fn save_uv(uv: &UvMap, dir: &Path, name: &str) -> Result<()> {
    let data = dir.join(format!("{name}.png"));
    uv.save_png_pair(&data, validity_path(&data))?;
    uv.save_pfm(dir.join(format!("{name}.pfm")))
}

/// Quantities recorded by [`cmd_pseudo_uv`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoUvReport {
    pub vertices: usize,
    pub triangles: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub uv_resolution: usize,
    pub erosion_radius: usize,
    pub visible_vertices: usize,
    pub sampled_vertices: usize,
    pub face_mask_pixels: usize,
    pub eroded_mask_pixels: usize,
    pub uv_gt_valid_fraction: f64,
    pub uv_bfm_valid_fraction: f64,
    pub uv_bl_valid_fraction: f64,
    pub lambda_fit: f64,
    pub fit_residual: f64,
    pub blend: SolveStats,
    pub fill: SolveStats,
    pub poisson_residual: f64,
}

impl PseudoUvReport {
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("vertices = {}", self.vertices),
            format!("triangles = {}", self.triangles),
            format!("image_width = {}", self.image_width),
            format!("image_height = {}", self.image_height),
            format!("uv_resolution = {}", self.uv_resolution),
            format!("erosion_radius = {}", self.erosion_radius),
            format!("visible_vertices = {}", self.visible_vertices),
            format!("sampled_vertices = {}", self.sampled_vertices),
            format!("face_mask_pixels = {}", self.face_mask_pixels),
            format!("eroded_mask_pixels = {}", self.eroded_mask_pixels),
            format!("uv_gt_valid_fraction = {}", self.uv_gt_valid_fraction),
            format!("uv_bfm_valid_fraction = {}", self.uv_bfm_valid_fraction),
            format!("uv_bl_valid_fraction = {}", self.uv_bl_valid_fraction),
            format!("lambda_fit = {}", self.lambda_fit),
            format!("fit_residual = {}", self.fit_residual),
        ];
        for (name, s) in [("blend", &self.blend), ("fill", &self.fill)] {
            lines.push(format!("{name}_unknowns = {}", s.unknowns));
            lines.push(format!("{name}_iterations = {}", s.iterations));
            lines.push(format!("{name}_residual = {}", s.max_residual));
        }
        lines.push(format!("poisson_residual = {}", self.poisson_residual));
        lines.join("\n") + "\n"
    }
}

/// Every map produced by the pseudo ground-truth pipeline.
#[derive(Debug, Clone)]
pub struct PseudoUvOutputs {
    pub uv_gt: UvMap,
    pub uv_bfm: UvMap,
    pub uv_bl: UvMap,
    pub fit: TextureFit,
    pub report: PseudoUvReport,
}

/// Build UV_gt, UV_bfm and UV_bl in memory.
pub fn pseudo_uv(
    model: &MorphableModel,
    image: &Image,
    params: &FaceParams,
    config: &PipelineConfig,
) -> StageResult<PseudoUvOutputs> {
    config.validate().stage("config")?;
    let radius = config.erosion_radius.unwrap_or_else(|| default_erosion_radius(image.width()));
    let trace = trace_uv_gt(
        image,
        model,
        &params.alpha_id,
        &params.alpha_exp,
        &params.pose,
        config.uv_resolution,
        radius,
    )
    .stage("uv_gt")?;
    if trace.uv.valid_count() == 0 {
        return Err(Error::InvalidArgument(format!(
            "empty UV_gt: no valid texels ({} face-mask pixels left after erosion by {radius})",
            trace.eroded_mask.count()
        )))
        .stage("uv_gt");
    }
    let fit = fit_texture(model, &trace.colors, &trace.sample_mask, config.lambda_fit, config.use_mean).stage("texture_fit")?;
    let uv_bfm = texture_to_uv(model, &fit, config.uv_resolution, config.use_mean).stage("uv_bfm")?;
    let pseudo = make_pseudo_uv(&trace.uv, &uv_bfm).stage("poisson_blend")?;
    let report = PseudoUvReport {
        vertices: model.vertex_count(),
        triangles: model.triangle_count(),
        image_width: image.width(),
        image_height: image.height(),
        uv_resolution: config.uv_resolution,
        erosion_radius: radius,
        visible_vertices: trace.visibility.count(),
        sampled_vertices: trace.sample_mask.count(),
        face_mask_pixels: trace.face_mask.count(),
        eroded_mask_pixels: trace.eroded_mask.count(),
        uv_gt_valid_fraction: trace.uv.valid_fraction(),
        uv_bfm_valid_fraction: uv_bfm.valid_fraction(),
        uv_bl_valid_fraction: pseudo.uv.valid_fraction(),
        lambda_fit: fit.lambda,
        fit_residual: fit.residual,
        blend: pseudo.blend,
        fill: pseudo.fill,
        poisson_residual: pseudo.max_residual(),
    };
    Ok(PseudoUvOutputs {
        uv_gt: trace.uv,
        uv_bfm,
        uv_bl: pseudo.uv,
        fit,
        report,
    })
}

/// File names written by [`cmd_pseudo_uv`], relative to the output directory.
pub const PSEUDO_UV_ARTIFACTS: [&str; 13] = [
    "uv_gt.png",
    "uv_gt_valid.png",
    "uv_gt.pfm",
    "uv_bfm.png",
    "uv_bfm_valid.png",
    "uv_bfm.pfm",
    "uv_bl.png",
    "uv_bl_valid.png",
    "uv_bl.pfm",
    "texture_fit.txt",
    "report.txt",
    "report.json",
    "config.txt",
];

/// Load the inputs named in `config`, build the three maps and write them,
/// the texture fit and a report into `config.output_dir`.
pub fn cmd_pseudo_uv(config: &PipelineConfig) -> StageResult<PseudoUvReport> {
    config
        .require_paths(&["model_path", "image_path", "params_path", "output_dir"])
        .stage("config")?;
    let model = load_model(&config.model_path).stage("load_model")?;
    let image = load_image(&config.image_path).stage("load_image")?;
    let params = FaceParams::load(&config.params_path).stage("load_params")?;
    let outputs = pseudo_uv(&model, &image, &params, config)?;

    let out = &config.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e)).stage("write_outputs")?;
    let write = || -> Result<()> {
        save_uv(&outputs.uv_gt, out, "uv_gt")?;
        save_uv(&outputs.uv_bfm, out, "uv_bfm")?;
        save_uv(&outputs.uv_bl, out, "uv_bl")?;
        outputs.fit.save(out.join("texture_fit.txt"))?;
        let text_path = out.join("report.txt");
        std::fs::write(&text_path, outputs.report.to_text()).map_err(|e| Error::io(&text_path, e))?;
        let json_path = out.join("report.json");
        let json = serde_json::to_string_pretty(&outputs.report).expect("report serializes");
        std::fs::write(&json_path, json + "\n").map_err(|e| Error::io(&json_path, e))?;
        let config_path = out.join("config.txt");
        std::fs::write(&config_path, config.to_text()).map_err(|e| Error::io(&config_path, e))
    };
    write().stage("write_outputs")?;
    Ok(outputs.report)
}

/// Render a UV map onto the configured shape. `pose_override` replaces the
/// pose (and only the pose) with the one in another parameter file.
pub fn cmd_render(
    config: &PipelineConfig,
    uv_path: &Path,
    pose_override: Option<&Path>,
    size: (usize, usize),
    output: &Path,
) -> StageResult<Image> {
    config.require_paths(&["model_path", "params_path"]).stage("config")?;
    let model = load_model(&config.model_path).stage("load_model")?;
    let mut params = FaceParams::load(&config.params_path).stage("load_params")?;
    if let Some(path) = pose_override {
        params.pose = FaceParams::load(path).stage("load_pose")?.pose;
    }
    let uv = load_uv(uv_path).stage("load_uv")?;
    let image = render_model(&model, &params.alpha_id, &params.alpha_exp, &params.pose, &uv, size.0, size.1).stage("render")?;
    save_image(&image, output).stage("write_outputs")?;
    if let Some(mask) = image.mask() {
        crate::imaging::save_mask_png(mask, size.0, size.1, validity_path(output)).stage("write_outputs")?;
    }
    Ok(image)
}

/// Feature vectors: one value per line, `#` comments allowed.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(n, l)| (n, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
        .map(|(n, l)| {
            l.parse::<f64>()
                .map_err(|e| Error::parse(format!("{}:{}", path.display(), n + 1), e.to_string()))
        })
        .collect()
}

/// Cells per side of the stand-in features used when no feature files are given.
pub const STAND_IN_CELLS: usize = 8;

/// L1, SSIM and cosine similarity of two images. Without feature files the
/// cosine compares downsampled images and is left out when either of those
/// is all zero.
pub fn cmd_metrics(
    a_path: &Path,
    b_path: &Path,
    features: Option<(&Path, &Path)>,
) -> StageResult<MetricReport> {
    let a = load_image(a_path).stage("load_image")?;
    let b = load_image(b_path).stage("load_image")?;
    let (fa, fb) = match features {
        Some((pa, pb)) => (
            load_features(pa).stage("load_features")?,
            load_features(pb).stage("load_features")?,
        ),
        None => {
            let fa = downsample_features(&a, STAND_IN_CELLS.min(a.width()).min(a.height())).stage("features")?;
            let fb = downsample_features(&b, STAND_IN_CELLS.min(b.width()).min(b.height())).stage("features")?;
            if [&fa, &fb].iter().any(|f| f.iter().all(|&v| v == 0.0)) {
                return compare(&a, &b, None).stage("metrics");
            }
            (fa, fb)
        }
    };
    compare(&a, &b, Some((&fa, &fb))).stage("metrics")
}
