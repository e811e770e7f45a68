//! Masked, ridge-regularized fit of morphable-model texture parameters:
//!
//! minimize `‖(c' − W p) ⊙ m‖² + λ‖p‖²`
//!
//! solved through the normal equations `(WᵀMW + λI) p = WᵀM c'` with a dense
//! Cholesky factorization. `c'` is the observed color vector, minus the mean
//! texture when `use_mean` is set.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::MorphableModel;
use crate::raster::VisibilityMask;
use crate::uv::{render_uv, UvMap};

#[derive(Debug, Clone, PartialEq)]
pub struct TextureFit {
    pub params: Vec<f64>,
    /// Data term `‖(c' − W p) ⊙ m‖²` at the solution.
    pub residual: f64,
    pub lambda: f64,
}

/// Expand a per-vertex mask to the interleaved rgb rows of the basis.
pub fn expand_vertex_mask(mask: &VisibilityMask) -> Vec<bool> {
    mask.as_slice().iter().flat_map(|&m| [m; 3]).collect()
}

/// `1e-3 * trace(WᵀMW) / K`, which tracks the scale of the basis.
pub fn default_lambda(basis: &DMatrix<f64>, row_mask: &[bool]) -> f64 {
    let k = basis.ncols().max(1);
    let trace: f64 = basis
        .row_iter()
        .zip(row_mask)
        .filter(|(_, &m)| m)
        .map(|(row, _)| row.norm_squared())
        .sum();
    1e-3 * trace / k as f64
}

/// Solve the masked ridge problem for an arbitrary basis. Returns the
/// parameters and the data term at the solution.
pub fn solve_masked_ridge(
    basis: &DMatrix<f64>,
    target: &DVector<f64>,
    row_mask: &[bool],
    lambda: f64,
) -> Result<(DVector<f64>, f64)> {
    let (rows, k) = basis.shape();
    if target.len() != rows || row_mask.len() != rows {
        return Err(Error::ShapeMismatch(format!(
            "basis has {rows} rows, target {} and mask {}",
            target.len(),
            row_mask.len()
        )));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} must be finite and >= 0")));
    }
    if target.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("texture fit colors".into()));
    }
    let masked = row_mask.iter().filter(|&&m| m).count();
    if lambda == 0.0 && masked < k {
        return Err(Error::Underdetermined { masked, params: k });
    }

    let kept: Vec<usize> = (0..rows).filter(|&r| row_mask[r]).collect();
    let masked_basis = basis.select_rows(&kept);
    let masked_target = target.select_rows(&kept);
    let mut gram = masked_basis.tr_mul(&masked_basis);
    let rhs = masked_basis.tr_mul(&masked_target);
    for i in 0..k {
        gram[(i, i)] += lambda;
    }
    let chol = gram.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    if k > 0 && lo * lo <= hi * hi * 10.0 * k as f64 * f64::EPSILON {
        return Err(Error::NotPositiveDefinite);
    }
    let params = chol.solve(&rhs);

    let residual = masked_residual(basis, target, row_mask, &params);
    Ok((params, residual))
}

fn masked_residual(basis: &DMatrix<f64>, target: &DVector<f64>, row_mask: &[bool], params: &DVector<f64>) -> f64 {
    row_mask
        .iter()
        .enumerate()
        .filter(|(_, &m)| m)
        .map(|(r, _)| {
            let e = target[r] - basis.row(r).dot(&params.transpose());
            e * e
        })
        .sum()
}

/// Fit texture parameters to the sampled vertex colors.
///
/// `lambda = None` picks [`default_lambda`].
pub fn fit_texture(
    model: &MorphableModel,
    colors: &[[f64; 3]],
    mask: &VisibilityMask,
    lambda: Option<f64>,
    use_mean: bool,
) -> Result<TextureFit> {
    if colors.len() != model.vertex_count() || mask.len() != model.vertex_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} colors and {} mask entries for {} vertices",
            colors.len(),
            mask.len(),
            model.vertex_count()
        )));
    }
    let mut target = DVector::from_iterator(colors.len() * 3, colors.iter().flatten().copied());
    if use_mean {
        target -= model.mean_texture();
    }
    let row_mask = expand_vertex_mask(mask);
    let lambda = lambda.unwrap_or_else(|| default_lambda(model.tex_basis(), &row_mask));
    let (params, residual) = solve_masked_ridge(model.tex_basis(), &target, &row_mask, lambda)?;
    Ok(TextureFit {
        params: params.as_slice().to_vec(),
        residual,
        lambda,
    })
}

/// Per-vertex colors `clamp(mean·[use_mean] + W p, 0, 1)`.
pub fn texture_colors(model: &MorphableModel, params: &[f64], use_mean: bool) -> Result<Vec<[f64; 3]>> {
    if params.len() != model.tex_dim() {
        return Err(Error::ShapeMismatch(format!(
            "{} texture parameters for a basis with {} columns",
            params.len(),
            model.tex_dim()
        )));
    }
    let mut flat = model.tex_basis() * DVector::from_column_slice(params);
    if use_mean {
        flat += model.mean_texture();
    }
    Ok(flat
        .as_slice()
        .chunks_exact(3)
        .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
        .collect())
}

/// Complete UV map of the fitted texture over the whole mesh coverage.
pub fn texture_to_uv(model: &MorphableModel, fit: &TextureFit, resolution: usize, use_mean: bool) -> Result<UvMap> {
    let colors = texture_colors(model, &fit.params, use_mean)?;
    render_uv(
        &colors,
        &VisibilityMask::all(model.vertex_count()),
        model.uv_coords(),
        model.triangles(),
        resolution,
    )
}

impl TextureFit {
    /// Flat text: `#` comment, `lambda = ...`, `residual = ...`, `count = K`,
    /// then one parameter per line.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# uvtex texture fit\n");
        let _ = writeln!(out, "lambda = {:e}", self.lambda);
        let _ = writeln!(out, "residual = {:e}", self.residual);
        let _ = writeln!(out, "count = {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{p:e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lambda = None;
        let mut residual = None;
        let mut count = None;
        let mut params = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let loc = || format!("line {}", n + 1);
            let number = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::parse(loc(), format!("{s:?}: {e}")));
            if let Some((key, value)) = line.split_once('=') {
                match key.trim() {
                    "lambda" => lambda = Some(number(value)?),
                    "residual" => residual = Some(number(value)?),
                    "count" => {
                        count = Some(
                            value
                                .trim()
                                .parse::<usize>()
                                .map_err(|e| Error::parse(loc(), e.to_string()))?,
                        )
                    }
                    other => return Err(Error::parse(loc(), format!("unknown key {other:?}"))),
                }
            } else {
                params.push(number(line)?);
            }
        }
        let missing = |k: &str| Error::parse("header", format!("missing {k}"));
        let count = count.ok_or_else(|| missing("count"))?;
        if count != params.len() {
            return Err(Error::parse("body", format!("count = {count} but {} values", params.len())));
        }
        Ok(TextureFit {
            params,
            residual: residual.ok_or_else(|| missing("residual"))?,
            lambda: lambda.ok_or_else(|| missing("lambda"))?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        TextureFit::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}
