//! Evaluation metrics: masked L1, single-scale SSIM and cosine similarity of
//! feature vectors, plus a downsample-and-flatten feature stand-in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::loss::{expand_mask, l1_loss};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_C1: f64 = 0.01 * 0.01;
pub const SSIM_C2: f64 = 0.03 * 0.03;

fn check_same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::ShapeMismatch(format!(
            "images are {}x{}x{} and {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

/// Mean absolute difference over pixels valid in both images (all pixels
/// when neither carries a mask).
pub fn l1_metric(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let joint: Vec<bool> = a.mask_or_full().iter().zip(b.mask_or_full()).map(|(&x, y)| x && y).collect();
    Ok(l1_loss(a.data(), b.data(), Some(&expand_mask(&joint, a.channels())))?.value)
}

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let taps: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian filter restricted to windows that fit inside the frame.
fn filter_valid(plane: &[f64], w: usize, h: usize, g: &[f64]) -> Vec<f64> {
    let n = g.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|k| g[k] * plane[y * w + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|k| g[k] * rows[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM (11x11 Gaussian window, sigma 1.5) over every window that
/// fits inside the frame, averaged over channels.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_same_shape(a, b)?;
    let (w, h, ch) = (a.width(), a.height(), a.channels());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::InvalidArgument(format!(
            "ssim needs at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {w}x{h}"
        )));
    }
    let g = gaussian_window();
    let plane = |img: &Image, c: usize| -> Vec<f64> { (0..w * h).map(|p| img.data()[p * ch + c]).collect() };
    let mut total = 0.0;
    for c in 0..ch {
        let pa = plane(a, c);
        let pb = plane(b, c);
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(u, v)| u * v).collect() };
        let mu_a = filter_valid(&pa, w, h, &g);
        let mu_b = filter_valid(&pb, w, h, &g);
        let aa = filter_valid(&prod(&pa, &pa), w, h, &g);
        let bb = filter_valid(&prod(&pb, &pb), w, h, &g);
        let ab = filter_valid(&prod(&pa, &pb), w, h, &g);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = aa[i] - ma * ma;
            let vb = bb[i] - mb * mb;
            let cov = ab[i] - ma * mb;
            let num = (2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2);
            let den = (ma * ma + mb * mb + SSIM_C1) * (va + vb + SSIM_C2);
            sum += num / den;
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / ch as f64)
}

/// `<a, b> / (|a| |b|)`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("feature lengths {} and {}", a.len(), b.len())));
    }
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArgument("cosine similarity of a zero vector".into()));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Stand-in identity features: box-average the image onto a `cells x cells`
/// grid and flatten (row-major, channels interleaved).
pub fn downsample_features(image: &Image, cells: usize) -> Result<Vec<f64>> {
    let (w, h, ch) = (image.width(), image.height(), image.channels());
    if cells == 0 || cells > w || cells > h {
        return Err(Error::InvalidArgument(format!("{cells} cells for a {w}x{h} image")));
    }
    let mut out = Vec::with_capacity(cells * cells * ch);
    for cy in 0..cells {
        let (y0, y1) = (cy * h / cells, (cy + 1) * h / cells);
        for cx in 0..cells {
            let (x0, x1) = (cx * w / cells, (cx + 1) * w / cells);
            let n = ((y1 - y0) * (x1 - x0)) as f64;
            for c in 0..ch {
                let mut s = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        s += image.data()[image.index(x, y, c)];
                    }
                }
                out.push(s / n);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub l1: f64,
    pub ssim: f64,
    pub cosine: Option<f64>,
}

impl MetricReport {
    pub fn to_text(&self) -> String {
        let mut s = format!("l1 = {}\nssim = {}\n", self.l1, self.ssim);
        if let Some(c) = self.cosine {
            s.push_str(&format!("cosine = {c}\n"));
        }
        s
    }
}

/// L1 and SSIM of two images plus, when both feature vectors are given,
/// their cosine similarity.
pub fn compare(a: &Image, b: &Image, features: Option<(&[f64], &[f64])>) -> Result<MetricReport> {
    Ok(MetricReport {
        l1: l1_metric(a, b)?,
        ssim: ssim(a, b)?,
        cosine: features.map(|(x, y)| cosine_similarity(x, y)).transpose()?,
    })
}
