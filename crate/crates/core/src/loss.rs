//! Training objectives as plain functions returning a value and the gradient
//! with respect to their primary argument.
//!
//! L1 terms are means over the active entries, not sums.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::uv::UvMap;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub gradient: Option<Vec<f64>>,
}

impl LossValue {
    fn new(value: f64, gradient: Vec<f64>) -> Self {
        LossValue {
            value,
            gradient: Some(gradient),
        }
    }

    pub fn gradient(&self) -> &[f64] {
        self.gradient.as_deref().unwrap_or(&[])
    }
}

/// Per-pixel mask repeated over channels.
pub fn expand_mask(mask: &[bool], channels: usize) -> Vec<bool> {
    mask.iter().flat_map(|&m| std::iter::repeat_n(m, channels)).collect()
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum TvKind {
    /// Sum of squared forward differences.
    #[default]
    Squared,
    /// Sum of absolute forward differences.
    Absolute,
}

/// Smoothness penalty over horizontal and vertical forward differences,
/// summed over pixels and channels.
pub fn tv_loss(x: &impl Planar, kind: TvKind) -> Result<LossValue> {
    let (w, h, ch) = (x.width(), x.height(), x.channels());
    if w < 2 || h < 2 {
        return Err(Error::InvalidArgument(format!("tv loss needs at least 2x2, got {w}x{h}")));
    }
    let data = x.data();
    let mut value = 0.0;
    let mut grad = vec![0.0; data.len()];
    let mut term = |a: usize, b: usize| {
        let d = data[b] - data[a];
        let (v, g) = match kind {
            TvKind::Squared => (d * d, 2.0 * d),
            TvKind::Absolute => (d.abs(), sign(d)),
        };
        value += v;
        grad[b] += g;
        grad[a] -= g;
    };
    for y in 0..h {
        for xx in 0..w {
            for c in 0..ch {
                let here = x.index(xx, y, c);
                if xx + 1 < w {
                    term(here, x.index(xx + 1, y, c));
                }
                if y + 1 < h {
                    term(here, x.index(xx, y + 1, c));
                }
            }
        }
    }
    Ok(LossValue::new(value, grad))
}

/// Mean absolute difference over the masked entries; gradient w.r.t. `a`.
pub fn l1_loss(a: &[f64], b: &[f64], mask: Option<&[bool]>) -> Result<LossValue> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!("l1 operands have {} and {} entries", a.len(), b.len())));
    }
    if let Some(m) = mask {
        if m.len() != a.len() {
            return Err(Error::ShapeMismatch(format!("mask has {} entries for {}", m.len(), a.len())));
        }
    }
    let active = |i: usize| mask.is_none_or(|m| m[i]);
    let count = (0..a.len()).filter(|&i| active(i)).count();
    if count == 0 {
        return Err(Error::InvalidArgument("l1 loss over an empty mask".into()));
    }
    let n = count as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; a.len()];
    for i in (0..a.len()).filter(|&i| active(i)) {
        let d = a[i] - b[i];
        value += d.abs();
        grad[i] = sign(d) / n;
    }
    Ok(LossValue::new(value / n, grad))
}

fn joint_mask(a: &[bool], b: &[bool]) -> Vec<bool> {
    a.iter().zip(b).map(|(&x, &y)| x && y).collect()
}

/// Sampler objective: UV term over texels valid in both maps, image term over
/// pixels valid in both images, plus `lambda_tv` times the squared TV of the
/// sampled map. Gradient w.r.t. `uv_spl`.
pub fn sampler_loss(
    uv_spl: &UvMap,
    uv_gt: &UvMap,
    rendered: &Image,
    input_masked: &Image,
    lambda_tv: f64,
) -> Result<LossValue> {
    if lambda_tv < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda_tv {lambda_tv} must be >= 0")));
    }
    let uv_mask = expand_mask(&joint_mask(uv_spl.valid(), uv_gt.valid()), uv_spl.channels());
    let uv_term = l1_loss(uv_spl.data(), uv_gt.data(), Some(&uv_mask))?;
    if rendered.width() != input_masked.width() || rendered.height() != input_masked.height() {
        return Err(Error::ShapeMismatch("rendered and input images differ in size".into()));
    }
    let img_mask = expand_mask(
        &joint_mask(&rendered.mask_or_full(), &input_masked.mask_or_full()),
        rendered.channels(),
    );
    let img_term = l1_loss(rendered.data(), input_masked.data(), Some(&img_mask))?;
    let tv = tv_loss(uv_spl, TvKind::Squared)?;
    let grad = uv_term
        .gradient()
        .iter()
        .zip(tv.gradient())
        .map(|(g, t)| g + lambda_tv * t)
        .collect();
    Ok(LossValue::new(uv_term.value + img_term.value + lambda_tv * tv.value, grad))
}

/// Mean absolute difference between a map and its left-right mirror, over
/// texels valid on both sides.
pub fn symmetry_loss(uv: &UvMap) -> Result<LossValue> {
    let mirror = uv.mirrored();
    let mask = expand_mask(&joint_mask(uv.valid(), mirror.valid()), uv.channels());
    let base = l1_loss(uv.data(), mirror.data(), Some(&mask))?;
    // each texel also appears as the mirror of its partner, doubling its gradient
    let grad = base.gradient().iter().map(|g| 2.0 * g).collect();
    Ok(LossValue::new(base.value, grad))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum AdversarialMode {
    /// `mean ln D(x) + mean ln(1 − D(x̂))`, the discriminator's objective.
    #[default]
    Minimax,
    /// Generator minimizes `mean ln(1 − D(x̂))`.
    GeneratorSaturating,
    /// Generator minimizes `−mean ln D(x̂)`.
    GeneratorNonSaturating,
}

/// Adversarial objective over discriminator scores in `(0, 1)`. The gradient
/// is w.r.t. the concatenation `[real_scores, fake_scores]`. An empty list
/// contributes zero.
pub fn adversarial_loss(real_scores: &[f64], fake_scores: &[f64], mode: AdversarialMode) -> Result<LossValue> {
    if let Some(&s) = real_scores.iter().chain(fake_scores).find(|&&s| !(s > 0.0 && s < 1.0)) {
        return Err(Error::ScoreDomain(s));
    }
    let (nr, nf) = (real_scores.len(), fake_scores.len());
    let mut grad = vec![0.0; nr + nf];
    let mut value = 0.0;
    let use_real = mode == AdversarialMode::Minimax;
    if use_real && nr > 0 {
        value += real_scores.iter().map(|s| s.ln()).sum::<f64>() / nr as f64;
        for (g, s) in grad.iter_mut().zip(real_scores) {
            *g = 1.0 / (s * nr as f64);
        }
    }
    if nf > 0 {
        let n = nf as f64;
        match mode {
            AdversarialMode::Minimax | AdversarialMode::GeneratorSaturating => {
                value += fake_scores.iter().map(|s| (1.0 - s).ln()).sum::<f64>() / n;
                for (g, s) in grad[nr..].iter_mut().zip(fake_scores) {
                    *g = -1.0 / ((1.0 - s) * n);
                }
            }
            AdversarialMode::GeneratorNonSaturating => {
                value -= fake_scores.iter().map(|s| s.ln()).sum::<f64>() / n;
                for (g, s) in grad[nr..].iter_mut().zip(fake_scores) {
                    *g = -1.0 / (s * n);
                }
            }
        }
    }
    if nr + nf == 0 {
        return Err(Error::InvalidArgument("adversarial loss needs at least one score".into()));
    }
    Ok(LossValue::new(value, grad))
}

/// Mean absolute difference of two feature vectors; gradient w.r.t. `feat_a`.
pub fn identity_loss(feat_a: &[f64], feat_b: &[f64]) -> Result<LossValue> {
    l1_loss(feat_a, feat_b, None)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossComponents {
    pub rec: f64,
    pub adv: f64,
    pub sym: f64,
    pub id: f64,
    pub tv: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adv: f64,
    pub sym: f64,
    pub id: f64,
    pub tv: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adv: 1.0,
            sym: 1.0,
            id: 1.0,
            tv: 1.0,
        }
    }
}

/// `rec + w_adv·adv + w_sym·sym + w_id·id + w_tv·tv`; gradient w.r.t. the
/// components in that order.
pub fn total_loss(parts: &LossComponents, weights: &LossWeights) -> LossValue {
    let value = parts.rec + weights.adv * parts.adv + weights.sym * parts.sym + weights.id * parts.id + weights.tv * parts.tv;
    LossValue::new(value, vec![1.0, weights.adv, weights.sym, weights.id, weights.tv])
}

/// Pixel rectangle `[x, x + width) x [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn full(resolution: usize) -> Self {
        Rect {
            x: 0,
            y: 0,
            width: resolution,
            height: resolution,
        }
    }
}

fn fraction(resolution: usize, f: f64) -> usize {
    (resolution as f64 * f).round() as usize
}

/// Middle half of the columns by the middle 60% of the rows.
pub fn default_center_rect(resolution: usize) -> Rect {
    let width = fraction(resolution, 0.5);
    let height = fraction(resolution, 0.6);
    Rect {
        x: (resolution - width) / 2,
        y: (resolution - height) / 2,
        width,
        height,
    }
}

/// Outer 35% of the columns on each side, full height.
pub fn default_side_rects(resolution: usize) -> (Rect, Rect) {
    let width = fraction(resolution, 0.35);
    let left = Rect {
        x: 0,
        y: 0,
        width,
        height: resolution,
    };
    let right = Rect {
        x: resolution - width,
        ..left
    };
    (left, right)
}

/// Crops used by the partial-map discriminators. The right patch is mirrored
/// so both side patches share one orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct UvPatches {
    pub center: Image,
    pub left: Image,
    pub right: Image,
}

fn crop(uv: &UvMap, rect: Rect, mirror: bool, nose_mask: Option<&[bool]>) -> Result<Image> {
    let r = uv.resolution();
    if rect.width == 0 || rect.height == 0 || rect.x + rect.width > r || rect.y + rect.height > r {
        return Err(Error::InvalidArgument(format!("crop {rect:?} is outside the {r}x{r} map")));
    }
    let ch = uv.channels();
    let mut data = Vec::with_capacity(rect.width * rect.height * ch);
    let mut mask = Vec::with_capacity(rect.width * rect.height);
    for y in rect.y..rect.y + rect.height {
        for i in 0..rect.width {
            let x = if mirror { rect.x + rect.width - 1 - i } else { rect.x + i };
            let t = y * r + x;
            let keep = uv.valid()[t] && !nose_mask.is_some_and(|m| m[t]);
            mask.push(keep);
            if keep {
                data.extend_from_slice(uv.texel(t));
            } else {
                data.extend(std::iter::repeat_n(0.0, ch));
            }
        }
    }
    let image = if ch == 1 || ch == 3 {
        Image::from_data(rect.width, rect.height, ch, data)?
    } else {
        return Err(Error::InvalidArgument(format!("cannot crop a {ch}-channel map")));
    };
    image.with_mask(mask)
}

/// Crop center and side patches. Texels flagged in `nose_mask` (indexed over
/// the full map) are zeroed and marked invalid in every patch.
pub fn crop_uv_patches(uv: &UvMap, center: Rect, sides: (Rect, Rect), nose_mask: Option<&[bool]>) -> Result<UvPatches> {
    if let Some(m) = nose_mask {
        if m.len() != uv.valid().len() {
            return Err(Error::ShapeMismatch(format!(
                "nose mask has {} entries for {} texels",
                m.len(),
                uv.valid().len()
            )));
        }
    }
    if sides.0.width != sides.1.width || sides.0.height != sides.1.height {
        return Err(Error::InvalidArgument("side crops must have the same size".into()));
    }
    Ok(UvPatches {
        center: crop(uv, center, false, nose_mask)?,
        left: crop(uv, sides.0, false, nose_mask)?,
        right: crop(uv, sides.1, true, nose_mask)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tv_of_constant_is_zero() {
        let img = Image::filled(5, 4, 3, 0.3);
        assert_eq!(tv_loss(&img, TvKind::Squared).unwrap().value, 0.0);
    }

    #[test]
    fn tv_hand_value() {
        let img = Image::from_data(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        assert_eq!(tv_loss(&img, TvKind::Squared).unwrap().value, 2.0);
        assert_eq!(tv_loss(&img, TvKind::Absolute).unwrap().value, 2.0);
        assert!(tv_loss(&Image::new(1, 5, 1), TvKind::Squared).is_err());
    }

    #[test]
    fn l1_values() {
        assert_eq!(l1_loss(&[0.2, 0.4], &[0.2, 0.4], None).unwrap().value, 0.0);
        assert_eq!(l1_loss(&[0.0; 6], &[1.0; 6], None).unwrap().value, 1.0);
        assert_eq!(l1_loss(&[0.0, 0.5, 1.0, 0.25], &[0.0, 0.0, 1.0, 0.75], None).unwrap().value, 0.25);
        assert!(l1_loss(&[0.0], &[1.0], Some(&[false])).is_err());
        let masked = l1_loss(&[0.0, 9.0], &[1.0, 0.0], Some(&[true, false])).unwrap();
        assert_eq!(masked.value, 1.0);
        assert_eq!(masked.gradient(), &[-1.0, 0.0]);
    }

    #[test]
    fn sampler_loss_single_active_term() {
        let uv = UvMap::filled(8, 3, 0.4);
        let rendered = Image::filled(6, 6, 3, 0.0);
        let input = Image::filled(6, 6, 3, 1.0);
        let l = sampler_loss(&uv, &uv, &rendered, &input, 3.0).unwrap();
        assert_eq!(l.value, 1.0);
    }

    #[test]
    fn symmetry_values() {
        let sym = UvMap::from_fn(6, 3, |c, _, k| Some(((c as i64 - 2).abs() * (c as i64 - 3).abs()) as f64 / 10.0 + k as f64 * 0.1));
        assert_eq!(symmetry_loss(&sym).unwrap().value, 0.0);
        let halves = UvMap::from_fn(6, 3, |c, _, _| Some(if c < 3 { 0.0 } else { 1.0 }));
        assert_eq!(symmetry_loss(&halves).unwrap().value, 1.0);
    }

    #[test]
    fn adversarial_hand_values() {
        let eps = 1e-12;
        let opt = adversarial_loss(&[1.0 - eps], &[eps], AdversarialMode::Minimax).unwrap();
        assert!(opt.value.abs() < 1e-10);
        let half = adversarial_loss(&[0.5], &[0.5], AdversarialMode::Minimax).unwrap();
        assert!((half.value - 2.0 * 0.5f64.ln()).abs() < 1e-12);
        let real_only = adversarial_loss(&[0.5], &[], AdversarialMode::Minimax).unwrap();
        assert!((real_only.value - 0.5f64.ln()).abs() < 1e-12);
        assert!(matches!(adversarial_loss(&[1.0], &[0.5], AdversarialMode::Minimax), Err(Error::ScoreDomain(_))));
        assert!(matches!(adversarial_loss(&[0.5], &[0.0], AdversarialMode::Minimax), Err(Error::ScoreDomain(_))));
    }

    #[test]
    fn identity_values() {
        assert_eq!(identity_loss(&[1.0, 2.0], &[1.0, 2.0]).unwrap().value, 0.0);
        assert_eq!(identity_loss(&[1.0, -2.0, 0.5], &[3.0, 0.0, -1.5]).unwrap().value, 2.0);
        assert!(identity_loss(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn total_loss_values() {
        let parts = LossComponents {
            rec: 0.7,
            adv: 3.0,
            sym: 4.0,
            id: 5.0,
            tv: 6.0,
        };
        let zero = LossWeights {
            adv: 0.0,
            sym: 0.0,
            id: 0.0,
            tv: 0.0,
        };
        assert_eq!(total_loss(&parts, &zero).value, 0.7);
        let ones = LossComponents {
            rec: 1.0,
            adv: 1.0,
            sym: 1.0,
            id: 1.0,
            tv: 1.0,
        };
        assert_eq!(total_loss(&ones, &LossWeights::default()).value, 5.0);
    }

    #[test]
    fn full_crop_equals_the_map() {
        let uv = UvMap::from_fn(8, 3, |c, r, k| Some((c * 8 + r + k) as f64 / 80.0));
        let p = crop_uv_patches(&uv, Rect::full(8), (Rect::full(8), Rect::full(8)), None).unwrap();
        assert_eq!(p.center.data(), uv.data());
        assert!(crop_uv_patches(&uv, Rect { x: 4, y: 0, width: 5, height: 8 }, default_side_rects(8), None).is_err());
    }

    #[test]
    fn default_rects() {
        assert_eq!(default_center_rect(256), Rect { x: 64, y: 51, width: 128, height: 154 });
        let (l, r) = default_side_rects(256);
        assert_eq!((l.x, l.width, r.x, r.width), (0, 90, 166, 90));
    }
}
