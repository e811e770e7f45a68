mod common;

use common::{fd_gradient, max_rel_err, rng, uniform};
use rand::Rng;
use uvtex::loss::{
    adversarial_loss, crop_uv_patches, default_center_rect, default_side_rects, identity_loss, l1_loss, sampler_loss,
    symmetry_loss, total_loss, tv_loss, AdversarialMode, LossComponents, LossWeights, Rect, TvKind,
};
use uvtex::metrics::{cosine_similarity, ssim, SSIM_C1};
use uvtex::{Image, Planar, UvMap};

/// Values kept at least `gap` away from the matching entries of `other`, so
/// absolute differences stay smooth under finite differences.
fn away_from(r: &mut rand_chacha::ChaCha8Rng, other: &[f64], gap: f64) -> Vec<f64> {
    other
        .iter()
        .map(|&o| loop {
            let v = r.gen_range(0.0..1.0);
            if (v - o).abs() > gap {
                break v;
            }
        })
        .collect()
}

fn map_from(data: &[f64], valid: &[bool], r: usize) -> UvMap {
    UvMap::from_parts(r, 3, data.to_vec(), valid.to_vec()).unwrap()
}

fn oracle_tv(data: &[f64], w: usize, h: usize, ch: usize) -> f64 {
    let at = |x: usize, y: usize, c: usize| data[(y * w + x) * ch + c];
    let mut sum = 0.0;
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                if x + 1 < w {
                    sum += (at(x + 1, y, c) - at(x, y, c)).powi(2);
                }
                if y + 1 < h {
                    sum += (at(x, y + 1, c) - at(x, y, c)).powi(2);
                }
            }
        }
    }
    sum
}

#[test]
fn tv_hand_value_and_gradient() {
    let img = Image::from_data(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    assert_eq!(tv_loss(&img, TvKind::Squared).unwrap().value, 2.0);

    let mut r = rng(1);
    let data = uniform(&mut r, 75, 0.0, 1.0);
    let img = Image::from_data(5, 5, 3, data.clone()).unwrap();
    let value = tv_loss(&img, TvKind::Squared).unwrap();
    assert!((value.value - oracle_tv(&data, 5, 5, 3)).abs() < 1e-12);
    let numeric = fd_gradient(&data, 1e-6, |d| oracle_tv(d, 5, 5, 3));
    assert!(max_rel_err(value.gradient(), &numeric) < 1e-5);
}

#[test]
fn l1_gradient_matches_finite_differences() {
    let mut r = rng(2);
    let b = uniform(&mut r, 75, 0.0, 1.0);
    let a = away_from(&mut r, &b, 1e-3);
    let mask: Vec<bool> = (0..75).map(|_| r.gen_bool(0.7)).collect();
    let value = l1_loss(&a, &b, Some(&mask)).unwrap();
    let n = mask.iter().filter(|&&m| m).count() as f64;
    let oracle = |x: &[f64]| x.iter().zip(&b).zip(&mask).filter(|(_, &m)| m).map(|((x, y), _)| (x - y).abs()).sum::<f64>() / n;
    assert!((value.value - oracle(&a)).abs() < 1e-12);
    assert!(max_rel_err(value.gradient(), &fd_gradient(&a, 1e-6, oracle)) < 1e-4);
}

#[test]
fn l1_half_entries_off_by_half() {
    let a = [0.1, 0.2, 0.3, 0.4];
    let b = [0.6, 0.2, 0.8, 0.4];
    assert!((l1_loss(&a, &b, None).unwrap().value - 0.25).abs() < 1e-15);
}

#[test]
fn symmetry_loss_value_and_gradient() {
    let r = 6;
    let mut g = rng(3);
    let valid: Vec<bool> = (0..r * r).map(|_| g.gen_bool(0.8)).collect();
    let base = uniform(&mut g, r * r * 3, 0.0, 1.0);
    // keep each texel away from its mirror partner
    let mut data = base.clone();
    for row in 0..r {
        for col in r / 2..r {
            let (t, m) = (row * r + col, row * r + r - 1 - col);
            for c in 0..3 {
                if (data[3 * t + c] - data[3 * m + c]).abs() < 0.05 {
                    data[3 * t + c] = (data[3 * m + c] + 0.3) % 1.0;
                }
            }
        }
    }
    let oracle = |d: &[f64]| {
        let (mut sum, mut n) = (0.0, 0.0);
        for row in 0..r {
            for col in 0..r {
                let (t, m) = (row * r + col, row * r + r - 1 - col);
                if valid[t] && valid[m] {
                    for c in 0..3 {
                        sum += (d[3 * t + c] - d[3 * m + c]).abs();
                        n += 1.0;
                    }
                }
            }
        }
        sum / n
    };
    let value = symmetry_loss(&map_from(&data, &valid, r)).unwrap();
    assert!((value.value - oracle(&data)).abs() < 1e-12);
    assert!(max_rel_err(value.gradient(), &fd_gradient(&data, 1e-6, oracle)) < 1e-4);

    let mirror = map_from(&data, &valid, r).mirrored();
    assert!((symmetry_loss(&mirror).unwrap().value - value.value).abs() < 1e-12);
    let symmetric = UvMap::from_fn(r, 3, |col, row, c| Some(((col.min(r - 1 - col) + row + c) as f64) / 10.0));
    assert_eq!(symmetry_loss(&symmetric).unwrap().value, 0.0);
}

#[test]
fn sampler_loss_is_the_sum_of_its_terms() {
    let r = 8;
    let mut g = rng(4);
    let gt_data = uniform(&mut g, r * r * 3, 0.0, 1.0);
    let spl_valid: Vec<bool> = (0..r * r).map(|_| g.gen_bool(0.8)).collect();
    // invalid texels of a map hold zero
    let spl_data: Vec<f64> = away_from(&mut g, &gt_data, 1e-3)
        .into_iter()
        .enumerate()
        .map(|(i, v)| if spl_valid[i / 3] { v } else { 0.0 })
        .collect();
    let gt_valid: Vec<bool> = (0..r * r).map(|_| g.gen_bool(0.7)).collect();
    let rendered = Image::from_data(6, 5, 3, uniform(&mut g, 90, 0.0, 1.0))
        .unwrap()
        .with_mask((0..30).map(|_| g.gen_bool(0.8)).collect())
        .unwrap();
    let input = Image::from_data(6, 5, 3, uniform(&mut g, 90, 0.0, 1.0))
        .unwrap()
        .with_mask((0..30).map(|_| g.gen_bool(0.8)).collect())
        .unwrap();
    let lambda = 0.37;

    let masked_mean = |a: &[f64], b: &[f64], m: &dyn Fn(usize) -> bool| {
        let idx: Vec<usize> = (0..a.len()).filter(|&i| m(i / 3)).collect();
        idx.iter().map(|&i| (a[i] - b[i]).abs()).sum::<f64>() / idx.len() as f64
    };
    let (rm, im) = (rendered.mask().unwrap(), input.mask().unwrap());
    let image_term = masked_mean(rendered.data(), input.data(), &|p| rm[p] && im[p]);
    let oracle = |d: &[f64]| {
        masked_mean(d, &gt_data, &|t| spl_valid[t] && gt_valid[t]) + image_term + lambda * oracle_tv(d, r, r, 3)
    };

    let value = sampler_loss(&map_from(&spl_data, &spl_valid, r), &map_from(&gt_data, &gt_valid, r), &rendered, &input, lambda)
        .unwrap();
    assert!((value.value - oracle(&spl_data)).abs() < 1e-12);
    // invalid texels hold zero, so perturb only valid ones
    let numeric = fd_gradient(&spl_data, 1e-6, |d| {
        let d: Vec<f64> = d.iter().enumerate().map(|(i, &v)| if spl_valid[i / 3] { v } else { 0.0 }).collect();
        oracle(&d)
    });
    let analytic: Vec<f64> = value.gradient().iter().enumerate().map(|(i, &v)| if spl_valid[i / 3] { v } else { 0.0 }).collect();
    assert!(max_rel_err(&analytic, &numeric) < 1e-4);
}

#[test]
fn adversarial_values_and_gradient() {
    let v = adversarial_loss(&[0.5], &[0.5], AdversarialMode::Minimax).unwrap().value;
    assert!((v - 2.0 * 0.5f64.ln()).abs() < 1e-12);
    let v = adversarial_loss(&[0.5], &[], AdversarialMode::Minimax).unwrap().value;
    assert!((v - 0.5f64.ln()).abs() < 1e-12);
    let eps = 1e-9;
    assert!(adversarial_loss(&[1.0 - eps], &[eps], AdversarialMode::Minimax).unwrap().value.abs() < 1e-8);

    let mut g = rng(5);
    let scores = uniform(&mut g, 7, 0.05, 0.95);
    for mode in [AdversarialMode::Minimax, AdversarialMode::GeneratorSaturating, AdversarialMode::GeneratorNonSaturating] {
        let f = |s: &[f64]| {
            let mean = |v: &[f64], g: &dyn Fn(f64) -> f64| v.iter().map(|&x| g(x)).sum::<f64>() / v.len() as f64;
            let (real, fake) = (&s[..3], &s[3..]);
            match mode {
                AdversarialMode::Minimax => mean(real, &|x| x.ln()) + mean(fake, &|x| (1.0 - x).ln()),
                AdversarialMode::GeneratorSaturating => mean(fake, &|x| (1.0 - x).ln()),
                AdversarialMode::GeneratorNonSaturating => -mean(fake, &|x| x.ln()),
            }
        };
        let analytic = adversarial_loss(&scores[..3], &scores[3..], mode).unwrap();
        assert!(max_rel_err(analytic.gradient(), &fd_gradient(&scores, 1e-6, f)) < 1e-4);
    }

    let grid: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    let over_fake: Vec<f64> = grid.iter().map(|&s| adversarial_loss(&[0.6], &[s], AdversarialMode::Minimax).unwrap().value).collect();
    assert!(over_fake.windows(2).all(|w| w[1] < w[0]));
    let over_real: Vec<f64> = grid.iter().map(|&s| adversarial_loss(&[s], &[0.3], AdversarialMode::Minimax).unwrap().value).collect();
    assert!(over_real.windows(2).all(|w| w[1] > w[0]));
}

#[test]
fn identity_loss_is_l1_on_features() {
    let mut g = rng(6);
    let a = uniform(&mut g, 64, -1.0, 1.0);
    let b = away_from(&mut g, &a, 1e-3);
    let id = identity_loss(&a, &b).unwrap();
    let l1 = l1_loss(&a, &b, None).unwrap();
    assert_eq!(id.value, l1.value);
    assert_eq!(id.gradient(), l1.gradient());
    let f = |x: &[f64]| x.iter().zip(&b).map(|(p, q)| (p - q).abs()).sum::<f64>() / 64.0;
    assert!(max_rel_err(id.gradient(), &fd_gradient(&a, 1e-6, f)) < 1e-4);
    assert!((identity_loss(&[1.0, 2.0], &[3.0, 0.0]).unwrap().value - 2.0).abs() < 1e-15);
}

#[test]
fn total_loss_is_the_weighted_sum() {
    let mut g = rng(7);
    for _ in 0..50 {
        let c = uniform(&mut g, 5, 0.0, 3.0);
        let w = uniform(&mut g, 4, 0.0, 2.0);
        let parts = LossComponents { rec: c[0], adv: c[1], sym: c[2], id: c[3], tv: c[4] };
        let weights = LossWeights { adv: w[0], sym: w[1], id: w[2], tv: w[3] };
        let expect = c[0] + w[0] * c[1] + w[1] * c[2] + w[2] * c[3] + w[3] * c[4];
        let value = total_loss(&parts, &weights);
        assert!((value.value - expect).abs() < 1e-12);
        let f = |x: &[f64]| x[0] + w[0] * x[1] + w[1] * x[2] + w[2] * x[3] + w[3] * x[4];
        assert!(max_rel_err(value.gradient(), &fd_gradient(&c, 1e-6, f)) < 1e-8);
    }
    let ones = LossComponents { rec: 1.0, adv: 1.0, sym: 1.0, id: 1.0, tv: 1.0 };
    assert_eq!(total_loss(&ones, &LossWeights::default()).value, 5.0);
    let zero = LossWeights { adv: 0.0, sym: 0.0, id: 0.0, tv: 0.0 };
    assert_eq!(total_loss(&ones, &zero).value, 1.0);
}

#[test]
fn ssim_of_constants_has_a_closed_form() {
    for (a, b) in [(0.2, 0.7), (0.0, 1.0), (0.5, 0.5), (0.9, 0.1)] {
        let x = Image::filled(16, 16, 3, a);
        let y = Image::filled(16, 16, 3, b);
        let expect = (2.0 * a * b + SSIM_C1) / (a * a + b * b + SSIM_C1);
        assert!((ssim(&x, &y).unwrap() - expect).abs() < 1e-12, "{a} {b}");
    }
}

#[test]
fn ssim_range_and_symmetry() {
    let mut g = rng(8);
    let a = Image::from_data(20, 17, 3, uniform(&mut g, 20 * 17 * 3, 0.0, 1.0)).unwrap();
    let inverse = Image::from_data(20, 17, 3, a.data().iter().map(|v| 1.0 - v).collect()).unwrap();
    let s = ssim(&a, &inverse).unwrap();
    assert!((-1.0..1.0).contains(&s));
    assert!((ssim(&a, &inverse).unwrap() - ssim(&inverse, &a).unwrap()).abs() < 1e-12);
    assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn cosine_cases() {
    let f = [0.3, -1.2, 2.0];
    assert!((cosine_similarity(&f, &f).unwrap() - 1.0).abs() < 1e-15);
    assert!((cosine_similarity(&f, &f.map(|v| -v)).unwrap() + 1.0).abs() < 1e-15);
    assert!(cosine_similarity(&[1.0, 0.0], &[0.0, 2.0]).unwrap().abs() < 1e-15);
}

#[test]
fn crops_full_map_mirror_and_nose_count() {
    let r = 32;
    let mut g = rng(9);
    let uv = UvMap::from_fn(r, 3, |_, _, _| Some(g.gen_range(0.0..1.0)));
    let full = crop_uv_patches(&uv, Rect::full(r), (Rect::full(r), Rect::full(r)), None).unwrap();
    assert_eq!(full.center.data(), uv.data());

    let symmetric = UvMap::from_fn(r, 3, |col, row, c| Some(((col.min(r - 1 - col) * 7 + row * 3 + c) % 11) as f64 / 10.0));
    let patches = crop_uv_patches(&symmetric, default_center_rect(r), default_side_rects(r), None).unwrap();
    assert_eq!(patches.left, patches.right);

    let nose: Vec<bool> = (0..r * r).map(|_| g.gen_bool(0.2)).collect();
    let center = default_center_rect(r);
    let masked = crop_uv_patches(&uv, center, default_side_rects(r), Some(&nose)).unwrap();
    let expected = (center.y..center.y + center.height)
        .flat_map(|y| (center.x..center.x + center.width).map(move |x| y * r + x))
        .filter(|&t| nose[t])
        .count();
    let zeroed = masked.center.mask().unwrap().iter().filter(|&&m| !m).count();
    assert_eq!(zeroed, expected);
    let zero_texels = masked.center.data().chunks(3).filter(|c| c.iter().all(|&v| v == 0.0)).count();
    assert_eq!(zero_texels, expected);
}
