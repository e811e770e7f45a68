mod common;

use common::{rng, uniform};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use uvtex::blend::{blend_region, make_pseudo_uv, poisson_blend, solve_poisson, symmetric_fill};
use uvtex::synthetic::{face_cap_model, CapSpec};
use uvtex::texture_fit::{fit_texture, solve_masked_ridge, texture_to_uv};
use uvtex::uv::render_uv;
use uvtex::{Planar, UvMap, VisibilityMask};

fn random_system(seed: u64, rows: usize, k: usize, keep: f64) -> (DMatrix<f64>, DVector<f64>, Vec<bool>) {
    let mut r = rng(seed);
    let w = DMatrix::from_vec(rows, k, uniform(&mut r, rows * k, -1.0, 1.0));
    let c = DVector::from_vec(uniform(&mut r, rows, -1.0, 1.0));
    let mask = (0..rows).map(|_| r.gen_bool(keep)).collect();
    (w, c, mask)
}

fn objective(w: &DMatrix<f64>, c: &DVector<f64>, mask: &[bool], lambda: f64, p: &DVector<f64>) -> f64 {
    let e = w * p - c;
    let data: f64 = e.iter().zip(mask).filter(|(_, &m)| m).map(|(v, _)| v * v).sum();
    data + lambda * p.norm_squared()
}

#[test]
fn ridge_solution_matches_an_augmented_least_squares_oracle() {
    for seed in 0..25 {
        let k = 1 + seed as usize % 12;
        let rows = 3 * (k + 5 + seed as usize);
        let (w, c, mask) = random_system(seed, rows, k, 0.6);
        let lambda = [0.0, 1e-3, 0.1, 2.0][seed as usize % 4];
        let Ok((p, residual)) = solve_masked_ridge(&w, &c, &mask, lambda) else {
            // a masked system with too few rows may be rejected when λ = 0
            assert!(lambda == 0.0);
            continue;
        };
        // stacked [M W; sqrt(λ) I] p ≈ [M c; 0], solved by SVD
        let mut a = DMatrix::zeros(rows + k, k);
        let mut b = DVector::zeros(rows + k);
        for i in (0..rows).filter(|&i| mask[i]) {
            a.row_mut(i).copy_from(&w.row(i));
            b[i] = c[i];
        }
        for j in 0..k {
            a[(rows + j, j)] = lambda.sqrt();
        }
        let oracle = a.svd(true, true).solve(&b, 1e-12).unwrap();
        assert!((&p - &oracle).norm() <= 1e-8 * oracle.norm().max(1.0), "seed {seed}");
        let data = objective(&w, &c, &mask, 0.0, &p);
        assert!((residual - data).abs() <= 1e-9 * data.max(1.0));
    }
}

#[test]
fn returned_parameters_are_a_local_minimum() {
    let (w, c, mask) = random_system(77, 30, 5, 0.7);
    let (p, _) = solve_masked_ridge(&w, &c, &mask, 0.1).unwrap();
    let best = objective(&w, &c, &mask, 0.1, &p);
    let mut r = rng(78);
    for _ in 0..1000 {
        let d = DVector::from_vec(uniform(&mut r, 5, -1.0, 1.0));
        let d = d.normalize() * 1e-3;
        assert!(best <= objective(&w, &c, &mask, 0.1, &(&p + d)));
    }
}

#[test]
fn parameter_norm_is_non_increasing_in_lambda() {
    let (w, c, mask) = random_system(79, 60, 8, 0.5);
    let norms: Vec<f64> = [0.0, 1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 5.0, 50.0, 1e3]
        .iter()
        .map(|&l| solve_masked_ridge(&w, &c, &mask, l).unwrap().0.norm())
        .collect();
    assert!(norms.windows(2).all(|p| p[1] <= p[0] * (1.0 + 1e-12)), "{norms:?}");
}

#[test]
fn exact_texture_is_recovered_in_uv_space() {
    let model = face_cap_model(&CapSpec { level: 3, tex_dim: 12, ..CapSpec::default() }).unwrap();
    let mut r = rng(80);
    let planted = uniform(&mut r, model.tex_dim(), -0.2, 0.2);
    let flat = model.mean_texture() + model.tex_basis() * DVector::from_column_slice(&planted);
    assert!(flat.iter().all(|v| (0.0..=1.0).contains(v)), "planted texture must stay unclamped");
    let colors: Vec<[f64; 3]> = flat.as_slice().chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
    let mask = VisibilityMask((0..model.vertex_count()).map(|_| r.gen_bool(0.6)).collect());

    let fit = fit_texture(&model, &colors, &mask, Some(0.0), true).unwrap();
    let recovered = texture_to_uv(&model, &fit, 64, true).unwrap();
    let expected = render_uv(&colors, &VisibilityMask::all(model.vertex_count()), model.uv_coords(), model.triangles(), 64).unwrap();
    assert_eq!(recovered.valid(), expected.valid());
    let worst = recovered.data().iter().zip(expected.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6, "L-inf {worst}");
}

/// Region strictly inside the frame, built from random rectangles.
fn random_region(seed: u64, r: usize) -> Vec<bool> {
    let mut g = rng(seed);
    let rects: Vec<(usize, usize, usize, usize)> = (0..3)
        .map(|_| {
            let (x0, y0) = (g.gen_range(1..r / 2), g.gen_range(1..r / 2));
            (x0, y0, g.gen_range(x0 + 2..r - 1), g.gen_range(y0 + 2..r - 1))
        })
        .collect();
    (0..r * r)
        .map(|t| {
            let (y, x) = (t / r, t % r);
            rects.iter().any(|&(x0, y0, x1, y1)| (x0..x1).contains(&x) && (y0..y1).contains(&y))
        })
        .collect()
}

fn random_map(seed: u64, r: usize, valid_prob: f64) -> UvMap {
    let mut g = rng(seed);
    UvMap::from_fn(r, 3, |_, _, _| if g.gen_bool(valid_prob) { Some(g.gen_range(0.0..1.0)) } else { None })
}

/// Dense solve of the 5-point system with open (zero-flux) neighbors, where
/// guidance differences count only between texels valid in the source.
fn dense_poisson(target: &UvMap, source: &UvMap, region: &[bool], channel: usize) -> Vec<f64> {
    let r = target.resolution();
    let unknowns: Vec<usize> = (0..r * r).filter(|&t| region[t]).collect();
    let index = |t: usize| unknowns.iter().position(|&u| u == t);
    let n = unknowns.len();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, &p) in unknowns.iter().enumerate() {
        let (row, col) = ((p / r) as i64, (p % r) as i64);
        for (dr, dc) in [(0, -1), (0, 1), (-1, 0), (1, 0)] {
            let (nr, nc) = (row + dr, col + dc);
            if nr < 0 || nc < 0 || nr >= r as i64 || nc >= r as i64 {
                continue;
            }
            let q = (nr as usize) * r + nc as usize;
            if region[q] {
                a[(i, index(q).unwrap())] -= 1.0;
            } else if target.valid()[q] {
                b[i] += target.get(q % r, q / r, channel);
            } else {
                continue;
            }
            a[(i, i)] += 1.0;
            if source.valid()[p] && source.valid()[q] {
                b[i] += source.get(p % r, p / r, channel) - source.get(q % r, q / r, channel);
            }
        }
    }
    let f = a.lu().solve(&b).expect("anchored system is nonsingular");
    let mut out = target.data().iter().skip(channel).step_by(3).copied().collect::<Vec<_>>();
    for (i, &p) in unknowns.iter().enumerate() {
        out[p] = f[i];
    }
    out
}

#[test]
fn poisson_solution_matches_a_dense_direct_solve() {
    for seed in 0..8 {
        let r = 14;
        let region = random_region(seed, r);
        let mut target = random_map(100 + seed, r, 0.9);
        // every region texel must see a valid boundary somewhere; keep the ring valid
        for t in 0..r * r {
            let (y, x) = (t / r, t % r);
            if !region[t] && (x == 0 || y == 0 || x == r - 1 || y == r - 1) && !target.valid()[t] {
                target.set_texel(t, &[0.5; 3]);
            }
        }
        let source = random_map(200 + seed, r, 0.8);
        let solved = match solve_poisson(&target, &source, &region) {
            Ok(s) => s,
            Err(e) => panic!("seed {seed}: {e}"),
        };
        for c in 0..3 {
            let oracle = dense_poisson(&target, &source, &region, c);
            for t in (0..r * r).filter(|&t| region[t]) {
                assert!((solved.values[3 * t + c] - oracle[t]).abs() < 1e-8, "seed {seed} texel {t}");
            }
        }
    }
}

fn smooth(r: usize, phase: f64) -> UvMap {
    UvMap::from_fn(r, 3, |col, row, c| {
        let (x, y) = (col as f64 / r as f64, row as f64 / r as f64);
        Some(0.5 + 0.3 * (3.0 * x + phase + c as f64).sin() * (2.0 * y + phase).cos())
    })
}

#[test]
fn matching_boundary_and_source_gradients_reproduce_the_source() {
    let r = 64;
    let region = random_region(5, r);
    let source = smooth(r, 0.3);
    let target = UvMap::from_fn(r, 3, |col, row, c| (!region[row * r + col]).then(|| source.get(col, row, c)));
    let out = poisson_blend(&target, &source, &region).unwrap();
    let worst = out.data().iter().zip(source.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6);
}

#[test]
fn zero_guidance_obeys_the_maximum_principle() {
    let r = 32;
    let region = random_region(6, r);
    let mut g = rng(7);
    let target = UvMap::from_fn(r, 3, |_, _, _| Some(g.gen_range(0.2..0.7)));
    let source = UvMap::filled(r, 3, 0.9);
    let out = poisson_blend(&target, &source, &region).unwrap();
    for c in 0..3 {
        let boundary: Vec<f64> = (0..r * r)
            .filter(|&t| !region[t])
            .filter(|&t| {
                let (y, x) = (t / r, t % r);
                [(x > 0).then(|| t - 1), (x + 1 < r).then(|| t + 1), (y > 0).then(|| t - r), (y + 1 < r).then(|| t + r)]
                    .into_iter()
                    .flatten()
                    .any(|q| region[q])
            })
            .map(|t| target.data()[3 * t + c])
            .collect();
        let (lo, hi) = boundary.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        for t in (0..r * r).filter(|&t| region[t]) {
            let v = out.data()[3 * t + c];
            assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }
}

#[test]
fn blending_its_own_result_is_idempotent() {
    let r = 32;
    let region = random_region(8, r);
    let once = poisson_blend(&smooth(r, 1.0), &smooth(r, 2.5), &region).unwrap();
    let twice = poisson_blend(&once, &once, &region).unwrap();
    let worst = once.data().iter().zip(twice.data()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-6);
}

#[test]
fn symmetric_fill_of_a_horizontal_gradient_is_mirror_symmetric() {
    let r = 16;
    let uv = UvMap::from_fn(r, 3, |col, _, c| (col < r / 2).then(|| (col as f64 + c as f64) / 20.0));
    let filled = symmetric_fill(&uv).unwrap();
    assert!(filled.valid().iter().all(|&v| v));
    let mirror = filled.mirrored();
    let (mut sum, mut count) = (0.0, 0);
    for t in (0..r * r).filter(|&t| !uv.valid()[t]) {
        for c in 0..3 {
            sum += (filled.texel(t)[c] - mirror.texel(t)[c]).abs();
            count += 1;
        }
    }
    assert!(sum / count as f64 <= 1e-4);
    for t in (0..r * r).filter(|&t| uv.valid()[t]) {
        assert_eq!(filled.texel(t), uv.texel(t));
    }
}

#[test]
fn fully_valid_sample_dominates_the_interior() {
    let r = 48;
    let gt = smooth(r, 0.7);
    let mut g = rng(9);
    // the model texture agrees with the sample near the border and is noise inside
    let bfm = UvMap::from_fn(r, 3, |col, row, c| {
        let inner = (6..r - 6).contains(&col) && (6..r - 6).contains(&row);
        Some(if inner { g.gen_range(0.0..1.0) } else { gt.get(col, row, c) })
    });
    let out = make_pseudo_uv(&gt, &bfm).unwrap().uv;
    let region = blend_region(gt.valid(), r);
    let (mut sum, mut count) = (0.0, 0);
    for t in (0..r * r).filter(|&t| region[t]) {
        for c in 0..3 {
            sum += (out.texel(t)[c] - gt.texel(t)[c]).abs();
            count += 1;
        }
    }
    assert!(sum / (count as f64) < 1e-3);
}

#[test]
fn empty_sample_leaves_the_model_texture() {
    let bfm = smooth(24, 0.1);
    let out = make_pseudo_uv(&UvMap::empty(24, 3), &bfm).unwrap().uv;
    assert_eq!(out, bfm);
}

fn max_interior_difference(map: &UvMap, inside: &[bool]) -> f64 {
    let r = map.resolution();
    let mut worst = 0.0f64;
    for t in 0..r * r {
        for q in [(t % r + 1 < r).then(|| t + 1), (t / r + 1 < r).then(|| t + r)].into_iter().flatten() {
            if inside[t] && inside[q] {
                for c in 0..3 {
                    worst = worst.max((map.texel(t)[c] - map.texel(q)[c]).abs());
                }
            }
        }
    }
    worst
}

#[test]
fn seam_differences_are_bounded_by_the_inputs() {
    let r = 64;
    let sample = smooth(r, 2.0);
    let gt = UvMap::from_fn(r, 3, |col, row, c| {
        let (x, y) = (col as f64 - 30.0, row as f64 - 34.0);
        (x * x + y * y <= 18.0 * 18.0).then(|| sample.get(col, row, c))
    });
    let bfm = UvMap::from_fn(r, 3, |col, row, c| Some(0.3 + 0.004 * (col + 2 * row + 5 * c) as f64));
    let out = make_pseudo_uv(&gt, &bfm).unwrap().uv;
    let region = blend_region(gt.valid(), r);
    let mut seam = 0.0f64;
    for t in 0..r * r {
        for q in [(t % r + 1 < r).then(|| t + 1), (t / r + 1 < r).then(|| t + r)].into_iter().flatten() {
            if region[t] != region[q] {
                for c in 0..3 {
                    seam = seam.max((out.texel(t)[c] - out.texel(q)[c]).abs());
                }
            }
        }
    }
    let bound = max_interior_difference(&bfm, bfm.valid()) + max_interior_difference(&gt, gt.valid());
    assert!(seam <= bound, "seam {seam} bound {bound}");
}
