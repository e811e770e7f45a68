//! Self-check suite: adjoint tests, finite-difference gradient checks and
//! brute-force oracles over seeded random inputs. A fault can be injected
//! into one component to confirm that its check catches it.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blend::{solve_poisson, RESIDUAL_BOUND};
use crate::error::{Error, Result};
use crate::imaging::{Image, Planar};
use crate::loss::{adversarial_loss, identity_loss, l1_loss, sampler_loss, symmetry_loss, tv_loss, AdversarialMode, LossValue, TvKind};
use crate::metrics::ssim;
use crate::model::{ProjectedVertices, Triangle};
use crate::raster::{rasterize, shade, shade_backward};
use crate::texture_fit::solve_masked_ridge;
use crate::uv::{erode_mask, grid_sample, grid_sample_backward, FaceMask, SamplingGrid, UvMap};

/// Component whose output is deliberately corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Fault {
    ShadeBackward,
    GridSample,
    TextureFit,
    Poisson,
    LossGradient,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "shade-backward" => Fault::ShadeBackward,
            "grid-sample" => Fault::GridSample,
            "texture-fit" => Fault::TextureFit,
            "poisson" => Fault::Poisson,
            "loss-gradient" => Fault::LossGradient,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown fault {other:?} (expected shade-backward, grid-sample, texture-fit, poisson or loss-gradient)"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<28} {:>12.3e} {:>10.1e}  {}",
            self.name,
            self.measured,
            self.tolerance,
            if self.passed { "pass" } else { "FAIL" }
        )
    }
}

fn result(name: &'static str, measured: f64, tolerance: f64) -> CheckResult {
    CheckResult {
        name,
        measured,
        tolerance,
        passed: measured.is_finite() && measured < tolerance,
    }
}

/// `‖a − b‖∞ / ‖b‖∞`, with an absolute floor on the denominator.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Central differences of a scalar function of a vector.
pub fn numeric_gradient(x: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Image {
    Image::from_fn(w, h, ch, |_, _, _| rng.gen_range(0.0..1.0))
}

/// Random triangles with random depths in a `size x size` frame.
pub fn random_mesh(rng: &mut ChaCha8Rng, triangles: usize, size: usize) -> (ProjectedVertices, Vec<Triangle>) {
    let s = size as f64;
    let n = triangles * 3;
    let points = (0..n).map(|_| [rng.gen_range(-0.1 * s..1.1 * s), rng.gen_range(-0.1 * s..1.1 * s)]).collect();
    let depth = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let tris = (0..triangles).map(|t| [3 * t, 3 * t + 1, 3 * t + 2]).collect();
    (ProjectedVertices::new(points, depth).expect("finite"), tris)
}

fn check_shade_adjoint(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<CheckResult> {
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let count = rng.gen_range(1..=60);
        let (projected, tris) = random_mesh(rng, count, 32);
        let buffers = rasterize(&projected, &tris, 32, 32)?;
        let colors: Vec<[f64; 3]> = (0..projected.len()).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let upstream = Image::from_fn(32, 32, 3, |_, _, _| rng.gen_range(-1.0..1.0));
        let forward = shade(&buffers, &colors, &tris)?;
        let mut back = shade_backward(&buffers, &tris, &upstream, projected.len())?;
        if fault == Some(Fault::ShadeBackward) {
            back[0][0] += 0.5;
        }
        let lhs = dot(forward.data(), upstream.data());
        let rhs: f64 = colors.iter().flatten().zip(back.iter().flatten()).map(|(c, g)| c * g).sum();
        worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));
    }
    Ok(result("shade adjoint", worst, 1e-9))
}

fn check_grid_sample(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut adjoint = 0.0f64;
    let mut image_fd = 0.0f64;
    let mut grid_fd = 0.0f64;
    for _ in 0..10 {
        let image = random_image(rng, 4, 4, 3);
        // keep coordinates away from the lattice lines where bilinear sampling has kinks
        let coords: Vec<[f64; 2]> = (0..9)
            .map(|_| {
                let mut coord = || loop {
                    let g: f64 = rng.gen_range(-0.98..0.98);
                    let u = (g + 1.0) * 1.5;
                    if (u - u.round()).abs() > 1e-3 {
                        break g;
                    }
                };
                [coord(), coord()]
            })
            .collect();
        let grid = SamplingGrid::new(3, coords.clone(), vec![true; 9])?;
        let upstream: Vec<f64> = (0..27).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut grads = grid_sample_backward(&image, &grid, &upstream)?;
        if fault == Some(Fault::GridSample) {
            grads.image[0] += 0.5;
            grads.grid[0][0] += 0.5;
        }
        let out = grid_sample(&image, &grid)?;
        let lhs = dot(out.data(), &upstream);
        let rhs = dot(image.data(), &grads.image);
        adjoint = adjoint.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1e-12));

        let loss_of_image = |data: &[f64]| {
            let img = Image::from_data(4, 4, 3, data.to_vec()).expect("finite");
            dot(grid_sample(&img, &grid).expect("shapes").data(), &upstream)
        };
        let numeric = numeric_gradient(image.data(), 1e-5, loss_of_image);
        image_fd = image_fd.max(relative_error(&grads.image, &numeric));

        let flat: Vec<f64> = coords.iter().flatten().copied().collect();
        let loss_of_grid = |g: &[f64]| {
            let coords = g.chunks_exact(2).map(|c| [c[0], c[1]]).collect();
            let grid = SamplingGrid::new(3, coords, vec![true; 9]).expect("shapes");
            dot(grid_sample(&image, &grid).expect("shapes").data(), &upstream)
        };
        let numeric = numeric_gradient(&flat, 1e-5, loss_of_grid);
        let analytic: Vec<f64> = grads.grid.iter().flatten().copied().collect();
        grid_fd = grid_fd.max(relative_error(&analytic, &numeric));
    }
    Ok(vec![
        result("grid_sample adjoint", adjoint, 1e-9),
        result("grid_sample image fd", image_fd, 1e-4),
        result("grid_sample grid fd", grid_fd, 1e-4),
    ])
}

fn check_texture_fit(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut optimality = 0.0f64;
    let mut recovery = 0.0f64;
    for _ in 0..20 {
        let rows = 3 * rng.gen_range(10..=100);
        let k = rng.gen_range(1..=20);
        let w = DMatrix::from_fn(rows, k, |_, _| rng.gen_range(-1.0..1.0));
        let mask: Vec<bool> = (0..rows).map(|_| rng.gen_bool(0.7)).collect();
        let m = DMatrix::from_diagonal(&DVector::from_iterator(rows, mask.iter().map(|&b| if b { 1.0 } else { 0.0 })));
        let target = DVector::from_fn(rows, |_, _| rng.gen_range(-1.0..1.0));
        let lambda = rng.gen_range(1e-3..1.0);
        let (mut p, _) = solve_masked_ridge(&w, &target, &mask, lambda)?;
        if fault == Some(Fault::TextureFit) {
            p[0] += 1e-3;
        }
        let gradient = w.transpose() * &m * (&w * &p - &target) + lambda * &p;
        let scale = (w.transpose() * &m * &target).norm().max(1e-300);
        optimality = optimality.max(gradient.norm() / scale);

        let planted = DVector::from_fn(k, |_, _| rng.gen_range(-1.0..1.0));
        let exact = &w * &planted;
        if mask.iter().filter(|&&b| b).count() >= 2 * k {
            let (mut q, _) = solve_masked_ridge(&w, &exact, &mask, 0.0)?;
            if fault == Some(Fault::TextureFit) {
                q[0] += 1e-3;
            }
            recovery = recovery.max((q - &planted).norm() / planted.norm());
        }
    }
    Ok(vec![
        result("texture fit optimality", optimality, 1e-8),
        result("texture fit recovery", recovery, 1e-8),
    ])
}

/// Largest violation of the blending equations by `values` over `region`.
pub fn poisson_equation_residual(target: &UvMap, source: &UvMap, region: &[bool], values: &[f64]) -> f64 {
    let r = target.resolution();
    let ch = target.channels();
    let mut worst = 0.0f64;
    for p in (0..r * r).filter(|&p| region[p]) {
        let (row, col) = (p / r, p % r);
        let neighbors = [
            (col > 0).then(|| p - 1),
            (col + 1 < r).then(|| p + 1),
            (row > 0).then(|| p - r),
            (row + 1 < r).then(|| p + r),
        ];
        for c in 0..ch {
            let mut lap = 0.0;
            let mut div = 0.0;
            for q in neighbors.into_iter().flatten() {
                if !(region[q] || target.valid()[q]) {
                    continue;
                }
                lap += values[p * ch + c] - values[q * ch + c];
                if source.valid()[p] && source.valid()[q] {
                    div += source.data()[p * ch + c] - source.data()[q * ch + c];
                }
            }
            worst = worst.max((lap - div).abs());
        }
    }
    worst
}

/// Random blob region strictly inside the frame.
pub fn random_region(rng: &mut ChaCha8Rng, r: usize) -> Vec<bool> {
    let blobs: Vec<(f64, f64, f64)> = (0..rng.gen_range(1..=4))
        .map(|_| {
            (
                rng.gen_range(0.25..0.75) * r as f64,
                rng.gen_range(0.25..0.75) * r as f64,
                rng.gen_range(0.05..0.25) * r as f64,
            )
        })
        .collect();
    (0..r * r)
        .map(|t| {
            let (y, x) = ((t / r) as f64 + 0.5, (t % r) as f64 + 0.5);
            let inside_frame = t / r > 0 && t / r + 1 < r && t % r > 0 && t % r + 1 < r;
            inside_frame && blobs.iter().any(|&(cx, cy, rad)| (x - cx).powi(2) + (y - cy).powi(2) <= rad * rad)
        })
        .collect()
}

fn smooth_map(rng: &mut ChaCha8Rng, r: usize) -> UvMap {
    let (a, b, c) = (rng.gen_range(1.0..4.0), rng.gen_range(1.0..4.0), rng.gen_range(0.0..6.0));
    UvMap::from_fn(r, 3, |col, row, k| {
        let (x, y) = (col as f64 / r as f64, row as f64 / r as f64);
        Some(0.5 + 0.3 * (a * x + c + k as f64).sin() * (b * y).cos())
    })
}

fn check_poisson(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let r = 32;
    let mut residual = 0.0f64;
    let mut unique = 0.0f64;
    let mut principle = 0.0f64;
    for _ in 0..4 {
        let region = random_region(rng, r);
        let target = UvMap::from_fn(r, 3, |_, _, _| Some(rng.gen_range(0.0..1.0)));
        let source = smooth_map(rng, r);
        let mut sol = solve_poisson(&target, &source, &region)?;
        if fault == Some(Fault::Poisson) {
            let t = region.iter().position(|&b| b).unwrap_or(0);
            sol.values[t * 3] += 1e-3;
        }
        residual = residual.max(poisson_equation_residual(&target, &source, &region, &sol.values));

        // guidance with the source's gradients but offset values, boundary
        // from the source itself: the solution must come back to the source
        let shifted = UvMap::from_fn(r, 3, |col, row, k| Some(source.get(col, row, k) + 0.25));
        let sol = solve_poisson(&source, &shifted, &region)?;
        let err = sol.values.iter().zip(source.data()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        unique = unique.max(err);

        // no guidance: harmonic, so bounded by the boundary values
        let sol = solve_poisson(&target, &UvMap::empty(r, 3), &region)?;
        for c in 0..3 {
            let (lo, hi) = (0..r * r)
                .filter(|&t| !region[t])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), t| {
                    let v = target.data()[t * 3 + c];
                    (lo.min(v), hi.max(v))
                });
            for t in (0..r * r).filter(|&t| region[t]) {
                let v = sol.values[t * 3 + c];
                principle = principle.max(lo - v).max(v - hi);
            }
        }
    }
    Ok(vec![
        result("poisson residual", residual, RESIDUAL_BOUND),
        result("poisson uniqueness", unique, 1e-6),
        result("poisson maximum principle", principle.max(0.0), 1e-9),
    ])
}

fn loss_fd(value: &LossValue, x: &[f64], f: impl FnMut(&[f64]) -> f64, fault: Option<Fault>) -> f64 {
    let mut analytic = value.gradient().to_vec();
    if fault == Some(Fault::LossGradient) {
        analytic[0] += 0.5;
    }
    relative_error(&analytic, &numeric_gradient(x, 1e-6, f))
}

/// Values bounded away from each other so L1 kinks are not straddled.
fn separated(rng: &mut ChaCha8Rng, other: &[f64]) -> Vec<f64> {
    other
        .iter()
        .map(|&o| loop {
            let v = rng.gen_range(0.0..1.0);
            if (v - o).abs() > 1e-3 {
                break v;
            }
        })
        .collect()
}

fn check_losses(rng: &mut ChaCha8Rng, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();

    let img = random_image(rng, 5, 5, 3);
    let tv = tv_loss(&img, TvKind::Squared)?;
    let err = loss_fd(&tv, img.data(), |d| tv_loss(&Image::from_data(5, 5, 3, d.to_vec()).expect("finite"), TvKind::Squared).expect("size").value, fault);
    out.push(result("tv gradient fd", err, 1e-4));

    let b: Vec<f64> = (0..75).map(|_| rng.gen_range(0.0..1.0)).collect();
    let a = separated(rng, &b);
    let l1 = l1_loss(&a, &b, None)?;
    let err = loss_fd(&l1, &a, |x| l1_loss(x, &b, None).expect("shapes").value, fault);
    out.push(result("l1 gradient fd", err, 1e-4));

    // pair texels with their mirrors far enough apart to avoid kinks
    let base = UvMap::from_fn(6, 3, |c, _, _| Some(if c < 3 { 0.2 } else { 0.8 }));
    let noisy: Vec<f64> = base.data().iter().map(|v| v + rng.gen_range(-0.1..0.1)).collect();
    let uv = UvMap::from_parts(6, 3, noisy.clone(), vec![true; 36])?;
    let sym = symmetry_loss(&uv)?;
    let err = loss_fd(&sym, &noisy, |d| symmetry_loss(&UvMap::from_parts(6, 3, d.to_vec(), vec![true; 36]).expect("shapes")).expect("mask").value, fault);
    out.push(result("symmetry gradient fd", err, 1e-4));

    let gt_data: Vec<f64> = (0..75).map(|_| rng.gen_range(0.0..1.0)).collect();
    let spl_data = separated(rng, &gt_data);
    let uv_gt = UvMap::from_parts(5, 3, gt_data, vec![true; 25])?;
    let rendered = random_image(rng, 6, 6, 3);
    let input = random_image(rng, 6, 6, 3);
    let lambda_tv = 0.3;
    let spl = UvMap::from_parts(5, 3, spl_data.clone(), vec![true; 25])?;
    let sampler = sampler_loss(&spl, &uv_gt, &rendered, &input, lambda_tv)?;
    let err = loss_fd(
        &sampler,
        &spl_data,
        |d| {
            let spl = UvMap::from_parts(5, 3, d.to_vec(), vec![true; 25]).expect("shapes");
            sampler_loss(&spl, &uv_gt, &rendered, &input, lambda_tv).expect("shapes").value
        },
        fault,
    );
    out.push(result("sampler gradient fd", err, 1e-4));

    let real: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..0.95)).collect();
    let fake: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..0.95)).collect();
    let mut worst = 0.0f64;
    for mode in [AdversarialMode::Minimax, AdversarialMode::GeneratorSaturating, AdversarialMode::GeneratorNonSaturating] {
        let adv = adversarial_loss(&real, &fake, mode)?;
        let scores: Vec<f64> = real.iter().chain(&fake).copied().collect();
        let err = loss_fd(&adv, &scores, |s| adversarial_loss(&s[..4], &s[4..], mode).expect("domain").value, fault);
        worst = worst.max(err);
    }
    out.push(result("adversarial gradient fd", worst, 1e-4));

    let fb: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fa = separated(rng, &fb);
    let id = identity_loss(&fa, &fb)?;
    let err = loss_fd(&id, &fa, |x| identity_loss(x, &fb).expect("shapes").value, fault);
    out.push(result("identity gradient fd", err, 1e-4));

    let a = random_image(rng, 16, 16, 3);
    let b = random_image(rng, 16, 16, 3);
    out.push(result("ssim identity", (ssim(&a, &a)? - 1.0).abs(), 1e-12));
    out.push(result("ssim symmetry", (ssim(&a, &b)? - ssim(&b, &a)?).abs(), 1e-12));
    Ok(out)
}

fn inside(p: [f64; 2], a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let edge = |u: [f64; 2], v: [f64; 2]| (v[0] - u[0]) * (p[1] - u[1]) - (v[1] - u[1]) * (p[0] - u[0]);
    let (e0, e1, e2) = (edge(a, b), edge(b, c), edge(c, a));
    (e0 >= 0.0 && e1 >= 0.0 && e2 >= 0.0) || (e0 <= 0.0 && e1 <= 0.0 && e2 <= 0.0)
}

fn check_raster_oracle(rng: &mut ChaCha8Rng) -> Result<CheckResult> {
    let mut mismatches = 0usize;
    for _ in 0..10 {
        let (projected, tris) = random_mesh(rng, 3, 16);
        let buffers = rasterize(&projected, &tris, 16, 16)?;
        for y in 0..16 {
            for x in 0..16 {
                let p = [x as f64 + 0.5, y as f64 + 0.5];
                let covered = tris.iter().any(|t| {
                    let [a, b, c] = t.map(|v| projected.points[v]);
                    let area = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
                    area != 0.0 && inside(p, a, b, c)
                });
                if covered != buffers.triangle_at(y * 16 + x).is_some() {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(result("raster coverage oracle", mismatches as f64, 0.5))
}

fn check_erosion_oracle(rng: &mut ChaCha8Rng) -> CheckResult {
    let (w, h) = (20, 17);
    let mut mismatches = 0usize;
    for radius in 0..4usize {
        let mask = FaceMask::new(w, h, (0..w * h).map(|_| rng.gen_bool(0.85)).collect());
        let eroded = erode_mask(&mask, radius);
        let r = radius as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut keep = true;
                for dy in -r..=r {
                    for dx in -r..=r {
                        if dx * dx + dy * dy > r * r {
                            continue;
                        }
                        let (xx, yy) = (x + dx, y + dy);
                        let on = xx >= 0 && yy >= 0 && xx < w as i64 && yy < h as i64 && mask.get(xx as usize, yy as usize);
                        keep &= on;
                    }
                }
                if keep != eroded.get(x as usize, y as usize) {
                    mismatches += 1;
                }
            }
        }
    }
    result("erosion oracle", mismatches as f64, 0.5)
}

/// Run every check. Deterministic for a given seed.
pub fn run_checks(seed: u64, fault: Option<Fault>) -> Result<Vec<CheckResult>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![check_shade_adjoint(&mut rng, fault)?];
    out.extend(check_grid_sample(&mut rng, fault)?);
    out.extend(check_texture_fit(&mut rng, fault)?);
    out.extend(check_poisson(&mut rng, fault)?);
    out.extend(check_losses(&mut rng, fault)?);
    out.push(check_raster_oracle(&mut rng)?);
    out.push(check_erosion_oracle(&mut rng));
    Ok(out)
}

/// Fixed-width table with a header line.
pub fn format_table(results: &[CheckResult]) -> String {
    let mut s = format!("{:<28} {:>12} {:>10}  {}\n", "check", "measured", "tolerance", "status");
    for r in results {
        s.push_str(&r.to_string());
        s.push('\n');
    }
    s
}
