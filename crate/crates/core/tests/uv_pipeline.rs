mod common;

use common::{brute_force_coverage, fd_gradient, max_rel_err, rng, uniform};
use rand::Rng;
use uvtex::raster::visibility_from_projection;
use uvtex::synthetic::{face_scene, SceneSpec};
use uvtex::uv::{
    bilinear_rgb, build_face_mask, erode_mask, from_normalized, grid_from_projection, grid_sample, grid_sample_backward,
    render_uv, sample_vertex_colors, to_normalized, FaceMask,
};
use uvtex::{project, Image, Planar, ProjectedVertices, SamplingGrid, VisibilityMask};

/// Bilinear lookup written directly from the corner-aligned convention.
fn bilinear_oracle(image: &Image, g: [f64; 2], c: usize) -> f64 {
    let (w, h) = (image.width(), image.height());
    let x = ((g[0] + 1.0) / 2.0 * (w - 1) as f64).clamp(0.0, (w - 1) as f64);
    let y = ((g[1] + 1.0) / 2.0 * (h - 1) as f64).clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    image.get(x0, y0, c) * (1.0 - fx) * (1.0 - fy)
        + image.get(x1, y0, c) * fx * (1.0 - fy)
        + image.get(x0, y1, c) * (1.0 - fx) * fy
        + image.get(x1, y1, c) * fx * fy
}

#[test]
fn normalized_coordinates_put_the_ends_on_pixel_centers() {
    for w in [2usize, 7, 64] {
        assert!((to_normalized(0.5, w) + 1.0).abs() < 1e-15);
        assert!((to_normalized(w as f64 - 0.5, w) - 1.0).abs() < 1e-15);
        assert!(to_normalized(w as f64 / 2.0, w).abs() < 1e-15);
        assert_eq!(from_normalized(-1.0, w), 0.0);
        assert_eq!(from_normalized(1.0, w), (w - 1) as f64);
    }
}

#[test]
fn grid_sample_agrees_with_direct_bilinear_evaluation() {
    let mut r = rng(11);
    let image = Image::from_data(9, 6, 3, uniform(&mut r, 9 * 6 * 3, 0.0, 1.0)).unwrap();
    let coords: Vec<[f64; 2]> = (0..64).map(|_| [r.gen_range(-1.3..1.3), r.gen_range(-1.3..1.3)]).collect();
    let grid = SamplingGrid::new(8, coords.clone(), vec![true; 64]).unwrap();
    let out = grid_sample(&image, &grid).unwrap();
    for (t, g) in coords.iter().enumerate() {
        for c in 0..3 {
            assert!((out.data()[3 * t + c] - bilinear_oracle(&image, *g, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn hand_evaluated_bilinear_midpoint() {
    let image = Image::from_data(2, 2, 1, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    let grid = SamplingGrid::new(8, vec![[0.0, 0.0]; 64], vec![true; 64]).unwrap();
    assert!(grid_sample(&image, &grid).unwrap().data().iter().all(|&v| (v - 0.5).abs() < 1e-15));
    assert_eq!(bilinear_rgb(&image, [1.0, 1.0]), [0.5; 3]);
}

#[test]
fn grid_sample_gradients_match_finite_differences() {
    let mut r = rng(12);
    for _ in 0..20 {
        let image = Image::from_data(4, 4, 3, uniform(&mut r, 48, 0.0, 1.0)).unwrap();
        let coords: Vec<[f64; 2]> = (0..9)
            .map(|_| {
                let mut pick = || loop {
                    let g: f64 = r.gen_range(-0.97..0.97);
                    let lattice = (g + 1.0) * 1.5;
                    if (lattice - lattice.round()).abs() > 1e-3 {
                        break g;
                    }
                };
                [pick(), pick()]
            })
            .collect();
        let upstream = uniform(&mut r, 27, -1.0, 1.0);
        let grid = SamplingGrid::new(3, coords.clone(), vec![true; 9]).unwrap();
        let grads = grid_sample_backward(&image, &grid, &upstream).unwrap();
        let dot = |a: &[f64]| a.iter().zip(&upstream).map(|(x, y)| x * y).sum::<f64>();

        let by_image = fd_gradient(image.data(), 1e-5, |d| {
            dot(grid_sample(&Image::from_data(4, 4, 3, d.to_vec()).unwrap(), &grid).unwrap().data())
        });
        assert!(max_rel_err(&grads.image, &by_image) < 1e-4);

        let flat: Vec<f64> = coords.iter().flatten().copied().collect();
        let by_grid = fd_gradient(&flat, 1e-5, |g| {
            let grid = SamplingGrid::new(3, g.chunks(2).map(|c| [c[0], c[1]]).collect(), vec![true; 9]).unwrap();
            dot(grid_sample(&image, &grid).unwrap().data())
        });
        let analytic: Vec<f64> = grads.grid.iter().flatten().copied().collect();
        assert!(max_rel_err(&analytic, &by_grid) < 1e-4);
    }
}

#[test]
fn identity_grid_with_unit_upstream() {
    let mut r = rng(13);
    let image = Image::from_data(8, 8, 3, uniform(&mut r, 192, 0.0, 1.0)).unwrap();
    let grid = SamplingGrid::identity(8);
    let out = grid_sample(&image, &grid).unwrap();
    assert!(out.data().iter().zip(image.data()).all(|(a, b)| (a - b).abs() < 1e-12));
    let grads = grid_sample_backward(&image, &grid, &vec![1.0; 192]).unwrap();
    assert!(grads.image.iter().all(|&g| (g - 1.0).abs() < 1e-12));
    assert!(grads.grid.iter().flatten().all(|g| g.is_finite()));
}

#[test]
fn erosion_of_full_frame_leaves_the_inner_square() {
    let eroded = erode_mask(&FaceMask::filled(20, 20, true), 3);
    for y in 0..20 {
        for x in 0..20 {
            let inner = (3..17).contains(&x) && (3..17).contains(&y);
            assert_eq!(eroded.get(x, y), inner, "({x}, {y})");
        }
    }
}

#[test]
fn erosion_matches_a_brute_force_disk_min_filter() {
    let mut r = rng(14);
    for radius in 0..6usize {
        let (w, h) = (23, 19);
        let mask = FaceMask::new(w, h, (0..w * h).map(|_| r.gen_bool(0.9)).collect());
        let eroded = erode_mask(&mask, radius);
        let rr = radius as i64;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let mut keep = true;
                for dy in -rr..=rr {
                    for dx in -rr..=rr {
                        if dx * dx + dy * dy <= rr * rr {
                            let (u, v) = (x + dx, y + dy);
                            keep &= u >= 0 && v >= 0 && u < w as i64 && v < h as i64 && mask.get(u as usize, v as usize);
                        }
                    }
                }
                assert_eq!(eroded.get(x as usize, y as usize), keep);
            }
        }
    }
}

#[test]
fn face_mask_count_matches_brute_force_coverage() {
    let scene = face_scene(&SceneSpec::default()).unwrap();
    let p = &scene.params;
    let shape = scene.model.synthesize_shape(&p.alpha_id, &p.alpha_exp).unwrap();
    let projected = project(&shape, &p.pose);
    let (w, h) = (scene.image.width(), scene.image.height());
    let vis = visibility_from_projection(&projected, scene.model.triangles(), w, h).unwrap();
    let mask = build_face_mask(&projected, &vis, scene.model.triangles(), w, h).unwrap();
    let kept: Vec<[usize; 3]> = scene.model.triangles().iter().filter(|t| t.iter().all(|&v| vis.get(v))).copied().collect();
    let oracle = brute_force_coverage(&projected.points, &kept, w, h);
    assert_eq!(mask.count(), oracle.iter().filter(|&&b| b).count());
    assert_eq!(mask.data, oracle);
}

#[test]
fn vertex_color_sampling_hits_lattice_points() {
    let image = Image::from_fn(10, 10, 3, |x, y, c| (x + 10 * y + 100 * c) as f64 / 400.0);
    let projected = ProjectedVertices::planar(vec![[3.5, 7.5]]);
    let (colors, mask) =
        sample_vertex_colors(&image, &projected, &VisibilityMask::all(1), &FaceMask::filled(10, 10, true)).unwrap();
    assert!(mask.get(0));
    assert_eq!(colors[0], image.rgb(3, 7));
}

#[test]
fn uv_validity_matches_brute_force_coverage_of_sampled_triangles() {
    let mut r = rng(15);
    let n = 40;
    let uv: Vec<[f64; 2]> = (0..n).map(|_| [r.gen_range(0.0..1.0), r.gen_range(0.0..1.0)]).collect();
    let tris: Vec<[usize; 3]> = (0..25).map(|_| [r.gen_range(0..n), r.gen_range(0..n), r.gen_range(0..n)]).collect();
    let sampled = VisibilityMask((0..n).map(|_| r.gen_bool(0.8)).collect());
    let colors = vec![[0.25, 0.5, 0.75]; n];
    let map = render_uv(&colors, &sampled, &uv, &tris, 32).unwrap();
    let scaled: Vec<[f64; 2]> = uv.iter().map(|p| [p[0] * 32.0, p[1] * 32.0]).collect();
    let kept: Vec<[usize; 3]> = tris.iter().filter(|t| t.iter().all(|&v| sampled.get(v))).copied().collect();
    assert_eq!(map.valid(), &brute_force_coverage(&scaled, &kept, 32, 32)[..]);
    for t in 0..32 * 32 {
        let expect: &[f64] = if map.valid()[t] { &[0.25, 0.5, 0.75] } else { &[0.0; 3] };
        assert!(map.texel(t).iter().zip(expect).all(|(a, b)| (a - b).abs() < 1e-12));
    }
}

#[test]
fn analytic_grid_endpoints() {
    let projected = ProjectedVertices::planar(vec![[0.5, 0.5], [32.0, 24.0], [0.5, 47.5]]);
    let uv = vec![[0.1, 0.1], [0.9, 0.1], [0.1, 0.9]];
    let grid = grid_from_projection(&projected, &VisibilityMask::all(3), &uv, &[[0, 1, 2]], 64, 64, 48).unwrap();
    let texel = |u: f64, v: f64| ((v * 64.0 - 0.5).round() as usize) * 64 + (u * 64.0 - 0.5).round() as usize;
    let near = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).abs() < 0.05 && (a[1] - b[1]).abs() < 0.05;
    assert!(near(grid.coords()[texel(0.1, 0.1)], [-1.0, -1.0]));
    assert!(near(grid.coords()[texel(0.9, 0.1)], [0.0, 0.0]));
}
