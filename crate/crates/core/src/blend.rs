//! Gradient-domain blending of UV maps.
//!
//! Inside a region Ω the blended map `f` solves the discrete Poisson equation
//! `Δf = div v` with `f = f*` on the boundary ring, where `f*` is the target
//! map and `v` the forward-difference gradient of the source map. With the
//! 5-point stencil, for each texel `p` in Ω:
//!
//! ```text
//! |N_p| f_p − Σ_{q ∈ N_p ∩ Ω} f_q = Σ_{q ∈ N_p \ Ω} f*_q + Σ_{q ∈ N_p} (s_p − s_q)
//! ```
//!
//! `N_p` holds the 4-neighbors that are in Ω or carry a valid target value.
//! Neighbors outside the grid or without a target value drop out of the
//! stencil (zero-flux). A connected piece of Ω with no valid boundary texel
//! has no unique solution.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::Planar;
use crate::uv::{erode_mask, FaceMask, UvMap};

/// Absolute stopping tolerance on `‖b − Af‖∞`.
pub const SOLVER_TOLERANCE: f64 = 1e-10;
/// Bound every accepted solve must meet.
pub const RESIDUAL_BOUND: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SolveStats {
    pub unknowns: usize,
    /// Largest iteration count over channels.
    pub iterations: usize,
    /// `‖Af − b‖∞` over all channels, before clamping.
    pub max_residual: f64,
}

impl SolveStats {
    fn merge(self, other: SolveStats) -> SolveStats {
        SolveStats {
            unknowns: self.unknowns + other.unknowns,
            iterations: self.iterations.max(other.iterations),
            max_residual: self.max_residual.max(other.max_residual),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Link {
    Unknown(usize),
    Fixed(usize),
    Open,
}

struct System {
    resolution: usize,
    /// Texel id of each unknown.
    texels: Vec<usize>,
    links: Vec<[Link; 4]>,
    /// Unknowns belonging to components without any fixed neighbor.
    unanchored: Vec<bool>,
}

impl System {
    fn build(target: &UvMap, region: &[bool]) -> System {
        let r = target.resolution();
        let mut index = vec![usize::MAX; r * r];
        let texels: Vec<usize> = (0..r * r).filter(|&t| region[t]).collect();
        for (u, &t) in texels.iter().enumerate() {
            index[t] = u;
        }
        let links: Vec<[Link; 4]> = texels
            .iter()
            .map(|&t| {
                let (row, col) = (t / r, t % r);
                let neighbors = [
                    (col > 0).then(|| t - 1),
                    (col + 1 < r).then(|| t + 1),
                    (row > 0).then(|| t - r),
                    (row + 1 < r).then(|| t + r),
                ];
                neighbors.map(|q| match q {
                    Some(q) if region[q] => Link::Unknown(index[q]),
                    Some(q) if target.valid()[q] => Link::Fixed(q),
                    _ => Link::Open,
                })
            })
            .collect();

        // flood-fill components and flag those without a Dirichlet value
        let n = texels.len();
        let mut component = vec![usize::MAX; n];
        let mut unanchored = vec![false; n];
        let mut stack = Vec::new();
        let mut members = Vec::new();
        for seed in 0..n {
            if component[seed] != usize::MAX {
                continue;
            }
            component[seed] = seed;
            stack.push(seed);
            members.clear();
            let mut anchored = false;
            while let Some(u) = stack.pop() {
                members.push(u);
                for link in links[u] {
                    match link {
                        Link::Unknown(q) if component[q] == usize::MAX => {
                            component[q] = seed;
                            stack.push(q);
                        }
                        Link::Fixed(_) => anchored = true,
                        _ => {}
                    }
                }
            }
            if !anchored {
                for &u in &members {
                    unanchored[u] = true;
                }
            }
        }
        System {
            resolution: r,
            texels,
            links,
            unanchored,
        }
    }

    fn diag(&self, u: usize) -> f64 {
        self.links[u].iter().filter(|l| !matches!(l, Link::Open)).count() as f64
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for (u, links) in self.links.iter().enumerate() {
            if self.unanchored[u] {
                out[u] = 0.0;
                continue;
            }
            let mut acc = self.diag(u) * x[u];
            for link in links {
                if let Link::Unknown(q) = *link {
                    acc -= x[q];
                }
            }
            out[u] = acc;
        }
    }

    fn rhs(&self, target: &UvMap, source: &UvMap, channel: usize) -> Vec<f64> {
        let ch = target.channels();
        let src = |t: usize| source.data()[t * ch + channel];
        let r = self.resolution;
        self.texels
            .iter()
            .zip(&self.links)
            .enumerate()
            .map(|(u, (&p, links))| {
                if self.unanchored[u] {
                    return 0.0;
                }
                let (row, col) = (p / r, p % r);
                let neighbor_texels = [
                    (col > 0).then(|| p - 1),
                    (col + 1 < r).then(|| p + 1),
                    (row > 0).then(|| p - r),
                    (row + 1 < r).then(|| p + r),
                ];
                let mut b = 0.0;
                for (link, q) in links.iter().zip(neighbor_texels) {
                    let Some(q) = q else { continue };
                    match *link {
                        Link::Open => continue,
                        Link::Fixed(q) => b += target.data()[q * ch + channel],
                        Link::Unknown(_) => {}
                    }
                    if source.valid()[p] && source.valid()[q] {
                        b += src(p) - src(q);
                    }
                }
                b
            })
            .collect()
    }

    /// Jacobi-preconditioned conjugate gradient from `x`.
    fn solve(&self, b: &[f64], x: &mut [f64]) -> Result<(usize, f64)> {
        let n = x.len();
        let max_iter = 10 * self.resolution * self.resolution;
        let inv_diag: Vec<f64> = (0..n)
            .map(|u| {
                let d = self.diag(u);
                if self.unanchored[u] || d == 0.0 {
                    0.0
                } else {
                    1.0 / d
                }
            })
            .collect();
        let mut ax = vec![0.0; n];
        self.apply(x, &mut ax);
        let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; n];
        let mut iterations = 0;
        while inf_norm(&r) >= SOLVER_TOLERANCE && iterations < max_iter {
            self.apply(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
            iterations += 1;
        }
        self.apply(x, &mut ax);
        let residual = b.iter().zip(&ax).map(|(b, a)| (b - a).abs()).fold(0.0, f64::max);
        if residual >= RESIDUAL_BOUND {
            return Err(Error::NotConverged(format!(
                "residual {residual:e} after {iterations} iterations on {n} unknowns"
            )));
        }
        Ok((iterations, residual))
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Unclamped Poisson solution over the full grid: target values outside Ω,
/// solved values inside.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Same layout as the target data.
    pub values: Vec<f64>,
    pub stats: SolveStats,
    /// Ω texels that had no valid boundary and were left unsolved.
    pub unanchored: Vec<usize>,
}

fn check_inputs(target: &UvMap, source: &UvMap, region: &[bool]) -> Result<()> {
    let r = target.resolution();
    if source.resolution() != r || source.channels() != target.channels() {
        return Err(Error::ShapeMismatch(format!(
            "source {}x{}x{} vs target {r}x{r}x{}",
            source.resolution(),
            source.resolution(),
            source.channels(),
            target.channels()
        )));
    }
    if region.len() != r * r {
        return Err(Error::ShapeMismatch(format!(
            "region has {} entries for a {r}x{r} map",
            region.len()
        )));
    }
    Ok(())
}

fn solve_region(target: &UvMap, source: &UvMap, region: &[bool], allow_unanchored: bool) -> Result<PoissonSolution> {
    check_inputs(target, source, region)?;
    let system = System::build(target, region);
    let unanchored: Vec<usize> = system
        .texels
        .iter()
        .zip(&system.unanchored)
        .filter(|(_, &u)| u)
        .map(|(&t, _)| t)
        .collect();
    if !allow_unanchored && !unanchored.is_empty() {
        let t = unanchored[0];
        let r = target.resolution();
        return Err(Error::MissingBoundary(format!(
            "region component containing texel (row {}, col {}) has no valid boundary value",
            t / r,
            t % r
        )));
    }

    let ch = target.channels();
    let mut values = target.data().to_vec();
    let mut stats = SolveStats {
        unknowns: system.texels.len(),
        ..SolveStats::default()
    };
    for c in 0..ch {
        let b = system.rhs(target, source, c);
        let mut x: Vec<f64> = system
            .texels
            .iter()
            .map(|&t| if source.valid()[t] { source.data()[t * ch + c] } else { target.data()[t * ch + c] })
            .collect();
        let (iterations, residual) = system.solve(&b, &mut x)?;
        stats.iterations = stats.iterations.max(iterations);
        stats.max_residual = stats.max_residual.max(residual);
        for ((&t, &value), &skip) in system.texels.iter().zip(&x).zip(&system.unanchored) {
            if !skip {
                values[t * ch + c] = value;
            }
        }
    }
    Ok(PoissonSolution {
        values,
        stats,
        unanchored,
    })
}

/// Solve the Dirichlet problem over `region` without clamping.
pub fn solve_poisson(target: &UvMap, source: &UvMap, region: &[bool]) -> Result<PoissonSolution> {
    solve_region(target, source, region, false)
}

/// Blend `source` into `target` over `region`; the result is clamped to
/// `[0, 1]` and valid on the region.
pub fn poisson_blend(target: &UvMap, source: &UvMap, region: &[bool]) -> Result<UvMap> {
    poisson_blend_with_stats(target, source, region).map(|(map, _)| map)
}

pub fn poisson_blend_with_stats(target: &UvMap, source: &UvMap, region: &[bool]) -> Result<(UvMap, SolveStats)> {
    check_inputs(target, source, region)?;
    if !region.iter().any(|&v| v) {
        return Ok((target.clone(), SolveStats::default()));
    }
    let solution = solve_poisson(target, source, region)?;
    Ok((assemble(target, &solution, region, None), solution.stats))
}

fn assemble(target: &UvMap, solution: &PoissonSolution, region: &[bool], fallback: Option<&UvMap>) -> UvMap {
    let ch = target.channels();
    let mut out = target.clone();
    for (t, _) in region.iter().enumerate().filter(|(_, &r)| r) {
        let values: Vec<f64> = solution.values[t * ch..(t + 1) * ch].iter().map(|v| v.clamp(0.0, 1.0)).collect();
        out.set_texel(t, &values);
    }
    if let Some(source) = fallback {
        for &t in &solution.unanchored {
            out.set_texel(t, source.texel(t));
        }
    }
    out
}

/// Fill invalid texels from their left-right mirror. Each invalid texel whose
/// mirror is valid is solved with the mirrored map as guidance and the current
/// map as boundary; pieces with no valid boundary copy the mirror directly.
pub fn symmetric_fill(uv: &UvMap) -> Result<UvMap> {
    symmetric_fill_with_stats(uv).map(|(map, _)| map)
}

pub fn symmetric_fill_with_stats(uv: &UvMap) -> Result<(UvMap, SolveStats)> {
    let mirror = uv.mirrored();
    let fill: Vec<bool> = uv.valid().iter().zip(mirror.valid()).map(|(&v, &m)| !v && m).collect();
    if !fill.iter().any(|&f| f) {
        return Ok((uv.clone(), SolveStats::default()));
    }
    let solution = solve_region(uv, &mirror, &fill, true)?;
    Ok((assemble(uv, &solution, &fill, Some(&mirror)), solution.stats))
}

/// Blend region for a sampled map: its validity eroded by one texel, without
/// texels that have no 4-neighbor left in the region.
pub fn blend_region(valid: &[bool], resolution: usize) -> Vec<bool> {
    let eroded = erode_mask(&FaceMask::new(resolution, resolution, valid.to_vec()), 1).data;
    let r = resolution;
    (0..r * r)
        .map(|t| {
            if !eroded[t] {
                return false;
            }
            let (row, col) = (t / r, t % r);
            (col > 0 && eroded[t - 1])
                || (col + 1 < r && eroded[t + 1])
                || (row > 0 && eroded[t - r])
                || (row + 1 < r && eroded[t + r])
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PseudoUv {
    pub uv: UvMap,
    pub blend: SolveStats,
    pub fill: SolveStats,
}

impl PseudoUv {
    pub fn max_residual(&self) -> f64 {
        self.blend.merge(self.fill).max_residual
    }
}

/// Pseudo ground truth: blend the sampled texture into the fitted model
/// texture, then fill remaining holes from the mirror side.
pub fn make_pseudo_uv(uv_gt: &UvMap, uv_bfm: &UvMap) -> Result<PseudoUv> {
    if uv_gt.resolution() != uv_bfm.resolution() || uv_gt.channels() != uv_bfm.channels() {
        return Err(Error::ShapeMismatch(format!(
            "uv_gt is {}x{}x{}, uv_bfm is {}x{}x{}",
            uv_gt.resolution(),
            uv_gt.resolution(),
            uv_gt.channels(),
            uv_bfm.resolution(),
            uv_bfm.resolution(),
            uv_bfm.channels()
        )));
    }
    let region = blend_region(uv_gt.valid(), uv_gt.resolution());
    let (blended, blend) = poisson_blend_with_stats(uv_bfm, uv_gt, &region)?;
    let (uv, fill) = symmetric_fill_with_stats(&blended)?;
    Ok(PseudoUv { uv, blend, fill })
}
