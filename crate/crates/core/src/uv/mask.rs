use crate::error::Result;
use crate::model::{ProjectedVertices, Triangle};
use crate::raster::{rasterize, VisibilityMask};

/// Binary face region over the input image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FaceMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl FaceMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Self {
        assert_eq!(data.len(), width * height, "face mask size");
        FaceMask { width, height, data }
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        FaceMask::new(width, height, vec![value; width * height])
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }
}

/// Union of the coverage of triangles whose three vertices are visible.
pub fn build_face_mask(
    projected: &ProjectedVertices,
    visibility: &VisibilityMask,
    triangles: &[Triangle],
    width: usize,
    height: usize,
) -> Result<FaceMask> {
    let kept: Vec<Triangle> = triangles
        .iter()
        .filter(|tri| tri.iter().all(|&v| visibility.get(v)))
        .copied()
        .collect();
    let buffers = rasterize(projected, &kept, width, height)?;
    Ok(FaceMask::new(width, height, buffers.coverage()))
}

/// Erosion by a disk of the given radius; pixels outside the frame count as
/// background.
///
/// The disk is split into one horizontal run per row offset, and each run is
/// tested in constant time against per-row prefix counts of background pixels.
pub fn erode_mask(mask: &FaceMask, radius: usize) -> FaceMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width, mask.height);
    let r = radius as i64;
    // prefix[y][x] = number of false pixels in row y before column x
    let prefix: Vec<Vec<u32>> = (0..h)
        .map(|y| {
            let mut row = Vec::with_capacity(w + 1);
            row.push(0u32);
            for x in 0..w {
                row.push(row[x] + u32::from(!mask.data[y * w + x]));
            }
            row
        })
        .collect();
    let runs: Vec<(i64, i64)> = (-r..=r)
        .map(|dy| {
            let half = ((r * r - dy * dy) as f64).sqrt().floor() as i64;
            (dy, half)
        })
        .collect();

    let mut out = vec![false; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            if !mask.data[(y * w as i64 + x) as usize] {
                continue;
            }
            out[(y * w as i64 + x) as usize] = runs.iter().all(|&(dy, half)| {
                let yy = y + dy;
                let (x0, x1) = (x - half, x + half);
                if yy < 0 || yy >= h as i64 || x0 < 0 || x1 >= w as i64 {
                    return false;
                }
                let row = &prefix[yy as usize];
                row[x1 as usize + 1] == row[x0 as usize]
            });
        }
    }
    FaceMask::new(w, h, out)
}
