//! Perturbed-viewpoint synthesis and reprojection into the reference camera.

use rayon::prelude::*;

use crate::error::MapError;
use crate::geometry::{
    backproject, perturb_pose, project, Intrinsics, PerturbationSpec, Pixel, Pose,
};
use crate::maps::{DepthMap, VarianceMap};
use crate::VARIANCE_FLOOR;

/// A depth map forward-warped into a perturbed camera.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticView {
    pub pose: Pose,
    pub depth: DepthMap,
    pub hole_fraction: f64,
}

/// Per-view depth and variance rendered at a known pose.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedView {
    pub pose: Pose,
    pub depth: DepthMap,
    pub variance: VarianceMap,
}

/// One reprojected observation of a reference pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Candidate {
    pub mu: f64,
    pub var: f64,
}

/// Candidates per reference pixel, row-major. A list may be empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateSet {
    width: usize,
    height: usize,
    lists: Vec<Vec<Candidate>>,
}

impl CandidateSet {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            lists: vec![Vec::new(); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.lists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lists.is_empty()
    }

    pub fn at(&self, idx: usize) -> &[Candidate] {
        &self.lists[idx]
    }

    pub fn get(&self, col: usize, row: usize) -> &[Candidate] {
        &self.lists[row * self.width + col]
    }

    /// Appends a candidate, flooring its variance.
    pub fn push(&mut self, idx: usize, mu: f64, var: f64) {
        self.lists[idx].push(Candidate {
            mu,
            var: var.max(VARIANCE_FLOOR),
        });
    }

    pub fn iter(&self) -> impl Iterator<Item = &[Candidate]> {
        self.lists.iter().map(Vec::as_slice)
    }

    /// Copy with every variance raised to at least `floor`.
    pub fn with_variance_floor(&self, floor: f64) -> Self {
        let mut out = self.clone();
        for c in out.lists.iter_mut().flatten() {
            c.var = c.var.max(floor);
        }
        out
    }

    /// Fraction of pixels with at least one candidate.
    pub fn coverage(&self) -> f64 {
        let covered = self.lists.iter().filter(|l| !l.is_empty()).count();
        covered as f64 / self.lists.len().max(1) as f64
    }
}

/// Z-buffer entry: depth in the target frame and the carried payload.
#[derive(Clone, Copy)]
struct Splat {
    depth: f64,
    payload: f64,
}

/// Splats every valid source pixel into the target camera at its nearest
/// integer pixel, keeping the nearest depth. Ties go to the earlier source
/// pixel in row-major order.
fn splat(
    depth: &DepthMap,
    payload: Option<&VarianceMap>,
    intr: &Intrinsics,
    src: &Pose,
    dst: &Pose,
) -> Vec<Option<Splat>> {
    let w = depth.width();
    let mut zbuf: Vec<Option<Splat>> = vec![None; intr.pixel_count()];
    for (idx, d) in depth.iter_valid() {
        let extra = match payload {
            Some(var) => match var.at(idx) {
                Some(v) => v,
                None => continue,
            },
            None => 0.0,
        };
        let px = Pixel::new((idx % w) as f64, (idx / w) as f64);
        let Ok(world) = backproject(intr, src, px, d) else {
            continue;
        };
        let Some((target, z)) = project(intr, dst, &world) else {
            continue;
        };
        let Some((col, row)) = target.nearest(intr.width, intr.height) else {
            continue;
        };
        let slot = &mut zbuf[row * intr.width + col];
        let replace = match slot {
            None => true,
            Some(s) => z < s.depth,
        };
        if replace {
            *slot = Some(Splat {
                depth: z,
                payload: extra,
            });
        }
    }
    zbuf
}

/// Fraction of pixels that are unfilled but enclosed by filled pixels along
/// their row or their column. Regions that leave the frustum touch the image
/// border and are not counted.
pub fn hole_fraction(map: &DepthMap) -> f64 {
    let (w, h) = (map.width(), map.height());
    if w == 0 || h == 0 {
        return 0.0;
    }
    let valid = map.mask();
    let mut enclosed = vec![false; w * h];
    for row in 0..h {
        let line = &valid[row * w..(row + 1) * w];
        if let (Some(first), Some(last)) =
            (line.iter().position(|&v| v), line.iter().rposition(|&v| v))
        {
            for col in first..last {
                if !line[col] {
                    enclosed[row * w + col] = true;
                }
            }
        }
    }
    for col in 0..w {
        let first = (0..h).find(|&r| valid[r * w + col]);
        let last = (0..h).rev().find(|&r| valid[r * w + col]);
        if let (Some(first), Some(last)) = (first, last) {
            for row in first..last {
                if !valid[row * w + col] {
                    enclosed[row * w + col] = true;
                }
            }
        }
    }
    enclosed.iter().filter(|&&e| e).count() as f64 / (w * h) as f64
}

/// Forward-warps a depth map from `src` into `dst` with a nearest-pixel
/// z-buffer. Unfilled target pixels are invalid.
pub fn warp_depth(depth: &DepthMap, intr: &Intrinsics, src: &Pose, dst: &Pose) -> DepthMap {
    let zbuf = splat(depth, None, intr, src, dst);
    let mut out = DepthMap::invalid(intr.width, intr.height);
    for (idx, s) in zbuf.iter().enumerate() {
        if let Some(s) = s {
            out.set_at(idx, s.depth);
        }
    }
    out
}

/// Warps `depth` into `n` perturbed viewpoints `perturb_pose(base, spec, i)`,
/// `i = 1..=n`.
pub fn synthesize_views(
    depth: &DepthMap,
    intr: &Intrinsics,
    base: &Pose,
    n: usize,
    spec: &PerturbationSpec,
) -> Result<Vec<SyntheticView>, MapError> {
    let poses: Vec<Pose> = (1..=n as u64)
        .map(|i| perturb_pose(base, spec, i))
        .collect();
    synthesize_views_at(depth, intr, base, &poses)
}

/// Warps `depth` into each of the given poses.
pub fn synthesize_views_at(
    depth: &DepthMap,
    intr: &Intrinsics,
    base: &Pose,
    poses: &[Pose],
) -> Result<Vec<SyntheticView>, MapError> {
    if depth.valid_count() == 0 {
        return Err(MapError::Empty);
    }
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(MapError::DimensionMismatch {
            want_w: intr.width,
            want_h: intr.height,
            got_w: depth.width(),
            got_h: depth.height(),
        });
    }
    Ok(poses
        .par_iter()
        .map(|pose| {
            let warped = warp_depth(depth, intr, base, pose);
            let hole_fraction = hole_fraction(&warped);
            SyntheticView {
                pose: *pose,
                depth: warped,
                hole_fraction,
            }
        })
        .collect())
}

/// Reprojects per-view depth and variance into the reference camera.
///
/// Within a view the nearest depth wins each reference pixel; candidates from
/// different views accumulate in view order. Depth is re-expressed as the
/// reference camera's `z`; variance is carried over unchanged.
pub fn reproject_to_reference(
    rendered: &[RenderedView],
    intr: &Intrinsics,
    reference: &Pose,
) -> Result<CandidateSet, MapError> {
    for view in rendered {
        for map in [&view.depth, &view.variance] {
            if map.width() != intr.width || map.height() != intr.height {
                return Err(MapError::DimensionMismatch {
                    want_w: intr.width,
                    want_h: intr.height,
                    got_w: map.width(),
                    got_h: map.height(),
                });
            }
        }
    }
    let buffers: Vec<Vec<Option<Splat>>> = rendered
        .par_iter()
        .map(|view| {
            splat(
                &view.depth,
                Some(&view.variance),
                intr,
                &view.pose,
                reference,
            )
        })
        .collect();
    let mut set = CandidateSet::new(intr.width, intr.height);
    for zbuf in &buffers {
        for (idx, s) in zbuf.iter().enumerate() {
            if let Some(s) = s {
                set.push(idx, s.depth, s.payload);
            }
        }
    }
    Ok(set)
}
