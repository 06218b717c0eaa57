use serde::Serialize;

use crate::error::Result;
use crate::geometry::{forward_project, ProjectionMatrix, VolumeGeometry, VolumeGeometryF32};

/// Per-line `[start, stop)` x-ranges of the voxels a projection contributes to.
///
/// A voxel is admitted when the reference kernel would read at least one of
/// its four bilinear taps from the detector, i.e. when its truncated pixel
/// coordinates satisfy `-1 <= iix < width` and `-1 <= iiy < height`. Each range
/// is the hull of the admitted voxels of that line, so skipping everything
/// outside it never drops a nonzero contribution.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClipMask {
    edge: usize,
    ranges: Vec<(u32, u32)>,
}

impl ClipMask {
    /// Every line fully admitted.
    pub fn full(edge: usize) -> Self {
        ClipMask {
            edge,
            ranges: vec![(0, edge as u32); edge * edge],
        }
    }

    pub fn from_ranges(edge: usize, ranges: Vec<(u32, u32)>) -> Self {
        assert_eq!(ranges.len(), edge * edge);
        ClipMask { edge, ranges }
    }

    pub fn edge(&self) -> usize {
        self.edge
    }

    /// Range of line `z * edge + y`.
    #[inline]
    pub fn range(&self, line: usize) -> (usize, usize) {
        let (a, b) = self.ranges[line];
        (a as usize, b as usize)
    }

    pub fn ranges(&self) -> &[(u32, u32)] {
        &self.ranges
    }

    /// Voxels inside the ranges, i.e. the updates one pass performs.
    pub fn admitted_voxels(&self) -> u64 {
        self.ranges.iter().map(|&(a, b)| (b - a) as u64).sum()
    }
}

/// Whether the reference kernel reads any detector pixel for voxel `(x, y, z)`.
/// Uses exactly the reference arithmetic (single precision, division, truncation).
#[inline]
pub fn voxel_contributes(
    a: &[f32; 12],
    g: &VolumeGeometryF32,
    (x, y, z): (usize, usize, usize),
    width: usize,
    height: usize,
) -> bool {
    let (u, v, w) = forward_project(a, g.world(x), g.world(y), g.world(z));
    let ix = u / w;
    let iy = v / w;
    let (iix, iiy) = (ix as i32 as i64, iy as i32 as i64);
    iix >= -1 && iix < width as i64 && iiy >= -1 && iiy < height as i64
}

/// Half-line `alpha * t + beta > 0` intersected with `[lo, hi]`.
fn solve(alpha: f64, beta: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
    if alpha > 0.0 {
        (lo.max(-beta / alpha), hi)
    } else if alpha < 0.0 {
        (lo, hi.min(-beta / alpha))
    } else if beta > 0.0 {
        (lo, hi)
    } else {
        (1.0, 0.0)
    }
}

/// Bounds on the single-precision rounding error of projected pixel coordinates.
fn coordinate_slack(m: &ProjectionMatrix, g: &VolumeGeometry, min_w: f64) -> f64 {
    let reach = g.origin.abs() + (g.edge as f64) * g.voxel_size;
    let mut row_mag = [0.0; 3];
    for (row, mag) in row_mag.iter_mut().enumerate() {
        *mag = (0..3).map(|col| m.entry(row, col).abs() * reach).sum::<f64>() + m.entry(row, 3).abs();
    }
    let coord_mag = row_mag[0].max(row_mag[1]) / min_w;
    let eps = f32::EPSILON as f64;
    32.0 * eps * (row_mag[0].max(row_mag[1]) + coord_mag * row_mag[2]) / min_w + 32.0 * eps * coord_mag + 1e-6
}

/// Clip mask of one projection for a `width x height` detector.
///
/// Along a voxel line `u`, `v` and `w` are affine in `x` and `w > 0`, so each
/// pixel bound becomes a linear inequality in `x` and the admitted set is an
/// interval. The interval is solved in double precision with a slack that
/// covers single-precision rounding; only voxels inside that slack band are
/// classified with the exact per-voxel predicate.
pub fn compute_clip_mask(m: &ProjectionMatrix, g: &VolumeGeometry, width: usize, height: usize) -> Result<ClipMask> {
    m.check_positive_w(g)?;
    let min_w = m.min_w_over(g);
    let slack = coordinate_slack(m, g, min_w);
    let a32 = m.to_f32();
    let g32 = g.to_f32();
    let l = g.edge;
    let last = (l - 1) as f64;
    let (w_px, h_px) = (width as f64, height as f64);
    let col = |row: usize, c: usize| m.entry(row, c);

    let mut ranges = Vec::with_capacity(l * l);
    for z in 0..l {
        let wz = g.world_coord(z);
        for y in 0..l {
            let wy = g.world_coord(y);
            // row(t) = slope * t + intercept, t the voxel index along x.
            let line = |row: usize| {
                let slope = col(row, 0) * g.voxel_size;
                let intercept = col(row, 0) * g.origin + col(row, 1) * wy + col(row, 2) * wz + col(row, 3);
                (slope, intercept)
            };
            let (us, ui) = line(0);
            let (vs, vi) = line(1);
            let (ws, wi) = line(2);
            // -2 - d < u/w < width + d   and   -2 - d < v/w < height + d
            let interval = |d: f64| {
                let mut iv = (0.0, last);
                iv = solve(us + (2.0 + d) * ws, ui + (2.0 + d) * wi, iv);
                iv = solve((w_px + d) * ws - us, (w_px + d) * wi - ui, iv);
                iv = solve(vs + (2.0 + d) * ws, vi + (2.0 + d) * wi, iv);
                iv = solve((h_px + d) * ws - vs, (h_px + d) * wi - vi, iv);
                iv
            };
            let (outer_lo, outer_hi) = interval(slack);
            if outer_lo > outer_hi {
                ranges.push((0, 0));
                continue;
            }
            let lo = (outer_lo.floor().max(0.0)) as usize;
            let hi = (outer_hi.ceil().min(last)) as usize;
            let admits = |x: usize| voxel_contributes(&a32, &g32, (x, y, z), width, height);
            match (lo..=hi).find(|&x| admits(x)) {
                None => ranges.push((0, 0)),
                Some(start) => {
                    let stop = (start..=hi).rev().find(|&x| admits(x)).unwrap() + 1;
                    ranges.push((start as u32, stop as u32));
                }
            }
        }
    }
    Ok(ClipMask { edge: l, ranges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;

    fn orthographic(offset_u: f64, offset_v: f64) -> ProjectionMatrix {
        let mut c = [0.0; 12];
        c[0] = 1.0;
        c[4] = 1.0;
        c[9] = offset_u;
        c[10] = offset_v;
        c[11] = 1.0;
        ProjectionMatrix::new(c).unwrap()
    }

    #[test]
    fn all_inside() {
        let g = VolumeGeometry::new(8, 1.0, 0.0).unwrap();
        let mask = compute_clip_mask(&orthographic(1.0, 1.0), &g, 16, 16).unwrap();
        assert!(mask.ranges().iter().all(|&r| r == (0, 8)));
        assert_eq!(mask.admitted_voxels(), 512);
    }

    #[test]
    fn all_outside() {
        let g = VolumeGeometry::new(8, 1.0, 0.0).unwrap();
        let mask = compute_clip_mask(&orthographic(100.0, 0.0), &g, 16, 16).unwrap();
        assert!(mask.ranges().iter().all(|&(a, b)| a == b));
        assert_eq!(mask.admitted_voxels(), 0);
    }

    #[test]
    fn partial_overlap_counts_edge_taps() {
        // u = x - 3: voxels x = 1 (iix = -2) is out, x = 2 (iix = -1) reaches pixel 0.
        // Detector is 4 wide: x = 6 gives iix = 3 (inside), x = 7 gives 4 (out).
        let g = VolumeGeometry::new(8, 1.0, 0.0).unwrap();
        let mask = compute_clip_mask(&orthographic(-3.0, 0.0), &g, 4, 100).unwrap();
        assert_eq!(mask.range(0), (2, 7));
    }

    #[test]
    fn degenerate_matrix_rejected() {
        let g = VolumeGeometry::new(4, 1.0, -2.0).unwrap();
        let mut c = [0.0; 12];
        c[2] = 1.0;
        let m = ProjectionMatrix::new(c).unwrap();
        assert!(matches!(compute_clip_mask(&m, &g, 4, 4), Err(Error::Geometry(_))));
    }

    fn brute_force(m: &ProjectionMatrix, g: &VolumeGeometry, width: usize, height: usize) -> Vec<(u32, u32)> {
        let (a, g32, l) = (m.to_f32(), g.to_f32(), g.edge);
        let mut out = Vec::new();
        for z in 0..l {
            for y in 0..l {
                let hits: Vec<usize> = (0..l)
                    .filter(|&x| voxel_contributes(&a, &g32, (x, y, z), width, height))
                    .collect();
                out.push(match (hits.first(), hits.last()) {
                    (Some(&f), Some(&b)) => (f as u32, b as u32 + 1),
                    _ => (0, 0),
                });
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_circular_trajectories() {
        use crate::geometry::{make_circular_trajectory, TrajectoryConfig};
        let g = VolumeGeometry::centered(20, 1.3).unwrap();
        for (w, h, start) in [(24, 20, 0.0), (40, 9, 0.7), (13, 31, 2.1)] {
            let cfg = TrajectoryConfig {
                num_projections: 7,
                source_isocenter_distance: 90.0,
                source_detector_distance: 170.0,
                detector_width: w,
                detector_height: h,
                pixel_size: 1.1,
                start_angle: start,
                ..TrajectoryConfig::default()
            };
            for m in make_circular_trajectory(&cfg).unwrap() {
                let mask = compute_clip_mask(&m, &g, w, h).unwrap();
                assert_eq!(mask.ranges(), &brute_force(&m, &g, w, h)[..]);
            }
        }
    }
}
