use serde::{Deserialize, Serialize};

use super::clip::ClipMask;
use super::line::project_reciprocal;
use crate::dataset::{ProjectionImage, ProjectionStack};
use crate::error::{Error, Result};
use crate::geometry::forward_project;

/// Zero border added around every projection image, in pixels.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PadSpec {
    pub left: usize,
    pub right: usize,
    pub top: usize,
    pub bottom: usize,
}

impl PadSpec {
    pub fn uniform(pad: usize) -> Self {
        PadSpec {
            left: pad,
            right: pad,
            top: pad,
            bottom: pad,
        }
    }

    pub fn padded_size(&self, width: usize, height: usize) -> (usize, usize) {
        (width + self.left + self.right, height + self.top + self.bottom)
    }
}

/// Copies `img` into the middle of a zero-filled buffer enlarged by `pad`.
pub fn zero_pad(img: &ProjectionImage, pad: &PadSpec) -> ProjectionImage {
    debug_assert!(!img.is_padded());
    let (pw, ph) = pad.padded_size(img.width, img.height);
    let mut pixels = vec![0.0f32; pw * ph];
    for iy in 0..img.height {
        let src = &img.pixels[iy * img.width..(iy + 1) * img.width];
        let dst_start = (iy + pad.top) * pw + pad.left;
        pixels[dst_start..dst_start + img.width].copy_from_slice(src);
    }
    ProjectionImage {
        width: pw,
        height: ph,
        pixels,
        pad_origin: [-(pad.left as i64), -(pad.top as i64)],
    }
}

/// Extremes of the tap indices reached by one projection's admitted voxels.
#[derive(Clone, Copy, Debug)]
struct TapExtent {
    min_x: i64,
    max_x: i64,
    min_y: i64,
    max_y: i64,
}

impl TapExtent {
    fn empty() -> Self {
        TapExtent {
            min_x: i64::MAX,
            max_x: i64::MIN,
            min_y: i64::MAX,
            max_y: i64::MIN,
        }
    }

    fn add(&mut self, iix: i64, iiy: i64) {
        self.min_x = self.min_x.min(iix);
        self.max_x = self.max_x.max(iix + 1);
        self.min_y = self.min_y.min(iiy);
        self.max_y = self.max_y.max(iiy + 1);
    }
}

/// Smallest padding under which every admitted voxel's four taps, computed
/// with either the division or the reciprocal arithmetic, index inside the
/// padded raster. Right and bottom pads are at least 1 for the `+1` taps.
///
/// Projected coordinates are monotone along a voxel line (`w > 0`), so only
/// the voxels at both ends of each range are evaluated.
pub fn compute_pad_spec(stack: &ProjectionStack, masks: &[ClipMask]) -> Result<PadSpec> {
    if masks.len() != stack.len() {
        return Err(Error::invalid(
            "masks",
            format!("{} masks for {} projections", masks.len(), stack.len()),
        ));
    }
    let g = stack.geometry.to_f32();
    let l = g.edge;
    let (width, height) = (stack.width() as i64, stack.height() as i64);
    let mut ext = TapExtent::empty();
    for (m, mask) in stack.matrices.iter().zip(masks) {
        let a = m.to_f32();
        for line in 0..l * l {
            let (start, stop) = mask.range(line);
            if start == stop {
                continue;
            }
            let (z, y) = (line / l, line % l);
            let (wy, wz) = (g.world(y), g.world(z));
            for x in [
                start,
                (start + 1).min(stop - 1),
                stop.saturating_sub(2).max(start),
                stop - 1,
            ] {
                let (wx, (u, v, w)) = (g.world(x), forward_project(&a, g.world(x), wy, wz));
                ext.add((u / w) as i32 as i64, (v / w) as i32 as i64);
                let (ix, iy, _) = project_reciprocal(&a, wx, wy, wz);
                ext.add(ix as i32 as i64, iy as i32 as i64);
            }
        }
    }
    if ext.min_x > ext.max_x {
        return Ok(PadSpec {
            right: 1,
            bottom: 1,
            ..PadSpec::default()
        });
    }
    let pad = PadSpec {
        left: (-ext.min_x).max(0) as usize,
        right: (ext.max_x - (width - 1)).max(1) as usize,
        top: (-ext.min_y).max(0) as usize,
        bottom: (ext.max_y - (height - 1)).max(1) as usize,
    };
    let (pw, ph) = pad.padded_size(stack.width(), stack.height());
    if pw.checked_mul(ph).is_none_or(|n| n > 1 << 30) {
        return Err(Error::Geometry(format!(
            "padding {pad:?} needed to catch every ray is unreasonably large; enable clipping"
        )));
    }
    Ok(pad)
}
