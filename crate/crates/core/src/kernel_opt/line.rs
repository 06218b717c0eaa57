// Line update kernels: one voxel line (z, y), x in [start, stop).
//
// Voxels are processed in groups of W lanes, stage by stage (projection,
// tap addressing, gather + interpolation), with a scalar peel loop for the
// remainder. Each lane performs exactly the operations of the peel loop, so
// results are bit-identical for every W.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::gather::{count_cacheline_splits, GatherStats};
use crate::dataset::ProjectionImage;
use crate::error::{Error, Result};
use crate::geometry::{forward_project, ProjectionMatrix, VolumeGeometry, VolumeGeometryF32};

/// Vector width of the line kernel.
///
/// `Scalar` processes one voxel at a time. All widths use the reference
/// arithmetic (`u / w`, `val / (w * w)`) unless a [`Reciprocal`] mode is set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Lanes {
    Scalar,
    W4,
    W8,
    W16,
}

impl Lanes {
    pub const WIDE: [Lanes; 3] = [Lanes::W4, Lanes::W8, Lanes::W16];

    pub fn width(self) -> usize {
        match self {
            Lanes::Scalar => 1,
            Lanes::W4 => 4,
            Lanes::W8 => 8,
            Lanes::W16 => 16,
        }
    }

    pub fn from_width(width: usize) -> Result<Self> {
        match width {
            1 => Ok(Lanes::Scalar),
            4 => Ok(Lanes::W4),
            8 => Ok(Lanes::W8),
            16 => Ok(Lanes::W16),
            other => Err(Error::invalid(
                "lanes",
                format!("supported widths are 1, 4, 8, 16; got {other}"),
            )),
        }
    }
}

impl fmt::Display for Lanes {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.width())
    }
}

impl FromStr for Lanes {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let w = s
            .parse::<usize>()
            .map_err(|_| Error::invalid("lanes", format!("not a number: {s:?}")))?;
        Lanes::from_width(w)
    }
}

/// Pixel coordinates and inverse depth of one voxel, reciprocal variant.
#[inline(always)]
pub(crate) fn project_reciprocal(a: &[f32; 12], wx: f32, wy: f32, wz: f32) -> (f32, f32, f32) {
    let (u, v, w) = forward_project(a, wx, wy, wz);
    let r = 1.0 / w;
    (u * r, v * r, r)
}

/// Per-projection constants shared by every line.
#[derive(Clone, Copy, Debug)]
pub struct LineContext<'a> {
    pub(crate) a: [f32; 12],
    pub(crate) g: VolumeGeometryF32,
    pub(crate) img: &'a ProjectionImage,
    /// Image is padded far enough that no tap needs a bounds check.
    pub(crate) padded: bool,
    pub(crate) reciprocal: Reciprocal,
}

impl<'a> LineContext<'a> {
    /// With `padded == false` every tap is bounds-checked as in the reference.
    pub fn new(matrix: &ProjectionMatrix, geometry: &VolumeGeometry, img: &'a ProjectionImage, padded: bool) -> Self {
        LineContext {
            a: matrix.to_f32(),
            g: geometry.to_f32(),
            img,
            padded,
            reciprocal: Reciprocal::Off,
        }
    }

    /// Division substitution used by the wide kernels; `Scalar` always divides.
    pub fn with_reciprocal(mut self, mode: Reciprocal) -> Self {
        self.reciprocal = mode;
        self
    }
}

/// Replacing the divisions of the line kernel with multiplications by `r = 1 / w`.
///
/// Both substitutions change rounding. `Weight` perturbs each contribution by
/// a few ulp, which stays small unless contributions of opposite sign cancel.
/// `Full` also moves pixel coordinates by an ulp, and a bilinear weight near
/// zero (rays grazing the detector edge) turns that into a large relative
/// change of the contribution. Neither keeps every voxel within 1e-5 relative
/// of the reference, so the default is `Off`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reciprocal {
    /// `u / w`, `v / w` and `val / (w * w)`, bit-identical to the reference.
    #[default]
    Off,
    /// `u / w`, `v / w` and `val * (r * r)`.
    Weight,
    /// `u * r`, `v * r` and `val * (r * r)`.
    Full,
}

impl Reciprocal {
    pub const ALL: [Reciprocal; 3] = [Reciprocal::Off, Reciprocal::Weight, Reciprocal::Full];
}

impl fmt::Display for Reciprocal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Reciprocal::Off => "off",
            Reciprocal::Weight => "weight",
            Reciprocal::Full => "full",
        })
    }
}

impl FromStr for Reciprocal {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(Reciprocal::Off),
            "weight" => Ok(Reciprocal::Weight),
            "full" => Ok(Reciprocal::Full),
            _ => Err(Error::invalid(
                "reciprocal",
                format!("expected off, weight or full; got {s:?}"),
            )),
        }
    }
}

const DIVIDE: u8 = 0;
const RECIP_WEIGHT: u8 = 1;
const RECIP_FULL: u8 = 2;

/// Updates voxels `[x_start, x_stop)` of line `(z, y)`; `line` is that voxel line.
///
/// With a padded context the image must be large enough for every tap of the
/// range (see `compute_pad_spec`); an undersized pad panics on the bounds check
/// instead of reading out of the buffer.
pub fn backproject_line_w(
    line: &mut [f32],
    ctx: &LineContext<'_>,
    z: usize,
    y: usize,
    x_start: usize,
    x_stop: usize,
    lanes: Lanes,
) {
    backproject_line(line, ctx, z, y, (x_start, x_stop), lanes, None)
}

pub(crate) fn backproject_line(
    line: &mut [f32],
    ctx: &LineContext<'_>,
    z: usize,
    y: usize,
    (start, stop): (usize, usize),
    lanes: Lanes,
    stats: Option<&mut GatherStats>,
) {
    debug_assert!(start <= stop && stop <= line.len());
    let wy = ctx.g.world(y);
    let wz = ctx.g.world(z);
    match lanes {
        Lanes::Scalar => by_mode::<1>(line, ctx, wy, wz, start, stop, stats, Reciprocal::Off),
        Lanes::W4 => by_mode::<4>(line, ctx, wy, wz, start, stop, stats, ctx.reciprocal),
        Lanes::W8 => by_mode::<8>(line, ctx, wy, wz, start, stop, stats, ctx.reciprocal),
        Lanes::W16 => by_mode::<16>(line, ctx, wy, wz, start, stop, stats, ctx.reciprocal),
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn by_mode<const W: usize>(
    line: &mut [f32],
    ctx: &LineContext<'_>,
    wy: f32,
    wz: f32,
    start: usize,
    stop: usize,
    stats: Option<&mut GatherStats>,
    mode: Reciprocal,
) {
    match mode {
        Reciprocal::Off => by_padding::<W, DIVIDE>(line, ctx, wy, wz, start, stop, stats),
        Reciprocal::Weight => by_padding::<W, RECIP_WEIGHT>(line, ctx, wy, wz, start, stop, stats),
        Reciprocal::Full => by_padding::<W, RECIP_FULL>(line, ctx, wy, wz, start, stop, stats),
    }
}

#[inline(always)]
fn by_padding<const W: usize, const MODE: u8>(
    line: &mut [f32],
    ctx: &LineContext<'_>,
    wy: f32,
    wz: f32,
    start: usize,
    stop: usize,
    stats: Option<&mut GatherStats>,
) {
    if ctx.padded {
        run::<W, MODE, true>(line, ctx, wy, wz, start, stop, stats)
    } else {
        run::<W, MODE, false>(line, ctx, wy, wz, start, stop, stats)
    }
}

#[inline(always)]
fn run<const W: usize, const MODE: u8, const PADDED: bool>(
    line: &mut [f32],
    ctx: &LineContext<'_>,
    wy: f32,
    wz: f32,
    start: usize,
    stop: usize,
    mut stats: Option<&mut GatherStats>,
) {
    let mut x = start;
    while x + W <= stop {
        group::<W, MODE, PADDED>(&mut line[x..x + W], ctx, x, wy, wz, stats.as_deref_mut());
        x += W;
    }
    // Scalar peel; a partial group does not count as a gather group.
    while x < stop {
        group::<1, MODE, PADDED>(&mut line[x..x + 1], ctx, x, wy, wz, None);
        x += 1;
    }
}

#[inline(always)]
fn group<const W: usize, const MODE: u8, const PADDED: bool>(
    out: &mut [f32],
    ctx: &LineContext<'_>,
    x0: usize,
    wy: f32,
    wz: f32,
    stats: Option<&mut GatherStats>,
) {
    let a = &ctx.a;
    let img = ctx.img;

    // Projection and dehomogenization.
    let mut ix = [0.0f32; W];
    let mut iy = [0.0f32; W];
    let mut weight = [0.0f32; W];
    for l in 0..W {
        let wx = ctx.g.world(x0 + l);
        match MODE {
            RECIP_FULL => {
                let (px, py, r) = project_reciprocal(a, wx, wy, wz);
                ix[l] = px;
                iy[l] = py;
                weight[l] = r * r;
            }
            RECIP_WEIGHT => {
                let (u, v, w) = forward_project(a, wx, wy, wz);
                let r = 1.0 / w;
                ix[l] = u / w;
                iy[l] = v / w;
                weight[l] = r * r;
            }
            _ => {
                let (u, v, w) = forward_project(a, wx, wy, wz);
                ix[l] = u / w;
                iy[l] = v / w;
                weight[l] = w * w;
            }
        }
    }

    // Truncation toward zero and interpolation weights.
    let mut iix = [0i64; W];
    let mut iiy = [0i64; W];
    let mut sx = [0.0f32; W];
    let mut sy = [0.0f32; W];
    for l in 0..W {
        let tx = ix[l] as i32;
        let ty = iy[l] as i32;
        sx[l] = ix[l] - tx as f32;
        sy[l] = iy[l] - ty as f32;
        iix[l] = tx as i64 - img.pad_origin[0];
        iiy[l] = ty as i64 - img.pad_origin[1];
    }

    // Gather the four taps.
    let stride = img.width as i64;
    let mut bl = [0.0f32; W];
    let mut br = [0.0f32; W];
    let mut tl = [0.0f32; W];
    let mut tr = [0.0f32; W];
    if PADDED {
        let mut base = [0usize; W];
        for l in 0..W {
            base[l] = (iiy[l] * stride + iix[l]) as usize;
        }
        let s = img.width;
        for l in 0..W {
            bl[l] = img.pixels[base[l]];
            br[l] = img.pixels[base[l] + 1];
            tl[l] = img.pixels[base[l] + s];
            tr[l] = img.pixels[base[l] + s + 1];
        }
        if let Some(stats) = stats {
            record_gathers(stats, &base, s);
        }
    } else {
        let (w, h) = (img.width as i64, img.height as i64);
        let tap = |px: i64, py: i64| {
            if py >= 0 && py < h && px >= 0 && px < w {
                img.pixels[(py * stride + px) as usize]
            } else {
                0.0
            }
        };
        for l in 0..W {
            bl[l] = tap(iix[l], iiy[l]);
            br[l] = tap(iix[l] + 1, iiy[l]);
            tl[l] = tap(iix[l], iiy[l] + 1);
            tr[l] = tap(iix[l] + 1, iiy[l] + 1);
        }
    }

    // Bilinear interpolation and distance weighting.
    for l in 0..W {
        let valb = (1.0 - sx[l]) * bl[l] + sx[l] * br[l];
        let valt = (1.0 - sx[l]) * tl[l] + sx[l] * tr[l];
        let val = (1.0 - sy[l]) * valb + sy[l] * valt;
        if MODE == DIVIDE {
            out[l] += val / weight[l];
        } else {
            out[l] += val * weight[l];
        }
    }
}

#[cold]
fn record_gathers<const W: usize>(stats: &mut GatherStats, base: &[usize; W], stride: usize) {
    let taps = [0, 1, stride, stride + 1];
    let mut offsets = [0u64; W];
    let mut trips = [0u64; 4];
    for (t, &tap) in taps.iter().enumerate() {
        for l in 0..W {
            offsets[l] = ((base[l] + tap) * std::mem::size_of::<f32>()) as u64;
        }
        trips[t] = count_cacheline_splits(&offsets, 64) as u64;
    }
    stats.record(W, trips);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_projection_image, Volume};
    use crate::geometry::{make_circular_trajectory, TrajectoryConfig};
    use crate::kernel_opt::pad::{zero_pad, PadSpec};
    use crate::kernel_ref::backproject_reference;

    fn setup() -> (VolumeGeometry, ProjectionMatrix, ProjectionImage) {
        let cfg = TrajectoryConfig {
            num_projections: 1,
            source_isocenter_distance: 200.0,
            source_detector_distance: 400.0,
            detector_width: 200,
            detector_height: 180,
            pixel_size: 1.0,
            start_angle: 0.7,
            ..TrajectoryConfig::default()
        };
        let g = VolumeGeometry::centered(64, 1.0).unwrap();
        let m = make_circular_trajectory(&cfg).unwrap()[0];
        let img = synth_projection_image(200, 180, &"gaussian:10,50,99.5,89.5".parse().unwrap()).unwrap();
        (g, m, img)
    }

    #[test]
    fn empty_range_is_noop() {
        let (g, m, img) = setup();
        let padded = zero_pad(&img, &PadSpec::uniform(2));
        let ctx = LineContext::new(&m, &g, &padded, true);
        let mut line = vec![1.5f32; 64];
        backproject_line_w(&mut line, &ctx, 3, 4, 10, 10, Lanes::W16);
        assert!(line.iter().all(|&v| v == 1.5));
    }

    #[test]
    fn interior_line_matches_reference() {
        let (g, m, img) = setup();
        let mut reference = Volume::zeros(g);
        backproject_reference(&mut reference, &img, &m).unwrap();
        let padded = zero_pad(&img, &PadSpec::uniform(2));
        for mode in Reciprocal::ALL {
            let ctx = LineContext::new(&m, &g, &padded, true).with_reciprocal(mode);
            for (z, y) in [(32, 32), (10, 50), (63, 0)] {
                let mut line = vec![0.0f32; 64];
                backproject_line_w(&mut line, &ctx, z, y, 0, 64, Lanes::W16);
                for (x, (&got, &want)) in line.iter().zip(reference.line(z, y)).enumerate() {
                    let rel = (got - want).abs() / (want.abs() + 1e-6);
                    assert!(rel <= 1e-5, "{mode} ({x},{y},{z}) {got} vs {want}");
                }
                if mode == Reciprocal::Off {
                    assert_eq!(line, reference.line(z, y));
                }
            }
        }
    }

    #[test]
    fn tail_updates_only_its_range() {
        let (g, m, img) = setup();
        let padded = zero_pad(&img, &PadSpec::uniform(2));
        let ctx = LineContext::new(&m, &g, &padded, true);
        let mut line = vec![-7.0f32; 64];
        backproject_line_w(&mut line, &ctx, 30, 30, 20, 25, Lanes::W16);
        for (x, &v) in line.iter().enumerate() {
            if (20..25).contains(&x) {
                assert_ne!(v, -7.0);
            } else {
                assert_eq!(v, -7.0);
            }
        }
    }

    #[test]
    fn widths_agree_bitwise() {
        let (g, m, img) = setup();
        let padded = zero_pad(&img, &PadSpec::uniform(2));
        for (padded_ctx, mode) in [true, false].into_iter().flat_map(|p| Reciprocal::ALL.map(|m| (p, m))) {
            let source = if padded_ctx { &padded } else { &img };
            let ctx = LineContext::new(&m, &g, source, padded_ctx).with_reciprocal(mode);
            let lines: Vec<Vec<f32>> = Lanes::WIDE
                .iter()
                .map(|&lanes| {
                    let mut line = vec![0.0f32; 64];
                    backproject_line_w(&mut line, &ctx, 17, 40, 3, 61, lanes);
                    line
                })
                .collect();
            for other in &lines[1..] {
                assert_eq!(
                    other.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                    lines[0].iter().map(|v| v.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }

    #[test]
    fn scalar_guarded_is_the_reference() {
        let (g, m, img) = setup();
        let mut reference = Volume::zeros(g);
        backproject_reference(&mut reference, &img, &m).unwrap();
        let ctx = LineContext::new(&m, &g, &img, false);
        let mut line = vec![0.0f32; 64];
        backproject_line_w(&mut line, &ctx, 5, 9, 0, 64, Lanes::Scalar);
        assert_eq!(line, reference.line(5, 9));
    }

    #[test]
    fn lanes_parse() {
        assert_eq!("16".parse::<Lanes>().unwrap(), Lanes::W16);
        assert_eq!(Lanes::from_width(1).unwrap(), Lanes::Scalar);
        assert!("3".parse::<Lanes>().is_err());
        assert!("x".parse::<Lanes>().is_err());
        for mode in Reciprocal::ALL {
            assert_eq!(mode.to_string().parse::<Reciprocal>().unwrap(), mode);
        }
        assert!("half".parse::<Reciprocal>().is_err());
    }
}
