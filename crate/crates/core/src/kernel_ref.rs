//! Scalar, single-threaded reference back projection.
//!
//! This is a literal transcription of the benchmark's unoptimized loop nest and
//! serves as the correctness oracle for every optimized kernel. Two details are
//! kept on purpose:
//!
//! * `(int)ix` truncates toward zero, so coordinates in `(-1, 0)` map to pixel 0
//!   with a negative weight. Optimized kernels reproduce this rather than using
//!   `floor`.
//! * Tap guards compare `iix` against the image width and `iiy` against the
//!   height. (The published listing swaps the two, which only matters for
//!   non-square detectors.)

use crate::dataset::{ProjectionImage, ProjectionStack, Volume};
use crate::error::{Error, Result};
use crate::geometry::{forward_project, ProjectionMatrix};

/// Bilinear interpolation with every out-of-bounds tap read as zero.
#[inline]
pub fn bilinear_sample_guarded(img: &ProjectionImage, ix: f32, iy: f32) -> f32 {
    let iix = ix as i32;
    let iiy = iy as i32;
    let scalex = ix - iix as f32;
    let scaley = iy - iiy as f32;
    let (w, h) = (img.width as i64, img.height as i64);
    let tap = |px: i32, py: i32| -> f32 {
        let (px, py) = (px as i64, py as i64);
        if py >= 0 && py < h && px >= 0 && px < w {
            img.pixels[(py * w + px) as usize]
        } else {
            0.0
        }
    };
    let valbl = tap(iix, iiy);
    let valbr = tap(iix.wrapping_add(1), iiy);
    let valtl = tap(iix, iiy.wrapping_add(1));
    let valtr = tap(iix.wrapping_add(1), iiy.wrapping_add(1));
    let valb = (1.0 - scalex) * valbl + scalex * valbr;
    let valt = (1.0 - scalex) * valtl + scalex * valtr;
    (1.0 - scaley) * valb + scaley * valt
}

/// Adds one projection's distance-weighted contribution to every voxel.
///
/// Fails if `w == 0` for some voxel; the volume is then partially updated.
pub fn backproject_reference(vol: &mut Volume, img: &ProjectionImage, matrix: &ProjectionMatrix) -> Result<()> {
    if img.is_padded() {
        return Err(Error::invalid("image", "reference kernel expects an unpadded image"));
    }
    let g = vol.geometry.to_f32();
    let a = matrix.to_f32();
    let l = g.edge;
    for z in 0..l {
        for y in 0..l {
            for x in 0..l {
                let wx = g.world(x);
                let wy = g.world(y);
                let wz = g.world(z);
                let (u, v, w) = forward_project(&a, wx, wy, wz);
                if w == 0.0 {
                    return Err(Error::Geometry(format!(
                        "w == 0 at voxel ({x}, {y}, {z}): ray parallel to the detector"
                    )));
                }
                let ix = u / w;
                let iy = v / w;
                let val = bilinear_sample_guarded(img, ix, iy);
                vol.voxels[z * l * l + y * l + x] += val / (w * w);
            }
        }
    }
    Ok(())
}

/// Back-projects every image of the stack, in stack order.
pub fn reconstruct_reference(vol: &mut Volume, stack: &ProjectionStack) -> Result<()> {
    if vol.geometry != stack.geometry {
        return Err(Error::invalid("geometry", "volume and stack geometries differ"));
    }
    for (img, m) in stack.projections() {
        backproject_reference(vol, img, m)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth_projection_image;
    use crate::dataset::Field;
    use crate::geometry::{make_circular_trajectory, TrajectoryConfig, VolumeGeometry};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn index_image() -> ProjectionImage {
        ProjectionImage::new(4, 4, (0..16).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn bilinear_hand_examples() {
        let img = index_image();
        assert_eq!(bilinear_sample_guarded(&img, 2.0, 3.0), 14.0);
        assert_eq!(bilinear_sample_guarded(&img, 1.5, 2.5), 11.5);
        assert_eq!(bilinear_sample_guarded(&img, -10.2, -10.2), 0.0);
        assert_eq!(bilinear_sample_guarded(&img, 1e9, 2.0), 0.0);
    }

    #[test]
    fn truncation_not_floor_for_negative_coordinates() {
        // ix = -0.5 truncates to pixel 0 and extrapolates with weight -0.5.
        let img = index_image();
        let got = bilinear_sample_guarded(&img, -0.5, 0.0);
        assert_eq!(got, 1.5 * 0.0 + -0.5 * 1.0);
    }

    #[test]
    fn non_square_bounds_use_width_for_x() {
        let img = ProjectionImage::new(5, 2, (0..10).map(|i| i as f32).collect()).unwrap();
        assert_eq!(bilinear_sample_guarded(&img, 4.0, 1.0), 9.0);
        assert_eq!(bilinear_sample_guarded(&img, 1.0, 3.0), 0.0);
    }

    /// Unguarded four-tap formula in the same operation order.
    fn four_tap(img: &ProjectionImage, ix: f32, iy: f32) -> f32 {
        let (iix, iiy) = (ix as i32 as usize, iy as i32 as usize);
        let (sx, sy) = (ix - iix as f32, iy - iiy as f32);
        let valb = (1.0 - sx) * img.get(iix, iiy) + sx * img.get(iix + 1, iiy);
        let valt = (1.0 - sx) * img.get(iix, iiy + 1) + sx * img.get(iix + 1, iiy + 1);
        (1.0 - sy) * valb + sy * valt
    }

    #[test]
    fn interior_guarded_equals_unguarded_and_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let pixels = (0..40 * 30).map(|_| rng.gen_range(-5.0f32..5.0)).collect();
        let img = ProjectionImage::new(40, 30, pixels).unwrap();
        for _ in 0..20_000 {
            let ix = rng.gen_range(0.0f32..38.999);
            let iy = rng.gen_range(0.0f32..28.999);
            let got = bilinear_sample_guarded(&img, ix, iy);
            assert_eq!(got.to_bits(), four_tap(&img, ix, iy).to_bits());
            let (iix, iiy) = (ix as usize, iy as usize);
            let taps = [
                img.get(iix, iiy),
                img.get(iix + 1, iiy),
                img.get(iix, iiy + 1),
                img.get(iix + 1, iiy + 1),
            ];
            let lo = taps.iter().cloned().fold(f32::INFINITY, f32::min);
            let hi = taps.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            let slack = 1e-5 * (lo.abs().max(hi.abs()));
            assert!(got >= lo - slack && got <= hi + slack);
        }
    }

    #[test]
    fn affine_field_reproduced() {
        let img = synth_projection_image(64, 48, &Field::ramp()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..20_000 {
            let ix = rng.gen_range(0.0f32..62.99);
            let iy = rng.gen_range(0.0f32..46.99);
            let exact = ix as f64 + 2.0 * iy as f64;
            let got = bilinear_sample_guarded(&img, ix, iy) as f64;
            assert!(
                (got - exact).abs() <= 1e-4 * exact.max(1.0),
                "{ix},{iy}: {got} vs {exact}"
            );
        }
    }

    fn orthographic() -> ProjectionMatrix {
        let mut c = [0.0; 12];
        c[0] = 1.0;
        c[4] = 1.0;
        c[11] = 1.0;
        ProjectionMatrix::new(c).unwrap()
    }

    #[test]
    fn zero_image_leaves_volume_unchanged() {
        let g = VolumeGeometry::new(8, 1.0, 0.0).unwrap();
        let mut vol = Volume::zeros(g);
        vol.voxels.iter_mut().enumerate().for_each(|(i, v)| *v = i as f32);
        let before = vol.clone();
        backproject_reference(&mut vol, &ProjectionImage::zeros(6, 6), &orthographic()).unwrap();
        assert_eq!(vol, before);
    }

    #[test]
    fn orthographic_constant_image() {
        // wx = x, wy = y, w = 1: voxels with x < 6 and y < 5 land on the 6x5 detector.
        let g = VolumeGeometry::new(8, 1.0, 0.0).unwrap();
        let mut vol = Volume::zeros(g);
        let img = synth_projection_image(6, 5, &Field::Constant { value: 2.5 }).unwrap();
        backproject_reference(&mut vol, &img, &orthographic()).unwrap();
        for z in 0..8 {
            for y in 0..8 {
                for x in 0..8 {
                    let expected = if x < 6 && y < 5 { 2.5 } else { 0.0 };
                    assert_eq!(vol.get(x, y, z), expected, "({x},{y},{z})");
                }
            }
        }
    }

    #[test]
    fn ramp_matches_double_precision_closed_form() {
        let cfg = TrajectoryConfig {
            num_projections: 7,
            source_isocenter_distance: 120.0,
            source_detector_distance: 200.0,
            detector_width: 48,
            detector_height: 40,
            pixel_size: 1.0,
            start_angle: 0.4,
            ..TrajectoryConfig::default()
        };
        let g = VolumeGeometry::centered(8, 2.0).unwrap();
        let img = synth_projection_image(48, 40, &Field::ramp()).unwrap();
        let mut checked = 0;
        for m in make_circular_trajectory(&cfg).unwrap() {
            let mut vol = Volume::zeros(g);
            backproject_reference(&mut vol, &img, &m).unwrap();
            for z in 0..8 {
                for y in 0..8 {
                    for x in 0..8 {
                        let [u, v, w] = m.project([g.world_coord(x), g.world_coord(y), g.world_coord(z)]);
                        let (ix, iy) = (u / w, v / w);
                        if ix < 0.0 || iy < 0.0 || ix >= 47.0 || iy >= 39.0 {
                            continue;
                        }
                        let expected = (ix + 2.0 * iy) / (w * w);
                        let got = vol.get(x, y, z) as f64;
                        assert!((got - expected).abs() <= 1e-4 * expected.abs(), "{got} vs {expected}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn zero_w_is_a_geometry_error() {
        // w = wx, which vanishes at voxel x = 2 when origin = -2.
        let mut c = [0.0; 12];
        c[2] = 1.0;
        let m = ProjectionMatrix::new(c).unwrap();
        let mut vol = Volume::zeros(VolumeGeometry::new(4, 1.0, -2.0).unwrap());
        let err = backproject_reference(&mut vol, &ProjectionImage::zeros(2, 2), &m).unwrap_err();
        assert!(matches!(err, Error::Geometry(_)));
    }

    #[test]
    fn projections_accumulate_additively() {
        let cfg = TrajectoryConfig {
            num_projections: 1,
            source_isocenter_distance: 100.0,
            source_detector_distance: 180.0,
            detector_width: 24,
            detector_height: 20,
            pixel_size: 1.0,
            ..TrajectoryConfig::default()
        };
        let g = VolumeGeometry::centered(8, 1.5).unwrap();
        let m = make_circular_trajectory(&cfg).unwrap()[0];
        let img = synth_projection_image(24, 20, &"gaussian:5,6,11.5,9.5".parse().unwrap()).unwrap();

        let mut once = Volume::zeros(g);
        backproject_reference(&mut once, &img, &m).unwrap();
        let single = ProjectionStack::new(g, vec![img.clone()], vec![m]).unwrap();
        let mut via_stack = Volume::zeros(g);
        reconstruct_reference(&mut via_stack, &single).unwrap();
        assert_eq!(via_stack, once);

        let double = ProjectionStack::new(g, vec![img.clone(), img], vec![m, m]).unwrap();
        let mut twice = Volume::zeros(g);
        reconstruct_reference(&mut twice, &double).unwrap();
        for (t, o) in twice.voxels.iter().zip(&once.voxels) {
            assert_eq!(*t, o + o);
        }
    }
}
