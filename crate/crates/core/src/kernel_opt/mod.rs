//! Optimized back projection: per-projection clip masks, zero-padded images
//! with branch-free tap loads, a W-lane line update kernel, and static chunked
//! scheduling of the collapsed `(z, y)` line space over worker threads.
//!
//! Workers own disjoint voxel lines for the whole run and process the
//! projections in stack order, so every voxel sees the same sequence of
//! floating-point operations whatever the worker count.

mod clip;
mod gather;
mod line;
mod pad;
mod schedule;

pub use clip::{compute_clip_mask, voxel_contributes, ClipMask};
pub use gather::{count_cacheline_splits, GatherReport, GatherStats};
pub use line::{backproject_line_w, Lanes, LineContext, Reciprocal};
pub use pad::{compute_pad_spec, zero_pad, PadSpec};
pub use schedule::{make_chunk_plan, ChunkPlan, DEFAULT_CHUNK_SIZE};

use std::borrow::Cow;
use std::thread;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{ProjectionImage, ProjectionStack, Volume};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedOptions {
    pub lanes: Lanes,
    pub chunk_size: usize,
    pub workers: usize,
    /// Skip voxels outside each projection's clip mask.
    pub use_clip: bool,
    /// Zero-pad images and drop the per-tap bounds checks.
    pub use_pad: bool,
    /// Count distinct cache lines per tap gather (padded runs only).
    #[serde(default)]
    pub instrument: bool,
    /// Division substitution in the wide kernels.
    #[serde(default)]
    pub reciprocal: Reciprocal,
}

impl Default for OptimizedOptions {
    fn default() -> Self {
        OptimizedOptions {
            lanes: Lanes::W16,
            chunk_size: DEFAULT_CHUNK_SIZE,
            workers: default_workers(),
            use_clip: true,
            use_pad: true,
            instrument: false,
            reciprocal: Reciprocal::Off,
        }
    }
}

/// Available hardware parallelism, or 1 if unknown.
pub fn default_workers() -> usize {
    thread::available_parallelism().map_or(1, |n| n.get())
}

/// Everything computed per projection before the timed kernel runs.
#[derive(Debug)]
pub struct Prepared<'s> {
    stack: &'s ProjectionStack,
    options: OptimizedOptions,
    masks: Option<Vec<ClipMask>>,
    images: Vec<Cow<'s, ProjectionImage>>,
    pad: Option<PadSpec>,
    plan: ChunkPlan,
}

pub fn prepare<'s>(stack: &'s ProjectionStack, options: &OptimizedOptions) -> Result<Prepared<'s>> {
    stack.validate()?;
    let g = &stack.geometry;
    let plan = make_chunk_plan(g.edge, options.chunk_size, options.workers)?;
    for (k, m) in stack.matrices.iter().enumerate() {
        m.check_positive_w(g)
            .map_err(|e| Error::Geometry(format!("projection {k}: {e}")))?;
    }
    let masks = if options.use_clip {
        Some(
            stack
                .matrices
                .iter()
                .map(|m| compute_clip_mask(m, g, stack.width(), stack.height()))
                .collect::<Result<Vec<_>>>()?,
        )
    } else {
        None
    };
    let (images, pad) = if options.use_pad {
        let pad = match &masks {
            Some(masks) => compute_pad_spec(stack, masks)?,
            None => compute_pad_spec(stack, &vec![ClipMask::full(g.edge); stack.len()])?,
        };
        let images = stack.images.iter().map(|img| Cow::Owned(zero_pad(img, &pad))).collect();
        (images, Some(pad))
    } else {
        (stack.images.iter().map(Cow::Borrowed).collect(), None)
    };
    Ok(Prepared {
        stack,
        options: options.clone(),
        masks,
        images,
        pad,
        plan,
    })
}

impl<'s> Prepared<'s> {
    pub fn masks(&self) -> Option<&[ClipMask]> {
        self.masks.as_deref()
    }

    pub fn pad(&self) -> Option<PadSpec> {
        self.pad
    }

    pub fn plan(&self) -> &ChunkPlan {
        &self.plan
    }

    /// Voxel updates one execution performs (clipped count when clipping).
    pub fn voxel_updates(&self) -> u64 {
        match &self.masks {
            Some(masks) => masks.iter().map(ClipMask::admitted_voxels).sum(),
            None => self.stack.geometry.voxel_count() as u64 * self.stack.len() as u64,
        }
    }

    /// Runs the line kernels for every projection, accumulating into `vol`.
    pub fn execute(&self, vol: &mut Volume) -> Result<Option<GatherStats>> {
        let g = self.stack.geometry;
        if vol.geometry != g {
            return Err(Error::invalid("geometry", "volume and stack geometries differ"));
        }
        let l = g.edge;
        let workers = self.options.workers;
        let mut assigned: Vec<Vec<(usize, &mut [f32])>> = (0..workers).map(|_| Vec::new()).collect();
        let owners = self.plan.owners();
        for (index, line) in vol.voxels.chunks_mut(l).enumerate() {
            assigned[owners[index]].push((index, line));
        }
        let instrument = self.options.instrument && self.pad.is_some();
        let run = |lines: Vec<(usize, &mut [f32])>| -> GatherStats {
            let mut stats = GatherStats::default();
            let mut lines = lines;
            for (k, (img, m)) in self.images.iter().zip(&self.stack.matrices).enumerate() {
                let ctx = LineContext::new(m, &g, img, self.pad.is_some()).with_reciprocal(self.options.reciprocal);
                let mask = self.masks.as_ref().map(|masks| &masks[k]);
                for (index, line) in lines.iter_mut() {
                    let range = mask.map_or((0, l), |mask| mask.range(*index));
                    if range.0 == range.1 {
                        continue;
                    }
                    let (z, y) = (*index / l, *index % l);
                    line::backproject_line(
                        line,
                        &ctx,
                        z,
                        y,
                        range,
                        self.options.lanes,
                        instrument.then_some(&mut stats),
                    );
                }
            }
            stats
        };
        let mut assigned = assigned.into_iter();
        let first = assigned.next().unwrap_or_default();
        let stats = thread::scope(|scope| {
            let handles: Vec<_> = assigned.map(|lines| scope.spawn(|| run(lines))).collect();
            let mut total = run(first);
            for h in handles {
                total.merge(&h.join().expect("back-projection worker panicked"));
            }
            total
        });
        Ok(instrument.then_some(stats))
    }
}

/// Outcome of one optimized reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub voxel_updates: u64,
    pub clipped: bool,
    pub pad: Option<PadSpec>,
    pub prepare_seconds: f64,
    pub kernel_seconds: f64,
    pub gather: Option<GatherReport>,
}

/// Clip, pad and back-project every projection of `stack` into `vol`.
pub fn reconstruct_optimized(
    vol: &mut Volume,
    stack: &ProjectionStack,
    options: &OptimizedOptions,
) -> Result<RunSummary> {
    if vol.geometry != stack.geometry {
        return Err(Error::invalid("geometry", "volume and stack geometries differ"));
    }
    let t0 = Instant::now();
    let prepared = prepare(stack, options)?;
    let prepare_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let gather = prepared.execute(vol)?;
    let kernel_seconds = t1.elapsed().as_secs_f64();
    Ok(RunSummary {
        voxel_updates: prepared.voxel_updates(),
        clipped: options.use_clip,
        pad: prepared.pad(),
        prepare_seconds,
        kernel_seconds,
        gather: gather.map(|s| s.report()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DatasetConfig, Field};
    use crate::geometry::{TrajectoryConfig, VolumeGeometry};
    use crate::kernel_ref::reconstruct_reference;

    pub(crate) fn small_stack(edge: usize, projections: usize, field: Field) -> ProjectionStack {
        DatasetConfig {
            trajectory: TrajectoryConfig {
                num_projections: projections,
                source_isocenter_distance: 150.0,
                source_detector_distance: 300.0,
                detector_width: 2 * edge,
                detector_height: 2 * edge - 6,
                pixel_size: 1.2,
                start_angle: 0.2,
                ..TrajectoryConfig::default()
            },
            geometry: VolumeGeometry::centered(edge, 1.0).unwrap(),
            field,
            noise_amplitude: 0.0,
            seed: 0,
        }
        .build()
        .unwrap()
    }

    #[test]
    fn degenerate_options_equal_reference_bitwise() {
        let stack = small_stack(24, 4, Field::ramp());
        let mut reference = Volume::zeros(stack.geometry);
        reconstruct_reference(&mut reference, &stack).unwrap();
        let opts = OptimizedOptions {
            lanes: Lanes::Scalar,
            workers: 1,
            use_clip: false,
            use_pad: false,
            ..OptimizedOptions::default()
        };
        let mut vol = Volume::zeros(stack.geometry);
        let summary = reconstruct_optimized(&mut vol, &stack, &opts).unwrap();
        assert_eq!(vol, reference);
        assert_eq!(summary.voxel_updates, 24 * 24 * 24 * 4);
        assert!(summary.pad.is_none());
    }

    #[test]
    fn scalar_clip_and_pad_still_bitwise_reference() {
        // Clipping drops only zero contributions and padding only replaces guards.
        let stack = DatasetConfig {
            trajectory: TrajectoryConfig {
                num_projections: 4,
                source_isocenter_distance: 150.0,
                source_detector_distance: 300.0,
                detector_width: 30,
                detector_height: 26,
                pixel_size: 1.2,
                start_angle: 0.2,
                ..TrajectoryConfig::default()
            },
            geometry: VolumeGeometry::centered(24, 1.0).unwrap(),
            field: "gaussian:4,9,14,12".parse().unwrap(),
            noise_amplitude: 0.0,
            seed: 0,
        }
        .build()
        .unwrap();
        let mut reference = Volume::zeros(stack.geometry);
        reconstruct_reference(&mut reference, &stack).unwrap();
        let opts = OptimizedOptions {
            lanes: Lanes::Scalar,
            workers: 3,
            chunk_size: 7,
            ..OptimizedOptions::default()
        };
        let mut vol = Volume::zeros(stack.geometry);
        let summary = reconstruct_optimized(&mut vol, &stack, &opts).unwrap();
        assert_eq!(vol, reference);
        assert!(summary.voxel_updates < 24 * 24 * 24 * 4);
    }

    #[test]
    fn instrumentation_reports_lines_within_lane_count() {
        let stack = small_stack(32, 3, Field::Constant { value: 1.0 });
        let opts = OptimizedOptions {
            instrument: true,
            workers: 2,
            ..OptimizedOptions::default()
        };
        let mut vol = Volume::zeros(stack.geometry);
        let summary = reconstruct_optimized(&mut vol, &stack, &opts).unwrap();
        let report = summary.gather.unwrap();
        assert_eq!(report.lanes, 16);
        assert!(report.groups > 0);
        for mean in report.mean_lines_per_tap {
            assert!((1.0..=16.0).contains(&mean), "{mean}");
        }
    }

    #[test]
    fn mismatched_volume_rejected() {
        let stack = small_stack(8, 1, Field::ramp());
        let mut vol = Volume::zeros(VolumeGeometry::centered(9, 1.0).unwrap());
        assert!(reconstruct_optimized(&mut vol, &stack, &OptimizedOptions::default()).is_err());
    }
}
