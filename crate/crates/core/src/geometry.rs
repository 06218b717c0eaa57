//! Volume coordinates, projection matrices and circular scan trajectories.
//!
//! Geometry is set up in double precision. The kernels consume single
//! precision copies ([`VolumeGeometry::to_f32`], [`ProjectionMatrix::to_f32`])
//! and evaluate the same expressions in the same order as the benchmark's
//! reference loop, so every kernel sees bit-identical projected coordinates.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A cubic voxel volume: `edge` voxels per axis, each `voxel_size` mm wide,
/// with voxel index 0 sitting at world coordinate `origin` on every axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeGeometry {
    pub edge: usize,
    pub voxel_size: f64,
    pub origin: f64,
}

impl VolumeGeometry {
    pub fn new(edge: usize, voxel_size: f64, origin: f64) -> Result<Self> {
        let g = VolumeGeometry {
            edge,
            voxel_size,
            origin,
        };
        g.validate()?;
        Ok(g)
    }

    /// Volume centered on the isocenter: `origin = -(edge - 1) / 2 * voxel_size`.
    pub fn centered(edge: usize, voxel_size: f64) -> Result<Self> {
        let origin = -((edge as f64) - 1.0) / 2.0 * voxel_size;
        Self::new(edge, voxel_size, origin)
    }

    pub fn validate(&self) -> Result<()> {
        if self.edge == 0 {
            return Err(Error::invalid("edge", "volume needs at least one voxel per edge"));
        }
        if !(self.voxel_size.is_finite() && self.voxel_size > 0.0) {
            return Err(Error::invalid(
                "voxel_size",
                format!("must be finite and positive, got {}", self.voxel_size),
            ));
        }
        if !self.origin.is_finite() {
            return Err(Error::invalid("origin", "must be finite"));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.edge * self.edge * self.edge
    }

    /// Number of voxel lines (one per `(z, y)` pair).
    pub fn line_count(&self) -> usize {
        self.edge * self.edge
    }

    pub fn to_f32(&self) -> VolumeGeometryF32 {
        VolumeGeometryF32 {
            edge: self.edge,
            voxel_size: self.voxel_size as f32,
            origin: self.origin as f32,
        }
    }

    /// World coordinate of a voxel index in double precision.
    pub fn world_coord(&self, index: usize) -> f64 {
        self.origin + index as f64 * self.voxel_size
    }

    /// Single-precision world coordinates of voxel `(x, y, z)`, exactly as the kernels compute them.
    pub fn world_from_voxel(&self, x: usize, y: usize, z: usize) -> [f32; 3] {
        debug_assert!(x < self.edge && y < self.edge && z < self.edge);
        let g = self.to_f32();
        [g.world(x), g.world(y), g.world(z)]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VolumeGeometryF32 {
    pub edge: usize,
    pub voxel_size: f32,
    pub origin: f32,
}

impl VolumeGeometryF32 {
    #[inline(always)]
    pub fn world(&self, index: usize) -> f32 {
        self.origin + index as f32 * self.voxel_size
    }
}

/// A 3x4 homogeneous forward-projection matrix stored column-major, so that
/// `u` uses coefficients 0, 3, 6, 9, `v` uses 1, 4, 7, 10 and `w` uses 2, 5, 8, 11.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionMatrix {
    pub coeffs: [f64; 12],
}

impl ProjectionMatrix {
    pub fn new(coeffs: [f64; 12]) -> Result<Self> {
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::invalid(
                "coeffs",
                format!("coefficient {i} is not finite ({})", coeffs[i]),
            ));
        }
        Ok(ProjectionMatrix { coeffs })
    }

    /// Builds the matrix from a conventional row-major 3x4 layout.
    pub fn from_rows(rows: [[f64; 4]; 3]) -> Result<Self> {
        let mut coeffs = [0.0; 12];
        for (row, r) in rows.iter().enumerate() {
            for (col, &value) in r.iter().enumerate() {
                coeffs[col * 3 + row] = value;
            }
        }
        Self::new(coeffs)
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.coeffs[col * 3 + row]
    }

    /// Homogeneous `(u, v, w)` of a world point, in double precision.
    pub fn project(&self, world: [f64; 3]) -> [f64; 3] {
        let a = &self.coeffs;
        let [wx, wy, wz] = world;
        [
            wx * a[0] + wy * a[3] + wz * a[6] + a[9],
            wx * a[1] + wy * a[4] + wz * a[7] + a[10],
            wx * a[2] + wy * a[5] + wz * a[8] + a[11],
        ]
    }

    pub fn to_f32(&self) -> [f32; 12] {
        self.coeffs.map(|c| c as f32)
    }

    /// Returns the matrix multiplied by a nonzero scalar; the projected pixel positions are unchanged.
    pub fn scaled(&self, factor: f64) -> ProjectionMatrix {
        ProjectionMatrix {
            coeffs: self.coeffs.map(|c| c * factor),
        }
    }

    /// Smallest `w` over the eight corners of the volume. `w` is affine in the
    /// world coordinates, so this is the minimum over the whole volume.
    pub fn min_w_over(&self, geometry: &VolumeGeometry) -> f64 {
        let lo = geometry.world_coord(0);
        let hi = geometry.world_coord(geometry.edge - 1);
        let mut min = f64::INFINITY;
        for corner in 0..8 {
            let pick = |bit: usize| if corner & bit == 0 { lo } else { hi };
            let w = self.project([pick(1), pick(2), pick(4)])[2];
            min = min.min(w);
        }
        min
    }

    /// Fails unless `w > 0` for every voxel of the volume.
    pub fn check_positive_w(&self, geometry: &VolumeGeometry) -> Result<()> {
        let min_w = self.min_w_over(geometry);
        if min_w > 0.0 {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "w reaches {min_w} inside the volume; some voxels lie at or behind the source plane"
            )))
        }
    }
}

/// Homogeneous projection in single precision, evaluated term by term in the
/// reference order `wx*a0 + wy*a3 + wz*a6 + a9`.
#[inline(always)]
pub fn forward_project(a: &[f32; 12], wx: f32, wy: f32, wz: f32) -> (f32, f32, f32) {
    let u = wx * a[0] + wy * a[3] + wz * a[6] + a[9];
    let v = wx * a[1] + wy * a[4] + wz * a[7] + a[10];
    let w = wx * a[2] + wy * a[5] + wz * a[8] + a[11];
    (u, v, w)
}

/// Detector coordinates `(u / w, v / w)`.
pub fn dehomogenize(u: f32, v: f32, w: f32) -> Result<(f32, f32)> {
    if w == 0.0 {
        return Err(Error::Geometry(
            "w == 0: the ray is parallel to the detector plane".into(),
        ));
    }
    Ok((u / w, v / w))
}

/// Detector coordinates via one reciprocal and two multiplies, as used by the
/// optimized kernels. Agrees with [`dehomogenize`] to within a few ULP.
pub fn dehomogenize_reciprocal(u: f32, v: f32, w: f32) -> Result<(f32, f32)> {
    if w == 0.0 {
        return Err(Error::Geometry(
            "w == 0: the ray is parallel to the detector plane".into(),
        ));
    }
    let r = 1.0 / w;
    Ok((u * r, v * r))
}

/// Parameters for a synthetic circular source trajectory around the volume's `z` axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    pub num_projections: usize,
    /// Source to rotation axis, mm.
    pub source_isocenter_distance: f64,
    /// Source to detector plane, mm.
    pub source_detector_distance: f64,
    pub detector_width: usize,
    pub detector_height: usize,
    /// Detector pixel pitch, mm.
    pub pixel_size: f64,
    /// Angle swept by the source, radians.
    #[serde(default = "full_circle")]
    pub angular_range: f64,
    /// Source angle of the first projection, radians.
    #[serde(default)]
    pub start_angle: f64,
}

fn full_circle() -> f64 {
    TAU
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            num_projections: 496,
            source_isocenter_distance: 750.0,
            source_detector_distance: 1200.0,
            detector_width: 1248,
            detector_height: 960,
            pixel_size: 0.32,
            angular_range: TAU,
            start_angle: 0.0,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_projections == 0 {
            return Err(Error::invalid("num_projections", "must be at least 1"));
        }
        let positive = |field: &'static str, value: f64| {
            if value.is_finite() && value > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(
                    field,
                    format!("must be finite and positive, got {value}"),
                ))
            }
        };
        positive("source_isocenter_distance", self.source_isocenter_distance)?;
        positive("source_detector_distance", self.source_detector_distance)?;
        positive("pixel_size", self.pixel_size)?;
        positive("angular_range", self.angular_range)?;
        if !self.start_angle.is_finite() {
            return Err(Error::invalid("start_angle", "must be finite"));
        }
        if self.source_detector_distance <= self.source_isocenter_distance {
            return Err(Error::invalid(
                "source_detector_distance",
                format!(
                    "must exceed source_isocenter_distance ({} <= {})",
                    self.source_detector_distance, self.source_isocenter_distance
                ),
            ));
        }
        // The isocenter ray must land on a full bilinear stencil.
        if self.detector_width < 2 {
            return Err(Error::invalid(
                "detector_width",
                format!("need at least 2 pixels, got {}", self.detector_width),
            ));
        }
        if self.detector_height < 2 {
            return Err(Error::invalid(
                "detector_height",
                format!("need at least 2 pixels, got {}", self.detector_height),
            ));
        }
        Ok(())
    }

    /// Pixel coordinates of the detector center, where the isocenter projects.
    pub fn detector_center(&self) -> (f64, f64) {
        (
            (self.detector_width as f64 - 1.0) / 2.0,
            (self.detector_height as f64 - 1.0) / 2.0,
        )
    }

    pub fn angle(&self, index: usize) -> f64 {
        self.start_angle + self.angular_range * index as f64 / self.num_projections as f64
    }

    /// Projection matrix for a source at angle `theta`.
    ///
    /// The source sits at `d * (cos, sin, 0)`; the detector `u` axis follows the
    /// direction of rotation and `v` follows the world `z` axis. The matrix is
    /// scaled so that `w` at the isocenter is exactly 1, which makes `w` the
    /// source distance relative to the isocenter distance.
    pub fn matrix_at(&self, theta: f64) -> ProjectionMatrix {
        let d = self.source_isocenter_distance;
        let focal = self.source_detector_distance / self.pixel_size;
        let (cu, cv) = self.detector_center();
        let (s, c) = theta.sin_cos();
        // depth = d - X.e_r, lateral = X.e_t, vertical = X.z
        let depth = [-c, -s, 0.0, d];
        let lateral = [-s, c, 0.0, 0.0];
        let vertical = [0.0, 0.0, 1.0, 0.0];
        let mut rows = [[0.0; 4]; 3];
        for k in 0..4 {
            rows[0][k] = (focal * lateral[k] + cu * depth[k]) / d;
            rows[1][k] = (focal * vertical[k] + cv * depth[k]) / d;
            rows[2][k] = depth[k] / d;
        }
        ProjectionMatrix::from_rows(rows).expect("finite trajectory parameters give finite coefficients")
    }
}

/// One projection matrix per source position, at uniform angular increments.
pub fn make_circular_trajectory(config: &TrajectoryConfig) -> Result<Vec<ProjectionMatrix>> {
    config.validate()?;
    Ok((0..config.num_projections)
        .map(|k| config.matrix_at(config.angle(k)))
        .collect())
}
