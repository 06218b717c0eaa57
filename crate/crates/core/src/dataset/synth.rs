use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_stack, ProjectionImage, ProjectionStack};
use crate::error::{Error, Result};
use crate::geometry::{make_circular_trajectory, TrajectoryConfig, VolumeGeometry};

/// Analytic detector intensity fields.
///
/// The linear ramp is affine in pixel coordinates, so bilinear interpolation
/// reproduces it exactly wherever all four taps are on the detector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Field {
    Constant {
        value: f64,
    },
    LinearRamp {
        slope_x: f64,
        slope_y: f64,
        offset: f64,
    },
    GaussianBlob {
        amplitude: f64,
        sigma: f64,
        center_x: f64,
        center_y: f64,
    },
    Checker {
        cell: usize,
        low: f64,
        high: f64,
    },
}

impl Field {
    /// The ramp `ix + 2 * iy`.
    pub fn ramp() -> Self {
        Field::LinearRamp {
            slope_x: 1.0,
            slope_y: 2.0,
            offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Field::GaussianBlob { sigma, .. } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(Error::invalid("sigma", "gaussian width must be positive"))
            }
            Field::Checker { cell: 0, .. } => Err(Error::invalid("cell", "checker cell must be at least 1 pixel")),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, ix: usize, iy: usize) -> f64 {
        let (x, y) = (ix as f64, iy as f64);
        match *self {
            Field::Constant { value } => value,
            Field::LinearRamp {
                slope_x,
                slope_y,
                offset,
            } => slope_x * x + slope_y * y + offset,
            Field::GaussianBlob {
                amplitude,
                sigma,
                center_x,
                center_y,
            } => {
                let r2 = (x - center_x).powi(2) + (y - center_y).powi(2);
                amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
            }
            Field::Checker { cell, low, high } => {
                if (ix / cell + iy / cell).is_multiple_of(2) {
                    low
                } else {
                    high
                }
            }
        }
    }
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Constant { value } => write!(f, "constant:{value}"),
            Field::LinearRamp {
                slope_x,
                slope_y,
                offset,
            } => write!(f, "ramp:{slope_x},{slope_y},{offset}"),
            Field::GaussianBlob {
                amplitude,
                sigma,
                center_x,
                center_y,
            } => write!(f, "gaussian:{amplitude},{sigma},{center_x},{center_y}"),
            Field::Checker { cell, low, high } => write!(f, "checker:{cell},{low},{high}"),
        }
    }
}

/// Parses `id[:p1,p2,...]`, e.g. `constant:1`, `ramp`, `ramp:1,2,0`,
/// `gaussian:100,40,623.5,479.5`, `checker:16,0,1`.
impl FromStr for Field {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (id, params) = s.split_once(':').unwrap_or((s, ""));
        let nums: Vec<f64> = if params.is_empty() {
            Vec::new()
        } else {
            params
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid("field", format!("bad parameter {p:?} in {s:?}")))
                })
                .collect::<Result<_>>()?
        };
        let arity = |n: usize| {
            if nums.len() == n {
                Ok(())
            } else {
                Err(Error::invalid(
                    "field",
                    format!("{id} takes {n} parameters, got {}", nums.len()),
                ))
            }
        };
        let field = match id {
            "constant" => {
                if nums.is_empty() {
                    Field::Constant { value: 1.0 }
                } else {
                    arity(1)?;
                    Field::Constant { value: nums[0] }
                }
            }
            "ramp" | "linear-ramp" => {
                if nums.is_empty() {
                    Field::ramp()
                } else {
                    arity(3)?;
                    Field::LinearRamp {
                        slope_x: nums[0],
                        slope_y: nums[1],
                        offset: nums[2],
                    }
                }
            }
            "gaussian" | "gaussian-blob" => {
                arity(4)?;
                Field::GaussianBlob {
                    amplitude: nums[0],
                    sigma: nums[1],
                    center_x: nums[2],
                    center_y: nums[3],
                }
            }
            "checker" => {
                arity(3)?;
                if nums[0] < 1.0 || nums[0].fract() != 0.0 {
                    return Err(Error::invalid("cell", "checker cell must be a positive integer"));
                }
                Field::Checker {
                    cell: nums[0] as usize,
                    low: nums[1],
                    high: nums[2],
                }
            }
            other => return Err(Error::invalid("field", format!("unknown field id {other:?}"))),
        };
        field.validate()?;
        Ok(field)
    }
}

/// Raster of `field` sampled at integer pixel positions, evaluated in double
/// precision and rounded once to single.
pub fn synth_projection_image(width: usize, height: usize, field: &Field) -> Result<ProjectionImage> {
    field.validate()?;
    let mut pixels = Vec::with_capacity(width * height);
    for iy in 0..height {
        for ix in 0..width {
            pixels.push(field.eval(ix, iy) as f32);
        }
    }
    ProjectionImage::new(width, height, pixels)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub trajectory: TrajectoryConfig,
    pub geometry: VolumeGeometry,
    pub field: Field,
    /// Peak amplitude of uniform per-pixel noise added to every image.
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default)]
    pub seed: u64,
}

impl DatasetConfig {
    /// Desk-scale scan of an `edge`^3 volume of 0.5 mm voxels: clinical
    /// source distances and pixel pitch, detector scaled with the volume so
    /// the volume's corners fall off the detector.
    pub fn desk(edge: usize, projections: usize) -> Self {
        DatasetConfig {
            trajectory: TrajectoryConfig {
                num_projections: projections,
                detector_width: 3 * edge,
                detector_height: 5 * edge / 2,
                ..TrajectoryConfig::default()
            },
            geometry: VolumeGeometry {
                edge,
                voxel_size: 0.5,
                origin: -0.25 * (edge as f64 - 1.0),
            },
            field: Field::GaussianBlob {
                amplitude: 1.0,
                sigma: edge as f64 / 2.0,
                center_x: 1.5 * edge as f64,
                center_y: 1.25 * edge as f64,
            },
            noise_amplitude: 0.01,
            seed: 0,
        }
    }

    /// Builds the stack in memory without touching the filesystem.
    pub fn build(&self) -> Result<ProjectionStack> {
        self.geometry.validate()?;
        if !(self.noise_amplitude.is_finite() && self.noise_amplitude >= 0.0) {
            return Err(Error::invalid("noise_amplitude", "must be finite and non-negative"));
        }
        let matrices = make_circular_trajectory(&self.trajectory)?;
        for (k, m) in matrices.iter().enumerate() {
            m.check_positive_w(&self.geometry).map_err(|e| {
                Error::Geometry(format!(
                    "projection {k}: {e}; the volume does not fit inside the source circle"
                ))
            })?;
        }
        let (w, h) = (self.trajectory.detector_width, self.trajectory.detector_height);
        let base = synth_projection_image(w, h, &self.field)?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let images = (0..matrices.len())
            .map(|_| {
                let mut img = base.clone();
                if self.noise_amplitude > 0.0 {
                    for p in &mut img.pixels {
                        *p += rng.gen_range(-self.noise_amplitude..=self.noise_amplitude) as f32;
                    }
                }
                img
            })
            .collect();
        ProjectionStack::new(self.geometry, images, matrices)
    }
}

/// Builds the synthetic stack and writes it to `out`.
pub fn generate_dataset(config: &DatasetConfig, out: impl AsRef<Path>) -> Result<ProjectionStack> {
    let stack = config.build()?;
    write_stack(out, &stack)?;
    Ok(stack)
}
