//! Projection images, projection stacks and voxel volumes, their on-disk
//! formats, and the synthetic scan generator used in place of a measured
//! (pre-filtered) dataset.

mod format;
mod synth;

pub use format::{
    read_stack, read_volume, stack_file_len, volume_file_len, write_stack, write_volume, STACK_HEADER_LEN, STACK_MAGIC,
    VOLUME_HEADER_LEN, VOLUME_MAGIC,
};
pub use synth::{generate_dataset, synth_projection_image, DatasetConfig, Field};

use crate::error::{Error, Result};
use crate::geometry::{ProjectionMatrix, VolumeGeometry};

/// A single-precision detector raster, row-major (`iy * width + ix`).
///
/// Padded copies carry `pad_origin`, the position of their pixel `(0, 0)` in
/// unpadded detector coordinates; it is `[0, 0]` for images straight off the detector.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
    pub pad_origin: [i64; 2],
}

impl ProjectionImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(
                "dimensions",
                format!("image must be non-empty, got {width}x{height}"),
            ));
        }
        if pixels.len() != width * height {
            return Err(Error::invalid(
                "pixels",
                format!(
                    "expected {} values for {width}x{height}, got {}",
                    width * height,
                    pixels.len()
                ),
            ));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid("pixels", format!("pixel {i} is not finite")));
        }
        Ok(ProjectionImage {
            width,
            height,
            pixels,
            pad_origin: [0, 0],
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        ProjectionImage {
            width,
            height,
            pixels: vec![0.0; width * height],
            pad_origin: [0, 0],
        }
    }

    pub fn is_padded(&self) -> bool {
        self.pad_origin != [0, 0]
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> f32 {
        self.pixels[iy * self.width + ix]
    }
}

/// Projection images with their matrices, plus the volume they reconstruct into.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionStack {
    pub geometry: VolumeGeometry,
    pub images: Vec<ProjectionImage>,
    pub matrices: Vec<ProjectionMatrix>,
}

impl ProjectionStack {
    pub fn new(
        geometry: VolumeGeometry,
        images: Vec<ProjectionImage>,
        matrices: Vec<ProjectionMatrix>,
    ) -> Result<Self> {
        let stack = ProjectionStack {
            geometry,
            images,
            matrices,
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.images.is_empty() {
            return Err(Error::invalid("images", "stack needs at least one projection"));
        }
        if self.images.len() != self.matrices.len() {
            return Err(Error::invalid(
                "matrices",
                format!("{} images but {} matrices", self.images.len(), self.matrices.len()),
            ));
        }
        let (w, h) = (self.images[0].width, self.images[0].height);
        for (i, img) in self.images.iter().enumerate() {
            if img.width != w || img.height != h {
                return Err(Error::invalid(
                    "images",
                    format!("image {i} is {}x{}, expected {w}x{h}", img.width, img.height),
                ));
            }
            if img.is_padded() {
                return Err(Error::invalid("images", format!("image {i} is padded")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn width(&self) -> usize {
        self.images[0].width
    }

    pub fn height(&self) -> usize {
        self.images[0].height
    }

    pub fn projections(&self) -> impl Iterator<Item = (&ProjectionImage, &ProjectionMatrix)> {
        self.images.iter().zip(&self.matrices)
    }
}

/// Voxel buffer of `edge^3` values, linear index `z * edge^2 + y * edge + x`.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub geometry: VolumeGeometry,
    pub voxels: Vec<f32>,
}

impl Volume {
    pub fn zeros(geometry: VolumeGeometry) -> Self {
        Volume {
            geometry,
            voxels: vec![0.0; geometry.voxel_count()],
        }
    }

    pub fn from_voxels(geometry: VolumeGeometry, voxels: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        if voxels.len() != geometry.voxel_count() {
            return Err(Error::invalid(
                "voxels",
                format!("expected {} voxels, got {}", geometry.voxel_count(), voxels.len()),
            ));
        }
        Ok(Volume { geometry, voxels })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let l = self.geometry.edge;
        z * l * l + y * l + x
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.voxels[self.index(x, y, z)]
    }

    /// Voxel line `(z, y)`.
    pub fn line(&self, z: usize, y: usize) -> &[f32] {
        let l = self.geometry.edge;
        let start = (z * l + y) * l;
        &self.voxels[start..start + l]
    }

    pub fn line_mut(&mut self, z: usize, y: usize) -> &mut [f32] {
        let l = self.geometry.edge;
        let start = (z * l + y) * l;
        &mut self.voxels[start..start + l]
    }

    /// Sum of all voxels accumulated in double precision.
    pub fn checksum(&self) -> f64 {
        self.voxels.iter().map(|&v| v as f64).sum()
    }
}
