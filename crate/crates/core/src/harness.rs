//! Benchmark harness: image-quality metrics against a reference volume,
//! GUp/s reporting, and timed runs of the optimized reconstruction.
//!
//! No ground-truth volume exists for synthetic scans, so the reference is
//! always the output of [`reconstruct_reference`] on the same stack. It is
//! cached next to the stack, keyed by a hash of the stack file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dataset::{read_stack, read_volume, write_volume, Volume};
use crate::error::{Error, Result};
use crate::kernel_opt::{prepare, OptimizedOptions};
use crate::kernel_ref::reconstruct_reference;

/// Environment variable overriding the worker count.
pub const THREADS_ENV: &str = "CONEBEAM_THREADS";

/// Worker count from `CONEBEAM_THREADS`, or `default` when unset.
pub fn workers_from_env(default: usize) -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Err(_) => Ok(default),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::invalid(
                "CONEBEAM_THREADS",
                format!("expected a positive integer, got {s:?}"),
            )),
        },
    }
}

/// Giga voxel updates per second.
pub fn gups(voxel_updates: f64, seconds: f64) -> f64 {
    voxel_updates / seconds / 1e9
}

/// Rounds to one decimal, the precision GUp/s and model outputs are reported at.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Quality {
    pub mse: f64,
    /// `+inf` when the volumes are identical.
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
}

fn ser_db<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn de_db<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Db {
        Num(f64),
        Text(String),
    }
    match Db::deserialize(d)? {
        Db::Num(v) => Ok(v),
        Db::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Db::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
        Db::Text(t) => Err(serde::de::Error::custom(format!("bad PSNR {t:?}"))),
    }
}

/// Mean squared error and peak signal-to-noise ratio (peak = largest
/// reference magnitude), accumulated in double precision.
pub fn quality_metrics(test: &Volume, reference: &Volume) -> Result<Quality> {
    if test.geometry != reference.geometry {
        return Err(Error::invalid("geometry", "volumes have different geometry"));
    }
    let n = test.voxels.len() as f64;
    let mse = test
        .voxels
        .iter()
        .zip(&reference.voxels)
        .map(|(&t, &r)| (t as f64 - r as f64).powi(2))
        .sum::<f64>()
        / n;
    let peak = reference.voxels.iter().map(|v| (*v as f64).abs()).fold(0.0, f64::max);
    let psnr_db = if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    };
    Ok(Quality { mse, psnr_db })
}

/// Largest per-voxel `|test - ref| / (|ref| + 1e-6)`.
pub fn max_relative_error(test: &Volume, reference: &Volume) -> Result<f64> {
    if test.geometry != reference.geometry {
        return Err(Error::invalid("geometry", "volumes have different geometry"));
    }
    Ok(test
        .voxels
        .iter()
        .zip(&reference.voxels)
        .map(|(&t, &r)| ((t - r).abs() / (r.abs() + 1e-6)) as f64)
        .fold(0.0, f64::max))
}

/// Per-voxel tolerance of optimized kernels against the reference.
pub const KERNEL_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub max_rel_err: f64,
    pub tolerance: f64,
    pub voxels_over_tolerance: u64,
    pub pass: bool,
}

pub fn verify_volumes(test: &Volume, reference: &Volume) -> Result<VerifyReport> {
    let max_rel_err = max_relative_error(test, reference)?;
    let voxels_over_tolerance = test
        .voxels
        .iter()
        .zip(&reference.voxels)
        .filter(|(&t, &r)| ((t - r).abs() / (r.abs() + 1e-6)) as f64 > KERNEL_TOLERANCE)
        .count() as u64;
    Ok(VerifyReport {
        max_rel_err,
        tolerance: KERNEL_TOLERANCE,
        voxels_over_tolerance,
        pass: max_rel_err <= KERNEL_TOLERANCE,
    })
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pass {
            write!(f, "PASS max_rel_err {:.3e} <= {:.0e}", self.max_rel_err, self.tolerance)
        } else {
            write!(
                f,
                "FAIL max_rel_err {:.3e} > {:.0e} ({} voxels over tolerance)",
                self.max_rel_err, self.tolerance, self.voxels_over_tolerance
            )
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchOptions {
    pub kernel: OptimizedOptions,
    /// Count clip-mask and padding setup in `wall_seconds`.
    pub include_prepare: bool,
    /// Where reference volumes are cached; defaults to the stack's directory.
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub stack: PathBuf,
    pub edge: usize,
    pub projections: usize,
    /// What `wall_seconds` covers: `kernel` or `kernel+prepare`.
    pub timed: String,
    pub wall_seconds: f64,
    pub prepare_seconds: f64,
    pub kernel_seconds: f64,
    pub voxel_updates: u64,
    /// `clipped` (clip-mask voxels only) or `full` (every voxel every projection).
    pub updates_counted: String,
    pub gups: f64,
    pub mse: f64,
    #[serde(serialize_with = "ser_db", deserialize_with = "de_db")]
    pub psnr_db: f64,
    pub max_rel_err: f64,
    pub reference: PathBuf,
    pub options: OptimizedOptions,
}

impl fmt::Display for BenchResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "stack        {} ({}^3, {} projections)",
            self.stack.display(),
            self.edge,
            self.projections
        )?;
        writeln!(
            f,
            "kernel       W={} workers={} chunk={} clip={} pad={} reciprocal={}",
            self.options.lanes,
            self.options.workers,
            self.options.chunk_size,
            self.options.use_clip,
            self.options.use_pad,
            self.options.reciprocal
        )?;
        writeln!(f, "prepare      {:.4} s", self.prepare_seconds)?;
        writeln!(f, "kernel       {:.4} s", self.kernel_seconds)?;
        writeln!(f, "timed ({})  {:.4} s", self.timed, self.wall_seconds)?;
        writeln!(f, "updates      {} ({})", self.voxel_updates, self.updates_counted)?;
        writeln!(f, "performance  {:.1} GUp/s", round1(self.gups))?;
        writeln!(f, "mse          {:.3e}", self.mse)?;
        if self.psnr_db.is_finite() {
            writeln!(f, "psnr         {:.1} dB", self.psnr_db)?;
        } else {
            writeln!(f, "psnr         inf (identical)")?;
        }
        write!(f, "max rel err  {:.3e}", self.max_rel_err)
    }
}

fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}

/// Reference volume for a stack file, computed once and cached as `<stem>.ref-<hash>.cbpv`.
pub fn cached_reference(stack_path: &Path, cache_dir: Option<&Path>) -> Result<(Volume, PathBuf)> {
    let digest = file_digest(stack_path)?;
    let dir = match cache_dir {
        Some(d) => d.to_path_buf(),
        None => stack_path.parent().map(Path::to_path_buf).unwrap_or_default(),
    };
    let stem = stack_path.file_stem().and_then(|s| s.to_str()).unwrap_or("stack");
    let path = dir.join(format!("{stem}.ref-{digest}.cbpv"));
    if path.exists() {
        return Ok((read_volume(&path)?, path));
    }
    let stack = read_stack(stack_path)?;
    let mut vol = Volume::zeros(stack.geometry);
    reconstruct_reference(&mut vol, &stack)?;
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_volume(&path, &vol)?;
    Ok((vol, path))
}

/// Loads the stack, times the optimized reconstruction and scores it against the reference.
pub fn run_benchmark(stack_path: impl AsRef<Path>, options: &BenchOptions) -> Result<BenchResult> {
    let stack_path = stack_path.as_ref();
    let stack = read_stack(stack_path)?;
    let (reference, reference_path) = cached_reference(stack_path, options.cache_dir.as_deref())?;

    let mut vol = Volume::zeros(stack.geometry);
    let t0 = Instant::now();
    let prepared = prepare(&stack, &options.kernel)?;
    let prepare_seconds = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    prepared.execute(&mut vol)?;
    let kernel_seconds = t1.elapsed().as_secs_f64();

    let wall_seconds = if options.include_prepare {
        prepare_seconds + kernel_seconds
    } else {
        kernel_seconds
    };
    let voxel_updates = prepared.voxel_updates();
    let quality = quality_metrics(&vol, &reference)?;
    Ok(BenchResult {
        stack: stack_path.to_path_buf(),
        edge: stack.geometry.edge,
        projections: stack.len(),
        timed: if options.include_prepare {
            "kernel+prepare"
        } else {
            "kernel"
        }
        .into(),
        wall_seconds,
        prepare_seconds,
        kernel_seconds,
        voxel_updates,
        updates_counted: if options.kernel.use_clip { "clipped" } else { "full" }.into(),
        gups: gups(voxel_updates as f64, wall_seconds),
        mse: quality.mse,
        psnr_db: quality.psnr_db,
        max_rel_err: max_relative_error(&vol, &reference)?,
        reference: reference_path,
        options: options.kernel.clone(),
    })
}
