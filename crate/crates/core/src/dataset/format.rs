// Binary stack and volume files. All fields little-endian.
//
// Stack:  "CBPS" u16 version u16 reserved u32 width u32 height u32 count
//         f64 voxel_size f64 origin u32 edge,
//         then per projection: 12 x f64 matrix coefficients, width*height x f32.
// Volume: "CBPV" u16 version u16 reserved u32 edge f64 voxel_size f64 origin,
//         then edge^3 x f32 in z-major order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{ProjectionImage, ProjectionStack, Volume};
use crate::error::{Error, Result};
use crate::geometry::{ProjectionMatrix, VolumeGeometry};

pub const STACK_MAGIC: [u8; 4] = *b"CBPS";
pub const VOLUME_MAGIC: [u8; 4] = *b"CBPV";
const VERSION: u16 = 1;

pub const STACK_HEADER_LEN: u64 = 4 + 2 + 2 + 4 + 4 + 4 + 8 + 8 + 4;
pub const VOLUME_HEADER_LEN: u64 = 4 + 2 + 2 + 4 + 8 + 8;

/// Size in bytes of a stack file holding `count` projections of `width x height`.
pub fn stack_file_len(width: u64, height: u64, count: u64) -> Option<u64> {
    let record = width.checked_mul(height)?.checked_mul(4)?.checked_add(12 * 8)?;
    record.checked_mul(count)?.checked_add(STACK_HEADER_LEN)
}

pub fn volume_file_len(edge: u64) -> Option<u64> {
    edge.checked_mul(edge)?
        .checked_mul(edge)?
        .checked_mul(4)?
        .checked_add(VOLUME_HEADER_LEN)
}

fn to_u32(field: &'static str, value: usize) -> Result<u32> {
    u32::try_from(value).map_err(|_| Error::invalid(field, format!("{value} does not fit in 32 bits")))
}

pub fn write_stack(path: impl AsRef<Path>, stack: &ProjectionStack) -> Result<()> {
    let path = path.as_ref();
    stack.validate()?;
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut header = Vec::with_capacity(STACK_HEADER_LEN as usize);
    header.extend_from_slice(&STACK_MAGIC);
    header.extend_from_slice(&VERSION.to_le_bytes());
    header.extend_from_slice(&0u16.to_le_bytes());
    header.extend_from_slice(&to_u32("width", stack.width())?.to_le_bytes());
    header.extend_from_slice(&to_u32("height", stack.height())?.to_le_bytes());
    header.extend_from_slice(&to_u32("count", stack.len())?.to_le_bytes());
    header.extend_from_slice(&stack.geometry.voxel_size.to_le_bytes());
    header.extend_from_slice(&stack.geometry.origin.to_le_bytes());
    header.extend_from_slice(&to_u32("edge", stack.geometry.edge)?.to_le_bytes());
    let write = |out: &mut BufWriter<fs::File>, bytes: &[u8]| out.write_all(bytes).map_err(|e| Error::io(path, e));
    write(&mut out, &header)?;
    let mut record = Vec::new();
    for (img, m) in stack.projections() {
        record.clear();
        for c in m.coeffs {
            record.extend_from_slice(&c.to_le_bytes());
        }
        for p in &img.pixels {
            record.extend_from_slice(&p.to_le_bytes());
        }
        write(&mut out, &record)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_volume(path: impl AsRef<Path>, volume: &Volume) -> Result<()> {
    let path = path.as_ref();
    let g = &volume.geometry;
    let mut bytes = Vec::with_capacity(VOLUME_HEADER_LEN as usize + volume.voxels.len() * 4);
    bytes.extend_from_slice(&VOLUME_MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&0u16.to_le_bytes());
    bytes.extend_from_slice(&to_u32("edge", g.edge)?.to_le_bytes());
    bytes.extend_from_slice(&g.voxel_size.to_le_bytes());
    bytes.extend_from_slice(&g.origin.to_le_bytes());
    for v in &volume.voxels {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take<const N: usize>(&mut self) -> [u8; N] {
        let out = self.bytes[self.pos..self.pos + N].try_into().unwrap();
        self.pos += N;
        out
    }
    fn u16(&mut self) -> u16 {
        u16::from_le_bytes(self.take())
    }
    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take())
    }
    fn f32(&mut self) -> f32 {
        f32::from_le_bytes(self.take())
    }
    fn f64(&mut self) -> f64 {
        f64::from_le_bytes(self.take())
    }
}

/// Checks magic, version and minimum header length.
fn open<'a>(path: &Path, bytes: &'a [u8], magic: [u8; 4], header_len: u64) -> Result<Reader<'a>> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header_len,
            found: bytes.len() as u64,
        });
    }
    let found: [u8; 4] = bytes[..4].try_into().unwrap();
    if found != magic {
        return Err(Error::BadMagic {
            path: path.into(),
            expected: magic,
            found,
        });
    }
    if (bytes.len() as u64) < header_len {
        return Err(Error::Truncated {
            path: path.into(),
            expected: header_len,
            found: bytes.len() as u64,
        });
    }
    let mut r = Reader { bytes, pos: 4 };
    let version = r.u16();
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            path: path.into(),
            expected: VERSION,
            found: version,
        });
    }
    let _reserved = r.u16();
    Ok(r)
}

fn check_len(path: &Path, expected: Option<u64>, found: usize) -> Result<()> {
    let expected = expected.ok_or_else(|| Error::invalid("header", "declared payload size overflows"))?;
    let found = found as u64;
    if found < expected {
        return Err(Error::Truncated {
            path: path.into(),
            expected,
            found,
        });
    }
    if found > expected {
        return Err(Error::invalid(
            "payload",
            format!("{} trailing bytes after {expected}-byte payload", found - expected),
        ));
    }
    Ok(())
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<ProjectionStack> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open(path, &bytes, STACK_MAGIC, STACK_HEADER_LEN)?;
    let width = r.u32() as usize;
    let height = r.u32() as usize;
    let count = r.u32() as usize;
    let voxel_size = r.f64();
    let origin = r.f64();
    let edge = r.u32() as usize;
    check_len(
        path,
        stack_file_len(width as u64, height as u64, count as u64),
        bytes.len(),
    )?;
    let geometry = VolumeGeometry::new(edge, voxel_size, origin)?;
    let mut images = Vec::with_capacity(count);
    let mut matrices = Vec::with_capacity(count);
    for _ in 0..count {
        let coeffs: [f64; 12] = std::array::from_fn(|_| r.f64());
        matrices.push(ProjectionMatrix::new(coeffs)?);
        let pixels = (0..width * height).map(|_| r.f32()).collect();
        images.push(ProjectionImage::new(width, height, pixels)?);
    }
    ProjectionStack::new(geometry, images, matrices)
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut r = open(path, &bytes, VOLUME_MAGIC, VOLUME_HEADER_LEN)?;
    let edge = r.u32() as usize;
    let voxel_size = r.f64();
    let origin = r.f64();
    check_len(path, volume_file_len(edge as u64), bytes.len())?;
    let geometry = VolumeGeometry::new(edge, voxel_size, origin)?;
    let voxels = (0..geometry.voxel_count()).map(|_| r.f32()).collect();
    Volume::from_voxels(geometry, voxels)
}
