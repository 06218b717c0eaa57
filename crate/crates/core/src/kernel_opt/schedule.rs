use serde::Serialize;

use crate::error::{Error, Result};

/// Chunk size (voxel lines) tuned for 240 hardware threads on a 512^3 volume,
/// about half a plane.
pub const DEFAULT_CHUNK_SIZE: usize = 262;

/// Static round-robin assignment of chunks of the collapsed `(z, y)` line
/// index space: chunk `i` covers lines `[i * chunk_size, ...)` and goes to
/// worker `i % workers`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChunkPlan {
    pub lines: usize,
    pub chunk_size: usize,
    pub workers: usize,
    /// `(first_line, count)` per chunk, in line order.
    pub chunks: Vec<(usize, usize)>,
}

pub fn make_chunk_plan(edge: usize, chunk_size: usize, workers: usize) -> Result<ChunkPlan> {
    if chunk_size == 0 {
        return Err(Error::invalid("chunk_size", "must be at least 1"));
    }
    if workers == 0 {
        return Err(Error::invalid("workers", "must be at least 1"));
    }
    let lines = edge * edge;
    let chunks = (0..lines)
        .step_by(chunk_size)
        .map(|first| (first, chunk_size.min(lines - first)))
        .collect();
    Ok(ChunkPlan {
        lines,
        chunk_size,
        workers,
        chunks,
    })
}

impl ChunkPlan {
    pub fn worker_of(&self, chunk: usize) -> usize {
        chunk % self.workers
    }

    /// Chunks owned by `worker`, in order.
    pub fn chunks_of(&self, worker: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.chunks.iter().copied().skip(worker).step_by(self.workers)
    }

    /// Line indices owned by `worker`, in order.
    pub fn lines_of(&self, worker: usize) -> impl Iterator<Item = usize> + '_ {
        self.chunks_of(worker).flat_map(|(first, count)| first..first + count)
    }

    /// Owner of every line.
    pub fn owners(&self) -> Vec<usize> {
        let mut owner = vec![0; self.lines];
        for (i, &(first, count)) in self.chunks.iter().enumerate() {
            owner[first..first + count].fill(self.worker_of(i));
        }
        owner
    }
}
