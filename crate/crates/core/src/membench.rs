//! Host micro-benchmarks mirroring the two measurements the model is built
//! on: streaming-update bandwidth over a thread-count sweep, and the cost of
//! 16-element gathers as a function of how many cache lines they touch.
//!
//! Results are wall-clock nanoseconds; converting to cycles needs a clock
//! supplied by the caller.

use std::fmt;
use std::hint::black_box;
use std::sync::Barrier;
use std::thread;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel_opt::count_cacheline_splits;
use crate::perfmodel::{GatherLatency, DISTRIBUTIONS};

const GIB: f64 = (1u64 << 30) as f64;
const CL_BYTES: usize = 64;
const GROUP: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamConfig {
    /// Should be at least four times the last-level cache.
    pub buffer_bytes: usize,
    pub thread_counts: Vec<usize>,
    pub reps: usize,
    pub warmup: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        StreamConfig {
            buffer_bytes: 1 << 30,
            thread_counts: (1..=crate::kernel_opt::default_workers()).collect(),
            reps: 10,
            warmup: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamPoint {
    pub threads: usize,
    pub bytes_moved: u64,
    pub seconds: f64,
    pub gibs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub buffer_bytes: usize,
    pub points: Vec<StreamPoint>,
    /// Every element was incremented exactly once per pass.
    pub checksum_ok: bool,
}

impl StreamReport {
    pub fn peak_gibs(&self) -> f64 {
        self.points.iter().map(|p| p.gibs).fold(0.0, f64::max)
    }
}

/// Bytes a streaming update moves: every element is read and written once per rep.
pub fn stream_bytes(buffer_bytes: usize, reps: usize) -> u64 {
    2 * buffer_bytes as u64 * reps as u64
}

/// Read-modify-write sweeps (`a[i] += 1`) over disjoint per-thread slices.
pub fn stream_update_bench(config: &StreamConfig) -> Result<StreamReport> {
    let elements = config.buffer_bytes / std::mem::size_of::<f32>();
    if elements == 0 {
        return Err(Error::invalid("buffer_bytes", "buffer must hold at least one element"));
    }
    if config.reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    if config.thread_counts.contains(&0) || config.thread_counts.is_empty() {
        return Err(Error::invalid("threads", "thread counts must be at least 1"));
    }
    let mut buffer: Vec<f32> = Vec::new();
    buffer.try_reserve_exact(elements).map_err(|e| {
        Error::invalid(
            "buffer_bytes",
            format!("cannot allocate {} bytes: {e}", config.buffer_bytes),
        )
    })?;
    buffer.resize(elements, 0.0);

    let mut points = Vec::new();
    for &threads in &config.thread_counts {
        let chunk = elements.div_ceil(threads);
        let barrier = Barrier::new(elements.div_ceil(chunk));
        let seconds = thread::scope(|scope| {
            let handles: Vec<_> = buffer
                .chunks_mut(chunk)
                .map(|part| {
                    let barrier = &barrier;
                    scope.spawn(move || {
                        for _ in 0..config.warmup {
                            update(part);
                        }
                        barrier.wait();
                        let t = Instant::now();
                        for _ in 0..config.reps {
                            update(part);
                        }
                        let elapsed = t.elapsed().as_secs_f64();
                        barrier.wait();
                        elapsed
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("stream worker panicked"))
                .fold(0.0, f64::max)
        });
        let bytes_moved = stream_bytes(elements * 4, config.reps);
        points.push(StreamPoint {
            threads,
            bytes_moved,
            seconds,
            gibs: bytes_moved as f64 / seconds / GIB,
        });
    }
    let passes = (config.thread_counts.len() * (config.reps + config.warmup)) as f32;
    let checksum_ok = buffer.iter().all(|&v| v == passes);
    Ok(StreamReport {
        buffer_bytes: elements * 4,
        points,
        checksum_ok,
    })
}

#[inline(never)]
fn update(part: &mut [f32]) {
    for v in part.iter_mut() {
        *v += 1.0;
    }
    black_box(part);
}

impl fmt::Display for StreamReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "streaming update, {} MiB buffer", self.buffer_bytes >> 20)?;
        writeln!(f, "{:>8} {:>12} {:>10}", "threads", "seconds", "GiB/s")?;
        for p in &self.points {
            writeln!(f, "{:>8} {:>12.4} {:>10.2}", p.threads, p.seconds, p.gibs)?;
        }
        write!(f, "checksum {}", if self.checksum_ok { "ok" } else { "MISMATCH" })
    }
}

/// Element indices for `groups` gathers of 16 elements, each spread
/// `elements_per_cl` per cache line so that a group touches
/// `ceil(16 / elements_per_cl)` distinct lines, cycling through `working_set_lines` lines.
pub fn gather_offsets(elements_per_cl: usize, groups: usize, working_set_lines: usize) -> Vec<[u32; GROUP]> {
    assert!((1..=GROUP).contains(&elements_per_cl));
    let per_line = CL_BYTES / std::mem::size_of::<f32>();
    let lines_per_group = GROUP.div_ceil(elements_per_cl);
    assert!(working_set_lines >= lines_per_group);
    let slots = working_set_lines / lines_per_group;
    (0..groups)
        .map(|g| {
            let first_line = (g % slots) * lines_per_group;
            std::array::from_fn(|j| {
                let line = first_line + j / elements_per_cl;
                (line * per_line + j % elements_per_cl) as u32
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherBenchConfig {
    pub l1_bytes: usize,
    pub l2_bytes: usize,
    pub reps: usize,
    pub warmup: usize,
    /// Converts ns to cycles in the report when given.
    pub clock_ghz: Option<f64>,
}

impl Default for GatherBenchConfig {
    fn default() -> Self {
        GatherBenchConfig {
            l1_bytes: 16 << 10,
            l2_bytes: 512 << 10,
            reps: 200,
            warmup: 3,
            clock_ghz: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherRow {
    pub elements_per_cl: u32,
    pub lines_per_group: u32,
    pub l1_ns_per_group: f64,
    pub l2_ns_per_group: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherTable {
    pub l1_bytes: usize,
    pub l2_bytes: usize,
    pub clock_ghz: Option<f64>,
    pub rows: Vec<GatherRow>,
}

impl GatherTable {
    /// Per-instruction cycle latencies in the model's table layout (loop
    /// time divided by lines touched). Needs a clock.
    pub fn as_gather_latencies(&self) -> Option<Vec<GatherLatency>> {
        let clock = self.clock_ghz?;
        Some(
            self.rows
                .iter()
                .map(|r| GatherLatency {
                    elements_per_cl: r.elements_per_cl,
                    l1_cycles: r.l1_ns_per_group * clock / r.lines_per_group as f64,
                    l2_cycles: r.l2_ns_per_group * clock / r.lines_per_group as f64,
                })
                .collect(),
        )
    }
}

/// Times 16-element indexed loads for every distribution at an L1-sized and
/// an L2-sized working set.
pub fn gather_pattern_bench(config: &GatherBenchConfig) -> Result<GatherTable> {
    if config.reps == 0 {
        return Err(Error::invalid("reps", "must be at least 1"));
    }
    for (field, bytes) in [("l1_bytes", config.l1_bytes), ("l2_bytes", config.l2_bytes)] {
        if bytes < GROUP * CL_BYTES {
            return Err(Error::invalid(
                field,
                format!("working set must be at least {} bytes", GROUP * CL_BYTES),
            ));
        }
    }
    let mut rows = Vec::new();
    for e in DISTRIBUTIONS {
        let l1 = time_gathers(e as usize, config.l1_bytes, config)?;
        let l2 = time_gathers(e as usize, config.l2_bytes, config)?;
        rows.push(GatherRow {
            elements_per_cl: e,
            lines_per_group: GROUP.div_ceil(e as usize) as u32,
            l1_ns_per_group: l1,
            l2_ns_per_group: l2,
        });
    }
    Ok(GatherTable {
        l1_bytes: config.l1_bytes,
        l2_bytes: config.l2_bytes,
        clock_ghz: config.clock_ghz,
        rows,
    })
}

fn time_gathers(elements_per_cl: usize, working_set: usize, config: &GatherBenchConfig) -> Result<f64> {
    let lines = working_set / CL_BYTES;
    let lines_per_group = GROUP.div_ceil(elements_per_cl);
    let groups = lines / lines_per_group;
    let mut offsets = gather_offsets(elements_per_cl, groups, lines);
    // Random group order defeats the stride prefetchers.
    offsets.shuffle(&mut ChaCha8Rng::seed_from_u64(0x6761_7468));
    for group in &offsets {
        let bytes: Vec<u64> = group.iter().map(|&i| i as u64 * 4).collect();
        debug_assert_eq!(count_cacheline_splits(&bytes, CL_BYTES as u64), lines_per_group);
    }
    let data: Vec<f32> = (0..lines * CL_BYTES / 4).map(|i| (i % 7) as f32).collect();
    let sweep = |offsets: &[[u32; GROUP]]| {
        let mut acc = [0.0f32; GROUP];
        for group in offsets {
            for (a, &i) in acc.iter_mut().zip(group) {
                *a += data[i as usize];
            }
        }
        black_box(acc);
    };
    for _ in 0..config.warmup {
        sweep(&offsets);
    }
    let t = Instant::now();
    for _ in 0..config.reps {
        sweep(black_box(&offsets));
    }
    let ns = t.elapsed().as_nanos() as f64;
    Ok(ns / (config.reps * offsets.len()) as f64)
}

impl fmt::Display for GatherTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let unit = if self.clock_ghz.is_some() { "cycles" } else { "ns" };
        let scale = self.clock_ghz.unwrap_or(1.0);
        writeln!(
            f,
            "16-element gather loop, {unit} per group (L1 set {} KiB, L2 set {} KiB)",
            self.l1_bytes >> 10,
            self.l2_bytes >> 10
        )?;
        writeln!(f, "{:<14} {:>10} {:>10}", "distribution", "L1", "L2")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<14} {:>10.2} {:>10.2}",
                format!("{} per CL", r.elements_per_cl),
                r.l1_ns_per_group * scale,
                r.l2_ns_per_group * scale
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_accounting() {
        assert_eq!(stream_bytes(1 << 30, 10), 20 << 30);
    }

    #[test]
    fn stream_checksum_and_disjoint_partitions() {
        let cfg = StreamConfig {
            buffer_bytes: 1 << 20,
            thread_counts: vec![1, 3, 4],
            reps: 2,
            warmup: 1,
        };
        let report = stream_update_bench(&cfg).unwrap();
        assert!(report.checksum_ok);
        assert_eq!(report.points.len(), 3);
        for p in &report.points {
            assert_eq!(p.bytes_moved, stream_bytes(1 << 20, 2));
            assert!(p.gibs > 0.0 && p.gibs.is_finite());
        }
        assert!(report.to_string().contains("checksum ok"));
    }

    #[test]
    fn stream_rejects_bad_config() {
        let bad = StreamConfig {
            buffer_bytes: 0,
            ..StreamConfig::default()
        };
        assert!(stream_update_bench(&bad).is_err());
        let bad = StreamConfig {
            buffer_bytes: 1024,
            thread_counts: vec![0],
            reps: 1,
            warmup: 0,
        };
        assert!(stream_update_bench(&bad).is_err());
    }

    #[test]
    fn gather_layout_touches_expected_lines() {
        for e in DISTRIBUTIONS {
            let e = e as usize;
            for group in gather_offsets(e, 100, 512) {
                let bytes: Vec<u64> = group.iter().map(|&i| i as u64 * 4).collect();
                assert_eq!(count_cacheline_splits(&bytes, 64), 16usize.div_ceil(e));
            }
        }
        let four = gather_offsets(4, 1, 64);
        let bytes: Vec<u64> = four[0].iter().map(|&i| i as u64 * 4).collect();
        assert_eq!(count_cacheline_splits(&bytes, 64), 4);
    }

    #[test]
    fn gather_table_shape() {
        let cfg = GatherBenchConfig {
            l1_bytes: 4 << 10,
            l2_bytes: 64 << 10,
            reps: 3,
            warmup: 1,
            clock_ghz: Some(2.0),
        };
        let table = gather_pattern_bench(&cfg).unwrap();
        assert_eq!(table.rows.len(), 5);
        assert_eq!(
            table.rows.iter().map(|r| r.elements_per_cl).collect::<Vec<_>>(),
            DISTRIBUTIONS.to_vec()
        );
        let lat = table.as_gather_latencies().unwrap();
        assert_eq!(lat.len(), 5);
        assert!(table.to_string().contains("1 per CL"));
    }
}
