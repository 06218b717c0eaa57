use std::fmt;

use serde::{Deserialize, Serialize};

/// Number of distinct cache lines touched by a group of byte offsets, i.e. how
/// many times a gather loop has to re-issue its gather instruction.
pub fn count_cacheline_splits(offsets: &[u64], cl_size: u64) -> usize {
    assert!(cl_size > 0);
    let mut distinct = 0;
    for (i, &off) in offsets.iter().enumerate() {
        let line = off / cl_size;
        if !offsets[..i].iter().any(|&prev| prev / cl_size == line) {
            distinct += 1;
        }
    }
    distinct
}

const TAPS: [&str; 4] = ["bottom-left", "bottom-right", "top-left", "top-right"];

/// Gather-loop trip counts accumulated over full lane groups.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GatherStats {
    pub lanes: usize,
    pub groups: u64,
    /// Distinct cache lines summed per tap group (bottom-left, bottom-right, top-left, top-right).
    pub trips: [u64; 4],
}

impl GatherStats {
    pub(crate) fn record(&mut self, lanes: usize, trips: [u64; 4]) {
        self.lanes = lanes;
        self.groups += 1;
        for (acc, t) in self.trips.iter_mut().zip(trips) {
            *acc += t;
        }
    }

    pub fn merge(&mut self, other: &GatherStats) {
        if other.groups == 0 {
            return;
        }
        self.lanes = other.lanes;
        self.groups += other.groups;
        for (acc, t) in self.trips.iter_mut().zip(other.trips) {
            *acc += t;
        }
    }

    /// Mean distinct cache lines per tap group; each lies in `[1, lanes]`.
    pub fn mean_lines(&self) -> [f64; 4] {
        if self.groups == 0 {
            return [0.0; 4];
        }
        self.trips.map(|t| t as f64 / self.groups as f64)
    }

    /// Gather instructions per kernel iteration (all four tap groups).
    pub fn gathers_per_iteration(&self) -> f64 {
        self.mean_lines().iter().sum()
    }

    pub fn report(&self) -> GatherReport {
        GatherReport {
            lanes: self.lanes,
            groups: self.groups,
            total_trips: self.trips.iter().sum(),
            mean_lines_per_tap: self.mean_lines(),
            gathers_per_iteration: self.gathers_per_iteration(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherReport {
    pub lanes: usize,
    pub groups: u64,
    pub total_trips: u64,
    pub mean_lines_per_tap: [f64; 4],
    pub gathers_per_iteration: f64,
}

impl fmt::Display for GatherReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "gather groups      {:>14} ({} lanes)", self.groups, self.lanes)?;
        for (name, mean) in TAPS.iter().zip(self.mean_lines_per_tap) {
            writeln!(f, "  {name:<16} {mean:>8.2} cache lines / gather")?;
        }
        writeln!(f, "gathers/iteration  {:>14.2}", self.gathers_per_iteration)?;
        write!(f, "total gather trips {:>14}", self.total_trips)
    }
}
