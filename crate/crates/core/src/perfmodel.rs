//! Analytical runtime model of the line update kernel.
//!
//! One kernel iteration updates one cache line of voxels. Its cost is the
//! in-core execution time with all data in L1 (gather-less instructions plus
//! the gather instructions, priced from a measured latency table) plus the
//! time to bring the projection data that misses L1 in from L2. Volume
//! traffic is assumed fully hidden by prefetching and only enters the
//! bandwidth-demand check.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Elements-per-cache-line distributions covered by a complete gather table.
pub const DISTRIBUTIONS: [u32; 5] = [16, 8, 4, 2, 1];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CacheLevel {
    L1,
    L2,
}

impl fmt::Display for CacheLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CacheLevel::L1 => "L1",
            CacheLevel::L2 => "L2",
        })
    }
}

/// Latency of one gather instruction when the lanes' data is spread
/// `elements_per_cl` per cache line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GatherLatency {
    pub elements_per_cl: u32,
    pub l1_cycles: f64,
    pub l2_cycles: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MachineModel {
    #[serde(default)]
    pub name: String,
    pub cores: u32,
    /// Core clock used to convert cycles to seconds.
    pub clock_ghz: f64,
    /// Core clock used for the bandwidth-demand estimate; defaults to `clock_ghz`.
    #[serde(default)]
    pub bandwidth_clock_ghz: Option<f64>,
    pub cl_bytes: u32,
    /// Elements one gather instruction fetches at most.
    pub vector_lanes: u32,
    pub gather_table: Vec<GatherLatency>,
    /// Measured streaming-update bandwidth, GiB/s.
    pub sustained_bw_gibs: f64,
    /// A single hardware thread issues at most every `issue_slots_per_thread` cycles.
    pub issue_slots_per_thread: f64,
}

impl MachineModel {
    pub fn validate(&self) -> Result<()> {
        let positive = |what: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Model(format!("{what} must be positive, got {v}")))
            }
        };
        positive("cores", self.cores as f64)?;
        positive("clock_ghz", self.clock_ghz)?;
        if let Some(c) = self.bandwidth_clock_ghz {
            positive("bandwidth_clock_ghz", c)?;
        }
        positive("cl_bytes", self.cl_bytes as f64)?;
        positive("vector_lanes", self.vector_lanes as f64)?;
        positive("sustained_bw_gibs", self.sustained_bw_gibs)?;
        positive("issue_slots_per_thread", self.issue_slots_per_thread)?;
        for e in DISTRIBUTIONS {
            let row = self
                .gather_row(e)
                .ok_or_else(|| Error::Model(format!("gather table lacks the {e}-per-CL row")))?;
            positive("gather latency", row.l1_cycles)?;
            positive("gather latency", row.l2_cycles)?;
            if row.l2_cycles < row.l1_cycles {
                return Err(Error::Model(format!("{e}-per-CL row has L2 latency below L1 latency")));
            }
        }
        Ok(())
    }

    fn gather_row(&self, elements_per_cl: u32) -> Option<&GatherLatency> {
        self.gather_table.iter().find(|r| r.elements_per_cl == elements_per_cl)
    }

    pub fn bandwidth_clock_ghz(&self) -> f64 {
        self.bandwidth_clock_ghz.unwrap_or(self.clock_ghz)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelModel {
    #[serde(default)]
    pub name: String,
    /// Cycles per iteration with every gather removed.
    pub gatherless_cycles: f64,
    /// Gather instructions issued per iteration, all tap groups together.
    pub gathers_per_iteration: f64,
    /// Typical elements per cache line a gather sees.
    pub elements_per_cl: u32,
    /// Fraction of projection-data gathers served from L1.
    pub l1_hit_fraction: f64,
    /// Volume bytes moved through memory per iteration (load + evict).
    pub bytes_mem_per_iteration: f64,
    pub voxels_per_iteration: f64,
    /// Runtime spent outside the line update kernel.
    pub overhead_seconds: f64,
    pub total_voxel_updates: f64,
    /// Round the per-iteration cycle count to whole cycles before deriving
    /// bandwidth and runtime.
    #[serde(default)]
    pub round_cycles: bool,
    #[serde(default)]
    pub measured_seconds: Option<f64>,
}

impl KernelModel {
    pub fn validate(&self) -> Result<()> {
        let non_negative = |what: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::Model(format!("{what} must be non-negative, got {v}")))
            }
        };
        non_negative("gatherless_cycles", self.gatherless_cycles)?;
        non_negative("gathers_per_iteration", self.gathers_per_iteration)?;
        non_negative("bytes_mem_per_iteration", self.bytes_mem_per_iteration)?;
        non_negative("overhead_seconds", self.overhead_seconds)?;
        non_negative("total_voxel_updates", self.total_voxel_updates)?;
        if !(self.voxels_per_iteration.is_finite() && self.voxels_per_iteration > 0.0) {
            return Err(Error::Model("voxels_per_iteration must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.l1_hit_fraction) {
            return Err(Error::Model(format!(
                "l1_hit_fraction must lie in [0, 1], got {}",
                self.l1_hit_fraction
            )));
        }
        if let Some(m) = self.measured_seconds {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::Model("measured_seconds must be positive".into()));
            }
        }
        Ok(())
    }
}

pub fn load_machine(path: impl AsRef<Path>) -> Result<MachineModel> {
    let m: MachineModel = load_json(path.as_ref())?;
    m.validate()?;
    Ok(m)
}

pub fn load_kernel(path: impl AsRef<Path>) -> Result<KernelModel> {
    let k: KernelModel = load_json(path.as_ref())?;
    k.validate()?;
    Ok(k)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

/// Latency of one gather instruction.
pub fn gather_latency(m: &MachineModel, elements_per_cl: u32, level: CacheLevel) -> Result<f64> {
    let row = m
        .gather_row(elements_per_cl)
        .ok_or_else(|| Error::Model(format!("no gather latency for {elements_per_cl} elements per CL")))?;
    Ok(match level {
        CacheLevel::L1 => row.l1_cycles,
        CacheLevel::L2 => row.l2_cycles,
    })
}

/// Latency of a full gather loop: one instruction per cache line touched.
pub fn gather_loop_latency(m: &MachineModel, elements_per_cl: u32, level: CacheLevel) -> Result<f64> {
    let per_instruction = gather_latency(m, elements_per_cl, level)?;
    Ok(per_instruction * (m.vector_lanes as f64 / elements_per_cl as f64))
}

/// Gather-less work divided out from a single-thread timing of a whole voxel line.
pub fn gatherless_from_line_timing(
    line_cycles: f64,
    voxels_per_line: f64,
    voxels_per_iteration: f64,
    issue_slots_per_thread: f64,
) -> f64 {
    line_cycles / (voxels_per_line / voxels_per_iteration) / issue_slots_per_thread
}

/// Cycles the gather instructions of one iteration add, all data in L1.
pub fn gather_cycles(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    Ok(k.gathers_per_iteration * gather_latency(m, k.elements_per_cl, CacheLevel::L1)?)
}

/// In-core cycles per iteration with all data in L1.
pub fn core_execution_cycles(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    Ok(k.gatherless_cycles + gather_cycles(k, m)?)
}

/// Bytes per cycle delivered from L2 to gathers, taking the L2-minus-L1
/// latency difference as the pure transfer cost of one cache line.
pub fn effective_l2_bandwidth(m: &MachineModel, elements_per_cl: u32) -> Result<f64> {
    let l1 = gather_latency(m, elements_per_cl, CacheLevel::L1)?;
    let l2 = gather_latency(m, elements_per_cl, CacheLevel::L2)?;
    let transfer = l2 - l1;
    if transfer <= 0.0 {
        return Err(Error::Model(format!(
            "L2 and L1 gather latencies for {elements_per_cl} per CL leave no transfer time ({l2} - {l1})"
        )));
    }
    Ok(m.cl_bytes as f64 / transfer)
}

/// Projection bytes per iteration that come from L2.
pub fn l2_bytes_per_iteration(k: &KernelModel, m: &MachineModel) -> f64 {
    k.gathers_per_iteration * m.cl_bytes as f64 * (1.0 - k.l1_hit_fraction)
}

pub fn memory_subsystem_cycles(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    let bytes = l2_bytes_per_iteration(k, m);
    if bytes == 0.0 {
        return Ok(0.0);
    }
    Ok(bytes / effective_l2_bandwidth(m, k.elements_per_cl)?)
}

pub fn total_cycles_per_iteration(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    Ok(core_execution_cycles(k, m)? + memory_subsystem_cycles(k, m)?)
}

/// Cycle count used for bandwidth and runtime: the total, rounded to whole
/// cycles if the kernel model asks for it.
pub fn accounted_cycles_per_iteration(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    let total = total_cycles_per_iteration(k, m)?;
    Ok(if k.round_cycles { total.round() } else { total })
}

const GIB: f64 = (1u64 << 30) as f64;

/// Memory bandwidth all cores together need to sustain the modeled iteration rate, GiB/s.
pub fn required_bandwidth(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    let cycles = accounted_cycles_per_iteration(k, m)?;
    if cycles <= 0.0 {
        return Err(Error::Model("iteration takes no cycles".into()));
    }
    let iterations_per_second = m.bandwidth_clock_ghz() * 1e9 / cycles * m.cores as f64;
    Ok(iterations_per_second * k.bytes_mem_per_iteration / GIB)
}

/// Seconds the line update kernel takes for all voxel updates.
pub fn kernel_seconds(k: &KernelModel, m: &MachineModel) -> Result<f64> {
    let cycles = accounted_cycles_per_iteration(k, m)?;
    let iterations = k.total_voxel_updates / k.voxels_per_iteration;
    Ok(iterations * cycles / (m.cores as f64 * m.clock_ghz * 1e9))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelReport {
    pub machine: String,
    pub kernel: String,
    pub gatherless_cycles: f64,
    pub gather_cycles: f64,
    pub core_cycles: f64,
    pub l2_bytes_per_iteration: f64,
    pub effective_l2_bytes_per_cycle: f64,
    pub mem_cycles: f64,
    pub total_cycles_per_iteration: f64,
    pub accounted_cycles_per_iteration: f64,
    pub required_bw_gibs: f64,
    pub sustained_bw_gibs: f64,
    pub bandwidth_feasible: bool,
    pub kernel_seconds: f64,
    pub overhead_seconds: f64,
    pub total_seconds: f64,
    pub measured_seconds: Option<f64>,
    pub model_error_fraction: Option<f64>,
}

/// Full model evaluation. `measured_seconds` overrides the kernel model's own.
pub fn predict_runtime(k: &KernelModel, m: &MachineModel, measured_seconds: Option<f64>) -> Result<ModelReport> {
    k.validate()?;
    m.validate()?;
    let measured_seconds = measured_seconds.or(k.measured_seconds);
    if let Some(s) = measured_seconds {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Model("measured_seconds must be positive".into()));
        }
    }
    let core_cycles = core_execution_cycles(k, m)?;
    let mem_cycles = memory_subsystem_cycles(k, m)?;
    let required_bw_gibs = required_bandwidth(k, m)?;
    let kernel_seconds = kernel_seconds(k, m)?;
    let total_seconds = kernel_seconds + k.overhead_seconds;
    Ok(ModelReport {
        machine: m.name.clone(),
        kernel: k.name.clone(),
        gatherless_cycles: k.gatherless_cycles,
        gather_cycles: gather_cycles(k, m)?,
        core_cycles,
        l2_bytes_per_iteration: l2_bytes_per_iteration(k, m),
        effective_l2_bytes_per_cycle: effective_l2_bandwidth(m, k.elements_per_cl)?,
        mem_cycles,
        total_cycles_per_iteration: core_cycles + mem_cycles,
        accounted_cycles_per_iteration: accounted_cycles_per_iteration(k, m)?,
        required_bw_gibs,
        sustained_bw_gibs: m.sustained_bw_gibs,
        bandwidth_feasible: required_bw_gibs <= m.sustained_bw_gibs,
        kernel_seconds,
        overhead_seconds: k.overhead_seconds,
        total_seconds,
        measured_seconds,
        model_error_fraction: measured_seconds.map(|s| (s - total_seconds).abs() / s),
    })
}

impl fmt::Display for ModelReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let title = match (self.kernel.is_empty(), self.machine.is_empty()) {
            (false, false) => format!("{} on {}", self.kernel, self.machine),
            (false, true) => self.kernel.clone(),
            (true, false) => self.machine.clone(),
            (true, true) => "performance model".into(),
        };
        writeln!(f, "{title}")?;
        let rows: [(&str, String, &str); 12] = [
            (
                "gather-less execution",
                format!("{:.1}", self.gatherless_cycles),
                "cycles/it",
            ),
            ("gather instructions", format!("{:.1}", self.gather_cycles), "cycles/it"),
            ("core execution", format!("{:.1}", self.core_cycles), "cycles/it"),
            (
                "projection data from L2",
                format!("{:.1}", self.l2_bytes_per_iteration),
                "byte/it",
            ),
            (
                "effective L2 bandwidth",
                format!("{:.2}", self.effective_l2_bytes_per_cycle),
                "byte/cycle",
            ),
            ("memory subsystem", format!("{:.1}", self.mem_cycles), "cycles/it"),
            ("total", format!("{:.1}", self.total_cycles_per_iteration), "cycles/it"),
            (
                "accounted",
                format!("{:.1}", self.accounted_cycles_per_iteration),
                "cycles/it",
            ),
            (
                "required bandwidth",
                format!("{:.1}", self.required_bw_gibs),
                if self.bandwidth_feasible {
                    "GiB/s (feasible)"
                } else {
                    "GiB/s (EXCEEDS sustained)"
                },
            ),
            ("sustained bandwidth", format!("{:.1}", self.sustained_bw_gibs), "GiB/s"),
            ("kernel runtime", format!("{:.2}", self.kernel_seconds), "s"),
            ("total runtime", format!("{:.2}", self.total_seconds), "s"),
        ];
        for (label, value, unit) in rows {
            writeln!(f, "  {label:<26}{value:>10}  {unit}")?;
        }
        if let (Some(measured), Some(err)) = (self.measured_seconds, self.model_error_fraction) {
            writeln!(f, "  {:<26}{:>10}  s", "measured runtime", format!("{measured:.2}"))?;
            writeln!(f, "  {:<26}{:>10}  %", "model error", format!("{:.1}", err * 100.0))?;
        }
        Ok(())
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Xeon Phi 5110P gather latency table (per instruction; L1 / L2).
    pub(crate) fn phi() -> MachineModel {
        let row = |e, l1, l2| GatherLatency {
            elements_per_cl: e,
            l1_cycles: l1,
            l2_cycles: l2,
        };
        MachineModel {
            name: "phi".into(),
            cores: 60,
            clock_ghz: 1.048,
            bandwidth_clock_ghz: Some(1.05),
            cl_bytes: 64,
            vector_lanes: 16,
            gather_table: vec![
                row(16, 9.0, 13.6),
                row(8, 4.2, 9.4),
                row(4, 3.7, 9.1),
                row(2, 2.9, 8.6),
                row(1, 2.3, 8.1),
            ],
            sustained_bw_gibs: 165.0,
            issue_slots_per_thread: 2.0,
        }
    }

    pub(crate) fn fdk() -> KernelModel {
        KernelModel {
            name: "fdk".into(),
            gatherless_cycles: 37.5,
            gathers_per_iteration: 16.0,
            elements_per_cl: 4,
            l1_hit_fraction: 0.885,
            bytes_mem_per_iteration: 128.0,
            voxels_per_iteration: 16.0,
            overhead_seconds: 0.42,
            total_voxel_updates: 4.39e10,
            round_cycles: true,
            measured_seconds: Some(5.16),
        }
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn gather_examples() {
        let m = phi();
        assert_eq!(gather_latency(&m, 4, CacheLevel::L1).unwrap(), 3.7);
        assert!(close(gather_loop_latency(&m, 4, CacheLevel::L1).unwrap(), 14.8, 1e-12));
        assert_eq!(gather_latency(&m, 16, CacheLevel::L1).unwrap(), 9.0);
        assert_eq!(gather_loop_latency(&m, 16, CacheLevel::L1).unwrap(), 9.0);
        assert_eq!(gather_latency(&m, 1, CacheLevel::L2).unwrap(), 8.1);
        assert!(close(gather_loop_latency(&m, 1, CacheLevel::L2).unwrap(), 129.6, 1e-12));
        assert!(gather_latency(&m, 3, CacheLevel::L1).is_err());
    }

    #[test]
    fn gatherless_from_single_thread_line() {
        // 2402 cycles for a 512-voxel line, 16 voxels per iteration, issue every other cycle.
        let c = gatherless_from_line_timing(2402.0, 512.0, 16.0, 2.0);
        assert!(close(c, 37.5, 0.05), "{c}");
    }

    #[test]
    fn core_cycles_examples() {
        let m = phi();
        let k = fdk();
        assert!(close(core_execution_cycles(&k, &m).unwrap(), 96.7, 1e-9));
        assert!(close(gather_cycles(&k, &m).unwrap(), 59.2, 1e-9));
        let zero = KernelModel {
            gathers_per_iteration: 0.0,
            ..fdk()
        };
        assert_eq!(core_execution_cycles(&zero, &m).unwrap(), 37.5);
        let sixteen = KernelModel {
            elements_per_cl: 16,
            ..fdk()
        };
        assert!(close(core_execution_cycles(&sixteen, &m).unwrap(), 181.5, 1e-9));
    }

    #[test]
    fn effective_bandwidth_examples() {
        let mut m = phi();
        assert!(close(effective_l2_bandwidth(&m, 4).unwrap(), 64.0 / 5.4, 1e-9));
        assert!(close(effective_l2_bandwidth(&m, 4).unwrap(), 11.85, 0.005));
        assert!(close(effective_l2_bandwidth(&m, 16).unwrap(), 13.91, 0.005));
        m.gather_table[2].l2_cycles = 3.7;
        assert!(matches!(effective_l2_bandwidth(&m, 4), Err(Error::Model(_))));
    }

    #[test]
    fn memory_cycles_examples() {
        let m = phi();
        let k = fdk();
        assert!(close(l2_bytes_per_iteration(&k, &m), 117.76, 1e-9));
        assert!(close(memory_subsystem_cycles(&k, &m).unwrap(), 9.94, 0.005));
        let all_l1 = KernelModel {
            l1_hit_fraction: 1.0,
            ..fdk()
        };
        assert_eq!(memory_subsystem_cycles(&all_l1, &m).unwrap(), 0.0);
        let half = KernelModel {
            l1_hit_fraction: 0.5,
            ..fdk()
        };
        assert!(close(memory_subsystem_cycles(&half, &m).unwrap(), 43.2, 0.01));
        assert!(close(total_cycles_per_iteration(&half, &m).unwrap(), 139.9, 0.01));
    }

    #[test]
    fn total_cycles() {
        let m = phi();
        let t = total_cycles_per_iteration(&fdk(), &m).unwrap();
        assert!(close(t, 106.6, 0.05), "{t}");
        assert_eq!(accounted_cycles_per_iteration(&fdk(), &m).unwrap(), 107.0);
        let bare = KernelModel {
            gathers_per_iteration: 0.0,
            ..fdk()
        };
        assert_eq!(total_cycles_per_iteration(&bare, &m).unwrap(), 37.5);
    }

    #[test]
    fn bandwidth_examples() {
        let m = phi();
        let bw = required_bandwidth(&fdk(), &m).unwrap();
        assert!(close(bw, 70.0, 0.5), "{bw}");
        let one = MachineModel { cores: 1, ..phi() };
        assert!(close(required_bandwidth(&fdk(), &one).unwrap() * 60.0, bw, 1e-9));
        let none = KernelModel {
            bytes_mem_per_iteration: 0.0,
            ..fdk()
        };
        assert_eq!(required_bandwidth(&none, &m).unwrap(), 0.0);
    }

    #[test]
    fn runtime_examples() {
        let m = phi();
        let r = predict_runtime(&fdk(), &m, None).unwrap();
        assert!(close(r.kernel_seconds, 4.67, 0.005), "{}", r.kernel_seconds);
        assert!(close(r.total_seconds, 5.09, 0.005), "{}", r.total_seconds);
        let err = r.model_error_fraction.unwrap();
        assert!(close(err, 0.0136, 0.0005), "{err}");
        assert!(r.bandwidth_feasible);

        let empty = KernelModel {
            total_voxel_updates: 0.0,
            ..fdk()
        };
        let r0 = predict_runtime(&empty, &m, Some(1.0)).unwrap();
        assert_eq!(r0.kernel_seconds, 0.0);
        assert_eq!(r0.total_seconds, 0.42);

        let doubled = MachineModel { cores: 120, ..phi() };
        let r2 = predict_runtime(&fdk(), &doubled, None).unwrap();
        assert!(close(r2.kernel_seconds * 2.0, r.kernel_seconds, 1e-12));
    }

    #[test]
    fn unit_conversion_round_trip() {
        let m = phi();
        let k = KernelModel {
            round_cycles: false,
            ..fdk()
        };
        let secs = kernel_seconds(&k, &m).unwrap();
        let cycles_back = secs * m.cores as f64 * m.clock_ghz * 1e9 / (k.total_voxel_updates / k.voxels_per_iteration);
        let total = total_cycles_per_iteration(&k, &m).unwrap();
        assert!((cycles_back - total).abs() <= 1e-12 * total);
    }

    #[test]
    fn monotone_in_gathers_and_hit_rate() {
        let m = phi();
        let mut last = 0.0;
        for g in 0..40 {
            let k = KernelModel {
                gathers_per_iteration: g as f64,
                ..fdk()
            };
            let t = total_cycles_per_iteration(&k, &m).unwrap();
            assert!(t >= last);
            last = t;
        }
        let mut last = f64::INFINITY;
        for h in 0..=100 {
            let k = KernelModel {
                l1_hit_fraction: h as f64 / 100.0,
                ..fdk()
            };
            let t = total_cycles_per_iteration(&k, &m).unwrap();
            assert!(t <= last);
            last = t;
        }
    }

    #[test]
    fn validation() {
        let mut m = phi();
        m.gather_table.pop();
        assert!(m.validate().is_err());
        let mut m = phi();
        m.gather_table[0].l2_cycles = 1.0;
        assert!(m.validate().is_err());
        let k = KernelModel {
            l1_hit_fraction: 1.5,
            ..fdk()
        };
        assert!(predict_runtime(&k, &phi(), None).is_err());
    }

    #[test]
    fn report_text() {
        let r = predict_runtime(&fdk(), &phi(), None).unwrap();
        let text = r.to_string();
        assert!(text.contains("106.6"));
        assert!(text.contains("107.0"));
        assert!(text.contains("5.09"));
        assert!(text.contains("1.4"));
        let json = serde_json::to_string(&r).unwrap();
        let back: ModelReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
    }
}
