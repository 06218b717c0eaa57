use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use conebeam::dataset::{generate_dataset, read_stack, write_volume, DatasetConfig, Field, Volume};
use conebeam::harness::{self, BenchOptions};
use conebeam::kernel_opt::{self, Lanes, OptimizedOptions, Reciprocal, DEFAULT_CHUNK_SIZE};
use conebeam::kernel_ref::reconstruct_reference;
use conebeam::membench::{self, GatherBenchConfig, StreamConfig};
use conebeam::perfmodel;
use conebeam::Error;

#[derive(Parser)]
#[command(
    name = "conebeam",
    version,
    about = "Cone-beam back projection: datasets, kernels, benchmarks and the performance model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic projection stack.
    Generate(GenerateArgs),
    /// Back-project a stack into a volume file.
    Reconstruct(ReconstructArgs),
    /// Time the optimized kernel and score it against the reference (JSON).
    Bench(BenchArgs),
    /// Compare the optimized kernel against the reference voxel by voxel.
    Verify(VerifyArgs),
    /// Evaluate the analytical performance model.
    Model(ModelArgs),
    /// Memory micro-benchmarks.
    Membench(MembenchArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Output stack file.
    #[arg(short, long)]
    out: PathBuf,
    /// Volume edge length in voxels.
    #[arg(long, default_value_t = 64)]
    edge: usize,
    #[arg(long, default_value_t = 32)]
    projections: usize,
    /// Intensity field: constant[:v], ramp[:a,b,c], gaussian:a,sigma,cx,cy, checker:cell,lo,hi.
    /// Defaults to a centered Gaussian.
    #[arg(long)]
    field: Option<Field>,
    /// Peak uniform noise added per pixel.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Full dataset configuration as JSON; overrides the other options.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct KernelArgs {
    /// Vector lanes: 1, 4, 8 or 16.
    #[arg(long, default_value = "16")]
    lanes: Lanes,
    /// Worker threads (default: CONEBEAM_THREADS, else all cores).
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_CHUNK_SIZE)]
    chunk_size: usize,
    /// Back-project every voxel, not only those inside the clip mask.
    #[arg(long)]
    no_clip: bool,
    /// Keep per-tap bounds checks instead of zero-padding images.
    #[arg(long)]
    no_pad: bool,
    /// Replace divisions by w with reciprocal multiplies: off, weight or full.
    /// Anything but off trades the 1e-5 per-voxel agreement for speed.
    #[arg(long, default_value = "off")]
    reciprocal: Reciprocal,
}

impl KernelArgs {
    fn options(&self) -> conebeam::Result<OptimizedOptions> {
        let workers = match self.workers {
            Some(w) => w,
            None => harness::workers_from_env(kernel_opt::default_workers())?,
        };
        Ok(OptimizedOptions {
            lanes: self.lanes,
            chunk_size: self.chunk_size,
            workers,
            use_clip: !self.no_clip,
            use_pad: !self.no_pad,
            instrument: false,
            reciprocal: self.reciprocal,
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Impl {
    Ref,
    Opt,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    stack: PathBuf,
    /// Output volume file.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long = "impl", value_enum, default_value = "opt")]
    implementation: Impl,
    #[command(flatten)]
    kernel: KernelArgs,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    stack: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    /// Count clip-mask and padding setup in the timed region.
    #[arg(long)]
    include_prepare: bool,
    /// Directory for cached reference volumes (default: next to the stack).
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    /// Print a text summary instead of JSON.
    #[arg(long)]
    text: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    stack: PathBuf,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ModelArgs {
    /// Machine description JSON.
    #[arg(long)]
    machine: PathBuf,
    /// Kernel description JSON.
    #[arg(long)]
    kernel: PathBuf,
    /// Measured runtime in seconds to compare against.
    #[arg(long)]
    measured: Option<f64>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct MembenchArgs {
    #[command(subcommand)]
    bench: Membench,
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Subcommand)]
enum Membench {
    /// Streaming read-modify-write bandwidth over a thread-count sweep.
    Stream {
        /// Buffer size in MiB; use at least four times the last-level cache.
        #[arg(long, default_value_t = 1024)]
        buffer_mib: usize,
        /// Comma-separated thread counts (default: 1..=cores).
        #[arg(long, value_delimiter = ',')]
        threads: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        #[arg(long, default_value_t = 3)]
        warmup: usize,
    },
    /// Gather latency per 16-element group for each elements-per-cache-line distribution.
    Gather {
        #[arg(long, default_value_t = 16)]
        l1_kib: usize,
        #[arg(long, default_value_t = 512)]
        l2_kib: usize,
        #[arg(long, default_value_t = 200)]
        reps: usize,
        /// Core clock for a cycles column.
        #[arg(long)]
        clock_ghz: Option<f64>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}

fn run(command: Command) -> conebeam::Result<u8> {
    match command {
        Command::Generate(args) => generate(args),
        Command::Reconstruct(args) => reconstruct(args),
        Command::Bench(args) => bench(args),
        Command::Verify(args) => verify(args),
        Command::Model(args) => model(args),
        Command::Membench(args) => membench_cmd(args),
    }
}

fn read_dataset_config(path: &Path) -> conebeam::Result<DatasetConfig> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.into(),
        source,
    })
}

fn generate(args: GenerateArgs) -> conebeam::Result<u8> {
    let config = match &args.config {
        Some(path) => read_dataset_config(path)?,
        None => {
            let mut c = DatasetConfig::desk(args.edge, args.projections);
            if let Some(field) = args.field {
                c.field = field;
            }
            if let Some(noise) = args.noise {
                c.noise_amplitude = noise;
            }
            c.seed = args.seed;
            c
        }
    };
    let stack = generate_dataset(&config, &args.out)?;
    println!(
        "wrote {}: {} projections of {}x{}, volume {}^3",
        args.out.display(),
        stack.len(),
        stack.width(),
        stack.height(),
        stack.geometry.edge
    );
    Ok(0)
}

fn reconstruct(args: ReconstructArgs) -> conebeam::Result<u8> {
    let stack = read_stack(&args.stack)?;
    let mut vol = Volume::zeros(stack.geometry);
    let t = Instant::now();
    match args.implementation {
        Impl::Ref => reconstruct_reference(&mut vol, &stack)?,
        Impl::Opt => {
            kernel_opt::reconstruct_optimized(&mut vol, &stack, &args.kernel.options()?)?;
        }
    }
    let seconds = t.elapsed().as_secs_f64();
    write_volume(&args.out, &vol)?;
    println!("wrote {} in {seconds:.3} s", args.out.display());
    Ok(0)
}

fn bench(args: BenchArgs) -> conebeam::Result<u8> {
    let options = BenchOptions {
        kernel: args.kernel.options()?,
        include_prepare: args.include_prepare,
        cache_dir: args.cache_dir,
    };
    let result = harness::run_benchmark(&args.stack, &options)?;
    if args.text {
        println!("{result}");
    } else {
        println!(
            "{}",
            serde_json::to_string_pretty(&result).expect("bench result serializes")
        );
    }
    Ok(0)
}

fn verify(args: VerifyArgs) -> conebeam::Result<u8> {
    let stack = read_stack(&args.stack)?;
    let mut reference = Volume::zeros(stack.geometry);
    reconstruct_reference(&mut reference, &stack)?;
    let mut vol = Volume::zeros(stack.geometry);
    kernel_opt::reconstruct_optimized(&mut vol, &stack, &args.kernel.options()?)?;
    let report = harness::verify_volumes(&vol, &reference)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    } else {
        println!("{report}");
    }
    Ok(if report.pass { 0 } else { 1 })
}

fn model(args: ModelArgs) -> conebeam::Result<u8> {
    let machine = perfmodel::load_machine(&args.machine)?;
    let kernel = perfmodel::load_kernel(&args.kernel)?;
    let report = perfmodel::predict_runtime(&kernel, &machine, args.measured)?;
    if args.json {
        println!(
            "{}",
            serde_json::to_string_pretty(&report).expect("model report serializes")
        );
    } else {
        print!("{report}");
    }
    Ok(0)
}

fn membench_cmd(args: MembenchArgs) -> conebeam::Result<u8> {
    match args.bench {
        Membench::Stream {
            buffer_mib,
            threads,
            reps,
            warmup,
        } => {
            let mut config = StreamConfig {
                buffer_bytes: buffer_mib << 20,
                reps,
                warmup,
                ..StreamConfig::default()
            };
            if !threads.is_empty() {
                config.thread_counts = threads;
            }
            let report = membench::stream_update_bench(&config)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&report).expect("stream report serializes")
                );
            } else {
                print!("{report}");
            }
            Ok(if report.checksum_ok { 0 } else { 1 })
        }
        Membench::Gather {
            l1_kib,
            l2_kib,
            reps,
            clock_ghz,
        } => {
            let config = GatherBenchConfig {
                l1_bytes: l1_kib << 10,
                l2_bytes: l2_kib << 10,
                reps,
                clock_ghz,
                ..GatherBenchConfig::default()
            };
            let table = membench::gather_pattern_bench(&config)?;
            if args.json {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&table).expect("gather table serializes")
                );
            } else {
                print!("{table}");
            }
            Ok(0)
        }
    }
}
