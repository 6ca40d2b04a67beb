mod evaluate;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use miakit::bench::{self, BenchConfig, LoadStrategy, Variant};
use miakit::dataset::{create_dataset, create_metadata_dataset, inspect, open_dataset, CreationPlan};
use miakit::evaluation::{
    aggregate, read_csv, write_statistics_console, write_statistics_csv, Reducer, DEFAULT_DELIMITER,
};
use miakit::{Error, Result};

#[derive(Parser)]
#[command(name = "miakit", version, about = "Medical image datasets, loading and evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a dataset container from a TOML config.
    Create {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Store only metadata and source paths; images stay on disk.
        #[arg(long)]
        metadata_only: bool,
        /// Record the SHA-256 of every source file.
        #[arg(long)]
        hash: bool,
    },
    /// Print the structure of a container.
    Inspect { dataset: PathBuf },
    /// Evaluate predictions against references.
    Evaluate(evaluate::EvaluateArgs),
    /// Aggregate a results CSV over subjects.
    Stats {
        results: PathBuf,
        #[arg(long, default_value = "MEAN,STD")]
        functions: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = ";", value_parser = parse_delimiter)]
        delimiter: u8,
    },
    /// Time sample loading from the container and from image files.
    Bench(BenchArgs),
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, default_value_t = 25)]
    subjects: usize,
    #[arg(long, default_value = "181,217,181")]
    shape: String,
    #[arg(long, default_value = "container,npy,mha,mha-compressed")]
    variants: String,
    #[arg(long, default_value = "full,patch,slice")]
    strategies: String,
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Time an evenly spaced subset of this many samples per pass.
    #[arg(long)]
    samples_per_pass: Option<usize>,
    #[arg(long, default_value_t = 84)]
    patch_size: usize,
    /// Directory for fixtures; a temporary directory is used otherwise.
    #[arg(long)]
    workdir: Option<PathBuf>,
    /// Print a text bar chart after the table.
    #[arg(long)]
    chart: bool,
}

pub(crate) fn parse_delimiter(s: &str) -> std::result::Result<u8, String> {
    match s.as_bytes() {
        [b] if b.is_ascii() => Ok(*b),
        _ if s == "\\t" || s == "tab" => Ok(b'\t'),
        _ => Err(format!("delimiter must be a single ASCII character, got {s:?}")),
    }
}

fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| Error::Config(format!("bad extent {t:?} in shape {s:?}"))))
        .collect()
}

fn parse_list<T>(list: &str, f: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    list.split(',').filter(|t| !t.trim().is_empty()).map(f).collect()
}

fn cmd_create(config: &Path, out: &Path, metadata_only: bool, hash: bool) -> Result<()> {
    let mut plan = CreationPlan::from_toml_file(config)?;
    plan.metadata_only |= metadata_only;
    plan.record_hashes |= hash;
    let summary = if plan.metadata_only {
        create_metadata_dataset(&plan, out)?
    } else {
        create_dataset(&plan, out)?
    };
    println!("wrote {}", summary.path.display());
    println!("subjects:   {}", summary.subjects);
    println!("categories: {}", summary.categories.join(", "));
    println!("payload:    {} bytes", summary.payload_bytes);
    println!("file:       {} bytes", summary.file_bytes);
    Ok(())
}

fn cmd_inspect(path: &Path) -> Result<()> {
    let handle = open_dataset(path)?;
    print!("{}", inspect(&handle));
    Ok(())
}

fn cmd_stats(results: &Path, functions: &str, out: Option<&Path>, delimiter: u8) -> Result<()> {
    let reducers = Reducer::parse_list(functions)?;
    let rows = aggregate(&read_csv(results, delimiter)?, &reducers);
    match out {
        Some(p) => write_statistics_csv(&rows, p, delimiter)?,
        None => print!("{}", write_statistics_console(&rows)),
    }
    Ok(())
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let tmp;
    let workdir = match &a.workdir {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir().map_err(|e| Error::Config(format!("cannot create a temporary directory: {e}")))?;
            tmp.path().to_path_buf()
        }
    };
    let cfg = BenchConfig {
        subjects: a.subjects,
        shape: parse_shape(&a.shape)?,
        variants: parse_list(&a.variants, Variant::parse)?,
        strategies: parse_list(&a.strategies, LoadStrategy::parse)?,
        runs: a.runs,
        seed: a.seed,
        samples_per_pass: a.samples_per_pass,
        patch_size: a.patch_size,
        workdir,
    };
    std::fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))?;
    let need = cfg.fixture_bytes();
    let free = available_space(&cfg.workdir)?;
    if free < need {
        return Err(Error::Creation(format!(
            "benchmark fixtures need {need} bytes but only {free} are free in {}",
            cfg.workdir.display()
        )));
    }
    let rows = bench::run_benchmark(&cfg)?;
    let text = bench::format_bench_csv(&rows, DEFAULT_DELIMITER)?;
    match &a.out {
        Some(p) => std::fs::write(p, &text).map_err(|e| Error::io(p, e))?,
        None => print!("{text}"),
    }
    if a.chart {
        print!("{}", bench::bar_chart(&rows, 40));
    }
    Ok(())
}

// statvfs field types differ between platforms.
#[allow(clippy::unnecessary_cast)]
fn available_space(dir: &Path) -> Result<u64> {
    use std::os::unix::ffi::OsStrExt;
    let c = std::ffi::CString::new(dir.as_os_str().as_bytes())
        .map_err(|_| Error::Config(format!("{} contains a NUL byte", dir.display())))?;
    let mut st = std::mem::MaybeUninit::<libc::statvfs>::uninit();
    // SAFETY: `c` is NUL-terminated and `st` is written by statvfs before it is read.
    if unsafe { libc::statvfs(c.as_ptr(), st.as_mut_ptr()) } != 0 {
        return Err(Error::io(dir, std::io::Error::last_os_error()));
    }
    let st = unsafe { st.assume_init() };
    Ok(st.f_bavail as u64 * st.f_frsize as u64)
}

/// 2 for usage and configuration problems, 1 for everything else.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Argument(_) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Create { config, out, metadata_only, hash } => cmd_create(config, out, *metadata_only, *hash),
        Command::Inspect { dataset } => cmd_inspect(dataset),
        Command::Evaluate(a) => evaluate::run(a),
        Command::Stats { results, functions, out, delimiter } => {
            cmd_stats(results, functions, out.as_deref(), *delimiter)
        }
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
