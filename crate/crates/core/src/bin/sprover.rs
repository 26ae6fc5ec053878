use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use sprover::compile::bench::{bench_generate, measure};
use sprover::compile::{self, CompileError, CompileOptions, SearchPath, EXIT_IO};
use sprover::protocol::{self, ServerConfig};
use sprover::stm::ProverWorker;
use sprover::taskqueue::Transport;

const DELAY_VAR: &str = "SPROVER_PROOF_DELAY_MS";

#[derive(Parser)]
#[command(name = "sprover", version, about = "Check proof documents, in batch or interactively")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct WorkerArgs {
    /// Proof workers (0 checks proofs in this process)
    #[arg(long, short = 'j', default_value_t = 1)]
    workers: usize,
    /// Run workers as threads instead of `sprover-worker` processes
    #[arg(long)]
    threads: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a .v file to .vo, or to .vio with --quick
    Compile {
        file: PathBuf,
        /// Check statements only and record the proofs for later
        #[arg(long)]
        quick: bool,
        #[command(flatten)]
        workers: WorkerArgs,
        /// Add a directory to the module search path
        #[arg(short = 'I', value_name = "DIR")]
        include: Vec<PathBuf>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Complete a .vio file into a .vo
    Vio2vo {
        file: PathBuf,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Synthetic workloads
    Bench {
        #[command(subcommand)]
        command: BenchCommand,
    },
    /// Run the interactive service on standard streams or a TCP socket
    Serve {
        /// host:port to listen on
        #[arg(long)]
        listen: Option<String>,
        #[command(flatten)]
        workers: WorkerArgs,
        #[arg(short = 'I', value_name = "DIR")]
        include: Vec<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct Shape {
    /// Number of theorems
    #[arg(long, default_value_t = 100)]
    theorems: usize,
    /// Search depth of each proof
    #[arg(long, default_value_t = 10)]
    depth: u32,
    /// Share of the sequential work spent in proofs
    #[arg(long, default_value_t = 0.9)]
    fraction: f64,
}

#[derive(Subcommand)]
enum BenchCommand {
    /// Print a generated document
    Gen {
        #[command(flatten)]
        shape: Shape,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Time the full chain, the quick chain and completion
    Run {
        #[command(flatten)]
        shape: Shape,
        /// Worker counts to time completion with
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 4])]
        workers: Vec<usize>,
        #[arg(long)]
        threads: bool,
    },
}

fn proof_delay() -> u64 {
    std::env::var(DELAY_VAR).ok().and_then(|v| v.parse().ok()).unwrap_or(0)
}

/// `sprover-worker` next to this executable, unless threads were asked for.
fn transport(threads: bool) -> Transport {
    if !threads {
        if let Ok(exe) = std::env::current_exe() {
            let worker = exe.with_file_name(format!("sprover-worker{}", std::env::consts::EXE_SUFFIX));
            if worker.is_file() {
                return Transport::process(worker);
            }
        }
    }
    Transport::thread(ProverWorker::new)
}

fn options(w: &WorkerArgs, include: Vec<PathBuf>, output: Option<PathBuf>) -> CompileOptions {
    CompileOptions {
        workers: w.workers,
        search: SearchPath::with_env(include),
        transport: transport(w.threads),
        proof_delay_ms: proof_delay(),
        output,
    }
}

fn report(path: &Path, e: &CompileError) {
    if let CompileError::Document { diagnostics, .. } = e {
        for d in diagnostics {
            eprintln!("{}:{d}", path.display());
        }
    }
    eprintln!("error: {e}");
}

fn finish<T>(path: &Path, result: Result<compile::Compiled<T>, CompileError>) -> i32 {
    match result {
        Ok(out) => {
            for (name, why) in &out.failures {
                eprintln!("{}: proof of `{name}` failed: {why}", path.display());
            }
            println!("{}", out.output.display());
            out.exit_code()
        }
        Err(e) => {
            report(path, &e);
            e.exit_code()
        }
    }
}

fn bench_run(shape: Shape, workers: &[usize], threads: bool) -> anyhow::Result<i32> {
    let dir = std::env::temp_dir().join(format!("sprover-bench-{}", std::process::id()));
    std::fs::create_dir_all(&dir).context("creating a scratch directory")?;
    let src = dir.join("bench.v");
    let text = bench_generate(shape.theorems, shape.depth, shape.fraction);
    std::fs::write(&src, &text)?;
    let m = measure(&text)?;
    println!("sequential: {:.3}s, proof fraction {:.3}", m.total().as_secs_f64(), m.proof_fraction());
    let opts = |n: usize| CompileOptions { workers: n, transport: transport(threads), ..CompileOptions::default() };
    let t = Instant::now();
    compile::compile_full(&src, &opts(1))?;
    let full = t.elapsed();
    println!("full (1 worker): {:.3}s", full.as_secs_f64());
    let t = Instant::now();
    let quick = compile::compile_quick(&src, &opts(0))?;
    let quick_time = t.elapsed();
    println!("quick: {:.3}s ({:.2} of full)", quick_time.as_secs_f64(), quick_time.as_secs_f64() / full.as_secs_f64());
    for &n in workers {
        let t = Instant::now();
        compile::vio2vo(&quick.output, &opts(n))?;
        println!("vio2vo ({n} workers): {:.3}s", t.elapsed().as_secs_f64());
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok(0)
}

fn run(cli: Cli) -> anyhow::Result<i32> {
    Ok(match cli.command {
        Command::Compile { file, quick, workers, include, output } => {
            let opts = options(&workers, include, output);
            if quick {
                finish(&file, compile::compile_quick(&file, &opts))
            } else {
                finish(&file, compile::compile_full(&file, &opts))
            }
        }
        Command::Vio2vo { file, workers, output } => {
            let opts = options(&workers, Vec::new(), output);
            finish(&file, compile::vio2vo(&file, &opts))
        }
        Command::Bench { command: BenchCommand::Gen { shape, output } } => {
            let text = bench_generate(shape.theorems, shape.depth, shape.fraction);
            match output {
                Some(p) => std::fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            0
        }
        Command::Bench { command: BenchCommand::Run { shape, workers, threads } } => {
            bench_run(shape, &workers, threads)?
        }
        Command::Serve { listen, workers, include } => {
            let config = ServerConfig {
                workers: workers.workers,
                transport: transport(workers.threads),
                search: SearchPath::with_env(include),
                proof_delay_ms: proof_delay(),
            };
            match listen {
                Some(addr) => protocol::listen(addr.as_str(), &config, |a| eprintln!("listening on {a}"))?,
                None => protocol::serve(std::io::stdin(), std::io::stdout(), &config)?,
            }
            0
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_IO
        }
    };
    ExitCode::from(code as u8)
}
