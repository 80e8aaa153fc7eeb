use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use pidex_cli::{execute, Invocation, Task};

#[derive(Parser, Debug)]
#[command(name = "solver", version, about = "Monte Carlo and finite-difference PIDE solvers")]
struct Args {
    /// simulate | solve | solve-obstacle | oracle | normcheck | compare
    task: String,
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, env = "SOLVER_THREADS")]
    threads: Option<usize>,
    /// Record that fixed-order reductions are required (they always are).
    #[arg(long)]
    deterministic: bool,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let Some(task) = Task::parse(&args.task) else {
        eprintln!("E_CONFIG at 'task': unknown task '{}'", args.task);
        return ExitCode::from(1);
    };
    if let Some(k) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global() {
            eprintln!("E_CONFIG at 'threads': {e}");
            return ExitCode::from(1);
        }
    }
    let inv = Invocation {
        task: Some(task),
        config: args.config,
        seed: args.seed,
        threads: args.threads,
        deterministic: args.deterministic,
        out: args.out,
    };
    let (report, code) = execute(&inv);
    if let Some(r) = report {
        println!("{}", serde_json::to_string_pretty(&r.body.headline).unwrap_or_default());
        for c in &r.body.criteria {
            println!("{} {}: {} (threshold {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.threshold);
        }
    }
    ExitCode::from(code as u8)
}
