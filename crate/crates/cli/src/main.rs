use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use howard_cli::{load_spec, run, CliError, Kind};

/// Runs one experiment on the perturbed Howard network.
#[derive(Debug, Parser)]
#[command(name = "howard-web", version)]
struct Args {
    /// pmf-check, window-dump, coalescence, renewal, scaling, eta,
    /// hyperuniformity, connectivity or dual-check.
    kind: Kind,
    /// Spec file, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed of the spec.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replica-level parallelism.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 1 when a statistic misses its acceptance range.
    #[arg(long)]
    gate: bool,
    /// Overrides the output directory of the spec.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("howard-web: {e}");
            ExitCode::from(2)
        }
    }
}

fn execute(args: &Args) -> Result<ExitCode, CliError> {
    if let Some(n) = args.threads {
        // Only fails if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let mut spec = load_spec(&args.config, Some(args.kind))?;
    if let Some(seed) = args.seed {
        spec.model.seed = seed;
    }
    if let Some(out) = &args.out {
        spec.out = out.to_string_lossy().into_owned();
    }
    let manifest = run(&spec, args.gate)?;
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    for c in &manifest.gate.checks {
        let passed = c["passed"].as_bool().unwrap_or(false);
        eprintln!(
            "{} {}: {} ({})",
            if passed { "pass" } else { "FAIL" },
            c["name"].as_str().unwrap_or(""),
            c["value"],
            c["requirement"].as_str().unwrap_or("")
        );
    }
    eprintln!("wrote {} files to {}", manifest.outputs.len() + 1, spec.out);
    Ok(if args.gate && !manifest.gate_passed() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    })
}
