use std::path::PathBuf;
use std::process::ExitCode;

use agentgov_harness::{run_fleet, AutoResolver, FaultSpec, FleetSpec, HarnessEnv, ScriptMix};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use tracing_subscriber::EnvFilter;

const EXIT_ERROR: u8 = 1;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(name = "harness", about = "Run scripted agents against the governance kernel")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum ResolverArg {
    ApproveAll,
    Mixed,
    None,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario, or a fleet with --fleet.
    Run {
        /// A built-in script, `all` for a mix of them, or `random`.
        #[arg(long)]
        script: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        fleet: Option<usize>,
        /// e.g. `stall`, `drop_constraint`, `payment/error_burst:0.5@2000`.
        #[arg(long)]
        fault: Vec<FaultSpec>,
        #[arg(long, value_enum, default_value = "approve-all")]
        resolver: ResolverArg,
        /// Attempt one autonomy promotion per kind afterwards.
        #[arg(long)]
        promote: bool,
        /// Write the whole journal as JSONL.
        #[arg(long)]
        export: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let Cmd::Run {
        script,
        seed,
        fleet,
        fault,
        resolver,
        promote,
        export,
    } = Cli::parse().cmd;

    let mix = match script.as_str() {
        "all" => ScriptMix::all_builtin(),
        "random" => ScriptMix::Random,
        name => ScriptMix::single(name),
    };
    let spec = FleetSpec {
        n: fleet.unwrap_or(1),
        mix,
        seed,
        faults: fault,
        promote,
        admit_per_round: agentgov_harness::fleet::DEFAULT_ADMIT_PER_ROUND,
    };
    let resolver = match resolver {
        ResolverArg::ApproveAll => Some(AutoResolver::approve_all(seed)),
        ResolverArg::Mixed => Some(AutoResolver::mixed(seed)),
        ResolverArg::None => None,
    };

    let env = HarnessEnv::new(seed);
    let result = match run_fleet(&env, &spec, resolver.as_ref()) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    };
    if let Some(path) = export {
        if let Err(e) = std::fs::write(&path, env.kernel.journal().export_all()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_ERROR);
        }
    }

    let summary = if fleet.is_none() {
        json!({ "outcome": result.outcomes.first(), "invariant_failures": result.invariant_failures })
    } else {
        json!({
            "agents": spec.n,
            "journal_records": result.journal_records,
            "per_kind": result.per_kind,
            "invariant_failures": result.invariant_failures,
            "wall_time_ms": result.wall_time.as_millis() as u64,
        })
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    if result.is_clean() {
        ExitCode::SUCCESS
    } else {
        for f in &result.invariant_failures {
            eprintln!("invariant violated: {f}");
        }
        ExitCode::from(EXIT_VIOLATION)
    }
}
