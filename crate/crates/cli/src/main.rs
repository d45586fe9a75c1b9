use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use iabc_core::conditions::{
    check_partition_condition, check_reduced_graph_condition, check_source_component_size,
};
use iabc_core::simnet::{trace_metrics, Outcome, Trace};
use iabc_core::{
    build_attack_config, equivalence_sweep, generate_graph, parse_graph, run_simulation,
    verify_trace, Digraph, GraphKind, GraphParams, Mode, Sampling, SimConfig, Verdict,
};

/// Exit code for I/O, parse and precondition errors.
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "iabc")]
#[command(about = "Byzantine consensus conditions and simulation on directed graphs")]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Commands,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Sync,
    Async,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    ReducedGraph,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Complete,
    Cycle,
    RandomUniform,
    CounterexampleK5,
}

#[derive(Subcommand)]
enum Commands {
    /// Check a graph against the consensus condition; prints a JSON report.
    /// Exits 0 on pass, 1 on fail, 2 when the enumeration budget runs out.
    Check {
        graph: PathBuf,
        /// Fault bound (defaults to the graph file's `f`)
        #[arg(long)]
        f: Option<usize>,
        #[arg(long, value_enum, default_value = "sync")]
        mode: ModeArg,
        /// Use the reduced-graph characterisation instead of partitions
        #[arg(long, value_enum)]
        oracle: Option<OracleArg>,
        /// Also require the unique source component to have at least f+1 nodes
        #[arg(long)]
        source_size: bool,
    },
    /// Compare the partition check with the reduced-graph oracle.
    Equiv {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        f: usize,
        /// Enumerate every digraph on n nodes
        #[arg(long, conflicts_with = "samples")]
        exhaustive: bool,
        /// Number of random digraphs
        #[arg(long, default_value_t = 1000)]
        samples: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate a JSON configuration and write the trace and metrics CSVs.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Metrics CSV path (defaults to `<out stem>_metrics.csv`)
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Find a violating partition and run the corresponding attack.
    Attack {
        graph: PathBuf,
        #[arg(long)]
        f: Option<usize>,
        /// Input of the left block
        #[arg(long = "m", default_value_t = 0.0, allow_negative_numbers = true)]
        low: f64,
        /// Input of the right block
        #[arg(long = "M", default_value_t = 1.0, allow_negative_numbers = true)]
        high: f64,
        #[arg(long, default_value_t = 1000)]
        rounds: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Generate a graph file.
    Gen {
        #[arg(long, value_enum)]
        kind: KindArg,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        p: Option<f64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output path (stdout when omitted)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a trace against validity and the contraction bound.
    Verify {
        trace: PathBuf,
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        f: Option<usize>,
    },
}

fn read_graph(path: &Path, f: Option<usize>) -> Result<(Digraph, usize)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let (g, file_f) = parse_graph(&text).with_context(|| format!("parsing {}", path.display()))?;
    let Some(f) = f.or(file_f) else {
        bail!(
            "no fault bound: pass --f or set \"f\" in {}",
            path.display()
        );
    };
    Ok((g, f))
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn metrics_path(out: &Path, metrics: Option<PathBuf>) -> PathBuf {
    metrics.unwrap_or_else(|| {
        let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
        out.with_file_name(format!("{stem}_metrics.csv"))
    })
}

fn write_trace(trace: &Trace, out: &Path, metrics: &Path) -> Result<()> {
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    trace.write_values_csv(BufWriter::new(file))?;
    let file = File::create(metrics).with_context(|| format!("creating {}", metrics.display()))?;
    trace.write_metrics_csv(BufWriter::new(file))?;
    Ok(())
}

fn outcome_json(outcome: &Outcome) -> serde_json::Value {
    match *outcome {
        Outcome::Converged { round } => json!({"kind": "converged", "round": round}),
        Outcome::MaxRounds { rounds } => json!({"kind": "max-rounds", "rounds": rounds}),
        Outcome::Stalled { round } => json!({"kind": "stalled", "round": round}),
        Outcome::Imported => json!({"kind": "imported"}),
    }
}

fn summary(trace: &Trace, out: &Path, metrics: &Path) -> serde_json::Value {
    let last = trace.values.len() - 1;
    json!({
        "outcome": outcome_json(&trace.outcome),
        "rounds": trace.last_round(),
        "initialSpread": trace.spread(0),
        "finalSpread": trace.spread(last),
        "valid": trace_metrics(trace).all_valid,
        "deliveries": trace.deliveries.len(),
        "maxDelay": trace.max_delay,
        "trace": out.display().to_string(),
        "metrics": metrics.display().to_string(),
    })
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Commands::Check {
            graph,
            f,
            mode,
            oracle,
            source_size,
        } => {
            let (g, f) = read_graph(&graph, f)?;
            let reduced = oracle.is_some() || source_size;
            let report = match mode {
                ModeArg::Async if reduced => {
                    bail!("the reduced-graph oracle characterises the synchronous condition only")
                }
                ModeArg::Async => check_partition_condition(&g, f, Mode::Async)?,
                ModeArg::Sync if source_size => check_source_component_size(&g, f)?,
                ModeArg::Sync if reduced => check_reduced_graph_condition(&g, f)?,
                ModeArg::Sync => check_partition_condition(&g, f, Mode::Sync)?,
            };
            print_json(&report)?;
            Ok(match report.verdict {
                Verdict::Pass => 0,
                Verdict::Fail => 1,
                Verdict::BudgetExceeded => 2,
            })
        }
        Commands::Equiv {
            n,
            f,
            exhaustive,
            samples,
            seed,
        } => {
            let sampling = if exhaustive {
                Sampling::Exhaustive
            } else {
                Sampling::Random { samples, seed }
            };
            let report = equivalence_sweep(n, f, sampling)?;
            print_json(&report)?;
            Ok(if report.equivalent { 0 } else { 1 })
        }
        Commands::Run {
            config,
            out,
            metrics,
        } => {
            let text = fs::read_to_string(&config)
                .with_context(|| format!("reading {}", config.display()))?;
            let cfg = SimConfig::from_json(&text)?;
            let trace = run_simulation(&cfg)?;
            let metrics = metrics_path(&out, metrics);
            write_trace(&trace, &out, &metrics)?;
            print_json(&summary(&trace, &out, &metrics))?;
            Ok(0)
        }
        Commands::Attack {
            graph,
            f,
            low,
            high,
            rounds,
            out,
            metrics,
        } => {
            let (g, f) = read_graph(&graph, f)?;
            let report = check_partition_condition(&g, f, Mode::Async)?;
            let Some(partition) = report.witness else {
                bail!("graph satisfies the asynchronous condition; no violating partition exists");
            };
            let mut cfg = build_attack_config(&g, f, &partition, low, high)?;
            cfg.max_rounds = rounds;
            let trace = run_simulation(&cfg)?;
            let metrics = metrics_path(&out, metrics);
            write_trace(&trace, &out, &metrics)?;
            let mut s = summary(&trace, &out, &metrics);
            s["partition"] = serde_json::to_value(&partition)?;
            print_json(&s)?;
            Ok(0)
        }
        Commands::Gen {
            kind,
            n,
            p,
            seed,
            out,
        } => {
            let kind = match kind {
                KindArg::Complete => GraphKind::Complete,
                KindArg::Cycle => GraphKind::Cycle,
                KindArg::RandomUniform => GraphKind::RandomUniform,
                KindArg::CounterexampleK5 => GraphKind::CounterexampleK5,
            };
            let g = generate_graph(kind, GraphParams { n, p }, seed)?;
            let f = matches!(kind, GraphKind::CounterexampleK5).then_some(1);
            let text = serde_json::to_string_pretty(&g.to_document(f))?;
            match out {
                Some(path) => fs::write(&path, text + "\n")
                    .with_context(|| format!("writing {}", path.display()))?,
                None => println!("{text}"),
            }
            Ok(0)
        }
        Commands::Verify { trace, graph, f } => {
            let (g, f) = read_graph(&graph, f)?;
            let file =
                File::open(&trace).with_context(|| format!("opening {}", trace.display()))?;
            let t = Trace::read_values_csv(file)?;
            let report = verify_trace(&g, f, &t)?;
            print_json(&report)?;
            Ok(if report.holds { 0 } else { 1 })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
