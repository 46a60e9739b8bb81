use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tkhist_core::estimator::harness::{
    evaluate, parse_workload, read_workload, sweep, OracleSource, Record, SweepConfig,
    WorkloadEntry,
};
use tkhist_core::estimator::synthetic::{djpcd_workload, pure_join_workload};
use tkhist_core::estimator::{generate_synthetic, Layout, SyntheticSpec, DEFAULT_ORACLE_CAP};
use tkhist_core::state::{DEFAULT_BIN_COUNT, DEFAULT_TOP_K};
use tkhist_core::{
    apply_update, build_state, ingest_all, ingest_reader, load_schema, load_state, save_state,
    BuildConfig, EstimateOptions, Estimator,
};

#[derive(Parser)]
#[command(name = "tkhist", version, about = "Top-k histogram join cardinality estimator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest the tables of a schema and write the estimator state.
    Build {
        #[command(flatten)]
        data: SchemaArg,
        #[command(flatten)]
        state: StateArg,
        #[command(flatten)]
        hyper: HyperArgs,
    },
    /// Estimate one query or every query of a workload file; one JSON
    /// line per query.
    Estimate {
        #[command(flatten)]
        state: StateArg,
        /// Query text.
        #[arg(long, conflicts_with = "workload", required_unless_present = "workload")]
        query: Option<String>,
        /// File with one query per line; `--` lines are comments and a
        /// `||<count>` suffix supplies the true cardinality.
        #[arg(long)]
        workload: Option<PathBuf>,
        #[command(flatten)]
        djpcd: DjpcdArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Estimate a workload and print a CSV summary of its q-errors.
    Evaluate {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        workload: PathBuf,
        /// Schema whose data computes missing true cardinalities; without it
        /// only `||<count>` suffixes are scored.
        #[arg(long = "oracle", value_name = "SCHEMA")]
        oracle: Option<PathBuf>,
        /// Largest intermediate table the oracle may build.
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        oracle_cap: usize,
        /// Also write one JSON line per query here.
        #[arg(long)]
        records: Option<PathBuf>,
        #[command(flatten)]
        djpcd: DjpcdArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Insert new rows of one table into the state and rewrite it.
    Update {
        #[command(flatten)]
        state: StateArg,
        #[arg(long)]
        table: String,
        /// CSV with a header row naming the table's columns.
        #[arg(long)]
        rows: PathBuf,
    },
    /// Rebuild and evaluate over a grid of bin counts and k values.
    Sweep {
        #[command(flatten)]
        data: SchemaArg,
        #[arg(long)]
        workload: PathBuf,
        #[arg(long = "bins", value_delimiter = ',', default_values_t = [20, 50, 100, 200, 400])]
        bins: Vec<usize>,
        #[arg(long = "k", value_delimiter = ',', default_values_t = [0, 5, 10, 20])]
        ks: Vec<usize>,
        #[arg(long, default_value_t = tkhist_core::catalog::DEFAULT_CATEGORICAL_THRESHOLD)]
        threshold: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value_t = DEFAULT_ORACLE_CAP)]
        oracle_cap: usize,
        /// Per-query rows for every grid point.
        #[arg(long)]
        raw: Option<PathBuf>,
        #[command(flatten)]
        djpcd: DjpcdArg,
        #[command(flatten)]
        out: OutArg,
    },
    /// Write a synthetic Zipf dataset, its schema and sample workloads.
    Generate {
        #[arg(long, value_enum, default_value_t = LayoutArg::Star)]
        layout: LayoutArg,
        #[arg(long, default_value_t = 3)]
        tables: usize,
        #[arg(long, default_value_t = 10_000)]
        rows: usize,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        /// Derive attributes from key rank plus uniform noise in `[0, N]`.
        #[arg(long, value_name = "N")]
        correlated: Option<i64>,
        #[arg(long, default_value_t = 0.0)]
        null_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct SchemaArg {
    #[arg(long)]
    schema: PathBuf,
}

#[derive(Args)]
struct StateArg {
    #[arg(long, env = "TKHIST_STATE")]
    state: PathBuf,
}

#[derive(Args)]
struct HyperArgs {
    #[arg(long, default_value_t = DEFAULT_BIN_COUNT)]
    bins: usize,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    k: usize,
    /// Integer attributes with at most this many distinct values are
    /// treated as categorical.
    #[arg(long, default_value_t = tkhist_core::catalog::DEFAULT_CATEGORICAL_THRESHOLD)]
    threshold: usize,
}

#[derive(Args)]
struct DjpcdArg {
    /// Exclude dominant keys that cannot satisfy the filters (default).
    #[arg(long, overrides_with = "no_djpcd")]
    djpcd: bool,
    /// Keep every dominant key regardless of filters.
    #[arg(long, overrides_with = "djpcd")]
    no_djpcd: bool,
}

impl DjpcdArg {
    fn options(&self) -> EstimateOptions {
        EstimateOptions {
            djpcd: !self.no_djpcd,
            ..Default::default()
        }
    }
}

#[derive(Args)]
struct OutArg {
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl OutArg {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(BufWriter::new(
                File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(BufWriter::new(io::stdout().lock())),
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutArg {
    Star,
    Chain,
    ChainStar,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Layout {
        match l {
            LayoutArg::Star => Layout::Star,
            LayoutArg::Chain => Layout::Chain,
            LayoutArg::ChainStar => Layout::ChainStar,
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Build { data, state, hyper } => cmd_build(&data.schema, &state.state, &hyper),
        Command::Estimate {
            state,
            query,
            workload,
            djpcd,
            out,
        } => {
            let entries = match (query, workload) {
                (Some(q), _) => parse_workload(&q)?,
                (None, Some(w)) => read_workload(&w)?,
                (None, None) => bail!("either --query or --workload is required"),
            };
            cmd_estimate(&state.state, &entries, djpcd.options(), out.writer()?)
        }
        Command::Evaluate {
            state,
            workload,
            oracle,
            oracle_cap,
            records,
            djpcd,
            out,
        } => cmd_evaluate(
            &state.state,
            &workload,
            oracle.as_deref().map(|s| (s, oracle_cap)),
            records.as_deref(),
            djpcd.options(),
            out.writer()?,
        ),
        Command::Update { state, table, rows } => cmd_update(&state.state, &table, &rows),
        Command::Sweep {
            data,
            workload,
            bins,
            ks,
            threshold,
            repeats,
            oracle_cap,
            raw,
            djpcd,
            out,
        } => {
            let config = SweepConfig {
                bins,
                ks,
                categorical_threshold: threshold,
                repeats,
                options: djpcd.options(),
            };
            cmd_sweep(&data.schema, &workload, &config, oracle_cap, raw.as_deref(), out.writer()?)
        }
        Command::Generate {
            layout,
            tables,
            rows,
            skew,
            correlated,
            null_fraction,
            seed,
            out,
        } => {
            let mut spec = SyntheticSpec::new(layout.into(), tables, rows, skew);
            if let Some(noise) = correlated {
                spec = spec.correlated(noise);
            }
            spec.null_fraction = null_fraction;
            cmd_generate(&spec, seed, &out)
        }
    }
}

fn cmd_build(schema_path: &Path, state_path: &Path, hyper: &HyperArgs) -> Result<()> {
    let start = Instant::now();
    let schema = load_schema(schema_path)?;
    let tables = ingest_all(&schema)?;
    let config = BuildConfig {
        bin_count: hyper.bins,
        k: hyper.k,
        categorical_threshold: hyper.threshold,
    };
    let state = build_state(&schema, &tables, config)?;
    save_state(&state, state_path)?;
    let bytes = std::fs::metadata(state_path)?.len();
    println!(
        "built {} in {:.3} s: {} tables, {} rows, state {} bytes",
        state_path.display(),
        start.elapsed().as_secs_f64(),
        tables.len(),
        tables.values().map(|t| t.row_count).sum::<usize>(),
        bytes
    );
    Ok(())
}

fn cmd_estimate(
    state_path: &Path,
    entries: &[WorkloadEntry],
    opts: EstimateOptions,
    mut out: Box<dyn Write>,
) -> Result<()> {
    let state = load_state(state_path)?;
    let est = Estimator::new(&state, opts);
    for e in entries {
        let record = match est.estimate(&e.query) {
            Ok(r) => Record::Report(match e.truth {
                Some(t) => r.with_truth(t),
                None => r,
            }),
            Err(err) => Record::Error {
                line: e.line,
                query: e.query.clone(),
                error: err.to_string(),
            },
        };
        writeln!(out, "{}", record.to_json_line())?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_evaluate(
    state_path: &Path,
    workload: &Path,
    oracle: Option<(&Path, usize)>,
    records: Option<&Path>,
    opts: EstimateOptions,
    out: Box<dyn Write>,
) -> Result<()> {
    let state = load_state(state_path)?;
    let entries = read_workload(workload)?;
    let data = match oracle {
        Some((schema, _)) => Some(ingest_all(&load_schema(schema)?)?),
        None => None,
    };
    let source = data.as_ref().zip(oracle).map(|(tables, (_, cap))| OracleSource { tables, cap });
    let eval = evaluate(&state, &entries, opts, source);
    for (line, why) in &eval.skipped {
        eprintln!("line {line}: skipped: {why}");
    }
    if let Some(path) = records {
        let mut w = BufWriter::new(File::create(path)?);
        for r in &eval.records {
            writeln!(w, "{}", r.to_json_line())?;
        }
        w.flush()?;
    }
    eval.summary.write_csv(out)?;
    Ok(())
}

fn cmd_update(state_path: &Path, table: &str, rows: &Path) -> Result<()> {
    let mut state = load_state(state_path)?;
    let def = state
        .schema
        .table(table)
        .with_context(|| format!("unknown table {table}"))?
        .clone();
    let file = File::open(rows).with_context(|| format!("opening {}", rows.display()))?;
    let data = ingest_reader(&def, io::BufReader::new(file))?;
    let report = apply_update(&mut state, &data)?;
    save_state(&state, state_path)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(())
}

fn cmd_sweep(
    schema_path: &Path,
    workload: &Path,
    config: &SweepConfig,
    oracle_cap: usize,
    raw: Option<&Path>,
    out: Box<dyn Write>,
) -> Result<()> {
    let schema = load_schema(schema_path)?;
    let tables = ingest_all(&schema)?;
    let entries = read_workload(workload)?;
    let result = sweep(&schema, &tables, &entries, config, Some(oracle_cap))?;
    if let Some(path) = raw {
        result.write_raw_csv(File::create(path)?)?;
    }
    result.write_summary_csv(out)?;
    Ok(())
}

fn cmd_generate(spec: &SyntheticSpec, seed: u64, dir: &Path) -> Result<()> {
    let data = generate_synthetic(spec, seed)?;
    data.write_dir(dir)?;
    let joins = pure_join_workload(&data.schema);
    std::fs::write(dir.join("joins.sql"), joins.join("\n") + "\n")?;
    if !data.correlated.is_empty() {
        let filtered = djpcd_workload(&data, &[1, 10, 100]);
        std::fs::write(dir.join("filtered.sql"), filtered.join("\n") + "\n")?;
    }
    println!(
        "wrote {} tables and {} join queries to {}",
        data.tables.len(),
        joins.len(),
        dir.display()
    );
    Ok(())
}
