use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use backtest_verify::enumeration::{default_cap, enumerate_bfs, find_fixed_point};
use backtest_verify::harness::adapter::{serve, AdapterFactory, BuiltinAdapter, BuiltinEngine, SubprocessFactory};
use backtest_verify::harness::catalog::{SetupCatalog, STOP_ENTRY_ID};
use backtest_verify::harness::conformance::{run_conformance, RunConfig};
use backtest_verify::harness::selftest::{selftest_with, SelftestParts};
use backtest_verify::harness::stability::StabilityConfig;
use backtest_verify::harness::vectors::{rows_to_csv, rows_to_json, vector_rows};
use backtest_verify::harness::{build_suites, shared_oracle, HarnessError};
use backtest_verify::model_candles::{gen_model_candles, gen_representative_candles, GridLayout, LayoutError};
use backtest_verify::par::Exec;
use backtest_verify::price::TickSize;
use backtest_verify::types::{BacktestMode, Candle};
use backtest_verify::wire::{WireCandle, WireResult, WireSetup};

#[derive(Parser)]
#[command(name = "backtest-verify", version, about = "Verify backtest engines on model candles")]
struct Cli {
    /// Layout file (JSON); restricts the run to setups with its order count.
    #[arg(long, global = true)]
    grid: Option<PathBuf>,
    /// Setup catalog file (JSON).
    #[arg(long, global = true)]
    catalog: Option<PathBuf>,
    /// Comma-separated modes out of best, worst, ignore.
    #[arg(long, global = true, value_delimiter = ',', default_value = "best,worst,ignore")]
    modes: Vec<String>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    format: Format,
    /// Seconds to wait for each engine answer.
    #[arg(long, global = true, default_value_t = 5.0)]
    timeout: f64,
    /// Parallel engine connections and worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Write the machine-readable output to this file.
    #[arg(long, global = true)]
    report: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the fixed point and the complete CR set of a catalog setup.
    Enumerate {
        #[arg(long, default_value = STOP_ENTRY_ID)]
        setup: String,
        /// Also run the naive enumerator and check it agrees.
        #[arg(long)]
        naive: bool,
    },
    /// Emit the model candles of the layout.
    GenCandles {
        /// Order count for the canonical layout when no --grid is given.
        #[arg(long, default_value_t = 2)]
        m: usize,
        /// Only candles over the levels, without sublevels.
        #[arg(long)]
        representative: bool,
    },
    /// Answer one query: setup and candle as JSON.
    Oracle {
        #[arg(long)]
        setup: String,
        #[arg(long)]
        candle: String,
    },
    /// Grade an engine on every catalog setup, model candle and mode.
    Verify {
        /// `builtin:<name>` or a shell command speaking the line protocol.
        #[arg(long)]
        adapter: String,
        /// Stability samples per setup; 0 skips the audit.
        #[arg(long, default_value_t = 50)]
        stability_samples: usize,
        #[arg(long, default_value_t = 0x5eed)]
        seed: u64,
    },
    /// Expected results for every catalog setup, model candle and mode.
    ExportVectors,
    /// Run the internal consistency checks.
    Selftest,
    /// Serve a built-in engine over stdin/stdout.
    #[command(hide = true)]
    Serve {
        #[arg(long, default_value = "reference")]
        engine: String,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}: {1}")]
    File(PathBuf, io::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

fn input(e: impl std::fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::File(path.to_path_buf(), e))
}

struct Context {
    layout: Option<GridLayout>,
    tick: TickSize,
    catalog: SetupCatalog,
    modes: Vec<BacktestMode>,
    exec: Exec,
    jobs: usize,
}

impl Context {
    fn load(cli: &Cli) -> Result<Self, CliError> {
        let layout: Option<GridLayout> = match &cli.grid {
            Some(p) => Some(serde_json::from_str(&read(p)?).map_err(input)?),
            None => None,
        };
        let tick = layout.as_ref().map_or(TickSize::CENT, GridLayout::tick);
        let catalog = match &cli.catalog {
            Some(p) => SetupCatalog::from_json(&read(p)?, tick).map_err(input)?,
            None => SetupCatalog::default_catalog(),
        };
        let modes = cli
            .modes
            .iter()
            .map(|m| BacktestMode::from_wire(m.trim()).ok_or_else(|| CliError::Input(format!("unknown mode `{m}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        let jobs = cli
            .jobs
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
            .max(1);
        #[cfg(feature = "parallel")]
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
        let exec = if jobs == 1 { Exec::Sequential } else { Exec::default() };
        Ok(Self {
            layout,
            tick,
            catalog,
            modes,
            exec,
            jobs,
        })
    }
}

/// Writes `text` to `--report` if given, else to stdout.
fn emit(cli: &Cli, text: &str) -> Result<(), CliError> {
    match &cli.report {
        Some(p) => fs::write(p, text).map_err(|e| CliError::File(p.clone(), e)),
        None => match io::stdout().write_all(text.as_bytes()) {
            Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
            _ => Ok(()),
        },
    }
}

#[derive(Serialize)]
struct EnumerateOut<'a> {
    setup_id: &'a str,
    setup: WireSetup,
    levels: Vec<String>,
    n0: usize,
    states: usize,
    crs: serde_json::Value,
}

fn cmd_enumerate(cli: &Cli, ctx: &Context, id: &str, naive: bool) -> Result<i32, CliError> {
    let entry = ctx
        .catalog
        .get(id)
        .ok_or_else(|| CliError::Input(format!("no catalog setup `{id}`")))?;
    let layout = ctx
        .layout
        .clone()
        .unwrap_or_else(|| GridLayout::canonical(entry.setup.len()));
    let setup = layout.place(&entry.setup)?;
    let grid = layout.level_grid();
    let bfs = enumerate_bfs(&setup, &grid, ctx.exec).map_err(input)?;
    if naive {
        let fp = find_fixed_point(&setup, &grid, default_cap(setup.len()), ctx.exec).map_err(input)?;
        if fp.set != bfs.set || fp.n0 != bfs.depth {
            eprintln!("naive enumeration disagrees: n0 {} vs depth {}", fp.n0, bfs.depth);
            return Ok(1);
        }
    }
    let crs_json = bfs.set.to_json(layout.tick());
    let text = match cli.format {
        Format::Json => {
            let out = EnumerateOut {
                setup_id: id,
                setup: WireSetup::from_setup(&setup, layout.tick()),
                levels: grid.values().iter().map(|&p| layout.tick().format(p)).collect(),
                n0: bfs.depth,
                states: bfs.visited_states,
                crs: serde_json::from_str(&crs_json).expect("valid json"),
            };
            serde_json::to_string_pretty(&out).expect("serializable") + "\n"
        }
        _ => {
            let mut text = format!(
                "setup: {id}\nn0: {}\nCRs: {} over {} candles\n",
                bfs.depth,
                bfs.set.len(),
                bfs.set.candle_count()
            );
            let tick = layout.tick();
            for cr in bfs.set.crs() {
                let c = cr.candle;
                text += &format!(
                    "{} {} {} {} -> {} {}\n",
                    tick.format(c.open()),
                    tick.format(c.close()),
                    tick.format(c.high()),
                    tick.format(c.low()),
                    fill_text(cr.result.entry, tick),
                    fill_text(cr.result.exit, tick)
                );
            }
            text
        }
    };
    emit(cli, &text)?;
    Ok(0)
}

fn fill_text(fill: backtest_verify::types::Fill, tick: TickSize) -> String {
    fill.price().map_or_else(|| "-1".to_string(), |p| tick.format(p))
}

#[derive(Serialize)]
struct CandleFixture {
    layout: GridLayout,
    candles: Vec<WireCandle>,
}

fn cmd_gen_candles(cli: &Cli, ctx: &Context, m: usize, representative: bool) -> Result<i32, CliError> {
    if m == 0 {
        return Err(CliError::Input("m must be at least 1".into()));
    }
    let layout = ctx.layout.clone().unwrap_or_else(|| GridLayout::canonical(m));
    let tick = layout.tick();
    let candles: Vec<Candle> = if representative {
        gen_representative_candles(&layout)
    } else {
        gen_model_candles(&layout).iter().map(|mc| mc.candle()).collect()
    };
    let text = match cli.format {
        Format::Json => {
            let fixture = CandleFixture {
                candles: candles.iter().map(|c| WireCandle::from_candle(c, tick)).collect(),
                layout,
            };
            serde_json::to_string_pretty(&fixture).expect("serializable") + "\n"
        }
        _ => {
            let mut text = format!("# tick={tick}\n");
            let levels: Vec<String> = layout.levels().iter().map(|&p| tick.format(p)).collect();
            text += &format!("# levels={}\n", levels.join(" "));
            for (band, subs) in layout.sublevels().iter().enumerate() {
                let subs: Vec<String> = subs.iter().map(|&p| tick.format(p)).collect();
                text += &format!("# band{band}={}\n", subs.join(" "));
            }
            text += "open,close,high,low\n";
            for c in &candles {
                text += &format!(
                    "{},{},{},{}\n",
                    tick.format(c.open()),
                    tick.format(c.close()),
                    tick.format(c.high()),
                    tick.format(c.low())
                );
            }
            text
        }
    };
    emit(cli, &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct OracleOut {
    outcomes: Vec<WireResult>,
    picks: Vec<(String, WireResult)>,
}

fn cmd_oracle(cli: &Cli, ctx: &Context, setup: &str, candle: &str) -> Result<i32, CliError> {
    let tick = ctx.tick;
    let setup = serde_json::from_str::<WireSetup>(setup)
        .map_err(input)?
        .to_setup(tick)
        .map_err(input)?;
    let candle = serde_json::from_str::<WireCandle>(candle)
        .map_err(input)?
        .to_candle(tick)
        .map_err(input)?;
    let oracle = shared_oracle(ctx.layout.as_ref(), ctx.exec);
    let out = oracle.outcomes(&setup, &candle).map_err(input)?;
    let result = OracleOut {
        outcomes: out.results.iter().map(|r| WireResult::from_result(r, tick)).collect(),
        picks: ctx
            .modes
            .iter()
            .map(|&m| (m.wire_name().to_string(), WireResult::from_result(&out.pick(&setup, m), tick)))
            .collect(),
    };
    let text = match cli.format {
        Format::Json => serde_json::to_string_pretty(&result).expect("serializable") + "\n",
        _ => {
            let mut text = String::new();
            for r in &result.outcomes {
                text += &format!("outcome {}\n", serde_json::to_string(r).expect("serializable"));
            }
            for (m, r) in &result.picks {
                text += &format!("{m} {}\n", serde_json::to_string(r).expect("serializable"));
            }
            text
        }
    };
    emit(cli, &text)?;
    Ok(0)
}

fn cmd_verify(cli: &Cli, ctx: &Context, adapter: &str, samples: usize, seed: u64) -> Result<i32, CliError> {
    let oracle = shared_oracle(ctx.layout.as_ref(), ctx.exec);
    let suites = build_suites(&ctx.catalog, ctx.layout.as_ref(), &oracle, ctx.exec)?;
    let factory: Box<dyn AdapterFactory> = match adapter.strip_prefix("builtin:") {
        Some(name) => {
            let engine: BuiltinEngine = name.parse().map_err(input)?;
            Box::new(BuiltinAdapter::new(engine, ctx.tick, Arc::clone(&oracle)))
        }
        None => {
            if !(cli.timeout > 0.0 && cli.timeout.is_finite()) {
                return Err(CliError::Input("timeout must be positive".into()));
            }
            Box::new(SubprocessFactory {
                command: adapter.to_string(),
                timeout: Duration::from_secs_f64(cli.timeout),
                tick: ctx.tick,
            })
        }
    };
    let config = RunConfig {
        modes: ctx.modes.clone(),
        tick: ctx.tick,
        jobs: ctx.jobs,
        stability: (samples > 0).then_some(StabilityConfig {
            samples_per_setup: samples,
            seed,
        }),
    };
    let report = run_conformance(factory.as_ref(), &suites, &config);
    let json = report.to_json() + "\n";
    match (&cli.report, cli.format) {
        (Some(p), _) => {
            fs::write(p, &json).map_err(|e| CliError::File(p.clone(), e))?;
            print!("{}", report.summary());
        }
        (None, Format::Json) => print!("{json}"),
        (None, _) => print!("{}", report.summary()),
    }
    Ok(report.exit_code())
}

fn cmd_export(cli: &Cli, ctx: &Context) -> Result<i32, CliError> {
    let oracle = shared_oracle(ctx.layout.as_ref(), ctx.exec);
    let suites = build_suites(&ctx.catalog, ctx.layout.as_ref(), &oracle, ctx.exec)?;
    let rows = vector_rows(&suites, &ctx.modes, ctx.tick);
    let text = match cli.format {
        Format::Json => rows_to_json(&rows),
        _ => rows_to_csv(&rows)?,
    };
    emit(cli, &text)?;
    Ok(0)
}

fn cmd_selftest(cli: &Cli, ctx: &Context) -> Result<i32, CliError> {
    let report = selftest_with(SelftestParts::with_exec(ctx.exec));
    match cli.format {
        Format::Json => emit(cli, &(serde_json::to_string_pretty(&report).expect("serializable") + "\n"))?,
        _ => emit(cli, &report.summary())?,
    }
    Ok(if report.passed() { 0 } else { 1 })
}

fn cmd_serve(ctx: &Context, engine: &str) -> Result<i32, CliError> {
    let engine: BuiltinEngine = engine.parse().map_err(input)?;
    let oracle = shared_oracle(ctx.layout.as_ref(), ctx.exec);
    serve(engine, &oracle, ctx.tick, io::stdin().lock(), io::stdout().lock())?;
    Ok(0)
}

fn run(cli: &Cli) -> Result<i32, CliError> {
    let ctx = Context::load(cli)?;
    match &cli.command {
        Cmd::Enumerate { setup, naive } => cmd_enumerate(cli, &ctx, setup, *naive),
        Cmd::GenCandles { m, representative } => cmd_gen_candles(cli, &ctx, *m, *representative),
        Cmd::Oracle { setup, candle } => cmd_oracle(cli, &ctx, setup, candle),
        Cmd::Verify {
            adapter,
            stability_samples,
            seed,
        } => cmd_verify(cli, &ctx, adapter, *stability_samples, *seed),
        Cmd::ExportVectors => cmd_export(cli, &ctx),
        Cmd::Selftest => cmd_selftest(cli, &ctx),
        Cmd::Serve { engine } => cmd_serve(&ctx, engine),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
