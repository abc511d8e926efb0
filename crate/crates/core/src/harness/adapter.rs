//! Engines under test and how to reach them.
//!
//! External engines run as subprocesses speaking line-delimited JSON: one
//! request object per line on stdin, one result object per line on stdout.
//! Built-in engines (the reference and the mutants) answer in process.

use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::str::FromStr;
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use thiserror::Error;

use crate::oracle::Oracle;
use crate::price::{TickPrice, TickSize};
use crate::types::{BacktestMode, Candle, Fill, Setup, TradeResult};
use crate::wire::{WireRequest, WireResult};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AdapterError {
    #[error("could not start `{command}`: {reason}")]
    Spawn { command: String, reason: String },
    #[error("engine i/o failed: {0}")]
    Io(String),
    #[error("no answer within {0:?}")]
    Timeout(Duration),
    #[error("engine closed its output")]
    Closed,
    #[error("malformed response `{line}`: {reason}")]
    Malformed { line: String, reason: String },
    #[error("engine error: {0}")]
    Engine(String),
}

/// One connection to an engine. Requests are answered one at a time.
pub trait EngineAdapter: Send {
    fn query(&mut self, setup: &Setup, candle: &Candle, mode: BacktestMode) -> Result<TradeResult, AdapterError>;
}

/// Opens connections to one engine; a run may hold several at once.
pub trait AdapterFactory: Sync {
    fn name(&self) -> String;
    fn spawn(&self) -> Result<Box<dyn EngineAdapter>, AdapterError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BuiltinEngine {
    Reference,
    /// Answers the worst case whatever the mode.
    AlwaysWorst,
    /// Reports every entry fill one tick too high.
    OffByOneEntry,
    /// Gives up on any candle whose range contains the absolute price 53.00.
    PricePivot,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown engine `{0}`")]
pub struct UnknownEngine(String);

impl BuiltinEngine {
    pub const ALL: [BuiltinEngine; 4] = [
        BuiltinEngine::Reference,
        BuiltinEngine::AlwaysWorst,
        BuiltinEngine::OffByOneEntry,
        BuiltinEngine::PricePivot,
    ];

    pub const MUTANTS: [BuiltinEngine; 3] = [
        BuiltinEngine::AlwaysWorst,
        BuiltinEngine::OffByOneEntry,
        BuiltinEngine::PricePivot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinEngine::Reference => "reference",
            BuiltinEngine::AlwaysWorst => "always-worst",
            BuiltinEngine::OffByOneEntry => "off-by-one-entry",
            BuiltinEngine::PricePivot => "price-pivot",
        }
    }

    pub fn answer(
        self,
        oracle: &Oracle,
        tick: TickSize,
        setup: &Setup,
        candle: &Candle,
        mode: BacktestMode,
    ) -> Result<TradeResult, AdapterError> {
        let out = oracle
            .outcomes(setup, candle)
            .map_err(|e| AdapterError::Engine(e.to_string()))?;
        Ok(match self {
            BuiltinEngine::Reference => out.pick(setup, mode),
            BuiltinEngine::AlwaysWorst => out.pick(setup, BacktestMode::WorstCase),
            BuiltinEngine::OffByOneEntry => {
                let mut r = out.pick(setup, mode);
                if let Fill::At(p) = r.entry {
                    r.entry = Fill::At(TickPrice(p.ticks() + 1));
                }
                r
            }
            BuiltinEngine::PricePivot => {
                let pivot = tick.parse("53.00").ok();
                match pivot {
                    Some(p) if candle.low() <= p && p <= candle.high() => TradeResult::NONE,
                    _ => out.pick(setup, mode),
                }
            }
        })
    }
}

impl fmt::Display for BuiltinEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BuiltinEngine {
    type Err = UnknownEngine;

    fn from_str(s: &str) -> Result<Self, UnknownEngine> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| UnknownEngine(s.to_string()))
    }
}

/// In-process connection to a built-in engine.
#[derive(Debug, Clone)]
pub struct BuiltinAdapter {
    engine: BuiltinEngine,
    tick: TickSize,
    oracle: Arc<Oracle>,
}

impl BuiltinAdapter {
    pub fn new(engine: BuiltinEngine, tick: TickSize, oracle: Arc<Oracle>) -> Self {
        Self { engine, tick, oracle }
    }
}

impl EngineAdapter for BuiltinAdapter {
    fn query(&mut self, setup: &Setup, candle: &Candle, mode: BacktestMode) -> Result<TradeResult, AdapterError> {
        self.engine.answer(&self.oracle, self.tick, setup, candle, mode)
    }
}

impl AdapterFactory for BuiltinAdapter {
    fn name(&self) -> String {
        format!("builtin:{}", self.engine)
    }

    fn spawn(&self) -> Result<Box<dyn EngineAdapter>, AdapterError> {
        Ok(Box::new(self.clone()))
    }
}

/// Starts a shell command as the engine for each connection.
#[derive(Debug, Clone)]
pub struct SubprocessFactory {
    pub command: String,
    pub timeout: Duration,
    pub tick: TickSize,
}

impl AdapterFactory for SubprocessFactory {
    fn name(&self) -> String {
        self.command.clone()
    }

    fn spawn(&self) -> Result<Box<dyn EngineAdapter>, AdapterError> {
        Ok(Box::new(SubprocessAdapter {
            config: self.clone(),
            running: Some(Running::start(&self.command)?),
        }))
    }
}

struct Running {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Running {
    fn start(command: &str) -> Result<Self, AdapterError> {
        let spawn_err = |e: std::io::Error| AdapterError::Spawn {
            command: command.to_string(),
            reason: e.to_string(),
        };
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(spawn_err)?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Self { child, stdin, lines })
    }

    fn stop(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// One subprocess. After a timeout or a crash the process is killed and a
/// fresh one is started for the next request.
pub struct SubprocessAdapter {
    config: SubprocessFactory,
    running: Option<Running>,
}

impl SubprocessAdapter {
    fn exchange(&mut self, line: &str) -> Result<String, AdapterError> {
        if self.running.is_none() {
            self.running = Some(Running::start(&self.config.command)?);
        }
        let proc = self.running.as_mut().expect("started");
        let sent = writeln!(proc.stdin, "{line}").and_then(|_| proc.stdin.flush());
        let outcome = match sent {
            Err(e) => Err(AdapterError::Io(e.to_string())),
            Ok(()) => match proc.lines.recv_timeout(self.config.timeout) {
                Ok(Ok(reply)) => return Ok(reply),
                Ok(Err(e)) => Err(AdapterError::Io(e.to_string())),
                Err(RecvTimeoutError::Timeout) => Err(AdapterError::Timeout(self.config.timeout)),
                Err(RecvTimeoutError::Disconnected) => Err(AdapterError::Closed),
            },
        };
        if let Some(p) = self.running.take() {
            p.stop();
        }
        outcome
    }
}

impl EngineAdapter for SubprocessAdapter {
    fn query(&mut self, setup: &Setup, candle: &Candle, mode: BacktestMode) -> Result<TradeResult, AdapterError> {
        let tick = self.config.tick;
        let request = serde_json::to_string(&WireRequest::new(setup, candle, mode, tick)).expect("serializable");
        let reply = self.exchange(&request)?;
        let malformed = |reason: String| AdapterError::Malformed {
            line: reply.clone(),
            reason,
        };
        let wire: WireResult = serde_json::from_str(&reply).map_err(|e| malformed(e.to_string()))?;
        wire.to_result(tick).map_err(|e| malformed(e.to_string()))
    }
}

impl Drop for SubprocessAdapter {
    fn drop(&mut self) {
        if let Some(p) = self.running.take() {
            p.stop();
        }
    }
}

/// Answers protocol requests from `input` with a built-in engine until the
/// input ends. Bad requests get an `{"error": ...}` line.
pub fn serve(
    engine: BuiltinEngine,
    oracle: &Oracle,
    tick: TickSize,
    input: impl BufRead,
    mut output: impl Write,
) -> std::io::Result<()> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let answer = serde_json::from_str::<WireRequest>(&line)
            .map_err(|e| e.to_string())
            .and_then(|req| req.decode(tick).map_err(|e| e.to_string()))
            .and_then(|(setup, candle, mode)| {
                engine
                    .answer(oracle, tick, &setup, &candle, mode)
                    .map_err(|e| e.to_string())
            });
        let text = match answer {
            Ok(r) => serde_json::to_string(&WireResult::from_result(&r, tick)),
            Err(e) => serde_json::to_string(&serde_json::json!({ "error": e })),
        }
        .expect("serializable");
        writeln!(output, "{text}")?;
        output.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::catalog::stop_entry_example;

    fn oracle() -> Arc<Oracle> {
        Arc::new(Oracle::default())
    }

    #[test]
    fn engine_names_round_trip() {
        for e in BuiltinEngine::ALL {
            assert_eq!(e.name().parse::<BuiltinEngine>().unwrap(), e);
        }
        assert!("nope".parse::<BuiltinEngine>().is_err());
    }

    #[test]
    fn mutants_differ_from_reference() {
        let oracle = oracle();
        let setup = stop_entry_example();
        let candle = Candle::from_ticks(52, 53, 53, 51).unwrap();
        let ask = |e: BuiltinEngine, mode| e.answer(&oracle, TickSize::ONE, &setup, &candle, mode).unwrap();
        assert_ne!(
            ask(BuiltinEngine::AlwaysWorst, BacktestMode::BestCase),
            ask(BuiltinEngine::Reference, BacktestMode::BestCase)
        );
        assert_eq!(
            ask(BuiltinEngine::OffByOneEntry, BacktestMode::WorstCase).entry,
            Fill::At(TickPrice(54))
        );
        // 53.00 at tick 1 is 53, inside [51, 53]
        assert_eq!(ask(BuiltinEngine::PricePivot, BacktestMode::WorstCase), TradeResult::NONE);
    }

    #[test]
    fn serve_speaks_the_protocol() {
        let oracle = oracle();
        let setup = stop_entry_example();
        let candle = Candle::from_ticks(5200, 5300, 5300, 5100).unwrap();
        let setup = setup.with_levels(&[TickPrice(5100), TickPrice(5300)]).unwrap();
        let req = serde_json::to_string(&WireRequest::new(&setup, &candle, BacktestMode::WorstCase, TickSize::CENT)).unwrap();
        let input = format!("{req}\n\nnot json\n");
        let mut out = Vec::new();
        serve(BuiltinEngine::Reference, &oracle, TickSize::CENT, input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], r#"{"entry":"53.00","exit":"51.00"}"#);
        assert!(lines[1].starts_with(r#"{"error":"#));
        assert_eq!(lines.len(), 2);
    }

    #[test]
    fn subprocess_round_trip_and_failures() {
        let setup = stop_entry_example().with_levels(&[TickPrice(5100), TickPrice(5300)]).unwrap();
        let candle = Candle::from_ticks(5200, 5300, 5300, 5100).unwrap();
        let factory = |command: &str| SubprocessFactory {
            command: command.to_string(),
            timeout: Duration::from_millis(500),
            tick: TickSize::CENT,
        };
        let mut echo = factory(r#"while read -r line; do echo '{"entry":"53.00","exit":-1}'; done"#)
            .spawn()
            .unwrap();
        let r = echo.query(&setup, &candle, BacktestMode::BestCase).unwrap();
        assert_eq!(r, TradeResult::new(Fill::At(TickPrice(5300)), Fill::NoFill));

        let mut garbage = factory("while read -r line; do echo nonsense; done").spawn().unwrap();
        assert!(matches!(
            garbage.query(&setup, &candle, BacktestMode::BestCase),
            Err(AdapterError::Malformed { .. })
        ));

        let mut silent = factory("sleep 5").spawn().unwrap();
        assert_eq!(
            silent.query(&setup, &candle, BacktestMode::BestCase),
            Err(AdapterError::Timeout(Duration::from_millis(500)))
        );

        let mut dead = factory("true").spawn().unwrap();
        let err = dead.query(&setup, &candle, BacktestMode::BestCase).unwrap_err();
        assert!(matches!(err, AdapterError::Closed | AdapterError::Io(_)), "{err:?}");
        // a fresh process is started for the next request
        assert!(dead.query(&setup, &candle, BacktestMode::BestCase).is_err());
    }
}
