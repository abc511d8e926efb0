//! Sends every (setup, model candle, mode) triple to an engine and grades
//! the answers against the oracle.

use std::fmt::Write as _;
use std::thread;

use serde::Serialize;

use super::adapter::{AdapterError, AdapterFactory, EngineAdapter};
use super::stability::{spotcheck_suite, StabilityConfig, StabilitySection};
use super::SetupSuite;
use crate::oracle::OutcomeSet;
use crate::price::TickSize;
use crate::types::{BacktestMode, Candle, Setup, TradeResult};
use crate::wire::{WireCandle, WireResult, WireSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictClass {
    Pass,
    Fail,
    /// Differs from the oracle's pick but is valued the same.
    TiePolicy,
    ProtocolError,
}

/// How an engine answered in ignore mode on a candle with one result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IgnoreSingleton {
    Answered,
    Blank,
}

/// Grades one answer. The second value is set for ignore-mode questions on
/// candles with a single non-empty result, where both answering and
/// returning no trade are accepted.
pub fn classify(
    outcomes: &OutcomeSet,
    setup: &Setup,
    mode: BacktestMode,
    actual: &Result<TradeResult, AdapterError>,
) -> (VerdictClass, Option<IgnoreSingleton>) {
    let Ok(actual) = actual else {
        return (VerdictClass::ProtocolError, None);
    };
    let expected = outcomes.pick(setup, mode);
    let singleton = mode == BacktestMode::Ignore && outcomes.is_unique() && expected != TradeResult::NONE;
    if singleton {
        return match *actual {
            r if r == expected => (VerdictClass::Pass, Some(IgnoreSingleton::Answered)),
            TradeResult::NONE => (VerdictClass::Pass, Some(IgnoreSingleton::Blank)),
            _ => (VerdictClass::Fail, None),
        };
    }
    if *actual == expected {
        (VerdictClass::Pass, None)
    } else if outcomes.acceptable(setup, mode).contains(actual) {
        (VerdictClass::TiePolicy, None)
    } else {
        (VerdictClass::Fail, None)
    }
}

/// A graded trial other than a plain pass, with everything needed to audit
/// it by hand.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CaseRecord {
    pub setup_id: String,
    pub setup: WireSetup,
    pub candle: WireCandle,
    pub mode: String,
    pub class: VerdictClass,
    pub expected: WireResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actual: Option<WireResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub outcomes: Vec<WireResult>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct Totals {
    pub trials: usize,
    pub pass: usize,
    pub fail: usize,
    pub tie_policy: usize,
    pub protocol_error: usize,
}

impl Totals {
    fn add(&mut self, class: VerdictClass) {
        self.trials += 1;
        match class {
            VerdictClass::Pass => self.pass += 1,
            VerdictClass::Fail => self.fail += 1,
            VerdictClass::TiePolicy => self.tie_policy += 1,
            VerdictClass::ProtocolError => self.protocol_error += 1,
        }
    }
}

/// Ignore-mode answers on candles with a single non-empty result.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IgnoreConvention {
    pub answered: usize,
    pub blank: usize,
}

impl IgnoreConvention {
    pub fn describe(&self) -> &'static str {
        match (self.answered, self.blank) {
            (0, 0) => "not exercised",
            (_, 0) => "answers unique results",
            (0, _) => "returns no trade whenever the mode is ignore",
            _ => "mixed",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConformanceReport {
    pub engine: String,
    pub tick: TickSize,
    pub modes: Vec<String>,
    pub setups: Vec<String>,
    pub totals: Totals,
    pub ignore_singletons: IgnoreConvention,
    pub cases: Vec<CaseRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilitySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conclusion: Option<String>,
}

impl ConformanceReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    /// 0 all pass, 1 some failure or stability counterexample, 2 some
    /// protocol error.
    pub fn exit_code(&self) -> i32 {
        let stability_failed = self
            .stability
            .as_ref()
            .is_some_and(|s| !s.counterexamples.is_empty());
        let stability_protocol = self.stability.as_ref().is_some_and(|s| s.protocol_errors > 0);
        if self.totals.protocol_error > 0 || stability_protocol {
            2
        } else if self.totals.fail > 0 || stability_failed {
            1
        } else {
            0
        }
    }

    pub fn summary(&self) -> String {
        let t = &self.totals;
        let mut out = String::new();
        let _ = writeln!(out, "engine: {}", self.engine);
        let _ = writeln!(out, "setups: {}  modes: {}", self.setups.len(), self.modes.join(","));
        let _ = writeln!(
            out,
            "trials: {}  pass: {}  fail: {}  tie-policy: {}  protocol-error: {}",
            t.trials, t.pass, t.fail, t.tie_policy, t.protocol_error
        );
        let _ = writeln!(out, "ignore mode on unique results: {}", self.ignore_singletons.describe());
        for case in self.cases.iter().filter(|c| c.class != VerdictClass::TiePolicy).take(10) {
            let _ = writeln!(
                out,
                "  {:?} {} {} mode={} expected={} actual={}",
                case.class,
                case.setup_id,
                serde_json::to_string(&case.candle).expect("serializable"),
                case.mode,
                serde_json::to_string(&case.expected).expect("serializable"),
                case.actual
                    .as_ref()
                    .map(|a| serde_json::to_string(a).expect("serializable"))
                    .or_else(|| case.error.clone())
                    .unwrap_or_default(),
            );
        }
        if let Some(s) = &self.stability {
            let _ = writeln!(
                out,
                "{}: {} samples, {} counterexamples, {} protocol errors",
                s.label,
                s.checked,
                s.counterexamples.len(),
                s.protocol_errors
            );
        }
        match &self.conclusion {
            Some(c) => {
                let _ = writeln!(out, "conclusion: {c}");
            }
            None => {
                let _ = writeln!(out, "conclusion: none (see failures above)");
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub modes: Vec<BacktestMode>,
    pub tick: TickSize,
    /// Engine connections used in parallel; setups are dealt round-robin.
    pub jobs: usize,
    /// `None` skips the stability audit.
    pub stability: Option<StabilityConfig>,
}

struct Graded {
    class: VerdictClass,
    ignore: Option<IgnoreSingleton>,
    record: Option<CaseRecord>,
}

struct SuiteOutcome {
    graded: Vec<Graded>,
    stability: Option<StabilitySection>,
}

fn grade_suite(adapter: &mut Option<Box<dyn EngineAdapter>>, spawn_error: &Option<AdapterError>, suite: &SetupSuite, config: &RunConfig) -> SuiteOutcome {
    let tick = config.tick;
    let mut graded = Vec::with_capacity(suite.cases.len() * config.modes.len());
    for (candle, outcomes) in &suite.cases {
        for &mode in &config.modes {
            let actual = match adapter.as_mut() {
                Some(a) => a.query(&suite.setup, candle, mode),
                None => Err(spawn_error.clone().expect("spawn error recorded")),
            };
            let (class, ignore) = classify(outcomes, &suite.setup, mode, &actual);
            let record = (class != VerdictClass::Pass).then(|| case_record(suite, candle, outcomes, mode, class, &actual, tick));
            graded.push(Graded { class, ignore, record });
        }
    }
    let stability = config.stability.as_ref().map(|cfg| match adapter.as_mut() {
        Some(a) => spotcheck_suite(a.as_mut(), suite, &config.modes, cfg, tick),
        None => StabilitySection::unreachable(cfg, suite.id.as_str()),
    });
    SuiteOutcome { graded, stability }
}

fn case_record(
    suite: &SetupSuite,
    candle: &Candle,
    outcomes: &OutcomeSet,
    mode: BacktestMode,
    class: VerdictClass,
    actual: &Result<TradeResult, AdapterError>,
    tick: TickSize,
) -> CaseRecord {
    CaseRecord {
        setup_id: suite.id.clone(),
        setup: WireSetup::from_setup(&suite.setup, tick),
        candle: WireCandle::from_candle(candle, tick),
        mode: mode.wire_name().to_string(),
        class,
        expected: WireResult::from_result(&outcomes.pick(&suite.setup, mode), tick),
        actual: actual.as_ref().ok().map(|r| WireResult::from_result(r, tick)),
        error: actual.as_ref().err().map(|e| e.to_string()),
        outcomes: outcomes.results.iter().map(|r| WireResult::from_result(r, tick)).collect(),
    }
}

/// Grades an engine on every suite. Engine failures become protocol errors
/// and the run carries on.
pub fn run_conformance(factory: &dyn AdapterFactory, suites: &[SetupSuite], config: &RunConfig) -> ConformanceReport {
    let jobs = config.jobs.clamp(1, suites.len().max(1));
    let mut per_suite: Vec<Option<SuiteOutcome>> = (0..suites.len()).map(|_| None).collect();
    thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs)
            .map(|worker| {
                scope.spawn(move || {
                    let (mut adapter, spawn_error) = match factory.spawn() {
                        Ok(a) => (Some(a), None),
                        Err(e) => (None, Some(e)),
                    };
                    (worker..suites.len())
                        .step_by(jobs)
                        .map(|i| (i, grade_suite(&mut adapter, &spawn_error, &suites[i], config)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, outcome) in h.join().expect("worker panicked") {
                per_suite[i] = Some(outcome);
            }
        }
    });

    let mut totals = Totals::default();
    let mut ignore = IgnoreConvention::default();
    let mut cases = Vec::new();
    let mut stability: Option<StabilitySection> = None;
    for outcome in per_suite.into_iter().map(|o| o.expect("every suite graded")) {
        for g in outcome.graded {
            totals.add(g.class);
            match g.ignore {
                Some(IgnoreSingleton::Answered) => ignore.answered += 1,
                Some(IgnoreSingleton::Blank) => ignore.blank += 1,
                None => {}
            }
            cases.extend(g.record);
        }
        if let Some(s) = outcome.stability {
            stability = Some(match stability {
                None => s,
                Some(acc) => acc.merge(s),
            });
        }
    }
    let clean = totals.fail == 0
        && totals.protocol_error == 0
        && stability
            .as_ref()
            .is_some_and(|s| s.counterexamples.is_empty() && s.protocol_errors == 0);
    let conclusion = clean.then(|| {
        "every model candle passes and the stability audit found no counterexample, so the engine is correct \
         for these setups at any ordered levels and on arbitrary candles (given it is stable under transformations)"
            .to_string()
    });
    ConformanceReport {
        engine: factory.name(),
        tick: config.tick,
        modes: config.modes.iter().map(|m| m.wire_name().to_string()).collect(),
        setups: suites.iter().map(|s| s.id.clone()).collect(),
        totals,
        ignore_singletons: ignore,
        cases,
        stability,
        conclusion,
    }
}
