//! Checks the tool against itself: the two enumerators against each other,
//! the substitution shortcut against brute force on a refined grid, fixed
//! goldens, count snapshots, and that every mutant engine gets caught.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::Serialize;

use super::adapter::{BuiltinAdapter, BuiltinEngine};
use super::catalog::{stop_entry_example, SetupCatalog, STOP_ENTRY_ID};
use super::conformance::{run_conformance, RunConfig};
use super::stability::StabilityConfig;
use super::{build_suites, shared_oracle};
use crate::enumeration::{default_cap, enumerate_bfs, fixed_point_in, EnumError, Region, SimFn};
use crate::model_candles::{
    gen_model_candles, gen_representative_candles, model_candles_filtered, GridLayout, PointLabel,
};
use crate::oracle::{Oracle, OracleError};
use crate::par::Exec;
use crate::price::{TickPrice, TickSize};
use crate::simulator::{run, GridSetup, LevelGrid};
use crate::transform::Transformation;
use crate::types::{BacktestMode, Candle, Fill, Setup, TradeResult};

/// Fixed point of the stop-entry example.
pub const STOP_ENTRY_N0: usize = 11;
/// Representative candles for two orders.
pub const REPRESENTATIVE_M2: usize = 105;
/// Model candles for two orders.
pub const MODEL_CANDLES_M2: usize = 264;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name,
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            let _ = writeln!(out, "[{}] {}: {}", if c.passed { "ok" } else { "FAIL" }, c.name, c.detail);
        }
        out
    }
}

/// Pieces the selftest can be run with in place of the real ones, so that
/// mutation tests can confirm the checks notice a broken build.
#[derive(Clone, Copy)]
pub struct SelftestParts {
    pub(crate) sim: SimFn,
    pub(crate) model_candles: fn(&GridLayout) -> Vec<Candle>,
    pub exec: Exec,
}

fn model_candle_values(layout: &GridLayout) -> Vec<Candle> {
    gen_model_candles(layout).iter().map(|mc| mc.candle()).collect()
}

impl Default for SelftestParts {
    fn default() -> Self {
        Self {
            sim: run,
            model_candles: model_candle_values,
            exec: Exec::default(),
        }
    }
}

impl SelftestParts {
    pub fn with_exec(exec: Exec) -> Self {
        Self {
            exec,
            ..Self::default()
        }
    }

    /// Without the sublevel prefix filter.
    pub fn without_prefix_filter(self) -> Self {
        Self {
            model_candles: |l| model_candles_filtered(l, false),
            ..self
        }
    }
}

fn region(grid: &LevelGrid, sim: SimFn) -> Region {
    Region {
        sim,
        ..Region::whole(grid)
    }
}

/// The naive enumerator at its fixed point and the breadth-first closure
/// agree for every catalog setup with at most `max_m` orders.
pub fn check_naive_vs_bfs(catalog: &SetupCatalog, max_m: usize, parts: SelftestParts) -> Check {
    let mut compared = 0;
    let mut problems = Vec::new();
    for entry in catalog.entries().iter().filter(|e| e.setup.len() <= max_m) {
        let layout = GridLayout::canonical(entry.setup.len());
        let grid = layout.level_grid();
        let outcome = (|| -> Result<Option<String>, EnumError> {
            let setup = layout.place(&entry.setup).expect("catalog fits its layout");
            let gs = GridSetup::new(&setup, &grid)?;
            let naive = fixed_point_in(&gs, grid.clone(), &region(&grid, parts.sim), default_cap(setup.len()), parts.exec)?;
            let bfs = enumerate_bfs(&setup, &grid, parts.exec)?;
            Ok(if naive.set != bfs.set {
                Some(format!("{}: sets differ ({} vs {} CRs)", entry.id, naive.set.len(), bfs.set.len()))
            } else if naive.n0 != bfs.depth {
                Some(format!("{}: fixed point {} but closure depth {}", entry.id, naive.n0, bfs.depth))
            } else {
                None
            })
        })();
        compared += 1;
        match outcome {
            Ok(None) => {}
            Ok(Some(p)) => problems.push(p),
            Err(e) => problems.push(format!("{}: {e}", entry.id)),
        }
    }
    let passed = problems.is_empty() && compared > 0;
    let detail = if passed {
        format!("{compared} setups agree")
    } else {
        problems.join("; ")
    };
    Check::new("naive-vs-bfs", passed, detail)
}

/// `n_0` of the stop-entry example on the two-order canonical grid.
pub fn check_fixed_point(parts: SelftestParts) -> Check {
    let layout = GridLayout::canonical(2);
    let grid = layout.level_grid();
    let setup = layout.place(&stop_entry_example()).expect("fits");
    let found = GridSetup::new(&setup, &grid)
        .map_err(EnumError::from)
        .and_then(|gs| fixed_point_in(&gs, grid.clone(), &region(&grid, parts.sim), default_cap(2), parts.exec));
    match found {
        Ok(fp) => Check::new(
            "fixed-point",
            fp.n0 == STOP_ENTRY_N0,
            format!("n0 = {} (expected {STOP_ENTRY_N0}), {} CRs", fp.n0, fp.set.len()),
        ),
        Err(e) => Check::new("fixed-point", false, e.to_string()),
    }
}

/// Results for a candle by brute force on the layout's levels with the
/// candle's sublevels added as ordinary grid points. Only series that start
/// at the open and stay inside the candle's range are walked.
fn refined_results(
    setup: &Setup,
    layout: &GridLayout,
    candle: &Candle,
    parts: SelftestParts,
) -> Result<BTreeSet<TradeResult>, EnumError> {
    let mut values: Vec<TickPrice> = layout.levels().to_vec();
    for v in candle.values() {
        if matches!(layout.label_of(v), Some(PointLabel::Sub { .. })) {
            values.push(v);
        }
    }
    values.sort_unstable();
    values.dedup();
    let grid = LevelGrid::new(values)?;
    let idx = |p: TickPrice| grid.index_of(p).expect("candle value is a grid point");
    let gs = GridSetup::new(setup, &grid)?;
    let region = Region {
        low: idx(candle.low()),
        high: idx(candle.high()),
        starts: vec![idx(candle.open())],
        sim: parts.sim,
    };
    let cap = 4 * grid.len() * grid.len();
    let fp = fixed_point_in(&gs, grid, &region, cap, parts.exec)?;
    Ok(fp.set.results_for(candle).into_iter().collect())
}

/// The substitution path of the oracle against refined-grid brute force on
/// every model candle of the stop-entry example.
pub fn check_substitution_soundness(oracle: &Oracle, parts: SelftestParts) -> Check {
    let layout = GridLayout::canonical(2);
    let setup = layout.place(&stop_entry_example()).expect("fits");
    let candles = (parts.model_candles)(&layout);
    let mismatches: Vec<String> = parts
        .exec
        .map(&candles, |candle| {
            let via_oracle = oracle.outcomes(&setup, candle).map(|o| o.results);
            let brute = refined_results(&setup, &layout, candle, parts);
            match (via_oracle, brute) {
                (Ok(a), Ok(b)) if a == b => None,
                (Ok(a), Ok(b)) => Some(format!("{candle}: oracle {a:?} vs brute force {b:?}")),
                (Err(e), _) => Some(format!("{candle}: {e}")),
                (_, Err(e)) => Some(format!("{candle}: {e}")),
            }
        })
        .into_iter()
        .flatten()
        .collect();
    let detail = match mismatches.first() {
        None => format!("{} model candles agree", candles.len()),
        Some(first) => format!("{} mismatches, first {first}", mismatches.len()),
    };
    Check::new("substitution-soundness", mismatches.is_empty(), detail)
}

fn at(p: u64) -> Fill {
    Fill::At(TickPrice(p))
}

/// Fixed examples for the outcome sets, the transformation, and the
/// substitution shortcut.
pub fn check_goldens(oracle: &Oracle) -> Check {
    let mut problems = Vec::new();
    let setup = stop_entry_example();
    let mut expect = |what: &str, ok: Result<bool, OracleError>| match ok {
        Ok(true) => {}
        Ok(false) => problems.push(what.to_string()),
        Err(e) => problems.push(format!("{what}: {e}")),
    };

    let candle = Candle::from_ticks(52, 53, 53, 51).expect("valid");
    expect(
        "two outcomes for (52, 53, 53, 51)",
        oracle.outcomes(&setup, &candle).map(|o| {
            let expected: BTreeSet<_> = [TradeResult::new(at(53), at(51)), TradeResult::new(at(53), Fill::NoFill)].into();
            o.results == expected
                && o.pick(&setup, BacktestMode::BestCase) == TradeResult::new(at(53), Fill::NoFill)
                && o.pick(&setup, BacktestMode::WorstCase) == TradeResult::new(at(53), at(51))
                && o.pick(&setup, BacktestMode::Ignore) == TradeResult::NONE
        }),
    );
    let flat = Candle::from_ticks(52, 52, 52, 52).expect("valid");
    expect(
        "no trade for (52, 52, 52, 52)",
        oracle.outcomes(&setup, &flat).map(|o| o.results == [TradeResult::NONE].into()),
    );
    let gap = Candle::from_ticks(54, 52, 54, 52).expect("valid");
    expect(
        "gap entry for (54, 52, 54, 52)",
        oracle
            .outcomes(&setup, &gap)
            .map(|o| o.results == [TradeResult::new(at(54), Fill::NoFill)].into()),
    );

    let tr = Transformation::from_ticks(&[(50, 101), (54, 109)]).expect("increasing");
    let mapped = tr.apply_values(&[52, 51, 53, 51, 53, 51].map(TickPrice));
    expect(
        "transformed tuple",
        Ok(mapped.ok() == Some([105, 103, 107, 103, 107, 103].map(TickPrice).to_vec())),
    );

    let layout = GridLayout::canonical(2);
    let l = layout.levels();
    let s = layout.sublevels()[2];
    let placed = layout.place(&setup).expect("fits");
    let mc = Candle::new(s[1], l[4], s[2], l[3]).expect("valid");
    expect(
        "sublevel open",
        oracle
            .outcomes(&placed, &mc)
            .map(|o| o.results == [TradeResult::new(Fill::At(s[1]), Fill::NoFill)].into()),
    );

    let passed = problems.is_empty();
    Check::new(
        "goldens",
        passed,
        if passed { "all goldens hold".to_string() } else { problems.join("; ") },
    )
}

pub fn check_counts(parts: SelftestParts) -> Check {
    let layout = GridLayout::canonical(2);
    let reps = gen_representative_candles(&layout).len();
    let models = (parts.model_candles)(&layout).len();
    Check::new(
        "count-snapshots",
        reps == REPRESENTATIVE_M2 && models == MODEL_CANDLES_M2,
        format!("{reps} representative (expected {REPRESENTATIVE_M2}), {models} model (expected {MODEL_CANDLES_M2})"),
    )
}

/// Every mutant fails conformance or the stability audit on the stop-entry
/// setup; the reference does neither.
pub fn check_mutants(oracle: &Arc<Oracle>, exec: Exec) -> Check {
    let catalog = SetupCatalog::default_catalog();
    let only = SetupCatalog::new(vec![catalog.get(STOP_ENTRY_ID).expect("in catalog").clone()]).expect("non-empty");
    let suites = match build_suites(&only, None, oracle, exec) {
        Ok(s) => s,
        Err(e) => return Check::new("mutant-detection", false, e.to_string()),
    };
    let config = RunConfig {
        modes: BacktestMode::ALL.to_vec(),
        tick: TickSize::CENT,
        jobs: 1,
        stability: Some(StabilityConfig::default()),
    };
    let mut lines = Vec::new();
    let mut passed = true;
    for engine in BuiltinEngine::ALL {
        let adapter = BuiltinAdapter::new(engine, TickSize::CENT, Arc::clone(oracle));
        let report = run_conformance(&adapter, &suites, &config);
        let counter = report.stability.as_ref().map_or(0, |s| s.counterexamples.len());
        let caught = report.totals.fail > 0 || counter > 0;
        let ok = if engine == BuiltinEngine::Reference {
            !caught && report.totals.tie_policy == 0
        } else {
            caught
        };
        passed &= ok;
        lines.push(format!("{engine}: {} fail, {counter} counterexamples", report.totals.fail));
    }
    Check::new("mutant-detection", passed, lines.join(", "))
}

pub fn selftest_with(parts: SelftestParts) -> SelftestReport {
    let oracle = shared_oracle(None, parts.exec);
    let catalog = SetupCatalog::default_catalog();
    SelftestReport {
        checks: vec![
            check_naive_vs_bfs(&catalog, 2, parts),
            check_fixed_point(parts),
            check_substitution_soundness(&oracle, parts),
            check_goldens(&oracle),
            check_counts(parts),
            check_mutants(&oracle, parts.exec),
        ],
    }
}

pub fn selftest() -> SelftestReport {
    selftest_with(SelftestParts::default())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::GridResult;
    use crate::simulator::LevelIndex;

    #[test]
    fn fresh_build_is_green() {
        let report = selftest();
        assert!(report.passed(), "{}", report.summary());
    }

    /// Forgets the exit whenever the series ends on the exit level.
    fn forgets_final_exit(setup: &GridSetup, seq: &[LevelIndex]) -> GridResult {
        let honest = run(setup, seq);
        if honest.exit.is_some() && seq.last() == honest.exit.as_ref() {
            GridResult { exit: None, ..honest }
        } else {
            honest
        }
    }

    #[test]
    fn broken_exit_arming_is_noticed() {
        let parts = SelftestParts {
            sim: forgets_final_exit,
            ..SelftestParts::default()
        };
        assert!(!check_substitution_soundness(&Oracle::default(), parts).passed);
        assert!(!check_naive_vs_bfs(&SetupCatalog::default_catalog(), 2, parts).passed);
    }

    #[test]
    fn missing_prefix_filter_is_noticed() {
        let parts = SelftestParts::default().without_prefix_filter();
        assert!(!check_counts(parts).passed);
    }
}
