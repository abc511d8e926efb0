//! Reference backtest engine.
//!
//! For a setup and an arbitrary candle the oracle moves both onto a model
//! layout, collapses sublevels, looks the candle up in the complete CR set
//! of the layout, and maps the results back. CR sets are built once per
//! setup shape and shared read-only afterwards.

use std::collections::{BTreeSet, HashMap};
use std::sync::{Arc, OnceLock, RwLock};

use thiserror::Error;

use crate::enumeration::{enumerate_bfs, CrSet, EnumError};
use crate::model_candles::{resubstitute, substitute_sublevels, GridLayout, LayoutError};
use crate::par::Exec;
use crate::transform::{canonicalize, TransformError};
use crate::types::{BacktestMode, Candle, Fill, PositionStatus, Setup, SetupShape, TradeResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Enumeration(#[from] EnumError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("no intra-period path produces candle {0}")]
    Unrealizable(Candle),
}

/// Every result some admissible path yields for one candle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutcomeSet {
    pub candle: Candle,
    pub results: BTreeSet<TradeResult>,
}

/// Cash value of a result if the position were closed at the candle's
/// close. For an already open position the unknown entry is dropped; it is
/// the same constant for every result of the candle.
pub fn valuation(result: &TradeResult, candle: &Candle, setup: &Setup) -> i128 {
    let dir = setup.side().sign();
    let out = i128::from(result.exit.price().unwrap_or(candle.close()).ticks());
    match (setup.position(), result.entry) {
        (PositionStatus::Flat, Fill::NoFill) => 0,
        (PositionStatus::Flat, Fill::At(entry)) => dir * (out - i128::from(entry.ticks())),
        _ => dir * out,
    }
}

/// Among equally valued results: keep the position open if possible, then
/// the smallest (entry, exit) with `NoFill` sorting last.
fn tie_key(r: &TradeResult) -> (bool, (bool, u64), (bool, u64)) {
    let key = |f: Fill| match f {
        Fill::At(p) => (false, p.ticks()),
        Fill::NoFill => (true, 0),
    };
    (r.exit.is_fill(), key(r.entry), key(r.exit))
}

impl OutcomeSet {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn is_unique(&self) -> bool {
        self.results.len() == 1
    }

    pub fn contains(&self, r: &TradeResult) -> bool {
        self.results.contains(r)
    }

    /// The results sharing the best (or worst) valuation.
    pub fn extremes(&self, setup: &Setup, best: bool) -> Vec<TradeResult> {
        let value = |r: &TradeResult| valuation(r, &self.candle, setup);
        let target = if best {
            self.results.iter().map(value).max()
        } else {
            self.results.iter().map(value).min()
        };
        self.results
            .iter()
            .filter(|r| Some(value(r)) == target)
            .copied()
            .collect()
    }

    /// The mode's answer for this candle.
    pub fn pick(&self, setup: &Setup, mode: BacktestMode) -> TradeResult {
        if self.is_unique() {
            return *self.results.first().expect("non-empty");
        }
        match mode {
            BacktestMode::Ignore => TradeResult::NONE,
            BacktestMode::BestCase | BacktestMode::WorstCase => self
                .extremes(setup, mode == BacktestMode::BestCase)
                .into_iter()
                .min_by_key(tie_key)
                .expect("non-empty"),
        }
    }

    /// Results an engine may return in this mode without being wrong: the
    /// pick plus anything tied with it.
    pub fn acceptable(&self, setup: &Setup, mode: BacktestMode) -> Vec<TradeResult> {
        match mode {
            _ if self.is_unique() => self.results.iter().copied().collect(),
            BacktestMode::Ignore => vec![TradeResult::NONE],
            BacktestMode::BestCase => self.extremes(setup, true),
            BacktestMode::WorstCase => self.extremes(setup, false),
        }
    }
}

/// Where the oracle takes its model layout from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayoutSource {
    /// [`GridLayout::canonical`] for the setup's order count.
    Canonical,
    Fixed(GridLayout),
}

#[derive(Debug)]
pub struct Oracle {
    source: LayoutSource,
    exec: Exec,
    cache: RwLock<HashMap<SetupShape, Arc<CrSet>>>,
}

impl Default for Oracle {
    fn default() -> Self {
        Self::new(LayoutSource::Canonical, Exec::default())
    }
}

impl Oracle {
    pub fn new(source: LayoutSource, exec: Exec) -> Self {
        Self {
            source,
            exec,
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn layout_for(&self, setup: &Setup) -> Result<GridLayout, OracleError> {
        match &self.source {
            LayoutSource::Canonical => Ok(GridLayout::canonical(setup.len())),
            LayoutSource::Fixed(layout) if layout.m() == setup.len() => Ok(layout.clone()),
            LayoutSource::Fixed(layout) => Err(LayoutError::OrderCount {
                layout: layout.m(),
                setup: setup.len(),
            }
            .into()),
        }
    }

    /// Complete CR set of the setup placed on its layout. Built on first
    /// use and cached by shape.
    pub fn crset(&self, setup: &Setup) -> Result<Arc<CrSet>, OracleError> {
        let shape = setup.shape();
        if let Some(set) = self.cache.read().expect("cache lock").get(&shape) {
            return Ok(Arc::clone(set));
        }
        let layout = self.layout_for(setup)?;
        let placed = layout.place(setup)?;
        let set = Arc::new(enumerate_bfs(&placed, &layout.level_grid(), self.exec)?.set);
        let mut cache = self.cache.write().expect("cache lock");
        Ok(Arc::clone(cache.entry(shape).or_insert(set)))
    }

    /// Builds the CR sets of all given setups up front.
    pub fn prepare<'a>(&self, setups: impl IntoIterator<Item = &'a Setup>) -> Result<(), OracleError> {
        for setup in setups {
            self.crset(setup)?;
        }
        Ok(())
    }

    pub fn outcomes(&self, setup: &Setup, candle: &Candle) -> Result<OutcomeSet, OracleError> {
        let layout = self.layout_for(setup)?;
        let canon = canonicalize(candle, setup, &layout)?;
        let (collapsed, resub) = substitute_sublevels(&layout, &canon.model);
        let set = self.crset(&canon.setup)?;
        let found = set.results_for(&collapsed);
        if found.is_empty() {
            return Err(OracleError::Unrealizable(*candle));
        }
        let back = canon.transform.inverse();
        let results = found
            .iter()
            .map(|r| back.apply_result(&resubstitute(r, &resub)))
            .collect::<Result<BTreeSet<_>, _>>()?;
        Ok(OutcomeSet {
            candle: *candle,
            results,
        })
    }

    pub fn engine(&self, setup: &Setup, candle: &Candle, mode: BacktestMode) -> Result<TradeResult, OracleError> {
        Ok(self.outcomes(setup, candle)?.pick(setup, mode))
    }
}

fn shared() -> &'static Oracle {
    static ORACLE: OnceLock<Oracle> = OnceLock::new();
    ORACLE.get_or_init(Oracle::default)
}

/// Outcome set with the process-wide canonical oracle.
pub fn outcomes(setup: &Setup, candle: &Candle) -> Result<OutcomeSet, OracleError> {
    shared().outcomes(setup, candle)
}

/// The reference engine's answer, using the process-wide canonical oracle.
pub fn reference_engine(setup: &Setup, candle: &Candle, mode: BacktestMode) -> Result<TradeResult, OracleError> {
    shared().engine(setup, candle, mode)
}
