//! The set of all candle/result pairs (CRs) a setup admits on a level grid.
//!
//! `M_n` is the set of CRs produced by series of size at most `n`. It grows
//! with `n` and, once two consecutive sizes agree, it never grows again, so
//! the complete CR set is `M_{n_0}` for the first such `n_0`.
//!
//! Two routes compute it:
//!
//! * [`enumerate_naive`] / [`find_fixed_point`] simulate every series of a
//!   given size. Exponential, and kept as the verification oracle.
//! * [`enumerate_bfs`] exploits that two series with the same CR stay
//!   indistinguishable under any common continuation. A CR is therefore a
//!   complete search state, and a breadth-first closure over CRs visits
//!   each one once.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::par::Exec;
use crate::price::TickSize;
use crate::simulator::{run, GridCandle, GridError, GridResult, GridSetup, LevelGrid, LevelIndex};
use crate::types::{Candle, Cr, OrderKind, Setup, TradeResult};
use crate::wire::{WireCandle, WireResult};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnumError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("size bound must be at least {min}, got {got}")]
    Bound { min: usize, got: usize },
    #[error("no fixed point up to size {0}")]
    CapExceeded(usize),
    #[error("M_{n0} = M_{} but M_{} grew", n0 + 1, n0 + 2)]
    Unstable { n0: usize },
}

/// A CR in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCr {
    pub candle: GridCandle,
    pub result: GridResult,
}

/// A finite set of CRs over one grid, grouped by candle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrSet {
    grid: LevelGrid,
    by_candle: BTreeMap<GridCandle, BTreeSet<GridResult>>,
}

impl CrSet {
    pub fn new(grid: LevelGrid) -> Self {
        Self {
            grid,
            by_candle: BTreeMap::new(),
        }
    }

    pub fn from_grid_crs(grid: LevelGrid, crs: impl IntoIterator<Item = GridCr>) -> Self {
        let mut set = Self::new(grid);
        for cr in crs {
            set.insert(cr);
        }
        set
    }

    pub fn insert(&mut self, cr: GridCr) -> bool {
        self.by_candle.entry(cr.candle).or_default().insert(cr.result)
    }

    pub fn grid(&self) -> &LevelGrid {
        &self.grid
    }

    /// Number of CRs.
    pub fn len(&self) -> usize {
        self.by_candle.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_candle.is_empty()
    }

    pub fn candle_count(&self) -> usize {
        self.by_candle.len()
    }

    pub fn grid_candles(&self) -> impl Iterator<Item = &GridCandle> {
        self.by_candle.keys()
    }

    pub fn grid_results(&self, candle: &GridCandle) -> Option<&BTreeSet<GridResult>> {
        self.by_candle.get(candle)
    }

    /// Results admitted for a priced candle; empty if the candle is not
    /// realizable on this grid.
    pub fn results_for(&self, candle: &Candle) -> Vec<TradeResult> {
        GridCandle::from_candle(candle, &self.grid)
            .and_then(|gc| self.by_candle.get(&gc))
            .map(|rs| rs.iter().map(|r| r.to_result(&self.grid)).collect())
            .unwrap_or_default()
    }

    /// CRs in canonical order: candle by (open, close, high, low), then
    /// result with no-fill first.
    pub fn iter(&self) -> impl Iterator<Item = GridCr> + '_ {
        self.by_candle
            .iter()
            .flat_map(|(c, rs)| rs.iter().map(|r| GridCr { candle: *c, result: *r }))
    }

    pub fn crs(&self) -> impl Iterator<Item = Cr> + '_ {
        self.iter().map(|cr| Cr {
            candle: cr.candle.to_candle(&self.grid),
            result: cr.result.to_result(&self.grid),
        })
    }

    pub fn is_subset(&self, other: &CrSet) -> bool {
        self.by_candle.iter().all(|(c, rs)| {
            other
                .by_candle
                .get(c)
                .is_some_and(|os| rs.is_subset(os))
        })
    }

    /// Sorted JSON array of `{"candle": .., "result": ..}` objects.
    pub fn to_json(&self, tick: TickSize) -> String {
        #[derive(Serialize)]
        struct Entry {
            candle: WireCandle,
            result: WireResult,
        }
        let entries: Vec<Entry> = self
            .crs()
            .map(|cr| Entry {
                candle: WireCandle::from_candle(&cr.candle, tick),
                result: WireResult::from_result(&cr.result, tick),
            })
            .collect();
        serde_json::to_string_pretty(&entries).expect("serializable")
    }
}

/// Simulation routine the naive enumerator applies to each series.
pub(crate) type SimFn = fn(&GridSetup, &[LevelIndex]) -> GridResult;

/// Region of the grid the naive enumerator walks in: series start at one
/// of `starts` and never leave `[low, high]`.
#[derive(Debug, Clone)]
pub(crate) struct Region {
    pub low: LevelIndex,
    pub high: LevelIndex,
    pub starts: Vec<LevelIndex>,
    pub sim: SimFn,
}

impl Region {
    pub fn whole(grid: &LevelGrid) -> Self {
        Self {
            low: 0,
            high: grid.top(),
            starts: (0..=grid.top()).collect(),
            sim: run,
        }
    }
}

/// Prefix length at which the naive search splits into parallel tasks.
const SPLIT_DEPTH: usize = 6;

/// CRs of every series of size exactly `size` in `region`.
pub(crate) fn naive_layer(setup: &GridSetup, region: &Region, size: usize, exec: Exec) -> Vec<GridCr> {
    debug_assert!(size >= 1);
    let split = size.min(SPLIT_DEPTH);
    let mut prefixes: Vec<Vec<LevelIndex>> = region.starts.iter().map(|&s| vec![s]).collect();
    for _ in 1..split {
        prefixes = prefixes
            .into_iter()
            .flat_map(|p| {
                let last = *p.last().expect("non-empty");
                neighbours(last, region).map(move |n| {
                    let mut q = p.clone();
                    q.push(n);
                    q
                })
            })
            .collect();
    }
    exec.flat_map(&prefixes, |prefix| {
        let mut found = HashSet::new();
        let mut seq = prefix.clone();
        seq.reserve(size - seq.len());
        extend_all(setup, region, size, &mut seq, &mut found);
        found.into_iter().collect()
    })
}

fn neighbours(at: LevelIndex, region: &Region) -> impl Iterator<Item = LevelIndex> {
    let down = at.checked_sub(1).filter(|&d| d >= region.low);
    let up = at.checked_add(1).filter(|&u| u <= region.high);
    down.into_iter().chain(up)
}

fn extend_all(
    setup: &GridSetup,
    region: &Region,
    size: usize,
    seq: &mut Vec<LevelIndex>,
    found: &mut HashSet<GridCr>,
) {
    if seq.len() == size {
        found.insert(GridCr {
            candle: crate::simulator::grid_candle_of(seq),
            result: (region.sim)(setup, seq),
        });
        return;
    }
    let last = *seq.last().expect("non-empty");
    for next in neighbours(last, region) {
        seq.push(next);
        extend_all(setup, region, size, seq, found);
        seq.pop();
    }
}

/// `M_n`: CRs of all series of size at most `n`, by simulating each one.
pub fn enumerate_naive(setup: &Setup, grid: &LevelGrid, n: usize, exec: Exec) -> Result<CrSet, EnumError> {
    if n < 1 {
        return Err(EnumError::Bound { min: 1, got: n });
    }
    let indexed = GridSetup::new(setup, grid)?;
    let region = Region::whole(grid);
    let mut set = CrSet::new(grid.clone());
    for size in 1..=n {
        for cr in naive_layer(&indexed, &region, size, exec) {
            set.insert(cr);
        }
    }
    Ok(set)
}

/// Fixed point of the naive enumeration.
#[derive(Debug, Clone)]
pub struct FixedPoint {
    /// Smallest `n` with `M_n = M_{n+1}`.
    pub n0: usize,
    pub set: CrSet,
}

/// Default size cap: `4 (2m + 1)^2`.
pub fn default_cap(m: usize) -> usize {
    4 * (2 * m + 1).pow(2)
}

/// Grows `M_n` until it stops changing, then spot-checks `M_{n0 + 2}`.
pub fn find_fixed_point(setup: &Setup, grid: &LevelGrid, n_max: usize, exec: Exec) -> Result<FixedPoint, EnumError> {
    if n_max < 2 {
        return Err(EnumError::Bound { min: 2, got: n_max });
    }
    let indexed = GridSetup::new(setup, grid)?;
    let region = Region::whole(grid);
    fixed_point_in(&indexed, grid.clone(), &region, n_max, exec)
}

pub(crate) fn fixed_point_in(
    setup: &GridSetup,
    grid: LevelGrid,
    region: &Region,
    n_max: usize,
    exec: Exec,
) -> Result<FixedPoint, EnumError> {
    let mut set = CrSet::new(grid);
    for cr in naive_layer(setup, region, 1, exec) {
        set.insert(cr);
    }
    let mut n = 1;
    loop {
        if n + 1 > n_max {
            return Err(EnumError::CapExceeded(n_max));
        }
        let mut grew = false;
        for cr in naive_layer(setup, region, n + 1, exec) {
            grew |= set.insert(cr);
        }
        if !grew {
            break;
        }
        n += 1;
    }
    let n0 = n;
    let extra = naive_layer(setup, region, n0 + 2, exec);
    if extra.iter().any(|cr| {
        set.grid_results(&cr.candle)
            .is_none_or(|rs| !rs.contains(&cr.result))
    }) {
        return Err(EnumError::Unstable { n0 });
    }
    Ok(FixedPoint { n0, set })
}

/// Search state of the breadth-first closure. It carries exactly the
/// fields of a CR; the current price is the running close.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EnumState {
    pub open: LevelIndex,
    pub current: LevelIndex,
    pub high: LevelIndex,
    pub low: LevelIndex,
    pub entry: Option<LevelIndex>,
    pub exit: Option<LevelIndex>,
}

impl EnumState {
    pub fn cr(&self) -> GridCr {
        GridCr {
            candle: GridCandle {
                open: self.open,
                close: self.current,
                high: self.high,
                low: self.low,
            },
            result: GridResult {
                entry: self.entry,
                exit: self.exit,
            },
        }
    }
}

/// Single-step rules of the closure. Away from the open, a unit step can
/// only fill an order by landing exactly on its level.
struct Stepper<'a> {
    setup: &'a GridSetup,
    top: LevelIndex,
}

impl Stepper<'_> {
    fn exit_levels(&self) -> impl Iterator<Item = LevelIndex> {
        self.setup.stop_loss.into_iter().chain(self.setup.profit_target)
    }

    fn start(&self, open: LevelIndex) -> EnumState {
        let mut st = EnumState {
            open,
            current: open,
            high: open,
            low: open,
            entry: None,
            exit: None,
        };
        let side = match (self.setup.position.side(), self.setup.entry) {
            (Some(side), _) => Some(side),
            (None, Some((kind, level))) => {
                let side = kind.entry_side().expect("entry kind");
                kind.triggers(side, level, open).then(|| {
                    st.entry = Some(open);
                    side
                })
            }
            (None, None) => None,
        };
        if let Some(side) = side {
            let stop = self
                .setup
                .stop_loss
                .filter(|&l| OrderKind::StopLoss.triggers(side, l, open));
            let target = self
                .setup
                .profit_target
                .filter(|&l| OrderKind::ProfitTarget.triggers(side, l, open));
            if stop.is_some() || target.is_some() {
                st.exit = Some(open);
            }
        }
        st
    }

    fn advance(&self, st: &EnumState, next: LevelIndex) -> EnumState {
        let mut out = EnumState {
            current: next,
            high: st.high.max(next),
            low: st.low.min(next),
            ..*st
        };
        if st.exit.is_some() {
            return out;
        }
        let holding = self.setup.position.side().is_some() || st.entry.is_some();
        if !holding {
            if let Some((_, level)) = self.setup.entry {
                if next == level {
                    out.entry = Some(next);
                }
            }
            // the fresh entry's exits are at other levels
            return out;
        }
        if self.exit_levels().any(|l| l == next) {
            out.exit = Some(next);
        }
        out
    }

    fn successors(&self, st: &EnumState) -> Vec<EnumState> {
        let mut out = Vec::with_capacity(2);
        if st.current > 0 {
            out.push(self.advance(st, st.current - 1));
        }
        if st.current < self.top {
            out.push(self.advance(st, st.current + 1));
        }
        out
    }
}

/// Outcome of the breadth-first closure.
#[derive(Debug, Clone)]
pub struct BfsOutcome {
    pub set: CrSet,
    /// Distinct states visited (equal to the number of CRs).
    pub visited_states: usize,
    /// Largest series size needed to reach a new state; equals the naive
    /// fixed point `n_0`.
    pub depth: usize,
}

/// Complete CR set by breadth-first closure over [`EnumState`]s.
pub fn enumerate_bfs(setup: &Setup, grid: &LevelGrid, exec: Exec) -> Result<BfsOutcome, EnumError> {
    let indexed = GridSetup::new(setup, grid)?;
    Ok(bfs(&indexed, grid, None, exec))
}

/// `M_n` via the closure truncated at series size `n`.
pub fn enumerate_bfs_bounded(setup: &Setup, grid: &LevelGrid, n: usize, exec: Exec) -> Result<CrSet, EnumError> {
    if n < 1 {
        return Err(EnumError::Bound { min: 1, got: n });
    }
    let indexed = GridSetup::new(setup, grid)?;
    Ok(bfs(&indexed, grid, Some(n), exec).set)
}

fn bfs(setup: &GridSetup, grid: &LevelGrid, max_size: Option<usize>, exec: Exec) -> BfsOutcome {
    let stepper = Stepper {
        setup,
        top: grid.top(),
    };
    let mut visited: HashSet<EnumState> = HashSet::new();
    let mut frontier: Vec<EnumState> = (0..=grid.top()).map(|o| stepper.start(o)).collect();
    visited.extend(frontier.iter().copied());
    let mut size = 1;
    loop {
        if max_size.is_some_and(|cap| size >= cap) {
            break;
        }
        let candidates = exec.flat_map(&frontier, |st| stepper.successors(st));
        let mut next: Vec<EnumState> = candidates.into_iter().filter(|s| visited.insert(*s)).collect();
        if next.is_empty() {
            break;
        }
        next.sort_unstable();
        frontier = next;
        size += 1;
    }
    let set = CrSet::from_grid_crs(grid.clone(), visited.iter().map(EnumState::cr));
    BfsOutcome {
        visited_states: visited.len(),
        set,
        depth: size,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::price::TickPrice;
    use crate::types::{Order, PositionStatus};

    fn example() -> (Setup, LevelGrid) {
        let setup = Setup::new(
            vec![
                Order::new(OrderKind::EnterLongStop, TickPrice(53)),
                Order::new(OrderKind::StopLoss, TickPrice(51)),
            ],
            PositionStatus::Flat,
        )
        .unwrap();
        let grid = LevelGrid::around_setup(&setup).unwrap();
        (setup, grid)
    }

    #[test]
    fn size_one_series_are_flat_candles() {
        let (setup, grid) = example();
        let m1 = enumerate_naive(&setup, &grid, 1, Exec::Sequential).unwrap();
        assert_eq!(m1.len(), 5);
        for cr in m1.iter() {
            let GridCandle { open, close, high, low } = cr.candle;
            assert!(open == close && close == high && high == low);
            let expected_entry = (open >= 3).then_some(open);
            assert_eq!(cr.result, GridResult { entry: expected_entry, exit: None });
        }
    }

    #[test]
    fn naive_sets_grow_monotonically() {
        let (setup, grid) = example();
        let mut prev = enumerate_naive(&setup, &grid, 1, Exec::Sequential).unwrap();
        for n in 2..=8 {
            let next = enumerate_naive(&setup, &grid, n, Exec::Sequential).unwrap();
            assert!(prev.is_subset(&next), "M_{} not in M_{}", n - 1, n);
            prev = next;
        }
    }

    #[test]
    fn example_candle_has_two_results() {
        let (setup, grid) = example();
        let fp = find_fixed_point(&setup, &grid, default_cap(2), Exec::default()).unwrap();
        let candle = Candle::from_ticks(52, 53, 53, 51).unwrap();
        let results = fp.set.results_for(&candle);
        let t = |p| crate::types::Fill::At(TickPrice(p));
        assert_eq!(
            results,
            vec![
                TradeResult::new(t(53), crate::types::Fill::NoFill),
                TradeResult::new(t(53), t(51)),
            ]
        );
    }

    #[test]
    fn fixed_point_of_the_worked_example() {
        let (setup, grid) = example();
        let fp = find_fixed_point(&setup, &grid, default_cap(2), Exec::default()).unwrap();
        assert_eq!(fp.n0, 11);
        let bfs = enumerate_bfs(&setup, &grid, Exec::default()).unwrap();
        assert_eq!(bfs.set, fp.set);
        assert_eq!(bfs.depth, fp.n0);
        assert_eq!(bfs.visited_states, fp.set.len());
    }

    #[test]
    fn single_order_regression_values() {
        // frozen from the naive enumerator
        let long_stop = Setup::new(vec![Order::new(OrderKind::EnterLongStop, TickPrice(51))], PositionStatus::Flat).unwrap();
        let grid = LevelGrid::around_setup(&long_stop).unwrap();
        let fp = find_fixed_point(&long_stop, &grid, default_cap(1), Exec::Sequential).unwrap();
        assert_eq!((fp.n0, fp.set.len(), fp.set.candle_count()), (SINGLE_ENTRY_N0, SINGLE_ENTRY_CRS, 20));

        let protected = Setup::new(vec![Order::new(OrderKind::StopLoss, TickPrice(51))], PositionStatus::Long).unwrap();
        let grid = LevelGrid::around_setup(&protected).unwrap();
        let fp = find_fixed_point(&protected, &grid, default_cap(1), Exec::Sequential).unwrap();
        assert_eq!(fp.n0, PROTECTED_N0);
        for cr in fp.set.iter() {
            let results = fp.set.grid_results(&cr.candle).unwrap();
            assert_eq!(results.len(), 1, "exit of a protected long is unique per candle");
            let expected = if cr.candle.open <= 1 {
                Some(cr.candle.open)
            } else if cr.candle.low <= 1 {
                Some(1)
            } else {
                None
            };
            assert_eq!(cr.result, GridResult { entry: None, exit: expected });
        }
    }

    const SINGLE_ENTRY_N0: usize = 5;
    const SINGLE_ENTRY_CRS: usize = 20;
    const PROTECTED_N0: usize = 5;

    #[test]
    fn bfs_state_bound_for_one_order() {
        let setup = Setup::new(vec![Order::new(OrderKind::EnterShortLimit, TickPrice(51))], PositionStatus::Flat).unwrap();
        let grid = LevelGrid::around_setup(&setup).unwrap();
        let out = enumerate_bfs(&setup, &grid, Exec::Sequential).unwrap();
        assert!(out.visited_states <= 81 * 9);
        assert!(out.set.grid_candles().all(GridCandle::is_valid));
    }

    #[test]
    fn bounded_bfs_matches_naive_layers() {
        let (setup, grid) = example();
        for n in 1..=12 {
            let naive = enumerate_naive(&setup, &grid, n, Exec::Sequential).unwrap();
            let bfs = enumerate_bfs_bounded(&setup, &grid, n, Exec::Sequential).unwrap();
            assert_eq!(naive, bfs, "M_{n}");
        }
    }

    #[test]
    fn bad_bounds() {
        let (setup, grid) = example();
        assert!(matches!(enumerate_naive(&setup, &grid, 0, Exec::Sequential), Err(EnumError::Bound { .. })));
        assert!(matches!(find_fixed_point(&setup, &grid, 1, Exec::Sequential), Err(EnumError::Bound { .. })));
        assert!(matches!(find_fixed_point(&setup, &grid, 5, Exec::Sequential), Err(EnumError::CapExceeded(5))));
        let off_grid = LevelGrid::new(vec![TickPrice(50), TickPrice(52)]).unwrap();
        assert!(matches!(enumerate_bfs(&setup, &off_grid, Exec::Sequential), Err(EnumError::Grid(_))));
    }

    #[test]
    fn json_export_is_sorted() {
        let (setup, grid) = example();
        let m2 = enumerate_naive(&setup, &grid, 2, Exec::Sequential).unwrap();
        let json = m2.to_json(TickSize::ONE);
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let first = &parsed[0];
        assert_eq!(first["candle"]["open"], "50");
        assert_eq!(first["result"]["entry"], -1);
        let crs: Vec<Cr> = m2.crs().collect();
        let mut sorted = crs.clone();
        sorted.sort();
        assert_eq!(crs, sorted);
    }
}
