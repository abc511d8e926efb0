//! Execution of a setup along an intra-period model price series (IPMS).
//!
//! An IPMS is a walk over a finite grid of price levels where every step
//! moves to an adjacent level. Read as the piecewise-linear path through
//! those points it is a continuous intra-period price, and because every
//! order level is a grid point, a continuous crossing of a level is always
//! an exact visit of it. That reduces order execution to a left-to-right
//! scan over the walk.

use thiserror::Error;

use crate::price::TickPrice;
use crate::types::{Candle, Fill, OrderKind, PositionStatus, Setup, Side, TradeResult};

/// Position in a [`LevelGrid`], `0` being the lowest level.
pub type LevelIndex = u8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("a level grid needs at least one level")]
    Empty,
    #[error("grid levels must be strictly increasing")]
    NotIncreasing,
    #[error("grid has {0} levels, more than the supported 256")]
    TooLarge(usize),
    #[error("order level {0} is not a grid level")]
    MissingOrderLevel(TickPrice),
    #[error("cannot place intermediate levels: adjacent levels {0} and {1} are too close")]
    NoRoom(TickPrice, TickPrice),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IpmsError {
    #[error("an IPMS needs at least one element")]
    Empty,
    #[error("IPMS step {at} moves from {from} to {to}; steps must be +1 or -1")]
    NonAdjacent { at: usize, from: LevelIndex, to: LevelIndex },
    #[error("level index {index} is outside a grid of {len} levels")]
    OutOfRange { index: LevelIndex, len: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ipms(#[from] IpmsError),
}

/// Strictly increasing price levels an IPMS moves between.
///
/// The standard grid for a setup with levels `L_1 < .. < L_m` has `2m + 1`
/// levels with `l_{2i-1} = L_i` and one intermediate level in every gap
/// (and below/above the outermost orders). Grids with more intermediate
/// points are used when sublevels are enumerated directly.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelGrid {
    values: Vec<TickPrice>,
}

impl LevelGrid {
    pub fn new(values: Vec<TickPrice>) -> Result<Self, GridError> {
        if values.is_empty() {
            return Err(GridError::Empty);
        }
        if values.len() > usize::from(LevelIndex::MAX) + 1 {
            return Err(GridError::TooLarge(values.len()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(GridError::NotIncreasing);
        }
        Ok(Self { values })
    }

    /// Standard grid with the setup's levels at odd positions and the given
    /// intermediate levels at even positions (`m + 1` of them).
    pub fn interleaved(setup: &Setup, intermediates: &[TickPrice]) -> Result<Self, GridError> {
        assert_eq!(intermediates.len(), setup.len() + 1, "need m + 1 intermediate levels");
        let mut values = Vec::with_capacity(2 * setup.len() + 1);
        for (i, level) in setup.levels().enumerate() {
            values.push(intermediates[i]);
            values.push(level);
        }
        values.push(intermediates[setup.len()]);
        Self::new(values)
    }

    /// Standard grid around a setup: midpoints between adjacent order
    /// levels, and an outer level below `L_1` and above `L_m` at half the
    /// smallest gap (one tick for a single order).
    pub fn around_setup(setup: &Setup) -> Result<Self, GridError> {
        let levels: Vec<TickPrice> = setup.levels().collect();
        let min_gap = levels
            .windows(2)
            .map(|w| w[1].ticks() - w[0].ticks())
            .min()
            .map_or(1, |g| g / 2)
            .max(1);
        let mut mids = Vec::with_capacity(levels.len() + 1);
        let first = levels[0];
        mids.push(first.checked_sub(min_gap).ok_or(GridError::NoRoom(TickPrice(0), first))?);
        for w in levels.windows(2) {
            if w[1].ticks() - w[0].ticks() < 2 {
                return Err(GridError::NoRoom(w[0], w[1]));
            }
            mids.push(TickPrice((w[0].ticks() + w[1].ticks()) / 2));
        }
        let last = *levels.last().expect("non-empty setup");
        mids.push(last.checked_add(min_gap).ok_or(GridError::NoRoom(last, last))?);
        Self::interleaved(setup, &mids)
    }

    pub fn values(&self) -> &[TickPrice] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn value(&self, index: LevelIndex) -> TickPrice {
        self.values[usize::from(index)]
    }

    pub fn index_of(&self, price: TickPrice) -> Option<LevelIndex> {
        self.values
            .binary_search(&price)
            .ok()
            .map(|i| LevelIndex::try_from(i).expect("grid size checked"))
    }

    pub fn top(&self) -> LevelIndex {
        LevelIndex::try_from(self.values.len() - 1).expect("grid size checked")
    }

    /// Whether this is the standard `2m + 1` grid of `setup`.
    pub fn is_standard_for(&self, setup: &Setup) -> bool {
        self.len() == 2 * setup.len() + 1
            && setup
                .levels()
                .enumerate()
                .all(|(i, l)| self.values[2 * i + 1] == l)
    }
}

/// A walk over grid positions with unit steps.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Ipms(Vec<LevelIndex>);

impl Ipms {
    pub fn new(seq: Vec<LevelIndex>) -> Result<Self, IpmsError> {
        if seq.is_empty() {
            return Err(IpmsError::Empty);
        }
        for (at, w) in seq.windows(2).enumerate() {
            if w[0].abs_diff(w[1]) != 1 {
                return Err(IpmsError::NonAdjacent { at: at + 1, from: w[0], to: w[1] });
            }
        }
        Ok(Self(seq))
    }

    pub fn as_slice(&self) -> &[LevelIndex] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    fn check_range(&self, grid: &LevelGrid) -> Result<(), IpmsError> {
        match self.0.iter().find(|&&i| usize::from(i) >= grid.len()) {
            Some(&index) => Err(IpmsError::OutOfRange { index, len: grid.len() }),
            None => Ok(()),
        }
    }

    /// Grid prices visited by the walk.
    pub fn prices(&self, grid: &LevelGrid) -> Result<Vec<TickPrice>, IpmsError> {
        self.check_range(grid)?;
        Ok(self.0.iter().map(|&i| grid.value(i)).collect())
    }
}

/// Candle in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCandle {
    pub open: LevelIndex,
    pub close: LevelIndex,
    pub high: LevelIndex,
    pub low: LevelIndex,
}

impl GridCandle {
    pub fn is_valid(&self) -> bool {
        self.low <= self.open.min(self.close) && self.open.max(self.close) <= self.high
    }

    pub fn to_candle(self, grid: &LevelGrid) -> Candle {
        Candle::new(
            grid.value(self.open),
            grid.value(self.close),
            grid.value(self.high),
            grid.value(self.low),
        )
        .expect("grid is increasing, so grid candles keep their ordering")
    }

    pub fn from_candle(candle: &Candle, grid: &LevelGrid) -> Option<Self> {
        Some(Self {
            open: grid.index_of(candle.open())?,
            close: grid.index_of(candle.close())?,
            high: grid.index_of(candle.high())?,
            low: grid.index_of(candle.low())?,
        })
    }
}

/// Result in grid coordinates; `None` is no fill.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct GridResult {
    pub entry: Option<LevelIndex>,
    pub exit: Option<LevelIndex>,
}

impl GridResult {
    pub fn to_result(self, grid: &LevelGrid) -> TradeResult {
        TradeResult::new(
            self.entry.map(|i| grid.value(i)).into(),
            self.exit.map(|i| grid.value(i)).into(),
        )
    }

    pub fn from_result(result: &TradeResult, grid: &LevelGrid) -> Option<Self> {
        let idx = |f: Fill| match f {
            Fill::NoFill => Some(None),
            Fill::At(p) => grid.index_of(p).map(Some),
        };
        Some(Self {
            entry: idx(result.entry)?,
            exit: idx(result.exit)?,
        })
    }
}

/// A setup with its order levels resolved to grid positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSetup {
    pub position: PositionStatus,
    pub entry: Option<(OrderKind, LevelIndex)>,
    pub stop_loss: Option<LevelIndex>,
    pub profit_target: Option<LevelIndex>,
}

impl GridSetup {
    pub fn new(setup: &Setup, grid: &LevelGrid) -> Result<Self, GridError> {
        let at = |level: TickPrice| grid.index_of(level).ok_or(GridError::MissingOrderLevel(level));
        let mut out = GridSetup {
            position: setup.position(),
            entry: None,
            stop_loss: None,
            profit_target: None,
        };
        for order in setup.orders() {
            let index = at(order.level)?;
            match order.kind {
                OrderKind::StopLoss => out.stop_loss = Some(index),
                OrderKind::ProfitTarget => out.profit_target = Some(index),
                kind => out.entry = Some((kind, index)),
            }
        }
        Ok(out)
    }

    /// Entry side, if an entry order exists.
    pub fn entry_side(&self) -> Option<Side> {
        self.entry.and_then(|(k, _)| k.entry_side())
    }

    /// Side of the position the setup can hold.
    pub fn side(&self) -> Side {
        self.position
            .side()
            .or_else(|| self.entry_side())
            .expect("validated setup has a position source")
    }

    /// The exit order, if any, that triggers at `price` for a position on
    /// `side`. Both exits cannot trigger at once on a consistent setup.
    pub fn exit_at(&self, side: Side, price: LevelIndex) -> Option<LevelIndex> {
        let stop = self
            .stop_loss
            .filter(|&l| OrderKind::StopLoss.triggers(side, l, price));
        let target = self
            .profit_target
            .filter(|&l| OrderKind::ProfitTarget.triggers(side, l, price));
        assert!(
            stop.is_none() || target.is_none(),
            "stop loss and profit target triggered at the same price"
        );
        stop.or(target)
    }
}

/// Walks the series and returns entry/exit as grid positions.
///
/// At the open, an entry whose condition already holds fills at the open
/// price; exits of a pre-existing position likewise fill at the open.
/// Exits attached to an entry arm right after it fills: on a gap entry at
/// the open they may fill at that same open price, otherwise the price sits
/// exactly at the entry level and no consistent exit can trigger there.
/// Later fills happen exactly at the order level.
pub fn run(setup: &GridSetup, seq: &[LevelIndex]) -> GridResult {
    let mut side = setup.position.side();
    let mut result = GridResult::default();
    for (step, &price) in seq.iter().enumerate() {
        if side.is_none() {
            if let Some((kind, level)) = setup.entry {
                let entry_side = kind.entry_side().expect("entry kind");
                if kind.triggers(entry_side, level, price) {
                    assert!(step == 0 || price == level, "entry skipped over its level");
                    result.entry = Some(price);
                    side = Some(entry_side);
                }
            }
        }
        if let Some(side) = side {
            if let Some(level) = setup.exit_at(side, price) {
                assert!(step == 0 || price == level, "exit skipped over its level");
                result.exit = Some(price);
                break;
            }
        }
    }
    result
}

/// Candle traced out by an IPMS.
pub fn candle_of_ipms(ipms: &Ipms, grid: &LevelGrid) -> Result<Candle, IpmsError> {
    ipms.check_range(grid)?;
    Ok(grid_candle_of(ipms.as_slice()).to_candle(grid))
}

pub(crate) fn grid_candle_of(seq: &[LevelIndex]) -> GridCandle {
    GridCandle {
        open: seq[0],
        close: *seq.last().expect("non-empty"),
        high: *seq.iter().max().expect("non-empty"),
        low: *seq.iter().min().expect("non-empty"),
    }
}

/// Result of executing `setup` along `ipms`.
pub fn simulate(setup: &Setup, ipms: &Ipms, grid: &LevelGrid) -> Result<TradeResult, SimError> {
    ipms.check_range(grid)?;
    let indexed = GridSetup::new(setup, grid)?;
    Ok(run(&indexed, ipms.as_slice()).to_result(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Order;
    use proptest::prelude::*;

    fn example_setup() -> Setup {
        Setup::new(
            vec![
                Order::new(OrderKind::EnterLongStop, TickPrice(53)),
                Order::new(OrderKind::StopLoss, TickPrice(51)),
            ],
            PositionStatus::Flat,
        )
        .unwrap()
    }

    fn example_grid() -> LevelGrid {
        LevelGrid::new((50..=54).map(TickPrice).collect()).unwrap()
    }

    fn ipms(prices: &[u64]) -> Ipms {
        Ipms::new(prices.iter().map(|&p| (p - 50) as LevelIndex).collect()).unwrap()
    }

    fn fill(p: Option<u64>) -> Fill {
        p.map(TickPrice).into()
    }

    #[test]
    fn around_setup_reproduces_the_example_grid() {
        assert_eq!(LevelGrid::around_setup(&example_setup()).unwrap(), example_grid());
        assert!(example_grid().is_standard_for(&example_setup()));
    }

    #[test]
    fn candles_of_series() {
        let grid = example_grid();
        assert_eq!(
            candle_of_ipms(&ipms(&[52, 53, 52, 51, 52, 53]), &grid).unwrap(),
            Candle::from_ticks(52, 53, 53, 51).unwrap()
        );
        assert_eq!(candle_of_ipms(&ipms(&[52]), &grid).unwrap(), Candle::from_ticks(52, 52, 52, 52).unwrap());
        assert_eq!(candle_of_ipms(&ipms(&[50, 51]), &grid).unwrap(), Candle::from_ticks(50, 51, 51, 50).unwrap());
        let out = Ipms::new(vec![4, 5]).unwrap();
        assert!(matches!(candle_of_ipms(&out, &grid), Err(IpmsError::OutOfRange { index: 5, .. })));
    }

    #[test]
    fn malformed_series() {
        assert_eq!(Ipms::new(vec![]), Err(IpmsError::Empty));
        assert!(matches!(Ipms::new(vec![1, 3]), Err(IpmsError::NonAdjacent { at: 1, .. })));
        assert!(matches!(Ipms::new(vec![1, 1]), Err(IpmsError::NonAdjacent { .. })));
    }

    #[test]
    fn worked_example_paths() {
        let (setup, grid) = (example_setup(), example_grid());
        let sim = |p: &[u64]| simulate(&setup, &ipms(p), &grid).unwrap();
        // up through the stop entry, then down through the stop loss
        assert_eq!(sim(&[52, 53, 52, 51, 52, 53]), TradeResult::new(fill(Some(53)), fill(Some(51))));
        // stop loss touched before entry: not armed yet
        assert_eq!(sim(&[52, 51, 52, 53]), TradeResult::new(fill(Some(53)), Fill::NoFill));
        assert_eq!(sim(&[50, 51, 50]), TradeResult::NONE);
        // open above the stop entry: fills at the open
        assert_eq!(sim(&[54, 53, 52]), TradeResult::new(fill(Some(54)), Fill::NoFill));
    }

    #[test]
    fn pre_existing_position_exits_from_the_open() {
        let setup = Setup::new(vec![Order::new(OrderKind::StopLoss, TickPrice(51))], PositionStatus::Long).unwrap();
        let grid = LevelGrid::around_setup(&setup).unwrap();
        assert_eq!(grid.values(), &[TickPrice(50), TickPrice(51), TickPrice(52)]);
        let sim = |s: Vec<LevelIndex>| simulate(&setup, &Ipms::new(s).unwrap(), &grid).unwrap();
        assert_eq!(sim(vec![2, 1, 2]), TradeResult::new(Fill::NoFill, fill(Some(51))));
        assert_eq!(sim(vec![0, 1]), TradeResult::new(Fill::NoFill, fill(Some(50))));
        assert_eq!(sim(vec![2]), TradeResult::NONE);
    }

    #[test]
    fn exit_value_is_path_independent_for_a_protected_long() {
        // brute force every series up to size 8 on the m=1 grid: any series
        // whose low reaches the stop exits there (or at a gapped open)
        let setup = Setup::new(vec![Order::new(OrderKind::StopLoss, TickPrice(51))], PositionStatus::Long).unwrap();
        let grid = LevelGrid::around_setup(&setup).unwrap();
        for seq in all_series(3, 8) {
            let s = Ipms::new(seq.clone()).unwrap();
            let r = simulate(&setup, &s, &grid).unwrap();
            let c = candle_of_ipms(&s, &grid).unwrap();
            let expected = if c.open() <= TickPrice(51) {
                fill(Some(c.open().ticks()))
            } else if c.low() <= TickPrice(51) {
                fill(Some(51))
            } else {
                Fill::NoFill
            };
            assert_eq!(r.exit, expected, "{seq:?}");
            assert_eq!(r.entry, Fill::NoFill);
        }
    }

    #[test]
    fn gap_entry_beyond_target_exits_at_the_open() {
        let setup = Setup::new(
            vec![
                Order::new(OrderKind::EnterLongStop, TickPrice(53)),
                Order::new(OrderKind::ProfitTarget, TickPrice(55)),
            ],
            PositionStatus::Flat,
        )
        .unwrap();
        let grid = LevelGrid::around_setup(&setup).unwrap();
        let top = grid.top();
        let r = run(&GridSetup::new(&setup, &grid).unwrap(), &[top, top - 1]);
        assert_eq!(r, GridResult { entry: Some(top), exit: Some(top) });
    }

    #[test]
    fn inverted_stop_is_triggered_at_its_own_entry() {
        // A long stop loss above the entry is already satisfied at the price
        // where a non-gapped entry fills, so every such trade would close at
        // its entry price. That is why validation rejects the configuration.
        let (entry, stop) = (3u8, 4u8);
        for open in 0..entry {
            let fill_price = entry;
            assert!(open < fill_price);
            assert!(OrderKind::StopLoss.triggers(Side::Long, stop, fill_price));
        }
    }

    pub(crate) fn all_series(levels: u8, max_len: usize) -> Vec<Vec<LevelIndex>> {
        let mut out = Vec::new();
        let mut stack: Vec<Vec<LevelIndex>> = (0..levels).map(|i| vec![i]).collect();
        while let Some(seq) = stack.pop() {
            let last = *seq.last().unwrap();
            if seq.len() < max_len {
                for next in [last.checked_sub(1), last.checked_add(1).filter(|&n| n < levels)].into_iter().flatten() {
                    let mut s = seq.clone();
                    s.push(next);
                    stack.push(s);
                }
            }
            out.push(seq);
        }
        out
    }

    #[test]
    fn bounded_brute_force_result_families() {
        let (setup, grid) = (example_setup(), example_grid());
        for seq in all_series(5, 6) {
            let s = Ipms::new(seq.clone()).unwrap();
            let r = simulate(&setup, &s, &grid).unwrap();
            let open = grid.value(seq[0]);
            let ok_entry = matches!(r.entry, Fill::NoFill) || r.entry == Fill::At(TickPrice(53)) || r.entry == Fill::At(open);
            let ok_exit = matches!(r.exit, Fill::NoFill) || r.exit == Fill::At(TickPrice(51));
            assert!(ok_entry && ok_exit, "{seq:?} -> {r}");
            assert!(r.is_consistent_with(PositionStatus::Flat));
        }
    }

    fn arb_walk(levels: u8) -> impl Strategy<Value = Vec<LevelIndex>> {
        (0..levels, proptest::collection::vec(any::<bool>(), 0..24)).prop_map(move |(start, steps)| {
            let mut seq = vec![start];
            for up in steps {
                let last = *seq.last().unwrap();
                let next = if (up && last + 1 < levels) || last == 0 { last + 1 } else { last - 1 };
                seq.push(next);
            }
            seq
        })
    }

    fn catalog_like_setups() -> Vec<Setup> {
        use OrderKind::*;
        let o = |k, l| Order::new(k, TickPrice(l));
        vec![
            Setup::new(vec![o(StopLoss, 51), o(EnterLongStop, 53), o(ProfitTarget, 55)], PositionStatus::Flat).unwrap(),
            Setup::new(vec![o(StopLoss, 51), o(EnterLongLimit, 53), o(ProfitTarget, 55)], PositionStatus::Flat).unwrap(),
            Setup::new(vec![o(ProfitTarget, 51), o(EnterShortStop, 53), o(StopLoss, 55)], PositionStatus::Flat).unwrap(),
            Setup::new(vec![o(ProfitTarget, 51), o(EnterShortLimit, 53), o(StopLoss, 55)], PositionStatus::Flat).unwrap(),
            Setup::new(vec![o(StopLoss, 51), o(ProfitTarget, 53)], PositionStatus::Long).unwrap(),
            Setup::new(vec![o(ProfitTarget, 51), o(StopLoss, 53)], PositionStatus::Short).unwrap(),
        ]
    }

    fn setup_and_walk() -> impl Strategy<Value = (usize, Vec<LevelIndex>)> {
        (0usize..6).prop_flat_map(|which| {
            let levels = (2 * catalog_like_setups()[which].len() + 1) as u8;
            (Just(which), arb_walk(levels))
        })
    }

    proptest! {
        #[test]
        fn fills_are_open_or_order_levels((which, seq) in setup_and_walk()) {
            let setup = &catalog_like_setups()[which];
            let grid = LevelGrid::around_setup(setup).unwrap();
            let s = Ipms::new(seq).unwrap();
            let r = simulate(setup, &s, &grid).unwrap();
            let c = candle_of_ipms(&s, &grid).unwrap();
            let cr = crate::types::Cr { candle: c, result: r };
            prop_assert!(cr.fills_are_admissible(setup));
            prop_assert!(r.is_consistent_with(setup.position()));
        }

        #[test]
        fn prefixes_never_unfill((which, seq) in setup_and_walk()) {
            let setup = &catalog_like_setups()[which];
            let grid = LevelGrid::around_setup(setup).unwrap();
            let gs = GridSetup::new(setup, &grid).unwrap();
            let full = run(&gs, &seq);
            for k in 1..=seq.len() {
                let prefix = run(&gs, &seq[..k]);
                if prefix.entry.is_some() { prop_assert_eq!(prefix.entry, full.entry); }
                if prefix.exit.is_some() { prop_assert_eq!(prefix.exit, full.exit); }
            }
        }

        #[test]
        fn relabeling_the_grid_commutes((which, seq) in setup_and_walk(), gaps in proptest::array::uniform7(1u64..40), base in 1u64..500) {
            let setup = &catalog_like_setups()[which];
            let grid = LevelGrid::around_setup(setup).unwrap();
            let mut acc = base;
            let relabeled: Vec<TickPrice> = gaps.iter().map(|g| { acc += g; TickPrice(acc) }).collect();
            let relabeled = relabeled[..grid.len()].to_vec();
            let other = LevelGrid::new(relabeled.clone()).unwrap();
            let moved_levels: Vec<TickPrice> = setup.levels().map(|l| relabeled[usize::from(grid.index_of(l).unwrap())]).collect();
            let moved = setup.with_levels(&moved_levels).unwrap();
            let s = Ipms::new(seq).unwrap();
            let r = simulate(setup, &s, &grid).unwrap();
            let mapped = r.map(|p| Ok::<_, ()>(relabeled[usize::from(grid.index_of(p).unwrap())])).unwrap();
            prop_assert_eq!(simulate(&moved, &s, &other).unwrap(), mapped);
        }
    }
}
