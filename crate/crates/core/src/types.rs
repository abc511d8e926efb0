//! Domain types shared by every module: setups, candles, results, modes.
//!
//! All values are immutable once constructed and validated on construction,
//! so any `Setup` or `Candle` in circulation satisfies its invariants.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::price::TickPrice;

/// Trade direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Long,
    Short,
}

impl Side {
    /// `+1` for long, `-1` for short.
    pub fn sign(self) -> i128 {
        match self {
            Side::Long => 1,
            Side::Short => -1,
        }
    }
}

/// Position held before the candle opens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PositionStatus {
    Short,
    Flat,
    Long,
}

impl PositionStatus {
    pub fn side(self) -> Option<Side> {
        match self {
            PositionStatus::Short => Some(Side::Short),
            PositionStatus::Flat => None,
            PositionStatus::Long => Some(Side::Long),
        }
    }

    pub fn as_i8(self) -> i8 {
        match self {
            PositionStatus::Short => -1,
            PositionStatus::Flat => 0,
            PositionStatus::Long => 1,
        }
    }

    pub fn from_i8(p: i8) -> Option<Self> {
        match p {
            -1 => Some(PositionStatus::Short),
            0 => Some(PositionStatus::Flat),
            1 => Some(PositionStatus::Long),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OrderKind {
    EnterLongLimit,
    EnterShortLimit,
    EnterLongStop,
    EnterShortStop,
    StopLoss,
    ProfitTarget,
}

impl OrderKind {
    pub const ALL: [OrderKind; 6] = [
        OrderKind::EnterLongLimit,
        OrderKind::EnterShortLimit,
        OrderKind::EnterLongStop,
        OrderKind::EnterShortStop,
        OrderKind::StopLoss,
        OrderKind::ProfitTarget,
    ];

    pub const ENTRIES: [OrderKind; 4] = [
        OrderKind::EnterLongLimit,
        OrderKind::EnterShortLimit,
        OrderKind::EnterLongStop,
        OrderKind::EnterShortStop,
    ];

    pub fn is_entry(self) -> bool {
        !self.is_exit()
    }

    pub fn is_exit(self) -> bool {
        matches!(self, OrderKind::StopLoss | OrderKind::ProfitTarget)
    }

    /// Direction of the position an entry order opens.
    pub fn entry_side(self) -> Option<Side> {
        match self {
            OrderKind::EnterLongLimit | OrderKind::EnterLongStop => Some(Side::Long),
            OrderKind::EnterShortLimit | OrderKind::EnterShortStop => Some(Side::Short),
            OrderKind::StopLoss | OrderKind::ProfitTarget => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            OrderKind::EnterLongLimit => "EnterLongLimit",
            OrderKind::EnterShortLimit => "EnterShortLimit",
            OrderKind::EnterLongStop => "EnterLongStop",
            OrderKind::EnterShortStop => "EnterShortStop",
            OrderKind::StopLoss => "StopLoss",
            OrderKind::ProfitTarget => "ProfitTarget",
        }
    }

    /// Whether the order triggers at `price` for a position on `side`
    /// (`side` is ignored for entry orders, which carry their own).
    ///
    /// Buy stops and sell limits trigger at or above the level, buy limits
    /// and sell stops at or below it.
    pub fn triggers<T: Ord>(self, side: Side, level: T, price: T) -> bool {
        let at_or_above = match (self, side) {
            (OrderKind::EnterLongStop | OrderKind::EnterShortLimit, _) => true,
            (OrderKind::EnterLongLimit | OrderKind::EnterShortStop, _) => false,
            (OrderKind::StopLoss, Side::Long) | (OrderKind::ProfitTarget, Side::Short) => false,
            (OrderKind::StopLoss, Side::Short) | (OrderKind::ProfitTarget, Side::Long) => true,
        };
        if at_or_above {
            price >= level
        } else {
            price <= level
        }
    }
}

impl fmt::Display for OrderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Order {
    pub kind: OrderKind,
    pub level: TickPrice,
}

impl Order {
    pub fn new(kind: OrderKind, level: TickPrice) -> Self {
        Self { kind, level }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SetupError {
    #[error("a setup needs at least one order")]
    NoOrders,
    #[error("order levels must be positive")]
    NonPositiveLevel,
    #[error("two orders share level {0}")]
    DuplicateLevel(TickPrice),
    #[error("at most one entry order is allowed")]
    MultipleEntries,
    #[error("at most one {0} order is allowed")]
    DuplicateExit(OrderKind),
    #[error("entry orders are not allowed while a position is already open")]
    EntryWithOpenPosition,
    #[error("a flat setup needs an entry order")]
    NoPositionSource,
    #[error("{exit} at {exit_level} is on the wrong side of {reference} at {reference_level}")]
    InconsistentLevels {
        exit: OrderKind,
        exit_level: TickPrice,
        reference: OrderKind,
        reference_level: TickPrice,
    },
}

/// Orders active at the start of a candle together with the prior position.
///
/// Orders are kept sorted by level. At most one entry and at most one of
/// each exit kind; exits attached to an entry only become active once it
/// fills.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Setup {
    orders: Vec<Order>,
    position: PositionStatus,
}

impl Setup {
    pub fn new(mut orders: Vec<Order>, position: PositionStatus) -> Result<Self, SetupError> {
        orders.sort_by_key(|o| o.level);
        validate_setup(&orders, position)?;
        Ok(Self { orders, position })
    }

    /// Orders in ascending level order.
    pub fn orders(&self) -> &[Order] {
        &self.orders
    }

    pub fn position(&self) -> PositionStatus {
        self.position
    }

    /// Number of orders, `m`.
    pub fn len(&self) -> usize {
        self.orders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orders.is_empty()
    }

    pub fn levels(&self) -> impl Iterator<Item = TickPrice> + '_ {
        self.orders.iter().map(|o| o.level)
    }

    pub fn entry(&self) -> Option<Order> {
        self.orders.iter().copied().find(|o| o.kind.is_entry())
    }

    pub fn exit(&self, kind: OrderKind) -> Option<Order> {
        debug_assert!(kind.is_exit());
        self.orders.iter().copied().find(|o| o.kind == kind)
    }

    /// Direction of the trade this setup can hold during the candle.
    pub fn side(&self) -> Side {
        self.position
            .side()
            .or_else(|| self.entry().and_then(|e| e.kind.entry_side()))
            .expect("validated setup has a position source")
    }

    /// Order kinds in level order plus the position; two setups with the
    /// same shape differ only by a monotone relabeling of levels.
    pub fn shape(&self) -> SetupShape {
        SetupShape {
            kinds: self.orders.iter().map(|o| o.kind).collect(),
            position: self.position,
        }
    }

    /// Same orders moved to new levels (given in ascending order).
    pub fn with_levels(&self, levels: &[TickPrice]) -> Result<Setup, SetupError> {
        assert_eq!(levels.len(), self.orders.len(), "level count mismatch");
        let orders = self
            .orders
            .iter()
            .zip(levels)
            .map(|(o, &level)| Order::new(o.kind, level))
            .collect();
        Setup::new(orders, self.position)
    }
}

/// Checks every setup invariant on orders already sorted by level and
/// returns the first violated rule.
pub fn validate_setup(orders: &[Order], position: PositionStatus) -> Result<(), SetupError> {
    if orders.is_empty() {
        return Err(SetupError::NoOrders);
    }
    if orders.iter().any(|o| o.level.ticks() == 0) {
        return Err(SetupError::NonPositiveLevel);
    }
    for pair in orders.windows(2) {
        if pair[0].level >= pair[1].level {
            return Err(SetupError::DuplicateLevel(pair[1].level));
        }
    }
    let mut entry = None;
    let mut stop = None;
    let mut target = None;
    for &order in orders {
        let slot = match order.kind {
            OrderKind::StopLoss => &mut stop,
            OrderKind::ProfitTarget => &mut target,
            _ => &mut entry,
        };
        if slot.replace(order).is_some() {
            return Err(if order.kind.is_entry() {
                SetupError::MultipleEntries
            } else {
                SetupError::DuplicateExit(order.kind)
            });
        }
    }
    let side = match (position.side(), entry) {
        (Some(_), Some(_)) => return Err(SetupError::EntryWithOpenPosition),
        (None, None) => return Err(SetupError::NoPositionSource),
        (Some(side), None) => side,
        (None, Some(e)) => e.kind.entry_side().expect("entry kind"),
    };
    // For a long trade: stop < entry < target. Mirrored for short.
    let below = |a: Order, b: Order| match side {
        Side::Long => a.level < b.level,
        Side::Short => a.level > b.level,
    };
    let inconsistent = |exit: Order, reference: Order| SetupError::InconsistentLevels {
        exit: exit.kind,
        exit_level: exit.level,
        reference: reference.kind,
        reference_level: reference.level,
    };
    if let Some(e) = entry {
        if let Some(s) = stop {
            if !below(s, e) {
                return Err(inconsistent(s, e));
            }
        }
        if let Some(t) = target {
            if !below(e, t) {
                return Err(inconsistent(t, e));
            }
        }
    }
    if let (Some(s), Some(t)) = (stop, target) {
        if !below(s, t) {
            return Err(inconsistent(s, t));
        }
    }
    Ok(())
}

/// Ordering key of a setup with its levels erased.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetupShape {
    pub kinds: Vec<OrderKind>,
    pub position: PositionStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("candle violates low <= min(open, close) <= max(open, close) <= high: o={open} c={close} h={high} l={low}")]
pub struct CandleError {
    pub open: TickPrice,
    pub close: TickPrice,
    pub high: TickPrice,
    pub low: TickPrice,
}

/// An OHLC candle. The ordering invariant is checked on construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Candle {
    open: TickPrice,
    close: TickPrice,
    high: TickPrice,
    low: TickPrice,
}

impl Candle {
    pub fn new(
        open: TickPrice,
        close: TickPrice,
        high: TickPrice,
        low: TickPrice,
    ) -> Result<Self, CandleError> {
        if low <= open.min(close) && open.max(close) <= high {
            Ok(Self { open, close, high, low })
        } else {
            Err(CandleError { open, close, high, low })
        }
    }

    /// Candle from raw tick counts, in (open, close, high, low) order.
    pub fn from_ticks(open: u64, close: u64, high: u64, low: u64) -> Result<Self, CandleError> {
        Self::new(TickPrice(open), TickPrice(close), TickPrice(high), TickPrice(low))
    }

    pub fn open(&self) -> TickPrice {
        self.open
    }

    pub fn close(&self) -> TickPrice {
        self.close
    }

    pub fn high(&self) -> TickPrice {
        self.high
    }

    pub fn low(&self) -> TickPrice {
        self.low
    }

    /// `[open, close, high, low]`.
    pub fn values(&self) -> [TickPrice; 4] {
        [self.open, self.close, self.high, self.low]
    }

    /// Maps every value through a strictly increasing function, which keeps
    /// the ordering invariant.
    pub fn map<E>(&self, mut f: impl FnMut(TickPrice) -> Result<TickPrice, E>) -> Result<Candle, E> {
        Ok(Candle {
            open: f(self.open)?,
            close: f(self.close)?,
            high: f(self.high)?,
            low: f(self.low)?,
        })
    }
}

impl fmt::Display for Candle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(o={}, c={}, h={}, l={})",
            self.open.ticks(),
            self.close.ticks(),
            self.high.ticks(),
            self.low.ticks()
        )
    }
}

/// A fill price, or no fill. `NoFill` orders before any price, matching
/// the `-1` sentinel it becomes on the wire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Fill {
    #[default]
    NoFill,
    At(TickPrice),
}

impl Fill {
    pub fn price(self) -> Option<TickPrice> {
        match self {
            Fill::NoFill => None,
            Fill::At(p) => Some(p),
        }
    }

    pub fn is_fill(self) -> bool {
        matches!(self, Fill::At(_))
    }

    pub fn map<E>(self, f: impl FnOnce(TickPrice) -> Result<TickPrice, E>) -> Result<Fill, E> {
        match self {
            Fill::NoFill => Ok(Fill::NoFill),
            Fill::At(p) => f(p).map(Fill::At),
        }
    }
}

impl From<Option<TickPrice>> for Fill {
    fn from(value: Option<TickPrice>) -> Self {
        value.map_or(Fill::NoFill, Fill::At)
    }
}

impl fmt::Display for Fill {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fill::NoFill => f.write_str("-1"),
            Fill::At(p) => write!(f, "{}", p.ticks()),
        }
    }
}

/// Entry and exit price of the single trade a setup allows within a candle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct TradeResult {
    pub entry: Fill,
    pub exit: Fill,
}

impl TradeResult {
    pub const NONE: TradeResult = TradeResult {
        entry: Fill::NoFill,
        exit: Fill::NoFill,
    };

    pub fn new(entry: Fill, exit: Fill) -> Self {
        Self { entry, exit }
    }

    /// An exit requires either a fresh entry or a pre-existing position.
    pub fn is_consistent_with(&self, position: PositionStatus) -> bool {
        !self.exit.is_fill() || self.entry.is_fill() || position != PositionStatus::Flat
    }

    pub fn map<E>(&self, mut f: impl FnMut(TickPrice) -> Result<TickPrice, E>) -> Result<Self, E> {
        Ok(Self {
            entry: self.entry.map(&mut f)?,
            exit: self.exit.map(&mut f)?,
        })
    }
}

impl fmt::Display for TradeResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(entry={}, exit={})", self.entry, self.exit)
    }
}

/// A candle paired with one admissible result.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cr {
    pub candle: Candle,
    pub result: TradeResult,
}

impl Cr {
    /// Every fill must be the open or one of the setup's levels.
    pub fn fills_are_admissible(&self, setup: &Setup) -> bool {
        [self.result.entry, self.result.exit]
            .into_iter()
            .filter_map(Fill::price)
            .all(|p| p == self.candle.open() || setup.levels().any(|l| l == p))
    }
}

/// Policy for candles whose result is not unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BacktestMode {
    BestCase,
    WorstCase,
    Ignore,
}

impl BacktestMode {
    pub const ALL: [BacktestMode; 3] = [
        BacktestMode::BestCase,
        BacktestMode::WorstCase,
        BacktestMode::Ignore,
    ];

    pub fn wire_name(self) -> &'static str {
        match self {
            BacktestMode::BestCase => "best",
            BacktestMode::WorstCase => "worst",
            BacktestMode::Ignore => "ignore",
        }
    }

    pub fn from_wire(name: &str) -> Option<Self> {
        match name {
            "best" => Some(BacktestMode::BestCase),
            "worst" => Some(BacktestMode::WorstCase),
            "ignore" => Some(BacktestMode::Ignore),
            _ => None,
        }
    }
}

impl fmt::Display for BacktestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.wire_name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order(kind: OrderKind, level: u64) -> Order {
        Order::new(kind, TickPrice(level))
    }

    #[test]
    fn stop_entry_with_protective_stop_is_valid() {
        let setup = Setup::new(
            vec![order(OrderKind::EnterLongStop, 53), order(OrderKind::StopLoss, 51)],
            PositionStatus::Flat,
        )
        .unwrap();
        assert_eq!(setup.orders()[0].kind, OrderKind::StopLoss);
        assert_eq!(setup.side(), Side::Long);
    }

    #[test]
    fn exit_only_flat_setup_is_rejected() {
        let err = Setup::new(vec![order(OrderKind::StopLoss, 51)], PositionStatus::Flat);
        assert_eq!(err, Err(SetupError::NoPositionSource));
    }

    #[test]
    fn stop_loss_above_long_entry_is_rejected() {
        let err = Setup::new(
            vec![order(OrderKind::EnterLongStop, 53), order(OrderKind::StopLoss, 54)],
            PositionStatus::Flat,
        );
        assert!(matches!(err, Err(SetupError::InconsistentLevels { exit: OrderKind::StopLoss, .. })));
    }

    #[test]
    fn rule_violations() {
        use OrderKind::*;
        use PositionStatus::*;
        let cases: Vec<(Vec<Order>, PositionStatus, SetupError)> = vec![
            (vec![], Flat, SetupError::NoOrders),
            (vec![order(EnterLongStop, 0)], Flat, SetupError::NonPositiveLevel),
            (
                vec![order(EnterLongStop, 53), order(StopLoss, 53)],
                Flat,
                SetupError::DuplicateLevel(TickPrice(53)),
            ),
            (
                vec![order(EnterLongStop, 53), order(EnterShortStop, 50)],
                Flat,
                SetupError::MultipleEntries,
            ),
            (
                vec![order(StopLoss, 50), order(StopLoss, 49)],
                Long,
                SetupError::DuplicateExit(StopLoss),
            ),
            (vec![order(EnterLongLimit, 50)], Long, SetupError::EntryWithOpenPosition),
        ];
        for (orders, p, expected) in cases {
            assert_eq!(Setup::new(orders.clone(), p), Err(expected), "{orders:?}");
        }
    }

    #[test]
    fn short_side_level_consistency() {
        use OrderKind::*;
        // short: target < entry < stop
        assert!(Setup::new(
            vec![order(ProfitTarget, 48), order(EnterShortLimit, 50), order(StopLoss, 52)],
            PositionStatus::Flat
        )
        .is_ok());
        assert!(Setup::new(
            vec![order(StopLoss, 48), order(EnterShortLimit, 50)],
            PositionStatus::Flat
        )
        .is_err());
        assert!(Setup::new(vec![order(ProfitTarget, 48), order(StopLoss, 52)], PositionStatus::Short).is_ok());
        assert!(Setup::new(vec![order(ProfitTarget, 52), order(StopLoss, 48)], PositionStatus::Short).is_err());
        assert!(Setup::new(vec![order(StopLoss, 48), order(ProfitTarget, 52)], PositionStatus::Long).is_ok());
    }

    #[test]
    fn candle_invariant() {
        assert!(Candle::from_ticks(52, 53, 53, 51).is_ok());
        assert!(Candle::from_ticks(52, 52, 52, 52).is_ok());
        assert!(Candle::from_ticks(54, 52, 53, 51).is_err());
        assert!(Candle::from_ticks(52, 50, 53, 51).is_err());
    }

    #[test]
    fn trigger_directions() {
        use OrderKind::*;
        let l = 10;
        assert!(EnterLongStop.triggers(Side::Long, l, 10) && EnterLongStop.triggers(Side::Long, l, 11));
        assert!(!EnterLongStop.triggers(Side::Long, l, 9));
        assert!(EnterLongLimit.triggers(Side::Long, l, 9) && !EnterLongLimit.triggers(Side::Long, l, 11));
        assert!(EnterShortStop.triggers(Side::Short, l, 9) && !EnterShortStop.triggers(Side::Short, l, 11));
        assert!(EnterShortLimit.triggers(Side::Short, l, 11) && !EnterShortLimit.triggers(Side::Short, l, 9));
        assert!(StopLoss.triggers(Side::Long, l, 9) && StopLoss.triggers(Side::Short, l, 11));
        assert!(ProfitTarget.triggers(Side::Long, l, 11) && ProfitTarget.triggers(Side::Short, l, 9));
    }

    #[test]
    fn result_consistency_rule() {
        let exit_only = TradeResult::new(Fill::NoFill, Fill::At(TickPrice(51)));
        assert!(!exit_only.is_consistent_with(PositionStatus::Flat));
        assert!(exit_only.is_consistent_with(PositionStatus::Long));
    }
}
