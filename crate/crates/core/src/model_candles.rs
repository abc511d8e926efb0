//! Grid layouts with sublevels, the model-candle suite, and the sublevel
//! substitution shortcut.
//!
//! A layout for `m` orders has levels `l_0 < ... < l_{2m}` (odd indices are
//! the order levels `L_i`) and four sublevels `l_{2i,1..4}` in each of the
//! `m + 1` bands, with `l_{2i,1} = l_{2i}`.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::price::{PriceError, TickPrice, TickSize};
use crate::simulator::LevelGrid;
use crate::types::{Candle, Setup, SetupError, TradeResult};

/// Sublevels per band.
pub const SUBLEVELS: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LayoutError {
    #[error("a layout needs 2m+1 levels with m >= 1, got {0}")]
    LevelCount(usize),
    #[error("expected {expected} sublevel bands, got {got}")]
    BandCount { expected: usize, got: usize },
    #[error("band {band} must start at level l_{}", 2 * band)]
    BandStart { band: usize },
    #[error("layout values must be positive")]
    NonPositive,
    #[error("layout values must increase strictly: {below} is not below {above}")]
    Unordered { below: TickPrice, above: TickPrice },
    #[error("layout has {layout} orders but the setup has {setup}")]
    OrderCount { layout: usize, setup: usize },
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Price(#[from] PriceError),
}

/// Name of a layout point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PointLabel {
    /// `l_i`. Even `i` doubles as the first sublevel of band `i / 2`.
    Level(usize),
    /// `l_{2 band, j}` for `j` in `2..=4`.
    Sub { band: usize, j: usize },
}

impl PointLabel {
    /// Band and sublevel index, if the point is a sublevel (including
    /// `l_{2i} = l_{2i,1}`).
    pub fn sublevel(self) -> Option<(usize, usize)> {
        match self {
            PointLabel::Level(i) if i % 2 == 0 => Some((i / 2, 1)),
            PointLabel::Level(_) => None,
            PointLabel::Sub { band, j } => Some((band, j)),
        }
    }
}

impl fmt::Display for PointLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointLabel::Level(i) => write!(f, "l_{i}"),
            PointLabel::Sub { band, j } => write!(f, "l_{{{},{j}}}", 2 * band),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "LayoutFile", into = "LayoutFile")]
pub struct GridLayout {
    tick: TickSize,
    levels: Vec<TickPrice>,
    sublevels: Vec<[TickPrice; SUBLEVELS]>,
}

/// File form of a layout: decimal strings in units of `tick`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayoutFile {
    pub tick: TickSize,
    pub levels: Vec<String>,
    pub sublevels: Vec<[String; SUBLEVELS]>,
}

impl TryFrom<LayoutFile> for GridLayout {
    type Error = LayoutError;

    fn try_from(file: LayoutFile) -> Result<Self, LayoutError> {
        let tick = file.tick;
        let levels = file
            .levels
            .iter()
            .map(|s| tick.parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let mut sublevels = Vec::with_capacity(file.sublevels.len());
        for band in &file.sublevels {
            let mut out = [TickPrice(0); SUBLEVELS];
            for (slot, s) in out.iter_mut().zip(band) {
                *slot = tick.parse(s)?;
            }
            sublevels.push(out);
        }
        GridLayout::new(tick, levels, sublevels)
    }
}

impl From<GridLayout> for LayoutFile {
    fn from(layout: GridLayout) -> Self {
        let tick = layout.tick;
        LayoutFile {
            tick,
            levels: layout.levels.iter().map(|&p| tick.format(p)).collect(),
            sublevels: layout
                .sublevels
                .iter()
                .map(|band| band.map(|p| tick.format(p)))
                .collect(),
        }
    }
}

impl GridLayout {
    pub fn new(
        tick: TickSize,
        levels: Vec<TickPrice>,
        sublevels: Vec<[TickPrice; SUBLEVELS]>,
    ) -> Result<Self, LayoutError> {
        if levels.len() < 3 || levels.len().is_multiple_of(2) {
            return Err(LayoutError::LevelCount(levels.len()));
        }
        let m = levels.len() / 2;
        if sublevels.len() != m + 1 {
            return Err(LayoutError::BandCount {
                expected: m + 1,
                got: sublevels.len(),
            });
        }
        for (band, subs) in sublevels.iter().enumerate() {
            if subs[0] != levels[2 * band] {
                return Err(LayoutError::BandStart { band });
            }
        }
        let layout = Self { tick, levels, sublevels };
        let chain: Vec<TickPrice> = layout.points().into_iter().map(|(p, _)| p).collect();
        if chain[0].ticks() == 0 {
            return Err(LayoutError::NonPositive);
        }
        for pair in chain.windows(2) {
            if pair[0] >= pair[1] {
                return Err(LayoutError::Unordered {
                    below: pair[0],
                    above: pair[1],
                });
            }
        }
        Ok(layout)
    }

    /// Default layout for `m` orders at tick 0.01: `l_i = 50.05 + i` and
    /// `l_{2i,j} = 49.95 + 2i + 0.1 j`.
    pub fn canonical(m: usize) -> Self {
        assert!(m >= 1, "a layout needs at least one order level");
        let levels = (0..=2 * m as u64).map(|i| TickPrice(5005 + 100 * i)).collect();
        let sublevels = (0..=m as u64)
            .map(|i| std::array::from_fn(|j| TickPrice(4995 + 200 * i + 10 * (j as u64 + 1))))
            .collect();
        Self::new(TickSize::CENT, levels, sublevels).expect("canonical layout is valid")
    }

    /// Layout from its `5m + 4` points in ascending order, as listed by
    /// [`GridLayout::points`].
    pub fn from_points(tick: TickSize, points: &[TickPrice]) -> Result<Self, LayoutError> {
        if points.len() < 9 || !(points.len() - 4).is_multiple_of(5) {
            return Err(LayoutError::LevelCount(points.len()));
        }
        let m = (points.len() - 4) / 5;
        let mut levels = Vec::with_capacity(2 * m + 1);
        let mut sublevels = Vec::with_capacity(m + 1);
        for band in 0..=m {
            let start = 5 * band;
            let subs: [TickPrice; SUBLEVELS] = points[start..start + SUBLEVELS].try_into().expect("four points");
            levels.push(subs[0]);
            sublevels.push(subs);
            if band < m {
                levels.push(points[start + SUBLEVELS]);
            }
        }
        Self::new(tick, levels, sublevels)
    }

    pub fn tick(&self) -> TickSize {
        self.tick
    }

    /// Number of order levels.
    pub fn m(&self) -> usize {
        self.levels.len() / 2
    }

    /// `l_0, ..., l_{2m}`.
    pub fn levels(&self) -> &[TickPrice] {
        &self.levels
    }

    /// `l_{2i,1..4}` for each band `i`.
    pub fn sublevels(&self) -> &[[TickPrice; SUBLEVELS]] {
        &self.sublevels
    }

    /// `L_1, ..., L_m`.
    pub fn order_levels(&self) -> Vec<TickPrice> {
        self.levels.iter().skip(1).step_by(2).copied().collect()
    }

    /// The IPMS grid over `l_0, ..., l_{2m}`.
    pub fn level_grid(&self) -> LevelGrid {
        LevelGrid::new(self.levels.clone()).expect("layout levels are strictly increasing")
    }

    /// Every distinct point in ascending order: band 0 sublevels, `L_1`,
    /// band 1 sublevels, ..., `L_m`, band `m` sublevels.
    pub fn points(&self) -> Vec<(TickPrice, PointLabel)> {
        let mut out = Vec::with_capacity(5 * self.m() + 4);
        for (band, subs) in self.sublevels.iter().enumerate() {
            if band > 0 {
                out.push((self.levels[2 * band - 1], PointLabel::Level(2 * band - 1)));
            }
            out.push((subs[0], PointLabel::Level(2 * band)));
            for (k, &p) in subs.iter().enumerate().skip(1) {
                out.push((p, PointLabel::Sub { band, j: k + 1 }));
            }
        }
        out
    }

    pub fn label_of(&self, price: TickPrice) -> Option<PointLabel> {
        self.points()
            .into_iter()
            .find_map(|(p, label)| (p == price).then_some(label))
    }

    pub fn value_of(&self, label: PointLabel) -> TickPrice {
        match label {
            PointLabel::Level(i) => self.levels[i],
            PointLabel::Sub { band, j } => self.sublevels[band][j - 1],
        }
    }

    /// The setup moved onto this layout's order levels.
    pub fn place(&self, setup: &Setup) -> Result<Setup, LayoutError> {
        if setup.len() != self.m() {
            return Err(LayoutError::OrderCount {
                layout: self.m(),
                setup: setup.len(),
            });
        }
        Ok(setup.with_levels(&self.order_levels())?)
    }

    /// Whether the setup already sits on this layout's order levels.
    pub fn hosts(&self, setup: &Setup) -> bool {
        setup.len() == self.m() && setup.levels().eq(self.order_levels())
    }
}

impl Default for GridLayout {
    fn default() -> Self {
        Self::canonical(2)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelCandleError {
    #[error("candle value {0} is not a layout point")]
    OffLayout(TickPrice),
    #[error("candle uses sublevels of band {band} that are not a prefix l_{{{},1..r}}", 2 * band)]
    NotPrefix { band: usize },
}

/// A candle whose values are layout points and whose sublevels form a
/// prefix in every band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ModelCandle {
    candle: Candle,
}

impl ModelCandle {
    pub fn new(layout: &GridLayout, candle: Candle) -> Result<Self, ModelCandleError> {
        let mut used: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); layout.m() + 1];
        for value in candle.values() {
            let label = layout.label_of(value).ok_or(ModelCandleError::OffLayout(value))?;
            if let Some((band, j)) = label.sublevel() {
                used[band].insert(j);
            }
        }
        for (band, js) in used.iter().enumerate() {
            if js.iter().copied().ne(1..=js.len()) {
                return Err(ModelCandleError::NotPrefix { band });
            }
        }
        Ok(Self { candle })
    }

    pub fn candle(&self) -> Candle {
        self.candle
    }
}

impl fmt::Display for ModelCandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.candle.fmt(f)
    }
}

/// Every valid candle with values in `values` (sorted ascending), in
/// lexicographic `(open, close, high, low)` order.
fn candles_over(values: &[TickPrice]) -> Vec<Candle> {
    let mut out = Vec::new();
    for &o in values {
        for &c in values {
            for &h in values {
                for &l in values {
                    if let Ok(candle) = Candle::new(o, c, h, l) {
                        out.push(candle);
                    }
                }
            }
        }
    }
    out
}

/// Candles with values in `l_0, ..., l_{2m}`.
pub fn gen_representative_candles(layout: &GridLayout) -> Vec<Candle> {
    candles_over(layout.levels())
}

/// The model-candle suite of a layout.
pub fn gen_model_candles(layout: &GridLayout) -> Vec<ModelCandle> {
    model_candles_filtered(layout, true)
        .into_iter()
        .map(|candle| ModelCandle { candle })
        .collect()
}

/// Candles over all layout points, optionally without the prefix filter.
pub(crate) fn model_candles_filtered(layout: &GridLayout, require_prefix: bool) -> Vec<Candle> {
    let points: Vec<TickPrice> = layout.points().into_iter().map(|(p, _)| p).collect();
    candles_over(&points)
        .into_iter()
        .filter(|&c| !require_prefix || ModelCandle::new(layout, c).is_ok())
        .collect()
}

/// What [`substitute_sublevels`] collapsed, as far as results care: only
/// the open can become a fill price.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Resubstitution {
    pub open: Option<OpenSwap>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenSwap {
    pub collapsed: TickPrice,
    pub original: TickPrice,
}

/// Collapses every sublevel `l_{2i,j}` onto `l_{2i}`.
pub fn substitute_sublevels(layout: &GridLayout, mc: &ModelCandle) -> (Candle, Resubstitution) {
    let collapse = |p: TickPrice| -> Result<TickPrice, std::convert::Infallible> {
        match layout.label_of(p).and_then(PointLabel::sublevel) {
            Some((band, _)) => Ok(layout.levels[2 * band]),
            None => Ok(p),
        }
    };
    let Ok(candle) = mc.candle.map(collapse);
    let open = mc.candle.open();
    let collapsed = candle.open();
    let resub = Resubstitution {
        open: (collapsed != open).then_some(OpenSwap {
            collapsed,
            original: open,
        }),
    };
    (candle, resub)
}

/// Maps a result of the substituted candle back to the original one.
pub fn resubstitute(result: &TradeResult, resub: &Resubstitution) -> TradeResult {
    let Some(swap) = resub.open else {
        return *result;
    };
    let Ok(out) = result.map(|p| -> Result<TickPrice, std::convert::Infallible> {
        Ok(if p == swap.collapsed { swap.original } else { p })
    });
    out
}

/// Canonical layout for a setup's order count.
pub fn canonical_for(setup: &Setup) -> GridLayout {
    GridLayout::canonical(setup.len())
}
