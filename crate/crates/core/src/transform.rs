//! Strictly increasing piecewise-linear maps of the price axis, and the
//! canonicalization of arbitrary candles onto a model layout.
//!
//! A [`Transformation`] is given by breakpoints `(s_k, t_k)`. Below the
//! first breakpoint it is the line through the origin, above the last it
//! has slope 1, and in between it interpolates linearly. Breakpoints are
//! exact rationals so no rounding can creep in; applying a transformation
//! to a tick price fails unless the image is again a whole tick.

use num_rational::Ratio;
use thiserror::Error;

use crate::model_candles::{GridLayout, LayoutError, ModelCandle, ModelCandleError, SUBLEVELS};
use crate::price::TickPrice;
use crate::types::{Candle, Order, Setup, SetupError, TradeResult};

pub type Q = Ratio<i128>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransformError {
    #[error("a transformation needs at least one breakpoint")]
    Empty,
    #[error("breakpoints must be positive and strictly increasing in both coordinates")]
    NotIncreasing,
    #[error("{0} maps to {1}, which is not a whole positive tick")]
    OffTick(TickPrice, Q),
    #[error("layouts differ in shape: {source_m} vs {target_m} orders")]
    ShapeMismatch { source_m: usize, target_m: usize },
    #[error("candle values must be positive")]
    ZeroPrice,
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    ModelCandle(#[from] ModelCandleError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transformation {
    points: Vec<(Q, Q)>,
}

fn q(ticks: u64) -> Q {
    Q::from_integer(i128::from(ticks))
}

impl Transformation {
    pub fn new(points: Vec<(Q, Q)>) -> Result<Self, TransformError> {
        let first = points.first().ok_or(TransformError::Empty)?;
        let zero = Q::from_integer(0);
        if first.0 <= zero || first.1 <= zero {
            return Err(TransformError::NotIncreasing);
        }
        if points.windows(2).any(|w| w[0].0 >= w[1].0 || w[0].1 >= w[1].1) {
            return Err(TransformError::NotIncreasing);
        }
        Ok(Self { points })
    }

    /// Breakpoints given in ticks.
    pub fn from_ticks(points: &[(u64, u64)]) -> Result<Self, TransformError> {
        Self::new(points.iter().map(|&(s, t)| (q(s), q(t))).collect())
    }

    pub fn identity() -> Self {
        Self {
            points: vec![(q(1), q(1))],
        }
    }

    pub fn breakpoints(&self) -> &[(Q, Q)] {
        &self.points
    }

    pub fn eval(&self, x: Q) -> Q {
        let (s0, t0) = self.points[0];
        if x < s0 {
            return x * t0 / s0;
        }
        let (sn, tn) = *self.points.last().expect("non-empty");
        if x >= sn {
            return tn + (x - sn);
        }
        let k = self.points.partition_point(|&(s, _)| s <= x);
        let (sa, ta) = self.points[k - 1];
        let (sb, tb) = self.points[k];
        ta + (x - sa) * (tb - ta) / (sb - sa)
    }

    pub fn inverse(&self) -> Self {
        Self {
            points: self.points.iter().map(|&(s, t)| (t, s)).collect(),
        }
    }

    /// `other ∘ self`.
    pub fn then(&self, other: &Transformation) -> Self {
        let mut sources: Vec<Q> = self.points.iter().map(|&(s, _)| s).collect();
        let back = self.inverse();
        sources.extend(other.points.iter().map(|&(s, _)| back.eval(s)));
        sources.sort();
        sources.dedup();
        Self {
            points: sources.into_iter().map(|s| (s, other.eval(self.eval(s)))).collect(),
        }
    }

    pub fn apply_price(&self, price: TickPrice) -> Result<TickPrice, TransformError> {
        let y = self.eval(q(price.ticks()));
        if y.is_integer() && *y.numer() > 0 {
            u64::try_from(*y.numer())
                .map(TickPrice)
                .map_err(|_| TransformError::OffTick(price, y))
        } else {
            Err(TransformError::OffTick(price, y))
        }
    }

    pub fn apply_candle(&self, candle: &Candle) -> Result<Candle, TransformError> {
        candle.map(|p| self.apply_price(p))
    }

    /// `NoFill` stays `NoFill`.
    pub fn apply_result(&self, result: &TradeResult) -> Result<TradeResult, TransformError> {
        result.map(|p| self.apply_price(p))
    }

    pub fn apply_values(&self, values: &[TickPrice]) -> Result<Vec<TickPrice>, TransformError> {
        values.iter().map(|&p| self.apply_price(p)).collect()
    }

    pub fn apply_setup(&self, setup: &Setup) -> Result<Setup, TransformError> {
        let orders = setup
            .orders()
            .iter()
            .map(|o| Ok(Order::new(o.kind, self.apply_price(o.level)?)))
            .collect::<Result<Vec<_>, TransformError>>()?;
        Ok(Setup::new(orders, setup.position())?)
    }
}

/// The map sending every point of `source` to the same point of `target`.
pub fn build_transformation(source: &GridLayout, target: &GridLayout) -> Result<Transformation, TransformError> {
    if source.m() != target.m() {
        return Err(TransformError::ShapeMismatch {
            source_m: source.m(),
            target_m: target.m(),
        });
    }
    let points = source
        .points()
        .into_iter()
        .zip(target.points())
        .map(|((s, _), (t, _))| (q(s.ticks()), q(t.ticks())))
        .collect();
    Transformation::new(points)
}

/// A candle and setup moved onto a model layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Canonical {
    pub model: ModelCandle,
    pub setup: Setup,
    pub transform: Transformation,
}

/// Finds a transformation taking the setup's levels onto the layout's
/// order levels and the candle onto a model candle.
///
/// Source points are rational, so sublevels always fit between two levels
/// however close they are.
pub fn canonicalize(candle: &Candle, setup: &Setup, layout: &GridLayout) -> Result<Canonical, TransformError> {
    if setup.len() != layout.m() {
        return Err(LayoutError::OrderCount {
            layout: layout.m(),
            setup: setup.len(),
        }
        .into());
    }
    if candle.low().ticks() == 0 {
        return Err(TransformError::ZeroPrice);
    }
    if layout.hosts(setup) {
        if let Ok(model) = ModelCandle::new(layout, *candle) {
            return Ok(Canonical {
                model,
                setup: setup.clone(),
                transform: Transformation::identity(),
            });
        }
    }

    let levels: Vec<Q> = setup.levels().map(|p| q(p.ticks())).collect();
    let values: Vec<Q> = {
        let mut v: Vec<Q> = candle.values().iter().map(|p| q(p.ticks())).collect();
        v.sort();
        v.dedup();
        v
    };
    let m = levels.len();
    let mut sources = Vec::with_capacity(5 * m + 4);
    for band in 0..=m {
        if band > 0 {
            sources.push(levels[band - 1]);
        }
        let lo = if band == 0 { Q::from_integer(0) } else { levels[band - 1] };
        let hi = levels.get(band).copied();
        let inside: Vec<Q> = values
            .iter()
            .copied()
            .filter(|&v| v > lo && hi.is_none_or(|h| v < h))
            .collect();
        debug_assert!(inside.len() <= SUBLEVELS);
        let start = inside.last().copied().unwrap_or(lo);
        let free = SUBLEVELS - inside.len();
        sources.extend(inside.iter().copied());
        for k in 1..=free {
            let step = match hi {
                Some(h) => (h - start) / Q::from_integer(free as i128 + 1),
                None => Q::from_integer(1),
            };
            sources.push(start + step * Q::from_integer(k as i128));
        }
    }
    let points = sources
        .into_iter()
        .zip(layout.points())
        .map(|(s, (t, _))| (s, q(t.ticks())))
        .collect();
    let transform = Transformation::new(points)?;
    let model = ModelCandle::new(layout, transform.apply_candle(candle)?)?;
    let setup = transform.apply_setup(setup)?;
    debug_assert!(layout.hosts(&setup));
    Ok(Canonical {
        model,
        setup,
        transform,
    })
}
