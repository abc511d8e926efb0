//! External JSON forms of the domain types.
//!
//! Prices travel as decimal strings in units of the tick size; a missing
//! fill is the number `-1`. On input, fills are also accepted as JSON
//! numbers and as the string `"-1"`.

use serde::de::{self, Deserializer};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::price::{PriceError, TickSize};
use crate::types::{
    BacktestMode, Candle, CandleError, Fill, Order, OrderKind, PositionStatus, Setup, SetupError,
    TradeResult,
};

#[derive(Debug, Error)]
pub enum WireError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Price(#[from] PriceError),
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Candle(#[from] CandleError),
    #[error("position status must be -1, 0 or 1, got {0}")]
    Position(i8),
    #[error("unknown backtest mode `{0}`")]
    Mode(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireOrder {
    pub kind: OrderKind,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireSetup {
    pub p: i8,
    pub orders: Vec<WireOrder>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireCandle {
    pub open: String,
    pub close: String,
    pub high: String,
    pub low: String,
}

/// A fill as it appears on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WireFill {
    NoFill,
    Price(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireResult {
    pub entry: WireFill,
    pub exit: WireFill,
}

impl Serialize for WireFill {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            WireFill::NoFill => serializer.serialize_i64(-1),
            WireFill::Price(p) => serializer.serialize_str(p),
        }
    }
}

impl<'de> Deserialize<'de> for WireFill {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        match serde_json::Value::deserialize(deserializer)? {
            serde_json::Value::Number(n) => {
                if n.as_i64() == Some(-1) || n.as_f64() == Some(-1.0) {
                    Ok(WireFill::NoFill)
                } else {
                    Ok(WireFill::Price(n.to_string()))
                }
            }
            serde_json::Value::String(s) if s.trim() == "-1" => Ok(WireFill::NoFill),
            serde_json::Value::String(s) => Ok(WireFill::Price(s)),
            serde_json::Value::Null => Ok(WireFill::NoFill),
            other => Err(de::Error::custom(format!("invalid fill value {other}"))),
        }
    }
}

impl WireSetup {
    pub fn from_setup(setup: &Setup, tick: TickSize) -> Self {
        Self {
            p: setup.position().as_i8(),
            orders: setup
                .orders()
                .iter()
                .map(|o| WireOrder {
                    kind: o.kind,
                    level: tick.format(o.level),
                })
                .collect(),
        }
    }

    pub fn to_setup(&self, tick: TickSize) -> Result<Setup, WireError> {
        let position = PositionStatus::from_i8(self.p).ok_or(WireError::Position(self.p))?;
        let orders = self
            .orders
            .iter()
            .map(|o| Ok(Order::new(o.kind, tick.parse(&o.level)?)))
            .collect::<Result<Vec<_>, WireError>>()?;
        Ok(Setup::new(orders, position)?)
    }
}

impl WireCandle {
    pub fn from_candle(candle: &Candle, tick: TickSize) -> Self {
        Self {
            open: tick.format(candle.open()),
            close: tick.format(candle.close()),
            high: tick.format(candle.high()),
            low: tick.format(candle.low()),
        }
    }

    pub fn to_candle(&self, tick: TickSize) -> Result<Candle, WireError> {
        Ok(Candle::new(
            tick.parse(&self.open)?,
            tick.parse(&self.close)?,
            tick.parse(&self.high)?,
            tick.parse(&self.low)?,
        )?)
    }
}

impl WireFill {
    pub fn from_fill(fill: Fill, tick: TickSize) -> Self {
        match fill {
            Fill::NoFill => WireFill::NoFill,
            Fill::At(p) => WireFill::Price(tick.format(p)),
        }
    }

    pub fn to_fill(&self, tick: TickSize) -> Result<Fill, WireError> {
        match self {
            WireFill::NoFill => Ok(Fill::NoFill),
            WireFill::Price(p) => Ok(Fill::At(tick.parse(p)?)),
        }
    }
}

impl WireResult {
    pub fn from_result(result: &TradeResult, tick: TickSize) -> Self {
        Self {
            entry: WireFill::from_fill(result.entry, tick),
            exit: WireFill::from_fill(result.exit, tick),
        }
    }

    pub fn to_result(&self, tick: TickSize) -> Result<TradeResult, WireError> {
        Ok(TradeResult::new(self.entry.to_fill(tick)?, self.exit.to_fill(tick)?))
    }
}

/// One adapter request line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRequest {
    pub setup: WireSetup,
    pub candle: WireCandle,
    pub mode: String,
}

impl WireRequest {
    pub fn new(setup: &Setup, candle: &Candle, mode: BacktestMode, tick: TickSize) -> Self {
        Self {
            setup: WireSetup::from_setup(setup, tick),
            candle: WireCandle::from_candle(candle, tick),
            mode: mode.wire_name().to_string(),
        }
    }

    pub fn decode(&self, tick: TickSize) -> Result<(Setup, Candle, BacktestMode), WireError> {
        let mode = BacktestMode::from_wire(&self.mode).ok_or_else(|| WireError::Mode(self.mode.clone()))?;
        Ok((self.setup.to_setup(tick)?, self.candle.to_candle(tick)?, mode))
    }
}
