//! Exact tick-grid prices.
//!
//! Every price in the crate is an integer number of ticks. The tick size is
//! only needed at the text boundary, where prices are rendered as decimal
//! strings (`"52.05"`) and parsed back.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A non-negative price expressed as a whole number of ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TickPrice(pub u64);

impl TickPrice {
    pub const fn new(ticks: u64) -> Self {
        Self(ticks)
    }

    pub const fn ticks(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, ticks: u64) -> Option<Self> {
        self.0.checked_add(ticks).map(Self)
    }

    pub fn checked_sub(self, ticks: u64) -> Option<Self> {
        self.0.checked_sub(ticks).map(Self)
    }
}

impl fmt::Display for TickPrice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}t", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PriceError {
    #[error("tick size must be positive")]
    ZeroTick,
    #[error("malformed decimal `{0}`")]
    Malformed(String),
    #[error("negative price `{0}`")]
    Negative(String),
    #[error("`{value}` is not a multiple of the tick size {tick}")]
    OffTick { value: String, tick: String },
    #[error("price `{0}` overflows the tick range")]
    Overflow(String),
}

/// Tick size as a decimal: `units * 10^-scale`.
///
/// `0.01` is `{ units: 1, scale: 2 }`, `0.05` is `{ units: 5, scale: 2 }`,
/// `1` is `{ units: 1, scale: 0 }`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TickSize {
    units: u64,
    scale: u32,
}

impl TickSize {
    pub const CENT: TickSize = TickSize { units: 1, scale: 2 };
    pub const ONE: TickSize = TickSize { units: 1, scale: 0 };

    pub fn new(units: u64, scale: u32) -> Result<Self, PriceError> {
        if units == 0 {
            return Err(PriceError::ZeroTick);
        }
        Ok(Self { units, scale }.normalized())
    }

    fn normalized(mut self) -> Self {
        while self.scale > 0 && self.units.is_multiple_of(10) {
            self.units /= 10;
            self.scale -= 1;
        }
        self
    }

    pub fn units(self) -> u64 {
        self.units
    }

    pub fn scale(self) -> u32 {
        self.scale
    }

    /// Renders a tick count as a decimal string with exactly `scale` decimals.
    pub fn format(self, price: TickPrice) -> String {
        let scaled = u128::from(price.0) * u128::from(self.units);
        format_scaled(scaled, self.scale)
    }

    /// Parses a decimal string into ticks. The value must be a non-negative
    /// exact multiple of the tick size.
    pub fn parse(self, text: &str) -> Result<TickPrice, PriceError> {
        let text = text.trim();
        if text.starts_with('-') {
            return Err(PriceError::Negative(text.to_string()));
        }
        let scaled = parse_scaled(text, self.scale)?;
        let units = u128::from(self.units);
        if scaled % units != 0 {
            return Err(PriceError::OffTick {
                value: text.to_string(),
                tick: self.to_string(),
            });
        }
        u64::try_from(scaled / units)
            .map(TickPrice)
            .map_err(|_| PriceError::Overflow(text.to_string()))
    }
}

impl Default for TickSize {
    fn default() -> Self {
        Self::CENT
    }
}

impl fmt::Display for TickSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_scaled(u128::from(self.units), self.scale))
    }
}

impl FromStr for TickSize {
    type Err = PriceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let scale = s.split_once('.').map_or(0, |(_, frac)| frac.len());
        let scale = u32::try_from(scale).map_err(|_| PriceError::Malformed(s.to_string()))?;
        let units = parse_scaled(s, scale)?;
        let units = u64::try_from(units).map_err(|_| PriceError::Overflow(s.to_string()))?;
        TickSize::new(units, scale)
    }
}

impl Serialize for TickSize {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TickSize {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn format_scaled(scaled: u128, scale: u32) -> String {
    if scale == 0 {
        return scaled.to_string();
    }
    let divisor = 10u128.pow(scale);
    format!(
        "{}.{:0width$}",
        scaled / divisor,
        scaled % divisor,
        width = scale as usize
    )
}

/// Parses an unsigned decimal into an integer at `10^-scale` resolution.
/// Surplus fractional digits are accepted only when they are zero.
fn parse_scaled(text: &str, scale: u32) -> Result<u128, PriceError> {
    let malformed = || PriceError::Malformed(text.to_string());
    let (int_part, frac_part) = match text.split_once('.') {
        Some((i, f)) => (i, f),
        None => (text, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(malformed());
    }
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit());
    if !all_digits(int_part) || !all_digits(frac_part) {
        return Err(malformed());
    }
    let scale = scale as usize;
    let (kept, surplus) = if frac_part.len() > scale {
        frac_part.split_at(scale)
    } else {
        (frac_part, "")
    };
    if surplus.bytes().any(|b| b != b'0') {
        return Err(PriceError::OffTick {
            value: text.to_string(),
            tick: format!("1e-{scale}"),
        });
    }
    let overflow = || PriceError::Overflow(text.to_string());
    let mut value: u128 = 0;
    for b in int_part.bytes().chain(kept.bytes()) {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(u128::from(b - b'0')))
            .ok_or_else(overflow)?;
    }
    for _ in kept.len()..scale {
        value = value.checked_mul(10).ok_or_else(overflow)?;
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tick_size_from_str() {
        assert_eq!("0.01".parse::<TickSize>().unwrap(), TickSize::CENT);
        assert_eq!("1".parse::<TickSize>().unwrap(), TickSize::ONE);
        assert_eq!("0.10".parse::<TickSize>().unwrap(), TickSize::new(1, 1).unwrap());
        let nickel: TickSize = "0.05".parse().unwrap();
        assert_eq!((nickel.units(), nickel.scale()), (5, 2));
        assert!("0".parse::<TickSize>().is_err());
        assert!("abc".parse::<TickSize>().is_err());
    }

    #[test]
    fn format_and_parse_cent_ticks() {
        let tick = TickSize::CENT;
        assert_eq!(tick.format(TickPrice(5205)), "52.05");
        assert_eq!(tick.format(TickPrice(7)), "0.07");
        assert_eq!(tick.parse("52.05").unwrap(), TickPrice(5205));
        assert_eq!(tick.parse("53").unwrap(), TickPrice(5300));
        assert_eq!(tick.parse("53.1").unwrap(), TickPrice(5310));
        assert_eq!(tick.parse("53.100").unwrap(), TickPrice(5310));
        assert_eq!(tick.parse(".5").unwrap(), TickPrice(50));
    }

    #[test]
    fn rejects_off_tick_and_negative() {
        let tick = TickSize::CENT;
        assert!(matches!(tick.parse("52.051"), Err(PriceError::OffTick { .. })));
        assert!(matches!(tick.parse("-1"), Err(PriceError::Negative(_))));
        assert!(matches!(tick.parse("1e3"), Err(PriceError::Malformed(_))));
        assert!(matches!(tick.parse(""), Err(PriceError::Malformed(_))));
        let nickel: TickSize = "0.05".parse().unwrap();
        assert_eq!(nickel.parse("0.15").unwrap(), TickPrice(3));
        assert!(matches!(nickel.parse("0.12"), Err(PriceError::OffTick { .. })));
    }

    proptest! {
        #[test]
        fn format_parse_round_trip(ticks in 0u64..10_000_000_000, units in 1u64..100, scale in 0u32..6) {
            let tick = TickSize::new(units, scale).unwrap();
            let text = tick.format(TickPrice(ticks));
            prop_assert_eq!(tick.parse(&text).unwrap(), TickPrice(ticks));
        }
    }
}
