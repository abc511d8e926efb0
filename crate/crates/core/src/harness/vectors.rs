//! Expected results for every (setup, model candle, mode) as fixture rows.

use serde::Serialize;

use super::{HarnessError, SetupSuite};
use crate::price::TickSize;
use crate::types::BacktestMode;
use crate::wire::{WireCandle, WireResult};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VectorRow {
    pub setup_id: String,
    pub candle: WireCandle,
    pub mode: String,
    pub expected: WireResult,
    /// Number of distinct admissible results for the candle.
    pub multiplicity: usize,
    /// Other answers valued the same as `expected` in this mode.
    pub tied: Vec<WireResult>,
}

pub fn vector_rows(suites: &[SetupSuite], modes: &[BacktestMode], tick: TickSize) -> Vec<VectorRow> {
    let mut rows = Vec::new();
    for suite in suites {
        for (candle, outcomes) in &suite.cases {
            for &mode in modes {
                let expected = outcomes.pick(&suite.setup, mode);
                let tied = outcomes
                    .acceptable(&suite.setup, mode)
                    .into_iter()
                    .filter(|r| *r != expected)
                    .map(|r| WireResult::from_result(&r, tick))
                    .collect();
                rows.push(VectorRow {
                    setup_id: suite.id.clone(),
                    candle: WireCandle::from_candle(candle, tick),
                    mode: mode.wire_name().to_string(),
                    expected: WireResult::from_result(&expected, tick),
                    multiplicity: outcomes.len(),
                    tied,
                });
            }
        }
    }
    rows
}

pub fn rows_to_json(rows: &[VectorRow]) -> String {
    let mut text = serde_json::to_string_pretty(rows).expect("serializable");
    text.push('\n');
    text
}

fn fill_text(fill: &crate::wire::WireFill) -> String {
    match fill {
        crate::wire::WireFill::NoFill => "-1".to_string(),
        crate::wire::WireFill::Price(p) => p.clone(),
    }
}

/// One line per row; ties are written as `entry/exit` pairs joined by `;`.
pub fn rows_to_csv(rows: &[VectorRow]) -> Result<String, HarnessError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "setup_id", "open", "close", "high", "low", "mode", "entry", "exit", "multiplicity", "tied",
    ])?;
    for r in rows {
        let tied: Vec<String> = r
            .tied
            .iter()
            .map(|t| format!("{}/{}", fill_text(&t.entry), fill_text(&t.exit)))
            .collect();
        w.write_record([
            r.setup_id.as_str(),
            &r.candle.open,
            &r.candle.close,
            &r.candle.high,
            &r.candle.low,
            &r.mode,
            &fill_text(&r.expected.entry),
            &fill_text(&r.expected.exit),
            &r.multiplicity.to_string(),
            &tied.join(";"),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| HarnessError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
