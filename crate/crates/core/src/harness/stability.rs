//! Assumption audit: does the engine commute with rescalings of the price
//! axis?
//!
//! Each sample picks a model candle, a mode and a random target layout,
//! maps candle and setup with the piecewise-linear transformation between
//! the layouts, and checks `E(T(c)) = T(E(c))`. Passing samples cannot
//! prove stability; a counterexample disproves it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::adapter::EngineAdapter;
use super::SetupSuite;
use crate::model_candles::{gen_model_candles, GridLayout, LayoutError};
use crate::price::{TickPrice, TickSize};
use crate::transform::build_transformation;
use crate::types::{BacktestMode, Candle, Setup};
use crate::wire::{WireCandle, WireResult, WireSetup};

pub const AUDIT_LABEL: &str = "assumption audit";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StabilityConfig {
    pub samples_per_setup: usize,
    pub seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            samples_per_setup: 50,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Counterexample {
    pub setup_id: String,
    pub mode: String,
    pub setup: WireSetup,
    pub candle: WireCandle,
    pub answer: WireResult,
    pub mapped_setup: WireSetup,
    pub mapped_candle: WireCandle,
    /// `T` applied to `answer`; absent when that is not a price on the tick
    /// grid.
    pub mapped_answer: Option<WireResult>,
    pub answer_on_mapped: WireResult,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StabilitySection {
    pub label: String,
    pub seed: u64,
    pub samples_per_setup: usize,
    pub checked: usize,
    pub protocol_errors: usize,
    pub counterexamples: Vec<Counterexample>,
}

impl StabilitySection {
    fn empty(config: &StabilityConfig) -> Self {
        Self {
            label: AUDIT_LABEL.to_string(),
            seed: config.seed,
            samples_per_setup: config.samples_per_setup,
            checked: 0,
            protocol_errors: 0,
            counterexamples: Vec::new(),
        }
    }

    /// Section for an engine that could not be reached at all.
    pub fn unreachable(config: &StabilityConfig, _setup_id: &str) -> Self {
        Self {
            protocol_errors: config.samples_per_setup,
            ..Self::empty(config)
        }
    }

    pub fn merge(mut self, other: StabilitySection) -> Self {
        self.checked += other.checked;
        self.protocol_errors += other.protocol_errors;
        self.counterexamples.extend(other.counterexamples);
        self
    }
}

/// Seed for one setup, independent of how setups are spread over workers.
fn setup_seed(seed: u64, id: &str) -> u64 {
    id.bytes()
        .fold(seed ^ 0xcbf2_9ce4_8422_2325, |h, b| (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3))
}

/// A layout with the same order count and random gaps between points.
pub fn random_layout(rng: &mut impl Rng, m: usize, tick: TickSize) -> Result<GridLayout, LayoutError> {
    let mut at: u64 = rng.random_range(1..5000);
    let mut points = Vec::with_capacity(5 * m + 4);
    for _ in 0..5 * m + 4 {
        points.push(TickPrice(at));
        at += rng.random_range(1..=40);
    }
    GridLayout::from_points(tick, &points)
}

#[allow(clippy::too_many_arguments)]
fn spotcheck(
    adapter: &mut dyn EngineAdapter,
    setup_id: &str,
    setup: &Setup,
    layout: &GridLayout,
    candles: &[Candle],
    modes: &[BacktestMode],
    config: &StabilityConfig,
    tick: TickSize,
) -> StabilitySection {
    let mut section = StabilitySection::empty(config);
    if candles.is_empty() || modes.is_empty() {
        return section;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(setup_seed(config.seed, setup_id));
    for _ in 0..config.samples_per_setup {
        let candle = candles[rng.random_range(0..candles.len())];
        let mode = modes[rng.random_range(0..modes.len())];
        let target = random_layout(&mut rng, layout.m(), tick).expect("random layout is ordered");
        let tr = build_transformation(layout, &target).expect("same shape");
        let mapped_setup = tr.apply_setup(setup).expect("levels are layout points");
        let mapped_candle = tr.apply_candle(&candle).expect("candle values are layout points");
        let answers = adapter
            .query(setup, &candle, mode)
            .and_then(|a| Ok((a, adapter.query(&mapped_setup, &mapped_candle, mode)?)));
        let Ok((answer, on_mapped)) = answers else {
            section.protocol_errors += 1;
            continue;
        };
        section.checked += 1;
        let mapped_answer = tr.apply_result(&answer).ok();
        if mapped_answer != Some(on_mapped) {
            section.counterexamples.push(Counterexample {
                setup_id: setup_id.to_string(),
                mode: mode.wire_name().to_string(),
                setup: WireSetup::from_setup(setup, tick),
                candle: WireCandle::from_candle(&candle, tick),
                answer: WireResult::from_result(&answer, tick),
                mapped_setup: WireSetup::from_setup(&mapped_setup, tick),
                mapped_candle: WireCandle::from_candle(&mapped_candle, tick),
                mapped_answer: mapped_answer.map(|r| WireResult::from_result(&r, tick)),
                answer_on_mapped: WireResult::from_result(&on_mapped, tick),
            });
        }
    }
    section
}

pub(crate) fn spotcheck_suite(
    adapter: &mut dyn EngineAdapter,
    suite: &SetupSuite,
    modes: &[BacktestMode],
    config: &StabilityConfig,
    tick: TickSize,
) -> StabilitySection {
    let candles: Vec<Candle> = suite.cases.iter().map(|(c, _)| *c).collect();
    spotcheck(adapter, &suite.id, &suite.setup, &suite.layout, &candles, modes, config, tick)
}

/// Audits one setup on its canonical layout.
pub fn stability_spotcheck(
    adapter: &mut dyn EngineAdapter,
    setup_id: &str,
    setup: &Setup,
    modes: &[BacktestMode],
    config: &StabilityConfig,
) -> Result<StabilitySection, LayoutError> {
    let layout = GridLayout::canonical(setup.len());
    let placed = layout.place(setup)?;
    let candles: Vec<Candle> = gen_model_candles(&layout).iter().map(|mc| mc.candle()).collect();
    Ok(spotcheck(adapter, setup_id, &placed, &layout, &candles, modes, config, layout.tick()))
}
