//! Conformance runs of an engine against the reference oracle.

pub mod adapter;
pub mod catalog;
pub mod conformance;
pub mod selftest;
pub mod stability;
pub mod vectors;

use std::sync::Arc;

use thiserror::Error;

use crate::model_candles::{gen_model_candles, GridLayout, LayoutError};
use crate::oracle::{Oracle, OracleError, OutcomeSet};
use crate::par::Exec;
use crate::types::{Candle, Setup};

use catalog::SetupCatalog;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error("no catalog setup has {0} orders")]
    NoMatchingSetup(usize),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A catalog setup on its layout with the oracle's answer for every model
/// candle.
#[derive(Debug, Clone)]
pub struct SetupSuite {
    pub id: String,
    pub setup: Setup,
    pub layout: GridLayout,
    pub cases: Vec<(Candle, OutcomeSet)>,
}

/// Places every catalog setup on `layout` (or its canonical layout) and
/// computes the expected outcome sets. With a fixed layout only setups of
/// matching order count are kept.
pub fn build_suites(
    catalog: &SetupCatalog,
    layout: Option<&GridLayout>,
    oracle: &Oracle,
    exec: Exec,
) -> Result<Vec<SetupSuite>, HarnessError> {
    let mut suites = Vec::new();
    for entry in catalog.entries() {
        let layout = match layout {
            Some(l) if l.m() != entry.setup.len() => continue,
            Some(l) => l.clone(),
            None => GridLayout::canonical(entry.setup.len()),
        };
        let setup = layout.place(&entry.setup)?;
        oracle.crset(&setup)?;
        let candles: Vec<Candle> = gen_model_candles(&layout).iter().map(|mc| mc.candle()).collect();
        let cases = exec
            .map(&candles, |c| oracle.outcomes(&setup, c).map(|o| (*c, o)))
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        suites.push(SetupSuite {
            id: entry.id.clone(),
            setup,
            layout,
            cases,
        });
    }
    if suites.is_empty() {
        return Err(HarnessError::NoMatchingSetup(layout.map_or(0, GridLayout::m)));
    }
    Ok(suites)
}

/// The oracle shared by a run.
pub fn shared_oracle(layout: Option<&GridLayout>, exec: Exec) -> Arc<Oracle> {
    let source = match layout {
        Some(l) => crate::oracle::LayoutSource::Fixed(l.clone()),
        None => crate::oracle::LayoutSource::Canonical,
    };
    Arc::new(Oracle::new(source, exec))
}
