//! Setup templates the conformance run iterates over.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model_candles::GridLayout;
use crate::price::{TickPrice, TickSize};
use crate::types::{Order, OrderKind, PositionStatus, Setup, SetupError, Side};
use crate::wire::{WireError, WireSetup};

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error(transparent)]
    Setup(#[from] SetupError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("duplicate catalog id `{0}`")]
    DuplicateId(String),
    #[error("catalog is empty")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub id: String,
    pub setup: Setup,
}

/// File form of one entry. Levels only fix the order of the orders; the
/// run moves every setup onto the layout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogFileEntry {
    pub id: String,
    #[serde(flatten)]
    pub setup: WireSetup,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SetupCatalog {
    entries: Vec<CatalogEntry>,
}

/// Orders of a template in ascending level order.
fn ordered_kinds(entry: Option<OrderKind>, stop: bool, target: bool, side: Side) -> Vec<OrderKind> {
    let mut low_to_high = Vec::new();
    if stop {
        low_to_high.push(OrderKind::StopLoss);
    }
    if let Some(e) = entry {
        low_to_high.push(e);
    }
    if target {
        low_to_high.push(OrderKind::ProfitTarget);
    }
    if side == Side::Short {
        low_to_high.reverse();
    }
    low_to_high
}

fn template_id(position: PositionStatus, kinds: &[OrderKind]) -> String {
    let p = match position {
        PositionStatus::Flat => "flat",
        PositionStatus::Long => "long",
        PositionStatus::Short => "short",
    };
    let names: Vec<&str> = kinds.iter().map(|k| k.name()).collect();
    format!("{p}:{}", names.join("+"))
}

fn build(kinds: Vec<OrderKind>, position: PositionStatus, layout: &GridLayout) -> Result<CatalogEntry, SetupError> {
    let levels = layout.order_levels();
    let orders = kinds.iter().zip(levels).map(|(&k, l)| Order::new(k, l)).collect();
    let setup = Setup::new(orders, position)?;
    Ok(CatalogEntry {
        id: template_id(position, &kinds),
        setup,
    })
}

impl SetupCatalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Result<Self, CatalogError> {
        if entries.is_empty() {
            return Err(CatalogError::Empty);
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id.as_str()) {
                return Err(CatalogError::DuplicateId(e.id.clone()));
            }
        }
        Ok(Self { entries })
    }

    /// Every entry kind with each exit combination on a flat position, then
    /// long and short positions with each non-empty exit combination. Each
    /// setup sits on the canonical layout for its order count.
    pub fn default_catalog() -> Self {
        let combos = [(false, false), (true, false), (false, true), (true, true)];
        let mut entries = Vec::new();
        for entry in OrderKind::ENTRIES {
            let side = entry.entry_side().expect("entry kind");
            for (stop, target) in combos {
                let kinds = ordered_kinds(Some(entry), stop, target, side);
                let layout = GridLayout::canonical(kinds.len());
                entries.push(build(kinds, PositionStatus::Flat, &layout).expect("valid template"));
            }
        }
        for position in [PositionStatus::Long, PositionStatus::Short] {
            let side = position.side().expect("open position");
            for (stop, target) in &combos[1..] {
                let kinds = ordered_kinds(None, *stop, *target, side);
                let layout = GridLayout::canonical(kinds.len());
                entries.push(build(kinds, position, &layout).expect("valid template"));
            }
        }
        Self::new(entries).expect("default catalog is valid")
    }

    pub fn from_json(text: &str, tick: TickSize) -> Result<Self, CatalogError> {
        let raw: Vec<CatalogFileEntry> = serde_json::from_str(text)?;
        let entries = raw
            .into_iter()
            .map(|e| {
                Ok(CatalogEntry {
                    setup: e.setup.to_setup(tick)?,
                    id: e.id,
                })
            })
            .collect::<Result<Vec<_>, CatalogError>>()?;
        Self::new(entries)
    }

    pub fn to_json(&self, tick: TickSize) -> String {
        let raw: Vec<CatalogFileEntry> = self
            .entries
            .iter()
            .map(|e| CatalogFileEntry {
                id: e.id.clone(),
                setup: WireSetup::from_setup(&e.setup, tick),
            })
            .collect();
        serde_json::to_string_pretty(&raw).expect("serializable")
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn get(&self, id: &str) -> Option<&CatalogEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    /// Entries with exactly `m` orders.
    pub fn with_order_count(&self, m: usize) -> Vec<CatalogEntry> {
        self.entries.iter().filter(|e| e.setup.len() == m).cloned().collect()
    }
}

/// `EnterLongStop` at `L_2` protected by `StopLoss` at `L_1`.
pub const STOP_ENTRY_ID: &str = "flat:StopLoss+EnterLongStop";

/// The stop-entry setup at levels 51 and 53 in whole ticks.
pub fn stop_entry_example() -> Setup {
    Setup::new(
        vec![
            Order::new(OrderKind::EnterLongStop, TickPrice(53)),
            Order::new(OrderKind::StopLoss, TickPrice(51)),
        ],
        PositionStatus::Flat,
    )
    .expect("valid setup")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_catalog_shape() {
        let cat = SetupCatalog::default_catalog();
        assert_eq!(cat.entries().len(), 22);
        let by_m: Vec<usize> = (1..=3).map(|m| cat.with_order_count(m).len()).collect();
        assert_eq!(by_m, [8, 10, 4]);
        let example = cat.get(STOP_ENTRY_ID).unwrap();
        assert_eq!(example.setup.shape(), stop_entry_example().shape());
        assert!(cat.get("short:ProfitTarget+StopLoss").is_some());
        assert!(cat.get("flat:ProfitTarget+EnterShortLimit+StopLoss").is_some());
    }

    #[test]
    fn catalog_file_round_trip() {
        let cat = SetupCatalog::default_catalog();
        let text = cat.to_json(TickSize::CENT);
        assert_eq!(SetupCatalog::from_json(&text, TickSize::CENT).unwrap(), cat);
        let dup = r#"[{"id":"a","p":1,"orders":[{"kind":"StopLoss","level":"1"}]},
                      {"id":"a","p":1,"orders":[{"kind":"StopLoss","level":"2"}]}]"#;
        assert!(matches!(SetupCatalog::from_json(dup, TickSize::CENT), Err(CatalogError::DuplicateId(_))));
    }
}
