//! Rule-based serving-cell selection in the style of an A3 event: a
//! neighbour takes over once it beats the serving cell by the hysteresis
//! margin for `time_to_trigger` consecutive measurements.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    pub hysteresis_db: f64,
    pub time_to_trigger: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { hysteresis_db: 3.0, time_to_trigger: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineState {
    pub serving: u32,
    pub hysteresis: f64,
    pub time_to_trigger: usize,
    /// Consecutive entering-condition count per neighbour.
    pub counters: BTreeMap<u32, usize>,
}

impl BaselineState {
    pub fn new(serving: u32, cfg: &BaselineConfig) -> Self {
        Self {
            serving,
            hysteresis: cfg.hysteresis_db,
            time_to_trigger: cfg.time_to_trigger.max(1),
            counters: BTreeMap::new(),
        }
    }
}

/// Feeds one measurement report and returns the (possibly new) serving id.
pub fn baseline_select_gbs(state: &mut BaselineState, rsrps: &[(u32, f64)]) -> u32 {
    let Some(serving_rsrp) = rsrps.iter().find(|(id, _)| *id == state.serving).map(|m| m.1) else {
        // serving cell vanished from the report: fall back to the strongest
        if let Some(best) = crate::radio::argmax_rsrp(rsrps) {
            state.serving = best.0;
            state.counters.clear();
        }
        return state.serving;
    };
    let mut triggered: Option<(u32, f64)> = None;
    for &(id, v) in rsrps {
        if id == state.serving {
            continue;
        }
        let c = state.counters.entry(id).or_insert(0);
        if v > serving_rsrp + state.hysteresis {
            *c = (*c + 1).min(state.time_to_trigger);
        } else {
            *c = 0;
        }
        if *c >= state.time_to_trigger {
            triggered = match triggered {
                Some((bid, bv)) if bv > v || (bv == v && bid < id) => Some((bid, bv)),
                _ => Some((id, v)),
            };
        }
    }
    if let Some((id, _)) = triggered {
        state.serving = id;
        state.counters.clear();
    }
    state.serving
}
