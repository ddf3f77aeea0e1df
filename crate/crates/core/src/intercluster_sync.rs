//! Mode selection between adjacent clusters.
//!
//! At each round start a node compares its own clock with its estimates of
//! the adjacent cluster clocks and picks fast (`γ = 1`) or slow (`γ = 0`)
//! mode for the whole round. When neither trigger fires, a guard based on
//! a flooded estimate `M` of the largest clock in the system decides.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::simcore::HardwareClock;
use crate::topology::NodeIdx;

/// Inputs to the trigger predicates.
#[derive(Debug, Clone, Copy)]
pub struct TriggerState<'a> {
    pub kappa: f64,
    /// Slack `δ`. The two triggers are exclusive only while `δ < κ / 2`.
    pub slack: f64,
    pub own: f64,
    pub estimates: &'a [f64],
    pub s_min: u32,
    pub s_max: u32,
}

fn search(ts: &TriggerState, lead: f64, behind: impl Fn(f64) -> f64, ahead: impl Fn(f64) -> f64) -> Option<u32> {
    if ts.estimates.is_empty() {
        return None;
    }
    (ts.s_min..=ts.s_max).find(|&s| {
        let level = lead * ts.kappa + 2.0 * f64::from(s) * ts.kappa;
        ts.estimates.iter().any(|&e| behind(e) >= level - ts.slack)
            && ts.estimates.iter().all(|&e| ahead(e) <= level + ts.slack)
    })
}

/// Smallest `s` for which the fast trigger holds.
pub fn fast_trigger(ts: &TriggerState) -> Option<u32> {
    search(ts, 0.0, |e| e - ts.own, |e| ts.own - e)
}

/// Smallest `s` for which the slow trigger holds.
pub fn slow_trigger(ts: &TriggerState) -> Option<u32> {
    search(ts, -1.0, |e| ts.own - e, |e| e - ts.own)
}

pub fn evaluate_fast_trigger(ts: &TriggerState) -> bool {
    fast_trigger(ts).is_some()
}

pub fn evaluate_slow_trigger(ts: &TriggerState) -> bool {
    slow_trigger(ts).is_some()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeCause {
    #[serde(rename = "FT")]
    FastTrigger,
    #[serde(rename = "ST")]
    SlowTrigger,
    #[serde(rename = "GUARD")]
    Guard,
    #[serde(rename = "DEFAULT")]
    Default,
    #[serde(rename = "FORCED")]
    Forced,
}

impl ModeCause {
    pub fn as_str(self) -> &'static str {
        match self {
            ModeCause::FastTrigger => "FT",
            ModeCause::SlowTrigger => "ST",
            ModeCause::Guard => "GUARD",
            ModeCause::Default => "DEFAULT",
            ModeCause::Forced => "FORCED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "FT" => ModeCause::FastTrigger,
            "ST" => ModeCause::SlowTrigger,
            "GUARD" => ModeCause::Guard,
            "DEFAULT" => ModeCause::Default,
            "FORCED" => ModeCause::Forced,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeDecision {
    pub gamma: u8,
    pub cause: ModeCause,
    pub s: Option<u32>,
    pub ft: bool,
    pub st: bool,
}

/// Guard inputs: current max estimate and the constant `c`.
#[derive(Debug, Clone, Copy)]
pub struct Guard {
    pub m: f64,
    pub c: f64,
}

pub fn select_mode(ts: &TriggerState, guard: Option<Guard>) -> ModeDecision {
    let ft = fast_trigger(ts);
    let st = slow_trigger(ts);
    let (gamma, cause, s) = if let Some(s) = ft {
        (1, ModeCause::FastTrigger, Some(s))
    } else if let Some(s) = st {
        (0, ModeCause::SlowTrigger, Some(s))
    } else if guard.is_some_and(|g| ts.own <= g.m - g.c * ts.slack) {
        (1, ModeCause::Guard, None)
    } else {
        (0, ModeCause::Default, None)
    };
    ModeDecision { gamma, cause, s, ft: ft.is_some(), st: st.is_some() }
}

/// Conservative estimate of the largest logical clock in the system.
///
/// `M = max(flood, own clock)`. The flood part advances at rate
/// `h / (1 + ρ)` and jumps to `(ℓ + 1) · step` once `f + 1` distinct nodes
/// of one adjacent cluster reported level `ℓ`. Levels are announced when
/// `M` passes a multiple of `step = d − U`.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEstimate {
    step: f64,
    rho: f64,
    threshold: usize,
    base_m: f64,
    base_h: f64,
    announced: u64,
    received: BTreeMap<(u32, u64), BTreeSet<NodeIdx>>,
    pub jumps: u64,
    pub generation: u64,
}

impl MaxEstimate {
    pub fn new(step: f64, rho: f64, f: usize) -> Self {
        Self {
            step,
            rho,
            threshold: f + 1,
            base_m: 0.0,
            base_h: 0.0,
            announced: 0,
            received: BTreeMap::new(),
            jumps: 0,
            generation: 0,
        }
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// The continuously advancing part alone.
    pub fn flood_value(&self, hw: &HardwareClock, t: f64) -> f64 {
        self.base_m + (hw.value_at(t) - self.base_h) / (1.0 + self.rho)
    }

    pub fn value(&self, hw: &HardwareClock, t: f64, own: f64) -> f64 {
        self.flood_value(hw, t).max(own)
    }

    /// Highest level announced so far.
    pub fn announced(&self) -> u64 {
        self.announced
    }

    /// Level to announce at value `m`, if it is new.
    pub fn pending_level(&self, m: f64) -> Option<u64> {
        let level = (m / self.step + 1e-12).floor() as u64;
        (level > self.announced).then_some(level)
    }

    pub fn mark_announced(&mut self, level: u64) {
        self.announced = self.announced.max(level);
    }

    /// Value `M` must reach before the next announcement.
    pub fn next_target(&self) -> f64 {
        (self.announced + 1) as f64 * self.step
    }

    /// Newtonian time at which the flood part reaches `target`.
    pub fn flood_time_of(&self, hw: &HardwareClock, target: f64, now: f64) -> f64 {
        let h = self.base_h + (target - self.base_m) * (1.0 + self.rho);
        hw.time_at_value(h).max(now)
    }

    /// Registers a level report from `sender` of adjacent cluster `cluster`.
    /// Returns true if the flood part jumped.
    pub fn receive(&mut self, hw: &HardwareClock, t: f64, cluster: u32, sender: NodeIdx, level: u64) -> bool {
        let current = self.flood_value(hw, t);
        let target = (level + 1) as f64 * self.step;
        if target <= current {
            return false;
        }
        let senders = self.received.entry((cluster, level)).or_default();
        senders.insert(sender);
        if senders.len() < self.threshold {
            return false;
        }
        self.base_m = target;
        self.base_h = hw.value_at(t);
        self.jumps += 1;
        let step = self.step;
        self.received.retain(|&(_, l), _| (l + 1) as f64 * step > target);
        true
    }
}
