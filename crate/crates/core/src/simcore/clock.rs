use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::SimError;

/// A constant-rate stretch of a hardware clock. `value` is `H(start)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSegment {
    pub start: f64,
    pub rate: f64,
    pub value: f64,
}

/// Hardware clock `H(t)` with piecewise-constant rate. The last segment
/// extends forever.
#[derive(Debug, Clone, PartialEq)]
pub struct HardwareClock {
    segs: Vec<RateSegment>,
}

impl HardwareClock {
    pub fn constant(rate: f64) -> Self {
        Self::from_rates(&[(0.0, rate)]).expect("positive constant rate")
    }

    /// Builds a clock from `(start, rate)` pairs. The first start must be 0
    /// and starts must increase strictly.
    pub fn from_rates(pieces: &[(f64, f64)]) -> Result<Self, SimError> {
        let bad = |why: &str| SimError::InvalidClock(why.to_string());
        let Some(&(first, _)) = pieces.first() else {
            return Err(bad("no segments"));
        };
        if first != 0.0 {
            return Err(bad("first segment must start at 0"));
        }
        let mut segs: Vec<RateSegment> = Vec::with_capacity(pieces.len());
        let mut value = 0.0;
        for &(start, rate) in pieces {
            if !(rate > 0.0 && rate.is_finite()) || !start.is_finite() {
                return Err(bad("rates must be positive and finite"));
            }
            if let Some(prev) = segs.last() {
                if start <= prev.start {
                    return Err(bad("segment starts must increase"));
                }
                value = prev.value + prev.rate * (start - prev.start);
            }
            segs.push(RateSegment { start, rate, value });
        }
        Ok(Self { segs })
    }

    pub fn segments(&self) -> &[RateSegment] {
        &self.segs
    }

    fn seg_at(&self, t: f64) -> &RateSegment {
        let i = self.segs.partition_point(|s| s.start <= t);
        &self.segs[i.saturating_sub(1)]
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        self.seg_at(t).rate
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let s = self.seg_at(t);
        s.value + s.rate * (t - s.start)
    }

    /// Newtonian time at which `H` reaches `h`.
    pub fn time_at_value(&self, h: f64) -> f64 {
        let i = self.segs.partition_point(|s| s.value <= h);
        let s = &self.segs[i.saturating_sub(1)];
        s.start + (h - s.value) / s.rate
    }

    /// True if every rate lies in `[1, 1 + rho]`.
    pub fn within_bounds(&self, rho: f64) -> bool {
        self.segs.iter().all(|s| s.rate >= 1.0 && s.rate <= 1.0 + rho)
    }
}

/// Hardware drift generators. Drift values are fractions of `rho`, so a
/// drift of `x` means rate `1 + x * rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClockPolicy {
    /// Fixed drift, or a seeded uniform draw per node when absent.
    Constant {
        #[serde(default)]
        drift: Option<f64>,
    },
    /// Drift per cluster, cycling through the list.
    PerCluster { drifts: Vec<f64> },
    /// Alternates between the extreme rates every half period, with a
    /// seeded phase per node.
    Oscillating { period: f64 },
    /// Fresh uniform drift every `segment` seconds.
    Random { segment: f64 },
}

impl Default for ClockPolicy {
    fn default() -> Self {
        ClockPolicy::Random { segment: 50.0 }
    }
}

impl ClockPolicy {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |why: String| Err(SimError::InvalidClock(why));
        match self {
            ClockPolicy::Constant { drift: Some(x) } if !(0.0..=1.0).contains(x) => {
                bad(format!("drift fraction {x} outside [0, 1]"))
            }
            ClockPolicy::PerCluster { drifts } if drifts.is_empty() => {
                bad("per-cluster drift list is empty".into())
            }
            ClockPolicy::PerCluster { drifts } if drifts.iter().any(|x| !(0.0..=1.0).contains(x)) => {
                bad("per-cluster drift outside [0, 1]".into())
            }
            ClockPolicy::Oscillating { period } if !(*period > 0.0) => {
                bad("oscillation period must be positive".into())
            }
            ClockPolicy::Random { segment } if !(*segment > 0.0) => {
                bad("random segment length must be positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Generates the clock of node `node` (dense index) in `cluster`,
    /// covering at least `[0, horizon]`. Each node draws from its own
    /// stream, so a node's clock does not depend on the network size.
    pub fn build(&self, rho: f64, node: usize, cluster: u32, seed: u64, horizon: f64) -> HardwareClock {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(node as u64);
        let rate = |x: f64| 1.0 + x * rho;
        match self {
            ClockPolicy::Constant { drift } => {
                let x = drift.unwrap_or_else(|| rng.random::<f64>());
                HardwareClock::constant(rate(x))
            }
            ClockPolicy::PerCluster { drifts } => {
                HardwareClock::constant(rate(drifts[cluster as usize % drifts.len()]))
            }
            ClockPolicy::Oscillating { period } => {
                let half = period / 2.0;
                let phase = rng.random::<f64>() * period;
                let mut high = phase < half;
                let first_switch = if high { half - phase } else { period - phase };
                let mut pieces = vec![(0.0, if high { rate(1.0) } else { rate(0.0) })];
                let mut t = first_switch;
                while t <= horizon {
                    high = !high;
                    pieces.push((t, if high { rate(1.0) } else { rate(0.0) }));
                    t += half;
                }
                HardwareClock::from_rates(&pieces).expect("valid oscillation")
            }
            ClockPolicy::Random { segment } => {
                let mut pieces = Vec::new();
                let mut t = 0.0;
                loop {
                    pieces.push((t, rate(rng.random::<f64>())));
                    t += segment;
                    if t > horizon {
                        break;
                    }
                }
                HardwareClock::from_rates(&pieces).expect("valid random clock")
            }
        }
    }
}
