//! Byzantine behaviours and message-delay policies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simcore::PulseKind;
use crate::topology::{NodeId, NodeIdx};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdversaryError {
    #[error("node {0} is not faulty")]
    NotFaulty(NodeIdx),
    #[error("delay {delay} outside [{lo}, {hi}]")]
    DelayOutOfRange { delay: f64, lo: f64, hi: f64 },
    #[error("unknown strategy {0:?}")]
    UnknownStrategy(String),
}

fn default_sign() -> f64 {
    1.0
}

fn default_boost() -> u64 {
    1000
}

/// Behaviour of one faulty node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    Silent,
    /// Behaves correctly until `time`, then stops.
    CrashAt { time: f64 },
    /// Poisson train of synchronization pulses with random delivery times.
    RandomPulses { rate: f64, seed: u64 },
    /// Sends its pulse at the honest time but shifts each recipient's
    /// delivery by `offsets[i % len]`, where `i` is the recipient's position
    /// in the neighbor list. Defaults to `[+E, -E]`.
    Divergent {
        #[serde(default)]
        offsets: Vec<f64>,
        /// Only shift deliveries to nodes outside the sender's cluster.
        #[serde(default)]
        observers_only: bool,
    },
    /// Early or late pulses at the edge of a window `W` (default `E`):
    /// `sign * W` toward `target`'s members, alternating `±W` toward
    /// everybody else. Level reports are inflated by `boost`.
    SkewPush {
        #[serde(default)]
        target: Option<u32>,
        #[serde(default = "default_sign")]
        sign: f64,
        #[serde(default)]
        window: Option<f64>,
        #[serde(default = "default_boost")]
        boost: u64,
    },
}

impl Strategy {
    /// Parses a bare strategy name, using default parameters.
    pub fn from_name(name: &str) -> Result<Self, AdversaryError> {
        Ok(match name.to_ascii_lowercase().replace('-', "_").as_str() {
            "silent" => Strategy::Silent,
            "crash" | "crash_at" => Strategy::CrashAt { time: 0.0 },
            "random_pulses" | "randompulses" => Strategy::RandomPulses { rate: 0.05, seed: 1 },
            "divergent" => Strategy::Divergent { offsets: Vec::new(), observers_only: false },
            "skew_push" | "skewpush" => {
                Strategy::SkewPush { target: None, sign: 1.0, window: None, boost: default_boost() }
            }
            _ => return Err(AdversaryError::UnknownStrategy(name.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Silent => "silent",
            Strategy::CrashAt { .. } => "crash_at",
            Strategy::RandomPulses { .. } => "random_pulses",
            Strategy::Divergent { .. } => "divergent",
            Strategy::SkewPush { .. } => "skew_push",
        }
    }
}

/// Which deliveries get the maximal delay under the extremes policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum ExtremeRule {
    /// Even-indexed recipients late, odd-indexed early.
    #[default]
    SplitRecipients,
    /// Pulses of even-indexed senders late, odd-indexed early.
    SplitSenders,
    /// Late toward the listed clusters, early toward all others.
    ByCluster { late: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DelayKind {
    AllMax,
    AllMin,
    #[default]
    SeededUniform,
    Alternating,
    AdversarialExtremes {
        #[serde(flatten, default)]
        rule: ExtremeRule,
    },
}

/// Delay choice for messages of correct senders.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayPolicy {
    pub kind: DelayKind,
    pub d: f64,
    pub u: f64,
    pub seed: u64,
}

impl DelayPolicy {
    pub fn new(kind: DelayKind, d: f64, u: f64, seed: u64) -> Self {
        Self { kind, d, u, seed }
    }

    /// Delay of the `send_index`-th broadcast of `sender` toward
    /// `recipient`. Pure in its arguments.
    pub fn pick_delay(&self, sender: NodeId, recipient: NodeId, send_index: u64, _t: f64) -> Result<f64, AdversaryError> {
        let (max, min) = (self.d, self.d - self.u);
        let delay = match &self.kind {
            DelayKind::AllMax => max,
            DelayKind::AllMin => min,
            DelayKind::SeededUniform => {
                let mixed = self
                    .seed
                    .wrapping_add(u64::from(recipient.cluster).wrapping_mul(0x9E37_79B9_7F4A_7C15))
                    .wrapping_add(u64::from(recipient.index).wrapping_mul(0xC2B2_AE3D_27D4_EB4F));
                let mut rng = ChaCha8Rng::seed_from_u64(mixed);
                rng.set_stream((u64::from(sender.cluster) << 32) | u64::from(sender.index));
                rng.set_word_pos(u128::from(send_index) * 2);
                self.d - self.u * rng.random::<f64>()
            }
            DelayKind::Alternating => {
                let parity = send_index + u64::from(recipient.index) + u64::from(recipient.cluster);
                if parity.is_multiple_of(2) {
                    max
                } else {
                    min
                }
            }
            DelayKind::AdversarialExtremes { rule } => {
                let late = match rule {
                    ExtremeRule::SplitRecipients => recipient.index.is_multiple_of(2),
                    ExtremeRule::SplitSenders => sender.index.is_multiple_of(2),
                    ExtremeRule::ByCluster { late } => late.contains(&recipient.cluster),
                };
                if late {
                    max
                } else {
                    min
                }
            }
        };
        if !(delay >= min && delay <= max) {
            return Err(AdversaryError::DelayOutOfRange { delay, lo: min, hi: max });
        }
        Ok(delay)
    }
}

/// What prompted a call to [`Adversary::drive`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stimulus {
    /// The faulty node's honest shadow would now send this pulse.
    Honest(PulseKind),
    /// A timer the strategy asked for fired.
    Wakeup,
}

/// A recipient as seen by the adversary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recipient {
    pub node: NodeIdx,
    pub id: NodeId,
}

#[derive(Debug, Clone)]
pub struct DriveContext<'a> {
    pub now: f64,
    pub cluster: u32,
    /// All neighbors, excluding the node itself.
    pub recipients: &'a [Recipient],
    pub d: f64,
    pub u: f64,
    /// Default magnitude for timing offsets (the error bound `E`).
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emission {
    pub recipient: NodeIdx,
    pub at: f64,
    pub kind: PulseKind,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DriveOutput {
    pub emissions: Vec<Emission>,
    pub wake_at: Option<f64>,
}

#[derive(Debug, Clone)]
struct Agent {
    strategy: Strategy,
    rng: ChaCha8Rng,
}

/// All faulty nodes and their strategies.
#[derive(Debug, Clone)]
pub struct Adversary {
    agents: BTreeMap<NodeIdx, Agent>,
}

impl Adversary {
    /// `strategies` may only name faulty nodes; faulty nodes without an
    /// entry use `default`.
    pub fn new(
        faulty: impl IntoIterator<Item = NodeIdx>,
        strategies: &BTreeMap<NodeIdx, Strategy>,
        default: &Strategy,
    ) -> Result<Self, AdversaryError> {
        let mut agents = BTreeMap::new();
        for v in faulty {
            let strategy = strategies.get(&v).unwrap_or(default).clone();
            let seed = match &strategy {
                Strategy::RandomPulses { seed, .. } => *seed,
                _ => 0,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(v as u64);
            agents.insert(v, Agent { strategy, rng });
        }
        if let Some(&v) = strategies.keys().find(|v| !agents.contains_key(v)) {
            return Err(AdversaryError::NotFaulty(v));
        }
        Ok(Self { agents })
    }

    pub fn controls(&self, v: NodeIdx) -> bool {
        self.agents.contains_key(&v)
    }

    pub fn strategy(&self, v: NodeIdx) -> Option<&Strategy> {
        self.agents.get(&v).map(|a| &a.strategy)
    }

    /// First timer of each agent that wants one.
    pub fn initial_wakeups(&mut self) -> Vec<(NodeIdx, f64)> {
        let mut out = Vec::new();
        for (&v, agent) in &mut self.agents {
            if let Strategy::RandomPulses { rate, .. } = agent.strategy {
                out.push((v, exponential(&mut agent.rng, rate)));
            }
        }
        out
    }

    pub fn drive(&mut self, node: NodeIdx, stimulus: Stimulus, ctx: &DriveContext) -> Result<DriveOutput, AdversaryError> {
        let agent = self.agents.get_mut(&node).ok_or(AdversaryError::NotFaulty(node))?;
        let mid = ctx.d - ctx.u / 2.0;
        let relay = |kind: PulseKind| DriveOutput {
            emissions: ctx.recipients.iter().map(|r| Emission { recipient: r.node, at: ctx.now + mid, kind }).collect(),
            wake_at: None,
        };
        let out = match (&agent.strategy, stimulus) {
            (Strategy::Silent, _) => DriveOutput::default(),
            (Strategy::CrashAt { time }, Stimulus::Honest(kind)) if ctx.now < *time => relay(kind),
            (Strategy::CrashAt { .. }, _) => DriveOutput::default(),
            (Strategy::RandomPulses { rate, .. }, Stimulus::Wakeup) => {
                let rate = *rate;
                let emissions = ctx
                    .recipients
                    .iter()
                    .map(|r| Emission {
                        recipient: r.node,
                        at: ctx.now + agent.rng.random::<f64>() * ctx.d,
                        kind: PulseKind::Sync,
                    })
                    .collect();
                DriveOutput { emissions, wake_at: Some(ctx.now + exponential(&mut agent.rng, rate)) }
            }
            (Strategy::RandomPulses { .. }, Stimulus::Honest(PulseKind::Max(l))) => relay(PulseKind::Max(l)),
            (Strategy::RandomPulses { .. }, Stimulus::Honest(PulseKind::Sync)) => DriveOutput::default(),
            (Strategy::Divergent { offsets, observers_only }, Stimulus::Honest(PulseKind::Sync)) => {
                let default = [ctx.scale, -ctx.scale];
                let offs: &[f64] = if offsets.is_empty() { &default } else { offsets };
                let emissions = ctx
                    .recipients
                    .iter()
                    .enumerate()
                    .map(|(i, r)| {
                        let shift = if *observers_only && r.id.cluster == ctx.cluster { 0.0 } else { offs[i % offs.len()] };
                        Emission { recipient: r.node, at: (ctx.now + mid + shift).max(ctx.now), kind: PulseKind::Sync }
                    })
                    .collect();
                DriveOutput { emissions, wake_at: None }
            }
            (Strategy::SkewPush { target, sign, window, .. }, Stimulus::Honest(PulseKind::Sync)) => {
                let w = window.unwrap_or(ctx.scale);
                let emissions = ctx
                    .recipients
                    .iter()
                    .map(|r| {
                        let shift = if Some(r.id.cluster) == *target {
                            sign * w
                        } else if r.id.index % 2 == 0 {
                            w
                        } else {
                            -w
                        };
                        Emission { recipient: r.node, at: (ctx.now + mid + shift).max(ctx.now), kind: PulseKind::Sync }
                    })
                    .collect();
                DriveOutput { emissions, wake_at: None }
            }
            (Strategy::SkewPush { boost, .. }, Stimulus::Honest(PulseKind::Max(l))) => relay(PulseKind::Max(l + boost)),
            (_, Stimulus::Honest(kind)) => relay(kind),
            (_, Stimulus::Wakeup) => DriveOutput::default(),
        };
        Ok(out)
    }
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}
