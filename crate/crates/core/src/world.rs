//! A complete simulated network: every node runs the cluster algorithm,
//! its estimators and its max estimate, faulty nodes are driven by the
//! adversary, and samples are taken at a fixed cadence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::adversary::{Adversary, DelayPolicy, DriveContext, Recipient, Stimulus, Strategy};
use crate::cluster_sync::{Estimator, Phase, RoundState, Schedule};
use crate::intercluster_sync::{select_mode, Guard, MaxEstimate, ModeCause, ModeDecision, TriggerState};
use crate::metrics::{cluster_clock, detect_conditions, Counters, RoundRecord, RunData, Sample};
use crate::params::{DerivedParams, ProtocolParams};
use crate::simcore::{
    broadcast_pulse, run, ClockPolicy, Deadline, Event, EventKind, EventQueue, Handler, HardwareClock, LogicalClock,
    PulseKind, PulseMessage, SimError,
};
use crate::topology::{AugmentedGraph, NodeId, NodeIdx};

/// Pins the mode of a cluster (or all clusters) for a range of rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForcedMode {
    #[serde(default)]
    pub cluster: Option<u32>,
    pub from_round: u64,
    #[serde(default)]
    pub to_round: Option<u64>,
    pub gamma: u8,
}

impl ForcedMode {
    fn applies(&self, cluster: u32, round: u64) -> bool {
        self.cluster.is_none_or(|c| c == cluster) && round >= self.from_round && self.to_round.is_none_or(|t| round <= t)
    }
}

#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub params: ProtocolParams,
    pub derived: DerivedParams,
    pub graph: AugmentedGraph,
    pub clock_policy: ClockPolicy,
    pub clock_seed: u64,
    pub delay: DelayPolicy,
    pub strategies: BTreeMap<NodeIdx, Strategy>,
    pub default_strategy: Strategy,
    /// Guard constant `c`; `None` disables the guard.
    pub guard: Option<f64>,
    pub s_min: u32,
    pub s_max: u32,
    pub cadence: f64,
    pub until: f64,
    pub forced: Vec<ForcedMode>,
}

struct Node {
    id: NodeId,
    faulty: bool,
    hw: HardwareClock,
    clock: LogicalClock,
    state: RoundState,
    generation: u64,
    estimators: Vec<Estimator>,
    max: MaxEstimate,
    sends: u64,
    /// Neighbors plus the node itself.
    sync_targets: Vec<NodeIdx>,
    /// Members of adjacent clusters.
    max_targets: Vec<NodeIdx>,
    records: Vec<RoundRecord>,
    improper_since_sample: bool,
}

struct PrevSample {
    t: f64,
    values: Vec<f64>,
    cluster_clocks: Vec<(f64, f64)>,
}

pub struct World {
    cfg: WorldConfig,
    sched: Schedule,
    nodes: Vec<Node>,
    adversary: Adversary,
    reference: Vec<Option<NodeIdx>>,
    samples: Vec<Sample>,
    counters: Counters,
    prev: Option<PrevSample>,
}

impl World {
    /// Builds the network and schedules the initial events into `queue`.
    pub fn new(cfg: WorldConfig, queue: &mut EventQueue) -> Result<Self, SimError> {
        cfg.clock_policy.validate()?;
        let g = &cfg.graph;
        let dp = &cfg.derived;
        let p = &cfg.params;
        let horizon = cfg.until + 2.0 * dp.t;
        let mut nodes = Vec::with_capacity(g.node_count());
        for v in 0..g.node_count() {
            let id = g.id(v);
            let hw = cfg.clock_policy.build(p.rho, v, id.cluster, cfg.clock_seed, horizon);
            let estimators = g
                .cluster_graph()
                .neighbors(id.cluster)
                .iter()
                .map(|&c| Estimator::new(c, g.k(), dp.phi, dp.mu))
                .collect();
            let mut sync_targets = g.neighbors(v).to_vec();
            sync_targets.push(v);
            let max_targets = g.neighbors(v).iter().copied().filter(|&w| g.cluster_of(w) != id.cluster).collect();
            nodes.push(Node {
                id,
                faulty: g.is_faulty(v),
                hw,
                clock: LogicalClock::new(dp.phi, dp.mu),
                state: RoundState::new(g.k()),
                generation: 0,
                estimators,
                max: MaxEstimate::new(p.d - p.u, p.rho, p.f),
                sends: 0,
                sync_targets,
                max_targets,
                records: Vec::new(),
                improper_since_sample: false,
            });
        }
        let adversary = Adversary::new(g.faulty_nodes(), &cfg.strategies, &cfg.default_strategy)
            .map_err(|e| SimError::Adversary(e.to_string()))?;
        let reference = (0..g.cluster_graph().cluster_count() as u32).map(|c| g.correct_members(c).next()).collect();
        let mut world = Self {
            sched: Schedule::from(dp),
            cfg,
            nodes,
            adversary,
            reference,
            samples: Vec::new(),
            counters: Counters::default(),
            prev: None,
        };
        for v in 0..world.nodes.len() {
            world.start_round(v, 0.0, 0.0);
            world.plan_protocol(v, queue, 0.0)?;
            for i in 0..world.nodes[v].estimators.len() {
                world.plan_estimator(v, i, queue, 0.0)?;
            }
            world.plan_max(v, queue, 0.0)?;
        }
        for (v, t) in world.adversary.initial_wakeups() {
            queue.push(t, Some(v), EventKind::AdversaryAction)?;
        }
        queue.push(0.0, None, EventKind::MetricSample)?;
        Ok(world)
    }

    pub fn config(&self) -> &WorldConfig {
        &self.cfg
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn round(&self, v: NodeIdx) -> u64 {
        self.nodes[v].state.round
    }

    pub fn phase(&self, v: NodeIdx) -> Phase {
        self.nodes[v].state.phase
    }

    pub fn hardware_clock(&self, v: NodeIdx) -> &HardwareClock {
        &self.nodes[v].hw
    }

    /// `L_v(t)` for `t` not before the node's last clock change.
    pub fn logical(&self, v: NodeIdx, t: f64) -> f64 {
        let n = &self.nodes[v];
        n.clock.value_at(&n.hw, t)
    }

    /// Node `v`'s estimate of the clock of adjacent cluster `c`.
    pub fn observe_estimate(&self, v: NodeIdx, c: u32, t: f64) -> Option<f64> {
        let n = &self.nodes[v];
        n.estimators.iter().find(|e| e.cluster == c).map(|e| e.clock.value_at(&n.hw, t))
    }

    pub fn max_estimate(&self, v: NodeIdx, t: f64) -> f64 {
        let n = &self.nodes[v];
        n.max.value(&n.hw, t, n.clock.value_at(&n.hw, t))
    }

    pub fn records(&self, v: NodeIdx) -> &[RoundRecord] {
        &self.nodes[v].records
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn finish(self) -> RunData {
        let rounds = self.nodes.into_iter().filter(|n| !n.faulty).flat_map(|n| n.records).collect();
        RunData { samples: self.samples, rounds, counters: self.counters }
    }

    fn forced_gamma(&self, cluster: u32, round: u64) -> Option<u8> {
        self.cfg.forced.iter().rev().find(|f| f.applies(cluster, round)).map(|f| f.gamma)
    }

    fn correct_cluster_clock(&self, c: u32, t: f64) -> Option<f64> {
        let vals: Vec<f64> = self.cfg.graph.correct_members(c).map(|w| self.logical(w, t)).collect();
        cluster_clock(c, t, &vals).ok().map(|s| s.l_c)
    }

    /// Mode choice and bookkeeping at the start of a round.
    fn start_round(&mut self, v: NodeIdx, now: f64, integrated: f64) {
        let round = self.nodes[v].state.round;
        let own = self.sched.round_start(round);
        let n = &self.nodes[v];
        let estimates: Vec<f64> = n.estimators.iter().map(|e| e.clock.value_at(&n.hw, now)).collect();
        let m = n.max.value(&n.hw, now, own);
        let ts = TriggerState {
            kappa: self.cfg.derived.kappa,
            slack: self.cfg.derived.delta,
            own,
            estimates: &estimates,
            s_min: self.cfg.s_min,
            s_max: self.cfg.s_max,
        };
        let mut decision = select_mode(&ts, self.cfg.guard.map(|c| Guard { m, c }));
        if let Some(gamma) = self.forced_gamma(n.id.cluster, round) {
            decision = ModeDecision { gamma, cause: ModeCause::Forced, ..decision };
        }
        if decision.ft && decision.st && !n.faulty {
            self.counters.trigger_conflicts += 1;
        }
        let cluster_clock = if n.faulty { 0.0 } else { self.correct_cluster_clock(n.id.cluster, now).unwrap_or(own) };
        let n = &mut self.nodes[v];
        n.clock.set_rates(&n.hw, now, 1.0, decision.gamma);
        for e in &mut n.estimators {
            let delta = e.clock.delta();
            e.clock.set_rates(&n.hw, now, delta, decision.gamma);
        }
        n.records.push(RoundRecord {
            node: v,
            cluster: n.id.cluster,
            index: n.id.index,
            round,
            t_start: now,
            l_start: integrated,
            pulse: None,
            delta_r: None,
            multiplier: None,
            proper: true,
            gamma: decision.gamma,
            cause: decision.cause,
            s: decision.s,
            ft: decision.ft,
            st: decision.st,
            m,
            cluster_clock,
            t_end: None,
            nominal: None,
        });
    }

    fn plan_protocol(&mut self, v: NodeIdx, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let n = &mut self.nodes[v];
        n.generation += 1;
        let target = n.state.next_deadline(&self.sched);
        let t = n.clock.time_of(&n.hw, target, now);
        q.push(t, Some(v), EventKind::LogicalDeadline { slot: Deadline::Protocol, generation: n.generation })?;
        Ok(())
    }

    fn plan_estimator(&mut self, v: NodeIdx, i: usize, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let n = &mut self.nodes[v];
        let e = &mut n.estimators[i];
        e.generation += 1;
        let target = e.state.next_deadline(&self.sched);
        let t = e.clock.time_of(&n.hw, target, now);
        let slot = Deadline::Estimator(i as u32);
        q.push(t, Some(v), EventKind::LogicalDeadline { slot, generation: e.generation })?;
        Ok(())
    }

    fn plan_max(&mut self, v: NodeIdx, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let n = &mut self.nodes[v];
        if n.max_targets.is_empty() {
            return Ok(());
        }
        n.max.generation += 1;
        let target = n.max.next_target();
        let t = n.max.flood_time_of(&n.hw, target, now).min(n.clock.time_of(&n.hw, target, now));
        q.push(t, Some(v), EventKind::LogicalDeadline { slot: Deadline::MaxLevel, generation: n.max.generation })?;
        Ok(())
    }

    fn send(&mut self, v: NodeIdx, kind: PulseKind, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let (d, u) = (self.cfg.params.d, self.cfg.params.u);
        let g = &self.cfg.graph;
        let n = &mut self.nodes[v];
        let send_index = n.sends;
        n.sends += 1;
        let round_tag = n.state.round;
        match kind {
            PulseKind::Sync => self.counters.sync_broadcasts += 1,
            PulseKind::Max(_) => self.counters.max_broadcasts += 1,
        }
        let targets = match kind {
            PulseKind::Sync => &n.sync_targets,
            PulseKind::Max(_) => &n.max_targets,
        };
        if !n.faulty {
            let delay = &self.cfg.delay;
            let sender = n.id;
            // A policy error surfaces as an out-of-range delay.
            broadcast_pulse(q, v, sender.cluster, kind, round_tag, now, targets, (d, u), |r| {
                delay.pick_delay(sender, g.id(r), send_index, now).unwrap_or(f64::NAN)
            })?;
            return Ok(());
        }
        let recipients: Vec<Recipient> =
            targets.iter().filter(|&&r| r != v).map(|&r| Recipient { node: r, id: g.id(r) }).collect();
        if kind == PulseKind::Sync {
            let msg = PulseMessage {
                sender: v,
                sender_cluster: n.id.cluster,
                kind,
                send_time: now,
                deliver_time: now + d - u / 2.0,
                round_tag,
            };
            q.push(msg.deliver_time, Some(v), EventKind::PulseDelivery(msg))?;
        }
        let ctx = DriveContext { now, cluster: n.id.cluster, recipients: &recipients, d, u, scale: self.cfg.derived.e };
        let out = self.adversary.drive(v, Stimulus::Honest(kind), &ctx).map_err(|e| SimError::Adversary(e.to_string()))?;
        self.emit(v, out.emissions, q, now)
    }

    fn emit(&mut self, v: NodeIdx, emissions: Vec<crate::adversary::Emission>, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let cluster = self.nodes[v].id.cluster;
        let round_tag = self.nodes[v].state.round;
        for e in emissions {
            let msg = PulseMessage { sender: v, sender_cluster: cluster, kind: e.kind, send_time: now, deliver_time: e.at, round_tag };
            q.push(e.at, Some(e.recipient), EventKind::PulseDelivery(msg))?;
        }
        Ok(())
    }

    fn on_delivery(&mut self, v: NodeIdx, msg: PulseMessage, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let (d, u) = (self.cfg.params.d, self.cfg.params.u);
        let sender_faulty = self.nodes[msg.sender].faulty;
        if !sender_faulty {
            let lag = msg.deliver_time - msg.send_time;
            let eps = 4.0 * f64::EPSILON * msg.deliver_time.abs().max(1.0);
            if lag < d - u - eps || lag > d + eps {
                self.counters.delivery_violations += 1;
            }
        }
        let slot = self.cfg.graph.index_in_cluster(msg.sender);
        let n = &mut self.nodes[v];
        match msg.kind {
            PulseKind::Sync if msg.sender_cluster == n.id.cluster => {
                let l = n.clock.value_at(&n.hw, now);
                match n.state.record(slot, l, msg.round_tag) {
                    crate::cluster_sync::PulseRecord::Accepted => {
                        if msg.sender == v {
                            n.state.record_reference(l);
                        }
                    }
                    crate::cluster_sync::PulseRecord::Duplicate => self.counters.duplicates += 1,
                    crate::cluster_sync::PulseRecord::Late => {
                        if !sender_faulty {
                            self.counters.late_pulses += 1;
                        }
                    }
                }
            }
            PulseKind::Sync => {
                if let Some(e) = n.estimators.iter_mut().find(|e| e.cluster == msg.sender_cluster) {
                    let l = e.clock.value_at(&n.hw, now);
                    e.state.record(slot, l, msg.round_tag);
                }
            }
            PulseKind::Max(level) => {
                let adjacent = n.estimators.iter().any(|e| e.cluster == msg.sender_cluster);
                if adjacent && n.max.receive(&n.hw, now, msg.sender_cluster, msg.sender, level) {
                    self.counters.max_jumps += 1;
                    self.announce(v, q, now)?;
                    self.plan_max(v, q, now)?;
                }
            }
        }
        Ok(())
    }

    /// Broadcasts the current level of `M` if it is new.
    fn announce(&mut self, v: NodeIdx, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let n = &mut self.nodes[v];
        let own = n.clock.value_at(&n.hw, now);
        let m = n.max.value(&n.hw, now, own);
        let level = match n.max.pending_level(m) {
            Some(l) => l,
            None if m >= n.max.next_target() * (1.0 - 1e-12) => n.max.announced() + 1,
            None => return Ok(()),
        };
        n.max.mark_announced(level);
        if n.max_targets.is_empty() {
            return Ok(());
        }
        self.send(v, PulseKind::Max(level), q, now)
    }

    fn on_protocol_deadline(&mut self, v: NodeIdx, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let p = &self.cfg.params;
        let (f, phi, mu) = (p.f, self.cfg.derived.phi, self.cfg.derived.mu);
        let n = &mut self.nodes[v];
        let target = n.state.next_deadline(&self.sched);
        let integrated = n.clock.value_at(&n.hw, now);
        n.clock.anchor(&n.hw, now, target);
        match n.state.phase {
            Phase::One => {
                n.state.end_phase1();
                if let Some(r) = n.records.last_mut() {
                    r.pulse = Some(now);
                }
                self.send(v, PulseKind::Sync, q, now)?;
                self.plan_protocol(v, q, now)?;
            }
            Phase::Two => {
                let corr = n.state.end_phase2(f, self.sched.tau3, phi);
                let gamma = n.clock.gamma();
                n.clock.set_rates(&n.hw, now, corr.multiplier, gamma);
                let round = n.state.round;
                let mut proper = !corr.overflow && !corr.reference_missing;
                let base = n.id.cluster as usize * self.cfg.graph.k();
                for slot in 0..self.cfg.graph.k() {
                    if self.cfg.graph.is_faulty(base + slot) {
                        continue;
                    }
                    let n = &self.nodes[v];
                    if n.state.receipt(slot).is_none() || n.state.tag(slot) != round {
                        proper = false;
                    }
                }
                let n = &mut self.nodes[v];
                if corr.overflow && !n.faulty {
                    self.counters.amortization_overflows += 1;
                }
                if !proper && !n.faulty {
                    self.counters.improper_rounds += 1;
                    n.improper_since_sample = true;
                }
                if let Some(r) = n.records.last_mut() {
                    r.delta_r = Some(corr.delta_r);
                    r.multiplier = Some(corr.multiplier);
                    r.proper = proper;
                }
                self.plan_protocol(v, q, now)?;
                self.plan_max(v, q, now)?;
            }
            Phase::Three => {
                let h_now = n.hw.value_at(now);
                if let Some(r) = n.records.last_mut() {
                    let h_start = n.hw.value_at(r.t_start);
                    r.t_end = Some(now);
                    r.nominal = Some((1.0 + phi) * (1.0 + mu * f64::from(r.gamma)) * (h_now - h_start));
                }
                n.state.end_round();
                let old_gamma = n.clock.gamma();
                self.start_round(v, now, integrated);
                if self.nodes[v].clock.gamma() != old_gamma {
                    for i in 0..self.nodes[v].estimators.len() {
                        self.plan_estimator(v, i, q, now)?;
                    }
                }
                self.plan_protocol(v, q, now)?;
                self.plan_max(v, q, now)?;
                if self.reference.get(self.nodes[v].id.cluster as usize) == Some(&Some(v)) {
                    q.push(now, Some(v), EventKind::MetricSample)?;
                }
            }
        }
        Ok(())
    }

    fn on_estimator_deadline(&mut self, v: NodeIdx, i: usize, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let (f, phi) = (self.cfg.params.f, self.cfg.derived.phi);
        let receipt_lag = self.cfg.params.d - self.cfg.params.u / 2.0;
        let n = &mut self.nodes[v];
        let gamma = n.clock.gamma();
        let e = &mut n.estimators[i];
        let target = e.state.next_deadline(&self.sched);
        e.clock.anchor(&n.hw, now, target);
        match e.state.phase {
            Phase::One => {
                e.state.end_phase1();
                e.virtual_pulse = Some(now);
                let slot = Deadline::EstimatorReceipt(i as u32);
                q.push(now + receipt_lag, Some(v), EventKind::LogicalDeadline { slot, generation: 0 })?;
            }
            Phase::Two => {
                let corr = e.state.end_phase2(f, self.sched.tau3, phi);
                e.clock.set_rates(&n.hw, now, corr.multiplier, gamma);
            }
            Phase::Three => {
                e.state.end_round();
                e.clock.set_rates(&n.hw, now, 1.0, gamma);
                e.virtual_pulse = None;
            }
        }
        self.plan_estimator(v, i, q, now)
    }

    fn on_estimator_receipt(&mut self, v: NodeIdx, i: usize, now: f64) {
        let n = &mut self.nodes[v];
        let e = &mut n.estimators[i];
        if e.state.phase == Phase::Two {
            let l = e.clock.value_at(&n.hw, now);
            e.state.record_reference(l);
        }
    }

    fn on_adversary(&mut self, v: NodeIdx, q: &mut EventQueue, now: f64) -> Result<(), SimError> {
        let g = &self.cfg.graph;
        let n = &self.nodes[v];
        let recipients: Vec<Recipient> = g.neighbors(v).iter().map(|&r| Recipient { node: r, id: g.id(r) }).collect();
        let (d, u) = (self.cfg.params.d, self.cfg.params.u);
        let ctx = DriveContext { now, cluster: n.id.cluster, recipients: &recipients, d, u, scale: self.cfg.derived.e };
        let out = self.adversary.drive(v, Stimulus::Wakeup, &ctx).map_err(|e| SimError::Adversary(e.to_string()))?;
        if let Some(t) = out.wake_at {
            if t <= self.cfg.until {
                q.push(t, Some(v), EventKind::AdversaryAction)?;
            }
        }
        self.emit(v, out.emissions, q, now)
    }

    fn take_sample(&mut self, now: f64) {
        let g = &self.cfg.graph;
        let cg = g.cluster_graph();
        let dp = &self.cfg.derived;
        let values: Vec<f64> = (0..self.nodes.len()).map(|v| self.logical(v, now)).collect();
        let clusters = cg.cluster_count();
        let mut intra = Vec::with_capacity(clusters);
        let mut lc = Vec::with_capacity(clusters);
        let mut bounds = Vec::with_capacity(clusters);
        for c in 0..clusters as u32 {
            let vals: Vec<f64> = g.correct_members(c).map(|w| values[w]).collect();
            match cluster_clock(c, now, &vals) {
                Ok(s) => {
                    intra.push(s.l_plus - s.l_minus);
                    lc.push(s.l_c);
                    bounds.push((s.l_minus, s.l_plus));
                }
                Err(_) => {
                    intra.push(0.0);
                    lc.push(f64::NAN);
                    bounds.push((f64::NAN, f64::NAN));
                }
            }
        }
        let correct = || (0..self.nodes.len()).filter(|&v| !self.nodes[v].faulty);
        let lmax = correct().map(|v| values[v]).fold(f64::NEG_INFINITY, f64::max);
        let lmin = correct().map(|v| values[v]).fold(f64::INFINITY, f64::min);
        let mut min_m = f64::INFINITY;
        let mut max_m = f64::NEG_INFINITY;
        let mut est_err: Option<f64> = None;
        let mut min_round = u64::MAX;
        for v in correct() {
            let n = &self.nodes[v];
            let m = n.max.value(&n.hw, now, values[v]);
            min_m = min_m.min(m);
            max_m = max_m.max(m);
            min_round = min_round.min(n.state.round);
            if n.state.round >= 3 {
                for e in &n.estimators {
                    let target = lc[e.cluster as usize];
                    if e.state.round >= 3 && target.is_finite() {
                        let err = (e.clock.value_at(&n.hw, now) - target).abs();
                        est_err = Some(est_err.map_or(err, |x| x.max(err)));
                    }
                }
            }
        }
        let mut edge_skew = Vec::with_capacity(cg.edges().len());
        let mut node_local = intra.iter().copied().fold(0.0, f64::max);
        for &(a, b) in cg.edges() {
            let (a, b) = (a as usize, b as usize);
            edge_skew.push((lc[a] - lc[b]).abs());
            let cross = (bounds[a].1 - bounds[b].0).abs().max((bounds[b].1 - bounds[a].0).abs());
            if cross.is_finite() {
                node_local = node_local.max(cross);
            }
        }
        let conditions = detect_conditions(&lc, cg, dp.kappa, self.cfg.s_min, self.cfg.s_max);

        if let Some(prev) = &self.prev {
            let dt = now - prev.t;
            if dt > 1e-9 * now.max(1.0) {
                let mut member_rates: Vec<(f64, f64)> = vec![(f64::INFINITY, f64::NEG_INFINITY); clusters];
                for v in correct() {
                    let q = (values[v] - prev.values[v]) / dt;
                    let c = self.nodes[v].id.cluster as usize;
                    member_rates[c].0 = member_rates[c].0.min(q);
                    member_rates[c].1 = member_rates[c].1.max(q);
                    if !self.nodes[v].improper_since_sample {
                        self.counters.rate_min = Some(self.counters.rate_min.map_or(q, |r| r.min(q)));
                        self.counters.rate_max = Some(self.counters.rate_max.map_or(q, |r| r.max(q)));
                    }
                }
                for c in 0..clusters {
                    let (lo, hi) = member_rates[c];
                    if !lo.is_finite() {
                        continue;
                    }
                    let tol = 1e-9 * (1.0 + now / dt);
                    for (x_now, x_prev) in [(bounds[c].0, prev.cluster_clocks[c].0), (bounds[c].1, prev.cluster_clocks[c].1)] {
                        let q = (x_now - x_prev) / dt;
                        if q < lo - tol || q > hi + tol {
                            self.counters.cluster_rate_violations += 1;
                        }
                    }
                }
            }
        }
        let mut fast_members = vec![0u32; clusters];
        for v in correct() {
            fast_members[self.nodes[v].id.cluster as usize] += u32::from(self.nodes[v].clock.gamma());
        }
        for n in &mut self.nodes {
            n.improper_since_sample = false;
        }
        self.prev = Some(PrevSample { t: now, values, cluster_clocks: bounds });
        self.samples.push(Sample {
            t: now,
            global_skew: lmax - lmin,
            lmax,
            min_m,
            m_excess: max_m - lmax,
            intra,
            edge_skew,
            node_local,
            est_err,
            min_round,
            cluster_clocks: lc,
            conditions,
            fast_members,
        });
    }
}

impl Handler for World {
    fn handle(&mut self, event: Event, q: &mut EventQueue) -> Result<(), SimError> {
        self.counters.events += 1;
        let now = event.time;
        match (event.kind, event.target) {
            (EventKind::PulseDelivery(msg), Some(v)) => self.on_delivery(v, msg, q, now),
            (EventKind::LogicalDeadline { slot, generation }, Some(v)) => match slot {
                Deadline::Protocol if generation == self.nodes[v].generation => self.on_protocol_deadline(v, q, now),
                Deadline::Estimator(i) if generation == self.nodes[v].estimators[i as usize].generation => {
                    self.on_estimator_deadline(v, i as usize, q, now)
                }
                Deadline::EstimatorReceipt(i) => {
                    self.on_estimator_receipt(v, i as usize, now);
                    Ok(())
                }
                Deadline::MaxLevel if generation == self.nodes[v].max.generation => {
                    self.announce(v, q, now)?;
                    self.plan_max(v, q, now)
                }
                _ => Ok(()),
            },
            (EventKind::AdversaryAction, Some(v)) => self.on_adversary(v, q, now),
            (EventKind::MetricSample, target) => {
                self.take_sample(now);
                if target.is_none() {
                    let next = now + self.cfg.cadence;
                    if next <= self.cfg.until {
                        q.push(next, None, EventKind::MetricSample)?;
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Builds a world, runs it to `cfg.until` and returns its output.
pub fn simulate(cfg: WorldConfig) -> Result<RunData, SimError> {
    let mut q = EventQueue::new();
    let until = cfg.until;
    let mut w = World::new(cfg, &mut q)?;
    run(&mut w, &mut q, until)?;
    Ok(w.finish())
}
