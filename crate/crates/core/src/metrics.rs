//! Cluster clocks, skews, condition detection and the audits run over a
//! finished simulation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intercluster_sync::{fast_trigger, slow_trigger, ModeCause, TriggerState};
use crate::params::{DerivedParams, ProtocolParams, UnanimousParams};
use crate::topology::{ClusterGraph, NodeIdx};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("cluster {0} has no correct member")]
    AllFaulty(u32),
    #[error("round {round} of cluster {cluster} is incomplete")]
    RoundIncomplete { cluster: u32, round: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClusterClockSample {
    pub cluster: u32,
    pub t: f64,
    pub l_plus: f64,
    pub l_minus: f64,
    pub l_c: f64,
}

/// Midrange of the correct members' clocks.
pub fn cluster_clock(cluster: u32, t: f64, values: &[f64]) -> Result<ClusterClockSample, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::AllFaulty(cluster));
    }
    let l_plus = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l_minus = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(ClusterClockSample { cluster, t, l_plus, l_minus, l_c: (l_plus + l_minus) / 2.0 })
}

/// Spread of the correct members' pulse times in one round.
pub fn pulse_diameter(cluster: u32, round: u64, pulses: &[Option<f64>]) -> Result<f64, MetricsError> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for p in pulses {
        let p = p.ok_or(MetricsError::RoundIncomplete { cluster, round })?;
        lo = lo.min(p);
        hi = hi.max(p);
    }
    if pulses.is_empty() {
        return Err(MetricsError::RoundIncomplete { cluster, round });
    }
    Ok(hi - lo)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Condition {
    Fast(u32),
    Slow(u32),
    Neither,
}

impl Condition {
    pub fn code(&self) -> String {
        match self {
            Condition::Fast(s) => format!("FC{s}"),
            Condition::Slow(s) => format!("SC{s}"),
            Condition::Neither => "-".into(),
        }
    }

    pub fn parse(code: &str) -> Option<Self> {
        if code == "-" {
            return Some(Condition::Neither);
        }
        let (kind, s) = code.split_at(2.min(code.len()));
        let s = s.parse().ok()?;
        match kind {
            "FC" => Some(Condition::Fast(s)),
            "SC" => Some(Condition::Slow(s)),
            _ => None,
        }
    }
}

/// Fast and slow conditions evaluated on the true cluster clocks.
pub fn detect_conditions(clocks: &[f64], graph: &ClusterGraph, kappa: f64, s_min: u32, s_max: u32) -> Vec<Condition> {
    let mut estimates = Vec::new();
    (0..clocks.len() as u32)
        .map(|c| {
            estimates.clear();
            estimates.extend(graph.neighbors(c).iter().map(|&b| clocks[b as usize]));
            let ts = TriggerState { kappa, slack: 0.0, own: clocks[c as usize], estimates: &estimates, s_min, s_max };
            if let Some(s) = fast_trigger(&ts) {
                Condition::Fast(s)
            } else if let Some(s) = slow_trigger(&ts) {
                Condition::Slow(s)
            } else {
                Condition::Neither
            }
        })
        .collect()
}

/// One row of the skew trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub global_skew: f64,
    pub lmax: f64,
    pub min_m: f64,
    /// Largest `M_v - L^max` over correct nodes; positive means unsound.
    pub m_excess: f64,
    pub intra: Vec<f64>,
    pub edge_skew: Vec<f64>,
    pub node_local: f64,
    /// Largest estimator error among observers past round 2.
    pub est_err: Option<f64>,
    pub min_round: u64,
    pub cluster_clocks: Vec<f64>,
    pub conditions: Vec<Condition>,
    /// Correct members in fast mode, per cluster.
    pub fast_members: Vec<u32>,
}

/// Per-round log of one correct node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub node: NodeIdx,
    pub cluster: u32,
    pub index: u32,
    pub round: u64,
    pub t_start: f64,
    /// Clock value at the round start before re-anchoring.
    pub l_start: f64,
    pub pulse: Option<f64>,
    pub delta_r: Option<f64>,
    pub multiplier: Option<f64>,
    pub proper: bool,
    pub gamma: u8,
    pub cause: ModeCause,
    pub s: Option<u32>,
    pub ft: bool,
    pub st: bool,
    pub m: f64,
    /// Own cluster's cluster clock at `t_start`.
    pub cluster_clock: f64,
    pub t_end: Option<f64>,
    /// Integral of the nominal rate over the round.
    pub nominal: Option<f64>,
}

/// Counters maintained while the simulation runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Counters {
    pub events: u64,
    pub sync_broadcasts: u64,
    pub max_broadcasts: u64,
    pub max_jumps: u64,
    pub delivery_violations: u64,
    pub trigger_conflicts: u64,
    pub duplicates: u64,
    pub late_pulses: u64,
    pub improper_rounds: u64,
    pub amortization_overflows: u64,
    /// Extreme logical clock difference quotients over sample intervals.
    pub rate_min: Option<f64>,
    pub rate_max: Option<f64>,
    pub cluster_rate_violations: u64,
}


/// Everything a run produces, ready for auditing or serialization.
#[derive(Debug, Clone)]
pub struct RunData {
    pub samples: Vec<Sample>,
    pub rounds: Vec<RoundRecord>,
    pub counters: Counters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub diameter: usize,
    pub skew: f64,
    pub skew_per_log: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub points: Vec<FitPoint>,
    pub nondecreasing: bool,
    /// Increments per unit of diameter shrink as the diameter grows.
    pub concave: bool,
    /// `skew(D_last) / skew(D_first)`.
    pub growth_ratio: Option<f64>,
    /// `ln(D_last) / ln(D_first)`.
    pub log_ratio: Option<f64>,
    pub enough_points: bool,
}

pub fn convergence_fit(points: &[(usize, f64)]) -> FitReport {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let fit: Vec<FitPoint> = pts
        .iter()
        .map(|&(d, s)| FitPoint { diameter: d, skew: s, skew_per_log: (d >= 2).then(|| s / (d as f64).ln()) })
        .collect();
    let nondecreasing = pts.windows(2).all(|w| w[1].1 >= w[0].1);
    let slopes: Vec<f64> = pts
        .windows(2)
        .filter(|w| w[1].0 > w[0].0)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0) as f64)
        .collect();
    let concave = slopes.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    let (first, last) = (pts.first(), pts.last());
    let growth_ratio = match (first, last) {
        (Some(a), Some(b)) if a.1 > 0.0 && pts.len() >= 2 => Some(b.1 / a.1),
        _ => None,
    };
    let log_ratio = match (first, last) {
        (Some(a), Some(b)) if a.0 >= 2 && pts.len() >= 2 => Some((b.0 as f64).ln() / (a.0 as f64).ln()),
        _ => None,
    };
    FitReport { points: fit, nondecreasing, concave, growth_ratio, log_ratio, enough_points: pts.len() >= 3 }
}

/// Static facts the audits need besides the run itself.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditContext {
    pub params: ProtocolParams,
    pub derived: DerivedParams,
    pub unanimous: UnanimousParams,
    pub diameter: usize,
    pub edges: Vec<(u32, u32)>,
    pub clusters: usize,
    pub s_min: u32,
    pub s_max: u32,
    /// True when modes are pinned externally; trigger-based audits skip.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditItem {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub bound: f64,
    pub checked: u64,
    pub violations: u64,
}

impl AuditItem {
    fn new(name: &str, observed: f64, bound: f64, checked: u64, violations: u64) -> Self {
        Self { name: name.into(), passed: violations == 0, observed, bound, checked, violations }
    }
}

/// Observed quantities reported without a pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub max_global_skew: f64,
    pub max_intra_skew: f64,
    pub max_cluster_edge_skew: f64,
    pub max_node_local_skew: f64,
    pub max_pulse_diameter: f64,
    pub max_estimator_error: Option<f64>,
    /// Samples where the estimator error exceeded `E / 2`.
    pub estimator_half_bound_exceedances: u64,
    /// Rounds whose next pulse diameter exceeded `α_g ‖p‖ + β_g`.
    pub general_recursion_exceedances: u64,
    /// `(max L^max rate - 1) / rho`.
    pub lmax_rate_constant: f64,
    /// `max (L^max - min M) / (δ D)` after warm-up.
    pub guard_gap_constant: Option<f64>,
    /// `max global skew / (δ D)`.
    pub global_skew_constant: Option<f64>,
    pub fast_condition_samples: u64,
    pub slow_condition_samples: u64,
    pub mode_causes: BTreeMap<String, u64>,
    pub complete_rounds: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub passed: bool,
    pub audits: Vec<AuditItem>,
    pub observations: Observations,
}

impl Analysis {
    pub fn audit(&self, name: &str) -> Option<&AuditItem> {
        self.audits.iter().find(|a| a.name == name)
    }
}

fn rel_tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// Rounds grouped per node, in round order.
fn by_node(rounds: &[RoundRecord]) -> BTreeMap<NodeIdx, Vec<&RoundRecord>> {
    let mut map: BTreeMap<NodeIdx, Vec<&RoundRecord>> = BTreeMap::new();
    for r in rounds {
        map.entry(r.node).or_default().push(r);
    }
    for v in map.values_mut() {
        v.sort_by_key(|r| r.round);
    }
    map
}

/// Pulse diameters of complete rounds per cluster.
pub fn pulse_diameters(rounds: &[RoundRecord], clusters: usize) -> Vec<BTreeMap<u64, f64>> {
    let mut members: Vec<BTreeMap<u64, Vec<Option<f64>>>> = vec![BTreeMap::new(); clusters];
    let mut sizes = vec![std::collections::BTreeSet::new(); clusters];
    for r in rounds {
        members[r.cluster as usize].entry(r.round).or_default().push(r.pulse);
        sizes[r.cluster as usize].insert(r.node);
    }
    members
        .iter()
        .enumerate()
        .map(|(c, m)| {
            m.iter()
                .filter(|(_, p)| p.len() == sizes[c].len())
                .filter_map(|(&r, p)| pulse_diameter(c as u32, r, p).ok().map(|d| (r, d)))
                .collect()
        })
        .collect()
}

/// Runs every audit over a finished run.
pub fn analyze(run: &RunData, ctx: &AuditContext) -> Analysis {
    let dp = &ctx.derived;
    let up = &ctx.unanimous;
    let p = &ctx.params;
    let mut audits = Vec::new();
    let nodes = by_node(&run.rounds);

    // Intra-cluster skew.
    let max_intra = run.samples.iter().flat_map(|s| s.intra.iter().copied()).fold(0.0, f64::max);
    let intra_viol = run
        .samples
        .iter()
        .flat_map(|s| s.intra.iter())
        .filter(|&&x| x > dp.err_bound)
        .count() as u64;
    audits.push(AuditItem::new(
        "intra_cluster_skew",
        max_intra,
        dp.err_bound,
        run.samples.len() as u64,
        intra_viol,
    ));

    audits.push(AuditItem::new(
        "delivery_window",
        run.counters.delivery_violations as f64,
        0.0,
        run.counters.sync_broadcasts + run.counters.max_broadcasts,
        run.counters.delivery_violations,
    ));

    // Estimator error. Every estimator stays within E of each correct
    // member, hence within E of the midrange. The tighter E/2 is reported.
    let est: Vec<f64> = run.samples.iter().filter_map(|s| s.est_err).collect();
    let est_bound = dp.e + 1e-9;
    let half_bound = dp.e / 2.0 + 1e-9;
    let max_est = est.iter().copied().fold(f64::NAN, f64::max);
    audits.push(AuditItem::new(
        "estimator_error",
        if est.is_empty() { 0.0 } else { max_est },
        est_bound,
        est.len() as u64,
        est.iter().filter(|&&x| x > est_bound).count() as u64,
    ));

    // Guard soundness.
    let m_viol = run.samples.iter().filter(|s| s.m_excess > rel_tol(s.lmax)).count() as u64;
    let max_excess = run.samples.iter().map(|s| s.m_excess).fold(f64::NEG_INFINITY, f64::max);
    audits.push(AuditItem::new("guard_soundness", max_excess, 0.0, run.samples.len() as u64, m_viol));

    audits.push(AuditItem::new(
        "trigger_exclusivity",
        run.counters.trigger_conflicts as f64,
        0.0,
        run.rounds.len() as u64,
        run.counters.trigger_conflicts,
    ));

    let improper = run.rounds.iter().filter(|r| r.delta_r.is_some() && !r.proper).count() as u64;
    audits.push(AuditItem::new(
        "proper_execution",
        improper as f64,
        0.0,
        run.rounds.iter().filter(|r| r.delta_r.is_some()).count() as u64,
        improper,
    ));

    // Nominal round length and anchors.
    let tol_t = 1e-9 * dp.t;
    let mut nominal_checked = 0;
    let mut nominal_viol = 0;
    let mut nominal_err: f64 = 0.0;
    for r in &run.rounds {
        if let (Some(nom), Some(delta)) = (r.nominal, r.delta_r) {
            if !r.proper {
                continue;
            }
            nominal_checked += 1;
            let err = (nom - (dp.t + delta)).abs();
            nominal_err = nominal_err.max(err);
            if err > tol_t {
                nominal_viol += 1;
            }
        }
    }
    audits.push(AuditItem::new("nominal_round_length", nominal_err, tol_t, nominal_checked, nominal_viol));

    let anchor_err = run
        .rounds
        .iter()
        .map(|r| (r.l_start - (r.round - 1) as f64 * dp.t).abs())
        .fold(0.0, f64::max);
    let anchor_viol = run
        .rounds
        .iter()
        .filter(|r| (r.l_start - (r.round - 1) as f64 * dp.t).abs() > tol_t)
        .count() as u64;
    audits.push(AuditItem::new("round_anchor", anchor_err, tol_t, run.rounds.len() as u64, anchor_viol));

    // Pulse diameters and recursion.
    let diameters = pulse_diameters(&run.rounds, ctx.clusters);
    let max_diam = diameters.iter().flat_map(|m| m.values().copied()).fold(0.0, f64::max);
    let diam_count = diameters.iter().map(|m| m.len()).sum::<usize>() as u64;
    let diam_viol = diameters.iter().flat_map(|m| m.values()).filter(|&&x| x > dp.e * (1.0 + 1e-9)).count() as u64;
    audits.push(AuditItem::new("pulse_diameter", max_diam, dp.e, diam_count, diam_viol));

    let mut rec_checked = 0;
    let mut rec_viol = 0;
    let mut rec_slack = f64::INFINITY;
    let th = dp.theta_g;
    let orig_a = (2.0 * th * th + 5.0 * th - 5.0) / (2.0 * (th + 1.0));
    let orig_b = (3.0 * th - 1.0) * p.u + (1.0 - 1.0 / th) * dp.t;
    let mut general_exceed = 0;
    for m in &diameters {
        for (&r, &e) in m {
            if r < 2 {
                continue;
            }
            if let Some(&next) = m.get(&(r + 1)) {
                rec_checked += 1;
                let bound = orig_a * e + orig_b;
                rec_slack = rec_slack.min(bound - next);
                if next > bound + 1e-12 * dp.e {
                    rec_viol += 1;
                }
                if next > up.alpha_g * e + up.beta_g + 1e-12 * dp.e {
                    general_exceed += 1;
                }
            }
        }
    }
    audits.push(AuditItem::new(
        "pulse_recursion",
        if rec_checked == 0 { 0.0 } else { rec_slack },
        0.0,
        rec_checked,
        rec_viol,
    ));

    // Rate sandwich over sample intervals.
    let rate_viol = u64::from(run.counters.rate_min.is_some_and(|r| r < 1.0 - 1e-9))
        + u64::from(run.counters.rate_max.is_some_and(|r| r > dp.theta_max + 1e-9));
    audits.push(AuditItem::new(
        "rate_sandwich",
        run.counters.rate_max.unwrap_or(0.0),
        dp.theta_max,
        run.samples.len() as u64,
        rate_viol,
    ));
    audits.push(AuditItem::new(
        "cluster_clock_rate",
        run.counters.cluster_rate_violations as f64,
        0.0,
        run.samples.len() as u64,
        run.counters.cluster_rate_violations,
    ));

    // Faithfulness: every detected condition is backed by triggers.
    let mut faith_checked = 0;
    let mut faith_viol = 0;
    let mut fc_samples = 0;
    let mut sc_samples = 0;
    for s in &run.samples {
        for (c, cond) in s.conditions.iter().enumerate() {
            let fast = match cond {
                Condition::Fast(_) => true,
                Condition::Slow(_) => false,
                Condition::Neither => continue,
            };
            if fast {
                fc_samples += 1;
            } else {
                sc_samples += 1;
            }
            if ctx.forced {
                continue;
            }
            for (_, recs) in nodes.iter().filter(|(_, r)| r.first().is_some_and(|x| x.cluster == c as u32)) {
                let Some(pos) = recs.iter().rposition(|r| r.t_start <= s.t) else { continue };
                let from = pos.saturating_sub(p.k_stab as usize);
                faith_checked += 1;
                if !recs[from..=pos].iter().all(|r| if fast { r.ft } else { r.st }) {
                    faith_viol += 1;
                }
            }
        }
    }
    audits.push(AuditItem::new("faithfulness", faith_viol as f64, 0.0, faith_checked, faith_viol));

    // GCS axioms on amortized cluster-clock rates between reference rounds.
    let rho_bar = (1.0 + dp.phi) * (1.0 + dp.mu / 4.0) - 1.0;
    let mu_bar = (1.0 + dp.phi) * (1.0 + 7.0 * dp.mu / 8.0) - 1.0;
    let mut gcs_checked = 0;
    let mut gcs_viol = 0;
    let mut gcs_min = f64::INFINITY;
    for c in 0..ctx.clusters as u32 {
        let Some((_, recs)) = nodes.iter().find(|(_, r)| r.first().is_some_and(|x| x.cluster == c)) else {
            continue;
        };
        for w in recs.windows(2) {
            let dt = w[1].t_start - w[0].t_start;
            if dt <= 0.0 {
                continue;
            }
            let q = (w[1].cluster_clock - w[0].cluster_clock) / dt;
            gcs_min = gcs_min.min(q);
            gcs_checked += 1;
            let mut ok = q >= 1.0 - 1e-9 && q <= (1.0 + rho_bar) * (1.0 + mu_bar) + 1e-9;
            if !ctx.forced {
                let in_window = run.samples.iter().filter(|s| s.t >= w[0].t_start && s.t < w[1].t_start);
                for s in in_window {
                    match s.conditions.get(c as usize) {
                        Some(Condition::Fast(_)) if q < (1.0 + mu_bar) * (1.0 - 1e-9) => ok = false,
                        Some(Condition::Slow(_)) if q > (1.0 + rho_bar) * (1.0 + 1e-9) => ok = false,
                        _ => {}
                    }
                }
            }
            if !ok {
                gcs_viol += 1;
            }
        }
    }
    if !(mu_bar / rho_bar > 1.0) {
        gcs_viol += 1;
    }
    audits.push(AuditItem::new("gcs_axioms", mu_bar / rho_bar, 1.0, gcs_checked, gcs_viol));

    // Unanimous regimes.
    let (un_checked, un_viol) = unanimous_rate_audit(&run.rounds, p, dp, p.k_stab as u64 + 2);
    audits.push(AuditItem::new("unanimous_rates", un_viol as f64, 0.0, un_checked, un_viol));

    // Observations.
    let mut lmax_rate: f64 = 1.0;
    for w in run.samples.windows(2) {
        let dt = w[1].t - w[0].t;
        if dt > 1e-9 {
            lmax_rate = lmax_rate.max((w[1].lmax - w[0].lmax) / dt);
        }
    }
    let dd = ctx.diameter.max(1) as f64;
    let warmup = (p.d + 1.0) * ctx.diameter as f64;
    let guard_gap = run
        .samples
        .iter()
        .filter(|s| s.t >= warmup)
        .map(|s| (s.lmax - s.min_m) / (dp.delta * dd))
        .fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.max(x))));
    let max_global = run.samples.iter().map(|s| s.global_skew).fold(0.0, f64::max);
    let mut causes = BTreeMap::new();
    for r in &run.rounds {
        *causes.entry(r.cause.as_str().to_string()).or_insert(0) += 1;
    }
    let observations = Observations {
        max_global_skew: max_global,
        max_intra_skew: max_intra,
        max_cluster_edge_skew: run.samples.iter().flat_map(|s| s.edge_skew.iter().copied()).fold(0.0, f64::max),
        max_node_local_skew: run.samples.iter().map(|s| s.node_local).fold(0.0, f64::max),
        max_pulse_diameter: max_diam,
        max_estimator_error: (!est.is_empty()).then_some(max_est),
        estimator_half_bound_exceedances: est.iter().filter(|&&x| x > half_bound).count() as u64,
        general_recursion_exceedances: general_exceed,
        lmax_rate_constant: (lmax_rate - 1.0) / dp.rho.max(f64::MIN_POSITIVE),
        guard_gap_constant: guard_gap,
        global_skew_constant: (ctx.diameter > 0).then(|| max_global / (dp.delta * dd)),
        fast_condition_samples: fc_samples,
        slow_condition_samples: sc_samples,
        mode_causes: causes,
        complete_rounds: run.rounds.iter().filter(|r| r.t_end.is_some()).count() as u64,
    };
    Analysis { passed: audits.iter().all(|a| a.passed), audits, observations }
}

/// Checks per-round amortized rates in unanimously fast or slow stretches
/// of `k_stab + 1` rounds starting at round `first_round` or later.
/// Returns `(checked, violations)`.
pub fn unanimous_rate_audit(rounds: &[RoundRecord], p: &ProtocolParams, dp: &DerivedParams, first_round: u64) -> (u64, u64) {
    let mut grid: BTreeMap<(u32, u64), Vec<&RoundRecord>> = BTreeMap::new();
    let mut size: BTreeMap<u32, std::collections::BTreeSet<NodeIdx>> = BTreeMap::new();
    for r in rounds {
        grid.entry((r.cluster, r.round)).or_default().push(r);
        size.entry(r.cluster).or_default().insert(r.node);
    }
    let unanimous = |c: u32, r: u64| -> Option<u8> {
        let recs = grid.get(&(c, r))?;
        if recs.len() != size[&c].len() {
            return None;
        }
        let g = recs[0].gamma;
        recs.iter().all(|x| x.gamma == g).then_some(g)
    };
    let fast_floor = (1.0 + dp.phi) * (1.0 + 7.0 * dp.mu / 8.0) * (1.0 - 1e-6);
    let slow_lo = (1.0 + dp.phi) * (1.0 - dp.mu / 8.0) * (1.0 - 1e-6);
    let slow_hi = (1.0 + dp.phi) * (1.0 + dp.mu / 8.0) * (1.0 + 1e-6);
    let mut checked = 0;
    let mut viol = 0;
    for (&(c, r), recs) in &grid {
        if r < first_round.max(p.k_stab as u64 + 1) {
            continue;
        }
        let Some(g) = unanimous(c, r) else { continue };
        if !(r - p.k_stab as u64..r).all(|q| unanimous(c, q) == Some(g)) {
            continue;
        }
        for rec in recs {
            let Some(t_end) = rec.t_end else { continue };
            let rate = dp.t / (t_end - rec.t_start);
            checked += 1;
            let ok = if g == 1 { rate >= fast_floor } else { rate >= slow_lo && rate <= slow_hi };
            if !ok {
                viol += 1;
            }
        }
    }
    (checked, viol)
}
