//! Acceptance run. Prints one line per criterion and exits non-zero if any
//! criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;
use ftgcs::adversary::{DelayKind, ExtremeRule, Strategy};
use ftgcs::cli::scenario::Scenario;
use ftgcs::intercluster_sync::{fast_trigger, slow_trigger, TriggerState};
use ftgcs::metrics::{pulse_diameters, unanimous_rate_audit, Analysis, AuditContext, RunData};
use ftgcs::params::{cluster_failure_probability, derive_parameters, derive_with, ProtocolParams};
use ftgcs::simcore::ClockPolicy;
use ftgcs::topology::FaultPlacement;
use ftgcs::world::ForcedMode;

/// Global-skew constant `max skew / (δ D)` of the guard scenario, recorded
/// from its first run.
const PINNED_GLOBAL_SKEW_CONSTANT: f64 = 0.011475;

const STRATEGIES: [&str; 4] = ["silent", "random_pulses", "divergent", "skew_push"];

fn delay_kinds() -> Vec<(&'static str, DelayKind)> {
    vec![
        ("all_max", DelayKind::AllMax),
        ("all_min", DelayKind::AllMin),
        ("seeded_uniform", DelayKind::SeededUniform),
        ("adversarial_extremes", DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients }),
    ]
}

struct Verdict {
    passed: bool,
    detail: String,
}

impl Verdict {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self { passed, detail: detail.into() }
    }
}

struct Run {
    label: String,
    data: RunData,
    ctx: AuditContext,
    analysis: Analysis,
}

impl Run {
    fn of(label: impl Into<String>, s: &Scenario) -> Self {
        let (data, ctx, analysis) = run(s);
        Self { label: label.into(), data, ctx, analysis }
    }

    /// `(violations, checked)` of a named audit.
    fn audit(&self, name: &str) -> (u64, u64) {
        let a = self.analysis.audit(name).unwrap_or_else(|| panic!("audit {name} missing"));
        (a.violations, a.checked)
    }

    fn failed_audits(&self) -> Vec<String> {
        self.analysis.audits.iter().filter(|a| !a.passed).map(|a| format!("{}:{}", self.label, a.name)).collect()
    }
}

fn faulty_scenario(topology: &str, strategy: &str, delays: DelayKind, rounds: f64, seed: u64) -> Scenario {
    let mut s = Scenario::new(topology, ProtocolParams::default());
    s.name = format!("{topology}-{strategy}");
    s.seed = seed;
    s.faults.placement = FaultPlacement::PerCluster { count: 1 };
    s.faults.strategy = Strategy::from_name(strategy).unwrap();
    s.delays.policy = delays;
    s.run.rounds = rounds;
    s
}

fn sum_audit(runs: &[Run], name: &str) -> (u64, u64) {
    runs.iter().map(|r| r.audit(name)).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1))
}

fn c1() -> Verdict {
    let mut points = 0;
    let mut worst_fixed: f64 = 0.0;
    let mut worst_oracle: f64 = 0.0;
    let mut schedule_ok = true;
    for rho in [1e-5, 3e-5, 1e-4, 2e-4] {
        for d in [0.5, 1.0, 2.0] {
            for u_frac in [0.001, 0.01, 0.05] {
                let p = ProtocolParams { rho, d, u: u_frac * d, ..ProtocolParams::default() };
                let dp = derive_parameters(&p).unwrap();
                points += 1;
                worst_fixed = worst_fixed.max((dp.e - (dp.alpha * dp.e + dp.beta)).abs() / dp.e);
                worst_oracle = worst_oracle.max(rel_err(dp.e, to_f64(&exact_params(&p).e)));
                schedule_ok &= dp.tau1 == dp.theta_g * dp.e
                    && dp.tau2 == dp.theta_g * (dp.e + p.d)
                    && dp.tau3 == dp.theta_g * (dp.e + p.u) / dp.phi
                    && dp.t == dp.tau1 + dp.tau2 + dp.tau3;
            }
        }
    }
    let mut drift_free = true;
    for u in [0.001, 0.01, 0.1] {
        let p = ProtocolParams { u, ..ProtocolParams::default() };
        let dp = derive_with(&p, 0.0, 0.0, 0.01).unwrap();
        drift_free &= (dp.alpha - 0.5).abs() <= 4.0 * f64::EPSILON
            && (dp.beta - 2.0 * u).abs() <= 4.0 * f64::EPSILON * u
            && (dp.e - 4.0 * u).abs() <= 64.0 * f64::EPSILON * u;
    }
    Verdict::new(
        points >= 20 && worst_fixed <= 1e-12 && worst_oracle <= 1e-9 && schedule_ok && drift_free,
        format!(
            "{points} points, max |E-(aE+b)|/E = {worst_fixed:.1e}, max rel. error vs exact = {worst_oracle:.1e}, \
             schedule identities {schedule_ok}, drift-free alpha=1/2 beta=2U E=4U {drift_free}"
        ),
    )
}

fn c2() -> Verdict {
    let mut runs = Vec::new();
    for seed in 1..=10 {
        let mut s = Scenario::new("single", ProtocolParams::default());
        s.seed = seed;
        s.run.rounds = 50.0;
        s.delays.policy = DelayKind::SeededUniform;
        runs.push(Run::of(format!("seed{seed}"), &s));
    }
    let (viol, checked) = sum_audit(&runs, "nominal_round_length");
    let worst = runs.iter().map(|r| r.analysis.audit("nominal_round_length").unwrap().observed).fold(0.0, f64::max);
    let t = runs[0].ctx.derived.t;
    Verdict::new(
        viol == 0 && checked >= 10 * 4 * 45,
        format!("{checked} rounds, max |nominal - (T + Delta)| = {:.2e} T, violations {viol}", worst / t),
    )
}

fn c3() -> (Verdict, Vec<Run>) {
    let mut runs = Vec::new();
    for strategy in STRATEGIES {
        for (dname, delays) in delay_kinds() {
            let s = faulty_scenario("single", strategy, delays, 200.0, 11);
            runs.push(Run::of(format!("{strategy}/{dname}"), &s));
        }
    }
    let (viol, checked) = sum_audit(&runs, "intra_cluster_skew");
    let bound = runs[0].ctx.derived.err_bound;
    let worst = runs.iter().map(|r| r.analysis.observations.max_intra_skew).fold(0.0, f64::max);
    let other: Vec<String> = runs.iter().flat_map(Run::failed_audits).collect();
    (
        Verdict::new(
            viol == 0 && checked > 0,
            format!(
                "{} runs, {checked} samples, max intra skew {worst:.4} <= 2 theta_g E = {bound:.4}, violations {viol}; \
                 other failing audits: {other:?}",
                runs.len()
            ),
        ),
        runs,
    )
}

fn c4(runs: &[Run]) -> Verdict {
    let mut checked = 0;
    let mut viol = 0;
    let mut max_diam: f64 = 0.0;
    for r in runs {
        let up = &r.ctx.unanimous;
        for m in pulse_diameters(&r.data.rounds, r.ctx.clusters) {
            for (&round, &e) in &m {
                max_diam = max_diam.max(e);
                if round < 2 {
                    continue;
                }
                if let Some(&next) = m.get(&(round + 1)) {
                    checked += 1;
                    if next > up.alpha_g * e + up.beta_g + 1e-12 * r.ctx.derived.e {
                        viol += 1;
                    }
                }
            }
        }
    }
    let e = runs[0].ctx.derived.e;
    Verdict::new(
        viol == 0 && checked > 0 && max_diam <= e,
        format!("{checked} round pairs, recursion violations {viol}, max pulse diameter {max_diam:.4} <= E = {e:.4}"),
    )
}

fn c5() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut exceed = 0;
    let mut runs = 0;
    let mut e = 0.0;
    for strategy in STRATEGIES {
        for (_, delays) in delay_kinds() {
            let s = faulty_scenario("path:2", strategy, delays, 200.0, 12);
            let r = Run::of(strategy, &s);
            e = r.ctx.derived.e;
            runs += 1;
            let est = r.data.samples.iter().filter_map(|s| s.est_err);
            for x in est {
                worst = worst.max(x);
                if x > e / 2.0 + 1e-9 {
                    exceed += 1;
                }
            }
        }
    }
    Verdict::new(
        exceed == 0 && worst > 0.0,
        format!("{runs} runs, max estimator error {worst:.4} vs E/2 = {:.4}, exceedances {exceed}", e / 2.0),
    )
}

fn c6() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let n = 100_000;
    let mut both = 0;
    let mut both_below_half = 0;
    let mut min_conflict_ratio = f64::INFINITY;
    let mut estimates = Vec::with_capacity(6);
    for _ in 0..n {
        let kappa = rng.random_range(0.1..10.0);
        let slack = rng.random_range(0.0..2.0) * kappa;
        let own = rng.random_range(-100.0..100.0);
        estimates.clear();
        for _ in 0..rng.random_range(1..=6) {
            estimates.push(own + rng.random_range(-12.0..12.0) * kappa);
        }
        let s_min = rng.random_range(1..=2);
        let ts = TriggerState { kappa, slack, own, estimates: &estimates, s_min, s_max: s_min + 8 };
        if fast_trigger(&ts).is_some() && slow_trigger(&ts).is_some() {
            both += 1;
            min_conflict_ratio = min_conflict_ratio.min(slack / kappa);
            if slack < kappa / 2.0 {
                both_below_half += 1;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    Verdict::new(
        both == 0 && elapsed < 5.0,
        format!(
            "{n} states with slack < 2 kappa: FT and ST both true in {both} ({both_below_half} with slack < kappa/2; \
             smallest conflicting slack/kappa {min_conflict_ratio:.3}); {elapsed:.2}s"
        ),
    )
}

fn c7() -> (Verdict, Vec<Run>) {
    let mut runs = Vec::new();
    for seed in 1..=5 {
        let mut s = faulty_scenario(
            "path:4",
            "skew_push",
            DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients },
            300.0,
            seed,
        );
        s.clocks.policy = ClockPolicy::Random { segment: 50.0 };
        runs.push(Run::of(format!("seed{seed}"), &s));
    }
    let (viol, checked) = sum_audit(&runs, "faithfulness");
    let fc: u64 = runs.iter().map(|r| r.analysis.observations.fast_condition_samples).sum();
    let sc: u64 = runs.iter().map(|r| r.analysis.observations.slow_condition_samples).sum();
    let other: Vec<String> = runs.iter().flat_map(Run::failed_audits).collect();
    (
        Verdict::new(
            viol == 0,
            format!(
                "5 runs, FC samples {fc}, SC samples {sc}, member checks {checked}, violations {viol}; \
                 other failing audits: {other:?}"
            ),
        ),
        runs,
    )
}

/// Three clusters with one cluster drifting fast, long enough for the
/// conditions to fire.
fn long_run() -> Run {
    let mut s = faulty_scenario("path:3", "silent", DelayKind::SeededUniform, 6000.0, 5);
    s.clocks.policy = ClockPolicy::PerCluster { drifts: vec![1.0, 0.0, 0.0] };
    Run::of("long", &s)
}

fn c7b(r: &Run) -> Verdict {
    let o = &r.analysis.observations;
    let (fv, fc) = r.audit("faithfulness");
    let (gv, gc) = r.audit("gcs_axioms");
    let (tv, _) = r.audit("trigger_exclusivity");
    let failing = r.failed_audits();
    Verdict::new(
        failing.is_empty() && fc > 0 && o.fast_condition_samples + o.slow_condition_samples > 0,
        format!(
            "6000 rounds: FC samples {}, SC samples {}, faithfulness {fv}/{fc}, GCS axioms {gv}/{gc}, \
             trigger conflicts {tv}, mode causes {:?}; failing audits {failing:?}",
            o.fast_condition_samples, o.slow_condition_samples, o.mode_causes
        ),
    )
}

fn c8() -> Verdict {
    let mut fast = (0, 0);
    let mut slow = (0, 0);
    let mut runs = 0;
    let mut other = Vec::new();
    for strategy in STRATEGIES {
        for (dname, delays) in delay_kinds() {
            let mut s = faulty_scenario("single", strategy, delays, 80.0, 8);
            s.run.forced = vec![
                ForcedMode { cluster: None, from_round: 1, to_round: Some(40), gamma: 1 },
                ForcedMode { cluster: None, from_round: 41, to_round: None, gamma: 0 },
            ];
            let r = Run::of(format!("{strategy}/{dname}"), &s);
            runs += 1;
            let p = &r.ctx.params;
            let dp = &r.ctx.derived;
            let first = u64::from(p.k_stab) + 2;
            let (fr, sr): (Vec<_>, Vec<_>) = r.data.rounds.iter().cloned().partition(|x| x.round <= 40);
            let (c, v) = unanimous_rate_audit(&fr, p, dp, first);
            fast = (fast.0 + c, fast.1 + v);
            let (c, v) = unanimous_rate_audit(&sr, p, dp, 41 + first);
            slow = (slow.0 + c, slow.1 + v);
            other.extend(r.failed_audits());
        }
    }
    Verdict::new(
        fast.0 > 0 && slow.0 > 0 && fast.1 == 0 && slow.1 == 0,
        format!(
            "{runs} forced runs: fast rounds checked {} violations {}, slow rounds checked {} violations {}; \
             other failing audits: {other:?}",
            fast.0, fast.1, slow.0, slow.1
        ),
    )
}

fn c9(runs: &[Run]) -> Verdict {
    let (viol, checked) = sum_audit(runs, "gcs_axioms");
    let ratio = runs[0].analysis.audit("gcs_axioms").unwrap().observed;
    Verdict::new(
        viol == 0 && checked > 0 && ratio > 1.0,
        format!("{checked} cluster-clock rate quotients, violations {viol}, mu_bar/rho_bar = {ratio:.3}"),
    )
}

fn c10() -> Verdict {
    let mut parts = Vec::new();
    let mut ok = true;
    for c in [8.0, 4.0, 16.0] {
        let mut s = faulty_scenario(
            "path:8",
            "skew_push",
            DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients },
            500.0,
            10,
        );
        s.run.guard_c = c;
        let r = Run::of(format!("c={c}"), &s);
        let (mv, mc) = r.audit("guard_soundness");
        let cg = r.analysis.observations.global_skew_constant.unwrap_or(f64::NAN);
        ok &= mv == 0 && mc > 0;
        if c == 8.0 {
            let drift = (cg - PINNED_GLOBAL_SKEW_CONSTANT).abs() / PINNED_GLOBAL_SKEW_CONSTANT;
            ok &= drift <= 0.10;
            parts.push(format!(
                "c={c}: M<=Lmax violations {mv}/{mc}, C_g = {cg:.6} (pinned {PINNED_GLOBAL_SKEW_CONSTANT:.6}, off by {:.1}%)",
                100.0 * drift
            ));
        } else {
            parts.push(format!("c={c}: M<=Lmax violations {mv}/{mc}, C_g = {cg:.4}"));
        }
        ok &= r.failed_audits().is_empty();
    }
    Verdict::new(ok, parts.join("; "))
}

fn c11(worst: &str) -> Verdict {
    let mut points = Vec::new();
    let mut kappa = 0.0;
    let mut failing = Vec::new();
    for d in [4usize, 8, 16, 32] {
        let s = faulty_scenario(
            &format!("path:{}", d + 1),
            worst,
            DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients },
            300.0,
            11,
        );
        let r = Run::of(format!("D={d}"), &s);
        kappa = r.ctx.derived.kappa;
        failing.extend(r.failed_audits());
        points.push((d, r.analysis.observations.max_cluster_edge_skew));
    }
    let fit = ftgcs::metrics::convergence_fit(&points);
    let ratio = points[3].1 / points[0].1;
    let allowed = 2.0 * (32f64).ln() / (4f64).ln();
    let sublinear = points.iter().all(|&(d, s)| s <= 0.1 * kappa * d as f64);
    Verdict::new(
        fit.nondecreasing && ratio <= allowed && sublinear && failing.is_empty(),
        format!(
            "strategy {worst}: skew {:?}, nondecreasing {}, skew(32)/skew(4) = {ratio:.3} <= {allowed:.3}, \
             all <= 0.1 kappa D {sublinear}; failing audits {failing:?}",
            points.iter().map(|&(d, s)| format!("D={d}:{s:.4}")).collect::<Vec<_>>(),
            fit.nondecreasing
        ),
    )
}

fn c12() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    let mut n = 0;
    for f in 0..=8 {
        for p in [1e-7, 1e-5, 1e-3, 0.01, 0.03, 0.1, 0.12, 0.3, 0.5] {
            let got = cluster_failure_probability(f, p);
            worst = worst.max(rel_err(got.exact, to_f64(&exact_failure_probability(f, p))));
            if 3.0 * std::f64::consts::E * p <= 1.0 {
                bound_ok &= got.exact <= got.bound;
            }
            n += 1;
        }
    }
    Verdict::new(
        worst <= 1e-12 && bound_ok,
        format!("{n} (f, p) points, max rel. error vs exact {worst:.1e}, bound holds {bound_ok}"),
    )
}

fn report(failed: &mut Vec<&'static str>, id: &'static str, title: &str, start: Instant, v: Verdict) {
    let tag = if v.passed { "PASS" } else { "FAIL" };
    println!("[{tag}] {id:<4} {title} ({:.1}s): {}", start.elapsed().as_secs_f64(), v.detail);
    if !v.passed {
        failed.push(id);
    }
}

fn main() -> ExitCode {
    let mut failed = Vec::new();

    let t = Instant::now();
    report(&mut failed, "1", "parameter fixed point", t, c1());
    let t = Instant::now();
    report(&mut failed, "2", "nominal round length", t, c2());
    let t = Instant::now();
    let (v3, single_runs) = c3();
    report(&mut failed, "3", "intra-cluster skew", t, v3);
    let t = Instant::now();
    report(&mut failed, "4", "pulse-diameter recursion", t, c4(&single_runs));
    let worst = single_runs
        .iter()
        .max_by(|a, b| a.analysis.observations.max_intra_skew.total_cmp(&b.analysis.observations.max_intra_skew))
        .map(|r| r.label.split('/').next().unwrap().to_string())
        .unwrap();
    drop(single_runs);
    let t = Instant::now();
    report(&mut failed, "5", "estimator bound", t, c5());
    let t = Instant::now();
    report(&mut failed, "6", "trigger exclusivity", t, c6());
    let t = Instant::now();
    let (v7, line_runs) = c7();
    report(&mut failed, "7", "faithfulness", t, v7);
    let t = Instant::now();
    let long = long_run();
    report(&mut failed, "7b", "faithfulness, long horizon", t, c7b(&long));
    let t = Instant::now();
    report(&mut failed, "8", "unanimous rate gap", t, c8());
    let t = Instant::now();
    report(&mut failed, "9", "GCS axioms", t, c9(&line_runs));
    let t = Instant::now();
    report(&mut failed, "9b", "GCS axioms, long horizon", t, c9(std::slice::from_ref(&long)));
    drop((line_runs, long));
    let t = Instant::now();
    report(&mut failed, "10", "global-skew guard", t, c10());
    let t = Instant::now();
    report(&mut failed, "11", "local-skew growth", t, c11(&worst));
    let t = Instant::now();
    report(&mut failed, "12", "reliability formula", t, c12());

    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria {failed:?}");
        ExitCode::FAILURE
    }
}
