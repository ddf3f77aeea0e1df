mod common;

use common::run;
use ftgcs::adversary::{DelayKind, ExtremeRule, Strategy};
use ftgcs::cli::scenario::Scenario;
use ftgcs::params::ProtocolParams;
use ftgcs::simcore::ClockPolicy;
use ftgcs::topology::FaultPlacement;
use proptest::prelude::*;

fn delay(i: usize) -> DelayKind {
    match i {
        0 => DelayKind::AllMax,
        1 => DelayKind::AllMin,
        2 => DelayKind::SeededUniform,
        3 => DelayKind::Alternating,
        4 => DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitSenders },
        _ => DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients },
    }
}

fn clocks(i: usize) -> ClockPolicy {
    match i {
        0 => ClockPolicy::PerCluster { drifts: vec![1.0, 0.0] },
        1 => ClockPolicy::Oscillating { period: 40.0 },
        _ => ClockPolicy::Random { segment: 30.0 },
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn cluster_invariants_hold(
        seed in 0u64..1000,
        strategy in prop::sample::select(vec!["silent", "crash", "random_pulses", "divergent", "skew_push"]),
        delay_idx in 0usize..6,
        clock_idx in 0usize..3,
        two in any::<bool>(),
    ) {
        let mut s = Scenario::new(if two { "path:2" } else { "single" }, ProtocolParams::default());
        s.seed = seed;
        s.faults.placement = FaultPlacement::PerCluster { count: 1 };
        s.faults.strategy = Strategy::from_name(strategy).unwrap();
        s.delays.policy = delay(delay_idx);
        s.clocks.policy = clocks(clock_idx);
        s.run.rounds = 15.0;
        let (_, ctx, analysis) = run(&s);
        for name in [
            "intra_cluster_skew",
            "delivery_window",
            "proper_execution",
            "nominal_round_length",
            "round_anchor",
            "pulse_diameter",
            "guard_soundness",
            "trigger_exclusivity",
            "rate_sandwich",
        ] {
            let a = analysis.audit(name).unwrap();
            prop_assert!(a.passed, "{name}: {a:?}");
        }
        let max_est = analysis.observations.max_estimator_error.unwrap_or(0.0);
        prop_assert!(max_est <= ctx.derived.e + 1e-9);
    }
}

#[test]
fn two_faults_per_cluster() {
    let p = ProtocolParams { f: 2, k: 7, ..ProtocolParams::default() };
    let mut s = Scenario::new("path:2", p);
    s.faults.placement = FaultPlacement::PerCluster { count: 2 };
    s.faults.strategy = Strategy::from_name("skew_push").unwrap();
    s.delays.policy = DelayKind::AdversarialExtremes { rule: ExtremeRule::SplitRecipients };
    s.run.rounds = 30.0;
    let (_, _, analysis) = run(&s);
    let failing: Vec<_> = analysis.audits.iter().filter(|a| !a.passed).collect();
    assert!(failing.is_empty(), "{failing:?}");
}
