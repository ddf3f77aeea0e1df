use ftgcs::intercluster_sync::{fast_trigger, select_mode, slow_trigger, Guard, ModeCause, TriggerState};
use ftgcs::simcore::{HardwareClock, LogicalClock};
use proptest::prelude::*;

fn hardware_clock(rho: f64) -> impl Strategy<Value = HardwareClock> {
    prop::collection::vec((0.1..20.0f64, 0.0..=1.0f64), 1..8).prop_map(move |pieces| {
        let mut start = 0.0;
        let mut out = Vec::new();
        for (len, drift) in pieces {
            out.push((start, 1.0 + drift * rho));
            start += len;
        }
        HardwareClock::from_rates(&out).unwrap()
    })
}

proptest! {
    #[test]
    fn hardware_inversion_round_trips(hw in hardware_clock(1e-3), t in 0.0..200.0f64) {
        let h = hw.value_at(t);
        prop_assert!((hw.time_at_value(h) - t).abs() <= 1e-12 * t.max(1.0));
        prop_assert!(hw.within_bounds(1e-3));
    }

    #[test]
    fn logical_inversion_round_trips(
        hw in hardware_clock(1e-4),
        commit in 0.0..50.0f64,
        delta in -1.0..1.0f64,
        gamma in 0u8..=1,
        ahead in 0.0..100.0f64,
    ) {
        let mut c = LogicalClock::new(0.004, 0.0032);
        c.set_rates(&hw, commit, delta, gamma);
        let now = commit;
        let target = c.value_at(&hw, now) + ahead;
        let t = c.time_of(&hw, target, now);
        prop_assert!(t >= now);
        prop_assert!((c.value_at(&hw, t) - target).abs() <= 1e-12 * target.max(1.0));
    }

    #[test]
    fn logical_clock_is_monotone(hw in hardware_clock(1e-4), a in 0.0..100.0f64, b in 0.0..100.0f64) {
        let c = LogicalClock::new(0.004, 0.0032);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(c.value_at(&hw, hi) >= c.value_at(&hw, lo));
    }
}

/// Estimates placed near trigger thresholds so both predicates are
/// exercised close to their boundaries. Slack stays below `κ / 2`.
fn trigger_inputs() -> impl Strategy<Value = (f64, f64, f64, Vec<f64>, u32, u32)> {
    (0.1..10.0f64, 0.0..1.0f64, -100.0..100.0f64, 1u32..3, 0u32..8).prop_flat_map(|(kappa, slack_frac, own, s_min, extra)| {
        let slack = slack_frac * 0.5 * kappa * 0.999_999;
        let est = (-24i32..24, -1.0..1.0f64).prop_map(move |(half_steps, jitter)| {
            own + f64::from(half_steps) * kappa * 0.5 + jitter * slack * 1.5
        });
        prop::collection::vec(est, 0..7).prop_map(move |e| (kappa, slack, own, e, s_min, s_min + extra))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20_000))]

    #[test]
    fn triggers_are_exclusive((kappa, slack, own, estimates, s_min, s_max) in trigger_inputs()) {
        let ts = TriggerState { kappa, slack, own, estimates: &estimates, s_min, s_max };
        let (ft, st) = (fast_trigger(&ts), slow_trigger(&ts));
        prop_assert!(ft.is_none() || st.is_none(), "ft={ft:?} st={st:?}");
        let m = select_mode(&ts, Some(Guard { m: own + 100.0 * kappa, c: 8.0 }));
        prop_assert!(!(m.ft && m.st));
        match (ft, st) {
            (Some(s), _) => prop_assert_eq!((m.gamma, m.cause, m.s), (1, ModeCause::FastTrigger, Some(s))),
            (None, Some(s)) => prop_assert_eq!((m.gamma, m.cause, m.s), (0, ModeCause::SlowTrigger, Some(s))),
            (None, None) => prop_assert_eq!((m.gamma, m.cause), (1, ModeCause::Guard)),
        }
    }
}

/// With slack `κ / 2`, neighbors at `+3κ/2` and `-κ/2` satisfy both triggers
/// at `s = 1`, so exclusivity does not extend to larger slack. One neighbor
/// suffices from `3κ/2` on.
#[test]
fn triggers_overlap_from_half_kappa_slack() {
    let estimates = [1.5, -0.5];
    let mut ts = TriggerState { kappa: 1.0, slack: 0.5, own: 0.0, estimates: &estimates, s_min: 1, s_max: 4 };
    assert_eq!((fast_trigger(&ts), slow_trigger(&ts)), (Some(1), Some(1)));
    ts.slack = 0.499;
    assert!(fast_trigger(&ts).is_none() || slow_trigger(&ts).is_none());
    let single = [0.5];
    ts = TriggerState { slack: 1.5, estimates: &single, ..ts };
    assert_eq!((fast_trigger(&ts), slow_trigger(&ts)), (Some(1), Some(1)));
}
