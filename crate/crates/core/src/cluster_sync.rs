//! Round/phase machinery of the intra-cluster algorithm.
//!
//! A round lasts `T` units of logical time and has three phases. A node
//! broadcasts a pulse at the end of phase 1, records the logical receipt
//! times of its cluster members' pulses during phases 1 and 2, and at the
//! end of phase 2 computes a correction `Δ` by an order-statistic midpoint.
//! Phase 3 then runs the clock at a modified rate so that the correction is
//! absorbed smoothly by the end of the round.
//!
//! The same machinery drives the silent estimators a node keeps for each
//! adjacent cluster: an estimator listens to that cluster's pulses and runs
//! the round logic on a private virtual clock without ever sending.

use serde::Serialize;

use crate::params::DerivedParams;
use crate::simcore::LogicalClock;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    One,
    Two,
    Three,
}

/// Fixed phase lengths in logical time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    pub tau1: f64,
    pub tau2: f64,
    pub tau3: f64,
    pub t: f64,
}

impl From<&DerivedParams> for Schedule {
    fn from(dp: &DerivedParams) -> Self {
        Self { tau1: dp.tau1, tau2: dp.tau2, tau3: dp.tau3, t: dp.t }
    }
}

impl Schedule {
    pub fn round_start(&self, r: u64) -> f64 {
        (r - 1) as f64 * self.t
    }

    /// Logical time at which `phase` of round `r` ends.
    pub fn phase_end(&self, r: u64, phase: Phase) -> f64 {
        let base = self.round_start(r);
        match phase {
            Phase::One => base + self.tau1,
            Phase::Two => base + self.tau1 + self.tau2,
            Phase::Three => base + self.t,
        }
    }
}

/// `(S[f+1] + S[k-f]) / 2` over the ascending offsets, 1-based.
pub fn compute_delta(sorted: &[f64], f: usize) -> f64 {
    let k = sorted.len();
    assert!(k > 2 * f, "need more than 2f offsets, got {k} with f={f}");
    (sorted[f] + sorted[k - f - 1]) / 2.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Amortization {
    pub multiplier: f64,
    pub overflow: bool,
}

/// Phase-3 rate multiplier `δ` that shifts the clock by `-Δ` over `τ₃`.
pub fn compute_amortization(delta_r: f64, tau3: f64, phi: f64) -> Amortization {
    let overflow = delta_r.abs() > phi * tau3;
    let raw = 1.0 - (1.0 + 1.0 / phi) * delta_r / (tau3 + delta_r);
    let multiplier = if overflow { raw.clamp(0.0, 2.0 / (1.0 - phi)) } else { raw };
    Amortization { multiplier, overflow }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseRecord {
    Accepted,
    Duplicate,
    /// Arrived during phase 3 and was ignored.
    Late,
}

/// Result of the phase-2 computation.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub delta_r: f64,
    pub multiplier: f64,
    pub overflow: bool,
    /// Member slots with no pulse by the end of phase 2.
    pub missing: Vec<usize>,
    /// True if the reference receipt never arrived.
    pub reference_missing: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundState {
    pub round: u64,
    pub phase: Phase,
    receipts: Vec<Option<f64>>,
    tags: Vec<u64>,
    reference: Option<f64>,
    pub delta_r: f64,
    pub multiplier: f64,
    pub duplicates: u64,
    pub late: u64,
}

impl RoundState {
    pub fn new(k: usize) -> Self {
        Self {
            round: 1,
            phase: Phase::One,
            receipts: vec![None; k],
            tags: vec![0; k],
            reference: None,
            delta_r: 0.0,
            multiplier: 1.0,
            duplicates: 0,
            late: 0,
        }
    }

    pub fn next_deadline(&self, s: &Schedule) -> f64 {
        s.phase_end(self.round, self.phase)
    }

    /// Records the logical receipt time of a member's pulse. `tag` is an
    /// audit annotation stored alongside.
    pub fn record(&mut self, slot: usize, logical: f64, tag: u64) -> PulseRecord {
        if self.phase == Phase::Three {
            self.late += 1;
            return PulseRecord::Late;
        }
        if self.receipts[slot].is_some() {
            self.duplicates += 1;
            return PulseRecord::Duplicate;
        }
        self.receipts[slot] = Some(logical);
        self.tags[slot] = tag;
        PulseRecord::Accepted
    }

    /// Records the reference receipt all offsets are measured against.
    pub fn record_reference(&mut self, logical: f64) -> bool {
        if self.phase == Phase::Three || self.reference.is_some() {
            return false;
        }
        self.reference = Some(logical);
        true
    }

    pub fn receipt(&self, slot: usize) -> Option<f64> {
        self.receipts[slot]
    }

    pub fn tag(&self, slot: usize) -> u64 {
        self.tags[slot]
    }

    pub fn reference(&self) -> Option<f64> {
        self.reference
    }

    pub fn end_phase1(&mut self) {
        debug_assert_eq!(self.phase, Phase::One);
        self.phase = Phase::Two;
    }

    /// Computes `Δ` and `δ` and enters phase 3. Missing slots count as
    /// offset 0, the reference's own offset.
    pub fn end_phase2(&mut self, f: usize, tau3: f64, phi: f64) -> Correction {
        debug_assert_eq!(self.phase, Phase::Two);
        let reference_missing = self.reference.is_none();
        let reference = self.reference.unwrap_or_else(|| {
            let got: Vec<f64> = self.receipts.iter().flatten().copied().collect();
            if got.is_empty() {
                0.0
            } else {
                got.iter().sum::<f64>() / got.len() as f64
            }
        });
        let mut missing = Vec::new();
        let mut offsets: Vec<f64> = self
            .receipts
            .iter()
            .enumerate()
            .map(|(i, r)| match r {
                Some(l) => l - reference,
                None => {
                    missing.push(i);
                    0.0
                }
            })
            .collect();
        offsets.sort_by(f64::total_cmp);
        let delta_r = if reference_missing && missing.len() == self.receipts.len() {
            0.0
        } else {
            compute_delta(&offsets, f)
        };
        let am = compute_amortization(delta_r, tau3, phi);
        self.delta_r = delta_r;
        self.multiplier = am.multiplier;
        self.phase = Phase::Three;
        Correction { delta_r, multiplier: am.multiplier, overflow: am.overflow, missing, reference_missing }
    }

    /// Starts the next round.
    pub fn end_round(&mut self) {
        debug_assert_eq!(self.phase, Phase::Three);
        self.round += 1;
        self.phase = Phase::One;
        self.receipts.iter_mut().for_each(|r| *r = None);
        self.tags.iter_mut().for_each(|t| *t = 0);
        self.reference = None;
        self.delta_r = 0.0;
        self.multiplier = 1.0;
    }
}

/// Silent replica of an adjacent cluster's round logic, run on the
/// observer's hardware clock and mode.
#[derive(Debug, Clone)]
pub struct Estimator {
    pub cluster: u32,
    pub clock: LogicalClock,
    pub state: RoundState,
    /// Newtonian time of the current round's virtual pulse.
    pub virtual_pulse: Option<f64>,
    pub generation: u64,
}

impl Estimator {
    pub fn new(cluster: u32, k: usize, phi: f64, mu: f64) -> Self {
        Self { cluster, clock: LogicalClock::new(phi, mu), state: RoundState::new(k), virtual_pulse: None, generation: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert_eq!(compute_delta(&[0.0; 4], 1), 0.0);
        assert_eq!(compute_delta(&[-3.0, 0.0, 1.0, 5.0], 1), 0.5);
        assert_eq!(compute_delta(&[-100.0, 0.0, 1.0, 2.0], 1), 0.5);
        assert_eq!(compute_delta(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0], 2), 4.0);
    }

    #[test]
    fn amortization_examples() {
        let (tau3, phi) = (50.0, 0.02);
        assert_eq!(compute_amortization(0.0, tau3, phi).multiplier, 1.0);
        let hi = compute_amortization(phi * tau3, tau3, phi);
        assert!(hi.multiplier.abs() < 1e-12 && !hi.overflow);
        let lo = compute_amortization(-phi * tau3, tau3, phi);
        assert!((lo.multiplier - 2.0 / (1.0 - phi)).abs() < 1e-12 && !lo.overflow);
        let over = compute_amortization(2.0 * phi * tau3, tau3, phi);
        assert!(over.overflow && over.multiplier == 0.0);
    }

    #[test]
    fn amortized_shift_equals_minus_delta() {
        // Nominal rate 1 in phase 3: the phase lasts tau3 + Δ nominal units.
        let (tau3, phi) = (40.0, 0.05);
        for delta in [-1.5, -0.2, 0.0, 0.7, 1.9] {
            let m = compute_amortization(delta, tau3, phi).multiplier;
            let rate = (1.0 + phi * m) / (1.0 + phi);
            assert!((tau3 / rate - (tau3 + delta)).abs() < 1e-10);
        }
    }

    #[test]
    fn round_lifecycle() {
        let s = Schedule { tau1: 1.0, tau2: 2.0, tau3: 10.0, t: 13.0 };
        let mut st = RoundState::new(4);
        assert_eq!(st.next_deadline(&s), 1.0);
        st.end_phase1();
        assert_eq!(st.next_deadline(&s), 3.0);
        assert_eq!(st.record(0, 2.0, 1), PulseRecord::Accepted);
        assert_eq!(st.record(0, 2.5, 1), PulseRecord::Duplicate);
        st.record(1, 2.1, 1);
        st.record(2, 1.9, 1);
        assert!(st.record_reference(2.0));
        let c = st.end_phase2(1, 10.0, 0.1);
        assert_eq!(c.missing, vec![3]);
        // offsets {0, 0.1, -0.1, 0} sorted {-0.1, 0, 0, 0.1}
        assert!(c.delta_r.abs() < 1e-12);
        assert_eq!(st.record(1, 5.0, 1), PulseRecord::Late);
        assert_eq!(st.next_deadline(&s), 13.0);
        st.end_round();
        assert_eq!(st.round, 2);
        assert_eq!(st.next_deadline(&s), 14.0);
        assert_eq!(st.receipt(0), None);
        assert_eq!(s.phase_end(3, Phase::One), 27.0);
    }
}
