use super::clock::HardwareClock;

/// Rate multiplier `(1 + phi*delta)(1 + mu*gamma)` applied to the hardware
/// rate.
pub fn rate_multiplier(phi: f64, mu: f64, delta: f64, gamma: u8) -> f64 {
    (1.0 + phi * delta) * (1.0 + mu * f64::from(gamma))
}

/// Logical clock state. Between commits the logical clock advances as a
/// fixed multiple of the hardware clock, so values and inverse lookups are
/// closed-form.
#[derive(Debug, Clone, PartialEq)]
pub struct LogicalClock {
    t0: f64,
    l0: f64,
    h0: f64,
    delta: f64,
    gamma: u8,
    phi: f64,
    mu: f64,
    mult: f64,
}

impl LogicalClock {
    /// Clock reading 0 at time 0 with `delta = 1`, `gamma = 0`.
    pub fn new(phi: f64, mu: f64) -> Self {
        Self { t0: 0.0, l0: 0.0, h0: 0.0, delta: 1.0, gamma: 0, phi, mu, mult: rate_multiplier(phi, mu, 1.0, 0) }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn gamma(&self) -> u8 {
        self.gamma
    }

    pub fn multiplier(&self) -> f64 {
        self.mult
    }

    pub fn committed_at(&self) -> f64 {
        self.t0
    }

    /// `L(t)` for `t` at or after the last commit.
    pub fn value_at(&self, hw: &HardwareClock, t: f64) -> f64 {
        self.l0 + self.mult * (hw.value_at(t) - self.h0)
    }

    /// Earliest time `>= now` at which the clock reads `target`, assuming
    /// multipliers stay fixed.
    pub fn time_of(&self, hw: &HardwareClock, target: f64, now: f64) -> f64 {
        if target <= self.value_at(hw, now) {
            return now;
        }
        let h = self.h0 + (target - self.l0) / self.mult;
        hw.time_at_value(h).max(now)
    }

    fn commit(&mut self, hw: &HardwareClock, t: f64) {
        self.l0 = self.value_at(hw, t);
        self.h0 = hw.value_at(t);
        self.t0 = t;
    }

    /// Changes the multipliers from time `t` on.
    pub fn set_rates(&mut self, hw: &HardwareClock, t: f64, delta: f64, gamma: u8) {
        self.commit(hw, t);
        self.delta = delta;
        self.gamma = gamma;
        self.mult = rate_multiplier(self.phi, self.mu, delta, gamma);
    }

    /// Pins the clock to read exactly `value` at time `t`. Used at scheduled
    /// deadlines to absorb inversion round-off.
    pub fn anchor(&mut self, hw: &HardwareClock, t: f64, value: f64) {
        self.t0 = t;
        self.h0 = hw.value_at(t);
        self.l0 = value;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PHI: f64 = 0.01;
    const MU: f64 = 0.003;

    #[test]
    fn constant_segment_values() {
        let hw = HardwareClock::constant(1.0);
        let c = LogicalClock::new(PHI, MU);
        assert!((c.value_at(&hw, 5.0) - 5.0 * (1.0 + PHI)).abs() < 1e-12);

        let rho = 1e-4;
        let hw = HardwareClock::constant(1.0 + rho);
        let mut c = LogicalClock::new(PHI, MU);
        c.set_rates(&hw, 0.0, 0.0, 1);
        assert!((c.value_at(&hw, 2.0) - 2.0 * (1.0 + MU) * (1.0 + rho)).abs() < 1e-12);
    }

    #[test]
    fn two_segments() {
        let hw = HardwareClock::constant(1.0);
        let mut c = LogicalClock::new(PHI, MU);
        let l = 3.0;
        c.set_rates(&hw, l, 0.0, 0);
        assert!((c.value_at(&hw, 2.0 * l) - l * (2.0 + PHI)).abs() < 1e-12);
    }

    #[test]
    fn inversion() {
        // Combined rate 2 from L=0.
        let hw = HardwareClock::constant(2.0);
        let c = LogicalClock::new(0.0, 0.0);
        assert_eq!(c.time_of(&hw, 10.0, 0.0), 5.0);

        let mut c = LogicalClock::new(0.0, 0.0);
        c.anchor(&hw, 1.0, 3.0);
        assert_eq!(c.time_of(&hw, 3.0, 1.0), 1.0);

        let hw = HardwareClock::from_rates(&[(0.0, 1.0), (4.0, 2.0)]).unwrap();
        let c = LogicalClock::new(0.0, 0.0);
        assert_eq!(c.time_of(&hw, 10.0, 0.0), 7.0);
    }
}
