//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use ftgcs::cli::scenario::Scenario;
use ftgcs::metrics::{analyze, Analysis, AuditContext, RunData};
use ftgcs::params::ProtocolParams;
use ftgcs::world::simulate;

pub fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite input")
}

pub fn int(n: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn to_f64(x: &BigRational) -> f64 {
    x.to_f64().expect("representable")
}

/// Exact `(alpha, beta, E, theta_g, phi)` for the standard choice
/// `mu = c2 rho`, `phi = rho (1 + c2) / (1/2 - epsilon)`.
pub struct ExactParams {
    pub alpha: BigRational,
    pub beta: BigRational,
    pub e: BigRational,
    pub theta: BigRational,
    pub phi: BigRational,
}

pub fn exact_params(p: &ProtocolParams) -> ExactParams {
    let rho = q(p.rho);
    let c2 = q(p.c2);
    let half = BigRational::new(BigInt::one(), BigInt::from(2));
    let phi = &rho * (int(1) + &c2) / (half - q(p.epsilon));
    exact_for(p, rho, phi, c2)
}

/// Same as [`exact_params`] with explicit `rho`, `phi` and `mu = c2 rho`.
pub fn exact_for(p: &ProtocolParams, rho: BigRational, phi: BigRational, c2: BigRational) -> ExactParams {
    let one = int(1);
    let mu = &c2 * &rho;
    let theta = (&one + &rho) * (&one + &mu);
    let th2 = &theta * &theta;
    let alpha = (int(6) * &th2 * &phi + int(5) * &theta * &phi - int(9) * &phi + int(2) * &th2 - int(2))
        / (int(2) * &phi * (&theta + &one));
    let beta = (int(3) * &theta - &one + (&theta - &one) / &phi) * q(p.u) + (&theta - &one) * q(p.d);
    let e = &beta / (&one - &alpha);
    ExactParams { alpha, beta, e, theta, phi }
}

/// Exact `P[more than f of 3f+1 nodes faulty]` for independent faults.
pub fn exact_failure_probability(f: u32, p: f64) -> BigRational {
    let n = 3 * f + 1;
    let p = q(p);
    let q1 = int(1) - &p;
    let mut sum = BigRational::zero();
    for i in f + 1..=n {
        let binom = binomial(n, i);
        sum += BigRational::from_integer(binom) * pow(&p, i) * pow(&q1, n - i);
    }
    sum
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut b = BigInt::one();
    for j in 0..k {
        b = b * BigInt::from(n - j) / BigInt::from(j + 1);
    }
    b
}

fn pow(x: &BigRational, e: u32) -> BigRational {
    let mut r = int(1);
    for _ in 0..e {
        r *= x;
    }
    r
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Runs a scenario in memory and audits it.
pub fn run(s: &Scenario) -> (RunData, AuditContext, Analysis) {
    let prepared = s.prepare().expect("scenario prepares");
    let data = simulate(prepared.world).expect("simulation succeeds");
    let analysis = analyze(&data, &prepared.context);
    (data, prepared.context, analysis)
}

pub fn parse(text: &str) -> Scenario {
    Scenario::parse(text).expect("valid scenario")
}
