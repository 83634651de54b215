use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lattice::{LayerGraph, Side};
use crate::scalar::{binomial, rational_to_f64};

/// Largest number of t-subsets the exact lower-bound sum will enumerate.
pub const EXAMPLE31_SUBSET_CAP: u64 = 100_000_000;

fn middle_n(d: u32) -> Result<BigUint> {
    if d < 2 {
        return Err(Error::Parameter(format!("d must be at least 2, got {d}")));
    }
    if d > 32 {
        return Err(Error::Parameter(format!("d must be at most 32, got {d}")));
    }
    Ok(binomial(2 * d as u64 - 1, d as u64))
}

/// The independent-set lower bound built from sparse upper sets.
#[derive(Debug, Clone)]
pub struct Example31 {
    pub d: u32,
    pub n_big: BigUint,
    /// N / 2^d rounded to the nearest integer, ties to even.
    pub t: u64,
    /// Σ over all t-subsets T of the upper side of 2^{N−|N(T)|}, when enumerable.
    pub exact_sum: Option<BigUint>,
    /// log₂ of 2·2^N·exp(N2^{−d} + ln2·C(d,2)N2^{−2d}), lower-order terms dropped.
    pub formula_log2: f64,
}

impl Example31 {
    pub fn to_json(&self) -> Value {
        json!({
            "d": self.d,
            "N": self.n_big.to_string(),
            "t": self.t,
            "exact_sum": self.exact_sum.as_ref().map(|s| s.to_string()),
            "exact_log2": self.exact_sum.as_ref().map(log2_big),
            "formula_log2": self.formula_log2,
            "formula_drops_lower_order_terms": true,
        })
    }
}

fn log2_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        return x.to_f64().unwrap().log2();
    }
    let shift = bits - 64;
    (x >> shift).to_f64().unwrap().log2() + shift as f64
}

/// round(N / 2^d) with ties to even.
fn rounded_t(n_big: &BigUint, d: u32) -> u64 {
    let den = BigUint::one() << d;
    let q = n_big / &den;
    let r = n_big % &den;
    let twice = r * 2u32;
    let q = q.to_u64().unwrap_or(u64::MAX);
    match twice.cmp(&den) {
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
        std::cmp::Ordering::Less => q,
    }
}

pub fn example31_lower_bound(d: u32) -> Result<Example31> {
    let n_big = middle_n(d)?;
    let t = rounded_t(&n_big, d);
    if t == 0 {
        return Err(Error::Regime(format!("N/2^d rounds to 0 at d = {d}")));
    }
    let nf = n_big.to_f64().unwrap();
    let df = d as f64;
    let first = nf / 2f64.powf(df);
    let second = df * (df - 1.0) / 2.0 * nf / 2f64.powf(2.0 * df);
    let formula_log2 = 1.0 + nf + first / std::f64::consts::LN_2 + second;
    let n = n_big.to_u64().unwrap_or(u64::MAX);
    let exact_sum = if n <= 64 && binomial(n, t) <= BigUint::from(EXAMPLE31_SUBSET_CAP) {
        Some(subset_sum(d, t as usize)?)
    } else {
        None
    };
    Ok(Example31 { d, n_big, t, exact_sum, formula_log2 })
}

fn subset_sum(d: u32, t: usize) -> Result<BigUint> {
    let g = LayerGraph::new(2 * d - 1, d)?;
    let n = g.side_size(Side::Upper);
    let nbr: Vec<u64> = (0..n as u32).map(|u| g.neighbors(Side::Upper, u).iter().fold(0u64, |m, &w| m | 1 << w)).collect();
    // by_boundary[b]: number of t-subsets with |N(T)| = b
    let mut by_boundary = vec![0u64; n + 1];
    fn rec(nbr: &[u64], start: usize, left: usize, acc: u64, out: &mut [u64]) {
        if left == 0 {
            out[acc.count_ones() as usize] += 1;
            return;
        }
        for v in start..=nbr.len() - left {
            rec(nbr, v + 1, left - 1, acc | nbr[v], out);
        }
    }
    rec(&nbr, 0, t, 0, &mut by_boundary);
    let mut total = BigUint::zero();
    for (b, &c) in by_boundary.iter().enumerate() {
        total += (BigUint::one() << (n - b)) * c;
    }
    Ok(total)
}

/// E|N(T)| for a uniform t-subset T of the upper side, exactly and in the
/// two-term approximation dt − C(d,2)t²/N.
#[derive(Debug, Clone)]
pub struct ExpectedBoundary {
    pub d: u32,
    pub t: u64,
    pub exact: BigRational,
    pub approx: f64,
}

impl ExpectedBoundary {
    pub fn to_json(&self) -> Value {
        json!({
            "d": self.d,
            "t": self.t,
            "exact": self.exact.to_string(),
            "exact_f64": rational_to_f64(&self.exact),
            "approx": self.approx,
        })
    }
}

/// A lower vertex is missed by T exactly when T avoids its d upper neighbours,
/// so E|N(T)| = N(1 − C(N−d,t)/C(N,t)).
pub fn expected_boundary(d: u32, t: u64) -> Result<ExpectedBoundary> {
    let n_big = middle_n(d)?;
    let n = n_big.to_u64().ok_or_else(|| Error::Scale(format!("N at d = {d} exceeds 64 bits")))?;
    if t > n {
        return Err(Error::Parameter(format!("t = {t} exceeds N = {n}")));
    }
    let miss = if t > n - d as u64 { BigUint::zero() } else { binomial(n - d as u64, t) };
    let frac = BigRational::new(miss.into(), binomial(n, t).into());
    let exact = BigRational::from_integer(n.into()) * (BigRational::one() - frac);
    let (df, tf, nf) = (d as f64, t as f64, n as f64);
    let approx = df * tf - df * (df - 1.0) / 2.0 * tf * tf / nf;
    Ok(ExpectedBoundary { d, t, exact, approx })
}

/// The asymptotic count of independent sets, 2·2^N·exp(N2^{−d} + C(d,2)N2^{−2d}),
/// with its pieces and the Stirling form of N.
#[derive(Debug, Clone)]
pub struct Theorem14 {
    pub d: u32,
    pub n_big: BigUint,
    pub log2_count: f64,
    /// N 2^{−d}.
    pub first: f64,
    /// C(d,2) N 2^{−2d}.
    pub second: f64,
    /// 2^{2d−1}/√(πd).
    pub stirling: f64,
}

impl Theorem14 {
    pub fn stirling_ratio(&self) -> f64 {
        self.n_big.to_f64().unwrap() / self.stirling
    }

    pub fn to_json(&self) -> Value {
        json!({
            "d": self.d,
            "N": self.n_big.to_string(),
            "log2_count": self.log2_count,
            "components": {
                "N": self.n_big.to_string(),
                "N_over_2_pow_d": self.first,
                "binom_d_2_N_over_4_pow_d": self.second,
            },
            "stirling_N": self.stirling,
            "stirling_ratio": self.stirling_ratio(),
            "drops_lower_order_terms": true,
        })
    }
}

pub fn theorem14_estimate(d: u32) -> Result<Theorem14> {
    let n_big = middle_n(d)?;
    let nf = n_big.to_f64().unwrap();
    let df = d as f64;
    let first = nf / 2f64.powf(df);
    let second = df * (df - 1.0) / 2.0 * nf / 2f64.powf(2.0 * df);
    let log2_count = 1.0 + nf + (first + second) / std::f64::consts::LN_2;
    let stirling = 2f64.powf(2.0 * df - 1.0) / (std::f64::consts::PI * df).sqrt();
    Ok(Theorem14 { d, n_big, log2_count, first, second, stirling })
}
