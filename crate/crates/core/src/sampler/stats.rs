use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde_json::{json, Value};

use super::{exact_hardcore_table, IndSet, MuHatSampler, SampleRun};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::lattice::{LayerGraph, Side};
use crate::oracle::both_sides_sum;
use crate::scalar::{binomial, rat_pow, Fugacity};

/// Total variation between μ̂ and the hard-core measure, and the mass of the
/// both-sides family under the normalisation 2(1+λ)^N Ξ.
#[derive(Debug, Clone)]
pub struct TvReport {
    pub tv: BigRational,
    pub b_mass: BigRational,
    /// Σ_{I ∈ 𝓑} λ^{|I|}.
    pub b_sum: BigRational,
    pub xi: BigRational,
}

impl TvReport {
    pub fn to_json(&self) -> Value {
        json!({
            "tv": self.tv.to_string(),
            "b_mass": self.b_mass.to_string(),
            "b_sum": self.b_sum.to_string(),
            "xi": self.xi.to_string(),
        })
    }
}

pub fn tv_distance(g: &LayerGraph, lambda: &Fugacity) -> Result<TvReport> {
    let sampler = MuHatSampler::new(g, lambda)?;
    let hat = sampler.analytic_table();
    let hc = exact_hardcore_table(g, lambda)?;
    let mut tv = BigRational::zero();
    let mut seen = 0usize;
    for (s, mu) in &hc.entries {
        match hat.get(s) {
            Some(h) => {
                tv += (h - mu).abs();
                seen += 1;
            }
            None => tv += mu,
        }
    }
    if seen != hat.len() {
        return Err(Error::Parameter("the μ̂ support contains a set that is not independent".into()));
    }
    tv /= BigRational::from_integer(BigInt::from(2));
    let xi = sampler.upper.xi.clone();
    let b_sum = both_sides_sum(g, lambda, Exec::default())?;
    let norm = BigRational::from_integer(BigInt::from(2)) * rat_pow(&lambda.one_plus(), g.side_size(Side::Upper) as u32) * &xi;
    Ok(TvReport { tv, b_mass: &b_sum / norm, b_sum, xi })
}

/// How often the minority side differs from the defect side in a μ̂ run.
#[derive(Debug, Clone)]
pub struct MinorityStats {
    pub samples: usize,
    pub rate_minority_ne_defect: f64,
    /// Mean of ‖Λ‖ / N.
    pub mean_config_fraction: f64,
    /// 2 exp(−N/d⁵), the asymptotic bound on the rate.
    pub rate_bound: f64,
    /// 1/d², the asymptotic bound on ‖Λ‖/N.
    pub size_bound: f64,
}

impl MinorityStats {
    pub fn to_json(&self) -> Value {
        json!({
            "samples": self.samples,
            "rate_minority_ne_defect": self.rate_minority_ne_defect,
            "mean_config_fraction": self.mean_config_fraction,
            "reference_rate_bound": self.rate_bound,
            "reference_size_bound": self.size_bound,
            "bounds_are_asymptotic": true,
        })
    }
}

pub fn minority_defect_stats(run: &SampleRun) -> Result<MinorityStats> {
    if run.records.is_empty() {
        return Err(Error::Parameter("sample run is empty".into()));
    }
    let d = run.d as f64;
    let n = binomial(2 * run.d as u64 - 1, run.d as u64);
    let nf = n.to_f64().unwrap_or(f64::INFINITY);
    let count = run.records.len();
    let differ = run.records.iter().filter(|r| r.minority != r.defect).count();
    let size: f64 = run.records.iter().map(|r| r.config_size as f64 / nf).sum();
    Ok(MinorityStats {
        samples: count,
        rate_minority_ne_defect: differ as f64 / count as f64,
        mean_config_fraction: size / count as f64,
        rate_bound: 2.0 * (-nf / d.powi(5)).exp(),
        size_bound: 1.0 / (d * d),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CensusMode {
    /// Every independent set weighted by the hard-core measure.
    Exact,
    /// μ̂ samples, a stand-in for the hard-core measure.
    Sampled { seed: u64, count: u64 },
}

/// Mass of each (largest upper component, largest lower component) profile.
#[derive(Debug, Clone)]
pub struct Census {
    pub mode: CensusMode,
    pub profiles: BTreeMap<(u32, u32), BigRational>,
    /// Sample counts per profile in sampled mode.
    pub counts: Option<BTreeMap<(u32, u32), u64>>,
    /// Mass of sets with some side whose 2-linked components have size ≤ 2.
    pub property_fraction: BigRational,
}

impl Census {
    pub fn to_json(&self) -> Value {
        let profiles: Vec<Value> = self
            .profiles
            .iter()
            .map(|(&(u, l), mass)| {
                let mut v = json!({ "max_comp_upper": u, "max_comp_lower": l, "mass": mass.to_string() });
                if let Some(c) = &self.counts {
                    v["count"] = json!(c[&(u, l)]);
                }
                v
            })
            .collect();
        let mode = match self.mode {
            CensusMode::Exact => json!({ "kind": "exact" }),
            CensusMode::Sampled { seed, count } => json!({ "kind": "sampled", "seed": seed, "count": count, "proxy_measure": "mu_hat" }),
        };
        json!({ "mode": mode, "profiles": profiles, "property_fraction": self.property_fraction.to_string() })
    }
}

/// Size of the largest 2-linked component of `mask` on `side`.
fn largest_component(square: &[u64], mut mask: u64) -> u32 {
    let mut best = 0;
    while mask != 0 {
        let start = mask & mask.wrapping_neg();
        let mut comp = start;
        let mut frontier = start;
        while frontier != 0 {
            let v = frontier.trailing_zeros() as usize;
            frontier &= frontier - 1;
            let fresh = square[v] & mask & !comp;
            comp |= fresh;
            frontier |= fresh;
        }
        best = best.max(comp.count_ones());
        mask &= !comp;
    }
    best
}

fn profile(squares: &[Vec<u64>; 2], s: &IndSet) -> (u32, u32) {
    (largest_component(&squares[0], s.upper), largest_component(&squares[1], s.lower))
}

fn has_property(p: (u32, u32)) -> bool {
    p.0 <= 2 || p.1 <= 2
}

pub fn structure_census(g: &LayerGraph, lambda: &Fugacity, mode: CensusMode) -> Result<Census> {
    g.require_middle()?;
    let n = g.side_size(Side::Upper);
    if n > 64 {
        return Err(Error::Scale(format!("census needs sides of at most 64 vertices, got {n}")));
    }
    let squares = [Side::Upper, Side::Lower]
        .map(|side| (0..n as u32).map(|v| g.square_neighbors(side, v).iter().fold(0u64, |m, &w| m | 1 << w)).collect());
    let mut profiles: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
    let mut counts = None;
    match mode {
        CensusMode::Exact => {
            for (s, mu) in exact_hardcore_table(g, lambda)?.entries {
                *profiles.entry(profile(&squares, &s)).or_insert_with(BigRational::zero) += mu;
            }
        }
        CensusMode::Sampled { seed, count } => {
            if count == 0 {
                return Err(Error::Parameter("sampled census needs at least one sample".into()));
            }
            let sampler = MuHatSampler::new(g, lambda)?;
            let d = g.middle_d().unwrap();
            let run = SampleRun::generate(&sampler, d, seed, count, Exec::default());
            let mut c: BTreeMap<(u32, u32), u64> = BTreeMap::new();
            for r in &run.records {
                *c.entry(profile(&squares, &r.set)).or_default() += 1;
            }
            for (&p, &k) in &c {
                profiles.insert(p, BigRational::new(k.into(), count.into()));
            }
            counts = Some(c);
        }
    }
    let property_fraction =
        profiles.iter().filter(|(p, _)| has_property(**p)).fold(BigRational::zero(), |a, (_, m)| a + m);
    Ok(Census { mode, profiles, counts, property_fraction })
}
