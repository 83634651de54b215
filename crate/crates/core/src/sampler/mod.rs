//! The polymer measure ν, the three-step measure μ̂ built from it, and the
//! exact hard-core measure they approximate, all at desk scale.

mod stats;

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{map_collect, Exec};
use crate::lattice::{IdSet, LayerGraph, Side, VertexSet};
use crate::oracle::for_each_polymer_subset;
use crate::polymer::Polymer;
use crate::scalar::{rat_pow, rational_to_f64, Fugacity};

pub use stats::{minority_defect_stats, structure_census, tv_distance, Census, CensusMode, MinorityStats, TvReport};

/// Largest side for which the exact tables are built.
pub const MAX_TABLE_SIDE: usize = 20;

/// A set of pairwise compatible polymers on one side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolymerConfig {
    pub side: Side,
    pub polymers: Vec<Polymer>,
    /// ‖Λ‖ = Σ |S|.
    pub total_size: u32,
    /// N(Λ).
    pub boundary: IdSet,
}

impl PolymerConfig {
    pub fn empty(g: &LayerGraph, side: Side) -> Self {
        PolymerConfig {
            side,
            polymers: Vec::new(),
            total_size: 0,
            boundary: IdSet::new(g.side_size(side.opposite())),
        }
    }

    /// Fails with a parameter error when polymers are on the wrong side or
    /// two of them are incompatible.
    pub fn new(g: &LayerGraph, side: Side, mut polymers: Vec<Polymer>) -> Result<Self> {
        polymers.sort();
        for (i, p) in polymers.iter().enumerate() {
            if p.side() != side {
                return Err(Error::Parameter("polymer on the wrong side for this configuration".into()));
            }
            if polymers[i + 1..].iter().any(|q| q.incompatible_with(p)) {
                return Err(Error::Parameter("configuration contains incompatible polymers".into()));
            }
        }
        let mut boundary = IdSet::new(g.side_size(side.opposite()));
        for p in &polymers {
            boundary.union_with(p.boundary());
        }
        let total_size = polymers.iter().map(Polymer::size).sum();
        Ok(PolymerConfig { side, polymers, total_size, boundary })
    }

    /// The union of the polymers.
    pub fn vertex_set(&self, g: &LayerGraph) -> VertexSet {
        VertexSet::from_ids(g, self.side, self.polymers.iter().flat_map(|p| p.members().iter().copied()))
    }

    pub fn to_json(&self, g: &LayerGraph) -> Value {
        json!(self.polymers.iter().map(|p| p.vertex_set(g).to_json(g)["members"].clone()).collect::<Vec<_>>())
    }
}

/// ν on one side: every configuration with its exact probability.
#[derive(Debug, Clone)]
pub struct NuTable {
    pub side: Side,
    pub lambda: Fugacity,
    /// The polymer partition function Ξ.
    pub xi: BigRational,
    pub entries: Vec<(PolymerConfig, BigRational)>,
    cdf: Vec<f64>,
}

impl NuTable {
    /// Inverse-CDF draw from a uniform `u` in [0, 1).
    pub fn pick(&self, u: f64) -> usize {
        self.cdf.partition_point(|&c| c <= u).min(self.entries.len() - 1)
    }
}

fn check_table_scale(g: &LayerGraph) -> Result<()> {
    g.require_middle()?;
    let n = g.side_size(Side::Upper);
    if n > MAX_TABLE_SIDE {
        return Err(Error::Scale(format!("exact tables need sides of at most {MAX_TABLE_SIDE} vertices, got {n}")));
    }
    Ok(())
}

/// ν(Λ) = λ^{‖Λ‖} (1+λ)^{−|N(Λ)|} / Ξ over all configurations on `side`.
pub fn exact_nu_table(g: &LayerGraph, lambda: &Fugacity, side: Side) -> Result<NuTable> {
    check_table_scale(g)?;
    let mut sets = Vec::new();
    for_each_polymer_subset(g, side, MAX_TABLE_SIDE, &mut |_, amask, _| sets.push(amask))?;
    sets.sort_unstable_by_key(|&m| (m.count_ones(), m));
    let mut entries = Vec::with_capacity(sets.len());
    let mut xi = BigRational::zero();
    for mask in sets {
        let s = VertexSet::from_ids(g, side, (0..64).filter(|i| mask >> i & 1 == 1));
        let polymers =
            g.two_linked_components(&s).iter().map(|c| Polymer::new(g, c)).collect::<Result<Vec<_>>>()?;
        let config = PolymerConfig::new(g, side, polymers)?;
        let w = lambda.weight(config.total_size, config.boundary.len() as u32);
        xi += &w;
        entries.push((config, w));
    }
    for e in &mut entries {
        e.1 = &e.1 / &xi;
    }
    let mut acc = 0.0;
    let cdf = entries
        .iter()
        .map(|(_, p)| {
            acc += rational_to_f64(p);
            acc
        })
        .collect();
    Ok(NuTable { side, lambda: lambda.clone(), xi, entries, cdf })
}

/// An independent set as bitmasks over the two sides' ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct IndSet {
    pub upper: u64,
    pub lower: u64,
}

impl IndSet {
    pub fn len(&self) -> u32 {
        self.upper.count_ones() + self.lower.count_ones()
    }

    pub fn is_empty(&self) -> bool {
        self.upper == 0 && self.lower == 0
    }

    pub fn side_mask(&self, side: Side) -> u64 {
        match side {
            Side::Upper => self.upper,
            Side::Lower => self.lower,
        }
    }

    /// No edge between the two parts.
    pub fn is_independent(&self, g: &LayerGraph) -> bool {
        bits(self.upper).all(|u| g.neighbors(Side::Upper, u).iter().all(|&w| self.lower >> w & 1 == 0))
    }

    /// The minority side: Lower when |I ∩ Upper| ≤ |I ∩ Lower|, else Upper.
    pub fn minority(&self) -> Side {
        if self.upper.count_ones() <= self.lower.count_ones() {
            Side::Lower
        } else {
            Side::Upper
        }
    }

    pub fn to_json(&self, g: &LayerGraph) -> Value {
        let names = |side: Side, m: u64| bits(m).map(|i| g.vertex(side, i).to_string()).collect::<Vec<_>>();
        json!({ "upper": names(Side::Upper, self.upper), "lower": names(Side::Lower, self.lower) })
    }
}

pub(crate) fn bits(mut m: u64) -> impl Iterator<Item = u32> {
    std::iter::from_fn(move || {
        if m == 0 {
            return None;
        }
        let i = m.trailing_zeros();
        m &= m - 1;
        Some(i)
    })
}

fn mask_of(ids: impl Iterator<Item = u32>) -> u64 {
    ids.fold(0, |m, i| m | 1 << i)
}

/// The hard-core measure μ(I) = λ^{|I|}/Z over all independent sets.
#[derive(Debug, Clone)]
pub struct HardcoreTable {
    pub z: BigRational,
    pub entries: Vec<(IndSet, BigRational)>,
}

pub fn exact_hardcore_table(g: &LayerGraph, lambda: &Fugacity) -> Result<HardcoreTable> {
    check_table_scale(g)?;
    let n = g.side_size(Side::Upper);
    let nbr: Vec<u64> = (0..n as u32).map(|u| mask_of(g.neighbors(Side::Upper, u).iter().copied())).collect();
    let full = (1u64 << n) - 1;
    let mut sets = Vec::new();
    for upper in 0..=full {
        let covered = bits(upper).fold(0, |m, u| m | nbr[u as usize]);
        let free = full & !covered;
        // all subsets of the free lower vertices
        let mut sub = free;
        loop {
            sets.push(IndSet { upper, lower: sub });
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & free;
        }
    }
    sets.sort_unstable_by_key(|s| (s.len(), *s));
    let mut z = BigRational::zero();
    let mut pow = vec![BigRational::one()];
    for i in 1..=2 * n {
        let next = &pow[i - 1] * lambda.value();
        pow.push(next);
    }
    for s in &sets {
        z += &pow[s.len() as usize];
    }
    let entries = sets.into_iter().map(|s| (s, &pow[s.len() as usize] / &z)).collect();
    Ok(HardcoreTable { z, entries })
}

/// Both ν tables and the fill probability λ/(1+λ).
#[derive(Debug, Clone)]
pub struct MuHatSampler {
    pub lambda: Fugacity,
    pub upper: NuTable,
    pub lower: NuTable,
    side_size: usize,
    nbr: [Vec<u64>; 2],
    fill: f64,
}

/// One draw of μ̂.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleRecord {
    pub index: u64,
    pub defect: Side,
    /// Index of Λ in the defect side's ν table.
    pub config: usize,
    pub config_size: u32,
    pub set: IndSet,
    pub minority: Side,
}

impl MuHatSampler {
    pub fn new(g: &LayerGraph, lambda: &Fugacity) -> Result<Self> {
        let upper = exact_nu_table(g, lambda, Side::Upper)?;
        let lower = exact_nu_table(g, lambda, Side::Lower)?;
        let n = g.side_size(Side::Upper);
        let nbr = [Side::Upper, Side::Lower].map(|s| (0..n as u32).map(|u| mask_of(g.neighbors(s, u).iter().copied())).collect());
        let fill = rational_to_f64(&(lambda.value() / lambda.one_plus()));
        Ok(MuHatSampler { lambda: lambda.clone(), upper, lower, side_size: n, nbr, fill })
    }

    pub fn table(&self, side: Side) -> &NuTable {
        match side {
            Side::Upper => &self.upper,
            Side::Lower => &self.lower,
        }
    }

    /// Sample `index` of the run seeded by `seed`: ChaCha8 seeded with `seed`,
    /// on stream `index`. Draws the defect side, then Λ by inverse CDF, then one
    /// fill decision per free vertex of the other side in increasing id order.
    pub fn sample(&self, seed: u64, index: u64) -> SampleRecord {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        let defect = if rng.gen::<bool>() { Side::Upper } else { Side::Lower };
        let table = self.table(defect);
        let config = table.pick(rng.gen::<f64>());
        let (lambda_cfg, _) = &table.entries[config];
        let defect_mask = mask_of(lambda_cfg.polymers.iter().flat_map(|p| p.members().iter().copied()));
        let blocked = mask_of(lambda_cfg.boundary.iter());
        let mut other = 0u64;
        for v in 0..self.side_size as u32 {
            if blocked >> v & 1 == 0 && rng.gen_bool(self.fill) {
                other |= 1 << v;
            }
        }
        let set = match defect {
            Side::Upper => IndSet { upper: defect_mask, lower: other },
            Side::Lower => IndSet { upper: other, lower: defect_mask },
        };
        SampleRecord { index, defect, config, config_size: lambda_cfg.total_size, set, minority: set.minority() }
    }

    /// μ̂ as an exact table, summing over defect side, Λ and the fill.
    pub fn analytic_table(&self) -> HashMap<IndSet, BigRational> {
        let half = BigRational::new(BigInt::one(), BigInt::from(2));
        let op = self.lambda.one_plus();
        let p_in = self.lambda.value() / &op;
        let p_out = BigRational::one() / &op;
        let mut out: HashMap<IndSet, BigRational> = HashMap::new();
        for defect in [Side::Upper, Side::Lower] {
            for (cfg, nu) in &self.table(defect).entries {
                let dm = mask_of(cfg.polymers.iter().flat_map(|p| p.members().iter().copied()));
                let free = ((1u64 << self.side_size) - 1) & !mask_of(cfg.boundary.iter());
                let r = free.count_ones();
                let base = &half * nu;
                let mut sub = free;
                loop {
                    let k = sub.count_ones();
                    let p = &base * rat_pow(&p_in, k) * rat_pow(&p_out, r - k);
                    let set = match defect {
                        Side::Upper => IndSet { upper: dm, lower: sub },
                        Side::Lower => IndSet { upper: sub, lower: dm },
                    };
                    *out.entry(set).or_insert_with(BigRational::zero) += p;
                    if sub == 0 {
                        break;
                    }
                    sub = (sub - 1) & free;
                }
            }
        }
        out
    }

    /// Whether every edge of the graph avoids the set.
    pub fn is_valid(&self, s: &IndSet) -> bool {
        bits(s.upper).all(|u| self.nbr[0][u as usize] & s.lower == 0)
    }
}

/// One μ̂ draw with the default stream (index 0).
pub fn sample_mu_hat(g: &LayerGraph, lambda: &Fugacity, seed: u64) -> Result<IndSet> {
    Ok(MuHatSampler::new(g, lambda)?.sample(seed, 0).set)
}

/// A reproducible batch of μ̂ samples.
#[derive(Debug, Clone)]
pub struct SampleRun {
    pub seed: u64,
    pub d: u32,
    pub lambda: Fugacity,
    pub records: Vec<SampleRecord>,
}

impl SampleRun {
    pub fn generate(sampler: &MuHatSampler, d: u32, seed: u64, count: u64, exec: Exec) -> SampleRun {
        let records = map_collect(exec, (0..count).collect(), |i| sampler.sample(seed, i));
        SampleRun { seed, d, lambda: sampler.lambda.clone(), records }
    }

    /// One JSON object per line, in sample order.
    pub fn to_jsonl(&self, g: &LayerGraph, sampler: &MuHatSampler) -> String {
        let mut out = String::new();
        for r in &self.records {
            let cfg = &sampler.table(r.defect).entries[r.config].0;
            let line = json!({
                "index": r.index,
                "defect": r.defect.name(),
                "config": cfg.to_json(g),
                "config_size": r.config_size,
                "set": r.set.to_json(g),
                "minority": r.minority.name(),
            });
            out.push_str(&serde_json::to_string(&line).unwrap());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn nu_on_the_hexagon() {
        let g = LayerGraph::new(3, 2).unwrap();
        let t = exact_nu_table(&g, &Fugacity::one(), Side::Upper).unwrap();
        assert_eq!(t.xi, q(7, 4));
        let probs: Vec<_> = t.entries.iter().map(|e| e.1.clone()).collect();
        assert_eq!(probs, vec![q(4, 7), q(1, 7), q(1, 7), q(1, 7)]);
        assert!(t.entries[0].0.polymers.is_empty());
        assert_eq!(t.pick(0.0), 0);
        assert_eq!(t.pick(0.99999), 3);
    }

    #[test]
    fn nu_sums_to_one() {
        let g = LayerGraph::new(5, 3).unwrap();
        for side in [Side::Upper, Side::Lower] {
            let t = exact_nu_table(&g, &Fugacity::from_ratio(3, 2).unwrap(), side).unwrap();
            let total = t.entries.iter().fold(BigRational::zero(), |a, e| a + &e.1);
            assert_eq!(total, BigRational::one());
            for (c, _) in &t.entries {
                assert!(PolymerConfig::new(&g, side, c.polymers.clone()).is_ok());
            }
        }
        let t = exact_nu_table(&g, &Fugacity::from_ratio(1, 1_000_000).unwrap(), Side::Upper).unwrap();
        assert!(rational_to_f64(&t.entries[0].1) > 0.9999);
    }

    #[test]
    fn incompatible_config_rejected() {
        let g = LayerGraph::new(3, 2).unwrap();
        let p = |s: &str| Polymer::new(&g, &VertexSet::parse(&g, Side::Upper, &[s]).unwrap()).unwrap();
        assert!(PolymerConfig::new(&g, Side::Upper, vec![p("1,2"), p("1,3")]).is_err());
    }

    #[test]
    fn hardcore_tables() {
        let g = LayerGraph::new(3, 2).unwrap();
        let t = exact_hardcore_table(&g, &Fugacity::one()).unwrap();
        assert_eq!(t.entries.len(), 18);
        assert!(t.entries.iter().all(|e| e.1 == q(1, 18) && e.0.is_independent(&g)));
        let t = exact_hardcore_table(&g, &Fugacity::from_ratio(2, 1).unwrap()).unwrap();
        assert_eq!(t.z, q(65, 1));
        assert_eq!(t.entries[0].1, q(1, 65));
    }

    #[test]
    fn analytic_mu_hat_on_the_hexagon() {
        let g = LayerGraph::new(3, 2).unwrap();
        let s = MuHatSampler::new(&g, &Fugacity::one()).unwrap();
        let t = s.analytic_table();
        assert_eq!(t.len(), 18);
        assert_eq!(t.values().fold(BigRational::zero(), |a, b| a + b), BigRational::one());
        for (set, p) in &t {
            let expect = match (set.upper.count_ones(), set.lower.count_ones()) {
                (0, 0) | (1, 0) | (0, 1) | (1, 1) => q(1, 14),
                (2, 0) | (0, 2) | (3, 0) | (0, 3) => q(1, 28),
                other => panic!("unexpected shape {other:?}"),
            };
            assert_eq!(p, &expect, "{set:?}");
        }
    }

    #[test]
    fn samples_are_reproducible_and_independent() {
        let g = LayerGraph::new(5, 3).unwrap();
        let s = MuHatSampler::new(&g, &Fugacity::one()).unwrap();
        let a = SampleRun::generate(&s, 3, 42, 500, Exec::Parallel);
        let b = SampleRun::generate(&s, 3, 42, 500, Exec::Sequential);
        assert_eq!(a.records, b.records);
        assert_eq!(a.to_jsonl(&g, &s), b.to_jsonl(&g, &s));
        assert!(a.records.iter().all(|r| r.set.is_independent(&g) && s.is_valid(&r.set)));
        let c = SampleRun::generate(&s, 3, 43, 500, Exec::Parallel);
        assert_ne!(a.records, c.records);
        assert_eq!(sample_mu_hat(&g, &Fugacity::one(), 42).unwrap(), a.records[0].set);
    }

    #[test]
    fn minority_tie_goes_to_lower() {
        assert_eq!(IndSet { upper: 0, lower: 0 }.minority(), Side::Lower);
        assert_eq!(IndSet { upper: 1, lower: 1 }.minority(), Side::Lower);
        assert_eq!(IndSet { upper: 3, lower: 1 }.minority(), Side::Upper);
    }

    #[test]
    fn too_large_for_tables() {
        let g = LayerGraph::new(7, 4).unwrap();
        assert!(matches!(exact_nu_table(&g, &Fugacity::one(), Side::Upper), Err(Error::Scale(_))));
        assert!(matches!(exact_hardcore_table(&g, &Fugacity::one()), Err(Error::Scale(_))));
    }
}
