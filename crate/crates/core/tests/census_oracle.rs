//! The structure census recomputed from scratch: independent sets by direct
//! enumeration, components by a breadth-first search on the square graph.

use std::collections::{BTreeMap, VecDeque};

use midlayer::sampler::{structure_census, CensusMode};
use midlayer::scalar::rat_pow;
use midlayer::{Fugacity, LayerGraph, Side};
use num_rational::BigRational;
use num_traits::Zero;

fn masks(g: &LayerGraph, side: Side) -> Vec<u64> {
    (0..g.side_size(side) as u32).map(|u| g.neighbors(side, u).iter().fold(0, |m, &w| m | 1u64 << w)).collect()
}

/// Largest component of `set` where u, v are joined when they share a neighbour.
fn largest(nbr: &[u64], set: u64) -> u32 {
    let members: Vec<usize> = (0..nbr.len()).filter(|&u| set >> u & 1 == 1).collect();
    let mut seen = vec![false; nbr.len()];
    let mut best = 0;
    for &s in &members {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut size = 0;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            size += 1;
            for &v in &members {
                if !seen[v] && nbr[u] & nbr[v] != 0 {
                    seen[v] = true;
                    queue.push_back(v);
                }
            }
        }
        best = best.max(size);
    }
    best
}

fn census(d: u32, lambda: &Fugacity) -> (BTreeMap<(u32, u32), BigRational>, BigRational) {
    let g = LayerGraph::new(2 * d - 1, d).unwrap();
    let n = g.side_size(Side::Upper);
    let up = masks(&g, Side::Upper);
    let low = masks(&g, Side::Lower);
    let mut weights: BTreeMap<(u32, u32), BigRational> = BTreeMap::new();
    let mut z = BigRational::zero();
    for a in 0u64..1 << n {
        let blocked = (0..n).filter(|&u| a >> u & 1 == 1).fold(0, |m, u| m | up[u]);
        let free = !blocked & ((1u64 << n) - 1);
        let mut b = free;
        loop {
            let w = rat_pow(lambda.value(), a.count_ones() + b.count_ones());
            z += &w;
            *weights.entry((largest(&up, a), largest(&low, b))).or_insert_with(BigRational::zero) += w;
            if b == 0 {
                break;
            }
            b = (b - 1) & free;
        }
    }
    let mut good = BigRational::zero();
    for (p, w) in weights.iter_mut() {
        *w /= &z;
        if p.0 <= 2 || p.1 <= 2 {
            good += &*w;
        }
    }
    (weights, good)
}

#[test]
fn exact_census_matches_direct_enumeration() {
    for d in [2, 3] {
        for lambda in [Fugacity::one(), Fugacity::from_ratio(1, 3).unwrap(), Fugacity::from_ratio(5, 2).unwrap()] {
            let g = LayerGraph::new(2 * d - 1, d).unwrap();
            let lib = structure_census(&g, &lambda, CensusMode::Exact).unwrap();
            let (profiles, fraction) = census(d, &lambda);
            assert_eq!(lib.profiles, profiles, "d={d} λ={lambda}");
            assert_eq!(lib.property_fraction, fraction, "d={d} λ={lambda}");
        }
    }
}

#[test]
fn pinned_fractions() {
    let one = Fugacity::one();
    assert_eq!(census(2, &one).1, BigRational::from_integer(1.into()));
    assert_eq!(census(3, &one).1, BigRational::new(6017.into(), 6212.into()));
}
