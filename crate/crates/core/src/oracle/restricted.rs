//! Sums over independent sets whose 2-linked pieces on one side are all
//! polymers. Membership in that family is inherited by subsets (closures are
//! monotone), so a depth-first search that adds vertices in increasing order
//! and stops at the first violation visits exactly the family.

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;

use super::SideHistogram;
use crate::error::{Error, Result};
use crate::exec::{map_collect, Exec};
use crate::lattice::{LayerGraph, Side};
use crate::scalar::{rat_pow, Fugacity};

/// Largest side handled by the restricted search (bitmask width).
pub const MAX_RESTRICTED_SIDE: usize = 64;
/// Largest side for the both-sides family, which nests two searches.
pub const MAX_BOTH_SIDES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RestrictedFamily {
    /// Independent sets whose part on this side has only polymer components.
    OneSide(Side),
    /// Independent sets that qualify on both sides at once.
    BothSides,
}

struct SideMasks {
    n: usize,
    nbr: Vec<u64>,
    /// For each opposite vertex, its neighbours on this side.
    rev: Vec<u64>,
}

impl SideMasks {
    fn new(g: &LayerGraph, side: Side, cap: usize) -> Result<Self> {
        g.require_middle()?;
        let n = g.side_size(side);
        if n > cap {
            return Err(Error::Scale(format!("restricted sum over a side of {n} vertices exceeds the cap of {cap}")));
        }
        let to_mask = |s: Side, u: u32| g.neighbors(s, u).iter().fold(0u64, |m, &w| m | 1 << w);
        let nbr = (0..n as u32).map(|u| to_mask(side, u)).collect();
        let rev = (0..n as u32).map(|w| to_mask(side.opposite(), w)).collect();
        Ok(SideMasks { n, nbr, rev })
    }

    /// Whether the set with neighbourhood `nmask` and `size` members has
    /// closure at most half the side. Both sides are d-regular, so counting
    /// edges gives |[S]| ≤ |N(S)|; otherwise [S] is the complement of the
    /// neighbourhood of the vertices outside N(S).
    fn small_closure(&self, size: u32, nmask: u64) -> bool {
        let limit = self.n / 2;
        let b = nmask.count_ones() as usize;
        if b <= limit {
            return true;
        }
        if size as usize > limit {
            return false;
        }
        let mut outside = full_mask(self.n) & !nmask;
        let mut reached = 0u64;
        while outside != 0 {
            reached |= self.rev[outside.trailing_zeros() as usize];
            outside &= outside - 1;
        }
        self.n - reached.count_ones() as usize <= limit
    }

    /// Visits (|A|, A, N(A)) for every A ⊆ `allowed` with smallest member
    /// `root` whose 2-linked components all have closure ≤ N/2.
    fn for_each_from(&self, root: usize, allowed: u64, visit: &mut impl FnMut(u32, u64, u64)) {
        if allowed >> root & 1 == 0 || !self.small_closure(1, self.nbr[root]) {
            return;
        }
        let mut comps = vec![(1u64 << root, self.nbr[root])];
        self.extend(allowed, root + 1, &mut comps, 0, 1, 1 << root, self.nbr[root], visit);
    }

    #[allow(clippy::too_many_arguments)]
    fn extend(
        &self,
        allowed: u64,
        next: usize,
        comps: &mut Vec<(u64, u64)>,
        lo: usize,
        size: u32,
        amask: u64,
        nmask: u64,
        visit: &mut impl FnMut(u32, u64, u64),
    ) {
        visit(size, amask, nmask);
        let hi = comps.len();
        let mut rest = if next >= 64 { 0 } else { allowed & (u64::MAX << next) };
        while rest != 0 {
            let v = rest.trailing_zeros() as usize;
            rest &= rest - 1;
            let nv = self.nbr[v];
            let (mut cv, mut cn) = (1u64 << v, nv);
            for &(x, y) in &comps[lo..hi] {
                if y & nv != 0 {
                    cv |= x;
                    cn |= y;
                }
            }
            if !self.small_closure(cv.count_ones(), cn) {
                continue;
            }
            for i in lo..hi {
                if comps[i].1 & nv == 0 {
                    comps.push(comps[i]);
                }
            }
            comps.push((cv, cn));
            self.extend(allowed, v + 1, comps, hi, size + 1, amask | 1 << v, nmask | nv, visit);
            comps.truncate(hi);
        }
    }
}

fn full_mask(n: usize) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1u64 << n) - 1
    }
}

/// Visits (|A|, A, N(A)) as bitmasks for every A ⊆ `side`, including ∅, whose
/// 2-linked components are all polymers.
pub(crate) fn for_each_polymer_subset(
    g: &LayerGraph,
    side: Side,
    cap: usize,
    visit: &mut impl FnMut(u32, u64, u64),
) -> Result<()> {
    let m = SideMasks::new(g, side, cap)?;
    visit(0, 0, 0);
    for root in 0..m.n {
        m.for_each_from(root, full_mask(m.n), visit);
    }
    Ok(())
}

/// counts[a][b] over sets A on `side` whose components are all polymers, with
/// a = |A| and b = |N(A)|.
pub fn polymer_subset_histogram(g: &LayerGraph, side: Side, exec: Exec) -> Result<SideHistogram> {
    let m = SideMasks::new(g, side, MAX_RESTRICTED_SIDE)?;
    let other = g.side_size(side.opposite());
    let roots: Vec<usize> = (0..m.n).collect();
    let parts = map_collect(exec, roots, |root| {
        let mut h = SideHistogram::new(m.n, other);
        m.for_each_from(root, full_mask(m.n), &mut |a, _, nm| h.add(a as usize, nm.count_ones() as usize, 1));
        h
    });
    let mut total = SideHistogram::new(m.n, other);
    total.add(0, 0, 1);
    for p in &parts {
        for a in 0..=m.n {
            for b in 0..=other {
                let c = p.get(a, b);
                if c != 0 {
                    total.add(a, b, c);
                }
            }
        }
    }
    Ok(total)
}

/// Counts by size of independent sets whose parts on both sides have only
/// polymer components.
pub fn both_sides_coefficients(g: &LayerGraph, exec: Exec) -> Result<Vec<BigUint>> {
    let up = SideMasks::new(g, Side::Upper, MAX_BOTH_SIDES)?;
    let low = SideMasks::new(g, Side::Lower, MAX_BOTH_SIDES)?;
    let total_n = up.n + low.n;
    let lower_full = full_mask(low.n);
    // the empty upper part, then every non-empty one by root
    let roots: Vec<Option<usize>> = std::iter::once(None).chain((0..up.n).map(Some)).collect();
    let parts = map_collect(exec, roots, |root| {
        let mut counts = vec![0u64; total_n + 1];
        let mut inner = |a: u32, nmask: u64| {
            let allowed = lower_full & !nmask;
            counts[a as usize] += 1;
            for r in 0..low.n {
                low.for_each_from(r, allowed, &mut |b, _, _| counts[(a + b) as usize] += 1);
            }
        };
        match root {
            None => inner(0, 0),
            Some(r) => up.for_each_from(r, full_mask(up.n), &mut |a, _, nm| inner(a, nm)),
        }
        counts
    });
    let mut counts = vec![0u64; total_n + 1];
    for p in parts {
        for (c, x) in counts.iter_mut().zip(p) {
            *c += x;
        }
    }
    while counts.len() > 1 && counts.last() == Some(&0) {
        counts.pop();
    }
    Ok(counts.into_iter().map(BigUint::from).collect())
}

/// Σ_I λ^{|I|} over the given family of independent sets.
pub fn restricted_sum(g: &LayerGraph, lambda: &Fugacity, family: RestrictedFamily, exec: Exec) -> Result<BigRational> {
    match family {
        RestrictedFamily::OneSide(side) => Ok(polymer_subset_histogram(g, side, exec)?.evaluate(lambda)),
        RestrictedFamily::BothSides => both_sides_sum(g, lambda, exec),
    }
}

pub fn both_sides_sum(g: &LayerGraph, lambda: &Fugacity, exec: Exec) -> Result<BigRational> {
    let coef = both_sides_coefficients(g, exec)?;
    let mut acc = BigRational::zero();
    for c in coef.iter().rev() {
        acc = acc * lambda.value() + BigRational::from_integer(c.clone().into());
    }
    Ok(acc)
}

/// The polymer partition function Ξ, from the one-sided restricted sum divided
/// by (1+λ)^N.
pub fn xi_exact(g: &LayerGraph, lambda: &Fugacity, exec: Exec) -> Result<BigRational> {
    let m = restricted_sum(g, lambda, RestrictedFamily::OneSide(Side::Upper), exec)?;
    Ok(m / rat_pow(&lambda.one_plus(), g.side_size(Side::Lower) as u32))
}
