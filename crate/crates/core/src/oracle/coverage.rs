use crate::lattice::{LayerGraph, Side};

/// Membership of a set A on one side together with, for every vertex on the
/// other side, how many members of A it is adjacent to. |N(A)| is read off in
/// O(1) and each toggle costs one update per neighbour.
#[derive(Debug, Clone)]
pub struct CoverageCounter {
    degree: usize,
    adj: Vec<u32>,
    member: Vec<bool>,
    hits: Vec<u8>,
    size: usize,
    covered: usize,
    /// N(A) as a bitset over the other side.
    cover_bits: Vec<u64>,
}

impl CoverageCounter {
    /// An empty set on `side`.
    pub fn new(g: &LayerGraph, side: Side) -> Self {
        let n = g.side_size(side);
        let degree = if n == 0 { 0 } else { g.degree(side, 0) };
        let mut adj = Vec::with_capacity(n * degree);
        for v in 0..n as u32 {
            adj.extend_from_slice(g.neighbors(side, v));
        }
        CoverageCounter {
            degree,
            adj,
            member: vec![false; n],
            hits: vec![0; g.side_size(side.opposite())],
            size: 0,
            covered: 0,
            cover_bits: vec![0; g.side_size(side.opposite()).div_ceil(64)],
        }
    }

    /// Flips `u` in or out of A and returns whether it is now a member.
    #[inline]
    pub fn toggle(&mut self, u: u32) -> bool {
        let u = u as usize;
        let nbrs = &self.adj[u * self.degree..(u + 1) * self.degree];
        if self.member[u] {
            self.member[u] = false;
            self.size -= 1;
            for &w in nbrs {
                let h = &mut self.hits[w as usize];
                *h -= 1;
                if *h == 0 {
                    self.covered -= 1;
                    self.cover_bits[w as usize / 64] &= !(1 << (w % 64));
                }
            }
            false
        } else {
            self.member[u] = true;
            self.size += 1;
            for &w in nbrs {
                let h = &mut self.hits[w as usize];
                if *h == 0 {
                    self.covered += 1;
                    self.cover_bits[w as usize / 64] |= 1 << (w % 64);
                }
                *h += 1;
            }
            true
        }
    }

    pub fn contains(&self, u: u32) -> bool {
        self.member[u as usize]
    }

    /// |A|.
    pub fn size(&self) -> usize {
        self.size
    }

    /// |N(A)|.
    pub fn covered(&self) -> usize {
        self.covered
    }

    /// N(A) as bitset words over the other side's ids.
    pub fn cover_bits(&self) -> &[u64] {
        &self.cover_bits
    }

    pub fn uncovered(&self) -> usize {
        self.hits.len() - self.covered
    }

    /// |N(A)| recomputed from the membership vector alone.
    pub fn recount(&self) -> usize {
        let mut seen = vec![false; self.hits.len()];
        for (u, _) in self.member.iter().enumerate().filter(|(_, m)| **m) {
            for &w in &self.adj[u * self.degree..(u + 1) * self.degree] {
                seen[w as usize] = true;
            }
        }
        seen.iter().filter(|s| **s).count()
    }
}
