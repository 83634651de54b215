//! The bipartite graph B(n,k) on the k-th and (k-1)-th layers of the Boolean
//! lattice, with neighbourhoods, closures and 2-linked components.

mod checks;
mod idset;
pub(crate) mod search;

use std::collections::HashMap;
use std::fmt;
use std::ops::ControlFlow;

use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::binomial_u64;

pub use checks::{enumerate_two_linked_containing, isoperimetry_check, IsoBudget, IsoMode, IsoReport, LinkedCount};
pub use idset::IdSet;
pub use search::ConnectedSearch;

/// Largest side we are willing to materialise.
const MAX_SIDE: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    /// The layer of k-subsets.
    Upper,
    /// The layer of (k-1)-subsets.
    Lower,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Upper => Side::Lower,
            Side::Lower => Side::Upper,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Side::Upper => "upper",
            Side::Lower => "lower",
        }
    }

    fn idx(self) -> usize {
        self as usize
    }
}

impl std::str::FromStr for Side {
    type Err = Error;
    fn from_str(s: &str) -> Result<Side> {
        match s {
            "upper" => Ok(Side::Upper),
            "lower" => Ok(Side::Lower),
            _ => Err(Error::Parameter(format!("unknown side '{s}'"))),
        }
    }
}

/// A subset of the ground set `[n]`; element `i` is bit `i - 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Vertex {
    pub bits: u64,
    pub side: Side,
}

impl fmt::Display for Vertex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        let mut first = true;
        let mut b = self.bits;
        while b != 0 {
            if !first {
                f.write_str(",")?;
            }
            write!(f, "{}", b.trailing_zeros() + 1)?;
            first = false;
            b &= b - 1;
        }
        f.write_str("}")
    }
}

/// Parses `"{1,2,4}"` (braces optional) into a bitset.
pub fn parse_subset(s: &str) -> Result<u64> {
    let inner = s.trim().trim_start_matches('{').trim_end_matches('}');
    let mut bits = 0u64;
    for part in inner.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let e: u32 = part.parse().map_err(|_| Error::Parameter(format!("bad element '{part}' in '{s}'")))?;
        if e == 0 || e > 63 {
            return Err(Error::Parameter(format!("element {e} outside [1, 63]")));
        }
        bits |= 1 << (e - 1);
    }
    Ok(bits)
}

/// A set of vertices on one side, stored as side-local ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VertexSet {
    pub side: Side,
    pub ids: IdSet,
}

impl VertexSet {
    pub fn empty(g: &LayerGraph, side: Side) -> Self {
        VertexSet { side, ids: IdSet::new(g.side_size(side)) }
    }

    pub fn from_ids(g: &LayerGraph, side: Side, ids: impl IntoIterator<Item = u32>) -> Self {
        VertexSet { side, ids: IdSet::from_ids(g.side_size(side), ids) }
    }

    /// Builds a set from textual vertices such as `["{1,2}", "{1,3}"]`.
    pub fn parse(g: &LayerGraph, side: Side, items: &[&str]) -> Result<Self> {
        let mut set = VertexSet::empty(g, side);
        for item in items {
            let bits = parse_subset(item)?;
            let id = g
                .id_of(side, bits)
                .ok_or_else(|| Error::Parameter(format!("{item} is not a vertex of the {} side", side.name())))?;
            set.ids.insert(id);
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn to_json(&self, g: &LayerGraph) -> Value {
        let members: Vec<String> = self.ids.iter().map(|id| g.vertex(self.side, id).to_string()).collect();
        json!({ "side": self.side.name(), "members": members })
    }

    pub fn from_json(g: &LayerGraph, v: &Value) -> Result<Self> {
        let bad = || Error::Parameter("vertex set JSON must be {side, members: [..]}".into());
        let side: Side = v.get("side").and_then(Value::as_str).ok_or_else(bad)?.parse()?;
        let items: Vec<&str> = v
            .get("members")
            .and_then(Value::as_array)
            .ok_or_else(bad)?
            .iter()
            .map(|m| m.as_str().ok_or_else(bad))
            .collect::<Result<_>>()?;
        VertexSet::parse(g, side, &items)
    }
}

/// B(n,k): all k-subsets and (k-1)-subsets of `[n]`, adjacent when one contains the other.
#[derive(Debug, Clone)]
pub struct LayerGraph {
    n: u32,
    k: u32,
    /// Bitsets per side in ascending numeric order; the position is the vertex id.
    layers: [Vec<u64>; 2],
    index: [HashMap<u64, u32>; 2],
    adj: [Vec<Vec<u32>>; 2],
    /// Same-side vertices at distance two.
    square: [Vec<Vec<u32>>; 2],
}

fn subsets_of_size(n: u32, k: u32) -> Vec<u64> {
    if k == 0 {
        return vec![0];
    }
    let mut out = Vec::new();
    let limit = 1u64 << n;
    let mut x: u64 = (1 << k) - 1;
    while x < limit {
        out.push(x);
        // Gosper's hack: next integer with the same popcount
        let c = x & x.wrapping_neg();
        let r = x + c;
        x = (((r ^ x) >> 2) / c) | r;
    }
    out
}

impl LayerGraph {
    pub fn new(n: u32, k: u32) -> Result<Self> {
        if !(1..=63).contains(&n) || k < 1 || k > n {
            return Err(Error::Parameter(format!("need 1 <= k <= n <= 63, got n={n}, k={k}")));
        }
        let up = binomial_u64(n as u64, k as u64).unwrap_or(u64::MAX);
        let lo = binomial_u64(n as u64, k as u64 - 1).unwrap_or(u64::MAX);
        if up > MAX_SIDE || lo > MAX_SIDE {
            return Err(Error::Scale(format!("B({n},{k}) has {up} + {lo} vertices, cap is {MAX_SIDE} per side")));
        }
        let layers = [subsets_of_size(n, k), subsets_of_size(n, k - 1)];
        let index: [HashMap<u64, u32>; 2] =
            [0, 1].map(|s| layers[s].iter().enumerate().map(|(i, &b)| (b, i as u32)).collect());
        let upper_adj: Vec<Vec<u32>> = layers[0]
            .iter()
            .map(|&u| {
                let mut nb: Vec<u32> = bits_of(u).map(|b| index[1][&(u & !b)]).collect();
                nb.sort_unstable();
                nb
            })
            .collect();
        let lower_adj: Vec<Vec<u32>> = layers[1]
            .iter()
            .map(|&l| {
                let mut nb: Vec<u32> = bits_of(!l & mask(n)).map(|b| index[0][&(l | b)]).collect();
                nb.sort_unstable();
                nb
            })
            .collect();
        let adj = [upper_adj, lower_adj];
        let square = [0, 1].map(|s| {
            (0..layers[s].len())
                .map(|v| {
                    let mut sq: Vec<u32> = adj[s][v]
                        .iter()
                        .flat_map(|&w| adj[1 - s][w as usize].iter().copied())
                        .filter(|&x| x as usize != v)
                        .collect();
                    sq.sort_unstable();
                    sq.dedup();
                    sq
                })
                .collect()
        });
        Ok(LayerGraph { n, k, layers, index, adj, square })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn side_size(&self, side: Side) -> usize {
        self.layers[side.idx()].len()
    }

    /// `Some(d)` when this is B(2d-1, d).
    pub fn middle_d(&self) -> Option<u32> {
        (self.n % 2 == 1 && self.k == self.n.div_ceil(2)).then_some(self.k)
    }

    /// Like [`LayerGraph::middle_d`] but as a shape error for the polymer modules.
    pub fn require_middle(&self) -> Result<u32> {
        self.middle_d()
            .ok_or_else(|| Error::Shape(format!("B({},{}) is not a middle-layers graph B(2d-1,d)", self.n, self.k)))
    }

    pub fn vertex(&self, side: Side, id: u32) -> Vertex {
        Vertex { bits: self.layers[side.idx()][id as usize], side }
    }

    pub fn id_of(&self, side: Side, bits: u64) -> Option<u32> {
        self.index[side.idx()].get(&bits).copied()
    }

    pub fn neighbors(&self, side: Side, id: u32) -> &[u32] {
        &self.adj[side.idx()][id as usize]
    }

    /// Same-side vertices sharing at least one neighbour with `id`.
    pub fn square_neighbors(&self, side: Side, id: u32) -> &[u32] {
        &self.square[side.idx()][id as usize]
    }

    pub fn degree(&self, side: Side, id: u32) -> usize {
        self.neighbors(side, id).len()
    }

    /// N(S): every vertex adjacent to a member of `s`, on the opposite side.
    pub fn neighborhood(&self, s: &VertexSet) -> VertexSet {
        let other = s.side.opposite();
        let mut out = VertexSet::empty(self, other);
        for v in s.ids.iter() {
            for &w in self.neighbors(s.side, v) {
                out.ids.insert(w);
            }
        }
        out
    }

    /// [A] = { v on A's side : N(v) ⊆ N(A) }.
    pub fn closure(&self, a: &VertexSet) -> VertexSet {
        let boundary = self.neighborhood(a);
        self.closure_of_boundary(a.side, &boundary.ids)
    }

    /// Closure of any set whose neighbourhood is `boundary`.
    pub fn closure_of_boundary(&self, side: Side, boundary: &IdSet) -> VertexSet {
        let mut out = VertexSet::empty(self, side);
        for w in boundary.iter() {
            for &v in self.neighbors(side.opposite(), w) {
                if !out.ids.contains(v) && self.neighbors(side, v).iter().all(|&x| boundary.contains(x)) {
                    out.ids.insert(v);
                }
            }
        }
        out
    }

    /// Maximal 2-linked subsets of `s`, ordered by smallest member.
    pub fn two_linked_components(&self, s: &VertexSet) -> Vec<VertexSet> {
        let mut seen = IdSet::new(self.side_size(s.side));
        let mut comps = Vec::new();
        for v in s.ids.iter() {
            if seen.contains(v) {
                continue;
            }
            let mut comp = VertexSet::empty(self, s.side);
            let mut stack = vec![v];
            seen.insert(v);
            while let Some(x) = stack.pop() {
                comp.ids.insert(x);
                for &y in self.square_neighbors(s.side, x) {
                    if s.ids.contains(y) && seen.insert(y) {
                        stack.push(y);
                    }
                }
            }
            comps.push(comp);
        }
        comps
    }

    pub fn is_two_linked(&self, s: &VertexSet) -> bool {
        !s.is_empty() && self.two_linked_components(s).len() == 1
    }

    /// Visits every 2-linked set on `side` of size at most `max_size` exactly once,
    /// grouped by smallest member `root`. `visit` receives the member ids.
    pub fn for_each_two_linked_from<B>(
        &self,
        side: Side,
        root: u32,
        max_size: usize,
        visit: &mut impl FnMut(&[u32]) -> ControlFlow<B>,
    ) -> ControlFlow<B> {
        let mut search =
            ConnectedSearch::new(self.side_size(side), |v| self.square_neighbors(side, v), |x| x > root, max_size);
        search.run(root, visit)
    }
}

fn mask(n: u32) -> u64 {
    if n == 64 {
        u64::MAX
    } else {
        (1 << n) - 1
    }
}

fn bits_of(mut x: u64) -> impl Iterator<Item = u64> {
    std::iter::from_fn(move || {
        if x == 0 {
            return None;
        }
        let b = x & x.wrapping_neg();
        x &= x - 1;
        Some(b)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(g: &LayerGraph, side: Side, items: &[&str]) -> VertexSet {
        VertexSet::parse(g, side, items).unwrap()
    }

    fn names(g: &LayerGraph, s: &VertexSet) -> Vec<String> {
        s.ids.iter().map(|i| g.vertex(s.side, i).to_string()).collect()
    }

    #[test]
    fn sizes_and_degrees() {
        let g = LayerGraph::new(3, 2).unwrap();
        assert_eq!((g.side_size(Side::Upper), g.side_size(Side::Lower)), (3, 3));
        assert!((0..3).all(|v| g.degree(Side::Upper, v) == 2 && g.degree(Side::Lower, v) == 2));

        let g = LayerGraph::new(5, 3).unwrap();
        assert_eq!((g.side_size(Side::Upper), g.side_size(Side::Lower)), (10, 10));
        assert!((0..10).all(|v| g.degree(Side::Upper, v) == 3 && g.degree(Side::Lower, v) == 3));

        let g = LayerGraph::new(4, 2).unwrap();
        assert_eq!((g.side_size(Side::Upper), g.side_size(Side::Lower)), (6, 4));
        assert!((0..6).all(|v| g.degree(Side::Upper, v) == 2));
        assert!((0..4).all(|v| g.degree(Side::Lower, v) == 3));
    }

    #[test]
    fn degree_regularity_of_middle_layers() {
        for d in 2..=6u32 {
            let g = LayerGraph::new(2 * d - 1, d).unwrap();
            assert_eq!(g.middle_d(), Some(d));
            for side in [Side::Upper, Side::Lower] {
                assert!((0..g.side_size(side) as u32).all(|v| g.degree(side, v) == d as usize));
            }
        }
    }

    #[test]
    fn b32_is_a_six_cycle() {
        let g = LayerGraph::new(3, 2).unwrap();
        // connected, 2-regular, 6 vertices
        let mut seen = IdSet::new(3);
        let mut stack = vec![(Side::Upper, 0u32)];
        let mut count = 0;
        let mut seen_lower = IdSet::new(3);
        seen.insert(0);
        while let Some((side, v)) = stack.pop() {
            count += 1;
            for &w in g.neighbors(side, v) {
                let fresh = match side {
                    Side::Upper => seen_lower.insert(w),
                    Side::Lower => seen.insert(w),
                };
                if fresh {
                    stack.push((side.opposite(), w));
                }
            }
        }
        assert_eq!(count, 6);
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(LayerGraph::new(3, 0), Err(Error::Parameter(_))));
        assert!(matches!(LayerGraph::new(3, 4), Err(Error::Parameter(_))));
        assert!(matches!(LayerGraph::new(64, 3), Err(Error::Parameter(_))));
        assert!(matches!(LayerGraph::new(63, 31), Err(Error::Scale(_))));
        assert!(matches!(LayerGraph::new(4, 2).unwrap().require_middle(), Err(Error::Shape(_))));
    }

    #[test]
    fn neighborhood_examples() {
        let g = LayerGraph::new(3, 2).unwrap();
        let s = set(&g, Side::Upper, &["{1,2}"]);
        assert_eq!(names(&g, &g.neighborhood(&s)), vec!["{1}", "{2}"]);
        assert!(g.neighborhood(&VertexSet::empty(&g, Side::Upper)).is_empty());

        let g = LayerGraph::new(5, 3).unwrap();
        let s = set(&g, Side::Upper, &["{1,2,3}", "{1,2,4}"]);
        let mut got = names(&g, &g.neighborhood(&s));
        got.sort();
        assert_eq!(got, vec!["{1,2}", "{1,3}", "{1,4}", "{2,3}", "{2,4}"]);
    }

    #[test]
    fn closure_examples() {
        let g = LayerGraph::new(3, 2).unwrap();
        let s = set(&g, Side::Upper, &["{1,2}"]);
        assert_eq!(g.closure(&s), s);
        let s = set(&g, Side::Upper, &["{1,2}", "{1,3}"]);
        assert_eq!(g.closure(&s).len(), 3);

        let g = LayerGraph::new(5, 3).unwrap();
        let s = set(&g, Side::Upper, &["{1,2,3}", "{1,3,4}", "{2,3,4}"]);
        let expect = set(&g, Side::Upper, &["{1,2,3}", "{1,2,4}", "{1,3,4}", "{2,3,4}"]);
        assert_eq!(g.closure(&s), expect);
        assert!(g.closure(&VertexSet::empty(&g, Side::Upper)).is_empty());
    }

    #[test]
    fn components_examples() {
        let g = LayerGraph::new(5, 3).unwrap();
        let s = set(&g, Side::Upper, &["{1,2,3}", "{1,2,4}"]);
        assert_eq!(g.two_linked_components(&s).len(), 1);
        let s = set(&g, Side::Upper, &["{1,2,3}", "{1,4,5}"]);
        let comps = g.two_linked_components(&s);
        assert_eq!(comps.iter().map(VertexSet::len).collect::<Vec<_>>(), vec![1, 1]);
        let g = LayerGraph::new(3, 2).unwrap();
        let s = set(&g, Side::Upper, &["{1,2}", "{1,3}", "{2,3}"]);
        assert_eq!(g.two_linked_components(&s).len(), 1);
        assert!(g.two_linked_components(&VertexSet::empty(&g, Side::Upper)).is_empty());
    }

    fn all_subsets(g: &LayerGraph, side: Side) -> impl Iterator<Item = VertexSet> + '_ {
        let n = g.side_size(side);
        (0u64..1 << n).map(move |m| VertexSet::from_ids(g, side, (0..n as u32).filter(|i| m >> i & 1 == 1)))
    }

    #[test]
    fn closure_is_idempotent_extensive_and_boundary_preserving() {
        for (n, k) in [(3, 2), (5, 3)] {
            let g = LayerGraph::new(n, k).unwrap();
            for side in [Side::Upper, Side::Lower] {
                for a in all_subsets(&g, side) {
                    let c = g.closure(&a);
                    assert!(a.ids.is_subset(&c.ids));
                    assert_eq!(g.closure(&c), c);
                    assert_eq!(g.neighborhood(&c), g.neighborhood(&a));
                }
            }
        }
    }

    #[test]
    fn components_form_a_partition() {
        let g = LayerGraph::new(5, 3).unwrap();
        for a in all_subsets(&g, Side::Upper) {
            let comps = g.two_linked_components(&a);
            let mut union = VertexSet::empty(&g, Side::Upper);
            for (i, c) in comps.iter().enumerate() {
                assert!(g.is_two_linked(c));
                assert!(!union.ids.intersects(&c.ids));
                union.ids.union_with(&c.ids);
                for other in &comps[i + 1..] {
                    let mut both = c.clone();
                    both.ids.union_with(&other.ids);
                    assert!(!g.is_two_linked(&both));
                }
            }
            assert_eq!(union, a);
        }
    }

    #[test]
    fn vertex_text_and_json() {
        let g = LayerGraph::new(5, 3).unwrap();
        let s = set(&g, Side::Upper, &["{1,2,4}", "{3,4,5}"]);
        let v = s.to_json(&g);
        assert_eq!(v["side"], "upper");
        assert_eq!(VertexSet::from_json(&g, &v).unwrap(), s);
        assert!(VertexSet::parse(&g, Side::Upper, &["{1,2}"]).is_err());
        assert_eq!(parse_subset("{1,2,4}").unwrap(), 0b1011);
    }
}
