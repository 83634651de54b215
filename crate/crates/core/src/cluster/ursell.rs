//! The Ursell function φ(H) = (1/|V|!) Σ (−1)^{e(F)} over connected spanning
//! subgraphs F of H, computed three independent ways, with a cache keyed by a
//! canonical form of H.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{OnceLock, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::scalar::{factorial, parse_rational};

/// Largest graph accepted by [`ursell`].
pub const MAX_URSELL_VERTICES: usize = 9;

/// A simple graph on `0..m` given by adjacency bitmasks.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct IncompatibilityGraph {
    m: usize,
    rows: Vec<u16>,
}

impl IncompatibilityGraph {
    pub fn new(m: usize) -> Self {
        assert!((1..=16).contains(&m), "graph size {m} outside 1..=16");
        IncompatibilityGraph { m, rows: vec![0; m] }
    }

    pub fn complete(m: usize) -> Self {
        let mut g = Self::new(m);
        for i in 0..m {
            for j in i + 1..m {
                g.add_edge(i, j);
            }
        }
        g
    }

    pub fn path(m: usize) -> Self {
        let mut g = Self::new(m);
        for i in 1..m {
            g.add_edge(i - 1, i);
        }
        g
    }

    /// Bit `e` of `mask` is the e-th pair (i, j), i < j, in lexicographic order.
    pub fn from_edge_mask(m: usize, mask: u64) -> Self {
        let mut g = Self::new(m);
        let mut e = 0;
        for i in 0..m {
            for j in i + 1..m {
                if mask >> e & 1 == 1 {
                    g.add_edge(i, j);
                }
                e += 1;
            }
        }
        g
    }

    pub fn edge_mask(&self) -> u64 {
        let mut mask = 0u64;
        let mut e = 0;
        for i in 0..self.m {
            for j in i + 1..self.m {
                if self.has_edge(i, j) {
                    mask |= 1 << e;
                }
                e += 1;
            }
        }
        mask
    }

    pub fn add_edge(&mut self, i: usize, j: usize) {
        assert!(i != j, "loops are implicit");
        self.rows[i] |= 1 << j;
        self.rows[j] |= 1 << i;
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.rows[i] >> j & 1 == 1
    }

    pub fn vertex_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.rows.iter().map(|r| r.count_ones() as usize).sum::<usize>() / 2
    }

    pub fn rows(&self) -> &[u16] {
        &self.rows
    }

    pub fn is_connected(&self) -> bool {
        reach(&self.rows, 1, full(self.m)) == full(self.m)
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Self {
        let mut g = Self::new(self.m);
        for i in 0..self.m {
            for j in i + 1..self.m {
                if self.has_edge(i, j) {
                    g.add_edge(perm[i], perm[j]);
                }
            }
        }
        g
    }
}

fn full(m: usize) -> u32 {
    (1u32 << m) - 1
}

/// Vertices reachable from `start` inside `within`.
fn reach(rows: &[u16], start: u32, within: u32) -> u32 {
    let mut seen = start & within;
    let mut frontier = seen;
    while frontier != 0 {
        let v = frontier.trailing_zeros() as usize;
        frontier &= frontier - 1;
        let fresh = rows[v] as u32 & within & !seen;
        seen |= fresh;
        frontier |= fresh;
    }
    seen
}

/// Σ (−1)^{e(F)} over connected spanning subgraphs F, by recursion over the
/// vertex set containing the smallest vertex. O(3^m).
pub fn connected_signed_count(h: &IncompatibilityGraph) -> i64 {
    let m = h.m;
    let size = 1usize << m;
    // independent[s]: no edge inside s
    let mut independent = vec![false; size];
    independent[0] = true;
    for s in 1..size {
        let v = s.trailing_zeros() as usize;
        let rest = s & (s - 1);
        independent[s] = independent[rest] && (h.rows[v] as usize & rest) == 0;
    }
    let mut conn = vec![0i64; size];
    for s in 1..size {
        let low = s & s.wrapping_neg();
        let mut total = independent[s] as i64;
        // proper subsets t of s containing the lowest vertex
        let rest = s ^ low;
        let mut sub = (rest.wrapping_sub(1)) & rest;
        loop {
            let t = sub | low;
            if t != s && independent[s ^ t] {
                total -= conn[t];
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        conn[s] = total;
    }
    conn[size - 1]
}

/// φ(H) without the cache.
pub fn ursell_uncached(h: &IncompatibilityGraph) -> BigRational {
    BigRational::new(BigInt::from(connected_signed_count(h)), BigInt::from(factorial(h.m as u32)))
}

/// φ(H) by summing over every edge subset. Exponential in the edge count, so
/// limited to 7 vertices.
pub fn ursell_edge_subsets(h: &IncompatibilityGraph) -> Result<BigRational> {
    if h.m > 7 {
        return Err(Error::Scale(format!("edge-subset Ursell limited to 7 vertices, got {}", h.m)));
    }
    let edges: Vec<(usize, usize)> =
        (0..h.m).flat_map(|i| (i + 1..h.m).map(move |j| (i, j))).filter(|&(i, j)| h.has_edge(i, j)).collect();
    let mut total = 0i64;
    for subset in 0u64..1 << edges.len() {
        let mut rows = vec![0u16; h.m];
        for (e, &(i, j)) in edges.iter().enumerate() {
            if subset >> e & 1 == 1 {
                rows[i] |= 1 << j;
                rows[j] |= 1 << i;
            }
        }
        if reach(&rows, 1, full(h.m)) == full(h.m) {
            total += if subset.count_ones() % 2 == 0 { 1 } else { -1 };
        }
    }
    Ok(BigRational::new(total.into(), BigInt::from(factorial(h.m as u32))))
}

/// φ(H) by deletion–contraction: S(G) = S(G − e) − S(G / e), where parallel
/// edges created by contraction collapse to one (their signed sum is the same).
pub fn ursell_deletion_contraction(h: &IncompatibilityGraph) -> BigRational {
    fn signed(rows: &mut [u16]) -> i64 {
        let m = rows.len();
        if m == 1 {
            return 1;
        }
        if reach(rows, 1, full(m)) != full(m) {
            return 0;
        }
        let (u, v) = (0..m)
            .find_map(|i| (rows[i] != 0).then(|| (i, rows[i].trailing_zeros() as usize)))
            .expect("connected graph with m > 1 has an edge");
        rows[u] &= !(1 << v);
        rows[v] &= !(1 << u);
        let deleted = signed(&mut rows.to_vec());
        rows[u] |= 1 << v;
        rows[v] |= 1 << u;
        let mut contracted = contract(rows, u.min(v), u.max(v));
        deleted - signed(&mut contracted)
    }
    // merges b into a and removes vertex b, renumbering the vertices above it
    fn contract(rows: &[u16], a: usize, b: usize) -> Vec<u16> {
        let drop = |mask: u16| -> u16 {
            let low = mask & ((1 << b) - 1);
            let high = (mask >> (b + 1)) << b;
            low | high
        };
        let mut out = Vec::with_capacity(rows.len() - 1);
        for (i, &r) in rows.iter().enumerate() {
            if i == b {
                continue;
            }
            let mut r = r;
            if i == a {
                r |= rows[b];
            }
            if r >> b & 1 == 1 {
                r |= 1 << a;
            }
            r &= !(1 << b);
            let mut r = drop(r);
            let new_i = if i > b { i - 1 } else { i };
            r &= !(1 << new_i);
            out.push(r);
        }
        out
    }
    let mut rows = h.rows.clone();
    BigRational::new(signed(&mut rows).into(), BigInt::from(factorial(h.m as u32)))
}

/// An isomorphism-invariant key: the smallest edge mask over all relabelings
/// that list vertices in non-decreasing degree order.
pub fn canonical_key(h: &IncompatibilityGraph) -> (u8, u64) {
    let m = h.m;
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&v| (h.rows[v].count_ones(), v));
    let degree = |v: usize| h.rows[v].count_ones();
    // positions of each degree class in the sorted order
    let mut classes: Vec<(usize, usize)> = Vec::new();
    let mut start = 0;
    for i in 1..=m {
        if i == m || degree(order[i]) != degree(order[start]) {
            classes.push((start, i));
            start = i;
        }
    }
    let mut best = u64::MAX;
    let mut perm = vec![0usize; m];
    fn permute(
        h: &IncompatibilityGraph,
        classes: &[(usize, usize)],
        ci: usize,
        slots: &mut Vec<usize>,
        perm: &mut Vec<usize>,
        best: &mut u64,
    ) {
        if ci == classes.len() {
            // slots[position] = original vertex; perm[original] = position
            for (pos, &v) in slots.iter().enumerate() {
                perm[v] = pos;
            }
            let key = h.relabel(perm).edge_mask();
            *best = (*best).min(key);
            return;
        }
        let (lo, hi) = classes[ci];
        heap_permute(slots, lo, hi - lo, &mut |s| permute(h, classes, ci + 1, s, perm, best));
    }
    fn heap_permute(s: &mut Vec<usize>, lo: usize, k: usize, f: &mut dyn FnMut(&mut Vec<usize>)) {
        if k <= 1 {
            f(s);
            return;
        }
        for i in 0..k - 1 {
            heap_permute(s, lo, k - 1, f);
            if k.is_multiple_of(2) {
                s.swap(lo + i, lo + k - 1);
            } else {
                s.swap(lo, lo + k - 1);
            }
        }
        heap_permute(s, lo, k - 1, f);
    }
    permute(h, &classes, 0, &mut order, &mut perm, &mut best);
    (m as u8, best)
}

/// Concurrent insert-if-absent cache of φ values by canonical key.
#[derive(Debug, Default)]
pub struct UrsellCache {
    entries: RwLock<HashMap<(u8, u64), BigRational>>,
}

const CACHE_FILE: &str = "ursell-cache.json";

impl UrsellCache {
    pub fn global() -> &'static UrsellCache {
        static CACHE: OnceLock<UrsellCache> = OnceLock::new();
        CACHE.get_or_init(UrsellCache::default)
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get_or_compute(&self, h: &IncompatibilityGraph) -> BigRational {
        let key = canonical_key(h);
        if let Some(v) = self.entries.read().unwrap().get(&key) {
            return v.clone();
        }
        let value = ursell_uncached(h);
        self.entries.write().unwrap().entry(key).or_insert(value).clone()
    }

    /// Merges the cache file in `dir`, if present. A file that exists but does not
    /// parse is an error rather than a silent recompute.
    pub fn load_dir(&self, dir: &Path) -> Result<usize> {
        let path = dir.join(CACHE_FILE);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(0),
            Err(e) => return Err(Error::Cache(format!("{}: {e}", path.display()))),
        };
        let corrupt = |why: &str| Error::Cache(format!("{} is corrupted: {why}", path.display()));
        let v: Value = serde_json::from_str(&text).map_err(|e| corrupt(&e.to_string()))?;
        if v.get("version").and_then(Value::as_u64) != Some(1) {
            return Err(corrupt("missing or unknown version"));
        }
        let entries = v.get("entries").and_then(Value::as_object).ok_or_else(|| corrupt("no entries object"))?;
        let mut parsed = Vec::with_capacity(entries.len());
        for (k, val) in entries {
            let (m, mask) = k.split_once(':').ok_or_else(|| corrupt("bad key"))?;
            let m: u8 = m.parse().map_err(|_| corrupt("bad key"))?;
            let mask = u64::from_str_radix(mask, 16).map_err(|_| corrupt("bad key"))?;
            if m == 0 || m as usize > MAX_URSELL_VERTICES {
                return Err(corrupt("bad key"));
            }
            let phi = val.as_str().ok_or_else(|| corrupt("value is not a string")).and_then(|s| {
                parse_rational(s).map_err(|_| corrupt("value is not a rational"))
            })?;
            parsed.push(((m, mask), phi));
        }
        let n = parsed.len();
        let mut map = self.entries.write().unwrap();
        for (k, phi) in parsed {
            map.entry(k).or_insert(phi);
        }
        Ok(n)
    }

    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        let map = self.entries.read().unwrap();
        let mut keys: Vec<_> = map.keys().copied().collect();
        keys.sort_unstable();
        let entries: serde_json::Map<String, Value> =
            keys.iter().map(|k| (format!("{}:{:x}", k.0, k.1), json!(map[k].to_string()))).collect();
        let text = serde_json::to_string_pretty(&json!({ "version": 1, "entries": entries })).unwrap();
        std::fs::create_dir_all(dir).map_err(|e| Error::Cache(format!("{}: {e}", dir.display())))?;
        let path = dir.join(CACHE_FILE);
        std::fs::write(&path, text).map_err(|e| Error::Cache(format!("{}: {e}", path.display())))
    }
}

/// φ(H), memoised in the global cache. At most [`MAX_URSELL_VERTICES`] vertices.
pub fn ursell(h: &IncompatibilityGraph) -> Result<BigRational> {
    if h.m > MAX_URSELL_VERTICES {
        return Err(Error::Scale(format!("Ursell function limited to {MAX_URSELL_VERTICES} vertices, got {}", h.m)));
    }
    Ok(UrsellCache::global().get_or_compute(h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn unit_values() {
        assert_eq!(ursell(&IncompatibilityGraph::complete(1)).unwrap(), q(1, 1));
        assert_eq!(ursell(&IncompatibilityGraph::complete(2)).unwrap(), q(-1, 2));
        assert_eq!(ursell(&IncompatibilityGraph::complete(3)).unwrap(), q(1, 3));
        assert_eq!(ursell(&IncompatibilityGraph::path(3)).unwrap(), q(1, 6));
        // K_m gives (−1)^{m−1}(m−1)!/m! = (−1)^{m−1}/m
        for m in 1..=9 {
            let sign = if m % 2 == 1 { 1 } else { -1 };
            assert_eq!(ursell(&IncompatibilityGraph::complete(m)).unwrap(), q(sign, m as i64));
        }
        // trees give (−1)^{m−1}/m!
        assert_eq!(ursell(&IncompatibilityGraph::path(5)).unwrap(), q(1, 120));
        assert_eq!(ursell(&IncompatibilityGraph::new(2)).unwrap(), q(0, 1));
    }

    #[test]
    fn too_large_is_scale_error() {
        assert!(matches!(ursell(&IncompatibilityGraph::complete(10)), Err(Error::Scale(_))));
    }

    #[test]
    fn three_methods_agree_on_all_graphs_up_to_five_vertices() {
        for m in 1..=5usize {
            let pairs = m * (m - 1) / 2;
            for mask in 0u64..1 << pairs {
                let h = IncompatibilityGraph::from_edge_mask(m, mask);
                let a = ursell_uncached(&h);
                assert_eq!(a, ursell_edge_subsets(&h).unwrap(), "m={m} mask={mask:b}");
                assert_eq!(a, ursell_deletion_contraction(&h), "m={m} mask={mask:b}");
                assert_eq!(h.edge_mask(), mask);
            }
        }
    }

    #[test]
    fn canonical_key_separates_small_graphs() {
        // 1, 2, 4, 11, 34 isomorphism classes on 1..=5 vertices
        for (m, classes) in [(1usize, 1usize), (2, 2), (3, 4), (4, 11), (5, 34)] {
            let pairs = m * (m - 1) / 2;
            let keys: std::collections::HashSet<_> =
                (0u64..1 << pairs).map(|mask| canonical_key(&IncompatibilityGraph::from_edge_mask(m, mask))).collect();
            assert_eq!(keys.len(), classes, "m={m}");
        }
    }

    #[test]
    fn cache_round_trip_and_corruption() {
        let dir = std::env::temp_dir().join(format!("midlayer-ursell-{}", std::process::id()));
        let cache = UrsellCache::default();
        cache.get_or_compute(&IncompatibilityGraph::complete(4));
        cache.get_or_compute(&IncompatibilityGraph::path(4));
        cache.save_dir(&dir).unwrap();
        let fresh = UrsellCache::default();
        assert_eq!(fresh.load_dir(&dir).unwrap(), 2);
        assert_eq!(fresh.get_or_compute(&IncompatibilityGraph::path(4)), q(-1, 24));
        std::fs::write(dir.join(CACHE_FILE), "{ not json").unwrap();
        assert!(matches!(fresh.load_dir(&dir), Err(Error::Cache(_))));
        std::fs::write(dir.join(CACHE_FILE), r#"{"version":1,"entries":{"3:7":"x"}}"#).unwrap();
        assert!(matches!(fresh.load_dir(&dir), Err(Error::Cache(_))));
        std::fs::remove_dir_all(&dir).unwrap();
        assert_eq!(UrsellCache::default().load_dir(&dir).unwrap(), 0);
    }

    proptest! {
        #[test]
        fn invariant_under_relabeling(mask in 0u64..(1 << 15), perm in Just((0..6usize).collect::<Vec<_>>()).prop_shuffle()) {
            let h = IncompatibilityGraph::from_edge_mask(6, mask);
            let r = h.relabel(&perm);
            prop_assert_eq!(ursell_uncached(&h), ursell_uncached(&r));
            prop_assert_eq!(canonical_key(&h), canonical_key(&r));
        }
    }
}
