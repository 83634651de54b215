//! Cluster expansion of the polymer partition function: enumeration of
//! clusters, the terms L_k, the Kotecký–Preiss check and the resulting
//! prediction for ln Z.

pub mod ursell;

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::ops::ControlFlow;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{map_collect, Exec};
use crate::lattice::{LayerGraph, Side};
use crate::polymer::{enumerate_polymers, gamma_fn, regime_warnings, Polymer, WeightParams, DEFAULT_VISIT_CAP};
use crate::scalar::{binomial, factorial, rat_pow, rational_to_f64, ExactScalar, Fugacity};

pub use ursell::{
    canonical_key, connected_signed_count, ursell, ursell_deletion_contraction, ursell_edge_subsets, ursell_uncached,
    IncompatibilityGraph, UrsellCache, MAX_URSELL_VERTICES,
};

/// A multiset of polymers whose incompatibility graph is connected.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    /// Distinct polymers in canonical order with their multiplicities.
    pub parts: Vec<(Polymer, u32)>,
    /// Σ |S| over the tuple, counting multiplicity.
    pub size: u32,
    /// Number of ordered tuples realising the multiset.
    pub orderings: u64,
    /// H on the tuple positions, parts listed in order with repeats adjacent.
    pub graph: IncompatibilityGraph,
}

impl Cluster {
    /// Builds the canonical cluster from a multiset. Fails with a parameter error
    /// if the parts are on different sides or H is disconnected.
    pub fn new(mut parts: Vec<(Polymer, u32)>) -> Result<Cluster> {
        parts.retain(|(_, m)| *m > 0);
        if parts.is_empty() {
            return Err(Error::Parameter("a cluster needs at least one polymer".into()));
        }
        parts.sort_by(|a, b| a.0.cmp(&b.0));
        parts.dedup_by(|b, a| {
            let same = a.0 == b.0;
            if same {
                a.1 += b.1;
            }
            same
        });
        if parts.iter().any(|(p, _)| p.side() != parts[0].0.side()) {
            return Err(Error::Parameter("cluster polymers must share a side".into()));
        }
        let tuple: Vec<&Polymer> = parts.iter().flat_map(|(p, m)| std::iter::repeat_n(p, *m as usize)).collect();
        if tuple.len() > 16 {
            return Err(Error::Scale(format!("cluster with {} polymers is too long", tuple.len())));
        }
        let mut graph = IncompatibilityGraph::new(tuple.len());
        for i in 0..tuple.len() {
            for j in i + 1..tuple.len() {
                if tuple[i].incompatible_with(tuple[j]) {
                    graph.add_edge(i, j);
                }
            }
        }
        if !graph.is_connected() {
            return Err(Error::Parameter("incompatibility graph of the cluster is disconnected".into()));
        }
        let size = tuple.iter().map(|p| p.size()).sum();
        let mults: Vec<u32> = parts.iter().map(|(_, m)| *m).collect();
        Ok(Cluster { parts, size, orderings: orderings(&mults), graph })
    }

    pub fn tuple_len(&self) -> usize {
        self.graph.vertex_count()
    }

    /// Σ |N(S)| over the tuple, counting multiplicity.
    pub fn boundary_total(&self) -> u32 {
        self.parts.iter().map(|(p, m)| p.boundary_size() * m).sum()
    }
}

/// m! / Π mult!.
fn orderings(mults: &[u32]) -> u64 {
    let m: u32 = mults.iter().sum();
    let mut r = factorial(m);
    for &k in mults {
        r /= factorial(k);
    }
    r.to_u64().expect("orderings fit in u64 for tuples of at most 16 polymers")
}

/// φ(H) Π w(S) for one ordered tuple. Exact for plain weights.
pub fn cluster_weight(c: &Cluster, w: &WeightParams) -> Result<ExactScalar> {
    let phi = ursell(&c.graph)?;
    let weights = w.lambda.weight(c.size, c.boundary_total());
    Ok(ExactScalar::Exact(phi * weights))
}

/// Limits and execution mode for cluster enumeration.
#[derive(Debug, Clone, Copy)]
pub struct ClusterOptions {
    pub side: Side,
    /// Cap on 2-linked sets visited, summed over all roots.
    pub visit_cap: u64,
    /// Cap on the number of clusters materialised by [`enumerate_clusters`].
    pub max_clusters: usize,
    pub exec: Exec,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        ClusterOptions { side: Side::Upper, visit_cap: DEFAULT_VISIT_CAP, max_clusters: 2_000_000, exec: Exec::default() }
    }
}

/// What every cluster of one root hands to the consumer.
struct Found<'a> {
    /// Indices into the polymer list with multiplicities, in canonical order.
    parts: &'a [(usize, u32)],
    graph: &'a IncompatibilityGraph,
    orderings: u64,
    boundary_total: u32,
}

/// Polymers of size ≤ k indexed by their member list.
struct PolymerIndex {
    polymers: Vec<Polymer>,
    by_members: HashMap<Vec<u32>, usize>,
}

impl PolymerIndex {
    fn build(g: &LayerGraph, k: usize, opts: &ClusterOptions) -> Result<Self> {
        let polymers = enumerate_polymers(g, opts.side, k, opts.visit_cap, opts.exec)?;
        let by_members = polymers.iter().enumerate().map(|(i, p)| (p.members().to_vec(), i)).collect();
        Ok(PolymerIndex { polymers, by_members })
    }
}

/// Runs `consume` on every cluster of size exactly `k` whose union of polymers
/// has smallest vertex `root`. The union of a cluster is 2-linked, so it is
/// found by the rooted 2-linked search; inside it we pick multisets of
/// contained polymers that cover it exactly.
#[allow(clippy::too_many_arguments)]
fn scan_root(
    g: &LayerGraph,
    index: &PolymerIndex,
    k: usize,
    root: u32,
    side: Side,
    budget: &AtomicU64,
    cap: u64,
    consume: &mut dyn FnMut(Found<'_>),
) -> Result<()> {
    let mut local = 0u64;
    let mut err = None;
    let flow = g.for_each_two_linked_from(side, root, k, &mut |members: &[u32]| {
        local += 1;
        if local.is_multiple_of(1024) && budget.fetch_add(1024, AtomicOrdering::Relaxed) + 1024 > cap {
            return ControlFlow::Break(());
        }
        let mut u = members.to_vec();
        u.sort_unstable();
        if let Err(e) = scan_union(index, k, &u, consume) {
            err = Some(e);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    });
    if let Some(e) = err {
        return Err(e);
    }
    if flow.is_break() {
        return Err(Error::Scale(format!("cluster enumeration from root {root} exceeded the cap of {cap} visited sets")));
    }
    Ok(())
}

fn scan_union(index: &PolymerIndex, k: usize, u: &[u32], consume: &mut dyn FnMut(Found<'_>)) -> Result<()> {
    let s = u.len();
    let full = (1u32 << s) - 1;
    // polymers inside u, with their local masks
    let mut inside: Vec<(usize, u32)> = Vec::new();
    let mut buf = Vec::with_capacity(s);
    for sub in 1..=full {
        buf.clear();
        buf.extend((0..s).filter(|&i| sub >> i & 1 == 1).map(|i| u[i]));
        if let Some(&idx) = index.by_members.get(&buf) {
            inside.push((idx, sub));
        }
    }
    inside.sort_by_key(|&(idx, _)| idx);
    let r = inside.len();
    let sizes: Vec<usize> = inside.iter().map(|&(idx, _)| index.polymers[idx].size() as usize).collect();
    let mut incompatible = vec![false; r * r];
    for i in 0..r {
        for j in i..r {
            let x = index.polymers[inside[i].0].incompatible_with(&index.polymers[inside[j].0]);
            incompatible[i * r + j] = x;
            incompatible[j * r + i] = x;
        }
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut parts: Vec<(usize, u32)> = Vec::with_capacity(k);
    #[allow(clippy::too_many_arguments)]
    fn rec(
        index: &PolymerIndex,
        inside: &[(usize, u32)],
        sizes: &[usize],
        incompatible: &[bool],
        full: u32,
        start: usize,
        remaining: usize,
        covered: u32,
        chosen: &mut Vec<usize>,
        parts: &mut Vec<(usize, u32)>,
        consume: &mut dyn FnMut(Found<'_>),
    ) -> Result<()> {
        if remaining == 0 {
            if covered != full {
                return Ok(());
            }
            let r = inside.len();
            let m = chosen.len();
            if m > MAX_URSELL_VERTICES {
                return Err(Error::Scale(format!("cluster with {m} polymers exceeds the Ursell limit")));
            }
            let mut h = IncompatibilityGraph::new(m);
            for a in 0..m {
                for b in a + 1..m {
                    if incompatible[chosen[a] * r + chosen[b]] {
                        h.add_edge(a, b);
                    }
                }
            }
            if !h.is_connected() {
                return Ok(());
            }
            parts.clear();
            let mut boundary_total = 0;
            for &c in chosen.iter() {
                let idx = inside[c].0;
                boundary_total += index.polymers[idx].boundary_size();
                match parts.last_mut() {
                    Some((last, mult)) if *last == idx => *mult += 1,
                    _ => parts.push((idx, 1)),
                }
            }
            let mults: Vec<u32> = parts.iter().map(|p| p.1).collect();
            consume(Found { parts, graph: &h, orderings: orderings(&mults), boundary_total });
            return Ok(());
        }
        if ((full & !covered).count_ones() as usize) > remaining {
            return Ok(());
        }
        for i in start..inside.len() {
            if sizes[i] > remaining {
                continue;
            }
            chosen.push(i);
            rec(
                index,
                inside,
                sizes,
                incompatible,
                full,
                i,
                remaining - sizes[i],
                covered | inside[i].1,
                chosen,
                parts,
                consume,
            )?;
            chosen.pop();
        }
        Ok(())
    }
    rec(index, &inside, &sizes, &incompatible, full, 0, k, 0, &mut chosen, &mut parts, consume)
}

fn check_k(g: &LayerGraph, k: usize) -> Result<()> {
    g.require_middle()?;
    if k == 0 {
        return Err(Error::Parameter("cluster size k must be at least 1".into()));
    }
    if k > MAX_URSELL_VERTICES {
        return Err(Error::Scale(format!("cluster size {k} exceeds the supported maximum {MAX_URSELL_VERTICES}")));
    }
    Ok(())
}

/// Every cluster with ‖Γ‖ = k, as canonical multisets, sorted canonically.
pub fn enumerate_clusters(g: &LayerGraph, k: usize, opts: &ClusterOptions) -> Result<Vec<Cluster>> {
    check_k(g, k)?;
    let index = PolymerIndex::build(g, k, opts)?;
    let budget = AtomicU64::new(0);
    let roots: Vec<u32> = (0..g.side_size(opts.side) as u32).collect();
    let per_root = map_collect(opts.exec, roots, |root| {
        let mut out = Vec::new();
        let mut too_many = false;
        scan_root(g, &index, k, root, opts.side, &budget, opts.visit_cap, &mut |f| {
            if out.len() >= opts.max_clusters {
                too_many = true;
                return;
            }
            let parts = f.parts.iter().map(|&(i, m)| (index.polymers[i].clone(), m)).collect();
            out.push(Cluster { parts, size: k as u32, orderings: f.orderings, graph: f.graph.clone() });
        })?;
        if too_many {
            return Err(Error::Scale(format!("more than {} clusters of size {k}", opts.max_clusters)));
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_root {
        all.extend(r?);
        if all.len() > opts.max_clusters {
            return Err(Error::Scale(format!("more than {} clusters of size {k}", opts.max_clusters)));
        }
    }
    all.sort_by(|a, b| {
        let ka = a.parts.iter().map(|(p, m)| (p, *m));
        let kb = b.parts.iter().map(|(p, m)| (p, *m));
        ka.cmp(kb)
    });
    Ok(all)
}

/// L_k as a function of λ: L_k = λ^k / k! · Σ_b c_b (1+λ)^{−b}, with integer c_b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TermPolynomial {
    pub k: usize,
    /// Boundary total b ↦ c_b.
    pub coeffs: BTreeMap<u32, BigInt>,
    /// Number of cluster multisets that contributed.
    pub clusters: u64,
}

impl TermPolynomial {
    pub fn evaluate(&self, lambda: &Fugacity) -> BigRational {
        let one_plus = lambda.one_plus();
        let mut acc = BigRational::zero();
        for (&b, c) in &self.coeffs {
            acc += BigRational::from_integer(c.clone()) / rat_pow(&one_plus, b);
        }
        acc * rat_pow(lambda.value(), self.k as u32) / BigRational::from_integer(factorial(self.k as u32).into())
    }
}

thread_local! {
    static SIGNED_MEMO: RefCell<HashMap<(usize, u64), BigInt>> = RefCell::new(HashMap::new());
}

/// Σ (−1)^{e(F)} for H, through the shared canonical cache with a per-thread
/// memo on the raw edge mask in front of it.
fn signed_count(h: &IncompatibilityGraph) -> Result<BigInt> {
    let key = (h.vertex_count(), h.edge_mask());
    if let Some(v) = SIGNED_MEMO.with(|m| m.borrow().get(&key).cloned()) {
        return Ok(v);
    }
    let phi = ursell(h)?;
    let v = (phi * BigRational::from_integer(factorial(h.vertex_count() as u32).into())).to_integer();
    SIGNED_MEMO.with(|m| m.borrow_mut().insert(key, v.clone()));
    Ok(v)
}

/// Enumerates clusters of size k and collects L_k as a [`TermPolynomial`].
pub fn term_polynomial(g: &LayerGraph, k: usize, opts: &ClusterOptions) -> Result<TermPolynomial> {
    check_k(g, k)?;
    let index = PolymerIndex::build(g, k, opts)?;
    let budget = AtomicU64::new(0);
    let k_fact = factorial(k as u32);
    let roots: Vec<u32> = (0..g.side_size(opts.side) as u32).collect();
    let per_root = map_collect(opts.exec, roots, |root| -> Result<(BTreeMap<u32, BigInt>, u64)> {
        let mut coeffs: BTreeMap<u32, BigInt> = BTreeMap::new();
        let mut count = 0u64;
        let mut err = None;
        scan_root(g, &index, k, root, opts.side, &budget, opts.visit_cap, &mut |f| {
            if err.is_some() {
                return;
            }
            match signed_count(f.graph) {
                Ok(c) => {
                    // orderings · c / m!  scaled by k!
                    let scale = BigInt::from(k_fact.clone() / factorial(f.graph.vertex_count() as u32));
                    *coeffs.entry(f.boundary_total).or_default() += c * scale * BigInt::from(f.orderings);
                    count += 1;
                }
                Err(e) => err = Some(e),
            }
        })?;
        match err {
            Some(e) => Err(e),
            None => Ok((coeffs, count)),
        }
    });
    let mut coeffs: BTreeMap<u32, BigInt> = BTreeMap::new();
    let mut clusters = 0;
    for r in per_root {
        let (c, n) = r?;
        clusters += n;
        for (b, v) in c {
            *coeffs.entry(b).or_default() += v;
        }
    }
    coeffs.retain(|_, v| !v.is_zero());
    Ok(TermPolynomial { k, coeffs, clusters })
}

/// L_k = Σ_{‖Γ‖=k} w(Γ), exact for rational λ.
pub fn expansion_term(g: &LayerGraph, w: &WeightParams, k: usize, opts: &ClusterOptions) -> Result<ExactScalar> {
    Ok(ExactScalar::Exact(term_polynomial(g, k, opts)?.evaluate(&w.lambda)))
}

/// L_1, …, L_k.
pub fn expansion_terms(g: &LayerGraph, lambda: &Fugacity, k: usize, opts: &ClusterOptions) -> Result<Vec<BigRational>> {
    (1..=k).map(|j| Ok(term_polynomial(g, j, opts)?.evaluate(lambda))).collect()
}

/// The closed forms of L_1 and L_2 on B(2d−1, d). The L_2 formula counts
/// size-2 polymers, which do not exist at d = 2.
pub fn closed_form_terms(d: u32, lambda: &Fugacity) -> Result<(BigRational, BigRational)> {
    if d < 2 {
        return Err(Error::Parameter(format!("d must be at least 2, got {d}")));
    }
    let n_big = BigRational::from_integer(binomial(2 * d as u64 - 1, d as u64).into());
    let l = lambda.value();
    let op = lambda.one_plus();
    let d_i = BigInt::from(d);
    let l1 = &n_big * l / rat_pow(&op, d);
    let l2_pairs = -&n_big * BigRational::new(&d_i * &d_i - &d_i + 1, BigInt::from(2)) * l * l / rat_pow(&op, 2 * d);
    let l2_dimers = &n_big * BigRational::from_integer(&d_i * (&d_i - 1) / 2) * l * l / rat_pow(&op, 2 * d - 1);
    Ok((l1, l2_pairs + l2_dimers))
}

/// Σ_{j ≤ k} L_j.
pub fn partial_sum(terms: &[BigRational], k: usize) -> BigRational {
    terms.iter().take(k).fold(BigRational::zero(), |a, t| a + t)
}

/// The truncated expansion with the indexing T_k = Σ_{j < k} L_j.
pub fn truncated_expansion(terms: &[BigRational], k: usize) -> BigRational {
    partial_sum(terms, k.saturating_sub(1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Pass,
    Fail,
}

/// Per-polymer Kotecký–Preiss quantities.
#[derive(Debug, Clone)]
pub struct PolymerMargin {
    pub polymer: Polymer,
    /// Σ over incompatible S of w̃(S) e^{f(S)+g(S)}.
    pub lhs: f64,
    /// f(S₀) = |S₀|/d².
    pub rhs: f64,
}

impl PolymerMargin {
    pub fn margin(&self) -> f64 {
        self.rhs - self.lhs
    }
}

#[derive(Debug, Clone)]
pub struct KpReport {
    pub d: u32,
    pub lambda: Fugacity,
    pub aux_c: f64,
    pub cap: usize,
    pub side: Side,
    /// Σ_{S ∋ v} w(S) exp(C|S|/d² + γ(d,|S|)) for every vertex v.
    pub vertex_sums: Vec<f64>,
    /// 1/d⁴.
    pub vertex_bound: f64,
    pub margins: Vec<PolymerMargin>,
    /// Polymers larger than the cap exist and were left out of every sum.
    pub truncated: bool,
    pub verdict: Verdict,
}

impl KpReport {
    pub fn worst_vertex_sum(&self) -> f64 {
        self.vertex_sums.iter().copied().fold(0.0, f64::max)
    }

    pub fn worst_margin(&self) -> Option<&PolymerMargin> {
        self.margins.iter().min_by(|a, b| a.margin().total_cmp(&b.margin()))
    }

    pub fn status(&self) -> &'static str {
        match (self.verdict, self.truncated) {
            (Verdict::Fail, _) => "fail",
            (Verdict::Pass, true) => "truncated",
            (Verdict::Pass, false) => "pass",
        }
    }

    pub fn to_json(&self, g: &LayerGraph) -> Value {
        let worst = self.worst_margin().map(|m| {
            json!({
                "polymer": m.polymer.vertex_set(g).to_json(g),
                "lhs": m.lhs,
                "rhs": m.rhs,
                "margin": m.margin(),
            })
        });
        let failing = self.margins.iter().filter(|m| m.margin() < 0.0).count();
        json!({
            "d": self.d,
            "lambda": self.lambda.to_string(),
            "aux_c": self.aux_c,
            "cap": self.cap,
            "side": self.side.name(),
            "polymers": self.margins.len(),
            "worst_vertex_sum": self.worst_vertex_sum(),
            "vertex_bound": self.vertex_bound,
            "worst_margin": worst,
            "failing_polymers": failing,
            "truncated": self.truncated,
            "verdict": self.status(),
        })
    }
}

/// Whether some polymer has exactly `size` vertices. By transitivity it is
/// enough to look at sets containing vertex 0.
fn polymer_of_size_exists(g: &LayerGraph, side: Side, size: usize) -> bool {
    let half = g.side_size(side);
    if size > half {
        return false;
    }
    let flow = g.for_each_two_linked_from(side, 0, size, &mut |members: &[u32]| {
        if members.len() == size {
            let mut sorted = members.to_vec();
            sorted.sort_unstable();
            let p = Polymer::from_members_unchecked(g, side, sorted);
            if 2 * p.closure_size() as usize <= half {
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    });
    flow.is_break()
}

/// Evaluates the Kotecký–Preiss condition with f(S) = |S|/d² and
/// g(S) = γ(d,|S|) on all polymers up to `cap` vertices, together with the
/// per-vertex sums that bound it.
pub fn kp_check(g: &LayerGraph, w: &WeightParams, cap: usize, opts: &ClusterOptions) -> Result<KpReport> {
    let d = g.require_middle()?;
    if w.d != d {
        return Err(Error::Parameter(format!("weights are for d = {}, graph has d = {d}", w.d)));
    }
    let side = opts.side;
    let polymers = enumerate_polymers(g, side, cap, opts.visit_cap, opts.exec)?;
    let d2 = (d as f64).powi(2);
    let lam = w.lambda.to_f64();
    let term: Vec<f64> = polymers
        .iter()
        .map(|p| {
            let s = p.size() as f64;
            (w.lambda.ln_weight(p.size(), p.boundary_size()) + w.aux_c * s / d2 + gamma_fn(d, p.size() as u64, lam)).exp()
        })
        .collect();
    let n = g.side_size(side);
    let mut containing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, p) in polymers.iter().enumerate() {
        for &v in p.members() {
            containing[v as usize].push(i);
        }
    }
    let vertex_sums: Vec<f64> = containing.iter().map(|ps| ps.iter().map(|&i| term[i]).sum()).collect();
    // S ∼ S₀ exactly when S meets S₀ or one of its square neighbours
    let idx: Vec<usize> = (0..polymers.len()).collect();
    let margins = map_collect(opts.exec, idx, |i| {
        let p = &polymers[i];
        let mut near: Vec<u32> = p.members().to_vec();
        for &v in p.members() {
            near.extend_from_slice(g.square_neighbors(side, v));
        }
        near.sort_unstable();
        near.dedup();
        let mut hits: Vec<usize> = near.iter().flat_map(|&v| containing[v as usize].iter().copied()).collect();
        hits.sort_unstable();
        hits.dedup();
        let lhs = hits.iter().filter(|&&j| polymers[j].incompatible_with(p)).map(|&j| term[j]).sum();
        PolymerMargin { polymer: p.clone(), lhs, rhs: p.size() as f64 / d2 }
    });
    let vertex_bound = 1.0 / d2 / d2;
    let ok = vertex_sums.iter().all(|&s| s <= vertex_bound) && margins.iter().all(|m| m.margin() >= 0.0);
    Ok(KpReport {
        d,
        lambda: w.lambda.clone(),
        aux_c: w.aux_c,
        cap,
        side,
        vertex_sums,
        vertex_bound,
        margins,
        truncated: polymer_of_size_exists(g, side, cap + 1),
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
    })
}

/// Where the terms of a prediction come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSource {
    ClosedForm,
    Enumerated,
}

impl std::str::FromStr for TermSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed_form" | "closed-form" => Ok(TermSource::ClosedForm),
            "enumerated" => Ok(TermSource::Enumerated),
            _ => Err(Error::Parameter(format!("unknown term source '{s}' (closed_form, enumerated)"))),
        }
    }
}

/// Terms, partial sums and the resulting estimate of ln Z.
#[derive(Debug, Clone)]
pub struct ExpansionReport {
    pub d: u32,
    pub lambda: Fugacity,
    pub terms: Vec<BigRational>,
    pub partial_sums: Vec<BigRational>,
    /// ln 2 + N ln(1+λ) + Σ L_j.
    pub ln_z_estimate: f64,
    /// N d^{11(k+1)−2} (1+λ)^{−d(k+1)+3(k+1)²/2} with constant 1. The true bound
    /// hides an unknown constant, so this is a shape only.
    pub epsilon_shape_bound: f64,
    pub ln_epsilon_shape_bound: f64,
    pub regime_warnings: Vec<String>,
}

impl ExpansionReport {
    /// T_k = Σ_{j<k} L_j.
    pub fn truncated(&self, k: usize) -> BigRational {
        truncated_expansion(&self.terms, k)
    }

    pub fn to_json(&self) -> Value {
        let strs = |v: &[BigRational]| v.iter().map(|r| json!(r.to_string())).collect::<Vec<_>>();
        json!({
            "d": self.d,
            "lambda": self.lambda.to_string(),
            "terms": strs(&self.terms),
            "terms_f64": self.terms.iter().map(rational_to_f64).collect::<Vec<_>>(),
            "partial_sums": strs(&self.partial_sums),
            "ln_Z_estimate": self.ln_z_estimate,
            "epsilon_shape_bound": if self.epsilon_shape_bound.is_finite() { json!(self.epsilon_shape_bound) } else { Value::Null },
            "ln_epsilon_shape_bound": self.ln_epsilon_shape_bound,
            "epsilon_is_shape_only": true,
            "regime_warnings": self.regime_warnings,
        })
    }
}

/// ln of N d^{11k−2} (1+λ)^{−dk+3k²/2}.
pub fn ln_epsilon_shape(d: u32, big_n: f64, lambda: f64, k: usize) -> f64 {
    let (df, kf) = (d as f64, k as f64);
    big_n.ln() + (11.0 * kf - 2.0) * df.ln() - (df * kf - 1.5 * kf * kf) * lambda.ln_1p()
}

/// The prediction ln Z ≈ ln 2 + N ln(1+λ) + Σ_{j≤k} L_j with regime warnings.
pub fn predict_partition(
    d: u32,
    lambda: &Fugacity,
    k: usize,
    source: TermSource,
    opts: &ClusterOptions,
) -> Result<ExpansionReport> {
    if d < 2 {
        return Err(Error::Parameter(format!("d must be at least 2, got {d}")));
    }
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let big_n = binomial(2 * d as u64 - 1, d as u64);
    let mut warnings = Vec::new();
    let terms = match source {
        TermSource::ClosedForm => {
            if k > 2 {
                return Err(Error::Parameter(format!("closed forms exist only for k <= 2, got {k}")));
            }
            let (l1, l2) = closed_form_terms(d, lambda)?;
            if d == 2 && k == 2 {
                warnings.push("closed-form L2 counts size-2 polymers, which do not exist at d = 2".to_string());
            }
            [l1, l2].into_iter().take(k).collect()
        }
        TermSource::Enumerated => {
            let g = LayerGraph::new(2 * d - 1, d)?;
            expansion_terms(&g, lambda, k, opts)?
        }
    };
    let partial_sums: Vec<BigRational> = (1..=k).map(|j| partial_sum(&terms, j)).collect();
    let n_f = big_n.to_f64().unwrap_or(f64::INFINITY);
    let ln_z = std::f64::consts::LN_2 + n_f * lambda.ln_one_plus() + rational_to_f64(&partial_sums[k - 1]);
    let lam = lambda.to_f64();
    let ln_eps = ln_epsilon_shape(d, n_f, lam, k + 1);
    warnings.extend(regime_warnings(d, lam));
    if k > 1 && 48 * k > d as usize {
        warnings.push(format!("k = {k} exceeds d/48; the truncation lemma does not cover it"));
    }
    Ok(ExpansionReport {
        d,
        lambda: lambda.clone(),
        terms,
        partial_sums,
        ln_z_estimate: ln_z,
        epsilon_shape_bound: ln_eps.exp(),
        ln_epsilon_shape_bound: ln_eps,
        regime_warnings: warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    fn opts(exec: Exec) -> ClusterOptions {
        ClusterOptions { exec, ..Default::default() }
    }

    #[test]
    fn cluster_weights_on_the_hexagon() {
        let g = LayerGraph::new(3, 2).unwrap();
        let w = WeightParams::plain(Fugacity::one(), 2);
        let p = |s: &str| Polymer::new(&g, &crate::VertexSet::parse(&g, Side::Upper, &[s]).unwrap()).unwrap();
        let single = Cluster::new(vec![(p("1,2"), 1)]).unwrap();
        assert_eq!(cluster_weight(&single, &w).unwrap().as_exact(), Some(&q(1, 4)));
        let pair = Cluster::new(vec![(p("1,3"), 1), (p("1,2"), 1)]).unwrap();
        assert_eq!(pair.orderings, 2);
        assert_eq!(cluster_weight(&pair, &w).unwrap().as_exact(), Some(&q(-1, 32)));
        let twice = Cluster::new(vec![(p("1,2"), 2)]).unwrap();
        assert_eq!(twice.orderings, 1);
        assert_eq!(cluster_weight(&twice, &w).unwrap().as_exact(), Some(&q(-1, 32)));
    }

    #[test]
    fn disconnected_multiset_is_not_a_cluster() {
        let g = LayerGraph::new(5, 3).unwrap();
        let p = |s: &str| Polymer::new(&g, &crate::VertexSet::parse(&g, Side::Upper, &[s]).unwrap()).unwrap();
        assert!(Cluster::new(vec![(p("1,2,3"), 1), (p("1,4,5"), 1)]).is_err());
    }

    #[test]
    fn cluster_counts() {
        let g = LayerGraph::new(5, 3).unwrap();
        let one = enumerate_clusters(&g, 1, &opts(Exec::Sequential)).unwrap();
        assert_eq!(one.len(), 10);
        let two = enumerate_clusters(&g, 2, &opts(Exec::Parallel)).unwrap();
        let repeated = two.iter().filter(|c| c.parts.len() == 1 && c.parts[0].1 == 2).count();
        let pairs = two.iter().filter(|c| c.parts.len() == 2).count();
        let dimers = two.iter().filter(|c| c.tuple_len() == 1).count();
        assert_eq!((repeated, pairs, dimers), (10, 30, 30));
        assert!(two.iter().filter(|c| c.parts.len() == 2).all(|c| c.orderings == 2));

        let h = LayerGraph::new(3, 2).unwrap();
        let two = enumerate_clusters(&h, 2, &opts(Exec::Sequential)).unwrap();
        assert_eq!(two.len(), 6);
        assert!(two.iter().all(|c| c.tuple_len() == 2));
    }

    #[test]
    fn terms_match_closed_forms() {
        let one = Fugacity::one();
        let g = LayerGraph::new(5, 3).unwrap();
        let t = expansion_terms(&g, &one, 2, &opts(Exec::Parallel)).unwrap();
        assert_eq!(t, vec![q(5, 4), q(25, 64)]);
        assert_eq!(closed_form_terms(3, &one).unwrap(), (q(5, 4), q(25, 64)));

        let h = LayerGraph::new(3, 2).unwrap();
        let t = expansion_terms(&h, &one, 2, &opts(Exec::Sequential)).unwrap();
        assert_eq!(t, vec![q(3, 4), q(-9, 32)]);
        assert_eq!(closed_form_terms(2, &one).unwrap(), (q(3, 4), q(3, 32)));
        assert_eq!(closed_form_terms(10, &one).unwrap().0, q(92378, 1024));
    }

    #[test]
    fn weights_agree_with_polynomial() {
        let g = LayerGraph::new(5, 3).unwrap();
        let w = WeightParams::plain(Fugacity::from_ratio(2, 3).unwrap(), 3);
        for k in 1..=3 {
            let direct = enumerate_clusters(&g, k, &opts(Exec::Sequential))
                .unwrap()
                .iter()
                .map(|c| {
                    let x = cluster_weight(c, &w).unwrap();
                    x.as_exact().unwrap() * BigRational::from_integer(c.orderings.into())
                })
                .fold(BigRational::zero(), |a, b| a + b);
            let poly = expansion_term(&g, &w, k, &opts(Exec::Parallel)).unwrap();
            assert_eq!(poly.as_exact(), Some(&direct), "k={k}");
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let g = LayerGraph::new(5, 3).unwrap();
        let a = term_polynomial(&g, 3, &opts(Exec::Sequential)).unwrap();
        let b = term_polynomial(&g, 3, &opts(Exec::Parallel)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn visit_cap_is_a_scale_error() {
        let g = LayerGraph::new(7, 4).unwrap();
        let o = ClusterOptions { visit_cap: 50, ..Default::default() };
        assert!(matches!(term_polynomial(&g, 3, &o), Err(Error::Scale(_))));
    }

    #[test]
    fn kp_on_the_hexagon() {
        let g = LayerGraph::new(3, 2).unwrap();
        let w = WeightParams::new(Fugacity::one(), 1.0, 2).unwrap();
        let r = kp_check(&g, &w, 1, &ClusterOptions::default()).unwrap();
        // γ(2,1) falls in the middle piece: (2·1/12) ln 2
        let expect = 0.25 * 0.25f64.exp() * (std::f64::consts::LN_2 / 6.0).exp();
        for s in &r.vertex_sums {
            assert!((s - expect).abs() < 1e-12);
        }
        assert_eq!(r.vertex_bound, 1.0 / 16.0);
        assert_eq!(r.verdict, Verdict::Fail);
        // no polymers of size 2 at d = 2
        assert!(!r.truncated);
    }

    #[test]
    fn kp_small_lambda_passes() {
        let g = LayerGraph::new(5, 3).unwrap();
        let w = WeightParams::new(Fugacity::from_ratio(1, 1_000_000).unwrap(), 1.0, 3).unwrap();
        let r = kp_check(&g, &w, 2, &ClusterOptions::default()).unwrap();
        assert!(r.worst_vertex_sum() < 1e-5);
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.truncated);
        assert_eq!(r.status(), "truncated");
    }

    #[test]
    fn prediction_values() {
        let one = Fugacity::one();
        let r = predict_partition(3, &one, 2, TermSource::ClosedForm, &ClusterOptions::default()).unwrap();
        let expect = 11.0 * std::f64::consts::LN_2 + 1.25 + 25.0 / 64.0;
        assert!((r.ln_z_estimate - expect).abs() < 1e-12);
        assert_eq!(r.partial_sums[1], q(105, 64));
        assert_eq!(r.truncated(2), q(5, 4));
        assert!(!r.regime_warnings.is_empty());

        let r = predict_partition(2, &one, 1, TermSource::Enumerated, &ClusterOptions::default()).unwrap();
        assert!((r.ln_z_estimate - (4.0 * std::f64::consts::LN_2 + 0.75)).abs() < 1e-12);
        assert!(predict_partition(3, &one, 3, TermSource::ClosedForm, &ClusterOptions::default()).is_err());

        let tiny = Fugacity::from_ratio(1, 1_000_000_000).unwrap();
        let r = predict_partition(3, &tiny, 1, TermSource::ClosedForm, &ClusterOptions::default()).unwrap();
        assert!((r.ln_z_estimate - std::f64::consts::LN_2).abs() < 1e-6);
        assert!(r.regime_warnings.iter().any(|w| w.contains("below")));
    }

    #[test]
    fn epsilon_shape() {
        // d = 3, λ = 1, k + 1 = 3: 10 · 3^31 · 2^{-9 + 13.5}
        let v = ln_epsilon_shape(3, 10.0, 1.0, 3);
        let expect = 10f64.ln() + 31.0 * 3f64.ln() + 4.5 * std::f64::consts::LN_2;
        assert!((v - expect).abs() < 1e-12);
    }
}
