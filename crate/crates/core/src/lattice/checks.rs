//! Exhaustive (or seeded-sample) checkers for the expansion inequalities of the
//! middle-layers graph and for the count of 2-linked sets through a vertex.

use std::ops::ControlFlow;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ConnectedSearch, LayerGraph, Side, VertexSet};
use crate::error::{Error, Result};
use crate::scalar::binomial_u64;

/// Which isoperimetric inequality to scan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsoMode {
    /// |S| ≤ d/4 implies |N(S)| ≥ d|S| − |S|²/2.
    Small,
    /// |S| ≤ d⁴ implies |N(S)| ≥ d|S|/6.
    Medium,
    /// |S| ≤ N/2 implies |N(S)| ≥ (1 + 1/(2d−1))|S|.
    Large,
}

impl IsoMode {
    pub fn label(self) -> &'static str {
        match self {
            IsoMode::Small => "i",
            IsoMode::Medium => "ii",
            IsoMode::Large => "iii",
        }
    }

    fn max_size(self, d: u64, big_n: u64) -> u64 {
        match self {
            IsoMode::Small => d / 4,
            IsoMode::Medium => d.saturating_pow(4),
            IsoMode::Large => big_n / 2,
        }
        .min(big_n)
    }

    /// The bound as a float, for the reported ratio.
    fn bound(self, d: u64, s: u64) -> f64 {
        let (d, s) = (d as f64, s as f64);
        match self {
            IsoMode::Small => d * s - s * s / 2.0,
            IsoMode::Medium => d * s / 6.0,
            IsoMode::Large => (1.0 + 1.0 / (2.0 * d - 1.0)) * s,
        }
    }

    /// Integer form of `boundary >= bound`.
    fn holds(self, d: u64, s: u64, boundary: u64) -> bool {
        match self {
            IsoMode::Small => 2 * boundary + s * s >= 2 * d * s,
            IsoMode::Medium => 6 * boundary >= d * s,
            IsoMode::Large => (2 * d - 1) * boundary >= 2 * d * s,
        }
    }
}

impl std::str::FromStr for IsoMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "i" => Ok(IsoMode::Small),
            "ii" => Ok(IsoMode::Medium),
            "iii" => Ok(IsoMode::Large),
            _ => Err(Error::Parameter(format!("isoperimetry mode must be i, ii or iii, got '{s}'"))),
        }
    }
}

/// Limits for [`isoperimetry_check`]. Sizes whose subset count exceeds
/// `exhaustive_cap` are checked on `samples` seeded random subsets instead.
#[derive(Debug, Clone)]
pub struct IsoBudget {
    pub max_size: Option<u64>,
    pub exhaustive_cap: u64,
    pub samples: usize,
    pub seed: u64,
}

impl Default for IsoBudget {
    fn default() -> Self {
        IsoBudget { max_size: None, exhaustive_cap: 5_000_000, samples: 100_000, seed: 0x1505 }
    }
}

#[derive(Debug, Clone)]
pub struct IsoReport {
    pub mode: IsoMode,
    pub max_size: u64,
    pub scanned: u64,
    /// True when at least one size was sampled rather than scanned exhaustively.
    pub sampled: bool,
    /// min |N(S)| / bound over scanned sets; `None` when nothing was scanned.
    pub worst_ratio: Option<f64>,
    pub witness: Option<VertexSet>,
    pub pass: bool,
}

pub fn isoperimetry_check(g: &LayerGraph, mode: IsoMode, side: Side, budget: &IsoBudget) -> Result<IsoReport> {
    let d = g.require_middle()? as u64;
    let big_n = g.side_size(side) as u64;
    let mut hi = mode.max_size(d, big_n);
    if let Some(cap) = budget.max_size {
        hi = hi.min(cap);
    }
    let mut report =
        IsoReport { mode, max_size: hi, scanned: 0, sampled: false, worst_ratio: None, witness: None, pass: true };
    let mut stamp = vec![0u64; g.side_size(side.opposite())];
    let mut tick = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut members: Vec<u32> = Vec::new();

    let mut consider = |members: &[u32], report: &mut IsoReport| {
        tick += 1;
        let mut boundary = 0u64;
        for &v in members {
            for &w in g.neighbors(side, v) {
                if stamp[w as usize] != tick {
                    stamp[w as usize] = tick;
                    boundary += 1;
                }
            }
        }
        let s = members.len() as u64;
        let ratio = boundary as f64 / mode.bound(d, s);
        report.scanned += 1;
        if report.worst_ratio.is_none_or(|r| ratio < r) {
            report.worst_ratio = Some(ratio);
            report.witness = Some(VertexSet::from_ids(g, side, members.iter().copied()));
        }
        if !mode.holds(d, s, boundary) {
            report.pass = false;
        }
    };

    for s in 1..=hi {
        let total = binomial_u64(big_n, s).unwrap_or(u64::MAX);
        if total <= budget.exhaustive_cap {
            members.clear();
            members.extend(0..s as u32);
            loop {
                consider(&members, &mut report);
                if !next_combination(&mut members, big_n as u32) {
                    break;
                }
            }
        } else {
            report.sampled = true;
            for _ in 0..budget.samples {
                let picked = rand::seq::index::sample(&mut rng, big_n as usize, s as usize);
                members.clear();
                members.extend(picked.iter().map(|i| i as u32));
                consider(&members, &mut report);
            }
        }
    }
    Ok(report)
}

/// Advances to the next `k`-combination of `0..n` in lexicographic order.
pub(crate) fn next_combination(c: &mut [u32], n: u32) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < n - (k - i) as u32 {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

#[derive(Debug, Clone)]
pub struct LinkedCount {
    pub count: u64,
    /// The bound d^{6t} (as a float; it overflows integers quickly).
    pub bound: f64,
    pub within_bound: bool,
    pub listing: Option<Vec<VertexSet>>,
}

/// Counts the 2-linked sets of size `t` on `side` that contain vertex `v`.
///
/// `cap` bounds the number of visited sets of any size; exceeding it is a scale error.
pub fn enumerate_two_linked_containing(
    g: &LayerGraph,
    side: Side,
    v: u32,
    t: usize,
    list: bool,
    cap: u64,
) -> Result<LinkedCount> {
    if t == 0 {
        return Err(Error::Parameter("t must be at least 1".into()));
    }
    if v as usize >= g.side_size(side) {
        return Err(Error::Parameter(format!("vertex id {v} out of range")));
    }
    let d = g.middle_d().unwrap_or_else(|| g.k().max(g.n() - g.k() + 1)) as f64;
    let mut count = 0u64;
    let mut visited = 0u64;
    let mut listing = list.then(Vec::new);
    let mut search = ConnectedSearch::new(g.side_size(side), |x| g.square_neighbors(side, x), |_| true, t);
    let flow = search.run(v, &mut |members: &[u32]| {
        visited += 1;
        if visited > cap {
            return ControlFlow::Break(());
        }
        if members.len() == t {
            count += 1;
            if let Some(l) = listing.as_mut() {
                l.push(VertexSet::from_ids(g, side, members.iter().copied()));
            }
        }
        ControlFlow::Continue(())
    });
    if flow.is_break() {
        return Err(Error::Scale(format!("more than {cap} 2-linked sets visited for t={t}")));
    }
    let bound = d.powi(6 * t as i32);
    Ok(LinkedCount { count, bound, within_bound: (count as f64) <= bound, listing })
}
