//! Exact ground truth at small d: the independence polynomial, the restricted
//! sums behind the polymer partition function, and the closed-form estimates
//! they are compared with.

mod coverage;
mod estimates;
mod restricted;

use std::time::Instant;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exec::{map_collect, Exec};
use crate::lattice::{LayerGraph, Side};
use crate::scalar::{binomial, rational_ln, Fugacity};

pub use coverage::CoverageCounter;
pub use estimates::{example31_lower_bound, expected_boundary, theorem14_estimate, Example31, ExpectedBoundary, Theorem14};
pub(crate) use restricted::for_each_polymer_subset;
pub use restricted::{
    both_sides_coefficients, both_sides_sum, polymer_subset_histogram, restricted_sum, xi_exact, RestrictedFamily,
    MAX_BOTH_SIDES, MAX_RESTRICTED_SIDE,
};

/// Largest side the Gray-code sweep accepts.
pub const MAX_SWEEP_SIDE: usize = 36;
/// Largest total vertex count for the all-subsets method.
pub const MAX_NAIVE_VERTICES: usize = 26;
/// The sweep fixes this many top bits per shard.
pub const SHARD_BITS: u32 = 8;
/// The sweep enumerates this many low bits per Gray-code state.
pub const BLOCK_BITS: u32 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    GrayCode,
    Naive,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::GrayCode => "graycode",
            Method::Naive => "naive",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "graycode" | "gray" => Ok(Method::GrayCode),
            "naive" => Ok(Method::Naive),
            _ => Err(Error::Parameter(format!("unknown method '{s}' (graycode, naive)"))),
        }
    }
}

/// counts[a][b]: number of sets A on one side with |A| = a and |N(A)| = b.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SideHistogram {
    /// Size of the swept side.
    pub side_size: usize,
    /// Size of the opposite side.
    pub other_size: usize,
    counts: Vec<u64>,
}

impl SideHistogram {
    pub fn new(side_size: usize, other_size: usize) -> Self {
        SideHistogram { side_size, other_size, counts: vec![0; (side_size + 1) * (other_size + 1)] }
    }

    pub fn get(&self, a: usize, b: usize) -> u64 {
        self.counts[a * (self.other_size + 1) + b]
    }

    pub fn add(&mut self, a: usize, b: usize, c: u64) {
        self.counts[a * (self.other_size + 1) + b] += c;
    }

    fn merge(&mut self, other: &SideHistogram) {
        for (x, y) in self.counts.iter_mut().zip(&other.counts) {
            *x += y;
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Σ counts[a][b] λ^a (1+λ)^{M−b}, M the opposite side size.
    pub fn evaluate(&self, lambda: &Fugacity) -> BigRational {
        let m = self.other_size;
        let one_plus = lambda.one_plus();
        let mut op_pow = vec![BigRational::from_integer(1.into()); m + 1];
        for i in 1..=m {
            op_pow[i] = &op_pow[i - 1] * &one_plus;
        }
        let mut total = BigRational::zero();
        let mut l_pow = BigRational::from_integer(1.into());
        for a in 0..=self.side_size {
            let mut row = BigRational::zero();
            for b in 0..=m {
                let c = self.get(a, b);
                if c != 0 {
                    row += &op_pow[m - b] * BigRational::from_integer(c.into());
                }
            }
            total += row * &l_pow;
            l_pow *= lambda.value();
        }
        total
    }

    /// Coefficients of the polynomial Σ counts[a][b] λ^a (1+λ)^{M−b} in λ.
    pub fn coefficients(&self) -> Vec<BigUint> {
        let m = self.other_size;
        let mut coef = vec![BigUint::zero(); self.side_size + m + 1];
        for a in 0..=self.side_size {
            for b in 0..=m {
                let c = self.get(a, b);
                if c == 0 {
                    continue;
                }
                for j in 0..=m - b {
                    coef[a + j] += binomial((m - b) as u64, j as u64) * c;
                }
            }
        }
        while coef.len() > 1 && coef.last().is_some_and(Zero::is_zero) {
            coef.pop();
        }
        coef
    }
}

/// Gray-code sweep over all subsets of `side`, sharded on the top bits.
pub fn sweep_histogram(g: &LayerGraph, side: Side, exec: Exec) -> Result<(SideHistogram, usize)> {
    let n = g.side_size(side);
    if n > MAX_SWEEP_SIDE {
        return Err(Error::Scale(format!("Gray-code sweep over a side of {n} vertices exceeds the cap of {MAX_SWEEP_SIDE}")));
    }
    let m = g.side_size(side.opposite());
    let shard_bits = SHARD_BITS.min(n as u32);
    let low = n as u32 - shard_bits;
    let shards: Vec<u64> = (0..1u64 << shard_bits).collect();
    let base = CoverageCounter::new(g, side);
    // The lowest `block` vertices are enumerated directly from neighbourhood
    // masks; the Gray code runs over the bits in between.
    let block = if m <= 64 { BLOCK_BITS.min(low) } else { 0 };
    let block_nbr: Vec<u64> = (0..1u32 << block)
        .map(|x| (0..block).filter(|j| x >> j & 1 == 1).fold(0u64, |acc, j| acc | g.neighbors(side, j).iter().fold(0, |a, &w| a | 1 << w)))
        .collect();
    let block_size: Vec<usize> = (0..1u32 << block).map(|x| x.count_ones() as usize).collect();
    let parts = map_collect(exec, shards, |s| {
        let mut c = base.clone();
        for j in 0..shard_bits {
            if s >> j & 1 == 1 {
                c.toggle(low + j);
            }
        }
        let mut hist = SideHistogram::new(n, m);
        let stride = m + 1;
        let mut record = |c: &CoverageCounter| {
            if block == 0 {
                hist.counts[c.size() * stride + c.covered()] += 1;
                return;
            }
            let cov = c.cover_bits()[0];
            let a = c.size();
            for (x, nb) in block_nbr.iter().enumerate() {
                hist.counts[(a + block_size[x]) * stride + (cov | nb).count_ones() as usize] += 1;
            }
        };
        record(&c);
        for i in 1u64..1 << (low - block) {
            c.toggle(block + i.trailing_zeros());
            record(&c);
        }
        hist
    });
    let mut total = SideHistogram::new(n, m);
    for p in &parts {
        total.merge(p);
    }
    Ok((total, parts.len()))
}

/// Counts of independent sets by size, from all 2^{|V|} vertex subsets.
pub fn naive_coefficients(g: &LayerGraph) -> Result<Vec<BigUint>> {
    let nu = g.side_size(Side::Upper);
    let nl = g.side_size(Side::Lower);
    if nu + nl > MAX_NAIVE_VERTICES {
        return Err(Error::Scale(format!(
            "all-subsets count over {} vertices exceeds the cap of {MAX_NAIVE_VERTICES}",
            nu + nl
        )));
    }
    let nbr: Vec<u64> = (0..nu as u32).map(|u| g.neighbors(Side::Upper, u).iter().fold(0u64, |m, &w| m | 1 << w)).collect();
    let mut counts = vec![0u64; nu + nl + 1];
    for all in 0u64..1 << (nu + nl) {
        let upper = all & ((1 << nu) - 1);
        let lower = all >> nu;
        let mut bits = upper;
        let mut ok = true;
        while bits != 0 {
            let u = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            if nbr[u] & lower != 0 {
                ok = false;
                break;
            }
        }
        if ok {
            counts[all.count_ones() as usize] += 1;
        }
    }
    while counts.len() > 1 && counts.last() == Some(&0) {
        counts.pop();
    }
    Ok(counts.into_iter().map(BigUint::from).collect())
}

/// The independence polynomial of B(n,k) as integer coefficients.
#[derive(Debug, Clone)]
pub struct ExactZ {
    pub n: u32,
    pub k: u32,
    pub method: Method,
    pub shards: usize,
    /// coefficients[j] = number of independent sets of size j.
    pub coefficients: Vec<BigUint>,
    /// Present for the Gray-code method.
    pub histogram: Option<SideHistogram>,
    pub wall_time_ms: u128,
}

impl ExactZ {
    pub fn value(&self, lambda: &Fugacity) -> BigRational {
        let mut acc = BigRational::zero();
        for c in self.coefficients.iter().rev() {
            acc = acc * lambda.value() + BigRational::from_integer(c.clone().into());
        }
        acc
    }

    pub fn count(&self) -> BigUint {
        self.coefficients.iter().sum()
    }

    pub fn to_json(&self, lambda: &Fugacity, timing: bool) -> Value {
        let z = self.value(lambda);
        let mut v = json!({
            "n": self.n,
            "k": self.k,
            "d": if self.n == 2 * self.k - 1 { json!(self.k) } else { Value::Null },
            "lambda": lambda.to_string(),
            "Z": z.to_string(),
            "ln_Z": rational_ln(&z),
            "method": self.method.name(),
            "shards": self.shards,
            "coefficients": self.coefficients.iter().map(|c| c.to_string()).collect::<Vec<_>>(),
            "count": self.count().to_string(),
        });
        if timing {
            v["wall_time_ms"] = json!(self.wall_time_ms as u64);
        }
        v
    }
}

/// Z(λ) = Σ_I λ^{|I|} over independent sets. The Gray-code method sweeps one
/// side A and adds λ^{|A|}(1+λ)^{M−|N(A)|}, which is exact because each layer
/// is independent; the naive method checks every vertex subset.
pub fn exact_z(g: &LayerGraph, method: Method, exec: Exec) -> Result<ExactZ> {
    let start = Instant::now();
    let (coefficients, histogram, shards) = match method {
        Method::GrayCode => {
            let (h, shards) = sweep_histogram(g, Side::Upper, exec)?;
            (h.coefficients(), Some(h), shards)
        }
        Method::Naive => (naive_coefficients(g)?, None, 1),
    };
    Ok(ExactZ {
        n: g.n(),
        k: g.k(),
        method,
        shards,
        coefficients,
        histogram,
        wall_time_ms: start.elapsed().as_millis(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: &[u64]) -> Vec<BigUint> {
        v.iter().map(|&x| BigUint::from(x)).collect()
    }

    #[test]
    fn hexagon_polynomial() {
        let g = LayerGraph::new(3, 2).unwrap();
        for exec in [Exec::Sequential, Exec::Parallel] {
            let z = exact_z(&g, Method::GrayCode, exec).unwrap();
            assert_eq!(z.coefficients, big(&[1, 6, 9, 2]));
            assert_eq!(z.value(&Fugacity::one()), BigRational::from_integer(18.into()));
        }
        assert_eq!(exact_z(&g, Method::Naive, Exec::Sequential).unwrap().coefficients, big(&[1, 6, 9, 2]));
    }

    #[test]
    fn methods_agree_on_five_three() {
        let g = LayerGraph::new(5, 3).unwrap();
        let a = exact_z(&g, Method::GrayCode, Exec::Parallel).unwrap();
        let b = exact_z(&g, Method::Naive, Exec::Parallel).unwrap();
        assert_eq!(a.coefficients, b.coefficients);
        assert_eq!(a.shards, 256);
        let lam = Fugacity::from_ratio(2, 3).unwrap();
        assert_eq!(a.value(&lam), a.histogram.as_ref().unwrap().evaluate(&lam));
    }

    #[test]
    fn methods_agree_off_middle() {
        for (n, k) in [(4, 2), (5, 2), (5, 4), (4, 1), (6, 1)] {
            let g = LayerGraph::new(n, k).unwrap();
            let a = exact_z(&g, Method::GrayCode, Exec::Sequential).unwrap();
            let b = exact_z(&g, Method::Naive, Exec::Sequential).unwrap();
            assert_eq!(a.coefficients, b.coefficients, "B({n},{k})");
        }
    }

    #[test]
    fn zero_fugacity_limit() {
        let g = LayerGraph::new(5, 3).unwrap();
        let z = exact_z(&g, Method::GrayCode, Exec::Sequential).unwrap();
        assert_eq!(z.coefficients[0], BigUint::from(1u32));
        let tiny = Fugacity::from_ratio(1, 1_000_000_000_000).unwrap();
        assert!(rational_ln(&z.value(&tiny)).abs() < 1e-9);
    }

    #[test]
    fn caps() {
        let g = LayerGraph::new(9, 5).unwrap();
        assert!(matches!(exact_z(&g, Method::GrayCode, Exec::Sequential), Err(Error::Scale(_))));
        let g = LayerGraph::new(7, 4).unwrap();
        assert!(matches!(exact_z(&g, Method::Naive, Exec::Sequential), Err(Error::Scale(_))));
    }

    #[test]
    fn json_shape() {
        let g = LayerGraph::new(3, 2).unwrap();
        let z = exact_z(&g, Method::GrayCode, Exec::Sequential).unwrap();
        let v = z.to_json(&Fugacity::one(), false);
        assert_eq!(v["Z"], "18");
        assert_eq!(v["method"], "graycode");
        assert!(v.get("wall_time_ms").is_none());
        assert!(z.to_json(&Fugacity::one(), true).get("wall_time_ms").is_some());
    }
}
