//! L_k against the coefficients of the formal logarithm of Ξ, where Ξ is built
//! directly from polymer configurations. No clusters and no Ursell functions.

use midlayer::cluster::{expansion_terms, ClusterOptions};
use midlayer::{Exec, Fugacity, LayerGraph, Side, VertexSet};
use num_rational::BigRational;
use num_traits::{One, Zero};

/// Calls `f` on every `size`-subset of `0..n`.
fn for_each_subset(n: u32, size: usize, f: &mut impl FnMut(&[u32])) {
    fn rec(n: u32, start: u32, size: usize, cur: &mut Vec<u32>, f: &mut impl FnMut(&[u32])) {
        if cur.len() == size {
            f(cur);
            return;
        }
        for v in start..n {
            cur.push(v);
            rec(n, v + 1, size, cur, f);
            cur.pop();
        }
    }
    rec(n, 0, size, &mut Vec::new(), f);
}

/// a[s] = Σ λ^s / (1+λ)^{|N(A)|} over upper sets A of size s whose 2-linked
/// components all have closure at most N/2. Such an A is exactly the union of a
/// polymer configuration, and its weight is the product of the polymer weights.
fn configuration_series(g: &LayerGraph, lambda: &Fugacity, k: usize) -> Vec<BigRational> {
    let n = g.side_size(Side::Upper);
    let mut a = vec![BigRational::zero(); k + 1];
    a[0] = BigRational::one();
    for (s, slot) in a.iter_mut().enumerate().skip(1) {
        for_each_subset(n as u32, s, &mut |ids| {
            let set = VertexSet::from_ids(g, Side::Upper, ids.iter().copied());
            let ok = g.two_linked_components(&set).iter().all(|c| 2 * g.closure(c).len() <= n);
            if ok {
                *slot += lambda.weight(s as u32, g.neighborhood(&set).len() as u32);
            }
        });
    }
    a
}

/// b with exp(Σ b_n t^n) = Σ a_n t^n, a_0 = 1, via n a_n = Σ_j j b_j a_{n−j}.
fn formal_log(a: &[BigRational]) -> Vec<BigRational> {
    let mut b = vec![BigRational::zero(); a.len()];
    for n in 1..a.len() {
        let mut acc = BigRational::from_integer((n as i64).into()) * &a[n];
        for j in 1..n {
            acc -= BigRational::from_integer((j as i64).into()) * &b[j] * &a[n - j];
        }
        b[n] = acc / BigRational::from_integer((n as i64).into());
    }
    b
}

fn compare(d: u32, k: usize, lambdas: &[Fugacity]) {
    let g = LayerGraph::new(2 * d - 1, d).unwrap();
    let opts = ClusterOptions { exec: Exec::default(), ..Default::default() };
    for lambda in lambdas {
        let want = formal_log(&configuration_series(&g, lambda, k));
        let got = expansion_terms(&g, lambda, k, &opts).unwrap();
        for j in 1..=k {
            assert_eq!(got[j - 1], want[j], "d={d} λ={lambda} L_{j}");
        }
    }
}

fn lambdas() -> Vec<Fugacity> {
    vec![Fugacity::from_ratio(1, 2).unwrap(), Fugacity::one(), Fugacity::from_ratio(3, 1).unwrap()]
}

#[test]
fn hexagon_terms_up_to_six() {
    compare(2, 6, &lambdas());
}

#[test]
fn d3_terms_up_to_four() {
    compare(3, 4, &lambdas());
}

#[test]
fn d4_terms_up_to_three() {
    compare(4, 3, &[Fugacity::one()]);
}

#[test]
fn sequential_matches_parallel() {
    let g = LayerGraph::new(5, 3).unwrap();
    let l = Fugacity::one();
    let seq = expansion_terms(&g, &l, 4, &ClusterOptions { exec: Exec::Sequential, ..Default::default() }).unwrap();
    let par = expansion_terms(&g, &l, 4, &ClusterOptions { exec: Exec::Parallel, ..Default::default() }).unwrap();
    assert_eq!(seq, par);
}
