//! The Kotecký–Preiss sums recomputed pair by pair, in the opposite order.

use midlayer::cluster::{kp_check, ClusterOptions};
use midlayer::polymer::{enumerate_polymers, gamma_fn, Polymer, WeightParams, DEFAULT_VISIT_CAP};
use midlayer::{Exec, Fugacity, LayerGraph, Side};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn term(p: &Polymer, d: u32, lambda: f64, c: f64) -> f64 {
    let (s, b) = (p.size() as f64, p.boundary_size() as f64);
    let d2 = (d as f64).powi(2);
    (s * lambda.ln() - b * lambda.ln_1p() + c * s / d2 + gamma_fn(d, p.size() as u64, lambda)).exp()
}

fn recompute(d: u32, lambda: Fugacity, c: f64, cap: usize) {
    let g = LayerGraph::new(2 * d - 1, d).unwrap();
    let w = WeightParams::new(lambda.clone(), c, d).unwrap();
    let report = kp_check(&g, &w, cap, &ClusterOptions::default()).unwrap();
    let polymers = enumerate_polymers(&g, Side::Upper, cap, DEFAULT_VISIT_CAP, Exec::Sequential).unwrap();
    let lam = lambda.to_f64();
    let terms: Vec<f64> = polymers.iter().map(|p| term(p, d, lam, c)).collect();

    for v in (0..g.side_size(Side::Upper) as u32).rev() {
        let mut sum = 0.0;
        for (p, t) in polymers.iter().zip(&terms).rev() {
            if p.members().contains(&v) {
                sum += t;
            }
        }
        assert!(close(sum, report.vertex_sums[v as usize]), "vertex {v}: {sum} vs {}", report.vertex_sums[v as usize]);
    }

    assert_eq!(report.margins.len(), polymers.len());
    for m in &report.margins {
        let mut lhs = 0.0;
        for (p, t) in polymers.iter().zip(&terms).rev() {
            if p.boundary().intersects(m.polymer.boundary()) {
                lhs += t;
            }
        }
        assert!(close(lhs, m.lhs), "{:?}: {lhs} vs {}", m.polymer.members(), m.lhs);
        assert!(close(m.rhs, m.polymer.size() as f64 / (d as f64).powi(2)));
    }
}

#[test]
fn hexagon_cap_one() {
    recompute(2, Fugacity::one(), 1.0, 1);
}

#[test]
fn d3_cap_three() {
    recompute(3, Fugacity::one(), 1.0, 3);
    recompute(3, Fugacity::from_ratio(1, 4).unwrap(), 2.0, 3);
}

#[test]
fn d4_cap_two() {
    recompute(4, Fugacity::from_ratio(3, 2).unwrap(), 1.5, 2);
}
