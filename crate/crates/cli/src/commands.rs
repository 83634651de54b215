use midlayer::cluster::{kp_check as kp, predict_partition, ClusterOptions, ExpansionReport, TermSource};
use midlayer::lattice::{enumerate_two_linked_containing, isoperimetry_check, IsoBudget, IsoMode};
use midlayer::oracle::{
    both_sides_coefficients, example31_lower_bound, exact_z, expected_boundary, polymer_subset_histogram,
    theorem14_estimate, Method,
};
use midlayer::polymer::{container_bound, enumerate_container_family, regime_warnings, WeightParams, DEFAULT_VISIT_CAP};
use midlayer::sampler::{minority_defect_stats, structure_census, CensusMode, MuHatSampler, SampleRun};
use midlayer::scalar::{rat_pow, rational_ln};
use midlayer::{Error, Exec, Fugacity, LayerGraph, Result, Side, VertexSet};
use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::Zero;
use serde_json::{json, Map, Value};

use crate::emit::{Report, Table};
use crate::{CensusArgs, ContainerArgs, CountArgs, EstimateArgs, ExpandArgs, GraphArgs, KpArgs, SampleArgs, Shape};

/// Largest sample run the CLI will hold in memory.
const MAX_SAMPLES: u64 = 10_000_000;

pub struct Ctx {
    pub exec: Exec,
}

impl Ctx {
    fn cluster_opts(&self) -> ClusterOptions {
        ClusterOptions { exec: self.exec, ..Default::default() }
    }
}

fn object(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => Map::new(),
    }
}

fn middle(d: u32) -> Result<LayerGraph> {
    if d < 1 {
        return Err(Error::Parameter("d must be at least 1".into()));
    }
    LayerGraph::new(2 * d - 1, d)
}

fn graph_of(shape: &Shape) -> Result<LayerGraph> {
    match (shape.d, shape.n, shape.k) {
        (Some(d), None, None) => middle(d),
        (None, Some(n), Some(k)) => LayerGraph::new(n, k),
        _ => Err(Error::Parameter("give either --d or both --n and --k".into())),
    }
}

fn shape_inputs(g: &LayerGraph) -> Value {
    json!({ "n": g.n(), "k": g.k(), "d": g.middle_d() })
}

fn poly_eval(coef: &[BigUint], lambda: &Fugacity) -> BigRational {
    let mut acc = BigRational::zero();
    for c in coef.iter().rev() {
        acc = acc * lambda.value() + BigRational::from_integer(c.clone().into());
    }
    acc
}

fn strings<T: ToString>(xs: &[T]) -> Vec<String> {
    xs.iter().map(ToString::to_string).collect()
}

fn coefficient_table(coef: &[BigUint]) -> Table {
    Table { header: vec!["j", "coefficient"], rows: coef.iter().enumerate().map(|(j, c)| vec![j.to_string(), c.to_string()]).collect() }
}

pub fn graph(_ctx: &Ctx, a: &GraphArgs) -> Result<Report> {
    let g = graph_of(&a.shape)?;
    let (nu, nl) = (g.side_size(Side::Upper), g.side_size(Side::Lower));
    let (du, dl) = (g.degree(Side::Upper, 0), g.degree(Side::Lower, 0));
    let mut results = json!({
        "n": g.n(),
        "k": g.k(),
        "middle_layers": g.middle_d().is_some(),
        "d": g.middle_d(),
        "sizes": { "upper": nu, "lower": nl },
        "degree": { "upper": du, "lower": dl },
        "edges": nu * du,
    });
    let mut inputs = object(shape_inputs(&g));
    inputs.insert("side".into(), json!(a.side.name()));
    if let Some(mode) = &a.isoperimetry {
        let mode: IsoMode = mode.parse()?;
        let budget = IsoBudget { max_size: a.max_size, seed: a.seed, ..Default::default() };
        let r = isoperimetry_check(&g, mode, a.side, &budget)?;
        inputs.insert("isoperimetry".into(), json!(mode.label()));
        inputs.insert("max_size".into(), json!(a.max_size));
        inputs.insert("seed".into(), json!(a.seed));
        results["isoperimetry"] = json!({
            "mode": r.mode.label(),
            "max_size": r.max_size,
            "scanned": r.scanned,
            "sampled": r.sampled,
            "worst_ratio": r.worst_ratio,
            "witness": r.witness.as_ref().map(|w| w.to_json(&g)),
            "pass": r.pass,
        });
    }
    if let Some(t) = a.linked_t {
        let v = match &a.vertex {
            Some(s) => {
                let set = VertexSet::parse(&g, a.side, &[s.as_str()])?;
                let first = set.ids.iter().next();
                first.ok_or_else(|| Error::Parameter("empty --vertex".into()))?
            }
            None => 0,
        };
        let r = enumerate_two_linked_containing(&g, a.side, v, t, false, DEFAULT_VISIT_CAP)?;
        inputs.insert("linked_t".into(), json!(t));
        results["linked"] = json!({
            "vertex": g.vertex(a.side, v).to_string(),
            "t": t,
            "count": r.count,
            "bound_d_pow_6t": r.bound,
            "within_bound": r.within_bound,
        });
    }
    let mut rep = Report::new("graph", inputs, results);
    rep.table = Some(Table {
        header: vec!["side", "size", "degree"],
        rows: vec![
            vec!["upper".into(), nu.to_string(), du.to_string()],
            vec!["lower".into(), nl.to_string(), dl.to_string()],
        ],
    });
    Ok(rep)
}

pub fn count(ctx: &Ctx, a: &CountArgs) -> Result<Report> {
    let g = graph_of(&a.shape)?;
    let mut inputs = object(shape_inputs(&g));
    inputs.insert("lambda".into(), json!(a.lambda.to_string()));
    inputs.insert("family".into(), json!(a.family));
    let lam = &a.lambda;
    let (results, coef) = match a.family.as_str() {
        "z" => {
            let method: Method = a.method.parse()?;
            inputs.insert("method".into(), json!(method.name()));
            let z = exact_z(&g, method, ctx.exec)?;
            (z.to_json(lam, false), z.coefficients)
        }
        "one-side" => {
            g.require_middle()?;
            inputs.insert("side".into(), json!(a.side.name()));
            let h = polymer_subset_histogram(&g, a.side, ctx.exec)?;
            let m = h.evaluate(lam);
            let xi = &m / rat_pow(&lam.one_plus(), g.side_size(a.side.opposite()) as u32);
            let coef = h.coefficients();
            let v = json!({
                "family": "one-side",
                "side": a.side.name(),
                "sum": m.to_string(),
                "xi": xi.to_string(),
                "ln_xi": rational_ln(&xi),
                "coefficients": strings(&coef),
            });
            (v, coef)
        }
        "both-sides" => {
            g.require_middle()?;
            let coef = both_sides_coefficients(&g, ctx.exec)?;
            let s = poly_eval(&coef, lam);
            let v = json!({ "family": "both-sides", "sum": s.to_string(), "coefficients": strings(&coef) });
            (v, coef)
        }
        other => return Err(Error::Parameter(format!("unknown family '{other}' (z, one-side, both-sides)"))),
    };
    let mut rep = Report::new("count", inputs, results);
    rep.table = Some(coefficient_table(&coef));
    Ok(rep)
}

fn expansion_table(r: &ExpansionReport) -> Table {
    let rows = r
        .terms
        .iter()
        .zip(&r.partial_sums)
        .enumerate()
        .map(|(i, (t, s))| vec![(i + 1).to_string(), t.to_string(), s.to_string()])
        .collect();
    Table { header: vec!["k", "L_k", "partial_sum"], rows }
}

fn expansion_report(ctx: &Ctx, command: &'static str, d: u32, lambda: &Fugacity, k: usize, source: &str) -> Result<Report> {
    let src: TermSource = source.parse()?;
    let r = predict_partition(d, lambda, k, src, &ctx.cluster_opts())?;
    let inputs = object(json!({
        "d": d,
        "lambda": lambda.to_string(),
        "k_max": k,
        "source": if src == TermSource::ClosedForm { "closed-form" } else { "enumerated" },
    }));
    let mut rep = Report::new(command, inputs, r.to_json());
    rep.warnings = r.regime_warnings.clone();
    rep.table = Some(expansion_table(&r));
    Ok(rep)
}

pub fn expand(ctx: &Ctx, a: &ExpandArgs) -> Result<Report> {
    expansion_report(ctx, "expand", a.d, &a.lambda, a.k_max, &a.source)
}

pub fn kp_check(ctx: &Ctx, a: &KpArgs) -> Result<Report> {
    let g = middle(a.d)?;
    let w = WeightParams::new(a.lambda.clone(), a.aux_c, a.d)?;
    let r = kp(&g, &w, a.max_size, &ctx.cluster_opts())?;
    let inputs = object(json!({ "d": a.d, "lambda": a.lambda.to_string(), "aux_c": a.aux_c, "max_size": a.max_size }));
    let mut rep = Report::new("kp-check", inputs, r.to_json(&g));
    if r.truncated {
        rep.warnings.push(format!("polymers larger than {} exist and were not checked", a.max_size));
    }
    rep.warnings.extend(regime_warnings(a.d, a.lambda.to_f64()));
    let worst = r.worst_margin().map(|m| m.margin().to_string()).unwrap_or_default();
    rep.table = Some(Table {
        header: vec!["d", "lambda", "polymers", "worst_vertex_sum", "vertex_bound", "worst_margin", "verdict"],
        rows: vec![vec![
            a.d.to_string(),
            a.lambda.to_string(),
            r.margins.len().to_string(),
            r.worst_vertex_sum().to_string(),
            r.vertex_bound.to_string(),
            worst,
            r.status().to_string(),
        ]],
    });
    Ok(rep)
}

pub fn container(ctx: &Ctx, a: &ContainerArgs) -> Result<Report> {
    let g = middle(a.d)?;
    let f = enumerate_container_family(&g, a.side, a.a, a.b, DEFAULT_VISIT_CAP, ctx.exec)?;
    let big_n = g.side_size(a.side) as u64;
    let mut results = f.to_json(&g, &a.lambda, a.members);
    let bound = container_bound(a.d, big_n, a.a, a.b, a.c1);
    results["reference_bound"] = json!(bound);
    results["count_within_reference_bound"] = json!((f.count() as f64) <= bound);
    let inputs = object(json!({
        "d": a.d, "a": a.a, "b": a.b, "side": a.side.name(), "lambda": a.lambda.to_string(), "c1": a.c1, "members": a.members,
    }));
    let mut rep = Report::new("container", inputs, results);
    rep.warnings.push(format!("the reference bound uses C1 = {} chosen by the caller; the true constant is unspecified", a.c1));
    rep.warnings.extend(regime_warnings(a.d, a.lambda.to_f64()));
    rep.table = Some(Table {
        header: vec!["a", "b", "count", "sum", "reference_bound"],
        rows: vec![vec![
            a.a.to_string(),
            a.b.to_string(),
            f.count().to_string(),
            results_sum(&rep.results),
            bound.to_string(),
        ]],
    });
    Ok(rep)
}

fn results_sum(v: &Value) -> String {
    v["sum"].as_str().unwrap_or_default().to_string()
}

pub fn sample(ctx: &Ctx, a: &SampleArgs) -> Result<Report> {
    if a.count == 0 {
        return Err(Error::Parameter("--count must be positive".into()));
    }
    if a.count > MAX_SAMPLES {
        return Err(Error::Scale(format!("--count is limited to {MAX_SAMPLES}")));
    }
    let g = middle(a.d)?;
    let sampler = MuHatSampler::new(&g, &a.lambda)?;
    let run = SampleRun::generate(&sampler, a.d, a.seed, a.count, ctx.exec);
    let stats = minority_defect_stats(&run)?;
    let lines = run.to_jsonl(&g, &sampler);
    if let Some(path) = &a.jsonl {
        std::fs::write(path, &lines).map_err(|e| Error::Parameter(format!("{}: {e}", path.display())))?;
    }
    let upper_defects = run.records.iter().filter(|r| r.defect == Side::Upper).count();
    let mean_size = run.records.iter().map(|r| r.set.len() as f64).sum::<f64>() / run.records.len() as f64;
    let results = json!({
        "d": a.d,
        "lambda": a.lambda.to_string(),
        "seed": a.seed,
        "count": a.count,
        "defect_upper": upper_defects,
        "defect_lower": run.records.len() - upper_defects,
        "mean_set_size": mean_size,
        "xi": sampler.upper.xi.to_string(),
        "configurations": { "upper": sampler.upper.entries.len(), "lower": sampler.lower.entries.len() },
        "minority": stats.to_json(),
        "jsonl": a.jsonl.as_ref().map(|p| p.display().to_string()),
    });
    let inputs = object(json!({ "d": a.d, "lambda": a.lambda.to_string(), "seed": a.seed, "count": a.count }));
    let mut rep = Report::new("sample", inputs, results);
    rep.warnings.extend(regime_warnings(a.d, a.lambda.to_f64()).into_iter().map(|w| format!("{w} (minority reference bounds)")));
    rep.table = Some(Table {
        header: vec!["index", "defect", "config_size", "upper_size", "lower_size", "minority"],
        rows: run
            .records
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.defect.name().into(),
                    r.config_size.to_string(),
                    r.set.upper.count_ones().to_string(),
                    r.set.lower.count_ones().to_string(),
                    r.minority.name().into(),
                ]
            })
            .collect(),
    });
    rep.lines = Some(lines);
    Ok(rep)
}

pub fn census(_ctx: &Ctx, a: &CensusArgs) -> Result<Report> {
    let g = middle(a.d)?;
    let mode = match a.mode.as_str() {
        "exact" => CensusMode::Exact,
        "sampled" => CensusMode::Sampled { seed: a.seed, count: a.count },
        other => return Err(Error::Parameter(format!("unknown census mode '{other}' (exact, sampled)"))),
    };
    let c = structure_census(&g, &a.lambda, mode)?;
    let mut inputs = object(json!({ "d": a.d, "lambda": a.lambda.to_string(), "mode": a.mode }));
    if let CensusMode::Sampled { seed, count } = mode {
        inputs.insert("seed".into(), json!(seed));
        inputs.insert("count".into(), json!(count));
    }
    let mut rep = Report::new("census", inputs, c.to_json());
    if matches!(mode, CensusMode::Sampled { .. }) {
        rep.warnings.push("sampled mode draws from the three-step measure, not the hard-core measure".into());
    }
    rep.table = Some(Table {
        header: vec!["max_comp_upper", "max_comp_lower", "mass"],
        rows: c.profiles.iter().map(|(&(u, l), m)| vec![u.to_string(), l.to_string(), m.to_string()]).collect(),
    });
    Ok(rep)
}

pub fn estimate(ctx: &Ctx, a: &EstimateArgs) -> Result<Report> {
    let mut inputs = object(json!({ "what": a.what, "d": a.d }));
    let (results, table, warnings) = match a.what.as_str() {
        "theorem14" => {
            let t = theorem14_estimate(a.d)?;
            let table = Table {
                header: vec!["d", "N", "log2_count", "stirling_ratio"],
                rows: vec![vec![a.d.to_string(), t.n_big.to_string(), t.log2_count.to_string(), t.stirling_ratio().to_string()]],
            };
            (t.to_json(), table, regime_warnings(a.d, 1.0))
        }
        "example31" => {
            let e = example31_lower_bound(a.d)?;
            let mut v = e.to_json();
            // Compare against the exact count when the sweep is cheap.
            let g = middle(a.d)?;
            if g.side_size(Side::Upper) <= 20 {
                let z = exact_z(&g, Method::GrayCode, ctx.exec)?;
                v["exact_count"] = json!(z.count().to_string());
                v["exact_sum_at_most_count"] = json!(e.exact_sum.as_ref().map(|s| *s <= z.count()));
            }
            let table = Table {
                header: vec!["d", "t", "exact_sum", "formula_log2"],
                rows: vec![vec![
                    a.d.to_string(),
                    e.t.to_string(),
                    e.exact_sum.as_ref().map(|s| s.to_string()).unwrap_or_default(),
                    e.formula_log2.to_string(),
                ]],
            };
            (v, table, regime_warnings(a.d, 1.0))
        }
        "expected-boundary" => {
            let g = middle(a.d)?;
            let t = match a.t {
                Some(t) => t,
                None => (g.side_size(Side::Upper) as u64 >> a.d).max(1),
            };
            inputs.insert("t".into(), json!(t));
            let e = expected_boundary(a.d, t)?;
            let table = Table {
                header: vec!["d", "t", "exact", "approx"],
                rows: vec![vec![a.d.to_string(), t.to_string(), e.exact.to_string(), e.approx.to_string()]],
            };
            (e.to_json(), table, regime_warnings(a.d, 1.0))
        }
        "predict" => {
            let mut rep = expansion_report(ctx, "estimate", a.d, &a.lambda, a.k_max, &a.source)?;
            for (k, v) in inputs {
                rep.inputs.entry(k).or_insert(v);
            }
            return Ok(rep);
        }
        other => {
            return Err(Error::Parameter(format!(
                "unknown estimate '{other}' (theorem14, example31, expected-boundary, predict)"
            )))
        }
    };
    let mut rep = Report::new("estimate", inputs, results);
    rep.warnings = warnings;
    rep.table = Some(table);
    Ok(rep)
}
