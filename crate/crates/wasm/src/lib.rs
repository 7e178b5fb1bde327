//! Browser bindings for the ddslt simulator. Every export returns a JSON
//! string so the page can stay plain JavaScript.

use ddslt::decoder::{decode_curve, Criterion};
use ddslt::graph::{generate_connected_rgg, radius_for};
use ddslt::protocol::Policy;
use ddslt::sim::{run_dissemination, SimConfig};
use ddslt::soliton::{degree_from_alpha, DegreeRule, SolitonKind};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const ETAS: [f64; 7] = [1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5];

#[derive(Serialize)]
struct DistView {
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    degree: usize,
}

#[derive(Serialize)]
struct PolicyView {
    policy: &'static str,
    degree_pmf: Vec<f64>,
    fulfilled: Vec<[f64; 2]>,
    decode: Vec<[f64; 2]>,
    stored: Vec<usize>,
}

#[derive(Serialize)]
struct CompareView {
    graph: ddslt::graph::GraphFile,
    source_nodes: Vec<usize>,
    ideal_pmf: Vec<f64>,
    runs: Vec<PolicyView>,
}

fn soliton(robust: bool) -> SolitonKind {
    if robust {
        SolitonKind::robust_default()
    } else {
        SolitonKind::Ideal
    }
}

pub fn graph_json(n: usize, radius_coeff: f64, seed: u64) -> Result<String, String> {
    let g = generate_connected_rgg(n, radius_for(n, radius_coeff), seed, 1000).map_err(|e| e.to_string())?;
    Ok(g.to_json())
}

pub fn distribution_json(k: usize, robust: bool, alpha: f64) -> Result<String, String> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(format!("alpha must lie in [0, 1], got {alpha}"));
    }
    if k == 0 {
        return Err("k must be at least 1".into());
    }
    let mut rule = DegreeRule::new(soliton(robust));
    let dist = rule.distribution(k);
    let view = DistView { pmf: dist.pmf().to_vec(), cdf: dist.cdf().to_vec(), degree: degree_from_alpha(dist, alpha) };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

pub fn compare_json(n: usize, k: usize, c1: f64, robust: bool, seed: u64, trials: usize) -> Result<String, String> {
    let mut runs = Vec::new();
    let mut graph = None;
    let mut source_nodes = Vec::new();
    for (policy, name) in [(Policy::Ddslt, "ddslt"), (Policy::Ltcds1, "ltcds1")] {
        let cfg = SimConfig { n, k, c1, dist: soliton(robust), seed, ..SimConfig::default() };
        let cfg = SimConfig { policy, ..cfg };
        let run = run_dissemination(&cfg).map_err(|e| e.to_string())?;
        let decode = decode_curve(&run.snapshot, &ETAS, trials, Criterion::Rank, seed).map_err(|e| e.to_string())?;
        runs.push(PolicyView {
            policy: name,
            degree_pmf: run.snapshot.degree_pmf(),
            fulfilled: run.trace.samples.iter().map(|s| [s.step as f64, s.fraction_degree_fulfilled]).collect(),
            decode: decode.iter().map(|p| [p.eta, p.probability()]).collect(),
            stored: run.snapshot.nodes.iter().map(|s| s.xor_ids.len()).collect(),
        });
        source_nodes = run.snapshot.source_nodes.clone();
        graph = Some(run.graph.to_file());
    }
    let ideal_pmf = soliton(false).distribution(k).map_err(|e| e.to_string())?.pmf_with_zero();
    let view = CompareView { graph: graph.expect("two runs"), source_nodes, ideal_pmf, runs };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[wasm_bindgen(js_name = generateGraph)]
pub fn generate_graph(n: usize, radius_coeff: f64, seed: u32) -> Result<String, JsValue> {
    graph_json(n, radius_coeff, seed.into()).map_err(JsValue::from)
}

#[wasm_bindgen(js_name = degreeDistribution)]
pub fn degree_distribution(k: usize, robust: bool, alpha: f64) -> Result<String, JsValue> {
    distribution_json(k, robust, alpha).map_err(JsValue::from)
}

#[wasm_bindgen(js_name = comparePolicies)]
pub fn compare_policies(n: usize, k: usize, c1: f64, robust: bool, seed: u32, trials: usize) -> Result<String, JsValue> {
    compare_json(n, k, c1, robust, seed.into(), trials).map_err(JsValue::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn graph_view() {
        let v: serde_json::Value = serde_json::from_str(&graph_json(40, 2.0, 1).unwrap()).unwrap();
        assert_eq!(v["positions"].as_array().unwrap().len(), 40);
        assert!(graph_json(40, 0.01, 1).is_err());
    }

    #[test]
    fn distribution_view() {
        let v: serde_json::Value = serde_json::from_str(&distribution_json(10, false, 0.05).unwrap()).unwrap();
        assert_eq!(v["degree"], 1);
        assert_eq!(v["pmf"].as_array().unwrap().len(), 10);
        let top: serde_json::Value = serde_json::from_str(&distribution_json(10, true, 1.0).unwrap()).unwrap();
        assert!(top["degree"].as_u64().unwrap() <= 10);
        assert!(distribution_json(10, false, 1.5).is_err());
    }

    #[test]
    fn comparison_view() {
        let v: serde_json::Value = serde_json::from_str(&compare_json(60, 6, 3.0, false, 2, 20).unwrap()).unwrap();
        let runs = v["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        assert_eq!(runs[0]["degree_pmf"].as_array().unwrap().len(), 7);
        assert_eq!(runs[1]["decode"].as_array().unwrap().len(), ETAS.len());
        assert_eq!(v["source_nodes"].as_array().unwrap().len(), 6);
        assert_eq!(v["ideal_pmf"].as_array().unwrap().len(), 7);
    }
}
