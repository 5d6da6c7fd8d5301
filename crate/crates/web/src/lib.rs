//! Browser bindings. Every export takes and returns JSON strings so the page
//! needs no generated glue beyond `wasm-bindgen` itself.

use nalgebra::DMatrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use ksgm::estimator::{fit_noncentral, FitConfig};
use ksgm::experiment::{generate_trial, score_fit, ExperimentSpec, Variant};
use ksgm::solver::threshold_edges;
use ksgm::{Error, PRCurve, Result};

#[derive(Serialize)]
struct Sample {
    dims: Vec<usize>,
    data: Vec<Vec<f64>>,
    offset: Vec<Vec<f64>>,
    truth: Vec<Vec<Vec<f64>>>,
}

#[derive(Serialize)]
struct VariantView {
    variant: Variant,
    aupr: Vec<f64>,
    curves: Vec<PRCurve>,
    factors: Vec<Vec<Vec<f64>>>,
    converged: bool,
    outer_iters: usize,
}

#[derive(Serialize)]
struct Comparison {
    truth: Vec<Vec<Vec<f64>>>,
    variants: Vec<VariantView>,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn parse_spec(json: &str) -> Result<ExperimentSpec> {
    let spec: ExperimentSpec = serde_json::from_str(json).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    spec.validate()?;
    if spec.dims.len() != 2 {
        return Err(Error::InvalidParameter("the demo draws matrices, so dims needs two axes".into()));
    }
    Ok(spec)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| Error::Internal(e.to_string()))
}

/// First trial of `spec`: the observed matrix, its mean offset and the true
/// adjacency of each axis.
pub fn sample_json(spec: &str) -> Result<String> {
    let spec = parse_spec(spec)?;
    let td = generate_trial(&spec, 0)?;
    let (r, c) = (spec.dims[0], spec.dims[1]);
    to_json(&Sample {
        dims: spec.dims.clone(),
        data: rows(&DMatrix::from_row_slice(r, c, td.data.values())),
        offset: rows(&DMatrix::from_row_slice(r, c, td.offset.values())),
        truth: td.adjacency.iter().map(rows).collect(),
    })
}

/// Fits the noncentral and centered models to the first trial of `spec`.
pub fn compare_json(spec: &str) -> Result<String> {
    let spec = parse_spec(spec)?;
    let td = generate_trial(&spec, 0)?;
    let truth = td.truth_edges();
    let grids: Vec<Vec<usize>> = (0..2).map(|a| spec.grid_for(a)).collect();
    let mut variants = Vec::new();
    for v in Variant::ALL {
        let cfg = match v {
            Variant::Noncentral => FitConfig {
                center_means: true,
                ..spec.fit.clone()
            },
            Variant::Centered => spec.fit.centered(),
        };
        let fit = fit_noncentral(&td.data, &cfg)?;
        let (curves, aupr) = score_fit(&fit, &truth, &grids)?;
        variants.push(VariantView {
            variant: v,
            aupr,
            curves,
            factors: fit.precision.tilde_factors.iter().map(rows).collect(),
            converged: fit.converged,
            outer_iters: fit.outer_iters,
        });
    }
    to_json(&Comparison {
        truth: td.adjacency.iter().map(rows).collect(),
        variants,
    })
}

/// The `k` strongest off-diagonal pairs of a square matrix given as rows.
pub fn top_edges_json(factor: &str, k: usize) -> Result<String> {
    let m: Vec<Vec<f64>> = serde_json::from_str(factor).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let d = m.len();
    if m.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidParameter("factor must be square".into()));
    }
    let m = DMatrix::from_fn(d, d, |i, j| m[i][j]);
    let pairs: Vec<(usize, usize)> = threshold_edges(&m, k).edges.pairs().iter().copied().collect();
    to_json(&pairs)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn sample(spec: &str) -> std::result::Result<String, JsError> {
    js(sample_json(spec))
}

#[wasm_bindgen]
pub fn compare(spec: &str) -> std::result::Result<String, JsError> {
    js(compare_json(spec))
}

#[wasm_bindgen]
pub fn top_edges(factor: &str, k: usize) -> std::result::Result<String, JsError> {
    js(top_edges_json(factor, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    const SPEC: &str = r#"{"dims":[8,6],"graphs":[{"kind":"erdos_renyi","p":0.3}],"seed":5}"#;

    #[test]
    fn sample_has_matrix_shapes() {
        let v: Value = serde_json::from_str(&sample_json(SPEC).unwrap()).unwrap();
        assert_eq!(v["data"].as_array().unwrap().len(), 8);
        assert_eq!(v["data"][0].as_array().unwrap().len(), 6);
        assert_eq!(v["truth"][1].as_array().unwrap().len(), 6);
    }

    #[test]
    fn compare_reports_both_variants() {
        let v: Value = serde_json::from_str(&compare_json(SPEC).unwrap()).unwrap();
        let vars = v["variants"].as_array().unwrap();
        assert_eq!(vars.len(), 2);
        assert_eq!(vars[0]["variant"], "noncentral");
        for var in vars {
            for a in var["aupr"].as_array().unwrap() {
                assert!((0.0..=1.0).contains(&a.as_f64().unwrap()));
            }
            assert_eq!(var["factors"][0].as_array().unwrap().len(), 8);
        }
    }

    #[test]
    fn top_edges_picks_largest() {
        let pairs = top_edges_json("[[1,0.1,-0.9],[0.1,1,0.2],[-0.9,0.2,1]]", 2).unwrap();
        assert_eq!(pairs, "[[0,2],[1,2]]");
    }

    #[test]
    fn bad_input_is_rejected() {
        assert!(sample_json(r#"{"dims":[4,4,4]}"#).is_err());
        assert!(top_edges_json("[[1,2]]", 1).is_err());
        assert!(compare_json("not json").is_err());
    }
}
