//! Synthetic edge-recovery studies: per trial, draw graphs and data, fit the
//! noncentral and the zero-mean variants, and sweep precision/recall.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{fit_noncentral, FitConfig, FitResult};
use crate::eval::{aupr, fmt_sig, pr_sweep, EdgeSet, PRCurve};
use crate::io::{format_csv_matrix, format_tensor};
use crate::params::{KSMean, KSPrecision};
use crate::synth::{
    derive_seed, gen_graph, graph_to_precision, sample_ks_normal, scenario_offset, GraphKind,
    GraphSpec, MeanScenario, SynthRng, WeightSpec,
};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub scenario: MeanScenario,
    /// One graph family per axis; a single entry applies to every axis.
    pub graphs: Vec<GraphKind>,
    pub dims: Vec<usize>,
    pub trials: usize,
    /// Edge counts to sweep; empty means [`default_edge_grid`] per axis.
    pub edge_grid: Vec<usize>,
    pub weights: WeightSpec,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            scenario: MeanScenario::ConstantOffset { c: 1.0 },
            graphs: vec![GraphKind::BarabasiAlbert { attach: 1 }],
            dims: vec![64, 64],
            trials: 10,
            edge_grid: Vec::new(),
            weights: WeightSpec::default(),
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::InvalidParameter(format!("{field}: {why}")));
        if self.trials == 0 {
            return bad("trials", "must be at least 1".into());
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| d < 2) {
            return bad("dims", format!("every axis needs length >= 2, got {:?}", self.dims));
        }
        if self.graphs.len() != 1 && self.graphs.len() != self.dims.len() {
            return bad(
                "graphs",
                format!("need 1 or {} entries, got {}", self.dims.len(), self.graphs.len()),
            );
        }
        if self.edge_grid.windows(2).any(|w| w[1] <= w[0]) {
            return bad("edge_grid", "must be strictly increasing".into());
        }
        for axis in 0..self.dims.len() {
            self.graph_spec(axis, 0).validate().or_else(|e| bad("graphs", e.to_string()))?;
        }
        self.scenario.validate().or_else(|e| bad("scenario", e.to_string()))?;
        self.weights.validate().or_else(|e| bad("weights", e.to_string()))?;
        self.fit.validate(self.dims.len()).or_else(|e| bad("fit", e.to_string()))
    }

    fn graph_spec(&self, axis: usize, seed: u64) -> GraphSpec {
        let kind = if self.graphs.len() == 1 {
            self.graphs[0]
        } else {
            self.graphs[axis]
        };
        GraphSpec {
            kind,
            d: self.dims[axis],
            seed,
        }
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, trial as u64)
    }

    /// The edge grid for `axis`: the configured one or the default.
    pub fn grid_for(&self, axis: usize) -> Vec<usize> {
        if self.edge_grid.is_empty() {
            default_edge_grid(self.dims[axis])
        } else {
            self.edge_grid.clone()
        }
    }
}

/// About 50 evenly spaced edge counts from 0 up to every off-diagonal pair.
pub fn default_edge_grid(d: usize) -> Vec<usize> {
    let pairs = d * (d - 1) / 2;
    let step = pairs.div_ceil(50).max(1);
    let mut g: Vec<usize> = (0..pairs).step_by(step).collect();
    g.push(pairs);
    g
}

/// Ground truth and data for one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub adjacency: Vec<DMatrix<f64>>,
    pub precision: KSPrecision,
    /// The zero-mean sample before the scenario's mean is added.
    pub base: Tensor,
    pub offset: Tensor,
    pub data: Tensor,
}

impl TrialData {
    pub fn truth_edges(&self) -> Vec<EdgeSet> {
        self.adjacency.iter().map(EdgeSet::from_support).collect()
    }
}

/// Draws trial `trial`. The base sample does not depend on the scenario, so
/// specs differing only in scenario share graphs and base samples.
pub fn generate_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialData> {
    let ts = spec.trial_seed(trial);
    let mut adjacency = Vec::new();
    let mut factors = Vec::new();
    for axis in 0..spec.dims.len() {
        let adj = gen_graph(&spec.graph_spec(axis, derive_seed(ts, 100 + axis as u64)))?;
        factors.push(graph_to_precision(&adj, &spec.weights, derive_seed(ts, 200 + axis as u64))?);
        adjacency.push(adj);
    }
    let precision = KSPrecision::new(factors)?;
    let base = sample_ks_normal(
        &precision,
        &KSMean::zeros(&spec.dims),
        &mut SynthRng::seed_from_u64(derive_seed(ts, 1)),
    )?;
    let offset = scenario_offset(
        &spec.dims,
        &spec.scenario,
        &mut SynthRng::seed_from_u64(derive_seed(ts, 2)),
    )?;
    let data = base.add(&offset)?;
    Ok(TrialData {
        adjacency,
        precision,
        base,
        offset,
        data,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Noncentral,
    Centered,
}

impl Variant {
    pub const ALL: [Variant; 2] = [Variant::Noncentral, Variant::Centered];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Noncentral => "noncentral",
            Variant::Centered => "centered",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantResult {
    pub variant: Variant,
    pub curves: Vec<PRCurve>,
    pub aupr: Vec<f64>,
    pub converged: bool,
    pub final_nll: f64,
    pub outer_iters: usize,
    /// Largest rise between consecutive outer NLL values, if there were two.
    pub max_trace_increase: Option<f64>,
    pub max_block_increase: Option<f64>,
}

impl VariantResult {
    /// AUPR averaged over axes.
    pub fn mean_aupr(&self) -> f64 {
        self.aupr.iter().sum::<f64>() / self.aupr.len() as f64
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub seed: u64,
    pub variants: Vec<VariantResult>,
}

impl TrialResult {
    pub fn variant(&self, v: Variant) -> &VariantResult {
        self.variants
            .iter()
            .find(|r| r.variant == v)
            .expect("every variant is fitted")
    }
}

/// Scores fitted factors against the true graphs.
pub fn score_fit(
    fit: &FitResult,
    truth: &[EdgeSet],
    grids: &[Vec<usize>],
) -> Result<(Vec<PRCurve>, Vec<f64>)> {
    let mut curves = Vec::new();
    let mut auprs = Vec::new();
    for (axis, t) in truth.iter().enumerate() {
        let sweep = pr_sweep(&fit.precision.tilde_factors[axis], t, &grids[axis])?;
        auprs.push(aupr(&sweep.curve)?.value);
        curves.push(sweep.curve);
    }
    Ok((curves, auprs))
}

pub fn run_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialResult> {
    let td = generate_trial(spec, trial)?;
    let truth = td.truth_edges();
    let grids: Vec<Vec<usize>> = (0..spec.dims.len()).map(|a| spec.grid_for(a)).collect();
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
        variants.push(VariantResult {
            variant: v,
            curves,
            aupr,
            converged: fit.converged,
            final_nll: fit.final_nll(),
            outer_iters: fit.outer_iters,
            max_trace_increase: fit.max_trace_increase(),
            max_block_increase: fit.max_block_increase,
        });
    }
    Ok(TrialResult {
        trial,
        seed: spec.trial_seed(trial),
        variants,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialFailure {
    pub trial: usize,
    pub message: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub spec: ExperimentSpec,
    pub trials: Vec<TrialResult>,
    pub failures: Vec<TrialFailure>,
}

impl ExperimentReport {
    /// Mean over successful trials of the axis-averaged AUPR.
    pub fn mean_aupr(&self, v: Variant) -> f64 {
        let xs: Vec<f64> = self.trials.iter().map(|t| t.variant(v).mean_aupr()).collect();
        xs.iter().sum::<f64>() / xs.len().max(1) as f64
    }

    /// CSV of per-k mean/min/max precision and recall for every variant and axis.
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(
            "variant,axis,k,precision_mean,precision_min,precision_max,recall_mean,recall_min,recall_max\n",
        );
        let Some(first) = self.trials.first() else {
            return out;
        };
        for v in Variant::ALL {
            for axis in 0..first.variant(v).curves.len() {
                for (i, pt) in first.variant(v).curves[axis].points.iter().enumerate() {
                    let col = |f: fn(&crate::eval::PRPoint) -> f64| -> Vec<f64> {
                        self.trials
                            .iter()
                            .map(|t| f(&t.variant(v).curves[axis].points[i]))
                            .collect()
                    };
                    let stats = |xs: Vec<f64>| {
                        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                        let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
                        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        format!("{},{},{}", fmt_sig(mean, 12), fmt_sig(min, 12), fmt_sig(max, 12))
                    };
                    let _ = writeln!(
                        out,
                        "{},{axis},{},{},{}",
                        v.name(),
                        pt.k,
                        stats(col(|p| p.precision)),
                        stats(col(|p| p.recall))
                    );
                }
            }
        }
        out
    }

    pub fn aupr_csv(&self) -> String {
        let mut out = String::from("trial,variant,axis,aupr,converged\n");
        for t in &self.trials {
            for r in &t.variants {
                for (axis, a) in r.aupr.iter().enumerate() {
                    let _ = writeln!(out, "{},{},{axis},{},{}", t.trial, r.variant.name(), fmt_sig(*a, 12), r.converged);
                }
            }
        }
        out
    }
}

fn map_trials<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

/// Runs every trial; a failing trial is recorded and the rest continue.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let outcomes = map_trials(spec.trials, |t| run_trial(spec, t));
    let mut trials = Vec::new();
    let mut failures = Vec::new();
    for (trial, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(r) => trials.push(r),
            Err(e) => failures.push(TrialFailure {
                trial,
                message: e.to_string(),
            }),
        }
    }
    Ok(ExperimentReport {
        spec: spec.clone(),
        trials,
        failures,
    })
}

#[derive(Serialize)]
struct TruthBundle<'a> {
    trial: usize,
    seed: u64,
    scenario: &'a MeanScenario,
    precision: &'a KSPrecision,
}

/// Writes ground truth, adjacency, base sample, mean offset and data per trial.
pub fn write_synth_bundle(spec: &ExperimentSpec, out: &Path) -> Result<()> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    crate::io::write_json(&out.join("spec.json"), spec)?;
    for trial in 0..spec.trials {
        let td = generate_trial(spec, trial)?;
        let dir = out.join(format!("trial_{trial:03}"));
        fs::create_dir_all(&dir)?;
        crate::io::write_json(
            &dir.join("truth.json"),
            &TruthBundle {
                trial,
                seed: spec.trial_seed(trial),
                scenario: &spec.scenario,
                precision: &td.precision,
            },
        )?;
        for (axis, adj) in td.adjacency.iter().enumerate() {
            fs::write(dir.join(format!("adjacency_{axis}.csv")), format_csv_matrix(adj))?;
        }
        fs::write(dir.join("base.tensor"), format_tensor(&td.base))?;
        fs::write(dir.join("offset.tensor"), format_tensor(&td.offset))?;
        fs::write(dir.join("data.tensor"), format_tensor(&td.data))?;
    }
    Ok(())
}

/// Writes per-trial curves, the AUPR table, the summary and the JSON report.
pub fn write_experiment_outputs(report: &ExperimentReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    for t in &report.trials {
        let dir = out.join(format!("trial_{:03}", t.trial));
        fs::create_dir_all(&dir)?;
        for r in &t.variants {
            for (axis, c) in r.curves.iter().enumerate() {
                fs::write(dir.join(format!("{}_axis{axis}_pr.csv", r.variant.name())), c.to_csv())?;
            }
        }
    }
    fs::write(out.join("summary.csv"), report.summary_csv())?;
    fs::write(out.join("aupr.csv"), report.aupr_csv())?;
    crate::io::write_json(&out.join("report.json"), report)
}
