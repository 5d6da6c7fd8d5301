use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ksgm::estimator::{fit_noncentral, FitConfig, FitResult};
use ksgm::eval::{assortativity, aupr, cyclic_adjacency_score, pr_sweep, EdgeSet, CYCLIC_TOL};
use ksgm::experiment::{default_edge_grid, run_experiment, write_experiment_outputs, write_synth_bundle, ExperimentSpec};
use ksgm::io::{parse_csv_matrix, read_json, read_tensor, write_json};
use ksgm::oracle::run_oracle_suite;
use ksgm::solver::threshold_edges;
use ksgm::synth::nonparanormal_transform;
use ksgm::Error;
use serde_json::json;

const EXIT_INPUT: u8 = 2;
const EXIT_NONCONVERGED: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

/// Noncentral Kronecker-sum graphical models: synthesize, fit, evaluate.
#[derive(Parser)]
#[command(name = "ksgm", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write synthetic datasets with their ground truth.
    Synth(SpecArgs),
    /// Fit a tensor file.
    Fit(FitArgs),
    /// Run a full edge-recovery experiment (noncentral vs zero-mean).
    Experiment(SpecArgs),
    /// Score a stored fit against ground truth or node labels.
    Eval(EvalArgs),
    /// Run the dense reference checks.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment spec (JSON); defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Edge-count grid: `0,10,20` or `start:stop:step`.
    #[arg(long)]
    edges: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Tensor file (`dims:` header) or CSV matrix.
    input: PathBuf,
    /// Fit config (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Skip mean estimation (zero-mean baseline).
    #[arg(long)]
    centered: bool,
    /// Gaussianize along this axis before fitting.
    #[arg(long, value_name = "AXIS")]
    nonparanormal: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    /// FitResult JSON written by `fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Ground-truth adjacency CSVs, one per axis in order, or a `synth`
    /// trial directory.
    #[arg(long, num_args = 1..)]
    truth: Vec<PathBuf>,
    #[arg(long)]
    edges: Option<String>,
    /// One label per line for the nodes of `--axis`; reports assortativity.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Report the cyclic-adjacency score of `--axis`.
    #[arg(long)]
    cyclic: bool,
    #[arg(long, default_value_t = 0)]
    axis: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Instance shape, comma separated.
    #[arg(long, default_value = "4,5")]
    dims: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum Failure {
    Input(String),
    NotConverged(String),
    Internal(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Internal(_) => Failure::Internal(e.to_string()),
            Error::StepUnderflow { .. } | Error::Solver { .. } | Error::NonFinite(_) => {
                Failure::NotConverged(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn parse_grid(s: &str) -> std::result::Result<Vec<usize>, Failure> {
    let bad = || Failure::Input(format!("--edges: cannot parse {s:?}"));
    let grid: Vec<usize> = if s.contains(':') {
        let parts: Vec<usize> = s
            .split(':')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?;
        let [start, stop, step] = parts[..] else {
            return Err(bad());
        };
        if step == 0 {
            return Err(bad());
        }
        (start..=stop).step_by(step).collect()
    } else {
        s.split(',')
            .map(|p| p.trim().parse().map_err(|_| bad()))
            .collect::<std::result::Result<_, _>>()?
    };
    if grid.is_empty() || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Failure::Input("--edges must be non-empty and strictly increasing".into()));
    }
    Ok(grid)
}

fn load_spec(args: &SpecArgs) -> std::result::Result<ExperimentSpec, Failure> {
    let mut spec: ExperimentSpec = match &args.config {
        Some(p) => read_json(p)?,
        None => ExperimentSpec::default(),
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(e) = &args.edges {
        spec.edge_grid = parse_grid(e)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn cmd_synth(args: SpecArgs) -> CmdResult {
    let spec = load_spec(&args)?;
    write_synth_bundle(&spec, &args.out)?;
    println!("wrote {} trial(s) to {}", spec.trials, args.out.display());
    Ok(())
}

fn cmd_experiment(args: SpecArgs) -> CmdResult {
    let spec = load_spec(&args)?;
    let report = run_experiment(&spec)?;
    write_experiment_outputs(&report, &args.out)?;
    for v in [ksgm::experiment::Variant::Noncentral, ksgm::experiment::Variant::Centered] {
        println!("{} mean AUPR {:.4}", v.name(), report.mean_aupr(v));
    }
    if !report.failures.is_empty() {
        for f in &report.failures {
            eprintln!("trial {} failed: {}", f.trial, f.message);
        }
        return Err(Failure::NotConverged(format!("{} trial(s) failed", report.failures.len())));
    }
    Ok(())
}

fn trace_csv(fit: &FitResult) -> String {
    let mut s = String::from("iteration,nll\n");
    for (i, v) in fit.nll_trace.iter().enumerate() {
        s.push_str(&format!("{i},{v:?}\n"));
    }
    s
}

fn cmd_fit(args: FitArgs) -> CmdResult {
    let mut cfg: FitConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => FitConfig::default(),
    };
    if args.centered {
        cfg = cfg.centered();
    }
    let mut data = read_tensor(&args.input)?;
    if let Some(axis) = args.nonparanormal {
        data = nonparanormal_transform(&data, axis)?;
    }
    cfg.validate(data.ndim())?;
    let fit = fit_noncentral(&data, &cfg)?;
    fs::create_dir_all(&args.out).map_err(Error::from)?;
    write_json(&args.out.join("fit.json"), &fit)?;
    fs::write(args.out.join("nll_trace.csv"), trace_csv(&fit)).map_err(Error::from)?;
    println!(
        "final NLL {:.6} after {} outer iteration(s), converged={}",
        fit.final_nll(),
        fit.outer_iters,
        fit.converged
    );
    if !fit.converged {
        return Err(Failure::NotConverged("fit did not converge; result written".into()));
    }
    Ok(())
}

fn read_adjacency(path: &Path) -> std::result::Result<EdgeSet, Failure> {
    let text = fs::read_to_string(path).map_err(Error::from)?;
    let m = parse_csv_matrix(&text)?;
    if !m.is_square() {
        return Err(Failure::Input(format!("{}: adjacency must be square", path.display())));
    }
    Ok(EdgeSet::from_support(&m))
}

fn truth_sets(paths: &[PathBuf], ndim: usize) -> std::result::Result<Vec<EdgeSet>, Failure> {
    if let [dir] = paths {
        if dir.is_dir() {
            return (0..ndim)
                .map(|axis| read_adjacency(&dir.join(format!("adjacency_{axis}.csv"))))
                .collect();
        }
    }
    if paths.len() != ndim {
        return Err(Failure::Input(format!(
            "--truth needs {ndim} adjacency files (or one trial directory), got {}",
            paths.len()
        )));
    }
    paths.iter().map(|p| read_adjacency(p)).collect()
}

fn cmd_eval(args: EvalArgs) -> CmdResult {
    let fit: FitResult = read_json(&args.fit)?;
    let tilde = &fit.precision.tilde_factors;
    let grid_for = |d: usize| -> std::result::Result<Vec<usize>, Failure> {
        match &args.edges {
            Some(e) => parse_grid(e),
            None => Ok(default_edge_grid(d)),
        }
    };
    let mut axes = Vec::new();
    if !args.truth.is_empty() {
        let truths = truth_sets(&args.truth, tilde.len())?;
        for (axis, (t, truth)) in tilde.iter().zip(&truths).enumerate() {
            let sweep = pr_sweep(t, truth, &grid_for(t.nrows())?)?;
            let area = aupr(&sweep.curve)?;
            if let Some(out) = &args.out {
                fs::create_dir_all(out).map_err(Error::from)?;
                fs::write(out.join(format!("axis{axis}_pr.csv")), sweep.curve.to_csv()).map_err(Error::from)?;
            }
            println!("axis {axis}: AUPR {:.4}", area.value);
            axes.push(json!({
                "axis": axis,
                "aupr": area.value,
                "aupr_degenerate": area.degenerate,
                "clamped": sweep.clamped,
                "curve": sweep.curve,
            }));
        }
    }

    let mut node_metrics = serde_json::Map::new();
    if args.labels.is_some() || args.cyclic {
        let t = tilde.get(args.axis).ok_or_else(|| {
            Failure::Input(format!("--axis {} out of range for {} axes", args.axis, tilde.len()))
        })?;
        let grid = grid_for(t.nrows())?;
        if let Some(path) = &args.labels {
            let text = fs::read_to_string(path).map_err(Error::from)?;
            let labels: Vec<&str> = text.lines().map(str::trim).filter(|l| !l.is_empty()).collect();
            if labels.len() != t.nrows() {
                return Err(Failure::Input(format!(
                    "{} labels for {} nodes on axis {}",
                    labels.len(),
                    t.nrows(),
                    args.axis
                )));
            }
            let rows: Vec<_> = grid
                .iter()
                .filter(|&&k| k > 0)
                .map(|&k| {
                    let value = assortativity(&threshold_edges(t, k).edges, &labels).ok();
                    json!({ "k": k, "assortativity": value })
                })
                .collect();
            node_metrics.insert("assortativity".into(), json!(rows));
        }
        if args.cyclic {
            let rows: Vec<_> = grid
                .iter()
                .map(|&k| {
                    let score = cyclic_adjacency_score(&threshold_edges(t, k).edges, t.nrows(), CYCLIC_TOL);
                    json!({ "k": k, "score": score })
                })
                .collect();
            node_metrics.insert("cyclic_adjacency".into(), json!(rows));
        }
    }
    let report = json!({ "axes": axes, "node_metrics": { "axis": args.axis, "metrics": node_metrics } });
    match &args.out {
        Some(out) => {
            fs::create_dir_all(out).map_err(Error::from)?;
            write_json(&out.join("eval.json"), &report)?;
        }
        None => println!("{}", serde_json::to_string_pretty(&report).map_err(Error::from)?),
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> CmdResult {
    let dims: Vec<usize> = args
        .dims
        .split(',')
        .map(|p| p.trim().parse())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Input(format!("--dims: cannot parse {:?}", args.dims)))?;
    let report = run_oracle_suite(&dims, args.seed)?;
    for c in &report.checks {
        println!(
            "{} {} error {:.3e} (tolerance {:.1e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.max_abs_error,
            c.tolerance
        );
    }
    if let Some(out) = &args.out {
        fs::create_dir_all(out).map_err(Error::from)?;
        write_json(&out.join("oracle.json"), &report)?;
    }
    if !report.passed() {
        let names: Vec<_> = report.failures().map(|c| c.name.as_str()).collect();
        return Err(Failure::Internal(format!("oracle checks failed: {}", names.join(", "))));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Fit(a) => cmd_fit(a),
        Cmd::Experiment(a) => cmd_experiment(a),
        Cmd::Eval(a) => cmd_eval(a),
        Cmd::Oracle(a) => cmd_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Input(m) => (EXIT_INPUT, m),
                Failure::NotConverged(m) => (EXIT_NONCONVERGED, m),
                Failure::Internal(m) => (EXIT_INTERNAL, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
