//! Synthetic ground truth: random graphs, precision factors built on them,
//! exact Kronecker-sum normal samples, mean scenarios, and rank-based
//! Gaussianization.

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StatNormal};

use crate::error::{Error, Result};
use crate::params::{KSMean, KSPrecision};
use crate::tensor::{ks_mean_tensor, mode_multiply, Tensor};

pub type SynthRng = ChaCha8Rng;

/// Independent stream `stream` of a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    /// Preferential attachment with `attach` edges per new node.
    BarabasiAlbert { attach: usize },
    /// Each pair independently with probability `p`.
    ErdosRenyi { p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphSpec {
    #[serde(flatten)]
    pub kind: GraphKind,
    pub d: usize,
    #[serde(default)]
    pub seed: u64,
}

impl GraphSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(Error::InvalidParameter(format!(
                "graph needs at least 2 nodes, got {}",
                self.d
            )));
        }
        match self.kind {
            GraphKind::BarabasiAlbert { attach } if attach == 0 || attach >= self.d => {
                Err(Error::InvalidParameter(format!(
                    "attachment count {attach} must be in [1, {})",
                    self.d
                )))
            }
            GraphKind::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => Err(
                Error::InvalidParameter(format!("edge probability {p} outside [0, 1]")),
            ),
            _ => Ok(()),
        }
    }
}

/// Symmetric, hollow 0/1 adjacency matrix.
pub fn gen_graph(spec: &GraphSpec) -> Result<DMatrix<f64>> {
    spec.validate()?;
    let mut rng = SynthRng::seed_from_u64(spec.seed);
    let d = spec.d;
    let mut adj = DMatrix::zeros(d, d);
    match spec.kind {
        GraphKind::ErdosRenyi { p } => {
            for i in 0..d {
                for j in i + 1..d {
                    if rng.random_bool(p) {
                        adj[(i, j)] = 1.0;
                        adj[(j, i)] = 1.0;
                    }
                }
            }
        }
        GraphKind::BarabasiAlbert { attach } => {
            // seed nodes 0..attach; node `attach` links to all of them
            let mut targets: Vec<usize> = (0..attach).collect();
            let mut repeated: Vec<usize> = Vec::new();
            for source in attach..d {
                for &t in &targets {
                    adj[(source, t)] = 1.0;
                    adj[(t, source)] = 1.0;
                }
                repeated.extend_from_slice(&targets);
                repeated.extend(std::iter::repeat_n(source, attach));
                targets.clear();
                while targets.len() < attach {
                    let &pick = repeated.choose(&mut rng).expect("non-empty");
                    if !targets.contains(&pick) {
                        targets.push(pick);
                    }
                }
            }
            // early nodes are the hubs; relabel so node index carries no signal
            let mut perm: Vec<usize> = (0..d).collect();
            perm.shuffle(&mut rng);
            adj = DMatrix::from_fn(d, d, |i, j| adj[(perm[i], perm[j])]);
        }
    }
    Ok(adj)
}

/// Edge-weight mapping from an adjacency matrix to a precision factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightSpec {
    pub low: f64,
    pub high: f64,
    pub loading: f64,
}

impl Default for WeightSpec {
    fn default() -> Self {
        Self {
            low: 0.2,
            high: 0.6,
            loading: 0.5,
        }
    }
}

impl WeightSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.loading > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "diagonal loading must be positive, got {}",
                self.loading
            )));
        }
        if !(self.low >= 0.0 && self.low <= self.high && self.high.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "weight range [{}, {}] invalid",
                self.low, self.high
            )));
        }
        Ok(())
    }
}

/// Random signed weights on the edges of `adj`, then a diagonal shift that
/// puts the smallest eigenvalue at `loading`.
pub fn graph_to_precision(adj: &DMatrix<f64>, w: &WeightSpec, seed: u64) -> Result<DMatrix<f64>> {
    w.validate()?;
    let d = adj.nrows();
    if adj.ncols() != d {
        return Err(Error::NotSquare {
            axis: 0,
            rows: d,
            cols: adj.ncols(),
        });
    }
    for i in 0..d {
        if adj[(i, i)] != 0.0 {
            return Err(Error::InvalidParameter(format!("adjacency has a self-loop at {i}")));
        }
        for j in i + 1..d {
            if adj[(i, j)] != adj[(j, i)] {
                return Err(Error::NotSymmetric {
                    axis: 0,
                    asymmetry: (adj[(i, j)] - adj[(j, i)]).abs(),
                });
            }
        }
    }
    let mut rng = SynthRng::seed_from_u64(seed);
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in i + 1..d {
            if adj[(i, j)] != 0.0 {
                let mag = if w.high > w.low {
                    rng.random_range(w.low..=w.high)
                } else {
                    w.low
                };
                let v = if rng.random_bool(0.5) { mag } else { -mag };
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
    }
    let min_eig = m.symmetric_eigenvalues().min();
    let shift = min_eig.abs() + w.loading;
    for i in 0..d {
        m[(i, i)] = shift;
    }
    Ok(m)
}

/// Exact draw from the Kronecker-sum normal with precision `p` and mean `mean`.
pub fn sample_ks_normal(p: &KSPrecision, mean: &KSMean, rng: &mut impl Rng) -> Result<Tensor> {
    p.validate()?;
    let dims = p.dims();
    if mean.dims() != dims {
        return Err(Error::DimensionMismatch(format!(
            "mean dims {:?} vs precision dims {dims:?}",
            mean.dims()
        )));
    }
    let spectrum = p.spectrum();
    let z: Vec<f64> = spectrum
        .values()
        .iter()
        .map(|lam| {
            let g: f64 = StandardNormal.sample(rng);
            g / lam.sqrt()
        })
        .collect();
    let mut t = Tensor::new(dims, z)?;
    for (axis, eig) in p.eigen().iter().enumerate() {
        t = mode_multiply(&t, axis, &eig.vectors)?;
    }
    t.add(&mean.expand())
}

pub fn sample_ks_normal_seeded(p: &KSPrecision, mean: &KSMean, seed: u64) -> Result<Tensor> {
    sample_ks_normal(p, mean, &mut SynthRng::seed_from_u64(seed))
}

fn default_gauss_variance() -> f64 {
    0.05
}
fn default_poisson_rate() -> f64 {
    10.0
}
fn default_poisson_scale() -> f64 {
    14.0
}

/// Mean added on top of a zero-mean sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeanScenario {
    None,
    ConstantOffset {
        c: f64,
    },
    /// `m ~ N(0, 1)` plus a Kronecker vector sum of `mu_l ~ N(0, I)`.
    KsStructured,
    UnstructuredGaussian {
        #[serde(default = "default_gauss_variance")]
        variance: f64,
    },
    /// `Poisson(rate) / scale` per entry.
    UnstructuredPoisson {
        #[serde(default = "default_poisson_rate")]
        rate: f64,
        #[serde(default = "default_poisson_scale")]
        scale: f64,
    },
}

impl MeanScenario {
    pub fn name(&self) -> &'static str {
        match self {
            MeanScenario::None => "none",
            MeanScenario::ConstantOffset { .. } => "constant_offset",
            MeanScenario::KsStructured => "ks_structured",
            MeanScenario::UnstructuredGaussian { .. } => "unstructured_gaussian",
            MeanScenario::UnstructuredPoisson { .. } => "unstructured_poisson",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(format!("{}: {what}", self.name())));
        match *self {
            MeanScenario::ConstantOffset { c } if !c.is_finite() => bad("offset must be finite"),
            MeanScenario::UnstructuredGaussian { variance } if !(variance >= 0.0) => {
                bad("variance must be non-negative")
            }
            MeanScenario::UnstructuredPoisson { rate, scale } if !(rate > 0.0 && scale > 0.0) => {
                bad("rate and scale must be positive")
            }
            _ => Ok(()),
        }
    }
}

/// The mean tensor a scenario adds.
pub fn scenario_offset(dims: &[usize], s: &MeanScenario, rng: &mut impl Rng) -> Result<Tensor> {
    s.validate()?;
    let n: usize = dims.iter().product();
    let values: Vec<f64> = match *s {
        MeanScenario::None => vec![0.0; n],
        MeanScenario::ConstantOffset { c } => vec![c; n],
        MeanScenario::KsStructured => {
            let m: f64 = StandardNormal.sample(rng);
            let mus: Vec<DVector<f64>> = dims
                .iter()
                .map(|&d| DVector::from_fn(d, |_, _| StandardNormal.sample(rng)))
                .collect();
            return ks_mean_tensor(m, &mus);
        }
        MeanScenario::UnstructuredGaussian { variance } => {
            let dist = Normal::new(0.0, variance.sqrt())
                .map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng)).collect()
        }
        MeanScenario::UnstructuredPoisson { rate, scale } => {
            let dist = Poisson::new(rate).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            (0..n).map(|_| dist.sample(rng) / scale).collect()
        }
    };
    Tensor::new(dims.to_vec(), values)
}

pub fn apply_mean_scenario(t: &Tensor, s: &MeanScenario, rng: &mut impl Rng) -> Result<Tensor> {
    if *s == MeanScenario::None {
        return Ok(t.clone());
    }
    t.add(&scenario_offset(t.dims(), s, rng)?)
}

/// 1-based ranks with ties sharing their average rank.
fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    ranks
}

/// Replaces each slice along `axis` by centred normal scores
/// `Phi^{-1}((rank - 0.5) / n)`.
pub fn nonparanormal_transform(t: &Tensor, axis: usize) -> Result<Tensor> {
    t.check_axis(axis)?;
    let (outer, d, inner) = t.split(axis);
    let n = outer * inner;
    let std_normal = StatNormal::standard();
    let mut out = t.clone();
    let vals = out.values_mut();
    for i in 0..d {
        let idx: Vec<usize> = (0..outer)
            .flat_map(|o| (0..inner).map(move |r| (o * d + i) * inner + r))
            .collect();
        let slice: Vec<f64> = idx.iter().map(|&k| t.values()[k]).collect();
        if slice.iter().all(|&v| v == slice[0]) {
            return Err(Error::DegenerateFeature { axis, slice: i });
        }
        let scores: Vec<f64> = average_ranks(&slice)
            .into_iter()
            .map(|r| std_normal.inverse_cdf((r - 0.5) / n as f64))
            .collect();
        let mean = scores.iter().sum::<f64>() / n as f64;
        for (&k, s) in idx.iter().zip(scores) {
            vals[k] = s - mean;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::dense_ks;

    fn ks_distance_to_normal(mut xs: Vec<f64>) -> f64 {
        let n = StatNormal::standard();
        xs.sort_by(f64::total_cmp);
        let len = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = n.cdf(x);
                (c - i as f64 / len).abs().max(((i + 1) as f64 / len - c).abs())
            })
            .fold(0.0, f64::max)
    }

    /// Critical value of the one-sample KS statistic at alpha = 0.001.
    fn ks_critical(n: usize) -> f64 {
        1.949 / (n as f64).sqrt()
    }

    #[test]
    fn er_extremes() {
        let empty = gen_graph(&GraphSpec { kind: GraphKind::ErdosRenyi { p: 0.0 }, d: 6, seed: 1 }).unwrap();
        assert_eq!(empty.sum(), 0.0);
        let full = gen_graph(&GraphSpec { kind: GraphKind::ErdosRenyi { p: 1.0 }, d: 6, seed: 1 }).unwrap();
        assert_eq!(full.sum(), 30.0);
        assert_eq!(full.diagonal().sum(), 0.0);
    }

    #[test]
    fn invalid_graph_params() {
        for kind in [
            GraphKind::ErdosRenyi { p: 1.5 },
            GraphKind::BarabasiAlbert { attach: 0 },
            GraphKind::BarabasiAlbert { attach: 5 },
        ] {
            assert!(gen_graph(&GraphSpec { kind, d: 5, seed: 0 }).is_err());
        }
    }

    #[test]
    fn ba_is_connected_with_expected_edges_and_deterministic() {
        let spec = GraphSpec { kind: GraphKind::BarabasiAlbert { attach: 2 }, d: 30, seed: 9 };
        let a = gen_graph(&spec).unwrap();
        assert_eq!(a, gen_graph(&spec).unwrap());
        assert_eq!(a.sum() / 2.0, (2 * 28) as f64);
        assert_eq!(a, a.transpose());
        assert!(a.row_sum().iter().all(|&deg| deg >= 1.0));
    }

    #[test]
    fn ba_degrees_heavier_tailed_than_er() {
        let (d, attach) = (50, 2);
        let edges = (attach * (d - attach)) as f64;
        let p = edges / (d * (d - 1) / 2) as f64;
        let mut ba = Vec::new();
        let mut er = Vec::new();
        for seed in 0..100 {
            for (kind, out) in [
                (GraphKind::BarabasiAlbert { attach }, &mut ba),
                (GraphKind::ErdosRenyi { p }, &mut er),
            ] {
                let a = gen_graph(&GraphSpec { kind, d, seed }).unwrap();
                out.extend(a.row_sum().iter().copied());
            }
        }
        let cdf = |xs: &[f64], t: f64| xs.iter().filter(|&&x| x <= t).count() as f64 / xs.len() as f64;
        let kolmogorov = (0..d).map(|t| (cdf(&ba, t as f64) - cdf(&er, t as f64)).abs()).fold(0.0, f64::max);
        assert!(kolmogorov > 0.1, "distance {kolmogorov}");
        let tail = |xs: &[f64]| xs.iter().filter(|&&x| x >= 10.0).count();
        assert!(tail(&ba) > 5 * tail(&er).max(1));
    }

    #[test]
    fn precision_from_graph() {
        let w = WeightSpec::default();
        assert_eq!(
            graph_to_precision(&DMatrix::zeros(4, 4), &w, 0).unwrap(),
            DMatrix::identity(4, 4) * 0.5
        );
        let mut adj = DMatrix::zeros(2, 2);
        adj[(0, 1)] = 1.0;
        adj[(1, 0)] = 1.0;
        let fixed = WeightSpec { low: 0.4, high: 0.4, loading: 0.5 };
        let m = graph_to_precision(&adj, &fixed, 3).unwrap();
        let mut ev = m.symmetric_eigenvalues().as_slice().to_vec();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] - 0.5).abs() < 1e-12 && (ev[1] - 1.3).abs() < 1e-12);
        assert!(graph_to_precision(&adj, &WeightSpec { loading: 0.0, ..w }, 0).is_err());

        let adj = gen_graph(&GraphSpec { kind: GraphKind::ErdosRenyi { p: 0.3 }, d: 20, seed: 4 }).unwrap();
        let m = graph_to_precision(&adj, &w, 5).unwrap();
        assert!(m.symmetric_eigenvalues().min() >= w.loading - 1e-10);
        for i in 0..20 {
            for j in 0..20 {
                if i != j {
                    assert_eq!(m[(i, j)] != 0.0, adj[(i, j)] != 0.0);
                    if adj[(i, j)] != 0.0 {
                        assert!((0.2..=0.6).contains(&m[(i, j)].abs()));
                    }
                }
            }
        }
    }

    #[test]
    fn identity_precision_gives_standard_normals() {
        let p = KSPrecision::scaled_identity(&[10, 10], 0.5);
        let mut rng = SynthRng::seed_from_u64(6);
        let mut xs = Vec::new();
        for _ in 0..1000 {
            xs.extend_from_slice(sample_ks_normal(&p, &KSMean::zeros(&[10, 10]), &mut rng).unwrap().values());
        }
        let n = xs.len();
        assert!(ks_distance_to_normal(xs) < ks_critical(n));
    }

    #[test]
    fn covariance_matches_dense_inverse() {
        let f0 = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.8]);
        let f1 = DMatrix::from_row_slice(3, 3, &[0.9, -0.2, 0.0, -0.2, 1.1, 0.25, 0.0, 0.25, 0.7]);
        let p = KSPrecision::new(vec![f0, f1]).unwrap();
        let cov = dense_ks(p.factors()).unwrap().try_inverse().unwrap();
        let mean = KSMean::zeros(&[2, 3]);
        let mut rng = SynthRng::seed_from_u64(7);
        let n = 50_000;
        let mut emp = DMatrix::zeros(6, 6);
        for _ in 0..n {
            let v = DVector::from_column_slice(sample_ks_normal(&p, &mean, &mut rng).unwrap().values());
            emp += &v * v.transpose();
        }
        emp /= n as f64;
        assert!((emp - &cov).norm() / cov.norm() < 0.05);
    }

    #[test]
    fn grand_mean_recovered() {
        let p = KSPrecision::scaled_identity(&[2, 3], 1.0);
        let mean = KSMean::new(2.5, vec![DVector::zeros(2), DVector::zeros(3)]).unwrap();
        let mut rng = SynthRng::seed_from_u64(8);
        let reps = 10_000;
        let avg = (0..reps)
            .map(|_| sample_ks_normal(&p, &mean, &mut rng).unwrap().sum() / 6.0)
            .sum::<f64>()
            / reps as f64;
        // Omega = 2I, so each grand mean has variance 1 / (2 * 6)
        let se = (1.0 / 12.0 / reps as f64).sqrt();
        assert!((avg - 2.5).abs() < 4.0 * se);
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let p = KSPrecision::scaled_identity(&[3, 4], 1.0);
        let m = KSMean::zeros(&[3, 4]);
        assert_eq!(sample_ks_normal_seeded(&p, &m, 11).unwrap(), sample_ks_normal_seeded(&p, &m, 11).unwrap());
        assert_ne!(sample_ks_normal_seeded(&p, &m, 11).unwrap(), sample_ks_normal_seeded(&p, &m, 12).unwrap());
    }

    #[test]
    fn scenarios() {
        let mut rng = SynthRng::seed_from_u64(12);
        let t = Tensor::zeros(&[3, 4]);
        assert_eq!(apply_mean_scenario(&t, &MeanScenario::None, &mut rng).unwrap(), t);
        let ones = apply_mean_scenario(&t, &MeanScenario::ConstantOffset { c: 1.0 }, &mut rng).unwrap();
        assert!(ones.values().iter().all(|&v| v == 1.0));

        let big = Tensor::zeros(&[1000, 1000]);
        let pois = MeanScenario::UnstructuredPoisson { rate: 10.0, scale: 14.0 };
        let x = apply_mean_scenario(&big, &pois, &mut rng).unwrap();
        let n = x.len() as f64;
        let mean = x.sum() / n;
        let var = x.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        assert!((mean - 10.0 / 14.0).abs() < 1e-3);
        assert!((var - 10.0 / 196.0).abs() < 1e-3);

        let gauss = apply_mean_scenario(&big, &MeanScenario::UnstructuredGaussian { variance: 0.05 }, &mut rng).unwrap();
        let var = gauss.dot(&gauss) / n;
        assert!((var - 0.05).abs() < 1e-3);

        let ks = scenario_offset(&[3, 4], &MeanScenario::KsStructured, &mut rng).unwrap();
        // a Kronecker vector sum has vanishing interaction contrasts
        let v = |i: usize, j: usize| ks.values()[i * 4 + j];
        assert!((v(0, 0) - v(0, 1) - v(1, 0) + v(1, 1)).abs() < 1e-12);
        assert!(MeanScenario::UnstructuredPoisson { rate: -1.0, scale: 1.0 }.validate().is_err());
    }

    #[test]
    fn scenario_json_shapes() {
        let s: MeanScenario = serde_json::from_str(r#"{"kind":"constant_offset","c":1.0}"#).unwrap();
        assert_eq!(s, MeanScenario::ConstantOffset { c: 1.0 });
        let s: MeanScenario = serde_json::from_str(r#"{"kind":"unstructured_poisson"}"#).unwrap();
        assert_eq!(s, MeanScenario::UnstructuredPoisson { rate: 10.0, scale: 14.0 });
        assert!(serde_json::from_str::<MeanScenario>(r#"{"kind":"bogus"}"#).is_err());
        let g: GraphSpec = serde_json::from_str(r#"{"kind":"barabasi_albert","attach":2,"d":10}"#).unwrap();
        assert_eq!(g.kind, GraphKind::BarabasiAlbert { attach: 2 });
    }

    #[test]
    fn nonparanormal_examples() {
        let n = StatNormal::standard();
        let t = Tensor::new(vec![1, 3], vec![3.0, 1.0, 2.0]).unwrap();
        let g = nonparanormal_transform(&t, 0).unwrap();
        let want = [5.0 / 6.0, 1.0 / 6.0, 3.0 / 6.0].map(|q| n.inverse_cdf(q));
        for (a, b) in g.values().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }

        let flat = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 4.0, 4.0]).unwrap();
        assert!(matches!(
            nonparanormal_transform(&flat, 0),
            Err(Error::DegenerateFeature { axis: 0, slice: 1 })
        ));

        // axis 1 slices are columns here
        let mut rng = SynthRng::seed_from_u64(13);
        let expo = rand_distr::Exp::new(1.0).unwrap();
        let rows = 10_000;
        let vals: Vec<f64> = (0..rows * 2).map(|_| expo.sample(&mut rng)).collect();
        let t = Tensor::new(vec![rows, 2], vals).unwrap();
        let g = nonparanormal_transform(&t, 1).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..rows).map(|r| g.values()[r * 2 + c]).collect();
            assert!(col.iter().sum::<f64>().abs() < 1e-9);
            let raw: Vec<f64> = (0..rows).map(|r| t.values()[r * 2 + c]).collect();
            for i in 1..rows {
                assert_eq!(raw[i] > raw[0], col[i] > col[0]);
            }
            assert!(ks_distance_to_normal(col) < ks_critical(rows));
        }
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0, 3.0]), vec![2.5, 1.0, 2.5, 4.0]);
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..100).map(|i| derive_seed(7, i)).collect();
        assert_eq!(s.len(), 100);
    }
}
