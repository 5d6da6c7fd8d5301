//! Edge-recovery metrics, categorical assortativity and the cyclic-adjacency
//! score.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::solver::threshold_edges;

/// Undirected edges `(i, j)` with `i < j` over `n_nodes` nodes.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EdgeSet {
    n_nodes: usize,
    pairs: BTreeSet<(usize, usize)>,
}

impl EdgeSet {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            n_nodes,
            pairs: BTreeSet::new(),
        }
    }

    /// Builds a set from pairs in either orientation; self-loops are rejected.
    pub fn from_pairs(n_nodes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = Self::new(n_nodes);
        for (a, b) in pairs {
            set.insert(a, b)?;
        }
        Ok(set)
    }

    /// Support of the off-diagonal entries of a symmetric matrix.
    pub fn from_support(m: &DMatrix<f64>) -> Self {
        let d = m.nrows();
        let mut pairs = BTreeSet::new();
        for i in 0..d {
            for j in i + 1..d {
                if m[(i, j)] != 0.0 {
                    pairs.insert((i, j));
                }
            }
        }
        Self { n_nodes: d, pairs }
    }

    pub fn insert(&mut self, a: usize, b: usize) -> Result<bool> {
        let (i, j) = if a < b { (a, b) } else { (b, a) };
        if i == j || j >= self.n_nodes {
            return Err(Error::InvalidParameter(format!(
                "edge ({a}, {b}) invalid for {} nodes",
                self.n_nodes
            )));
        }
        Ok(self.pairs.insert((i, j)))
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn pairs(&self) -> &BTreeSet<(usize, usize)> {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        let key = if i < j { (i, j) } else { (j, i) };
        self.pairs.contains(&key)
    }

    pub fn intersection_len(&self, other: &EdgeSet) -> usize {
        self.pairs.intersection(&other.pairs).count()
    }

    /// Symmetric 0/1 adjacency matrix.
    pub fn to_adjacency(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n_nodes, self.n_nodes);
        for &(i, j) in &self.pairs {
            a[(i, j)] = 1.0;
            a[(j, i)] = 1.0;
        }
        a
    }
}

/// `(precision, recall)` of `pred` against `truth`. An empty prediction has
/// precision 1 and an empty truth has recall 1.
pub fn precision_recall(pred: &EdgeSet, truth: &EdgeSet) -> (f64, f64) {
    let hits = pred.intersection_len(truth) as f64;
    let precision = if pred.is_empty() {
        1.0
    } else {
        hits / pred.len() as f64
    };
    let recall = if truth.is_empty() {
        1.0
    } else {
        hits / truth.len() as f64
    };
    (precision, recall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PRPoint {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
}

/// Precision/recall as a function of the number of retained edges.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct PRCurve {
    pub points: Vec<PRPoint>,
}

impl PRCurve {
    /// CSV with header `k,precision,recall`, 12 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,precision,recall\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.k, fmt_sig(p.precision, 12), fmt_sig(p.recall, 12));
        }
        out
    }
}

/// A sweep plus whether any requested edge count had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct PRSweep {
    pub curve: PRCurve,
    pub clamped: bool,
}

/// Thresholds `tilde_factor` at every edge count in `ks` and scores the result.
pub fn pr_sweep(tilde_factor: &DMatrix<f64>, truth: &EdgeSet, ks: &[usize]) -> Result<PRSweep> {
    if ks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "edge-count grid must be strictly increasing".into(),
        ));
    }
    if tilde_factor.nrows() != truth.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} nodes in the estimate vs {} in the truth",
            tilde_factor.nrows(),
            truth.n_nodes()
        )));
    }
    let mut clamped = false;
    let points = ks
        .iter()
        .map(|&k| {
            let sel = threshold_edges(tilde_factor, k);
            clamped |= sel.clamped;
            let (precision, recall) = precision_recall(&sel.edges, truth);
            PRPoint {
                k,
                precision,
                recall,
            }
        })
        .collect();
    Ok(PRSweep {
        curve: PRCurve { points },
        clamped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aupr {
    pub value: f64,
    /// Set when every point shares one recall value.
    pub degenerate: bool,
}

/// Trapezoidal area under precision as a function of recall, clipped to `[0, 1]`.
pub fn aupr(curve: &PRCurve) -> Result<Aupr> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(
            "AUPR needs at least two curve points".into(),
        ));
    }
    let r0 = pts[0].recall;
    if pts.iter().all(|p| p.recall == r0) {
        let mean = pts.iter().map(|p| p.precision).sum::<f64>() / pts.len() as f64;
        return Ok(Aupr {
            value: mean,
            degenerate: true,
        });
    }
    let area: f64 = pts
        .windows(2)
        .map(|w| (w[1].recall - w[0].recall) * (w[0].precision + w[1].precision) / 2.0)
        .sum();
    Ok(Aupr {
        value: area.clamp(0.0, 1.0),
        degenerate: false,
    })
}

/// Newman's categorical assortativity coefficient.
pub fn assortativity<L: Ord>(edges: &EdgeSet, labels: &[L]) -> Result<f64> {
    if edges.is_empty() {
        return Err(Error::InvalidParameter(
            "assortativity needs at least one edge".into(),
        ));
    }
    if labels.len() != edges.n_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            edges.n_nodes()
        )));
    }
    let mut index: BTreeMap<&L, usize> = BTreeMap::new();
    for l in labels {
        let next = index.len();
        index.entry(l).or_insert(next);
    }
    let c = index.len();
    let cat: Vec<usize> = labels.iter().map(|l| index[l]).collect();
    let mut e = vec![vec![0.0; c]; c];
    let w = 1.0 / (2.0 * edges.len() as f64);
    for &(i, j) in edges.pairs() {
        e[cat[i]][cat[j]] += w;
        e[cat[j]][cat[i]] += w;
    }
    let trace: f64 = (0..c).map(|k| e[k][k]).sum();
    let ab: f64 = (0..c)
        .map(|k| {
            let a: f64 = e[k].iter().sum();
            let b: f64 = (0..c).map(|r| e[r][k]).sum();
            a * b
        })
        .sum();
    let denom = 1.0 - ab;
    if denom.abs() < 1e-15 {
        return Err(Error::UndefinedAssortativity);
    }
    Ok((trace - ab) / denom)
}

/// Default frame tolerance for [`cyclic_adjacency_score`]: adjacent frames or
/// frames with one frame between them.
pub const CYCLIC_TOL: usize = 2;

/// Fraction of edges joining frames within `tol` steps on a ring of
/// `n_frames`. An empty edge set scores 0.
pub fn cyclic_adjacency_score(edges: &EdgeSet, n_frames: usize, tol: usize) -> f64 {
    if edges.is_empty() {
        return 0.0;
    }
    let good = edges
        .pairs()
        .iter()
        .filter(|&&(i, j)| {
            let gap = j - i;
            gap.min(n_frames.saturating_sub(gap)) <= tol
        })
        .count();
    good as f64 / edges.len() as f64
}

/// Formats like C's `%.{sig}g`.
pub fn fmt_sig(x: f64, sig: usize) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", sig.saturating_sub(1), x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= sig as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        let decimals = (sig as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn es(n: usize, pairs: &[(usize, usize)]) -> EdgeSet {
        EdgeSet::from_pairs(n, pairs.iter().copied()).unwrap()
    }

    #[test]
    fn edge_set_validation() {
        assert!(EdgeSet::from_pairs(3, [(1, 1)]).is_err());
        assert!(EdgeSet::from_pairs(3, [(0, 3)]).is_err());
        let s = es(3, &[(2, 0)]);
        assert!(s.contains(0, 2) && s.contains(2, 0));
    }

    #[test]
    fn precision_recall_examples() {
        let t = es(3, &[(0, 1), (1, 2)]);
        assert_eq!(precision_recall(&t, &t), (1.0, 1.0));
        assert_eq!(precision_recall(&EdgeSet::new(3), &t), (1.0, 0.0));
        let p = es(3, &[(0, 1), (0, 2)]);
        assert_eq!(precision_recall(&p, &t), (0.5, 0.5));
    }

    #[test]
    fn sweep_on_separating_matrix() {
        // true edges get larger magnitudes than false ones
        let truth = es(4, &[(0, 1), (1, 2), (2, 3)]);
        let mut m = DMatrix::from_element(4, 4, 0.1);
        for &(i, j) in truth.pairs() {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        let sweep = pr_sweep(&m, &truth, &[0, 1, 2, 3, 4, 5]).unwrap();
        let pts = &sweep.curve.points;
        assert_eq!((pts[0].precision, pts[0].recall), (1.0, 0.0));
        for p in &pts[..4] {
            assert_eq!(p.precision, 1.0);
        }
        assert!(pts[4].precision < 1.0);
        assert!(!sweep.clamped);
        assert!(pr_sweep(&m, &truth, &[3, 2]).is_err());
        assert!(pr_sweep(&m, &truth, &[0, 7]).unwrap().clamped);
    }

    #[test]
    fn aupr_examples() {
        let flat = |p: f64| PRCurve {
            points: vec![
                PRPoint { k: 0, precision: p, recall: 0.0 },
                PRPoint { k: 1, precision: p, recall: 1.0 },
            ],
        };
        assert_eq!(aupr(&flat(1.0)).unwrap().value, 1.0);
        assert_eq!(aupr(&flat(0.5)).unwrap().value, 0.5);
        let three = PRCurve {
            points: vec![
                PRPoint { k: 0, precision: 1.0, recall: 0.0 },
                PRPoint { k: 2, precision: 0.5, recall: 0.5 },
                PRPoint { k: 4, precision: 0.25, recall: 1.0 },
            ],
        };
        // 0.5 * (1 + 0.5) / 2 + 0.5 * (0.5 + 0.25) / 2
        assert!((aupr(&three).unwrap().value - 0.5625).abs() < 1e-15);
        let degenerate = PRCurve {
            points: vec![
                PRPoint { k: 0, precision: 1.0, recall: 0.0 },
                PRPoint { k: 1, precision: 0.0, recall: 0.0 },
            ],
        };
        let a = aupr(&degenerate).unwrap();
        assert!(a.degenerate);
        assert_eq!(a.value, 0.5);
        assert!(aupr(&PRCurve::default()).is_err());
    }

    #[test]
    fn assortativity_examples() {
        let labels = ["a", "a", "b", "b"];
        let within = es(4, &[(0, 1), (2, 3)]);
        assert!((assortativity(&within, &labels).unwrap() - 1.0).abs() < 1e-15);
        let bipartite = es(4, &[(0, 2), (0, 3), (1, 2), (1, 3)]);
        assert!((assortativity(&bipartite, &labels).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            assortativity(&within, &["x"; 4]),
            Err(Error::UndefinedAssortativity)
        ));
        assert!(assortativity(&EdgeSet::new(4), &labels).is_err());
    }

    #[test]
    fn assortativity_mixed_example() {
        // labels: 0 0 1 1 2 2; edges (0,1) (0,2) (2,3) (3,4) (4,5) (1,5)
        let labels = [0, 0, 1, 1, 2, 2];
        let edges = es(6, &[(0, 1), (0, 2), (2, 3), (3, 4), (4, 5), (1, 5)]);
        // mixing counts (both orientations, /12): e00=2, e11=2, e22=2,
        // e01=e10=1, e12=e21=1, e02=e20=1 -> a = (4, 4, 4)/12
        let trace = 6.0 / 12.0;
        let ab = 3.0 * (4.0f64 / 12.0).powi(2);
        let expected = (trace - ab) / (1.0 - ab);
        assert!((assortativity(&edges, &labels).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn cyclic_examples() {
        let n = 10;
        let ring = EdgeSet::from_pairs(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap();
        assert_eq!(cyclic_adjacency_score(&ring, n, 1), 1.0);
        let across = es(n, &[(0, n / 2)]);
        assert_eq!(cyclic_adjacency_score(&across, n, CYCLIC_TOL), 0.0);
        let mixed = es(n, &[(0, 9), (0, 2), (0, 3), (1, 8)]);
        assert_eq!(cyclic_adjacency_score(&mixed, n, CYCLIC_TOL), 0.5);
    }

    #[test]
    fn csv_format() {
        let c = PRCurve {
            points: vec![
                PRPoint { k: 0, precision: 1.0, recall: 0.0 },
                PRPoint { k: 3, precision: 2.0 / 3.0, recall: 0.125 },
            ],
        };
        assert_eq!(c.to_csv(), "k,precision,recall\n0,1,0\n3,0.666666666667,0.125\n");
        assert_eq!(fmt_sig(1.5e-7, 12), "1.5e-07");
        assert_eq!(fmt_sig(-123456.0, 12), "-123456");
    }

    fn random_case() -> impl Strategy<Value = (usize, Vec<(usize, usize)>, Vec<(usize, usize)>)> {
        (3usize..9).prop_flat_map(|n| {
            let pair = (0..n, 0..n).prop_filter("no loops", |(a, b)| a != b);
            (
                Just(n),
                prop::collection::vec(pair.clone(), 0..12),
                prop::collection::vec(pair, 0..12),
            )
        })
    }

    proptest! {
        #[test]
        fn precision_recall_brute_force((n, p, t) in random_case()) {
            let pred = EdgeSet::from_pairs(n, p.iter().copied()).unwrap();
            let truth = EdgeSet::from_pairs(n, t.iter().copied()).unwrap();
            let norm = |v: &[(usize, usize)]| -> Vec<(usize, usize)> {
                let mut v: Vec<_> = v.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
                v.sort();
                v.dedup();
                v
            };
            let (pn, tn) = (norm(&p), norm(&t));
            let hits = pn.iter().filter(|e| tn.contains(e)).count() as f64;
            let (prec, rec) = precision_recall(&pred, &truth);
            if !pn.is_empty() { prop_assert_eq!(prec, hits / pn.len() as f64); }
            if !tn.is_empty() { prop_assert_eq!(rec, hits / tn.len() as f64); }
        }

        #[test]
        fn sweep_recall_monotone(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = 7;
            let mut m = DMatrix::zeros(d, d);
            let mut truth = EdgeSet::new(d);
            for i in 0..d {
                for j in i + 1..d {
                    let v: f64 = rng.random_range(-1.0..1.0);
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                    if rng.random_bool(0.3) { truth.insert(i, j).unwrap(); }
                }
            }
            let ks: Vec<usize> = (0..=21).collect();
            let sweep = pr_sweep(&m, &truth, &ks).unwrap();
            for w in sweep.curve.points.windows(2) {
                prop_assert!(w[1].recall >= w[0].recall);
            }
            // direct recomputation per k
            let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
            for i in 0..d { for j in i + 1..d { ranked.push((m[(i, j)].abs(), i, j)); } }
            ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
            for p in &sweep.curve.points {
                let pred = EdgeSet::from_pairs(d, ranked[..p.k].iter().map(|&(_, i, j)| (i, j))).unwrap();
                prop_assert_eq!(precision_recall(&pred, &truth), (p.precision, p.recall));
            }
        }

        #[test]
        fn assortativity_relabel_and_permute_invariant(seed in any::<u64>()) {
            use rand::{Rng, SeedableRng, seq::SliceRandom};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = 8;
            let labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8).collect();
            let mut edges = EdgeSet::new(n);
            for i in 0..n { for j in i + 1..n { if rng.random_bool(0.4) { edges.insert(i, j).unwrap(); } } }
            prop_assume!(!edges.is_empty());
            let base = assortativity(&edges, &labels);
            prop_assume!(base.is_ok());
            let base = base.unwrap();
            let relabeled: Vec<u8> = labels.iter().map(|&l| 2 - l).collect();
            prop_assert!((assortativity(&edges, &relabeled).unwrap() - base).abs() < 1e-12);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let moved = EdgeSet::from_pairs(n, edges.pairs().iter().map(|&(i, j)| (perm[i], perm[j]))).unwrap();
            let mut moved_labels = vec![0u8; n];
            for i in 0..n { moved_labels[perm[i]] = labels[i]; }
            prop_assert!((assortativity(&moved, &moved_labels).unwrap() - base).abs() < 1e-12);
        }
    }
}
