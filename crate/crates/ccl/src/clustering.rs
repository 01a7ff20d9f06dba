//! DBSCAN pseudo-label generation over encoded features, plus the clustering
//! quality metrics (NMI, BCubed F) tracked during training.
//!
//! The DBSCAN here is formulated order-independently: core points are decided
//! first, clusters are the connected components of core points (ids assigned
//! by smallest member index), and border points attach to the lowest cluster
//! id among their core neighbors. Unreachable points stay outliers.

use crate::linalg::Vector;
use crate::scalar::Scalar;
use crate::{Error, Result};
use std::collections::BTreeMap;

/// Per-sample cluster assignment for one clustering round. `None` marks an
/// outlier. Cluster ids are contiguous `0..num_clusters`.
#[derive(Debug, Clone)]
pub struct PseudoLabeling<F: Scalar> {
    pub assignment: Vec<Option<usize>>,
    pub num_clusters: usize,
    /// L2-normalized mean feature per cluster.
    pub centroids: Vec<Vector<F>>,
    pub round_id: u64,
}

impl<F: Scalar> PseudoLabeling<F> {
    pub fn outlier_fraction(&self) -> f64 {
        if self.assignment.is_empty() {
            return 0.0;
        }
        let outliers = self.assignment.iter().filter(|a| a.is_none()).count();
        outliers as f64 / self.assignment.len() as f64
    }

    /// Labels with each outlier mapped to its own fresh singleton id, the
    /// convention used by the clustering metrics.
    pub fn labels_outliers_as_singletons(&self) -> Vec<usize> {
        let mut next = self.num_clusters;
        self.assignment
            .iter()
            .map(|a| match a {
                Some(c) => *c,
                None => {
                    let id = next;
                    next += 1;
                    id
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DbscanParams<F: Scalar> {
    pub eps: F,
    pub min_pts: usize,
}

impl<F: Scalar> DbscanParams<F> {
    pub fn new(eps: F, min_pts: usize) -> Result<Self> {
        if eps <= F::zero() {
            return Err(Error::Config("dbscan eps must be positive".into()));
        }
        if min_pts == 0 {
            return Err(Error::Config("dbscan min_pts must be >= 1".into()));
        }
        Ok(Self { eps, min_pts })
    }
}

/// Density clustering with Euclidean distance. A core point has at least
/// `min_pts` neighbors within `eps`, itself included.
pub fn dbscan<F: Scalar>(features: &[Vector<F>], params: &DbscanParams<F>) -> Result<PseudoLabeling<F>> {
    if features.is_empty() {
        return Err(Error::Empty("dbscan: no features".into()));
    }
    let dim = features[0].dim();
    if features.iter().any(|f| f.dim() != dim) {
        return Err(Error::Shape("dbscan: inconsistent feature dims".into()));
    }
    let n = features.len();
    let eps_sq = params.eps * params.eps;

    let mut neighbors: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        neighbors[i].push(i);
        for j in i + 1..n {
            if features[i].sub(&features[j]).norm_sq() <= eps_sq {
                neighbors[i].push(j);
                neighbors[j].push(i);
            }
        }
    }
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= params.min_pts).collect();

    // Components of core points, ids in order of smallest member index.
    let mut assignment: Vec<Option<usize>> = vec![None; n];
    let mut num_clusters = 0usize;
    for start in 0..n {
        if !core[start] || assignment[start].is_some() {
            continue;
        }
        let cid = num_clusters;
        num_clusters += 1;
        let mut stack = vec![start];
        assignment[start] = Some(cid);
        while let Some(p) = stack.pop() {
            for &q in &neighbors[p] {
                if core[q] && assignment[q].is_none() {
                    assignment[q] = Some(cid);
                    stack.push(q);
                }
            }
        }
    }

    // Border points: lowest cluster id among core neighbors.
    for i in 0..n {
        if core[i] {
            continue;
        }
        let best = neighbors[i]
            .iter()
            .filter(|&&q| core[q])
            .filter_map(|&q| assignment[q])
            .min();
        assignment[i] = best;
    }

    let mut centroids = Vec::with_capacity(num_clusters);
    for c in 0..num_clusters {
        let mut sum = Vector::zeros(dim);
        let mut count = 0usize;
        for (i, a) in assignment.iter().enumerate() {
            if *a == Some(c) {
                sum.axpy(F::one(), &features[i]);
                count += 1;
            }
        }
        let mean = sum.scale(F::one() / F::c(count as f64));
        centroids.push(mean.normalized().unwrap_or(mean));
    }

    Ok(PseudoLabeling {
        assignment,
        num_clusters,
        centroids,
        round_id: 0,
    })
}

fn entropy(counts: &BTreeMap<usize, usize>, n: f64) -> f64 {
    counts
        .values()
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
pub fn nmi(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "nmi: {} vs {} samples",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("nmi: no samples".into()));
    }
    let n = pred.len() as f64;
    let mut cu: BTreeMap<usize, usize> = BTreeMap::new();
    let mut cv: BTreeMap<usize, usize> = BTreeMap::new();
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *cu.entry(p).or_default() += 1;
        *cv.entry(t).or_default() += 1;
        *joint.entry((p, t)).or_default() += 1;
    }
    let hu = entropy(&cu, n);
    let hv = entropy(&cv, n);
    let mut mi = 0.0;
    for (&(p, t), &c) in &joint {
        let pj = c as f64 / n;
        let pu = cu[&p] as f64 / n;
        let pv = cv[&t] as f64 / n;
        mi += pj * (pj / (pu * pv)).ln();
    }
    let denom = 0.5 * (hu + hv);
    if denom <= 0.0 {
        // Both partitions trivial (single cluster each): identical by definition.
        return Ok(1.0);
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Harmonic mean of BCubed precision and recall (per-item pairwise
/// correctness, averaged over items).
pub fn bcubed_f(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::Shape(format!(
            "bcubed_f: {} vs {} samples",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::Empty("bcubed_f: no samples".into()));
    }
    let n = pred.len();
    let mut precision = 0.0;
    let mut recall = 0.0;
    for i in 0..n {
        let mut same_pred = 0usize;
        let mut same_truth = 0usize;
        let mut same_both = 0usize;
        for j in 0..n {
            let sp = pred[j] == pred[i];
            let st = truth[j] == truth[i];
            same_pred += sp as usize;
            same_truth += st as usize;
            same_both += (sp && st) as usize;
        }
        precision += same_both as f64 / same_pred as f64;
        recall += same_both as f64 / same_truth as f64;
    }
    precision /= n as f64;
    recall /= n as f64;
    if precision + recall == 0.0 {
        return Ok(0.0);
    }
    Ok(2.0 * precision * recall / (precision + recall))
}
