//! Retrieval evaluation: mean average precision and CMC rank-k accuracy under
//! the standard re-ID protocol (gallery items sharing both the query's label
//! and camera are excluded; ties broken by ascending instance id).

use crate::linalg::Vector;
use crate::scalar::Scalar;
use crate::{Error, Result};

/// One item of a query or gallery set.
#[derive(Debug, Clone)]
pub struct EvalItem<F: Scalar> {
    pub feature: Vector<F>,
    pub label: usize,
    pub camera_id: usize,
    pub instance_id: u64,
}

#[derive(Debug, Clone)]
pub struct RetrievalResult {
    pub map: f64,
    /// cmc[k-1] = fraction of queries with a relevant item in the top k.
    pub cmc: Vec<f64>,
    /// Queries with zero relevant gallery items, skipped from both metrics.
    pub skipped_queries: usize,
}

pub fn evaluate<F: Scalar>(
    queries: &[EvalItem<F>],
    gallery: &[EvalItem<F>],
    max_rank: usize,
) -> Result<RetrievalResult> {
    if queries.is_empty() || gallery.is_empty() {
        return Err(Error::Empty("evaluate: empty query or gallery set".into()));
    }
    let dim = queries[0].feature.dim();
    if queries
        .iter()
        .chain(gallery)
        .any(|item| item.feature.dim() != dim)
    {
        return Err(Error::Shape("evaluate: inconsistent feature dims".into()));
    }
    let max_rank = max_rank.max(1).min(gallery.len());

    let mut ap_sum = 0.0;
    let mut cmc_counts = vec![0usize; max_rank];
    let mut used = 0usize;
    let mut skipped = 0usize;

    for q in queries {
        // Standard protocol: drop gallery items with the same label AND camera.
        let mut candidates: Vec<&EvalItem<F>> = gallery
            .iter()
            .filter(|g| !(g.label == q.label && g.camera_id == q.camera_id))
            .collect();
        candidates.sort_by(|a, b| {
            let da = q.feature.dist(&a.feature);
            let db = q.feature.dist(&b.feature);
            da.partial_cmp(&db)
                .unwrap()
                .then(a.instance_id.cmp(&b.instance_id))
        });
        let relevant: Vec<bool> = candidates.iter().map(|g| g.label == q.label).collect();
        let num_relevant = relevant.iter().filter(|&&r| r).count();
        if num_relevant == 0 {
            skipped += 1;
            continue;
        }
        used += 1;
        let mut hits = 0usize;
        let mut ap = 0.0;
        for (rank0, &rel) in relevant.iter().enumerate() {
            if rel {
                hits += 1;
                ap += hits as f64 / (rank0 + 1) as f64;
                if hits == 1 {
                    for k in rank0..max_rank {
                        cmc_counts[k] += 1;
                    }
                }
            }
        }
        ap_sum += ap / num_relevant as f64;
    }

    if used == 0 {
        return Err(Error::DegenerateBatch(
            "evaluate: every query had zero relevant gallery items".into(),
        ));
    }
    Ok(RetrievalResult {
        map: ap_sum / used as f64,
        cmc: cmc_counts
            .iter()
            .map(|&c| c as f64 / used as f64)
            .collect(),
        skipped_queries: skipped,
    })
}
