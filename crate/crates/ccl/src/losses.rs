//! Training objectives: cluster-wise contrastive loss over queued negatives,
//! softmax cross-entropy with a rebuildable classifier head, batch-hard
//! triplet loss, cross-entropy on the amplitude spectrum, and the combined
//! weighted objective.

use crate::clustering::PseudoLabeling;
use crate::fourier;
use crate::linalg::{Matrix, Vector};
use crate::scalar::Scalar;
use crate::{Error, Result};

/// Linear classifier over features: logits = W f + b.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead<F: Scalar> {
    pub weights: Matrix<F>, // C x D
    pub bias: Vector<F>,    // C
}

impl<F: Scalar> ClassifierHead<F> {
    pub fn zeros(num_classes: usize, feature_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(num_classes, feature_dim),
            bias: Vector::zeros(num_classes),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.weights.rows
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.cols
    }

    pub fn logits(&self, feature: &Vector<F>) -> Result<Vector<F>> {
        let mut l = self.weights.matvec(feature)?;
        for (v, &b) in l.data.iter_mut().zip(&self.bias.data) {
            *v += b;
        }
        Ok(l)
    }
}

/// Loss value plus gradients with respect to the feature and head parameters.
#[derive(Debug, Clone)]
pub struct HeadLoss<F: Scalar> {
    pub value: F,
    pub grad_feature: Vector<F>,
    pub grad_weights: Matrix<F>,
    pub grad_bias: Vector<F>,
}

fn log_sum_exp<F: Scalar>(xs: &[F]) -> F {
    let m = xs.iter().cloned().fold(F::neg_infinity(), F::max);
    if !m.is_finite() {
        return m;
    }
    let s: F = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

/// Softmax cross-entropy on logits = head(feature).
pub fn cross_entropy<F: Scalar>(
    head: &ClassifierHead<F>,
    feature: &Vector<F>,
    label: usize,
) -> Result<HeadLoss<F>> {
    let c = head.num_classes();
    if label >= c {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes: c,
        });
    }
    let logits = head.logits(feature)?;
    let lse = log_sum_exp(&logits.data);
    let value = lse - logits.data[label];
    // softmax - onehot
    let mut dl = Vector::new(logits.data.iter().map(|&l| (l - lse).exp()).collect());
    dl.data[label] -= F::one();
    let grad_feature = head.weights.matvec_t(&dl)?;
    let mut grad_weights = Matrix::zeros(c, head.feature_dim());
    grad_weights.add_outer(F::one(), &dl, feature);
    Ok(HeadLoss {
        value,
        grad_feature,
        grad_weights,
        grad_bias: dl,
    })
}

/// Batch-hard triplet loss with Euclidean distances, averaged over anchors
/// that have at least one positive and one negative candidate.
#[derive(Debug, Clone)]
pub struct TripletLoss<F: Scalar> {
    pub value: F,
    pub grad_features: Vec<Vector<F>>,
    pub num_valid_anchors: usize,
}

pub fn triplet_loss<F: Scalar>(
    features: &[Vector<F>],
    labels: &[usize],
    margin: F,
) -> Result<TripletLoss<F>> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "triplet_loss: {} features vs {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = features.len();
    let mut grads = vec![Vector::zeros(features.first().map_or(0, |f| f.dim())); n];
    let mut total = F::zero();
    let mut valid = 0usize;
    let eps = F::c(1e-12);

    struct Active<F> {
        anchor: usize,
        pos: usize,
        neg: usize,
        dp: F,
        dn: F,
    }
    let mut actives: Vec<Active<F>> = Vec::new();

    for a in 0..n {
        let mut hardest_pos: Option<(usize, F)> = None;
        let mut hardest_neg: Option<(usize, F)> = None;
        for j in 0..n {
            if j == a {
                continue;
            }
            let d = features[a].dist(&features[j]);
            if labels[j] == labels[a] {
                if hardest_pos.map_or(true, |(_, best)| d > best) {
                    hardest_pos = Some((j, d));
                }
            } else if hardest_neg.map_or(true, |(_, best)| d < best) {
                hardest_neg = Some((j, d));
            }
        }
        let (Some((p, dp)), Some((ng, dn))) = (hardest_pos, hardest_neg) else {
            continue;
        };
        valid += 1;
        let hinge = dp - dn + margin;
        if hinge > F::zero() {
            total += hinge;
            actives.push(Active {
                anchor: a,
                pos: p,
                neg: ng,
                dp,
                dn,
            });
        }
    }
    if valid == 0 {
        return Err(Error::DegenerateBatch(
            "triplet_loss: no anchor has both a positive and a negative".into(),
        ));
    }
    let inv = F::one() / F::c(valid as f64);
    for act in &actives {
        // d(a,x) gradient wrt a is (a - x)/d
        let gp = features[act.anchor]
            .sub(&features[act.pos])
            .scale(inv / act.dp.max(eps));
        let gn = features[act.anchor]
            .sub(&features[act.neg])
            .scale(inv / act.dn.max(eps));
        grads[act.anchor].axpy(F::one(), &gp);
        grads[act.anchor].axpy(-F::one(), &gn);
        grads[act.pos].axpy(-F::one(), &gp);
        grads[act.neg].axpy(F::one(), &gn);
    }
    Ok(TripletLoss {
        value: total * inv,
        grad_features: grads,
        num_valid_anchors: valid,
    })
}

/// One anchor of the contrastive batch: its positive comes from the current
/// batch, its negatives from the queue (momentum features, no gradient).
#[derive(Debug, Clone)]
pub struct ContrastivePair<F: Scalar> {
    pub anchor: Vector<F>,
    pub pseudo_label: usize,
    pub positive: Vector<F>,
    pub negatives: Vec<Vector<F>>,
}

#[derive(Debug, Clone, Default)]
pub struct ContrastiveBatch<F: Scalar> {
    pub pairs: Vec<ContrastivePair<F>>,
}

#[derive(Debug, Clone)]
pub struct CclLoss<F: Scalar> {
    pub value: F,
    pub grad_anchors: Vec<Vector<F>>,
    pub grad_positives: Vec<Vector<F>>,
}

/// Cluster-wise contrastive loss, averaged over anchors:
/// -log( exp(a.p/tau) / Z ) with Z the sum of exp(a.n/tau) over queued
/// negatives, plus exp(a.p/tau) when `include_positive_in_denominator` is set
/// (the bounded form, default in training). Negatives receive no gradient.
pub fn ccl_loss<F: Scalar>(
    batch: &ContrastiveBatch<F>,
    tau: F,
    include_positive_in_denominator: bool,
) -> Result<CclLoss<F>> {
    if tau <= F::zero() {
        return Err(Error::Config("ccl_loss: tau must be positive".into()));
    }
    if batch.pairs.is_empty() {
        return Err(Error::DegenerateBatch("ccl_loss: empty batch".into()));
    }
    let n = batch.pairs.len();
    let inv = F::one() / F::c(n as f64);
    let mut value = F::zero();
    let mut grad_anchors = Vec::with_capacity(n);
    let mut grad_positives = Vec::with_capacity(n);

    for pair in &batch.pairs {
        if pair.negatives.is_empty() {
            return Err(Error::DegenerateCluster);
        }
        let s_p = pair.anchor.dot(&pair.positive) / tau;
        let s_n: Vec<F> = pair
            .negatives
            .iter()
            .map(|nv| pair.anchor.dot(nv) / tau)
            .collect();

        let (loss, d_sp, d_sn) = if include_positive_in_denominator {
            let mut logits = Vec::with_capacity(s_n.len() + 1);
            logits.push(s_p);
            logits.extend_from_slice(&s_n);
            let lse = log_sum_exp(&logits);
            let soft: Vec<F> = logits.iter().map(|&l| (l - lse).exp()).collect();
            (lse - s_p, soft[0] - F::one(), soft[1..].to_vec())
        } else {
            let lse = log_sum_exp(&s_n);
            let soft: Vec<F> = s_n.iter().map(|&l| (l - lse).exp()).collect();
            (lse - s_p, -F::one(), soft)
        };

        value += loss * inv;
        // dL/da = (d_sp * p + sum d_snj * n_j) / tau
        let mut ga = pair.positive.scale(d_sp / tau);
        for (w, nv) in d_sn.iter().zip(&pair.negatives) {
            ga.axpy(*w / tau, nv);
        }
        grad_anchors.push(ga.scale(inv));
        grad_positives.push(pair.anchor.scale(inv * d_sp / tau));
    }
    Ok(CclLoss {
        value,
        grad_anchors,
        grad_positives,
    })
}

/// Cross-entropy on the amplitude spectrum of the feature, through a separate
/// head. Gradients reach the feature via the amplitude chain rule.
pub fn fourier_ce<F: Scalar>(
    head_freq: &ClassifierHead<F>,
    feature: &Vector<F>,
    label: usize,
    eps: F,
) -> Result<HeadLoss<F>> {
    let spec = fourier::dft(feature)?;
    let amp = fourier::amplitude_eps(&spec, eps);
    let ce = cross_entropy(head_freq, &amp.values, label)?;
    let grad_feature = fourier::amplitude_backward(feature, &ce.grad_feature, eps)?;
    Ok(HeadLoss {
        value: ce.value,
        grad_feature,
        grad_weights: ce.grad_weights,
        grad_bias: ce.grad_bias,
    })
}

/// Component losses and the combined value
/// lambda_s * L_s + lambda_t * (delta * L_ccl + gamma * L_spa + (1-gamma) * L_fre).
#[derive(Debug, Clone, Copy)]
pub struct CombinedLoss<F: Scalar> {
    pub total: F,
    pub source: F,
    pub ccl: F,
    pub spatial: F,
    pub fourier: F,
}

#[allow(clippy::too_many_arguments)]
pub fn combined_loss<F: Scalar>(
    l_source: F,
    l_ccl: F,
    l_spa: F,
    l_fre: F,
    lambda_s: F,
    lambda_t: F,
    delta: F,
    gamma: F,
) -> CombinedLoss<F> {
    let total =
        lambda_s * l_source + lambda_t * (delta * l_ccl + gamma * l_spa + (F::one() - gamma) * l_fre);
    CombinedLoss {
        total,
        source: l_source,
        ccl: l_ccl,
        spatial: l_spa,
        fourier: l_fre,
    }
}

/// Rebuild the target classifier after a clustering round: one row per
/// cluster, each the L2-normalized centroid, zero bias.
pub fn init_head_from_centroids<F: Scalar>(
    labeling: &PseudoLabeling<F>,
) -> Result<ClassifierHead<F>> {
    if labeling.num_clusters == 0 {
        return Err(Error::DegenerateBatch(
            "init_head_from_centroids: zero clusters".into(),
        ));
    }
    Ok(ClassifierHead {
        weights: Matrix::from_rows(&labeling.centroids),
        bias: Vector::zeros(labeling.num_clusters),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(data: &[f64]) -> Vector<f64> {
        Vector::new(data.to_vec())
    }

    fn head_from(rows: &[&[f64]], bias: &[f64]) -> ClassifierHead<f64> {
        ClassifierHead {
            weights: Matrix::from_rows(&rows.iter().map(|r| v(r)).collect::<Vec<_>>()),
            bias: v(bias),
        }
    }

    // ---- cross entropy ----

    #[test]
    fn uniform_softmax_is_ln2() {
        let head = ClassifierHead::<f64>::zeros(2, 3);
        let ce = cross_entropy(&head, &v(&[1.0, 2.0, 3.0]), 0).unwrap();
        assert!((ce.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn saturated_logits_stable() {
        // logits (1000, 0) via bias, label 0 -> loss ~ 0, no overflow
        let head = head_from(&[&[0.0], &[0.0]], &[1000.0, 0.0]);
        let ce = cross_entropy(&head, &v(&[0.0]), 0).unwrap();
        assert!(ce.value.is_finite());
        assert!(ce.value < 1e-10);
    }

    #[test]
    fn label_out_of_range() {
        let head = ClassifierHead::<f64>::zeros(2, 2);
        assert!(matches!(
            cross_entropy(&head, &v(&[0.0, 0.0]), 2),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn ce_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = head_from(
            &[
                &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
                &[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)],
            ],
            &[0.1, -0.2, 0.3],
        );
        let f = v(&[0.4, -0.9]);
        let ce = cross_entropy(&head, &f, 1).unwrap();
        let h = 1e-6;
        for i in 0..2 {
            let mut fp = f.clone();
            fp.data[i] += h;
            let mut fm = f.clone();
            fm.data[i] -= h;
            let num = (cross_entropy(&head, &fp, 1).unwrap().value
                - cross_entropy(&head, &fm, 1).unwrap().value)
                / (2.0 * h);
            let a = ce.grad_feature.data[i];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-12) < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariance(
            logits in proptest::collection::vec(-5.0f64..5.0, 4),
            c in -10.0f64..10.0,
        ) {
            // CE through a bias-only head; shifting all logits by c keeps the loss.
            let zero_rows: [&[f64]; 4] = [&[0.0]; 4];
            let base = head_from(&zero_rows, &logits);
            let shifted_bias: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let shifted = head_from(&zero_rows, &shifted_bias);
            let x = v(&[0.0]);
            let a = cross_entropy(&base, &x, 2).unwrap().value;
            let b = cross_entropy(&shifted, &x, 2).unwrap().value;
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    // ---- triplet ----

    #[test]
    fn satisfied_margin_is_zero() {
        // anchor at origin, positive at 0.5, negative at 2.0, margin 0.3
        let feats = [v(&[0.0]), v(&[0.5]), v(&[2.0])];
        let labels = [0, 0, 1];
        let t = triplet_loss(&feats, &labels, 0.3).unwrap();
        // anchors 0 and 1 satisfied; anchor 2 has no positive
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn forced_hinge_arithmetic() {
        // pos at distance 1.0, neg at 0.5, margin 0.3 -> hinge 0.8 for both
        // same-class anchors; anchor 2 (other class) sees dp undefined.
        let feats = [v(&[0.0]), v(&[1.0]), v(&[0.5])];
        let labels = [0, 0, 1];
        let t = triplet_loss(&feats, &labels, 0.3).unwrap();
        assert!((t.value - 0.8).abs() < 1e-12);
        assert_eq!(t.num_valid_anchors, 2);
    }

    #[test]
    fn all_margins_satisfied_total_zero() {
        let feats = [v(&[0.0, 0.0]), v(&[0.1, 0.0]), v(&[5.0, 5.0]), v(&[5.1, 5.0])];
        let labels = [0, 0, 1, 1];
        let t = triplet_loss(&feats, &labels, 0.3).unwrap();
        assert_eq!(t.value, 0.0);
    }

    #[test]
    fn degenerate_batch_errors() {
        let feats = [v(&[0.0]), v(&[1.0])];
        assert!(matches!(
            triplet_loss(&feats, &[0, 0], 0.3),
            Err(Error::DegenerateBatch(_))
        ));
    }

    #[test]
    fn triplet_translation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let feats: Vec<Vector<f64>> = (0..6)
            .map(|_| v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        let labels = [0, 0, 1, 1, 2, 2];
        let shifted: Vec<Vector<f64>> =
            feats.iter().map(|f| f.add(&v(&[3.7, -1.2]))).collect();
        let a = triplet_loss(&feats, &labels, 0.3).unwrap().value;
        let b = triplet_loss(&shifted, &labels, 0.3).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn triplet_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let feats: Vec<Vector<f64>> = (0..6)
            .map(|_| v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]))
            .collect();
        let labels = [0, 0, 1, 1, 2, 2];
        let t = triplet_loss(&feats, &labels, 0.5).unwrap();
        let h = 1e-6;
        for i in 0..6 {
            for d in 0..2 {
                let mut fp = feats.clone();
                fp[i].data[d] += h;
                let mut fm = feats.clone();
                fm[i].data[d] -= h;
                let num = (triplet_loss(&fp, &labels, 0.5).unwrap().value
                    - triplet_loss(&fm, &labels, 0.5).unwrap().value)
                    / (2.0 * h);
                let a = t.grad_features[i].data[d];
                assert!(
                    (a - num).abs() / a.abs().max(num.abs()).max(1e-12) < 1e-4,
                    "feature {i} dim {d}: {a} vs {num}"
                );
            }
        }
    }

    // ---- ccl ----

    fn pair(anchor: &[f64], pos: &[f64], negs: &[&[f64]], label: usize) -> ContrastivePair<f64> {
        ContrastivePair {
            anchor: v(anchor),
            pseudo_label: label,
            positive: v(pos),
            negatives: negs.iter().map(|n| v(n)).collect(),
        }
    }

    #[test]
    fn orthogonal_single_negative_flag_off() {
        // a.p = 0, one negative with a.n = 0 -> -log(1/1) = 0
        let batch = ContrastiveBatch {
            pairs: vec![pair(&[1.0, 0.0], &[0.0, 1.0], &[&[0.0, 1.0]], 0)],
        };
        let r = ccl_loss(&batch, 1.0, false).unwrap();
        assert!(r.value.abs() < 1e-12);
    }

    #[test]
    fn two_orthogonal_negatives_log2() {
        let batch = ContrastiveBatch {
            pairs: vec![pair(&[1.0, 0.0], &[0.0, 1.0], &[&[0.0, 1.0], &[0.0, -1.0]], 0)],
        };
        let r = ccl_loss(&batch, 1.0, false).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bounded_form_small_loss() {
        // tau = 0.07, a.p = 0.7, one negative a.n = 0, flag on:
        // log(1 + e^{-10}) ~ 4.54e-5
        let batch = ContrastiveBatch {
            pairs: vec![pair(&[1.0, 0.0], &[0.7, 0.0], &[&[0.0, 1.0]], 0)],
        };
        let r = ccl_loss(&batch, 0.07, true).unwrap();
        let expect = (1.0 + (-10.0f64).exp()).ln();
        assert!((r.value - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_negatives_is_degenerate_cluster() {
        let batch = ContrastiveBatch {
            pairs: vec![pair(&[1.0, 0.0], &[0.0, 1.0], &[], 0)],
        };
        assert!(matches!(
            ccl_loss(&batch, 0.07, true),
            Err(Error::DegenerateCluster)
        ));
    }

    #[test]
    fn bounded_form_nonnegative_and_decreasing_in_similarity() {
        let mut prev = f64::INFINITY;
        for i in 0..10 {
            let sim = -0.9 + 0.2 * i as f64;
            let batch = ContrastiveBatch {
                pairs: vec![pair(&[1.0, 0.0], &[sim, 0.4], &[&[0.3, 0.2], &[-0.1, 0.9]], 0)],
            };
            let r = ccl_loss(&batch, 0.5, true).unwrap();
            assert!(r.value >= 0.0);
            assert!(r.value < prev);
            prev = r.value;
        }
    }

    #[test]
    fn invariant_under_negative_permutation() {
        let negs: Vec<Vec<f64>> = vec![vec![0.3, 0.2], vec![-0.1, 0.9], vec![0.5, -0.5]];
        let fwd: Vec<&[f64]> = negs.iter().map(|n| n.as_slice()).collect();
        let rev: Vec<&[f64]> = negs.iter().rev().map(|n| n.as_slice()).collect();
        let a = ccl_loss(
            &ContrastiveBatch {
                pairs: vec![pair(&[1.0, 0.0], &[0.6, 0.8], &fwd, 0)],
            },
            0.07,
            true,
        )
        .unwrap();
        let b = ccl_loss(
            &ContrastiveBatch {
                pairs: vec![pair(&[1.0, 0.0], &[0.6, 0.8], &rev, 0)],
            },
            0.07,
            true,
        )
        .unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
    }

    #[test]
    fn ccl_gradients_match_finite_differences_both_variants() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for include_pos in [true, false] {
            let rand_unit = |rng: &mut ChaCha8Rng| {
                v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
                    .normalized()
                    .unwrap()
            };
            let anchor = rand_unit(&mut rng);
            let positive = rand_unit(&mut rng);
            let negatives: Vec<Vector<f64>> = (0..4).map(|_| rand_unit(&mut rng)).collect();
            let build = |a: &Vector<f64>, p: &Vector<f64>| ContrastiveBatch {
                pairs: vec![ContrastivePair {
                    anchor: a.clone(),
                    pseudo_label: 0,
                    positive: p.clone(),
                    negatives: negatives.clone(),
                }],
            };
            let r = ccl_loss(&build(&anchor, &positive), 0.2, include_pos).unwrap();
            let h = 1e-6;
            for d in 0..3 {
                let mut ap = anchor.clone();
                ap.data[d] += h;
                let mut am = anchor.clone();
                am.data[d] -= h;
                let num = (ccl_loss(&build(&ap, &positive), 0.2, include_pos).unwrap().value
                    - ccl_loss(&build(&am, &positive), 0.2, include_pos).unwrap().value)
                    / (2.0 * h);
                let a = r.grad_anchors[0].data[d];
                assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-12) < 1e-4);

                let mut pp = positive.clone();
                pp.data[d] += h;
                let mut pm = positive.clone();
                pm.data[d] -= h;
                let num = (ccl_loss(&build(&anchor, &pp), 0.2, include_pos).unwrap().value
                    - ccl_loss(&build(&anchor, &pm), 0.2, include_pos).unwrap().value)
                    / (2.0 * h);
                let a = r.grad_positives[0].data[d];
                assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-12) < 1e-4);
            }
        }
    }

    // ---- fourier ce ----

    #[test]
    fn delta_feature_sees_flat_amplitude() {
        // feature (1,0,0,0): amplitude (1,1,1,1); zero head, C=2 -> ln 2
        let head = ClassifierHead::<f64>::zeros(2, 4);
        let r = fourier_ce(&head, &v(&[1.0, 0.0, 0.0, 0.0]), 0, 0.0).unwrap();
        assert!((r.value - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn fourier_ce_deterministic() {
        let head = head_from(&[&[0.1, 0.2, 0.3, 0.4], &[-0.1, 0.0, 0.2, 0.1]], &[0.0, 0.0]);
        let f = v(&[0.5, -0.2, 0.1, 0.9]);
        let a = fourier_ce(&head, &f, 1, fourier::AMPLITUDE_EPS).unwrap();
        let b = fourier_ce(&head, &f, 1, fourier::AMPLITUDE_EPS).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn fourier_ce_feature_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let head = head_from(
            &[
                &(0..4).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<_>>(),
                &(0..4).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<_>>(),
                &(0..4).map(|_| rng.gen_range(-0.5..0.5)).collect::<Vec<_>>(),
            ],
            &[0.0, 0.1, -0.1],
        );
        let f = v(&[0.5, -0.2, 0.1, 0.9]);
        let r = fourier_ce(&head, &f, 2, 0.0).unwrap();
        let h = 1e-6;
        for d in 0..4 {
            let mut fp = f.clone();
            fp.data[d] += h;
            let mut fm = f.clone();
            fm.data[d] -= h;
            let num = (fourier_ce(&head, &fp, 2, 0.0).unwrap().value
                - fourier_ce(&head, &fm, 2, 0.0).unwrap().value)
                / (2.0 * h);
            let a = r.grad_feature.data[d];
            assert!((a - num).abs() / a.abs().max(num.abs()).max(1e-12) < 1e-4);
        }
    }

    // ---- combined ----

    #[test]
    fn combined_arithmetic() {
        let c = combined_loss::<f64>(0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 0.1, 0.7);
        assert!((c.total - 2.4).abs() < 1e-12);
    }

    #[test]
    fn source_only_when_lambda_t_zero() {
        let c = combined_loss(5.0, 1.0, 2.0, 3.0, 1.0, 0.0, 0.1, 0.7);
        assert_eq!(c.total, 5.0);
    }

    #[test]
    fn gamma_one_drops_fourier_term() {
        let a = combined_loss(0.0, 1.0, 2.0, 3.0, 0.0, 1.0, 0.1, 1.0);
        let b = combined_loss(0.0, 1.0, 2.0, 100.0, 0.0, 1.0, 0.1, 1.0);
        assert_eq!(a.total, b.total);
    }

    proptest! {
        #[test]
        fn combined_is_linear_in_components(
            ls in 0.0f64..5.0, lc in 0.0f64..5.0, lsp in 0.0f64..5.0, lf in 0.0f64..5.0,
            s in 0.0f64..1.0, t in 0.0f64..1.0, delta in 0.0f64..1.0, gamma in 0.0f64..1.0,
        ) {
            let c = combined_loss(ls, lc, lsp, lf, s, t, delta, gamma);
            let expect = s * ls + t * (delta * lc + gamma * lsp + (1.0 - gamma) * lf);
            prop_assert!((c.total - expect).abs() < 1e-12);
        }
    }

    // ---- head from centroids ----

    #[test]
    fn single_cluster_head() {
        let labeling = PseudoLabeling {
            assignment: vec![Some(0)],
            num_clusters: 1,
            centroids: vec![v(&[0.0, 1.0])],
            round_id: 0,
        };
        let head = init_head_from_centroids(&labeling).unwrap();
        assert_eq!(head.num_classes(), 1);
        assert_eq!(head.weights.row(0), &[0.0, 1.0]);
    }

    #[test]
    fn orthogonal_centroids_argmax_at_own_class() {
        let labeling = PseudoLabeling {
            assignment: vec![Some(0), Some(1)],
            num_clusters: 2,
            centroids: vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])],
            round_id: 0,
        };
        let head = init_head_from_centroids(&labeling).unwrap();
        let l0 = head.logits(&v(&[1.0, 0.0])).unwrap();
        assert!(l0.data[0] > l0.data[1]);
        let l1 = head.logits(&v(&[0.0, 1.0])).unwrap();
        assert!(l1.data[1] > l1.data[0]);
    }

    #[test]
    fn zero_clusters_error() {
        let labeling = PseudoLabeling::<f64> {
            assignment: vec![None],
            num_clusters: 0,
            centroids: vec![],
            round_id: 0,
        };
        assert!(init_head_from_centroids(&labeling).is_err());
    }
}
