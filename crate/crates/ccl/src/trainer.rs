//! The three-phase training loop: source pre-training, joint training with
//! progressive loss weights, then target-only fine-tuning. Clustering rounds
//! rebuild the target heads and refresh the negative queue; every step updates
//! the regular encoder by gradient descent and the momentum encoder by
//! exponential averaging. One metrics record is emitted per epoch.

use crate::clustering::{bcubed_f, dbscan, nmi, DbscanParams, PseudoLabeling};
use crate::config::{CclPairing, Optimizer, TargetSupervision, TrainConfig};
use crate::data::{pk_sample, splitmix, HiddenLabels, SourceSample, TargetSample};
use crate::encoder::{Activation, Encoder, EncoderGrads};
use crate::evaluator::{evaluate, EvalItem};
use crate::fourier::{amplitude_eps, dft, AMPLITUDE_EPS};
use crate::linalg::{Matrix, Vector};
use crate::losses::{
    ccl_loss, cross_entropy, fourier_ce, init_head_from_centroids, triplet_loss, ClassifierHead,
    ContrastiveBatch, ContrastivePair,
};
use crate::memory::{momentum_update, NegativeQueue};
use crate::schedule::Phase;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Per-epoch metrics line. Serialized as one JSON object per line; fields
/// without a defined value yet (e.g. cluster stats during pre-training) are
/// null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub phase: Phase,
    pub lambda_s: f64,
    pub lambda_t: f64,
    pub loss_total: f64,
    pub loss_source: Option<f64>,
    pub loss_ccl: Option<f64>,
    pub loss_spatial: Option<f64>,
    pub loss_fourier: Option<f64>,
    pub num_clusters: Option<usize>,
    pub outlier_fraction: Option<f64>,
    pub nmi: Option<f64>,
    pub bcubed_f: Option<f64>,
    pub map: f64,
    pub rank1: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub encoder: Encoder<f64>,
    pub momentum_encoder: Encoder<f64>,
    pub records: Vec<EpochRecord>,
}

pub fn write_jsonl(path: &Path, records: &[EpochRecord]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)
            .map_err(|e| Error::Config(format!("serialize epoch record: {e}")))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Deterministic target split: every 5th sample is held out of training;
/// within the holdout, every 3rd is a query and the rest form the gallery.
fn split_target(n: usize) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut query = Vec::new();
    let mut gallery = Vec::new();
    let mut h = 0usize;
    for i in 0..n {
        if i % 5 == 0 {
            if h % 3 == 0 {
                query.push(i);
            } else {
                gallery.push(i);
            }
            h += 1;
        } else {
            train.push(i);
        }
    }
    (train, query, gallery)
}

/// Adam state over the encoder's flattened parameters; heads stay on plain
/// gradient descent (they are rebuilt every clustering round anyway).
struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn apply(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const WD: f64 = 5e-4;
        const EPS: f64 = 1e-8;
        self.t += 1;
        let bc1 = 1.0 - B1.powi(self.t as i32);
        let bc2 = 1.0 - B2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i] + WD * params[i];
            self.m[i] = B1 * self.m[i] + (1.0 - B1) * g;
            self.v[i] = B2 * self.v[i] + (1.0 - B2) * g * g;
            let mh = self.m[i] / bc1;
            let vh = self.v[i] / bc2;
            params[i] -= lr * mh / (vh.sqrt() + EPS);
        }
    }
}

/// Accumulated gradients for one classifier head.
struct HeadGrads {
    weights: Matrix<f64>,
    bias: Vector<f64>,
}

impl HeadGrads {
    fn zeros_like(head: &ClassifierHead<f64>) -> Self {
        Self {
            weights: Matrix::zeros(head.num_classes(), head.feature_dim()),
            bias: Vector::zeros(head.num_classes()),
        }
    }

    fn apply(self, head: &mut ClassifierHead<f64>, lr: f64) {
        head.weights.axpy(-lr, &self.weights);
        head.bias.axpy(-lr, &self.bias);
    }
}

/// Target classifier over amplitude spectra: one row per cluster, each the
/// normalized amplitude spectrum of the cluster centroid.
fn freq_head_from_centroids(labeling: &PseudoLabeling<f64>) -> Result<ClassifierHead<f64>> {
    if labeling.num_clusters == 0 {
        return Err(Error::DegenerateBatch(
            "freq_head_from_centroids: zero clusters".into(),
        ));
    }
    let mut rows = Vec::with_capacity(labeling.num_clusters);
    for c in &labeling.centroids {
        let amp = amplitude_eps(&dft(c)?, AMPLITUDE_EPS).values;
        rows.push(amp.normalized().unwrap_or(amp));
    }
    Ok(ClassifierHead {
        weights: Matrix::from_rows(&rows),
        bias: Vector::zeros(labeling.num_clusters),
    })
}

struct Trainer<'a> {
    cfg: &'a TrainConfig,
    source: &'a [SourceSample],
    target: &'a [TargetSample],
    hidden: &'a HiddenLabels,
    train_idx: Vec<usize>,
    query_idx: Vec<usize>,
    gallery_idx: Vec<usize>,
    encoder: Encoder<f64>,
    momentum: Encoder<f64>,
    head_source: ClassifierHead<f64>,
    head_target: Option<ClassifierHead<f64>>,
    head_freq: Option<ClassifierHead<f64>>,
    labeling: Option<PseudoLabeling<f64>>,
    queue: NegativeQueue<f64>,
    adam: Option<AdamState>,
    consecutive_degenerate: u32,
    round: u64,
    last_nmi: Option<f64>,
    last_bcubed: Option<f64>,
}

/// Per-step gradient bundle: encoder parameter gradients plus optional head
/// gradients, all already weighted by the schedule and loss weights.
struct StepGrads {
    encoder: EncoderGrads<f64>,
    head_source: Option<HeadGrads>,
    head_target: Option<HeadGrads>,
    head_freq: Option<HeadGrads>,
}

#[derive(Default, Clone, Copy)]
struct StepLosses {
    source: Option<f64>,
    ccl: Option<f64>,
    spatial: Option<f64>,
    fourier: Option<f64>,
    total: f64,
}

impl<'a> Trainer<'a> {
    fn new(
        cfg: &'a TrainConfig,
        source: &'a [SourceSample],
        target: &'a [TargetSample],
        hidden: &'a HiddenLabels,
    ) -> Result<Self> {
        cfg.validate()?;
        if source.is_empty() || target.is_empty() {
            return Err(Error::Empty("train: empty source or target set".into()));
        }
        if hidden.len() != target.len() {
            return Err(Error::Shape(
                "train: hidden labels do not match target set".into(),
            ));
        }
        let input_dim = source[0].input.dim();
        if source
            .iter()
            .map(|s| s.input.dim())
            .chain(target.iter().map(|t| t.input.dim()))
            .any(|d| d != input_dim)
        {
            return Err(Error::Shape("train: inconsistent input dims".into()));
        }
        let num_classes = source.iter().map(|s| s.label).max().unwrap() + 1;
        let dims = [input_dim, cfg.hidden_width, cfg.feature_dim];
        let encoder = Encoder::random(
            &dims,
            Activation::Tanh,
            true,
            splitmix(cfg.seed, 0xE0C0DE),
        );
        let momentum = encoder.clone();
        let (train_idx, query_idx, gallery_idx) = split_target(target.len());
        if query_idx.is_empty() || gallery_idx.is_empty() {
            return Err(Error::Empty("train: target set too small to hold out".into()));
        }
        let adam = match cfg.optimizer {
            Optimizer::Adam => Some(AdamState::new(encoder.num_params())),
            Optimizer::Gd => None,
        };
        Ok(Self {
            cfg,
            source,
            target,
            hidden,
            train_idx,
            query_idx,
            gallery_idx,
            head_source: ClassifierHead::zeros(num_classes, cfg.feature_dim),
            encoder,
            momentum,
            head_target: None,
            head_freq: None,
            labeling: None,
            queue: NegativeQueue::new(cfg.queue_capacity),
            adam,
            consecutive_degenerate: 0,
            round: 0,
            last_nmi: None,
            last_bcubed: None,
        })
    }

    fn step_seed(&self, epoch: u32, step: u32, purpose: u64) -> u64 {
        splitmix(
            self.cfg.seed,
            ((epoch as u64) << 24) ^ ((step as u64) << 8) ^ purpose,
        )
    }

    /// Encode all training-target samples with the momentum encoder, cluster,
    /// and rebuild heads + queue. A round yielding zero clusters is skipped
    /// (previous pseudo-labels stay live); three consecutive skips abort.
    fn clustering_round(&mut self) -> Result<()> {
        let feats: Vec<Vector<f64>> = self
            .train_idx
            .iter()
            .map(|&i| self.momentum.encode(&self.target[i].input))
            .collect::<Result<_>>()?;
        let params = DbscanParams::new(self.cfg.dbscan_eps, self.cfg.dbscan_min_pts)?;
        let mut labeling = dbscan(&feats, &params)?;
        if labeling.num_clusters == 0 {
            self.consecutive_degenerate += 1;
            if self.consecutive_degenerate >= 3 {
                return Err(Error::Abort(
                    "3 consecutive clustering rounds produced zero clusters".into(),
                ));
            }
            return Ok(());
        }
        self.consecutive_degenerate = 0;
        self.round += 1;
        labeling.round_id = self.round;
        self.head_target = Some(init_head_from_centroids(&labeling)?);
        self.head_freq = Some(freq_head_from_centroids(&labeling)?);
        self.queue.refresh(self.round)?;

        let truth: Vec<usize> = self
            .train_idx
            .iter()
            .map(|&i| self.hidden.for_evaluation()[i])
            .collect();
        let pred = labeling.labels_outliers_as_singletons();
        self.last_nmi = Some(nmi(&pred, &truth)?);
        self.last_bcubed = Some(bcubed_f(&pred, &truth)?);
        self.labeling = Some(labeling);
        Ok(())
    }

    /// Source objective: cross-entropy plus batch-hard triplet on ground-truth
    /// labels. Returns the loss and pushes `weight`-scaled gradients.
    fn source_term(
        &self,
        epoch: u32,
        step: u32,
        weight: f64,
        grads: &mut StepGrads,
    ) -> Result<f64> {
        let labels_opt: Vec<Option<usize>> = self.source.iter().map(|s| Some(s.label)).collect();
        let p = self.cfg.p.min(self.head_source.num_classes());
        let batch = pk_sample(&labels_opt, p, self.cfg.k, self.step_seed(epoch, step, 1))?;
        let n = batch.len();
        let feats: Vec<Vector<f64>> = batch
            .iter()
            .map(|&i| self.encoder.encode(&self.source[i].input))
            .collect::<Result<_>>()?;
        let labels: Vec<usize> = batch.iter().map(|&i| self.source[i].label).collect();

        let mut feat_grads = vec![Vector::zeros(self.cfg.feature_dim); n];
        let mut head = HeadGrads::zeros_like(&self.head_source);
        let inv = 1.0 / n as f64;
        let mut l_ce = 0.0;
        for i in 0..n {
            let ce = cross_entropy(&self.head_source, &feats[i], labels[i])?;
            l_ce += ce.value * inv;
            feat_grads[i].axpy(inv, &ce.grad_feature);
            head.weights.axpy(inv, &ce.grad_weights);
            head.bias.axpy(inv, &ce.grad_bias);
        }
        let trip = triplet_loss(&feats, &labels, self.cfg.margin)?;
        for (g, tg) in feat_grads.iter_mut().zip(&trip.grad_features) {
            g.axpy(1.0, tg);
        }

        for (idx, g) in batch.iter().zip(&feat_grads) {
            let (eg, _) = self
                .encoder
                .backprop(&self.source[*idx].input, &g.scale(weight))?;
            grads.encoder.axpy(1.0, &eg);
        }
        head.weights.data.iter_mut().for_each(|v| *v *= weight);
        head.bias.data.iter_mut().for_each(|v| *v *= weight);
        grads.head_source = Some(head);
        Ok(l_ce + trip.value)
    }

    /// Target objective on the current pseudo-labels. Pushes gradients scaled
    /// by `lambda_t` (times the per-loss weights) and returns the component
    /// losses, or None if no usable pseudo-labels/batch exist this step.
    fn target_term(
        &mut self,
        epoch: u32,
        step: u32,
        lambda_t: f64,
        grads: &mut StepGrads,
    ) -> Result<Option<StepLosses>> {
        let Some(labeling) = &self.labeling else {
            return Ok(None);
        };
        let labels_opt: Vec<Option<usize>> = labeling.assignment.clone();
        let p = self.cfg.p.min(labeling.num_clusters);
        let batch_local =
            match pk_sample(&labels_opt, p, self.cfg.k, self.step_seed(epoch, step, 2)) {
                Ok(b) => b,
                // not enough populated clusters this round: skip target losses
                Err(Error::DegenerateBatch(_)) | Err(Error::Config(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
        let n = batch_local.len();
        let global: Vec<usize> = batch_local.iter().map(|&j| self.train_idx[j]).collect();
        let pseudo: Vec<usize> = batch_local
            .iter()
            .map(|&j| labeling.assignment[j].expect("pk_sample never picks outliers"))
            .collect();
        let feats: Vec<Vector<f64>> = global
            .iter()
            .map(|&i| self.encoder.encode(&self.target[i].input))
            .collect::<Result<_>>()?;
        let key_feats: Vec<Vector<f64>> = global
            .iter()
            .map(|&i| self.momentum.encode(&self.target[i].input))
            .collect::<Result<_>>()?;

        let mut feat_grads = vec![Vector::zeros(self.cfg.feature_dim); n];
        let mut losses = StepLosses::default();
        let inv = 1.0 / n as f64;
        let delta = self.cfg.delta;
        let gamma = self.cfg.gamma;
        let contrastive_only = self.cfg.target_supervision == TargetSupervision::ContrastiveOnly;
        // In contrastive-only mode the CCL term is the whole target objective.
        let ccl_weight = if contrastive_only { 1.0 } else { delta };

        // contrastive pairs; queue labels are cluster ids (cluster pairing) or
        // per-sample identities (instance pairing)
        let queue_label = |pos: usize| match self.cfg.ccl_pairing {
            CclPairing::Cluster => pseudo[pos],
            CclPairing::Instance => global[pos],
        };
        let mut pairs = Vec::new();
        let mut pair_anchor: Vec<usize> = Vec::new(); // batch position per pair
        for i in 0..n {
            let negatives: Vec<Vector<f64>> = self
                .queue
                .negatives_for(queue_label(i))
                .into_iter()
                .cloned()
                .collect();
            if negatives.is_empty() {
                continue;
            }
            let positive = match self.cfg.ccl_pairing {
                CclPairing::Cluster => {
                    // nearest-in-batch classmate convention: the next sample of
                    // the same pseudo-class, cyclically
                    let mut pos = None;
                    for off in 1..n {
                        let j = (i + off) % n;
                        if j != i && pseudo[j] == pseudo[i] {
                            pos = Some(j);
                            break;
                        }
                    }
                    match pos {
                        Some(j) => feats[j].clone(),
                        None => continue,
                    }
                }
                // the anchor's own momentum feature; no gradient flows to it
                CclPairing::Instance => key_feats[i].clone(),
            };
            pairs.push(ContrastivePair {
                anchor: feats[i].clone(),
                pseudo_label: queue_label(i),
                positive,
                negatives,
            });
            pair_anchor.push(i);
        }
        if !pairs.is_empty() {
            let batch = ContrastiveBatch { pairs };
            let out = ccl_loss(&batch, self.cfg.tau, self.cfg.ccl_include_positive)?;
            losses.ccl = Some(out.value);
            for (pi, &i) in pair_anchor.iter().enumerate() {
                feat_grads[i].axpy(ccl_weight, &out.grad_anchors[pi]);
                if self.cfg.ccl_pairing == CclPairing::Cluster {
                    // positive was the batch's θ feature of a classmate
                    let mut pos = None;
                    for off in 1..n {
                        let j = (i + off) % n;
                        if j != i && pseudo[j] == pseudo[i] {
                            pos = Some(j);
                            break;
                        }
                    }
                    if let Some(j) = pos {
                        feat_grads[j].axpy(ccl_weight, &out.grad_positives[pi]);
                    }
                }
            }
        } else {
            losses.ccl = Some(0.0);
        }

        if !contrastive_only {
            let head_t = self.head_target.as_ref().expect("head exists with labeling");
            let head_f = self.head_freq.as_ref().expect("head exists with labeling");
            let mut hg_t = HeadGrads::zeros_like(head_t);
            let mut hg_f = HeadGrads::zeros_like(head_f);
            let mut l_ce = 0.0;
            let mut l_fre = 0.0;
            for i in 0..n {
                let ce = cross_entropy(head_t, &feats[i], pseudo[i])?;
                l_ce += ce.value * inv;
                feat_grads[i].axpy(gamma * inv, &ce.grad_feature);
                hg_t.weights.axpy(gamma * inv, &ce.grad_weights);
                hg_t.bias.axpy(gamma * inv, &ce.grad_bias);

                let fe = fourier_ce(head_f, &feats[i], pseudo[i], AMPLITUDE_EPS)?;
                l_fre += fe.value * inv;
                feat_grads[i].axpy((1.0 - gamma) * inv, &fe.grad_feature);
                hg_f.weights.axpy((1.0 - gamma) * inv, &fe.grad_weights);
                hg_f.bias.axpy((1.0 - gamma) * inv, &fe.grad_bias);
            }
            let mut l_spa = l_ce;
            match triplet_loss(&feats, &pseudo, self.cfg.margin) {
                Ok(trip) => {
                    l_spa += trip.value;
                    for (g, tg) in feat_grads.iter_mut().zip(&trip.grad_features) {
                        g.axpy(gamma, tg);
                    }
                }
                // single-cluster batch: the triplet term has no negatives
                Err(Error::DegenerateBatch(_)) => {}
                Err(e) => return Err(e),
            }
            losses.spatial = Some(l_spa);
            losses.fourier = Some(l_fre);
            hg_t.weights.data.iter_mut().for_each(|v| *v *= lambda_t);
            hg_t.bias.data.iter_mut().for_each(|v| *v *= lambda_t);
            hg_f.weights.data.iter_mut().for_each(|v| *v *= lambda_t);
            hg_f.bias.data.iter_mut().for_each(|v| *v *= lambda_t);
            grads.head_target = Some(hg_t);
            grads.head_freq = Some(hg_f);
        }

        for (idx, g) in global.iter().zip(&feat_grads) {
            let (eg, _) = self
                .encoder
                .backprop(&self.target[*idx].input, &g.scale(lambda_t))?;
            grads.encoder.axpy(1.0, &eg);
        }

        // refresh keys with the post-update momentum encoder happens in step();
        // here we just report which samples to enqueue
        Ok(Some(StepLosses {
            source: None,
            ccl: losses.ccl,
            spatial: losses.spatial,
            fourier: losses.fourier,
            total: 0.0,
        }))
        .map(|r| {
            r.map(|mut l: StepLosses| {
                l.total = lambda_t
                    * (ccl_weight * l.ccl.unwrap_or(0.0)
                        + gamma * l.spatial.unwrap_or(0.0)
                        + (1.0 - gamma) * l.fourier.unwrap_or(0.0));
                l
            })
        })
    }

    fn apply_grads(&mut self, grads: StepGrads) -> Result<()> {
        let lr = self.cfg.learning_rate;
        match &mut self.adam {
            Some(state) => {
                let mut params = self.encoder.flatten_params();
                state.apply(&mut params, &grads.encoder.flatten(), lr);
                self.encoder.set_params(&params)?;
            }
            None => {
                for (l, g) in self.encoder.layers.iter_mut().zip(&grads.encoder.layers) {
                    l.weight.axpy(-lr, &g.weight);
                    l.bias.axpy(-lr, &g.bias);
                }
            }
        }
        if let Some(h) = grads.head_source {
            h.apply(&mut self.head_source, lr);
        }
        if let (Some(h), Some(head)) = (grads.head_target, self.head_target.as_mut()) {
            h.apply(head, lr);
        }
        if let (Some(h), Some(head)) = (grads.head_freq, self.head_freq.as_mut()) {
            h.apply(head, lr);
        }
        Ok(())
    }

    fn step(&mut self, epoch: u32, step: u32, lambda_s: f64, lambda_t: f64) -> Result<StepLosses> {
        let mut grads = StepGrads {
            encoder: EncoderGrads::zeros_like(&self.encoder),
            head_source: None,
            head_target: None,
            head_freq: None,
        };
        let mut losses = StepLosses::default();

        if lambda_s > 0.0 {
            let l_s = self.source_term(epoch, step, lambda_s, &mut grads)?;
            losses.source = Some(l_s);
            losses.total += lambda_s * l_s;
        }
        let mut enqueue: Option<Vec<(usize, usize)>> = None; // (global idx, queue label)
        if lambda_t > 0.0 {
            if let Some(t) = self.target_term(epoch, step, lambda_t, &mut grads)? {
                losses.ccl = t.ccl;
                losses.spatial = t.spatial;
                losses.fourier = t.fourier;
                losses.total += t.total;
                // recompute the batch indices for the enqueue below
                if let Some(labeling) = &self.labeling {
                    let labels_opt: Vec<Option<usize>> = labeling.assignment.clone();
                    let p = self.cfg.p.min(labeling.num_clusters);
                    if let Ok(batch_local) =
                        pk_sample(&labels_opt, p, self.cfg.k, self.step_seed(epoch, step, 2))
                    {
                        enqueue = Some(
                            batch_local
                                .iter()
                                .map(|&j| {
                                    let g = self.train_idx[j];
                                    let l = match self.cfg.ccl_pairing {
                                        CclPairing::Cluster => {
                                            labeling.assignment[j].expect("non-outlier")
                                        }
                                        CclPairing::Instance => g,
                                    };
                                    (g, l)
                                })
                                .collect(),
                        );
                    }
                }
            }
        }

        self.apply_grads(grads)?;
        momentum_update(&mut self.momentum, &self.encoder, self.cfg.momentum)?;

        if let Some(items) = enqueue {
            let mut feats = Vec::with_capacity(items.len());
            let mut labels = Vec::with_capacity(items.len());
            for (g, l) in items {
                feats.push(self.momentum.encode(&self.target[g].input)?);
                labels.push(l);
            }
            self.queue.enqueue(&feats, &labels, self.queue.round_id())?;
        }
        Ok(losses)
    }

    /// Retrieval metrics on the held-out target split, using momentum-encoder
    /// features (the inference path).
    fn evaluate_holdout(&self) -> Result<(f64, f64)> {
        let item = |&i: &usize| -> Result<EvalItem<f64>> {
            Ok(EvalItem {
                feature: self.momentum.encode(&self.target[i].input)?,
                label: self.hidden.for_evaluation()[i],
                camera_id: self.target[i].camera_id,
                instance_id: self.target[i].instance_id,
            })
        };
        let queries: Vec<EvalItem<f64>> = self.query_idx.iter().map(item).collect::<Result<_>>()?;
        let gallery: Vec<EvalItem<f64>> =
            self.gallery_idx.iter().map(item).collect::<Result<_>>()?;
        let r = evaluate(&queries, &gallery, 10)?;
        Ok((r.map, r.cmc[0]))
    }

    fn run(mut self) -> Result<TrainOutcome> {
        let schedule = &self.cfg.schedule;
        let mut records = Vec::with_capacity(schedule.e3 as usize);
        for epoch in 1..=schedule.e3 {
            let phase = schedule.phase_of(epoch)?;
            let (lambda_s, lambda_t) = schedule.weights_at(epoch)?;
            if phase != Phase::Pretrain
                && (epoch - schedule.e1 - 1) % self.cfg.epochs_per_cluster_round == 0
            {
                self.clustering_round()?;
            }
            let mut sums = [0.0f64; 5];
            let mut counts = [0u32; 5];
            for step in 0..self.cfg.steps_per_epoch {
                let l = self.step(epoch, step, lambda_s, lambda_t)?;
                for (slot, v) in [
                    l.source,
                    l.ccl,
                    l.spatial,
                    l.fourier,
                    Some(l.total),
                ]
                .into_iter()
                .enumerate()
                {
                    if let Some(v) = v {
                        sums[slot] += v;
                        counts[slot] += 1;
                    }
                }
            }
            let mean = |slot: usize| -> Option<f64> {
                (counts[slot] > 0).then(|| sums[slot] / counts[slot] as f64)
            };
            let (map, rank1) = self.evaluate_holdout()?;
            records.push(EpochRecord {
                epoch,
                phase,
                lambda_s,
                lambda_t,
                loss_total: mean(4).unwrap_or(0.0),
                loss_source: mean(0),
                loss_ccl: mean(1),
                loss_spatial: mean(2),
                loss_fourier: mean(3),
                num_clusters: self.labeling.as_ref().map(|l| l.num_clusters),
                outlier_fraction: self.labeling.as_ref().map(|l| l.outlier_fraction()),
                nmi: self.last_nmi,
                bcubed_f: self.last_bcubed,
                map,
                rank1,
            });
        }
        Ok(TrainOutcome {
            encoder: self.encoder,
            momentum_encoder: self.momentum,
            records,
        })
    }
}

/// Full training run over the configured schedule.
pub fn train(
    source: &[SourceSample],
    target: &[TargetSample],
    hidden: &HiddenLabels,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    Trainer::new(cfg, source, target, hidden)?.run()
}

/// Two-stage baseline: hard source/target switch, no contrastive or Fourier
/// terms. Same machinery otherwise.
pub fn run_baseline(
    source: &[SourceSample],
    target: &[TargetSample],
    hidden: &HiddenLabels,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let base = cfg.as_baseline();
    Trainer::new(&base, source, target, hidden)?.run()
}
