//! Momentum-averaged encoder update and the cross-batch negative queue with
//! pseudo-class filtering and per-round refresh.

use crate::encoder::Encoder;
use crate::linalg::Vector;
use crate::scalar::Scalar;
use crate::{Error, Result};
use std::collections::VecDeque;

#[derive(Debug, Clone)]
pub struct QueueEntry<F: Scalar> {
    pub feature: Vector<F>,
    pub pseudo_label: usize,
    pub round_id: u64,
}

/// Bounded FIFO of past-batch momentum features serving as contrastive
/// negatives. Entries always carry the queue's current round id; `refresh`
/// empties the queue whenever pseudo-labels change.
#[derive(Debug, Clone)]
pub struct NegativeQueue<F: Scalar> {
    entries: VecDeque<QueueEntry<F>>,
    capacity: usize,
    round_id: u64,
}

impl<F: Scalar> NegativeQueue<F> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "queue capacity must be positive");
        Self {
            entries: VecDeque::with_capacity(capacity),
            capacity,
            round_id: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn round_id(&self) -> u64 {
        self.round_id
    }

    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry<F>> {
        self.entries.iter()
    }

    /// Append a batch in order, evicting the oldest entries past capacity.
    /// The batch must belong to the queue's current round.
    pub fn enqueue(
        &mut self,
        features: &[Vector<F>],
        pseudo_labels: &[usize],
        round_id: u64,
    ) -> Result<()> {
        if round_id != self.round_id {
            return Err(Error::StaleRound {
                queue_round: self.round_id,
                got: round_id,
            });
        }
        if features.len() != pseudo_labels.len() {
            return Err(Error::Shape(format!(
                "enqueue: {} features vs {} labels",
                features.len(),
                pseudo_labels.len()
            )));
        }
        for (f, &l) in features.iter().zip(pseudo_labels) {
            if self.entries.len() == self.capacity {
                self.entries.pop_front();
            }
            self.entries.push_back(QueueEntry {
                feature: f.clone(),
                pseudo_label: l,
                round_id,
            });
        }
        Ok(())
    }

    /// All queued features whose pseudo-label differs from the anchor's,
    /// oldest first.
    pub fn negatives_for(&self, anchor_pseudo_label: usize) -> Vec<&Vector<F>> {
        self.entries
            .iter()
            .filter(|e| e.pseudo_label != anchor_pseudo_label)
            .map(|e| &e.feature)
            .collect()
    }

    /// Empty the queue and advance to a new clustering round.
    pub fn refresh(&mut self, new_round_id: u64) -> Result<()> {
        if new_round_id <= self.round_id {
            return Err(Error::RoundOrder {
                queue_round: self.round_id,
                got: new_round_id,
            });
        }
        self.entries.clear();
        self.round_id = new_round_id;
        Ok(())
    }
}

/// theta_hat <- m * theta_hat + (1 - m) * theta, every parameter. The
/// momentum twin never receives loss gradients; this is its only update path.
pub fn momentum_update<F: Scalar>(
    momentum: &mut Encoder<F>,
    regular: &Encoder<F>,
    m: F,
) -> Result<()> {
    if momentum.layers.len() != regular.layers.len() {
        return Err(Error::Shape("momentum_update: layer count mismatch".into()));
    }
    for (mh, r) in momentum.layers.iter_mut().zip(&regular.layers) {
        if mh.weight.rows != r.weight.rows || mh.weight.cols != r.weight.cols {
            return Err(Error::Shape("momentum_update: weight shape mismatch".into()));
        }
        for (p_hat, &p) in mh.weight.data.iter_mut().zip(&r.weight.data) {
            *p_hat = m * *p_hat + (F::one() - m) * p;
        }
        for (p_hat, &p) in mh.bias.data.iter_mut().zip(&r.bias.data) {
            *p_hat = m * *p_hat + (F::one() - m) * p;
        }
    }
    Ok(())
}
