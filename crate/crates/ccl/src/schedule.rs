//! Progressive source/target loss weighting. Three phases over epochs:
//! source-only pre-training on (0, e1], joint training on (e1, e2] with a
//! decay policy w(e), then target-only on (e2, e3].

use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PolicyKind {
    /// Hard switch at e1: (1,0) then (0,1). The two-stage baseline.
    TwoStage,
    /// w(e) steps down through k equal-length segments of (e1, e2].
    KStep(u32),
    /// w(e) = e/(e1-e2) + e2/(e2-e1), linear from 1 to 0 across (e1, e2].
    Linear,
    /// Constant (lambda_s, lambda_t) on (e1, e2]; phases 1 and 3 unchanged.
    Static { lambda_s: f64, lambda_t: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulePolicy {
    pub kind: PolicyKind,
    pub e1: u32,
    pub e2: u32,
    pub e3: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Joint,
    TargetOnly,
}

impl SchedulePolicy {
    pub fn new(kind: PolicyKind, e1: u32, e2: u32, e3: u32) -> Result<Self> {
        if !(e1 < e2 && e2 <= e3) {
            return Err(Error::Config(format!(
                "schedule boundaries must satisfy e1 < e2 <= e3, got {e1}, {e2}, {e3}"
            )));
        }
        match kind {
            PolicyKind::KStep(k) if k == 0 => {
                return Err(Error::Config("k-step policy needs k >= 1".into()))
            }
            PolicyKind::Static { lambda_s, lambda_t } if lambda_s < 0.0 || lambda_t < 0.0 => {
                return Err(Error::Config("static weights must be nonnegative".into()))
            }
            _ => {}
        }
        Ok(Self { kind, e1, e2, e3 })
    }

    /// Paper defaults: e1=20, e2=50, e3=80, 3-step decay.
    pub fn default_three_step() -> Self {
        Self::new(PolicyKind::KStep(3), 20, 50, 80).unwrap()
    }

    fn check_epoch(&self, e: u32) -> Result<()> {
        if e == 0 || e > self.e3 {
            return Err(Error::Config(format!(
                "epoch {e} out of schedule range (1..={})",
                self.e3
            )));
        }
        Ok(())
    }

    pub fn phase_of(&self, e: u32) -> Result<Phase> {
        self.check_epoch(e)?;
        Ok(if e <= self.e1 {
            Phase::Pretrain
        } else if e <= self.e2 {
            Phase::Joint
        } else {
            Phase::TargetOnly
        })
    }

    /// (lambda_s, lambda_t) at epoch e.
    pub fn weights_at(&self, e: u32) -> Result<(f64, f64)> {
        self.check_epoch(e)?;
        Ok(match self.phase_of(e)? {
            Phase::Pretrain => (1.0, 0.0),
            Phase::TargetOnly => (0.0, 1.0),
            Phase::Joint => match self.kind {
                PolicyKind::TwoStage => (0.0, 1.0),
                PolicyKind::Linear => {
                    let (e1, e2) = (self.e1 as f64, self.e2 as f64);
                    let w = (e as f64 / (e1 - e2) + e2 / (e2 - e1)).clamp(0.0, 1.0);
                    (w, 1.0 - w)
                }
                PolicyKind::KStep(k) => {
                    let w = self.k_step_weight(k, e);
                    (w, 1.0 - w)
                }
                PolicyKind::Static { lambda_s, lambda_t } => (lambda_s, lambda_t),
            },
        })
    }

    /// (e1, e2] split into k equal segments, last segment absorbing the
    /// remainder; segment i (1-based) uses w = 1 - i/(k+1).
    fn k_step_weight(&self, k: u32, e: u32) -> f64 {
        let span = self.e2 - self.e1;
        let k = k.min(span); // never more segments than epochs
        let seg_len = span / k;
        let offset = e - self.e1 - 1; // 0-based position within (e1, e2]
        let seg = ((offset / seg_len) + 1).min(k); // 1-based, last absorbs remainder
        1.0 - seg as f64 / (k as f64 + 1.0)
    }
}
