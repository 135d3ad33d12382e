//! Exact multiply-accumulate accounting.
//!
//! "Computational effort" for strategy comparisons is backward plus update
//! MACs. Forward MACs are identical for every strategy (skipped samples still
//! run the forward pass) and are tracked separately.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EffortError {
    #[error("{phase:?} MAC counter overflowed adding {macs}")]
    Overflow { phase: Phase, macs: u64 },
    #[error("baseline ledger has zero backward and update MACs")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Forward,
    Backward,
    Update,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffortLedger {
    pub forward_macs: u64,
    pub backward_macs: u64,
    pub update_macs: u64,
    pub samples_trained: u64,
    pub samples_skipped: u64,
}

impl EffortLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, phase: Phase, macs: u64) -> Result<(), EffortError> {
        let counter = match phase {
            Phase::Forward => &mut self.forward_macs,
            Phase::Backward => &mut self.backward_macs,
            Phase::Update => &mut self.update_macs,
        };
        *counter = counter
            .checked_add(macs)
            .ok_or(EffortError::Overflow { phase, macs })?;
        Ok(())
    }

    pub fn record_sample(&mut self, skipped: bool) {
        if skipped {
            self.samples_skipped += 1;
        } else {
            self.samples_trained += 1;
        }
    }

    pub fn samples_presented(&self) -> u64 {
        self.samples_trained + self.samples_skipped
    }

    /// Backward plus update MACs.
    pub fn training_macs(&self) -> u64 {
        self.backward_macs + self.update_macs
    }

    pub fn total_macs(&self) -> u64 {
        self.forward_macs + self.training_macs()
    }
}

/// `(backward + update)` of `candidate` relative to `baseline`.
pub fn effort_ratio(candidate: &EffortLedger, baseline: &EffortLedger) -> Result<f64, EffortError> {
    let base = baseline.training_macs();
    if base == 0 {
        return Err(EffortError::ZeroBaseline);
    }
    Ok(candidate.training_macs() as f64 / base as f64)
}

/// Like [`effort_ratio`] but with forward MACs in numerator and denominator.
pub fn effort_ratio_incl_forward(
    candidate: &EffortLedger,
    baseline: &EffortLedger,
) -> Result<f64, EffortError> {
    if baseline.training_macs() == 0 {
        return Err(EffortError::ZeroBaseline);
    }
    Ok(candidate.total_macs() as f64 / baseline.total_macs() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn add_accumulates() {
        let mut l = EffortLedger::new();
        l.add(Phase::Backward, 0).unwrap();
        assert_eq!(l, EffortLedger::new());
        l.add(Phase::Update, 5).unwrap();
        l.add(Phase::Update, 5).unwrap();
        assert_eq!(l.update_macs, 10);
    }

    #[test]
    fn overflow_is_an_error() {
        let mut l = EffortLedger::new();
        l.add(Phase::Forward, u64::MAX).unwrap();
        assert_eq!(
            l.add(Phase::Forward, 1),
            Err(EffortError::Overflow {
                phase: Phase::Forward,
                macs: 1
            })
        );
        assert_eq!(l.forward_macs, u64::MAX);
    }

    #[test]
    fn ratios() {
        let base = EffortLedger {
            forward_macs: 100,
            backward_macs: 200,
            update_macs: 100,
            samples_trained: 4,
            samples_skipped: 0,
        };
        assert_eq!(effort_ratio(&base, &base).unwrap(), 1.0);
        let skipped = EffortLedger {
            forward_macs: 100,
            samples_skipped: 4,
            ..Default::default()
        };
        assert_eq!(effort_ratio(&skipped, &base).unwrap(), 0.0);
        assert_eq!(effort_ratio_incl_forward(&skipped, &base).unwrap(), 0.25);
        assert_eq!(
            effort_ratio(&base, &EffortLedger::new()),
            Err(EffortError::ZeroBaseline)
        );
    }

    #[test]
    fn sample_counts() {
        let mut l = EffortLedger::new();
        l.record_sample(true);
        l.record_sample(false);
        l.record_sample(false);
        assert_eq!(
            (l.samples_trained, l.samples_skipped, l.samples_presented()),
            (2, 1, 3)
        );
    }
}
