//! Per-link delivery estimates learned from periodic beacons.

use crate::packet::NodeId;

/// Sliding window of the last `window` beacon outcomes, smoothed by an EWMA of
/// the window mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkEstimator {
    bits: u64,
    len: u8,
    p_hat: f64,
}

impl LinkEstimator {
    pub fn new() -> Self {
        Self {
            bits: 0,
            len: 0,
            p_hat: 0.0,
        }
    }

    pub fn observe(&mut self, received: bool, window: u8, alpha: f64) {
        let mask = if window >= 64 { u64::MAX } else { (1u64 << window) - 1 };
        self.bits = ((self.bits << 1) | u64::from(received)) & mask;
        let first = self.len == 0;
        self.len = (self.len + 1).min(window);
        let mean = f64::from(self.bits.count_ones()) / f64::from(self.len);
        self.p_hat = if first {
            mean
        } else {
            (1.0 - alpha) * self.p_hat + alpha * mean
        };
    }

    pub fn p_hat(&self) -> f64 {
        self.p_hat
    }

    pub fn samples(&self) -> u8 {
        self.len
    }
}

impl Default for LinkEstimator {
    fn default() -> Self {
        Self::new()
    }
}

/// Dense table of estimators, indexed by `(sender, receiver)`.
#[derive(Debug, Clone)]
pub struct LinkTable {
    n: usize,
    window: u8,
    alpha: f64,
    entries: Vec<Option<LinkEstimator>>,
}

impl LinkTable {
    /// `window` is clamped to `1..=64`.
    pub fn new(n: usize, window: u8, alpha: f64) -> Self {
        Self {
            n,
            window: window.clamp(1, 64),
            alpha,
            entries: vec![None; n * n],
        }
    }

    pub fn observe(&mut self, from: NodeId, to: NodeId, received: bool) {
        let (window, alpha) = (self.window, self.alpha);
        self.entries[from * self.n + to]
            .get_or_insert_with(LinkEstimator::new)
            .observe(received, window, alpha);
    }

    /// Records a miss only for links that already have an estimate.
    pub fn observe_miss_if_known(&mut self, from: NodeId, to: NodeId) {
        let (window, alpha) = (self.window, self.alpha);
        if let Some(e) = self.entries[from * self.n + to].as_mut() {
            e.observe(false, window, alpha);
        }
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Option<&LinkEstimator> {
        self.entries[from * self.n + to].as_ref()
    }

    /// Estimated delivery probability, 0 for links never heard.
    pub fn p_hat(&self, from: NodeId, to: NodeId) -> f64 {
        self.get(from, to).map_or(0.0, LinkEstimator::p_hat)
    }

    /// Link ETX `1 / p̂`, capped at 100 transmissions.
    pub fn etx(&self, from: NodeId, to: NodeId) -> f64 {
        1.0 / self.p_hat(from, to).max(0.01)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
}
