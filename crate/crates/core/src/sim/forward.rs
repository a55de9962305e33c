//! Overhear-and-suppress forwarding: one broadcast, the highest-priority
//! candidate that decoded it becomes the forwarder and the rest stand down.

use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HopOutcome {
    /// `member` is the position in the priority list of the node that took over.
    Forwarded { member: usize, transmissions: u32 },
    Dropped { transmissions: u32 },
}

impl HopOutcome {
    pub fn transmissions(&self) -> u32 {
        match *self {
            HopOutcome::Forwarded { transmissions, .. } | HopOutcome::Dropped { transmissions } => {
                transmissions
            }
        }
    }
}

/// One broadcast to candidates in priority order with delivery probabilities
/// `probs`. Every candidate draws, so randomness use does not depend on the result.
pub fn broadcast_once<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Option<usize> {
    let mut winner = None;
    for (i, &p) in probs.iter().enumerate() {
        let got = rng.random::<f64>() < p;
        if got && winner.is_none() {
            winner = Some(i);
        }
    }
    winner
}

/// Repeats the broadcast until some candidate receives, at most `max_attempts` times.
pub fn opportunistic_hop<R: Rng + ?Sized>(probs: &[f64], max_attempts: u32, rng: &mut R) -> HopOutcome {
    for attempt in 1..=max_attempts {
        if let Some(member) = broadcast_once(probs, rng) {
            return HopOutcome::Forwarded {
                member,
                transmissions: attempt,
            };
        }
    }
    HopOutcome::Dropped {
        transmissions: max_attempts,
    }
}
