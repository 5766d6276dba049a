//! Lossy, reordering, duplicating one-way links.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::packet::SimPacket;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelModel {
    pub loss_prob: f64,
    /// Probability that a packet swaps places with the next one.
    pub reorder_prob: f64,
    pub dup_prob: f64,
    pub delay_ms: u64,
    /// Derived from the run seed when absent.
    pub seed: Option<u64>,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            loss_prob: 0.0,
            reorder_prob: 0.0,
            dup_prob: 0.0,
            delay_ms: 10,
            seed: None,
        }
    }
}

impl ChannelModel {
    pub fn lossy(loss_prob: f64, delay_ms: u64) -> Self {
        Self {
            loss_prob,
            delay_ms,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, p) in [
            ("loss_prob", self.loss_prob),
            ("reorder_prob", self.reorder_prob),
            ("dup_prob", self.dup_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(format!("{name} = {p} is outside [0, 1]"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ChannelStats {
    pub sent: u64,
    pub dropped: u64,
    pub duplicated: u64,
    pub delivered: u64,
}

impl ChannelStats {
    pub fn in_flight(&self) -> i64 {
        (self.sent + self.duplicated) as i64 - (self.dropped + self.delivered) as i64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Dropped,
    /// Packets to deliver, in order, each at the given time.
    Deliver(Vec<(u64, SimPacket)>),
    /// Held back to swap with a successor; flush at the given time if none comes.
    Held { flush_at: u64 },
}

/// Extra wait for a held packet when no successor shows up.
const REORDER_HOLD_MS: u64 = 5;

#[derive(Debug, Clone)]
pub struct Channel {
    pub model: ChannelModel,
    pub stats: ChannelStats,
    rng: ChaCha8Rng,
    held: Option<(u64, SimPacket)>,
}

impl Channel {
    pub fn new(model: ChannelModel, fallback_seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(model.seed.unwrap_or(fallback_seed)),
            model,
            stats: ChannelStats::default(),
            held: None,
        }
    }

    /// Changes loss/delay parameters without touching the random stream.
    pub fn set_model(&mut self, model: ChannelModel) {
        self.model = model;
    }

    pub fn has_held(&self) -> bool {
        self.held.is_some()
    }

    pub fn transmit(&mut self, now: u64, pkt: SimPacket) -> Outcome {
        self.stats.sent += 1;
        let m = self.model;
        if m.loss_prob > 0.0 && self.rng.random_bool(m.loss_prob) {
            self.stats.dropped += 1;
            return Outcome::Dropped;
        }
        let at = now + m.delay_ms;
        let mut out = vec![(at, pkt)];
        if m.dup_prob > 0.0 && self.rng.random_bool(m.dup_prob) {
            self.stats.duplicated += 1;
            out.push(out[0].clone());
        }
        if let Some((_, held)) = self.held.take() {
            out.push((at, held));
            return Outcome::Deliver(out);
        }
        if m.reorder_prob > 0.0 && self.rng.random_bool(m.reorder_prob) {
            let first = out.remove(0);
            self.held = Some(first);
            let flush_at = at + REORDER_HOLD_MS;
            if out.is_empty() {
                return Outcome::Held { flush_at };
            }
            // A duplicate overtakes its own original.
            return Outcome::Deliver(out);
        }
        Outcome::Deliver(out)
    }

    /// Releases a held packet whose successor never came.
    pub fn flush(&mut self, now: u64) -> Option<(u64, SimPacket)> {
        self.held.take().map(|(at, p)| (at.max(now), p))
    }
}
