//! Announcing and detecting the discovery message on a flow.
//!
//! A sender stamps consecutive packets of a flow with the message symbols.
//! The receiver decodes whatever survives the path (drops, duplicates,
//! reordering, scrubbed fields) and declares a peer once some recent window
//! of decoded symbols is within `threshold` edits of the message.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{FiveTuple, SimPacket};
use crate::signal::{CodecConfig, Signal};

use Signal::{A, B, C};

pub const MESSAGE_LEN: usize = 24;
pub const BLOCK_LEN: usize = 8;

pub const MESSAGE: [Signal; MESSAGE_LEN] = [
    A, B, A, B, A, B, A, B, C, C, C, C, C, C, C, C, A, B, A, B, A, B, A, B,
];

/// Receive buffer bound, four message lengths.
pub const RX_BUFFER: usize = 4 * MESSAGE_LEN;

/// Symbol appended to windows shorter than the message before the block
/// check. Unstamped traffic with a default TTL of 64 decodes as `A`.
pub const PREFILTER_PAD: Signal = A;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DiscoveryError {
    #[error("prefilter window has {0} symbols, expected {MESSAGE_LEN}")]
    WrongLength(usize),
    #[error("invalid detection config: {0}")]
    BadConfig(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectionConfig {
    pub threshold: usize,
    pub use_prefilter: bool,
    pub max_attempts: u32,
    /// Unstamped flow packets between two announcements.
    pub announce_gap: u32,
}

impl Default for DetectionConfig {
    fn default() -> Self {
        Self {
            threshold: 3,
            use_prefilter: true,
            max_attempts: 5,
            announce_gap: 8,
        }
    }
}

impl DetectionConfig {
    pub fn new(threshold: usize, use_prefilter: bool) -> Self {
        Self {
            threshold,
            use_prefilter,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), DiscoveryError> {
        if self.max_attempts == 0 {
            return Err(DiscoveryError::BadConfig("max_attempts must be at least 1"));
        }
        if self.threshold >= MESSAGE_LEN {
            return Err(DiscoveryError::BadConfig("threshold must be below the message length"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Unknown,
    PeerDetected,
    GaveUp,
}

/// Levenshtein distance with unit costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.len() < b.len() {
        return edit_distance(b, a);
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, x) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = (diag + usize::from(x != y)).min(up + 1).min(row[j] + 1);
            diag = up;
        }
    }
    row[b.len()]
}

fn count(block: &[Signal], s: Signal) -> usize {
    block.iter().filter(|&&x| x == s).count()
}

/// Block-structure check on exactly one message length of symbols.
pub fn prefilter(window: &[Signal]) -> Result<bool, DiscoveryError> {
    if window.len() != MESSAGE_LEN {
        return Err(DiscoveryError::WrongLength(window.len()));
    }
    let (b1, rest) = window.split_at(BLOCK_LEN);
    let (b2, b3) = rest.split_at(BLOCK_LEN);
    let ab = |b: &[Signal]| count(b, A) >= 3 && count(b, B) >= 3;
    Ok(ab(b1) && ab(b3) && count(b2, C) >= 6)
}

/// Prefilter for windows of any length: longer windows keep their first
/// 24 symbols, shorter ones are padded with [`PREFILTER_PAD`].
pub fn prefilter_framed(window: &[Signal]) -> bool {
    let mut framed = [PREFILTER_PAD; MESSAGE_LEN];
    let n = window.len().min(MESSAGE_LEN);
    framed[..n].copy_from_slice(&window[..n]);
    prefilter(&framed).unwrap_or(false)
}

/// Best distance over windows of length `24-t ..= 24+t` that end at the
/// last symbol of `buf`, or `None` if no window qualifies.
pub fn best_window(buf: &[Signal], cfg: &DetectionConfig) -> Option<usize> {
    let t = cfg.threshold;
    let lo = MESSAGE_LEN.saturating_sub(t).max(1);
    let hi = (MESSAGE_LEN + t).min(buf.len());
    (lo..=hi)
        .filter_map(|len| {
            let w = &buf[buf.len() - len..];
            if cfg.use_prefilter && !prefilter_framed(w) {
                return None;
            }
            let d = edit_distance(w, &MESSAGE);
            (d <= t).then_some(d)
        })
        .min()
}

/// Streaming approximate matcher: after each pushed symbol, reports the
/// smallest edit distance between the message and any suffix of the stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuffixMatcher {
    col: [u16; MESSAGE_LEN + 1],
}

impl Default for SuffixMatcher {
    fn default() -> Self {
        let mut col = [0u16; MESSAGE_LEN + 1];
        for (j, c) in col.iter_mut().enumerate() {
            *c = j as u16;
        }
        Self { col }
    }
}

impl SuffixMatcher {
    pub fn push(&mut self, s: Signal) -> usize {
        let mut diag = self.col[0];
        for j in 1..=MESSAGE_LEN {
            let up = self.col[j];
            self.col[j] = (diag + u16::from(MESSAGE[j - 1] != s))
                .min(up + 1)
                .min(self.col[j - 1] + 1);
            diag = up;
        }
        self.col[MESSAGE_LEN] as usize
    }

    pub fn best(&self) -> usize {
        self.col[MESSAGE_LEN] as usize
    }
}

/// Receive side of discovery for one flow.
#[derive(Debug, Clone)]
pub struct Detector {
    buf: VecDeque<Signal>,
    matcher: SuffixMatcher,
}

impl Default for Detector {
    fn default() -> Self {
        Self {
            buf: VecDeque::with_capacity(RX_BUFFER),
            matcher: SuffixMatcher::default(),
        }
    }
}

impl Detector {
    /// Appends a decoded symbol; returns the match distance if the newest
    /// windows now contain the message.
    pub fn push(&mut self, s: Signal, cfg: &DetectionConfig) -> Option<usize> {
        if self.buf.len() == RX_BUFFER {
            self.buf.pop_front();
        }
        self.buf.push_back(s);
        let best = self.matcher.push(s);
        // Any qualifying window is a suffix within t edits, so the suffix
        // minimum is a sound early reject. Without the prefilter it is also
        // the answer: a suffix within t edits has length 24 +/- t.
        if best > cfg.threshold {
            return None;
        }
        if !cfg.use_prefilter {
            return Some(best);
        }
        best_window(self.buf.make_contiguous(), cfg)
    }

    pub fn buffer(&self) -> impl ExactSizeIterator<Item = &Signal> {
        self.buf.iter()
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn clear(&mut self) {
        *self = Self::default();
    }
}

/// Per-flow discovery state: announcement cursor plus receive detector.
#[derive(Debug, Clone)]
pub struct DiscoveryState {
    pub flow: FiveTuple,
    pub verdict: Verdict,
    pub attempts_used: u32,
    pub tx_cursor: usize,
    pub detected_distance: Option<usize>,
    gap_left: u32,
    low4: u16,
    rx: Detector,
}

impl DiscoveryState {
    /// `low4_seed` starts the per-flow counter for the free IPID bits.
    pub fn new(flow: FiveTuple, low4_seed: u16) -> Self {
        Self {
            flow,
            verdict: Verdict::Unknown,
            attempts_used: 0,
            tx_cursor: 0,
            detected_distance: None,
            gap_left: 0,
            low4: low4_seed,
            rx: Detector::default(),
        }
    }

    pub fn announcing(&self, cfg: &DetectionConfig) -> bool {
        self.verdict == Verdict::Unknown
            && (self.attempts_used < cfg.max_attempts || self.gap_left > 0)
    }

    /// Stamps the next message symbol into an outgoing packet of the flow.
    /// Packets in the gap between announcements pass unchanged.
    pub fn stamp(&mut self, mut pkt: SimPacket, codec: &CodecConfig, cfg: &DetectionConfig) -> SimPacket {
        if self.verdict != Verdict::Unknown {
            return pkt;
        }
        if self.gap_left > 0 {
            self.gap_left -= 1;
            return pkt;
        }
        if self.attempts_used >= cfg.max_attempts {
            self.verdict = Verdict::GaveUp;
            return pkt;
        }
        let sym = MESSAGE[self.tx_cursor];
        pkt.ttl = codec.encode_ttl(sym);
        pkt.ipid = codec.encode_ipid(sym, (self.low4 & 0xF) as u8);
        self.low4 = self.low4.wrapping_add(1);
        self.tx_cursor += 1;
        if self.tx_cursor == MESSAGE_LEN {
            self.tx_cursor = 0;
            self.attempts_used += 1;
            self.gap_left = cfg.announce_gap;
        }
        pkt
    }

    pub fn ingest(&mut self, pkt: &SimPacket, codec: &CodecConfig, cfg: &DetectionConfig) {
        if let Some(s) = codec.decode_packet(pkt) {
            self.ingest_signal(s, cfg);
        }
    }

    pub fn ingest_signal(&mut self, s: Signal, cfg: &DetectionConfig) {
        let hit = self.rx.push(s, cfg);
        if self.verdict == Verdict::Unknown {
            if let Some(d) = hit {
                self.verdict = Verdict::PeerDetected;
                self.detected_distance = Some(d);
            }
        }
    }

    /// Records that the peer found us first (its bootstrap arrived).
    pub fn mark_peer_known(&mut self) {
        if self.verdict == Verdict::Unknown {
            self.verdict = Verdict::PeerDetected;
        }
    }

    /// Evaluates the current receive buffer without consuming input.
    pub fn detect(&self, cfg: &DetectionConfig) -> Verdict {
        if self.verdict != Verdict::Unknown {
            return self.verdict;
        }
        let buf: Vec<Signal> = self.rx.buffer().copied().collect();
        if best_window(&buf, cfg).is_some() {
            Verdict::PeerDetected
        } else if !self.announcing(cfg) {
            Verdict::GaveUp
        } else {
            Verdict::Unknown
        }
    }

    pub fn received(&self) -> Vec<Signal> {
        self.rx.buffer().copied().collect()
    }
}
