//! Run records.

use std::collections::BTreeMap;
use std::fmt;

use super::channel::ChannelStats;
use super::dena::ReplicationStats;
use super::scenario::path_name;
use crate::measure::{MeasuredWindow, PathId, State};
use crate::packet::FiveTuple;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeId {
    Host { site: usize, host: u8 },
    Dena(usize),
    Nat(usize),
    Gateway(usize),
    Channel { path: PathId, from: usize },
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeId::Host { site, host } => write!(f, "host{site}.{host}"),
            NodeId::Dena(s) => write!(f, "dena{s}"),
            NodeId::Nat(s) => write!(f, "nat{s}"),
            NodeId::Gateway(s) => write!(f, "gw{s}"),
            NodeId::Channel { path, from } => write!(f, "{}:{}>{}", path_name(*path), from, 1 - from),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Send,
    Drop,
    Deliver,
    Duplicate,
    Stamp,
    Control,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Send => "send",
            EventKind::Drop => "drop",
            EventKind::Deliver => "deliver",
            EventKind::Duplicate => "duplicate",
            EventKind::Stamp => "stamp",
            EventKind::Control => "control",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub time_ms: u64,
    pub node: NodeId,
    pub event: EventKind,
    pub path: Option<PathId>,
    pub seq_no: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecisionRecord {
    pub time_ms: u64,
    pub site: usize,
    pub path: PathId,
    pub changed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TransitionRecord {
    pub time_ms: u64,
    pub site: usize,
    pub from: State,
    pub to: State,
    pub cycle: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeasurementRecord {
    pub time_ms: u64,
    pub site: usize,
    pub window: MeasuredWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectionRecord {
    pub time_ms: u64,
    pub site: usize,
    pub flow: FiveTuple,
    pub distance: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapRecord {
    pub time_ms: u64,
    pub site: usize,
    pub flow: FiveTuple,
    /// `None` when the handshake gave up.
    pub peer: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LivenessRecord {
    pub time_ms: u64,
    pub site: usize,
    pub path: PathId,
    pub up: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChannelSummary {
    pub path: PathId,
    pub from: usize,
    pub stats: ChannelStats,
    /// Dropped before the channel because the TTL ran out.
    pub ttl_expired: u64,
    pub in_flight: u64,
}

impl ChannelSummary {
    pub fn conserved(&self) -> bool {
        self.stats.sent + self.stats.duplicated == self.stats.delivered + self.stats.dropped + self.in_flight
    }
}

/// Counted traffic and query markers on one channel, in send order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogEntry {
    Data { dropped: bool },
    Marker { reply: bool, qid: u32, dropped: bool },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HostStats {
    pub sent: u64,
    pub delivered: u64,
    pub transparency_violations: u64,
    pub control_leaks: u64,
    /// Payload bytes handed to end hosts per second.
    pub goodput: BTreeMap<u64, u64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub duration_ms: u64,
    pub events: Vec<TraceEvent>,
    /// Data bytes reaching each site's border per (second, path).
    pub throughput: BTreeMap<(u64, PathId), u64>,
    pub decisions: Vec<DecisionRecord>,
    pub transitions: Vec<TransitionRecord>,
    pub measurements: Vec<MeasurementRecord>,
    pub detections: Vec<DetectionRecord>,
    pub bootstraps: Vec<BootstrapRecord>,
    pub liveness: Vec<LivenessRecord>,
    pub ignored_messages: u64,
    pub channels: Vec<ChannelSummary>,
    pub channel_logs: BTreeMap<(PathId, usize), Vec<LogEntry>>,
    pub hosts: HostStats,
    pub replication: Vec<ReplicationStats>,
}

impl Trace {
    pub fn decisions_at(&self, site: usize) -> impl Iterator<Item = &DecisionRecord> {
        self.decisions.iter().filter(move |d| d.site == site)
    }

    /// Rows of `(time_s, path, bytes)` with zero rows filled in.
    pub fn throughput_rows(&self, paths: &[PathId]) -> Vec<(u64, PathId, u64)> {
        let secs = self.duration_ms.div_ceil(1000);
        let mut rows = Vec::new();
        for s in 0..secs {
            for p in paths {
                rows.push((s, *p, self.throughput.get(&(s, *p)).copied().unwrap_or(0)));
            }
        }
        rows
    }
}
