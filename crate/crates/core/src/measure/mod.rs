//! Per-peer path quality measurement.
//!
//! Each device counts data packets it sends to and receives from its peer on
//! every path. Loss over a window is derived from the change of four
//! counters between two snapshots, without synchronized clocks.

mod keepalive;
mod session;

pub use keepalive::{Keepalive, Liveness};
pub use session::{Action, Event, MeasuredWindow, MeasurementSession, State, TimerId, TimerKind};

use std::fmt;

use num_rational::Ratio;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::{encapsulate, EncapHeader, PacketError, SimPacket};
use crate::select::SelectConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathId {
    Ip,
    Fia(u8),
}

impl PathId {
    pub fn to_wire(self) -> [u8; 2] {
        match self {
            PathId::Ip => [0, 0],
            PathId::Fia(i) => [1, i],
        }
    }

    pub fn from_wire(b: [u8; 2]) -> Option<PathId> {
        match b {
            [0, 0] => Some(PathId::Ip),
            [1, i] => Some(PathId::Fia(i)),
            _ => None,
        }
    }

    pub fn is_fia(self) -> bool {
        matches!(self, PathId::Fia(_))
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PathId::Ip => write!(f, "ip"),
            PathId::Fia(i) => write!(f, "fia{i}"),
        }
    }
}

/// All paths to a peer with `n_fia` overlay paths, IP first.
pub fn all_paths(n_fia: u8) -> Vec<PathId> {
    std::iter::once(PathId::Ip)
        .chain((0..n_fia).map(PathId::Fia))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Initiator,
    Responder,
}

impl Role {
    /// The numerically smaller identifier initiates.
    pub fn for_ids(local: u64, peer: u64) -> Role {
        if local < peer {
            Role::Initiator
        } else {
            Role::Responder
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MeasureError {
    #[error("counter {0} went backwards")]
    CounterRegression(&'static str),
    #[error("{msg} is not valid in state {state:?}")]
    ProtocolViolation { state: State, msg: String },
    #[error(transparent)]
    Packet(#[from] PacketError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeasureConfig {
    /// Gap between measurement cycles.
    pub interval_ms: u64,
    /// Duration of the measuring phase of a cycle.
    pub period_ms: u64,
    /// Fraction of active-path traffic copied onto each fail-over path.
    pub sample_rate: f64,
    pub retransmit_ms: u64,
    pub max_retries: u32,
    pub query_timeout_ms: u64,
    pub max_query_retries: u32,
    pub keepalive_interval_ms: u64,
    pub keepalive_misses: u32,
    pub select: SelectConfig,
}

impl Default for MeasureConfig {
    fn default() -> Self {
        Self {
            interval_ms: 1000,
            period_ms: 1000,
            sample_rate: 0.1,
            retransmit_ms: 200,
            max_retries: 3,
            query_timeout_ms: 100,
            max_query_retries: 3,
            keepalive_interval_ms: 1000,
            keepalive_misses: 3,
            select: SelectConfig::default(),
        }
    }
}

/// Data packet counters of one device for one path.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PathCounters {
    pub out: u64,
    pub inc: u64,
}

/// Counter values at the two ends of a path, `a` being the local device.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CounterSnapshot {
    pub a_out: u64,
    pub a_in: u64,
    pub b_out: u64,
    pub b_in: u64,
    pub taken_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LossReport {
    pub path: PathId,
    pub loss_rate: Ratio<u64>,
    /// Loss from the local device towards the peer.
    pub tx_loss: Ratio<u64>,
    /// Loss from the peer towards the local device.
    pub rx_loss: Ratio<u64>,
    pub window_tx: u64,
    pub window_rx: u64,
}

impl LossReport {
    pub fn loss_f64(&self) -> f64 {
        ratio_f64(self.loss_rate)
    }
}

pub fn ratio_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn delta(prev: u64, curr: u64, name: &'static str) -> Result<u64, MeasureError> {
    curr.checked_sub(prev).ok_or(MeasureError::CounterRegression(name))
}

/// `lost / sent`, clamped at zero when reordering made more packets
/// arrive in the window than were sent in it.
fn direction_loss(sent: u64, received: u64) -> Ratio<u64> {
    Ratio::new(sent.saturating_sub(received), sent)
}

/// Loss over the window between two snapshots; `None` if either direction
/// carried no packets.
pub fn compute_loss(
    path: PathId,
    prev: &CounterSnapshot,
    curr: &CounterSnapshot,
) -> Result<Option<LossReport>, MeasureError> {
    let a_out = delta(prev.a_out, curr.a_out, "a_out")?;
    let a_in = delta(prev.a_in, curr.a_in, "a_in")?;
    let b_out = delta(prev.b_out, curr.b_out, "b_out")?;
    let b_in = delta(prev.b_in, curr.b_in, "b_in")?;
    if a_out == 0 || b_out == 0 {
        return Ok(None);
    }
    let tx_loss = direction_loss(a_out, b_in);
    let rx_loss = direction_loss(b_out, a_in);
    Ok(Some(LossReport {
        path,
        loss_rate: tx_loss.max(rx_loss),
        tx_loss,
        rx_loss,
        window_tx: a_out,
        window_rx: a_in,
    }))
}

/// Loss entry as carried in Stop messages: a 32-bit ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportedLoss {
    pub path: PathId,
    pub num: u32,
    pub den: u32,
}

impl ReportedLoss {
    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl From<&LossReport> for ReportedLoss {
    fn from(r: &LossReport) -> Self {
        let (mut n, mut d) = (*r.loss_rate.numer(), *r.loss_rate.denom());
        while d > u32::MAX as u64 {
            n >>= 1;
            d >>= 1;
        }
        ReportedLoss {
            path: r.path,
            num: n as u32,
            den: d as u32,
        }
    }
}

/// Copies a packet onto a fail-over path with probability `sample_rate`
/// while the session is measuring.
pub fn replicate_sample<R: Rng>(
    session: &MeasurementSession,
    pkt: &SimPacket,
    headers: &[EncapHeader],
    rng: &mut R,
) -> Result<Option<SimPacket>, MeasureError> {
    if session.state != State::Measuring || !rng.random_bool(session.config().sample_rate.clamp(0.0, 1.0)) {
        return Ok(None);
    }
    let mut copy = pkt.clone();
    for h in headers {
        copy = encapsulate(copy, *h)?;
    }
    Ok(Some(copy))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{FiveTuple, PROTO_TCP};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn snap(a_out: u64, a_in: u64, b_out: u64, b_in: u64, t: u64) -> CounterSnapshot {
        CounterSnapshot {
            a_out,
            a_in,
            b_out,
            b_in,
            taken_at: t,
        }
    }

    #[test]
    fn loss_examples() {
        let z = snap(0, 0, 0, 0, 0);
        let r = compute_loss(PathId::Ip, &z, &snap(100, 100, 100, 90, 1000)).unwrap().unwrap();
        assert_eq!(r.loss_rate, Ratio::new(1, 10));
        assert_eq!(r.tx_loss, Ratio::new(1, 10));
        assert_eq!(r.rx_loss, Ratio::new(0, 1));

        let r = compute_loss(PathId::Ip, &z, &snap(50, 50, 50, 50, 1000)).unwrap().unwrap();
        assert_eq!(r.loss_rate, Ratio::new(0, 1));

        assert_eq!(compute_loss(PathId::Ip, &z, &snap(0, 10, 10, 0, 1000)), Ok(None));
        assert_eq!(compute_loss(PathId::Ip, &z, &snap(10, 0, 0, 10, 1000)), Ok(None));
    }

    #[test]
    fn loss_is_the_worse_direction() {
        let r = compute_loss(PathId::Fia(0), &snap(10, 10, 10, 10, 0), &snap(110, 80, 110, 105, 9))
            .unwrap()
            .unwrap();
        assert_eq!(r.tx_loss, Ratio::new(5, 100));
        assert_eq!(r.rx_loss, Ratio::new(30, 100));
        assert_eq!(r.loss_rate, r.rx_loss);
    }

    #[test]
    fn regression_is_an_error() {
        assert_eq!(
            compute_loss(PathId::Ip, &snap(5, 0, 0, 0, 0), &snap(4, 0, 0, 0, 1)),
            Err(MeasureError::CounterRegression("a_out"))
        );
    }

    #[test]
    fn reordering_surplus_clamps_to_zero() {
        let r = compute_loss(PathId::Ip, &snap(0, 0, 0, 0, 0), &snap(10, 10, 10, 12, 1)).unwrap().unwrap();
        assert_eq!(r.tx_loss, Ratio::new(0, 1));
    }

    #[test]
    fn path_wire_format() {
        assert_eq!(PathId::Ip.to_wire(), [0, 0]);
        assert_eq!(PathId::Fia(3).to_wire(), [1, 3]);
        assert_eq!(PathId::from_wire([2, 0]), None);
        assert_eq!(PathId::from_wire([0, 1]), None);
        assert_eq!(all_paths(2), vec![PathId::Ip, PathId::Fia(0), PathId::Fia(1)]);
    }

    #[test]
    fn roles_by_identifier() {
        assert_eq!(Role::for_ids(3, 9), Role::Initiator);
        assert_eq!(Role::for_ids(9, 3), Role::Responder);
    }

    #[test]
    fn reported_loss_fits_u32() {
        let r = LossReport {
            path: PathId::Ip,
            loss_rate: Ratio::new(3, 1u64 << 40),
            tx_loss: Ratio::new(0, 1),
            rx_loss: Ratio::new(0, 1),
            window_tx: 0,
            window_rx: 0,
        };
        let w = ReportedLoss::from(&r);
        assert!(w.den > 0);
        assert!((w.as_f64() - r.loss_f64()).abs() < 1e-9);
    }

    fn measuring(rate: f64) -> MeasurementSession {
        let cfg = MeasureConfig {
            sample_rate: rate,
            ..Default::default()
        };
        let mut s = MeasurementSession::new(1, 2, 1, cfg);
        s.force_state(State::Measuring);
        s
    }

    fn pkt() -> SimPacket {
        SimPacket::new(FiveTuple::new(1, 2, 3, 4, PROTO_TCP), 64, 0, vec![0; 10], 0)
    }

    #[test]
    fn replication_rates() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let hdr = [EncapHeader::ip_tunnel(1, 2), EncapHeader::overlay(3, 4, 0)];
        let s = measuring(0.0);
        assert!((0..1000).all(|_| replicate_sample(&s, &pkt(), &hdr, &mut rng).unwrap().is_none()));
        let s = measuring(1.0);
        for _ in 0..1000 {
            let c = replicate_sample(&s, &pkt(), &hdr, &mut rng).unwrap().unwrap();
            assert_eq!(c.encap, hdr.to_vec());
        }
        let mut idle = measuring(1.0);
        idle.force_state(State::Idle);
        assert!(replicate_sample(&idle, &pkt(), &hdr, &mut rng).unwrap().is_none());

        // Binomial(10^4, 0.1): sd = 30, so +/-100 is more than 3 sd.
        let s = measuring(0.1);
        let n = (0..10_000)
            .filter(|_| replicate_sample(&s, &pkt(), &hdr, &mut rng).unwrap().is_some())
            .count();
        assert!((900..=1100).contains(&n), "{n}");
    }

    /// Independent tally of a loss-only window: counts kept per packet.
    fn window_oracle(sent_ab: &[bool], sent_ba: &[bool]) -> (Ratio<u64>, Ratio<u64>) {
        let lost_ab = sent_ab.iter().filter(|d| !**d).count() as u64;
        let lost_ba = sent_ba.iter().filter(|d| !**d).count() as u64;
        (
            Ratio::new(lost_ab, sent_ab.len() as u64),
            Ratio::new(lost_ba, sent_ba.len() as u64),
        )
    }

    proptest! {
        #[test]
        fn loss_matches_per_packet_tally(
            base in (0u64..1000, 0u64..1000, 0u64..1000, 0u64..1000),
            ab in proptest::collection::vec(any::<bool>(), 1..300),
            ba in proptest::collection::vec(any::<bool>(), 1..300),
        ) {
            let prev = snap(base.0, base.1, base.2, base.3, 0);
            let delivered = |v: &[bool]| v.iter().filter(|d| **d).count() as u64;
            let curr = snap(
                base.0 + ab.len() as u64,
                base.1 + delivered(&ba),
                base.2 + ba.len() as u64,
                base.3 + delivered(&ab),
                1,
            );
            let r = compute_loss(PathId::Ip, &prev, &curr).unwrap().unwrap();
            let (tx, rx) = window_oracle(&ab, &ba);
            prop_assert_eq!(r.tx_loss, tx);
            prop_assert_eq!(r.rx_loss, rx);
            prop_assert_eq!(r.loss_rate, tx.max(rx));
            prop_assert!(r.loss_f64() >= 0.0 && r.loss_f64() <= 1.0);
        }

        #[test]
        fn loss_always_in_unit_interval(
            prev in (0u64..100, 0u64..100, 0u64..100, 0u64..100),
            d in (0u64..100, 0u64..100, 0u64..100, 0u64..100),
        ) {
            let p = snap(prev.0, prev.1, prev.2, prev.3, 0);
            let c = snap(prev.0 + d.0, prev.1 + d.1, prev.2 + d.2, prev.3 + d.3, 1);
            if let Some(r) = compute_loss(PathId::Ip, &p, &c).unwrap() {
                prop_assert!(r.loss_f64() >= 0.0 && r.loss_f64() <= 1.0);
            }
        }
    }
}
