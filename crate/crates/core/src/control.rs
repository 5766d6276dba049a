//! Control messages exchanged between peer devices.
//!
//! Control packets are clones of end-host packets of the flow with the
//! payload replaced, so on the wire they look like ordinary retransmissions.
//! Wire layout: `magic(8) | type(1) | len(2, BE) | payload`.

use thiserror::Error;

use crate::measure::{PathId, ReportedLoss, Role};
use crate::packet::{Addr, SimPacket};

pub const MAGIC: &[u8; 8] = b"DENACTL1";
pub const HEADER_LEN: usize = 11;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ControlError {
    #[error("malformed control message: {0}")]
    MalformedControl(&'static str),
    #[error("bootstrap peer did not answer after {0} retries")]
    Timeout(u32),
    #[error("bootstrap received from our own identifier")]
    SelfPeer,
}

fn malformed(what: &'static str) -> ControlError {
    ControlError::MalformedControl(what)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum MsgType {
    Bootstrap = 1,
    MeasRequest = 2,
    MeasReply = 3,
    Start = 4,
    StartAck = 5,
    Stop = 6,
    StopAck = 7,
    KeepAliveReq = 8,
    KeepAliveResp = 9,
}

impl MsgType {
    pub const ALL: [MsgType; 9] = [
        MsgType::Bootstrap,
        MsgType::MeasRequest,
        MsgType::MeasReply,
        MsgType::Start,
        MsgType::StartAck,
        MsgType::Stop,
        MsgType::StopAck,
        MsgType::KeepAliveReq,
        MsgType::KeepAliveResp,
    ];

    pub fn from_u8(v: u8) -> Option<MsgType> {
        Self::ALL.into_iter().find(|t| *t as u8 == v)
    }
}

/// Raw framed message: a type code and an opaque payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ControlMessage {
    pub msg_type: MsgType,
    pub payload: Vec<u8>,
}

impl ControlMessage {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.payload.len());
        out.extend_from_slice(MAGIC);
        out.push(self.msg_type as u8);
        out.extend_from_slice(&(self.payload.len() as u16).to_be_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    /// `Ok(None)` when the bytes do not start with the magic.
    pub fn from_bytes(b: &[u8]) -> Result<Option<ControlMessage>, ControlError> {
        if b.len() < MAGIC.len() || &b[..MAGIC.len()] != MAGIC {
            return Ok(None);
        }
        if b.len() < HEADER_LEN {
            return Err(malformed("truncated header"));
        }
        let msg_type = MsgType::from_u8(b[8]).ok_or(malformed("unknown type"))?;
        let len = u16::from_be_bytes([b[9], b[10]]) as usize;
        if b.len() != HEADER_LEN + len {
            return Err(malformed("length mismatch"));
        }
        Ok(Some(ControlMessage {
            msg_type,
            payload: b[HEADER_LEN..].to_vec(),
        }))
    }

    pub fn from_body(body: &ControlBody) -> ControlMessage {
        let mut w = Writer::default();
        let msg_type = match body {
            ControlBody::Bootstrap(info) => {
                info.write(&mut w);
                MsgType::Bootstrap
            }
            ControlBody::MeasRequest { cycle, qid, path, a_out } => {
                w.u32(*cycle);
                w.u32(*qid);
                w.path(*path);
                w.u64(*a_out);
                MsgType::MeasRequest
            }
            ControlBody::MeasReply {
                cycle,
                qid,
                path,
                a_out,
                b_in,
                b_out,
            } => {
                w.u32(*cycle);
                w.u32(*qid);
                w.path(*path);
                w.u64(*a_out);
                w.u64(*b_in);
                w.u64(*b_out);
                MsgType::MeasReply
            }
            ControlBody::Start { cycle } => {
                w.u32(*cycle);
                MsgType::Start
            }
            ControlBody::StartAck { cycle } => {
                w.u32(*cycle);
                MsgType::StartAck
            }
            ControlBody::Stop {
                cycle,
                decision,
                reports,
            } => {
                w.u32(*cycle);
                w.path(*decision);
                w.reports(reports);
                MsgType::Stop
            }
            ControlBody::StopAck { cycle, reports } => {
                w.u32(*cycle);
                w.reports(reports);
                MsgType::StopAck
            }
            ControlBody::KeepAliveReq { path, seq } => {
                w.path(*path);
                w.u32(*seq);
                MsgType::KeepAliveReq
            }
            ControlBody::KeepAliveResp { path, seq } => {
                w.path(*path);
                w.u32(*seq);
                MsgType::KeepAliveResp
            }
        };
        ControlMessage {
            msg_type,
            payload: w.0,
        }
    }

    pub fn body(&self) -> Result<ControlBody, ControlError> {
        let mut r = Reader(&self.payload);
        let body = match self.msg_type {
            MsgType::Bootstrap => ControlBody::Bootstrap(BootstrapInfo::read(&mut r)?),
            MsgType::MeasRequest => ControlBody::MeasRequest {
                cycle: r.u32()?,
                qid: r.u32()?,
                path: r.path()?,
                a_out: r.u64()?,
            },
            MsgType::MeasReply => ControlBody::MeasReply {
                cycle: r.u32()?,
                qid: r.u32()?,
                path: r.path()?,
                a_out: r.u64()?,
                b_in: r.u64()?,
                b_out: r.u64()?,
            },
            MsgType::Start => ControlBody::Start { cycle: r.u32()? },
            MsgType::StartAck => ControlBody::StartAck { cycle: r.u32()? },
            MsgType::Stop => ControlBody::Stop {
                cycle: r.u32()?,
                decision: r.path()?,
                reports: r.reports()?,
            },
            MsgType::StopAck => ControlBody::StopAck {
                cycle: r.u32()?,
                reports: r.reports()?,
            },
            MsgType::KeepAliveReq => ControlBody::KeepAliveReq {
                path: r.path()?,
                seq: r.u32()?,
            },
            MsgType::KeepAliveResp => ControlBody::KeepAliveResp {
                path: r.path()?,
                seq: r.u32()?,
            },
        };
        if !r.0.is_empty() {
            return Err(malformed("trailing bytes"));
        }
        Ok(body)
    }
}

/// Decoded control message contents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlBody {
    Bootstrap(BootstrapInfo),
    MeasRequest {
        cycle: u32,
        qid: u32,
        path: PathId,
        a_out: u64,
    },
    MeasReply {
        cycle: u32,
        qid: u32,
        path: PathId,
        a_out: u64,
        b_in: u64,
        b_out: u64,
    },
    Start {
        cycle: u32,
    },
    StartAck {
        cycle: u32,
    },
    Stop {
        cycle: u32,
        decision: PathId,
        reports: Vec<ReportedLoss>,
    },
    StopAck {
        cycle: u32,
        reports: Vec<ReportedLoss>,
    },
    KeepAliveReq {
        path: PathId,
        seq: u32,
    },
    KeepAliveResp {
        path: PathId,
        seq: u32,
    },
}

impl ControlBody {
    pub fn msg_type(&self) -> MsgType {
        ControlMessage::from_body(self).msg_type
    }
}

const FLAG_PRIVATE: u8 = 0x01;
const FLAG_REPLY: u8 = 0x02;

/// FIA addressing portion: isd(2) | aid(4) | gateway(4).
pub const FIA_ADDR_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BootstrapInfo {
    pub dena_id: u64,
    pub fia_isd: u16,
    pub fia_aid: u32,
    pub gateway_addr: Addr,
    /// Host address and port as seen before the sender's NAT.
    pub private_host: Option<(Addr, u16)>,
    /// Set when this message answers a peer's bootstrap.
    pub reply: bool,
}

impl BootstrapInfo {
    fn write(&self, w: &mut Writer) {
        w.u64(self.dena_id);
        w.u16(self.fia_isd);
        w.u32(self.fia_aid);
        w.u32(self.gateway_addr);
        let mut flags = 0;
        if self.private_host.is_some() {
            flags |= FLAG_PRIVATE;
        }
        if self.reply {
            flags |= FLAG_REPLY;
        }
        w.0.push(flags);
        if let Some((a, p)) = self.private_host {
            w.u32(a);
            w.u16(p);
        }
    }

    fn read(r: &mut Reader) -> Result<BootstrapInfo, ControlError> {
        let dena_id = r.u64()?;
        if dena_id == 0 {
            return Err(malformed("zero identifier"));
        }
        let fia_isd = r.u16()?;
        let fia_aid = r.u32()?;
        let gateway_addr = r.u32()?;
        let flags = r.u8()?;
        if flags & !(FLAG_PRIVATE | FLAG_REPLY) != 0 {
            return Err(malformed("unknown bootstrap flags"));
        }
        let private_host = if flags & FLAG_PRIVATE != 0 {
            Some((r.u32()?, r.u16()?))
        } else {
            None
        };
        Ok(BootstrapInfo {
            dena_id,
            fia_isd,
            fia_aid,
            gateway_addr,
            private_host,
            reply: flags & FLAG_REPLY != 0,
        })
    }

    pub fn as_reply(mut self) -> Self {
        self.reply = true;
        self
    }
}

/// What one device knows about its peer after bootstrapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PeerRecord {
    pub peer_id: u64,
    pub fia_isd: u16,
    pub fia_aid: u32,
    pub gateway_addr: Addr,
    pub private_host: Option<(Addr, u16)>,
    pub role: Role,
}

impl PeerRecord {
    pub fn new(local_id: u64, peer: &BootstrapInfo) -> Self {
        Self {
            peer_id: peer.dena_id,
            fia_isd: peer.fia_isd,
            fia_aid: peer.fia_aid,
            gateway_addr: peer.gateway_addr,
            private_host: peer.private_host,
            role: Role::for_ids(local_id, peer.dena_id),
        }
    }
}

/// Replaces the payload of a live end-host packet with a control message.
pub fn make_control(template: &SimPacket, msg: &ControlMessage) -> SimPacket {
    SimPacket {
        tuple: template.tuple,
        ttl: template.ttl,
        ipid: template.ipid,
        payload: msg.to_bytes(),
        encap: Vec::new(),
        seq_no: template.seq_no,
    }
}

pub fn parse_control(pkt: &SimPacket) -> Result<Option<ControlMessage>, ControlError> {
    ControlMessage::from_bytes(&pkt.payload)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ExchangeState {
    Idle,
    Waiting,
    Complete,
}

/// One side of the bootstrap handshake. Requests are retried on timeout;
/// every request received is answered, so a lost answer is recovered by
/// the next request.
#[derive(Debug, Clone)]
pub struct BootstrapExchange {
    local: BootstrapInfo,
    max_retries: u32,
    retries: u32,
    state: ExchangeState,
    peer: Option<PeerRecord>,
}

impl BootstrapExchange {
    pub fn new(local: BootstrapInfo, max_retries: u32) -> Self {
        Self {
            local,
            max_retries,
            retries: 0,
            state: ExchangeState::Idle,
            peer: None,
        }
    }

    pub fn peer(&self) -> Option<&PeerRecord> {
        self.peer.as_ref()
    }

    pub fn is_complete(&self) -> bool {
        self.state == ExchangeState::Complete
    }

    /// Starts the handshake; returns the request to send.
    pub fn initiate(&mut self) -> Option<BootstrapInfo> {
        if self.state != ExchangeState::Idle {
            return None;
        }
        self.state = ExchangeState::Waiting;
        Some(BootstrapInfo {
            reply: false,
            ..self.local
        })
    }

    /// Retransmission timer fired.
    pub fn on_timeout(&mut self) -> Result<Option<BootstrapInfo>, ControlError> {
        if self.state != ExchangeState::Waiting {
            return Ok(None);
        }
        if self.retries >= self.max_retries {
            self.state = ExchangeState::Idle;
            return Err(ControlError::Timeout(self.max_retries));
        }
        self.retries += 1;
        Ok(Some(BootstrapInfo {
            reply: false,
            ..self.local
        }))
    }

    /// Handles a received bootstrap; returns the answer to send, if any.
    pub fn on_receive(&mut self, info: &BootstrapInfo) -> Result<Option<BootstrapInfo>, ControlError> {
        if info.dena_id == self.local.dena_id {
            return Err(ControlError::SelfPeer);
        }
        self.peer = Some(PeerRecord::new(self.local.dena_id, info));
        self.state = ExchangeState::Complete;
        Ok((!info.reply).then(|| self.local.as_reply()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leg {
    Request,
    Answer,
}

/// Runs a full handshake between two devices over a link that delivers
/// each message when `deliver` returns true. `a` initiates.
pub fn bootstrap_exchange(
    a: BootstrapInfo,
    b: BootstrapInfo,
    max_retries: u32,
    mut deliver: impl FnMut(Leg) -> bool,
) -> Result<(PeerRecord, PeerRecord), ControlError> {
    let mut ea = BootstrapExchange::new(a, max_retries);
    let mut eb = BootstrapExchange::new(b, max_retries);
    let mut req = ea.initiate();
    while let Some(r) = req {
        if deliver(Leg::Request) {
            if let Some(ans) = eb.on_receive(&r)? {
                if deliver(Leg::Answer) {
                    ea.on_receive(&ans)?;
                }
            }
        }
        if ea.is_complete() {
            break;
        }
        req = ea.on_timeout()?;
    }
    match (ea.peer, eb.peer) {
        (Some(pa), Some(pb)) => Ok((pa, pb)),
        _ => Err(ControlError::Timeout(max_retries)),
    }
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_be_bytes());
    }
    fn path(&mut self, p: PathId) {
        self.0.extend_from_slice(&p.to_wire());
    }
    fn reports(&mut self, reports: &[ReportedLoss]) {
        self.0.push(reports.len() as u8);
        for r in reports {
            self.path(r.path);
            self.u32(r.num);
            self.u32(r.den);
        }
    }
}

struct Reader<'a>(&'a [u8]);

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], ControlError> {
        if self.0.len() < N {
            return Err(malformed("truncated body"));
        }
        let (h, t) = self.0.split_at(N);
        self.0 = t;
        Ok(h.try_into().expect("length checked"))
    }
    fn u8(&mut self) -> Result<u8, ControlError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, ControlError> {
        Ok(u16::from_be_bytes(self.take()?))
    }
    fn u32(&mut self) -> Result<u32, ControlError> {
        Ok(u32::from_be_bytes(self.take()?))
    }
    fn u64(&mut self) -> Result<u64, ControlError> {
        Ok(u64::from_be_bytes(self.take()?))
    }
    fn path(&mut self) -> Result<PathId, ControlError> {
        PathId::from_wire(self.take()?).ok_or(malformed("bad path id"))
    }
    fn reports(&mut self) -> Result<Vec<ReportedLoss>, ControlError> {
        let n = self.u8()?;
        (0..n)
            .map(|_| {
                let path = self.path()?;
                let num = self.u32()?;
                let den = self.u32()?;
                if den == 0 || num > den {
                    return Err(malformed("loss ratio out of range"));
                }
                Ok(ReportedLoss { path, num, den })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{FiveTuple, PROTO_TCP};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn info(id: u64) -> BootstrapInfo {
        BootstrapInfo {
            dena_id: id,
            fia_isd: 1,
            fia_aid: 0xff00_0011,
            gateway_addr: 0x0a00_0001,
            private_host: None,
            reply: false,
        }
    }

    fn template() -> SimPacket {
        SimPacket::new(FiveTuple::new(1, 5000, 2, 80, PROTO_TCP), 61, 0x4321, b"data".to_vec(), 17)
    }

    #[test]
    fn control_clone_keeps_flow() {
        let msg = ControlMessage::from_body(&ControlBody::Start { cycle: 3 });
        let p = make_control(&template(), &msg);
        assert_eq!(p.tuple, template().tuple);
        assert_eq!(p.ttl, 61);
        assert_eq!(parse_control(&p), Ok(Some(msg)));
        assert_eq!(&p.payload[..8], b"DENACTL1");
        assert_eq!(p.payload[8], 4);
        assert_eq!(&p.payload[9..11], &[0, 4]);
    }

    #[test]
    fn data_is_not_control() {
        assert_eq!(parse_control(&template()), Ok(None));
        let mut short = template();
        short.payload = b"DENA".to_vec();
        assert_eq!(parse_control(&short), Ok(None));
    }

    #[test]
    fn truncated_control_is_malformed() {
        let mut p = make_control(&template(), &ControlMessage::from_body(&ControlBody::Start { cycle: 1 }));
        p.payload.truncate(12);
        assert!(matches!(parse_control(&p), Err(ControlError::MalformedControl(_))));
        p.payload.truncate(9);
        assert!(matches!(parse_control(&p), Err(ControlError::MalformedControl(_))));

        let bad = ControlMessage {
            msg_type: MsgType::Stop,
            payload: vec![0, 0, 0, 1, 0],
        };
        assert!(bad.body().is_err());
    }

    #[test]
    fn bootstrap_layout() {
        let m = ControlMessage::from_body(&ControlBody::Bootstrap(info(7)));
        assert_eq!(m.payload.len(), 8 + FIA_ADDR_LEN + 1);
        let nat = BootstrapInfo {
            private_host: Some((0x0a00_0002, 1234)),
            ..info(7)
        };
        let m = ControlMessage::from_body(&ControlBody::Bootstrap(nat));
        assert_eq!(m.payload.len(), 8 + FIA_ADDR_LEN + 1 + 6);
        assert_eq!(m.body(), Ok(ControlBody::Bootstrap(nat)));
    }

    #[test]
    fn handshake_is_symmetric() {
        let (pa, pb) = bootstrap_exchange(info(5), info(9), 3, |_| true).unwrap();
        assert_eq!(pa.peer_id, 9);
        assert_eq!(pb.peer_id, 5);
        assert_eq!(pa.role, Role::Initiator);
        assert_eq!(pb.role, Role::Responder);
        assert_eq!(pa.gateway_addr, info(9).gateway_addr);
    }

    #[test]
    fn handshake_carries_private_address() {
        let b = BootstrapInfo {
            private_host: Some((0x0a00_0002, 1234)),
            ..info(9)
        };
        let (pa, _) = bootstrap_exchange(info(5), b, 3, |_| true).unwrap();
        assert_eq!(pa.private_host, Some((0x0a00_0002, 1234)));
    }

    #[test]
    fn handshake_times_out_on_dead_link() {
        assert_eq!(
            bootstrap_exchange(info(5), info(9), 3, |_| false),
            Err(ControlError::Timeout(3))
        );
        let mut ex = BootstrapExchange::new(info(5), 0);
        assert!(ex.initiate().is_some());
        assert!(ex.initiate().is_none());
        assert_eq!(ex.on_timeout(), Err(ControlError::Timeout(0)));
        assert_eq!(ex.on_receive(&info(5)), Err(ControlError::SelfPeer));
    }

    #[test]
    fn first_request_lost_then_retry() {
        let mut n = 0;
        let r = bootstrap_exchange(info(5), info(9), 3, |_| {
            n += 1;
            n > 1
        });
        assert!(r.is_ok());
    }

    fn success_rate(loss_req: f64, loss_ans: f64, trials: u32, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = 0;
        for _ in 0..trials {
            let r = bootstrap_exchange(info(5), info(9), 3, |leg| {
                let p = if leg == Leg::Request { loss_req } else { loss_ans };
                !rng.random_bool(p)
            });
            ok += u32::from(r.is_ok());
        }
        ok as f64 / trials as f64
    }

    #[test]
    fn retries_recover_lossy_requests() {
        // Four independent tries at 10% request loss: 1 - 0.1^4.
        let expected = 1.0 - 0.1f64.powi(4);
        let got = success_rate(0.1, 0.0, 200_000, 3);
        assert!(expected >= 0.999);
        assert!(got >= 0.999, "{got}");
        assert!((got - expected).abs() < 0.0005);
    }

    #[test]
    fn retries_with_lossy_answers_follow_geometric_bound() {
        let per_try = 0.9f64 * 0.9;
        let expected = 1.0 - (1.0 - per_try).powi(4);
        let got = success_rate(0.1, 0.1, 200_000, 4);
        assert!((got - expected).abs() < 0.001, "{got} vs {expected}");
    }

    fn arb_path() -> impl Strategy<Value = PathId> {
        prop_oneof![Just(PathId::Ip), (0u8..8).prop_map(PathId::Fia)]
    }

    fn arb_reports() -> impl Strategy<Value = Vec<ReportedLoss>> {
        proptest::collection::vec(
            (arb_path(), 1u32.., any::<u32>()).prop_map(|(path, den, n)| ReportedLoss {
                path,
                num: n % (den / 2 + 1),
                den,
            }),
            0..5,
        )
    }

    fn arb_body() -> impl Strategy<Value = ControlBody> {
        prop_oneof![
            (1u64.., any::<u16>(), any::<u32>(), any::<u32>(), proptest::option::of((any::<u32>(), any::<u16>())), any::<bool>())
                .prop_map(|(dena_id, fia_isd, fia_aid, gateway_addr, private_host, reply)| {
                    ControlBody::Bootstrap(BootstrapInfo { dena_id, fia_isd, fia_aid, gateway_addr, private_host, reply })
                }),
            (any::<u32>(), any::<u32>(), arb_path(), any::<u64>())
                .prop_map(|(cycle, qid, path, a_out)| ControlBody::MeasRequest { cycle, qid, path, a_out }),
            (any::<u32>(), any::<u32>(), arb_path(), any::<u64>(), any::<u64>(), any::<u64>())
                .prop_map(|(cycle, qid, path, a_out, b_in, b_out)| ControlBody::MeasReply { cycle, qid, path, a_out, b_in, b_out }),
            any::<u32>().prop_map(|cycle| ControlBody::Start { cycle }),
            any::<u32>().prop_map(|cycle| ControlBody::StartAck { cycle }),
            (any::<u32>(), arb_path(), arb_reports())
                .prop_map(|(cycle, decision, reports)| ControlBody::Stop { cycle, decision, reports }),
            (any::<u32>(), arb_reports()).prop_map(|(cycle, reports)| ControlBody::StopAck { cycle, reports }),
            (arb_path(), any::<u32>()).prop_map(|(path, seq)| ControlBody::KeepAliveReq { path, seq }),
            (arb_path(), any::<u32>()).prop_map(|(path, seq)| ControlBody::KeepAliveResp { path, seq }),
        ]
    }

    proptest! {
        #[test]
        fn body_round_trip(body in arb_body()) {
            let msg = ControlMessage::from_body(&body);
            let bytes = msg.to_bytes();
            let back = ControlMessage::from_bytes(&bytes).unwrap().unwrap();
            prop_assert_eq!(&back, &msg);
            prop_assert_eq!(back.body().unwrap(), body);
            prop_assert_eq!(back.to_bytes(), bytes);
        }

        #[test]
        fn raw_round_trip(t in 1u8..=9, payload in proptest::collection::vec(any::<u8>(), 0..300)) {
            let msg = ControlMessage { msg_type: MsgType::from_u8(t).unwrap(), payload };
            prop_assert_eq!(ControlMessage::from_bytes(&msg.to_bytes()), Ok(Some(msg)));
        }

        #[test]
        fn garbage_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
            let mut b = MAGIC.to_vec();
            b.extend(bytes);
            if let Ok(Some(m)) = ControlMessage::from_bytes(&b) {
                let _ = m.body();
            }
        }
    }
}
