//! The edge device: stamps discovery signals into flows, bootstraps with the
//! peer it finds, then counts, measures and steers the peer's traffic.
//!
//! The device is a pure state machine. The engine feeds it packets and
//! timer expiries and carries out whatever it emits.

use std::collections::{BTreeMap, HashSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::DenaConfig;
use crate::control::{
    make_control, parse_control, BootstrapExchange, BootstrapInfo, ControlBody, ControlError, ControlMessage,
    MsgType, PeerRecord,
};
use crate::discovery::{DiscoveryState, Verdict};
use crate::measure::{
    all_paths, replicate_sample, Action, CounterSnapshot, Event, Keepalive, Liveness, MeasuredWindow,
    MeasurementSession, PathCounters, PathId, Role, State, TimerId,
};
use crate::packet::{decapsulate, encapsulate, Addr, EncapHeader, EncapKind, FiveTuple, SimPacket, PROTO_UDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenaSetup {
    pub id: u64,
    pub addr: Addr,
    /// Own overlay gateway, if the site has overlay access.
    pub gateway: Option<Addr>,
    pub behind_nat: bool,
    pub n_fia: u8,
    pub fia_isd: u16,
    pub fia_aid: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DenaTimer {
    Session(TimerId),
    Bootstrap(FiveTuple),
    Keepalive,
    GatewayHello,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WanKind {
    /// End-host data; `counted` once it enters the loss counters.
    Data { counted: bool, replica: bool },
    Control(MsgType),
    /// Measurement request or reply, tagged with its query id.
    Marker { reply: bool, qid: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Note {
    Stamped { seq_no: u64 },
    Detected { flow: FiveTuple, distance: Option<usize> },
    Bootstrapped { flow: FiveTuple, peer: u64 },
    BootstrapFailed { flow: FiveTuple },
    Transition { from: State, to: State, cycle: u32 },
    Decision { path: PathId, changed: bool },
    Measured(MeasuredWindow),
    Liveness { path: PathId, up: bool },
    Duplicate { seq_no: u64 },
    Dropped { reason: &'static str },
    /// Protocol message that did not fit the current state.
    Ignored(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Emit {
    Wan { path: PathId, pkt: SimPacket, kind: WanKind },
    /// Access-tunnel keep-alive towards the own gateway.
    Gateway(SimPacket),
    Host(SimPacket),
    Timer { after_ms: u64, timer: DenaTimer },
    Note(Note),
}

/// Data sent on the active path versus copies placed on fail-over paths,
/// both counted only while measuring.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReplicationStats {
    /// Keyed by the active path.
    pub active: BTreeMap<PathId, u64>,
    /// Keyed by (active path, path of the copy).
    pub samples: BTreeMap<(PathId, PathId), u64>,
}

impl ReplicationStats {
    /// Copies per packet placed on `copy` while `active` carried the data.
    pub fn ratio(&self, active: PathId, copy: PathId) -> Option<f64> {
        let n = *self.active.get(&active)?;
        (n > 0).then(|| self.samples.get(&(active, copy)).copied().unwrap_or(0) as f64 / n as f64)
    }
}

#[derive(Debug, Clone, Copy)]
struct NatPair {
    public: (Addr, u16),
    private: (Addr, u16),
}

#[derive(Debug, Clone)]
struct FlowState {
    disc: DiscoveryState,
    exchange: Option<BootstrapExchange>,
    bound: bool,
    /// Set when the remote end sits behind a NAT.
    nat: Option<NatPair>,
}

#[derive(Debug, Clone)]
struct Peer {
    session: MeasurementSession,
    keepalive: Keepalive,
    counters: BTreeMap<PathId, PathCounters>,
    /// Flow whose addressing carries control traffic.
    template: FiveTuple,
    applied: PathId,
    seen: HashSet<u64>,
    seen_order: VecDeque<u64>,
}

#[derive(Debug, Clone)]
pub struct Dena {
    pub setup: DenaSetup,
    cfg: DenaConfig,
    flows: BTreeMap<FiveTuple, FlowState>,
    /// Overlay arrivals carry the remote's private endpoint; maps that
    /// view back to what the IP path shows.
    fia_rewrite: BTreeMap<FiveTuple, FiveTuple>,
    peer: Option<Peer>,
    rng: ChaCha8Rng,
    pub replication: ReplicationStats,
}

impl Dena {
    pub fn new(setup: DenaSetup, cfg: DenaConfig, seed: u64) -> Self {
        Self {
            setup,
            cfg,
            flows: BTreeMap::new(),
            fia_rewrite: BTreeMap::new(),
            peer: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
            replication: ReplicationStats::default(),
        }
    }

    pub fn peer_id(&self) -> Option<u64> {
        self.peer.as_ref().map(|p| p.session.peer)
    }

    pub fn session(&self) -> Option<&MeasurementSession> {
        self.peer.as_ref().map(|p| &p.session)
    }

    pub fn counters(&self, path: PathId) -> PathCounters {
        self.peer
            .as_ref()
            .and_then(|p| p.counters.get(&path).copied())
            .unwrap_or_default()
    }

    pub fn verdict(&self, flow: &FiveTuple) -> Option<Verdict> {
        self.flows.get(flow).map(|f| f.disc.verdict)
    }

    pub fn is_bound(&self, flow: &FiveTuple) -> bool {
        self.flows.get(flow).is_some_and(|f| f.bound)
    }

    pub fn start(&mut self) -> Vec<Emit> {
        let mut out = Vec::new();
        self.gateway_hello(&mut out);
        out
    }

    fn gateway_hello(&self, out: &mut Vec<Emit>) {
        let Some(gw) = self.setup.gateway else {
            return;
        };
        let inner = SimPacket::new(FiveTuple::new(self.setup.addr, 0, gw, 0, PROTO_UDP), 64, 0, Vec::new(), 0);
        let pkt = encapsulate(inner, EncapHeader::ip_tunnel(self.setup.addr, gw)).expect("depth 1");
        out.push(Emit::Gateway(pkt));
        out.push(Emit::Timer {
            after_ms: self.cfg.measure.keepalive_interval_ms,
            timer: DenaTimer::GatewayHello,
        });
    }

    fn flow_entry(&mut self, key: FiveTuple) -> &mut FlowState {
        let rng = &mut self.rng;
        self.flows.entry(key).or_insert_with(|| FlowState {
            disc: DiscoveryState::new(key, rand::Rng::random(rng)),
            exchange: None,
            bound: false,
            nat: None,
        })
    }

    fn local_info(&self, key: FiveTuple) -> BootstrapInfo {
        BootstrapInfo {
            dena_id: self.setup.id,
            fia_isd: self.setup.fia_isd,
            fia_aid: self.setup.fia_aid,
            gateway_addr: self.setup.gateway.unwrap_or(0),
            private_host: self.setup.behind_nat.then_some((key.src_addr, key.src_port)),
            reply: false,
        }
    }

    /// Dresses a packet of `flow` for `path`.
    fn on_path(&self, path: PathId, mut pkt: SimPacket, flow: &FiveTuple) -> Option<SimPacket> {
        let PathId::Fia(i) = path else {
            return Some(pkt);
        };
        let gw = self.setup.gateway?;
        if let Some(pair) = self.flows.get(flow).and_then(|f| f.nat) {
            if (pkt.tuple.dst_addr, pkt.tuple.dst_port) == pair.public {
                (pkt.tuple.dst_addr, pkt.tuple.dst_port) = pair.private;
            }
        }
        let mut hdr = EncapHeader::ip_tunnel(self.setup.addr, gw);
        hdr.fia_path_id = i;
        encapsulate(pkt, hdr).ok()
    }

    fn send(&self, out: &mut Vec<Emit>, path: PathId, pkt: SimPacket, flow: &FiveTuple, kind: WanKind) {
        match self.on_path(path, pkt, flow) {
            Some(pkt) => out.push(Emit::Wan { path, pkt, kind }),
            None => out.push(Emit::Note(Note::Dropped {
                reason: "no overlay access",
            })),
        }
    }

    fn send_control(&self, out: &mut Vec<Emit>, path: PathId, flow: FiveTuple, body: &ControlBody) {
        let kind = match body {
            ControlBody::MeasRequest { qid, .. } => WanKind::Marker { reply: false, qid: *qid },
            ControlBody::MeasReply { qid, .. } => WanKind::Marker { reply: true, qid: *qid },
            b => WanKind::Control(b.msg_type()),
        };
        let template = SimPacket::new(flow, 64, 0, Vec::new(), 0);
        let pkt = make_control(&template, &ControlMessage::from_body(body));
        self.send(out, path, pkt, &flow, kind);
    }

    /// A packet from a local end host.
    pub fn from_host(&mut self, _now: u64, pkt: SimPacket) -> Vec<Emit> {
        let mut out = Vec::new();
        let key = pkt.tuple;
        let (codec, det) = (self.cfg.codec, self.cfg.detection);
        let has_peer = self.peer.is_some();
        let flow = self.flow_entry(key);
        if flow.bound && has_peer {
            self.send_bound(&mut out, key, pkt);
            return out;
        }
        let before = (flow.disc.tx_cursor, flow.disc.attempts_used);
        let seq_no = pkt.seq_no;
        let pkt = flow.disc.stamp(pkt, &codec, &det);
        if (flow.disc.tx_cursor, flow.disc.attempts_used) != before {
            out.push(Emit::Note(Note::Stamped { seq_no }));
        }
        out.push(Emit::Wan {
            path: PathId::Ip,
            pkt,
            kind: WanKind::Data {
                counted: false,
                replica: false,
            },
        });
        out
    }

    fn send_bound(&mut self, out: &mut Vec<Emit>, key: FiveTuple, pkt: SimPacket) {
        let peer = self.peer.as_mut().expect("bound flow has a peer");
        let path = peer.session.active;
        let measuring = peer.session.state == State::Measuring;
        let mut copies = Vec::new();
        if measuring {
            for p in peer.session.failover_paths() {
                if let Ok(Some(c)) = replicate_sample(&peer.session, &pkt, &[], &mut self.rng) {
                    copies.push((p, c));
                }
            }
        }
        peer.counters.entry(path).or_default().out += 1;
        for (p, _) in &copies {
            peer.counters.entry(*p).or_default().out += 1;
        }
        if measuring {
            *self.replication.active.entry(path).or_default() += 1;
            for (p, _) in &copies {
                *self.replication.samples.entry((path, *p)).or_default() += 1;
            }
        }
        self.send(
            out,
            path,
            pkt,
            &key,
            WanKind::Data {
                counted: true,
                replica: false,
            },
        );
        for (p, c) in copies {
            self.send(
                out,
                p,
                c,
                &key,
                WanKind::Data {
                    counted: true,
                    replica: true,
                },
            );
        }
    }

    /// A packet from the wide-area side, after the site's NAT.
    pub fn from_wan(&mut self, now: u64, pkt: SimPacket) -> Vec<Emit> {
        let mut out = Vec::new();
        let (path, mut inner) = match pkt.outer() {
            None => (PathId::Ip, pkt),
            Some(h) if h.kind == EncapKind::IpTunnel && Some(h.endpoint_src) == self.setup.gateway => {
                let (inner, h) = decapsulate(pkt).expect("outer header present");
                (PathId::Fia(h.fia_path_id), inner)
            }
            Some(_) => {
                out.push(Emit::Note(Note::Dropped {
                    reason: "unexpected encapsulation",
                }));
                return out;
            }
        };
        if path.is_fia() {
            if let Some(t) = self.fia_rewrite.get(&inner.tuple) {
                inner.tuple = *t;
            }
        }
        match parse_control(&inner) {
            Ok(Some(msg)) => {
                match msg.body() {
                    Ok(body) => self.on_control(now, path, &inner, body, &mut out),
                    Err(e) => out.push(Emit::Note(Note::Ignored(e.to_string()))),
                }
                return out;
            }
            Err(e) => {
                out.push(Emit::Note(Note::Ignored(e.to_string())));
                return out;
            }
            Ok(None) => {}
        }

        let key = inner.tuple.reversed();
        let (codec, det) = (self.cfg.codec, self.cfg.detection);
        let window = self.cfg.dedup_window;
        if self.flow_entry(key).bound {
            if let Some(peer) = self.peer.as_mut() {
                peer.counters.entry(path).or_default().inc += 1;
                if !peer.seen.insert(inner.seq_no) {
                    out.push(Emit::Note(Note::Duplicate { seq_no: inner.seq_no }));
                    return out;
                }
                peer.seen_order.push_back(inner.seq_no);
                if peer.seen_order.len() > window {
                    let old = peer.seen_order.pop_front().expect("non-empty");
                    peer.seen.remove(&old);
                }
                out.push(Emit::Host(inner));
                return out;
            }
        }
        let flow = self.flows.get_mut(&key).expect("flow exists");
        if path == PathId::Ip && flow.disc.verdict == Verdict::Unknown {
            flow.disc.ingest(&inner, &codec, &det);
            if flow.disc.verdict == Verdict::PeerDetected {
                out.push(Emit::Note(Note::Detected {
                    flow: key,
                    distance: flow.disc.detected_distance,
                }));
                self.begin_bootstrap(key, &mut out);
            }
        }
        out.push(Emit::Host(inner));
        out
    }

    fn begin_bootstrap(&mut self, key: FiveTuple, out: &mut Vec<Emit>) {
        let info = self.local_info(key);
        let retries = self.cfg.bootstrap_retries;
        let flow = self.flows.get_mut(&key).expect("flow exists");
        if flow.exchange.is_some() {
            return;
        }
        let ex = flow.exchange.insert(BootstrapExchange::new(info, retries));
        if let Some(req) = ex.initiate() {
            self.send_control(out, PathId::Ip, key, &ControlBody::Bootstrap(req));
            out.push(Emit::Timer {
                after_ms: self.cfg.measure.interval_ms,
                timer: DenaTimer::Bootstrap(key),
            });
        }
    }

    fn on_control(&mut self, now: u64, path: PathId, pkt: &SimPacket, body: ControlBody, out: &mut Vec<Emit>) {
        match body {
            ControlBody::Bootstrap(info) => self.on_bootstrap(pkt, info, out),
            ControlBody::MeasRequest { cycle, qid, a_out, .. } => {
                let Some(peer) = self.peer.as_ref() else {
                    return;
                };
                let c = peer.counters.get(&path).copied().unwrap_or_default();
                let reply = ControlBody::MeasReply {
                    cycle,
                    qid,
                    path,
                    a_out,
                    b_in: c.inc,
                    b_out: c.out,
                };
                self.send_control(out, path, peer.template, &reply);
            }
            ControlBody::MeasReply {
                qid, a_out, b_in, b_out, ..
            } => {
                let Some(peer) = self.peer.as_ref() else {
                    return;
                };
                if peer.session.role != Role::Initiator {
                    return;
                }
                let snap = CounterSnapshot {
                    a_out,
                    a_in: peer.counters.get(&path).copied().unwrap_or_default().inc,
                    b_out,
                    b_in,
                    taken_at: now,
                };
                self.run_session(Event::Snapshot { qid, snap }, out);
            }
            ControlBody::KeepAliveReq { seq, .. } => {
                if let Some(peer) = self.peer.as_ref() {
                    self.send_control(out, path, peer.template, &ControlBody::KeepAliveResp { path, seq });
                }
            }
            ControlBody::KeepAliveResp { seq, .. } => {
                let Some(peer) = self.peer.as_mut() else {
                    return;
                };
                if let Some(Liveness::Available) = peer.keepalive.on_response(path, seq) {
                    out.push(Emit::Note(Note::Liveness { path, up: true }));
                    self.run_session(Event::PathRecovered(path), out);
                }
            }
            b @ (ControlBody::Start { .. }
            | ControlBody::StartAck { .. }
            | ControlBody::Stop { .. }
            | ControlBody::StopAck { .. }) => {
                if self.peer.is_some() {
                    self.run_session(Event::Received(b), out);
                }
            }
        }
    }

    fn on_bootstrap(&mut self, pkt: &SimPacket, info: BootstrapInfo, out: &mut Vec<Emit>) {
        let key = pkt.tuple.reversed();
        let local = self.local_info(key);
        let retries = self.cfg.bootstrap_retries;
        self.flow_entry(key);
        if let Some(private) = info.private_host {
            let public = (pkt.tuple.src_addr, pkt.tuple.src_port);
            if public != private {
                let pair = NatPair { public, private };
                self.flows.get_mut(&key).expect("flow exists").nat = Some(pair);
                let mut seen = pkt.tuple;
                (seen.src_addr, seen.src_port) = private;
                self.fia_rewrite.insert(seen, pkt.tuple);
            }
        }
        let flow = self.flows.get_mut(&key).expect("flow exists");
        let ex = flow.exchange.get_or_insert_with(|| BootstrapExchange::new(local, retries));
        let answer = match ex.on_receive(&info) {
            Ok(a) => a,
            Err(e) => {
                out.push(Emit::Note(Note::Ignored(e.to_string())));
                return;
            }
        };
        let record = *ex.peer().expect("exchange complete");
        flow.disc.mark_peer_known();
        if let Some(a) = answer {
            self.send_control(out, PathId::Ip, key, &ControlBody::Bootstrap(a));
        }
        self.bind(key, record, out);
    }

    fn bind(&mut self, key: FiveTuple, record: PeerRecord, out: &mut Vec<Emit>) {
        if let Some(peer) = &self.peer {
            if peer.session.peer != record.peer_id {
                out.push(Emit::Note(Note::Ignored(format!("second peer {}", record.peer_id))));
                return;
            }
        }
        let flow = self.flows.get_mut(&key).expect("flow exists");
        if flow.bound {
            return;
        }
        flow.bound = true;
        out.push(Emit::Note(Note::Bootstrapped {
            flow: key,
            peer: record.peer_id,
        }));
        if self.peer.is_some() {
            return;
        }
        let paths = all_paths(self.setup.n_fia);
        let m = self.cfg.measure;
        self.peer = Some(Peer {
            session: MeasurementSession::new(self.setup.id, record.peer_id, self.setup.n_fia, m),
            keepalive: Keepalive::new(&paths, m.keepalive_misses),
            counters: paths.iter().map(|p| (*p, PathCounters::default())).collect(),
            template: key,
            applied: PathId::Ip,
            seen: HashSet::new(),
            seen_order: VecDeque::new(),
        });
        out.push(Emit::Timer {
            after_ms: m.keepalive_interval_ms,
            timer: DenaTimer::Keepalive,
        });
        let actions = self.peer.as_mut().expect("just set").session.begin();
        self.apply_actions(actions, out);
    }

    pub fn on_timer(&mut self, _now: u64, timer: DenaTimer) -> Vec<Emit> {
        let mut out = Vec::new();
        match timer {
            DenaTimer::Session(id) => {
                if self.peer.is_some() {
                    self.run_session(Event::Timer(id), &mut out);
                }
            }
            DenaTimer::Bootstrap(key) => self.bootstrap_timeout(key, &mut out),
            DenaTimer::Keepalive => self.keepalive_tick(&mut out),
            DenaTimer::GatewayHello => self.gateway_hello(&mut out),
        }
        out
    }

    fn bootstrap_timeout(&mut self, key: FiveTuple, out: &mut Vec<Emit>) {
        let Some(ex) = self.flows.get_mut(&key).and_then(|f| f.exchange.as_mut()) else {
            return;
        };
        match ex.on_timeout() {
            Ok(Some(req)) => {
                self.send_control(out, PathId::Ip, key, &ControlBody::Bootstrap(req));
                out.push(Emit::Timer {
                    after_ms: self.cfg.measure.interval_ms,
                    timer: DenaTimer::Bootstrap(key),
                });
            }
            Ok(None) => {}
            Err(ControlError::Timeout(_)) => out.push(Emit::Note(Note::BootstrapFailed { flow: key })),
            Err(e) => out.push(Emit::Note(Note::Ignored(e.to_string()))),
        }
    }

    fn keepalive_tick(&mut self, out: &mut Vec<Emit>) {
        let Some(peer) = self.peer.as_mut() else {
            return;
        };
        let (probes, changes) = peer.keepalive.tick();
        let template = peer.template;
        for (path, seq) in probes {
            self.send_control(out, path, template, &ControlBody::KeepAliveReq { path, seq });
        }
        for (path, l) in changes {
            if l == Liveness::Unavailable {
                out.push(Emit::Note(Note::Liveness { path, up: false }));
                self.run_session(Event::KeepaliveFailure(path), out);
            }
        }
        out.push(Emit::Timer {
            after_ms: self.cfg.measure.keepalive_interval_ms,
            timer: DenaTimer::Keepalive,
        });
    }

    fn run_session(&mut self, ev: Event, out: &mut Vec<Emit>) {
        let peer = self.peer.as_mut().expect("session needs a peer");
        let before = (peer.session.state, peer.session.cycle);
        match peer.session.step(ev) {
            Ok(actions) => {
                self.note_transition(before, out);
                self.apply_actions(actions, out);
            }
            Err(e) => out.push(Emit::Note(Note::Ignored(e.to_string()))),
        }
    }

    fn note_transition(&self, (state, cycle): (State, u32), out: &mut Vec<Emit>) {
        let s = &self.peer.as_ref().expect("peer").session;
        if s.state != state || s.cycle != cycle {
            out.push(Emit::Note(Note::Transition {
                from: state,
                to: s.state,
                cycle: s.cycle,
            }));
        }
    }

    fn apply_actions(&mut self, actions: Vec<Action>, out: &mut Vec<Emit>) {
        for a in actions {
            let peer = self.peer.as_mut().expect("session needs a peer");
            match a {
                Action::Broadcast(body) => {
                    let template = peer.template;
                    let stop_ack = matches!(body, ControlBody::StopAck { .. });
                    for p in peer.session.available_paths() {
                        self.send_control(out, p, template, &body);
                    }
                    if stop_ack && self.peer.as_ref().expect("peer").session.role == Role::Responder {
                        self.run_session(Event::StopAckSent, out);
                    }
                }
                Action::Query { path, qid } => {
                    let body = ControlBody::MeasRequest {
                        cycle: peer.session.cycle,
                        qid,
                        path,
                        a_out: peer.counters.get(&path).copied().unwrap_or_default().out,
                    };
                    let template = peer.template;
                    self.send_control(out, path, template, &body);
                }
                Action::SetTimer { id, after_ms } => out.push(Emit::Timer {
                    after_ms,
                    timer: DenaTimer::Session(id),
                }),
                Action::Apply { path } => {
                    let changed = path != peer.applied;
                    peer.applied = path;
                    out.push(Emit::Note(Note::Decision { path, changed }));
                }
                Action::Report(ws) => out.extend(ws.into_iter().map(|w| Emit::Note(Note::Measured(w)))),
                Action::Completed { .. } | Action::Aborted { .. } => {}
            }
        }
    }
}
