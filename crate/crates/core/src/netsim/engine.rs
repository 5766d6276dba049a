//! Discrete-event loop over the two-site topology.
//!
//! Host ── DENA ── [NAT] ──┬── IP channel ───────────────┬── [NAT] ── DENA ── Host
//!                         └─ gateway ── overlay i ── gateway ─┘
//!
//! The LAN and the access links to the gateways are instantaneous; all
//! delay, loss, reordering and duplication happens on the wide-area channels.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use super::channel::{Channel, ChannelModel, Outcome};
use super::dena::{Dena, DenaSetup, DenaTimer, Emit, Note, WanKind};
use super::host::{self, Dir};
use super::nat::{Direction, NatState};
use super::scenario::{parse_path, plan, FlowConfig, Scenario};
use super::trace::*;
use super::NetsimError;
use crate::measure::{all_paths, PathId};
use crate::sub_seed;
use crate::packet::{decapsulate, encapsulate, Addr, EncapHeader, EncapKind, FiveTuple, SimPacket};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Keep the per-packet event log.
    pub record_events: bool,
    /// Keep per-channel logs of counted data and query markers.
    pub record_channel_log: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            record_events: true,
            record_channel_log: false,
        }
    }
}

/// Runs a scenario to its end.
pub fn run(scenario: &Scenario, seed: u64) -> Result<Trace, NetsimError> {
    run_with(scenario, seed, RunOptions::default())
}

pub fn run_with(scenario: &Scenario, seed: u64, opts: RunOptions) -> Result<Trace, NetsimError> {
    scenario.validate()?;
    let mut sim = Sim::new(scenario, seed, opts);
    sim.run();
    Ok(sim.finish())
}

#[derive(Debug)]
enum Ev {
    HostTick { flow: usize, dir: Dir, k: u32 },
    Arrive { path: PathId, from: usize, pkt: SimPacket },
    Flush { path: PathId, from: usize },
    Timer { site: usize, timer: DenaTimer },
    Mutate(usize),
}

struct Scheduled {
    at: u64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Scheduled {
    fn eq(&self, o: &Self) -> bool {
        (self.at, self.seq) == (o.at, o.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, o: &Self) -> Ordering {
        (self.at, self.seq).cmp(&(o.at, o.seq))
    }
}

struct Link {
    ch: Channel,
    pending: u64,
    ttl_expired: u64,
}

struct Gateway {
    addr: Addr,
    /// Public address its device was last seen at.
    customer: Option<Addr>,
}

struct FlowRt {
    cfg: FlowConfig,
    stop_ms: u64,
    tuple: FiveTuple,
    /// Answer tuple, known once the first packet arrived.
    reply: Option<FiveTuple>,
    reply_start: u64,
}

struct Sim<'a> {
    sc: &'a Scenario,
    opts: RunOptions,
    now: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    next_ev: u64,
    next_seq_no: u64,
    links: BTreeMap<(PathId, usize), Link>,
    nats: [Option<NatState>; 2],
    gateways: [Option<Gateway>; 2],
    denas: [Option<Dena>; 2],
    flows: Vec<FlowRt>,
    ipid: BTreeMap<(usize, u8), u16>,
    trace: Trace,
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario, seed: u64, opts: RunOptions) -> Self {
        let mut links = BTreeMap::new();
        for from in 0..2 {
            for p in all_paths(sc.n_fia) {
                let model = if p == PathId::Ip { sc.ip } else { sc.fia };
                let tag = 1000 + from as u64 * 1000 + path_tag(p);
                links.insert(
                    (p, from),
                    Link {
                        ch: Channel::new(model, sub_seed(seed, tag)),
                        pending: 0,
                        ttl_expired: 0,
                    },
                );
            }
        }
        let nat = |s: usize| sc.sites[s].nat.then(|| NatState::new(plan::nat_public(s), sc.sites[s].nat_timeout_ms));
        let gw = |s: usize| {
            (sc.n_fia > 0).then(|| Gateway {
                addr: plan::gateway_addr(s),
                customer: None,
            })
        };
        let dena = |s: usize| {
            let site = &sc.sites[s];
            site.dena.then(|| {
                let setup = DenaSetup {
                    id: s as u64 + 1,
                    addr: plan::dena_addr(s, site.nat),
                    gateway: (sc.n_fia > 0).then(|| plan::gateway_addr(s)),
                    behind_nat: site.nat,
                    n_fia: sc.n_fia,
                    fia_isd: site.fia_isd,
                    fia_aid: if site.fia_aid == 0 { s as u32 + 1 } else { site.fia_aid },
                };
                Dena::new(setup, sc.dena, sub_seed(seed, 10 + s as u64))
            })
        };
        let flows = sc
            .flows
            .iter()
            .map(|f| {
                let to = 1 - f.from;
                FlowRt {
                    cfg: f.clone(),
                    stop_ms: f.stop_ms.unwrap_or(sc.duration_ms).min(sc.duration_ms),
                    tuple: FiveTuple::new(
                        plan::host_addr(f.from, f.src_host, sc.sites[f.from].nat),
                        f.src_port,
                        plan::host_addr(to, f.dst_host, sc.sites[to].nat),
                        f.dst_port,
                        f.transport.protocol(),
                    ),
                    reply: None,
                    reply_start: 0,
                }
            })
            .collect();
        let mut ipid = BTreeMap::new();
        for (s, site) in sc.sites.iter().enumerate() {
            for h in 0..site.hosts {
                ipid.insert((s, h), sub_seed(seed, 100 + s as u64 * 256 + h as u64) as u16);
            }
        }
        let trace = Trace {
            duration_ms: sc.duration_ms,
            ..Trace::default()
        };
        Self {
            sc,
            opts,
            now: 0,
            queue: BinaryHeap::new(),
            next_ev: 0,
            next_seq_no: 1,
            links,
            nats: [nat(0), nat(1)],
            gateways: [gw(0), gw(1)],
            denas: [dena(0), dena(1)],
            flows,
            ipid,
            trace,
        }
    }

    fn schedule(&mut self, at: u64, ev: Ev) {
        self.next_ev += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            seq: self.next_ev,
            ev,
        }));
    }

    fn record(&mut self, node: NodeId, event: EventKind, path: Option<PathId>, seq_no: u64) {
        if self.opts.record_events {
            self.trace.events.push(TraceEvent {
                time_ms: self.now,
                node,
                event,
                path,
                seq_no,
            });
        }
    }

    fn run(&mut self) {
        for i in 0..self.sc.schedule.len() {
            self.schedule(self.sc.schedule[i].at_ms, Ev::Mutate(i));
        }
        for s in 0..2 {
            if let Some(d) = self.denas[s].as_mut() {
                let emits = d.start();
                self.handle_emits(s, emits);
            }
        }
        for i in 0..self.flows.len() {
            let at = self.flows[i].cfg.start_ms;
            if at < self.flows[i].stop_ms {
                self.schedule(
                    at,
                    Ev::HostTick {
                        flow: i,
                        dir: Dir::Forward,
                        k: 0,
                    },
                );
            }
        }
        while let Some(Reverse(s)) = self.queue.peek() {
            if s.at > self.sc.duration_ms {
                break;
            }
            let Reverse(s) = self.queue.pop().expect("peeked");
            self.now = s.at;
            match s.ev {
                Ev::HostTick { flow, dir, k } => self.host_tick(flow, dir, k),
                Ev::Arrive { path, from, pkt } => self.arrive(path, from, pkt),
                Ev::Flush { path, from } => {
                    let now = self.now;
                    let link = self.links.get_mut(&(path, from)).expect("link");
                    if let Some((at, pkt)) = link.ch.flush(now) {
                        link.pending += 1;
                        self.schedule(at, Ev::Arrive { path, from, pkt });
                    }
                }
                Ev::Timer { site, timer } => {
                    let now = self.now;
                    let emits = self.denas[site].as_mut().expect("timer owner").on_timer(now, timer);
                    self.handle_emits(site, emits);
                }
                Ev::Mutate(i) => self.mutate(i),
            }
        }
    }

    fn mutate(&mut self, i: usize) {
        let m = &self.sc.schedule[i];
        let path = parse_path(&m.path).expect("validated");
        for from in 0..2 {
            if m.direction.covers(from) {
                let link = self.links.get_mut(&(path, from)).expect("validated path");
                let mut model: ChannelModel = link.ch.model;
                m.apply(&mut model);
                link.ch.set_model(model);
            }
        }
    }

    fn host_tick(&mut self, fi: usize, dir: Dir, k: u32) {
        let f = &self.flows[fi];
        let (site, host, tuple, rate, start) = match dir {
            Dir::Forward => (f.cfg.from, f.cfg.src_host, f.tuple, f.cfg.rate_pps, f.cfg.start_ms),
            Dir::Reverse => (
                1 - f.cfg.from,
                f.cfg.dst_host,
                f.reply.expect("reply started"),
                f.cfg.reverse_rate_pps,
                f.reply_start,
            ),
        };
        let stop = f.stop_ms;
        let payload = host::payload(fi as u16, dir, k, f.cfg.payload_bytes);
        let ipid = self.ipid.get_mut(&(site, host)).expect("host exists");
        *ipid = ipid.wrapping_add(1);
        let seq_no = self.next_seq_no;
        self.next_seq_no += 1;
        let pkt = SimPacket::new(tuple, 64, *ipid, payload, seq_no);
        self.trace.hosts.sent += 1;
        self.record(NodeId::Host { site, host }, EventKind::Send, None, seq_no);

        let next = start + (k as u64 + 1) * 1000 / rate as u64;
        if next < stop {
            self.schedule(next, Ev::HostTick { flow: fi, dir, k: k + 1 });
        }

        let now = self.now;
        match self.denas[site].as_mut() {
            Some(d) => {
                let emits = d.from_host(now, pkt);
                self.handle_emits(site, emits);
            }
            None => self.wan_out(
                site,
                PathId::Ip,
                pkt,
                WanKind::Data {
                    counted: false,
                    replica: false,
                },
            ),
        }
    }

    fn handle_emits(&mut self, site: usize, emits: Vec<Emit>) {
        for e in emits {
            match e {
                Emit::Wan { path, pkt, kind } => {
                    if !matches!(kind, WanKind::Data { .. }) {
                        self.record(NodeId::Dena(site), EventKind::Control, Some(path), pkt.seq_no);
                    }
                    self.wan_out(site, path, pkt, kind);
                }
                Emit::Gateway(pkt) => {
                    let Some(pkt) = self.nat_out(site, pkt) else { continue };
                    if let (Some(gw), Some(h)) = (self.gateways[site].as_mut(), pkt.outer()) {
                        if h.kind == EncapKind::IpTunnel && h.endpoint_dst == gw.addr {
                            gw.customer = Some(h.endpoint_src);
                        }
                    }
                }
                Emit::Host(pkt) => self.host_receive(site, pkt),
                Emit::Timer { after_ms, timer } => self.schedule(self.now + after_ms, Ev::Timer { site, timer }),
                Emit::Note(n) => self.note(site, n),
            }
        }
    }

    fn note(&mut self, site: usize, n: Note) {
        let t = self.now;
        match n {
            Note::Stamped { seq_no } => self.record(NodeId::Dena(site), EventKind::Stamp, Some(PathId::Ip), seq_no),
            Note::Detected { flow, distance } => self.trace.detections.push(DetectionRecord {
                time_ms: t,
                site,
                flow,
                distance,
            }),
            Note::Bootstrapped { flow, peer } => self.trace.bootstraps.push(BootstrapRecord {
                time_ms: t,
                site,
                flow,
                peer: Some(peer),
            }),
            Note::BootstrapFailed { flow } => self.trace.bootstraps.push(BootstrapRecord {
                time_ms: t,
                site,
                flow,
                peer: None,
            }),
            Note::Transition { from, to, cycle } => self.trace.transitions.push(TransitionRecord {
                time_ms: t,
                site,
                from,
                to,
                cycle,
            }),
            Note::Decision { path, changed } => self.trace.decisions.push(DecisionRecord {
                time_ms: t,
                site,
                path,
                changed,
            }),
            Note::Measured(window) => self.trace.measurements.push(MeasurementRecord {
                time_ms: t,
                site,
                window,
            }),
            Note::Liveness { path, up } => self.trace.liveness.push(LivenessRecord {
                time_ms: t,
                site,
                path,
                up,
            }),
            Note::Duplicate { seq_no } => self.record(NodeId::Dena(site), EventKind::Drop, None, seq_no),
            Note::Dropped { .. } => self.record(NodeId::Dena(site), EventKind::Drop, None, 0),
            Note::Ignored(_) => self.trace.ignored_messages += 1,
        }
    }

    fn nat_out(&mut self, site: usize, pkt: SimPacket) -> Option<SimPacket> {
        let now = self.now;
        match self.nats[site].as_mut() {
            Some(nat) => nat.forward(pkt, Direction::Outbound, now).ok(),
            None => Some(pkt),
        }
    }

    fn wan_out(&mut self, site: usize, path: PathId, pkt: SimPacket, kind: WanKind) {
        let Some(mut pkt) = self.nat_out(site, pkt) else { return };
        let seq_no = pkt.seq_no;
        match path {
            PathId::Ip => {
                if self.sc.ip_scrub_ttl {
                    pkt.ttl = 64;
                }
                pkt.ttl = pkt.ttl.saturating_sub(self.sc.ip_hops);
                if pkt.ttl == 0 {
                    self.links.get_mut(&(path, site)).expect("link").ttl_expired += 1;
                    self.record(NodeId::Channel { path, from: site }, EventKind::Drop, Some(path), seq_no);
                    return;
                }
            }
            PathId::Fia(i) => {
                let Some(gw) = self.gateways[site].as_mut() else { return };
                let ok = pkt
                    .outer()
                    .is_some_and(|h| h.kind == EncapKind::IpTunnel && h.endpoint_dst == gw.addr);
                if !ok {
                    self.record(NodeId::Gateway(site), EventKind::Drop, Some(path), seq_no);
                    return;
                }
                gw.customer = pkt.outer().map(|h| h.endpoint_src);
                let hdr = EncapHeader::overlay(gw.addr, plan::gateway_addr(1 - site), i);
                pkt = encapsulate(pkt, hdr).expect("access tunnel plus overlay fits");
            }
        }
        self.transmit(path, site, pkt, kind);
    }

    fn transmit(&mut self, path: PathId, from: usize, pkt: SimPacket, kind: WanKind) {
        let node = NodeId::Channel { path, from };
        let seq_no = pkt.seq_no;
        let now = self.now;
        self.record(node, EventKind::Send, Some(path), seq_no);
        let link = self.links.get_mut(&(path, from)).expect("link");
        let outcome = link.ch.transmit(now, pkt);
        let dropped = outcome == Outcome::Dropped;
        if self.opts.record_channel_log {
            let entry = match kind {
                WanKind::Data { counted: true, .. } => Some(LogEntry::Data { dropped }),
                WanKind::Marker { reply, qid } => Some(LogEntry::Marker { reply, qid, dropped }),
                _ => None,
            };
            if let Some(e) = entry {
                self.trace.channel_logs.entry((path, from)).or_default().push(e);
            }
        }
        match outcome {
            Outcome::Dropped => self.record(node, EventKind::Drop, Some(path), seq_no),
            Outcome::Held { flush_at } => self.schedule(flush_at, Ev::Flush { path, from }),
            Outcome::Deliver(v) => {
                let copies = v.iter().filter(|(_, p)| p.seq_no == seq_no).count();
                self.links.get_mut(&(path, from)).expect("link").pending += v.len() as u64;
                if copies > 1 {
                    self.record(node, EventKind::Duplicate, Some(path), seq_no);
                }
                for (at, p) in v {
                    self.schedule(at, Ev::Arrive { path, from, pkt: p });
                }
            }
        }
    }

    fn arrive(&mut self, path: PathId, from: usize, pkt: SimPacket) {
        let to = 1 - from;
        let link = self.links.get_mut(&(path, from)).expect("link");
        link.pending -= 1;
        link.ch.stats.delivered += 1;
        self.record(NodeId::Channel { path, from }, EventKind::Deliver, Some(path), pkt.seq_no);
        let inner_payload = &pkt.payload;
        if !host::is_control(inner_payload) && host::parse_payload(inner_payload).is_some() {
            *self.trace.throughput.entry((self.now / 1000, path)).or_default() += inner_payload.len() as u64;
        }
        let pkt = match path {
            PathId::Ip => pkt,
            PathId::Fia(i) => {
                let Some(gw) = self.gateways[to].as_ref() else { return };
                let (gw_addr, customer) = (gw.addr, gw.customer);
                let Some(pkt) = decapsulate(pkt)
                    .ok()
                    .filter(|(_, h)| h.kind == EncapKind::FiaOverlay && h.endpoint_dst == gw_addr)
                    .and_then(|(p, _)| decapsulate(p).ok())
                    .map(|(p, _)| p)
                else {
                    self.record(NodeId::Gateway(to), EventKind::Drop, Some(path), 0);
                    return;
                };
                let Some(customer) = customer else {
                    self.record(NodeId::Gateway(to), EventKind::Drop, Some(path), pkt.seq_no);
                    return;
                };
                let mut hdr = EncapHeader::ip_tunnel(gw_addr, customer);
                hdr.fia_path_id = i;
                encapsulate(pkt, hdr).expect("depth 1")
            }
        };
        let seq_no = pkt.seq_no;
        let now = self.now;
        let pkt = match self.nats[to].as_mut() {
            Some(nat) => match nat.forward(pkt, Direction::Inbound, now) {
                Ok(p) => p,
                Err(_) => {
                    self.record(NodeId::Nat(to), EventKind::Drop, Some(path), seq_no);
                    return;
                }
            },
            None => pkt,
        };
        match self.denas[to].as_mut() {
            Some(d) => {
                let emits = d.from_wan(now, pkt);
                self.handle_emits(to, emits);
            }
            None => self.host_receive(to, pkt),
        }
    }

    fn host_receive(&mut self, site: usize, pkt: SimPacket) {
        let nat = self.sc.sites[site].nat;
        let Some(host) = (0..self.sc.sites[site].hosts).find(|h| plan::host_addr(site, *h, nat) == pkt.tuple.dst_addr)
        else {
            self.record(NodeId::Dena(site), EventKind::Drop, None, pkt.seq_no);
            return;
        };
        self.record(NodeId::Host { site, host }, EventKind::Deliver, None, pkt.seq_no);
        self.trace.hosts.delivered += 1;
        if host::is_control(&pkt.payload) {
            self.trace.hosts.control_leaks += 1;
            return;
        }
        if !pkt.encap.is_empty() {
            self.trace.hosts.transparency_violations += 1;
            return;
        }
        let Some((fi, dir, k)) = host::parse_payload(&pkt.payload) else {
            self.trace.hosts.transparency_violations += 1;
            return;
        };
        let Some(f) = self.flows.get(fi as usize) else {
            self.trace.hosts.transparency_violations += 1;
            return;
        };
        let expected_payload = host::payload(fi, dir, k, f.cfg.payload_bytes);
        let expected = self.expected_tuple(fi as usize, dir);
        if pkt.payload != expected_payload || Some(pkt.tuple) != expected {
            self.trace.hosts.transparency_violations += 1;
            return;
        }
        *self.trace.hosts.goodput.entry(self.now / 1000).or_default() += pkt.payload.len() as u64;
        let f = &mut self.flows[fi as usize];
        if dir == Dir::Forward && f.reply.is_none() && f.cfg.reverse_rate_pps > 0 {
            f.reply = Some(pkt.tuple.reversed());
            f.reply_start = self.now;
            if self.now < f.stop_ms {
                self.schedule(
                    self.now,
                    Ev::HostTick {
                        flow: fi as usize,
                        dir: Dir::Reverse,
                        k: 0,
                    },
                );
            }
        }
    }

    /// The tuple a receiving host must see: the sender's endpoint as its
    /// NAT presents it, if any, and the receiver's own endpoint.
    fn expected_tuple(&self, fi: usize, dir: Dir) -> Option<FiveTuple> {
        let f = &self.flows[fi];
        let t = f.tuple;
        let public_src = match self.nats[f.cfg.from].as_ref() {
            Some(nat) => nat.public_endpoint((t.src_addr, t.src_port), t.protocol, (t.dst_addr, t.dst_port))?,
            None => (t.src_addr, t.src_port),
        };
        let wire = FiveTuple::new(public_src.0, public_src.1, t.dst_addr, t.dst_port, t.protocol);
        Some(match dir {
            Dir::Forward => wire,
            Dir::Reverse => t.reversed(),
        })
    }

    fn finish(mut self) -> Trace {
        for ((path, from), link) in &self.links {
            self.trace.channels.push(ChannelSummary {
                path: *path,
                from: *from,
                stats: link.ch.stats,
                ttl_expired: link.ttl_expired,
                in_flight: link.pending + link.ch.has_held() as u64,
            });
        }
        self.trace.replication = self
            .denas
            .iter()
            .map(|d| d.as_ref().map(|d| d.replication.clone()).unwrap_or_default())
            .collect();
        self.trace
    }
}

fn path_tag(p: PathId) -> u64 {
    match p {
        PathId::Ip => 0,
        PathId::Fia(i) => 1 + i as u64,
    }
}
