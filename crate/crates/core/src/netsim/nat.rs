//! Port-restricted NAT in front of one site.
//!
//! Plain flows get a public port per (private endpoint, remote endpoint).
//! Access-tunnel traffic towards the site's gateway opens a tunnel mapping
//! that lets the gateway reach the device behind the NAT.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::packet::{Addr, EncapKind, SimPacket};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NatError {
    #[error("no NAT mapping for inbound packet")]
    NoMapping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Outbound,
    Inbound,
}

type Remote = (u8, Addr, u16);

#[derive(Debug, Clone, Copy)]
struct Binding {
    private: (Addr, u16),
    public_port: u16,
    last_used: u64,
}

#[derive(Debug, Clone)]
pub struct NatState {
    pub public_addr: Addr,
    pub timeout_ms: u64,
    next_port: u16,
    out: BTreeMap<((Addr, u16), Remote), u16>,
    inb: BTreeMap<(u16, Remote), Binding>,
    /// Gateway address -> (private device address, last refresh).
    tunnels: BTreeMap<Addr, (Addr, u64)>,
}

pub const FIRST_PORT: u16 = 40000;

impl NatState {
    pub fn new(public_addr: Addr, timeout_ms: u64) -> Self {
        Self {
            public_addr,
            timeout_ms,
            next_port: FIRST_PORT,
            out: BTreeMap::new(),
            inb: BTreeMap::new(),
            tunnels: BTreeMap::new(),
        }
    }

    fn alive(&self, last: u64, now: u64) -> bool {
        now.saturating_sub(last) <= self.timeout_ms
    }

    pub fn forward(&mut self, pkt: SimPacket, dir: Direction, now: u64) -> Result<SimPacket, NatError> {
        match dir {
            Direction::Outbound => Ok(self.outbound(pkt, now)),
            Direction::Inbound => self.inbound(pkt, now),
        }
    }

    fn outbound(&mut self, mut pkt: SimPacket, now: u64) -> SimPacket {
        if let Some(h) = pkt.encap.last_mut() {
            if h.kind == EncapKind::IpTunnel {
                self.tunnels.insert(h.endpoint_dst, (h.endpoint_src, now));
                h.endpoint_src = self.public_addr;
            }
            return pkt;
        }
        let t = pkt.tuple;
        let private = (t.src_addr, t.src_port);
        let remote = (t.protocol, t.dst_addr, t.dst_port);
        let port = match self.out.get(&(private, remote)) {
            Some(&p) if self.inb.get(&(p, remote)).is_some_and(|b| self.alive(b.last_used, now)) => p,
            _ => {
                let p = self.next_port;
                self.next_port = self.next_port.checked_add(1).unwrap_or(FIRST_PORT);
                self.out.insert((private, remote), p);
                p
            }
        };
        self.inb.insert(
            (port, remote),
            Binding {
                private,
                public_port: port,
                last_used: now,
            },
        );
        pkt.tuple.src_addr = self.public_addr;
        pkt.tuple.src_port = port;
        pkt
    }

    fn inbound(&mut self, mut pkt: SimPacket, now: u64) -> Result<SimPacket, NatError> {
        if let Some(h) = pkt.encap.last_mut() {
            if h.kind != EncapKind::IpTunnel || h.endpoint_dst != self.public_addr {
                return Err(NatError::NoMapping);
            }
            let &(private, last) = self.tunnels.get(&h.endpoint_src).ok_or(NatError::NoMapping)?;
            if !self.alive(last, now) {
                return Err(NatError::NoMapping);
            }
            h.endpoint_dst = private;
            return Ok(pkt);
        }
        let t = pkt.tuple;
        if t.dst_addr != self.public_addr {
            return Err(NatError::NoMapping);
        }
        let remote = (t.protocol, t.src_addr, t.src_port);
        let b = self.inb.get_mut(&(t.dst_port, remote)).ok_or(NatError::NoMapping)?;
        if now.saturating_sub(b.last_used) > self.timeout_ms {
            return Err(NatError::NoMapping);
        }
        b.last_used = now;
        debug_assert_eq!(b.public_port, t.dst_port);
        pkt.tuple.dst_addr = b.private.0;
        pkt.tuple.dst_port = b.private.1;
        Ok(pkt)
    }

    /// Public endpoint currently bound to a private endpoint for a remote.
    pub fn public_endpoint(&self, private: (Addr, u16), protocol: u8, remote: (Addr, u16)) -> Option<(Addr, u16)> {
        self.out
            .get(&(private, (protocol, remote.0, remote.1)))
            .map(|&p| (self.public_addr, p))
    }
}

/// Free-function form of [`NatState::forward`].
pub fn nat_forward(nat: &mut NatState, pkt: SimPacket, dir: Direction, now: u64) -> Result<SimPacket, NatError> {
    nat.forward(pkt, dir, now)
}
