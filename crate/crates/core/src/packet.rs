//! Simulated IP packets, flow identity and tunnel encapsulation.

use std::fmt;

use thiserror::Error;

/// IPv4 address as a plain integer.
pub type Addr = u32;

/// Maximum number of stacked tunnel headers: access tunnel plus overlay header.
pub const MAX_ENCAP_DEPTH: usize = 2;

pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

/// Builds an address from dotted-quad octets.
pub const fn addr(a: u8, b: u8, c: u8, d: u8) -> Addr {
    u32::from_be_bytes([a, b, c, d])
}

pub fn fmt_addr(a: Addr) -> String {
    let [x, y, z, w] = a.to_be_bytes();
    format!("{x}.{y}.{z}.{w}")
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PacketError {
    #[error("encapsulation depth would exceed {MAX_ENCAP_DEPTH}")]
    DepthExceeded,
    #[error("packet carries no encapsulation header")]
    NotEncapsulated,
}

/// Transport 5-tuple identifying a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FiveTuple {
    pub src_addr: Addr,
    pub dst_addr: Addr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: u8,
}

impl FiveTuple {
    pub fn new(src_addr: Addr, src_port: u16, dst_addr: Addr, dst_port: u16, protocol: u8) -> Self {
        Self {
            src_addr,
            dst_addr,
            src_port,
            dst_port,
            protocol,
        }
    }

    /// The same flow seen from the other end.
    pub fn reversed(&self) -> Self {
        Self {
            src_addr: self.dst_addr,
            dst_addr: self.src_addr,
            src_port: self.dst_port,
            dst_port: self.src_port,
            protocol: self.protocol,
        }
    }
}

impl fmt::Display for FiveTuple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}:{} -> {}:{} ({})",
            fmt_addr(self.src_addr),
            self.src_port,
            fmt_addr(self.dst_addr),
            self.dst_port,
            self.protocol
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EncapKind {
    /// Plain IP-in-IP access tunnel between a device and its gateway.
    IpTunnel,
    /// Overlay header of the fail-over architecture.
    FiaOverlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EncapHeader {
    pub kind: EncapKind,
    pub endpoint_src: Addr,
    pub endpoint_dst: Addr,
    /// Overlay path index. On an access tunnel it names the overlay path
    /// the gateway should use (or the one the packet came in on).
    pub fia_path_id: u8,
}

impl EncapHeader {
    pub fn ip_tunnel(src: Addr, dst: Addr) -> Self {
        Self {
            kind: EncapKind::IpTunnel,
            endpoint_src: src,
            endpoint_dst: dst,
            fia_path_id: 0,
        }
    }

    pub fn overlay(src: Addr, dst: Addr, path: u8) -> Self {
        Self {
            kind: EncapKind::FiaOverlay,
            endpoint_src: src,
            endpoint_dst: dst,
            fia_path_id: path,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimPacket {
    pub tuple: FiveTuple,
    pub ttl: u8,
    pub ipid: u16,
    pub payload: Vec<u8>,
    /// Outermost header last.
    pub encap: Vec<EncapHeader>,
    /// Harness bookkeeping id; protocol logic must not depend on it except
    /// for duplicate suppression of replicated samples.
    pub seq_no: u64,
}

impl SimPacket {
    pub fn new(tuple: FiveTuple, ttl: u8, ipid: u16, payload: Vec<u8>, seq_no: u64) -> Self {
        Self {
            tuple,
            ttl,
            ipid,
            payload,
            encap: Vec::new(),
            seq_no,
        }
    }

    pub fn depth(&self) -> usize {
        self.encap.len()
    }

    pub fn outer(&self) -> Option<&EncapHeader> {
        self.encap.last()
    }
}

pub fn flow_key(pkt: &SimPacket) -> FiveTuple {
    pkt.tuple
}

pub fn encapsulate(mut pkt: SimPacket, hdr: EncapHeader) -> Result<SimPacket, PacketError> {
    if pkt.encap.len() >= MAX_ENCAP_DEPTH {
        return Err(PacketError::DepthExceeded);
    }
    pkt.encap.push(hdr);
    Ok(pkt)
}

/// Pops the outermost header.
pub fn decapsulate(mut pkt: SimPacket) -> Result<(SimPacket, EncapHeader), PacketError> {
    let hdr = pkt.encap.pop().ok_or(PacketError::NotEncapsulated)?;
    Ok((pkt, hdr))
}
