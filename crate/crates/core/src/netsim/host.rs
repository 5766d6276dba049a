//! End-host payloads: each carries (flow, direction, sequence) so the
//! receiving host can check it got exactly what its peer sent.

use crate::control::MAGIC;

/// flow(2) | direction(1) | sequence(4)
pub const HEADER_LEN: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Forward,
    Reverse,
}

pub fn payload(flow: u16, dir: Dir, seq: u32, len: usize) -> Vec<u8> {
    let mut p = Vec::with_capacity(len.max(HEADER_LEN));
    p.extend_from_slice(&flow.to_be_bytes());
    p.push(dir as u8);
    p.extend_from_slice(&seq.to_be_bytes());
    let salt = seq.wrapping_mul(2_654_435_761) ^ flow as u32;
    p.extend((HEADER_LEN..len).map(|i| (salt.rotate_left(i as u32 % 32) as u8) ^ i as u8));
    p
}

pub fn parse_payload(p: &[u8]) -> Option<(u16, Dir, u32)> {
    if p.len() < HEADER_LEN {
        return None;
    }
    let flow = u16::from_be_bytes([p[0], p[1]]);
    let dir = match p[2] {
        0 => Dir::Forward,
        1 => Dir::Reverse,
        _ => return None,
    };
    let seq = u32::from_be_bytes([p[3], p[4], p[5], p[6]]);
    Some((flow, dir, seq))
}

pub fn is_control(p: &[u8]) -> bool {
    p.starts_with(MAGIC)
}
