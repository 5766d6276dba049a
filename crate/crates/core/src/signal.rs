//! Hidden signals carried in the TTL and IPID header fields.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::packet::SimPacket;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    A,
    B,
    C,
}

impl Signal {
    pub const ALL: [Signal; 3] = [Signal::A, Signal::B, Signal::C];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_char(c: char) -> Option<Signal> {
        match c.to_ascii_uppercase() {
            'A' => Some(Signal::A),
            'B' => Some(Signal::B),
            'C' => Some(Signal::C),
            _ => None,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Signal::A => 'A',
            Signal::B => 'B',
            Signal::C => 'C',
        }
    }
}

/// Parses a string of `A`/`B`/`C` characters; whitespace is ignored.
pub fn parse_signals(s: &str) -> Option<Vec<Signal>> {
    s.chars()
        .filter(|c| !c.is_whitespace())
        .map(Signal::from_char)
        .collect()
}

pub fn signals_to_string(s: &[Signal]) -> String {
    s.iter().map(|x| x.as_char()).collect()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("TTL values {0} and {1} are closer than 64")]
    TtlTooClose(u8, u8),
    #[error("IPID prefix {0:#05x} is zero or repeated")]
    BadIpidPrefix(u16),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Initial TTL per signal, indexed by `Signal::index`.
    pub ttl_values: [u8; 3],
    /// Upper 12 IPID bits per signal.
    pub ipid_msb12: [u16; 3],
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            ttl_values: [64, 128, 192],
            ipid_msb12: [0x001, 0x7FF, 0xFFF],
        }
    }
}

/// Width of the TTL band that still decodes to a signal after forwarding.
const TTL_BAND: u16 = 64;

impl CodecConfig {
    pub fn validate(&self) -> Result<(), CodecError> {
        for i in 0..3 {
            for j in i + 1..3 {
                let (a, b) = (self.ttl_values[i], self.ttl_values[j]);
                if (a as i16 - b as i16).unsigned_abs() < TTL_BAND {
                    return Err(CodecError::TtlTooClose(a, b));
                }
                if self.ipid_msb12[i] == self.ipid_msb12[j] {
                    return Err(CodecError::BadIpidPrefix(self.ipid_msb12[i]));
                }
            }
            let m = self.ipid_msb12[i];
            if m == 0 || m > 0xFFF {
                return Err(CodecError::BadIpidPrefix(m));
            }
        }
        Ok(())
    }

    pub fn encode_ttl(&self, sig: Signal) -> u8 {
        self.ttl_values[sig.index()]
    }

    /// A signal's band is `(initial - 64, initial]`.
    pub fn decode_ttl(&self, ttl: u8) -> Option<Signal> {
        Signal::ALL.into_iter().find(|s| {
            let v = self.ttl_values[s.index()] as u16;
            let t = ttl as u16;
            t <= v && t + TTL_BAND > v
        })
    }

    pub fn encode_ipid(&self, sig: Signal, low4: u8) -> u16 {
        (self.ipid_msb12[sig.index()] << 4) | (low4 as u16 & 0xF)
    }

    pub fn decode_ipid(&self, ipid: u16) -> Option<Signal> {
        let msb = ipid >> 4;
        Signal::ALL
            .into_iter()
            .find(|s| self.ipid_msb12[s.index()] == msb)
    }

    pub fn extract(&self, pkt: &SimPacket) -> (Option<Signal>, Option<Signal>) {
        (self.decode_ttl(pkt.ttl), self.decode_ipid(pkt.ipid))
    }

    /// Single decoded symbol for a packet; the IPID wins when both decode.
    pub fn decode_packet(&self, pkt: &SimPacket) -> Option<Signal> {
        let (t, i) = self.extract(pkt);
        i.or(t)
    }
}

pub fn encode_ttl(sig: Signal) -> u8 {
    CodecConfig::default().encode_ttl(sig)
}

pub fn decode_ttl(ttl: u8) -> Option<Signal> {
    CodecConfig::default().decode_ttl(ttl)
}

pub fn encode_ipid(sig: Signal, low4: u8) -> u16 {
    CodecConfig::default().encode_ipid(sig, low4)
}

pub fn decode_ipid(ipid: u16) -> Option<Signal> {
    CodecConfig::default().decode_ipid(ipid)
}

pub fn extract(pkt: &SimPacket) -> (Option<Signal>, Option<Signal>) {
    CodecConfig::default().extract(pkt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{FiveTuple, PROTO_TCP};
    use proptest::prelude::*;
    use Signal::*;

    fn pkt(ttl: u8, ipid: u16) -> SimPacket {
        SimPacket::new(FiveTuple::new(1, 1, 2, 2, PROTO_TCP), ttl, ipid, vec![], 0)
    }

    #[test]
    fn ttl_encoding() {
        assert_eq!(encode_ttl(A), 64);
        assert_eq!(encode_ttl(B), 128);
        assert_eq!(encode_ttl(C), 192);
    }

    #[test]
    fn ttl_bands() {
        assert_eq!(decode_ttl(64), Some(A));
        assert_eq!(decode_ttl(37), Some(A));
        assert_eq!(decode_ttl(1), Some(A));
        assert_eq!(decode_ttl(65), Some(B));
        assert_eq!(decode_ttl(128), Some(B));
        assert_eq!(decode_ttl(129), Some(C));
        assert_eq!(decode_ttl(192), Some(C));
        assert_eq!(decode_ttl(193), None);
        assert_eq!(decode_ttl(200), None);
        assert_eq!(decode_ttl(255), None);
    }

    #[test]
    fn ipid_encoding() {
        assert_eq!(encode_ipid(A, 0x5), 0x0015);
        assert_eq!(encode_ipid(B, 0x0), 0x7FF0);
        assert_eq!(encode_ipid(C, 0xF), 0xFFFF);
        assert_eq!(decode_ipid(0x7FF3), Some(B));
        assert_eq!(decode_ipid(0x1234), None);
        assert_eq!(decode_ipid(0x001A), Some(A));
        assert_eq!(decode_ipid(0x0000), None);
    }

    #[test]
    fn extract_both_fields() {
        assert_eq!(extract(&pkt(128, 0x7FF0)), (Some(B), Some(B)));
        assert_eq!(extract(&pkt(50, 0x4242)), (Some(A), None));
        assert_eq!(extract(&pkt(255, 0xFFF0)), (None, Some(C)));
        let cfg = CodecConfig::default();
        assert_eq!(cfg.decode_packet(&pkt(64, 0xFFF2)), Some(C));
        assert_eq!(cfg.decode_packet(&pkt(255, 0x9999)), None);
    }

    #[test]
    fn config_validation() {
        assert!(CodecConfig::default().validate().is_ok());
        let bad = CodecConfig {
            ttl_values: [64, 100, 192],
            ..Default::default()
        };
        assert!(matches!(bad.validate(), Err(CodecError::TtlTooClose(64, 100))));
        let bad = CodecConfig {
            ipid_msb12: [0, 0x7FF, 0xFFF],
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn incrementing_ipid_leaves_class_after_sixteen() {
        for start in 0..=u16::MAX {
            let mut run = 0u32;
            let mut longest = 0u32;
            let mut class = None;
            for k in 0..40u16 {
                let d = decode_ipid(start.wrapping_add(k));
                if d.is_some() && d == class {
                    run += 1;
                } else {
                    run = u32::from(d.is_some());
                }
                class = d;
                longest = longest.max(run);
            }
            assert!(longest <= 16, "start {start:#x}");
        }
    }

    fn arb_signal() -> impl Strategy<Value = Signal> {
        prop_oneof![Just(A), Just(B), Just(C)]
    }

    proptest! {
        #[test]
        fn ttl_survives_fewer_than_64_hops(s in arb_signal(), h in 0u8..64) {
            prop_assert_eq!(decode_ttl(encode_ttl(s) - h), Some(s));
        }

        #[test]
        fn ipid_round_trip(s in arb_signal(), k in 0u8..16) {
            prop_assert_eq!(decode_ipid(encode_ipid(s, k)), Some(s));
        }

        #[test]
        fn signal_string_round_trip(v in proptest::collection::vec(arb_signal(), 0..50)) {
            prop_assert_eq!(parse_signals(&signals_to_string(&v)), Some(v));
        }
    }
}
