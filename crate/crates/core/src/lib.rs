//! Edge availability devices: covert peer discovery in IP header fields,
//! in-band loss measurement with automatic fail-over to an overlay path, a
//! deterministic packet simulator, and a policy-routing hijack simulator.

pub mod discovery;
pub mod packet;
pub mod signal;
pub mod control;
pub mod measure;
pub mod select;
pub mod config;
pub mod netsim;
pub mod bgp;

/// Derives independent stream seeds from the run seed.
pub fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
