//! Scenario files: two sites joined by an IP path and optional overlay paths.

use serde::{Deserialize, Serialize};

use super::channel::ChannelModel;
use super::NetsimError;
use crate::config::DenaConfig;
use crate::measure::PathId;
use crate::packet::{addr, Addr, PROTO_TCP, PROTO_UDP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    pub fn protocol(self) -> u8 {
        match self {
            Transport::Tcp => PROTO_TCP,
            Transport::Udp => PROTO_UDP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SiteConfig {
    pub hosts: u8,
    /// Hosts sit behind a NAT with this public address.
    pub nat: bool,
    /// A DENA guards the site.
    pub dena: bool,
    pub nat_timeout_ms: u64,
    pub fia_isd: u16,
    pub fia_aid: u32,
}

impl Default for SiteConfig {
    fn default() -> Self {
        Self {
            hosts: 1,
            nat: false,
            dena: true,
            nat_timeout_ms: 300_000,
            fia_isd: 1,
            fia_aid: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FlowConfig {
    /// Site of the sending host; the receiver lives at the other site.
    pub from: usize,
    pub src_host: u8,
    pub dst_host: u8,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    pub rate_pps: u32,
    /// Answer stream, started when the first packet reaches the receiver.
    pub reverse_rate_pps: u32,
    pub payload_bytes: usize,
    pub start_ms: u64,
    /// Defaults to the end of the run.
    pub stop_ms: Option<u64>,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            from: 0,
            src_host: 0,
            dst_host: 0,
            src_port: 5000,
            dst_port: 80,
            transport: Transport::Tcp,
            rate_pps: 100,
            reverse_rate_pps: 0,
            payload_bytes: 512,
            start_ms: 0,
            stop_ms: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkDirection {
    Both,
    /// From site 0 to site 1.
    Forward,
    Reverse,
}

impl LinkDirection {
    pub fn covers(self, from_site: usize) -> bool {
        match self {
            LinkDirection::Both => true,
            LinkDirection::Forward => from_site == 0,
            LinkDirection::Reverse => from_site == 1,
        }
    }
}

/// Timed change to a path's channel. Unset fields keep their value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mutation {
    pub at_ms: u64,
    /// `"ip"` or `"fiaN"`.
    pub path: String,
    #[serde(default = "both")]
    pub direction: LinkDirection,
    pub loss_prob: Option<f64>,
    pub reorder_prob: Option<f64>,
    pub dup_prob: Option<f64>,
    pub delay_ms: Option<u64>,
}

fn both() -> LinkDirection {
    LinkDirection::Both
}

impl Mutation {
    pub fn apply(&self, m: &mut ChannelModel) {
        if let Some(v) = self.loss_prob {
            m.loss_prob = v;
        }
        if let Some(v) = self.reorder_prob {
            m.reorder_prob = v;
        }
        if let Some(v) = self.dup_prob {
            m.dup_prob = v;
        }
        if let Some(v) = self.delay_ms {
            m.delay_ms = v;
        }
    }
}

pub fn parse_path(s: &str) -> Option<PathId> {
    if s == "ip" {
        return Some(PathId::Ip);
    }
    s.strip_prefix("fia")?.parse().ok().map(PathId::Fia)
}

pub fn path_name(p: PathId) -> String {
    match p {
        PathId::Ip => "ip".into(),
        PathId::Fia(i) => format!("fia{i}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub duration_ms: u64,
    pub n_fia: u8,
    pub ip: ChannelModel,
    /// Router hops on the IP path; each takes one off the TTL.
    pub ip_hops: u8,
    /// A middlebox on the IP path resets TTLs to 64.
    pub ip_scrub_ttl: bool,
    pub fia: ChannelModel,
    pub sites: Vec<SiteConfig>,
    pub flows: Vec<FlowConfig>,
    pub schedule: Vec<Mutation>,
    pub dena: DenaConfig,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            duration_ms: 10_000,
            n_fia: 1,
            ip: ChannelModel::default(),
            ip_hops: 8,
            ip_scrub_ttl: false,
            fia: ChannelModel {
                delay_ms: 20,
                ..ChannelModel::default()
            },
            sites: vec![SiteConfig::default(), SiteConfig::default()],
            flows: Vec::new(),
            schedule: Vec::new(),
            dena: DenaConfig::default(),
        }
    }
}

/// Fixed addressing plan of the two-site topology.
pub mod plan {
    use super::*;

    pub fn host_addr(site: usize, host: u8, nat: bool) -> Addr {
        if nat {
            addr(10, 0, site as u8, host + 1)
        } else {
            addr(100 + site as u8, 0, 0, host + 1)
        }
    }

    pub fn dena_addr(site: usize, nat: bool) -> Addr {
        host_addr(site, 253, nat)
    }

    pub fn nat_public(site: usize) -> Addr {
        addr(5, 5, 5, 5 + site as u8)
    }

    pub fn gateway_addr(site: usize) -> Addr {
        addr(7, 7, 7, 1 + site as u8)
    }
}

impl Scenario {
    pub fn from_toml(s: &str) -> Result<Scenario, NetsimError> {
        let sc: Scenario = toml::from_str(s).map_err(|e| NetsimError::Config(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), NetsimError> {
        let bad = |m: String| Err(NetsimError::Config(m));
        if self.sites.len() != 2 {
            return bad(format!("need exactly 2 sites, got {}", self.sites.len()));
        }
        if self.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        self.ip.validate().map_err(NetsimError::Config)?;
        self.fia.validate().map_err(NetsimError::Config)?;
        self.dena.validate().map_err(|e| NetsimError::Config(e.to_string()))?;
        for (i, s) in self.sites.iter().enumerate() {
            if s.hosts == 0 || s.hosts > 250 {
                return bad(format!("site {i}: hosts must be in 1..=250"));
            }
        }
        for (i, f) in self.flows.iter().enumerate() {
            if f.from > 1 {
                return bad(format!("flow {i}: from must be 0 or 1"));
            }
            let to = 1 - f.from;
            if f.src_host >= self.sites[f.from].hosts || f.dst_host >= self.sites[to].hosts {
                return bad(format!("flow {i}: unknown host"));
            }
            if self.sites[to].nat {
                return bad(format!("flow {i}: destination site {to} is behind a NAT"));
            }
            if f.rate_pps == 0 || f.rate_pps > 1_000_000 || f.reverse_rate_pps > 1_000_000 {
                return bad(format!("flow {i}: rate must be in 1..=1000000 pps"));
            }
            if f.payload_bytes < super::host::HEADER_LEN {
                return bad(format!("flow {i}: payload_bytes below {}", super::host::HEADER_LEN));
            }
        }
        for (i, m) in self.schedule.iter().enumerate() {
            if m.at_ms > self.duration_ms {
                return bad(format!("schedule entry {i} at {} ms is past the end", m.at_ms));
            }
            match parse_path(&m.path) {
                Some(PathId::Fia(k)) if k >= self.n_fia => return bad(format!("schedule entry {i}: no path {}", m.path)),
                None => return bad(format!("schedule entry {i}: bad path {:?}", m.path)),
                _ => {}
            }
            let mut probe = ChannelModel::default();
            m.apply(&mut probe);
            probe.validate().map_err(|e| NetsimError::Config(format!("schedule entry {i}: {e}")))?;
        }
        Ok(())
    }

    /// The path-switching setup: a bulk transfer with 10% loss on the IP
    /// path from 80 s to 110 s.
    pub fn loss_switch() -> Scenario {
        Scenario::from_toml(LOSS_SWITCH).expect("bundled scenario is valid")
    }
}

pub const LOSS_SWITCH: &str = r#"
duration_ms = 140000
n_fia = 1

[ip]
delay_ms = 10

[fia]
delay_ms = 20

[[sites]]
[[sites]]

[[flows]]
rate_pps = 2000
reverse_rate_pps = 1000
payload_bytes = 1200

[[schedule]]
at_ms = 80000
path = "ip"
loss_prob = 0.10

[[schedule]]
at_ms = 110000
path = "ip"
loss_prob = 0.0
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_switch_parses() {
        let s = Scenario::loss_switch();
        assert_eq!(s.duration_ms, 140_000);
        assert_eq!(s.schedule.len(), 2);
        assert_eq!(s.flows[0].rate_pps, 2000);
        assert_eq!(s.dena, DenaConfig::default());
    }

    #[test]
    fn path_names_round_trip() {
        for p in [PathId::Ip, PathId::Fia(0), PathId::Fia(3)] {
            assert_eq!(parse_path(&path_name(p)), Some(p));
        }
        assert_eq!(parse_path("fiax"), None);
    }

    #[test]
    fn rejects_bad_scenarios() {
        let base = Scenario {
            flows: vec![FlowConfig::default()],
            ..Scenario::default()
        };
        assert!(base.validate().is_ok());

        let mut s = base.clone();
        s.schedule.push(Mutation {
            at_ms: s.duration_ms + 1,
            path: "ip".into(),
            direction: LinkDirection::Both,
            loss_prob: Some(0.1),
            reorder_prob: None,
            dup_prob: None,
            delay_ms: None,
        });
        assert!(s.validate().is_err());

        let mut s = base.clone();
        s.sites[1].nat = true;
        assert!(s.validate().is_err(), "flows into a NATed site cannot be opened");

        let mut s = base.clone();
        s.ip.loss_prob = 2.0;
        assert!(s.validate().is_err());

        assert!(Scenario::from_toml("duration_ms = 5\nbogus = 1").is_err());
    }
}
