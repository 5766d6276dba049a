//! AS-level policy routing, prefix hijacks against tunneled paths, and
//! deployment reach.

pub mod deploy;
pub mod experiments;
pub mod graph;
pub mod route;
pub mod synth;

pub use deploy::{sample_deployment, DeploymentSampler, HopMatrix, TunnelDeployment, TunnelParams};
pub use experiments::{
    experiment_hijack, experiment_reach, hijack_trial, AdversaryModel, HijackOutcome, HijackRow, ReachRow,
};
pub use graph::{AsGraph, Asn, Neighbor, Rel, TopologyStats};
pub use route::{propagate, Announcement, LearnedFrom, Prefix, PrefixLen, Resolution, Route, RoutingState, Target};
pub use synth::{synthetic_topology, SynthParams};

#[derive(Debug, thiserror::Error)]
pub enum BgpError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("bad topology: {0}")]
    Topology(String),
    #[error("cannot satisfy deployment parameters: {0}")]
    Unsatisfiable(String),
    #[error("{0}")]
    Invalid(String),
}
