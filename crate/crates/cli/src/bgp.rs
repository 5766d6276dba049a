use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Subcommand};
use dena::bgp::{
    experiment_hijack, experiment_reach, synthetic_topology, AsGraph, BgpError, HopMatrix, SynthParams, TunnelParams,
};
use serde::Serialize;

use crate::output::{parse_list, OutDir};
use crate::CliError;

#[derive(Debug, Args)]
pub struct TopologyArgs {
    /// AS relationship file, one `a|b|rel` line per link (-1: a is
    /// provider of b, 0: peers).
    #[arg(long, conflicts_with = "synthetic")]
    pub topology: Option<PathBuf>,
    /// Size of the generated topology used when no file is given.
    #[arg(long, default_value_t = 2000)]
    pub synthetic: usize,
}

#[derive(Debug, Subcommand)]
pub enum BgpCommand {
    /// Size, stub and degree counts of a topology.
    Stats {
        #[command(flatten)]
        topo: TopologyArgs,
    },
    /// Hijack probability of tunneled and plain paths.
    Hijack {
        #[command(flatten)]
        topo: TopologyArgs,
        /// Deployment labels such as TN4-TL2-LBGP4, comma separated.
        #[arg(long, default_value = "TN4-TL2-LBGP4")]
        scenario: String,
        /// Adversary counts, e.g. `1..7` or `1,3,5`.
        #[arg(long, default_value = "1..7")]
        adv: String,
        /// Distinct deployments per scenario.
        #[arg(long, default_value_t = 1000)]
        trials: usize,
    },
    /// Share of multi-homed stubs near a growing deployment.
    Reach {
        #[command(flatten)]
        topo: TopologyArgs,
        /// Tunnel segment bounds, e.g. `4` or `1..5`.
        #[arg(long, default_value = "4")]
        tl: String,
        /// Deployment sizes to report, e.g. `1..20`.
        #[arg(long, default_value = "1..20")]
        deploying: String,
        #[arg(long, default_value_t = 5000)]
        reps: u64,
    },
    /// Writes a generated topology in the relationship file format.
    Synth {
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value = "topology.txt")]
        output: String,
    },
}

fn load(t: &TopologyArgs, seed: u64) -> Result<AsGraph, CliError> {
    match &t.topology {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?;
            AsGraph::parse(&text).map_err(|e| match e {
                BgpError::Parse { line, reason } => CliError::Parse {
                    file: p.display().to_string(),
                    line,
                    reason,
                },
                other => other.into(),
            })
        }
        None => Ok(synthetic_topology(
            &SynthParams {
                n_ases: t.synthetic,
                ..SynthParams::default()
            },
            seed,
        )?),
    }
}

#[derive(Debug, Serialize)]
struct StatRow {
    metric: &'static str,
    value: usize,
}

#[derive(Debug, Serialize)]
struct DegreeRow {
    degree: usize,
    ases: usize,
}

#[derive(Debug, Serialize)]
struct HijackCsvRow {
    scenario: String,
    n_adv: usize,
    model: &'static str,
    trials: u64,
    p_tunnel: f64,
    p_bgp: f64,
}

#[derive(Debug, Serialize)]
struct ReachCsvRow {
    t_l: u8,
    n_deploying: usize,
    fraction: f64,
    reps: u64,
}

fn tl_list(s: &str) -> Result<Vec<u8>, CliError> {
    parse_list(s)
        .map_err(CliError::Usage)?
        .into_iter()
        .map(|v| match u8::try_from(v) {
            Ok(v) if (1..255).contains(&v) => Ok(v),
            _ => Err(CliError::Usage(format!("--tl {v} out of range"))),
        })
        .collect()
}

pub fn run(cmd: &BgpCommand, seed: u64, out: &OutDir) -> Result<(), CliError> {
    match cmd {
        BgpCommand::Stats { topo } => {
            let g = load(topo, seed)?;
            let s = g.stats();
            let rows = [
                StatRow { metric: "ases", value: s.n_ases },
                StatRow { metric: "links", value: s.n_edges },
                StatRow { metric: "stubs", value: s.n_stubs },
                StatRow { metric: "multihomed_stubs", value: s.n_multihomed_stubs },
                StatRow { metric: "stubs_5_providers", value: s.n_stubs_5_providers },
            ];
            let degrees: Vec<DegreeRow> = s
                .degree_histogram
                .iter()
                .map(|(&degree, &ases)| DegreeRow { degree, ases })
                .collect();
            out.write_csv("degrees.csv", &degrees)?;
            let p = out.write_csv("stats.csv", &rows)?;
            for r in &rows {
                println!("{:<18} {}", r.metric, r.value);
            }
            println!("-> {}", p.display());
        }
        BgpCommand::Hijack {
            topo,
            scenario,
            adv,
            trials,
        } => {
            if *trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let scenarios = scenario
                .split(',')
                .map(|l| TunnelParams::parse_label(l.trim()).map_err(|e| CliError::Usage(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let n_adv = parse_list(adv).map_err(CliError::Usage)?;
            let g = load(topo, seed)?;
            let t = Instant::now();
            let h = HopMatrix::new(&g);
            let rows = experiment_hijack(&g, &h, &scenarios, &n_adv, *trials, seed)?;
            let csv_rows: Vec<HijackCsvRow> = rows
                .iter()
                .map(|r| HijackCsvRow {
                    scenario: r.scenario.clone(),
                    n_adv: r.n_adv,
                    model: r.model.as_str(),
                    trials: r.trials,
                    p_tunnel: r.p_tunnel(),
                    p_bgp: r.p_bgp(),
                })
                .collect();
            let p = out.write_csv("hijack.csv", &csv_rows)?;
            println!("{:<15} {:>5} {:>6} {:>8} {:>8}", "scenario", "adv", "model", "tunnel", "bgp");
            for r in &csv_rows {
                println!(
                    "{:<15} {:>5} {:>6} {:>8.3} {:>8.3}",
                    r.scenario, r.n_adv, r.model, r.p_tunnel, r.p_bgp
                );
            }
            println!("{} ASes, {:.1} s -> {}", g.len(), t.elapsed().as_secs_f64(), p.display());
        }
        BgpCommand::Reach {
            topo,
            tl,
            deploying,
            reps,
        } => {
            if *reps == 0 {
                return Err(CliError::Usage("--reps must be at least 1".into()));
            }
            let tls = tl_list(tl)?;
            let ns = parse_list(deploying).map_err(CliError::Usage)?;
            if ns.contains(&0) {
                return Err(CliError::Usage("--deploying counts start at 1".into()));
            }
            let n_max = *ns.iter().max().expect("non-empty");
            let g = load(topo, seed)?;
            let h = HopMatrix::new(&g);
            let mut rows = Vec::new();
            for t_l in tls {
                for r in experiment_reach(&g, &h, t_l, n_max, *reps, seed) {
                    if ns.contains(&r.n_deploying) {
                        rows.push(ReachCsvRow {
                            t_l,
                            n_deploying: r.n_deploying,
                            fraction: r.mean_fraction,
                            reps: r.reps,
                        });
                    }
                }
            }
            let p = out.write_csv("reach.csv", &rows)?;
            for r in &rows {
                println!("T_L={} n={:<3} {:.3}", r.t_l, r.n_deploying, r.fraction);
            }
            println!("-> {}", p.display());
        }
        BgpCommand::Synth { n, output } => {
            let g = synthetic_topology(
                &SynthParams {
                    n_ases: *n,
                    ..SynthParams::default()
                },
                seed,
            )?;
            let p = out.write_text(output, &g.to_text())?;
            println!("{} ASes, {} links -> {}", g.len(), g.edge_count(), p.display());
        }
    }
    Ok(())
}
