use std::path::PathBuf;

use clap::Args;
use dena::measure::PathId;
use dena::netsim::experiments::experiment_switch;
use dena::netsim::scenario::{parse_path, path_name};
use dena::netsim::{RunOptions, Scenario};
use serde::Serialize;

use crate::output::OutDir;
use crate::CliError;

#[derive(Debug, Args)]
pub struct PathsimArgs {
    /// Scenario TOML file; the bundled switching scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Replace the loss rate of every scheduled IP degradation.
    #[arg(long)]
    pub loss: Option<f64>,
    #[arg(long)]
    pub duration_ms: Option<u64>,
    /// Gap between measurement cycles.
    #[arg(long)]
    pub interval_ms: Option<u64>,
    /// Length of a measuring phase.
    #[arg(long)]
    pub period_ms: Option<u64>,
    /// Share of traffic copied onto fail-over paths.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Loss above which a path stops qualifying.
    #[arg(long)]
    pub switch_threshold: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ThroughputRow {
    second: u64,
    path: String,
    bytes: u64,
}

#[derive(Debug, Serialize)]
struct DecisionRow {
    time_ms: u64,
    site: usize,
    path: String,
    changed: bool,
}

#[derive(Debug, Serialize)]
struct MeasurementRow {
    time_ms: u64,
    site: usize,
    path: String,
    loss: f64,
    tx_loss: f64,
    rx_loss: f64,
    window_tx: u64,
    window_rx: u64,
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    seed: u64,
    loss_on_ms: Option<u64>,
    loss_off_ms: Option<u64>,
    to_fia_ms: Option<u64>,
    to_ip_ms: Option<u64>,
    switches: usize,
    sample_ratio: Option<f64>,
    transparency_violations: u64,
    control_leaks: u64,
}

fn load(a: &PathsimArgs) -> Result<Scenario, CliError> {
    let mut sc = match &a.scenario {
        None => Scenario::loss_switch(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|source| CliError::Io {
                path: p.clone(),
                source,
            })?;
            Scenario::from_toml(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(l) = a.loss {
        for m in sc.schedule.iter_mut() {
            if parse_path(&m.path) == Some(PathId::Ip) && m.loss_prob.is_some_and(|x| x > 0.0) {
                m.loss_prob = Some(l);
            }
        }
    }
    if let Some(d) = a.duration_ms {
        sc.duration_ms = d;
        sc.schedule.retain(|m| m.at_ms <= d);
    }
    let m = &mut sc.dena.measure;
    if let Some(v) = a.interval_ms {
        m.interval_ms = v;
    }
    if let Some(v) = a.period_ms {
        m.period_ms = v;
    }
    if let Some(v) = a.sample_rate {
        m.sample_rate = v;
    }
    if let Some(v) = a.switch_threshold {
        m.select.switch_threshold = v;
    }
    sc.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(sc)
}

pub fn run(a: &PathsimArgs, seed: u64, out: &OutDir) -> Result<(), CliError> {
    let sc = load(a)?;
    let opts = RunOptions {
        record_events: false,
        record_channel_log: false,
    };
    let r = experiment_switch(&sc, seed, opts).map_err(|e| CliError::Config(e.to_string()))?;
    let tr = &r.trace;

    let mut paths = vec![PathId::Ip];
    paths.extend((0..sc.n_fia).map(PathId::Fia));
    let throughput: Vec<ThroughputRow> = tr
        .throughput_rows(&paths)
        .into_iter()
        .map(|(second, p, bytes)| ThroughputRow {
            second,
            path: path_name(p),
            bytes,
        })
        .collect();
    let decisions: Vec<DecisionRow> = tr
        .decisions
        .iter()
        .map(|d| DecisionRow {
            time_ms: d.time_ms,
            site: d.site,
            path: path_name(d.path),
            changed: d.changed,
        })
        .collect();
    let measurements: Vec<MeasurementRow> = tr
        .measurements
        .iter()
        .map(|m| {
            let rep = m.window.report;
            MeasurementRow {
                time_ms: m.time_ms,
                site: m.site,
                path: path_name(rep.path),
                loss: rep.loss_f64(),
                tx_loss: dena::measure::ratio_f64(rep.tx_loss),
                rx_loss: dena::measure::ratio_f64(rep.rx_loss),
                window_tx: rep.window_tx,
                window_rx: rep.window_rx,
            }
        })
        .collect();
    let summary = SummaryRow {
        seed,
        loss_on_ms: r.loss_on_ms,
        loss_off_ms: r.loss_off_ms,
        to_fia_ms: r.to_fia_ms,
        to_ip_ms: r.to_ip_ms,
        switches: r.switches,
        sample_ratio: r.sample_ratio,
        transparency_violations: tr.hosts.transparency_violations,
        control_leaks: tr.hosts.control_leaks,
    };

    out.write_csv("throughput.csv", &throughput)?;
    out.write_csv("decisions.csv", &decisions)?;
    out.write_csv("measurements.csv", &measurements)?;
    let p = out.write_csv("summary.csv", std::slice::from_ref(&summary))?;

    let ms = |v: Option<u64>| v.map_or("none".to_string(), |v| format!("{v} ms"));
    println!("simulated {} s, {} path changes at site {}", sc.duration_ms / 1000, r.switches, r.bulk_site);
    println!("  switch to overlay after degradation: {}", ms(r.to_fia_ms));
    println!("  switch back after recovery:          {}", ms(r.to_ip_ms));
    if let Some(s) = r.sample_ratio {
        println!("  replicated share on fia0 while on ip: {:.1}%", 100.0 * s);
    }
    println!("outputs in {}", p.parent().map(|d| d.display().to_string()).unwrap_or_default());
    Ok(())
}
