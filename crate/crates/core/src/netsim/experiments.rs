//! Drivers for the detection-error and path-switching experiments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;

use super::engine::{run_with, RunOptions};
use crate::sub_seed;
use super::scenario::{parse_path, Scenario};
use super::trace::Trace;
use super::NetsimError;
use crate::discovery::{DetectionConfig, Detector, MESSAGE, MESSAGE_LEN};
use crate::measure::PathId;
use crate::signal::{CodecConfig, Signal};

/// Trials per parallel work unit; results do not depend on thread count.
const CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FnRow {
    pub loss: f64,
    pub trials: u64,
    /// Trials whose first announcement went undetected.
    pub first_failures: u64,
    /// Trials where every one of the `max_attempts` announcements failed.
    pub all_failures: u64,
}

impl FnRow {
    pub fn fn_single(&self) -> f64 {
        self.first_failures as f64 / self.trials as f64
    }

    pub fn fn_all(&self) -> f64 {
        self.all_failures as f64 / self.trials as f64
    }
}

/// One announcement over an i.i.d. erasure channel into a fresh receiver.
/// The 24 loss draws are made up front so every configuration sees the
/// same channel for the same seed.
fn announce_once<R: Rng>(rng: &mut R, loss: f64, cfg: &DetectionConfig) -> bool {
    let mut kept = [false; MESSAGE_LEN];
    for k in kept.iter_mut() {
        *k = !rng.random_bool(loss);
    }
    let mut det = Detector::default();
    MESSAGE
        .iter()
        .zip(kept)
        .any(|(s, k)| k && det.push(*s, cfg).is_some())
}

/// False-negative rate per loss rate. Each announcement is an independent
/// detection attempt.
pub fn experiment_fn(loss_rates: &[f64], cfg: &DetectionConfig, trials: u64, seed: u64) -> Vec<FnRow> {
    assert!(trials >= 1, "trials must be at least 1");
    loss_rates
        .iter()
        .enumerate()
        .map(|(li, &loss)| {
            let chunks = trials.div_ceil(CHUNK);
            let (first, all) = (0..chunks)
                .into_par_iter()
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, (li as u64) << 32 | c));
                    let n = CHUNK.min(trials - c * CHUNK);
                    let (mut first, mut all) = (0, 0);
                    for _ in 0..n {
                        let results: Vec<bool> = (0..cfg.max_attempts)
                            .map(|_| announce_once(&mut rng, loss, cfg))
                            .collect();
                        first += !results[0] as u64;
                        all += results.iter().all(|d| !d) as u64;
                    }
                    (first, all)
                })
                .reduce(|| (0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
            FnRow {
                loss,
                trials,
                first_failures: first,
                all_failures: all,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FpResult {
    pub n_packets: u64,
    pub repetitions: u64,
    pub hits: u64,
}

impl FpResult {
    pub fn rate(&self) -> f64 {
        self.hits as f64 / self.repetitions as f64
    }
}

/// Chance that a uniformly random IPID decodes to some signal.
pub fn ipid_signal_prob(codec: &CodecConfig) -> f64 {
    // Each signal owns one 12-bit prefix, i.e. 16 IPID values.
    codec.ipid_msb12.len() as f64 * 16.0 / 65536.0
}

/// Symbols a receiver decodes from `n` packets with random IPIDs and a
/// TTL outside every signal band. Undecodable packets leave no trace in
/// the receive buffer, so only the signal-bearing ones are drawn.
pub fn random_symbol_stream<R: Rng>(rng: &mut R, n_packets: u64, codec: &CodecConfig) -> Vec<Signal> {
    let k = Binomial::new(n_packets, ipid_signal_prob(codec))
        .expect("valid probability")
        .sample(rng);
    (0..k).map(|_| Signal::ALL[rng.random_range(0..3)]).collect()
}

fn fires(stream: &[Signal], cfg: &DetectionConfig) -> bool {
    let mut det = Detector::default();
    stream.iter().any(|s| det.push(*s, cfg).is_some())
}

/// False-positive rate: fraction of random streams on which detection
/// fires. Several configurations are scored on the same streams.
pub fn experiment_fp_many(n_packets: u64, cfgs: &[DetectionConfig], repetitions: u64, seed: u64) -> Vec<FpResult> {
    let codec = CodecConfig::default();
    let chunks = repetitions.div_ceil(CHUNK);
    let hits = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, c));
            let n = CHUNK.min(repetitions - c * CHUNK);
            let mut hits = vec![0u64; cfgs.len()];
            for _ in 0..n {
                let stream = random_symbol_stream(&mut rng, n_packets, &codec);
                for (h, cfg) in hits.iter_mut().zip(cfgs) {
                    *h += fires(&stream, cfg) as u64;
                }
            }
            hits
        })
        .reduce(
            || vec![0u64; cfgs.len()],
            |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect(),
        );
    hits.into_iter()
        .map(|hits| FpResult {
            n_packets,
            repetitions,
            hits,
        })
        .collect()
}

pub fn experiment_fp(n_packets: u64, cfg: &DetectionConfig, repetitions: u64, seed: u64) -> FpResult {
    experiment_fp_many(n_packets, std::slice::from_ref(cfg), repetitions, seed)[0]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchReport {
    pub trace: Trace,
    /// Site whose host sends the first flow.
    pub bulk_site: usize,
    pub loss_on_ms: Option<u64>,
    pub loss_off_ms: Option<u64>,
    /// From loss onset to the bulk sender's device moving to an overlay path.
    pub to_fia_ms: Option<u64>,
    /// From loss removal back to the IP path.
    pub to_ip_ms: Option<u64>,
    /// Active-path changes at the bulk sender's device.
    pub switches: usize,
    /// Copies per data packet on the first overlay path while IP was active.
    pub sample_ratio: Option<f64>,
}

/// Runs a path-switching scenario and extracts switch latencies.
pub fn experiment_switch(scenario: &Scenario, seed: u64, opts: RunOptions) -> Result<SwitchReport, NetsimError> {
    let bulk_site = scenario
        .flows
        .first()
        .map(|f| f.from)
        .ok_or_else(|| NetsimError::Config("switch experiment needs a flow".into()))?;
    let trace = run_with(scenario, seed, opts)?;

    let ip_entries: Vec<_> = scenario
        .schedule
        .iter()
        .filter(|m| parse_path(&m.path) == Some(PathId::Ip))
        .collect();
    let loss_on_ms = ip_entries
        .iter()
        .filter(|m| m.loss_prob.is_some_and(|l| l > 0.0))
        .map(|m| m.at_ms)
        .min();
    let loss_off_ms = loss_on_ms.and_then(|on| {
        ip_entries
            .iter()
            .filter(|m| m.at_ms > on && m.loss_prob == Some(0.0))
            .map(|m| m.at_ms)
            .min()
    });

    let changes: Vec<_> = trace.decisions_at(bulk_site).filter(|d| d.changed).collect();
    let first_after = |t: u64, fia: bool| {
        changes
            .iter()
            .find(|d| d.time_ms >= t && d.path.is_fia() == fia)
            .map(|d| d.time_ms - t)
    };
    let to_fia_ms = loss_on_ms.and_then(|t| first_after(t, true));
    let to_ip_ms = loss_off_ms.and_then(|t| first_after(t, false));
    let sample_ratio = (scenario.n_fia > 0)
        .then(|| trace.replication[bulk_site].ratio(PathId::Ip, PathId::Fia(0)))
        .flatten();
    Ok(SwitchReport {
        bulk_site,
        loss_on_ms,
        loss_off_ms,
        to_fia_ms,
        to_ip_ms,
        switches: changes.len(),
        sample_ratio,
        trace,
    })
}
