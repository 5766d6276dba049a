use clap::Args;
use dena::discovery::DetectionConfig;
use dena::netsim::experiments::{experiment_fn, experiment_fp_many};
use serde::Serialize;

use crate::output::{parse_list, OutDir};
use crate::CliError;

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// Highest i.i.d. loss rate for the false-negative sweep.
    #[arg(long, default_value_t = 0.10)]
    pub loss_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub loss_step: f64,
    /// Trials per loss rate.
    #[arg(long, default_value_t = 100_000)]
    pub trials: u64,
    /// Edit-distance thresholds to compare.
    #[arg(long, default_value = "3,5")]
    pub thresholds: String,
    /// Announcements per flow before giving up.
    #[arg(long, default_value_t = DetectionConfig::default().max_attempts)]
    pub max_attempts: u32,
    /// Random streams for the false-positive estimate; 0 skips it.
    #[arg(long, default_value_t = 1000)]
    pub fp_streams: u64,
    /// Packets per false-positive stream.
    #[arg(long, default_value_t = 1_000_000)]
    pub fp_packets: u64,
}

#[derive(Debug, Serialize)]
struct FpRow {
    threshold: usize,
    prefilter: bool,
    packets: u64,
    streams: u64,
    hits: u64,
    fp_rate: f64,
}

impl DetectArgs {
    fn validate(&self) -> Result<(Vec<f64>, Vec<DetectionConfig>), CliError> {
        let usage = |m: &str| Err(CliError::Usage(m.into()));
        if self.trials == 0 {
            return usage("--trials must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.loss_max) {
            return usage("--loss-max must be in [0, 1]");
        }
        if self.loss_step.is_nan() || self.loss_step <= 0.0 {
            return usage("--loss-step must be positive");
        }
        if self.fp_streams > 0 && self.fp_packets == 0 {
            return usage("--fp-packets must be positive");
        }
        let steps = (self.loss_max / self.loss_step + 1e-9).floor() as usize;
        let losses = (0..=steps).map(|i| i as f64 * self.loss_step).collect();
        let thresholds = parse_list(&self.thresholds).map_err(CliError::Usage)?;
        let mut cfgs = Vec::new();
        for t in thresholds {
            for pre in [true, false] {
                let cfg = DetectionConfig {
                    max_attempts: self.max_attempts,
                    ..DetectionConfig::new(t, pre)
                };
                cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                cfgs.push(cfg);
            }
        }
        Ok((losses, cfgs))
    }
}

fn tag(c: &DetectionConfig) -> String {
    format!("thr{}_{}", c.threshold, if c.use_prefilter { "pre" } else { "nopre" })
}

pub fn run(a: &DetectArgs, seed: u64, out: &OutDir) -> Result<(), CliError> {
    let (losses, cfgs) = a.validate()?;

    // Same seed for every configuration, so they see the same channels.
    let results: Vec<_> = cfgs.iter().map(|c| experiment_fn(&losses, c, a.trials, seed)).collect();
    let mut header = vec!["loss".to_string(), "trials".to_string()];
    for c in &cfgs {
        header.push(format!("fn_single_{}", tag(c)));
        header.push(format!("fn_all_{}", tag(c)));
    }
    let rows: Vec<Vec<String>> = losses
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let mut r = vec![format!("{l:.4}"), a.trials.to_string()];
            for res in &results {
                r.push(res[i].fn_single().to_string());
                r.push(res[i].fn_all().to_string());
            }
            r
        })
        .collect();
    let fn_path = out.write_table("fn.csv", &header, &rows)?;
    println!("false negatives ({} trials per loss rate) -> {}", a.trials, fn_path.display());
    for (c, res) in cfgs.iter().zip(&results) {
        let last = res.last().expect("at least one loss rate");
        println!(
            "  {:<11} loss {:.2}: single {:.2}%, after {} attempts {:.3}%",
            tag(c),
            last.loss,
            100.0 * last.fn_single(),
            c.max_attempts,
            100.0 * last.fn_all()
        );
    }

    if a.fp_streams > 0 {
        let fp = experiment_fp_many(a.fp_packets, &cfgs, a.fp_streams, seed);
        let rows: Vec<FpRow> = cfgs
            .iter()
            .zip(&fp)
            .map(|(c, r)| FpRow {
                threshold: c.threshold,
                prefilter: c.use_prefilter,
                packets: r.n_packets,
                streams: r.repetitions,
                hits: r.hits,
                fp_rate: r.rate(),
            })
            .collect();
        let fp_path = out.write_csv("fp.csv", &rows)?;
        println!("false positives ({} streams) -> {}", a.fp_streams, fp_path.display());
        for r in &rows {
            println!(
                "  thr{} {:<5}: {:.4}%",
                r.threshold,
                if r.prefilter { "pre" } else { "nopre" },
                100.0 * r.fp_rate
            );
        }
    }
    Ok(())
}
