//! End-to-end acceptance checks. Each test prints one PASS/FAIL line to the
//! real stdout (bypassing capture) and then asserts.

mod common;

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;
use std::time::Instant;

use dena::bgp::*;
use dena::discovery::DetectionConfig;
use dena::measure::{compute_loss, CounterSnapshot, PathId, State};
use dena::netsim::experiments::{experiment_fn, experiment_fp_many, experiment_switch};
use dena::netsim::scenario::{FlowConfig, LinkDirection, Mutation, SiteConfig, Transport};
use dena::netsim::trace::LogEntry;
use dena::netsim::{run_with, ChannelModel, RunOptions, Scenario, Trace};
use num_rational::Ratio;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(id: &str, pass: bool, detail: &str) {
    let line = format!("{id} {} {detail}\n", if pass { "PASS" } else { "FAIL" });
    // The test harness captures the stdout handle; go to the descriptor.
    #[cfg(unix)]
    {
        use std::os::fd::FromRawFd;
        let mut fd = std::mem::ManuallyDrop::new(unsafe { std::fs::File::from_raw_fd(1) });
        let _ = fd.write_all(line.as_bytes());
    }
    #[cfg(not(unix))]
    print!("{line}");
}

fn check(id: &str, pass: bool, detail: String) {
    report(id, pass, &detail);
    assert!(pass, "{id}: {detail}");
}

#[test]
fn ac1_fn_at_ten_percent_loss() {
    let t = Instant::now();
    let r = experiment_fn(&[0.10], &DetectionConfig::new(3, true), 200_000, 1)[0];
    let secs = t.elapsed().as_secs_f64();
    let (single, all) = (r.fn_single(), r.fn_all());
    let pass = (single - 0.35).abs() <= 0.05 && (all - 0.006).abs() <= 0.005 && secs <= 120.0;
    check(
        "AC1",
        pass,
        format!("single={:.2}% five={:.3}% trials={} time={secs:.1}s", 100.0 * single, 100.0 * all, r.trials),
    );
}

#[test]
fn ac2_fn_ordering() {
    let losses: Vec<f64> = (0..=10).map(|i| i as f64 / 100.0).collect();
    let run = |thr, pre| experiment_fn(&losses, &DetectionConfig::new(thr, pre), 20_000, 2);
    let (t3p, t3n, t5p, t5n) = (run(3, true), run(3, false), run(5, true), run(5, false));
    let mut bad = Vec::new();
    for i in 0..losses.len() {
        let fn_ = |rows: &[dena::netsim::experiments::FnRow]| (rows[i].first_failures, rows[i].all_failures);
        let ok = fn_(&t3p).0 >= fn_(&t5p).0
            && fn_(&t3n).0 >= fn_(&t5n).0
            && fn_(&t3p).0 >= fn_(&t3n).0
            && fn_(&t5p).0 >= fn_(&t5n).0
            && fn_(&t3p).1 >= fn_(&t5p).1
            && fn_(&t3p).1 >= fn_(&t3n).1;
        if !ok {
            bad.push(losses[i]);
        }
    }
    check(
        "AC2",
        bad.is_empty(),
        format!(
            "{} loss rates, FN(thr3,pre) at 10% = {:.2}% vs FN(thr5,nopre) = {:.2}%; violations at {bad:?}",
            losses.len(),
            100.0 * t3p[10].fn_single(),
            100.0 * t5n[10].fn_single()
        ),
    );
}

#[test]
fn ac3_fp_against_reference_table() {
    let t = Instant::now();
    let cfgs = [
        DetectionConfig::new(3, true),
        DetectionConfig::new(3, false),
        DetectionConfig::new(5, true),
        DetectionConfig::new(5, false),
    ];
    let reference = [0.0002, 0.0003, 0.044, 0.118];
    let res = experiment_fp_many(1_000_000, &cfgs, 100_000, 3);
    let secs = t.elapsed().as_secs_f64();
    let rates: Vec<f64> = res.iter().map(|r| r.rate()).collect();
    let within = rates
        .iter()
        .zip(reference)
        .all(|(&m, r)| m > 0.0 && m / r <= 10.0 && r / m <= 10.0);
    let pass = rates[0] < rates[1] && rates[2] < rates[3] && rates[0] < rates[2] && rates[1] < rates[3] && within && secs <= 600.0;
    check(
        "AC3",
        pass,
        format!(
            "thr3 pre={:.4}% nopre={:.4}% thr5 pre={:.2}% nopre={:.2}% streams={} time={secs:.0}s",
            100.0 * rates[0],
            100.0 * rates[1],
            100.0 * rates[2],
            100.0 * rates[3],
            res[0].repetitions
        ),
    );
}

/// Two devices joined by FIFO channels that only drop. Data and the
/// in-band measurement request/reply share each channel's queue, so the
/// counters a marker snapshots are exactly the packets ahead of it.
struct FifoPair {
    a_out: u64,
    a_in: u64,
    b_out: u64,
    b_in: u64,
    /// In flight A to B: `None` is data, `Some(qid)` a request.
    ab: VecDeque<Option<u32>>,
    ba: VecDeque<Option<u32>>,
    /// Send-order logs: (is marker, dropped).
    ab_log: Vec<(Option<u32>, bool)>,
    ba_log: Vec<(Option<u32>, bool)>,
    /// Half-built snapshots keyed by query id.
    pending: BTreeMap<u32, CounterSnapshot>,
    done: Vec<(u32, CounterSnapshot)>,
}

impl FifoPair {
    fn new() -> Self {
        FifoPair {
            a_out: 0,
            a_in: 0,
            b_out: 0,
            b_in: 0,
            ab: VecDeque::new(),
            ba: VecDeque::new(),
            ab_log: Vec::new(),
            ba_log: Vec::new(),
            pending: BTreeMap::new(),
            done: Vec::new(),
        }
    }

    fn step<R: Rng>(&mut self, rng: &mut R, loss_ab: f64, loss_ba: f64) {
        match rng.random_range(0..4) {
            0 => {
                self.a_out += 1;
                let drop = rng.random_bool(loss_ab);
                self.ab_log.push((None, drop));
                if !drop {
                    self.ab.push_back(None);
                }
            }
            1 => {
                self.b_out += 1;
                let drop = rng.random_bool(loss_ba);
                self.ba_log.push((None, drop));
                if !drop {
                    self.ba.push_back(None);
                }
            }
            2 => match self.ab.pop_front() {
                Some(None) => self.b_in += 1,
                Some(Some(q)) => {
                    let s = self.pending.get_mut(&q).unwrap();
                    s.b_in = self.b_in;
                    s.b_out = self.b_out;
                    self.ba_log.push((Some(q), false));
                    self.ba.push_back(Some(q));
                }
                None => {}
            },
            _ => match self.ba.pop_front() {
                Some(None) => self.a_in += 1,
                Some(Some(q)) => {
                    let mut s = self.pending.remove(&q).unwrap();
                    s.a_in = self.a_in;
                    self.done.push((q, s));
                }
                None => {}
            },
        }
    }

    fn query(&mut self, q: u32) {
        self.pending.insert(
            q,
            CounterSnapshot {
                a_out: self.a_out,
                ..CounterSnapshot::default()
            },
        );
        self.ab_log.push((Some(q), false));
        self.ab.push_back(Some(q));
    }
}

fn logged_loss(log: &[(Option<u32>, bool)], open: u32, close: u32) -> Ratio<u64> {
    let pos = |q| log.iter().position(|e| e.0 == Some(q)).unwrap();
    let (sent, lost) = log[pos(open)..pos(close)]
        .iter()
        .filter(|e| e.0.is_none())
        .fold((0u64, 0u64), |(s, l), e| (s + 1, l + e.1 as u64));
    Ratio::new(lost, sent)
}

fn engine_true_loss(log: &[LogEntry], reply: bool, open: u32, close: u32) -> Ratio<u64> {
    let pos = |q: u32| {
        log.iter()
            .position(|e| matches!(e, LogEntry::Marker { reply: r, qid, .. } if *r == reply && *qid == q))
            .unwrap()
    };
    let (mut sent, mut lost) = (0u64, 0u64);
    for e in &log[pos(open)..pos(close)] {
        if let LogEntry::Data { dropped } = e {
            sent += 1;
            lost += *dropped as u64;
        }
    }
    Ratio::new(lost, sent)
}

#[test]
fn ac4_loss_measurement_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut windows = 0;
    let mut mismatches = 0;
    while windows < 1000 {
        let loss_ab = rng.random_range(0.0..0.5);
        let loss_ba = rng.random_range(0.0..0.5);
        let mut p = FifoPair::new();
        // A handful of windows per pair.
        for q in 0..rng.random_range(2..6) {
            for _ in 0..rng.random_range(0..400) {
                p.step(&mut rng, loss_ab, loss_ba);
            }
            p.query(q);
        }
        while !p.pending.is_empty() {
            p.step(&mut rng, loss_ab, loss_ba);
        }
        for w in p.done.windows(2) {
            let ((q0, s0), (q1, s1)) = (w[0], w[1]);
            let Some(r) = compute_loss(PathId::Ip, &s0, &s1).unwrap() else { continue };
            windows += 1;
            let tx = logged_loss(&p.ab_log, q0, q1);
            let rx = logged_loss(&p.ba_log, q0, q1);
            mismatches += (r.tx_loss != tx || r.rx_loss != rx || r.loss_rate != tx.max(rx)) as usize;
        }
    }

    // Same check inside the full simulator on loss-only channels.
    let mut engine_windows = 0;
    for seed in 0..4 {
        let mut sc = Scenario {
            duration_ms: 30_000,
            flows: vec![FlowConfig {
                rate_pps: 300,
                reverse_rate_pps: 200,
                ..FlowConfig::default()
            }],
            ..Scenario::default()
        };
        sc.ip.loss_prob = 0.02 * (seed + 1) as f64;
        sc.fia.loss_prob = 0.03;
        let opts = RunOptions {
            record_events: false,
            record_channel_log: true,
        };
        let tr = run_with(&sc, seed, opts).unwrap();
        for m in &tr.measurements {
            let w = m.window;
            let out = &tr.channel_logs[&(w.report.path, m.site)];
            let back = &tr.channel_logs[&(w.report.path, 1 - m.site)];
            engine_windows += 1;
            mismatches += (w.report.tx_loss != engine_true_loss(out, false, w.open_qid, w.close_qid)
                || w.report.rx_loss != engine_true_loss(back, true, w.open_qid, w.close_qid))
                as usize;
        }
    }
    check(
        "AC4",
        mismatches == 0 && engine_windows > 100,
        format!("{windows} model windows + {engine_windows} simulator windows, {mismatches} mismatches"),
    );
}

#[test]
fn ac5_path_switching() {
    let sc = Scenario::loss_switch();
    let opts = RunOptions {
        record_events: false,
        record_channel_log: false,
    };
    let mut worst = (0u64, 0u64);
    let mut ratios = Vec::new();
    let mut failures = Vec::new();
    for seed in 0..20 {
        let r = experiment_switch(&sc, seed, opts).unwrap();
        let ok = matches!((r.to_fia_ms, r.to_ip_ms), (Some(a), Some(b)) if a <= 3000 && b <= 3000);
        let ratio = r.sample_ratio.unwrap_or(f64::NAN);
        if !ok || (ratio - 0.1).abs() > 0.02 || ratio.is_nan() {
            failures.push((seed, r.to_fia_ms, r.to_ip_ms, ratio));
        }
        worst.0 = worst.0.max(r.to_fia_ms.unwrap_or(u64::MAX));
        worst.1 = worst.1.max(r.to_ip_ms.unwrap_or(u64::MAX));
        ratios.push(ratio);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    check(
        "AC5",
        failures.is_empty(),
        format!(
            "20 runs, worst to-overlay {} ms, worst back-to-ip {} ms, mean sample ratio {mean:.4}; failures {failures:?}",
            worst.0, worst.1
        ),
    );
}

#[test]
fn ac6_routing_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut prefixes, mut errors) = (0, Vec::new());
    for _ in 0..500 {
        let g = common::random_small_graph(&mut rng, 8);
        let mut sets: Vec<Vec<usize>> = (0..g.len()).map(|i| vec![i]).collect();
        let all: Vec<usize> = (0..g.len()).collect();
        let k = rng.random_range(2..=g.len().max(2)).min(g.len());
        sets.push(all.choose_multiple(&mut rng, k).copied().collect());
        for origins in sets {
            prefixes += 1;
            if let Err(e) = common::check_prefix(&g, &origins) {
                errors.push(e);
            }
        }
    }
    check(
        "AC6",
        errors.is_empty(),
        format!(
            "500 graphs, {prefixes} prefixes, {} mismatches{}",
            errors.len(),
            errors.first().map(|e| format!(": {e}")).unwrap_or_default()
        ),
    );
}

fn topology() -> AsGraph {
    synthetic_topology(&SynthParams::default(), 1).unwrap()
}

#[test]
fn ac7_hijack_properties() {
    let t = Instant::now();
    let g = topology();
    let h = HopMatrix::new(&g);
    let labels = ["TN3-TL2-LBGP4", "TN4-TL2-LBGP4", "TN5-TL2-LBGP4", "TN3-TL3-LBGP4"];
    let scenarios: Vec<TunnelParams> = labels.iter().map(|l| TunnelParams::parse_label(l).unwrap()).collect();
    let n_adv: Vec<usize> = (1..=7).collect();
    let rows = experiment_hijack(&g, &h, &scenarios, &n_adv, 5000, 7).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let get = |sc: &str, n: usize, m: AdversaryModel| {
        rows.iter()
            .find(|r| r.scenario == sc && r.n_adv == n && r.model == m)
            .unwrap()
    };
    let mut notes = Vec::new();
    // (a) non-decreasing in adversary count.
    for sc in labels {
        for m in [AdversaryModel::Weak, AdversaryModel::Strong] {
            for n in 2..=7 {
                let (a, b) = (get(sc, n - 1, m), get(sc, n, m));
                if b.p_tunnel() < a.p_tunnel() || b.p_bgp() < a.p_bgp() {
                    notes.push(format!("(a) {sc} {} n={n}", m.as_str()));
                }
            }
        }
    }
    // (b) strong at least weak on the same trials.
    for sc in labels {
        for n in 1..=7 {
            if get(sc, n, AdversaryModel::Strong).tunnel_hits < get(sc, n, AdversaryModel::Weak).tunnel_hits {
                notes.push(format!("(b) {sc} n={n}"));
            }
        }
    }
    // (c) T_L=2, L_T<=4 tunnel below the BGP baseline.
    for n in 1..=7 {
        let r = get("TN3-TL2-LBGP4", n, AdversaryModel::Weak);
        if r.p_tunnel() >= r.p_bgp() {
            notes.push(format!("(c) n={n}"));
        }
    }
    // (d) same T_L, different L_T agree within 2 pp.
    let mut max_gap: f64 = 0.0;
    for n in 1..=7 {
        let gap = (get("TN4-TL2-LBGP4", n, AdversaryModel::Weak).p_tunnel()
            - get("TN5-TL2-LBGP4", n, AdversaryModel::Weak).p_tunnel())
        .abs();
        max_gap = max_gap.max(gap);
        if gap > 0.02 {
            notes.push(format!("(d) n={n} gap={gap:.3}"));
        }
    }
    let w7 = get("TN4-TL2-LBGP4", 7, AdversaryModel::Weak);
    check(
        "AC7",
        notes.is_empty() && secs <= 900.0,
        format!(
            "{} ASes, 5000 trials/point; TN4-TL2 weak n=7 tunnel={:.3} bgp={:.3}; TN4/TN5 max gap {:.1} pp; time={secs:.0}s; violations {notes:?}",
            g.len(),
            w7.p_tunnel(),
            w7.p_bgp(),
            100.0 * max_gap
        ),
    );
}

#[test]
fn ac8_reach_properties() {
    let g = topology();
    let h = HopMatrix::new(&g);
    let rows: Vec<Vec<ReachRow>> = (1..=5).map(|tl| experiment_reach(&g, &h, tl, 20, 1000, 8)).collect();
    let mut notes = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if r.windows(2).any(|w| w[1].mean_fraction < w[0].mean_fraction) {
            notes.push(format!("not monotone in n at T_L={}", i + 1));
        }
    }
    for w in rows.windows(2) {
        if w[0].iter().zip(&w[1]).any(|(a, b)| b.mean_fraction < a.mean_fraction) {
            notes.push(format!("not monotone in T_L at {}", w[1][0].t_l));
        }
    }
    let one_tl4 = rows[3][0].mean_fraction;
    let twenty_tl4 = rows[3][19].mean_fraction;
    if one_tl4 <= 0.5 {
        notes.push("n=1 T_L=4 not above half".into());
    }
    if rows[3..].iter().any(|r| r[19].mean_fraction <= 0.95) {
        notes.push("n=20 T_L>=4 not above 0.95".into());
    }
    check(
        "AC8",
        notes.is_empty(),
        format!("n=1 T_L=4: {one_tl4:.3}, n=20 T_L=4: {twenty_tl4:.3}; violations {notes:?}"),
    );
}

fn random_channel() -> impl Strategy<Value = ChannelModel> {
    (0.0..0.3f64, 0.0..0.2f64, 0.0..0.1f64, 1u64..60).prop_map(|(loss, reorder, dup, delay)| ChannelModel {
        loss_prob: loss,
        reorder_prob: reorder,
        dup_prob: dup,
        delay_ms: delay,
        seed: None,
    })
}

fn random_scenario() -> impl Strategy<Value = Scenario> {
    (
        random_channel(),
        random_channel(),
        any::<bool>(),
        1u8..=2,
        (5u32..150, 0u32..100, any::<bool>()),
        proptest::option::of((1000u64..11_000, 0.0..0.5f64)),
    )
        .prop_map(|(ip, fia, nat, n_fia, (rate, reverse, udp), change)| {
            let mut sc = Scenario {
                duration_ms: 12_000,
                n_fia,
                ip,
                fia,
                sites: vec![
                    SiteConfig {
                        nat,
                        ..SiteConfig::default()
                    },
                    SiteConfig::default(),
                ],
                flows: vec![FlowConfig {
                    rate_pps: rate,
                    reverse_rate_pps: reverse,
                    transport: if udp { Transport::Udp } else { Transport::Tcp },
                    ..FlowConfig::default()
                }],
                ..Scenario::default()
            };
            if let Some((at_ms, loss)) = change {
                sc.schedule.push(Mutation {
                    at_ms,
                    path: "ip".into(),
                    direction: LinkDirection::Both,
                    loss_prob: Some(loss),
                    reorder_prob: None,
                    dup_prob: None,
                    delay_ms: None,
                });
            }
            sc
        })
}

/// Every cycle an initiator opened early enough to finish must have left
/// both sites back at rest within two periods and two intervals.
fn converged(tr: &Trace, sc: &Scenario) -> Result<usize, String> {
    let mut checked = 0;
    let m = &sc.dena.measure;
    let bound = 2 * m.period_ms + 2 * m.interval_ms;
    for start in tr.transitions.iter().filter(|t| t.to == State::InitSent) {
        let deadline = start.time_ms + bound;
        if deadline > tr.duration_ms {
            continue;
        }
        checked += 1;
        for site in 0..2 {
            let mine: Vec<_> = tr
                .transitions
                .iter()
                .filter(|t| t.site == site && t.cycle >= start.cycle && t.time_ms >= start.time_ms)
                .collect();
            if !mine.iter().any(|t| t.cycle == start.cycle) {
                continue;
            }
            let rest = mine
                .iter()
                .find(|t| t.cycle > start.cycle || matches!(t.to, State::Done | State::Idle));
            match rest {
                Some(t) if t.time_ms <= deadline => {}
                other => {
                    return Err(format!(
                        "cycle {} opened at {} ms: site {site} at rest {:?}",
                        start.cycle,
                        start.time_ms,
                        other.map(|t| t.time_ms)
                    ))
                }
            }
        }
    }
    Ok(checked)
}

#[test]
fn ac9_protocol_safety() {
    let t = Instant::now();
    let cases = 10_000;
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases,
            failure_persistence: None,
            ..Config::default()
        },
        TestRng::deterministic_rng(RngAlgorithm::ChaCha),
    );
    let opts = RunOptions {
        record_events: false,
        record_channel_log: false,
    };
    let cycles = std::cell::Cell::new(0usize);
    let delivered = std::cell::Cell::new(0u64);
    let result = runner.run(&(random_scenario(), any::<u64>()), |(sc, seed)| {
        let tr = run_with(&sc, seed, opts).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(tr.hosts.transparency_violations, 0);
        prop_assert_eq!(tr.hosts.control_leaks, 0);
        prop_assert!(tr.channels.iter().all(|c| c.conserved()));
        cycles.set(cycles.get() + converged(&tr, &sc).map_err(TestCaseError::fail)?);
        delivered.set(delivered.get() + tr.hosts.delivered);
        Ok(())
    });
    let secs = t.elapsed().as_secs_f64();
    let detail = match &result {
        Ok(()) => format!(
            "{cases} randomized cases, {} measurement cycles checked, {} packets delivered, time={secs:.0}s",
            cycles.get(),
            delivered.get()
        ),
        Err(e) => format!("{e}"),
    };
    check("AC9", result.is_ok() && cycles.get() >= cases as usize, detail);
}
