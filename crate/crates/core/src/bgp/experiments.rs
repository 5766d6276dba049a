//! Hijack and reach experiments over tunnel deployments.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::deploy::{DeploymentSampler, HopMatrix, TunnelDeployment, TunnelParams};
use super::graph::AsGraph;
use super::route::{propagate, propagate_prefix, Announcement, Prefix, PrefixRoutes, Target};
use super::BgpError;
use crate::sub_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AdversaryModel {
    /// Announces the destination's prefixes only.
    Weak,
    /// Announces the prefixes of every tunnel node after the source.
    Strong,
}

impl AdversaryModel {
    pub fn as_str(self) -> &'static str {
        match self {
            AdversaryModel::Weak => "weak",
            AdversaryModel::Strong => "strong",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct HijackOutcome {
    pub bgp_hijacked: bool,
    pub tunnel_hijacked: bool,
    /// First hijacked segment, counted from 0.
    pub segment: Option<usize>,
}

/// ASes on the plain BGP path from source to destination.
pub fn bgp_path(g: &AsGraph, dep: &TunnelDeployment) -> Vec<usize> {
    let (src, dst) = (dep.nodes[0], *dep.nodes.last().unwrap());
    let pr = PrefixRoutes {
        routes: propagate_prefix(g, &[dst]),
        bogus: HashSet::new(),
    };
    pr.as_path(src).unwrap_or_default()
}

/// ASes that may not host an adversary: the source-destination BGP path
/// and the tunnel nodes.
pub fn protected_ases(g: &AsGraph, dep: &TunnelDeployment) -> HashSet<usize> {
    let mut banned: HashSet<usize> = bgp_path(g, dep).into_iter().collect();
    banned.extend(dep.nodes.iter().copied());
    banned
}

/// `n` distinct adversaries drawn uniformly outside `banned`. A prefix of a
/// longer draw is a valid shorter draw, and the same stream gives the same
/// adversaries whenever none of them is banned.
pub fn draw_adversaries<R: Rng>(g: &AsGraph, banned: &HashSet<usize>, n: usize, rng: &mut R) -> Vec<usize> {
    let avail = g.len() - banned.iter().filter(|&&b| b < g.len()).count();
    let n = n.min(avail);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = rng.random_range(0..g.len());
        if !banned.contains(&a) && !out.contains(&a) {
            out.push(a);
        }
    }
    out
}

fn announcements(g: &AsGraph, dep: &TunnelDeployment, adversaries: &[usize], model: AdversaryModel) -> Vec<Announcement> {
    let dst = g.asn(*dep.nodes.last().unwrap());
    let mut out = vec![Announcement {
        prefix: Prefix::short(dst),
        announcer: dst,
        legitimate: true,
    }];
    for &node in &dep.nodes[1..] {
        let a = g.asn(node);
        out.push(Announcement {
            prefix: Prefix::slash24(a),
            announcer: a,
            legitimate: true,
        });
    }
    let targets: Vec<Prefix> = match model {
        AdversaryModel::Weak => vec![Prefix::short(dst), Prefix::slash24(dst)],
        AdversaryModel::Strong => std::iter::once(Prefix::short(dst))
            .chain(dep.nodes[1..].iter().map(|&x| Prefix::slash24(g.asn(x))))
            .collect(),
    };
    for &adv in adversaries {
        for &prefix in &targets {
            out.push(Announcement {
                prefix,
                announcer: g.asn(adv),
                legitimate: false,
            });
        }
    }
    out
}

/// Outcome for a fixed set of adversaries.
pub fn evaluate_hijack(g: &AsGraph, dep: &TunnelDeployment, adversaries: &[usize], model: AdversaryModel) -> HijackOutcome {
    if adversaries.is_empty() {
        return HijackOutcome::default();
    }
    let state = propagate(g, &announcements(g, dep, adversaries, model));
    let asns = dep.asns(g);
    let dst = *asns.last().unwrap();
    let bgp_hijacked = state.resolve(g, asns[0], Target::host(dst)).is_hijacked();
    let segment = asns
        .windows(2)
        .position(|w| state.resolve(g, w[0], Target::tunnel(w[1])).is_hijacked());
    HijackOutcome {
        bgp_hijacked,
        tunnel_hijacked: segment.is_some(),
        segment,
    }
}

/// One trial with `n_adv` adversaries drawn uniformly from the allowed pool.
pub fn hijack_trial<R: Rng>(
    g: &AsGraph,
    dep: &TunnelDeployment,
    n_adv: usize,
    model: AdversaryModel,
    rng: &mut R,
) -> HijackOutcome {
    let adv = draw_adversaries(g, &protected_ases(g, dep), n_adv, rng);
    evaluate_hijack(g, dep, &adv, model)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HijackRow {
    pub scenario: String,
    pub n_adv: usize,
    pub model: AdversaryModel,
    pub trials: u64,
    pub tunnel_hits: u64,
    pub bgp_hits: u64,
}

impl HijackRow {
    pub fn p_tunnel(&self) -> f64 {
        self.tunnel_hits as f64 / self.trials as f64
    }

    pub fn p_bgp(&self) -> f64 {
        self.bgp_hits as f64 / self.trials as f64
    }
}

/// Distinct random deployments; trial `t` draws from its own stream, so
/// scenarios run with the same seed are paired trial by trial.
pub fn unique_deployments(
    sampler: &DeploymentSampler<'_>,
    trials: usize,
    seed: u64,
) -> Result<Vec<TunnelDeployment>, BgpError> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2 * t as u64));
        let mut tries = 0;
        loop {
            let d = sampler.sample(&mut rng)?;
            if seen.insert(d.nodes.clone()) {
                out.push(d);
                break;
            }
            tries += 1;
            if tries > 1000 {
                return Err(BgpError::Unsatisfiable(format!(
                    "only {} distinct deployments for {}",
                    out.len(),
                    sampler.params().label()
                )));
            }
        }
    }
    Ok(out)
}

/// Hijack probability per scenario, adversary count and model.
///
/// Each trial is one deployment with one ordered adversary draw; smaller
/// adversary counts use a prefix of that draw and both models see the same
/// adversaries. Scenarios reuse the per-trial streams, so all rows are
/// paired.
pub fn experiment_hijack(
    g: &AsGraph,
    hops: &HopMatrix,
    scenarios: &[TunnelParams],
    n_adv: &[usize],
    trials: usize,
    seed: u64,
) -> Result<Vec<HijackRow>, BgpError> {
    let max_adv = n_adv.iter().copied().max().unwrap_or(0);
    let models = [AdversaryModel::Weak, AdversaryModel::Strong];
    let mut rows = Vec::new();
    for &params in scenarios {
        let sampler = DeploymentSampler::new(g, hops, params)?;
        let deps = unique_deployments(&sampler, trials, seed)?;
        // hits[k][m] = (tunnel, bgp)
        let zero = || vec![[(0u64, 0u64); 2]; n_adv.len()];
        let hits = deps
            .par_iter()
            .enumerate()
            .map(|(t, dep)| {
                let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 2 * t as u64 + 1));
                let advs = draw_adversaries(g, &protected_ases(g, dep), max_adv, &mut rng);
                let mut h = zero();
                for (k, &n) in n_adv.iter().enumerate() {
                    for (m, &model) in models.iter().enumerate() {
                        let o = evaluate_hijack(g, dep, &advs[..n.min(advs.len())], model);
                        h[k][m] = (o.tunnel_hijacked as u64, o.bgp_hijacked as u64);
                    }
                }
                h
            })
            .reduce(zero, |mut a, b| {
                for (x, y) in a.iter_mut().zip(&b) {
                    for m in 0..2 {
                        x[m].0 += y[m].0;
                        x[m].1 += y[m].1;
                    }
                }
                a
            });
        for (k, &n) in n_adv.iter().enumerate() {
            for (m, &model) in models.iter().enumerate() {
                rows.push(HijackRow {
                    scenario: params.label(),
                    n_adv: n,
                    model,
                    trials: trials as u64,
                    tunnel_hits: hits[k][m].0,
                    bgp_hits: hits[k][m].1,
                });
            }
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReachRow {
    pub t_l: u8,
    pub n_deploying: usize,
    pub mean_fraction: f64,
    pub reps: u64,
}

const REACH_CHUNK: u64 = 64;

/// Grows one random deployment and records, after each addition, how many
/// multi-homed stubs are within `t_l` hops of some deploying AS. Each new
/// deploying AS is within `t_l` hops of one already chosen.
fn reach_once<R: Rng>(hops: &HopMatrix, stubs: &[usize], t_l: u8, n_max: usize, rng: &mut R) -> Vec<u64> {
    let n = hops.len();
    let mut chosen: Vec<usize> = Vec::with_capacity(n_max);
    let mut near = vec![false; n];
    let mut covered = vec![false; stubs.len()];
    let mut n_covered = 0u64;
    let mut out = Vec::with_capacity(n_max);
    for step in 0..n_max {
        let next = if step == 0 {
            Some(rng.random_range(0..n))
        } else {
            let cands: Vec<usize> = (0..n).filter(|&y| near[y] && !chosen.contains(&y)).collect();
            cands.choose(rng).copied()
        };
        if let Some(d) = next {
            chosen.push(d);
            for (y, nr) in near.iter_mut().enumerate() {
                *nr |= hops.hops(d, y) <= t_l;
            }
            for (c, &s) in covered.iter_mut().zip(stubs) {
                if !*c && hops.hops(s, d) <= t_l {
                    *c = true;
                    n_covered += 1;
                }
            }
        }
        out.push(n_covered);
    }
    out
}

/// Mean share of multi-homed stubs within `t_l` BGP hops of a deployment
/// of 1..=`n_max` ASes.
pub fn experiment_reach(g: &AsGraph, hops: &HopMatrix, t_l: u8, n_max: usize, reps: u64, seed: u64) -> Vec<ReachRow> {
    let stubs = g.multihomed_stubs();
    if stubs.is_empty() || reps == 0 || g.is_empty() {
        return (1..=n_max)
            .map(|n| ReachRow {
                t_l,
                n_deploying: n,
                mean_fraction: 0.0,
                reps,
            })
            .collect();
    }
    let chunks = reps.div_ceil(REACH_CHUNK);
    let totals = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, c));
            let mut acc = vec![0u64; n_max];
            for _ in 0..REACH_CHUNK.min(reps - c * REACH_CHUNK) {
                for (a, v) in acc.iter_mut().zip(reach_once(hops, &stubs, t_l, n_max, &mut rng)) {
                    *a += v;
                }
            }
            acc
        })
        .reduce(|| vec![0u64; n_max], |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    totals
        .into_iter()
        .enumerate()
        .map(|(i, total)| ReachRow {
            t_l,
            n_deploying: i + 1,
            mean_fraction: total as f64 / (reps as f64 * stubs.len() as f64),
            reps,
        })
        .collect()
}
