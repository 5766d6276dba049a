//! Synthetic Internet-like AS topologies: a clique of tier-1 transit
//! networks, a transit layer with peering, and a large stub fringe with
//! mixed single- and multi-homing.

use rand::distr::weighted::WeightedIndex;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use super::graph::{AsGraph, Asn, Rel};
use super::BgpError;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_ases: usize,
    pub tier1: usize,
    /// Share of non-tier-1 ASes that sell transit.
    pub transit_frac: f64,
    /// Mean peering links per transit AS.
    pub transit_peers: f64,
    /// Probability that a stub has 1, 2, 3, 4, 5 providers.
    pub stub_providers: [f64; 5],
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_ases: 2000,
            tier1: 12,
            transit_frac: 0.14,
            transit_peers: 4.0,
            stub_providers: [0.43, 0.37, 0.12, 0.05, 0.03],
        }
    }
}

/// Draws `k` distinct indices with probability proportional to `weights`.
fn weighted_distinct<R: Rng>(rng: &mut R, weights: &[f64], k: usize) -> Vec<usize> {
    let mut w = weights.to_vec();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k.min(w.iter().filter(|x| **x > 0.0).count()) {
        let i = WeightedIndex::new(&w).expect("positive weights").sample(rng);
        out.push(i);
        w[i] = 0.0;
    }
    out
}

/// Builds a topology. ASNs are 1..=n in creation order, so tier-1
/// networks carry the smallest numbers.
pub fn synthetic_topology(p: &SynthParams, seed: u64) -> Result<AsGraph, BgpError> {
    if p.tier1 < 2 || p.n_ases <= p.tier1 * 2 {
        return Err(BgpError::Invalid(format!(
            "need at least 2 tier-1 ASes and more than twice as many ASes, got {} of {}",
            p.tier1, p.n_ases
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n_ases;
    let n_transit = ((n - p.tier1) as f64 * p.transit_frac).round() as usize;
    let asn = |i: usize| (i + 1) as Asn;
    let mut edges: Vec<(Asn, Asn, Rel)> = Vec::new();
    // Customer counts drive preferential attachment.
    let mut cust = vec![0usize; n];

    for a in 0..p.tier1 {
        for b in a + 1..p.tier1 {
            edges.push((asn(a), asn(b), Rel::Peer));
        }
    }

    let transit_end = p.tier1 + n_transit;
    for t in p.tier1..transit_end {
        let k = rng.random_range(1..=3usize);
        let weights: Vec<f64> = (0..t).map(|u| (cust[u] + 1) as f64).collect();
        for u in weighted_distinct(&mut rng, &weights, k) {
            edges.push((asn(u), asn(t), Rel::ProviderOf));
            cust[u] += 1;
        }
    }
    // Transit peering among networks that are not already related.
    let mut linked: std::collections::HashSet<(usize, usize)> = edges
        .iter()
        .map(|&(a, b, _)| ((a - 1) as usize, (b - 1) as usize))
        .flat_map(|(a, b)| [(a, b), (b, a)])
        .collect();
    let poisson = Poisson::new(p.transit_peers / 2.0).expect("positive rate");
    if n_transit >= 2 {
        for t in p.tier1..transit_end {
            let k = poisson.sample(&mut rng) as usize;
            for j in sample(&mut rng, n_transit, k.min(n_transit)) {
                let u = p.tier1 + j;
                if u != t && linked.insert((t, u)) {
                    linked.insert((u, t));
                    edges.push((asn(t), asn(u), Rel::Peer));
                }
            }
        }
    }

    let homing = WeightedIndex::new(p.stub_providers).map_err(|e| BgpError::Invalid(e.to_string()))?;
    let pool = transit_end;
    for s in transit_end..n {
        let k = homing.sample(&mut rng) + 1;
        let weights: Vec<f64> = (0..pool).map(|u| (cust[u] + 1) as f64).collect();
        for u in weighted_distinct(&mut rng, &weights, k) {
            edges.push((asn(u), asn(s), Rel::ProviderOf));
            cust[u] += 1;
        }
    }
    AsGraph::from_edges(edges)
}
