//! BGP hop distances and random tunnel deployments.

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;

use super::graph::{AsGraph, Asn};
use super::route::propagate_prefix;
use super::BgpError;

pub const UNREACHABLE: u8 = u8::MAX;

/// Length of every AS's converged route toward every other AS's prefix.
/// Needs `n²` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HopMatrix {
    n: usize,
    /// Row per destination.
    d: Vec<u8>,
}

impl HopMatrix {
    pub fn new(g: &AsGraph) -> Self {
        let n = g.len();
        let mut d = vec![UNREACHABLE; n * n];
        d.par_chunks_mut(n.max(1)).enumerate().for_each(|(dst, row)| {
            for (x, r) in propagate_prefix(g, &[dst]).into_iter().enumerate() {
                if let Some(r) = r {
                    row[x] = r.len.min(UNREACHABLE as u16 - 1) as u8;
                }
            }
        });
        HopMatrix { n, d }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Links on `from`'s route to `to`'s prefix; `UNREACHABLE` if none.
    pub fn bgp(&self, from: usize, to: usize) -> u8 {
        self.d[to * self.n + from]
    }

    /// Longer of the two directions; a tunnel has to work both ways.
    pub fn hops(&self, a: usize, b: usize) -> u8 {
        self.bgp(a, b).max(self.bgp(b, a))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TunnelParams {
    /// Tunnel nodes including both endpoints.
    pub t_n: usize,
    /// Bound on every segment's BGP length.
    pub t_l: u8,
    /// BGP length between the endpoints.
    pub l_bgp: u8,
}

impl TunnelParams {
    /// Label like `TN4-TL2-LBGP4`.
    pub fn label(&self) -> String {
        format!("TN{}-TL{}-LBGP{}", self.t_n, self.t_l, self.l_bgp)
    }

    pub fn parse_label(s: &str) -> Result<Self, BgpError> {
        let bad = || BgpError::Invalid(format!("bad scenario label {s:?}, expected like TN4-TL2-LBGP4"));
        let parts: Vec<&str> = s.split('-').collect();
        let [tn, tl, lb] = parts.as_slice() else { return Err(bad()) };
        let num = |p: &str, prefix: &str| p.strip_prefix(prefix).and_then(|v| v.parse::<u64>().ok()).ok_or_else(bad);
        let p = TunnelParams {
            t_n: num(tn, "TN")? as usize,
            t_l: u8::try_from(num(tl, "TL")?).map_err(|_| bad())?,
            l_bgp: u8::try_from(num(lb, "LBGP")?).map_err(|_| bad())?,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), BgpError> {
        if self.t_n < 2 || self.t_l == 0 || self.l_bgp == 0 || self.t_l == UNREACHABLE || self.l_bgp == UNREACHABLE {
            return Err(BgpError::Invalid(format!("bad tunnel parameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TunnelDeployment {
    /// AS1 .. AS_TN as graph indices; AS1 is the source.
    pub nodes: Vec<usize>,
    /// BGP length of each segment (AS_i, AS_i+1).
    pub segments: Vec<u8>,
    pub l_bgp: u8,
}

impl TunnelDeployment {
    pub fn t_n(&self) -> usize {
        self.nodes.len()
    }

    /// Longest segment.
    pub fn t_l(&self) -> u8 {
        self.segments.iter().copied().max().unwrap_or(0)
    }

    /// Total tunneled length.
    pub fn l_t(&self) -> u32 {
        self.segments.iter().map(|&s| s as u32).sum()
    }

    pub fn asns(&self, g: &AsGraph) -> Vec<Asn> {
        self.nodes.iter().map(|&i| g.asn(i)).collect()
    }
}

/// Reusable sampler: endpoint pairs are enumerated once.
#[derive(Debug, Clone)]
pub struct DeploymentSampler<'a> {
    hops: &'a HopMatrix,
    params: TunnelParams,
    pairs: Vec<(usize, usize)>,
    pub max_attempts: usize,
}

impl<'a> DeploymentSampler<'a> {
    pub fn new(g: &AsGraph, hops: &'a HopMatrix, params: TunnelParams) -> Result<Self, BgpError> {
        params.validate()?;
        let mh = g.multihomed_stubs();
        let pairs: Vec<(usize, usize)> = mh
            .iter()
            .flat_map(|&a| mh.iter().map(move |&b| (a, b)))
            .filter(|&(a, b)| a != b && hops.bgp(a, b) == params.l_bgp)
            .collect();
        if pairs.is_empty() {
            return Err(BgpError::Unsatisfiable(format!(
                "no multi-homed stub pair {} BGP hops apart",
                params.l_bgp
            )));
        }
        if params.t_n == 2 && params.l_bgp > params.t_l {
            return Err(BgpError::Unsatisfiable(format!(
                "a single segment of length {} exceeds T_L={}",
                params.l_bgp, params.t_l
            )));
        }
        Ok(DeploymentSampler {
            hops,
            params,
            pairs,
            max_attempts: 10_000,
        })
    }

    pub fn params(&self) -> TunnelParams {
        self.params
    }

    /// Endpoints first, then a forward walk over ASes within `t_l` of the
    /// previous node; the last intermediate node must also be within `t_l`
    /// of the destination. Walks that dead-end start over.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<TunnelDeployment, BgpError> {
        let h = self.hops;
        let tl = self.params.t_l;
        let t_n = self.params.t_n;
        'attempt: for _ in 0..self.max_attempts {
            let &(src, dst) = self.pairs.choose(rng).expect("non-empty");
            let mut nodes = vec![src];
            for i in 1..t_n - 1 {
                let cur = *nodes.last().unwrap();
                let last = i == t_n - 2;
                let cands: Vec<usize> = (0..h.len())
                    .filter(|&y| {
                        y != dst && !nodes.contains(&y) && h.bgp(cur, y) <= tl && (!last || h.bgp(y, dst) <= tl)
                    })
                    .collect();
                match cands.choose(rng) {
                    Some(&y) => nodes.push(y),
                    None => continue 'attempt,
                }
            }
            nodes.push(dst);
            let segments: Vec<u8> = nodes.windows(2).map(|w| h.bgp(w[0], w[1])).collect();
            debug_assert!(segments.iter().all(|&s| s <= tl));
            return Ok(TunnelDeployment {
                nodes,
                segments,
                l_bgp: self.params.l_bgp,
            });
        }
        Err(BgpError::Unsatisfiable(format!(
            "no deployment for {} after {} attempts",
            self.params.label(),
            self.max_attempts
        )))
    }
}

pub fn sample_deployment<R: Rng>(
    g: &AsGraph,
    hops: &HopMatrix,
    params: TunnelParams,
    rng: &mut R,
) -> Result<TunnelDeployment, BgpError> {
    DeploymentSampler::new(g, hops, params)?.sample(rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bgp::synth::{synthetic_topology, SynthParams};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> AsGraph {
        synthetic_topology(
            &SynthParams {
                n_ases: 400,
                tier1: 6,
                ..SynthParams::default()
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn matrix_agrees_with_route_lengths() {
        let g = AsGraph::parse("1|2|-1\n1|3|-1\n3|4|-1\n").unwrap();
        let h = HopMatrix::new(&g);
        let i = |a| g.idx(a).unwrap();
        assert_eq!(h.bgp(i(2), i(4)), 3);
        assert_eq!(h.bgp(i(4), i(4)), 0);
        assert_eq!(h.hops(i(1), i(4)), 2);
    }

    #[test]
    fn endpoints_only_when_two_nodes() {
        let g = small();
        let h = HopMatrix::new(&g);
        let p = TunnelParams { t_n: 2, t_l: 4, l_bgp: 4 };
        let d = sample_deployment(&g, &h, p, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(d.nodes.len(), 2);
        assert_eq!(d.l_t(), 4);
        assert!(d.nodes.iter().all(|&x| g.is_multihomed_stub(x)));
    }

    #[test]
    fn segments_respect_the_bound() {
        let g = small();
        let h = HopMatrix::new(&g);
        let p = TunnelParams { t_n: 4, t_l: 2, l_bgp: 4 };
        let s = DeploymentSampler::new(&g, &h, p).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let d = s.sample(&mut rng).unwrap();
            assert_eq!(d.segments.len(), 3);
            assert!(d.t_l() <= 2 && d.l_t() <= 6);
            assert_eq!(h.bgp(d.nodes[0], d.nodes[3]), 4);
            let mut u = d.nodes.clone();
            u.sort_unstable();
            u.dedup();
            assert_eq!(u.len(), 4);
        }
    }

    #[test]
    fn path_graph_is_unsatisfiable() {
        // No multi-homed stubs at all.
        let g = AsGraph::parse("1|2|-1\n2|3|-1\n3|4|-1\n").unwrap();
        let h = HopMatrix::new(&g);
        let p = TunnelParams { t_n: 3, t_l: 1, l_bgp: 2 };
        assert!(matches!(
            sample_deployment(&g, &h, p, &mut ChaCha8Rng::seed_from_u64(1)),
            Err(BgpError::Unsatisfiable(_))
        ));
    }

    #[test]
    fn labels_round_trip() {
        let p = TunnelParams::parse_label("TN4-TL2-LBGP4").unwrap();
        assert_eq!(p, TunnelParams { t_n: 4, t_l: 2, l_bgp: 4 });
        assert_eq!(p.label(), "TN4-TL2-LBGP4");
        assert!(TunnelParams::parse_label("TN1-TL2-LBGP4").is_err());
        assert!(TunnelParams::parse_label("junk").is_err());
    }
}
