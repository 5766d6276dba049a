//! AS relationship graph and the pipe-separated relationship format.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use super::BgpError;

pub type Asn = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rel {
    /// `a` provides transit to `b`.
    ProviderOf,
    Peer,
}

/// Immutable AS graph. Nodes are indexed in ascending ASN order, so
/// comparing indices is the same as comparing AS numbers.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AsGraph {
    asns: Vec<Asn>,
    index: HashMap<Asn, usize>,
    pub(crate) customers: Vec<Vec<usize>>,
    pub(crate) providers: Vec<Vec<usize>>,
    pub(crate) peers: Vec<Vec<usize>>,
}

impl AsGraph {
    /// Builds a graph from `(a, b, rel)` triples. Repeating an edge with the
    /// same relationship is harmless; two different relationships for one
    /// pair are rejected.
    pub fn from_edges<I>(edges: I) -> Result<Self, BgpError>
    where
        I: IntoIterator<Item = (Asn, Asn, Rel)>,
    {
        let mut rels: BTreeMap<(Asn, Asn), (Asn, Rel)> = BTreeMap::new();
        for (a, b, rel) in edges {
            check_edge(&mut rels, a, b, rel).map_err(BgpError::Topology)?;
        }
        Ok(Self::build(rels))
    }

    fn build(rels: BTreeMap<(Asn, Asn), (Asn, Rel)>) -> Self {
        let mut asns: Vec<Asn> = rels.keys().flat_map(|&(a, b)| [a, b]).collect();
        asns.sort_unstable();
        asns.dedup();
        let index: HashMap<Asn, usize> = asns.iter().enumerate().map(|(i, &a)| (a, i)).collect();
        let n = asns.len();
        let mut g = AsGraph {
            asns,
            index,
            customers: vec![Vec::new(); n],
            providers: vec![Vec::new(); n],
            peers: vec![Vec::new(); n],
        };
        for (&(lo, hi), &(first, rel)) in &rels {
            let (a, b) = if first == lo { (lo, hi) } else { (hi, lo) };
            let (ia, ib) = (g.index[&a], g.index[&b]);
            match rel {
                Rel::ProviderOf => {
                    g.customers[ia].push(ib);
                    g.providers[ib].push(ia);
                }
                Rel::Peer => {
                    g.peers[ia].push(ib);
                    g.peers[ib].push(ia);
                }
            }
        }
        for v in g.customers.iter_mut().chain(g.providers.iter_mut()).chain(g.peers.iter_mut()) {
            v.sort_unstable();
        }
        g
    }

    /// Parses `a|b|r` lines, `r` being -1 (a is a provider of b) or 0
    /// (peers). A trailing source column is tolerated. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, BgpError> {
        let mut rels = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |reason: String| BgpError::Parse { line: i + 1, reason };
            let fields: Vec<&str> = line.split('|').collect();
            if !(3..=4).contains(&fields.len()) {
                return Err(err(format!("expected a|b|rel, got {line:?}")));
            }
            let asn = |s: &str| {
                s.trim()
                    .parse::<Asn>()
                    .map_err(|_| err(format!("bad AS number {s:?}")))
            };
            let (a, b) = (asn(fields[0])?, asn(fields[1])?);
            let rel = match fields[2].trim() {
                "-1" => Rel::ProviderOf,
                "0" => Rel::Peer,
                other => return Err(err(format!("unknown relationship {other:?}"))),
            };
            check_edge(&mut rels, a, b, rel).map_err(err)?;
        }
        Ok(Self::build(rels))
    }

    /// Serialises back to the relationship format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for a in 0..self.len() {
            for &c in &self.customers[a] {
                writeln!(out, "{}|{}|-1", self.asns[a], self.asns[c]).unwrap();
            }
            for &p in self.peers[a].iter().filter(|&&p| p > a) {
                writeln!(out, "{}|{}|0", self.asns[a], self.asns[p]).unwrap();
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.asns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.asns.is_empty()
    }

    pub fn asn(&self, idx: usize) -> Asn {
        self.asns[idx]
    }

    pub fn asns(&self) -> &[Asn] {
        &self.asns
    }

    pub fn idx(&self, asn: Asn) -> Option<usize> {
        self.index.get(&asn).copied()
    }

    pub fn customers(&self, idx: usize) -> &[usize] {
        &self.customers[idx]
    }

    pub fn providers(&self, idx: usize) -> &[usize] {
        &self.providers[idx]
    }

    pub fn peers(&self, idx: usize) -> &[usize] {
        &self.peers[idx]
    }

    pub fn degree(&self, idx: usize) -> usize {
        self.customers[idx].len() + self.providers[idx].len() + self.peers[idx].len()
    }

    pub fn edge_count(&self) -> usize {
        self.customers.iter().map(Vec::len).sum::<usize>() + self.peers.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Relationship of `b` as seen from `a`, if adjacent.
    pub fn relation(&self, a: usize, b: usize) -> Option<Neighbor> {
        if self.customers[a].binary_search(&b).is_ok() {
            Some(Neighbor::Customer)
        } else if self.providers[a].binary_search(&b).is_ok() {
            Some(Neighbor::Provider)
        } else if self.peers[a].binary_search(&b).is_ok() {
            Some(Neighbor::Peer)
        } else {
            None
        }
    }

    pub fn is_stub(&self, idx: usize) -> bool {
        self.customers[idx].is_empty()
    }

    pub fn is_multihomed_stub(&self, idx: usize) -> bool {
        self.is_stub(idx) && self.providers[idx].len() >= 2
    }

    pub fn multihomed_stubs(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.is_multihomed_stub(i)).collect()
    }

    pub fn stats(&self) -> TopologyStats {
        let mut degree_histogram = BTreeMap::new();
        for i in 0..self.len() {
            *degree_histogram.entry(self.degree(i)).or_insert(0) += 1;
        }
        TopologyStats {
            n_ases: self.len(),
            n_edges: self.edge_count(),
            n_stubs: (0..self.len()).filter(|&i| self.is_stub(i)).count(),
            n_multihomed_stubs: (0..self.len()).filter(|&i| self.is_multihomed_stub(i)).count(),
            n_stubs_5_providers: (0..self.len())
                .filter(|&i| self.is_stub(i) && self.providers[i].len() >= 5)
                .count(),
            degree_histogram,
        }
    }
}

/// Role of a neighbor relative to the AS looking at it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Neighbor {
    Customer,
    Peer,
    Provider,
}

fn check_edge(rels: &mut BTreeMap<(Asn, Asn), (Asn, Rel)>, a: Asn, b: Asn, rel: Rel) -> Result<(), String> {
    if a == b {
        return Err(format!("self edge on AS{a}"));
    }
    let key = (a.min(b), a.max(b));
    match rels.get(&key) {
        None => {
            rels.insert(key, (a, rel));
            Ok(())
        }
        Some(&(first, old)) => {
            let same = old == rel && (rel == Rel::Peer || first == a);
            if same {
                Ok(())
            } else {
                Err(format!("conflicting relationships for AS{a} and AS{b}"))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopologyStats {
    pub n_ases: usize,
    pub n_edges: usize,
    /// ASes without customers.
    pub n_stubs: usize,
    /// Stubs with two or more providers.
    pub n_multihomed_stubs: usize,
    pub n_stubs_5_providers: usize,
    pub degree_histogram: BTreeMap<usize, usize>,
}
