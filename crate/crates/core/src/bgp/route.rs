//! Converged routes under customer > peer > provider preference with
//! valley-free export, and longest-prefix forwarding over them.

use std::collections::{BTreeMap, HashSet};

use super::graph::{AsGraph, Asn, Neighbor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PrefixLen {
    /// The AS's ordinary, less specific block.
    Short,
    /// A /24 inside that block.
    Slash24,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Prefix {
    pub origin_tag: Asn,
    pub length: PrefixLen,
}

impl Prefix {
    pub fn short(asn: Asn) -> Self {
        Prefix {
            origin_tag: asn,
            length: PrefixLen::Short,
        }
    }

    pub fn slash24(asn: Asn) -> Self {
        Prefix {
            origin_tag: asn,
            length: PrefixLen::Slash24,
        }
    }

    pub fn covers(&self, dst: Target) -> bool {
        self.origin_tag == dst.owner && (self.length == PrefixLen::Short || dst.in_slash24)
    }
}

/// An address inside some AS's block: either inside its /24 (tunnel
/// endpoint) or elsewhere in the short prefix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Target {
    pub owner: Asn,
    pub in_slash24: bool,
}

impl Target {
    pub fn host(owner: Asn) -> Self {
        Target {
            owner,
            in_slash24: false,
        }
    }

    pub fn tunnel(owner: Asn) -> Self {
        Target {
            owner,
            in_slash24: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Announcement {
    pub prefix: Prefix,
    pub announcer: Asn,
    pub legitimate: bool,
}

/// Where a route was learned from; the order is the preference order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LearnedFrom {
    Origin,
    Customer,
    Peer,
    Provider,
}

/// Best route of one AS for one prefix, as graph indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Route {
    /// Self for originated routes.
    pub next_hop: usize,
    /// AS-level links to the originator.
    pub len: u16,
    pub learned_from: LearnedFrom,
    pub origin: usize,
}

/// Routes for a single prefix, one slot per AS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixRoutes {
    pub routes: Vec<Option<Route>>,
    /// Originators that are not the legitimate owner.
    pub bogus: HashSet<usize>,
}

impl PrefixRoutes {
    /// AS path from `from` to the originator, both ends included.
    pub fn as_path(&self, from: usize) -> Option<Vec<usize>> {
        let mut path = vec![from];
        let mut cur = from;
        loop {
            let r = self.routes[cur]?;
            if r.learned_from == LearnedFrom::Origin {
                return Some(path);
            }
            cur = r.next_hop;
            path.push(cur);
        }
    }
}

/// Stable routes for a set of origins announcing one prefix.
///
/// Customer routes climb from the origins level by level, peer routes
/// take one step across, and provider routes descend in length order. Ties
/// within a class and length go to the lowest neighbor.
pub fn propagate_prefix(g: &AsGraph, origins: &[usize]) -> Vec<Option<Route>> {
    let n = g.len();
    let mut routes: Vec<Option<Route>> = vec![None; n];
    let mut frontier: Vec<usize> = Vec::new();
    for &o in origins {
        if routes[o].is_none() {
            routes[o] = Some(Route {
                next_hop: o,
                len: 0,
                learned_from: LearnedFrom::Origin,
                origin: o,
            });
            frontier.push(o);
        }
    }
    frontier.sort_unstable();

    // Customer routes, breadth first upwards.
    let mut len = 0u16;
    while !frontier.is_empty() {
        len += 1;
        let mut next: Vec<usize> = Vec::new();
        // Frontier is ascending, so the first claim is the lowest next hop.
        for &x in &frontier {
            let origin = routes[x].unwrap().origin;
            for &p in &g.providers[x] {
                if routes[p].is_none() {
                    routes[p] = Some(Route {
                        next_hop: x,
                        len,
                        learned_from: LearnedFrom::Customer,
                        origin,
                    });
                    next.push(p);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
    }

    // Peer routes: one hop from a customer or originated route.
    let mut peer_routes = Vec::new();
    for x in 0..n {
        if routes[x].is_some() {
            continue;
        }
        let best = g.peers[x]
            .iter()
            .filter_map(|&y| {
                let r = routes[y]?;
                (r.learned_from <= LearnedFrom::Customer).then_some((r.len, y, r.origin))
            })
            .min();
        if let Some((l, y, origin)) = best {
            peer_routes.push((
                x,
                Route {
                    next_hop: y,
                    len: l + 1,
                    learned_from: LearnedFrom::Peer,
                    origin,
                },
            ));
        }
    }
    for (x, r) in peer_routes {
        routes[x] = Some(r);
    }

    // Provider routes, shortest first. Buckets are sorted before use so
    // the lowest provider claims a customer first.
    let mut buckets: Vec<Vec<usize>> = Vec::new();
    for (x, r) in routes.iter().enumerate() {
        if let Some(r) = r {
            let l = r.len as usize;
            if buckets.len() <= l {
                buckets.resize_with(l + 1, Vec::new);
            }
            buckets[l].push(x);
        }
    }
    let mut l = 0;
    while l < buckets.len() {
        let mut level = std::mem::take(&mut buckets[l]);
        level.sort_unstable();
        let mut next = Vec::new();
        for &x in &level {
            let origin = routes[x].unwrap().origin;
            for &c in &g.customers[x] {
                if routes[c].is_none() {
                    routes[c] = Some(Route {
                        next_hop: x,
                        len: l as u16 + 1,
                        learned_from: LearnedFrom::Provider,
                        origin,
                    });
                    next.push(c);
                }
            }
        }
        if !next.is_empty() {
            if buckets.len() <= l + 1 {
                buckets.push(Vec::new());
            }
            buckets[l + 1].extend(next);
        }
        l += 1;
    }
    routes
}

/// Converged routing for every announced prefix.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RoutingState {
    pub prefixes: BTreeMap<Prefix, PrefixRoutes>,
}

/// Computes the converged state; prefixes are independent of each other.
/// Announcers not in the graph are ignored.
pub fn propagate(g: &AsGraph, announcements: &[Announcement]) -> RoutingState {
    let mut by_prefix: BTreeMap<Prefix, (Vec<usize>, HashSet<usize>)> = BTreeMap::new();
    for a in announcements {
        let Some(idx) = g.idx(a.announcer) else { continue };
        let e = by_prefix.entry(a.prefix).or_default();
        e.0.push(idx);
        if !a.legitimate {
            e.1.insert(idx);
        }
    }
    // Prefixes with the same announcers converge to the same routes.
    let mut memo: std::collections::HashMap<Vec<usize>, Vec<Option<Route>>> = Default::default();
    let prefixes = by_prefix
        .into_iter()
        .map(|(p, (mut origins, bogus))| {
            origins.sort_unstable();
            origins.dedup();
            let routes = memo
                .entry(origins)
                .or_insert_with_key(|o| propagate_prefix(g, o))
                .clone();
            (p, PrefixRoutes { routes, bogus })
        })
        .collect();
    RoutingState { prefixes }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    /// Forwarding path as AS numbers, source first.
    Legit(Vec<Asn>),
    Hijacked(Asn),
    Unreachable,
}

impl Resolution {
    pub fn is_hijacked(&self) -> bool {
        matches!(self, Resolution::Hijacked(_))
    }
}

impl RoutingState {
    /// Most specific route `at` holds toward `dst`.
    fn lookup(&self, at: usize, dst: Target) -> Option<(&PrefixRoutes, Route)> {
        [PrefixLen::Slash24, PrefixLen::Short]
            .into_iter()
            .map(|length| Prefix {
                origin_tag: dst.owner,
                length,
            })
            .filter(|p| p.covers(dst))
            .find_map(|p| {
                let pr = self.prefixes.get(&p)?;
                Some((pr, pr.routes[at]?))
            })
    }

    /// Follows each AS's longest-prefix match hop by hop from `src`.
    pub fn resolve(&self, g: &AsGraph, src: Asn, dst: Target) -> Resolution {
        let Some(mut cur) = g.idx(src) else {
            return Resolution::Unreachable;
        };
        let mut path = vec![src];
        let mut seen = HashSet::new();
        loop {
            if !seen.insert(cur) {
                return Resolution::Unreachable;
            }
            let Some((pr, r)) = self.lookup(cur, dst) else {
                return Resolution::Unreachable;
            };
            if r.learned_from == LearnedFrom::Origin {
                return if pr.bogus.contains(&cur) {
                    Resolution::Hijacked(g.asn(cur))
                } else {
                    Resolution::Legit(path)
                };
            }
            cur = r.next_hop;
            path.push(g.asn(cur));
        }
    }
}

/// True if the AS path never goes back up after going down or across.
pub fn is_valley_free(g: &AsGraph, path: &[usize]) -> bool {
    // Walk from the source: up* (peer)? down*.
    let mut descending = false;
    for w in path.windows(2) {
        match g.relation(w[0], w[1]) {
            Some(Neighbor::Provider) => {
                if descending {
                    return false;
                }
            }
            Some(Neighbor::Peer) => {
                if descending {
                    return false;
                }
                descending = true;
            }
            Some(Neighbor::Customer) => descending = true,
            None => return false,
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(text: &str) -> AsGraph {
        AsGraph::parse(text).unwrap()
    }

    fn route_of(g: &AsGraph, rs: &[Option<Route>], asn: Asn) -> Option<(Asn, u16, LearnedFrom)> {
        rs[g.idx(asn)?].map(|r| (g.asn(r.next_hop), r.len, r.learned_from))
    }

    #[test]
    fn tree_routes_follow_the_tree() {
        // 1 on top, 2 and 3 below, 4 and 5 under 2, 6 under 3.
        let g = graph("1|2|-1\n1|3|-1\n2|4|-1\n2|5|-1\n3|6|-1\n");
        let rs = propagate_prefix(&g, &[g.idx(4).unwrap()]);
        assert_eq!(route_of(&g, &rs, 2), Some((4, 1, LearnedFrom::Customer)));
        assert_eq!(route_of(&g, &rs, 1), Some((2, 2, LearnedFrom::Customer)));
        assert_eq!(route_of(&g, &rs, 5), Some((2, 2, LearnedFrom::Provider)));
        assert_eq!(route_of(&g, &rs, 6), Some((3, 4, LearnedFrom::Provider)));
    }

    #[test]
    fn customer_route_beats_shorter_peer_route() {
        // 1 reaches 9 through a customer chain of length 4, or via peer 2 in 2.
        let g = graph("1|10|-1\n10|11|-1\n11|12|-1\n12|9|-1\n1|2|0\n2|9|-1\n");
        let rs = propagate_prefix(&g, &[g.idx(9).unwrap()]);
        assert_eq!(route_of(&g, &rs, 1), Some((10, 4, LearnedFrom::Customer)));
    }

    #[test]
    fn shorter_route_wins_within_a_class() {
        let g = graph("1|2|-1\n2|9|-1\n1|3|-1\n3|4|-1\n4|9|-1\n");
        let rs = propagate_prefix(&g, &[g.idx(9).unwrap()]);
        assert_eq!(route_of(&g, &rs, 1), Some((2, 2, LearnedFrom::Customer)));
    }

    #[test]
    fn ties_go_to_lowest_neighbor() {
        let g = graph("5|9|-1\n3|9|-1\n1|5|-1\n1|3|-1\n");
        let rs = propagate_prefix(&g, &[g.idx(9).unwrap()]);
        assert_eq!(route_of(&g, &rs, 1), Some((3, 2, LearnedFrom::Customer)));
    }

    #[test]
    fn peer_routes_are_not_passed_to_providers_or_peers() {
        // 9 is a customer of 2; 1 peers with 2; 1's provider 7 and peer 8
        // must not hear about 9 through 1.
        let g = graph("2|9|-1\n1|2|0\n7|1|-1\n1|8|0\n");
        let rs = propagate_prefix(&g, &[g.idx(9).unwrap()]);
        assert_eq!(route_of(&g, &rs, 1), Some((2, 2, LearnedFrom::Peer)));
        assert_eq!(route_of(&g, &rs, 7), None);
        assert_eq!(route_of(&g, &rs, 8), None);
    }

    #[test]
    fn resolve_without_adversary_is_legit() {
        let g = graph("1|2|-1\n1|3|-1\n");
        let st = propagate(
            &g,
            &[Announcement {
                prefix: Prefix::short(3),
                announcer: 3,
                legitimate: true,
            }],
        );
        assert_eq!(st.resolve(&g, 2, Target::host(3)), Resolution::Legit(vec![2, 1, 3]));
        assert_eq!(st.resolve(&g, 2, Target::host(4)), Resolution::Unreachable);
    }

    #[test]
    fn slash24_survives_short_hijack() {
        // Adversary 4 is a direct customer of the source's provider.
        let g = graph("1|2|-1\n1|3|-1\n1|4|-1\n");
        let legit = |p| Announcement {
            prefix: p,
            announcer: 3,
            legitimate: true,
        };
        let adv = |p| Announcement {
            prefix: p,
            announcer: 4,
            legitimate: false,
        };
        let st = propagate(&g, &[legit(Prefix::short(3)), legit(Prefix::slash24(3)), adv(Prefix::short(3))]);
        assert!(matches!(st.resolve(&g, 2, Target::tunnel(3)), Resolution::Legit(_)));
        // The rest of the short block ties on length; 3 < 4 keeps it legit.
        assert!(matches!(st.resolve(&g, 2, Target::host(3)), Resolution::Legit(_)));
        let st = propagate(&g, &[legit(Prefix::slash24(3)), adv(Prefix::slash24(3))]);
        assert!(matches!(st.resolve(&g, 2, Target::tunnel(3)), Resolution::Legit(_)));
    }

    #[test]
    fn adjacent_customer_adversary_hijacks() {
        // The source 1 has the adversary 4 as a customer and reaches the
        // victim 3 only via its provider 5.
        let g = graph("5|1|-1\n5|3|-1\n1|4|-1\n");
        let st = propagate(
            &g,
            &[
                Announcement {
                    prefix: Prefix::slash24(3),
                    announcer: 3,
                    legitimate: true,
                },
                Announcement {
                    prefix: Prefix::slash24(3),
                    announcer: 4,
                    legitimate: false,
                },
            ],
        );
        assert_eq!(st.resolve(&g, 1, Target::tunnel(3)), Resolution::Hijacked(4));
    }

    #[test]
    fn valley_check() {
        let g = graph("1|2|-1\n1|3|-1\n2|3|0\n");
        let i = |a| g.idx(a).unwrap();
        assert!(is_valley_free(&g, &[i(2), i(1), i(3)]));
        assert!(is_valley_free(&g, &[i(2), i(3)]));
        assert!(!is_valley_free(&g, &[i(1), i(2), i(3)]));
        assert!(!is_valley_free(&g, &[i(1), i(3), i(2)]));
    }
}
