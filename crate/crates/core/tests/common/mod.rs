//! Independent reference implementations shared by the integration tests.

#![allow(dead_code, clippy::needless_range_loop)]

use dena::bgp::{AsGraph, Asn, Neighbor, Rel};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random graph of up to `max_n` ASes. Provider links always point from a
/// lower to a higher rank, so there are no provider cycles. AS numbers are
/// shuffled so index order and rank order differ.
pub fn random_small_graph<R: Rng>(rng: &mut R, max_n: usize) -> AsGraph {
    loop {
        let n = rng.random_range(2..=max_n);
        let mut asns: Vec<Asn> = (1..=40).collect();
        asns.shuffle(rng);
        asns.truncate(n);
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                let x: f64 = rng.random();
                if x < 0.35 {
                    edges.push((asns[i], asns[j], Rel::ProviderOf));
                } else if x < 0.55 {
                    edges.push((asns[i], asns[j], Rel::Peer));
                }
            }
        }
        if !edges.is_empty() {
            return AsGraph::from_edges(edges).unwrap();
        }
    }
}

fn class_rank(n: Neighbor) -> u8 {
    match n {
        Neighbor::Customer => 1,
        Neighbor::Peer => 2,
        Neighbor::Provider => 3,
    }
}

/// Would `from` pass the route it holds (learned with `class`, or its own
/// when `None`) to `to`?
fn exports(g: &AsGraph, from: usize, class: Option<Neighbor>, to: usize) -> bool {
    match class {
        None | Some(Neighbor::Customer) => true,
        _ => g.relation(from, to) == Some(Neighbor::Customer),
    }
}

/// Best path per AS (AS itself first, originator last) by iterating the
/// path-vector exchange to a fixed point: each round every AS re-selects
/// among what its neighbors currently export, preferring customer, then
/// peer, then provider routes, then shorter paths, then the lowest
/// neighbor AS number.
pub fn path_vector_fixed_point(g: &AsGraph, origins: &[usize]) -> Vec<Option<Vec<usize>>> {
    let n = g.len();
    // (path, class the route was learned with)
    let mut best: Vec<Option<(Vec<usize>, Option<Neighbor>)>> = vec![None; n];
    for &o in origins {
        best[o] = Some((vec![o], None));
    }
    for _round in 0..200 {
        let mut next = best.clone();
        for x in 0..n {
            if origins.contains(&x) {
                continue;
            }
            let mut cand: Option<(u8, usize, Asn, Vec<usize>, Neighbor)> = None;
            for y in 0..n {
                let Some(rel) = g.relation(x, y) else { continue };
                let Some((path, class)) = &best[y] else { continue };
                if path.contains(&x) || !exports(g, y, *class, x) {
                    continue;
                }
                let key = (class_rank(rel), path.len() + 1, g.asn(y));
                if cand.as_ref().is_none_or(|c| key < (c.0, c.1, c.2)) {
                    let mut p = vec![x];
                    p.extend(path);
                    cand = Some((key.0, key.1, key.2, p, rel));
                }
            }
            next[x] = cand.map(|c| (c.3, Some(c.4)));
        }
        if next == best {
            return best.into_iter().map(|b| b.map(|(p, _)| p)).collect();
        }
        best = next;
    }
    panic!("path-vector exchange did not settle");
}

/// Every simple path from `x` to one of `origins` that is valley free.
pub fn valley_free_paths(g: &AsGraph, x: usize, origins: &[usize]) -> Vec<Vec<usize>> {
    fn walk(g: &AsGraph, path: &mut Vec<usize>, down: bool, origins: &[usize], out: &mut Vec<Vec<usize>>) {
        let cur = *path.last().unwrap();
        if origins.contains(&cur) {
            out.push(path.clone());
            return;
        }
        for y in 0..g.len() {
            if path.contains(&y) {
                continue;
            }
            let next_down = match g.relation(cur, y) {
                Some(Neighbor::Provider) if !down => false,
                Some(Neighbor::Peer) if !down => true,
                Some(Neighbor::Customer) => true,
                _ => continue,
            };
            path.push(y);
            walk(g, path, next_down, origins, out);
            path.pop();
        }
    }
    let mut out = Vec::new();
    walk(g, &mut vec![x], false, origins, &mut out);
    out
}

/// Checks one prefix of one graph against the reference; returns a
/// description of the first disagreement.
pub fn check_prefix(g: &AsGraph, origins: &[usize]) -> Result<(), String> {
    use dena::bgp::route::{propagate_prefix, PrefixRoutes};
    let fast = PrefixRoutes {
        routes: propagate_prefix(g, origins),
        bogus: Default::default(),
    };
    let reference = path_vector_fixed_point(g, origins);
    for x in 0..g.len() {
        let got = fast.as_path(x);
        if got != reference[x] {
            return Err(format!(
                "AS{} origins {:?}: got {:?}, reference {:?}\n{}",
                g.asn(x),
                origins.iter().map(|&o| g.asn(o)).collect::<Vec<_>>(),
                got.map(|p| p.iter().map(|&i| g.asn(i)).collect::<Vec<_>>()),
                reference[x].as_ref().map(|p| p.iter().map(|&i| g.asn(i)).collect::<Vec<_>>()),
                g.to_text()
            ));
        }
        let all = valley_free_paths(g, x, origins);
        match &reference[x] {
            Some(p) => {
                if !all.contains(p) {
                    return Err(format!("AS{}: chosen path is not valley free", g.asn(x)));
                }
                // Customer routes are the shortest among all paths that
                // start with a customer link.
                if p.len() > 1 && g.relation(p[0], p[1]) == Some(Neighbor::Customer) {
                    let shortest = all
                        .iter()
                        .filter(|q| q.len() > 1 && g.relation(q[0], q[1]) == Some(Neighbor::Customer))
                        .map(Vec::len)
                        .min()
                        .unwrap();
                    if shortest != p.len() {
                        return Err(format!("AS{}: customer route is not the shortest", g.asn(x)));
                    }
                }
            }
            None => {
                if !all.is_empty() && !origins.contains(&x) {
                    return Err(format!("AS{}: has valley-free paths but no route", g.asn(x)));
                }
            }
        }
    }
    Ok(())
}
