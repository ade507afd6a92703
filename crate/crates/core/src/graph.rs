//! Directed weighted brain graphs and their network measures.
//!
//! Clustering and assortativity use the undirected collapse of the graph
//! (one link per connected pair, weight = larger of the two directions);
//! shortest paths follow edge directions.

use std::collections::{BTreeMap, BinaryHeap, HashSet};
use std::cmp::Ordering;

use ndarray::ArrayView2;
use rand::{Rng as _, RngCore};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::PairIndex;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BrainGraph {
    out: Vec<BTreeMap<usize, f64>>,
}

impl BrainGraph {
    pub fn new(n_nodes: usize) -> Self {
        Self {
            out: vec![BTreeMap::new(); n_nodes],
        }
    }

    pub fn from_edges(n_nodes: usize, edges: impl IntoIterator<Item = Edge>) -> Result<Self> {
        let mut g = Self::new(n_nodes);
        for e in edges {
            g.add_edge(e.src, e.dst, e.weight)?;
        }
        Ok(g)
    }

    pub fn add_edge(&mut self, src: usize, dst: usize, weight: f64) -> Result<()> {
        let n = self.n_nodes();
        if src >= n || dst >= n {
            return Err(Error::arg("edge", format!("({src}, {dst}) out of range for {n} nodes")));
        }
        if src == dst {
            return Err(Error::arg("edge", format!("self-loop at node {src}")));
        }
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::arg("weight", format!("edge ({src}, {dst}) has weight {weight}")));
        }
        if self.out[src].insert(dst, weight).is_some() {
            return Err(Error::arg("edge", format!("duplicate edge ({src}, {dst})")));
        }
        Ok(())
    }

    pub fn n_nodes(&self) -> usize {
        self.out.len()
    }

    pub fn n_edges(&self) -> usize {
        self.out.iter().map(BTreeMap::len).sum()
    }

    pub fn weight(&self, src: usize, dst: usize) -> Option<f64> {
        self.out.get(src)?.get(&dst).copied()
    }

    /// Edges ordered by source, then destination.
    pub fn edges(&self) -> Vec<Edge> {
        self.out
            .iter()
            .enumerate()
            .flat_map(|(src, m)| m.iter().map(move |(&dst, &weight)| Edge { src, dst, weight }))
            .collect()
    }

    pub fn reversed(&self) -> Self {
        let mut g = Self::new(self.n_nodes());
        for e in self.edges() {
            g.out[e.dst].insert(e.src, e.weight);
        }
        g
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            out: self
                .out
                .iter()
                .map(|m| m.iter().map(|(&k, &w)| (k, w * factor)).collect())
                .collect(),
        }
    }

    /// Symmetric neighbour maps; a pair's weight is the larger direction.
    pub fn undirected(&self) -> Vec<BTreeMap<usize, f64>> {
        let mut und = vec![BTreeMap::new(); self.n_nodes()];
        for e in self.edges() {
            for (a, b) in [(e.src, e.dst), (e.dst, e.src)] {
                let w = und[a].entry(b).or_insert(e.weight);
                if e.weight > *w {
                    *w = e.weight;
                }
            }
        }
        und
    }

    /// Neighbour counts on the undirected collapse.
    pub fn degrees(&self) -> Vec<usize> {
        self.undirected().iter().map(BTreeMap::len).collect()
    }

    /// (in, out) edge counts per node.
    pub fn directed_degrees(&self) -> Vec<(usize, usize)> {
        let mut d: Vec<(usize, usize)> = self.out.iter().map(|m| (0, m.len())).collect();
        for e in self.edges() {
            d[e.dst].0 += 1;
        }
        d
    }

    pub fn to_edge_csv(&self, names: &[String]) -> String {
        let mut s = String::from("src,dst,weight\n");
        for e in self.edges() {
            s.push_str(&format!("{},{},{}\n", names[e.src], names[e.dst], e.weight));
        }
        s
    }
}

/// One edge per masked pair, from the leading to the lagging channel, with
/// weight `|psi|`. Pairs with zero index are left out.
pub fn build_graph(psi: ArrayView2<'_, f64>, mask: &[usize]) -> Result<BrainGraph> {
    let n = psi.nrows();
    if psi.ncols() != n {
        return Err(Error::arg("psi", "matrix is not square"));
    }
    let scale = psi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-12 * scale.max(1.0);
    for i in 0..n {
        if psi[(i, i)].abs() > tol {
            return Err(Error::arg("psi", format!("nonzero diagonal at {i}")));
        }
        for j in i + 1..n {
            if (psi[(i, j)] + psi[(j, i)]).abs() > tol {
                return Err(Error::arg("psi", format!("not antisymmetric at ({i}, {j})")));
            }
        }
    }
    let pairs = PairIndex::new(n);
    let mut g = BrainGraph::new(n);
    for &f in mask {
        let (i, j) = pairs.pair(f)?;
        let v = psi[(i, j)];
        if v > 0.0 {
            g.add_edge(i, j, v)?;
        } else if v < 0.0 {
            g.add_edge(j, i, -v)?;
        }
    }
    Ok(g)
}

/// Weighted clustering averaged over all nodes: geometric mean of the
/// three normalised link weights per triangle. Nodes with fewer than two
/// neighbours contribute zero.
pub fn clustering(g: &BrainGraph) -> f64 {
    let n = g.n_nodes();
    if n == 0 {
        return 0.0;
    }
    let und = g.undirected();
    let max_w = und.iter().flat_map(|m| m.values()).fold(0.0f64, |a, &w| a.max(w));
    if max_w == 0.0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|u| {
            let nb: Vec<(usize, f64)> = und[u].iter().map(|(&v, &w)| (v, w / max_w)).collect();
            let k = nb.len();
            if k < 2 {
                return 0.0;
            }
            let mut s = 0.0;
            for a in 0..k {
                for b in a + 1..k {
                    if let Some(&w) = und[nb[a].0].get(&nb[b].0) {
                        s += (nb[a].1 * nb[b].1 * w / max_w).cbrt();
                    }
                }
            }
            2.0 * s / (k * (k - 1)) as f64
        })
        .sum();
    total / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthMap {
    /// Stronger connections are shorter: length = 1 / weight.
    #[default]
    Inverse,
    Identity,
}

impl LengthMap {
    fn length(self, w: f64) -> f64 {
        match self {
            LengthMap::Inverse => 1.0 / w,
            LengthMap::Identity => w,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLength {
    pub mean: f64,
    pub reachable_pairs: usize,
    pub unreachable_pairs: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Visit(f64, usize);

impl Eq for Visit {}

impl PartialOrd for Visit {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Visit {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

fn dijkstra(g: &BrainGraph, src: usize, map: LengthMap) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; g.n_nodes()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Visit(0.0, src));
    while let Some(Visit(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for (&v, &w) in &g.out[u] {
            let nd = d + map.length(w);
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(Visit(nd, v));
            }
        }
    }
    dist
}

/// Mean directed shortest-path length over ordered pairs that are reachable.
pub fn avg_shortest_path(g: &BrainGraph, map: LengthMap) -> Result<PathLength> {
    let n = g.n_nodes();
    if n < 2 {
        return Err(Error::arg("graph", "need at least two nodes"));
    }
    let per_source: Vec<(f64, usize)> = (0..n)
        .into_par_iter()
        .map(|s| {
            let d = dijkstra(g, s, map);
            d.iter()
                .enumerate()
                .filter(|&(t, v)| t != s && v.is_finite())
                .fold((0.0, 0), |(sum, c), (_, v)| (sum + v, c + 1))
        })
        .collect();
    let sum: f64 = per_source.iter().map(|p| p.0).sum();
    let reachable: usize = per_source.iter().map(|p| p.1).sum();
    if reachable == 0 {
        return Err(Error::UndefinedMetric("no node pair is connected by a path".into()));
    }
    Ok(PathLength {
        mean: sum / reachable as f64,
        reachable_pairs: reachable,
        unreachable_pairs: n * (n - 1) - reachable,
    })
}

/// Pearson correlation of neighbour counts across both ends of every link
/// of the undirected collapse.
pub fn assortativity(g: &BrainGraph) -> Result<f64> {
    let und = g.undirected();
    let deg: Vec<f64> = und.iter().map(|m| m.len() as f64).collect();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (u, m) in und.iter().enumerate() {
        for &v in m.keys() {
            xs.push(deg[u]);
            ys.push(deg[v]);
        }
    }
    if xs.len() < 4 {
        return Err(Error::UndefinedMetric("assortativity needs at least two links".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedMetric("all linked nodes have the same degree".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// A connected pair with the weights of both directions, `a -> b` first.
#[derive(Debug, Clone, Copy)]
struct Link {
    a: usize,
    b: usize,
    ab: Option<f64>,
    ba: Option<f64>,
}

impl Link {
    fn flipped(self) -> Self {
        Link {
            a: self.b,
            b: self.a,
            ab: self.ba,
            ba: self.ab,
        }
    }
}

fn key(u: usize, v: usize) -> (usize, usize) {
    (u.min(v), u.max(v))
}

fn links(g: &BrainGraph) -> Vec<Link> {
    let mut out = Vec::new();
    for (u, m) in g.undirected().iter().enumerate() {
        for &v in m.keys().filter(|&&v| v > u) {
            out.push(Link {
                a: u,
                b: v,
                ab: g.weight(u, v),
                ba: g.weight(v, u),
            });
        }
    }
    out
}

fn from_links(n: usize, links: &[Link]) -> BrainGraph {
    let mut g = BrainGraph::new(n);
    for l in links {
        if let Some(w) = l.ab {
            g.out[l.a].insert(l.b, w);
        }
        if let Some(w) = l.ba {
            g.out[l.b].insert(l.a, w);
        }
    }
    g
}

/// Double-edge swaps on the link set. Links `a-b` and `c-d` with the same
/// direction pattern become `a-d` and `c-b`, each keeping its direction and
/// weights relative to its first end, so in- and out-degrees are unchanged. Swaps that would create a
/// self-loop or an existing link are skipped. `accept` sees the old and the
/// new pair of links.
fn swap_links(
    g: &BrainGraph,
    attempts: usize,
    rng: &mut impl RngCore,
    mut accept: impl FnMut([(usize, usize); 2], [(usize, usize); 2]) -> bool,
) -> Result<BrainGraph> {
    let mut ls = links(g);
    if ls.len() < 2 {
        return Err(Error::arg("graph", format!("{} links, need at least two to swap", ls.len())));
    }
    let mut present: HashSet<(usize, usize)> = ls.iter().map(|l| key(l.a, l.b)).collect();
    for _ in 0..attempts {
        let i = rng.gen_range(0..ls.len());
        let mut j = rng.gen_range(0..ls.len() - 1);
        if j >= i {
            j += 1;
        }
        let x = ls[i];
        let y = if rng.gen_bool(0.5) { ls[j].flipped() } else { ls[j] };
        let (a, b, c, d) = (x.a, x.b, y.a, y.b);
        if a == d || c == b || a == c || b == d {
            continue;
        }
        if (x.ab.is_some(), x.ba.is_some()) != (y.ab.is_some(), y.ba.is_some()) {
            continue;
        }
        if present.contains(&key(a, d)) || present.contains(&key(c, b)) {
            continue;
        }
        if !accept([(a, b), (c, d)], [(a, d), (c, b)]) {
            continue;
        }
        present.remove(&key(a, b));
        present.remove(&key(c, d));
        present.insert(key(a, d));
        present.insert(key(c, b));
        ls[i] = Link { b: d, ..x };
        ls[j] = Link { b, ..y };
    }
    Ok(from_links(g.n_nodes(), &ls))
}

/// Degree-preserving randomisation with `swaps_per_link * links` attempts.
pub fn random_reference(g: &BrainGraph, swaps_per_link: usize, rng: &mut impl RngCore) -> Result<BrainGraph> {
    let attempts = swaps_per_link * links(g).len();
    swap_links(g, attempts, rng, |_, _| true)
}

fn ring_distance(n: usize, u: usize, v: usize) -> usize {
    let d = u.abs_diff(v);
    d.min(n - d)
}

/// Degree-preserving latticisation: swaps are kept only when they shorten
/// the summed ring distance of the two links in node order, pulling links
/// toward the diagonal band of the adjacency matrix.
pub fn lattice_reference(g: &BrainGraph, swaps_per_link: usize, rng: &mut impl RngCore) -> Result<BrainGraph> {
    let n = g.n_nodes();
    let attempts = swaps_per_link * links(g).len();
    swap_links(g, attempts, rng, |old, new| {
        let cost = |p: [(usize, usize); 2]| p.iter().map(|&(u, v)| ring_distance(n, u, v)).sum::<usize>();
        cost(new) < cost(old)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
#[serde(deny_unknown_fields)]
pub struct GraphConfig {
    pub length: LengthMap,
    pub n_refs: usize,
    pub swaps_per_link: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            length: LengthMap::Inverse,
            n_refs: 20,
            swaps_per_link: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmallWorld {
    pub sigma: f64,
    pub omega: f64,
    pub clustering: f64,
    pub path_length: f64,
    pub clustering_random: f64,
    pub path_length_random: f64,
    pub clustering_lattice: f64,
}

/// `sigma = (C / C_rand) / (L / L_rand)` and `omega = L_rand / L - C / C_latt`,
/// reference values averaged over `config.n_refs` graphs of each kind.
pub fn small_world(g: &BrainGraph, config: &GraphConfig, rng: &mut impl RngCore) -> Result<SmallWorld> {
    if config.n_refs == 0 {
        return Err(Error::arg("n_refs", "need at least one reference graph"));
    }
    let base = rng.next_u64();
    let c = clustering(g);
    let l = avg_shortest_path(g, config.length)?.mean;
    let refs = (0..config.n_refs as u64)
        .into_par_iter()
        .map(|r| {
            let rand = random_reference(g, config.swaps_per_link, &mut rng::stream(base, "random-ref", &[r]))?;
            let latt = lattice_reference(g, config.swaps_per_link, &mut rng::stream(base, "lattice-ref", &[r]))?;
            Ok((clustering(&rand), avg_shortest_path(&rand, config.length)?.mean, clustering(&latt)))
        })
        .collect::<Result<Vec<_>>>()?;
    let k = refs.len() as f64;
    let c_r = refs.iter().map(|r| r.0).sum::<f64>() / k;
    let l_r = refs.iter().map(|r| r.1).sum::<f64>() / k;
    let c_l = refs.iter().map(|r| r.2).sum::<f64>() / k;
    if c_r == 0.0 || c_l == 0.0 {
        return Err(Error::UndefinedMetric("reference graphs have no triangles".into()));
    }
    Ok(SmallWorld {
        sigma: (c / c_r) / (l / l_r),
        omega: l_r / l - c / c_l,
        clustering: c,
        path_length: l,
        clustering_random: c_r,
        path_length_random: l_r,
        clustering_lattice: c_l,
    })
}

/// Measures for one graph; undefined values are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphMetrics {
    pub clustering: f64,
    pub path_length: Option<f64>,
    pub unreachable_pairs: usize,
    pub assortativity: Option<f64>,
    pub sigma: Option<f64>,
    pub omega: Option<f64>,
}

pub fn metrics(g: &BrainGraph, config: &GraphConfig, seed: u64) -> GraphMetrics {
    let path = avg_shortest_path(g, config.length).ok();
    let sw = small_world(g, config, &mut rng::stream(seed, "small-world", &[])).ok();
    GraphMetrics {
        clustering: clustering(g),
        path_length: path.map(|p| p.mean),
        unreachable_pairs: path.map_or(g.n_nodes() * g.n_nodes().saturating_sub(1), |p| p.unreachable_pairs),
        assortativity: assortativity(g).ok(),
        sigma: sw.map(|s| s.sigma),
        omega: sw.map(|s| s.omega),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphBundle {
    pub label: String,
    pub nodes: Vec<String>,
    pub edges: Vec<NamedEdge>,
    pub metrics: GraphMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedEdge {
    pub src: String,
    pub dst: String,
    pub weight: f64,
}

impl GraphBundle {
    pub fn new(label: impl Into<String>, g: &BrainGraph, names: &[String], metrics: GraphMetrics) -> Self {
        Self {
            label: label.into(),
            nodes: names.to_vec(),
            edges: g
                .edges()
                .into_iter()
                .map(|e| NamedEdge {
                    src: names[e.src].clone(),
                    dst: names[e.dst].clone(),
                    weight: e.weight,
                })
                .collect(),
            metrics,
        }
    }
}

/// Undirected test graphs; every link is stored in both directions.
pub mod generators {
    use super::*;

    fn both(g: &mut BrainGraph, u: usize, v: usize, w: f64) {
        g.out[u].insert(v, w);
        g.out[v].insert(u, w);
    }

    pub fn complete(n: usize) -> BrainGraph {
        let mut g = BrainGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                both(&mut g, u, v, 1.0);
            }
        }
        g
    }

    pub fn star(n: usize) -> BrainGraph {
        let mut g = BrainGraph::new(n);
        for v in 1..n {
            both(&mut g, 0, v, 1.0);
        }
        g
    }

    /// Each node linked to its `k / 2` nearest neighbours on either side.
    pub fn ring_lattice(n: usize, k: usize) -> BrainGraph {
        let mut g = BrainGraph::new(n);
        for u in 0..n {
            for j in 1..=k / 2 {
                both(&mut g, u, (u + j) % n, 1.0);
            }
        }
        g
    }

    pub fn erdos_renyi(n: usize, p: f64, rng: &mut impl RngCore) -> BrainGraph {
        let mut g = BrainGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    both(&mut g, u, v, 1.0);
                }
            }
        }
        g
    }

    /// Ring lattice whose links `(u, u + j)` are rewired to a uniformly
    /// chosen new end with probability `p`.
    pub fn watts_strogatz(n: usize, k: usize, p: f64, rng: &mut impl RngCore) -> BrainGraph {
        let mut g = ring_lattice(n, k);
        for j in 1..=k / 2 {
            for u in 0..n {
                let v = (u + j) % n;
                if !rng.gen_bool(p) || g.out[u].len() >= n - 1 {
                    continue;
                }
                let w = loop {
                    let w = rng.gen_range(0..n);
                    if w != u && !g.out[u].contains_key(&w) {
                        break w;
                    }
                };
                g.out[u].remove(&v);
                g.out[v].remove(&u);
                both(&mut g, u, w, 1.0);
            }
        }
        g
    }

    /// Directed graph with each ordered pair present with probability `p`
    /// (never both directions) and uniform weights in `(0, 1]`.
    pub fn random_weighted_digraph(n: usize, p: f64, rng: &mut impl RngCore) -> BrainGraph {
        let mut g = BrainGraph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                if rng.gen_bool(p) {
                    let w = 1.0 - rng.gen::<f64>();
                    if rng.gen_bool(0.5) {
                        g.out[u].insert(v, w);
                    } else {
                        g.out[v].insert(u, w);
                    }
                }
            }
        }
        g
    }
}
