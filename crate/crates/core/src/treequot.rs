//! Finite `(p + 1)`-regular multigraphs as quotients of the tree, coupled
//! covers of two such graphs by one tree, and the exact distribution of the
//! image of a tree sphere in the product graph.
//!
//! A vertex of the tree at distance `n >= 1` from the root is a
//! non-backtracking path of length `n`, so sphere counts are computed by a
//! transfer operator on pairs of directed edges.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::padic::is_prime;
use crate::rng::stream;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("vertex {vertex} has degree {degree}, expected {expected}")]
    NotRegular { vertex: usize, degree: usize, expected: usize },
    #[error("a {degree}-regular graph from perfect matchings needs an even vertex count, got {vertices}")]
    ParityImpossible { vertices: usize, degree: usize },
    #[error("parse error on line {line}: {msg}")]
    ParseError { line: usize, msg: String },
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("graphs have different primes {0} and {1}")]
    PrimeMismatch(u64, u64),
    #[error("root vertex {0} out of range")]
    BadRoot(usize),
    #[error("sphere is empty")]
    EmptySphere,
    #[error("cannot read graph file: {0}")]
    Io(String),
}

/// Finite `(p + 1)`-regular multigraph. Undirected edge `k` gives directed
/// edges `2k` and `2k + 1`, reverses of each other; a loop gives two
/// directed loops at the same vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegularGraph {
    prime: u64,
    vertices: usize,
    tail: Vec<usize>,
    head: Vec<usize>,
    ports: Vec<Vec<usize>>,
    bipartite: bool,
}

impl RegularGraph {
    pub fn from_edges(p: u64, vertices: usize, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        if !is_prime(p) {
            return Err(GraphError::NotPrime(p));
        }
        let mut tail = Vec::with_capacity(2 * edges.len());
        let mut head = Vec::with_capacity(2 * edges.len());
        let mut ports = vec![Vec::new(); vertices];
        for (line, &(u, v)) in edges.iter().enumerate() {
            if u >= vertices || v >= vertices {
                return Err(GraphError::ParseError { line, msg: format!("edge {u} {v} out of range") });
            }
            for (x, y) in [(u, v), (v, u)] {
                ports[x].push(tail.len());
                tail.push(x);
                head.push(y);
            }
        }
        let expected = p as usize + 1;
        for (vertex, ps) in ports.iter().enumerate() {
            if ps.len() != expected {
                return Err(GraphError::NotRegular { vertex, degree: ps.len(), expected });
            }
        }
        let mut g = RegularGraph { prime: p, vertices, tail, head, ports, bipartite: false };
        g.bipartite = g.two_coloring().is_some();
        Ok(g)
    }

    /// Text format: `p <prime>`, `vertices <n>`, then `edge u v` lines.
    /// Blank lines and `#` comments are ignored.
    pub fn parse(text: &str) -> Result<Self, GraphError> {
        let mut p = None;
        let mut n = None;
        let mut edges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: &str| GraphError::ParseError { line: i + 1, msg: msg.to_string() };
            let words: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u64>().map_err(|_| err(&format!("bad number {s:?}")));
            match words.as_slice() {
                ["p", x] => p = Some(num(x)?),
                ["vertices", x] => n = Some(num(x)? as usize),
                ["edge", u, v] => edges.push((num(u)? as usize, num(v)? as usize)),
                _ => return Err(err(&format!("unrecognized line {line:?}"))),
            }
        }
        let missing = |what: &str| GraphError::ParseError { line: 0, msg: format!("missing {what} header") };
        Self::from_edges(p.ok_or_else(|| missing("p"))?, n.ok_or_else(|| missing("vertices"))?, &edges)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("p {}\nvertices {}\n", self.prime, self.vertices);
        for k in 0..self.tail.len() / 2 {
            s += &format!("edge {} {}\n", self.tail[2 * k], self.head[2 * k]);
        }
        s
    }

    /// Complete graph on `k` vertices; needs `k - 2` prime.
    pub fn complete(k: usize) -> Result<Self, GraphError> {
        let p = k.saturating_sub(2) as u64;
        let edges: Vec<_> = (0..k).flat_map(|u| (u + 1..k).map(move |v| (u, v))).collect();
        Self::from_edges(p, k, &edges)
    }

    /// Union of `p + 1` independent random perfect matchings.
    pub fn random(p: u64, vertices: usize, seed: u64) -> Result<Self, GraphError> {
        if !is_prime(p) {
            return Err(GraphError::NotPrime(p));
        }
        if vertices % 2 == 1 || vertices == 0 {
            return Err(GraphError::ParityImpossible { vertices, degree: p as usize + 1 });
        }
        let mut edges = Vec::new();
        for m in 0..=p {
            let mut order: Vec<usize> = (0..vertices).collect();
            order.shuffle(&mut stream(seed, "graph-matching", m));
            edges.extend(order.chunks(2).map(|c| (c[0], c[1])));
        }
        Self::from_edges(p, vertices, &edges)
    }

    /// One vertex with `(p + 1) / 2` loops (p odd).
    pub fn bouquet(p: u64) -> Result<Self, GraphError> {
        if p % 2 == 0 {
            return Err(GraphError::ParityImpossible { vertices: 1, degree: p as usize + 1 });
        }
        Self::from_edges(p, 1, &vec![(0, 0); (p as usize + 1) / 2])
    }

    pub fn prime(&self) -> u64 {
        self.prime
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices
    }

    pub fn directed_edge_count(&self) -> usize {
        self.tail.len()
    }

    pub fn head(&self, e: usize) -> usize {
        self.head[e]
    }

    pub fn tail(&self, e: usize) -> usize {
        self.tail[e]
    }

    pub fn reverse(&self, e: usize) -> usize {
        e ^ 1
    }

    pub fn ports(&self, v: usize) -> &[usize] {
        &self.ports[v]
    }

    pub fn is_bipartite(&self) -> bool {
        self.bipartite
    }

    /// The `p` non-backtracking continuations of directed edge `e`, in port order.
    pub fn continuations(&self, e: usize) -> Vec<usize> {
        let r = self.reverse(e);
        self.ports[self.head[e]].iter().copied().filter(|&f| f != r).collect()
    }

    /// Side of each vertex in a proper 2-coloring, if one exists.
    pub fn two_coloring(&self) -> Option<Vec<u8>> {
        let mut color = vec![u8::MAX; self.vertices];
        for s in 0..self.vertices {
            if color[s] != u8::MAX {
                continue;
            }
            color[s] = 0;
            let mut q = VecDeque::from([s]);
            while let Some(u) = q.pop_front() {
                for &e in &self.ports[u] {
                    let v = self.head[e];
                    if color[v] == u8::MAX {
                        color[v] = 1 - color[u];
                        q.push_back(v);
                    } else if color[v] == color[u] {
                        return None;
                    }
                }
            }
        }
        Some(color)
    }
}

/// Where a graph comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphSpec {
    File(PathBuf),
    Random { p: u64, vertices: usize, seed: u64 },
    Complete { k: usize },
}

impl std::str::FromStr for GraphSpec {
    type Err = GraphError;

    /// `complete:5`, `random:3:10:7` (p, vertices, seed) or `file:PATH`.
    fn from_str(s: &str) -> Result<Self, GraphError> {
        let err = || GraphError::ParseError { line: 0, msg: format!("bad graph spec {s:?}") };
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["complete", k] => Ok(GraphSpec::Complete { k: k.parse().map_err(|_| err())? }),
            ["random", p, n, seed] => Ok(GraphSpec::Random {
                p: p.parse().map_err(|_| err())?,
                vertices: n.parse().map_err(|_| err())?,
                seed: seed.parse().map_err(|_| err())?,
            }),
            ["file", _, ..] => Ok(GraphSpec::File(PathBuf::from(&s[5..]))),
            _ => Err(err()),
        }
    }
}

pub fn load_or_generate(spec: &GraphSpec) -> Result<RegularGraph, GraphError> {
    match spec {
        GraphSpec::File(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| GraphError::Io(format!("{}: {e}", path.display())))?;
            RegularGraph::parse(&text)
        }
        GraphSpec::Random { p, vertices, seed } => RegularGraph::random(*p, *vertices, *seed),
        GraphSpec::Complete { k } => RegularGraph::complete(*k),
    }
}

/// How continuations at the two graphs are paired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Matching {
    /// Seeded pseudorandom bijection per directed-edge pair.
    Seeded,
    /// Port order matched to port order; with the same graph twice and the
    /// same root this is the diagonal embedding.
    Identity,
}

/// One tree mapped onto two graphs at once.
#[derive(Debug, Clone)]
pub struct CoupledCover {
    first: RegularGraph,
    second: RegularGraph,
    root: (usize, usize),
    seed: u64,
    matching: Matching,
    root_perm: Vec<usize>,
}

pub fn build_cover(
    first: RegularGraph,
    second: RegularGraph,
    root: (usize, usize),
    seed: u64,
    matching: Matching,
) -> Result<CoupledCover, GraphError> {
    if first.prime != second.prime {
        return Err(GraphError::PrimeMismatch(first.prime, second.prime));
    }
    if root.0 >= first.vertices {
        return Err(GraphError::BadRoot(root.0));
    }
    if root.1 >= second.vertices {
        return Err(GraphError::BadRoot(root.1));
    }
    let root_perm = permutation(matching, first.prime as usize + 1, seed, "coupling-root", 0);
    Ok(CoupledCover { first, second, root, seed, matching, root_perm })
}

fn permutation(matching: Matching, len: usize, seed: u64, tag: &str, index: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    if matching == Matching::Seeded {
        perm.shuffle(&mut stream(seed, tag, index));
    }
    perm
}

impl CoupledCover {
    /// The diagonal coupling of a graph with itself.
    pub fn diagonal(g: RegularGraph, root: usize) -> Result<Self, GraphError> {
        build_cover(g.clone(), g, (root, root), 0, Matching::Identity)
    }

    pub fn first(&self) -> &RegularGraph {
        &self.first
    }

    pub fn second(&self) -> &RegularGraph {
        &self.second
    }

    pub fn root(&self) -> (usize, usize) {
        self.root
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn matching(&self) -> Matching {
        self.matching
    }

    /// States reached in one step from the root pair.
    pub fn root_states(&self) -> Vec<(usize, usize)> {
        let a = self.first.ports(self.root.0);
        let b = self.second.ports(self.root.1);
        a.iter().zip(&self.root_perm).map(|(&e, &j)| (e, b[j])).collect()
    }

    /// The `p` successor states of `(e, e')`.
    pub fn successors(&self, state: (usize, usize)) -> Vec<(usize, usize)> {
        let (e, f) = state;
        let ce = self.first.continuations(e);
        let cf = self.second.continuations(f);
        let index = (e * self.second.directed_edge_count() + f) as u64;
        let perm = permutation(self.matching, ce.len(), self.seed, "coupling-state", index);
        ce.into_iter().zip(perm).map(|(x, j)| (x, cf[j])).collect()
    }
}

/// Exact image counts of the tree sphere of radius `n` in the product graph.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SphereDist {
    pub n: usize,
    pub counts: BTreeMap<(usize, usize), BigUint>,
    pub total: BigUint,
    /// Counts per directed-edge pair (empty for `n = 0`).
    pub states: BTreeMap<(usize, usize), BigUint>,
    pub cells: (usize, usize),
}

impl SphereDist {
    fn from_states(cover: &CoupledCover, n: usize, states: BTreeMap<(usize, usize), BigUint>) -> Self {
        let mut counts: BTreeMap<(usize, usize), BigUint> = BTreeMap::new();
        for (&(e, f), c) in &states {
            *counts.entry((cover.first.head(e), cover.second.head(f))).or_default() += c;
        }
        let total = states.values().sum();
        SphereDist { n, counts, total, states, cells: (cover.first.vertices, cover.second.vertices) }
    }

    pub fn count(&self, a: usize, b: usize) -> BigUint {
        self.counts.get(&(a, b)).cloned().unwrap_or_default()
    }

    /// Both projections of the counts.
    pub fn marginals(&self) -> (Vec<BigUint>, Vec<BigUint>) {
        let mut m1 = vec![BigUint::zero(); self.cells.0];
        let mut m2 = vec![BigUint::zero(); self.cells.1];
        for (&(a, b), c) in &self.counts {
            m1[a] += c;
            m2[b] += c;
        }
        (m1, m2)
    }

    pub fn is_surjective(&self) -> bool {
        let nonzero = self.counts.values().filter(|c| !c.is_zero()).count();
        nonzero == self.cells.0 * self.cells.1
    }
}

/// Sphere distributions for radii `0..=n_max`.
pub fn sphere_distributions(cover: &CoupledCover, n_max: usize) -> Vec<SphereDist> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut root_counts = BTreeMap::new();
    root_counts.insert(cover.root, BigUint::one());
    out.push(SphereDist {
        n: 0,
        counts: root_counts,
        total: BigUint::one(),
        states: BTreeMap::new(),
        cells: (cover.first.vertices, cover.second.vertices),
    });
    if n_max == 0 {
        return out;
    }
    let mut succ_cache: HashMap<(usize, usize), Vec<(usize, usize)>> = HashMap::new();
    let mut states: BTreeMap<(usize, usize), BigUint> = BTreeMap::new();
    for s in cover.root_states() {
        *states.entry(s).or_default() += 1u32;
    }
    out.push(SphereDist::from_states(cover, 1, states.clone()));
    for n in 2..=n_max {
        let mut next: BTreeMap<(usize, usize), BigUint> = BTreeMap::new();
        for (s, c) in &states {
            let succ = succ_cache.entry(*s).or_insert_with(|| cover.successors(*s));
            for t in succ.iter() {
                *next.entry(*t).or_default() += c;
            }
        }
        states = next;
        out.push(SphereDist::from_states(cover, n, states.clone()));
    }
    out
}

pub fn sphere_distribution(cover: &CoupledCover, n: usize) -> SphereDist {
    sphere_distributions(cover, n).pop().expect("radius 0 is always present")
}

/// Sphere image counts in a single graph, `result[n][v]`, by the same
/// non-backtracking transfer on directed edges.
pub fn single_sphere_counts(g: &RegularGraph, root: usize, n_max: usize) -> Vec<Vec<BigUint>> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut level0 = vec![BigUint::zero(); g.vertices];
    level0[root] = BigUint::one();
    out.push(level0);
    let mut edges = vec![BigUint::zero(); g.directed_edge_count()];
    for &e in g.ports(root) {
        edges[e] += 1u32;
    }
    let project = |edges: &[BigUint]| {
        let mut v = vec![BigUint::zero(); g.vertices];
        for (e, c) in edges.iter().enumerate() {
            v[g.head(e)] += c;
        }
        v
    };
    for n in 1..=n_max {
        if n > 1 {
            let mut next = vec![BigUint::zero(); edges.len()];
            for (e, c) in edges.iter().enumerate() {
                if c.is_zero() {
                    continue;
                }
                for f in g.continuations(e) {
                    next[f] += c;
                }
            }
            edges = next;
        }
        out.push(project(&edges));
    }
    out
}

/// `(p + 1) p^(n - 1)` for `n >= 1`, and 1 for `n = 0`.
pub fn expected_sphere_size(p: u64, n: usize) -> BigUint {
    if n == 0 {
        BigUint::one()
    } else {
        BigUint::from(p + 1) * BigUint::from(p).pow(n as u32 - 1)
    }
}

fn tv_against_uniform<'a>(
    counts: impl Iterator<Item = &'a BigUint>,
    total: &BigUint,
    cells: usize,
) -> Result<BigRational, GraphError> {
    if total.is_zero() {
        return Err(GraphError::EmptySphere);
    }
    let total = BigRational::from_integer(total.clone().into());
    let unif = BigRational::new(1.into(), (cells as u64).into());
    let mut sum = BigRational::zero();
    let mut seen = 0usize;
    for c in counts {
        sum += (BigRational::from_integer(c.clone().into()) / &total - &unif).abs();
        seen += 1;
    }
    sum += &unif * BigRational::from_integer(((cells - seen) as u64).into());
    Ok(sum / BigRational::from_integer(2.into()))
}

/// Total variation distance to the uniform distribution on vertex pairs.
pub fn tv_to_uniform(dist: &SphereDist) -> Result<BigRational, GraphError> {
    tv_against_uniform(dist.counts.values(), &dist.total, dist.cells.0 * dist.cells.1)
}

/// Total variation distance, on directed-edge pairs, to the uniform
/// distribution there (the stationary law of the non-backtracking walk).
pub fn tv_to_edge_uniform(dist: &SphereDist, cover: &CoupledCover) -> Result<BigRational, GraphError> {
    let cells = cover.first.directed_edge_count() * cover.second.directed_edge_count();
    tv_against_uniform(dist.states.values(), &dist.total, cells)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SurjectivityReport {
    pub radius: Option<usize>,
    pub n_max: usize,
    /// Either graph is bipartite with more than one vertex, so each sphere
    /// only meets one side and surjectivity is impossible.
    pub bipartite_obstruction: bool,
}

pub fn surjectivity_radius(cover: &CoupledCover, n_max: usize) -> SurjectivityReport {
    surjectivity_from(&sphere_distributions(cover, n_max), cover)
}

pub fn surjectivity_from(dists: &[SphereDist], cover: &CoupledCover) -> SurjectivityReport {
    let obstructed = |g: &RegularGraph| g.is_bipartite() && g.vertices > 1;
    SurjectivityReport {
        radius: dists.iter().find(|d| d.is_surjective()).map(|d| d.n),
        n_max: dists.len().saturating_sub(1),
        bipartite_obstruction: obstructed(&cover.first) || obstructed(&cover.second),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoveringReport {
    pub reachable_states: usize,
    pub state_bound: usize,
    pub holds: bool,
}

/// Checks over every reachable state that the successors pair the
/// continuations on both sides bijectively (and the root step pairs the
/// ports bijectively).
pub fn check_covering(cover: &CoupledCover) -> CoveringReport {
    let p = cover.first.prime as usize;
    let sorted = |mut v: Vec<usize>| {
        v.sort_unstable();
        v
    };
    let roots = cover.root_states();
    let mut holds = sorted(roots.iter().map(|s| s.0).collect()) == sorted(cover.first.ports(cover.root.0).to_vec())
        && sorted(roots.iter().map(|s| s.1).collect()) == sorted(cover.second.ports(cover.root.1).to_vec());
    let mut seen: BTreeSet<(usize, usize)> = roots.iter().copied().collect();
    let mut queue: VecDeque<_> = roots.into_iter().collect();
    while let Some(s) = queue.pop_front() {
        let succ = cover.successors(s);
        holds &= succ.len() == p
            && sorted(succ.iter().map(|t| t.0).collect()) == sorted(cover.first.continuations(s.0))
            && sorted(succ.iter().map(|t| t.1).collect()) == sorted(cover.second.continuations(s.1));
        for t in succ {
            if seen.insert(t) {
                queue.push_back(t);
            }
        }
    }
    CoveringReport {
        reachable_states: seen.len(),
        state_bound: cover.first.directed_edge_count() * cover.second.directed_edge_count(),
        holds: holds && seen.len() <= cover.first.directed_edge_count() * cover.second.directed_edge_count(),
    }
}

/// Decimal rendering of an exact ratio, for output only.
pub fn ratio_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// CSV rows `n,a,b,count,frequency` for every cell of the product graph.
pub fn csv_rows(dist: &SphereDist) -> Vec<String> {
    let total = BigRational::from_integer(dist.total.clone().into());
    let mut rows = Vec::with_capacity(dist.cells.0 * dist.cells.1);
    for a in 0..dist.cells.0 {
        for b in 0..dist.cells.1 {
            let c = dist.count(a, b);
            let freq = BigRational::from_integer(c.clone().into()) / &total;
            rows.push(format!("{},{},{},{},{}", dist.n, a, b, c, ratio_to_f64(&freq)));
        }
    }
    rows
}

#[derive(Debug, Clone, Serialize)]
pub struct SphereSummary {
    pub n: usize,
    pub tv_uniform: String,
    pub tv_uniform_decimal: f64,
    pub tv_edge_uniform: String,
    pub surjective: bool,
    pub totals: String,
}

pub fn summarize(dist: &SphereDist, cover: &CoupledCover) -> Result<SphereSummary, GraphError> {
    let tv = tv_to_uniform(dist)?;
    let tv_edge = if dist.n == 0 { BigRational::one() } else { tv_to_edge_uniform(dist, cover)? };
    Ok(SphereSummary {
        n: dist.n,
        tv_uniform_decimal: ratio_to_f64(&tv),
        tv_uniform: tv.to_string(),
        tv_edge_uniform: tv_edge.to_string(),
        surjective: dist.is_surjective(),
        totals: dist.total.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn k5() -> RegularGraph {
        RegularGraph::complete(5).unwrap()
    }

    /// Oracle: enumerate non-backtracking vertex walks explicitly (no
    /// directed-edge bookkeeping) on a simple graph.
    fn walk_counts(adj: &[Vec<usize>], root: usize, n: usize) -> Vec<u64> {
        let mut counts = vec![0u64; adj.len()];
        fn go(adj: &[Vec<usize>], prev: Option<usize>, cur: usize, left: usize, counts: &mut [u64]) {
            if left == 0 {
                counts[cur] += 1;
                return;
            }
            for &w in &adj[cur] {
                if Some(w) != prev {
                    go(adj, Some(cur), w, left - 1, counts);
                }
            }
        }
        go(adj, None, root, n, &mut counts);
        counts
    }

    #[test]
    fn graph_construction() {
        let g = k5();
        assert_eq!(g.prime(), 3);
        assert_eq!(g.vertex_count(), 5);
        assert!(!g.is_bipartite());
        let r1 = RegularGraph::random(3, 10, 7).unwrap();
        assert_eq!(r1, RegularGraph::random(3, 10, 7).unwrap());
        assert_eq!(RegularGraph::parse(&r1.to_text()).unwrap(), r1);
        assert!(matches!(RegularGraph::random(3, 5, 1), Err(GraphError::ParityImpossible { .. })));
        assert!(matches!(RegularGraph::complete(6), Err(GraphError::NotPrime(4))));
        let cube = "p 2\nvertices 4\n# K4\nedge 0 1\nedge 0 2\nedge 0 3\nedge 1 2\nedge 1 3\nedge 2 3\n";
        assert_eq!(RegularGraph::parse(cube).unwrap().vertex_count(), 4);
        assert!(matches!(
            RegularGraph::parse("p 2\nvertices 2\nedge 0 1\n"),
            Err(GraphError::NotRegular { .. })
        ));
        assert!(matches!(RegularGraph::parse("p 2\nbogus\n"), Err(GraphError::ParseError { line: 2, .. })));
        // K_{3,3} is 3-regular and bipartite
        let k33: Vec<_> = (0..3).flat_map(|u| (3..6).map(move |v| (u, v))).collect();
        assert!(RegularGraph::from_edges(2, 6, &k33).unwrap().is_bipartite());
        let b = RegularGraph::bouquet(3).unwrap();
        assert_eq!(b.continuations(0).len(), 3);
        assert_eq!("complete:5".parse::<GraphSpec>().unwrap(), GraphSpec::Complete { k: 5 });
        assert_eq!(
            "random:3:10:7".parse::<GraphSpec>().unwrap(),
            GraphSpec::Random { p: 3, vertices: 10, seed: 7 }
        );
    }

    #[test]
    fn k5_single_marginal_matches_walk_oracle() {
        let g = k5();
        let adj: Vec<Vec<usize>> = (0..5).map(|u| (0..5).filter(|&v| v != u).collect()).collect();
        let counts = single_sphere_counts(&g, 0, 7);
        assert_eq!(counts[2][0], BigUint::zero());
        for w in 1..5 {
            assert_eq!(counts[2][w], BigUint::from(3u32));
        }
        for (n, level) in counts.iter().enumerate() {
            let oracle = walk_counts(&adj, 0, n);
            let got: Vec<u64> = level.iter().map(|c| c.to_u64().unwrap()).collect();
            assert_eq!(got, oracle, "n = {n}");
        }
    }

    #[test]
    fn coupled_totals_and_marginals() {
        let cover = build_cover(k5(), k5(), (0, 0), 1, Matching::Seeded).unwrap();
        let dists = sphere_distributions(&cover, 12);
        let single = single_sphere_counts(&k5(), 0, 12);
        for d in &dists {
            assert_eq!(d.total, expected_sphere_size(3, d.n));
            let (m1, m2) = d.marginals();
            assert_eq!(m1, single[d.n]);
            assert_eq!(m2, single[d.n]);
        }
        assert_eq!(dists[2].total, BigUint::from(12u32));
        let rep = check_covering(&cover);
        assert!(rep.holds);
        assert!(rep.reachable_states <= rep.state_bound);
    }

    #[test]
    fn diagonal_stays_on_diagonal() {
        let cover = CoupledCover::diagonal(k5(), 2).unwrap();
        for d in sphere_distributions(&cover, 15) {
            assert!(d.counts.iter().all(|(&(a, b), c)| a == b || c.is_zero()));
        }
        let rep = surjectivity_radius(&cover, 10);
        assert_eq!(rep.radius, None);
        assert!(!rep.bipartite_obstruction);
    }

    #[test]
    fn tv_examples() {
        let cover = CoupledCover::diagonal(RegularGraph::bouquet(3).unwrap(), 0).unwrap();
        let d = sphere_distribution(&cover, 3);
        assert_eq!(tv_to_uniform(&d).unwrap(), BigRational::zero());
        assert_eq!(surjectivity_radius(&cover, 4).radius, Some(0));
        // all mass on one of 25 cells
        let k = CoupledCover::diagonal(k5(), 0).unwrap();
        let d0 = sphere_distribution(&k, 0);
        assert_eq!(tv_to_uniform(&d0).unwrap(), BigRational::new(24.into(), 25.into()));
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let a = build_cover(k5(), k5(), (0, 0), 5, Matching::Seeded).unwrap();
        let b = build_cover(k5(), k5(), (0, 0), 5, Matching::Seeded).unwrap();
        let c = build_cover(k5(), k5(), (0, 0), 6, Matching::Seeded).unwrap();
        assert_eq!(sphere_distribution(&a, 10), sphere_distribution(&b, 10));
        let differs = (0..40).any(|e| a.successors((e % 20, (e * 7) % 20)) != c.successors((e % 20, (e * 7) % 20)));
        assert!(differs);
        assert!(matches!(
            build_cover(k5(), RegularGraph::random(2, 4, 1).unwrap(), (0, 0), 1, Matching::Seeded),
            Err(GraphError::PrimeMismatch(3, 2))
        ));
    }

    #[test]
    fn bipartite_parity_obstruction() {
        let k33: Vec<_> = (0..3).flat_map(|u| (3..6).map(move |v| (u, v))).collect();
        let g = RegularGraph::from_edges(2, 6, &k33).unwrap();
        let colors = g.two_coloring().unwrap();
        let cover = build_cover(g, k5(), (0, 0), 3, Matching::Seeded);
        assert!(cover.is_err(), "primes differ");
        let h = RegularGraph::random(2, 8, 2).unwrap();
        let cover = build_cover(RegularGraph::from_edges(2, 6, &k33).unwrap(), h, (0, 0), 3, Matching::Seeded).unwrap();
        for d in sphere_distributions(&cover, 9) {
            for (&(a, _), c) in &d.counts {
                if colors[a] as usize != d.n % 2 {
                    assert!(c.is_zero());
                }
            }
        }
        let rep = surjectivity_radius(&cover, 9);
        assert!(rep.bipartite_obstruction);
        assert_eq!(rep.radius, None);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn random_graph_covers(p in prop::sample::select(vec![2u64, 3, 5]), half in 1usize..6, gseed in any::<u64>(), cseed in any::<u64>()) {
            let g1 = RegularGraph::random(p, 2 * half, gseed).unwrap();
            let g2 = RegularGraph::random(p, 2 * half + 2, gseed ^ 1).unwrap();
            let cover = build_cover(g1.clone(), g2.clone(), (0, 1), cseed, Matching::Seeded).unwrap();
            prop_assert!(check_covering(&cover).holds);
            let s1 = single_sphere_counts(&g1, 0, 8);
            let s2 = single_sphere_counts(&g2, 1, 8);
            for d in sphere_distributions(&cover, 8) {
                prop_assert_eq!(&d.total, &expected_sphere_size(p, d.n));
                let (m1, m2) = d.marginals();
                prop_assert_eq!(&m1, &s1[d.n]);
                prop_assert_eq!(&m2, &s2[d.n]);
                let tv = tv_to_uniform(&d).unwrap();
                prop_assert!(tv >= BigRational::zero() && tv <= BigRational::one());
            }
        }
    }
}
