//! Storage graphs: servers are vertices, messages are edges.
//!
//! Vertices are 1-based in the public API (matching the edge-list format) and
//! 0-based internally. Edges keep their construction order; that order is the
//! message labelling.

use std::collections::BTreeSet;
use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    Path,
    Cycle,
    Complete,
    Star,
    Custom,
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Path => "path",
            Family::Cycle => "cycle",
            Family::Complete => "complete",
            Family::Star => "star",
            Family::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        match s {
            "path" => Some(Family::Path),
            "cycle" => Some(Family::Cycle),
            "complete" => Some(Family::Complete),
            "star" => Some(Family::Star),
            "custom" => Some(Family::Custom),
            _ => None,
        }
    }
}

/// A simple connected graph. `edges[k] = (i, j)` with `i < j`, 0-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
    family: Family,
}

impl Graph {
    /// Builds a graph from 1-based vertex pairs, checking simplicity and connectivity.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        Self::with_family(n, edges, Family::Custom)
    }

    fn with_family(n: usize, edges: &[(usize, usize)], family: Family) -> Result<Graph> {
        if n < 2 {
            return Err(Error::InvalidGraph(format!("need at least 2 servers, got {n}")));
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a == 0 || b == 0 || a > n || b > n {
                return Err(Error::InvalidGraph(format!("edge {{{a},{b}}} outside vertices 1..={n}")));
            }
            if a == b {
                return Err(Error::InvalidGraph(format!("self-loop at vertex {a}")));
            }
            let e = (a.min(b) - 1, a.max(b) - 1);
            if !seen.insert(e) {
                return Err(Error::InvalidGraph(format!("repeated edge {{{a},{b}}}")));
            }
            out.push(e);
        }
        let g = Graph { n, edges: out, family };
        if !g.is_connected() {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(g)
    }

    /// Path edge k = {k, k+1}; cycle adds {1, N} last; star edge k = {k, N};
    /// complete graph edges in lexicographic order.
    pub fn family(kind: Family, n: usize) -> Result<Graph> {
        let min = match kind {
            Family::Path | Family::Complete => 2,
            Family::Cycle | Family::Star => 3,
            Family::Custom => {
                return Err(Error::InvalidGraph("custom graphs need an edge list".into()))
            }
        };
        if n < min {
            return Err(Error::FamilyTooSmall { family: kind.name(), n, min });
        }
        let edges: Vec<(usize, usize)> = match kind {
            Family::Path => (1..n).map(|k| (k, k + 1)).collect(),
            Family::Cycle => (1..n).map(|k| (k, k + 1)).chain(std::iter::once((1, n))).collect(),
            Family::Star => (1..n).map(|k| (k, n)).collect(),
            Family::Complete => {
                let mut v = Vec::new();
                for i in 1..=n {
                    for j in i + 1..=n {
                        v.push((i, j));
                    }
                }
                v
            }
            Family::Custom => unreachable!(),
        };
        Self::with_family(n, &edges, kind)
    }

    pub fn path(n: usize) -> Result<Graph> {
        Self::family(Family::Path, n)
    }

    pub fn cycle(n: usize) -> Result<Graph> {
        Self::family(Family::Cycle, n)
    }

    pub fn star(n: usize) -> Result<Graph> {
        Self::family(Family::Star, n)
    }

    pub fn complete(n: usize) -> Result<Graph> {
        Self::family(Family::Complete, n)
    }

    /// The four-server graph with edges {1,2}, {1,3}, {2,3}, {3,4}.
    pub fn m_graph() -> Graph {
        Self::from_edges(4, &[(1, 2), (1, 3), (2, 3), (3, 4)]).expect("valid graph")
    }

    /// Plain-text edge list: first line `N`, then one `i j` pair per line.
    /// Blank lines and `#` comments are ignored.
    pub fn parse_edge_list(text: &str) -> Result<Graph> {
        let mut n = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: idx + 1,
                    msg: format!("expected an integer, found `{s}`"),
                })
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match (n, fields.as_slice()) {
                (None, [v]) => n = Some(parse(v)?),
                (None, _) => {
                    return Err(Error::Parse { line: idx + 1, msg: "first line must be the vertex count".into() })
                }
                (Some(_), [a, b]) => edges.push((parse(a)?, parse(b)?)),
                (Some(_), _) => {
                    return Err(Error::Parse { line: idx + 1, msg: "expected `i j`".into() })
                }
            }
        }
        let n = n.ok_or(Error::Parse { line: 1, msg: "empty edge list".into() })?;
        Self::from_edges(n, &edges)
    }

    pub fn n_servers(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn kind(&self) -> Family {
        self.family
    }

    /// 0-based endpoints `(i, j)` with `i < j`.
    pub fn edge(&self, k: usize) -> (usize, usize) {
        self.edges[k]
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges incident to server `n` (0-based), ascending.
    pub fn incident(&self, n: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&k| self.edges[k].0 == n || self.edges[k].1 == n)
            .collect()
    }

    pub fn degree(&self, n: usize) -> usize {
        self.incident(n).len()
    }

    pub fn is_regular(&self) -> Option<usize> {
        let d = self.degree(0);
        (1..self.n).all(|v| self.degree(v) == d).then_some(d)
    }

    /// True when the graph is a path up to relabelling.
    pub fn is_path(&self) -> bool {
        self.edges.len() + 1 == self.n && (0..self.n).all(|v| self.degree(v) <= 2)
    }

    fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &self.edges {
                let w = if a == v {
                    b
                } else if b == v {
                    a
                } else {
                    continue;
                };
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Signed incidence matrix, N x K': +1 at the lower-indexed endpoint, -1 at the higher.
    pub fn signed_incidence(&self) -> Vec<Vec<i8>> {
        let mut m = vec![vec![0i8; self.edges.len()]; self.n];
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            m[i][k] = 1;
            m[j][k] = -1;
        }
        m
    }

    pub fn lift(&self, r: usize) -> Result<MultiGraph> {
        MultiGraph::new(self.clone(), r)
    }

    pub fn label(&self) -> String {
        match self.family {
            Family::Custom => format!("custom({})", self.n),
            f => format!("{}({})", f.name(), self.n),
        }
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [", self.label())?;
        for (k, &(i, j)) in self.edges.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}-{}", i + 1, j + 1)?;
        }
        write!(f, "]")
    }
}

/// Every edge of `base` replaced by `r` parallel edges.
///
/// Message `W_{k,t}` (1-based k, t) has flat index `(t-1)·K' + (k-1)`, the
/// column order of `[Ī·diag(h_1) … Ī·diag(h_r)]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MultiGraph {
    base: Graph,
    r: usize,
}

impl MultiGraph {
    pub fn new(base: Graph, r: usize) -> Result<MultiGraph> {
        if r < 1 {
            return Err(Error::InvalidMultiplicity(r));
        }
        Ok(MultiGraph { base, r })
    }

    pub fn simple(base: Graph) -> MultiGraph {
        MultiGraph { base, r: 1 }
    }

    pub fn base(&self) -> &Graph {
        &self.base
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn n_servers(&self) -> usize {
        self.base.n
    }

    pub fn n_bundles(&self) -> usize {
        self.base.n_edges()
    }

    pub fn n_messages(&self) -> usize {
        self.base.n_edges() * self.r
    }

    /// Flat message index of bundle `k` and slice `t` (both 0-based).
    pub fn message(&self, k: usize, t: usize) -> usize {
        t * self.base.n_edges() + k
    }

    /// Inverse of [`MultiGraph::message`].
    pub fn bundle_of(&self, m: usize) -> (usize, usize) {
        let kp = self.base.n_edges();
        (m % kp, m / kp)
    }

    pub fn endpoints(&self, m: usize) -> (usize, usize) {
        self.base.edge(self.bundle_of(m).0)
    }

    /// Parses `k` or `k,t` (1-based) into a flat message index.
    pub fn parse_target(&self, s: &str) -> Result<usize> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let num = |p: &str| p.parse::<usize>().map_err(|_| Error::UnknownTarget(s.to_string()));
        let (k, t) = match parts.as_slice() {
            [k] => (num(k)?, 1),
            [k, t] => (num(k)?, num(t)?),
            _ => return Err(Error::UnknownTarget(s.to_string())),
        };
        if k == 0 || t == 0 || k > self.n_bundles() || t > self.r {
            return Err(Error::UnknownTarget(s.to_string()));
        }
        Ok(self.message(k - 1, t - 1))
    }

    pub fn target_label(&self, m: usize) -> String {
        let (k, t) = self.bundle_of(m);
        if self.r == 1 {
            format!("W_{}", k + 1)
        } else {
            format!("W_{{{},{}}}", k + 1, t + 1)
        }
    }

    pub fn label(&self) -> String {
        if self.r == 1 {
            self.base.label()
        } else {
            format!("{}^({})", self.base.label(), self.r)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RandomnessMode {
    GraphReplicated,
    FullyReplicated,
}

impl RandomnessMode {
    pub fn short(&self) -> &'static str {
        match self {
            RandomnessMode::GraphReplicated => "gr",
            RandomnessMode::FullyReplicated => "fr",
        }
    }
}

/// Which messages and randomness pools each server holds.
///
/// Graph-replicated: pool `k` is bundle k's randomness, held by its two endpoints.
/// Fully-replicated: a single pool 0 held everywhere.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StorageMap {
    pub mode: RandomnessMode,
    pub messages: Vec<Vec<usize>>,
    pub pools: Vec<Vec<usize>>,
}

impl StorageMap {
    pub fn new(g: &MultiGraph, mode: RandomnessMode) -> StorageMap {
        let n = g.n_servers();
        let mut messages = vec![Vec::new(); n];
        let mut pools = vec![Vec::new(); n];
        for m in 0..g.n_messages() {
            let (i, j) = g.endpoints(m);
            messages[i].push(m);
            messages[j].push(m);
        }
        for v in messages.iter_mut() {
            v.sort_unstable();
        }
        match mode {
            RandomnessMode::GraphReplicated => {
                for (k, &(i, j)) in g.base().edges().iter().enumerate() {
                    pools[i].push(k);
                    pools[j].push(k);
                }
            }
            RandomnessMode::FullyReplicated => {
                for p in pools.iter_mut() {
                    p.push(0);
                }
            }
        }
        StorageMap { mode, messages, pools }
    }

    pub fn holds_message(&self, server: usize, m: usize) -> bool {
        self.messages[server].binary_search(&m).is_ok()
    }

    pub fn holds_pool(&self, server: usize, p: usize) -> bool {
        self.pools[server].contains(&p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_based(g: &Graph) -> Vec<(usize, usize)> {
        g.edges().iter().map(|&(i, j)| (i + 1, j + 1)).collect()
    }

    #[test]
    fn families() {
        assert_eq!(one_based(&Graph::path(3).unwrap()), vec![(1, 2), (2, 3)]);
        assert_eq!(one_based(&Graph::cycle(3).unwrap()), vec![(1, 2), (2, 3), (1, 3)]);
        assert_eq!(one_based(&Graph::star(4).unwrap()), vec![(1, 4), (2, 4), (3, 4)]);
        assert_eq!(Graph::complete(4).unwrap().n_edges(), 6);
        assert!(matches!(Graph::cycle(2), Err(Error::FamilyTooSmall { .. })));
        assert!(matches!(Graph::star(2), Err(Error::FamilyTooSmall { .. })));
        assert!(matches!(Graph::path(1), Err(Error::FamilyTooSmall { .. })));
    }

    #[test]
    fn incidence_tables() {
        assert_eq!(Graph::path(3).unwrap().signed_incidence(), vec![vec![1, 0], vec![-1, 1], vec![0, -1]]);
        assert_eq!(
            Graph::cycle(3).unwrap().signed_incidence(),
            vec![vec![1, 0, 1], vec![-1, 1, 0], vec![0, -1, -1]]
        );
        assert_eq!(
            Graph::m_graph().signed_incidence(),
            vec![vec![1, 1, 0, 0], vec![-1, 0, 1, 0], vec![0, -1, -1, 1], vec![0, 0, 0, -1]]
        );
    }

    #[test]
    fn degrees() {
        assert_eq!(Graph::cycle(5).unwrap().is_regular(), Some(2));
        assert_eq!(Graph::star(4).unwrap().degree(3), 3);
        assert_eq!(Graph::path(4).unwrap().is_regular(), None);
        assert!(Graph::star(3).unwrap().is_path());
        assert!(!Graph::star(4).unwrap().is_path());
    }

    #[test]
    fn rejects_bad_graphs() {
        assert!(Graph::from_edges(3, &[(1, 1)]).is_err());
        assert!(Graph::from_edges(3, &[(1, 2), (2, 1)]).is_err());
        assert!(Graph::from_edges(4, &[(1, 2), (3, 4)]).is_err());
        assert!(Graph::from_edges(3, &[(1, 4)]).is_err());
    }

    #[test]
    fn edge_list_format() {
        let g = Graph::parse_edge_list("4\n1 2\n1 3\n# comment\n2 3\n3 4\n").unwrap();
        assert_eq!(g, Graph::m_graph());
        assert!(Graph::parse_edge_list("4\n1 2 3\n").is_err());
        assert!(Graph::parse_edge_list("x\n").is_err());
    }

    #[test]
    fn multigraph_labels() {
        let g = Graph::path(3).unwrap().lift(2).unwrap();
        assert_eq!(g.n_messages(), 4);
        assert_eq!(g.parse_target("1,1").unwrap(), 0);
        assert_eq!(g.parse_target("2,1").unwrap(), 1);
        assert_eq!(g.parse_target("1,2").unwrap(), 2);
        assert_eq!(g.bundle_of(3), (1, 1));
        assert!(g.parse_target("3,1").is_err());
        assert_eq!(Graph::cycle(3).unwrap().lift(3).unwrap().n_messages(), 9);
        assert!(Graph::path(3).unwrap().lift(0).is_err());
    }

    #[test]
    fn storage() {
        let p3 = MultiGraph::simple(Graph::path(3).unwrap());
        let s = StorageMap::new(&p3, RandomnessMode::GraphReplicated);
        assert_eq!(s.messages[1], vec![0, 1]);
        assert_eq!(s.pools[1], vec![0, 1]);
        let f = StorageMap::new(&p3, RandomnessMode::FullyReplicated);
        assert!(f.pools.iter().all(|p| p == &vec![0]));
        let p32 = Graph::path(3).unwrap().lift(2).unwrap();
        let s2 = StorageMap::new(&p32, RandomnessMode::GraphReplicated);
        assert_eq!(s2.messages[1], vec![0, 1, 2, 3]);
        assert_eq!(s2.pools[1], vec![0, 1]);
        let lifted = Graph::path(3).unwrap().lift(1).unwrap();
        assert_eq!(StorageMap::new(&lifted, RandomnessMode::GraphReplicated), s);
    }
}
