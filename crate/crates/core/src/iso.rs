//! Isomorphism of answer-table structures.
//!
//! A structure is a bipartite graph between *index nodes* (one per referenced
//! `(class, index)` pair) and *cells*. Each edge carries a label naming the
//! symbol kind and coefficient. Two structures are isomorphic when index
//! nodes can be relabelled within their classes so that the cell multisets
//! coincide, tags included. Decided by joint colour refinement with
//! individualisation and backtracking.

use std::collections::{BTreeMap, HashMap};

use crate::error::{Error, Result};
use crate::protocol::{Cell, Sym};

#[derive(Clone, Debug)]
pub struct Structure {
    /// Class of each index node.
    index_class: Vec<u64>,
    /// `(tag, [(label, index node)])` per cell.
    cells: Vec<(u64, Vec<(u64, usize)>)>,
}

/// Edge label for a symbol: its message or pool identity plus the coefficient.
pub fn sym_label(sym: &Sym, coeff: i64) -> u64 {
    let kind = match *sym {
        Sym::Msg { m, .. } => 2 * m as u64,
        Sym::Rand { pool, .. } => 2 * pool as u64 + 1,
    };
    (kind << 16) ^ (coeff as u64 & 0xffff)
}

impl Structure {
    /// Builds a structure from tagged cells. `class_of` decides which symbols
    /// share a relabelling.
    pub fn new<'a>(cells: impl IntoIterator<Item = (u64, &'a Cell)>, class_of: impl Fn(&Sym) -> u64) -> Structure {
        let mut nodes: BTreeMap<(u64, usize), usize> = BTreeMap::new();
        let mut index_class = Vec::new();
        let mut out = Vec::new();
        for (tag, cell) in cells {
            let mut edges = Vec::with_capacity(cell.terms.len());
            for t in &cell.terms {
                let class = class_of(&t.sym);
                let key = (class, t.sym.index());
                let id = *nodes.entry(key).or_insert_with(|| {
                    index_class.push(class);
                    index_class.len() - 1
                });
                edges.push((sym_label(&t.sym, t.coeff), id));
            }
            edges.sort_unstable();
            out.push((tag, edges));
        }
        Structure { index_class, cells: out }
    }

    fn n_vertices(&self) -> usize {
        self.index_class.len() + self.cells.len()
    }

    /// Adjacency per vertex: index nodes first, then cells.
    fn adjacency(&self) -> Vec<Vec<(u64, usize)>> {
        let ni = self.index_class.len();
        let mut adj = vec![Vec::new(); self.n_vertices()];
        for (c, (_, edges)) in self.cells.iter().enumerate() {
            for &(label, v) in edges {
                adj[ni + c].push((label, v));
                adj[v].push((label, ni + c));
            }
        }
        adj
    }

    fn initial_signatures(&self) -> Vec<(u8, u64)> {
        self.index_class
            .iter()
            .map(|&c| (0u8, c))
            .chain(self.cells.iter().map(|(tag, _)| (1u8, *tag)))
            .collect()
    }
}

struct Side {
    adj: Vec<Vec<(u64, usize)>>,
    n_index: usize,
}

/// Search-node budget; beyond it the comparison is reported as undecided.
const BUDGET: usize = 200_000;

/// Decides isomorphism. Fails only if the search budget is exhausted.
pub fn isomorphic(a: &Structure, b: &Structure) -> Result<bool> {
    if a.index_class.len() != b.index_class.len() || a.cells.len() != b.cells.len() {
        return Ok(false);
    }
    let sa = Side { adj: a.adjacency(), n_index: a.index_class.len() };
    let sb = Side { adj: b.adjacency(), n_index: b.index_class.len() };
    let mut dict: HashMap<(u8, u64), u32> = HashMap::new();
    let mut intern = |k: (u8, u64)| {
        let n = dict.len() as u32;
        *dict.entry(k).or_insert(n)
    };
    let ca: Vec<u32> = a.initial_signatures().into_iter().map(&mut intern).collect();
    let cb: Vec<u32> = b.initial_signatures().into_iter().map(&mut intern).collect();
    let mut nodes = 0usize;
    search(&sa, &sb, ca, cb, &mut nodes)
}

fn histogram(c: &[u32]) -> BTreeMap<u32, usize> {
    let mut h = BTreeMap::new();
    for &x in c {
        *h.entry(x).or_insert(0) += 1;
    }
    h
}

/// Joint refinement until the partition is stable. Returns false if the
/// colour histograms diverge.
fn refine(a: &Side, b: &Side, ca: &mut Vec<u32>, cb: &mut Vec<u32>) -> bool {
    loop {
        let classes_before = histogram(ca).len();
        let mut dict: HashMap<(u32, Vec<(u64, u32)>), u32> = HashMap::new();
        let mut step = |side: &Side, c: &[u32]| -> Vec<u32> {
            (0..c.len())
                .map(|v| {
                    let mut sig: Vec<(u64, u32)> = side.adj[v].iter().map(|&(l, w)| (l, c[w])).collect();
                    sig.sort_unstable();
                    let n = dict.len() as u32;
                    *dict.entry((c[v], sig)).or_insert(n)
                })
                .collect()
        };
        let na = step(a, ca);
        let nb = step(b, cb);
        *ca = na;
        *cb = nb;
        if histogram(ca) != histogram(cb) {
            return false;
        }
        if histogram(ca).len() == classes_before {
            return true;
        }
    }
}

fn search(a: &Side, b: &Side, mut ca: Vec<u32>, mut cb: Vec<u32>, nodes: &mut usize) -> Result<bool> {
    *nodes += 1;
    if *nodes > BUDGET {
        return Err(Error::Unsupported("structure comparison exceeded its search budget".into()));
    }
    if !refine(a, b, &mut ca, &mut cb) {
        return Ok(false);
    }
    let hist = histogram(&ca);
    // Prefer splitting an index-node class: those drive the relabelling.
    let target = hist
        .iter()
        .filter(|(_, &n)| n > 1)
        .map(|(&c, &n)| {
            let first = ca.iter().position(|&x| x == c).expect("colour present");
            (first >= a.n_index, n, c)
        })
        .min();
    let Some((_, _, colour)) = target else {
        return Ok(verify(a, b, &ca, &cb));
    };
    let v = ca.iter().position(|&x| x == colour).expect("colour present");
    let fresh = ca.iter().chain(cb.iter()).copied().max().unwrap_or(0) + 1;
    for w in (0..cb.len()).filter(|&w| cb[w] == colour) {
        let mut na = ca.clone();
        let mut nb = cb.clone();
        na[v] = fresh;
        nb[w] = fresh;
        if search(a, b, na, nb, nodes)? {
            return Ok(true);
        }
    }
    Ok(false)
}

/// With discrete colourings, checks that the induced bijection preserves every edge.
fn verify(a: &Side, b: &Side, ca: &[u32], cb: &[u32]) -> bool {
    let pos_b: HashMap<u32, usize> = cb.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let map: Vec<usize> = ca.iter().map(|c| pos_b[c]).collect();
    (0..ca.len()).all(|v| {
        let mut mapped: Vec<(u64, usize)> = a.adj[v].iter().map(|&(l, w)| (l, map[w])).collect();
        let mut target = b.adj[map[v]].clone();
        mapped.sort_unstable();
        target.sort_unstable();
        mapped == target
    })
}

/// Whether two per-server answer tables agree up to relabelling the symbol
/// indices of each message and each randomness pool independently. Cells
/// are compared as multisets per server.
pub fn same_table_structure(a: &[Vec<Cell>], b: &[Vec<Cell>]) -> Result<bool> {
    if a.len() != b.len() {
        return Ok(false);
    }
    let class_of = |s: &Sym| match *s {
        Sym::Msg { m, .. } => 2 * m as u64,
        Sym::Rand { pool, .. } => 2 * pool as u64 + 1,
    };
    let tagged = |t: &'_ [Vec<Cell>]| -> Vec<(u64, Cell)> {
        t.iter().enumerate().flat_map(|(n, cells)| cells.iter().map(move |c| (n as u64, c.clone()))).collect()
    };
    let (ta, tb) = (tagged(a), tagged(b));
    let sa = Structure::new(ta.iter().map(|(t, c)| (*t, c)), class_of);
    let sb = Structure::new(tb.iter().map(|(t, c)| (*t, c)), class_of);
    isomorphic(&sa, &sb)
}
