//! Schemes defined by answer templates: per target, per server, a list of
//! cells over abstract symbol indices. The user's coins are one permutation
//! per symmetry class, applied to the template before it is sent.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::format::{TableFile, TableMode};
use crate::graphs::RandomnessMode;
use crate::linalg::Echelon;
use crate::protocol::{
    cell_forms, evaluate_cells, Cell, CoinDomain, Coins, Descriptor, Query, Scheme, ServerStore, Sym,
};

/// Assignment of messages and randomness pools to permutation classes.
/// Symbols in one class are relabelled by the same permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassMap {
    pub msg: Vec<usize>,
    pub pool: Vec<usize>,
    pub sizes: Vec<usize>,
}

impl ClassMap {
    /// Every message and every pool permuted independently.
    pub fn independent(desc: &Descriptor) -> ClassMap {
        let k = desc.n_messages();
        let msg: Vec<usize> = (0..k).collect();
        let pool: Vec<usize> = (k..k + desc.pool_sizes.len()).collect();
        let mut sizes = vec![desc.msg_len; k];
        sizes.extend(&desc.pool_sizes);
        ClassMap { msg, pool, sizes }
    }

    /// `W_ℓ` and `R_ℓ` share one permutation (simple graphs, graph-replicated).
    pub fn shared(desc: &Descriptor) -> ClassMap {
        let k = desc.n_messages();
        ClassMap { msg: (0..k).collect(), pool: (0..desc.pool_sizes.len()).collect(), sizes: vec![desc.msg_len; k] }
    }

    pub fn class_of(&self, sym: &Sym) -> usize {
        match *sym {
            Sym::Msg { m, .. } => self.msg[m],
            Sym::Rand { pool, .. } => self.pool[pool],
        }
    }
}

type SparseRow = Vec<(usize, usize, u32)>;

#[derive(Clone, Debug)]
pub struct TableScheme {
    desc: Descriptor,
    targets: Vec<usize>,
    tables: Vec<Vec<Vec<Cell>>>,
    classes: ClassMap,
    /// Per target, per desired symbol: `(server, cell, coefficient)` on the identity template.
    decoders: Vec<Vec<SparseRow>>,
}

impl TableScheme {
    pub fn new(
        desc: Descriptor,
        targets: Vec<usize>,
        tables: Vec<Vec<Vec<Cell>>>,
        classes: ClassMap,
    ) -> Result<TableScheme> {
        if targets.len() != tables.len() || targets.is_empty() {
            return Err(Error::DimensionMismatch("one table per target required".into()));
        }
        for &m in &classes.msg {
            if classes.sizes.get(m) != Some(&desc.msg_len) {
                return Err(Error::DimensionMismatch("message classes must have size L".into()));
            }
        }
        for (p, &c) in classes.pool.iter().enumerate() {
            if classes.sizes.get(c) != Some(&desc.pool_sizes[p]) {
                return Err(Error::DimensionMismatch(format!("class of pool {} has the wrong size", p + 1)));
            }
        }
        for (&t, table) in targets.iter().zip(&tables) {
            if t >= desc.n_messages() {
                return Err(Error::UnknownTarget(format!("{}", t + 1)));
            }
            if table.len() != desc.n_servers() {
                return Err(Error::DimensionMismatch("one cell list per server required".into()));
            }
            for (n, cells) in table.iter().enumerate() {
                if cells.len() != desc.downloads[n] {
                    return Err(Error::DimensionMismatch(format!(
                        "{}: server {} downloads {} symbols for target {}, expected {}",
                        desc.name,
                        n + 1,
                        cells.len(),
                        desc.graph.target_label(t),
                        desc.downloads[n]
                    )));
                }
                for term in cells.iter().flat_map(|c| &c.terms) {
                    let local = desc.sym_in_range(term.sym)
                        && match term.sym {
                            Sym::Msg { m, .. } => desc.storage.holds_message(n, m),
                            Sym::Rand { pool, .. } => desc.storage.holds_pool(n, pool),
                        };
                    if !local {
                        return Err(Error::NonLocalSymbol { server: n + 1, symbol: desc.sym_name(term.sym) });
                    }
                }
            }
        }
        let decoders = targets
            .iter()
            .zip(&tables)
            .map(|(&t, table)| template_decoder(&desc, t, table))
            .collect::<Result<Vec<_>>>()?;
        Ok(TableScheme { desc, targets, tables, classes, decoders })
    }

    pub fn tables(&self) -> impl Iterator<Item = (usize, &Vec<Vec<Cell>>)> {
        self.targets.iter().copied().zip(&self.tables)
    }

    pub fn table(&self, target: usize) -> Option<&Vec<Vec<Cell>>> {
        self.position(target).map(|p| &self.tables[p])
    }

    pub fn classes(&self) -> &ClassMap {
        &self.classes
    }

    fn position(&self, target: usize) -> Option<usize> {
        self.targets.iter().position(|&t| t == target)
    }

    fn table_for(&self, target: usize) -> Result<(usize, &Vec<Vec<Cell>>)> {
        let p = self
            .position(target)
            .ok_or_else(|| Error::UnknownTarget(self.desc.graph.target_label(target)))?;
        Ok((p, &self.tables[p]))
    }

    fn check_coins<'a>(&self, coins: &'a Coins) -> Result<&'a [Vec<usize>]> {
        match coins {
            Coins::Perms(p) if p.len() == self.classes.sizes.len()
                && p.iter().zip(&self.classes.sizes).all(|(perm, &s)| perm.len() == s) =>
            {
                Ok(p)
            }
            _ => Err(Error::DimensionMismatch(format!("coins must be permutations of {:?}", self.classes.sizes))),
        }
    }

    fn permute_cell(&self, cell: &Cell, perms: &[Vec<usize>]) -> Cell {
        Cell::new(
            cell.terms
                .iter()
                .map(|t| {
                    let mut t = *t;
                    t.sym = t.sym.with_index(perms[self.classes.class_of(&t.sym)][t.sym.index()]);
                    t
                })
                .collect(),
        )
    }

    /// Permuted cells per server, sorted, each with its template position.
    fn permuted(&self, perms: &[Vec<usize>], table: &[Vec<Cell>]) -> Vec<Vec<(Cell, usize)>> {
        table
            .iter()
            .map(|cells| {
                let mut v: Vec<(Cell, usize)> =
                    cells.iter().enumerate().map(|(c, cell)| (self.permute_cell(cell, perms), c)).collect();
                v.sort();
                v
            })
            .collect()
    }

    /// Text form of the identity template, loadable by [`TableFile::parse`].
    pub fn to_table_file(&self) -> TableFile {
        let mode = if self.desc.pool_sizes.iter().all(|&s| s == 0) {
            TableMode::Pir
        } else {
            match self.desc.mode {
                RandomnessMode::GraphReplicated => TableMode::Gr,
                RandomnessMode::FullyReplicated => TableMode::Fr,
            }
        };
        TableFile {
            graph: self.desc.graph.clone(),
            mode,
            msg_len: self.desc.msg_len,
            tables: self.tables().map(|(t, tab)| (t, tab.clone())).collect(),
        }
    }

    /// The same scheme with every randomness symbol removed. Cells that held
    /// only randomness are dropped.
    pub fn without_pads(&self) -> Result<TableScheme> {
        let tables: Vec<Vec<Vec<Cell>>> = self
            .tables
            .iter()
            .map(|table| {
                table
                    .iter()
                    .map(|cells| {
                        cells
                            .iter()
                            .map(|c| Cell::new(c.terms.iter().filter(|t| !t.sym.is_rand()).copied().collect()))
                            .filter(|c| !c.terms.is_empty())
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let downloads: Vec<usize> = tables[0].iter().map(Vec::len).collect();
        let mut desc = self.desc.clone();
        desc.name = format!("{} without pads", desc.name);
        desc.pool_sizes = vec![0; desc.pool_sizes.len()];
        desc.downloads = downloads;
        let classes = ClassMap::independent(&desc);
        TableScheme::new(desc, self.targets.clone(), tables, classes)
    }

    /// The same scheme with one interference pad replaced by another, so two
    /// distinct interference symbols share a pad.
    pub fn with_reused_pad(&self) -> Result<TableScheme> {
        let target = self.targets[0];
        let table = &self.tables[0];
        let mut direct = BTreeSet::new();
        let mut interference: Vec<Sym> = Vec::new();
        for cell in table.iter().flatten() {
            let touches_other = cell.messages().any(|(m, _)| m != target);
            let pads = cell.terms.iter().filter(|t| t.sym.is_rand()).map(|t| t.sym);
            if cell.messages().next().is_none() {
                direct.extend(pads);
            } else if touches_other {
                interference.extend(pads);
            }
        }
        interference.retain(|s| !direct.contains(s));
        interference.sort();
        interference.dedup();
        let pair = interference.iter().enumerate().find_map(|(a, &x)| {
            interference[a + 1..].iter().find(|y| matches!((x, **y), (Sym::Rand { pool: p, .. }, Sym::Rand { pool: q, .. }) if p == q)).map(|&y| (x, y))
        });
        let (keep, replace) =
            pair.ok_or_else(|| Error::Unsupported("no two interference pads share a pool".into()))?;
        let tables = self
            .tables
            .iter()
            .map(|table| {
                table
                    .iter()
                    .map(|cells| {
                        cells
                            .iter()
                            .map(|c| {
                                Cell::new(
                                    c.terms
                                        .iter()
                                        .map(|t| {
                                            let mut t = *t;
                                            if t.sym == replace {
                                                t.sym = keep;
                                            }
                                            t
                                        })
                                        .collect(),
                                )
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut desc = self.desc.clone();
        desc.name = format!("{} with a reused pad", desc.name);
        TableScheme::new(desc, self.targets.clone(), tables, self.classes.clone())
    }
}

fn template_decoder(desc: &Descriptor, target: usize, table: &[Vec<Cell>]) -> Result<Vec<SparseRow>> {
    let f = desc.field;
    let mut index = Vec::new();
    let mut cells = Vec::new();
    for (n, list) in table.iter().enumerate() {
        for (c, cell) in list.iter().enumerate() {
            index.push((n, c));
            cells.push(cell.clone());
        }
    }
    let forms = cell_forms(desc, &cells);
    let ech = Echelon::new(&f, &forms, desc.n_vars());
    (0..desc.msg_len)
        .map(|i| {
            let mut e = vec![0u32; desc.n_vars()];
            e[desc.var(Sym::Msg { m: target, i })] = 1;
            let c = ech.solve_left(&f, &e).ok_or_else(|| {
                Error::DecodeFailure(format!(
                    "{}: symbol {} of {} is not recoverable from the answers",
                    desc.name,
                    i + 1,
                    desc.graph.target_label(target)
                ))
            })?;
            Ok(c.iter()
                .enumerate()
                .filter(|(_, &v)| v != 0)
                .map(|(p, &v)| (index[p].0, index[p].1, v))
                .collect())
        })
        .collect()
}

impl Scheme for TableScheme {
    fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    fn coin_domain(&self) -> CoinDomain {
        CoinDomain::Perms { sizes: self.classes.sizes.clone() }
    }

    fn targets(&self) -> Vec<usize> {
        self.targets.clone()
    }

    fn make_queries(&self, coins: &Coins, target: usize) -> Result<Vec<Query>> {
        let perms = self.check_coins(coins)?;
        let (_, table) = self.table_for(target)?;
        Ok(self
            .permuted(perms, table)
            .into_iter()
            .map(|cells| Query::Cells(cells.into_iter().map(|(c, _)| c).collect()))
            .collect())
    }

    fn answer(&self, _server: usize, query: &Query, store: &ServerStore) -> Result<Vec<u32>> {
        match query {
            Query::Cells(cells) => evaluate_cells(&self.desc, cells, store),
            _ => Err(Error::Unsupported("table schemes answer cell queries only".into())),
        }
    }

    fn answer_forms(&self, _server: usize, query: &Query) -> Result<Vec<Vec<u32>>> {
        match query {
            Query::Cells(cells) => Ok(cell_forms(&self.desc, cells)),
            _ => Err(Error::Unsupported("table schemes answer cell queries only".into())),
        }
    }

    fn decoder(&self, coins: &Coins, target: usize) -> Result<Vec<Vec<u32>>> {
        let perms = self.check_coins(coins)?;
        let (p, table) = self.table_for(target)?;
        let permuted = self.permuted(perms, table);
        let mut offsets = Vec::with_capacity(permuted.len());
        let mut total = 0;
        for cells in &permuted {
            offsets.push(total);
            total += cells.len();
        }
        let mut pos: Vec<Vec<usize>> = table.iter().map(|c| vec![0; c.len()]).collect();
        for (n, cells) in permuted.iter().enumerate() {
            for (sorted, (_, orig)) in cells.iter().enumerate() {
                pos[n][*orig] = sorted;
            }
        }
        let f = self.desc.field;
        let pi = &perms[self.classes.msg[target]];
        let mut rows = vec![vec![0u32; total]; self.desc.msg_len];
        for (i, sparse) in self.decoders[p].iter().enumerate() {
            let row = &mut rows[pi[i]];
            for &(n, c, v) in sparse {
                let col = offsets[n] + pos[n][c];
                row[col] = f.add(row[col], v);
            }
        }
        Ok(rows)
    }

    fn label_class(&self, sym: &Sym) -> Option<usize> {
        Some(self.classes.class_of(sym))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::graphs::{Graph, MultiGraph};
    use crate::protocol::{enumerate_coins, run_transcript, MessageDatabase, RandomnessPool};
    use rand::SeedableRng;

    fn p3_spir() -> TableScheme {
        let text = "graph path 3\nmode gr\nL 2\n\
            target 1\nserver 1: s1_1, a1+s1_2\nserver 2: s1_2+s2_2, a2+b2+s1_1+s2_1\nserver 3: s2_2, b2+s2_1\n\
            target 2\nserver 1: s1_1, a1+s1_2\nserver 2: s1_1+s2_1, a1+b1+s1_2+s2_2\nserver 3: s2_2, b2+s2_1\n";
        let file = TableFile::parse(text).unwrap();
        let f = PrimeField::new(2).unwrap();
        let g = MultiGraph::simple(Graph::path(3).unwrap());
        let desc = Descriptor::new("p3", g, f, RandomnessMode::GraphReplicated, 2, vec![2, 2], vec![2, 2, 2]);
        let classes = ClassMap::shared(&desc);
        let (targets, tables) = file.tables.into_iter().unzip();
        TableScheme::new(desc, targets, tables, classes).unwrap()
    }

    #[test]
    fn decodes_under_every_permutation() {
        let s = p3_spir();
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        let db = MessageDatabase::random(s.descriptor(), &mut rng);
        let pool = RandomnessPool::random(s.descriptor(), &mut rng);
        let coins: Vec<Coins> = enumerate_coins(&s.coin_domain()).unwrap().collect();
        assert_eq!(coins.len(), 4);
        for c in &coins {
            for t in [0, 1] {
                run_transcript(&s, &db, &pool, c, t).unwrap();
            }
        }
    }

    #[test]
    fn rejects_non_local_symbols() {
        let s = p3_spir();
        let mut tables: Vec<Vec<Vec<Cell>>> = s.tables.clone();
        tables[0][0][0] = Cell::of(&[Sym::Msg { m: 1, i: 0 }]);
        let err = TableScheme::new(s.desc.clone(), s.targets.clone(), tables, s.classes.clone()).unwrap_err();
        assert!(matches!(err, Error::NonLocalSymbol { server: 1, .. }));
    }

    #[test]
    fn rejects_undecodable_tables() {
        let s = p3_spir();
        let mut tables = s.tables.clone();
        tables[0][0][0] = Cell::of(&[Sym::Rand { pool: 0, i: 1 }]);
        let err = TableScheme::new(s.desc.clone(), s.targets.clone(), tables, s.classes.clone()).unwrap_err();
        assert!(matches!(err, Error::DecodeFailure(_)));
    }

    #[test]
    fn pad_faults() {
        let s = p3_spir();
        let bare = s.without_pads().unwrap();
        assert_eq!(bare.descriptor().downloads, vec![1, 1, 1]);
        assert!(bare.descriptor().pool_sizes.iter().all(|&p| p == 0));
    }
}
