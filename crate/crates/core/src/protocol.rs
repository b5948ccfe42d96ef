//! Scheme-agnostic execution: databases, coins, queries, transcripts and
//! rate accounting.

use std::fmt::Write as _;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::graphs::{MultiGraph, RandomnessMode, StorageMap};

pub type Rational = Ratio<i64>;

/// A reference to one stored symbol: `w_m(i)` or `s_{pool}(i)`, 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sym {
    Msg { m: usize, i: usize },
    Rand { pool: usize, i: usize },
}

impl Sym {
    pub fn index(&self) -> usize {
        match *self {
            Sym::Msg { i, .. } | Sym::Rand { i, .. } => i,
        }
    }

    pub fn with_index(&self, i: usize) -> Sym {
        match *self {
            Sym::Msg { m, .. } => Sym::Msg { m, i },
            Sym::Rand { pool, .. } => Sym::Rand { pool, i },
        }
    }

    pub fn is_rand(&self) -> bool {
        matches!(self, Sym::Rand { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Term {
    pub sym: Sym,
    pub coeff: i64,
}

impl Term {
    pub fn plus(sym: Sym) -> Term {
        Term { sym, coeff: 1 }
    }
}

/// One downloaded symbol: a linear combination of symbols stored at a server.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Cell {
    pub terms: Vec<Term>,
}

impl Cell {
    pub fn new(mut terms: Vec<Term>) -> Cell {
        terms.sort();
        Cell { terms }
    }

    pub fn of(syms: &[Sym]) -> Cell {
        Cell::new(syms.iter().copied().map(Term::plus).collect())
    }

    pub fn has_rand(&self) -> bool {
        self.terms.iter().any(|t| t.sym.is_rand())
    }

    pub fn messages(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.terms.iter().filter_map(|t| match t.sym {
            Sym::Msg { m, i } => Some((m, i)),
            Sym::Rand { .. } => None,
        })
    }
}

/// What the user sends to one server.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Query {
    /// Coefficient vector over the server's stored messages (general scheme).
    Coefficients(Vec<u32>),
    /// Coefficients with the desired-message indicator sent separately, in the clear.
    Unblinded { blinded: Vec<u32>, indicator: Vec<u32> },
    /// A canonically sorted list of cells (table schemes).
    Cells(Vec<Cell>),
}

impl Query {
    /// A flat key identifying the query value, used to count query distributions.
    pub fn key(&self) -> Vec<u64> {
        match self {
            Query::Coefficients(v) => std::iter::once(0).chain(v.iter().map(|&x| x as u64)).collect(),
            Query::Unblinded { blinded, indicator } => std::iter::once(1)
                .chain(blinded.iter().map(|&x| x as u64))
                .chain(std::iter::once(u64::MAX))
                .chain(indicator.iter().map(|&x| x as u64))
                .collect(),
            Query::Cells(cells) => {
                let mut k = vec![2];
                for c in cells {
                    k.push(c.terms.len() as u64);
                    for t in &c.terms {
                        let (tag, a, i) = match t.sym {
                            Sym::Msg { m, i } => (0u64, m, i),
                            Sym::Rand { pool, i } => (1u64, pool, i),
                        };
                        k.extend([tag, a as u64, i as u64, t.coeff as u64]);
                    }
                }
                k
            }
        }
    }
}

/// Static description of a scheme instance.
#[derive(Clone, Debug)]
pub struct Descriptor {
    pub name: String,
    pub graph: MultiGraph,
    pub field: PrimeField,
    pub mode: RandomnessMode,
    /// Symbols per message, L.
    pub msg_len: usize,
    /// Graph-replicated: one entry per bundle. Fully-replicated: a single entry, H(R).
    pub pool_sizes: Vec<usize>,
    /// Downloaded symbols per server.
    pub downloads: Vec<usize>,
    pub storage: StorageMap,
}

impl Descriptor {
    pub fn new(
        name: impl Into<String>,
        graph: MultiGraph,
        field: PrimeField,
        mode: RandomnessMode,
        msg_len: usize,
        pool_sizes: Vec<usize>,
        downloads: Vec<usize>,
    ) -> Descriptor {
        let storage = StorageMap::new(&graph, mode);
        Descriptor { name: name.into(), graph, field, mode, msg_len, pool_sizes, downloads, storage }
    }

    pub fn n_servers(&self) -> usize {
        self.graph.n_servers()
    }

    pub fn n_messages(&self) -> usize {
        self.graph.n_messages()
    }

    pub fn n_msg_vars(&self) -> usize {
        self.n_messages() * self.msg_len
    }

    pub fn n_vars(&self) -> usize {
        self.n_msg_vars() + self.pool_sizes.iter().sum::<usize>()
    }

    pub fn total_downloads(&self) -> usize {
        self.downloads.iter().sum()
    }

    fn pool_offset(&self, pool: usize) -> usize {
        self.n_msg_vars() + self.pool_sizes[..pool].iter().sum::<usize>()
    }

    /// Position of a symbol in the flat unknown vector (messages first, then pools).
    pub fn var(&self, s: Sym) -> usize {
        match s {
            Sym::Msg { m, i } => m * self.msg_len + i,
            Sym::Rand { pool, i } => self.pool_offset(pool) + i,
        }
    }

    pub fn sym_of(&self, var: usize) -> Sym {
        if var < self.n_msg_vars() {
            return Sym::Msg { m: var / self.msg_len, i: var % self.msg_len };
        }
        let mut off = var - self.n_msg_vars();
        for (pool, &size) in self.pool_sizes.iter().enumerate() {
            if off < size {
                return Sym::Rand { pool, i: off };
            }
            off -= size;
        }
        panic!("variable {var} out of range")
    }

    pub fn sym_in_range(&self, s: Sym) -> bool {
        match s {
            Sym::Msg { m, i } => m < self.n_messages() && i < self.msg_len,
            Sym::Rand { pool, i } => pool < self.pool_sizes.len() && i < self.pool_sizes[pool],
        }
    }

    pub fn sym_name(&self, s: Sym) -> String {
        match s {
            Sym::Msg { m, i } => format!("{}{}", message_letter(m), i + 1),
            Sym::Rand { pool, i } => match self.mode {
                RandomnessMode::GraphReplicated => format!("s{}_{}", pool + 1, i + 1),
                RandomnessMode::FullyReplicated => format!("s{}", i + 1),
            },
        }
    }

    /// Renders a linear form over the flat unknowns, e.g. `a1+b2-s1_1`.
    pub fn render_form(&self, form: &[u32]) -> String {
        let mut out = String::new();
        for (v, &c) in form.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let c = self.field.signed(c);
            let name = self.sym_name(self.sym_of(v));
            let sign = if c < 0 { "-" } else if out.is_empty() { "" } else { "+" };
            let mag = c.unsigned_abs();
            if mag == 1 {
                let _ = write!(out, "{sign}{name}");
            } else {
                let _ = write!(out, "{sign}{mag}{name}");
            }
        }
        if out.is_empty() {
            out.push('0');
        }
        out
    }

    pub fn rate(&self) -> Rational {
        Rational::new(self.msg_len as i64, self.total_downloads() as i64)
    }
}

/// Letter used for message `m` in printed tables: a, b, c, … skipping `s`,
/// which is reserved for randomness. Beyond `z` the form `w<m>_` is used.
pub fn message_letter(m: usize) -> String {
    const LETTERS: &[u8] = b"abcdefghijklmnopqrtuvwxyz";
    if m < LETTERS.len() {
        (LETTERS[m] as char).to_string()
    } else {
        format!("w{}_", m + 1)
    }
}

pub fn letter_index(c: char) -> Option<usize> {
    const LETTERS: &str = "abcdefghijklmnopqrtuvwxyz";
    LETTERS.find(c)
}

pub fn rate_of(desc: &Descriptor) -> Rational {
    desc.rate()
}

/// `(ρ, ρ_total)`; ρ is only defined for graph-replicated randomness.
pub fn randomness_ratios(desc: &Descriptor) -> (Option<Rational>, Rational) {
    let l = desc.msg_len as i64;
    let total = Rational::new(desc.pool_sizes.iter().sum::<usize>() as i64, l);
    let rho = match desc.mode {
        RandomnessMode::GraphReplicated => desc.pool_sizes.first().map(|&s| Rational::new(s as i64, l)),
        RandomnessMode::FullyReplicated => None,
    };
    (rho, total)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MessageDatabase {
    pub msg_len: usize,
    pub messages: Vec<Vec<u32>>,
}

impl MessageDatabase {
    pub fn zero(desc: &Descriptor) -> MessageDatabase {
        MessageDatabase { msg_len: desc.msg_len, messages: vec![vec![0; desc.msg_len]; desc.n_messages()] }
    }

    pub fn random<R: Rng + ?Sized>(desc: &Descriptor, rng: &mut R) -> MessageDatabase {
        let q = desc.field.order();
        let messages = (0..desc.n_messages())
            .map(|_| (0..desc.msg_len).map(|_| rng.gen_range(0..q)).collect())
            .collect();
        MessageDatabase { msg_len: desc.msg_len, messages }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RandomnessPool {
    pub pools: Vec<Vec<u32>>,
}

impl RandomnessPool {
    pub fn zero(desc: &Descriptor) -> RandomnessPool {
        RandomnessPool { pools: desc.pool_sizes.iter().map(|&s| vec![0; s]).collect() }
    }

    pub fn random<R: Rng + ?Sized>(desc: &Descriptor, rng: &mut R) -> RandomnessPool {
        let q = desc.field.order();
        RandomnessPool {
            pools: desc.pool_sizes.iter().map(|&s| (0..s).map(|_| rng.gen_range(0..q)).collect()).collect(),
        }
    }
}

/// Splits a flat assignment of all unknowns into a database and a pool.
pub fn split_assignment(desc: &Descriptor, x: &[u32]) -> (MessageDatabase, RandomnessPool) {
    let l = desc.msg_len;
    let messages = (0..desc.n_messages()).map(|m| x[m * l..(m + 1) * l].to_vec()).collect();
    let mut off = desc.n_msg_vars();
    let mut pools = Vec::new();
    for &s in &desc.pool_sizes {
        pools.push(x[off..off + s].to_vec());
        off += s;
    }
    (MessageDatabase { msg_len: l, messages }, RandomnessPool { pools })
}

/// The part of the database and randomness one server stores.
#[derive(Clone, Debug)]
pub struct ServerStore<'a> {
    pub server: usize,
    messages: Vec<(usize, &'a [u32])>,
    pools: Vec<(usize, &'a [u32])>,
}

impl<'a> ServerStore<'a> {
    pub fn new(desc: &Descriptor, server: usize, db: &'a MessageDatabase, pool: &'a RandomnessPool) -> ServerStore<'a> {
        let messages = desc.storage.messages[server].iter().map(|&m| (m, db.messages[m].as_slice())).collect();
        let pools = desc.storage.pools[server]
            .iter()
            .filter(|&&p| p < pool.pools.len())
            .map(|&p| (p, pool.pools[p].as_slice()))
            .collect();
        ServerStore { server, messages, pools }
    }

    pub fn message(&self, m: usize) -> Option<&[u32]> {
        self.messages.iter().find(|(k, _)| *k == m).map(|(_, v)| *v)
    }

    pub fn pool(&self, p: usize) -> Option<&[u32]> {
        self.pools.iter().find(|(k, _)| *k == p).map(|(_, v)| *v)
    }

    pub fn symbol(&self, s: Sym) -> Option<u32> {
        match s {
            Sym::Msg { m, i } => self.message(m).and_then(|v| v.get(i).copied()),
            Sym::Rand { pool, i } => self.pool(pool).and_then(|v| v.get(i).copied()),
        }
    }
}

/// The user's private randomness.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Coins {
    /// A vector over F_q (the general scheme's h).
    Vector(Vec<u32>),
    /// One permutation per symmetry class; `perms[c][i]` is where index i goes.
    Perms(Vec<Vec<usize>>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum CoinDomain {
    Vector { len: usize, q: u32 },
    Perms { sizes: Vec<usize> },
}

fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

impl CoinDomain {
    /// Number of coin values, or `None` if it overflows u128.
    pub fn size(&self) -> Option<u128> {
        match self {
            CoinDomain::Vector { len, q } => (0..*len).try_fold(1u128, |acc, _| acc.checked_mul(*q as u128)),
            CoinDomain::Perms { sizes } => {
                sizes.iter().try_fold(1u128, |acc, &s| factorial(s).and_then(|f| acc.checked_mul(f)))
            }
        }
    }

    /// The coin with the given rank in the enumeration order.
    pub fn coin(&self, mut idx: u128) -> Coins {
        match self {
            CoinDomain::Vector { len, q } => {
                let mut v = vec![0u32; *len];
                for x in v.iter_mut().rev() {
                    *x = (idx % *q as u128) as u32;
                    idx /= *q as u128;
                }
                Coins::Vector(v)
            }
            CoinDomain::Perms { sizes } => {
                let mut perms = Vec::with_capacity(sizes.len());
                for &s in sizes.iter().rev() {
                    let f = factorial(s).expect("enumerable domain");
                    perms.push(nth_permutation(s, idx % f));
                    idx /= f;
                }
                perms.reverse();
                Coins::Perms(perms)
            }
        }
    }

    pub fn identity(&self) -> Coins {
        match self {
            CoinDomain::Vector { len, .. } => Coins::Vector(vec![1; *len]),
            CoinDomain::Perms { sizes } => Coins::Perms(sizes.iter().map(|&s| (0..s).collect()).collect()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Coins {
        match self {
            CoinDomain::Vector { len, q } => Coins::Vector((0..*len).map(|_| rng.gen_range(0..*q)).collect()),
            CoinDomain::Perms { sizes } => Coins::Perms(
                sizes
                    .iter()
                    .map(|&s| {
                        let mut p: Vec<usize> = (0..s).collect();
                        p.shuffle(rng);
                        p
                    })
                    .collect(),
            ),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            CoinDomain::Vector { len, q } => format!("F_{q}^{len}"),
            CoinDomain::Perms { sizes } => {
                let parts: Vec<String> = sizes.iter().map(|s| format!("S_{s}")).collect();
                parts.join(" x ")
            }
        }
    }
}

/// Permutation of `0..n` with lexicographic rank `idx` (Lehmer code).
pub fn nth_permutation(n: usize, mut idx: u128) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let mut out = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let f = factorial(k).expect("small permutation");
        let d = (idx / f) as usize;
        idx %= f;
        out.push(pool.remove(d));
    }
    out
}

/// Iterates the full coin domain in rank order.
pub fn enumerate_coins(domain: &CoinDomain) -> Result<impl Iterator<Item = Coins> + '_> {
    let n = domain
        .size()
        .ok_or_else(|| Error::NotEnumerable(format!("{} overflows", domain.describe())))?;
    Ok((0..n).map(move |i| domain.coin(i)))
}

/// An executable retrieval protocol.
pub trait Scheme: Send + Sync {
    fn descriptor(&self) -> &Descriptor;

    fn coin_domain(&self) -> CoinDomain;

    /// Flat message indices the scheme can retrieve.
    fn targets(&self) -> Vec<usize> {
        (0..self.descriptor().n_messages()).collect()
    }

    fn make_queries(&self, coins: &Coins, target: usize) -> Result<Vec<Query>>;

    /// Evaluates a query against one server's local storage.
    fn answer(&self, server: usize, query: &Query, store: &ServerStore) -> Result<Vec<u32>>;

    /// The answers of `server` as linear forms over the flat unknown vector.
    fn answer_forms(&self, server: usize, query: &Query) -> Result<Vec<Vec<u32>>>;

    /// Decoding matrix: row `i` combines the concatenated answers into symbol `i` of the target.
    fn decoder(&self, coins: &Coins, target: usize) -> Result<Vec<Vec<u32>>>;

    /// Symmetry class of a symbol when coins are per-class permutations.
    fn label_class(&self, _sym: &Sym) -> Option<usize> {
        None
    }

    fn decode(&self, answers: &[Vec<u32>], coins: &Coins, target: usize) -> Result<Vec<u32>> {
        let f = self.descriptor().field;
        let flat: Vec<u32> = answers.iter().flatten().copied().collect();
        let dec = self.decoder(coins, target)?;
        dec.iter()
            .map(|row| {
                if row.len() != flat.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "decoder expects {} answers, got {}",
                        row.len(),
                        flat.len()
                    )));
                }
                Ok(row.iter().zip(&flat).fold(0, |acc, (&c, &a)| f.add(acc, f.mul(c, a))))
            })
            .collect()
    }
}

/// Evaluates a cell list against a server store; every referenced symbol must be local.
pub fn evaluate_cells(desc: &Descriptor, cells: &[Cell], store: &ServerStore) -> Result<Vec<u32>> {
    let f = desc.field;
    cells
        .iter()
        .map(|cell| {
            cell.terms.iter().try_fold(0u32, |acc, t| {
                let v = store.symbol(t.sym).ok_or_else(|| Error::NonLocalSymbol {
                    server: store.server + 1,
                    symbol: desc.sym_name(t.sym),
                })?;
                Ok(f.add(acc, f.mul(f.reduce(t.coeff), v)))
            })
        })
        .collect()
}

pub fn cell_forms(desc: &Descriptor, cells: &[Cell]) -> Vec<Vec<u32>> {
    let f = desc.field;
    cells
        .iter()
        .map(|cell| {
            let mut form = vec![0u32; desc.n_vars()];
            for t in &cell.terms {
                let v = desc.var(t.sym);
                form[v] = f.add(form[v], f.reduce(t.coeff));
            }
            form
        })
        .collect()
}

/// One complete protocol run.
#[derive(Clone, Debug)]
pub struct Transcript {
    pub target: usize,
    pub coins: Coins,
    pub queries: Vec<Query>,
    pub answers: Vec<Vec<u32>>,
    pub decoded: Vec<u32>,
    pub downloads: Vec<usize>,
}

impl Transcript {
    /// One `server: symbol,symbol,…` line per server, then the decoded message.
    pub fn to_text(&self, desc: &Descriptor) -> String {
        let mut out = String::new();
        for (n, a) in self.answers.iter().enumerate() {
            let vals: Vec<String> = a.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}: {}", n + 1, vals.join(","));
        }
        let vals: Vec<String> = self.decoded.iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "{} = {}", desc.graph.target_label(self.target), vals.join(","));
        out
    }
}

/// Computes the answers of every server without decoding.
pub fn collect_answers(
    scheme: &dyn Scheme,
    queries: &[Query],
    db: &MessageDatabase,
    pool: &RandomnessPool,
) -> Result<Vec<Vec<u32>>> {
    let desc = scheme.descriptor();
    (0..desc.n_servers())
        .map(|n| {
            let store = ServerStore::new(desc, n, db, pool);
            let a = scheme.answer(n, &queries[n], &store)?;
            if a.len() != desc.downloads[n] {
                return Err(Error::DimensionMismatch(format!(
                    "server {} returned {} symbols, descriptor declares {}",
                    n + 1,
                    a.len(),
                    desc.downloads[n]
                )));
            }
            Ok(a)
        })
        .collect()
}

pub fn check_dimensions(desc: &Descriptor, db: &MessageDatabase, pool: &RandomnessPool) -> Result<()> {
    if db.messages.len() != desc.n_messages() || db.messages.iter().any(|m| m.len() != desc.msg_len) {
        return Err(Error::DimensionMismatch(format!(
            "database must hold {} messages of {} symbols",
            desc.n_messages(),
            desc.msg_len
        )));
    }
    if pool.pools.len() != desc.pool_sizes.len()
        || pool.pools.iter().zip(&desc.pool_sizes).any(|(p, &s)| p.len() != s)
    {
        return Err(Error::DimensionMismatch(format!("randomness pools must have sizes {:?}", desc.pool_sizes)));
    }
    let q = desc.field.order();
    if db.messages.iter().flatten().chain(pool.pools.iter().flatten()).any(|&v| v >= q) {
        return Err(Error::DimensionMismatch(format!("symbol outside F_{q}")));
    }
    Ok(())
}

/// Runs the protocol once and checks that the decoded message is the target.
pub fn run_transcript(
    scheme: &dyn Scheme,
    db: &MessageDatabase,
    pool: &RandomnessPool,
    coins: &Coins,
    target: usize,
) -> Result<Transcript> {
    let desc = scheme.descriptor();
    check_dimensions(desc, db, pool)?;
    if !scheme.targets().contains(&target) {
        return Err(Error::UnknownTarget(desc.graph.target_label(target)));
    }
    let queries = scheme.make_queries(coins, target)?;
    let answers = collect_answers(scheme, &queries, db, pool)?;
    let decoded = scheme.decode(&answers, coins, target)?;
    if decoded != db.messages[target] {
        return Err(Error::DecodeFailure(format!(
            "decoded {:?} but {} = {:?}",
            decoded,
            desc.graph.target_label(target),
            db.messages[target]
        )));
    }
    let downloads = answers.iter().map(Vec::len).collect();
    Ok(Transcript { target, coins: coins.clone(), queries, answers, decoded, downloads })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_ranks() {
        let all: Vec<Vec<usize>> = (0..6).map(|i| nth_permutation(3, i)).collect();
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[5], vec![2, 1, 0]);
        let mut sorted = all.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 6);
    }

    #[test]
    fn coin_domains() {
        let d = CoinDomain::Vector { len: 2, q: 2 };
        assert_eq!(d.size(), Some(4));
        let coins: Vec<Coins> = enumerate_coins(&d).unwrap().collect();
        assert_eq!(coins.len(), 4);
        assert_eq!(coins[3], Coins::Vector(vec![1, 1]));
        let p = CoinDomain::Perms { sizes: vec![2, 3] };
        assert_eq!(p.size(), Some(12));
        let all: std::collections::HashSet<Coins> = enumerate_coins(&p).unwrap().collect();
        assert_eq!(all.len(), 12);
        let huge = CoinDomain::Perms { sizes: vec![40, 40] };
        assert!(huge.size().is_none());
        assert!(enumerate_coins(&huge).is_err());
    }

    #[test]
    fn letters() {
        assert_eq!(message_letter(0), "a");
        assert_eq!(message_letter(17), "r");
        assert_eq!(message_letter(18), "t");
        assert_eq!(letter_index('t'), Some(18));
        assert_eq!(letter_index('s'), None);
    }
}
