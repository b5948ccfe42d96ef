//! PIR schemes used as converter inputs, and the staged multigraph lift.
//!
//! Schemes are answer templates over unpermuted symbol indices; the user's
//! private permutations are applied when the template becomes a
//! [`TableScheme`].

use std::collections::BTreeSet;

use num_integer::binomial;

use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::format::{TableFile, TableMode};
use crate::graphs::{Graph, MultiGraph, RandomnessMode};
use crate::protocol::{Cell, Descriptor, Rational, Sym, Term};
use crate::table::{ClassMap, TableScheme};

/// The half-length shift pairing indices `μ` and `μ + L/2` (0-based).
pub fn psi(len: usize, m: usize) -> usize {
    let h = len / 2;
    if m < h {
        m + h
    } else {
        m - h
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PirScheme {
    name: String,
    graph: MultiGraph,
    msg_len: usize,
    /// `(target, per-server cells)`, sorted by target.
    tables: Vec<(usize, Vec<Vec<Cell>>)>,
}

/// Desired-symbol counts at the two replicas of one target.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrpCount {
    pub target: usize,
    pub servers: (usize, usize),
    pub counts: (usize, usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SrpReport {
    pub holds: bool,
    pub counts: Vec<SrpCount>,
}

impl PirScheme {
    pub fn new(
        name: impl Into<String>,
        graph: MultiGraph,
        msg_len: usize,
        mut tables: Vec<(usize, Vec<Vec<Cell>>)>,
    ) -> Result<PirScheme> {
        tables.sort_by_key(|(t, _)| *t);
        let name = name.into();
        if tables.is_empty() {
            return Err(Error::DimensionMismatch("a PIR scheme needs at least one target".into()));
        }
        let downloads: Vec<usize> = tables[0].1.iter().map(Vec::len).collect();
        for (t, table) in &tables {
            if *t >= graph.n_messages() || table.len() != graph.n_servers() {
                return Err(Error::DimensionMismatch(format!("{name}: malformed table for target {}", t + 1)));
            }
            if table.iter().map(Vec::len).collect::<Vec<_>>() != downloads {
                return Err(Error::DimensionMismatch(format!(
                    "{name}: download counts differ between targets"
                )));
            }
            for (n, cells) in table.iter().enumerate() {
                for term in cells.iter().flat_map(|c| &c.terms) {
                    let Sym::Msg { m, i } = term.sym else {
                        return Err(Error::Unsupported(format!("{name}: PIR templates carry no randomness")));
                    };
                    let stored = m < graph.n_messages() && {
                        let (a, b) = graph.endpoints(m);
                        a == n || b == n
                    };
                    if !stored || i >= msg_len {
                        return Err(Error::NonLocalSymbol {
                            server: n + 1,
                            symbol: format!("{}{}", crate::protocol::message_letter(m), i + 1),
                        });
                    }
                }
            }
        }
        Ok(PirScheme { name, graph, msg_len, tables })
    }

    pub fn from_table_file(file: &TableFile) -> Result<PirScheme> {
        if file.mode != TableMode::Pir {
            return Err(Error::Unsupported(format!("expected `mode pir`, found `mode {}`", file.mode.name())));
        }
        PirScheme::new("loaded", file.graph.clone(), file.msg_len, file.tables.clone())
    }

    pub fn to_table_file(&self) -> TableFile {
        TableFile { graph: self.graph.clone(), mode: TableMode::Pir, msg_len: self.msg_len, tables: self.tables.clone() }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graph(&self) -> &MultiGraph {
        &self.graph
    }

    pub fn msg_len(&self) -> usize {
        self.msg_len
    }

    pub fn targets(&self) -> Vec<usize> {
        self.tables.iter().map(|(t, _)| *t).collect()
    }

    pub fn table(&self, target: usize) -> Option<&Vec<Vec<Cell>>> {
        self.tables.iter().find(|(t, _)| *t == target).map(|(_, tab)| tab)
    }

    pub fn tables(&self) -> &[(usize, Vec<Vec<Cell>>)] {
        &self.tables
    }

    pub fn downloads(&self) -> Vec<usize> {
        self.tables[0].1.iter().map(Vec::len).collect()
    }

    pub fn total_downloads(&self) -> usize {
        self.downloads().iter().sum()
    }

    pub fn rate(&self) -> Rational {
        Rational::new(self.msg_len as i64, self.total_downloads() as i64)
    }

    /// Indices of message `msg` referenced at `server` when retrieving `target`.
    pub fn retrieval_set(&self, target: usize, msg: usize, server: usize) -> BTreeSet<usize> {
        self.table(target)
            .map(|tab| {
                tab[server].iter().flat_map(|c| c.messages()).filter(|&(m, _)| m == msg).map(|(_, i)| i).collect()
            })
            .unwrap_or_default()
    }

    /// Whether each replica of every target serves exactly half of its symbols.
    pub fn check_srp(&self) -> SrpReport {
        let half = self.msg_len / 2;
        let even = self.msg_len.is_multiple_of(2);
        let counts: Vec<SrpCount> = self
            .targets()
            .into_iter()
            .map(|t| {
                let (i, j) = self.graph.endpoints(t);
                let counts = (self.retrieval_set(t, t, i).len(), self.retrieval_set(t, t, j).len());
                SrpCount { target: t, servers: (i, j), counts }
            })
            .collect();
        let holds = even && counts.iter().all(|c| c.counts == (half, half));
        SrpReport { holds, counts }
    }

    /// Conditions the converters rely on: SRP, the two desired halves swapped
    /// by ψ, and identical interference index sets of size L/2 at both
    /// replicas, disjoint from their ψ-image.
    pub fn check_convertible(&self) -> Result<()> {
        if !self.msg_len.is_multiple_of(2) {
            return Err(Error::OddLength(self.msg_len));
        }
        let srp = self.check_srp();
        if !srp.holds {
            let bad = srp.counts.iter().find(|c| c.counts != (self.msg_len / 2, self.msg_len / 2)).expect("a violation");
            return Err(Error::SrpViolation(format!(
                "{}: target {} retrieves {} and {} symbols from servers {} and {}",
                self.name,
                self.graph.target_label(bad.target),
                bad.counts.0,
                bad.counts.1,
                bad.servers.0 + 1,
                bad.servers.1 + 1
            )));
        }
        let l = self.msg_len;
        for t in self.targets() {
            let (i, j) = self.graph.endpoints(t);
            let pi = self.retrieval_set(t, t, i);
            let pj = self.retrieval_set(t, t, j);
            if pi.iter().map(|&m| psi(l, m)).collect::<BTreeSet<_>>() != pj {
                return Err(Error::SrpViolation(format!(
                    "{}: desired halves of {} are not exchanged by the half shift",
                    self.name,
                    self.graph.target_label(t)
                )));
            }
            for m in (0..self.graph.n_messages()).filter(|&m| m != t) {
                let (a, b) = self.graph.endpoints(m);
                let pa = self.retrieval_set(t, m, a);
                let pb = self.retrieval_set(t, m, b);
                if pa != pb || pa.len() != l / 2 || pa.iter().any(|&x| pa.contains(&psi(l, x))) {
                    return Err(Error::SrpViolation(format!(
                        "{}: interference from {} differs between its replicas when retrieving {}",
                        self.name,
                        self.graph.target_label(m),
                        self.graph.target_label(t)
                    )));
                }
            }
        }
        Ok(())
    }

    /// The scheme as an executable PIR protocol (no randomness).
    pub fn to_scheme(&self, field: PrimeField) -> Result<TableScheme> {
        let desc = Descriptor::new(
            self.name.clone(),
            self.graph.clone(),
            field,
            RandomnessMode::GraphReplicated,
            self.msg_len,
            vec![0; self.graph.n_bundles()],
            self.downloads(),
        );
        let classes = ClassMap::independent(&desc);
        let (targets, tables) = self.tables.iter().cloned().unzip();
        TableScheme::new(desc, targets, tables, classes)
    }
}

fn msg(m: usize, i: usize) -> Sym {
    Sym::Msg { m, i }
}

fn sum(syms: &[(usize, usize)]) -> Cell {
    Cell::new(syms.iter().map(|&(m, i)| Term::plus(msg(m, i))).collect())
}

/// Two symbols per message on the three-server path.
pub fn pir_p3() -> PirScheme {
    let g = MultiGraph::simple(Graph::path(3).expect("valid"));
    let t1 = vec![vec![sum(&[(0, 0)])], vec![sum(&[(0, 1), (1, 1)])], vec![sum(&[(1, 1)])]];
    let t2 = vec![vec![sum(&[(0, 0)])], vec![sum(&[(0, 0), (1, 0)])], vec![sum(&[(1, 1)])]];
    PirScheme::new("pir-p3", g, 2, vec![(0, t1), (1, t2)]).expect("valid table")
}

/// Six symbols per message on the three-cycle; targets 2 and 3 are images
/// of target 1 under the rotation `v → v mod 3 + 1`.
pub fn pir_c3() -> PirScheme {
    let g = MultiGraph::simple(Graph::cycle(3).expect("valid"));
    // messages: a = {1,2}, b = {2,3}, c = {1,3}
    let (a, b, c) = (0, 1, 2);
    let t1 = vec![
        vec![sum(&[(a, 0)]), sum(&[(c, 0)]), sum(&[(a, 1), (c, 1)]), sum(&[(a, 2), (c, 2)])],
        vec![sum(&[(a, 3)]), sum(&[(b, 0)]), sum(&[(a, 4), (b, 1)]), sum(&[(a, 5), (b, 2)])],
        vec![sum(&[(b, 1)]), sum(&[(c, 1)]), sum(&[(b, 2), (c, 0)]), sum(&[(b, 0), (c, 2)])],
    ];
    let rotate_msg = |m: usize| (m + 1) % 3;
    let rotate = |table: &Vec<Vec<Cell>>| -> Vec<Vec<Cell>> {
        let mut out = vec![Vec::new(); 3];
        for (n, cells) in table.iter().enumerate() {
            out[(n + 1) % 3] = cells
                .iter()
                .map(|cell| sum(&cell.messages().map(|(m, i)| (rotate_msg(m), i)).collect::<Vec<_>>()))
                .collect();
        }
        out
    };
    let t2 = rotate(&t1);
    let t3 = rotate(&t2);
    PirScheme::new("pir-c3", g, 6, vec![(0, t1), (1, t2), (2, t3)]).expect("valid table")
}

/// Two symbols per message on the star: servers `n < N` return one symbol of
/// their message, the centre returns a new desired symbol plus the others.
pub fn pir_star_simple(n: usize) -> Result<PirScheme> {
    let g = MultiGraph::simple(Graph::star(n)?);
    let k_count = n - 1;
    let tables = (0..k_count)
        .map(|k| {
            let mut table: Vec<Vec<Cell>> = (0..k_count).map(|m| vec![sum(&[(m, 0)])]).collect();
            let centre: Vec<(usize, usize)> = (0..k_count).map(|m| (m, usize::from(m == k))).collect();
            table.push(vec![sum(&centre)]);
            (k, table)
        })
        .collect();
    PirScheme::new(format!("pir-star-simple({n})"), g, 2, tables)
}

pub fn pir_s4() -> PirScheme {
    pir_star_simple(4).expect("valid star")
}

fn choose(n: usize, k: isize) -> usize {
    if k < 0 || k as usize > n {
        0
    } else {
        binomial(n, k as usize)
    }
}

/// `(L', D')` of the t-parameterised star scheme.
pub fn star_t_sizes(n: usize, t: usize) -> (usize, usize) {
    let t = t as isize;
    let l = choose(n - 2, t - 1) + choose(n - 3, t - 2);
    let d = (n - 1) * choose(n - 3, t - 2) + choose(n - 1, t);
    (l, d)
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for x in start..n {
            cur.push(x);
            rec(x + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// The star scheme parameterised by `t`: the centre returns one t-sum per
/// t-subset of messages; leaf `n` returns the symbols of `W_n` that meet `W_k`
/// in those sums, and leaf `k` returns fresh desired symbols.
pub fn pir_star_t(n: usize, t: usize) -> Result<PirScheme> {
    let g = MultiGraph::simple(Graph::star(n)?);
    if t < 1 || t > n - 1 {
        return Err(Error::Unsupported(format!("t must lie in 1..={}, got {t}", n - 1)));
    }
    let kc = n - 1;
    let (l, _) = star_t_sizes(n, t);
    let direct = choose(n - 3, t as isize - 2);
    let sets = subsets(kc, t);
    let tables = (0..kc)
        .map(|k| {
            // Index assignment per message: for W_k, leaf symbols first, then
            // one per subset containing k; for W_m, subsets containing k first.
            let mut next = vec![0usize; kc];
            next[k] = direct;
            let mut index_in: Vec<Vec<usize>> = vec![vec![usize::MAX; sets.len()]; kc];
            for (si, s) in sets.iter().enumerate().filter(|(_, s)| s.contains(&k)) {
                for &m in s {
                    index_in[m][si] = next[m];
                    next[m] += 1;
                }
            }
            for (si, s) in sets.iter().enumerate().filter(|(_, s)| !s.contains(&k)) {
                for &m in s {
                    index_in[m][si] = next[m];
                    next[m] += 1;
                }
            }
            let mut table: Vec<Vec<Cell>> =
                (0..kc).map(|m| (0..direct).map(|i| sum(&[(m, i)])).collect()).collect();
            table.push(
                sets.iter()
                    .enumerate()
                    .map(|(si, s)| sum(&s.iter().map(|&m| (m, index_in[m][si])).collect::<Vec<_>>()))
                    .collect(),
            );
            (k, table)
        })
        .collect();
    PirScheme::new(format!("pir-star-t({n},{t})"), g, l, tables)
}

/// One term of a lifted cell: virtual symbol `μ` of the message sum over the
/// application set, and the real symbols it stands for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VirtualTerm {
    pub bundle: usize,
    pub mu: usize,
    pub coeff: i64,
    pub actual: Vec<Sym>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LiftedCell {
    /// Index into [`Lift::apps`].
    pub app: usize,
    pub rep: usize,
    pub terms: Vec<VirtualTerm>,
}

impl LiftedCell {
    pub fn cell(&self) -> Cell {
        Cell::new(
            self.terms
                .iter()
                .flat_map(|v| v.actual.iter().map(move |&sym| Term { sym, coeff: v.coeff }))
                .collect(),
        )
    }
}

/// A base scheme applied to every nonempty slice set `A ⊆ [r]`, `reps` times.
#[derive(Clone, Debug)]
pub struct Lift {
    pub graph: MultiGraph,
    pub base_len: usize,
    pub msg_len: usize,
    pub reps: usize,
    /// Nonempty subsets of slices, by size and then lexicographically.
    pub apps: Vec<Vec<usize>>,
    pub tables: Vec<(usize, Vec<Vec<LiftedCell>>)>,
}

impl Lift {
    pub fn table(&self, target: usize) -> Option<&Vec<Vec<LiftedCell>>> {
        self.tables.iter().find(|(t, _)| *t == target).map(|(_, tab)| tab)
    }
}

/// Nonempty subsets of `0..r`, ordered by size and then lexicographically.
pub fn slice_sets(r: usize) -> Vec<Vec<usize>> {
    (1..=r).flat_map(|s| subsets(r, s)).collect()
}

/// Builds the staged lift of `base` to `G^(r)`, repeated `reps` times.
///
/// Real index of slice `t` of bundle `ℓ` for virtual symbol `μ` of set `A ∋ t`:
/// `rep·2^{r-1}L' + pos_t(A)·L' + μ`, where `pos_t` ranks the sets containing
/// `t`. For the desired bundle and `τ ∈ A`, `|A| ≥ 2`, the other slices are
/// replaced by the sum the opposite replica returned for `(A∖τ, ψ(μ))`, so
/// that subtracting it leaves a fresh symbol of `W_{k,τ}`.
pub fn lift_virtual(base: &PirScheme, r: usize, reps: usize) -> Result<Lift> {
    if base.graph.r() != 1 {
        return Err(Error::Unsupported("the lift starts from a simple-graph scheme".into()));
    }
    if r < 1 {
        return Err(Error::InvalidMultiplicity(r));
    }
    base.check_convertible()?;
    let graph = base.graph.base().lift(r)?;
    let lp = base.msg_len;
    let half_sets = 1usize << (r - 1);
    let block = half_sets * lp;
    let apps = slice_sets(r);
    let pos: Vec<Vec<usize>> = (0..r)
        .map(|t| {
            let mut p = vec![usize::MAX; apps.len()];
            for (rank, (app, _)) in apps.iter().enumerate().filter(|(_, a)| a.contains(&t)).enumerate() {
                p[app] = rank;
            }
            p
        })
        .collect();
    let app_index = |set: &[usize]| apps.iter().position(|a| a == set).expect("subset listed");
    let real = |l: usize, t: usize, app: usize, mu: usize, rep: usize| Sym::Msg {
        m: graph.message(l, t),
        i: rep * block + pos[t][app] * lp + mu,
    };
    let plain = |l: usize, app: usize, mu: usize, rep: usize| -> Vec<Sym> {
        apps[app].iter().map(|&t| real(l, t, app, mu, rep)).collect()
    };
    let mut tables = Vec::new();
    for target in 0..graph.n_messages() {
        let (k, tau) = graph.bundle_of(target);
        let base_table = base.table(k).ok_or_else(|| Error::UnknownTarget(format!("{}", k + 1)))?;
        let mut table: Vec<Vec<LiftedCell>> = vec![Vec::new(); graph.n_servers()];
        for rep in 0..reps {
            for (app, set) in apps.iter().enumerate() {
                for (n, cells) in base_table.iter().enumerate() {
                    for cell in cells {
                        let terms = cell
                            .terms
                            .iter()
                            .map(|term| {
                                let Sym::Msg { m: l, i: mu } = term.sym else { unreachable!("PIR template") };
                                let actual = if l == k && set.len() >= 2 && set.contains(&tau) {
                                    let rest: Vec<usize> = set.iter().copied().filter(|&t| t != tau).collect();
                                    let mut v = vec![real(k, tau, app, mu, rep)];
                                    v.extend(plain(k, app_index(&rest), psi(lp, mu), rep));
                                    v
                                } else {
                                    plain(l, app, mu, rep)
                                };
                                VirtualTerm { bundle: l, mu, coeff: term.coeff, actual }
                            })
                            .collect();
                        table[n].push(LiftedCell { app, rep, terms });
                    }
                }
            }
        }
        tables.push((target, table));
    }
    Ok(Lift { graph, base_len: lp, msg_len: block * reps, reps, apps, tables })
}

/// The PIR scheme `T^(r)` on `G^(r)`: `2^{r-1}L'` symbols per message and
/// `(2^r - 1)D'` downloads.
pub fn lift_pir_multigraph(base: &PirScheme, r: usize) -> Result<PirScheme> {
    let lift = lift_virtual(base, r, 1)?;
    let tables = lift
        .tables
        .iter()
        .map(|(t, tab)| (*t, tab.iter().map(|cells| cells.iter().map(LiftedCell::cell).collect()).collect()))
        .collect();
    let name = if r == 1 { base.name.clone() } else { format!("{}^({r})", base.name) };
    PirScheme::new(name, lift.graph, lift.msg_len, tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::format_cell;

    fn render(t: &[Vec<Cell>]) -> Vec<Vec<String>> {
        t.iter().map(|cells| cells.iter().map(|c| format_cell(c, TableMode::Pir)).collect()).collect()
    }

    #[test]
    fn psi_is_a_fixed_point_free_involution() {
        for l in (2..=64).step_by(2) {
            for m in 0..l {
                assert_ne!(psi(l, m), m);
                assert_eq!(psi(l, psi(l, m)), m);
            }
        }
    }

    #[test]
    fn p3_table_and_srp() {
        let p = pir_p3();
        assert_eq!(render(p.table(0).unwrap()), vec![vec!["a1"], vec!["a2+b2"], vec!["b2"]]);
        assert_eq!(p.rate(), Rational::new(2, 3));
        assert!(p.check_srp().holds);
        p.check_convertible().unwrap();
    }

    #[test]
    fn c3_rotations() {
        let p = pir_c3();
        assert_eq!(p.rate(), Rational::new(1, 2));
        assert_eq!(p.downloads(), vec![4, 4, 4]);
        let srp = p.check_srp();
        assert!(srp.holds);
        assert!(srp.counts.iter().all(|c| c.counts == (3, 3)));
        p.check_convertible().unwrap();
        p.to_scheme(PrimeField::new(2).unwrap()).unwrap();
    }

    #[test]
    fn star_schemes() {
        let s4 = pir_s4();
        assert_eq!(render(s4.table(1).unwrap())[3], vec!["a1+b2+c1"]);
        assert_eq!(s4.rate(), Rational::new(1, 2));
        for n in 3..=8 {
            assert!(pir_star_simple(n).unwrap().check_srp().holds);
        }
        let t = pir_star_t(4, 2).unwrap();
        assert_eq!((t.msg_len(), t.total_downloads()), (3, 6));
        assert_eq!(
            render(t.table(0).unwrap()),
            vec![vec!["a1"], vec!["b1"], vec!["c1"], vec!["a2+b1", "a3+c1", "b2+c2"]]
        );
        t.to_scheme(PrimeField::new(2).unwrap()).unwrap();
        assert!(!pir_star_t(5, 2).unwrap().check_srp().holds);
        let one = pir_star_t(5, 1).unwrap();
        assert_eq!(one.downloads(), vec![0, 0, 0, 0, 4]);
        assert!(pir_star_t(4, 4).is_err());
    }

    #[test]
    fn lift_sizes_and_identity() {
        let p = pir_p3();
        assert_eq!(lift_pir_multigraph(&p, 1).unwrap().tables(), p.tables());
        let l2 = lift_pir_multigraph(&p, 2).unwrap();
        assert_eq!(l2.msg_len(), 4);
        assert_eq!(l2.total_downloads(), 9);
        assert_eq!(
            render(l2.table(0).unwrap()),
            vec![vec!["a1", "c1", "a3+c2"], vec!["a2+b2", "c2+d2", "a4+b4+c1+d4"], vec!["b2", "d2", "b4+d4"]]
        );
        l2.to_scheme(PrimeField::new(2).unwrap()).unwrap();
        let l3 = lift_pir_multigraph(&p, 3).unwrap();
        assert_eq!((l3.msg_len(), l3.total_downloads()), (8, 21));
        l3.to_scheme(PrimeField::new(3).unwrap()).unwrap();
    }

    #[test]
    fn lift_rejects_non_srp() {
        assert!(matches!(lift_pir_multigraph(&pir_star_t(5, 2).unwrap(), 2), Err(Error::SrpViolation(_))));
    }
}
