//! PIR to SPIR conversions.
//!
//! Graph-replicated: a first pass of the PIR scheme over the randomness
//! vectors retrieves the desired pads, and a second pass over the messages
//! pads every symbol of index `μ` with `s_ℓ[ψ(μ)]`. On multigraphs the
//! second pass runs over every slice set of the staged lift.
//!
//! Fully-replicated: each server first returns `y` bare pads, then `x`
//! repetitions of the PIR scheme run with every message term padded from a
//! single shared pool.

use std::collections::{BTreeSet, HashMap};

use num_integer::{binomial, Integer};

use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::graphs::RandomnessMode;
use crate::pir_base::{lift_virtual, pir_star_t, psi, star_t_sizes, Lift, PirScheme};
use crate::protocol::{Cell, Descriptor, Sym, Term};
use crate::table::{ClassMap, TableScheme};

/// Graph-replicated SPIR from an SRP scheme on a simple graph.
pub fn gr_from_pir(t: &PirScheme, field: PrimeField) -> Result<TableScheme> {
    gr_multigraph_from_pir(t, 1, field)
}

/// Pad block of each slice set not containing `tau`, numbered from 1 in
/// slice-set order. Block 0 is the one the stand-alone pass retrieves.
fn pad_blocks(lift: &Lift, tau: usize) -> Vec<usize> {
    let mut next = 0;
    lift.apps
        .iter()
        .map(|a| {
            if a.contains(&tau) {
                usize::MAX
            } else {
                next += 1;
                next
            }
        })
        .collect()
}

fn without(set: &[usize], x: usize) -> Vec<usize> {
    set.iter().copied().filter(|&v| v != x).collect()
}

fn app_index(lift: &Lift, set: &[usize]) -> usize {
    lift.apps.iter().position(|a| a == set).expect("every nonempty slice set is listed")
}

fn template_on_pads(cells: &[Cell]) -> Vec<Cell> {
    cells
        .iter()
        .map(|c| {
            Cell::new(
                c.terms
                    .iter()
                    .map(|term| {
                        let Sym::Msg { m, i } = term.sym else { unreachable!("PIR template") };
                        Term { sym: Sym::Rand { pool: m, i }, coeff: term.coeff }
                    })
                    .collect(),
            )
        })
        .collect()
}

/// Graph-replicated SPIR on `G^(r)`: one stand-alone pass over `R_k` and the
/// padded lift. Pads of slice set `A ∋ τ` are those of `(A∖τ, ψ(μ))`, which
/// the opposite replica used.
pub fn gr_multigraph_from_pir(t: &PirScheme, r: usize, field: PrimeField) -> Result<TableScheme> {
    let lift = lift_virtual(t, r, 1)?;
    let lp = lift.base_len;
    let graph = lift.graph.clone();
    let mut targets = Vec::new();
    let mut tables = Vec::new();
    for (target, ltab) in &lift.tables {
        let (k, tau) = graph.bundle_of(*target);
        let blocks = pad_blocks(&lift, tau);
        let base = t.table(k).expect("lift covers every bundle");
        let mut table: Vec<Vec<Cell>> = base.iter().map(|cells| template_on_pads(cells)).collect();
        for (n, cells) in ltab.iter().enumerate() {
            for lc in cells {
                let set = &lift.apps[lc.app];
                let mut terms = Vec::new();
                for v in &lc.terms {
                    terms.extend(v.actual.iter().map(|&sym| Term { sym, coeff: v.coeff }));
                    let idx = if set.contains(&tau) {
                        let rest = without(set, tau);
                        let b = if rest.is_empty() { 0 } else { blocks[app_index(&lift, &rest)] };
                        b * lp + psi(lp, v.mu)
                    } else {
                        blocks[lc.app] * lp + v.mu
                    };
                    terms.push(Term { sym: Sym::Rand { pool: v.bundle, i: idx }, coeff: v.coeff });
                }
                table[n].push(Cell::new(terms));
            }
        }
        targets.push(*target);
        tables.push(table);
    }
    let downloads: Vec<usize> = t.downloads().iter().map(|d| d << r).collect();
    let name = if r == 1 { format!("gr({})", t.name()) } else { format!("gr({}, r={r})", t.name()) };
    let desc = Descriptor::new(
        name,
        graph.clone(),
        field,
        RandomnessMode::GraphReplicated,
        lift.msg_len,
        vec![lift.msg_len; graph.n_bundles()],
        downloads,
    );
    // With one slice, W_ℓ and R_ℓ share a permutation so that ψ pairs the
    // permuted indices. With several slices each vector is permuted alone.
    let classes = if r == 1 { ClassMap::shared(&desc) } else { ClassMap::independent(&desc) };
    TableScheme::new(desc, targets, tables, classes)
}

/// Repetition bookkeeping of the fully-replicated converter.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FrParams {
    /// `lcm(L'/2, N-1)`.
    pub lcm: usize,
    /// Repetitions of the PIR scheme.
    pub x: usize,
    /// Bare pads downloaded from each server.
    pub y: usize,
}

pub fn fr_params(base_len: usize, n_servers: usize) -> FrParams {
    let half = base_len / 2;
    let lcm = half.lcm(&(n_servers - 1));
    FrParams { lcm, x: lcm / half, y: lcm / (n_servers - 1) }
}

/// Pool size of the fully-replicated multigraph converter:
/// `N·y + (x·L'/2)·((2^r - 1)·K' - 1)`.
pub fn fr_pool_size(base_len: usize, n_servers: usize, n_bundles: usize, r: usize) -> usize {
    let p = fr_params(base_len, n_servers);
    n_servers * p.y + p.x * base_len / 2 * (((1 << r) - 1) * n_bundles - 1)
}

/// Pads used by one target of a fully-replicated scheme.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CrAssignment {
    pub target: usize,
    /// Pads downloaded bare, per server.
    pub direct: Vec<Vec<usize>>,
    /// Each interference occurrence (the real symbols it covers) with its pads.
    pub interference: Vec<(Vec<Sym>, Vec<usize>)>,
    /// Distinct pads referenced.
    pub total: usize,
}

impl CrAssignment {
    /// Interference pads are never downloaded bare and never shared between
    /// distinct interference occurrences.
    pub fn check(&self) -> Result<()> {
        let direct: BTreeSet<usize> = self.direct.iter().flatten().copied().collect();
        let mut seen: HashMap<usize, &Vec<Sym>> = HashMap::new();
        for (key, pads) in &self.interference {
            for p in pads {
                if direct.contains(p) {
                    return Err(Error::Unsupported(format!("interference pad s{} is also downloaded bare", p + 1)));
                }
                if let Some(other) = seen.insert(*p, key) {
                    if other != key {
                        return Err(Error::Unsupported(format!("pad s{} covers two interference occurrences", p + 1)));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Renumbers pad ids by first appearance: body cells in the given order,
/// then the bare downloads.
struct Renumber {
    map: HashMap<usize, usize>,
}

impl Renumber {
    fn new<'a>(body: impl IntoIterator<Item = &'a usize>, direct: &'a [Vec<usize>]) -> Renumber {
        let mut map = HashMap::new();
        for &id in body.into_iter().chain(direct.iter().flatten()) {
            let next = map.len();
            map.entry(id).or_insert(next);
        }
        Renumber { map }
    }

    fn get(&self, id: usize) -> usize {
        self.map[&id]
    }

    fn len(&self) -> usize {
        self.map.len()
    }
}

struct FrTarget {
    table: Vec<Vec<Cell>>,
    pads: CrAssignment,
}

/// One padded message term: real symbols, coefficient and pad ids.
type PaddedTerm = (Vec<Sym>, i64, Vec<usize>);

fn padded_cell(terms: &[PaddedTerm], renumber: &Renumber) -> Cell {
    Cell::new(
        terms
            .iter()
            .flat_map(|(syms, coeff, pads)| {
                syms.iter()
                    .map(move |&sym| Term { sym, coeff: *coeff })
                    .chain(pads.iter().map(move |&p| Term { sym: Sym::Rand { pool: 0, i: renumber.get(p) }, coeff: *coeff }))
            })
            .collect(),
    )
}

fn direct_cells(direct: &[Vec<usize>], renumber: &Renumber) -> Vec<Vec<Cell>> {
    direct
        .iter()
        .map(|ids| ids.iter().map(|&p| Cell::of(&[Sym::Rand { pool: 0, i: renumber.get(p) }])).collect())
        .collect()
}

fn renumber_assignment(pads: CrAssignment, renumber: &Renumber) -> CrAssignment {
    CrAssignment {
        target: pads.target,
        direct: pads.direct.iter().map(|v| v.iter().map(|&p| renumber.get(p)).collect()).collect(),
        interference: pads
            .interference
            .into_iter()
            .map(|(k, v)| (k, v.iter().map(|&p| renumber.get(p)).collect()))
            .collect(),
        total: renumber.len(),
    }
}

fn fr_target(lift: &Lift, target: usize, y: usize) -> Result<FrTarget> {
    let graph = &lift.graph;
    let n_servers = graph.n_servers();
    let lp = lift.base_len;
    let (k, tau) = graph.bundle_of(target);
    let (ri, rj) = graph.endpoints(target);
    let ltab = lift.table(target).expect("lift covers every target");
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        next - 1
    };
    let direct: Vec<Vec<usize>> = (0..n_servers).map(|_| (0..y).map(|_| fresh()).collect()).collect();
    // Pads of virtual symbols keyed by (bundle, slice set, μ, repetition).
    let mut memo: HashMap<(usize, usize, usize, usize), usize> = HashMap::new();
    let mut interference: Vec<(Vec<Sym>, Vec<usize>)> = Vec::new();
    // Desired single-slice terms awaiting their pads, per replica.
    let mut single: [Vec<(usize, usize, usize)>; 2] = [Vec::new(), Vec::new()];
    let mut body: Vec<Vec<Vec<PaddedTerm>>> = vec![Vec::new(); n_servers];
    for (n, cells) in ltab.iter().enumerate() {
        for (c, lc) in cells.iter().enumerate() {
            let set = &lift.apps[lc.app];
            let mut terms = Vec::with_capacity(lc.terms.len());
            for (v_idx, v) in lc.terms.iter().enumerate() {
                let pads = if v.bundle == k && set.contains(&tau) {
                    if set.len() == 1 {
                        let side = if n == ri {
                            0
                        } else if n == rj {
                            1
                        } else {
                            return Err(Error::NonLocalSymbol { server: n + 1, symbol: graph.target_label(target) });
                        };
                        single[side].push((n, c, v_idx));
                        Vec::new()
                    } else {
                        let rest = app_index(lift, &without(set, tau));
                        let key = (k, rest, psi(lp, v.mu), lc.rep);
                        vec![*memo.entry(key).or_insert_with(&mut fresh)]
                    }
                } else {
                    let key = (v.bundle, lc.app, v.mu, lc.rep);
                    let p = *memo.entry(key).or_insert_with(&mut fresh);
                    interference.push((v.actual.clone(), vec![p]));
                    vec![p]
                };
                terms.push((v.actual.clone(), v.coeff, pads));
            }
            body[n].push(terms);
        }
    }
    let share = single[0].len();
    if single[1].len() != share || share != (n_servers - 1) * y {
        return Err(Error::SrpViolation(format!(
            "{} desired symbols at the replicas of {} do not match {} bare pads per server",
            share,
            graph.target_label(target),
            y
        )));
    }
    let others: Vec<usize> =
        (0..n_servers).filter(|&n| n != ri && n != rj).flat_map(|n| direct[n].iter().copied()).collect();
    for (side, own, opposite) in [(0, ri, rj), (1, rj, ri)] {
        let _ = own;
        for (m, &(n, c, v)) in single[side].iter().enumerate() {
            let pad = if m < y { direct[opposite][m] } else { others[m - y] };
            body[n][c][v].2.push(pad);
        }
    }
    interference.sort();
    interference.dedup();
    // First appearance by repetition, slice set, server, cell, term.
    let mut order: Vec<(usize, usize, usize, usize)> = Vec::new();
    for (n, cells) in ltab.iter().enumerate() {
        for (c, lc) in cells.iter().enumerate() {
            order.push((lc.rep, lc.app, n, c));
        }
    }
    order.sort();
    let renumber = Renumber::new(
        order.iter().flat_map(|&(_, _, n, c)| body[n][c].iter().flat_map(|(_, _, p)| p.iter())),
        &direct,
    );
    let mut table = direct_cells(&direct, &renumber);
    for (n, cells) in body.iter().enumerate() {
        table[n].extend(cells.iter().map(|terms| padded_cell(terms, &renumber)));
    }
    let pads = renumber_assignment(CrAssignment { target, direct, interference, total: 0 }, &renumber);
    Ok(FrTarget { table, pads })
}

fn fr_build(t: &PirScheme, r: usize, field: PrimeField) -> Result<(TableScheme, Vec<CrAssignment>)> {
    t.check_convertible()?;
    let n_servers = t.graph().n_servers();
    let p = fr_params(t.msg_len(), n_servers);
    let lift = lift_virtual(t, r, p.x)?;
    let h = fr_pool_size(t.msg_len(), n_servers, t.graph().n_bundles(), r);
    let mut targets = Vec::new();
    let mut tables = Vec::new();
    let mut assignments = Vec::new();
    for target in 0..lift.graph.n_messages() {
        let built = fr_target(&lift, target, p.y)?;
        built.pads.check()?;
        if built.pads.total != h {
            return Err(Error::DimensionMismatch(format!(
                "target {} uses {} pads, expected {h}",
                lift.graph.target_label(target),
                built.pads.total
            )));
        }
        targets.push(target);
        tables.push(built.table);
        assignments.push(built.pads);
    }
    let downloads: Vec<usize> = t.downloads().iter().map(|d| p.y + d * p.x * ((1 << r) - 1)).collect();
    let name = if r == 1 { format!("fr({})", t.name()) } else { format!("fr({}, r={r})", t.name()) };
    let desc = Descriptor::new(
        name,
        lift.graph.clone(),
        field,
        RandomnessMode::FullyReplicated,
        lift.msg_len,
        vec![h],
        downloads,
    );
    let classes = ClassMap::independent(&desc);
    Ok((TableScheme::new(desc, targets, tables, classes)?, assignments))
}

/// Fully-replicated SPIR from an SRP scheme: `x` repetitions plus `y` bare
/// pads per server, with `x·L'/2 = (N-1)·y` minimal.
pub fn fr_from_pir(t: &PirScheme, field: PrimeField) -> Result<TableScheme> {
    fr_multigraph_from_pir(t, 1, field)
}

/// Fully-replicated SPIR on `G^(r)`. Virtual symbols not containing the
/// desired slice get fresh pads; those extending one reuse its pad.
pub fn fr_multigraph_from_pir(t: &PirScheme, r: usize, field: PrimeField) -> Result<TableScheme> {
    Ok(fr_build(t, r, field)?.0)
}

/// The pad assignment behind [`fr_multigraph_from_pir`], one per target.
pub fn fr_assignments(t: &PirScheme, r: usize) -> Result<Vec<CrAssignment>> {
    Ok(fr_build(t, r, PrimeField::new(2)?)?.1)
}

fn choose(n: usize, k: isize) -> usize {
    if k < 0 || k as usize > n {
        0
    } else {
        binomial(n, k as usize)
    }
}

/// `C(N-3, t-2) + (t-1)·C(N-1, t)`.
pub fn fr_star_pool_size(n: usize, t: usize) -> usize {
    choose(n - 3, t as isize - 2) + (t - 1) * choose(n - 1, t as isize)
}

fn fr_star_build(n: usize, t: usize, field: PrimeField) -> Result<(TableScheme, Vec<CrAssignment>)> {
    if n < 3 || t < 2 || t > n - 1 {
        return Err(Error::Unsupported(format!("fr_star needs N ≥ 3 and 2 ≤ t ≤ N-1, got N={n}, t={t}")));
    }
    let base = pir_star_t(n, t)?;
    let direct_count = choose(n - 3, t as isize - 2);
    let h = fr_star_pool_size(n, t);
    let centre = n - 1;
    let mut targets = Vec::new();
    let mut tables = Vec::new();
    let mut assignments = Vec::new();
    for (k, ptab) in base.tables() {
        let k = *k;
        let mut next = 0usize;
        let mut fresh = || {
            next += 1;
            next - 1
        };
        let mut leaf_pad: HashMap<Sym, usize> = HashMap::new();
        let mut interference = Vec::new();
        let mut body: Vec<Vec<Vec<PaddedTerm>>> = vec![Vec::new(); n];
        for (srv, cells) in ptab.iter().enumerate().take(centre) {
            for cell in cells {
                let sym = cell.terms[0].sym;
                let p = fresh();
                leaf_pad.insert(sym, p);
                if srv != k {
                    interference.push((vec![sym], vec![p]));
                }
                body[srv].push(vec![(vec![sym], 1, vec![p])]);
            }
        }
        for cell in &ptab[centre] {
            let has_k = cell.messages().any(|(m, _)| m == k);
            if has_k {
                let terms = cell
                    .terms
                    .iter()
                    .map(|term| match term.sym {
                        Sym::Msg { m, .. } if m == k => Ok((vec![term.sym], term.coeff, Vec::new())),
                        sym => leaf_pad
                            .get(&sym)
                            .map(|&p| (vec![sym], term.coeff, vec![p]))
                            .ok_or_else(|| Error::SrpViolation(format!("interference symbol {sym:?} has no leaf copy"))),
                    })
                    .collect::<Result<Vec<_>>>()?;
                body[centre].push(terms);
            } else {
                let syms: Vec<Sym> = cell.terms.iter().map(|t| t.sym).collect();
                let pads: Vec<usize> = (0..t - 1).map(|_| fresh()).collect();
                interference.push((syms.clone(), pads.clone()));
                body[centre].push(vec![(syms, 1, pads)]);
            }
        }
        let mut direct = vec![Vec::new(); n];
        direct[centre] = (0..direct_count).map(|i| leaf_pad[&Sym::Msg { m: k, i }]).collect();
        let renumber = Renumber::new(body.iter().flatten().flatten().flat_map(|(_, _, p)| p.iter()), &direct);
        let mut table = direct_cells(&direct, &renumber);
        for (srv, cells) in body.iter().enumerate() {
            table[srv].extend(cells.iter().map(|terms| padded_cell(terms, &renumber)));
        }
        let pads = renumber_assignment(CrAssignment { target: k, direct, interference, total: 0 }, &renumber);
        pads.check()?;
        if pads.total != h {
            return Err(Error::DimensionMismatch(format!(
                "fr_star({n},{t}) target {} uses {} pads, expected {h}",
                k + 1,
                pads.total
            )));
        }
        targets.push(k);
        tables.push(table);
        assignments.push(pads);
    }
    let mut downloads = base.downloads();
    downloads[centre] += direct_count;
    let (l, _) = star_t_sizes(n, t);
    let desc = Descriptor::new(
        format!("fr-star({n},{t})"),
        base.graph().clone(),
        field,
        RandomnessMode::FullyReplicated,
        l,
        vec![h],
        downloads,
    );
    let classes = ClassMap::independent(&desc);
    Ok((TableScheme::new(desc, targets, tables, classes)?, assignments))
}

/// Fully-replicated SPIR on the star built from the t-sum scheme. Leaf
/// symbols get distinct pads, t-sums with `W_k` reuse their interference
/// pads, and the other t-sums get `t-1` fresh pads.
pub fn fr_star(n: usize, t: usize, field: PrimeField) -> Result<TableScheme> {
    Ok(fr_star_build(n, t, field)?.0)
}

pub fn fr_star_assignments(n: usize, t: usize) -> Result<Vec<CrAssignment>> {
    Ok(fr_star_build(n, t, PrimeField::new(2)?)?.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::{format_cell, TableMode};
    use crate::pir_base::{pir_c3, pir_p3, pir_s4};
    use crate::protocol::{Rational, Scheme};

    fn f2() -> PrimeField {
        PrimeField::new(2).unwrap()
    }

    fn render(s: &TableScheme, target: usize, mode: TableMode) -> Vec<Vec<String>> {
        s.table(target)
            .unwrap()
            .iter()
            .map(|cells| cells.iter().map(|c| format_cell(c, mode)).collect())
            .collect()
    }

    #[test]
    fn gr_p3_table() {
        let s = gr_from_pir(&pir_p3(), f2()).unwrap();
        assert_eq!(s.descriptor().rate(), Rational::new(1, 3));
        assert_eq!(
            render(&s, 0, TableMode::Gr),
            vec![
                vec!["s1_1", "a1+s1_2"],
                vec!["s1_2+s2_2", "a2+b2+s1_1+s2_1"],
                vec!["s2_2", "b2+s2_1"],
            ]
        );
    }

    #[test]
    fn gr_rates() {
        assert_eq!(gr_from_pir(&pir_c3(), f2()).unwrap().descriptor().rate(), Rational::new(1, 4));
        assert_eq!(gr_from_pir(&pir_s4(), f2()).unwrap().descriptor().rate(), Rational::new(1, 4));
        for r in 1..=3 {
            let s = gr_multigraph_from_pir(&pir_p3(), r, f2()).unwrap();
            assert_eq!(s.descriptor().rate(), Rational::new(1, 3));
        }
    }

    #[test]
    fn fr_p3_table() {
        let s = fr_from_pir(&pir_p3(), f2()).unwrap();
        let d = s.descriptor();
        assert_eq!((d.msg_len, d.pool_sizes.clone()), (4, vec![5]));
        assert_eq!(d.rate(), Rational::new(4, 9));
        assert_eq!(
            render(&s, 0, TableMode::Fr),
            vec![
                vec!["s2", "a1+s1", "a3+s4"],
                vec!["s1", "a2+b2+s2+s3", "a4+b4+s4+s5"],
                vec!["s4", "b2+s3", "b4+s5"],
            ]
        );
    }

    #[test]
    fn fr_parameters() {
        assert_eq!(fr_params(2, 3), FrParams { lcm: 2, x: 2, y: 1 });
        assert_eq!(fr_params(6, 3), FrParams { lcm: 6, x: 2, y: 3 });
        assert_eq!(fr_params(2, 4), FrParams { lcm: 3, x: 3, y: 1 });
        let c3 = fr_from_pir(&pir_c3(), f2()).unwrap();
        assert_eq!(c3.descriptor().rate(), Rational::new(4, 11));
        let s4 = fr_from_pir(&pir_s4(), f2()).unwrap();
        assert_eq!(s4.descriptor().rate(), Rational::new(3, 8));
        let m = fr_multigraph_from_pir(&pir_p3(), 2, f2()).unwrap();
        assert_eq!(m.descriptor().pool_sizes, vec![13]);
        assert_eq!(m.descriptor().rate(), Rational::new(8, 21));
    }

    #[test]
    fn fr_star_table() {
        let s = fr_star(4, 2, f2()).unwrap();
        assert_eq!(s.descriptor().rate(), Rational::new(3, 7));
        assert_eq!(s.descriptor().pool_sizes, vec![4]);
        assert_eq!(
            render(&s, 0, TableMode::Fr),
            vec![
                vec!["a1+s1"],
                vec!["b1+s2"],
                vec!["c1+s3"],
                vec!["s1", "a2+b1+s2", "a3+c1+s3", "b2+c2+s4"],
            ]
        );
        for n in 3..=7 {
            for t in 2..n {
                let s = fr_star(n, t, f2()).unwrap();
                assert_eq!(s.descriptor().pool_sizes, vec![fr_star_pool_size(n, t)]);
            }
        }
        assert!(fr_star(4, 1, f2()).is_err());
    }

    #[test]
    fn assignments_are_sound() {
        for a in fr_assignments(&pir_c3(), 1).unwrap() {
            a.check().unwrap();
            assert_eq!(a.total, 21);
        }
        for a in fr_star_assignments(6, 3).unwrap() {
            a.check().unwrap();
        }
    }
}
