//! Closed-form rates, capacity bounds and randomness ratios.
//!
//! Everything is exact rational arithmetic. Where only an achievable rate and
//! an upper bound are known, both are reported and the exactness flag stays
//! off; a single capacity is claimed only when the two meet.

use std::fmt::Write as _;

use num_integer::binomial;
use num_traits::One;

use crate::converters::fr_params;
use crate::error::{Error, Result};
use crate::graphs::{Family, Graph, RandomnessMode};
use crate::protocol::{randomness_ratios, Descriptor, Rational};

fn q(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

fn int(n: usize) -> Rational {
    Rational::from_integer(n as i64)
}

/// `2^{1-r}`.
fn half_pow(r: usize) -> Rational {
    q(1, 1 << (r - 1))
}

/// `2 - 2^{1-r}`: the number of base-scheme copies a multigraph lift downloads per copy of `L'`.
fn stage_weight(r: usize) -> Rational {
    int(2) - half_pow(r)
}

fn need_n(family: Family, n: usize, min: usize) -> Result<()> {
    if n < min {
        return Err(Error::FamilyTooSmall { family: family.name(), n, min });
    }
    Ok(())
}

fn need_r(r: usize) -> Result<()> {
    if r == 0 {
        return Err(Error::InvalidMultiplicity(r));
    }
    Ok(())
}

/// Graph-replicated capacity facts for one graph.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrCapacity {
    /// Rate of the general scheme, a lower bound on the capacity.
    pub lower: Rational,
    /// The lower bound is the capacity (paths and regular graphs).
    pub exact: bool,
    /// Minimum per-edge randomness ratio.
    pub rho_star: Rational,
}

pub fn gr_capacity(graph: &Graph) -> GrCapacity {
    GrCapacity {
        lower: q(1, graph.n_servers() as i64),
        exact: graph.is_path() || graph.is_regular().is_some(),
        rho_star: Rational::one(),
    }
}

/// PIR capacity of the families where it is known.
pub fn pir_capacity(family: Family, n: usize) -> Option<Rational> {
    match family {
        Family::Path => Some(q(2, n as i64)),
        Family::Cycle => Some(q(2, n as i64 + 1)),
        _ => None,
    }
}

/// Rate and total randomness ratio of the fully-replicated conversion of an
/// SRP scheme with `L'` symbols per message, `D'` downloads, on `N` servers
/// and `K'` messages.
pub fn fr_rate_from_srp(base_len: usize, downloads: usize, n: usize, k: usize) -> Result<(Rational, Rational)> {
    fr_multigraph_rate_from_srp(base_len, downloads, n, k, 1)
}

/// The same for the multigraph converter on `G^(r)`:
/// rate `2^{r-1}L'x / ((2^r - 1)D'x + Ny)` and
/// `ρ_total = Ny/(2^{r-1}xL') - (K'+1)/2^r + K'`.
pub fn fr_multigraph_rate_from_srp(
    base_len: usize,
    downloads: usize,
    n: usize,
    k: usize,
    r: usize,
) -> Result<(Rational, Rational)> {
    need_r(r)?;
    if base_len == 0 || base_len % 2 == 1 {
        return Err(Error::OddLength(base_len));
    }
    if n < 2 {
        return Err(Error::InvalidGraph(format!("{n} servers")));
    }
    let p = fr_params(base_len, n);
    let (l, d, n, k, x, y) = (base_len as i64, downloads as i64, n as i64, k as i64, p.x as i64, p.y as i64);
    let lift = 1i64 << (r - 1);
    let rate = q(lift * l * x, ((1 << r) - 1) * d * x + n * y);
    let rho = q(n * y, lift * x * l) - q(k + 1, 1 << r) + Rational::from_integer(k);
    Ok((rate, rho))
}

/// Fully-replicated bounds for paths and cycles.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrBounds {
    pub achievable: Rational,
    pub upper: Rational,
    /// `ρ_total` of the achieving scheme.
    pub rho_total_achievable: Rational,
    /// Lower bound on the minimum `ρ_total`.
    pub rho_total_lower: Rational,
}

pub fn fr_bounds(family: Family, n: usize) -> Result<FrBounds> {
    fr_multigraph_bounds(family, n, 1)
}

/// Fully-replicated bounds on `P_N^(r)` and `C_N^(r)`.
///
/// Achievable: `2 / (M(2 - 2^{1-r}) + (N/(N-1))·2^{1-r})` with `M = N` for
/// paths and `N + 1` for cycles, at `ρ_total = 1/R - 1`. The upper bound
/// subtracts `(2 - N/(N-1))(2 - 2^{1-r})` (paths) or `(2 - 2^{1-r})` (cycles)
/// from that denominator, and the minimum `ρ_total` is at least `1/C_up - 1`.
pub fn fr_multigraph_bounds(family: Family, n: usize, r: usize) -> Result<FrBounds> {
    need_r(r)?;
    need_n(family, n, 3)?;
    let ni = n as i64;
    let w = stage_weight(r);
    let ratio = q(ni, ni - 1);
    let (m, cut) = match family {
        Family::Path => (int(n), (int(2) - ratio) * w),
        Family::Cycle => (int(n + 1), w),
        other => return Err(Error::Unsupported(format!("fully-replicated bounds for {} graphs", other.name()))),
    };
    let denom = m * w + ratio * half_pow(r);
    let achievable = int(2) / denom;
    let upper = int(2) / (denom - cut);
    Ok(FrBounds {
        achievable,
        upper,
        rho_total_achievable: achievable.recip() - Rational::one(),
        rho_total_lower: upper.recip() - Rational::one(),
    })
}

/// `(C_FR(P_3), ρ*_total(P_3))`.
pub fn fr_capacity_p3() -> (Rational, Rational) {
    (q(1, 2), Rational::one())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StarRate {
    pub t: usize,
    pub rate: Rational,
    pub rho_total: Rational,
}

fn choose(n: i64, k: i64) -> i64 {
    if k < 0 || n < 0 || k > n {
        0
    } else {
        binomial(n, k)
    }
}

/// Rate and `ρ_total` of the t-parameterised star scheme on `S_N`.
pub fn star_fr_rate_at(n: usize, t: usize) -> Result<StarRate> {
    need_n(Family::Star, n, 3)?;
    if t < 2 || t >= n {
        return Err(Error::Unsupported(format!("t = {t} outside [2, {}]", n - 1)));
    }
    let (n, t) = (n as i64, t as i64);
    let len = choose(n - 2, t - 1) + choose(n - 3, t - 2);
    let downloads = n * choose(n - 3, t - 2) + choose(n - 1, t);
    let pads = choose(n - 3, t - 2) + (t - 1) * choose(n - 1, t);
    Ok(StarRate { t: t as usize, rate: q(len, downloads), rho_total: q(pads, len) })
}

/// Best star rate over `t ∈ [2, N-1]`, smallest `t` on ties.
pub fn star_fr_rate(n: usize) -> Result<StarRate> {
    need_n(Family::Star, n, 3)?;
    let mut best = star_fr_rate_at(n, 2)?;
    for t in 3..n {
        let s = star_fr_rate_at(n, t)?;
        if s.rate > best.rate {
            best = s;
        }
    }
    let srp = q(2, 1) / (int(n) + q(n as i64, n as i64 - 1));
    assert!(best.rate > srp, "star scheme must beat the SRP conversion for N >= 3");
    Ok(best)
}

/// One row of a rate table.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RateSummary {
    pub family: Family,
    pub n: usize,
    pub r: usize,
    pub setting: RandomnessMode,
    /// Best rate achieved by a scheme implemented here.
    pub achieved: Option<Rational>,
    /// Which scheme achieves it.
    pub scheme: String,
    /// Per-edge randomness ratio (graph-replicated only).
    pub rho: Option<Rational>,
    pub rho_total: Option<Rational>,
    /// Lower bound on the minimum randomness ratio (ρ* or ρ*_total).
    pub rho_lower: Option<Rational>,
    pub lower: Option<Rational>,
    pub upper: Option<Rational>,
    /// `lower` is the capacity.
    pub exact: bool,
    /// Rate of the SRP-based fully-replicated conversion, when it differs from `achieved`.
    pub converted: Option<Rational>,
}

impl RateSummary {
    pub fn capacity(&self) -> Option<Rational> {
        if self.exact {
            self.lower
        } else {
            None
        }
    }

    /// `lower ≤ achieved ≤ upper`, and below the PIR capacity where that is known.
    pub fn consistent(&self) -> bool {
        let ordered = match (self.lower, self.achieved, self.upper) {
            (Some(l), Some(a), Some(u)) => l <= a && a <= u,
            (Some(l), Some(a), None) => l <= a,
            _ => true,
        };
        let below_pir = match (self.upper.or(self.achieved), pir_capacity(self.family, self.n)) {
            (Some(u), Some(c)) => u < c,
            _ => true,
        };
        ordered && below_pir
    }
}

fn is_exact_gr(family: Family, n: usize) -> bool {
    match family {
        Family::Path | Family::Cycle | Family::Complete => true,
        Family::Star => n == 3,
        Family::Custom => false,
    }
}

/// Summary for a family instance `G_N^(r)` in one randomness setting.
pub fn multigraph_rates(family: Family, n: usize, r: usize, setting: RandomnessMode) -> Result<RateSummary> {
    need_r(r)?;
    let min = match family {
        Family::Path | Family::Complete => 2,
        _ => 3,
    };
    need_n(family, n, min)?;
    let base = RateSummary {
        family,
        n,
        r,
        setting,
        achieved: None,
        scheme: String::new(),
        rho: None,
        rho_total: None,
        rho_lower: None,
        lower: None,
        upper: None,
        exact: false,
        converted: None,
    };
    match setting {
        RandomnessMode::GraphReplicated => {
            let rate = q(1, n as i64);
            let exact = is_exact_gr(family, n);
            let edges = match family {
                Family::Path => n - 1,
                Family::Cycle => n,
                Family::Complete => n * (n - 1) / 2,
                Family::Star => n - 1,
                Family::Custom => return Err(Error::Unsupported("rates need a named family".into())),
            };
            Ok(RateSummary {
                achieved: Some(rate),
                scheme: "general".into(),
                rho: Some(Rational::one()),
                rho_total: Some(int(edges)),
                rho_lower: Some(Rational::one()),
                lower: Some(rate),
                upper: exact.then_some(rate),
                exact,
                ..base
            })
        }
        RandomnessMode::FullyReplicated => match family {
            Family::Path | Family::Cycle => {
                let b = fr_multigraph_bounds(family, n, r)?;
                let mut s = RateSummary {
                    achieved: Some(b.achievable),
                    scheme: "fr-from-pir".into(),
                    rho_total: Some(b.rho_total_achievable),
                    rho_lower: Some(b.rho_total_lower),
                    lower: Some(b.achievable),
                    upper: Some(b.upper),
                    ..base
                };
                if family == Family::Path && n == 3 && r == 1 {
                    let (c, rho) = fr_capacity_p3();
                    s.converted = s.achieved;
                    s.achieved = Some(c);
                    s.scheme = "fr-star".into();
                    s.rho_total = Some(rho);
                    s.rho_lower = Some(rho);
                    s.lower = Some(c);
                    s.exact = true;
                }
                Ok(s)
            }
            Family::Star if r == 1 => {
                let best = star_fr_rate(n)?;
                let converted = fr_rate_from_srp(2, n, n, n - 1)?.0;
                let exact = n == 3;
                Ok(RateSummary {
                    achieved: Some(best.rate),
                    scheme: format!("fr-star t={}", best.t),
                    rho_total: Some(best.rho_total),
                    rho_lower: exact.then(Rational::one),
                    lower: Some(best.rate),
                    upper: exact.then_some(best.rate),
                    exact,
                    converted: Some(converted),
                    ..base
                })
            }
            Family::Star => {
                let (rate, rho) = fr_multigraph_rate_from_srp(2, n, n, n - 1, r)?;
                Ok(RateSummary {
                    achieved: Some(rate),
                    scheme: "fr-multigraph".into(),
                    rho_total: Some(rho),
                    lower: Some(rate),
                    ..base
                })
            }
            other => Err(Error::Unsupported(format!("fully-replicated rates for {} graphs", other.name()))),
        },
    }
}

/// Measured metrics of an executed scheme against a closed-form rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reconciliation {
    pub measured: Rational,
    pub expected: Rational,
    pub rho: Option<Rational>,
    pub rho_total: Rational,
}

impl Reconciliation {
    pub fn matches(&self) -> bool {
        self.measured == self.expected
    }
}

pub fn reconcile(desc: &Descriptor, expected: Rational) -> Reconciliation {
    let (rho, rho_total) = randomness_ratios(desc);
    Reconciliation { measured: desc.rate(), expected, rho, rho_total }
}

fn fmt_opt(v: Option<Rational>) -> String {
    v.map_or_else(|| "-".to_string(), |r| r.to_string())
}

const SUMMARY_HEADER: [&str; 12] =
    ["family", "N", "r", "setting", "scheme", "achieved", "lower", "upper", "capacity", "rho", "rho_total", "rho_lower"];

fn summary_fields(s: &RateSummary) -> Vec<String> {
    let mut scheme = s.scheme.clone();
    if let Some(c) = s.converted {
        write!(scheme, " (srp conversion {c})").expect("write to string");
    }
    vec![
        s.family.name().to_string(),
        s.n.to_string(),
        s.r.to_string(),
        s.setting.short().to_string(),
        scheme,
        fmt_opt(s.achieved),
        fmt_opt(s.lower),
        fmt_opt(s.upper),
        fmt_opt(s.capacity()),
        fmt_opt(s.rho),
        fmt_opt(s.rho_total),
        fmt_opt(s.rho_lower),
    ]
}

fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    out
}

fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i + 1 == cells.len() {
                s.push_str(c);
            } else {
                s.push_str(c);
                s.push_str(&" ".repeat(w - c.chars().count() + 2));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn summaries_tsv(rows: &[RateSummary]) -> String {
    tsv(&SUMMARY_HEADER, &rows.iter().map(summary_fields).collect::<Vec<_>>())
}

pub fn summaries_text(rows: &[RateSummary]) -> String {
    aligned(&SUMMARY_HEADER, &rows.iter().map(summary_fields).collect::<Vec<_>>())
}

/// One entry of the graph-replicated rate table: a formula in `N`, marked
/// when it is the capacity, or a bound carried as text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Entry {
    /// `num / (N + offset)`.
    Formula { num: i64, offset: i64, capacity: bool },
    /// `≥ (coeff - o(1))/N`.
    AsymptoticLower { coeff: Rational },
}

impl Entry {
    fn frac(num: i64, offset: i64, capacity: bool) -> Entry {
        Entry::Formula { num, offset, capacity }
    }

    /// Value at `N`; for asymptotic bounds, the `o(1)`-free part.
    pub fn at(&self, n: usize) -> Rational {
        match self {
            Entry::Formula { num, offset, .. } => q(*num, n as i64 + offset),
            Entry::AsymptoticLower { coeff } => coeff / int(n),
        }
    }

    pub fn is_capacity(&self) -> bool {
        matches!(self, Entry::Formula { capacity: true, .. })
    }

    pub fn render(&self) -> String {
        match self {
            Entry::Formula { num, offset, capacity } => {
                let den = match offset {
                    0 => "N".to_string(),
                    o if *o > 0 => format!("(N+{o})"),
                    o => format!("(N{o})"),
                };
                format!("{num}/{den}{}", if *capacity { " *" } else { "" })
            }
            Entry::AsymptoticLower { coeff } => format!(">= ({coeff} - o(1))/N"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table1Row {
    pub graph: &'static str,
    pub family: Family,
    pub pir: Entry,
    pub general: Entry,
    pub derived: Entry,
}

/// PIR rates and graph-replicated SPIR rates of the general and PIR-derived
/// schemes for paths, cycles, complete graphs and stars.
///
/// The PIR-derived column is half the PIR column: the graph-replicated
/// conversion doubles the downloads of an SRP scheme.
pub fn table1() -> Vec<Table1Row> {
    let half = |e: &Entry| match e {
        Entry::Formula { num, offset, .. } => Entry::frac(num / 2, *offset, false),
        Entry::AsymptoticLower { coeff } => Entry::AsymptoticLower { coeff: coeff / int(2) },
    };
    let rows = [
        ("Path P_N", Family::Path, Entry::frac(2, 0, true)),
        ("Cyclic C_N", Family::Cycle, Entry::frac(2, 1, true)),
        ("Complete K_N", Family::Complete, Entry::AsymptoticLower { coeff: q(4, 3) }),
        ("Star S_N", Family::Star, Entry::frac(2, 0, false)),
    ];
    rows.into_iter()
        .map(|(graph, family, pir)| {
            let mut derived = half(&pir);
            // The derived rate meets the general scheme's 1/N, which is the capacity on paths.
            if family == Family::Path {
                derived = Entry::frac(1, 0, true);
            }
            Table1Row { graph, family, general: Entry::frac(1, 0, family != Family::Star), pir, derived }
        })
        .collect()
}

const TABLE1_HEADER: [&str; 4] = ["Graph", "PIR scheme", "General SPIR scheme", "PIR-derived SPIR scheme"];

fn table1_fields(r: &Table1Row) -> Vec<String> {
    vec![r.graph.to_string(), r.pir.render(), r.general.render(), r.derived.render()]
}

/// Rows marked `*` are capacities.
pub fn table1_text() -> String {
    let rows: Vec<Vec<String>> = table1().iter().map(table1_fields).collect();
    aligned(&TABLE1_HEADER, &rows) + "(* = capacity)\n"
}

pub fn table1_tsv() -> String {
    tsv(&TABLE1_HEADER, &table1().iter().map(table1_fields).collect::<Vec<_>>())
}

/// The graph-replicated column entries evaluated at `N`, checked against
/// the closed forms they summarise.
pub fn table1_at(n: usize) -> Result<Vec<(Family, Rational, Rational, Rational)>> {
    need_n(Family::Cycle, n, 3)?;
    Ok(table1().iter().map(|r| (r.family, r.pir.at(n), r.general.at(n), r.derived.at(n))).collect())
}

/// `1/R_FR - 1/C_PIR`, which equals `N/(2(N-1))` for paths and cycles.
pub fn conversion_overhead(family: Family, n: usize) -> Result<Rational> {
    let b = fr_bounds(family, n)?;
    let c = pir_capacity(family, n).ok_or_else(|| Error::Unsupported(family.name().into()))?;
    Ok(b.achievable.recip() - c.recip())
}
