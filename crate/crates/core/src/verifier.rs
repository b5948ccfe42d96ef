//! Exact checks of reliability, user privacy and database privacy.
//!
//! Every check either runs exactly or refuses; nothing is sampled.
//!
//! - Reliability: exhaustive decoding over coins and all databases, or the
//!   symbolic identity `decoder · answer forms = projection onto W_k`.
//! - User privacy: per server, the multiset of queries over all coins must
//!   not depend on the target. Answers are a function of the query and the
//!   server's storage, and coins are independent of storage, so equal query
//!   distributions give equal joint distributions of query, answer and
//!   storage; [`check_user_privacy_joint`] compares those directly. For
//!   permutation coins the query distribution is uniform on the orbit of the
//!   template, so it suffices to decide whether the templates of two targets
//!   lie in one orbit.
//! - Database privacy: the exhaustive engine computes the mutual information
//!   between the hidden messages and the user's view from exact counts. The
//!   linear engine tests, per coin, whether the hidden columns lie in the
//!   span of the nuisance columns.
//!
//! Permutation-coin schemes are invariant under relabelling within classes,
//! so when their coin domain is too large to enumerate, the symbolic and
//! linear checks run on the identity coin as the representative of the
//! single orbit.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::error::{Error, Result};
use crate::graphs::RandomnessMode;
use crate::iso::{isomorphic, Structure};
use crate::linalg::{left_mul, rank, Echelon};
use crate::par::Exec;
use crate::protocol::{
    collect_answers, enumerate_coins, split_assignment, Cell, Coins, Descriptor, MessageDatabase,
    Query, RandomnessPool, Rational, Scheme, ServerStore, Sym,
};

/// Limits on exhaustive work.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Budget {
    /// Joint states (coins × assignments) an exhaustive engine may visit.
    pub states: u128,
    /// Coin values the symbolic and linear engines may enumerate.
    pub coins: u128,
}

impl Default for Budget {
    fn default() -> Budget {
        Budget { states: 1 << 24, coins: 1 << 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Check {
    Reliability,
    UserPrivacy,
    DbPrivacy,
}

impl Check {
    pub fn name(self) -> &'static str {
        match self {
            Check::Reliability => "reliability",
            Check::UserPrivacy => "user_privacy",
            Check::DbPrivacy => "db_privacy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Engine {
    /// Every coin and every database and randomness assignment.
    Exhaustive,
    /// Linear-map identities per coin.
    Symbolic,
    /// Query multisets over every coin.
    Enumeration,
    /// Template equivalence under the coin group.
    Orbit,
    /// Joint distribution of query, answer and storage over every coin and assignment.
    Joint,
    /// Span test per coin.
    Linear,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Exhaustive => "exhaustive",
            Engine::Symbolic => "symbolic",
            Engine::Enumeration => "enumeration",
            Engine::Orbit => "orbit",
            Engine::Joint => "joint",
            Engine::Linear => "linear",
        }
    }
}

/// Mutual information in q-ary units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Mi {
    Exact(Rational),
    /// Some likelihood ratio is not a power of q; the value is approximate.
    Approx(f64),
}

impl Mi {
    pub fn is_zero(&self) -> bool {
        match self {
            Mi::Exact(r) => *r == Rational::from_integer(0),
            Mi::Approx(x) => *x == 0.0,
        }
    }
}

impl std::fmt::Display for Mi {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mi::Exact(r) => write!(f, "{r}"),
            Mi::Approx(x) => write!(f, "~{x:.6}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub check: Check,
    pub engine: Engine,
    pub target: Option<usize>,
    /// Hidden message set `J` for database privacy.
    pub hidden: Vec<usize>,
    pub pass: bool,
    pub mi: Option<Mi>,
    /// Coins examined, or the note that one orbit representative was used.
    pub coverage: String,
    pub witness: Option<String>,
}

impl CheckResult {
    fn new(check: Check, engine: Engine, pass: bool, coverage: String, witness: Option<String>) -> CheckResult {
        CheckResult { check, engine, target: None, hidden: Vec::new(), pass, mi: None, coverage, witness }
    }

    /// One `key=value` line.
    pub fn line(&self, desc: &Descriptor) -> String {
        let mut s = format!("check={} engine={}", self.check.name(), self.engine.name());
        if let Some(t) = self.target {
            let _ = write!(s, " target={}", desc.graph.target_label(t).trim_start_matches("W_"));
        }
        if !self.hidden.is_empty() {
            let j: Vec<String> =
                self.hidden.iter().map(|&m| desc.graph.target_label(m).trim_start_matches("W_").to_string()).collect();
            let _ = write!(s, " J={{{}}}", j.join(","));
        }
        if let Some(mi) = &self.mi {
            let _ = write!(s, " mi={mi}");
        }
        let _ = write!(s, " coins={}", self.coverage);
        let _ = write!(s, " verdict={}", if self.pass { "pass" } else { "fail" });
        if let Some(w) = &self.witness {
            let _ = write!(s, " witness=\"{w}\"");
        }
        s
    }
}

/// Engines to use for database privacy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DbEngines {
    /// Linear always, exhaustive where the budget allows.
    #[default]
    Auto,
    Linear,
    /// Exhaustive only; exceeding the budget is an error.
    Exhaustive,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct VerifyOptions {
    pub budget: Budget,
    pub exec: Exec,
    pub db_engines: DbEngines,
}

#[derive(Clone, Debug)]
pub struct VerificationReport {
    pub scheme: String,
    pub graph: String,
    pub q: u32,
    pub setting: RandomnessMode,
    pub results: Vec<CheckResult>,
    /// Whether only singleton and full hidden sets were checked.
    pub partial_coverage: bool,
    /// `(instances where both engines ran, instances where they agreed)`.
    pub agreement: (usize, usize),
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass) && self.agreement.0 == self.agreement.1
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.results.iter().filter(|r| !r.pass)
    }

    pub fn to_text(&self, desc: &Descriptor) -> String {
        let mut out = format!(
            "scheme={} graph={} q={} setting={}\n",
            self.scheme.replace(' ', "_"),
            self.graph,
            self.q,
            self.setting.short()
        );
        for r in &self.results {
            out.push_str(&r.line(desc));
            out.push('\n');
        }
        if self.agreement.0 > 0 {
            let _ = writeln!(
                out,
                "check=engine_agreement instances={} agreed={} verdict={}",
                self.agreement.0,
                self.agreement.1,
                if self.agreement.0 == self.agreement.1 { "pass" } else { "fail" }
            );
        }
        let _ = writeln!(
            out,
            "summary checks={} failed={} coverage={} verdict={}",
            self.results.len(),
            self.failures().count(),
            if self.partial_coverage { "partial" } else { "full" },
            if self.passed() { "pass" } else { "fail" }
        );
        out
    }
}

fn pow(q: u32, n: usize) -> Option<u128> {
    (0..n).try_fold(1u128, |acc, _| acc.checked_mul(q as u128))
}

/// The assignment with rank `idx` in base-q order over `n` unknowns.
fn assignment(q: u32, n: usize, mut idx: u128) -> Vec<u32> {
    let mut x = vec![0u32; n];
    for v in x.iter_mut().rev() {
        *v = (idx % q as u128) as u32;
        idx /= q as u128;
    }
    x
}

/// Walks every assignment in the base-q order of [`assignment`], keeping the
/// database and randomness pool in step without reallocating them.
struct Walker {
    q: u32,
    x: Vec<u32>,
    /// Per unknown: `(true, message, index)` or `(false, pool, index)`.
    slots: Vec<(bool, usize, usize)>,
    db: MessageDatabase,
    pool: RandomnessPool,
}

impl Walker {
    fn new(desc: &Descriptor) -> Walker {
        let slots = (0..desc.n_vars())
            .map(|v| match desc.sym_of(v) {
                Sym::Msg { m, i } => (true, m, i),
                Sym::Rand { pool, i } => (false, pool, i),
            })
            .collect();
        Walker {
            q: desc.field.order(),
            x: vec![0; desc.n_vars()],
            slots,
            db: MessageDatabase::zero(desc),
            pool: RandomnessPool::zero(desc),
        }
    }

    fn advance(&mut self) {
        for v in (0..self.x.len()).rev() {
            self.x[v] += 1;
            if self.x[v] == self.q {
                self.x[v] = 0;
            }
            let (is_msg, a, i) = self.slots[v];
            let slot = if is_msg { &mut self.db.messages[a][i] } else { &mut self.pool.pools[a][i] };
            *slot = self.x[v];
            if self.x[v] != 0 {
                break;
            }
        }
    }
}

fn is_symmetric(scheme: &dyn Scheme) -> bool {
    scheme.label_class(&Sym::Msg { m: 0, i: 0 }).is_some()
}

fn states_needed(scheme: &dyn Scheme) -> Option<u128> {
    let desc = scheme.descriptor();
    scheme.coin_domain().size()?.checked_mul(pow(desc.field.order(), desc.n_vars())?)
}

fn budget_error(states: Option<u128>, budget: u128) -> Error {
    Error::BudgetExceeded {
        states: states.map_or_else(|| "more than 2^128".to_string(), |s| s.to_string()),
        budget,
    }
}

/// Coins for the per-coin linear engines: all of them, or the identity
/// representative for relabelling-invariant schemes.
fn linear_coins(scheme: &dyn Scheme, budget: &Budget) -> Result<(Vec<Coins>, String)> {
    let domain = scheme.coin_domain();
    match domain.size() {
        Some(n) if n <= budget.coins => Ok((enumerate_coins(&domain)?.collect(), n.to_string())),
        _ if is_symmetric(scheme) => Ok((vec![domain.identity()], "orbit-representative".into())),
        size => Err(Error::NotEnumerable(format!(
            "{} has {} coin values, above the budget of {}",
            domain.describe(),
            size.map_or_else(|| "more than 2^128".to_string(), |s| s.to_string()),
            budget.coins
        ))),
    }
}

pub fn describe_coins(coins: &Coins) -> String {
    match coins {
        Coins::Vector(h) => {
            let v: Vec<String> = h.iter().map(u32::to_string).collect();
            format!("h=({})", v.join(","))
        }
        Coins::Perms(ps) => {
            let v: Vec<String> = ps
                .iter()
                .map(|p| p.iter().map(|x| (x + 1).to_string()).collect::<Vec<_>>().join(""))
                .collect();
            format!("perms={}", v.join("/"))
        }
    }
}

pub fn describe_query(desc: &Descriptor, q: &Query) -> String {
    let list = |v: &[u32]| v.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    match q {
        Query::Coefficients(v) => format!("[{}]", list(v)),
        Query::Unblinded { blinded, indicator } => format!("[{}] indicator [{}]", list(blinded), list(indicator)),
        Query::Cells(cells) => {
            let parts: Vec<String> = cells.iter().map(|c| render_cell(desc, c)).collect();
            parts.join(", ")
        }
    }
}

fn render_cell(desc: &Descriptor, c: &Cell) -> String {
    let mut form = vec![0u32; desc.n_vars()];
    let f = desc.field;
    for t in &c.terms {
        let v = desc.var(t.sym);
        form[v] = f.add(form[v], f.reduce(t.coeff));
    }
    desc.render_form(&form)
}

/// Lowest-index witness wins, so results do not depend on scheduling.
fn first_witness(a: Option<(u128, String)>, b: Option<(u128, String)>) -> Option<(u128, String)> {
    match (a, b) {
        (Some(x), Some(y)) => Some(if x.0 <= y.0 { x } else { y }),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Decodes every target for every coin and every database and randomness
/// assignment.
pub fn check_reliability_exhaustive(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    let desc = scheme.descriptor();
    let domain = scheme.coin_domain();
    let targets = scheme.targets();
    let n_assign = pow(desc.field.order(), desc.n_vars());
    let total = states_needed(scheme).and_then(|s| s.checked_mul(targets.len() as u128));
    match total {
        Some(t) if t <= budget.states => {}
        other => return Err(budget_error(other, budget.states)),
    }
    let n_assign = n_assign.expect("bounded above");
    let n_coins = domain.size().expect("bounded above");
    let pairs = n_coins * targets.len() as u128;
    let witness = exec.map_reduce(
        pairs,
        |idx| {
            let coins = domain.coin(idx / targets.len() as u128);
            let target = targets[(idx % targets.len() as u128) as usize];
            let fail = |msg: String| Some((idx, format!("{} target={}: {msg}", describe_coins(&coins), target + 1)));
            let queries = match scheme.make_queries(&coins, target) {
                Ok(q) => q,
                Err(e) => return fail(e.to_string()),
            };
            let mut w = Walker::new(desc);
            for a in 0..n_assign {
                if a > 0 {
                    w.advance();
                }
                let (db, pool, x) = (&w.db, &w.pool, &w.x);
                let decoded =
                    collect_answers(scheme, &queries, db, pool).and_then(|ans| scheme.decode(&ans, &coins, target));
                match decoded {
                    Ok(d) if d == db.messages[target] => {}
                    Ok(d) => return fail(format!("x={x:?} decodes to {d:?}, expected {:?}", db.messages[target])),
                    Err(e) => return fail(format!("x={x:?}: {e}")),
                }
            }
            None
        },
        || None,
        first_witness,
    );
    Ok(CheckResult::new(
        Check::Reliability,
        Engine::Exhaustive,
        witness.is_none(),
        domain.size().map_or_else(String::new, |s| s.to_string()),
        witness.map(|w| w.1),
    ))
}

fn answer_forms(scheme: &dyn Scheme, queries: &[Query]) -> Result<Vec<Vec<u32>>> {
    let mut out = Vec::new();
    for (n, q) in queries.iter().enumerate() {
        out.extend(scheme.answer_forms(n, q)?);
    }
    Ok(out)
}

/// The user's received answers for one coin as linear maps of the messages
/// and the randomness.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViewMatrices {
    /// Rows per downloaded symbol, columns per message symbol.
    pub msg: Vec<Vec<u32>>,
    /// Rows per downloaded symbol, columns per randomness symbol.
    pub rand: Vec<Vec<u32>>,
}

pub fn view_matrices(scheme: &dyn Scheme, coins: &Coins, target: usize) -> Result<ViewMatrices> {
    let desc = scheme.descriptor();
    let queries = scheme.make_queries(coins, target)?;
    let forms = answer_forms(scheme, &queries)?;
    let split = desc.n_msg_vars();
    Ok(ViewMatrices {
        msg: forms.iter().map(|r| r[..split].to_vec()).collect(),
        rand: forms.iter().map(|r| r[split..].to_vec()).collect(),
    })
}

/// Checks `decoder · forms = projection onto W_k` per coin and target.
pub fn check_reliability_symbolic(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    let desc = scheme.descriptor();
    let f = desc.field;
    let (coins, coverage) = linear_coins(scheme, budget)?;
    let targets = scheme.targets();
    let jobs: Vec<(usize, usize)> =
        (0..coins.len()).flat_map(|c| targets.iter().map(move |&t| (c, t))).collect();
    let results = exec.map(&jobs, |&(c, t)| -> Result<Option<String>> {
        let queries = scheme.make_queries(&coins[c], t)?;
        let forms = answer_forms(scheme, &queries)?;
        let dec = scheme.decoder(&coins[c], t)?;
        if dec.len() != desc.msg_len {
            return Ok(Some(format!("decoder has {} rows for L = {}", dec.len(), desc.msg_len)));
        }
        for (i, row) in dec.iter().enumerate() {
            if row.len() != forms.len() {
                return Ok(Some(format!("decoder row {} has {} entries for {} answers", i + 1, row.len(), forms.len())));
            }
            let got = left_mul(&f, row, &forms, desc.n_vars());
            let mut want = vec![0u32; desc.n_vars()];
            want[desc.var(Sym::Msg { m: t, i })] = 1;
            if got != want {
                return Ok(Some(format!(
                    "{} target={}: symbol {} decodes to {}",
                    describe_coins(&coins[c]),
                    t + 1,
                    i + 1,
                    desc.render_form(&got)
                )));
            }
        }
        Ok(None)
    });
    let mut witness = None;
    for r in results {
        if let Some(w) = r? {
            witness.get_or_insert(w);
        }
    }
    Ok(CheckResult::new(Check::Reliability, Engine::Symbolic, witness.is_none(), coverage, witness))
}

/// Exhaustive when the budget allows, symbolic otherwise.
pub fn check_reliability(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    match check_reliability_exhaustive(scheme, budget, exec) {
        Err(Error::BudgetExceeded { .. }) => check_reliability_symbolic(scheme, budget, exec),
        other => other,
    }
}

type Histogram = BTreeMap<Vec<u64>, u128>;

/// Per-server query multisets over every coin, compared across targets.
pub fn check_user_privacy_enumeration(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    let desc = scheme.descriptor();
    let domain = scheme.coin_domain();
    let targets = scheme.targets();
    let size = domain.size();
    let n = match size.and_then(|s| s.checked_mul(targets.len() as u128)) {
        Some(t) if t <= budget.states => size.expect("bounded"),
        other => return Err(budget_error(other, budget.states)),
    };
    let servers = desc.n_servers();
    let hist_for = |t: usize| -> Result<Vec<Histogram>> {
        exec.map_reduce(
            n,
            |i| -> Result<Vec<Histogram>> {
                let qs = scheme.make_queries(&domain.coin(i), t)?;
                Ok(qs.iter().map(|q| Histogram::from([(q.key(), 1)])).collect())
            },
            || Ok(vec![Histogram::new(); servers]),
            |a, b| {
                let (mut a, b) = (a?, b?);
                for (ha, hb) in a.iter_mut().zip(b) {
                    for (k, c) in hb {
                        *ha.entry(k).or_insert(0) += c;
                    }
                }
                Ok(a)
            },
        )
    };
    let reference = hist_for(targets[0])?;
    let mut witness = None;
    for &t in &targets[1..] {
        let h = hist_for(t)?;
        if let Some(s) = (0..servers).find(|&s| h[s] != reference[s]) {
            witness = Some(distinguishing_query(scheme, &domain, n, s, targets[0], t, &reference[s], &h[s])?);
            break;
        }
    }
    Ok(CheckResult::new(Check::UserPrivacy, Engine::Enumeration, witness.is_none(), n.to_string(), witness))
}

#[allow(clippy::too_many_arguments)]
fn distinguishing_query(
    scheme: &dyn Scheme,
    domain: &crate::protocol::CoinDomain,
    n: u128,
    server: usize,
    t0: usize,
    t1: usize,
    h0: &Histogram,
    h1: &Histogram,
) -> Result<String> {
    let key = h0
        .iter()
        .find(|(k, c)| h1.get(*k) != Some(*c))
        .map(|(k, _)| k.clone())
        .or_else(|| h1.keys().find(|k| !h0.contains_key(*k)).cloned())
        .expect("histograms differ");
    let c0 = h0.get(&key).copied().unwrap_or(0);
    let c1 = h1.get(&key).copied().unwrap_or(0);
    let desc = scheme.descriptor();
    let mut shown = None;
    for i in 0..n {
        for t in [t0, t1] {
            let q = &scheme.make_queries(&domain.coin(i), t)?[server];
            if q.key() == key {
                shown = Some(describe_query(desc, q));
                break;
            }
        }
        if shown.is_some() {
            break;
        }
    }
    Ok(format!(
        "server {} receives {} with count {c0} for target {} and {c1} for target {}",
        server + 1,
        shown.unwrap_or_default(),
        t0 + 1,
        t1 + 1
    ))
}

fn query_cells(q: &Query) -> Option<&[Cell]> {
    match q {
        Query::Cells(c) => Some(c),
        _ => None,
    }
}

/// Template equivalence per server under the scheme's relabelling classes.
pub fn check_user_privacy_orbit(scheme: &dyn Scheme) -> Result<CheckResult> {
    if !is_symmetric(scheme) {
        return Err(Error::Unsupported("the orbit engine needs permutation coins".into()));
    }
    let desc = scheme.descriptor();
    let identity = scheme.coin_domain().identity();
    let targets = scheme.targets();
    let class_of = |s: &Sym| scheme.label_class(s).expect("symmetric scheme") as u64;
    let templates: Vec<Vec<Query>> =
        targets.iter().map(|&t| scheme.make_queries(&identity, t)).collect::<Result<_>>()?;
    let mut witness = None;
    'outer: for (ti, qs) in templates.iter().enumerate().skip(1) {
        for s in 0..desc.n_servers() {
            let (Some(a), Some(b)) = (query_cells(&templates[0][s]), query_cells(&qs[s])) else {
                return Err(Error::Unsupported("the orbit engine needs cell queries".into()));
            };
            let sa = Structure::new(a.iter().map(|c| (0, c)), class_of);
            let sb = Structure::new(b.iter().map(|c| (0, c)), class_of);
            if !isomorphic(&sa, &sb)? {
                witness = Some(format!(
                    "server {} query for target {} ({}) is not a relabelling of the query for target {} ({})",
                    s + 1,
                    targets[ti] + 1,
                    describe_query(desc, &qs[s]),
                    targets[0] + 1,
                    describe_query(desc, &templates[0][s])
                ));
                break 'outer;
            }
        }
    }
    Ok(CheckResult::new(Check::UserPrivacy, Engine::Orbit, witness.is_none(), "orbit".into(), witness))
}

/// Enumeration when the budget allows, orbit equivalence otherwise.
pub fn check_user_privacy(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    match check_user_privacy_enumeration(scheme, budget, exec) {
        Err(Error::BudgetExceeded { .. }) if is_symmetric(scheme) => check_user_privacy_orbit(scheme),
        other => other,
    }
}

/// Compares, per server, the joint distribution of query, answer and stored
/// symbols across targets.
pub fn check_user_privacy_joint(scheme: &dyn Scheme, budget: &Budget, exec: Exec) -> Result<CheckResult> {
    let desc = scheme.descriptor();
    let domain = scheme.coin_domain();
    let targets = scheme.targets();
    let states = states_needed(scheme);
    let total = match states.and_then(|s| s.checked_mul(targets.len() as u128)) {
        Some(t) if t <= budget.states => states.expect("bounded"),
        other => return Err(budget_error(other, budget.states)),
    };
    let n_assign = pow(desc.field.order(), desc.n_vars()).expect("bounded");
    let servers = desc.n_servers();
    let q = desc.field.order();
    let hist_for = |t: usize| -> Result<Vec<Histogram>> {
        exec.map_reduce(
            total,
            |i| -> Result<Vec<Histogram>> {
                let coins = domain.coin(i / n_assign);
                let x = assignment(q, desc.n_vars(), i % n_assign);
                let (db, pool) = split_assignment(desc, &x);
                let qs = scheme.make_queries(&coins, t)?;
                let answers = collect_answers(scheme, &qs, &db, &pool)?;
                Ok((0..servers)
                    .map(|s| {
                        let store = ServerStore::new(desc, s, &db, &pool);
                        let mut key = qs[s].key();
                        key.push(u64::MAX);
                        key.extend(answers[s].iter().map(|&v| v as u64));
                        key.push(u64::MAX);
                        for v in 0..desc.n_vars() {
                            if let Some(val) = store.symbol(desc.sym_of(v)) {
                                key.push(val as u64);
                            }
                        }
                        Histogram::from([(key, 1)])
                    })
                    .collect())
            },
            || Ok(vec![Histogram::new(); servers]),
            |a, b| {
                let (mut a, b) = (a?, b?);
                for (ha, hb) in a.iter_mut().zip(b) {
                    for (k, c) in hb {
                        *ha.entry(k).or_insert(0) += c;
                    }
                }
                Ok(a)
            },
        )
    };
    let reference = hist_for(targets[0])?;
    let mut witness = None;
    for &t in &targets[1..] {
        let h = hist_for(t)?;
        if let Some(s) = (0..servers).find(|&s| h[s] != reference[s]) {
            witness = Some(format!(
                "server {} sees different joint distributions for targets {} and {}",
                s + 1,
                targets[0] + 1,
                t + 1
            ));
            break;
        }
    }
    Ok(CheckResult::new(Check::UserPrivacy, Engine::Joint, witness.is_none(), total.to_string(), witness))
}

/// Roles of the unknowns in a database-privacy check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    /// Symbols of the hidden messages `W_J`.
    pub hidden: Vec<usize>,
    /// Unknown to the user and not hidden: the desired message, co-bundled
    /// messages and the unknown randomness.
    pub nuisance: Vec<usize>,
    /// Known to the user as side information.
    pub side: Vec<usize>,
}

/// Splits the unknowns for target `k` and hidden set `J`.
///
/// Graph-replicated: the user may know every other message and the
/// randomness of every bundle outside `J`. On a multigraph the desired
/// bundle's other messages and its randomness stay unknown, so that they
/// can themselves be hidden. Fully-replicated: nothing but the coins is
/// side information.
pub fn partition(desc: &Descriptor, target: usize, hidden: &[usize]) -> Partition {
    let g = &desc.graph;
    let multi = g.r() >= 2;
    let (kb, _) = g.bundle_of(target);
    let mut p = Partition { hidden: Vec::new(), nuisance: Vec::new(), side: Vec::new() };
    for m in 0..desc.n_messages() {
        let bucket = if hidden.contains(&m) {
            &mut p.hidden
        } else if m == target
            || desc.mode == RandomnessMode::FullyReplicated
            || (multi && g.bundle_of(m).0 == kb)
        {
            &mut p.nuisance
        } else {
            &mut p.side
        };
        bucket.extend((0..desc.msg_len).map(|i| desc.var(Sym::Msg { m, i })));
    }
    for (pool, &size) in desc.pool_sizes.iter().enumerate() {
        let unknown = desc.mode == RandomnessMode::FullyReplicated
            || hidden.iter().any(|&m| g.bundle_of(m).0 == pool)
            || (multi && pool == kb);
        let bucket = if unknown { &mut p.nuisance } else { &mut p.side };
        bucket.extend((0..size).map(|i| desc.var(Sym::Rand { pool, i })));
    }
    p
}

/// Hidden sets for target `k`: every nonempty subset of the other messages
/// when there are at most six, otherwise singletons and the full set.
pub fn hidden_sets(n_messages: usize, target: usize) -> (Vec<Vec<usize>>, bool) {
    let others: Vec<usize> = (0..n_messages).filter(|&m| m != target).collect();
    if others.len() <= 6 {
        let sets = (1u32..1 << others.len())
            .map(|mask| others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &m)| m).collect())
            .collect::<Vec<Vec<usize>>>();
        let mut sets = sets;
        sets.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
        (sets, false)
    } else {
        let mut sets: Vec<Vec<usize>> = others.iter().map(|&m| vec![m]).collect();
        sets.push(others);
        (sets, true)
    }
}

fn columns(m: &[Vec<u32>], cols: &[usize]) -> Vec<Vec<u32>> {
    m.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect()
}

/// Per coin: `col(M_J) ⊆ col([M_U | M_R])`. On failure the witness is the
/// combination of answers that depends on `W_J` alone.
pub fn check_db_privacy_linear(
    scheme: &dyn Scheme,
    target: usize,
    hidden: &[usize],
    budget: &Budget,
    exec: Exec,
) -> Result<CheckResult> {
    let desc = scheme.descriptor();
    let f = desc.field;
    let part = partition(desc, target, hidden);
    let (coins, coverage) = linear_coins(scheme, budget)?;
    let results = exec.map(&coins, |c| -> Result<Option<String>> {
        let queries = scheme.make_queries(c, target)?;
        let forms = answer_forms(scheme, &queries)?;
        let mn = columns(&forms, &part.nuisance);
        let mj = columns(&forms, &part.hidden);
        let ech = Echelon::new(&f, &mn, part.nuisance.len());
        let mut both = mj.clone();
        for (row, extra) in both.iter_mut().zip(&mn) {
            row.extend(extra);
        }
        if rank(&f, &both, part.hidden.len() + part.nuisance.len()) == ech.rank() {
            return Ok(None);
        }
        let leak = ech
            .left_null
            .iter()
            .map(|y| left_mul(&f, y, &mj, part.hidden.len()))
            .find(|v| v.iter().any(|&x| x != 0))
            .expect("rank gap implies a leaking combination");
        let mut form = vec![0u32; desc.n_vars()];
        for (&col, &v) in part.hidden.iter().zip(&leak) {
            form[col] = v;
        }
        Ok(Some(format!("{}: the user learns {}", describe_coins(c), desc.render_form(&form))))
    });
    let mut witness = None;
    for r in results {
        if let Some(w) = r? {
            witness.get_or_insert(w);
        }
    }
    let mut res = CheckResult::new(Check::DbPrivacy, Engine::Linear, witness.is_none(), coverage, witness);
    res.target = Some(target);
    res.hidden = hidden.to_vec();
    Ok(res)
}

/// Per-coin contribution to the mutual information.
struct CoinMi {
    /// `None` once some likelihood ratio is not a power of q.
    exact: Option<Ratio<i128>>,
    approx: f64,
    independent: bool,
    witness: Option<String>,
}

/// The exponent `e` with `num/den = q^e`, if there is one.
fn log_q_exact(q: u32, num: u128, den: u128) -> Option<i64> {
    let (mut a, mut b) = (num, den);
    let mut e = 0i64;
    let q = q as u128;
    while a > b && a % (b * q) == 0 {
        a /= q;
        e += 1;
    }
    while b > a && b % (a * q) == 0 {
        b /= q;
        e -= 1;
    }
    (a == b).then_some(e)
}

/// Packs the digits of `x` at `cols` into one base-q number.
fn pack(q: u32, x: &[u32], cols: &[usize]) -> u128 {
    cols.iter().fold(0u128, |acc, &c| acc * q as u128 + x[c] as u128)
}

/// Side-information and hidden-value keys of every assignment for one partition.
struct Keys {
    part: Partition,
    side: Vec<u64>,
    hidden: Vec<u64>,
    n_side: u64,
    n_hidden: u64,
}

impl Keys {
    fn new(desc: &Descriptor, part: Partition, n_assign: u128) -> Keys {
        let q = desc.field.order();
        let n_vars = desc.n_vars();
        let (mut side, mut hidden) = (Vec::new(), Vec::new());
        for a in 0..n_assign {
            let x = assignment(q, n_vars, a);
            side.push(pack(q, &x, &part.side) as u64);
            hidden.push(pack(q, &x, &part.hidden) as u64);
        }
        let n_side = pow(q, part.side.len()).expect("bounded") as u64;
        let n_hidden = pow(q, part.hidden.len()).expect("bounded") as u64;
        Keys { part, side, hidden, n_side, n_hidden }
    }
}

/// Run lengths of a sorted key list, as `(key, count)`.
fn runs(mut keys: Vec<u128>) -> Vec<(u128, u128)> {
    keys.sort_unstable();
    let mut out: Vec<(u128, u128)> = Vec::new();
    for k in keys {
        match out.last_mut() {
            Some((last, c)) if *last == k => *c += 1,
            _ => out.push((k, 1)),
        }
    }
    out
}

fn coin_mi(
    desc: &Descriptor,
    coins: &Coins,
    keys: &Keys,
    views: &[u32],
    n_views: u32,
    view_text: &dyn Fn(u32) -> String,
) -> CoinMi {
    let q = desc.field.order();
    let n_assign = views.len() as u128;
    let nv = n_views as u128;
    let mut side = vec![0u128; keys.n_side as usize];
    let mut side_hidden = vec![0u128; (keys.n_side * keys.n_hidden) as usize];
    for a in 0..views.len() {
        side[keys.side[a] as usize] += 1;
        side_hidden[(keys.side[a] * keys.n_hidden + keys.hidden[a]) as usize] += 1;
    }
    let side_view: HashMap<u128, u128> = runs(
        (0..views.len()).map(|a| keys.side[a] as u128 * nv + views[a] as u128).collect(),
    )
    .into_iter()
    .collect();
    let joint = runs(
        (0..views.len())
            .map(|a| (keys.side[a] as u128 * keys.n_hidden as u128 + keys.hidden[a] as u128) * nv + views[a] as u128)
            .collect(),
    );
    let mut exact = Some(Ratio::<i128>::from_integer(0));
    let mut approx = 0.0f64;
    let mut independent = true;
    let mut witness = None;
    for (key, n) in joint {
        let v = (key % nv) as u32;
        let sw = key / nv;
        let (s, w) = (sw / keys.n_hidden as u128, sw % keys.n_hidden as u128);
        let n_s = side[s as usize];
        let n_sw = side_hidden[sw as usize];
        let n_sv = side_view[&(s * nv + v as u128)];
        let num = n * n_s;
        let den = n_sw * n_sv;
        if num != den {
            independent = false;
            if witness.is_none() {
                let digits = assignment(q, keys.part.hidden.len(), w);
                let hidden_vals: Vec<String> = keys
                    .part
                    .hidden
                    .iter()
                    .zip(digits)
                    .map(|(&c, val)| format!("{}={val}", desc.sym_name(desc.sym_of(c))))
                    .collect();
                witness = Some(format!(
                    "{}: answers ({}) have probability {n}/{n_sw} given {} but {n_sv}/{n_s} overall",
                    describe_coins(coins),
                    view_text(v),
                    hidden_vals.join(","),
                ));
            }
        }
        approx += n as f64 / n_assign as f64 * ((num as f64) / (den as f64)).log(q as f64);
        exact = match (exact, log_q_exact(q, num, den)) {
            (Some(acc), Some(e)) => Some(acc + Ratio::new(n as i128 * e as i128, n_assign as i128)),
            _ => None,
        };
    }
    CoinMi { exact, approx, independent, witness }
}

/// Exhaustive database privacy for several hidden sets of one target. The
/// answers for every coin and assignment are computed once and shared.
pub fn check_db_privacy_exhaustive_sets(
    scheme: &dyn Scheme,
    target: usize,
    sets: &[Vec<usize>],
    budget: &Budget,
    exec: Exec,
) -> Result<Vec<CheckResult>> {
    let desc = scheme.descriptor();
    let domain = scheme.coin_domain();
    let states = states_needed(scheme);
    let n_coins = match states {
        Some(s) if s <= budget.states => domain.size().expect("bounded"),
        other => return Err(budget_error(other, budget.states)),
    };
    let q = desc.field.order();
    let n_vars = desc.n_vars();
    let n_assign = pow(q, n_vars).expect("bounded");
    let keys: Vec<Keys> = sets.iter().map(|j| Keys::new(desc, partition(desc, target, j), n_assign)).collect();
    let coin_indices: Vec<u128> = (0..n_coins).collect();
    let per_coin: Vec<Result<Vec<CoinMi>>> = exec.map(&coin_indices, |&ci| {
        let coins = domain.coin(ci);
        let queries = scheme.make_queries(&coins, target)?;
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut views = Vec::with_capacity(n_assign as usize);
        let mut w = Walker::new(desc);
        for a in 0..n_assign {
            if a > 0 {
                w.advance();
            }
            let view: Vec<u32> = collect_answers(scheme, &queries, &w.db, &w.pool)?.into_iter().flatten().collect();
            let next = ids.len() as u32;
            views.push(*ids.entry(view).or_insert(next));
        }
        let mut names: Vec<(u32, String)> = ids
            .iter()
            .map(|(v, &id)| (id, v.iter().map(u32::to_string).collect::<Vec<_>>().join(",")))
            .collect();
        names.sort();
        let view_text = |id: u32| names[id as usize].1.clone();
        let n_views = ids.len() as u32;
        Ok(keys.iter().map(|k| coin_mi(desc, &coins, k, &views, n_views, &view_text)).collect())
    });
    let mut acc: Vec<CoinMi> = sets
        .iter()
        .map(|_| CoinMi { exact: Some(Ratio::from_integer(0)), approx: 0.0, independent: true, witness: None })
        .collect();
    let weight = Ratio::<i128>::new(1, n_coins as i128);
    for r in per_coin {
        for (a, c) in acc.iter_mut().zip(r?) {
            a.exact = a.exact.zip(c.exact).map(|(x, y)| x + y * weight);
            a.approx += c.approx / n_coins as f64;
            a.independent &= c.independent;
            if a.witness.is_none() {
                a.witness = c.witness;
            }
        }
    }
    Ok(acc
        .into_iter()
        .zip(sets)
        .map(|(a, j)| {
            let mi = match a.exact {
                Some(r) => Mi::Exact(Rational::new(*r.numer() as i64, *r.denom() as i64)),
                None => Mi::Approx(a.approx),
            };
            let mut res =
                CheckResult::new(Check::DbPrivacy, Engine::Exhaustive, a.independent, n_coins.to_string(), a.witness);
            res.target = Some(target);
            res.hidden = j.clone();
            res.mi = Some(mi);
            res
        })
        .collect())
}

/// `I(W_J ; answers | coins, side information)` from exact counts over every
/// coin and every assignment.
pub fn check_db_privacy_exhaustive(
    scheme: &dyn Scheme,
    target: usize,
    hidden: &[usize],
    budget: &Budget,
    exec: Exec,
) -> Result<CheckResult> {
    let mut v = check_db_privacy_exhaustive_sets(scheme, target, &[hidden.to_vec()], budget, exec)?;
    Ok(v.pop().expect("one set"))
}

/// Reliability, user privacy and database privacy for every target and
/// hidden set, recording where the two database-privacy engines agree.
pub fn verify_all(scheme: &dyn Scheme, opts: &VerifyOptions) -> Result<VerificationReport> {
    let desc = scheme.descriptor();
    let mut results = vec![
        check_reliability(scheme, &opts.budget, opts.exec)?,
        check_user_privacy(scheme, &opts.budget, opts.exec)?,
    ];
    let exhaustive_fits = states_needed(scheme).is_some_and(|s| s <= opts.budget.states);
    let mut partial = false;
    let mut agreement = (0, 0);
    for t in scheme.targets() {
        let (sets, part) = hidden_sets(desc.n_messages(), t);
        partial |= part;
        let linear = match opts.db_engines {
            DbEngines::Exhaustive => Vec::new(),
            _ => sets
                .iter()
                .map(|j| check_db_privacy_linear(scheme, t, j, &opts.budget, opts.exec))
                .collect::<Result<Vec<_>>>()?,
        };
        let exhaustive = match opts.db_engines {
            DbEngines::Linear => Vec::new(),
            DbEngines::Auto if !exhaustive_fits => Vec::new(),
            _ => check_db_privacy_exhaustive_sets(scheme, t, &sets, &opts.budget, opts.exec)?,
        };
        if !linear.is_empty() && !exhaustive.is_empty() {
            agreement.0 += sets.len();
            agreement.1 += linear.iter().zip(&exhaustive).filter(|(l, e)| l.pass == e.pass).count();
        }
        results.extend(linear);
        results.extend(exhaustive);
    }
    Ok(VerificationReport {
        scheme: desc.name.clone(),
        graph: desc.graph.label(),
        q: desc.field.order(),
        setting: desc.mode,
        results,
        partial_coverage: partial,
        agreement,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::PrimeField;
    use crate::converters::gr_from_pir;
    use crate::general_scheme::{Endpoint, Fault, GeneralScheme};
    use crate::graphs::{Graph, MultiGraph};
    use crate::pir_base::pir_p3;

    fn f(q: u32) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    fn p3() -> MultiGraph {
        MultiGraph::simple(Graph::path(3).unwrap())
    }

    #[test]
    fn exact_logs() {
        assert_eq!(log_q_exact(2, 8, 1), Some(3));
        assert_eq!(log_q_exact(2, 1, 4), Some(-2));
        assert_eq!(log_q_exact(3, 5, 5), Some(0));
        assert_eq!(log_q_exact(2, 3, 1), None);
    }

    #[test]
    fn general_p3_passes_everything() {
        let s = GeneralScheme::new(p3(), f(2));
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{}", report.to_text(s.descriptor()));
        assert_eq!(report.agreement, (2, 2));
        let text = report.to_text(s.descriptor());
        assert!(text.contains("check=db_privacy engine=exhaustive target=1 J={2} mi=0"));
        assert!(text.contains("check=db_privacy engine=linear target=1 J={2} coins=4 verdict=pass"));
    }

    #[test]
    fn dropped_pads_leak() {
        let s = GeneralScheme::with_options(p3(), f(2), Endpoint::Higher, Fault::DropPads).unwrap();
        let b = Budget::default();
        let ex = check_db_privacy_exhaustive(&s, 0, &[1], &b, Exec::Sequential).unwrap();
        assert!(!ex.pass);
        assert_eq!(ex.mi, Some(Mi::Exact(Rational::new(1, 2))));
        let lin = check_db_privacy_linear(&s, 0, &[1], &b, Exec::Sequential).unwrap();
        assert!(!lin.pass);
        assert!(lin.witness.unwrap().contains("b1"));
    }

    #[test]
    fn unblinded_queries_fail_user_privacy() {
        let s = GeneralScheme::with_options(p3(), f(2), Endpoint::Higher, Fault::Unblind).unwrap();
        let r = check_user_privacy(&s, &Budget::default(), Exec::Sequential).unwrap();
        assert!(!r.pass);
        assert!(r.witness.unwrap().contains("indicator"));
    }

    #[test]
    fn flipped_sign_fails_reliability() {
        let s = GeneralScheme::with_options(p3(), f(3), Endpoint::Higher, Fault::FlipSign { column: 0 }).unwrap();
        let r = check_reliability(&s, &Budget::default(), Exec::Sequential).unwrap();
        assert!(!r.pass);
        let sym = check_reliability_symbolic(&s, &Budget::default(), Exec::Sequential).unwrap();
        assert!(!sym.pass);
    }

    #[test]
    fn orbit_and_enumeration_agree_on_gr_p3() {
        let s = gr_from_pir(&pir_p3(), f(2)).unwrap();
        let b = Budget::default();
        assert!(check_user_privacy_enumeration(&s, &b, Exec::Sequential).unwrap().pass);
        assert!(check_user_privacy_orbit(&s).unwrap().pass);
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert!(report.passed(), "{}", report.to_text(s.descriptor()));
    }

    #[test]
    fn pir_alone_leaks() {
        let s = pir_p3().to_scheme(f(2)).unwrap();
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert!(!report.passed());
        assert!(report.failures().all(|r| r.check == Check::DbPrivacy));
    }

    #[test]
    fn hidden_set_coverage() {
        let (sets, partial) = hidden_sets(4, 0);
        assert_eq!(sets.len(), 7);
        assert!(!partial);
        let (sets, partial) = hidden_sets(9, 2);
        assert_eq!(sets.len(), 9);
        assert!(partial);
    }

    #[test]
    fn budget_refusal() {
        let s = GeneralScheme::new(p3(), f(2));
        let tiny = Budget { states: 10, coins: 1 << 16 };
        assert!(matches!(
            check_db_privacy_exhaustive(&s, 0, &[1], &tiny, Exec::Sequential),
            Err(Error::BudgetExceeded { .. })
        ));
    }
}
