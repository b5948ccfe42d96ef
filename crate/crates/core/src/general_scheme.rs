//! The rate-1/N scheme for any connected graph or multigraph with
//! graph-replicated randomness of one symbol per edge bundle.
//!
//! The user draws `h ∈ F_q^{K}` and sends server `n` row `n` of
//! `[Ī·diag(h_1) … Ī·diag(h_r)]` with structural zeros dropped, plus `e_m` at
//! one endpoint of the desired message. Server `n` answers
//! `Q_nᵀ W_n + Σ_{ℓ∈F_n} Ī(n,ℓ) R_ℓ`, and the answers sum to `W_m` because
//! every incidence column sums to zero.

use std::borrow::Cow;

use crate::error::{Error, Result};
use crate::field::PrimeField;
use crate::graphs::{MultiGraph, RandomnessMode};
use crate::protocol::{CoinDomain, Coins, Descriptor, Query, Scheme, ServerStore, Sym};

/// Which endpoint of the desired edge receives the unit vector `e_m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Endpoint {
    #[default]
    Higher,
    Lower,
}

/// Deliberate defects, used to show that the verifier catches them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Fault {
    #[default]
    None,
    /// Incidence column `k` gets +1 at both endpoints.
    FlipSign { column: usize },
    /// No randomness is added to the answers.
    DropPads,
    /// `e_m` is sent as a separate indicator instead of being added to the query.
    Unblind,
}

#[derive(Clone, Debug)]
pub struct GeneralScheme {
    desc: Descriptor,
    incidence: Vec<Vec<i8>>,
    endpoint: Endpoint,
    fault: Fault,
    /// Per server: flat message index of each query position.
    layout: Vec<Vec<usize>>,
    /// Per server: `(bundle, incidence sign)` of each pad added to the answer.
    pads: Vec<Vec<(usize, i64)>>,
}

impl GeneralScheme {
    pub fn new(graph: MultiGraph, field: PrimeField) -> GeneralScheme {
        Self::with_options(graph, field, Endpoint::Higher, Fault::None).expect("fault-free construction")
    }

    pub fn with_options(graph: MultiGraph, field: PrimeField, endpoint: Endpoint, fault: Fault) -> Result<GeneralScheme> {
        let base = graph.base().clone();
        let mut incidence = base.signed_incidence();
        if let Fault::FlipSign { column } = fault {
            if column >= base.n_edges() {
                return Err(Error::DimensionMismatch(format!("no incidence column {}", column + 1)));
            }
            let (_, j) = base.edge(column);
            incidence[j][column] = 1;
        }
        let n = graph.n_servers();
        let layout: Vec<Vec<usize>> = (0..n)
            .map(|s| {
                let inc = base.incident(s);
                (0..graph.r()).flat_map(|t| inc.iter().map(move |&l| (t, l))).map(|(t, l)| graph.message(l, t)).collect()
            })
            .collect();
        let pools = match fault {
            Fault::DropPads => vec![0; graph.n_bundles()],
            _ => vec![1; graph.n_bundles()],
        };
        let name = match fault {
            Fault::None => "general".to_string(),
            Fault::FlipSign { column } => format!("general with incidence column {} sign-flipped", column + 1),
            Fault::DropPads => "general without pads".to_string(),
            Fault::Unblind => "general with unblinded queries".to_string(),
        };
        let pads = (0..n)
            .map(|s| match fault {
                Fault::DropPads => Vec::new(),
                _ => base.incident(s).into_iter().map(|l| (l, incidence[s][l] as i64)).collect(),
            })
            .collect();
        let desc = Descriptor::new(name, graph, field, RandomnessMode::GraphReplicated, 1, pools, vec![1; n]);
        Ok(GeneralScheme { desc, incidence, endpoint, fault, layout, pads })
    }

    pub fn endpoint(&self) -> Endpoint {
        self.endpoint
    }

    pub fn fault(&self) -> Fault {
        self.fault
    }

    /// Server that receives `e_m` for target `m`.
    pub fn unit_server(&self, m: usize) -> usize {
        let (i, j) = self.desc.graph.endpoints(m);
        match self.endpoint {
            Endpoint::Higher => j,
            Endpoint::Lower => i,
        }
    }

    fn coefficients<'q>(&self, server: usize, query: &'q Query) -> Result<Cow<'q, [u32]>> {
        let f = self.desc.field;
        let q = match query {
            Query::Coefficients(q) => Cow::Borrowed(q.as_slice()),
            Query::Unblinded { blinded, indicator } if blinded.len() == indicator.len() => {
                Cow::Owned(blinded.iter().zip(indicator).map(|(&a, &b)| f.add(a, b)).collect())
            }
            _ => return Err(Error::Unsupported("the general scheme answers coefficient queries".into())),
        };
        if q.len() != self.layout[server].len() {
            return Err(Error::DimensionMismatch(format!(
                "server {} expects {} coefficients, got {}",
                server + 1,
                self.layout[server].len(),
                q.len()
            )));
        }
        Ok(q)
    }

}

impl Scheme for GeneralScheme {
    fn descriptor(&self) -> &Descriptor {
        &self.desc
    }

    fn coin_domain(&self) -> CoinDomain {
        CoinDomain::Vector { len: self.desc.n_messages(), q: self.desc.field.order() }
    }

    fn make_queries(&self, coins: &Coins, target: usize) -> Result<Vec<Query>> {
        let h = match coins {
            Coins::Vector(h) if h.len() == self.desc.n_messages() => h,
            _ => {
                return Err(Error::DimensionMismatch(format!(
                    "coins must be a vector of length {}",
                    self.desc.n_messages()
                )))
            }
        };
        if target >= self.desc.n_messages() {
            return Err(Error::UnknownTarget(format!("{}", target + 1)));
        }
        let f = self.desc.field;
        let unit = self.unit_server(target);
        Ok((0..self.desc.n_servers())
            .map(|n| {
                let blinded: Vec<u32> = self.layout[n]
                    .iter()
                    .map(|&m| {
                        let (l, _) = self.desc.graph.bundle_of(m);
                        f.mul(f.reduce(self.incidence[n][l] as i64), h[m])
                    })
                    .collect();
                let indicator: Vec<u32> =
                    self.layout[n].iter().map(|&m| u32::from(n == unit && m == target)).collect();
                if self.fault == Fault::Unblind {
                    Query::Unblinded { blinded, indicator }
                } else {
                    Query::Coefficients(blinded.iter().zip(&indicator).map(|(&a, &b)| f.add(a, b)).collect())
                }
            })
            .collect())
    }

    fn answer(&self, server: usize, query: &Query, store: &ServerStore) -> Result<Vec<u32>> {
        let f = self.desc.field;
        let q = self.coefficients(server, query)?;
        let mut acc = 0u32;
        for (&c, &m) in q.iter().zip(&self.layout[server]) {
            let w = store.symbol(Sym::Msg { m, i: 0 }).ok_or_else(|| Error::NonLocalSymbol {
                server: server + 1,
                symbol: self.desc.sym_name(Sym::Msg { m, i: 0 }),
            })?;
            acc = f.add(acc, f.mul(c, w));
        }
        for &(l, sign) in &self.pads[server] {
            let s = Sym::Rand { pool: l, i: 0 };
            let r = store
                .symbol(s)
                .ok_or_else(|| Error::NonLocalSymbol { server: server + 1, symbol: self.desc.sym_name(s) })?;
            acc = f.add(acc, f.mul(f.reduce(sign), r));
        }
        Ok(vec![acc])
    }

    fn answer_forms(&self, server: usize, query: &Query) -> Result<Vec<Vec<u32>>> {
        let f = self.desc.field;
        let q = self.coefficients(server, query)?;
        let mut form = vec![0u32; self.desc.n_vars()];
        for (&c, &m) in q.iter().zip(&self.layout[server]) {
            let v = self.desc.var(Sym::Msg { m, i: 0 });
            form[v] = f.add(form[v], c);
        }
        for &(l, sign) in &self.pads[server] {
            let v = self.desc.var(Sym::Rand { pool: l, i: 0 });
            form[v] = f.add(form[v], f.reduce(sign));
        }
        Ok(vec![form])
    }

    fn decoder(&self, _coins: &Coins, _target: usize) -> Result<Vec<Vec<u32>>> {
        Ok(vec![vec![1; self.desc.n_servers()]])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::Graph;
    use crate::protocol::{enumerate_coins, run_transcript, MessageDatabase, RandomnessPool};

    fn f(q: u32) -> PrimeField {
        PrimeField::new(q).unwrap()
    }

    #[test]
    fn p3_queries() {
        let s = GeneralScheme::new(MultiGraph::simple(Graph::path(3).unwrap()), f(5));
        let qs = s.make_queries(&Coins::Vector(vec![2, 3]), 0).unwrap();
        // Q1 = [h1], Q2 = [-h1, h2] + e_1, Q3 = [-h2]
        assert_eq!(qs[0], Query::Coefficients(vec![2]));
        assert_eq!(qs[1], Query::Coefficients(vec![4, 3]));
        assert_eq!(qs[2], Query::Coefficients(vec![2]));
        let forms = s.answer_forms(2, &qs[2]).unwrap();
        assert_eq!(s.descriptor().render_form(&forms[0]), "2b1-s2_1");
    }

    #[test]
    fn c3_query_to_server_one() {
        let s = GeneralScheme::new(MultiGraph::simple(Graph::cycle(3).unwrap()), f(7));
        let qs = s.make_queries(&Coins::Vector(vec![1, 2, 3]), 1).unwrap();
        assert_eq!(qs[0], Query::Coefficients(vec![1, 3]));
    }

    #[test]
    fn multigraph_query_lengths() {
        let g = Graph::path(3).unwrap().lift(2).unwrap();
        let s = GeneralScheme::new(g, f(3));
        let qs = s.make_queries(&Coins::Vector(vec![1; 4]), 0).unwrap();
        let lens: Vec<usize> = qs
            .iter()
            .map(|q| match q {
                Query::Coefficients(v) => v.len(),
                _ => 0,
            })
            .collect();
        assert_eq!(lens, vec![2, 4, 2]);
    }

    #[test]
    fn reliable_on_p3_exhaustively() {
        for endpoint in [Endpoint::Higher, Endpoint::Lower] {
            let s =
                GeneralScheme::with_options(MultiGraph::simple(Graph::path(3).unwrap()), f(2), endpoint, Fault::None)
                    .unwrap();
            let d = s.descriptor();
            for coins in enumerate_coins(&s.coin_domain()).unwrap() {
                for x in 0..16u32 {
                    let db = MessageDatabase { msg_len: 1, messages: vec![vec![x & 1], vec![(x >> 1) & 1]] };
                    let pool = RandomnessPool { pools: vec![vec![(x >> 2) & 1], vec![(x >> 3) & 1]] };
                    for t in 0..d.n_messages() {
                        run_transcript(&s, &db, &pool, &coins, t).unwrap();
                    }
                }
            }
        }
    }

    #[test]
    fn flipped_sign_breaks_decoding_at_q3() {
        let g = MultiGraph::simple(Graph::path(3).unwrap());
        let s = GeneralScheme::with_options(g, f(3), Endpoint::Higher, Fault::FlipSign { column: 0 }).unwrap();
        let db = MessageDatabase { msg_len: 1, messages: vec![vec![1], vec![0]] };
        let pool = RandomnessPool { pools: vec![vec![0], vec![0]] };
        let err = run_transcript(&s, &db, &pool, &Coins::Vector(vec![1, 0]), 0).unwrap_err();
        assert!(matches!(err, Error::DecodeFailure(_)));
    }
}
