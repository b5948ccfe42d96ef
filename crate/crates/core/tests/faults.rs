//! Injected defects must fail the check responsible for them, and only that check.

use spir_core::converters::{fr_from_pir, fr_multigraph_from_pir, fr_star, gr_from_pir, gr_multigraph_from_pir};
use spir_core::field::PrimeField;
use spir_core::general_scheme::{Endpoint, Fault, GeneralScheme};
use spir_core::graphs::{Graph, MultiGraph};
use spir_core::par::Exec;
use spir_core::pir_base::{pir_c3, pir_p3, pir_star_simple};
use spir_core::protocol::Scheme;
use spir_core::table::TableScheme;
use spir_core::verifier::{
    check_db_privacy_linear, check_reliability_exhaustive, check_reliability_symbolic, check_user_privacy_enumeration,
    check_user_privacy_joint, verify_all, Budget, Check, VerificationReport, VerifyOptions,
};

fn field(q: u32) -> PrimeField {
    PrimeField::new(q).unwrap()
}

fn graphs() -> Vec<Graph> {
    vec![
        Graph::path(3).unwrap(),
        Graph::cycle(3).unwrap(),
        Graph::star(4).unwrap(),
        Graph::m_graph(),
        Graph::complete(4).unwrap(),
    ]
}

fn general(g: &Graph, q: u32, fault: Fault) -> GeneralScheme {
    GeneralScheme::with_options(MultiGraph::simple(g.clone()), field(q), Endpoint::Higher, fault).unwrap()
}

fn failed_checks(report: &VerificationReport) -> Vec<Check> {
    let mut v: Vec<Check> = report.failures().map(|r| r.check).collect();
    v.sort();
    v.dedup();
    v
}

fn converted_schemes() -> Vec<TableScheme> {
    let f = field(2);
    vec![
        gr_from_pir(&pir_p3(), f).unwrap(),
        gr_from_pir(&pir_c3(), f).unwrap(),
        fr_from_pir(&pir_p3(), f).unwrap(),
        fr_from_pir(&pir_star_simple(4).unwrap(), f).unwrap(),
        fr_star(4, 2, f).unwrap(),
        gr_multigraph_from_pir(&pir_p3(), 2, f).unwrap(),
        fr_multigraph_from_pir(&pir_p3(), 2, f).unwrap(),
    ]
}

#[test]
fn honest_general_schemes_pass() {
    for g in graphs() {
        for q in [2, 3] {
            let s = general(&g, q, Fault::None);
            let report = verify_all(&s, &VerifyOptions::default()).unwrap();
            assert!(report.passed(), "{}\n{}", g, report.to_text(s.descriptor()));
        }
    }
}

#[test]
fn dropped_pads_fail_database_privacy_only() {
    for g in graphs() {
        let s = general(&g, 2, Fault::DropPads);
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert_eq!(failed_checks(&report), vec![Check::DbPrivacy], "{g}");
        for t in s.targets() {
            // Any single neighbouring message is leaked through the shared answer.
            let (a, b) = s.descriptor().graph.endpoints(t);
            let neighbour = (0..s.descriptor().n_messages())
                .find(|&m| m != t && {
                    let (c, d) = s.descriptor().graph.endpoints(m);
                    [a, b].contains(&c) || [a, b].contains(&d)
                });
            if let Some(m) = neighbour {
                let r = check_db_privacy_linear(&s, t, &[m], &Budget::default(), Exec::Sequential).unwrap();
                assert!(!r.pass, "{g}: target {t} J={{{m}}}");
                assert!(r.witness.unwrap().contains("learns"));
            }
        }
    }
}

#[test]
fn flipped_sign_fails_reliability_only() {
    let b = Budget::default();
    for g in graphs() {
        for column in 0..g.n_edges() {
            let s = general(&g, 3, Fault::FlipSign { column });
            let sym = check_reliability_symbolic(&s, &b, Exec::Sequential).unwrap();
            assert!(!sym.pass, "{g} column {column}");
            if let Ok(ex) = check_reliability_exhaustive(&s, &b, Exec::Sequential) {
                assert!(!ex.pass, "{g} column {column}");
            }
        }
        let s = general(&g, 3, Fault::FlipSign { column: 0 });
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert_eq!(failed_checks(&report), vec![Check::Reliability], "{g}");
    }
}

#[test]
fn unblinded_placement_fails_user_privacy_only() {
    let b = Budget::default();
    for g in graphs() {
        for endpoint in [Endpoint::Higher, Endpoint::Lower] {
            let s = GeneralScheme::with_options(MultiGraph::simple(g.clone()), field(2), endpoint, Fault::Unblind).unwrap();
            let up = check_user_privacy_enumeration(&s, &b, Exec::Sequential).unwrap();
            assert!(!up.pass, "{g} {endpoint:?}");
            assert!(up.witness.is_some());
        }
        let s = general(&g, 2, Fault::Unblind);
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert_eq!(failed_checks(&report), vec![Check::UserPrivacy], "{g}");
    }
    let p3 = general(&Graph::path(3).unwrap(), 2, Fault::Unblind);
    assert!(!check_user_privacy_joint(&p3, &b, Exec::Sequential).unwrap().pass);
}

#[test]
fn converted_schemes_without_pads_leak() {
    for s in converted_schemes() {
        let bare = s.without_pads().unwrap();
        let report = verify_all(&bare, &VerifyOptions::default()).unwrap();
        let failed = failed_checks(&report);
        assert!(failed.contains(&Check::DbPrivacy), "{}", s.descriptor().name);
        assert!(!failed.contains(&Check::Reliability), "{}", s.descriptor().name);
    }
}

#[test]
fn reused_pads_leak() {
    let mut tried = 0;
    for s in converted_schemes() {
        // Graph-replicated interference pads sit in different pools and cannot be merged.
        let Ok(reused) = s.with_reused_pad() else { continue };
        tried += 1;
        let b = Budget::default();
        let leaks = reused.targets().into_iter().any(|t| {
            let others: Vec<usize> = (0..reused.descriptor().n_messages()).filter(|&m| m != t).collect();
            !check_db_privacy_linear(&reused, t, &others, &b, Exec::Sequential).unwrap().pass
        });
        assert!(leaks, "{}", s.descriptor().name);
    }
    assert!(tried >= 3, "only {tried} schemes accepted a reused pad");
}

#[test]
fn plain_pir_is_not_symmetric() {
    for pir in [pir_p3(), pir_c3(), pir_star_simple(4).unwrap()] {
        let s = pir.to_scheme(field(2)).unwrap();
        let report = verify_all(&s, &VerifyOptions::default()).unwrap();
        assert_eq!(failed_checks(&report), vec![Check::DbPrivacy], "{}", pir.name());
    }
}
