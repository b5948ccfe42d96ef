//! Converter outputs against hand-transcribed answer tables.
//!
//! The golden tables name symbols in their own order, so they are compared up
//! to relabelling indices within each message and each randomness pool.

use std::path::PathBuf;

use spir_core::converters::{fr_from_pir, fr_multigraph_from_pir, fr_star, gr_from_pir, gr_multigraph_from_pir};
use spir_core::field::PrimeField;
use spir_core::format::{TableFile, TableMode};
use spir_core::iso::same_table_structure;
use spir_core::pir_base::{pir_c3, pir_p3, pir_s4, pir_star_simple};
use spir_core::protocol::{Rational, Scheme};
use spir_core::table::TableScheme;

fn golden(name: &str) -> TableFile {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    TableFile::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn f2() -> PrimeField {
    PrimeField::new(2).unwrap()
}

fn assert_matches(name: &str, scheme: &TableScheme) {
    let g = golden(name);
    let ours = scheme.to_table_file();
    assert_eq!(g.graph, ours.graph, "{name}: graph");
    assert_eq!(g.mode, ours.mode, "{name}: mode");
    assert_eq!(g.msg_len, ours.msg_len, "{name}: L");
    for (target, table) in &g.tables {
        let mine = scheme.table(*target).unwrap_or_else(|| panic!("{name}: no target {}", target + 1));
        assert!(
            same_table_structure(table, mine).unwrap(),
            "{name}: target {} differs\n{}",
            g.graph.target_label(*target),
            ours.to_text()
        );
    }
}

#[test]
fn graph_replicated_p3() {
    let s = gr_from_pir(&pir_p3(), f2()).unwrap();
    assert_matches("gr_p3.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(1, 3));
}

#[test]
fn graph_replicated_c3() {
    let s = gr_from_pir(&pir_c3(), f2()).unwrap();
    assert_matches("gr_c3.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(1, 4));
}

#[test]
fn graph_replicated_s4() {
    let s = gr_from_pir(&pir_s4(), f2()).unwrap();
    assert_matches("gr_s4.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(1, 4));
}

#[test]
fn fully_replicated_p3() {
    let s = fr_from_pir(&pir_p3(), f2()).unwrap();
    assert_matches("fr_p3.tbl", &s);
    assert_eq!(s.descriptor().pool_sizes, vec![5]);
}

#[test]
fn fully_replicated_c3() {
    let s = fr_from_pir(&pir_c3(), f2()).unwrap();
    assert_matches("fr_c3.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(4, 11));
}

#[test]
fn fully_replicated_s4() {
    let s = fr_from_pir(&pir_star_simple(4).unwrap(), f2()).unwrap();
    assert_matches("fr_s4.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(3, 8));
}

#[test]
fn star_scheme() {
    let s = fr_star(4, 2, f2()).unwrap();
    assert_matches("fr_star_4_2.tbl", &s);
    assert_eq!(s.descriptor().pool_sizes, vec![4]);
}

#[test]
fn graph_replicated_multigraph() {
    let s = gr_multigraph_from_pir(&pir_p3(), 2, f2()).unwrap();
    assert_matches("gr_p3_r2.tbl", &s);
    assert_eq!(s.descriptor().rate(), Rational::new(1, 3));
}

#[test]
fn fully_replicated_multigraph() {
    let s = fr_multigraph_from_pir(&pir_p3(), 2, f2()).unwrap();
    assert_matches("fr_p3_r2.tbl", &s);
    assert_eq!(s.descriptor().pool_sizes, vec![13]);
    assert_eq!(s.descriptor().msg_len, 8);
}

#[test]
fn pad_relations_are_not_ignored() {
    // Reusing one pad on two answers is a different structure.
    let g = golden("fr_star_4_2.tbl");
    let text = g.to_text().replace("b1+s2\n", "b1+s3\n");
    let altered = TableFile::parse(&text).unwrap();
    assert!(!same_table_structure(&g.tables[0].1, &altered.tables[0].1).unwrap());
}

#[test]
fn golden_files_round_trip() {
    for name in [
        "gr_p3.tbl",
        "gr_c3.tbl",
        "gr_s4.tbl",
        "fr_p3.tbl",
        "fr_c3.tbl",
        "fr_s4.tbl",
        "fr_star_4_2.tbl",
        "gr_p3_r2.tbl",
        "fr_p3_r2.tbl",
    ] {
        let g = golden(name);
        assert_eq!(TableFile::parse(&g.to_text()).unwrap(), g, "{name}");
        assert_ne!(g.mode, TableMode::Pir);
    }
}
