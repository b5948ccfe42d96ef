//! Parallel against sequential execution of the exhaustive verifier engines.

use std::hint::black_box;
use std::time::Duration;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use spir_core::converters::fr_from_pir;
use spir_core::field::PrimeField;
use spir_core::general_scheme::GeneralScheme;
use spir_core::graphs::{Graph, MultiGraph};
use spir_core::par::Exec;
use spir_core::pir_base::pir_p3;
use spir_core::protocol::Scheme;
use spir_core::verifier::{
    check_db_privacy_exhaustive, check_reliability_exhaustive, check_user_privacy_enumeration, Budget,
};

const EXECS: [(&str, Exec); 2] = [("parallel", Exec::Parallel), ("sequential", Exec::Sequential)];

fn general(g: Graph, q: u32) -> GeneralScheme {
    GeneralScheme::new(MultiGraph::simple(g), PrimeField::new(q).unwrap())
}

fn reliability(c: &mut Criterion) {
    let budget = Budget::default();
    let mut group = c.benchmark_group("reliability_exhaustive");
    let cases = [("c3_q3", general(Graph::cycle(3).unwrap(), 3)), ("m_q2", general(Graph::m_graph(), 2))];
    for (name, scheme) in &cases {
        for (label, exec) in EXECS {
            group.bench_with_input(BenchmarkId::new(label, name), scheme, |b, s| {
                b.iter(|| check_reliability_exhaustive(black_box(s as &dyn Scheme), &budget, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn db_privacy(c: &mut Criterion) {
    let budget = Budget::default();
    let mut group = c.benchmark_group("db_privacy_exhaustive");
    let c3 = general(Graph::cycle(3).unwrap(), 3);
    let m = general(Graph::m_graph(), 2);
    for (name, scheme, hidden) in [("c3_q3", &c3, vec![1, 2]), ("m_q2", &m, vec![1, 2, 3])] {
        for (label, exec) in EXECS {
            group.bench_function(BenchmarkId::new(label, name), |b| {
                b.iter(|| check_db_privacy_exhaustive(black_box(scheme as &dyn Scheme), 0, &hidden, &budget, exec).unwrap())
            });
        }
    }
    group.finish();
}

fn user_privacy(c: &mut Criterion) {
    let budget = Budget::default();
    let fr = fr_from_pir(&pir_p3(), PrimeField::new(2).unwrap()).unwrap();
    let mut group = c.benchmark_group("user_privacy_enumeration");
    for (label, exec) in EXECS {
        group.bench_function(BenchmarkId::new(label, "fr_p3"), |b| {
            b.iter(|| check_user_privacy_enumeration(black_box(&fr as &dyn Scheme), &budget, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10).measurement_time(Duration::from_secs(3));
    targets = reliability, db_privacy, user_privacy
}
criterion_main!(benches);
