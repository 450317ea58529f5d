//! Compares the rayon-parallel counter-model search with the sequential
//! fallback on one exhaustive (valid) and one early-exit (invalid) query.

use criterion::{criterion_group, criterion_main, Criterion};
use slprove::ast::Entailment;
use slprove::parser::parse_program;
use slprove::semantics::{Bounds, Oracle};

const INPUT: &str = include_str!("../corpus/lseven.sl");

fn query<'a>(prog: &'a slprove::parser::Program, name: &str) -> &'a Entailment {
    &prog
        .queries
        .iter()
        .find(|q| q.name == name)
        .unwrap()
        .entailment
}

fn bench_counter_model_search(c: &mut Criterion) {
    let prog = parse_program(INPUT).unwrap();
    let oracle = Oracle::new(&prog.preds, &prog.sorts, Bounds::new(3, 3, Some((-1, 1)))).unwrap();
    // valid: the search visits every model; invalid: it stops at the first
    // counter-model
    for name in ["even_compose", "odd_bad"] {
        let e = query(&prog, name);
        let mut g = c.benchmark_group(name);
        g.sample_size(20);
        g.bench_function("sequential", |b| {
            b.iter(|| oracle.find_counter_model_seq(e).unwrap())
        });
        #[cfg(feature = "parallel")]
        g.bench_function("parallel", |b| {
            b.iter(|| oracle.find_counter_model_par(e).unwrap())
        });
        g.finish();
    }
}

criterion_group!(benches, bench_counter_model_search);
criterion_main!(benches);
