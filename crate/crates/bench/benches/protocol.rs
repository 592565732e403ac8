use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dcnet::analytics::expected_rounds_table;
use dcnet::sim::{default_params, run_channel_sim, run_protocol_demo, DemoConfig, SimConfig};
use dcnet::zkp::{
    prove_eqdl, prove_neqdl, prove_or2, verify_eqdl, verify_neqdl, verify_or2, EqDlStatement, NeqDlStatement,
    OrStatement,
};
use dcnet::Variant;

fn proofs(c: &mut Criterion) {
    let params = default_params();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let x = params.random_nonzero_scalar(&mut rng);
    let y = params.exp_g(&x);
    let base = params.random_element(&mut rng);
    let other = params.random_element(&mut rng);
    let eq = EqDlStatement::new(base.clone(), params.pow(&base, &x), y.clone());
    let decoy = EqDlStatement::new(other.clone(), params.random_element(&mut rng), y.clone());
    let or = OrStatement::new(decoy, eq.clone()).unwrap();
    let neq = NeqDlStatement::new(other.clone(), params.random_element(&mut rng), y).unwrap();

    let eq_proof = prove_eqdl(params, &eq, &x, &mut rng).unwrap();
    let or_proof = prove_or2(params, &or, 2, &x, &mut rng).unwrap();
    let neq_proof = prove_neqdl(params, &neq, &x, &mut rng).unwrap();

    let mut g = c.benchmark_group("zkp");
    g.bench_function("eqdl_prove", |b| b.iter(|| prove_eqdl(params, &eq, &x, &mut rng).unwrap()));
    g.bench_function("eqdl_verify", |b| b.iter(|| verify_eqdl(params, &eq, &eq_proof)));
    g.bench_function("or2_prove", |b| b.iter(|| prove_or2(params, &or, 2, &x, &mut rng).unwrap()));
    g.bench_function("or2_verify", |b| b.iter(|| verify_or2(params, &or, &or_proof)));
    g.bench_function("neqdl_prove", |b| b.iter(|| prove_neqdl(params, &neq, &x, &mut rng).unwrap()));
    g.bench_function("neqdl_verify", |b| b.iter(|| verify_neqdl(params, &neq, &neq_proof)));
    g.finish();
}

fn epochs(c: &mut Criterion) {
    let mut g = c.benchmark_group("epoch");
    g.sample_size(10);
    for variant in [Variant::Standard, Variant::Optimized] {
        g.bench_function(format!("demo_5_senders_{variant}"), |b| {
            b.iter_batched(
                || DemoConfig {
                    variant,
                    ..Default::default()
                },
                |cfg| run_protocol_demo(&cfg).unwrap(),
                BatchSize::SmallInput,
            )
        });
    }
    g.bench_function("fast_sim_10k_rounds", |b| {
        let cfg = SimConfig {
            n: 64,
            lambda: 0.8,
            ..Default::default()
        };
        b.iter(|| run_channel_sim(&cfg).unwrap())
    });
    g.finish();
}

fn analytics(c: &mut Criterion) {
    c.bench_function("expected_rounds_table_64", |b| {
        b.iter(|| expected_rounds_table(64, Variant::Optimized))
    });
}

criterion_group!(benches, proofs, epochs, analytics);
criterion_main!(benches);
