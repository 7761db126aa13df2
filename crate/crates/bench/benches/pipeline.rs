use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use phishlab_core::attacks::{black_box as black_attack, grey_box, white_box, AttackConfig};
use phishlab_core::classifier::{RuleSet, ScoreOracle};
use phishlab_core::collision::{harvest_candidates, invert_hashes};
use phishlab_core::dom::parse_html;
use phishlab_core::features::{digest_hex, extract_features};
use phishlab_core::fixtures;
use phishlab_core::pelican::{tree_similarity_baseline, tree_similarity_pelican, PelicanConfig};

fn parsing(c: &mut Criterion) {
    let html = fixtures::attack_suite()[0].to_html();
    let mut group = c.benchmark_group("dom");
    group.throughput(Throughput::Bytes(html.len() as u64));
    group.bench_function("parse", |b| b.iter(|| parse_html(black_box(&html), "http://a.example.com/")));
    group.finish();
    let page = fixtures::attack_suite()[0].clone();
    c.bench_function("extract_features", |b| b.iter(|| extract_features(black_box(&page))));
    let model = fixtures::attack_model();
    let fmap = extract_features(&page);
    c.bench_function("score", |b| b.iter(|| model.score(black_box(&fmap))));
}

fn attacks(c: &mut Criterion) {
    let model = fixtures::attack_model();
    let rules = RuleSet::from_classifier(&model);
    let page = fixtures::attack_suite().pop().unwrap();
    let pool = fixtures::attack_pool();
    let cfg = AttackConfig::default();
    let oracle = || ScoreOracle::new(model.clone());
    let mut group = c.benchmark_group("attack");
    group.bench_function("white", |b| {
        b.iter_batched(oracle, |mut o| white_box(&model, &mut o, &page, &cfg), BatchSize::SmallInput)
    });
    group.bench_function("grey", |b| {
        b.iter_batched(oracle, |mut o| grey_box(&rules, &mut o, &page, &cfg), BatchSize::SmallInput)
    });
    group.bench_function("black", |b| {
        b.iter_batched(oracle, |mut o| black_attack(&mut o, &page, &pool, &cfg), BatchSize::SmallInput)
    });
    group.finish();
}

fn similarity(c: &mut Criterion) {
    let (model, seed) = fixtures::dilution_fixture();
    let attacked = white_box(&model, &mut ScoreOracle::new(model.clone()), &seed, &AttackConfig::default())
        .unwrap()
        .final_page;
    let cfg = PelicanConfig::default();
    c.bench_function("similarity/baseline", |b| b.iter(|| tree_similarity_baseline(&seed, black_box(&attacked))));
    c.bench_function("similarity/pelican", |b| b.iter(|| tree_similarity_pelican(&seed, black_box(&attacked), &cfg)));
}

fn inversion(c: &mut Criterion) {
    let corpus = fixtures::collision_corpus();
    let candidates = harvest_candidates(&corpus);
    let digests: Vec<String> = candidates.iter().take(200).map(|f| digest_hex(f)).collect();
    let mut group = c.benchmark_group("collision");
    group.throughput(Throughput::Elements(candidates.len() as u64));
    group.bench_function("harvest", |b| b.iter(|| harvest_candidates(black_box(&corpus))));
    group.bench_function("invert", |b| b.iter(|| invert_hashes(black_box(&candidates), &digests)));
    group.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(30);
    targets = parsing, attacks, similarity, inversion
}
criterion_main!(benches);
