//! Parallel-vs-sequential throughput comparison: the rayon scoring path
//! against its always-sequential twin, and one Hogwild epoch against a
//! sequential one. Run `cargo bench -p latconf`; build with
//! `--no-default-features` to measure the fallback-only binary, where
//! both rows of each pair coincide.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use latconf::corpus::{EmbeddingTable, FeatureConfig, FeatureExtractor};
use latconf::nn::{AttnActivation, CellKind, ModelMeta, ModelParams};
use latconf::propagate::MergeMethod;
use latconf::synth::{gen_corpus, SynthConfig};
use latconf::tagging::DEFAULT_OVERLAP_THRESHOLD;
use latconf::train::{self, TaggedUtterance, TrainConfig, TrainMode};

fn dataset() -> Vec<TaggedUtterance> {
    let corpus = gen_corpus(&SynthConfig {
        vocab: 50,
        utterances: 200,
        p_sub: 0.25,
        depth: 3,
        seed: 7,
        ..SynthConfig::default()
    })
    .expect("corpus");
    let extractor = FeatureExtractor {
        table: EmbeddingTable::new(8),
        mapping: None,
        config: FeatureConfig { use_scores: false },
    };
    train::build_dataset(
        TrainMode::Cn,
        &corpus.networks,
        &corpus.lattices,
        &corpus.references,
        DEFAULT_OVERLAP_THRESHOLD,
        &extractor,
    )
    .expect("dataset")
}

fn bench_scoring(c: &mut Criterion) {
    let data = dataset();
    let refs: Vec<&TaggedUtterance> = data.iter().collect();
    let meta = ModelMeta {
        cell: CellKind::Gated,
        d_x: data[0].features[0].len(),
        d_h: 16,
        d_f: 16,
        attn_activation: AttnActivation::Logistic,
    };
    let params = ModelParams::init(meta, 1);
    let mut group = c.benchmark_group("score_200_utterances");
    for merge in [MergeMethod::Mean, MergeMethod::Attention] {
        group.bench_with_input(
            BenchmarkId::new("parallel", format!("{merge:?}")),
            &merge,
            |b, &m| b.iter(|| train::score_dataset(&refs, &params, m).unwrap()),
        );
        group.bench_with_input(
            BenchmarkId::new("sequential", format!("{merge:?}")),
            &merge,
            |b, &m| b.iter(|| train::score_dataset_seq(&refs, &params, m).unwrap()),
        );
    }
    group.finish();
}

fn bench_epoch(c: &mut Criterion) {
    let data = dataset();
    let mut group = c.benchmark_group("train_one_epoch");
    group.sample_size(10);
    for workers in [1usize, 4] {
        group.bench_with_input(
            BenchmarkId::from_parameter(format!("workers_{workers}")),
            &workers,
            |b, &w| {
                b.iter(|| {
                    let config = TrainConfig {
                        mode: TrainMode::Cn,
                        merge: MergeMethod::Attention,
                        cell: CellKind::Gated,
                        attn_activation: AttnActivation::Logistic,
                        d_h: 16,
                        d_f: 16,
                        lr: 0.2,
                        epochs: 1,
                        seed: 1,
                        workers: w,
                        ..TrainConfig::default()
                    };
                    train::train_hogwild(&data, &config).unwrap()
                })
            },
        );
    }
    group.finish();
}

criterion_group!(benches, bench_scoring, bench_epoch);
criterion_main!(benches);
