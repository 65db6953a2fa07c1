use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trilstm::eval::{count_document, macro_bio};
use trilstm::network::{backward_bptt, forward, init_params};
use trilstm::synth::{synth_corpus, SynthConfig};
use trilstm::{
    Encoder, EncoderMethod, Label, MentionSpan, NetworkConfig, NetworkVariant, Sentence,
};

fn corpus_sentences(n: usize) -> Vec<Sentence> {
    let config = SynthConfig {
        sentences: n,
        misspell_rate: 0.1,
        ..Default::default()
    };
    synth_corpus(&config)
        .expect("synthetic corpus")
        .sentences()
        .cloned()
        .collect()
}

fn bench_encode(c: &mut Criterion) {
    let sentences = corpus_sentences(500);
    let mut group = c.benchmark_group("encode");
    for method in [EncoderMethod::Dict, EncoderMethod::Tri] {
        let encoder = Encoder::build(method, &sentences, None).expect("encoder");
        group.bench_function(method.to_string(), |b| {
            b.iter(|| {
                for s in &sentences[..50] {
                    black_box(encoder.encode_sentence(s));
                }
            })
        });
    }
    group.finish();
}

fn bench_network(c: &mut Criterion) {
    let sentences = corpus_sentences(500);
    let encoder = Encoder::build(EncoderMethod::Tri, &sentences, None).expect("encoder");
    let sentence = sentences.iter().max_by_key(|s| s.len()).expect("nonempty");
    let inputs = encoder.encode_sentence(sentence);
    let gold: Vec<usize> = sentence
        .labels
        .as_ref()
        .expect("labeled")
        .iter()
        .map(|l| l.index())
        .collect();

    let mut group = c.benchmark_group("network");
    for variant in NetworkVariant::ALL {
        let config = NetworkConfig::new(variant, encoder.dim());
        let params = init_params(&config, 1);
        group.bench_function(format!("{variant}/forward"), |b| {
            b.iter(|| black_box(forward(&inputs, &config, &params).expect("forward")))
        });
        group.bench_function(format!("{variant}/backward"), |b| {
            b.iter_batched(
                || forward(&inputs, &config, &params).expect("forward").1,
                |acts| black_box(backward_bptt(&acts, &gold, &config, &params).expect("backward")),
                BatchSize::SmallInput,
            )
        });
    }
    group.finish();
}

fn random_spans(rng: &mut ChaCha8Rng, n: usize) -> Vec<MentionSpan> {
    (0..n)
        .map(|_| {
            let b = rng.random_range(0..1000);
            MentionSpan::new("d", b, b + rng.random_range(1..20))
        })
        .collect()
}

fn bench_eval(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let docs: Vec<(Vec<MentionSpan>, Vec<MentionSpan>)> = (0..200)
        .map(|_| (random_spans(&mut rng, 10), random_spans(&mut rng, 10)))
        .collect();
    let labels: Vec<Vec<Label>> = (0..2000)
        .map(|_| {
            (0..20)
                .map(|_| Label::ALL[rng.random_range(0..3)])
                .collect()
        })
        .collect();
    let gold: Vec<Vec<Label>> = labels.iter().rev().cloned().collect();

    let mut group = c.benchmark_group("eval");
    group.bench_function("count_document/200", |b| {
        b.iter(|| {
            for (p, g) in &docs {
                black_box(count_document(p, g));
            }
        })
    });
    group.bench_function("macro_bio/40k_tokens", |b| {
        b.iter(|| black_box(macro_bio(&labels, &gold).expect("aligned")))
    });
    group.finish();
}

criterion_group!(benches, bench_encode, bench_network, bench_eval);
criterion_main!(benches);
