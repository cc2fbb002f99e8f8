use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ayn_core::kernels::{attention_forward, matmul, AttentionShape};
use ayn_core::model::{forward, ModelConfig, ModelWeights};
use ayn_core::tokenizer::train_bpe;
use ayn_core::Tensor;

const TEXT: &str =
    "The appeal is allowed and the conviction under Section 302 of the Indian Penal Code, 1860 is set aside. \
                    Article 21 guarantees the right to life and personal liberty. ";

fn bench_matmul(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut group = c.benchmark_group("matmul");
    for n in [32usize, 64, 128] {
        let a = Tensor::randn([n, n], 1.0, &mut rng);
        let b = Tensor::randn([n, n], 1.0, &mut rng);
        group.throughput(Throughput::Elements((2 * n * n * n) as u64));
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |bench, _| {
            bench.iter(|| matmul(black_box(&a), black_box(&b)).unwrap())
        });
    }
    group.finish();
}

fn bench_attention(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("attention");
    for groups in [1usize, 2, 4] {
        let shape = AttentionShape { n_heads: 4, n_kv_groups: groups, head_dim: 16, causal: true };
        let q = Tensor::randn([64, 64], 1.0, &mut rng);
        let k = Tensor::randn([64, groups * 16], 1.0, &mut rng);
        let v = Tensor::randn([64, groups * 16], 1.0, &mut rng);
        group.bench_with_input(BenchmarkId::new("t64_h4", groups), &groups, |bench, _| {
            bench.iter(|| attention_forward(black_box(&q), &k, &v, shape).unwrap())
        });
    }
    group.finish();
}

fn bench_bpe(c: &mut Criterion) {
    let corpus: Vec<String> = (0..50).map(|i| format!("{TEXT} {i}")).collect();
    let vocab = train_bpe(&corpus, 400).unwrap();
    let text = TEXT.repeat(20);
    let mut group = c.benchmark_group("bpe");
    group.throughput(Throughput::Bytes(text.len() as u64));
    group.bench_function("encode", |b| b.iter(|| vocab.encode(black_box(&text))));
    group.sample_size(10);
    group.bench_function("train_400", |b| b.iter(|| train_bpe(black_box(&corpus), 400).unwrap()));
    group.finish();
}

fn bench_forward(c: &mut Criterion) {
    let cfg = ModelConfig::tiny(300);
    let weights = ModelWeights::init(&cfg, 3).unwrap();
    let ids: Vec<usize> = (0..64).map(|i| (i * 37) % 300).collect();
    let mut group = c.benchmark_group("forward");
    group.throughput(Throughput::Elements(ids.len() as u64));
    group.bench_function("tiny_t64", |b| b.iter(|| forward(&weights, &cfg, black_box(&ids)).unwrap()));
    group.finish();
}

criterion_group!(benches, bench_matmul, bench_attention, bench_bpe, bench_forward);
criterion_main!(benches);
