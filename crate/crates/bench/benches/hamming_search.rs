use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hashkit::hashing::scan;
use hashkit::{HammingIndex, PackedCodes};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_index(rows: usize, nbits: u32, rng: &mut ChaCha8Rng) -> HammingIndex {
    let words_per_row = PackedCodes::words_for(nbits);
    let tail = nbits % 64;
    let mask = if tail == 0 { u64::MAX } else { (1u64 << tail) - 1 };
    let words: Vec<u64> = (0..rows * words_per_row)
        .map(|i| {
            if i % words_per_row == words_per_row - 1 {
                rng.random::<u64>() & mask
            } else {
                rng.random()
            }
        })
        .collect();
    let labels = (0..rows as u32).map(|i| i % 10).collect();
    HammingIndex::build(PackedCodes::from_words(nbits, words).unwrap(), labels).unwrap()
}

fn bench_queries(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let index = random_index(10_000, 64, &mut rng);
    let queries: Vec<u64> = (0..1000).map(|_| rng.random()).collect();

    let mut group = c.benchmark_group("hamming_search");
    group.throughput(Throughput::Elements(queries.len() as u64));
    for k in [1usize, 10, 100] {
        group.bench_with_input(BenchmarkId::new("1000_queries_10k_rows", k), &k, |b, &k| {
            b.iter(|| {
                for q in &queries {
                    black_box(index.search_words(std::slice::from_ref(q), k).unwrap());
                }
            })
        });
    }
    group.finish();
}

fn bench_code_width(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut group = c.benchmark_group("scan_by_width");
    for nbits in [32u32, 64, 128, 256] {
        let index = random_index(10_000, nbits, &mut rng);
        let query: Vec<u64> = index.codes().row(0).to_vec();
        group.bench_with_input(BenchmarkId::from_parameter(nbits), &nbits, |b, _| {
            b.iter(|| black_box(scan(index.codes(), &query, 10)))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_queries, bench_code_width);
criterion_main!(benches);
