use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use morphoprobe::lexicon::{Affix, Gender, Lexicon, NounEntry};
use morphoprobe::scorer::ScorerHandle;
use morphoprobe::tokenization::SPECIAL_PIECES;
use morphoprobe::{
    lda_fit, ols_fit, run_probe, tokenize, Design, EmbeddingRecord, MockConfig, ProbeOptions,
    Vocabulary,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";

fn random_word(rng: &mut ChaCha8Rng, min: usize, max: usize) -> String {
    let len = rng.random_range(min..=max);
    (0..len)
        .map(|_| LETTERS[rng.random_range(0..LETTERS.len())] as char)
        .collect()
}

/// A vocabulary with every single letter (so nothing is unknown) plus
/// random longer pieces.
fn vocab(rng: &mut ChaCha8Rng, size: usize) -> Vocabulary {
    let fixed = SPECIAL_PIECES
        .iter()
        .map(|s| s.to_string())
        .chain(["el", "la", "los", "las", "un", "una", "unos", "unas"].map(String::from))
        .chain(
            LETTERS
                .iter()
                .flat_map(|&c| [(c as char).to_string(), format!("##{}", c as char)]),
        )
        .chain(["##es".to_string()]);
    let mut seen = std::collections::HashSet::new();
    let mut pieces: Vec<String> = fixed.filter(|p| seen.insert(p.clone())).collect();
    while pieces.len() < size {
        let w = random_word(rng, 2, 7);
        let p = if rng.random_bool(0.6) {
            w
        } else {
            format!("##{w}")
        };
        if seen.insert(p.clone()) {
            pieces.push(p);
        }
    }
    Vocabulary::from_pieces(&pieces).unwrap()
}

fn bench_tokenize(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = vocab(&mut rng, 30_000);
    let words: Vec<String> = (0..1000).map(|_| random_word(&mut rng, 4, 14)).collect();
    c.bench_function("tokenize_1000_words", |b| {
        b.iter(|| {
            for w in &words {
                black_box(tokenize(black_box(w), &v));
            }
        })
    });
}

fn bench_lda(c: &mut Criterion) {
    let mut group = c.benchmark_group("lda_fit");
    for dim in [16, 64, 256, 768] {
        let mut rng = ChaCha8Rng::seed_from_u64(dim as u64);
        let records: Vec<EmbeddingRecord> = (0..500)
            .map(|i| {
                let class = i % 5;
                EmbeddingRecord {
                    wordform: format!("w{i}"),
                    class_label: format!("c{class}"),
                    vector: (0..dim)
                        .map(|d| rng.random_range(-1.0..1.0) + if d == class { 2.0 } else { 0.0 })
                        .collect(),
                }
            })
            .collect();
        group.bench_with_input(BenchmarkId::from_parameter(dim), &records, |b, r| {
            b.iter(|| lda_fit(black_box(r), 1e-3).unwrap())
        });
    }
    group.finish();
}

fn bench_ols(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let p = 9;
    let rows: Vec<Vec<f64>> = (0..20_000)
        .map(|_| {
            std::iter::once(1.0)
                .chain((1..p).map(|_| rng.random_range(-1.0..1.0)))
                .collect()
        })
        .collect();
    let y: Vec<f64> = rows
        .iter()
        .map(|r| r.iter().sum::<f64>() + rng.random_range(-0.1..0.1))
        .collect();
    let design = Design::new((0..p).map(|j| format!("x{j}")).collect(), &rows).unwrap();
    c.bench_function("ols_fit_20000x9", |b| {
        b.iter(|| ols_fit(black_box(&design), &y).unwrap())
    });
}

fn bench_probe(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let v = Arc::new(vocab(&mut rng, 5000));
    let entries = (0..200)
        .map(|i| {
            let lemma = format!("{}{}", random_word(&mut rng, 3, 8), LETTERS[i % 26] as char);
            let plural = format!("{lemma}s");
            NounEntry::new(&lemma, &plural, Gender::Feminine, Affix::S)
        })
        .collect();
    let lexicon = Lexicon {
        entries,
        source_digest: String::new(),
    };
    let handle = ScorerHandle::mock(v, MockConfig::new(1));
    c.bench_function("probe_mock_200_entries", |b| {
        b.iter(|| run_probe(&lexicon, &handle, &ProbeOptions::default()).unwrap())
    });
}

criterion_group!(benches, bench_tokenize, bench_lda, bench_ols, bench_probe);
criterion_main!(benches);
