#![allow(dead_code)]

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use morphoprobe::analysis::EmbeddingRecord;
use morphoprobe::lexicon::{parse_lexicon, Lexicon};
use morphoprobe::scorer::{HiddenStatesRequest, MaskQuery, MockConfig, MockScorer};
use morphoprobe::tokenization::{load_vocab, Vocabulary};

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn fixture_vocab() -> Vocabulary {
    load_vocab(&std::fs::read_to_string(fixture_path("vocab.txt")).unwrap()).unwrap()
}

pub fn fixture_lexicon(name: &str) -> Lexicon {
    parse_lexicon(&std::fs::read_to_string(fixture_path(name)).unwrap())
        .unwrap()
        .lexicon
}

/// Welford's streaming mean and sample SD.
pub fn welford(values: &[f64]) -> (f64, f64) {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for (i, &x) in values.iter().enumerate() {
        let n = (i + 1) as f64;
        let d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    let sd = if values.len() > 1 {
        (m2 / (values.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Brute-force LDA: symmetric inverse square root of the regularized
/// within-class scatter (nalgebra eigendecomposition, no Cholesky),
/// eigenvectors of the whitened between-class scatter, back-transformed,
/// unit-normalized. Returns (eigenvalues, axes, global mean).
pub fn lda_oracle(
    records: &[EmbeddingRecord],
    shrinkage: f64,
) -> (Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    use nalgebra::{DMatrix, DVector};
    let d = records[0].vector.len();
    let mut labels: Vec<&str> = records.iter().map(|r| r.class_label.as_str()).collect();
    labels.sort();
    labels.dedup();
    let vec_of = |r: &EmbeddingRecord| DVector::from_column_slice(&r.vector);
    let n = records.len() as f64;
    let mu = records
        .iter()
        .map(vec_of)
        .fold(DVector::zeros(d), |a, b| a + b)
        / n;
    let mut sw = DMatrix::<f64>::zeros(d, d);
    let mut sb = DMatrix::<f64>::zeros(d, d);
    for l in &labels {
        let members: Vec<DVector<f64>> = records
            .iter()
            .filter(|r| r.class_label == *l)
            .map(vec_of)
            .collect();
        let nc = members.len() as f64;
        let mc = members.iter().fold(DVector::zeros(d), |a, b| a + b) / nc;
        for x in &members {
            let c = x - &mc;
            sw += &c * c.transpose();
        }
        let c = &mc - &mu;
        sb += (&c * c.transpose()) * nc;
    }
    let lambda = shrinkage * sw.trace() / d as f64;
    let reg = sw + DMatrix::identity(d, d) * lambda;
    let e = reg.symmetric_eigen();
    let inv_sqrt = &e.eigenvectors
        * DMatrix::from_diagonal(&e.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * e.eigenvectors.transpose();
    let m = &inv_sqrt * &sb * &inv_sqrt;
    let m = (&m + m.transpose()) * 0.5;
    let me = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| me.eigenvalues[b].total_cmp(&me.eigenvalues[a]));
    let k = (labels.len() - 1).min(d);
    let mut values = Vec::new();
    let mut axes = Vec::new();
    for &i in order.iter().take(k) {
        let w = &inv_sqrt * me.eigenvectors.column(i);
        let w = w.normalize();
        values.push(me.eigenvalues[i]);
        axes.push(w.iter().copied().collect());
    }
    (values, axes, mu.iter().copied().collect())
}

/// Least squares through the normal equations `(XᵀX) β = Xᵀy`.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    use nalgebra::{DMatrix, DVector};
    let n = x.len();
    let p = x[0].len();
    let xm = DMatrix::from_fn(n, p, |i, j| x[i][j]);
    let yv = DVector::from_column_slice(y);
    let xtx = xm.transpose() * &xm;
    let xty = xm.transpose() * yv;
    xtx.cholesky()
        .unwrap()
        .solve(&xty)
        .iter()
        .copied()
        .collect()
}

/// Equal up to a global sign flip.
pub fn same_up_to_sign(a: &[f64], b: &[f64], tol: f64) -> bool {
    let plus = a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol);
    let minus = a.iter().zip(b).all(|(x, y)| (x + y).abs() <= tol);
    plus || minus
}

/// A tiny HTTP/1.1 server speaking the scorer protocol, backed by the
/// in-process mock. The first `fail_first` requests get a 503.
pub struct TestServer {
    pub url: String,
    pub hits: Arc<AtomicUsize>,
}

pub fn spawn_server(vocab: Arc<Vocabulary>, config: MockConfig, fail_first: usize) -> TestServer {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let counter = Arc::clone(&hits);
    let scorer = Arc::new(MockScorer::new(Arc::clone(&vocab), config));
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(stream) = stream else { continue };
            let n = counter.fetch_add(1, Ordering::SeqCst);
            let scorer = Arc::clone(&scorer);
            let vocab = Arc::clone(&vocab);
            std::thread::spawn(move || handle(stream, &scorer, &vocab, n < fail_first));
        }
    });
    TestServer { url, hits }
}

fn respond(mut stream: TcpStream, status: &str, body: &str) {
    let _ = write!(
        stream,
        "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        body.len()
    );
    let _ = stream.flush();
}

fn handle(stream: TcpStream, scorer: &MockScorer, vocab: &Vocabulary, fail: bool) {
    let mut reader = BufReader::new(stream.try_clone().unwrap());
    let mut request_line = String::new();
    if reader.read_line(&mut request_line).is_err() {
        return;
    }
    let mut content_length = 0usize;
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line).is_err() || line == "\r\n" || line.is_empty() {
            break;
        }
        if let Some((k, v)) = line.split_once(':') {
            if k.eq_ignore_ascii_case("content-length") {
                content_length = v.trim().parse().unwrap_or(0);
            }
        }
    }
    let mut body = vec![0u8; content_length];
    let _ = reader.read_exact(&mut body);
    if fail {
        return respond(stream, "503 Service Unavailable", "{}");
    }
    let path = request_line.split_whitespace().nth(1).unwrap_or("");
    match path {
        "/v1/info" => respond(
            stream,
            "200 OK",
            &serde_json::to_string(&scorer.info()).unwrap(),
        ),
        "/v1/mask_predict" => match serde_json::from_slice::<MaskQuery>(&body) {
            Ok(q) => {
                if let Some(bad) = q.candidates.iter().find(|c| !vocab.contains(c)) {
                    return respond(
                        stream,
                        "400 Bad Request",
                        &format!("{{\"error\":\"unknown piece {bad}\"}}"),
                    );
                }
                respond(
                    stream,
                    "200 OK",
                    &serde_json::to_string(&scorer.mask_predict(&q)).unwrap(),
                )
            }
            Err(e) => respond(stream, "400 Bad Request", &format!("{{\"error\":\"{e}\"}}")),
        },
        "/v1/hidden_states" => match serde_json::from_slice::<HiddenStatesRequest>(&body) {
            Ok(r) => {
                let mut v = serde_json::to_value(scorer.hidden_states(&r)).unwrap();
                // the wire format carries only states and dimension
                v.as_object_mut().unwrap().remove("layers");
                respond(stream, "200 OK", &v.to_string())
            }
            Err(e) => respond(stream, "400 Bad Request", &format!("{{\"error\":\"{e}\"}}")),
        },
        _ => respond(stream, "404 Not Found", "{}"),
    }
}

/// Reference greedy segmentation written independently of the library:
/// at each position try every end from the longest down.
pub fn naive_greedy(word: &str, pieces: &std::collections::HashSet<String>) -> Option<Vec<String>> {
    let chars: Vec<char> = word.chars().collect();
    let mut out = Vec::new();
    let mut start = 0;
    while start < chars.len() {
        let hit = (start + 1..=chars.len()).rev().find_map(|end| {
            let body: String = chars[start..end].iter().collect();
            let piece = if start == 0 {
                body
            } else {
                format!("##{body}")
            };
            pieces.contains(&piece).then_some((piece, end))
        })?;
        out.push(hit.0);
        start = hit.1;
    }
    Some(out)
}

pub mod gen {
    use morphoprobe::analysis::EmbeddingRecord;
    use morphoprobe::tokenization::SPECIAL_PIECES;
    use morphoprobe::{ArticleType, Number, ProbeResult, Scheme, Variant};
    use rand::seq::IndexedRandom;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'e', 'f'];

    pub fn word<R: Rng>(rng: &mut R, max_len: usize) -> String {
        let len = rng.random_range(1..=max_len);
        (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
    }

    /// `size` distinct pieces: the specials, then random word-initial and
    /// continuation pieces. Single letters are left out on purpose so
    /// some words have no segmentation.
    pub fn vocab_pieces<R: Rng>(rng: &mut R, size: usize) -> Vec<String> {
        let mut seen: std::collections::HashSet<String> =
            SPECIAL_PIECES.iter().map(|s| s.to_string()).collect();
        let mut pieces: Vec<String> = SPECIAL_PIECES.iter().map(|s| s.to_string()).collect();
        while pieces.len() < size {
            let body = word(rng, 5);
            let piece = if rng.random_bool(0.5) {
                format!("##{body}")
            } else {
                body
            };
            if seen.insert(piece.clone()) {
                pieces.push(piece);
            }
        }
        pieces
    }

    /// Gaussian clusters around random class means.
    pub fn lda_instance<R: Rng>(rng: &mut R, dim: usize, classes: usize) -> Vec<EmbeddingRecord> {
        let unit = Normal::new(0.0, 1.0).unwrap();
        let mut out = Vec::new();
        for c in 0..classes {
            let mean: Vec<f64> = (0..dim).map(|_| 3.0 * unit.sample(rng)).collect();
            let scale: Vec<f64> = (0..dim).map(|_| rng.random_range(0.5..2.0)).collect();
            let n = rng.random_range(dim + 3..dim + 15);
            for i in 0..n {
                out.push(EmbeddingRecord {
                    wordform: format!("c{c}w{i}"),
                    class_label: format!("class{c}"),
                    vector: (0..dim)
                        .map(|d| mean[d] + scale[d] * unit.sample(rng))
                        .collect(),
                });
            }
        }
        out
    }

    pub fn probe_results<R: Rng>(rng: &mut R, n: usize) -> Vec<ProbeResult> {
        let unit = Normal::new(0.0, 3.0).unwrap();
        (0..n)
            .map(|i| ProbeResult {
                lemma: format!("l{i}"),
                wordform: format!("w{i}"),
                number: *[Number::Singular, Number::Plural].choose(rng).unwrap(),
                scheme: *Scheme::ALL.choose(rng).unwrap(),
                variant: *Variant::ALL.choose(rng).unwrap(),
                article_type: *[ArticleType::Definite, ArticleType::Indefinite]
                    .choose(rng)
                    .unwrap(),
                log_odds: unit.sample(rng),
                correct: rng.random_bool(0.5),
                gender: None,
                tokens: Vec::new(),
            })
            .collect()
    }
}
