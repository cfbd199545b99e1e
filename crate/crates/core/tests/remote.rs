mod common;

use std::sync::atomic::Ordering;
use std::sync::Arc;
use std::time::Duration;

use common::{fixture_lexicon, fixture_vocab, spawn_server};
use morphoprobe::scorer::{RemoteScorer, ScorerHandle};
use morphoprobe::{
    run_probe, BiasTable, MaskQuery, MockConfig, ProbeError, ProbeOptions, RemoteConfig,
    ScorerError,
};

fn fast(url: &str) -> RemoteConfig {
    RemoteConfig::new(url)
        .with_backoff(Duration::from_millis(5))
        .with_timeout(Duration::from_secs(5))
}

fn query() -> MaskQuery {
    MaskQuery {
        tokens: vec![
            "[CLS]".into(),
            "[MASK]".into(),
            "perro".into(),
            "[SEP]".into(),
        ],
        mask_index: 1,
        candidates: vec!["los".into(), "el".into()],
    }
}

#[test]
fn remote_matches_in_process_mock() {
    let vocab = Arc::new(fixture_vocab());
    let config = MockConfig::new(7);
    let server = spawn_server(Arc::clone(&vocab), config.clone(), 0);
    let remote = ScorerHandle::remote(Arc::clone(&vocab), fast(&server.url));
    let local = ScorerHandle::mock(Arc::clone(&vocab), config);

    let info = remote.handshake().unwrap();
    assert_eq!(info.vocab_digest, vocab.digest());
    assert_eq!(
        remote.score_masked(&query()).unwrap(),
        local.score_masked(&query()).unwrap()
    );

    let frame: Vec<String> = query().tokens;
    let r = remote.fetch_hidden_states(&frame, &[9, 12]).unwrap();
    let l = local.fetch_hidden_states(&frame, &[9, 12]).unwrap();
    assert_eq!(r, l);
    assert_eq!(r.layers, vec![9, 12]);
}

#[test]
fn probe_over_http_equals_mock_probe() {
    let vocab = Arc::new(fixture_vocab());
    let config = MockConfig::new(3).with_bias(BiasTable::agreement());
    let server = spawn_server(Arc::clone(&vocab), config.clone(), 0);
    let lexicon = fixture_lexicon("lexicon10.tsv");
    let options = ProbeOptions::default();
    let remote = ScorerHandle::remote(Arc::clone(&vocab), fast(&server.url)).with_concurrency(4);
    let local = ScorerHandle::mock(vocab, config);
    assert_eq!(
        run_probe(&lexicon, &remote, &options).unwrap(),
        run_probe(&lexicon, &local, &options).unwrap()
    );
}

#[test]
fn transient_failures_are_retried() {
    let vocab = Arc::new(fixture_vocab());
    let server = spawn_server(Arc::clone(&vocab), MockConfig::new(1), 2);
    let remote = ScorerHandle::remote(vocab, fast(&server.url));
    assert!(remote.handshake().is_ok());
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn persistent_failure_is_unavailable() {
    let vocab = Arc::new(fixture_vocab());
    let server = spawn_server(Arc::clone(&vocab), MockConfig::new(1), usize::MAX);
    let remote = ScorerHandle::remote(vocab, fast(&server.url));
    assert!(matches!(
        remote.handshake(),
        Err(ScorerError::ScorerUnavailable(_))
    ));
    // one attempt plus three retries
    assert_eq!(server.hits.load(Ordering::SeqCst), 4);
}

#[test]
fn probe_reports_scorer_failure() {
    let vocab = Arc::new(fixture_vocab());
    let server = spawn_server(Arc::clone(&vocab), MockConfig::new(1), usize::MAX);
    let remote = ScorerHandle::remote(vocab, fast(&server.url));
    let err = run_probe(
        &fixture_lexicon("lexicon10.tsv"),
        &remote,
        &ProbeOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(
        err,
        ProbeError::Scorer {
            completed: 0,
            source: ScorerError::ScorerUnavailable(_)
        }
    ));
}

#[test]
fn client_errors_are_not_retried() {
    let vocab = Arc::new(fixture_vocab());
    let server = spawn_server(Arc::clone(&vocab), MockConfig::new(1), 0);
    let client = RemoteScorer::new(fast(&server.url));
    let mut q = query();
    q.candidates = vec!["gatos".into()];
    match client.mask_predict(&q) {
        Err(ScorerError::Rejected { status, message }) => {
            assert_eq!(status, 400);
            assert!(message.contains("gatos"));
        }
        other => panic!("expected a rejection, got {other:?}"),
    }
    assert_eq!(server.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn digest_mismatch_is_fatal() {
    let vocab = Arc::new(fixture_vocab());
    let mut config = MockConfig::new(1);
    config.digest_override = Some("0".repeat(64));
    let server = spawn_server(Arc::clone(&vocab), config, 0);
    let remote = ScorerHandle::remote(vocab, fast(&server.url));
    assert!(matches!(
        remote.handshake(),
        Err(ScorerError::VocabMismatch { .. })
    ));
    assert!(matches!(
        remote.score_masked(&query()),
        Err(ScorerError::VocabMismatch { .. })
    ));
}

#[test]
fn unknown_route_is_rejected() {
    let vocab = Arc::new(fixture_vocab());
    let server = spawn_server(Arc::clone(&vocab), MockConfig::new(1), 0);
    let client = RemoteScorer::new(fast(&format!("{}/nope/", server.url)));
    assert!(matches!(
        client.info(),
        Err(ScorerError::Rejected { status: 404, .. })
    ));
}
