use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use morphoprobe::analysis::embedding::{read_store, read_store_csv, write_store};
use morphoprobe::analysis::ols::rebase_log10;
use morphoprobe::digest::sha256_hex;
use morphoprobe::lexicon::{write_rejects, ParsedLexicon};
use morphoprobe::pipeline::{
    classify_lexicon, collect_embeddings, scheme_counts, write_classification, write_projections,
};
use morphoprobe::probe::{expected_result_count, run_probe_with_sink, ResultsWriter};
use morphoprobe::{
    accuracy_table, freq_by_scheme, grouped_summary, lda_fit, load_vocab, logodds_regression,
    parse_lexicon, BiasTable, GroupKey, MockConfig, ProbeOptions, RemoteConfig, ScorerHandle,
    Vocabulary,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::settings::{ScorerChoice, Settings};

const GROUPINGS: [&[GroupKey]; 4] = [
    &[GroupKey::Number],
    &[GroupKey::Number, GroupKey::Scheme],
    &[GroupKey::Number, GroupKey::Scheme, GroupKey::Variant],
    &[
        GroupKey::Number,
        GroupKey::Scheme,
        GroupKey::Variant,
        GroupKey::ArticleType,
    ],
];

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn vocab(settings: &Settings) -> Result<Arc<Vocabulary>, CliError> {
    let path = settings.vocab_path()?;
    let v = load_vocab(&read_text(path)?).map_err(|e| CliError::from(e).context(path.display()))?;
    log::info!("vocabulary: {} pieces, digest {}", v.len(), v.digest());
    Ok(Arc::new(v))
}

fn lexicon(settings: &Settings) -> Result<ParsedLexicon, CliError> {
    let path = settings.lexicon_path()?;
    let parsed =
        parse_lexicon(&read_text(path)?).map_err(|e| CliError::from(e).context(path.display()))?;
    if !parsed.rejects.is_empty() {
        log::warn!(
            "{} lexicon rows rejected (irregular or malformed)",
            parsed.rejects.len()
        );
    }
    if parsed.lexicon.is_empty() {
        return Err(CliError::input(format!(
            "{}: no usable entries",
            path.display()
        )));
    }
    Ok(parsed)
}

fn scorer(settings: &Settings, vocab: Arc<Vocabulary>) -> Result<ScorerHandle, CliError> {
    let handle = match settings.scorer_choice()? {
        ScorerChoice::Remote { url } => ScorerHandle::remote(vocab, RemoteConfig::new(url.clone())),
        ScorerChoice::Mock { seed, bias } => {
            let bias: BiasTable = bias.parse().map_err(|e| CliError::input(format!("{e}")))?;
            ScorerHandle::mock(vocab, MockConfig::new(*seed).with_bias(bias))
        }
    };
    let handle = handle.with_concurrency(settings.concurrency);
    let info = handle.handshake()?;
    log::info!("scorer: depth {}, dimension {}", info.depth, info.dimension);
    Ok(handle)
}

struct Output {
    dir: PathBuf,
    digest: String,
}

impl Output {
    fn new(settings: &Settings, inputs: &[(&str, &str)]) -> Result<Self, CliError> {
        std::fs::create_dir_all(&settings.out)
            .map_err(|e| CliError::input(format!("{}: {e}", settings.out.display())))?;
        let digest = settings.digest(inputs);
        log::info!("config digest {digest}");
        Ok(Output {
            dir: settings.out.clone(),
            digest,
        })
    }

    fn comment(&self) -> String {
        format!("config_digest={}", self.digest)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        let file =
            File::create(&path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        println!("{}", path.display());
        Ok(BufWriter::new(file))
    }

    /// Writes `value` as pretty JSON with a leading `config_digest` field.
    fn json(&self, name: &str, value: impl Serialize) -> Result<(), CliError> {
        let mut object = serde_json::Map::new();
        object.insert("config_digest".into(), self.digest.clone().into());
        match serde_json::to_value(value)? {
            Value::Object(fields) => object.extend(fields),
            other => {
                object.insert("value".into(), other);
            }
        }
        let mut out = self.create(name)?;
        serde_json::to_writer_pretty(&mut out, &Value::Object(object))?;
        writeln!(out)?;
        out.flush()?;
        Ok(())
    }
}

pub fn classify(settings: &Settings) -> Result<(), CliError> {
    let vocab = vocab(settings)?;
    let parsed = lexicon(settings)?;
    let lex = &parsed.lexicon;
    let out = Output::new(
        settings,
        &[("vocab", vocab.digest()), ("lexicon", &lex.source_digest)],
    )?;
    let records = classify_lexicon(lex, &vocab);
    let counts = scheme_counts(&records);

    let mut csv = out.create("classification.csv")?;
    write_classification(lex, &records, &vocab, Some(&out.comment()), &mut csv)?;
    csv.flush()?;
    let mut rejects = out.create("rejects.csv")?;
    write_rejects(&parsed.rejects, &mut rejects).map_err(|e| CliError::input(e.to_string()))?;
    rejects.flush()?;
    out.json(
        "summary.json",
        json!({
            "vocab_digest": vocab.digest(),
            "lexicon_digest": lex.source_digest,
            "entries": lex.len(),
            "rejected": parsed.rejects.len(),
            "counts": counts,
        }),
    )
}

pub fn probe(settings: &Settings) -> Result<(), CliError> {
    let vocab = vocab(settings)?;
    let parsed = lexicon(settings)?;
    let lex = &parsed.lexicon;
    let options = ProbeOptions {
        variants: settings.variants.iter().copied().collect(),
        article_types: settings.articles.iter().copied().collect(),
    };
    let expected = expected_result_count(lex, &vocab, &options)?;
    let handle = scorer(settings, Arc::clone(&vocab))?;
    let out = Output::new(
        settings,
        &[("vocab", vocab.digest()), ("lexicon", &lex.source_digest)],
    )?;
    log::info!("probing {expected} presentations");

    let mut writer = ResultsWriter::new(out.create("probe_results.csv")?, Some(&out.comment()))?;
    let results = run_probe_with_sink(lex, &handle, &options, |chunk| {
        log::debug!("flushing {} results", chunk.len());
        writer.write(chunk)
    });
    // whatever completed is on disk by now
    writer.into_inner()?.flush()?;
    let results = results?;

    let table = accuracy_table(&results)?;
    out.json("accuracy.json", &table)?;
    let summaries: Vec<Value> = GROUPINGS
        .iter()
        .map(|keys| {
            json!({
                "keys": keys.iter().map(|k| k.as_str()).collect::<Vec<_>>(),
                "groups": grouped_summary(&results, keys),
            })
        })
        .collect();
    out.json("summaries.json", json!({ "groupings": summaries }))?;

    if lex.has_frequencies() {
        let freqs: HashMap<String, f64> = lex
            .iter()
            .filter_map(|e| {
                e.log_frequency
                    .map(|f| (e.lemma.clone(), rebase_log10(f, settings.log_base)))
            })
            .collect();
        match logodds_regression(&results, &freqs) {
            Ok(summary) => out.json("logodds_regression.json", &summary)?,
            Err(e) => log::warn!("log-odds regression skipped: {e}"),
        }
    }
    Ok(())
}

pub fn embed(settings: &Settings) -> Result<(), CliError> {
    let vocab = vocab(settings)?;
    let parsed = lexicon(settings)?;
    let lex = &parsed.lexicon;
    let handle = scorer(settings, Arc::clone(&vocab))?;
    let out = Output::new(
        settings,
        &[("vocab", vocab.digest()), ("lexicon", &lex.source_digest)],
    )?;
    let (records, report) = collect_embeddings(lex, &handle, &settings.layers)?;
    let mut store = out.create("embeddings.bin")?;
    write_store(&records, &mut store)?;
    store.flush()?;
    out.json(
        "filter_report.json",
        json!({
            "layers": settings.layers,
            "records": records.len(),
            "dimension": records.first().map_or(0, |r| r.vector.len()),
            "kept": report.kept,
            "excluded_token_count": report.excluded_token_count,
            "excluded_unk": report.excluded_unk,
        }),
    )
}

pub fn lda(settings: &Settings) -> Result<(), CliError> {
    let path = settings.store_path()?;
    let bytes =
        std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    let mut records = if is_csv {
        read_store_csv(bytes.as_slice())
    } else {
        read_store(bytes.as_slice())
    }
    .map_err(|e| CliError::from(e).context(path.display()))?;
    if let Some(classes) = &settings.classes {
        let keep: BTreeSet<&str> = classes.iter().map(String::as_str).collect();
        records.retain(|r| keep.contains(r.class_label.as_str()));
        if records.is_empty() {
            return Err(CliError::input(format!(
                "no records in classes {classes:?}"
            )));
        }
    }
    let out = Output::new(settings, &[("store", &sha256_hex(&bytes))])?;
    let model = lda_fit(&records, settings.shrinkage)?;
    let mut csv = out.create("projections.csv")?;
    write_projections(&model, &records, Some(&out.comment()), &mut csv)?;
    csv.flush()?;
    out.json("lda_model.json", &model)
}

pub fn freq(settings: &Settings) -> Result<(), CliError> {
    let vocab = vocab(settings)?;
    let parsed = lexicon(settings)?;
    let lex = &parsed.lexicon;
    let out = Output::new(
        settings,
        &[("vocab", vocab.digest()), ("lexicon", &lex.source_digest)],
    )?;
    let records = classify_lexicon(lex, &vocab);
    let summary = freq_by_scheme(&lex.entries, &records, settings.log_base)?;
    out.json(
        "freq_regression.json",
        json!({ "log_base": settings.log_base, "regression": summary }),
    )
}
