use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use aeon_core::backends::{
    BackendError, EmbeddedText, EmbeddingProvider, MaskedLmProvider, ReferenceBackend,
    ReferenceBackendConfig, RemoteBackend, RemoteBackendConfig,
};
use aeon_core::config::BackendDescriptor;
use aeon_core::corpus::{
    self, classify, classify_human, parse_record, read_corpus, ScoredLine, ScoredRecord, Source,
};
use aeon_core::metrics::{evaluate_metric, ScoredItem};
use aeon_core::syneval::MaskedQuery;
use aeon_core::{Execution, TokenSequence};
use anyhow::{anyhow, Context, Result};
use serde::Serialize;

use crate::args::{
    BackendArgs, BackendKind, EvaluateCmd, RankCmd, ScoreCmd, SelectCmd, SummarizeCmd, Target,
};

/// Exit status of a command that did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Complete,
    Partial,
}

fn open_output(out: Option<&PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: Serialize>(out: Option<&PathBuf>, value: &T) -> Result<()> {
    let mut w = open_output(out)?;
    serde_json::to_writer(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn open_input(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Non-blank lines with their 1-based line numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line.with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Parses every line of a scored file, keeping the raw text for pass-through.
fn read_scored(path: &Path) -> Result<Vec<(String, ScoredRecord)>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, text)| {
            let line: ScoredLine = serde_json::from_str(&text)
                .with_context(|| format!("{}: line {n} is not a scored record", path.display()))?;
            Ok((text, line.scored))
        })
        .collect()
}

/// The provider behind both scoring roles.
enum Backend {
    Reference(ReferenceBackend),
    Remote(RemoteBackend),
}

impl EmbeddingProvider for Backend {
    fn dim(&self) -> usize {
        match self {
            Self::Reference(b) => b.dim(),
            Self::Remote(b) => b.dim(),
        }
    }

    fn embed(&self, seq: &TokenSequence) -> Result<EmbeddedText, BackendError> {
        match self {
            Self::Reference(b) => b.embed(seq),
            Self::Remote(b) => b.embed(seq),
        }
    }

    fn embed_batch(&self, seqs: &[&TokenSequence]) -> Result<Vec<EmbeddedText>, BackendError> {
        match self {
            Self::Reference(b) => b.embed_batch(seqs),
            Self::Remote(b) => b.embed_batch(seqs),
        }
    }
}

impl MaskedLmProvider for Backend {
    fn token_probability(&self, q: &MaskedQuery<'_>) -> Result<f64, BackendError> {
        match self {
            Self::Reference(b) => b.token_probability(q),
            Self::Remote(b) => b.token_probability(q),
        }
    }

    fn token_probabilities(&self, qs: &[MaskedQuery<'_>]) -> Result<Vec<f64>, BackendError> {
        match self {
            Self::Reference(b) => b.token_probabilities(qs),
            Self::Remote(b) => b.token_probabilities(qs),
        }
    }
}

fn build_backend(args: &BackendArgs) -> Result<(Backend, BackendDescriptor)> {
    match args.backend {
        BackendKind::Reference => {
            let cfg = ReferenceBackendConfig {
                dim: args.dim,
                seed: args.seed,
            };
            let descriptor = BackendDescriptor::Reference {
                seed: args.seed,
                dim: args.dim,
            };
            Ok((Backend::Reference(ReferenceBackend::new(cfg)?), descriptor))
        }
        BackendKind::Remote => {
            let endpoint = args
                .endpoint
                .clone()
                .ok_or_else(|| anyhow!("--backend remote needs --endpoint or AEON_ENDPOINT"))?;
            let cfg = RemoteBackendConfig {
                endpoint: endpoint.clone(),
                timeout_ms: args.timeout_ms,
                max_batch: args.max_batch,
                max_inflight: args.max_inflight,
            };
            let remote = RemoteBackend::connect(cfg)
                .with_context(|| format!("cannot reach model server at {endpoint}"))?;
            let descriptor = BackendDescriptor::Remote {
                endpoint,
                model: remote.info().model.clone(),
                dim: remote.info().dim,
            };
            Ok((Backend::Remote(remote), descriptor))
        }
    }
}

pub fn score(cmd: &ScoreCmd) -> Result<Outcome> {
    let mut config = cmd.run_config();
    config.validate()?;
    let read = read_corpus(open_input(&cmd.corpus)?);
    for e in &read.errors {
        eprintln!("skipped: {e}");
    }
    let (backend, descriptor) = build_backend(&cmd.backend)?;
    config.backend = descriptor;

    let exec = Execution::with_jobs(cmd.jobs);
    let results = corpus::score_corpus(&read.records, &backend, &backend, &config, exec)?;

    let mut out = open_output(cmd.out.as_ref())?;
    let mut failed = 0;
    for result in results {
        match result {
            Ok(scored) => {
                let line = ScoredLine {
                    scored,
                    config: config.clone(),
                };
                serde_json::to_writer(&mut out, &line)?;
                writeln!(out)?;
            }
            Err(f) => {
                failed += 1;
                eprintln!("failed: {f}");
            }
        }
    }
    out.flush()?;
    let scored = read.records.len() - failed;
    eprintln!(
        "scored {scored} record(s); {} malformed line(s), {failed} scoring failure(s)",
        read.errors.len()
    );
    Ok(if read.errors.is_empty() && failed == 0 {
        Outcome::Complete
    } else {
        Outcome::Partial
    })
}

pub fn evaluate(cmd: &EvaluateCmd) -> Result<Outcome> {
    let mut items = Vec::new();
    for (n, (_, sr)) in read_scored(&cmd.scored)?.into_iter().enumerate() {
        let human = sr.record.human.as_ref().ok_or_else(|| {
            anyhow!(
                "record {:?} (entry {}) is missing field \"human\"",
                sr.record.id,
                n + 1
            )
        })?;
        let (score, human_value) = match cmd.target {
            Target::Consistency => (sr.sem.value, human.consistency),
            Target::Naturalness => (sr.nat.value, human.naturalness),
        };
        items.push(ScoredItem::new(score, human_value, cmd.cutoff)?);
    }
    let report = evaluate_metric(&items)?;
    eprintln!(
        "AP {:.4}  AUC {:.4}  PCC {:.4}  ({} items, {} positive{})",
        report.ap,
        report.auc,
        report.pcc,
        report.n_items,
        report.n_positive,
        if report.tied_scores {
            ", tied scores: AP is order-dependent"
        } else {
            ""
        }
    );
    write_json(cmd.out.as_ref(), &report)?;
    Ok(Outcome::Complete)
}

fn write_lines<'a>(
    out: Option<&PathBuf>,
    lines: impl IntoIterator<Item = &'a str>,
) -> Result<usize> {
    let mut w = open_output(out)?;
    let mut n = 0;
    for l in lines {
        writeln!(w, "{l}")?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

pub fn select(cmd: &SelectCmd) -> Result<Outcome> {
    let th = cmd.thresholds.thresholds();
    th.validate()?;
    let rows = read_scored(&cmd.scored)?;
    let kept = rows
        .iter()
        .filter(|(_, sr)| corpus::passes(sr, &th))
        .map(|(text, _)| text.as_str());
    let n = write_lines(cmd.out.as_ref(), kept)?;
    eprintln!("selected {n} of {} record(s)", rows.len());
    Ok(Outcome::Complete)
}

pub fn rank(cmd: &RankCmd) -> Result<Outcome> {
    let rows = read_scored(&cmd.scored)?;
    let (lines, records): (Vec<String>, Vec<ScoredRecord>) = rows.into_iter().unzip();
    let order = corpus::rank_indices(&records, cmd.rank_key.into());
    write_lines(cmd.out.as_ref(), order.iter().map(|&i| lines[i].as_str()))?;
    Ok(Outcome::Complete)
}

pub fn summarize(cmd: &SummarizeCmd) -> Result<Outcome> {
    let source: Source = cmd.source.into();
    let th = cmd.thresholds.thresholds();
    th.validate()?;
    let mut classified = Vec::new();
    match source {
        Source::Human => {
            for (n, text) in read_lines(&cmd.input)? {
                let record = parse_record(n, &text)?;
                classified.push(classify_human(&record)?);
            }
        }
        Source::Automatic => {
            for (_, sr) in read_scored(&cmd.input)? {
                classified.push(classify(&sr, &th, Source::Automatic)?);
            }
        }
    }
    let report = corpus::summarize(&classified);
    eprintln!(
        "{} record(s): {:.1}% inconsistent, {:.1}% unnatural, {:.1}% false alarms",
        report.total,
        100.0 * report.inconsistent.fraction,
        100.0 * report.unnatural.fraction,
        100.0 * report.false_alarm.fraction
    );
    write_json(cmd.out.as_ref(), &report)?;
    Ok(Outcome::Complete)
}
