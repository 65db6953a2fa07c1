//! Span-level weak-match micro scores and token-level macro BIO2 scores.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{decode_spans, mentions_to_bio2, Corpus, Label, MentionSpan, Sentence};
use crate::error::{Error, Result};

/// Anything that labels a tokenized sentence.
pub trait Annotator: Sync {
    fn label(&self, sentence: &Sentence) -> Vec<Label>;
}

impl<F> Annotator for F
where
    F: Fn(&Sentence) -> Vec<Label> + Sync,
{
    fn label(&self, sentence: &Sentence) -> Vec<Label> {
        self(sentence)
    }
}

/// Weak annotation match: one span contains an endpoint of the other.
///
/// Endpoints are compared as written on the offsets, so spans that merely
/// touch (`[0,3)` and `[3,5)`) match. Spans from different documents never
/// match.
pub fn weak_match(p: &MentionSpan, g: &MentionSpan) -> bool {
    if p.doc_id != g.doc_id {
        return false;
    }
    let within = |x: usize, lo: usize, hi: usize| lo <= x && x <= hi;
    within(g.begin, p.begin, p.end)
        || within(g.end, p.begin, p.end)
        || within(p.begin, g.begin, g.end)
        || within(p.end, g.begin, g.end)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanCounts {
    pub tp: usize,
    pub fp: usize,
    /// Always 0; true negatives over spans are not defined.
    pub tn: usize,
    pub r#fn: usize,
}

impl std::ops::Add for SpanCounts {
    type Output = SpanCounts;

    fn add(self, o: SpanCounts) -> SpanCounts {
        SpanCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            tn: self.tn + o.tn,
            r#fn: self.r#fn + o.r#fn,
        }
    }
}

impl std::iter::Sum for SpanCounts {
    fn sum<I: Iterator<Item = SpanCounts>>(iter: I) -> Self {
        iter.fold(SpanCounts::default(), |a, b| a + b)
    }
}

pub fn count_document(predicted: &[MentionSpan], gold: &[MentionSpan]) -> SpanCounts {
    let tp = predicted
        .iter()
        .filter(|p| gold.iter().any(|g| weak_match(p, g)))
        .count();
    let matched_gold = gold
        .iter()
        .filter(|g| predicted.iter().any(|p| weak_match(p, g)))
        .count();
    SpanCounts {
        tp,
        fp: predicted.len() - tp,
        tn: 0,
        r#fn: gold.len() - matched_gold,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NerReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub totals: SpanCounts,
}

pub fn micro_scores(counts: &[SpanCounts]) -> NerReport {
    let totals: SpanCounts = counts.iter().copied().sum();
    let precision = ratio(totals.tp, totals.tp + totals.fp);
    let recall = ratio(totals.tp, totals.tp + totals.r#fn);
    NerReport {
        precision,
        recall,
        f1: harmonic(precision, recall),
        totals,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub label: Label,
    pub tp: usize,
    pub fp: usize,
    pub r#fn: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BioReport {
    /// One entry per class in `B, I, O` order.
    pub classes: Vec<ClassScores>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub tokens: usize,
}

/// Macro-averaged one-vs-rest precision and recall over `B, I, O`.
///
/// A class that appears in neither gold nor predictions scores 1 on both;
/// otherwise an empty denominator scores 0.
pub fn macro_bio(predicted: &[Vec<Label>], gold: &[Vec<Label>]) -> Result<BioReport> {
    if predicted.len() != gold.len() {
        return Err(Error::Validation(format!(
            "{} predicted sequences for {} gold sequences",
            predicted.len(),
            gold.len()
        )));
    }
    let mut counts = [[0usize; 3]; 3]; // [class][tp, fp, fn]
    let mut tokens = 0;
    for (idx, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::Validation(format!(
                "sequence {idx}: {} predicted labels for {} gold labels",
                p.len(),
                g.len()
            )));
        }
        tokens += p.len();
        for (&pl, &gl) in p.iter().zip(g) {
            if pl == gl {
                counts[pl.index()][0] += 1;
            } else {
                counts[pl.index()][1] += 1;
                counts[gl.index()][2] += 1;
            }
        }
    }
    let classes: Vec<ClassScores> = Label::ALL
        .iter()
        .map(|&label| {
            let [tp, fp, r#fn] = counts[label.index()];
            let absent = tp + fp + r#fn == 0;
            let score = |den: usize| if absent { 1.0 } else { ratio(tp, den) };
            ClassScores {
                label,
                tp,
                fp,
                r#fn,
                precision: score(tp + fp),
                recall: score(tp + r#fn),
            }
        })
        .collect();
    let n = classes.len() as f64;
    let macro_precision = classes.iter().map(|c| c.precision).sum::<f64>() / n;
    let macro_recall = classes.iter().map(|c| c.recall).sum::<f64>() / n;
    Ok(BioReport {
        classes,
        macro_precision,
        macro_recall,
        macro_f1: harmonic(macro_precision, macro_recall),
        tokens,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    Span,
    Bio,
    #[default]
    Both,
}

impl EvalMode {
    fn span(self) -> bool {
        self != EvalMode::Bio
    }

    fn bio(self) -> bool {
        self != EvalMode::Span
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::Span => "span",
            EvalMode::Bio => "bio",
            EvalMode::Both => "both",
        })
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "span" => Ok(EvalMode::Span),
            "bio" => Ok(EvalMode::Bio),
            "both" => Ok(EvalMode::Both),
            _ => Err(Error::Config(format!(
                "unknown evaluation mode {s:?} (span, bio, both)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocumentCounts {
    pub doc_id: String,
    pub counts: SpanCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Configuration that produced the predictions.
    pub descriptor: serde_json::Value,
    pub ner: Option<NerReport>,
    pub bio: Option<BioReport>,
    pub documents: Vec<DocumentCounts>,
}

/// Predicted and gold material of one evaluation unit.
struct Unit {
    doc_id: String,
    predicted_spans: Vec<MentionSpan>,
    gold_spans: Option<Vec<MentionSpan>>,
    predicted_labels: Vec<Vec<Label>>,
    gold_labels: Vec<Option<Vec<Label>>>,
}

fn assemble(units: Vec<Unit>, mode: EvalMode, descriptor: serde_json::Value) -> Result<EvalReport> {
    let mut documents = Vec::new();
    let mut predicted = Vec::new();
    let mut gold = Vec::new();
    for u in units {
        if mode.span() {
            let g = u.gold_spans.as_ref().ok_or_else(|| {
                Error::Validation(format!(
                    "{}: no gold mentions for span evaluation",
                    u.doc_id
                ))
            })?;
            documents.push(DocumentCounts {
                counts: count_document(&u.predicted_spans, g),
                doc_id: u.doc_id.clone(),
            });
        }
        if mode.bio() {
            for (p, g) in u.predicted_labels.into_iter().zip(u.gold_labels) {
                let g = g.ok_or_else(|| {
                    Error::Validation(format!("{}: no gold labels for BIO evaluation", u.doc_id))
                })?;
                predicted.push(p);
                gold.push(g);
            }
        }
    }
    let ner = mode.span().then(|| {
        let counts: Vec<SpanCounts> = documents.iter().map(|d| d.counts).collect();
        micro_scores(&counts)
    });
    let bio = if mode.bio() {
        Some(macro_bio(&predicted, &gold)?)
    } else {
        None
    };
    Ok(EvalReport {
        descriptor,
        ner,
        bio,
        documents,
    })
}

/// Runs an annotator over every document of a gold corpus and scores it.
pub fn evaluate(
    annotator: &dyn Annotator,
    corpus: &Corpus,
    mode: EvalMode,
    descriptor: serde_json::Value,
) -> Result<EvalReport> {
    let units = corpus
        .documents
        .par_iter()
        .map(|doc| {
            let predicted_labels: Vec<Vec<Label>> =
                doc.sentences.iter().map(|s| annotator.label(s)).collect();
            let predicted_spans = doc
                .sentences
                .iter()
                .zip(&predicted_labels)
                .flat_map(|(s, l)| decode_spans(s, l, &doc.doc_id))
                .collect();
            Unit {
                doc_id: doc.doc_id.clone(),
                predicted_spans,
                gold_spans: doc.gold_mentions.clone(),
                predicted_labels,
                gold_labels: doc.sentences.iter().map(|s| s.labels.clone()).collect(),
            }
        })
        .collect();
    assemble(units, mode, descriptor)
}

/// Scores an annotator on loose labeled sentences; each sentence is its own
/// document, with gold mentions decoded from its labels.
pub fn evaluate_sentences(
    annotator: &dyn Annotator,
    sentences: &[Sentence],
    mode: EvalMode,
    descriptor: serde_json::Value,
) -> Result<EvalReport> {
    let units = sentences
        .par_iter()
        .enumerate()
        .map(|(idx, s)| {
            let doc_id = format!("s{}", idx + 1);
            let predicted = annotator.label(s);
            Unit {
                predicted_spans: decode_spans(s, &predicted, &doc_id),
                gold_spans: s.labels.as_ref().map(|g| decode_spans(s, g, &doc_id)),
                predicted_labels: vec![predicted],
                gold_labels: vec![s.labels.clone()],
                doc_id,
            }
        })
        .collect();
    assemble(units, mode, descriptor)
}

/// Scores precomputed annotations against a gold corpus. Documents are
/// paired by id and must share their text; the predicted corpus carries its
/// mentions in `gold_mentions`.
pub fn evaluate_annotations(
    predicted: &Corpus,
    gold: &Corpus,
    mode: EvalMode,
    descriptor: serde_json::Value,
) -> Result<EvalReport> {
    let by_id: HashMap<&str, &crate::corpus::Document> = predicted
        .documents
        .iter()
        .map(|d| (d.doc_id.as_str(), d))
        .collect();
    let units = gold
        .documents
        .iter()
        .map(|g| {
            let p = by_id.get(g.doc_id.as_str()).ok_or_else(|| {
                Error::Validation(format!("{}: no annotations for gold document", g.doc_id))
            })?;
            if p.text != g.text {
                return Err(Error::Validation(format!(
                    "{}: annotated text differs from gold text",
                    g.doc_id
                )));
            }
            let spans = p.gold_mentions.clone().unwrap_or_default();
            let predicted_labels = g
                .sentences
                .iter()
                .map(|s| mentions_to_bio2(s, &spans))
                .collect::<Result<_>>()?;
            Ok(Unit {
                doc_id: g.doc_id.clone(),
                predicted_spans: spans,
                gold_spans: g.gold_mentions.clone(),
                predicted_labels,
                gold_labels: g.sentences.iter().map(|s| s.labels.clone()).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if predicted.documents.len() != gold.documents.len() {
        return Err(Error::Validation(format!(
            "{} annotated documents for {} gold documents",
            predicted.documents.len(),
            gold.documents.len()
        )));
    }
    assemble(units, mode, descriptor)
}

fn describe(descriptor: &serde_json::Value) -> String {
    match descriptor {
        serde_json::Value::String(s) => s.clone(),
        serde_json::Value::Object(map) => {
            if let Some(label) = map.get("label").and_then(|v| v.as_str()) {
                return label.to_string();
            }
            let mut parts = Vec::new();
            for key in ["encoder", "network"] {
                if let Some(v) = map.get(key).and_then(|v| v.as_str()) {
                    parts.push(v.to_string());
                }
            }
            if parts.is_empty() {
                descriptor.to_string()
            } else {
                parts.join("+")
            }
        }
        serde_json::Value::Null => "-".into(),
        other => other.to_string(),
    }
}

/// Fixed-width table with one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}",
        "config", "NER-P", "NER-R", "NER-F1", "BIO-P", "BIO-R", "BIO-F1"
    );
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<16} {:>8} {:>8} {:>8} {:>10} {:>10} {:>10}",
            describe(&r.descriptor),
            cell(r.ner.as_ref().map(|n| n.precision)),
            cell(r.ner.as_ref().map(|n| n.recall)),
            cell(r.ner.as_ref().map(|n| n.f1)),
            cell(r.bio.as_ref().map(|b| b.macro_precision)),
            cell(r.bio.as_ref().map(|b| b.macro_recall)),
            cell(r.bio.as_ref().map(|b| b.macro_f1)),
        );
    }
    out
}

/// One JSON record per report, without per-document counts.
pub fn render_jsonl(reports: &[EvalReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        let record = serde_json::json!({
            "descriptor": r.descriptor,
            "ner": r.ner,
            "bio": r.bio,
            "documents": r.documents.len(),
        });
        out.push_str(&serde_json::to_string(&record)?);
        out.push('\n');
    }
    Ok(out)
}
