//! Documents, sentences and tokens, plus the BIO2 projection between
//! character-span mentions and per-token labels.
//!
//! All offsets are half-open `[begin, end)` intervals counted in Unicode
//! scalar values (`char`s), not bytes.

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BIO2 label. The declaration order is the argmax tie-break order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    B,
    I,
    O,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::B, Label::I, Label::O];

    pub fn index(self) -> usize {
        match self {
            Label::B => 0,
            Label::I => 1,
            Label::O => 2,
        }
    }

    pub fn from_index(index: usize) -> Option<Label> {
        Label::ALL.get(index).copied()
    }

    /// Parses `B`, `I`, `O`, and typed CoNLL labels such as `B-PER` (the
    /// type suffix is dropped).
    pub fn parse(s: &str) -> Option<Label> {
        match s {
            "B" => Some(Label::B),
            "I" => Some(Label::I),
            "O" => Some(Label::O),
            _ => match s.split_once('-') {
                Some(("B", ty)) if !ty.is_empty() => Some(Label::B),
                Some(("I", ty)) if !ty.is_empty() => Some(Label::I),
                _ => None,
            },
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::B => "B",
            Label::I => "I",
            Label::O => "O",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    pub begin: usize,
    pub end: usize,
}

impl Token {
    pub fn new(text: impl Into<String>, begin: usize, end: usize) -> Self {
        Token {
            text: text.into(),
            begin,
            end,
        }
    }

    fn overlaps(&self, begin: usize, end: usize) -> bool {
        self.begin < end && begin < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<Token>,
    pub labels: Option<Vec<Label>>,
}

impl Sentence {
    pub fn new(tokens: Vec<Token>, labels: Option<Vec<Label>>) -> Result<Self> {
        for pair in tokens.windows(2) {
            if pair[1].begin < pair[0].end {
                return Err(Error::Validation(format!(
                    "tokens {:?} and {:?} overlap or are out of order",
                    pair[0].text, pair[1].text
                )));
            }
        }
        if let Some(t) = tokens.iter().find(|t| t.begin >= t.end) {
            return Err(Error::Validation(format!(
                "empty token interval at {}",
                t.begin
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != tokens.len() {
                return Err(Error::Validation(format!(
                    "{} labels for {} tokens",
                    labels.len(),
                    tokens.len()
                )));
            }
        }
        Ok(Sentence { tokens, labels })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MentionSpan {
    pub doc_id: String,
    pub begin: usize,
    pub end: usize,
}

impl MentionSpan {
    pub fn new(doc_id: impl Into<String>, begin: usize, end: usize) -> Self {
        MentionSpan {
            doc_id: doc_id.into(),
            begin,
            end,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    pub sentences: Vec<Sentence>,
    /// `None` when the source carried no gold annotation at all.
    pub gold_mentions: Option<Vec<MentionSpan>>,
}

impl Document {
    /// Builds a document and checks every offset invariant.
    pub fn new(
        doc_id: impl Into<String>,
        text: impl Into<String>,
        sentences: Vec<Sentence>,
        gold_mentions: Option<Vec<MentionSpan>>,
    ) -> Result<Self> {
        let doc = Document {
            doc_id: doc_id.into(),
            text: text.into(),
            sentences,
            gold_mentions,
        };
        doc.validate()?;
        Ok(doc)
    }

    fn validate(&self) -> Result<()> {
        let bounds = char_boundaries(&self.text);
        let n_chars = bounds.len() - 1;
        let mut last_end = 0;
        for sentence in &self.sentences {
            for token in &sentence.tokens {
                if token.begin >= token.end || token.end > n_chars {
                    return Err(Error::Validation(format!(
                        "{}: token [{}, {}) outside text of length {n_chars}",
                        self.doc_id, token.begin, token.end
                    )));
                }
                if token.begin < last_end {
                    return Err(Error::Validation(format!(
                        "{}: token at {} overlaps its predecessor",
                        self.doc_id, token.begin
                    )));
                }
                last_end = token.end;
                if self.text[bounds[token.begin]..bounds[token.end]] != token.text {
                    return Err(Error::Validation(format!(
                        "{}: token text {:?} does not match document text at [{}, {})",
                        self.doc_id, token.text, token.begin, token.end
                    )));
                }
            }
        }
        if let Some(mentions) = &self.gold_mentions {
            validate_mentions(&self.doc_id, mentions, n_chars)?;
        }
        Ok(())
    }

    /// Length of the text in characters.
    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Text covered by a character interval.
    pub fn slice(&self, begin: usize, end: usize) -> &str {
        char_slice(&self.text, begin, end)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = HashSet::new();
        for doc in &documents {
            if !seen.insert(doc.doc_id.as_str()) {
                return Err(Error::Validation(format!(
                    "duplicate doc_id {:?}",
                    doc.doc_id
                )));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> {
        self.documents.iter().flat_map(|d| d.sentences.iter())
    }

    pub fn sentence_count(&self) -> usize {
        self.documents.iter().map(|d| d.sentences.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Byte offset of every char boundary, plus the end of the string.
pub(crate) fn char_boundaries(text: &str) -> Vec<usize> {
    text.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()))
        .collect()
}

/// Slice by character offsets. Panics when the interval is out of bounds.
pub fn char_slice(text: &str, begin: usize, end: usize) -> &str {
    let mut indices = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(text.len()));
    let start = indices.nth(begin).expect("begin out of bounds");
    let stop = if end == begin {
        start
    } else {
        indices.nth(end - begin - 1).expect("end out of bounds")
    };
    &text[start..stop]
}

fn validate_mentions(doc_id: &str, mentions: &[MentionSpan], n_chars: usize) -> Result<()> {
    for m in mentions {
        if m.begin >= m.end || m.end > n_chars {
            return Err(Error::Validation(format!(
                "{doc_id}: mention [{}, {}) outside text of length {n_chars}",
                m.begin, m.end
            )));
        }
    }
    check_non_overlapping(mentions)
}

fn check_non_overlapping(mentions: &[MentionSpan]) -> Result<()> {
    let mut sorted: Vec<&MentionSpan> = mentions.iter().collect();
    sorted.sort_by_key(|m| (m.begin, m.end));
    for pair in sorted.windows(2) {
        if pair[1].begin < pair[0].end {
            return Err(Error::Validation(format!(
                "{}: mentions [{}, {}) and [{}, {}) overlap",
                pair[0].doc_id, pair[0].begin, pair[0].end, pair[1].begin, pair[1].end
            )));
        }
    }
    Ok(())
}

const SENTENCE_CLOSERS: &[char] = &['"', '\'', ')', ']'];

const ABBREVIATIONS: &[&str] = &[
    "Dr.", "Mr.", "Mrs.", "Ms.", "Prof.", "St.", "Jr.", "Sr.", "vs.", "Inc.", "Ltd.", "Co.",
    "Corp.", "No.", "Fig.", "Figs.", "al.", "approx.", "ca.", "cf.",
];

/// Dotted initialisms such as `U.S.` or `e.g.`.
fn is_dotted_initialism(word: &[char]) -> bool {
    word.len() >= 4
        && word.len().is_multiple_of(2)
        && word
            .chunks(2)
            .all(|pair| pair[0].is_alphabetic() && pair[1] == '.')
}

fn is_abbreviation(word: &[char]) -> bool {
    if is_dotted_initialism(word) {
        return true;
    }
    let s: String = word.iter().collect();
    ABBREVIATIONS.contains(&s.as_str())
}

/// Splits raw text into sentence intervals.
///
/// A boundary follows `.`, `!` or `?` (plus any closing quotes or brackets)
/// when whitespace and then an uppercase letter or digit come next. A period
/// closing a single-letter word or a known abbreviation is not a boundary.
/// Intervals are trimmed to their first and last non-whitespace character.
pub fn split_sentences(text: &str) -> Vec<(usize, usize)> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut cuts = Vec::new();
    for i in 0..n {
        if !matches!(chars[i], '.' | '!' | '?') {
            continue;
        }
        let mut j = i + 1;
        while j < n && SENTENCE_CLOSERS.contains(&chars[j]) {
            j += 1;
        }
        if j >= n || !chars[j].is_whitespace() {
            continue;
        }
        let mut k = j;
        while k < n && chars[k].is_whitespace() {
            k += 1;
        }
        if k >= n || !(chars[k].is_uppercase() || chars[k].is_numeric()) {
            continue;
        }
        if chars[i] == '.' {
            let mut w = i;
            while w > 0 && !chars[w - 1].is_whitespace() {
                w -= 1;
            }
            while w < i && matches!(chars[w], '(' | '[' | '"' | '\'') {
                w += 1;
            }
            let word = &chars[w..=i];
            let single_letter = word.len() == 2 && word[0].is_alphabetic();
            if single_letter || is_abbreviation(word) {
                continue;
            }
        }
        cuts.push(j);
    }
    cuts.push(n);

    let mut out = Vec::new();
    let mut start = 0;
    for cut in cuts {
        let mut b = start;
        let mut e = cut;
        while b < e && chars[b].is_whitespace() {
            b += 1;
        }
        while e > b && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if b < e {
            out.push((b, e));
        }
        start = cut;
    }
    out
}

const TOKEN_PUNCT: &[char] = &['.', ',', ';', ':', '!', '?', '(', ')', '[', ']', '"', '\''];

/// Whitespace tokenizer that splits leading and trailing punctuation into
/// single-character tokens. In-word hyphens and slashes stay inside tokens
/// and known abbreviations keep their period. Offsets are shifted by
/// `sentence_begin`.
pub fn tokenize(sentence_text: &str, sentence_begin: usize) -> Vec<Token> {
    let chars: Vec<char> = sentence_text.chars().collect();
    let n = chars.len();
    let mut tokens = Vec::new();
    let emit = |a: usize, b: usize, tokens: &mut Vec<Token>| {
        tokens.push(Token {
            text: chars[a..b].iter().collect(),
            begin: sentence_begin + a,
            end: sentence_begin + b,
        });
    };

    let mut i = 0;
    while i < n {
        if chars[i].is_whitespace() {
            i += 1;
            continue;
        }
        let mut a = i;
        let mut b = i;
        while b < n && !chars[b].is_whitespace() {
            b += 1;
        }
        i = b;

        while a < b && TOKEN_PUNCT.contains(&chars[a]) {
            emit(a, a + 1, &mut tokens);
            a += 1;
        }
        if a == b {
            continue;
        }
        if is_abbreviation(&chars[a..b]) {
            emit(a, b, &mut tokens);
            continue;
        }
        let mut core_end = b;
        while core_end > a && TOKEN_PUNCT.contains(&chars[core_end - 1]) {
            core_end -= 1;
        }
        emit(a, core_end, &mut tokens);
        for p in core_end..b {
            emit(p, p + 1, &mut tokens);
        }
    }
    tokens
}

/// Splits and tokenizes raw text into sentences with absolute offsets.
pub fn segment(text: &str) -> Vec<Sentence> {
    split_sentences(text)
        .into_iter()
        .map(|(b, e)| Sentence {
            tokens: tokenize(char_slice(text, b, e), b),
            labels: None,
        })
        .collect()
}

/// Projects character-span mentions onto a sentence's tokens as BIO2 labels.
///
/// Every token overlapping a mention is labeled; the first such token gets
/// `B`, later ones `I`. A token already claimed by an earlier mention is not
/// relabeled.
pub fn mentions_to_bio2(sentence: &Sentence, mentions: &[MentionSpan]) -> Result<Vec<Label>> {
    check_non_overlapping(mentions)?;
    let mut sorted: Vec<&MentionSpan> = mentions.iter().collect();
    sorted.sort_by_key(|m| (m.begin, m.end));

    let mut labels = vec![Label::O; sentence.tokens.len()];
    let mut claimed = vec![false; sentence.tokens.len()];
    for m in sorted {
        let mut first = true;
        for (idx, token) in sentence.tokens.iter().enumerate() {
            if claimed[idx] || !token.overlaps(m.begin, m.end) {
                continue;
            }
            labels[idx] = if first { Label::B } else { Label::I };
            claimed[idx] = true;
            first = false;
        }
    }
    Ok(labels)
}

/// Decodes a label sequence into mention spans.
///
/// `B` opens a mention, `I` extends the open one and `O` closes it. An `I`
/// with no open mention starts a new one.
pub fn decode_spans(sentence: &Sentence, labels: &[Label], doc_id: &str) -> Vec<MentionSpan> {
    assert_eq!(
        labels.len(),
        sentence.tokens.len(),
        "label sequence length must equal token count"
    );
    let mut spans = Vec::new();
    let mut open: Option<(usize, usize)> = None;
    for (token, &label) in sentence.tokens.iter().zip(labels) {
        match (label, open.as_mut()) {
            (Label::O, _) => {
                if let Some((b, e)) = open.take() {
                    spans.push(MentionSpan::new(doc_id, b, e));
                }
            }
            (Label::I, Some(span)) => span.1 = token.end,
            (Label::B, _) | (Label::I, None) => {
                if let Some((b, e)) = open.take() {
                    spans.push(MentionSpan::new(doc_id, b, e));
                }
                open = Some((token.begin, token.end));
            }
        }
    }
    if let Some((b, e)) = open {
        spans.push(MentionSpan::new(doc_id, b, e));
    }
    spans
}

/// Reads a `token<TAB>label` column file.
pub fn read_bio_column_file(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_bio_columns(&content)
}

#[derive(Default)]
struct DocBuilder {
    text: String,
    char_len: usize,
    sentences: Vec<Sentence>,
    mentions: Vec<MentionSpan>,
}

impl DocBuilder {
    fn push_sentence(&mut self, rows: &mut Vec<(String, Label)>, doc_id: &str) {
        if rows.is_empty() {
            return;
        }
        let mut tokens = Vec::with_capacity(rows.len());
        let mut raw_labels = Vec::with_capacity(rows.len());
        for (text, label) in rows.drain(..) {
            if self.char_len > 0 {
                self.text.push(' ');
                self.char_len += 1;
            }
            let len = text.chars().count();
            self.text.push_str(&text);
            tokens.push(Token::new(text, self.char_len, self.char_len + len));
            self.char_len += len;
            raw_labels.push(label);
        }
        let mut sentence = Sentence {
            tokens,
            labels: None,
        };
        let mentions = decode_spans(&sentence, &raw_labels, doc_id);
        // Normalizes IOB1 and orphan-I input to strict BIO2.
        let labels = mentions_to_bio2(&sentence, &mentions).expect("decoded spans are disjoint");
        sentence.labels = Some(labels);
        self.sentences.push(sentence);
        self.mentions.extend(mentions);
    }
}

/// Parses column-format text. See [`read_bio_column_file`].
pub fn parse_bio_columns(content: &str) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut doc = DocBuilder::default();
    let mut rows: Vec<(String, Label)> = Vec::new();

    let flush_doc = |doc: &mut DocBuilder, documents: &mut Vec<Document>| -> Result<()> {
        let built = std::mem::take(doc);
        if built.sentences.is_empty() {
            return Ok(());
        }
        let id = format!("doc{}", documents.len() + 1);
        documents.push(Document::new(
            id,
            built.text,
            built.sentences,
            Some(built.mentions),
        )?);
        Ok(())
    };

    for (idx, raw) in content.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if line.starts_with("-DOCSTART-") {
            let doc_id = format!("doc{}", documents.len() + 1);
            doc.push_sentence(&mut rows, &doc_id);
            flush_doc(&mut doc, &mut documents)?;
            continue;
        }
        if line.trim().is_empty() {
            let doc_id = format!("doc{}", documents.len() + 1);
            doc.push_sentence(&mut rows, &doc_id);
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 tab-separated columns, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: "empty token".into(),
            });
        }
        let label = Label::parse(fields[1].trim()).ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("unknown label {:?}", fields[1]),
        })?;
        rows.push((fields[0].to_string(), label));
    }
    let doc_id = format!("doc{}", documents.len() + 1);
    doc.push_sentence(&mut rows, &doc_id);
    flush_doc(&mut doc, &mut documents)?;
    Corpus::new(documents)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StandoffMention {
    pub begin: usize,
    pub end: usize,
}

/// One standoff record. Unknown fields (such as a `surface` string) are
/// ignored on input.
#[derive(Debug, Serialize, Deserialize)]
pub struct StandoffRecord {
    pub doc_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mentions: Option<Vec<StandoffMention>>,
}

/// Reads standoff annotations: a JSON array of records or one record per
/// line (JSON Lines).
pub fn read_standoff(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_standoff(&content)
}

/// Parses standoff text. See [`read_standoff`].
pub fn parse_standoff(content: &str) -> Result<Corpus> {
    let records: Vec<StandoffRecord> = if content.trim_start().starts_with('[') {
        serde_json::from_str(content)?
    } else {
        content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(idx, l)| {
                serde_json::from_str(l).map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<_>>()?
    };
    let documents = records
        .into_iter()
        .map(document_from_standoff)
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(documents)
}

/// Segments a standoff record and projects its mentions onto the tokens.
pub fn document_from_standoff(record: StandoffRecord) -> Result<Document> {
    let n_chars = record.text.chars().count();
    let mentions = record.mentions.map(|ms| {
        ms.into_iter()
            .map(|m| MentionSpan::new(record.doc_id.clone(), m.begin, m.end))
            .collect::<Vec<_>>()
    });
    if let Some(ms) = &mentions {
        validate_mentions(&record.doc_id, ms, n_chars)?;
    }
    let mut sentences = segment(&record.text);
    if let Some(ms) = &mentions {
        for sentence in &mut sentences {
            sentence.labels = Some(mentions_to_bio2(sentence, ms)?);
        }
    }
    Document::new(record.doc_id, record.text, sentences, mentions)
}

/// Draws disjoint uniform samples of training and test sentences.
pub fn sample_split(
    corpus: &Corpus,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<(Vec<Sentence>, Vec<Sentence>)> {
    let all: Vec<&Sentence> = corpus.sentences().collect();
    let wanted = n_train + n_test;
    if wanted > all.len() {
        return Err(Error::Config(format!(
            "requested {wanted} sentences ({n_train} train + {n_test} test) but only {} available",
            all.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let picked = rand::seq::index::sample(&mut rng, all.len(), wanted).into_vec();
    let train = picked[..n_train].iter().map(|&i| all[i].clone()).collect();
    let test = picked[n_train..].iter().map(|&i| all[i].clone()).collect();
    Ok((train, test))
}
