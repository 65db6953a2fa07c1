//! Word encoders: vocabulary one-hot (DICT), pretrained embeddings (EMB) and
//! letter-trigram hashing (TRI). Every encoding ends with four surface-form
//! flag slots in the order `initial_capital, all_uppercase, all_lowercase,
//! mixed_case`.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{Error, Result};

pub const FLAG_SLOTS: usize = 4;
pub const FLAG_LAYOUT: [&str; FLAG_SLOTS] = [
    "initial_capital",
    "all_uppercase",
    "all_lowercase",
    "mixed_case",
];

const BOUNDARY: char = '#';

/// Capitalization pattern of a token.
///
/// The case bits are mutually exclusive. Title case (`Aspirin`) sets only
/// `initial_capital`; tokens without cased letters set no case bit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SurfaceFlags {
    pub initial_capital: bool,
    pub all_uppercase: bool,
    pub all_lowercase: bool,
    pub mixed_case: bool,
}

impl SurfaceFlags {
    pub fn of(token_text: &str) -> Self {
        let initial_capital = token_text.chars().next().is_some_and(char::is_uppercase);
        let letters: Vec<char> = token_text
            .chars()
            .filter(|c| c.is_uppercase() || c.is_lowercase())
            .collect();
        let mut flags = SurfaceFlags {
            initial_capital,
            ..Default::default()
        };
        if letters.is_empty() {
            return flags;
        }
        let upper = letters.iter().filter(|c| c.is_uppercase()).count();
        let title = letters.len() > 1 && letters[0].is_uppercase() && upper == 1;
        if upper == letters.len() {
            flags.all_uppercase = true;
        } else if upper == 0 {
            flags.all_lowercase = true;
        } else if !title {
            flags.mixed_case = true;
        }
        flags
    }

    pub fn slots(&self) -> [f64; FLAG_SLOTS] {
        [
            self.initial_capital,
            self.all_uppercase,
            self.all_lowercase,
            self.mixed_case,
        ]
        .map(|b| if b { 1.0 } else { 0.0 })
    }
}

pub fn surface_flags(token_text: &str) -> SurfaceFlags {
    SurfaceFlags::of(token_text)
}

/// Lowercased, `#`-bounded letter trigrams in order of occurrence.
pub fn extract_trigrams(token_text: &str) -> Vec<String> {
    if token_text.is_empty() {
        return Vec::new();
    }
    let marked: Vec<char> = std::iter::once(BOUNDARY)
        .chain(token_text.chars().flat_map(char::to_lowercase))
        .chain(std::iter::once(BOUNDARY))
        .collect();
    marked.windows(3).map(|w| w.iter().collect()).collect()
}

/// Lexicographically indexed string vocabulary.
#[derive(Clone, Debug, PartialEq, Eq)]
struct Lexicon {
    entries: Vec<String>,
    index: HashMap<String, usize>,
}

impl Lexicon {
    fn from_set(set: BTreeSet<String>) -> Self {
        let entries: Vec<String> = set.into_iter().collect();
        let index = entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect();
        Lexicon { entries, index }
    }

    fn from_entries(entries: Vec<String>) -> Result<Self> {
        if entries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("vocabulary is not strictly sorted".into()));
        }
        Ok(Lexicon::from_set(entries.into_iter().collect()))
    }

    fn get(&self, key: &str) -> Option<usize> {
        self.index.get(key).copied()
    }
}

fn training_tokens(train: &[Sentence]) -> Result<impl Iterator<Item = &str>> {
    if train.iter().all(Sentence::is_empty) {
        return Err(Error::Config("training set has no tokens".into()));
    }
    Ok(train
        .iter()
        .flat_map(|s| s.tokens.iter().map(|t| t.text.as_str())))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrigramVocabulary(Lexicon);

impl TrigramVocabulary {
    pub fn build(train: &[Sentence]) -> Result<Self> {
        let set = training_tokens(train)?.flat_map(extract_trigrams).collect();
        Ok(TrigramVocabulary(Lexicon::from_set(set)))
    }

    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let set = words.into_iter().flat_map(extract_trigrams).collect();
        TrigramVocabulary(Lexicon::from_set(set))
    }

    /// Restores a vocabulary from its sorted entry list.
    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        Lexicon::from_entries(entries).map(TrigramVocabulary)
    }

    pub fn size(&self) -> usize {
        self.0.entries.len()
    }

    pub fn index_of(&self, trigram: &str) -> Option<usize> {
        self.0.get(trigram)
    }

    pub fn entries(&self) -> &[String] {
        &self.0.entries
    }
}

pub fn build_trigram_vocab(train: &[Sentence]) -> Result<TrigramVocabulary> {
    TrigramVocabulary::build(train)
}

/// Lowercased word dictionary for one-hot encoding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordVocabulary(Lexicon);

impl WordVocabulary {
    pub fn build(train: &[Sentence]) -> Result<Self> {
        let set = training_tokens(train)?.map(str::to_lowercase).collect();
        Ok(WordVocabulary(Lexicon::from_set(set)))
    }

    pub fn from_entries(entries: Vec<String>) -> Result<Self> {
        Lexicon::from_entries(entries).map(WordVocabulary)
    }

    pub fn size(&self) -> usize {
        self.0.entries.len()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.0.get(&word.to_lowercase())
    }

    pub fn entries(&self) -> &[String] {
        &self.0.entries
    }
}

/// Pretrained word vectors of uniform dimension.
#[derive(Debug)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f64>,
    misses: AtomicUsize,
}

impl Clone for EmbeddingTable {
    fn clone(&self) -> Self {
        EmbeddingTable {
            words: self.words.clone(),
            index: self.index.clone(),
            dim: self.dim,
            vectors: self.vectors.clone(),
            misses: AtomicUsize::new(self.misses()),
        }
    }
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.words == other.words && self.dim == other.dim && self.vectors == other.vectors
    }
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` rows. Later duplicates of a word
    /// are ignored.
    pub fn new(rows: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = match rows.first() {
            Some((_, v)) if !v.is_empty() => v.len(),
            Some(_) => return Err(Error::Dimension("embedding vectors are empty".into())),
            None => return Err(Error::Validation("no vectors".into())),
        };
        let mut words = Vec::with_capacity(rows.len());
        let mut index = HashMap::with_capacity(rows.len());
        let mut vectors = Vec::with_capacity(rows.len() * dim);
        for (row, (word, vector)) in rows.into_iter().enumerate() {
            if vector.len() != dim {
                return Err(Error::Dimension(format!(
                    "row {} has dimension {}, expected {dim}",
                    row + 1,
                    vector.len()
                )));
            }
            if index.contains_key(&word) {
                continue;
            }
            index.insert(word.clone(), words.len());
            words.push(word);
            vectors.extend(vector);
        }
        Ok(EmbeddingTable {
            words,
            index,
            dim,
            vectors,
            misses: AtomicUsize::new(0),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Row-major vector data, `len() * dim()` values.
    pub fn vectors(&self) -> &[f64] {
        &self.vectors
    }

    /// Exact lookup with a lowercase fallback. Misses are counted.
    pub fn lookup(&self, word: &str) -> Option<&[f64]> {
        let row = self
            .index
            .get(word)
            .or_else(|| self.index.get(&word.to_lowercase()));
        match row {
            Some(&r) => Some(&self.vectors[r * self.dim..(r + 1) * self.dim]),
            None => {
                self.misses.fetch_add(1, Ordering::Relaxed);
                None
            }
        }
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }
}

/// Reads `word v1 v2 ... vd` lines. An optional word2vec-style
/// `count dim` header line is accepted.
pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&content)
}

pub fn parse_embeddings(content: &str) -> Result<EmbeddingTable> {
    let mut rows = Vec::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in content.lines().enumerate() {
        let line_no = idx + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let values: Vec<&str> = fields.collect();
        if rows.is_empty() && dim.is_none() && values.len() == 1 {
            if let (Ok(_), Ok(d)) = (word.parse::<usize>(), values[0].parse::<usize>()) {
                dim = Some(d);
                continue;
            }
        }
        let vector = values
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad vector component: {e}"),
            })?;
        if vector.is_empty() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("word {word:?} has no vector"),
            });
        }
        match dim {
            Some(d) if d != vector.len() => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("dimension {} does not match {d}", vector.len()),
                })
            }
            Some(_) => {}
            None => dim = Some(vector.len()),
        }
        rows.push((word.to_string(), vector));
    }
    EmbeddingTable::new(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderMethod {
    #[serde(rename = "DICT")]
    Dict,
    #[serde(rename = "EMB")]
    Emb,
    #[serde(rename = "TRI")]
    Tri,
}

impl EncoderMethod {
    pub const ALL: [EncoderMethod; 3] =
        [EncoderMethod::Dict, EncoderMethod::Emb, EncoderMethod::Tri];
}

impl fmt::Display for EncoderMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EncoderMethod::Dict => "DICT",
            EncoderMethod::Emb => "EMB",
            EncoderMethod::Tri => "TRI",
        })
    }
}

impl FromStr for EncoderMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "DICT" => Ok(EncoderMethod::Dict),
            "EMB" => Ok(EncoderMethod::Emb),
            "TRI" => Ok(EncoderMethod::Tri),
            _ => Err(Error::Config(format!(
                "unknown encoder {s:?} (DICT, EMB or TRI)"
            ))),
        }
    }
}

/// Network input for one token: encoder part followed by the flag slots.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedToken(pub Vec<f64>);

impl AsRef<[f64]> for EncodedToken {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl EncodedToken {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// The encoder part without the trailing flag slots.
    pub fn features(&self) -> &[f64] {
        &self.0[..self.0.len() - FLAG_SLOTS]
    }

    pub fn flags(&self) -> &[f64] {
        &self.0[self.0.len() - FLAG_SLOTS..]
    }
}

/// A configured word encoder.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoder {
    Dict(WordVocabulary),
    Emb(EmbeddingTable),
    Tri(TrigramVocabulary),
}

impl Encoder {
    /// Builds the vocabulary for DICT/TRI from the training sentences, or
    /// wraps the supplied table for EMB.
    pub fn build(
        method: EncoderMethod,
        train: &[Sentence],
        embeddings: Option<EmbeddingTable>,
    ) -> Result<Self> {
        match method {
            EncoderMethod::Dict => Ok(Encoder::Dict(WordVocabulary::build(train)?)),
            EncoderMethod::Tri => Ok(Encoder::Tri(TrigramVocabulary::build(train)?)),
            EncoderMethod::Emb => embeddings
                .map(Encoder::Emb)
                .ok_or_else(|| Error::Config("EMB encoder requires an embedding table".into())),
        }
    }

    pub fn method(&self) -> EncoderMethod {
        match self {
            Encoder::Dict(_) => EncoderMethod::Dict,
            Encoder::Emb(_) => EncoderMethod::Emb,
            Encoder::Tri(_) => EncoderMethod::Tri,
        }
    }

    fn feature_dim(&self) -> usize {
        match self {
            Encoder::Dict(v) => v.size(),
            Encoder::Emb(t) => t.dim(),
            Encoder::Tri(v) => v.size(),
        }
    }

    /// Total output dimension including the flag slots.
    pub fn dim(&self) -> usize {
        self.feature_dim() + FLAG_SLOTS
    }

    pub fn encode(&self, token_text: &str) -> EncodedToken {
        let n = self.feature_dim();
        let mut v = vec![0.0; n + FLAG_SLOTS];
        match self {
            Encoder::Dict(vocab) => {
                if let Some(i) = vocab.index_of(token_text) {
                    v[i] = 1.0;
                }
            }
            Encoder::Emb(table) => {
                if let Some(row) = table.lookup(token_text) {
                    v[..n].copy_from_slice(row);
                }
            }
            Encoder::Tri(vocab) => {
                for tri in extract_trigrams(token_text) {
                    if let Some(i) = vocab.index_of(&tri) {
                        v[i] = 1.0;
                    }
                }
            }
        }
        v[n..].copy_from_slice(&SurfaceFlags::of(token_text).slots());
        EncodedToken(v)
    }

    pub fn encode_sentence(&self, sentence: &Sentence) -> Vec<EncodedToken> {
        sentence
            .tokens
            .iter()
            .map(|t| self.encode(&t.text))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Sentence};

    fn flags(b: [bool; 4]) -> SurfaceFlags {
        SurfaceFlags {
            initial_capital: b[0],
            all_uppercase: b[1],
            all_lowercase: b[2],
            mixed_case: b[3],
        }
    }

    #[test]
    fn surface_flag_examples() {
        assert_eq!(surface_flags("Aspirin"), flags([true, false, false, false]));
        assert_eq!(surface_flags("CD15"), flags([true, true, false, false]));
        assert_eq!(surface_flags("."), flags([false; 4]));
        assert_eq!(surface_flags("1997"), flags([false; 4]));
        assert_eq!(surface_flags("effect"), flags([false, false, true, false]));
        assert_eq!(surface_flags("iPhone"), flags([false, false, false, true]));
        assert_eq!(surface_flags("McDonald"), flags([true, false, false, true]));
        assert_eq!(surface_flags("A"), flags([true, true, false, false]));
    }

    #[test]
    fn trigram_examples() {
        assert_eq!(
            extract_trigrams("Aspirin"),
            ["#as", "asp", "spi", "pir", "iri", "rin", "in#"]
        );
        assert_eq!(extract_trigrams("a"), ["#a#"]);
        assert_eq!(extract_trigrams("CD15"), ["#cd", "cd1", "d15", "15#"]);
        assert!(extract_trigrams("").is_empty());
    }

    fn sentences(words: &[&str]) -> Vec<Sentence> {
        words
            .iter()
            .map(|w| Sentence::new(tokenize(w, 0), None).unwrap())
            .collect()
    }

    #[test]
    fn trigram_vocab_construction() {
        let v = build_trigram_vocab(&sentences(&["aa"])).unwrap();
        assert_eq!(v.entries(), ["#aa", "aa#"]);
        let twice = build_trigram_vocab(&sentences(&["ab", "ab"])).unwrap();
        assert_eq!(twice, build_trigram_vocab(&sentences(&["ab"])).unwrap());
        assert!(build_trigram_vocab(&[]).is_err());
    }

    #[test]
    fn tri_encoding_of_aspirin() {
        let enc = Encoder::Tri(TrigramVocabulary::from_words(["Aspirin", "has", "an"]));
        let e = enc.encode("Aspirin");
        assert_eq!(e.len(), enc.dim());
        assert_eq!(e.features().iter().filter(|&&x| x == 1.0).count(), 7);
        assert_eq!(e.flags(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn tri_skips_unknown_trigrams() {
        let enc = Encoder::Tri(TrigramVocabulary::from_words(["the"]));
        let e = enc.encode("thh");
        // only "#th" is known
        assert_eq!(e.features().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn dict_unseen_word_is_zero() {
        let enc = Encoder::build(
            EncoderMethod::Dict,
            &sentences(&["strengthened Effect"]),
            None,
        )
        .unwrap();
        let e = enc.encode("strengthnend");
        assert!(e.features().iter().all(|&x| x == 0.0));
        assert_eq!(e.flags(), [0.0, 0.0, 1.0, 0.0]);
        let hit = enc.encode("EFFECT");
        assert_eq!(hit.features().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn emb_lookup_and_misses() {
        let table = parse_embeddings("aspirin 1 2 3\neffect 0.5 0 -1\n").unwrap();
        assert_eq!((table.len(), table.dim()), (2, 3));
        let enc = Encoder::Emb(table);
        assert_eq!(
            enc.encode("Aspirin").as_slice(),
            [1.0, 2.0, 3.0, 1.0, 0.0, 0.0, 0.0]
        );
        let miss = enc.encode("ibuprofen");
        assert!(miss.features().iter().all(|&x| x == 0.0));
        assert_eq!(miss.flags(), [0.0, 0.0, 1.0, 0.0]);
        let Encoder::Emb(t) = &enc else {
            unreachable!()
        };
        assert_eq!(t.misses(), 1);
    }

    #[test]
    fn embedding_parse_errors() {
        match parse_embeddings("a 1 2 3\nb 1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let err = parse_embeddings("").unwrap_err();
        assert!(err.to_string().contains("no vectors"));
        let with_header = parse_embeddings("2 2\na 1 2\nb 3 4\n").unwrap();
        assert_eq!(with_header.len(), 2);
        assert!(
            EmbeddingTable::new(vec![("a".into(), vec![1.0]), ("b".into(), vec![1.0, 2.0])])
                .is_err()
        );
    }

    #[test]
    fn emb_requires_table() {
        assert!(Encoder::build(EncoderMethod::Emb, &sentences(&["x"]), None).is_err());
    }

    #[test]
    fn method_parsing() {
        assert_eq!("tri".parse::<EncoderMethod>().unwrap(), EncoderMethod::Tri);
        assert!("word2vec".parse::<EncoderMethod>().is_err());
    }
}
