//! Seeded synthetic corpora for tests and demos.
//!
//! Mentions are invented names built from a syllable inventory, optionally
//! followed by a lowercase head noun ("Zorvex kinase"). The same heads also
//! appear outside mentions, so labeling them needs context. Misspellings and
//! whole-sentence case changes are injected at configurable rates.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{parse_bio_columns, Corpus};
use crate::encoder::EmbeddingTable;
use crate::error::{Error, Result};

const SYLLABLES: [&str; 24] = [
    "zor", "vex", "quin", "tral", "mox", "kly", "dra", "phen", "zyl", "vor", "tex", "bry", "xan",
    "lum", "gor", "ryx", "kap", "sul", "nib", "fex", "jor", "wab", "qua", "hex",
];

/// Head nouns that extend a mention, and also occur on their own.
pub const HEADS: [&str; 8] = [
    "kinase", "receptor", "protein", "factor", "enzyme", "complex", "channel", "ligand",
];

const FILLERS: [&str; 20] = [
    "the cells",
    "the patients",
    "this pathway",
    "the samples",
    "the tissue",
    "these mice",
    "the membrane",
    "the culture",
    "the response",
    "the cohort",
    "the nucleus",
    "the serum",
    "the signal",
    "the model",
    "the tumor",
    "the liver",
    "the brain",
    "the lesion",
    "the dose",
    "the control",
];

// `{E}` is a mention slot, `{H}` a bare head noun labeled outside.
const TEMPLATES: [&str; 16] = [
    "{E} regulates {E} in the cells .",
    "we observed increased {H} activity after treatment with {E} .",
    "binding of {E} to the {H} was strongly reduced .",
    "{E} and {E} were detected in all samples .",
    "expression of the {H} depends on {E} .",
    "in these mice , {E} inhibits {H} signaling .",
    "the {H} domain of {E} binds {E} .",
    "levels of {E} rose during the study .",
    "patients treated with {E} showed no {H} response .",
    "{E} is a known target of {E} .",
    "a mutant {H} lacking {E} was inactive .",
    "we found that {E} activates the {H} .",
    "loss of {E} impairs {H} function in the liver .",
    "{E} interacts with a second {H} .",
    "after stimulation , {E} moved to the nucleus .",
    "the {H} and {E} act together .",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub sentences: usize,
    pub seed: u64,
    /// Probability that a word of four or more letters gets one edit.
    pub misspell_rate: f64,
    /// Probability that a sentence is rendered all upper or all lower case.
    pub case_mangle_rate: f64,
    /// Probability that a mention slot holds a mention rather than a filler.
    pub mention_density: f64,
    pub sentences_per_doc: usize,
    /// Size of the entity name inventory.
    pub names: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 1000,
            seed: 7,
            misspell_rate: 0.0,
            case_mangle_rate: 0.0,
            mention_density: 0.9,
            sentences_per_doc: 10,
            names: 8000,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("misspell_rate", self.misspell_rate),
            ("case_mangle_rate", self.case_mangle_rate),
            ("mention_density", self.mention_density),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.sentences_per_doc == 0 {
            return Err(Error::Config("sentences_per_doc must be at least 1".into()));
        }
        let max_names = SYLLABLES.len().pow(2) + SYLLABLES.len().pow(3);
        if self.names == 0 || self.names > max_names {
            return Err(Error::Config(format!("names must lie in 1..={max_names}")));
        }
        Ok(())
    }
}

/// Distinct capitalized names of two or three syllables, in seeded order.
pub fn entity_names(count: usize, seed: u64) -> Vec<String> {
    let n = SYLLABLES.len();
    let mut all: Vec<String> = Vec::with_capacity(n * n + n * n * n);
    for a in SYLLABLES {
        for b in SYLLABLES {
            all.push(capitalize(&format!("{a}{b}")));
            for c in SYLLABLES {
                all.push(capitalize(&format!("{a}{b}{c}")));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e61_6d65);
    all.shuffle(&mut rng);
    all.truncate(count);
    all
}

fn capitalize(w: &str) -> String {
    let mut chars = w.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn misspell(word: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let upper_word = chars.iter().all(|c| c.is_uppercase());
    let pos = rng.random_range(0..chars.len());
    let letter = (b'a' + rng.random_range(0..26u8)) as char;
    let cased = |upper: bool| {
        if upper {
            letter.to_ascii_uppercase()
        } else {
            letter
        }
    };
    match rng.random_range(0..4) {
        0 if pos > 0 && pos + 1 < chars.len() => chars.swap(pos, pos + 1),
        1 if pos > 0 => {
            chars.remove(pos);
        }
        2 => chars.insert(pos + 1, cased(upper_word)),
        _ => chars[pos] = cased(chars[pos].is_uppercase()),
    }
    chars.into_iter().collect()
}

/// Generates the corpus in `token<TAB>label` column format.
pub fn synth_columns(config: &SynthConfig) -> Result<String> {
    config.validate()?;
    let names = entity_names(config.names, config.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = String::new();

    for idx in 0..config.sentences {
        if idx % config.sentences_per_doc == 0 {
            out.push_str("-DOCSTART-\tO\n\n");
        }
        let template = TEMPLATES.choose(&mut rng).expect("templates");
        let mut rows: Vec<(String, &str)> = Vec::new();
        for piece in template.split(' ') {
            match piece {
                "{E}" if rng.random_bool(config.mention_density) => {
                    let name = names.choose(&mut rng).expect("names");
                    rows.push((name.clone(), "B"));
                    if rng.random_bool(0.4) {
                        let head = HEADS.choose(&mut rng).expect("heads");
                        rows.push((head.to_string(), "I"));
                    }
                }
                "{E}" => {
                    let filler = FILLERS.choose(&mut rng).expect("fillers");
                    rows.extend(filler.split(' ').map(|w| (w.to_string(), "O")));
                }
                "{H}" => {
                    let head = HEADS.choose(&mut rng).expect("heads");
                    rows.push((head.to_string(), "O"));
                }
                w => rows.push((w.to_string(), "O")),
            }
        }
        rows[0].0 = capitalize(&rows[0].0);

        if rng.random_bool(config.case_mangle_rate) {
            let upper = rng.random_bool(0.5);
            for (w, _) in &mut rows {
                *w = if upper {
                    w.to_uppercase()
                } else {
                    w.to_lowercase()
                };
            }
        }
        for (w, _) in &mut rows {
            if w.chars().count() >= 4
                && w.chars().all(char::is_alphabetic)
                && rng.random_bool(config.misspell_rate)
            {
                *w = misspell(w, &mut rng);
            }
        }
        for (w, l) in rows {
            out.push_str(&w);
            out.push('\t');
            out.push_str(l);
            out.push('\n');
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn synth_corpus(config: &SynthConfig) -> Result<Corpus> {
    parse_bio_columns(&synth_columns(config)?)
}

/// Word vectors for the clean vocabulary: names cluster around one centroid,
/// heads around another, other words are scattered.
pub fn synth_embeddings(config: &SynthConfig, dim: usize) -> Result<EmbeddingTable> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x656d_6265);
    let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()
    };
    let name_centroid = unit(&mut rng);
    let head_centroid = unit(&mut rng);
    let near = |c: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        c.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect()
    };

    let mut rows = Vec::new();
    for name in entity_names(config.names, config.seed) {
        rows.push((name.to_lowercase(), near(&name_centroid, &mut rng)));
    }
    for head in HEADS {
        rows.push((head.to_string(), near(&head_centroid, &mut rng)));
    }
    let mut words: Vec<&str> = TEMPLATES
        .iter()
        .chain(FILLERS.iter())
        .flat_map(|t| t.split(' '))
        .filter(|w| !w.starts_with('{'))
        .collect();
    words.sort_unstable();
    words.dedup();
    for w in words {
        rows.push((w.to_string(), unit(&mut rng)));
    }
    EmbeddingTable::new(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    fn small() -> SynthConfig {
        SynthConfig {
            sentences: 60,
            sentences_per_doc: 7,
            ..Default::default()
        }
    }

    #[test]
    fn deterministic_for_a_seed() {
        assert_eq!(
            synth_columns(&small()).unwrap(),
            synth_columns(&small()).unwrap()
        );
        let other = SynthConfig { seed: 8, ..small() };
        assert_ne!(
            synth_columns(&small()).unwrap(),
            synth_columns(&other).unwrap()
        );
    }

    #[test]
    fn corpus_shape() {
        let corpus = synth_corpus(&small()).unwrap();
        assert_eq!(corpus.sentence_count(), 60);
        assert_eq!(corpus.documents.len(), 9);
        let labels: Vec<Label> = corpus
            .sentences()
            .flat_map(|s| s.labels.clone().unwrap())
            .collect();
        for l in Label::ALL {
            assert!(labels.contains(&l), "{l} missing");
        }
    }

    #[test]
    fn heads_occur_inside_and_outside_mentions() {
        let corpus = synth_corpus(&small()).unwrap();
        let mut inside = false;
        let mut outside = false;
        for s in corpus.sentences() {
            for (t, l) in s.tokens.iter().zip(s.labels.as_ref().unwrap()) {
                if HEADS.contains(&t.text.as_str()) {
                    inside |= *l == Label::I;
                    outside |= *l == Label::O;
                }
            }
        }
        assert!(inside && outside);
    }

    #[test]
    fn noise_rates_take_effect() {
        let clean = synth_corpus(&small()).unwrap();
        let noisy = synth_corpus(&SynthConfig {
            misspell_rate: 1.0,
            case_mangle_rate: 1.0,
            ..small()
        })
        .unwrap();
        let words = |c: &Corpus| -> Vec<String> {
            c.sentences()
                .flat_map(|s| s.tokens.iter().map(|t| t.text.clone()))
                .collect()
        };
        let (a, b) = (words(&clean), words(&noisy));
        assert_ne!(a, b);
        for s in noisy.sentences() {
            let letters: String = s
                .tokens
                .iter()
                .flat_map(|t| t.text.chars())
                .filter(|c| c.is_alphabetic())
                .collect();
            assert!(letters == letters.to_uppercase() || letters == letters.to_lowercase());
        }
    }

    #[test]
    fn density_zero_has_no_mentions() {
        let corpus = synth_corpus(&SynthConfig {
            mention_density: 0.0,
            ..small()
        })
        .unwrap();
        assert!(corpus
            .documents
            .iter()
            .all(|d| d.gold_mentions.as_ref().unwrap().is_empty()));
    }

    #[test]
    fn names_are_distinct() {
        let names = entity_names(2000, 1);
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 2000);
    }

    #[test]
    fn embeddings_cover_clean_words() {
        let cfg = small();
        let table = synth_embeddings(&cfg, 16).unwrap();
        assert_eq!(table.dim(), 16);
        for s in synth_corpus(&cfg).unwrap().sentences() {
            for t in &s.tokens {
                assert!(table.lookup(&t.text).is_some(), "{}", t.text);
            }
        }
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(synth_columns(&SynthConfig {
            misspell_rate: 1.5,
            ..small()
        })
        .is_err());
        assert!(synth_columns(&SynthConfig {
            sentences_per_doc: 0,
            ..small()
        })
        .is_err());
    }
}
