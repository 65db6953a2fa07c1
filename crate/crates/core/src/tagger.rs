//! Model lifecycle: training over sentence mini-batches, prediction, span
//! decoding and model files.
//!
//! # Model file layout
//!
//! ```text
//! offset  size  content
//! 0       8     magic "TLNERMDL"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header: encoder method, flag layout, vocabulary,
//!               network config, provenance, tensor table (name, rows, cols)
//! 20+H    ...   tensor data in table order, row-major f64 little-endian
//! end-32  32    SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use crate::corpus::decode_spans;
use crate::corpus::{segment, Label, MentionSpan, Sentence};
use crate::encoder::{
    EmbeddingTable, Encoder, EncoderMethod, TrigramVocabulary, WordVocabulary, FLAG_LAYOUT,
};
use crate::error::{Error, Result};
use crate::eval::Annotator;
use crate::network::linalg::nonzero_indices;
use crate::network::{
    accumulate_gradients, forward, init_params_with, loss, sgd_step_and_clear, Matrix,
    NetworkConfig, NetworkVariant, Parameters,
};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TLNERMDL";
const CHECKSUM_LEN: usize = 32;
const EMBEDDING_TENSOR: &str = "encoder.embeddings";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    pub epochs: usize,
    pub seed: u64,
    pub shuffle: bool,
    /// Progress callback cadence in epochs.
    pub log_every: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            epochs: 100,
            seed: 1,
            shuffle: true,
            log_every: 1,
        }
    }
}

/// Encoder and network hyperparameters of a model to train.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub encoder: EncoderMethod,
    pub variant: NetworkVariant,
    pub dense_size: usize,
    pub lstm_cells: usize,
    pub learning_rate: f64,
}

impl ModelSpec {
    pub fn new(encoder: EncoderMethod, variant: NetworkVariant) -> Self {
        ModelSpec {
            encoder,
            variant,
            dense_size: NetworkConfig::DENSE_SIZE,
            lstm_cells: NetworkConfig::LSTM_CELLS,
            learning_rate: NetworkConfig::LEARNING_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggerModel {
    pub encoder: Encoder,
    pub config: NetworkConfig,
    pub params: Parameters,
    /// Free-form run description stored in the model file.
    pub provenance: serde_json::Value,
}

#[derive(Clone, Debug, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    #[serde(with = "duration_secs")]
    pub elapsed: Duration,
}

mod duration_secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: TaggerModel,
    /// Mean sentence loss of every epoch.
    pub losses: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionResult {
    pub labels: Vec<Label>,
    /// Class distributions in `B, I, O` order.
    pub distributions: Vec<[f64; 3]>,
}

impl PredictionResult {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn train(
    sentences: &[Sentence],
    spec: &ModelSpec,
    embeddings: Option<EmbeddingTable>,
    training: &TrainingConfig,
) -> Result<TrainOutcome> {
    train_with_progress(sentences, spec, embeddings, training, |_| {})
}

/// Trains a model; `progress` is called every `log_every` epochs and after
/// the last one.
pub fn train_with_progress(
    sentences: &[Sentence],
    spec: &ModelSpec,
    embeddings: Option<EmbeddingTable>,
    training: &TrainingConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    if training.epochs == 0 {
        return Err(Error::Config("epochs must be at least 1".into()));
    }
    if sentences.is_empty() {
        return Err(Error::Config("no training sentences".into()));
    }
    let gold: Vec<Vec<usize>> = sentences
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.labels
                .as_ref()
                .map(|ls| ls.iter().map(|l| l.index()).collect())
                .ok_or_else(|| Error::Config(format!("training sentence {i} has no labels")))
        })
        .collect::<Result<_>>()?;

    let encoder = Encoder::build(spec.encoder, sentences, embeddings)?;
    let config = NetworkConfig {
        variant: spec.variant,
        input_dim: encoder.dim(),
        dense_size: spec.dense_size,
        lstm_cells: spec.lstm_cells,
        n_classes: Label::ALL.len(),
        learning_rate: spec.learning_rate,
    };
    config.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(training.seed);
    let mut params = init_params_with(&config, &mut rng);
    let mut grads = params.zeros_like();
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let mut losses = Vec::with_capacity(training.epochs);
    let start = Instant::now();

    for epoch in 0..training.epochs {
        if training.shuffle {
            order.shuffle(&mut rng);
        }
        let mut total = 0.0;
        let mut counted = 0usize;
        for &idx in &order {
            let sentence = &sentences[idx];
            if sentence.is_empty() {
                continue;
            }
            let inputs = encoder.encode_sentence(sentence);
            let mut columns: Vec<usize> = inputs
                .iter()
                .flat_map(|x| nonzero_indices(x.as_slice()))
                .collect();
            columns.sort_unstable();
            columns.dedup();

            let (y, acts) = forward(&inputs, &config, &params)?;
            total += loss(&y, &gold[idx]);
            counted += 1;
            accumulate_gradients(&acts, &gold[idx], &config, &params, &mut grads)?;
            sgd_step_and_clear(&mut params, &mut grads, config.learning_rate, &columns).map_err(
                |e| Error::Training {
                    epoch,
                    sentence: idx,
                    message: e.to_string(),
                },
            )?;
        }
        let mean_loss = if counted == 0 {
            0.0
        } else {
            total / counted as f64
        };
        losses.push(mean_loss);
        let last = epoch + 1 == training.epochs;
        if last || (training.log_every > 0 && (epoch + 1) % training.log_every == 0) {
            progress(&EpochStats {
                epoch: epoch + 1,
                mean_loss,
                elapsed: start.elapsed(),
            });
        }
    }

    Ok(TrainOutcome {
        model: TaggerModel {
            encoder,
            config,
            params,
            provenance: serde_json::Value::Null,
        },
        losses,
    })
}

fn argmax(dist: &[f64; 3]) -> Label {
    let mut best = 0;
    for k in 1..3 {
        if dist[k] > dist[best] {
            best = k;
        }
    }
    Label::ALL[best]
}

impl TaggerModel {
    pub fn predict(&self, sentence: &Sentence) -> PredictionResult {
        let inputs = self.encoder.encode_sentence(sentence);
        let (y, _) = forward(&inputs, &self.config, &self.params)
            .expect("encoder output matches the network input");
        let distributions: Vec<[f64; 3]> = y.iter().map(|v| [v[0], v[1], v[2]]).collect();
        PredictionResult {
            labels: distributions.iter().map(argmax).collect(),
            distributions,
        }
    }

    /// Mentions found in raw text, as character offsets.
    pub fn annotate(&self, text: &str, doc_id: &str) -> Vec<MentionSpan> {
        segment(text)
            .iter()
            .flat_map(|s| decode_spans(s, &self.predict(s).labels, doc_id))
            .collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        TaggerModel::from_bytes(&bytes)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors: Vec<(String, &Matrix)> = Vec::new();
        let embedding_matrix;
        let vocabulary = match &self.encoder {
            Encoder::Dict(v) => v.entries().to_vec(),
            Encoder::Tri(v) => v.entries().to_vec(),
            Encoder::Emb(t) => {
                embedding_matrix = Matrix::from_vec(t.len(), t.dim(), t.vectors().to_vec());
                tensors.push((EMBEDDING_TENSOR.into(), &embedding_matrix));
                t.words().to_vec()
            }
        };
        tensors.extend(self.params.tensors());

        let header = Header {
            encoder: EncoderHeader {
                method: self.encoder.method(),
                flag_layout: FLAG_LAYOUT.iter().map(|s| s.to_string()).collect(),
                vocabulary,
            },
            network: self.config.clone(),
            provenance: self.provenance.clone(),
            tensors: tensors
                .iter()
                .map(|(name, m)| TensorHeader {
                    name: name.clone(),
                    rows: m.rows(),
                    cols: m.cols(),
                })
                .collect(),
        };
        let header_bytes = serde_json::to_vec(&header)?;
        let data_len: usize = tensors.iter().map(|(_, m)| m.as_slice().len() * 8).sum();

        let mut out = Vec::with_capacity(20 + header_bytes.len() + data_len + CHECKSUM_LEN);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(&header_bytes);
        for (_, m) in &tensors {
            for v in m.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 20 + CHECKSUM_LEN {
            return Err(Error::Checksum);
        }
        let (body, checksum) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
        if Sha256::digest(body).as_slice() != checksum {
            return Err(Error::Checksum);
        }

        let header_len = u64::from_le_bytes(body[12..20].try_into().expect("8 bytes")) as usize;
        let header_end = 20usize
            .checked_add(header_len)
            .filter(|&end| end <= body.len())
            .ok_or_else(|| Error::Format("header length exceeds file".into()))?;
        let header: Header = serde_json::from_slice(&body[20..header_end])?;
        if header.encoder.flag_layout != FLAG_LAYOUT {
            return Err(Error::Format(format!(
                "unsupported flag layout {:?}",
                header.encoder.flag_layout
            )));
        }

        let mut data = &body[header_end..];
        let mut read_tensor = |t: &TensorHeader| -> Result<Matrix> {
            let n = t.rows * t.cols;
            if data.len() < n * 8 {
                return Err(Error::Format(format!("tensor {} is truncated", t.name)));
            }
            let values = data[..n * 8]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            data = &data[n * 8..];
            Ok(Matrix::from_vec(t.rows, t.cols, values))
        };

        let mut table = header.tensors.iter();
        let encoder = match header.encoder.method {
            EncoderMethod::Dict => {
                Encoder::Dict(WordVocabulary::from_entries(header.encoder.vocabulary)?)
            }
            EncoderMethod::Tri => {
                Encoder::Tri(TrigramVocabulary::from_entries(header.encoder.vocabulary)?)
            }
            EncoderMethod::Emb => {
                let t = table
                    .next()
                    .filter(|t| t.name == EMBEDDING_TENSOR)
                    .ok_or_else(|| Error::Format("missing embedding tensor".into()))?;
                let m = read_tensor(t)?;
                if m.rows() != header.encoder.vocabulary.len() {
                    return Err(Error::Format(
                        "embedding rows do not match vocabulary".into(),
                    ));
                }
                let rows = header
                    .encoder
                    .vocabulary
                    .into_iter()
                    .zip(m.as_slice().chunks(m.cols().max(1)))
                    .map(|(w, v)| (w, v.to_vec()))
                    .collect();
                Encoder::Emb(EmbeddingTable::new(rows)?)
            }
        };

        let config = header.network;
        config.validate()?;
        if encoder.dim() != config.input_dim {
            return Err(Error::Format(format!(
                "encoder dimension {} does not match network input {}",
                encoder.dim(),
                config.input_dim
            )));
        }
        let mut params = Parameters::zeros(&config);
        let expected: Vec<(String, (usize, usize))> = params
            .tensors()
            .into_iter()
            .map(|(n, m)| (n, m.shape()))
            .collect();
        let stored: Vec<&TensorHeader> = table.collect();
        if stored.len() != expected.len() {
            return Err(Error::Format(format!(
                "{} parameter tensors stored, {} expected",
                stored.len(),
                expected.len()
            )));
        }
        let mut loaded = Vec::with_capacity(stored.len());
        for (t, (name, shape)) in stored.iter().zip(&expected) {
            if &t.name != name || (t.rows, t.cols) != *shape {
                return Err(Error::Format(format!(
                    "tensor {} {}x{} does not match expected {name} {}x{}",
                    t.name, t.rows, t.cols, shape.0, shape.1
                )));
            }
            loaded.push(read_tensor(t)?);
        }
        if !data.is_empty() {
            return Err(Error::Format(format!("{} trailing bytes", data.len())));
        }
        let mut loaded = loaded.into_iter();
        params.for_each_mut(|_, m| *m = loaded.next().expect("counted above"));

        Ok(TaggerModel {
            encoder,
            config,
            params,
            provenance: header.provenance,
        })
    }
}

impl Annotator for TaggerModel {
    fn label(&self, sentence: &Sentence) -> Vec<Label> {
        self.predict(sentence).labels
    }
}

pub fn predict(model: &TaggerModel, sentence: &Sentence) -> PredictionResult {
    model.predict(sentence)
}

pub fn annotate(model: &TaggerModel, text: &str, doc_id: &str) -> Vec<MentionSpan> {
    model.annotate(text, doc_id)
}

pub fn save_model(model: &TaggerModel, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TaggerModel> {
    TaggerModel::load(path)
}

#[derive(Serialize, Deserialize)]
struct EncoderHeader {
    method: EncoderMethod,
    flag_layout: Vec<String>,
    vocabulary: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    encoder: EncoderHeader,
    network: NetworkConfig,
    provenance: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_bio_columns;
    use crate::encoder::parse_embeddings;

    fn tiny_corpus() -> Vec<Sentence> {
        let text = "Aspirin\tB\nhas\tO\nan\tO\nantiplatelet\tB\neffect\tI\n.\tO\n\n\
                    We\tO\ngave\tO\nIbuprofen\tB\ntoday\tO\n.\tO\n";
        parse_bio_columns(text)
            .unwrap()
            .sentences()
            .cloned()
            .collect()
    }

    fn small_spec(encoder: EncoderMethod, variant: NetworkVariant) -> ModelSpec {
        ModelSpec {
            dense_size: 8,
            lstm_cells: 4,
            learning_rate: 0.1,
            ..ModelSpec::new(encoder, variant)
        }
    }

    fn quick(epochs: usize) -> TrainingConfig {
        TrainingConfig {
            epochs,
            seed: 5,
            ..Default::default()
        }
    }

    #[test]
    fn rejects_bad_training_input() {
        let spec = small_spec(EncoderMethod::Tri, NetworkVariant::Blstm);
        assert!(train(&tiny_corpus(), &spec, None, &quick(0)).is_err());
        let mut unlabeled = tiny_corpus();
        unlabeled[1].labels = None;
        assert!(train(&unlabeled, &spec, None, &quick(1)).is_err());
        let emb = small_spec(EncoderMethod::Emb, NetworkVariant::Ff);
        assert!(matches!(
            train(&tiny_corpus(), &emb, None, &quick(1)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let spec = small_spec(EncoderMethod::Tri, NetworkVariant::Blstm);
        let a = train(&tiny_corpus(), &spec, None, &quick(3)).unwrap();
        let b = train(&tiny_corpus(), &spec, None, &quick(3)).unwrap();
        assert_eq!(a.model.params, b.model.params);
        assert_eq!(a.losses, b.losses);
        assert_eq!(a.losses.len(), 3);
    }

    #[test]
    fn training_reduces_loss() {
        let spec = small_spec(EncoderMethod::Dict, NetworkVariant::Lstm);
        let out = train(&tiny_corpus(), &spec, None, &quick(60)).unwrap();
        assert!(out.losses.last().unwrap() < &out.losses[0]);
    }

    #[test]
    fn predictions_are_distributions() {
        let spec = small_spec(EncoderMethod::Tri, NetworkVariant::Ff);
        let model = train(&tiny_corpus(), &spec, None, &quick(2)).unwrap().model;
        let s = &tiny_corpus()[0];
        let p = model.predict(s);
        assert_eq!(p.len(), s.len());
        for (d, l) in p.distributions.iter().zip(&p.labels) {
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(*l, argmax(d));
        }
        assert!(model.predict(&Sentence::default()).is_empty());
        assert!(model.annotate("", "d").is_empty());
    }

    #[test]
    fn argmax_breaks_ties_in_class_order() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), Label::B);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), Label::I);
        assert_eq!(argmax(&[1.0 / 3.0; 3]), Label::B);
    }

    #[test]
    fn annotate_offsets_in_bounds() {
        let spec = small_spec(EncoderMethod::Tri, NetworkVariant::Blstm);
        let model = train(&tiny_corpus(), &spec, None, &quick(5)).unwrap().model;
        let text = "Aspirin has an antiplatelet effect. We gave Ibuprofen today.";
        let n = text.chars().count();
        for m in model.annotate(text, "x") {
            assert!(m.begin < m.end && m.end <= n);
        }
    }

    fn roundtrip(model: &TaggerModel) -> TaggerModel {
        TaggerModel::from_bytes(&model.to_bytes().unwrap()).unwrap()
    }

    #[test]
    fn model_bytes_roundtrip_bit_exact() {
        let table = parse_embeddings("aspirin 0.1 0.2\nhas -1 0.5\neffect 3 1e-3\n").unwrap();
        for (enc, emb) in [
            (EncoderMethod::Tri, None),
            (EncoderMethod::Dict, None),
            (EncoderMethod::Emb, Some(table)),
        ] {
            let spec = small_spec(enc, NetworkVariant::Blstm);
            let mut model = train(&tiny_corpus(), &spec, emb, &quick(2)).unwrap().model;
            model.provenance = serde_json::json!({"seed": 5, "note": "ü"});
            let back = roundtrip(&model);
            assert_eq!(back, model);
            for s in tiny_corpus() {
                assert_eq!(back.predict(&s), model.predict(&s));
            }
            assert_eq!(back.to_bytes().unwrap(), model.to_bytes().unwrap());
        }
    }

    #[test]
    fn model_file_corruption_is_detected() {
        let spec = small_spec(EncoderMethod::Tri, NetworkVariant::Lstm);
        let model = train(&tiny_corpus(), &spec, None, &quick(1)).unwrap().model;
        let bytes = model.to_bytes().unwrap();

        let truncated = &bytes[..bytes.len() - 100];
        assert!(matches!(
            TaggerModel::from_bytes(truncated),
            Err(Error::Checksum)
        ));

        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        assert!(matches!(
            TaggerModel::from_bytes(&flipped),
            Err(Error::Checksum)
        ));

        let mut bumped = bytes.clone();
        bumped[8..12].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
        assert!(matches!(
            TaggerModel::from_bytes(&bumped),
            Err(Error::UnsupportedVersion { found: 2, .. })
        ));

        assert!(matches!(
            TaggerModel::from_bytes(b"nonsense"),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        let spec = small_spec(EncoderMethod::Dict, NetworkVariant::Ff);
        let model = train(&tiny_corpus(), &spec, None, &quick(1)).unwrap().model;
        save_model(&model, &path).unwrap();
        assert_eq!(load_model(&path).unwrap(), model);
        assert!(matches!(
            load_model(dir.path().join("missing")),
            Err(Error::Io { .. })
        ));
    }
}
