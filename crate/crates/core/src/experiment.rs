//! The encoder × network comparison grid.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{sample_split, Corpus};
use crate::encoder::{EmbeddingTable, EncoderMethod};
use crate::error::Result;
use crate::eval::{evaluate_sentences, BioReport, EvalMode, NerReport};
use crate::network::{NetworkConfig, NetworkVariant};
use crate::tagger::{train, ModelSpec, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    pub seed: u64,
    pub epochs: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub dense_size: usize,
    pub lstm_cells: usize,
    pub learning_rate: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            seed: 1,
            epochs: 100,
            train_size: 2000,
            test_size: 2000,
            dense_size: NetworkConfig::DENSE_SIZE,
            lstm_cells: NetworkConfig::LSTM_CELLS,
            learning_rate: NetworkConfig::LEARNING_RATE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub encoder: EncoderMethod,
    pub network: NetworkVariant,
    pub bio: Option<BioReport>,
    pub ner: Option<NerReport>,
    pub final_loss: Option<f64>,
    pub error: Option<String>,
}

impl GridRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

/// Trains and scores all nine encoder/network combinations on one split.
///
/// Rows are trained concurrently and returned in a fixed order (encoders
/// DICT, EMB, TRI; networks FF, LSTM, BLSTM). A failing combination yields a
/// row with `error` set; the others still run.
pub fn compare_configs(
    corpus: &Corpus,
    grid: &GridConfig,
    embeddings: Option<&EmbeddingTable>,
) -> Result<Vec<GridRow>> {
    let (train_set, test_set) = sample_split(corpus, grid.train_size, grid.test_size, grid.seed)?;
    let combos: Vec<(EncoderMethod, NetworkVariant)> = EncoderMethod::ALL
        .iter()
        .flat_map(|&e| NetworkVariant::ALL.iter().map(move |&n| (e, n)))
        .collect();

    let rows = combos
        .par_iter()
        .map(|&(encoder, network)| {
            let spec = ModelSpec {
                encoder,
                variant: network,
                dense_size: grid.dense_size,
                lstm_cells: grid.lstm_cells,
                learning_rate: grid.learning_rate,
            };
            let training = TrainingConfig {
                epochs: grid.epochs,
                seed: grid.seed,
                ..Default::default()
            };
            let outcome =
                train(&train_set, &spec, embeddings.cloned(), &training).and_then(|out| {
                    let descriptor = serde_json::json!({
                        "encoder": encoder,
                        "network": network,
                    });
                    let report =
                        evaluate_sentences(&out.model, &test_set, EvalMode::Both, descriptor)?;
                    Ok((out.losses.last().copied(), report))
                });
            match outcome {
                Ok((final_loss, report)) => GridRow {
                    encoder,
                    network,
                    bio: report.bio,
                    ner: report.ner,
                    final_loss,
                    error: None,
                },
                Err(e) => GridRow {
                    encoder,
                    network,
                    bio: None,
                    ner: None,
                    final_loss: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Macro BIO2 grid, one row per configuration.
pub fn render_grid(rows: &[GridRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<8} {:<8} {:>8} {:>8} {:>8} {:>8}",
        "encoder", "network", "BIO-P", "BIO-R", "BIO-F1", "NER-F1"
    );
    for row in rows {
        match (&row.bio, &row.ner, &row.error) {
            (Some(b), Some(n), None) => {
                let _ = writeln!(
                    out,
                    "{:<8} {:<8} {:>8.4} {:>8.4} {:>8.4} {:>8.4}",
                    row.encoder.to_string(),
                    row.network.to_string(),
                    b.macro_precision,
                    b.macro_recall,
                    b.macro_f1,
                    n.f1
                );
            }
            _ => {
                let _ = writeln!(
                    out,
                    "{:<8} {:<8} error: {}",
                    row.encoder.to_string(),
                    row.network.to_string(),
                    row.error.as_deref().unwrap_or("no report")
                );
            }
        }
    }
    out
}
