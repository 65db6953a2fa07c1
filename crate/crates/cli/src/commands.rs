use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::json;

use trilstm::corpus::{
    char_slice, parse_standoff, read_bio_column_file, read_standoff, sample_split,
};
use trilstm::encoder::{load_embeddings, EmbeddingTable};
use trilstm::eval::{self, evaluate_annotations, evaluate_sentences, render_jsonl, render_table};
use trilstm::experiment::{compare_configs as run_grid, render_grid, GridConfig};
use trilstm::network::{gradient_check_with, NetworkConfig};
use trilstm::synth::{synth_columns, synth_embeddings, SynthConfig};
use trilstm::tagger::{train_with_progress, ModelSpec, TrainingConfig};
use trilstm::{Corpus, EncoderMethod, Sentence, TaggerModel};

use crate::run::{
    AnnotateArgs, CompareArgs, CorpusArgs, CorpusFormat, EvaluateArgs, GradcheckArgs, RunConfig,
    SynthArgs, TrainArgs,
};

/// Invalid flag combinations, detected before any work starts.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

#[derive(Debug)]
struct GradcheckFailed(String);

impl fmt::Display for GradcheckFailed {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for GradcheckFailed {}

pub fn category(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if cause.is::<Usage>() {
            return "usage";
        }
        if cause.is::<GradcheckFailed>() {
            return "gradcheck";
        }
        if let Some(e) = cause.downcast_ref::<trilstm::Error>() {
            return e.category();
        }
        if cause.is::<io::Error>() {
            return "io";
        }
        if cause.is::<serde_json::Error>() {
            return "parse";
        }
    }
    "internal"
}

fn usage(message: impl Into<String>) -> anyhow::Error {
    Usage(message.into()).into()
}

fn load_corpus(args: &CorpusArgs) -> Result<Corpus> {
    let corpus = match args.format {
        CorpusFormat::Bio => read_bio_column_file(&args.corpus)?,
        CorpusFormat::Standoff => read_standoff(&args.corpus)?,
    };
    Ok(corpus)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("cannot write {}", path.display()))
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn json_line(out: &mut impl Write, value: &impl Serialize) -> Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<()> {
    if args.encoder == EncoderMethod::Emb && args.embeddings.is_none() {
        return Err(usage("the EMB encoder requires --embeddings"));
    }
    if args.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    let run = RunConfig {
        corpus: Some(args.corpus.corpus.clone()),
        format: Some(args.corpus.format),
        encoder: Some(args.encoder),
        network: Some(args.network.to_string()),
        epochs: Some(args.epochs),
        seed: Some(args.seed),
        train_size: args.train_size,
        model: Some(args.model.clone()),
        embeddings: args.embeddings.clone(),
        ..RunConfig::new("train")
    };

    let corpus = load_corpus(&args.corpus)?;
    let embeddings = args.embeddings.as_ref().map(load_embeddings).transpose()?;
    let sentences: Vec<Sentence> = match args.train_size {
        Some(n) => sample_split(&corpus, n, 0, args.seed)?.0,
        None => corpus.sentences().cloned().collect(),
    };

    let log_path = args
        .log
        .clone()
        .unwrap_or_else(|| with_suffix(&args.model, ".log.jsonl"));
    let mut log = create(&log_path)?;
    json_line(&mut log, &json!({ "run": run.to_json() }))?;

    let spec = ModelSpec::new(args.encoder, args.network);
    let training = TrainingConfig {
        epochs: args.epochs,
        seed: args.seed,
        ..Default::default()
    };
    let mut log_error = None;
    let outcome = train_with_progress(&sentences, &spec, embeddings, &training, |stats| {
        eprintln!(
            "epoch {:>4}  loss {:.6}  {:.1}s",
            stats.epoch,
            stats.mean_loss,
            stats.elapsed.as_secs_f64()
        );
        if log_error.is_none() {
            log_error = json_line(&mut log, stats).err();
        }
    })?;
    if let Some(e) = log_error {
        return Err(e.context(format!("cannot write {}", log_path.display())));
    }
    log.flush()?;

    let mut model = outcome.model;
    model.provenance = json!({
        "run": run.to_json(),
        "training_sentences": sentences.len(),
        "final_loss": outcome.losses.last(),
    });
    model.save(&args.model)?;
    eprintln!("model written to {}", args.model.display());
    Ok(())
}

#[derive(Serialize)]
struct AnnotatedMention<'a> {
    begin: usize,
    end: usize,
    surface: &'a str,
}

#[derive(Serialize)]
struct AnnotatedDocument<'a> {
    doc_id: &'a str,
    text: &'a str,
    mentions: Vec<AnnotatedMention<'a>>,
    run: &'a serde_json::Value,
}

pub fn annotate(args: &AnnotateArgs) -> Result<()> {
    let run = RunConfig {
        input: args.input.clone(),
        model: Some(args.model.clone()),
        ..RunConfig::new("annotate")
    }
    .to_json();
    let model = TaggerModel::load(&args.model)?;

    let mut content = String::new();
    match &args.input {
        Some(path) => {
            content = fs::read_to_string(path)
                .with_context(|| format!("cannot read {}", path.display()))?
        }
        None => {
            io::stdin()
                .read_to_string(&mut content)
                .context("cannot read standard input")?;
        }
    }
    let documents: Vec<(String, String)> = if args.standoff {
        parse_standoff(&content)?
            .documents
            .into_iter()
            .map(|d| (d.doc_id, d.text))
            .collect()
    } else {
        content
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (format!("line{}", i + 1), l.to_string()))
            .collect()
    };

    let mut out: Box<dyn Write> = match &args.output {
        Some(path) => Box::new(create(path)?),
        None => Box::new(io::stdout().lock()),
    };
    for (doc_id, text) in &documents {
        let spans = model.annotate(text, doc_id);
        let record = AnnotatedDocument {
            doc_id,
            text,
            mentions: spans
                .iter()
                .map(|m| AnnotatedMention {
                    begin: m.begin,
                    end: m.end,
                    surface: char_slice(text, m.begin, m.end),
                })
                .collect(),
            run: &run,
        };
        json_line(&mut out, &record)?;
    }
    out.flush()?;
    Ok(())
}

fn write_reports(prefix: &Path, table: &str, jsonl: &str) -> Result<()> {
    write_file(&with_suffix(prefix, ".txt"), table)?;
    write_file(&with_suffix(prefix, ".jsonl"), jsonl)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    if args.annotations.is_some() && args.test_size.is_some() {
        return Err(usage("--test-size applies to model evaluation only"));
    }
    let run = RunConfig {
        corpus: Some(args.corpus.corpus.clone()),
        format: Some(args.corpus.format),
        annotations: args.annotations.clone(),
        model: args.model.clone(),
        seed: Some(args.seed),
        test_size: args.test_size,
        report: Some(args.report.clone()),
        mode: Some(args.mode),
        ..RunConfig::new("evaluate")
    };
    let gold = load_corpus(&args.corpus)?;

    let report = match (&args.annotations, &args.model) {
        (Some(path), _) => {
            let predicted = read_standoff(path)?;
            let descriptor = json!({
                "label": path.file_stem().map(|s| s.to_string_lossy().into_owned()),
                "run": run.to_json(),
            });
            evaluate_annotations(&predicted, &gold, args.mode, descriptor)?
        }
        (None, Some(path)) => {
            let model = TaggerModel::load(path)?;
            let descriptor = json!({
                "encoder": model.encoder.method(),
                "network": model.config.variant,
                "run": run.to_json(),
                "model": model.provenance,
            });
            match args.test_size {
                Some(n) => {
                    let test = sample_split(&gold, 0, n, args.seed)?.1;
                    evaluate_sentences(&model, &test, args.mode, descriptor)?
                }
                None => eval::evaluate(&model, &gold, args.mode, descriptor)?,
            }
        }
        (None, None) => return Err(usage("either --model or --annotations is required")),
    };

    let reports = [report];
    let table = render_table(&reports);
    write_reports(&args.report, &table, &render_jsonl(&reports)?)?;
    print!("{table}");
    Ok(())
}

pub fn compare_configs(args: &CompareArgs) -> Result<()> {
    if args.epochs == 0 {
        return Err(usage("--epochs must be at least 1"));
    }
    let run = RunConfig {
        corpus: Some(args.corpus.corpus.clone()),
        format: Some(args.corpus.format),
        epochs: Some(args.epochs),
        seed: Some(args.seed),
        train_size: Some(args.train_size),
        test_size: Some(args.test_size),
        embeddings: args.embeddings.clone(),
        report: Some(args.report.clone()),
        ..RunConfig::new("compare-configs")
    }
    .to_json();
    let corpus = load_corpus(&args.corpus)?;
    let embeddings = args.embeddings.as_ref().map(load_embeddings).transpose()?;
    let grid = GridConfig {
        seed: args.seed,
        epochs: args.epochs,
        train_size: args.train_size,
        test_size: args.test_size,
        ..Default::default()
    };
    let rows = run_grid(&corpus, &grid, embeddings.as_ref())?;

    let table = render_grid(&rows);
    let mut jsonl = String::new();
    for row in &rows {
        jsonl.push_str(&serde_json::to_string(&json!({ "row": row, "run": run }))?);
        jsonl.push('\n');
    }
    write_reports(&args.report, &table, &jsonl)?;
    print!("{table}");

    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.is_ok())
        .map(|r| format!("{}+{}", r.encoder, r.network))
        .collect();
    if !failed.is_empty() {
        bail!(trilstm::Error::Config(format!(
            "{} of {} configurations failed: {}",
            failed.len(),
            rows.len(),
            failed.join(", ")
        )));
    }
    Ok(())
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<()> {
    if args.tolerance.is_nan() || args.tolerance <= 0.0 {
        return Err(usage("--tolerance must be positive"));
    }
    let run = RunConfig {
        network: Some(format!("{:?}", args.network)),
        seed: Some(args.seed),
        report: args.report.clone(),
        extra: Some(json!({ "tolerance": args.tolerance, "corrupt": args.corrupt })),
        ..RunConfig::new("gradcheck")
    }
    .to_json();
    let mut report_out = args.report.as_deref().map(create).transpose()?;
    let mut failed = Vec::new();
    for variant in args.network.variants() {
        let config = NetworkConfig {
            input_dim: 8,
            dense_size: 6,
            lstm_cells: 4,
            ..NetworkConfig::new(variant, 8)
        };
        let report = gradient_check_with(&config, args.seed, args.tolerance, args.corrupt);
        println!(
            "{variant:<6} {}  max relative error {:.3e} (tolerance {:.0e})",
            if report.passed { "PASS" } else { "FAIL" },
            report.max_rel_error,
            args.tolerance
        );
        for block in &report.blocks {
            println!(
                "  {:<20} {:>5} entries  max rel {:.3e}",
                block.name, block.entries, block.max_rel_error
            );
        }
        if let Some(out) = report_out.as_mut() {
            json_line(out, &json!({ "report": report, "run": run }))?;
        }
        if !report.passed {
            failed.push(variant.to_string());
        }
    }
    if let Some(out) = report_out.as_mut() {
        out.flush()?;
    }
    if !failed.is_empty() {
        return Err(
            GradcheckFailed(format!("gradient check failed for {}", failed.join(", "))).into(),
        );
    }
    Ok(())
}

fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let mut out = create(path)?;
    writeln!(out, "{} {}", table.len(), table.dim())?;
    for (word, vector) in table
        .words()
        .iter()
        .zip(table.vectors().chunks(table.dim()))
    {
        write!(out, "{word}")?;
        for v in vector {
            write!(out, " {v}")?;
        }
        writeln!(out)?;
    }
    out.flush()?;
    Ok(())
}

pub fn synth(args: &SynthArgs) -> Result<()> {
    let config = SynthConfig {
        sentences: args.sentences,
        seed: args.seed,
        misspell_rate: args.misspell_rate,
        case_mangle_rate: args.case_mangle_rate,
        mention_density: args.mention_density,
        sentences_per_doc: args.sentences_per_doc,
        ..Default::default()
    };
    let run = RunConfig {
        seed: Some(args.seed),
        embeddings: args.embeddings.clone(),
        extra: Some(json!({ "synth": config, "output": args.output, "dim": args.dim })),
        ..RunConfig::new("synth")
    };
    write_file(&args.output, &synth_columns(&config)?)?;
    if let Some(path) = &args.embeddings {
        write_embeddings(path, &synth_embeddings(&config, args.dim)?)?;
    }
    // column files have no comment syntax, so provenance goes alongside
    let sidecar = with_suffix(&args.output, ".run.json");
    write_file(&sidecar, &serde_json::to_string_pretty(&run.to_json())?)?;
    Ok(())
}
