//! Fine-tuning dataset construction and JSONL export.
//!
//! Weight updates happen in an external trainer. This module produces what
//! the trainer consumes: for the privacy protocol one freshly sampled
//! dataset per epoch, for the performance protocol a single pre-generated
//! dataset covering every epoch. Each export carries a manifest holding
//! every parameter needed to regenerate it.

use std::borrow::Cow;
use std::fs::File;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::DomainConfig;
use crate::prompt::{render_table_prompts, PromptDesign, PromptError, PromptOptions, VALUE_SEPARATOR};
use crate::prototype::{ClassPrototypeStore, PrototypeError};
use crate::pseudotable::{generate_epoch_tables, PseudoTableError, SamplerSeed, SamplingRatio};

/// Epoch count used when none is given.
pub const DEFAULT_EPOCHS: usize = 20;

#[derive(Debug, Error)]
pub enum FineTuneError {
    #[error("epoch count must be positive")]
    ZeroEpochs,
    #[error(transparent)]
    Prototype(#[from] PrototypeError),
    #[error(transparent)]
    PseudoTable(#[from] PseudoTableError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed export line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FineTuneSample {
    pub prompt_text: String,
    /// Gold class, or the ", "-joined header list for all-columns designs.
    pub completion: String,
    pub epoch: u64,
    pub schema_index: usize,
    /// `None` for all-columns designs.
    pub column_index: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportVariant {
    /// One dataset per epoch, regenerated each epoch.
    Privacy,
    /// One fixed dataset, all epochs pre-generated.
    Performance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    ChatMessages,
    PromptCompletion,
}

/// Knobs shared by every epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetParams {
    pub r: SamplingRatio,
    pub k: usize,
    pub design: PromptDesign,
    pub prompt_options: PromptOptions,
}

impl Default for DatasetParams {
    fn default() -> Self {
        Self {
            r: SamplingRatio::FULL,
            k: crate::pseudotable::DEFAULT_ROW_SIZE,
            design: PromptDesign::default(),
            prompt_options: PromptOptions::default(),
        }
    }
}

/// One epoch of samples. `config` is expected to be missing-class
/// augmented already; prompts list `config.learn_classes`.
pub fn build_epoch_dataset(
    config: &DomainConfig,
    store: &ClassPrototypeStore,
    params: &DatasetParams,
    seed: SamplerSeed,
) -> Result<Vec<FineTuneSample>, FineTuneError> {
    store.check_covers(&config.learn_classes)?;
    let tables = generate_epoch_tables(&config.schemas, store, params.r, params.k, seed)?;
    let mut samples = Vec::new();
    for (schema_index, table) in tables {
        let view = table.to_table(format!("epoch-{}/schema-{}", seed.epoch, schema_index));
        let prompts = render_table_prompts(&view, &config.learn_classes, params.design, &params.prompt_options)?;
        let headers = table.headers.headers();
        for prompt in prompts {
            let completion = match prompt.target_column {
                Some(i) => headers[i].clone(),
                None => headers.join(VALUE_SEPARATOR),
            };
            samples.push(FineTuneSample {
                prompt_text: prompt.text,
                completion,
                epoch: seed.epoch,
                schema_index,
                column_index: prompt.target_column,
            });
        }
    }
    Ok(samples)
}

/// Epoch datasets for `0..epochs`, each from its own seed stream.
pub fn build_epoch_datasets(
    config: &DomainConfig,
    store: &ClassPrototypeStore,
    params: &DatasetParams,
    epochs: usize,
    base_seed: u64,
) -> Result<Vec<Vec<FineTuneSample>>, FineTuneError> {
    if epochs == 0 {
        return Err(FineTuneError::ZeroEpochs);
    }
    (0..epochs as u64)
        .into_par_iter()
        .map(|epoch| build_epoch_dataset(config, store, params, SamplerSeed::new(base_seed, epoch)))
        .collect()
}

/// Concatenation of every epoch's dataset, in epoch order.
pub fn build_fixed_dataset(
    config: &DomainConfig,
    store: &ClassPrototypeStore,
    params: &DatasetParams,
    epochs: usize,
    base_seed: u64,
) -> Result<Vec<FineTuneSample>, FineTuneError> {
    Ok(build_epoch_datasets(config, store, params, epochs, base_seed)?.into_iter().flatten().collect())
}

#[derive(Serialize, Deserialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize, Deserialize)]
struct ChatRecord<'a> {
    #[serde(borrow)]
    messages: Vec<Message<'a>>,
}

#[derive(Serialize, Deserialize)]
struct PromptCompletionRecord<'a> {
    prompt: Cow<'a, str>,
    completion: Cow<'a, str>,
}

/// Writes one JSON object per sample, LF-terminated. Returns the number of
/// lines written.
pub fn export_jsonl<W: Write>(samples: &[FineTuneSample], mut sink: W, format: ExportFormat) -> Result<usize, FineTuneError> {
    for s in samples {
        let line = match format {
            ExportFormat::ChatMessages => serde_json::to_string(&ChatRecord {
                messages: vec![
                    Message { role: "user", content: &s.prompt_text },
                    Message { role: "assistant", content: &s.completion },
                ],
            }),
            ExportFormat::PromptCompletion => {
                serde_json::to_string(&PromptCompletionRecord { prompt: Cow::Borrowed(&s.prompt_text), completion: Cow::Borrowed(&s.completion) })
            }
        }
        .map_err(std::io::Error::other)?;
        sink.write_all(line.as_bytes())?;
        sink.write_all(b"\n")?;
    }
    sink.flush()?;
    Ok(samples.len())
}

/// Reads an export back into `(prompt, completion)` pairs.
pub fn read_jsonl<R: BufRead>(source: R, format: ExportFormat) -> Result<Vec<(String, String)>, FineTuneError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        let malformed = |reason: String| FineTuneError::Malformed { line: i + 1, reason };
        match format {
            ExportFormat::PromptCompletion => {
                let r: PromptCompletionRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
                out.push((r.prompt.into_owned(), r.completion.into_owned()));
            }
            ExportFormat::ChatMessages => {
                let v: serde_json::Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
                let content = |idx: usize, role: &str| -> Result<String, FineTuneError> {
                    let m = &v["messages"][idx];
                    if m["role"] != role {
                        return Err(malformed(format!("message {idx} is not `{role}`")));
                    }
                    m["content"].as_str().map(str::to_string).ok_or_else(|| malformed("missing content".into()))
                };
                out.push((content(0, "user")?, content(1, "assistant")?));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportManifest {
    pub variant: ExportVariant,
    pub format: ExportFormat,
    pub epochs: usize,
    pub r: f64,
    pub k: usize,
    pub e: usize,
    pub base_seed: u64,
    pub design: PromptDesign,
    pub max_cell_chars: Option<usize>,
    pub class_count: usize,
    /// Schema count after missing-class augmentation.
    pub schema_count: usize,
    pub augmented_schemas: usize,
    pub counts_per_epoch: Vec<usize>,
    pub total_samples: usize,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct ExportRequest<'a> {
    /// Raw domain; augmentation is applied here.
    pub config: &'a DomainConfig,
    pub store: &'a ClassPrototypeStore,
    pub params: DatasetParams,
    pub variant: ExportVariant,
    pub format: ExportFormat,
    pub epochs: usize,
    pub base_seed: u64,
    pub out_dir: &'a Path,
    /// File stem, `finetune` by default.
    pub stem: &'a str,
}

pub fn manifest_path(out_dir: &Path, stem: &str) -> PathBuf {
    out_dir.join(format!("{stem}.manifest.json"))
}

/// Augments the domain, builds every epoch, and writes the JSONL file(s)
/// plus `{stem}.manifest.json` into `out_dir`.
///
/// Privacy exports write `{stem}.epoch-NNN.jsonl` per epoch; performance
/// exports write a single `{stem}.jsonl`.
pub fn write_export(req: &ExportRequest<'_>) -> Result<ExportManifest, FineTuneError> {
    let augmented = req.config.augmented();
    let per_epoch = build_epoch_datasets(&augmented, req.store, &req.params, req.epochs, req.base_seed)?;
    std::fs::create_dir_all(req.out_dir)?;

    let mut files = Vec::new();
    let mut write_file = |name: String, samples: &[FineTuneSample]| -> Result<(), FineTuneError> {
        let mut w = BufWriter::new(File::create(req.out_dir.join(&name))?);
        export_jsonl(samples, &mut w, req.format)?;
        files.push(name);
        Ok(())
    };
    match req.variant {
        ExportVariant::Privacy => {
            for (epoch, samples) in per_epoch.iter().enumerate() {
                write_file(format!("{}.epoch-{:03}.jsonl", req.stem, epoch), samples)?;
            }
        }
        ExportVariant::Performance => {
            let all: Vec<FineTuneSample> = per_epoch.iter().flatten().cloned().collect();
            write_file(format!("{}.jsonl", req.stem), &all)?;
        }
    }

    let counts_per_epoch: Vec<usize> = per_epoch.iter().map(Vec::len).collect();
    let manifest = ExportManifest {
        variant: req.variant,
        format: req.format,
        epochs: req.epochs,
        r: req.params.r.get(),
        k: req.params.k,
        e: req.store.prototype_size(),
        base_seed: req.base_seed,
        design: req.params.design,
        max_cell_chars: req.params.prompt_options.max_cell_chars,
        class_count: augmented.learn_classes.len(),
        schema_count: augmented.schemas.len(),
        augmented_schemas: augmented.schemas.len() - req.config.schemas.len(),
        total_samples: counts_per_epoch.iter().sum(),
        counts_per_epoch,
        files,
    };
    let mut text = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    text.push('\n');
    std::fs::write(manifest_path(req.out_dir, req.stem), text)?;
    Ok(manifest)
}
