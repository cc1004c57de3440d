//! Prediction: prompt the annotation model with the test class list and map
//! each free-form answer onto that list.
//!
//! An answer equal to a candidate (after trimming) is taken as is. Any
//! other non-empty answer is embedded and assigned the candidate with the
//! highest cosine similarity, earliest candidate winning ties. An empty
//! answer falls back to the first candidate and is flagged.

use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ClassSet;
use crate::gateway::{Backend, Embedder, EmbeddingVector, GatewayError};
use crate::prompt::{render_table_prompts, PromptDesign, PromptError, PromptOptions, Table, VALUE_SEPARATOR};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnnotatorError {
    #[error("embedding dimensions differ: {left} vs {right}")]
    DimensionError { left: usize, right: usize },
    #[error("candidate class list is empty")]
    NoCandidates,
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("malformed tables file at line {line}: {reason}")]
    TablesFormat { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for AnnotatorError {
    fn from(e: std::io::Error) -> Self {
        AnnotatorError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    ExactMatch,
    EmbeddingRemap,
    EmptyOutput,
}

/// `dot(u, v) / (|u| |v|)`, or 0 when either vector has zero norm.
pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64, AnnotatorError> {
    if u.dimension() != v.dimension() {
        return Err(AnnotatorError::DimensionError { left: u.dimension(), right: v.dimension() });
    }
    let (nu, nv) = (u.norm(), v.norm());
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    let dot: f64 = u.values().iter().zip(v.values()).map(|(a, b)| a * b).sum();
    Ok(dot / (nu * nv))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Remapped {
    pub class: String,
    pub kind: MappingKind,
    pub similarity: f64,
}

/// Maps raw model output onto a fixed candidate list. Candidate embeddings
/// are computed on first use and shared by every later call.
pub struct LabelRemapper<'a, E: Embedder + ?Sized> {
    backend: &'a E,
    candidates: ClassSet,
    embeddings: Mutex<Option<Arc<Vec<EmbeddingVector>>>>,
}

impl<'a, E: Embedder + ?Sized> LabelRemapper<'a, E> {
    pub fn new(backend: &'a E, candidates: ClassSet) -> Result<Self, AnnotatorError> {
        if candidates.is_empty() {
            return Err(AnnotatorError::NoCandidates);
        }
        Ok(Self { backend, candidates, embeddings: Mutex::new(None) })
    }

    pub fn candidates(&self) -> &ClassSet {
        &self.candidates
    }

    fn candidate_embeddings(&self) -> Result<Arc<Vec<EmbeddingVector>>, GatewayError> {
        if let Some(e) = self.embeddings.lock().unwrap_or_else(|e| e.into_inner()).as_ref() {
            return Ok(Arc::clone(e));
        }
        let computed: Vec<EmbeddingVector> =
            self.candidates.iter().map(|c| self.backend.embed(c)).collect::<Result<_, _>>()?;
        let computed = Arc::new(computed);
        *self.embeddings.lock().unwrap_or_else(|e| e.into_inner()) = Some(Arc::clone(&computed));
        Ok(computed)
    }

    pub fn remap(&self, raw: &str) -> Result<Remapped, AnnotatorError> {
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            let first = self.candidates.get(0).expect("non-empty candidates");
            return Ok(Remapped { class: first.to_string(), kind: MappingKind::EmptyOutput, similarity: 0.0 });
        }
        if self.candidates.contains(trimmed) {
            return Ok(Remapped { class: trimmed.to_string(), kind: MappingKind::ExactMatch, similarity: 1.0 });
        }
        let query = self.backend.embed(trimmed)?;
        let candidates = self.candidate_embeddings()?;
        let mut best: Option<(usize, f64)> = None;
        for (i, c) in candidates.iter().enumerate() {
            let s = cosine_similarity(&query, c)?;
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
        let (i, similarity) = best.expect("non-empty candidates");
        Ok(Remapped {
            class: self.candidates.get(i).expect("index in range").to_string(),
            kind: MappingKind::EmbeddingRemap,
            similarity,
        })
    }
}

pub fn remap_label<E: Embedder + ?Sized>(raw: &str, candidates: &ClassSet, backend: &E) -> Result<Remapped, AnnotatorError> {
    LabelRemapper::new(backend, candidates.clone())?.remap(raw)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnPrediction {
    pub column_index: usize,
    pub raw_output: String,
    pub mapped_class: String,
    pub mapping_kind: MappingKind,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableAnnotation {
    pub table_ref: String,
    pub predictions: Vec<ColumnPrediction>,
    pub warnings: Vec<String>,
    pub latency: Duration,
}

impl TableAnnotation {
    pub fn classes(&self) -> Vec<String> {
        self.predictions.iter().map(|p| p.mapped_class.clone()).collect()
    }
}

/// Annotates tables against one test class list, reusing candidate
/// embeddings across tables.
pub struct Annotator<'a, B: Backend + ?Sized> {
    backend: &'a B,
    remapper: LabelRemapper<'a, B>,
    prompt_classes: Option<ClassSet>,
    design: PromptDesign,
    options: PromptOptions,
}

impl<'a, B: Backend + ?Sized> Annotator<'a, B> {
    pub fn new(backend: &'a B, c_pred: &ClassSet, design: PromptDesign, options: PromptOptions) -> Result<Self, AnnotatorError> {
        Ok(Self { backend, remapper: LabelRemapper::new(backend, c_pred.clone())?, prompt_classes: None, design, options })
    }

    /// Lists `classes` in prompts instead of the remapping target, which
    /// leaves the embedding remap alone to bridge the two vocabularies.
    pub fn with_prompt_classes(mut self, classes: ClassSet) -> Result<Self, AnnotatorError> {
        if classes.is_empty() {
            return Err(AnnotatorError::NoCandidates);
        }
        self.prompt_classes = Some(classes);
        Ok(self)
    }

    /// Classes every answer is mapped onto.
    pub fn classes(&self) -> &ClassSet {
        self.remapper.candidates()
    }

    /// Classes listed in prompts.
    pub fn prompt_classes(&self) -> &ClassSet {
        self.prompt_classes.as_ref().unwrap_or_else(|| self.remapper.candidates())
    }

    pub fn annotate_table(&self, table: &Table) -> Result<TableAnnotation, AnnotatorError> {
        let start = Instant::now();
        let n = table.width();
        let prompts = render_table_prompts(table, self.prompt_classes(), self.design, &self.options)?;
        let outputs: Vec<String> =
            prompts.par_iter().map(|p| self.backend.generate(&p.text)).collect::<Result<_, _>>()?;

        let mut warnings = Vec::new();
        let raw_per_column: Vec<String> = if self.design.is_target() {
            outputs
        } else {
            let mut pieces: Vec<String> = outputs[0].split(VALUE_SEPARATOR).map(str::to_string).collect();
            if pieces.len() != n {
                warnings.push(format!("model returned {} types for {} columns", pieces.len(), n));
                pieces.resize(n, String::new());
            }
            pieces
        };

        let mut predictions = Vec::with_capacity(n);
        for (column_index, raw) in raw_per_column.into_iter().enumerate() {
            let r = self.remapper.remap(&raw)?;
            if r.kind == MappingKind::EmptyOutput {
                warnings.push(format!("column {column_index}: empty output, defaulted to `{}`", r.class));
            }
            predictions.push(ColumnPrediction {
                column_index,
                raw_output: raw,
                mapped_class: r.class,
                mapping_kind: r.kind,
                similarity: r.similarity,
            });
        }
        for w in &warnings {
            warn!("{}: {w}", table.id);
        }
        Ok(TableAnnotation { table_ref: table.id.clone(), predictions, warnings, latency: start.elapsed() })
    }

    pub fn annotate_corpus(&self, tables: &[Table]) -> CorpusAnnotation {
        let total = tables.len();
        let done = std::sync::atomic::AtomicUsize::new(0);
        let results: Vec<Result<TableAnnotation, AnnotatorError>> = tables
            .par_iter()
            .map(|t| {
                let r = self.annotate_table(t);
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                if k.is_multiple_of(100) || k == total {
                    info!("annotated {k}/{total} tables");
                }
                r
            })
            .collect();
        let mut out = CorpusAnnotation::default();
        for (t, r) in tables.iter().zip(results) {
            match r {
                Ok(a) => out.annotations.push(a),
                Err(e) => {
                    warn!("{}: {e}", t.id);
                    out.failures.push(TableFailure { table_ref: t.id.clone(), error: e });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableFailure {
    pub table_ref: String,
    pub error: AnnotatorError,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusAnnotation {
    /// Successful annotations, in input order.
    pub annotations: Vec<TableAnnotation>,
    pub failures: Vec<TableFailure>,
}

pub fn annotate_table<B: Backend + ?Sized>(
    table: &Table,
    c_pred: &ClassSet,
    backend: &B,
    design: PromptDesign,
    options: &PromptOptions,
) -> Result<TableAnnotation, AnnotatorError> {
    Annotator::new(backend, c_pred, design, *options)?.annotate_table(table)
}

pub fn annotate_corpus<B: Backend + ?Sized>(
    tables: &[Table],
    c_pred: &ClassSet,
    backend: &B,
    design: PromptDesign,
    options: &PromptOptions,
) -> Result<CorpusAnnotation, AnnotatorError> {
    Ok(Annotator::new(backend, c_pred, design, *options)?.annotate_corpus(tables))
}

/// One line of a tables file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableRecord {
    pub id: String,
    pub columns: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<Vec<String>>,
}

impl TableRecord {
    pub fn table(&self) -> Table {
        Table::new(self.id.clone(), self.columns.clone())
    }
}

pub fn read_tables<R: BufRead>(source: R) -> Result<Vec<TableRecord>, AnnotatorError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TableRecord = serde_json::from_str(&line)
            .map_err(|e| AnnotatorError::TablesFormat { line: i + 1, reason: e.to_string() })?;
        if let Some(gold) = &rec.gold {
            if gold.len() != rec.columns.len() {
                return Err(AnnotatorError::TablesFormat {
                    line: i + 1,
                    reason: format!("{} gold labels for {} columns", gold.len(), rec.columns.len()),
                });
            }
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_tables<W: Write>(tables: &[TableRecord], mut sink: W) -> std::io::Result<()> {
    for t in tables {
        writeln!(sink, "{}", serde_json::to_string(t).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub class: String,
    pub kind: MappingKind,
    pub similarity: f64,
}

/// One line of an annotations file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub id: String,
    pub predictions: Vec<PredictionRecord>,
}

impl From<&TableAnnotation> for AnnotationRecord {
    fn from(a: &TableAnnotation) -> Self {
        Self {
            id: a.table_ref.clone(),
            predictions: a
                .predictions
                .iter()
                .map(|p| PredictionRecord { class: p.mapped_class.clone(), kind: p.mapping_kind, similarity: p.similarity })
                .collect(),
        }
    }
}

pub fn write_annotations<W: Write>(annotations: &[TableAnnotation], mut sink: W) -> std::io::Result<()> {
    for a in annotations {
        let rec = AnnotationRecord::from(a);
        writeln!(sink, "{}", serde_json::to_string(&rec).map_err(std::io::Error::other)?)?;
    }
    Ok(())
}

pub fn read_annotations<R: BufRead>(source: R) -> Result<Vec<AnnotationRecord>, AnnotatorError> {
    let mut out = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| AnnotatorError::TablesFormat { line: i + 1, reason: e.to_string() })?,
        );
    }
    Ok(out)
}
