//! Scoring, the three deployment scenarios, and the CO2 estimate.
//!
//! Every column gets exactly one predicted and one gold label, so micro
//! precision, micro recall and micro-F1 all equal the fraction of columns
//! predicted correctly.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotator::{read_tables, AnnotationRecord, Annotator, AnnotatorError, CorpusAnnotation, TableRecord};
use crate::domain::{load_class_list, ClassSet, DomainError};
use crate::gateway::{AnyBackend, Backend, BackendConfig, GatewayError, Provenance};
use crate::prompt::{PromptDesign, PromptOptions};

#[derive(Debug, Error)]
pub enum EvaluatorError {
    #[error("invalid evaluation input: {0}")]
    EvaluationInput(String),
    #[error("invalid scenario configuration: {0}")]
    ScenarioConfig(String),
    #[error("gold label `{class}` of table `{table}` is not in the prediction class list")]
    GoldOutsideDomain { class: String, table: String },
    #[error("invalid value: {0}")]
    Domain(String),
    #[error(transparent)]
    ClassList(#[from] DomainError),
    #[error(transparent)]
    Annotator(#[from] AnnotatorError),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("{path}: {message}")]
    Io { path: PathBuf, message: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EvaluatorError {
    EvaluatorError::Io { path: path.to_path_buf(), message: e.to_string() }
}

fn check_lengths(predictions: &[String], gold: &[String]) -> Result<(), EvaluatorError> {
    if predictions.len() != gold.len() {
        return Err(EvaluatorError::EvaluationInput(format!(
            "{} predictions for {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(EvaluatorError::EvaluationInput("no columns to score".into()));
    }
    Ok(())
}

pub fn micro_f1(predictions: &[String], gold: &[String]) -> Result<f64, EvaluatorError> {
    check_lengths(predictions, gold)?;
    let correct = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of columns with this gold label.
    pub support: usize,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores for every class seen in either list.
pub fn per_class_f1(predictions: &[String], gold: &[String]) -> Result<BTreeMap<String, ClassScores>, EvaluatorError> {
    check_lengths(predictions, gold)?;
    // (tp, fp, fn)
    let mut counts: BTreeMap<&str, (usize, usize, usize)> = BTreeMap::new();
    for (p, g) in predictions.iter().zip(gold) {
        if p == g {
            counts.entry(p).or_default().0 += 1;
        } else {
            counts.entry(p).or_default().1 += 1;
            counts.entry(g).or_default().2 += 1;
        }
    }
    Ok(counts
        .into_iter()
        .map(|(c, (tp, fp, fn_))| {
            let precision = ratio(tp, tp + fp);
            let recall = ratio(tp, tp + fn_);
            let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
            (c.to_string(), ClassScores { precision, recall, f1, support: tp + fn_ })
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub micro_f1: f64,
    #[serde(rename = "total")]
    pub total_columns: usize,
    #[serde(rename = "correct")]
    pub correct_columns: usize,
    pub per_class: BTreeMap<String, ClassScores>,
    /// `(gold, predicted, count)`, most frequent first.
    pub confusion: Vec<(String, String, usize)>,
}

impl EvaluationReport {
    pub fn from_labels(predictions: &[String], gold: &[String]) -> Result<Self, EvaluatorError> {
        let micro = micro_f1(predictions, gold)?;
        let per_class = per_class_f1(predictions, gold)?;
        let mut pairs: HashMap<(&str, &str), usize> = HashMap::new();
        for (p, g) in predictions.iter().zip(gold) {
            *pairs.entry((g, p)).or_default() += 1;
        }
        let mut confusion: Vec<(String, String, usize)> =
            pairs.into_iter().map(|((g, p), n)| (g.to_string(), p.to_string(), n)).collect();
        confusion.sort_by(|a, b| b.2.cmp(&a.2).then_with(|| a.0.cmp(&b.0)).then_with(|| a.1.cmp(&b.1)));
        Ok(Self {
            micro_f1: micro,
            total_columns: gold.len(),
            correct_columns: predictions.iter().zip(gold).filter(|(p, g)| p == g).count(),
            per_class,
            confusion,
        })
    }

    /// Pools the columns of every annotated table that has gold labels.
    pub fn from_annotations(annotations: &[AnnotationRecord], tables: &[TableRecord]) -> Result<Self, EvaluatorError> {
        let by_id: HashMap<&str, &AnnotationRecord> = annotations.iter().map(|a| (a.id.as_str(), a)).collect();
        let (mut predictions, mut gold) = (Vec::new(), Vec::new());
        for t in tables {
            let g = t
                .gold
                .as_ref()
                .ok_or_else(|| EvaluatorError::EvaluationInput(format!("table `{}` has no gold labels", t.id)))?;
            let Some(a) = by_id.get(t.id.as_str()) else {
                warn!("table `{}` has no annotation; skipped", t.id);
                continue;
            };
            if a.predictions.len() != g.len() {
                return Err(EvaluatorError::EvaluationInput(format!(
                    "table `{}`: {} predictions for {} columns",
                    t.id,
                    a.predictions.len(),
                    g.len()
                )));
            }
            predictions.extend(a.predictions.iter().map(|p| p.class.clone()));
            gold.extend(g.iter().cloned());
        }
        Self::from_labels(&predictions, &gold)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Micro-F1 followed by classes ranked by F1.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "micro-F1 {:.4} ({}/{} columns)", self.micro_f1, self.correct_columns, self.total_columns);
        let mut ranked: Vec<_> = self.per_class.iter().collect();
        ranked.sort_by(|a, b| b.1.f1.total_cmp(&a.1.f1).then_with(|| a.0.cmp(b.0)));
        let width = ranked.iter().map(|(c, _)| c.chars().count()).max().unwrap_or(5).max(5);
        let _ = writeln!(out, "{:width$}  precision  recall     f1  support", "class");
        for (c, s) in ranked {
            let _ = writeln!(out, "{c:width$}  {:>9.4}  {:>6.4}  {:>5.4}  {:>7}", s.precision, s.recall, s.f1, s.support);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    InDomain,
    CrossDomain,
    CrossOntology,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub learn_classes: ClassSet,
    pub pred_classes: ClassSet,
    pub tables: PathBuf,
    pub backend: BackendConfig,
    pub design: PromptDesign,
    pub prompt_options: PromptOptions,
    /// List `learn_classes` in prompts and rely on remapping alone.
    pub only_remapping: bool,
    /// Prediction label to the label the mock annotator learned for it.
    /// Only read when the backend is the mock.
    pub vocabulary: IndexMap<String, String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    scenario: Scenario,
    learn_classes: PathBuf,
    pred_classes: PathBuf,
    tables: PathBuf,
    #[serde(default)]
    design: PromptDesign,
    #[serde(default = "default_cell_chars")]
    max_cell_chars: usize,
    #[serde(default)]
    only_remapping: bool,
    #[serde(default)]
    vocabulary: IndexMap<String, String>,
    #[serde(default)]
    backend: BackendConfig,
}

fn default_cell_chars() -> usize {
    crate::prompt::DEFAULT_MAX_CELL_CHARS
}

impl ScenarioConfig {
    /// Reads a TOML scenario file. Relative paths resolve against the
    /// file's directory; `max_cell_chars = 0` disables truncation.
    pub fn from_path(path: &Path) -> Result<Self, EvaluatorError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let file: ScenarioFile = toml::from_str(&text).map_err(|e| EvaluatorError::ScenarioConfig(e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let load = |p: PathBuf| -> Result<ClassSet, EvaluatorError> {
            let p = resolve(p);
            let f = File::open(&p).map_err(|e| io_err(&p, e))?;
            Ok(load_class_list(BufReader::new(f))?)
        };
        let mut backend = file.backend;
        if let Some(c) = backend.mock.canned.take() {
            backend.mock.canned = Some(resolve(c));
        }
        let config = Self {
            scenario: file.scenario,
            learn_classes: load(file.learn_classes)?,
            pred_classes: load(file.pred_classes)?,
            tables: resolve(file.tables),
            backend,
            design: file.design,
            prompt_options: PromptOptions { max_cell_chars: (file.max_cell_chars > 0).then_some(file.max_cell_chars) },
            only_remapping: file.only_remapping,
            vocabulary: file.vocabulary,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), EvaluatorError> {
        match self.scenario {
            Scenario::InDomain if !self.pred_classes.same_members(&self.learn_classes) => Err(
                EvaluatorError::ScenarioConfig("in-domain requires the prediction and learning class lists to match".into()),
            ),
            Scenario::CrossDomain if !self.pred_classes.is_strict_subset_of(&self.learn_classes) => {
                Err(EvaluatorError::ScenarioConfig(
                    "cross-domain requires the prediction classes to be a strict subset of the learning classes".into(),
                ))
            }
            _ => Ok(()),
        }
    }
}

/// Rejects tables without gold labels or with gold outside `pred_classes`.
pub fn check_gold(tables: &[TableRecord], pred_classes: &ClassSet) -> Result<(), EvaluatorError> {
    for t in tables {
        let gold = t
            .gold
            .as_ref()
            .ok_or_else(|| EvaluatorError::EvaluationInput(format!("table `{}` has no gold labels", t.id)))?;
        if let Some(g) = gold.iter().find(|g| !pred_classes.contains(g)) {
            return Err(EvaluatorError::GoldOutsideDomain { class: g.clone(), table: t.id.clone() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: EvaluationReport,
    pub corpus: CorpusAnnotation,
}

/// Annotates `tables` with `backend` and scores the result.
pub fn run_scenario_with<B: Backend + ?Sized>(
    config: &ScenarioConfig,
    tables: &[TableRecord],
    backend: &B,
) -> Result<ScenarioOutcome, EvaluatorError> {
    config.validate()?;
    check_gold(tables, &config.pred_classes)?;
    let mut annotator = Annotator::new(backend, &config.pred_classes, config.design, config.prompt_options)?;
    if config.only_remapping {
        annotator = annotator.with_prompt_classes(config.learn_classes.clone())?;
    }
    let plain: Vec<_> = tables.iter().map(TableRecord::table).collect();
    let corpus = annotator.annotate_corpus(&plain);
    for f in &corpus.failures {
        warn!("table `{}` failed and is excluded from scoring: {}", f.table_ref, f.error);
    }
    let records: Vec<AnnotationRecord> = corpus.annotations.iter().map(AnnotationRecord::from).collect();
    let report = EvaluationReport::from_annotations(&records, tables)?;
    Ok(ScenarioOutcome { report, corpus })
}

/// Loads the tables, builds the configured backend and runs the scenario.
///
/// A mock backend is given the gold labels of the tables (translated
/// through `vocabulary` when present) so its policies have something to
/// answer from.
pub fn run_scenario(config: &ScenarioConfig) -> Result<EvaluationReport, EvaluatorError> {
    config.validate()?;
    let f = File::open(&config.tables).map_err(|e| io_err(&config.tables, e))?;
    let tables = read_tables(BufReader::new(f))?;
    check_gold(&tables, &config.pred_classes)?;
    let mut backend = config.backend.build()?;
    if let AnyBackend::Mock(m) = &mut backend {
        *m.provenance_mut() = mock_provenance(config, &tables);
    }
    Ok(run_scenario_with(config, &tables, &backend)?.report)
}

/// Gold knowledge for the mock annotator. With a vocabulary, each column
/// is registered under its learned label, aliased to the prediction label.
pub fn mock_provenance(config: &ScenarioConfig, tables: &[TableRecord]) -> Provenance {
    let mut p = Provenance::new(config.prompt_options);
    for (pred, learned) in &config.vocabulary {
        p.add_alias(learned, pred);
    }
    for t in tables {
        let Some(gold) = &t.gold else { continue };
        let labels: Vec<String> =
            gold.iter().map(|g| config.vocabulary.get(g).cloned().unwrap_or_else(|| g.clone())).collect();
        p.register_table(&t.table(), &labels);
    }
    p
}

/// `avg_power_kw × hours × intensity_kg_per_kwh`, in kg CO2e.
pub fn estimate_co2(avg_power_kw: f64, hours: f64, intensity_kg_per_kwh: f64) -> Result<f64, EvaluatorError> {
    for (name, v) in [("power", avg_power_kw), ("hours", hours), ("intensity", intensity_kg_per_kwh)] {
        if !v.is_finite() || v < 0.0 {
            return Err(EvaluatorError::Domain(format!("{name} must be a non-negative number, got {v}")));
        }
    }
    Ok(avg_power_kw * hours * intensity_kg_per_kwh)
}
