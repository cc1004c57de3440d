//! Domain-based zero-shot column type annotation.
//!
//! The learning side turns a domain configuration (class list plus table
//! schemas) into class prototypes, per-epoch pseudo-tables, and fine-tuning
//! datasets for an external trainer. The prediction side renders prompts
//! against a test class list, queries an annotation model, remaps free-form
//! answers onto the class list by embedding similarity, and scores the
//! result with micro-F1.

pub mod annotator;
pub mod domain;
pub mod evaluator;
pub mod finetune;
pub mod gateway;
pub mod prompt;
pub mod prototype;
pub mod pseudotable;
pub mod rng;

pub use annotator::{annotate_corpus, annotate_table, cosine_similarity, remap_label, ColumnPrediction, MappingKind, TableAnnotation};
pub use domain::{ClassSet, DomainConfig, SchemaCollection, TableSchema};
pub use evaluator::{estimate_co2, micro_f1, per_class_f1, run_scenario, EvaluationReport, Scenario, ScenarioConfig};
pub use finetune::{build_epoch_dataset, build_fixed_dataset, export_jsonl, ExportFormat, ExportManifest, FineTuneSample};
pub use gateway::{Backend, BackendConfig, Embedder, EmbeddingVector, Generator, MockBackend};
pub use prompt::{render_prompt, render_table_prompts, AnnotationPrompt, PromptDesign, PromptOptions, Table};
pub use prototype::{generate_all_prototypes, ClassPrototype, ClassPrototypeStore};
pub use pseudotable::{generate_pseudo_table, sample_schemas, PseudoTable, SamplerSeed, SamplingRatio};
