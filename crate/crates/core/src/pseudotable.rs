//! Per-epoch schema sampling and pseudo-table construction.
//!
//! Randomness comes from [`crate::rng::Stream`]s keyed by
//! `(base_seed, epoch)` for schema sampling and by
//! `(base_seed, epoch, table_index, column_index)` for cell draws, so a
//! table's contents never depend on generation order.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{SchemaCollection, TableSchema};
use crate::prompt::Table;
use crate::prototype::ClassPrototypeStore;
use crate::rng::{Stream, TAG_CELL_DRAW, TAG_SCHEMA_SAMPLING};

/// Row count used when none is given.
pub const DEFAULT_ROW_SIZE: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudoTableError {
    #[error("schema collection is empty")]
    EmptyCollection,
    #[error("sampling ratio must be in (0, 1], got {0}")]
    InvalidRatio(f64),
    #[error("row size must be positive")]
    ZeroRows,
    #[error("no prototype for class `{0}`")]
    MissingPrototype(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct SamplerSeed {
    pub base_seed: u64,
    pub epoch: u64,
}

impl SamplerSeed {
    pub fn new(base_seed: u64, epoch: u64) -> Self {
        Self { base_seed, epoch }
    }

    pub fn with_epoch(self, epoch: u64) -> Self {
        Self { epoch, ..self }
    }
}

/// Fraction of the schema multiset drawn per epoch, in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct SamplingRatio(f64);

impl SamplingRatio {
    pub const FULL: SamplingRatio = SamplingRatio(1.0);

    pub fn new(r: f64) -> Result<Self, PseudoTableError> {
        if r.is_finite() && r > 0.0 && r <= 1.0 {
            Ok(Self(r))
        } else {
            Err(PseudoTableError::InvalidRatio(r))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `ceil(r * n)`, clamped to `[1, n]` for non-empty `n`.
    ///
    /// Products within a relative 1e-9 of an integer snap to it, so
    /// decimal ratios such as 0.07 give the count their decimal value
    /// implies rather than the one their binary rounding does.
    pub fn sample_size(self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        let x = self.0 * n as f64;
        let nearest = x.round();
        let count = if (x - nearest).abs() <= 1e-9 * x.max(1.0) { nearest } else { x.ceil() };
        (count as usize).clamp(1, n)
    }
}

impl<'de> Deserialize<'de> for SamplingRatio {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = f64::deserialize(deserializer)?;
        SamplingRatio::new(r).map_err(serde::de::Error::custom)
    }
}

/// Indices into a collection of `len` schemas selected for one epoch,
/// without replacement, in draw order.
pub fn sample_schema_indices(len: usize, r: SamplingRatio, seed: SamplerSeed) -> Result<Vec<usize>, PseudoTableError> {
    if len == 0 {
        return Err(PseudoTableError::EmptyCollection);
    }
    let mut stream = Stream::keyed(&[TAG_SCHEMA_SAMPLING, seed.base_seed, seed.epoch]);
    Ok(stream.choose_distinct(len, r.sample_size(len)))
}

pub fn sample_schemas(schemas: &SchemaCollection, r: SamplingRatio, seed: SamplerSeed) -> Result<SchemaCollection, PseudoTableError> {
    let picked = sample_schema_indices(schemas.len(), r, seed)?;
    Ok(SchemaCollection::new(picked.into_iter().map(|i| schemas.schemas()[i].clone()).collect()))
}

/// A synthetic table: one column of `k` prototype values per header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoTable {
    pub headers: TableSchema,
    pub columns: Vec<Vec<String>>,
}

impl PseudoTable {
    pub fn row_count(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn to_table(&self, id: impl Into<String>) -> Table {
        Table::new(id, self.columns.clone())
    }
}

/// Fills each column with `k` values of its header's prototype: distinct
/// values when the prototype has at least `k`, otherwise drawn with
/// replacement. Columns sharing a header draw independently.
pub fn generate_pseudo_table(
    schema: &TableSchema,
    store: &ClassPrototypeStore,
    k: usize,
    seed: SamplerSeed,
    table_index: usize,
) -> Result<PseudoTable, PseudoTableError> {
    if k == 0 {
        return Err(PseudoTableError::ZeroRows);
    }
    let mut columns = Vec::with_capacity(schema.width());
    for (column_index, header) in schema.headers().iter().enumerate() {
        let proto = store.get(header).ok_or_else(|| PseudoTableError::MissingPrototype(header.clone()))?;
        let mut stream =
            Stream::keyed(&[TAG_CELL_DRAW, seed.base_seed, seed.epoch, table_index as u64, column_index as u64]);
        let picks = if proto.len() >= k {
            stream.choose_distinct(proto.len(), k)
        } else {
            stream.choose_with_replacement(proto.len(), k)
        };
        columns.push(picks.into_iter().map(|i| proto.values[i].clone()).collect());
    }
    Ok(PseudoTable { headers: schema.clone(), columns })
}

/// Samples one epoch's schemas and builds their tables. Each table is keyed
/// by the schema's index in `schemas`; the result pairs that index with
/// the table, in draw order.
pub fn generate_epoch_tables(
    schemas: &SchemaCollection,
    store: &ClassPrototypeStore,
    r: SamplingRatio,
    k: usize,
    seed: SamplerSeed,
) -> Result<Vec<(usize, PseudoTable)>, PseudoTableError> {
    let picked = sample_schema_indices(schemas.len(), r, seed)?;
    picked
        .into_par_iter()
        .map(|i| generate_pseudo_table(&schemas.schemas()[i], store, k, seed, i).map(|t| (i, t)))
        .collect()
}
