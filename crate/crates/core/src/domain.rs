//! Domain configuration: the class list, the schema collection, and the
//! missing-class augmentation applied before fine-tuning data is built.

use std::collections::HashSet;
use std::fmt;
use std::io::{BufRead, Write};

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DomainError {
    #[error("duplicate class name `{0}`")]
    DuplicateClass(String),
    #[error("class list is empty")]
    EmptyClassList,
    #[error("empty class name")]
    EmptyClassName,
    #[error("unknown class `{header}` on line {line}")]
    UnknownClass { header: String, line: usize },
    #[error("malformed schema on line {line}: {reason}")]
    MalformedSchema { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for DomainError {
    fn from(e: std::io::Error) -> Self {
        DomainError::Io(e.to_string())
    }
}

/// Ordered set of unique, non-empty semantic type names.
///
/// Names are compared byte-for-byte after trimming surrounding whitespace.
/// Iteration order is insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClassSet {
    classes: IndexSet<String>,
}

impl ClassSet {
    pub fn new<I, S>(names: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut classes = IndexSet::new();
        for name in names {
            let name = name.as_ref().trim();
            if name.is_empty() {
                return Err(DomainError::EmptyClassName);
            }
            if !classes.insert(name.to_string()) {
                return Err(DomainError::DuplicateClass(name.to_string()));
            }
        }
        Ok(Self { classes })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.classes.contains(name.trim())
    }

    pub fn get(&self, index: usize) -> Option<&str> {
        self.classes.get_index(index).map(String::as_str)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.classes.get_index_of(name.trim())
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &str> + '_ {
        self.classes.iter().map(String::as_str)
    }

    pub fn to_vec(&self) -> Vec<String> {
        self.classes.iter().cloned().collect()
    }

    /// Same members, ignoring order.
    pub fn same_members(&self, other: &ClassSet) -> bool {
        self.len() == other.len() && self.iter().all(|c| other.contains(c))
    }

    pub fn is_subset_of(&self, other: &ClassSet) -> bool {
        self.iter().all(|c| other.contains(c))
    }

    pub fn is_strict_subset_of(&self, other: &ClassSet) -> bool {
        self.is_subset_of(other) && self.len() < other.len()
    }
}

impl fmt::Display for ClassSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

impl<'a> IntoIterator for &'a ClassSet {
    type Item = &'a String;
    type IntoIter = indexmap::set::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.classes.iter()
    }
}

/// Column headers of one table, each a semantic type name. Repeats allowed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TableSchema {
    headers: Vec<String>,
}

impl TableSchema {
    pub fn new<I, S>(headers: I) -> Result<Self, DomainError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let headers: Vec<String> = headers.into_iter().map(|h| h.as_ref().trim().to_string()).collect();
        if headers.is_empty() {
            return Err(DomainError::MalformedSchema { line: 0, reason: "schema has no headers".into() });
        }
        if headers.iter().any(String::is_empty) {
            return Err(DomainError::MalformedSchema { line: 0, reason: "empty header".into() });
        }
        Ok(Self { headers })
    }

    pub fn headers(&self) -> &[String] {
        &self.headers
    }

    pub fn width(&self) -> usize {
        self.headers.len()
    }
}

/// Multiset of table schemas. Order and duplicates are significant.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaCollection {
    schemas: Vec<TableSchema>,
}

impl SchemaCollection {
    pub fn new(schemas: Vec<TableSchema>) -> Self {
        Self { schemas }
    }

    pub fn len(&self) -> usize {
        self.schemas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.schemas.is_empty()
    }

    pub fn schemas(&self) -> &[TableSchema] {
        &self.schemas
    }

    pub fn get(&self, index: usize) -> Option<&TableSchema> {
        self.schemas.get(index)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TableSchema> {
        self.schemas.iter()
    }
}

/// The learning domain: `C_learn` plus the schema collection.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DomainConfig {
    pub learn_classes: ClassSet,
    pub schemas: SchemaCollection,
}

impl DomainConfig {
    /// Checks every header of every schema against `learn_classes`.
    pub fn new(learn_classes: ClassSet, schemas: SchemaCollection) -> Result<Self, DomainError> {
        for (i, schema) in schemas.iter().enumerate() {
            if let Some(h) = schema.headers().iter().find(|h| !learn_classes.contains(h)) {
                return Err(DomainError::UnknownClass { header: h.clone(), line: i + 1 });
            }
        }
        Ok(Self { learn_classes, schemas })
    }

    /// Returns a copy with one singleton schema appended per class not
    /// covered by any schema.
    pub fn augmented(&self) -> DomainConfig {
        let missing = compute_missing_classes(&self.learn_classes, &self.schemas);
        DomainConfig { learn_classes: self.learn_classes.clone(), schemas: augment_schemas(&self.schemas, &missing) }
    }
}

/// One class name per line; blank lines are skipped.
pub fn load_class_list<R: BufRead>(source: R) -> Result<ClassSet, DomainError> {
    let mut names = Vec::new();
    for line in source.lines() {
        let line = line?;
        let name = line.trim();
        if !name.is_empty() {
            names.push(name.to_string());
        }
    }
    if names.is_empty() {
        return Err(DomainError::EmptyClassList);
    }
    ClassSet::new(names)
}

pub fn write_class_list<W: Write>(classes: &ClassSet, mut sink: W) -> std::io::Result<()> {
    for c in classes.iter() {
        writeln!(sink, "{c}")?;
    }
    Ok(())
}

/// One JSON array of header strings per line. Blank lines are skipped but
/// still count toward line numbers in errors.
pub fn load_schema_collection<R: BufRead>(source: R, classes: &ClassSet) -> Result<SchemaCollection, DomainError> {
    let mut schemas = Vec::new();
    for (idx, line) in source.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let headers: Vec<String> = serde_json::from_str(&line)
            .map_err(|e| DomainError::MalformedSchema { line: line_no, reason: e.to_string() })?;
        if headers.is_empty() {
            return Err(DomainError::MalformedSchema { line: line_no, reason: "schema has no headers".into() });
        }
        for h in &headers {
            if !classes.contains(h) {
                return Err(DomainError::UnknownClass { header: h.trim().to_string(), line: line_no });
            }
        }
        let schema = TableSchema::new(&headers).map_err(|e| match e {
            DomainError::MalformedSchema { reason, .. } => DomainError::MalformedSchema { line: line_no, reason },
            other => other,
        })?;
        schemas.push(schema);
    }
    Ok(SchemaCollection::new(schemas))
}

pub fn write_schema_collection<W: Write>(schemas: &SchemaCollection, mut sink: W) -> std::io::Result<()> {
    for s in schemas.iter() {
        let line = serde_json::to_string(s.headers()).map_err(std::io::Error::other)?;
        writeln!(sink, "{line}")?;
    }
    Ok(())
}

/// Classes of `classes` that appear in no schema, in `classes` order.
pub fn compute_missing_classes(classes: &ClassSet, schemas: &SchemaCollection) -> ClassSet {
    let covered: HashSet<&str> = schemas.iter().flat_map(|s| s.headers().iter().map(String::as_str)).collect();
    let missing: Vec<&str> = classes.iter().filter(|c| !covered.contains(c)).collect();
    ClassSet::new(missing).expect("subset of a valid class set")
}

/// Appends one single-column schema per missing class, in order.
pub fn augment_schemas(schemas: &SchemaCollection, missing: &ClassSet) -> SchemaCollection {
    let mut out = schemas.schemas.clone();
    out.extend(missing.iter().map(|c| TableSchema { headers: vec![c.to_string()] }));
    SchemaCollection::new(out)
}
