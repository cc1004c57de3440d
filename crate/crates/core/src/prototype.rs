//! Class prototypes: up to `e` representative values per semantic type,
//! obtained from a prototype model (or any knowledge base exposing the same
//! generation capability) and persisted as line-delimited JSON.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use indexmap::IndexMap;
use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ClassSet;
use crate::gateway::{GatewayError, Generator};

/// Prototype size used when none is given.
pub const DEFAULT_PROTOTYPE_SIZE: usize = 500;

const FORMAT_INSTRUCTION: &str = "Return one example per line with no numbering or extra text.";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrototypeError {
    #[error("prototype for class `{0}` is empty")]
    EmptyPrototype(String),
    #[error("backend failed for class `{class}`: {source}")]
    Backend { class: String, source: GatewayError },
    #[error("prototype generation failed for {} class(es): {}", .0.len(), .0.iter().map(|(c, e)| format!("{c} ({e})")).collect::<Vec<_>>().join("; "))]
    Failed(Vec<(String, String)>),
    #[error("prototype store format error at line {line}: {reason}")]
    StoreFormat { line: usize, reason: String },
    #[error("prototype size must be positive")]
    ZeroSize,
    #[error("prototype for class `{class}` has {len} values, more than the prototype size {size}")]
    Oversized { class: String, len: usize, size: usize },
    #[error("no prototype for class `{0}`")]
    MissingPrototype(String),
    #[error("prototype store has class `{0}` outside the class set")]
    UnexpectedClass(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for PrototypeError {
    fn from(e: std::io::Error) -> Self {
        PrototypeError::Io(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassPrototype {
    #[serde(rename = "class")]
    pub class_name: String,
    pub values: Vec<String>,
}

impl ClassPrototype {
    /// Normalizes `values` (trim, drop empties, dedupe) and enforces at
    /// least one survivor.
    pub fn new(class_name: impl Into<String>, values: impl IntoIterator<Item = impl AsRef<str>>) -> Result<Self, PrototypeError> {
        let class_name = class_name.into();
        let values = normalize_values(values.into_iter().map(|v| v.as_ref().to_string()));
        if values.is_empty() {
            return Err(PrototypeError::EmptyPrototype(class_name));
        }
        Ok(Self { class_name, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

fn normalize_values(values: impl Iterator<Item = String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for v in values {
        let v = v.trim();
        if !v.is_empty() && seen.insert(v.to_string()) {
            out.push(v.to_string());
        }
    }
    out
}

/// Prototypes for every class of a class set, in class order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassPrototypeStore {
    entries: IndexMap<String, ClassPrototype>,
    prototype_size: usize,
}

impl ClassPrototypeStore {
    pub fn new(prototypes: Vec<ClassPrototype>, prototype_size: usize) -> Result<Self, PrototypeError> {
        if prototype_size == 0 {
            return Err(PrototypeError::ZeroSize);
        }
        let mut entries = IndexMap::with_capacity(prototypes.len());
        for (i, p) in prototypes.into_iter().enumerate() {
            if p.values.is_empty() {
                return Err(PrototypeError::EmptyPrototype(p.class_name));
            }
            if p.len() > prototype_size {
                return Err(PrototypeError::Oversized { len: p.len(), class: p.class_name, size: prototype_size });
            }
            let name = p.class_name.clone();
            if entries.insert(name.clone(), p).is_some() {
                return Err(PrototypeError::StoreFormat { line: i + 1, reason: format!("duplicate class `{name}`") });
            }
        }
        Ok(Self { entries, prototype_size })
    }

    pub fn prototype_size(&self) -> usize {
        self.prototype_size
    }

    pub fn get(&self, class: &str) -> Option<&ClassPrototype> {
        self.entries.get(class)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassPrototype> {
        self.entries.values()
    }

    pub fn class_names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// The key set must equal `classes`.
    pub fn check_matches(&self, classes: &ClassSet) -> Result<(), PrototypeError> {
        if let Some(c) = classes.iter().find(|c| !self.entries.contains_key(*c)) {
            return Err(PrototypeError::MissingPrototype(c.to_string()));
        }
        if let Some(c) = self.entries.keys().find(|c| !classes.contains(c)) {
            return Err(PrototypeError::UnexpectedClass(c.clone()));
        }
        Ok(())
    }

    /// Every class of `classes` has a prototype; extra entries are allowed.
    pub fn check_covers(&self, classes: &ClassSet) -> Result<(), PrototypeError> {
        match classes.iter().find(|c| !self.entries.contains_key(*c)) {
            Some(c) => Err(PrototypeError::MissingPrototype(c.to_string())),
            None => Ok(()),
        }
    }

    pub fn write<W: Write>(&self, mut sink: W) -> Result<(), PrototypeError> {
        for p in self.entries.values() {
            let line = serde_json::to_string(p).map_err(|e| PrototypeError::Io(e.to_string()))?;
            writeln!(sink, "{line}")?;
        }
        Ok(())
    }

    /// Reads the line-delimited store format. Values are normalized; the
    /// prototype size becomes the largest prototype length.
    pub fn read<R: BufRead>(source: R) -> Result<Self, PrototypeError> {
        let mut prototypes = Vec::new();
        let mut seen = HashSet::new();
        for (idx, line) in source.lines().enumerate() {
            let line_no = idx + 1;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let raw: ClassPrototype = serde_json::from_str(&line)
                .map_err(|e| PrototypeError::StoreFormat { line: line_no, reason: e.to_string() })?;
            let class = raw.class_name.trim().to_string();
            if class.is_empty() {
                return Err(PrototypeError::StoreFormat { line: line_no, reason: "empty class name".into() });
            }
            if !seen.insert(class.clone()) {
                return Err(PrototypeError::StoreFormat { line: line_no, reason: format!("duplicate class `{class}`") });
            }
            let p = ClassPrototype::new(class.clone(), raw.values).map_err(|_| PrototypeError::StoreFormat {
                line: line_no,
                reason: format!("class `{class}` has no values"),
            })?;
            prototypes.push(p);
        }
        if prototypes.is_empty() {
            return Err(PrototypeError::StoreFormat { line: 0, reason: "store is empty".into() });
        }
        let size = prototypes.iter().map(ClassPrototype::len).max().unwrap_or(1);
        Self::new(prototypes, size)
    }
}

pub fn save_store(store: &ClassPrototypeStore, path: &Path) -> Result<(), PrototypeError> {
    let mut w = BufWriter::new(File::create(path)?);
    store.write(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_store(path: &Path) -> Result<ClassPrototypeStore, PrototypeError> {
    ClassPrototypeStore::read(BufReader::new(File::open(path)?))
}

pub fn build_prototype_prompt(class_name: &str, e: usize) -> String {
    debug_assert!(e >= 1 && !class_name.is_empty());
    format!("Generate {e} real-world examples of the semantic type {class_name} commonly found in web tables. {FORMAT_INSTRUCTION}")
}

/// Inverse of [`build_prototype_prompt`]: `(class_name, e)` if `prompt`
/// has its exact shape.
pub fn parse_prototype_prompt(prompt: &str) -> Option<(String, usize)> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| {
        Regex::new(r"^Generate (\d+) real-world examples of the semantic type (.+) commonly found in web tables\. Return one example per line with no numbering or extra text\.$")
            .expect("valid regex")
    });
    let caps = re.captures(prompt)?;
    let e = caps[1].parse().ok()?;
    Some((caps[2].to_string(), e))
}

fn enumeration_marker() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\d+[.)](\s+|$)").expect("valid regex"))
}

/// Splits a model response into prototype values: one per line, trimmed,
/// enumeration markers like `3. ` or `3) ` removed, deduplicated, at most
/// `e` kept.
pub fn parse_prototype_response(class_name: &str, raw: &str, e: usize) -> Result<Vec<String>, PrototypeError> {
    let marker = enumeration_marker();
    let lines = raw.split('\n').map(|line| {
        let line = line.trim();
        marker.replace(line, "").trim().to_string()
    });
    let mut values = normalize_values(lines);
    values.truncate(e);
    if values.is_empty() {
        return Err(PrototypeError::EmptyPrototype(class_name.to_string()));
    }
    Ok(values)
}

pub fn generate_class_prototype<G: Generator + ?Sized>(
    class_name: &str,
    e: usize,
    backend: &G,
) -> Result<ClassPrototype, PrototypeError> {
    if e == 0 {
        return Err(PrototypeError::ZeroSize);
    }
    let prompt = build_prototype_prompt(class_name, e);
    let raw = backend
        .generate(&prompt)
        .map_err(|source| PrototypeError::Backend { class: class_name.to_string(), source })?;
    let values = parse_prototype_response(class_name, &raw, e)?;
    Ok(ClassPrototype { class_name: class_name.to_string(), values })
}

/// Generates every class concurrently and assembles the store in class
/// order. Any per-class failure fails the whole build, naming every
/// failing class.
pub fn generate_all_prototypes<G: Generator + ?Sized>(
    classes: &ClassSet,
    e: usize,
    backend: &G,
) -> Result<ClassPrototypeStore, PrototypeError> {
    if e == 0 {
        return Err(PrototypeError::ZeroSize);
    }
    let names: Vec<&str> = classes.iter().collect();
    let results: Vec<Result<ClassPrototype, PrototypeError>> =
        names.par_iter().map(|c| generate_class_prototype(c, e, backend)).collect();

    let mut prototypes = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (name, r) in names.iter().zip(results) {
        match r {
            Ok(p) => prototypes.push(p),
            Err(err) => failures.push((name.to_string(), err.to_string())),
        }
    }
    if !failures.is_empty() {
        return Err(PrototypeError::Failed(failures));
    }
    ClassPrototypeStore::new(prototypes, e)
}

/// Serves prototype prompts from an existing store, e.g. one authored by
/// hand from a gazetteer or knowledge base. Other prompts are rejected.
pub struct KnowledgeBaseGenerator {
    store: ClassPrototypeStore,
}

impl KnowledgeBaseGenerator {
    pub fn new(store: ClassPrototypeStore) -> Self {
        Self { store }
    }
}

impl Generator for KnowledgeBaseGenerator {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        let (class, e) = parse_prototype_prompt(prompt)
            .ok_or_else(|| GatewayError::Protocol("knowledge base only answers prototype prompts".into()))?;
        let values = self.store.get(&class).map(|p| p.values.as_slice()).unwrap_or(&[]);
        Ok(values.iter().take(e).cloned().collect::<Vec<_>>().join("\n"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    struct Canned(&'static str);

    impl Generator for Canned {
        fn generate(&self, _prompt: &str) -> Result<String, GatewayError> {
            Ok(self.0.to_string())
        }
    }

    struct FailsFor(&'static str, AtomicUsize);

    impl Generator for FailsFor {
        fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
            self.1.fetch_add(1, Ordering::SeqCst);
            let (class, _) = parse_prototype_prompt(prompt).unwrap();
            if class == self.0 {
                Ok("\n\n".into())
            } else {
                Ok(format!("{class} one\n{class} two"))
            }
        }
    }

    #[test]
    fn prompt_text() {
        assert_eq!(
            build_prototype_prompt("City", 50),
            "Generate 50 real-world examples of the semantic type City commonly found in web tables. Return one example per line with no numbering or extra text."
        );
        assert_eq!(
            build_prototype_prompt("City", 1),
            "Generate 1 real-world examples of the semantic type City commonly found in web tables. Return one example per line with no numbering or extra text."
        );
    }

    #[test]
    fn prompt_parses_back() {
        let p = build_prototype_prompt("Postal Code", 500);
        assert_eq!(parse_prototype_prompt(&p), Some(("Postal Code".to_string(), 500)));
        assert_eq!(parse_prototype_prompt("Generate 5 things"), None);
    }

    #[test]
    fn response_strips_markers_and_dedupes() {
        let v = parse_prototype_response("City", "1. Paris\n2. Tokyo\n2. Tokyo\n", 500).unwrap();
        assert_eq!(v, vec!["Paris", "Tokyo"]);
        let v = parse_prototype_response("City", "1) Paris\n 10. Rome \r\n3.5\n2001: A Space Odyssey", 500).unwrap();
        assert_eq!(v, vec!["Paris", "Rome", "3.5", "2001: A Space Odyssey"]);
    }

    #[test]
    fn response_truncates_to_e() {
        let v = parse_prototype_response("City", "Paris\nTokyo\nBerlin", 2).unwrap();
        assert_eq!(v, vec!["Paris", "Tokyo"]);
    }

    #[test]
    fn response_without_values_is_empty_prototype() {
        assert_eq!(
            parse_prototype_response("City", "\n\n", 5).unwrap_err(),
            PrototypeError::EmptyPrototype("City".into())
        );
        assert!(parse_prototype_response("City", "1. \n2. ", 5).is_err());
    }

    #[test]
    fn generate_single_class() {
        let backend = Canned("Paris\nTokyo\nBerlin");
        let p = generate_class_prototype("City", 3, &backend).unwrap();
        assert_eq!(p, ClassPrototype { class_name: "City".into(), values: vec!["Paris".into(), "Tokyo".into(), "Berlin".into()] });
        assert_eq!(generate_class_prototype("City", 2, &backend).unwrap().values, vec!["Paris", "Tokyo"]);
        assert_eq!(
            generate_class_prototype("City", 3, &Canned("")).unwrap_err(),
            PrototypeError::EmptyPrototype("City".into())
        );
    }

    #[test]
    fn generate_all_aggregates_failures() {
        let classes = ClassSet::new(["A", "B", "C"]).unwrap();
        let backend = FailsFor("B", AtomicUsize::new(0));
        let err = generate_all_prototypes(&classes, 5, &backend).unwrap_err();
        match &err {
            PrototypeError::Failed(f) => {
                assert_eq!(f.len(), 1);
                assert_eq!(f[0].0, "B");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains('B'));
        // every class was still attempted
        assert_eq!(backend.1.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn generate_all_keeps_class_order() {
        let classes = ClassSet::new(["Z", "A", "M"]).unwrap();
        let store = generate_all_prototypes(&classes, 5, &FailsFor("-", AtomicUsize::new(0))).unwrap();
        assert_eq!(store.class_names().collect::<Vec<_>>(), vec!["Z", "A", "M"]);
        store.check_matches(&classes).unwrap();
        assert_eq!(store.prototype_size(), 5);
    }

    #[test]
    fn store_round_trip_via_file() {
        let store = ClassPrototypeStore::new(
            vec![
                ClassPrototype::new("City", ["Paris", "Tokyo"]).unwrap(),
                ClassPrototype::new("Country", ["Canada", "Côte d'Ivoire", "\"quoted\""]).unwrap(),
            ],
            3,
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.jsonl");
        save_store(&store, &path).unwrap();
        assert_eq!(load_store(&path).unwrap(), store);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"class":"City","values":["Paris","Tokyo"]}"#);
    }

    #[test]
    fn store_rejects_duplicate_class() {
        let text = "{\"class\":\"A\",\"values\":[\"x\"]}\n{\"class\":\"A\",\"values\":[\"y\"]}\n";
        let err = ClassPrototypeStore::read(text.as_bytes()).unwrap_err();
        assert!(matches!(err, PrototypeError::StoreFormat { line: 2, .. }), "{err:?}");
    }

    #[test]
    fn store_rejects_truncated_file() {
        let text = "{\"class\":\"A\",\"values\":[\"x\"]}\n{\"class\":\"B\",\"val";
        let err = ClassPrototypeStore::read(text.as_bytes()).unwrap_err();
        assert!(matches!(err, PrototypeError::StoreFormat { line: 2, .. }), "{err:?}");
        assert!(matches!(ClassPrototypeStore::read("".as_bytes()).unwrap_err(), PrototypeError::StoreFormat { .. }));
    }

    #[test]
    fn store_key_checks() {
        let store = ClassPrototypeStore::new(vec![ClassPrototype::new("A", ["x"]).unwrap()], 1).unwrap();
        assert_eq!(
            store.check_matches(&ClassSet::new(["A", "B"]).unwrap()).unwrap_err(),
            PrototypeError::MissingPrototype("B".into())
        );
        assert_eq!(store.check_matches(&ClassSet::new(["C"]).unwrap()).unwrap_err(), PrototypeError::MissingPrototype("C".into()));
        assert!(store.check_covers(&ClassSet::new(["A"]).unwrap()).is_ok());
    }

    #[test]
    fn oversized_prototype_rejected() {
        let err = ClassPrototypeStore::new(vec![ClassPrototype::new("A", ["x", "y"]).unwrap()], 1).unwrap_err();
        assert!(matches!(err, PrototypeError::Oversized { .. }));
    }

    #[test]
    fn knowledge_base_generator_serves_store() {
        let store = ClassPrototypeStore::new(vec![ClassPrototype::new("City", ["Paris", "Tokyo", "Berlin"]).unwrap()], 3).unwrap();
        let kb = KnowledgeBaseGenerator::new(store);
        assert_eq!(generate_class_prototype("City", 2, &kb).unwrap().values, vec!["Paris", "Tokyo"]);
        assert_eq!(generate_class_prototype("Moon", 2, &kb).unwrap_err(), PrototypeError::EmptyPrototype("Moon".into()));
    }
}
