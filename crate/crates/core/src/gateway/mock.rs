use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{prompt_fingerprint, Embedder, EmbeddingVector, GatewayError, Generator};
use crate::prompt::{
    join_values, PromptOptions, Table, TARGET_PREFIX, TASK_ALL_PREFIX, TASK_TARGET_PREFIX, VALUE_SEPARATOR,
};
use crate::prototype::parse_prototype_prompt;
use crate::rng::{Stream, TAG_MOCK_NOISE};

pub const DEFAULT_MOCK_DIMENSION: usize = 256;

/// How the mock answers annotation prompts.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnnotatorPolicy {
    /// Answers the gold class registered for the column.
    #[default]
    Oracle,
    /// Gold class with probability `p`, else a uniformly random other class
    /// from the prompt's list.
    Noisy(f64),
    /// Answers the first value of the target column.
    Echo,
}

/// Gold labels known to the mock, keyed by a column's rendered values.
///
/// Aliases model a fine-tuned annotator that learned one label vocabulary
/// but recognizes an equivalent label when the prompt offers it.
#[derive(Debug, Clone, Default)]
pub struct Provenance {
    gold_by_values: HashMap<String, String>,
    aliases: HashMap<String, Vec<String>>,
    options: PromptOptions,
}

impl Provenance {
    pub fn new(options: PromptOptions) -> Self {
        Self { options, ..Default::default() }
    }

    pub fn register_column(&mut self, values: &[String], gold: &str) {
        let key = join_values(values.iter().map(String::as_str), &self.options);
        self.gold_by_values.insert(key, gold.to_string());
    }

    /// Registers every column of `table`; `gold` is one label per column.
    pub fn register_table(&mut self, table: &Table, gold: &[String]) {
        for (col, g) in table.columns.iter().zip(gold) {
            self.register_column(col, g);
        }
    }

    pub fn add_alias(&mut self, label: &str, alias: &str) {
        self.aliases.entry(label.to_string()).or_default().push(alias.to_string());
    }

    pub fn gold_for(&self, rendered_values: &str) -> Option<&str> {
        self.gold_by_values.get(rendered_values).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.gold_by_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gold_by_values.is_empty()
    }

    /// The label the annotator would pick from `offered`: the gold label
    /// itself, else its first offered alias, else the gold label verbatim.
    fn resolve<'a>(&'a self, gold: &'a str, offered: &[&'a str]) -> &'a str {
        if offered.contains(&gold) {
            return gold;
        }
        self.aliases
            .get(gold)
            .and_then(|al| al.iter().find(|a| offered.contains(&a.as_str())))
            .map_or(gold, String::as_str)
    }
}

/// Deterministic offline backend.
///
/// Generation checks canned responses (keyed by prompt fingerprint) first,
/// then answers prototype prompts with synthesized values
/// (`{class}_example_{i}`) and annotation prompts according to the
/// [`AnnotatorPolicy`]. Embeddings are character-trigram counts hashed
/// into a fixed dimension and L2-normalized.
#[derive(Debug, Clone)]
pub struct MockBackend {
    canned: HashMap<String, String>,
    policy: AnnotatorPolicy,
    provenance: Provenance,
    seed: u64,
    dimension: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self::new(AnnotatorPolicy::Oracle, 0)
    }
}

impl MockBackend {
    pub fn new(policy: AnnotatorPolicy, seed: u64) -> Self {
        Self { canned: HashMap::new(), policy, provenance: Provenance::default(), seed, dimension: DEFAULT_MOCK_DIMENSION }
    }

    pub fn with_dimension(mut self, dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        self.dimension = dimension;
        self
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn with_canned(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.canned.insert(prompt_fingerprint(prompt), response.into());
        self
    }

    /// Canned responses keyed directly by fingerprint.
    pub fn with_canned_fingerprints(mut self, map: HashMap<String, String>) -> Self {
        self.canned.extend(map);
        self
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn policy(&self) -> AnnotatorPolicy {
        self.policy
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    fn answer_column(&self, rendered_values: &str, offered: &[&str], stream: &mut Stream) -> String {
        match self.policy {
            AnnotatorPolicy::Echo => rendered_values.split(VALUE_SEPARATOR).next().unwrap_or("").to_string(),
            AnnotatorPolicy::Oracle => match self.provenance.gold_for(rendered_values) {
                Some(gold) => self.provenance.resolve(gold, offered).to_string(),
                None => String::new(),
            },
            AnnotatorPolicy::Noisy(p) => {
                let Some(gold) = self.provenance.gold_for(rendered_values) else {
                    return String::new();
                };
                let label = self.provenance.resolve(gold, offered);
                let keep = stream.next_f64() < p;
                let others: Vec<&str> = offered.iter().copied().filter(|c| *c != label).collect();
                if keep || others.is_empty() {
                    label.to_string()
                } else {
                    others[stream.below(others.len() as u64) as usize].to_string()
                }
            }
        }
    }

    fn answer_annotation(&self, prompt: &str) -> Option<String> {
        let parsed = ParsedPrompt::parse(prompt)?;
        let offered: Vec<&str> = parsed.classes.split(VALUE_SEPARATOR).collect();
        let mut stream = Stream::keyed(&[TAG_MOCK_NOISE, self.seed, fingerprint_u64(prompt)]);
        match parsed.target {
            Some(target) => Some(self.answer_column(target, &offered, &mut stream)),
            None => {
                let answers: Vec<String> =
                    parsed.columns.iter().map(|c| self.answer_column(c, &offered, &mut stream)).collect();
                Some(answers.join(VALUE_SEPARATOR))
            }
        }
    }
}

impl Generator for MockBackend {
    fn generate(&self, prompt: &str) -> Result<String, GatewayError> {
        if let Some(text) = self.canned.get(&prompt_fingerprint(prompt)) {
            return Ok(text.clone());
        }
        if let Some((class, e)) = parse_prototype_prompt(prompt) {
            return Ok((1..=e).map(|i| format!("{class}_example_{i}")).collect::<Vec<_>>().join("\n"));
        }
        self.answer_annotation(prompt)
            .ok_or_else(|| GatewayError::Protocol("mock backend cannot interpret prompt".into()))
    }
}

impl Embedder for MockBackend {
    fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        Ok(trigram_embedding(text, self.dimension))
    }
}

fn fingerprint_u64(prompt: &str) -> u64 {
    let hex = prompt_fingerprint(prompt);
    u64::from_str_radix(&hex[..16], 16).expect("hex digest")
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Character trigrams of `text` (strings of one or two characters form a
/// single gram), each hashed with FNV-1a into one of `dimension` buckets,
/// counted, then L2-normalized. The empty string maps to the zero vector.
pub fn trigram_embedding(text: &str, dimension: usize) -> EmbeddingVector {
    let chars: Vec<char> = text.chars().collect();
    let mut counts = vec![0.0f64; dimension];
    if chars.is_empty() {
        return EmbeddingVector::zeros(dimension);
    }
    let mut add = |gram: &[char]| {
        let s: String = gram.iter().collect();
        counts[(fnv1a64(s.as_bytes()) % dimension as u64) as usize] += 1.0;
    };
    if chars.len() < 3 {
        add(&chars);
    } else {
        chars.windows(3).for_each(&mut add);
    }
    let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
    counts.iter_mut().for_each(|c| *c /= norm);
    EmbeddingVector::new(counts).expect("finite counts")
}

/// The parts of a rendered annotation prompt the mock needs.
struct ParsedPrompt<'a> {
    classes: &'a str,
    /// Rendered values of each column, in order.
    columns: Vec<String>,
    target: Option<&'a str>,
}

impl<'a> ParsedPrompt<'a> {
    fn parse(prompt: &'a str) -> Option<Self> {
        let mut classes = None;
        let mut target = None;
        let mut column_lines = Vec::new();
        let mut row_lines: Vec<&str> = Vec::new();
        for line in prompt.lines() {
            if let Some(rest) = line.strip_prefix(TASK_TARGET_PREFIX).or_else(|| line.strip_prefix(TASK_ALL_PREFIX)) {
                classes = Some(rest.strip_suffix('.').unwrap_or(rest));
            } else if let Some(rest) = line.strip_prefix(TARGET_PREFIX) {
                target = Some(rest);
            } else if let Some(rest) = strip_numbered(line, "Column ") {
                column_lines.push(rest.to_string());
            } else if let Some(rest) = strip_numbered(line, "Row ") {
                row_lines.push(rest);
            }
        }
        let classes = classes?;
        let columns = if !column_lines.is_empty() {
            column_lines
        } else {
            let rows: Vec<Vec<&str>> = row_lines.iter().map(|r| r.split(VALUE_SEPARATOR).collect()).collect();
            let width = rows.first().map_or(0, Vec::len);
            (0..width)
                .map(|j| rows.iter().map(|r| r.get(j).copied().unwrap_or("")).collect::<Vec<_>>().join(VALUE_SEPARATOR))
                .collect()
        };
        Some(Self { classes, columns, target })
    }
}

/// `"{prefix}{digits}: rest"` → `rest`.
fn strip_numbered<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    let rest = line.strip_prefix(prefix)?;
    let (num, rest) = rest.split_once(": ")?;
    if !num.is_empty() && num.bytes().all(|b| b.is_ascii_digit()) {
        Some(rest)
    } else {
        None
    }
}
