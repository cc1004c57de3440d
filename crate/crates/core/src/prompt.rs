//! Annotation prompt rendering.
//!
//! A prompt has four segments separated by blank lines: an introduction,
//! the table presentation, the task description with the candidate class
//! list, and the final answer slot. The default design presents the table
//! column by column and asks for the type of one target column; the other
//! three designs swap the presentation to rows and/or ask for every column
//! at once. Output uses LF newlines and carries no trailing newline.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::ClassSet;

pub const INTRO_COLUMNS: &str = "These are values of columns in a table. Each column starts with Column: followed by the values of that column. First, look at all the columns to understand the context of the table.";
pub const INTRO_ROWS: &str = "These are values of columns in a table. Each row starts with Row: followed by the values of that row. First, look at all the columns to understand the context of the table.";
pub const TASK_TARGET_PREFIX: &str = "Your task is to annotate the Target Column using one semantic type that matches the values of the Target Column and the context of the table from the following list: ";
pub const TASK_ALL_PREFIX: &str = "Your task is to annotate each column of the table, in order, using one semantic type per column from the following list: ";
pub const TARGET_PREFIX: &str = "Target Column: ";
pub const ANSWER_TARGET: &str = "Semantic Type:";
pub const ANSWER_ALL: &str = "Semantic Types:";
pub const VALUE_SEPARATOR: &str = ", ";
pub const DEFAULT_MAX_CELL_CHARS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("table has no columns")]
    EmptyTable,
    #[error("table has no rows")]
    NoRows,
    #[error("ragged table: column {column} has {actual} cells, expected {expected}")]
    RaggedTable { column: usize, expected: usize, actual: usize },
    #[error("target column {target} out of range for {columns} columns")]
    IndexError { target: usize, columns: usize },
    #[error("target-column design requires a target column")]
    MissingTarget,
    #[error("all-columns design does not take a target column")]
    UnexpectedTarget,
    #[error("candidate class list is empty")]
    NoClasses,
    #[error("unknown prompt design `{0}`")]
    UnknownDesign(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Presentation {
    ColumnByColumn,
    RowByRow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prediction {
    TargetColumn,
    AllColumns,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PromptDesign {
    pub presentation: Presentation,
    pub prediction: Prediction,
}

impl PromptDesign {
    pub const COLUMN_TARGET: PromptDesign =
        PromptDesign { presentation: Presentation::ColumnByColumn, prediction: Prediction::TargetColumn };
    pub const COLUMN_ALL: PromptDesign =
        PromptDesign { presentation: Presentation::ColumnByColumn, prediction: Prediction::AllColumns };
    pub const ROW_TARGET: PromptDesign =
        PromptDesign { presentation: Presentation::RowByRow, prediction: Prediction::TargetColumn };
    pub const ROW_ALL: PromptDesign = PromptDesign { presentation: Presentation::RowByRow, prediction: Prediction::AllColumns };

    pub fn all() -> [PromptDesign; 4] {
        [Self::COLUMN_TARGET, Self::COLUMN_ALL, Self::ROW_TARGET, Self::ROW_ALL]
    }

    /// Short name used on the command line and in manifests.
    pub fn slug(&self) -> &'static str {
        match (self.presentation, self.prediction) {
            (Presentation::ColumnByColumn, Prediction::TargetColumn) => "col-target",
            (Presentation::ColumnByColumn, Prediction::AllColumns) => "col-all",
            (Presentation::RowByRow, Prediction::TargetColumn) => "row-target",
            (Presentation::RowByRow, Prediction::AllColumns) => "row-all",
        }
    }

    pub fn is_target(&self) -> bool {
        self.prediction == Prediction::TargetColumn
    }
}

impl Default for PromptDesign {
    fn default() -> Self {
        Self::COLUMN_TARGET
    }
}

impl fmt::Display for PromptDesign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.slug())
    }
}

impl FromStr for PromptDesign {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::all()
            .into_iter()
            .find(|d| d.slug() == s)
            .ok_or_else(|| PromptError::UnknownDesign(s.to_string()))
    }
}

impl Serialize for PromptDesign {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.slug())
    }
}

impl<'de> Deserialize<'de> for PromptDesign {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PromptOptions {
    /// Cells longer than this many characters are cut; `None` disables.
    pub max_cell_chars: Option<usize>,
}

impl Default for PromptOptions {
    fn default() -> Self {
        Self { max_cell_chars: Some(DEFAULT_MAX_CELL_CHARS) }
    }
}

/// A header-less table: an identifier plus column-major cells.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table {
    pub id: String,
    pub columns: Vec<Vec<String>>,
}

impl Table {
    pub fn new(id: impl Into<String>, columns: Vec<Vec<String>>) -> Self {
        Self { id: id.into(), columns }
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Row count, after checking every column has the same length.
    pub fn row_count(&self) -> Result<usize, PromptError> {
        let first = self.columns.first().ok_or(PromptError::EmptyTable)?;
        let expected = first.len();
        for (i, col) in self.columns.iter().enumerate() {
            if col.len() != expected {
                return Err(PromptError::RaggedTable { column: i, expected, actual: col.len() });
            }
        }
        Ok(expected)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationPrompt {
    pub text: String,
    pub target_column: Option<usize>,
    pub candidate_classes: ClassSet,
    pub table_ref: String,
}

/// Cuts a cell to `max` characters and flattens line breaks so each
/// segment line stays a single line.
pub fn prepare_cell(cell: &str, options: &PromptOptions) -> String {
    let flat: String = cell.chars().map(|c| if c == '\n' || c == '\r' { ' ' } else { c }).collect();
    match options.max_cell_chars {
        Some(max) => flat.chars().take(max).collect(),
        None => flat,
    }
}

/// Values joined with ", " after cell preparation.
pub fn join_values<'a, I>(values: I, options: &PromptOptions) -> String
where
    I: IntoIterator<Item = &'a str>,
{
    values.into_iter().map(|v| prepare_cell(v, options)).collect::<Vec<_>>().join(VALUE_SEPARATOR)
}

/// Renders one prompt. `target` is a 0-based column index, required for
/// target-column designs and rejected for all-columns designs.
pub fn render_prompt(
    table: &Table,
    target: Option<usize>,
    classes: &ClassSet,
    design: PromptDesign,
    options: &PromptOptions,
) -> Result<AnnotationPrompt, PromptError> {
    let rows = table.row_count()?;
    if rows == 0 {
        return Err(PromptError::NoRows);
    }
    if classes.is_empty() {
        return Err(PromptError::NoClasses);
    }
    let n = table.width();
    match (design.prediction, target) {
        (Prediction::TargetColumn, None) => return Err(PromptError::MissingTarget),
        (Prediction::TargetColumn, Some(t)) if t >= n => return Err(PromptError::IndexError { target: t, columns: n }),
        (Prediction::AllColumns, Some(_)) => return Err(PromptError::UnexpectedTarget),
        _ => {}
    }

    let mut lines: Vec<String> = Vec::with_capacity(n.max(rows) + 8);
    match design.presentation {
        Presentation::ColumnByColumn => {
            lines.push(INTRO_COLUMNS.to_string());
            lines.push(String::new());
            for (i, col) in table.columns.iter().enumerate() {
                lines.push(format!("Column {}: {}", i + 1, join_values(col.iter().map(String::as_str), options)));
            }
        }
        Presentation::RowByRow => {
            lines.push(INTRO_ROWS.to_string());
            lines.push(String::new());
            for j in 0..rows {
                let row = table.columns.iter().map(|col| col[j].as_str());
                lines.push(format!("Row {}: {}", j + 1, join_values(row, options)));
            }
        }
    }
    lines.push(String::new());

    let class_list = classes.iter().collect::<Vec<_>>().join(VALUE_SEPARATOR);
    match (design.prediction, target) {
        (Prediction::TargetColumn, Some(t)) => {
            lines.push(format!("{TASK_TARGET_PREFIX}{class_list}."));
            lines.push(String::new());
            let values = join_values(table.columns[t].iter().map(String::as_str), options);
            lines.push(format!("{TARGET_PREFIX}{values}"));
            lines.push(ANSWER_TARGET.to_string());
        }
        _ => {
            lines.push(format!("{TASK_ALL_PREFIX}{class_list}."));
            lines.push(String::new());
            lines.push(ANSWER_ALL.to_string());
        }
    }

    Ok(AnnotationPrompt {
        text: lines.join("\n"),
        target_column: target,
        candidate_classes: classes.clone(),
        table_ref: table.id.clone(),
    })
}

/// One prompt per column for target-column designs, one prompt in total
/// for all-columns designs.
pub fn render_table_prompts(
    table: &Table,
    classes: &ClassSet,
    design: PromptDesign,
    options: &PromptOptions,
) -> Result<Vec<AnnotationPrompt>, PromptError> {
    if table.columns.is_empty() {
        return Err(PromptError::EmptyTable);
    }
    if design.is_target() {
        (0..table.width()).map(|i| render_prompt(table, Some(i), classes, design, options)).collect()
    } else {
        Ok(vec![render_prompt(table, None, classes, design, options)?])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(cols: &[&[&str]]) -> Table {
        Table::new("t", cols.iter().map(|c| c.iter().map(|s| s.to_string()).collect()).collect())
    }

    fn classes(names: &[&str]) -> ClassSet {
        ClassSet::new(names).unwrap()
    }

    #[test]
    fn default_design_matches_reference_layout() {
        let t = table(&[&["Canada", "UK", "France"], &["Ottawa", "London", "Paris"]]);
        let p = render_prompt(&t, Some(0), &classes(&["Country", "Capital"]), PromptDesign::default(), &PromptOptions::default())
            .unwrap();
        let expected = "These are values of columns in a table. Each column starts with Column: followed by the values of that column. First, look at all the columns to understand the context of the table.\n\
\n\
Column 1: Canada, UK, France\n\
Column 2: Ottawa, London, Paris\n\
\n\
Your task is to annotate the Target Column using one semantic type that matches the values of the Target Column and the context of the table from the following list: Country, Capital.\n\
\n\
Target Column: Canada, UK, France\n\
Semantic Type:";
        assert_eq!(p.text, expected);
        assert_eq!(p.target_column, Some(0));
        assert_eq!(p.table_ref, "t");
    }

    #[test]
    fn single_column_table() {
        let t = table(&[&["a", "b"]]);
        let p = render_prompt(&t, Some(0), &classes(&["X"]), PromptDesign::default(), &PromptOptions::default()).unwrap();
        let lines: Vec<&str> = p.text.lines().collect();
        assert_eq!(lines.iter().filter(|l| l.starts_with("Column ")).count(), 1);
        assert_eq!(lines[2], "Column 1: a, b");
        assert_eq!(lines[lines.len() - 2], "Target Column: a, b");
    }

    #[test]
    fn all_columns_has_no_target_segment() {
        let t = table(&[&["a"], &["b"]]);
        let p = render_prompt(&t, None, &classes(&["X", "Y"]), PromptDesign::COLUMN_ALL, &PromptOptions::default()).unwrap();
        assert!(!p.text.contains(TARGET_PREFIX));
        assert!(p.text.contains(&format!("{TASK_ALL_PREFIX}X, Y.")));
        assert!(p.text.ends_with("\n\nSemantic Types:"));
        assert_eq!(p.target_column, None);
    }

    #[test]
    fn row_presentation_transposes() {
        let t = table(&[&["Canada", "UK"], &["Ottawa", "London"]]);
        let p = render_prompt(&t, Some(1), &classes(&["Country", "Capital"]), PromptDesign::ROW_TARGET, &PromptOptions::default())
            .unwrap();
        let lines: Vec<&str> = p.text.lines().collect();
        assert_eq!(lines[0], INTRO_ROWS);
        assert_eq!(lines[2], "Row 1: Canada, Ottawa");
        assert_eq!(lines[3], "Row 2: UK, London");
        assert!(p.text.ends_with("Target Column: Ottawa, London\nSemantic Type:"));
    }

    #[test]
    fn cells_are_truncated_by_characters() {
        let long = "é".repeat(70);
        let t = Table::new("t", vec![vec![long]]);
        let p = render_prompt(&t, Some(0), &classes(&["X"]), PromptDesign::default(), &PromptOptions::default()).unwrap();
        assert!(p.text.contains(&format!("Column 1: {}\n", "é".repeat(60))));
        let opts = PromptOptions { max_cell_chars: Some(3) };
        assert_eq!(join_values(["abcdef", "xy"], &opts), "abc, xy");
        assert_eq!(join_values(["abcdef"], &PromptOptions { max_cell_chars: None }), "abcdef");
    }

    #[test]
    fn line_breaks_in_cells_are_flattened() {
        assert_eq!(prepare_cell("a\nb\r\nc", &PromptOptions::default()), "a b  c");
    }

    #[test]
    fn commas_are_not_escaped() {
        assert_eq!(join_values(["Paris, France", "Rome"], &PromptOptions::default()), "Paris, France, Rome");
    }

    #[test]
    fn error_paths() {
        let opts = PromptOptions::default();
        let c = classes(&["X"]);
        let ragged = table(&[&["a", "b"], &["c"]]);
        assert_eq!(
            render_prompt(&ragged, Some(0), &c, PromptDesign::default(), &opts).unwrap_err(),
            PromptError::RaggedTable { column: 1, expected: 2, actual: 1 }
        );
        let t = table(&[&["a"], &["b"]]);
        assert_eq!(
            render_prompt(&t, Some(2), &c, PromptDesign::default(), &opts).unwrap_err(),
            PromptError::IndexError { target: 2, columns: 2 }
        );
        assert_eq!(render_prompt(&t, None, &c, PromptDesign::default(), &opts).unwrap_err(), PromptError::MissingTarget);
        assert_eq!(render_prompt(&t, Some(0), &c, PromptDesign::COLUMN_ALL, &opts).unwrap_err(), PromptError::UnexpectedTarget);
        assert_eq!(
            render_prompt(&t, Some(0), &ClassSet::empty(), PromptDesign::default(), &opts).unwrap_err(),
            PromptError::NoClasses
        );
        let empty = Table::new("e", vec![]);
        assert_eq!(render_table_prompts(&empty, &c, PromptDesign::default(), &opts).unwrap_err(), PromptError::EmptyTable);
        let no_rows = Table::new("e", vec![vec![]]);
        assert_eq!(render_prompt(&no_rows, Some(0), &c, PromptDesign::default(), &opts).unwrap_err(), PromptError::NoRows);
    }

    #[test]
    fn prompt_counts_per_design() {
        let t = table(&[&["1"], &["2"], &["3"], &["4"], &["5"]]);
        let c = classes(&["X"]);
        let opts = PromptOptions::default();
        assert_eq!(render_table_prompts(&t, &c, PromptDesign::COLUMN_TARGET, &opts).unwrap().len(), 5);
        assert_eq!(render_table_prompts(&t, &c, PromptDesign::ROW_TARGET, &opts).unwrap().len(), 5);
        assert_eq!(render_table_prompts(&t, &c, PromptDesign::COLUMN_ALL, &opts).unwrap().len(), 1);
        assert_eq!(render_table_prompts(&t, &c, PromptDesign::ROW_ALL, &opts).unwrap().len(), 1);
    }

    #[test]
    fn target_values_equal_column_values() {
        let t = table(&[&["a", "b"], &["c", "d"], &["e", "f"]]);
        let c = classes(&["X", "Y", "Z"]);
        let prompts = render_table_prompts(&t, &c, PromptDesign::default(), &PromptOptions::default()).unwrap();
        for (i, p) in prompts.iter().enumerate() {
            let column_line = p.text.lines().find(|l| l.starts_with(&format!("Column {}: ", i + 1))).unwrap();
            let target_line = p.text.lines().find(|l| l.starts_with(TARGET_PREFIX)).unwrap();
            assert_eq!(column_line.split_once(": ").unwrap().1, target_line.split_once(": ").unwrap().1);
            assert!(p.text.contains("following list: X, Y, Z."));
        }
    }

    #[test]
    fn design_slugs_round_trip() {
        for d in PromptDesign::all() {
            assert_eq!(d.slug().parse::<PromptDesign>().unwrap(), d);
            let json = serde_json::to_string(&d).unwrap();
            assert_eq!(serde_json::from_str::<PromptDesign>(&json).unwrap(), d);
        }
        assert!("diagonal".parse::<PromptDesign>().is_err());
    }
}
