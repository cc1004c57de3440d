use std::path::PathBuf;

use ztab::domain::ClassSet;
use ztab::prompt::{render_table_prompts, PromptDesign, PromptOptions, Table};

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/golden")
}

pub fn golden_table() -> Table {
    Table::new(
        "golden",
        vec![
            super::strings(&["Canada", "United Kingdom", "France"]),
            super::strings(&["Ottawa", "London", "Paris"]),
            super::strings(&["38929902", "67596281", "68042591"]),
        ],
    )
}

pub fn golden_classes() -> ClassSet {
    ClassSet::new(["Country", "Capital city", "Population", "Currency"]).unwrap()
}

/// The rendered prompt compared against `{slug}.txt`: the one for the
/// second column in target designs, the single prompt otherwise.
pub fn render_golden(design: PromptDesign) -> String {
    let prompts = render_table_prompts(&golden_table(), &golden_classes(), design, &PromptOptions::default()).unwrap();
    let p = if design.is_target() { &prompts[1] } else { &prompts[0] };
    p.text.clone()
}

/// Designs whose rendering differs from the stored file.
pub fn golden_mismatches() -> Vec<String> {
    PromptDesign::all()
        .into_iter()
        .filter(|d| {
            let stored = std::fs::read(golden_dir().join(format!("{}.txt", d.slug()))).unwrap_or_default();
            stored != render_golden(*d).into_bytes()
        })
        .map(|d| d.slug().to_string())
        .collect()
}
