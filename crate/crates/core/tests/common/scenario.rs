use std::path::{Path, PathBuf};

use ztab::annotator::{write_tables, TableRecord};

use super::OracleRng;

/// Learned label and its paraphrase in a different ontology.
pub const PARAPHRASES: &[(&str, &str)] = &[
    ("PersonName", "Name of Person"),
    ("BirthDate", "Date of Birth"),
    ("CountryName", "Name of Country"),
    ("CityName", "Name of City"),
    ("TeamName", "Name of Team"),
    ("ReleaseYear", "Year of Release"),
    ("PostalCode", "Postal Code Number"),
    ("PhoneNumber", "Telephone Number"),
    ("EmailAddress", "Address of Email"),
    ("BookTitle", "Title of Book"),
    ("MovieTitle", "Title of Movie"),
    ("AlbumTitle", "Title of Album"),
    ("Surname", "Family Name"),
    ("Population", "Number of Inhabitants"),
    ("Capital", "Seat of Government"),
    ("Price", "Cost in Dollars"),
];

/// Tables with unique cell values and gold labels drawn from `classes`.
pub fn corpus(classes: &[&str], tables: usize, seed: u64) -> Vec<TableRecord> {
    let mut rng = OracleRng::keyed(&[seed]);
    (0..tables)
        .map(|t| {
            let width = 1 + rng.below(4) as usize;
            let gold: Vec<String> =
                (0..width).map(|_| classes[rng.below(classes.len() as u64) as usize].to_string()).collect();
            let columns = (0..width).map(|c| (0..3).map(|r| format!("t{t}c{c}r{r}")).collect()).collect();
            TableRecord { id: format!("table-{t:04}"), columns, gold: Some(gold) }
        })
        .collect()
}

/// Writes class lists, tables and a cross-ontology scenario TOML into
/// `dir`; returns the TOML path.
pub fn write_cross_ontology(dir: &Path, only_remapping: bool, tables: usize) -> PathBuf {
    let learn: Vec<&str> = PARAPHRASES.iter().map(|p| p.0).collect();
    let pred: Vec<&str> = PARAPHRASES.iter().map(|p| p.1).collect();
    std::fs::write(dir.join("learn.txt"), learn.join("\n") + "\n").unwrap();
    std::fs::write(dir.join("pred.txt"), pred.join("\n") + "\n").unwrap();
    let records = corpus(&pred, tables, 77);
    write_tables(&records, std::fs::File::create(dir.join("tables.jsonl")).unwrap()).unwrap();

    let mut toml = format!(
        "scenario = \"cross_ontology\"\nlearn_classes = \"learn.txt\"\npred_classes = \"pred.txt\"\ntables = \"tables.jsonl\"\nonly_remapping = {only_remapping}\n\n[vocabulary]\n"
    );
    for (l, p) in PARAPHRASES {
        toml.push_str(&format!("\"{p}\" = \"{l}\"\n"));
    }
    toml.push_str("\n[backend]\nkind = \"mock\"\n\n[backend.mock]\npolicy = \"oracle\"\n");
    let name = if only_remapping { "only-remapping.toml" } else { "scenario.toml" };
    let path = dir.join(name);
    std::fs::write(&path, toml).unwrap();
    path
}
