mod common;

use common::{pooled_micro_f1, random_labels, strings};
use proptest::prelude::*;
use ztab::annotator::{AnnotationRecord, PredictionRecord, MappingKind, TableRecord};
use ztab::evaluator::{micro_f1, per_class_f1, EvaluationReport};

#[test]
fn micro_matches_pooled_counts_on_random_pairs() {
    for seed in 0..5 {
        let (p, g) = random_labels(seed, 1000, 7);
        assert!((micro_f1(&p, &g).unwrap() - pooled_micro_f1(&p, &g)).abs() < 1e-12);
    }
}

#[test]
fn three_of_four() {
    let g = strings(&["A", "B", "C", "D"]);
    let p = strings(&["A", "B", "C", "A"]);
    assert_eq!(micro_f1(&p, &g).unwrap(), 0.75);
    assert!((pooled_micro_f1(&p, &g) - 0.75).abs() < 1e-12);
}

proptest! {
    #[test]
    fn per_class_counts_reproduce_micro(pairs in proptest::collection::vec((0u8..6, 0u8..6), 1..300)) {
        let p: Vec<String> = pairs.iter().map(|x| format!("c{}", x.0)).collect();
        let g: Vec<String> = pairs.iter().map(|x| format!("c{}", x.1)).collect();
        let per = per_class_f1(&p, &g).unwrap();
        // TP per class = recall * support; summed TP over total = micro
        let tp: f64 = per.values().map(|s| s.recall * s.support as f64).sum();
        prop_assert!((tp / g.len() as f64 - micro_f1(&p, &g).unwrap()).abs() < 1e-12);
        prop_assert!((pooled_micro_f1(&p, &g) - micro_f1(&p, &g).unwrap()).abs() < 1e-12);
    }
}

fn record(id: &str, classes: &[&str]) -> AnnotationRecord {
    AnnotationRecord {
        id: id.into(),
        predictions: classes
            .iter()
            .map(|c| PredictionRecord { class: c.to_string(), kind: MappingKind::ExactMatch, similarity: 1.0 })
            .collect(),
    }
}

#[test]
fn report_pools_columns_across_tables() {
    let tables = vec![
        TableRecord { id: "a".into(), columns: vec![vec![]; 2], gold: Some(strings(&["X", "Y"])) },
        TableRecord { id: "b".into(), columns: vec![vec![]; 1], gold: Some(strings(&["X"])) },
        TableRecord { id: "c".into(), columns: vec![vec![]; 1], gold: Some(strings(&["Y"])) },
    ];
    // table c has no annotation and is skipped
    let r = EvaluationReport::from_annotations(&[record("b", &["Y"]), record("a", &["X", "Y"])], &tables).unwrap();
    assert_eq!((r.total_columns, r.correct_columns), (3, 2));
    assert!((r.micro_f1 - 2.0 / 3.0).abs() < 1e-15);
    assert!(EvaluationReport::from_annotations(&[record("a", &["X"])], &tables).is_err());
}
