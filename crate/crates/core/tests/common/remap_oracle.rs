//! Independent trigram embedding and brute-force remapping.

use ztab::annotator::{remap_label, MappingKind};
use ztab::domain::ClassSet;
use ztab::gateway::MockBackend;

use super::OracleRng;

pub const WORDS: &[&str] = &[
    "name", "person", "city", "country", "code", "date", "birth", "team", "club", "place", "of", "year", "Name", "City",
    "Population", "capital", "nation", "region", "ID", "x", "zz",
];

pub fn phrase(rng: &mut OracleRng) -> String {
    let n = 1 + rng.below(3) as usize;
    let sep = [" ", "", "_"][rng.below(3) as usize];
    (0..n).map(|_| WORDS[rng.below(WORDS.len() as u64) as usize]).collect::<Vec<_>>().join(sep)
}

/// FNV-1a then bucket counts of character trigrams, normalized.
pub fn oracle_embedding(text: &str, dim: usize) -> Vec<f64> {
    let chars: Vec<char> = text.chars().collect();
    let grams: Vec<String> = match chars.len() {
        0 => vec![],
        1 | 2 => vec![text.to_string()],
        n => (0..n - 2).map(|i| chars[i..i + 3].iter().collect()).collect(),
    };
    let mut v = vec![0.0; dim];
    for g in grams {
        let mut h: u64 = 14695981039346656037;
        for b in g.bytes() {
            h = (h ^ u64::from(b)).wrapping_mul(1099511628211);
        }
        v[(h % dim as u64) as usize] += 1.0;
    }
    let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

pub fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Runs `cases` seeded remap cases against the brute-force argmax.
/// Returns the mismatches and how many cases took each mapping path
/// (exact, remapped, empty).
pub fn remap_oracle_cases(seed: u64, cases: usize) -> (Vec<String>, [usize; 3]) {
    let backend = MockBackend::default();
    let mut rng = OracleRng::keyed(&[seed]);
    let mut kinds = [0usize; 3];
    let mut mismatches = Vec::new();
    for case in 0..cases {
        let size = 2 + rng.below(49) as usize;
        let mut names: Vec<String> = Vec::new();
        while names.len() < size {
            let p = phrase(&mut rng);
            if !names.contains(&p) {
                names.push(p);
            }
        }
        let candidates = ClassSet::new(&names).unwrap();
        let raw = match rng.below(10) {
            0 => names[rng.below(size as u64) as usize].clone(),
            1 => "  ".to_string(),
            _ => format!(" {} ", phrase(&mut rng)),
        };
        let got = remap_label(&raw, &candidates, &backend).unwrap();

        let q = raw.trim();
        let (want, want_sim) = if q.is_empty() {
            (names[0].clone(), 0.0)
        } else {
            let qv = oracle_embedding(q, 256);
            let mut best = (0usize, f64::NEG_INFINITY);
            for (i, n) in names.iter().enumerate() {
                let s = oracle_cosine(&qv, &oracle_embedding(n, 256));
                if s > best.1 {
                    best = (i, s);
                }
            }
            (names[best.0].clone(), best.1)
        };
        if got.class != want || (got.similarity - want_sim).abs() >= 1e-12 {
            mismatches.push(format!("case {case}: raw {raw:?} got {} want {want}", got.class));
        }
        kinds[match got.kind {
            MappingKind::ExactMatch => 0,
            MappingKind::EmbeddingRemap => 1,
            MappingKind::EmptyOutput => 2,
        }] += 1;
    }
    (mismatches, kinds)
}
