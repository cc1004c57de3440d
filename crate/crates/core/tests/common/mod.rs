//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

pub mod golden;
pub mod remap_oracle;
pub mod scenario;

use ztab::domain::{ClassSet, DomainConfig, SchemaCollection, TableSchema};

/// Straight-line SplitMix64, written without reference to the library.
pub struct OracleRng {
    state: u64,
}

impl OracleRng {
    pub fn keyed(key: &[u64]) -> Self {
        let mut h: u64 = 0x243F_6A88_85A3_08D3;
        for &k in key {
            h = finalize(h.wrapping_add(0x9E37_79B9_7F4A_7C15) ^ k);
        }
        Self { state: h }
    }

    pub fn next(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        finalize(self.state)
    }

    /// Rejection sampling on the low `2^64 mod bound` values.
    pub fn below(&mut self, bound: u64) -> u64 {
        let reject_under = ((1u128 << 64) % bound as u128) as u64;
        loop {
            let x = self.next();
            if x >= reject_under {
                return x % bound;
            }
        }
    }

    pub fn shuffle_prefix(&mut self, n: usize, k: usize) -> Vec<usize> {
        let mut v: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            v.swap(i, j);
        }
        v[..k].to_vec()
    }
}

fn finalize(mut z: u64) -> u64 {
    z ^= z >> 30;
    z = z.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^= z >> 27;
    z = z.wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SCHEMA_TAG: u64 = 0x5343_4845_4D41;
pub const CELL_TAG: u64 = 0x4345_4C4C;

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|x| x.to_string()).collect()
}

/// `n` classes named `Class00..`, and `m` schemas of width 1..=4 built
/// from them with a seeded oracle stream.
pub fn synthetic_domain(n: usize, m: usize, seed: u64) -> DomainConfig {
    let names: Vec<String> = (0..n).map(|i| format!("Class{i:02}")).collect();
    let classes = ClassSet::new(&names).unwrap();
    let mut rng = OracleRng::keyed(&[seed]);
    let schemas = (0..m)
        .map(|_| {
            let width = 1 + rng.below(4) as usize;
            TableSchema::new((0..width).map(|_| names[rng.below(n as u64) as usize].clone())).unwrap()
        })
        .collect();
    DomainConfig::new(classes, SchemaCollection::new(schemas)).unwrap()
}

/// `ceil(num/den)` for a decimal ratio given as text, times `n`, computed in
/// integers.
pub fn exact_ceil_count(ratio: &str, n: u128) -> u128 {
    let (int, frac) = ratio.split_once('.').unwrap_or((ratio, ""));
    let den = 10u128.pow(frac.len() as u32);
    let num: u128 = format!("{int}{frac}").parse().unwrap();
    (num * n).div_ceil(den).clamp(1, n)
}

/// Micro-F1 from per-class TP/FP/FN counts pooled over all classes.
pub fn pooled_micro_f1(predictions: &[String], gold: &[String]) -> f64 {
    use std::collections::HashMap;
    let mut tp: HashMap<&str, f64> = HashMap::new();
    let mut fp: HashMap<&str, f64> = HashMap::new();
    let mut fn_: HashMap<&str, f64> = HashMap::new();
    for (p, g) in predictions.iter().zip(gold) {
        if p == g {
            *tp.entry(p).or_default() += 1.0;
        } else {
            *fp.entry(p).or_default() += 1.0;
            *fn_.entry(g).or_default() += 1.0;
        }
    }
    let (t, f, n): (f64, f64, f64) = (tp.values().sum(), fp.values().sum(), fn_.values().sum());
    let precision = if t + f == 0.0 { 0.0 } else { t / (t + f) };
    let recall = if t + n == 0.0 { 0.0 } else { t / (t + n) };
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// `count` random (prediction, gold) label pairs over `classes` labels.
pub fn random_labels(seed: u64, count: usize, classes: u64) -> (Vec<String>, Vec<String>) {
    let mut rng = OracleRng::keyed(&[seed]);
    (0..count).map(|_| (format!("L{}", rng.below(classes)), format!("L{}", rng.below(classes)))).unzip()
}
