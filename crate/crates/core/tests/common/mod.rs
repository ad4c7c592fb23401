//! Shared helpers for the fixture-driven tests: config loading and
//! independent reference solutions for the three fixture problems.
#![allow(dead_code)]

pub mod labelled;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use probsmith_core::pipeline::PipelineConfig;

pub fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// The e2e config with its output redirected to `out`.
pub fn e2e_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixtures().join("e2e/pipeline.toml")).expect("fixture config loads");
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn ints(input: &str) -> Vec<i64> {
    input.split_whitespace().map(|t| t.parse().expect("integer token")).collect()
}

pub fn max_subarray(input: &str) -> i64 {
    let v = ints(input);
    let a = &v[1..1 + v[0] as usize];
    let (mut best, mut cur) = (a[0], a[0]);
    for &x in &a[1..] {
        cur = x.max(cur + x);
        best = best.max(cur);
    }
    best
}

pub fn inversions(input: &str) -> u64 {
    fn sort(a: &mut [i64], buf: &mut Vec<i64>) -> u64 {
        if a.len() < 2 {
            return 0;
        }
        let mid = a.len() / 2;
        let mut inv = sort(&mut a[..mid], buf) + sort(&mut a[mid..], buf);
        buf.clear();
        let (mut i, mut j) = (0, mid);
        while i < mid && j < a.len() {
            if a[i] <= a[j] {
                buf.push(a[i]);
                i += 1;
            } else {
                buf.push(a[j]);
                inv += (mid - i) as u64;
                j += 1;
            }
        }
        buf.extend_from_slice(&a[i..mid]);
        buf.extend_from_slice(&a[j..]);
        a.copy_from_slice(buf);
        inv
    }
    let v = ints(input);
    let mut a = v[1..1 + v[0] as usize].to_vec();
    sort(&mut a, &mut Vec::new())
}

pub fn pair_sum(input: &str) -> u64 {
    let v = ints(input);
    let (n, k) = (v[0] as usize, v[1]);
    let mut seen: HashMap<i64, u64> = HashMap::new();
    let mut count = 0;
    for &x in &v[2..2 + n] {
        count += seen.get(&(k - x)).copied().unwrap_or(0);
        *seen.entry(x).or_default() += 1;
    }
    count
}

/// Reference answer for an input of the fixture problem whose statement
/// carries the given key phrase.
pub fn reference(statement: &str, input: &str) -> Option<String> {
    if statement.contains("prosperity ledger") {
        Some(max_subarray(input).to_string())
    } else if statement.contains("courier manifest") {
        Some(inversions(input).to_string())
    } else if statement.contains("twin lanterns") {
        Some(pair_sum(input).to_string())
    } else {
        None
    }
}

/// Candidate ids carrying a planted small-input bug, per problem key.
pub const PLANTED: [&str; 2] = ["opt-6", "opt-7"];
