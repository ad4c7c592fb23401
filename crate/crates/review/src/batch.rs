use std::collections::{BTreeMap, BTreeSet};

use probsmith_core::model::{short_hash, Problem};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{Result, ReviewError};

/// A uniform sample of problems, every one assigned to every annotator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewBatch {
    pub batch_id: String,
    pub rng_seed: u64,
    /// In presentation order.
    pub problem_ids: Vec<String>,
    pub annotators: Vec<String>,
}

impl ReviewBatch {
    pub fn has_problem(&self, id: &str) -> bool {
        self.problem_ids.iter().any(|p| p == id)
    }

    pub fn has_annotator(&self, id: &str) -> bool {
        self.annotators.iter().any(|a| a == id)
    }

    pub fn is_assigned(&self, problem: &str, annotator: &str) -> bool {
        self.has_problem(problem) && self.has_annotator(annotator)
    }

    /// Every (problem, annotator) pair, problem-major.
    pub fn assignments(&self) -> impl Iterator<Item = (&str, &str)> {
        self.problem_ids.iter().flat_map(move |p| self.annotators.iter().map(move |a| (p.as_str(), a.as_str())))
    }
}

/// Samples `size` problems without replacement.
pub fn create_batch(pool: &[Problem], size: usize, rng_seed: u64, annotators: &[String]) -> Result<ReviewBatch> {
    if size == 0 || size > pool.len() {
        return Err(ReviewError::Argument(format!("batch size {size} with a pool of {}", pool.len())));
    }
    if annotators.is_empty() {
        return Err(ReviewError::Argument("a batch needs at least one annotator".into()));
    }
    let distinct: BTreeSet<&str> = annotators.iter().map(String::as_str).collect();
    if distinct.len() != annotators.len() || distinct.contains("") {
        return Err(ReviewError::Argument("annotator ids must be distinct and non-empty".into()));
    }
    let ids: BTreeSet<&str> = pool.iter().map(|p| p.id.as_str()).collect();
    if ids.len() != pool.len() {
        return Err(ReviewError::Argument("pool has duplicate problem ids".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let problem_ids: Vec<String> = pool.choose_multiple(&mut rng, size).map(|p| p.id.clone()).collect();
    let batch_id = format!(
        "RB-{}",
        &short_hash(&format!("{rng_seed}\0{}\0{}", problem_ids.join(","), annotators.join(",")))[..12]
    );
    Ok(ReviewBatch { batch_id, rng_seed, problem_ids, annotators: annotators.to_vec() })
}

/// What an annotator sees for one problem: the problem and its seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewItem {
    pub problem: Problem,
    pub seeds: Vec<Problem>,
}

impl ReviewItem {
    /// Resolves the problem's seed ids against `seed_pool`.
    pub fn resolve(problem: &Problem, seed_pool: &BTreeMap<String, Problem>) -> Result<Self> {
        let seeds = problem
            .lineage
            .seed_ids
            .iter()
            .map(|id| {
                seed_pool
                    .get(id)
                    .cloned()
                    .ok_or_else(|| ReviewError::Argument(format!("{}: seed {id} is not in the seed pool", problem.id)))
            })
            .collect::<Result<_>>()?;
        Ok(ReviewItem { problem: problem.clone(), seeds })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Criteria {
    pub solvability: &'static str,
    pub novelty: &'static str,
    pub variant_type: &'static str,
    pub novelty_min: u8,
    pub novelty_max: u8,
}

pub const CRITERIA: Criteria = Criteria {
    solvability: "Solvability: can the problem be solved as stated, with consistent constraints and examples?",
    novelty: "Novelty: how different is the problem from its seed problems? 1 = restatement, 5 = substantially new.",
    variant_type: "New Problem Variant Type: SingleExtension, SameTypeFusion, CrossTypeFusion, or Unclear.",
    novelty_min: 1,
    novelty_max: 5,
};
