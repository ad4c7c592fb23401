//! Ratings live in an append-only JSONL ledger; a snapshot of the current
//! ratings is rewritten every few entries so startup replays only the tail.
//! Readers load an immutable state through `ArcSwap`; writers go through
//! one mutex.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use chrono::{DateTime, Utc};
use probsmith_core::dataset::{append_jsonl, read_jsonl, write_atomic};
use probsmith_core::error::Error as CoreError;
use probsmith_core::model::Problem;
use serde::{Deserialize, Serialize};

use crate::batch::{create_batch, ReviewBatch, ReviewItem, CRITERIA};
use crate::stats::{review_stats, ReviewStats};
use crate::{Result, ReviewError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VariantType {
    SingleExtension,
    SameTypeFusion,
    CrossTypeFusion,
    Unclear,
}

/// A rating as submitted, before the server stamps it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatingInput {
    pub batch_id: String,
    pub problem_id: String,
    pub annotator_id: String,
    pub solvable: bool,
    pub novelty: u8,
    pub variant_type: VariantType,
    #[serde(default)]
    pub comment: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub batch_id: String,
    pub problem_id: String,
    pub annotator_id: String,
    pub solvable: bool,
    pub novelty: u8,
    pub variant_type: VariantType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comment: Option<String>,
    pub timestamp: DateTime<Utc>,
}

impl Rating {
    pub fn id(&self) -> String {
        rating_id(&self.batch_id, &self.problem_id, &self.annotator_id)
    }

    fn key(&self) -> Key {
        (self.batch_id.clone(), self.problem_id.clone(), self.annotator_id.clone())
    }
}

pub fn rating_id(batch: &str, problem: &str, annotator: &str) -> String {
    format!("{batch}/{problem}/{annotator}")
}

type Key = (String, String, String);

/// One ledger line. `previous` is set when the entry overwrote a rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub rating: Rating,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub previous: Option<Rating>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct BatchRecord {
    batch: ReviewBatch,
    items: Vec<ReviewItem>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    seq: u64,
    ratings: Vec<Rating>,
}

#[derive(Debug, Clone, Default)]
struct State {
    batches: BTreeMap<String, Arc<BatchRecord>>,
    ratings: BTreeMap<Key, Rating>,
    seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreConfig {
    /// Ledger entries between snapshots.
    pub snapshot_every: u64,
}

impl Default for StoreConfig {
    fn default() -> Self {
        StoreConfig { snapshot_every: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submitted {
    pub rating_id: String,
    pub seq: u64,
    pub overwritten: bool,
}

/// The next unrated problem for an annotator, with progress.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NextItem {
    pub batch_id: String,
    pub annotator: String,
    pub rated: usize,
    pub total: usize,
    pub done: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub item: Option<ReviewItem>,
    pub criteria: crate::batch::Criteria,
}

pub struct ReviewStore {
    dir: PathBuf,
    config: StoreConfig,
    state: ArcSwap<State>,
    writer: Mutex<()>,
}

impl ReviewStore {
    pub fn open(dir: &Path, config: StoreConfig) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|source| CoreError::Io { path: dir.to_path_buf(), source })?;
        let store = ReviewStore {
            dir: dir.to_path_buf(),
            config,
            state: ArcSwap::from_pointee(State::default()),
            writer: Mutex::new(()),
        };
        let mut state = State::default();
        if store.batches_path().is_file() {
            for r in read_jsonl::<BatchRecord>(&store.batches_path())? {
                state.batches.insert(r.batch.batch_id.clone(), Arc::new(r));
            }
        }
        if store.snapshot_path().is_file() {
            let path = store.snapshot_path();
            let text = std::fs::read_to_string(&path).map_err(|source| CoreError::Io { path: path.clone(), source })?;
            let snap: Snapshot = serde_json::from_str(&text).map_err(|e| CoreError::Malformed {
                path: path.clone(),
                line: e.line(),
                message: e.to_string(),
            })?;
            state.seq = snap.seq;
            state.ratings = snap.ratings.into_iter().map(|r| (r.key(), r)).collect();
        }
        for e in store.ledger()? {
            if e.seq > state.seq {
                state.seq = e.seq;
                state.ratings.insert(e.rating.key(), e.rating);
            }
        }
        store.state.store(Arc::new(state));
        Ok(store)
    }

    fn batches_path(&self) -> PathBuf {
        self.dir.join("batches.jsonl")
    }

    pub fn ledger_path(&self) -> PathBuf {
        self.dir.join("ratings.jsonl")
    }

    fn snapshot_path(&self) -> PathBuf {
        self.dir.join("snapshot.json")
    }

    /// Every ledger entry, oldest first.
    pub fn ledger(&self) -> Result<Vec<LedgerEntry>> {
        let path = self.ledger_path();
        if !path.is_file() {
            return Ok(Vec::new());
        }
        Ok(read_jsonl(&path)?)
    }

    /// Samples a batch from `pool` and stores it with each problem's seeds.
    /// Re-creating an identical batch returns the stored one.
    pub fn create_batch(
        &self,
        pool: &[Problem],
        seed_pool: &[Problem],
        size: usize,
        rng_seed: u64,
        annotators: &[String],
    ) -> Result<ReviewBatch> {
        let batch = create_batch(pool, size, rng_seed, annotators)?;
        let seeds: BTreeMap<String, Problem> = seed_pool.iter().map(|p| (p.id.clone(), p.clone())).collect();
        let by_id: BTreeMap<&str, &Problem> = pool.iter().map(|p| (p.id.as_str(), p)).collect();
        let items = batch
            .problem_ids
            .iter()
            .map(|id| ReviewItem::resolve(by_id[id.as_str()], &seeds))
            .collect::<Result<Vec<_>>>()?;
        self.add_batch(BatchRecord { batch, items })
    }

    fn add_batch(&self, record: BatchRecord) -> Result<ReviewBatch> {
        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.state.load_full();
        if let Some(existing) = current.batches.get(&record.batch.batch_id) {
            if **existing == record {
                return Ok(record.batch);
            }
            return Err(ReviewError::Argument(format!(
                "batch {} already exists with other content",
                record.batch.batch_id
            )));
        }
        append_jsonl(&self.batches_path(), &record)?;
        let mut next = (*current).clone();
        next.batches.insert(record.batch.batch_id.clone(), Arc::new(record.clone()));
        self.state.store(Arc::new(next));
        Ok(record.batch)
    }

    pub fn batches(&self) -> Vec<ReviewBatch> {
        self.state.load().batches.values().map(|r| r.batch.clone()).collect()
    }

    pub fn batch(&self, id: &str) -> Result<ReviewBatch> {
        Ok(self.record(id)?.batch.clone())
    }

    fn record(&self, id: &str) -> Result<Arc<BatchRecord>> {
        self.state.load().batches.get(id).cloned().ok_or_else(|| ReviewError::NotFound(format!("batch {id}")))
    }

    /// Checks and stores a rating; a second rating of the same problem by
    /// the same annotator replaces the first and keeps it in the ledger.
    pub fn submit(&self, input: RatingInput, at: DateTime<Utc>) -> Result<Submitted> {
        if !(CRITERIA.novelty_min..=CRITERIA.novelty_max).contains(&input.novelty) {
            return Err(ReviewError::Validation(format!(
                "novelty {} outside {}..={}",
                input.novelty, CRITERIA.novelty_min, CRITERIA.novelty_max
            )));
        }
        let record = self.record(&input.batch_id)?;
        if !record.batch.has_problem(&input.problem_id) {
            return Err(ReviewError::NotFound(format!("problem {} in batch {}", input.problem_id, input.batch_id)));
        }
        if !record.batch.has_annotator(&input.annotator_id) {
            return Err(ReviewError::Unauthorized(format!("{} in batch {}", input.annotator_id, input.batch_id)));
        }
        let rating = Rating {
            batch_id: input.batch_id,
            problem_id: input.problem_id,
            annotator_id: input.annotator_id,
            solvable: input.solvable,
            novelty: input.novelty,
            variant_type: input.variant_type,
            comment: input.comment.filter(|c| !c.trim().is_empty()),
            timestamp: at,
        };

        let _guard = self.writer.lock().unwrap_or_else(|p| p.into_inner());
        let current = self.state.load_full();
        let seq = current.seq + 1;
        let previous = current.ratings.get(&rating.key()).cloned();
        let entry = LedgerEntry { seq, rating: rating.clone(), previous };
        append_jsonl(&self.ledger_path(), &entry)?;
        let mut next = (*current).clone();
        next.seq = seq;
        next.ratings.insert(rating.key(), rating);
        if self.config.snapshot_every > 0 && seq.is_multiple_of(self.config.snapshot_every) {
            let snap = Snapshot { seq, ratings: next.ratings.values().cloned().collect() };
            let body = serde_json::to_vec(&snap).expect("snapshot serializes");
            write_atomic(&self.snapshot_path(), &body)?;
        }
        self.state.store(Arc::new(next));
        Ok(Submitted { rating_id: entry.rating.id(), seq, overwritten: entry.previous.is_some() })
    }

    /// Current ratings of a batch, ordered by problem id then annotator.
    pub fn ratings(&self, batch_id: &str) -> Vec<Rating> {
        self.state.load().ratings.values().filter(|r| r.batch_id == batch_id).cloned().collect()
    }

    /// Ledger entries for one (batch, problem, annotator), oldest first.
    pub fn history(&self, batch_id: &str, problem_id: &str, annotator_id: &str) -> Result<Vec<LedgerEntry>> {
        let id = rating_id(batch_id, problem_id, annotator_id);
        Ok(self.ledger()?.into_iter().filter(|e| e.rating.id() == id).collect())
    }

    pub fn next_for(&self, batch_id: &str, annotator: &str) -> Result<NextItem> {
        let state = self.state.load();
        let record = state.batches.get(batch_id).ok_or_else(|| ReviewError::NotFound(format!("batch {batch_id}")))?;
        if !record.batch.has_annotator(annotator) {
            return Err(ReviewError::Unauthorized(format!("{annotator} in batch {batch_id}")));
        }
        let rated = |p: &str| state.ratings.contains_key(&(batch_id.to_string(), p.to_string(), annotator.to_string()));
        let done_count = record.batch.problem_ids.iter().filter(|p| rated(p)).count();
        let item = record.items.iter().find(|i| !rated(&i.problem.id)).cloned();
        Ok(NextItem {
            batch_id: batch_id.to_string(),
            annotator: annotator.to_string(),
            rated: done_count,
            total: record.batch.problem_ids.len(),
            done: item.is_none(),
            item,
            criteria: CRITERIA,
        })
    }

    pub fn stats(&self, batch_id: &str) -> Result<ReviewStats> {
        let batch = self.batch(batch_id)?;
        Ok(review_stats(&batch, &self.ratings(batch_id)))
    }
}
