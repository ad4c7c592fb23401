mod common;

use std::collections::{BTreeMap, BTreeSet};

use chrono::{TimeZone, Utc};
use probsmith_review::{
    cohen_kappa, create_batch, fleiss_kappa, review_stats, RatingInput, ReviewError, ReviewStore, StoreConfig,
    VariantType,
};

fn input(batch: &str, problem: &str, annotator: &str, solvable: bool) -> RatingInput {
    RatingInput {
        batch_id: batch.into(),
        problem_id: problem.into(),
        annotator_id: annotator.into(),
        solvable,
        novelty: 3,
        variant_type: VariantType::SingleExtension,
        comment: None,
    }
}

fn at(secs: i64) -> chrono::DateTime<Utc> {
    Utc.timestamp_opt(1_700_000_000 + secs, 0).unwrap()
}

#[test]
fn batches_sample_without_replacement_and_repeat() {
    let pool = common::pool(492);
    let raters = common::annotators(5);
    let b = create_batch(&pool, 50, 17, &raters).unwrap();
    let distinct: BTreeSet<&String> = b.problem_ids.iter().collect();
    assert_eq!(distinct.len(), 50);
    assert_eq!(b, create_batch(&pool, 50, 17, &raters).unwrap());
    assert_ne!(b.problem_ids, create_batch(&pool, 50, 18, &raters).unwrap().problem_ids);
    assert_eq!(b.rng_seed, 17);

    let mut seen: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    for cell in b.assignments() {
        *seen.entry(cell).or_default() += 1;
    }
    assert_eq!(seen.len(), 250);
    assert!(seen.values().all(|&c| c == 1));

    assert!(matches!(create_batch(&pool, 493, 1, &raters), Err(ReviewError::Argument(_))));
    assert!(create_batch(&pool, 5, 1, &[]).is_err());
    assert!(create_batch(&pool, 5, 1, &["a".into(), "a".into()]).is_err());
}

#[test]
fn sampling_is_uniform() {
    // Each id should land in a size-5 sample from 20 about a quarter of the time.
    let pool = common::pool(20);
    let raters = common::annotators(1);
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    let draws = 4000;
    for s in 0..draws {
        for id in create_batch(&pool, 5, s, &raters).unwrap().problem_ids {
            *hits.entry(id).or_default() += 1;
        }
    }
    let expected = draws as f64 * 5.0 / 20.0;
    let sd = (draws as f64 * 0.25 * 0.75).sqrt();
    for (id, h) in hits {
        assert!((h as f64 - expected).abs() < 4.0 * sd, "{id}: {h}");
    }
}

#[test]
fn ratings_are_stored_overwritten_and_audited() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path(), StoreConfig::default()).unwrap();
    let b = store.create_batch(&common::pool(10), &common::seeds(), 5, 3, &common::annotators(2)).unwrap();
    let p = b.problem_ids[0].clone();

    let first = store.submit(input(&b.batch_id, &p, "rater0", true), at(0)).unwrap();
    assert!(!first.overwritten);
    assert_eq!(store.ratings(&b.batch_id).len(), 1);
    let mut again = input(&b.batch_id, &p, "rater0", false);
    again.comment = Some("the second example contradicts the statement".into());
    let second = store.submit(again, at(60)).unwrap();
    assert!(second.overwritten);
    assert_eq!(first.rating_id, second.rating_id);

    let current = store.ratings(&b.batch_id);
    assert_eq!(current.len(), 1);
    assert!(!current[0].solvable);
    assert_eq!(current[0].timestamp, at(60));
    let history = store.history(&b.batch_id, &p, "rater0").unwrap();
    assert_eq!(history.len(), 2);
    assert!(history[1].previous.as_ref().unwrap().solvable);

    let mut bad = input(&b.batch_id, &p, "rater1", true);
    bad.novelty = 7;
    assert!(matches!(store.submit(bad.clone(), at(1)), Err(ReviewError::Validation(_))));
    bad.novelty = 0;
    assert!(matches!(store.submit(bad, at(1)), Err(ReviewError::Validation(_))));
    assert!(matches!(store.submit(input(&b.batch_id, &p, "stranger", true), at(1)), Err(ReviewError::Unauthorized(_))));
    assert!(matches!(
        store.submit(input(&b.batch_id, "ST-nope", "rater1", true), at(1)),
        Err(ReviewError::NotFound(_))
    ));
    assert!(matches!(store.submit(input("RB-missing", &p, "rater1", true), at(1)), Err(ReviewError::NotFound(_))));
    assert_eq!(store.ledger().unwrap().len(), 2);
}

#[test]
fn store_reopens_from_snapshot_and_ledger_tail() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = StoreConfig { snapshot_every: 3 };
    let raters = common::annotators(2);
    let (batch, before) = {
        let store = ReviewStore::open(dir.path(), cfg).unwrap();
        let b = store.create_batch(&common::pool(10), &common::seeds(), 4, 9, &raters).unwrap();
        for (i, p) in b.problem_ids.iter().enumerate() {
            store.submit(input(&b.batch_id, p, "rater0", i % 2 == 0), at(i as i64)).unwrap();
        }
        store.submit(input(&b.batch_id, &b.problem_ids[1], "rater0", true), at(10)).unwrap();
        (b.clone(), store.stats(&b.batch_id).unwrap())
    };
    assert!(dir.path().join("snapshot.json").is_file());
    let store = ReviewStore::open(dir.path(), cfg).unwrap();
    assert_eq!(store.batch(&batch.batch_id).unwrap(), batch);
    assert_eq!(store.stats(&batch.batch_id).unwrap(), before);
    assert_eq!(store.ratings(&batch.batch_id).len(), 4);
    // Re-creating the same batch is a no-op.
    let same = store.create_batch(&common::pool(10), &common::seeds(), 4, 9, &raters).unwrap();
    assert_eq!(same, batch);
    assert_eq!(store.batches().len(), 1);
}

#[test]
fn next_item_walks_the_batch_with_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path(), StoreConfig::default()).unwrap();
    let seeds = common::seeds();
    let b = store.create_batch(&common::pool(10), &seeds, 3, 1, &common::annotators(2)).unwrap();
    let n = store.next_for(&b.batch_id, "rater1").unwrap();
    let item = n.item.unwrap();
    assert_eq!(item.problem.id, b.problem_ids[0]);
    let want: Vec<&String> = item.problem.lineage.seed_ids.iter().collect();
    assert_eq!(item.seeds.iter().map(|s| &s.id).collect::<Vec<_>>(), want);
    assert!(!item.seeds.is_empty());
    store.submit(input(&b.batch_id, &b.problem_ids[0], "rater1", true), at(0)).unwrap();
    let n = store.next_for(&b.batch_id, "rater1").unwrap();
    assert_eq!((n.rated, n.total), (1, 3));
    assert_eq!(n.item.unwrap().problem.id, b.problem_ids[1]);
    assert!(matches!(store.next_for(&b.batch_id, "nobody"), Err(ReviewError::Unauthorized(_))));

    let missing_seed = store.create_batch(&common::pool(10), &seeds[..1], 10, 2, &common::annotators(1));
    assert!(matches!(missing_seed, Err(ReviewError::Argument(_))));
}

fn grid_stats(dissent: &[(usize, usize)]) -> probsmith_review::ReviewStats {
    let dir = tempfile::tempdir().unwrap();
    let store = ReviewStore::open(dir.path(), StoreConfig::default()).unwrap();
    let raters = common::annotators(5);
    let b = store.create_batch(&common::pool(492), &common::seeds(), 50, 5, &raters).unwrap();
    for (pi, p) in b.problem_ids.iter().enumerate() {
        for (ai, a) in raters.iter().enumerate() {
            store.submit(input(&b.batch_id, p, a, !dissent.contains(&(pi, ai))), at(0)).unwrap();
        }
    }
    store.stats(&b.batch_id).unwrap()
}

#[test]
fn unanimous_grid() {
    let s = grid_stats(&[]);
    assert_eq!((s.ratings, s.expected_ratings), (250, 250));
    assert_eq!(s.solvability_rate, Some(1.0));
    assert_eq!(s.agreement, Some(1.0));
    assert!(s.incomplete.is_empty());
    assert_eq!(s.secondary.fleiss_kappa, None);
}

#[test]
fn one_dissent_in_the_grid() {
    let s = grid_stats(&[(7, 2)]);
    assert!((s.solvability_rate.unwrap() - 249.0 / 250.0).abs() < 1e-12);
    // Rater 2 matches the majority on 49 of 50; the others on all 50.
    let want = (4.0 + 49.0 / 50.0) / 5.0;
    assert!((s.agreement.unwrap() - want).abs() < 1e-12);
    assert_eq!(s.majority_solvability_rate, Some(1.0));
    assert_eq!(s.per_annotator[2].matches, 49);
    assert_eq!(s.per_problem[7].solvable, 4);
}

#[test]
fn stats_match_an_independent_recount() {
    let pool = common::pool(30);
    let raters = common::annotators(4);
    let batch = create_batch(&pool, 12, 21, &raters).unwrap();
    let mut ratings = Vec::new();
    let mut x: u64 = 0x2545f4914f6cdd1d;
    for p in &batch.problem_ids {
        for a in &raters {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            if x.is_multiple_of(5) {
                continue;
            }
            let r = input(&batch.batch_id, p, a, !x.is_multiple_of(3));
            ratings.push(probsmith_review::Rating {
                batch_id: r.batch_id,
                problem_id: r.problem_id,
                annotator_id: r.annotator_id,
                solvable: r.solvable,
                novelty: (x % 5) as u8 + 1,
                variant_type: VariantType::Unclear,
                comment: None,
                timestamp: at(0),
            });
        }
    }
    let s = review_stats(&batch, &ratings);
    assert_eq!(s, review_stats(&batch, &ratings));

    let yes = ratings.iter().filter(|r| r.solvable).count();
    assert_eq!(s.solvability_rate, Some(yes as f64 / ratings.len() as f64));
    let mut label: BTreeMap<&str, Option<bool>> = BTreeMap::new();
    for p in &batch.problem_ids {
        let rs: Vec<_> = ratings.iter().filter(|r| &r.problem_id == p).collect();
        let y = rs.iter().filter(|r| r.solvable).count();
        let n = rs.len() - y;
        label.insert(
            p,
            if y > n {
                Some(true)
            } else if n > y {
                Some(false)
            } else {
                None
            },
        );
    }
    let mut rates = Vec::new();
    for a in &raters {
        let mine: Vec<_> =
            ratings.iter().filter(|r| &r.annotator_id == a && label[r.problem_id.as_str()].is_some()).collect();
        if !mine.is_empty() {
            let m = mine.iter().filter(|r| Some(r.solvable) == label[r.problem_id.as_str()]).count();
            rates.push(m as f64 / mine.len() as f64);
        }
    }
    let want = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((s.agreement.unwrap() - want).abs() < 1e-12);
    let incomplete: Vec<&String> = batch
        .problem_ids
        .iter()
        .filter(|p| ratings.iter().filter(|r| &r.problem_id == *p).count() < raters.len())
        .collect();
    assert_eq!(s.incomplete.iter().collect::<Vec<_>>(), incomplete);
}

#[test]
fn kappa_textbook_values() {
    // Ten subjects, fourteen raters, five categories; κ ≈ 0.210.
    let rows = vec![
        vec![0, 0, 0, 0, 14],
        vec![0, 2, 6, 4, 2],
        vec![0, 0, 3, 5, 6],
        vec![0, 3, 9, 2, 0],
        vec![2, 2, 8, 1, 1],
        vec![7, 7, 0, 0, 0],
        vec![3, 2, 6, 3, 0],
        vec![2, 5, 3, 2, 2],
        vec![6, 5, 2, 1, 0],
        vec![0, 2, 2, 3, 7],
    ];
    let k = fleiss_kappa(&rows).unwrap();
    assert!((k - 0.2099).abs() < 5e-4, "{k}");
    assert_eq!(fleiss_kappa(&[vec![3, 0], vec![2, 0]]), None);

    // 20 yes/yes, 5 yes/no, 10 no/yes, 15 no/no: κ = 0.4.
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [(1, 1, 20), (1, 0, 5), (0, 1, 10), (0, 0, 15)] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    assert!((cohen_kappa(&a, &b, 2).unwrap() - 0.4).abs() < 1e-12);
    assert_eq!(cohen_kappa(&[1, 1], &[1, 1], 2), None);
}
