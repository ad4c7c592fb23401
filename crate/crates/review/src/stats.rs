use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::batch::ReviewBatch;
use crate::store::{Rating, VariantType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemStats {
    pub problem_id: String,
    pub ratings: usize,
    pub solvable: usize,
    /// Strict-majority solvability label; absent on a tie or with no ratings.
    pub majority_solvable: Option<bool>,
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotatorAgreement {
    pub annotator: String,
    pub rated: usize,
    /// Ratings on problems that have a majority label.
    pub compared: usize,
    pub matches: usize,
    pub rate: Option<f64>,
}

/// Chance-corrected statistics, reported next to the primary agreement rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecondaryAgreement {
    /// Fleiss' κ on solvability over fully rated problems.
    pub fleiss_kappa: Option<f64>,
    /// Mean Cohen's κ over annotator pairs with a defined value.
    pub mean_pairwise_cohen_kappa: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewStats {
    pub batch_id: String,
    pub ratings: usize,
    pub expected_ratings: usize,
    /// Fraction of individual ratings marked solvable.
    pub solvability_rate: Option<f64>,
    /// Fraction of problems whose majority label is solvable.
    pub majority_solvability_rate: Option<f64>,
    /// Mean over annotators of their match rate with the per-problem majority.
    pub agreement: Option<f64>,
    pub novelty_mean: Option<f64>,
    pub variant_counts: BTreeMap<VariantType, usize>,
    pub per_problem: Vec<ProblemStats>,
    pub per_annotator: Vec<AnnotatorAgreement>,
    pub incomplete: Vec<String>,
    pub secondary: SecondaryAgreement,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn mean(xs: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Recomputes everything from the ratings; ratings outside the batch's
/// assignments are ignored.
pub fn review_stats(batch: &ReviewBatch, ratings: &[Rating]) -> ReviewStats {
    let mut by_cell: BTreeMap<(&str, &str), &Rating> = BTreeMap::new();
    for r in ratings {
        if r.batch_id == batch.batch_id && batch.is_assigned(&r.problem_id, &r.annotator_id) {
            by_cell.insert((r.problem_id.as_str(), r.annotator_id.as_str()), r);
        }
    }
    let cell = |p: &str, a: &str| by_cell.get(&(p, a)).copied();

    let per_problem: Vec<ProblemStats> = batch
        .problem_ids
        .iter()
        .map(|p| {
            let rs: Vec<&Rating> = batch.annotators.iter().filter_map(|a| cell(p, a)).collect();
            let n = rs.len();
            let s = rs.iter().filter(|r| r.solvable).count();
            let majority_solvable = if 2 * s > n {
                Some(true)
            } else if 2 * (n - s) > n {
                Some(false)
            } else {
                None
            };
            ProblemStats {
                problem_id: p.clone(),
                ratings: n,
                solvable: s,
                majority_solvable,
                complete: n == batch.annotators.len(),
            }
        })
        .collect();
    let majority: BTreeMap<&str, Option<bool>> =
        per_problem.iter().map(|p| (p.problem_id.as_str(), p.majority_solvable)).collect();

    let per_annotator: Vec<AnnotatorAgreement> = batch
        .annotators
        .iter()
        .map(|a| {
            let mine: Vec<&Rating> = batch.problem_ids.iter().filter_map(|p| cell(p, a)).collect();
            let labelled: Vec<(&Rating, bool)> =
                mine.iter().filter_map(|r| majority[r.problem_id.as_str()].map(|m| (*r, m))).collect();
            let matches = labelled.iter().filter(|(r, m)| r.solvable == *m).count();
            AnnotatorAgreement {
                annotator: a.clone(),
                rated: mine.len(),
                compared: labelled.len(),
                matches,
                rate: ratio(matches, labelled.len()),
            }
        })
        .collect();

    let total = by_cell.len();
    let solvable = by_cell.values().filter(|r| r.solvable).count();
    let with_label: Vec<bool> = per_problem.iter().filter_map(|p| p.majority_solvable).collect();
    let mut variant_counts = BTreeMap::new();
    for r in by_cell.values() {
        *variant_counts.entry(r.variant_type).or_insert(0) += 1;
    }

    let complete_rows: Vec<Vec<usize>> =
        per_problem.iter().filter(|p| p.complete).map(|p| vec![p.solvable, p.ratings - p.solvable]).collect();
    let mut pair_kappas = Vec::new();
    for (i, a) in batch.annotators.iter().enumerate() {
        for b in &batch.annotators[i + 1..] {
            let (mut xa, mut xb) = (Vec::new(), Vec::new());
            for p in &batch.problem_ids {
                if let (Some(ra), Some(rb)) = (cell(p, a), cell(p, b)) {
                    xa.push(usize::from(ra.solvable));
                    xb.push(usize::from(rb.solvable));
                }
            }
            pair_kappas.extend(cohen_kappa(&xa, &xb, 2));
        }
    }

    ReviewStats {
        batch_id: batch.batch_id.clone(),
        ratings: total,
        expected_ratings: batch.problem_ids.len() * batch.annotators.len(),
        solvability_rate: ratio(solvable, total),
        majority_solvability_rate: ratio(with_label.iter().filter(|&&m| m).count(), with_label.len()),
        agreement: mean(per_annotator.iter().filter_map(|a| a.rate)),
        novelty_mean: mean(by_cell.values().map(|r| f64::from(r.novelty))),
        variant_counts,
        incomplete: per_problem.iter().filter(|p| !p.complete).map(|p| p.problem_id.clone()).collect(),
        per_problem,
        per_annotator,
        secondary: SecondaryAgreement {
            fleiss_kappa: fleiss_kappa(&complete_rows),
            mean_pairwise_cohen_kappa: mean(pair_kappas),
        },
    }
}

/// Fleiss' κ for rows of per-category counts. Every row must have the same
/// number of raters, at least two. Undefined when all ratings share one
/// category.
pub fn fleiss_kappa(rows: &[Vec<usize>]) -> Option<f64> {
    let n = rows.first()?.iter().sum::<usize>();
    if n < 2 || rows.iter().any(|r| r.iter().sum::<usize>() != n || r.len() != rows[0].len()) {
        return None;
    }
    let (subjects, nf) = (rows.len() as f64, n as f64);
    let p_bar =
        rows.iter().map(|r| (r.iter().map(|&c| (c * c) as f64).sum::<f64>() - nf) / (nf * (nf - 1.0))).sum::<f64>()
            / subjects;
    let p_e: f64 = (0..rows[0].len())
        .map(|j| {
            let pj = rows.iter().map(|r| r[j]).sum::<usize>() as f64 / (subjects * nf);
            pj * pj
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return None;
    }
    Some((p_bar - p_e) / (1.0 - p_e))
}

/// Cohen's κ for two raters over the same items, labels in `0..k`.
/// Undefined with no items or when chance agreement is certain.
pub fn cohen_kappa(a: &[usize], b: &[usize], k: usize) -> Option<f64> {
    if a.is_empty() || a.len() != b.len() || a.iter().chain(b).any(|&x| x >= k) {
        return None;
    }
    let n = a.len() as f64;
    let p_o = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|c| {
            let ca = a.iter().filter(|&&x| x == c).count() as f64;
            let cb = b.iter().filter(|&&x| x == c).count() as f64;
            (ca / n) * (cb / n)
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return None;
    }
    Some((p_o - p_e) / (1.0 - p_e))
}
