//! Judging submissions against completed suites and the benchmark metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Difficulty, GeneratorKind, Problem, SolverCandidate, TestSuite, Verdict};
use crate::sandbox::{normalize_output, ExecLimits, GuestProgram, Job, Sandbox};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseVerdict {
    pub index: usize,
    pub generator: GeneratorKind,
    pub verdict: Verdict,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgeReport {
    pub submission_id: String,
    pub problem_id: String,
    /// In suite order; with fail-fast this stops at the first failure.
    pub cases: Vec<CaseVerdict>,
    pub passed: bool,
}

/// The limits a released problem is judged under.
pub fn problem_limits(p: &Problem) -> Result<ExecLimits> {
    match (p.time_limit_ms, p.memory_limit_mb) {
        (Some(t), Some(m)) => Ok(ExecLimits::new(t, m)?),
        _ => Err(Error::Argument(format!("problem {} has no calibrated limits", p.id))),
    }
}

fn case_verdict(r: &crate::model::ExecutionResult, expected: &str) -> Verdict {
    match r.verdict {
        Verdict::Accepted if normalize_output(&r.stdout) != expected => Verdict::WrongOutput,
        v => v,
    }
}

/// Runs a submission over every case. Passing means every case is Accepted.
pub fn judge(
    sandbox: &Sandbox,
    submission: &SolverCandidate,
    suite: &TestSuite,
    limits: &ExecLimits,
    fail_fast: bool,
) -> Result<JudgeReport> {
    let expected: Vec<&str> = suite
        .cases
        .iter()
        .map(|c| c.output.as_deref())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::Argument(format!("suite for {} has cases without outputs", suite.problem_id)))?;
    let program = GuestProgram::python(submission.source.clone());
    let mut cases = Vec::with_capacity(suite.cases.len());
    let verdict_of = |i: usize, r: &crate::model::ExecutionResult| CaseVerdict {
        index: i,
        generator: suite.cases[i].provenance.generator,
        verdict: case_verdict(r, expected[i]),
        wall_ms: r.wall_ms,
    };
    if fail_fast {
        for (i, c) in suite.cases.iter().enumerate() {
            let r = sandbox.run_guest(&program, &c.input, limits)?;
            let v = verdict_of(i, &r);
            let stop = v.verdict != Verdict::Accepted;
            cases.push(v);
            if stop {
                break;
            }
        }
    } else {
        let jobs: Vec<Job> =
            suite.cases.iter().map(|c| Job { program: &program, stdin: &c.input, limits: *limits, seed: 0 }).collect();
        for (i, r) in sandbox.try_run_batch(&jobs)?.iter().enumerate() {
            cases.push(verdict_of(i, r));
        }
    }
    let passed = cases.len() == suite.cases.len() && cases.iter().all(|c| c.verdict == Verdict::Accepted);
    Ok(JudgeReport { submission_id: submission.id.clone(), problem_id: suite.problem_id.clone(), cases, passed })
}

/// Problems × ordered attempts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictMatrix {
    pub problem_ids: Vec<String>,
    pub passed: Vec<Vec<bool>>,
    /// Per problem, per attempt, the case verdicts.
    pub detail: Vec<Vec<Vec<CaseVerdict>>>,
}

impl VerdictMatrix {
    pub fn from_bools(problem_ids: Vec<String>, passed: Vec<Vec<bool>>) -> Result<Self> {
        let detail = passed.iter().map(|row| vec![Vec::new(); row.len()]).collect();
        Self::build(problem_ids, passed, detail)
    }

    /// Rows keep the order given; attempts keep report order.
    pub fn from_reports(rows: Vec<(String, Vec<JudgeReport>)>) -> Result<Self> {
        let mut ids = Vec::new();
        let mut passed = Vec::new();
        let mut detail = Vec::new();
        for (id, reports) in rows {
            ids.push(id);
            passed.push(reports.iter().map(|r| r.passed).collect());
            detail.push(reports.into_iter().map(|r| r.cases).collect());
        }
        Self::build(ids, passed, detail)
    }

    fn build(problem_ids: Vec<String>, passed: Vec<Vec<bool>>, detail: Vec<Vec<Vec<CaseVerdict>>>) -> Result<Self> {
        if problem_ids.len() != passed.len() {
            return Err(Error::Argument("one row per problem required".into()));
        }
        if let Some(first) = passed.first() {
            if let Some((i, _)) = passed.iter().enumerate().find(|(_, r)| r.len() != first.len()) {
                return Err(Error::Argument(format!("ragged verdict matrix at problem {}", problem_ids[i])));
            }
        }
        Ok(VerdictMatrix { problem_ids, passed, detail })
    }

    pub fn attempts(&self) -> usize {
        self.passed.first().map_or(0, Vec::len)
    }

    fn select(&self, keep: impl Fn(usize) -> bool) -> VerdictMatrix {
        let idx: Vec<usize> = (0..self.problem_ids.len()).filter(|&i| keep(i)).collect();
        VerdictMatrix {
            problem_ids: idx.iter().map(|&i| self.problem_ids[i].clone()).collect(),
            passed: idx.iter().map(|&i| self.passed[i].clone()).collect(),
            detail: idx.iter().map(|&i| self.detail[i].clone()).collect(),
        }
    }
}

/// Fraction of problems solved by at least one of the first `k` attempts.
pub fn pass_at_k(m: &VerdictMatrix, k: usize) -> Result<f64> {
    if m.problem_ids.is_empty() {
        return Err(Error::Argument("pass@k of an empty matrix".into()));
    }
    if k == 0 || k > m.attempts() {
        return Err(Error::Argument(format!("k={k} outside 1..={} attempts", m.attempts())));
    }
    let solved = m.passed.iter().filter(|row| row[..k].iter().any(|&b| b)).count();
    Ok(solved as f64 / m.problem_ids.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRates {
    pub rand_pass: Option<f64>,
    /// Adversarial and direct-synth cases together.
    pub adv_pass: Option<f64>,
    /// AdvPass − RandPass.
    pub delta: Option<f64>,
}

fn rate(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn split_pass_rates<'a>(cases: impl IntoIterator<Item = &'a CaseVerdict>) -> SplitRates {
    let (mut r, mut rn, mut a, mut an) = (0, 0, 0, 0);
    for c in cases {
        let ok = (c.verdict == Verdict::Accepted) as usize;
        if c.generator.is_adversarial() {
            a += ok;
            an += 1;
        } else {
            r += ok;
            rn += 1;
        }
    }
    let rand_pass = rate(r, rn);
    let adv_pass = rate(a, an);
    let delta = rand_pass.zip(adv_pass).map(|(r, a)| a - r);
    SplitRates { rand_pass, adv_pass, delta }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteQualityReport {
    pub corr: Option<f64>,
    pub cov: Option<f64>,
    pub n_correct_subs: usize,
    pub n_incorrect_subs: usize,
}

/// Fraction of known-correct submissions the suite accepts.
pub fn corr_at_n(correct: &[JudgeReport]) -> Option<f64> {
    rate(correct.iter().filter(|r| r.passed).count(), correct.len())
}

/// Fraction of known-incorrect submissions the suite rejects.
pub fn cov_at_n(incorrect: &[JudgeReport]) -> Option<f64> {
    rate(incorrect.iter().filter(|r| !r.passed).count(), incorrect.len())
}

pub fn suite_quality(correct: &[JudgeReport], incorrect: &[JudgeReport]) -> SuiteQualityReport {
    SuiteQualityReport {
        corr: corr_at_n(correct),
        cov: cov_at_n(incorrect),
        n_correct_subs: correct.len(),
        n_incorrect_subs: incorrect.len(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRow {
    pub tag: String,
    pub problems: usize,
    pub solved: usize,
    pub pass_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagReport {
    pub rows: Vec<TagRow>,
    pub overall: TagRow,
}

/// pass@1 per primary tag. Every matrix row must name a problem in `problems`.
pub fn tag_report(m: &VerdictMatrix, problems: &[Problem]) -> Result<TagReport> {
    let by_id: BTreeMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    if m.attempts() == 0 {
        return Err(Error::Argument("tag report needs at least one attempt".into()));
    }
    let mut acc: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for (id, row) in m.problem_ids.iter().zip(&m.passed) {
        let p = by_id.get(id.as_str()).ok_or_else(|| Error::Argument(format!("unknown problem {id}")))?;
        let tag = p.primary_tag().ok_or_else(|| Error::Argument(format!("problem {id} has no tags")))?;
        let e = acc.entry(tag.to_string()).or_default();
        e.0 += 1;
        e.1 += row[0] as usize;
    }
    let row =
        |tag: String, (n, s): (usize, usize)| TagRow { tag, problems: n, solved: s, pass_at_1: s as f64 / n as f64 };
    let total = acc.values().fold((0, 0), |(n, s), &(a, b)| (n + a, s + b));
    Ok(TagReport { rows: acc.into_iter().map(|(t, c)| row(t, c)).collect(), overall: row("overall".into(), total) })
}

/// One model's results over the benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelResults {
    pub model: String,
    pub matrix: VerdictMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub model: String,
    pub easy: Option<f64>,
    pub medium: Option<f64>,
    pub hard: Option<f64>,
    pub overall: Option<f64>,
    pub rates: SplitRates,
}

/// pass@1 by difficulty, and the split rates over first-attempt case verdicts.
pub fn leaderboard_row(r: &ModelResults, problems: &[Problem]) -> Result<LeaderboardRow> {
    let difficulty: BTreeMap<&str, Difficulty> = problems.iter().map(|p| (p.id.as_str(), p.difficulty)).collect();
    let of = |d: Option<Difficulty>| -> Result<Option<f64>> {
        let sub = r.matrix.select(|i| d.is_none() || difficulty.get(r.matrix.problem_ids[i].as_str()) == d.as_ref());
        if sub.problem_ids.is_empty() {
            Ok(None)
        } else {
            pass_at_k(&sub, 1).map(Some)
        }
    };
    for id in &r.matrix.problem_ids {
        if !difficulty.contains_key(id.as_str()) {
            return Err(Error::Argument(format!("unknown problem {id}")));
        }
    }
    let first_attempt = r.matrix.detail.iter().filter_map(|row| row.first()).flatten();
    Ok(LeaderboardRow {
        model: r.model.clone(),
        easy: of(Some(Difficulty::Easy))?,
        medium: of(Some(Difficulty::Medium))?,
        hard: of(Some(Difficulty::Hard))?,
        overall: of(None)?,
        rates: split_pass_rates(first_attempt),
    })
}

fn pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:.1}", v * 100.0))
}

fn signed_pct(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{:+.1}", v * 100.0))
}

/// Plain-text table, rows sorted by overall pass@1 descending.
pub fn render_leaderboard(rows: &[LeaderboardRow]) -> String {
    let mut rows: Vec<&LeaderboardRow> = rows.iter().collect();
    rows.sort_by(|a, b| {
        b.overall.unwrap_or(-1.0).total_cmp(&a.overall.unwrap_or(-1.0)).then_with(|| a.model.cmp(&b.model))
    });
    let width = rows.iter().map(|r| r.model.len()).chain([5]).max().unwrap_or(5);
    let mut out = format!(
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>8}  {:>7}  {:>6}\n",
        "Model", "Easy", "Medium", "Hard", "Overall", "RandPass", "AdvPass", "Δ(A-R)"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>7}  {:>8}  {:>7}  {:>6}",
            r.model,
            pct(r.easy),
            pct(r.medium),
            pct(r.hard),
            pct(r.overall),
            pct(r.rates.rand_pass),
            pct(r.rates.adv_pass),
            signed_pct(r.rates.delta),
        );
    }
    out
}

/// One line of results JSONL: a single attempt on a single problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub model: String,
    pub problem_id: String,
    pub attempt: usize,
    pub submission_id: String,
    pub passed: bool,
    pub cases: Vec<CaseVerdict>,
}

/// Rebuilds per-model matrices from result records. Attempts are ordered
/// by their index; problems by first appearance.
pub fn matrices_from_records(records: &[ResultRecord]) -> Result<Vec<ModelResults>> {
    type Rows<'a> = BTreeMap<&'a str, BTreeMap<usize, JudgeReport>>;
    let mut models: BTreeMap<&str, (Vec<String>, Rows)> = BTreeMap::new();
    for r in records {
        let (order, rows) = models.entry(&r.model).or_default();
        let row = rows.entry(&r.problem_id).or_insert_with(|| {
            order.push(r.problem_id.clone());
            BTreeMap::new()
        });
        let report = JudgeReport {
            submission_id: r.submission_id.clone(),
            problem_id: r.problem_id.clone(),
            cases: r.cases.clone(),
            passed: r.passed,
        };
        if row.insert(r.attempt, report).is_some() {
            return Err(Error::Argument(format!(
                "duplicate attempt {} for {} on {}",
                r.attempt, r.model, r.problem_id
            )));
        }
    }
    models
        .into_iter()
        .map(|(model, (order, mut rows))| {
            let rows = order
                .into_iter()
                .map(|id| {
                    let attempts = rows.remove(id.as_str()).unwrap_or_default().into_values().collect();
                    (id, attempts)
                })
                .collect();
            Ok(ModelResults { model: model.to_string(), matrix: VerdictMatrix::from_reports(rows)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[&[bool]]) -> VerdictMatrix {
        let ids = (0..rows.len()).map(|i| format!("P{i}")).collect();
        VerdictMatrix::from_bools(ids, rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn pass_at_k_examples() {
        let x = m(&[&[true, false], &[false, false], &[false, true]]);
        assert!((pass_at_k(&x, 1).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!((pass_at_k(&x, 2).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert!(pass_at_k(&x, 3).is_err());
        assert!(pass_at_k(&x, 0).is_err());
    }

    #[test]
    fn ragged_rejected() {
        assert!(VerdictMatrix::from_bools(vec!["a".into(), "b".into()], vec![vec![true], vec![]]).is_err());
    }

    fn cv(kind: GeneratorKind, ok: bool) -> CaseVerdict {
        CaseVerdict {
            index: 0,
            generator: kind,
            verdict: if ok { Verdict::Accepted } else { Verdict::WrongOutput },
            wall_ms: 0,
        }
    }

    #[test]
    fn split_rates() {
        let mut cases = Vec::new();
        cases.extend((0..20).map(|i| cv(GeneratorKind::Random, i < 18)));
        cases.extend((0..20).map(|i| cv(GeneratorKind::Adversarial, i < 16)));
        cases.extend((0..10).map(|i| cv(GeneratorKind::DirectSynth, i < 8)));
        let s = split_pass_rates(&cases);
        assert!((s.rand_pass.unwrap() - 0.9).abs() < 1e-12);
        assert!((s.adv_pass.unwrap() - 0.8).abs() < 1e-12);
        assert!((s.delta.unwrap() + 0.1).abs() < 1e-12);
        let only_random = split_pass_rates(&cases[..20]);
        assert_eq!((only_random.adv_pass, only_random.delta), (None, None));
    }

    #[test]
    fn empty_quality_sets_are_absent() {
        assert_eq!(suite_quality(&[], &[]).corr, None);
        assert_eq!(cov_at_n(&[]), None);
    }
}
