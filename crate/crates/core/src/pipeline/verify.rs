use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{hash_file, CalibrationRecord, Manifest, OutDir, SolversRecord};
use crate::dataset::read_jsonl;
use crate::error::Result;
use crate::eval::{judge, problem_limits};
use crate::model::{validate_problem, Problem, Strategy, TestSuite};
use crate::oracle::calibrate_limits;
use crate::sandbox::{normalize_output, GuestProgram, Sandbox};
use crate::synth::VALIDATOR_ENTRY;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub problems: usize,
    pub cases: usize,
    pub deep: bool,
    pub failures: Vec<String>,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Re-derives the release invariants from the files in `out_dir`. With a
/// sandbox, also re-runs every validator and judges the fastest pool solver
/// against the suite under the released limits.
pub fn verify(out_dir: &Path, deep: Option<&Sandbox>) -> Result<VerifyReport> {
    let out = OutDir(out_dir.to_path_buf());
    let manifest = Manifest::load(&out.manifest())?;
    let problems: Vec<Problem> = read_jsonl(&out.problems())?;
    let suites: Vec<TestSuite> = read_jsonl(&out.suites())?;
    let solvers: Vec<SolversRecord> = read_jsonl(&out.solvers())?;
    let calibration: Vec<CalibrationRecord> = read_jsonl(&out.calibration())?;
    let mut r = VerifyReport { problems: problems.len(), deep: deep.is_some(), ..Default::default() };
    let mut fail = |m: String| r.failures.push(m);

    for (rel, want) in &manifest.artifacts {
        match hash_file(&out.0.join(rel))? {
            Some(h) if &h == want => {}
            Some(_) => fail(format!("{rel}: content differs from the manifest")),
            None => fail(format!("{rel}: listed in the manifest but missing")),
        }
    }
    for rel in out.released_files()? {
        let rel = rel.to_string_lossy().replace('\\', "/");
        if !manifest.artifacts.contains_key(&rel) {
            fail(format!("{rel}: not listed in the manifest"));
        }
    }

    let suite_of: BTreeMap<&str, &TestSuite> = suites.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let solvers_of: BTreeMap<&str, &SolversRecord> = solvers.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let calib_of: BTreeMap<&str, &CalibrationRecord> = calibration.iter().map(|c| (c.problem_id.as_str(), c)).collect();
    let ids: HashSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
    if ids.len() != problems.len() {
        fail("problems.jsonl has duplicate ids".into());
    }
    for s in &suites {
        if !ids.contains(s.problem_id.as_str()) {
            fail(format!("suite for unreleased problem {}", s.problem_id));
        }
    }
    if suites.len() != suite_of.len() {
        fail("suites.jsonl has more than one suite for a problem".into());
    }

    for p in &problems {
        let id = &p.id;
        for v in validate_problem(p) {
            fail(format!("{id}: {v}"));
        }
        let content = Problem::content_id(p.lineage.strategy, &p.statement, &p.input_format, &p.output_format);
        if &content != id {
            fail(format!("{id}: id does not match content ({content})"));
        }
        if p.lineage.strategy == Strategy::Seed {
            fail(format!("{id}: released problem has seed lineage"));
        }
        if p.time_limit_ms.is_none() || p.memory_limit_mb.is_none() {
            fail(format!("{id}: limits not calibrated"));
        }
        for f in ["random_generator.py", "adversarial_generator.py", "validator.py"] {
            if !out.generators(id).join(f).is_file() {
                fail(format!("{id}: generators/{f} missing"));
            }
        }
        let Some(suite) = suite_of.get(id.as_str()) else {
            fail(format!("{id}: no suite"));
            continue;
        };
        r.cases += suite.cases.len();
        for v in suite.release_violations(manifest.composition) {
            fail(format!("{id}: {v}"));
        }
        let pool: Vec<&str> = solvers_of
            .get(id.as_str())
            .map(|s| s.optimized.iter().filter(|c| c.filtered_in == Some(true)).map(|c| c.id.as_str()).collect())
            .unwrap_or_default();
        if pool.is_empty() {
            fail(format!("{id}: no trusted pool recorded"));
        }
        match calib_of.get(id.as_str()) {
            None => fail(format!("{id}: no calibration record")),
            Some(c) => {
                match calibrate_limits(&c.timings, &c.policy) {
                    Ok(l) if l == c.limits => {}
                    Ok(l) => fail(format!("{id}: recorded limits {:?} do not follow from timings ({:?})", c.limits, l)),
                    Err(e) => fail(format!("{id}: recorded timings do not calibrate: {e}")),
                }
                if p.time_limit_ms != Some(c.limits.time_limit_ms)
                    || p.memory_limit_mb != Some(c.limits.memory_limit_mb)
                {
                    fail(format!("{id}: problem limits differ from calibration record"));
                }
                if !pool.contains(&c.limits.fastest_solver_id.as_str()) {
                    fail(format!("{id}: fastest solver {} is not in the pool", c.limits.fastest_solver_id));
                }
            }
        }

        let Some(sandbox) = deep else { continue };
        let validator_path = out.generators(id).join("validator.py");
        let Ok(src) = std::fs::read_to_string(&validator_path) else { continue };
        let validator = GuestProgram::python_fn(src, VALIDATOR_ENTRY);
        let limits = crate::sandbox::ExecLimits::new(10_000, 512)?;
        let jobs: Vec<crate::sandbox::Job> = suite
            .cases
            .iter()
            .map(|c| crate::sandbox::Job { program: &validator, stdin: &c.input, limits, seed: 0 })
            .collect();
        for (i, res) in sandbox.try_run_batch(&jobs)?.iter().enumerate() {
            if normalize_output(&res.stdout) != "True" {
                fail(format!("{id}: case {i} fails re-validation ({:?})", res.verdict));
            }
        }
        let fastest = calib_of
            .get(id.as_str())
            .and_then(|c| solvers_of.get(id.as_str())?.optimized.iter().find(|s| s.id == c.limits.fastest_solver_id));
        if let (Some(s), Ok(limits)) = (fastest, problem_limits(p)) {
            let report = judge(sandbox, s, suite, &limits, false)?;
            if !report.passed {
                let bad: Vec<String> = report
                    .cases
                    .iter()
                    .filter(|c| c.verdict != crate::model::Verdict::Accepted)
                    .map(|c| format!("{}:{}", c.index, c.verdict.short()))
                    .collect();
                fail(format!("{id}: fastest pool solver {} fails the released suite at {}", s.id, bad.join(",")));
            }
        }
    }
    Ok(r)
}
