mod common;

use std::fs;
use std::path::Path;

use probsmith_core::dataset::read_jsonl;
use probsmith_core::error::Error;
use probsmith_core::model::{Composition, OracleStage, Problem, TestSuite};
use probsmith_core::pipeline::{
    verify, CompositionConfig, ParkReason, ParkRecord, Pipeline, PipelineConfig, ProviderKind, SolversRecord, Stage,
};

fn small(out: &Path) -> PipelineConfig {
    let mut cfg = common::e2e_config(out);
    cfg.generation.count = 1;
    cfg.composition = CompositionConfig { random: 4, adversarial: 4, direct: 2, spare: 1 };
    cfg
}

fn released_bytes(out: &Path) -> Vec<(String, Vec<u8>)> {
    let p = Pipeline::new(common::e2e_config(out)).unwrap();
    p.out
        .released_files()
        .unwrap()
        .into_iter()
        .map(|rel| (rel.to_string_lossy().into_owned(), fs::read(out.join(&rel)).unwrap()))
        .collect()
}

#[test]
fn small_run_releases_verifies_and_replays() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let p = Pipeline::new(small(&a)).unwrap();
    let report = p.run().unwrap();
    assert_eq!(report.parked(), 0, "{:?}", report.manifest.counts);
    assert_eq!(report.manifest.counts.released, 1);

    let problems: Vec<Problem> = read_jsonl(&p.out.problems()).unwrap();
    let suites: Vec<TestSuite> = read_jsonl(&p.out.suites()).unwrap();
    let solvers: Vec<SolversRecord> = read_jsonl(&p.out.solvers()).unwrap();
    let suite = &suites[0];
    assert_eq!(suite.composition, Composition { random: 4, adversarial: 4, direct: 2 });
    assert!(suite.degraded.is_none());
    for c in &suite.cases {
        assert!(c.provenance.verifier_decision);
        assert!(c.provenance.oracle_stage.is_some());
        assert_ne!(c.provenance.oracle_stage, Some(OracleStage::Adjudicated));
        let want = common::reference(&problems[0].statement, &c.input).unwrap();
        assert_eq!(c.output.as_deref(), Some(want.as_str()), "input {:?}", c.input);
    }
    let rejected: Vec<&str> =
        solvers[0].optimized.iter().filter(|s| s.filtered_in == Some(false)).map(|s| s.id.as_str()).collect();
    assert_eq!(rejected, common::PLANTED);
    assert_eq!(problems[0].time_limit_ms, Some(1000));

    let v = verify(&a, Some(p.sandbox())).unwrap();
    assert!(v.ok(), "{:?}", v.failures);
    assert_eq!(v.cases, 10);

    let b = dir.path().join("b");
    let mut cfg = small(&b);
    cfg.provider.kind = ProviderKind::Scripted;
    cfg.provider.transcripts = Some(a.join("transcripts"));
    cfg.provider.record = false;
    let replay = Pipeline::new(cfg).unwrap().run().unwrap();
    assert_eq!(released_bytes(&a), released_bytes(&b));
    assert_eq!(replay.manifest.artifacts, report.manifest.artifacts);
    assert_eq!(replay.manifest.transcripts, report.manifest.transcripts);
}

#[test]
fn tampered_release_fails_verify() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let p = Pipeline::new(small(&out)).unwrap();
    p.run().unwrap();
    let path = p.out.suites();
    let text = fs::read_to_string(&path).unwrap();
    let mut suites: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    suites[0]["cases"][0]["output"] = serde_json::Value::String("-1".into());
    let body: String = suites.iter().map(|s| format!("{s}\n")).collect();
    fs::write(&path, body).unwrap();
    let v = verify(&out, Some(p.sandbox())).unwrap();
    assert!(v.failures.iter().any(|f| f.contains("suites.jsonl: content differs")), "{:?}", v.failures);
    assert!(v.failures.iter().any(|f| f.contains("fastest pool solver")), "{:?}", v.failures);
}

#[test]
fn missing_transcript_is_fatal_and_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(&dir.path().join("o"));
    cfg.provider.kind = ProviderKind::Scripted;
    cfg.provider.transcripts = Some(dir.path().join("nothing-recorded"));
    let err = Pipeline::new(cfg).unwrap().run().unwrap_err();
    match &err {
        Error::Stage { stage, problem_id, .. } => {
            assert_eq!(*stage, "generate");
            assert_eq!(problem_id, "attempt-0");
        }
        other => panic!("expected a stage error, got {other}"),
    }
    assert!(err.is_fatal());
}

#[test]
fn short_pool_parks_instead_of_releasing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o");
    let mut cfg = small(&out);
    cfg.oracle.n_min = 7;
    let p = Pipeline::new(cfg).unwrap();
    let report = p.run().unwrap();
    assert_eq!(report.manifest.counts.released, 0);
    assert_eq!(report.manifest.counts.parked_by_reason.get(&ParkReason::InsufficientPool), Some(&1));
    let parked: Vec<ParkRecord> = read_jsonl(&p.out.parked()).unwrap();
    assert_eq!(parked[0].stage, Stage::SynthOutputs);
    assert!(parked[0].detail.contains("6 solvers, need 7"), "{}", parked[0].detail);
    assert!(p.out.released_files().unwrap().iter().all(|f| !f.starts_with("generators")));
}
