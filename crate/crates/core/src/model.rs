//! Domain types shared by every pipeline stage.
//!
//! All types are plain immutable values once constructed; stages produce new
//! values instead of mutating shared state.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MAX_TAGS: usize = 3;
pub const MAX_SKILLS: usize = 3;
pub const MIN_EXAMPLES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().trim_matches(|c| c == '[' || c == ']').to_ascii_lowercase().as_str() {
            "easy" => Some(Difficulty::Easy),
            "medium" => Some(Difficulty::Medium),
            "hard" => Some(Difficulty::Hard),
            _ => None,
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "Easy",
            Difficulty::Medium => "Medium",
            Difficulty::Hard => "Hard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    SingleExtension,
    SameTypeFusion,
    CrossTypeFusion,
    Seed,
}

impl Strategy {
    /// Two-letter prefix used in content-hash ids.
    pub fn code(self) -> &'static str {
        match self {
            Strategy::SingleExtension => "SE",
            Strategy::SameTypeFusion => "ST",
            Strategy::CrossTypeFusion => "CT",
            Strategy::Seed => "SD",
        }
    }

    pub fn seed_arity(self) -> usize {
        match self {
            Strategy::SingleExtension => 1,
            Strategy::SameTypeFusion | Strategy::CrossTypeFusion => 2,
            Strategy::Seed => 0,
        }
    }

    pub fn is_fusion(self) -> bool {
        matches!(self, Strategy::SameTypeFusion | Strategy::CrossTypeFusion)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationLineage {
    pub strategy: Strategy,
    #[serde(default)]
    pub seed_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instruction: Option<String>,
}

impl GenerationLineage {
    pub fn seed() -> Self {
        GenerationLineage { strategy: Strategy::Seed, seed_ids: Vec::new(), shared_tag: None, instruction: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub input: String,
    pub output: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Problem {
    pub id: String,
    pub statement: String,
    pub input_format: String,
    pub output_format: String,
    #[serde(default)]
    pub constraints: String,
    pub examples: Vec<Example>,
    pub tags: Vec<String>,
    pub skills: Vec<String>,
    pub difficulty: Difficulty,
    pub lineage: GenerationLineage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_limit_ms: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memory_limit_mb: Option<u64>,
}

impl Problem {
    /// Content-hash id: strategy code plus the first 12 hex digits of a
    /// SHA-256 over the statement and I/O specification.
    pub fn content_id(strategy: Strategy, statement: &str, input_format: &str, output_format: &str) -> String {
        let mut h = Sha256::new();
        for part in [statement, input_format, output_format] {
            h.update(part.as_bytes());
            h.update([0u8]);
        }
        let digest = hex::encode(h.finalize());
        format!("{}-{}", strategy.code(), &digest[..12])
    }

    /// First tag, used as the primary algorithmic paradigm in reports.
    pub fn primary_tag(&self) -> Option<&str> {
        self.tags.first().map(String::as_str)
    }
}

/// One broken invariant, rendered as `field: rule`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub rule: String,
}

impl Violation {
    fn new(field: &'static str, rule: impl Into<String>) -> Self {
        Violation { field, rule: rule.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Checks every structural invariant of a problem. Total and side-effect free.
pub fn validate_problem(p: &Problem) -> Vec<Violation> {
    let mut out = Vec::new();
    if p.id.trim().is_empty() {
        out.push(Violation::new("id", "must be non-empty"));
    }
    for (field, text) in
        [("statement", &p.statement), ("input_format", &p.input_format), ("output_format", &p.output_format)]
    {
        if text.trim().is_empty() {
            out.push(Violation::new(field, "must be non-empty"));
        }
    }
    if p.examples.len() < MIN_EXAMPLES {
        out.push(Violation::new("examples", format!("count {} below {}", p.examples.len(), MIN_EXAMPLES)));
    }
    for (i, ex) in p.examples.iter().enumerate() {
        if ex.input.trim().is_empty() {
            out.push(Violation::new("examples", format!("example {} has empty input", i + 1)));
        }
    }
    check_label_list(&mut out, "tags", &p.tags, MAX_TAGS);
    check_label_list(&mut out, "skills", &p.skills, MAX_SKILLS);
    if p.time_limit_ms == Some(0) {
        out.push(Violation::new("time_limit_ms", "must be strictly positive"));
    }
    if p.memory_limit_mb == Some(0) {
        out.push(Violation::new("memory_limit_mb", "must be strictly positive"));
    }
    out.extend(validate_lineage(&p.lineage, &p.tags));
    out
}

fn check_label_list(out: &mut Vec<Violation>, field: &'static str, items: &[String], max: usize) {
    if items.is_empty() {
        out.push(Violation::new(field, "count 0 below 1"));
    } else if items.len() > max {
        out.push(Violation::new(field, format!("count {} exceeds {}", items.len(), max)));
    }
    if items.iter().any(|s| s.trim().is_empty()) {
        out.push(Violation::new(field, "entries must be non-empty"));
    }
}

/// Lineage rules that can be checked without access to the seed problems.
pub fn validate_lineage(lineage: &GenerationLineage, tags: &[String]) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = lineage.seed_ids.len();
    match lineage.strategy {
        Strategy::SingleExtension if n != 1 => {
            out.push(Violation::new("lineage", format!("single extension requires 1 seed, got {n}")));
        }
        s if s.is_fusion() && n != 2 => {
            out.push(Violation::new("lineage", "fusion requires 2 seeds"));
        }
        Strategy::Seed if n != 0 => {
            out.push(Violation::new("lineage", "seed problems carry no seed ids"));
        }
        _ => {}
    }
    if lineage.strategy.is_fusion() && n == 2 && lineage.seed_ids[0] == lineage.seed_ids[1] {
        out.push(Violation::new("lineage", "fusion seeds must be distinct"));
    }
    match (&lineage.strategy, &lineage.shared_tag) {
        (Strategy::SameTypeFusion, None) => {
            out.push(Violation::new("lineage", "same-type fusion requires a shared tag"));
        }
        (Strategy::SameTypeFusion, Some(tag)) if !tags.iter().any(|t| t == tag) => {
            out.push(Violation::new("lineage", format!("shared tag {tag:?} missing from problem tags")));
        }
        (Strategy::SameTypeFusion, Some(_)) => {}
        (_, Some(_)) => out.push(Violation::new("lineage", "shared tag only allowed for same-type fusion")),
        _ => {}
    }
    if lineage.strategy == Strategy::SingleExtension
        && lineage.instruction.as_deref().is_none_or(|s| s.trim().is_empty())
    {
        out.push(Violation::new("lineage", "single extension requires a modification instruction"));
    }
    out
}

/// Lineage rules that need the seed problems themselves.
pub fn validate_lineage_seeds(lineage: &GenerationLineage, seeds: &[&Problem]) -> Vec<Violation> {
    let mut out = Vec::new();
    if seeds.len() != lineage.seed_ids.len() {
        out.push(Violation::new("lineage", "seed ids do not resolve against the seed pool"));
        return out;
    }
    match lineage.strategy {
        Strategy::SameTypeFusion => {
            if let Some(tag) = &lineage.shared_tag {
                for s in seeds {
                    if !s.tags.iter().any(|t| t == tag) {
                        out.push(Violation::new("lineage", format!("shared tag {tag:?} missing from seed {}", s.id)));
                    }
                }
            }
        }
        Strategy::CrossTypeFusion if seeds.len() == 2 && seeds[0].tags.iter().any(|t| seeds[1].tags.contains(t)) => {
            out.push(Violation::new("lineage", "cross-type seeds share a tag"));
        }
        _ => {}
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GeneratorKind {
    Random,
    Adversarial,
    DirectSynth,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [GeneratorKind::Random, GeneratorKind::Adversarial, GeneratorKind::DirectSynth];

    /// Direct synthesis counts as adversarial in split pass rates.
    pub fn is_adversarial(self) -> bool {
        !matches!(self, GeneratorKind::Random)
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scale {
    Small,
    Large,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OracleStage {
    BruteForce,
    MajorityVote,
    Adjudicated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseProvenance {
    pub generator: GeneratorKind,
    pub rng_seed: u64,
    pub verifier_decision: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_stage: Option<OracleStage>,
    /// Output hash to number of solvers producing it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_tally: Option<BTreeMap<String, usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl CaseProvenance {
    pub fn new(generator: GeneratorKind, rng_seed: u64) -> Self {
        CaseProvenance {
            generator,
            rng_seed,
            verifier_decision: false,
            scale: None,
            oracle_stage: None,
            vote_tally: None,
            note: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    pub provenance: CaseProvenance,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    pub random: usize,
    pub adversarial: usize,
    pub direct: usize,
}

impl Composition {
    /// 20 random, 20 adversarial, 10 direct-synthesis cases.
    pub const RELEASE: Composition = Composition { random: 20, adversarial: 20, direct: 10 };

    pub fn of(cases: &[TestCase]) -> Self {
        let mut c = Composition::default();
        for case in cases {
            *c.slot_mut(case.provenance.generator) += 1;
        }
        c
    }

    pub fn get(&self, kind: GeneratorKind) -> usize {
        match kind {
            GeneratorKind::Random => self.random,
            GeneratorKind::Adversarial => self.adversarial,
            GeneratorKind::DirectSynth => self.direct,
        }
    }

    fn slot_mut(&mut self, kind: GeneratorKind) -> &mut usize {
        match kind {
            GeneratorKind::Random => &mut self.random,
            GeneratorKind::Adversarial => &mut self.adversarial,
            GeneratorKind::DirectSynth => &mut self.direct,
        }
    }

    pub fn total(&self) -> usize {
        self.random + self.adversarial + self.direct
    }
}

impl fmt::Display for Composition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.random, self.adversarial, self.direct)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    pub problem_id: String,
    pub cases: Vec<TestCase>,
    pub composition: Composition,
    /// Reason the suite misses the release composition.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degraded: Option<String>,
}

impl TestSuite {
    pub fn new(problem_id: impl Into<String>, cases: Vec<TestCase>) -> Self {
        let composition = Composition::of(&cases);
        TestSuite { problem_id: problem_id.into(), cases, composition, degraded: None }
    }

    pub fn is_complete(&self) -> bool {
        self.cases.iter().all(|c| c.output.is_some() && c.provenance.oracle_stage.is_some())
    }

    /// Invariant violations of a released suite against `target`.
    pub fn release_violations(&self, target: Composition) -> Vec<String> {
        let mut out = Vec::new();
        let actual = Composition::of(&self.cases);
        if actual != self.composition {
            out.push(format!("composition field {} disagrees with cases {}", self.composition, actual));
        }
        if actual != target && self.degraded.is_none() {
            out.push(format!("composition {actual} differs from {target} without a degraded marker"));
        }
        let mut seen = std::collections::HashSet::new();
        for (i, case) in self.cases.iter().enumerate() {
            let p = &case.provenance;
            if case.input.trim().is_empty() {
                out.push(format!("case {i}: empty input"));
            }
            if !seen.insert(case.input.as_str()) {
                out.push(format!("case {i}: duplicate input"));
            }
            if !p.verifier_decision {
                out.push(format!("case {i}: verifier decision is false"));
            }
            if case.output.is_none() {
                out.push(format!("case {i}: output unset"));
            }
            match p.oracle_stage {
                None => out.push(format!("case {i}: oracle stage unset")),
                Some(OracleStage::BruteForce) if p.scale != Some(Scale::Small) => {
                    out.push(format!("case {i}: brute-force stage on a non-small case"));
                }
                _ => {}
            }
            if p.scale.is_none() {
                out.push(format!("case {i}: scale unset"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverRole {
    BruteForce,
    Optimized,
    Submission,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverCandidate {
    pub id: String,
    pub source: String,
    pub role: SolverRole,
    pub origin: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filtered_in: Option<bool>,
}

impl SolverCandidate {
    pub fn new(id: impl Into<String>, source: impl Into<String>, role: SolverRole, origin: impl Into<String>) -> Self {
        SolverCandidate { id: id.into(), source: source.into(), role, origin: origin.into(), filtered_in: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    WrongOutput,
    TimeLimit,
    MemoryLimit,
    RuntimeError,
    ValidatorReject,
}

impl Verdict {
    pub fn short(self) -> &'static str {
        match self {
            Verdict::Accepted => "AC",
            Verdict::WrongOutput => "WA",
            Verdict::TimeLimit => "TLE",
            Verdict::MemoryLimit => "MLE",
            Verdict::RuntimeError => "RE",
            Verdict::ValidatorReject => "VR",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub verdict: Verdict,
    pub wall_ms: u64,
    pub peak_mem_mb: f64,
    pub stdout: String,
    pub exit_code: i32,
    #[serde(default)]
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub stderr: String,
}

impl ExecutionResult {
    pub fn ran_ok(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

pub fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample_problem() -> Problem {
        Problem {
            id: "SD-000000000001".into(),
            statement: "Given an array, print its sum.".into(),
            input_format: "N then N integers".into(),
            output_format: "One integer".into(),
            constraints: "1 <= N <= 10^5".into(),
            examples: vec![
                Example { input: "3\n1 2 3\n".into(), output: "6".into() },
                Example { input: "1\n5\n".into(), output: "5".into() },
            ],
            tags: vec!["math".into()],
            skills: vec!["prefix sums".into()],
            difficulty: Difficulty::Easy,
            lineage: GenerationLineage::seed(),
            time_limit_ms: None,
            memory_limit_mb: None,
        }
    }

    #[test]
    fn well_formed_problem_has_no_violations() {
        assert!(validate_problem(&sample_problem()).is_empty());
    }

    #[test]
    fn four_tags_is_rejected() {
        let mut p = sample_problem();
        p.tags = vec!["a".into(), "b".into(), "c".into(), "d".into()];
        let v: Vec<String> = validate_problem(&p).iter().map(ToString::to_string).collect();
        assert_eq!(v, vec!["tags: count 4 exceeds 3"]);
    }

    #[test]
    fn lineage_rules_enumerated() {
        let mut p = sample_problem();
        p.lineage = GenerationLineage {
            strategy: Strategy::CrossTypeFusion,
            seed_ids: vec!["SD-a".into()],
            shared_tag: None,
            instruction: None,
        };
        let v: Vec<String> = validate_problem(&p).iter().map(ToString::to_string).collect();
        assert_eq!(v, vec!["lineage: fusion requires 2 seeds"]);

        // Every strategy against every seed-count 0..=2: only the required arity passes.
        for strategy in [Strategy::SingleExtension, Strategy::SameTypeFusion, Strategy::CrossTypeFusion, Strategy::Seed]
        {
            for n in 0..=2usize {
                let lineage = GenerationLineage {
                    strategy,
                    seed_ids: (0..n).map(|i| format!("SD-{i}")).collect(),
                    shared_tag: (strategy == Strategy::SameTypeFusion).then(|| "math".to_string()),
                    instruction: (strategy == Strategy::SingleExtension).then(|| "tighten".to_string()),
                };
                let ok = validate_lineage(&lineage, &["math".to_string()]).is_empty();
                assert_eq!(ok, n == strategy.seed_arity(), "{strategy:?} with {n} seeds");
            }
        }
    }

    #[test]
    fn zero_limits_and_missing_text_flagged() {
        let mut p = sample_problem();
        p.time_limit_ms = Some(0);
        p.statement = "   ".into();
        p.examples.truncate(1);
        let v: Vec<String> = validate_problem(&p).iter().map(ToString::to_string).collect();
        assert!(v.contains(&"statement: must be non-empty".to_string()));
        assert!(v.contains(&"examples: count 1 below 2".to_string()));
        assert!(v.contains(&"time_limit_ms: must be strictly positive".to_string()));
    }

    #[test]
    fn same_type_fusion_tag_must_be_in_both_seeds() {
        let mut a = sample_problem();
        a.id = "SD-a".into();
        a.tags = vec!["hash table".into()];
        let mut b = a.clone();
        b.id = "SD-b".into();
        b.tags = vec!["strings".into()];
        let lineage = GenerationLineage {
            strategy: Strategy::SameTypeFusion,
            seed_ids: vec!["SD-a".into(), "SD-b".into()],
            shared_tag: Some("hash table".into()),
            instruction: None,
        };
        let v = validate_lineage_seeds(&lineage, &[&a, &b]);
        assert_eq!(v.len(), 1);
        assert!(v[0].to_string().contains("SD-b"));
    }

    #[test]
    fn content_id_is_prefixed_and_stable() {
        let a = Problem::content_id(Strategy::CrossTypeFusion, "s", "i", "o");
        let b = Problem::content_id(Strategy::CrossTypeFusion, "s", "i", "o");
        assert_eq!(a, b);
        assert!(a.starts_with("CT-"));
        assert_eq!(a.len(), 15);
        assert_ne!(a, Problem::content_id(Strategy::CrossTypeFusion, "s2", "i", "o"));
    }

    #[test]
    fn suite_release_checks() {
        let case = |input: &str, kind| TestCase {
            input: input.into(),
            output: Some("1".into()),
            provenance: CaseProvenance {
                verifier_decision: true,
                scale: Some(Scale::Large),
                oracle_stage: Some(OracleStage::BruteForce),
                ..CaseProvenance::new(kind, 0)
            },
        };
        let suite =
            TestSuite::new("p", vec![case("1\n", GeneratorKind::Random), case("1\n", GeneratorKind::Adversarial)]);
        let v = suite.release_violations(Composition::RELEASE);
        assert!(v.iter().any(|s| s.contains("without a degraded marker")));
        assert!(v.iter().any(|s| s.contains("duplicate input")));
        assert!(v.iter().any(|s| s.contains("brute-force stage on a non-small case")));
    }
}
