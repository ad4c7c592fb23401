//! Candidate test inputs from three sources (random generator, adversarial
//! generator, direct synthesis), the verifier filter, and suite assembly.

use std::collections::HashSet;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::parse::{extract_plaintext_blocks, parse_generated_program};
use crate::gateway::{prompts, Gateway, RequestParams};
use crate::model::{CaseProvenance, Composition, GeneratorKind, Problem, TestCase, TestSuite, Verdict};
use crate::sandbox::{canonical_input, normalize_output, ExecLimits, GuestProgram, Job, Sandbox};

pub const GENERATOR_ENTRY: &str = "generate_test_input";
pub const VALIDATOR_ENTRY: &str = "validate_test_input";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    /// Generator builds attempted before giving up.
    pub regen_attempts: u32,
    /// Each pool may draw at most this many times its target.
    pub oversample: usize,
    /// Failed generator runs tolerated per requested input.
    pub crash_budget_per_input: usize,
    pub generator_wall_ms: u64,
    pub generator_mem_mb: u64,
    /// Direct-synthesis inputs longer than this are not small-scale and are skipped.
    pub direct_max_bytes: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            regen_attempts: 3,
            oversample: 5,
            crash_budget_per_input: 2,
            generator_wall_ms: 10_000,
            generator_mem_mb: 512,
            direct_max_bytes: 4096,
        }
    }
}

impl SynthConfig {
    pub fn limits(&self) -> Result<ExecLimits> {
        Ok(ExecLimits::new(self.generator_wall_ms, self.generator_mem_mb)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuiltGenerator {
    pub kind: GeneratorKind,
    pub generator: GuestProgram,
    pub validator: GuestProgram,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorBundle {
    pub random_gen: GuestProgram,
    pub adversarial_gen: GuestProgram,
    pub validator: GuestProgram,
    pub provenance_seeds: Vec<u64>,
}

impl GeneratorBundle {
    /// The random build supplies the verifier used for every pool.
    pub fn from_builds(random: BuiltGenerator, adversarial: BuiltGenerator) -> Self {
        GeneratorBundle {
            random_gen: random.generator,
            adversarial_gen: adversarial.generator,
            validator: random.validator,
            provenance_seeds: Vec::new(),
        }
    }

    fn generator(&self, kind: GeneratorKind) -> Result<&GuestProgram> {
        match kind {
            GeneratorKind::Random => Ok(&self.random_gen),
            GeneratorKind::Adversarial => Ok(&self.adversarial_gen),
            GeneratorKind::DirectSynth => Err(Error::Argument("direct synthesis has no generator program".into())),
        }
    }
}

/// Runs the validator on one input; `Some(true)` only for a literal `True`.
fn validator_says(
    sandbox: &Sandbox,
    validator: &GuestProgram,
    input: &str,
    limits: &ExecLimits,
) -> Result<Option<bool>> {
    let r = sandbox.run_guest(validator, input, limits)?;
    if r.verdict != Verdict::Accepted {
        return Ok(None);
    }
    Ok(match normalize_output(&r.stdout).as_str() {
        "True" => Some(true),
        "False" => Some(false),
        _ => None,
    })
}

/// Asks for a generator/validator pair and smoke-tests it, regenerating up
/// to `regen_attempts` times.
pub fn build_generator(
    gateway: &Gateway,
    params: &RequestParams,
    sandbox: &Sandbox,
    problem: &Problem,
    kind: GeneratorKind,
    cfg: &SynthConfig,
) -> Result<BuiltGenerator> {
    let prompt = match kind {
        GeneratorKind::Random => prompts::random_input(problem),
        GeneratorKind::Adversarial => prompts::adversarial_input(problem),
        GeneratorKind::DirectSynth => return Err(Error::Argument("direct synthesis has no generator program".into())),
    };
    let limits = cfg.limits()?;
    let mut last = String::from("no attempt made");
    for attempt in 1..=cfg.regen_attempts.max(1) {
        let text = gateway.complete(&params.request(prompt.clone()))?;
        let parsed = parse_generated_program(&text, GENERATOR_ENTRY)
            .and_then(|g| parse_generated_program(&text, VALIDATOR_ENTRY).map(|v| (g, v)));
        let (gen_src, val_src) = match parsed {
            Ok(pair) => pair,
            Err(e) => {
                last = e.to_string();
                tracing::warn!(problem = %problem.id, %kind, attempt, error = %last, "unparseable generator response");
                continue;
            }
        };
        let generator = GuestProgram::python_fn(gen_src, GENERATOR_ENTRY);
        let validator = GuestProgram::python_fn(val_src, VALIDATOR_ENTRY);
        let run = sandbox.run_seeded(&generator, "", &limits, 0)?;
        if run.verdict != Verdict::Accepted || run.stdout.trim().is_empty() {
            last = format!("generator smoke run ended with {:?}", run.verdict);
        } else {
            match validator_says(sandbox, &validator, &canonical_input(&run.stdout), &limits)? {
                Some(true) => return Ok(BuiltGenerator { kind, generator, validator, attempts: attempt }),
                Some(false) => last = "validator rejected the smoke input".into(),
                None => last = "validator crashed on the smoke input".into(),
            }
        }
        tracing::warn!(problem = %problem.id, %kind, attempt, reason = %last, "generator smoke test failed");
    }
    Err(Error::Generation(format!(
        "{}: {kind} generator failed after {} attempt(s); last verdict: {last}",
        problem.id, cfg.regen_attempts
    )))
}

/// Runs the generator `count` times with per-call seeds drawn from `rng_seed`.
/// Crashed runs are replaced with fresh seeds while the crash budget lasts.
pub fn gen_inputs(
    sandbox: &Sandbox,
    bundle: &GeneratorBundle,
    kind: GeneratorKind,
    count: usize,
    rng_seed: u64,
    cfg: &SynthConfig,
) -> Result<Vec<TestCase>> {
    let program = bundle.generator(kind)?;
    let limits = cfg.limits()?;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut out = Vec::with_capacity(count);
    let mut crashes = 0usize;
    let budget = cfg.crash_budget_per_input * count.max(1);
    while out.len() < count {
        let need = count - out.len();
        let seeds: Vec<u64> = (0..need).map(|_| rng.next_u64() >> 1).collect();
        let jobs: Vec<Job> = seeds.iter().map(|&seed| Job { program, stdin: "", limits, seed }).collect();
        let results = sandbox.try_run_batch(&jobs)?;
        for (seed, r) in seeds.into_iter().zip(results) {
            let input = canonical_input(&r.stdout);
            if r.verdict == Verdict::Accepted && !input.trim().is_empty() {
                out.push(TestCase { input, output: None, provenance: CaseProvenance::new(kind, seed) });
            } else {
                crashes += 1;
                tracing::debug!(%kind, seed, verdict = ?r.verdict, "generator run discarded");
            }
        }
        if crashes > budget {
            return Err(Error::Generation(format!("{kind} generator failed {crashes} runs, budget {budget}")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Default)]
pub struct DirectInputs {
    pub cases: Vec<TestCase>,
    pub warnings: Vec<String>,
}

/// Collects up to `count` small-scale inputs written directly by the model.
/// Makes at most `count` calls; every plaintext block in a response counts.
pub fn synth_direct_inputs(
    gateway: &Gateway,
    params: &RequestParams,
    problem: &Problem,
    count: usize,
    cfg: &SynthConfig,
) -> Result<DirectInputs> {
    let prompt = prompts::direct_input(problem);
    let mut got = DirectInputs::default();
    let mut index = 0u64;
    for call in 0..count {
        if got.cases.len() >= count {
            break;
        }
        let text = gateway.complete(&params.request(prompt.clone()))?;
        let (blocks, warnings) = extract_plaintext_blocks(&text);
        got.warnings.extend(warnings.into_iter().map(|w| format!("call {call}: {w}")));
        if blocks.is_empty() {
            got.warnings.push(format!("call {call}: no plaintext block, skipped"));
        }
        for b in blocks {
            if got.cases.len() >= count {
                break;
            }
            let input = canonical_input(&b);
            if input.len() > cfg.direct_max_bytes {
                got.warnings.push(format!("call {call}: input of {} bytes is not small-scale, skipped", input.len()));
                continue;
            }
            got.cases.push(TestCase {
                input,
                output: None,
                provenance: CaseProvenance::new(GeneratorKind::DirectSynth, index),
            });
            index += 1;
        }
    }
    if got.cases.is_empty() && count > 0 {
        return Err(Error::Generation(format!("{}: no usable direct-synthesis input", problem.id)));
    }
    Ok(got)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationOutcome {
    pub accepted: Vec<TestCase>,
    /// Rejected inputs with `verifier_decision = false` and the reason in `note`.
    pub rejected: Vec<TestCase>,
}

/// Keeps exactly the candidates the validator maps to `True`. A validator
/// crash or a non-boolean answer counts as a rejection and is flagged.
pub fn validate_inputs(
    sandbox: &Sandbox,
    candidates: Vec<TestCase>,
    validator: &GuestProgram,
    limits: &ExecLimits,
) -> Result<ValidationOutcome> {
    let jobs: Vec<Job> =
        candidates.iter().map(|c| Job { program: validator, stdin: &c.input, limits: *limits, seed: 0 }).collect();
    let results = sandbox.try_run_batch(&jobs)?;
    let mut out = ValidationOutcome::default();
    for (mut c, r) in candidates.into_iter().zip(results) {
        let answer = normalize_output(&r.stdout);
        let (decision, note) = match (r.verdict, answer.as_str()) {
            (Verdict::Accepted, "True") => (true, None),
            (Verdict::Accepted, "False") => (false, Some("validator rejected".to_string())),
            (Verdict::Accepted, other) => (false, Some(format!("validator answered {other:?}, not a boolean"))),
            (v, _) => (false, Some(format!("validator crashed: {v:?}"))),
        };
        c.provenance.verifier_decision = decision;
        c.provenance.note = note;
        if decision {
            out.accepted.push(c);
        } else {
            out.rejected.push(c);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssembledSuite {
    pub suite: TestSuite,
    /// Unique validated inputs beyond the target, per pool order, used to
    /// replace cases the oracle later discards.
    pub reserve: Vec<TestCase>,
}

/// Picks the target counts from each pool in first-come order, skipping
/// inputs already taken. Short pools yield a degraded suite.
pub fn assemble_suite(
    problem_id: &str,
    rand: &[TestCase],
    adv: &[TestCase],
    llm: &[TestCase],
    target: Composition,
) -> AssembledSuite {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut cases = Vec::new();
    let mut reserve = Vec::new();
    for (pool, want) in [(rand, target.random), (adv, target.adversarial), (llm, target.direct)] {
        let mut taken = 0;
        for c in pool {
            if !seen.insert(c.input.as_str()) {
                continue;
            }
            if taken < want {
                cases.push(c.clone());
                taken += 1;
            } else {
                reserve.push(c.clone());
            }
        }
    }
    let mut suite = TestSuite::new(problem_id, cases);
    if suite.composition != target {
        suite.degraded = Some(format!("input pools short: have {}, want {target}", suite.composition));
    }
    AssembledSuite { suite, reserve }
}

fn unique_count(cases: &[TestCase], taken: &HashSet<String>) -> usize {
    let mut s: HashSet<&str> = HashSet::new();
    cases.iter().filter(|c| !taken.contains(&c.input) && s.insert(c.input.as_str())).count()
}

/// Generates and validates inputs of one kind until `want` unique accepted
/// inputs exist (plus `spare`) or `oversample * want` draws are spent.
#[allow(clippy::too_many_arguments)]
pub fn fill_pool(
    sandbox: &Sandbox,
    bundle: &GeneratorBundle,
    kind: GeneratorKind,
    want: usize,
    spare: usize,
    rng_seed: u64,
    cfg: &SynthConfig,
    already: &HashSet<String>,
) -> Result<(Vec<TestCase>, usize)> {
    let limits = cfg.limits()?;
    let goal = want + spare;
    let cap = cfg.oversample.max(1) * want.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut accepted = Vec::new();
    let mut rejected = 0;
    let mut drawn = 0;
    while unique_count(&accepted, already) < goal && drawn < cap {
        let batch = (goal - unique_count(&accepted, already)).min(cap - drawn);
        let raw = gen_inputs(sandbox, bundle, kind, batch, rng.next_u64(), cfg)?;
        drawn += batch;
        let v = validate_inputs(sandbox, raw, &bundle.validator, &limits)?;
        rejected += v.rejected.len();
        accepted.extend(v.accepted);
    }
    Ok((accepted, rejected))
}
