//! The end-to-end run: generate, synthesize inputs, synthesize outputs,
//! calibrate and release. Each stage reads the previous stage's files from
//! the output directory, so any stage can be re-run on its own.

mod config;
mod verify;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{read_dataset, read_jsonl, write_atomic, write_jsonl, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::forge::{find_duplicate, parse_instructions, Forge, StrategyConfig, Taxonomy, BUILTIN_INSTRUCTIONS};
use crate::gateway::parse::parse_solver_program;
use crate::gateway::{
    prompts, Gateway, HttpProvider, KeyedProvider, Provider, RecordingProvider, RequestParams, RetryPolicy,
    ScriptedProvider, TranscriptEntry,
};
use crate::model::{
    validate_lineage_seeds, validate_problem, Composition, GeneratorKind, Problem, SolverCandidate, SolverRole,
    Strategy, TestCase, TestSuite,
};
use crate::oracle::{
    calibrate_limits, synthesize_suite_outputs, CalibratedLimits, LimitPolicy, OracleCtx, OracleOutcome, SolverTiming,
};
use crate::sandbox::{Sandbox, SandboxConfig};
use crate::synth::{
    assemble_suite, build_generator, fill_pool, synth_direct_inputs, validate_inputs, AssembledSuite, GeneratorBundle,
};

pub use config::{
    derive_seed, CompositionConfig, GenerationConfig, PipelineConfig, ProviderConfig, ProviderKind, StrategyWeights,
};
pub use verify::{verify, VerifyReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Generate,
    SynthInputs,
    SynthOutputs,
    Calibrate,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Generate, Stage::SynthInputs, Stage::SynthOutputs, Stage::Calibrate];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::SynthInputs => "synth-inputs",
            Stage::SynthOutputs => "synth-outputs",
            Stage::Calibrate => "calibrate",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParkReason {
    InsufficientPool,
    NoTrustedBaseline,
    CalibrationError,
    InvalidProblem,
    Duplicate,
    StageError,
}

impl ParkReason {
    pub fn of(e: &Error) -> Self {
        match e {
            Error::InsufficientPool { .. } => ParkReason::InsufficientPool,
            Error::NoTrustedBaseline(_) => ParkReason::NoTrustedBaseline,
            Error::Calibration(_) => ParkReason::CalibrationError,
            Error::InvalidProblem { .. } => ParkReason::InvalidProblem,
            _ => ParkReason::StageError,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParkRecord {
    pub problem_id: String,
    pub stage: Stage,
    pub reason: ParkReason,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub problem: Problem,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputsRecord {
    pub problem_id: String,
    pub suite: TestSuite,
    pub reserve: Vec<TestCase>,
    pub rejected: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub problem_id: String,
    pub brute_force: Vec<SolverCandidate>,
    pub outcome: OracleOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolversRecord {
    pub problem_id: String,
    pub brute_force: Vec<SolverCandidate>,
    /// Every optimized candidate with its filtration result.
    pub optimized: Vec<SolverCandidate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRecord {
    pub problem_id: String,
    pub policy: LimitPolicy,
    pub limits: CalibratedLimits,
    pub timings: Vec<SolverTiming>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageSummary {
    pub stage: Stage,
    pub processed: usize,
    pub kept: usize,
    pub parked: usize,
}

/// File layout of an output directory.
#[derive(Debug, Clone)]
pub struct OutDir(pub PathBuf);

impl OutDir {
    pub fn root(&self) -> &Path {
        &self.0
    }
    fn work(&self, name: &str) -> PathBuf {
        self.0.join("work").join(name)
    }
    pub fn generated(&self) -> PathBuf {
        self.work("generated.jsonl")
    }
    pub fn inputs(&self) -> PathBuf {
        self.work("inputs.jsonl")
    }
    pub fn oracle(&self) -> PathBuf {
        self.work("oracle.jsonl")
    }
    fn stage_parked(&self, stage: Stage) -> PathBuf {
        self.work(&format!("parked-{stage}.jsonl"))
    }
    pub fn problems(&self) -> PathBuf {
        self.0.join("problems.jsonl")
    }
    pub fn suites(&self) -> PathBuf {
        self.0.join("suites.jsonl")
    }
    pub fn solvers(&self) -> PathBuf {
        self.0.join("solvers.jsonl")
    }
    pub fn calibration(&self) -> PathBuf {
        self.0.join("calibration.jsonl")
    }
    pub fn parked(&self) -> PathBuf {
        self.0.join("parked.jsonl")
    }
    pub fn manifest(&self) -> PathBuf {
        self.0.join("manifest.json")
    }
    pub fn generators(&self, problem_id: &str) -> PathBuf {
        self.0.join("generators").join(problem_id)
    }
    pub fn transcript(&self, stage: Stage) -> PathBuf {
        self.0.join("transcripts").join(format!("{stage}.jsonl"))
    }
    pub fn call_log(&self, stage: Stage) -> PathBuf {
        self.0.join("calls").join(format!("{stage}.jsonl"))
    }

    /// Files that make up the release, relative to the root, sorted.
    pub fn released_files(&self) -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for f in ["problems.jsonl", "suites.jsonl", "solvers.jsonl"] {
            if self.0.join(f).exists() {
                out.push(PathBuf::from(f));
            }
        }
        let gen = self.0.join("generators");
        if gen.is_dir() {
            let mut dirs: Vec<_> =
                fs::read_dir(&gen).map_err(|e| Error::io(&gen, e))?.flatten().map(|e| e.path()).collect();
            dirs.sort();
            for d in dirs {
                let mut files: Vec<_> =
                    fs::read_dir(&d).map_err(|e| Error::io(&d, e))?.flatten().map(|e| e.path()).collect();
                files.sort();
                for f in files {
                    out.push(f.strip_prefix(&self.0).expect("under root").to_path_buf());
                }
            }
        }
        Ok(out)
    }
}

fn ensure_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(p: &Path) -> Result<Option<String>> {
    match fs::read(p) {
        Ok(b) => Ok(Some(sha256_hex(&b))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(Error::io(p, e)),
    }
}

fn read_or_empty<T: serde::de::DeserializeOwned>(p: &Path) -> Result<Vec<T>> {
    match read_jsonl(p) {
        Err(Error::NotFound { .. }) => Ok(Vec::new()),
        r => r,
    }
}

type Recorder = Arc<RecordingProvider<Box<dyn Provider>>>;

struct StageGateway {
    gateway: Gateway,
    recorder: Option<Recorder>,
}

/// A fatal error names the stage and problem; others park the problem.
fn settle<T>(stage: Stage, problem_id: &str, r: Result<T>) -> Result<Result<T>> {
    match r {
        Err(e) if e.is_fatal() => {
            Err(Error::Stage { stage: stage.name(), problem_id: problem_id.to_string(), source: Box::new(e) })
        }
        r => Ok(r),
    }
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub out: OutDir,
    sandbox: Sandbox,
    taxonomy: Taxonomy,
    instructions: Vec<String>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self> {
        cfg.check()?;
        let sandbox_cfg = SandboxConfig { workers: cfg.workers, ..cfg.sandbox.clone() };
        let sandbox = Sandbox::new(cfg.runtimes.clone(), sandbox_cfg)?;
        let taxonomy = match &cfg.generation.taxonomy {
            Some(p) => Taxonomy::load(p)?,
            None => Taxonomy::builtin(),
        };
        let instructions = match &cfg.generation.instructions {
            Some(p) => parse_instructions(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
            None => parse_instructions(BUILTIN_INSTRUCTIONS),
        };
        let out = OutDir(cfg.out_dir.clone());
        ensure_dir(&out.0.join("work"))?;
        Ok(Pipeline { cfg, out, sandbox, taxonomy, instructions })
    }

    pub fn sandbox(&self) -> &Sandbox {
        &self.sandbox
    }

    fn provider(&self, stage: Stage) -> Result<Box<dyn Provider>> {
        let p = &self.cfg.provider;
        Ok(match p.kind {
            ProviderKind::Keyed => {
                let rules = p.rules.as_ref().ok_or_else(|| Error::Config("keyed provider needs rules".into()))?;
                Box::new(KeyedProvider::load(rules)?)
            }
            ProviderKind::Scripted => {
                let dir = p
                    .transcripts
                    .as_ref()
                    .ok_or_else(|| Error::Config("scripted provider needs transcripts".into()))?;
                let path = dir.join(format!("{stage}.jsonl"));
                match ScriptedProvider::load(&path) {
                    Ok(s) => Box::new(s),
                    Err(Error::NotFound { .. }) => Box::new(ScriptedProvider::new(Vec::new())),
                    Err(e) => return Err(e),
                }
            }
            ProviderKind::Http => {
                use crate::gateway::{ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL};
                let endpoint = match &p.endpoint {
                    Some(e) => e.clone(),
                    None => {
                        std::env::var(ENV_ENDPOINT).map_err(|_| Error::Config(format!("{ENV_ENDPOINT} is not set")))?
                    }
                };
                let model =
                    p.model.clone().or_else(|| std::env::var(ENV_MODEL).ok()).unwrap_or_else(|| "gpt-4o-mini".into());
                let key = std::env::var(ENV_API_KEY).ok();
                Box::new(HttpProvider::new(&endpoint, key, &model, Duration::from_secs(p.timeout_s))?)
            }
        })
    }

    fn gateway(&self, stage: Stage) -> Result<StageGateway> {
        let inner = self.provider(stage)?;
        let policy = RetryPolicy::default();
        let n = self.cfg.provider.max_in_flight.max(1);
        if self.cfg.provider.record {
            let rec: Recorder = Arc::new(RecordingProvider::new(inner));
            Ok(StageGateway { gateway: Gateway::with_policy(Box::new(rec.handle()), policy, n), recorder: Some(rec) })
        } else {
            Ok(StageGateway { gateway: Gateway::with_policy(inner, policy, n), recorder: None })
        }
    }

    fn finish_gateway(&self, stage: Stage, g: &StageGateway) -> Result<()> {
        let log = self.out.call_log(stage);
        ensure_dir(log.parent().expect("has parent"))?;
        g.gateway.write_call_log(&log)?;
        if let Some(rec) = &g.recorder {
            let t = self.out.transcript(stage);
            ensure_dir(t.parent().expect("has parent"))?;
            let entries: Vec<TranscriptEntry> = rec.transcript();
            write_jsonl(&t, &entries)?;
        }
        Ok(())
    }

    fn write_parked(&self, stage: Stage, parked: &[ParkRecord]) -> Result<()> {
        write_jsonl(&self.out.stage_parked(stage), parked)?;
        let mut all: Vec<ParkRecord> = Vec::new();
        for s in Stage::ALL {
            all.extend(read_or_empty::<ParkRecord>(&self.out.stage_parked(s))?);
        }
        write_jsonl(&self.out.parked(), &all)
    }

    fn params(&self) -> &RequestParams {
        &self.cfg.generation.request
    }

    pub fn load_seeds(&self) -> Result<Vec<Problem>> {
        read_dataset(&self.cfg.seeds)
    }

    /// Forge: draft `generation.count` problems from the seed pool.
    pub fn generate(&self, seeds: &[Problem]) -> Result<StageSummary> {
        let stage = Stage::Generate;
        let g = self.gateway(stage)?;
        let forge = Forge::new(&g.gateway, self.taxonomy.clone(), self.params().clone());
        let w = &self.cfg.generation.weights;
        let strategies = [Strategy::SingleExtension, Strategy::SameTypeFusion, Strategy::CrossTypeFusion];
        let mix = WeightedIndex::new([w.single_extension, w.same_type_fusion, w.cross_type_fusion])
            .map_err(|e| Error::Config(format!("strategy weights: {e}")))?;
        let mut kept: Vec<GeneratedRecord> = Vec::new();
        let mut parked = Vec::new();
        let count = self.cfg.generation.count;
        for i in 0..count {
            let label = format!("attempt-{i}");
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.cfg.master_seed, &format!("generate/{i}")));
            let strategy = strategies[mix.sample(&mut rng)];
            let sc = StrategyConfig::new(strategy, self.instructions.clone(), self.taxonomy.clone())?;
            let draft = match settle(stage, &label, forge.generate(seeds, &sc, &mut rng))? {
                Ok(d) => d,
                Err(e) => {
                    tracing::warn!(%label, %strategy, error = %e, "generation parked");
                    parked.push(ParkRecord {
                        problem_id: label,
                        stage,
                        reason: ParkReason::of(&e),
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            let p = draft.problem;
            let seed_refs: Vec<&Problem> =
                p.lineage.seed_ids.iter().filter_map(|id| seeds.iter().find(|s| &s.id == id)).collect();
            let mut violations: Vec<String> = validate_problem(&p).iter().map(ToString::to_string).collect();
            violations.extend(validate_lineage_seeds(&p.lineage, &seed_refs).iter().map(ToString::to_string));
            let park = |reason, detail: String, parked: &mut Vec<ParkRecord>| {
                parked.push(ParkRecord { problem_id: p.id.clone(), stage, reason, detail })
            };
            if !violations.is_empty() {
                park(ParkReason::InvalidProblem, violations.join("; "), &mut parked);
            } else if let Some(dup) = find_duplicate(&p.statement, seeds.iter().chain(kept.iter().map(|r| &r.problem)))
            {
                park(ParkReason::Duplicate, format!("near-duplicate of {dup}"), &mut parked);
            } else {
                kept.push(GeneratedRecord { problem: p, warnings: draft.warnings });
            }
        }
        self.finish_gateway(stage, &g)?;
        write_jsonl(&self.out.generated(), &kept)?;
        self.write_parked(stage, &parked)?;
        Ok(StageSummary { stage, processed: count, kept: kept.len(), parked: parked.len() })
    }

    fn synth_one(&self, gw: &Gateway, p: &Problem) -> Result<(InputsRecord, GeneratorBundle)> {
        let cfg = &self.cfg.synth;
        let comp = &self.cfg.composition;
        let seed = |label: &str| derive_seed(self.cfg.master_seed, &format!("inputs/{}/{label}", p.id));
        let random = build_generator(gw, self.params(), &self.sandbox, p, GeneratorKind::Random, cfg)?;
        let adversarial = build_generator(gw, self.params(), &self.sandbox, p, GeneratorKind::Adversarial, cfg)?;
        let mut bundle = GeneratorBundle::from_builds(random, adversarial);
        bundle.provenance_seeds = vec![seed("random"), seed("adversarial")];
        let (rand, rej_r) = fill_pool(
            &self.sandbox,
            &bundle,
            GeneratorKind::Random,
            comp.random,
            comp.spare,
            seed("random"),
            cfg,
            &HashSet::new(),
        )?;
        let taken: HashSet<String> = rand.iter().map(|c| c.input.clone()).collect();
        let (adv, rej_a) = fill_pool(
            &self.sandbox,
            &bundle,
            GeneratorKind::Adversarial,
            comp.adversarial,
            comp.spare,
            seed("adversarial"),
            cfg,
            &taken,
        )?;
        let mut warnings = Vec::new();
        let mut direct = Vec::new();
        let mut rej_d = 0;
        if comp.direct > 0 {
            let d = synth_direct_inputs(gw, self.params(), p, comp.direct + comp.spare, cfg)?;
            warnings.extend(d.warnings);
            let v = validate_inputs(&self.sandbox, d.cases, &bundle.validator, &cfg.limits()?)?;
            rej_d = v.rejected.len();
            direct = v.accepted;
        }
        let AssembledSuite { suite, reserve } = assemble_suite(&p.id, &rand, &adv, &direct, comp.target());
        let record =
            InputsRecord { problem_id: p.id.clone(), suite, reserve, rejected: rej_r + rej_a + rej_d, warnings };
        Ok((record, bundle))
    }

    fn write_generators(&self, id: &str, b: &GeneratorBundle) -> Result<()> {
        let dir = self.out.generators(id);
        ensure_dir(&dir)?;
        for (name, prog) in [
            ("random_generator.py", &b.random_gen),
            ("adversarial_generator.py", &b.adversarial_gen),
            ("validator.py", &b.validator),
        ] {
            let path = dir.join(name);
            write_atomic(&path, prog.source.as_bytes())?;
        }
        Ok(())
    }

    /// Input synthesis for every generated problem.
    pub fn synth_inputs(&self) -> Result<StageSummary> {
        let stage = Stage::SynthInputs;
        let generated: Vec<GeneratedRecord> = read_jsonl(&self.out.generated())?;
        let g = self.gateway(stage)?;
        let mut kept = Vec::new();
        let mut parked = Vec::new();
        let gen_root = self.out.0.join("generators");
        if gen_root.exists() {
            fs::remove_dir_all(&gen_root).map_err(|e| Error::io(&gen_root, e))?;
        }
        for r in &generated {
            let p = &r.problem;
            match settle(stage, &p.id, self.synth_one(&g.gateway, p))? {
                Ok((rec, bundle)) => {
                    self.write_generators(&p.id, &bundle)?;
                    kept.push(rec);
                }
                Err(e) => {
                    tracing::warn!(problem = %p.id, error = %e, "input synthesis parked");
                    parked.push(ParkRecord {
                        problem_id: p.id.clone(),
                        stage,
                        reason: ParkReason::of(&e),
                        detail: e.to_string(),
                    });
                }
            }
        }
        self.finish_gateway(stage, &g)?;
        write_jsonl(&self.out.inputs(), &kept)?;
        self.write_parked(stage, &parked)?;
        Ok(StageSummary { stage, processed: generated.len(), kept: kept.len(), parked: parked.len() })
    }

    fn solicit(&self, gw: &Gateway, p: &Problem, role: SolverRole, count: usize) -> Result<Vec<SolverCandidate>> {
        let (prompt, prefix) = match role {
            SolverRole::BruteForce => (prompts::brute_force_solver(p), "bf"),
            _ => (prompts::optimized_solver(p), "opt"),
        };
        let origin = match self.params().provider_tag.as_str() {
            "" => "default".to_string(),
            t => t.to_string(),
        };
        let mut out = Vec::new();
        for i in 0..count {
            let text = gw.complete(&self.params().request(prompt.clone()))?;
            match parse_solver_program(&text) {
                Ok(src) => out.push(SolverCandidate::new(format!("{prefix}-{i}"), src, role, origin.clone())),
                Err(e) => tracing::warn!(problem = %p.id, %prefix, i, error = %e, "solver response skipped"),
            }
        }
        Ok(out)
    }

    fn oracle_one(&self, gw: &Gateway, p: &Problem, inputs: &InputsRecord) -> Result<OracleRecord> {
        let bf = self.solicit(gw, p, SolverRole::BruteForce, self.cfg.oracle.bf_count)?;
        if bf.is_empty() {
            return Err(Error::NoTrustedBaseline(format!("{}: no parseable brute-force solver", p.id)));
        }
        let opt = self.solicit(gw, p, SolverRole::Optimized, self.cfg.oracle.optimized_count)?;
        let ctx = OracleCtx {
            sandbox: &self.sandbox,
            gateway: gw,
            adjudicator: self.cfg.generation.adjudicator.clone(),
            cfg: self.cfg.oracle.clone(),
        };
        let assembled = AssembledSuite { suite: inputs.suite.clone(), reserve: inputs.reserve.clone() };
        let outcome = synthesize_suite_outputs(&ctx, p, &assembled, self.cfg.composition.target(), &bf, &opt)?;
        Ok(OracleRecord { problem_id: p.id.clone(), brute_force: bf, outcome })
    }

    /// Output synthesis for every problem with inputs.
    pub fn synth_outputs(&self) -> Result<StageSummary> {
        let stage = Stage::SynthOutputs;
        let generated: BTreeMap<String, Problem> = read_jsonl::<GeneratedRecord>(&self.out.generated())?
            .into_iter()
            .map(|r| (r.problem.id.clone(), r.problem))
            .collect();
        let inputs: Vec<InputsRecord> = read_jsonl(&self.out.inputs())?;
        let g = self.gateway(stage)?;
        let mut kept = Vec::new();
        let mut parked = Vec::new();
        for r in &inputs {
            let p = generated
                .get(&r.problem_id)
                .ok_or_else(|| Error::Argument(format!("inputs for unknown problem {}", r.problem_id)))?;
            match settle(stage, &p.id, self.oracle_one(&g.gateway, p, r))? {
                Ok(rec) => kept.push(rec),
                Err(e) => {
                    tracing::warn!(problem = %p.id, error = %e, "output synthesis parked");
                    parked.push(ParkRecord {
                        problem_id: p.id.clone(),
                        stage,
                        reason: ParkReason::of(&e),
                        detail: e.to_string(),
                    });
                }
            }
        }
        self.finish_gateway(stage, &g)?;
        write_jsonl(&self.out.oracle(), &kept)?;
        self.write_parked(stage, &parked)?;
        Ok(StageSummary { stage, processed: inputs.len(), kept: kept.len(), parked: parked.len() })
    }

    /// Limit calibration and release.
    pub fn calibrate(&self) -> Result<StageSummary> {
        let stage = Stage::Calibrate;
        let generated: BTreeMap<String, Problem> = read_jsonl::<GeneratedRecord>(&self.out.generated())?
            .into_iter()
            .map(|r| (r.problem.id.clone(), r.problem))
            .collect();
        let oracle: Vec<OracleRecord> = read_jsonl(&self.out.oracle())?;
        let mut problems = Vec::new();
        let mut suites = Vec::new();
        let mut solvers = Vec::new();
        let mut calibration = Vec::new();
        let mut parked = Vec::new();
        for r in &oracle {
            let mut p = generated
                .get(&r.problem_id)
                .cloned()
                .ok_or_else(|| Error::Argument(format!("oracle record for unknown problem {}", r.problem_id)))?;
            let result = if r.outcome.suite.cases.is_empty() {
                Err(Error::Calibration("no case survived output synthesis".into()))
            } else {
                calibrate_limits(&r.outcome.timings, &self.cfg.oracle.calibration)
            };
            match result {
                Ok(limits) => {
                    p.time_limit_ms = Some(limits.time_limit_ms);
                    p.memory_limit_mb = Some(limits.memory_limit_mb);
                    problems.push(p);
                    suites.push(r.outcome.suite.clone());
                    solvers.push(SolversRecord {
                        problem_id: r.problem_id.clone(),
                        brute_force: r.brute_force.clone(),
                        optimized: r.outcome.pool.candidates.clone(),
                    });
                    calibration.push(CalibrationRecord {
                        problem_id: r.problem_id.clone(),
                        policy: self.cfg.oracle.calibration,
                        limits,
                        timings: r.outcome.timings.clone(),
                    });
                }
                Err(e) => {
                    tracing::warn!(problem = %p.id, error = %e, "calibration parked");
                    parked.push(ParkRecord {
                        problem_id: p.id,
                        stage,
                        reason: ParkReason::of(&e),
                        detail: e.to_string(),
                    });
                }
            }
        }
        write_jsonl(&self.out.problems(), &problems)?;
        write_jsonl(&self.out.suites(), &suites)?;
        write_jsonl(&self.out.solvers(), &solvers)?;
        write_jsonl(&self.out.calibration(), &calibration)?;
        self.write_parked(stage, &parked)?;
        // Generators of problems that did not make the release are dropped.
        let released: HashSet<&str> = problems.iter().map(|p| p.id.as_str()).collect();
        let gen_root = self.out.0.join("generators");
        if gen_root.is_dir() {
            for e in fs::read_dir(&gen_root).map_err(|e| Error::io(&gen_root, e))?.flatten() {
                let name = e.file_name().to_string_lossy().to_string();
                if !released.contains(name.as_str()) {
                    fs::remove_dir_all(e.path()).map_err(|err| Error::io(e.path(), err))?;
                }
            }
        }
        Ok(StageSummary { stage, processed: oracle.len(), kept: problems.len(), parked: parked.len() })
    }

    pub fn run_stage(&self, stage: Stage) -> Result<StageSummary> {
        let s = match stage {
            Stage::Generate => self.generate(&self.load_seeds()?)?,
            Stage::SynthInputs => self.synth_inputs()?,
            Stage::SynthOutputs => self.synth_outputs()?,
            Stage::Calibrate => self.calibrate()?,
        };
        self.write_manifest()?;
        Ok(s)
    }

    /// All stages in order, then the manifest.
    pub fn run(&self) -> Result<RunReport> {
        let seeds = self.load_seeds()?;
        let stages = vec![self.generate(&seeds)?, self.synth_inputs()?, self.synth_outputs()?, self.calibrate()?];
        let manifest = self.write_manifest()?;
        Ok(RunReport { stages, manifest })
    }

    pub fn write_manifest(&self) -> Result<Manifest> {
        let m = Manifest::collect(&self.cfg, &self.out)?;
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        write_atomic(&self.out.manifest(), text.as_bytes())?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub stages: Vec<StageSummary>,
    pub manifest: Manifest,
}

impl RunReport {
    pub fn parked(&self) -> usize {
        self.manifest.counts.parked
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub generated: usize,
    pub with_inputs: usize,
    pub with_outputs: usize,
    pub released: usize,
    pub degraded: usize,
    pub parked: usize,
    pub parked_by_reason: BTreeMap<ParkReason, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub v: u32,
    pub master_seed: u64,
    pub provider: ProviderKind,
    pub seeds_sha256: String,
    /// Composition released suites are held to.
    pub composition: Composition,
    /// sha256 of each stage's recorded or replayed transcript.
    pub transcripts: BTreeMap<Stage, String>,
    pub counts: Counts,
    /// sha256 of every released file, by path relative to the output directory.
    pub artifacts: BTreeMap<String, String>,
}

impl Manifest {
    pub fn collect(cfg: &PipelineConfig, out: &OutDir) -> Result<Self> {
        let seeds_sha256 = hash_file(&cfg.seeds)?.ok_or_else(|| Error::NotFound { path: cfg.seeds.clone() })?;
        let mut transcripts = BTreeMap::new();
        for s in Stage::ALL {
            let path = match (&cfg.provider.kind, &cfg.provider.transcripts) {
                (ProviderKind::Scripted, Some(dir)) => dir.join(format!("{s}.jsonl")),
                _ => out.transcript(s),
            };
            if let Some(h) = hash_file(&path)? {
                transcripts.insert(s, h);
            }
        }
        let count = |p: PathBuf| -> Result<usize> { Ok(read_or_empty::<serde_json::Value>(&p)?.len()) };
        let suites: Vec<TestSuite> = read_or_empty(&out.suites())?;
        let parked: Vec<ParkRecord> = read_or_empty(&out.parked())?;
        let mut parked_by_reason = BTreeMap::new();
        for p in &parked {
            *parked_by_reason.entry(p.reason).or_default() += 1;
        }
        let counts = Counts {
            generated: count(out.generated())?,
            with_inputs: count(out.inputs())?,
            with_outputs: count(out.oracle())?,
            released: count(out.problems())?,
            degraded: suites.iter().filter(|s| s.degraded.is_some()).count(),
            parked: parked.len(),
            parked_by_reason,
        };
        let mut artifacts = BTreeMap::new();
        for rel in out.released_files()? {
            if let Some(h) = hash_file(&out.0.join(&rel))? {
                artifacts.insert(rel.to_string_lossy().replace('\\', "/"), h);
            }
        }
        Ok(Manifest {
            v: SCHEMA_VERSION,
            master_seed: cfg.master_seed,
            provider: cfg.provider.kind,
            seeds_sha256,
            composition: cfg.composition.target(),
            transcripts,
            counts,
            artifacts,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Malformed {
            path: path.to_path_buf(),
            line: 1,
            message: e.to_string(),
        })
    }
}
