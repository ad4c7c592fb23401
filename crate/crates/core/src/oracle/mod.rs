//! Trusted outputs without a reference solution.
//!
//! Small inputs are grounded by brute-force consensus and used to filter the
//! optimized candidates into a trusted pool. Large inputs take the pool's
//! strict majority; ties go to an adjudicator and are discarded when it
//! cannot decide. The pool's measurements then calibrate the limits.

mod limits;
mod vote;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::parse::{parse_adjudication, AdjudicationChoice};
use crate::gateway::{prompts, Gateway, RequestParams};
use crate::model::{
    short_hash, Composition, ExecutionResult, GeneratorKind, OracleStage, Problem, Scale, SolverCandidate, TestCase,
    TestSuite, Verdict,
};
use crate::sandbox::{normalize_output, ExecLimits, GuestProgram, Job, Sandbox};
use crate::synth::AssembledSuite;

pub use limits::{calibrate_limits, CalibratedLimits, LimitPolicy, SolverTiming};
pub use vote::{majority_vote, VoteDecision, VoteOutcome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub bf_count: usize,
    /// Optimized candidates requested per problem (M).
    pub optimized_count: usize,
    /// Smallest trusted pool that may vote.
    pub n_min: usize,
    /// A case is small when the first brute-force solver finishes within this.
    pub small_budget_ms: u64,
    /// Runs between the budget and budget × factor are re-checked once.
    pub borderline_factor: f64,
    pub solver_wall_ms: u64,
    pub solver_mem_mb: u64,
    pub adjudication_attempts: u32,
    pub calibration: LimitPolicy,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            bf_count: 3,
            optimized_count: 8,
            n_min: 3,
            small_budget_ms: 2000,
            borderline_factor: 1.5,
            solver_wall_ms: 10_000,
            solver_mem_mb: 1024,
            adjudication_attempts: 2,
            calibration: LimitPolicy::default(),
        }
    }
}

impl OracleConfig {
    pub fn solver_limits(&self) -> Result<ExecLimits> {
        Ok(ExecLimits::new(self.solver_wall_ms, self.solver_mem_mb)?)
    }

    fn probe_limits(&self) -> Result<ExecLimits> {
        let wall = (self.small_budget_ms as f64 * self.borderline_factor.max(1.0)).ceil() as u64;
        Ok(ExecLimits::new(wall, self.solver_mem_mb)?)
    }
}

pub fn solver_program(s: &SolverCandidate) -> GuestProgram {
    GuestProgram::python(s.source.clone())
}

/// What a run contributes to a vote: its normalized output if it ran cleanly.
fn vote_of(r: &ExecutionResult) -> Option<String> {
    (r.verdict == Verdict::Accepted).then(|| normalize_output(&r.stdout))
}

fn hashed_tally(v: &VoteOutcome) -> BTreeMap<String, usize> {
    v.tally.iter().map(|(k, &c)| (short_hash(k), c)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScaleCheck {
    Small,
    Large,
    /// The brute-force solver crashed; the case needs a manual look.
    Excluded(String),
}

fn scale_from_run(r: &ExecutionResult, budget_ms: u64) -> Option<ScaleCheck> {
    match r.verdict {
        Verdict::TimeLimit | Verdict::MemoryLimit => Some(ScaleCheck::Large),
        Verdict::Accepted if r.wall_ms <= budget_ms => Some(ScaleCheck::Small),
        Verdict::Accepted => None,
        v => Some(ScaleCheck::Excluded(format!("brute-force solver: {v:?} (exit {})", r.exit_code))),
    }
}

/// Small iff the brute-force solver finishes within `small_budget_ms`.
/// A finish between the budget and budget × factor is re-run once and the
/// second run decides.
pub fn classify_scale(sandbox: &Sandbox, case: &TestCase, bf: &GuestProgram, cfg: &OracleConfig) -> Result<ScaleCheck> {
    if case.provenance.generator == GeneratorKind::DirectSynth {
        return Ok(ScaleCheck::Small);
    }
    let limits = cfg.probe_limits()?;
    let first = sandbox.run_guest(bf, &case.input, &limits)?;
    classify_with(sandbox, case, bf, cfg, &limits, &first)
}

fn classify_with(
    sandbox: &Sandbox,
    case: &TestCase,
    bf: &GuestProgram,
    cfg: &OracleConfig,
    limits: &ExecLimits,
    first: &ExecutionResult,
) -> Result<ScaleCheck> {
    if let Some(s) = scale_from_run(first, cfg.small_budget_ms) {
        return Ok(s);
    }
    let again = sandbox.run_guest(bf, &case.input, limits)?;
    Ok(scale_from_run(&again, cfg.small_budget_ms).unwrap_or(ScaleCheck::Large))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Consensus {
    Trusted { output: String, vote: VoteOutcome },
    Dropped { reason: String, vote: VoteOutcome },
}

impl Consensus {
    pub fn output(&self) -> Option<&str> {
        match self {
            Consensus::Trusted { output, .. } => Some(output),
            Consensus::Dropped { .. } => None,
        }
    }
}

/// Per input, the output a strict majority of brute-force solvers agree on.
/// Fails when no input gets one.
pub fn brute_force_consensus(
    sandbox: &Sandbox,
    bf: &[GuestProgram],
    inputs: &[&str],
    limits: &ExecLimits,
) -> Result<Vec<Consensus>> {
    if bf.is_empty() {
        return Err(Error::Argument("no brute-force candidates".into()));
    }
    let jobs: Vec<Job> = inputs
        .iter()
        .flat_map(|input| bf.iter().map(move |p| Job { program: p, stdin: input, limits: *limits, seed: 0 }))
        .collect();
    let runs = sandbox.try_run_batch(&jobs)?;
    let out: Vec<Consensus> = runs
        .chunks(bf.len())
        .map(|rs| {
            let vote = majority_vote(&rs.iter().map(vote_of).collect::<Vec<_>>());
            match vote.decision.clone() {
                VoteDecision::Majority(output) => Consensus::Trusted { output, vote },
                _ => Consensus::Dropped {
                    reason: format!(
                        "brute-force solvers disagree: {} distinct outputs over {}",
                        vote.tally.len(),
                        vote.n
                    ),
                    vote,
                },
            }
        })
        .collect();
    if !out.iter().any(|c| matches!(c, Consensus::Trusted { .. })) {
        return Err(Error::NoTrustedBaseline(format!(
            "none of {} small inputs reached brute-force consensus",
            inputs.len()
        )));
    }
    Ok(out)
}

/// Compact record of one solver run kept for voting and calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub verdict: Verdict,
    pub wall_ms: u64,
    pub peak_mem_mb: f64,
    pub output: Option<String>,
}

impl From<&ExecutionResult> for RunSummary {
    fn from(r: &ExecutionResult) -> Self {
        RunSummary { verdict: r.verdict, wall_ms: r.wall_ms, peak_mem_mb: r.peak_mem_mb, output: vote_of(r) }
    }
}

/// Runs per solver id, keyed by input hash.
pub type RunLog = BTreeMap<String, HashMap<String, RunSummary>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverPool {
    /// Every optimized candidate, with `filtered_in` set.
    pub candidates: Vec<SolverCandidate>,
    /// Ids admitted to the pool, in candidate order.
    pub filtered: Vec<String>,
    pub n: usize,
    pub insufficient: bool,
}

impl SolverPool {
    pub fn members(&self) -> impl Iterator<Item = &SolverCandidate> {
        self.candidates.iter().filter(|c| c.filtered_in == Some(true))
    }
}

/// Admits a solver iff it reproduces every trusted output exactly.
pub fn filter_solvers(
    sandbox: &Sandbox,
    candidates: &[SolverCandidate],
    trusted: &[(&str, &str)],
    limits: &ExecLimits,
    n_min: usize,
) -> Result<(SolverPool, RunLog)> {
    if trusted.is_empty() {
        return Err(Error::Argument("filtration needs at least one trusted pair".into()));
    }
    let programs: Vec<GuestProgram> = candidates.iter().map(solver_program).collect();
    let jobs: Vec<Job> = programs
        .iter()
        .flat_map(|p| trusted.iter().map(move |(input, _)| Job { program: p, stdin: input, limits: *limits, seed: 0 }))
        .collect();
    let runs = sandbox.try_run_batch(&jobs)?;
    let mut log = RunLog::new();
    let mut out = Vec::with_capacity(candidates.len());
    for (cand, rs) in candidates.iter().zip(runs.chunks(trusted.len())) {
        let entry = log.entry(cand.id.clone()).or_default();
        let mut ok = true;
        for ((input, expected), r) in trusted.iter().zip(rs) {
            let s = RunSummary::from(r);
            if s.output.as_deref() != Some(*expected) {
                ok = false;
            }
            entry.insert(short_hash(input), s);
        }
        let mut c = cand.clone();
        c.filtered_in = Some(ok);
        out.push(c);
    }
    let filtered: Vec<String> = out.iter().filter(|c| c.filtered_in == Some(true)).map(|c| c.id.clone()).collect();
    let n = filtered.len();
    Ok((SolverPool { candidates: out, filtered, n, insufficient: n < n_min }, log))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Adjudication {
    Accept(String),
    Discard(String),
}

/// Asks the adjudicator to choose between the two leading outputs.
#[allow(clippy::too_many_arguments)]
pub fn adjudicate(
    gateway: &Gateway,
    params: &RequestParams,
    problem: &Problem,
    input: &str,
    o1: &str,
    o2: &str,
    sources1: &[&str],
    sources2: &[&str],
    attempts: u32,
) -> Result<Adjudication> {
    let prompt = prompts::adjudicate(problem, input, o1, o2, sources1, sources2);
    for _ in 0..attempts.max(1) {
        let text = gateway.complete(&params.request(prompt.clone()))?;
        match parse_adjudication(&text) {
            Some(AdjudicationChoice::First) => return Ok(Adjudication::Accept(o1.to_string())),
            Some(AdjudicationChoice::Second) => return Ok(Adjudication::Accept(o2.to_string())),
            Some(AdjudicationChoice::Undetermined) => {
                return Ok(Adjudication::Discard("adjudicator could not determine the output".into()))
            }
            None => tracing::warn!(problem = %problem.id, "unparseable adjudication response"),
        }
    }
    Ok(Adjudication::Discard(format!("adjudication unparseable after {} attempt(s)", attempts.max(1))))
}

/// A candidate input that did not make it into the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedCase {
    pub input_hash: String,
    pub generator: GeneratorKind,
    pub rng_seed: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleOutcome {
    pub suite: TestSuite,
    pub pool: SolverPool,
    /// Pool members measured over the completed suite.
    pub timings: Vec<SolverTiming>,
    pub dropped: Vec<DroppedCase>,
    pub adjudicated: usize,
}

pub struct OracleCtx<'a> {
    pub sandbox: &'a Sandbox,
    pub gateway: &'a Gateway,
    pub adjudicator: RequestParams,
    pub cfg: OracleConfig,
}

enum Phase {
    Pending,
    Small(Consensus),
    Large,
    Dropped(String),
}

/// Fills in outputs for an assembled suite. Cases discarded along the way
/// are replaced from the reserve of the same generator kind.
pub fn synthesize_suite_outputs(
    ctx: &OracleCtx<'_>,
    problem: &Problem,
    assembled: &AssembledSuite,
    target: Composition,
    bf: &[SolverCandidate],
    optimized: &[SolverCandidate],
) -> Result<OracleOutcome> {
    let cfg = &ctx.cfg;
    let sandbox = ctx.sandbox;
    let bf_programs: Vec<GuestProgram> = bf.iter().map(solver_program).collect();
    let first_bf =
        bf_programs.first().ok_or_else(|| Error::Argument(format!("{}: no brute-force solver", problem.id)))?;
    let solver_limits = cfg.solver_limits()?;

    // Suite cases first, then reserve, each pool in its own order.
    let candidates: Vec<&TestCase> = GeneratorKind::ALL
        .iter()
        .flat_map(|&k| {
            assembled.suite.cases.iter().chain(&assembled.reserve).filter(move |c| c.provenance.generator == k)
        })
        .collect();
    let mut phases: Vec<Phase> = candidates.iter().map(|_| Phase::Pending).collect();

    // Scale of every candidate.
    let probe = cfg.probe_limits()?;
    let to_probe: Vec<usize> =
        (0..candidates.len()).filter(|&i| candidates[i].provenance.generator != GeneratorKind::DirectSynth).collect();
    let jobs: Vec<Job> = to_probe
        .iter()
        .map(|&i| Job { program: first_bf, stdin: &candidates[i].input, limits: probe, seed: 0 })
        .collect();
    let probes = sandbox.try_run_batch(&jobs)?;
    let mut small = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        if c.provenance.generator == GeneratorKind::DirectSynth {
            small.push(i);
        }
    }
    for (&i, r) in to_probe.iter().zip(&probes) {
        match classify_with(sandbox, candidates[i], first_bf, cfg, &probe, r)? {
            ScaleCheck::Small => small.push(i),
            ScaleCheck::Large => phases[i] = Phase::Large,
            ScaleCheck::Excluded(reason) => phases[i] = Phase::Dropped(reason),
        }
    }
    small.sort_unstable();

    // Stage 1: brute-force grounding, then filtration on every trusted pair.
    let small_inputs: Vec<&str> = small.iter().map(|&i| candidates[i].input.as_str()).collect();
    if small_inputs.is_empty() {
        return Err(Error::NoTrustedBaseline(format!("{}: no small-scale input", problem.id)));
    }
    let consensus =
        brute_force_consensus(sandbox, &bf_programs, &small_inputs, &solver_limits).map_err(|e| match e {
            Error::NoTrustedBaseline(m) => Error::NoTrustedBaseline(format!("{}: {m}", problem.id)),
            other => other,
        })?;
    let mut trusted = Vec::new();
    for (&i, c) in small.iter().zip(consensus) {
        if let Some(o) = c.output() {
            trusted.push((candidates[i].input.as_str(), o.to_string()));
        }
        phases[i] = match c {
            Consensus::Dropped { reason, .. } => Phase::Dropped(reason),
            t => Phase::Small(t),
        };
    }
    let pairs: Vec<(&str, &str)> = trusted.iter().map(|(i, o)| (*i, o.as_str())).collect();
    let (pool, mut runs) = filter_solvers(sandbox, optimized, &pairs, &solver_limits, cfg.n_min)?;
    if pool.insufficient {
        return Err(Error::InsufficientPool { id: problem.id.clone(), n: pool.n, n_min: cfg.n_min });
    }
    let members: Vec<&SolverCandidate> = pool.members().collect();
    let member_programs: Vec<GuestProgram> = members.iter().map(|s| solver_program(s)).collect();

    // Stage 2 and 3, lazily, until each kind reaches its target.
    let mut selected: Vec<TestCase> = Vec::new();
    let mut dropped = Vec::new();
    let mut adjudicated = 0;
    let mut taken = Composition::default();
    for (i, c) in candidates.iter().enumerate() {
        let kind = c.provenance.generator;
        let want = target.get(kind);
        let have = taken.get(kind);
        let phase = std::mem::replace(&mut phases[i], Phase::Pending);
        let drop = |reason: String, dropped: &mut Vec<DroppedCase>| {
            dropped.push(DroppedCase {
                input_hash: short_hash(&c.input),
                generator: kind,
                rng_seed: c.provenance.rng_seed,
                reason,
            })
        };
        if let Phase::Dropped(reason) = phase {
            drop(reason, &mut dropped);
            continue;
        }
        if have >= want {
            continue;
        }
        let mut case = (*c).clone();
        match phase {
            Phase::Small(Consensus::Trusted { output, vote }) => {
                case.output = Some(output);
                case.provenance.scale = Some(Scale::Small);
                case.provenance.oracle_stage = Some(OracleStage::BruteForce);
                case.provenance.vote_tally = Some(hashed_tally(&vote));
            }
            Phase::Large => {
                let jobs: Vec<Job> = member_programs
                    .iter()
                    .map(|p| Job { program: p, stdin: &c.input, limits: solver_limits, seed: 0 })
                    .collect();
                let rs = sandbox.try_run_batch(&jobs)?;
                let key = short_hash(&c.input);
                for (m, r) in members.iter().zip(&rs) {
                    runs.entry(m.id.clone()).or_default().insert(key.clone(), RunSummary::from(r));
                }
                let outputs: Vec<Option<String>> = rs.iter().map(vote_of).collect();
                let vote = majority_vote(&outputs);
                case.provenance.scale = Some(Scale::Large);
                case.provenance.vote_tally = Some(hashed_tally(&vote));
                match &vote.decision {
                    VoteDecision::Majority(o) => {
                        case.output = Some(o.clone());
                        case.provenance.oracle_stage = Some(OracleStage::MajorityVote);
                    }
                    VoteDecision::Tie(o1, o2) => {
                        let by = |o: &str| -> Vec<&str> {
                            members
                                .iter()
                                .zip(&outputs)
                                .filter(|(_, out)| out.as_deref() == Some(o))
                                .map(|(m, _)| m.source.as_str())
                                .collect()
                        };
                        let verdict = adjudicate(
                            ctx.gateway,
                            &ctx.adjudicator,
                            problem,
                            &c.input,
                            o1,
                            o2,
                            &by(o1),
                            &by(o2),
                            cfg.adjudication_attempts,
                        )?;
                        match verdict {
                            Adjudication::Accept(o) => {
                                adjudicated += 1;
                                case.output = Some(o);
                                case.provenance.oracle_stage = Some(OracleStage::Adjudicated);
                            }
                            Adjudication::Discard(reason) => {
                                drop(format!("tie discarded: {reason}"), &mut dropped);
                                continue;
                            }
                        }
                    }
                    VoteDecision::NoQuorum => {
                        drop(format!("no quorum among {} pool solvers", vote.n), &mut dropped);
                        continue;
                    }
                }
            }
            _ => continue,
        }
        selected.push(case);
        taken = Composition::of(&selected);
    }

    let mut suite = TestSuite::new(problem.id.clone(), selected);
    if suite.composition != target {
        suite.degraded = Some(format!(
            "{} cases after output synthesis, want {target}; {} candidates dropped",
            suite.composition,
            dropped.len()
        ));
    }
    let timings = timings_from_runs(&members, &suite, &runs);
    Ok(OracleOutcome { suite, pool, timings, dropped, adjudicated })
}

/// T(o) and Mem(o) from recorded runs; a missing run counts as a failure.
pub fn timings_from_runs(members: &[&SolverCandidate], suite: &TestSuite, runs: &RunLog) -> Vec<SolverTiming> {
    members
        .iter()
        .map(|m| {
            let mine = runs.get(&m.id);
            let mut t = SolverTiming {
                solver_id: m.id.clone(),
                max_wall_ms: 0,
                peak_mem_mb: 0.0,
                cases: suite.cases.len(),
                wrong: 0,
                failed: 0,
            };
            for case in &suite.cases {
                match mine.and_then(|r| r.get(&short_hash(&case.input))) {
                    Some(r) if r.verdict == Verdict::Accepted => {
                        t.max_wall_ms = t.max_wall_ms.max(r.wall_ms);
                        t.peak_mem_mb = t.peak_mem_mb.max(r.peak_mem_mb);
                        if r.output != case.output {
                            t.wrong += 1;
                        }
                    }
                    _ => t.failed += 1,
                }
            }
            t
        })
        .collect()
}

/// Re-runs solvers over a completed suite to measure them afresh.
pub fn measure_pool(
    sandbox: &Sandbox,
    solvers: &[SolverCandidate],
    suite: &TestSuite,
    limits: &ExecLimits,
) -> Result<Vec<SolverTiming>> {
    let programs: Vec<GuestProgram> = solvers.iter().map(solver_program).collect();
    let jobs: Vec<Job> = programs
        .iter()
        .flat_map(|p| suite.cases.iter().map(move |c| Job { program: p, stdin: &c.input, limits: *limits, seed: 0 }))
        .collect();
    let results = sandbox.try_run_batch(&jobs)?;
    let mut runs = RunLog::new();
    for (s, rs) in solvers.iter().zip(results.chunks(suite.cases.len().max(1))) {
        let e = runs.entry(s.id.clone()).or_default();
        for (c, r) in suite.cases.iter().zip(rs) {
            e.insert(short_hash(&c.input), RunSummary::from(r));
        }
    }
    let members: Vec<&SolverCandidate> = solvers.iter().collect();
    Ok(timings_from_runs(&members, suite, &runs))
}
