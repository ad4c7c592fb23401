use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::Args;
use probsmith_core::dataset::{read_dataset, read_jsonl, write_jsonl};
use probsmith_core::eval::{
    judge, leaderboard_row, matrices_from_records, pass_at_k, problem_limits, render_leaderboard, tag_report,
    LeaderboardRow, ResultRecord, TagReport,
};
use probsmith_core::model::{Problem, SolverCandidate, SolverRole, TestSuite};
use probsmith_core::trust::{
    capacity_max_n, paper_exact_bound, render_trust_reports, trust_report, ComplexityModel, ContaminationParams,
    CostFunction, TrustConfig, TrustReport,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Release directory holding problems.jsonl and suites.jsonl.
    #[arg(long)]
    release: PathBuf,
    /// Submissions JSONL: model, problem_id, attempt, source.
    #[arg(long)]
    submissions: PathBuf,
    /// Results JSONL to write.
    #[arg(long)]
    results: PathBuf,
    /// Stop judging a submission at its first failing case.
    #[arg(long)]
    fail_fast: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Submission {
    /// Schema version; optional in hand-written files.
    #[serde(default)]
    v: Option<u32>,
    model: String,
    problem_id: String,
    #[serde(default)]
    attempt: usize,
    source: String,
}

fn read_submissions(path: &Path) -> Result<Vec<Submission>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

pub fn evaluate(args: &EvaluateArgs, config: Option<&Path>, workers: Option<usize>) -> Result<ExitCode> {
    let problems = read_dataset(&args.release.join("problems.jsonl"))?;
    let suites: Vec<TestSuite> = read_jsonl(&args.release.join("suites.jsonl"))?;
    let suites: BTreeMap<&str, &TestSuite> = suites.iter().map(|s| (s.problem_id.as_str(), s)).collect();
    let by_id: BTreeMap<&str, &Problem> = problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let subs = read_submissions(&args.submissions)?;
    let sandbox = crate::sandbox_for(config, workers)?;

    let mut records = Vec::with_capacity(subs.len());
    for s in &subs {
        let p = by_id
            .get(s.problem_id.as_str())
            .with_context(|| format!("submission for unknown problem {}", s.problem_id))?;
        let suite = suites.get(s.problem_id.as_str()).with_context(|| format!("no suite for {}", s.problem_id))?;
        let id = format!("{}/{}/{}", s.model, s.problem_id, s.attempt);
        let cand = SolverCandidate::new(id.clone(), s.source.clone(), SolverRole::Submission, s.model.clone());
        let r = judge(&sandbox, &cand, suite, &problem_limits(p)?, args.fail_fast)?;
        tracing::info!(submission = %id, passed = r.passed, "judged");
        records.push(ResultRecord {
            model: s.model.clone(),
            problem_id: s.problem_id.clone(),
            attempt: s.attempt,
            submission_id: id,
            passed: r.passed,
            cases: r.cases,
        });
    }
    write_jsonl(&args.results, &records)?;
    let passed = records.iter().filter(|r| r.passed).count();
    println!("judged {} submissions, {} passed; results in {}", records.len(), passed, args.results.display());
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Results JSONL from `evaluate`.
    #[arg(long)]
    results: PathBuf,
    /// Released problems JSONL.
    #[arg(long)]
    problems: PathBuf,
    /// pass@k values to report.
    #[arg(long, value_delimiter = ',', default_value = "1")]
    k: Vec<usize>,
    /// Print JSON instead of tables.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct ModelReport {
    model: String,
    pass_at_k: BTreeMap<usize, f64>,
    leaderboard: LeaderboardRow,
    tags: TagReport,
}

pub fn report(args: &ReportArgs) -> Result<ExitCode> {
    let problems = read_dataset(&args.problems)?;
    let records: Vec<ResultRecord> = read_jsonl(&args.results)?;
    let models = matrices_from_records(&records)?;
    if models.is_empty() {
        bail!("{} holds no results", args.results.display());
    }
    let mut out = Vec::new();
    for m in &models {
        let mut ks = BTreeMap::new();
        for &k in &args.k {
            ks.insert(k, pass_at_k(&m.matrix, k).with_context(|| format!("model {}", m.model))?);
        }
        out.push(ModelReport {
            model: m.model.clone(),
            pass_at_k: ks,
            leaderboard: leaderboard_row(m, &problems)?,
            tags: tag_report(&m.matrix, &problems)?,
        });
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&out)?);
        return Ok(ExitCode::SUCCESS);
    }
    let rows: Vec<LeaderboardRow> = out.iter().map(|r| r.leaderboard.clone()).collect();
    print!("{}", render_leaderboard(&rows));
    for r in &out {
        println!();
        let ks: Vec<String> = r.pass_at_k.iter().map(|(k, v)| format!("pass@{k} {:.1}%", v * 100.0)).collect();
        println!("{}: {}", r.model, ks.join(", "));
        for t in r.tags.rows.iter().chain([&r.tags.overall]) {
            println!("  {:<24} {:>4}/{:<4} {:>6.1}%", t.tag, t.solved, t.problems, t.pass_at_1 * 100.0);
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Args)]
pub struct TrustArgs {
    /// Contamination assumptions (TOML: alpha, q_e, optional alpha_range, q_range, ci, paper_exact).
    #[arg(long)]
    contamination: Option<PathBuf>,
    /// Results JSONL; one report per model from its pass@1.
    #[arg(long, conflicts_with = "mu_hat")]
    results: Option<PathBuf>,
    /// Observed pass rate, instead of results.
    #[arg(long, requires = "n")]
    mu_hat: Option<f64>,
    #[arg(long)]
    n: Option<u64>,
    /// Print the bias/variance table at the published parameters and the capacity checks.
    #[arg(long)]
    table: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Serialize)]
struct TableRow {
    n: u64,
    bias: f64,
    standard_error: f64,
    half_width: f64,
    total: f64,
}

fn published_table() -> Result<Vec<TableRow>> {
    [500, 5000, 10000]
        .into_iter()
        .map(|n| {
            let b = paper_exact_bound(&ContaminationParams::new(0.06, 0.80, 0.50, n)?);
            Ok(TableRow { n, bias: b.bias, standard_error: b.standard_error, half_width: b.half_width, total: b.total })
        })
        .collect()
}

pub fn trust(args: &TrustArgs) -> Result<ExitCode> {
    if args.table {
        let rows = published_table()?;
        let nlogn = capacity_max_n(
            &ComplexityModel { ops_per_second: 1e8, cost: CostFunction::NLogN, time_budget_s: 5.0 },
            Some(20_000_000),
        )?;
        let quad = capacity_max_n(
            &ComplexityModel { ops_per_second: 1e8, cost: CostFunction::Quadratic, time_budget_s: 50.0 },
            None,
        )?;
        if args.json {
            let v = serde_json::json!({ "table": rows, "capacity": { "nlogn": nlogn, "quadratic": quad } });
            println!("{}", serde_json::to_string_pretty(&v)?);
        } else {
            println!("alpha 0.06, p 0.80, q_e 0.50, fixed-split SE, z 1.96");
            println!("{:>6}  {:>7}  {:>7}  {:>10}  {:>7}", "n", "bias", "SE", "half-width", "total");
            for r in &rows {
                println!(
                    "{:>6}  {:>6.3}%  {:>6.3}%  {:>9.3}%  {:>6.3}%",
                    r.n,
                    r.bias * 100.0,
                    r.standard_error * 100.0,
                    r.half_width * 100.0,
                    r.total * 100.0
                );
            }
            println!(
                "n log n at {:.1e} ops: max n {}, n = 2e7 costs {:.4e} ops",
                nlogn.budget_ops,
                nlogn.max_n,
                nlogn.probe_ops.unwrap_or(0.0)
            );
            println!("n^2 at {:.1e} ops: max n {}", quad.budget_ops, quad.max_n);
        }
        return Ok(ExitCode::SUCCESS);
    }

    let path = args.contamination.as_deref().context("trust needs --contamination (or --table)")?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg: TrustConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let reports: Vec<TrustReport> = match (&args.results, args.mu_hat, args.n) {
        (Some(r), _, _) => {
            let records: Vec<ResultRecord> = read_jsonl(r)?;
            matrices_from_records(&records)?
                .iter()
                .map(|m| trust_report(&m.model, pass_at_k(&m.matrix, 1)?, m.matrix.problem_ids.len() as u64, &cfg))
                .collect::<probsmith_core::error::Result<_>>()?
        }
        (None, Some(mu), Some(n)) => vec![trust_report("observed", mu, n, &cfg)?],
        _ => bail!("trust needs --results or --mu-hat with --n"),
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&reports)?);
    } else {
        print!("{}", render_trust_reports(&reports));
    }
    Ok(ExitCode::SUCCESS)
}
