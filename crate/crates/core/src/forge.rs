//! Problem generation from seeds: single-problem extension, same-type and
//! cross-type fusion, skill tagging, deduplication and the baseline
//! difficulty filter.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gateway::parse::{self, ParsedProblem};
use crate::gateway::{prompts, Gateway, RequestParams};
use crate::model::{GenerationLineage, Problem, Strategy, MAX_SKILLS, MAX_TAGS};

pub const BUILTIN_TAXONOMY: &str = include_str!("../assets/forge/taxonomy.json");
pub const BUILTIN_INSTRUCTIONS: &str = include_str!("../assets/forge/instructions.txt");
/// Statements more similar than this to a pool problem count as duplicates.
pub const DUPLICATE_JACCARD: f64 = 0.9;

/// Top-level tag to subtag to skills.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Taxonomy(pub BTreeMap<String, BTreeMap<String, Vec<String>>>);

impl Taxonomy {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TAXONOMY).expect("shipped taxonomy parses")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("taxonomy: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn tags(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    pub fn subtag_count(&self) -> usize {
        self.0.values().map(BTreeMap::len).sum()
    }

    pub fn skills(&self) -> Vec<String> {
        self.0.values().flat_map(|subs| subs.values().flatten().cloned()).collect()
    }

    pub fn has_skill(&self, skill: &str) -> bool {
        self.0.values().any(|subs| subs.values().any(|s| s.iter().any(|x| x == skill)))
    }

    /// Resolves a tag or subtag to its top-level tag.
    pub fn top_level<'a>(&'a self, tag: &str) -> Option<&'a str> {
        self.0.iter().find(|(top, subs)| top.as_str() == tag || subs.contains_key(tag)).map(|(top, _)| top.as_str())
    }

    fn top_levels(&self, tags: &[String]) -> BTreeSet<String> {
        tags.iter().map(|t| self.top_level(t).unwrap_or(t).to_string()).collect()
    }
}

pub fn parse_instructions(text: &str) -> Vec<String> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(String::from).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub modification_instructions: Vec<String>,
    pub tag_taxonomy: Taxonomy,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy, modification_instructions: Vec<String>, tag_taxonomy: Taxonomy) -> Result<Self> {
        if strategy == Strategy::SingleExtension && modification_instructions.is_empty() {
            return Err(Error::Config("single-problem extension needs a non-empty instruction pool".into()));
        }
        Ok(StrategyConfig { strategy, modification_instructions, tag_taxonomy })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedDraw {
    pub seeds: Vec<Problem>,
    pub shared_tag: Option<String>,
}

pub fn sample_seeds(pool: &[Problem], strategy: Strategy, rng_seed: u64, taxonomy: &Taxonomy) -> Result<SeedDraw> {
    sample_seeds_with(pool, strategy, &mut ChaCha8Rng::seed_from_u64(rng_seed), taxonomy)
}

pub fn sample_seeds_with(
    pool: &[Problem],
    strategy: Strategy,
    rng: &mut ChaCha8Rng,
    taxonomy: &Taxonomy,
) -> Result<SeedDraw> {
    let none = || Error::NoEligibleSeeds { strategy: strategy.to_string() };
    match strategy {
        Strategy::Seed => Err(Error::Argument("seed problems are not sampled".into())),
        Strategy::SingleExtension => {
            let p = pool.choose(rng).ok_or_else(none)?;
            Ok(SeedDraw { seeds: vec![p.clone()], shared_tag: None })
        }
        Strategy::SameTypeFusion => {
            let mut by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
            for (i, p) in pool.iter().enumerate() {
                for t in p.tags.iter().collect::<BTreeSet<_>>() {
                    by_tag.entry(t.as_str()).or_default().push(i);
                }
            }
            let eligible: Vec<(&str, Vec<usize>)> = by_tag.into_iter().filter(|(_, v)| v.len() >= 2).collect();
            let (tag, members) = eligible.choose(rng).ok_or_else(none)?;
            let picked: Vec<usize> = members.choose_multiple(rng, 2).copied().collect();
            Ok(SeedDraw { seeds: picked.iter().map(|&i| pool[i].clone()).collect(), shared_tag: Some(tag.to_string()) })
        }
        Strategy::CrossTypeFusion => {
            let tops: Vec<BTreeSet<String>> = pool.iter().map(|p| taxonomy.top_levels(&p.tags)).collect();
            let mut pairs = Vec::new();
            for i in 0..pool.len() {
                for j in i + 1..pool.len() {
                    if tops[i].is_disjoint(&tops[j]) {
                        pairs.push((i, j));
                    }
                }
            }
            let &(i, j) = pairs.choose(rng).ok_or_else(none)?;
            let (a, b) = if rng.gen_bool(0.5) { (i, j) } else { (j, i) };
            Ok(SeedDraw { seeds: vec![pool[a].clone(), pool[b].clone()], shared_tag: None })
        }
    }
}

fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

/// Jaccard similarity of lower-cased alphanumeric token sets.
pub fn jaccard(a: &str, b: &str) -> f64 {
    let (ta, tb) = (tokens(a), tokens(b));
    if ta.is_empty() && tb.is_empty() {
        return 1.0;
    }
    let inter = ta.intersection(&tb).count() as f64;
    let union = ta.union(&tb).count() as f64;
    inter / union
}

/// Id of the first pool problem the statement duplicates.
pub fn find_duplicate<'a>(statement: &str, pool: impl IntoIterator<Item = &'a Problem>) -> Option<String> {
    pool.into_iter().find(|p| jaccard(statement, &p.statement) > DUPLICATE_JACCARD).map(|p| p.id.clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterDecision {
    Keep,
    Drop,
}

/// Drops a problem only when every panel model solves its whole suite.
pub fn difficulty_filter(p: &Problem, baseline: &BTreeMap<String, f64>, panel: &[String]) -> Result<FilterDecision> {
    if panel.is_empty() {
        return Err(Error::Argument("empty baseline panel".into()));
    }
    let mut all_perfect = true;
    for model in panel {
        let frac = baseline
            .get(model)
            .ok_or_else(|| Error::Argument(format!("{}: no baseline result for model {model}", p.id)))?;
        if *frac != 1.0 {
            all_perfect = false;
        }
    }
    Ok(if all_perfect { FilterDecision::Drop } else { FilterDecision::Keep })
}

/// Drafting and tagging against one gateway.
pub struct Forge<'g> {
    pub gateway: &'g Gateway,
    pub taxonomy: Taxonomy,
    pub params: RequestParams,
}

#[derive(Debug, Clone)]
pub struct Draft {
    pub problem: Problem,
    pub warnings: Vec<String>,
}

impl<'g> Forge<'g> {
    pub fn new(gateway: &'g Gateway, taxonomy: Taxonomy, params: RequestParams) -> Self {
        Forge { gateway, taxonomy, params }
    }

    fn ask(&self, prompt: String, context: &str) -> Result<ParsedProblem> {
        let text = self.gateway.complete(&self.params.request(prompt))?;
        parse::parse_generated_problem(&text).map_err(|e| match e {
            Error::ResponseParse(m) => Error::ResponseParse(format!("{context}: {m}")),
            other => other,
        })
    }

    fn build(&self, parsed: ParsedProblem, lineage: GenerationLineage, tags: Vec<String>) -> Result<Draft> {
        let d = parsed.draft;
        let mut warnings = parsed.warnings;
        let mut skills = Vec::new();
        for s in parsed.category.skills {
            if self.taxonomy.has_skill(&s) {
                skills.push(s);
            } else {
                warnings.push(format!("skill {s:?} is not in the taxonomy, dropped"));
            }
        }
        let mut problem = Problem {
            id: Problem::content_id(lineage.strategy, &d.statement, &d.input_format, &d.output_format),
            statement: d.statement,
            input_format: d.input_format,
            output_format: d.output_format,
            constraints: d.constraints,
            examples: d.examples,
            tags,
            skills,
            difficulty: parsed.category.difficulty,
            lineage,
            time_limit_ms: None,
            memory_limit_mb: None,
        };
        if problem.skills.is_empty() {
            warnings.push("no taxonomy skill in Part 4, asking for skills".into());
            problem.skills = self.assign_tags(&problem)?;
        }
        Ok(Draft { problem, warnings })
    }

    pub fn extend_single(&self, seed: &Problem, instruction: &str) -> Result<Draft> {
        let prompt = prompts::single_extension(seed, instruction, &self.taxonomy.skills());
        let parsed = self.ask(prompt, &format!("extension of {}", seed.id))?;
        let mut tags = parsed.category.tags.clone();
        tags.truncate(MAX_TAGS);
        let lineage = GenerationLineage {
            strategy: Strategy::SingleExtension,
            seed_ids: vec![seed.id.clone()],
            shared_tag: None,
            instruction: Some(instruction.to_string()),
        };
        self.build(parsed, lineage, tags)
    }

    pub fn fuse_same_type(&self, a: &Problem, b: &Problem, tag: &str) -> Result<Draft> {
        if a.id == b.id {
            return Err(Error::Argument(format!("same-type fusion of {} with itself", a.id)));
        }
        if !a.tags.iter().any(|t| t == tag) || !b.tags.iter().any(|t| t == tag) {
            return Err(Error::Argument(format!("tag {tag:?} is not shared by {} and {}", a.id, b.id)));
        }
        let prompt = prompts::same_type_fusion(a, b, tag, &self.taxonomy.skills());
        let parsed = self.ask(prompt, &format!("same-type fusion of {} and {}", a.id, b.id))?;
        // The shared tag leads; the rest keep the model's order.
        let mut tags = vec![tag.to_string()];
        tags.extend(parsed.category.tags.iter().filter(|t| t.as_str() != tag).cloned());
        tags.truncate(MAX_TAGS);
        let lineage = GenerationLineage {
            strategy: Strategy::SameTypeFusion,
            seed_ids: vec![a.id.clone(), b.id.clone()],
            shared_tag: Some(tag.to_string()),
            instruction: None,
        };
        self.build(parsed, lineage, tags)
    }

    pub fn fuse_cross_type(&self, a: &Problem, b: &Problem) -> Result<Draft> {
        let (ta, tb) = (self.taxonomy.top_levels(&a.tags), self.taxonomy.top_levels(&b.tags));
        if a.id == b.id || !ta.is_disjoint(&tb) {
            return Err(Error::Argument(format!("cross-type fusion needs disjoint tags: {} and {}", a.id, b.id)));
        }
        let prompt = prompts::cross_type_fusion(a, b, &self.taxonomy.skills());
        let parsed = self.ask(prompt, &format!("cross-type fusion of {} and {}", a.id, b.id))?;
        let tags = cross_type_tags(&parsed.category.tags, &a.tags, &b.tags);
        let lineage = GenerationLineage {
            strategy: Strategy::CrossTypeFusion,
            seed_ids: vec![a.id.clone(), b.id.clone()],
            shared_tag: None,
            instruction: None,
        };
        self.build(parsed, lineage, tags)
    }

    /// Ranked taxonomy skills for a problem; unknown skills are dropped.
    pub fn assign_tags(&self, p: &Problem) -> Result<Vec<String>> {
        let skills = self.taxonomy.skills();
        let text = self.gateway.complete(&self.params.request(prompts::assign_skills(p, &skills)))?;
        let listed = parse::parse_skill_list(&text)
            .ok_or_else(|| Error::Tagging(format!("{}: response has no skills line", p.id)))?;
        let mut kept = Vec::new();
        for s in listed {
            if !self.taxonomy.has_skill(&s) {
                tracing::warn!(problem = %p.id, skill = %s, "skill outside taxonomy dropped");
            } else if !kept.contains(&s) {
                kept.push(s);
            }
        }
        if kept.is_empty() {
            return Err(Error::Tagging(format!("{}: no returned skill is in the taxonomy", p.id)));
        }
        kept.truncate(MAX_SKILLS);
        Ok(kept)
    }

    /// Samples seeds and an instruction for `strategy` and drafts one problem.
    pub fn generate(&self, pool: &[Problem], config: &StrategyConfig, rng: &mut ChaCha8Rng) -> Result<Draft> {
        let draw = sample_seeds_with(pool, config.strategy, rng, &self.taxonomy)?;
        match config.strategy {
            Strategy::SingleExtension => {
                let phi = config.modification_instructions.choose(rng).ok_or_else(|| {
                    Error::Config("single-problem extension needs a non-empty instruction pool".into())
                })?;
                self.extend_single(&draw.seeds[0], phi)
            }
            Strategy::SameTypeFusion => {
                self.fuse_same_type(&draw.seeds[0], &draw.seeds[1], draw.shared_tag.as_deref().unwrap_or_default())
            }
            Strategy::CrossTypeFusion => self.fuse_cross_type(&draw.seeds[0], &draw.seeds[1]),
            Strategy::Seed => Err(Error::Argument("seed problems are not generated".into())),
        }
    }
}

/// Up to three tags from both seeds. The model's picks come first when they
/// belong to a seed; each seed keeps at least one tag.
pub fn cross_type_tags(parsed: &[String], a: &[String], b: &[String]) -> Vec<String> {
    let in_union = |t: &String| a.contains(t) || b.contains(t);
    let mut order: Vec<String> = Vec::new();
    for t in parsed.iter().filter(|t| in_union(t)).chain(a.iter()).chain(b.iter()) {
        if !order.contains(t) {
            order.push(t.clone());
        }
    }
    let first_a = order.iter().position(|t| a.contains(t));
    let first_b = order.iter().position(|t| b.contains(t));
    let mut keep: BTreeSet<usize> = first_a.into_iter().chain(first_b).collect();
    for i in 0..order.len() {
        if keep.len() >= MAX_TAGS {
            break;
        }
        keep.insert(i);
    }
    keep.into_iter().map(|i| order[i].clone()).collect()
}
