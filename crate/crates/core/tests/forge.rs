mod common;

use std::collections::BTreeMap;
use std::path::Path;

use probsmith_core::dataset::read_jsonl;
use probsmith_core::error::Error;
use probsmith_core::forge::{
    difficulty_filter, find_duplicate, sample_seeds, FilterDecision, Forge, StrategyConfig, Taxonomy,
};
use probsmith_core::gateway::parse::{render_problem_response, CategoryBlock, ProblemDraft};
use probsmith_core::gateway::{Gateway, KeyedProvider, RequestParams};
use probsmith_core::model::{validate_problem, Difficulty, Example, Problem, Strategy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn seeds() -> Vec<Problem> {
    read_jsonl(&common::fixtures().join("e2e/seeds.jsonl")).unwrap()
}

fn seed(tag: &str) -> Problem {
    seeds().into_iter().find(|p| p.tags.iter().any(|t| t == tag)).unwrap()
}

fn with_tags(mut p: Problem, id: &str, tags: &[&str]) -> Problem {
    p.id = id.into();
    p.statement = format!("{} ({id})", p.statement);
    p.tags = tags.iter().map(|t| t.to_string()).collect();
    p
}

fn response(statement: &str, tags: &[&str], skills: &[&str]) -> String {
    let draft = ProblemDraft {
        statement: statement.into(),
        input_format: "The first line has N and S. The second line has N integers.".into(),
        output_format: "Print one integer.".into(),
        constraints: "3 <= N <= 2000".into(),
        examples: vec![
            Example { input: "3 6\n1 2 3".into(), output: "1".into() },
            Example { input: "4 0\n0 0 0 0".into(), output: "4".into() },
        ],
    };
    let category = CategoryBlock {
        difficulty: Difficulty::Medium,
        tags: tags.iter().map(|t| t.to_string()).collect(),
        skills: skills.iter().map(|s| s.to_string()).collect(),
    };
    render_problem_response(&draft, &category, "Step1: reuse the complement map.\nStep2: fix the first index.")
}

fn gateway(rules: &[(&str, Vec<String>)]) -> Gateway {
    let mut text = String::new();
    for (needle, responses) in rules {
        let list: Vec<String> = responses.iter().map(|r| format!("{r:?}")).collect();
        text.push_str(&format!("[[rule]]\nmatch = [{needle:?}]\nresponses = [{}]\nrepeat = true\n\n", list.join(", ")));
    }
    Gateway::new(KeyedProvider::from_toml(&text, Path::new(".")).unwrap())
}

const EXTEND: &str = "one programming problem, its solution";
const SAME: &str = "share the algorithmic tag";
const CROSS: &str = "Explore how to combine";
const SKILLS: &str = "Select the 1-3 most relevant skills";

#[test]
fn same_type_draw_shares_a_tag() {
    let t = Taxonomy::builtin();
    let a = with_tags(seed("hash table"), "SD-a", &["hash table"]);
    let b = with_tags(seed("hash table"), "SD-b", &["hash table", "math"]);
    let lone = with_tags(seed("sorting"), "SD-c", &["sorting"]);
    let pool = vec![a, lone, b];
    for s in 0..50 {
        let d = sample_seeds(&pool, Strategy::SameTypeFusion, s, &t).unwrap();
        assert_eq!(d.shared_tag.as_deref(), Some("hash table"));
        let mut ids: Vec<&str> = d.seeds.iter().map(|p| p.id.as_str()).collect();
        ids.sort();
        assert_eq!(ids, ["SD-a", "SD-b"]);
    }
}

#[test]
fn draws_fail_without_eligible_seeds() {
    let t = Taxonomy::builtin();
    let one = vec![seed("sorting")];
    for s in [Strategy::CrossTypeFusion, Strategy::SameTypeFusion] {
        assert!(matches!(sample_seeds(&one, s, 1, &t), Err(Error::NoEligibleSeeds { .. })));
    }
    // Both tags resolve to the same top level, so no cross-type pair exists.
    let pool = vec![
        with_tags(seed("sorting"), "SD-x", &["sorting"]),
        with_tags(seed("sorting"), "SD-y", &["prefix techniques"]),
    ];
    assert!(sample_seeds(&pool, Strategy::CrossTypeFusion, 3, &t).is_err());
}

#[test]
fn draws_repeat_under_a_fixed_seed() {
    let t = Taxonomy::builtin();
    let pool = seeds();
    let run = || -> Vec<Vec<String>> {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..1000)
            .map(|_| {
                let s = [Strategy::SingleExtension, Strategy::SameTypeFusion, Strategy::CrossTypeFusion]
                    [rng.gen_range(0..3)];
                let d = sample_seeds(&pool, s, rng.gen(), &t).unwrap();
                d.seeds.into_iter().map(|p| p.id).collect()
            })
            .collect()
    };
    let first = run();
    assert_eq!(first, run());
    let tops =
        |p: &Problem| -> Vec<String> { p.tags.iter().map(|x| t.top_level(x).unwrap_or(x).to_string()).collect() };
    let by_id: BTreeMap<String, Problem> = pool.iter().map(|p| (p.id.clone(), p.clone())).collect();
    for ids in first.iter().filter(|ids| ids.len() == 2) {
        let (a, b) = (&by_id[&ids[0]], &by_id[&ids[1]]);
        assert_ne!(a.id, b.id);
        let shared_tag = a.tags.iter().any(|x| b.tags.contains(x));
        let disjoint_tops = tops(a).iter().all(|x| !tops(b).contains(x));
        assert!(shared_tag || disjoint_tops, "{ids:?}");
    }
}

#[test]
fn extension_records_lineage_and_drops_unknown_skills() {
    let g = gateway(&[(
        EXTEND,
        vec![response(
            "Given N integers and a target S, count index triples i < j < k with a_i + a_j + a_k = S.",
            &["hash table"],
            &["pair counting with hashing", "quantum-sort"],
        )],
    )]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let s = seed("hash table");
    let d = forge.extend_single(&s, "add a side condition").unwrap();
    let p = &d.problem;
    assert_eq!(p.lineage.strategy, Strategy::SingleExtension);
    assert_eq!(p.lineage.seed_ids, vec![s.id.clone()]);
    assert_eq!(p.lineage.instruction.as_deref(), Some("add a side condition"));
    assert_eq!(p.skills, vec!["pair counting with hashing"]);
    assert!(d.warnings.iter().any(|w| w.contains("quantum-sort")));
    assert_eq!(p.id, Problem::content_id(Strategy::SingleExtension, &p.statement, &p.input_format, &p.output_format));
    assert!(validate_problem(p).is_empty(), "{:?}", validate_problem(p));
}

#[test]
fn malformed_category_names_the_seed() {
    let broken = response("Count triples summing to S.", &["hash table"], &["complement lookup"])
        .replace("## Part 4: Category", "## Part 5: Notes");
    let g = gateway(&[(EXTEND, vec![broken])]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let s = seed("hash table");
    let err = forge.extend_single(&s, "tighten constraints").unwrap_err();
    assert!(err.to_string().contains(&s.id), "{err}");
}

#[test]
fn same_type_fusion_keeps_the_shared_tag_first() {
    let g = gateway(&[(
        SAME,
        vec![response(
            "Count values that occur exactly K times among the pair sums.",
            &["math", "hash table"],
            &["frequency counting"],
        )],
    )]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let a = with_tags(seed("hash table"), "SD-a", &["hash table"]);
    let b = with_tags(seed("hash table"), "SD-b", &["hash table", "strings"]);
    let d = forge.fuse_same_type(&a, &b, "hash table").unwrap();
    assert_eq!(d.problem.tags, vec!["hash table", "math"]);
    assert_eq!(d.problem.lineage.shared_tag.as_deref(), Some("hash table"));
    assert_eq!(d.problem.lineage.seed_ids, vec!["SD-a", "SD-b"]);
    assert!(validate_problem(&d.problem).is_empty());
    assert!(matches!(forge.fuse_same_type(&a, &b, "strings"), Err(Error::Argument(_))));
    assert!(matches!(forge.fuse_same_type(&a, &a, "hash table"), Err(Error::Argument(_))));
}

#[test]
fn cross_type_fusion_covers_both_seeds() {
    let g = gateway(&[(
        CROSS,
        vec![response(
            "Count pairs whose concatenated sum is a palindrome.",
            &["strings", "math"],
            &["palindrome checking"],
        )],
    )]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let a = with_tags(seed("hash table"), "SD-a", &["hash table"]);
    let b = with_tags(seed("sorting"), "SD-b", &["strings", "dynamic programming"]);
    let d = forge.fuse_cross_type(&a, &b).unwrap();
    let tags = &d.problem.tags;
    assert!(tags.contains(&"hash table".to_string()) && tags.contains(&"strings".to_string()), "{tags:?}");
    assert!(!tags.contains(&"math".to_string()));
    assert!(tags.len() <= 3);
    assert!(validate_problem(&d.problem).is_empty(), "{:?}", validate_problem(&d.problem));
    assert!(matches!(forge.fuse_cross_type(&a, &a), Err(Error::Argument(_))));
    let same_top = with_tags(seed("sorting"), "SD-c", &["complement lookup"]);
    assert!(matches!(forge.fuse_cross_type(&a, &same_top), Err(Error::Argument(_))));
}

#[test]
fn skill_tagging_keeps_known_skills_in_rank_order() {
    let g = gateway(&[(
        SKILLS,
        vec!["skills: merge sort adaptations, quantum-sort, inversion counting, prefix sums, stable sorting".into()],
    )]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let skills = forge.assign_tags(&seed("sorting")).unwrap();
    assert_eq!(skills, vec!["merge sort adaptations", "inversion counting", "prefix sums"]);
    let t = Taxonomy::builtin();
    assert!(skills.iter().all(|s| t.has_skill(s)));

    let g = gateway(&[(SKILLS, vec!["skills: quantum-sort".into()])]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    assert!(matches!(forge.assign_tags(&seed("sorting")), Err(Error::Tagging(_))));
}

#[test]
fn missing_part4_skills_fall_back_to_tagging() {
    let g = gateway(&[
        (
            EXTEND,
            vec![response(
                "Given N integers and a target S, count pairs with sum S modulo 7.",
                &["hash table"],
                &["nothing-known"],
            )],
        ),
        (SKILLS, vec!["skills: complement lookup".into()]),
    ]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let d = forge.extend_single(&seed("hash table"), "alter the input format").unwrap();
    assert_eq!(d.problem.skills, vec!["complement lookup"]);
}

#[test]
fn generate_draws_an_instruction_from_the_pool() {
    let g = gateway(&[(
        EXTEND,
        vec![response(
            "Count triples with sum S where all values are distinct.",
            &["hash table"],
            &["complement lookup"],
        )],
    )]);
    let forge = Forge::new(&g, Taxonomy::builtin(), RequestParams::default());
    let phi = vec!["tighten constraints".to_string(), "add a side condition".to_string()];
    let cfg = StrategyConfig::new(Strategy::SingleExtension, phi.clone(), Taxonomy::builtin()).unwrap();
    let d = forge.generate(&seeds(), &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
    assert!(phi.contains(d.problem.lineage.instruction.as_ref().unwrap()));
    assert!(StrategyConfig::new(Strategy::SingleExtension, vec![], Taxonomy::builtin()).is_err());
}

#[test]
fn near_duplicates_are_found() {
    let pool = seeds();
    let copy = format!("{} ", pool[2].statement.to_uppercase());
    assert_eq!(find_duplicate(&copy, &pool), Some(pool[2].id.clone()));
    assert_eq!(find_duplicate("Print the product of two integers.", &pool), None);
}

#[test]
fn difficulty_filter_matches_the_all_perfect_predicate() {
    let p = seed("sorting");
    let panel: Vec<String> = (0..5).map(|i| format!("m{i}")).collect();
    let perfect: BTreeMap<String, f64> = panel.iter().map(|m| (m.clone(), 1.0)).collect();
    assert_eq!(difficulty_filter(&p, &perfect, &panel).unwrap(), FilterDecision::Drop);
    let mut one_short = perfect.clone();
    one_short.insert("m3".into(), 0.98);
    assert_eq!(difficulty_filter(&p, &one_short, &panel).unwrap(), FilterDecision::Keep);
    assert!(difficulty_filter(&p, &perfect, &[]).is_err());
    let missing: BTreeMap<String, f64> = perfect.iter().take(4).map(|(k, v)| (k.clone(), *v)).collect();
    assert!(difficulty_filter(&p, &missing, &panel).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..2000 {
        let r: BTreeMap<String, f64> =
            panel.iter().map(|m| (m.clone(), if rng.gen_bool(0.8) { 1.0 } else { rng.gen_range(0.0..1.0) })).collect();
        let all = r.values().all(|&x| x == 1.0);
        let want = if all { FilterDecision::Drop } else { FilterDecision::Keep };
        assert_eq!(difficulty_filter(&p, &r, &panel).unwrap(), want);
    }
}
