//! Prompt templates and the context blocks appended to them.
//!
//! The input-generator, direct-synthesis, cross-type and single-extension
//! templates are shipped verbatim. The remaining templates follow the same
//! output conventions so the parsers in [`super::parse`] apply unchanged.

use crate::model::Problem;

pub const RANDOM_INPUT: &str = include_str!("../../assets/prompts/random_input.txt");
pub const ADVERSARIAL_INPUT: &str = include_str!("../../assets/prompts/adversarial_input.txt");
pub const DIRECT_INPUT: &str = include_str!("../../assets/prompts/direct_input.txt");
pub const CROSS_TYPE_FUSION: &str = include_str!("../../assets/prompts/cross_type_fusion.txt");
pub const SINGLE_EXTENSION: &str = include_str!("../../assets/prompts/single_extension.txt");
pub const SAME_TYPE_FUSION: &str = include_str!("../../assets/prompts/same_type_fusion.txt");
pub const BRUTE_FORCE_SOLVER: &str = include_str!("../../assets/prompts/brute_force_solver.txt");
pub const OPTIMIZED_SOLVER: &str = include_str!("../../assets/prompts/optimized_solver.txt");
pub const ADJUDICATE: &str = include_str!("../../assets/prompts/adjudicate.txt");
pub const ASSIGN_SKILLS: &str = include_str!("../../assets/prompts/assign_skills.txt");

/// Plain-text rendering of a problem for prompt context.
pub fn problem_block(p: &Problem) -> String {
    let mut s = format!(
        "Problem Statement:\n{}\n\nInput Format:\n{}\n\nOutput Format:\n{}\n",
        p.statement, p.input_format, p.output_format
    );
    if !p.constraints.is_empty() {
        s.push_str(&format!("\nConstraints:\n{}\n", p.constraints));
    }
    for (i, e) in p.examples.iter().enumerate() {
        s.push_str(&format!("\nExample {} input:\n{}\nExample {} output:\n{}\n", i + 1, e.input, i + 1, e.output));
    }
    s.push_str(&format!("\nTags: {}\nSkills: {}\n", p.tags.join(", "), p.skills.join(", ")));
    s
}

fn skill_list(skills: &[String]) -> String {
    format!("Skill list: {}\n", skills.join(", "))
}

pub fn single_extension(seed: &Problem, instruction: &str, skills: &[String]) -> String {
    format!(
        "{SINGLE_EXTENSION}\nModification instruction: {instruction}\n\n{}\n=== Original Problem ===\n{}",
        skill_list(skills),
        problem_block(seed)
    )
}

pub fn same_type_fusion(a: &Problem, b: &Problem, tag: &str, skills: &[String]) -> String {
    format!(
        "{}\n{}\n=== Problem A ===\n{}\n=== Problem B ===\n{}",
        SAME_TYPE_FUSION.replace("{shared_tag}", tag),
        skill_list(skills),
        problem_block(a),
        problem_block(b)
    )
}

pub fn cross_type_fusion(a: &Problem, b: &Problem, skills: &[String]) -> String {
    format!(
        "{CROSS_TYPE_FUSION}\n{}\n=== Problem A ===\n{}\n=== Problem B ===\n{}",
        skill_list(skills),
        problem_block(a),
        problem_block(b)
    )
}

pub fn random_input(p: &Problem) -> String {
    format!("{RANDOM_INPUT}\n=== Problem ===\n{}", problem_block(p))
}

pub fn adversarial_input(p: &Problem) -> String {
    format!("{ADVERSARIAL_INPUT}\n=== Problem ===\n{}", problem_block(p))
}

pub fn direct_input(p: &Problem) -> String {
    DIRECT_INPUT.replace("{problem_description}", &problem_block(p))
}

pub fn brute_force_solver(p: &Problem) -> String {
    format!("{BRUTE_FORCE_SOLVER}\n=== Problem ===\n{}", problem_block(p))
}

pub fn optimized_solver(p: &Problem) -> String {
    format!("{OPTIMIZED_SOLVER}\n=== Problem ===\n{}", problem_block(p))
}

pub fn adjudicate(p: &Problem, input: &str, o1: &str, o2: &str, sources1: &[&str], sources2: &[&str]) -> String {
    let listing = |srcs: &[&str]| {
        srcs.iter()
            .enumerate()
            .map(|(i, s)| format!("--- solution {} ---\n```python\n{}\n```\n", i + 1, s.trim_end()))
            .collect::<String>()
    };
    format!(
        "{ADJUDICATE}\n=== Problem ===\n{}\n=== Test input ===\n{input}\n\n=== Output 1 ===\n{o1}\n\nSolutions producing output 1:\n{}\n=== Output 2 ===\n{o2}\n\nSolutions producing output 2:\n{}",
        problem_block(p),
        listing(sources1),
        listing(sources2)
    )
}

pub fn assign_skills(p: &Problem, skills: &[String]) -> String {
    format!("{ASSIGN_SKILLS}\n{}\n=== Problem ===\n{}", skill_list(skills), problem_block(p))
}
