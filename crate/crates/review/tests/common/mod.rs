#![allow(dead_code)]

use probsmith_core::model::{Difficulty, Example, GenerationLineage, Problem, Strategy};

fn problem(statement: String, strategy: Strategy, seed_ids: Vec<String>) -> Problem {
    let (input_format, output_format) = ("One integer N.".to_string(), "One integer.".to_string());
    Problem {
        id: Problem::content_id(strategy, &statement, &input_format, &output_format),
        statement,
        input_format,
        output_format,
        constraints: "1 <= N <= 100".into(),
        examples: vec![
            Example { input: "1".into(), output: "1".into() },
            Example { input: "2".into(), output: "4".into() },
        ],
        tags: vec!["math".into()],
        skills: vec!["combinatorics".into()],
        difficulty: Difficulty::Easy,
        lineage: GenerationLineage {
            strategy,
            shared_tag: None,
            instruction: (strategy == Strategy::SingleExtension).then(|| "tighten constraints".into()),
            seed_ids,
        },
        time_limit_ms: Some(1000),
        memory_limit_mb: Some(64),
    }
}

pub fn seeds() -> Vec<Problem> {
    (0..4).map(|i| problem(format!("Seed problem {i}"), Strategy::Seed, Vec::new())).collect()
}

/// Generated problems whose lineage points into [`seeds`].
pub fn pool(n: usize) -> Vec<Problem> {
    let s = seeds();
    (0..n)
        .map(|i| {
            if i % 2 == 0 {
                problem(format!("Extended problem {i}"), Strategy::SingleExtension, vec![s[i % 4].id.clone()])
            } else {
                problem(
                    format!("Fused problem {i}"),
                    Strategy::SameTypeFusion,
                    vec![s[0].id.clone(), s[1 + i % 3].id.clone()],
                )
            }
        })
        .collect()
}

pub fn annotators(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("rater{i}")).collect()
}
