//! Parsers for the structured responses requested by the generation prompts.
//!
//! Problem responses follow a four-part skeleton:
//!
//! ```text
//! ## Part 1: Original Problems and Solution Analysis
//! ## Part 2: New Problem Description:
//! New_problem: ...
//! Input Format: ...
//! Output Format: ...
//! ## Part 3: Example Test Cases
//! Input: ... / Output: ...
//! ## Part 4: Category
//! difficulty: ... / tags: ... / skills: ...
//! ```

use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::model::{Difficulty, Example, MAX_SKILLS, MAX_TAGS, MIN_EXAMPLES};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProblemDraft {
    pub statement: String,
    pub input_format: String,
    pub output_format: String,
    pub constraints: String,
    pub examples: Vec<Example>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryBlock {
    pub difficulty: Difficulty,
    pub tags: Vec<String>,
    pub skills: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedProblem {
    pub draft: ProblemDraft,
    pub category: CategoryBlock,
    pub warnings: Vec<String>,
    /// Headings present in the response that the parser does not consume.
    pub unparsed_sections: Vec<String>,
}

fn part_header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?im)^[ \t]*(?:#{1,6}[ \t]*)?\**[ \t]*Part[ \t]*(\d+)[ \t]*[:.]?[ \t]*(.*?)\**[ \t]*$").unwrap()
    })
}

fn other_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^[ \t]*#{1,6}[ \t]+(.+?)[ \t]*$").unwrap())
}

struct Section<'a> {
    number: u32,
    title: String,
    body: &'a str,
}

fn split_parts(text: &str) -> Vec<Section<'_>> {
    let heads: Vec<_> = part_header().captures_iter(text).collect();
    let mut out = Vec::new();
    for (i, cap) in heads.iter().enumerate() {
        let whole = cap.get(0).unwrap();
        let end = heads.get(i + 1).map_or(text.len(), |n| n.get(0).unwrap().start());
        out.push(Section {
            number: cap[1].parse().unwrap_or(0),
            title: cap[2].trim().trim_end_matches(':').trim().to_string(),
            body: &text[whole.end()..end],
        });
    }
    out
}

/// Lower-cased label of a `Label: value` line, with markdown emphasis and list
/// bullets removed, plus the value text after the colon.
fn label_line(line: &str) -> Option<(String, &str)> {
    let stripped = line.trim_start().trim_start_matches(['-', '*', ' ', '\t']);
    let colon = stripped.find(':')?;
    let label = stripped[..colon].trim().trim_matches('*').trim().to_ascii_lowercase();
    if label.is_empty() || label.len() > 40 {
        return None;
    }
    let value = stripped[colon + 1..].trim_start_matches('*');
    Some((label, value))
}

fn is_fence(line: &str) -> bool {
    let t = line.trim();
    t.starts_with("```") || t.starts_with("'''")
}

fn clean_block(lines: &[&str]) -> String {
    let kept: Vec<&str> = lines.iter().copied().filter(|l| !is_fence(l)).collect();
    let joined = kept.join("\n");
    let trimmed = joined.trim_matches('\n');
    // Keep interior indentation, drop trailing spaces per line.
    trimmed.lines().map(str::trim_end).collect::<Vec<_>>().join("\n").trim().to_string()
}

fn parse_description(body: &str, warnings: &mut Vec<String>) -> Result<(String, String, String, String)> {
    #[derive(Clone, Copy, PartialEq)]
    enum Field {
        Statement,
        Input,
        Output,
        Constraints,
    }
    let mut buckets: [Vec<&str>; 4] = Default::default();
    let mut current = Field::Statement;
    for line in body.lines() {
        if let Some((label, value)) = label_line(line) {
            let next = match label.as_str() {
                "new_problem" | "new problem" | "problem" | "description" | "problem statement" => {
                    Some(Field::Statement)
                }
                "input format" | "input" => Some(Field::Input),
                "output format" | "output" => Some(Field::Output),
                "constraints" => Some(Field::Constraints),
                _ => None,
            };
            if let Some(f) = next {
                current = f;
                if !value.trim().is_empty() {
                    buckets[current as usize].push(value);
                }
                continue;
            }
        }
        buckets[current as usize].push(line);
    }
    let statement = clean_block(&buckets[0]);
    let input = clean_block(&buckets[1]);
    let output = clean_block(&buckets[2]);
    let constraints = clean_block(&buckets[3]);
    for (name, val) in [("statement", &statement), ("Input Format", &input), ("Output Format", &output)] {
        if val.is_empty() {
            return Err(Error::ResponseParse(format!("Part 2: missing {name}")));
        }
    }
    if constraints.is_empty() {
        warnings.push("Part 2: no constraints block".into());
    }
    Ok((statement, input, output, constraints))
}

fn parse_examples(body: &str, warnings: &mut Vec<String>) -> Result<Vec<Example>> {
    let mut examples = Vec::new();
    let mut input: Option<Vec<&str>> = None;
    let mut output: Option<Vec<&str>> = None;
    let mut flush = |input: &mut Option<Vec<&str>>, output: &mut Option<Vec<&str>>, examples: &mut Vec<Example>| match (
        input.take(),
        output.take(),
    ) {
        (Some(i), Some(o)) => examples.push(Example { input: clean_block(&i), output: clean_block(&o) }),
        (Some(_), None) => warnings.push("Part 3: example input without output".into()),
        (None, Some(_)) => warnings.push("Part 3: example output without input".into()),
        (None, None) => {}
    };
    for line in body.lines() {
        let label = label_line(line).filter(|(l, _)| {
            let base = l.trim_end_matches(|c: char| c.is_ascii_digit() || c == ' ');
            base == "input" || base == "output"
        });
        match label {
            Some((l, value)) if l.starts_with("input") => {
                flush(&mut input, &mut output, &mut examples);
                input = Some(if value.trim().is_empty() { vec![] } else { vec![value] });
            }
            Some((_, value)) => {
                if input.is_none() || output.is_some() {
                    flush(&mut input, &mut output, &mut examples);
                }
                output = Some(if value.trim().is_empty() { vec![] } else { vec![value] });
            }
            None => {
                if let Some(o) = output.as_mut() {
                    o.push(line);
                } else if let Some(i) = input.as_mut() {
                    i.push(line);
                }
            }
        }
    }
    flush(&mut input, &mut output, &mut examples);
    if examples.len() < MIN_EXAMPLES {
        return Err(Error::ResponseParse(format!(
            "Part 3: expected at least {MIN_EXAMPLES} examples, found {}",
            examples.len()
        )));
    }
    Ok(examples)
}

/// Splits a comma list, dropping brackets, quotes and empty items.
pub fn split_list(value: &str) -> Vec<String> {
    value
        .split([',', ';'])
        .map(|s| s.trim().trim_matches(|c: char| "[]\"'`*".contains(c)).trim())
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn parse_category(body: &str, warnings: &mut Vec<String>) -> Result<CategoryBlock> {
    let mut difficulty = None;
    let mut tags = None;
    let mut skills = None;
    for line in body.lines() {
        if let Some((label, value)) = label_line(line) {
            match label.as_str() {
                "difficulty" => {
                    difficulty = Some(Difficulty::parse(value).ok_or_else(|| {
                        Error::ResponseParse(format!("Part 4: unknown difficulty {:?}", value.trim()))
                    })?)
                }
                "tags" | "tag" => tags = Some(split_list(value)),
                "skills" | "skill" => skills = Some(split_list(value)),
                _ => {}
            }
        }
    }
    let difficulty = difficulty.ok_or_else(|| Error::ResponseParse("Part 4: missing difficulty".into()))?;
    let mut tags = tags.filter(|t| !t.is_empty()).ok_or_else(|| Error::ResponseParse("Part 4: missing tags".into()))?;
    let mut skills =
        skills.filter(|s| !s.is_empty()).ok_or_else(|| Error::ResponseParse("Part 4: missing skills".into()))?;
    if tags.len() > MAX_TAGS {
        warnings.push(format!("Part 4: {} tags listed, keeping the first {MAX_TAGS}", tags.len()));
        tags.truncate(MAX_TAGS);
    }
    if skills.len() > MAX_SKILLS {
        warnings.push(format!("Part 4: {} skills listed, keeping the top {MAX_SKILLS}", skills.len()));
        skills.truncate(MAX_SKILLS);
    }
    Ok(CategoryBlock { difficulty, tags, skills })
}

pub fn parse_generated_problem(response: &str) -> Result<ParsedProblem> {
    let parts = split_parts(response);
    let find = |n: u32| parts.iter().find(|s| s.number == n);
    let missing = |n: u32, name: &str| Error::ResponseParse(format!("missing Part {n}: {name}"));
    let p2 = find(2).ok_or_else(|| missing(2, "New Problem Description"))?;
    let p3 = find(3).ok_or_else(|| missing(3, "Example Test Cases"))?;
    let p4 = find(4).ok_or_else(|| missing(4, "Category"))?;

    let mut warnings = Vec::new();
    let (statement, input_format, output_format, constraints) = parse_description(p2.body, &mut warnings)?;
    let examples = parse_examples(p3.body, &mut warnings)?;
    let category = parse_category(p4.body, &mut warnings)?;

    let mut unparsed_sections: Vec<String> = parts
        .iter()
        .filter(|s| !(1..=4).contains(&s.number))
        .map(|s| format!("Part {}: {}", s.number, s.title))
        .collect();
    // Free-standing headings inside the consumed parts.
    for s in [p2, p3, p4] {
        for cap in other_heading().captures_iter(s.body) {
            unparsed_sections.push(cap[1].to_string());
        }
    }
    Ok(ParsedProblem {
        draft: ProblemDraft { statement, input_format, output_format, constraints, examples },
        category,
        warnings,
        unparsed_sections,
    })
}

/// Renders a draft in the four-part skeleton; [`parse_generated_problem`]
/// inverts it.
pub fn render_problem_response(draft: &ProblemDraft, category: &CategoryBlock, analysis: &str) -> String {
    let mut s = String::new();
    s.push_str("## Part 1: Original Problems and Solution Analysis\n");
    s.push_str(analysis.trim());
    s.push_str("\n\n## Part 2: New Problem Description:\n");
    s.push_str(&format!("New_problem: {}\n\n", draft.statement));
    s.push_str(&format!("Input Format: {}\n", draft.input_format));
    s.push_str(&format!("Output Format: {}\n", draft.output_format));
    if !draft.constraints.is_empty() {
        s.push_str(&format!("Constraints: {}\n", draft.constraints));
    }
    s.push_str("\n## Part 3: Example Test Cases\n");
    for e in &draft.examples {
        s.push_str(&format!("Input:\n{}\nOutput:\n{}\n", e.input, e.output));
    }
    s.push_str("\n## Part 4: Category\n");
    s.push_str(&format!("difficulty: {}\n", category.difficulty));
    s.push_str(&format!("tags: {}\n", category.tags.join(", ")));
    s.push_str(&format!("skills: {}\n", category.skills.join(", ")));
    s
}

struct Fenced<'a> {
    body: &'a str,
    closed: bool,
}

/// Code blocks delimited by ``` or ''' with an optional language marker on
/// the opening line.
fn fenced_blocks(text: &str) -> Vec<Fenced<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    let mut open: Option<(&str, usize)> = None;
    for line in text.split_inclusive('\n') {
        let t = line.trim();
        let marker = if t.starts_with("```") {
            Some("```")
        } else if t.starts_with("'''") {
            Some("'''")
        } else {
            None
        };
        match (open, marker) {
            (None, Some(m)) => open = Some((m, offset + line.len())),
            (Some((m, start)), Some(m2)) if m == m2 && t == m => {
                out.push(Fenced { body: &text[start..offset], closed: true });
                open = None;
            }
            _ => {}
        }
        offset += line.len();
    }
    if let Some((_, start)) = open {
        out.push(Fenced { body: &text[start..], closed: false });
    }
    out
}

fn defines(code: &str, entry: &str) -> bool {
    let pat = format!(r"(?m)^[ \t]*def[ \t]+{}[ \t]*\(", regex::escape(entry));
    Regex::new(&pat).unwrap().is_match(code)
}

fn code_start() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^(import |from |def |class |@)").unwrap())
}

fn tidy_code(code: &str) -> String {
    let mut s = code.trim_matches('\n').trim_end().to_string();
    s.push('\n');
    s
}

/// Returns the source that defines `expected_entry`, preferring fenced
/// blocks, then `Part N:` sections, then the response from its first line of
/// code onward.
pub fn parse_generated_program(response: &str, expected_entry: &str) -> Result<String> {
    for block in fenced_blocks(response) {
        if defines(block.body, expected_entry) {
            return Ok(tidy_code(block.body));
        }
    }
    for part in split_parts(response) {
        if defines(part.body, expected_entry) {
            let body: Vec<&str> = part.body.lines().filter(|l| !is_fence(l)).collect();
            return Ok(tidy_code(&body.join("\n")));
        }
    }
    if defines(response, expected_entry) {
        if let Some(m) = code_start().find(response) {
            return Ok(tidy_code(&response[m.start()..]));
        }
    }
    Err(Error::ResponseParse(format!("entry symbol not found: {expected_entry}")))
}

/// Extracts a complete stdin-to-stdout program from a solver response.
pub fn parse_solver_program(response: &str) -> Result<String> {
    let reads_stdin = |c: &str| c.contains("input(") || c.contains("sys.stdin");
    for block in fenced_blocks(response) {
        if block.closed && reads_stdin(block.body) {
            return Ok(tidy_code(block.body));
        }
    }
    if let Some(m) = code_start().find(response) {
        let rest = &response[m.start()..];
        if reads_stdin(rest) && fenced_blocks(response).is_empty() {
            return Ok(tidy_code(rest));
        }
    }
    Err(Error::ResponseParse("no stdin-reading program found".into()))
}

/// Contents of every closed plaintext block; prose around the blocks is
/// dropped. Unclosed blocks are skipped with a warning.
pub fn extract_plaintext_blocks(response: &str) -> (Vec<String>, Vec<String>) {
    let mut blocks = Vec::new();
    let mut warnings = Vec::new();
    for (i, b) in fenced_blocks(response).into_iter().enumerate() {
        if !b.closed {
            warnings.push(format!("block {i}: unterminated, skipped"));
            continue;
        }
        let text = b.body.trim_matches('\n');
        if text.trim().is_empty() {
            warnings.push(format!("block {i}: empty, skipped"));
            continue;
        }
        blocks.push(text.to_string());
    }
    (blocks, warnings)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjudicationChoice {
    First,
    Second,
    Undetermined,
}

/// Reads the last `VERDICT:` line of an adjudication response.
pub fn parse_adjudication(response: &str) -> Option<AdjudicationChoice> {
    static RE: OnceLock<Regex> = OnceLock::new();
    let re = RE.get_or_init(|| Regex::new(r"(?im)^[ \t*]*VERDICT[ \t*]*:[ \t*]*(\S+)").unwrap());
    let last = re.captures_iter(response).last()?;
    match last[1].trim_matches(|c: char| !c.is_ascii_alphanumeric()).to_ascii_uppercase().as_str() {
        "1" | "OUTPUT1" | "A" => Some(AdjudicationChoice::First),
        "2" | "OUTPUT2" | "B" => Some(AdjudicationChoice::Second),
        "UNDETERMINED" | "UNKNOWN" | "NEITHER" => Some(AdjudicationChoice::Undetermined),
        _ => None,
    }
}

/// Ranked skill names from a `skills:` line.
pub fn parse_skill_list(response: &str) -> Option<Vec<String>> {
    response.lines().rev().find_map(|line| match label_line(line) {
        Some((label, value)) if label == "skills" => Some(split_list(value)),
        _ => None,
    })
}
