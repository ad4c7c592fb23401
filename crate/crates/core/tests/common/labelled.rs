//! A released-style suite for "print the largest of N integers" and
//! twenty labelled submissions against it.

use probsmith_core::model::{CaseProvenance, GeneratorKind, SolverCandidate, SolverRole, TestCase, TestSuite};

pub const CASES: [(GeneratorKind, &str); 8] = [
    (GeneratorKind::Random, "3\n1 2 3\n"),
    (GeneratorKind::Random, "1\n-5\n"),
    (GeneratorKind::Random, "4\n4 4 4 4\n"),
    (GeneratorKind::Random, "5\n-1 -2 -3 -4 -5\n"),
    (GeneratorKind::Adversarial, "2\n1000000000 -1000000000\n"),
    (GeneratorKind::Adversarial, "6\n0 0 0 0 0 1\n"),
    (GeneratorKind::Adversarial, "7\n3 1 4 1 5 9 2\n"),
    (GeneratorKind::DirectSynth, "1\n0\n"),
];

pub fn values(input: &str) -> Vec<i64> {
    input.split_whitespace().skip(1).map(|t| t.parse().unwrap()).collect()
}

pub fn suite() -> TestSuite {
    let cases = CASES
        .iter()
        .enumerate()
        .map(|(i, (kind, input))| {
            let mut provenance = CaseProvenance::new(*kind, i as u64);
            provenance.verifier_decision = true;
            let output = values(input).into_iter().max().unwrap().to_string();
            TestCase { input: input.to_string(), output: Some(output), provenance }
        })
        .collect();
    TestSuite::new("max", cases)
}

pub const READ: &str = "import sys\nd = sys.stdin.read().split()\nn = int(d[0])\na = [int(x) for x in d[1:1 + n]]\n";

pub const CORRECT: [&str; 10] = [
    "print(max(a))",
    "print(sorted(a)[-1])",
    "b = a[0]\nfor x in a:\n    if x > b:\n        b = x\nprint(b)",
    "import functools\nprint(functools.reduce(lambda x, y: x if x >= y else y, a))",
    "print(sorted(a, reverse=True)[0])",
    "import heapq\nprint(heapq.nlargest(1, a)[0])",
    "print(a[a.index(max(a))])",
    "a.sort()\nprint(a[n - 1])",
    "print(-min(-x for x in a))",
    // Right answer, far too slow on the seven-element case.
    "import time\nif n == 7:\n    time.sleep(3)\nprint(max(a))",
];

pub const INCORRECT: [&str; 10] = [
    "b = 0\nfor x in a:\n    b = max(b, x)\nprint(b)",
    "print(max(a[1:]))",
    "print(min(a))",
    "print(max(a[:-1]))",
    "print(n)",
    "print(a[-1])",
    // Only the adversarial extreme-value case exposes this one.
    "m = max(a)\nprint(m if m < 10**9 else m - 1)",
    // The suite never reaches these two.
    "print(max(a) if n <= 100 else a[0])",
    "m = max(a)\nprint(m if m != 42 else 41)",
    "x = a[1]\nprint(max(a))",
];

pub fn submissions(bodies: &[&str], role: &str) -> Vec<SolverCandidate> {
    bodies
        .iter()
        .enumerate()
        .map(|(i, b)| {
            SolverCandidate::new(format!("{role}-{i}"), format!("{READ}{b}\n"), SolverRole::Optimized, "test")
        })
        .collect()
}
