use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum VoteDecision {
    Majority(String),
    /// The two most frequent outputs, by count then lexicographically.
    Tie(String, String),
    NoQuorum,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteOutcome {
    pub n: usize,
    pub tally: BTreeMap<String, usize>,
    pub decision: VoteDecision,
}

impl VoteOutcome {
    /// Ranked (output, count) pairs: count descending, then output ascending.
    pub fn ranked(&self) -> Vec<(&str, usize)> {
        let mut v: Vec<(&str, usize)> = self.tally.iter().map(|(k, &c)| (k.as_str(), c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }
}

/// Strict majority over `outputs.len()` voters. `None` is a voter that
/// produced no usable output; it counts toward N but toward no output.
pub fn majority_vote(outputs: &[Option<String>]) -> VoteOutcome {
    let n = outputs.len();
    let mut tally: BTreeMap<String, usize> = BTreeMap::new();
    for o in outputs.iter().flatten() {
        *tally.entry(o.clone()).or_default() += 1;
    }
    let mut out = VoteOutcome { n, tally, decision: VoteDecision::NoQuorum };
    let ranked = out.ranked();
    out.decision = match ranked.as_slice() {
        [(top, c), ..] if *c > n / 2 => VoteDecision::Majority(top.to_string()),
        [(a, _), (b, _), ..] => VoteDecision::Tie(a.to_string(), b.to_string()),
        _ => VoteDecision::NoQuorum,
    };
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vote(xs: &[&str]) -> VoteDecision {
        majority_vote(&xs.iter().map(|s| Some(s.to_string())).collect::<Vec<_>>()).decision
    }

    #[test]
    fn examples() {
        assert_eq!(vote(&["A", "A", "A", "B", "C"]), VoteDecision::Majority("A".into()));
        assert_eq!(vote(&["A", "A", "B", "B"]), VoteDecision::Tie("A".into(), "B".into()));
        assert_eq!(vote(&["A", "A", "B"]), VoteDecision::Majority("A".into()));
        assert_eq!(vote(&["C", "B", "A"]), VoteDecision::Tie("A".into(), "B".into()));
        assert_eq!(vote(&["A"]), VoteDecision::Majority("A".into()));
    }

    #[test]
    fn silent_voters_count_toward_n() {
        let d = majority_vote(&[Some("A".into()), None, None]).decision;
        assert_eq!(d, VoteDecision::NoQuorum);
        let d = majority_vote(&[Some("A".into()), Some("A".into()), None]).decision;
        assert_eq!(d, VoteDecision::Majority("A".into()));
    }
}
