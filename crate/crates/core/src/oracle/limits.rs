use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimitPolicy {
    /// Safety factor applied to the fastest valid solver.
    pub k: f64,
    pub tl_floor_ms: u64,
    pub ml_floor_mb: u64,
}

impl Default for LimitPolicy {
    fn default() -> Self {
        LimitPolicy { k: 3.0, tl_floor_ms: 1000, ml_floor_mb: 64 }
    }
}

/// One pool solver measured over a completed suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverTiming {
    pub solver_id: String,
    /// T(o): the slowest case.
    pub max_wall_ms: u64,
    /// Peak resident memory over all cases.
    pub peak_mem_mb: f64,
    pub cases: usize,
    /// Cases where the solver ran cleanly but printed something else.
    pub wrong: usize,
    /// Cases where the solver timed out, ran out of memory or crashed.
    pub failed: usize,
}

impl SolverTiming {
    pub fn is_valid(&self) -> bool {
        self.wrong == 0 && self.failed == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibratedLimits {
    pub time_limit_ms: u64,
    pub memory_limit_mb: u64,
    pub fastest_solver_id: String,
    pub k: f64,
    pub fastest_time_ms: u64,
    pub fastest_mem_mb: f64,
}

/// TL = max(⌈k · min T(o)⌉, floor) over valid solvers; ML = max(⌈k · Mem(o*)⌉,
/// floor) for the argmin o*, ties going to the lower id.
///
/// A solver that crashes or exceeds resources on the completed suite makes
/// the pool inconsistent and is an error. Solvers that only disagree with
/// the trusted output are left out of the valid set.
pub fn calibrate_limits(timings: &[SolverTiming], policy: &LimitPolicy) -> Result<CalibratedLimits> {
    if timings.is_empty() {
        return Err(Error::Calibration("empty solver pool".into()));
    }
    if let Some(bad) = timings.iter().find(|t| t.failed > 0) {
        return Err(Error::Calibration(format!(
            "pool solver {} failed to run on {} of {} cases",
            bad.solver_id, bad.failed, bad.cases
        )));
    }
    let fastest = timings
        .iter()
        .filter(|t| t.is_valid())
        .min_by(|a, b| a.max_wall_ms.cmp(&b.max_wall_ms).then_with(|| a.solver_id.cmp(&b.solver_id)))
        .ok_or_else(|| Error::Calibration("no pool solver passes the whole suite".into()))?;
    let tl = (policy.k * fastest.max_wall_ms as f64).ceil() as u64;
    let ml = (policy.k * fastest.peak_mem_mb).ceil() as u64;
    Ok(CalibratedLimits {
        time_limit_ms: tl.max(policy.tl_floor_ms),
        memory_limit_mb: ml.max(policy.ml_floor_mb),
        fastest_solver_id: fastest.solver_id.clone(),
        k: policy.k,
        fastest_time_ms: fastest.max_wall_ms,
        fastest_mem_mb: fastest.peak_mem_mb,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(id: &str, ms: u64, mem: f64) -> SolverTiming {
        SolverTiming { solver_id: id.into(), max_wall_ms: ms, peak_mem_mb: mem, cases: 50, wrong: 0, failed: 0 }
    }

    #[test]
    fn formula_and_floors() {
        let p = LimitPolicy::default();
        let l = calibrate_limits(&[t("b", 1500, 30.0), t("a", 1200, 40.0)], &p).unwrap();
        assert_eq!((l.time_limit_ms, l.memory_limit_mb, l.fastest_solver_id.as_str()), (3600, 120, "a"));
        let l = calibrate_limits(&[t("a", 100, 5.0)], &p).unwrap();
        assert_eq!((l.time_limit_ms, l.memory_limit_mb), (1000, 64));
    }

    #[test]
    fn tie_goes_to_lower_id() {
        let l = calibrate_limits(&[t("opt-2", 700, 10.0), t("opt-1", 700, 90.0)], &LimitPolicy::default()).unwrap();
        assert_eq!(l.fastest_solver_id, "opt-1");
        assert_eq!(l.memory_limit_mb, 270);
    }

    #[test]
    fn wrong_solvers_excluded_failures_rejected() {
        let mut wrong = t("a", 10, 1.0);
        wrong.wrong = 1;
        let l = calibrate_limits(&[wrong.clone(), t("b", 2000, 1.0)], &LimitPolicy::default()).unwrap();
        assert_eq!(l.fastest_solver_id, "b");
        assert!(calibrate_limits(&[wrong], &LimitPolicy::default()).is_err());
        let mut crashed = t("c", 10, 1.0);
        crashed.failed = 1;
        assert!(calibrate_limits(&[crashed, t("d", 10, 1.0)], &LimitPolicy::default()).is_err());
    }
}
