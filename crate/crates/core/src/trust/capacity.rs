use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostFunction {
    /// n · log2 n
    NLogN,
    /// n²
    Quadratic,
}

impl CostFunction {
    pub fn ops(self, n: u64) -> f64 {
        let x = n as f64;
        match self {
            CostFunction::NLogN if n <= 1 => 0.0,
            CostFunction::NLogN => x * x.log2(),
            CostFunction::Quadratic => x * x,
        }
    }
}

/// How many operations a machine finishes within a time budget.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityModel {
    pub ops_per_second: f64,
    pub cost: CostFunction,
    pub time_budget_s: f64,
}

impl ComplexityModel {
    pub fn budget_ops(&self) -> f64 {
        self.ops_per_second * self.time_budget_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub budget_ops: f64,
    /// Largest n with cost(n) within budget.
    pub max_n: u64,
    pub probe_n: Option<u64>,
    pub probe_ops: Option<f64>,
    pub probe_feasible: Option<bool>,
}

pub fn capacity_max_n(model: &ComplexityModel, probe_n: Option<u64>) -> Result<Capacity> {
    let positive = |x: f64| x.is_finite() && x > 0.0;
    if !positive(model.ops_per_second) || !positive(model.time_budget_s) {
        return Err(Error::Domain("ops per second and time budget must be positive".into()));
    }
    let budget = model.budget_ops();
    let max_n = match model.cost {
        CostFunction::Quadratic => {
            let mut n = budget.sqrt().floor() as u64;
            while (n as f64) * (n as f64) > budget {
                n -= 1;
            }
            while ((n + 1) as f64) * ((n + 1) as f64) <= budget {
                n += 1;
            }
            n
        }
        CostFunction::NLogN => {
            // cost(n) ≥ n for n ≥ 2, so the answer lies below budget + 2.
            let (mut lo, mut hi) = (1u64, budget as u64 + 2);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if model.cost.ops(mid) <= budget {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            lo
        }
    };
    let probe_ops = probe_n.map(|n| model.cost.ops(n));
    Ok(Capacity { budget_ops: budget, max_n, probe_n, probe_ops, probe_feasible: probe_ops.map(|o| o <= budget) })
}
