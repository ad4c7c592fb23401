//! How far a reported pass rate can sit from the true rate when some tasks
//! are unreliable: bias, de-biasing, variance, intervals and error bounds.

mod capacity;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use capacity::{capacity_max_n, Capacity, ComplexityModel, CostFunction};

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959964;
/// The rounded quantile printed in published tables.
pub const Z_TABLE: f64 = 1.96;

/// Below this many tasks the Wilson interval is the default.
pub const WILSON_BELOW_N: u64 = 100;

const WEIGHT_TOLERANCE: f64 = 1e-9;

/// Both quantiles above are two-sided 95%.
const LEVEL: f64 = 0.95;

fn check_fraction(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name}={x} outside [0, 1]")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationParams {
    /// Fraction of unreliable tasks.
    pub alpha: f64,
    /// True accuracy on reliable tasks.
    pub p: f64,
    /// Success rate on unreliable tasks.
    pub q_e: f64,
    pub n: u64,
}

impl ContaminationParams {
    pub fn new(alpha: f64, p: f64, q_e: f64, n: u64) -> Result<Self> {
        let c = ContaminationParams { alpha, p, q_e, n };
        c.check()?;
        Ok(c)
    }

    pub fn check(&self) -> Result<()> {
        check_fraction("alpha", self.alpha)?;
        check_fraction("p", self.p)?;
        check_fraction("q_e", self.q_e)?;
        if self.n == 0 {
            return Err(Error::Domain("n must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureMean {
    pub mu: f64,
    pub bias: f64,
}

/// μ = (1−α)p + αq_e and the bias |μ − p| = α|q_e − p|.
pub fn mixture_mean(c: &ContaminationParams) -> MixtureMean {
    MixtureMean { mu: (1.0 - c.alpha) * c.p + c.alpha * c.q_e, bias: c.alpha * (c.q_e - c.p).abs() }
}

/// p̃ = (μ̂ − αq_e)/(1 − α).
pub fn debias(mu_hat: f64, alpha: f64, q_e: f64) -> Result<f64> {
    check_fraction("alpha", alpha)?;
    if alpha >= 1.0 {
        return Err(Error::Domain("alpha = 1 leaves no reliable tasks to de-bias toward".into()));
    }
    Ok((mu_hat - alpha * q_e) / (1.0 - alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        check_fraction("lower bound", min)?;
        check_fraction("upper bound", max)?;
        if min > max {
            return Err(Error::Domain(format!("range [{min}, {max}] is empty")));
        }
        Ok(Bounds { min, max })
    }

    pub fn point(x: f64) -> Result<Self> {
        Self::new(x, x)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.min <= x && x <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntervalMethod {
    Normal,
    Wilson,
    /// Worst case over parameter ranges, no sampling component.
    Identification,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub lo: f64,
    pub hi: f64,
    pub method: IntervalMethod,
    pub level: f64,
}

impl IntervalEstimate {
    fn clipped(lo: f64, hi: f64, method: IntervalMethod, level: f64) -> Self {
        let lo = lo.clamp(0.0, 1.0);
        let hi = hi.clamp(0.0, 1.0);
        IntervalEstimate { lo: lo.min(hi), hi: hi.max(lo), method, level }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Extremes of p̃ over the rectangle α ∈ alpha, q_e ∈ q. p̃ is monotone in
/// each argument, so the corners bound it. When q_e ≥ μ̂ the corners reduce to
/// (α_max, q_max) for the low end and (α_min, q_min) for the high end.
fn corner_range(mu_lo: f64, mu_hi: f64, alpha: Bounds, q: Bounds) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for a in [alpha.min, alpha.max] {
        for qe in [q.min, q.max] {
            lo = lo.min(debias(mu_lo, a, qe)?);
            hi = hi.max(debias(mu_hi, a, qe)?);
        }
    }
    Ok((lo, hi))
}

/// Region for p over α ∈ alpha, q_e ∈ q, intersected with [0, 1].
pub fn identification_interval(mu_hat: f64, alpha: Bounds, q: Bounds) -> Result<IntervalEstimate> {
    let (lo, hi) = corner_range(mu_hat, mu_hat, alpha, q)?;
    Ok(IntervalEstimate::clipped(lo, hi, IntervalMethod::Identification, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// Exactly round(n(1−α)) reliable tasks.
    FixedSplit,
    /// Each task unreliable independently with probability α.
    Mixture,
}

/// Var(μ̂) under the given regime.
pub fn sampling_variance(c: &ContaminationParams, regime: Regime) -> f64 {
    let n = c.n as f64;
    match regime {
        Regime::FixedSplit => {
            let reliable = (n * (1.0 - c.alpha)).round();
            let unreliable = n - reliable;
            (reliable * c.p * (1.0 - c.p) + unreliable * c.q_e * (1.0 - c.q_e)) / (n * n)
        }
        Regime::Mixture => {
            let mu = mixture_mean(c).mu;
            mu * (1.0 - mu) / n
        }
    }
}

pub fn standard_error(c: &ContaminationParams, regime: Regime) -> f64 {
    sampling_variance(c, regime).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CiMethod {
    Normal,
    Wilson,
    /// Wilson below [`WILSON_BELOW_N`] tasks, Normal otherwise.
    Auto,
}

/// Interval for μ from an observed rate over `n` tasks.
pub fn ci_mu(mu_hat: f64, n: u64, method: CiMethod, z: f64) -> Result<IntervalEstimate> {
    check_fraction("mu_hat", mu_hat)?;
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let nf = n as f64;
    let method = match method {
        CiMethod::Auto if n < WILSON_BELOW_N => CiMethod::Wilson,
        CiMethod::Auto => CiMethod::Normal,
        m => m,
    };
    Ok(match method {
        CiMethod::Wilson => {
            let z2 = z * z;
            let denom = 1.0 + z2 / nf;
            let centre = (mu_hat + z2 / (2.0 * nf)) / denom;
            let half = z * (mu_hat * (1.0 - mu_hat) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
            IntervalEstimate::clipped(centre - half, centre + half, IntervalMethod::Wilson, LEVEL)
        }
        _ => {
            let half = z * (mu_hat * (1.0 - mu_hat) / nf).sqrt();
            IntervalEstimate::clipped(mu_hat - half, mu_hat + half, IntervalMethod::Normal, LEVEL)
        }
    })
}

/// Interval for p from an interval for μ when α and q_e are known.
pub fn ci_p_known(mu: &IntervalEstimate, alpha: f64, q_e: f64) -> Result<IntervalEstimate> {
    Ok(IntervalEstimate::clipped(debias(mu.lo, alpha, q_e)?, debias(mu.hi, alpha, q_e)?, mu.method, mu.level))
}

/// Conservative interval for p when α and q_e are only bounded.
pub fn ci_p_bounded(mu: &IntervalEstimate, alpha: Bounds, q: Bounds) -> Result<IntervalEstimate> {
    let (lo, hi) = corner_range(mu.lo, mu.hi, alpha, q)?;
    Ok(IntervalEstimate::clipped(lo, hi, mu.method, mu.level))
}

/// Upper confidence bound on α from an audited subsample (Wilson).
pub fn audit_alpha_upper(flagged: u64, audited: u64, z: f64) -> Result<f64> {
    if flagged > audited {
        return Err(Error::Argument(format!("{flagged} flagged out of {audited} audited")));
    }
    Ok(ci_mu(flagged as f64 / audited.max(1) as f64, audited, CiMethod::Wilson, z)?.hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub bias: f64,
    pub standard_error: f64,
    /// z · SE.
    pub half_width: f64,
    pub total: f64,
    pub regime: Regime,
    pub z: f64,
}

/// |μ̂ − p| ≤ α|q_e − p| + z · SE with high probability.
pub fn total_error_bound(c: &ContaminationParams, regime: Regime, z: f64) -> ErrorBound {
    let bias = mixture_mean(c).bias;
    let se = standard_error(c, regime);
    ErrorBound { bias, standard_error: se, half_width: z * se, total: bias + z * se, regime, z }
}

/// The published table's convention: fixed-split SE at the true
/// parameters and z = 1.96.
pub fn paper_exact_bound(c: &ContaminationParams) -> ErrorBound {
    total_error_bound(c, Regime::FixedSplit, Z_TABLE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stratum {
    pub weight: f64,
    pub alpha: f64,
    pub p: f64,
    pub q_e: f64,
    /// Observed rate in this stratum, when available.
    pub mu_hat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratifiedEstimate {
    pub mu: f64,
    pub variance: f64,
    /// p̃_t per stratum, from μ̂_t or else from the expected μ_t.
    pub debiased: Vec<f64>,
    /// Σ w_t p̃_t.
    pub debiased_aggregate: f64,
}

/// Tag-wise mixture over `n` tasks under a fixed per-tag split.
pub fn stratified_aggregate(strata: &[Stratum], n: u64) -> Result<StratifiedEstimate> {
    if strata.is_empty() {
        return Err(Error::Argument("no strata".into()));
    }
    if n == 0 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    let total: f64 = strata.iter().map(|s| s.weight).sum();
    if (total - 1.0).abs() > WEIGHT_TOLERANCE || strata.iter().any(|s| s.weight < 0.0) {
        return Err(Error::Argument(format!("stratum weights sum to {total}, want 1")));
    }
    let (mut mu, mut var, mut agg) = (0.0, 0.0, 0.0);
    let mut debiased = Vec::with_capacity(strata.len());
    for s in strata {
        let c = ContaminationParams::new(s.alpha, s.p, s.q_e, n)?;
        let m = mixture_mean(&c).mu;
        mu += s.weight * m;
        var += s.weight * ((1.0 - s.alpha) * s.p * (1.0 - s.p) + s.alpha * s.q_e * (1.0 - s.q_e));
        let d = debias(s.mu_hat.unwrap_or(m), s.alpha, s.q_e)?;
        agg += s.weight * d;
        debiased.push(d);
    }
    Ok(StratifiedEstimate { mu, variance: var / n as f64, debiased, debiased_aggregate: agg })
}

/// Contamination assumptions for a trust report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrustConfig {
    pub alpha: f64,
    pub q_e: f64,
    /// Bounds used for the sensitivity band; default to the point values.
    #[serde(default)]
    pub alpha_range: Option<[f64; 2]>,
    #[serde(default)]
    pub q_range: Option<[f64; 2]>,
    #[serde(default = "default_ci")]
    pub ci: CiMethod,
    /// Use the rounded 1.96 quantile.
    #[serde(default)]
    pub paper_exact: bool,
}

fn default_ci() -> CiMethod {
    CiMethod::Auto
}

impl TrustConfig {
    pub fn z(&self) -> f64 {
        if self.paper_exact {
            Z_TABLE
        } else {
            Z_975
        }
    }

    fn bounds(&self) -> Result<(Bounds, Bounds)> {
        let a = match self.alpha_range {
            Some([lo, hi]) => Bounds::new(lo, hi)?,
            None => Bounds::point(self.alpha)?,
        };
        let q = match self.q_range {
            Some([lo, hi]) => Bounds::new(lo, hi)?,
            None => Bounds::point(self.q_e)?,
        };
        Ok((a, q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustReport {
    pub label: String,
    pub n: u64,
    pub mu_hat: f64,
    pub debiased: f64,
    pub ci_mu: IntervalEstimate,
    pub ci_p: IntervalEstimate,
    pub ci_p_bounded: IntervalEstimate,
    pub identification: IntervalEstimate,
    /// Bound evaluated at the de-biased point, plug-in mixture variance.
    pub bound: ErrorBound,
}

pub fn trust_report(label: &str, mu_hat: f64, n: u64, cfg: &TrustConfig) -> Result<TrustReport> {
    let z = cfg.z();
    let (a, q) = cfg.bounds()?;
    let mu = ci_mu(mu_hat, n, cfg.ci, z)?;
    let debiased = debias(mu_hat, cfg.alpha, cfg.q_e)?;
    let params = ContaminationParams::new(cfg.alpha, debiased.clamp(0.0, 1.0), cfg.q_e, n)?;
    Ok(TrustReport {
        label: label.to_string(),
        n,
        mu_hat,
        debiased,
        ci_p: ci_p_known(&mu, cfg.alpha, cfg.q_e)?,
        ci_p_bounded: ci_p_bounded(&mu, a, q)?,
        identification: identification_interval(mu_hat, a, q)?,
        ci_mu: mu,
        bound: total_error_bound(&params, Regime::Mixture, z),
    })
}

fn interval(i: &IntervalEstimate) -> String {
    format!("[{:.2}%, {:.2}%]", i.lo * 100.0, i.hi * 100.0)
}

pub fn render_trust_reports(reports: &[TrustReport]) -> String {
    let mut out = String::new();
    for r in reports {
        let _ = writeln!(out, "{} (n = {})", r.label, r.n);
        let _ = writeln!(out, "  observed      {:.2}%", r.mu_hat * 100.0);
        let _ = writeln!(out, "  de-biased     {:.2}%", r.debiased * 100.0);
        let _ = writeln!(out, "  CI mu         {} ({:?})", interval(&r.ci_mu), r.ci_mu.method);
        let _ = writeln!(out, "  CI p known    {}", interval(&r.ci_p));
        let _ = writeln!(out, "  CI p bounded  {}", interval(&r.ci_p_bounded));
        let _ = writeln!(out, "  region p      {}", interval(&r.identification));
        let _ = writeln!(
            out,
            "  error bound   {:.2}% = bias {:.2}% + random {:.2}%",
            r.bound.total * 100.0,
            r.bound.bias * 100.0,
            r.bound.half_width * 100.0
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn debias_alpha_one_is_domain_error() {
        assert!(matches!(debias(0.5, 1.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn degenerate_intervals() {
        let n = ci_mu(0.0, 50, CiMethod::Normal, Z_975).unwrap();
        assert_eq!((n.lo, n.hi), (0.0, 0.0));
        let w = ci_mu(1.0, 50, CiMethod::Wilson, Z_975).unwrap();
        assert!(w.lo > 0.0 && w.lo < 1.0 && w.hi <= 1.0);
        assert_eq!(ci_mu(0.5, 10, CiMethod::Auto, Z_975).unwrap().method, IntervalMethod::Wilson);
        assert_eq!(ci_mu(0.5, 1000, CiMethod::Auto, Z_975).unwrap().method, IntervalMethod::Normal);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let s = Stratum { weight: 0.5, alpha: 0.1, p: 0.5, q_e: 0.5, mu_hat: None };
        assert!(matches!(stratified_aggregate(&[s], 10), Err(Error::Argument(_))));
    }
}
