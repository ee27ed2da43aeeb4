//! Threshold procedures of the form
//! `T = sup { t : m(t) / max(1, sum_i R_i(t)) <= alpha }`,
//! their e-value conversion, and the e-BH selector.
//!
//! | kind   | m(t)                     | R_i(t)              | range          |
//! |--------|--------------------------|---------------------|----------------|
//! | BH     | n t                      | 1{p_i <= t}         | [0, 1]         |
//! | Storey | n pi0 t                  | 1{p_i <= t}         | [0, 1]         |
//! | BC     | 1 + #{p_j >= 1 - t}      | 1{p_i <= t}         | [0, 0.5)       |
//! | FBC    | 1 + #{phi_j(1-p_j) <= t} | 1{phi_i(p_i) <= t}  | [0, t_upper]   |

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{check_alpha, config, input, Error, Result};
use crate::mirror::{mirror_threshold, Upper};
use crate::types::{EValueSet, PValueSet, RejectionSet};

/// A monotone nondecreasing map `p -> phi(p)` used by flexible BC.
pub trait RejectionRule: Send + Sync {
    fn phi(&self, p: f64) -> f64;
}

/// Adapter turning a closure into a [`RejectionRule`].
pub struct FnRule<F>(pub F);

impl<F: Fn(f64) -> f64 + Send + Sync> RejectionRule for FnRule<F> {
    fn phi(&self, p: f64) -> f64 {
        (self.0)(p)
    }
}

pub type SharedRule = Arc<dyn RejectionRule>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ProcedureKind {
    Bh,
    Storey,
    Bc,
    Fbc,
}

/// A fully parameterised threshold procedure.
#[derive(Clone)]
pub struct ProcedureSpec {
    pub kind: ProcedureKind,
    pub alpha: f64,
    pub storey_lambda: f64,
    pub rules: Vec<SharedRule>,
    pub t_upper: f64,
}

impl fmt::Debug for ProcedureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ProcedureSpec")
            .field("kind", &self.kind)
            .field("alpha", &self.alpha)
            .field("storey_lambda", &self.storey_lambda)
            .field("rules", &self.rules.len())
            .field("t_upper", &self.t_upper)
            .finish()
    }
}

/// Probe points for the monotonicity check on user-supplied rules.
const MONOTONE_PROBES: usize = 64;

impl ProcedureSpec {
    pub fn bh(alpha: f64) -> Self {
        Self::plain(ProcedureKind::Bh, alpha)
    }

    pub fn storey(alpha: f64, lambda: f64) -> Self {
        Self {
            storey_lambda: lambda,
            ..Self::plain(ProcedureKind::Storey, alpha)
        }
    }

    pub fn bc(alpha: f64) -> Self {
        Self::plain(ProcedureKind::Bc, alpha)
    }

    pub fn fbc(alpha: f64, rules: Vec<SharedRule>, t_upper: f64) -> Self {
        Self {
            rules,
            t_upper,
            ..Self::plain(ProcedureKind::Fbc, alpha)
        }
    }

    /// Flexible BC with the largest admissible upper bound,
    /// `(1 - 1e-9) * min_i phi_i(0.5)`.
    pub fn fbc_auto(alpha: f64, rules: Vec<SharedRule>) -> Self {
        let t_upper = fbc_default_upper(&rules);
        Self::fbc(alpha, rules, t_upper)
    }

    fn plain(kind: ProcedureKind, alpha: f64) -> Self {
        Self {
            kind,
            alpha,
            storey_lambda: 0.5,
            rules: Vec::new(),
            t_upper: 0.0,
        }
    }

    /// Checks the procedure parameters against a problem of size `n`.
    pub fn validate(&self, n: usize) -> Result<()> {
        check_alpha(self.alpha, "alpha")?;
        match self.kind {
            ProcedureKind::Storey => check_lambda(self.storey_lambda),
            ProcedureKind::Fbc => {
                if self.rules.len() != n {
                    return config(format!(
                        "flexible BC needs one rejection rule per hypothesis ({} rules, {n} p-values)",
                        self.rules.len()
                    ));
                }
                for (i, rule) in self.rules.iter().enumerate() {
                    check_monotone(rule.as_ref(), i)?;
                }
                let min_half = min_phi_half(&self.rules);
                if !(self.t_upper.is_finite() && self.t_upper < min_half) {
                    return config(format!(
                        "t_upper = {} must be below min_i phi_i(0.5) = {min_half}",
                        self.t_upper
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

pub(crate) fn min_phi_half(rules: &[SharedRule]) -> f64 {
    rules.iter().map(|r| r.phi(0.5)).fold(f64::INFINITY, f64::min)
}

pub(crate) fn fbc_default_upper(rules: &[SharedRule]) -> f64 {
    (1.0 - 1e-9) * min_phi_half(rules)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda.is_finite() && (0.0..1.0).contains(&lambda) {
        Ok(())
    } else {
        config(format!("storey lambda must lie in [0, 1), got {lambda}"))
    }
}

fn check_monotone(rule: &dyn RejectionRule, i: usize) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for k in 0..=MONOTONE_PROBES {
        let v = rule.phi(k as f64 / MONOTONE_PROBES as f64);
        if !v.is_finite() {
            return config(format!("rejection rule {i} is not finite"));
        }
        if v < prev {
            return config(format!("rejection rule {i} is not monotone nondecreasing"));
        }
        prev = v;
    }
    Ok(())
}

/// Outcome of a threshold search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    /// `None` when no admissible threshold is feasible.
    pub threshold: Option<f64>,
    /// `m(T)`; zero when infeasible.
    pub m_at_t: f64,
    pub rejected: RejectionSet,
}

impl ThresholdResult {
    pub fn infeasible() -> Self {
        Self {
            threshold: None,
            m_at_t: 0.0,
            rejected: RejectionSet::empty(),
        }
    }

    pub fn feasible(&self) -> bool {
        self.threshold.is_some()
    }
}

/// `(1 + n - #{p_i <= lambda}) / ((1 - lambda) n)`.
pub fn storey_pi0(pvals: &PValueSet, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let n = pvals.len() as f64;
    let r = pvals.as_slice().iter().filter(|&&p| p <= lambda).count() as f64;
    Ok((1.0 + n - r) / ((1.0 - lambda) * n))
}

pub fn solve_threshold(pvals: &PValueSet, spec: &ProcedureSpec) -> Result<ThresholdResult> {
    spec.validate(pvals.len())?;
    let p = pvals.as_slice();
    Ok(match spec.kind {
        ProcedureKind::Bh => step_up(p, spec.alpha, 1.0),
        ProcedureKind::Storey => step_up(p, spec.alpha, storey_pi0(pvals, spec.storey_lambda)?),
        ProcedureKind::Bc => bc_threshold(p, spec.alpha),
        ProcedureKind::Fbc => {
            let rej: Vec<f64> = p.iter().zip(&spec.rules).map(|(&x, r)| r.phi(x)).collect();
            let mir: Vec<f64> = p.iter().zip(&spec.rules).map(|(&x, r)| r.phi(1.0 - x)).collect();
            mirror_result(&rej, &mir, spec.alpha, Upper::AtMost(spec.t_upper))
        }
    })
}

/// BC threshold on raw p-values. Hypotheses are rejected at `p_i <= T`
/// and mirrored at `1 - p_i <= T`, with `T` restricted to `[0, 0.5)`.
pub(crate) fn bc_threshold(p: &[f64], alpha: f64) -> ThresholdResult {
    let mir: Vec<f64> = p.iter().map(|&x| 1.0 - x).collect();
    mirror_result(p, &mir, alpha, Upper::Below(0.5))
}

pub(crate) fn mirror_result(rej: &[f64], mir: &[f64], alpha: f64, upper: Upper) -> ThresholdResult {
    match mirror_threshold(rej, mir, alpha, upper) {
        None => ThresholdResult::infeasible(),
        Some((t, _, s)) => {
            let idx = rej
                .iter()
                .enumerate()
                .filter(|(_, &r)| r <= t)
                .map(|(i, _)| i)
                .collect();
            ThresholdResult {
                threshold: Some(t),
                m_at_t: (1 + s) as f64,
                rejected: RejectionSet::from_sorted(idx),
            }
        }
    }
}

/// BH-type step-up with `m(t) = n pi0 t`.
///
/// The reported threshold is the right end of the feasibility plateau,
/// `k alpha / (n pi0)` capped at 1, so that `m(T) = k alpha` whenever the
/// cap is inactive.
pub(crate) fn step_up(p: &[f64], alpha: f64, pi0: f64) -> ThresholdResult {
    let n = p.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let scale = n as f64 * pi0;
    let k = (1..=n)
        .rev()
        .find(|&k| p[order[k - 1]] <= k as f64 * alpha / scale)
        .unwrap_or(0);
    if k == 0 {
        return ThresholdResult::infeasible();
    }
    let m_plateau = k as f64 * alpha;
    let (t, m) = if m_plateau > scale {
        (1.0, scale)
    } else {
        (m_plateau / scale, m_plateau)
    };
    let cut = p[order[k - 1]];
    let mut idx: Vec<usize> = order[..k].to_vec();
    idx.sort_unstable();
    ThresholdResult {
        threshold: Some(t.max(cut)),
        m_at_t: m,
        rejected: RejectionSet::from_sorted(idx),
    }
}

/// `e_i = n R_i(T) / m(T)`; all zeros when the result is infeasible.
pub fn procedure_to_evalues(
    pvals: &PValueSet,
    spec: &ProcedureSpec,
    result: &ThresholdResult,
) -> Result<EValueSet> {
    spec.validate(pvals.len())?;
    threshold_evalues(pvals.len(), result)
}

pub(crate) fn threshold_evalues(n: usize, result: &ThresholdResult) -> Result<EValueSet> {
    let mut e = vec![0.0; n];
    if !result.feasible() {
        return Ok(EValueSet::zeros(n));
    }
    if result.m_at_t <= 0.0 {
        return Err(Error::Internal("feasible threshold with m(T) = 0".into()));
    }
    let v = n as f64 / result.m_at_t;
    for &i in result.rejected.indices() {
        e[i] = v;
    }
    EValueSet::new(e)
}

/// e-BH: reject the `k` largest e-values, `k = max { i : e_(i) >= n / (i alpha) }`.
/// Every hypothesis tied with the `k`-th largest value is rejected too.
pub fn ebh_select(evals: &EValueSet, alpha: f64) -> Result<RejectionSet> {
    check_alpha(alpha, "alpha")?;
    let e = evals.as_slice();
    let n = e.len();
    let mut sorted: Vec<f64> = e.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let nf = n as f64;
    let k = (1..=n)
        .rev()
        .find(|&i| sorted[i - 1] >= nf / (i as f64 * alpha))
        .unwrap_or(0);
    if k == 0 {
        return Ok(RejectionSet::empty());
    }
    let cut = sorted[k - 1];
    Ok(RejectionSet::from_sorted(
        (0..n).filter(|&i| e[i] >= cut).collect(),
    ))
}

/// False discovery proportion and power of a rejection set.
///
/// `non_null[i]` is true when hypothesis `i` is a genuine signal.
pub fn fdp_power(rejected: &RejectionSet, non_null: &[bool]) -> Result<(f64, f64)> {
    let n = non_null.len();
    if rejected.indices().last().is_some_and(|&i| i >= n) {
        return input(format!(
            "rejection index out of range for a truth vector of length {n}"
        ));
    }
    let true_rej = rejected.indices().iter().filter(|&&i| non_null[i]).count();
    let false_rej = rejected.len() - true_rej;
    let signals = non_null.iter().filter(|&&t| t).count();
    Ok((
        false_rej as f64 / rejected.len().max(1) as f64,
        true_rej as f64 / signals.max(1) as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn pv(v: &[f64]) -> PValueSet {
        PValueSet::new(v.to_vec()).unwrap()
    }

    #[test]
    fn bh_small_example() {
        let p = pv(&[0.01, 0.02, 0.04, 0.9]);
        let r = solve_threshold(&p, &ProcedureSpec::bh(0.05)).unwrap();
        assert_eq!(r.rejected.indices(), &[0, 1]);
        assert_relative_eq!(r.threshold.unwrap(), 0.025);
        let e = procedure_to_evalues(&p, &ProcedureSpec::bh(0.05), &r).unwrap();
        assert_relative_eq!(e.as_slice()[0], 40.0, epsilon = 1e-9);
        assert_eq!(e.as_slice()[2], 0.0);
        assert_eq!(ebh_select(&e, 0.05).unwrap(), r.rejected);
    }

    #[test]
    fn bc_small_example() {
        let p = pv(&[0.01, 0.02, 0.03, 0.9]);
        let spec = ProcedureSpec::bc(0.34);
        let r = solve_threshold(&p, &spec).unwrap();
        assert_eq!(r.rejected.indices(), &[0, 1, 2]);
        assert_eq!(r.threshold, Some(0.03));
        assert_eq!(r.m_at_t, 1.0);
        let e = procedure_to_evalues(&p, &spec, &r).unwrap();
        assert_eq!(e.as_slice(), &[4.0, 4.0, 4.0, 0.0]);
    }

    #[test]
    fn all_ones_infeasible_for_every_kind() {
        let p = pv(&[1.0, 1.0, 1.0]);
        let rule: SharedRule = Arc::new(FnRule(|x: f64| 0.5 * x + 0.1));
        let specs = [
            ProcedureSpec::bh(0.05),
            ProcedureSpec::storey(0.05, 0.5),
            ProcedureSpec::bc(0.05),
            ProcedureSpec::fbc_auto(0.05, vec![rule.clone(), rule.clone(), rule]),
        ];
        for s in &specs {
            let r = solve_threshold(&p, s).unwrap();
            assert!(!r.feasible(), "{:?}", s.kind);
            assert!(r.rejected.is_empty());
            let e = procedure_to_evalues(&p, s, &r).unwrap();
            assert!(e.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn storey_examples() {
        assert_relative_eq!(storey_pi0(&pv(&[0.1, 0.2, 0.6, 0.9]), 0.5).unwrap(), 1.5);
        assert_relative_eq!(storey_pi0(&pv(&[0.0, 0.9]), 0.5).unwrap(), 2.0);
        assert_relative_eq!(storey_pi0(&pv(&[0.3, 0.9, 0.4]), 0.0).unwrap(), 4.0 / 3.0);
        assert!(matches!(storey_pi0(&pv(&[0.3]), 1.0), Err(Error::Config(_))));
    }

    #[test]
    fn ebh_examples() {
        let e = EValueSet::new(vec![30.0, 10.0, 2.0, 0.0]).unwrap();
        assert_eq!(ebh_select(&e, 0.2).unwrap().indices(), &[0, 1]);
        assert!(ebh_select(&EValueSet::zeros(5), 0.1).unwrap().is_empty());
        let mut v = vec![0.0; 1100];
        v[..20].fill(1000.0);
        v[20..40].fill(100.0);
        assert!(ebh_select(&EValueSet::new(v).unwrap(), 0.05).unwrap().is_empty());
    }

    #[test]
    fn ebh_rejects_ties_at_cutoff() {
        let e = EValueSet::new(vec![10.0, 10.0, 10.0, 0.0]).unwrap();
        assert_eq!(ebh_select(&e, 0.2).unwrap().indices(), &[0, 1, 2]);
    }

    #[test]
    fn fdp_power_examples() {
        let truth = [true, false, false, false];
        let r = RejectionSet::from_indices(vec![0, 1], 4).unwrap();
        assert_eq!(fdp_power(&r, &truth).unwrap(), (0.5, 1.0));
        assert_eq!(fdp_power(&RejectionSet::empty(), &truth).unwrap(), (0.0, 0.0));
        let r = RejectionSet::from_indices(vec![0], 3).unwrap();
        assert_eq!(fdp_power(&r, &[false; 3]).unwrap(), (1.0, 0.0));
        let r = RejectionSet::from_indices(vec![3], 4).unwrap();
        assert!(fdp_power(&r, &[false; 3]).is_err());
    }

    #[test]
    fn spec_validation() {
        let p = pv(&[0.1, 0.2]);
        assert!(solve_threshold(&p, &ProcedureSpec::bh(0.0)).is_err());
        assert!(solve_threshold(&p, &ProcedureSpec::bh(1.0)).is_err());
        assert!(solve_threshold(&p, &ProcedureSpec::storey(0.1, 1.0)).is_err());
        let down: SharedRule = Arc::new(FnRule(|x: f64| 1.0 - x));
        let spec = ProcedureSpec::fbc(0.1, vec![down.clone(), down], 0.1);
        assert!(matches!(solve_threshold(&p, &spec), Err(Error::Config(_))));
        let up: SharedRule = Arc::new(FnRule(|x: f64| x));
        let spec = ProcedureSpec::fbc(0.1, vec![up.clone(), up], 0.5);
        assert!(matches!(solve_threshold(&p, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn storey_cap_at_one() {
        let p = pv(&[0.001, 0.002, 0.003]);
        let r = solve_threshold(&p, &ProcedureSpec::storey(0.9, 0.5)).unwrap();
        assert_eq!(r.rejected.len(), 3);
        assert!(r.threshold.unwrap() <= 1.0);
        assert!(r.m_at_t / 3.0 <= 0.9);
    }

    #[test]
    fn bc_handles_zero_and_one() {
        // p = 0 is rejected on the plateau starting at t = 0; p = 1 is a
        // mirror hit from the same point on.
        let p = pv(&[0.0, 0.0, 0.0, 1.0]);
        let r = solve_threshold(&p, &ProcedureSpec::bc(0.7)).unwrap();
        assert_eq!(r.threshold, Some(0.0));
        assert_eq!(r.rejected.indices(), &[0, 1, 2]);
        assert_eq!(r.m_at_t, 2.0);
    }
}
