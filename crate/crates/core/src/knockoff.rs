//! Knockoff statistics as e-values, and the two-family combination.

use serde::Serialize;

use crate::error::{check_alpha, config, input, Result};
use crate::mirror::within;
use crate::procedures::{ebh_select, threshold_evalues, ThresholdResult};
use crate::types::{EValueSet, RejectionSet};

/// Signed feature statistics `W_j`; large positive values indicate signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnockoffStatSet(Vec<f64>);

impl KnockoffStatSet {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return input("knockoff statistics are empty");
        }
        if let Some((j, v)) = w.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return input(format!("knockoff statistic {j} is not finite: {v}"));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Smallest `t` among the nonzero `|W_j|` with
/// `(1 + #{W_j <= -t}) / max(1, #{W_j >= t}) <= alpha`.
pub fn knockoff_threshold(stats: &KnockoffStatSet, alpha: f64) -> Result<ThresholdResult> {
    check_alpha(alpha, "alpha")?;
    let w = stats.as_slice();
    let mut sorted = w.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut cand: Vec<f64> = w.iter().filter(|&&v| v != 0.0).map(|v| v.abs()).collect();
    cand.sort_by(f64::total_cmp);
    cand.dedup();
    let counts = |t: f64| {
        let neg = sorted.partition_point(|&v| v <= -t);
        let pos = sorted.len() - sorted.partition_point(|&v| v < t);
        (neg, pos)
    };
    let hit = cand.into_iter().find(|&t| {
        let (neg, pos) = counts(t);
        within(1 + neg, pos, alpha)
    });
    Ok(match hit {
        None => ThresholdResult::infeasible(),
        Some(t) => {
            let (neg, _) = counts(t);
            ThresholdResult {
                threshold: Some(t),
                m_at_t: (1 + neg) as f64,
                rejected: RejectionSet::from_sorted(
                    (0..w.len()).filter(|&j| w[j] >= t).collect(),
                ),
            }
        }
    })
}

/// `e_j = p 1{W_j >= T} / (1 + #{W_j <= -T})`.
pub fn knockoff_evalues(stats: &KnockoffStatSet, alpha: f64) -> Result<EValueSet> {
    threshold_evalues(stats.len(), &knockoff_threshold(stats, alpha)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct KnockoffCombination {
    pub threshold_a: Option<f64>,
    pub threshold_b: Option<f64>,
    pub evalues: EValueSet,
    pub rejected: RejectionSet,
}

/// `e = w1 e_a + w2 e_b` with each family converted at `alpha / 2`, then
/// e-BH at `alpha`.
pub fn combine_and_select(
    a: &KnockoffStatSet,
    b: &KnockoffStatSet,
    alpha_ebh: f64,
    w1: f64,
    w2: f64,
) -> Result<KnockoffCombination> {
    check_alpha(alpha_ebh, "alpha")?;
    if !(w1 >= 0.0 && w2 >= 0.0 && w1 + w2 <= 1.0) {
        return config(format!(
            "combination weights must be nonnegative with sum at most 1, got {w1} and {w2}"
        ));
    }
    if a.len() != b.len() {
        return input(format!(
            "statistic families differ in length ({} vs {})",
            a.len(),
            b.len()
        ));
    }
    let alpha_ko = alpha_ebh / 2.0;
    let ta = knockoff_threshold(a, alpha_ko)?;
    let tb = knockoff_threshold(b, alpha_ko)?;
    let ea = threshold_evalues(a.len(), &ta)?;
    let eb = threshold_evalues(b.len(), &tb)?;
    let n = a.len();
    let evalues = EValueSet::weighted_sum(&ea, &vec![w1; n], &eb, &vec![w2; n])?;
    let rejected = ebh_select(&evalues, alpha_ebh)?;
    Ok(KnockoffCombination {
        threshold_a: ta.threshold,
        threshold_b: tb.threshold,
        evalues,
        rejected,
    })
}
