//! Weighted aggregation of BH and BC e-values.
//!
//! `e_i = w_BH,i e_BH,i + w_BC,i e_BC,i`, followed by e-BH. The adaptive
//! weights use leave-one-out thresholds computed on folded p-values
//! `min(p, 1 - p)`; see [`LooCounts`] for how they are obtained without
//! refitting the procedures `n^2` times.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_alpha, config, Error, Result};
use crate::mirror::{swapped_indicators, within, Plateaus, Upper};
use crate::procedures::{bc_threshold, ebh_select, step_up, threshold_evalues};
use crate::types::{EValueSet, PValueSet, RejectionSet, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HybridWeightMode {
    Averaged,
    Adaptive,
    FastAdaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HybridConfig {
    pub alpha_ebh: f64,
    pub alpha_bh: f64,
    pub alpha_bc: f64,
    pub mode: HybridWeightMode,
}

impl HybridConfig {
    /// Default calibration: `alpha / 2` for averaged weights, otherwise
    /// `alpha / (1 + alpha)` for both base procedures.
    pub fn new(alpha_ebh: f64, mode: HybridWeightMode) -> Result<Self> {
        check_alpha(alpha_ebh, "alpha")?;
        let a = match mode {
            HybridWeightMode::Averaged => alpha_ebh / 2.0,
            _ => alpha_ebh / (1.0 + alpha_ebh),
        };
        Ok(Self {
            alpha_ebh,
            alpha_bh: a,
            alpha_bc: a,
            mode,
        })
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha_ebh, "alpha_ebh")?;
        check_alpha(self.alpha_bh, "alpha_bh")?;
        check_alpha(self.alpha_bc, "alpha_bc")
    }
}

/// `1{p_i <= T_BH} / T_BH`, with `T_BH = k alpha / n` the right end of the
/// BH feasibility plateau.
pub fn bh_evalues(pvals: &PValueSet, alpha_bh: f64) -> Result<EValueSet> {
    check_alpha(alpha_bh, "alpha_bh")?;
    threshold_evalues(pvals.len(), &step_up(pvals.as_slice(), alpha_bh, 1.0))
}

/// `n 1{p_i <= T_BC} / (1 + #{p_j >= 1 - T_BC})`.
pub fn bc_evalues(pvals: &PValueSet, alpha_bc: f64) -> Result<EValueSet> {
    check_alpha(alpha_bc, "alpha_bc")?;
    threshold_evalues(pvals.len(), &bc_threshold(pvals.as_slice(), alpha_bc))
}

fn fold(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&x| x.min(1.0 - x)).collect()
}

/// BH plateau threshold on `q`; zero when infeasible.
fn bh_t(q: &[f64], alpha: f64) -> f64 {
    step_up(q, alpha, 1.0).threshold.unwrap_or(0.0)
}

/// Every leave-one-out threshold, recomputed from scratch.
///
/// * `t_bh_loo[i]`: BH on folded p-values with position `i` set to 0.
/// * `t_bc_loo[j]`: BC with `p_j` folded.
/// * `t_bc_loo2[j][i]`: BC with `p_j` folded and `p_i` set to 0.
///
/// Costs `O(n^3 log n)`; intended for small problems and for checking
/// [`LooCounts`].
#[derive(Debug, Clone, Serialize)]
pub struct LooThresholds {
    pub t_bh_loo: Vec<f64>,
    pub t_bc_loo: Vec<Option<f64>>,
    pub t_bc_loo2: Vec<Vec<Option<f64>>>,
}

impl LooThresholds {
    pub fn exhaustive(pvals: &PValueSet, alpha_bh: f64, alpha_bc: f64) -> Result<Self> {
        check_alpha(alpha_bh, "alpha_bh")?;
        check_alpha(alpha_bc, "alpha_bc")?;
        let p = pvals.as_slice();
        let n = p.len();
        let q = fold(p);
        let t_bh_loo = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut v = q.clone();
                v[i] = 0.0;
                bh_t(&v, alpha_bh)
            })
            .collect();
        let t_bc_loo: Vec<Option<f64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut v = p.to_vec();
                v[j] = q[j];
                bc_threshold(&v, alpha_bc).threshold
            })
            .collect();
        let t_bc_loo2: Vec<Vec<Option<f64>>> = (0..n)
            .into_par_iter()
            .map(|j| {
                (0..n)
                    .map(|i| {
                        if i == j {
                            return None;
                        }
                        let mut v = p.to_vec();
                        v[j] = q[j];
                        v[i] = 0.0;
                        bc_threshold(&v, alpha_bc).threshold
                    })
                    .collect()
            })
            .collect();
        // Thresholds are reported as grid points, so zeroing p_i can move the
        // reported value down past the vanished point p_i; only a grid point
        // of the modified data falling in between is a genuine decrease.
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                let (lo, hi) = (t_bc_loo2[j][i], t_bc_loo[j]);
                let shrank = match (lo, hi) {
                    (_, None) => false,
                    (None, Some(_)) => true,
                    (Some(lo), Some(hi)) => {
                        lo < hi
                            && (0..n).any(|k| {
                                let v = if k == i { 0.0 } else if k == j { q[j] } else { p[k] };
                                [v, 1.0 - v].iter().any(|&x| lo < x && x <= hi)
                            })
                    }
                };
                if shrank {
                    return Err(Error::Internal(format!(
                        "zeroing p_{i} shrank the leave-one-out BC threshold of {j}"
                    )));
                }
            }
        }
        Ok(Self {
            t_bh_loo,
            t_bc_loo,
            t_bc_loo2,
        })
    }

    /// Reduces the tables to the counts the weight formulas need.
    pub fn counts(&self, pvals: &PValueSet, alpha_bc: f64) -> LooCounts {
        let p = pvals.as_slice();
        let n = p.len();
        let hit = |j: usize, t: Option<f64>| t.is_some_and(|t| 1.0 - p[j] <= t);
        let pair_hits = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && hit(j, self.t_bc_loo2[j][i])).count())
            .collect();
        let single_hits = (0..n)
            .map(|i| (0..n).filter(|&j| j != i && hit(j, self.t_bc_loo[j])).count())
            .collect();
        LooCounts {
            t_bh_loo: self.t_bh_loo.clone(),
            pair_hits,
            single_hits,
            t_bc: bc_threshold(p, alpha_bc).threshold,
        }
    }
}

/// Leave-one-out summaries behind the adaptive weights.
///
/// * `pair_hits[i] = #{j != i : 1 - p_j <= T_BC,j,i}`
/// * `single_hits[i] = #{j != i : 1 - p_j <= T_BC,j}`
///
/// [`LooCounts::compute`] obtains these in `O(n log n)`. Folding `p_j > 0.5`
/// moves its rejection point into `[0, 0.5)` and its mirror point out, so
/// on `t >= 1 - p_j` the counts become `R + 1` and `S - 1`; zeroing `p_i`
/// adds one more rejection for `t < p_i` and, when `p_i > 0.5`, removes a
/// mirror hit for `t >= 1 - p_i`. Each indicator is therefore decided by
/// three scans of the base grid, and the sums over `j` reduce to binary
/// searches.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LooCounts {
    pub t_bh_loo: Vec<f64>,
    pub pair_hits: Vec<usize>,
    pub single_hits: Vec<usize>,
    /// Full-data BC threshold.
    pub t_bc: Option<f64>,
}

impl LooCounts {
    pub fn compute(pvals: &PValueSet, alpha_bh: f64, alpha_bc: f64) -> Result<Self> {
        check_alpha(alpha_bh, "alpha_bh")?;
        check_alpha(alpha_bc, "alpha_bc")?;
        let p = pvals.as_slice();
        let (pair_hits, single_hits, t_bc) = bc_loo_counts(p, alpha_bc);
        Ok(Self {
            t_bh_loo: bh_loo_thresholds(&fold(p), alpha_bh),
            pair_hits,
            single_hits,
            t_bc,
        })
    }
}

/// BH thresholds on `q` with each coordinate in turn set to 0.
///
/// With `r` the rank of `q_i`, the modified order statistics are `0`,
/// then `q_(k-1)` for `k <= r + 1`, then `q_(k)`.
fn bh_loo_thresholds(q: &[f64], alpha: f64) -> Vec<f64> {
    let n = q.len();
    let nf = n as f64;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| q[i]).collect();
    let bound = |k: usize| k as f64 * alpha / nf;
    // suffix[m]: largest k >= m (1-based) with q_(k) <= bound(k)
    let mut suffix = vec![0usize; n + 2];
    for k in (1..=n).rev() {
        suffix[k] = if suffix[k + 1] == 0 && sorted[k - 1] <= bound(k) {
            k
        } else {
            suffix[k + 1]
        };
    }
    // prefix[m]: largest k in 2..=m with q_(k-1) <= bound(k)
    let mut prefix = vec![0usize; n + 1];
    for k in 2..=n {
        prefix[k] = if sorted[k - 2] <= bound(k) { k } else { prefix[k - 1] };
    }
    let mut out = vec![0.0; n];
    for (rank, &i) in order.iter().enumerate() {
        let hi = if rank + 2 <= n { suffix[rank + 2] } else { 0 };
        let lo = prefix[(rank + 1).min(n)];
        let k = hi.max(lo).max(1);
        out[i] = bound(k);
    }
    out
}

fn bc_loo_counts(p: &[f64], alpha: f64) -> (Vec<usize>, Vec<usize>, Option<f64>) {
    let n = p.len();
    let s: Vec<f64> = p.iter().map(|&x| 1.0 - x).collect();
    let swappable: Vec<bool> = p.iter().map(|&x| x > 0.5).collect();
    let pl = Plateaus::build(p, &s, Upper::Below(0.5));
    let t_bc = pl
        .last_where(|r, m| within(1 + m, r, alpha))
        .map(|k| pl.t[k]);
    let base = swapped_indicators(&pl, &s, &swappable, alpha);
    // grid points still feasible with two extra rejections and one fewer mirror
    let f2: Vec<f64> = (0..pl.len())
        .filter(|&k| within(pl.mirrored[k], pl.rejected[k] + 2, alpha))
        .map(|k| pl.t[k])
        .collect();
    // ... and with two fewer mirrors
    let u = pl
        .last_where(|r, m| within(m.saturating_sub(1), r + 2, alpha))
        .map(|k| pl.t[k]);

    let mut t_star: Vec<Option<f64>> = vec![None; n];
    let mut in_c = vec![false; n];
    let mut n_a = 0usize;
    let mut b_vals = Vec::new();
    for j in 0..n {
        if !swappable[j] {
            continue;
        }
        if base[j] {
            n_a += 1;
            continue;
        }
        let k = f2.partition_point(|&t| t < s[j]);
        if k < f2.len() {
            t_star[j] = Some(f2[k]);
            b_vals.push(f2[k]);
        } else if u.is_some_and(|u| u >= s[j]) {
            in_c[j] = true;
        }
    }
    b_vals.sort_by(f64::total_cmp);
    let n_c = in_c.iter().filter(|&&c| c).count();

    let mut pair = vec![0usize; n];
    let mut single = vec![0usize; n];
    for i in 0..n {
        let own_a = usize::from(base[i]);
        single[i] = n_a - own_a;
        let mut c = n_a - own_a;
        c += b_vals.partition_point(|&t| t < p[i]);
        if t_star[i].is_some() {
            c -= 1;
        }
        if swappable[i] && u.is_some_and(|u| u >= s[i]) {
            c += n_c - usize::from(in_c[i]);
        }
        debug_assert!(c >= single[i]);
        pair[i] = c;
    }
    (pair, single, t_bc)
}

/// Adaptive weights `(w_BH, w_BC)`.
///
/// `w_BH,i = T_BH,i / (T_BH,i + (1 + pair_hits_i) / n)` and
/// `w_BC,i = D_i / (max_j T_BH,j + D_i)` with
/// `D_i = (1 + #{j != i : 1 - p_j <= T_BC}) / n`.
pub fn adaptive_weights(pvals: &PValueSet, loo: &LooCounts) -> Result<(WeightVector, WeightVector)> {
    weights_from(pvals, loo, &loo.pair_hits)
}

/// As [`adaptive_weights`] with `T_BC,j,i` replaced by `T_BC,j`.
pub fn fast_adaptive_weights(
    pvals: &PValueSet,
    loo: &LooCounts,
) -> Result<(WeightVector, WeightVector)> {
    weights_from(pvals, loo, &loo.single_hits)
}

fn weights_from(
    pvals: &PValueSet,
    loo: &LooCounts,
    hits: &[usize],
) -> Result<(WeightVector, WeightVector)> {
    let p = pvals.as_slice();
    let n = p.len();
    if loo.t_bh_loo.len() != n || hits.len() != n {
        return config("leave-one-out summaries do not match the p-values");
    }
    let nf = n as f64;
    let w_bh = (0..n)
        .map(|i| {
            let t = loo.t_bh_loo[i];
            if t > 0.0 {
                t / (t + (1 + hits[i]) as f64 / nf)
            } else {
                0.0
            }
        })
        .collect();
    let t_max = loo.t_bh_loo.iter().copied().fold(0.0, f64::max);
    let mirror_hit = |j: usize| loo.t_bc.is_some_and(|t| 1.0 - p[j] <= t);
    let total = (0..n).filter(|&j| mirror_hit(j)).count();
    let w_bc = (0..n)
        .map(|i| {
            let d = (1 + total - usize::from(mirror_hit(i))) as f64 / nf;
            d / (t_max + d)
        })
        .collect();
    Ok((WeightVector::new(w_bh)?, WeightVector::new(w_bc)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct HybridOutcome {
    pub e_bh: EValueSet,
    pub e_bc: EValueSet,
    pub w_bh: WeightVector,
    pub w_bc: WeightVector,
    pub evalues: EValueSet,
    pub rejected: RejectionSet,
}

pub fn run_hybrid(pvals: &PValueSet, cfg: &HybridConfig) -> Result<HybridOutcome> {
    cfg.validate()?;
    let n = pvals.len();
    let e_bh = bh_evalues(pvals, cfg.alpha_bh)?;
    let e_bc = bc_evalues(pvals, cfg.alpha_bc)?;
    let (w_bh, w_bc) = match cfg.mode {
        HybridWeightMode::Averaged => (WeightVector::constant(n, 0.5), WeightVector::constant(n, 0.5)),
        HybridWeightMode::Adaptive => {
            adaptive_weights(pvals, &LooCounts::compute(pvals, cfg.alpha_bh, cfg.alpha_bc)?)?
        }
        HybridWeightMode::FastAdaptive => {
            fast_adaptive_weights(pvals, &LooCounts::compute(pvals, cfg.alpha_bh, cfg.alpha_bc)?)?
        }
    };
    let evalues = EValueSet::weighted_sum(&e_bh, w_bh.as_slice(), &e_bc, w_bc.as_slice())?;
    let rejected = ebh_select(&evalues, cfg.alpha_ebh)?;
    Ok(HybridOutcome {
        e_bh,
        e_bc,
        w_bh,
        w_bc,
        evalues,
        rejected,
    })
}
