//! Structure-adaptive testing: cross-fitted local-fdr rules, group-wise
//! flexible BC, weighted e-values and e-BH.
//!
//! Hypotheses are split into folds. Each fold's rejection rules come from a
//! working model fitted on the other folds only, so within a fold the rules
//! are independent of the fold's own p-values.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_alpha, config, input, Result};
use crate::groups::GroupPartition;
use crate::lfdr::{fit_lfdr_em, CovariateSet, EmConfig, LfdrModel, LfdrRule};
use crate::mirror::{swapped_indicators, Plateaus, Upper};
use crate::procedures::{ebh_select, mirror_result, RejectionRule, ThresholdResult};
use crate::types::{EValueSet, PValueSet, RejectionSet, WeightVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StructureWeightMode {
    Unit,
    Cheap,
    Full,
}

/// Replacement values tried for `p_i` by the full weights: `k / 22`,
/// `k = 0..=22`, plus the observed `p_i`.
pub const FULL_GRID_POINTS: usize = 23;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureConfig {
    pub alpha_ebh: f64,
    pub alpha_fbc: f64,
    pub mode: StructureWeightMode,
    pub folds: usize,
    pub seed: u64,
    pub em: EmConfig,
}

impl StructureConfig {
    /// Two folds, cheap weights and `alpha_fbc = alpha / (1 + alpha)`.
    pub fn new(alpha_ebh: f64, seed: u64) -> Result<Self> {
        check_alpha(alpha_ebh, "alpha")?;
        Ok(Self {
            alpha_ebh,
            alpha_fbc: alpha_ebh / (1.0 + alpha_ebh),
            mode: StructureWeightMode::Cheap,
            folds: 2,
            seed,
            em: EmConfig::default(),
        })
    }
}

/// Equal-size random split into `folds` groups.
pub fn random_folds(n: usize, folds: usize, seed: u64) -> Result<GroupPartition> {
    if folds == 0 || folds > n {
        return config(format!("cannot split {n} hypotheses into {folds} folds"));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        labels[i] = pos % folds;
    }
    GroupPartition::from_labels(labels)
}

/// One model per fold, each fitted on the complement of its fold.
#[derive(Debug, Clone, Serialize)]
pub struct CrossFit {
    pub models: Vec<LfdrModel>,
    pub rules: Vec<LfdrRule>,
}

fn complement(part: &GroupPartition, g: usize) -> Vec<usize> {
    (0..part.len()).filter(|&i| part.label(i) != g).collect()
}

fn fit_on(p: &[f64], x: &CovariateSet, idx: &[usize], em: &EmConfig) -> Result<LfdrModel> {
    let sub: Vec<f64> = idx.iter().map(|&i| p[i]).collect();
    fit_lfdr_em(&sub, &x.subset(idx), em)
}

pub fn cross_fit(
    pvals: &PValueSet,
    covars: &CovariateSet,
    part: &GroupPartition,
    em: &EmConfig,
) -> Result<CrossFit> {
    let n = pvals.len();
    part.check_len(n)?;
    if covars.len() != n {
        return input("covariate rows do not match the number of p-values");
    }
    if part.n_groups() < 2 {
        return config("cross-fitting needs at least two folds");
    }
    let p = pvals.as_slice();
    let models = (0..part.n_groups())
        .into_par_iter()
        .map(|g| fit_on(p, covars, &complement(part, g), em))
        .collect::<Result<Vec<_>>>()?;
    let rules = (0..n)
        .map(|i| models[part.label(i)].rule(covars.row(i)))
        .collect();
    Ok(CrossFit { models, rules })
}

/// Flexible-BC result for one fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FbcGroup {
    pub result: ThresholdResult,
    pub t_upper: f64,
}

fn fold_points<R: RejectionRule>(p: &[f64], rules: &[R], idx: &[usize]) -> (Vec<f64>, Vec<f64>, f64) {
    let rej = idx.iter().map(|&i| rules[i].phi(p[i])).collect();
    let mir = idx.iter().map(|&i| rules[i].phi(1.0 - p[i])).collect();
    let min_half = idx.iter().map(|&i| rules[i].phi(0.5)).fold(f64::INFINITY, f64::min);
    (rej, mir, (1.0 - 1e-9) * min_half)
}

/// Flexible BC in each fold with `t_upper = (1 - 1e-9) min_i phi_i(0.5)`.
pub fn fbc_group_threshold<R: RejectionRule>(
    pvals: &PValueSet,
    part: &GroupPartition,
    rules: &[R],
    alpha_fbc: f64,
) -> Result<Vec<FbcGroup>> {
    check_alpha(alpha_fbc, "alpha_fbc")?;
    part.check_len(pvals.len())?;
    if rules.len() != pvals.len() {
        return input("one rejection rule per hypothesis is required");
    }
    let p = pvals.as_slice();
    Ok((0..part.n_groups())
        .map(|g| {
            let idx = part.members(g);
            let (rej, mir, t_upper) = fold_points(p, rules, idx);
            let r = mirror_result(&rej, &mir, alpha_fbc, Upper::AtMost(t_upper));
            let global = r.rejected.indices().iter().map(|&k| idx[k]).collect();
            FbcGroup {
                result: ThresholdResult {
                    rejected: RejectionSet::from_sorted(global),
                    ..r
                },
                t_upper,
            }
        })
        .collect())
}

/// `#{j in idx : phi_j(1 - p_j) <= T_j}` with `T_j` the fold threshold
/// after folding `p_j`.
fn loo_hits<R: RejectionRule>(p: &[f64], rules: &[R], idx: &[usize], alpha: f64) -> usize {
    let (rej, mir, t_upper) = fold_points(p, rules, idx);
    let swappable: Vec<bool> = idx.iter().map(|&i| p[i] > 0.5).collect();
    let pl = Plateaus::build(&rej, &mir, Upper::AtMost(t_upper));
    swapped_indicators(&pl, &mir, &swappable, alpha)
        .into_iter()
        .filter(|&b| b)
        .count()
}

/// Data needed to refit fold models for the full weights.
pub struct RefitContext<'a> {
    pub covars: &'a CovariateSet,
    pub em: &'a EmConfig,
}

pub fn structure_weights(
    pvals: &PValueSet,
    part: &GroupPartition,
    rules: &[LfdrRule],
    thresholds: &[FbcGroup],
    alpha_fbc: f64,
    mode: StructureWeightMode,
    refit: Option<&RefitContext<'_>>,
) -> Result<WeightVector> {
    check_alpha(alpha_fbc, "alpha_fbc")?;
    let n = pvals.len();
    part.check_len(n)?;
    if rules.len() != n || thresholds.len() != part.n_groups() {
        return input("rules or thresholds do not match the partition");
    }
    if mode == StructureWeightMode::Unit {
        return Ok(WeightVector::constant(n, 1.0));
    }
    let p = pvals.as_slice();
    let own_hit = |i: usize| {
        thresholds[part.label(i)]
            .result
            .threshold
            .is_some_and(|t| rules[i].phi(1.0 - p[i]) <= t)
    };
    let own: Vec<usize> = (0..part.n_groups())
        .map(|g| part.members(g).iter().filter(|&&j| own_hit(j)).count())
        .collect();
    let numer = |i: usize| (1 + own[part.label(i)] - usize::from(own_hit(i))) as f64;
    let cross: Vec<f64> = match mode {
        StructureWeightMode::Cheap => {
            let hits: Vec<usize> = (0..part.n_groups())
                .map(|g| loo_hits(p, rules, part.members(g), alpha_fbc))
                .collect();
            let total: usize = hits.iter().sum();
            (0..n).map(|i| (total - hits[part.label(i)]) as f64).collect()
        }
        StructureWeightMode::Full => {
            let ctx = refit.ok_or_else(|| {
                crate::Error::Config("full weights need covariates and an EM configuration".into())
            })?;
            (0..n)
                .into_par_iter()
                .map(|i| full_cross_count(p, part, ctx, alpha_fbc, i))
                .collect::<Result<Vec<f64>>>()?
        }
        StructureWeightMode::Unit => unreachable!(),
    };
    let w = (0..n)
        .map(|i| {
            let a = numer(i);
            (n as f64 / part.size(part.label(i)) as f64) * a / (a + cross[i])
        })
        .collect();
    WeightVector::new(w)
}

/// `max_v sum_{g' != g} #{j in g' : phi^v_j(1 - p_j) <= T^v_{g',j}}` where the
/// superscript marks a refit with `p_i` replaced by `v`.
fn full_cross_count(
    p: &[f64],
    part: &GroupPartition,
    ctx: &RefitContext<'_>,
    alpha: f64,
    i: usize,
) -> Result<f64> {
    let g = part.label(i);
    let mut grid: Vec<f64> = (0..FULL_GRID_POINTS)
        .map(|k| k as f64 / (FULL_GRID_POINTS - 1) as f64)
        .collect();
    grid.push(p[i]);
    let mut best = 0usize;
    let mut q = p.to_vec();
    for &v in &grid {
        q[i] = v;
        let mut total = 0;
        for h in (0..part.n_groups()).filter(|&h| h != g) {
            let model = fit_on(&q, ctx.covars, &complement(part, h), ctx.em)?;
            let idx = part.members(h);
            let mut rules = vec![LfdrRule { pi: 1.0, kappa: 0.0 }; p.len()];
            for &j in idx {
                rules[j] = model.rule(ctx.covars.row(j));
            }
            total += loo_hits(p, &rules, idx, alpha);
        }
        best = best.max(total);
    }
    Ok(best as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct StructureOutcome {
    pub folds: GroupPartition,
    pub fit: CrossFit,
    pub thresholds: Vec<FbcGroup>,
    pub weights: WeightVector,
    pub evalues: EValueSet,
    pub rejected: RejectionSet,
}

/// `e_i = n_g w_i 1{phi_i(p_i) <= T_g} / (1 + #{j in g : phi_j(1 - p_j) <= T_g})`.
pub fn structure_evalues(n: usize, part: &GroupPartition, thresholds: &[FbcGroup], w: &WeightVector) -> Result<EValueSet> {
    let mut e = vec![0.0; n];
    for (g, th) in thresholds.iter().enumerate() {
        if th.result.feasible() {
            let base = part.size(g) as f64 / th.result.m_at_t;
            for &i in th.result.rejected.indices() {
                e[i] = base * w.as_slice()[i];
            }
        }
    }
    EValueSet::new(e)
}

pub fn run_structure_adaptive(
    pvals: &PValueSet,
    covars: &CovariateSet,
    cfg: &StructureConfig,
) -> Result<StructureOutcome> {
    check_alpha(cfg.alpha_ebh, "alpha_ebh")?;
    check_alpha(cfg.alpha_fbc, "alpha_fbc")?;
    let n = pvals.len();
    let folds = random_folds(n, cfg.folds, cfg.seed)?;
    let fit = cross_fit(pvals, covars, &folds, &cfg.em)?;
    let thresholds = fbc_group_threshold(pvals, &folds, &fit.rules, cfg.alpha_fbc)?;
    let ctx = RefitContext {
        covars,
        em: &cfg.em,
    };
    let weights = structure_weights(
        pvals,
        &folds,
        &fit.rules,
        &thresholds,
        cfg.alpha_fbc,
        cfg.mode,
        Some(&ctx),
    )?;
    let evalues = structure_evalues(n, &folds, &thresholds, &weights)?;
    let rejected = ebh_select(&evalues, cfg.alpha_ebh)?;
    Ok(StructureOutcome {
        folds,
        fit,
        thresholds,
        weights,
        evalues,
        rejected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn folds_are_balanced_and_seeded() {
        let a = random_folds(11, 2, 3).unwrap();
        assert_eq!(a, random_folds(11, 2, 3).unwrap());
        assert_eq!(a.size(0), 6);
        assert_eq!(a.size(1), 5);
        assert!(random_folds(3, 4, 0).is_err());
    }

    #[test]
    fn single_fold_weights_are_one() {
        let p = PValueSet::new(vec![0.01, 0.02, 0.8, 0.6, 0.3]).unwrap();
        let part = GroupPartition::single(5);
        let rules = vec![LfdrRule { pi: 0.7, kappa: 0.5 }; 5];
        let th = fbc_group_threshold(&p, &part, &rules, 0.3).unwrap();
        let w = structure_weights(&p, &part, &rules, &th, 0.3, StructureWeightMode::Cheap, None).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn all_ones_reject_nothing() {
        let p = PValueSet::new(vec![1.0; 40]).unwrap();
        let x = CovariateSet::new((0..40).map(|i| vec![i as f64 / 40.0]).collect()).unwrap();
        let mut cfg = StructureConfig::new(0.1, 1).unwrap();
        cfg.em.restarts = 0;
        let out = run_structure_adaptive(&p, &x, &cfg).unwrap();
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn unit_weights() {
        let p = PValueSet::new(vec![0.2; 4]).unwrap();
        let part = GroupPartition::blocks(&[2, 2]).unwrap();
        let rules = vec![LfdrRule { pi: 0.7, kappa: 0.5 }; 4];
        let th = fbc_group_threshold(&p, &part, &rules, 0.3).unwrap();
        let w = structure_weights(&p, &part, &rules, &th, 0.3, StructureWeightMode::Unit, None).unwrap();
        let total: f64 = (0..2)
            .map(|g| part.size(g) as f64 * part.members(g).iter().map(|&i| w.as_slice()[i]).fold(0.0, f64::max))
            .sum();
        assert_eq!(total, 4.0);
    }
}
