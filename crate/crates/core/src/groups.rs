//! Group-wise BC with e-value assembly across groups.
//!
//! Each group runs its own BC threshold; the resulting e-values are scaled
//! by per-hypothesis weights and passed jointly to e-BH, which controls the
//! FDR both within every group and overall.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_alpha, config, input, Result};
use crate::mirror::{swapped_indicators, Plateaus, Upper};
use crate::procedures::{bc_threshold, ebh_select, fdp_power, ThresholdResult};
use crate::types::{EValueSet, PValueSet, RejectionSet, WeightVector};

/// Disjoint cover of `0..n` by groups `0..L`, each nonempty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupPartition {
    labels: Vec<usize>,
    members: Vec<Vec<usize>>,
}

impl GroupPartition {
    pub fn from_labels(labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return input("group labels are empty");
        }
        let l = labels.iter().max().unwrap() + 1;
        let mut members = vec![Vec::new(); l];
        for (i, &g) in labels.iter().enumerate() {
            members[g].push(i);
        }
        if let Some(g) = members.iter().position(Vec::is_empty) {
            return config(format!("group {g} has no members"));
        }
        Ok(Self { labels, members })
    }

    /// Assigns ids in order of first appearance; returns the id-to-name map.
    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<(Self, Vec<String>)> {
        let mut seen: Vec<String> = Vec::new();
        let labels = names
            .iter()
            .map(|s| {
                let s = s.as_ref();
                match seen.iter().position(|x| x == s) {
                    Some(k) => k,
                    None => {
                        seen.push(s.to_string());
                        seen.len() - 1
                    }
                }
            })
            .collect();
        Ok((Self::from_labels(labels)?, seen))
    }

    pub fn single(n: usize) -> Self {
        Self {
            labels: vec![0; n],
            members: vec![(0..n).collect()],
        }
    }

    /// Consecutive blocks of the given sizes.
    pub fn blocks(sizes: &[usize]) -> Result<Self> {
        let labels = sizes
            .iter()
            .enumerate()
            .flat_map(|(g, &k)| std::iter::repeat_n(g, k))
            .collect();
        Self::from_labels(labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_groups(&self) -> usize {
        self.members.len()
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn members(&self, g: usize) -> &[usize] {
        &self.members[g]
    }

    pub fn size(&self, g: usize) -> usize {
        self.members[g].len()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return input(format!(
                "partition covers {} hypotheses but there are {n} p-values",
                self.len()
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeightScheme {
    Unit,
    SizeAdjusted,
    Adaptive,
}

fn gather(p: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| p[i]).collect()
}

fn to_global(r: ThresholdResult, idx: &[usize]) -> ThresholdResult {
    let global = r.rejected.indices().iter().map(|&k| idx[k]).collect();
    ThresholdResult {
        rejected: RejectionSet::from_sorted(global),
        ..r
    }
}

/// BC at level `alpha` inside each group; rejection sets use global indices.
pub fn groupwise_bc_thresholds(
    pvals: &PValueSet,
    part: &GroupPartition,
    alpha: f64,
) -> Result<Vec<ThresholdResult>> {
    check_alpha(alpha, "alpha")?;
    part.check_len(pvals.len())?;
    let p = pvals.as_slice();
    Ok((0..part.n_groups())
        .into_par_iter()
        .map(|g| {
            let idx = part.members(g);
            to_global(bc_threshold(&gather(p, idx), alpha), idx)
        })
        .collect())
}

/// Group BC threshold after replacing `p_i` by `min(p_i, 1 - p_i)`.
pub fn loo_group_threshold(
    pvals: &PValueSet,
    part: &GroupPartition,
    alpha: f64,
    i: usize,
) -> Result<Option<f64>> {
    check_alpha(alpha, "alpha")?;
    part.check_len(pvals.len())?;
    if i >= pvals.len() {
        return input(format!("index {i} out of range"));
    }
    let p = pvals.as_slice();
    let idx = part.members(part.label(i));
    let mut sub = gather(p, idx);
    let k = idx.iter().position(|&j| j == i).unwrap();
    sub[k] = sub[k].min(1.0 - sub[k]);
    Ok(bc_threshold(&sub, alpha).threshold)
}

/// `1{1 - p_j <= T_j}` for each member of one group, where `T_j` is the
/// group threshold with `p_j` folded to `min(p_j, 1 - p_j)`.
pub(crate) fn group_loo_mirror_hits(p_group: &[f64], alpha: f64) -> Vec<bool> {
    let mir: Vec<f64> = p_group.iter().map(|&x| 1.0 - x).collect();
    let swappable: Vec<bool> = p_group.iter().map(|&x| x > 0.5).collect();
    let pl = Plateaus::build(p_group, &mir, Upper::Below(0.5));
    swapped_indicators(&pl, &mir, &swappable, alpha)
}

/// Weights for the group e-values.
///
/// The adaptive scheme gives hypothesis `i` in group `l`
/// `(n / n_l) A_i / (A_i + C_l)`, where `A_i = 1 + #{j in l, j != i : 1 - p_j <= T_l}`
/// and `C_l` counts, over all other groups, the hypotheses whose mirror
/// point falls below their own leave-one-out threshold.
pub fn assemble_weights(
    pvals: &PValueSet,
    part: &GroupPartition,
    thresholds: &[ThresholdResult],
    alpha: f64,
    scheme: WeightScheme,
) -> Result<WeightVector> {
    check_alpha(alpha, "alpha")?;
    part.check_len(pvals.len())?;
    if thresholds.len() != part.n_groups() {
        return input("one threshold per group is required");
    }
    let n = pvals.len();
    let big_l = part.n_groups() as f64;
    let p = pvals.as_slice();
    let w = match scheme {
        WeightScheme::Unit => vec![1.0; n],
        WeightScheme::SizeAdjusted => (0..n)
            .map(|i| n as f64 / (big_l * part.size(part.label(i)) as f64))
            .collect(),
        WeightScheme::Adaptive => {
            let loo_hits: Vec<usize> = (0..part.n_groups())
                .into_par_iter()
                .map(|g| {
                    group_loo_mirror_hits(&gather(p, part.members(g)), alpha)
                        .into_iter()
                        .filter(|&b| b)
                        .count()
                })
                .collect();
            let total: usize = loo_hits.iter().sum();
            let own_hit = |i: usize| {
                thresholds[part.label(i)]
                    .threshold
                    .is_some_and(|t| 1.0 - p[i] <= t)
            };
            let own_hits: Vec<usize> = (0..part.n_groups())
                .map(|g| part.members(g).iter().filter(|&&j| own_hit(j)).count())
                .collect();
            (0..n)
                .map(|i| {
                    let g = part.label(i);
                    let a = (1 + own_hits[g] - usize::from(own_hit(i))) as f64;
                    let c = (total - loo_hits[g]) as f64;
                    (n as f64 / part.size(g) as f64) * a / (a + c)
                })
                .collect()
        }
    };
    WeightVector::new(w)
}

/// Unweighted group e-values `n_l 1{p_i <= T_l} / (1 + S_l(T_l))`.
pub fn group_evalues(n: usize, part: &GroupPartition, thresholds: &[ThresholdResult]) -> EValueSet {
    let mut e = vec![0.0; n];
    for (g, th) in thresholds.iter().enumerate() {
        if th.feasible() {
            let v = part.size(g) as f64 / th.m_at_t;
            for &i in th.rejected.indices() {
                e[i] = v;
            }
        }
    }
    EValueSet::new(e).expect("group e-values are finite and nonnegative")
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub thresholds: Vec<Option<f64>>,
    /// Per-group BC rejections, the only hypotheses e-BH can select.
    pub group_bc: Vec<RejectionSet>,
    pub weights: WeightVector,
    pub evalues: EValueSet,
    pub rejected: RejectionSet,
}

impl GroupReport {
    /// Final rejections restricted to each group.
    pub fn rejected_by_group(&self, part: &GroupPartition) -> Vec<RejectionSet> {
        let mut by: Vec<Vec<usize>> = vec![Vec::new(); part.n_groups()];
        for &i in self.rejected.indices() {
            by[part.label(i)].push(i);
        }
        by.into_iter().map(RejectionSet::from_sorted).collect()
    }
}

pub fn run_algorithm1(
    pvals: &PValueSet,
    part: &GroupPartition,
    alpha: f64,
    scheme: WeightScheme,
) -> Result<GroupReport> {
    let thresholds = groupwise_bc_thresholds(pvals, part, alpha)?;
    let weights = assemble_weights(pvals, part, &thresholds, alpha, scheme)?;
    let evalues = group_evalues(pvals.len(), part, &thresholds).scaled(weights.as_slice())?;
    let rejected = ebh_select(&evalues, alpha)?;
    Ok(GroupReport {
        thresholds: thresholds.iter().map(|t| t.threshold).collect(),
        group_bc: thresholds.into_iter().map(|t| t.rejected).collect(),
        weights,
        evalues,
        rejected,
    })
}

/// FDP and power computed inside each group.
pub fn group_fdp_power(
    rejected: &RejectionSet,
    non_null: &[bool],
    part: &GroupPartition,
) -> Result<Vec<(f64, f64)>> {
    part.check_len(non_null.len())?;
    (0..part.n_groups())
        .map(|g| {
            let idx = part.members(g);
            let local: Vec<usize> = idx
                .iter()
                .enumerate()
                .filter(|(_, &i)| rejected.contains(i))
                .map(|(k, _)| k)
                .collect();
            let truth = idx.iter().map(|&i| non_null[i]).collect::<Vec<_>>();
            fdp_power(&RejectionSet::from_sorted(local), &truth)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::procedures::ProcedureSpec;
    use crate::solve_threshold;
    use approx::assert_relative_eq;

    pub(crate) fn toy() -> (PValueSet, GroupPartition) {
        let (p, labels) = crate::sim::toy_example();
        (
            PValueSet::new(p).unwrap(),
            GroupPartition::from_labels(labels).unwrap(),
        )
    }

    #[test]
    fn partition_validation() {
        assert!(GroupPartition::from_labels(vec![0, 2]).is_err());
        let (part, names) = GroupPartition::from_names(&["b", "a", "b"]).unwrap();
        assert_eq!(part.labels(), &[0, 1, 0]);
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(part.size(0), 2);
    }

    #[test]
    fn single_group_matches_bc() {
        let p = PValueSet::new(vec![0.01, 0.02, 0.03, 0.9, 0.6]).unwrap();
        let th = groupwise_bc_thresholds(&p, &GroupPartition::single(5), 0.34).unwrap();
        let bc = solve_threshold(&p, &ProcedureSpec::bc(0.34)).unwrap();
        assert_eq!(th[0], bc);
    }

    #[test]
    fn toy_group_thresholds() {
        let (p, part) = toy();
        let th = groupwise_bc_thresholds(&p, &part, 0.05).unwrap();
        for t in &th {
            assert!(t.feasible());
            assert_eq!(t.rejected.len(), 20);
            assert_eq!(t.m_at_t, 1.0);
        }
        let e = group_evalues(1100, &part, &th);
        assert_eq!(e.as_slice()[0], 100.0);
        assert_eq!(e.as_slice()[100], 1000.0);
    }

    #[test]
    fn toy_weights_and_rejections() {
        let (p, part) = toy();
        let th = groupwise_bc_thresholds(&p, &part, 0.05).unwrap();
        let w = assemble_weights(&p, &part, &th, 0.05, WeightScheme::Adaptive).unwrap();
        assert_relative_eq!(w.as_slice()[0], 11.0);
        assert_relative_eq!(w.as_slice()[100], 1.1, epsilon = 1e-12);
        let s = assemble_weights(&p, &part, &th, 0.05, WeightScheme::SizeAdjusted).unwrap();
        assert_relative_eq!(s.as_slice()[0], 5.5);
        assert_relative_eq!(s.as_slice()[100], 0.55);
        let unit = run_algorithm1(&p, &part, 0.05, WeightScheme::Unit).unwrap();
        assert!(unit.rejected.is_empty());
        let ada = run_algorithm1(&p, &part, 0.05, WeightScheme::Adaptive).unwrap();
        assert_eq!(ada.rejected.len(), 40);
    }

    #[test]
    fn single_group_adaptive_weights_are_one() {
        let p = PValueSet::new(vec![0.01, 0.7, 0.95, 0.2]).unwrap();
        let part = GroupPartition::single(4);
        let th = groupwise_bc_thresholds(&p, &part, 0.3).unwrap();
        let w = assemble_weights(&p, &part, &th, 0.3, WeightScheme::Adaptive).unwrap();
        assert!(w.as_slice().iter().all(|&x| x == 1.0));
    }

    #[test]
    fn loo_threshold_examples() {
        let p = PValueSet::new(vec![0.9, 0.01, 0.02]).unwrap();
        let part = GroupPartition::single(3);
        let t = loo_group_threshold(&p, &part, 0.5, 0).unwrap();
        let direct = bc_threshold(&[0.09999999999999998, 0.01, 0.02], 0.5).threshold;
        assert_eq!(t, direct);
        let base = groupwise_bc_thresholds(&p, &part, 0.5).unwrap()[0].threshold;
        assert_eq!(loo_group_threshold(&p, &part, 0.5, 1).unwrap(), base);
    }

    #[test]
    fn all_ones_reject_nothing() {
        let p = PValueSet::new(vec![1.0; 6]).unwrap();
        let part = GroupPartition::blocks(&[3, 3]).unwrap();
        for s in [WeightScheme::Unit, WeightScheme::SizeAdjusted, WeightScheme::Adaptive] {
            let r = run_algorithm1(&p, &part, 0.1, s).unwrap();
            assert!(r.rejected.is_empty());
            assert!(r.thresholds.iter().all(Option::is_none));
        }
    }
}
