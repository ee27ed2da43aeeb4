mod common;

use common::{rng, working_model};
use evmt_core::lfdr::{fit_lfdr_em, CovariateSet, EmConfig, LfdrRule};
use evmt_core::structure::{
    cross_fit, fbc_group_threshold, random_folds, run_structure_adaptive, structure_weights,
    RefitContext, StructureConfig, StructureWeightMode,
};
use evmt_core::{PValueSet, RejectionRule};
use proptest::prelude::*;
use rand::Rng;

fn quick_em() -> EmConfig {
    EmConfig {
        restarts: 0,
        max_iter: 50,
        ..EmConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn lfdr_rules_are_monotone(pi in 0.01f64..0.99, kappa in 0.01f64..0.99) {
        let r = LfdrRule { pi, kappa };
        let mut prev = r.phi(0.0);
        for k in 1..=200 {
            let v = r.phi(k as f64 / 200.0);
            prop_assert!(v >= prev && v > 0.0 && v <= 1.0);
            prev = v;
        }
    }

    #[test]
    fn fbc_matches_brute_force(seed in any::<u64>(), n in 8usize..80, alpha in 0.05f64..0.5) {
        let mut r = rng(seed);
        let p: Vec<f64> = (0..n).map(|_| r.random::<f64>().powf(r.random_range(1.0..4.0))).collect();
        let rules: Vec<LfdrRule> = (0..n)
            .map(|_| LfdrRule { pi: r.random_range(0.3..0.95), kappa: r.random_range(0.1..0.9) })
            .collect();
        let part = random_folds(n, 2, seed).unwrap();
        let pv = PValueSet::new(p.clone()).unwrap();
        let out = fbc_group_threshold(&pv, &part, &rules, alpha).unwrap();
        for (g, th) in out.iter().enumerate() {
            let idx = part.members(g);
            let rej: Vec<f64> = idx.iter().map(|&i| rules[i].phi(p[i])).collect();
            let mir: Vec<f64> = idx.iter().map(|&i| rules[i].phi(1.0 - p[i])).collect();
            let expect = rej.iter().chain(&mir).copied().chain([0.0])
                .filter(|&t| t <= th.t_upper)
                .filter(|&t| {
                    let r = rej.iter().filter(|&&v| v <= t).count();
                    let s = mir.iter().filter(|&&v| v <= t).count();
                    ((1 + s) as f64) <= r as f64 * alpha
                })
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.max(t))));
            prop_assert_eq!(th.result.threshold, expect);
        }
    }
}

#[test]
fn cross_fit_rules_ignore_own_fold() {
    let (p, x) = working_model(&mut rng(5), 400, &[1.0, 1.0], &[0.5, 0.0]);
    let part = random_folds(400, 2, 9).unwrap();
    let em = quick_em();
    let base = cross_fit(&PValueSet::new(p.clone()).unwrap(), &x, &part, &em).unwrap();
    // scramble fold 0's p-values: fold 0 rules must not move
    let mut q = p.clone();
    for &i in part.members(0) {
        q[i] = 1.0 - q[i];
    }
    let moved = cross_fit(&PValueSet::new(q).unwrap(), &x, &part, &em).unwrap();
    for &i in part.members(0) {
        assert_eq!(base.rules[i], moved.rules[i]);
    }
    assert!(part.members(1).iter().any(|&i| base.rules[i] != moved.rules[i]));
}

#[test]
fn uniform_fits_agree_across_folds() {
    let mut r = rng(17);
    let p: Vec<f64> = (0..4000).map(|_| r.random()).collect();
    let x = CovariateSet::empty(4000);
    let part = random_folds(4000, 2, 1).unwrap();
    let fit = cross_fit(&PValueSet::new(p).unwrap(), &x, &part, &EmConfig::default()).unwrap();
    let (a, b) = (fit.models[0].rule(&[]), fit.models[1].rule(&[]));
    // both folds see pure noise: near-null fits, identical up to sampling error
    for t in [0.01, 0.1, 0.5] {
        assert!((a.phi(t) - b.phi(t)).abs() < 0.1, "{a:?} vs {b:?}");
    }
}

#[test]
fn cheap_weights_dominate_full_weights() {
    let (p, x) = working_model(&mut rng(8), 160, &[0.5, 1.5], &[1.0, 0.0]);
    let pv = PValueSet::new(p).unwrap();
    let part = random_folds(160, 2, 4).unwrap();
    let em = quick_em();
    let fit = cross_fit(&pv, &x, &part, &em).unwrap();
    let alpha = 0.3;
    let th = fbc_group_threshold(&pv, &part, &fit.rules, alpha).unwrap();
    let ctx = RefitContext { covars: &x, em: &em };
    let cheap = structure_weights(&pv, &part, &fit.rules, &th, alpha, StructureWeightMode::Cheap, None).unwrap();
    let full = structure_weights(&pv, &part, &fit.rules, &th, alpha, StructureWeightMode::Full, Some(&ctx)).unwrap();
    for (c, f) in cheap.as_slice().iter().zip(full.as_slice()) {
        assert!(c + 1e-12 >= *f);
    }
    assert!(structure_weights(&pv, &part, &fit.rules, &th, alpha, StructureWeightMode::Full, None).is_err());
}

#[test]
fn structure_pipeline_is_seeded() {
    let (p, x) = working_model(&mut rng(3), 600, &[1.0, 1.0], &[1.0, 0.0]);
    let pv = PValueSet::new(p).unwrap();
    let mut cfg = StructureConfig::new(0.1, 11).unwrap();
    cfg.em = quick_em();
    let a = run_structure_adaptive(&pv, &x, &cfg).unwrap();
    let b = run_structure_adaptive(&pv, &x, &cfg).unwrap();
    assert_eq!(a.rejected, b.rejected);
    assert_eq!(a.evalues, b.evalues);
    assert!(!a.rejected.is_empty());
}

#[test]
fn em_rejects_bad_input() {
    let x = CovariateSet::empty(3);
    assert!(fit_lfdr_em(&[0.1, 0.2, 0.3], &x, &EmConfig::default()).is_ok());
    assert!(fit_lfdr_em(&[0.1, 0.2], &x, &EmConfig::default()).is_err());
    assert!(fit_lfdr_em(&[0.1, 2.0, 0.3], &x, &EmConfig::default()).is_err());
    assert!(random_folds(3, 5, 0).is_err());
}
