#![allow(dead_code)]

use evmt_core::lfdr::CovariateSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixture of uniform nulls and small Beta alternatives, with occasional
/// exact ties, zeros, ones and halves.
pub fn mixed_pvalues(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let frac_alt: f64 = rng.random_range(0.0..0.6);
    let beta = Beta::new(0.2, 8.0).unwrap();
    let mut p: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random::<f64>() < frac_alt {
                beta.sample(rng)
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    if rng.random::<f64>() < 0.3 {
        let k = rng.random_range(0..n);
        let specials = [0.0, 1.0, 0.5];
        p[k] = specials[rng.random_range(0..3)];
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        p[a] = p[b];
    }
    p
}

/// Data from the working model: null with probability `pi(x)`, otherwise
/// `p = U^(1 / (1 - kappa(x)))`, whose density is `(1 - kappa) p^(-kappa)`.
pub fn working_model(
    rng: &mut ChaCha8Rng,
    n: usize,
    beta_pi: &[f64],
    beta_kappa: &[f64],
) -> (Vec<f64>, CovariateSet) {
    let d = beta_pi.len() - 1;
    let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
    let mut p = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let lin = |b: &[f64]| b[0] + b[1..].iter().zip(&x).map(|(a, v)| a * v).sum::<f64>();
        let pi = sig(lin(beta_pi));
        let kappa = sig(lin(beta_kappa));
        let u: f64 = rng.random();
        p.push(if rng.random::<f64>() < pi { u } else { u.powf(1.0 / (1.0 - kappa)) });
        rows.push(x);
    }
    (p, CovariateSet::new(rows).unwrap())
}

/// Mean and standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}
