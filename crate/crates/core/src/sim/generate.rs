use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use statrs::distribution::{ContinuousCDF, Normal as NormalDist};

use super::config::{SettingParams, SimulationConfig};
use crate::error::{config, Result};
use crate::groups::GroupPartition;
use crate::knockoff::KnockoffStatSet;
use crate::lfdr::CovariateSet;
use crate::types::PValueSet;

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct Instance {
    /// Absent only for knockoff settings, which produce statistics instead.
    pub pvals: Option<PValueSet>,
    pub non_null: Vec<bool>,
    pub groups: Option<GroupPartition>,
    pub covars: Option<CovariateSet>,
    pub knockoff: Option<(KnockoffStatSet, KnockoffStatSet)>,
    /// Seed for any randomness a method needs (for example fold splits).
    pub method_seed: u64,
}

/// Generator for replicate `r`: the configured seed selects the key and
/// `r` the stream, so replicates are independent of evaluation order.
pub fn replicate_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn upper_tail(z: f64) -> f64 {
    NormalDist::standard().sf(z)
}

fn std_normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn pset(p: Vec<f64>) -> Result<PValueSet> {
    PValueSet::new(p.into_iter().map(|v| v.clamp(0.0, 1.0)).collect())
}

pub fn generate(cfg: &SimulationConfig, replicate: usize) -> Result<Instance> {
    cfg.validate()?;
    let mut rng = replicate_rng(cfg.seed, replicate);
    let mut inst = match &cfg.params {
        SettingParams::Groups(gp) => {
            let mut p = Vec::new();
            let mut truth = Vec::new();
            let mut sizes = Vec::new();
            for s in &gp.groups {
                let beta = Beta::new(s.a, s.b)
                    .map_err(|e| crate::Error::Config(format!("beta parameters: {e}")))?;
                for k in 0..s.n {
                    if k < s.n_alt {
                        p.push(beta.sample(&mut rng));
                        truth.push(true);
                    } else {
                        p.push(rng.random::<f64>());
                        truth.push(false);
                    }
                }
                sizes.push(s.n);
            }
            Instance {
                pvals: Some(pset(p)?),
                non_null: truth,
                groups: Some(GroupPartition::blocks(&sizes)?),
                covars: None,
                knockoff: None,
                method_seed: 0,
            }
        }
        SettingParams::Normal(np) => {
            let shift = np.mu * (np.n as f64).ln();
            let mut p = Vec::with_capacity(np.n);
            let mut truth = Vec::with_capacity(np.n);
            for k in 0..np.n {
                let alt = k < np.n_alt;
                let z = std_normal(&mut rng);
                let x = if alt { shift + np.sigma * z } else { z };
                p.push(upper_tail(x));
                truth.push(alt);
            }
            Instance {
                pvals: Some(pset(p)?),
                non_null: truth,
                groups: None,
                covars: None,
                knockoff: None,
                method_seed: 0,
            }
        }
        SettingParams::Struct(sp) => {
            let mut p = Vec::with_capacity(sp.n);
            let mut truth = Vec::with_capacity(sp.n);
            let mut rows = Vec::with_capacity(sp.n);
            for _ in 0..sp.n {
                let x = std_normal(&mut rng);
                let pi = logistic(sp.a0 + sp.a1 * x);
                let theta = rng.random::<f64>() < 1.0 - pi;
                let xf = std_normal(&mut rng);
                let eta = 2.0 * logistic(sp.af * xf);
                let z = eta * sp.mu * f64::from(u8::from(theta)) + std_normal(&mut rng);
                p.push(upper_tail(z));
                truth.push(theta);
                rows.push(vec![x, xf]);
            }
            Instance {
                pvals: Some(pset(p)?),
                non_null: truth,
                groups: None,
                covars: Some(CovariateSet::new(rows)?),
                knockoff: None,
                method_seed: 0,
            }
        }
        SettingParams::Knockoff(kp) => {
            let sym = |rng: &mut ChaCha8Rng| {
                let v = std_normal(rng).abs();
                if rng.random::<bool>() {
                    v
                } else {
                    -v
                }
            };
            let mut a = Vec::with_capacity(kp.p);
            let mut truth = Vec::with_capacity(kp.p);
            for j in 0..kp.p {
                let signal = j < kp.n_signal;
                a.push(if signal {
                    kp.signal_mean + std_normal(&mut rng)
                } else {
                    sym(&mut rng)
                });
                truth.push(signal);
            }
            let b: Vec<f64> = (0..kp.p).map(|_| sym(&mut rng)).collect();
            Instance {
                pvals: None,
                non_null: truth,
                groups: None,
                covars: None,
                knockoff: Some((KnockoffStatSet::new(a)?, KnockoffStatSet::new(b)?)),
                method_seed: 0,
            }
        }
        SettingParams::AllNull(ap) => {
            let p: Vec<f64> = (0..ap.n).map(|_| rng.random::<f64>()).collect();
            let rows: Vec<f64> = (0..ap.n * ap.dim).map(|_| std_normal(&mut rng)).collect();
            let labels = (0..ap.n).map(|i| i * ap.groups / ap.n).collect();
            Instance {
                pvals: Some(pset(p)?),
                non_null: vec![false; ap.n],
                groups: Some(GroupPartition::from_labels(labels)?),
                covars: Some(CovariateSet::from_flat(ap.n, ap.dim, rows)?),
                knockoff: None,
                method_seed: 0,
            }
        }
    };
    if inst.non_null.is_empty() {
        return config("generated an empty instance");
    }
    inst.method_seed = rng.random();
    Ok(inst)
}

/// Two groups of sizes 100 and 1000, each with twenty p-values near zero.
/// Nulls sit in tied pairs inside `(0.5, 1)`: no null is rejected and no
/// folded null can open a group's threshold, so every cross-group
/// correction in the adaptive weights is zero.
pub fn toy_example() -> (Vec<f64>, Vec<usize>) {
    let mut p = Vec::with_capacity(1100);
    let mut labels = Vec::with_capacity(1100);
    for (g, (size, scale)) in [(100usize, 1e-5), (1000, 1e-6)].into_iter().enumerate() {
        for k in 0..20 {
            p.push(scale * (k + 1) as f64);
        }
        let pairs = (size - 20) / 2;
        for k in 0..pairs {
            let v = 0.55 + 0.4 * k as f64 / pairs as f64;
            p.push(v);
            p.push(v);
        }
        labels.extend(std::iter::repeat_n(g, size));
    }
    (p, labels)
}
