//! Two-group beta-mixture working model fitted by EM.
//!
//! The p-value density is `pi + (1 - pi) (1 - kappa) p^(-kappa)` with
//! `pi = logistic(beta_pi . [1, x])` and `kappa = logistic(beta_kappa . [1, x])`.
//! The fitted model yields local-fdr rejection rules
//! `phi(p) = pi / (pi + (1 - pi) (1 - kappa) p^(-kappa))`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::error::{config, input, Result};
use crate::procedures::RejectionRule;

/// Smallest p-value fed to `p^(-kappa)`.
pub const P_FLOOR: f64 = 1e-15;
const ETA_CAP: f64 = 30.0;

/// Row-major covariate matrix with `n` rows of dimension `dim` (possibly 0).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariateSet {
    n: usize,
    dim: usize,
    data: Vec<f64>,
}

impl CovariateSet {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return input("covariate rows have inconsistent dimension");
        }
        Self::from_flat(n, dim, rows.into_iter().flatten().collect())
    }

    pub fn from_flat(n: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * dim {
            return input("covariate buffer does not match n * dim");
        }
        if data.iter().any(|v| !v.is_finite()) {
            return input("covariates must be finite");
        }
        Ok(Self { n, dim, data })
    }

    /// `n` hypotheses with no covariates.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            dim: 0,
            data: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        let data = idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect();
        Self {
            n: idx.len(),
            dim: self.dim,
            data,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Relative log-likelihood change that counts as converged.
    pub tol: f64,
    /// Random starts in addition to the default one.
    pub restarts: usize,
    pub seed: u64,
    pub eps1: f64,
    pub eps2: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol: 1e-6,
            restarts: 5,
            seed: 0x5eed_1fd4,
            eps1: 0.1,
            eps2: 1e-5,
        }
    }
}

/// Fitted working model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LfdrModel {
    pub beta_pi: Vec<f64>,
    pub beta_kappa: Vec<f64>,
    pub eps1: f64,
    pub eps2: f64,
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Local-fdr rejection rule for one hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LfdrRule {
    pub pi: f64,
    pub kappa: f64,
}

impl RejectionRule for LfdrRule {
    fn phi(&self, p: f64) -> f64 {
        let p = p.max(P_FLOOR);
        self.pi / (self.pi + (1.0 - self.pi) * (1.0 - self.kappa) * p.powf(-self.kappa))
    }
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `log(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

impl LfdrModel {
    /// Winsorized null proportion at covariate `x`.
    pub fn pi_hat(&self, x: &[f64]) -> f64 {
        logistic(dot(&self.beta_pi, x)).clamp(self.eps1, 1.0 - self.eps2)
    }

    pub fn kappa_hat(&self, x: &[f64]) -> f64 {
        logistic(dot(&self.beta_kappa, x).clamp(-ETA_CAP, ETA_CAP))
    }

    pub fn rule(&self, x: &[f64]) -> LfdrRule {
        LfdrRule {
            pi: self.pi_hat(x),
            kappa: self.kappa_hat(x),
        }
    }
}

/// Design with an intercept column, plus `ln p`.
struct Data {
    n: usize,
    k: usize,
    z: Vec<f64>,
    log_p: Vec<f64>,
}

impl Data {
    fn new(p: &[f64], x: &CovariateSet) -> Self {
        let k = x.dim() + 1;
        let mut z = Vec::with_capacity(p.len() * k);
        for i in 0..p.len() {
            z.push(1.0);
            z.extend_from_slice(x.row(i));
        }
        Self {
            n: p.len(),
            k,
            z,
            log_p: p.iter().map(|&v| v.max(P_FLOOR).ln()).collect(),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.z[i * self.k..(i + 1) * self.k]
    }

    fn eta(&self, beta: &[f64], i: usize) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }
}

/// Pseudo log-likelihood `sum_i log(pi_i + (1 - pi_i)(1 - kappa_i) p_i^(-kappa_i))`.
pub fn pseudo_loglik(beta_pi: &[f64], beta_kappa: &[f64], p: &[f64], x: &CovariateSet) -> f64 {
    loglik(&Data::new(p, x), beta_pi, beta_kappa)
}

fn loglik(d: &Data, bp: &[f64], bk: &[f64]) -> f64 {
    (0..d.n)
        .map(|i| {
            let pi = logistic(d.eta(bp, i));
            let kappa = logistic(d.eta(bk, i).clamp(-ETA_CAP, ETA_CAP));
            (pi + (1.0 - pi) * (1.0 - kappa) * (-kappa * d.log_p[i]).exp()).ln()
        })
        .sum()
}

/// Damped Newton ascent for a smooth objective.
///
/// `eval` returns the objective, gradient and Hessian at `beta`.
fn newton_ascent(
    beta: &mut Vec<f64>,
    steps: usize,
    eval: impl Fn(&[f64]) -> (f64, DVector<f64>, DMatrix<f64>),
    value: impl Fn(&[f64]) -> f64,
) {
    let k = beta.len();
    for _ in 0..steps {
        let (f0, g, h) = eval(beta);
        if g.amax() < 1e-10 {
            return;
        }
        let neg_h = -h;
        let scale = neg_h.diagonal().amax().max(1e-12);
        let mut mu = 0.0;
        let delta = loop {
            let m = &neg_h + DMatrix::identity(k, k) * mu;
            if let Some(ch) = m.cholesky() {
                break ch.solve(&g);
            }
            mu = if mu == 0.0 { 1e-8 * scale } else { mu * 10.0 };
            if mu > 1e12 * scale {
                break g.clone() / scale;
            }
        };
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let f1 = value(&cand);
            if f1.is_finite() && f1 >= f0 {
                *beta = cand;
                improved = f1 - f0 > 1e-12 * f0.abs().max(1.0);
                break;
            }
            step *= 0.5;
        }
        if !improved || delta.amax() * step < 1e-10 {
            return;
        }
    }
}

const INNER_STEPS: usize = 1;

/// `g += gz * z`, `h += hz * z z'`.
fn accumulate(g: &mut DVector<f64>, h: &mut DMatrix<f64>, z: &[f64], gz: f64, hz: f64) {
    for (a, &za) in z.iter().enumerate() {
        g[a] += gz * za;
        for (b, &zb) in z.iter().enumerate() {
            h[(a, b)] += hz * za * zb;
        }
    }
}

fn m_step_pi(d: &Data, q: &[f64], beta: &mut Vec<f64>) {
    let value = |b: &[f64]| -> f64 {
        (0..d.n)
            .map(|i| {
                let e = d.eta(b, i);
                -(q[i] * softplus(-e) + (1.0 - q[i]) * softplus(e))
            })
            .sum()
    };
    let eval = |b: &[f64]| {
        let mut g = DVector::zeros(d.k);
        let mut h = DMatrix::zeros(d.k, d.k);
        let mut f = 0.0;
        for i in 0..d.n {
            let e = d.eta(b, i);
            let pi = logistic(e);
            f -= q[i] * softplus(-e) + (1.0 - q[i]) * softplus(e);
            accumulate(&mut g, &mut h, d.row(i), q[i] - pi, -(pi * (1.0 - pi)));
        }
        (f, g, h)
    };
    newton_ascent(beta, INNER_STEPS, eval, value);
}

fn m_step_kappa(d: &Data, w: &[f64], beta: &mut Vec<f64>) {
    let term = |e: f64, lp: f64| {
        let e = e.clamp(-ETA_CAP, ETA_CAP);
        -softplus(e) - logistic(e) * lp
    };
    let value = |b: &[f64]| -> f64 { (0..d.n).map(|i| w[i] * term(d.eta(b, i), d.log_p[i])).sum() };
    let eval = |b: &[f64]| {
        let mut g = DVector::zeros(d.k);
        let mut h = DMatrix::zeros(d.k, d.k);
        let mut f = 0.0;
        for i in 0..d.n {
            let e = d.eta(b, i);
            let lp = d.log_p[i];
            f += w[i] * term(e, lp);
            let kap = logistic(e.clamp(-ETA_CAP, ETA_CAP));
            let v = kap * (1.0 - kap);
            accumulate(
                &mut g,
                &mut h,
                d.row(i),
                w[i] * (-kap - v * lp),
                -w[i] * v * (1.0 + lp * (1.0 - 2.0 * kap)),
            );
        }
        (f, g, h)
    };
    newton_ascent(beta, INNER_STEPS, eval, value);
}

fn em_from(d: &Data, mut bp: Vec<f64>, mut bk: Vec<f64>, cfg: &EmConfig) -> LfdrModel {
    let mut ll = loglik(d, &bp, &bk);
    let mut converged = false;
    let mut iterations = 0;
    let mut q = vec![0.0; d.n];
    let mut w = vec![0.0; d.n];
    for it in 1..=cfg.max_iter {
        iterations = it;
        for i in 0..d.n {
            let pi = logistic(d.eta(&bp, i));
            let kappa = logistic(d.eta(&bk, i).clamp(-ETA_CAP, ETA_CAP));
            let alt = (1.0 - pi) * (1.0 - kappa) * (-kappa * d.log_p[i]).exp();
            q[i] = pi / (pi + alt);
            w[i] = 1.0 - q[i];
        }
        m_step_pi(d, &q, &mut bp);
        m_step_kappa(d, &w, &mut bk);
        let next = loglik(d, &bp, &bk);
        let rel = (next - ll).abs() / ll.abs().max(1.0);
        ll = next;
        if rel < cfg.tol {
            converged = true;
            break;
        }
    }
    LfdrModel {
        beta_pi: bp,
        beta_kappa: bk,
        eps1: cfg.eps1,
        eps2: cfg.eps2,
        loglik: ll,
        iterations,
        converged,
    }
}

/// Gradient of the observed pseudo log-likelihood in `(beta_pi, beta_kappa)`,
/// via the posterior null probabilities (Fisher's identity).
fn observed_gradient(d: &Data, theta: &[f64]) -> DVector<f64> {
    let (bp, bk) = theta.split_at(d.k);
    let mut g = DVector::zeros(2 * d.k);
    for i in 0..d.n {
        let pi = logistic(d.eta(bp, i));
        let e = d.eta(bk, i);
        let kappa = logistic(e.clamp(-ETA_CAP, ETA_CAP));
        let alt = (1.0 - pi) * (1.0 - kappa) * (-kappa * d.log_p[i]).exp();
        let q = pi / (pi + alt);
        let gk = if e.abs() < ETA_CAP {
            (1.0 - q) * (-kappa - kappa * (1.0 - kappa) * d.log_p[i])
        } else {
            0.0
        };
        for (a, &z) in d.row(i).iter().enumerate() {
            g[a] += (q - pi) * z;
            g[d.k + a] += gk * z;
        }
    }
    g
}

/// Newton polish of an EM fit on the observed pseudo log-likelihood.
/// EM converges linearly near flat optima; a few Newton steps close the
/// remaining gap without ever lowering the likelihood.
fn polish(d: &Data, model: &mut LfdrModel) {
    let mut theta: Vec<f64> = model.beta_pi.iter().chain(&model.beta_kappa).copied().collect();
    let value = |t: &[f64]| loglik(d, &t[..d.k], &t[d.k..]);
    let eval = |t: &[f64]| {
        let m = t.len();
        let g = observed_gradient(d, t);
        let mut h = DMatrix::zeros(m, m);
        for a in 0..m {
            let step = 1e-5 * t[a].abs().max(1.0);
            let mut up = t.to_vec();
            let mut dn = t.to_vec();
            up[a] += step;
            dn[a] -= step;
            let col = (observed_gradient(d, &up) - observed_gradient(d, &dn)) / (2.0 * step);
            h.set_column(a, &col);
        }
        let h = (&h + h.transpose()) * 0.5;
        (value(t), g, h)
    };
    newton_ascent(&mut theta, 20, eval, value);
    let ll = value(&theta);
    if ll.is_finite() && ll >= model.loglik {
        model.beta_kappa = theta.split_off(d.k);
        model.beta_pi = theta;
        model.loglik = ll;
    }
}

/// Maximum pseudo-likelihood fit from a default start plus `cfg.restarts`
/// seeded random starts; the best log-likelihood wins.
pub fn fit_lfdr_em(p: &[f64], x: &CovariateSet, cfg: &EmConfig) -> Result<LfdrModel> {
    if x.len() != p.len() {
        return input("covariate rows do not match the number of p-values");
    }
    let k = x.dim() + 1;
    if p.len() < 2 * k {
        return config(format!(
            "EM needs at least {} observations for {} covariates, got {}",
            2 * k,
            x.dim(),
            p.len()
        ));
    }
    if p.iter().any(|v| !(v.is_finite() && (0.0..=1.0).contains(v))) {
        return input("p-values must lie in [0, 1]");
    }
    let d = Data::new(p, x);
    let mut start_pi = vec![0.0; k];
    start_pi[0] = logit(0.9);
    let start_kappa = vec![0.0; k];
    let mut best = em_from(&d, start_pi, start_kappa, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let slope = Normal::new(0.0, 0.5).expect("valid normal");
    for _ in 0..cfg.restarts {
        let mut bp: Vec<f64> = (0..k).map(|_| slope.sample(&mut rng)).collect();
        let mut bk: Vec<f64> = (0..k).map(|_| slope.sample(&mut rng)).collect();
        bp[0] = logit(rng.random_range(0.6..0.98));
        bk[0] = logit(rng.random_range(0.2..0.8));
        let fit = em_from(&d, bp, bk, cfg);
        if fit.loglik > best.loglik {
            best = fit;
        }
    }
    if !best.loglik.is_finite() {
        return input("pseudo-likelihood is not finite");
    }
    polish(&d, &mut best);
    Ok(best)
}
