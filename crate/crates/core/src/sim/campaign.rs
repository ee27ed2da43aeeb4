use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Setting, SettingParams, SimulationConfig};
use super::generate::{generate, Instance};
use crate::error::{config, Error, Result};
use crate::groups::{group_fdp_power, groupwise_bc_thresholds, run_algorithm1, WeightScheme};
use crate::hybrid::{run_hybrid, HybridConfig, HybridWeightMode};
use crate::knockoff::{combine_and_select, knockoff_evalues, knockoff_threshold};
use crate::lfdr::EmConfig;
use crate::procedures::{bc_threshold, procedure_to_evalues, solve_threshold, ProcedureSpec};
use crate::structure::{run_structure_adaptive, StructureConfig, StructureWeightMode};
use crate::types::{EValueSet, PValueSet, RejectionSet};
use crate::fdp_power;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Method {
    BcCom,
    BcSep,
    Ebh1,
    Ebh2,
    GroupAda,
    Bh,
    Bc,
    Storey,
    HybridAve,
    HybridAda,
    HybridFast,
    Fbc,
    FbcUnit,
    KnockoffA,
    KnockoffB,
    KnockoffCombined,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::BcCom => "BC_Com",
            Method::BcSep => "BC_Sep",
            Method::Ebh1 => "eBH_1",
            Method::Ebh2 => "eBH_2",
            Method::GroupAda | Method::HybridAda => "eBH_Ada",
            Method::Bh => "BH",
            Method::Bc => "BC",
            Method::Storey => "ST",
            Method::HybridAve => "eBH_Ave",
            Method::HybridFast => "fast_eBH_Ada",
            Method::Fbc => "eBH_FBC",
            Method::FbcUnit => "eBH_FBC_unit",
            Method::KnockoffA => "KO_A",
            Method::KnockoffB => "KO_B",
            Method::KnockoffCombined => "KO_combined",
        }
    }

    pub fn family(self) -> &'static str {
        match self {
            Method::BcCom | Method::BcSep | Method::Ebh1 | Method::Ebh2 | Method::GroupAda => "groups",
            Method::Bh | Method::Bc | Method::Storey => "baseline",
            Method::HybridAve | Method::HybridAda | Method::HybridFast => "hybrid",
            Method::Fbc | Method::FbcUnit => "structure",
            Method::KnockoffA | Method::KnockoffB | Method::KnockoffCombined => "knockoff",
        }
    }

    /// Methods reported for each setting by default.
    pub fn defaults_for(setting: Setting) -> Vec<Method> {
        use Method::*;
        match setting {
            Setting::E1 | Setting::E2 | Setting::F1 | Setting::F2 | Setting::F3 => {
                vec![BcCom, BcSep, Ebh1, Ebh2, GroupAda]
            }
            Setting::S1 | Setting::S2 => vec![Bh, Bc, Storey, HybridAve, HybridAda, HybridFast],
            Setting::Struct => vec![Bh, Fbc],
            Setting::KnockSynth => vec![KnockoffA, KnockoffB, KnockoffCombined],
            Setting::AllNull => vec![
                BcCom, BcSep, Ebh1, Ebh2, GroupAda, Bh, Bc, Storey, HybridAve, HybridAda,
                HybridFast, Fbc, FbcUnit,
            ],
        }
    }
}

/// Rejections of one method on one instance, with `sum_{H0} e_i` when the
/// method is e-value based.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub rejected: RejectionSet,
    pub null_evalue_sum: Option<f64>,
}

fn null_sum(e: &EValueSet, non_null: &[bool]) -> f64 {
    e.as_slice()
        .iter()
        .zip(non_null)
        .filter(|(_, &alt)| !alt)
        .map(|(v, _)| v)
        .sum()
}

fn need<'a, T>(x: &'a Option<T>, what: &str, m: Method) -> Result<&'a T> {
    x.as_ref()
        .ok_or_else(|| Error::Config(format!("{} needs {what}", m.label())))
}

fn em_for(params: &SettingParams) -> EmConfig {
    let mut em = EmConfig::default();
    match params {
        SettingParams::Struct(s) => {
            em.restarts = s.em_restarts;
            em.max_iter = s.em_max_iter;
        }
        SettingParams::AllNull(a) => {
            em.restarts = a.em_restarts;
            em.max_iter = a.em_max_iter;
        }
        _ => {}
    }
    em
}

/// Applies `method` to `inst` at level `alpha`.
pub fn evaluate(
    method: Method,
    inst: &Instance,
    alpha: f64,
    params: &SettingParams,
) -> Result<MethodOutcome> {
    let truth = &inst.non_null;
    let with_e = |rejected: RejectionSet, e: &EValueSet| MethodOutcome {
        rejected,
        null_evalue_sum: Some(null_sum(e, truth)),
    };
    let p = || need(&inst.pvals, "p-values", method);
    let groups = || need(&inst.groups, "a group partition", method);
    Ok(match method {
        Method::BcCom => MethodOutcome {
            rejected: bc_threshold(p()?.as_slice(), alpha).rejected,
            null_evalue_sum: None,
        },
        Method::BcSep => {
            let th = groupwise_bc_thresholds(p()?, groups()?, alpha)?;
            let all = th.into_iter().flat_map(|t| t.rejected.indices().to_vec()).collect();
            MethodOutcome {
                rejected: RejectionSet::from_indices(all, truth.len())?,
                null_evalue_sum: None,
            }
        }
        Method::Ebh1 | Method::Ebh2 | Method::GroupAda => {
            let scheme = match method {
                Method::Ebh1 => WeightScheme::Unit,
                Method::Ebh2 => WeightScheme::SizeAdjusted,
                _ => WeightScheme::Adaptive,
            };
            let r = run_algorithm1(p()?, groups()?, alpha, scheme)?;
            with_e(r.rejected, &r.evalues)
        }
        Method::Bh | Method::Bc | Method::Storey => {
            let spec = match method {
                Method::Bh => ProcedureSpec::bh(alpha),
                Method::Bc => ProcedureSpec::bc(alpha),
                _ => ProcedureSpec::storey(alpha, 0.5),
            };
            let pv: &PValueSet = p()?;
            let r = solve_threshold(pv, &spec)?;
            let e = procedure_to_evalues(pv, &spec, &r)?;
            with_e(r.rejected, &e)
        }
        Method::HybridAve | Method::HybridAda | Method::HybridFast => {
            let mode = match method {
                Method::HybridAve => HybridWeightMode::Averaged,
                Method::HybridAda => HybridWeightMode::Adaptive,
                _ => HybridWeightMode::FastAdaptive,
            };
            let out = run_hybrid(p()?, &HybridConfig::new(alpha, mode)?)?;
            with_e(out.rejected, &out.evalues)
        }
        Method::Fbc | Method::FbcUnit => {
            let covars = need(&inst.covars, "covariates", method)?;
            let mut cfg = StructureConfig::new(alpha, inst.method_seed)?;
            cfg.em = em_for(params);
            if method == Method::FbcUnit {
                cfg.mode = StructureWeightMode::Unit;
            }
            let out = run_structure_adaptive(p()?, covars, &cfg)?;
            with_e(out.rejected, &out.evalues)
        }
        Method::KnockoffA | Method::KnockoffB => {
            let (a, b) = need(&inst.knockoff, "knockoff statistics", method)?;
            let s = if method == Method::KnockoffA { a } else { b };
            let r = knockoff_threshold(s, alpha)?;
            with_e(r.rejected, &knockoff_evalues(s, alpha)?)
        }
        Method::KnockoffCombined => {
            let (a, b) = need(&inst.knockoff, "knockoff statistics", method)?;
            let c = combine_and_select(a, b, alpha, 0.5, 0.5)?;
            with_e(c.rejected, &c.evalues)
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metric {
    pub name: String,
    pub mean: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodMetrics {
    pub method: String,
    pub family: String,
    pub metrics: Vec<Metric>,
}

impl MethodMetrics {
    pub fn get(&self, name: &str) -> Option<&Metric> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub setting: String,
    pub replications: usize,
    pub seed: u64,
    pub target_alpha: f64,
    pub rows: Vec<MethodMetrics>,
    pub wall_clock_secs: f64,
}

impl MetricsReport {
    pub fn row(&self, method: Method) -> Option<&MethodMetrics> {
        self.rows
            .iter()
            .find(|r| r.method == method.label() && r.family == method.family())
    }

    pub fn value(&self, method: Method, metric: &str) -> Option<f64> {
        self.row(method).and_then(|r| r.get(metric)).map(|m| m.mean)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per (setting, method, metric).
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Error::Internal(e.to_string());
        w.write_record(["setting", "family", "method", "metric", "value", "se", "replications"])
            .map_err(io)?;
        for row in &self.rows {
            for m in &row.metrics {
                w.write_record([
                    self.setting.as_str(),
                    row.family.as_str(),
                    row.method.as_str(),
                    m.name.as_str(),
                    &m.mean.to_string(),
                    &m.se.to_string(),
                    &self.replications.to_string(),
                ])
                .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Internal(e.to_string()))
    }
}

/// Named per-replicate values for one method.
fn replicate_values(method: Method, inst: &Instance, out: &MethodOutcome) -> Result<Vec<(String, f64)>> {
    let (fdp, pow) = fdp_power(&out.rejected, &inst.non_null)?;
    let mut v = vec![("FDR".to_string(), fdp), ("POW".to_string(), pow)];
    if let Some(part) = &inst.groups {
        if method.family() == "groups" {
            for (g, (f, p)) in group_fdp_power(&out.rejected, &inst.non_null, part)?
                .into_iter()
                .enumerate()
            {
                v.push((format!("FDR{}", g + 1), f));
                v.push((format!("POW{}", g + 1), p));
            }
        }
    }
    if let Some(s) = out.null_evalue_sum {
        v.push(("NULL_E_SUM".to_string(), s));
    }
    v.push(("REJECTIONS".to_string(), out.rejected.len() as f64));
    Ok(v)
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs every replicate and aggregates means and standard errors.
///
/// Replicates run in parallel; results are gathered in replicate order
/// before reduction, so reports are bit-identical across thread counts.
pub fn run_campaign(cfg: &SimulationConfig, methods: &[Method]) -> Result<MetricsReport> {
    cfg.validate()?;
    if methods.is_empty() {
        return config("no methods requested");
    }
    let start = Instant::now();
    let per_rep: Vec<Vec<Vec<(String, f64)>>> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let inst = generate(cfg, r)?;
            methods
                .iter()
                .map(|&m| {
                    let out = evaluate(m, &inst, cfg.target_alpha, &cfg.params)?;
                    replicate_values(m, &inst, &out)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = methods
        .iter()
        .enumerate()
        .map(|(k, &m)| {
            let names: Vec<String> = per_rep[0][k].iter().map(|(n, _)| n.clone()).collect();
            let metrics = names
                .iter()
                .enumerate()
                .map(|(j, name)| {
                    let xs: Vec<f64> = per_rep.iter().map(|rep| rep[k][j].1).collect();
                    let (mean, se) = mean_se(&xs);
                    Metric {
                        name: name.clone(),
                        mean,
                        se,
                    }
                })
                .collect();
            MethodMetrics {
                method: m.label().to_string(),
                family: m.family().to_string(),
                metrics,
            }
        })
        .collect();
    Ok(MetricsReport {
        setting: cfg.setting.name().to_string(),
        replications: cfg.replications,
        seed: cfg.seed,
        target_alpha: cfg.target_alpha,
        rows,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
