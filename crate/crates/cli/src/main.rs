mod output;
mod table;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use evmt_core::groups::{run_algorithm1, GroupPartition, WeightScheme};
use evmt_core::hybrid::{run_hybrid, HybridConfig, HybridWeightMode};
use evmt_core::knockoff::{combine_and_select, KnockoffStatSet};
use evmt_core::lfdr::{CovariateSet, LfdrRule};
use evmt_core::sim::{configure_threads, run_campaign, Method, Setting, SimulationConfig};
use evmt_core::structure::{run_structure_adaptive, StructureConfig, StructureWeightMode};
use evmt_core::{
    ebh_select, procedure_to_evalues, solve_threshold, storey_pi0, EValueSet, PValueSet,
    ProcedureSpec, SharedRule,
};
use serde_json::{json, Map, Value};

use output::{add_metrics, emit_summary, RejectionTable};
use table::InputTable;

const STOREY_LAMBDA: f64 = 0.5;

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Config(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

pub fn core_err(e: evmt_core::Error) -> CliError {
    match e {
        evmt_core::Error::Input(m) => CliError::Input(m),
        evmt_core::Error::Config(m) => CliError::Config(m),
        evmt_core::Error::Internal(m) => CliError::Internal(m),
    }
}

fn config<T>(msg: impl Into<String>) -> Result<T, CliError> {
    Err(CliError::Config(msg.into()))
}

/// Multiple testing with e-values: threshold procedures, weighted group
/// and hybrid combinations, structure-adaptive testing and simulations.
#[derive(Parser)]
#[command(name = "evmt", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Benjamini-Hochberg on the `pvalue` column
    Bh(Flags),
    /// Storey's adaptive BH (lambda = 0.5)
    Storey(Flags),
    /// Barber-Candes mirror procedure
    Bc(Flags),
    /// Flexible BC with local-fdr rules from `lfdr_pi` and `lfdr_kappa`
    Fbc(Flags),
    /// e-BH on the `evalue` column
    Ebh(Flags),
    /// Group-wise BC combined by weighted e-BH (`group` column required)
    Groups(Flags),
    /// Hybrid of BH and BC e-values
    Hybrid(Flags),
    /// Structure-adaptive testing; non-reserved columns are covariates
    Adaptive(Flags),
    /// Combine two knockoff statistic files (column `w`); pass --input twice
    #[command(name = "knockoff-combine")]
    KnockoffCombine(Flags),
    /// Run a simulation campaign and write a metrics CSV
    Simulate(Flags),
}

#[derive(Args, Default)]
struct Flags {
    /// Input CSV (or a TOML campaign file for `simulate`)
    #[arg(long)]
    input: Vec<PathBuf>,
    /// Target FDR level
    #[arg(long)]
    alpha: Option<f64>,
    /// unit|size|adaptive (groups), averaged|adaptive|fast (hybrid), unit|cheap|full (adaptive)
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replications (simulate only)
    #[arg(long)]
    reps: Option<usize>,
    /// Setting name (simulate only)
    #[arg(long)]
    setting: Option<String>,
}

impl Flags {
    fn alpha(&self) -> Result<f64, CliError> {
        let a = self.alpha.unwrap_or(0.05);
        if !(a > 0.0 && a < 1.0) {
            return config(format!("--alpha must lie in (0, 1), got {a}"));
        }
        Ok(a)
    }

    fn single_input(&self) -> Result<InputTable, CliError> {
        match self.input.as_slice() {
            [p] => InputTable::read(p),
            [] => config("--input is required"),
            _ => config("--input may be given only once for this command"),
        }
    }

    /// Rejects flags that mean nothing for `cmd`.
    fn only(&self, cmd: &str, weights: bool, seed: bool, sim: bool) -> Result<(), CliError> {
        let bad = |flag: &str| config(format!("{flag} is not accepted by '{cmd}'"));
        if !weights && self.weights.is_some() {
            return bad("--weights");
        }
        if !seed && self.seed.is_some() {
            return bad("--seed");
        }
        if !sim && self.reps.is_some() {
            return bad("--reps");
        }
        if !sim && self.setting.is_some() {
            return bad("--setting");
        }
        Ok(())
    }

    /// The given seed, or a fresh one that is reported so the run can be repeated.
    fn seed(&self) -> u64 {
        self.seed.unwrap_or_else(|| {
            let s = rand::random::<u64>();
            eprintln!("seed: {s}");
            s
        })
    }

    fn out(&self) -> Option<&Path> {
        self.out.as_deref()
    }
}

fn pvalues(t: &InputTable) -> Result<PValueSet, CliError> {
    PValueSet::new(t.reals("pvalue", Some((0.0, 1.0)))?).map_err(core_err)
}

fn finish(
    f: &Flags,
    mut summary: Map<String, Value>,
    table: RejectionTable<'_>,
    truth: Option<&[bool]>,
) -> Result<(), CliError> {
    summary.insert("rejections".into(), json!(table.rejected.len()));
    add_metrics(&mut summary, table.rejected, truth)?;
    table.write(f.out())?;
    emit_summary(&Value::Object(summary), f.out().is_none());
    Ok(())
}

fn head(cmd: &str, n: usize, alpha: f64) -> Map<String, Value> {
    let mut m = Map::new();
    m.insert("command".into(), json!(cmd));
    m.insert("n".into(), json!(n));
    m.insert("alpha".into(), json!(alpha));
    m
}

fn run_threshold(cmd: &str, f: &Flags) -> Result<(), CliError> {
    f.only(cmd, false, false, false)?;
    let alpha = f.alpha()?;
    let t = f.single_input()?;
    let p = pvalues(&t)?;
    let n = p.len();
    let spec = match cmd {
        "bh" => ProcedureSpec::bh(alpha),
        "storey" => ProcedureSpec::storey(alpha, STOREY_LAMBDA),
        "bc" => ProcedureSpec::bc(alpha),
        _ => {
            let pi = t.reals("lfdr_pi", Some((0.0, 1.0)))?;
            let kappa = t.reals("lfdr_kappa", Some((0.0, 1.0)))?;
            if let Some(k) = (0..n).find(|&k| pi[k] == 0.0 || kappa[k] == 1.0) {
                return Err(CliError::Input(format!(
                    "row {}: lfdr_pi must be positive and lfdr_kappa below 1",
                    k + 1
                )));
            }
            let rules: Vec<SharedRule> = (0..n)
                .map(|k| Arc::new(LfdrRule { pi: pi[k], kappa: kappa[k] }) as SharedRule)
                .collect();
            ProcedureSpec::fbc_auto(alpha, rules)
        }
    };
    let th = solve_threshold(&p, &spec).map_err(core_err)?;
    let e = procedure_to_evalues(&p, &spec, &th).map_err(core_err)?;
    let mut s = head(cmd, n, alpha);
    s.insert("threshold".into(), json!(th.threshold));
    if cmd == "storey" {
        s.insert("pi0".into(), json!(storey_pi0(&p, STOREY_LAMBDA).map_err(core_err)?));
    }
    if cmd == "fbc" {
        s.insert("t_upper".into(), json!(spec.t_upper));
    }
    let ones = vec![1.0; n];
    let truth = t.truth()?;
    finish(
        f,
        s,
        RejectionTable {
            rejected: &th.rejected,
            evalues: e.as_slice(),
            weights: &ones,
            weights_bc: None,
        },
        truth.as_deref(),
    )
}

fn run_ebh(f: &Flags) -> Result<(), CliError> {
    f.only("ebh", false, false, false)?;
    let alpha = f.alpha()?;
    let t = f.single_input()?;
    let e = EValueSet::new(t.reals("evalue", Some((0.0, f64::MAX)))?).map_err(core_err)?;
    let rejected = ebh_select(&e, alpha).map_err(core_err)?;
    let ones = vec![1.0; e.len()];
    let truth = t.truth()?;
    finish(
        f,
        head("ebh", e.len(), alpha),
        RejectionTable {
            rejected: &rejected,
            evalues: e.as_slice(),
            weights: &ones,
            weights_bc: None,
        },
        truth.as_deref(),
    )
}

fn run_groups(f: &Flags) -> Result<(), CliError> {
    f.only("groups", true, false, false)?;
    let alpha = f.alpha()?;
    let scheme = match f.weights.as_deref().unwrap_or("adaptive") {
        "unit" => WeightScheme::Unit,
        "size" => WeightScheme::SizeAdjusted,
        "adaptive" => WeightScheme::Adaptive,
        other => return config(format!("groups accepts --weights unit|size|adaptive, got '{other}'")),
    };
    let t = f.single_input()?;
    let p = pvalues(&t)?;
    let (part, names) = GroupPartition::from_names(&t.strings("group")?).map_err(core_err)?;
    let r = run_algorithm1(&p, &part, alpha, scheme).map_err(core_err)?;
    let truth = t.truth()?;
    let by_group = r.rejected_by_group(&part);
    let groups: Vec<Value> = names
        .iter()
        .enumerate()
        .map(|(g, name)| {
            let mut m = Map::new();
            m.insert("group".into(), json!(name));
            m.insert("size".into(), json!(part.size(g)));
            m.insert("threshold".into(), json!(r.thresholds[g]));
            m.insert("bc_rejections".into(), json!(r.group_bc[g].len()));
            m.insert("rejections".into(), json!(by_group[g].len()));
            Value::Object(m)
        })
        .collect();
    let mut groups = groups;
    if let Some(tr) = truth.as_deref() {
        let per = evmt_core::groups::group_fdp_power(&r.rejected, tr, &part).map_err(core_err)?;
        for (v, (fdp, power)) in groups.iter_mut().zip(per) {
            v["fdp"] = json!(fdp);
            v["power"] = json!(power);
        }
    }
    let mut s = head("groups", p.len(), alpha);
    s.insert("weights".into(), json!(format!("{scheme:?}").to_lowercase()));
    s.insert("groups".into(), Value::Array(groups));
    finish(
        f,
        s,
        RejectionTable {
            rejected: &r.rejected,
            evalues: r.evalues.as_slice(),
            weights: r.weights.as_slice(),
            weights_bc: None,
        },
        truth.as_deref(),
    )
}

fn run_hybrid_cmd(f: &Flags) -> Result<(), CliError> {
    f.only("hybrid", true, false, false)?;
    let alpha = f.alpha()?;
    let mode = match f.weights.as_deref().unwrap_or("adaptive") {
        "averaged" => HybridWeightMode::Averaged,
        "adaptive" => HybridWeightMode::Adaptive,
        "fast" => HybridWeightMode::FastAdaptive,
        other => return config(format!("hybrid accepts --weights averaged|adaptive|fast, got '{other}'")),
    };
    let t = f.single_input()?;
    let p = pvalues(&t)?;
    let cfg = HybridConfig::new(alpha, mode).map_err(core_err)?;
    let out = run_hybrid(&p, &cfg).map_err(core_err)?;
    let mut s = head("hybrid", p.len(), alpha);
    s.insert("weights".into(), json!(format!("{mode:?}").to_lowercase()));
    s.insert("alpha_bh".into(), json!(cfg.alpha_bh));
    s.insert("alpha_bc".into(), json!(cfg.alpha_bc));
    let nz = |e: &EValueSet| e.as_slice().iter().filter(|&&v| v > 0.0).count();
    s.insert("bh_rejections".into(), json!(nz(&out.e_bh)));
    s.insert("bc_rejections".into(), json!(nz(&out.e_bc)));
    let truth = t.truth()?;
    finish(
        f,
        s,
        RejectionTable {
            rejected: &out.rejected,
            evalues: out.evalues.as_slice(),
            weights: out.w_bh.as_slice(),
            weights_bc: Some(out.w_bc.as_slice()),
        },
        truth.as_deref(),
    )
}

fn run_adaptive(f: &Flags) -> Result<(), CliError> {
    f.only("adaptive", true, true, false)?;
    let alpha = f.alpha()?;
    let mode = match f.weights.as_deref().unwrap_or("cheap") {
        "unit" => StructureWeightMode::Unit,
        "cheap" => StructureWeightMode::Cheap,
        "full" => StructureWeightMode::Full,
        other => return config(format!("adaptive accepts --weights unit|cheap|full, got '{other}'")),
    };
    let t = f.single_input()?;
    let p = pvalues(&t)?;
    let names = t.covariate_names();
    let cols = names
        .iter()
        .map(|c| t.reals(c, None))
        .collect::<Result<Vec<_>, _>>()?;
    let x = if cols.is_empty() {
        CovariateSet::empty(p.len())
    } else {
        let rows = (0..p.len()).map(|i| cols.iter().map(|c| c[i]).collect()).collect();
        CovariateSet::new(rows).map_err(core_err)?
    };
    let seed = f.seed();
    let mut cfg = StructureConfig::new(alpha, seed).map_err(core_err)?;
    cfg.mode = mode;
    let out = run_structure_adaptive(&p, &x, &cfg).map_err(core_err)?;
    let mut s = head("adaptive", p.len(), alpha);
    s.insert("seed".into(), json!(seed));
    s.insert("weights".into(), json!(format!("{mode:?}").to_lowercase()));
    s.insert("covariates".into(), json!(names));
    s.insert(
        "fold_thresholds".into(),
        json!(out.thresholds.iter().map(|g| g.result.threshold).collect::<Vec<_>>()),
    );
    let truth = t.truth()?;
    finish(
        f,
        s,
        RejectionTable {
            rejected: &out.rejected,
            evalues: out.evalues.as_slice(),
            weights: out.weights.as_slice(),
            weights_bc: None,
        },
        truth.as_deref(),
    )
}

fn run_knockoff(f: &Flags) -> Result<(), CliError> {
    f.only("knockoff-combine", false, false, false)?;
    let alpha = f.alpha()?;
    let [pa, pb] = f.input.as_slice() else {
        return config("knockoff-combine needs exactly two --input files");
    };
    let (ta, tb) = (InputTable::read(pa)?, InputTable::read(pb)?);
    let a = KnockoffStatSet::new(ta.reals("w", None)?).map_err(core_err)?;
    let b = KnockoffStatSet::new(tb.reals("w", None)?).map_err(core_err)?;
    let c = combine_and_select(&a, &b, alpha, 0.5, 0.5).map_err(core_err)?;
    let mut s = head("knockoff-combine", a.len(), alpha);
    s.insert("threshold_a".into(), json!(c.threshold_a));
    s.insert("threshold_b".into(), json!(c.threshold_b));
    let halves = vec![0.5; a.len()];
    let truth = ta.truth()?;
    finish(
        f,
        s,
        RejectionTable {
            rejected: &c.rejected,
            evalues: c.evalues.as_slice(),
            weights: &halves,
            weights_bc: None,
        },
        truth.as_deref(),
    )
}

fn run_simulate(f: &Flags) -> Result<(), CliError> {
    f.only("simulate", false, true, true)?;
    let mut cfg = match f.input.as_slice() {
        [] => {
            let name = f
                .setting
                .as_deref()
                .ok_or_else(|| CliError::Config("simulate needs --setting or a TOML --input".into()))?;
            SimulationConfig::new(Setting::parse(name).map_err(core_err)?, 0)
        }
        [path] => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            let mut c = SimulationConfig::from_toml_str(&text).map_err(core_err)?;
            if let Some(name) = &f.setting {
                if Setting::parse(name).map_err(core_err)? != c.setting {
                    return config("--setting disagrees with the campaign file");
                }
            }
            if f.seed.is_none() && !text.contains("seed") {
                c.seed = f.seed();
            }
            c
        }
        _ => return config("--input may be given only once for simulate"),
    };
    if f.input.is_empty() || f.seed.is_some() {
        cfg.seed = f.seed();
    }
    if let Some(r) = f.reps {
        cfg = cfg.with_replications(r);
    }
    if f.alpha.is_some() {
        cfg.target_alpha = f.alpha()?;
    }
    cfg.validate().map_err(core_err)?;
    let report = run_campaign(&cfg, &Method::defaults_for(cfg.setting)).map_err(core_err)?;
    let csv = report.to_csv().map_err(core_err)?;
    match f.out() {
        Some(p) => std::fs::write(p, csv).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    let summary: Value = serde_json::from_str(&report.to_json()).expect("report is valid JSON");
    emit_summary(&summary, f.out().is_none());
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match &cli.cmd {
        Cmd::Bh(f) => run_threshold("bh", f),
        Cmd::Storey(f) => run_threshold("storey", f),
        Cmd::Bc(f) => run_threshold("bc", f),
        Cmd::Fbc(f) => run_threshold("fbc", f),
        Cmd::Ebh(f) => run_ebh(f),
        Cmd::Groups(f) => run_groups(f),
        Cmd::Hybrid(f) => run_hybrid_cmd(f),
        Cmd::Adaptive(f) => run_adaptive(f),
        Cmd::KnockoffCombine(f) => run_knockoff(f),
        Cmd::Simulate(f) => run_simulate(f),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    configure_threads();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("evmt: {e}");
            ExitCode::from(e.code())
        }
    }
}
