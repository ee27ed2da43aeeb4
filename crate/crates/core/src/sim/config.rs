use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_alpha, config, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    E1,
    E2,
    F1,
    F2,
    F3,
    S1,
    S2,
    #[serde(rename = "STRUCT")]
    Struct,
    #[serde(rename = "KNOCK_SYNTH")]
    KnockSynth,
    #[serde(rename = "ALLNULL")]
    AllNull,
}

impl Setting {
    pub const ALL: [Setting; 10] = [
        Setting::E1,
        Setting::E2,
        Setting::F1,
        Setting::F2,
        Setting::F3,
        Setting::S1,
        Setting::S2,
        Setting::Struct,
        Setting::KnockSynth,
        Setting::AllNull,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Setting::E1 => "E1",
            Setting::E2 => "E2",
            Setting::F1 => "F1",
            Setting::F2 => "F2",
            Setting::F3 => "F3",
            Setting::S1 => "S1",
            Setting::S2 => "S2",
            Setting::Struct => "STRUCT",
            Setting::KnockSynth => "KNOCK_SYNTH",
            Setting::AllNull => "ALLNULL",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown setting '{s}'")))
    }

    fn default_alpha(self) -> f64 {
        match self {
            Setting::F3 | Setting::KnockSynth => 0.2,
            Setting::Struct => 0.1,
            _ => 0.05,
        }
    }

    fn default_replications(self) -> usize {
        match self {
            Setting::S1 | Setting::S2 => 500,
            Setting::Struct => 100,
            _ => 1000,
        }
    }
}

/// One group of a grouped setting: `n` hypotheses of which the first
/// `n_alt` have Beta(`a`, `b`) p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub n: usize,
    pub n_alt: usize,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupParams {
    pub groups: Vec<GroupSpec>,
}

/// Alternatives `X ~ N(mu ln n, sigma^2)`, nulls `N(0, 1)`, `p = 1 - Phi(X)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalParams {
    pub n: usize,
    pub n_alt: usize,
    pub mu: f64,
    pub sigma: f64,
}

/// Covariate-driven signal density and strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructParams {
    pub n: usize,
    pub a0: f64,
    pub a1: f64,
    pub af: f64,
    pub mu: f64,
    pub em_restarts: usize,
    pub em_max_iter: usize,
}

/// Family A carries `n_signal` positive statistics with mean
/// `signal_mean`; family B is pure sign-symmetric noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnockoffParams {
    pub p: usize,
    pub n_signal: usize,
    pub signal_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AllNullParams {
    pub n: usize,
    pub groups: usize,
    pub dim: usize,
    pub em_restarts: usize,
    pub em_max_iter: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum SettingParams {
    Groups(GroupParams),
    Normal(NormalParams),
    Struct(StructParams),
    Knockoff(KnockoffParams),
    AllNull(AllNullParams),
}

fn g(n: usize, n_alt: usize, a: f64, b: f64) -> GroupSpec {
    GroupSpec { n, n_alt, a, b }
}

impl SettingParams {
    pub fn defaults(setting: Setting) -> Self {
        use Setting::*;
        match setting {
            E1 => Self::Groups(GroupParams {
                groups: vec![g(100, 20, 4.0, 500.0), g(1000, 20, 0.1, 500.0)],
            }),
            E2 => Self::Groups(GroupParams {
                groups: vec![g(100, 20, 0.5, 500.0), g(1000, 20, 0.5, 500.0)],
            }),
            F1 => Self::Groups(GroupParams {
                groups: vec![
                    g(100, 20, 0.1, 500.0),
                    g(100, 20, 0.1, 500.0),
                    g(1000, 20, 0.1, 500.0),
                    g(1000, 20, 0.1, 500.0),
                ],
            }),
            F2 => Self::Groups(GroupParams {
                groups: vec![
                    g(100, 1, 0.01, 5000.0),
                    g(100, 20, 0.1, 500.0),
                    g(100, 20, 0.1, 500.0),
                    g(100, 20, 0.1, 500.0),
                ],
            }),
            F3 => Self::Groups(GroupParams {
                groups: vec![
                    g(50, 2, 0.1, 500.0),
                    g(100, 2, 0.1, 500.0),
                    g(50, 4, 0.2, 500.0),
                    g(100, 4, 0.3, 500.0),
                ],
            }),
            S1 => Self::Normal(NormalParams {
                n: 1000,
                n_alt: 50,
                mu: 0.4,
                sigma: 1.0,
            }),
            S2 => Self::Normal(NormalParams {
                n: 3000,
                n_alt: 750,
                mu: 0.285,
                sigma: 0.4,
            }),
            Struct => Self::Struct(StructParams {
                n: 3000,
                a0: 3.5,
                a1: 2.5,
                af: 1.0,
                mu: 3.0,
                em_restarts: 5,
                em_max_iter: 200,
            }),
            KnockSynth => Self::Knockoff(KnockoffParams {
                p: 500,
                n_signal: 50,
                signal_mean: 3.0,
            }),
            AllNull => Self::AllNull(AllNullParams {
                n: 1000,
                groups: 2,
                dim: 1,
                em_restarts: 0,
                em_max_iter: 100,
            }),
        }
    }

    fn with_overrides(self, table: &toml::Table) -> Result<Self> {
        Ok(match self {
            Self::Groups(p) => Self::Groups(merge(&p, table)?),
            Self::Normal(p) => Self::Normal(merge(&p, table)?),
            Self::Struct(p) => Self::Struct(merge(&p, table)?),
            Self::Knockoff(p) => Self::Knockoff(merge(&p, table)?),
            Self::AllNull(p) => Self::AllNull(merge(&p, table)?),
        })
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| config::<()>(m.to_string());
        match self {
            Self::Groups(p) => {
                if p.groups.is_empty() {
                    return bad("at least one group is required");
                }
                for s in &p.groups {
                    if s.n == 0 || s.n_alt > s.n || !(s.a > 0.0 && s.b > 0.0) {
                        return bad("each group needs n >= 1, n_alt <= n and positive beta parameters");
                    }
                }
            }
            Self::Normal(p) => {
                if p.n == 0 || p.n_alt > p.n || !(p.sigma > 0.0) || !p.mu.is_finite() {
                    return bad("normal setting needs n >= 1, n_alt <= n, sigma > 0");
                }
            }
            Self::Struct(p) => {
                if p.n < 8 || ![p.a0, p.a1, p.af, p.mu].iter().all(|v| v.is_finite()) {
                    return bad("structure setting needs n >= 8 and finite parameters");
                }
            }
            Self::Knockoff(p) => {
                if p.p == 0 || p.n_signal > p.p || !p.signal_mean.is_finite() {
                    return bad("knockoff setting needs p >= 1 and n_signal <= p");
                }
            }
            Self::AllNull(p) => {
                if p.n == 0 || p.groups == 0 || p.groups > p.n {
                    return bad("all-null setting needs 1 <= groups <= n");
                }
            }
        }
        Ok(())
    }
}

fn merge<T: Serialize + DeserializeOwned>(base: &T, over: &toml::Table) -> Result<T> {
    let mut table = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in over {
        if !table.contains_key(k) {
            return config(format!("unknown parameter '{k}'"));
        }
        table.insert(k.clone(), v.clone());
    }
    table
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationConfig {
    pub setting: Setting,
    pub params: SettingParams,
    pub replications: usize,
    pub seed: u64,
    pub target_alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    setting: String,
    replications: Option<usize>,
    seed: Option<u64>,
    target_alpha: Option<f64>,
    params: Option<toml::Table>,
}

impl SimulationConfig {
    /// Published defaults for `setting`.
    pub fn new(setting: Setting, seed: u64) -> Self {
        Self {
            setting,
            params: SettingParams::defaults(setting),
            replications: setting.default_replications(),
            seed,
            target_alpha: setting.default_alpha(),
        }
    }

    pub fn with_replications(mut self, reps: usize) -> Self {
        self.replications = reps;
        self
    }

    /// Parses a TOML document; unspecified fields fall back to defaults.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config: {e}")))?;
        let setting = Setting::parse(&raw.setting)?;
        let mut cfg = Self::new(setting, raw.seed.unwrap_or(0));
        if let Some(r) = raw.replications {
            cfg.replications = r;
        }
        if let Some(a) = raw.target_alpha {
            cfg.target_alpha = a;
        }
        if let Some(t) = raw.params {
            cfg.params = cfg.params.with_overrides(&t)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return config("replications must be at least 1");
        }
        check_alpha(self.target_alpha, "target_alpha")?;
        self.params.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_published_tables() {
        let c = SimulationConfig::new(Setting::E1, 7);
        let SettingParams::Groups(p) = &c.params else { panic!() };
        assert_eq!(p.groups[0], g(100, 20, 4.0, 500.0));
        assert_eq!(p.groups[1], g(1000, 20, 0.1, 500.0));
        assert_eq!(SimulationConfig::new(Setting::F3, 0).target_alpha, 0.2);
    }

    #[test]
    fn toml_overrides() {
        let c = SimulationConfig::from_toml_str(
            "setting = \"S1\"\nreplications = 10\nseed = 3\n[params]\nmu = 0.45\n",
        )
        .unwrap();
        assert_eq!(c.replications, 10);
        let SettingParams::Normal(p) = &c.params else { panic!() };
        assert_eq!(p.mu, 0.45);
        assert_eq!(p.n, 1000);
    }

    #[test]
    fn toml_errors() {
        assert!(SimulationConfig::from_toml_str("setting = \"Z9\"").is_err());
        assert!(SimulationConfig::from_toml_str("setting = \"S1\"\n[params]\nfoo = 1").is_err());
        assert!(SimulationConfig::from_toml_str("setting = \"S1\"\nreplications = 0").is_err());
        assert!(SimulationConfig::from_toml_str("setting = \"S1\"\n[params]\nsigma = -1.0").is_err());
    }
}
