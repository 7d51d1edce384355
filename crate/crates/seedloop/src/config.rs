//! The run configuration record shared by `run --config`, `POST /runs` and the
//! `config.json` file inside every run directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use seedloop_core::lexicon::ZeroShotLexicon;
use seedloop_core::oracle::{NoisyOracle, ScriptedOracle};
use seedloop_core::prompt::PromptTemplate;
use seedloop_core::synth::{default_lexicon, SynthCategory};
use seedloop_core::{ConfigError, LoopConfig, Oracle, OracleError, Scorer};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::remote::{RemoteOracle, RemoteScorer, RemoteSettings};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("unknown oracle {0:?}; expected scripted, noisy:RHO, remote:URL or human")]
    Oracle(String),
    #[error("unknown scorer {0:?}; expected lexicon, lexicon:PATH or remote:URL")]
    Scorer(String),
    #[error("no built-in lexicon for category {0:?}; pass a lexicon file")]
    NoBuiltinLexicon(String),
    #[error("cannot read lexicon {path}: {source}")]
    LexiconIo { path: PathBuf, source: std::io::Error },
    #[error("lexicon {path}: {source}")]
    Lexicon {
        path: PathBuf,
        source: seedloop_core::lexicon::LexiconError,
    },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("the human oracle has no in-process implementation; start `seedloop serve`")]
    HumanInProcess,
    #[error(transparent)]
    OracleSetup(#[from] OracleError),
}

/// Who answers annotation requests.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleSpec {
    Scripted,
    Noisy(f64),
    Remote(String),
    Human,
}

impl OracleSpec {
    pub fn is_human(&self) -> bool {
        matches!(self, OracleSpec::Human)
    }

    /// Builds an in-process oracle. Noisy oracles draw from the run seed.
    pub fn build(
        &self,
        seed: u64,
        category: &str,
        remote: &RemoteSettings,
    ) -> Result<Box<dyn Oracle + Send>, SpecError> {
        Ok(match self {
            OracleSpec::Scripted => Box::new(ScriptedOracle::new()),
            OracleSpec::Noisy(rho) => Box::new(NoisyOracle::new(*rho, seed)?),
            OracleSpec::Remote(url) => Box::new(RemoteOracle::new(
                url.clone(),
                PromptTemplate::for_category(category),
                remote.clone(),
            )),
            OracleSpec::Human => return Err(SpecError::HumanInProcess),
        })
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::Scripted => f.write_str("scripted"),
            OracleSpec::Noisy(rho) => write!(f, "noisy:{rho}"),
            OracleSpec::Remote(url) => write!(f, "remote:{url}"),
            OracleSpec::Human => f.write_str("human"),
        }
    }
}

impl FromStr for OracleSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "scripted" => Ok(OracleSpec::Scripted),
            None if s == "human" => Ok(OracleSpec::Human),
            Some(("noisy", rho)) => rho
                .parse::<f64>()
                .ok()
                .filter(|r| (0.0..=0.5).contains(r))
                .map(OracleSpec::Noisy)
                .ok_or_else(|| SpecError::Oracle(s.into())),
            Some(("remote", url)) if !url.is_empty() => Ok(OracleSpec::Remote(url.into())),
            _ => Err(SpecError::Oracle(s.into())),
        }
    }
}

/// Where zero-shot scores come from.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum ScorerSpec {
    /// The built-in lexicon for a synthetic category.
    #[default]
    Builtin,
    Lexicon(PathBuf),
    Remote(String),
}

impl ScorerSpec {
    pub fn build(
        &self,
        category: &str,
        temperature: f64,
        remote: &RemoteSettings,
    ) -> Result<Box<dyn Scorer + Send + Sync>, SpecError> {
        Ok(match self {
            ScorerSpec::Builtin => {
                let cat = SynthCategory::parse(category).ok_or_else(|| SpecError::NoBuiltinLexicon(category.into()))?;
                Box::new(default_lexicon(cat, temperature).map_err(|source| SpecError::Lexicon {
                    path: PathBuf::from("<builtin>"),
                    source,
                })?)
            }
            ScorerSpec::Lexicon(path) => Box::new(load_lexicon(path, temperature)?),
            ScorerSpec::Remote(url) => Box::new(RemoteScorer::new(
                url.clone(),
                PromptTemplate::for_category(category),
                remote.clone(),
            )),
        })
    }
}

impl fmt::Display for ScorerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerSpec::Builtin => f.write_str("lexicon"),
            ScorerSpec::Lexicon(p) => write!(f, "lexicon:{}", p.display()),
            ScorerSpec::Remote(url) => write!(f, "remote:{url}"),
        }
    }
}

impl FromStr for ScorerSpec {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            None if s == "lexicon" => Ok(ScorerSpec::Builtin),
            Some(("lexicon", path)) if !path.is_empty() => Ok(ScorerSpec::Lexicon(path.into())),
            Some(("remote", url)) if !url.is_empty() => Ok(ScorerSpec::Remote(url.into())),
            _ => Err(SpecError::Scorer(s.into())),
        }
    }
}

macro_rules! string_serde {
    ($t:ty) => {
        impl Serialize for $t {
            fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                s.collect_str(self)
            }
        }

        impl<'de> Deserialize<'de> for $t {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }
    };
}

string_serde!(OracleSpec);
string_serde!(ScorerSpec);

/// Reads a `term<TAB>weight<TAB>+|-` lexicon file.
pub fn load_lexicon(path: &Path, temperature: f64) -> Result<ZeroShotLexicon, SpecError> {
    let text = std::fs::read_to_string(path).map_err(|source| SpecError::LexiconIo {
        path: path.to_path_buf(),
        source,
    })?;
    ZeroShotLexicon::parse(&text, temperature).map_err(|source| SpecError::Lexicon {
        path: path.to_path_buf(),
        source,
    })
}

fn default_temperature() -> f64 {
    1.0
}

fn is_default<T: Default + PartialEq>(v: &T) -> bool {
    *v == T::default()
}

/// A complete run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub loop_config: LoopConfig,
    pub dataset: PathBuf,
    pub oracle: OracleSpec,
    /// Oracle for the final audit; the training oracle when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit_oracle: Option<OracleSpec>,
    #[serde(default)]
    pub scorer: ScorerSpec,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "is_default")]
    pub remote: RemoteSettings,
}

impl RunConfig {
    pub fn new(loop_config: LoopConfig, dataset: impl Into<PathBuf>, oracle: OracleSpec) -> Self {
        RunConfig {
            loop_config,
            dataset: dataset.into(),
            oracle,
            audit_oracle: None,
            scorer: ScorerSpec::Builtin,
            temperature: 1.0,
            remote: RemoteSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        self.loop_config.validate()?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(SpecError::Lexicon {
                path: PathBuf::from("<temperature>"),
                source: seedloop_core::lexicon::LexiconError::Temperature(self.temperature),
            });
        }
        Ok(())
    }

    pub fn audit_oracle(&self) -> &OracleSpec {
        self.audit_oracle.as_ref().unwrap_or(&self.oracle)
    }

    /// True when some batch must be answered through the service.
    pub fn needs_human(&self) -> bool {
        self.oracle.is_human() || self.audit_oracle().is_human()
    }

    pub fn build_scorer(&self) -> Result<Box<dyn Scorer + Send + Sync>, SpecError> {
        self.scorer
            .build(&self.loop_config.category, self.temperature, &self.remote)
    }

    /// Label used for this run in comparison tables.
    pub fn method_name(&self) -> String {
        format!("model + {}", self.loop_config.strategy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_specs() {
        for s in ["scripted", "human", "noisy:0.1", "remote:http://127.0.0.1:9/x"] {
            assert_eq!(s.parse::<OracleSpec>().unwrap().to_string(), s);
        }
        for s in ["noisy:0.7", "noisy:x", "remote:", "gemini", ""] {
            assert!(s.parse::<OracleSpec>().is_err(), "{s}");
        }
    }

    #[test]
    fn config_file_round_trip() {
        let mut cfg = RunConfig::new(LoopConfig::default(), "data.ndjson", OracleSpec::Noisy(0.05));
        cfg.audit_oracle = Some(OracleSpec::Scripted);
        cfg.loop_config.seed = 7;
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("\"k\": 16"), "{text}");
        assert!(text.contains("\"oracle\": \"noisy:0.05\""), "{text}");
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"dataset":"d.ndjson","oracle":"scripted","k":4,"max_iterations":1}"#).unwrap();
        assert_eq!(cfg.loop_config.k, 4);
        assert_eq!(cfg.loop_config.n_eval, 200);
        assert_eq!(cfg.scorer, ScorerSpec::Builtin);
        assert_eq!(cfg.temperature, 1.0);
        assert!(!cfg.needs_human());
    }
}
