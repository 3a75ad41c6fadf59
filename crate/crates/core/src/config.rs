//! Project configuration: lexicons, thresholds and the weight scheme.
//!
//! The on-disk form is TOML:
//!
//! ```toml
//! markers = ["should", "must"]
//! nfr_terms = ["usability", "easy to use"]
//!
//! [thresholds]
//! theta_link = 0.5
//! theta_dup = 0.9
//! min_score = 0
//! min_relevance = 0
//!
//! [[dimension]]
//! name = "Quality"
//! kind = "value"
//! weight = 7
//! ```

use serde::{Deserialize, Serialize};

use crate::cluster::Stopwords;
use crate::error::ConfigError;
use crate::extract::{ExtractConfig, NfrLexicon};
use crate::prioritize::{Dimension, PruneThresholds, WeightScheme};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Thresholds {
    pub theta_link: f64,
    pub theta_dup: f64,
    pub min_score: f64,
    pub min_relevance: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            theta_link: 0.5,
            theta_dup: 0.9,
            min_score: 0.0,
            min_relevance: 0.0,
        }
    }
}

impl Thresholds {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let all = [self.theta_link, self.theta_dup, self.min_score, self.min_relevance];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(ConfigError::Threshold("values must be finite".into()));
        }
        if self.theta_link < 0.0 {
            return Err(ConfigError::Threshold("theta_link must be >= 0".into()));
        }
        if self.theta_dup < self.theta_link {
            return Err(ConfigError::Threshold(format!(
                "theta_dup ({}) must be >= theta_link ({})",
                self.theta_dup, self.theta_link
            )));
        }
        Ok(())
    }

    pub fn prune(&self) -> PruneThresholds {
        PruneThresholds {
            min_score: self.min_score,
            min_relevance: self.min_relevance,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundingRule {
    /// Half-up to two decimal places.
    #[default]
    HalfUp2,
}

impl RoundingRule {
    pub fn describe(self) -> &'static str {
        match self {
            RoundingRule::HalfUp2 => "ratios rounded half-up to 2 decimal places",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ProjectConfig {
    pub extract: ExtractConfig,
    pub stopwords: Stopwords,
    pub thresholds: Thresholds,
    pub weights: WeightScheme,
    pub rounding: RoundingRule,
}

impl ProjectConfig {
    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.message().to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes to toml")
    }
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    #[serde(default)]
    markers: Option<Vec<String>>,
    #[serde(default)]
    nfr_terms: Option<Vec<String>>,
    #[serde(default)]
    stopwords: Option<Vec<String>>,
    #[serde(default)]
    rounding: RoundingRule,
    #[serde(default)]
    thresholds: Thresholds,
    #[serde(default, rename = "dimension")]
    dimensions: Option<Vec<Dimension>>,
}

impl TryFrom<RawConfig> for ProjectConfig {
    type Error = ConfigError;

    fn try_from(raw: RawConfig) -> Result<Self, ConfigError> {
        let defaults = ExtractConfig::default();
        let extract = ExtractConfig {
            markers: raw.markers.unwrap_or(defaults.markers),
            nfr_terms: match raw.nfr_terms {
                Some(t) => NfrLexicon::new(t)?,
                None => defaults.nfr_terms,
            },
        };
        raw.thresholds.validate()?;
        Ok(ProjectConfig {
            extract,
            stopwords: raw.stopwords.map(Stopwords::new).unwrap_or_default(),
            thresholds: raw.thresholds,
            weights: match raw.dimensions {
                Some(d) => WeightScheme::new(d)?,
                None => WeightScheme::default(),
            },
            rounding: raw.rounding,
        })
    }
}

impl From<ProjectConfig> for RawConfig {
    fn from(c: ProjectConfig) -> Self {
        RawConfig {
            markers: Some(c.extract.markers),
            nfr_terms: Some(c.extract.nfr_terms.into()),
            stopwords: Some(c.stopwords.iter().map(str::to_owned).collect()),
            rounding: c.rounding,
            thresholds: c.thresholds,
            dimensions: Some(c.weights.into()),
        }
    }
}
