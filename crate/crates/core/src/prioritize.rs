//! Value/risk prioritization matrix, ranking and pruning.
//!
//! Each dimension carries a signed weight: business values are positive and
//! risks negative, so a requirement's score is the dot product of weights and
//! its 0–10 ratings.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, PrioritizeError};
use crate::extract::Feasibility;
use crate::text::natural_cmp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionKind {
    Value,
    Risk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub kind: DimensionKind,
    pub weight: f64,
}

impl Dimension {
    pub fn value(name: &str, weight: f64) -> Self {
        Dimension { name: name.into(), kind: DimensionKind::Value, weight }
    }

    pub fn risk(name: &str, weight: f64) -> Self {
        Dimension { name: name.into(), kind: DimensionKind::Risk, weight }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Dimension>", into = "Vec<Dimension>")]
pub struct WeightScheme {
    dimensions: Vec<Dimension>,
}

impl WeightScheme {
    pub fn new(dimensions: Vec<Dimension>) -> Result<Self, ConfigError> {
        if !dimensions.iter().any(|d| d.kind == DimensionKind::Value) {
            return Err(ConfigError::Weights("at least one value dimension required".into()));
        }
        for (i, d) in dimensions.iter().enumerate() {
            if d.name.trim().is_empty() || d.name.contains(',') {
                return Err(ConfigError::Weights(format!("bad dimension name {:?}", d.name)));
            }
            if dimensions[..i].iter().any(|o| o.name == d.name) {
                return Err(ConfigError::Weights(format!("duplicate dimension {:?}", d.name)));
            }
            let ok = d.weight.is_finite()
                && match d.kind {
                    DimensionKind::Value => d.weight > 0.0,
                    DimensionKind::Risk => d.weight < 0.0,
                };
            if !ok {
                return Err(ConfigError::Weights(format!(
                    "{:?} dimension {:?} has weight {}; values need > 0, risks < 0",
                    d.kind, d.name, d.weight
                )));
            }
        }
        Ok(WeightScheme { dimensions })
    }

    /// Quality 7, Effort Required 8, User Need 5; Technical −7, Business −5.
    pub fn standard() -> Self {
        WeightScheme::new(vec![
            Dimension::value("Quality", 7.0),
            Dimension::value("Effort Required", 8.0),
            Dimension::value("User Need", 5.0),
            Dimension::risk("Technical", -7.0),
            Dimension::risk("Business", -5.0),
        ])
        .expect("table 1 weights are valid")
    }

    pub fn dimensions(&self) -> &[Dimension] {
        &self.dimensions
    }

    pub fn dimension(&self, name: &str) -> Option<&Dimension> {
        self.dimensions.iter().find(|d| d.name == name)
    }

    /// Every weight multiplied by `factor > 0`.
    pub fn scaled(&self, factor: f64) -> Result<Self, ConfigError> {
        WeightScheme::new(
            self.dimensions
                .iter()
                .map(|d| Dimension { weight: d.weight * factor, ..d.clone() })
                .collect(),
        )
    }
}

impl Default for WeightScheme {
    fn default() -> Self {
        WeightScheme::standard()
    }
}

impl TryFrom<Vec<Dimension>> for WeightScheme {
    type Error = ConfigError;
    fn try_from(d: Vec<Dimension>) -> Result<Self, ConfigError> {
        WeightScheme::new(d)
    }
}

impl From<WeightScheme> for Vec<Dimension> {
    fn from(w: WeightScheme) -> Self {
        w.dimensions
    }
}

/// An integer rating on the 0 (not important) to 10 (critical) scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "i64", into = "i64")]
pub struct Rating(u8);

impl Rating {
    pub const MAX: u8 = 10;

    pub fn new(v: i64) -> Option<Rating> {
        (0..=i64::from(Self::MAX)).contains(&v).then_some(Rating(v as u8))
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl TryFrom<i64> for Rating {
    type Error = String;
    fn try_from(v: i64) -> Result<Self, String> {
        Rating::new(v).ok_or_else(|| format!("rating {v} outside 0..=10"))
    }
}

impl From<Rating> for i64 {
    fn from(r: Rating) -> i64 {
        i64::from(r.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RatingSheet {
    ratings: BTreeMap<String, BTreeMap<String, Rating>>,
}

impl RatingSheet {
    pub fn set(
        &mut self,
        candidate: &str,
        dimension: &str,
        value: i64,
        scheme: &WeightScheme,
    ) -> Result<(), PrioritizeError> {
        if scheme.dimension(dimension).is_none() {
            return Err(PrioritizeError::UnknownDimension(dimension.into()));
        }
        let r = Rating::new(value).ok_or_else(|| PrioritizeError::RatingOutOfRange {
            candidate: candidate.into(),
            dimension: dimension.into(),
            value: value.to_string(),
        })?;
        self.ratings
            .entry(candidate.to_string())
            .or_default()
            .insert(dimension.to_string(), r);
        Ok(())
    }

    pub fn get(&self, candidate: &str, dimension: &str) -> Option<Rating> {
        self.ratings.get(candidate)?.get(dimension).copied()
    }

    pub fn row(&self, candidate: &str) -> Option<&BTreeMap<String, Rating>> {
        self.ratings.get(candidate)
    }

    pub fn candidates(&self) -> impl Iterator<Item = &str> {
        self.ratings.keys().map(String::as_str)
    }

    pub fn remove_candidate(&mut self, candidate: &str) {
        self.ratings.remove(candidate);
    }

    /// Every rated dimension must exist in `scheme`.
    pub fn check_dimensions(&self, scheme: &WeightScheme) -> Result<(), PrioritizeError> {
        for row in self.ratings.values() {
            for dim in row.keys() {
                if scheme.dimension(dim).is_none() {
                    return Err(PrioritizeError::UnknownDimension(dim.clone()));
                }
            }
        }
        Ok(())
    }

    /// Reads `candidate_id,<dim1>,<dim2>,...`. Blank cells stay unrated.
    pub fn from_csv<R: Read>(reader: R, scheme: &WeightScheme) -> Result<Self, PrioritizeError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0) != Some("candidate_id") {
            return Err(PrioritizeError::Csv("first column must be candidate_id".into()));
        }
        let dims: Vec<&str> = headers.iter().skip(1).collect();
        for d in &dims {
            if scheme.dimension(d).is_none() {
                return Err(PrioritizeError::UnknownDimension((*d).into()));
            }
        }
        let mut sheet = RatingSheet::default();
        for record in rdr.records() {
            let record = record?;
            let id = record.get(0).unwrap_or_default();
            if id.is_empty() {
                return Err(PrioritizeError::Csv("empty candidate_id".into()));
            }
            for (dim, cell) in dims.iter().zip(record.iter().skip(1)) {
                if cell.is_empty() {
                    continue;
                }
                let value: i64 = cell.parse().map_err(|_| PrioritizeError::RatingOutOfRange {
                    candidate: id.into(),
                    dimension: (*dim).into(),
                    value: cell.into(),
                })?;
                sheet.set(id, dim, value, scheme)?;
            }
        }
        Ok(sheet)
    }

    pub fn to_csv<W: Write>(&self, writer: W, scheme: &WeightScheme) -> Result<(), PrioritizeError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["candidate_id".to_string()];
        header.extend(scheme.dimensions().iter().map(|d| d.name.clone()));
        w.write_record(&header)?;
        let mut ids: Vec<&str> = self.candidates().collect();
        ids.sort_by(|a, b| natural_cmp(a, b));
        for id in ids {
            let mut row = vec![id.to_string()];
            row.extend(
                scheme
                    .dimensions()
                    .iter()
                    .map(|d| self.get(id, &d.name).map(|r| r.get().to_string()).unwrap_or_default()),
            );
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| PrioritizeError::Csv(e.to_string()))?;
        Ok(())
    }
}

/// Σ weight × rating over the scheme's dimensions.
pub fn score(candidate: &str, sheet: &RatingSheet, scheme: &WeightScheme) -> Result<f64, PrioritizeError> {
    scheme.dimensions().iter().try_fold(0.0, |acc, d| {
        let r = sheet.get(candidate, &d.name).ok_or_else(|| PrioritizeError::MissingRating {
            candidate: candidate.into(),
            dimension: d.name.clone(),
        })?;
        Ok(acc + d.weight * f64::from(r.get()))
    })
}

/// Value and risk parts of a score, risk reported as a positive magnitude.
pub fn contributions(candidate: &str, sheet: &RatingSheet, scheme: &WeightScheme) -> Option<(f64, f64)> {
    let mut value = 0.0;
    let mut risk = 0.0;
    for d in scheme.dimensions() {
        let r = f64::from(sheet.get(candidate, &d.name)?.get());
        match d.kind {
            DimensionKind::Value => value += d.weight * r,
            DimensionKind::Risk => risk += -d.weight * r,
        }
    }
    Some((value, risk))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRequirement {
    pub candidate_id: String,
    pub score: f64,
    pub rank: usize,
}

/// Score descending, ties by natural id order; ranks 1..=n.
pub fn rank(scores: Vec<(String, f64)>) -> Vec<ScoredRequirement> {
    let mut scores = scores;
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| natural_cmp(&a.0, &b.0)));
    scores
        .into_iter()
        .enumerate()
        .map(|(i, (candidate_id, score))| ScoredRequirement { candidate_id, score, rank: i + 1 })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneThresholds {
    pub min_score: f64,
    pub min_relevance: f64,
}

impl Default for PruneThresholds {
    fn default() -> Self {
        PruneThresholds { min_score: 0.0, min_relevance: 0.0 }
    }
}

/// What pruning needs to know about a candidate besides its score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gate {
    pub feasible: Feasibility,
    /// `1 - topic_distance` of the owning cluster.
    pub relevance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    LowPriority,
    Infeasible,
    OffTopic,
}

impl DropReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DropReason::LowPriority => "low_priority",
            DropReason::Infeasible => "infeasible",
            DropReason::OffTopic => "off_topic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedRequirement {
    #[serde(flatten)]
    pub requirement: ScoredRequirement,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    #[serde(rename = "final")]
    pub final_set: Vec<ScoredRequirement>,
    pub dropped: Vec<DroppedRequirement>,
}

/// Keeps ranked items with score ≥ min_score, feasible = yes and relevance ≥
/// min_relevance. An undecided item that clears the score cut is an error:
/// feasibility above the cut is the moderator's call.
pub fn prune(
    ranked: &[ScoredRequirement],
    thresholds: PruneThresholds,
    gates: &BTreeMap<String, Gate>,
) -> Result<PruneOutcome, PrioritizeError> {
    let gate = |id: &str| gates.get(id).ok_or_else(|| PrioritizeError::UnknownCandidate(id.into()));
    let mut undecided = Vec::new();
    for r in ranked {
        if r.score >= thresholds.min_score && gate(&r.candidate_id)?.feasible == Feasibility::Undecided {
            undecided.push(r.candidate_id.clone());
        }
    }
    if !undecided.is_empty() {
        return Err(PrioritizeError::UndecidedFeasibility(undecided));
    }

    let mut out = PruneOutcome::default();
    for r in ranked {
        let g = gate(&r.candidate_id)?;
        let reason = if r.score < thresholds.min_score {
            Some(DropReason::LowPriority)
        } else if g.feasible != Feasibility::Yes {
            Some(DropReason::Infeasible)
        } else if g.relevance < thresholds.min_relevance {
            Some(DropReason::OffTopic)
        } else {
            None
        };
        match reason {
            None => out.final_set.push(r.clone()),
            Some(reason) => out.dropped.push(DroppedRequirement { requirement: r.clone(), reason }),
        }
    }
    Ok(out)
}
