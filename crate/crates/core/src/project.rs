//! Persistent pipeline state and the mutation/recompute contract.
//!
//! A [`ProjectFile`] holds moderator inputs (config, annotations, ratings,
//! cluster edits), the derived sections (candidates, clusters, ranking,
//! stats) with their staleness flags, and an append-only audit log. Every
//! mutation goes through [`Project::apply`], which bumps the revision and
//! appends an audit entry carrying the full payload, so replaying the log
//! from the baseline reproduces the current state.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{compute_stats, render_report, ElicitationStats, ReportInput};
use crate::cluster::{
    build_cluster, duplicate_counts, link_components, sort_clusters, Cluster, Doc, TermVector,
    Vectorizer,
};
use crate::config::{ProjectConfig, Thresholds};
use crate::error::{ClusterError, ConfigError, PrioritizeError};
use crate::extract::{
    extract_candidates, split_key, Annotation, AnnotationSet, CandidateRequirement, Feasibility, ReqType, Status,
};
use crate::ingest::{utc, DiscussionExport};
use crate::prioritize::{prune, rank, score, Gate, PruneOutcome, RatingSheet, ScoredRequirement, WeightScheme};
use crate::text::natural_cmp;

pub const PROJECT_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum ProjectError {
    #[error("{0}")]
    Validation(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("revision conflict: client saw {expected}, current is {current}")]
    Conflict { expected: u64, current: u64 },
    #[error("{0}")]
    StaleState(String),
    #[error("missing ratings: {}", .0.join(", "))]
    MissingRatings(Vec<String>),
    #[error(transparent)]
    Prioritize(PrioritizeError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl From<PrioritizeError> for ProjectError {
    fn from(e: PrioritizeError) -> Self {
        match e {
            PrioritizeError::RatingOutOfRange { .. } | PrioritizeError::UnknownDimension(_) => {
                ProjectError::Validation(e.to_string())
            }
            e => ProjectError::Prioritize(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportRef {
    pub path: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_json<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("section serializes"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Staleness {
    pub candidates: bool,
    pub clusters: bool,
    pub ranking: bool,
    pub stats: bool,
}

impl Staleness {
    pub const ALL: Staleness = Staleness { candidates: true, clusters: true, ranking: true, stats: true };
    pub const NONE: Staleness = Staleness { candidates: false, clusters: false, ranking: false, stats: false };

    fn from_stage(stage: Stage) -> Staleness {
        Staleness {
            candidates: stage <= Stage::Candidates,
            clusters: stage <= Stage::Clusters,
            ranking: true,
            stats: true,
        }
    }

    fn merge(self, o: Staleness) -> Staleness {
        Staleness {
            candidates: self.candidates || o.candidates,
            clusters: self.clusters || o.clusters,
            ranking: self.ranking || o.ranking,
            stats: self.stats || o.stats,
        }
    }

    fn stale_through(self, stage: Stage) -> bool {
        (self.candidates && stage >= Stage::Candidates)
            || (self.clusters && stage >= Stage::Clusters)
            || ((self.ranking || self.stats) && stage >= Stage::Ranking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Stage {
    Candidates,
    Clusters,
    Ranking,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecomputeScope {
    /// extract → cluster → score → rank → prune → stats.
    All,
    /// score → rank → prune → stats over the stored candidates and clusters.
    RankingOnly,
    /// extract only.
    Candidates,
    /// extract → cluster.
    Clusters,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClusterEdit {
    Merge { members: Vec<String> },
    Split { groups: Vec<Vec<String>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", content = "payload", rename_all = "snake_case")]
pub enum Mutation {
    SetRating { candidate_id: String, ratings: BTreeMap<String, i64> },
    ReplaceRatings { sheet: RatingSheet },
    SetWeights { weights: WeightScheme },
    SetFeasibility { candidate_id: String, feasible: Feasibility },
    SetReqType { candidate_id: String, req_type: ReqType },
    MergeClusters { cluster_ids: Vec<String> },
    SplitCluster { cluster_id: String, groups: Vec<Vec<String>> },
    SetAnnotation { source_id: String, annotation: Option<Annotation> },
    SetThresholds { thresholds: Thresholds },
    Recompute { scope: RecomputeScope },
}

impl Mutation {
    pub fn name(&self) -> &'static str {
        match self {
            Mutation::SetRating { .. } => "set_rating",
            Mutation::ReplaceRatings { .. } => "replace_ratings",
            Mutation::SetWeights { .. } => "set_weights",
            Mutation::SetFeasibility { .. } => "set_feasibility",
            Mutation::SetReqType { .. } => "set_req_type",
            Mutation::MergeClusters { .. } => "merge_clusters",
            Mutation::SplitCluster { .. } => "split_cluster",
            Mutation::SetAnnotation { .. } => "set_annotation",
            Mutation::SetThresholds { .. } => "set_thresholds",
            Mutation::Recompute { .. } => "recompute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub revision: u64,
    #[serde(with = "utc")]
    pub timestamp: DateTime<Utc>,
    pub actor: String,
    pub action: String,
    pub payload_hash: String,
    pub mutation: Mutation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranking {
    pub scored: Vec<ScoredRequirement>,
    pub outcome: PruneOutcome,
}

/// Moderator inputs at project creation; replay starts here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub config: ProjectConfig,
    pub annotations: AnnotationSet,
    pub ratings: RatingSheet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentHashes {
    pub candidates: String,
    pub clusters: String,
    pub ranking: String,
    pub stats: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub version: u32,
    pub revision: u64,
    pub config: ProjectConfig,
    pub export: ExportRef,
    pub annotations: AnnotationSet,
    pub ratings: RatingSheet,
    pub cluster_edits: Vec<ClusterEdit>,
    pub candidates: Vec<CandidateRequirement>,
    pub clusters: Vec<Cluster>,
    pub ranking: Option<Ranking>,
    pub stats: Option<ElicitationStats>,
    pub stale: Staleness,
    pub baseline: Baseline,
    pub audit: Vec<AuditEntry>,
}

impl ProjectFile {
    pub fn new(export: ExportRef, baseline: Baseline) -> Self {
        ProjectFile {
            version: PROJECT_VERSION,
            revision: 0,
            config: baseline.config.clone(),
            export,
            annotations: baseline.annotations.clone(),
            ratings: baseline.ratings.clone(),
            cluster_edits: Vec::new(),
            candidates: Vec::new(),
            clusters: Vec::new(),
            ranking: None,
            stats: None,
            stale: Staleness::ALL,
            baseline,
            audit: Vec::new(),
        }
    }

    pub fn candidate(&self, id: &str) -> Option<&CandidateRequirement> {
        self.candidates.iter().find(|c| c.id == id)
    }

    pub fn cluster(&self, id: &str) -> Option<&Cluster> {
        self.clusters.iter().find(|c| c.id == id)
    }

    pub fn cluster_of(&self, candidate_id: &str) -> Option<&Cluster> {
        self.clusters
            .iter()
            .find(|c| c.member_ids.iter().any(|m| m == candidate_id))
    }

    /// Candidate hash covers extraction and clustering fields; statuses are
    /// a projection of the ranking and hashed there.
    pub fn content_hashes(&self) -> ContentHashes {
        let candidates: Vec<CandidateRequirement> =
            self.candidates.iter().map(|c| view(c, Stage::Clusters)).collect();
        ContentHashes {
            candidates: hash_json(&candidates),
            clusters: hash_json(&self.clusters),
            ranking: hash_json(&self.ranking),
            stats: hash_json(&self.stats),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("project serializes");
        s.push('\n');
        s
    }
}

/// Candidate as produced after `stage`, resetting fields owned by later stages.
fn view(c: &CandidateRequirement, stage: Stage) -> CandidateRequirement {
    let mut c = c.clone();
    if stage < Stage::Ranking {
        c.status = Status::Candidate;
    }
    if stage < Stage::Clusters {
        c.duplicate_count = 0;
    }
    c
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Applied {
    Committed { revision: u64 },
    NoOp { revision: u64 },
}

/// A project file together with the parsed export it references.
#[derive(Debug, Clone)]
pub struct Project {
    pub file: ProjectFile,
    pub export: DiscussionExport,
}

struct Corpus {
    docs: Vec<Doc>,
    topic: TermVector,
}

fn build_corpus(
    export: &DiscussionExport,
    config: &ProjectConfig,
    candidates: &[CandidateRequirement],
) -> Result<Corpus, ClusterError> {
    let statements: Vec<&str> = candidates.iter().map(|c| c.statement.as_str()).collect();
    let (vectors, topic) = match Vectorizer::fit(&statements, &config.stopwords) {
        Ok(v) => {
            let topic = v.topic_vector(&export.topic_statement)?;
            (statements.iter().map(|s| v.transform(s)).collect(), topic)
        }
        Err(ClusterError::EmptyVocabulary) => (vec![TermVector::default(); statements.len()], TermVector::default()),
        Err(e) => return Err(e),
    };
    let docs = candidates
        .iter()
        .zip(vectors)
        .map(|(c, vector)| Doc { id: c.id.clone(), vector })
        .collect();
    Ok(Corpus { docs, topic })
}

fn apply_edit(partition: &mut Vec<BTreeSet<String>>, edit: &ClusterEdit) {
    match edit {
        ClusterEdit::Merge { members } => {
            let wanted: BTreeSet<&String> = members.iter().collect();
            let (hit, mut rest): (Vec<_>, Vec<_>) = std::mem::take(partition)
                .into_iter()
                .partition(|g| g.iter().any(|m| wanted.contains(m)));
            if let Some(merged) = hit.into_iter().reduce(|mut a, b| {
                a.extend(b);
                a
            }) {
                rest.push(merged);
            }
            *partition = rest;
        }
        ClusterEdit::Split { groups } => {
            let present: BTreeSet<&String> = partition.iter().flatten().collect();
            let pulled: Vec<BTreeSet<String>> = groups
                .iter()
                .map(|g| g.iter().filter(|m| present.contains(m)).cloned().collect::<BTreeSet<_>>())
                .filter(|g| !g.is_empty())
                .collect();
            for g in partition.iter_mut() {
                g.retain(|m| !pulled.iter().any(|p| p.contains(m)));
            }
            partition.retain(|g| !g.is_empty());
            partition.extend(pulled);
        }
    }
}

/// Builds clusters for `partition` and writes duplicate counts into `candidates`.
fn realize_clusters(
    partition: &[BTreeSet<String>],
    corpus: &Corpus,
    theta_dup: f64,
    candidates: &mut [CandidateRequirement],
) -> Vec<Cluster> {
    let by_id: BTreeMap<&str, &Doc> = corpus.docs.iter().map(|d| (d.id.as_str(), d)).collect();
    let mut dups: BTreeMap<String, u64> = BTreeMap::new();
    let mut clusters: Vec<Cluster> = partition
        .iter()
        .map(|g| {
            let members: Vec<&Doc> = g.iter().filter_map(|id| by_id.get(id.as_str()).copied()).collect();
            dups.extend(duplicate_counts(&members, theta_dup));
            build_cluster(&members, &corpus.topic)
        })
        .collect();
    sort_clusters(&mut clusters);
    for c in candidates.iter_mut() {
        c.duplicate_count = dups.get(&c.id).copied().unwrap_or(0);
    }
    clusters
}

fn partition_of(clusters: &[Cluster]) -> Vec<BTreeSet<String>> {
    clusters
        .iter()
        .map(|c| c.member_ids.iter().cloned().collect())
        .collect()
}

struct Derived {
    candidates: Vec<CandidateRequirement>,
    clusters: Vec<Cluster>,
    ranking: Option<Ranking>,
    stats: Option<ElicitationStats>,
}

impl Project {
    pub fn new(file: ProjectFile, export: DiscussionExport) -> Self {
        Project { file, export }
    }

    pub fn revision(&self) -> u64 {
        self.file.revision
    }

    /// Applies `mutation` if `expected_revision` (when given) matches.
    pub fn apply_checked(
        &mut self,
        mutation: Mutation,
        actor: &str,
        at: DateTime<Utc>,
        expected_revision: Option<u64>,
    ) -> Result<Applied, ProjectError> {
        if let Some(expected) = expected_revision {
            if expected != self.file.revision {
                return Err(ProjectError::Conflict { expected, current: self.file.revision });
            }
        }
        self.apply(mutation, actor, at)
    }

    /// Validates and applies one mutation. On error the project is unchanged.
    pub fn apply(&mut self, mutation: Mutation, actor: &str, at: DateTime<Utc>) -> Result<Applied, ProjectError> {
        let mut next = self.file.clone();
        let changed = self.mutate(&mut next, &mutation)?;
        if !changed {
            return Ok(Applied::NoOp { revision: self.file.revision });
        }
        next.revision += 1;
        let payload = serde_json::to_vec(&mutation).expect("mutation serializes");
        next.audit.push(AuditEntry {
            revision: next.revision,
            timestamp: at,
            actor: actor.to_string(),
            action: mutation.name().to_string(),
            payload_hash: sha256_hex(&payload),
            mutation,
        });
        self.file = next;
        Ok(Applied::Committed { revision: self.file.revision })
    }

    pub fn recompute(&mut self, scope: RecomputeScope, actor: &str, at: DateTime<Utc>) -> Result<Applied, ProjectError> {
        self.apply(Mutation::Recompute { scope }, actor, at)
    }

    fn mutate(&self, next: &mut ProjectFile, mutation: &Mutation) -> Result<bool, ProjectError> {
        let downstream = |stage| Staleness::from_stage(stage);
        match mutation {
            Mutation::SetRating { candidate_id, ratings } => {
                if next.candidate(candidate_id).is_none() {
                    return Err(ProjectError::NotFound { kind: "candidate", id: candidate_id.clone() });
                }
                if ratings.is_empty() {
                    return Err(ProjectError::Validation("no ratings given".into()));
                }
                for (dim, v) in ratings {
                    next.ratings.set(candidate_id, dim, *v, &next.config.weights)?;
                }
                next.stale = next.stale.merge(downstream(Stage::Ranking));
            }
            Mutation::ReplaceRatings { sheet } => {
                sheet.check_dimensions(&next.config.weights)?;
                next.ratings = sheet.clone();
                next.stale = next.stale.merge(downstream(Stage::Ranking));
            }
            Mutation::SetWeights { weights } => {
                next.ratings.check_dimensions(weights).map_err(|e| {
                    ProjectError::Validation(format!("ratings reference a dimension missing from the new weights: {e}"))
                })?;
                next.config.weights = weights.clone();
                next.stale = next.stale.merge(downstream(Stage::Ranking));
            }
            Mutation::SetFeasibility { candidate_id, feasible } => {
                let Some(c) = next.candidates.iter_mut().find(|c| &c.id == candidate_id) else {
                    return Err(ProjectError::NotFound { kind: "candidate", id: candidate_id.clone() });
                };
                c.feasible = *feasible;
                next.annotations.entries.entry(candidate_id.clone()).or_default().feasible = Some(*feasible);
                next.stale = next.stale.merge(downstream(Stage::Ranking));
            }
            Mutation::SetReqType { candidate_id, req_type } => {
                let Some(c) = next.candidates.iter_mut().find(|c| &c.id == candidate_id) else {
                    return Err(ProjectError::NotFound { kind: "candidate", id: candidate_id.clone() });
                };
                c.req_type = *req_type;
                next.annotations.entries.entry(candidate_id.clone()).or_default().req_type = Some(*req_type);
                next.stale = next.stale.merge(downstream(Stage::Ranking));
            }
            Mutation::MergeClusters { cluster_ids } => {
                self.require_fresh_clusters(next)?;
                let distinct: BTreeSet<&String> = cluster_ids.iter().collect();
                if distinct.len() < 2 {
                    return Err(ProjectError::Validation("merge needs at least two distinct clusters".into()));
                }
                let mut members = Vec::new();
                for id in &distinct {
                    let c = next
                        .cluster(id)
                        .ok_or_else(|| ProjectError::NotFound { kind: "cluster", id: (*id).clone() })?;
                    members.extend(c.member_ids.iter().cloned());
                }
                members.sort_by(|a, b| natural_cmp(a, b));
                self.edit_clusters(next, ClusterEdit::Merge { members })?;
            }
            Mutation::SplitCluster { cluster_id, groups } => {
                self.require_fresh_clusters(next)?;
                let c = next
                    .cluster(cluster_id)
                    .ok_or_else(|| ProjectError::NotFound { kind: "cluster", id: cluster_id.clone() })?;
                let members: BTreeSet<&String> = c.member_ids.iter().collect();
                let listed: Vec<&String> = groups.iter().flatten().collect();
                let listed_set: BTreeSet<&String> = listed.iter().copied().collect();
                if groups.len() < 2 || groups.iter().any(Vec::is_empty) {
                    return Err(ProjectError::Validation("split needs at least two non-empty groups".into()));
                }
                if listed.len() != listed_set.len() || listed_set != members {
                    return Err(ProjectError::Validation(
                        "split groups must partition the cluster's members exactly".into(),
                    ));
                }
                let groups = groups
                    .iter()
                    .map(|g| {
                        let mut g = g.clone();
                        g.sort_by(|a, b| natural_cmp(a, b));
                        g
                    })
                    .collect();
                self.edit_clusters(next, ClusterEdit::Split { groups })?;
            }
            Mutation::SetAnnotation { source_id, annotation } => {
                let (base, suffix) = split_key(source_id);
                if suffix == Some("") || !self.export.has_item(base) {
                    return Err(ProjectError::NotFound { kind: "source", id: source_id.clone() });
                }
                match annotation {
                    Some(a) => {
                        next.annotations.entries.insert(source_id.clone(), a.clone());
                    }
                    None => {
                        next.annotations.entries.remove(source_id);
                    }
                }
                next.stale = next.stale.merge(downstream(Stage::Candidates));
            }
            Mutation::SetThresholds { thresholds } => {
                thresholds.validate()?;
                let old = next.config.thresholds;
                next.config.thresholds = *thresholds;
                let stage = if old.theta_link != thresholds.theta_link || old.theta_dup != thresholds.theta_dup {
                    Stage::Clusters
                } else {
                    Stage::Ranking
                };
                next.stale = next.stale.merge(downstream(stage));
            }
            Mutation::Recompute { scope } => return self.recompute_into(next, *scope),
        }
        Ok(true)
    }

    fn require_fresh_clusters(&self, file: &ProjectFile) -> Result<(), ProjectError> {
        if file.stale.candidates || file.stale.clusters {
            return Err(ProjectError::StaleState("clusters are stale; recompute before editing them".into()));
        }
        Ok(())
    }

    fn edit_clusters(&self, next: &mut ProjectFile, edit: ClusterEdit) -> Result<(), ProjectError> {
        let corpus = build_corpus(&self.export, &next.config, &next.candidates)?;
        let mut partition = partition_of(&next.clusters);
        apply_edit(&mut partition, &edit);
        next.clusters = realize_clusters(&partition, &corpus, next.config.thresholds.theta_dup, &mut next.candidates);
        next.cluster_edits.push(edit);
        next.stale = next.stale.merge(Staleness::from_stage(Stage::Ranking));
        Ok(())
    }

    fn derive(&self, file: &ProjectFile, through: Stage) -> Result<Derived, ProjectError> {
        let config = &file.config;
        let mut candidates = extract_candidates(&self.export, &file.annotations, &config.extract);
        let mut out = Derived { candidates: Vec::new(), clusters: Vec::new(), ranking: None, stats: None };
        if through >= Stage::Clusters {
            let corpus = build_corpus(&self.export, config, &candidates)?;
            let vectors: Vec<TermVector> = corpus.docs.iter().map(|d| d.vector.clone()).collect();
            let mut partition: Vec<BTreeSet<String>> = link_components(&vectors, config.thresholds.theta_link)
                .into_iter()
                .map(|idx| idx.into_iter().map(|i| corpus.docs[i].id.clone()).collect())
                .collect();
            for edit in &file.cluster_edits {
                apply_edit(&mut partition, edit);
            }
            out.clusters = realize_clusters(&partition, &corpus, config.thresholds.theta_dup, &mut candidates);
        }
        if through >= Stage::Ranking {
            let (ranking, stats) = self.rank_stage(file, &mut candidates, &out.clusters)?;
            out.ranking = Some(ranking);
            out.stats = Some(stats);
        }
        out.candidates = candidates;
        Ok(out)
    }

    fn rank_stage(
        &self,
        file: &ProjectFile,
        candidates: &mut [CandidateRequirement],
        clusters: &[Cluster],
    ) -> Result<(Ranking, ElicitationStats), ProjectError> {
        let scheme = &file.config.weights;
        let mut missing = Vec::new();
        let mut scores = Vec::with_capacity(candidates.len());
        for c in candidates.iter() {
            match score(&c.id, &file.ratings, scheme) {
                Ok(s) => scores.push((c.id.clone(), s)),
                Err(_) => missing.extend(
                    scheme
                        .dimensions()
                        .iter()
                        .filter(|d| file.ratings.get(&c.id, &d.name).is_none())
                        .map(|d| format!("{}/{}", c.id, d.name)),
                ),
            }
        }
        if !missing.is_empty() {
            return Err(ProjectError::MissingRatings(missing));
        }
        let scored = rank(scores);
        let relevance: BTreeMap<&str, f64> = clusters
            .iter()
            .flat_map(|c| c.member_ids.iter().map(move |m| (m.as_str(), c.relevance())))
            .collect();
        let gates: BTreeMap<String, Gate> = candidates
            .iter()
            .map(|c| {
                let relevance = relevance.get(c.id.as_str()).copied().unwrap_or(0.0);
                (c.id.clone(), Gate { feasible: c.feasible, relevance })
            })
            .collect();
        let outcome = prune(&scored, file.config.thresholds.prune(), &gates)?;
        let final_ids: BTreeSet<&str> = outcome.final_set.iter().map(|s| s.candidate_id.as_str()).collect();
        for c in candidates.iter_mut() {
            c.status = Status::Candidate;
            let to = if final_ids.contains(c.id.as_str()) { Status::Final } else { Status::Dropped };
            c.transition(to).expect("fresh candidate status");
        }
        let stats = compute_stats(&self.export, candidates, &outcome.final_set);
        Ok((Ranking { scored, outcome }, stats))
    }

    fn recompute_into(&self, next: &mut ProjectFile, scope: RecomputeScope) -> Result<bool, ProjectError> {
        let (from_stored, through) = match scope {
            RecomputeScope::All => (false, Stage::Ranking),
            RecomputeScope::Candidates => (false, Stage::Candidates),
            RecomputeScope::Clusters => (false, Stage::Clusters),
            RecomputeScope::RankingOnly => (true, Stage::Ranking),
        };

        if from_stored {
            if next.stale.candidates || next.stale.clusters {
                return Err(ProjectError::StaleState(
                    "candidates or clusters are stale; run a full recompute".into(),
                ));
            }
            let mut candidates = next.candidates.clone();
            let (ranking, stats) = self.rank_stage(next, &mut candidates, &next.clusters)?;
            let unchanged = !next.stale.ranking
                && !next.stale.stats
                && next.ranking.as_ref() == Some(&ranking)
                && next.stats.as_ref() == Some(&stats)
                && candidates == next.candidates;
            if unchanged {
                return Ok(false);
            }
            next.candidates = candidates;
            next.ranking = Some(ranking);
            next.stats = Some(stats);
            next.stale.ranking = false;
            next.stale.stats = false;
            return Ok(true);
        }

        let derived = self.derive(next, through)?;
        let was_stale = next.stale.stale_through(through);
        let same_candidates = derived.candidates.len() == next.candidates.len()
            && derived
                .candidates
                .iter()
                .zip(&next.candidates)
                .all(|(a, b)| view(a, through) == view(b, through));
        let same_clusters = through < Stage::Clusters || derived.clusters == next.clusters;
        let same_ranking =
            through < Stage::Ranking || (derived.ranking == next.ranking && derived.stats == next.stats);
        if !was_stale && same_candidates && same_clusters && same_ranking {
            return Ok(false);
        }

        let upstream_changed = !same_candidates || !same_clusters;
        if !(same_candidates && !next.stale.candidates && through == Stage::Candidates) {
            next.candidates = derived.candidates;
        }
        next.stale.candidates = false;
        if through >= Stage::Clusters {
            next.clusters = derived.clusters;
            next.stale.clusters = false;
        } else if upstream_changed {
            next.stale.clusters = true;
        }
        if through >= Stage::Ranking {
            next.ranking = derived.ranking;
            next.stats = derived.stats;
            next.stale.ranking = false;
            next.stale.stats = false;
        } else if upstream_changed {
            next.stale.ranking = true;
            next.stale.stats = true;
        }
        Ok(true)
    }

    /// Stored stats, or stats over the current candidates with an empty final set.
    pub fn stats_or_provisional(&self) -> ElicitationStats {
        self.file
            .stats
            .clone()
            .unwrap_or_else(|| compute_stats(&self.export, &self.file.candidates, &[]))
    }

    pub fn report(&self) -> String {
        let stats = self.stats_or_provisional();
        render_report(&ReportInput {
            export: &self.export,
            stats: &stats,
            candidates: &self.file.candidates,
            clusters: &self.file.clusters,
            outcome: self.file.ranking.as_ref().map(|r| &r.outcome),
            ratings: &self.file.ratings,
            config: &self.file.config,
        })
    }

    /// Rebuilds state from the baseline by re-applying every audit entry.
    pub fn replay(&self) -> Result<ProjectFile, ProjectError> {
        let mut p = Project::new(
            ProjectFile::new(self.file.export.clone(), self.file.baseline.clone()),
            self.export.clone(),
        );
        for entry in &self.file.audit {
            let applied = p.apply(entry.mutation.clone(), &entry.actor, entry.timestamp)?;
            if applied != (Applied::Committed { revision: entry.revision }) {
                return Err(ProjectError::Validation(format!(
                    "audit entry {} did not replay as a committed mutation",
                    entry.revision
                )));
            }
        }
        Ok(p.file)
    }
}
