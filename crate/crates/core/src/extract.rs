//! Candidate requirement extraction, functional/non-functional tagging and
//! like-based consensus.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{AnnotationError, ConfigError};
use crate::ingest::{Comment, DiscussionExport, ParticipantCategory, Post};
use crate::text::{collapse_whitespace, contains_phrase, natural_cmp, words};

const DEFAULT_LEXICONS: &str = include_str!("../data/extract.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuthorCategory {
    Expert,
    Ordinary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReqType {
    Functional,
    Nonfunctional,
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Feasibility {
    Yes,
    No,
    #[default]
    Undecided,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    #[default]
    Candidate,
    Final,
    Dropped,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal status transition {from:?} -> {to:?} for {id}")]
pub struct StatusTransitionError {
    pub id: String,
    pub from: Status,
    pub to: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRequirement {
    pub id: String,
    pub source_refs: Vec<String>,
    pub statement: String,
    pub author_category: AuthorCategory,
    pub req_type: ReqType,
    pub consensus: u64,
    pub duplicate_count: u64,
    pub feasible: Feasibility,
    pub status: Status,
    /// A marker phrase matched the source text or the statement.
    pub marker_hit: bool,
}

impl CandidateRequirement {
    pub fn transition(&mut self, to: Status) -> Result<(), StatusTransitionError> {
        match (self.status, to) {
            (Status::Candidate, Status::Final | Status::Dropped) => {
                self.status = to;
                Ok(())
            }
            (from, to) => Err(StatusTransitionError {
                id: self.id.clone(),
                from,
                to,
            }),
        }
    }
}

/// Moderator overrides for one source item (or synthetic split key).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub is_requirement: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statement_rewrite: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub req_type: Option<ReqType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_override: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible: Option<Feasibility>,
}

/// Annotations keyed by post/comment id. A key of the form `<id>#<suffix>`
/// splits the item `<id>` into one candidate per suffix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationSet {
    pub entries: BTreeMap<String, Annotation>,
}

pub fn split_key(key: &str) -> (&str, Option<&str>) {
    match key.split_once('#') {
        Some((base, suffix)) => (base, Some(suffix)),
        None => (key, None),
    }
}

impl AnnotationSet {
    pub fn from_json(raw: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(raw)
    }

    pub fn get(&self, key: &str) -> Option<&Annotation> {
        self.entries.get(key)
    }

    /// Every key must resolve to a post or comment of the export.
    pub fn validate(&self, export: &DiscussionExport) -> Result<(), AnnotationError> {
        for key in self.entries.keys() {
            let (base, suffix) = split_key(key);
            if suffix == Some("") || !export.has_item(base) {
                return Err(AnnotationError::Unresolved(key.clone()));
            }
        }
        Ok(())
    }

    fn splits_of<'a>(&'a self, id: &str) -> Vec<(&'a str, &'a Annotation)> {
        let prefix = format!("{id}#");
        let mut out: Vec<_> = self
            .entries
            .range(prefix.clone()..)
            .take_while(|(k, _)| k.starts_with(&prefix))
            .map(|(k, a)| (k.as_str(), a))
            .collect();
        out.sort_by(|a, b| natural_cmp(a.0, b.0));
        out
    }
}

/// A non-empty list of non-functional terms.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct NfrLexicon(Vec<String>);

impl NfrLexicon {
    pub fn new(terms: Vec<String>) -> Result<Self, ConfigError> {
        if terms.iter().all(|t| words(t).is_empty()) {
            return Err(ConfigError::EmptyLexicon("nfr_terms"));
        }
        Ok(NfrLexicon(terms))
    }

    pub fn terms(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for NfrLexicon {
    type Error = ConfigError;
    fn try_from(v: Vec<String>) -> Result<Self, Self::Error> {
        NfrLexicon::new(v)
    }
}

impl From<NfrLexicon> for Vec<String> {
    fn from(l: NfrLexicon) -> Self {
        l.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    pub markers: Vec<String>,
    pub nfr_terms: NfrLexicon,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig::from_toml(DEFAULT_LEXICONS).expect("bundled lexicons are valid")
    }
}

impl ExtractConfig {
    pub fn from_toml(raw: &str) -> Result<Self, ConfigError> {
        toml::from_str(raw).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    fn marker_fires(&self, text_words: &[String]) -> bool {
        self.markers.iter().any(|m| contains_phrase(text_words, m))
    }
}

/// Like-based consensus for a post: its own likes plus the likes on all of
/// its comments.
pub fn post_consensus(post: &Post) -> u64 {
    (post.likes.len() + post.comments().iter().map(|c| c.likes.len()).sum::<usize>()) as u64
}

pub fn comment_consensus(comment: &Comment) -> u64 {
    comment.likes.len() as u64
}

/// Tags a statement: non-functional if it mentions any lexicon term,
/// otherwise functional when a marker fired, otherwise unknown.
pub fn classify_statement(statement: &str, marker_hit: bool, lexicon: &NfrLexicon) -> ReqType {
    let w = words(statement);
    if lexicon.terms().iter().any(|t| contains_phrase(&w, t)) {
        ReqType::Nonfunctional
    } else if marker_hit {
        ReqType::Functional
    } else {
        ReqType::Unknown
    }
}

pub fn classify_req_type(candidate: &CandidateRequirement, lexicon: &NfrLexicon) -> ReqType {
    classify_statement(&candidate.statement, candidate.marker_hit, lexicon)
}

struct Item<'a> {
    id: &'a str,
    author_id: &'a str,
    text: &'a str,
    consensus: u64,
}

fn items(export: &DiscussionExport) -> Vec<Item<'_>> {
    let mut out = Vec::new();
    for post in export.posts() {
        out.push(Item {
            id: &post.id,
            author_id: &post.author_id,
            text: &post.text,
            consensus: post_consensus(post),
        });
        for c in post.comments() {
            out.push(Item {
                id: &c.id,
                author_id: &c.author_id,
                text: &c.text,
                consensus: comment_consensus(c),
            });
        }
    }
    out
}

/// One candidate per requirement-bearing item, in post order with each
/// post's comments following it. Moderator-authored items never count.
pub fn extract_candidates(
    export: &DiscussionExport,
    annotations: &AnnotationSet,
    config: &ExtractConfig,
) -> Vec<CandidateRequirement> {
    let people = export.participant_index();
    let mut out = Vec::new();
    for item in items(export) {
        let author_category = match people.get(item.author_id).map(|p| p.category) {
            Some(ParticipantCategory::Expert) => AuthorCategory::Expert,
            Some(ParticipantCategory::Ordinary) => AuthorCategory::Ordinary,
            Some(ParticipantCategory::Moderator) | None => continue,
        };
        let source_words = words(item.text);
        let source_marker = config.marker_fires(&source_words);

        let splits = annotations.splits_of(item.id);
        let keyed: Vec<(&str, Option<&Annotation>)> = if splits.is_empty() {
            vec![(item.id, annotations.get(item.id))]
        } else {
            splits.into_iter().map(|(k, a)| (k, Some(a))).collect()
        };
        let is_split = keyed.len() > 1 || keyed[0].0 != item.id;

        for (key, ann) in keyed {
            let bearing = match ann.and_then(|a| a.is_requirement) {
                Some(b) => b,
                None if is_split => true,
                None => source_marker,
            };
            if !bearing {
                continue;
            }
            let statement = ann
                .and_then(|a| a.statement_rewrite.as_deref())
                .map(collapse_whitespace)
                .unwrap_or_else(|| collapse_whitespace(item.text));
            let marker_hit = source_marker || config.marker_fires(&words(&statement));
            let req_type = ann
                .and_then(|a| a.req_type)
                .unwrap_or_else(|| classify_statement(&statement, marker_hit, &config.nfr_terms));
            out.push(CandidateRequirement {
                id: key.to_string(),
                source_refs: vec![item.id.to_string()],
                statement,
                author_category,
                req_type,
                consensus: ann
                    .and_then(|a| a.consensus_override)
                    .unwrap_or(item.consensus),
                duplicate_count: 0,
                feasible: ann.and_then(|a| a.feasible).unwrap_or_default(),
                status: Status::Candidate,
                marker_hit,
            });
        }
    }
    out
}
