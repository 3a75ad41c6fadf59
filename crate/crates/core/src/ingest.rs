//! Discussion-room export parsing, capability checks and activity timelines.
//!
//! The canonical export is a single JSON document describing one room: its
//! topic statement, the participant roster and every post with its comments
//! and likes. Parsing validates references and id uniqueness and normalizes
//! posts and comments to `(created_at, id)` order.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use chrono::{DateTime, TimeDelta, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::IngestError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Visibility {
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParticipantCategory {
    Expert,
    Ordinary,
    Moderator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub display_name: String,
    pub category: ParticipantCategory,
    #[serde(default, with = "utc::option", skip_serializing_if = "Option::is_none")]
    pub invited_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comment {
    pub id: String,
    pub author_id: String,
    #[serde(with = "utc")]
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub likes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Post {
    pub id: String,
    pub author_id: String,
    #[serde(with = "utc")]
    pub created_at: DateTime<Utc>,
    pub text: String,
    #[serde(default)]
    pub likes: Vec<String>,
    /// `None` when the export never declared a `comments` field for this post.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comments: Option<Vec<Comment>>,
}

impl Post {
    pub fn comments(&self) -> &[Comment] {
        self.comments.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscussionExport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub room_title: Option<String>,
    pub topic_statement: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Visibility>,
    #[serde(with = "utc")]
    pub created_at: DateTime<Utc>,
    pub participants: Vec<Participant>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posts: Option<Vec<Post>>,
}

impl DiscussionExport {
    pub fn posts(&self) -> &[Post] {
        self.posts.as_deref().unwrap_or(&[])
    }

    pub fn participant(&self, id: &str) -> Option<&Participant> {
        self.participants.iter().find(|p| p.id == id)
    }

    pub fn participant_index(&self) -> BTreeMap<&str, &Participant> {
        self.participants
            .iter()
            .map(|p| (p.id.as_str(), p))
            .collect()
    }

    /// Whether `id` names a post or a comment in this export.
    pub fn has_item(&self, id: &str) -> bool {
        self.posts()
            .iter()
            .any(|p| p.id == id || p.comments().iter().any(|c| c.id == id))
    }

    pub fn comment_count(&self) -> usize {
        self.posts().iter().map(|p| p.comments().len()).sum()
    }

    pub fn like_count(&self) -> usize {
        self.posts()
            .iter()
            .map(|p| p.likes.len() + p.comments().iter().map(|c| c.likes.len()).sum::<usize>())
            .sum()
    }

    /// Serializes back into the canonical export format.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("export serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    UnknownKey { path: String },
    ModeratorCount { count: usize },
}

impl std::fmt::Display for ParseWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParseWarning::UnknownKey { path } => write!(f, "unknown key ignored: {path}"),
            ParseWarning::ModeratorCount { count } => {
                write!(f, "expected exactly one moderator, found {count}")
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedExport {
    pub export: DiscussionExport,
    pub warnings: Vec<ParseWarning>,
}

const TOP_KEYS: &[&str] = &[
    "room_title",
    "topic_statement",
    "visibility",
    "created_at",
    "participants",
    "posts",
];
const PARTICIPANT_KEYS: &[&str] = &["id", "display_name", "category", "invited_at"];
const POST_KEYS: &[&str] = &["id", "author_id", "created_at", "text", "likes", "comments"];
const COMMENT_KEYS: &[&str] = &["id", "author_id", "created_at", "text", "likes"];

/// Parses and validates a canonical export document.
pub fn parse_export(raw: &[u8]) -> Result<ParsedExport, IngestError> {
    let text = std::str::from_utf8(raw).map_err(|e| IngestError::Encoding {
        offset: e.valid_up_to(),
    })?;
    let value: Value = serde_json::from_str(text).map_err(|e| IngestError::Schema {
        path: "$".into(),
        message: e.to_string(),
    })?;

    let mut warnings = Vec::new();
    collect_unknown_keys(&value, &mut warnings);

    let mut export: DiscussionExport =
        serde_path_to_error::deserialize(value).map_err(|e| IngestError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;

    check_invariants(&export)?;

    let moderators = export
        .participants
        .iter()
        .filter(|p| p.category == ParticipantCategory::Moderator)
        .count();
    if moderators != 1 {
        warnings.push(ParseWarning::ModeratorCount { count: moderators });
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    normalize_order(&mut export);
    Ok(ParsedExport { export, warnings })
}

fn collect_unknown_keys(value: &Value, warnings: &mut Vec<ParseWarning>) {
    let mut check = |obj: &serde_json::Map<String, Value>, known: &[&str], prefix: &str| {
        for key in obj.keys() {
            if !known.contains(&key.as_str()) {
                let path = if prefix.is_empty() {
                    key.clone()
                } else {
                    format!("{prefix}.{key}")
                };
                warnings.push(ParseWarning::UnknownKey { path });
            }
        }
    };
    let Some(top) = value.as_object() else { return };
    check(top, TOP_KEYS, "");
    if let Some(Value::Array(ps)) = top.get("participants") {
        for (i, p) in ps.iter().enumerate() {
            if let Some(o) = p.as_object() {
                check(o, PARTICIPANT_KEYS, &format!("participants[{i}]"));
            }
        }
    }
    if let Some(Value::Array(posts)) = top.get("posts") {
        for (i, post) in posts.iter().enumerate() {
            let Some(o) = post.as_object() else { continue };
            check(o, POST_KEYS, &format!("posts[{i}]"));
            if let Some(Value::Array(cs)) = o.get("comments") {
                for (j, c) in cs.iter().enumerate() {
                    if let Some(co) = c.as_object() {
                        check(co, COMMENT_KEYS, &format!("posts[{i}].comments[{j}]"));
                    }
                }
            }
        }
    }
}

fn check_invariants(export: &DiscussionExport) -> Result<(), IngestError> {
    if export.topic_statement.trim().is_empty() {
        return Err(IngestError::Schema {
            path: "topic_statement".into(),
            message: "must be non-empty".into(),
        });
    }

    let mut participant_ids = HashSet::new();
    for p in &export.participants {
        if !participant_ids.insert(p.id.as_str()) {
            return Err(IngestError::DuplicateId {
                kind: "participant",
                id: p.id.clone(),
            });
        }
    }
    let known = |id: &str, path: String| -> Result<(), IngestError> {
        if participant_ids.contains(id) {
            Ok(())
        } else {
            Err(IngestError::Reference {
                id: id.to_string(),
                path,
            })
        }
    };
    let distinct_likes = |likes: &[String], path: &str| -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for (k, l) in likes.iter().enumerate() {
            known(l, format!("{path}.likes[{k}]"))?;
            if !seen.insert(l.as_str()) {
                return Err(IngestError::DuplicateId {
                    kind: "like",
                    id: format!("{path}.likes[{k}]={l}"),
                });
            }
        }
        Ok(())
    };

    let mut item_ids = HashSet::new();
    for (i, post) in export.posts().iter().enumerate() {
        let path = format!("posts[{i}]");
        if !item_ids.insert(post.id.as_str()) {
            return Err(IngestError::DuplicateId {
                kind: "post",
                id: post.id.clone(),
            });
        }
        known(&post.author_id, format!("{path}.author_id"))?;
        distinct_likes(&post.likes, &path)?;
        for (j, c) in post.comments().iter().enumerate() {
            let cpath = format!("{path}.comments[{j}]");
            if !item_ids.insert(c.id.as_str()) {
                return Err(IngestError::DuplicateId {
                    kind: "comment",
                    id: c.id.clone(),
                });
            }
            known(&c.author_id, format!("{cpath}.author_id"))?;
            distinct_likes(&c.likes, &cpath)?;
            if c.created_at < post.created_at {
                return Err(IngestError::Schema {
                    path: format!("{cpath}.created_at"),
                    message: "comment predates its post".into(),
                });
            }
        }
    }
    Ok(())
}

fn normalize_order(export: &mut DiscussionExport) {
    if let Some(posts) = export.posts.as_mut() {
        posts.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
        for post in posts.iter_mut() {
            if let Some(cs) = post.comments.as_mut() {
                cs.sort_by(|a, b| (a.created_at, &a.id).cmp(&(b.created_at, &b.id)));
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    DiscussionRoom,
    Posting,
    Commenting,
    AccessControl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub capability: Capability,
    pub message: String,
}

/// Checks that the export demonstrates the four capabilities a discussion
/// platform needs: a titled room, posting, commenting and access control.
pub fn validate_capabilities(export: &DiscussionExport) -> Vec<Violation> {
    let mut out = Vec::new();
    if export
        .room_title
        .as_deref()
        .is_none_or(|t| t.trim().is_empty())
    {
        out.push(Violation {
            capability: Capability::DiscussionRoom,
            message: "room has no title".into(),
        });
    }
    match &export.posts {
        None => out.push(Violation {
            capability: Capability::Posting,
            message: "export carries no posts list".into(),
        }),
        Some(posts) => {
            let missing: Vec<&str> = posts
                .iter()
                .filter(|p| p.comments.is_none())
                .map(|p| p.id.as_str())
                .collect();
            if !missing.is_empty() {
                out.push(Violation {
                    capability: Capability::Commenting,
                    message: format!("posts without a comments field: {}", missing.join(", ")),
                });
            }
        }
    }
    if export.visibility.is_none() {
        out.push(Violation {
            capability: Capability::AccessControl,
            message: "visibility (public/private) not declared".into(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayActivity {
    pub day: u64,
    pub posts: u64,
    pub comments: u64,
    pub likes: u64,
    pub active_users: u64,
}

impl DayActivity {
    pub fn total(&self) -> u64 {
        self.posts + self.comments + self.likes
    }
}

/// Activity per bucket. `days[i].day == i`; buckets run from 0 to the last
/// active bucket with empty buckets present as zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub bucket_seconds: i64,
    #[serde(with = "utc")]
    pub origin: DateTime<Utc>,
    pub days: Vec<DayActivity>,
}

impl Timeline {
    pub fn get(&self, day: u64) -> Option<&DayActivity> {
        self.days.get(usize::try_from(day).ok()?)
    }

    pub fn last_active_day(&self) -> Option<u64> {
        self.days.iter().rev().find(|d| d.total() > 0).map(|d| d.day)
    }

    pub fn peak(&self) -> u64 {
        self.days.iter().map(DayActivity::total).max().unwrap_or(0)
    }
}

pub fn activity_timeline(
    export: &DiscussionExport,
    bucket: TimeDelta,
) -> Result<Timeline, IngestError> {
    let bucket_seconds = bucket.num_seconds();
    if bucket_seconds <= 0 {
        return Err(IngestError::InvalidBucket);
    }
    let posts = export.posts();
    let origin = posts
        .iter()
        .map(|p| p.created_at)
        .min()
        .ok_or(IngestError::EmptyTimeline)?;
    let index = |t: DateTime<Utc>| -> u64 {
        // Comments never predate their post, so offsets are non-negative.
        ((t - origin).num_seconds() / bucket_seconds) as u64
    };

    let mut counts: BTreeMap<u64, DayActivity> = BTreeMap::new();
    let mut users: BTreeMap<u64, BTreeSet<&str>> = BTreeMap::new();
    for post in posts {
        let d = index(post.created_at);
        let e = counts.entry(d).or_default();
        e.posts += 1;
        e.likes += post.likes.len() as u64;
        let u = users.entry(d).or_default();
        u.insert(&post.author_id);
        u.extend(post.likes.iter().map(String::as_str));
        for c in post.comments() {
            let d = index(c.created_at);
            let e = counts.entry(d).or_default();
            e.comments += 1;
            e.likes += c.likes.len() as u64;
            let u = users.entry(d).or_default();
            u.insert(&c.author_id);
            u.extend(c.likes.iter().map(String::as_str));
        }
    }
    let last = counts.keys().next_back().copied().unwrap_or(0);
    let days = (0..=last)
        .map(|day| {
            let mut a = counts.get(&day).copied().unwrap_or_default();
            a.day = day;
            a.active_users = users.get(&day).map_or(0, |s| s.len() as u64);
            a
        })
        .collect();
    Ok(Timeline {
        bucket_seconds,
        origin,
        days,
    })
}

/// Serde adapters for strict UTC RFC 3339 timestamps.
pub mod utc {
    use chrono::{DateTime, SecondsFormat, Utc};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn parse(s: &str) -> Result<DateTime<Utc>, String> {
        let t = DateTime::parse_from_rfc3339(s).map_err(|e| format!("{s:?}: {e}"))?;
        if t.offset().local_minus_utc() != 0 {
            return Err(format!("{s:?}: timestamp must be UTC"));
        }
        Ok(t.with_timezone(&Utc))
    }

    pub fn format(t: &DateTime<Utc>) -> String {
        t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    }

    pub fn serialize<S: Serializer>(t: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format(t))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
        let s = String::deserialize(d)?;
        parse(&s).map_err(D::Error::custom)
    }

    pub mod option {
        use super::*;

        pub fn serialize<S: Serializer>(t: &Option<DateTime<Utc>>, s: S) -> Result<S::Ok, S::Error> {
            match t {
                Some(t) => s.serialize_some(&format(t)),
                None => s.serialize_none(),
            }
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(
            d: D,
        ) -> Result<Option<DateTime<Utc>>, D::Error> {
            Option::<String>::deserialize(d)?
                .map(|s| parse(&s).map_err(D::Error::custom))
                .transpose()
        }
    }
}
