//! Elicitation statistics and the rendered report bundle.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cluster::Cluster;
use crate::config::ProjectConfig;
use crate::extract::{AuthorCategory, CandidateRequirement, ReqType};
use crate::ingest::{activity_timeline, utc, DiscussionExport, ParticipantCategory, Timeline};
use crate::prioritize::{contributions, DimensionKind, PruneOutcome, RatingSheet, ScoredRequirement};

/// `num / den * scale`, rounded half-up to two decimals with exact integer
/// arithmetic. `None` when `den == 0`.
pub fn ratio(num: u64, den: u64, scale: u64) -> Option<f64> {
    if den == 0 {
        return None;
    }
    let (num, den, scale) = (u128::from(num), u128::from(den), u128::from(scale));
    let hundredths = (2 * num * scale * 100 + den) / (2 * den);
    Some(hundredths as f64 / 100.0)
}

pub fn percent(num: u64, den: u64) -> Option<f64> {
    ratio(num, den, 100)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElicitationStats {
    pub invited: u64,
    pub active: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub participation_rate: Option<f64>,
    pub total_posts: u64,
    pub total_comments: u64,
    pub total_likes: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub posts_per_active_user: Option<f64>,
    pub candidate_count: u64,
    pub functional_count: u64,
    pub nfr_count: u64,
    pub unknown_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nfr_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub candidates_per_active_user: Option<f64>,
    pub final_count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_ratio: Option<f64>,
    pub expert_final: u64,
    pub ordinary_final: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expert_final_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ordinary_final_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timeline: Option<Timeline>,
}

/// Active participants: non-moderators with at least one post, comment or like.
pub fn active_participants(export: &DiscussionExport) -> BTreeSet<&str> {
    let people = export.participant_index();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for p in export.posts() {
        seen.insert(&p.author_id);
        seen.extend(p.likes.iter().map(String::as_str));
        for c in p.comments() {
            seen.insert(&c.author_id);
            seen.extend(c.likes.iter().map(String::as_str));
        }
    }
    seen.retain(|id| {
        people
            .get(id)
            .is_some_and(|p| p.category != ParticipantCategory::Moderator)
    });
    seen
}

pub fn compute_stats(
    export: &DiscussionExport,
    candidates: &[CandidateRequirement],
    final_set: &[ScoredRequirement],
) -> ElicitationStats {
    let invited = export.participants.len() as u64;
    let active = active_participants(export).len() as u64;
    let total_posts = export.posts().len() as u64;
    let count = |t: ReqType| candidates.iter().filter(|c| c.req_type == t).count() as u64;
    let candidate_count = candidates.len() as u64;
    let nfr_count = count(ReqType::Nonfunctional);

    let by_id: BTreeMap<&str, &CandidateRequirement> =
        candidates.iter().map(|c| (c.id.as_str(), c)).collect();
    let final_in = |cat: AuthorCategory| {
        final_set
            .iter()
            .filter(|s| by_id.get(s.candidate_id.as_str()).is_some_and(|c| c.author_category == cat))
            .count() as u64
    };
    let expert_final = final_in(AuthorCategory::Expert);
    let ordinary_final = final_in(AuthorCategory::Ordinary);
    let final_count = expert_final + ordinary_final;

    ElicitationStats {
        invited,
        active,
        participation_rate: percent(active, invited),
        total_posts,
        total_comments: export.comment_count() as u64,
        total_likes: export.like_count() as u64,
        posts_per_active_user: ratio(total_posts, active, 1),
        candidate_count,
        functional_count: count(ReqType::Functional),
        nfr_count,
        unknown_count: count(ReqType::Unknown),
        nfr_ratio: percent(nfr_count, candidate_count),
        candidates_per_active_user: ratio(candidate_count, active, 1),
        final_count,
        final_ratio: percent(final_count, candidate_count),
        expert_final,
        ordinary_final,
        expert_final_ratio: percent(expert_final, final_count),
        ordinary_final_ratio: percent(ordinary_final, final_count),
        timeline: activity_timeline(export, chrono::TimeDelta::days(1)).ok(),
    }
}

/// Everything the report is a function of.
pub struct ReportInput<'a> {
    pub export: &'a DiscussionExport,
    pub stats: &'a ElicitationStats,
    pub candidates: &'a [CandidateRequirement],
    pub clusters: &'a [Cluster],
    pub outcome: Option<&'a PruneOutcome>,
    pub ratings: &'a RatingSheet,
    pub config: &'a ProjectConfig,
}

fn cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}%"))
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}"))
}

fn category(c: Option<&CandidateRequirement>) -> &'static str {
    match c.map(|c| c.author_category) {
        Some(AuthorCategory::Expert) => "Expert",
        Some(AuthorCategory::Ordinary) => "Ordinary",
        None => "?",
    }
}

fn weight_label(kind: DimensionKind, w: f64) -> String {
    match kind {
        DimensionKind::Value => format!("V={w}"),
        DimensionKind::Risk => format!("R={w}"),
    }
}

pub fn render_report(input: &ReportInput<'_>) -> String {
    let ReportInput { export, stats, candidates, clusters, outcome, ratings, config } = input;
    let by_id: BTreeMap<&str, &CandidateRequirement> =
        candidates.iter().map(|c| (c.id.as_str(), c)).collect();
    let mut md = String::new();

    let title = export.room_title.as_deref().unwrap_or("(untitled room)");
    let _ = writeln!(md, "# Requirements report: {}\n", cell(title));
    let _ = writeln!(md, "## Project summary\n");
    let _ = writeln!(md, "- Topic: {}", cell(&export.topic_statement));
    let visibility = match export.visibility {
        Some(crate::ingest::Visibility::Public) => "public",
        Some(crate::ingest::Visibility::Private) => "private",
        None => "not declared",
    };
    let _ = writeln!(md, "- Visibility: {visibility}");
    let _ = writeln!(md, "- Room created: {}", utc::format(&export.created_at));
    if let Some(t) = &stats.timeline {
        let _ = writeln!(md, "- First post: {}", utc::format(&t.origin));
        let _ = writeln!(md, "- Active days: {}", t.days.len());
    }
    let _ = writeln!(
        md,
        "- Topic relevance: clusters nearer to the topic statement (smaller topic distance) rank as more relevant\n"
    );

    let _ = writeln!(md, "## Participation\n");
    let _ = writeln!(md, "| Metric | Value |\n|---|---|");
    let rows: Vec<(&str, String)> = vec![
        ("Invited participants", stats.invited.to_string()),
        ("Active participants", stats.active.to_string()),
        ("Participation rate", pct(stats.participation_rate)),
        ("Posts", stats.total_posts.to_string()),
        ("Comments", stats.total_comments.to_string()),
        ("Likes", stats.total_likes.to_string()),
        ("Posts per active participant", num(stats.posts_per_active_user)),
        ("Candidate requirements", stats.candidate_count.to_string()),
        ("Functional candidates", stats.functional_count.to_string()),
        (
            "Non-functional candidates",
            format!("{} ({})", stats.nfr_count, pct(stats.nfr_ratio)),
        ),
        ("Unclassified candidates", stats.unknown_count.to_string()),
        ("Candidates per active participant", num(stats.candidates_per_active_user)),
        (
            "Final requirements",
            format!("{} ({} of candidates)", stats.final_count, pct(stats.final_ratio)),
        ),
        (
            "Final from expert participants",
            format!("{} ({})", stats.expert_final, pct(stats.expert_final_ratio)),
        ),
        (
            "Final from ordinary participants",
            format!("{} ({})", stats.ordinary_final, pct(stats.ordinary_final_ratio)),
        ),
    ];
    for (k, v) in rows {
        let _ = writeln!(md, "| {k} | {v} |");
    }
    md.push('\n');

    let _ = writeln!(md, "## Activity by day\n");
    match &stats.timeline {
        Some(t) => {
            let _ = writeln!(md, "| Day | Posts | Comments | Likes | Active users |\n|---|---|---|---|---|");
            for d in &t.days {
                let _ = writeln!(
                    md,
                    "| {} | {} | {} | {} | {} |",
                    d.day, d.posts, d.comments, d.likes, d.active_users
                );
            }
        }
        None => {
            let _ = writeln!(md, "No posts.");
        }
    }
    md.push('\n');

    let _ = writeln!(md, "## Clusters\n");
    let _ = writeln!(
        md,
        "{} clusters over {} candidates.\n",
        clusters.len(),
        candidates.len()
    );
    if !clusters.is_empty() {
        let _ = writeln!(md, "| Cluster | Label | Members | Topic distance | Review |\n|---|---|---|---|---|");
        for c in clusters.iter() {
            let _ = writeln!(
                md,
                "| {} | {} | {} | {:.4} | {} |",
                cell(&c.id),
                cell(&c.label),
                c.member_ids.len(),
                c.topic_distance,
                if c.needs_review { "needs review" } else { "" }
            );
        }
        md.push('\n');
    }

    let scheme = &config.weights;
    let final_set: &[ScoredRequirement] = outcome.map_or(&[], |o| &o.final_set);
    let _ = writeln!(md, "## Prioritization matrix\n");
    let _ = writeln!(md, "{} final requirements.\n", final_set.len());
    let mut header = String::from("| Category | Requirement |");
    let mut rule = String::from("|---|---|");
    for d in scheme.dimensions() {
        let _ = write!(header, " {} ({}) |", cell(&d.name), weight_label(d.kind, d.weight));
        rule.push_str("---|");
    }
    header.push_str(" Score |");
    rule.push_str("---|");
    let _ = writeln!(md, "{header}\n{rule}");
    for cat in [AuthorCategory::Expert, AuthorCategory::Ordinary] {
        for s in final_set {
            let c = by_id.get(s.candidate_id.as_str()).copied();
            if c.map(|c| c.author_category) != Some(cat) {
                continue;
            }
            let mut row = format!("| {} | {} |", category(c), cell(&s.candidate_id));
            for d in scheme.dimensions() {
                let r = ratings
                    .get(&s.candidate_id, &d.name)
                    .map_or_else(|| "-".to_string(), |r| r.get().to_string());
                let _ = write!(row, " {r} |");
            }
            let _ = write!(row, " {} |", s.score);
            let _ = writeln!(md, "{row}");
        }
    }
    md.push('\n');
    if !final_set.is_empty() {
        let _ = writeln!(md, "| Rank | Requirement | Value | Risk | Statement |\n|---|---|---|---|---|");
        for s in final_set {
            let (v, r) = contributions(&s.candidate_id, ratings, scheme).unwrap_or((0.0, 0.0));
            let statement = by_id.get(s.candidate_id.as_str()).map_or("", |c| c.statement.as_str());
            let _ = writeln!(md, "| {} | {} | {v} | {r} | {} |", s.rank, cell(&s.candidate_id), cell(statement));
        }
        md.push('\n');
    }

    let _ = writeln!(md, "## Dropped requirements\n");
    let dropped = outcome.map_or(&[][..], |o| &o.dropped[..]);
    let _ = writeln!(md, "{} dropped requirements.\n", dropped.len());
    if !dropped.is_empty() {
        let _ = writeln!(md, "| Rank | Category | Requirement | Score | Reason |\n|---|---|---|---|---|");
        for d in dropped {
            let id = d.requirement.candidate_id.as_str();
            let _ = writeln!(
                md,
                "| {} | {} | {} | {} | {} |",
                d.requirement.rank,
                category(by_id.get(id).copied()),
                cell(id),
                d.requirement.score,
                d.reason.as_str()
            );
        }
        md.push('\n');
    }

    let t = &config.thresholds;
    let _ = writeln!(md, "## Methodology\n");
    let _ = writeln!(
        md,
        "- Candidates are linked when the cosine similarity of their TF-IDF vectors is at least theta_link = {}; clusters are the connected components.",
        t.theta_link
    );
    let _ = writeln!(
        md,
        "- Within a cluster, pairs with similarity at least theta_dup = {} count as duplicated opinions.",
        t.theta_dup
    );
    let _ = writeln!(md, "- Topic distance is 1 minus the cosine between a cluster centroid and the topic statement.");
    let _ = writeln!(
        md,
        "- Score is the sum of weight times rating over all dimensions; risk weights are negative."
    );
    let _ = writeln!(
        md,
        "- Final requirements have score >= {}, feasibility yes and relevance (1 - topic distance) >= {}.",
        t.min_score, t.min_relevance
    );
    let _ = writeln!(md, "- Active participants are non-moderators with at least one post, comment or like.");
    let _ = writeln!(md, "\n---\nRounding: {}.", config.rounding.describe());
    md
}

pub fn ranked_csv(
    outcome: &PruneOutcome,
    candidates: &[CandidateRequirement],
    clusters: &[Cluster],
) -> Result<String, csv::Error> {
    let by_id: BTreeMap<&str, &CandidateRequirement> =
        candidates.iter().map(|c| (c.id.as_str(), c)).collect();
    let distance: BTreeMap<&str, f64> = clusters
        .iter()
        .flat_map(|c| c.member_ids.iter().map(move |m| (m.as_str(), c.topic_distance)))
        .collect();
    let mut rows: Vec<(&ScoredRequirement, &str, &str)> = outcome
        .final_set
        .iter()
        .map(|s| (s, "final", ""))
        .chain(outcome.dropped.iter().map(|d| (&d.requirement, "dropped", d.reason.as_str())))
        .collect();
    rows.sort_by_key(|r| r.0.rank);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "rank",
        "candidate_id",
        "category",
        "req_type",
        "score",
        "status",
        "reason",
        "consensus",
        "duplicate_count",
        "topic_distance",
        "statement",
    ])?;
    for (s, status, reason) in rows {
        let c = by_id.get(s.candidate_id.as_str());
        let req_type = match c.map(|c| c.req_type) {
            Some(ReqType::Functional) => "functional",
            Some(ReqType::Nonfunctional) => "nonfunctional",
            Some(ReqType::Unknown) | None => "unknown",
        };
        w.write_record([
            s.rank.to_string(),
            s.candidate_id.clone(),
            category(c.copied()).to_lowercase(),
            req_type.to_string(),
            s.score.to_string(),
            status.to_string(),
            reason.to_string(),
            c.map_or(String::new(), |c| c.consensus.to_string()),
            c.map_or(String::new(), |c| c.duplicate_count.to_string()),
            distance
                .get(s.candidate_id.as_str())
                .map_or(String::new(), |d| format!("{d:.6}")),
            c.map_or(String::new(), |c| c.statement.clone()),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn timeline_csv(timeline: Option<&Timeline>) -> String {
    let mut out = String::from("day,posts,comments,likes,active_users\n");
    for d in timeline.map_or(&[][..], |t| &t.days[..]) {
        let _ = writeln!(out, "{},{},{},{},{}", d.day, d.posts, d.comments, d.likes, d.active_users);
    }
    out
}

pub fn stats_json(stats: &ElicitationStats) -> String {
    let mut s = serde_json::to_string_pretty(stats).expect("stats serialize");
    s.push('\n');
    s
}
