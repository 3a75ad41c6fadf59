//! Deterministic generator for the case-study aggregate fixture.
//!
//! It builds the discussion room from its published aggregates rather than
//! through the library, so tests over it check the pipeline against an
//! independent construction:
//!
//! - 611 invited: the moderator `m0` plus `u001`..`u610`; experts are `u001`..`u080`
//! - 202 active (`u001`..`u202`), each authoring at least one post
//! - 719 posts, 345 of them requirement posts `R1`..`R345` in time order, 16 non-functional
//! - 156 final (96 expert, 60 ordinary); the rest are infeasible or score below zero
//! - activity decays over days 0 to 6 and stops afterwards

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

pub const SEED: u64 = 2017;
pub const INVITED: usize = 611;
pub const ACTIVE: usize = 202;
pub const EXPERTS: usize = 80;
pub const POSTS: usize = 719;
pub const CANDIDATES: usize = 345;
pub const NFR: usize = 16;
pub const FINAL_EXPERT: usize = 96;
pub const FINAL_ORDINARY: usize = 60;
pub const EXPERT_CANDIDATES: usize = 150;
pub const COMMENTS: usize = 640;
pub const DAY_SHARE: [f64; 7] = [0.36, 0.29, 0.2, 0.125, 0.01, 0.012, 0.003];
pub const TOPIC: &str = "disaster management app";

/// Printed ratings (Quality, Effort Required, User Need, Technical, Business).
pub const EXAMPLE_ROWS: &[(usize, bool, [i64; 5])] = &[
    (1, true, [4, 6, 3, 5, 3]),
    (12, true, [3, 4, 4, 4, 5]),
    (32, true, [2, 5, 5, 2, 4]),
    (47, true, [6, 5, 3, 7, 2]),
    (3, false, [6, 7, 4, 6, 5]),
    (10, false, [3, 5, 3, 2, 3]),
    (11, false, [4, 6, 4, 3, 3]),
    (345, false, [5, 3, 4, 5, 3]),
];

pub const DIMENSIONS: [&str; 5] = ["Quality", "Effort Required", "User Need", "Technical", "Business"];

pub struct CaseStudy {
    pub export: String,
    pub annotations: String,
    pub ratings: String,
    pub config: String,
}

#[derive(Clone, Copy, PartialEq)]
enum Fate {
    Final,
    Infeasible,
    LowPriority,
}

const VERBS: &[&str] = &[
    "send", "show", "display", "share", "track", "record", "notify", "locate", "list", "report",
];
const OBJECTS: &[&str] = &[
    "flood warnings", "earthquake alerts", "shelter locations", "evacuation routes", "rescue team contacts",
    "hospital maps", "missing person reports", "weather forecasts", "tsunami sirens", "relief camp details",
    "volunteer schedules", "road closures", "donation points", "first aid guides", "emergency numbers",
    "family check ins", "damage photos", "power outage zones", "water supply points", "fire incidents",
];
const QUALIFIERS: &[&str] = &[
    "on a map", "by sms", "in real time", "to nearby users", "for each district", "with photos",
    "without internet", "to the control room", "every hour", "near my home",
];
const NFR_STATEMENTS: &[&str] = &[
    "The app should support the local language",
    "The app should be easy to use for elderly people",
    "Alerts should arrive fast, performance matters during floods",
    "The app must keep personal data under strict security",
    "Service availability must hold during an earthquake",
    "The app should offer localization for every province",
    "Reliability of alerts must be very high",
    "The app needs to offer good usability for first time users",
    "The menus should be easy to use with one hand",
    "The app should switch language from the home screen",
    "Performance should stay smooth on cheap phones",
    "Login must follow strong security rules",
    "The app must keep availability when networks are congested",
    "Usability tests should involve villagers",
    "Reliability should be checked before each monsoon",
    "The app should respect localization of dates and units",
];
const CHATTER: &[&str] = &[
    "Great idea, thanks for starting this group",
    "I agree with the points above",
    "Last year the flood reached our street",
    "Interesting, I had not thought about that",
    "Count me in for testing",
    "My cousin works with the rescue team",
    "This reminds me of the 2010 floods",
    "Good discussion everyone",
    "Sharing this with my friends",
    "Any update from the developers?",
    "We lost power for three days last winter",
    "Thanks, that makes sense",
];

fn ts(seconds: i64) -> String {
    let base = chrono::DateTime::parse_from_rfc3339("2017-03-01T00:00:00Z").unwrap().timestamp();
    chrono::DateTime::from_timestamp(base + seconds, 0)
        .unwrap()
        .format("%Y-%m-%dT%H:%M:%SZ")
        .to_string()
}

fn user(i: usize) -> String {
    format!("u{i:03}")
}

/// Day index for each of `n` items in time order, following the decay shape.
fn day_slots(n: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = DAY_SHARE.iter().map(|s| (s * n as f64).floor() as usize).collect();
    let days = counts.len();
    let mut i = 0;
    while counts.iter().sum::<usize>() < n {
        counts[i % days] += 1;
        i += 1;
    }
    counts
        .iter()
        .enumerate()
        .flat_map(|(day, &c)| std::iter::repeat_n(day, c))
        .collect()
}

pub fn generate() -> CaseStudy {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);

    // Post kinds in time order: moderator welcome first, then a shuffled mix.
    let mut kinds: Vec<bool> = std::iter::repeat_n(true, CANDIDATES)
        .chain(std::iter::repeat_n(false, POSTS - 1 - CANDIDATES))
        .collect();
    kinds.shuffle(&mut rng);

    // Category and fate for each requirement number 1..=345.
    let table: Vec<usize> = EXAMPLE_ROWS.iter().map(|t| t.0).collect();
    let mut expert = vec![false; CANDIDATES + 1];
    let mut fate = vec![Fate::Final; CANDIDATES + 1];
    for &(r, is_expert, _) in EXAMPLE_ROWS {
        expert[r] = is_expert;
        fate[r] = if r == 3 { Fate::Infeasible } else { Fate::Final };
    }
    let mut free: Vec<usize> = (1..=CANDIDATES).filter(|r| !table.contains(r)).collect();
    free.shuffle(&mut rng);
    let table_experts = EXAMPLE_ROWS.iter().filter(|t| t.1).count();
    let (experts, ordinary) = free.split_at(EXPERT_CANDIDATES - table_experts);
    for &r in experts {
        expert[r] = true;
    }
    let assign = |ids: &[usize], keep: usize, fate: &mut Vec<Fate>, rng: &mut ChaCha8Rng| {
        let mut ids = ids.to_vec();
        ids.shuffle(rng);
        for (k, &r) in ids.iter().enumerate() {
            fate[r] = if k < keep {
                Fate::Final
            } else if k % 2 == 0 {
                Fate::Infeasible
            } else {
                Fate::LowPriority
            };
        }
    };
    let table_final = |want_expert: bool| {
        EXAMPLE_ROWS.iter().filter(|t| t.1 == want_expert && t.0 != 3).count()
    };
    assign(experts, FINAL_EXPERT - table_final(true), &mut fate, &mut rng);
    assign(ordinary, FINAL_ORDINARY - table_final(false), &mut fate, &mut rng);

    let mut nfr: Vec<usize> = free.clone();
    nfr.shuffle(&mut rng);
    let nfr: BTreeSet<usize> = nfr.into_iter().take(NFR).collect();

    // Authors: requirement posts by category, chatter round-robin so every
    // active user authors at least one post.
    let expert_pool: Vec<usize> = (1..=EXPERTS).collect();
    let ordinary_pool: Vec<usize> = (EXPERTS + 1..=ACTIVE).collect();
    let mut chatter_authors: Vec<usize> = (1..=ACTIVE).collect();
    chatter_authors.shuffle(&mut rng);

    let post_days = day_slots(POSTS - 1);
    let mut posts: Vec<Value> = vec![json!({
        "id": "P0", "author_id": "m0", "created_at": ts(60),
        "text": "Welcome! Tell us what a disaster management app must do for you.",
        "likes": [], "comments": []
    })];
    let (mut r, mut p, mut chat) = (0usize, 0usize, 0usize);
    let mut per_day = [0i64; 7];
    for (k, &is_req) in kinds.iter().enumerate() {
        let day = post_days[k];
        per_day[day] += 1;
        // Posts land in the first 18 hours so same-day comments stay on that day.
        let seconds = day as i64 * 86_400 + 120 + per_day[day] * 240;
        let (id, author, text) = if is_req {
            r += 1;
            let pool = if expert[r] { &expert_pool } else { &ordinary_pool };
            let author = *pool.choose(&mut rng).unwrap();
            let text = if nfr.contains(&r) {
                let i = nfr.iter().position(|&x| x == r).unwrap();
                NFR_STATEMENTS[i].to_string()
            } else {
                let v = VERBS.choose(&mut rng).unwrap();
                let o = OBJECTS.choose(&mut rng).unwrap();
                let q = QUALIFIERS.choose(&mut rng).unwrap();
                let lead = ["It should", "It must", "We need to", "We would like it to"].choose(&mut rng).unwrap();
                format!("{lead} {v} {o} {q}")
            };
            (format!("R{r}"), author, text)
        } else {
            p += 1;
            let author = if chat < chatter_authors.len() {
                chatter_authors[chat]
            } else {
                rng.gen_range(1..=ACTIVE)
            };
            chat += 1;
            (format!("P{p}"), author, CHATTER.choose(&mut rng).unwrap().to_string())
        };
        let n_likes = rng.gen_range(0..=6);
        let likes: BTreeSet<usize> = (0..n_likes).map(|_| rng.gen_range(1..=ACTIVE)).collect();
        posts.push(json!({
            "id": id, "author_id": user(author), "created_at": ts(seconds), "text": text,
            "likes": likes.iter().map(|&u| user(u)).collect::<Vec<_>>(), "comments": []
        }));
    }

    // Comments follow the same decay by picking parents in proportion.
    for c in 1..=COMMENTS {
        let parent = rng.gen_range(1..posts.len());
        let created = chrono::DateTime::parse_from_rfc3339(posts[parent]["created_at"].as_str().unwrap()).unwrap();
        let base = chrono::DateTime::parse_from_rfc3339("2017-03-01T00:00:00Z").unwrap();
        let offset = (created - base).num_seconds() + rng.gen_range(60..=14_400);
        let likes: BTreeSet<usize> = (0..rng.gen_range(0..=2)).map(|_| rng.gen_range(1..=ACTIVE)).collect();
        let comment = json!({
            "id": format!("c{c}"), "author_id": user(rng.gen_range(1..=ACTIVE)), "created_at": ts(offset),
            "text": CHATTER.choose(&mut rng).unwrap(),
            "likes": likes.iter().map(|&u| user(u)).collect::<Vec<_>>()
        });
        posts[parent]["comments"].as_array_mut().unwrap().push(comment);
    }

    let mut participants = vec![json!({"id": "m0", "display_name": "RE lead", "category": "moderator"})];
    participants.extend((1..INVITED).map(|i| {
        let category = if i <= EXPERTS { "expert" } else { "ordinary" };
        json!({"id": user(i), "display_name": format!("Participant {i}"), "category": category,
               "invited_at": ts(0)})
    }));
    let export = json!({
        "room_title": "Disaster management app requirements",
        "topic_statement": TOPIC,
        "visibility": "private",
        "created_at": ts(0),
        "participants": participants,
        "posts": posts,
    });

    let mut annotations = serde_json::Map::new();
    for r in 1..=CANDIDATES {
        let feasible = if fate[r] == Fate::Infeasible { "no" } else { "yes" };
        annotations.insert(format!("R{r}"), json!({ "feasible": feasible }));
    }

    let mut ratings = format!("candidate_id,{}\n", DIMENSIONS.join(","));
    for r in 1..=CANDIDATES {
        let row: [i64; 5] = match EXAMPLE_ROWS.iter().find(|t| t.0 == r) {
            Some(t) => t.2,
            None => match fate[r] {
                Fate::LowPriority => [
                    rng.gen_range(0..=2),
                    rng.gen_range(0..=2),
                    rng.gen_range(0..=2),
                    rng.gen_range(7..=10),
                    rng.gen_range(7..=10),
                ],
                _ => [
                    rng.gen_range(4..=9),
                    rng.gen_range(4..=9),
                    rng.gen_range(4..=9),
                    rng.gen_range(0..=4),
                    rng.gen_range(0..=4),
                ],
            },
        };
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        ratings.push_str(&format!("R{r},{}\n", cells.join(",")));
    }

    let config = "\
[thresholds]
theta_link = 0.5
theta_dup = 0.9
min_score = 0
min_relevance = 0

[[dimension]]
name = \"Quality\"
kind = \"value\"
weight = 7

[[dimension]]
name = \"Effort Required\"
kind = \"value\"
weight = 8

[[dimension]]
name = \"User Need\"
kind = \"value\"
weight = 5

[[dimension]]
name = \"Technical\"
kind = \"risk\"
weight = -7

[[dimension]]
name = \"Business\"
kind = \"risk\"
weight = -5
"
    .to_string();

    let mut export = serde_json::to_string_pretty(&export).unwrap();
    export.push('\n');
    let mut annotations = serde_json::to_string_pretty(&Value::Object(annotations)).unwrap();
    annotations.push('\n');
    CaseStudy { export, annotations, ratings, config }
}

/// Checked-in fixture directory.
pub fn fixture_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/case_study")
}

pub const FILES: [&str; 4] = ["case_study_aggregate.json", "annotations.json", "ratings.csv", "project.toml"];

impl CaseStudy {
    pub fn files(&self) -> [(&'static str, &str); 4] {
        [
            (FILES[0], &self.export),
            (FILES[1], &self.annotations),
            (FILES[2], &self.ratings),
            (FILES[3], &self.config),
        ]
    }
}
