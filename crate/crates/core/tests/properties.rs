use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use proptest::sample::subsequence;
use serde_json::{json, Value};

use threadreq_core::cluster::{base_priority, cluster_candidates, Cluster, Doc, Stopwords, TermVector, Vectorizer};
use threadreq_core::extract::{
    extract_candidates, AnnotationSet, ExtractConfig, Feasibility, ReqType,
};
use threadreq_core::ingest::{activity_timeline, parse_export, DiscussionExport};
use threadreq_core::prioritize::{prune, rank, score, Dimension, Gate, PruneThresholds, RatingSheet, WeightScheme};

const WORDS: &[&str] = &[
    "flood", "alert", "map", "shelter", "route", "language", "chinese", "offline", "sms", "fast",
    "battery", "security", "login", "share", "photo", "report",
];

fn config() -> ProptestConfig {
    ProptestConfig { cases: 1000, ..ProptestConfig::default() }
}

fn statement() -> impl Strategy<Value = String> {
    (any::<bool>(), prop::collection::vec(prop::sample::select(WORDS), 0..5)).prop_map(|(marker, ws)| {
        let mut s = if marker { "the app should ".to_string() } else { "maybe ".to_string() };
        s.push_str(&ws.join(" "));
        s
    })
}

/// Random but structurally valid export JSON.
fn export_json() -> impl Strategy<Value = Value> {
    (2usize..6, prop::collection::vec((0usize..8, 0i64..600_000, statement(), any::<u8>(),
        prop::collection::vec((0usize..8, 0i64..200_000, statement(), any::<u8>()), 0..3)), 0..6))
        .prop_map(|(n, posts)| {
            let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
            let participants: Vec<Value> = ids
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let category = match i {
                        0 => "moderator",
                        i if i % 2 == 1 => "expert",
                        _ => "ordinary",
                    };
                    json!({"id": id, "display_name": id, "category": category})
                })
                .collect();
            let likes = |mask: u8| -> Vec<&String> {
                ids.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, id)| id).collect()
            };
            let base = 1_500_000_000i64;
            let ts = |t: i64| {
                chrono::DateTime::from_timestamp(base + t, 0).unwrap().format("%Y-%m-%dT%H:%M:%SZ").to_string()
            };
            let mut cid = 0;
            let posts: Vec<Value> = posts
                .into_iter()
                .enumerate()
                .map(|(pi, (author, t, text, mask, comments))| {
                    let comments: Vec<Value> = comments
                        .into_iter()
                        .map(|(ca, dt, ctext, cmask)| {
                            cid += 1;
                            json!({"id": format!("c{cid}"), "author_id": ids[ca % n], "created_at": ts(t + dt),
                                   "text": ctext, "likes": likes(cmask)})
                        })
                        .collect();
                    json!({"id": format!("R{}", pi + 1), "author_id": ids[author % n], "created_at": ts(t),
                           "text": text, "likes": likes(mask), "comments": comments})
                })
                .collect();
            json!({"room_title": "room", "topic_statement": "flood alert app", "visibility": "private",
                   "created_at": ts(0), "participants": participants, "posts": posts})
        })
}

fn parse(v: &Value) -> DiscussionExport {
    parse_export(v.to_string().as_bytes()).unwrap().export
}

fn scheme_and_sheet() -> impl Strategy<Value = (Vec<i64>, Vec<i64>, Vec<[i64; 4]>)> {
    (
        prop::collection::vec(1i64..=10, 2),
        prop::collection::vec(-10i64..=-1, 2),
        prop::collection::vec(prop::array::uniform4(0i64..=10), 1..12),
    )
}

fn build(values: &[i64], risks: &[i64], rows: &[[i64; 4]]) -> (WeightScheme, RatingSheet) {
    let mut dims: Vec<Dimension> = values.iter().enumerate().map(|(i, w)| Dimension::value(&format!("V{i}"), *w as f64)).collect();
    dims.extend(risks.iter().enumerate().map(|(i, w)| Dimension::risk(&format!("K{i}"), *w as f64)));
    let scheme = WeightScheme::new(dims).unwrap();
    let mut sheet = RatingSheet::default();
    for (i, row) in rows.iter().enumerate() {
        for (d, v) in scheme.dimensions().iter().zip(row) {
            sheet.set(&format!("R{}", i + 1), &d.name, *v, &scheme).unwrap();
        }
    }
    (scheme, sheet)
}

fn scores(scheme: &WeightScheme, sheet: &RatingSheet) -> Vec<(String, f64)> {
    sheet.candidates().map(|c| (c.to_string(), score(c, sheet, scheme).unwrap())).collect()
}

fn partition(clusters: &[Cluster]) -> BTreeSet<BTreeSet<String>> {
    clusters.iter().map(|c| c.member_ids.iter().cloned().collect()).collect()
}

fn docs(statements: &[String]) -> (Vec<Doc>, TermVector) {
    let stop = Stopwords::default();
    match Vectorizer::fit(statements, &stop) {
        Ok(v) => {
            let topic = v.transform("flood alert app");
            let vectors: Vec<TermVector> = statements.iter().map(|s| v.transform(s)).collect();
            let docs = vectors
                .into_iter()
                .enumerate()
                .map(|(i, vector)| Doc { id: format!("R{}", i + 1), vector })
                .collect();
            (docs, topic)
        }
        Err(_) => (
            (0..statements.len()).map(|i| Doc { id: format!("R{}", i + 1), vector: TermVector::default() }).collect(),
            TermVector::default(),
        ),
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn parse_is_deterministic_and_round_trips(v in export_json()) {
        let a = parse(&v);
        prop_assert_eq!(&a, &parse(&v));
        let again = parse_export(a.to_json().as_bytes()).unwrap().export;
        prop_assert_eq!(again, a);
    }

    #[test]
    fn timeline_bucket_sums_match_totals(v in export_json()) {
        let e = parse(&v);
        match activity_timeline(&e, chrono::TimeDelta::days(1)) {
            Ok(t) => {
                prop_assert_eq!(t.days.iter().map(|d| d.posts).sum::<u64>() as usize, e.posts().len());
                prop_assert_eq!(t.days.iter().map(|d| d.comments).sum::<u64>() as usize, e.comment_count());
                prop_assert_eq!(t.days.iter().map(|d| d.likes).sum::<u64>() as usize, e.like_count());
            }
            Err(_) => prop_assert!(e.posts().is_empty()),
        }
    }

    #[test]
    fn extraction_partitions_types_and_skips_moderator(v in export_json()) {
        let e = parse(&v);
        let cfg = ExtractConfig::default();
        let c = extract_candidates(&e, &AnnotationSet::default(), &cfg);
        prop_assert_eq!(&c, &extract_candidates(&e, &AnnotationSet::default(), &cfg));
        let count = |t| c.iter().filter(|x| x.req_type == t).count();
        prop_assert_eq!(count(ReqType::Functional) + count(ReqType::Nonfunctional) + count(ReqType::Unknown), c.len());
        for cand in &c {
            for src in &cand.source_refs {
                let author = e.posts().iter()
                    .flat_map(|p| std::iter::once((&p.id, &p.author_id)).chain(p.comments().iter().map(|c| (&c.id, &c.author_id))))
                    .find(|(id, _)| *id == src).map(|(_, a)| a.clone()).unwrap();
                prop_assert_ne!(author, "p0");
            }
        }
    }

    #[test]
    fn adding_a_like_never_lowers_consensus(v in export_json(), pick in any::<prop::sample::Index>(), who in 0usize..6) {
        let e = parse(&v);
        if e.posts().is_empty() {
            return Ok(());
        }
        let before = extract_candidates(&e, &AnnotationSet::default(), &ExtractConfig::default());
        let mut v2 = v.clone();
        let posts = v2["posts"].as_array_mut().unwrap();
        let i = pick.index(posts.len());
        let n = e.participants.len();
        let likes = posts[i]["likes"].as_array_mut().unwrap();
        let Some(liker) = (0..n).map(|k| format!("p{}", (who + k) % n)).find(|p| !likes.iter().any(|l| l == p)) else {
            return Ok(());
        };
        likes.push(json!(liker));
        let after = extract_candidates(&parse(&v2), &AnnotationSet::default(), &ExtractConfig::default());
        let by_id: BTreeMap<_, _> = after.iter().map(|c| (c.id.clone(), c.consensus)).collect();
        for c in before {
            prop_assert!(by_id[&c.id] >= c.consensus);
        }
    }

    #[test]
    fn score_is_monotone_in_each_rating((values, risks, rows) in scheme_and_sheet(), dim in 0usize..4) {
        let (scheme, mut sheet) = build(&values, &risks, &rows);
        let d = scheme.dimensions()[dim].clone();
        let current = sheet.get("R1", &d.name).unwrap().get() as i64;
        prop_assume!(current < 10);
        let before = score("R1", &sheet, &scheme).unwrap();
        sheet.set("R1", &d.name, current + 1, &scheme).unwrap();
        let after = score("R1", &sheet, &scheme).unwrap();
        if d.weight > 0.0 { prop_assert!(after > before) } else { prop_assert!(after < before) }
    }

    #[test]
    fn ranking_survives_positive_rescaling((values, risks, rows) in scheme_and_sheet(),
                                           c in prop::sample::select(vec![0.25, 0.5, 2.0, 3.0, 7.0, 10.0, 64.0])) {
        let (scheme, sheet) = build(&values, &risks, &rows);
        let scaled = scheme.scaled(c).unwrap();
        let a = rank(scores(&scheme, &sheet));
        let b = rank(scores(&scaled, &sheet));
        let ids = |r: &[threadreq_core::prioritize::ScoredRequirement]| r.iter().map(|s| s.candidate_id.clone()).collect::<Vec<_>>();
        prop_assert_eq!(ids(&a), ids(&b));
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(x.score * c, y.score);
        }
        // Ranks are a permutation of 1..=n with scores non-increasing.
        prop_assert_eq!(a.iter().map(|s| s.rank).collect::<Vec<_>>(), (1..=a.len()).collect::<Vec<_>>());
        prop_assert!(a.windows(2).all(|w| w[0].score >= w[1].score));
    }

    #[test]
    fn prune_is_a_partition_and_idempotent((values, risks, rows) in scheme_and_sheet(),
                                            feas in prop::collection::vec(any::<bool>(), 12),
                                            rel in prop::collection::vec(0.0f64..=1.0, 12),
                                            min_score in -100.0f64..100.0, min_rel in 0.0f64..1.0) {
        let (scheme, sheet) = build(&values, &risks, &rows);
        let ranked = rank(scores(&scheme, &sheet));
        let gates: BTreeMap<String, Gate> = ranked.iter().enumerate().map(|(i, r)| {
            let feasible = if feas[i] { Feasibility::Yes } else { Feasibility::No };
            (r.candidate_id.clone(), Gate { feasible, relevance: rel[i] })
        }).collect();
        let t = PruneThresholds { min_score, min_relevance: min_rel };
        let out = prune(&ranked, t, &gates).unwrap();
        let input: BTreeSet<&str> = ranked.iter().map(|r| r.candidate_id.as_str()).collect();
        let kept: BTreeSet<&str> = out.final_set.iter().map(|r| r.candidate_id.as_str()).collect();
        let dropped: BTreeSet<&str> = out.dropped.iter().map(|d| d.requirement.candidate_id.as_str()).collect();
        prop_assert!(kept.is_disjoint(&dropped));
        prop_assert_eq!(kept.union(&dropped).copied().collect::<BTreeSet<_>>(), input);
        let again = prune(&out.final_set, t, &gates).unwrap();
        prop_assert_eq!(again.final_set, out.final_set);
        prop_assert!(again.dropped.is_empty());
    }

    #[test]
    fn base_priority_is_monotone(c in 0u64..1000, d in 0u64..100, dist in 0.0f64..=1.0, delta in 0.001f64..0.5) {
        let p = base_priority(c, d, dist);
        prop_assert!(base_priority(c + 1, d, dist) > p);
        prop_assert!(base_priority(c, d + 1, dist) > p);
        let farther = (dist + delta).min(1.0);
        prop_assume!(farther > dist);
        prop_assert!(base_priority(c, d, farther) < p);
    }

    #[test]
    fn cosine_is_symmetric_and_self_one(a in prop::collection::btree_map(prop::sample::select(WORDS), 0.01f64..5.0, 1..6),
                                        b in prop::collection::btree_map(prop::sample::select(WORDS), 0.01f64..5.0, 0..6)) {
        let va = TermVector::from_weights(a.into_iter().map(|(k, v)| (k.to_string(), v)));
        let vb = TermVector::from_weights(b.into_iter().map(|(k, v)| (k.to_string(), v)));
        prop_assert!((va.cosine(&va) - 1.0).abs() < 1e-12);
        prop_assert_eq!(va.cosine(&vb), vb.cosine(&va));
        prop_assert!((0.0..=1.0).contains(&va.cosine(&vb)));
    }

    #[test]
    fn clustering_is_an_order_free_partition(statements in prop::collection::vec(statement(), 1..10),
                                             perm in Just(()).prop_perturb(|_, mut rng| rng.next_u64()),
                                             theta in 0.0f64..1.0) {
        let (docs, topic) = docs(&statements);
        let clusters = cluster_candidates(&docs, theta, &topic);
        let all: Vec<&String> = clusters.iter().flat_map(|c| &c.member_ids).collect();
        prop_assert_eq!(all.len(), docs.len());
        prop_assert_eq!(all.iter().collect::<BTreeSet<_>>().len(), docs.len());

        let mut shuffled = docs.clone();
        let n = shuffled.len();
        let mut seed = perm;
        for i in (1..n).rev() {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            shuffled.swap(i, (seed >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(cluster_candidates(&shuffled, theta, &topic), clusters);
    }

    #[test]
    fn raising_theta_never_merges(statements in prop::collection::vec(statement(), 1..10),
                                  lo in 0.0f64..1.0, step in 0.0f64..0.5) {
        let (docs, topic) = docs(&statements);
        let coarse = partition(&cluster_candidates(&docs, lo, &topic));
        let fine = partition(&cluster_candidates(&docs, lo + step, &topic));
        // Every finer cluster sits inside one coarser cluster.
        for f in &fine {
            prop_assert!(coarse.iter().any(|c| f.is_subset(c)));
        }
        prop_assert!(fine.len() >= coarse.len());
    }

    #[test]
    fn like_subsets_parse(mask in subsequence(vec!["p1", "p2", "p3"], 0..=3)) {
        let v = json!({"topic_statement": "t", "created_at": "2017-01-01T00:00:00Z",
            "participants": [{"id": "p1", "display_name": "a", "category": "expert"},
                             {"id": "p2", "display_name": "b", "category": "ordinary"},
                             {"id": "p3", "display_name": "c", "category": "moderator"}],
            "posts": [{"id": "R1", "author_id": "p1", "created_at": "2017-01-01T00:00:00Z", "text": "x", "likes": mask}]});
        let e = parse(&v);
        prop_assert_eq!(e.like_count(), mask.len());
    }
}
