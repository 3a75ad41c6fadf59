//! Grouping of related candidates and topic relevance.
//!
//! Statements become TF-IDF vectors over the candidate corpus. Two candidates
//! are linked when their cosine similarity reaches `theta_link`; clusters are
//! the connected components of that graph. Each cluster's centroid is compared
//! with the room's topic statement to get a distance in `[0, 1]`, and pairs at
//! or above `theta_dup` inside a cluster count as duplicated opinions.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::ClusterError;
use crate::text::{natural_cmp, words};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

/// Keeps fully off-topic items from scoring zero.
pub const PRIORITY_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Stopwords(BTreeSet<String>);

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::new(DEFAULT_STOPWORDS.lines())
    }
}

impl Stopwords {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Stopwords(
            words
                .into_iter()
                .map(|w| w.as_ref().trim().to_lowercase())
                .filter(|w| !w.is_empty())
                .collect(),
        )
    }

    pub fn contains(&self, w: &str) -> bool {
        self.0.contains(w)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

pub fn tokenize(text: &str, stopwords: &Stopwords) -> Vec<String> {
    words(text)
        .into_iter()
        .filter(|w| w.chars().count() > 1 && !stopwords.contains(w))
        .collect()
}

/// Sparse non-negative term weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermVector(BTreeMap<String, f64>);

impl TermVector {
    pub fn from_weights<I: IntoIterator<Item = (String, f64)>>(it: I) -> Self {
        TermVector(it.into_iter().map(|(t, w)| (t, w.max(0.0))).collect())
    }

    pub fn weight(&self, term: &str) -> f64 {
        self.0.get(term).copied().unwrap_or(0.0)
    }

    pub fn terms(&self) -> impl Iterator<Item = (&str, f64)> {
        self.0.iter().map(|(t, w)| (t.as_str(), *w))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_zero(&self) -> bool {
        self.0.values().all(|w| *w == 0.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.values().map(|w| w * w).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &TermVector) -> f64 {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.terms().map(|(t, w)| w * large.weight(t)).sum()
    }

    /// Cosine similarity in `[0, 1]`; zero when either side is the zero vector.
    pub fn cosine(&self, other: &TermVector) -> f64 {
        let denom = self.norm() * other.norm();
        if denom == 0.0 {
            return 0.0;
        }
        (self.dot(other) / denom).clamp(0.0, 1.0)
    }

    pub fn mean<'a, I: IntoIterator<Item = &'a TermVector>>(vectors: I) -> TermVector {
        let mut sum: BTreeMap<String, f64> = BTreeMap::new();
        let mut n = 0usize;
        for v in vectors {
            n += 1;
            for (t, w) in v.terms() {
                *sum.entry(t.to_string()).or_default() += w;
            }
        }
        if n == 0 {
            return TermVector::default();
        }
        TermVector(sum.into_iter().map(|(t, w)| (t, w / n as f64)).collect())
    }

    /// Highest-weight terms, ties broken alphabetically.
    pub fn top_terms(&self, k: usize) -> Vec<&str> {
        let mut ts: Vec<(&str, f64)> = self.terms().filter(|(_, w)| *w > 0.0).collect();
        ts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ts.into_iter().take(k).map(|(t, _)| t).collect()
    }
}

/// Document frequencies over a fitted corpus. Fitting must finish before any
/// statement (or the topic) is transformed.
#[derive(Debug, Clone)]
pub struct Vectorizer {
    stopwords: Stopwords,
    documents: usize,
    df: BTreeMap<String, usize>,
}

impl Vectorizer {
    pub fn fit<S: AsRef<str>>(statements: &[S], stopwords: &Stopwords) -> Result<Self, ClusterError> {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for s in statements {
            let distinct: BTreeSet<String> = tokenize(s.as_ref(), stopwords).into_iter().collect();
            for t in distinct {
                *df.entry(t).or_default() += 1;
            }
        }
        if df.is_empty() {
            return Err(ClusterError::EmptyVocabulary);
        }
        Ok(Vectorizer {
            stopwords: stopwords.clone(),
            documents: statements.len(),
            df,
        })
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn idf(&self, term: &str) -> f64 {
        let df = self.df.get(term).copied().unwrap_or(0) as f64;
        (self.documents as f64 / (1.0 + df)).ln() + 1.0
    }

    pub fn transform(&self, text: &str) -> TermVector {
        let tokens = tokenize(text, &self.stopwords);
        if tokens.is_empty() {
            return TermVector::default();
        }
        let n = tokens.len() as f64;
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        TermVector::from_weights(counts.into_iter().map(|(t, c)| {
            let w = c as f64 / n * self.idf(&t);
            (t, w)
        }))
    }

    pub fn topic_vector(&self, topic_statement: &str) -> Result<TermVector, ClusterError> {
        let v = self.transform(topic_statement);
        if v.is_empty() {
            return Err(ClusterError::EmptyTopic);
        }
        Ok(v)
    }
}

pub fn vectorize<S: AsRef<str>>(
    statements: &[S],
    stopwords: &Stopwords,
) -> Result<Vec<TermVector>, ClusterError> {
    let v = Vectorizer::fit(statements, stopwords)?;
    Ok(statements.iter().map(|s| v.transform(s.as_ref())).collect())
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        DisjointSet {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// Connected components of the graph linking `i`–`j` iff both vectors are
/// nonzero and `cosine >= theta`. Components are index lists in ascending
/// order, sorted by their first index.
pub fn link_components(vectors: &[TermVector], theta: f64) -> Vec<Vec<usize>> {
    let n = vectors.len();
    let mut ds = DisjointSet::new(n);
    let nonzero: Vec<bool> = vectors.iter().map(|v| !v.is_zero()).collect();
    for i in 0..n {
        if !nonzero[i] {
            continue;
        }
        for j in (i + 1)..n {
            if nonzero[j] && vectors[i].cosine(&vectors[j]) >= theta {
                ds.union(i, j);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = ds.find(i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc {
    pub id: String,
    pub vector: TermVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub id: String,
    pub member_ids: Vec<String>,
    pub centroid: TermVector,
    pub topic_distance: f64,
    pub label: String,
    /// Centroid is zero: members are all stopwords and need a moderator look.
    pub needs_review: bool,
}

impl Cluster {
    pub fn relevance(&self) -> f64 {
        1.0 - self.topic_distance
    }

    pub fn summary(&self) -> ClusterSummary {
        ClusterSummary {
            id: self.id.clone(),
            label: self.label.clone(),
            topic_distance: self.topic_distance,
            member_ids: self.member_ids.clone(),
        }
    }
}

/// Exported cluster shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub id: String,
    pub label: String,
    pub topic_distance: f64,
    pub member_ids: Vec<String>,
}

pub fn cluster_id(member_ids: &[String]) -> String {
    let smallest = member_ids
        .iter()
        .min_by(|a, b| natural_cmp(a, b))
        .map(String::as_str)
        .unwrap_or("");
    format!("C-{smallest}")
}

pub fn topic_distance(centroid: &TermVector, topic: &TermVector) -> f64 {
    (1.0 - centroid.cosine(topic)).clamp(0.0, 1.0)
}

/// Builds one cluster from its members' vectors.
pub fn build_cluster(members: &[&Doc], topic: &TermVector) -> Cluster {
    // Summing in id order keeps the centroid independent of input order.
    let mut members = members.to_vec();
    members.sort_by(|a, b| natural_cmp(&a.id, &b.id));
    let member_ids: Vec<String> = members.iter().map(|d| d.id.clone()).collect();
    let centroid = TermVector::mean(members.iter().map(|d| &d.vector));
    let needs_review = centroid.is_zero();
    let topic_distance = if needs_review {
        1.0
    } else {
        topic_distance(&centroid, topic)
    };
    let label = centroid.top_terms(3).join(" ");
    Cluster {
        id: cluster_id(&member_ids),
        member_ids,
        centroid,
        topic_distance,
        label,
        needs_review,
    }
}

pub fn sort_clusters(clusters: &mut [Cluster]) {
    clusters.sort_by(|a, b| natural_cmp(&a.member_ids[0], &b.member_ids[0]));
}

pub fn cluster_candidates(docs: &[Doc], theta_link: f64, topic: &TermVector) -> Vec<Cluster> {
    let vectors: Vec<TermVector> = docs.iter().map(|d| d.vector.clone()).collect();
    let mut clusters: Vec<Cluster> = link_components(&vectors, theta_link)
        .into_iter()
        .map(|idx| {
            let members: Vec<&Doc> = idx.iter().map(|&i| &docs[i]).collect();
            build_cluster(&members, topic)
        })
        .collect();
    sort_clusters(&mut clusters);
    clusters
}

/// For each member, how many other members are at least `theta_dup` similar.
pub fn duplicate_counts(members: &[&Doc], theta_dup: f64) -> BTreeMap<String, u64> {
    let mut out: BTreeMap<String, u64> = members.iter().map(|d| (d.id.clone(), 0)).collect();
    for (i, a) in members.iter().enumerate() {
        for b in &members[i + 1..] {
            if !a.vector.is_zero() && !b.vector.is_zero() && a.vector.cosine(&b.vector) >= theta_dup {
                *out.get_mut(&a.id).unwrap() += 1;
                *out.get_mut(&b.id).unwrap() += 1;
            }
        }
    }
    out
}

/// Pre-matrix review ordering from consensus, duplication and relevance.
pub fn base_priority(consensus: u64, duplicate_count: u64, topic_distance: f64) -> f64 {
    (1.0 + consensus as f64) * (1.0 + duplicate_count as f64) * (1.0 - topic_distance + PRIORITY_EPSILON)
}
