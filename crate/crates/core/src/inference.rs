//! Decoding antecedent scores into clusters, typed mentions, and singletons.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityType, InfoStatus, Mention, Span};
use crate::error::Result;
use crate::model::{ForwardOptions, Model};
use crate::scoring::AntecedentScoreRow;
use crate::tensor::Tensor;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `(anaphor, antecedent)`; `None` is the dummy antecedent.
pub type Link = (usize, Option<usize>);

/// Argmax over `{ε} ∪ shortlist`. A candidate must beat ε strictly, and
/// among equal candidates the nearer one wins.
pub fn decode_antecedents(rows: &[AntecedentScoreRow]) -> Vec<Link> {
    rows.iter()
        .map(|row| {
            let mut best = None;
            let mut best_score = AntecedentScoreRow::EPSILON_SCORE;
            let mut order: Vec<usize> = (0..row.candidates.len()).collect();
            order.sort_by(|&a, &b| row.candidates[b].cmp(&row.candidates[a]));
            for k in order {
                if row.scores[k] > best_score {
                    best_score = row.scores[k];
                    best = Some(row.candidates[k]);
                }
            }
            (row.span, best)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MentionPrediction {
    pub span: Span,
    pub entity_type: Option<EntityType>,
    pub cluster_id: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PredictionResult {
    pub doc_key: String,
    /// Clusters of size at least 2, ordered by their first span.
    pub clusters: Vec<Vec<Span>>,
    pub singletons: Vec<Span>,
    pub mention_types: BTreeMap<Span, EntityType>,
    pub mention_status: BTreeMap<Span, InfoStatus>,
    /// Majority entity type per cluster, when types were predicted.
    pub cluster_types: Vec<Option<EntityType>>,
}

impl PredictionResult {
    pub fn empty(doc_key: impl Into<String>) -> Self {
        PredictionResult {
            doc_key: doc_key.into(),
            ..Default::default()
        }
    }

    pub fn mentions(&self) -> Vec<MentionPrediction> {
        let mut out: Vec<MentionPrediction> = self
            .clusters
            .iter()
            .enumerate()
            .flat_map(|(c, spans)| {
                spans.iter().map(move |&span| MentionPrediction {
                    span,
                    entity_type: None,
                    cluster_id: Some(c),
                })
            })
            .chain(self.singletons.iter().map(|&span| MentionPrediction {
                span,
                entity_type: None,
                cluster_id: None,
            }))
            .collect();
        for m in &mut out {
            m.entity_type = self.mention_types.get(&m.span).copied();
        }
        out.sort_by_key(|m| m.span);
        out
    }

    /// Clusters plus singletons as size-1 clusters.
    pub fn partition(&self) -> Vec<Vec<Span>> {
        let mut out = self.clusters.clone();
        out.extend(self.singletons.iter().map(|&s| vec![s]));
        out
    }

    pub fn without_singletons(&self) -> Self {
        let mut out = self.clone();
        for s in &self.singletons {
            out.mention_types.remove(s);
            out.mention_status.remove(s);
        }
        out.singletons.clear();
        out
    }

    /// The prediction as a document over `source`'s tokens, suitable for the
    /// corpus writers.
    pub fn to_document(&self, source: &Document) -> Document {
        let mut doc = Document {
            doc_key: self.doc_key.clone(),
            genre: source.genre.clone(),
            sentences: source.sentences.clone(),
            speakers: source.speakers.clone(),
            gold_clusters: self.clusters.clone(),
            gold_mentions: Vec::new(),
        };
        doc.gold_mentions = self
            .mentions()
            .into_iter()
            .map(|m| Mention {
                span: m.span,
                entity_type: m.entity_type,
                info_status: self.mention_status.get(&m.span).copied(),
                cluster_id: m.cluster_id,
            })
            .collect();
        doc
    }

    /// Reads a prediction back from a document written by [`Self::to_document`]
    /// or from any parsed response file.
    pub fn from_document(doc: &Document) -> Self {
        let mut clusters: Vec<Vec<Span>> = Vec::new();
        let mut singletons: Vec<Span> = Vec::new();
        for c in &doc.gold_clusters {
            if c.len() >= 2 {
                let mut c = c.clone();
                c.sort();
                clusters.push(c);
            } else {
                singletons.extend(c.iter().copied());
            }
        }
        singletons.extend(
            doc.gold_mentions
                .iter()
                .filter(|m| m.cluster_id.is_none())
                .map(|m| m.span),
        );
        singletons.sort();
        singletons.dedup();
        clusters.sort();
        let mut out = PredictionResult {
            doc_key: doc.doc_key.clone(),
            clusters,
            singletons,
            ..Default::default()
        };
        for m in &doc.gold_mentions {
            if let Some(t) = m.entity_type {
                out.mention_types.insert(m.span, t);
            }
            if let Some(s) = m.info_status {
                out.mention_status.insert(m.span, s);
            }
        }
        out.cluster_types = out
            .clusters
            .iter()
            .map(|c| majority_type(c, &out.mention_types))
            .collect();
        out
    }
}

/// Most frequent type among the cluster's members; ties go to the type of
/// the earliest member holding one of the tied types.
pub fn majority_type(cluster: &[Span], types: &BTreeMap<Span, EntityType>) -> Option<EntityType> {
    let mut counts: HashMap<EntityType, usize> = HashMap::new();
    for s in cluster {
        if let Some(t) = types.get(s) {
            *counts.entry(*t).or_default() += 1;
        }
    }
    let best = counts.values().copied().max()?;
    let mut members = cluster.to_vec();
    members.sort();
    members
        .iter()
        .filter_map(|s| types.get(s))
        .find(|t| counts[*t] == best)
        .copied()
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut root = x;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = x;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = k;
        }
    }
    best
}

/// Union-find over the non-dummy links. `spans`, the probabilities, and the
/// logit rows are indexed by the positions used in `links`.
pub fn build_clusters(
    doc_key: &str,
    spans: &[Span],
    links: &[Link],
    singleton_probs: &[f64],
    type_logits: Option<&Tensor>,
    status_logits: Option<&Tensor>,
    threshold: f64,
) -> PredictionResult {
    let n = spans.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut linked = vec![false; n];
    for &(i, j) in links {
        if let Some(j) = j {
            linked[i] = true;
            linked[j] = true;
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        if linked[i] {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
    }
    let mut clusters: Vec<Vec<usize>> = groups.into_values().collect();
    for c in &mut clusters {
        c.sort_by_key(|&i| spans[i]);
    }
    clusters.sort_by_key(|c| spans[c[0]]);

    let singletons: Vec<usize> = (0..n)
        .filter(|&i| !linked[i] && singleton_probs.get(i).is_some_and(|&p| p >= threshold))
        .collect();

    let mut out = PredictionResult::empty(doc_key);
    let emitted = clusters.iter().flatten().chain(singletons.iter());
    for &i in emitted {
        if let Some(t) = type_logits {
            out.mention_types.insert(
                spans[i],
                EntityType::from_index(argmax(t.row(i))).expect("10-way row"),
            );
        }
        if let Some(s) = status_logits {
            out.mention_status.insert(
                spans[i],
                InfoStatus::from_index(argmax(s.row(i))).expect("6-way row"),
            );
        }
    }
    out.clusters = clusters
        .iter()
        .map(|c| c.iter().map(|&i| spans[i]).collect())
        .collect();
    out.singletons = singletons.iter().map(|&i| spans[i]).collect();
    out.singletons.sort();
    out.cluster_types = out
        .clusters
        .iter()
        .map(|c| majority_type(c, &out.mention_types))
        .collect();
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PredictOptions {
    pub threshold: f64,
    pub singletons: bool,
}

impl Default for PredictOptions {
    fn default() -> Self {
        PredictOptions {
            threshold: DEFAULT_THRESHOLD,
            singletons: true,
        }
    }
}

pub fn predict(model: &Model, doc: &Document, opts: &PredictOptions) -> Result<PredictionResult> {
    if doc.token_count() == 0 {
        return Ok(PredictionResult::empty(&doc.doc_key));
    }
    let fwd = model.forward(
        doc,
        &ForwardOptions {
            heads: true,
            ..Default::default()
        },
    )?;
    let rows = fwd.score_rows();
    let links = decode_antecedents(&rows);
    let logits = fwd.head_logits().expect("heads requested");
    let probs = logits.mention_probabilities();
    let threshold = if opts.singletons {
        opts.threshold
    } else {
        f64::INFINITY
    };
    Ok(build_clusters(
        &doc.doc_key,
        &fwd.kept_spans,
        &links,
        &probs,
        Some(&logits.entity_type),
        Some(&logits.info_status),
        threshold,
    ))
}

pub fn predict_corpus(
    model: &Model,
    docs: &[Document],
    opts: &PredictOptions,
) -> Result<Vec<PredictionResult>> {
    docs.iter().map(|d| predict(model, d, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(span: usize, candidates: Vec<usize>, scores: Vec<f64>) -> AntecedentScoreRow {
        AntecedentScoreRow {
            span,
            candidates,
            scores,
        }
    }

    fn s(i: usize) -> Span {
        Span::new(i, i)
    }

    #[test]
    fn negative_scores_choose_dummy() {
        let rows = vec![
            row(0, vec![], vec![]),
            row(1, vec![0], vec![-0.1]),
            row(2, vec![0, 1], vec![-3.0, -1.0]),
        ];
        assert!(decode_antecedents(&rows).iter().all(|(_, a)| a.is_none()));
    }

    #[test]
    fn ties() {
        assert_eq!(
            decode_antecedents(&[row(1, vec![0], vec![0.0])]),
            vec![(1, None)]
        );
        assert_eq!(
            decode_antecedents(&[row(2, vec![0, 1], vec![2.0, 2.0])]),
            vec![(2, Some(1))]
        );
        assert_eq!(
            decode_antecedents(&[row(2, vec![0, 1], vec![2.0, 1.0])]),
            vec![(2, Some(0))]
        );
    }

    #[test]
    fn chain_and_threshold() {
        let spans = [s(0), s(1), s(2), s(3)];
        let links = vec![(0, None), (1, Some(0)), (2, Some(1)), (3, None)];
        let r = build_clusters("d", &spans, &links, &[0.0, 0.0, 0.0, 0.9], None, None, 0.5);
        assert_eq!(r.clusters, vec![vec![s(0), s(1), s(2)]]);
        assert_eq!(r.singletons, vec![s(3)]);
        let r = build_clusters(
            "d",
            &spans,
            &links,
            &[0.0, 0.0, 0.0, 0.9],
            None,
            None,
            1.0 + 1e-9,
        );
        assert!(r.singletons.is_empty());
        let none = build_clusters("d", &spans, &[], &[0.1; 4], None, None, 0.5);
        assert!(none.clusters.is_empty() && none.singletons.is_empty());
    }

    #[test]
    fn cluster_type_majority_and_tie() {
        let mut types = BTreeMap::new();
        types.insert(s(0), EntityType::Place);
        types.insert(s(1), EntityType::Person);
        types.insert(s(2), EntityType::Person);
        assert_eq!(
            majority_type(&[s(0), s(1), s(2)], &types),
            Some(EntityType::Person)
        );
        assert_eq!(
            majority_type(&[s(1), s(0)], &types),
            Some(EntityType::Place)
        );
    }

    #[test]
    fn types_follow_argmax() {
        let spans = [s(0), s(1)];
        let mut logits = Tensor::zeros(2, 10);
        logits.set(0, EntityType::Person.index(), 3.0);
        logits.set(1, EntityType::Time.index(), 3.0);
        let r = build_clusters(
            "d",
            &spans,
            &[(1, Some(0))],
            &[0.0; 2],
            Some(&logits),
            None,
            0.5,
        );
        assert_eq!(r.mention_types[&s(1)], EntityType::Time);
        assert_eq!(r.cluster_types, vec![Some(EntityType::Person)]);
    }

    #[test]
    fn document_round_trip() {
        let spans = [s(0), s(1), s(3)];
        let r = build_clusters(
            "d",
            &spans,
            &[(1, Some(0))],
            &[0.0, 0.0, 0.8],
            None,
            None,
            0.5,
        );
        let source = Document {
            doc_key: "d".into(),
            sentences: vec![vec!["w".into(); 4]],
            speakers: vec!["-".into(); 4],
            ..Default::default()
        };
        let doc = r.to_document(&source);
        doc.validate().unwrap();
        assert_eq!(PredictionResult::from_document(&doc), r);
    }
}
