//! Candidate span enumeration and span representations.
//!
//! `g = [x_start; x_end; Σ α_t x_t; width embedding]`, with `α` a softmax of
//! a learned per-token score restricted to the span.

use crate::corpus::{Document, Span};
use crate::params::{Graph, Initializer, ParamGroup, ParamStore};
use crate::tensor::{softmax, Tensor, Var};

pub const DEFAULT_MAX_SPAN_WIDTH: usize = 30;

/// Number of buckets used for span widths and antecedent distances.
pub const BUCKETS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanCandidate {
    pub span: Span,
    pub sentence: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpanRepresentation {
    pub g: Vec<f64>,
    pub source: SpanCandidate,
    pub head_attention: Vec<f64>,
}

/// Exact buckets for 1..=4, then 5-7, 8-15, 16-31, 32+. Zero maps to the
/// first bucket.
pub fn bucket(value: usize) -> usize {
    match value {
        0..=4 => value.saturating_sub(1),
        5..=7 => 4,
        8..=15 => 5,
        16..=31 => 6,
        _ => 7,
    }
}

/// All within-sentence spans of width at most `max_width`, in `(start, end)`
/// order.
pub fn enumerate_spans(doc: &Document, max_width: usize) -> Vec<SpanCandidate> {
    let mut out = Vec::new();
    for (sentence, (first, last)) in doc.sentence_bounds().into_iter().enumerate() {
        for start in first..=last {
            let end_max = (start + max_width.max(1) - 1).min(last);
            for end in start..=end_max {
                out.push(SpanCandidate {
                    span: Span::new(start, end),
                    sentence,
                });
            }
        }
    }
    out
}

pub fn representation_dim(token_dim: usize, feature_dim: usize) -> usize {
    3 * token_dim + feature_dim
}

pub fn register(
    token_dim: usize,
    feature_dim: usize,
    store: &mut ParamStore,
    init: &mut Initializer,
) {
    store.add(
        "span.head.w",
        ParamGroup::Coreference,
        init.glorot(token_dim, 1),
    );
    store.add("span.head.b", ParamGroup::Coreference, Tensor::zeros(1, 1));
    store.add(
        "span.width",
        ParamGroup::Coreference,
        init.embedding(BUCKETS, feature_dim),
    );
}

/// Span representations on the graph.
pub struct SpanVars {
    /// `N × (3d + f)`
    pub reps: Var,
    /// `T × 1` head-attention logits.
    pub head_scores: Var,
}

pub fn represent_spans(g: &mut Graph<'_>, emb: Var, spans: &[SpanCandidate]) -> SpanVars {
    let starts: Vec<usize> = spans.iter().map(|c| c.span.start).collect();
    let ends: Vec<usize> = spans.iter().map(|c| c.span.end).collect();
    let widths: Vec<usize> = spans.iter().map(|c| bucket(c.span.width())).collect();
    let ranges: Vec<(usize, usize)> = spans.iter().map(|c| (c.span.start, c.span.end)).collect();

    let w = g.param("span.head.w");
    let b = g.param("span.head.b");
    let head_scores = g.tape.matmul(emb, w);
    let head_scores = g.tape.add_row(head_scores, b);

    let x_start = g.tape.gather_rows(emb, &starts);
    let x_end = g.tape.gather_rows(emb, &ends);
    let head = g.tape.span_attention(emb, head_scores, &ranges);
    let table = g.param("span.width");
    let width = g.tape.gather_rows(table, &widths);
    let reps = g.tape.concat_cols(&[x_start, x_end, head, width]);
    SpanVars { reps, head_scores }
}

/// Reads recorded span representations back as plain values.
pub fn describe(
    g: &Graph<'_>,
    vars: &SpanVars,
    spans: &[SpanCandidate],
) -> Vec<SpanRepresentation> {
    let reps = g.value(vars.reps);
    let scores = g.value(vars.head_scores).data();
    spans
        .iter()
        .enumerate()
        .map(|(k, c)| SpanRepresentation {
            g: reps.row(k).to_vec(),
            source: *c,
            head_attention: softmax(&scores[c.span.start..=c.span.end]),
        })
        .collect()
}

/// Representation of a single span over precomputed embeddings.
pub fn represent_span(
    emb: &Tensor,
    span: SpanCandidate,
    params: &ParamStore,
) -> SpanRepresentation {
    let mut g = Graph::new(params);
    let e = g.tape.constant(emb.clone());
    let vars = represent_spans(&mut g, e, &[span]);
    describe(&g, &vars, &[span]).remove(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(lengths: &[usize]) -> Document {
        let sentences: Vec<Vec<String>> = lengths
            .iter()
            .map(|&n| (0..n).map(|i| format!("w{i}")).collect())
            .collect();
        let t = lengths.iter().sum();
        Document {
            doc_key: "d".into(),
            sentences,
            speakers: vec!["-".into(); t],
            ..Default::default()
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumerate_spans(&doc(&[3]), 2).len(), 5);
        assert_eq!(enumerate_spans(&doc(&[3, 4]), 1).len(), 7);
        let spans = enumerate_spans(&doc(&[2, 2]), 3);
        assert_eq!(spans.len(), 6);
        assert!(spans
            .iter()
            .all(|c| !(c.span.start <= 1 && c.span.end >= 2)));
        let listed: Vec<(usize, usize)> =
            spans.iter().map(|c| (c.span.start, c.span.end)).collect();
        assert_eq!(listed, vec![(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3)]);
    }

    #[test]
    fn buckets() {
        let got: Vec<usize> = [1, 2, 3, 4, 5, 7, 8, 15, 16, 31, 32, 100]
            .iter()
            .map(|&w| bucket(w))
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 4, 4, 5, 5, 6, 6, 7, 7]);
    }

    fn store(d: usize, f: usize) -> ParamStore {
        let mut s = ParamStore::new();
        register(d, f, &mut s, &mut Initializer::new(5));
        s
    }

    #[test]
    fn width_one_span_heads_on_its_token() {
        let emb = Initializer::new(1).uniform(4, 3, 1.0);
        let params = store(3, 2);
        let c = SpanCandidate {
            span: Span::new(2, 2),
            sentence: 0,
        };
        let rep = represent_span(&emb, c, &params);
        assert_eq!(rep.head_attention, vec![1.0]);
        assert_eq!(rep.g.len(), representation_dim(3, 2));
        assert_eq!(&rep.g[6..9], emb.row(2));
    }

    #[test]
    fn uniform_scores_give_uniform_attention() {
        let emb = Initializer::new(2).uniform(5, 3, 1.0);
        let mut params = store(3, 2);
        params.get_mut("span.head.w").unwrap().data_mut().fill(0.0);
        let c = SpanCandidate {
            span: Span::new(1, 3),
            sentence: 0,
        };
        let rep = represent_span(&emb, c, &params);
        for a in &rep.head_attention {
            assert!((a - 1.0 / 3.0).abs() < 1e-15);
        }
    }
}
