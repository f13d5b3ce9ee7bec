//! The full span-ranking model: encoder, span representations, unary and
//! pairwise scorers, and the auxiliary heads, all living in one parameter
//! store.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::encoder::{self, EncoderConfig, Vocabulary};
use crate::error::{CorefError, Result};
use crate::mtl_loss::{self, HeadLogits, HeadVars};
use crate::params::{Graph, Initializer, ParamStore};
use crate::scoring::{
    self, AntecedentScoreRow, PairFeatures, ScorerShape, UnaryScore, DEFAULT_MAX_ANTECEDENTS,
    DEFAULT_PRUNE_RATIO,
};
use crate::spans::{self, SpanCandidate, DEFAULT_MAX_SPAN_WIDTH};
use crate::tensor::{Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Size of every feature embedding (width, distance, speaker, genre).
    pub feature_dim: usize,
    pub ffnn_layers: usize,
    pub ffnn_width: usize,
    pub max_span_width: usize,
    pub prune_ratio: f64,
    pub max_antecedents: usize,
    /// Dropout on token embeddings during training.
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            encoder: EncoderConfig::default(),
            feature_dim: 20,
            ffnn_layers: 2,
            ffnn_width: 1000,
            max_span_width: DEFAULT_MAX_SPAN_WIDTH,
            prune_ratio: DEFAULT_PRUNE_RATIO,
            max_antecedents: DEFAULT_MAX_ANTECEDENTS,
            dropout: 0.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        let bad = |m: &str| Err(CorefError::Config(m.to_string()));
        if self.feature_dim == 0 || self.ffnn_width == 0 {
            return bad("feature_dim and ffnn_width must be positive");
        }
        if self.max_span_width == 0 {
            return bad("max_span_width must be at least 1");
        }
        if !(self.prune_ratio > 0.0 && self.prune_ratio <= 1.0) {
            return bad("prune_ratio must lie in (0, 1]");
        }
        if self.max_antecedents == 0 {
            return bad("max_antecedents must be at least 1");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn shape(&self, genres: usize) -> ScorerShape {
        ScorerShape {
            rep_dim: spans::representation_dim(self.encoder.dim, self.feature_dim),
            feature_dim: self.feature_dim,
            layers: self.ffnn_layers,
            width: self.ffnn_width,
            genres: genres + 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    /// Known genres; index 0 of the genre embedding is reserved for unseen ones.
    pub genres: Vec<String>,
    pub params: ParamStore,
}

/// Pruning decisions and shortlists, reusable to hold the discrete structure
/// fixed across forward passes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Structure {
    pub kept: Vec<usize>,
    pub shortlists: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Default)]
pub struct ForwardOptions {
    /// Build the auxiliary heads. Off gives the auxiliary-free path.
    pub heads: bool,
    /// Seed for the dropout mask; `None` disables dropout.
    pub dropout_seed: Option<u64>,
    pub structure: Option<Structure>,
}

pub struct Forward<'a> {
    pub g: Graph<'a>,
    pub candidates: Vec<SpanCandidate>,
    pub unary: Vec<UnaryScore>,
    pub structure: Structure,
    pub kept_spans: Vec<Span>,
    /// `(anaphor, shortlist)` per kept span, positions into `kept_spans`.
    pub rows: Vec<(usize, Vec<usize>)>,
    /// Flat `P × 1` column of pair scores in row order; `None` if no pairs.
    pub pair_scores: Option<Var>,
    pub kept_reps: Var,
    pub heads: Option<HeadVars>,
}

impl Model {
    pub fn new(config: ModelConfig, corpus: &[Document], seed: u64) -> Result<Model> {
        let vocab = Vocabulary::build(corpus, config.encoder.vocab_size);
        let mut genres: Vec<String> = corpus
            .iter()
            .map(|d| d.genre.clone())
            .filter(|g| !g.is_empty())
            .collect();
        genres.sort();
        genres.dedup();
        Model::with_vocabulary(config, vocab, genres, seed)
    }

    /// A freshly initialized model over a fixed vocabulary and genre list.
    pub fn with_vocabulary(
        config: ModelConfig,
        vocab: Vocabulary,
        genres: Vec<String>,
        seed: u64,
    ) -> Result<Model> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut init = Initializer::new(seed);
        encoder::register(&config.encoder, &mut params, &mut init);
        spans::register(
            config.encoder.dim,
            config.feature_dim,
            &mut params,
            &mut init,
        );
        let shape = config.shape(genres.len());
        shape.register(&mut params, &mut init);
        mtl_loss::register_heads(&shape, &mut params, &mut init);
        Ok(Model {
            config,
            vocab,
            genres,
            params,
        })
    }

    pub fn shape(&self) -> ScorerShape {
        self.config.shape(self.genres.len())
    }

    pub fn genre_index(&self, genre: &str) -> usize {
        self.genres
            .iter()
            .position(|g| g == genre)
            .map_or(0, |p| p + 1)
    }

    pub fn forward(&self, doc: &Document, opts: &ForwardOptions) -> Result<Forward<'_>> {
        if doc.token_count() == 0 {
            return Err(CorefError::InvalidDocument {
                doc_key: doc.doc_key.clone(),
                message: "document has no tokens".into(),
            });
        }
        let cfg = &self.config;
        let shape = self.shape();
        let mut g = Graph::new(&self.params);
        let mut emb = encoder::encode(&mut g, doc, &cfg.encoder, &self.vocab)?;
        if let (Some(seed), true) = (opts.dropout_seed, cfg.dropout > 0.0) {
            let (rows, cols) = g.value(emb).shape();
            let mask = dropout_mask(rows, cols, cfg.dropout, seed);
            let mask = g.tape.constant(mask);
            emb = g.tape.mul(emb, mask);
        }

        let candidates = spans::enumerate_spans(doc, cfg.max_span_width);
        let span_vars = spans::represent_spans(&mut g, emb, &candidates);
        let unary_vars = scoring::unary_vars(&mut g, &shape, span_vars.reps);
        let unary = scoring::read_unary(&g, &unary_vars);
        let combined: Vec<f64> = unary.iter().map(|u| u.combined).collect();
        let all_spans: Vec<Span> = candidates.iter().map(|c| c.span).collect();

        let kept = match &opts.structure {
            Some(s) => s.kept.clone(),
            None => scoring::prune_spans(&all_spans, &combined, doc.token_count(), cfg.prune_ratio),
        };
        let kept_spans: Vec<Span> = kept.iter().map(|&i| all_spans[i]).collect();
        let kept_reps = g.tape.gather_rows(span_vars.reps, &kept);
        let kept_unary = g.tape.gather_rows(unary_vars.combined, &kept);
        let kept_mention = g.tape.gather_rows(unary_vars.mention, &kept);
        let bilinear = scoring::coarse_vars(&mut g, kept_reps);
        let shortlists = match &opts.structure {
            Some(s) => s.shortlists.clone(),
            None => {
                let kept_scores: Vec<f64> = kept.iter().map(|&i| combined[i]).collect();
                scoring::shortlist(g.value(bilinear), &kept_scores, cfg.max_antecedents)
            }
        };

        let genre = self.genre_index(&doc.genre);
        let mut pairs = Vec::new();
        let mut features = Vec::new();
        for (i, list) in shortlists.iter().enumerate() {
            for &j in list {
                pairs.push((i, j));
                features.push(PairFeatures::new(
                    i - j,
                    doc.speaker(kept_spans[i].start),
                    doc.speaker(kept_spans[j].start),
                    genre,
                ));
            }
        }
        let pair_scores = (!pairs.is_empty()).then(|| {
            scoring::pair_score_vars(
                &mut g, &shape, kept_reps, kept_unary, bilinear, &pairs, &features,
            )
        });
        let heads = opts
            .heads
            .then(|| mtl_loss::head_vars(&mut g, &shape, kept_reps, kept_mention));
        let rows = shortlists.iter().cloned().enumerate().collect();
        Ok(Forward {
            g,
            candidates,
            unary,
            structure: Structure { kept, shortlists },
            kept_spans,
            rows,
            pair_scores,
            kept_reps,
            heads,
        })
    }
}

impl Forward<'_> {
    pub fn score_rows(&self) -> Vec<AntecedentScoreRow> {
        let flat = self
            .pair_scores
            .map(|v| self.g.value(v).data().to_vec())
            .unwrap_or_default();
        let mut offset = 0;
        self.rows
            .iter()
            .map(|(i, cands)| {
                let scores = flat[offset..offset + cands.len()].to_vec();
                offset += cands.len();
                AntecedentScoreRow {
                    span: *i,
                    candidates: cands.clone(),
                    scores,
                }
            })
            .collect()
    }

    pub fn head_logits(&self) -> Option<HeadLogits> {
        self.heads.as_ref().map(|h| HeadLogits::read(&self.g, h))
    }
}

fn dropout_mask(rows: usize, cols: usize, rate: f64, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = 1.0 / (1.0 - rate);
    let data = (0..rows * cols)
        .map(|_| {
            if rng.random::<f64>() < rate {
                0.0
            } else {
                keep
            }
        })
        .collect();
    Tensor::from_vec(rows, cols, data)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::corpus::Mention;

    pub(crate) fn tiny_config() -> ModelConfig {
        ModelConfig {
            encoder: EncoderConfig {
                dim: 6,
                vocab_size: 40,
                window: 1,
                ..Default::default()
            },
            feature_dim: 3,
            ffnn_layers: 1,
            ffnn_width: 5,
            max_span_width: 3,
            prune_ratio: 0.6,
            max_antecedents: 4,
            dropout: 0.0,
        }
    }

    pub(crate) fn two_sentence_doc() -> Document {
        let sentences: Vec<Vec<String>> = [
            vec!["John", "saw", "the", "dog", "."],
            vec!["He", "liked", "it", "."],
        ]
        .iter()
        .map(|s| s.iter().map(|t| t.to_string()).collect())
        .collect();
        let mut doc = Document {
            doc_key: "news/fixture_0".into(),
            genre: "news".into(),
            speakers: vec!["A".into(); 9],
            sentences,
            gold_clusters: vec![
                vec![Span::new(0, 0), Span::new(5, 5)],
                vec![Span::new(2, 3), Span::new(7, 7)],
            ],
            gold_mentions: Vec::new(),
        };
        doc.gold_mentions = vec![
            Mention {
                span: Span::new(0, 0),
                entity_type: Some(crate::EntityType::Person),
                info_status: Some(crate::InfoStatus::New),
                cluster_id: Some(0),
            },
            Mention::unlabeled(Span::new(2, 3), Some(1)),
            Mention::unlabeled(Span::new(5, 5), Some(0)),
            Mention::unlabeled(Span::new(7, 7), Some(1)),
        ];
        doc
    }

    #[test]
    fn forward_shapes() {
        let doc = two_sentence_doc();
        let model = Model::new(tiny_config(), std::slice::from_ref(&doc), 1).unwrap();
        let fwd = model
            .forward(
                &doc,
                &ForwardOptions {
                    heads: true,
                    ..Default::default()
                },
            )
            .unwrap();
        assert_eq!(fwd.kept_spans.len(), fwd.structure.kept.len());
        assert!(fwd.kept_spans.windows(2).all(|w| w[0] < w[1]));
        let rows = fwd.score_rows();
        assert_eq!(rows.len(), fwd.kept_spans.len());
        for r in &rows {
            assert!(r.candidates.iter().all(|&j| j < r.span));
            assert_eq!(r.with_epsilon()[0], 0.0);
        }
        let logits = fwd.head_logits().unwrap();
        assert_eq!(logits.mention.cols(), 2);
        assert_eq!(logits.entity_type.cols(), 10);
        assert_eq!(logits.info_status.cols(), 6);
    }

    #[test]
    fn empty_document_rejected() {
        let doc = Document::default();
        let model = Model::new(tiny_config(), &[], 1).unwrap();
        assert!(model.forward(&doc, &ForwardOptions::default()).is_err());
    }

    #[test]
    fn unseen_genre_uses_reserved_slot() {
        let doc = two_sentence_doc();
        let model = Model::new(tiny_config(), &[doc], 1).unwrap();
        assert_eq!(model.genre_index("news"), 1);
        assert_eq!(model.genre_index("blog"), 0);
    }
}
