//! Token encoders producing one contextual vector per document token.
//!
//! Only the toy encoder is computable in-process: an embedding lookup, a
//! fixed-radius moving average over the document, and a trainable `tanh`
//! projection added back onto the embedding. Row `t` therefore depends on
//! tokens `t - window ..= t + window` only, and never on speaker or genre.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::error::{CorefError, Result};
use crate::params::{Graph, Initializer, ParamGroup, ParamStore};
use crate::tensor::{Tensor, Var};

/// Environment variable naming the directory with pretrained encoder assets.
pub const CACHE_ENV: &str = "COREF_MTL_CACHE";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Pretrained,
    Toy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dim: usize,
    /// Embedding rows, including the reserved out-of-vocabulary row 0.
    pub vocab_size: usize,
    pub window: usize,
    /// Non-overlapping segment length for the pretrained encoder.
    pub segment_length: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Toy,
            dim: 64,
            vocab_size: 5000,
            window: 2,
            segment_length: 384,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(CorefError::Config("encoder.dim must be positive".into()));
        }
        if self.kind == EncoderKind::Toy && self.vocab_size < 2 {
            return Err(CorefError::Config(
                "encoder.vocab_size must be at least 2".into(),
            ));
        }
        if self.segment_length == 0 {
            return Err(CorefError::Config(
                "encoder.segment_length must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Surface-form vocabulary; id 0 is reserved for unknown tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const OOV: usize = 0;

    /// Most frequent tokens first (ties by first occurrence), capped so that
    /// ids stay below `size`.
    pub fn build<'a>(docs: impl IntoIterator<Item = &'a Document>, size: usize) -> Self {
        let mut counts: HashMap<&str, (usize, usize)> = HashMap::new();
        let mut order = 0;
        for doc in docs {
            for tok in doc.tokens() {
                let e = counts.entry(tok).or_insert((0, order));
                e.0 += 1;
                order += 1;
            }
        }
        let mut ranked: Vec<(&str, (usize, usize))> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1 .0.cmp(&a.1 .0).then(a.1 .1.cmp(&b.1 .1)));
        let tokens = ranked
            .into_iter()
            .take(size.saturating_sub(1))
            .map(|(t, _)| t.to_string())
            .collect();
        Vocabulary::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i + 1))
            .collect();
        Vocabulary { tokens, index }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Number of ids in use, including the unknown id.
    pub fn len(&self) -> usize {
        self.tokens.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(Self::OOV)
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(tokens: Vec<String>) -> Self {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

pub fn register(cfg: &EncoderConfig, store: &mut ParamStore, init: &mut Initializer) {
    if cfg.kind != EncoderKind::Toy {
        return;
    }
    let d = cfg.dim;
    store.add(
        "encoder.embedding",
        ParamGroup::Encoder,
        init.embedding(cfg.vocab_size, d),
    );
    store.add("encoder.mix.w", ParamGroup::Encoder, init.glorot(d, d));
    store.add("encoder.mix.b", ParamGroup::Encoder, Tensor::zeros(1, d));
}

/// `T × dim` contextual embeddings of `doc` recorded on the graph.
pub fn encode(
    g: &mut Graph<'_>,
    doc: &Document,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
) -> Result<Var> {
    match cfg.kind {
        EncoderKind::Pretrained => Err(pretrained_unavailable()),
        EncoderKind::Toy => {
            let ids: Vec<usize> = doc
                .tokens()
                .map(|t| vocab.id(t).min(cfg.vocab_size - 1))
                .collect();
            let table = g.param("encoder.embedding");
            let emb = g.tape.gather_rows(table, &ids);
            let mixed = g.tape.window_mean(emb, cfg.window);
            let w = g.param("encoder.mix.w");
            let b = g.param("encoder.mix.b");
            let z = g.tape.matmul(mixed, w);
            let z = g.tape.add_row(z, b);
            let z = g.tape.tanh(z);
            Ok(g.tape.add(emb, z))
        }
    }
}

/// Encodes outside of training and returns the embedding matrix.
pub fn encode_values(
    doc: &Document,
    cfg: &EncoderConfig,
    vocab: &Vocabulary,
    params: &ParamStore,
) -> Result<Tensor> {
    let mut g = Graph::new(params);
    let v = encode(&mut g, doc, cfg, vocab)?;
    Ok(g.value(v).clone())
}

fn pretrained_unavailable() -> CorefError {
    let location = std::env::var(CACHE_ENV)
        .map(|p| format!("{CACHE_ENV}={p}"))
        .unwrap_or_else(|_| format!("{CACHE_ENV} is not set"));
    CorefError::Capability(format!(
        "the pretrained encoder is not available in this build ({location}); \
         set encoder.kind = \"toy\" to use the built-in trainable encoder"
    ))
}
