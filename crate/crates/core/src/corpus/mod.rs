//! Documents, mention layers and their on-disk formats.
//!
//! Token addressing is document-level: a [`Span`] is an inclusive
//! `(start, end)` pair over the flattened token sequence.

mod conll;
mod jsonl;
mod sidecar;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CorefError, Result};

pub use conll::{parse_conll, write_conll};
pub use jsonl::{parse_jsonl, write_jsonl, JsonDocument};
pub use sidecar::{
    boundary_conflicts, merge_sidecar, merge_sidecar_corpus, parse_sidecar, write_sidecar,
    SidecarRow,
};

/// Inclusive token range over the whole document.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn width(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    /// Overlapping without either span containing the other.
    pub fn crosses(&self, other: &Span) -> bool {
        let overlap = self.start <= other.end && other.start <= self.end;
        overlap && !self.contains(other) && !other.contains(self)
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.start, self.end)
    }
}

macro_rules! closed_label_set {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }

            pub fn index(&self) -> usize {
                *self as usize
            }

            pub fn from_index(i: usize) -> Option<Self> {
                Self::ALL.get(i).copied()
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl Serialize for $name {
            fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(self.as_str())
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let s = String::deserialize(d)?;
                s.parse().map_err(serde::de::Error::custom)
            }
        }

        impl FromStr for $name {
            type Err = CorefError;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(CorefError::UnknownLabel(other.to_string())),
                }
            }
        }
    };
}

closed_label_set! {
    /// The ten entity types of the mention layer.
    EntityType {
        Abstract => "abstract",
        Animal => "animal",
        Event => "event",
        Object => "object",
        Organization => "organization",
        Person => "person",
        Place => "place",
        Plant => "plant",
        Substance => "substance",
        Time => "time",
    }
}

closed_label_set! {
    /// How a mentioned entity enters the discourse.
    InfoStatus {
        New => "new",
        GivenActive => "given:active",
        GivenInactive => "given:inactive",
        AccessibleInferrable => "accessible:inferrable",
        AccessibleCommonground => "accessible:commonground",
        AccessibleAggregate => "accessible:aggregate",
    }
}

/// Text used for an absent entity type or information status.
pub const UNKNOWN_LABEL: &str = "unknown";

pub(crate) fn parse_optional_label<T: FromStr<Err = CorefError>>(s: &str) -> Result<Option<T>> {
    match s {
        UNKNOWN_LABEL | "_" | "" => Ok(None),
        other => other.parse().map(Some),
    }
}

pub(crate) fn label_text<T: fmt::Display>(label: &Option<T>) -> String {
    label
        .as_ref()
        .map_or_else(|| UNKNOWN_LABEL.to_string(), ToString::to_string)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub span: Span,
    /// `None` is the `unknown` sentinel (no annotation layer for this span).
    pub entity_type: Option<EntityType>,
    pub info_status: Option<InfoStatus>,
    /// Index into [`Document::gold_clusters`]; `None` for a singleton.
    pub cluster_id: Option<usize>,
}

impl Mention {
    pub fn unlabeled(span: Span, cluster_id: Option<usize>) -> Self {
        Mention {
            span,
            entity_type: None,
            info_status: None,
            cluster_id,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Document {
    pub doc_key: String,
    pub genre: String,
    pub sentences: Vec<Vec<String>>,
    /// One speaker id per document token.
    pub speakers: Vec<String>,
    pub gold_clusters: Vec<Vec<Span>>,
    pub gold_mentions: Vec<Mention>,
}

impl Document {
    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.tokens().nth(index)
    }

    /// `(first token, last token)` of every sentence.
    pub fn sentence_bounds(&self) -> Vec<(usize, usize)> {
        let mut start = 0;
        let mut out = Vec::with_capacity(self.sentences.len());
        for s in &self.sentences {
            if !s.is_empty() {
                out.push((start, start + s.len() - 1));
            }
            start += s.len();
        }
        out
    }

    /// Sentence index of every token.
    pub fn sentence_map(&self) -> Vec<usize> {
        self.sentences
            .iter()
            .enumerate()
            .flat_map(|(i, s)| std::iter::repeat_n(i, s.len()))
            .collect()
    }

    pub fn speaker(&self, token: usize) -> &str {
        self.speakers.get(token).map_or("-", String::as_str)
    }

    pub fn span_is_valid(&self, span: Span) -> bool {
        if span.start > span.end || span.end >= self.token_count() {
            return false;
        }
        let map = self.sentence_map();
        map[span.start] == map[span.end]
    }

    pub fn mention(&self, span: Span) -> Option<&Mention> {
        self.gold_mentions.iter().find(|m| m.span == span)
    }

    /// Gold chains as span lists, with singleton mentions as size-1 clusters.
    pub fn partition(&self) -> Vec<Vec<Span>> {
        let mut out = self.gold_clusters.clone();
        let mut mentions: Vec<Span> = self
            .gold_mentions
            .iter()
            .filter(|m| m.cluster_id.is_none())
            .map(|m| m.span)
            .collect();
        mentions.sort();
        mentions.dedup();
        out.extend(mentions.into_iter().map(|s| vec![s]));
        out
    }

    /// Checks the document invariants.
    pub fn validate(&self) -> Result<()> {
        let invalid = |message: String| CorefError::InvalidDocument {
            doc_key: self.doc_key.clone(),
            message,
        };
        if self.speakers.len() != self.token_count() {
            return Err(invalid(format!(
                "{} speaker entries for {} tokens",
                self.speakers.len(),
                self.token_count()
            )));
        }
        let mut owner: HashMap<Span, usize> = HashMap::new();
        for (c, cluster) in self.gold_clusters.iter().enumerate() {
            for &span in cluster {
                if !self.span_is_valid(span) {
                    return Err(CorefError::Range {
                        doc_key: self.doc_key.clone(),
                        start: span.start,
                        end: span.end,
                        message: "cluster span outside a single sentence".into(),
                    });
                }
                if let Some(prev) = owner.insert(span, c) {
                    return Err(invalid(if prev == c {
                        format!("span {span} repeated in cluster {c}")
                    } else {
                        format!("span {span} shared by clusters {prev} and {c}")
                    }));
                }
            }
        }
        for span in owner.keys() {
            if self.mention(*span).is_none() {
                return Err(invalid(format!("cluster span {span} has no mention entry")));
            }
        }
        for m in &self.gold_mentions {
            if !self.span_is_valid(m.span) {
                return Err(CorefError::Range {
                    doc_key: self.doc_key.clone(),
                    start: m.span.start,
                    end: m.span.end,
                    message: "mention outside a single sentence".into(),
                });
            }
            if let Some(c) = m.cluster_id {
                let ok = self
                    .gold_clusters
                    .get(c)
                    .is_some_and(|cl| cl.contains(&m.span));
                if !ok {
                    return Err(invalid(format!(
                        "mention {} points at cluster {c} which does not contain it",
                        m.span
                    )));
                }
            }
        }
        Ok(())
    }

    /// Rebuilds `gold_mentions` for the cluster layer, keeping existing labels.
    pub fn sync_cluster_mentions(&mut self) {
        let mut by_span: BTreeMap<Span, Mention> = BTreeMap::new();
        for m in self.gold_mentions.drain(..) {
            by_span.entry(m.span).or_insert(m);
        }
        for m in by_span.values_mut() {
            m.cluster_id = None;
        }
        for (c, cluster) in self.gold_clusters.iter().enumerate() {
            for &span in cluster {
                let m = by_span
                    .entry(span)
                    .or_insert_with(|| Mention::unlabeled(span, None));
                if m.cluster_id.is_none() {
                    m.cluster_id = Some(c);
                }
            }
        }
        self.gold_mentions = by_span.into_values().collect();
    }
}

/// Genre from a document key: the first path segment of OntoNotes-style keys
/// (`bc/cctv/00/...`) or the second field of GUM keys (`GUM_academic_art`).
pub fn genre_from_key(key: &str) -> String {
    if let Some((first, _)) = key.split_once('/') {
        return first.to_string();
    }
    let mut parts = key.split('_');
    match (parts.next(), parts.next()) {
        (Some(p), Some(g)) if p.eq_ignore_ascii_case("gum") => g.to_string(),
        _ => String::new(),
    }
}
