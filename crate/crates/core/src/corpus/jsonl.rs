use serde::{Deserialize, Serialize};

use super::{label_text, parse_optional_label, Document, Mention, Span};
use crate::error::{CorefError, Result};

/// One line of the JSONL interchange format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonDocument {
    pub doc_key: String,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub genre: String,
    pub sentences: Vec<Vec<String>>,
    /// Speaker ids shaped like `sentences`.
    #[serde(default)]
    pub speakers: Vec<Vec<String>>,
    #[serde(default)]
    pub clusters: Vec<Vec<[usize; 2]>>,
    /// `[start, end, entity_type, info_status]`
    #[serde(default)]
    pub mentions: Vec<(usize, usize, String, String)>,
}

impl From<&Document> for JsonDocument {
    fn from(doc: &Document) -> Self {
        let mut speakers = Vec::with_capacity(doc.sentences.len());
        let mut t = 0;
        for s in &doc.sentences {
            speakers.push(
                (t..t + s.len())
                    .map(|i| doc.speaker(i).to_string())
                    .collect(),
            );
            t += s.len();
        }
        JsonDocument {
            doc_key: doc.doc_key.clone(),
            genre: doc.genre.clone(),
            sentences: doc.sentences.clone(),
            speakers,
            clusters: doc
                .gold_clusters
                .iter()
                .map(|c| c.iter().map(|s| [s.start, s.end]).collect())
                .collect(),
            mentions: doc
                .gold_mentions
                .iter()
                .map(|m| {
                    (
                        m.span.start,
                        m.span.end,
                        label_text(&m.entity_type),
                        label_text(&m.info_status),
                    )
                })
                .collect(),
        }
    }
}

impl TryFrom<JsonDocument> for Document {
    type Error = CorefError;

    fn try_from(j: JsonDocument) -> Result<Self> {
        let token_count: usize = j.sentences.iter().map(Vec::len).sum();
        let speakers: Vec<String> = if j.speakers.is_empty() {
            vec!["-".to_string(); token_count]
        } else {
            j.speakers.into_iter().flatten().collect()
        };
        let mut doc = Document {
            genre: if j.genre.is_empty() {
                super::genre_from_key(&j.doc_key)
            } else {
                j.genre
            },
            doc_key: j.doc_key,
            sentences: j.sentences,
            speakers,
            gold_clusters: j
                .clusters
                .into_iter()
                .map(|c| c.into_iter().map(|[s, e]| Span::new(s, e)).collect())
                .collect(),
            gold_mentions: Vec::new(),
        };
        for (start, end, entity_type, info_status) in j.mentions {
            doc.gold_mentions.push(Mention {
                span: Span::new(start, end),
                entity_type: parse_optional_label(&entity_type)?,
                info_status: parse_optional_label(&info_status)?,
                cluster_id: None,
            });
        }
        doc.sync_cluster_mentions();
        doc.validate()?;
        Ok(doc)
    }
}

pub fn parse_jsonl(text: &str) -> Result<Vec<Document>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<JsonDocument>(l)?.try_into())
        .collect()
}

pub fn write_jsonl(docs: &[Document]) -> Result<String> {
    let mut out = String::new();
    for d in docs {
        out.push_str(&serde_json::to_string(&JsonDocument::from(d))?);
        out.push('\n');
    }
    Ok(out)
}
