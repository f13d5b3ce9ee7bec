use std::collections::HashMap;
use std::fmt::Write as _;

use super::{label_text, parse_optional_label, Document, EntityType, InfoStatus, Mention, Span};
use crate::error::{CorefError, Result};

pub const SIDECAR_HEADER: &str = "doc_key\tstart\tend\tentity_type\tinfo_status\tcluster_id";

/// One row of the mention-annotation sidecar.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SidecarRow {
    pub doc_key: String,
    pub span: Span,
    pub entity_type: Option<EntityType>,
    pub info_status: Option<InfoStatus>,
    pub cluster_id: Option<usize>,
}

pub fn parse_sidecar(text: &str) -> Result<Vec<SidecarRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end_matches('\r') == SIDECAR_HEADER => {}
        Some((_, header)) => {
            return Err(CorefError::Sidecar {
                line: 1,
                message: format!("expected header `{SIDECAR_HEADER}`, found `{header}`"),
            })
        }
        None => return Ok(Vec::new()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| CorefError::Sidecar {
            line: i + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(err(format!(
                "expected 6 tab-separated fields, found {}",
                cols.len()
            )));
        }
        let index = |s: &str, what: &str| -> Result<usize> {
            s.parse().map_err(|_| err(format!("invalid {what} `{s}`")))
        };
        let start = index(cols[1], "start")?;
        let end = index(cols[2], "end")?;
        let entity_type = parse_optional_label(cols[3]).map_err(|e| err(e.to_string()))?;
        let info_status = parse_optional_label(cols[4]).map_err(|e| err(e.to_string()))?;
        let cluster_id = match cols[5] {
            "_" => None,
            s => Some(index(s, "cluster_id")?),
        };
        rows.push(SidecarRow {
            doc_key: cols[0].to_string(),
            span: Span::new(start, end),
            entity_type,
            info_status,
            cluster_id,
        });
    }
    Ok(rows)
}

/// Writes every mention of every document as one sidecar row.
pub fn write_sidecar(docs: &[Document]) -> String {
    let mut out = String::from(SIDECAR_HEADER);
    out.push('\n');
    for doc in docs {
        for m in &doc.gold_mentions {
            let cluster = m
                .cluster_id
                .map_or_else(|| "_".to_string(), |c| c.to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}",
                doc.doc_key,
                m.span.start,
                m.span.end,
                label_text(&m.entity_type),
                label_text(&m.info_status),
                cluster
            );
        }
    }
    out
}

/// Unions the sidecar mention layer into `doc`. Rows for other documents are
/// ignored. Spans known only to the sidecar become singletons.
pub fn merge_sidecar(doc: &Document, rows: &[SidecarRow]) -> Result<Document> {
    let mut out = doc.clone();
    for row in rows.iter().filter(|r| r.doc_key == doc.doc_key) {
        let span = row.span;
        if !doc.span_is_valid(span) {
            return Err(CorefError::Range {
                doc_key: doc.doc_key.clone(),
                start: span.start,
                end: span.end,
                message: format!(
                    "document has {} tokens; spans must lie inside one sentence",
                    doc.token_count()
                ),
            });
        }
        let conflict =
            |field: &'static str, existing: String, incoming: String| CorefError::Conflict {
                doc_key: doc.doc_key.clone(),
                start: span.start,
                end: span.end,
                field,
                existing,
                incoming,
            };
        match out.gold_mentions.iter_mut().find(|m| m.span == span) {
            Some(m) => {
                if let Some(c) = row.cluster_id {
                    if m.cluster_id != Some(c) {
                        let existing = m.cluster_id.map_or("singleton".into(), |x| x.to_string());
                        return Err(conflict("cluster_id", existing, c.to_string()));
                    }
                }
                merge_label(
                    &mut m.entity_type,
                    row.entity_type,
                    "entity_type",
                    &conflict,
                )?;
                merge_label(
                    &mut m.info_status,
                    row.info_status,
                    "info_status",
                    &conflict,
                )?;
            }
            None => {
                if let Some(c) = row.cluster_id {
                    return Err(conflict("cluster_id", "singleton".into(), c.to_string()));
                }
                out.gold_mentions.push(Mention {
                    span,
                    entity_type: row.entity_type,
                    info_status: row.info_status,
                    cluster_id: None,
                });
            }
        }
    }
    out.gold_mentions.sort_by_key(|m| m.span);
    Ok(out)
}

fn merge_label<T: Copy + PartialEq + ToString>(
    slot: &mut Option<T>,
    incoming: Option<T>,
    field: &'static str,
    conflict: &impl Fn(&'static str, String, String) -> CorefError,
) -> Result<()> {
    match (*slot, incoming) {
        (Some(a), Some(b)) if a != b => Err(conflict(field, a.to_string(), b.to_string())),
        (None, Some(b)) => {
            *slot = Some(b);
            Ok(())
        }
        _ => Ok(()),
    }
}

/// Merges sidecar rows into a corpus; rows naming an unknown document are an
/// error.
pub fn merge_sidecar_corpus(docs: Vec<Document>, rows: &[SidecarRow]) -> Result<Vec<Document>> {
    let keys: HashMap<&str, usize> = docs
        .iter()
        .enumerate()
        .map(|(i, d)| (d.doc_key.as_str(), i))
        .collect();
    if let Some(row) = rows.iter().find(|r| !keys.contains_key(r.doc_key.as_str())) {
        return Err(CorefError::InvalidDocument {
            doc_key: row.doc_key.clone(),
            message: "sidecar rows name a document absent from the corpus".into(),
        });
    }
    docs.iter().map(|d| merge_sidecar(d, rows)).collect()
}

/// Sidecar-only mentions that partially overlap a coreference span. These are
/// reported, never resolved.
pub fn boundary_conflicts(doc: &Document) -> Vec<(Span, Span)> {
    let coref: Vec<Span> = doc.gold_clusters.iter().flatten().copied().collect();
    let mut out = Vec::new();
    for m in doc.gold_mentions.iter().filter(|m| m.cluster_id.is_none()) {
        for c in &coref {
            if m.span.crosses(c) {
                out.push((m.span, *c));
            }
        }
    }
    out
}
