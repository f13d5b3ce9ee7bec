use std::collections::HashMap;
use std::fmt::Write as _;

use super::{genre_from_key, Document, Span};
use crate::error::{CorefError, Result};

const BEGIN: &str = "#begin document";
const END: &str = "#end document";

/// Parses CoNLL-2012 text. Every `#begin document (<key>); part <n>` block
/// becomes its own document keyed `<key>_<n>`.
pub fn parse_conll(text: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut current: Option<DocBuilder> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        let lineno = lineno + 1;
        if let Some(rest) = line.strip_prefix(BEGIN) {
            if let Some(open) = &current {
                return Err(CorefError::Framing {
                    line: lineno,
                    message: format!("`#begin document` while `{}` is still open", open.doc_key),
                });
            }
            current = Some(DocBuilder::new(parse_doc_key(rest)));
            continue;
        }
        if line.starts_with(END) {
            let Some(mut builder) = current.take() else {
                return Err(CorefError::Framing {
                    line: lineno,
                    message: "`#end document` without a matching `#begin document`".into(),
                });
            };
            builder.end_sentence()?;
            docs.push(builder.finish());
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let Some(builder) = current.as_mut() else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(CorefError::Framing {
                line: lineno,
                message: "token line outside a document".into(),
            });
        };
        if line.trim().is_empty() {
            builder.end_sentence()?;
            continue;
        }
        builder.push_token(line)?;
    }

    if let Some(open) = current {
        return Err(CorefError::Framing {
            line: text.lines().count(),
            message: format!("document `{}` is missing `#end document`", open.doc_key),
        });
    }
    Ok(docs)
}

fn parse_doc_key(rest: &str) -> String {
    let rest = rest.trim();
    let (key_part, part) = match rest.split_once(';') {
        Some((k, p)) => (k.trim(), Some(p.trim())),
        None => (rest, None),
    };
    let key = key_part
        .strip_prefix('(')
        .and_then(|k| k.strip_suffix(')'))
        .unwrap_or(key_part);
    let part = part
        .and_then(|p| p.strip_prefix("part"))
        .and_then(|p| p.trim().parse::<u32>().ok());
    match part {
        Some(n) => format!("{key}_{n}"),
        None => key.to_string(),
    }
}

/// Splits `<key>_<n>` back into the CoNLL key and part number. Only a
/// canonical decimal suffix (no leading zeros) counts as a part number; any
/// other key is written whole as part 0.
fn split_doc_key(doc_key: &str) -> (&str, u32) {
    if let Some((base, part)) = doc_key.rsplit_once('_') {
        if let Ok(n) = part.parse::<u32>() {
            if n.to_string() == part {
                return (base, n);
            }
        }
    }
    (doc_key, 0)
}

struct DocBuilder {
    doc_key: String,
    sentences: Vec<Vec<String>>,
    speakers: Vec<String>,
    sentence: Vec<String>,
    token_offset: usize,
    open: HashMap<u64, Vec<(usize, usize)>>,
    chains: Vec<(u64, Vec<Span>)>,
    chain_index: HashMap<u64, usize>,
}

impl DocBuilder {
    fn new(doc_key: String) -> Self {
        DocBuilder {
            doc_key,
            sentences: Vec::new(),
            speakers: Vec::new(),
            sentence: Vec::new(),
            token_offset: 0,
            open: HashMap::new(),
            chains: Vec::new(),
            chain_index: HashMap::new(),
        }
    }

    fn error(&self, token: usize, message: impl Into<String>) -> CorefError {
        CorefError::Parse {
            doc_key: self.doc_key.clone(),
            sentence: self.sentences.len(),
            token,
            message: message.into(),
        }
    }

    fn push_token(&mut self, line: &str) -> Result<()> {
        let in_sentence = self.sentence.len();
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() < 5 {
            return Err(self.error(
                in_sentence,
                format!("expected at least 5 columns, found {}", cols.len()),
            ));
        }
        let word = cols[3].to_string();
        let speaker = if cols.len() >= 12 { cols[9] } else { "-" };
        let coref = cols[cols.len() - 1];
        let position = self.token_offset + in_sentence;
        self.parse_coref_cell(coref, position, in_sentence)?;
        self.sentence.push(word);
        self.speakers.push(speaker.to_string());
        Ok(())
    }

    fn parse_coref_cell(&mut self, cell: &str, position: usize, in_sentence: usize) -> Result<()> {
        if cell == "-" {
            return Ok(());
        }
        for part in cell.split('|') {
            let opens = part.starts_with('(');
            let closes = part.ends_with(')');
            let digits = part.trim_start_matches('(').trim_end_matches(')');
            let id: u64 = match digits.parse() {
                Ok(id) if !digits.is_empty() && (opens || closes) => id,
                _ => {
                    return Err(self.error(
                        in_sentence,
                        format!("malformed coreference markup `{part}`"),
                    ))
                }
            };
            match (opens, closes) {
                (true, true) => self.add_span(id, Span::new(position, position)),
                (true, false) => self
                    .open
                    .entry(id)
                    .or_default()
                    .push((position, in_sentence)),
                (false, true) => {
                    let start = self.open.get_mut(&id).and_then(Vec::pop);
                    match start {
                        Some((start, _)) => self.add_span(id, Span::new(start, position)),
                        None => {
                            return Err(self.error(
                                in_sentence,
                                format!("`{id})` closes a mention that was never opened"),
                            ))
                        }
                    }
                }
                (false, false) => unreachable!(),
            }
        }
        Ok(())
    }

    fn add_span(&mut self, id: u64, span: Span) {
        let idx = *self.chain_index.entry(id).or_insert_with(|| {
            self.chains.push((id, Vec::new()));
            self.chains.len() - 1
        });
        let spans = &mut self.chains[idx].1;
        if !spans.contains(&span) {
            spans.push(span);
        }
    }

    fn end_sentence(&mut self) -> Result<()> {
        let unclosed = self
            .open
            .iter()
            .flat_map(|(id, starts)| starts.iter().map(move |s| (*id, *s)))
            .min_by_key(|(_, (pos, _))| *pos);
        if let Some((id, (_, in_sentence))) = unclosed {
            return Err(self.error(
                in_sentence,
                format!("`({id}` is never closed within its sentence"),
            ));
        }
        if !self.sentence.is_empty() {
            self.token_offset += self.sentence.len();
            self.sentences.push(std::mem::take(&mut self.sentence));
        }
        Ok(())
    }

    fn finish(self) -> Document {
        let mut chains: Vec<(usize, Vec<Span>)> = self
            .chains
            .into_iter()
            .enumerate()
            .map(|(seen, (_, mut spans))| {
                spans.sort();
                (seen, spans)
            })
            .collect();
        chains.sort_by(|a, b| a.1[0].cmp(&b.1[0]).then(a.0.cmp(&b.0)));
        let gold_clusters: Vec<Vec<Span>> = chains.into_iter().map(|(_, s)| s).collect();
        let mut doc = Document {
            genre: genre_from_key(&self.doc_key),
            doc_key: self.doc_key,
            sentences: self.sentences,
            speakers: self.speakers,
            gold_clusters,
            gold_mentions: Vec::new(),
        };
        doc.sync_cluster_mentions();
        doc
    }
}

/// Serializes documents in CoNLL-2012 layout. With `include_singletons`,
/// singleton mentions are written as size-1 chains; without it, size-1 chains
/// are dropped as well.
pub fn write_conll(docs: &[Document], include_singletons: bool) -> String {
    let mut out = String::new();
    for doc in docs {
        let (base, part) = split_doc_key(&doc.doc_key);
        let chains: Vec<Vec<Span>> = if include_singletons {
            doc.partition()
        } else {
            doc.gold_clusters
                .iter()
                .filter(|c| c.len() >= 2)
                .cloned()
                .collect()
        };

        let mut opens: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        let mut singles: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut closes: HashMap<usize, Vec<(usize, usize)>> = HashMap::new();
        for (id, chain) in chains.iter().enumerate() {
            for span in chain {
                if span.start == span.end {
                    singles.entry(span.start).or_default().push(id);
                } else {
                    opens.entry(span.start).or_default().push((span.end, id));
                    closes.entry(span.end).or_default().push((span.start, id));
                }
            }
        }

        let _ = writeln!(out, "{BEGIN} ({base}); part {part:03}");
        let mut position = 0;
        for sentence in &doc.sentences {
            for (i, word) in sentence.iter().enumerate() {
                let mut cells: Vec<String> = Vec::new();
                if let Some(o) = opens.get_mut(&position) {
                    o.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    cells.extend(o.iter().map(|(_, id)| format!("({id}")));
                }
                if let Some(s) = singles.get_mut(&position) {
                    s.sort_unstable();
                    cells.extend(s.iter().map(|id| format!("({id})")));
                }
                if let Some(c) = closes.get_mut(&position) {
                    c.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
                    cells.extend(c.iter().map(|(_, id)| format!("{id})")));
                }
                let coref = if cells.is_empty() {
                    "-".to_string()
                } else {
                    cells.join("|")
                };
                let speaker = match doc.speaker(position) {
                    "" => "-",
                    s => s,
                };
                let _ = writeln!(
                    out,
                    "{base}\t{part}\t{i}\t{word}\t-\t-\t-\t-\t-\t{speaker}\t*\t{coref}"
                );
                position += 1;
            }
            out.push('\n');
        }
        let _ = writeln!(out, "{END}");
    }
    out
}
