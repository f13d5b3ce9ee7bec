//! Mention-level resolution errors, a surface-form anaphor classifier, and
//! the contrast between the errors of two systems.
//!
//! Error units, for a gold partition that includes singleton mentions:
//!
//! * every non-first mention `m` of a gold chain is checked against its
//!   earlier predicted cluster-mates: one from the same chain means no error,
//!   only others means `wrong-link`, none at all means `missing-link`;
//! * every other span with an earlier predicted cluster-mate is an error at
//!   that (later) span: `wrong-link` when it is a gold mention that should
//!   have started a new entity, `spurious-link` when it is not a mention.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, Span};
use crate::error::{CorefError, Result};
use crate::inference::PredictionResult;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorClass {
    #[serde(rename = "pronoun_1st_2nd")]
    Pronoun1st2nd,
    #[serde(rename = "pronoun_3rd")]
    Pronoun3rd,
    DefiniteNoun,
    IndefiniteNoun,
    ProperNoun,
    Other,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 6] = [
        ErrorClass::Pronoun1st2nd,
        ErrorClass::Pronoun3rd,
        ErrorClass::DefiniteNoun,
        ErrorClass::IndefiniteNoun,
        ErrorClass::ProperNoun,
        ErrorClass::Other,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorClass::Pronoun1st2nd => "pronoun_1st_2nd",
            ErrorClass::Pronoun3rd => "pronoun_3rd",
            ErrorClass::DefiniteNoun => "definite_noun",
            ErrorClass::IndefiniteNoun => "indefinite_noun",
            ErrorClass::ProperNoun => "proper_noun",
            ErrorClass::Other => "other",
        }
    }

    /// Row label used in the rendered table.
    pub fn label(&self) -> &'static str {
        match self {
            ErrorClass::Pronoun1st2nd => "1st & 2nd person pronouns",
            ErrorClass::Pronoun3rd => "3rd person pronouns",
            ErrorClass::DefiniteNoun => "Definite nouns",
            ErrorClass::IndefiniteNoun => "Indefinite nouns",
            ErrorClass::ProperNoun => "Proper nouns",
            ErrorClass::Other => "Other",
        }
    }
}

impl fmt::Display for ErrorClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorKind {
    MissingLink,
    WrongLink,
    SpuriousLink,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub doc_key: String,
    pub anaphor: Span,
    pub class: ErrorClass,
    pub kind: ErrorKind,
}

fn word_list(text: &'static str) -> HashSet<&'static str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn first_second() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_list(include_str!("../data/pronouns_1st_2nd.txt")))
}

fn third() -> &'static HashSet<&'static str> {
    static SET: OnceLock<HashSet<&'static str>> = OnceLock::new();
    SET.get_or_init(|| word_list(include_str!("../data/pronouns_3rd.txt")))
}

const DEFINITE: [&str; 5] = ["the", "this", "that", "these", "those"];
const INDEFINITE: [&str; 3] = ["a", "an", "some"];
const POSSESSIVE: [&str; 7] = ["my", "your", "his", "her", "its", "our", "their"];

fn capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(char::is_uppercase)
}

/// Surface-rule classification of the span's text.
pub fn classify_anaphor(doc: &Document, span: Span) -> ErrorClass {
    let words: Vec<&str> = (span.start..=span.end)
        .filter_map(|t| doc.token(t))
        .collect();
    let Some(&first) = words.first() else {
        return ErrorClass::Other;
    };
    let lower: Vec<String> = words.iter().map(|w| w.to_lowercase()).collect();
    if words.len() == 1 {
        if first_second().contains(lower[0].as_str()) {
            return ErrorClass::Pronoun1st2nd;
        }
        if third().contains(lower[0].as_str()) {
            return ErrorClass::Pronoun3rd;
        }
    }
    let inner_possessive = words[..words.len() - 1]
        .iter()
        .any(|w| w.ends_with("'s") || *w == "'" || *w == "'s");
    if DEFINITE.contains(&lower[0].as_str())
        || POSSESSIVE.contains(&lower[0].as_str())
        || inner_possessive
    {
        return ErrorClass::DefiniteNoun;
    }
    if INDEFINITE.contains(&lower[0].as_str()) {
        return ErrorClass::IndefiniteNoun;
    }
    let head = words[words.len() - 1];
    let head_lower = &lower[lower.len() - 1];
    if !capitalized(first)
        && head_lower.ends_with('s')
        && !head_lower.ends_with("ss")
        && head_lower.len() > 2
    {
        return ErrorClass::IndefiniteNoun;
    }
    if capitalized(head) {
        // A sentence-initial capital is only evidence of a name when the
        // word never shows up in lowercase elsewhere in the document.
        let sentence_initial = doc.sentence_bounds().iter().any(|&(s, _)| s == span.end);
        if !sentence_initial || !doc.tokens().any(|t| t == head_lower.as_str()) {
            return ErrorClass::ProperNoun;
        }
    }
    ErrorClass::Other
}

pub fn extract_errors(gold: &Document, pred: &PredictionResult) -> Vec<ErrorRecord> {
    let chains = gold.partition();
    let mut chain_of: HashMap<Span, usize> = HashMap::new();
    for (c, chain) in chains.iter().enumerate() {
        for s in chain {
            chain_of.entry(*s).or_insert(c);
        }
    }
    let mut pred_of: HashMap<Span, usize> = HashMap::new();
    for (c, cluster) in pred.clusters.iter().enumerate() {
        for s in cluster {
            pred_of.entry(*s).or_insert(c);
        }
    }
    let earlier_mates = |m: Span| -> Vec<Span> {
        pred_of
            .get(&m)
            .map(|&c| {
                pred.clusters[c]
                    .iter()
                    .copied()
                    .filter(|s| *s < m)
                    .collect()
            })
            .unwrap_or_default()
    };

    let mut records = BTreeSet::new();
    let mut record = |span: Span, kind: ErrorKind| {
        records.insert(ErrorRecord {
            doc_key: gold.doc_key.clone(),
            anaphor: span,
            class: classify_anaphor(gold, span),
            kind,
        });
    };

    let mut non_first: HashSet<Span> = HashSet::new();
    for (c, chain) in chains.iter().enumerate() {
        let mut sorted = chain.clone();
        sorted.sort();
        for &m in sorted.iter().skip(1) {
            non_first.insert(m);
            let mates = earlier_mates(m);
            if mates.iter().any(|s| chain_of.get(s) == Some(&c)) {
                continue;
            }
            record(
                m,
                if mates.is_empty() {
                    ErrorKind::MissingLink
                } else {
                    ErrorKind::WrongLink
                },
            );
        }
    }
    for cluster in &pred.clusters {
        let mut sorted = cluster.clone();
        sorted.sort();
        for &m in sorted.iter().skip(1) {
            if non_first.contains(&m) {
                continue;
            }
            let kind = if chain_of.contains_key(&m) {
                ErrorKind::WrongLink
            } else {
                ErrorKind::SpuriousLink
            };
            record(m, kind);
        }
    }
    let mut out: Vec<ErrorRecord> = records.into_iter().collect();
    out.sort_by_key(|r| (r.anaphor, r.kind));
    out
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct ContrastTable {
    pub counts: BTreeMap<ErrorClass, usize>,
    pub total: usize,
}

impl ContrastTable {
    fn from_records<'a>(records: impl Iterator<Item = &'a ErrorRecord>) -> Self {
        let mut counts: BTreeMap<ErrorClass, usize> =
            ErrorClass::ALL.iter().map(|c| (*c, 0)).collect();
        let mut total = 0;
        for r in records {
            *counts.entry(r.class).or_default() += 1;
            total += 1;
        }
        ContrastTable { counts, total }
    }

    pub fn count(&self, class: ErrorClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    /// Share of the table's total, in percent; 0 for an empty table.
    pub fn percent(&self, class: ErrorClass) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.count(class) as f64 / self.total as f64
        }
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Contrast {
    /// Errors made by A that B does not make.
    pub a_avoided_by_b: ContrastTable,
    /// Errors made by B that A does not make.
    pub b_avoided_by_a: ContrastTable,
}

fn all_errors(gold: &[Document], preds: &[PredictionResult]) -> Result<BTreeSet<ErrorRecord>> {
    let by_key: HashMap<&str, &PredictionResult> =
        preds.iter().map(|p| (p.doc_key.as_str(), p)).collect();
    let gold_keys: HashSet<&str> = gold.iter().map(|d| d.doc_key.as_str()).collect();
    let missing: Vec<&str> = gold_keys
        .iter()
        .copied()
        .filter(|k| !by_key.contains_key(k))
        .collect();
    let extra: Vec<&str> = by_key
        .keys()
        .copied()
        .filter(|k| !gold_keys.contains(k))
        .collect();
    if !missing.is_empty() || !extra.is_empty() {
        let mut missing = missing;
        let mut extra = extra;
        missing.sort_unstable();
        extra.sort_unstable();
        return Err(CorefError::KeyMismatch {
            key_only: missing.join(", "),
            response_only: extra.join(", "),
        });
    }
    Ok(gold
        .iter()
        .flat_map(|d| extract_errors(d, by_key[d.doc_key.as_str()]))
        .collect())
}

pub fn contrast(
    gold: &[Document],
    a: &[PredictionResult],
    b: &[PredictionResult],
) -> Result<Contrast> {
    let ea = all_errors(gold, a)?;
    let eb = all_errors(gold, b)?;
    let key = |r: &ErrorRecord| (r.doc_key.clone(), r.anaphor, r.kind);
    let ka: HashSet<_> = ea.iter().map(key).collect();
    let kb: HashSet<_> = eb.iter().map(key).collect();
    Ok(Contrast {
        a_avoided_by_b: ContrastTable::from_records(ea.iter().filter(|r| !kb.contains(&key(r)))),
        b_avoided_by_a: ContrastTable::from_records(eb.iter().filter(|r| !ka.contains(&key(r)))),
    })
}

/// Two-column table: errors of A avoided by B, and errors of B avoided by A.
pub fn render_contrast(c: &Contrast, name_a: &str, name_b: &str) -> String {
    let left = format!("{name_a} errors avoided by {name_b}");
    let right = format!("{name_b} errors avoided by {name_a}");
    let w = left.len().max(right.len()).max(14);
    let mut out = format!("{:<26} | {:>w$} | {:>w$}\n", "Error class", left, right);
    out.push_str(&format!("{}\n", "-".repeat(26 + 6 + 2 * w)));
    let cell = |t: &ContrastTable, class: ErrorClass| {
        format!("{} ({:.1}%)", t.count(class), t.percent(class))
    };
    for class in ErrorClass::ALL {
        out.push_str(&format!(
            "{:<26} | {:>w$} | {:>w$}\n",
            class.label(),
            cell(&c.a_avoided_by_b, class),
            cell(&c.b_avoided_by_a, class)
        ));
    }
    out.push_str(&format!(
        "{:<26} | {:>w$} | {:>w$}\n",
        "Total", c.a_avoided_by_b.total, c.b_avoided_by_a.total
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(words: &[&str]) -> Document {
        Document {
            doc_key: "d".into(),
            sentences: vec![words.iter().map(|w| w.to_string()).collect()],
            speakers: vec!["-".into(); words.len()],
            ..Default::default()
        }
    }

    #[test]
    fn classification_rules() {
        let d = doc(&[
            "Yesterday",
            "he",
            "left",
            "the",
            "school",
            "near",
            "Harrow",
            "with",
            "a",
            "friend",
            "and",
            "dogs",
            "I",
        ]);
        assert_eq!(
            classify_anaphor(&d, Span::new(1, 1)),
            ErrorClass::Pronoun3rd
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(3, 4)),
            ErrorClass::DefiniteNoun
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(6, 6)),
            ErrorClass::ProperNoun
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(8, 9)),
            ErrorClass::IndefiniteNoun
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(11, 11)),
            ErrorClass::IndefiniteNoun
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(12, 12)),
            ErrorClass::Pronoun1st2nd
        );
        assert_eq!(classify_anaphor(&d, Span::new(2, 2)), ErrorClass::Other);
    }

    #[test]
    fn sentence_initial_capitals() {
        let d = doc(&["Harrow", "is", "old", "."]);
        assert_eq!(
            classify_anaphor(&d, Span::new(0, 0)),
            ErrorClass::ProperNoun
        );
        let d = doc(&["Water", "is", "wet", "and", "water", "flows"]);
        assert_eq!(classify_anaphor(&d, Span::new(0, 0)), ErrorClass::Other);
    }

    #[test]
    fn possessives_are_definite() {
        let d = doc(&["we", "met", "John", "'s", "sister", "and", "his", "wife"]);
        assert_eq!(
            classify_anaphor(&d, Span::new(2, 4)),
            ErrorClass::DefiniteNoun
        );
        assert_eq!(
            classify_anaphor(&d, Span::new(6, 7)),
            ErrorClass::DefiniteNoun
        );
    }

    fn gold(clusters: Vec<Vec<Span>>, singles: &[Span]) -> Document {
        let mut d = doc(&["w"; 8]);
        d.gold_clusters = clusters;
        d.sync_cluster_mentions();
        for &s in singles {
            d.gold_mentions.push(crate::Mention::unlabeled(s, None));
        }
        d
    }

    fn pred(clusters: Vec<Vec<Span>>) -> PredictionResult {
        PredictionResult {
            doc_key: "d".into(),
            clusters,
            ..Default::default()
        }
    }

    fn s(i: usize) -> Span {
        Span::new(i, i)
    }

    #[test]
    fn perfect_prediction_has_no_errors() {
        let g = gold(vec![vec![s(0), s(2)], vec![s(1), s(3)]], &[]);
        assert!(extract_errors(&g, &pred(g.gold_clusters.clone())).is_empty());
    }

    #[test]
    fn missing_and_wrong() {
        let g = gold(vec![vec![s(0), s(1)]], &[s(2)]);
        let e = extract_errors(&g, &pred(vec![]));
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].anaphor, e[0].kind), (s(1), ErrorKind::MissingLink));

        let e = extract_errors(&g, &pred(vec![vec![s(1), s(2)]]));
        let got: Vec<(Span, ErrorKind)> = e.iter().map(|r| (r.anaphor, r.kind)).collect();
        assert_eq!(
            got,
            vec![(s(1), ErrorKind::MissingLink), (s(2), ErrorKind::WrongLink)]
        );
    }

    #[test]
    fn spurious_for_non_mentions() {
        let g = gold(vec![vec![s(0), s(1)]], &[]);
        let e = extract_errors(&g, &pred(vec![vec![s(0), s(1), s(5)]]));
        assert_eq!(e.len(), 1);
        assert_eq!((e[0].anaphor, e[0].kind), (s(5), ErrorKind::SpuriousLink));
    }

    #[test]
    fn contrast_tables() {
        let g = vec![gold(vec![vec![s(0), s(1)]], &[])];
        let a = vec![pred(vec![])];
        let b = vec![pred(vec![vec![s(0), s(1)]])];
        let c = contrast(&g, &a, &a).unwrap();
        assert!(c.a_avoided_by_b.is_empty() && c.b_avoided_by_a.is_empty());
        let c = contrast(&g, &a, &b).unwrap();
        assert_eq!(c.a_avoided_by_b.total, 1);
        assert_eq!(c.a_avoided_by_b.percent(ErrorClass::Other), 100.0);
        assert!(c.b_avoided_by_a.is_empty());
        let text = render_contrast(&c, "A", "B");
        assert!(text.contains("Definite nouns") && text.contains("100.0%"));
    }
}
