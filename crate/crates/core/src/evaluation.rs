//! Coreference metrics: markable detection, MUC, B³, CEAF-φ4, and their
//! average F1, pooled over documents.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::ops::AddAssign;

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::corpus::{Document, Span};
use crate::error::{CorefError, Result};
use crate::inference::PredictionResult;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when the precision denominator was zero.
    #[serde(default, skip_serializing_if = "is_false")]
    pub precision_undefined: bool,
    #[serde(default, skip_serializing_if = "is_false")]
    pub recall_undefined: bool,
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// Pooled numerators and denominators.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Counts {
    pub recall_num: f64,
    pub recall_den: f64,
    pub precision_num: f64,
    pub precision_den: f64,
}

impl AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.recall_num += o.recall_num;
        self.recall_den += o.recall_den;
        self.precision_num += o.precision_num;
        self.precision_den += o.precision_den;
    }
}

impl Counts {
    pub fn prf(&self) -> Prf {
        let ratio = |n: f64, d: f64| if d > 0.0 { (n / d, false) } else { (0.0, true) };
        let (recall, recall_undefined) = ratio(self.recall_num, self.recall_den);
        let (precision, precision_undefined) = ratio(self.precision_num, self.precision_den);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Prf {
            precision,
            recall,
            f1,
            precision_undefined,
            recall_undefined,
        }
    }
}

fn owner_map(clusters: &[Vec<Span>]) -> HashMap<Span, usize> {
    let mut map = HashMap::new();
    for (c, cluster) in clusters.iter().enumerate() {
        for s in cluster {
            map.entry(*s).or_insert(c);
        }
    }
    map
}

fn muc_side(key: &[Vec<Span>], response: &[Vec<Span>]) -> (f64, f64) {
    let owner = owner_map(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in key {
        let mut parts: HashSet<usize> = HashSet::new();
        let mut unmatched = 0usize;
        for s in cluster {
            match owner.get(s) {
                Some(&r) => {
                    parts.insert(r);
                }
                None => unmatched += 1,
            }
        }
        let partitions = parts.len() + unmatched;
        num += (cluster.len() - partitions.min(cluster.len())) as f64;
        den += cluster.len().saturating_sub(1) as f64;
    }
    (num, den)
}

pub fn muc_counts(key: &[Vec<Span>], response: &[Vec<Span>]) -> Counts {
    let (recall_num, recall_den) = muc_side(key, response);
    let (precision_num, precision_den) = muc_side(response, key);
    Counts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

fn b_cubed_side(key: &[Vec<Span>], response: &[Vec<Span>]) -> (f64, f64) {
    let owner = owner_map(response);
    let mut num = 0.0;
    let mut den = 0.0;
    for cluster in key {
        let mut overlap: HashMap<usize, usize> = HashMap::new();
        for s in cluster {
            if let Some(&r) = owner.get(s) {
                *overlap.entry(r).or_default() += 1;
            }
        }
        let n = cluster.len() as f64;
        num += overlap.values().map(|&c| (c * c) as f64).sum::<f64>() / n;
        den += n;
    }
    (num, den)
}

pub fn b_cubed_counts(key: &[Vec<Span>], response: &[Vec<Span>]) -> Counts {
    let (recall_num, recall_den) = b_cubed_side(key, response);
    let (precision_num, precision_den) = b_cubed_side(response, key);
    Counts {
        recall_num,
        recall_den,
        precision_num,
        precision_den,
    }
}

/// `φ4(K, R) = 2|K ∩ R| / (|K| + |R|)`.
pub fn phi4(key: &[Span], response: &[Span]) -> f64 {
    let k: HashSet<&Span> = key.iter().collect();
    let common = response.iter().filter(|s| k.contains(s)).count();
    2.0 * common as f64 / (key.len() + response.len()) as f64
}

/// Best total `φ4` over one-to-one cluster alignments.
pub fn ceaf_phi4_alignment(key: &[Vec<Span>], response: &[Vec<Span>]) -> f64 {
    let sim: Vec<Vec<f64>> = key
        .iter()
        .map(|k| response.iter().map(|r| phi4(k, r)).collect())
        .collect();
    max_weight_assignment(&sim).1
}

pub fn ceaf_phi4_counts(key: &[Vec<Span>], response: &[Vec<Span>]) -> Counts {
    let total = ceaf_phi4_alignment(key, response);
    Counts {
        recall_num: total,
        recall_den: key.len() as f64,
        precision_num: total,
        precision_den: response.len() as f64,
    }
}

pub fn score_muc(key: &[Vec<Span>], response: &[Vec<Span>]) -> Prf {
    muc_counts(key, response).prf()
}

pub fn score_b_cubed(key: &[Vec<Span>], response: &[Vec<Span>]) -> Prf {
    b_cubed_counts(key, response).prf()
}

pub fn score_ceaf_phi4(key: &[Vec<Span>], response: &[Vec<Span>]) -> Prf {
    ceaf_phi4_counts(key, response).prf()
}

pub fn markable_counts(key: &[Span], response: &[Span]) -> Counts {
    let k: BTreeSet<Span> = key.iter().copied().collect();
    let r: BTreeSet<Span> = response.iter().copied().collect();
    let common = k.intersection(&r).count() as f64;
    Counts {
        recall_num: common,
        recall_den: k.len() as f64,
        precision_num: common,
        precision_den: r.len() as f64,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MentionMode {
    /// Only mentions in clusters of size two or more.
    #[default]
    Coreferent,
    /// Every mention, singletons included.
    All,
}

/// Mentions of `clusters` under `mode`; the input may contain size-1 clusters.
fn mentions_for(clusters: &[Vec<Span>], mode: MentionMode) -> Vec<Span> {
    clusters
        .iter()
        .filter(|c| mode == MentionMode::All || c.len() >= 2)
        .flatten()
        .copied()
        .collect()
}

pub fn markable_detection_prf(key: &[Vec<Span>], response: &[Vec<Span>], mode: MentionMode) -> Prf {
    markable_counts(&mentions_for(key, mode), &mentions_for(response, mode)).prf()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub keep_singletons: bool,
    pub mention_mode: MentionMode,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub markable_detection: Prf,
    pub muc: Prf,
    pub b_cubed: Prf,
    pub ceaf_phi4: Prf,
    pub avg_f1: f64,
    pub options: EvalOptions,
}

/// Per-document count bundle, pooled by [`evaluate`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DocumentCounts {
    pub markable: Counts,
    pub muc: Counts,
    pub b_cubed: Counts,
    pub ceaf_phi4: Counts,
}

impl AddAssign for DocumentCounts {
    fn add_assign(&mut self, o: DocumentCounts) {
        self.markable += o.markable;
        self.muc += o.muc;
        self.b_cubed += o.b_cubed;
        self.ceaf_phi4 += o.ceaf_phi4;
    }
}

impl DocumentCounts {
    pub fn report(&self, options: EvalOptions) -> EvaluationReport {
        let muc = self.muc.prf();
        let b_cubed = self.b_cubed.prf();
        let ceaf_phi4 = self.ceaf_phi4.prf();
        EvaluationReport {
            markable_detection: self.markable.prf(),
            muc,
            b_cubed,
            ceaf_phi4,
            avg_f1: (muc.f1 + b_cubed.f1 + ceaf_phi4.f1) / 3.0,
            options,
        }
    }
}

/// Counts for one key/response pair of partitions (size-1 clusters allowed).
pub fn document_counts(
    key: &[Vec<Span>],
    response: &[Vec<Span>],
    options: EvalOptions,
) -> DocumentCounts {
    let keep = |c: &&Vec<Span>| options.keep_singletons || c.len() >= 2;
    let key_c: Vec<Vec<Span>> = key.iter().filter(keep).cloned().collect();
    let resp_c: Vec<Vec<Span>> = response.iter().filter(keep).cloned().collect();
    DocumentCounts {
        markable: markable_counts(
            &mentions_for(key, options.mention_mode),
            &mentions_for(response, options.mention_mode),
        ),
        muc: muc_counts(&key_c, &resp_c),
        b_cubed: b_cubed_counts(&key_c, &resp_c),
        ceaf_phi4: ceaf_phi4_counts(&key_c, &resp_c),
    }
}

/// Pools counts over documents matched by key, then computes the report.
pub fn evaluate(
    gold: &[Document],
    predictions: &[PredictionResult],
    options: EvalOptions,
) -> Result<EvaluationReport> {
    let by_key: HashMap<&str, &PredictionResult> = predictions
        .iter()
        .map(|p| (p.doc_key.as_str(), p))
        .collect();
    let gold_keys: HashSet<&str> = gold.iter().map(|d| d.doc_key.as_str()).collect();
    let key_only: Vec<&str> = gold
        .iter()
        .map(|d| d.doc_key.as_str())
        .filter(|k| !by_key.contains_key(k))
        .collect();
    let response_only: Vec<&str> = predictions
        .iter()
        .map(|p| p.doc_key.as_str())
        .filter(|k| !gold_keys.contains(k))
        .collect();
    if !key_only.is_empty() || !response_only.is_empty() {
        return Err(CorefError::KeyMismatch {
            key_only: key_only.join(", "),
            response_only: response_only.join(", "),
        });
    }
    let mut total = DocumentCounts::default();
    for doc in gold {
        let pred = by_key[doc.doc_key.as_str()];
        total += document_counts(&doc.partition(), &pred.partition(), options);
    }
    Ok(total.report(options))
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>9} {:>9} {:>9}", "metric", "P", "R", "F1")?;
        let rows = [
            ("markable detection", &self.markable_detection),
            ("MUC", &self.muc),
            ("B3", &self.b_cubed),
            ("CEAF-phi4", &self.ceaf_phi4),
        ];
        for (name, p) in rows {
            writeln!(
                f,
                "{:<20} {:>9.4} {:>9.4} {:>9.4}",
                name, p.precision, p.recall, p.f1
            )?;
        }
        write!(f, "{:<20} {:>29.4}", "average F1", self.avg_f1)
    }
}
