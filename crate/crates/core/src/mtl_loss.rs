//! Auxiliary heads, the antecedent marginal likelihood, and the weighted
//! joint loss `L_total = Σ_c W_c · L_c`.
//!
//! Auxiliary supervision only touches pruned spans. The mention-detection
//! head is the mention-candidate scorer itself: its two-way logits are
//! `[0, s_mention(i)]`, so this task is what separates `s_mention` from the
//! markable score. Entity type and information status have their own
//! networks and are trained on gold-mention spans with a known label.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, EntityType, InfoStatus, Span};
use crate::error::{CorefError, Result};
use crate::params::{Ffnn, Graph, Initializer, ParamGroup, ParamStore};
use crate::scoring::{AntecedentScoreRow, ScorerShape};
use crate::tensor::{log_sum_exp, NllRow, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskWeights {
    pub coref: f64,
    pub singleton: f64,
    pub entity_type: f64,
    pub info_status: f64,
}

impl TaskWeights {
    pub const fn new(coref: f64, singleton: f64, entity_type: f64, info_status: f64) -> Self {
        TaskWeights {
            coref,
            singleton,
            entity_type,
            info_status,
        }
    }

    pub const BASELINE: TaskWeights = TaskWeights::new(1.0, 0.0, 0.0, 0.0);

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.coref,
            self.singleton,
            self.entity_type,
            self.info_status,
        ];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(CorefError::Config(format!(
                "task weights must be finite and non-negative: {self:?}"
            )));
        }
        if self.coref <= 0.0 {
            return Err(CorefError::Config(
                "the coreference weight must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn auxiliary_free(&self) -> bool {
        self.singleton == 0.0 && self.entity_type == 0.0 && self.info_status == 0.0
    }
}

impl Default for TaskWeights {
    fn default() -> Self {
        TaskWeights::new(0.4, 0.2, 0.2, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuxLabel {
    pub is_mention: bool,
    pub entity_type: Option<EntityType>,
    pub info_status: Option<InfoStatus>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct AuxiliaryLabels(pub Vec<AuxLabel>);

impl AuxiliaryLabels {
    pub fn mention_targets(&self) -> Vec<Option<usize>> {
        self.0
            .iter()
            .map(|l| Some(usize::from(l.is_mention)))
            .collect()
    }

    pub fn entity_targets(&self) -> Vec<Option<usize>> {
        self.0
            .iter()
            .map(|l| l.entity_type.map(|t| t.index()))
            .collect()
    }

    pub fn status_targets(&self) -> Vec<Option<usize>> {
        self.0
            .iter()
            .map(|l| l.info_status.map(|s| s.index()))
            .collect()
    }
}

/// Exact-span match of kept spans against the gold mention layer.
pub fn assign_aux_labels(kept: &[Span], doc: &Document) -> AuxiliaryLabels {
    let mentions: HashMap<Span, (Option<EntityType>, Option<InfoStatus>)> = doc
        .gold_mentions
        .iter()
        .map(|m| (m.span, (m.entity_type, m.info_status)))
        .collect();
    AuxiliaryLabels(
        kept.iter()
            .map(|s| match mentions.get(s) {
                Some(&(entity_type, info_status)) => AuxLabel {
                    is_mention: true,
                    entity_type,
                    info_status,
                },
                None => AuxLabel {
                    is_mention: false,
                    entity_type: None,
                    info_status: None,
                },
            })
            .collect(),
    )
}

pub fn entity_head(shape: &ScorerShape) -> Ffnn {
    Ffnn {
        prefix: "head.entity_type".into(),
        input: shape.rep_dim,
        layers: shape.layers,
        width: shape.width,
        out: EntityType::ALL.len(),
        out_bias: true,
    }
}

pub fn status_head(shape: &ScorerShape) -> Ffnn {
    Ffnn {
        prefix: "head.info_status".into(),
        input: shape.rep_dim,
        layers: shape.layers,
        width: shape.width,
        out: InfoStatus::ALL.len(),
        out_bias: true,
    }
}

pub fn register_heads(shape: &ScorerShape, store: &mut ParamStore, init: &mut Initializer) {
    entity_head(shape).register(store, ParamGroup::Auxiliary, init);
    status_head(shape).register(store, ParamGroup::Auxiliary, init);
}

/// Logits over kept spans: `k × 2`, `k × 10`, `k × 6`.
#[derive(Clone, Copy, Debug)]
pub struct HeadVars {
    pub mention: Var,
    pub entity_type: Var,
    pub info_status: Var,
}

pub fn head_vars(
    g: &mut Graph<'_>,
    shape: &ScorerShape,
    kept_reps: Var,
    kept_mention_scores: Var,
) -> HeadVars {
    let k = g.value(kept_reps).rows();
    let zeros = g.tape.constant(Tensor::zeros(k, 1));
    let mention = g.tape.concat_cols(&[zeros, kept_mention_scores]);
    let entity_type = entity_head(shape).apply(g, kept_reps);
    let info_status = status_head(shape).apply(g, kept_reps);
    HeadVars {
        mention,
        entity_type,
        info_status,
    }
}

/// Plain-value logits for the three tasks.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadLogits {
    pub mention: Tensor,
    pub entity_type: Tensor,
    pub info_status: Tensor,
}

impl HeadLogits {
    pub fn read(g: &Graph<'_>, vars: &HeadVars) -> Self {
        HeadLogits {
            mention: g.value(vars.mention).clone(),
            entity_type: g.value(vars.entity_type).clone(),
            info_status: g.value(vars.info_status).clone(),
        }
    }

    /// `P(is mention)` for every kept span.
    pub fn mention_probabilities(&self) -> Vec<f64> {
        (0..self.mention.rows())
            .map(|r| {
                let row = self.mention.row(r);
                (row[1] - log_sum_exp(row)).exp()
            })
            .collect()
    }
}

/// Head logits over plain span vectors.
pub fn head_logits(
    reps: &[Vec<f64>],
    mention_scores: &[f64],
    shape: &ScorerShape,
    params: &ParamStore,
) -> HeadLogits {
    let mut g = Graph::new(params);
    let width = reps.first().map_or(shape.rep_dim, Vec::len);
    let x = g
        .tape
        .constant(Tensor::from_vec(reps.len(), width, reps.concat()));
    let s = g.tape.constant(Tensor::column(mention_scores.to_vec()));
    let vars = head_vars(&mut g, shape, x, s);
    HeadLogits::read(&g, &vars)
}

/// Gold antecedent positions for each row; an empty list means only the
/// dummy antecedent is gold.
pub fn gold_antecedents(
    kept: &[Span],
    rows: &[(usize, Vec<usize>)],
    gold_clusters: &[Vec<Span>],
) -> Vec<Vec<usize>> {
    let cluster_of: HashMap<Span, usize> = gold_clusters
        .iter()
        .enumerate()
        .filter(|(_, c)| c.len() >= 2)
        .flat_map(|(id, c)| c.iter().map(move |s| (*s, id)))
        .collect();
    rows.iter()
        .map(|(i, cands)| match cluster_of.get(&kept[*i]) {
            None => Vec::new(),
            Some(ci) => cands
                .iter()
                .enumerate()
                .filter(|(_, &j)| cluster_of.get(&kept[j]) == Some(ci))
                .map(|(pos, _)| pos)
                .collect(),
        })
        .collect()
}

/// Marginal negative log-likelihood over rows laid out contiguously in the
/// `P × 1` pair-score node.
pub fn coref_loss_var(
    g: &mut Graph<'_>,
    pair_scores: Var,
    kept: &[Span],
    rows: &[(usize, Vec<usize>)],
    gold_clusters: &[Vec<Span>],
) -> Var {
    let gold = gold_antecedents(kept, rows, gold_clusters);
    let mut offset = 0;
    let layout = rows
        .iter()
        .zip(gold)
        .map(|((_, cands), gold)| {
            let row = NllRow {
                offset,
                len: cands.len(),
                gold,
            };
            offset += cands.len();
            row
        })
        .collect();
    g.tape.antecedent_nll(pair_scores, layout)
}

/// `-Σ_i log Σ_{ĵ ∈ GOLD(i)} P(ĵ | i)` with the dummy antecedent at score 0.
pub fn coref_loss(rows: &[AntecedentScoreRow], kept: &[Span], gold_clusters: &[Vec<Span>]) -> f64 {
    let layout: Vec<(usize, Vec<usize>)> = rows
        .iter()
        .map(|r| (r.span, r.candidates.clone()))
        .collect();
    let gold = gold_antecedents(kept, &layout, gold_clusters);
    rows.iter()
        .zip(gold)
        .map(|(row, gold)| {
            let full = row.with_epsilon();
            let gold_scores: Vec<f64> = if gold.is_empty() {
                vec![AntecedentScoreRow::EPSILON_SCORE]
            } else {
                gold.iter().map(|&p| row.scores[p]).collect()
            };
            log_sum_exp(&full) - log_sum_exp(&gold_scores)
        })
        .sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskLosses {
    pub coref: f64,
    pub singleton: f64,
    pub entity_type: f64,
    pub info_status: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct AuxLossVars {
    pub singleton: Var,
    pub entity_type: Var,
    pub info_status: Var,
}

pub fn aux_loss_vars(g: &mut Graph<'_>, heads: &HeadVars, labels: &AuxiliaryLabels) -> AuxLossVars {
    AuxLossVars {
        singleton: g
            .tape
            .cross_entropy(heads.mention, labels.mention_targets()),
        entity_type: g
            .tape
            .cross_entropy(heads.entity_type, labels.entity_targets()),
        info_status: g
            .tape
            .cross_entropy(heads.info_status, labels.status_targets()),
    }
}

/// Mean cross-entropy per task; unknown labels are left out of their task.
pub fn aux_loss(logits: &HeadLogits, labels: &AuxiliaryLabels) -> (f64, f64, f64) {
    let empty = ParamStore::new();
    let mut g = Graph::new(&empty);
    let m = g.tape.constant(logits.mention.clone());
    let e = g.tape.constant(logits.entity_type.clone());
    let s = g.tape.constant(logits.info_status.clone());
    let vars = aux_loss_vars(
        &mut g,
        &HeadVars {
            mention: m,
            entity_type: e,
            info_status: s,
        },
        labels,
    );
    (
        g.value(vars.singleton).item(),
        g.value(vars.entity_type).item(),
        g.value(vars.info_status).item(),
    )
}

pub fn total_loss(losses: &TaskLosses, w: &TaskWeights) -> f64 {
    w.coref * losses.coref
        + w.singleton * losses.singleton
        + w.entity_type * losses.entity_type
        + w.info_status * losses.info_status
}

pub fn total_loss_var(
    g: &mut Graph<'_>,
    coref: Var,
    aux: Option<&AuxLossVars>,
    w: &TaskWeights,
) -> Var {
    let mut total = g.tape.scale(coref, w.coref);
    if let Some(aux) = aux {
        for (v, weight) in [
            (aux.singleton, w.singleton),
            (aux.entity_type, w.entity_type),
            (aux.info_status, w.info_status),
        ] {
            let term = g.tape.scale(v, weight);
            total = g.tape.add(total, term);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Mention;

    #[test]
    fn weight_validation() {
        assert!(TaskWeights::BASELINE.validate().is_ok());
        assert!(TaskWeights::new(0.0, 0.5, 0.0, 0.0).validate().is_err());
        assert!(TaskWeights::new(1.0, -0.1, 0.0, 0.0).validate().is_err());
        assert!(TaskWeights::BASELINE.auxiliary_free());
    }

    #[test]
    fn totals() {
        let ones = TaskLosses {
            coref: 1.0,
            singleton: 1.0,
            entity_type: 1.0,
            info_status: 1.0,
        };
        let l = TaskLosses { coref: 2.0, ..ones };
        assert_eq!(total_loss(&l, &TaskWeights::BASELINE), 2.0);
        assert!((total_loss(&ones, &TaskWeights::new(0.4, 0.2, 0.2, 0.0)) - 0.8).abs() < 1e-12);
        assert!((total_loss(&l, &TaskWeights::new(0.55, 0.15, 0.15, 0.15)) - 1.55).abs() < 1e-12);
    }

    #[test]
    fn labels_by_exact_match() {
        let doc = Document {
            doc_key: "d".into(),
            sentences: vec![vec!["a".into(); 6]],
            speakers: vec!["-".into(); 6],
            gold_clusters: vec![vec![Span::new(0, 0), Span::new(3, 4)]],
            gold_mentions: vec![
                Mention::unlabeled(Span::new(0, 0), Some(0)),
                Mention::unlabeled(Span::new(3, 4), Some(0)),
                Mention {
                    span: Span::new(5, 5),
                    entity_type: Some(EntityType::Person),
                    info_status: Some(InfoStatus::New),
                    cluster_id: None,
                },
            ],
            ..Default::default()
        };
        let labels = assign_aux_labels(&[Span::new(5, 5), Span::new(1, 2), Span::new(3, 4)], &doc);
        assert_eq!(
            labels.0[0],
            AuxLabel {
                is_mention: true,
                entity_type: Some(EntityType::Person),
                info_status: Some(InfoStatus::New)
            }
        );
        assert_eq!(
            labels.0[1],
            AuxLabel {
                is_mention: false,
                entity_type: None,
                info_status: None
            }
        );
        assert!(labels.0[2].is_mention);
        assert_eq!(
            labels.entity_targets(),
            vec![Some(EntityType::Person.index()), None, None]
        );
    }

    #[test]
    fn single_span_coref_loss_is_zero() {
        let row = AntecedentScoreRow {
            span: 0,
            candidates: vec![],
            scores: vec![],
        };
        assert_eq!(coref_loss(&[row], &[Span::new(0, 0)], &[]), 0.0);
    }
}
