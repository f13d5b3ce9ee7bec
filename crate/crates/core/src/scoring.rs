//! Unary mention scores, pruning, and coarse-to-fine antecedent scoring.
//!
//! `s_m(i) = β1·s_markable(i) + β2·s_mention(i)`, each unary score being
//! `w·FFNN(g_i)` from its own network. For a pair, the compatibility
//! `s_c(i, j)` is the coarse bilinear term `g_iᵀ M g_j` plus the fine
//! `w·FFNN([g_i; g_j; g_i ⊙ g_j; φ(i, j)])`, and
//! `s(i, j) = s_m(i) + s_m(j) + s_c(i, j)`. The dummy antecedent is never
//! materialized: its score is the constant 0.

use crate::corpus::Span;
use crate::params::{Ffnn, Graph, Initializer, ParamGroup, ParamStore};
use crate::spans::{bucket, SpanRepresentation, BUCKETS};
use crate::tensor::{Tensor, Var};

pub const DEFAULT_PRUNE_RATIO: f64 = 0.4;
pub const DEFAULT_MAX_ANTECEDENTS: usize = 50;
pub const BETA_INIT: f64 = 0.5;

/// Network shapes shared by every scorer.
#[derive(Clone, Debug, PartialEq)]
pub struct ScorerShape {
    pub rep_dim: usize,
    pub feature_dim: usize,
    pub layers: usize,
    pub width: usize,
    pub genres: usize,
}

impl ScorerShape {
    pub fn markable(&self) -> Ffnn {
        self.unary("unary.markable")
    }

    pub fn mention(&self) -> Ffnn {
        self.unary("unary.mention")
    }

    fn unary(&self, prefix: &str) -> Ffnn {
        Ffnn {
            prefix: prefix.into(),
            input: self.rep_dim,
            layers: self.layers,
            width: self.width,
            out: 1,
            out_bias: false,
        }
    }

    pub fn pair(&self) -> Ffnn {
        Ffnn {
            prefix: "pair".into(),
            input: 3 * self.rep_dim + 3 * self.feature_dim,
            layers: self.layers,
            width: self.width,
            out: 1,
            out_bias: false,
        }
    }

    pub fn register(&self, store: &mut ParamStore, init: &mut Initializer) {
        let group = ParamGroup::Coreference;
        self.markable().register(store, group, init);
        self.mention().register(store, group, init);
        store.add("unary.beta1", group, Tensor::scalar(BETA_INIT));
        store.add("unary.beta2", group, Tensor::scalar(BETA_INIT));
        let d = self.rep_dim;
        store.add("coarse.bilinear", group, init.uniform(d, d, 1.0 / d as f64));
        let f = self.feature_dim;
        store.add("pair.distance", group, init.embedding(BUCKETS, f));
        store.add("pair.speaker", group, init.embedding(2, f));
        store.add("pair.genre", group, init.embedding(self.genres.max(1), f));
        self.pair().register(store, group, init);
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UnaryScore {
    pub markable: f64,
    pub mention: f64,
    pub combined: f64,
    pub beta1: f64,
    pub beta2: f64,
}

/// Graph nodes for the unary scores, each `N × 1`.
#[derive(Clone, Copy, Debug)]
pub struct UnaryVars {
    pub markable: Var,
    pub mention: Var,
    pub combined: Var,
}

pub fn unary_vars(g: &mut Graph<'_>, shape: &ScorerShape, reps: Var) -> UnaryVars {
    let markable = shape.markable().apply(g, reps);
    let mention = shape.mention().apply(g, reps);
    let b1 = g.param("unary.beta1");
    let b2 = g.param("unary.beta2");
    let a = g.tape.scale_by(markable, b1);
    let b = g.tape.scale_by(mention, b2);
    let combined = g.tape.add(a, b);
    UnaryVars {
        markable,
        mention,
        combined,
    }
}

pub fn read_unary(g: &Graph<'_>, vars: &UnaryVars) -> Vec<UnaryScore> {
    let beta1 = g.store().get("unary.beta1").expect("beta1").item();
    let beta2 = g.store().get("unary.beta2").expect("beta2").item();
    let m = g.value(vars.markable).data();
    let n = g.value(vars.mention).data();
    let c = g.value(vars.combined).data();
    (0..m.len())
        .map(|i| UnaryScore {
            markable: m[i],
            mention: n[i],
            combined: c[i],
            beta1,
            beta2,
        })
        .collect()
}

pub fn unary_scores(
    reps: &[SpanRepresentation],
    shape: &ScorerShape,
    params: &ParamStore,
) -> Vec<UnaryScore> {
    if reps.is_empty() {
        return Vec::new();
    }
    let mut g = Graph::new(params);
    let x = g.tape.constant(stack(reps.iter().map(|r| r.g.as_slice())));
    let vars = unary_vars(&mut g, shape, x);
    read_unary(&g, &vars)
}

fn stack<'a>(rows: impl Iterator<Item = &'a [f64]>) -> Tensor {
    let mut data = Vec::new();
    let mut n = 0;
    let mut width = 0;
    for r in rows {
        width = r.len();
        data.extend_from_slice(r);
        n += 1;
    }
    Tensor::from_vec(n, width, data)
}

/// Keeps the `⌈ratio · token_count⌉` best spans by score, drops any of them
/// that partially crosses a better kept span, and returns the survivors'
/// indices in document order.
pub fn prune_spans(spans: &[Span], scores: &[f64], token_count: usize, ratio: f64) -> Vec<usize> {
    assert_eq!(spans.len(), scores.len(), "one score per span");
    let budget = ((ratio * token_count as f64).ceil() as usize).min(spans.len());
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::with_capacity(budget);
    for &i in order.iter().take(budget) {
        if kept.iter().all(|&k| !spans[k].crosses(&spans[i])) {
            kept.push(i);
        }
    }
    kept.sort_by_key(|&i| (spans[i], i));
    kept
}

/// `k × k` bilinear coarse scores `g_i M g_jᵀ` over kept spans.
pub fn coarse_vars(g: &mut Graph<'_>, kept_reps: Var) -> Var {
    let m = g.param("coarse.bilinear");
    let left = g.tape.matmul(kept_reps, m);
    g.tape.matmul_t(left, kept_reps)
}

/// For every kept span, the (at most `max_antecedents`) earlier spans with
/// the highest `s_m(i) + s_m(j) + bilinear(i, j)`, listed in ascending order.
pub fn shortlist(bilinear: &Tensor, unary: &[f64], max_antecedents: usize) -> Vec<Vec<usize>> {
    (0..unary.len())
        .map(|i| {
            let mut cands: Vec<usize> = (0..i).collect();
            let score = |j: usize| unary[i] + unary[j] + bilinear.get(i, j);
            cands.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then(b.cmp(&a)));
            cands.truncate(max_antecedents);
            cands.sort_unstable();
            cands
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PairFeatures {
    pub distance_bucket: usize,
    pub same_speaker: bool,
    pub genre: usize,
}

impl PairFeatures {
    /// `distance` counts kept spans between anaphor and antecedent. Unknown
    /// (`-` or empty) speakers never compare equal.
    pub fn new(distance: usize, speaker_i: &str, speaker_j: &str, genre: usize) -> Self {
        let known = |s: &str| !s.is_empty() && s != "-";
        PairFeatures {
            distance_bucket: bucket(distance),
            same_speaker: known(speaker_i) && speaker_i == speaker_j,
            genre,
        }
    }
}

/// Scores of every `(anaphor, antecedent)` pair in `pairs` as a `P × 1` node.
pub fn pair_score_vars(
    g: &mut Graph<'_>,
    shape: &ScorerShape,
    kept_reps: Var,
    kept_unary: Var,
    bilinear: Var,
    pairs: &[(usize, usize)],
    features: &[PairFeatures],
) -> Var {
    let ii: Vec<usize> = pairs.iter().map(|p| p.0).collect();
    let jj: Vec<usize> = pairs.iter().map(|p| p.1).collect();
    let gi = g.tape.gather_rows(kept_reps, &ii);
    let gj = g.tape.gather_rows(kept_reps, &jj);
    let prod = g.tape.mul(gi, gj);

    let dist_table = g.param("pair.distance");
    let spk_table = g.param("pair.speaker");
    let genre_table = g.param("pair.genre");
    let dist_ids: Vec<usize> = features.iter().map(|f| f.distance_bucket).collect();
    let spk_ids: Vec<usize> = features
        .iter()
        .map(|f| usize::from(f.same_speaker))
        .collect();
    let genre_ids: Vec<usize> = features.iter().map(|f| f.genre).collect();
    let dist = g.tape.gather_rows(dist_table, &dist_ids);
    let spk = g.tape.gather_rows(spk_table, &spk_ids);
    let genre = g.tape.gather_rows(genre_table, &genre_ids);

    let input = g.tape.concat_cols(&[gi, gj, prod, dist, spk, genre]);
    let fine = shape.pair().apply(g, input);
    let coarse = g.tape.gather_elems(bilinear, pairs);
    let si = g.tape.gather_rows(kept_unary, &ii);
    let sj = g.tape.gather_rows(kept_unary, &jj);
    let compat = g.tape.add(coarse, fine);
    let unary = g.tape.add(si, sj);
    g.tape.add(unary, compat)
}

/// Scores for one anaphor over its shortlist; the dummy antecedent is the
/// implicit constant 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AntecedentScoreRow {
    pub span: usize,
    pub candidates: Vec<usize>,
    pub scores: Vec<f64>,
}

impl AntecedentScoreRow {
    pub const EPSILON_SCORE: f64 = 0.0;

    /// `[s(i, ε), s(i, c_1), ...]`
    pub fn with_epsilon(&self) -> Vec<f64> {
        std::iter::once(Self::EPSILON_SCORE)
            .chain(self.scores.iter().copied())
            .collect()
    }
}

/// Value-level scoring of one anaphor `i` against `shortlist`, with
/// `reps`/`unary` indexed by kept-span position.
pub fn full_scores(
    i: usize,
    shortlist: &[usize],
    reps: &[SpanRepresentation],
    unary: &[f64],
    features: &[PairFeatures],
    shape: &ScorerShape,
    params: &ParamStore,
) -> AntecedentScoreRow {
    if shortlist.is_empty() {
        return AntecedentScoreRow {
            span: i,
            candidates: Vec::new(),
            scores: Vec::new(),
        };
    }
    let mut g = Graph::new(params);
    let x = g.tape.constant(stack(reps.iter().map(|r| r.g.as_slice())));
    let u = g.tape.constant(Tensor::column(unary.to_vec()));
    let bilinear = coarse_vars(&mut g, x);
    let pairs: Vec<(usize, usize)> = shortlist.iter().map(|&j| (i, j)).collect();
    let s = pair_score_vars(&mut g, shape, x, u, bilinear, &pairs, features);
    AntecedentScoreRow {
        span: i,
        candidates: shortlist.to_vec(),
        scores: g.value(s).data().to_vec(),
    }
}
