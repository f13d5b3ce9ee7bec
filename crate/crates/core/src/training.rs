//! One-document-per-step training, checkpoints, metrics logging, and the
//! finite-difference gradient check.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::encoder::Vocabulary;
use crate::error::{CorefError, Result};
use crate::evaluation::{self, EvalOptions, MentionMode};
use crate::inference::{self, PredictOptions};
use crate::model::{Forward, ForwardOptions, Model, ModelConfig, Structure};
use crate::mtl_loss::{self, TaskLosses, TaskWeights};
use crate::optim::{clip_global_norm, Adam, Optimizer};
use crate::params::ParamGroup;
use crate::tensor::{Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub task_learning_rate: f64,
    pub encoder_learning_rate: f64,
    pub weight_decay: f64,
    pub clip_norm: f64,
    pub seed: u64,
    /// Evaluate on the dev set every this many steps; 0 disables.
    pub eval_every: usize,
    pub task_weights: TaskWeights,
    /// Build the auxiliary heads at all. Turning this off is only allowed
    /// when every auxiliary weight is zero.
    pub auxiliary_heads: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 14_500,
            task_learning_rate: 3e-4,
            encoder_learning_rate: 1e-5,
            weight_decay: 0.01,
            clip_norm: 1.0,
            seed: 0,
            eval_every: 0,
            task_weights: TaskWeights::default(),
            auxiliary_heads: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.task_weights.validate()?;
        let bad = |m: &str| Err(CorefError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("train.steps must be positive");
        }
        if !(self.task_learning_rate > 0.0 && self.encoder_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.clip_norm.is_nan() || self.clip_norm <= 0.0 || self.weight_decay < 0.0 {
            return bad("clip_norm must be positive and weight_decay non-negative");
        }
        if !self.auxiliary_heads && !self.task_weights.auxiliary_free() {
            return bad("auxiliary weights must be zero when auxiliary heads are disabled");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevRecord {
    pub avg_f1: f64,
    pub muc_f1: f64,
    pub b_cubed_f1: f64,
    pub ceaf_phi4_f1: f64,
    pub mention_f1: f64,
}

/// One line of the metrics log. Auxiliary losses appear only for tasks with
/// a positive weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub doc_key: String,
    pub coref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singleton: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entity_type: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub info_status: Option<f64>,
    pub total: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<DevRecord>,
}

/// Model, training configuration, and optimizer state at a given step.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub train: TrainConfig,
    pub optimizer: Optimizer,
    /// Completed steps.
    pub step: usize,
}

const STREAM_EPOCH: u64 = 1;
const STREAM_DROPOUT: u64 = 2;

/// Splitmix-style mixing of `(seed, stream, index)` into one RNG seed.
fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Corpus position visited at `step`: epochs are independent shuffles.
pub fn document_for_step(seed: u64, step: usize, corpus_len: usize) -> usize {
    let epoch = step / corpus_len;
    let mut order: Vec<usize> = (0..corpus_len).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
        seed,
        STREAM_EPOCH,
        epoch as u64,
    )));
    order[step % corpus_len]
}

/// Builds the loss for one document on a fresh graph.
pub fn loss_graph<'a>(
    model: &'a Model,
    doc: &Document,
    weights: &TaskWeights,
    opts: &ForwardOptions,
) -> Result<(Forward<'a>, Var, TaskLosses)> {
    let mut fwd = model.forward(doc, opts)?;
    let gold = doc.partition();
    let coref = match fwd.pair_scores {
        Some(scores) => {
            mtl_loss::coref_loss_var(&mut fwd.g, scores, &fwd.kept_spans, &fwd.rows, &gold)
        }
        None => fwd.g.tape.constant(Tensor::scalar(0.0)),
    };
    let aux = fwd.heads.map(|heads| {
        let labels = mtl_loss::assign_aux_labels(&fwd.kept_spans, doc);
        mtl_loss::aux_loss_vars(&mut fwd.g, &heads, &labels)
    });
    let total = mtl_loss::total_loss_var(&mut fwd.g, coref, aux.as_ref(), weights);
    let value = |v: Var| fwd.g.value(v).item();
    let losses = TaskLosses {
        coref: value(coref),
        singleton: aux.map_or(0.0, |a| value(a.singleton)),
        entity_type: aux.map_or(0.0, |a| value(a.entity_type)),
        info_status: aux.map_or(0.0, |a| value(a.info_status)),
    };
    Ok((fwd, total, losses))
}

/// Analytic gradient of the weighted loss for every parameter slot.
pub fn analytic_gradients(
    model: &Model,
    doc: &Document,
    weights: &TaskWeights,
    opts: &ForwardOptions,
) -> Result<(f64, Vec<Option<Tensor>>, Structure)> {
    let (fwd, total, _) = loss_graph(model, doc, weights, opts)?;
    let grads = fwd.g.tape.backward(total);
    let per_param = (0..model.params.len()).map(|i| grads.param(i)).collect();
    Ok((fwd.g.value(total).item(), per_param, fwd.structure.clone()))
}

impl Checkpoint {
    pub fn new(model_cfg: ModelConfig, train: TrainConfig, corpus: &[Document]) -> Result<Self> {
        train.validate()?;
        let model = Model::new(model_cfg, corpus, train.seed)?;
        let optimizer = Optimizer::new(&model.params, train.weight_decay);
        Ok(Checkpoint {
            model,
            train,
            optimizer,
            step: 0,
        })
    }

    /// Runs one optimization step on the document scheduled for it.
    pub fn step_once(&mut self, corpus: &[Document]) -> Result<StepRecord> {
        let step = self.step;
        let doc = &corpus[document_for_step(self.train.seed, step, corpus.len())];
        let weights = self.train.task_weights;
        let opts = ForwardOptions {
            heads: self.train.auxiliary_heads,
            dropout_seed: Some(derive_seed(self.train.seed, STREAM_DROPOUT, step as u64)),
            structure: None,
        };
        let (total, losses, mut grads) = {
            let (fwd, total, losses) = loss_graph(&self.model, doc, &weights, &opts)?;
            let value = fwd.g.value(total).item();
            if !value.is_finite() {
                return Err(CorefError::NonFiniteLoss {
                    step: step + 1,
                    doc_key: doc.doc_key.clone(),
                });
            }
            let g = fwd.g.tape.backward(total);
            let grads: Vec<Option<Tensor>> =
                (0..self.model.params.len()).map(|i| g.param(i)).collect();
            (value, losses, grads)
        };
        clip_global_norm(&mut grads, self.train.clip_norm);
        self.optimizer.step(
            &mut self.model.params,
            &grads,
            self.train.encoder_learning_rate,
            self.train.task_learning_rate,
        );
        self.step += 1;
        let when = |w: f64, v: f64| (w > 0.0).then_some(v);
        Ok(StepRecord {
            step: self.step,
            doc_key: doc.doc_key.clone(),
            coref: losses.coref,
            singleton: when(weights.singleton, losses.singleton),
            entity_type: when(weights.entity_type, losses.entity_type),
            info_status: when(weights.info_status, losses.info_status),
            total,
            dev: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| CorefError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| CorefError::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Checkpoint with the best dev average F1, when dev evaluation ran.
    pub best: Option<(f64, Checkpoint)>,
    pub log: Vec<StepRecord>,
}

fn check_corpus(corpus: &[Document]) -> Result<()> {
    if corpus.is_empty() {
        return Err(CorefError::Config("the training corpus is empty".into()));
    }
    for doc in corpus {
        doc.validate()?;
        if doc.token_count() == 0 {
            return Err(CorefError::InvalidDocument {
                doc_key: doc.doc_key.clone(),
                message: "document has no tokens".into(),
            });
        }
    }
    Ok(())
}

pub fn dev_record(model: &Model, dev: &[Document]) -> Result<DevRecord> {
    let preds = inference::predict_corpus(model, dev, &PredictOptions::default())?;
    let report = evaluation::evaluate(
        dev,
        &preds,
        EvalOptions {
            keep_singletons: false,
            mention_mode: MentionMode::All,
        },
    )?;
    Ok(DevRecord {
        avg_f1: report.avg_f1,
        muc_f1: report.muc.f1,
        b_cubed_f1: report.b_cubed.f1,
        ceaf_phi4_f1: report.ceaf_phi4.f1,
        mention_f1: report.markable_detection.f1,
    })
}

/// Continues `ckpt` until `ckpt.train.steps` steps are complete.
pub fn run(
    mut ckpt: Checkpoint,
    corpus: &[Document],
    dev: &[Document],
    mut on_step: impl FnMut(&StepRecord),
) -> Result<TrainOutcome> {
    check_corpus(corpus)?;
    let mut log = Vec::new();
    let mut best: Option<(f64, Checkpoint)> = None;
    while ckpt.step < ckpt.train.steps {
        let mut record = ckpt.step_once(corpus)?;
        let every = ckpt.train.eval_every;
        if every > 0
            && !dev.is_empty()
            && (ckpt.step.is_multiple_of(every) || ckpt.step == ckpt.train.steps)
        {
            let d = dev_record(&ckpt.model, dev)?;
            if best.as_ref().is_none_or(|(f, _)| d.avg_f1 > *f) {
                best = Some((d.avg_f1, ckpt.clone()));
            }
            record.dev = Some(d);
        }
        on_step(&record);
        log.push(record);
    }
    Ok(TrainOutcome {
        last: ckpt,
        best,
        log,
    })
}

pub fn train(
    corpus: &[Document],
    dev: &[Document],
    model_cfg: ModelConfig,
    cfg: TrainConfig,
) -> Result<TrainOutcome> {
    check_corpus(corpus)?;
    let ckpt = Checkpoint::new(model_cfg, cfg, corpus)?;
    run(ckpt, corpus, dev, |_| {})
}

/// Metrics log as JSON lines.
pub fn write_log(records: &[StepRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")
            .map_err(|e| CorefError::io("<metrics log>", e))?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradientCheckReport {
    pub max_relative_error: f64,
    /// Largest error per parameter group.
    pub by_group: BTreeMap<String, f64>,
    /// Analytic gradient norm per parameter group. A zero entry means the
    /// fixture never exercised that group.
    pub gradient_norms: BTreeMap<String, f64>,
    pub checked: usize,
}

const FD_STEP: f64 = 1e-5;
const FD_FLOOR: f64 = 1e-5;

/// Compares analytic gradients of the weighted loss with central differences
/// for every parameter scalar, holding pruning and shortlists fixed.
pub fn gradient_check(
    doc: &Document,
    model: &Model,
    weights: &TaskWeights,
) -> Result<GradientCheckReport> {
    let opts = ForwardOptions {
        heads: true,
        dropout_seed: None,
        structure: None,
    };
    let (_, grads, structure) = analytic_gradients(model, doc, weights, &opts)?;
    let fixed = ForwardOptions {
        structure: Some(structure),
        ..opts
    };
    let mut probe = model.clone();
    let mut report = GradientCheckReport {
        max_relative_error: 0.0,
        by_group: BTreeMap::new(),
        gradient_norms: BTreeMap::new(),
        checked: 0,
    };
    for id in 0..model.params.len() {
        let group = format!("{:?}", model.params.entry(id).group).to_lowercase();
        let n = model.params.entry(id).value.data().len();
        let sq = grads[id].as_ref().map_or(0.0, Tensor::squared_norm);
        *report.gradient_norms.entry(group.clone()).or_insert(0.0) += sq;
        for k in 0..n {
            let original = probe.params.value_mut(id).data()[k];
            probe.params.value_mut(id).data_mut()[k] = original + FD_STEP;
            let plus = loss_graph(&probe, doc, weights, &fixed)?;
            let plus = plus.0.g.value(plus.1).item();
            probe.params.value_mut(id).data_mut()[k] = original - FD_STEP;
            let minus = loss_graph(&probe, doc, weights, &fixed)?;
            let minus = minus.0.g.value(minus.1).item();
            probe.params.value_mut(id).data_mut()[k] = original;

            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let analytic = grads[id].as_ref().map_or(0.0, |g| g.data()[k]);
            let err = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            report.max_relative_error = report.max_relative_error.max(err);
            let slot = report.by_group.entry(group.clone()).or_insert(0.0);
            *slot = slot.max(err);
            report.checked += 1;
        }
    }
    for norm in report.gradient_norms.values_mut() {
        *norm = norm.sqrt();
    }
    Ok(report)
}

// Checkpoint container: magic, u64 little-endian header length, JSON header,
// then raw little-endian f64 data addressed by the manifest.

const MAGIC: &[u8] = b"CMTLCKPT1\n";

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    group: ParamGroup,
    shape: [usize; 2],
    dtype: String,
    /// Offset in elements from the start of the data section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    manifest: Vec<ManifestEntry>,
    model: ModelConfig,
    vocab: Vocabulary,
    genres: Vec<String>,
    train: TrainConfig,
    step: usize,
    coreference_optimizer: Adam,
    auxiliary_optimizer: Adam,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut manifest = Vec::new();
        let mut data: Vec<f64> = Vec::new();
        let mut push = |name: String, group: ParamGroup, t: &Tensor, data: &mut Vec<f64>| {
            manifest.push(ManifestEntry {
                name,
                group,
                shape: [t.rows(), t.cols()],
                dtype: "f64".into(),
                offset: data.len(),
            });
            data.extend_from_slice(t.data());
        };
        for e in self.model.params.iter() {
            push(e.name.clone(), e.group, &e.value, &mut data);
        }
        for opt in [&self.optimizer.coreference, &self.optimizer.auxiliary] {
            for (k, &id) in opt.ids.iter().enumerate() {
                let e = self.model.params.entry(id);
                push(format!("optim.m/{}", e.name), e.group, &opt.m[k], &mut data);
                push(format!("optim.v/{}", e.name), e.group, &opt.v[k], &mut data);
            }
        }
        let header = Header {
            manifest,
            model: self.model.config.clone(),
            vocab: self.model.vocab.clone(),
            genres: self.model.genres.clone(),
            train: self.train.clone(),
            step: self.step,
            coreference_optimizer: self.optimizer.coreference.clone(),
            auxiliary_optimizer: self.optimizer.auxiliary.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + data.len() * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for v in data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| CorefError::Checkpoint(m.to_string());
        let rest = bytes
            .strip_prefix(MAGIC)
            .ok_or_else(|| bad("missing magic header"))?;
        if rest.len() < 8 {
            return Err(bad("truncated header length"));
        }
        let len = u64::from_le_bytes(rest[..8].try_into().expect("8 bytes")) as usize;
        let rest = &rest[8..];
        if rest.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&rest[..len])?;
        let raw = &rest[len..];
        if raw.len() % 8 != 0 {
            return Err(bad("data section is not a whole number of f64 values"));
        }
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let mut model = Model::with_vocabulary(header.model, header.vocab, header.genres, 0)?;
        let mut tensors: BTreeMap<&str, Tensor> = BTreeMap::new();
        for e in &header.manifest {
            if e.dtype != "f64" {
                return Err(bad(&format!(
                    "unsupported dtype `{}` for `{}`",
                    e.dtype, e.name
                )));
            }
            let n = e.shape[0] * e.shape[1];
            let slice = data
                .get(e.offset..e.offset + n)
                .ok_or_else(|| bad(&format!("tensor `{}` runs past the data section", e.name)))?;
            tensors.insert(
                &e.name,
                Tensor::from_vec(e.shape[0], e.shape[1], slice.to_vec()),
            );
        }
        let mut take = |name: &str, shape: (usize, usize)| -> Result<Tensor> {
            let t = tensors.remove(name).ok_or_else(|| {
                CorefError::Incompatible(format!("checkpoint has no tensor `{name}`"))
            })?;
            if t.shape() != shape {
                return Err(CorefError::Incompatible(format!(
                    "tensor `{name}` has shape {:?}, the configuration expects {:?}",
                    t.shape(),
                    shape
                )));
            }
            Ok(t)
        };
        for id in 0..model.params.len() {
            let (name, shape) = {
                let e = model.params.entry(id);
                (e.name.clone(), e.value.shape())
            };
            *model.params.value_mut(id) = take(&name, shape)?;
        }
        let mut restore = |mut opt: Adam| -> Result<Adam> {
            opt.m.clear();
            opt.v.clear();
            for &id in &opt.ids {
                let e = model.params.entry(id);
                let shape = e.value.shape();
                opt.m.push(take(&format!("optim.m/{}", e.name), shape)?);
                opt.v.push(take(&format!("optim.v/{}", e.name), shape)?);
            }
            Ok(opt)
        };
        let optimizer = Optimizer {
            coreference: restore(header.coreference_optimizer)?,
            auxiliary: restore(header.auxiliary_optimizer)?,
        };
        if let Some(name) = tensors.keys().next() {
            return Err(CorefError::Incompatible(format!(
                "unexpected tensor `{name}` in checkpoint"
            )));
        }
        Ok(Checkpoint {
            model,
            train: header.train,
            optimizer,
            step: header.step,
        })
    }
}
