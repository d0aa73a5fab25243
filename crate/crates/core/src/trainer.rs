//! Alternating two-stage optimization: a regression stage that fits
//! the instrument projection and attention of both sides, then a
//! matching stage that trains the head and residual-weight networks.
//! The two parameter groups never receive gradient from the other
//! stage; the regression group is bit-identical across match steps and
//! vice versa.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::synthetic::stream;
use crate::data::{CasePair, EmbeddingStore};
use crate::error::{Error, Result};
use crate::head::{
    bind_head, logits_on_tape, HeadKind, MatchHeadParams,
};
use crate::numcore::checkpoint::Checkpoint;
use crate::numcore::matrix::{argmax, cross_entropy_from_logits, norm_sq, sub, tree_sum, tree_sum_vecs};
use crate::numcore::params::{flatten, load_named_tensors, to_named_tensors, total_len, write_flat, TensorMut, TensorRef};
use crate::numcore::tape::Tape;
use crate::numcore::AdamState;
use crate::par;
use crate::reconstruct::{
    bind_weight, iv_loss_and_grads, reconstruct_pair, reconstructed_on_tape, IvMode, ReconMode,
    ReconstructionParams,
};

/// Losses above this, or any non-finite loss, abort the run.
pub const DIVERGENCE_CEILING: f64 = 1e6;

/// Hyperparameters and run identity for [`train`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Pairs per optimizer step.
    pub batch_size: usize,
    /// Regression-stage learning rate.
    pub lr_iv: f64,
    /// Matching-stage learning rate.
    pub lr_match: f64,
    /// Outer iterations; each runs one regression stage then one
    /// matching stage.
    pub iterations: usize,
    /// Regression batches per iteration; `None` runs a full epoch.
    pub iv_batches_per_iter: Option<usize>,
    /// Matching batches per iteration; `None` runs a full epoch.
    pub match_batches_per_iter: Option<usize>,
    /// Iterations without validation improvement before stopping.
    pub patience: usize,
    pub mode: ReconMode,
    pub iv_mode: IvMode,
    pub z_classes: usize,
    pub head_kind: HeadKind,
    /// Hidden width of the MLP head (ignored by the bilinear head).
    pub head_hidden: usize,
    /// Feed the head `[rx; ry]` instead of the interaction features.
    pub plain_concat: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            lr_iv: 3e-4,
            lr_match: 3e-4,
            iterations: 50,
            iv_batches_per_iter: None,
            match_batches_per_iter: None,
            patience: 10,
            mode: ReconMode::Full,
            iv_mode: IvMode::Shared,
            z_classes: 3,
            head_kind: HeadKind::ConcatMlp,
            head_hidden: 32,
            plain_concat: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 1 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.lr_iv > 0.0) || !(self.lr_match > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.iv_batches_per_iter == Some(0) || self.match_batches_per_iter == Some(0) {
            return Err(Error::Config(
                "stage schedule counts must be at least 1".into(),
            ));
        }
        if self.z_classes < 2 {
            return Err(Error::Config(format!(
                "class count {} < 2",
                self.z_classes
            )));
        }
        if self.head_kind == HeadKind::ConcatMlp && self.head_hidden < 1 {
            return Err(Error::Config("head hidden width must be at least 1".into()));
        }
        Ok(())
    }
}

/// One completed outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub train_iv_loss: f64,
    pub train_match_loss: f64,
    pub valid_iv_loss: f64,
    pub valid_match_loss: f64,
    pub valid_accuracy: f64,
}

/// Per-iteration losses and metrics. Wall-clock per stage is kept in
/// memory only so serialized histories are identical across reruns.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub iterations: Vec<IterationRecord>,
    #[serde(skip)]
    pub stage_seconds: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Completed,
    EarlyStopped,
    Diverged,
}

impl TrainStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrainStatus::Completed => "completed",
            TrainStatus::EarlyStopped => "early_stopped",
            TrainStatus::Diverged => "diverged",
        }
    }
}

/// Reconstruction parameters plus the matching head.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub recon: ReconstructionParams,
    pub head: MatchHeadParams,
}

impl TrainedModel {
    pub fn tensor_refs(&self) -> Vec<TensorRef<'_>> {
        let mut refs = self.recon.tensor_refs();
        refs.extend(self.head.tensor_refs("head"));
        refs
    }

    pub fn tensor_muts(&mut self) -> Vec<TensorMut<'_>> {
        let mut muts = self.recon.tensor_muts();
        muts.extend(self.head.tensor_muts("head"));
        muts
    }

    pub fn to_checkpoint(&self, d: usize, config: &TrainConfig) -> Checkpoint {
        let arch = serde_json::json!({ "d": d, "config": config });
        Checkpoint::new(arch, to_named_tensors(&self.tensor_refs()))
    }

    /// Rebuilds a model from a checkpoint written by
    /// [`TrainedModel::to_checkpoint`].
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(Self, usize, TrainConfig)> {
        #[derive(Deserialize)]
        struct Arch {
            d: usize,
            config: TrainConfig,
        }
        let arch: Arch = serde_json::from_value(ck.arch.clone())
            .map_err(|e| Error::Format(format!("bad checkpoint architecture: {e}")))?;
        let mut model = init_model(arch.d, &arch.config)?;
        load_named_tensors(&mut model.tensor_muts(), &ck.tensors)?;
        Ok((model, arch.d, arch.config))
    }
}

/// Result of a training run. The model carries the best-validation
/// parameters seen, which on divergence is the last good snapshot.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub history: TrainHistory,
    pub status: TrainStatus,
    pub checkpoint_path: Option<PathBuf>,
    pub history_path: Option<PathBuf>,
}

/// Freshly initialized parameters for a run configuration.
pub fn init_model(d: usize, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    let recon = ReconstructionParams::xavier(d, config.seed)?;
    let mut rng = stream(config.seed, 12);
    let input_dim = config.mode.output_dim(d);
    let head = match config.head_kind {
        HeadKind::ConcatMlp => MatchHeadParams::concat_mlp(
            input_dim,
            config.z_classes,
            config.head_hidden,
            config.plain_concat,
            &mut rng,
        )?,
        HeadKind::Bilinear => {
            MatchHeadParams::bilinear(input_dim, config.z_classes, &mut rng)?
        }
    };
    Ok(TrainedModel { recon, head })
}

fn resolve_pair<'s>(
    store: &'s EmbeddingStore,
    pair: &CasePair,
) -> Result<(&'s [f64], &'s [f64], Vec<f64>, Vec<f64>)> {
    let ex = store
        .case(&pair.x_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.x_id)))?;
    let ey = store
        .case(&pair.y_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.y_id)))?;
    let lx = store.iv_vector(&pair.x_id)?;
    let ly = store.iv_vector(&pair.y_id)?;
    Ok((ex, ey, lx, ly))
}

fn reduce_batch(per_pair: Vec<(f64, Vec<f64>)>, what: &str) -> Result<(f64, Vec<f64>)> {
    for (i, (loss, _)) in per_pair.iter().enumerate() {
        if !loss.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite {what} loss at batch index {i}"
            )));
        }
    }
    let n = per_pair.len() as f64;
    let losses: Vec<f64> = per_pair.iter().map(|(l, _)| *l).collect();
    let grads: Vec<Vec<f64>> = per_pair.into_iter().map(|(_, g)| g).collect();
    let loss = tree_sum(&losses) / n;
    let grad: Vec<f64> = tree_sum_vecs(&grads).iter().map(|g| g / n).collect();
    Ok((loss, grad))
}

/// Mean regression loss over a batch and its gradient with respect to
/// the projection and attention parameters of both sides.
pub fn iv_batch_loss(
    batch: &[CasePair],
    store: &EmbeddingStore,
    params: &ReconstructionParams,
    iv_mode: IvMode,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let per_pair = par::map(batch, |pair| {
        let (ex, ey, lx, ly) = resolve_pair(store, pair)?;
        iv_loss_and_grads(ex, ey, &lx, &ly, params, iv_mode)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    reduce_batch(per_pair, "regression")
}

/// One optimizer step of the regression stage. Only projection and
/// attention tensors change.
pub fn iv_stage_step(
    batch: &[CasePair],
    store: &EmbeddingStore,
    params: &mut ReconstructionParams,
    iv_mode: IvMode,
    opt: &mut AdamState,
) -> Result<f64> {
    let (loss, grad) = iv_batch_loss(batch, store, params, iv_mode)?;
    let mut flat = flatten(&params.iv_tensor_refs());
    opt.step(&mut flat, &grad)?;
    write_flat(&mut params.iv_tensor_muts(), &flat)?;
    Ok(loss)
}

fn match_pair_terms(
    pair: &CasePair,
    store: &EmbeddingStore,
    recon: &ReconstructionParams,
    head: &MatchHeadParams,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<(f64, Vec<f64>)> {
    let (dx, dy) = reconstruct_pair(&pair.x_id, &pair.y_id, store, recon, mode, iv_mode)?;
    let ex = store.case(&pair.x_id).expect("checked by reconstruct_pair");
    let ey = store.case(&pair.y_id).expect("checked by reconstruct_pair");

    let mut tape = Tape::new();
    let src = bind_weight(&mut tape, &recon.source);
    let tgt = bind_weight(&mut tape, &recon.target);
    let hb = bind_head(&mut tape, head);
    let rx = reconstructed_on_tape(&mut tape, &recon.source, &src, ex, &dx, mode)?;
    let ry = reconstructed_on_tape(&mut tape, &recon.target, &tgt, ey, &dy, mode)?;
    let logits = logits_on_tape(&mut tape, head, &hb, rx, ry)?;
    let loss = tape.cross_entropy_logits(logits, pair.z)?;
    let grads = tape.backward(loss)?;

    let mut flat = Vec::new();
    for id in src
        .leaf_ids()
        .into_iter()
        .chain(tgt.leaf_ids())
        .chain(hb.leaf_ids())
    {
        flat.extend_from_slice(grads.wrt(id));
    }
    Ok((tape.scalar(loss)?, flat))
}

/// Mean matching loss over a batch and its gradient with respect to
/// the residual-weight networks and the head.
pub fn match_batch_loss(
    batch: &[CasePair],
    store: &EmbeddingStore,
    recon: &ReconstructionParams,
    head: &MatchHeadParams,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let per_pair = par::map(batch, |pair| {
        match_pair_terms(pair, store, recon, head, mode, iv_mode)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    reduce_batch(per_pair, "matching")
}

/// One optimizer step of the matching stage. Only residual-weight and
/// head tensors change; projection and attention stay bit-identical.
pub fn match_stage_step(
    batch: &[CasePair],
    store: &EmbeddingStore,
    recon: &mut ReconstructionParams,
    head: &mut MatchHeadParams,
    mode: ReconMode,
    iv_mode: IvMode,
    opt: &mut AdamState,
) -> Result<f64> {
    let (loss, grad) = match_batch_loss(batch, store, recon, head, mode, iv_mode)?;
    let mut flat = {
        let mut refs = recon.weight_tensor_refs();
        refs.extend(head.tensor_refs("head"));
        flatten(&refs)
    };
    opt.step(&mut flat, &grad)?;
    let mut muts = recon.weight_tensor_muts();
    muts.extend(head.tensor_muts("head"));
    write_flat(&mut muts, &flat)?;
    Ok(loss)
}

/// Mean regression loss over pairs, without updates.
pub fn evaluate_iv(
    pairs: &[CasePair],
    store: &EmbeddingStore,
    recon: &ReconstructionParams,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to evaluate".into()));
    }
    let losses = par::map(pairs, |pair| -> Result<f64> {
        let (dx, dy) = reconstruct_pair(&pair.x_id, &pair.y_id, store, recon, mode, iv_mode)?;
        let ex = store.case(&pair.x_id).expect("checked by reconstruct_pair");
        let ey = store.case(&pair.y_id).expect("checked by reconstruct_pair");
        Ok(norm_sq(&sub(&dx.fitted, ex)) + norm_sq(&sub(&dy.fitted, ey)))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(tree_sum(&losses) / losses.len() as f64)
}

/// Mean matching loss and accuracy over pairs, without updates.
pub fn evaluate_match(
    pairs: &[CasePair],
    store: &EmbeddingStore,
    recon: &ReconstructionParams,
    head: &MatchHeadParams,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to evaluate".into()));
    }
    let per_pair = par::map(pairs, |pair| -> Result<(f64, bool)> {
        let (dx, dy) = reconstruct_pair(&pair.x_id, &pair.y_id, store, recon, mode, iv_mode)?;
        let logits = head.logits(&dx.reconstructed, &dy.reconstructed)?;
        Ok((
            cross_entropy_from_logits(&logits, pair.z),
            argmax(&logits) == pair.z,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let losses: Vec<f64> = per_pair.iter().map(|(l, _)| *l).collect();
    let hits = per_pair.iter().filter(|(_, ok)| *ok).count();
    Ok((
        tree_sum(&losses) / losses.len() as f64,
        hits as f64 / losses.len() as f64,
    ))
}

/// Label predictions for pairs under a trained model.
pub fn predict_pairs(
    pairs: &[CasePair],
    store: &EmbeddingStore,
    model: &TrainedModel,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<Vec<usize>> {
    par::map(pairs, |pair| -> Result<usize> {
        let (dx, dy) =
            reconstruct_pair(&pair.x_id, &pair.y_id, store, &model.recon, mode, iv_mode)?;
        Ok(argmax(&model.head.logits(&dx.reconstructed, &dy.reconstructed)?))
    })
    .into_iter()
    .collect()
}

enum StageResult {
    Ok(f64),
    Diverged,
}

fn run_stage(
    epoch: &[CasePair],
    batch_size: usize,
    take: Option<usize>,
    mut step: impl FnMut(&[CasePair]) -> Result<f64>,
) -> Result<StageResult> {
    let mut weighted = 0.0;
    let mut count = 0usize;
    for chunk in epoch
        .chunks(batch_size)
        .take(take.unwrap_or(usize::MAX))
    {
        match step(chunk) {
            Ok(loss) if !loss.is_finite() || loss > DIVERGENCE_CEILING => {
                return Ok(StageResult::Diverged)
            }
            Ok(loss) => {
                weighted += loss * chunk.len() as f64;
                count += chunk.len();
            }
            Err(Error::Numeric(_)) => return Ok(StageResult::Diverged),
            Err(e) => return Err(e),
        }
    }
    Ok(StageResult::Ok(weighted / count as f64))
}

/// Runs the alternating optimization and returns the best-validation
/// model. When `out_dir` is given, the checkpoint and a JSON history
/// sidecar are written there.
pub fn train(
    train_pairs: &[CasePair],
    valid_pairs: &[CasePair],
    store: &EmbeddingStore,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Input("empty training split".into()));
    }
    if valid_pairs.is_empty() {
        return Err(Error::Input("empty validation split".into()));
    }
    let d = store.dimension();
    let mut model = init_model(d, config)?;
    let iv_len = total_len(&model.recon.iv_tensor_refs());
    let match_len = {
        let mut refs = model.recon.weight_tensor_refs();
        refs.extend(model.head.tensor_refs("head"));
        total_len(&refs)
    };
    let mut adam_iv = AdamState::new(iv_len, config.lr_iv);
    let mut adam_match = AdamState::new(match_len, config.lr_match);
    let mut shuffle_rng = stream(config.seed, 13);

    let mut history = TrainHistory::default();
    let mut status = TrainStatus::Completed;
    let mut best_loss = f64::INFINITY;
    let mut best: Option<TrainedModel> = None;
    let mut since_best = 0usize;

    'outer: for iteration in 0..config.iterations {
        let mut epoch = train_pairs.to_vec();

        let t_iv = Instant::now();
        epoch.shuffle(&mut shuffle_rng);
        let iv_loss = match run_stage(&epoch, config.batch_size, config.iv_batches_per_iter, |b| {
            iv_stage_step(b, store, &mut model.recon, config.iv_mode, &mut adam_iv)
        })? {
            StageResult::Ok(l) => l,
            StageResult::Diverged => {
                status = TrainStatus::Diverged;
                break 'outer;
            }
        };
        let iv_seconds = t_iv.elapsed().as_secs_f64();

        let t_match = Instant::now();
        epoch.shuffle(&mut shuffle_rng);
        let match_loss = match run_stage(
            &epoch,
            config.batch_size,
            config.match_batches_per_iter,
            |b| {
                match_stage_step(
                    b,
                    store,
                    &mut model.recon,
                    &mut model.head,
                    config.mode,
                    config.iv_mode,
                    &mut adam_match,
                )
            },
        )? {
            StageResult::Ok(l) => l,
            StageResult::Diverged => {
                status = TrainStatus::Diverged;
                break 'outer;
            }
        };
        let match_seconds = t_match.elapsed().as_secs_f64();

        let valid_iv = evaluate_iv(valid_pairs, store, &model.recon, config.mode, config.iv_mode)?;
        let (valid_match, valid_accuracy) = evaluate_match(
            valid_pairs,
            store,
            &model.recon,
            &model.head,
            config.mode,
            config.iv_mode,
        )?;
        if !valid_iv.is_finite()
            || !valid_match.is_finite()
            || valid_iv > DIVERGENCE_CEILING
            || valid_match > DIVERGENCE_CEILING
        {
            status = TrainStatus::Diverged;
            break 'outer;
        }

        history.iterations.push(IterationRecord {
            iteration,
            train_iv_loss: iv_loss,
            train_match_loss: match_loss,
            valid_iv_loss: valid_iv,
            valid_match_loss: valid_match,
            valid_accuracy,
        });
        history.stage_seconds.push((iv_seconds, match_seconds));

        if valid_match < best_loss {
            best_loss = valid_match;
            best = Some(model.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                status = TrainStatus::EarlyStopped;
                break;
            }
        }
    }

    let model = best.unwrap_or(model);
    let (checkpoint_path, history_path) = match out_dir {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            let ck_path = dir.join("model.ckpt");
            model.to_checkpoint(d, config).save(&ck_path)?;
            let hist_path = dir.join("history.json");
            let sidecar = serde_json::json!({
                "status": status.as_str(),
                "history": &history,
            });
            std::fs::write(&hist_path, serde_json::to_vec_pretty(&sidecar)?)?;
            (Some(ck_path), Some(hist_path))
        }
        None => (None, None),
    };

    Ok(TrainOutcome {
        model,
        history,
        status,
        checkpoint_path,
        history_path,
    })
}

/// Baseline: the same matching head trained directly on the raw case
/// embeddings, with no decomposition and no regression stage.
#[derive(Debug, Clone)]
pub struct RawHeadOutcome {
    pub head: MatchHeadParams,
    pub history: TrainHistory,
    pub status: TrainStatus,
}

fn raw_pair_terms(
    pair: &CasePair,
    store: &EmbeddingStore,
    head: &MatchHeadParams,
) -> Result<(f64, Vec<f64>)> {
    let ex = store
        .case(&pair.x_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.x_id)))?;
    let ey = store
        .case(&pair.y_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.y_id)))?;
    let mut tape = Tape::new();
    let hb = bind_head(&mut tape, head);
    let rx = tape.leaf(ex);
    let ry = tape.leaf(ey);
    let logits = logits_on_tape(&mut tape, head, &hb, rx, ry)?;
    let loss = tape.cross_entropy_logits(logits, pair.z)?;
    let grads = tape.backward(loss)?;
    let mut flat = Vec::new();
    for id in hb.leaf_ids() {
        flat.extend_from_slice(grads.wrt(id));
    }
    Ok((tape.scalar(loss)?, flat))
}

/// One optimizer step of the raw-embedding baseline.
pub fn raw_stage_step(
    batch: &[CasePair],
    store: &EmbeddingStore,
    head: &mut MatchHeadParams,
    opt: &mut AdamState,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Input("empty batch".into()));
    }
    let per_pair = par::map(batch, |pair| raw_pair_terms(pair, store, head))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let (loss, grad) = reduce_batch(per_pair, "matching")?;
    let mut flat = flatten(&head.tensor_refs("head"));
    opt.step(&mut flat, &grad)?;
    write_flat(&mut head.tensor_muts("head"), &flat)?;
    Ok(loss)
}

/// Mean matching loss and accuracy of a raw-embedding head.
pub fn evaluate_raw(
    pairs: &[CasePair],
    store: &EmbeddingStore,
    head: &MatchHeadParams,
) -> Result<(f64, f64)> {
    if pairs.is_empty() {
        return Err(Error::Input("no pairs to evaluate".into()));
    }
    let per_pair = par::map(pairs, |pair| -> Result<(f64, bool)> {
        let ex = store
            .case(&pair.x_id)
            .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.x_id)))?;
        let ey = store
            .case(&pair.y_id)
            .ok_or_else(|| Error::Reference(format!("unknown case {}", pair.y_id)))?;
        let logits = head.logits(ex, ey)?;
        Ok((
            cross_entropy_from_logits(&logits, pair.z),
            argmax(&logits) == pair.z,
        ))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let losses: Vec<f64> = per_pair.iter().map(|(l, _)| *l).collect();
    let hits = per_pair.iter().filter(|(_, ok)| *ok).count();
    Ok((
        tree_sum(&losses) / losses.len() as f64,
        hits as f64 / losses.len() as f64,
    ))
}

/// Trains the raw-embedding baseline with the same schedule, optimizer,
/// early stopping, and divergence guard as [`train`].
pub fn train_raw_head(
    train_pairs: &[CasePair],
    valid_pairs: &[CasePair],
    store: &EmbeddingStore,
    config: &TrainConfig,
) -> Result<RawHeadOutcome> {
    config.validate()?;
    if train_pairs.is_empty() {
        return Err(Error::Input("empty training split".into()));
    }
    if valid_pairs.is_empty() {
        return Err(Error::Input("empty validation split".into()));
    }
    let d = store.dimension();
    let mut rng = stream(config.seed, 12);
    let mut head = match config.head_kind {
        HeadKind::ConcatMlp => MatchHeadParams::concat_mlp(
            d,
            config.z_classes,
            config.head_hidden,
            config.plain_concat,
            &mut rng,
        )?,
        HeadKind::Bilinear => MatchHeadParams::bilinear(d, config.z_classes, &mut rng)?,
    };
    let mut opt = AdamState::new(total_len(&head.tensor_refs("head")), config.lr_match);
    let mut shuffle_rng = stream(config.seed, 13);

    let mut history = TrainHistory::default();
    let mut status = TrainStatus::Completed;
    let mut best_loss = f64::INFINITY;
    let mut best: Option<MatchHeadParams> = None;
    let mut since_best = 0usize;

    'outer: for iteration in 0..config.iterations {
        let mut epoch = train_pairs.to_vec();
        let t0 = Instant::now();
        epoch.shuffle(&mut shuffle_rng);
        let match_loss = match run_stage(
            &epoch,
            config.batch_size,
            config.match_batches_per_iter,
            |b| raw_stage_step(b, store, &mut head, &mut opt),
        )? {
            StageResult::Ok(l) => l,
            StageResult::Diverged => {
                status = TrainStatus::Diverged;
                break 'outer;
            }
        };
        let seconds = t0.elapsed().as_secs_f64();

        let (valid_match, valid_accuracy) = evaluate_raw(valid_pairs, store, &head)?;
        if !valid_match.is_finite() || valid_match > DIVERGENCE_CEILING {
            status = TrainStatus::Diverged;
            break 'outer;
        }

        history.iterations.push(IterationRecord {
            iteration,
            train_iv_loss: 0.0,
            train_match_loss: match_loss,
            valid_iv_loss: 0.0,
            valid_match_loss: valid_match,
            valid_accuracy,
        });
        history.stage_seconds.push((0.0, seconds));

        if valid_match < best_loss {
            best_loss = valid_match;
            best = Some(head.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                status = TrainStatus::EarlyStopped;
                break;
            }
        }
    }

    Ok(RawHeadOutcome {
        head: best.unwrap_or(head),
        history,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic::{generate_synthetic, SyntheticSpec};
    use crate::numcore::matrix::DenseMatrix;
    use crate::numcore::mlp::{Activation, MlpParams};

    fn tiny_data(seed: u64) -> crate::data::synthetic::SyntheticData {
        generate_synthetic(&SyntheticSpec {
            d: 8,
            num_articles: 6,
            num_cases: 60,
            train_pairs: 48,
            valid_pairs: 16,
            test_pairs: 16,
            noise_scale: 0.05,
            confounder_scale: 0.5,
            seed,
            ..Default::default()
        })
        .unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            iterations: 3,
            head_hidden: 8,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn single_pair_regression_loss_matches_hand_arithmetic() {
        // The projection maps everything to (1, 1), so the fit errors
        // are (1,1)-(0,1) = (1,0) and (1,1)-(1,0) = (0,1): loss 2.0.
        let mut store = EmbeddingStore::new(2);
        store.insert_case("X", vec![0.0, 1.0]).unwrap();
        store.insert_case("Y", vec![1.0, 0.0]).unwrap();
        store.set_combined("X", vec![0.0, 0.0]).unwrap();
        store.set_combined("Y", vec![0.0, 0.0]).unwrap();
        let mut params = ReconstructionParams::xavier(2, 0).unwrap();
        for side in [&mut params.source, &mut params.target] {
            side.proj = MlpParams::new(vec![crate::numcore::mlp::LinearLayer {
                weight: DenseMatrix::zeros(2, 2),
                bias: vec![1.0, 1.0],
                activation: Activation::Identity,
            }])
            .unwrap();
        }
        let batch = [CasePair {
            x_id: "X".into(),
            y_id: "Y".into(),
            z: 0,
        }];
        let (loss, _) = iv_batch_loss(&batch, &store, &params, IvMode::Shared).unwrap();
        assert_eq!(loss, 2.0);
    }

    #[test]
    fn uniform_head_gives_ln_z_matching_loss() {
        let data = tiny_data(7);
        let mut model = init_model(8, &tiny_config()).unwrap();
        if let MatchHeadParams::ConcatMlp { mlp, .. } = &mut model.head {
            let last = mlp.layers_mut().last_mut().unwrap();
            for w in last.weight.data_mut() {
                *w = 0.0;
            }
            for b in &mut last.bias {
                *b = 0.0;
            }
        }
        let (loss, _) = evaluate_match(
            &data.train,
            &data.store,
            &model.recon,
            &model.head,
            ReconMode::Full,
            IvMode::Shared,
        )
        .unwrap();
        assert!((loss - 3.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn perfect_projection_fit_gives_zero_loss_and_zero_gradient() {
        // Noise-free generator with identity-like planted map is not
        // available directly; instead pin the combined instrument to a
        // vector the projection maps exactly onto the embedding.
        let mut store = EmbeddingStore::new(2);
        store.insert_case("X", vec![0.5, -0.5]).unwrap();
        store.insert_case("Y", vec![0.25, 1.0]).unwrap();
        store.set_combined("X", vec![0.5, -0.5]).unwrap();
        store.set_combined("Y", vec![0.25, 1.0]).unwrap();
        let mut params = ReconstructionParams::xavier(2, 1).unwrap();
        for side in [&mut params.source, &mut params.target] {
            side.proj = MlpParams::new(vec![crate::numcore::mlp::LinearLayer {
                weight: DenseMatrix::identity(2),
                bias: vec![0.0, 0.0],
                activation: Activation::Identity,
            }])
            .unwrap();
        }
        let batch = [CasePair {
            x_id: "X".into(),
            y_id: "Y".into(),
            z: 0,
        }];
        // Separate mode keeps each side on its own instrument, so the
        // identity projection reproduces the embeddings exactly.
        let (loss, grad) = iv_batch_loss(&batch, &store, &params, IvMode::Separate).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn regression_stage_halves_loss_on_clean_synthetic_data() {
        let mut drops = 0;
        for seed in 0..5 {
            let data = generate_synthetic(&SyntheticSpec {
                d: 8,
                num_articles: 6,
                num_cases: 40,
                train_pairs: 32,
                valid_pairs: 8,
                test_pairs: 8,
                noise_scale: 0.0,
                confounder_scale: 0.0,
                seed,
                ..Default::default()
            })
            .unwrap();
            let mut params = ReconstructionParams::xavier(8, seed).unwrap();
            let mut opt = AdamState::new(total_len(&params.iv_tensor_refs()), 3e-3);
            let (initial, _) =
                iv_batch_loss(&data.train, &data.store, &params, IvMode::Shared).unwrap();
            for _ in 0..50 {
                iv_stage_step(&data.train, &data.store, &mut params, IvMode::Shared, &mut opt)
                    .unwrap();
            }
            let (fin, _) =
                iv_batch_loss(&data.train, &data.store, &params, IvMode::Shared).unwrap();
            if fin <= 0.5 * initial {
                drops += 1;
            }
        }
        assert!(drops >= 3, "loss halved on only {drops}/5 seeds");
    }

    #[test]
    fn stage_partition_is_bitwise() {
        let data = tiny_data(3);
        let config = tiny_config();
        let mut model = init_model(8, &config).unwrap();
        let mut adam_iv = AdamState::new(total_len(&model.recon.iv_tensor_refs()), config.lr_iv);
        let match_len = {
            let mut refs = model.recon.weight_tensor_refs();
            refs.extend(model.head.tensor_refs("head"));
            total_len(&refs)
        };
        let mut adam_match = AdamState::new(match_len, config.lr_match);

        for step in 0..6 {
            let batch = &data.train[(step * 4) % 40..(step * 4) % 40 + 4];
            let frozen_match: Vec<u8> = {
                let mut refs = model.recon.weight_tensor_refs();
                refs.extend(model.head.tensor_refs("head"));
                flatten(&refs).iter().flat_map(|f| f.to_le_bytes()).collect()
            };
            iv_stage_step(batch, &data.store, &mut model.recon, config.iv_mode, &mut adam_iv)
                .unwrap();
            let after: Vec<u8> = {
                let mut refs = model.recon.weight_tensor_refs();
                refs.extend(model.head.tensor_refs("head"));
                flatten(&refs).iter().flat_map(|f| f.to_le_bytes()).collect()
            };
            assert_eq!(frozen_match, after);

            let frozen_iv: Vec<u8> = flatten(&model.recon.iv_tensor_refs())
                .iter()
                .flat_map(|f| f.to_le_bytes())
                .collect();
            match_stage_step(
                batch,
                &data.store,
                &mut model.recon,
                &mut model.head,
                config.mode,
                config.iv_mode,
                &mut adam_match,
            )
            .unwrap();
            let after_iv: Vec<u8> = flatten(&model.recon.iv_tensor_refs())
                .iter()
                .flat_map(|f| f.to_le_bytes())
                .collect();
            assert_eq!(frozen_iv, after_iv);
        }
    }

    #[test]
    fn training_is_deterministic_and_checkpoints_round_trip() {
        let data = tiny_data(11);
        let config = tiny_config();
        let dir1 = tempfile::tempdir().unwrap();
        let dir2 = tempfile::tempdir().unwrap();
        let a = train(
            &data.train,
            &data.valid,
            &data.store,
            &config,
            Some(dir1.path()),
        )
        .unwrap();
        let b = train(
            &data.train,
            &data.valid,
            &data.store,
            &config,
            Some(dir2.path()),
        )
        .unwrap();
        let bytes_a = std::fs::read(a.checkpoint_path.as_ref().unwrap()).unwrap();
        let bytes_b = std::fs::read(b.checkpoint_path.as_ref().unwrap()).unwrap();
        assert_eq!(bytes_a, bytes_b);
        let hist_a = std::fs::read(a.history_path.as_ref().unwrap()).unwrap();
        let hist_b = std::fs::read(b.history_path.as_ref().unwrap()).unwrap();
        assert_eq!(hist_a, hist_b);

        let ck = Checkpoint::load(a.checkpoint_path.as_ref().unwrap()).unwrap();
        let (restored, d, config_echo) = TrainedModel::from_checkpoint(&ck).unwrap();
        assert_eq!(d, 8);
        assert_eq!(config_echo, config);
        let orig = flatten(&a.model.tensor_refs());
        let back = flatten(&restored.tensor_refs());
        assert_eq!(
            orig.iter().map(|f| f.to_bits()).collect::<Vec<_>>(),
            back.iter().map(|f| f.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_iterations_returns_initial_parameters_and_empty_history() {
        let data = tiny_data(5);
        let config = TrainConfig {
            iterations: 0,
            ..tiny_config()
        };
        let out = train(&data.train, &data.valid, &data.store, &config, None).unwrap();
        assert!(out.history.iterations.is_empty());
        assert_eq!(out.status, TrainStatus::Completed);
        let fresh = init_model(8, &config).unwrap();
        assert_eq!(
            flatten(&out.model.tensor_refs()),
            flatten(&fresh.tensor_refs())
        );
    }

    #[test]
    fn validation_matching_loss_improves_over_training() {
        let mut improved = 0;
        for seed in 0..5 {
            let data = tiny_data(seed + 20);
            let config = TrainConfig {
                iterations: 12,
                seed,
                ..tiny_config()
            };
            let out = train(&data.train, &data.valid, &data.store, &config, None).unwrap();
            let first = out.history.iterations.first().unwrap().valid_match_loss;
            let best = out
                .history
                .iterations
                .iter()
                .map(|r| r.valid_match_loss)
                .fold(f64::INFINITY, f64::min);
            if best < first {
                improved += 1;
            }
        }
        assert!(improved >= 3, "improved on only {improved}/5 seeds");
    }

    #[test]
    fn divergent_losses_abort_with_diverged_status() {
        let data = tiny_data(9);
        let config = TrainConfig {
            lr_iv: 1e30,
            iterations: 10,
            ..tiny_config()
        };
        let out = train(&data.train, &data.valid, &data.store, &config, None).unwrap();
        assert_eq!(out.status, TrainStatus::Diverged);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for config in [
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                lr_iv: 0.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                match_batches_per_iter: Some(0),
                ..TrainConfig::default()
            },
            TrainConfig {
                z_classes: 1,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(config.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn raw_baseline_trains_and_reports_history() {
        let data = tiny_data(13);
        let config = TrainConfig {
            iterations: 4,
            ..tiny_config()
        };
        let out = train_raw_head(&data.train, &data.valid, &data.store, &config).unwrap();
        assert_eq!(out.history.iterations.len(), 4);
        let (_, acc) = evaluate_raw(&data.test, &data.store, &out.head).unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }
}
