//! Treatment reconstruction per case side: combine the two instrument
//! vectors with additive attention, regress the case embedding on the
//! combination, split off the residual, and recombine the parts with a
//! learned weight.
//!
//! For a case embedding e and combined instrument c:
//! fitted = proj(c), residual = e - fitted,
//! alpha = sigmoid(weight_net([e; residual])),
//! reconstructed = fitted + alpha * residual (full mode).

use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingStore;
use crate::error::{Error, Result};
use crate::numcore::matrix::{self, softmax_pair, stable_sigmoid, DenseMatrix};
use crate::numcore::mlp::{bind_mlp, mlp_on_tape, Activation, MlpParams};
use crate::numcore::params::{TensorMut, TensorRef};
use crate::numcore::tape::{NodeId, Tape};

/// How the reconstructed representation is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    Full,
    FittedOnly,
    ResidualOnly,
    ConcatParts,
}

impl ReconMode {
    pub const ALL: [ReconMode; 4] = [
        ReconMode::Full,
        ReconMode::FittedOnly,
        ReconMode::ResidualOnly,
        ReconMode::ConcatParts,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ReconMode::Full => "full",
            ReconMode::FittedOnly => "fitted_only",
            ReconMode::ResidualOnly => "residual_only",
            ReconMode::ConcatParts => "concat_parts",
        }
    }

    /// Per-side representation width for embedding dimension `d`.
    pub fn output_dim(self, d: usize) -> usize {
        match self {
            ReconMode::ConcatParts => 2 * d,
            _ => d,
        }
    }
}

impl FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ReconMode::Full),
            "fitted_only" => Ok(ReconMode::FittedOnly),
            "residual_only" => Ok(ReconMode::ResidualOnly),
            "concat_parts" => Ok(ReconMode::ConcatParts),
            other => Err(Error::Config(format!("unknown mode {other}"))),
        }
    }
}

/// Whether each side attends over both instrument vectors or uses only
/// its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IvMode {
    Shared,
    Separate,
}

impl IvMode {
    pub const ALL: [IvMode; 2] = [IvMode::Shared, IvMode::Separate];

    pub fn as_str(self) -> &'static str {
        match self {
            IvMode::Shared => "shared",
            IvMode::Separate => "separate",
        }
    }
}

impl FromStr for IvMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "shared" => Ok(IvMode::Shared),
            "separate" => Ok(IvMode::Separate),
            other => Err(Error::Config(format!("unknown iv mode {other}"))),
        }
    }
}

/// Parameters of one side: projection network, attention, and the
/// residual-weight network.
#[derive(Debug, Clone, PartialEq)]
pub struct SideParams {
    pub proj: MlpParams,
    pub attn_w: DenseMatrix,
    pub attn_v: Vec<f64>,
    pub weight_net: MlpParams,
}

impl SideParams {
    /// Fresh parameters for dimension `d`: projection d -> d -> d with
    /// a tanh hidden layer, attention with hidden width d, weight net
    /// 2d -> d -> 1.
    pub fn xavier(d: usize, rng: &mut impl Rng) -> Result<Self> {
        let proj = MlpParams::xavier(&[d, d, d], &[Activation::Tanh, Activation::Identity], rng)?;
        let limit_w = (6.0 / (3 * d) as f64).sqrt();
        let attn_w = DenseMatrix::from_fn(d, 2 * d, |_, _| rng.random_range(-limit_w..limit_w));
        let limit_v = (6.0 / (d + 1) as f64).sqrt();
        let attn_v = (0..d).map(|_| rng.random_range(-limit_v..limit_v)).collect();
        let weight_net = MlpParams::xavier(
            &[2 * d, d, 1],
            &[Activation::Tanh, Activation::Identity],
            rng,
        )?;
        let side = Self {
            proj,
            attn_w,
            attn_v,
            weight_net,
        };
        side.validate()?;
        Ok(side)
    }

    pub fn d(&self) -> usize {
        self.proj.input_dim()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d();
        if self.proj.output_dim() != d {
            return Err(Error::Shape(format!(
                "projection maps {d} to {}",
                self.proj.output_dim()
            )));
        }
        if self.attn_w.cols() != 2 * d {
            return Err(Error::Shape(format!(
                "attention expects input width {}, needs {}",
                self.attn_w.cols(),
                2 * d
            )));
        }
        if self.attn_v.len() != self.attn_w.rows() {
            return Err(Error::Shape(format!(
                "attention score vector length {} against {} hidden rows",
                self.attn_v.len(),
                self.attn_w.rows()
            )));
        }
        if self.weight_net.input_dim() != 2 * d || self.weight_net.output_dim() != 1 {
            return Err(Error::Shape(format!(
                "weight net maps {} to {}, needs {} to 1",
                self.weight_net.input_dim(),
                self.weight_net.output_dim(),
                2 * d
            )));
        }
        Ok(())
    }

    /// Additive attention score of instrument vector `a` for this case.
    pub fn score(&self, e_case: &[f64], a: &[f64]) -> Result<f64> {
        let mut cat = Vec::with_capacity(e_case.len() + a.len());
        cat.extend_from_slice(e_case);
        cat.extend_from_slice(a);
        let h = self.attn_w.matvec(&cat)?;
        let h: Vec<f64> = h.iter().map(|x| x.tanh()).collect();
        Ok(matrix::dot(&self.attn_v, &h))
    }

    /// Residual weight for a case and its residual.
    pub fn alpha(&self, e_case: &[f64], residual: &[f64]) -> Result<f64> {
        let mut cat = Vec::with_capacity(e_case.len() + residual.len());
        cat.extend_from_slice(e_case);
        cat.extend_from_slice(residual);
        let out = self.weight_net.forward(&cat)?;
        Ok(stable_sigmoid(out[0]))
    }

    /// Tensors trained in the instrument-regression stage, stable order.
    pub fn iv_tensor_refs(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        let mut out = self.proj.tensor_refs(&format!("{prefix}.proj"));
        out.push(TensorRef {
            name: format!("{prefix}.attn.w"),
            dims: vec![self.attn_w.rows(), self.attn_w.cols()],
            data: self.attn_w.data(),
        });
        out.push(TensorRef {
            name: format!("{prefix}.attn.v"),
            dims: vec![self.attn_v.len()],
            data: &self.attn_v,
        });
        out
    }

    pub fn iv_tensor_muts(&mut self, prefix: &str) -> Vec<TensorMut<'_>> {
        let mut out = self.proj.tensor_muts(&format!("{prefix}.proj"));
        let rows = self.attn_w.rows();
        let cols = self.attn_w.cols();
        out.push(TensorMut {
            name: format!("{prefix}.attn.w"),
            dims: vec![rows, cols],
            data: self.attn_w.data_mut(),
        });
        out.push(TensorMut {
            name: format!("{prefix}.attn.v"),
            dims: vec![self.attn_v.len()],
            data: &mut self.attn_v,
        });
        out
    }

    /// Tensors of the residual-weight network, trained in the matching
    /// stage.
    pub fn weight_tensor_refs(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        self.weight_net.tensor_refs(&format!("{prefix}.weight"))
    }

    pub fn weight_tensor_muts(&mut self, prefix: &str) -> Vec<TensorMut<'_>> {
        self.weight_net.tensor_muts(&format!("{prefix}.weight"))
    }

    pub fn tensor_refs(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        let mut out = self.iv_tensor_refs(prefix);
        out.extend(self.weight_tensor_refs(prefix));
        out
    }

    pub fn tensor_muts(&mut self, prefix: &str) -> Vec<TensorMut<'_>> {
        let Self {
            proj,
            attn_w,
            attn_v,
            weight_net,
        } = self;
        let mut out = proj.tensor_muts(&format!("{prefix}.proj"));
        let rows = attn_w.rows();
        let cols = attn_w.cols();
        out.push(TensorMut {
            name: format!("{prefix}.attn.w"),
            dims: vec![rows, cols],
            data: attn_w.data_mut(),
        });
        out.push(TensorMut {
            name: format!("{prefix}.attn.v"),
            dims: vec![attn_v.len()],
            data: attn_v,
        });
        out.extend(weight_net.tensor_muts(&format!("{prefix}.weight")));
        out
    }
}

/// The reconstruction parameters: one [`SideParams`] per pair side.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructionParams {
    pub source: SideParams,
    pub target: SideParams,
}

impl ReconstructionParams {
    pub fn xavier(d: usize, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(10);
        let source = SideParams::xavier(d, &mut rng)?;
        rng.set_stream(11);
        let target = SideParams::xavier(d, &mut rng)?;
        Ok(Self { source, target })
    }

    pub fn d(&self) -> usize {
        self.source.d()
    }

    pub fn iv_tensor_refs(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.source.iv_tensor_refs("source");
        out.extend(self.target.iv_tensor_refs("target"));
        out
    }

    pub fn iv_tensor_muts(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = self.source.iv_tensor_muts("source");
        out.extend(self.target.iv_tensor_muts("target"));
        out
    }

    pub fn weight_tensor_refs(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.source.weight_tensor_refs("source");
        out.extend(self.target.weight_tensor_refs("target"));
        out
    }

    pub fn weight_tensor_muts(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = self.source.weight_tensor_muts("source");
        out.extend(self.target.weight_tensor_muts("target"));
        out
    }

    pub fn tensor_refs(&self) -> Vec<TensorRef<'_>> {
        let mut out = self.source.tensor_refs("source");
        out.extend(self.target.tensor_refs("target"));
        out
    }

    pub fn tensor_muts(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = self.source.tensor_muts("source");
        out.extend(self.target.tensor_muts("target"));
        out
    }
}

/// One case side's decomposition and reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub w: f64,
    pub c: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual: Vec<f64>,
    pub alpha: f64,
    pub reconstructed: Vec<f64>,
}

/// Exportable record of a decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionRecord {
    pub id: String,
    pub fitted: Vec<f64>,
    pub residual: Vec<f64>,
    pub alpha: f64,
    pub w: f64,
}

impl Decomposition {
    pub fn to_record(&self, id: impl Into<String>) -> DecompositionRecord {
        DecompositionRecord {
            id: id.into(),
            fitted: self.fitted.clone(),
            residual: self.residual.clone(),
            alpha: self.alpha,
            w: self.w,
        }
    }
}

fn want_dim(what: &str, v: &[f64], d: usize) -> Result<()> {
    if v.len() != d {
        return Err(Error::Shape(format!(
            "{what} has length {}, expected {d}",
            v.len()
        )));
    }
    Ok(())
}

/// Attention-combines the two instrument vectors for one case.
/// Returns the weight of `e_own` and the combination.
pub fn attend_iv(
    e_case: &[f64],
    e_own: &[f64],
    e_other: &[f64],
    side: &SideParams,
) -> Result<(f64, Vec<f64>)> {
    let d = side.d();
    want_dim("case embedding", e_case, d)?;
    want_dim("own instrument", e_own, d)?;
    want_dim("other instrument", e_other, d)?;
    let s_own = side.score(e_case, e_own)?;
    let s_other = side.score(e_case, e_other)?;
    let (wa, wb) = softmax_pair(s_own, s_other);
    let c = e_own
        .iter()
        .zip(e_other)
        .map(|(o, t)| wa * o + wb * t)
        .collect();
    Ok((wa, c))
}

/// Projects the combined instrument vector onto the embedding space.
pub fn fit_treatment(c: &[f64], side: &SideParams) -> Result<Vec<f64>> {
    side.proj.forward(c)
}

/// Decomposes a case embedding given an already-combined instrument
/// vector and its attention weight.
pub fn decompose_from_combined(
    e_case: &[f64],
    w: f64,
    c: Vec<f64>,
    side: &SideParams,
    mode: ReconMode,
) -> Result<Decomposition> {
    let d = side.d();
    want_dim("case embedding", e_case, d)?;
    want_dim("combined instrument", &c, d)?;
    let fitted = fit_treatment(&c, side)?;
    let residual = matrix::sub(e_case, &fitted);
    let alpha = side.alpha(e_case, &residual)?;
    let reconstructed = match mode {
        ReconMode::Full => {
            // At exact saturation the recombination telescopes; the
            // gradient through alpha is zero there, so the shortcut is
            // consistent with training.
            if alpha == 1.0 {
                e_case.to_vec()
            } else {
                fitted
                    .iter()
                    .zip(&residual)
                    .map(|(f, r)| f + alpha * r)
                    .collect()
            }
        }
        ReconMode::FittedOnly => fitted.clone(),
        ReconMode::ResidualOnly => residual.clone(),
        ReconMode::ConcatParts => {
            let mut cat = fitted.clone();
            cat.extend_from_slice(&residual);
            cat
        }
    };
    Ok(Decomposition {
        w,
        c,
        fitted,
        residual,
        alpha,
        reconstructed,
    })
}

/// Full decomposition of one case side with shared-instrument
/// attention.
pub fn decompose(
    e_case: &[f64],
    e_own: &[f64],
    e_other: &[f64],
    side: &SideParams,
    mode: ReconMode,
) -> Result<Decomposition> {
    let (w, c) = attend_iv(e_case, e_own, e_other, side)?;
    decompose_from_combined(e_case, w, c, side, mode)
}

/// Pass-through decomposition for cases without instruments:
/// the embedding is kept whole, the residual is zero.
pub fn decompose_passthrough(e_case: &[f64], mode: ReconMode) -> Decomposition {
    let d = e_case.len();
    let fitted = e_case.to_vec();
    let residual = vec![0.0; d];
    let reconstructed = match mode {
        ReconMode::Full | ReconMode::FittedOnly => fitted.clone(),
        ReconMode::ResidualOnly => residual.clone(),
        ReconMode::ConcatParts => {
            let mut cat = fitted.clone();
            cat.extend_from_slice(&residual);
            cat
        }
    };
    Decomposition {
        w: 1.0,
        c: vec![0.0; d],
        fitted,
        residual,
        alpha: 1.0,
        reconstructed,
    }
}

/// Decomposes both sides of a case pair. In shared mode each side
/// attends over both cases' instrument vectors; in separate mode each
/// side uses only its own, with weight fixed to 1.
pub fn reconstruct_pair(
    x_id: &str,
    y_id: &str,
    store: &EmbeddingStore,
    params: &ReconstructionParams,
    mode: ReconMode,
    iv_mode: IvMode,
) -> Result<(Decomposition, Decomposition)> {
    let ex = store
        .case(x_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {x_id}")))?;
    let ey = store
        .case(y_id)
        .ok_or_else(|| Error::Reference(format!("unknown case {y_id}")))?;
    let lx = store.iv_vector(x_id)?;
    let ly = store.iv_vector(y_id)?;
    match iv_mode {
        IvMode::Shared => {
            let dx = decompose(ex, &lx, &ly, &params.source, mode)?;
            let dy = decompose(ey, &ly, &lx, &params.target, mode)?;
            Ok((dx, dy))
        }
        IvMode::Separate => {
            let dx = decompose_from_combined(ex, 1.0, lx, &params.source, mode)?;
            let dy = decompose_from_combined(ey, 1.0, ly, &params.target, mode)?;
            Ok((dx, dy))
        }
    }
}

/// Tape leaves for one side's instrument-regression parameters,
/// in [`SideParams::iv_tensor_refs`] order.
pub struct SideIvBinding {
    pub proj_layers: Vec<(NodeId, NodeId)>,
    pub attn_w: NodeId,
    pub attn_v: NodeId,
}

impl SideIvBinding {
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.proj_layers.len() * 2 + 2);
        for (w, b) in &self.proj_layers {
            out.push(*w);
            out.push(*b);
        }
        out.push(self.attn_w);
        out.push(self.attn_v);
        out
    }
}

pub fn bind_iv(tape: &mut Tape, side: &SideParams) -> SideIvBinding {
    SideIvBinding {
        proj_layers: bind_mlp(tape, &side.proj),
        attn_w: tape.matrix_leaf(&side.attn_w),
        attn_v: tape.leaf(&side.attn_v),
    }
}

/// Records the attention combination on the tape. Returns the weight
/// pair node and the combined vector node.
pub fn attention_on_tape(
    tape: &mut Tape,
    binding: &SideIvBinding,
    e_case: NodeId,
    e_own: NodeId,
    e_other: NodeId,
) -> Result<(NodeId, NodeId)> {
    let score = |tape: &mut Tape, a: NodeId| -> Result<NodeId> {
        let cat = tape.concat(&[e_case, a])?;
        let h = tape.matvec(binding.attn_w, cat)?;
        let t = tape.tanh(h);
        tape.dot(binding.attn_v, t)
    };
    let s_own = score(tape, e_own)?;
    let s_other = score(tape, e_other)?;
    let scores = tape.stack(&[s_own, s_other])?;
    let weights = tape.softmax_pair(scores)?;
    let wa = tape.component(weights, 0)?;
    let wb = tape.component(weights, 1)?;
    let own_part = tape.scale_node(wa, e_own)?;
    let other_part = tape.scale_node(wb, e_other)?;
    let c = tape.add(own_part, other_part)?;
    Ok((weights, c))
}

/// Records one side's fitted vector on the tape.
pub fn fitted_on_tape(
    tape: &mut Tape,
    side: &SideParams,
    binding: &SideIvBinding,
    c: NodeId,
) -> Result<NodeId> {
    mlp_on_tape(tape, &side.proj, &binding.proj_layers, c)
}

/// Instrument-regression loss for one pair with gradients for every
/// stage-one tensor, flattened in [`ReconstructionParams::iv_tensor_refs`]
/// order.
pub fn iv_loss_and_grads(
    ex: &[f64],
    ey: &[f64],
    lx: &[f64],
    ly: &[f64],
    params: &ReconstructionParams,
    iv_mode: IvMode,
) -> Result<(f64, Vec<f64>)> {
    let mut tape = Tape::new();
    let src = bind_iv(&mut tape, &params.source);
    let tgt = bind_iv(&mut tape, &params.target);
    let exl = tape.leaf(ex);
    let eyl = tape.leaf(ey);
    let lxl = tape.leaf(lx);
    let lyl = tape.leaf(ly);

    let side_term = |tape: &mut Tape,
                     side: &SideParams,
                     binding: &SideIvBinding,
                     e_case: NodeId,
                     own: NodeId,
                     other: NodeId|
     -> Result<NodeId> {
        let c = match iv_mode {
            IvMode::Shared => attention_on_tape(tape, binding, e_case, own, other)?.1,
            IvMode::Separate => own,
        };
        let fitted = fitted_on_tape(tape, side, binding, c)?;
        let diff = tape.sub(fitted, e_case)?;
        Ok(tape.sum_sq(diff))
    };

    let tx = side_term(&mut tape, &params.source, &src, exl, lxl, lyl)?;
    let ty = side_term(&mut tape, &params.target, &tgt, eyl, lyl, lxl)?;
    let loss = tape.add(tx, ty)?;
    let grads = tape.backward(loss)?;

    let mut flat = Vec::new();
    for id in src.leaf_ids().into_iter().chain(tgt.leaf_ids()) {
        flat.extend_from_slice(grads.wrt(id));
    }
    Ok((tape.scalar(loss)?, flat))
}

/// Tape leaves for one side's residual-weight network.
pub struct SideWeightBinding {
    pub layers: Vec<(NodeId, NodeId)>,
}

impl SideWeightBinding {
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (w, b) in &self.layers {
            out.push(*w);
            out.push(*b);
        }
        out
    }
}

pub fn bind_weight(tape: &mut Tape, side: &SideParams) -> SideWeightBinding {
    SideWeightBinding {
        layers: bind_mlp(tape, &side.weight_net),
    }
}

/// Records one side's reconstructed representation on the tape, taking
/// the already-decomposed fitted and residual parts as constants and
/// differentiating only through the residual weight.
pub fn reconstructed_on_tape(
    tape: &mut Tape,
    side: &SideParams,
    binding: &SideWeightBinding,
    e_case: &[f64],
    dec: &Decomposition,
    mode: ReconMode,
) -> Result<NodeId> {
    match mode {
        ReconMode::Full => {
            let e = tape.leaf(e_case);
            let fitted = tape.leaf(&dec.fitted);
            let residual = tape.leaf(&dec.residual);
            let cat = tape.concat(&[e, residual])?;
            let out = mlp_on_tape(tape, &side.weight_net, &binding.layers, cat)?;
            let alpha_vec = tape.sigmoid(out);
            let alpha = tape.component(alpha_vec, 0)?;
            let weighted = tape.scale_node(alpha, residual)?;
            tape.add(fitted, weighted)
        }
        ReconMode::FittedOnly => Ok(tape.leaf(&dec.fitted)),
        ReconMode::ResidualOnly => Ok(tape.leaf(&dec.residual)),
        ReconMode::ConcatParts => {
            let fitted = tape.leaf(&dec.fitted);
            let residual = tape.leaf(&dec.residual);
            tape.concat(&[fitted, residual])
        }
    }
}
