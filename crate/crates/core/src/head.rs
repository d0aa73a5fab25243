//! Matching predictors over pairs of reconstructed embeddings, plus a
//! paragraph-pair mode that reconstructs every paragraph combination
//! and mean-pools the interaction logits.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::matrix::{self, softmax, tree_sum_vecs, DenseMatrix};
use crate::numcore::mlp::{bind_mlp, mlp_on_tape, Activation, MlpParams};
use crate::numcore::params::{TensorMut, TensorRef};
use crate::numcore::tape::{NodeId, Tape};
use crate::reconstruct::{
    decompose, decompose_from_combined, IvMode, ReconMode, ReconstructionParams,
};

/// Which predictor family a head uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    ConcatMlp,
    Bilinear,
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::ConcatMlp => "concat_mlp",
            HeadKind::Bilinear => "bilinear",
        }
    }
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat_mlp" => Ok(HeadKind::ConcatMlp),
            "bilinear" => Ok(HeadKind::Bilinear),
            other => Err(Error::Config(format!("unknown head kind {other}"))),
        }
    }
}

/// Parameters of the matching predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum MatchHeadParams {
    /// MLP over pair features. With `plain_concat` the features are
    /// `[rx; ry]`; otherwise `[rx; ry; |rx-ry|; rx*ry]`.
    ConcatMlp {
        input_dim: usize,
        z: usize,
        plain_concat: bool,
        mlp: MlpParams,
    },
    /// One bilinear form and bias per class: `rx' B_k ry + b_k`.
    Bilinear {
        input_dim: usize,
        z: usize,
        forms: Vec<DenseMatrix>,
        bias: Vec<f64>,
    },
}

impl MatchHeadParams {
    /// Fresh MLP head with one tanh hidden layer of width `hidden`.
    pub fn concat_mlp(
        input_dim: usize,
        z: usize,
        hidden: usize,
        plain_concat: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if z < 2 {
            return Err(Error::Config(format!("class count {z} < 2")));
        }
        let feat = if plain_concat { 2 * input_dim } else { 4 * input_dim };
        let mlp = MlpParams::xavier(
            &[feat, hidden, z],
            &[Activation::Tanh, Activation::Identity],
            rng,
        )?;
        Ok(MatchHeadParams::ConcatMlp {
            input_dim,
            z,
            plain_concat,
            mlp,
        })
    }

    /// Fresh bilinear head.
    pub fn bilinear(input_dim: usize, z: usize, rng: &mut impl Rng) -> Result<Self> {
        if z < 2 {
            return Err(Error::Config(format!("class count {z} < 2")));
        }
        let limit = (6.0 / (2 * input_dim) as f64).sqrt();
        let forms = (0..z)
            .map(|_| {
                DenseMatrix::from_fn(input_dim, input_dim, |_, _| {
                    rng.random_range(-limit..limit)
                })
            })
            .collect();
        Ok(MatchHeadParams::Bilinear {
            input_dim,
            z,
            forms,
            bias: vec![0.0; z],
        })
    }

    pub fn kind(&self) -> HeadKind {
        match self {
            MatchHeadParams::ConcatMlp { .. } => HeadKind::ConcatMlp,
            MatchHeadParams::Bilinear { .. } => HeadKind::Bilinear,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            MatchHeadParams::ConcatMlp { input_dim, .. } => *input_dim,
            MatchHeadParams::Bilinear { input_dim, .. } => *input_dim,
        }
    }

    pub fn z(&self) -> usize {
        match self {
            MatchHeadParams::ConcatMlp { z, .. } => *z,
            MatchHeadParams::Bilinear { z, .. } => *z,
        }
    }

    pub fn plain_concat(&self) -> bool {
        matches!(
            self,
            MatchHeadParams::ConcatMlp {
                plain_concat: true,
                ..
            }
        )
    }

    fn want_inputs(&self, rx: &[f64], ry: &[f64]) -> Result<()> {
        let d = self.input_dim();
        if rx.len() != d || ry.len() != d {
            return Err(Error::Shape(format!(
                "head expects side inputs of length {d}, got {} and {}",
                rx.len(),
                ry.len()
            )));
        }
        Ok(())
    }

    /// Class logits for a reconstructed pair.
    pub fn logits(&self, rx: &[f64], ry: &[f64]) -> Result<Vec<f64>> {
        self.want_inputs(rx, ry)?;
        match self {
            MatchHeadParams::ConcatMlp {
                plain_concat, mlp, ..
            } => mlp.forward(&pair_features(rx, ry, *plain_concat)),
            MatchHeadParams::Bilinear { forms, bias, .. } => forms
                .iter()
                .zip(bias)
                .map(|(b_k, bk)| Ok(matrix::dot(rx, &b_k.matvec(ry)?) + bk))
                .collect(),
        }
    }

    /// Named views over every tensor, stable order.
    pub fn tensor_refs(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        match self {
            MatchHeadParams::ConcatMlp { mlp, .. } => mlp.tensor_refs(&format!("{prefix}.mlp")),
            MatchHeadParams::Bilinear { forms, bias, .. } => {
                let mut out: Vec<TensorRef<'_>> = forms
                    .iter()
                    .enumerate()
                    .map(|(k, f)| TensorRef {
                        name: format!("{prefix}.form{k}"),
                        dims: vec![f.rows(), f.cols()],
                        data: f.data(),
                    })
                    .collect();
                out.push(TensorRef {
                    name: format!("{prefix}.bias"),
                    dims: vec![bias.len()],
                    data: bias,
                });
                out
            }
        }
    }

    pub fn tensor_muts(&mut self, prefix: &str) -> Vec<TensorMut<'_>> {
        match self {
            MatchHeadParams::ConcatMlp { mlp, .. } => mlp.tensor_muts(&format!("{prefix}.mlp")),
            MatchHeadParams::Bilinear { forms, bias, .. } => {
                let mut out: Vec<TensorMut<'_>> = forms
                    .iter_mut()
                    .enumerate()
                    .map(|(k, f)| {
                        let rows = f.rows();
                        let cols = f.cols();
                        TensorMut {
                            name: format!("{prefix}.form{k}"),
                            dims: vec![rows, cols],
                            data: f.data_mut(),
                        }
                    })
                    .collect();
                out.push(TensorMut {
                    name: format!("{prefix}.bias"),
                    dims: vec![bias.len()],
                    data: bias,
                });
                out
            }
        }
    }
}

/// Pair features for the MLP head.
pub fn pair_features(rx: &[f64], ry: &[f64], plain_concat: bool) -> Vec<f64> {
    let mut f = Vec::with_capacity(if plain_concat { 2 } else { 4 } * rx.len());
    f.extend_from_slice(rx);
    f.extend_from_slice(ry);
    if !plain_concat {
        f.extend(rx.iter().zip(ry).map(|(a, b)| (a - b).abs()));
        f.extend(rx.iter().zip(ry).map(|(a, b)| a * b));
    }
    f
}

/// Class distribution for a reconstructed pair.
pub fn predict(rx: &[f64], ry: &[f64], head: &MatchHeadParams) -> Result<Vec<f64>> {
    Ok(softmax(&head.logits(rx, ry)?))
}

/// Tape leaves for a head, in [`MatchHeadParams::tensor_refs`] order.
pub enum HeadBinding {
    ConcatMlp { layers: Vec<(NodeId, NodeId)> },
    Bilinear { forms: Vec<NodeId>, bias: NodeId },
}

impl HeadBinding {
    pub fn leaf_ids(&self) -> Vec<NodeId> {
        match self {
            HeadBinding::ConcatMlp { layers } => {
                let mut out = Vec::with_capacity(layers.len() * 2);
                for (w, b) in layers {
                    out.push(*w);
                    out.push(*b);
                }
                out
            }
            HeadBinding::Bilinear { forms, bias } => {
                let mut out = forms.clone();
                out.push(*bias);
                out
            }
        }
    }
}

pub fn bind_head(tape: &mut Tape, head: &MatchHeadParams) -> HeadBinding {
    match head {
        MatchHeadParams::ConcatMlp { mlp, .. } => HeadBinding::ConcatMlp {
            layers: bind_mlp(tape, mlp),
        },
        MatchHeadParams::Bilinear { forms, bias, .. } => HeadBinding::Bilinear {
            forms: forms.iter().map(|f| tape.matrix_leaf(f)).collect(),
            bias: tape.leaf(bias),
        },
    }
}

/// Records the head's logits on the tape.
pub fn logits_on_tape(
    tape: &mut Tape,
    head: &MatchHeadParams,
    binding: &HeadBinding,
    rx: NodeId,
    ry: NodeId,
) -> Result<NodeId> {
    match (head, binding) {
        (
            MatchHeadParams::ConcatMlp {
                plain_concat, mlp, ..
            },
            HeadBinding::ConcatMlp { layers },
        ) => {
            let features = if *plain_concat {
                tape.concat(&[rx, ry])?
            } else {
                let diff = tape.sub(rx, ry)?;
                let dist = tape.abs(diff);
                let prod = tape.mul(rx, ry)?;
                tape.concat(&[rx, ry, dist, prod])?
            };
            mlp_on_tape(tape, mlp, layers, features)
        }
        (MatchHeadParams::Bilinear { .. }, HeadBinding::Bilinear { forms, bias }) => {
            let mut dots = Vec::with_capacity(forms.len());
            for f in forms {
                let v = tape.matvec(*f, ry)?;
                dots.push(tape.dot(rx, v)?);
            }
            let stacked = tape.stack(&dots)?;
            tape.add(stacked, *bias)
        }
        _ => Err(Error::State("head binding does not match head kind".into())),
    }
}

/// Result of paragraph-mode prediction, with the number of pair
/// reconstructions performed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphPrediction {
    pub distribution: Vec<f64>,
    pub reconstructions: usize,
}

/// Predicts a label distribution for two paragraph lists. Every
/// paragraph pair is reconstructed with its own resolved instruments
/// (`resolve_x`/`resolve_y` supply one instrument vector per
/// paragraph index) and the per-pair logits are mean-pooled.
pub fn paragraph_predict(
    paras_x: &[Vec<f64>],
    paras_y: &[Vec<f64>],
    params: &ReconstructionParams,
    head: &MatchHeadParams,
    mode: ReconMode,
    iv_mode: IvMode,
    resolve_x: impl Fn(usize) -> Result<Vec<f64>>,
    resolve_y: impl Fn(usize) -> Result<Vec<f64>>,
) -> Result<ParagraphPrediction> {
    if paras_x.is_empty() || paras_y.is_empty() {
        return Err(Error::Input("empty paragraph list".into()));
    }
    let ivs_x: Vec<Vec<f64>> = (0..paras_x.len())
        .map(resolve_x)
        .collect::<Result<_>>()?;
    let ivs_y: Vec<Vec<f64>> = (0..paras_y.len())
        .map(resolve_y)
        .collect::<Result<_>>()?;

    let mut logit_rows = Vec::with_capacity(paras_x.len() * paras_y.len());
    let mut reconstructions = 0usize;
    for (px, lx) in paras_x.iter().zip(&ivs_x) {
        for (py, ly) in paras_y.iter().zip(&ivs_y) {
            let (dx, dy) = match iv_mode {
                IvMode::Shared => (
                    decompose(px, lx, ly, &params.source, mode)?,
                    decompose(py, ly, lx, &params.target, mode)?,
                ),
                IvMode::Separate => (
                    decompose_from_combined(px, 1.0, lx.clone(), &params.source, mode)?,
                    decompose_from_combined(py, 1.0, ly.clone(), &params.target, mode)?,
                ),
            };
            reconstructions += 1;
            logit_rows.push(head.logits(&dx.reconstructed, &dy.reconstructed)?);
        }
    }
    let summed = tree_sum_vecs(&logit_rows);
    let count = logit_rows.len() as f64;
    let pooled: Vec<f64> = summed.iter().map(|s| s / count).collect();
    Ok(ParagraphPrediction {
        distribution: softmax(&pooled),
        reconstructions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn predictions_are_probability_vectors() {
        let mut r = rng(1);
        let heads = [
            MatchHeadParams::concat_mlp(5, 3, 8, false, &mut r).unwrap(),
            MatchHeadParams::concat_mlp(5, 3, 8, true, &mut r).unwrap(),
            MatchHeadParams::bilinear(5, 4, &mut r).unwrap(),
        ];
        let rx = [0.3, -0.8, 1.1, 0.0, 0.5];
        let ry = [-0.2, 0.9, 0.4, 1.3, -1.0];
        for head in &heads {
            let p = predict(&rx, &ry, head).unwrap();
            assert_eq!(p.len(), head.z());
            assert!(p.iter().all(|v| *v > 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_final_layer_gives_uniform_distribution() {
        let mut r = rng(2);
        let mut head = MatchHeadParams::concat_mlp(3, 3, 4, false, &mut r).unwrap();
        if let MatchHeadParams::ConcatMlp { mlp, .. } = &mut head {
            let last = mlp.layers_mut().last_mut().unwrap();
            for w in last.weight.data_mut() {
                *w = 0.0;
            }
            for b in &mut last.bias {
                *b = 0.0;
            }
        }
        let p = predict(&[1.0, 2.0, 3.0], &[-1.0, 0.0, 1.0], &head).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bilinear_logits_match_hand_computation() {
        let forms = vec![
            DenseMatrix::identity(2),
            DenseMatrix::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap(),
        ];
        let head = MatchHeadParams::Bilinear {
            input_dim: 2,
            z: 2,
            forms,
            bias: vec![0.5, -0.25],
        };
        let rx = [2.0, 3.0];
        let ry = [5.0, 7.0];
        let logits = head.logits(&rx, &ry).unwrap();
        // identity form: 2*5 + 3*7 = 31; swap form: 2*7 + 3*5 = 29.
        assert_eq!(logits, vec![31.5, 28.75]);
    }

    #[test]
    fn recorded_logits_match_eager_bitwise() {
        let mut r = rng(3);
        let rx = [0.37, -0.41, 0.89, 0.02];
        let ry = [1.21, 0.33, -0.75, 0.5];
        let heads = [
            MatchHeadParams::concat_mlp(4, 3, 6, false, &mut r).unwrap(),
            MatchHeadParams::concat_mlp(4, 3, 6, true, &mut r).unwrap(),
            MatchHeadParams::bilinear(4, 3, &mut r).unwrap(),
        ];
        for head in &heads {
            let eager = head.logits(&rx, &ry).unwrap();
            let mut tape = Tape::new();
            let binding = bind_head(&mut tape, head);
            let rxl = tape.leaf(&rx);
            let ryl = tape.leaf(&ry);
            let out = logits_on_tape(&mut tape, head, &binding, rxl, ryl).unwrap();
            for (a, b) in tape.value(out).iter().zip(&eager) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn cross_entropy_gradients_through_heads_match_finite_differences() {
        use crate::numcore::gradcheck::grad_check;
        use crate::numcore::params::{flatten, write_flat};

        let rx = [0.6, -0.2, 0.9];
        let ry = [-0.4, 1.0, 0.1];
        let mut r = rng(4);
        let heads = [
            MatchHeadParams::concat_mlp(3, 3, 5, false, &mut r).unwrap(),
            MatchHeadParams::bilinear(3, 3, &mut r).unwrap(),
        ];
        for head in &heads {
            let base = flatten(&head.tensor_refs("h"));
            let run = |flat: &[f64]| -> Result<(f64, Vec<f64>)> {
                let mut h = head.clone();
                write_flat(&mut h.tensor_muts("h"), flat)?;
                let mut tape = Tape::new();
                let binding = bind_head(&mut tape, &h);
                let rxl = tape.leaf(&rx);
                let ryl = tape.leaf(&ry);
                let logits = logits_on_tape(&mut tape, &h, &binding, rxl, ryl)?;
                let loss = tape.cross_entropy_logits(logits, 1)?;
                let grads = tape.backward(loss)?;
                let mut flat_g = Vec::new();
                for id in binding.leaf_ids() {
                    flat_g.extend_from_slice(grads.wrt(id));
                }
                Ok((tape.scalar(loss)?, flat_g))
            };
            let report = grad_check(
                |p| run(p).map(|r| r.0),
                |p| run(p).map(|r| r.1),
                &base,
                1e-5,
            )
            .unwrap();
            assert!(report.max_rel_error < 1e-4, "{}", report.max_rel_error);
        }
    }

    fn tiny_store_params(d: usize) -> ReconstructionParams {
        ReconstructionParams::xavier(d, 31).unwrap()
    }

    #[test]
    fn single_paragraph_mode_equals_plain_predict() {
        let d = 4;
        let params = tiny_store_params(d);
        let mut r = rng(5);
        let head = MatchHeadParams::concat_mlp(d, 3, 6, false, &mut r).unwrap();
        let px = vec![vec![0.5, -0.1, 0.8, 0.0]];
        let py = vec![vec![-0.3, 0.4, 0.2, 1.0]];
        let ivx = vec![0.9, 0.1, -0.5, 0.25];
        let ivy = vec![0.0, 0.7, 0.3, -0.6];

        let got = paragraph_predict(
            &px,
            &py,
            &params,
            &head,
            ReconMode::Full,
            IvMode::Shared,
            |_| Ok(ivx.clone()),
            |_| Ok(ivy.clone()),
        )
        .unwrap();
        assert_eq!(got.reconstructions, 1);

        let dx = decompose(&px[0], &ivx, &ivy, &params.source, ReconMode::Full).unwrap();
        let dy = decompose(&py[0], &ivy, &ivx, &params.target, ReconMode::Full).unwrap();
        let want = predict(&dx.reconstructed, &dy.reconstructed, &head).unwrap();
        for (a, b) in got.distribution.iter().zip(&want) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn repeating_the_paragraph_list_leaves_the_output_unchanged() {
        let d = 3;
        let params = tiny_store_params(d);
        let mut r = rng(6);
        let head = MatchHeadParams::bilinear(d, 3, &mut r).unwrap();
        let px = vec![vec![0.2, 0.5, -0.1], vec![1.0, -0.4, 0.3]];
        let py = vec![
            vec![0.7, 0.0, 0.1],
            vec![-0.2, 0.9, 0.4],
            vec![0.3, 0.3, -0.8],
        ];
        let iv = vec![0.5, -0.5, 0.25];

        let once = paragraph_predict(
            &px,
            &py,
            &params,
            &head,
            ReconMode::Full,
            IvMode::Shared,
            |_| Ok(iv.clone()),
            |_| Ok(iv.clone()),
        )
        .unwrap();
        assert_eq!(once.reconstructions, 6);

        let mut doubled = px.clone();
        doubled.extend(px.iter().cloned());
        let twice = paragraph_predict(
            &doubled,
            &py,
            &params,
            &head,
            ReconMode::Full,
            IvMode::Shared,
            |_| Ok(iv.clone()),
            |_| Ok(iv.clone()),
        )
        .unwrap();
        assert_eq!(twice.reconstructions, 12);
        for (a, b) in once.distribution.iter().zip(&twice.distribution) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn empty_paragraph_lists_are_rejected() {
        let params = tiny_store_params(2);
        let mut r = rng(7);
        let head = MatchHeadParams::bilinear(2, 3, &mut r).unwrap();
        let err = paragraph_predict(
            &[],
            &[vec![0.0, 0.0]],
            &params,
            &head,
            ReconMode::Full,
            IvMode::Shared,
            |_| Ok(vec![0.0, 0.0]),
            |_| Ok(vec![0.0, 0.0]),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
    }

    #[test]
    fn mismatched_input_dims_are_shape_errors() {
        let mut r = rng(8);
        let head = MatchHeadParams::concat_mlp(3, 3, 4, false, &mut r).unwrap();
        assert!(matches!(
            head.logits(&[1.0, 2.0], &[1.0, 2.0, 3.0]),
            Err(Error::Shape(_))
        ));
    }
}
