//! Small multi-layer perceptrons: affine layers with per-layer
//! activations, Xavier-uniform initialization, and named tensor views.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::matrix::{stable_sigmoid, DenseMatrix};
use crate::numcore::params::{TensorMut, TensorRef};
use crate::numcore::tape::{NodeId, Tape};

/// Pointwise activation applied after a layer's affine map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => stable_sigmoid(x),
            Activation::Identity => x,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Identity => "identity",
        }
    }
}

/// One affine layer followed by its activation.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl LinearLayer {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weight.rows() {
            return Err(Error::Shape(format!(
                "bias length {} does not match {} output rows",
                bias.len(),
                weight.rows()
            )));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }
}

/// An ordered stack of layers with compatible dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    layers: Vec<LinearLayer>,
}

impl MlpParams {
    pub fn new(layers: Vec<LinearLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("mlp needs at least one layer".into()));
        }
        for w in layers.windows(2) {
            if w[1].weight.cols() != w[0].weight.rows() {
                return Err(Error::Shape(format!(
                    "layer output {} feeds layer input {}",
                    w[0].weight.rows(),
                    w[1].weight.cols()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// Xavier-uniform weights in ±sqrt(6/(fan_in+fan_out)), zero biases.
    /// `dims` lists input then each layer's output width.
    pub fn xavier(dims: &[usize], activations: &[Activation], rng: &mut impl Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::Config(format!(
                "{} dims need {} activations, got {}",
                dims.len(),
                dims.len().saturating_sub(1),
                activations.len()
            )));
        }
        let mut layers = Vec::with_capacity(activations.len());
        for (k, &act) in activations.iter().enumerate() {
            let (fan_in, fan_out) = (dims[k], dims[k + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = DenseMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.random_range(-limit..limit)
            });
            layers.push(LinearLayer {
                weight,
                bias: vec![0.0; fan_out],
                activation: act,
            });
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[LinearLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [LinearLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().weight.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.data().len() + l.bias.len())
            .sum()
    }

    /// Evaluates the stack on `input`.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "mlp input length {} expected {}",
                input.len(),
                self.input_dim()
            )));
        }
        let mut x = input.to_vec();
        for layer in &self.layers {
            let mut y = layer.weight.matvec(&x)?;
            for (yi, b) in y.iter_mut().zip(&layer.bias) {
                *yi = layer.activation.apply(*yi + b);
            }
            x = y;
        }
        Ok(x)
    }

    /// Named views over every tensor, in a stable order.
    pub fn tensor_refs(&self, prefix: &str) -> Vec<TensorRef<'_>> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (k, layer) in self.layers.iter().enumerate() {
            out.push(TensorRef {
                name: format!("{prefix}.l{k}.w"),
                dims: vec![layer.weight.rows(), layer.weight.cols()],
                data: layer.weight.data(),
            });
            out.push(TensorRef {
                name: format!("{prefix}.l{k}.b"),
                dims: vec![layer.bias.len()],
                data: &layer.bias,
            });
        }
        out
    }

    /// Mutable counterpart of [`tensor_refs`](Self::tensor_refs), same order.
    pub fn tensor_muts(&mut self, prefix: &str) -> Vec<TensorMut<'_>> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (k, layer) in self.layers.iter_mut().enumerate() {
            let rows = layer.weight.rows();
            let cols = layer.weight.cols();
            out.push(TensorMut {
                name: format!("{prefix}.l{k}.w"),
                dims: vec![rows, cols],
                data: layer.weight.data_mut(),
            });
            out.push(TensorMut {
                name: format!("{prefix}.l{k}.b"),
                dims: vec![layer.bias.len()],
                data: &mut layer.bias,
            });
        }
        out
    }
}

/// Evaluates `params` on `input`.
pub fn mlp_forward(params: &MlpParams, input: &[f64]) -> Result<Vec<f64>> {
    params.forward(input)
}

/// Creates tape leaves for every layer, as (weight, bias) pairs in
/// layer order.
pub fn bind_mlp(tape: &mut Tape, mlp: &MlpParams) -> Vec<(NodeId, NodeId)> {
    mlp.layers()
        .iter()
        .map(|l| (tape.matrix_leaf(&l.weight), tape.leaf(&l.bias)))
        .collect()
}

/// Records the stack on the tape against previously bound leaves.
pub fn mlp_on_tape(
    tape: &mut Tape,
    mlp: &MlpParams,
    leaves: &[(NodeId, NodeId)],
    input: NodeId,
) -> Result<NodeId> {
    if leaves.len() != mlp.layers().len() {
        return Err(Error::Shape(format!(
            "{} layer bindings for {} layers",
            leaves.len(),
            mlp.layers().len()
        )));
    }
    let mut x = input;
    for (layer, (w, b)) in mlp.layers().iter().zip(leaves) {
        let y = tape.matvec(*w, x)?;
        let yb = tape.add(y, *b)?;
        x = match layer.activation {
            Activation::Tanh => tape.tanh(yb),
            Activation::Sigmoid => tape.sigmoid(yb),
            Activation::Identity => yb,
        };
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_layer_passes_input_through() {
        let mlp = MlpParams::new(vec![LinearLayer::new(
            DenseMatrix::identity(2),
            vec![0.0, 0.0],
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        assert_eq!(mlp_forward(&mlp, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weights_yield_activated_bias() {
        let mlp = MlpParams::new(vec![LinearLayer::new(
            DenseMatrix::zeros(2, 3),
            vec![0.5, -2.0],
            Activation::Tanh,
        )
        .unwrap()])
        .unwrap();
        let y = mlp_forward(&mlp, &[9.0, -3.0, 7.0]).unwrap();
        assert_eq!(y, vec![0.5_f64.tanh(), (-2.0_f64).tanh()]);
    }

    #[test]
    fn tanh_saturates_for_huge_weight() {
        let mlp = MlpParams::new(vec![LinearLayer::new(
            DenseMatrix::new(1, 1, vec![1000.0]).unwrap(),
            vec![0.0],
            Activation::Tanh,
        )
        .unwrap()])
        .unwrap();
        let y = mlp_forward(&mlp, &[1.0]).unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn forward_is_pure() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mlp = MlpParams::xavier(
            &[4, 8, 3],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let x = [0.3, -1.2, 0.0, 2.5];
        let a = mlp.forward(&x).unwrap();
        let b = mlp.forward(&x).unwrap();
        for (u, v) in a.iter().zip(&b) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
    }

    #[test]
    fn xavier_respects_limit_and_zero_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mlp = MlpParams::xavier(&[10, 6], &[Activation::Identity], &mut rng).unwrap();
        let limit = (6.0 / 16.0_f64).sqrt();
        let layer = &mlp.layers()[0];
        assert!(layer.weight.data().iter().all(|w| w.abs() < limit));
        assert!(layer.bias.iter().all(|b| *b == 0.0));
    }

    #[test]
    fn mismatched_dims_rejected() {
        let l0 = LinearLayer::new(DenseMatrix::zeros(3, 2), vec![0.0; 3], Activation::Tanh)
            .unwrap();
        let l1 = LinearLayer::new(DenseMatrix::zeros(1, 4), vec![0.0], Activation::Identity)
            .unwrap();
        assert!(matches!(MlpParams::new(vec![l0, l1]), Err(Error::Shape(_))));
    }

    #[test]
    fn recorded_forward_matches_eager_forward_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let mlp = MlpParams::xavier(
            &[4, 6, 2],
            &[Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let x = [0.37, -1.52, 0.0, 2.01];
        let eager = mlp.forward(&x).unwrap();

        let mut tape = Tape::new();
        let leaves = bind_mlp(&mut tape, &mlp);
        let xl = tape.leaf(&x);
        let out = mlp_on_tape(&mut tape, &mlp, &leaves, xl).unwrap();
        for (a, b) in tape.value(out).iter().zip(&eager) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn tensor_views_cover_all_params_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mlp = MlpParams::xavier(
            &[3, 5, 2],
            &[Activation::Tanh, Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let refs = mlp.tensor_refs("p");
        let names: Vec<&str> = refs.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["p.l0.w", "p.l0.b", "p.l1.w", "p.l1.b"]);
        let total: usize = refs.iter().map(|r| r.data.len()).sum();
        assert_eq!(total, mlp.param_count());
    }
}
