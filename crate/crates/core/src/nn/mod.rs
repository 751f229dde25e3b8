//! Dense feed-forward networks with reverse-mode gradients.
//!
//! A [`Network`] is a stack of affine layers, each followed by an
//! elementwise [`Activation`]. Forward passes over a batch record a
//! [`Tape`] of layer inputs and pre-activations; the backward pass walks it
//! in reverse and yields parameter gradients and the gradient with respect
//! to the network input. The input gradient is what lets the actor loss
//! differentiate through a critic without touching the critic's weights.
//!
//! Networks are generic over the float type. Agents run in `f32`; gradient
//! checks run in `f64`.

mod checkpoint;
mod optim;

use std::fmt::Debug;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis, LinalgScalar, ScalarOperand, Zip};
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::prob::RngStream;
use crate::{Error, Result};

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use optim::{
    adam_step, adam_step_in_place, polyak_update, polyak_update_in_place, AdamConfig, AdamState,
};

pub trait Scalar:
    Float + LinalgScalar + ScalarOperand + Debug + Default + Send + Sync + 'static
{
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Softplus,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Relu => z.max(F::zero()),
            Activation::Tanh => z.tanh(),
            Activation::Softplus => softplus(z),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `a`.
    #[inline]
    fn derivative<F: Scalar>(self, z: F, a: F) -> F {
        match self {
            Activation::Relu => {
                if z > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Tanh => F::one() - a * a,
            Activation::Softplus => sigmoid(z),
            Activation::Identity => F::one(),
        }
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus<F: Scalar>(z: F) -> F {
    z.max(F::zero()) + (-z.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid<F: Scalar>(z: F) -> F {
    F::one() / (F::one() + (-z).exp())
}

/// A named, shaped array of parameters stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    pub fn zeros(name: impl Into<String>, shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            name: name.into(),
            shape,
            data: vec![F::zero(); len],
        }
    }
}

/// Named parameter arrays. Shapes are fixed once constructed.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<F> {
    tensors: Vec<Tensor<F>>,
}

/// Gradients share the parameter layout.
pub type Gradient<F> = ParameterSet<F>;

impl<F: Scalar> ParameterSet<F> {
    pub fn new(tensors: Vec<Tensor<F>>) -> Self {
        Self { tensors }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            tensors: other
                .tensors
                .iter()
                .map(|t| Tensor::zeros(t.name.clone(), t.shape.clone()))
                .collect(),
        }
    }

    pub fn tensors(&self) -> &[Tensor<F>] {
        &self.tensors
    }

    /// Mutable access to the values; shapes stay fixed.
    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut [F]> {
        self.tensors.iter_mut().map(|t| t.data.as_mut_slice())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Same names and shapes, tensor by tensor.
    pub fn is_congruent(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    pub fn iter_values(&self) -> impl Iterator<Item = F> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    pub fn all_finite(&self) -> bool {
        self.iter_values().all(|x| x.is_finite())
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.iter_values()
            .zip(other.iter_values())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Self, scale: F) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x = *x + scale * *y;
            }
        }
    }

    pub fn cast<G: Scalar>(&self) -> ParameterSet<G> {
        ParameterSet {
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|x| G::from_f64(x.as_f64())).collect(),
                })
                .collect(),
        }
    }
}

/// Cached intermediate values of a batched forward pass.
#[derive(Clone, Debug)]
pub struct Tape<F> {
    /// `inputs[l]` is the input to layer `l`; `inputs[0]` is the batch.
    inputs: Vec<Array2<F>>,
    pre: Vec<Array2<F>>,
    output: Array2<F>,
}

impl<F> Tape<F> {
    pub fn output(&self) -> &Array2<F> {
        &self.output
    }

    pub fn input(&self) -> &Array2<F> {
        &self.inputs[0]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<F> {
    sizes: Vec<usize>,
    activations: Vec<Activation>,
    params: ParameterSet<F>,
}

impl<F: Scalar> Network<F> {
    /// A network with all parameters zero. `sizes` lists every layer width
    /// including input and output; `activations` has one entry per layer.
    pub fn zeros(sizes: &[usize], activations: &[Activation]) -> Result<Self> {
        if sizes.len() < 2 || activations.len() != sizes.len() - 1 {
            return Err(Error::config(
                "layers",
                format!(
                    "need at least two sizes and one activation per layer, got {} sizes and {} activations",
                    sizes.len(),
                    activations.len()
                ),
            ));
        }
        if sizes.contains(&0) {
            return Err(Error::config("layers", "layer widths must be positive"));
        }
        let mut tensors = Vec::with_capacity(2 * activations.len());
        for (l, w) in sizes.windows(2).enumerate() {
            tensors.push(Tensor::zeros(format!("layer{l}.weight"), vec![w[1], w[0]]));
            tensors.push(Tensor::zeros(format!("layer{l}.bias"), vec![w[1]]));
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            activations: activations.to_vec(),
            params: ParameterSet::new(tensors),
        })
    }

    /// Uniform fan-in initialisation: weights and biases of layer `l` are
    /// drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(sizes: &[usize], activations: &[Activation], rng: &mut RngStream) -> Result<Self> {
        let mut net = Self::zeros(sizes, activations)?;
        for l in 0..net.num_layers() {
            let bound = 1.0 / (net.sizes[l] as f64).sqrt();
            for t in [2 * l, 2 * l + 1] {
                for x in net.params.tensors[t].data.iter_mut() {
                    *x = F::from_f64(bound * (2.0 * rng.uniform() - 1.0));
                }
            }
        }
        Ok(net)
    }

    /// Builds a network around an existing parameter set, checking layout.
    pub fn from_parts(
        sizes: &[usize],
        activations: &[Activation],
        params: ParameterSet<F>,
    ) -> Result<Self> {
        let template = Self::zeros(sizes, activations)?;
        if !template.params.is_congruent(&params) {
            return Err(Error::Checkpoint(
                "parameter layout does not match layer sizes".into(),
            ));
        }
        Ok(Self { params, ..template })
    }

    /// Multiplies the weights and bias of one layer by `factor`.
    pub fn scale_layer(&mut self, layer: usize, factor: F) {
        for t in [2 * layer, 2 * layer + 1] {
            for x in self.params.tensors[t].data.iter_mut() {
                *x = *x * factor;
            }
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn params(&self) -> &ParameterSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParameterSet<F> {
        &mut self.params
    }

    pub fn num_layers(&self) -> usize {
        self.activations.len()
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn weight(&self, layer: usize) -> ArrayView2<'_, F> {
        let t = &self.params.tensors[2 * layer];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("weight shape")
    }

    pub fn bias(&self, layer: usize) -> ArrayView1<'_, F> {
        ArrayView1::from(&self.params.tensors[2 * layer + 1].data[..])
    }

    fn check_batch(&self, x: &ArrayView2<F>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                context: "network input",
                expected: self.input_dim(),
                actual: x.ncols(),
            });
        }
        Ok(())
    }

    fn affine(&self, layer: usize, x: &ArrayView2<F>) -> Array2<F> {
        let mut z = x.dot(&self.weight(layer).t());
        let b = self.bias(layer);
        for mut row in z.outer_iter_mut() {
            row.zip_mut_with(&b, |v, &bi| *v = *v + bi);
        }
        z
    }

    pub fn forward(&self, input: &[F]) -> Result<Vec<F>> {
        let x = ArrayView2::from_shape((1, input.len()), input).expect("row view");
        Ok(self.forward_batch(x)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass over a batch (one row per sample) without recording.
    pub fn forward_batch(&self, x: ArrayView2<F>) -> Result<Array2<F>> {
        self.check_batch(&x)?;
        let mut a = x.to_owned();
        for (l, act) in self.activations.iter().enumerate() {
            let mut z = self.affine(l, &a.view());
            if *act != Activation::Identity {
                z.mapv_inplace(|v| act.apply(v));
            }
            a = z;
        }
        Ok(a)
    }

    /// Forward pass that records what the backward pass needs.
    pub fn forward_tape(&self, x: Array2<F>) -> Result<Tape<F>> {
        self.check_batch(&x.view())?;
        let layers = self.num_layers();
        let mut inputs = Vec::with_capacity(layers);
        let mut pre = Vec::with_capacity(layers);
        let mut a = x;
        for (l, act) in self.activations.iter().enumerate() {
            let z = self.affine(l, &a.view());
            let out = z.mapv(|v| act.apply(v));
            inputs.push(a);
            pre.push(z);
            a = out;
        }
        Ok(Tape {
            inputs,
            pre,
            output: a,
        })
    }

    /// Reverse pass for the scalar `sum(output_grad * output)`.
    ///
    /// Returns the parameter gradient (when `want_params`) and the gradient
    /// with respect to the batch input.
    pub fn backward_tape(
        &self,
        tape: &Tape<F>,
        output_grad: ArrayView2<F>,
        want_params: bool,
    ) -> Result<(Option<Gradient<F>>, Array2<F>)> {
        if output_grad.dim() != tape.output.dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: tape.output.ncols(),
                actual: output_grad.ncols(),
            });
        }
        let mut grad = want_params.then(|| ParameterSet::zeros_like(&self.params));
        let mut delta = output_grad.to_owned();
        for l in (0..self.num_layers()).rev() {
            let act = self.activations[l];
            let post = if l + 1 < self.num_layers() {
                &tape.inputs[l + 1]
            } else {
                &tape.output
            };
            if act != Activation::Identity {
                Zip::from(&mut delta)
                    .and(&tape.pre[l])
                    .and(post)
                    .for_each(|d, &z, &a| *d = *d * act.derivative(z, a));
            }
            if let Some(g) = grad.as_mut() {
                let dw = delta.t().dot(&tape.inputs[l]);
                let db = delta.sum_axis(Axis(0));
                for (dst, src) in g.tensors[2 * l].data.iter_mut().zip(dw.iter()) {
                    *dst = *src;
                }
                for (dst, src) in g.tensors[2 * l + 1].data.iter_mut().zip(db.iter()) {
                    *dst = *src;
                }
            }
            delta = delta.dot(&self.weight(l));
        }
        Ok((grad, delta))
    }

    /// Exact gradient of `<output_grad, forward(input)>` with respect to
    /// every parameter.
    pub fn backward(&self, input: &[F], output_grad: &[F]) -> Result<Gradient<F>> {
        if output_grad.len() != self.output_dim() {
            return Err(Error::DimensionMismatch {
                context: "output gradient",
                expected: self.output_dim(),
                actual: output_grad.len(),
            });
        }
        let x = Array2::from_shape_vec((1, input.len()), input.to_vec()).expect("row");
        let tape = self.forward_tape(x)?;
        let g = ArrayView2::from_shape((1, output_grad.len()), output_grad).expect("row");
        let (grad, _) = self.backward_tape(&tape, g, true)?;
        Ok(grad.expect("requested parameter gradient"))
    }

    pub fn cast<G: Scalar>(&self) -> Network<G> {
        Network {
            sizes: self.sizes.clone(),
            activations: self.activations.clone(),
            params: self.params.cast(),
        }
    }
}

/// Packs rows of equal length into a batch matrix.
pub fn stack_rows<F: Scalar>(rows: &[&[F]]) -> Array2<F> {
    let cols = rows.first().map_or(0, |r| r.len());
    let mut out = Array2::zeros((rows.len(), cols));
    for (mut dst, src) in out.outer_iter_mut().zip(rows) {
        dst.assign(&ArrayView1::from(*src));
    }
    out
}
