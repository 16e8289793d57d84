//! Fully connected ReLU networks with exact weights.

use alloc::format;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::exact::{Matrix, Scalar};

/// One affine map `x -> W x + b`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct AffineLayer {
    weights: Matrix,
    bias: Vec<Scalar>,
}

impl AffineLayer {
    pub fn new(weights: Matrix, bias: Vec<Scalar>) -> Result<AffineLayer> {
        if weights.rows() != bias.len() {
            return Err(Error::DimensionMismatch { expected: weights.rows(), found: bias.len() });
        }
        Ok(AffineLayer { weights, bias })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn bias(&self) -> &[Scalar] {
        &self.bias
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn apply(&self, x: &[Scalar]) -> Result<Vec<Scalar>> {
        let mut y = self.weights.mul_vec(x)?;
        for (v, b) in y.iter_mut().zip(&self.bias) {
            *v += b;
        }
        Ok(y)
    }
}

/// Neuron `(index, layer)`, both 1-based. Layer `L+1` is the output layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NeuronId {
    pub layer: usize,
    pub index: usize,
}

impl NeuronId {
    pub fn new(layer: usize, index: usize) -> NeuronId {
        NeuronId { layer, index }
    }
}

/// `T_{L+1} ∘ σ ∘ T_L ∘ … ∘ σ ∘ T_1` with `σ` the componentwise ReLU.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ReluNetwork {
    layers: Vec<AffineLayer>,
}

pub(crate) fn relu_in_place(v: &mut [Scalar]) {
    for x in v {
        if x.is_negative() {
            x.set_zero();
        }
    }
}

impl ReluNetwork {
    /// Layers are numbered from 1 in error messages.
    pub fn new(layers: Vec<AffineLayer>) -> Result<ReluNetwork> {
        if layers.is_empty() {
            return Err(Error::LayerShape { layer: 0, detail: "network has no layers".into() });
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[1].in_dim() != pair[0].out_dim() {
                return Err(Error::LayerShape {
                    layer: i + 2,
                    detail: format!(
                        "expects {} inputs but layer {} has {} outputs",
                        pair[1].in_dim(),
                        i + 1,
                        pair[0].out_dim()
                    ),
                });
            }
        }
        Ok(ReluNetwork { layers })
    }

    pub fn layers(&self) -> &[AffineLayer] {
        &self.layers
    }

    /// `(n_0, …, n_{L+1})`.
    pub fn architecture(&self) -> Vec<usize> {
        let mut a = Vec::with_capacity(self.layers.len() + 1);
        a.push(self.layers[0].in_dim());
        a.extend(self.layers.iter().map(AffineLayer::out_dim));
        a
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim()
    }

    /// Number of hidden layers `L`.
    pub fn depth(&self) -> usize {
        self.layers.len() - 1
    }

    pub fn require_scalar_output(&self) -> Result<()> {
        match self.output_dim() {
            1 => Ok(()),
            n => Err(Error::VectorOutput(n)),
        }
    }

    pub fn eval(&self, x: &[Scalar]) -> Result<Vec<Scalar>> {
        let mut a = x.to_vec();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            a = layer.apply(&a)?;
            if i < last {
                relu_in_place(&mut a);
            }
        }
        Ok(a)
    }

    /// Value of neuron `id` before its activation.
    pub fn eval_preactivation(&self, id: NeuronId, x: &[Scalar]) -> Result<Scalar> {
        let bad = Error::InvalidNeuron { layer: id.layer, index: id.index };
        if id.layer == 0 || id.layer > self.layers.len() {
            return Err(bad);
        }
        let layer = &self.layers[id.layer - 1];
        if id.index == 0 || id.index > layer.out_dim() {
            return Err(bad);
        }
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch { expected: self.input_dim(), found: x.len() });
        }
        let mut a = x.to_vec();
        for l in &self.layers[..id.layer - 1] {
            a = l.apply(&a)?;
            relu_in_place(&mut a);
        }
        let row = layer.weights.row(id.index - 1);
        Ok(crate::exact::dot(row, &a)? + &layer.bias[id.index - 1])
    }

    /// `outer ∘ inner`, fusing inner's last affine map into outer's first.
    pub fn compose(outer: &ReluNetwork, inner: &ReluNetwork) -> Result<ReluNetwork> {
        if outer.input_dim() != inner.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: outer.input_dim(),
                found: inner.output_dim(),
            });
        }
        let (inner_last, inner_rest) = inner.layers.split_last().unwrap();
        let (outer_first, outer_rest) = outer.layers.split_first().unwrap();
        let weights = outer_first.weights.mul(&inner_last.weights)?;
        let bias = outer_first.apply(&inner_last.bias)?;
        let mut layers = inner_rest.to_vec();
        layers.push(AffineLayer::new(weights, bias)?);
        layers.extend(outer_rest.iter().cloned());
        ReluNetwork::new(layers)
    }

    /// Adds `b` to every output bias.
    pub fn with_output_offset(&self, b: &Scalar) -> ReluNetwork {
        let mut net = self.clone();
        let last = net.layers.last_mut().unwrap();
        for v in &mut last.bias {
            *v += b;
        }
        net
    }

    /// All weights and biases, layer by layer, weights row-major before biases.
    pub fn parameters(&self) -> Vec<Scalar> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend(l.weights.entries().iter().cloned());
            out.extend(l.bias.iter().cloned());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.out_dim() * (l.in_dim() + 1)).sum()
    }

    /// Same shape, new parameters in the order of [`ReluNetwork::parameters`].
    pub fn with_parameters(&self, params: &[Scalar]) -> Result<ReluNetwork> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                found: params.len(),
            });
        }
        let mut rest = params;
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            let (w, tail) = rest.split_at(l.out_dim() * l.in_dim());
            let (b, tail) = tail.split_at(l.out_dim());
            rest = tail;
            layers.push(AffineLayer::new(Matrix::new(l.out_dim(), l.in_dim(), w.to_vec())?, b.to_vec())?);
        }
        ReluNetwork::new(layers)
    }

    /// Widens hidden layers to `architecture` with inert zero neurons.
    pub fn pad_to_architecture(&self, architecture: &[usize]) -> Result<ReluNetwork> {
        let current = self.architecture();
        if architecture.len() != current.len() {
            return Err(Error::DimensionMismatch { expected: current.len(), found: architecture.len() });
        }
        let last = current.len() - 1;
        for (i, (&want, &have)) in architecture.iter().zip(&current).enumerate() {
            let fixed = i == 0 || i == last;
            if (fixed && want != have) || want < have {
                return Err(Error::LayerShape {
                    layer: i,
                    detail: format!("cannot pad width {have} to {want}"),
                });
            }
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.iter().enumerate() {
            let (rows, cols) = (architecture[i + 1], architecture[i]);
            let mut w = Matrix::zeros(rows, cols);
            for r in 0..l.out_dim() {
                for c in 0..l.in_dim() {
                    w.set(r, c, l.weights.get(r, c).clone());
                }
            }
            let mut b = alloc::vec![Scalar::zero(); rows];
            b[..l.out_dim()].clone_from_slice(&l.bias);
            layers.push(AffineLayer::new(w, b)?);
        }
        ReluNetwork::new(layers)
    }
}
