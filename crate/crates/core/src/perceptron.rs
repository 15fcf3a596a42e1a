//! Feed-forward networks: topology, activations, forward propagation, and
//! the cross-entropy cost.
//!
//! A network with layer sizes `[s1, ..., sL]` holds one weight matrix per
//! adjacent layer pair; `weights[l]` has shape `s_{l+2} x s_{l+1}` (0-based
//! `l`), mapping layer `l`'s activation column to layer `l+1`'s
//! pre-activations. There are **no bias units by default** — activations are
//! exactly `g(theta * a)` — which is why zero initialisation famously leaves
//! every hidden unit identical (see the symmetry tests in [`crate::training`]).
//! An opt-in `bias` flag augments each layer input with a constant 1 and adds
//! a leading bias column to each weight matrix; bias columns are excluded
//! from the regularizer.
//!
//! The hidden layers use one configurable activation; the output layer is
//! always the logistic sigmoid, because the outputs are read as like
//! probabilities and the cost is cross-entropy. A single-weight-layer
//! topology like `[n, 1]` therefore *is* logistic regression.

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};

/// Lower clamp applied to `h` (and `1 - h`) inside the cost only, so that a
/// saturated prediction yields a large finite cost instead of infinity.
/// Forward propagation itself never clamps.
pub const COST_CLAMP: f64 = 1e-12;

/// The logistic sigmoid `1 / (1 + e^(-z))`. This is the single definition
/// used by network output layers and by the matrix-factorization baseline's
/// prediction, so the two agree bit-for-bit on identical inputs.
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Layer sizes from input to output; at least two layers, every size >= 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    sizes: Vec<usize>,
}

impl Topology {
    pub fn new(sizes: Vec<usize>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::InvalidConfig(format!(
                "a topology needs at least an input and an output layer, got {sizes:?}"
            )));
        }
        if sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "every layer must have at least one unit, got {sizes:?}"
            )));
        }
        Ok(Topology { sizes })
    }

    /// Parse `"3,4,1"`-style comma-separated layer sizes.
    pub fn parse(s: &str) -> Result<Self> {
        let sizes = s
            .split(',')
            .map(|part| {
                part.trim().parse::<usize>().map_err(|_| {
                    Error::InvalidConfig(format!("invalid topology `{s}`: `{part}` is not a count"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Topology::new(sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Number of layers, inputs included.
    pub fn layer_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().unwrap()
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let parts: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        f.write_str(&parts.join(","))
    }
}

/// Hidden-layer activation functions. The output layer ignores this and is
/// always sigmoid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Relu,
}

impl ActivationKind {
    /// `g(z)`.
    pub fn activate(self, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => sigmoid(z),
            ActivationKind::Tanh => z.tanh(),
            ActivationKind::Relu => z.max(0.0),
        }
    }

    /// `g'` expressed through the already-computed activation `a = g(z)`
    /// where possible: `a(1-a)` for sigmoid, `1 - a^2` for tanh, and the
    /// step `1 if z > 0 else 0` for relu (the kink at 0 maps to 0).
    pub fn derivative(self, a: f64, z: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => a * (1.0 - a),
            ActivationKind::Tanh => 1.0 - a * a,
            ActivationKind::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Relu => "relu",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "sigmoid" => Ok(ActivationKind::Sigmoid),
            "tanh" => Ok(ActivationKind::Tanh),
            "relu" => Ok(ActivationKind::Relu),
            other => Err(Error::InvalidConfig(format!(
                "unknown activation `{other}` (expected sigmoid, tanh, or relu)"
            ))),
        }
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Everything that fixes a network's architecture (but not its weights).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    pub topology: Topology,
    pub activation: ActivationKind,
    /// Augment every layer input with a constant 1 and give each weight
    /// matrix a leading bias column. Off by default throughout the crate.
    pub bias: bool,
}

impl NetworkSpec {
    pub fn new(topology: Topology, activation: ActivationKind) -> Self {
        NetworkSpec {
            topology,
            activation,
            bias: false,
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    /// Expected shape of `weights[l]`: `(sizes[l+1], sizes[l] + bias)`.
    pub fn weight_shape(&self, l: usize) -> (usize, usize) {
        let sizes = self.topology.sizes();
        (sizes[l + 1], sizes[l] + usize::from(self.bias))
    }

    /// Number of weight matrices (`layer_count - 1`).
    pub fn weight_layers(&self) -> usize {
        self.topology.layer_count() - 1
    }
}

/// A concrete network: a spec plus one weight matrix per layer pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    weights: Vec<Matrix>,
}

impl Network {
    /// Assemble a network from explicit weights, validating every shape.
    pub fn new(spec: NetworkSpec, weights: Vec<Matrix>) -> Result<Self> {
        if weights.len() != spec.weight_layers() {
            return Err(Error::InvalidDimensions {
                op: "Network::new",
                detail: format!(
                    "topology {} needs {} weight matrices, got {}",
                    spec.topology,
                    spec.weight_layers(),
                    weights.len()
                ),
            });
        }
        for (l, w) in weights.iter().enumerate() {
            let (rows, cols) = spec.weight_shape(l);
            if (w.rows(), w.cols()) != (rows, cols) {
                return Err(Error::InvalidDimensions {
                    op: "Network::new",
                    detail: format!(
                        "weight layer {l} must be {rows}x{cols} for topology {}, got {}x{}",
                        spec.topology,
                        w.rows(),
                        w.cols()
                    ),
                });
            }
        }
        Ok(Network { spec, weights })
    }

    /// The all-zero network for a spec.
    pub fn zeros(spec: NetworkSpec) -> Self {
        let weights = (0..spec.weight_layers())
            .map(|l| {
                let (rows, cols) = spec.weight_shape(l);
                Matrix::zeros(rows, cols)
            })
            .collect();
        Network { spec, weights }
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn topology(&self) -> &Topology {
        &self.spec.topology
    }

    pub fn activation(&self) -> ActivationKind {
        self.spec.activation
    }

    pub fn bias(&self) -> bool {
        self.spec.bias
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn weight(&self, l: usize) -> &Matrix {
        &self.weights[l]
    }

    /// Replace layer `l`'s weights; the shape must not change.
    pub fn set_weight(&mut self, l: usize, w: Matrix) {
        assert_eq!(
            (w.rows(), w.cols()),
            (self.weights[l].rows(), self.weights[l].cols()),
            "set_weight must preserve the layer shape"
        );
        self.weights[l] = w;
    }

    /// Mutable access for in-place updates that keep shapes fixed.
    pub fn weights_mut(&mut self) -> &mut [Matrix] {
        &mut self.weights
    }

    /// Sum over layers of the squared Frobenius norm of the weights,
    /// excluding bias columns — exactly the quantity the regularizer and the
    /// weight-shrinkage experiments measure.
    pub fn sum_squared_weights(&self) -> f64 {
        let skip = usize::from(self.spec.bias);
        let mut total = 0.0;
        for w in &self.weights {
            for r in 0..w.rows() {
                for c in skip..w.cols() {
                    let v = w.get(r, c);
                    total += v * v;
                }
            }
        }
        total
    }

    /// The activation fed into weight layer `l`: the layer activation,
    /// bias-augmented with a leading 1 when the spec says so.
    pub(crate) fn layer_input(&self, a: &Vector) -> Vector {
        if self.spec.bias {
            let mut data = Vec::with_capacity(a.dim() + 1);
            data.push(1.0);
            data.extend_from_slice(a.as_slice());
            Vector::new(data)
        } else {
            a.clone()
        }
    }

    /// Forward propagation, keeping every layer's activation for backprop.
    pub fn forward(&self, x: &Vector) -> Result<ForwardTrace> {
        if x.dim() != self.spec.topology.input_size() {
            return Err(Error::LengthMismatch {
                op: "forward",
                left: self.spec.topology.input_size(),
                right: x.dim(),
            });
        }
        let last = self.weights.len() - 1;
        let mut activations = Vec::with_capacity(self.spec.topology.layer_count());
        activations.push(x.clone());
        for (l, w) in self.weights.iter().enumerate() {
            let input = self.layer_input(&activations[l]);
            let z = w.mul_vector(&input)?;
            let kind = if l == last {
                ActivationKind::Sigmoid
            } else {
                self.spec.activation
            };
            let a = Vector::new(z.iter().map(|&zi| kind.activate(zi)).collect());
            activations.push(a);
        }
        Ok(ForwardTrace { activations })
    }
}

/// The per-layer activations of one forward pass; `activations[0]` is the
/// input, the last entry is the output `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    activations: Vec<Vector>,
}

impl ForwardTrace {
    pub fn activations(&self) -> &[Vector] {
        &self.activations
    }

    /// The output activation `h(x)`.
    pub fn output(&self) -> &Vector {
        self.activations.last().unwrap()
    }
}

/// Cross-entropy cost of one output unit: `-y ln h - (1-y) ln(1-h)`, with
/// `h` clamped into `[COST_CLAMP, 1 - COST_CLAMP]` so saturated predictions
/// stay finite.
pub fn example_cost(h: f64, y: f64) -> f64 {
    let h = h.clamp(COST_CLAMP, 1.0 - COST_CLAMP);
    -(y * h.ln() + (1.0 - y) * (1.0 - h).ln())
}

/// Mean cross-entropy cost over a non-empty example set, summed over output
/// units: `-(1/m) sum_i sum_k [y ln h + (1-y) ln(1-h)]`.
pub fn total_cost(net: &Network, examples: &[(Vector, Vector)]) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::EmptyInput("total_cost needs at least one example"));
    }
    let k = net.topology().output_size();
    let mut sum = 0.0;
    for (x, y) in examples {
        if y.dim() != k {
            return Err(Error::LengthMismatch {
                op: "total_cost: label width",
                left: k,
                right: y.dim(),
            });
        }
        let trace = net.forward(x)?;
        let h = trace.output();
        for unit in 0..k {
            sum += example_cost(h.get(unit), y.get(unit));
        }
    }
    Ok(sum / examples.len() as f64)
}

/// [`total_cost`] plus the L2 penalty `lambda / (2m) * sum of squared
/// weights` (bias columns excluded).
pub fn total_cost_regularized(
    net: &Network,
    examples: &[(Vector, Vector)],
    lambda: f64,
) -> Result<f64> {
    let unregularized = total_cost(net, examples)?;
    let m = examples.len() as f64;
    Ok(unregularized + lambda / (2.0 * m) * net.sum_squared_weights())
}
