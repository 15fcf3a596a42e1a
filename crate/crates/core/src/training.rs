//! Gradient-based training for [`Network`]s: backpropagation with
//! regularization folded into the gradients, a central-difference oracle and
//! the normalized-distance gradient check built on it, symmetry-breaking
//! random initialization, and batch / stochastic / mini-batch descent.
//!
//! Conventions that matter for reproducibility:
//!
//! - Gradients are averaged over the examples *actually processed*: a
//!   mini-batch of size `b` divides by `b`, and a final short block divides
//!   by its true size.
//! - The regularization term in each gradient is `(lambda / m) * theta`, the
//!   exact derivative of the `lambda/(2m)` cost penalty. Bias columns, when
//!   present, are excluded — matching the cost they are excluded from.
//! - Stochastic and mini-batch descent reshuffle the examples once per
//!   epoch, deterministically from the run seed and the epoch index, so a
//!   whole run replays bit-for-bit from its config.
//! - The gradient check's probe step (`gradcheck_gamma`) and its acceptance
//!   tolerance (`gradcheck_tolerance`) are separate knobs; both default to
//!   `1e-7`, which is comfortable for double precision on small networks.

use crate::dataset::shuffle_examples;
use crate::error::{Error, Result};
use crate::matrix::{axpy, outer, Matrix, Vector};
use crate::perceptron::{total_cost_regularized, Network, NetworkSpec};
use crate::rng::{derive_seed, rng_from_seed, SeedDomain};
use rand::Rng;
use std::collections::HashSet;

/// One gradient matrix per weight layer, shaped exactly like the network's
/// weights (layer-major, row-major within each matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    per_layer: Vec<Matrix>,
}

impl GradientSet {
    /// Wrap per-layer gradient matrices. Panics on an empty list — a
    /// gradient set always belongs to a network, and networks have at least
    /// one weight layer.
    pub fn from_layers(per_layer: Vec<Matrix>) -> Self {
        assert!(!per_layer.is_empty(), "a gradient set needs at least one layer");
        GradientSet { per_layer }
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.per_layer
    }

    pub fn layer(&self, l: usize) -> &Matrix {
        &self.per_layer[l]
    }

    /// True when every entry of every layer is finite.
    pub fn is_finite(&self) -> bool {
        self.per_layer.iter().all(Matrix::is_finite)
    }
}

/// How examples are grouped into gradient steps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DescentMode {
    /// One step per epoch over the full example set.
    Batch,
    /// One step per example, in a per-epoch shuffled order.
    Stochastic,
    /// One step per consecutive block of `batch_size` shuffled examples.
    MiniBatch,
}

impl DescentMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DescentMode::Batch => "batch",
            DescentMode::Stochastic => "stochastic",
            DescentMode::MiniBatch => "minibatch",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(DescentMode::Batch),
            "stochastic" => Ok(DescentMode::Stochastic),
            "minibatch" => Ok(DescentMode::MiniBatch),
            other => Err(Error::InvalidConfig(format!(
                "unknown descent mode {other:?}; expected batch, stochastic, or minibatch"
            ))),
        }
    }
}

impl std::fmt::Display for DescentMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Whether [`descend`] verifies its first computed gradient numerically.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GradCheckMode {
    Off,
    /// Verify the first gradient of the run, then disable the (slow) check.
    Once,
}

impl GradCheckMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GradCheckMode::Off => "off",
            GradCheckMode::Once => "once",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(GradCheckMode::Off),
            "once" => Ok(GradCheckMode::Once),
            other => Err(Error::InvalidConfig(format!(
                "unknown gradient-check mode {other:?}; expected off or once"
            ))),
        }
    }
}

/// Everything [`descend`] needs beyond the network and the examples.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// Learning rate, strictly positive.
    pub alpha: f64,
    /// Regularization strength, non-negative.
    pub lambda: f64,
    pub mode: DescentMode,
    /// Mini-batch size `b`; only consulted in mini-batch mode, where it must
    /// satisfy `2 <= b <= example count`.
    pub batch_size: usize,
    pub epochs: usize,
    /// Seed for per-epoch shuffling (initialization seeds are derived
    /// separately by the callers that create networks).
    pub seed: u64,
    /// Half-width of the uniform init interval `(-init_bound, init_bound)`.
    pub init_bound: f64,
    pub gradcheck: GradCheckMode,
    /// Central-difference step for the numerical gradient.
    pub gradcheck_gamma: f64,
    /// Largest acceptable normalized distance between analytic and numeric
    /// gradients.
    pub gradcheck_tolerance: f64,
    /// Compute hidden-layer deltas with the logistic derivative `a*(1-a)`
    /// even when the hidden activation is tanh or relu — a hand-derivation
    /// shortcut this crate exposes (behind the CLI's
    /// `--paper-literal-backprop`) precisely so the gradient check can be
    /// shown to catch it.
    pub paper_literal_backprop: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.3,
            lambda: 0.0,
            mode: DescentMode::Batch,
            batch_size: 10,
            epochs: 100,
            seed: 0,
            init_bound: 0.12,
            gradcheck: GradCheckMode::Off,
            gradcheck_gamma: 1e-7,
            gradcheck_tolerance: 1e-7,
            paper_literal_backprop: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha <= 0.0 || !self.alpha.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "learning rate alpha must be finite and > 0, got {}",
                self.alpha
            )));
        }
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "regularization lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if self.init_bound <= 0.0 || !self.init_bound.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "init_bound must be finite and > 0, got {}",
                self.init_bound
            )));
        }
        if self.gradcheck_gamma <= 0.0 || !self.gradcheck_gamma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gradcheck_gamma must be finite and > 0, got {}",
                self.gradcheck_gamma
            )));
        }
        if self.gradcheck_tolerance <= 0.0 || !self.gradcheck_tolerance.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "gradcheck_tolerance must be finite and > 0, got {}",
                self.gradcheck_tolerance
            )));
        }
        if self.mode == DescentMode::MiniBatch && self.batch_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "mini-batch size must be at least 2, got {}",
                self.batch_size
            )));
        }
        Ok(())
    }
}

/// Draw every weight independently and uniformly from
/// `(-bound, bound)`, excluding exactly zero, so that no unit starts as a
/// copy of another. Within each layer the draws are additionally required to
/// be pairwise distinct (a probability-one event; collisions are redrawn).
pub fn random_init(spec: &NetworkSpec, bound: f64, seed: u64) -> Network {
    assert!(bound > 0.0 && bound.is_finite(), "init bound must be positive");
    let mut rng = rng_from_seed(seed);
    let mut weights = Vec::with_capacity(spec.weight_layers());
    for l in 0..spec.weight_layers() {
        let (rows, cols) = spec.weight_shape(l);
        let mut seen = HashSet::with_capacity(rows * cols);
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            let v = loop {
                let v: f64 = rng.gen_range(-bound..bound);
                if v != 0.0 && v > -bound && seen.insert(v.to_bits()) {
                    break v;
                }
            };
            data.push(v);
        }
        weights.push(Matrix::new(rows, cols, data).expect("positive dimensions"));
    }
    Network::new(spec.clone(), weights).expect("shapes built from the spec")
}

/// Backpropagation over a batch: the exact gradient of
/// [`total_cost_regularized`] with respect to every weight.
///
/// Per example the output delta is `h - y`; hidden deltas multiply the
/// back-propagated sum (bias columns excluded — their constant input has no
/// upstream unit) by the configured activation's derivative; each weight
/// layer accumulates the outer product of its output delta with its
/// (bias-augmented) input. The accumulators are divided by the batch size
/// and the regularization derivative `(lambda/m) * theta` is added, skipping
/// bias columns.
pub fn backprop(net: &Network, batch: &[(Vector, Vector)], lambda: f64) -> Result<GradientSet> {
    backprop_impl(net, batch, lambda, false)
}

/// [`backprop`] with the hidden-layer derivative hard-wired to the logistic
/// `a*(1-a)` regardless of the configured activation. For sigmoid hidden
/// layers this is identical to [`backprop`]; for tanh or relu it produces a
/// systematically wrong gradient that [`gradient_check`] flags — which is
/// exactly why it is kept callable.
pub fn backprop_logistic_derivative(
    net: &Network,
    batch: &[(Vector, Vector)],
    lambda: f64,
) -> Result<GradientSet> {
    backprop_impl(net, batch, lambda, true)
}

/// [`backprop`] with the delta vector negated as it reaches weight layer
/// `flip_layer` (0-based; the last weight layer's delta is `h - y` itself).
/// The sign error contaminates that layer's gradient and every gradient
/// below it, while the regularization term keeps its correct sign — exactly
/// what a real sign bug in the backward pass would produce.
///
/// This exists so the verification suite can demonstrate that
/// [`gradient_check`] detects such bugs; it has no other use.
#[doc(hidden)]
pub fn backprop_with_flipped_delta(
    net: &Network,
    batch: &[(Vector, Vector)],
    lambda: f64,
    flip_layer: usize,
) -> Result<GradientSet> {
    assert!(
        flip_layer < net.spec().weight_layers(),
        "flip_layer out of range"
    );
    backprop_full(net, batch, lambda, false, Some(flip_layer))
}

fn backprop_impl(
    net: &Network,
    batch: &[(Vector, Vector)],
    lambda: f64,
    logistic_hidden: bool,
) -> Result<GradientSet> {
    backprop_full(net, batch, lambda, logistic_hidden, None)
}

fn backprop_full(
    net: &Network,
    batch: &[(Vector, Vector)],
    lambda: f64,
    logistic_hidden: bool,
    flip_delta_at: Option<usize>,
) -> Result<GradientSet> {
    if batch.is_empty() {
        return Err(Error::EmptyInput("backprop batch"));
    }
    let spec = net.spec();
    let layers = spec.weight_layers();
    let offset = usize::from(net.bias());
    let mut acc: Vec<Matrix> = (0..layers)
        .map(|l| {
            let (rows, cols) = spec.weight_shape(l);
            Matrix::zeros(rows, cols)
        })
        .collect();

    for (x, y) in batch {
        let trace = net.forward(x)?;
        let activations = trace.activations();
        let h = trace.output();
        if y.dim() != h.dim() {
            return Err(Error::LengthMismatch {
                op: "backprop",
                left: h.dim(),
                right: y.dim(),
            });
        }
        let mut delta = Vector::new(h.iter().zip(y.iter()).map(|(hv, yv)| hv - yv).collect());
        for l in (0..layers).rev() {
            if flip_delta_at == Some(l) {
                delta = Vector::new(delta.iter().map(|v| -v).collect());
            }
            let input = net.layer_input(&activations[l]);
            let contribution = outer(&delta, &input);
            acc[l] = axpy(1.0, &contribution, &acc[l]).expect("congruent shapes");
            if l > 0 {
                let w = net.weight(l);
                let prev = &activations[l];
                let mut next = Vec::with_capacity(prev.dim());
                for (j, &a) in prev.iter().enumerate() {
                    let mut sum = 0.0;
                    for i in 0..delta.dim() {
                        sum += w.get(i, j + offset) * delta.get(i);
                    }
                    // For relu, a = max(0, z) makes the derivative
                    // recoverable from the activation alone: a > 0 iff z > 0.
                    let factor = if logistic_hidden {
                        a * (1.0 - a)
                    } else {
                        net.activation().derivative(a, a)
                    };
                    next.push(sum * factor);
                }
                delta = Vector::new(next);
            }
        }
    }

    let m = batch.len() as f64;
    let per_layer = acc
        .into_iter()
        .enumerate()
        .map(|(l, total)| {
            let mut d = total.scale(1.0 / m);
            if lambda != 0.0 {
                let w = net.weight(l);
                for r in 0..d.rows() {
                    for c in offset..d.cols() {
                        d.set(r, c, d.get(r, c) + (lambda / m) * w.get(r, c));
                    }
                }
            }
            d
        })
        .collect();
    Ok(GradientSet { per_layer })
}

/// Symmetric-difference quotient `(f(at + step) - f(at - step)) / (2 step)`.
pub fn central_difference(mut f: impl FnMut(f64) -> f64, at: f64, step: f64) -> f64 {
    assert!(step > 0.0 && step.is_finite(), "step must be positive");
    (f(at + step) - f(at - step)) / (2.0 * step)
}

/// The central-difference estimate of the regularized-cost gradient: every
/// weight is perturbed by `±gamma` in turn, on a private copy of the
/// network, and the two cost evaluations are differenced.
///
/// This is the slow, independent oracle that [`gradient_check`] compares
/// [`backprop`] against.
pub fn numerical_gradient(
    net: &Network,
    examples: &[(Vector, Vector)],
    lambda: f64,
    gamma: f64,
) -> Result<GradientSet> {
    assert!(gamma > 0.0 && gamma.is_finite(), "gamma must be positive");
    // Validate examples and shapes once, so the per-probe evaluations below
    // cannot fail.
    total_cost_regularized(net, examples, lambda)?;
    let spec = net.spec();
    let mut per_layer = Vec::with_capacity(spec.weight_layers());
    for l in 0..spec.weight_layers() {
        let (rows, cols) = spec.weight_shape(l);
        let mut d = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let at = net.weight(l).get(r, c);
                let mut probe = net.clone();
                let estimate = central_difference(
                    |v| {
                        probe.weights_mut()[l].set(r, c, v);
                        total_cost_regularized(&probe, examples, lambda)
                            .expect("validated above")
                    },
                    at,
                    gamma,
                );
                d.set(r, c, estimate);
            }
        }
        per_layer.push(d);
    }
    Ok(GradientSet { per_layer })
}

/// The normalized distance between two gradient sets:
///
/// ```text
/// epsilon = ||G' - G||_2 / (||G'||_2 + ||G||_2)
/// ```
///
/// flattened layer-major, row-major. Always in `[0, 1]`; two all-zero sets
/// compare as 0. Exact agreement gives 0, and `G' = -G` (with `G` nonzero)
/// gives 1.
pub fn gradient_check(analytic: &GradientSet, numeric: &GradientSet) -> Result<f64> {
    if analytic.per_layer.len() != numeric.per_layer.len() {
        return Err(Error::LengthMismatch {
            op: "gradient_check",
            left: analytic.per_layer.len(),
            right: numeric.per_layer.len(),
        });
    }
    let mut diff_sq = 0.0;
    let mut a_sq = 0.0;
    let mut n_sq = 0.0;
    for (am, nm) in analytic.per_layer.iter().zip(&numeric.per_layer) {
        if am.rows() != nm.rows() || am.cols() != nm.cols() {
            return Err(Error::ShapeMismatch {
                op: "gradient_check",
                left_rows: am.rows(),
                left_cols: am.cols(),
                right_rows: nm.rows(),
                right_cols: nm.cols(),
            });
        }
        for (av, nv) in am.data().iter().zip(nm.data()) {
            diff_sq += (av - nv) * (av - nv);
            a_sq += av * av;
            n_sq += nv * nv;
        }
    }
    let denom = a_sq.sqrt() + n_sq.sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(diff_sq.sqrt() / denom)
}

/// Run gradient descent from `net` under `cfg`, returning the trained
/// network and the regularized total cost after each epoch.
///
/// All three modes step by `theta <- theta - alpha * D` with `D` from
/// [`backprop`] over the mode's batch granularity. When
/// `cfg.gradcheck` is [`GradCheckMode::Once`], the very first gradient of
/// the run is verified against [`numerical_gradient`] and the run aborts
/// with the measured epsilon if it exceeds `cfg.gradcheck_tolerance`; the
/// check never runs again after that, keeping its cost out of the training
/// loop.
pub fn descend(
    net: &Network,
    examples: &[(Vector, Vector)],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::EmptyInput("descend examples"));
    }
    if cfg.mode == DescentMode::MiniBatch && cfg.batch_size > examples.len() {
        return Err(Error::InvalidConfig(format!(
            "mini-batch size {} exceeds the example count {}",
            cfg.batch_size,
            examples.len()
        )));
    }

    let mut net = net.clone();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut checked = cfg.gradcheck == GradCheckMode::Off;
    for epoch in 0..cfg.epochs {
        match cfg.mode {
            DescentMode::Batch => {
                let grads = compute_gradients(&net, examples, cfg)?;
                verify_first_gradient(&mut checked, &net, examples, cfg, &grads)?;
                apply_step(&mut net, &grads, cfg.alpha);
            }
            DescentMode::Stochastic => {
                let order = shuffle_examples(
                    examples,
                    derive_seed(cfg.seed, SeedDomain::EpochShuffle, epoch as u64),
                );
                for example in &order {
                    let single = std::slice::from_ref(example);
                    let grads = compute_gradients(&net, single, cfg)?;
                    verify_first_gradient(&mut checked, &net, single, cfg, &grads)?;
                    apply_step(&mut net, &grads, cfg.alpha);
                }
            }
            DescentMode::MiniBatch => {
                let order = shuffle_examples(
                    examples,
                    derive_seed(cfg.seed, SeedDomain::EpochShuffle, epoch as u64),
                );
                for block in order.chunks(cfg.batch_size) {
                    let grads = compute_gradients(&net, block, cfg)?;
                    verify_first_gradient(&mut checked, &net, block, cfg, &grads)?;
                    apply_step(&mut net, &grads, cfg.alpha);
                }
            }
        }
        let cost = total_cost_regularized(&net, examples, cfg.lambda)?;
        if !cost.is_finite() {
            return Err(Error::Diverged {
                unit: "epoch",
                index: epoch,
            });
        }
        history.push(cost);
    }
    Ok((net, history))
}

fn compute_gradients(
    net: &Network,
    batch: &[(Vector, Vector)],
    cfg: &TrainConfig,
) -> Result<GradientSet> {
    if cfg.paper_literal_backprop {
        backprop_logistic_derivative(net, batch, cfg.lambda)
    } else {
        backprop(net, batch, cfg.lambda)
    }
}

fn verify_first_gradient(
    checked: &mut bool,
    net: &Network,
    batch: &[(Vector, Vector)],
    cfg: &TrainConfig,
    grads: &GradientSet,
) -> Result<()> {
    if *checked {
        return Ok(());
    }
    *checked = true;
    let numeric = numerical_gradient(net, batch, cfg.lambda, cfg.gradcheck_gamma)?;
    let epsilon = gradient_check(grads, &numeric)?;
    if epsilon > cfg.gradcheck_tolerance {
        return Err(Error::GradCheckFailed {
            epsilon,
            tolerance: cfg.gradcheck_tolerance,
        });
    }
    Ok(())
}

fn apply_step(net: &mut Network, grads: &GradientSet, alpha: f64) {
    for l in 0..grads.per_layer.len() {
        let updated = axpy(-alpha, grads.layer(l), net.weight(l)).expect("congruent shapes");
        net.set_weight(l, updated);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceptron::{sigmoid, total_cost, ActivationKind, Topology};
    use rand::Rng;

    fn spec(sizes: &[usize], activation: ActivationKind, bias: bool) -> NetworkSpec {
        NetworkSpec::new(Topology::new(sizes.to_vec()).unwrap(), activation).with_bias(bias)
    }

    fn random_net(sizes: &[usize], activation: ActivationKind, bias: bool, seed: u64) -> Network {
        random_init(&spec(sizes, activation, bias), 0.5, seed)
    }

    fn random_examples(n: usize, inputs: usize, outputs: usize, seed: u64) -> Vec<(Vector, Vector)> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let x = Vector::new((0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect());
                let y = Vector::new((0..outputs).map(|_| f64::from(rng.gen_range(0..2))).collect());
                (x, y)
            })
            .collect()
    }

    /// Linearly-structured labels in `inputs` dimensions: the sign of a
    /// fixed hyperplane with a small margin carved out. With `noisy` set,
    /// every twelfth label is flipped so the problem has a positive-cost
    /// optimum.
    fn hyperplane_examples(n: usize, inputs: usize, seed: u64, noisy: bool) -> Vec<(Vector, Vector)> {
        let weights: Vec<f64> = (0..inputs)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.5 })
            .collect();
        let mut rng = rng_from_seed(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let x: Vec<f64> = (0..inputs).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let score: f64 = weights.iter().zip(&x).map(|(w, v)| w * v).sum();
            if score.abs() < 0.1 {
                continue;
            }
            let mut label = f64::from(score > 0.0);
            if noisy && out.len() % 12 == 5 {
                label = 1.0 - label;
            }
            out.push((Vector::new(x), Vector::new(vec![label])));
        }
        out
    }

    fn near_separable_examples(n: usize, inputs: usize, seed: u64) -> Vec<(Vector, Vector)> {
        hyperplane_examples(n, inputs, seed, true)
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let s = spec(&[3, 4, 1], ActivationKind::Sigmoid, false);
        assert_eq!(random_init(&s, 0.12, 7), random_init(&s, 0.12, 7));
        assert_ne!(random_init(&s, 0.12, 7), random_init(&s, 0.12, 8));
    }

    #[test]
    fn init_stays_inside_the_open_interval_and_avoids_zero() {
        let s = spec(&[6, 8, 3], ActivationKind::Sigmoid, true);
        let net = random_init(&s, 0.12, 3);
        for w in net.weights() {
            for &v in w.data() {
                assert!(v > -0.12 && v < 0.12 && v != 0.0, "bad init value {v}");
            }
        }
    }

    #[test]
    fn init_draws_are_distinct_within_each_layer() {
        let net = random_net(&[10, 12, 4], ActivationKind::Sigmoid, false, 11);
        for w in net.weights() {
            let mut seen = HashSet::new();
            for &v in w.data() {
                assert!(seen.insert(v.to_bits()), "duplicate init value {v}");
            }
        }
    }

    #[test]
    fn init_respects_bias_augmented_shapes() {
        let net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, true, 2);
        assert_eq!((net.weight(0).rows(), net.weight(0).cols()), (4, 4));
        assert_eq!((net.weight(1).rows(), net.weight(1).cols()), (1, 5));
    }

    #[test]
    fn single_layer_backprop_is_the_logistic_regression_gradient() {
        let net = random_net(&[4, 1], ActivationKind::Sigmoid, false, 5);
        let x = Vector::new(vec![0.3, -1.2, 0.8, 0.1]);
        let y = Vector::new(vec![1.0]);
        let h = net.forward(&x).unwrap().output().get(0);
        let grads = backprop(&net, &[(x.clone(), y)], 0.0).unwrap();
        for k in 0..4 {
            assert_eq!(grads.layer(0).get(0, k), (h - 1.0) * x.get(k));
        }
    }

    #[test]
    fn zero_network_gradients_are_equal_across_each_row() {
        // With all-zero weights every hidden unit is interchangeable, so
        // within each row of each gradient matrix the entries agree.
        let net = Network::zeros(spec(&[2, 2, 1], ActivationKind::Sigmoid, false));
        let batch = random_examples(6, 2, 1, 13);
        let grads = backprop(&net, &batch, 0.0).unwrap();
        for d in grads.layers() {
            for r in 0..d.rows() {
                for c in 1..d.cols() {
                    assert_eq!(d.get(r, c), d.get(r, 0));
                }
            }
        }
        // The output layer's gradient is nonzero, so the symmetry above is
        // not an all-zeros triviality.
        assert!(grads.layer(1).get(0, 0) != 0.0);
    }

    #[test]
    fn backprop_matches_the_numerical_oracle_with_regularization() {
        let net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, false, 17);
        let batch = random_examples(10, 3, 1, 19);
        let analytic = backprop(&net, &batch, 0.5).unwrap();
        let numeric = numerical_gradient(&net, &batch, 0.5, 1e-7).unwrap();
        let epsilon = gradient_check(&analytic, &numeric).unwrap();
        assert!(epsilon <= 1e-7, "epsilon {epsilon}");
    }

    #[test]
    fn backprop_matches_the_oracle_with_bias_columns() {
        // Bias columns carry no regularization term in either the cost or
        // the analytic gradient; agreement here confirms both sides skip
        // them consistently.
        let net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, true, 23);
        let batch = random_examples(8, 3, 1, 29);
        let analytic = backprop(&net, &batch, 0.9).unwrap();
        let numeric = numerical_gradient(&net, &batch, 0.9, 1e-7).unwrap();
        assert!(gradient_check(&analytic, &numeric).unwrap() <= 1e-7);
    }

    #[test]
    fn backprop_matches_the_oracle_for_tanh_and_relu() {
        for (activation, seed) in [(ActivationKind::Tanh, 31), (ActivationKind::Relu, 37)] {
            let net = random_net(&[4, 5, 1], activation, false, seed);
            let batch = random_examples(9, 4, 1, seed + 1);
            let analytic = backprop(&net, &batch, 0.25).unwrap();
            let numeric = numerical_gradient(&net, &batch, 0.25, 1e-7).unwrap();
            let epsilon = gradient_check(&analytic, &numeric).unwrap();
            assert!(epsilon <= 1e-7, "{activation:?}: epsilon {epsilon}");
        }
    }

    #[test]
    fn logistic_shortcut_is_exact_for_sigmoid_but_wrong_for_others() {
        let batch = random_examples(8, 3, 1, 41);
        let sigmoid_net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, false, 43);
        assert_eq!(
            backprop(&sigmoid_net, &batch, 0.3).unwrap(),
            backprop_logistic_derivative(&sigmoid_net, &batch, 0.3).unwrap()
        );
        for (activation, seed) in [(ActivationKind::Tanh, 47), (ActivationKind::Relu, 53)] {
            let net = random_net(&[3, 4, 1], activation, false, seed);
            let analytic = backprop_logistic_derivative(&net, &batch, 0.0).unwrap();
            let numeric = numerical_gradient(&net, &batch, 0.0, 1e-7).unwrap();
            let epsilon = gradient_check(&analytic, &numeric).unwrap();
            assert!(epsilon > 1e-4, "{activation:?}: epsilon only {epsilon}");
        }
    }

    #[test]
    fn batch_gradient_is_the_size_weighted_average_of_its_parts() {
        let net = random_net(&[3, 4, 2], ActivationKind::Sigmoid, false, 59);
        let first = random_examples(3, 3, 2, 61);
        let second = random_examples(5, 3, 2, 67);
        let mut combined = first.clone();
        combined.extend(second.iter().cloned());
        let lambda = 0.7;
        let whole = backprop(&net, &combined, lambda).unwrap();
        let part_a = backprop(&net, &first, 0.0).unwrap();
        let part_b = backprop(&net, &second, 0.0).unwrap();
        let m = combined.len() as f64;
        for l in 0..whole.layers().len() {
            for r in 0..whole.layer(l).rows() {
                for c in 0..whole.layer(l).cols() {
                    let expected = (3.0 * part_a.layer(l).get(r, c)
                        + 5.0 * part_b.layer(l).get(r, c))
                        / m
                        + (lambda / m) * net.weight(l).get(r, c);
                    let got = whole.layer(l).get(r, c);
                    assert!((got - expected).abs() <= 1e-12, "{got} vs {expected}");
                }
            }
        }
    }

    #[test]
    fn central_difference_recovers_an_analytic_derivative() {
        let estimate = central_difference(|theta| theta * theta, 3.0, 1e-7);
        assert!((estimate - 6.0).abs() <= 1e-6, "estimate {estimate}");
    }

    #[test]
    fn numerical_gradient_of_a_zero_network_is_row_symmetric() {
        let net = Network::zeros(spec(&[2, 2, 1], ActivationKind::Sigmoid, false));
        let batch = random_examples(6, 2, 1, 13);
        let numeric = numerical_gradient(&net, &batch, 0.0, 1e-7).unwrap();
        for d in numeric.layers() {
            for r in 0..d.rows() {
                for c in 1..d.cols() {
                    assert!((d.get(r, c) - d.get(r, 0)).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn gradient_check_extremes() {
        let net = random_net(&[2, 3, 1], ActivationKind::Sigmoid, false, 71);
        let batch = random_examples(5, 2, 1, 73);
        let grads = backprop(&net, &batch, 0.0).unwrap();
        assert_eq!(gradient_check(&grads, &grads).unwrap(), 0.0);
        let negated =
            GradientSet::from_layers(grads.layers().iter().map(|m| m.scale(-1.0)).collect());
        assert_eq!(gradient_check(&grads, &negated).unwrap(), 1.0);
        let zeros = GradientSet::from_layers(vec![Matrix::zeros(3, 2), Matrix::zeros(1, 3)]);
        assert_eq!(gradient_check(&zeros, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn gradient_check_rejects_shape_mismatches() {
        let a = GradientSet::from_layers(vec![Matrix::zeros(2, 2)]);
        let b = GradientSet::from_layers(vec![Matrix::zeros(2, 3)]);
        let c = GradientSet::from_layers(vec![Matrix::zeros(2, 2), Matrix::zeros(1, 2)]);
        assert!(gradient_check(&a, &b).is_err());
        assert!(gradient_check(&a, &c).is_err());
    }

    #[test]
    fn gradient_check_catches_a_delta_sign_error_at_any_layer() {
        let net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, false, 79);
        let batch = random_examples(10, 3, 1, 83);
        let numeric = numerical_gradient(&net, &batch, 0.5, 1e-7).unwrap();
        for flip_layer in 0..2 {
            let corrupt = backprop_with_flipped_delta(&net, &batch, 0.5, flip_layer).unwrap();
            let epsilon = gradient_check(&corrupt, &numeric).unwrap();
            assert!(epsilon > 1e-3, "flip at {flip_layer}: epsilon only {epsilon}");
        }
    }

    #[test]
    fn flipping_the_output_delta_negates_only_the_data_part() {
        let net = random_net(&[2, 3, 1], ActivationKind::Sigmoid, false, 87);
        let batch = random_examples(6, 2, 1, 91);
        let lambda = 0.8;
        let good = backprop(&net, &batch, lambda).unwrap();
        let flipped = backprop_with_flipped_delta(&net, &batch, lambda, 1).unwrap();
        let m = batch.len() as f64;
        for l in 0..2 {
            for (idx, (g, f)) in good.layer(l).data().iter().zip(flipped.layer(l).data()).enumerate()
            {
                // good = data + reg, flipped = -data + reg, so the
                // regularizer is the average of the two.
                let reg = (lambda / m) * net.weight(l).data()[idx];
                assert!(((g + f) / 2.0 - reg).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn zero_epochs_is_a_no_op() {
        let net = random_net(&[2, 2, 1], ActivationKind::Sigmoid, false, 89);
        let examples = random_examples(4, 2, 1, 97);
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (trained, history) = descend(&net, &examples, &cfg).unwrap();
        assert_eq!(trained, net);
        assert!(history.is_empty());
    }

    #[test]
    fn batch_descent_on_a_convex_problem_is_monotone() {
        let examples = near_separable_examples(60, 3, 101);
        let net = random_net(&[3, 1], ActivationKind::Sigmoid, false, 103);
        let cfg = TrainConfig {
            alpha: 0.5,
            epochs: 100,
            ..TrainConfig::default()
        };
        let (_, history) = descend(&net, &examples, &cfg).unwrap();
        assert_eq!(history.len(), 100);
        for pair in history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "cost rose: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn all_three_modes_agree_on_a_convex_problem() {
        // Learning rates are scaled so each mode moves the same distance per
        // epoch to first order: stochastic steps m times per epoch,
        // mini-batch m/b times.
        let examples = near_separable_examples(60, 3, 107);
        let net = random_net(&[3, 1], ActivationKind::Sigmoid, false, 109);
        let alpha = 0.5;
        let m = examples.len() as f64;
        let run = |mode, batch_size, alpha| {
            let cfg = TrainConfig {
                alpha,
                mode,
                batch_size,
                epochs: 200,
                seed: 300,
                ..TrainConfig::default()
            };
            let (_, history) = descend(&net, &examples, &cfg).unwrap();
            *history.last().unwrap()
        };
        let batch = run(DescentMode::Batch, 2, alpha);
        let stochastic = run(DescentMode::Stochastic, 2, alpha / m);
        let minibatch = run(DescentMode::MiniBatch, 2, 2.0 * alpha / m);
        assert!(
            (stochastic - batch).abs() <= 0.05 * batch,
            "stochastic {stochastic} vs batch {batch}"
        );
        assert!(
            (minibatch - batch).abs() <= 0.05 * batch,
            "minibatch {minibatch} vs batch {batch}"
        );
    }

    #[test]
    fn zero_init_keeps_first_layer_columns_internally_equal() {
        // Zero-initialized hidden units receive identical updates forever:
        // after any number of epochs every column of the first weight matrix
        // still holds a single repeated value, i.e. the network has only one
        // effective hidden feature. Random init breaks the tie immediately.
        //
        // The labels are deliberately imbalanced: with a perfectly balanced
        // batch the zero network is a stationary point (mean output delta
        // zero) and nothing would move at all.
        let mut rng = rng_from_seed(113);
        let examples: Vec<(Vector, Vector)> = (0..8)
            .map(|i| {
                let x = Vector::new((0..2).map(|_| rng.gen_range(-1.0..1.0)).collect());
                (x, Vector::new(vec![f64::from(i < 5)]))
            })
            .collect();
        let s = spec(&[2, 3, 1], ActivationKind::Sigmoid, false);
        let cfg = TrainConfig {
            alpha: 0.8,
            epochs: 30,
            ..TrainConfig::default()
        };
        let (trained, _) = descend(&Network::zeros(s.clone()), &examples, &cfg).unwrap();
        let w = trained.weight(0);
        for c in 0..w.cols() {
            for r in 1..w.rows() {
                assert_eq!(w.get(r, c), w.get(0, c), "column {c} split at row {r}");
            }
        }
        assert!(w.data().iter().any(|&v| v != 0.0), "weights never moved");

        let (random_trained, _) =
            descend(&random_init(&s, 0.12, 127), &examples, &TrainConfig { epochs: 1, ..cfg })
                .unwrap();
        let w = random_trained.weight(0);
        let split = (0..w.cols()).any(|c| (1..w.rows()).any(|r| w.get(r, c) != w.get(0, c)));
        assert!(split, "random init should break the column symmetry");
    }

    #[test]
    fn heavier_regularization_means_smaller_weights() {
        let examples = near_separable_examples(30, 2, 131);
        let s = spec(&[2, 3, 1], ActivationKind::Sigmoid, false);
        let mut last = f64::INFINITY;
        for lambda in [0.0, 1.0, 10.0, 100.0] {
            let cfg = TrainConfig {
                alpha: 0.3,
                lambda,
                epochs: 60,
                ..TrainConfig::default()
            };
            let (trained, _) = descend(&random_init(&s, 0.12, 137), &examples, &cfg).unwrap();
            let size: f64 = trained
                .weights()
                .iter()
                .map(|w| w.frobenius_norm().powi(2))
                .sum();
            assert!(size <= last + 1e-9, "weight size grew to {size} at lambda {lambda}");
            last = size;
        }
    }

    #[test]
    fn descent_is_deterministic_per_config() {
        let examples = near_separable_examples(20, 2, 139);
        let net = random_net(&[2, 3, 1], ActivationKind::Sigmoid, false, 149);
        for mode in [DescentMode::Batch, DescentMode::Stochastic, DescentMode::MiniBatch] {
            let cfg = TrainConfig {
                alpha: 0.4,
                mode,
                batch_size: 4,
                epochs: 12,
                seed: 151,
                ..TrainConfig::default()
            };
            let (net_a, hist_a) = descend(&net, &examples, &cfg).unwrap();
            let (net_b, hist_b) = descend(&net, &examples, &cfg).unwrap();
            assert_eq!(net_a, net_b);
            assert_eq!(hist_a, hist_b);
        }
    }

    #[test]
    fn stochastic_on_one_example_equals_batch() {
        let examples = random_examples(1, 3, 1, 157);
        let net = random_net(&[3, 2, 1], ActivationKind::Sigmoid, false, 163);
        let cfg = TrainConfig {
            alpha: 0.3,
            lambda: 0.2,
            epochs: 5,
            ..TrainConfig::default()
        };
        let (batch_net, batch_hist) = descend(&net, &examples, &cfg).unwrap();
        let stochastic_cfg = TrainConfig {
            mode: DescentMode::Stochastic,
            ..cfg
        };
        let (sgd_net, sgd_hist) = descend(&net, &examples, &stochastic_cfg).unwrap();
        assert_eq!(batch_net, sgd_net);
        assert_eq!(batch_hist, sgd_hist);
    }

    #[test]
    fn minibatch_size_bounds_are_enforced() {
        let examples = random_examples(5, 2, 1, 167);
        let net = random_net(&[2, 1], ActivationKind::Sigmoid, false, 173);
        for batch_size in [0, 1, 6] {
            let cfg = TrainConfig {
                mode: DescentMode::MiniBatch,
                batch_size,
                epochs: 1,
                ..TrainConfig::default()
            };
            assert!(
                matches!(descend(&net, &examples, &cfg), Err(Error::InvalidConfig(_))),
                "batch_size {batch_size} accepted"
            );
        }
    }

    #[test]
    fn runaway_updates_abort_with_the_epoch() {
        let examples = random_examples(4, 2, 1, 179);
        let net = random_net(&[2, 2, 1], ActivationKind::Sigmoid, false, 181);
        let cfg = TrainConfig {
            alpha: 1e8,
            lambda: 1.0,
            epochs: 80,
            ..TrainConfig::default()
        };
        match descend(&net, &examples, &cfg).unwrap_err() {
            Error::Diverged { unit, index } => {
                assert_eq!(unit, "epoch");
                assert!(index < 80);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn gradcheck_once_passes_quietly_on_a_correct_gradient() {
        let examples = random_examples(6, 2, 1, 191);
        let net = random_net(&[2, 3, 1], ActivationKind::Relu, false, 193);
        let cfg = TrainConfig {
            alpha: 0.2,
            epochs: 3,
            gradcheck: GradCheckMode::Once,
            ..TrainConfig::default()
        };
        let (_, history) = descend(&net, &examples, &cfg).unwrap();
        assert_eq!(history.len(), 3);
    }

    #[test]
    fn gradcheck_once_aborts_on_the_logistic_shortcut_with_relu() {
        let examples = random_examples(6, 2, 1, 197);
        let net = random_net(&[2, 3, 1], ActivationKind::Relu, false, 199);
        let cfg = TrainConfig {
            alpha: 0.2,
            epochs: 3,
            gradcheck: GradCheckMode::Once,
            paper_literal_backprop: true,
            ..TrainConfig::default()
        };
        match descend(&net, &examples, &cfg).unwrap_err() {
            Error::GradCheckFailed { epsilon, tolerance } => {
                assert!(epsilon > tolerance);
                assert!(epsilon > 1e-4);
            }
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn training_actually_fits_a_separable_hyperplane() {
        let examples = hyperplane_examples(40, 3, 211, false);
        let net = random_net(&[3, 4, 1], ActivationKind::Sigmoid, false, 223);
        let cfg = TrainConfig {
            alpha: 0.7,
            epochs: 300,
            ..TrainConfig::default()
        };
        let (trained, history) = descend(&net, &examples, &cfg).unwrap();
        assert!(history.last().unwrap() < &0.2, "final cost {}", history.last().unwrap());
        let correct = examples
            .iter()
            .filter(|(x, y)| {
                let h = trained.forward(x).unwrap().output().get(0);
                (h >= 0.5) == (y.get(0) >= 0.5)
            })
            .count();
        assert_eq!(correct, 40, "only {correct}/40 correct");
    }

    #[test]
    fn config_validation_rejects_bad_knobs() {
        let bad_alpha = TrainConfig { alpha: 0.0, ..TrainConfig::default() };
        let bad_lambda = TrainConfig { lambda: -1.0, ..TrainConfig::default() };
        let bad_bound = TrainConfig { init_bound: 0.0, ..TrainConfig::default() };
        let bad_gamma = TrainConfig { gradcheck_gamma: -1e-7, ..TrainConfig::default() };
        for cfg in [bad_alpha, bad_lambda, bad_bound, bad_gamma] {
            assert!(cfg.validate().is_err());
        }
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn empty_example_lists_are_rejected() {
        let net = random_net(&[2, 1], ActivationKind::Sigmoid, false, 227);
        assert!(backprop(&net, &[], 0.0).is_err());
        assert!(descend(&net, &[], &TrainConfig::default()).is_err());
        assert!(numerical_gradient(&net, &[], 0.0, 1e-7).is_err());
    }

    #[test]
    fn mismatched_label_width_is_rejected() {
        let net = random_net(&[2, 1], ActivationKind::Sigmoid, false, 229);
        let bad = vec![(Vector::new(vec![0.1, 0.2]), Vector::new(vec![1.0, 0.0]))];
        assert!(backprop(&net, &bad, 0.0).is_err());
    }

    #[test]
    fn descent_reduces_cost_measured_without_regularization_too() {
        // The history stores the regularized cost; this pins the plain cost
        // as a separate signal that learning happened.
        let examples = hyperplane_examples(30, 2, 233, false);
        let net = random_net(&[2, 3, 1], ActivationKind::Sigmoid, false, 239);
        let before = total_cost(&net, &examples).unwrap();
        let cfg = TrainConfig {
            alpha: 0.5,
            lambda: 0.01,
            epochs: 150,
            ..TrainConfig::default()
        };
        let (trained, _) = descend(&net, &examples, &cfg).unwrap();
        let after = total_cost(&trained, &examples).unwrap();
        assert!(after < 0.5 * before, "{before} -> {after}");
    }

    #[test]
    fn sigmoid_is_shared_with_forward_propagation() {
        // One definition of the logistic function serves every consumer, so
        // a [n, 1] network and a raw dot product agree bit-for-bit.
        let net = random_net(&[3, 1], ActivationKind::Sigmoid, false, 241);
        let x = Vector::new(vec![0.2, -0.4, 0.9]);
        let z: f64 = (0..3).map(|k| net.weight(0).get(0, k) * x.get(k)).sum();
        assert_eq!(net.forward(&x).unwrap().output().get(0), sigmoid(z));
    }
}
