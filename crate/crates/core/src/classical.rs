//! The classical collaborative-filtering baseline: learn item features `X`
//! and user parameters `Theta` jointly by regularized squared-error descent,
//! then score with a sigmoid.
//!
//! The objective is one scalar governing both factors:
//!
//! ```text
//! J = 1/2 * sum over rated (i,j) of (theta_j . x_i - y_ij)^2
//!   + lambda/2 * (sum Theta^2 + sum X^2)
//! ```
//!
//! and each iteration moves `X` and `Theta` *simultaneously* — both
//! gradients are evaluated at the pre-update values before either factor
//! steps.
//!
//! One deliberate correction is baked in: derivations of this model are
//! sometimes written with a `lambda/2 * x` term in the update rule. The true
//! partial derivative of the `(lambda/2) * x^2` penalty is `lambda * x`, and
//! that is what [`cf_gradients`] computes — the `lambda/2` variant silently
//! halves the effective regularization and cannot pass a finite-difference
//! check, which this module's own tests perform.
//!
//! A second quirk is kept on purpose: the model is *fit* to raw ratings with
//! squared error, but *predictions* pass `theta . x` through a sigmoid, read
//! as the likelihood the user likes the item.

use crate::dataset::RatingsDataset;
use crate::error::{Error, Result};
use crate::matrix::{axpy, Matrix};
use crate::matrix::Vector;
use crate::perceptron::sigmoid;
use crate::rng::rng_from_seed;
use rand::Rng;

/// Jointly learned factors: item rows in `x`, user rows in `theta`.
#[derive(Clone, Debug, PartialEq)]
pub struct CfModel {
    x: Matrix,
    theta: Matrix,
}

impl CfModel {
    /// Wrap factor matrices; their widths (the latent dimension) must agree.
    pub fn new(x: Matrix, theta: Matrix) -> Result<Self> {
        if x.cols() != theta.cols() {
            return Err(Error::ShapeMismatch {
                op: "CfModel::new",
                left_rows: x.rows(),
                left_cols: x.cols(),
                right_rows: theta.rows(),
                right_cols: theta.cols(),
            });
        }
        Ok(CfModel { x, theta })
    }

    /// Latent dimension `n`.
    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn n_items(&self) -> usize {
        self.x.rows()
    }

    pub fn n_users(&self) -> usize {
        self.theta.rows()
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn theta(&self) -> &Matrix {
        &self.theta
    }

    /// Item `i`'s learned feature row.
    pub fn item_features(&self, i: usize) -> Vector {
        Vector::new(self.x.row(i).to_vec())
    }

    /// User `j`'s learned parameter row.
    pub fn user_parameters(&self, j: usize) -> Vector {
        Vector::new(self.theta.row(j).to_vec())
    }

    /// The raw fitted rating `theta_j . x_i`.
    pub fn predicted_rating(&self, item: usize, user: usize) -> f64 {
        let mut sum = 0.0;
        for k in 0..self.n_features() {
            sum += self.theta.get(user, k) * self.x.get(item, k);
        }
        sum
    }

    /// The like likelihood `sigmoid(theta_j . x_i)`.
    pub fn predict(&self, item: usize, user: usize) -> f64 {
        sigmoid(self.predicted_rating(item, user))
    }

    fn check_against(&self, d: &RatingsDataset, op: &'static str) -> Result<()> {
        if self.n_items() != d.n_items() || self.n_users() != d.n_users() {
            return Err(Error::InvalidDimensions {
                op,
                detail: format!(
                    "model covers {} items x {} users but dataset has {} items x {} users",
                    self.n_items(),
                    self.n_users(),
                    d.n_items(),
                    d.n_users()
                ),
            });
        }
        Ok(())
    }
}

/// Hyperparameters for [`cf_train`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CfConfig {
    /// Latent dimension `n`, at least 1.
    pub n: usize,
    /// Learning rate, strictly positive.
    pub alpha: f64,
    /// Regularization strength, non-negative.
    pub lambda: f64,
    /// Number of simultaneous-descent iterations.
    pub iters: usize,
    /// Seed for the uniform `(-0.5, 0.5)` factor initialisation.
    pub seed: u64,
}

impl Default for CfConfig {
    fn default() -> Self {
        CfConfig {
            n: 2,
            alpha: 0.01,
            lambda: 0.1,
            iters: 500,
            seed: 0,
        }
    }
}

impl CfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("latent dimension n must be >= 1".into()));
        }
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
        Ok(())
    }
}

/// The joint regularized squared-error cost (see the module docs).
pub fn cf_cost(model: &CfModel, d: &RatingsDataset, lambda: f64) -> Result<f64> {
    model.check_against(d, "cf_cost")?;
    let mut data_term = 0.0;
    for ((item, user), y) in d.ratings() {
        let err = model.predicted_rating(item, user) - y;
        data_term += err * err;
    }
    Ok(0.5 * data_term + 0.5 * lambda * (model.theta.sum_squares() + model.x.sum_squares()))
}

/// The exact partials of [`cf_cost`]:
///
/// ```text
/// dX[i][k]     = sum over users j rating i of err(i,j) * theta[j][k] + lambda * x[i][k]
/// dTheta[j][k] = sum over items i rated by j of err(i,j) * x[i][k]   + lambda * theta[j][k]
/// ```
///
/// Accumulation runs in the dataset's deterministic `(item, user)` order.
pub fn cf_gradients(model: &CfModel, d: &RatingsDataset, lambda: f64) -> Result<(Matrix, Matrix)> {
    model.check_against(d, "cf_gradients")?;
    let n = model.n_features();
    let mut dx = model.x.scale(lambda);
    let mut dtheta = model.theta.scale(lambda);
    for ((item, user), y) in d.ratings() {
        let err = model.predicted_rating(item, user) - y;
        for k in 0..n {
            let xv = dx.get(item, k) + err * model.theta.get(user, k);
            dx.set(item, k, xv);
            let tv = dtheta.get(user, k) + err * model.x.get(item, k);
            dtheta.set(user, k, tv);
        }
    }
    Ok((dx, dtheta))
}

/// Run simultaneous gradient descent from a seeded uniform `(-0.5, 0.5)`
/// initialisation. The cost is evaluated every iteration; the first
/// non-finite value aborts with an error naming the iteration.
pub fn cf_train(d: &RatingsDataset, cfg: &CfConfig) -> Result<CfModel> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut draw = |rows: usize, cols: usize| -> Matrix {
        let data = (0..rows * cols).map(|_| rng.gen_range(-0.5..0.5)).collect();
        Matrix::new(rows, cols, data).expect("positive dimensions")
    };
    let x = draw(d.n_items(), cfg.n);
    let theta = draw(d.n_users(), cfg.n);
    let mut model = CfModel { x, theta };

    for iter in 0..cfg.iters {
        let (dx, dtheta) = cf_gradients(&model, d, cfg.lambda)?;
        // Simultaneous step: both gradients came from the pre-update model.
        model.x = axpy(-cfg.alpha, &dx, &model.x)?;
        model.theta = axpy(-cfg.alpha, &dtheta, &model.theta)?;
        let cost = cf_cost(&model, d, cfg.lambda)?;
        if !cost.is_finite() {
            return Err(Error::Diverged {
                unit: "iteration",
                index: iter,
            });
        }
    }
    Ok(model)
}

/// The sigmoid of `theta . x` — the likelihood that the user behind `theta`
/// likes the item behind `x`.
pub fn cf_predict(theta: &Vector, x: &Vector) -> Result<f64> {
    Ok(sigmoid(theta.dot(x)?))
}
