//! Function-space view of the linearized-network posterior.
//!
//! The weight-space Gaussian over parameters induces a Gaussian process over
//! logits with prior kernel `K(x, x') = J(x) S0 J(x')^T`, `S0 = I / delta`,
//! where `J` is the parameter Jacobian at `theta_map`. The GP posterior
//! variance
//!
//! `var(x*) = K(x*, x*) - K(x*, X) (K(X, X) + Lambda^{-1})^{-1} K(X, x*)`
//!
//! must agree with the weight-space `J(x*) A^{-1} J(x*)^T` by the Woodbury
//! identity; this module exists to state and test that equivalence, it is not
//! used inside the optimization loop.

use crate::error::{Error, Result};
use crate::linalg::{dot, Cholesky, SquareMatrix};
use crate::mlp::{MlpParams, MlpSpec};
use crate::scalar::{sigmoid, Real};
use crate::Point;

/// Gaussian process induced by linearizing the classifier at `theta_map`.
#[derive(Debug, Clone)]
pub struct LinearizedGp<T> {
    anchor: MlpParams<T>,
    prior_mean_params: Vec<T>,
    prior_precision: T,
    train_points: Vec<Point<T>>,
    train_logits: Vec<T>,
    lambda_diag: Vec<T>,
    train_jacobians: Vec<Vec<T>>,
    gram_chol: Option<Cholesky<T>>,
    jitter_applied: Option<T>,
}

impl<T: Real> LinearizedGp<T> {
    /// Build the GP at `anchor` with prior `N(0, I / delta)` over weights and
    /// Bernoulli-logit curvature `lambda_n = pi_n (1 - pi_n)` at the anchor.
    pub fn fit(
        anchor: &MlpParams<T>,
        prior_precision: T,
        train_points: &[Point<T>],
    ) -> Result<Self> {
        let positive = prior_precision.is_finite() && prior_precision > T::zero();
        if !positive {
            return Err(Error::InvalidParameter {
                name: "prior_precision",
                reason: format!("{prior_precision} must be > 0"),
            });
        }
        let n = train_points.len();
        let mut train_logits = Vec::with_capacity(n);
        let mut lambda_diag = Vec::with_capacity(n);
        let mut train_jacobians = Vec::with_capacity(n);
        for x in train_points {
            let jac = anchor.param_jacobian(x)?;
            let logit = anchor.logit(x);
            let pi = sigmoid(logit);
            train_logits.push(logit);
            lambda_diag.push(pi * (T::one() - pi));
            train_jacobians.push(jac);
        }

        let (gram_chol, jitter_applied) = if n == 0 {
            (None, None)
        } else {
            // C = K(X, X) + Lambda^{-1}
            let mut c = SquareMatrix::zeros(n);
            for i in 0..n {
                for j in 0..=i {
                    let k = dot(&train_jacobians[i], &train_jacobians[j]) / prior_precision;
                    c.set(i, j, k);
                }
                let diag = c.get(i, i) + lambda_diag[i].recip();
                c.set(i, i, diag);
            }
            c.mirror_lower();
            let mut jitter_used = None;
            let mut jitter = T::cast(1e-8);
            let chol = loop {
                match Cholesky::factor(&c) {
                    Ok(ch) => break ch,
                    Err(_) if jitter <= T::cast(1e-4) => {
                        for i in 0..n {
                            c.set(i, i, c.get(i, i) + jitter);
                        }
                        jitter_used = Some(jitter_used.unwrap_or(T::zero()) + jitter);
                        jitter *= T::cast(100.0);
                    }
                    Err(e) => return Err(e),
                }
            };
            (Some(chol), jitter_used)
        };

        Ok(Self {
            anchor: anchor.clone(),
            prior_mean_params: vec![T::zero(); anchor.len()],
            prior_precision,
            train_points: train_points.to_vec(),
            train_logits,
            lambda_diag,
            train_jacobians,
            gram_chol,
            jitter_applied,
        })
    }

    pub fn anchor(&self) -> &MlpParams<T> {
        &self.anchor
    }

    pub fn spec(&self) -> &MlpSpec {
        self.anchor.spec()
    }

    /// Zero prior mean over weights.
    pub fn prior_mean_params(&self) -> &[T] {
        &self.prior_mean_params
    }

    pub fn train_len(&self) -> usize {
        self.train_points.len()
    }

    pub fn train_logits(&self) -> &[T] {
        &self.train_logits
    }

    pub fn lambda_diag(&self) -> &[T] {
        &self.lambda_diag
    }

    /// Total diagonal jitter added to make the Gram solve well posed, if any.
    pub fn jitter_applied(&self) -> Option<T> {
        self.jitter_applied
    }

    /// Prior kernel `J(x) S0 J(x')^T`.
    pub fn kernel(&self, x: &[T], x2: &[T]) -> Result<T> {
        let ja = self.anchor.param_jacobian(x)?;
        let jb = self.anchor.param_jacobian(x2)?;
        Ok(dot(&ja, &jb) / self.prior_precision)
    }

    /// GP posterior predictive `(mean, variance)` of the logit at `x_star`.
    pub fn gp_predictive(&self, x_star: &[T]) -> Result<(T, T)> {
        let jac = self.anchor.param_jacobian(x_star)?;
        let mean = self.anchor.logit(x_star);
        let k_star = dot(&jac, &jac) / self.prior_precision;
        let var = match &self.gram_chol {
            None => k_star,
            Some(chol) => {
                let kx: Vec<T> = self
                    .train_jacobians
                    .iter()
                    .map(|jn| dot(&jac, jn) / self.prior_precision)
                    .collect();
                (k_star - chol.inv_quad_form(&kx)).max(T::zero())
            }
        };
        Ok((mean, var))
    }
}
