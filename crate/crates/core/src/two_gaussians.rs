//! A known two-component construction for calibrating ratio estimators.
//!
//! Class 1 draws from `N(-1, 1)` with mixing proportion `gamma`, class 0 from
//! `N(+1, 1)`. The Bayes class posterior and the gamma-relative density ratio
//! are available in closed form, so both the classifier surrogate and the KDE
//! surrogate can be scored against ground truth.

use rand::Rng;

use crate::dataset::quantile_rank;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::Point;

/// Means of the two unit-variance components.
pub const GOOD_MEAN: f64 = -1.0;
pub const BAD_MEAN: f64 = 1.0;

/// The labeled two-Gaussian population.
#[derive(Debug, Clone, Copy)]
pub struct TwoGaussians<T> {
    gamma: T,
}

fn std_normal_pdf<T: Real>(z: T) -> T {
    (-z * z / T::cast(2.0)).exp() / T::TAU().sqrt()
}

impl<T: Real> TwoGaussians<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if !(gamma > T::zero() && gamma < T::one()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("{gamma} is outside (0, 1)"),
            });
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// Class-1 density `l(x) = N(x; -1, 1)`.
    pub fn good_density(&self, x: T) -> T {
        std_normal_pdf(x - T::cast(GOOD_MEAN))
    }

    /// Class-0 density `g(x) = N(x; +1, 1)`.
    pub fn bad_density(&self, x: T) -> T {
        std_normal_pdf(x - T::cast(BAD_MEAN))
    }

    /// Mixture density `gamma l + (1 - gamma) g`.
    pub fn mixture_density(&self, x: T) -> T {
        self.gamma * self.good_density(x) + (T::one() - self.gamma) * self.bad_density(x)
    }

    /// Bayes class posterior `pi*(x) = gamma l / (gamma l + (1 - gamma) g)`.
    pub fn bayes_posterior(&self, x: T) -> T {
        self.gamma * self.good_density(x) / self.mixture_density(x)
    }

    /// Closed-form relative ratio `r_gamma(x) = pi*(x) / gamma`.
    pub fn true_relative_ratio(&self, x: T) -> T {
        self.good_density(x) / self.mixture_density(x)
    }

    /// Draw `n` labeled 1-d points with exactly `ceil(gamma n)` class-1 draws.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> (Vec<Point<T>>, Vec<bool>) {
        let k = if n == 0 {
            0
        } else {
            quantile_rank(self.gamma, n)
        };
        let mut points = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let good = i < k;
            let mean = if good { GOOD_MEAN } else { BAD_MEAN };
            points.push(vec![T::standard_normal(rng) + T::cast(mean)]);
            labels.push(good);
        }
        (points, labels)
    }
}

/// `n` evenly spaced values covering `[lo, hi]` inclusive.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / T::cast_usize(n - 1);
    (0..n).map(|i| lo + step * T::cast_usize(i)).collect()
}
