//! Kernel-density baseline surrogate (TPE).
//!
//! Fits separate product-Gaussian density estimates to the two label classes
//! and scores candidates by the gamma-relative density ratio
//!
//! `r_gamma(x) = l(x) / (gamma l(x) + (1 - gamma) g(x))`,
//!
//! which reduces to the plain ratio `l/g` at `gamma = 0` and is bounded by
//! `1/gamma` otherwise. Densities are combined in log space so deep tails
//! cannot underflow into spurious 0/0 ratios.

use rand::Rng;

use crate::blackbox::Domain;
use crate::dataset::LabeledSet;
use crate::error::{Error, Result};
use crate::scalar::{log_sum_exp, Real};
use crate::Point;

/// Fraction of the domain width used as the bandwidth floor.
const BANDWIDTH_FLOOR: f64 = 1e-3;

/// Product-Gaussian kernel density estimate.
#[derive(Debug, Clone)]
pub struct KdeModel<T> {
    centers: Vec<Point<T>>,
    bandwidths: Vec<T>,
    log_norm: T,
}

impl<T: Real> KdeModel<T> {
    pub fn dim(&self) -> usize {
        self.bandwidths.len()
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn bandwidths(&self) -> &[T] {
        &self.bandwidths
    }

    /// Log density at `x`.
    pub fn log_density(&self, x: &[T]) -> T {
        let half = T::cast(0.5);
        let exps: Vec<T> = self
            .centers
            .iter()
            .map(|c| {
                let mut q = T::zero();
                for ((&xv, &cv), &h) in x.iter().zip(c).zip(&self.bandwidths) {
                    let z = (xv - cv) / h;
                    q += z * z;
                }
                -half * q
            })
            .collect();
        log_sum_exp(&exps) - self.log_norm
    }

    /// Density at `x` (may underflow to zero far from all centers).
    pub fn density(&self, x: &[T]) -> T {
        self.log_density(x).exp()
    }
}

/// Fit a KDE with Scott's-rule bandwidths `h_j = sigma_j n^(-1/(d+4))`,
/// floored at `1e-3` of the corresponding domain width.
pub fn kde_fit<T: Real>(points: &[Point<T>], domain: &Domain<T>) -> Result<KdeModel<T>> {
    if points.is_empty() {
        return Err(Error::EmptyInput("kde_fit points"));
    }
    let d = domain.dim();
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
    }
    let n = points.len();
    let n_t = T::cast_usize(n);
    let scott = n_t.powf(-T::one() / T::cast_usize(d + 4));

    let mut bandwidths = Vec::with_capacity(d);
    for (j, &width) in domain.widths().iter().enumerate() {
        let mean = points.iter().map(|p| p[j]).sum::<T>() / n_t;
        let sigma = if n > 1 {
            let ss = points
                .iter()
                .map(|p| {
                    let dv = p[j] - mean;
                    dv * dv
                })
                .sum::<T>()
                / T::cast_usize(n - 1);
            ss.sqrt()
        } else {
            T::zero()
        };
        let floor = T::cast(BANDWIDTH_FLOOR) * width;
        bandwidths.push((sigma * scott).max(floor));
    }

    let half = T::cast(0.5);
    let log_norm = n_t.ln()
        + half * T::cast_usize(d) * T::TAU().ln()
        + bandwidths.iter().map(|h| h.ln()).sum::<T>();

    Ok(KdeModel {
        centers: points.to_vec(),
        bandwidths,
        log_norm,
    })
}

/// The gamma-relative density ratio of two fitted densities at `x`.
///
/// At `gamma = 0` this is the plain ratio `l/g`, which is singular where the
/// denominator density underflows to zero; that case is reported as an error.
pub fn relative_ratio<T: Real>(ell: &KdeModel<T>, g: &KdeModel<T>, x: &[T], gamma: T) -> Result<T> {
    if gamma < T::zero() || gamma >= T::one() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} is outside [0, 1)"),
        });
    }
    let log_l = ell.log_density(x);
    let log_g = g.log_density(x);
    if gamma == T::zero() {
        if log_g.exp() == T::zero() {
            return Err(Error::RatioSingularity);
        }
        return Ok((log_l - log_g).exp());
    }
    // r = 1 / (gamma + (1 - gamma) exp(log g - log l))
    let odds = (log_g - log_l).exp();
    Ok((gamma + (T::one() - gamma) * odds).recip())
}

/// Outcome of a TPE suggestion.
#[derive(Debug, Clone)]
pub struct TpeSuggestion<T> {
    pub point: Point<T>,
    /// True when a class was empty and the suggestion fell back to a uniform
    /// pool pick.
    pub fell_back: bool,
}

/// Suggest the candidate-pool argmax of the relative ratio between the two
/// class densities; ties resolve to the lowest pool index. An empty class
/// falls back to a uniform pool pick.
pub fn tpe_suggest<T: Real, R: Rng + ?Sized>(
    labeled: &LabeledSet<T>,
    gamma: T,
    candidate_pool: &[Point<T>],
    domain: &Domain<T>,
    rng: &mut R,
) -> Result<TpeSuggestion<T>> {
    if gamma < T::zero() || gamma >= T::one() {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} is outside [0, 1)"),
        });
    }
    if candidate_pool.is_empty() {
        return Err(Error::EmptyInput("tpe candidate pool"));
    }
    let pos = labeled.positive_points();
    let neg = labeled.negative_points();
    if pos.is_empty() || neg.is_empty() {
        let pick = rng.random_range(0..candidate_pool.len());
        return Ok(TpeSuggestion {
            point: candidate_pool[pick].clone(),
            fell_back: true,
        });
    }
    let ell = kde_fit(&pos, domain)?;
    let g = kde_fit(&neg, domain)?;
    // r_gamma is strictly decreasing in log g - log l, so ranking by the log
    // ratio selects the same argmax without saturating at the 1/gamma bound
    let score = |x: &Point<T>| ell.log_density(x) - g.log_density(x);
    let mut best = 0;
    let mut best_val = score(&candidate_pool[0]);
    for (i, c) in candidate_pool.iter().enumerate().skip(1) {
        let v = score(c);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    Ok(TpeSuggestion {
        point: candidate_pool[best].clone(),
        fell_back: false,
    })
}
