//! Observation storage, quantile thresholding and binary labeling.
//!
//! Each optimization iteration recomputes the threshold `tau` as the
//! `ceil(gamma * N)`-th order statistic of all observed values and labels
//! every observation with `y <= tau`; appending a new observation can
//! therefore re-shuffle the labels of older points.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::Point;

/// The running dataset `D_n = {(x_n, y_n)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet<T> {
    points: Vec<Point<T>>,
    values: Vec<T>,
    dim: usize,
}

/// One serialized observation line.
#[derive(Debug, Serialize, Deserialize)]
struct ObservationRecord<T> {
    x: Point<T>,
    y: T,
}

impl<T: Real> ObservationSet<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            points: Vec::new(),
            values: Vec::new(),
            dim,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[Point<T>] {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Append `(x, y)`; earlier entries keep their order and index.
    pub fn append(&mut self, x: Point<T>, y: T) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        self.points.push(x);
        self.values.push(y);
        Ok(())
    }

    /// Smallest observed value, if any.
    pub fn best_value(&self) -> Option<T> {
        self.values
            .iter()
            .cloned()
            .fold(None, |acc, v| Some(acc.map_or(v, |a: T| a.min(v))))
    }

    /// Serialize one observation per line as `{"x": [...], "y": ...}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for (x, &y) in self.points.iter().zip(&self.values) {
            let rec = ObservationRecord { x: x.clone(), y };
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// Parse a JSONL stream produced by [`ObservationSet::write_jsonl`].
    pub fn read_jsonl<R: BufRead>(r: R, dim: usize) -> Result<Self> {
        let mut set = Self::new(dim);
        for line in r.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: ObservationRecord<T> = serde_json::from_str(&line)?;
            set.append(rec.x, rec.y)?;
        }
        Ok(set)
    }
}

/// The `ceil(gamma * N)`-th smallest value (1-indexed order statistic).
///
/// The small slack absorbs upward rounding in `gamma * N` when the product is
/// an exact integer that `f64` cannot represent, e.g. `gamma = 0.2, N = 5`.
pub fn compute_threshold<T: Real>(values: &[T], gamma: T) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput("quantile threshold"));
    }
    if !(gamma > T::zero() && gamma < T::one()) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            reason: format!("{gamma} is outside (0, 1)"),
        });
    }
    let k = quantile_rank(gamma, values.len());
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite observation"));
    Ok(sorted[k - 1])
}

/// `k = ceil(gamma * n)`, clamped to `1..=n`.
pub(crate) fn quantile_rank<T: Real>(gamma: T, n: usize) -> usize {
    let product = (gamma * T::cast_usize(n))
        .to_f64()
        .expect("finite gamma * N");
    let k = (product - 1e-9).ceil() as usize;
    k.clamp(1, n)
}

/// `labels[n] = 1` iff `values[n] <= tau`; ties get label 1.
pub fn assign_labels<T: Real>(values: &[T], tau: T) -> Vec<bool> {
    values.iter().map(|&v| v <= tau).collect()
}

/// Observations partitioned against the quantile threshold.
#[derive(Debug, Clone)]
pub struct LabeledSet<T> {
    base: ObservationSet<T>,
    tau: T,
    gamma: T,
    labels: Vec<bool>,
}

impl<T: Real> LabeledSet<T> {
    /// Threshold and label `base` at the `gamma` quantile.
    pub fn label(base: &ObservationSet<T>, gamma: T) -> Result<Self> {
        let tau = compute_threshold(base.values(), gamma)?;
        let labels = assign_labels(base.values(), tau);
        Ok(Self {
            base: base.clone(),
            tau,
            gamma,
            labels,
        })
    }

    /// Build from externally supplied binary labels (class-probability
    /// experiments where the labels do not come from objective values).
    ///
    /// Synthesizes `y = 0` for label 1 and `y = 1` for label 0 with
    /// `tau = 1/2` so the indicator invariant still holds.
    pub fn from_binary_labels(points: Vec<Point<T>>, labels: Vec<bool>, gamma: T) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: labels.len(),
            });
        }
        let dim = points.first().map_or(0, Vec::len);
        let mut base = ObservationSet::new(dim);
        for (x, &z) in points.into_iter().zip(&labels) {
            let y = if z { T::zero() } else { T::one() };
            base.append(x, y)?;
        }
        Ok(Self {
            base,
            tau: T::cast(0.5),
            gamma,
            labels,
        })
    }

    pub fn base(&self) -> &ObservationSet<T> {
        &self.base
    }

    pub fn tau(&self) -> T {
        self.tau
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count_positive(&self) -> usize {
        self.labels.iter().filter(|&&z| z).count()
    }

    /// Points with label 1 (`y <= tau`).
    pub fn positive_points(&self) -> Vec<Point<T>> {
        self.select(true)
    }

    /// Points with label 0 (`y > tau`).
    pub fn negative_points(&self) -> Vec<Point<T>> {
        self.select(false)
    }

    fn select(&self, side: bool) -> Vec<Point<T>> {
        self.base
            .points()
            .iter()
            .zip(&self.labels)
            .filter(|(_, &z)| z == side)
            .map(|(p, _)| p.clone())
            .collect()
    }
}
