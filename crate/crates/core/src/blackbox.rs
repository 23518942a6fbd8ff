//! Optimization problems: bounded box domains and synthetic benchmark
//! functions with known minima, evaluated with optional Gaussian noise.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::Point;

/// Bounded box domain in `R^d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> Domain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::EmptyInput("domain bounds"));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            let ordered = lo < hi;
            if !ordered {
                return Err(Error::InvalidParameter {
                    name: "domain",
                    reason: format!("lower[{i}] = {lo} must be < upper[{i}] = {hi}"),
                });
            }
        }
        Ok(Self { lower, upper })
    }

    /// Hypercube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: T, hi: T) -> Result<Self> {
        Self::new(vec![lo; dim], vec![hi; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// Per-dimension widths `upper - lower`.
    pub fn widths(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| hi - lo)
            .collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Clamp `x` into the box, coordinate by coordinate.
    pub fn clamp(&self, x: &mut [T]) {
        for ((v, &lo), &hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = (*v).max(lo).min(hi);
        }
    }

    /// One uniform point.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| T::uniform_in(rng, lo, hi))
            .collect()
    }
}

/// Uniform sample of `n` points from `domain`; deterministic given the rng state.
pub fn sample_uniform<T: Real, R: Rng + ?Sized>(
    domain: &Domain<T>,
    n: usize,
    rng: &mut R,
) -> Vec<Point<T>> {
    (0..n).map(|_| domain.sample(rng)).collect()
}

/// A synthetic test function with known global minimum.
pub struct Benchmark<T> {
    name: &'static str,
    domain: Domain<T>,
    evaluate: fn(&[T]) -> T,
    known_minimum_value: T,
    known_minimizers: Vec<Point<T>>,
    noise_sigma: T,
}

impl<T> std::fmt::Debug for Benchmark<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Benchmark")
            .field("name", &self.name)
            .finish()
    }
}

impl<T: Real> Benchmark<T> {
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn known_minimum_value(&self) -> T {
        self.known_minimum_value
    }

    pub fn known_minimizers(&self) -> &[Point<T>] {
        &self.known_minimizers
    }

    pub fn noise_sigma(&self) -> T {
        self.noise_sigma
    }

    /// Replace the observation noise level.
    pub fn with_noise_sigma(mut self, sigma: T) -> Self {
        self.noise_sigma = sigma;
        self
    }

    /// Noise-free objective value; panics outside the domain only in debug.
    pub fn objective(&self, x: &[T]) -> T {
        (self.evaluate)(x)
    }

    /// Noisy evaluation `f(x) + sigma * g`, `g ~ N(0,1)`; exact when sigma is 0.
    pub fn evaluate<R: Rng + ?Sized>(&self, x: &[T], rng: &mut R) -> Result<T> {
        if !self.domain.contains(x) {
            return Err(Error::DomainViolation {
                point: x.iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect(),
                dim: self.domain.dim(),
            });
        }
        let f = (self.evaluate)(x);
        if self.noise_sigma == T::zero() {
            Ok(f)
        } else {
            Ok(f + self.noise_sigma * T::standard_normal(rng))
        }
    }
}

fn branin<T: Real>(x: &[T]) -> T {
    let pi = T::PI();
    let (x1, x2) = (x[0], x[1]);
    let a = T::one();
    let b = T::cast(5.1) / (T::cast(4.0) * pi * pi);
    let c = T::cast(5.0) / pi;
    let r = T::cast(6.0);
    let s = T::cast(10.0);
    let t = T::one() / (T::cast(8.0) * pi);
    let inner = x2 - b * x1 * x1 + c * x1 - r;
    a * inner * inner + s * (T::one() - t) * x1.cos() + s
}

fn six_hump_camel<T: Real>(x: &[T]) -> T {
    let (x1, x2) = (x[0], x[1]);
    let x1s = x1 * x1;
    let x2s = x2 * x2;
    (T::cast(4.0) - T::cast(2.1) * x1s + x1s * x1s / T::cast(3.0)) * x1s
        + x1 * x2
        + (T::cast(-4.0) + T::cast(4.0) * x2s) * x2s
}

const HARTMANN3_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];
const HARTMANN3_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];
const HARTMANN6_A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const HARTMANN6_P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];
const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];

fn hartmann<T: Real, const D: usize>(x: &[T], a: &[[f64; D]; 4], p: &[[f64; D]; 4]) -> T {
    let mut sum = T::zero();
    for i in 0..4 {
        let mut d = T::zero();
        for j in 0..D {
            let diff = x[j] - T::cast(p[i][j]);
            d += T::cast(a[i][j]) * diff * diff;
        }
        sum += T::cast(HARTMANN_ALPHA[i]) * (-d).exp();
    }
    -sum
}

fn hartmann3<T: Real>(x: &[T]) -> T {
    hartmann(x, &HARTMANN3_A, &HARTMANN3_P)
}

fn hartmann6<T: Real>(x: &[T]) -> T {
    hartmann(x, &HARTMANN6_A, &HARTMANN6_P)
}

/// Names accepted by [`benchmark_by_name`].
pub const BENCHMARK_NAMES: [&str; 4] = ["branin", "camel6", "hartmann3", "hartmann6"];

/// Look up a shipped benchmark (noise off) by its registry name.
pub fn benchmark_by_name<T: Real>(name: &str) -> Result<Benchmark<T>> {
    let b = match name {
        "branin" => Benchmark {
            name: "branin",
            domain: Domain::new(
                vec![T::cast(-5.0), T::zero()],
                vec![T::cast(10.0), T::cast(15.0)],
            )?,
            evaluate: branin,
            // 5 / (4 pi), attained on the zero set of the quadratic term
            known_minimum_value: T::cast(5.0) / (T::cast(4.0) * T::PI()),
            known_minimizers: vec![
                vec![-T::PI(), T::cast(12.275)],
                vec![T::PI(), T::cast(2.275)],
                vec![T::cast(9.424_777_960_769_38), T::cast(2.475)],
            ],
            noise_sigma: T::zero(),
        },
        "camel6" => Benchmark {
            name: "camel6",
            domain: Domain::new(
                vec![T::cast(-3.0), T::cast(-2.0)],
                vec![T::cast(3.0), T::cast(2.0)],
            )?,
            evaluate: six_hump_camel,
            known_minimum_value: T::cast(-1.031_628_453_489_877_4),
            known_minimizers: vec![
                vec![
                    T::cast(0.089_842_013_100_318_1),
                    T::cast(-0.712_656_403_020_739_6),
                ],
                vec![
                    T::cast(-0.089_842_013_100_318_1),
                    T::cast(0.712_656_403_020_739_6),
                ],
            ],
            noise_sigma: T::zero(),
        },
        "hartmann3" => Benchmark {
            name: "hartmann3",
            domain: Domain::cube(3, T::zero(), T::one())?,
            evaluate: hartmann3,
            known_minimum_value: T::cast(-3.862_779_787_332_662_4),
            known_minimizers: vec![vec![
                T::cast(0.114_588_876_655_069),
                T::cast(0.555_648_894_616_93),
                T::cast(0.852_546_984_686_677),
            ]],
            noise_sigma: T::zero(),
        },
        "hartmann6" => Benchmark {
            name: "hartmann6",
            domain: Domain::cube(6, T::zero(), T::one())?,
            evaluate: hartmann6,
            known_minimum_value: T::cast(-3.322_368_011_415_515),
            known_minimizers: vec![vec![
                T::cast(0.201_689_511_006_705),
                T::cast(0.150_010_691_823_458),
                T::cast(0.476_873_974_221_897),
                T::cast(0.275_332_430_494_056),
                T::cast(0.311_651_616_600_113),
                T::cast(0.657_300_534_065_62),
            ]],
            noise_sigma: T::zero(),
        },
        other => {
            return Err(Error::UnknownBenchmark {
                name: other.to_string(),
                available: BENCHMARK_NAMES.join(", "),
            })
        }
    };
    Ok(b)
}

/// All shipped benchmarks, noise off.
pub fn all_benchmarks<T: Real>() -> Vec<Benchmark<T>> {
    BENCHMARK_NAMES
        .iter()
        .map(|n| benchmark_by_name(n).expect("registry names are valid"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn branin_known_values() {
        let b = benchmark_by_name::<f64>("branin").unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let v = b
            .evaluate(&[std::f64::consts::PI, 2.275], &mut rng)
            .unwrap();
        assert!((v - 0.397887).abs() < 1e-5, "got {v}");
        let v0 = b.evaluate(&[0.0, 0.0], &mut rng).unwrap();
        assert!((v0 - 55.602113).abs() < 1e-5, "got {v0}");
    }

    #[test]
    fn noiseless_evaluation_is_deterministic() {
        let b = benchmark_by_name::<f64>("camel6").unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let x = [0.3, -0.4];
        let a = b.evaluate(&x, &mut rng).unwrap();
        let c = b.evaluate(&x, &mut rng).unwrap();
        assert_eq!(a, c);
    }

    #[test]
    fn noise_is_gaussian_around_the_objective() {
        let b = benchmark_by_name::<f64>("branin")
            .unwrap()
            .with_noise_sigma(0.5);
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let x = [1.0, 3.0];
        let clean = b.objective(&x);
        let n = 4000;
        let mean = (0..n)
            .map(|_| b.evaluate(&x, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        // standard error ~ 0.5 / sqrt(4000) ~ 0.008
        assert!((mean - clean).abs() < 0.04, "mean {mean} clean {clean}");
    }

    #[test]
    fn out_of_domain_point_is_rejected() {
        let b = benchmark_by_name::<f64>("hartmann3").unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        assert!(matches!(
            b.evaluate(&[0.5, 0.5, 1.5], &mut rng),
            Err(Error::DomainViolation { .. })
        ));
        assert!(matches!(
            b.evaluate(&[0.5, 0.5], &mut rng),
            Err(Error::DomainViolation { .. })
        ));
    }

    #[test]
    fn unknown_name_lists_alternatives() {
        let err = benchmark_by_name::<f64>("rosenbrock").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("branin") && msg.contains("hartmann6"), "{msg}");
    }

    #[test]
    fn sample_uniform_is_contained_and_seeded() {
        let d = Domain::<f64>::cube(2, 0.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let pts = sample_uniform(&d, 3, &mut rng);
        assert_eq!(pts.len(), 3);
        assert!(pts.iter().all(|p| d.contains(p)));

        let mut rng2 = ChaCha12Rng::seed_from_u64(7);
        let pts2 = sample_uniform(&d, 3, &mut rng2);
        assert_eq!(pts, pts2);
    }

    #[test]
    fn sample_uniform_mean_is_centered() {
        let d = Domain::<f64>::cube(1, 0.0, 1.0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let pts = sample_uniform(&d, 10_000, &mut rng);
        let mean = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        assert!((0.47..=0.53).contains(&mean), "mean {mean}");
    }

    #[test]
    fn minimizers_attain_the_known_minimum() {
        for b in all_benchmarks::<f64>() {
            for m in b.known_minimizers() {
                assert!(
                    b.domain().contains(m),
                    "{} minimizer outside domain",
                    b.name()
                );
                let v = b.objective(m);
                assert!(
                    (v - b.known_minimum_value()).abs() < 1e-6,
                    "{}: f(minimizer) = {v}, expected {}",
                    b.name(),
                    b.known_minimum_value()
                );
            }
        }
    }

    #[test]
    fn known_minimum_is_a_lower_bound_on_uniform_samples() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        for b in all_benchmarks::<f64>() {
            let best = sample_uniform(b.domain(), 10_000, &mut rng)
                .iter()
                .map(|p| b.objective(p))
                .fold(f64::INFINITY, f64::min);
            assert!(
                best >= b.known_minimum_value() - 1e-9,
                "{}: sampled {best} below known minimum {}",
                b.name(),
                b.known_minimum_value()
            );
        }
    }

    #[test]
    fn invalid_domains_are_rejected() {
        assert!(Domain::<f64>::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Domain::<f64>::new(vec![0.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(Domain::<f64>::new(vec![], vec![]).is_err());
    }
}
