//! The sequential optimization driver.
//!
//! Every iteration recomputes the quantile threshold over all observations,
//! relabels, refits the surrogate for the active strategy, and suggests the
//! next point by epsilon-greedy acquisition maximization over a uniform
//! candidate pool followed by coordinate-wise local refinement. Runs are
//! fully deterministic given their seed.

use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::blackbox::{sample_uniform, Benchmark, Domain};
use crate::dataset::{LabeledSet, ObservationSet};
use crate::error::{Error, Result};
use crate::laplace::{
    ggn_posterior, log_marginal_likelihood, train_map, LaplacePosterior, PredictiveSampler,
    TrainConfig,
};
use crate::mlp::{Activation, MlpParams, MlpSpec};
use crate::scalar::Real;
use crate::tpe_kde::{kde_fit, relative_ratio, KdeModel};
use crate::Point;

/// Which surrogate drives the suggestions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    Boggn,
    Tpe,
    Random,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Boggn => "boggn",
            StrategyKind::Tpe => "tpe",
            StrategyKind::Random => "random",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boggn" => Ok(StrategyKind::Boggn),
            "tpe" => Ok(StrategyKind::Tpe),
            "random" => Ok(StrategyKind::Random),
            other => Err(Error::InvalidParameter {
                name: "strategy",
                reason: format!("{other:?} is not one of boggn, tpe, random"),
            }),
        }
    }
}

/// Suggestion policy shared by all strategies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestStrategy<T> {
    pub kind: StrategyKind,
    pub gamma: T,
    pub epsilon: T,
    pub pool_size: usize,
    pub refine_steps: usize,
    pub mc_samples: usize,
}

impl<T: Real> SuggestStrategy<T> {
    /// Defaults: `gamma = 1/3`, `epsilon = 0.1`, a 2000-point pool, 64
    /// Monte-Carlo draws. Local refinement exists to sharpen the *noisy*
    /// Monte-Carlo acquisition, so it defaults to 20 steps for the classifier
    /// strategy and 0 for the deterministic KDE ratio, where it only makes
    /// the estimator re-suggest its own incumbent.
    pub fn new(kind: StrategyKind) -> Self {
        Self {
            kind,
            gamma: T::one() / T::cast(3.0),
            epsilon: T::cast(0.1),
            pool_size: 2000,
            refine_steps: if kind == StrategyKind::Boggn { 20 } else { 0 },
            mc_samples: 64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size == 0 {
            return Err(Error::InvalidParameter {
                name: "pool_size",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.gamma > T::zero() && self.gamma < T::one()) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                reason: format!("{} is outside (0, 1)", self.gamma),
            });
        }
        if self.epsilon < T::zero() || self.epsilon > T::one() {
            return Err(Error::InvalidParameter {
                name: "epsilon",
                reason: format!("{} is outside [0, 1]", self.epsilon),
            });
        }
        if self.mc_samples == 0 {
            return Err(Error::InvalidParameter {
                name: "mc_samples",
                reason: "must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Model and training knobs that stay fixed over a run.
#[derive(Debug, Clone)]
pub struct RunOptions<T> {
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub prior_precision: T,
    pub train: TrainConfig<T>,
}

impl<T: Real> Default for RunOptions<T> {
    fn default() -> Self {
        Self {
            hidden_widths: vec![32, 32],
            activation: Activation::Relu,
            // a loose weight prior: the posterior predictive stays wide in
            // unexplored regions, which is where the exploration comes from
            prior_precision: T::cast(0.1),
            train: TrainConfig::default(),
        }
    }
}

/// Per-iteration trace entry. `wall_time_s` is diagnostic and deliberately
/// excluded from serialization so traces stay byte-reproducible.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord<T> {
    pub iteration: usize,
    pub x: Point<T>,
    pub y: T,
    pub tau: T,
    pub best_so_far: T,
    pub regret: T,
    pub evidence: Option<T>,
    pub seed: u64,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// `|min(values) - f_star|`; infinite for an empty slice.
pub fn immediate_regret<T: Real>(values: &[T], f_star: T) -> T {
    let best = values.iter().cloned().fold(T::infinity(), T::min);
    (best - f_star).abs()
}

/// How a suggestion was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuggestionSource {
    /// Initial uniform design.
    Init,
    /// The epsilon-greedy exploration branch.
    Epsilon,
    /// Acquisition argmax over the pool plus refinement.
    Acquisition,
    /// Uniform fallback because a label class was empty.
    Fallback,
}

/// A suggested point together with how it was chosen.
#[derive(Debug, Clone)]
pub struct Suggestion<T> {
    pub point: Point<T>,
    pub source: SuggestionSource,
    /// Acquisition value at the chosen point, when a surrogate was consulted.
    pub acquisition: Option<T>,
    /// Largest acquisition value seen anywhere during the search.
    pub max_acquisition_seen: Option<T>,
}

/// Epsilon-greedy acquisition maximization: uniform pool argmax (ties to the
/// lowest index) followed by `refine_steps` of shrinking coordinate search,
/// clamped to the domain.
pub fn maximize_acquisition<T: Real, F: FnMut(&[T]) -> T, R: Rng + ?Sized>(
    mut acquisition: F,
    domain: &Domain<T>,
    pool_size: usize,
    refine_steps: usize,
    epsilon: T,
    rng: &mut R,
) -> Suggestion<T> {
    let coin = T::uniform_in(rng, T::zero(), T::one());
    if coin < epsilon {
        return Suggestion {
            point: domain.sample(rng),
            source: SuggestionSource::Epsilon,
            acquisition: None,
            max_acquisition_seen: None,
        };
    }

    let pool = sample_uniform(domain, pool_size, rng);
    let mut best = pool[0].clone();
    let mut best_val = acquisition(&best);
    let mut max_seen = best_val;
    for cand in pool.iter().skip(1) {
        let v = acquisition(cand);
        max_seen = max_seen.max(v);
        if v > best_val {
            best_val = v;
            best = cand.clone();
        }
    }

    let widths = domain.widths();
    let mut step: Vec<T> = widths.iter().map(|&w| w * T::cast(0.05)).collect();
    let shrink = T::cast(0.6);
    for _ in 0..refine_steps {
        for j in 0..domain.dim() {
            for dir in [T::one(), -T::one()] {
                let mut cand = best.clone();
                cand[j] += dir * step[j];
                domain.clamp(&mut cand);
                if cand == best {
                    continue;
                }
                let v = acquisition(&cand);
                max_seen = max_seen.max(v);
                if v > best_val {
                    best_val = v;
                    best = cand;
                }
            }
        }
        for s in step.iter_mut() {
            *s *= shrink;
        }
    }

    Suggestion {
        point: best,
        source: SuggestionSource::Acquisition,
        acquisition: Some(best_val),
        max_acquisition_seen: Some(max_seen),
    }
}

/// Trained surrogate state consumed by [`suggest`].
pub enum SurrogateState<'a, T> {
    /// No model (random search).
    None,
    /// Classifier posterior for the BOGGN strategy.
    Classifier {
        post: &'a LaplacePosterior<T>,
        spec: &'a MlpSpec,
    },
    /// Class-conditional KDEs for the TPE strategy.
    Kde {
        ell: &'a KdeModel<T>,
        g: &'a KdeModel<T>,
    },
}

/// One suggestion under the given strategy; surrogate strategies must pass a
/// matching trained state. `rng` drives the epsilon coin, the pool and the
/// Monte-Carlo parameter draws, in that order.
pub fn suggest<T: Real, R: Rng + ?Sized>(
    strategy: &SuggestStrategy<T>,
    surrogate: SurrogateState<'_, T>,
    domain: &Domain<T>,
    rng: &mut R,
) -> Result<Suggestion<T>> {
    strategy.validate()?;
    match (strategy.kind, surrogate) {
        (StrategyKind::Random, _) | (_, SurrogateState::None) => Ok(maximize_acquisition(
            |_: &[T]| T::zero(),
            domain,
            1,
            0,
            T::one(),
            rng,
        )),
        (StrategyKind::Boggn, SurrogateState::Classifier { post, spec }) => {
            let sampler = PredictiveSampler::draw(post, spec, strategy.mc_samples, rng)?;
            let gamma = strategy.gamma;
            Ok(maximize_acquisition(
                |x: &[T]| sampler.acquisition(x, gamma).expect("validated query"),
                domain,
                strategy.pool_size,
                strategy.refine_steps,
                strategy.epsilon,
                rng,
            ))
        }
        (StrategyKind::Tpe, SurrogateState::Kde { ell, g }) => {
            let gamma = strategy.gamma;
            Ok(maximize_acquisition(
                |x: &[T]| relative_ratio(ell, g, x, gamma).expect("gamma > 0 cannot be singular"),
                domain,
                strategy.pool_size,
                strategy.refine_steps,
                strategy.epsilon,
                rng,
            ))
        }
        (kind, _) => Err(Error::InvalidParameter {
            name: "surrogate",
            reason: format!("surrogate state does not match strategy {kind:?}"),
        }),
    }
}

/// Everything the per-iteration audit hook can inspect.
#[derive(Debug)]
pub struct IterationAudit<'a, T> {
    pub iteration: usize,
    /// Observation count the labeling was computed from (0 during the
    /// initial design).
    pub labeled_n: usize,
    /// Threshold used for this iteration's labeling, when one was computed.
    pub tau: Option<T>,
    /// Number of label-1 observations in the training set.
    pub positive_count: usize,
    /// Whether the labeled values were pairwise distinct.
    pub distinct_values: bool,
    pub gamma: T,
    pub source: SuggestionSource,
    pub acquisition: Option<T>,
    pub max_acquisition_seen: Option<T>,
    pub point: &'a [T],
}

/// Run a full optimization loop; `budget` counts every function evaluation
/// including the `n_init` uniform design points.
pub fn run<T: Real>(
    bench: &Benchmark<T>,
    strategy: &SuggestStrategy<T>,
    budget: usize,
    n_init: usize,
    seed: u64,
) -> Result<Vec<RunRecord<T>>> {
    run_with_options(
        bench,
        strategy,
        budget,
        n_init,
        seed,
        &RunOptions::default(),
        |_| {},
    )
}

/// [`run`] with explicit model options and a per-iteration audit hook.
pub fn run_with_options<T: Real, F: FnMut(&IterationAudit<'_, T>)>(
    bench: &Benchmark<T>,
    strategy: &SuggestStrategy<T>,
    budget: usize,
    n_init: usize,
    seed: u64,
    options: &RunOptions<T>,
    mut audit: F,
) -> Result<Vec<RunRecord<T>>> {
    strategy.validate()?;
    if n_init < 2 || budget <= n_init {
        return Err(Error::InvalidParameter {
            name: "budget",
            reason: format!("need budget > n_init >= 2, got budget {budget}, n_init {n_init}"),
        });
    }

    let domain = bench.domain();
    let spec = MlpSpec {
        input_dim: domain.dim(),
        hidden_widths: options.hidden_widths.clone(),
        activation: options.activation,
    };
    let mut train_cfg = options.train.clone();
    train_cfg.seed ^= seed;

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut obs = ObservationSet::<T>::new(domain.dim());
    let mut records: Vec<RunRecord<T>> = Vec::with_capacity(budget);
    let mut prev_params: Option<MlpParams<T>> = None;

    for iteration in 0..budget {
        let t0 = Instant::now();
        let mut evidence = None;
        let mut labeled_info: Option<(T, usize, usize, bool)> = None;

        let suggestion = if iteration < n_init {
            Suggestion {
                point: domain.sample(&mut rng),
                source: SuggestionSource::Init,
                acquisition: None,
                max_acquisition_seen: None,
            }
        } else {
            let labeled = LabeledSet::label(&obs, strategy.gamma)?;
            let positives = labeled.count_positive();
            labeled_info = Some((
                labeled.tau(),
                labeled.len(),
                positives,
                values_distinct(labeled.base().values()),
            ));
            let both_classes = positives > 0 && positives < labeled.len();

            match strategy.kind {
                StrategyKind::Random => suggest(strategy, SurrogateState::None, domain, &mut rng)?,
                StrategyKind::Boggn if both_classes => {
                    let fitted = train_map(
                        &spec,
                        &labeled,
                        options.prior_precision,
                        &train_cfg,
                        prev_params.as_ref().filter(|_| train_cfg.warm_start),
                    )?;
                    let post = ggn_posterior(&fitted, &labeled, options.prior_precision)?;
                    evidence = Some(log_marginal_likelihood(&post, &spec, &labeled)?);
                    prev_params = Some(fitted);
                    suggest(
                        strategy,
                        SurrogateState::Classifier {
                            post: &post,
                            spec: &spec,
                        },
                        domain,
                        &mut rng,
                    )?
                }
                StrategyKind::Tpe if both_classes => {
                    let ell = kde_fit(&labeled.positive_points(), domain)?;
                    let g = kde_fit(&labeled.negative_points(), domain)?;
                    suggest(
                        strategy,
                        SurrogateState::Kde { ell: &ell, g: &g },
                        domain,
                        &mut rng,
                    )?
                }
                // a one-sided labeling leaves the surrogate undefined
                _ => Suggestion {
                    point: domain.sample(&mut rng),
                    source: SuggestionSource::Fallback,
                    acquisition: None,
                    max_acquisition_seen: None,
                },
            }
        };

        let x = suggestion.point.clone();
        let y = bench.evaluate(&x, &mut rng)?;
        obs.append(x.clone(), y)?;

        let (tau_opt, labeled_n, positive_count, distinct) = match labeled_info {
            Some((tau, n, pos, dist)) => (Some(tau), n, pos, dist),
            None => (None, 0, 0, true),
        };
        audit(&IterationAudit {
            iteration,
            labeled_n,
            tau: tau_opt,
            positive_count,
            distinct_values: distinct,
            gamma: strategy.gamma,
            source: suggestion.source,
            acquisition: suggestion.acquisition,
            max_acquisition_seen: suggestion.max_acquisition_seen,
            point: &x,
        });

        let best = obs.best_value().expect("nonempty after append");
        let record_tau = crate::dataset::compute_threshold(obs.values(), strategy.gamma)?;
        records.push(RunRecord {
            iteration,
            x,
            y,
            tau: record_tau,
            best_so_far: best,
            regret: immediate_regret(obs.values(), bench.known_minimum_value()),
            evidence,
            seed,
            wall_time_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(records)
}

fn values_distinct<T: Real>(values: &[T]) -> bool {
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("non-finite value"));
    sorted.windows(2).all(|w| w[0] != w[1])
}
