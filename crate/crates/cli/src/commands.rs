//! The four subcommands: run, compare, ratio-demo, list-benchmarks.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

use boggn_core::blackbox::{benchmark_by_name, Domain, BENCHMARK_NAMES};
use boggn_core::dataset::LabeledSet;
use boggn_core::laplace::{ggn_posterior, train_map, PredictiveSampler};
use boggn_core::mlp::MlpSpec;
use boggn_core::optimizer::run_with_options;
use boggn_core::tpe_kde::{kde_fit, relative_ratio};
use boggn_core::two_gaussians::{linspace, TwoGaussians};
use boggn_core::TrainConfig64;

use crate::config::RunConfig;
use crate::output::{
    csv_bytes, list_run_files, quantile, read_meta, records_from_jsonl, records_to_jsonl, run_file,
    write_atomic, write_meta, CsvField, RunMeta,
};
use crate::CliError;

/// Execute the configured replications and persist traces plus a summary.
///
/// Output layout under `config.output_dir`:
/// `run-<seed>.jsonl` per replication, `summary.csv`, `meta.json`, and the
/// verbatim input config as `config.txt`.
pub fn cmd_run(config: &RunConfig, raw_config: &str) -> Result<(), CliError> {
    let bench = benchmark_by_name::<f64>(&config.benchmark)
        .map_err(|e| CliError::config(e.to_string()))?
        .with_noise_sigma(config.noise_sigma);
    let n_init = config
        .n_init
        .unwrap_or_else(|| 5.max(bench.domain().dim() + 1));
    if config.budget <= n_init {
        return Err(CliError::config(format!(
            "budget ({}) must exceed n_init ({n_init})",
            config.budget
        )));
    }

    let dir = &config.output_dir;
    fs::create_dir_all(dir).map_err(CliError::runtime_io)?;
    write_atomic(&dir.join("config.txt"), raw_config.as_bytes())?;
    write_meta(
        dir,
        &RunMeta {
            benchmark: config.benchmark.clone(),
            strategy: config.strategy.kind.as_str().to_string(),
            gamma: config.strategy.gamma,
            budget: config.budget,
            n_init,
            replications: config.replications,
            seed_base: config.seed_base,
            noise_sigma: config.noise_sigma,
        },
    )?;

    let mut summary_rows = Vec::with_capacity(config.replications);
    for rep in 0..config.replications {
        let seed = config.seed_base + rep as u64;
        let records = run_with_options(
            &bench,
            &config.strategy,
            config.budget,
            n_init,
            seed,
            &config.options,
            |_| {},
        )
        .map_err(|e| CliError::Runtime(format!("run with seed {seed}: {e}")))?;

        write_atomic(&run_file(dir, seed), &records_to_jsonl(&records)?)?;

        let last = records.last().expect("budget > 0");
        let wall: f64 = records.iter().map(|r| r.wall_time_s).sum();
        summary_rows.push(vec![
            CsvField::Int(seed),
            CsvField::Float(last.regret),
            CsvField::Float(last.best_so_far),
            CsvField::Float(wall),
        ]);
    }

    write_atomic(
        &dir.join("summary.csv"),
        &csv_bytes("seed,final_regret,best_y,wall_time_s", &summary_rows),
    )?;
    Ok(())
}

/// Aggregate one or more run directories into per-iteration regret quantiles
/// per strategy (columns: iteration, strategy, median_regret, q25, q75).
pub fn cmd_compare(run_dirs: &[PathBuf], out: Option<&Path>) -> Result<Vec<u8>, CliError> {
    if run_dirs.is_empty() {
        return Err(CliError::config("compare needs at least one run directory"));
    }

    let mut benchmark: Option<String> = None;
    // strategy name -> per-run regret sequences
    let mut groups: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();

    for dir in run_dirs {
        let meta = read_meta(dir)?;
        match &benchmark {
            None => benchmark = Some(meta.benchmark.clone()),
            Some(b) if *b != meta.benchmark => {
                return Err(CliError::config(format!(
                    "mixed benchmarks: {} in {} but {} seen earlier",
                    meta.benchmark,
                    dir.display(),
                    b
                )));
            }
            _ => {}
        }
        let files = list_run_files(dir)?;
        if files.is_empty() {
            return Err(CliError::Runtime(format!(
                "no run-*.jsonl traces in {}",
                dir.display()
            )));
        }
        let runs = groups.entry(meta.strategy.clone()).or_default();
        for f in files {
            let bytes = fs::read(&f).map_err(CliError::runtime_io)?;
            let records = records_from_jsonl(&bytes)?;
            runs.push(records.into_iter().map(|r| r.regret).collect());
        }
    }

    let mut rows = Vec::new();
    for (strategy, runs) in &groups {
        let max_len = runs.iter().map(Vec::len).max().unwrap_or(0);
        for it in 0..max_len {
            let at_it: Vec<f64> = runs.iter().filter_map(|r| r.get(it).copied()).collect();
            rows.push(vec![
                CsvField::Int(it as u64),
                CsvField::Str(strategy.clone()),
                CsvField::Float(quantile(&at_it, 0.5)),
                CsvField::Float(quantile(&at_it, 0.25)),
                CsvField::Float(quantile(&at_it, 0.75)),
            ]);
        }
    }

    let bytes = csv_bytes("iteration,strategy,median_regret,q25,q75", &rows);
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    Ok(bytes)
}

/// Grid span of the density-ratio demonstration.
pub const RATIO_DEMO_GRID: (f64, f64, usize) = (-4.0, 4.0, 161);

/// Weight-prior precision for the demonstration classifier. Fitted on 5000
/// labeled points, the demo wants a unit-scale prior; the looser optimization
/// default would widen the predictive in the tails of the grid.
pub const RATIO_DEMO_PRIOR_PRECISION: f64 = 1.0;

/// Fit both ratio estimators on the two-Gaussian construction and tabulate
/// them against the closed form on a 1-d grid
/// (columns: x, true_r_gamma, cpe_r_gamma, kde_r_gamma).
pub fn cmd_ratio_demo(
    gamma: f64,
    n_samples: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<Vec<u8>, CliError> {
    let study = TwoGaussians::<f64>::new(gamma).map_err(|e| CliError::config(e.to_string()))?;
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (points, labels) = study.sample(n_samples, &mut rng);
    let labeled = LabeledSet::from_binary_labels(points, labels, gamma)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // classifier route: MAP fit, Laplace-GGN posterior, MC predictive / gamma
    let spec = MlpSpec::default_classifier(1);
    let delta = RATIO_DEMO_PRIOR_PRECISION;
    let train = TrainConfig64 {
        seed,
        ..TrainConfig64::default()
    };
    let fitted = train_map(&spec, &labeled, delta, &train, None)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let post =
        ggn_posterior(&fitted, &labeled, delta).map_err(|e| CliError::Runtime(e.to_string()))?;
    let sampler = PredictiveSampler::draw(&post, &spec, 256, &mut rng)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // KDE route on the same labels
    let domain = Domain::cube(1, -6.0, 6.0).map_err(|e| CliError::Runtime(e.to_string()))?;
    let ell = kde_fit(&labeled.positive_points(), &domain)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let g = kde_fit(&labeled.negative_points(), &domain)
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let (lo, hi, n_grid) = RATIO_DEMO_GRID;
    let mut rows = Vec::with_capacity(n_grid);
    for x in linspace(lo, hi, n_grid) {
        let true_r = study.true_relative_ratio(x);
        let cpe_r = sampler
            .acquisition(&[x], gamma)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        let kde_r =
            relative_ratio(&ell, &g, &[x], gamma).map_err(|e| CliError::Runtime(e.to_string()))?;
        rows.push(vec![
            CsvField::Float(x),
            CsvField::Float(true_r),
            CsvField::Float(cpe_r),
            CsvField::Float(kde_r),
        ]);
    }

    let bytes = csv_bytes("x,true_r_gamma,cpe_r_gamma,kde_r_gamma", &rows);
    if let Some(path) = out {
        write_atomic(path, &bytes)?;
    }
    Ok(bytes)
}

/// Human-readable benchmark listing.
pub fn cmd_list_benchmarks() -> String {
    let mut out = String::from("name        dim  known minimum\n");
    for name in BENCHMARK_NAMES {
        let b = benchmark_by_name::<f64>(name).expect("registry names are valid");
        out.push_str(&format!(
            "{:<11} {:>3}  {:.6}\n",
            name,
            b.domain().dim(),
            b.known_minimum_value()
        ));
    }
    out
}
