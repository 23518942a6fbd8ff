//! Run configuration: a sectioned key-value file with strict validation.
//!
//! The format is deliberately small so configs can be archived verbatim next
//! to their results. Sections group keys by module; unknown sections or keys
//! are rejected with the offending line number.
//!
//! ```text
//! [run]
//! benchmark = branin
//! budget = 100
//! replications = 20
//! seed_base = 1000
//! output_dir = runs/branin-boggn
//!
//! [strategy]
//! kind = boggn
//!
//! [model]
//! prior_precision = 1.0
//! ```

use std::path::PathBuf;

use boggn_core::mlp::Activation;
use boggn_core::optimizer::{StrategyKind, SuggestStrategy};
use boggn_core::{RunOptions64, SuggestStrategy64};

use crate::CliError;

/// Fully validated experiment configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub benchmark: String,
    pub budget: usize,
    /// Defaults to `max(5, dim + 1)` when absent.
    pub n_init: Option<usize>,
    pub replications: usize,
    pub seed_base: u64,
    pub output_dir: PathBuf,
    pub noise_sigma: f64,
    pub strategy: SuggestStrategy64,
    pub options: RunOptions64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            benchmark: String::new(),
            budget: 0,
            n_init: None,
            replications: 1,
            seed_base: 0,
            output_dir: PathBuf::new(),
            noise_sigma: 0.0,
            strategy: SuggestStrategy::new(StrategyKind::Boggn),
            options: RunOptions64::default(),
        }
    }
}

fn bad(line: usize, msg: impl Into<String>) -> CliError {
    CliError::Config {
        line: Some(line),
        message: msg.into(),
    }
}

fn parse_value<T: std::str::FromStr>(line: usize, key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| bad(line, format!("key {key:?}: cannot parse value {raw:?}")))
}

fn parse_bool(line: usize, key: &str, raw: &str) -> Result<bool, CliError> {
    match raw {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(
            line,
            format!("key {key:?}: expected a boolean, got {raw:?}"),
        )),
    }
}

/// Parse and validate a configuration file's contents.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::default();
    let mut section = String::new();
    let mut saw_benchmark = false;
    let mut saw_budget = false;
    let mut saw_output = false;
    let mut saw_kind = false;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw_line.find('#') {
            Some(pos) => &raw_line[..pos],
            None => raw_line,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[') {
            let name = name
                .strip_suffix(']')
                .ok_or_else(|| bad(line_no, "unterminated section header"))?
                .trim();
            match name {
                "run" | "strategy" | "model" => section = name.to_string(),
                other => return Err(bad(line_no, format!("unknown section [{other}]"))),
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| bad(line_no, format!("expected `key = value`, got {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if value.is_empty() {
            return Err(bad(line_no, format!("key {key:?} has an empty value")));
        }

        match (section.as_str(), key) {
            ("run", "benchmark") => {
                cfg.benchmark = value.to_string();
                saw_benchmark = true;
            }
            ("run", "budget") => {
                cfg.budget = parse_value(line_no, key, value)?;
                saw_budget = true;
            }
            ("run", "n_init") => cfg.n_init = Some(parse_value(line_no, key, value)?),
            ("run", "replications") => cfg.replications = parse_value(line_no, key, value)?,
            ("run", "seed_base") => cfg.seed_base = parse_value(line_no, key, value)?,
            ("run", "output_dir") => {
                cfg.output_dir = PathBuf::from(value);
                saw_output = true;
            }
            ("run", "noise_sigma") => cfg.noise_sigma = parse_value(line_no, key, value)?,

            ("strategy", "kind") => {
                cfg.strategy.kind = value.parse().map_err(|e| bad(line_no, format!("{e}")))?;
                saw_kind = true;
            }
            ("strategy", "gamma") => cfg.strategy.gamma = parse_value(line_no, key, value)?,
            ("strategy", "epsilon") => cfg.strategy.epsilon = parse_value(line_no, key, value)?,
            ("strategy", "pool_size") => cfg.strategy.pool_size = parse_value(line_no, key, value)?,
            ("strategy", "refine_steps") => {
                cfg.strategy.refine_steps = parse_value(line_no, key, value)?
            }
            ("strategy", "mc_samples") => {
                cfg.strategy.mc_samples = parse_value(line_no, key, value)?
            }

            ("model", "hidden") => {
                let mut widths = Vec::new();
                for part in value.split(',') {
                    widths.push(parse_value(line_no, key, part.trim())?);
                }
                cfg.options.hidden_widths = widths;
            }
            ("model", "activation") => {
                cfg.options.activation = match value {
                    "relu" => Activation::Relu,
                    "elu" => Activation::Elu,
                    "tanh" => Activation::Tanh,
                    other => {
                        return Err(bad(
                            line_no,
                            format!("unknown activation {other:?} (relu, elu, tanh)"),
                        ))
                    }
                };
            }
            ("model", "prior_precision") => {
                cfg.options.prior_precision = parse_value(line_no, key, value)?
            }
            ("model", "learning_rate") => {
                cfg.options.train.learning_rate = parse_value(line_no, key, value)?
            }
            ("model", "batch_size") => {
                cfg.options.train.batch_size = parse_value(line_no, key, value)?
            }
            ("model", "max_epochs") => {
                cfg.options.train.max_epochs = parse_value(line_no, key, value)?
            }
            ("model", "warm_start") => {
                cfg.options.train.warm_start = parse_bool(line_no, key, value)?
            }

            ("", _) => return Err(bad(line_no, "key before any [section] header")),
            (sec, k) => {
                return Err(bad(
                    line_no,
                    format!("unknown key {k:?} in section [{sec}]"),
                ))
            }
        }
    }

    if !saw_benchmark {
        return Err(CliError::config("missing required key: [run] benchmark"));
    }
    if !saw_budget {
        return Err(CliError::config("missing required key: [run] budget"));
    }
    if !saw_output {
        return Err(CliError::config("missing required key: [run] output_dir"));
    }
    if !saw_kind {
        return Err(CliError::config("missing required key: [strategy] kind"));
    }
    if cfg.replications == 0 {
        return Err(CliError::config("replications must be >= 1"));
    }

    cfg.strategy
        .validate()
        .map_err(|e| CliError::config(format!("invalid strategy: {e}")))?;

    let n_init = cfg.n_init.unwrap_or(2);
    if cfg.budget <= n_init.max(2) {
        return Err(CliError::config(format!(
            "budget ({}) must exceed n_init ({})",
            cfg.budget,
            n_init.max(2)
        )));
    }
    if cfg.noise_sigma < 0.0 {
        return Err(CliError::config("noise_sigma must be >= 0"));
    }
    Ok(cfg)
}
