//! The `key = value` run configuration: file parsing, flag merging, and
//! path resolution.
//!
//! Precedence is flag > file > built-in default. Relative paths inside a
//! config file are resolved against the file's own directory, so a corpus
//! directory stays self-contained no matter where the tool runs from.

use crate::CliError;
use cfmlp::classical::CfConfig;
use cfmlp::dataset::Preprocessing;
use cfmlp::perceptron::{ActivationKind, Topology};
use cfmlp::training::{DescentMode, GradCheckMode, TrainConfig};
use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

/// Everything a command might need, merged from defaults, the config file,
/// and command-line flags.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub ratings: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub model_dir: PathBuf,
    /// When set, primary stdout output is also written to this file.
    pub output: Option<PathBuf>,
    pub topology: Option<Topology>,
    pub activation: ActivationKind,
    pub bias: bool,
    pub preprocessing: Preprocessing,
    pub rating_threshold: f64,
    /// `None` when neither file nor flag set it; commands that need a value
    /// fall back to the stored model's threshold or the standard 0.5.
    pub decision_threshold: Option<f64>,
    pub train: TrainConfig,
    pub validation_fraction: f64,
    /// Hyperparameter axes (alpha, lambda, batch size), present only when
    /// the file configures a search.
    pub axes: Option<(Vec<f64>, Vec<f64>, Vec<usize>)>,
    pub trials: usize,
    pub cf: CfConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            ratings: None,
            features: None,
            model_dir: PathBuf::from("models"),
            output: None,
            topology: None,
            activation: ActivationKind::Sigmoid,
            bias: false,
            preprocessing: Preprocessing::MeanNormalize,
            rating_threshold: 3.5,
            decision_threshold: None,
            train: TrainConfig::default(),
            validation_fraction: 0.2,
            axes: None,
            trials: 8,
            cf: CfConfig::default(),
        }
    }
}

fn bad(key: &str, value: &str, what: &str) -> CliError {
    CliError::Config(format!("config key {key}: expected {what}, got {value:?}"))
}

fn num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T, CliError> {
    value.trim().parse().map_err(|_| bad(key, value, what))
}

fn list<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<Vec<T>, CliError> {
    value
        .split(',')
        .map(|part| num(key, part, what))
        .collect()
}

impl RunConfig {
    /// Parse a config file's text. `dir` is the file's directory, used to
    /// anchor relative paths.
    pub fn parse(text: &str, dir: &Path) -> Result<Self, CliError> {
        let mut cfg = RunConfig::default();
        let mut seen = BTreeSet::new();
        let mut alpha_values: Option<Vec<f64>> = None;
        let mut lambda_values: Option<Vec<f64>> = None;
        let mut b_values: Option<Vec<usize>> = None;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "config line {}: expected `key = value`, got {raw:?}",
                    i + 1
                )));
            };
            let key = key.trim();
            let value = value.trim();
            if !seen.insert(key.to_string()) {
                return Err(CliError::Config(format!(
                    "config line {}: duplicate key {key:?}",
                    i + 1
                )));
            }
            let path = || dir.join(value);
            match key {
                "ratings" => cfg.ratings = Some(path()),
                "features" => cfg.features = Some(path()),
                "model_dir" => cfg.model_dir = path(),
                "output" => cfg.output = Some(path()),
                "topology" => {
                    cfg.topology = Some(
                        Topology::parse(value)
                            .map_err(|e| CliError::Config(format!("config key topology: {e}")))?,
                    )
                }
                "activation" => {
                    cfg.activation = ActivationKind::parse(value)
                        .map_err(|e| CliError::Config(format!("config key activation: {e}")))?
                }
                "bias" => cfg.bias = num(key, value, "true or false")?,
                "preprocessing" => {
                    cfg.preprocessing = Preprocessing::parse(value)
                        .map_err(|e| CliError::Config(format!("config key preprocessing: {e}")))?
                }
                "rating_threshold" => cfg.rating_threshold = num(key, value, "a number")?,
                "decision_threshold" => {
                    cfg.decision_threshold = Some(num(key, value, "a number")?)
                }
                "alpha" => cfg.train.alpha = num(key, value, "a number")?,
                "lambda" => cfg.train.lambda = num(key, value, "a number")?,
                "mode" => {
                    cfg.train.mode = DescentMode::parse(value)
                        .map_err(|e| CliError::Config(format!("config key mode: {e}")))?
                }
                "batch_size" => cfg.train.batch_size = num(key, value, "an integer")?,
                "epochs" => cfg.train.epochs = num(key, value, "an integer")?,
                "seed" => cfg.train.seed = num(key, value, "an integer")?,
                "init_bound" => cfg.train.init_bound = num(key, value, "a number")?,
                "gradcheck" => {
                    cfg.train.gradcheck = GradCheckMode::parse(value)
                        .map_err(|e| CliError::Config(format!("config key gradcheck: {e}")))?
                }
                "gradcheck_gamma" => cfg.train.gradcheck_gamma = num(key, value, "a number")?,
                "gradcheck_tolerance" => {
                    cfg.train.gradcheck_tolerance = num(key, value, "a number")?
                }
                "validation_fraction" => {
                    cfg.validation_fraction = num(key, value, "a number")?
                }
                "alpha_values" => alpha_values = Some(list(key, value, "numbers")?),
                "lambda_values" => lambda_values = Some(list(key, value, "numbers")?),
                "b_values" => b_values = Some(list(key, value, "integers")?),
                "trials" => cfg.trials = num(key, value, "an integer")?,
                "cf_n" => cfg.cf.n = num(key, value, "an integer")?,
                "cf_alpha" => cfg.cf.alpha = num(key, value, "a number")?,
                "cf_lambda" => cfg.cf.lambda = num(key, value, "a number")?,
                "cf_iters" => cfg.cf.iters = num(key, value, "an integer")?,
                other => {
                    return Err(CliError::Config(format!(
                        "config line {}: unknown key {other:?}",
                        i + 1
                    )))
                }
            }
        }

        if alpha_values.is_some() || lambda_values.is_some() || b_values.is_some() {
            cfg.axes = Some((
                alpha_values.unwrap_or_else(|| vec![cfg.train.alpha]),
                lambda_values.unwrap_or_else(|| vec![cfg.train.lambda]),
                b_values.unwrap_or_else(|| vec![cfg.train.batch_size]),
            ));
        }
        Ok(cfg)
    }

    /// Load from a file path, or start from defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
                let dir = p.parent().unwrap_or_else(|| Path::new("."));
                RunConfig::parse(&text, dir)
            }
        }
    }

    pub fn require_ratings(&self) -> Result<&Path, CliError> {
        self.ratings
            .as_deref()
            .ok_or_else(|| CliError::Config("no ratings path configured".into()))
    }

    pub fn require_features(&self) -> Result<&Path, CliError> {
        self.features
            .as_deref()
            .ok_or_else(|| CliError::Config("no features path configured".into()))
    }

    pub fn require_topology(&self) -> Result<&Topology, CliError> {
        self.topology
            .as_ref()
            .ok_or_else(|| CliError::Config("no topology configured".into()))
    }
}
