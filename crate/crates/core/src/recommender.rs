//! The per-user recommendation pipeline: turn one user's ratings into
//! binary training examples over preprocessed item features, train that
//! user's network, score candidates with the recorded preprocessing
//! statistics, rank them, and persist everything to a model file that
//! round-trips bit-for-bit.
//!
//! Two thresholds govern the pipeline and live on different scales:
//! `rating_threshold` converts raw ratings into like/dislike labels at
//! training time (rating scale), while `decision_threshold` is the cutoff
//! the sigmoid score is compared against at serving time (always in (0,1)).
//!
//! Model files are versioned line-oriented text. Every float is written as
//! the uppercase hexadecimal of its IEEE-754 bit pattern, so a file loads
//! back to exactly the numbers that were saved on any platform.

use crate::classical::CfModel;
use crate::dataset::{
    binarize, preprocess, BinaryLabels, FeatureMatrix, Preprocessing, RatingsDataset, ScalingStats,
};
use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::perceptron::{total_cost_regularized, ActivationKind, Network, NetworkSpec, Topology};
use crate::rng::{derive_seed, SeedDomain};
use crate::training::{DescentMode, GradCheckMode, TrainConfig};
use crate::tuning::train_candidate;
use std::collections::BTreeSet;
use std::io::{BufRead, Write};

/// Pipeline-level knobs layered on top of [`TrainConfig`].
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub train: TrainConfig,
    /// Transform applied to the feature columns before training and,
    /// through the recorded statistics, before every later scoring call.
    pub preprocessing: Preprocessing,
    /// Ratings at or above this count as "liked" when building labels.
    pub rating_threshold: f64,
    /// Scores at or above this are recommended; always in (0, 1).
    pub decision_threshold: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            train: TrainConfig::default(),
            preprocessing: Preprocessing::MeanNormalize,
            rating_threshold: 3.5,
            decision_threshold: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if !self.rating_threshold.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "rating_threshold must be finite, got {}",
                self.rating_threshold
            )));
        }
        if !(self.decision_threshold > 0.0 && self.decision_threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decision_threshold must lie strictly between 0 and 1, got {}",
                self.decision_threshold
            )));
        }
        Ok(())
    }
}

/// One user's trained network plus everything needed to score new items
/// exactly as training did: the preprocessing statistics, the decision
/// threshold, and the effective training config (per-user seed included).
#[derive(Clone, Debug, PartialEq)]
pub struct UserModel {
    user_id: String,
    net: Network,
    stats: ScalingStats,
    threshold: f64,
    config: TrainConfig,
    final_cost: f64,
    /// `Some(label)` when every training example carried the same label —
    /// the model trains but its scores saturate toward that class.
    single_class: Option<u8>,
}

impl UserModel {
    /// Assemble a model, enforcing the pipeline invariants: statistics as
    /// wide as the network input, a single output unit, and a decision
    /// threshold inside (0, 1).
    pub fn new(
        user_id: String,
        net: Network,
        stats: ScalingStats,
        threshold: f64,
        config: TrainConfig,
        final_cost: f64,
        single_class: Option<u8>,
    ) -> Result<Self> {
        if stats.columns.len() != net.topology().input_size() {
            return Err(Error::ModelShape(format!(
                "scaling statistics cover {} columns but the network takes {} inputs",
                stats.columns.len(),
                net.topology().input_size()
            )));
        }
        if net.topology().output_size() != 1 {
            return Err(Error::ModelShape(format!(
                "user models are single-output; topology {} ends in {}",
                net.topology(),
                net.topology().output_size()
            )));
        }
        if !(threshold > 0.0 && threshold < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "decision threshold must lie strictly between 0 and 1, got {threshold}"
            )));
        }
        Ok(UserModel {
            user_id,
            net,
            stats,
            threshold,
            config,
            final_cost,
            single_class,
        })
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn net(&self) -> &Network {
        &self.net
    }

    pub fn stats(&self) -> &ScalingStats {
        &self.stats
    }

    /// The serving-time decision threshold T.
    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// The effective training config; its seed is this user's derived seed.
    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Regularized training cost at the end of training.
    pub fn final_cost(&self) -> f64 {
        self.final_cost
    }

    pub fn single_class(&self) -> Option<u8> {
        self.single_class
    }
}

/// One scored candidate.
#[derive(Clone, Debug, PartialEq)]
pub struct Recommendation {
    pub item_id: String,
    /// The network output h(x), in (0, 1).
    pub score: f64,
    /// True iff `score >= threshold` (the boundary counts).
    pub recommended: bool,
}

/// The matrix-factorization counterpart of [`UserModel`]: the joint factors
/// plus the id vocabularies they were trained over, making the saved file
/// self-contained.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassicalModel {
    model: CfModel,
    item_ids: Vec<String>,
    user_ids: Vec<String>,
}

impl ClassicalModel {
    pub fn new(model: CfModel, item_ids: Vec<String>, user_ids: Vec<String>) -> Result<Self> {
        if item_ids.len() != model.n_items() || user_ids.len() != model.n_users() {
            return Err(Error::ModelShape(format!(
                "factor matrices cover {} items x {} users but {} item ids and {} user ids were supplied",
                model.n_items(),
                model.n_users(),
                item_ids.len(),
                user_ids.len()
            )));
        }
        Ok(ClassicalModel {
            model,
            item_ids,
            user_ids,
        })
    }

    pub fn model(&self) -> &CfModel {
        &self.model
    }

    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    pub fn user_position(&self, user_id: &str) -> Option<usize> {
        self.user_ids.iter().position(|u| u == user_id)
    }

    pub fn item_position(&self, item_id: &str) -> Option<usize> {
        self.item_ids.iter().position(|i| i == item_id)
    }
}

/// Either kind of persisted model.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelFile {
    Perceptron(UserModel),
    Classical(ClassicalModel),
}

/// One training example per item the user rated: preprocessed feature row,
/// binary label. `features` must already carry the preprocessing applied.
pub fn build_user_examples(
    user: usize,
    labels: &BinaryLabels,
    features: &FeatureMatrix,
) -> Result<Vec<(Vector, Vector)>> {
    let examples: Vec<(Vector, Vector)> = labels
        .iter()
        .filter(|&((_, u), _)| u == user)
        .map(|((item, _), label)| {
            (
                features.row_vector(item),
                Vector::new(vec![f64::from(label)]),
            )
        })
        .collect();
    if examples.is_empty() {
        return Err(Error::ColdUser(format!("index {user}")));
    }
    Ok(examples)
}

/// Run the full per-user pipeline: preprocess the raw features, binarize
/// the user's ratings, train a fresh network under a seed derived from the
/// base seed and the user's index, and package the result.
pub fn train_user(
    dataset: &RatingsDataset,
    features: &FeatureMatrix,
    spec: &NetworkSpec,
    cfg: &PipelineConfig,
    user: usize,
) -> Result<UserModel> {
    cfg.validate()?;
    assert!(user < dataset.n_users(), "user index out of range");
    let user_id = dataset.user_id(user).to_string();
    if dataset.items_rated_by(user).is_empty() {
        return Err(Error::ColdUser(user_id));
    }
    if spec.topology.input_size() != features.n_features() {
        return Err(Error::InvalidDimensions {
            op: "train_user",
            detail: format!(
                "topology {} takes {} inputs but the corpus has {} features",
                spec.topology,
                spec.topology.input_size(),
                features.n_features()
            ),
        });
    }
    if spec.topology.output_size() != 1 {
        return Err(Error::InvalidConfig(format!(
            "the recommendation pipeline trains single-output networks; topology {} ends in {}",
            spec.topology,
            spec.topology.output_size()
        )));
    }

    let preprocessed = preprocess(features, cfg.preprocessing);
    let labels = binarize(dataset, cfg.rating_threshold);
    let examples = build_user_examples(user, &labels, &preprocessed)?;
    let classes: BTreeSet<u8> = examples.iter().map(|(_, y)| y.get(0) as u8).collect();
    let single_class = if classes.len() == 1 {
        classes.first().copied()
    } else {
        None
    };

    let effective = TrainConfig {
        seed: derive_seed(cfg.train.seed, SeedDomain::UserModel, user as u64),
        ..cfg.train.clone()
    };
    let trained = train_candidate(spec, &effective, &examples)?;
    let final_cost = total_cost_regularized(&trained, &examples, effective.lambda)?;
    let stats = preprocessed
        .stats()
        .cloned()
        .expect("preprocess always records statistics");
    UserModel::new(
        user_id,
        trained,
        stats,
        cfg.decision_threshold,
        effective,
        final_cost,
        single_class,
    )
}

/// Score one candidate: apply the model's recorded scaling statistics to
/// the raw feature vector, then forward-propagate.
pub fn score(model: &UserModel, raw_features: &Vector) -> Result<f64> {
    let scaled = model.stats.apply_to_vector(raw_features)?;
    Ok(model.net.forward(&scaled)?.output().get(0))
}

/// Score every candidate and rank: score descending, ties by item id
/// ascending. A candidate is recommended iff its score clears the model's
/// threshold (boundary included).
pub fn recommend(
    model: &UserModel,
    candidates: &[(String, Vector)],
) -> Result<Vec<Recommendation>> {
    let mut out = Vec::with_capacity(candidates.len());
    for (item_id, raw) in candidates {
        let s = score(model, raw)?;
        out.push(Recommendation {
            item_id: item_id.clone(),
            score: s,
            recommended: s >= model.threshold,
        });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.item_id.cmp(&b.item_id)));
    Ok(out)
}

/// Render recommendations as a fixed-width table, one candidate per line:
/// item id, score, recommended flag. Stable bytes for stable inputs.
pub fn format_recommendations(recommendations: &[Recommendation]) -> String {
    let width = recommendations
        .iter()
        .map(|r| r.item_id.len())
        .chain([7])
        .max()
        .unwrap();
    let mut out = String::new();
    out.push_str(&format!("{:<width$}  score     recommended\n", "item_id"));
    for r in recommendations {
        out.push_str(&format!(
            "{:<width$}  {:.6}  {}\n",
            r.item_id,
            r.score,
            if r.recommended { "yes" } else { "no" }
        ));
    }
    out
}

const MODEL_HEADER: &str = "cfmlp-model v1";
const MODEL_VERSION: &str = "1";

fn hex_f64(v: f64) -> String {
    format!("{:016X}", v.to_bits())
}

fn parse_hex_f64(token: &str, line: usize) -> Result<f64> {
    u64::from_str_radix(token, 16)
        .map(f64::from_bits)
        .map_err(|_| Error::ModelCorrupt {
            line,
            message: format!("expected a 16-digit hex float, got {token:?}"),
        })
}

fn parse_int<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::ModelCorrupt {
        line,
        message: format!("expected {what}, got {token:?}"),
    })
}

/// Write a perceptron model file.
pub fn save_user_model(model: &UserModel, sink: &mut impl Write) -> Result<()> {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    out.push_str("kind perceptron\n");
    out.push_str(&format!("user {}\n", model.user_id));
    out.push_str(&format!("topology {}\n", model.net.topology()));
    out.push_str(&format!("activation {}\n", model.net.activation().as_str()));
    out.push_str(&format!("bias {}\n", model.net.bias()));
    out.push_str(&format!("preprocessing {}\n", model.stats.kind.as_str()));
    out.push_str(&format!(
        "single_class {}\n",
        match model.single_class {
            None => "none".to_string(),
            Some(label) => label.to_string(),
        }
    ));
    out.push_str(&format!("threshold {}\n", hex_f64(model.threshold)));
    out.push_str(&format!("final_cost {}\n", hex_f64(model.final_cost)));
    let c = &model.config;
    out.push_str(&format!("train_alpha {}\n", hex_f64(c.alpha)));
    out.push_str(&format!("train_lambda {}\n", hex_f64(c.lambda)));
    out.push_str(&format!("train_mode {}\n", c.mode.as_str()));
    out.push_str(&format!("train_batch_size {}\n", c.batch_size));
    out.push_str(&format!("train_epochs {}\n", c.epochs));
    out.push_str(&format!("train_seed {}\n", c.seed));
    out.push_str(&format!("train_init_bound {}\n", hex_f64(c.init_bound)));
    out.push_str(&format!("train_gradcheck {}\n", c.gradcheck.as_str()));
    out.push_str(&format!("train_gradcheck_gamma {}\n", hex_f64(c.gradcheck_gamma)));
    out.push_str(&format!(
        "train_gradcheck_tolerance {}\n",
        hex_f64(c.gradcheck_tolerance)
    ));
    out.push_str(&format!("train_paper_literal {}\n", c.paper_literal_backprop));
    out.push_str(&format!("stats {}\n", model.stats.columns.len()));
    for (i, s) in model.stats.columns.iter().enumerate() {
        out.push_str(&format!(
            "stat {i} {} {} {} {} {}\n",
            hex_f64(s.mean),
            hex_f64(s.min),
            hex_f64(s.max),
            hex_f64(s.std),
            hex_f64(s.max_abs)
        ));
    }
    out.push_str(&format!("weights {}\n", model.net.weights().len()));
    for (l, w) in model.net.weights().iter().enumerate() {
        out.push_str(&format!("layer {l} {} {}\n", w.rows(), w.cols()));
        for r in 0..w.rows() {
            let row: Vec<String> = (0..w.cols()).map(|c| hex_f64(w.get(r, c))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    sink.write_all(out.as_bytes())?;
    Ok(())
}

/// Write a classical model file.
pub fn save_classical_model(model: &ClassicalModel, sink: &mut impl Write) -> Result<()> {
    let mut out = String::new();
    out.push_str(MODEL_HEADER);
    out.push('\n');
    out.push_str("kind classical\n");
    out.push_str(&format!("features {}\n", model.model.n_features()));
    out.push_str(&format!("item_count {}\n", model.model.n_items()));
    out.push_str(&format!("user_count {}\n", model.model.n_users()));
    let mut rows = |label: &str, ids: &[String], m: &Matrix| {
        for (i, id) in ids.iter().enumerate() {
            out.push_str(&format!("{label} {id}\n"));
            let row: Vec<String> = (0..m.cols()).map(|c| hex_f64(m.get(i, c))).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    };
    rows("item", &model.item_ids, model.model.x());
    rows("user", &model.user_ids, model.model.theta());
    out.push_str("end\n");
    sink.write_all(out.as_bytes())?;
    Ok(())
}

/// Sequential reader over a model file's lines with 1-based positions.
struct ModelLines {
    lines: Vec<String>,
    pos: usize,
}

impl ModelLines {
    fn read(source: &mut impl BufRead) -> Result<Self> {
        let mut lines = Vec::new();
        for line in source.lines() {
            lines.push(line?);
        }
        Ok(ModelLines { lines, pos: 0 })
    }

    /// The next line and its 1-based number.
    fn next(&mut self) -> Result<(usize, &str)> {
        let number = self.pos + 1;
        let line = self.lines.get(self.pos).ok_or(Error::ModelCorrupt {
            line: number,
            message: "unexpected end of file".into(),
        })?;
        self.pos += 1;
        Ok((number, line))
    }

    /// The next line must be `key` followed by a value; returns (line
    /// number, value).
    fn expect(&mut self, key: &str) -> Result<(usize, String)> {
        let (number, line) = self.next()?;
        match line.strip_prefix(key).and_then(|rest| rest.strip_prefix(' ')) {
            Some(value) => Ok((number, value.to_string())),
            None => Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected a {key:?} line, got {line:?}"),
            }),
        }
    }

    /// The next line must equal `literal` exactly.
    fn expect_exact(&mut self, literal: &str) -> Result<()> {
        let (number, line) = self.next()?;
        if line == literal {
            Ok(())
        } else {
            Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected {literal:?}, got {line:?}"),
            })
        }
    }

    /// A line of exactly `n` hex floats.
    fn hex_row(&mut self, n: usize) -> Result<Vec<f64>> {
        let (number, line) = self.next()?;
        let line = line.to_string();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != n {
            return Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected {n} values, found {}", tokens.len()),
            });
        }
        tokens.iter().map(|t| parse_hex_f64(t, number)).collect()
    }
}

/// Read either kind of model file, dispatching on its `kind` line.
pub fn load_model_file(source: &mut impl BufRead) -> Result<ModelFile> {
    let mut lines = ModelLines::read(source)?;
    let (number, header) = lines.next()?;
    if header != MODEL_HEADER {
        return match header.strip_prefix("cfmlp-model v") {
            Some(found) => Err(Error::ModelVersion {
                found: found.to_string(),
                expected: MODEL_VERSION.to_string(),
            }),
            None => Err(Error::ModelCorrupt {
                line: number,
                message: format!("not a model file (first line {header:?})"),
            }),
        };
    }
    let (number, kind) = lines.expect("kind")?;
    match kind.as_str() {
        "perceptron" => load_perceptron(&mut lines).map(ModelFile::Perceptron),
        "classical" => load_classical(&mut lines).map(ModelFile::Classical),
        other => Err(Error::ModelCorrupt {
            line: number,
            message: format!("unknown model kind {other:?}"),
        }),
    }
}

fn load_perceptron(lines: &mut ModelLines) -> Result<UserModel> {
    let (_, user_id) = lines.expect("user")?;
    let (number, topology) = lines.expect("topology")?;
    let topology = Topology::parse(&topology).map_err(|e| Error::ModelCorrupt {
        line: number,
        message: e.to_string(),
    })?;
    let (number, activation) = lines.expect("activation")?;
    let activation = ActivationKind::parse(&activation).map_err(|e| Error::ModelCorrupt {
        line: number,
        message: e.to_string(),
    })?;
    let (number, bias) = lines.expect("bias")?;
    let bias: bool = parse_int(&bias, number, "true or false")?;
    let (number, preprocessing) = lines.expect("preprocessing")?;
    let preprocessing = Preprocessing::parse(&preprocessing).map_err(|e| Error::ModelCorrupt {
        line: number,
        message: e.to_string(),
    })?;
    let (number, single_class) = lines.expect("single_class")?;
    let single_class = match single_class.as_str() {
        "none" => None,
        "0" => Some(0),
        "1" => Some(1),
        other => {
            return Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected none, 0, or 1, got {other:?}"),
            })
        }
    };
    let (number, threshold) = lines.expect("threshold")?;
    let threshold = parse_hex_f64(&threshold, number)?;
    let (number, final_cost) = lines.expect("final_cost")?;
    let final_cost = parse_hex_f64(&final_cost, number)?;

    let (number, alpha) = lines.expect("train_alpha")?;
    let alpha = parse_hex_f64(&alpha, number)?;
    let (number, lambda) = lines.expect("train_lambda")?;
    let lambda = parse_hex_f64(&lambda, number)?;
    let (number, mode) = lines.expect("train_mode")?;
    let mode = DescentMode::parse(&mode).map_err(|e| Error::ModelCorrupt {
        line: number,
        message: e.to_string(),
    })?;
    let (number, batch_size) = lines.expect("train_batch_size")?;
    let batch_size = parse_int(&batch_size, number, "a batch size")?;
    let (number, epochs) = lines.expect("train_epochs")?;
    let epochs = parse_int(&epochs, number, "an epoch count")?;
    let (number, seed) = lines.expect("train_seed")?;
    let seed = parse_int(&seed, number, "a seed")?;
    let (number, init_bound) = lines.expect("train_init_bound")?;
    let init_bound = parse_hex_f64(&init_bound, number)?;
    let (number, gradcheck) = lines.expect("train_gradcheck")?;
    let gradcheck = GradCheckMode::parse(&gradcheck).map_err(|e| Error::ModelCorrupt {
        line: number,
        message: e.to_string(),
    })?;
    let (number, gamma) = lines.expect("train_gradcheck_gamma")?;
    let gradcheck_gamma = parse_hex_f64(&gamma, number)?;
    let (number, tolerance) = lines.expect("train_gradcheck_tolerance")?;
    let gradcheck_tolerance = parse_hex_f64(&tolerance, number)?;
    let (number, literal) = lines.expect("train_paper_literal")?;
    let paper_literal_backprop: bool = parse_int(&literal, number, "true or false")?;
    let config = TrainConfig {
        alpha,
        lambda,
        mode,
        batch_size,
        epochs,
        seed,
        init_bound,
        gradcheck,
        gradcheck_gamma,
        gradcheck_tolerance,
        paper_literal_backprop,
    };

    let (number, n_stats) = lines.expect("stats")?;
    let n_stats: usize = parse_int(&n_stats, number, "a column count")?;
    let mut columns = Vec::with_capacity(n_stats);
    for i in 0..n_stats {
        let (number, value) = lines.expect("stat")?;
        let tokens: Vec<&str> = value.split_whitespace().collect();
        if tokens.len() != 6 || tokens[0] != i.to_string() {
            return Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected \"stat {i}\" with 5 values"),
            });
        }
        columns.push(crate::dataset::ColumnStats {
            mean: parse_hex_f64(tokens[1], number)?,
            min: parse_hex_f64(tokens[2], number)?,
            max: parse_hex_f64(tokens[3], number)?,
            std: parse_hex_f64(tokens[4], number)?,
            max_abs: parse_hex_f64(tokens[5], number)?,
        });
    }
    let stats = ScalingStats {
        kind: preprocessing,
        columns,
    };

    let spec = NetworkSpec::new(topology, activation).with_bias(bias);
    let (number, n_layers) = lines.expect("weights")?;
    let n_layers: usize = parse_int(&n_layers, number, "a layer count")?;
    if n_layers != spec.weight_layers() {
        return Err(Error::ModelShape(format!(
            "file declares {n_layers} weight layers but topology {} needs {}",
            spec.topology,
            spec.weight_layers()
        )));
    }
    let mut weights = Vec::with_capacity(n_layers);
    for l in 0..n_layers {
        let (number, dims) = lines.expect("layer")?;
        let tokens: Vec<&str> = dims.split_whitespace().collect();
        if tokens.len() != 3 || tokens[0] != l.to_string() {
            return Err(Error::ModelCorrupt {
                line: number,
                message: format!("expected \"layer {l} <rows> <cols>\""),
            });
        }
        let rows: usize = parse_int(tokens[1], number, "a row count")?;
        let cols: usize = parse_int(tokens[2], number, "a column count")?;
        if (rows, cols) != spec.weight_shape(l) {
            return Err(Error::ModelShape(format!(
                "layer {l} is {rows}x{cols} but topology {} needs {}x{}",
                spec.topology,
                spec.weight_shape(l).0,
                spec.weight_shape(l).1
            )));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(lines.hex_row(cols)?);
        }
        weights.push(Matrix::new(rows, cols, data).map_err(|e| Error::ModelShape(e.to_string()))?);
    }
    lines.expect_exact("end")?;
    let net = Network::new(spec, weights).map_err(|e| Error::ModelShape(e.to_string()))?;
    UserModel::new(
        user_id,
        net,
        stats,
        threshold,
        config,
        final_cost,
        single_class,
    )
}

fn load_classical(lines: &mut ModelLines) -> Result<ClassicalModel> {
    let (number, n) = lines.expect("features")?;
    let n: usize = parse_int(&n, number, "a feature count")?;
    let (number, n_items) = lines.expect("item_count")?;
    let n_items: usize = parse_int(&n_items, number, "an item count")?;
    let (number, n_users) = lines.expect("user_count")?;
    let n_users: usize = parse_int(&n_users, number, "a user count")?;
    let mut read_rows = |label: &str, count: usize| -> Result<(Vec<String>, Vec<f64>)> {
        let mut ids = Vec::with_capacity(count);
        let mut data = Vec::with_capacity(count * n);
        for _ in 0..count {
            let (_, id) = lines.expect(label)?;
            ids.push(id);
            data.extend(lines.hex_row(n)?);
        }
        Ok((ids, data))
    };
    let (item_ids, x_data) = read_rows("item", n_items)?;
    let (user_ids, theta_data) = read_rows("user", n_users)?;
    lines.expect_exact("end")?;
    let x = Matrix::new(n_items, n, x_data).map_err(|e| Error::ModelShape(e.to_string()))?;
    let theta = Matrix::new(n_users, n, theta_data).map_err(|e| Error::ModelShape(e.to_string()))?;
    let model = CfModel::new(x, theta).map_err(|e| Error::ModelShape(e.to_string()))?;
    ClassicalModel::new(model, item_ids, user_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classical::{cf_train, CfConfig};
    use crate::dataset::ColumnStats;
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use std::collections::BTreeMap;
    use std::io::Cursor;

    /// A corpus where user u0 likes exactly the items whose first feature
    /// is high, u1 likes everything, and u2 rated nothing... except u2 is
    /// only present when `with_cold` asks for it.
    fn corpus(with_cold: bool) -> (RatingsDataset, FeatureMatrix) {
        let mut user_ids = vec!["u0".to_string(), "u1".to_string()];
        if with_cold {
            user_ids.push("u2".to_string());
        }
        let item_ids: Vec<String> = (0..12).map(|i| format!("i{i:02}")).collect();
        let mut rng = rng_from_seed(500);
        let mut rows = Vec::new();
        let mut ratings = BTreeMap::new();
        for item in 0..12 {
            let hi = item % 2 == 0;
            let f0 = if hi {
                rng.gen_range(0.7..1.0)
            } else {
                rng.gen_range(0.0..0.3)
            };
            let f1: f64 = rng.gen_range(0.0..1.0);
            let f2: f64 = rng.gen_range(0.0..1.0);
            rows.push(vec![f0, f1, f2]);
            if item < 10 {
                ratings.insert((item, 0), if hi { 5.0 } else { 1.0 });
            }
            ratings.insert((item, 1), 4.0 + f64::from(item % 2 == 0));
        }
        let dataset =
            RatingsDataset::from_parts(user_ids, item_ids, ratings).unwrap();
        let features = FeatureMatrix::from_matrix(Matrix::from_rows(&rows).unwrap());
        (dataset, features)
    }

    fn spec(sizes: &[usize]) -> NetworkSpec {
        NetworkSpec::new(Topology::new(sizes.to_vec()).unwrap(), ActivationKind::Sigmoid)
    }

    fn quick_cfg() -> PipelineConfig {
        PipelineConfig {
            train: TrainConfig {
                alpha: 0.8,
                epochs: 200,
                seed: 42,
                ..TrainConfig::default()
            },
            ..PipelineConfig::default()
        }
    }

    fn identity_stats(columns: usize) -> ScalingStats {
        ScalingStats {
            kind: Preprocessing::FeatureScale,
            columns: vec![
                ColumnStats {
                    mean: 0.0,
                    min: -1.0,
                    max: 1.0,
                    std: 1.0,
                    max_abs: 1.0,
                };
                columns
            ],
        }
    }

    #[test]
    fn examples_cover_exactly_the_rated_items() {
        let (dataset, features) = corpus(false);
        let labels = binarize(&dataset, 3.5);
        let examples = build_user_examples(0, &labels, &features).unwrap();
        assert_eq!(examples.len(), 10);
        let all = build_user_examples(1, &labels, &features).unwrap();
        assert_eq!(all.len(), 12);
    }

    #[test]
    fn example_labels_match_binarization() {
        let (dataset, features) = corpus(false);
        let labels = binarize(&dataset, 3.5);
        let examples = build_user_examples(0, &labels, &features).unwrap();
        for (k, item) in dataset.items_rated_by(0).into_iter().enumerate() {
            let expected = f64::from(dataset.rating(item, 0).unwrap() >= 3.5);
            assert_eq!(examples[k].1.get(0), expected);
        }
    }

    #[test]
    fn cold_users_are_hard_errors() {
        let (dataset, features) = corpus(true);
        let labels = binarize(&dataset, 3.5);
        assert!(matches!(
            build_user_examples(2, &labels, &features),
            Err(Error::ColdUser(_))
        ));
        let err = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 2).unwrap_err();
        match err {
            Error::ColdUser(who) => assert_eq!(who, "u2"),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn trained_user_model_is_deterministic() {
        let (dataset, features) = corpus(false);
        let s = spec(&[3, 2, 1]);
        let cfg = quick_cfg();
        let a = train_user(&dataset, &features, &s, &cfg, 0).unwrap();
        let b = train_user(&dataset, &features, &s, &cfg, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_users_get_distinct_derived_seeds() {
        let (dataset, features) = corpus(false);
        let s = spec(&[3, 2, 1]);
        let cfg = quick_cfg();
        let a = train_user(&dataset, &features, &s, &cfg, 0).unwrap();
        let b = train_user(&dataset, &features, &s, &cfg, 1).unwrap();
        assert_ne!(a.seed(), b.seed());
        assert_ne!(a.seed(), cfg.train.seed);
    }

    #[test]
    fn thresholded_tastes_train_to_low_cost() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        assert!(model.final_cost() < 0.3, "final cost {}", model.final_cost());
        assert_eq!(model.single_class(), None);
    }

    #[test]
    fn single_class_users_are_flagged_and_saturate_high() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 1).unwrap();
        assert_eq!(model.single_class(), Some(1));
        for item in dataset.items_rated_by(1) {
            let s = score(&model, &features.row_vector(item)).unwrap();
            assert!(s > 0.8, "training item {item} scored only {s}");
        }
    }

    #[test]
    fn scoring_replays_training_preprocessing_exactly() {
        let (dataset, features) = corpus(false);
        let cfg = quick_cfg();
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &cfg, 0).unwrap();
        let preprocessed = preprocess(&features, cfg.preprocessing);
        for item in 0..dataset.n_items() {
            let via_score = score(&model, &features.row_vector(item)).unwrap();
            let via_forward = model
                .net()
                .forward(&preprocessed.row_vector(item))
                .unwrap()
                .output()
                .get(0);
            assert_eq!(via_score, via_forward);
        }
    }

    #[test]
    fn zero_weight_model_scores_half_everywhere() {
        let model = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[3, 2, 1])),
            identity_stats(3),
            0.5,
            TrainConfig::default(),
            0.0,
            None,
        )
        .unwrap();
        let mut rng = rng_from_seed(7);
        for _ in 0..5 {
            let x = Vector::new((0..3).map(|_| rng.gen_range(-2.0..2.0)).collect());
            assert_eq!(score(&model, &x).unwrap(), 0.5);
        }
    }

    #[test]
    fn score_rejects_wrong_widths() {
        let model = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[3, 2, 1])),
            identity_stats(3),
            0.5,
            TrainConfig::default(),
            0.0,
            None,
        )
        .unwrap();
        assert!(score(&model, &Vector::new(vec![1.0, 2.0])).is_err());
    }

    #[test]
    fn model_invariants_are_enforced() {
        let bad_stats = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[3, 2, 1])),
            identity_stats(2),
            0.5,
            TrainConfig::default(),
            0.0,
            None,
        );
        assert!(matches!(bad_stats, Err(Error::ModelShape(_))));
        let multi_output = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[3, 2, 2])),
            identity_stats(3),
            0.5,
            TrainConfig::default(),
            0.0,
            None,
        );
        assert!(matches!(multi_output, Err(Error::ModelShape(_))));
        let bad_threshold = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[3, 2, 1])),
            identity_stats(3),
            1.0,
            TrainConfig::default(),
            0.0,
            None,
        );
        assert!(bad_threshold.is_err());
    }

    #[test]
    fn recommendations_sort_by_score_then_id() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        let candidates: Vec<(String, Vector)> = vec![
            ("c_high".into(), Vector::new(vec![0.9, 0.5, 0.5])),
            ("c_low".into(), Vector::new(vec![0.1, 0.5, 0.5])),
            ("b_twin".into(), Vector::new(vec![0.9, 0.5, 0.5])),
            ("a_twin".into(), Vector::new(vec![0.9, 0.5, 0.5])),
        ];
        let recs = recommend(&model, &candidates).unwrap();
        assert_eq!(recs.len(), 4);
        for pair in recs.windows(2) {
            assert!(pair[0].score >= pair[1].score);
        }
        let order: Vec<&str> = recs.iter().map(|r| r.item_id.as_str()).collect();
        assert_eq!(&order[..3], &["a_twin", "b_twin", "c_high"]);
        assert_eq!(order[3], "c_low");
        for r in &recs {
            assert_eq!(r.recommended, r.score >= model.threshold());
        }
    }

    #[test]
    fn boundary_score_counts_as_recommended() {
        let model = UserModel::new(
            "u".into(),
            Network::zeros(spec(&[2, 1])),
            identity_stats(2),
            0.5,
            TrainConfig::default(),
            0.0,
            None,
        )
        .unwrap();
        let recs = recommend(&model, &[("x".into(), Vector::new(vec![0.3, 0.4]))]).unwrap();
        assert_eq!(recs[0].score, 0.5);
        assert!(recs[0].recommended, "score exactly at threshold must recommend");
        assert!(recommend(&model, &[]).unwrap().is_empty());
    }

    #[test]
    fn recommendation_table_is_stable() {
        let recs = vec![
            Recommendation {
                item_id: "item_a".into(),
                score: 0.75,
                recommended: true,
            },
            Recommendation {
                item_id: "b".into(),
                score: 0.25,
                recommended: false,
            },
        ];
        let table = format_recommendations(&recs);
        assert_eq!(
            table,
            "item_id  score     recommended\nitem_a   0.750000  yes\nb        0.250000  no\n"
        );
    }

    #[test]
    fn perceptron_round_trip_is_value_exact() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        let mut buffer = Vec::new();
        save_user_model(&model, &mut buffer).unwrap();
        match load_model_file(&mut Cursor::new(&buffer)).unwrap() {
            ModelFile::Perceptron(loaded) => assert_eq!(loaded, model),
            ModelFile::Classical(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn round_trip_scores_are_bit_identical() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        let mut buffer = Vec::new();
        save_user_model(&model, &mut buffer).unwrap();
        let ModelFile::Perceptron(loaded) = load_model_file(&mut Cursor::new(&buffer)).unwrap()
        else {
            panic!("wrong kind");
        };
        let mut rng = rng_from_seed(9);
        for _ in 0..100 {
            let x = Vector::new((0..3).map(|_| rng.gen_range(-1.0..2.0)).collect());
            assert_eq!(score(&model, &x).unwrap(), score(&loaded, &x).unwrap());
        }
    }

    #[test]
    fn truncated_files_are_corrupt() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        let mut buffer = Vec::new();
        save_user_model(&model, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let truncated: String = text.lines().take(12).map(|l| format!("{l}\n")).collect();
        match load_model_file(&mut Cursor::new(truncated.into_bytes())) {
            Err(Error::ModelCorrupt { .. }) => {}
            other => panic!("unexpected result: {other:?}"),
        }
    }

    #[test]
    fn future_versions_are_rejected_distinctly() {
        let text = "cfmlp-model v9\nkind perceptron\n";
        match load_model_file(&mut Cursor::new(text.as_bytes().to_vec())) {
            Err(Error::ModelVersion { found, expected }) => {
                assert_eq!(found, "9");
                assert_eq!(expected, "1");
            }
            other => panic!("unexpected result: {other:?}"),
        }
        let garbage = "hello world\n";
        assert!(matches!(
            load_model_file(&mut Cursor::new(garbage.as_bytes().to_vec())),
            Err(Error::ModelCorrupt { line: 1, .. })
        ));
    }

    #[test]
    fn tampered_shapes_are_shape_errors() {
        let (dataset, features) = corpus(false);
        let model = train_user(&dataset, &features, &spec(&[3, 2, 1]), &quick_cfg(), 0).unwrap();
        let mut buffer = Vec::new();
        save_user_model(&model, &mut buffer).unwrap();
        let text = String::from_utf8(buffer).unwrap();
        let tampered = text.replace("layer 0 2 3", "layer 0 3 3");
        match load_model_file(&mut Cursor::new(tampered.into_bytes())) {
            Err(Error::ModelShape(_)) => {}
            other => panic!("unexpected result: {other:?}"),
        }
        let bad_hex = text.replace("end", "").replace("layer 1 1 2", "layer 1 1 2\nZZ");
        assert!(load_model_file(&mut Cursor::new(bad_hex.into_bytes())).is_err());
    }

    #[test]
    fn classical_round_trip_is_value_exact() {
        let (dataset, _) = corpus(false);
        let cf = cf_train(
            &dataset,
            &CfConfig {
                n: 2,
                iters: 50,
                seed: 77,
                ..CfConfig::default()
            },
        )
        .unwrap();
        let classical = ClassicalModel::new(
            cf,
            dataset.item_ids().to_vec(),
            dataset.user_ids().to_vec(),
        )
        .unwrap();
        let mut buffer = Vec::new();
        save_classical_model(&classical, &mut buffer).unwrap();
        match load_model_file(&mut Cursor::new(&buffer)).unwrap() {
            ModelFile::Classical(loaded) => {
                assert_eq!(loaded, classical);
                assert_eq!(loaded.user_position("u1"), Some(1));
                assert_eq!(loaded.item_position("i03"), Some(3));
            }
            ModelFile::Perceptron(_) => panic!("wrong kind"),
        }
    }

    #[test]
    fn classical_wrapper_checks_id_counts() {
        let (dataset, _) = corpus(false);
        let cf = cf_train(
            &dataset,
            &CfConfig {
                n: 1,
                iters: 0,
                ..CfConfig::default()
            },
        )
        .unwrap();
        assert!(matches!(
            ClassicalModel::new(cf, vec!["only_one".into()], dataset.user_ids().to_vec()),
            Err(Error::ModelShape(_))
        ));
    }

    #[test]
    fn pipeline_config_validation() {
        assert!(PipelineConfig::default().validate().is_ok());
        let bad_decision = PipelineConfig {
            decision_threshold: 1.0,
            ..PipelineConfig::default()
        };
        assert!(bad_decision.validate().is_err());
        let bad_rating = PipelineConfig {
            rating_threshold: f64::NAN,
            ..PipelineConfig::default()
        };
        assert!(bad_rating.validate().is_err());
    }

    #[test]
    fn topology_must_match_the_corpus_and_end_in_one() {
        let (dataset, features) = corpus(false);
        assert!(train_user(&dataset, &features, &spec(&[2, 1]), &quick_cfg(), 0).is_err());
        assert!(train_user(&dataset, &features, &spec(&[3, 2]), &quick_cfg(), 0).is_err());
    }
}
