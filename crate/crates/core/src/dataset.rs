//! Ratings and item-feature data: file loading, rating binarization, and
//! feature preprocessing with replayable per-column statistics.
//!
//! # File formats
//!
//! Ratings files are comma-separated `user_id,item_id,rating` rows. Feature
//! files are `item_id,f1,...,fn` rows of constant width. In both, `#` starts
//! a comment line, blank lines are ignored, and an optional header line is
//! auto-detected: if the final field of the first content row does not parse
//! as a number, that row is treated as a header and skipped. Identifiers are
//! arbitrary non-empty strings without commas; values must be finite.
//!
//! Every malformed row is a hard error naming its 1-based line number. A
//! rating appearing twice for the same (user, item) pair is an error, as is a
//! feature file that misses a rated item or names an unrated one.
//!
//! # Index discipline
//!
//! Users and items are numbered densely in first-appearance order of the
//! ratings file, and those indices are the only coordinates the numerical
//! code ever sees. Ratings are stored under `(item, user)` keys in a B-tree,
//! so iteration order is deterministic for a given file.

use std::collections::{BTreeMap, HashMap};
use std::io::BufRead;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::matrix::{Matrix, Vector};
use crate::rng::rng_from_seed;

/// A loaded ratings table with dense user/item index assignments.
#[derive(Clone, Debug)]
pub struct RatingsDataset {
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    user_index: HashMap<String, usize>,
    item_index: HashMap<String, usize>,
    /// `(item, user) -> rating`, keyed for deterministic iteration.
    ratings: BTreeMap<(usize, usize), f64>,
}

impl RatingsDataset {
    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn n_ratings(&self) -> usize {
        self.ratings.len()
    }

    /// External user ids in index order.
    pub fn user_ids(&self) -> &[String] {
        &self.user_ids
    }

    /// External item ids in index order.
    pub fn item_ids(&self) -> &[String] {
        &self.item_ids
    }

    pub fn user_index(&self, id: &str) -> Option<usize> {
        self.user_index.get(id).copied()
    }

    pub fn item_index(&self, id: &str) -> Option<usize> {
        self.item_index.get(id).copied()
    }

    pub fn user_id(&self, index: usize) -> &str {
        &self.user_ids[index]
    }

    pub fn item_id(&self, index: usize) -> &str {
        &self.item_ids[index]
    }

    /// The rating user `user` gave item `item`, if any.
    pub fn rating(&self, item: usize, user: usize) -> Option<f64> {
        self.ratings.get(&(item, user)).copied()
    }

    /// Whether the `(item, user)` pair is rated — the indicator the cost
    /// sums range over.
    pub fn is_rated(&self, item: usize, user: usize) -> bool {
        self.ratings.contains_key(&(item, user))
    }

    /// All ratings as `((item, user), rating)` in ascending key order.
    pub fn ratings(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.ratings.iter().map(|(&k, &v)| (k, v))
    }

    /// Item indices rated by `user`, ascending.
    pub fn items_rated_by(&self, user: usize) -> Vec<usize> {
        self.ratings
            .keys()
            .filter(|&&(_, u)| u == user)
            .map(|&(i, _)| i)
            .collect()
    }

    /// Build a dataset from pre-indexed parts. Intended for tests and for
    /// derived datasets (e.g. a training-side subset); validates index
    /// ranges but trusts the id tables.
    pub fn from_parts(
        user_ids: Vec<String>,
        item_ids: Vec<String>,
        ratings: BTreeMap<(usize, usize), f64>,
    ) -> Result<Self> {
        if user_ids.is_empty() || item_ids.is_empty() {
            return Err(Error::EmptyInput("dataset must have at least one user and one item"));
        }
        for &(item, user) in ratings.keys() {
            if item >= item_ids.len() || user >= user_ids.len() {
                return Err(Error::InvalidDimensions {
                    op: "RatingsDataset::from_parts",
                    detail: format!(
                        "rating key ({item}, {user}) outside {} items x {} users",
                        item_ids.len(),
                        user_ids.len()
                    ),
                });
            }
        }
        let user_index = user_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        let item_index = item_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(RatingsDataset {
            user_ids,
            item_ids,
            user_index,
            item_index,
            ratings,
        })
    }
}

/// Split a content line into comma-separated, whitespace-trimmed fields.
fn split_fields(line: &str) -> Vec<&str> {
    line.split(',').map(str::trim).collect()
}

/// Lines worth parsing: skips blanks and `#` comments, keeps 1-based numbers.
fn content_lines(reader: impl BufRead) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        out.push((i + 1, trimmed.to_string()));
    }
    Ok(out)
}

fn parse_finite(field: &str, line: usize, what: &str) -> Result<f64> {
    let value: f64 = field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{field}` is not a number"),
    })?;
    if !value.is_finite() {
        return Err(Error::Parse {
            line,
            message: format!("{what} `{field}` is not finite"),
        });
    }
    Ok(value)
}

/// Load a `user_id,item_id,rating` file.
pub fn load_ratings(reader: impl BufRead) -> Result<RatingsDataset> {
    let mut user_ids: Vec<String> = Vec::new();
    let mut item_ids: Vec<String> = Vec::new();
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut ratings: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut first_seen: HashMap<(usize, usize), usize> = HashMap::new();

    let lines = content_lines(reader)?;
    let mut rows = lines.iter();
    if let Some((_, first)) = lines.first() {
        let fields = split_fields(first);
        // Header detection: a first row whose final field is not numeric.
        if fields.len() == 3 && fields[2].parse::<f64>().is_err() {
            rows.next();
        }
    }

    for &(line, ref text) in rows {
        let fields = split_fields(text);
        if fields.len() != 3 {
            return Err(Error::Parse {
                line,
                message: format!("expected `user_id,item_id,rating`, got {} fields", fields.len()),
            });
        }
        let (user, item) = (fields[0], fields[1]);
        if user.is_empty() || item.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty user or item id".to_string(),
            });
        }
        let rating = parse_finite(fields[2], line, "rating")?;

        let u = *user_index.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            user_ids.len() - 1
        });
        let i = *item_index.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });

        if let Some(&first_line) = first_seen.get(&(i, u)) {
            return Err(Error::DuplicateRating {
                user: user.to_string(),
                item: item.to_string(),
                line,
                first_line,
            });
        }
        first_seen.insert((i, u), line);
        ratings.insert((i, u), rating);
    }

    if ratings.is_empty() {
        return Err(Error::EmptyInput("ratings file has no data rows"));
    }
    Ok(RatingsDataset {
        user_ids,
        item_ids,
        user_index,
        item_index,
        ratings,
    })
}

/// An `n_items x n_features` feature table whose row order matches the
/// companion dataset's item indices, plus the statistics of whatever
/// preprocessing produced it (absent on raw, freshly loaded data).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    x: Matrix,
    stats: Option<ScalingStats>,
}

impl FeatureMatrix {
    /// Wrap a raw matrix (no preprocessing applied) as a feature table.
    pub fn from_matrix(x: Matrix) -> Self {
        FeatureMatrix { x, stats: None }
    }

    pub fn n_items(&self) -> usize {
        self.x.rows()
    }

    pub fn n_features(&self) -> usize {
        self.x.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.x
    }

    /// Item `i`'s feature vector `x^(i)`.
    pub fn row_vector(&self, i: usize) -> Vector {
        Vector::new(self.x.row(i).to_vec())
    }

    /// Statistics of the preprocessing step that produced this matrix, if any.
    pub fn stats(&self) -> Option<&ScalingStats> {
        self.stats.as_ref()
    }
}

/// Load an `item_id,f1,...,fn` feature file aligned to `dataset`'s items.
///
/// Every item the ratings mention must appear exactly once; rows for items
/// the ratings never mention are rejected (candidate items for scoring live
/// in their own file — see [`load_candidates`]).
pub fn load_features(reader: impl BufRead, dataset: &RatingsDataset) -> Result<FeatureMatrix> {
    let lines = content_lines(reader)?;
    let mut rows = lines.iter();
    if let Some((_, first)) = lines.first() {
        let fields = split_fields(first);
        if fields.len() >= 2 && fields.last().unwrap().parse::<f64>().is_err() {
            rows.next();
        }
    }

    let mut width: Option<usize> = None;
    let mut seen_at: Vec<Option<usize>> = vec![None; dataset.n_items()];
    let mut data: Vec<Option<Vec<f64>>> = vec![None; dataset.n_items()];

    for &(line, ref text) in rows {
        let fields = split_fields(text);
        if fields.len() < 2 {
            return Err(Error::Parse {
                line,
                message: "expected an item id plus at least one feature".to_string(),
            });
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty item id".to_string(),
            });
        }
        let n = fields.len() - 1;
        match width {
            None => width = Some(n),
            Some(w) if w != n => {
                return Err(Error::Parse {
                    line,
                    message: format!("ragged row: expected {w} features, got {n}"),
                });
            }
            Some(_) => {}
        }
        let Some(index) = dataset.item_index(id) else {
            return Err(Error::UnknownItem {
                item: id.to_string(),
                line,
            });
        };
        if let Some(first_line) = seen_at[index] {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate feature row for item `{id}` (first seen at line {first_line})"
                ),
            });
        }
        seen_at[index] = Some(line);
        let mut values = Vec::with_capacity(n);
        for field in &fields[1..] {
            values.push(parse_finite(field, line, "feature value")?);
        }
        data[index] = Some(values);
    }

    let Some(width) = width else {
        return Err(Error::EmptyInput("features file has no data rows"));
    };
    let mut flat = Vec::with_capacity(dataset.n_items() * width);
    for (index, row) in data.into_iter().enumerate() {
        match row {
            Some(values) => flat.extend_from_slice(&values),
            None => {
                return Err(Error::MissingItem {
                    item: dataset.item_id(index).to_string(),
                });
            }
        }
    }
    Ok(FeatureMatrix::from_matrix(Matrix::new(
        dataset.n_items(),
        width,
        flat,
    )?))
}

/// Load candidate items to score: the same `item_id,f1,...,fn` format, but
/// ids are free — they name items the ratings have never seen. Width must
/// equal `expected_features`; duplicate ids are rejected.
pub fn load_candidates(
    reader: impl BufRead,
    expected_features: usize,
) -> Result<Vec<(String, Vector)>> {
    let lines = content_lines(reader)?;
    let mut rows = lines.iter();
    if let Some((_, first)) = lines.first() {
        let fields = split_fields(first);
        if fields.len() >= 2 && fields.last().unwrap().parse::<f64>().is_err() {
            rows.next();
        }
    }

    let mut out: Vec<(String, Vector)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for &(line, ref text) in rows {
        let fields = split_fields(text);
        if fields.len() != expected_features + 1 {
            return Err(Error::Parse {
                line,
                message: format!(
                    "expected an item id plus {expected_features} features, got {} fields",
                    fields.len()
                ),
            });
        }
        let id = fields[0];
        if id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty item id".to_string(),
            });
        }
        if let Some(first_line) = seen.insert(id.to_string(), line) {
            return Err(Error::Parse {
                line,
                message: format!(
                    "duplicate candidate row for item `{id}` (first seen at line {first_line})"
                ),
            });
        }
        let mut values = Vec::with_capacity(expected_features);
        for field in &fields[1..] {
            values.push(parse_finite(field, line, "feature value")?);
        }
        out.push((id.to_string(), Vector::new(values)));
    }
    if out.is_empty() {
        return Err(Error::EmptyInput("candidates file has no data rows"));
    }
    Ok(out)
}

/// Like/dislike labels for every rated `(item, user)` pair.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryLabels {
    labels: BTreeMap<(usize, usize), u8>,
    threshold: f64,
}

impl BinaryLabels {
    /// The label for a rated pair: `Some(1)` iff the rating cleared the
    /// threshold, `None` for unrated pairs.
    pub fn label(&self, item: usize, user: usize) -> Option<u8> {
        self.labels.get(&(item, user)).copied()
    }

    /// All labels as `((item, user), label)` in ascending key order.
    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), u8)> + '_ {
        self.labels.iter().map(|(&k, &v)| (k, v))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The threshold the labels were derived with.
    pub fn threshold_used(&self) -> f64 {
        self.threshold
    }
}

/// Map ratings to labels: `1` where `rating >= threshold`, else `0`. The
/// boundary rating itself counts as a like.
pub fn binarize(dataset: &RatingsDataset, threshold: f64) -> BinaryLabels {
    assert!(threshold.is_finite(), "binarize: threshold must be finite");
    let labels = dataset
        .ratings()
        .map(|(key, rating)| (key, u8::from(rating >= threshold)))
        .collect();
    BinaryLabels { labels, threshold }
}

/// Which preprocessing transform produced a feature matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preprocessing {
    /// Divide each column by its max absolute value (all-zero columns pass
    /// through unchanged).
    FeatureScale,
    /// Subtract the column mean, divide by the column range (constant
    /// columns are only centred, which zeroes them).
    MeanNormalize,
    /// Subtract the column mean, divide by the population standard deviation
    /// (constant columns are only centred).
    MeanStandardize,
}

impl Preprocessing {
    pub fn as_str(self) -> &'static str {
        match self {
            Preprocessing::FeatureScale => "feature_scale",
            Preprocessing::MeanNormalize => "mean_normalize",
            Preprocessing::MeanStandardize => "mean_standardize",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "feature_scale" => Ok(Preprocessing::FeatureScale),
            "mean_normalize" => Ok(Preprocessing::MeanNormalize),
            "mean_standardize" => Ok(Preprocessing::MeanStandardize),
            other => Err(Error::InvalidConfig(format!(
                "unknown preprocessing `{other}` (expected feature_scale, mean_normalize, or mean_standardize)"
            ))),
        }
    }
}

impl std::fmt::Display for Preprocessing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-column summary recorded when preprocessing is applied. All five
/// numbers are stored regardless of which transform ran, so a saved model can
/// replay any of them on serving-time features.
#[derive(Clone, Debug, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation (divide by `n`, not `n - 1`).
    pub std: f64,
    pub max_abs: f64,
}

/// The complete, replayable record of one preprocessing application.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalingStats {
    pub kind: Preprocessing,
    pub columns: Vec<ColumnStats>,
}

impl ScalingStats {
    /// Transform a single raw value belonging to column `col`.
    fn transform(&self, col: usize, v: f64) -> f64 {
        let s = &self.columns[col];
        match self.kind {
            Preprocessing::FeatureScale => {
                let divisor = if s.max_abs > 0.0 { s.max_abs } else { 1.0 };
                v / divisor
            }
            Preprocessing::MeanNormalize => {
                let centred = v - s.mean;
                let range = s.max - s.min;
                if range > 0.0 {
                    centred / range
                } else {
                    centred
                }
            }
            Preprocessing::MeanStandardize => {
                let centred = v - s.mean;
                if s.std > 0.0 {
                    centred / s.std
                } else {
                    centred
                }
            }
        }
    }

    /// Replay the recorded transform on one raw feature vector.
    pub fn apply_to_vector(&self, v: &Vector) -> Result<Vector> {
        if v.dim() != self.columns.len() {
            return Err(Error::LengthMismatch {
                op: "apply_stats",
                left: self.columns.len(),
                right: v.dim(),
            });
        }
        let data = v
            .iter()
            .enumerate()
            .map(|(col, &x)| self.transform(col, x))
            .collect();
        Ok(Vector::new(data))
    }
}

fn compute_column_stats(x: &Matrix) -> Vec<ColumnStats> {
    let n = x.rows() as f64;
    (0..x.cols())
        .map(|col| {
            let mut sum = 0.0;
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            let mut max_abs: f64 = 0.0;
            for row in 0..x.rows() {
                let v = x.get(row, col);
                sum += v;
                min = min.min(v);
                max = max.max(v);
                max_abs = max_abs.max(v.abs());
            }
            let mean = sum / n;
            let mut sq = 0.0;
            for row in 0..x.rows() {
                let d = x.get(row, col) - mean;
                sq += d * d;
            }
            ColumnStats {
                mean,
                min,
                max,
                std: (sq / n).sqrt(),
                max_abs,
            }
        })
        .collect()
}

/// Apply a recorded transform to a whole feature matrix. The output carries
/// the same stats, so the transform is visible downstream.
pub fn apply_stats(x: &FeatureMatrix, stats: &ScalingStats) -> Result<FeatureMatrix> {
    if x.n_features() != stats.columns.len() {
        return Err(Error::LengthMismatch {
            op: "apply_stats",
            left: stats.columns.len(),
            right: x.n_features(),
        });
    }
    let mut out = Matrix::zeros(x.n_items(), x.n_features());
    for row in 0..x.n_items() {
        for col in 0..x.n_features() {
            out.set(row, col, stats.transform(col, x.matrix().get(row, col)));
        }
    }
    Ok(FeatureMatrix {
        x: out,
        stats: Some(stats.clone()),
    })
}

/// Run `kind` on raw features: compute this matrix's column statistics, then
/// transform through the exact code path [`apply_stats`] replays later.
pub fn preprocess(x: &FeatureMatrix, kind: Preprocessing) -> FeatureMatrix {
    let stats = ScalingStats {
        kind,
        columns: compute_column_stats(x.matrix()),
    };
    apply_stats(x, &stats).expect("stats computed from x always match its width")
}

/// Divide each column by its max absolute value.
pub fn feature_scale(x: &FeatureMatrix) -> FeatureMatrix {
    preprocess(x, Preprocessing::FeatureScale)
}

/// Centre each column and divide by its range.
pub fn mean_normalize(x: &FeatureMatrix) -> FeatureMatrix {
    preprocess(x, Preprocessing::MeanNormalize)
}

/// Centre each column and divide by its population standard deviation.
pub fn mean_standardize(x: &FeatureMatrix) -> FeatureMatrix {
    preprocess(x, Preprocessing::MeanStandardize)
}

/// A seed-deterministic Fisher–Yates shuffle of any example slice.
pub fn shuffle_examples<T: Clone>(items: &[T], seed: u64) -> Vec<T> {
    let mut out = items.to_vec();
    let mut rng = rng_from_seed(seed);
    out.shuffle(&mut rng);
    out
}
