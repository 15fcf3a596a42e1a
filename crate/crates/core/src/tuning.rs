//! Hyperparameter search over `(alpha, lambda, b)`: exhaustive grid
//! enumeration, seeded random sampling of grid cells, and the holdout split
//! both are scored against.
//!
//! Reproducibility rules:
//!
//! - Grid cells are enumerated lexicographically — alpha-major, then lambda,
//!   then b — and the enumeration position is the trial index.
//! - Every trial trains with its own seed, derived deterministically from
//!   the base config's seed and the trial index, so a search replays
//!   bit-for-bit and any single trial can be reproduced in isolation from
//!   its recorded config alone (see [`train_candidate`]).
//! - Trials are scored by *unregularized* validation cost — scoring the
//!   regularized cost would let lambda penalize itself twice.
//! - A diverged trial is recorded with NaN costs and a flag, sorts after
//!   every finished trial, and never becomes the best result.
//!
//! Trials are independent and run in parallel; results are gathered in
//! enumeration order before ranking, so thread scheduling cannot change the
//! output.

use crate::dataset::shuffle_examples;
use crate::error::{Error, Result};
use crate::matrix::Vector;
use crate::perceptron::{total_cost, Network, NetworkSpec};
use crate::rng::{derive_seed, rng_from_seed, SeedDomain};
use crate::training::{descend, random_init, TrainConfig};
use rand::Rng;
use rayon::prelude::*;

/// The grid: every combination of one value per list, trained under `base`
/// with that combination substituted in.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchSpace {
    pub alpha_values: Vec<f64>,
    pub lambda_values: Vec<f64>,
    pub b_values: Vec<usize>,
    /// Every TrainConfig field the search does not vary, including the base
    /// seed all per-trial seeds derive from.
    pub base: TrainConfig,
}

impl SearchSpace {
    /// Reject empty axes and any cell whose substituted config would be
    /// invalid, so a search never fails halfway through.
    pub fn validate(&self) -> Result<()> {
        if self.alpha_values.is_empty() || self.lambda_values.is_empty() || self.b_values.is_empty()
        {
            return Err(Error::InvalidConfig(
                "every search axis needs at least one value".into(),
            ));
        }
        for index in 0..self.n_cells() {
            self.cell_config(index, 0).validate()?;
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.alpha_values.len() * self.lambda_values.len() * self.b_values.len()
    }

    /// The `(alpha, lambda, b)` triple at a lexicographic cell index
    /// (alpha-major, then lambda, then b).
    pub fn cell(&self, index: usize) -> (f64, f64, usize) {
        assert!(index < self.n_cells(), "cell index out of range");
        let per_alpha = self.lambda_values.len() * self.b_values.len();
        let alpha = self.alpha_values[index / per_alpha];
        let rest = index % per_alpha;
        let lambda = self.lambda_values[rest / self.b_values.len()];
        let b = self.b_values[rest % self.b_values.len()];
        (alpha, lambda, b)
    }

    fn cell_config(&self, cell_index: usize, seed: u64) -> TrainConfig {
        let (alpha, lambda, b) = self.cell(cell_index);
        TrainConfig {
            alpha,
            lambda,
            batch_size: b,
            seed,
            ..self.base.clone()
        }
    }
}

/// One trained grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    /// Enumeration position (grid) or draw position (random search); also
    /// the input to the trial's seed derivation.
    pub index: usize,
    /// The full config the trial trained with, seed included.
    pub config: TrainConfig,
    /// Unregularized cost on the training side (NaN when diverged).
    pub train_cost: f64,
    /// Unregularized cost on the validation side (NaN when diverged).
    pub validation_cost: f64,
    pub diverged: bool,
    /// Position after sorting: 0 is best. Diverged trials rank after all
    /// finished ones.
    pub rank: usize,
}

/// Shuffle deterministically, then split off the first
/// `floor(len * fraction)` examples as the training side.
pub fn holdout_split<T: Clone>(
    examples: &[T],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>)> {
    if examples.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "holdout split needs at least 2 examples, got {}",
            examples.len()
        )));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction must lie strictly between 0 and 1, got {fraction}"
        )));
    }
    let take = (examples.len() as f64 * fraction).floor() as usize;
    if take == 0 || take == examples.len() {
        return Err(Error::InvalidConfig(format!(
            "holdout fraction {fraction} leaves an empty side for {} examples",
            examples.len()
        )));
    }
    let mut shuffled = shuffle_examples(examples, derive_seed(seed, SeedDomain::Holdout, 0));
    let validation = shuffled.split_off(take);
    Ok((shuffled, validation))
}

/// Train a network for `config` exactly as a search trial does: initialize
/// from `config.seed` and run [`descend`]. Re-running this with a recorded
/// trial config reproduces that trial's network — and therefore its costs —
/// bit for bit.
pub fn train_candidate(
    spec: &NetworkSpec,
    config: &TrainConfig,
    train: &[(Vector, Vector)],
) -> Result<Network> {
    let net = random_init(spec, config.init_bound, config.seed);
    Ok(descend(&net, train, config)?.0)
}

fn run_trial(
    space: &SearchSpace,
    spec: &NetworkSpec,
    trial_index: usize,
    cell_index: usize,
    train: &[(Vector, Vector)],
    validation: &[(Vector, Vector)],
) -> Result<TrialResult> {
    let seed = derive_seed(space.base.seed, SeedDomain::Trial, trial_index as u64);
    let config = space.cell_config(cell_index, seed);
    match train_candidate(spec, &config, train) {
        Ok(trained) => Ok(TrialResult {
            index: trial_index,
            config,
            train_cost: total_cost(&trained, train)?,
            validation_cost: total_cost(&trained, validation)?,
            diverged: false,
            rank: 0,
        }),
        Err(Error::Diverged { .. }) => Ok(TrialResult {
            index: trial_index,
            config,
            train_cost: f64::NAN,
            validation_cost: f64::NAN,
            diverged: true,
            rank: 0,
        }),
        Err(other) => Err(other),
    }
}

/// Sort by (finished first, validation cost ascending, enumeration order)
/// and stamp each trial's rank.
fn rank_trials(mut trials: Vec<TrialResult>) -> Vec<TrialResult> {
    trials.sort_by(|a, b| {
        a.diverged
            .cmp(&b.diverged)
            .then(a.validation_cost.total_cmp(&b.validation_cost))
            .then(a.index.cmp(&b.index))
    });
    for (rank, trial) in trials.iter_mut().enumerate() {
        trial.rank = rank;
    }
    trials
}

fn check_split(train: &[(Vector, Vector)], validation: &[(Vector, Vector)]) -> Result<()> {
    if train.is_empty() {
        return Err(Error::EmptyInput("search training set"));
    }
    if validation.is_empty() {
        return Err(Error::EmptyInput("search validation set"));
    }
    Ok(())
}

/// Train every cell of the grid once, in lexicographic order, and return
/// the trials ranked by validation cost.
pub fn grid_search(
    space: &SearchSpace,
    spec: &NetworkSpec,
    train: &[(Vector, Vector)],
    validation: &[(Vector, Vector)],
) -> Result<Vec<TrialResult>> {
    space.validate()?;
    check_split(train, validation)?;
    let trials = (0..space.n_cells())
        .into_par_iter()
        .map(|index| run_trial(space, spec, index, index, train, validation))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_trials(trials))
}

/// Draw `n_trials` grid cells uniformly with replacement (seeded by
/// `draw_seed`, independent of the per-trial training seeds) and train each
/// draw as its own trial.
pub fn random_search(
    space: &SearchSpace,
    spec: &NetworkSpec,
    n_trials: usize,
    draw_seed: u64,
    train: &[(Vector, Vector)],
    validation: &[(Vector, Vector)],
) -> Result<Vec<TrialResult>> {
    space.validate()?;
    check_split(train, validation)?;
    if n_trials == 0 {
        return Err(Error::InvalidConfig(
            "random search needs at least one trial".into(),
        ));
    }
    let mut rng = rng_from_seed(derive_seed(draw_seed, SeedDomain::CellDraw, 0));
    let draws: Vec<usize> = (0..n_trials)
        .map(|_| rng.gen_range(0..space.n_cells()))
        .collect();
    let trials = draws
        .into_par_iter()
        .enumerate()
        .map(|(position, cell)| run_trial(space, spec, position, cell, train, validation))
        .collect::<Result<Vec<_>>>()?;
    Ok(rank_trials(trials))
}

/// Render ranked trials as a fixed-width text table, one trial per line:
/// trial index, alpha, lambda, b, train cost, validation cost, diverged.
pub fn format_trials(trials: &[TrialResult]) -> String {
    let mut out = String::new();
    out.push_str("rank  trial  alpha       lambda      b     train_cost    val_cost      diverged\n");
    for t in trials {
        let cost = |c: f64| {
            if c.is_nan() {
                "-".to_string()
            } else {
                format!("{c:.6}")
            }
        };
        out.push_str(&format!(
            "{:<4}  {:<5}  {:<10}  {:<10}  {:<4}  {:<12}  {:<12}  {}\n",
            t.rank,
            t.index,
            t.config.alpha,
            t.config.lambda,
            t.config.batch_size,
            cost(t.train_cost),
            cost(t.validation_cost),
            if t.diverged { "yes" } else { "no" },
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::perceptron::{ActivationKind, Topology};
    use crate::training::DescentMode;

    fn spec(sizes: &[usize]) -> NetworkSpec {
        NetworkSpec::new(Topology::new(sizes.to_vec()).unwrap(), ActivationKind::Sigmoid)
    }

    fn labeled_examples(n: usize, seed: u64) -> Vec<(Vector, Vector)> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| {
                let x: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let label = f64::from(x[0] - x[1] > 0.0);
                (Vector::new(x), Vector::new(vec![label]))
            })
            .collect()
    }

    fn small_space() -> SearchSpace {
        SearchSpace {
            alpha_values: vec![0.2, 0.5],
            lambda_values: vec![0.0, 0.1, 1.0],
            b_values: vec![2],
            base: TrainConfig {
                epochs: 20,
                seed: 99,
                ..TrainConfig::default()
            },
        }
    }

    #[test]
    fn holdout_split_has_the_documented_sizes() {
        let items: Vec<u32> = (0..10).collect();
        let (train, validation) = holdout_split(&items, 0.8, 1).unwrap();
        assert_eq!(train.len(), 8);
        assert_eq!(validation.len(), 2);
    }

    #[test]
    fn holdout_split_is_deterministic_and_a_partition() {
        let items: Vec<u32> = (0..17).collect();
        let (a_train, a_val) = holdout_split(&items, 0.7, 5).unwrap();
        let (b_train, b_val) = holdout_split(&items, 0.7, 5).unwrap();
        assert_eq!(a_train, b_train);
        assert_eq!(a_val, b_val);
        let mut union: Vec<u32> = a_train.iter().chain(&a_val).copied().collect();
        union.sort_unstable();
        assert_eq!(union, items);
    }

    #[test]
    fn holdout_split_rejects_degenerate_requests() {
        let items: Vec<u32> = (0..10).collect();
        assert!(holdout_split(&items, 0.05, 1).is_err());
        assert!(holdout_split(&items, 0.999, 1).is_ok());
        assert!(holdout_split(&items, 1.0, 1).is_err());
        assert!(holdout_split(&items, 0.0, 1).is_err());
        assert!(holdout_split(&[1u32], 0.5, 1).is_err());
    }

    #[test]
    fn grid_search_emits_one_trial_per_cell() {
        let space = small_space();
        let examples = labeled_examples(20, 7);
        let (train, validation) = holdout_split(&examples, 0.8, 7).unwrap();
        let trials = grid_search(&space, &spec(&[2, 1]), &train, &validation).unwrap();
        assert_eq!(trials.len(), 6);
        let mut indices: Vec<usize> = trials.iter().map(|t| t.index).collect();
        indices.sort_unstable();
        assert_eq!(indices, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(
            trials.iter().map(|t| t.rank).collect::<Vec<_>>(),
            vec![0, 1, 2, 3, 4, 5]
        );
    }

    #[test]
    fn cells_enumerate_alpha_major() {
        let space = small_space();
        assert_eq!(space.cell(0), (0.2, 0.0, 2));
        assert_eq!(space.cell(1), (0.2, 0.1, 2));
        assert_eq!(space.cell(2), (0.2, 1.0, 2));
        assert_eq!(space.cell(3), (0.5, 0.0, 2));
        assert_eq!(space.cell(5), (0.5, 1.0, 2));
    }

    #[test]
    fn grid_search_replays_identically() {
        let space = small_space();
        let examples = labeled_examples(20, 11);
        let (train, validation) = holdout_split(&examples, 0.8, 11).unwrap();
        let s = spec(&[2, 1]);
        let first = grid_search(&space, &s, &train, &validation).unwrap();
        let second = grid_search(&space, &s, &train, &validation).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn diverged_trials_sort_last_and_never_win() {
        let space = SearchSpace {
            alpha_values: vec![0.3, 1e8],
            lambda_values: vec![1.0],
            b_values: vec![2],
            base: TrainConfig {
                epochs: 60,
                seed: 13,
                ..TrainConfig::default()
            },
        };
        let examples = labeled_examples(16, 13);
        let (train, validation) = holdout_split(&examples, 0.75, 13).unwrap();
        let trials = grid_search(&space, &spec(&[2, 2, 1]), &train, &validation).unwrap();
        assert_eq!(trials.len(), 2);
        let best = &trials[0];
        assert!(!best.diverged);
        assert_eq!(best.config.alpha, 0.3);
        assert!(best.validation_cost.is_finite());
        let worst = &trials[1];
        assert!(worst.diverged);
        assert!(worst.validation_cost.is_nan());
        assert_eq!(worst.rank, 1);
    }

    #[test]
    fn best_config_retrains_to_the_exact_recorded_cost() {
        let space = small_space();
        let examples = labeled_examples(24, 17);
        let (train, validation) = holdout_split(&examples, 0.75, 17).unwrap();
        let s = spec(&[2, 2, 1]);
        let trials = grid_search(&space, &s, &train, &validation).unwrap();
        let best = &trials[0];
        let retrained = train_candidate(&s, &best.config, &train).unwrap();
        let cost = total_cost(&retrained, &validation).unwrap();
        assert_eq!(cost, best.validation_cost);
    }

    #[test]
    fn random_search_counts_and_replays() {
        let space = small_space();
        let examples = labeled_examples(20, 19);
        let (train, validation) = holdout_split(&examples, 0.8, 19).unwrap();
        let s = spec(&[2, 1]);
        let first = random_search(&space, &s, 4, 77, &train, &validation).unwrap();
        assert_eq!(first.len(), 4);
        let second = random_search(&space, &s, 4, 77, &train, &validation).unwrap();
        assert_eq!(first, second);
        assert!(random_search(&space, &s, 0, 77, &train, &validation).is_err());
    }

    #[test]
    fn random_draws_stay_on_the_grid_and_cover_it() {
        let space = SearchSpace {
            alpha_values: vec![0.2, 0.4],
            lambda_values: vec![0.1],
            b_values: vec![2],
            base: TrainConfig {
                epochs: 5,
                seed: 23,
                ..TrainConfig::default()
            },
        };
        let examples = labeled_examples(12, 23);
        let (train, validation) = holdout_split(&examples, 0.75, 23).unwrap();
        let trials = random_search(&space, &spec(&[2, 1]), 64, 5, &train, &validation).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for t in &trials {
            assert!(space.alpha_values.contains(&t.config.alpha));
            assert_eq!(t.config.lambda, 0.1);
            assert_eq!(t.config.batch_size, 2);
            seen.insert(t.config.alpha.to_bits());
        }
        assert_eq!(seen.len(), 2, "64 draws over 2 cells must hit both");
    }

    #[test]
    fn ranking_breaks_ties_by_enumeration_order() {
        let config = TrainConfig::default();
        let trial = |index, validation_cost, diverged| TrialResult {
            index,
            config: config.clone(),
            train_cost: 0.5,
            validation_cost,
            diverged,
            rank: 0,
        };
        let ranked = rank_trials(vec![
            trial(2, 0.4, false),
            trial(1, f64::NAN, true),
            trial(3, 0.4, false),
            trial(0, 0.9, false),
        ]);
        let order: Vec<usize> = ranked.iter().map(|t| t.index).collect();
        assert_eq!(order, vec![2, 3, 0, 1], "tie on 0.4 keeps enumeration order");
        assert_eq!(ranked.last().unwrap().rank, 3);
    }

    #[test]
    fn spaces_with_invalid_values_are_rejected_up_front() {
        let empty_axis = SearchSpace {
            alpha_values: vec![],
            ..small_space()
        };
        assert!(empty_axis.validate().is_err());
        let bad_alpha = SearchSpace {
            alpha_values: vec![0.3, -1.0],
            ..small_space()
        };
        assert!(bad_alpha.validate().is_err());
        let bad_b = SearchSpace {
            b_values: vec![1],
            base: TrainConfig {
                mode: DescentMode::MiniBatch,
                ..small_space().base
            },
            ..small_space()
        };
        assert!(bad_b.validate().is_err());
    }

    #[test]
    fn empty_split_sides_are_rejected() {
        let space = small_space();
        let examples = labeled_examples(10, 29);
        let s = spec(&[2, 1]);
        assert!(grid_search(&space, &s, &examples, &[]).is_err());
        assert!(grid_search(&space, &s, &[], &examples).is_err());
    }

    #[test]
    fn trial_table_lists_every_trial() {
        let space = SearchSpace {
            alpha_values: vec![0.3, 1e8],
            lambda_values: vec![1.0],
            b_values: vec![2],
            base: TrainConfig {
                epochs: 60,
                seed: 31,
                ..TrainConfig::default()
            },
        };
        let examples = labeled_examples(16, 31);
        let (train, validation) = holdout_split(&examples, 0.75, 31).unwrap();
        let trials = grid_search(&space, &spec(&[2, 2, 1]), &train, &validation).unwrap();
        let table = format_trials(&trials);
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 1 + trials.len());
        assert!(lines[0].starts_with("rank"));
        assert!(table.contains("yes"), "diverged flag missing:\n{table}");
        assert!(table.contains('-'), "diverged cost placeholder missing:\n{table}");
    }
}
