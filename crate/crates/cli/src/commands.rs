//! The five subcommands. Each returns `Ok(())` for exit 0 or a
//! [`CliError`] carrying the exit code; primary tables go to stdout (and,
//! when configured, to the `output` file), progress lines to stderr.

use crate::config::RunConfig;
use crate::CliError;
use cfmlp::classical::{cf_train, CfConfig};
use cfmlp::dataset::{
    binarize, load_candidates, load_features, load_ratings, preprocess, FeatureMatrix,
    RatingsDataset,
};
use cfmlp::error::Error;
use cfmlp::matrix::Vector;
use cfmlp::perceptron::{total_cost, ActivationKind, Network, NetworkSpec, Topology};
use cfmlp::recommender::{
    build_user_examples, format_recommendations, load_model_file, recommend as rank_candidates,
    save_user_model, train_user, ModelFile, PipelineConfig, UserModel,
};
use cfmlp::rng::{derive_seed, SeedDomain};
use cfmlp::training::{
    backprop, backprop_logistic_derivative, gradient_check, numerical_gradient, random_init,
    TrainConfig,
};
use cfmlp::tuning::{
    format_trials, grid_search, holdout_split, random_search, train_candidate, SearchSpace,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

pub struct Ctx {
    pub cfg: RunConfig,
    pub quiet: bool,
}

impl Ctx {
    fn log(&self, message: String) {
        if !self.quiet {
            eprintln!("{message}");
        }
    }

    /// Print a primary table to stdout, mirroring it to the configured
    /// output file if there is one.
    fn emit(&self, table: &str) -> Result<(), CliError> {
        print!("{table}");
        if let Some(path) = &self.cfg.output {
            std::fs::write(path, table)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
        Ok(())
    }

    fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            train: self.cfg.train.clone(),
            preprocessing: self.cfg.preprocessing,
            rating_threshold: self.cfg.rating_threshold,
            decision_threshold: self.cfg.decision_threshold.unwrap_or(0.5),
        }
    }

    fn spec(&self) -> Result<NetworkSpec, CliError> {
        let topology = self.cfg.require_topology()?.clone();
        Ok(NetworkSpec::new(topology, self.cfg.activation).with_bias(self.cfg.bias))
    }

    fn train_fraction(&self) -> Result<f64, CliError> {
        let v = self.cfg.validation_fraction;
        if !(v > 0.0 && v < 1.0) {
            return Err(CliError::Config(format!(
                "validation_fraction must lie strictly between 0 and 1, got {v}"
            )));
        }
        Ok(1.0 - v)
    }
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_corpus(ctx: &Ctx) -> Result<(RatingsDataset, FeatureMatrix), CliError> {
    let dataset = load_ratings(open(ctx.cfg.require_ratings()?)?)?;
    let features = load_features(open(ctx.cfg.require_features()?)?, &dataset)?;
    ctx.log(format!(
        "loaded {} ratings from {} users over {} items",
        dataset.n_ratings(),
        dataset.n_users(),
        dataset.n_items()
    ));
    Ok((dataset, features))
}

fn resolve_user(dataset: &RatingsDataset, id: &str) -> Result<usize, CliError> {
    dataset
        .user_index(id)
        .ok_or_else(|| CliError::Core(Error::UnknownUser(id.to_string())))
}

pub fn train(ctx: &Ctx, only_users: &[String], keep_going: bool) -> Result<(), CliError> {
    let (dataset, features) = load_corpus(ctx)?;
    let spec = ctx.spec()?;
    let pipeline = ctx.pipeline();
    let targets: Vec<usize> = if only_users.is_empty() {
        (0..dataset.n_users()).collect()
    } else {
        only_users
            .iter()
            .map(|id| resolve_user(&dataset, id))
            .collect::<Result<_, _>>()?
    };
    ctx.log(format!(
        "training {} user model(s) with topology {}",
        targets.len(),
        spec.topology
    ));

    let results: Vec<(usize, Result<UserModel, Error>)> = targets
        .par_iter()
        .map(|&u| (u, train_user(&dataset, &features, &spec, &pipeline, u)))
        .collect();

    std::fs::create_dir_all(&ctx.cfg.model_dir)
        .map_err(|e| CliError::Io(format!("{}: {e}", ctx.cfg.model_dir.display())))?;
    let width = targets
        .iter()
        .map(|&u| dataset.user_id(u).len())
        .chain([4])
        .max()
        .unwrap();
    let mut table = format!("{:<width$}  final_cost  note\n", "user");
    let mut failures = 0usize;
    for (u, result) in results {
        let id = dataset.user_id(u);
        match result {
            Ok(model) => {
                let path = ctx.cfg.model_dir.join(format!("{id}.model"));
                let mut file = File::create(&path)
                    .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
                save_user_model(&model, &mut file)?;
                let note = if model.single_class().is_some() {
                    "single-class"
                } else {
                    "-"
                };
                table.push_str(&format!(
                    "{:<width$}  {:<10}  {}\n",
                    id,
                    format!("{:.6}", model.final_cost()),
                    note
                ));
            }
            Err(e) if keep_going => {
                failures += 1;
                eprintln!("error: user {id}: {e}");
            }
            Err(e) => {
                eprintln!("error while training user {id}:");
                return Err(CliError::Core(e));
            }
        }
    }
    ctx.emit(&table)?;
    if failures > 0 {
        return Err(CliError::Config(format!("{failures} user model(s) failed")));
    }
    Ok(())
}

pub fn gradcheck(ctx: &Ctx) -> Result<(), CliError> {
    let (dataset, features) = load_corpus(ctx)?;
    let spec = ctx.spec()?;
    if spec.topology.input_size() != features.n_features() {
        return Err(CliError::Config(format!(
            "topology {} takes {} inputs but the corpus has {} features",
            spec.topology,
            spec.topology.input_size(),
            features.n_features()
        )));
    }
    let preprocessed = preprocess(&features, ctx.cfg.preprocessing);
    let labels = binarize(&dataset, ctx.cfg.rating_threshold);
    let mut examples = build_user_examples(0, &labels, &preprocessed)?;
    examples.truncate(10);

    let cfg = &ctx.cfg.train;
    let net = random_init(
        &spec,
        cfg.init_bound,
        derive_seed(cfg.seed, SeedDomain::GradCheck, 0),
    );
    ctx.log(format!(
        "checking a {} network against central differences on {} example(s)",
        spec.topology,
        examples.len()
    ));
    let analytic = if cfg.paper_literal_backprop {
        backprop_logistic_derivative(&net, &examples, cfg.lambda)?
    } else {
        backprop(&net, &examples, cfg.lambda)?
    };
    let numeric = numerical_gradient(&net, &examples, cfg.lambda, cfg.gradcheck_gamma)?;
    let epsilon = gradient_check(&analytic, &numeric)?;
    let tolerance = cfg.gradcheck_tolerance;
    let verdict = if epsilon <= tolerance { "pass" } else { "fail" };
    ctx.emit(&format!(
        "epsilon    {epsilon:e}\ntolerance  {tolerance:e}\nverdict    {verdict}\n"
    ))?;
    if epsilon <= tolerance {
        Ok(())
    } else {
        Err(CliError::GradCheck { epsilon, tolerance })
    }
}

pub fn tune(
    ctx: &Ctx,
    random: bool,
    trials_flag: Option<usize>,
    user: Option<&str>,
) -> Result<(), CliError> {
    let Some((alpha_values, lambda_values, b_values)) = ctx.cfg.axes.clone() else {
        return Err(CliError::Config(
            "no hyperparameter axes configured (set alpha_values / lambda_values / b_values)"
                .into(),
        ));
    };
    let (dataset, features) = load_corpus(ctx)?;
    let spec = ctx.spec()?;
    let user_index = match user {
        Some(id) => resolve_user(&dataset, id)?,
        None => 0,
    };
    let preprocessed = preprocess(&features, ctx.cfg.preprocessing);
    let labels = binarize(&dataset, ctx.cfg.rating_threshold);
    let examples = build_user_examples(user_index, &labels, &preprocessed)?;
    let (train_side, validation) =
        holdout_split(&examples, ctx.train_fraction()?, ctx.cfg.train.seed)?;
    ctx.log(format!(
        "tuning on user {} with {} training / {} validation example(s)",
        dataset.user_id(user_index),
        train_side.len(),
        validation.len()
    ));

    let space = SearchSpace {
        alpha_values,
        lambda_values,
        b_values,
        base: ctx.cfg.train.clone(),
    };
    let trials = if random {
        let n = trials_flag.unwrap_or(ctx.cfg.trials);
        random_search(&space, &spec, n, ctx.cfg.train.seed, &train_side, &validation)?
    } else {
        grid_search(&space, &spec, &train_side, &validation)?
    };

    let mut out = format_trials(&trials);
    let best = trials
        .iter()
        .find(|t| t.rank == 0)
        .expect("a successful search holds at least one trial");
    out.push_str(&format!(
        "best: alpha {} lambda {} b {} mode {} epochs {} seed {}{}\n",
        best.config.alpha,
        best.config.lambda,
        best.config.batch_size,
        best.config.mode.as_str(),
        best.config.epochs,
        best.config.seed,
        if best.diverged { " (diverged)" } else { "" }
    ));
    ctx.emit(&out)
}

pub fn recommend(
    ctx: &Ctx,
    user: &str,
    candidates_path: &Path,
    threshold_flag: Option<f64>,
) -> Result<(), CliError> {
    let model_path = ctx.cfg.model_dir.join(format!("{user}.model"));
    let model = match load_model_file(&mut open(&model_path)?)? {
        ModelFile::Perceptron(m) => m,
        ModelFile::Classical(_) => {
            return Err(CliError::Config(format!(
                "{} holds a factor model, not a per-user model",
                model_path.display()
            )))
        }
    };
    let candidates = load_candidates(
        open(candidates_path)?,
        model.net().topology().input_size(),
    )?;
    let mut recommendations = rank_candidates(&model, &candidates)?;

    // Flag beats file; both beat the threshold stored in the model. Any
    // finite cutoff is allowed here — at the extremes it simply recommends
    // everything or nothing.
    let threshold = threshold_flag.or(ctx.cfg.decision_threshold);
    if let Some(t) = threshold {
        if !t.is_finite() {
            return Err(CliError::Config(format!(
                "decision threshold must be finite, got {t}"
            )));
        }
        for r in &mut recommendations {
            r.recommended = r.score >= t;
        }
    }
    ctx.log(format!(
        "scored {} candidate(s) for {user} at threshold {}",
        recommendations.len(),
        threshold.unwrap_or_else(|| model.threshold())
    ));
    ctx.emit(&format_recommendations(&recommendations))
}

/// Count decisions (`output >= threshold`) that match the labels.
fn correct_count(
    net: &Network,
    examples: &[(Vector, Vector)],
    threshold: f64,
) -> Result<usize, Error> {
    let mut correct = 0;
    for (x, y) in examples {
        let h = net.forward(x)?.output().get(0);
        if (h >= threshold) == (y.get(0) == 1.0) {
            correct += 1;
        }
    }
    Ok(correct)
}

struct EvalRow {
    n_train: usize,
    n_val: usize,
    mlp_correct: usize,
    linear_correct: usize,
    cf_correct: usize,
    /// Summed (not mean) validation cross-entropy, for exact pooling.
    mlp_cost_sum: f64,
    /// Summed squared-error halves over validation ratings.
    cf_cost_sum: f64,
}

pub fn eval(ctx: &Ctx) -> Result<(), CliError> {
    let (dataset, features) = load_corpus(ctx)?;
    let spec = ctx.spec()?;
    let pipeline = ctx.pipeline();
    pipeline.validate()?;
    if spec.topology.input_size() != features.n_features() {
        return Err(CliError::Config(format!(
            "topology {} takes {} inputs but the corpus has {} features",
            spec.topology,
            spec.topology.input_size(),
            features.n_features()
        )));
    }
    if spec.topology.output_size() != 1 {
        return Err(CliError::Config(format!(
            "evaluation compares single-output networks; topology {} ends in {}",
            spec.topology,
            spec.topology.output_size()
        )));
    }

    let preprocessed = preprocess(&features, ctx.cfg.preprocessing);
    let labels = binarize(&dataset, ctx.cfg.rating_threshold);
    let decision = pipeline.decision_threshold;
    let base_seed = ctx.cfg.train.seed;
    let fraction = ctx.train_fraction()?;

    let mut per_user: Vec<Vec<(usize, u8)>> = vec![Vec::new(); dataset.n_users()];
    for ((item, user), label) in labels.iter() {
        per_user[user].push((item, label));
    }
    let mut splits = Vec::new();
    for (user, rated) in per_user.iter().enumerate() {
        let (train_side, validation) = holdout_split(
            rated,
            fraction,
            derive_seed(base_seed, SeedDomain::Holdout, user as u64),
        )?;
        splits.push((user, train_side, validation));
    }

    // The factor baseline trains once, on the union of every user's
    // training side, so a validation item's features are still shaped by
    // the other users who kept it.
    let mut train_ratings = BTreeMap::new();
    for (user, train_side, _) in &splits {
        for (item, _) in train_side {
            let rating = dataset
                .rating(*item, *user)
                .expect("split items come from the rating table");
            train_ratings.insert((*item, *user), rating);
        }
    }
    let train_dataset = RatingsDataset::from_parts(
        dataset.user_ids().to_vec(),
        dataset.item_ids().to_vec(),
        train_ratings,
    )?;
    let cf_cfg = CfConfig {
        seed: derive_seed(base_seed, SeedDomain::Classical, 0),
        ..ctx.cfg.cf
    };
    ctx.log(format!(
        "training the factor baseline ({} latent features, {} iterations)",
        cf_cfg.n, cf_cfg.iters
    ));
    let cf = cf_train(&train_dataset, &cf_cfg)?;

    let flat_spec = NetworkSpec::new(
        Topology::new(vec![features.n_features(), 1])?,
        ActivationKind::Sigmoid,
    )
    .with_bias(ctx.cfg.bias);
    ctx.log(format!(
        "training {} per-user networks (plus single-layer counterparts)",
        splits.len()
    ));

    let rows: Vec<EvalRow> = splits
        .par_iter()
        .map(|(user, train_items, val_items)| -> Result<EvalRow, Error> {
            let to_examples = |items: &[(usize, u8)]| -> Vec<(Vector, Vector)> {
                items
                    .iter()
                    .map(|&(item, label)| {
                        (
                            preprocessed.row_vector(item),
                            Vector::new(vec![f64::from(label)]),
                        )
                    })
                    .collect()
            };
            let train_ex = to_examples(train_items);
            let val_ex = to_examples(val_items);

            let user_seed = derive_seed(base_seed, SeedDomain::UserModel, *user as u64);
            let cfg = TrainConfig {
                seed: user_seed,
                ..ctx.cfg.train.clone()
            };
            let mlp = train_candidate(&spec, &cfg, &train_ex)?;
            let flat_cfg = TrainConfig {
                seed: derive_seed(user_seed, SeedDomain::UserModel, 1),
                ..cfg
            };
            let flat = train_candidate(&flat_spec, &flat_cfg, &train_ex)?;

            let mut cf_correct = 0;
            let mut cf_cost_sum = 0.0;
            for (item, label) in val_items {
                let predicted = cf.predicted_rating(*item, *user);
                if (predicted >= ctx.cfg.rating_threshold) == (*label == 1) {
                    cf_correct += 1;
                }
                let err = predicted - dataset.rating(*item, *user).unwrap();
                cf_cost_sum += 0.5 * err * err;
            }

            Ok(EvalRow {
                n_train: train_ex.len(),
                n_val: val_ex.len(),
                mlp_correct: correct_count(&mlp, &val_ex, decision)?,
                linear_correct: correct_count(&flat, &val_ex, decision)?,
                cf_correct,
                mlp_cost_sum: total_cost(&mlp, &val_ex)? * val_ex.len() as f64,
                cf_cost_sum,
            })
        })
        .collect::<Result<Vec<EvalRow>, Error>>()?;

    let width = (0..dataset.n_users())
        .map(|u| dataset.user_id(u).len())
        .chain([4])
        .max()
        .unwrap();
    let mut table = format!(
        "{:<width$}  n_train  n_val  mlp_acc  linear_acc  cf_acc  mlp_cost  cf_cost\n",
        "user"
    );
    let accuracy = |correct: usize, total: usize| correct as f64 / total as f64;
    let mut row_line = |name: &str, r: &EvalRow| {
        table.push_str(&format!(
            "{:<width$}  {:<7}  {:<5}  {:<7}  {:<10}  {:<6}  {:<8}  {:.4}\n",
            name,
            r.n_train,
            r.n_val,
            format!("{:.3}", accuracy(r.mlp_correct, r.n_val)),
            format!("{:.3}", accuracy(r.linear_correct, r.n_val)),
            format!("{:.3}", accuracy(r.cf_correct, r.n_val)),
            format!("{:.4}", r.mlp_cost_sum / r.n_val as f64),
            r.cf_cost_sum / r.n_val as f64,
        ));
    };
    let mut total = EvalRow {
        n_train: 0,
        n_val: 0,
        mlp_correct: 0,
        linear_correct: 0,
        cf_correct: 0,
        mlp_cost_sum: 0.0,
        cf_cost_sum: 0.0,
    };
    for ((user, _, _), row) in splits.iter().zip(&rows) {
        row_line(dataset.user_id(*user), row);
        total.n_train += row.n_train;
        total.n_val += row.n_val;
        total.mlp_correct += row.mlp_correct;
        total.linear_correct += row.linear_correct;
        total.cf_correct += row.cf_correct;
        total.mlp_cost_sum += row.mlp_cost_sum;
        total.cf_cost_sum += row.cf_cost_sum;
    }
    row_line("all", &total);
    ctx.emit(&table)
}
