//! Full-batch training of one configuration with early stopping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::graph::{knn_graph, squared_distances, Dataset, KnnMetric};
use crate::layer::{GslModel, LayerConfig, SparsifierConfig};
use crate::objectives::{Objective, ObjectiveBreakdown, ObjectiveConfig, ObjectiveInputs};
use crate::positional::{bootstrap_k, build_input_features, PositionalConfig};
use crate::stats::{compute_stats, GraphStats};
use crate::tensor::{AdamState, Matrix, Tape};

pub const DEFAULT_PATIENCE: usize = 30;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;

/// One complete trial specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GslConfig {
    pub positional: PositionalConfig,
    pub model: LayerConfig,
    pub objective: ObjectiveConfig,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for GslConfig {
    fn default() -> Self {
        Self {
            positional: PositionalConfig::default(),
            model: LayerConfig::default(),
            objective: ObjectiveConfig::default(),
            lr: 0.01,
            weight_decay: 5e-4,
            max_epochs: DEFAULT_MAX_EPOCHS,
            patience: DEFAULT_PATIENCE,
            seed: 0,
        }
    }
}

impl GslConfig {
    /// The base model: identity-initialized one-layer MLP scorer, kNN with
    /// `k = min(15, n − 1)`, no processor, GCN encoder, cross-entropy only.
    pub fn base(num_nodes: usize) -> Self {
        let mut cfg = Self::default();
        cfg.model.sparsifier = SparsifierConfig { k: 15.min(num_nodes.saturating_sub(1)).max(1), ..Default::default() };
        cfg
    }

    /// Width of the first-layer input.
    pub fn input_width(&self, raw_width: usize) -> usize {
        raw_width + self.positional.extra_width()
    }

    pub fn validate(&self, num_nodes: usize, raw_width: usize) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(GslError::config("lr", format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(GslError::config("weight_decay", format!("must be nonnegative, got {}", self.weight_decay)));
        }
        if self.max_epochs == 0 {
            return Err(GslError::config("max_epochs", "must be positive"));
        }
        if self.patience == 0 {
            return Err(GslError::config("patience", "must be positive"));
        }
        self.positional.validate(num_nodes)?;
        self.model.validate(num_nodes, self.input_width(raw_width))?;
        self.objective.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum TrialStatus {
    Completed,
    Failed { epoch: usize, message: String },
}

/// Outcome of one trial, serialized as one JSON line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: usize,
    pub config: GslConfig,
    pub status: TrialStatus,
    pub best_val_accuracy: f64,
    /// Test accuracy of the parameters from the best validation epoch.
    pub test_accuracy: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_loss: Vec<f64>,
    pub val_accuracy: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_stats: Option<GraphStats>,
}

impl TrialResult {
    pub fn is_completed(&self) -> bool {
        self.status == TrialStatus::Completed
    }
}

/// A trial result plus the learned adjacency at the best epoch.
#[derive(Clone, Debug)]
pub struct TrialOutcome {
    pub result: TrialResult,
    pub adjacency: Option<Matrix>,
}

/// Fraction of `mask` nodes whose arg-max logit (lowest class on ties)
/// equals the label. An empty mask gives 0.
pub fn evaluate(logits: &Matrix, labels: &[usize], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for r in 0..logits.rows() {
        if !mask[r] {
            continue;
        }
        total += 1;
        let row = logits.row(r);
        let mut best = 0;
        for (c, &v) in row.iter().enumerate() {
            if v > row[best] {
                best = c;
            }
        }
        if best == labels[r] {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Mean cross-entropy of `logits` over `mask` nodes.
pub fn masked_cross_entropy(logits: &Matrix, labels: &[usize], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for r in (0..logits.rows()).filter(|&r| mask[r]) {
        let row = logits.row(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += lse - row[labels[r]];
        count += 1;
    }
    total / count.max(1) as f64
}

/// Dataset-derived tensors a trial needs before training.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub input_features: Matrix,
    /// Closeness target and contrastive anchor start.
    pub initial_adjacency: Matrix,
    pub anchor: Matrix,
    pub squared_distances: Option<Matrix>,
}

/// Input features, initial graph and distances for `config` on `dataset`.
/// Without an input graph the initial graph is a weighted cosine kNN graph
/// and the anchor starts at the identity.
pub fn prepare(dataset: &Dataset, config: &GslConfig) -> Result<Prepared> {
    let raw = &dataset.graph.features;
    let adjacency = &dataset.graph.adjacency;
    let input_features = build_input_features(raw, adjacency, &config.positional)?;
    let n = raw.rows();
    let has_graph = adjacency.count_nonzero() > 0;
    let needs_initial = config.objective.regularizers.closeness > 0.0;
    let initial_adjacency = if has_graph {
        adjacency.clone()
    } else if needs_initial {
        knn_graph(raw, bootstrap_k(config.positional.bootstrap_k, n), KnnMetric::Cosine, false)?
    } else {
        Matrix::zeros(n, n)
    };
    let anchor = if has_graph { adjacency.clone() } else { Matrix::identity(n) };
    let squared_distances = (config.objective.regularizers.smoothness > 0.0).then(|| squared_distances(raw));
    Ok(Prepared { input_features, initial_adjacency, anchor, squared_distances })
}

fn failed(config: &GslConfig, trial_id: usize, epoch: usize, message: String, losses: Vec<f64>, vals: Vec<f64>) -> TrialOutcome {
    log::warn!("trial {trial_id} failed at epoch {epoch}: {message}");
    let best_val = vals.iter().copied().fold(0.0, f64::max);
    TrialOutcome {
        result: TrialResult {
            trial_id,
            config: config.clone(),
            status: TrialStatus::Failed { epoch, message },
            best_val_accuracy: best_val,
            test_accuracy: 0.0,
            best_epoch: 0,
            epochs_run: epoch,
            train_loss: losses,
            val_accuracy: vals,
            graph_stats: None,
        },
        adjacency: None,
    }
}

fn is_trial_failure(e: &GslError) -> bool {
    matches!(e, GslError::Numeric(_) | GslError::Resource(_) | GslError::NoConvergence { .. })
}

/// Trains `config` on `dataset`.
///
/// Configuration errors are returned as `Err`; numeric or resource failures
/// during training give a result with [`TrialStatus::Failed`].
pub fn train(dataset: &Dataset, config: &GslConfig, trial_id: usize) -> Result<TrialOutcome> {
    dataset.validate()?;
    let n = dataset.num_nodes();
    config.validate(n, dataset.feature_dim())?;
    let prepared = match prepare(dataset, config) {
        Ok(p) => p,
        Err(e) if is_trial_failure(&e) => return Ok(failed(config, trial_id, 0, e.to_string(), vec![], vec![])),
        Err(e) => return Err(e),
    };
    train_prepared(dataset, config, &prepared, trial_id)
}

pub fn train_prepared(dataset: &Dataset, config: &GslConfig, prepared: &Prepared, trial_id: usize) -> Result<TrialOutcome> {
    let x0 = &prepared.input_features;
    let mut init_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut train_rng = ChaCha8Rng::seed_from_u64(config.seed);
    train_rng.set_stream(1);
    // evaluation is deterministic; this stream is never drawn from in practice
    let mut eval_rng = ChaCha8Rng::seed_from_u64(config.seed);
    eval_rng.set_stream(2);

    let mut model = GslModel::new(&config.model, x0, dataset.num_classes, &mut init_rng)?;
    let mut objective = Objective::new(
        &config.objective,
        &mut model.store,
        dataset.feature_dim(),
        x0.cols(),
        prepared.anchor.clone(),
        &mut init_rng,
    )?;
    let mut adam = AdamState::new(config.lr, config.weight_decay)?;
    let inputs = ObjectiveInputs {
        labels: &dataset.labels,
        train_mask: &dataset.train_mask,
        raw_features: &dataset.graph.features,
        feature_kind: dataset.feature_kind,
        initial_adjacency: &prepared.initial_adjacency,
        squared_distances: prepared.squared_distances.as_ref(),
    };
    let needs_learned = config.objective.contrastive.is_some();

    let mut losses = Vec::new();
    let mut vals = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_val_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut snapshot = model.store.snapshot();
    let mut since_best = 0;
    for epoch in 0..config.max_epochs {
        let step = (|| -> Result<(ObjectiveBreakdown, Option<Matrix>)> {
            let mut tape = Tape::new();
            let x = tape.constant(x0.clone());
            let forward = model.forward(&mut tape, x, true, &mut train_rng)?;
            let (loss, parts) = objective.total(&mut tape, &model.store, &inputs, x, &forward, &mut train_rng)?;
            if !parts.total.is_finite() {
                return Err(GslError::Numeric(format!("loss became {} ({parts:?})", parts.total)));
            }
            let learned = needs_learned.then(|| tape.value(forward.learned()).clone());
            let grads = tape.backward(loss)?;
            model.store.set_grads(&grads);
            Ok((parts, learned))
        })();
        let (parts, learned) = match step {
            Ok(v) => v,
            Err(e) if is_trial_failure(&e) => return Ok(failed(config, trial_id, epoch, e.to_string(), losses, vals)),
            Err(e) => return Err(e),
        };
        adam.step(&mut model.store);
        if let Some(learned) = learned {
            objective.end_epoch(&learned);
        }
        let logits = match model.predict(x0, &mut eval_rng) {
            Ok((logits, _)) => logits,
            Err(e) if is_trial_failure(&e) => return Ok(failed(config, trial_id, epoch, e.to_string(), losses, vals)),
            Err(e) => return Err(e),
        };
        if !logits.is_finite() {
            return Ok(failed(config, trial_id, epoch, "evaluation logits are not finite".into(), losses, vals));
        }
        let val = evaluate(&logits, &dataset.labels, &dataset.val_mask);
        losses.push(parts.total);
        vals.push(val);
        let val_loss = masked_cross_entropy(&logits, &dataset.labels, &dataset.val_mask);
        // equal accuracy with lower validation loss moves the snapshot but not the patience window
        if val > best_val || (val == best_val && val_loss < best_val_loss) {
            if val > best_val {
                since_best = 0;
            } else {
                since_best += 1;
            }
            best_val = val;
            best_val_loss = val_loss;
            best_epoch = epoch;
            snapshot = model.store.snapshot();
        } else {
            since_best += 1;
        }
        if since_best >= config.patience {
            break;
        }
    }
    model.store.restore(&snapshot);
    let (logits, adjacency) = match model.predict(x0, &mut eval_rng) {
        Ok(v) => v,
        Err(e) if is_trial_failure(&e) => return Ok(failed(config, trial_id, vals.len(), e.to_string(), losses, vals)),
        Err(e) => return Err(e),
    };
    let test = evaluate(&logits, &dataset.labels, &dataset.test_mask);
    let graph_stats = match compute_stats(&adjacency) {
        Ok(s) => Some(s),
        Err(e) => {
            log::warn!("trial {trial_id}: graph statistics unavailable: {e}");
            None
        }
    };
    Ok(TrialOutcome {
        result: TrialResult {
            trial_id,
            config: config.clone(),
            status: TrialStatus::Completed,
            best_val_accuracy: best_val,
            test_accuracy: test,
            best_epoch,
            epochs_run: vals.len(),
            train_loss: losses,
            val_accuracy: vals,
            graph_stats,
        },
        adjacency: Some(adjacency),
    })
}

/// Trains the fixed base configuration.
pub fn run_base_model(dataset: &Dataset) -> Result<TrialOutcome> {
    train(dataset, &GslConfig::base(dataset.num_nodes()), 0)
}
