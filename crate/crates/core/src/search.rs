//! Configuration sampling, line and random search, and result analyses.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{GslError, Result};
use crate::graph::Dataset;
use crate::layer::{
    Activation, AdjacencyMode, AttInit, EncoderKind, FpInit, MlpInit, ProcessorKind, ScorerKind, SparsifierKind,
};
use crate::objectives::{ContrastiveConfig, DaeConfig, RegularizerWeights};
use crate::positional::PositionalKind;
use crate::stats::{correlate, Correlation};
use crate::trainer::{train, GslConfig, TrialOutcome, TrialResult, TrialStatus};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnsupervisedKind {
    Dae,
    Contrastive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regularizer {
    Closeness,
    Smoothness,
    SparseConnect,
    LogBarrier,
}

pub const REGULARIZERS: [Regularizer; 4] =
    [Regularizer::Closeness, Regularizer::Smoothness, Regularizer::SparseConnect, Regularizer::LogBarrier];

fn weight_mut(w: &mut RegularizerWeights, r: Regularizer) -> &mut f64 {
    match r {
        Regularizer::Closeness => &mut w.closeness,
        Regularizer::Smoothness => &mut w.smoothness,
        Regularizer::SparseConnect => &mut w.sparse_connect,
        Regularizer::LogBarrier => &mut w.log_barrier,
    }
}

/// Sampling ranges and option lists. Continuous ranges are `(low, high)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSpace {
    pub lr: (f64, f64),
    pub weight_decay: (f64, f64),
    pub dropout: (f64, f64),
    pub activations: Vec<Activation>,
    pub positional: Vec<PositionalKind>,
    pub pe_dims: Vec<usize>,
    pub wl_iterations: usize,
    pub bootstrap_k: usize,
    pub scorers: Vec<ScorerKind>,
    pub mlp_layers: Vec<usize>,
    /// `None` keeps the input width.
    pub mlp_widths: Vec<Option<usize>>,
    pub mlp_inits: Vec<MlpInit>,
    pub fp_inits: Vec<FpInit>,
    pub att_heads: Vec<usize>,
    pub att_inits: Vec<AttInit>,
    pub sparsifiers: Vec<SparsifierKind>,
    pub excluded_sparsifiers: Vec<SparsifierKind>,
    pub k: Vec<usize>,
    pub dilation: Vec<usize>,
    pub epsilon: (f64, f64),
    pub temperature: (f64, f64),
    pub processors: Vec<ProcessorKind>,
    pub processor_activations: Vec<Activation>,
    pub encoders: Vec<EncoderKind>,
    pub hidden: Vec<usize>,
    pub regularizer_probability: f64,
    pub regularizer_weight: (f64, f64),
    pub unsupervised: Vec<Vec<UnsupervisedKind>>,
    pub dae_mask_rate: (f64, f64),
    pub dae_hidden: (usize, usize),
    pub contrastive_mask_rate: (f64, f64),
    pub contrastive_temperature: (f64, f64),
    pub contrastive_tau: (f64, f64),
    pub adjacency_modes: Vec<AdjacencyMode>,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        use UnsupervisedKind::*;
        Self {
            lr: (1e-3, 1e-1),
            weight_decay: (5e-4, 5e-2),
            dropout: (0.0, 0.75),
            activations: vec![Activation::Relu, Activation::Tanh],
            positional: vec![PositionalKind::None, PositionalKind::Wl, PositionalKind::Spectral],
            pe_dims: vec![8, 16],
            wl_iterations: 3,
            bootstrap_k: 15,
            scorers: vec![ScorerKind::Fp, ScorerKind::Att, ScorerKind::Mlp],
            mlp_layers: vec![1, 2],
            mlp_widths: vec![Some(500), None],
            mlp_inits: vec![MlpInit::Glorot, MlpInit::Identity],
            fp_inits: vec![FpInit::Glorot, FpInit::Cosine],
            att_heads: vec![1, 2, 4],
            att_inits: vec![AttInit::Random, AttInit::Ones],
            sparsifiers: vec![
                SparsifierKind::Knn,
                SparsifierKind::Dknn,
                SparsifierKind::RandomDknn,
                SparsifierKind::Epsnn,
                SparsifierKind::Bernoulli,
            ],
            excluded_sparsifiers: vec![SparsifierKind::Epsnn, SparsifierKind::Bernoulli],
            k: vec![15, 20, 25, 30],
            dilation: vec![2, 3],
            epsilon: (0.0, 1.0),
            temperature: (0.1, 1.0),
            processors: vec![
                ProcessorKind::None,
                ProcessorKind::Symmetrize,
                ProcessorKind::Activation,
                ProcessorKind::ActivationSymmetrize,
            ],
            processor_activations: vec![Activation::Relu, Activation::Tanh],
            encoders: vec![EncoderKind::Gcn, EncoderKind::Gin, EncoderKind::Mlp],
            hidden: vec![16, 32, 64, 128],
            regularizer_probability: 0.5,
            regularizer_weight: (0.0, 20.0),
            unsupervised: vec![vec![], vec![Dae], vec![Contrastive], vec![Dae, Contrastive]],
            dae_mask_rate: (0.05, 0.5),
            dae_hidden: (512, 1024),
            contrastive_mask_rate: (0.01, 0.75),
            contrastive_temperature: (0.1, 1.0),
            contrastive_tau: (0.0, 0.2),
            adjacency_modes: vec![AdjacencyMode::One, AdjacencyMode::PerLayer],
            max_epochs: crate::trainer::DEFAULT_MAX_EPOCHS,
            patience: crate::trainer::DEFAULT_PATIENCE,
        }
    }
}

fn check_range(field: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(GslError::config(field, format!("invalid range ({lo}, {hi})")));
    }
    Ok(())
}

fn check_list<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(GslError::config(field, "option list is empty"));
    }
    Ok(())
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        check_range("lr", self.lr)?;
        check_range("weight_decay", self.weight_decay)?;
        if self.lr.0 <= 0.0 || self.weight_decay.0 <= 0.0 {
            return Err(GslError::config("lr", "log-uniform ranges need a positive lower bound"));
        }
        for (name, r) in [
            ("dropout", self.dropout),
            ("epsilon", self.epsilon),
            ("temperature", self.temperature),
            ("regularizer_weight", self.regularizer_weight),
            ("dae_mask_rate", self.dae_mask_rate),
            ("contrastive_mask_rate", self.contrastive_mask_rate),
            ("contrastive_temperature", self.contrastive_temperature),
            ("contrastive_tau", self.contrastive_tau),
        ] {
            check_range(name, r)?;
        }
        check_list("activations", &self.activations)?;
        check_list("positional", &self.positional)?;
        check_list("pe_dims", &self.pe_dims)?;
        check_list("scorers", &self.scorers)?;
        check_list("mlp_layers", &self.mlp_layers)?;
        check_list("mlp_widths", &self.mlp_widths)?;
        check_list("mlp_inits", &self.mlp_inits)?;
        check_list("fp_inits", &self.fp_inits)?;
        check_list("att_heads", &self.att_heads)?;
        check_list("att_inits", &self.att_inits)?;
        check_list("k", &self.k)?;
        check_list("dilation", &self.dilation)?;
        check_list("processors", &self.processors)?;
        check_list("processor_activations", &self.processor_activations)?;
        check_list("encoders", &self.encoders)?;
        check_list("hidden", &self.hidden)?;
        check_list("unsupervised", &self.unsupervised)?;
        check_list("adjacency_modes", &self.adjacency_modes)?;
        if self.allowed_sparsifiers().is_empty() {
            return Err(GslError::config("sparsifiers", "every sparsifier is excluded"));
        }
        if self.dae_hidden.0 == 0 || self.dae_hidden.0 > self.dae_hidden.1 {
            return Err(GslError::config("dae_hidden", "invalid range"));
        }
        if !(0.0..=1.0).contains(&self.regularizer_probability) {
            return Err(GslError::config("regularizer_probability", "must lie in [0, 1]"));
        }
        if self.max_epochs == 0 || self.patience == 0 {
            return Err(GslError::config("max_epochs", "max_epochs and patience must be positive"));
        }
        Ok(())
    }

    pub fn allowed_sparsifiers(&self) -> Vec<SparsifierKind> {
        self.sparsifiers.iter().copied().filter(|s| !self.excluded_sparsifiers.contains(s)).collect()
    }
}

fn pick<T: Clone>(rng: &mut impl Rng, v: &[T]) -> T {
    v.choose(rng).expect("validated nonempty option list").clone()
}

fn uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn log_uniform(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    uniform(rng, (lo.ln(), hi.ln())).exp()
}

/// Component choices and their own hyperparameters, sampled one component at a time.
pub struct Sampler<'a> {
    pub space: &'a SearchSpace,
    pub num_nodes: usize,
    pub raw_width: usize,
}

impl Sampler<'_> {
    pub fn positional(&self, cfg: &mut GslConfig, kind: PositionalKind, rng: &mut impl Rng) {
        let p = &mut cfg.positional;
        p.kind = kind;
        p.wl_iterations = self.space.wl_iterations.max(1);
        p.bootstrap_k = self.space.bootstrap_k.max(1);
        let mut dim = pick(rng, &self.space.pe_dims).max(1);
        match kind {
            PositionalKind::Spectral => dim = dim.min(self.num_nodes),
            PositionalKind::Wl => dim = (dim / 2 * 2).max(2),
            PositionalKind::None => {}
        }
        p.pe_dim = dim;
    }

    /// Needs the positional, encoder and adjacency-mode choices already made.
    pub fn scorer(&self, cfg: &mut GslConfig, kind: ScorerKind, rng: &mut impl Rng) {
        let s = &mut cfg.model.scorer;
        s.kind = kind;
        s.fp_init = pick(rng, &self.space.fp_inits);
        s.att_heads = pick(rng, &self.space.att_heads).max(1);
        s.att_init = pick(rng, &self.space.att_inits);
        s.mlp_layers = pick(rng, &self.space.mlp_layers).clamp(1, 2);
        s.mlp_init = pick(rng, &self.space.mlp_inits);
        let width = pick(rng, &self.space.mlp_widths);
        let first_width = cfg.input_width(self.raw_width);
        let s = &mut cfg.model.scorer;
        s.mlp_width = match (s.mlp_init, width) {
            (MlpInit::Identity, _) | (_, None) => None,
            // square glorot layers count as the input-width option, so halve
            (MlpInit::Glorot, Some(w)) if w == first_width => Some((w / 2).max(1)),
            (MlpInit::Glorot, Some(w)) => Some(w.max(1)),
        };
    }

    pub fn sparsifier(&self, cfg: &mut GslConfig, kind: SparsifierKind, rng: &mut impl Rng) {
        let n = self.num_nodes;
        let s = &mut cfg.model.sparsifier;
        s.kind = kind;
        s.k = pick(rng, &self.space.k).max(1);
        s.dilation = pick(rng, &self.space.dilation).max(1);
        s.epsilon = uniform(rng, self.space.epsilon).clamp(1e-6, 1.0 - 1e-6);
        s.temperature = uniform(rng, self.space.temperature).max(1e-6);
        let stride = s.stride();
        let room = n.saturating_sub(1);
        if room / stride == 0 {
            s.dilation = 1;
        }
        let stride = s.stride();
        s.k = s.k.min(room / stride).max(1);
    }

    pub fn processor(&self, cfg: &mut GslConfig, kind: ProcessorKind, rng: &mut impl Rng) {
        cfg.model.processor.kind = kind;
        cfg.model.processor.activation = pick(rng, &self.space.processor_activations);
    }

    pub fn encoder(&self, cfg: &mut GslConfig, kind: EncoderKind, rng: &mut impl Rng) {
        cfg.model.encoder.kind = kind;
        cfg.model.encoder.hidden = pick(rng, &self.space.hidden).max(1);
        if let Some(c) = &mut cfg.objective.contrastive {
            c.hidden = cfg.model.encoder.hidden;
        }
    }

    pub fn regularizer_weight(&self, rng: &mut impl Rng) -> f64 {
        uniform(rng, self.space.regularizer_weight).clamp(0.0, crate::objectives::MAX_REG_WEIGHT)
    }

    pub fn unsupervised(&self, cfg: &mut GslConfig, set: &[UnsupervisedKind], rng: &mut impl Rng) {
        let sp = self.space;
        cfg.objective.dae = set.contains(&UnsupervisedKind::Dae).then(|| DaeConfig {
            mask_rate: uniform(rng, sp.dae_mask_rate).clamp(1e-3, 0.999),
            hidden: rng.gen_range(sp.dae_hidden.0..=sp.dae_hidden.1),
            ..Default::default()
        });
        cfg.objective.contrastive = set.contains(&UnsupervisedKind::Contrastive).then(|| ContrastiveConfig {
            mask_rate: uniform(rng, sp.contrastive_mask_rate).clamp(0.0, 0.999),
            temperature: uniform(rng, sp.contrastive_temperature).max(1e-3),
            tau: uniform(rng, sp.contrastive_tau).clamp(0.0, 0.999),
            hidden: cfg.model.encoder.hidden,
        });
    }

    pub fn optimizer(&self, cfg: &mut GslConfig, rng: &mut impl Rng) {
        cfg.lr = log_uniform(rng, self.space.lr);
        cfg.weight_decay = log_uniform(rng, self.space.weight_decay);
    }

    /// A full configuration: every component uniform over its options.
    pub fn sample(&self, seed: u64, rng: &mut impl Rng) -> GslConfig {
        let sp = self.space;
        let mut cfg = GslConfig { seed, max_epochs: sp.max_epochs, patience: sp.patience, ..Default::default() };
        self.optimizer(&mut cfg, rng);
        cfg.model.dropout = uniform(rng, sp.dropout).clamp(0.0, 0.999);
        cfg.model.activation = pick(rng, &sp.activations);
        let mode = pick(rng, &sp.adjacency_modes);
        cfg.model.adjacency_mode = mode;
        self.positional(&mut cfg, pick(rng, &sp.positional), rng);
        self.encoder(&mut cfg, pick(rng, &sp.encoders), rng);
        self.scorer(&mut cfg, pick(rng, &sp.scorers), rng);
        self.sparsifier(&mut cfg, pick(rng, &sp.allowed_sparsifiers()), rng);
        self.processor(&mut cfg, pick(rng, &sp.processors), rng);
        for r in REGULARIZERS {
            let on = rng.gen_bool(sp.regularizer_probability);
            let w = self.regularizer_weight(rng);
            *weight_mut(&mut cfg.objective.regularizers, r) = if on { w } else { 0.0 };
        }
        let set = pick(rng, &sp.unsupervised);
        self.unsupervised(&mut cfg, &set, rng);
        cfg
    }
}

/// Samples one configuration for a dataset with `num_nodes` nodes and
/// `raw_width` features.
pub fn sample_config(space: &SearchSpace, num_nodes: usize, raw_width: usize, seed: u64, rng: &mut impl Rng) -> GslConfig {
    Sampler { space, num_nodes, raw_width }.sample(seed, rng)
}

/// The configurations of a random search, sampled in trial order from the
/// master seed. Trial `i` trains with seed `master_seed + i`.
pub fn sample_trials(space: &SearchSpace, num_nodes: usize, raw_width: usize, n_trials: usize, master_seed: u64) -> Vec<GslConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    (0..n_trials).map(|i| sample_config(space, num_nodes, raw_width, master_seed.wrapping_add(i as u64), &mut rng)).collect()
}

/// Trains `config`, turning configuration errors into a failed result.
pub fn run_trial(dataset: &Dataset, config: &GslConfig, trial_id: usize) -> TrialOutcome {
    match train(dataset, config, trial_id) {
        Ok(o) => o,
        Err(e) => {
            log::warn!("trial {trial_id} rejected: {e}");
            TrialOutcome {
                result: TrialResult {
                    trial_id,
                    config: config.clone(),
                    status: TrialStatus::Failed { epoch: 0, message: e.to_string() },
                    best_val_accuracy: 0.0,
                    test_accuracy: 0.0,
                    best_epoch: 0,
                    epochs_run: 0,
                    train_loss: vec![],
                    val_accuracy: vec![],
                    graph_stats: None,
                },
                adjacency: None,
            }
        }
    }
}

/// Runs `jobs` (trial id, config) pairs on a pool of `workers` threads.
/// `sink` sees each outcome on the calling thread as it finishes. Returns
/// results ordered by trial id.
pub fn run_pool(
    dataset: &Dataset,
    jobs: &[(usize, GslConfig)],
    workers: usize,
    mut sink: impl FnMut(&TrialOutcome) -> Result<()>,
) -> Result<Vec<TrialResult>> {
    let workers = workers.max(1).min(jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<TrialOutcome>();
    let mut results = Vec::with_capacity(jobs.len());
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((id, cfg)) = jobs.get(i) else { break };
                if tx.send(run_trial(dataset, cfg, *id)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut first_err = None;
        for outcome in rx {
            if first_err.is_none() {
                if let Err(e) = sink(&outcome) {
                    // stop handing out work; running trials still finish
                    next.store(jobs.len(), Ordering::SeqCst);
                    first_err = Some(e);
                }
            }
            results.push(outcome.result);
        }
        first_err.map_or(Ok(()), Err)
    })?;
    results.sort_by_key(|r| r.trial_id);
    Ok(results)
}

/// Random search over `space`. Trials whose id is in `skip` are not run
/// (their configs are still sampled, keeping the sequence fixed).
pub fn random_search(
    dataset: &Dataset,
    space: &SearchSpace,
    n_trials: usize,
    workers: usize,
    master_seed: u64,
    skip: &BTreeSet<usize>,
    sink: impl FnMut(&TrialOutcome) -> Result<()>,
) -> Result<Vec<TrialResult>> {
    space.validate()?;
    dataset.validate()?;
    let configs = sample_trials(space, dataset.num_nodes(), dataset.feature_dim(), n_trials, master_seed);
    let jobs: Vec<(usize, GslConfig)> = configs.into_iter().enumerate().filter(|(i, _)| !skip.contains(i)).collect();
    run_pool(dataset, &jobs, workers, sink)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    Positional,
    Scorer,
    Sparsifier,
    Processor,
    Encoder,
    Regularizer,
    Unsupervised,
    AdjacencyMode,
}

pub const COMPONENTS: [Component; 8] = [
    Component::Positional,
    Component::Scorer,
    Component::Sparsifier,
    Component::Processor,
    Component::Encoder,
    Component::Regularizer,
    Component::Unsupervised,
    Component::AdjacencyMode,
];

/// snake_case name of a unit enum variant.
pub fn label<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

pub fn parse_label<T: DeserializeOwned>(field: &str, s: &str) -> Result<T> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| GslError::config(field, format!("unknown option `{s}`")))
}

pub fn enabled_regularizers(cfg: &GslConfig) -> Vec<Regularizer> {
    let mut w = cfg.objective.regularizers.clone();
    REGULARIZERS.into_iter().filter(|r| *weight_mut(&mut w, *r) > 0.0).collect()
}

pub fn enabled_unsupervised(cfg: &GslConfig) -> Vec<UnsupervisedKind> {
    let mut out = Vec::new();
    if cfg.objective.dae.is_some() {
        out.push(UnsupervisedKind::Dae);
    }
    if cfg.objective.contrastive.is_some() {
        out.push(UnsupervisedKind::Contrastive);
    }
    out
}

fn set_label<T: Serialize>(items: &[T]) -> String {
    if items.is_empty() {
        "none".into()
    } else {
        items.iter().map(label).collect::<Vec<_>>().join("+")
    }
}

/// Values taken by `component` in `cfg`. Regularizers and unsupervised losses
/// yield one value per enabled member, or `none`.
pub fn component_values(cfg: &GslConfig, component: Component) -> Vec<String> {
    match component {
        Component::Positional => vec![label(&cfg.positional.kind)],
        Component::Scorer => vec![label(&cfg.model.scorer.kind)],
        Component::Sparsifier => vec![label(&cfg.model.sparsifier.kind)],
        Component::Processor => vec![label(&cfg.model.processor.kind)],
        Component::Encoder => vec![label(&cfg.model.encoder.kind)],
        Component::Regularizer => {
            let r = enabled_regularizers(cfg);
            if r.is_empty() {
                vec!["none".into()]
            } else {
                r.iter().map(label).collect()
            }
        }
        Component::Unsupervised => {
            let u = enabled_unsupervised(cfg);
            if u.is_empty() {
                vec!["none".into()]
            } else {
                u.iter().map(label).collect()
            }
        }
        Component::AdjacencyMode => vec![label(&cfg.model.adjacency_mode)],
    }
}

/// Component tuple identifying an architecture, ignoring continuous values.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ArchitectureKey {
    pub positional: String,
    pub scorer: String,
    pub sparsifier: String,
    pub processor: String,
    pub encoder: String,
    pub regularizers: String,
    pub unsupervised: String,
    pub adjacency_mode: String,
}

impl ArchitectureKey {
    pub fn of(cfg: &GslConfig) -> Self {
        Self {
            positional: label(&cfg.positional.kind),
            scorer: label(&cfg.model.scorer.kind),
            sparsifier: label(&cfg.model.sparsifier.kind),
            processor: label(&cfg.model.processor.kind),
            encoder: label(&cfg.model.encoder.kind),
            regularizers: set_label(&enabled_regularizers(cfg)),
            unsupervised: set_label(&enabled_unsupervised(cfg)),
            adjacency_mode: label(&cfg.model.adjacency_mode),
        }
    }

    pub fn fields(&self) -> [&str; 8] {
        [
            &self.positional,
            &self.scorer,
            &self.sparsifier,
            &self.processor,
            &self.encoder,
            &self.regularizers,
            &self.unsupervised,
            &self.adjacency_mode,
        ]
    }
}

/// Trial results of one dataset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub dataset: String,
    pub results: Vec<TrialResult>,
}

impl ResultsTable {
    pub fn completed(&self) -> impl Iterator<Item = &TrialResult> {
        self.results.iter().filter(|r| r.is_completed())
    }
}

/// Box-plot summary with type-7 (linear interpolation) quartiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self { min: v[0], q1: quantile(&v, 0.25), median: quantile(&v, 0.5), q3: quantile(&v, 0.75), max: v[v.len() - 1] })
    }
}

/// Completed results ordered by validation accuracy descending, trial id ascending.
pub fn rank_by_val(results: &[TrialResult]) -> Vec<&TrialResult> {
    let mut v: Vec<&TrialResult> = results.iter().filter(|r| r.is_completed()).collect();
    v.sort_by(|a, b| b.best_val_accuracy.total_cmp(&a.best_val_accuracy).then(a.trial_id.cmp(&b.trial_id)));
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentDistribution {
    pub component: Component,
    pub value: String,
    pub count: usize,
    pub test_accuracy: BoxStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopFractionReport {
    pub fraction: f64,
    pub total_trials: usize,
    pub selected: Vec<usize>,
    pub distributions: Vec<ComponentDistribution>,
}

/// Picks the best `⌈fraction · N⌉` of the `N` trials by validation accuracy
/// (ties to lower trial id; failures never selected) and summarizes which
/// component values they use.
pub fn top_fraction_analysis(results: &[TrialResult], fraction: f64) -> Result<TopFractionReport> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(GslError::config("fraction", format!("must lie in (0, 1], got {fraction}")));
    }
    let want = (fraction * results.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let top: Vec<&TrialResult> = rank_by_val(results).into_iter().take(want).collect();
    let mut buckets: BTreeMap<(Component, String), Vec<f64>> = BTreeMap::new();
    for r in &top {
        for c in COMPONENTS {
            for v in component_values(&r.config, c) {
                buckets.entry((c, v)).or_default().push(r.test_accuracy);
            }
        }
    }
    let distributions = buckets
        .into_iter()
        .map(|((component, value), accs)| ComponentDistribution {
            component,
            value,
            count: accs.len(),
            test_accuracy: BoxStats::of(&accs).expect("nonempty bucket"),
        })
        .collect();
    Ok(TopFractionReport { fraction, total_trials: results.len(), selected: top.iter().map(|r| r.trial_id).collect(), distributions })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchitectureRow {
    pub architecture: ArchitectureKey,
    /// Best test accuracy on each dataset, in input order.
    pub per_dataset: Vec<f64>,
    pub mean: f64,
}

/// Architectures present in every table, ranked by the mean over datasets
/// of their best test accuracy; the first `top` rows.
pub fn best_architecture_aggregate(tables: &[ResultsTable], top: usize) -> Vec<ArchitectureRow> {
    let mut best: Vec<BTreeMap<ArchitectureKey, f64>> = Vec::with_capacity(tables.len());
    for t in tables {
        let mut m: BTreeMap<ArchitectureKey, f64> = BTreeMap::new();
        for r in t.completed() {
            let e = m.entry(ArchitectureKey::of(&r.config)).or_insert(f64::NEG_INFINITY);
            *e = e.max(r.test_accuracy);
        }
        best.push(m);
    }
    let Some(first) = best.first() else { return vec![] };
    let mut rows: Vec<ArchitectureRow> = first
        .keys()
        .filter(|k| best.iter().all(|m| m.contains_key(*k)))
        .map(|k| {
            let per_dataset: Vec<f64> = best.iter().map(|m| m[k]).collect();
            let mean = per_dataset.iter().sum::<f64>() / per_dataset.len() as f64;
            ArchitectureRow { architecture: k.clone(), per_dataset, mean }
        })
        .collect();
    rows.sort_by(|a, b| b.mean.total_cmp(&a.mean).then_with(|| a.architecture.cmp(&b.architecture)));
    rows.truncate(top);
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentAverage {
    pub component: Component,
    pub value: String,
    pub per_dataset: Vec<f64>,
    pub mean: f64,
}

/// For each component value, the best test accuracy among trials using it
/// on each dataset, averaged over datasets. Values missing from some
/// dataset are dropped with a warning.
pub fn component_best_average(tables: &[ResultsTable]) -> Vec<ComponentAverage> {
    let mut per: Vec<BTreeMap<(Component, String), f64>> = Vec::with_capacity(tables.len());
    let mut all: BTreeSet<(Component, String)> = BTreeSet::new();
    for t in tables {
        let mut m: BTreeMap<(Component, String), f64> = BTreeMap::new();
        for r in t.completed() {
            for c in COMPONENTS {
                for v in component_values(&r.config, c) {
                    let e = m.entry((c, v)).or_insert(f64::NEG_INFINITY);
                    *e = e.max(r.test_accuracy);
                }
            }
        }
        all.extend(m.keys().cloned());
        per.push(m);
    }
    let mut out = Vec::new();
    for key in all {
        if let Some(missing) = tables.iter().zip(&per).find(|(_, m)| !m.contains_key(&key)) {
            log::warn!("{}={} has no completed trials in `{}`; omitted", label(&key.0), key.1, missing.0.dataset);
            continue;
        }
        let per_dataset: Vec<f64> = per.iter().map(|m| m[&key]).collect();
        let mean = per_dataset.iter().sum::<f64>() / per_dataset.len() as f64;
        out.push(ComponentAverage { component: key.0, value: key.1, per_dataset, mean });
    }
    out
}

/// ρ between each graph statistic and test accuracy over completed trials
/// that carry statistics.
pub fn correlate_results(results: &[TrialResult]) -> Result<Vec<Correlation>> {
    let rows: Vec<&TrialResult> = results.iter().filter(|r| r.is_completed() && r.graph_stats.is_some()).collect();
    let stats: Vec<_> = rows.iter().map(|r| r.graph_stats.clone().expect("filtered")).collect();
    let acc: Vec<f64> = rows.iter().map(|r| r.test_accuracy).collect();
    correlate(&stats, &acc)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchRow {
    pub option: String,
    pub trials: usize,
    pub best: TrialResult,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSearchReport {
    pub component: Component,
    pub rows: Vec<LineSearchRow>,
    pub results: Vec<TrialResult>,
}

/// Default option list for each component.
pub fn default_options(component: Component, space: &SearchSpace) -> Vec<String> {
    match component {
        Component::Positional => space.positional.iter().map(label).collect(),
        Component::Scorer => space.scorers.iter().map(label).collect(),
        Component::Sparsifier => space.sparsifiers.iter().map(label).collect(),
        Component::Processor => space.processors.iter().map(label).collect(),
        Component::Encoder => space.encoders.iter().map(label).collect(),
        Component::Regularizer => std::iter::once("none".to_string()).chain(REGULARIZERS.iter().map(label)).collect(),
        Component::Unsupervised => space.unsupervised.iter().map(|s| set_label(s)).collect(),
        Component::AdjacencyMode => space.adjacency_modes.iter().map(label).collect(),
    }
}

/// `base` with `component` set to `option`. With `tune`, that component's
/// hyperparameters are resampled; otherwise existing ones are kept, with
/// unit weight for a newly enabled regularizer.
pub fn apply_option(
    base: &GslConfig,
    component: Component,
    option: &str,
    sampler: &Sampler<'_>,
    tune: bool,
    rng: &mut impl Rng,
) -> Result<GslConfig> {
    let mut cfg = base.clone();
    match component {
        Component::Positional => {
            let kind: PositionalKind = parse_label("positional", option)?;
            if tune {
                sampler.positional(&mut cfg, kind, rng);
            } else {
                cfg.positional.kind = kind;
                if kind == PositionalKind::Spectral {
                    cfg.positional.pe_dim = cfg.positional.pe_dim.min(sampler.num_nodes);
                }
            }
        }
        Component::Scorer => {
            let kind: ScorerKind = parse_label("scorer", option)?;
            if tune {
                sampler.scorer(&mut cfg, kind, rng);
            } else {
                cfg.model.scorer.kind = kind;
            }
        }
        Component::Sparsifier => {
            let kind: SparsifierKind = parse_label("sparsifier", option)?;
            if tune {
                sampler.sparsifier(&mut cfg, kind, rng);
            } else {
                cfg.model.sparsifier.kind = kind;
                let room = sampler.num_nodes.saturating_sub(1);
                let s = &mut cfg.model.sparsifier;
                if room / s.stride() == 0 {
                    s.dilation = 1;
                }
                s.k = s.k.min(room / s.stride()).max(1);
            }
        }
        Component::Processor => {
            let kind: ProcessorKind = parse_label("processor", option)?;
            if tune {
                sampler.processor(&mut cfg, kind, rng);
            } else {
                cfg.model.processor.kind = kind;
            }
        }
        Component::Encoder => {
            let kind: EncoderKind = parse_label("encoder", option)?;
            if tune {
                sampler.encoder(&mut cfg, kind, rng);
            } else {
                cfg.model.encoder.kind = kind;
            }
        }
        Component::Regularizer => {
            cfg.objective.regularizers = RegularizerWeights::default();
            if option != "none" {
                for part in option.split('+') {
                    let r: Regularizer = parse_label("regularizer", part)?;
                    let w = if tune { sampler.regularizer_weight(rng) } else { 1.0 };
                    *weight_mut(&mut cfg.objective.regularizers, r) = w;
                }
            }
        }
        Component::Unsupervised => {
            let set: Vec<UnsupervisedKind> = if option == "none" {
                vec![]
            } else {
                option.split('+').map(|p| parse_label("unsupervised", p)).collect::<Result<_>>()?
            };
            if tune || set.iter().any(|u| !enabled_unsupervised(base).contains(u)) {
                sampler.unsupervised(&mut cfg, &set, rng);
            }
            if !set.contains(&UnsupervisedKind::Dae) {
                cfg.objective.dae = None;
            }
            if !set.contains(&UnsupervisedKind::Contrastive) {
                cfg.objective.contrastive = None;
            }
        }
        Component::AdjacencyMode => {
            cfg.model.adjacency_mode = parse_label("adjacency_mode", option)?;
        }
    }
    if tune {
        sampler.optimizer(&mut cfg, rng);
    }
    Ok(cfg)
}

/// Varies one component of `base` at a time. Trial 0 of each option keeps
/// `base`'s other hyperparameters; later trials resample the component's own
/// hyperparameters and the optimizer settings. Trial `t` of option `o` has
/// id `o · trials_per_option + t` and seed `master_seed + id`.
pub fn line_search(
    dataset: &Dataset,
    base: &GslConfig,
    component: Component,
    options: &[String],
    trials_per_option: usize,
    space: &SearchSpace,
    master_seed: u64,
    workers: usize,
    sink: impl FnMut(&TrialOutcome) -> Result<()>,
) -> Result<LineSearchReport> {
    if options.is_empty() || trials_per_option == 0 {
        return Err(GslError::config("options", "need at least one option and one trial per option"));
    }
    space.validate()?;
    dataset.validate()?;
    let sampler = Sampler { space, num_nodes: dataset.num_nodes(), raw_width: dataset.feature_dim() };
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    let mut jobs = Vec::with_capacity(options.len() * trials_per_option);
    for (o, option) in options.iter().enumerate() {
        for t in 0..trials_per_option {
            let id = o * trials_per_option + t;
            let mut cfg = apply_option(base, component, option, &sampler, t > 0, &mut rng)?;
            cfg.seed = master_seed.wrapping_add(id as u64);
            cfg.validate(dataset.num_nodes(), dataset.feature_dim())?;
            jobs.push((id, cfg));
        }
    }
    let results = run_pool(dataset, &jobs, workers, sink)?;
    let mut rows = Vec::with_capacity(options.len());
    for (o, option) in options.iter().enumerate() {
        let slice: Vec<TrialResult> =
            results.iter().filter(|r| r.trial_id / trials_per_option == o).cloned().collect();
        let best = rank_by_val(&slice).first().map(|r| (*r).clone()).unwrap_or_else(|| slice[0].clone());
        rows.push(LineSearchRow { option: option.clone(), trials: slice.len(), best });
    }
    Ok(LineSearchReport { component, rows, results })
}
