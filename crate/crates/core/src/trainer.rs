//! Two-branch training: a GCE-trained biased branch feeds attribute
//! estimates and group priors to a logit-corrected robust branch.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::{fnv1a, BiasedDataset, TestSplit, TrainSplit};
use crate::debias::{
    group_mixup, ClusterSplitter, CorrelationTopology, DebiasError, GroupPrior, LambdaRange, MixSample, MixupConfig,
    PriorStrategy,
};
use crate::losses::{
    ce_loss, gce_loss_from_logits, lc_loss, normalized_inverse_weights, CorrectionRow, GceConfig, LossError, PRIOR_FLOOR,
};
use crate::metrics::{evaluate_logits, group_margins, GroupEvaluation, MarginSummary, MetricsError, MARGIN_CSV_HEADER};
use crate::model::{AdamConfig, AdamState, MlpScorer, ModelError};
use crate::numerics::{argmax, softmax_rows, NumericsError, Tensor};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite {branch} loss at iteration {iteration}")]
    NonFiniteLoss { branch: &'static str, iteration: u64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Debias(#[from] DebiasError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Objective of the robust branch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LossMode {
    /// Cross-entropy on logits shifted by `ln P̂(·, a_x)`.
    LogitCorrected,
    /// Plain cross-entropy (ERM baseline).
    CrossEntropy,
    /// Cross-entropy weighted by `1 / P̂(y, a_x)`, batch-mean normalized.
    Reweighted,
}

impl LossMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::LogitCorrected => "lc",
            Self::CrossEntropy => "ce",
            Self::Reweighted => "rwce",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lc" => Some(Self::LogitCorrected),
            "ce" => Some(Self::CrossEntropy),
            "rwce" => Some(Self::Reweighted),
            _ => None,
        }
    }
}

/// Which correlation structure the prior estimator assumes.
#[derive(Clone, Debug, PartialEq)]
pub enum TopologyChoice {
    /// The dataset's own topology.
    Dataset,
    /// Label `j` paired with attribute `j`, whatever the dataset's structure.
    OneToOne,
    Custom(CorrelationTopology),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub gce_q: f64,
    pub adam: AdamConfig,
    pub momentum: f64,
    pub rampup_epochs: usize,
    pub strategy: PriorStrategy,
    pub topology: TopologyChoice,
    pub mixup: bool,
    pub lambda_range: LambdaRange,
    pub loss: LossMode,
    pub freeze_prior: bool,
    /// Evaluate every this many epochs; the last epoch is always evaluated.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 256,
            gce_q: 0.7,
            adam: AdamConfig::default(),
            momentum: 0.5,
            rampup_epochs: 2,
            strategy: PriorStrategy::MovingAvg,
            topology: TopologyChoice::Dataset,
            mixup: true,
            lambda_range: LambdaRange::Ramp,
            loss: LossMode::LogitCorrected,
            freeze_prior: false,
            eval_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if self.eval_every == 0 {
            return bad("evaluation interval must be positive");
        }
        if !(self.adam.learning_rate > 0.0) {
            return bad("learning rate must be positive");
        }
        GceConfig::new(self.gce_q)?;
        MixupConfig::new(self.mixup, self.rampup_epochs)?;
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return Err(DebiasError::BadMomentum(self.momentum).into());
        }
        Ok(())
    }

    fn topology_name(&self) -> String {
        match &self.topology {
            TopologyChoice::Dataset => "dataset".into(),
            TopologyChoice::OneToOne => "one-to-one".into(),
            TopologyChoice::Custom(t) => t.to_string(),
        }
    }

    /// Sorted `key=value` lines with every field materialized.
    pub fn canonical_text(&self) -> String {
        let schedule: Vec<String> = self.adam.decay_schedule.iter().map(|(at, f)| format!("{at}:{f}")).collect();
        let mut fields = vec![
            format!("adam_beta1={}", self.adam.beta1),
            format!("adam_beta2={}", self.adam.beta2),
            format!("adam_epsilon={}", self.adam.epsilon),
            format!("batch_size={}", self.batch_size),
            format!("epochs={}", self.epochs),
            format!("eval_every={}", self.eval_every),
            format!("freeze_prior={}", self.freeze_prior),
            format!("gce_q={}", self.gce_q),
            format!(
                "lambda_range={}",
                match self.lambda_range {
                    LambdaRange::Ramp => "ramp",
                    LambdaRange::Static => "static",
                }
            ),
            format!("learning_rate={}", self.adam.learning_rate),
            format!("loss={}", self.loss.name()),
            format!("lr_decay={}", schedule.join(",")),
            format!("mixup={}", if self.mixup { "on" } else { "off" }),
            format!("momentum={}", self.momentum),
            format!("prior={}", self.strategy.name()),
            format!("rampup_epochs={}", self.rampup_epochs),
            format!("seed={}", self.seed),
            format!("topology={}", self.topology_name()),
        ];
        fields.sort();
        fields.join("\n") + "\n"
    }

    pub fn hash(&self) -> u64 {
        fnv1a(self.canonical_text().as_bytes())
    }

    fn resolve_topology(&self, dataset: &BiasedDataset) -> Result<CorrelationTopology, TrainError> {
        let (l, k) = (dataset.classes(), dataset.attrs());
        let t = match &self.topology {
            TopologyChoice::Dataset => dataset.topology().clone(),
            TopologyChoice::OneToOne => CorrelationTopology::one_to_one(l)?,
            TopologyChoice::Custom(t) => {
                if t.attrs() != k {
                    return Err(TrainError::Config(format!(
                        "topology has {} attributes, dataset has {k}",
                        t.attrs()
                    )));
                }
                t.clone()
            }
        };
        if t.classes() != l {
            return Err(TrainError::Config(format!(
                "topology has {} labels, dataset has {l}",
                t.classes()
            )));
        }
        Ok(t)
    }
}

/// Instrumentation hooks; every method defaults to a no-op.
pub trait TrainObserver<T> {
    /// Inputs and labels handed to the biased branch.
    fn on_erm_batch(&mut self, _iteration: u64, _x: &Tensor<T>, _y: &[usize]) {}
    /// Inputs, labels and inferred attributes handed to the robust branch.
    fn on_robust_batch(&mut self, _iteration: u64, _x: &Tensor<T>, _y: &[usize], _attrs: &[usize]) {}
    fn on_epoch(&mut self, _record: &EpochRecord) {}
}

pub struct NoObserver;

impl<T> TrainObserver<T> for NoObserver {}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub iterations: u64,
    pub erm_loss: f64,
    pub robust_loss: f64,
    /// Ground-truth groups of the test split; `None` on skipped epochs.
    pub test: Option<GroupEvaluation>,
    /// Train split scored with its true attributes (diagnostics only).
    pub train_diagnostic: Option<GroupEvaluation>,
    /// Test margins, sides from ground-truth attributes.
    pub test_margins: Option<MarginSummary>,
    /// Train margins, sides from attributes inferred by the biased branch.
    pub train_margins: Option<MarginSummary>,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<T> {
    pub robust: MlpScorer<T>,
    pub erm: MlpScorer<T>,
    pub prior: GroupPrior<T>,
    pub records: Vec<EpochRecord>,
    pub config: TrainConfig,
    pub iterations: u64,
}

impl<T: Scalar> TrainOutcome<T> {
    fn evaluated(&self) -> impl Iterator<Item = &GroupEvaluation> {
        self.records.iter().filter_map(|r| r.test.as_ref())
    }

    pub fn final_gba(&self) -> f64 {
        self.evaluated().last().map_or(f64::NAN, |e| e.gba)
    }

    pub fn final_worst(&self) -> f64 {
        self.evaluated().last().map_or(f64::NAN, |e| e.worst_group)
    }

    pub fn best_gba(&self) -> f64 {
        self.evaluated().map(|e| e.gba).fold(f64::NAN, f64::max)
    }

    pub fn final_record(&self) -> Option<&EpochRecord> {
        self.records.last()
    }
}

const EVAL_CHUNK: usize = 2048;

fn rows_to<T: Scalar>(x: &Tensor<f32>, idx: &[usize]) -> Tensor<T> {
    let d = x.cols();
    let mut data = Vec::with_capacity(idx.len() * d);
    for &i in idx {
        data.extend(x.row(i).iter().map(|&v| T::of(f64::from(v))));
    }
    Tensor::new(vec![idx.len(), d], data).expect("row gather matches shape")
}

/// Raw logits of `model` over all rows of `x`, in chunks.
pub fn predict_all<T: Scalar>(model: &MlpScorer<T>, x: &Tensor<f32>) -> Result<Tensor<T>, TrainError> {
    let n = x.rows();
    let mut out = Vec::with_capacity(n * model.output_dim());
    for start in (0..n).step_by(EVAL_CHUNK) {
        let idx: Vec<usize> = (start..(start + EVAL_CHUNK).min(n)).collect();
        out.extend_from_slice(model.predict(&rows_to::<T>(x, &idx))?.data());
    }
    Ok(Tensor::new(vec![n, model.output_dim()], out)?)
}

/// Scores raw (uncorrected) logits on a split with exposed attributes.
pub fn evaluate<T: Scalar>(model: &MlpScorer<T>, test: &TestSplit, attrs: usize) -> Result<GroupEvaluation, TrainError> {
    let logits = predict_all(model, &test.x)?;
    Ok(evaluate_logits(&logits, &test.groups(), attrs)?)
}

/// Non-finite logits surface as a non-finite loss at `iteration`.
fn non_finite(branch: &'static str, iteration: u64) -> impl FnOnce(ModelError) -> TrainError {
    move |e| match e {
        ModelError::Numerics(NumericsError::NonFinite { .. }) => TrainError::NonFiniteLoss { branch, iteration },
        e => e.into(),
    }
}

/// Single-run training state.
pub struct Trainer<T: Scalar> {
    config: TrainConfig,
    topology: CorrelationTopology,
    robust: MlpScorer<T>,
    erm: MlpScorer<T>,
    robust_opt: AdamState<T>,
    erm_opt: AdamState<T>,
    prior: GroupPrior<T>,
    splitter: ClusterSplitter,
    gce: GceConfig,
    mixup: MixupConfig,
    shuffle_rng: ChaCha8Rng,
    mixup_rng: ChaCha8Rng,
    iteration: u64,
    classes: usize,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<T: Scalar> Trainer<T> {
    pub fn new(dataset: &BiasedDataset, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let topology = config.resolve_topology(dataset)?;
        let classes = dataset.classes();
        let dims = [
            dataset.dim(),
            crate::model::HIDDEN_WIDTH,
            crate::model::HIDDEN_WIDTH,
            crate::model::HIDDEN_WIDTH,
            classes,
        ];
        let robust = MlpScorer::with_rng(&dims, &mut stream(config.seed, 0))?;
        let erm = MlpScorer::with_rng(&dims, &mut stream(config.seed, 1))?;
        let mut prior = GroupPrior::new(topology.clone(), config.strategy, config.momentum)?;
        if config.freeze_prior {
            prior.freeze();
        }
        let mixup = MixupConfig {
            lambda_range: config.lambda_range,
            ..MixupConfig::new(config.mixup, config.rampup_epochs)?
        };
        Ok(Self {
            robust_opt: AdamState::for_model(config.adam.clone(), &robust),
            erm_opt: AdamState::for_model(config.adam.clone(), &erm),
            splitter: ClusterSplitter::new(&topology),
            gce: GceConfig::new(config.gce_q)?,
            shuffle_rng: stream(config.seed, 2),
            mixup_rng: stream(config.seed, 3),
            robust,
            erm,
            prior,
            mixup,
            topology,
            iteration: 0,
            classes,
            config,
        })
    }

    pub fn robust(&self) -> &MlpScorer<T> {
        &self.robust
    }

    pub fn erm(&self) -> &MlpScorer<T> {
        &self.erm
    }

    pub fn prior(&self) -> &GroupPrior<T> {
        &self.prior
    }

    pub fn topology(&self) -> &CorrelationTopology {
        &self.topology
    }

    pub fn iterations(&self) -> u64 {
        self.iteration
    }

    /// Attribute posteriors from the biased branch's class probabilities.
    fn posteriors(&self, probs: &Tensor<T>) -> Result<Vec<Vec<T>>, TrainError> {
        (0..probs.rows())
            .map(|i| {
                let p = probs.row(i);
                Ok(self
                    .topology
                    .attribute_posterior_weighted(p, &self.splitter.weights(p))?)
            })
            .collect()
    }

    /// One mini-batch of the two-branch update. Returns the mean losses.
    fn step(
        &mut self,
        x: &Tensor<T>,
        y: &[usize],
        epoch: usize,
        observer: &mut dyn TrainObserver<T>,
    ) -> Result<(f64, f64), TrainError> {
        self.iteration += 1;
        let iteration = self.iteration;
        let n = y.len();
        let scale = T::one() / T::of(n as f64);

        // Biased branch on the original samples.
        observer.on_erm_batch(iteration, x, y);
        let logits = self.erm.forward(x).map_err(non_finite("biased", iteration))?;
        let mut upstream = Tensor::zeros(vec![n, self.classes]);
        let mut erm_loss = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let lg = gce_loss_from_logits(logits.row(i), yi, self.gce)?;
            erm_loss += lg.loss.as_f64();
            for (u, g) in upstream.row_mut(i).iter_mut().zip(lg.grad) {
                *u = g * scale;
            }
        }
        erm_loss /= n as f64;
        if !erm_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { branch: "biased", iteration });
        }
        let grads = self.erm.backward(&upstream)?;
        self.erm.apply_adam(&mut self.erm_opt, &grads)?;

        // Attribute estimates and prior update from the refreshed branch.
        let probs = softmax_rows(&self.erm.predict(x)?)?;
        for (i, &yi) in y.iter().enumerate() {
            self.splitter.observe(yi, probs.row(i));
        }
        let posteriors = self.posteriors(&probs)?;
        let attrs: Vec<usize> = posteriors.iter().map(|p| argmax(p)).collect();
        let contributions: Vec<(usize, Vec<T>)> = y.iter().copied().zip(posteriors).collect();
        self.prior.update(&contributions)?;

        // Optional Group MixUp against same-label samples flagged as minority.
        let (input, rows) = if self.config.mixup {
            let lambda = T::of(self.mixup.draw_lambda(epoch - 1, &mut self.mixup_rng));
            let samples: Vec<MixSample<'_, T>> = (0..n)
                .map(|i| MixSample {
                    x: x.row(i),
                    y: y[i],
                    attr: attrs[i],
                })
                .collect();
            let pool: Vec<MixSample<'_, T>> = samples
                .iter()
                .filter(|s| !self.topology.is_aligned(s.y, s.attr))
                .copied()
                .collect();
            let mixed = group_mixup(&samples, &pool, &self.prior, lambda, &mut self.mixup_rng);
            let mut data = Vec::with_capacity(x.len());
            let mut rows = Vec::with_capacity(n);
            for m in mixed {
                data.extend(m.x);
                rows.push(m.prior_row);
            }
            (Tensor::new(x.shape().to_vec(), data)?, rows)
        } else {
            (x.clone(), attrs.iter().map(|&a| self.prior.column(a)).collect())
        };

        // Robust branch.
        observer.on_robust_batch(iteration, &input, y, &attrs);
        let logits = self.robust.forward(&input).map_err(non_finite("robust", iteration))?;
        let weights = match self.config.loss {
            LossMode::Reweighted => {
                let entries: Vec<T> = rows.iter().zip(y).map(|(r, &yi)| r[yi]).collect();
                normalized_inverse_weights(&entries, PRIOR_FLOOR)
            }
            _ => Vec::new(),
        };
        let mut robust_loss = 0.0;
        for (i, &yi) in y.iter().enumerate() {
            let lg = match self.config.loss {
                LossMode::LogitCorrected => {
                    lc_loss(logits.row(i), yi, &CorrectionRow::from_priors(&rows[i], PRIOR_FLOOR))?
                }
                LossMode::CrossEntropy => ce_loss(logits.row(i), yi)?,
                LossMode::Reweighted => {
                    let mut lg = ce_loss(logits.row(i), yi)?;
                    lg.loss *= weights[i];
                    lg.grad.iter_mut().for_each(|g| *g *= weights[i]);
                    lg
                }
            };
            robust_loss += lg.loss.as_f64();
            for (u, g) in upstream.row_mut(i).iter_mut().zip(lg.grad) {
                *u = g * scale;
            }
        }
        robust_loss /= n as f64;
        if !robust_loss.is_finite() {
            return Err(TrainError::NonFiniteLoss { branch: "robust", iteration });
        }
        let grads = self.robust.backward(&upstream)?;
        self.robust.apply_adam(&mut self.robust_opt, &grads)?;
        Ok((erm_loss, robust_loss))
    }

    /// One pass over a freshly shuffled train split; `epoch` is 1-based.
    pub fn train_epoch(
        &mut self,
        train: &TrainSplit,
        epoch: usize,
        observer: &mut dyn TrainObserver<T>,
    ) -> Result<(f64, f64), TrainError> {
        let mut order: Vec<usize> = (0..train.y.len()).collect();
        order.shuffle(&mut self.shuffle_rng);
        let (mut erm, mut robust, mut batches) = (0.0, 0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let x = rows_to::<T>(&train.x, chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| train.y[i]).collect();
            let (e, r) = self.step(&x, &y, epoch, observer)?;
            erm += e;
            robust += r;
            batches += 1;
        }
        self.prior.end_epoch();
        Ok((erm / batches as f64, robust / batches as f64))
    }

    /// Test accuracy and margin diagnostics for the current weights.
    pub fn diagnostics(
        &self,
        dataset: &BiasedDataset,
        train: &TrainSplit,
        test: &TestSplit,
    ) -> Result<Diagnostics, TrainError> {
        let data_topology = dataset.topology();
        let test_logits = predict_all(&self.robust, &test.x)?;
        let test_eval = evaluate_logits(&test_logits, &test.groups(), dataset.attrs())?;
        let aligned: Vec<bool> = test
            .y
            .iter()
            .zip(&test.a)
            .map(|(&y, &a)| data_topology.is_aligned(y, a))
            .collect();
        let test_margins = compact(group_margins(&test_logits, &test.y, &test.groups(), &aligned), "test");

        let train_logits = predict_all(&self.robust, &train.x)?;
        let erm_probs = softmax_rows(&predict_all(&self.erm, &train.x)?)?;
        let inferred: Vec<usize> = self.posteriors(&erm_probs)?.iter().map(|p| argmax(p)).collect();
        let groups: Vec<(usize, usize)> = train.y.iter().copied().zip(inferred.iter().copied()).collect();
        let majority: Vec<bool> = groups.iter().map(|&(y, a)| self.topology.is_aligned(y, a)).collect();
        let train_margins = compact(group_margins(&train_logits, &train.y, &groups, &majority), "train");

        let true_groups: Vec<(usize, usize)> = train
            .y
            .iter()
            .copied()
            .zip(dataset.train_attrs_for_diagnostics())
            .collect();
        let train_eval = evaluate_logits(&train_logits, &true_groups, dataset.attrs()).ok();
        Ok(Diagnostics {
            test: test_eval,
            train: train_eval,
            test_margins,
            train_margins,
        })
    }

    pub fn into_outcome(self, records: Vec<EpochRecord>) -> TrainOutcome<T> {
        TrainOutcome {
            robust: self.robust,
            erm: self.erm,
            prior: self.prior,
            records,
            iterations: self.iteration,
            config: self.config,
        }
    }
}

fn compact(summary: Result<MarginSummary, MetricsError>, split: &str) -> Option<MarginSummary> {
    match summary {
        Ok(mut s) => {
            s.margins = Vec::new();
            Some(s)
        }
        Err(e) => {
            log::warn!("{split} margins unavailable: {e}");
            None
        }
    }
}

pub struct Diagnostics {
    pub test: GroupEvaluation,
    pub train: Option<GroupEvaluation>,
    pub test_margins: Option<MarginSummary>,
    pub train_margins: Option<MarginSummary>,
}

pub fn train<T: Scalar>(dataset: &BiasedDataset, config: TrainConfig) -> Result<TrainOutcome<T>, TrainError> {
    train_observed(dataset, config, &mut NoObserver)
}

pub fn train_observed<T: Scalar>(
    dataset: &BiasedDataset,
    config: TrainConfig,
    observer: &mut dyn TrainObserver<T>,
) -> Result<TrainOutcome<T>, TrainError> {
    let mut trainer = Trainer::<T>::new(dataset, config.clone())?;
    let train = dataset.train_split();
    let test = dataset.test_split();
    if train.y.is_empty() || test.y.is_empty() {
        return Err(TrainError::Config("dataset needs both train and test samples".into()));
    }
    let mut records = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        let (erm_loss, robust_loss) = trainer.train_epoch(&train, epoch, observer)?;
        let mut record = EpochRecord {
            epoch,
            iterations: trainer.iterations(),
            erm_loss,
            robust_loss,
            test: None,
            train_diagnostic: None,
            test_margins: None,
            train_margins: None,
        };
        if epoch % config.eval_every == 0 || epoch == config.epochs {
            let d = trainer.diagnostics(dataset, &train, &test)?;
            log::info!(
                "epoch {epoch}: gba {:.4} worst {:.4} losses {erm_loss:.4}/{robust_loss:.4}",
                d.test.gba,
                d.test.worst_group
            );
            record.test = Some(d.test);
            record.train_diagnostic = d.train;
            record.test_margins = d.test_margins;
            record.train_margins = d.train_margins;
        }
        observer.on_epoch(&record);
        records.push(record);
    }
    Ok(trainer.into_outcome(records))
}

pub const EPOCH_CSV_HEADER: &str = "epoch,split,group_y,group_a,accuracy,n";

/// Per-group accuracies; `train` rows use true attributes for diagnostics.
pub fn epoch_csv(records: &[EpochRecord]) -> String {
    let mut out = format!("{EPOCH_CSV_HEADER}\n");
    for r in records {
        for (split, eval) in [("test", &r.test), ("train", &r.train_diagnostic)] {
            if let Some(e) = eval {
                for (&(y, a), acc) in &e.accuracy {
                    let _ = writeln!(out, "{},{split},{y},{a},{acc},{}", r.epoch, e.sizes[&(y, a)]);
                }
            }
        }
    }
    out
}

/// Margin trajectory for one split (`"train"` or `"test"`).
pub fn margin_csv(records: &[EpochRecord], split: &str) -> String {
    let mut out = format!("{MARGIN_CSV_HEADER}\n");
    for r in records {
        let m = if split == "train" { &r.train_margins } else { &r.test_margins };
        if let Some(m) = m {
            let _ = writeln!(out, "{},{}", r.epoch, m.csv_fields());
        }
    }
    out
}

/// `key=value` summary lines.
pub fn summary_text<T: Scalar>(outcome: &TrainOutcome<T>, dataset_ratio: f32) -> String {
    let c = &outcome.config;
    let mut out = String::new();
    let _ = writeln!(out, "final_gba={}", outcome.final_gba());
    let _ = writeln!(out, "final_worst={}", outcome.final_worst());
    let _ = writeln!(out, "best_gba={}", outcome.best_gba());
    let _ = writeln!(out, "seed={}", c.seed);
    let _ = writeln!(out, "config_hash={:016x}", c.hash());
    let _ = writeln!(out, "loss={}", c.loss.name());
    let _ = writeln!(out, "mixup={}", if c.mixup { "on" } else { "off" });
    let _ = writeln!(out, "prior={}", c.strategy.name());
    let _ = writeln!(out, "ratio={dataset_ratio}");
    let _ = writeln!(out, "topology={}", c.topology_name());
    let _ = writeln!(out, "epochs={}", c.epochs);
    let _ = writeln!(out, "iterations={}", outcome.iterations);
    out
}

/// Writes metrics, margins, summary, prior table, config and checkpoints into `dir`.
pub fn write_run<T: Scalar>(dir: &Path, outcome: &TrainOutcome<T>, dataset: &BiasedDataset) -> Result<(), TrainError> {
    let io = |path: &Path| {
        let path = path.display().to_string();
        move |source| TrainError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let files = [
        ("epochs.csv", epoch_csv(&outcome.records)),
        ("margins_train.csv", margin_csv(&outcome.records, "train")),
        ("margins_test.csv", margin_csv(&outcome.records, "test")),
        ("summary.txt", summary_text(outcome, dataset.ratio())),
        ("prior.csv", outcome.prior.to_csv()),
        ("config.txt", outcome.config.canonical_text()),
    ];
    for (name, body) in files {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io(&path))?;
    }
    for (name, model) in [("robust.ckpt", &outcome.robust), ("erm.ckpt", &outcome.erm)] {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(io(&path))?;
        model.save(std::io::BufWriter::new(file))?;
    }
    Ok(())
}

/// Parses a `key=value` summary file.
pub fn parse_summary(text: &str) -> std::collections::BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{make_gaussian_toy, GaussianConfig};

    fn toy(train_per_class: usize) -> BiasedDataset {
        make_gaussian_toy(&GaussianConfig {
            train_per_class,
            test_per_cell: 50,
            ..GaussianConfig::default()
        })
        .unwrap()
    }

    fn quick(loss: LossMode, mixup: bool) -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 64,
            loss,
            mixup,
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn config_validation() {
        let ds = toy(50);
        for bad in [
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { gce_q: 1.0, ..TrainConfig::default() },
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { rampup_epochs: 0, ..TrainConfig::default() },
        ] {
            assert!(Trainer::<f32>::new(&ds, bad).is_err());
        }
        let wrong = TrainConfig {
            topology: TopologyChoice::Custom(CorrelationTopology::one_to_one(3).unwrap()),
            ..TrainConfig::default()
        };
        assert!(matches!(Trainer::<f32>::new(&ds, wrong), Err(TrainError::Config(_))));
    }

    #[test]
    fn canonical_text_is_sorted_and_complete() {
        let c = TrainConfig::default();
        let text = c.canonical_text();
        let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(text.contains("batch_size=256\n"));
        assert!(text.contains("lr_decay=10000:0.5\n"));
        assert_ne!(c.hash(), TrainConfig { seed: 1, ..c.clone() }.hash());
    }

    #[test]
    fn runs_and_reports() {
        let ds = toy(100);
        let out = train::<f32>(&ds, quick(LossMode::LogitCorrected, true)).unwrap();
        assert_eq!(out.records.len(), 2);
        assert_eq!(out.iterations, 8);
        let gba = out.final_gba();
        assert!((0.0..=1.0).contains(&gba));
        assert!(out.best_gba() >= gba);
        let csv = epoch_csv(&out.records);
        assert!(csv.starts_with(EPOCH_CSV_HEADER));
        assert_eq!(csv.lines().filter(|l| l.starts_with("2,test,")).count(), 4);
        let summary = parse_summary(&summary_text(&out, 0.01));
        for key in ["final_gba", "final_worst", "best_gba", "seed", "config_hash"] {
            assert!(summary.contains_key(key), "{key}");
        }
    }

    #[test]
    fn every_mode_trains() {
        let ds = toy(60);
        for loss in [LossMode::CrossEntropy, LossMode::Reweighted] {
            for mixup in [false, true] {
                let out = train::<f32>(&ds, quick(loss, mixup)).unwrap();
                assert!(out.final_gba().is_finite());
            }
        }
        for strategy in [PriorStrategy::BatchAvg, PriorStrategy::DatasetAvg, PriorStrategy::PerSampleMovingAvg] {
            let cfg = TrainConfig {
                strategy,
                ..quick(LossMode::LogitCorrected, false)
            };
            assert!(train::<f32>(&ds, cfg).unwrap().final_gba().is_finite());
        }
    }

    #[test]
    fn non_finite_input_is_reported_with_iteration() {
        let mut ds = toy(40);
        ds.features[3] = f32::NAN;
        let err = train::<f32>(&ds, quick(LossMode::LogitCorrected, false)).unwrap_err();
        assert!(
            matches!(err, TrainError::NonFiniteLoss { iteration: 1, .. }),
            "{err}"
        );
    }
}
