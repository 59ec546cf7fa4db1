//! The epoch loop.
//!
//! Per mini-batch: forward pass, pseudo-label construction from the
//! prediction store, mean objective over the batch, one SGD step, then the
//! batch's predictions (taken before the step) are written to the store.
//! The store keeps one snapshot per completed epoch, so a prediction written
//! in epoch `t` is consumed in epoch `t + delta` and never earlier.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::data::{shuffled_indices, Dataset};
use crate::losses::{reflect_target, PseudoLabel};
use crate::methods::{Method, MethodParams, MethodRegistry, SampleView, TemporalSettings};
use crate::model::{
    backward_accumulate, forward, init_params, lr_at, sgd_step, Gradients, LrSchedule, ModelParams,
    OptimizerState,
};
use crate::noise::TransitionMatrix;
use crate::numerics::{softmax, squeeze, ProbVector};
use crate::rng;
use crate::{Error, Result};

/// Per-sample prediction buffer with an epoch-granular delay.
#[derive(Debug, Clone)]
pub struct PredictionStore {
    samples: usize,
    classes: usize,
    delta: usize,
    alpha: f64,
    /// Rows written during the running epoch.
    current: Vec<f64>,
    /// Completed epoch snapshots, newest last.
    history: VecDeque<Vec<f64>>,
}

impl PredictionStore {
    pub fn new(samples: usize, classes: usize, delta: usize, alpha: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::Config(format!(
                "alpha must be in [0, 1), got {alpha}"
            )));
        }
        Ok(Self {
            samples,
            classes,
            delta,
            alpha,
            current: vec![0.0; samples * classes],
            history: VecDeque::with_capacity(delta.max(1)),
        })
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    fn check_id(&self, id: usize) -> Result<()> {
        if id >= self.samples {
            return Err(Error::Data(format!(
                "sample {id} out of range for a store of {} samples",
                self.samples
            )));
        }
        Ok(())
    }

    fn row<'a>(&self, buf: &'a [f64], id: usize) -> Option<&'a [f64]> {
        let row = &buf[id * self.classes..(id + 1) * self.classes];
        row.iter().any(|v| *v != 0.0).then_some(row)
    }

    /// The most recent completed-epoch value for `id`, if any.
    pub fn latest(&self, id: usize) -> Result<Option<ProbVector>> {
        self.check_id(id)?;
        Ok(self
            .history
            .back()
            .and_then(|snap| self.row(snap, id))
            .map(|r| ProbVector::from_trusted(r.to_vec())))
    }

    /// The value written for `id` during the running epoch, if any.
    pub fn pending(&self, id: usize) -> Result<Option<ProbVector>> {
        self.check_id(id)?;
        Ok(self
            .row(&self.current, id)
            .map(|r| ProbVector::from_trusted(r.to_vec())))
    }

    /// Records `f_current` for `id`: exponentially averaged with the previous
    /// epoch's value when `alpha > 0`, then squeezed once
    /// `epoch >= squeeze_start`.
    pub fn update(
        &mut self,
        id: usize,
        f_current: &ProbVector,
        epoch: usize,
        squeeze_start: usize,
        gamma: f64,
    ) -> Result<()> {
        self.check_id(id)?;
        if f_current.len() != self.classes {
            return Err(Error::Shape(format!(
                "prediction has {} classes, store holds {}",
                f_current.len(),
                self.classes
            )));
        }
        let mut candidate = f_current.clone();
        if self.alpha > 0.0 {
            if let Some(old) = self.latest(id)? {
                let a = self.alpha;
                candidate = ProbVector::from_trusted(
                    old.as_slice()
                        .iter()
                        .zip(f_current.as_slice())
                        .map(|(o, f)| a * o + (1.0 - a) * f)
                        .collect(),
                );
            }
        }
        if epoch >= squeeze_start {
            candidate = squeeze(&candidate, gamma)?;
        }
        let c = self.classes;
        self.current[id * c..(id + 1) * c].copy_from_slice(candidate.as_slice());
        Ok(())
    }

    /// Builds the training target for `id` in `epoch`.
    ///
    /// Returns the observed label until a snapshot `delta` epochs old exists.
    /// With `delta == 0` the current prediction is used directly.
    pub fn fetch_target(
        &self,
        id: usize,
        y_noisy: &ProbVector,
        f_current: &ProbVector,
        beta: f64,
        epoch: usize,
    ) -> Result<PseudoLabel> {
        self.check_id(id)?;
        if self.delta == 0 {
            return reflect_target(y_noisy, f_current, beta);
        }
        if epoch <= self.delta || self.history.len() < self.delta {
            return Ok(PseudoLabel::original(y_noisy.clone()));
        }
        let snap = &self.history[self.history.len() - self.delta];
        match self.row(snap, id) {
            Some(z) => reflect_target(y_noisy, &ProbVector::from_trusted(z.to_vec()), beta),
            None => Ok(PseudoLabel::original(y_noisy.clone())),
        }
    }

    /// Closes the running epoch: its rows become the newest snapshot.
    pub fn end_epoch(&mut self) {
        let fresh = vec![0.0; self.samples * self.classes];
        self.history
            .push_back(std::mem::replace(&mut self.current, fresh));
        while self.history.len() > self.delta.max(1) {
            self.history.pop_front();
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub method: String,
    pub beta: f64,
    pub gamma: f64,
    pub delta: usize,
    /// First squeezed epoch; defaults to the epoch after the first LR decay.
    pub squeeze_start: Option<usize>,
    pub alpha: f64,
    pub q: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: Vec<usize>,
    pub lr: f64,
    /// `(epoch, divisor)`: the divisor applies after `epoch`.
    pub milestones: Vec<(usize, f64)>,
    pub momentum: f64,
    pub weight_decay: f64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: "tcr".into(),
            beta: 0.1,
            gamma: 1.1,
            delta: 1,
            squeeze_start: None,
            alpha: 0.0,
            q: 0.7,
            epochs: 60,
            batch_size: 32,
            hidden: vec![64, 64],
            lr: 0.1,
            milestones: vec![(30, 10.0), (45, 10.0)],
            momentum: 0.9,
            weight_decay: 1e-4,
            init_seed: 1,
            shuffle_seed: 2,
        }
    }
}

impl TrainConfig {
    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            initial: self.lr,
            milestones: self.milestones.clone(),
        }
    }

    pub fn resolved_squeeze_start(&self) -> usize {
        self.squeeze_start
            .unwrap_or_else(|| self.schedule().first_milestone().map_or(1, |m| m + 1))
    }

    /// Every problem with the configuration, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(0.0..=1.0).contains(&self.beta) {
            out.push(format!("beta must be in [0, 1], got {}", self.beta));
        }
        if !(self.gamma >= 1.0) || !self.gamma.is_finite() {
            out.push(format!("gamma must be >= 1, got {}", self.gamma));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            out.push(format!("alpha must be in [0, 1), got {}", self.alpha));
        }
        if !(self.q > 0.0 && self.q <= 1.0) {
            out.push(format!("q must be in (0, 1], got {}", self.q));
        }
        if self.epochs == 0 {
            out.push("epochs must be >= 1".into());
        }
        if self.batch_size == 0 {
            out.push("batch size must be >= 1".into());
        }
        if self.hidden.contains(&0) {
            out.push("hidden layer widths must be positive".into());
        }
        if let Err(e) = self.schedule().validate() {
            out.push(e.to_string());
        }
        let ts = self.resolved_squeeze_start();
        if self.squeeze_start.is_some() && (ts == 0 || ts > self.epochs) {
            out.push(format!(
                "squeeze start must be in [1, {}], got {ts}",
                self.epochs
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            out.push(format!("momentum must be in [0, 1), got {}", self.momentum));
        }
        if !(self.weight_decay >= 0.0) {
            out.push(format!(
                "weight decay must be >= 0, got {}",
                self.weight_decay
            ));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    pub fn method_params(&self, transition: Option<TransitionMatrix>) -> MethodParams {
        MethodParams {
            beta: self.beta,
            gamma: self.gamma,
            delta: self.delta,
            squeeze_start: self.resolved_squeeze_start(),
            alpha: self.alpha,
            q: self.q,
            transition,
        }
    }
}

/// Metrics of one epoch. Train accuracies use the pre-update predictions
/// gathered during the epoch and compare against the stored (noisy) labels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub train_acc_noisy: f64,
    /// Accuracy on samples whose label was left intact.
    pub train_acc_clean_subset: Option<f64>,
    /// Agreement with the corrupted label on corrupted samples (memorization).
    pub train_acc_corrupt_subset: Option<f64>,
    pub test_acc: f64,
}

/// One traced prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub epoch: usize,
    pub sample_id: u64,
    pub probs: ProbVector,
}

pub struct Trainer {
    config: TrainConfig,
    method: Box<dyn Method>,
    temporal: Option<TemporalSettings>,
    params: ModelParams,
    optimizer: OptimizerState,
    store: Option<PredictionStore>,
    shuffle_rng: rng::Rng,
    epochs_done: usize,
}

impl Trainer {
    /// Sets up a run of `method` on `train`. The network shape is
    /// `[train.dim(), config.hidden..., train.classes()]`.
    pub fn new(config: TrainConfig, method: Box<dyn Method>, train: &Dataset) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::Data("training set is empty".into()));
        }
        let mut dims = vec![train.dim()];
        dims.extend_from_slice(&config.hidden);
        dims.push(train.classes());
        let params = init_params(&dims, config.init_seed)?;
        let optimizer = OptimizerState::new(
            &params,
            lr_at(&config.schedule(), 1),
            config.momentum,
            config.weight_decay,
        );
        let temporal = method.temporal();
        let store = temporal
            .map(|t| PredictionStore::new(train.len(), train.classes(), t.delta, t.alpha))
            .transpose()?;
        Ok(Self {
            shuffle_rng: rng::seeded(config.shuffle_seed),
            config,
            method,
            temporal,
            params,
            optimizer,
            store,
            epochs_done: 0,
        })
    }

    /// Builds the method from `registry` using the config's name and
    /// hyperparameters.
    pub fn from_registry(
        config: TrainConfig,
        registry: &MethodRegistry,
        transition: Option<TransitionMatrix>,
        train: &Dataset,
    ) -> Result<Self> {
        config.validate()?;
        let method = registry.build(&config.method, &config.method_params(transition))?;
        Self::new(config, method, train)
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn store(&self) -> Option<&PredictionStore> {
        self.store.as_ref()
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn method(&self) -> &dyn Method {
        self.method.as_ref()
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// Runs the next epoch over `train` and scores the result on `test`.
    pub fn train_epoch(&mut self, train: &Dataset, test: &Dataset) -> Result<EpochMetrics> {
        let epoch = self.epochs_done + 1;
        if let Some(store) = &self.store {
            if store.samples != train.len() {
                return Err(Error::Data(format!(
                    "store sized for {} samples, dataset has {}",
                    store.samples,
                    train.len()
                )));
            }
        }
        let classes = self.params.classes();
        if train.dim() != self.params.input_dim() || train.classes() != classes {
            return Err(Error::Shape("training set does not match the model".into()));
        }
        let lr = lr_at(&self.config.schedule(), epoch);
        self.optimizer.lr = lr;

        let order = shuffled_indices(train.len(), &mut self.shuffle_rng);
        let mut loss_sum = 0.0;
        let mut hits = Tally::default();
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let ctx = |e: Error| e.context(format!("epoch {epoch}, batch {b}"));
            let scale = 1.0 / batch.len() as f64;
            let mut grads = Gradients::zeros_like(&self.params);
            let mut predictions = Vec::with_capacity(batch.len());
            for &i in batch {
                let sample_ctx = |e: Error| ctx(e.context(format!("sample {}", train.ids()[i])));
                let (logits, cache) = forward(&self.params, train.row(i)).map_err(sample_ctx)?;
                let f = softmax(&logits);
                let label = train.label(i);
                let label_vec = ProbVector::one_hot(classes, label)?;
                let stored = match (&self.store, self.temporal) {
                    (Some(store), Some(t)) => Some(
                        store
                            .fetch_target(i, &label_vec, &f, t.beta, epoch)
                            .map_err(sample_ctx)?,
                    ),
                    _ => None,
                };
                let out = self
                    .method
                    .objective(&SampleView {
                        prediction: &f,
                        label,
                        label_vec: &label_vec,
                        stored_target: stored.as_ref(),
                    })
                    .map_err(sample_ctx)?;
                if !out.loss.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                    return Err(sample_ctx(Error::Numeric(
                        "non-finite loss or gradient".into(),
                    )));
                }
                backward_accumulate(&self.params, &cache, &out.grad, scale, &mut grads)
                    .map_err(sample_ctx)?;
                loss_sum += out.loss;
                hits.record(f.argmax() == label, train.is_corrupted(i));
                predictions.push((i, f));
            }
            sgd_step(&mut self.params, &mut self.optimizer, &grads).map_err(ctx)?;
            if let (Some(store), Some(t)) = (&mut self.store, self.temporal) {
                for (i, f) in &predictions {
                    store
                        .update(*i, f, epoch, t.squeeze_start, t.gamma)
                        .map_err(ctx)?;
                }
            }
        }
        if let Some(store) = &mut self.store {
            store.end_epoch();
        }
        self.epochs_done = epoch;

        Ok(EpochMetrics {
            epoch,
            lr,
            train_loss: loss_sum / train.len() as f64,
            train_acc_noisy: hits.overall(),
            train_acc_clean_subset: hits.clean(),
            train_acc_corrupt_subset: hits.corrupt(),
            test_acc: evaluate(&self.params, test)?,
        })
    }

    /// Trains for the configured number of epochs, handing each epoch's
    /// metrics and parameters to `observe`.
    pub fn run(
        &mut self,
        train: &Dataset,
        test: &Dataset,
        mut observe: impl FnMut(&EpochMetrics, &ModelParams) -> Result<()>,
    ) -> Result<Vec<EpochMetrics>> {
        let mut all = Vec::with_capacity(self.config.epochs);
        while self.epochs_done < self.config.epochs {
            let m = self.train_epoch(train, test)?;
            observe(&m, &self.params)?;
            all.push(m);
        }
        Ok(all)
    }
}

#[derive(Default)]
struct Tally {
    clean: (usize, usize),
    corrupt: (usize, usize),
}

impl Tally {
    fn record(&mut self, correct: bool, corrupted: bool) {
        let slot = if corrupted {
            &mut self.corrupt
        } else {
            &mut self.clean
        };
        slot.0 += usize::from(correct);
        slot.1 += 1;
    }

    fn ratio((hit, total): (usize, usize)) -> Option<f64> {
        (total > 0).then(|| hit as f64 / total as f64)
    }

    fn overall(&self) -> f64 {
        Self::ratio((self.clean.0 + self.corrupt.0, self.clean.1 + self.corrupt.1)).unwrap_or(0.0)
    }

    fn clean(&self) -> Option<f64> {
        Self::ratio(self.clean)
    }

    fn corrupt(&self) -> Option<f64> {
        Self::ratio(self.corrupt)
    }
}

/// Fraction of rows whose logit argmax (lowest index on ties) equals the label.
pub fn evaluate(params: &ModelParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty dataset".into()));
    }
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        let (h, _) = forward(params, dataset.row(i))?;
        correct += usize::from(h.argmax() == dataset.label(i));
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Current model predictions for the samples with the given ids.
pub fn trace_samples(
    params: &ModelParams,
    dataset: &Dataset,
    sample_ids: &[u64],
    epoch: usize,
) -> Result<Vec<TraceRow>> {
    sample_ids
        .iter()
        .map(|&id| {
            let row = dataset
                .position_of(id)
                .ok_or_else(|| Error::Data(format!("no sample with id {id}")))?;
            let (h, _) = forward(params, dataset.row(row))?;
            Ok(TraceRow {
                epoch,
                sample_id: id,
                probs: softmax(&h),
            })
        })
        .collect()
}
