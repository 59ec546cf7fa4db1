//! Data preparation and single training runs.

use std::path::Path;

use anyhow::{bail, Context};
use tcr_core::data::{self, BlobLayout, Dataset};
use tcr_core::methods::MethodRegistry;
use tcr_core::model::ModelParams;
use tcr_core::noise::{NoiseKind, NoiseSpec, TransitionMatrix};
use tcr_core::rng::derive_seed;
use tcr_core::trainer::{trace_samples, EpochMetrics, TraceRow, Trainer};

use crate::config::{DataConfig, ExperimentConfig};

/// Layout of the out-of-distribution source used by open-set noise. Its
/// centers sit three times farther out than the in-set ones and are rotated
/// away from them.
pub const OOD_LAYOUT: BlobLayout = BlobLayout {
    radius: 3.0,
    phase: 0.5,
};

/// Clean train/test split generated from `config`.
pub fn generate(config: &DataConfig) -> anyhow::Result<(Dataset, Dataset)> {
    let all = data::gaussian_blobs(
        config.classes,
        config.per_class,
        config.dim,
        config.spread,
        derive_seed(config.seed, 0),
    )?;
    Ok(data::split(
        &all,
        config.test_fraction,
        derive_seed(config.seed, 1),
    )?)
}

/// Reads both files, or generates when the config names none.
pub fn load_or_generate(config: &ExperimentConfig) -> anyhow::Result<(Dataset, Dataset)> {
    match (&config.train_path, &config.test_path) {
        (Some(train), Some(test)) => Ok((load(train)?, load(test)?)),
        _ => generate(&config.data),
    }
}

pub fn load(path: &Path) -> anyhow::Result<Dataset> {
    data::load(path).with_context(|| format!("cannot load dataset {}", path.display()))
}

/// Noisy training set plus the transition matrix that produced it.
#[derive(Debug, Clone)]
pub struct Corrupted {
    pub train: Dataset,
    pub transition: TransitionMatrix,
}

/// Applies `spec` to `train`. Open-set noise draws replacement features from
/// blobs laid out with [`OOD_LAYOUT`].
pub fn corrupt(
    train: &Dataset,
    spec: &NoiseSpec,
    spread: f64,
    seed: u64,
) -> anyhow::Result<Corrupted> {
    let ood = match spec.kind {
        NoiseKind::OpenSet => Some(data::gaussian_blobs_with_layout(
            train.classes(),
            train.len().div_ceil(train.classes()),
            train.dim(),
            spread,
            OOD_LAYOUT,
            derive_seed(seed, 1),
        )?),
        _ => None,
    };
    Ok(Corrupted {
        train: spec.apply(train, ood.as_ref(), derive_seed(seed, 0))?,
        transition: spec.transition(train.classes())?,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub metrics: Vec<EpochMetrics>,
    pub params: ModelParams,
}

/// Trains `config.train` on `corrupted`, reporting each epoch's metrics and
/// traces of `config.trace` to `observe`.
pub fn run(
    config: &ExperimentConfig,
    registry: &MethodRegistry,
    corrupted: &Corrupted,
    test: &Dataset,
    mut observe: impl FnMut(&EpochMetrics, &[TraceRow]) -> anyhow::Result<()>,
) -> anyhow::Result<RunOutcome> {
    let train = &corrupted.train;
    if let Some(id) = config
        .trace
        .iter()
        .find(|&&id| train.position_of(id).is_none())
    {
        bail!("trace id {id} is not in the training set");
    }
    let mut trainer = Trainer::from_registry(
        config.train.clone(),
        registry,
        Some(corrupted.transition.clone()),
        train,
    )?;
    let mut metrics = Vec::with_capacity(config.train.epochs);
    while trainer.epochs_done() < config.train.epochs {
        let m = trainer.train_epoch(train, test)?;
        let traces = trace_samples(trainer.params(), train, &config.trace, m.epoch)?;
        observe(&m, &traces)?;
        metrics.push(m);
    }
    Ok(RunOutcome {
        metrics,
        params: trainer.params().clone(),
    })
}

/// Sub-seeds of one sweep seed. Every method in a cell row shares them, so
/// all methods see the same data and the same noise realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedPlan {
    pub data: u64,
    pub noise: u64,
    pub init: u64,
    pub shuffle: u64,
}

impl SeedPlan {
    pub fn derive(seed: u64) -> Self {
        Self {
            data: derive_seed(seed, 0),
            noise: derive_seed(seed, 1),
            init: derive_seed(seed, 2),
            shuffle: derive_seed(seed, 3),
        }
    }
}
