//! Methods × hyperparameter grid × seeds.

use rayon::prelude::*;
use tcr_core::data::Dataset;
use tcr_core::methods::MethodRegistry;

use crate::config::{set_param, ExperimentConfig};
use crate::experiment::{self, Corrupted, SeedPlan};

/// One sweep cell. `params` is ordered by key.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub method: String,
    pub params: Vec<(String, f64)>,
    pub seed: u64,
}

impl Cell {
    /// `beta=0.1;gamma=1.1`, empty without grid parameters.
    pub fn params_label(&self) -> String {
        self.params
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub cell: Cell,
    /// Final-epoch accuracies; `None` when the cell failed.
    pub test_acc: Option<f64>,
    pub train_acc: Option<f64>,
    pub error: Option<String>,
}

impl CellResult {
    pub fn status(&self) -> String {
        match &self.error {
            None => "ok".into(),
            Some(e) => format!("failed: {e}"),
        }
    }

    pub fn csv_fields(&self) -> [String; 6] {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        [
            self.cell.method.clone(),
            self.cell.params_label(),
            self.cell.seed.to_string(),
            opt(self.test_acc),
            opt(self.train_acc),
            self.status(),
        ]
    }
}

/// Cells in output order: seed-major, then method, then grid point.
pub fn plan(config: &ExperimentConfig) -> Vec<Cell> {
    let mut points: Vec<Vec<(String, f64)>> = vec![Vec::new()];
    for (key, values) in &config.grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.push((key.clone(), v));
                    q
                })
            })
            .collect();
    }
    let mut cells = Vec::new();
    for &seed in &config.seeds {
        for method in &config.methods {
            for params in &points {
                cells.push(Cell {
                    method: method.clone(),
                    params: params.clone(),
                    seed,
                });
            }
        }
    }
    cells
}

type Prepared = Result<(Corrupted, Dataset), String>;

fn prepare(config: &ExperimentConfig, plan: SeedPlan) -> Prepared {
    let inner = || -> anyhow::Result<(Corrupted, Dataset)> {
        let mut data = config.data.clone();
        data.seed = plan.data;
        let (train, test) = match (&config.train_path, &config.test_path) {
            (Some(a), Some(b)) => (experiment::load(a)?, experiment::load(b)?),
            _ => experiment::generate(&data)?,
        };
        let corrupted =
            experiment::corrupt(&train, &config.noise_spec()?, data.spread, plan.noise)?;
        Ok((corrupted, test))
    };
    inner().map_err(|e| format!("{e:#}"))
}

fn run_cell(
    config: &ExperimentConfig,
    registry: &MethodRegistry,
    cell: &Cell,
    prepared: &Prepared,
) -> CellResult {
    let outcome = || -> anyhow::Result<(f64, f64)> {
        let (corrupted, test) = prepared.as_ref().map_err(|e| anyhow::anyhow!("{e}"))?;
        let plan = SeedPlan::derive(cell.seed);
        let mut cfg = config.clone();
        cfg.trace.clear();
        cfg.train.method = cell.method.clone();
        cfg.train.init_seed = plan.init;
        cfg.train.shuffle_seed = plan.shuffle;
        for (k, v) in &cell.params {
            set_param(&mut cfg.train, k, *v)?;
        }
        let out = experiment::run(&cfg, registry, corrupted, test, |_, _| Ok(()))?;
        let last = out
            .metrics
            .last()
            .ok_or_else(|| anyhow::anyhow!("no epochs were run"))?;
        Ok((last.test_acc, last.train_acc_noisy))
    };
    match outcome() {
        Ok((test_acc, train_acc)) => CellResult {
            cell: cell.clone(),
            test_acc: Some(test_acc),
            train_acc: Some(train_acc),
            error: None,
        },
        Err(e) => CellResult {
            cell: cell.clone(),
            test_acc: None,
            train_acc: None,
            error: Some(format!("{e:#}")),
        },
    }
}

/// Runs every cell, in parallel when `config.parallel` is set. Failed cells
/// are recorded and do not stop the others. Results keep [`plan`] order.
pub fn run(config: &ExperimentConfig, registry: &MethodRegistry) -> Vec<CellResult> {
    let cells = plan(config);
    let prepared: Vec<(u64, Prepared)> = config
        .seeds
        .iter()
        .map(|&s| (s, prepare(config, SeedPlan::derive(s))))
        .collect();
    let lookup = |seed: u64| -> &Prepared {
        &prepared
            .iter()
            .find(|(s, _)| *s == seed)
            .expect("every planned seed is prepared")
            .1
    };
    let work = |cell: &Cell| run_cell(config, registry, cell, lookup(cell.seed));
    if config.parallel {
        cells.par_iter().map(work).collect()
    } else {
        cells.iter().map(work).collect()
    }
}
