//! Label-noise models: transition matrices, label resampling and open-set
//! feature replacement.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::rng;
use crate::{Error, Result};

/// Row-stochastic `c x c` matrix with `T[j][k] = p(noisy = k | clean = j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    classes: usize,
    entries: Vec<f64>,
}

impl TransitionMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let classes = rows.len();
        if classes < 2 {
            return Err(Error::Config(format!(
                "need at least 2 classes, got {classes}"
            )));
        }
        if rows.iter().any(|r| r.len() != classes) {
            return Err(Error::Shape("transition matrix must be square".into()));
        }
        for (j, row) in rows.iter().enumerate() {
            if row.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::Config(format!(
                    "row {j} has an entry outside [0, 1]"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Config(format!("row {j} sums to {sum}")));
            }
        }
        Ok(Self {
            classes,
            entries: rows.into_iter().flatten().collect(),
        })
    }

    pub fn identity(classes: usize) -> Result<Self> {
        uniform_transition(0.0, classes)
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, clean: usize, noisy: usize) -> f64 {
        self.entries[clean * self.classes + noisy]
    }

    pub fn row(&self, clean: usize) -> &[f64] {
        &self.entries[clean * self.classes..(clean + 1) * self.classes]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks_exact(self.classes)
    }
}

fn check_rate(eta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::Config(format!(
            "noise rate must be in [0, 1], got {eta}"
        )));
    }
    Ok(())
}

/// Symmetric noise: `1 - eta` on the diagonal, `eta / (c - 1)` elsewhere.
pub fn uniform_transition(eta: f64, classes: usize) -> Result<TransitionMatrix> {
    check_rate(eta)?;
    if classes < 2 {
        return Err(Error::Config(format!(
            "need at least 2 classes, got {classes}"
        )));
    }
    let off = eta / (classes - 1) as f64;
    let mut entries = vec![off; classes * classes];
    for j in 0..classes {
        entries[j * classes + j] = 1.0 - eta;
    }
    Ok(TransitionMatrix { classes, entries })
}

/// Source-to-target class map for asymmetric noise. Targets are distinct and
/// no class maps to itself.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassPairing(BTreeMap<usize, usize>);

impl ClassPairing {
    pub fn new(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let map: BTreeMap<usize, usize> = pairs.into_iter().collect();
        let mut targets: Vec<usize> = map.values().copied().collect();
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config(
                "pairing maps two classes to the same target".into(),
            ));
        }
        if let Some((s, _)) = map.iter().find(|(s, t)| s == t) {
            return Err(Error::Config(format!("class {s} is paired with itself")));
        }
        Ok(Self(map))
    }

    /// `j -> (j + 1) mod c` for each listed source class.
    pub fn cyclic(classes: usize, sources: impl IntoIterator<Item = usize>) -> Result<Self> {
        Self::new(sources.into_iter().map(|j| (j, (j + 1) % classes)))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.iter().map(|(a, b)| (*a, *b))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl FromStr for ClassPairing {
    type Err = Error;

    /// Parses `"0>1;3>4"`.
    fn from_str(s: &str) -> Result<Self> {
        let pairs = s
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (a, b) = p
                    .split_once('>')
                    .ok_or_else(|| Error::Config(format!("bad class pair {p:?}")))?;
                let parse = |x: &str| {
                    x.trim()
                        .parse::<usize>()
                        .map_err(|_| Error::Config(format!("bad class index {x:?}")))
                };
                Ok((parse(a)?, parse(b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pairs)
    }
}

impl fmt::Display for ClassPairing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.iter().map(|(a, b)| format!("{a}>{b}")).collect();
        f.write_str(&parts.join(";"))
    }
}

/// Flips each paired class `j` to its partner with probability `eta`.
pub fn asymmetric_transition(
    eta: f64,
    pairing: &ClassPairing,
    classes: usize,
) -> Result<TransitionMatrix> {
    check_rate(eta)?;
    let mut t = TransitionMatrix::identity(classes)?;
    for (src, dst) in pairing.iter() {
        if src >= classes || dst >= classes {
            return Err(Error::Config(format!(
                "pair {src}>{dst} out of range for {classes} classes"
            )));
        }
        t.entries[src * classes + src] = 1.0 - eta;
        t.entries[src * classes + dst] = eta;
    }
    Ok(t)
}

/// Resamples each label from its row of `t`. Returns the noisy labels and a
/// mask marking the labels that changed.
pub fn inject_noise(
    labels: &[usize],
    t: &TransitionMatrix,
    seed: u64,
) -> Result<(Vec<usize>, Vec<bool>)> {
    if let Some((i, l)) = labels.iter().enumerate().find(|(_, &l)| l >= t.classes()) {
        return Err(Error::Data(format!(
            "sample {i}: label {l} out of range for {} classes",
            t.classes()
        )));
    }
    let mut rng = rng::seeded(seed);
    let noisy: Vec<usize> = labels
        .iter()
        .map(|&clean| {
            let u: f64 = rng.random();
            let row = t.row(clean);
            let mut acc = 0.0;
            for (k, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    return k;
                }
            }
            // Rounding left the cumulative sum just under 1: take the last
            // class with nonzero mass.
            row.iter().rposition(|p| *p > 0.0).unwrap_or(clean)
        })
        .collect();
    let mask = labels.iter().zip(&noisy).map(|(a, b)| a != b).collect();
    Ok((noisy, mask))
}

/// Replaces the features of `round(eta * n)` in-set samples with distinct
/// out-of-distribution rows. Labels are untouched.
pub fn openset_mix(
    inset: &Dataset,
    oodset: &Dataset,
    eta: f64,
    seed: u64,
) -> Result<(Dataset, Vec<bool>)> {
    check_rate(eta)?;
    if inset.dim() != oodset.dim() {
        return Err(Error::Config(format!(
            "out-of-distribution features have dimension {}, in-set {}",
            oodset.dim(),
            inset.dim()
        )));
    }
    let count = (eta * inset.len() as f64).round() as usize;
    if count > oodset.len() {
        return Err(Error::Config(format!(
            "need {count} out-of-distribution samples, only {} available",
            oodset.len()
        )));
    }
    let mut rng = rng::seeded(seed);
    let targets = index::sample(&mut rng, inset.len(), count);
    let sources = index::sample(&mut rng, oodset.len(), count);
    let mut features = inset.features().to_vec();
    let mut mask = vec![false; inset.len()];
    let dim = inset.dim();
    for (t, s) in targets.iter().zip(sources.iter()) {
        let src = oodset.row(s);
        mask[t] = src != inset.row(t);
        features[t * dim..(t + 1) * dim].copy_from_slice(src);
    }
    let mixed = inset.with_features(features, Some(mask.clone()))?;
    Ok((mixed, mask))
}

/// Which corruption process to apply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseKind {
    None,
    Uniform,
    Asymmetric { pairing: Option<ClassPairing> },
    OpenSet,
}

/// Corruption recipe: kind and rate. Parses from `uniform:0.4`,
/// `asymmetric:0.4`, `asymmetric:0.4:0>1;1>2`, `openset:0.4` or `none`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub eta: f64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            eta: 0.0,
        }
    }

    pub fn uniform(eta: f64) -> Self {
        Self {
            kind: NoiseKind::Uniform,
            eta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_rate(self.eta)
    }

    /// The ground-truth transition matrix of a label-flipping spec. Open-set
    /// noise leaves labels alone, so it maps to the identity.
    pub fn transition(&self, classes: usize) -> Result<TransitionMatrix> {
        match &self.kind {
            NoiseKind::None | NoiseKind::OpenSet => TransitionMatrix::identity(classes),
            NoiseKind::Uniform => uniform_transition(self.eta, classes),
            NoiseKind::Asymmetric { pairing } => {
                let pairing = match pairing {
                    Some(p) => p.clone(),
                    None => default_pairing(classes)?,
                };
                asymmetric_transition(self.eta, &pairing, classes)
            }
        }
    }

    /// Corrupts `dataset`. Open-set noise needs `ood` rows to draw from.
    pub fn apply(&self, dataset: &Dataset, ood: Option<&Dataset>, seed: u64) -> Result<Dataset> {
        self.validate()?;
        match &self.kind {
            NoiseKind::None => {
                dataset.with_labels(dataset.labels().to_vec(), Some(vec![false; dataset.len()]))
            }
            NoiseKind::OpenSet => {
                let ood = ood.ok_or_else(|| {
                    Error::Config("open-set noise needs an out-of-distribution source".into())
                })?;
                openset_mix(dataset, ood, self.eta, seed).map(|(d, _)| d)
            }
            _ => {
                let t = self.transition(dataset.classes())?;
                let (labels, mask) = inject_noise(dataset.labels(), &t, seed)?;
                dataset.with_labels(labels, Some(mask))
            }
        }
    }
}

/// Cyclic pairing over the first half (rounded up) of the classes.
pub fn default_pairing(classes: usize) -> Result<ClassPairing> {
    ClassPairing::cyclic(classes, 0..classes.div_ceil(2))
}

impl FromStr for NoiseSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.splitn(3, ':');
        let kind = parts.next().unwrap_or_default().trim();
        if kind == "none" {
            return Ok(Self::none());
        }
        let eta: f64 = parts
            .next()
            .ok_or_else(|| Error::Config(format!("noise spec {s:?} lacks a rate")))?
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("bad noise rate in {s:?}")))?;
        let extra = parts.next();
        let kind = match kind {
            "uniform" | "symmetric" => NoiseKind::Uniform,
            "asymmetric" | "asym" => NoiseKind::Asymmetric {
                pairing: extra.map(str::parse).transpose()?,
            },
            "openset" | "open-set" => NoiseKind::OpenSet,
            other => return Err(Error::Config(format!("unknown noise kind {other:?}"))),
        };
        if extra.is_some() && !matches!(kind, NoiseKind::Asymmetric { .. }) {
            return Err(Error::Config(format!(
                "unexpected suffix in noise spec {s:?}"
            )));
        }
        let spec = Self { kind, eta };
        spec.validate()?;
        Ok(spec)
    }
}

impl fmt::Display for NoiseSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NoiseKind::None => write!(f, "none"),
            NoiseKind::Uniform => write!(f, "uniform:{}", self.eta),
            NoiseKind::Asymmetric { pairing: None } => write!(f, "asymmetric:{}", self.eta),
            NoiseKind::Asymmetric { pairing: Some(p) } => {
                write!(f, "asymmetric:{}:{p}", self.eta)
            }
            NoiseKind::OpenSet => write!(f, "openset:{}", self.eta),
        }
    }
}
