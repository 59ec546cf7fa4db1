//! Simplex operations shared by the losses and the prediction store.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Floor applied to probabilities before taking a logarithm.
pub const LOG_EPS: f64 = 1e-12;

/// Tolerance on the sum of a probability vector.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A point on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    /// Validates that every entry is in `[0, 1]` and the entries sum to one.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty probability vector".into()));
        }
        if let Some(v) = values
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::InvalidInput(format!(
                "probability entry {v} outside [0, 1]"
            )));
        }
        let sum: f64 = values.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidInput(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self(values))
    }

    /// Wraps values already known to be on the simplex (results of softmax,
    /// convex combinations of valid vectors, and so on).
    pub(crate) fn from_trusted(values: Vec<f64>) -> Self {
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        Self(values)
    }

    pub fn one_hot(classes: usize, index: usize) -> Result<Self> {
        if index >= classes {
            return Err(Error::InvalidInput(format!(
                "class {index} out of range for {classes} classes"
            )));
        }
        let mut v = vec![0.0; classes];
        v[index] = 1.0;
        Ok(Self(v))
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return Err(Error::InvalidInput("zero classes".into()));
        }
        Ok(Self(vec![1.0 / classes as f64; classes]))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Index of the largest entry; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl TryFrom<Vec<f64>> for ProbVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<ProbVector> for Vec<f64> {
    fn from(p: ProbVector) -> Self {
        p.0
    }
}

impl AsRef<[f64]> for ProbVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Unnormalized class scores produced by the network.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty logit vector".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite logit {v}")));
        }
        Ok(Self(values))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

fn normalized_exp(shifted: &[f64]) -> Vec<f64> {
    let max = shifted.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = shifted.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Softmax with max-subtraction.
pub fn softmax(logits: &LogitVector) -> ProbVector {
    ProbVector::from_trusted(normalized_exp(logits.as_slice()))
}

/// Softmax over raw values, rejecting non-finite input.
pub fn softmax_slice(values: &[f64]) -> Result<ProbVector> {
    LogitVector::new(values.to_vec()).map(|h| softmax(&h))
}

/// Sharpens a distribution: `p^gamma / sum(p^gamma)`.
///
/// Evaluated as a softmax over `gamma * ln p` so tiny entries do not
/// underflow at large exponents. Zero entries stay zero.
pub fn squeeze(p: &ProbVector, gamma: f64) -> Result<ProbVector> {
    if !(gamma >= 1.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "squeeze exponent must be a finite value >= 1, got {gamma}"
        )));
    }
    if gamma == 1.0 {
        return Ok(p.clone());
    }
    let support: Vec<usize> = (0..p.len()).filter(|&i| p.0[i] > 0.0).collect();
    let scaled: Vec<f64> = support.iter().map(|&i| gamma * p.0[i].ln()).collect();
    let mut out = vec![0.0; p.len()];
    for (&i, v) in support.iter().zip(normalized_exp(&scaled)) {
        out[i] = v;
    }
    Ok(ProbVector::from_trusted(out))
}

/// `-target . ln(max(pred, LOG_EPS))`.
pub fn cross_entropy(target: &ProbVector, pred: &ProbVector) -> Result<f64> {
    check_same_len(target.len(), pred.len())?;
    Ok(-target
        .0
        .iter()
        .zip(&pred.0)
        .map(|(t, p)| t * p.max(LOG_EPS).ln())
        .sum::<f64>())
}

pub(crate) fn check_same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "length {a} does not match length {b}"
        )));
    }
    Ok(())
}
