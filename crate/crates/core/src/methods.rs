//! Training methods behind one trait, registered by name.
//!
//! A [`Method`] turns one sample's prediction and label (plus, for methods
//! that keep a prediction store, the stored pseudo-label) into a loss value
//! and dL/dh. The trainer never matches on method kinds; it asks the
//! registry for a boxed method and drives it through the trait.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::losses::{
    bootstrap_hard_loss, bootstrap_soft_loss, check_unit_interval, cross_entropy_loss,
    forward_loss, gce_loss, LossGrad, PseudoLabel,
};
use crate::noise::TransitionMatrix;
use crate::numerics::ProbVector;
use crate::{Error, Result};

/// Everything a method may look at for one sample.
#[derive(Debug, Clone, Copy)]
pub struct SampleView<'a> {
    /// Current prediction `softmax(h)`.
    pub prediction: &'a ProbVector,
    /// Observed (possibly noisy) class index.
    pub label: usize,
    /// The same label as a one-hot vector.
    pub label_vec: &'a ProbVector,
    /// Target assembled from the prediction store, for temporal methods.
    pub stored_target: Option<&'a PseudoLabel>,
}

/// Settings of the temporal prediction store a method relies on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemporalSettings {
    /// Weight of the observed label in the reflected target.
    pub beta: f64,
    /// Squeeze exponent applied to stored predictions.
    pub gamma: f64,
    /// Epoch delay between storing a prediction and consuming it.
    pub delta: usize,
    /// First epoch whose stored predictions are squeezed.
    pub squeeze_start: usize,
    /// Exponential averaging coefficient for stored predictions.
    pub alpha: f64,
}

pub trait Method: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    /// `Some` when the trainer must maintain a prediction store and hand the
    /// resulting target to [`Method::objective`].
    fn temporal(&self) -> Option<TemporalSettings> {
        None
    }

    fn objective(&self, sample: &SampleView<'_>) -> Result<LossGrad>;
}

/// Hyperparameters a factory may draw from. Each method reads only the
/// fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    pub beta: f64,
    pub gamma: f64,
    pub delta: usize,
    pub squeeze_start: usize,
    pub alpha: f64,
    pub q: f64,
    /// Ground-truth noise transition, required by forward correction.
    pub transition: Option<TransitionMatrix>,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            beta: 0.1,
            gamma: 1.1,
            delta: 1,
            squeeze_start: 1,
            alpha: 0.0,
            q: 0.7,
            transition: None,
        }
    }
}

#[derive(Debug)]
struct CrossEntropy;

impl Method for CrossEntropy {
    fn name(&self) -> &str {
        "ce"
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        cross_entropy_loss(s.label_vec, s.prediction)
    }
}

/// Reflection loss against stored predictions (temporal calibrated
/// regularization). With `delta == 0` the target uses the current
/// prediction instead.
#[derive(Debug)]
struct Reflection {
    name: &'static str,
    settings: TemporalSettings,
}

impl Method for Reflection {
    fn name(&self) -> &str {
        self.name
    }

    fn temporal(&self) -> Option<TemporalSettings> {
        Some(self.settings)
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        let target = s.stored_target.ok_or_else(|| {
            Error::Contract("reflection loss called without a stored target".into())
        })?;
        cross_entropy_loss(&target.target, s.prediction)
    }
}

#[derive(Debug)]
struct BootstrapSoft {
    beta: f64,
}

impl Method for BootstrapSoft {
    fn name(&self) -> &str {
        "bootstrap-soft"
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        bootstrap_soft_loss(s.label_vec, s.prediction, self.beta)
    }
}

#[derive(Debug)]
struct BootstrapHard {
    beta: f64,
}

impl Method for BootstrapHard {
    fn name(&self) -> &str {
        "bootstrap-hard"
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        bootstrap_hard_loss(s.label_vec, s.prediction, self.beta)
    }
}

#[derive(Debug)]
struct GeneralizedCe {
    q: f64,
}

impl Method for GeneralizedCe {
    fn name(&self) -> &str {
        "gce"
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        gce_loss(s.prediction, s.label, self.q)
    }
}

#[derive(Debug)]
struct ForwardCorrection {
    transition: TransitionMatrix,
}

impl Method for ForwardCorrection {
    fn name(&self) -> &str {
        "forward"
    }

    fn objective(&self, s: &SampleView<'_>) -> Result<LossGrad> {
        forward_loss(s.prediction, s.label_vec, &self.transition)
    }
}

fn temporal_settings(p: &MethodParams, delta: usize) -> Result<TemporalSettings> {
    check_unit_interval("beta", p.beta)?;
    if !(p.gamma >= 1.0) || !p.gamma.is_finite() {
        return Err(Error::Config(format!(
            "gamma must be >= 1, got {}",
            p.gamma
        )));
    }
    if !(0.0..1.0).contains(&p.alpha) {
        return Err(Error::Config(format!(
            "alpha must be in [0, 1), got {}",
            p.alpha
        )));
    }
    if p.squeeze_start == 0 {
        return Err(Error::Config("squeeze start epoch must be >= 1".into()));
    }
    Ok(TemporalSettings {
        beta: p.beta,
        gamma: p.gamma,
        delta,
        squeeze_start: p.squeeze_start,
        alpha: p.alpha,
    })
}

fn build_ce(_: &MethodParams) -> Result<Box<dyn Method>> {
    Ok(Box::new(CrossEntropy))
}

fn build_tcr(p: &MethodParams) -> Result<Box<dyn Method>> {
    Ok(Box::new(Reflection {
        name: "tcr",
        settings: temporal_settings(p, p.delta)?,
    }))
}

fn build_vanilla(p: &MethodParams) -> Result<Box<dyn Method>> {
    Ok(Box::new(Reflection {
        name: "vanilla",
        settings: temporal_settings(p, 0)?,
    }))
}

fn build_bootstrap_soft(p: &MethodParams) -> Result<Box<dyn Method>> {
    check_unit_interval("beta", p.beta)?;
    Ok(Box::new(BootstrapSoft { beta: p.beta }))
}

fn build_bootstrap_hard(p: &MethodParams) -> Result<Box<dyn Method>> {
    check_unit_interval("beta", p.beta)?;
    Ok(Box::new(BootstrapHard { beta: p.beta }))
}

fn build_gce(p: &MethodParams) -> Result<Box<dyn Method>> {
    if !(p.q > 0.0 && p.q <= 1.0) {
        return Err(Error::Config(format!("q must be in (0, 1], got {}", p.q)));
    }
    Ok(Box::new(GeneralizedCe { q: p.q }))
}

fn build_forward(p: &MethodParams) -> Result<Box<dyn Method>> {
    let transition = p
        .transition
        .clone()
        .ok_or_else(|| Error::Config("forward correction needs a transition matrix".into()))?;
    Ok(Box::new(ForwardCorrection { transition }))
}

pub type MethodFactory = fn(&MethodParams) -> Result<Box<dyn Method>>;

struct Entry {
    summary: &'static str,
    factory: MethodFactory,
}

/// Name-to-factory table of available methods.
pub struct MethodRegistry {
    entries: BTreeMap<String, Entry>,
}

impl MethodRegistry {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    /// Registry preloaded with every method shipped in this crate.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("ce", "plain cross entropy on the observed labels", build_ce);
        r.register(
            "tcr",
            "reflection loss on delayed, squeezed predictions (beta, gamma, delta, alpha)",
            build_tcr,
        );
        r.register(
            "vanilla",
            "reflection loss on the current prediction (tcr with delta = 0)",
            build_vanilla,
        );
        r.register(
            "bootstrap-soft",
            "soft bootstrapping with the current prediction (beta)",
            build_bootstrap_soft,
        );
        r.register(
            "bootstrap-hard",
            "hard bootstrapping with the predicted class (beta)",
            build_bootstrap_hard,
        );
        r.register("gce", "generalized cross entropy (q)", build_gce);
        r.register(
            "forward",
            "forward loss correction with the true transition matrix",
            build_forward,
        );
        r
    }

    /// Adds or replaces a method.
    pub fn register(&mut self, name: &str, summary: &'static str, factory: MethodFactory) {
        self.entries
            .insert(name.to_string(), Entry { summary, factory });
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn summaries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.summary))
    }

    pub fn build(&self, name: &str, params: &MethodParams) -> Result<Box<dyn Method>> {
        let entry = self.entries.get(name).ok_or_else(|| {
            let known: Vec<&str> = self.names().collect();
            Error::Config(format!(
                "unknown method {name:?} (known: {})",
                known.join(", ")
            ))
        })?;
        (entry.factory)(params)
    }
}

impl Default for MethodRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for MethodRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}
