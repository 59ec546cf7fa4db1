//! Training objectives and their gradients with respect to the logits.
//!
//! Every gradient here is dL/dh for a single sample, where `f = softmax(h)`.

use serde::{Deserialize, Serialize};

use crate::noise::TransitionMatrix;
use crate::numerics::{check_same_len, cross_entropy, ProbVector, LOG_EPS};
use crate::{Error, Result};

/// Where a training target came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Original,
    Reflected,
    BootstrapSoft,
    BootstrapHard,
}

/// The simplex-valued target actually fed to the loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub target: ProbVector,
    pub provenance: Provenance,
}

impl PseudoLabel {
    pub fn original(label: ProbVector) -> Self {
        Self {
            target: label,
            provenance: Provenance::Original,
        }
    }
}

/// A loss value together with dL/dh.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

pub(crate) fn check_unit_interval(name: &str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::Config(format!("{name} must be in [0, 1], got {v}")));
    }
    Ok(())
}

/// `beta * y + (1 - beta) * f_prev`.
pub fn reflect_target(y: &ProbVector, f_prev: &ProbVector, beta: f64) -> Result<PseudoLabel> {
    check_unit_interval("beta", beta)?;
    check_same_len(y.len(), f_prev.len())?;
    let target = y
        .as_slice()
        .iter()
        .zip(f_prev.as_slice())
        .map(|(a, b)| beta * a + (1.0 - beta) * b)
        .collect();
    Ok(PseudoLabel {
        target: ProbVector::from_trusted(target),
        provenance: Provenance::Reflected,
    })
}

/// Cross-entropy gradient through the softmax: `f - y_star`.
pub fn ce_grad(y_star: &ProbVector, f: &ProbVector) -> Result<Vec<f64>> {
    check_same_len(y_star.len(), f.len())?;
    Ok(f.as_slice()
        .iter()
        .zip(y_star.as_slice())
        .map(|(p, t)| p - t)
        .collect())
}

/// Cross entropy against a fixed target, with its gradient.
pub fn cross_entropy_loss(target: &ProbVector, f: &ProbVector) -> Result<LossGrad> {
    Ok(LossGrad {
        loss: cross_entropy(target, f)?,
        grad: ce_grad(target, f)?,
    })
}

/// Gradient of the reflection loss, split into the label term and the
/// temporal term: `beta * (f - y) + (1 - beta) * (f - f_prev)`.
pub fn reflection_grad(
    y: &ProbVector,
    f_prev: &ProbVector,
    f: &ProbVector,
    beta: f64,
) -> Result<Vec<f64>> {
    check_unit_interval("beta", beta)?;
    check_same_len(y.len(), f.len())?;
    check_same_len(f_prev.len(), f.len())?;
    let label_term = ce_grad(y, f)?;
    Ok(label_term
        .iter()
        .zip(f.as_slice().iter().zip(f_prev.as_slice()))
        .map(|(g, (p, q))| beta * g + (1.0 - beta) * (p - q))
        .collect())
}

/// Gradient of the self-entropy term `-f . ln f` of the soft bootstrap:
/// `f_l * (sum_j f_j ln f_j - ln f_l)`.
///
/// The prediction appears on both sides of the cross entropy and the
/// gradient flows through both; holding the target fixed would cancel the
/// term to zero.
pub fn bootstrap_soft_grad(f: &ProbVector) -> Vec<f64> {
    let logs: Vec<f64> = f.as_slice().iter().map(|p| p.max(LOG_EPS).ln()).collect();
    let neg_entropy: f64 = f.as_slice().iter().zip(&logs).map(|(p, l)| p * l).sum();
    f.as_slice()
        .iter()
        .zip(&logs)
        .map(|(p, l)| p * (neg_entropy - l))
        .collect()
}

/// Gradient of the hard bootstrap term: `f - one_hot(argmax f)`, lowest index
/// on ties.
pub fn bootstrap_hard_grad(f: &ProbVector) -> Vec<f64> {
    let k = f.argmax();
    let mut g = f.as_slice().to_vec();
    g[k] -= 1.0;
    g
}

/// Soft bootstrap: `-(beta * y + (1 - beta) * f) . ln f`.
pub fn bootstrap_soft_loss(y: &ProbVector, f: &ProbVector, beta: f64) -> Result<LossGrad> {
    check_unit_interval("beta", beta)?;
    let label = cross_entropy_loss(y, f)?;
    let self_term = cross_entropy(f, f)?;
    let soft = bootstrap_soft_grad(f);
    Ok(LossGrad {
        loss: beta * label.loss + (1.0 - beta) * self_term,
        grad: label
            .grad
            .iter()
            .zip(&soft)
            .map(|(a, b)| beta * a + (1.0 - beta) * b)
            .collect(),
    })
}

/// Hard bootstrap: `-(beta * y + (1 - beta) * one_hot(argmax f)) . ln f`.
pub fn bootstrap_hard_loss(y: &ProbVector, f: &ProbVector, beta: f64) -> Result<LossGrad> {
    check_unit_interval("beta", beta)?;
    let label = cross_entropy_loss(y, f)?;
    let k = f.argmax();
    let self_term = -f.as_slice()[k].max(LOG_EPS).ln();
    let hard = bootstrap_hard_grad(f);
    Ok(LossGrad {
        loss: beta * label.loss + (1.0 - beta) * self_term,
        grad: label
            .grad
            .iter()
            .zip(&hard)
            .map(|(a, b)| beta * a + (1.0 - beta) * b)
            .collect(),
    })
}

/// Generalized cross entropy `(1 - f_y^q) / q`, gradient
/// `f_y^q * (f - e_y)`.
pub fn gce_loss(f: &ProbVector, y_class: usize, q: f64) -> Result<LossGrad> {
    if !(q > 0.0 && q <= 1.0) {
        return Err(Error::Config(format!(
            "GCE exponent q must be in (0, 1], got {q}"
        )));
    }
    if y_class >= f.len() {
        return Err(Error::Shape(format!(
            "class {y_class} out of range for {} outputs",
            f.len()
        )));
    }
    let fy_q = f.as_slice()[y_class].powf(q);
    let mut grad: Vec<f64> = f.as_slice().iter().map(|p| fy_q * p).collect();
    grad[y_class] -= fy_q;
    Ok(LossGrad {
        loss: (1.0 - fy_q) / q,
        grad,
    })
}

/// Forward correction: `-y . ln(T^T f)`, with the log clamped at `LOG_EPS`.
pub fn forward_loss(f: &ProbVector, y: &ProbVector, t: &TransitionMatrix) -> Result<LossGrad> {
    let c = f.len();
    check_same_len(y.len(), c)?;
    check_same_len(t.classes(), c)?;
    let fs = f.as_slice();
    // Noisy-label distribution g_k = sum_j T[j][k] f_j.
    let noisy: Vec<f64> = (0..c)
        .map(|k| (0..c).map(|j| t.get(j, k) * fs[j]).sum())
        .collect();
    let loss = -y
        .as_slice()
        .iter()
        .zip(&noisy)
        .map(|(yk, g)| yk * g.max(LOG_EPS).ln())
        .sum::<f64>();
    // dL/df_j, zero through clamped entries.
    let dl_df: Vec<f64> = (0..c)
        .map(|j| {
            -(0..c)
                .filter(|&k| noisy[k] > LOG_EPS)
                .map(|k| y.as_slice()[k] * t.get(j, k) / noisy[k])
                .sum::<f64>()
        })
        .collect();
    let mean: f64 = dl_df.iter().zip(fs).map(|(u, p)| u * p).sum();
    let grad = fs.iter().zip(&dl_df).map(|(p, u)| p * (u - mean)).collect();
    Ok(LossGrad { loss, grad })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::uniform_transition;
    use crate::numerics::softmax_slice;

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn reflect_target_endpoints_and_example() {
        let y = ProbVector::one_hot(3, 0).unwrap();
        let z = pv(&[0.5, 0.3, 0.2]);
        assert_eq!(reflect_target(&y, &z, 1.0).unwrap().target, y);
        assert_eq!(reflect_target(&y, &z, 0.0).unwrap().target, z);
        let got = reflect_target(&y, &z, 0.1).unwrap();
        assert_eq!(got.provenance, Provenance::Reflected);
        for (g, w) in got.target.as_slice().iter().zip([0.55, 0.27, 0.18]) {
            assert!((g - w).abs() < 1e-15);
        }
        assert!(matches!(reflect_target(&y, &z, 1.2), Err(Error::Config(_))));
        assert!(reflect_target(&y, &z, -0.1).is_err());
    }

    #[test]
    fn ce_grad_basics() {
        let f = pv(&[0.2, 0.5, 0.3]);
        assert_eq!(ce_grad(&f, &f).unwrap(), vec![0.0; 3]);
        let g = ce_grad(&ProbVector::one_hot(3, 2).unwrap(), &f).unwrap();
        assert!(g.iter().sum::<f64>().abs() < 1e-15);
        assert!(matches!(
            ce_grad(&ProbVector::uniform(2).unwrap(), &f),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn reflection_grad_reductions() {
        let y = ProbVector::one_hot(3, 1).unwrap();
        let f = pv(&[0.2, 0.5, 0.3]);
        assert_eq!(reflection_grad(&y, &f, &f, 0.0).unwrap(), vec![0.0; 3]);
        let prev = pv(&[0.6, 0.1, 0.3]);
        assert_eq!(
            reflection_grad(&y, &prev, &f, 1.0).unwrap(),
            ce_grad(&y, &f).unwrap()
        );
    }

    #[test]
    fn reflection_grad_is_ce_grad_against_reflected_target() {
        let y = ProbVector::one_hot(3, 1).unwrap();
        let prev = pv(&[0.6, 0.1, 0.3]);
        let f = pv(&[0.2, 0.5, 0.3]);
        let target = reflect_target(&y, &prev, 0.3).unwrap().target;
        let a = reflection_grad(&y, &prev, &f, 0.3).unwrap();
        let b = ce_grad(&target, &f).unwrap();
        for (x, z) in a.iter().zip(&b) {
            assert!((x - z).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_grad_vanishes_at_uniform() {
        let g = bootstrap_soft_grad(&ProbVector::uniform(5).unwrap());
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn hard_grad_examples() {
        assert_eq!(
            bootstrap_hard_grad(&ProbVector::one_hot(3, 1).unwrap()),
            vec![0.0; 3]
        );
        assert_eq!(
            bootstrap_hard_grad(&pv(&[0.5, 0.3, 0.2])),
            vec![-0.5, 0.3, 0.2]
        );
        assert!(
            bootstrap_hard_grad(&pv(&[0.1, 0.6, 0.3]))
                .iter()
                .sum::<f64>()
                .abs()
                < 1e-15
        );
        // Ties resolve to the lowest index.
        assert_eq!(
            bootstrap_hard_grad(&pv(&[0.4, 0.4, 0.2])),
            vec![-0.6, 0.4, 0.2]
        );
    }

    #[test]
    fn bootstrap_terms_push_the_top_class_up() {
        // A descent step moves h along -grad, so the top class has the
        // smallest gradient entry.
        let f = pv(&[0.5, 0.3, 0.2]);
        for g in [bootstrap_soft_grad(&f), bootstrap_hard_grad(&f)] {
            assert!(g.iter().all(|v| g[0] <= *v));
        }
    }

    #[test]
    fn bootstrap_losses_at_beta_one_are_ce() {
        let y = ProbVector::one_hot(3, 2).unwrap();
        let f = pv(&[0.2, 0.5, 0.3]);
        let ce = cross_entropy_loss(&y, &f).unwrap();
        assert_eq!(bootstrap_soft_loss(&y, &f, 1.0).unwrap(), ce);
        assert_eq!(bootstrap_hard_loss(&y, &f, 1.0).unwrap(), ce);
    }

    #[test]
    fn gce_endpoints() {
        let f = ProbVector::one_hot(4, 2).unwrap();
        for q in [0.1, 0.7, 1.0] {
            assert_eq!(gce_loss(&f, 2, q).unwrap().loss, 0.0);
        }
        let f = pv(&[0.2, 0.5, 0.3]);
        assert!((gce_loss(&f, 1, 1.0).unwrap().loss - 0.5).abs() < 1e-15);
        assert!(matches!(gce_loss(&f, 1, 0.0), Err(Error::Config(_))));
        assert!(gce_loss(&f, 1, 1.5).is_err());
        assert!(gce_loss(&f, 3, 0.5).is_err());
    }

    #[test]
    fn gce_approaches_ce_as_q_vanishes() {
        let f = pv(&[0.2, 0.5, 0.3]);
        let ce = -(0.5f64.ln());
        assert!((gce_loss(&f, 1, 1e-7).unwrap().loss - ce).abs() < 1e-6);
    }

    #[test]
    fn forward_with_identity_is_ce() {
        let f = softmax_slice(&[0.3, -1.0, 2.0, 0.1]).unwrap();
        let y = ProbVector::one_hot(4, 1).unwrap();
        let t = TransitionMatrix::identity(4).unwrap();
        let fw = forward_loss(&f, &y, &t).unwrap();
        let ce = cross_entropy_loss(&y, &f).unwrap();
        assert!((fw.loss - ce.loss).abs() < 1e-14);
        for (a, b) in fw.grad.iter().zip(&ce.grad) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn forward_with_uniform_rows_is_constant() {
        // eta = (c-1)/c makes every row uniform: T^T f is uniform for any f.
        let t = uniform_transition(2.0 / 3.0, 3).unwrap();
        let y = ProbVector::one_hot(3, 0).unwrap();
        let a = forward_loss(&pv(&[0.7, 0.2, 0.1]), &y, &t).unwrap();
        let b = forward_loss(&pv(&[0.1, 0.1, 0.8]), &y, &t).unwrap();
        assert!((a.loss - b.loss).abs() < 1e-14);
        assert!((a.loss - 3f64.ln()).abs() < 1e-14);
        assert!(a.grad.iter().all(|g| g.abs() < 1e-14));
    }
}
