//! Hypervolume scalarization of a loss vector.
//!
//! Each loss `l_k` is paired with an upper bound `mu_k`. The box between the
//! loss vector and the bounds is the hypervolume the single point `l`
//! dominates with reference `mu`; the training objective is its negative
//! logarithm,
//!
//! ```text
//! L      = -sum_k log(mu_k - l_k)
//! L_norm = -sum_k log(1 - l_k / mu_k)  =  L + sum_k log(mu_k)
//! ```
//!
//! Both have the same derivative with respect to the losses,
//! `dL/dl_k = 1 / (mu_k - l_k)`, so the generator receives a weighted sum of
//! per-loss gradients whose weights grow as a loss approaches its bound.
//!
//! A loss at or above its bound would make the log argument non-positive.
//! The argument is floored at `eps` instead, and the event is reported by
//! [`clamp_flags`] so callers can surface mis-set bounds.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-6;

/// Bound on the adversarial loss for the relativistic variant.
pub const MU_GAN_RELATIVISTIC: f64 = 20.0;
/// Bound on the adversarial loss for the standard variant.
pub const MU_GAN_STANDARD: f64 = 200.0;
pub const MU_PIXEL: f64 = 0.1;
pub const MU_FEATURE: f64 = 10.0;

/// Strictly positive per-loss upper bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct UpperBounds(Vec<f64>);

impl UpperBounds {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some((k, &m)) = mu.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::invalid(format!(
                "upper bound {k} must be positive and finite, got {m}"
            )));
        }
        Ok(Self(mu))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Finite loss values, one per bound.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(l: Vec<f64>) -> Result<Self> {
        if let Some(index) = l.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: l[index],
            });
        }
        Ok(Self(l))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScalarizationMode {
    HypervolLog,
    HypervolLogNormalized,
    /// Fixed nonnegative weights, the conventional weighted-sum baseline.
    LinearFixed(Vec<f64>),
}

impl ScalarizationMode {
    pub fn name(&self) -> &'static str {
        match self {
            ScalarizationMode::HypervolLog => "hypervol_log",
            ScalarizationMode::HypervolLogNormalized => "hypervol_log_normalized",
            ScalarizationMode::LinearFixed(_) => "linear_fixed",
        }
    }

    pub fn is_hypervolume(&self) -> bool {
        !matches!(self, ScalarizationMode::LinearFixed(_))
    }
}

fn check(l: &LossVector, mu: &UpperBounds, eps: f64) -> Result<()> {
    if l.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: l.len(),
        });
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("clamp floor eps must be positive, got {eps}")));
    }
    Ok(())
}

/// `-sum_k log(max(mu_k - l_k, eps))`.
pub fn hv_log_loss(l: &LossVector, mu: &UpperBounds, eps: f64) -> Result<f64> {
    check(l, mu, eps)?;
    Ok(-l
        .0
        .iter()
        .zip(&mu.0)
        .map(|(l, m)| (m - l).max(eps).ln())
        .sum::<f64>())
}

/// `-sum_k log(max(1 - l_k / mu_k, eps))`.
pub fn hv_log_loss_normalized(l: &LossVector, mu: &UpperBounds, eps: f64) -> Result<f64> {
    check(l, mu, eps)?;
    Ok(-l
        .0
        .iter()
        .zip(&mu.0)
        .map(|(l, m)| (1.0 - l / m).max(eps).ln())
        .sum::<f64>())
}

/// `w_k = 1 / max(mu_k - l_k, eps)`, the derivative of either hypervolume
/// objective with respect to `l_k`.
pub fn gradient_weights(l: &LossVector, mu: &UpperBounds, eps: f64) -> Result<Vec<f64>> {
    check(l, mu, eps)?;
    Ok(l.0
        .iter()
        .zip(&mu.0)
        .map(|(l, m)| 1.0 / (m - l).max(eps))
        .collect())
}

/// `sum_k w_k l_k`.
pub fn linear_fixed(l: &LossVector, weights: &[f64]) -> Result<f64> {
    if l.len() != weights.len() {
        return Err(Error::DimensionMismatch {
            expected: weights.len(),
            found: l.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(format!("fixed weights must be nonnegative, got {w}")));
    }
    Ok(l.0.iter().zip(weights).map(|(l, w)| w * l).sum())
}

pub fn scalarize(l: &LossVector, mode: &ScalarizationMode, mu: &UpperBounds, eps: f64) -> Result<f64> {
    match mode {
        ScalarizationMode::HypervolLog => hv_log_loss(l, mu, eps),
        ScalarizationMode::HypervolLogNormalized => hv_log_loss_normalized(l, mu, eps),
        ScalarizationMode::LinearFixed(w) => linear_fixed(l, w),
    }
}

/// Per-loss weights the generator gradient is built from: the hypervolume
/// gradient weights, or the fixed weights of the baseline.
pub fn mode_weights(l: &LossVector, mode: &ScalarizationMode, mu: &UpperBounds, eps: f64) -> Result<Vec<f64>> {
    match mode {
        ScalarizationMode::LinearFixed(w) => {
            linear_fixed(l, w)?;
            Ok(w.clone())
        }
        _ => gradient_weights(l, mu, eps),
    }
}

/// Which log arguments of the mode's objective were floored at `eps`.
/// Always all-false for the linear baseline.
pub fn clamp_flags(l: &LossVector, mode: &ScalarizationMode, mu: &UpperBounds, eps: f64) -> Result<Vec<bool>> {
    let pairs = l.0.iter().zip(&mu.0);
    match mode {
        ScalarizationMode::HypervolLog => {
            check(l, mu, eps)?;
            Ok(pairs.map(|(l, m)| m - l < eps).collect())
        }
        ScalarizationMode::HypervolLogNormalized => {
            check(l, mu, eps)?;
            Ok(pairs.map(|(l, m)| 1.0 - l / m < eps).collect())
        }
        ScalarizationMode::LinearFixed(w) => Ok(vec![false; w.len()]),
    }
}

/// Records the unclamped hypervolume objective on a tape, so its gradient
/// can be obtained by reverse-mode differentiation. Every loss must be
/// strictly below its bound.
pub fn hv_log_objective_on_tape(
    tape: &mut Tape,
    losses: &[Var],
    mu: &UpperBounds,
    normalized: bool,
) -> Result<Var> {
    if losses.len() != mu.len() {
        return Err(Error::DimensionMismatch {
            expected: mu.len(),
            found: losses.len(),
        });
    }
    let mut total: Option<Var> = None;
    for (&l, &m) in losses.iter().zip(&mu.0) {
        let gap = if normalized {
            let ratio = tape.scalar_mul(l, -1.0 / m)?;
            tape.add_scalar(ratio, 1.0)?
        } else {
            let neg = tape.neg(l)?;
            tape.add_scalar(neg, m)?
        };
        let term = tape.log(gap)?;
        total = Some(match total {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });
    }
    let total = total.ok_or_else(|| Error::invalid("no losses to scalarize"))?;
    tape.neg(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::moo::{hypervolume_exact, PointSet, ReferencePoint, Orientation};
    use proptest::prelude::*;
    use std::f64::consts::{E, LN_2};

    fn lv(v: &[f64]) -> LossVector {
        LossVector::new(v.to_vec()).unwrap()
    }

    fn mu(v: &[f64]) -> UpperBounds {
        UpperBounds::new(v.to_vec()).unwrap()
    }

    #[test]
    fn hv_log_examples() {
        assert_eq!(hv_log_loss(&lv(&[0.0, 0.0]), &mu(&[1.0, 1.0]), DEFAULT_EPS).unwrap(), 0.0);
        let v = hv_log_loss(&lv(&[1.0, 1.0]), &mu(&[1.0 + E, 1.0 + E]), DEFAULT_EPS).unwrap();
        assert!((v + 2.0).abs() < 1e-15);
        let v = hv_log_loss(&lv(&[0.5]), &mu(&[1.0]), DEFAULT_EPS).unwrap();
        assert!((v - LN_2).abs() < 1e-15);
    }

    #[test]
    fn normalized_examples() {
        let v = hv_log_loss_normalized(&lv(&[0.0, 0.0]), &mu(&[7.0, 13.0]), DEFAULT_EPS).unwrap();
        assert_eq!(v, 0.0);
        let v = hv_log_loss_normalized(&lv(&[0.5]), &mu(&[1.0]), DEFAULT_EPS).unwrap();
        assert!((v - LN_2).abs() < 1e-15);

        let (l, m) = (lv(&[1.0, 1.0]), mu(&[2.0, 4.0]));
        let v = hv_log_loss_normalized(&l, &m, DEFAULT_EPS).unwrap();
        // -(log 0.5 + log 0.75)
        let direct = -(0.5f64.ln() + 0.75f64.ln());
        assert!((v - direct).abs() < 1e-15);
        assert!((v - 0.980829).abs() < 1e-6);
        // L = -(log 1 + log 3); L_norm = L + log 2 + log 4
        let unnorm = hv_log_loss(&l, &m, DEFAULT_EPS).unwrap();
        assert!((unnorm + 3.0f64.ln()).abs() < 1e-15);
        assert!((v - (unnorm + 2.0f64.ln() + 4.0f64.ln())).abs() < 1e-15);
    }

    #[test]
    fn weight_examples() {
        let w = gradient_weights(&lv(&[1.0, 0.0]), &mu(&[2.0, 2.0]), DEFAULT_EPS).unwrap();
        assert_eq!(w, vec![1.0, 0.5]);
        let w = gradient_weights(&lv(&[3.0]), &mu(&[3.0]), 1e-6).unwrap();
        assert!((w[0] - 1e6).abs() < 1e-6);
    }

    #[test]
    fn linear_and_dispatch_examples() {
        assert_eq!(linear_fixed(&lv(&[1.0, 2.0]), &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(linear_fixed(&lv(&[1.0, 2.0]), &[1.0, 1.0]).unwrap(), 3.0);
        assert_eq!(linear_fixed(&lv(&[3.0]), &[0.5]).unwrap(), 1.5);
        assert!(linear_fixed(&lv(&[3.0]), &[0.5, 1.0]).is_err());
        assert!(linear_fixed(&lv(&[3.0]), &[-0.5]).is_err());

        let m = mu(&[1.0, 1.0]);
        let s = scalarize(&lv(&[0.0, 0.0]), &ScalarizationMode::HypervolLog, &m, DEFAULT_EPS).unwrap();
        assert_eq!(s, 0.0);
        let s = scalarize(
            &lv(&[1.0, 2.0]),
            &ScalarizationMode::LinearFixed(vec![1.0, 1.0]),
            &m,
            DEFAULT_EPS,
        )
        .unwrap();
        assert_eq!(s, 3.0);
        let s = scalarize(
            &lv(&[0.5]),
            &ScalarizationMode::HypervolLogNormalized,
            &mu(&[1.0]),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!((s - LN_2).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(UpperBounds::new(vec![1.0, 0.0]).is_err());
        assert!(UpperBounds::new(vec![f64::INFINITY]).is_err());
        assert!(LossVector::new(vec![f64::NAN]).is_err());
        assert!(matches!(
            hv_log_loss(&lv(&[1.0]), &mu(&[1.0, 2.0]), DEFAULT_EPS),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(hv_log_loss(&lv(&[1.0]), &mu(&[2.0]), 0.0).is_err());
    }

    #[test]
    fn clamping_keeps_objective_finite_and_flags_it() {
        let (l, m) = (lv(&[5.0, 0.05]), mu(&[2.0, 0.1]));
        let v = hv_log_loss(&l, &m, DEFAULT_EPS).unwrap();
        assert!(v.is_finite());
        let flags = clamp_flags(&l, &ScalarizationMode::HypervolLog, &m, DEFAULT_EPS).unwrap();
        assert_eq!(flags, vec![true, false]);
        let flags = clamp_flags(&l, &ScalarizationMode::LinearFixed(vec![1.0, 1.0]), &m, DEFAULT_EPS).unwrap();
        assert_eq!(flags, vec![false, false]);
    }

    #[test]
    fn objective_on_tape_matches_closed_form() {
        let (l, m) = ([0.3, 2.0, 5.0], mu(&[1.0, 20.0, 10.0]));
        for normalized in [false, true] {
            let mut tape = Tape::new();
            let vars: Vec<Var> = l.iter().map(|&v| tape.var(Tensor::scalar(v))).collect();
            let root = hv_log_objective_on_tape(&mut tape, &vars, &m, normalized).unwrap();
            let value = tape.value(root).item();
            let grads = tape.backward(root).unwrap();
            let expected = if normalized {
                hv_log_loss_normalized(&lv(&l), &m, DEFAULT_EPS).unwrap()
            } else {
                hv_log_loss(&lv(&l), &m, DEFAULT_EPS).unwrap()
            };
            assert!((value - expected).abs() < 1e-12);
            let w = gradient_weights(&lv(&l), &m, DEFAULT_EPS).unwrap();
            for (v, wk) in vars.iter().zip(&w) {
                assert!((grads.get(*v).item() - wk).abs() < 1e-10 * wk.max(1.0));
            }
        }
    }

    /// Unclamped (l, mu) pairs with every gap well above eps.
    fn unclamped(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.01f64..50.0, 0.01f64..0.99), n).prop_map(|pairs| {
            let mu: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let l: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
            (l, mu)
        })
    }

    /// Gaps of at least 0.01 keep the O(h^2) truncation error of central
    /// differences below the 1e-6 relative budget.
    fn well_inside(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        prop::collection::vec((0.1f64..50.0, 0.0f64..0.9), n).prop_map(|pairs| {
            let mu: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let l: Vec<f64> = pairs.iter().map(|p| p.0 * p.1).collect();
            (l, mu)
        })
    }

    proptest! {
        #[test]
        fn single_point_hypervolume_identity((l, m) in unclamped(3)) {
            let v = hv_log_loss(&lv(&l), &mu(&m), DEFAULT_EPS).unwrap();
            let s = PointSet::from_rows(vec![l.clone()], Orientation::Minimize).unwrap();
            let hv = hypervolume_exact(&s, &ReferencePoint::new(m.clone()).unwrap()).unwrap();
            prop_assert!(((-v).exp() - hv).abs() <= 1e-12 * hv);
        }

        #[test]
        fn constant_offset_identity((l, m) in unclamped(3)) {
            let (l, m) = (lv(&l), mu(&m));
            let diff = hv_log_loss_normalized(&l, &m, DEFAULT_EPS).unwrap()
                - hv_log_loss(&l, &m, DEFAULT_EPS).unwrap();
            let offset: f64 = m.values().iter().map(|v| v.ln()).sum();
            prop_assert!((diff - offset).abs() <= 1e-12 * offset.abs().max(1.0));
        }

        #[test]
        fn finite_difference_gradients_agree((l, m) in well_inside(3)) {
            let m = mu(&m);
            let w = gradient_weights(&lv(&l), &m, DEFAULT_EPS).unwrap();
            let h = 1e-6;
            for k in 0..l.len() {
                let bump = |d: f64| { let mut v = l.clone(); v[k] += d; lv(&v) };
                let fd = (hv_log_loss(&bump(h), &m, DEFAULT_EPS).unwrap()
                    - hv_log_loss(&bump(-h), &m, DEFAULT_EPS).unwrap()) / (2.0 * h);
                let fd_norm = (hv_log_loss_normalized(&bump(h), &m, DEFAULT_EPS).unwrap()
                    - hv_log_loss_normalized(&bump(-h), &m, DEFAULT_EPS).unwrap()) / (2.0 * h);
                prop_assert!((fd - w[k]).abs() <= 1e-6 * w[k]);
                prop_assert!((fd_norm - w[k]).abs() <= 1e-6 * w[k]);
                prop_assert!((fd - fd_norm).abs() <= 1e-6 * w[k]);
                prop_assert!(fd > 0.0, "objective must increase with every loss");
            }
        }

        #[test]
        fn larger_loss_gets_larger_weight(m in 0.1f64..100.0, a in 0.0f64..0.99, b in 0.0f64..0.99) {
            prop_assume!(a != b);
            let (hi, lo) = (a.max(b) * m, a.min(b) * m);
            let w = gradient_weights(&lv(&[hi, lo]), &mu(&[m, m]), DEFAULT_EPS).unwrap();
            prop_assert!(w[0] > w[1]);
        }
    }
}
