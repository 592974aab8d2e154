//! Trigger rules and the hybrid measurement.
//!
//! Both rules produce the no-trigger set
//! `H_k = {y : ‖F (center − y)‖_∞ ≤ Δ}`. Send-on-delta centers it on the last
//! transmitted measurement, the innovation-based trigger on the observer's
//! one-step measurement prediction `ŷ_k`.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::ParticleSet;
use crate::gaussian::BoxSet;
use crate::model::StateSpaceModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TriggerKind {
    Sod,
    Ibt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TriggerRule {
    kind: TriggerKind,
    delta: f64,
    weights: Vec<f64>,
}

impl TriggerRule {
    /// `weights` holds the diagonal of `F`.
    pub fn new(kind: TriggerKind, delta: f64, weights: Vec<f64>) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!("trigger delta must be positive, got {delta}")));
        }
        if weights.is_empty() || weights.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::InvalidParameter("trigger weights must be positive".into()));
        }
        Ok(Self { kind, delta, weights })
    }

    /// Rule with `F = I` in `m` dimensions.
    pub fn identity(kind: TriggerKind, delta: f64, m: usize) -> Result<Self> {
        Self::new(kind, delta, vec![1.0; m])
    }

    pub fn kind(&self) -> TriggerKind {
        self.kind
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `[center_i − Δ/F_ii, center_i + Δ/F_ii]` per axis.
    pub fn build_set(&self, center: &[f64]) -> Result<BoxSet> {
        if center.len() != self.weights.len() {
            return Err(Error::DimensionMismatch { expected: self.weights.len(), found: center.len() });
        }
        let half: Vec<f64> = self.weights.iter().map(|f| self.delta / f).collect();
        BoxSet::new(
            center.iter().zip(&half).map(|(c, h)| c - h).collect(),
            center.iter().zip(&half).map(|(c, h)| c + h).collect(),
        )
    }

    /// Transmit iff `y` lies strictly outside `h`.
    pub fn decide(&self, y: &DVector<f64>, h: &BoxSet) -> HybridMeasurement {
        if h.contains(y.as_slice()) {
            HybridMeasurement::NoEvent(h.clone())
        } else {
            HybridMeasurement::Event(y.clone())
        }
    }
}

/// What the observer learns at one step: the value itself, or that it fell
/// inside the trigger set.
#[derive(Debug, Clone, PartialEq)]
pub enum HybridMeasurement {
    Event(DVector<f64>),
    NoEvent(BoxSet),
}

impl HybridMeasurement {
    pub fn gamma(&self) -> u8 {
        match self {
            HybridMeasurement::Event(_) => 1,
            HybridMeasurement::NoEvent(_) => 0,
        }
    }

    pub fn is_event(&self) -> bool {
        matches!(self, HybridMeasurement::Event(_))
    }
}

/// `ŷ_k = Σ W̄ⁱ h_k(X̄ⁱ)` over a set of particles drawn from `p(x_k | 𝒴_{1:k-1})`.
pub fn ibt_center<M: StateSpaceModel + ?Sized>(propagated: &ParticleSet, model: &M, k: usize) -> Result<DVector<f64>> {
    if propagated.is_empty() {
        return Err(Error::EmptyParticleSet);
    }
    let mut center = DVector::zeros(model.meas_dim());
    for (x, lw) in propagated.particles().iter().zip(propagated.log_weights()) {
        center += model.measurement_mean(x, k) * lw.exp();
    }
    Ok(center)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BenchmarkSystem;

    #[test]
    fn build_set_examples() {
        let rule = TriggerRule::identity(TriggerKind::Ibt, 2.5, 1).unwrap();
        assert_eq!(rule.build_set(&[0.0]).unwrap(), BoxSet::interval(-2.5, 2.5).unwrap());

        let rule = TriggerRule::new(TriggerKind::Ibt, 1.0, vec![1.0, 2.0]).unwrap();
        let h = rule.build_set(&[1.0, -1.0]).unwrap();
        assert_eq!(h.lower(), &[0.0, -1.5]);
        assert_eq!(h.upper(), &[2.0, -0.5]);

        let rule = TriggerRule::new(TriggerKind::Sod, 0.5, vec![1e12]).unwrap();
        let h = rule.build_set(&[0.0]).unwrap();
        assert!(h.upper()[0] - h.lower()[0] <= 1e-12);
        assert!(h.contains(&[0.0]));
    }

    #[test]
    fn rejects_invalid_rules() {
        assert!(TriggerRule::identity(TriggerKind::Ibt, 0.0, 1).is_err());
        assert!(TriggerRule::identity(TriggerKind::Ibt, -1.0, 1).is_err());
        assert!(TriggerRule::new(TriggerKind::Ibt, 1.0, vec![0.0]).is_err());
        let rule = TriggerRule::identity(TriggerKind::Ibt, 1.0, 2).unwrap();
        assert!(rule.build_set(&[0.0]).is_err());
    }

    #[test]
    fn decide_boundary_and_outside() {
        let rule = TriggerRule::identity(TriggerKind::Ibt, 1.0, 1).unwrap();
        let h = rule.build_set(&[0.0]).unwrap();
        let y = |v: f64| DVector::from_element(1, v);
        assert_eq!(rule.decide(&y(1.0), &h).gamma(), 0);
        assert_eq!(rule.decide(&y(-1.0), &h).gamma(), 0);
        assert_eq!(rule.decide(&y(0.0), &h).gamma(), 0);
        assert_eq!(rule.decide(&y(1.0 + 1e-9), &h), HybridMeasurement::Event(y(1.0 + 1e-9)));
    }

    #[test]
    fn ibt_center_examples() {
        let model = BenchmarkSystem::new();
        let single = ParticleSet::uniform(vec![DVector::from_element(1, 3.0)], 1).unwrap();
        let c = ibt_center(&single, &model, 1).unwrap();
        assert_eq!(c[0], 9.0 / 20.0);

        let pair = ParticleSet::uniform(vec![DVector::from_element(1, -2.0), DVector::from_element(1, 2.0)], 1).unwrap();
        let c = ibt_center(&pair, &model, 1).unwrap();
        assert!((c[0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ibt_center_rejects_empty_set() {
        let empty = ParticleSet::uniform(vec![], 1);
        assert!(empty.is_err() || ibt_center(&empty.unwrap(), &BenchmarkSystem::new(), 1).is_err());
    }
}
