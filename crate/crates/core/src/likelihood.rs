//! Evaluators of the switching likelihood `p(𝒴_k | x_k)`.
//!
//! At an event this is the ordinary measurement density. Without an event it
//! is the probability `∫_{H_k} p(y | x) dy` that the measurement stayed inside
//! the trigger set, which can be computed exactly for diagonal noise,
//! approximated with a Gaussian mixture over `H_k`, or estimated by drawing
//! `M` proposal measurements per particle (`M = 1` is accept/reject).

use nalgebra::DVector;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, BoxSet};
use crate::model::StateSpaceModel;
use crate::stats;
use crate::trigger::HybridMeasurement;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikelihoodKind {
    /// Closed-form box integral; diagonal measurement noise only.
    Analytic,
    /// Uniform density on `H_k` replaced by `d^m` Gaussians. `variance_scale`
    /// defaults to half-width / `d` per axis.
    Mixture { d: usize, variance_scale: Option<f64> },
    /// Fraction of `m` simulated measurements that land in `H_k`.
    MonteCarlo { m: usize },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEvaluator {
    kind: LikelihoodKind,
}

impl LikelihoodEvaluator {
    pub fn new(kind: LikelihoodKind) -> Result<Self> {
        match kind {
            LikelihoodKind::Mixture { d: 0, .. } => {
                return Err(Error::InvalidParameter("mixture evaluator needs D >= 1".into()))
            }
            LikelihoodKind::Mixture { variance_scale: Some(v), .. } if !(v > 0.0) => {
                return Err(Error::InvalidParameter("mixture variance must be positive".into()))
            }
            LikelihoodKind::MonteCarlo { m: 0 } => {
                return Err(Error::InvalidParameter("Monte Carlo evaluator needs M >= 1".into()))
            }
            _ => {}
        }
        Ok(Self { kind })
    }

    pub fn analytic() -> Self {
        Self { kind: LikelihoodKind::Analytic }
    }

    pub fn monte_carlo(m: usize) -> Result<Self> {
        Self::new(LikelihoodKind::MonteCarlo { m })
    }

    pub fn kind(&self) -> LikelihoodKind {
        self.kind
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, LikelihoodKind::MonteCarlo { .. })
    }

    /// `log p(𝒴_k | x)`; may be `-∞` (a rejected particle).
    pub fn log_likelihood<M: StateSpaceModel + ?Sized>(
        &self,
        model: &M,
        meas: &HybridMeasurement,
        x: &DVector<f64>,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        match meas {
            HybridMeasurement::Event(y) => Ok(model.measurement_log_density(y, x, k)),
            HybridMeasurement::NoEvent(h) => Ok(self.log_probabilities(model, h, x, k, rng)?.0),
        }
    }

    /// `log(1 − p(y ∈ h | x))`, the per-particle probability of triggering.
    pub fn log_complement<M: StateSpaceModel + ?Sized>(
        &self,
        model: &M,
        h: &BoxSet,
        x: &DVector<f64>,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<f64> {
        Ok(self.log_probabilities(model, h, x, k, rng)?.1)
    }

    /// `(log P(y ∈ h | x), log P(y ∉ h | x))` from a single evaluation.
    pub fn log_probabilities<M: StateSpaceModel + ?Sized>(
        &self,
        model: &M,
        h: &BoxSet,
        x: &DVector<f64>,
        k: usize,
        rng: &mut dyn RngCore,
    ) -> Result<(f64, f64)> {
        if h.dim() != model.meas_dim() {
            return Err(Error::DimensionMismatch { expected: model.meas_dim(), found: h.dim() });
        }
        let noise = model.measurement_noise(k);
        match self.kind {
            LikelihoodKind::Analytic => {
                if !noise.is_diagonal() {
                    return Err(Error::NonDiagonalCovariance);
                }
                let mean = model.measurement_mean(x, k);
                let var = noise.cov().diagonal();
                Ok(gaussian::diagonal_log_box_probabilities(mean.as_slice(), var.as_slice(), h))
            }
            LikelihoodKind::Mixture { d, variance_scale } => {
                let mixture = match variance_scale {
                    Some(v) => gaussian::mixture_from_box(h, d, v)?,
                    None => gaussian::mixture_from_box_default(h, d)?,
                };
                let volume: f64 = h.lower().iter().zip(h.upper()).map(|(l, u)| u - l).product();
                if volume == 0.0 {
                    return Ok((f64::NEG_INFINITY, 0.0));
                }
                let mean = model.measurement_mean(x, k);
                let terms = mixture
                    .weights()
                    .iter()
                    .zip(mixture.components())
                    .map(|(w, c)| Ok(w.ln() + gaussian::log_normal_pdf(c.mean(), &mean, &(c.cov() + noise.cov()))?))
                    .collect::<Result<Vec<_>>>()?;
                let inside = (volume.ln() + stats::log_sum_exp(&terms)).min(0.0);
                Ok((inside, stats::log1m_exp(inside)))
            }
            LikelihoodKind::MonteCarlo { m } => {
                let count = (0..m)
                    .filter(|_| h.contains(model.sample_measurement(x, k, rng).as_slice()))
                    .count();
                let total = m as f64;
                Ok(((count as f64 / total).ln(), ((m - count) as f64 / total).ln()))
            }
        }
    }
}
