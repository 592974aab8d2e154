//! Particle filters under event-based sampling.
//!
//! Both filters resample at every step. The bootstrap filter proposes from
//! the transition density and weights by the switching likelihood. The
//! approximate fully adapted filter linearizes `p(x_k, y_k | x_{k-1})` per
//! particle, resamples on the resulting predictive likelihood, and proposes
//! from the (approximate) optimal proposal:
//!
//! - at an event, the Gaussian conditional of `x_k` given `y_k`;
//! - without an event, a `D`-component mixture obtained by replacing the
//!   uniform density on `H_k` with Gaussians at grid points `z_j`.
//!
//! Weights then follow the auxiliary filter rule
//! `W ∝ p(𝒴|x) p(x|x_a) / (p̂(𝒴|x_a) q(x|𝒴,x_a))`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{self, BoxSet, Gaussian};
use crate::likelihood::LikelihoodEvaluator;
use crate::model::StateSpaceModel;
use crate::rng::StepStreams;
use crate::stats;
use crate::trigger::HybridMeasurement;

/// Lower bound on the KDE bandwidth so that collapsed particle clouds still
/// define a density.
pub const KDE_MIN_BANDWIDTH: f64 = 1e-3;

/// Weighted particle approximation of `p(x_k | 𝒴_{1:k})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<DVector<f64>>,
    log_weights: Vec<f64>,
    step: usize,
    ancestors: Option<Vec<usize>>,
}

impl ParticleSet {
    /// Normalizes `log_weights`; fails if the set is empty, a particle is not
    /// finite, or every weight is zero.
    pub fn new(particles: Vec<DVector<f64>>, mut log_weights: Vec<f64>, step: usize) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::EmptyParticleSet);
        }
        if log_weights.len() != particles.len() {
            return Err(Error::DimensionMismatch { expected: particles.len(), found: log_weights.len() });
        }
        if particles.iter().any(|x| x.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("particles must be finite".into()));
        }
        stats::normalize_log_weights(&mut log_weights)
            .ok_or_else(|| Error::InvalidParameter("all particle weights are zero".into()))?;
        Ok(Self { particles, log_weights, step, ancestors: None })
    }

    pub fn uniform(particles: Vec<DVector<f64>>, step: usize) -> Result<Self> {
        let n = particles.len();
        Self::new(particles, vec![0.0; n], step)
    }

    /// `n` independent draws from the model prior, at step 0.
    pub fn from_prior<M: StateSpaceModel + ?Sized>(model: &M, n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let particles = (0..n).map(|_| model.initial().sample(rng)).collect();
        Self::uniform(particles, 0)
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[DVector<f64>] {
        &self.particles
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|w| w.exp()).collect()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// Ancestor indices drawn when this set was produced, if any.
    pub fn ancestors(&self) -> Option<&[usize]> {
        self.ancestors.as_deref()
    }

    pub fn dim(&self) -> usize {
        self.particles[0].len()
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.dim());
        for (x, lw) in self.particles.iter().zip(&self.log_weights) {
            mean += x * lw.exp();
        }
        mean
    }

    /// Effective sample size `1 / Σ W²`.
    pub fn ess(&self) -> f64 {
        1.0 / self.log_weights.iter().map(|w| (2.0 * w).exp()).sum::<f64>()
    }

    /// Per-axis weighted standard deviation.
    pub fn std(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|a| {
                stats::weighted_mean_std(
                    self.particles.iter().zip(&self.log_weights).map(move |(x, w)| (x[a], w.exp())),
                )
                .1
            })
            .collect()
    }

    /// Same particles and weights with the entries reordered by `perm`
    /// (`out[i] = self[perm[i]]`).
    pub fn permuted(&self, perm: &[usize]) -> Self {
        Self {
            particles: perm.iter().map(|&i| self.particles[i].clone()).collect(),
            log_weights: perm.iter().map(|&i| self.log_weights[i]).collect(),
            step: self.step,
            ancestors: None,
        }
    }

    fn from_step(particles: Vec<DVector<f64>>, mut log_weights: Vec<f64>, step: usize, ancestors: Vec<usize>) -> (Self, bool) {
        let degenerate = stats::normalize_log_weights(&mut log_weights).is_none();
        if degenerate {
            let uniform = -(particles.len() as f64).ln();
            log_weights.iter_mut().for_each(|w| *w = uniform);
        }
        (Self { particles, log_weights, step, ancestors: Some(ancestors) }, degenerate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Bpf,
    /// Approximate fully adapted auxiliary filter; `d` and `variance_scale`
    /// parameterize the no-event mixture (variance defaults to half-width / `d`).
    ApfFa { d: usize, variance_scale: Option<f64> },
}

impl FilterKind {
    pub fn validate(&self) -> Result<()> {
        match self {
            FilterKind::ApfFa { d: 0, .. } => Err(Error::InvalidParameter("APF mixture needs D >= 1".into())),
            FilterKind::ApfFa { variance_scale: Some(v), .. } if !(*v > 0.0) => {
                Err(Error::InvalidParameter("APF mixture variance must be positive".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            FilterKind::Bpf => "bpf",
            FilterKind::ApfFa { .. } => "apf",
        }
    }
}

/// Result of one filter update.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub set: ParticleSet,
    /// Every particle had zero likelihood; the weights were reset to uniform.
    pub degenerate: bool,
}

/// I.i.d. categorical draws from normalized `log_weights`.
pub fn resample_categorical<R: Rng + ?Sized>(log_weights: &[f64], n_out: usize, rng: &mut R) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(log_weights.len());
    let mut acc = 0.0;
    for w in log_weights {
        acc += w.exp();
        cumulative.push(acc);
    }
    let last = log_weights.len().saturating_sub(1);
    (0..n_out)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|c| *c <= u).min(last)
        })
        .collect()
}

/// Dispatches to the filter selected by `kind`.
pub fn step<M: StateSpaceModel + ?Sized>(
    kind: &FilterKind,
    ps: &ParticleSet,
    meas: &HybridMeasurement,
    model: &M,
    ev: &LikelihoodEvaluator,
    streams: &mut StepStreams,
) -> Result<StepOutcome> {
    match *kind {
        FilterKind::Bpf => step_bpf(ps, meas, model, ev, streams),
        FilterKind::ApfFa { d, variance_scale } => step_apf_fa(ps, meas, model, ev, d, variance_scale, streams),
    }
}

/// Bootstrap filter step: resample, propagate through the transition,
/// weight by `p(𝒴_k | x_k)`.
pub fn step_bpf<M: StateSpaceModel + ?Sized>(
    ps: &ParticleSet,
    meas: &HybridMeasurement,
    model: &M,
    ev: &LikelihoodEvaluator,
    streams: &mut StepStreams,
) -> Result<StepOutcome> {
    let k = ps.step + 1;
    let n = ps.len();
    let ancestors = resample_categorical(&ps.log_weights, n, &mut streams.resample);
    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &a in &ancestors {
        let x = model.sample_transition(&ps.particles[a], k, &mut streams.proposal);
        log_weights.push(ev.log_likelihood(model, meas, &x, k, &mut streams.likelihood)?);
        particles.push(x);
    }
    let (set, degenerate) = ParticleSet::from_step(particles, log_weights, k, ancestors);
    Ok(StepOutcome { set, degenerate })
}

/// Grid points and covariances of the mixture replacing `U(H_k)`.
struct NoEventMixture {
    log_alpha: Vec<f64>,
    points: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
}

impl NoEventMixture {
    fn new(h: &BoxSet, d: usize, variance_scale: Option<f64>) -> Result<Self> {
        let mixture = match variance_scale {
            Some(v) => gaussian::mixture_from_box(h, d, v)?,
            None => gaussian::mixture_from_box_default(h, d)?,
        };
        Ok(Self {
            log_alpha: mixture.weights().iter().map(|w| w.ln()).collect(),
            points: mixture.components().iter().map(|c| c.mean().clone()).collect(),
            covs: mixture.components().iter().map(|c| c.cov().clone()).collect(),
        })
    }
}

/// Per-ancestor quantities of the approximate fully adapted filter.
struct Adapted {
    log_pred: f64,
    /// Component log-probabilities (normalized) and conditionals of the proposal.
    components: Vec<(f64, Gaussian)>,
}

impl Adapted {
    fn log_proposal(&self, x: &DVector<f64>) -> Result<f64> {
        if self.components.len() == 1 {
            return self.components[0].1.log_pdf(x);
        }
        let terms = self
            .components
            .iter()
            .map(|(lp, g)| Ok(lp + g.log_pdf(x)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(stats::log_sum_exp(&terms))
    }

    fn sample(&self, rng: &mut dyn RngCore) -> DVector<f64> {
        if self.components.len() == 1 {
            return self.components[0].1.sample(rng);
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (j, (lp, _)) in self.components.iter().enumerate() {
            acc += lp.exp();
            if u < acc {
                pick = j;
                break;
            }
        }
        self.components[pick].1.sample(rng)
    }
}

fn adapt<M: StateSpaceModel + ?Sized>(
    model: &M,
    x_prev: &DVector<f64>,
    k: usize,
    meas: &HybridMeasurement,
    mixture: Option<&NoEventMixture>,
) -> Result<Adapted> {
    let joint = model.joint_gaussian_at(x_prev, k);
    match (meas, mixture) {
        (HybridMeasurement::Event(y), _) => {
            let log_pred = gaussian::log_normal_pdf(y, &joint.mean_y, &joint.cov_yy)?;
            Ok(Adapted { log_pred, components: vec![(0.0, joint.condition(y)?)] })
        }
        (HybridMeasurement::NoEvent(_), Some(mix)) => {
            let mut log_beta = Vec::with_capacity(mix.points.len());
            let mut conds = Vec::with_capacity(mix.points.len());
            for ((la, z), v) in mix.log_alpha.iter().zip(&mix.points).zip(&mix.covs) {
                let widened = joint.with_added_y_cov(v);
                log_beta.push(la + gaussian::log_normal_pdf(z, &widened.mean_y, &widened.cov_yy)?);
                conds.push(widened.condition(z)?);
            }
            let log_pred = stats::log_sum_exp(&log_beta);
            let components = log_beta.into_iter().map(|lb| lb - log_pred).zip(conds).collect();
            Ok(Adapted { log_pred, components })
        }
        (HybridMeasurement::NoEvent(_), None) => unreachable!("mixture prepared for no-event steps"),
    }
}

/// Approximate fully adapted auxiliary filter step.
pub fn step_apf_fa<M: StateSpaceModel + ?Sized>(
    ps: &ParticleSet,
    meas: &HybridMeasurement,
    model: &M,
    ev: &LikelihoodEvaluator,
    d: usize,
    variance_scale: Option<f64>,
    streams: &mut StepStreams,
) -> Result<StepOutcome> {
    let k = ps.step + 1;
    let n = ps.len();
    let mixture = match meas {
        HybridMeasurement::NoEvent(h) => Some(NoEventMixture::new(h, d, variance_scale)?),
        HybridMeasurement::Event(_) => None,
    };
    let adapted = ps
        .particles
        .iter()
        .map(|x| adapt(model, x, k, meas, mixture.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let mut aux: Vec<f64> = ps.log_weights.iter().zip(&adapted).map(|(w, a)| w + a.log_pred).collect();
    if stats::normalize_log_weights(&mut aux).is_none() {
        aux.copy_from_slice(&ps.log_weights);
    }
    let ancestors = resample_categorical(&aux, n, &mut streams.resample);

    let mut particles = Vec::with_capacity(n);
    let mut log_weights = Vec::with_capacity(n);
    for &a in &ancestors {
        let prop = &adapted[a];
        let x = prop.sample(&mut streams.proposal);
        let log_lik = ev.log_likelihood(model, meas, &x, k, &mut streams.likelihood)?;
        let lw = if log_lik == f64::NEG_INFINITY {
            f64::NEG_INFINITY
        } else {
            log_lik + model.transition_log_density(&x, &ps.particles[a], k) - prop.log_pred - prop.log_proposal(&x)?
        };
        log_weights.push(lw);
        particles.push(x);
    }
    let (set, degenerate) = ParticleSet::from_step(particles, log_weights, k, ancestors);
    Ok(StepOutcome { set, degenerate })
}

/// Bootstrap-style propagation to the next step with uniform weights: the
/// secondary particle set approximating `p(x_{k+1} | 𝒴_{1:k})`.
pub fn propagate_secondary<M: StateSpaceModel + ?Sized>(
    ps: &ParticleSet,
    model: &M,
    n_out: usize,
    rng: &mut dyn RngCore,
) -> Result<ParticleSet> {
    if n_out == 0 {
        return Err(Error::EmptyParticleSet);
    }
    let k = ps.step + 1;
    let ancestors = resample_categorical(&ps.log_weights, n_out, rng);
    let particles = ancestors.iter().map(|&a| model.sample_transition(&ps.particles[a], k, rng)).collect();
    let mut set = ParticleSet::uniform(particles, k)?;
    set.ancestors = Some(ancestors);
    Ok(set)
}

/// Per-axis Silverman bandwidth `1.06 σ̂_w N^{-1/5}`, floored at
/// [`KDE_MIN_BANDWIDTH`].
pub fn kde_bandwidth(ps: &ParticleSet) -> Vec<f64> {
    let factor = 1.06 * (ps.len() as f64).powf(-0.2);
    ps.std().into_iter().map(|s| (factor * s).max(KDE_MIN_BANDWIDTH)).collect()
}

/// `log Σ Wⁱ N(x | Xⁱ, diag(h²))`, the kernel density estimate of the posterior.
pub fn posterior_log_density(ps: &ParticleSet, x: &DVector<f64>) -> f64 {
    let bw = kde_bandwidth(ps);
    let terms: Vec<f64> = ps
        .particles
        .iter()
        .zip(&ps.log_weights)
        .map(|(p, lw)| {
            lw + (0..x.len())
                .map(|a| stats::normal_log_pdf(x[a], p[a], bw[a] * bw[a]))
                .sum::<f64>()
        })
        .collect();
    stats::log_sum_exp(&terms)
}

/// Which steps enter the cross-entropy average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mask {
    All,
    Events,
    NoEvents,
}

/// `−mean(log p̂(x_k | 𝒴_{1:k}))` over the steps selected by `mask`.
pub fn cross_entropy(log_densities: &[f64], gammas: &[u8], mask: Mask) -> Result<f64> {
    if log_densities.len() != gammas.len() {
        return Err(Error::DimensionMismatch { expected: log_densities.len(), found: gammas.len() });
    }
    let selected: Vec<f64> = log_densities
        .iter()
        .zip(gammas)
        .filter(|(_, g)| match mask {
            Mask::All => true,
            Mask::Events => **g == 1,
            Mask::NoEvents => **g == 0,
        })
        .map(|(l, _)| *l)
        .collect();
    if selected.is_empty() {
        return Err(Error::EmptyMask);
    }
    Ok(-selected.iter().sum::<f64>() / selected.len() as f64)
}
