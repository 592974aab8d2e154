//! How many trigger bounds to precompute at an event.
//!
//! After an event at step `k` the observer predicts, one step at a time, the
//! probability `p_i` that the sensor would trigger at `k+i` given no trigger
//! before. The first-trigger distribution is
//! `p_T(n) = p_n Π_{i<n} (1 − p_i)`. With `n̂` bounds sent, the sensor stops
//! at `n = min(first trigger, n̂)`, and the expected radio-off time in units
//! of the sample time is
//!
//! `T_c(n̂) = E[max(n − c n̂, 0)]`,
//!
//! where `c ∈ (0, 1)` is the per-bound compute and transmit cost relative to
//! the sample period. The heuristic picks the first `n̂` at which the forward
//! difference of `T_c` turns negative.

use rand::RngCore;

use crate::error::{Error, Result};
use crate::filter::ParticleSet;
use crate::gaussian::BoxSet;
use crate::likelihood::LikelihoodEvaluator;
use crate::model::StateSpaceModel;

/// Per-step probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before
/// entering the running product.
pub const PROB_CLAMP: f64 = 1e-9;

/// Slack used when comparing cumulative mass against a quantile level.
pub const QUANTILE_SLACK: f64 = 1e-12;

/// Running per-step trigger probabilities and the derived first-trigger pmf.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriggerProbabilities {
    per_step: Vec<f64>,
    first_trigger: Vec<f64>,
    no_trigger_product: f64,
}

impl TriggerProbabilities {
    pub fn new() -> Self {
        Self { per_step: Vec::new(), first_trigger: Vec::new(), no_trigger_product: 1.0 }
    }

    pub fn from_per_step(per_step: &[f64]) -> Result<Self> {
        let mut out = Self::new();
        for p in per_step {
            out.push(*p)?;
        }
        Ok(out)
    }

    /// Appends `p(γ_{k+i} = 1)` for the next step.
    pub fn push(&mut self, p: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter(format!("probability {p} outside [0, 1]")));
        }
        self.per_step.push(p);
        self.first_trigger.push(p * self.no_trigger_product);
        self.no_trigger_product *= 1.0 - p;
        Ok(())
    }

    pub fn per_step(&self) -> &[f64] {
        &self.per_step
    }

    pub fn first_trigger(&self) -> &[f64] {
        &self.first_trigger
    }

    /// Probability that no trigger occurred in the steps seen so far.
    pub fn no_trigger_product(&self) -> f64 {
        self.no_trigger_product
    }

    pub fn len(&self) -> usize {
        self.per_step.len()
    }

    pub fn is_empty(&self) -> bool {
        self.per_step.is_empty()
    }
}

/// Relative cost `c = t_s / h` of one precomputed bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonCost {
    c: f64,
}

impl HorizonCost {
    pub fn new(c: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidParameter(format!("horizon cost c must lie in (0, 1), got {c}")));
        }
        Ok(Self { c })
    }

    /// From the per-bound time `t_s` and sample period `h`.
    pub fn from_times(t_s: f64, h: f64) -> Result<Self> {
        Self::new(t_s / h)
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Default safety cap `10 ⌈1/c⌉`.
    pub fn default_cap(&self) -> usize {
        default_cap(self.c)
    }
}

pub fn default_cap(c: f64) -> usize {
    10 * (1.0 / c).ceil() as usize
}

/// `(1/N) Σ (1 − P(y ∈ h | X̄ⁱ))` over a set propagated to the step of `h`.
pub fn estimate_step_probability<M: StateSpaceModel + ?Sized>(
    secondary: &ParticleSet,
    h_next: &BoxSet,
    model: &M,
    ev: &LikelihoodEvaluator,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let k = secondary.step();
    let mut total = 0.0;
    for (x, lw) in secondary.particles().iter().zip(secondary.log_weights()) {
        total += lw.exp() * ev.log_complement(model, h_next, x, k, rng)?.exp();
    }
    Ok(total.clamp(0.0, 1.0))
}

/// `p_T(n) = p_n Π_{i<n} (1 − p_i)`.
pub fn first_trigger_pmf(per_step: &[f64]) -> Vec<f64> {
    let mut survive = 1.0;
    per_step
        .iter()
        .map(|p| {
            let out = p * survive;
            survive *= 1.0 - p;
            out
        })
        .collect()
}

/// Smallest `n` (1-based) with `Σ_{i≤n} p_T(i) ≥ alpha`.
pub fn quantile_horizon(p_t: &[f64], alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1], got {alpha}")));
    }
    let mut mass = 0.0;
    for (i, p) in p_t.iter().enumerate() {
        mass += p;
        if mass >= alpha - QUANTILE_SLACK {
            return Ok(i + 1);
        }
    }
    Err(Error::NotReached { alpha, mass })
}

/// Compensated summation; `T_c` differences are compared at 1e-12.
fn neumaier(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    sum + comp
}

fn pmf_at(p_t: &[f64], i: usize) -> f64 {
    if i == 0 {
        0.0
    } else {
        p_t.get(i - 1).copied().unwrap_or(0.0)
    }
}

/// `T_c(n̂) = Σ_{c n̂ < i ≤ n̂} (i − c n̂) p(i | n̂)`, where `p(i | n̂)` is `p_T`
/// below `n̂` and the remaining mass at `n̂`.
pub fn tc_value(p_t: &[f64], c: f64, n_hat: usize) -> f64 {
    let a = c * n_hat as f64;
    let terminal = 1.0 - neumaier((1..n_hat).map(|j| pmf_at(p_t, j)));
    neumaier((1..=n_hat).filter(|&i| i as f64 > a).map(|i| {
        let p = if i == n_hat { terminal } else { pmf_at(p_t, i) };
        (i as f64 - a) * p
    }))
}

/// `T_c(n̂+1) − T_c(n̂)` in closed form:
///
/// `1 − Σ_{i≤n̂} p_T(i) − c (1 − Σ_{i≤c n̂} p_T(i)) + (b − ⌊b⌋) p_T(⌊b⌋) (⌊b⌋ − ⌊c n̂⌋)`
///
/// with `b = c (n̂+1)`. The last term is nonzero only when an integer lies in
/// `(c n̂, c (n̂+1)]`.
pub fn tc_forward_difference(p_t: &[f64], c: f64, n_hat: usize) -> f64 {
    let a = c * n_hat as f64;
    let b = c * (n_hat + 1) as f64;
    let mass = neumaier((1..=n_hat).map(|i| pmf_at(p_t, i)));
    let below = neumaier((1..=n_hat).filter(|&i| i as f64 <= a).map(|i| pmf_at(p_t, i)));
    let crossing: f64 = (1..=n_hat)
        .filter(|&i| i as f64 > a && i as f64 <= b)
        .map(|i| (b - i as f64) * pmf_at(p_t, i))
        .sum();
    (1.0 - mass) - c * (1.0 - below) + crossing
}

/// Result of the heuristic horizon search.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonChoice {
    pub n_hat: usize,
    /// The safety cap was hit before `ΔT_c` turned negative.
    pub capped: bool,
    pub probabilities: TriggerProbabilities,
}

/// Extends `p_T` one step at a time by calling `source(i)` for the trigger
/// probability at step `i`, and stops at the first `n̂` with `ΔT_c(n̂) < 0`
/// or at `n_max`.
pub fn heuristic_horizon<F>(mut source: F, c: f64, n_max: usize) -> Result<HorizonChoice>
where
    F: FnMut(usize) -> Result<f64>,
{
    HorizonCost::new(c)?;
    if n_max == 0 {
        return Err(Error::InvalidParameter("horizon cap must be at least 1".into()));
    }
    let mut probs = TriggerProbabilities::new();
    for n_hat in 1..=n_max {
        let p = source(n_hat)?;
        probs.push(p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))?;
        if tc_forward_difference(probs.first_trigger(), c, n_hat) < 0.0 {
            return Ok(HorizonChoice { n_hat, capped: false, probabilities: probs });
        }
    }
    Ok(HorizonChoice { n_hat: n_max, capped: true, probabilities: probs })
}

/// The `(1 − c)`-quantile of `p_T`, a lower bound on every maximizer of `T_c`.
pub fn maximizer_lower_bound(p_t: &[f64], c: f64) -> Result<usize> {
    HorizonCost::new(c)?;
    quantile_horizon(p_t, 1.0 - c)
}
