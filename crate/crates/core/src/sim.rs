//! Closed-loop sensor/observer simulation.
//!
//! The sensor observes a simulated trajectory and transmits `y_k` only when
//! it leaves the current trigger set. The observer runs a particle filter on
//! the resulting hybrid measurements. Three protocols are supported:
//!
//! - [`Protocol::PeriodicDownlink`]: the observer computes `H_k` fresh at every
//!   step from its current posterior (an estimation baseline).
//! - [`Protocol::Precompute`]: at each event the observer runs ahead, assuming
//!   no further triggers, and sends `n̂` bounds at once. The sensor transmits
//!   at step `n̂` at the latest ("forced" if the measurement was inside).
//! - [`Protocol::OpenLoop`]: send-on-delta around the last transmitted value.
//!
//! Step 0 acts as the initial event: the prior particle cloud plays the role
//! of the event posterior, so every step `1..=T` has a trigger set.

use nalgebra::DVector;
use rand::RngCore;

use crate::error::{Error, Result};
use crate::filter::{self, cross_entropy, FilterKind, Mask, ParticleSet, StepOutcome};
use crate::gaussian::BoxSet;
use crate::horizon::{self, HorizonCost, TriggerProbabilities, PROB_CLAMP};
use crate::likelihood::LikelihoodEvaluator;
use crate::model::{simulate, StateSpaceModel, Trajectory};
use crate::rng::{stream_rng, Stream, StepStreams};
use crate::trigger::{ibt_center, HybridMeasurement, TriggerKind, TriggerRule};

/// How many bounds to precompute at each event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HorizonRule {
    /// First `n̂` with `ΔT_c(n̂) < 0`.
    Heuristic,
    /// Smallest `n̂` whose first-trigger mass reaches `alpha`.
    Quantile(f64),
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    /// `n_max = None` uses `10 ⌈1/c⌉`.
    Precompute { c: f64, rule: HorizonRule, n_max: Option<usize> },
    PeriodicDownlink,
    OpenLoop,
}

impl Protocol {
    pub fn label(&self) -> &'static str {
        match self {
            Protocol::Precompute { .. } => "precompute",
            Protocol::PeriodicDownlink => "periodic",
            Protocol::OpenLoop => "open_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub trigger: TriggerRule,
    pub filter: FilterKind,
    pub evaluator: LikelihoodEvaluator,
    pub particles: usize,
    pub steps: usize,
    pub seed: u64,
    pub protocol: Protocol,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidParameter("T must be at least 1".into()));
        }
        if self.particles < 2 {
            return Err(Error::InvalidParameter("N must be at least 2".into()));
        }
        self.filter.validate()?;
        match self.protocol {
            Protocol::Precompute { c, rule, n_max } => {
                HorizonCost::new(c)?;
                if n_max == Some(0) {
                    return Err(Error::InvalidParameter("horizon cap must be at least 1".into()));
                }
                match rule {
                    HorizonRule::Quantile(a) if !(a > 0.0 && a <= 1.0) => {
                        Err(Error::InvalidParameter(format!("quantile level must lie in (0, 1], got {a}")))
                    }
                    HorizonRule::Fixed(0) => Err(Error::InvalidParameter("fixed horizon must be at least 1".into())),
                    _ => Ok(()),
                }
            }
            Protocol::OpenLoop if self.trigger.kind() != TriggerKind::Sod => {
                Err(Error::InvalidParameter("open-loop protocol needs a send-on-delta trigger".into()))
            }
            _ => Ok(()),
        }
    }
}

/// One simulated time step.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLogRecord {
    pub k: usize,
    pub state: DVector<f64>,
    pub measurement: DVector<f64>,
    pub gamma: u8,
    /// Transmission caused by running out of precomputed bounds.
    pub forced: bool,
    pub h: BoxSet,
    pub posterior_mean: DVector<f64>,
    pub log_density_at_state: f64,
    /// Horizon chosen at the most recent event (precompute protocol only).
    pub n_hat: Option<usize>,
    pub degenerate: bool,
    /// Effective sample size of the posterior.
    pub ess: f64,
    /// Observer's estimate of `p(γ_k = 1 | 𝒴_{1:k-1})`.
    pub trigger_probability: f64,
    /// Monte Carlo evaluator only: particles whose simulated measurement
    /// landed in `H_k`.
    pub accepted: Option<usize>,
    /// Full particle set, kept only by [`run_keeping_posteriors`].
    pub posterior: Option<ParticleSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub steps: usize,
    pub events: usize,
    pub forced: usize,
    pub communication_rate: f64,
    pub ce_all: f64,
    pub ce_events: Option<f64>,
    pub ce_noevents: Option<f64>,
    pub mean_n_hat: Option<f64>,
    /// Forced transmissions as a fraction of all transmissions.
    pub forced_fraction: f64,
    /// Mean of `max(n − c n̂, 0)` over completed event periods.
    pub mean_radio_off: Option<f64>,
    pub degenerate_steps: usize,
    pub mean_accepted: Option<f64>,
    pub expected_accepted: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub trajectory: Trajectory,
    pub records: Vec<EventLogRecord>,
    pub summary: SimSummary,
}

/// `(N/T) Σ_{k=1}^{T-1} (1 − p_{k+1}) + N/T`, where `probs[k-1]` is the trigger
/// probability at step `k`.
pub fn expected_particle_count(probs: &[f64], n: usize) -> f64 {
    let t = probs.len() as f64;
    let n = n as f64;
    let survive: f64 = probs.iter().skip(1).map(|p| 1.0 - p).sum();
    n / t * survive + n / t
}

/// What the observer derives for step `k` from the posterior at `k-1`.
#[derive(Debug, Clone)]
struct Plan {
    h: BoxSet,
    probability: f64,
    accepted_if_event: Option<usize>,
}

struct Runner<'a, M: ?Sized> {
    model: &'a M,
    cfg: &'a SimConfig,
    trajectory: &'a Trajectory,
    keep_posteriors: bool,
}

impl<'a, M: StateSpaceModel + ?Sized> Runner<'a, M> {
    fn plan(&self, prev: &ParticleSet, last_sent: Option<&DVector<f64>>) -> Result<Plan> {
        let k = prev.step() + 1;
        let seed = self.cfg.seed;
        let mut rng = stream_rng(seed, Stream::Secondary, k as u64);
        let secondary = filter::propagate_secondary(prev, self.model, self.cfg.particles, &mut rng)?;
        let center = match (self.cfg.trigger.kind(), last_sent) {
            (TriggerKind::Sod, Some(y)) => y.clone(),
            _ => ibt_center(&secondary, self.model, k)?,
        };
        let h = self.cfg.trigger.build_set(center.as_slice())?;
        let mut rng = stream_rng(seed, Stream::SecondaryLikelihood, k as u64);
        let probability = horizon::estimate_step_probability(&secondary, &h, self.model, &self.cfg.evaluator, &mut rng)?;
        let accepted_if_event = if self.cfg.evaluator.is_stochastic() {
            let mut rng = stream_rng(seed, Stream::Diagnostics, k as u64);
            Some(
                secondary
                    .particles()
                    .iter()
                    .filter(|x| h.contains(self.model.sample_measurement(x, k, &mut rng as &mut dyn RngCore).as_slice()))
                    .count(),
            )
        } else {
            None
        };
        Ok(Plan { h, probability, accepted_if_event })
    }

    fn filter_step(&self, prev: &ParticleSet, meas: &HybridMeasurement) -> Result<StepOutcome> {
        let k = prev.step() + 1;
        let mut streams = StepStreams::new(self.cfg.seed, k as u64);
        filter::step(&self.cfg.filter, prev, meas, self.model, &self.cfg.evaluator, &mut streams)
    }

    fn record(&self, plan: &Plan, meas: &HybridMeasurement, forced: bool, outcome: &StepOutcome, n_hat: Option<usize>) -> EventLogRecord {
        let k = outcome.set.step();
        let state = self.trajectory.states[k - 1].clone();
        let accepted = plan.accepted_if_event.map(|hypothetical| match meas {
            HybridMeasurement::Event(_) => hypothetical,
            HybridMeasurement::NoEvent(_) if outcome.degenerate => 0,
            HybridMeasurement::NoEvent(_) => outcome.set.log_weights().iter().filter(|w| w.is_finite()).count(),
        });
        EventLogRecord {
            k,
            log_density_at_state: filter::posterior_log_density(&outcome.set, &state),
            state,
            measurement: self.trajectory.measurements[k - 1].clone(),
            gamma: meas.gamma(),
            forced,
            h: plan.h.clone(),
            posterior_mean: outcome.set.mean(),
            n_hat,
            degenerate: outcome.degenerate,
            ess: outcome.set.ess(),
            trigger_probability: plan.probability,
            accepted,
            posterior: self.keep_posteriors.then(|| outcome.set.clone()),
        }
    }

    fn run_stepwise(&self, mut posterior: ParticleSet) -> Result<Vec<EventLogRecord>> {
        let mut records = Vec::with_capacity(self.cfg.steps);
        let mut last_sent: Option<DVector<f64>> = None;
        for k in 1..=self.cfg.steps {
            let plan = self.plan(&posterior, last_sent.as_ref())?;
            let y = &self.trajectory.measurements[k - 1];
            let meas = self.cfg.trigger.decide(y, &plan.h);
            if meas.is_event() {
                last_sent = Some(y.clone());
            }
            let outcome = self.filter_step(&posterior, &meas)?;
            records.push(self.record(&plan, &meas, false, &outcome, None));
            posterior = outcome.set;
        }
        Ok(records)
    }

    /// Runs ahead from the event posterior at `k0`, assuming no trigger, and
    /// returns the bounds together with the posteriors they imply.
    fn precompute(&self, event: StepOutcome, c: f64, rule: HorizonRule, n_max: usize, last_sent: &DVector<f64>) -> Result<Cycle> {
        let k0 = event.set.step();
        let limit = n_max.min(self.cfg.steps - k0);
        let mut cycle = Cycle { posteriors: vec![event], plans: Vec::new(), n_hat: 0 };
        if limit == 0 {
            return Ok(cycle);
        }
        let mut source = |i: usize| -> Result<f64> {
            // The no-event posterior at k0+i-1 is only needed once bound i is requested.
            if i > 1 {
                let prev = &cycle.posteriors[i - 2].set;
                let meas = HybridMeasurement::NoEvent(cycle.plans[i - 2].h.clone());
                let outcome = self.filter_step(prev, &meas)?;
                cycle.posteriors.push(outcome);
            }
            let plan = self.plan(&cycle.posteriors[i - 1].set, Some(last_sent))?;
            let p = plan.probability;
            cycle.plans.push(plan);
            Ok(p)
        };
        let n_hat = match rule {
            HorizonRule::Heuristic => horizon::heuristic_horizon(&mut source, c, limit)?.n_hat,
            HorizonRule::Quantile(alpha) => {
                let mut probs = TriggerProbabilities::new();
                let mut chosen = limit;
                for i in 1..=limit {
                    probs.push(source(i)?.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))?;
                    if horizon::quantile_horizon(probs.first_trigger(), alpha).is_ok() {
                        chosen = i;
                        break;
                    }
                }
                chosen
            }
            HorizonRule::Fixed(n) => {
                let n = n.min(limit);
                for i in 1..=n {
                    source(i)?;
                }
                n
            }
        };
        cycle.n_hat = n_hat;
        Ok(cycle)
    }

    /// Before any transmission a send-on-delta rule centers on the prediction.
    fn initial_center(&self, start: &ParticleSet) -> Result<DVector<f64>> {
        let k = start.step() + 1;
        let mut rng = stream_rng(self.cfg.seed, Stream::Secondary, k as u64);
        let s = filter::propagate_secondary(start, self.model, self.cfg.particles, &mut rng)?;
        ibt_center(&s, self.model, k)
    }

    fn run_precompute(&self, prior: ParticleSet, c: f64, rule: HorizonRule, n_max: usize) -> Result<(Vec<EventLogRecord>, Vec<f64>)> {
        let mut records = Vec::with_capacity(self.cfg.steps);
        let mut radio_off = Vec::new();
        let initial_center = self.initial_center(&prior)?;
        let mut cycle = self.precompute(StepOutcome { set: prior, degenerate: false }, c, rule, n_max, &initial_center)?;
        let mut k0 = 0;
        let mut k = 1;
        while k <= self.cfg.steps {
            let i = k - k0;
            let plan = cycle.plans[i - 1].clone();
            let y = &self.trajectory.measurements[k - 1];
            let natural = self.cfg.trigger.decide(y, &plan.h);
            let exhausted = i == cycle.n_hat;
            if natural.is_event() || exhausted {
                let meas = HybridMeasurement::Event(y.clone());
                let outcome = self.filter_step(&cycle.posteriors[i - 1].set, &meas)?;
                records.push(self.record(&plan, &meas, !natural.is_event(), &outcome, Some(cycle.n_hat)));
                radio_off.push((i as f64 - c * cycle.n_hat as f64).max(0.0));
                cycle = self.precompute(outcome, c, rule, n_max, y)?;
                k0 = k;
            } else {
                let outcome = cycle.posteriors[i].clone();
                records.push(self.record(&plan, &natural, false, &outcome, Some(cycle.n_hat)));
            }
            k += 1;
        }
        Ok((records, radio_off))
    }
}

struct Cycle {
    /// `posteriors[i]` is the posterior at `k0 + i`; entry 0 is the event update.
    posteriors: Vec<StepOutcome>,
    /// `plans[i-1]` holds the bound for `k0 + i`.
    plans: Vec<Plan>,
    n_hat: usize,
}

/// Simulates `config.steps` steps of the closed loop on `model`.
pub fn run<M: StateSpaceModel + ?Sized>(model: &M, config: &SimConfig) -> Result<SimOutput> {
    run_inner(model, config, false)
}

/// Like [`run`], but every record also carries the full posterior particle set.
pub fn run_keeping_posteriors<M: StateSpaceModel + ?Sized>(model: &M, config: &SimConfig) -> Result<SimOutput> {
    run_inner(model, config, true)
}

/// Observer-side look-ahead from `start`, assuming no trigger for `horizon`
/// steps: the trigger sets it would send and its per-step trigger
/// probabilities. Uses the same random streams as [`run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunAhead {
    pub bounds: Vec<BoxSet>,
    pub probabilities: Vec<f64>,
}

impl RunAhead {
    /// First-trigger pmf implied by the per-step probabilities.
    pub fn first_trigger(&self) -> Vec<f64> {
        horizon::first_trigger_pmf(&self.probabilities)
    }
}

pub fn run_ahead<M: StateSpaceModel + ?Sized>(model: &M, config: &SimConfig, start: &ParticleSet, horizon: usize) -> Result<RunAhead> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("look-ahead horizon must be at least 1".into()));
    }
    let mut cfg = config.clone();
    cfg.steps = start.step() + horizon;
    let empty = Trajectory { initial: DVector::zeros(model.state_dim()), states: vec![], measurements: vec![] };
    let runner = Runner { model, cfg: &cfg, trajectory: &empty, keep_posteriors: false };
    let center = runner.initial_center(start)?;
    let event = StepOutcome { set: start.clone(), degenerate: false };
    let cycle = runner.precompute(event, 0.5, HorizonRule::Fixed(horizon), horizon, &center)?;
    Ok(RunAhead {
        bounds: cycle.plans.iter().map(|p| p.h.clone()).collect(),
        probabilities: cycle.plans.iter().map(|p| p.probability).collect(),
    })
}

fn run_inner<M: StateSpaceModel + ?Sized>(model: &M, config: &SimConfig, keep_posteriors: bool) -> Result<SimOutput> {
    config.validate()?;
    if config.trigger.weights().len() != model.meas_dim() {
        return Err(Error::DimensionMismatch { expected: model.meas_dim(), found: config.trigger.weights().len() });
    }
    let trajectory = simulate(model, config.steps, config.seed)?;
    let mut rng = stream_rng(config.seed, Stream::Init, 0);
    let prior = ParticleSet::from_prior(model, config.particles, &mut rng)?;
    let runner = Runner { model, cfg: config, trajectory: &trajectory, keep_posteriors };
    let (records, radio_off) = match config.protocol {
        Protocol::Precompute { c, rule, n_max } => {
            let n_max = n_max.unwrap_or_else(|| horizon::default_cap(c));
            let (records, radio_off) = runner.run_precompute(prior, c, rule, n_max)?;
            (records, Some(radio_off))
        }
        Protocol::PeriodicDownlink | Protocol::OpenLoop => (runner.run_stepwise(prior)?, None),
    };
    let summary = summarize(&records, config, radio_off.as_deref())?;
    Ok(SimOutput { trajectory, records, summary })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    (count > 0).then(|| sum / count as f64)
}

fn summarize(records: &[EventLogRecord], config: &SimConfig, radio_off: Option<&[f64]>) -> Result<SimSummary> {
    let log_densities: Vec<f64> = records.iter().map(|r| r.log_density_at_state).collect();
    let gammas: Vec<u8> = records.iter().map(|r| r.gamma).collect();
    let events = gammas.iter().filter(|g| **g == 1).count();
    let forced = records.iter().filter(|r| r.forced).count();
    let optional = |mask| match cross_entropy(&log_densities, &gammas, mask) {
        Ok(v) => Ok(Some(v)),
        Err(Error::EmptyMask) => Ok(None),
        Err(e) => Err(e),
    };
    let is_precompute = matches!(config.protocol, Protocol::Precompute { .. });
    let n_hats = records.iter().filter(|r| r.gamma == 1).filter_map(|r| r.n_hat);
    let accepted: Vec<usize> = records.iter().filter_map(|r| r.accepted).collect();
    let probs: Vec<f64> = records.iter().map(|r| r.trigger_probability).collect();
    Ok(SimSummary {
        steps: records.len(),
        events,
        forced,
        communication_rate: events as f64 / records.len() as f64,
        ce_all: cross_entropy(&log_densities, &gammas, Mask::All)?,
        ce_events: optional(Mask::Events)?,
        ce_noevents: optional(Mask::NoEvents)?,
        mean_n_hat: if is_precompute { mean(n_hats.map(|n| n as f64)) } else { None },
        forced_fraction: if events > 0 { forced as f64 / events as f64 } else { 0.0 },
        mean_radio_off: radio_off.and_then(|r| mean(r.iter().copied())),
        degenerate_steps: records.iter().filter(|r| r.degenerate).count(),
        mean_accepted: (accepted.len() == records.len()).then(|| accepted.iter().sum::<usize>() as f64 / accepted.len() as f64),
        expected_accepted: (accepted.len() == records.len()).then(|| expected_particle_count(&probs, config.particles)),
    })
}
