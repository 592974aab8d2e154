//! Brute-force references.
//!
//! Nothing here reuses the numeric kernels of the filtering modules: the
//! Monte Carlo pmf simulates trajectories directly from the model, the box
//! integral uses adaptive Simpson quadrature of an explicitly written density,
//! the `T_c` scan expands the expectation in its own way, and the Kalman
//! filter works on the matrices of a [`LinearGaussian`].

use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::gaussian::{BoxSet, Gaussian};
use crate::model::{LinearGaussian, StateSpaceModel};
use crate::rng::{stream_rng, Stream};

/// Trigger sets seen by the simulated sensor after an event.
#[derive(Debug, Clone, Copy)]
pub enum BoundsSource<'a> {
    /// The same box at every step (no observer in the loop).
    Fixed(&'a BoxSet),
    /// `bounds[i-1]` applies `i` steps after the event; the run is censored
    /// when the list ends.
    Sequence(&'a [BoxSet]),
}

impl BoundsSource<'_> {
    fn get(&self, i: usize) -> Option<&BoxSet> {
        match self {
            BoundsSource::Fixed(h) => Some(h),
            BoundsSource::Sequence(list) => list.get(i - 1),
        }
    }
}

/// Empirical first-trigger pmf with 90% Clopper–Pearson bands.
#[derive(Debug, Clone, PartialEq)]
pub struct McTriggerPmf {
    pub repetitions: usize,
    /// `counts[n-1]` runs first triggered `n` steps after the start.
    pub counts: Vec<usize>,
    pub pmf: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Fraction of runs without a trigger up to `max_n` (or the end of the
    /// bound list).
    pub censored: f64,
}

/// Two-sided 90% Clopper–Pearson interval for `x` successes in `n` trials.
///
/// The beta quantiles are found by bisection on the regularized incomplete
/// beta function, which stays fast for the very large `n` of pooled runs.
pub fn clopper_pearson_90(x: usize, n: usize) -> (f64, f64) {
    let (xf, nf) = (x as f64, n as f64);
    let lower = if x == 0 { 0.0 } else { beta_quantile(xf, nf - xf + 1.0, 0.05) };
    let upper = if x >= n { 1.0 } else { beta_quantile(xf + 1.0, nf - xf, 0.95) };
    (lower, upper)
}

fn beta_quantile(a: f64, b: f64, q: f64) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if beta_reg(a, b, mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Draws `x_0` from the model prior `repetitions` times, simulates forward,
/// and records the first step whose measurement leaves the trigger set.
pub fn naive_mc_trigger_pmf<M: StateSpaceModel + ?Sized>(
    model: &M,
    bounds: BoundsSource<'_>,
    repetitions: usize,
    max_n: usize,
    seed: u64,
) -> Result<McTriggerPmf> {
    if repetitions == 0 || max_n == 0 {
        return Err(Error::InvalidParameter("need at least one repetition and one step".into()));
    }
    let mut counts = vec![0usize; max_n];
    let mut censored = 0usize;
    for rep in 0..repetitions {
        let mut rng = stream_rng(seed, Stream::Oracle, rep as u64);
        let mut x = model.initial().sample(&mut rng);
        let mut hit = None;
        for n in 1..=max_n {
            let Some(h) = bounds.get(n) else { break };
            x = model.sample_transition(&x, n, &mut rng);
            let y = model.sample_measurement(&x, n, &mut rng);
            if !h.contains(y.as_slice()) {
                hit = Some(n);
                break;
            }
        }
        match hit {
            Some(n) => counts[n - 1] += 1,
            None => censored += 1,
        }
    }
    Ok(McTriggerPmf::from_counts(counts, censored))
}

impl McTriggerPmf {
    /// Builds the pmf and bands from raw counts; runs are `Σ counts + censored`.
    pub fn from_counts(counts: Vec<usize>, censored: usize) -> Self {
        let repetitions = counts.iter().sum::<usize>() + censored;
        let total = repetitions.max(1) as f64;
        let bands: Vec<(f64, f64)> = counts.iter().map(|&c| clopper_pearson_90(c, repetitions)).collect();
        Self {
            repetitions,
            pmf: counts.iter().map(|&c| c as f64 / total).collect(),
            lower: bands.iter().map(|b| b.0).collect(),
            upper: bands.iter().map(|b| b.1).collect(),
            censored: censored as f64 / total,
            counts,
        }
    }

    /// Merges independent estimates over the same step range.
    pub fn pooled(parts: &[McTriggerPmf]) -> Result<Self> {
        let len = parts.first().map(|p| p.counts.len()).ok_or(Error::InvalidParameter("nothing to pool".into()))?;
        if parts.iter().any(|p| p.counts.len() != len) {
            return Err(Error::InvalidParameter("pooled estimates must share max_n".into()));
        }
        let counts = (0..len).map(|i| parts.iter().map(|p| p.counts[i]).sum()).collect();
        let censored = parts.iter().map(|p| p.repetitions - p.counts.iter().sum::<usize>()).sum();
        Ok(Self::from_counts(counts, censored))
    }
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> Option<f64> {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    if err.abs() <= 15.0 * tol {
        return Some(left + right + err / 15.0);
    }
    if depth == 0 {
        return None;
    }
    Some(
        adaptive(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)?
            + adaptive(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)?,
    )
}

/// `∫_a^b N(t | mean, var) dt` by adaptive Simpson on `[a, b] ∩ mean ± 40σ`.
fn quadrature_1d(mean: f64, var: f64, a: f64, b: f64, tol: f64) -> Result<f64> {
    let sd = var.sqrt();
    let (lo, hi) = (a.max(mean - 40.0 * sd), b.min(mean + 40.0 * sd));
    if !(hi > lo) {
        return Ok(0.0);
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    let f = move |t: f64| norm * (-(t - mean) * (t - mean) / (2.0 * var)).exp();
    // Split at the mode and at unit-sd knots so narrow peaks are not missed.
    let mut knots = vec![lo];
    let mut t = (mean - 40.0 * sd).max(lo);
    while t < hi {
        if t > lo {
            knots.push(t);
        }
        t += sd;
    }
    knots.push(hi);
    let pieces = knots.len() - 1;
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
        let whole = simpson(a, b, fa, fm, fb);
        total += adaptive(&f, a, b, fa, fm, fb, whole, tol / pieces as f64, 40).ok_or(Error::ToleranceNotMet(tol))?;
    }
    Ok(total)
}

/// `P(Y ∈ h)` for `Y ~ g` by quadrature; `g` must have diagonal covariance.
pub fn quadrature_box_integral(g: &Gaussian, h: &BoxSet, tol: f64) -> Result<f64> {
    if g.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: h.dim() });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
    }
    let cov = g.cov();
    for i in 0..cov.nrows() {
        for j in 0..cov.ncols() {
            if i != j && cov[(i, j)] != 0.0 {
                return Err(Error::NonDiagonalCovariance);
            }
        }
    }
    let axis_tol = tol / g.dim() as f64;
    let mut p = 1.0;
    for a in 0..g.dim() {
        let var = cov[(a, a)];
        let (lo, hi) = (h.lower()[a], h.upper()[a]);
        p *= if var == 0.0 {
            f64::from(lo <= g.mean()[a] && g.mean()[a] <= hi)
        } else {
            quadrature_1d(g.mean()[a], var, lo, hi, axis_tol)?
        };
    }
    Ok(p)
}

/// `E[max(min(n, n̂) − c n̂, 0)]` with the mass beyond `p_t` treated as `n > n̂`.
fn tc_reference(p_t: &[f64], c: f64, n_hat: usize) -> f64 {
    let cost = c * n_hat as f64;
    let mut value = 0.0;
    let mut seen = 0.0;
    for (idx, p) in p_t.iter().enumerate().take(n_hat.saturating_sub(1)) {
        let n = (idx + 1) as f64;
        value += p * (n - cost).max(0.0);
        seen += p;
    }
    value + (1.0 - seen) * (n_hat as f64 - cost).max(0.0)
}

/// Argmax of `T_c` over `1..=n_max`; the first index wins ties.
pub fn exhaustive_tc_argmax(p_t: &[f64], c: f64, n_max: usize) -> (usize, f64) {
    let mut best = (1, tc_reference(p_t, c, 1));
    for n in 2..=n_max {
        let v = tc_reference(p_t, c, n);
        if v > best.1 {
            best = (n, v);
        }
    }
    best
}

/// Exact `T_c` curve over `1..=n_max` from the reference expansion.
pub fn tc_curve(p_t: &[f64], c: f64, n_max: usize) -> Vec<f64> {
    (1..=n_max).map(|n| tc_reference(p_t, c, n)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KalmanOutput {
    pub means: Vec<DVector<f64>>,
    pub covariances: Vec<DMatrix<f64>>,
    pub innovations: Vec<DVector<f64>>,
    pub innovation_covariances: Vec<DMatrix<f64>>,
}

/// Predict/update recursion for `measurements[k-1] = y_k`, `k = 1..`.
pub fn kalman_filter(model: &LinearGaussian, measurements: &[DVector<f64>]) -> Result<KalmanOutput> {
    let (a, c, q, r) = (model.a(), model.c(), model.q(), model.r());
    let mut mean = model.initial().mean().clone();
    let mut cov = model.initial().cov().clone();
    let mut out = KalmanOutput { means: vec![], covariances: vec![], innovations: vec![], innovation_covariances: vec![] };
    for y in measurements {
        if y.len() != c.nrows() {
            return Err(Error::DimensionMismatch { expected: c.nrows(), found: y.len() });
        }
        let pred_mean = a * &mean;
        let pred_cov = a * &cov * a.transpose() + q;
        let s = c * &pred_cov * c.transpose() + r;
        let s_inv = s.clone().try_inverse().ok_or(Error::SingularCovariance)?;
        let gain = &pred_cov * c.transpose() * s_inv;
        let innovation = y - c * &pred_mean;
        mean = &pred_mean + &gain * &innovation;
        let ikc = DMatrix::identity(pred_cov.nrows(), pred_cov.ncols()) - &gain * c;
        // Joseph form keeps the covariance symmetric and PSD.
        cov = &ikc * &pred_cov * ikc.transpose() + &gain * r * gain.transpose();
        out.means.push(mean.clone());
        out.covariances.push(cov.clone());
        out.innovations.push(innovation);
        out.innovation_covariances.push(s);
    }
    Ok(out)
}
