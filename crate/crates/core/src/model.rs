//! State-space models with additive Gaussian noise,
//!
//! ```text
//! x_k = f_k(x_{k-1}) + w_k,   w_k ~ N(0, Q_k)
//! y_k = h_k(x_k) + v_k,       v_k ~ N(0, R_k)
//! ```
//!
//! and the Gaussian linearization of `p(x_k, y_k | x_{k-1})` used by the
//! approximate fully adapted filter.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{self, Gaussian, JointGaussian};
use crate::rng::{stream_rng, Stream};
use crate::stats;

/// Zero-mean additive noise with precomputed factors.
#[derive(Debug, Clone)]
pub struct AdditiveNoise {
    cov: DMatrix<f64>,
    sqrt: DMatrix<f64>,
    inverse: Option<DMatrix<f64>>,
    log_det: f64,
    diagonal: bool,
}

impl AdditiveNoise {
    pub fn new(cov: DMatrix<f64>) -> Result<Self> {
        let zero = DVector::zeros(cov.nrows());
        let g = Gaussian::new(zero, cov)?;
        let diagonal = g.is_diagonal();
        let cov = g.cov().clone();
        let sqrt = gaussian::covariance_sqrt(&cov);
        let (inverse, log_det) = match cov.clone().cholesky() {
            Some(chol) => {
                let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                (Some(chol.inverse()), log_det)
            }
            None => (None, f64::NEG_INFINITY),
        };
        Ok(Self { cov, sqrt, inverse, log_det, diagonal })
    }

    pub fn diagonal(variances: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(variances)))
    }

    pub fn scalar(var: f64) -> Result<Self> {
        Self::new(DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.cov.nrows()
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_diagonal(&self) -> bool {
        self.diagonal
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.dim() == 1 {
            let z: f64 = rng.sample(StandardNormal);
            return DVector::from_element(1, self.sqrt[(0, 0)] * z);
        }
        &self.sqrt * gaussian::standard_normal_vector(self.dim(), rng)
    }

    /// Log density of the residual `r` under `N(0, cov)`. Singular noise
    /// yields a point mass: `+∞` at zero residual, `-∞` elsewhere.
    pub fn log_pdf(&self, r: &DVector<f64>) -> f64 {
        match &self.inverse {
            Some(inv) => {
                if self.dim() == 1 {
                    return stats::normal_log_pdf(r[0], 0.0, self.cov[(0, 0)]);
                }
                let q = (r.transpose() * inv * r)[(0, 0)];
                -0.5 * (self.dim() as f64 * stats::LN_2PI + self.log_det + q)
            }
            None if r.iter().all(|v| *v == 0.0) => f64::INFINITY,
            None => f64::NEG_INFINITY,
        }
    }
}

/// A discrete-time model with additive Gaussian process and measurement noise.
///
/// `k` is the index of the state being produced: `transition_mean(x, k)` is
/// the mean of `x_k` given `x_{k-1} = x`.
pub trait StateSpaceModel: Send + Sync {
    fn state_dim(&self) -> usize;
    fn meas_dim(&self) -> usize;
    fn transition_mean(&self, x_prev: &DVector<f64>, k: usize) -> DVector<f64>;
    fn process_noise(&self, k: usize) -> &AdditiveNoise;
    fn measurement_mean(&self, x: &DVector<f64>, k: usize) -> DVector<f64>;
    /// `∂h_k/∂x` evaluated at `x`.
    fn measurement_jacobian(&self, x: &DVector<f64>, k: usize) -> DMatrix<f64>;
    fn measurement_noise(&self, k: usize) -> &AdditiveNoise;
    fn initial(&self) -> &Gaussian;

    fn sample_transition(&self, x_prev: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> DVector<f64> {
        self.transition_mean(x_prev, k) + self.process_noise(k).sample(rng)
    }

    fn transition_log_density(&self, x: &DVector<f64>, x_prev: &DVector<f64>, k: usize) -> f64 {
        self.process_noise(k).log_pdf(&(x - self.transition_mean(x_prev, k)))
    }

    fn sample_measurement(&self, x: &DVector<f64>, k: usize, rng: &mut dyn RngCore) -> DVector<f64> {
        self.measurement_mean(x, k) + self.measurement_noise(k).sample(rng)
    }

    fn measurement_log_density(&self, y: &DVector<f64>, x: &DVector<f64>, k: usize) -> f64 {
        self.measurement_noise(k).log_pdf(&(y - self.measurement_mean(x, k)))
    }

    /// First-order Gaussian approximation of `p(x_k, y_k | x_{k-1})`, with the
    /// measurement linearized about the propagated mean `f̄_k(x_{k-1})`.
    fn joint_gaussian_at(&self, x_prev: &DVector<f64>, k: usize) -> JointGaussian {
        let mean_x = self.transition_mean(x_prev, k);
        let cov_xx = self.process_noise(k).cov().clone();
        let jac = self.measurement_jacobian(&mean_x, k);
        let mean_y = self.measurement_mean(&mean_x, k);
        let cov_xy = &cov_xx * jac.transpose();
        let cov_yy = &jac * &cov_xy + self.measurement_noise(k).cov();
        JointGaussian::from_blocks(mean_x, mean_y, cov_xx, cov_xy, cov_yy)
    }
}

/// The multimodal benchmark
///
/// ```text
/// x_k = x_{k-1}/2 + 25 x_{k-1}/(1 + x_{k-1}²) + 8 cos(1.2 k) + w,  w ~ N(0, 1)
/// y_k = x_k²/20 + v,                                              v ~ N(0, 0.1)
/// ```
///
/// with prior `x_0 ~ N(0, 5²)`.
#[derive(Debug, Clone)]
pub struct BenchmarkSystem {
    process: AdditiveNoise,
    measurement: AdditiveNoise,
    initial: Gaussian,
}

impl BenchmarkSystem {
    pub const PROCESS_VAR: f64 = 1.0;
    pub const MEAS_VAR: f64 = 0.1;
    pub const PRIOR_VAR: f64 = 25.0;

    pub fn new() -> Self {
        Self::with_noise(Self::PROCESS_VAR, Self::MEAS_VAR, 0.0, Self::PRIOR_VAR).expect("valid constants")
    }

    pub fn with_noise(process_var: f64, meas_var: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        Ok(Self {
            process: AdditiveNoise::scalar(process_var)?,
            measurement: AdditiveNoise::scalar(meas_var)?,
            initial: Gaussian::scalar(prior_mean, prior_var)?,
        })
    }

    /// Deterministic part of the transition producing `x_k` from `x_{k-1}`.
    pub fn drift(x_prev: f64, k: usize) -> f64 {
        x_prev / 2.0 + 25.0 * x_prev / (1.0 + x_prev * x_prev) + 8.0 * (1.2 * k as f64).cos()
    }
}

impl Default for BenchmarkSystem {
    fn default() -> Self {
        Self::new()
    }
}

impl StateSpaceModel for BenchmarkSystem {
    fn state_dim(&self) -> usize {
        1
    }

    fn meas_dim(&self) -> usize {
        1
    }

    fn transition_mean(&self, x_prev: &DVector<f64>, k: usize) -> DVector<f64> {
        DVector::from_element(1, Self::drift(x_prev[0], k))
    }

    fn process_noise(&self, _k: usize) -> &AdditiveNoise {
        &self.process
    }

    fn measurement_mean(&self, x: &DVector<f64>, _k: usize) -> DVector<f64> {
        DVector::from_element(1, x[0] * x[0] / 20.0)
    }

    fn measurement_jacobian(&self, x: &DVector<f64>, _k: usize) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, x[0] / 10.0)
    }

    fn measurement_noise(&self, _k: usize) -> &AdditiveNoise {
        &self.measurement
    }

    fn initial(&self) -> &Gaussian {
        &self.initial
    }
}

/// `x_k = A x_{k-1} + w`, `y_k = C x_k + v`.
#[derive(Debug, Clone)]
pub struct LinearGaussian {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    process: AdditiveNoise,
    measurement: AdditiveNoise,
    initial: Gaussian,
}

impl LinearGaussian {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, q: DMatrix<f64>, r: DMatrix<f64>, initial: Gaussian) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || c.ncols() != n || q.nrows() != n || initial.dim() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.ncols() });
        }
        if r.nrows() != c.nrows() {
            return Err(Error::DimensionMismatch { expected: c.nrows(), found: r.nrows() });
        }
        Ok(Self { a, c, process: AdditiveNoise::new(q)?, measurement: AdditiveNoise::new(r)?, initial })
    }

    pub fn scalar(a: f64, c: f64, q: f64, r: f64, prior_mean: f64, prior_var: f64) -> Result<Self> {
        Self::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, c),
            DMatrix::from_element(1, 1, q),
            DMatrix::from_element(1, 1, r),
            Gaussian::scalar(prior_mean, prior_var)?,
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn q(&self) -> &DMatrix<f64> {
        self.process.cov()
    }

    pub fn r(&self) -> &DMatrix<f64> {
        self.measurement.cov()
    }
}

impl StateSpaceModel for LinearGaussian {
    fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    fn meas_dim(&self) -> usize {
        self.c.nrows()
    }

    fn transition_mean(&self, x_prev: &DVector<f64>, _k: usize) -> DVector<f64> {
        &self.a * x_prev
    }

    fn process_noise(&self, _k: usize) -> &AdditiveNoise {
        &self.process
    }

    fn measurement_mean(&self, x: &DVector<f64>, _k: usize) -> DVector<f64> {
        &self.c * x
    }

    fn measurement_jacobian(&self, _x: &DVector<f64>, _k: usize) -> DMatrix<f64> {
        self.c.clone()
    }

    fn measurement_noise(&self, _k: usize) -> &AdditiveNoise {
        &self.measurement
    }

    fn initial(&self) -> &Gaussian {
        &self.initial
    }
}

/// A simulated trajectory; `states[k-1]` and `measurements[k-1]` hold step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub initial: DVector<f64>,
    pub states: Vec<DVector<f64>>,
    pub measurements: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Draws `x_0 ~ p(x_0)` and simulates `x_{1:T}`, `y_{1:T}` from the
/// trajectory stream of `seed`.
pub fn simulate<M: StateSpaceModel + ?Sized>(model: &M, steps: usize, seed: u64) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidParameter("simulation needs at least one step".into()));
    }
    let mut rng = stream_rng(seed, Stream::Trajectory, 0);
    let initial = model.initial().sample(&mut rng);
    let mut states = Vec::with_capacity(steps);
    let mut measurements = Vec::with_capacity(steps);
    let mut x = initial.clone();
    for k in 1..=steps {
        x = model.sample_transition(&x, k, &mut rng);
        measurements.push(model.sample_measurement(&x, k, &mut rng));
        states.push(x.clone());
    }
    Ok(Trajectory { initial, states, measurements })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn benchmark_drift_is_exact() {
        for (x, k) in [(0.0, 1usize), (1.5, 7), (-3.2, 100)] {
            let want = x / 2.0 + 25.0 * x / (1.0 + x * x) + 8.0 * (1.2 * k as f64).cos();
            let got = BenchmarkSystem::new().transition_mean(&DVector::from_element(1, x), k)[0];
            assert_eq!(got, want);
        }
    }

    #[test]
    fn simulate_is_deterministic() {
        let model = BenchmarkSystem::new();
        let a = simulate(&model, 3, 42).unwrap();
        let b = simulate(&model, 3, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate(&model, 3, 43).unwrap();
        assert_ne!(a, c);
        assert!(simulate(&model, 0, 1).is_err());
    }

    #[test]
    fn zero_noise_first_step_uses_target_index() {
        let model = BenchmarkSystem::with_noise(0.0, 0.0, 0.0, 0.0).unwrap();
        let traj = simulate(&model, 2, 5).unwrap();
        assert_eq!(traj.initial[0], 0.0);
        assert_eq!(traj.states[0][0], 8.0 * (1.2f64).cos());
        let x1 = traj.states[0][0];
        assert_eq!(traj.measurements[0][0], x1 * x1 / 20.0);
    }

    #[test]
    fn benchmark_joint_at_origin() {
        let joint = BenchmarkSystem::new().joint_gaussian_at(&DVector::from_element(1, 0.0), 1);
        let mu = 8.0 * (1.2f64).cos();
        let jac = mu / 10.0;
        assert!((joint.mean_x[0] - mu).abs() < 1e-15);
        assert_eq!(joint.cov_xx[(0, 0)], 1.0);
        assert!((joint.mean_y[0] - mu * mu / 20.0).abs() < 1e-15);
        assert!((joint.cov_xy[(0, 0)] - jac).abs() < 1e-15);
        assert!((joint.cov_yy[(0, 0)] - (jac * jac + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn linear_joint_is_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[0.9, 0.1, 0.0, 0.8]);
        let c = DMatrix::from_row_slice(1, 2, &[1.0, -0.5]);
        let q = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.1, 0.3]);
        let r = DMatrix::from_element(1, 1, 0.2);
        let model = LinearGaussian::new(a.clone(), c.clone(), q.clone(), r.clone(), Gaussian::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap()).unwrap();
        let x_prev = DVector::from_column_slice(&[1.0, -2.0]);
        let joint = model.joint_gaussian_at(&x_prev, 3);
        let mean_x = &a * &x_prev;
        assert!((joint.mean_x.clone() - &mean_x).amax() < 1e-12);
        assert!((joint.mean_y.clone() - &c * &mean_x).amax() < 1e-12);
        assert!((joint.cov_xx.clone() - &q).amax() < 1e-12);
        assert!((joint.cov_xy.clone() - &q * c.transpose()).amax() < 1e-12);
        assert!((joint.cov_yy.clone() - (&c * &q * c.transpose() + &r)).amax() < 1e-12);
    }

    #[test]
    fn log_densities_finite_on_own_samples() {
        let model = BenchmarkSystem::new();
        let mut rng = stream_rng(1, Stream::Oracle, 0);
        let mut x = model.initial().sample(&mut rng);
        for k in 1..50 {
            let next = model.sample_transition(&x, k, &mut rng);
            assert!(model.transition_log_density(&next, &x, k).is_finite());
            let y = model.sample_measurement(&next, k, &mut rng);
            assert!(model.measurement_log_density(&y, &next, k).is_finite());
            x = next;
        }
    }

    #[test]
    fn singular_noise_is_point_mass() {
        let noise = AdditiveNoise::scalar(0.0).unwrap();
        assert_eq!(noise.log_pdf(&DVector::from_element(1, 0.0)), f64::INFINITY);
        assert_eq!(noise.log_pdf(&DVector::from_element(1, 0.1)), f64::NEG_INFINITY);
    }
}
