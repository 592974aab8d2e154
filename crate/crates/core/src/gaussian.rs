//! Multivariate Gaussian algebra: conditioning, products, axis-aligned box
//! integrals and mixtures.
//!
//! Covariances are symmetrized as `(A + Aᵀ)/2` whenever they are produced by
//! a formula. Densities are returned in log space.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::stats::{self, LN_2PI};

const PSD_TOL: f64 = 1e-10;
const CONDITION_TOL: f64 = 1e-12;
const DIAGONAL_TOL: f64 = 1e-12;

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

fn check_psd(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NotPositiveSemidefinite(f64::NAN));
    }
    let min_eig = if m.nrows() == 1 {
        m[(0, 0)]
    } else {
        m.clone().symmetric_eigenvalues().min()
    };
    let scale = m.diagonal().amax().max(1.0);
    if min_eig < -PSD_TOL * scale {
        return Err(Error::NotPositiveSemidefinite(min_eig));
    }
    Ok(())
}

/// Checks the conditioning requirement `σ_min > 1e-12 · σ_max`.
fn check_invertible(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() == 1 {
        let v = m[(0, 0)];
        return if v.is_finite() && v.abs() > 0.0 {
            Ok(())
        } else {
            Err(Error::SingularCovariance)
        };
    }
    let sv = m.clone().singular_values();
    let (max, min) = (sv.max(), sv.min());
    if !(max.is_finite() && min > CONDITION_TOL * max) {
        return Err(Error::SingularCovariance);
    }
    Ok(())
}

fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_invertible(m)?;
    if m.nrows() == 1 {
        return Ok(DMatrix::from_element(1, 1, 1.0 / m[(0, 0)]));
    }
    m.clone().try_inverse().ok_or(Error::SingularCovariance)
}

/// Log density of `N(x | mean, cov)`.
pub fn log_normal_pdf(x: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    if x.len() != mean.len() {
        return Err(Error::DimensionMismatch { expected: mean.len(), found: x.len() });
    }
    if mean.len() == 1 {
        let var = cov[(0, 0)];
        if !(var > 0.0) {
            return Err(Error::SingularCovariance);
        }
        return Ok(stats::normal_log_pdf(x[0], mean[0], var));
    }
    check_invertible(cov)?;
    let chol = cov.clone().cholesky().ok_or(Error::SingularCovariance)?;
    let diff = x - mean;
    let z = chol.l().solve_lower_triangular(&diff).ok_or(Error::SingularCovariance)?;
    let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    Ok(-0.5 * (mean.len() as f64 * LN_2PI + log_det + z.norm_squared()))
}

/// A square root `L` with `L Lᵀ = cov`, falling back to the symmetric
/// eigendecomposition for singular positive semidefinite matrices.
pub fn covariance_sqrt(cov: &DMatrix<f64>) -> DMatrix<f64> {
    if cov.nrows() == 1 {
        return DMatrix::from_element(1, 1, cov[(0, 0)].max(0.0).sqrt());
    }
    if let Some(chol) = cov.clone().cholesky() {
        return chol.l();
    }
    let eig = cov.clone().symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals)
}

/// Draws a standard normal vector of dimension `n`.
pub fn standard_normal_vector<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// `N(mean, cov)` in `d` dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl Gaussian {
    /// Builds a Gaussian after symmetrizing `cov` and checking that it is
    /// positive semidefinite.
    pub fn new(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Result<Self> {
        if cov.nrows() != mean.len() || cov.ncols() != mean.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), found: cov.nrows() });
        }
        symmetrize(&mut cov);
        check_psd(&cov)?;
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    /// Symmetrizes but skips the eigenvalue check. For covariances produced
    /// by formulas that preserve semidefiniteness analytically.
    pub(crate) fn from_formula(mean: DVector<f64>, mut cov: DMatrix<f64>) -> Self {
        symmetrize(&mut cov);
        Self { mean, cov }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        log_normal_pdf(x, &self.mean, &self.cov)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        if self.dim() == 1 {
            let z: f64 = rng.sample(StandardNormal);
            return DVector::from_element(1, self.mean[0] + self.cov[(0, 0)].max(0.0).sqrt() * z);
        }
        let z = standard_normal_vector(self.dim(), rng);
        &self.mean + covariance_sqrt(&self.cov) * z
    }

    /// True when every off-diagonal entry is negligible relative to the
    /// corresponding diagonal entries.
    pub fn is_diagonal(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            (0..n).filter(|&j| j != i).all(|j| {
                let scale = (self.cov[(i, i)] * self.cov[(j, j)]).abs().sqrt();
                self.cov[(i, j)].abs() <= DIAGONAL_TOL * scale.max(f64::MIN_POSITIVE)
            })
        })
    }
}

/// Joint Gaussian over `(x, y)` stored by blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGaussian {
    pub mean_x: DVector<f64>,
    pub mean_y: DVector<f64>,
    pub cov_xx: DMatrix<f64>,
    pub cov_xy: DMatrix<f64>,
    pub cov_yy: DMatrix<f64>,
}

impl JointGaussian {
    pub fn new(
        mean_x: DVector<f64>,
        mean_y: DVector<f64>,
        cov_xx: DMatrix<f64>,
        cov_xy: DMatrix<f64>,
        cov_yy: DMatrix<f64>,
    ) -> Result<Self> {
        let (n, m) = (mean_x.len(), mean_y.len());
        if cov_xx.shape() != (n, n) {
            return Err(Error::DimensionMismatch { expected: n, found: cov_xx.nrows() });
        }
        if cov_xy.shape() != (n, m) {
            return Err(Error::DimensionMismatch { expected: m, found: cov_xy.ncols() });
        }
        if cov_yy.shape() != (m, m) {
            return Err(Error::DimensionMismatch { expected: m, found: cov_yy.nrows() });
        }
        let joint = Self::from_blocks(mean_x, mean_y, cov_xx, cov_xy, cov_yy);
        check_psd(&joint.assembled_cov())?;
        Ok(joint)
    }

    pub(crate) fn from_blocks(
        mean_x: DVector<f64>,
        mean_y: DVector<f64>,
        mut cov_xx: DMatrix<f64>,
        cov_xy: DMatrix<f64>,
        mut cov_yy: DMatrix<f64>,
    ) -> Self {
        symmetrize(&mut cov_xx);
        symmetrize(&mut cov_yy);
        Self { mean_x, mean_y, cov_xx, cov_xy, cov_yy }
    }

    pub fn x_dim(&self) -> usize {
        self.mean_x.len()
    }

    pub fn y_dim(&self) -> usize {
        self.mean_y.len()
    }

    /// The full `(n+m)×(n+m)` covariance.
    pub fn assembled_cov(&self) -> DMatrix<f64> {
        let (n, m) = (self.x_dim(), self.y_dim());
        let mut full = DMatrix::zeros(n + m, n + m);
        full.view_mut((0, 0), (n, n)).copy_from(&self.cov_xx);
        full.view_mut((0, n), (n, m)).copy_from(&self.cov_xy);
        full.view_mut((n, 0), (m, n)).copy_from(&self.cov_xy.transpose());
        full.view_mut((n, n), (m, m)).copy_from(&self.cov_yy);
        full
    }

    pub fn assembled_mean(&self) -> DVector<f64> {
        let mut mean = DVector::zeros(self.x_dim() + self.y_dim());
        mean.rows_mut(0, self.x_dim()).copy_from(&self.mean_x);
        mean.rows_mut(self.x_dim(), self.y_dim()).copy_from(&self.mean_y);
        mean
    }

    pub fn marginal_x(&self) -> Gaussian {
        Gaussian::from_formula(self.mean_x.clone(), self.cov_xx.clone())
    }

    pub fn marginal_y(&self) -> Gaussian {
        Gaussian::from_formula(self.mean_y.clone(), self.cov_yy.clone())
    }

    /// The same joint with `extra` added to the `y` block covariance, i.e. the
    /// joint of `x` and `y + e` for independent `e ~ N(0, extra)`.
    pub fn with_added_y_cov(&self, extra: &DMatrix<f64>) -> Self {
        Self {
            mean_x: self.mean_x.clone(),
            mean_y: self.mean_y.clone(),
            cov_xx: self.cov_xx.clone(),
            cov_xy: self.cov_xy.clone(),
            cov_yy: &self.cov_yy + extra,
        }
    }

    /// `p(x | y)`: mean `μx + Σxy Σyy⁻¹ (y − μy)`, covariance
    /// `Σxx − Σxy Σyy⁻¹ Σxyᵀ`.
    pub fn condition(&self, y: &DVector<f64>) -> Result<Gaussian> {
        if y.len() != self.y_dim() {
            return Err(Error::DimensionMismatch { expected: self.y_dim(), found: y.len() });
        }
        let inv_yy = inverse(&self.cov_yy)?;
        let gain = &self.cov_xy * inv_yy;
        let mean = &self.mean_x + &gain * (y - &self.mean_y);
        let cov = &self.cov_xx - &gain * self.cov_xy.transpose();
        Ok(Gaussian::from_formula(mean, cov))
    }
}

/// Product of two Gaussian densities:
/// `N(x|μ₁,Σ₁) N(x|μ₂,Σ₂) = N(μ₁|μ₂,Σ₁+Σ₂) · N(x|μ₃,Σ₃)` with
/// `Σ₃ = (Σ₁⁻¹+Σ₂⁻¹)⁻¹` and `μ₃ = Σ₃(Σ₁⁻¹μ₁ + Σ₂⁻¹μ₂)`.
///
/// Computed through `S = Σ₁+Σ₂` only, so either factor may be singular.
/// Returns `(log N(μ₁|μ₂,S), N(μ₃,Σ₃))`.
pub fn product(a: &Gaussian, b: &Gaussian) -> Result<(f64, Gaussian)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), found: b.dim() });
    }
    let sum = &a.cov + &b.cov;
    let inv_sum = inverse(&sum)?;
    let log_scale = log_normal_pdf(&a.mean, &b.mean, &sum)?;
    let cov = &a.cov * &inv_sum * &b.cov;
    let mean = &b.cov * &inv_sum * &a.mean + &a.cov * &inv_sum * &b.mean;
    Ok((log_scale, Gaussian::from_formula(mean, cov)))
}

/// Axis-aligned box `{y : lower ≤ y ≤ upper}`; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), found: upper.len() });
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if l.is_nan() || u.is_nan() || l > u {
                return Err(Error::InvalidBox(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn interval(lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower], vec![upper])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Membership with the boundary counted as inside.
    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y.iter().zip(self.lower.iter().zip(&self.upper)).all(|(v, (l, u))| *l <= *v && *v <= *u)
    }

    pub fn contains_box(&self, other: &BoxSet) -> bool {
        other.dim() == self.dim()
            && (0..self.dim()).all(|i| self.lower[i] <= other.lower[i] && other.upper[i] <= self.upper[i])
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u + l)).collect()
    }
}

/// Per-axis `(log P(inside), log P(outside))` for `N(mean, var)` on `[lower, upper]`.
fn axis_log_probabilities(mean: f64, var: f64, lower: f64, upper: f64) -> (f64, f64) {
    if var <= 0.0 {
        return if lower <= mean && mean <= upper {
            (0.0, f64::NEG_INFINITY)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
    }
    let sd = var.sqrt();
    let a = (lower - mean) / sd;
    let b = (upper - mean) / sd;
    let below = stats::std_normal_cdf(a);
    let above = stats::std_normal_sf(b);
    let inside = if a > 0.0 {
        stats::std_normal_sf(a) - above
    } else if b < 0.0 {
        stats::std_normal_cdf(b) - below
    } else {
        1.0 - below - above
    };
    (inside.max(0.0).ln(), (below + above).min(1.0).ln())
}

/// `(log P(y ∈ h), log P(y ∉ h))` for `y ~ g` with diagonal covariance.
pub fn log_box_probabilities(g: &Gaussian, h: &BoxSet) -> Result<(f64, f64)> {
    if g.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: g.dim(), found: h.dim() });
    }
    if !g.is_diagonal() {
        return Err(Error::NonDiagonalCovariance);
    }
    Ok(diagonal_log_box_probabilities(g.mean.as_slice(), g.cov.diagonal().as_slice(), h))
}

/// Same as [`log_box_probabilities`] for an explicit diagonal covariance.
pub(crate) fn diagonal_log_box_probabilities(mean: &[f64], var: &[f64], h: &BoxSet) -> (f64, f64) {
    if mean.len() == 1 {
        return axis_log_probabilities(mean[0], var[0], h.lower[0], h.upper[0]);
    }
    let log_inside: f64 = (0..mean.len())
        .map(|i| axis_log_probabilities(mean[i], var[i], h.lower[i], h.upper[i]).0)
        .sum();
    (log_inside, stats::log1m_exp(log_inside))
}

/// `P(y ∈ h)` for `y ~ g`; only diagonal covariances are accepted.
pub fn box_probability(g: &Gaussian, h: &BoxSet) -> Result<f64> {
    Ok(log_box_probabilities(g, h)?.0.exp())
}

/// Weighted mixture `Σ αⱼ N(zⱼ, Vⱼ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Vec<f64>,
    components: Vec<Gaussian>,
}

impl GaussianMixture {
    pub fn new(weights: Vec<f64>, components: Vec<Gaussian>) -> Result<Self> {
        if weights.len() != components.len() || weights.is_empty() {
            return Err(Error::InvalidWeights);
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights);
        }
        let d = components[0].dim();
        if let Some(c) = components.iter().find(|c| c.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: c.dim() });
        }
        Ok(Self { weights, components })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn log_pdf(&self, x: &DVector<f64>) -> Result<f64> {
        let terms = self
            .weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| Ok(w.ln() + c.log_pdf(x)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(stats::log_sum_exp(&terms))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.len() - 1;
        for (j, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = j;
                break;
            }
        }
        self.components[pick].sample(rng)
    }
}

/// Approximates the uniform density on `h` by `D^m` Gaussians placed at the
/// per-axis cell midpoints of a `D`-cell partition, with uniform weights and
/// covariance `variance_scale · I`.
pub fn mixture_from_box(h: &BoxSet, d: usize, variance_scale: f64) -> Result<GaussianMixture> {
    if !(variance_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("variance_scale must be > 0, got {variance_scale}")));
    }
    mixture_from_box_with_variances(h, d, &vec![variance_scale; h.dim()])
}

/// [`mixture_from_box`] with per-axis variance `half_width / D`.
pub fn mixture_from_box_default(h: &BoxSet, d: usize) -> Result<GaussianMixture> {
    let variances: Vec<f64> = h.half_widths().iter().map(|w| w / d.max(1) as f64).collect();
    mixture_from_box_with_variances(h, d, &variances)
}

fn mixture_from_box_with_variances(h: &BoxSet, d: usize, variances: &[f64]) -> Result<GaussianMixture> {
    if d == 0 {
        return Err(Error::InvalidParameter("mixture size D must be at least 1".into()));
    }
    let m = h.dim();
    let count = d.checked_pow(m as u32).ok_or_else(|| Error::InvalidParameter("D^m overflows".into()))?;
    let weight = 1.0 / count as f64;
    let cov = DMatrix::from_diagonal(&DVector::from_column_slice(variances));
    let mut components = Vec::with_capacity(count);
    for flat in 0..count {
        let mut rem = flat;
        let mean = DVector::from_fn(m, |axis, _| {
            let cell = rem % d;
            rem /= d;
            let (l, u) = (h.lower[axis], h.upper[axis]);
            l + (cell as f64 + 0.5) * (u - l) / d as f64
        });
        components.push(Gaussian::from_formula(mean, cov.clone()));
    }
    Ok(GaussianMixture { weights: vec![weight; count], components })
}
