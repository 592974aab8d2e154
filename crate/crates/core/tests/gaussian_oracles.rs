//! Gaussian algebra checked against pointwise, quadrature and sampling oracles.

use eventpf::gaussian::{box_probability, log_normal_pdf, mixture_from_box, product};
use eventpf::{BoxSet, Gaussian, JointGaussian};
use nalgebra::{dmatrix, dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    &a * a.transpose() + DMatrix::identity(n, n) * 0.5
}

fn random_joint(n: usize, m: usize, rng: &mut ChaCha8Rng) -> JointGaussian {
    let full = random_spd(n + m, rng);
    let mean = DVector::from_fn(n + m, |_, _| rng.random_range(-2.0..2.0));
    JointGaussian::new(
        mean.rows(0, n).into(),
        mean.rows(n, m).into(),
        full.view((0, 0), (n, n)).into(),
        full.view((0, n), (n, m)).into(),
        full.view((n, n), (m, m)).into(),
    )
    .unwrap()
}

/// Composite Simpson rule with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn conditioning_hand_example() {
    let joint = JointGaussian::new(dvector![0.0], dvector![0.0], dmatrix![1.0], dmatrix![0.5], dmatrix![1.0]).unwrap();
    let g = joint.condition(&dvector![1.0]).unwrap();
    assert!((g.mean()[0] - 0.5).abs() < 1e-14);
    assert!((g.cov()[(0, 0)] - 0.75).abs() < 1e-14);
}

#[test]
fn conditioning_on_independent_block_is_the_marginal() {
    let joint = JointGaussian::new(
        dvector![1.0, -2.0],
        dvector![3.0],
        dmatrix![2.0, 0.3; 0.3, 1.0],
        DMatrix::zeros(2, 1),
        dmatrix![4.0],
    )
    .unwrap();
    let g = joint.condition(&dvector![-7.0]).unwrap();
    assert_eq!(g.mean(), &dvector![1.0, -2.0]);
    assert!((g.cov() - dmatrix![2.0, 0.3; 0.3, 1.0]).abs().max() < 1e-14);
}

#[test]
fn conditional_density_is_joint_over_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..20 {
        let joint = random_joint(3, 2, &mut rng);
        let full = Gaussian::new(joint.assembled_mean(), joint.assembled_cov()).unwrap();
        let y = DVector::from_fn(2, |_, _| rng.random_range(-3.0..3.0));
        let cond = joint.condition(&y).unwrap();
        for _ in 0..5 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-3.0..3.0));
            let xy = DVector::from_iterator(5, x.iter().chain(y.iter()).copied());
            let expected = full.log_pdf(&xy).unwrap() - joint.marginal_y().log_pdf(&y).unwrap();
            let got = cond.log_pdf(&x).unwrap();
            assert!((got - expected).abs() < 1e-9 * expected.abs().max(1.0), "{got} vs {expected}");
        }
    }
}

#[test]
fn conditional_moments_match_importance_weighted_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let joint = random_joint(3, 2, &mut rng);
    let y = &joint.mean_y + DVector::from_element(2, 0.3);
    let cond = joint.condition(&y).unwrap();
    // x ~ p(x), weighted by p(y | x) written out from the block formulas.
    let px = joint.marginal_x();
    let inv_xx = joint.cov_xx.clone().try_inverse().unwrap();
    let gain = joint.cov_xy.transpose() * &inv_xx;
    let cov_y_given_x = &joint.cov_yy - &gain * &joint.cov_xy;
    let n = 1_000_000;
    let samples: Vec<DVector<f64>> = (0..n).map(|_| px.sample(&mut rng)).collect();
    let logw: Vec<f64> = samples
        .iter()
        .map(|x| log_normal_pdf(&y, &(&joint.mean_y + &gain * (x - &joint.mean_x)), &cov_y_given_x).unwrap())
        .collect();
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = w.iter().sum();
    let ess = total * total / w.iter().map(|v| v * v).sum::<f64>();
    for i in 0..3 {
        let mean: f64 = samples.iter().zip(&w).map(|(x, w)| w * x[i]).sum::<f64>() / total;
        let sd = cond.cov()[(i, i)].sqrt();
        assert!((mean - cond.mean()[i]).abs() < 4.0 * sd / ess.sqrt(), "axis {i}: {mean} vs {}", cond.mean()[i]);
        let var: f64 = samples.iter().zip(&w).map(|(x, w)| w * (x[i] - mean).powi(2)).sum::<f64>() / total;
        assert!((var / cond.cov()[(i, i)] - 1.0).abs() < 6.0 * (2.0 / ess).sqrt(), "axis {i}: {var} vs {}", cond.cov()[(i, i)]);
    }
}

#[test]
fn conditional_mean_averages_to_prior_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let joint = random_joint(2, 1, &mut rng);
    let py = joint.marginal_y();
    let n = 20_000;
    let mut acc = DVector::zeros(2);
    for _ in 0..n {
        acc += joint.condition(&py.sample(&mut rng)).unwrap().mean();
    }
    acc /= n as f64;
    let explained = &joint.cov_xy * joint.cov_yy.clone().try_inverse().unwrap() * joint.cov_xy.transpose();
    for i in 0..2 {
        let se = (explained[(i, i)] / n as f64).sqrt();
        assert!((acc[i] - joint.mean_x[i]).abs() < 3.0 * se + 1e-12);
    }
}

#[test]
fn product_symmetric_case() {
    let a = Gaussian::scalar(0.0, 1.0).unwrap();
    let (log_scale, g) = product(&a, &a).unwrap();
    assert!((g.cov()[(0, 0)] - 0.5).abs() < 1e-15);
    assert!(g.mean()[0].abs() < 1e-15);
    let expected = -0.5 * (2.0 * std::f64::consts::PI * 2.0).ln();
    assert!((log_scale - expected).abs() < 1e-14);
}

#[test]
fn product_matches_pointwise_product_of_densities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for dim in [1, 2, 3] {
        let a = Gaussian::new(DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)), random_spd(dim, &mut rng)).unwrap();
        let b = Gaussian::new(DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)), random_spd(dim, &mut rng)).unwrap();
        let (log_scale, c) = product(&a, &b).unwrap();
        let (log_scale_ba, c_ba) = product(&b, &a).unwrap();
        assert!((log_scale - log_scale_ba).abs() < 1e-12);
        assert!((c.mean() - c_ba.mean()).abs().max() < 1e-12);
        assert!((c.cov() - c_ba.cov()).abs().max() < 1e-12);
        for _ in 0..100 {
            let x = DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0));
            let lhs = a.log_pdf(&x).unwrap() + b.log_pdf(&x).unwrap();
            let rhs = log_scale + c.log_pdf(&x).unwrap();
            // Relative error of the density values.
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} vs {rhs}");
        }
    }
}

#[test]
fn product_scale_is_the_overlap_integral() {
    for (m1, v1, m2, v2) in [(0.0, 1.0, 2.0, 3.0), (-1.5, 0.2, 1.0, 0.7), (4.0, 10.0, -3.0, 0.05)] {
        let a = Gaussian::scalar(m1, v1).unwrap();
        let b = Gaussian::scalar(m2, v2).unwrap();
        let (log_scale, _) = product(&a, &b).unwrap();
        let f = |x: f64| (a.log_pdf(&dvector![x]).unwrap() + b.log_pdf(&dvector![x]).unwrap()).exp();
        let integral = simpson(f, -40.0, 40.0, 200_000);
        assert!((integral / log_scale.exp() - 1.0).abs() < 1e-8, "{integral} vs {}", log_scale.exp());
    }
}

#[test]
fn box_probability_examples() {
    let g = Gaussian::scalar(0.0, 1.0).unwrap();
    assert_eq!(box_probability(&g, &BoxSet::interval(-1e9, 1e9).unwrap()).unwrap(), 1.0);
    assert!((box_probability(&g, &BoxSet::interval(-1.96, 1.96).unwrap()).unwrap() - 0.95).abs() < 1e-3);
    let narrow = Gaussian::scalar(0.0, 0.1).unwrap();
    assert_eq!(box_probability(&narrow, &BoxSet::interval(0.0, 0.0).unwrap()).unwrap(), 0.0);
}

#[test]
fn box_probability_matches_quadrature_and_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let g = Gaussian::new(dvector![0.5, -1.0], dmatrix![2.0, 0.0; 0.0, 0.5]).unwrap();
    let h = BoxSet::new(vec![-1.0, -1.5], vec![1.0, 0.0]).unwrap();
    let p = box_probability(&g, &h).unwrap();
    let axis = |m: f64, v: f64, lo: f64, hi: f64| {
        simpson(|x| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt(), lo, hi, 20_000)
    };
    let quad = axis(0.5, 2.0, -1.0, 1.0) * axis(-1.0, 0.5, -1.5, 0.0);
    assert!((p - quad).abs() < 1e-10);
    let n = 200_000;
    let hits = (0..n).filter(|_| h.contains(g.sample(&mut rng).as_slice())).count() as f64;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!((hits / n as f64 - p).abs() < 4.0 * se);
}

#[test]
fn mixture_grid_examples() {
    let single = mixture_from_box(&BoxSet::interval(-1.0, 1.0).unwrap(), 1, 1.0).unwrap();
    assert_eq!(single.len(), 1);
    assert_eq!(single.components()[0].mean()[0], 0.0);
    assert_eq!(single.weights(), &[1.0]);

    let h = BoxSet::interval(-2.5, 2.5).unwrap();
    let mix = mixture_from_box(&h, 3, 2.5 / 3.0).unwrap();
    let means: Vec<f64> = mix.components().iter().map(|g| g.mean()[0]).collect();
    for (got, want) in means.iter().zip([-5.0 / 3.0, 0.0, 5.0 / 3.0]) {
        assert!((got - want).abs() < 1e-12);
    }
    for (w, g) in mix.weights().iter().zip(mix.components()) {
        assert!((w - 1.0 / 3.0).abs() < 1e-15);
        assert!((g.cov()[(0, 0)] - 2.5 / 3.0).abs() < 1e-15);
    }

    let grid = mixture_from_box(&BoxSet::new(vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap(), 2, 0.1).unwrap();
    assert_eq!(grid.len(), 4);
    let mut centers: Vec<(f64, f64)> = grid.components().iter().map(|g| (g.mean()[0], g.mean()[1])).collect();
    centers.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(centers, vec![(-0.5, -0.5), (-0.5, 0.5), (0.5, -0.5), (0.5, 0.5)]);
    assert!((grid.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
}
