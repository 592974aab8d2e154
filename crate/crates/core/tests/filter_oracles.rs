//! Filters, evaluators and trigger-probability estimates against independent
//! references: binomial bands, the Kalman filter and closed-form integrals.

use eventpf::filter::{self, cross_entropy, kde_bandwidth, posterior_log_density, resample_categorical, Mask, KDE_MIN_BANDWIDTH};
use eventpf::horizon::estimate_step_probability;
use eventpf::model::simulate;
use eventpf::oracle::kalman_filter;
use eventpf::rng::{stream_rng, Stream, StepStreams};
use eventpf::trigger::ibt_center;
use eventpf::{
    BenchmarkSystem, BoxSet, FilterKind, HybridMeasurement, LikelihoodEvaluator, LikelihoodKind, LinearGaussian, ParticleSet,
    StateSpaceModel,
};
use nalgebra::{dvector, DVector};
use rand::Rng;
use statrs::distribution::{ContinuousCDF, Normal};

fn phi(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// `y = x + v`, `v ~ N(0, 1)`: the measurement mean is zero at `x = 0`.
fn unit_noise_system() -> LinearGaussian {
    LinearGaussian::scalar(1.0, 1.0, 1.0, 1.0, 0.0, 1.0).unwrap()
}

#[test]
fn resampling_point_mass() {
    let mut lw = vec![f64::NEG_INFINITY; 6];
    lw[3] = 0.0;
    let mut rng = stream_rng(1, Stream::Oracle, 0);
    assert!(resample_categorical(&lw, 1000, &mut rng).iter().all(|&a| a == 3));
}

#[test]
fn resampling_uniform_frequencies_within_multinomial_bands() {
    let n = 100_000;
    let k = 10;
    let lw = vec![-(k as f64).ln(); k];
    let mut rng = stream_rng(2, Stream::Oracle, 0);
    let mut counts = vec![0usize; k];
    for a in resample_categorical(&lw, n, &mut rng) {
        counts[a] += 1;
    }
    let p = 1.0 / k as f64;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for c in counts {
        assert!((c as f64 - n as f64 * p).abs() < 3.0 * sd, "{c}");
    }
}

#[test]
fn resampling_two_weights_ratio() {
    let n = 100_000;
    let lw = vec![0.25f64.ln(), 0.75f64.ln()];
    let mut rng = stream_rng(3, Stream::Oracle, 0);
    let ones = resample_categorical(&lw, n, &mut rng).iter().filter(|&&a| a == 1).count() as f64;
    let sd = (n as f64 * 0.25 * 0.75).sqrt();
    assert!((ones - 0.75 * n as f64).abs() < 3.0 * sd);
}

#[test]
fn analytic_evaluator_examples() {
    let model = unit_noise_system();
    let ev = LikelihoodEvaluator::analytic();
    let mut rng = stream_rng(0, Stream::Oracle, 0);
    let x = dvector![0.0];
    let full = HybridMeasurement::NoEvent(BoxSet::interval(-1e9, 1e9).unwrap());
    assert_eq!(ev.log_likelihood(&model, &full, &x, 1, &mut rng).unwrap(), 0.0);
    let h = BoxSet::interval(-1.96, 1.96).unwrap();
    let inside = ev.log_likelihood(&model, &HybridMeasurement::NoEvent(h.clone()), &x, 1, &mut rng).unwrap();
    let exact = phi(1.96) - phi(-1.96);
    assert!((inside - 0.95f64.ln()).abs() < 1e-3);
    assert!((inside - exact.ln()).abs() < 1e-12);
    let outside = ev.log_complement(&model, &h, &x, 1, &mut rng).unwrap();
    assert!((outside / 0.05f64.ln() - 1.0).abs() < 2e-2);
    assert_eq!(ev.log_complement(&model, &BoxSet::interval(-1e9, 1e9).unwrap(), &x, 1, &mut rng).unwrap(), f64::NEG_INFINITY);
    assert_eq!(ev.log_complement(&model, &BoxSet::interval(0.3, 0.3).unwrap(), &x, 1, &mut rng).unwrap(), 0.0);

    let y = dvector![0.4];
    let event = ev.log_likelihood(&model, &HybridMeasurement::Event(y), &x, 1, &mut rng).unwrap();
    assert!((event - (-0.5 * (2.0 * std::f64::consts::PI).ln() - 0.08)).abs() < 1e-12);
}

#[test]
fn mixture_evaluator_is_close_to_analytic() {
    let model = unit_noise_system();
    let mut rng = stream_rng(0, Stream::Oracle, 0);
    let meas = HybridMeasurement::NoEvent(BoxSet::interval(-1.96, 1.96).unwrap());
    let analytic = LikelihoodEvaluator::analytic().log_likelihood(&model, &meas, &dvector![0.0], 1, &mut rng).unwrap();
    let mix = LikelihoodEvaluator::new(LikelihoodKind::Mixture { d: 3, variance_scale: None }).unwrap();
    let approx = mix.log_likelihood(&model, &meas, &dvector![0.0], 1, &mut rng).unwrap();
    assert!((approx - analytic).abs() < 0.1, "{approx} vs {analytic}");
}

#[test]
fn mixture_error_shrinks_with_grid_size() {
    let model = BenchmarkSystem::new();
    let mut rng = stream_rng(0, Stream::Oracle, 0);
    let analytic = LikelihoodEvaluator::analytic();
    // IBT-style boxes around a few predicted measurements, with particles
    // spread over the state range.
    let mut grid = Vec::new();
    for delta in [2.5, 7.5] {
        for center in [0.5, 2.0, 5.0] {
            for i in -16..=16 {
                grid.push((i as f64 * 0.5, BoxSet::interval(center - delta, center + delta).unwrap()));
            }
        }
    }
    let mut previous = f64::INFINITY;
    for d in [1, 3, 9, 27] {
        let ev = LikelihoodEvaluator::new(LikelihoodKind::Mixture { d, variance_scale: None }).unwrap();
        let worst = grid
            .iter()
            .map(|(x, h)| {
                let (a, _) = analytic.log_probabilities(&model, h, &dvector![*x], 1, &mut rng).unwrap();
                let (m, _) = ev.log_probabilities(&model, h, &dvector![*x], 1, &mut rng).unwrap();
                (a - m).abs()
            })
            .fold(0.0, f64::max);
        assert!(worst <= previous, "D={d}: {worst} > {previous}");
        previous = worst;
    }
}

#[test]
fn monte_carlo_evaluator_examples_and_unbiasedness() {
    let model = unit_noise_system();
    let mut rng = stream_rng(4, Stream::Oracle, 0);
    let x = dvector![0.0];
    let full = HybridMeasurement::NoEvent(BoxSet::interval(-1e9, 1e9).unwrap());
    let mc5 = LikelihoodEvaluator::monte_carlo(5).unwrap();
    assert_eq!(mc5.log_likelihood(&model, &full, &x, 1, &mut rng).unwrap(), 0.0);

    let h = BoxSet::interval(-0.3, 1.2).unwrap();
    let meas = HybridMeasurement::NoEvent(h);
    let p = phi(1.2) - phi(-0.3);
    let mc = LikelihoodEvaluator::monte_carlo(1).unwrap();
    let n = 10_000;
    let mut total = 0.0;
    for _ in 0..n {
        let l = mc.log_likelihood(&model, &meas, &x, 1, &mut rng).unwrap();
        assert!(l == 0.0 || l == f64::NEG_INFINITY);
        total += l.exp();
    }
    let sd = (p * (1.0 - p) / n as f64).sqrt();
    assert!((total / n as f64 - p).abs() < 3.0 * sd);
}

#[test]
fn evaluators_reject_invalid_parameters() {
    assert!(LikelihoodEvaluator::new(LikelihoodKind::Mixture { d: 0, variance_scale: None }).is_err());
    assert!(LikelihoodEvaluator::new(LikelihoodKind::MonteCarlo { m: 0 }).is_err());
}

#[test]
fn step_probability_examples() {
    let model = unit_noise_system();
    let ev = LikelihoodEvaluator::analytic();
    let mut rng = stream_rng(0, Stream::Oracle, 0);
    let one = ParticleSet::uniform(vec![dvector![0.0]], 1).unwrap();
    let p = estimate_step_probability(&one, &BoxSet::interval(-1.96, 1.96).unwrap(), &model, &ev, &mut rng).unwrap();
    assert!((p - 0.05).abs() < 1e-3);
    let full = BoxSet::interval(-1e9, 1e9).unwrap();
    assert_eq!(estimate_step_probability(&one, &full, &model, &ev, &mut rng).unwrap(), 0.0);
    let point = BoxSet::interval(0.2, 0.2).unwrap();
    assert_eq!(estimate_step_probability(&one, &point, &model, &ev, &mut rng).unwrap(), 1.0);
}

#[test]
fn ibt_center_examples() {
    let bench = BenchmarkSystem::new();
    let two = ParticleSet::uniform(vec![dvector![-2.0], dvector![2.0]], 1).unwrap();
    assert!((ibt_center(&two, &bench, 1).unwrap()[0] - 0.2).abs() < 1e-15);

    // Secondary set from a Gaussian posterior: centre and mean approach the
    // Kalman one-step predictions.
    let lg = LinearGaussian::scalar(0.8, 2.0, 0.5, 0.3, 0.0, 1.0).unwrap();
    let n = 100_000;
    let mut rng = stream_rng(5, Stream::Oracle, 0);
    let posterior = ParticleSet::from_prior(&lg, n, &mut rng).unwrap();
    let secondary = filter::propagate_secondary(&posterior, &lg, n, &mut rng).unwrap();
    let (pred_mean, pred_var) = (0.0, 0.8 * 0.8 + 0.5);
    let se = (pred_var / n as f64).sqrt();
    assert!((secondary.mean()[0] - pred_mean).abs() < 3.0 * se);
    assert!((ibt_center(&secondary, &lg, 1).unwrap()[0] - 2.0 * pred_mean).abs() < 3.0 * 2.0 * se);
}

#[test]
fn event_bpf_tracks_the_kalman_filter() {
    let model = LinearGaussian::scalar(0.9, 1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let steps = 100;
    let n = 10_000;
    let truth = simulate(&model, steps, 6).unwrap();
    let kf = kalman_filter(&model, &truth.measurements).unwrap();
    let mut ps = ParticleSet::from_prior(&model, n, &mut stream_rng(6, Stream::Init, 0)).unwrap();
    let mut sq = 0.0;
    for (k, y) in truth.measurements.iter().enumerate() {
        let mut streams = StepStreams::new(6, k as u64 + 1);
        let ev = LikelihoodEvaluator::analytic();
        ps = filter::step(&FilterKind::Bpf, &ps, &HybridMeasurement::Event(y.clone()), &model, &ev, &mut streams).unwrap().set;
        sq += ((ps.mean()[0] - kf.means[k][0]) / kf.covariances[k][(0, 0)].sqrt()).powi(2);
    }
    let rms = (sq / steps as f64).sqrt();
    assert!(rms < 5.0 / (n as f64).sqrt(), "{rms}");
}

#[test]
fn fully_adapted_filter_on_linear_system_has_flat_event_weights() {
    let model = LinearGaussian::scalar(0.9, 1.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let truth = simulate(&model, 20, 7).unwrap();
    let mut ps = ParticleSet::from_prior(&model, 500, &mut stream_rng(7, Stream::Init, 0)).unwrap();
    let kind = FilterKind::ApfFa { d: 3, variance_scale: None };
    for (k, y) in truth.measurements.iter().enumerate() {
        let mut streams = StepStreams::new(7, k as u64 + 1);
        let out = filter::step(&kind, &ps, &HybridMeasurement::Event(y.clone()), &model, &LikelihoodEvaluator::analytic(), &mut streams).unwrap();
        let lw = out.set.log_weights();
        let mean = lw.iter().sum::<f64>() / lw.len() as f64;
        let var = lw.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / lw.len() as f64;
        assert!(var <= 1e-8, "step {}: {var}", k + 1);
        ps = out.set;
    }
}

#[test]
fn full_support_no_event_leaves_weights_uniform() {
    let model = BenchmarkSystem::new();
    let full = HybridMeasurement::NoEvent(BoxSet::interval(-1e9, 1e9).unwrap());
    let ps = ParticleSet::from_prior(&model, 300, &mut stream_rng(8, Stream::Init, 0)).unwrap();
    for ev in [LikelihoodEvaluator::analytic(), LikelihoodEvaluator::monte_carlo(1).unwrap()] {
        let mut streams = StepStreams::new(8, 1);
        let out = filter::step(&FilterKind::Bpf, &ps, &full, &model, &ev, &mut streams).unwrap();
        let uniform = -(300f64).ln();
        assert!(out.set.log_weights().iter().all(|w| (w - uniform).abs() < 1e-10));
        assert!(!out.degenerate);
    }
}

#[test]
fn all_rejected_step_falls_back_to_uniform_and_is_flagged() {
    let model = BenchmarkSystem::new();
    // y = x²/20 + v cannot be this negative.
    let impossible = HybridMeasurement::NoEvent(BoxSet::interval(-1e6, -1e5).unwrap());
    let ps = ParticleSet::from_prior(&model, 50, &mut stream_rng(9, Stream::Init, 0)).unwrap();
    let mut streams = StepStreams::new(9, 1);
    let out = filter::step(&FilterKind::Bpf, &ps, &impossible, &model, &LikelihoodEvaluator::monte_carlo(1).unwrap(), &mut streams).unwrap();
    assert!(out.degenerate);
    assert!((out.set.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(out.set.log_weights().iter().all(|w| (w + (50f64).ln()).abs() < 1e-12));
}

#[test]
fn filters_are_deterministic_given_streams() {
    let model = BenchmarkSystem::new();
    let ps = ParticleSet::from_prior(&model, 100, &mut stream_rng(10, Stream::Init, 0)).unwrap();
    let meas = HybridMeasurement::NoEvent(BoxSet::interval(0.0, 5.0).unwrap());
    for kind in [FilterKind::Bpf, FilterKind::ApfFa { d: 3, variance_scale: None }] {
        let a = filter::step(&kind, &ps, &meas, &model, &LikelihoodEvaluator::monte_carlo(1).unwrap(), &mut StepStreams::new(1, 1)).unwrap();
        let b = filter::step(&kind, &ps, &meas, &model, &LikelihoodEvaluator::monte_carlo(1).unwrap(), &mut StepStreams::new(1, 1)).unwrap();
        assert_eq!(a.set, b.set);
    }
}

#[test]
fn kde_of_gaussian_cloud_is_the_smoothed_density() {
    // Particles drawn from N(0, 1); the kernel estimate converges to the
    // convolution N(0, 1 + h²).
    let n = 20_000;
    let mut rng = stream_rng(11, Stream::Oracle, 0);
    let particles: Vec<DVector<f64>> = (0..n).map(|_| dvector![rng.sample::<f64, _>(rand_distr::StandardNormal)]).collect();
    let ps = ParticleSet::uniform(particles, 0).unwrap();
    let h = kde_bandwidth(&ps)[0];
    let expected_h = 1.06 * ps.std()[0] * (n as f64).powf(-0.2);
    assert!((h - expected_h).abs() < 1e-15);
    for x in [-2.0, -0.5, 0.0, 1.0, 2.5] {
        let v = 1.0 + h * h;
        let exact = -0.5 * (2.0 * std::f64::consts::PI * v).ln() - x * x / (2.0 * v);
        let got = posterior_log_density(&ps, &dvector![x]);
        assert!((got - exact).abs() < 0.05, "x={x}: {got} vs {exact}");
    }
}

#[test]
fn kde_bandwidth_floor_applies_to_collapsed_clouds() {
    let ps = ParticleSet::uniform(vec![dvector![1.0]; 10], 0).unwrap();
    assert_eq!(kde_bandwidth(&ps), vec![KDE_MIN_BANDWIDTH]);
    let at_center = posterior_log_density(&ps, &dvector![1.0]);
    let expected = -0.5 * (2.0 * std::f64::consts::PI * KDE_MIN_BANDWIDTH * KDE_MIN_BANDWIDTH).ln();
    assert!((at_center - expected).abs() < 1e-9);
}

#[test]
fn cross_entropy_masks() {
    let logs = [-1.0, -2.0, -3.0, -4.0];
    let gammas = [1, 0, 0, 1];
    assert_eq!(cross_entropy(&logs, &gammas, Mask::All).unwrap(), 2.5);
    assert_eq!(cross_entropy(&logs, &gammas, Mask::Events).unwrap(), 2.5);
    assert_eq!(cross_entropy(&logs, &gammas, Mask::NoEvents).unwrap(), 2.5);
    assert!(cross_entropy(&logs, &[0, 0, 0, 0], Mask::Events).is_err());
    assert!(cross_entropy(&logs, &[0, 0], Mask::All).is_err());
}

#[test]
fn model_sampling_matches_stated_noise() {
    let model = BenchmarkSystem::new();
    let mut rng = stream_rng(12, Stream::Oracle, 0);
    let x = dvector![3.0];
    let n = 50_000;
    let mean_next = BenchmarkSystem::drift(3.0, 1);
    let (mut sx, mut sy) = (0.0, 0.0);
    for _ in 0..n {
        sx += model.sample_transition(&x, 1, &mut rng)[0];
        sy += model.sample_measurement(&x, 1, &mut rng)[0];
    }
    assert!((sx / n as f64 - mean_next).abs() < 3.0 / (n as f64).sqrt());
    assert!((sy / n as f64 - 0.45).abs() < 3.0 * (0.1 / n as f64).sqrt());
    let expected = 1.5 + 25.0 * 3.0 / 10.0 + 8.0 * (1.2f64).cos();
    assert!((mean_next - expected).abs() < 1e-12);
}
