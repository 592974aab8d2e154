//! The three no-event likelihood evaluators on one benchmark particle.

use eventpf::rng::{stream_rng, Stream};
use eventpf::{BenchmarkSystem, BoxSet, HybridMeasurement, LikelihoodEvaluator, LikelihoodKind, StateSpaceModel};
use nalgebra::dvector;

fn main() -> eventpf::Result<()> {
    let model = BenchmarkSystem::new();
    let x = dvector![3.0];
    let y_hat = model.measurement_mean(&x, 1)[0];
    let mut rng = stream_rng(7, Stream::Oracle, 0);
    for half_width in [0.1, 0.5, 2.5] {
        let h = BoxSet::interval(y_hat - 0.2 - half_width, y_hat - 0.2 + half_width)?;
        let meas = HybridMeasurement::NoEvent(h.clone());
        let analytic = LikelihoodEvaluator::analytic().log_likelihood(&model, &meas, &x, 1, &mut rng)?;
        print!("Δ={half_width:<4} analytic {:.4}", analytic.exp());
        for d in [1, 3, 9] {
            let ev = LikelihoodEvaluator::new(LikelihoodKind::Mixture { d, variance_scale: None })?;
            print!("  mixture(D={d}) {:.4}", ev.log_likelihood(&model, &meas, &x, 1, &mut rng)?.exp());
        }
        let mc = LikelihoodEvaluator::monte_carlo(1)?;
        let accepted: f64 = (0..10_000).map(|_| mc.log_likelihood(&model, &meas, &x, 1, &mut rng).map(f64::exp)).sum::<eventpf::Result<f64>>()?;
        println!("  rejection(M=1) mean {:.4}", accepted / 10_000.0);
    }
    Ok(())
}
