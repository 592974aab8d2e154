//! Observer estimates of the first-trigger pmf against naive Monte Carlo.

use eventpf::experiment::{trigger_probability_study, StudySpec};
use eventpf::{BenchmarkSystem, FilterKind, LikelihoodEvaluator, TriggerKind, TriggerRule};

fn main() -> eventpf::Result<()> {
    let model = BenchmarkSystem::new();
    for particles in [25, 100, 400] {
        let spec = StudySpec {
            trigger: TriggerRule::identity(TriggerKind::Ibt, 7.5, 1)?,
            filter: FilterKind::ApfFa { d: 3, variance_scale: None },
            evaluator: LikelihoodEvaluator::analytic(),
            particles,
            seeds: (0..20).collect(),
            mc_repetitions: 20_000,
            max_n: 20,
        };
        let r = trigger_probability_study(&model, &spec)?;
        println!("N={particles:<4} RMSE {:.4}  band coverage {:.2}", r.rmse, r.band_coverage(20));
        if particles == 400 {
            for n in 1..=10 {
                println!(
                    "  n={n:<2} p_MC {:.4} [{:.4}, {:.4}]  mean p_PF {:.4}",
                    r.mc.pmf[n - 1],
                    r.mc_band_lower[n - 1],
                    r.mc_band_upper[n - 1],
                    r.pf_mean[n - 1]
                );
            }
        }
    }
    Ok(())
}
