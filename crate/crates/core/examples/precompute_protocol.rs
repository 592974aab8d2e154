//! Batching trigger bounds at each event and letting the sensor radio sleep.

use eventpf::sim::{run, HorizonRule, Protocol, SimConfig};
use eventpf::{BenchmarkSystem, FilterKind, LikelihoodEvaluator, TriggerKind, TriggerRule};

fn main() -> eventpf::Result<()> {
    let model = BenchmarkSystem::new();
    let protocols = [
        Protocol::PeriodicDownlink,
        Protocol::Precompute { c: 0.1, rule: HorizonRule::Heuristic, n_max: None },
        Protocol::Precompute { c: 0.1, rule: HorizonRule::Quantile(0.9), n_max: None },
        Protocol::Precompute { c: 0.1, rule: HorizonRule::Fixed(3), n_max: None },
    ];
    for protocol in protocols {
        let cfg = SimConfig {
            trigger: TriggerRule::identity(TriggerKind::Ibt, 7.5, 1)?,
            filter: FilterKind::ApfFa { d: 3, variance_scale: None },
            evaluator: LikelihoodEvaluator::analytic(),
            particles: 100,
            steps: 1000,
            seed: 3,
            protocol,
        };
        let s = run(&model, &cfg)?.summary;
        println!(
            "{:<40} C_r={:.3} forced={:.3} mean n̂={} radio-off/event={}",
            format!("{protocol:?}"),
            s.communication_rate,
            s.forced_fraction,
            s.mean_n_hat.map_or("-".into(), |v| format!("{v:.2}")),
            s.mean_radio_off.map_or("-".into(), |v| format!("{v:.2}")),
        );
    }
    Ok(())
}
