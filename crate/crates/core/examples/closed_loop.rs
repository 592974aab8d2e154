//! Closed-loop run on the benchmark system with the innovation-based trigger.

use std::time::Instant;

use eventpf::sim::{run, Protocol, SimConfig};
use eventpf::{BenchmarkSystem, FilterKind, LikelihoodEvaluator, LikelihoodKind, TriggerKind, TriggerRule};

fn main() -> eventpf::Result<()> {
    let steps: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(2000);
    let model = BenchmarkSystem::new();
    for filter in [FilterKind::Bpf, FilterKind::ApfFa { d: 3, variance_scale: None }] {
        for kind in [LikelihoodKind::Analytic, LikelihoodKind::MonteCarlo { m: 1 }] {
            let cfg = SimConfig {
                trigger: TriggerRule::identity(TriggerKind::Ibt, 2.5, 1)?,
                filter,
                evaluator: LikelihoodEvaluator::new(kind)?,
                particles: 100,
                steps,
                seed: 1,
                protocol: Protocol::PeriodicDownlink,
            };
            let start = Instant::now();
            let out = run(&model, &cfg)?;
            let s = &out.summary;
            println!(
                "{:>4} {:<40} C_r={:.3} ce_all={:.3} ce_events={:.3} ce_noevents={:.3} accepted={:?}/{:?} ({:.2?})",
                filter.label(),
                format!("{kind:?}"),
                s.communication_rate,
                s.ce_all,
                s.ce_events.unwrap_or(f64::NAN),
                s.ce_noevents.unwrap_or(f64::NAN),
                s.mean_accepted,
                s.expected_accepted,
                start.elapsed()
            );
        }
    }
    Ok(())
}
