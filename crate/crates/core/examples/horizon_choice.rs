//! Choosing how many trigger bounds to precompute from a first-trigger pmf.

use eventpf::horizon::{first_trigger_pmf, heuristic_horizon, quantile_horizon, tc_forward_difference, tc_value, maximizer_lower_bound};
use eventpf::oracle::exhaustive_tc_argmax;

fn main() -> eventpf::Result<()> {
    // Constant 10% trigger probability per step.
    let per_step = vec![0.1; 120];
    let p_t = first_trigger_pmf(&per_step);
    for c in [0.05, 0.1, 0.25] {
        let choice = heuristic_horizon(|i| Ok(per_step[i - 1]), c, per_step.len())?;
        let (best, best_value) = exhaustive_tc_argmax(&p_t, c, per_step.len());
        println!(
            "c={c:<5} heuristic n̂={:<3} T_c={:.4} | exhaustive n̂={best:<3} T_c={best_value:.4} | (1−c)-quantile {} | 0.9-quantile {}",
            choice.n_hat,
            tc_value(&p_t, c, choice.n_hat),
            maximizer_lower_bound(&p_t, c)?,
            quantile_horizon(&p_t, 0.9)?,
        );
    }
    let c = 0.1;
    for n in [5, 10, 20] {
        println!("ΔT_c({n}) = {:+.5}", tc_forward_difference(&p_t, c, n));
    }
    Ok(())
}
