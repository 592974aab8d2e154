//! A small sweep written to CSV through the same path as the CLI.

use eventpf::experiment::{run_sweep, ExperimentConfig};

fn main() -> eventpf::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
delta = [2.5, 7.5]
particles = 50
filter = ["bpf", "apf"]
evaluator = "analytic"
steps = 500
"#,
    )?;
    let out = std::env::temp_dir().join("eventpf-sweep-example");
    let path = run_sweep(&cfg, &[0, 1], 1, &out, false)?;
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
