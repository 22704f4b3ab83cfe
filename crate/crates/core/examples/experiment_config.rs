// The desk preset as TOML, and overriding a few keys from text.

use sbrl::experiment::ExperimentConfig;
use sbrl::trainer::Mode;

pub fn run_example() -> sbrl::Result<ExperimentConfig> {
    let desk = ExperimentConfig::desk();
    let text = desk.to_toml_string()?;
    println!("{}", text.lines().take(12).collect::<Vec<_>>().join("\n"));
    let custom = ExperimentConfig::from_toml_str(
        "[run]\ntotal_steps = 200000\n\n[trainer]\nmode = \"step\"\n\n[trainer.constraint]\nr_hat = 0.95\n",
    )?;
    println!(
        "override: mode {}, {} steps, r_hat {}, other keys at their defaults (n_step {})",
        custom.mode().as_str(),
        custom.run.total_steps,
        custom.trainer.constraint.r_hat,
        custom.trainer.ppo.n_step
    );
    assert_eq!(custom.mode(), Mode::Step);
    Ok(custom)
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
