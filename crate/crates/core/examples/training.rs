// A few small PPO updates with horizon rewards and the adaptive style
// coefficient, followed by a checkpoint round trip.

use sbrl::experiment::{pretrained_bundle, prepare, stream_seed, streams, ExperimentConfig};
use sbrl::trainer::{MetricsRow, Mode, Trainer};

/// A scaled-down configuration that finishes in seconds.
pub fn small_config(mode: Mode) -> ExperimentConfig {
    let mut c = ExperimentConfig::desk();
    c.trainer.mode = mode;
    c.demos.n_laps = 3;
    c.network.extractor = vec![32, 32];
    c.network.policy = vec![32];
    c.network.value = vec![32];
    c.network.predictor = vec![32];
    c.trainer.ppo.n_step = 256;
    c.trainer.ppo.num_env = 2;
    c.trainer.ppo.batch_size = 128;
    c.trainer.predictor.horizon = 50;
    c.trainer.predictor.max_steps = 50;
    c.trainer.pretrain.epochs = 3;
    c.run.total_steps = 3 * 512;
    c.run.eval_laps = 3;
    c.run.eval_max_steps = 1500;
    c
}

pub fn run_example() -> sbrl::Result<Vec<MetricsRow>> {
    let cfg = small_config(Mode::Ours);
    let setup = prepare(&cfg, 0)?;
    let (bundle, _) = pretrained_bundle(&cfg, &setup, 0)?;
    let mut trainer = Trainer::new(
        cfg.trainer.clone(),
        cfg.env.clone(),
        cfg.reward.clone(),
        bundle,
        stream_seed(0, streams::TRAIN),
    )?;
    let source = setup.source();
    let rows = trainer.train(&setup.track, &source, cfg.run.total_steps, |_, r| {
        let w = &r.row;
        println!(
            "update {}: r_p {:.3}, r_s {:.3}, horizon r_p {:.1}, alpha_s {:.3}, kl {:.4}, predictor ll {:?}",
            w.update, w.mean_r_p, w.mean_r_s, r.mean_r_p_psi, w.alpha_s, w.kl, w.predictor_val_ll
        );
        Ok(())
    })?;

    let dir = std::env::temp_dir().join(format!("sbrl-training-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("checkpoint.json");
    trainer.save(&path)?;
    let restored = Trainer::load(&path)?;
    println!("checkpoint restores update counter {} and alpha_s {:.3}", restored.state.update, restored.state.alpha_s);
    std::fs::remove_dir_all(&dir)?;
    Ok(rows)
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
