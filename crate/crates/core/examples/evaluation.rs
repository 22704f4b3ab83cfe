// Deterministic evaluation laps of a pretrained policy, lap ranking and the
// lap-time / reference-offset Pareto front.

use sbrl::eval::{mean_and_standard_error, pareto_front, ranked_laps, LapRecord, ParetoPoint};
use sbrl::experiment::{evaluate_trainer, pretrained_bundle, prepare, ExperimentConfig};
use sbrl::trainer::Trainer;

pub fn run_example() -> sbrl::Result<(Vec<LapRecord>, Vec<ParetoPoint>)> {
    let mut cfg = ExperimentConfig::desk();
    cfg.demos.n_laps = 4;
    cfg.network.extractor = vec![64, 64];
    cfg.trainer.pretrain.epochs = 30;
    cfg.run.eval_laps = 4;
    let setup = prepare(&cfg, 1)?;
    let (bundle, report) = pretrained_bundle(&cfg, &setup, 1)?;
    println!("pretrained: cloning mse {:.3e}", report.final_mse);
    let trainer = Trainer::new(cfg.trainer.clone(), cfg.env.clone(), cfg.reward.clone(), bundle, 0)?;
    let laps = evaluate_trainer(&cfg, &setup, &trainer, 1)?;
    for l in &laps {
        println!("lap: {:.2} s, mro {:.3} m, finished {}", l.lap_time, l.mro, l.finished);
    }
    let ranked = ranked_laps(&laps);
    let times: Vec<f64> = ranked.iter().map(|l| l.lap_time).collect();
    let (mean, se) = mean_and_standard_error(&times);
    println!("{} finished laps, mean {mean:.2} +- {se:.2} s", ranked.len());

    let front = pareto_front(&laps.iter().filter(|l| l.finished).map(ParetoPoint::from).collect::<Vec<_>>());
    for p in &front {
        println!("front: {:.2} s at {:.3} m", p.lap_time, p.mro);
    }
    Ok((laps, front))
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
