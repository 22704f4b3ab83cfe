// Behavior cloning with the predictor auxiliary term on a handful of expert
// laps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbrl::env::EnvConfig;
use sbrl::expert::{build_dataset, generate_demos, DemoConfig};
use sbrl::policy::{NetworkConfig, PolicyBundle};
use sbrl::tracks::oval_track;
use sbrl::trainer::{pretrain, PredictorConfig, PretrainConfig, PretrainReport};

pub fn run_example() -> sbrl::Result<PretrainReport> {
    let track = oval_track(174.34, 40.0, 6.0, 1.0)?;
    let predictor = PredictorConfig { horizon: 50, ..PredictorConfig::default() };
    let laps = generate_demos(&track, &EnvConfig::default(), &DemoConfig { n_laps: 3, ..DemoConfig::default() }, predictor.horizon, 2)?;
    let data = build_dataset(&track, &laps, predictor.horizon)?;

    let net = NetworkConfig { extractor: vec![64, 64], policy: vec![32], value: vec![32], predictor: vec![32], ..NetworkConfig::default() };
    let mut bundle = PolicyBundle::new(&net, &mut ChaCha8Rng::seed_from_u64(0));
    let cfg = PretrainConfig { epochs: 8, alpha_psi_pt: 1e-3, ..PretrainConfig::default() };
    let report = pretrain(&mut bundle, &data, &cfg, &predictor, &mut ChaCha8Rng::seed_from_u64(1))?;
    for (i, e) in report.epochs.iter().enumerate() {
        println!("epoch {i}: cloning mse {:.3e}, predictor log-likelihood {:8.3}", e.mse, e.psi_ll);
    }
    println!("{} gradient steps on {} samples, final mse {:.3e}", report.steps, data.len(), report.final_mse);
    Ok(report)
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
