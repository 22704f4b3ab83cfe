// Drives noisy expert laps on the oval, fits the reference distribution and
// samples fresh reference lines from it.

use sbrl::env::EnvConfig;
use sbrl::experiment::{fit_reference_model, RtdConfig};
use sbrl::expert::{build_dataset, generate_demos, DemoConfig};
use sbrl::rtd::sample_reference;
use sbrl::tracks::oval_track;

pub struct DemoSummary {
    pub lap_times: Vec<f64>,
    pub samples: usize,
    pub reference_times: Vec<f64>,
}

pub fn run_example() -> sbrl::Result<DemoSummary> {
    let track = oval_track(174.34, 40.0, 6.0, 1.0)?;
    let env = EnvConfig::default();
    let demos = DemoConfig { n_laps: 5, ..DemoConfig::default() };
    let laps = generate_demos(&track, &env, &demos, 100, 1)?;
    let lap_times: Vec<f64> = laps.iter().map(|l| l.lap_time).collect();
    println!("expert lap times: {lap_times:.2?}");

    let dataset = build_dataset(&track, &laps, 100)?;
    println!("{} (observation, action, future) samples", dataset.len());

    let model = fit_reference_model(&track, &laps, &RtdConfig::default())?;
    println!("weight distribution: dim {}, speed clamp [{:.1}, {:.1}] m/s", model.dim(), model.v_floor, model.v_cap);
    let mut reference_times = Vec::new();
    for seed in 0..4 {
        let r = sample_reference(&model, &track, seed)?;
        let top = r.speeds().iter().cloned().fold(0.0, f64::max);
        println!("sample {seed}: traversal {:.2} s, top speed {top:.1} m/s", r.traversal_time());
        reference_times.push(r.traversal_time());
    }
    Ok(DemoSummary { lap_times, samples: dataset.len(), reference_times })
}

fn main() -> sbrl::Result<()> {
    run_example().map(|_| ())
}
