//! Configuration and orchestration of complete runs: track and demo
//! generation, pretraining, training with checkpoints, evaluation and summary.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, mean_and_standard_error, ranked_laps, write_laps, LapRecord,
};
use crate::expert::{build_dataset, generate_demos, DemoConfig, DemoDataset, DemoLap};
use crate::geometry::Track;
use crate::policy::{NetworkConfig, PolicyBundle};
use crate::reward::RewardConfig;
use crate::rtd::{fit_rtd, fit_weights, RbfBasis, TrajectoryDistributionModel};
use crate::tracks::{generate_track, TrackGenConfig};
use crate::trainer::{
    mix_seed, pretrain, read_metrics, write_metrics, MetricsRow, Mode, PretrainReport, RtdSampler,
    Trainer, TrainerConfig,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSection {
    /// Track file to load instead of generating one.
    pub file: Option<PathBuf>,
    pub generate: TrackGenConfig,
}

impl Default for TrackSection {
    fn default() -> Self {
        TrackSection {
            file: None,
            generate: TrackGenConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RtdConfig {
    pub n_basis: usize,
    /// Sampled speeds are capped at this multiple of the fastest demo speed.
    pub v_cap_factor: f64,
}

impl Default for RtdConfig {
    fn default() -> Self {
        RtdConfig {
            n_basis: 20,
            v_cap_factor: 1.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub total_steps: u64,
    /// Updates between checkpoints.
    pub checkpoint_every: u64,
    pub eval_laps: usize,
    pub eval_max_steps: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            total_steps: 100_000_000,
            checkpoint_every: 10,
            eval_laps: 20,
            eval_max_steps: 6000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub track: TrackSection,
    pub demos: DemoConfig,
    pub rtd: RtdConfig,
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub network: NetworkConfig,
    pub trainer: TrainerConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            run: RunConfig::default(),
            track: TrackSection::default(),
            demos: DemoConfig::default(),
            rtd: RtdConfig::default(),
            env: EnvConfig::default(),
            reward: RewardConfig::default(),
            network: NetworkConfig::default(),
            trainer: TrainerConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Scaled-down settings that train on a single CPU core in minutes.
    pub fn desk() -> Self {
        let mut c = ExperimentConfig::default();
        c.run.total_steps = 500_000;
        c.run.eval_laps = 10;
        c.network.extractor = vec![64, 64];
        c.network.policy = vec![32, 32];
        c.network.value = vec![64, 64];
        c.network.predictor = vec![32, 32];
        c.trainer.ppo.n_step = 2048;
        c.trainer.ppo.batch_size = 256;
        c.trainer.ppo.learning_rate = 3e-4;
        c.trainer.pretrain.epochs = 100;
        c.trainer.constraint.r_hat = 0.99;
        c.trainer.constraint.alpha_s_lr = 50.0;
        c
    }

    pub fn mode(&self) -> Mode {
        self.trainer.mode
    }

    pub fn validate(&self) -> Result<()> {
        self.trainer.validate()?;
        self.reward.validate()?;
        if self.rtd.n_basis < 2 || !(self.rtd.v_cap_factor > 0.0) {
            return Err(Error::Config(
                "rtd needs n_basis >= 2 and a positive v_cap_factor".into(),
            ));
        }
        if self.demos.n_laps < 2 {
            return Err(Error::Config("at least two demo laps are needed".into()));
        }
        if self.network.degree < 1 {
            return Err(Error::Config("Bezier degree must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }
}

/// Seeds of the independent random streams of one run.
pub mod streams {
    pub const TRACK: u64 = 1;
    pub const DEMOS: u64 = 2;
    pub const INIT: u64 = 3;
    pub const PRETRAIN: u64 = 4;
    pub const TRAIN: u64 = 5;
    pub const EVAL: u64 = 6;
}

pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    mix_seed(seed, &[stream])
}

pub fn build_track(cfg: &ExperimentConfig, seed: u64) -> Result<Track> {
    match &cfg.track.file {
        Some(path) => Track::load(path),
        None => generate_track(&cfg.track.generate, stream_seed(seed, streams::TRACK)),
    }
}

/// Track, demonstrations and the reference distribution fitted to them.
pub struct Setup {
    pub track: Arc<Track>,
    pub laps: Vec<DemoLap>,
    pub dataset: DemoDataset,
    pub rtd: TrajectoryDistributionModel,
}

impl Setup {
    pub fn source(&self) -> RtdSampler<'_> {
        RtdSampler {
            model: &self.rtd,
            track: &self.track,
        }
    }
}

pub fn fit_reference_model(
    track: &Track,
    laps: &[DemoLap],
    cfg: &RtdConfig,
) -> Result<TrajectoryDistributionModel> {
    let basis = RbfBasis::equidistant(cfg.n_basis, true);
    let weights = laps
        .iter()
        .map(|l| Ok(fit_weights(&l.reference()?, track, &basis)?.weights))
        .collect::<Result<Vec<_>>>()?;
    let v_max = laps
        .iter()
        .flat_map(|l| l.states.iter().map(|s| s.speed()))
        .fold(0.0, f64::max);
    fit_rtd(&weights, &basis, track, cfg.v_cap_factor * v_max)
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Setup> {
    cfg.validate()?;
    let track = build_track(cfg, seed)?;
    let horizon = cfg.trainer.predictor.horizon;
    let laps = generate_demos(
        &track,
        &cfg.env,
        &cfg.demos,
        horizon,
        stream_seed(seed, streams::DEMOS),
    )?;
    let dataset = build_dataset(&track, &laps, horizon)?;
    let rtd = fit_reference_model(&track, &laps, &cfg.rtd)?;
    Ok(Setup {
        track: Arc::new(track),
        laps,
        dataset,
        rtd,
    })
}

/// Freshly initialized bundle pretrained on the demonstrations.
pub fn pretrained_bundle(
    cfg: &ExperimentConfig,
    setup: &Setup,
    seed: u64,
) -> Result<(PolicyBundle, PretrainReport)> {
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, streams::INIT));
    let mut bundle = PolicyBundle::new(&cfg.network, &mut rng);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(seed, streams::PRETRAIN));
    let report = pretrain(
        &mut bundle,
        &setup.dataset,
        &cfg.trainer.pretrain,
        &cfg.trainer.predictor,
        &mut rng,
    )?;
    Ok((bundle, report))
}

pub fn write_pretrain_report(path: impl AsRef<Path>, report: &PretrainReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "loss", "bc", "mse", "psi_ll"])?;
    for (i, e) in report.epochs.iter().enumerate() {
        w.write_record([
            i.to_string(),
            e.loss.to_string(),
            e.bc.to_string(),
            e.mse.to_string(),
            e.psi_ll.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the track, demonstration laps and fitted distribution.
pub fn write_setup(dir: &Path, setup: &Setup) -> Result<()> {
    fs::create_dir_all(dir.join("demos"))?;
    setup.track.save(dir.join("track.txt"))?;
    for (i, lap) in setup.laps.iter().enumerate() {
        lap.reference()?.save(dir.join("demos").join(format!("lap_{i:03}.txt")))?;
    }
    setup.rtd.save(dir.join("rtd.txt"))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunOutcome {
    pub seed: u64,
    pub mode: Mode,
    pub metrics: Vec<MetricsRow>,
    pub laps: Vec<LapRecord>,
    /// Fastest lap seen during training.
    pub best_training_lap: Option<f64>,
    pub best_eval_lap: Option<f64>,
    /// Mean offset over finished evaluation laps.
    pub eval_mro: Option<f64>,
    pub eval_finished: usize,
}

pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const LAPS_FILE: &str = "laps.csv";
pub const RANKED_FILE: &str = "ranked_laps.csv";

/// Trains one seed into `out`, resuming from `out/checkpoint.json` when it
/// exists, then evaluates the final policy.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    cfg.save(out.join("config.toml"))?;
    let setup = prepare(cfg, seed)?;
    let ckpt = out.join(CHECKPOINT_FILE);
    let metrics_path = out.join(METRICS_FILE);
    let (mut trainer, mut rows) = if ckpt.exists() {
        let t = Trainer::load(&ckpt)?;
        let mut rows = if metrics_path.exists() {
            read_metrics(&metrics_path)?
        } else {
            Vec::new()
        };
        rows.retain(|r| r.update < t.state.update);
        (t, rows)
    } else {
        write_setup(out, &setup)?;
        let (bundle, report) = pretrained_bundle(cfg, &setup, seed)?;
        write_pretrain_report(out.join("pretrain.csv"), &report)?;
        let t = Trainer::new(
            cfg.trainer.clone(),
            cfg.env.clone(),
            cfg.reward.clone(),
            bundle,
            stream_seed(seed, streams::TRAIN),
        )?;
        (t, Vec::new())
    };
    let source = setup.source();
    let every = cfg.run.checkpoint_every.max(1);
    trainer.train(&setup.track, &source, cfg.run.total_steps, |t, report| {
        rows.push(report.row.clone());
        write_metrics(&metrics_path, &rows)?;
        if t.state.update % every == 0 {
            t.save(&ckpt)?;
        }
        Ok(())
    })?;
    trainer.save(&ckpt)?;
    let laps = evaluate_trainer(cfg, &setup, &trainer, seed)?;
    write_laps(out.join(LAPS_FILE), &laps)?;
    write_laps(out.join(RANKED_FILE), &ranked_laps(&laps))?;
    let outcome = summarize_run(seed, cfg.mode(), rows, laps);
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&outcome)?)?;
    Ok(outcome)
}

pub fn evaluate_trainer(
    cfg: &ExperimentConfig,
    setup: &Setup,
    trainer: &Trainer,
    seed: u64,
) -> Result<Vec<LapRecord>> {
    let source = setup.source();
    let mut laps = evaluate(
        trainer.bundle(),
        &setup.track,
        &source,
        &cfg.env,
        cfg.run.eval_laps,
        cfg.run.eval_max_steps,
        stream_seed(seed, streams::EVAL),
        trainer.state.update,
    )?;
    for l in &mut laps {
        l.seed = seed;
    }
    Ok(laps)
}

pub fn summarize_run(
    seed: u64,
    mode: Mode,
    metrics: Vec<MetricsRow>,
    laps: Vec<LapRecord>,
) -> RunOutcome {
    let finished: Vec<&LapRecord> = laps.iter().filter(|l| l.finished).collect();
    RunOutcome {
        seed,
        mode,
        best_training_lap: metrics.iter().filter_map(|r| r.best_lap_time).reduce(f64::min),
        best_eval_lap: finished.iter().map(|l| l.lap_time).reduce(f64::min),
        eval_mro: (!finished.is_empty())
            .then(|| finished.iter().map(|l| l.mro).sum::<f64>() / finished.len() as f64),
        eval_finished: finished.len(),
        metrics,
        laps,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub mode: Mode,
    pub seeds: Vec<u64>,
    /// Mean and standard error of the best training lap over seeds that
    /// completed one.
    pub best_lap_mean: f64,
    pub best_lap_standard_error: f64,
    pub runs: Vec<RunOutcome>,
}

/// Runs every seed into `out/seed_<n>` and aggregates best lap times.
pub fn run_experiment(cfg: &ExperimentConfig, seeds: &[u64], out: &Path) -> Result<ExperimentSummary> {
    let runs = seeds
        .iter()
        .map(|&s| run_seed(cfg, s, &out.join(format!("seed_{s}"))))
        .collect::<Result<Vec<_>>>()?;
    let best: Vec<f64> = runs.iter().filter_map(|r| r.best_training_lap).collect();
    let (mean, se) = mean_and_standard_error(&best);
    let summary = ExperimentSummary {
        mode: cfg.mode(),
        seeds: seeds.to_vec(),
        best_lap_mean: mean,
        best_lap_standard_error: se,
        runs,
    };
    fs::create_dir_all(out)?;
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
