use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbrl::eval::{pareto_front, read_laps, ranked_laps, write_laps, write_pareto, ParetoPoint};
use sbrl::experiment::{
    build_track, evaluate_trainer, prepare, pretrained_bundle, run_seed, write_pretrain_report,
    write_setup, ExperimentConfig, CHECKPOINT_FILE, LAPS_FILE, RANKED_FILE,
};
use sbrl::trainer::Trainer;
use sbrl::Result;

#[derive(Parser)]
#[command(name = "sbrl", about = "Style-constrained racing RL experiments")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; the desk preset when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Verb {
    /// Generate a track file.
    GenTrack(Common),
    /// Drive expert demonstration laps and fit the reference distribution.
    GenDemos(Common),
    /// Pretrain a policy bundle on the demonstrations.
    Pretrain(Common),
    /// Pretrain, train with checkpoints and evaluate; resumes from a checkpoint in `--out`.
    Train(Common),
    /// Evaluate the checkpoint in `--out`.
    Eval(Common),
    /// Pareto front of every lap record below `--out`.
    Pareto(Common),
}

fn config(c: &Common) -> Result<ExperimentConfig> {
    match &c.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::desk()),
    }
}

fn lap_files(dir: &Path, found: &mut Vec<PathBuf>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            lap_files(&path, found)?;
        } else if path.file_name().is_some_and(|n| n == LAPS_FILE) {
            found.push(path);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.verb {
        Verb::GenTrack(c) => {
            let cfg = config(&c)?;
            fs::create_dir_all(&c.out)?;
            let track = build_track(&cfg, c.seed)?;
            track.save(c.out.join("track.txt"))?;
            println!("track length {:.3} m", track.length());
        }
        Verb::GenDemos(c) => {
            let cfg = config(&c)?;
            let setup = prepare(&cfg, c.seed)?;
            write_setup(&c.out, &setup)?;
            for (i, lap) in setup.laps.iter().enumerate() {
                println!("lap {i}: {:.3} s", lap.lap_time);
            }
            println!("{} pretraining samples", setup.dataset.len());
        }
        Verb::Pretrain(c) => {
            let cfg = config(&c)?;
            let setup = prepare(&cfg, c.seed)?;
            fs::create_dir_all(&c.out)?;
            let (bundle, report) = pretrained_bundle(&cfg, &setup, c.seed)?;
            write_pretrain_report(c.out.join("pretrain.csv"), &report)?;
            fs::write(c.out.join("pretrained.json"), serde_json::to_string(&bundle)?)?;
            println!("final behavior-cloning mse {:.6e}", report.final_mse);
        }
        Verb::Train(c) => {
            let cfg = config(&c)?;
            let o = run_seed(&cfg, c.seed, &c.out)?;
            println!(
                "{} updates, best training lap {:?}, evaluation: {} finished, best {:?}, mro {:?}",
                o.metrics.len(),
                o.best_training_lap,
                o.eval_finished,
                o.best_eval_lap,
                o.eval_mro
            );
        }
        Verb::Eval(c) => {
            let cfg = config(&c)?;
            let trainer = Trainer::load(c.out.join(CHECKPOINT_FILE))?;
            let setup = prepare(&cfg, c.seed)?;
            let laps = evaluate_trainer(&cfg, &setup, &trainer, c.seed)?;
            write_laps(c.out.join(LAPS_FILE), &laps)?;
            write_laps(c.out.join(RANKED_FILE), &ranked_laps(&laps))?;
            println!("{} of {} laps finished", laps.iter().filter(|l| l.finished).count(), laps.len());
        }
        Verb::Pareto(c) => {
            let mut files = Vec::new();
            lap_files(&c.out, &mut files)?;
            let mut points: Vec<ParetoPoint> = Vec::new();
            for f in &files {
                points.extend(read_laps(f)?.iter().filter(|l| l.finished).map(ParetoPoint::from));
            }
            let front = pareto_front(&points);
            write_pareto(c.out.join("pareto.csv"), &front)?;
            println!("{} of {} points on the front", front.len(), points.len());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
