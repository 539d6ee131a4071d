//! Runs the mode ablation and prints a comparison table.
//!
//! Usage: ablation [key=value ...] with keys steps, seeds, bl, bu, lr_d,
//! lr_g, fm, shift, budget, modes (comma-separated).

use std::time::Instant;

use disfluency_core::evaluate::render_table;
use disfluency_core::experiment::{build_ablation_data, run_ablation, AblationSetup};
use disfluency_core::seqgan::ModelConfig;
use disfluency_core::trainer::{TrainConfig, TrainMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = TrainConfig::desk(TrainMode::Supervised, 0);
    cfg.steps = 1000;
    let mut setup = AblationSetup::default();
    let mut n_seeds = 5u64;
    let mut modes = TrainMode::ALL.to_vec();
    for arg in std::env::args().skip(1) {
        let (k, v) = arg.split_once('=').ok_or("expected key=value")?;
        match k {
            "steps" => cfg.steps = v.parse()?,
            "seeds" => n_seeds = v.parse()?,
            "bl" => cfg.batch_size_labeled = v.parse()?,
            "bu" => cfg.batch_size_unlabeled = v.parse()?,
            "lr_d" => cfg.lr_d = v.parse()?,
            "lr_g" => cfg.lr_g = v.parse()?,
            "fm" => cfg.feature_match_weight = v.parse()?,
            "shift" => setup.dialect_shift = v.parse()?,
            "budget" => setup.budget = v.parse()?,
            "modes" => modes = v.split(',').map(str::parse).collect::<Result<_, _>>()?,
            _ => return Err(format!("unknown key {k}").into()),
        }
    }
    let data = build_ablation_data(&setup)?;
    let seeds: Vec<u64> = (1..=n_seeds).collect();
    let start = Instant::now();
    let rows = run_ablation(&data, ModelConfig::desk, &cfg, &modes, &seeds, |mode, seed, r| {
        eprintln!(
            "{mode:>22} seed {seed}: P {:.2} R {:.2} F1 {:.2} ({:.0}s)",
            r.precision,
            r.recall,
            r.f1,
            start.elapsed().as_secs_f64()
        );
    })?;
    print!("{}", render_table(&rows));
    Ok(())
}
