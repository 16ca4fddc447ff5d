//! Pretrain on every cell of a benchmark table export, fine-tune on one
//! dataset's accuracy and report the best of 300 samples.
//! Usage: `cargo run --release --example nb201_pipeline -- table.jsonl [epochs]`.

use std::path::PathBuf;
use std::sync::Arc;

use dagpo::checkpoint::Checkpoint;
use dagpo::diffusion::{NoiseSchedule, COSINE_OFFSET};
use dagpo::reward::{load_benchmark, RewardOracle, RewardSpec};
use dagpo::space::SpaceSpec;
use dagpo::training::{finetune, pretrain, TrainConfig};

fn main() -> dagpo::Result<()> {
    let mut args = std::env::args().skip(1);
    let Some(path) = args.next().map(PathBuf::from) else {
        eprintln!("usage: nb201_pipeline <table.jsonl> [pretrain epochs]");
        std::process::exit(2);
    };
    let epochs = args.next().and_then(|s| s.parse().ok()).unwrap_or(50);
    let space = SpaceSpec::nb201();
    let table = Arc::new(load_benchmark(&path, &space)?);
    let data = table
        .entries()
        .into_iter()
        .map(|(key, _)| space.to_tensor_form(&key.decode(&space)?))
        .collect::<dagpo::Result<Vec<_>>>()?;
    println!("{} cells", data.len());

    let schedule = NoiseSchedule::cosine(800, COSINE_OFFSET);
    let mut ckpt = Checkpoint::fresh(space, schedule, 256, 4, 8, 42)?;
    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        ..TrainConfig::pretrain()
    };
    pretrain(&mut ckpt, &data, &cfg)?;

    let oracle = RewardOracle::new(table, RewardSpec::forward("c10"))?;
    let cfg = TrainConfig {
        lr: 1e-3,
        eval_every: 10,
        threshold: Some(0.85),
        ..TrainConfig::finetune()
    };
    let run = finetune(ckpt, &oracle, &cfg)?;
    for r in &run.history {
        if let Some(e) = r.eval {
            println!(
                "epoch {:>2} mean {:.4} best {:.4} crossing {:.0}%",
                r.epoch,
                e.mean_acc,
                e.max_acc,
                100.0 * e.crossing_rate.unwrap_or(0.0)
            );
        }
    }
    Ok(())
}
