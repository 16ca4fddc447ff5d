//! Shared setup for the steering examples.

use dagpo::checkpoint::Checkpoint;
use dagpo::dag::OrderedDag;
use dagpo::diffusion::{NoiseSchedule, COSINE_OFFSET};
use dagpo::seed::{stream_rng, Stream};
use dagpo::space::{sample_uniform, SpaceSpec};
use dagpo::training::{pretrain, FinetuneRun, TrainConfig};

pub fn seed_arg() -> u64 {
    std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(42)
}

pub fn space() -> SpaceSpec {
    SpaceSpec::synthetic(5, 2, 3)
}

pub fn uniform_pool(seed: u64, size: usize) -> dagpo::Result<Vec<OrderedDag>> {
    let space = space();
    let mut rng = stream_rng(seed, Stream::Dataset, &[]);
    (0..size)
        .map(|_| space.to_tensor_form(&sample_uniform(&space, &mut rng)))
        .collect()
}

pub fn pretrained(seed: u64, data: &[OrderedDag], epochs: u64) -> dagpo::Result<Checkpoint> {
    let schedule = NoiseSchedule::cosine(800, COSINE_OFFSET);
    let mut ckpt = Checkpoint::fresh(space(), schedule, 256, 4, 8, seed)?;
    let cfg = TrainConfig {
        epochs,
        lr: 1e-3,
        seed,
        ..TrainConfig::pretrain()
    };
    pretrain(&mut ckpt, data, &cfg)?;
    Ok(ckpt)
}

pub fn finetune_cfg(seed: u64, threshold: Option<f64>) -> TrainConfig {
    TrainConfig {
        lr: 1e-3,
        seed,
        eval_every: 20,
        threshold,
        ..TrainConfig::finetune()
    }
}

pub fn print_history(run: &FinetuneRun) {
    for r in &run.history {
        match r.eval {
            Some(e) => println!(
                "epoch {:>2} batch mean {:.3} | eval mean {:.3} max {:.3}{}",
                r.epoch,
                r.mean_reward,
                e.mean_acc,
                e.max_acc,
                e.crossing_rate
                    .map(|c| format!(" crossing {:.0}%", 100.0 * c))
                    .unwrap_or_default()
            ),
            None => println!("epoch {:>2} batch mean {:.3}", r.epoch, r.mean_reward),
        }
    }
}
