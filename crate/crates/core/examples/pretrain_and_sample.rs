//! Pretrain on a uniform pool of synthetic graphs, save a checkpoint, reload
//! it and sample.

use dagpo::checkpoint::Checkpoint;
use dagpo::diffusion::{NoiseSchedule, COSINE_OFFSET};
use dagpo::eval::sample_model;
use dagpo::reward::{RewardOracle, RewardSpec, SYNTHETIC};
use dagpo::seed::{stream_rng, Stream};
use dagpo::space::{sample_uniform, SpaceSpec};
use dagpo::training::{pretrain, TrainConfig};

fn main() -> dagpo::Result<()> {
    let seed = 42;
    let space = SpaceSpec::synthetic(5, 2, 3);
    let mut rng = stream_rng(seed, Stream::Dataset, &[]);
    let data = (0..500)
        .map(|_| space.to_tensor_form(&sample_uniform(&space, &mut rng)))
        .collect::<dagpo::Result<Vec<_>>>()?;

    let schedule = NoiseSchedule::cosine(200, COSINE_OFFSET);
    let mut ckpt = Checkpoint::fresh(space, schedule, 128, 3, 8, seed)?;
    let cfg = TrainConfig {
        epochs: 10,
        lr: 1e-3,
        seed,
        ..TrainConfig::pretrain()
    };
    for r in pretrain(&mut ckpt, &data, &cfg)? {
        println!("epoch {:>2} loss {:.4}", r.epoch, r.loss);
    }

    let path = std::env::temp_dir().join("dagpo_example.ckpt");
    ckpt.save(&path)?;
    let ckpt = Checkpoint::load(&path)?;
    let oracle = RewardOracle::synthetic(RewardSpec::forward(SYNTHETIC))?;
    let set = sample_model(&ckpt.params, &ckpt.schedule, &ckpt.space, &oracle, 50, seed, 0, 1)?;
    println!("{} samples, mean reward {:.3}", set.len(), set.mean_reward());
    Ok(())
}
