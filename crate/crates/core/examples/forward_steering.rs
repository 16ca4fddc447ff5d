//! Pretrain on uniformly drawn graphs, then steer toward high synthetic
//! reward. Usage: `cargo run --release --example forward_steering [seed]`.

mod common;

use dagpo::reward::{RewardOracle, RewardSpec, SYNTHETIC};
use dagpo::training::finetune;

fn main() -> dagpo::Result<()> {
    let seed = common::seed_arg();
    let ckpt = common::pretrained(seed, &common::uniform_pool(seed, 2000)?, 50)?;
    let oracle = RewardOracle::synthetic(RewardSpec::forward(SYNTHETIC))?;
    let run = finetune(ckpt, &oracle, &common::finetune_cfg(seed, None))?;
    common::print_history(&run);
    Ok(())
}
