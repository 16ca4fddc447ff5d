//! The same pretrained model steered the other way: the negated reward pushes
//! samples below what uniform sampling achieves.

mod common;

use dagpo::reward::{RewardOracle, RewardSpec, SYNTHETIC};
use dagpo::training::finetune;

fn main() -> dagpo::Result<()> {
    let seed = common::seed_arg();
    let ckpt = common::pretrained(seed, &common::uniform_pool(seed, 2000)?, 50)?;
    let oracle = RewardOracle::synthetic(RewardSpec::inverse(SYNTHETIC))?;
    let cfg = dagpo::training::TrainConfig {
        eval_metric: Some(SYNTHETIC.into()),
        ..common::finetune_cfg(seed, None)
    };
    let run = finetune(ckpt, &oracle, &cfg)?;
    common::print_history(&run);
    Ok(())
}
