//! Pretrain only on graphs below the 30th reward percentile, then fine-tune
//! and watch the fraction of samples at or above that threshold.

mod common;

use dagpo::reward::{synthetic_reward, RewardOracle, RewardSpec, SyntheticOracle, SYNTHETIC};
use dagpo::training::{filter_dataset, finetune};

fn main() -> dagpo::Result<()> {
    let seed = common::seed_arg();
    let pool = common::uniform_pool(seed, 2000)?;
    let mut rewards: Vec<f64> = pool.iter().map(|g| synthetic_reward(g.dag())).collect();
    rewards.sort_by(f64::total_cmp);
    let pi = rewards[(0.3 * rewards.len() as f64) as usize];
    let (kept, fraction) = filter_dataset(&pool, &SyntheticOracle, pi, SYNTHETIC)?;
    println!("threshold {pi:.3}: kept {} graphs ({:.0}%)", kept.len(), 100.0 * fraction);

    let ckpt = common::pretrained(seed, &kept, 100)?;
    let oracle = RewardOracle::synthetic(RewardSpec::forward(SYNTHETIC))?;
    let run = finetune(ckpt, &oracle, &common::finetune_cfg(seed, Some(pi)))?;
    common::print_history(&run);
    Ok(())
}
