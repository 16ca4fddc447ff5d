//! Steer toward a weighted sum of two objectives and report the Pareto front
//! of the final samples with its hypervolume.

mod common;

use dagpo::eval::{hypervolume, pareto_extract};
use dagpo::reward::{RewardOracle, RewardSpec, SYNTHETIC_DEPTH, SYNTHETIC_EDGE_PREF};
use dagpo::training::finetune;

fn main() -> dagpo::Result<()> {
    let seed = common::seed_arg();
    let ckpt = common::pretrained(seed, &common::uniform_pool(seed, 2000)?, 50)?;
    let spec = RewardSpec::multi_objective(vec![
        (SYNTHETIC_DEPTH.to_string(), 1.0),
        (SYNTHETIC_EDGE_PREF.to_string(), 1.0),
    ])?;
    let oracle = RewardOracle::synthetic(spec)?;
    let run = finetune(ckpt, &oracle, &common::finetune_cfg(seed, None))?;
    common::print_history(&run);

    let objectives = [SYNTHETIC_DEPTH, SYNTHETIC_EDGE_PREF];
    for (label, set) in [("start", &run.evaluations[0]), ("end", run.evaluations.last().unwrap())] {
        let front = pareto_extract(set, &objectives);
        println!(
            "{label}: front {:?} hypervolume {:.4}",
            front.points,
            hypervolume(&front)?
        );
    }
    Ok(())
}
