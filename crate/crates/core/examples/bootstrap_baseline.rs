//! Random-search baseline: expected best and worst of 15 uniform draws,
//! estimated by bootstrap over a scored pool.

use dagpo::eval::{bootstrap_extreme, Extreme};
use dagpo::reward::synthetic_reward;
use dagpo::seed::{stream_rng, Stream};
use dagpo::space::{sample_uniform, SpaceSpec};

fn main() -> dagpo::Result<()> {
    let space = SpaceSpec::synthetic(5, 2, 3);
    let mut rng = stream_rng(42, Stream::Dataset, &[]);
    let pool: Vec<f64> = (0..2000)
        .map(|_| synthetic_reward(&sample_uniform(&space, &mut rng)))
        .collect();
    let mut rng = stream_rng(42, Stream::Bootstrap, &[]);
    let best = bootstrap_extreme(&pool, 15, 10_000, Extreme::Max, &mut rng)?;
    let worst = bootstrap_extreme(&pool, 15, 10_000, Extreme::Min, &mut rng)?;
    let mean = pool.iter().sum::<f64>() / pool.len() as f64;
    println!("pool mean {mean:.4}, best of 15 {best:.4}, worst of 15 {worst:.4}");
    Ok(())
}
