//! Reverse diffusion with a no-information denoiser: every output is a valid
//! DAG because generation ends with the upper-triangular projection.

use dagpo::dag::is_acyclic;
use dagpo::diffusion::{generate_batch, FixedDenoiser, NoiseSchedule, COSINE_OFFSET};
use dagpo::reward::synthetic_reward;
use dagpo::seed::{stream_rng, Stream};
use dagpo::space::SpaceSpec;

fn main() -> dagpo::Result<()> {
    let space = SpaceSpec::synthetic(6, 3, 4);
    let schedule = NoiseSchedule::cosine(200, COSINE_OFFSET);
    let denoiser = FixedDenoiser::uniform(space.dims());
    let mut rngs: Vec<_> = (0..5)
        .map(|i| stream_rng(7, Stream::Evaluation, &[0, i]))
        .collect();
    let trajectories = generate_batch(&denoiser, &schedule, &space, &mut rngs, false)?;
    for tr in &trajectories {
        let g = tr.final_graph.dag();
        println!(
            "labels {:?} edges {} acyclic {} reward {:.3}",
            g.node_labels(),
            g.edge_count(),
            is_acyclic(g),
            synthetic_reward(g)
        );
    }
    Ok(())
}
