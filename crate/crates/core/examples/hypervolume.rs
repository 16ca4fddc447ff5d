//! Pareto extraction and hypervolume for two and three objectives.

use dagpo::eval::{hypervolume, non_dominated, ParetoFront};

fn main() -> dagpo::Result<()> {
    let points = [
        vec![0.9, 0.2, 0.5],
        vec![0.5, 0.5, 0.5],
        vec![0.2, 0.9, 0.4],
        vec![0.4, 0.4, 0.4],
        vec![0.6, 0.6, 0.1],
    ];
    for d in [2, 3] {
        let cut: Vec<Vec<f64>> = points.iter().map(|p| p[..d].to_vec()).collect();
        let front = ParetoFront {
            objectives: (0..d).map(|i| format!("f{i}")).collect(),
            points: non_dominated(&cut),
            reference: vec![0.0; d],
        };
        println!("{d}-d front {:?}: hypervolume {:.4}", front.points, hypervolume(&front)?);
    }
    Ok(())
}
