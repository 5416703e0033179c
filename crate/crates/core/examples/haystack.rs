//! Builds a length x depth grid for a trajectory's questions and prints the
//! coverage heatmap.

use forge_core::haystack::{build_grid, coverage, geometric_lengths, heatmap_csv, CellOutcome, GridConfig};
use forge_core::qa::generate_qa;
use forge_core::scene::SceneConfig;
use forge_core::traj::{generate_trajectory, GenConfig};

fn main() {
    let scene = SceneConfig::preset("apartment").unwrap();
    let cfg = GenConfig {
        max_sub_goals: 12,
        seed: 5,
        ..GenConfig::default()
    };
    let traj = generate_trajectory(&cfg, &scene, "demo").unwrap();
    let qas = generate_qa(&traj, 0).unwrap();
    let lengths = geometric_lengths(1000, 64_000);
    let depths = [0.0, 25.0, 50.0, 75.0, 100.0];
    let grid = GridConfig {
        tokens_per_image: 121,
        text_tokens_per_step: 8,
        max_context: Some(32_000),
    };
    let cells = build_grid(&traj, &qas, &lengths, &depths, &grid);
    if let Some(c) = cells.iter().find(|c| c.length == 4000 && matches!(c.outcome, CellOutcome::Built(_))) {
        if let CellOutcome::Built(ctx) = &c.outcome {
            println!(
                "{} at {} tokens / depth {}: {} steps, {} tokens, depths {:?}",
                c.qa_id,
                c.length,
                c.depth,
                ctx.included_steps.len(),
                ctx.realized_tokens,
                ctx.realized_depths
            );
        }
    }
    print!("{}", heatmap_csv(&coverage(&cells, &lengths, &depths)));
}
