//! Generates a small dataset, exports it and prints the statistics table.

use forge_core::provenance::Provenance;
use forge_core::scene::SceneConfig;
use forge_core::traj::{export_dataset, generate_dataset, replay, DatasetConfig, GenConfig};

fn main() {
    let cfg = DatasetConfig {
        n_traj: 6,
        seed: 42,
        scenes: SceneConfig::preset_names().map(|n| SceneConfig::preset(n).unwrap()).collect(),
        gen: GenConfig {
            max_sub_goals: 8,
            ..GenConfig::default()
        },
        max_reseeds: 20,
    };
    let trajs = generate_dataset(&cfg).expect("generation");
    for t in &trajs {
        replay(t).expect("replays");
        println!("{}  {:>4} steps  final: {}", t.id, t.total_steps(), t.final_goal.plan.goal_text);
    }
    let out = std::env::temp_dir().join("forge-example-dataset");
    let manifest = export_dataset(&trajs, &out, &Provenance::new(cfg.seed, &cfg)).unwrap();
    println!("wrote {}", out.display());
    println!("{}", serde_json::to_string_pretty(&manifest.stats).unwrap());
}
