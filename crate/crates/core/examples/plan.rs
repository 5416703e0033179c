//! Samples one goal per template in a preset scene and plans it.

use forge_core::planner::{plan, sample_goal, TemplateKind};
use forge_core::rng::stream_rng;
use forge_core::scene::SceneConfig;
use forge_core::world::init_scene;

fn main() {
    let spec = SceneConfig::preset("apartment").unwrap();
    let world = init_scene(3, &spec).unwrap();
    let mut rng = stream_rng(3, 0);
    for kind in TemplateKind::ALL {
        let Some(goal) = sample_goal(&world, kind, &mut rng) else {
            println!("{kind:?}: no goal in this scene");
            continue;
        };
        match plan(&world, &goal) {
            Ok(p) => {
                let steps: Vec<String> = p.actions.iter().map(|a| a.to_string()).collect();
                println!("{}\n    {}", p.goal_text, steps.join(" -> "));
            }
            Err(e) => println!("{kind:?}: {e}"),
        }
    }
}
