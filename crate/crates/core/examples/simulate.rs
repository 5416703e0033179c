//! Steps a small room by hand and prints the metadata log after each action.

use forge_core::scene::SceneConfig;
use forge_core::world::{init_scene, Action, Heading, ObjectId};

fn main() {
    let spec = SceneConfig::empty("demo", 5, 4, [1, 1], Heading::E)
        .with_receptacle("CounterTop", [2, 1], &["Apple", "Knife"])
        .with_receptacle("Fridge", [1, 3], &[]);
    let mut world = init_scene(7, &spec).expect("scene builds");
    let id = |s: &str| ObjectId(s.to_string());

    let script = [
        Action::PickupObject(id("Knife_01")),
        Action::SliceObject(id("Apple_01")),
        Action::PutObject(id("Knife_01"), id("CounterTop_01")),
        Action::PickupObject(id("Apple_01")),
        Action::GotoObject(id("Fridge_01")),
        Action::OpenObject(id("Fridge_01")),
        Action::PutObject(id("Apple_01"), id("Fridge_01")),
        // the fridge is already open
        Action::OpenObject(id("Fridge_01")),
    ];
    for a in &script {
        let r = world.step(a);
        let log = &world.metadata().object_log;
        println!(
            "{a:<32} failure={:<5} holding={:<9} visible={}",
            r.failure,
            log.inven_obj.iter().map(|o| o.as_str()).collect::<Vec<_>>().join(","),
            log.visible.len()
        );
        if let Some(d) = r.detail {
            println!("    {d}");
        }
    }
}
