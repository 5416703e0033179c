//! Generates questions for one trajectory, checks them against the metadata
//! oracle and draws a type-balanced sample.

use forge_core::qa::{answer_from_metadata, generate_qa, sample_balanced};
use forge_core::scene::SceneConfig;
use forge_core::traj::{generate_trajectory, GenConfig};

fn main() {
    let scene = SceneConfig::preset("kitchen").unwrap();
    let cfg = GenConfig {
        max_sub_goals: 10,
        seed: 9,
        ..GenConfig::default()
    };
    let traj = generate_trajectory(&cfg, &scene, "demo").expect("trajectory");
    let pool = generate_qa(&traj, 1).unwrap();
    let agree = pool.iter().filter(|q| answer_from_metadata(&traj, q) == q.answer).count();
    println!("{} questions, {agree} confirmed by the metadata oracle", pool.len());

    for q in sample_balanced(&pool, 12, 1).items {
        println!("[{:<17} {:?}] {}  ->  {}  (steps {:?})", q.qa_type, q.evidence_class, q.question, q.answer, q.gt_steps);
    }
}
