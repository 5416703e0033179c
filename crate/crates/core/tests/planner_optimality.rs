mod common;

use forge_core::planner::{check_goal, plan, sample_goal, TemplateKind};
use forge_core::rng::stream_rng;
use rand::seq::SliceRandom;

#[test]
fn planner_matches_bfs_oracle_on_small_scenes() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 50 {
        seed += 1;
        let s = common::random_small_scene(seed, 8);
        let mut rng = stream_rng(seed, 9);
        let kind = *TemplateKind::ALL.choose(&mut rng).unwrap();
        let Some(goal) = sample_goal(&s, kind, &mut rng) else { continue };
        if check_goal(&s, &goal) {
            continue;
        }
        let oracle = common::bfs_plan_length(&s, &goal, 14);
        let ours = plan(&s, &goal).ok().map(|p| p.actions.len());
        assert_eq!(ours, oracle, "seed {seed}: {goal:?}");
        checked += 1;
    }
}
