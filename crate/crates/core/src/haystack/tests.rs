use super::*;
use crate::qa::QaType;
use crate::scene::SceneConfig;
use crate::traj::{generate_trajectory, GenConfig};
use proptest::prelude::*;
use std::sync::OnceLock;

fn base() -> &'static Trajectory {
    static T: OnceLock<Trajectory> = OnceLock::new();
    T.get_or_init(|| {
        let scene = SceneConfig::preset("loft").unwrap();
        let cfg = GenConfig {
            max_sub_goals: 1,
            seed: 3,
            ..GenConfig::default()
        };
        generate_trajectory(&cfg, &scene, "h").unwrap()
    })
}

/// A trajectory of `n` steps; only the step count matters here.
fn traj(n: usize) -> Trajectory {
    let mut t = base().clone();
    let rec = t.steps[0].clone();
    t.steps = vec![rec; n];
    t
}

fn qa(gt: Vec<usize>) -> QaInstance {
    QaInstance {
        id: "q".into(),
        trajectory_id: "h".into(),
        question: "?".into(),
        answer: "yes".into(),
        qa_type: QaType::Presence,
        obj_type: "Apple".into(),
        evidence_class: if gt.len() > 1 {
            EvidenceClass::Multi
        } else {
            EvidenceClass::Single
        },
        gt_steps: gt,
    }
}

fn spec(tokens: u64, depth: f64) -> HaystackSpec {
    HaystackSpec {
        target_tokens: tokens,
        target_depth: depth,
        tokens_per_image: 121,
        text_tokens_per_step: 8,
    }
}

/// Depth of needle `g` in window `start..start+n`, recomputed from token costs.
fn window_depth(start: usize, n: usize, g: usize, cost: u64) -> f64 {
    let before = (g - start) as u64 * cost;
    let after = (start + n - 1 - g) as u64 * cost;
    if before + after == 0 {
        0.0
    } else {
        before as f64 / (before + after) as f64 * 100.0
    }
}

#[test]
fn full_length_keeps_everything() {
    let t = traj(200);
    let c = build_single(&t, &qa(vec![37]), &spec(200 * 129, 80.0)).unwrap();
    assert_eq!(c.included_steps, (0..200).collect::<Vec<_>>());
    assert!((c.realized_depths[0] - 37.0 / 199.0 * 100.0).abs() < 1e-12);
    assert!(c.clamped);
}

#[test]
fn depth_zero_starts_at_needle() {
    let t = traj(300);
    let c = build_single(&t, &qa(vec![100]), &spec(50 * 129, 0.0)).unwrap();
    assert_eq!(c.included_steps[0], 100);
    assert_eq!(c.realized_depths, vec![0.0]);
    let c = build_single(&t, &qa(vec![100]), &spec(50 * 129, 100.0)).unwrap();
    assert_eq!(*c.included_steps.last().unwrap(), 100);
    assert_eq!(c.realized_depths, vec![100.0]);
}

#[test]
fn half_length_mid_depth() {
    let t = traj(400);
    let c = build_single(&t, &qa(vec![200]), &spec(200 * 129, 50.0)).unwrap();
    assert!((c.realized_depths[0] - 50.0).abs() <= DEPTH_TOLERANCE);
    assert!(!c.clamped);
}

#[test]
fn spec_errors() {
    let t = traj(50);
    assert!(matches!(build_single(&t, &qa(vec![3]), &spec(100, 50.0)), Err(HaystackError::Spec(_))));
    assert!(matches!(build_single(&t, &qa(vec![3]), &spec(1000, 101.0)), Err(HaystackError::Spec(_))));
    assert!(matches!(build_single(&t, &qa(vec![3, 4]), &spec(1000, 1.0)), Err(HaystackError::Evidence(..))));
    assert!(matches!(build_multi(&t, &qa(vec![3]), &spec(1000, 1.0)), Err(HaystackError::Evidence(..))));
    assert!(matches!(build_multi(&t, &qa(vec![3, 9, 12]), &spec(2 * 129, 1.0)), Err(HaystackError::Spec(_))));
}

#[test]
fn proportional_gaps() {
    assert_eq!(proportional(10, &[90, 10]), vec![9, 1]);
    assert_eq!(proportional(3, &[1, 1, 1, 1]), vec![1, 1, 1, 0]);
    assert_eq!(proportional(100, &[2, 3]), vec![2, 3]);
    assert_eq!(proportional(5, &[0, 0]), vec![0, 0]);
}

#[test]
fn multi_fills_gaps_in_proportion() {
    let t = traj(200);
    let q = qa(vec![5, 96, 107]);
    let c = build_multi(&t, &q, &spec(23 * 129, 25.0)).unwrap();
    assert_eq!(c.included_steps.len(), 23);
    let between = |a: usize, b: usize| c.included_steps.iter().filter(|&&s| s > a && s < b).count();
    // 5 before the first needle, the other 15 split 90:10 over the gaps
    assert_eq!(between(0, 5) + usize::from(c.included_steps[0] == 0), 5);
    assert_eq!((between(5, 96), between(96, 107)), (14, 1));
    assert_eq!(c.realized_depths[0], 25.0);
    assert!(!c.clamped);

    // only 5 steps exist before the first needle
    let deep = build_multi(&t, &q, &spec(23 * 129, 100.0)).unwrap();
    assert_eq!(deep.realized_depths[0], 25.0);
    assert!(deep.clamped);

    let exact = build_multi(&t, &q, &spec(3 * 129, 50.0)).unwrap();
    assert_eq!(exact.included_steps, q.gt_steps);
}

#[test]
fn grid_marks_unreachable_lengths() {
    let t = traj(627);
    let q = qa(vec![300]);
    let lengths = geometric_lengths(8 * 1024, 1024 * 1024);
    assert_eq!(lengths.len(), 8);
    let depths = [0.0, 25.0, 50.0, 75.0, 100.0];
    let cfg = GridConfig {
        tokens_per_image: 121,
        text_tokens_per_step: 8,
        max_context: Some(128 * 1024),
    };
    let cells = build_grid(&t, &[q], &lengths, &depths, &cfg);
    assert_eq!(cells.len(), 40);
    let total = 627 * 129;
    for cell in &cells {
        let built = matches!(cell.outcome, CellOutcome::Built(_));
        // a 508-step window over 627 steps holds step 300 at depth 35.7..59.2 only
        let reachable = cell.length < 64 * 1024 || cell.depth == 50.0;
        assert_eq!(built, cell.length <= total && reachable, "{} {}", cell.length, cell.depth);
    }
    let rows = coverage(&cells, &lengths, &depths);
    let csv = heatmap_csv(&rows);
    assert!(csv.starts_with("length,depth,score\n8192,0,1.0000\n"));
    assert!(csv.contains("131072,50,N/A"));
}

proptest! {
    #[test]
    fn single_context_properties(n in 1usize..400, g_frac in 0.0f64..1.0, l_steps in 1usize..500, d in 0.0f64..=100.0) {
        let t = traj(n);
        let g = ((n - 1) as f64 * g_frac) as usize;
        let s = spec(l_steps as u64 * 129 + 64, d);
        let c = build_single(&t, &qa(vec![g]), &s).unwrap();
        prop_assert!(c.included_steps.contains(&g));
        prop_assert!(c.included_steps.windows(2).all(|w| w[1] == w[0] + 1));
        prop_assert!(c.realized_tokens <= s.target_tokens + s.step_cost());
        let w = c.included_steps.len();
        prop_assert_eq!(w, l_steps.min(n));
        // brute force over every window of this size holding the needle
        let best = (g.saturating_sub(w - 1)..=g.min(n - w))
            .map(|st| (window_depth(st, w, g, 129) - d).abs())
            .fold(f64::INFINITY, f64::min);
        let err = (c.realized_depths[0] - d).abs();
        prop_assert!((err - best).abs() < 1e-9, "err {} best {}", err, best);
        prop_assert_eq!(c.clamped, err > DEPTH_TOLERANCE);
        if best <= DEPTH_TOLERANCE {
            prop_assert!(err <= DEPTH_TOLERANCE);
        }
        let st = c.included_steps[0];
        prop_assert!((window_depth(st, w, g, 129) - c.realized_depths[0]).abs() < 1e-9);
    }

    #[test]
    fn multi_context_properties(n in 3usize..300, picks in proptest::collection::btree_set(0usize..300, 2..5), extra in 0usize..300, d in 0.0f64..=100.0) {
        let gt: Vec<usize> = picks.into_iter().filter(|&g| g < n).collect();
        prop_assume!(gt.len() >= 2);
        let t = traj(n);
        let s = spec((gt.len() + extra) as u64 * 129, d);
        let c = build_multi(&t, &qa(gt.clone()), &s).unwrap();
        prop_assert!(gt.iter().all(|g| c.included_steps.contains(g)));
        prop_assert!(c.included_steps.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(c.realized_tokens <= s.target_tokens);
        prop_assert_eq!(c.included_steps.len(), (gt.len() + extra).min(n));
        prop_assert_eq!(c.realized_depths.len(), gt.len());
        let filler = c.included_steps.len() - gt.len();
        let before = c.included_steps.iter().filter(|&&s| s < gt[0]).count();
        if filler > 0 {
            prop_assert_eq!(c.realized_depths[0], before as f64 / filler as f64 * 100.0);
            let want = (d / 100.0 * filler as f64).round() as usize;
            let room = gt[0] + (n - 1 - gt[gt.len() - 1]) + gt.windows(2).map(|w| w[1] - w[0] - 1).sum::<usize>();
            if want <= gt[0] && filler - want <= room - gt[0] {
                prop_assert_eq!(before, want);
            }
        }
        prop_assert_eq!(c.clamped, (c.realized_depths[0] - d).abs() > DEPTH_TOLERANCE);
    }
}
