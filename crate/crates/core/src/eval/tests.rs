use super::*;
use crate::scene::SceneConfig;
use crate::traj::{episode_seed, generate_trajectory, GenConfig};
use crate::wire::{Channel, HarnessMsg};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;

fn gen(n: usize, seed: u64) -> Trajectory {
    let scene = SceneConfig::preset("apartment").unwrap();
    let cfg = |attempt| GenConfig {
        max_sub_goals: n,
        seed: episode_seed(seed, 0, attempt),
        ..GenConfig::default()
    };
    (0..20)
        .find_map(|a| generate_trajectory(&cfg(a), &scene, "e").ok())
        .expect("trajectory")
}

fn plans(t: &Trajectory) -> usize {
    t.sub_goals.len() + 1
}

#[test]
fn oracle_collects_every_plan() {
    let t = gen(3, 21);
    for mode in [ContextMode::Interleaved, ContextMode::MemText, ContextMode::MemImage] {
        let cfg = EvalConfig { mode, ..EvalConfig::default() };
        let r = run_plan_level(&t, &mut OracleAgent::new(&t), &cfg).unwrap();
        assert_eq!(r.total_reward, plans(&t) as f64, "{mode:?}");
        assert!(r.plan_outcomes.iter().all(|o| o.success && o.failure_reason.is_none()));
    }
    let f = run_final_task(&t, &mut OracleAgent::new(&t), &EvalConfig::default()).unwrap();
    assert_eq!(f.total_reward, 1.0);
    assert_eq!(
        f.staged_success,
        Some(StagedSuccess { goto: true, pickup: true, put: true })
    );
}

#[test]
fn unparsable_action_ends_the_episode() {
    let t = gen(2, 4);
    let r = run_plan_level(&t, &mut ScriptedAgent::new(["Fly(Up)"]), &EvalConfig::default()).unwrap();
    assert_eq!(r.total_reward, 0.0);
    assert_eq!(r.plan_outcomes.len(), 1);
    assert_eq!(r.plan_outcomes[0].failure_reason, Some(PlanFailure::InvalidAction));
}

#[test]
fn idle_agent_deadlocks() {
    let t = gen(1, 4);
    let cfg = EvalConfig { deadlock_factor: 2, ..EvalConfig::default() };
    let r = run_plan_level(&t, &mut ScriptedAgent::new(["RotateLeft"]), &cfg).unwrap();
    let o = &r.plan_outcomes[0];
    assert_eq!(o.failure_reason, Some(PlanFailure::Deadlock));
    let gt = t.sub_goals[0].end_step + 1 - t.sub_goals[0].start_step;
    assert_eq!(o.steps, 2 * gt);
    assert_eq!(r.context_size_trace.len(), 2 * gt);
}

#[test]
fn random_agent_scores_below_oracle() {
    let (mut oracle, mut random) = (0.0, 0.0);
    for seed in 0..4 {
        let t = gen(2, 100 + seed);
        oracle += run_plan_level(&t, &mut OracleAgent::new(&t), &EvalConfig::default()).unwrap().total_reward;
        random += run_plan_level(&t, &mut RandomAgent::new(seed), &EvalConfig::default()).unwrap().total_reward;
    }
    assert!(random < oracle, "random {random} oracle {oracle}");
}

#[test]
fn navigating_only_reaches_the_first_stage() {
    let t = gen(1, 8);
    let mut script: Vec<String> = OracleAgent::new(&t).plans.last().unwrap().iter()
        .take_while(|a| !matches!(a, Action::PickupObject(_)))
        .map(|a| a.to_string())
        .collect();
    script.push("Fly(Up)".into());
    let mut agent = ScriptedAgent::new(script);
    let r = run_final_task(&t, &mut agent, &EvalConfig::default()).unwrap();
    let s = r.staged_success.unwrap();
    assert!(s.goto && !s.pickup && !s.put, "{s:?}");
    assert_eq!(r.total_reward, 0.0);
}

#[test]
fn stages_are_nested() {
    for seed in 0..6 {
        let t = gen(1, 200 + seed);
        let r = run_final_task(&t, &mut RandomAgent::new(seed), &EvalConfig::default()).unwrap();
        let s = r.staged_success.unwrap();
        assert!(!s.put || s.pickup);
        assert!(!s.pickup || s.goto);
    }
}

#[test]
fn interleaved_layout_and_token_count() {
    let t = gen(1, 5);
    let costs = TokenCosts { per_image: 100, per_action: 10 };
    let h = &t.steps[..3];
    let ctx = build_interleaved(h, "do it", u64::MAX, 8, &costs).unwrap();
    let a = |i: usize| Entry::Action(h[i].action.as_ref().unwrap().to_string());
    assert_eq!(
        ctx.entries,
        vec![Entry::Goal("do it".into()), Entry::State(0), a(1), Entry::State(1), a(2), Entry::State(2)]
    );
    assert_eq!(ctx.tokens, crate::traj::goal_tokens("do it") + 3 * 100 + 2 * 10);
    assert_eq!(ctx.tokens, count_tokens(&ctx.entries, &costs));
    assert!(!ctx.truncated);
}

#[test]
fn eviction_drops_oldest_and_keeps_goal() {
    let t = gen(2, 5);
    let costs = TokenCosts { per_image: 100, per_action: 10 };
    let g = crate::traj::goal_tokens("goal");
    let budget = g + 5 * 110;
    let ctx = build_interleaved(&t.steps, "goal", budget, 3, &costs).unwrap();
    assert!(ctx.truncated);
    assert!(ctx.tokens <= budget);
    assert_eq!(ctx.entries[0], Entry::Goal("goal".into()));
    let last = t.steps.len() - 1;
    assert_eq!(ctx.entries.last(), Some(&Entry::State(last)));
    let states: Vec<usize> = ctx
        .entries
        .iter()
        .filter_map(|e| match e {
            Entry::State(s) => Some(*s),
            _ => None,
        })
        .collect();
    assert_eq!(states, (last + 1 - states.len()..=last).collect::<Vec<_>>());

    // below the kept window, older kept states still go, down to the current one
    let tight = build_interleaved(&t.steps, "goal", g + 100, 3, &costs).unwrap();
    assert_eq!(tight.entries, vec![Entry::Goal("goal".into()), Entry::State(last)]);
    assert!(build_interleaved(&t.steps, "goal", g + 99, 3, &costs).is_err());
}

#[test]
fn text_memory_lists_interactions_and_contents() {
    let t = gen(1, 6);
    let names = NameTable::for_trajectory(&t);
    let mem = build_text_memory(&t.steps, &names);
    let picks = t
        .steps
        .iter()
        .filter(|s| matches!(s.action, Some(Action::PickupObject(_))))
        .count();
    assert_eq!(mem.matches(": picked up ").count(), picks);
    assert!(mem.lines().any(|l| l.starts_with("on ") || l.starts_with("in ")));
}

struct Fixed(Vec<Vec<f64>>);

impl Embedder for Fixed {
    fn embed_observation(&self, m: &crate::world::MetadataEntry) -> Vec<f64> {
        self.0[m.step].clone()
    }
    fn embed_goal(&self, _: &Goal) -> Vec<f64> {
        vec![1.0, 0.0]
    }
}

#[test]
fn top_k_breaks_ties_by_earlier_step() {
    let t = gen(1, 7);
    let h = &t.steps[..5];
    let e = Fixed(vec![vec![0.0, 1.0], vec![1.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 0.0]]);
    let goal = &t.final_goal.plan.goal;
    let r = retrieve_image_memory(h, goal, 3, &e).unwrap();
    assert_eq!(r.ranked, vec![2, 4, 1]);
    assert!(!r.short);
    let all = retrieve_image_memory(h, goal, 9, &e).unwrap();
    assert_eq!(all.ranked, vec![2, 4, 1, 3, 0]);
    assert!(all.short);
    assert!(retrieve_image_memory(h, goal, 0, &e).is_err());
}

#[test]
fn cosine_of_parallel_and_orthogonal() {
    assert!((cosine(&[1.0, 2.0], &[2.0, 4.0]) - 1.0).abs() < 1e-12);
    assert_eq!(cosine(&[1.0, 0.0], &[0.0, 3.0]), 0.0);
    assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
}

/// A peer that drives an oracle over TCP; `garble` makes it answer the first
/// observation with junk.
fn oracle_peer(t: Trajectory, garble: bool) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut w = stream.try_clone().unwrap();
        let mut oracle = OracleAgent::new(&t);
        for line in BufReader::new(stream).lines() {
            let Ok(line) = line else { break };
            let reply = match serde_json::from_str::<HarnessMsg>(&line).unwrap() {
                HarnessMsg::Hello { .. } => r#"{"type":"hello","protocol":1,"name":"oracle"}"#.to_string(),
                HarnessMsg::Init { config, .. } => {
                    let start = PlanStart {
                        plan_index: config["plan"].as_u64().unwrap() as usize,
                        goal: "",
                        mode: "",
                        config: Value::Null,
                        context: Value::Null,
                    };
                    oracle.begin(&start).unwrap();
                    continue;
                }
                HarnessMsg::Observe { observation, .. } if garble => {
                    let _ = observation;
                    "{not json".to_string()
                }
                HarnessMsg::Observe { observation, .. } => {
                    let obs = serde_json::from_value(observation).unwrap();
                    let action = oracle.act(&obs, 0).unwrap();
                    serde_json::json!({"type": "act", "action": action}).to_string()
                }
                _ => continue,
            };
            if writeln!(w, "{reply}").is_err() {
                break;
            }
        }
    });
    addr
}

#[test]
fn wire_agent_matches_in_process_oracle() {
    let t = gen(2, 9);
    let mut ch = Channel::connect(&oracle_peer(t.clone(), false), Duration::from_secs(10)).unwrap();
    ch.handshake().unwrap();
    let r = run_plan_level(&t, &mut WireAgent::new(ch), &EvalConfig::default()).unwrap();
    assert_eq!(r.total_reward, plans(&t) as f64);
}

#[test]
fn malformed_reply_is_a_protocol_error() {
    let t = gen(1, 9);
    let mut ch = Channel::connect(&oracle_peer(t.clone(), true), Duration::from_secs(10)).unwrap();
    ch.handshake().unwrap();
    let r = run_plan_level(&t, &mut WireAgent::new(ch), &EvalConfig::default()).unwrap();
    assert_eq!(r.total_reward, 0.0);
    assert_eq!(r.plan_outcomes[0].failure_reason, Some(PlanFailure::ProtocolError));
}

#[test]
fn stage_rates_average_reports() {
    let mk = |goto, pickup, put| EpisodeReport {
        trajectory_id: "x".into(),
        mode: ContextMode::Interleaved,
        total_reward: 0.0,
        plan_outcomes: vec![],
        staged_success: Some(StagedSuccess { goto, pickup, put }),
        context_size_trace: vec![],
    };
    let reports = [mk(true, true, true), mk(true, false, false), mk(false, false, false), mk(true, true, false)];
    let r = StageRates::from_reports(&reports);
    assert_eq!(r.episodes, 4);
    assert_eq!((r.goto, r.pickup, r.put), (0.75, 0.5, 0.25));
}
