//! Plan-level evaluation of three agents: the in-process oracle, a random
//! agent and the oracle again behind the wire protocol on a local socket.

use forge_core::eval::{run_final_task, run_plan_level, Agent, EvalConfig, OracleAgent, PlanStart, RandomAgent, WireAgent};
use forge_core::scene::SceneConfig;
use forge_core::traj::{generate_trajectory, GenConfig, Trajectory};
use forge_core::wire::{Channel, HarnessMsg};
use serde_json::{json, Value};
use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::time::Duration;

/// Serves one connection, answering observations with oracle actions.
fn serve_oracle(traj: Trajectory) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    std::thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut out = stream.try_clone().unwrap();
        let mut oracle = OracleAgent::new(&traj);
        for line in BufReader::new(stream).lines().map_while(Result::ok) {
            let reply = match serde_json::from_str::<HarnessMsg>(&line) {
                Ok(HarnessMsg::Hello { .. }) => json!({"type": "hello", "protocol": 1, "name": "example"}),
                Ok(HarnessMsg::Init { config, .. }) => {
                    let start = PlanStart {
                        plan_index: config["plan"].as_u64().unwrap_or(0) as usize,
                        goal: "",
                        mode: "",
                        config: Value::Null,
                        context: Value::Null,
                    };
                    oracle.begin(&start).unwrap();
                    continue;
                }
                Ok(HarnessMsg::Observe { observation, .. }) => {
                    let action = oracle.act(&serde_json::from_value(observation).unwrap(), 0).unwrap();
                    json!({"type": "act", "action": action})
                }
                _ => continue,
            };
            if writeln!(out, "{reply}").is_err() {
                break;
            }
        }
    });
    addr
}

fn main() {
    let scene = SceneConfig::preset("kitchen").unwrap();
    let gen = GenConfig {
        max_sub_goals: 4,
        seed: 11,
        ..GenConfig::default()
    };
    let traj = generate_trajectory(&gen, &scene, "demo").unwrap();
    let cfg = EvalConfig::default();
    let plans = traj.sub_goals.len() + 1;

    let mut channel = Channel::connect(&serve_oracle(traj.clone()), Duration::from_secs(5)).unwrap();
    channel.handshake().unwrap();
    let agents: Vec<(&str, Box<dyn Agent>)> = vec![
        ("oracle", Box::new(OracleAgent::new(&traj))),
        ("random", Box::new(RandomAgent::new(1))),
        ("wire oracle", Box::new(WireAgent::new(channel))),
    ];
    for (name, mut agent) in agents {
        let r = run_plan_level(&traj, agent.as_mut(), &cfg).unwrap();
        let last = r.plan_outcomes.last().unwrap();
        println!("{name:<12} R = {}/{plans}  last plan: {:?}", r.total_reward, last.failure_reason);
    }
    let fin = run_final_task(&traj, &mut RandomAgent::new(2), &cfg).unwrap();
    println!("random final task stages: {:?}", fin.staged_success.unwrap());
}
