use infogail::checkpoint::policy_json;
use infogail::models::GaussianPolicy;
use infogail_web::{bc_rollouts_json, checkpoint_rollouts_json, expert_demos_json};
use serde_json::Value;

fn parse(s: &str) -> Value {
    serde_json::from_str(s).unwrap()
}

#[test]
fn expert_scene_has_every_mode() {
    let v = parse(&expert_demos_json("petals", 2, 30, 0.1, 7).unwrap());
    assert_eq!(v["circles"].as_array().unwrap().len(), 3);
    let trajs = v["trajectories"].as_array().unwrap();
    assert_eq!(trajs.len(), 6);
    assert_eq!(trajs[0]["points"].as_array().unwrap().len(), 30);
    assert!(trajs[0]["code"].is_null());
    assert_eq!(trajs[5]["mode"], 2);
    assert_eq!(
        expert_demos_json("concentric", 1, 10, 0.1, 1).unwrap(),
        expert_demos_json("concentric", 1, 10, 0.1, 1).unwrap()
    );
}

#[test]
fn bad_inputs_are_errors() {
    assert!(expert_demos_json("spiral", 2, 30, 0.1, 0).is_err());
    assert!(expert_demos_json("petals", 0, 30, 0.1, 0).is_err());
    assert!(checkpoint_rollouts_json("{}", "petals", 3, 10, 0).is_err());
}

#[test]
fn bc_scene_cycles_codes() {
    let v = parse(&bc_rollouts_json("petals", 2, 2, 6, 3).unwrap());
    let codes: Vec<u64> = v["trajectories"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| t["code"].as_u64().unwrap())
        .collect();
    assert_eq!(codes, vec![0, 1, 2, 0, 1, 2]);
}

#[test]
fn checkpoint_scene_matches_steps() {
    let p = GaussianPolicy::new(&[8], 3, 0.1, 0).unwrap();
    let v = parse(&checkpoint_rollouts_json(&policy_json(&p).unwrap(), "petals", 4, 12, 0).unwrap());
    let trajs = v["trajectories"].as_array().unwrap();
    assert_eq!(trajs.len(), 4);
    assert!(trajs.iter().all(|t| t["points"].as_array().unwrap().len() == 12));
}
