use serde_json::json;
use tlcontrol::motion::{JointGroup, PartialTrajectory};
use tlcontrol::wire::{GenerateRequest, TrajectorySpec};

fn request(v: serde_json::Value) -> GenerateRequest {
    serde_json::from_value(v).unwrap()
}

fn traj(controls: serde_json::Value) -> serde_json::Value {
    json!({"length": 8, "controls": controls})
}

#[test]
fn wire_names_round_trip_through_partial_trajectories() {
    let mut t = PartialTrajectory::empty(8);
    t.set(JointGroup::Root, 0, [0.0, 0.9, 0.0]);
    t.set(JointGroup::Root, 5, [1.0, 0.9, 0.5]);
    t.set(JointGroup::LeftArm, 2, [0.3, 1.2, 0.1]);
    let spec = TrajectorySpec::from_partial(&t);
    let names: Vec<_> = spec.controls.iter().map(|c| c.joint_group.as_str()).collect();
    assert_eq!(names, ["left_hand", "root"]);
    let back: TrajectorySpec = serde_json::from_str(&serde_json::to_string(&spec).unwrap()).unwrap();
    assert_eq!(back.to_partial().unwrap(), t);
}

#[test]
fn defaults_fill_omitted_fields() {
    let r = request(json!({"text": "walk"}));
    let v = r.validate(8, 4).unwrap();
    assert_eq!((v.seed, v.num_samples), (0, 1));
    assert_eq!(v.trajectory.num_specified(), 0);
    assert_eq!(v.optimize.tolerance, tlcontrol::optim::OptimizeConfig::default().tolerance);
}

#[test]
fn each_invalid_field_is_named() {
    let one = |g: &str, f: i64| traj(json!([{"joint_group": g, "waypoints": [{"frame": f, "position": [0.0, 1.0, 0.0]}]}]));
    let cases = [
        (json!({"text": "", "trajectory": null}), "text"),
        (json!({"text": "", "trajectory": traj(json!([]))}), "text"),
        (json!({"text": "w", "num_samples": 0}), "num_samples"),
        (json!({"text": "w", "num_samples": 5}), "num_samples"),
        (json!({"text": "w", "optimize": {"tolerance": 0.0}}), "optimize.tolerance"),
        (json!({"text": "w", "optimize": {"max_iterations": 0}}), "optimize.max_iterations"),
        (json!({"text": "w", "trajectory": {"length": 9, "controls": []}}), "trajectory.length"),
        (json!({"text": "w", "trajectory": one("pelvis", 0)}), "trajectory.controls[0].joint_group"),
        (json!({"text": "w", "trajectory": one("root", 8)}), "trajectory.controls[0].waypoints[0].frame"),
    ];
    for (body, field) in cases {
        let err = request(body.clone()).validate(8, 4).unwrap_err();
        assert_eq!(err.field, field, "{body}");
    }
    let dup = traj(json!([
        {"joint_group": "root", "waypoints": []},
        {"joint_group": "root", "waypoints": []}
    ]));
    assert_eq!(request(json!({"text": "w", "trajectory": dup})).validate(8, 4).unwrap_err().field, "trajectory.controls[1].joint_group");
    let repeated = traj(json!([{"joint_group": "head", "waypoints": [
        {"frame": 1, "position": [0.0, 1.0, 0.0]},
        {"frame": 1, "position": [0.0, 1.5, 0.0]}
    ]}]));
    assert_eq!(
        request(json!({"text": "w", "trajectory": repeated})).validate(8, 4).unwrap_err().field,
        "trajectory.controls[0].waypoints[1].frame"
    );
}

#[test]
fn trajectory_alone_is_a_valid_request() {
    let t = traj(json!([{"joint_group": "right_foot", "waypoints": [{"frame": 3, "position": [0.1, 0.05, 0.2]}]}]));
    let v = request(json!({"trajectory": t, "num_samples": 4})).validate(8, 4).unwrap();
    assert_eq!(v.trajectory.get(JointGroup::RightLeg, 3), Some([0.1, 0.05, 0.2]));
    assert_eq!(v.trajectory.num_specified(), 1);
}
