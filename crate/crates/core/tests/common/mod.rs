#![allow(dead_code)]

use armtwin_core::kinematics::KinematicChain;

pub const DT: f64 = 1.0 / 35.0;

/// Two equal links folding about z. Moving (-t, 2t) -> (0, 0) keeps the tip on
/// the x axis, so the joint-space line is an exactly straight TCP line of
/// length 2l(1 - cos t).
pub fn folding_chain(link: f64) -> KinematicChain {
    let doc = format!(
        r#"{{
  "base": {{"t": [0, 0, 0], "q": [1, 0, 0, 0]}},
  "tool": {{"t": [{link}, 0, 0], "q": [1, 0, 0, 0]}},
  "reach_radius_m": {reach},
  "joints": [
    {{"axis": [0, 0, 1], "origin_t": [0, 0, 0], "origin_q": [1, 0, 0, 0], "limits": [-3, 3], "max_vel": 50}},
    {{"axis": [0, 0, 1], "origin_t": [{link}, 0, 0], "origin_q": [1, 0, 0, 0], "limits": [-3, 3], "max_vel": 50}}
  ]
}}"#,
        reach = 2.0 * link
    );
    KinematicChain::from_json(&doc).unwrap()
}

/// Fold angle whose straightening moves the tip by `distance`.
pub fn fold_angle(link: f64, distance: f64) -> f64 {
    (1.0 - distance / (2.0 * link)).acos()
}

/// A "ready" pose of the reference arm: tool in front of the base, pointing down.
pub fn ready_pose() -> Vec<f64> {
    vec![std::f64::consts::FRAC_PI_2, 0.5, 1.2, std::f64::consts::PI - 1.7, 0.0, 0.0]
}
