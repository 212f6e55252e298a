//! Built-in scenarios: a Mathieu-equation filter and a four-agent ring.

use std::f64::consts::PI;

use super::config::{AgentConfig, DesignConfig, InitialState, Mode, ScenarioConfig, SystemSpec};
use crate::graph::{Circle, Edge, InteractionGraph};
use crate::linalg::{Mat, SpdMat};
use crate::sdp::TolProfile;
use crate::system::{CoefficientSample, DisturbanceRealization, MathieuParams};

pub const PRESETS: [&str; 2] = ["example1", "example2"];

fn spd_identity(n: usize, s: f64) -> SpdMat {
    SpdMat::scaled_identity(n, s).expect("positive scale")
}

/// Mathieu oscillator tracked by a single filter over 201 samples.
pub fn example1() -> ScenarioConfig {
    let omega = 2.0 * PI;
    let dt = 0.1;
    let sinusoid = DisturbanceRealization::Sinusoidal { amplitude: vec![0.05], frequency: omega, phase: 0.0, dt };
    ScenarioConfig {
        name: "example1".into(),
        mode: Mode::SingleFilter,
        system: SystemSpec::Mathieu(MathieuParams { omega, omega0: PI, epsilon: 0.3, dt, sample: CoefficientSample::End }),
        agents: vec![AgentConfig {
            x0: InitialState::Fixed(vec![0.5, 0.0]),
            x_hat0: vec![0.0, 0.0],
            p0: spd_identity(2, 10.5),
            q: spd_identity(1, 0.0025),
            r: spd_identity(1, 0.0025),
            w: sinusoid.clone(),
            v: sinusoid,
        }],
        graph: None,
        design: None,
        leader_x0: None,
        horizon: 200,
        seed: 0,
        tol_profile: TolProfile::Default,
        output: None,
    }
}

/// Uniform disturbance half width and `(Q, R)` scales of the three disturbance settings.
pub fn example2_setting(setting: u8) -> Option<(f64, f64, f64)> {
    match setting {
        1 => Some((0.05, 0.1, 0.1)),
        2 => Some((0.5, 1.0, 1.0)),
        3 => Some((1.0, 2.0, 1.0)),
        _ => None,
    }
}

/// Four followers on a pinned ring tracking a rotating leader.
pub fn example2(setting: u8) -> Option<ScenarioConfig> {
    let (half, q, r) = example2_setting(setting)?;
    let a = Mat::from_rows(&[[0.0, -1.0], [1.0, 0.0]]);
    let agents = [[50.0, -50.0], [50.0, -50.0], [-50.0, 50.0], [-50.0, 50.0]]
        .iter()
        .map(|c| AgentConfig {
            x0: InitialState::Uniform { low: c.to_vec(), high: vec![c[0] + 1.0, c[1] + 1.0] },
            x_hat0: c.to_vec(),
            p0: spd_identity(2, 2.0),
            q: spd_identity(2, q),
            r: spd_identity(1, r),
            w: DisturbanceRealization::UniformBox { half_widths: vec![half; 2] },
            v: DisturbanceRealization::UniformBox { half_widths: vec![half] },
        })
        .collect();
    let edges = [Edge::unit(3, 0), Edge::unit(0, 1), Edge::unit(1, 2), Edge::unit(2, 3)];
    let graph = InteractionGraph::from_edges(4, &edges, vec![1.0, 0.0, 0.0, 0.0]).expect("valid ring");
    let name = if setting == 1 { "example2".to_string() } else { format!("example2-setting{setting}") };
    Some(ScenarioConfig {
        name,
        mode: Mode::MultiAgent,
        system: SystemSpec::Matrices {
            a,
            b: Mat::identity(2),
            g: Mat::identity(2),
            c: Mat::row(&[1.0, 0.0]),
            d: Mat::identity(1),
        },
        agents,
        graph: Some(graph),
        design: Some(DesignConfig {
            q: spd_identity(2, 0.1),
            circle: Some(Circle { c0: 2.0 / 3.0, r0: 0.6 }),
            certificate: Some((1.1, 0.9)),
            p0: Some(2.0),
            q_bar: Some(q),
            r_bar: Some(r),
        }),
        leader_x0: Some(vec![5.0, -5.0]),
        horizon: 60,
        seed: 0,
        tol_profile: TolProfile::Default,
        output: None,
    })
}

pub fn preset(name: &str, setting: u8) -> Option<ScenarioConfig> {
    match name {
        "example1" => Some(example1()),
        "example2" => example2(setting),
        _ => None,
    }
}
