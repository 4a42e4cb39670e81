//! Operator commands and scripted operators.

use serde::Deserialize;

use super::channel::{micros, Micros};
use crate::geometry::Vec3;
use crate::slam::Pose;

#[derive(Debug, Clone, PartialEq)]
pub enum Jog {
    /// End-effector displacement (meters).
    Cartesian(Vec3),
    /// Joint displacement (radians or meters per joint).
    Joints(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OperatorCommand {
    CameraPose(Pose),
    EndEffectorJog(Jog),
    Stop,
}

impl Jog {
    /// Scales or clips the delta to the per-step maxima.
    pub fn bounded(&self, max_step: f64, max_joint_step: f64) -> Jog {
        match self {
            Jog::Cartesian(d) => {
                let n = d.norm();
                Jog::Cartesian(if n > max_step { d * (max_step / n) } else { *d })
            }
            Jog::Joints(d) => Jog::Joints(d.iter().map(|x| x.clamp(-max_joint_step, max_joint_step)).collect()),
        }
    }
}

/// One entry of a scripted operator. Times are seconds of simulated time;
/// `until` is exclusive.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScriptStep {
    /// Cartesian end-effector velocity (m/s), one jog per haptic tick.
    Jog { from: f64, until: f64, velocity: [f64; 3] },
    /// Joint velocities, one jog per haptic tick.
    JogJoints { from: f64, until: f64, velocity: Vec<f64> },
    Stop { at: f64 },
    Camera { at: f64, eye: [f64; 3], target: [f64; 3] },
    /// Camera poses at `rate` Hz on a circle of `radius` at `height`.
    CameraSweep { from: f64, until: f64, rate: f64, radius: f64, height: f64 },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorScript {
    pub steps: Vec<ScriptStep>,
}

impl OperatorScript {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        OperatorScript { steps }
    }

    /// Commands issued during the tick `[now, now + tick)`, in step order.
    pub fn commands(&self, now: Micros, tick: Micros) -> Vec<OperatorCommand> {
        let dt = tick as f64 * 1e-6;
        let in_tick = |t: Micros| t >= now && t < now + tick;
        let active = |from: f64, until: f64| now >= micros(from) && now < micros(until);
        let mut out = Vec::new();
        for s in &self.steps {
            match s {
                ScriptStep::Jog { from, until, velocity } if active(*from, *until) => {
                    out.push(OperatorCommand::EndEffectorJog(Jog::Cartesian(Vec3::from(*velocity) * dt)));
                }
                ScriptStep::JogJoints { from, until, velocity } if active(*from, *until) => {
                    out.push(OperatorCommand::EndEffectorJog(Jog::Joints(velocity.iter().map(|v| v * dt).collect())));
                }
                ScriptStep::Stop { at } if in_tick(micros(*at)) => out.push(OperatorCommand::Stop),
                ScriptStep::Camera { at, eye, target } if in_tick(micros(*at)) => {
                    out.push(OperatorCommand::CameraPose(Pose::look_at(Vec3::from(*eye), Vec3::from(*target), Vec3::z())));
                }
                ScriptStep::CameraSweep { from, until, rate, radius, height } => {
                    let (t0, t1) = (micros(*from), micros(*until));
                    let period = 1.0 / rate;
                    let first = ((now.saturating_sub(t0)) as f64 * 1e-6 / period).floor() as u64;
                    for k in first.saturating_sub(1)..first + 2 {
                        let t = t0 + micros(k as f64 * period);
                        if t < t1 && in_tick(t) {
                            let a = k as f64 * 0.05;
                            let eye = Vec3::new(radius * a.cos(), radius * a.sin(), *height);
                            out.push(OperatorCommand::CameraPose(Pose::look_at(eye, Vec3::zeros(), Vec3::z())));
                        }
                    }
                }
                _ => {}
            }
        }
        out
    }
}
