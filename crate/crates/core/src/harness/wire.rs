//! Line-delimited JSON messages exchanged with the operator UI.
//!
//! Server to client: `mesh`, `contact`, `state`. Client to server: `pose`,
//! `jog`, `stop`. Every message is one JSON object on one line with the tag
//! in field `t`.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::script::{Jog, OperatorCommand};
use crate::contact::ContactEvent;
use crate::geometry::Vec3;
use crate::slam::Pose;

fn arr(v: &Vec3) -> [f64; 3] {
    [v.x, v.y, v.z]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMsg {
    /// "local" (predicted) or "echo" (reported by the follower).
    pub side: String,
    pub proxy: usize,
    pub triangle: u32,
    pub witness: [f64; 3],
    pub gap: f64,
    pub normal: [f64; 3],
    pub force: [f64; 3],
    pub mesh_version: u64,
    pub timestamp: f64,
}

impl ContactMsg {
    pub fn new(side: &str, e: &ContactEvent) -> Self {
        ContactMsg {
            side: side.into(),
            proxy: e.proxy,
            triangle: e.triangle,
            witness: arr(&e.witness),
            gap: e.gap,
            normal: arr(&e.normal),
            force: arr(&e.force),
            mesh_version: e.mesh_version,
            timestamp: e.timestamp,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinState {
    pub time: f64,
    pub positions: Vec<f64>,
    /// World-frame proxy spheres as [x, y, z, radius].
    pub proxies: Vec<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase")]
pub enum ServerMsg {
    Mesh { version: u64, url: String, triangles: usize, texture_keyframe: Option<u64> },
    Contact(ContactMsg),
    State { local: TwinState, echo: Option<TwinState> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "t", rename_all = "lowercase", deny_unknown_fields)]
pub enum ClientMsg {
    /// Either `eye` + `target`, or `translation` + `rotation` ([x, y, z, w]).
    Pose {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        eye: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        translation: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rotation: Option<[f64; 4]>,
    },
    /// Exactly one of `delta` (Cartesian, meters) or `joints`.
    Jog {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        delta: Option<[f64; 3]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        joints: Option<Vec<f64>>,
    },
    Stop,
}

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("malformed message: {0}")]
    Json(String),
    #[error("invalid message: {0}")]
    Invalid(&'static str),
}

pub fn to_line<T: Serialize>(msg: &T) -> String {
    let mut s = serde_json::to_string(msg).expect("wire types serialize");
    s.push('\n');
    s
}

pub fn parse_client_line(line: &str) -> Result<ClientMsg, WireError> {
    serde_json::from_str(line.trim()).map_err(|e| WireError::Json(e.to_string()))
}

pub fn parse_server_line(line: &str) -> Result<ServerMsg, WireError> {
    serde_json::from_str(line.trim()).map_err(|e| WireError::Json(e.to_string()))
}

impl ClientMsg {
    pub fn into_command(self) -> Result<OperatorCommand, WireError> {
        match self {
            ClientMsg::Pose { eye: Some(e), target: Some(t), translation: None, rotation: None } => {
                let (e, t) = (Vec3::from(e), Vec3::from(t));
                if (e - t).norm() == 0.0 {
                    return Err(WireError::Invalid("eye equals target"));
                }
                Ok(OperatorCommand::CameraPose(Pose::look_at(e, t, Vec3::z())))
            }
            ClientMsg::Pose { eye: None, target: None, translation: Some(tr), rotation: Some([x, y, z, w]) } => {
                let q = Quaternion::new(w, x, y, z);
                if !(q.norm() > 0.0) || !q.norm().is_finite() {
                    return Err(WireError::Invalid("degenerate rotation"));
                }
                Ok(OperatorCommand::CameraPose(Pose { rotation: UnitQuaternion::from_quaternion(q), translation: Vec3::from(tr) }))
            }
            ClientMsg::Pose { .. } => Err(WireError::Invalid("pose needs eye+target or translation+rotation")),
            ClientMsg::Jog { delta: Some(d), joints: None } => Ok(OperatorCommand::EndEffectorJog(Jog::Cartesian(Vec3::from(d)))),
            ClientMsg::Jog { delta: None, joints: Some(j) } => Ok(OperatorCommand::EndEffectorJog(Jog::Joints(j))),
            ClientMsg::Jog { .. } => Err(WireError::Invalid("jog needs exactly one of delta or joints")),
            ClientMsg::Stop => Ok(OperatorCommand::Stop),
        }
    }
}
