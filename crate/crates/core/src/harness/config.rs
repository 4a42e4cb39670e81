//! Session configuration (TOML).
//!
//! ```toml
//! seed = 1
//! duration = 8.0                 # simulated seconds
//!
//! [channel]                      # one-way, both directions
//! latency = 0.5
//! jitter = 0.0
//! rate_cap = 1000.0
//! loss = 0.0
//!
//! [arm]
//! model = "gantry"               # "gantry", "seven_dof" or a TOML path
//! home = [0.0, 0.0, 0.3]
//! damping = 0.001
//! max_jog_step = 0.01            # meters per tick
//! max_joint_step = 0.05          # per tick
//!
//! [haptics]
//! min_depth = 0.020
//! force = 10.0
//! rate = 250.0
//!
//! [frontend]
//! kind = "synthetic"             # or "file"
//! scene = "floor"                # "floor", "cube", "cube_on_floor"
//! keyframes = 12
//! points_per_keyframe = 300
//! noise_sigma = 0.0
//! keyframe_rate = 15.0
//! # kind = "file": path = "stream.txt", ground_truth = "scene.obj"
//!
//! [session]
//! pose_rate = 30.0
//! state_rate = 30.0
//! texture_pose_source = "operator"   # or "slam"
//! pace = false
//!
//! [[operator.script]]
//! kind = "jog"
//! from = 1.0
//! until = 4.0
//! velocity = [0.0, 0.0, -0.1]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::channel::ChannelParams;
use super::script::ScriptStep;
use crate::contact::HapticParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config: {0}")]
    Parse(String),
    #[error("config field `{field}`: {msg}")]
    Invalid { field: String, msg: String },
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub latency: f64,
    pub jitter: f64,
    pub rate_cap: f64,
    pub loss: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let p = ChannelParams::default();
        ChannelConfig { latency: p.latency, jitter: p.jitter, rate_cap: p.rate_cap, loss: p.loss }
    }
}

impl ChannelConfig {
    pub fn params(&self) -> ChannelParams {
        ChannelParams { latency: self.latency, jitter: self.jitter, rate_cap: self.rate_cap, loss: self.loss }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArmConfig {
    pub model: String,
    pub home: Option<Vec<f64>>,
    pub damping: f64,
    pub max_jog_step: f64,
    pub max_joint_step: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig { model: "gantry".into(), home: None, damping: 1e-3, max_jog_step: 0.01, max_joint_step: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HapticsConfig {
    pub min_depth: f64,
    pub force: f64,
    pub rate: f64,
}

impl Default for HapticsConfig {
    fn default() -> Self {
        let p = HapticParams::default();
        HapticsConfig { min_depth: p.min_depth, force: p.force, rate: p.rate_hz }
    }
}

impl HapticsConfig {
    pub fn params(&self) -> HapticParams {
        HapticParams { min_depth: self.min_depth, force: self.force, rate_hz: self.rate }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrontendKind {
    Synthetic,
    File,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneKind {
    Floor,
    Cube,
    CubeOnFloor,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendConfig {
    pub kind: FrontendKind,
    pub scene: SceneKind,
    pub keyframes: usize,
    pub points_per_keyframe: usize,
    pub noise_sigma: f64,
    pub keyframe_rate: f64,
    pub ba_interval: usize,
    pub path: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            kind: FrontendKind::Synthetic,
            scene: SceneKind::Floor,
            keyframes: 12,
            points_per_keyframe: 300,
            noise_sigma: 0.0,
            keyframe_rate: 15.0,
            ba_interval: 0,
            path: None,
            ground_truth: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Operator,
    Slam,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionOptions {
    pub pose_rate: f64,
    pub state_rate: f64,
    pub texture_pose_source: PoseSource,
    pub pace: bool,
}

impl Default for SessionOptions {
    fn default() -> Self {
        SessionOptions { pose_rate: 30.0, state_rate: 30.0, texture_pose_source: PoseSource::Operator, pace: false }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OperatorConfig {
    pub script: Vec<ScriptStep>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub seed: u64,
    pub duration: f64,
    pub channel: ChannelConfig,
    pub arm: ArmConfig,
    pub haptics: HapticsConfig,
    pub frontend: FrontendConfig,
    pub session: SessionOptions,
    pub operator: OperatorConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            seed: 1,
            duration: 8.0,
            channel: ChannelConfig::default(),
            arm: ArmConfig::default(),
            haptics: HapticsConfig::default(),
            frontend: FrontendConfig::default(),
            session: SessionOptions::default(),
            operator: OperatorConfig::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

fn finite_nonneg(field: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and >= 0, got {x}")))
    }
}

fn positive(field: &str, x: f64) -> Result<(), ConfigError> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be finite and > 0, got {x}")))
    }
}

impl SessionConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SessionConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.into(), msg: e.to_string() })?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        positive("duration", self.duration)?;
        finite_nonneg("channel.latency", self.channel.latency)?;
        finite_nonneg("channel.jitter", self.channel.jitter)?;
        positive("channel.rate_cap", self.channel.rate_cap)?;
        if !(0.0..=1.0).contains(&self.channel.loss) {
            return Err(invalid("channel.loss", format!("must be in [0, 1], got {}", self.channel.loss)));
        }
        finite_nonneg("arm.damping", self.arm.damping)?;
        positive("arm.max_jog_step", self.arm.max_jog_step)?;
        positive("arm.max_joint_step", self.arm.max_joint_step)?;
        finite_nonneg("haptics.min_depth", self.haptics.min_depth)?;
        finite_nonneg("haptics.force", self.haptics.force)?;
        positive("haptics.rate", self.haptics.rate)?;
        positive("frontend.keyframe_rate", self.frontend.keyframe_rate)?;
        finite_nonneg("frontend.noise_sigma", self.frontend.noise_sigma)?;
        match self.frontend.kind {
            FrontendKind::Synthetic => {
                if self.frontend.keyframes == 0 {
                    return Err(invalid("frontend.keyframes", "must be >= 1"));
                }
            }
            FrontendKind::File => {
                if self.frontend.path.is_none() {
                    return Err(invalid("frontend.path", "required when kind = \"file\""));
                }
                if self.frontend.ground_truth.is_none() {
                    return Err(invalid("frontend.ground_truth", "required when kind = \"file\""));
                }
            }
        }
        positive("session.pose_rate", self.session.pose_rate)?;
        positive("session.state_rate", self.session.state_rate)?;
        for (i, s) in self.operator.script.iter().enumerate() {
            let field = format!("operator.script[{i}]");
            match s {
                ScriptStep::Jog { from, until, .. } | ScriptStep::JogJoints { from, until, .. } => {
                    if !(from <= until) || *from < 0.0 {
                        return Err(invalid(&field, format!("need 0 <= from <= until, got {from}..{until}")));
                    }
                }
                ScriptStep::CameraSweep { from, until, rate, .. } => {
                    if !(from <= until) || *from < 0.0 {
                        return Err(invalid(&field, format!("need 0 <= from <= until, got {from}..{until}")));
                    }
                    positive(&format!("{field}.rate"), *rate)?;
                }
                ScriptStep::Stop { at } | ScriptStep::Camera { at, .. } => finite_nonneg(&format!("{field}.at"), *at)?,
            }
        }
        Ok(())
    }
}
