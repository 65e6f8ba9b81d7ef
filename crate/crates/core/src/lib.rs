//! Deterministic control stack and desk-scale plant simulator for a
//! vision-enabled pediatric prosthetic hand.
//!
//! The crate is organised around the stages of the grasp pipeline:
//!
//! - [`tensor`] — minimal tensor engine: forward kernels, losses,
//!   reverse-mode gradients and power-of-two INT8 quantization.
//! - [`models`] — the gesture CNN and the dual-head force/grasp network:
//!   builders, training loops, INT8 inference and serialization.
//! - [`detection`] — object-detection post-processing: YOLO head decode,
//!   NMS, mAP@0.5 evaluation and bbox-size target selection.
//! - [`plant`] — finger/servo dynamics, scene objects, sensor synthesis
//!   and the 9 FPS camera with a ground-truth stub detector.
//! - [`controller`] — the grasp pipeline state machine and the episode
//!   runner that wires the controller to the plant tick by tick.
//! - [`power`] — battery and per-module power-state accounting.
//! - [`scenario`] — scenario and report schemas shared with the CLI.
//!
//! Everything is deterministic: all randomness flows from explicit seeds,
//! and identical inputs produce bit-identical outputs.

pub mod controller;
pub mod detection;
pub mod models;
pub mod objects;
pub mod plant;
pub mod power;
pub mod rng;
pub mod scenario;
pub mod tensor;

pub use detection::{Detection, GroundTruth, TrackedDetection, YoloHead};
pub use models::{GestureClass, GestureWindow, GraspDecision, GraspPattern, ModelGraph};
pub use objects::ObjectClass;
pub use plant::{HandState, SceneObject, ServoCommand, SimClock};
pub use power::{BatteryState, PowerProfile};
pub use scenario::{Report, Scenario};
pub use tensor::{QuantParams, QuantTensor, Tensor};

/// Crate version string stamped into reports and logs.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
