//! The grasp pipeline state machine.
//!
//! Transition table (every transition the controller makes is one of
//! these):
//!
//! | from       | to         | on |
//! |------------|------------|----|
//! | Sleep      | Idle       | donned |
//! | Idle       | CameraInit | activation gesture |
//! | CameraInit | Detect     | `camera_init_ms` elapsed |
//! | Detect     | Approach   | target selected from a frame |
//! | Detect     | Idle       | detect timeout |
//! | Detect/Approach | Detect | correction gesture (target rejected) |
//! | Approach   | Grasp      | TOF distance <= reach threshold |
//! | Grasp      | Hold       | all groups stopped or fully closed |
//! | Grasp      | Idle       | grasp timeout |
//! | Hold       | Release    | release gesture |
//! | Grasp/Hold | Release    | held object broke |
//! | Release    | Idle       | fully open |
//! | any        | Sleep      | doffed or battery low |
//!
//! Gesture roles are configurable; by default TiltLeft activates (and,
//! repeated while a target is pending, corrects the selection) and
//! TiltRight releases. Roles are disambiguated by state, so a single
//! occurrence of the mapped class suffices. An occurrence opens after
//! `gesture_consecutive` consecutive classifier outputs of one class and
//! closes after two consecutive `NoAction`s.

mod episode;

pub use episode::{
    run_episode, EpisodeError, EpisodeLog, EpisodeModels, EpisodeOutcome, LogLine, OutcomeRecord,
};

use crate::detection::{select_target, TrackedDetection};
use crate::models::{GestureClass, GraspDecision, FORCE_FULL_SCALE_N};
use crate::plant::{ServoCommand, ToFReading, NUM_GROUPS};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Pipeline states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerState {
    Sleep,
    Idle,
    CameraInit,
    Detect,
    Approach,
    Grasp,
    Hold,
    Release,
}

/// Stage whose deadline expired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeoutStage {
    Detect,
    Grasp,
}

/// Domain events emitted by the controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "snake_case")]
pub enum EventKind {
    Donned,
    Doffed,
    ActivationGesture,
    CameraReady,
    TargetSelected(TrackedDetection),
    CorrectionGesture,
    InReach { distance_mm: f64 },
    GraspComplete,
    ForceThresholdReached { group: usize },
    ReleaseGesture,
    ObjectBroken,
    Timeout { stage: TimeoutStage },
    BatteryLow,
}

/// A timestamped controller event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerEvent {
    pub t_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// Controller timing and threshold configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    /// Camera wake latency before frames are processed (ms).
    pub camera_init_ms: u64,
    /// TOF distance gating the approach-to-grasp transition (mm).
    pub reach_threshold_mm: f64,
    pub grasp_timeout_ms: u64,
    pub detect_timeout_ms: u64,
    /// Allowed overshoot above the predicted force, normalized to 5 N.
    pub force_margin: f64,
    pub activation_gesture: GestureClass,
    pub release_gesture: GestureClass,
    pub correction_gesture: GestureClass,
    /// Battery fraction below which the controller sleeps.
    pub battery_low_fraction: f64,
    /// Consecutive classifier outputs opening a gesture occurrence.
    pub gesture_consecutive: usize,
    /// Classify every Nth IMU sample.
    pub classify_stride_samples: usize,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            camera_init_ms: 300,
            reach_threshold_mm: 100.0,
            grasp_timeout_ms: 3000,
            detect_timeout_ms: 5000,
            force_margin: 0.05,
            activation_gesture: GestureClass::TiltLeft,
            release_gesture: GestureClass::TiltRight,
            correction_gesture: GestureClass::TiltLeft,
            battery_low_fraction: 0.05,
            gesture_consecutive: 2,
            classify_stride_samples: 2,
        }
    }
}

/// Tolerance when comparing measured force against the predicted
/// threshold (absorbs float rounding at a servo stall point).
const FORCE_COMPARE_EPS_N: f64 = 1e-9;
/// Closure considered fully closed / fully open.
const CLOSURE_EPS: f64 = 1e-9;

/// Per-tick sensor and context inputs.
#[derive(Debug, Clone)]
pub struct TickInputs<'a> {
    pub t_ms: u64,
    pub donned: bool,
    /// Gesture classifier output, when a classification ran this tick.
    pub gesture: Option<GestureClass>,
    /// Detections, when a camera frame was processed this tick.
    pub detections: Option<&'a [TrackedDetection]>,
    /// TOF reading toward the selected target, when sampled this tick.
    pub tof: Option<ToFReading>,
    /// Measured per-group fingertip forces (N).
    pub forces_n: [f64; NUM_GROUPS],
    /// Servo position feedback per group.
    pub closure: [f64; NUM_GROUPS],
    /// Remaining battery fraction.
    pub battery_fraction: f64,
    /// The held object broke during the previous plant step.
    pub object_broken: bool,
    /// Grasp plan for the selected target's class, provided by the host
    /// once a target exists.
    pub grasp_decision: Option<&'a GraspDecision>,
}

/// Output of one controller tick.
#[derive(Debug, Clone)]
pub struct TickOutput {
    pub command: ServoCommand,
    pub events: Vec<ControllerEvent>,
    pub transitions: Vec<(ControllerState, ControllerState)>,
}

/// Groups participating in a grasp pattern (thumb; index+middle;
/// ring+little). Pinch leaves the ring/little group open.
pub fn pattern_groups(pattern: crate::models::GraspPattern) -> [bool; NUM_GROUPS] {
    match pattern {
        crate::models::GraspPattern::Pinch => [true, true, false],
        _ => [true, true, true],
    }
}

/// The grasp pipeline state machine. Single-owner; driven by one tick
/// loop with a monotone clock.
#[derive(Debug, Clone)]
pub struct Controller {
    config: ControllerConfig,
    state: ControllerState,
    state_entered_ms: u64,
    prev_donned: bool,
    battery_low_seen: bool,
    // Gesture occurrence tracking.
    run_class: Option<GestureClass>,
    run_len: usize,
    noaction_run: usize,
    occurrence_open: Option<GestureClass>,
    // Grasp context.
    rejected: HashSet<u32>,
    target: Option<TrackedDetection>,
    decision: Option<GraspDecision>,
    group_done: [bool; NUM_GROUPS],
    group_hold: [f64; NUM_GROUPS],
    broken_seen: bool,
}

impl Controller {
    pub fn new(config: ControllerConfig) -> Self {
        Self {
            config,
            state: ControllerState::Sleep,
            state_entered_ms: 0,
            prev_donned: false,
            battery_low_seen: false,
            run_class: None,
            run_len: 0,
            noaction_run: 0,
            occurrence_open: None,
            rejected: HashSet::new(),
            target: None,
            decision: None,
            group_done: [false; NUM_GROUPS],
            group_hold: [0.0; NUM_GROUPS],
            broken_seen: false,
        }
    }

    pub fn state(&self) -> ControllerState {
        self.state
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    /// Id and class of the currently selected target.
    pub fn target(&self) -> Option<&TrackedDetection> {
        self.target.as_ref()
    }

    /// Whether the camera produces frames in the current state.
    pub fn camera_capturing(&self) -> bool {
        self.state == ControllerState::Detect
    }

    /// Whether the current state consumes gesture classifications.
    pub fn wants_gesture(&self) -> bool {
        matches!(
            self.state,
            ControllerState::Idle
                | ControllerState::Detect
                | ControllerState::Approach
                | ControllerState::Hold
        )
    }

    fn goto(
        &mut self,
        to: ControllerState,
        t_ms: u64,
        transitions: &mut Vec<(ControllerState, ControllerState)>,
    ) {
        transitions.push((self.state, to));
        self.state = to;
        self.state_entered_ms = t_ms;
    }

    fn clear_grasp_context(&mut self) {
        self.rejected.clear();
        self.target = None;
        self.decision = None;
        self.group_done = [false; NUM_GROUPS];
        self.group_hold = [0.0; NUM_GROUPS];
        self.broken_seen = false;
    }

    /// Updates gesture run tracking; returns a newly opened occurrence.
    fn gesture_occurrence(&mut self, observed: Option<GestureClass>) -> Option<GestureClass> {
        let cls = observed?;
        if cls == GestureClass::NoAction {
            self.noaction_run += 1;
            if self.noaction_run >= 2 {
                self.run_class = None;
                self.run_len = 0;
                self.occurrence_open = None;
            }
            return None;
        }
        self.noaction_run = 0;
        if self.run_class == Some(cls) {
            self.run_len += 1;
        } else {
            self.run_class = Some(cls);
            self.run_len = 1;
        }
        if self.run_len >= self.config.gesture_consecutive && self.occurrence_open != Some(cls) {
            self.occurrence_open = Some(cls);
            return Some(cls);
        }
        None
    }

    /// Advances the state machine one tick.
    pub fn tick(&mut self, inputs: &TickInputs) -> TickOutput {
        let t = inputs.t_ms;
        let mut events = Vec::new();
        let mut transitions = Vec::new();
        let gesture_onset = self.gesture_occurrence(inputs.gesture);

        // Donned / doffed edges and battery gate any state.
        if !inputs.donned {
            if self.prev_donned || self.state != ControllerState::Sleep {
                if self.prev_donned {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::Doffed,
                    });
                }
                if self.state != ControllerState::Sleep {
                    self.clear_grasp_context();
                    self.goto(ControllerState::Sleep, t, &mut transitions);
                }
            }
            self.prev_donned = false;
            return TickOutput {
                command: ServoCommand::open_all(),
                events,
                transitions,
            };
        }
        if inputs.battery_fraction < self.config.battery_low_fraction {
            if !self.battery_low_seen {
                self.battery_low_seen = true;
                events.push(ControllerEvent {
                    t_ms: t,
                    kind: EventKind::BatteryLow,
                });
            }
            if self.state != ControllerState::Sleep {
                self.clear_grasp_context();
                self.goto(ControllerState::Sleep, t, &mut transitions);
            }
            self.prev_donned = true;
            return TickOutput {
                command: ServoCommand::open_all(),
                events,
                transitions,
            };
        }
        if !self.prev_donned {
            events.push(ControllerEvent {
                t_ms: t,
                kind: EventKind::Donned,
            });
            if self.state == ControllerState::Sleep {
                self.goto(ControllerState::Idle, t, &mut transitions);
            }
        }
        self.prev_donned = true;

        // Broken object: drop it and open, from any grasp-side state.
        if inputs.object_broken && !self.broken_seen {
            self.broken_seen = true;
            events.push(ControllerEvent {
                t_ms: t,
                kind: EventKind::ObjectBroken,
            });
            if matches!(self.state, ControllerState::Grasp | ControllerState::Hold) {
                self.goto(ControllerState::Release, t, &mut transitions);
            }
        }

        match self.state {
            ControllerState::Sleep => {}
            ControllerState::Idle => {
                if gesture_onset == Some(self.config.activation_gesture) {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::ActivationGesture,
                    });
                    self.clear_grasp_context();
                    self.goto(ControllerState::CameraInit, t, &mut transitions);
                }
            }
            ControllerState::CameraInit => {
                if t - self.state_entered_ms >= self.config.camera_init_ms {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::CameraReady,
                    });
                    self.goto(ControllerState::Detect, t, &mut transitions);
                }
            }
            ControllerState::Detect => {
                if gesture_onset == Some(self.config.correction_gesture) {
                    if let Some(target) = self.target.take() {
                        self.rejected.insert(target.id);
                        events.push(ControllerEvent {
                            t_ms: t,
                            kind: EventKind::CorrectionGesture,
                        });
                        self.goto(ControllerState::Detect, t, &mut transitions);
                    }
                } else if let Some(frame) = inputs.detections {
                    if let Some(sel) = select_target(frame, &self.rejected) {
                        self.target = Some(*sel);
                        events.push(ControllerEvent {
                            t_ms: t,
                            kind: EventKind::TargetSelected(*sel),
                        });
                        self.goto(ControllerState::Approach, t, &mut transitions);
                    }
                }
                if self.state == ControllerState::Detect
                    && t - self.state_entered_ms >= self.config.detect_timeout_ms
                {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::Timeout {
                            stage: TimeoutStage::Detect,
                        },
                    });
                    self.clear_grasp_context();
                    self.goto(ControllerState::Idle, t, &mut transitions);
                }
            }
            ControllerState::Approach => {
                if gesture_onset == Some(self.config.correction_gesture) {
                    if let Some(target) = self.target.take() {
                        self.rejected.insert(target.id);
                        self.decision = None;
                        events.push(ControllerEvent {
                            t_ms: t,
                            kind: EventKind::CorrectionGesture,
                        });
                        self.goto(ControllerState::Detect, t, &mut transitions);
                    }
                } else {
                    if self.decision.is_none() {
                        self.decision = inputs.grasp_decision.cloned();
                    }
                    if let (Some(ToFReading::DistanceMm(d)), Some(_)) =
                        (inputs.tof, self.decision.as_ref())
                    {
                        if d <= self.config.reach_threshold_mm {
                            events.push(ControllerEvent {
                                t_ms: t,
                                kind: EventKind::InReach { distance_mm: d },
                            });
                            self.group_done = [false; NUM_GROUPS];
                            if let Some(decision) = &self.decision {
                                for (g, participates) in
                                    pattern_groups(decision.pattern).iter().enumerate()
                                {
                                    if !participates {
                                        self.group_done[g] = true;
                                        self.group_hold[g] = 0.0;
                                    }
                                }
                            }
                            self.goto(ControllerState::Grasp, t, &mut transitions);
                        }
                    }
                }
            }
            ControllerState::Grasp => {
                let decision = self.decision.clone().expect("grasp entered with a decision");
                let threshold_n = decision.max_force * FORCE_FULL_SCALE_N;
                let participating = pattern_groups(decision.pattern);
                for (g, &participates) in participating.iter().enumerate() {
                    if self.group_done[g] || !participates {
                        continue;
                    }
                    let closed = inputs.closure[g] >= 1.0 - CLOSURE_EPS;
                    if inputs.forces_n[g] >= threshold_n - FORCE_COMPARE_EPS_N {
                        self.group_done[g] = true;
                        self.group_hold[g] = inputs.closure[g];
                        events.push(ControllerEvent {
                            t_ms: t,
                            kind: EventKind::ForceThresholdReached { group: g },
                        });
                    } else if closed {
                        self.group_done[g] = true;
                        self.group_hold[g] = inputs.closure[g];
                    }
                }
                if self.group_done.iter().all(|&d| d) {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::GraspComplete,
                    });
                    self.goto(ControllerState::Hold, t, &mut transitions);
                } else if t - self.state_entered_ms >= self.config.grasp_timeout_ms {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::Timeout {
                            stage: TimeoutStage::Grasp,
                        },
                    });
                    self.clear_grasp_context();
                    self.goto(ControllerState::Idle, t, &mut transitions);
                }
            }
            ControllerState::Hold => {
                if gesture_onset == Some(self.config.release_gesture) {
                    events.push(ControllerEvent {
                        t_ms: t,
                        kind: EventKind::ReleaseGesture,
                    });
                    self.goto(ControllerState::Release, t, &mut transitions);
                }
            }
            ControllerState::Release => {
                if inputs.closure.iter().all(|&c| c <= CLOSURE_EPS) {
                    self.clear_grasp_context();
                    self.goto(ControllerState::Idle, t, &mut transitions);
                }
            }
        }

        TickOutput {
            command: self.command(inputs),
            events,
            transitions,
        }
    }

    /// Servo command for the current state. The commanded force ceiling
    /// never exceeds the predicted maximum force.
    fn command(&self, inputs: &TickInputs) -> ServoCommand {
        match self.state {
            ControllerState::Grasp => {
                let decision = self.decision.as_ref().expect("grasp has a decision");
                let ceiling = decision.max_force.clamp(0.0, 1.0);
                let participating = pattern_groups(decision.pattern);
                let mut cmd = ServoCommand {
                    target: [0.0; NUM_GROUPS],
                    force_ceiling: [0.0; NUM_GROUPS],
                };
                for (g, &participates) in participating.iter().enumerate() {
                    if !participates {
                        continue;
                    }
                    cmd.force_ceiling[g] = ceiling;
                    cmd.target[g] = if self.group_done[g] {
                        self.group_hold[g]
                    } else {
                        1.0
                    };
                }
                cmd
            }
            ControllerState::Hold => {
                let ceiling = self
                    .decision
                    .as_ref()
                    .map(|d| d.max_force.clamp(0.0, 1.0))
                    .unwrap_or(0.0);
                let mut cmd = ServoCommand::hold(self.group_hold);
                cmd.force_ceiling = [ceiling; NUM_GROUPS];
                cmd
            }
            ControllerState::Release => ServoCommand::open_all(),
            // No motion elsewhere; hold current position open-loop.
            _ => ServoCommand::hold(inputs.closure),
        }
    }
}
