//! Everything outside the controller: finger/servo dynamics, scene
//! objects with a pinhole-style projection, the fixed-step simulation
//! clock, IMU/TOF/force sensor synthesis and the stub camera detector.
//!
//! The plant is a 1-D closure model per actuation group (thumb;
//! index+middle; ring+little). Closure slews linearly toward the
//! commanded target (full stroke 1.5 s closing, 0.6 s opening); past the
//! object contact point further closure converts to fingertip force via a
//! linear stiffness, capped at 5 N. The servo stalls at its commanded
//! force ceiling, so the plant never exceeds the ceiling regardless of
//! controller latency.

mod sensors;

pub use sensors::{
    force_read, gen_gesture, gen_gesture_with, imu_rest_sample, make_gesture_dataset,
    stub_detect, tof_read, GestureGenConfig, ImuSample, ImuSynth, StubDetectConfig, ToFReading,
};

use crate::detection::BBox;
use crate::objects::ObjectClass;
use serde::{Deserialize, Serialize};

/// Number of actuation groups: thumb; index+middle; ring+little.
pub const NUM_GROUPS: usize = 3;
/// Number of fingers carrying force sensors.
pub const NUM_FINGERS: usize = 5;

/// Actuation group driving a given finger (0 thumb .. 4 little).
pub fn finger_group(finger: usize) -> usize {
    match finger {
        0 => 0,
        1 | 2 => 1,
        _ => 2,
    }
}

/// Plant constants. Fixtures, not asserted hardware values, except where
/// noted: full-stroke closing/opening times and the 5 N cap are the
/// design targets the simulation reproduces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantConfig {
    /// Simulation tick (ms).
    pub tick_ms: u64,
    /// Full-stroke closing time (ms).
    pub close_ms: f64,
    /// Full-stroke opening time (ms).
    pub open_ms: f64,
    /// Fingertip force cap (N).
    pub force_cap_n: f64,
    /// Contact stiffness: newtons per unit closure beyond contact.
    pub stiffness_n: f64,
    /// Width mapped to contact point: `contact = 1 - width/this`.
    pub grasp_full_width_mm: f64,
    /// TOF sensor ceiling; beyond it reads OUT_OF_RANGE (mm).
    pub tof_ceiling_mm: f64,
    pub tof_noise_sigma_mm: f64,
    pub force_noise_sigma_n: f64,
    /// Gyro noise on all channels (deg/s).
    pub gyro_noise_sigma: f64,
    /// Accelerometer noise on all channels (g).
    pub accel_noise_sigma_g: f64,
    /// Camera frame rate (Hz of sim time).
    pub camera_fps: u64,
    /// IMU sampling rate (Hz of sim time).
    pub imu_rate_hz: u64,
    pub detect: StubDetectConfig,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            tick_ms: 10,
            close_ms: 1500.0,
            open_ms: 600.0,
            force_cap_n: 5.0,
            stiffness_n: 50.0,
            grasp_full_width_mm: 650.0,
            tof_ceiling_mm: 200.0,
            tof_noise_sigma_mm: 1.0,
            force_noise_sigma_n: 0.05,
            gyro_noise_sigma: 5.0,
            accel_noise_sigma_g: 0.02,
            camera_fps: 9,
            imu_rate_hz: 30,
            detect: StubDetectConfig::default(),
        }
    }
}

/// A graspable object in the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub class: ObjectClass,
    /// Distance from the wrist (mm).
    pub distance_mm: f64,
    pub width_mm: f64,
    pub breaking_force_n: f64,
    /// Image-plane center the object projects to.
    pub image_cx: f64,
    pub image_cy: f64,
}

impl SceneObject {
    /// Canonical object of a class at a distance: width from the object
    /// table, generous breaking force, centered in the image.
    pub fn from_class(class: ObjectClass, distance_mm: f64) -> Self {
        Self {
            class,
            distance_mm,
            width_mm: class.properties().width_mm,
            breaking_force_n: 30.0,
            image_cx: 0.5,
            image_cy: 0.5,
        }
    }

    /// Projected bounding box. Apparent width `w / (w + d)` shrinks
    /// strictly monotonically with distance; height follows the class
    /// aspect ratio.
    pub fn image_bbox(&self) -> BBox {
        let w = (self.width_mm / (self.width_mm + self.distance_mm.max(0.0))).min(1.0);
        let h = (w * self.class.properties().aspect).min(1.0);
        BBox {
            cx: self.image_cx,
            cy: self.image_cy,
            w,
            h,
        }
    }

    /// Closure fraction at which the fingers first touch this object.
    pub fn contact_closure(&self, cfg: &PlantConfig) -> f64 {
        (1.0 - self.width_mm / cfg.grasp_full_width_mm).clamp(0.0, 1.0)
    }
}

/// Per-group servo command: target closure and force ceiling, both
/// normalized to `[0, 1]` (ceiling in units of the 5 N full scale).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServoCommand {
    pub target: [f64; NUM_GROUPS],
    pub force_ceiling: [f64; NUM_GROUPS],
}

impl ServoCommand {
    pub fn hold(closure: [f64; NUM_GROUPS]) -> Self {
        Self {
            target: closure,
            force_ceiling: [0.0; NUM_GROUPS],
        }
    }

    pub fn open_all() -> Self {
        Self {
            target: [0.0; NUM_GROUPS],
            force_ceiling: [0.0; NUM_GROUPS],
        }
    }
}

/// Plant-side hand state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HandState {
    /// Closure per actuation group, 0 open .. 1 closed.
    pub closure: [f64; NUM_GROUPS],
    /// True contact force per group (N), capped at 5 N.
    pub group_force_n: [f64; NUM_GROUPS],
    /// Worn flag (drives sleep gating).
    pub donned: bool,
    /// Wrist roll angle integrated from the IMU stream (rad).
    pub tilt_rad: f64,
}

impl Default for HandState {
    fn default() -> Self {
        Self {
            closure: [0.0; NUM_GROUPS],
            group_force_n: [0.0; NUM_GROUPS],
            donned: false,
            tilt_rad: 0.0,
        }
    }
}

impl HandState {
    /// True contact force at a fingertip (mirrors its group).
    pub fn finger_force_n(&self, finger: usize) -> f64 {
        self.group_force_n[finger_group(finger)]
    }

    pub fn fully_open(&self) -> bool {
        self.closure.iter().all(|&c| c <= 0.0)
    }
}

/// Result of one plant step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PlantStepResult {
    /// The held object's breaking force was exceeded this step.
    pub broke_object: bool,
    /// Any group's closure changed this step (servo motion).
    pub moved: bool,
}

/// Advances the finger plant by `dt_ms` under a servo command.
///
/// Closure slews toward the target at `1/close_ms` per ms when closing
/// and `1/open_ms` when opening. Past the contact point, closure converts
/// to force via the linear stiffness; the servo stalls where force would
/// exceed the commanded ceiling (or the 5 N cap), and the bound value is
/// assigned exactly. Force is recomputed only when closure moves, so a
/// holding command freezes it.
pub fn plant_step(
    hand: &mut HandState,
    cmd: &ServoCommand,
    scene: Option<&SceneObject>,
    dt_ms: f64,
    cfg: &PlantConfig,
) -> PlantStepResult {
    let dt = dt_ms.clamp(0.0, 50.0);
    let contact = scene.map(|o| o.contact_closure(cfg));
    let mut result = PlantStepResult {
        broke_object: false,
        moved: false,
    };
    for g in 0..NUM_GROUPS {
        let current = hand.closure[g];
        let target = cmd.target[g].clamp(0.0, 1.0);
        let ceiling_n = (cmd.force_ceiling[g].clamp(0.0, 1.0) * cfg.force_cap_n)
            .min(cfg.force_cap_n);
        let mut next = if target > current {
            (current + dt / cfg.close_ms).min(target)
        } else {
            (current - dt / cfg.open_ms).max(target)
        };

        let mut stalled_at_ceiling = false;
        if let Some(contact) = contact {
            if next > current {
                // Servo stalls where force would exceed the ceiling.
                let stall = contact + ceiling_n / cfg.stiffness_n;
                if next >= stall {
                    next = stall.max(current).min(1.0);
                    stalled_at_ceiling = next == stall;
                }
            }
        }
        next = next.clamp(0.0, 1.0);

        if next != current {
            result.moved = true;
            hand.closure[g] = next;
            let force = match contact {
                Some(contact) if next > contact => {
                    if stalled_at_ceiling {
                        ceiling_n
                    } else {
                        (cfg.stiffness_n * (next - contact)).min(cfg.force_cap_n)
                    }
                }
                _ => 0.0,
            };
            hand.group_force_n[g] = force;
        } else if contact.is_none() {
            hand.group_force_n[g] = 0.0;
        }

        if let Some(obj) = scene {
            if hand.group_force_n[g] > obj.breaking_force_n {
                result.broke_object = true;
            }
        }
    }
    result
}

/// Fixed-step simulation clock; all periodic processes derive from it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimClock {
    pub t_ms: u64,
    pub tick_ms: u64,
}

impl SimClock {
    pub fn new(tick_ms: u64) -> Self {
        Self { t_ms: 0, tick_ms }
    }

    pub fn advance(&mut self) {
        self.t_ms += self.tick_ms;
    }

    /// Events of a periodic `rate_hz` process in `(prev, now]`, counting
    /// event k at the first instant `t` with `t * rate >= k * 1000`.
    pub fn events_between(prev_ms: u64, now_ms: u64, rate_hz: u64) -> u64 {
        (now_ms * rate_hz) / 1000 - (prev_ms * rate_hz) / 1000
    }

    /// Whether a `rate_hz` process fires on the tick ending at `t_ms`.
    pub fn fires(&self, rate_hz: u64) -> bool {
        self.t_ms >= self.tick_ms
            && Self::events_between(self.t_ms - self.tick_ms, self.t_ms, rate_hz) > 0
    }
}
