//! Episode runner: advances the clock tick by tick, wiring the plant's
//! sensors into the controller and the controller's servo commands back
//! into the plant, with power accounting and a JSONL event log.
//!
//! Log format (one JSON object per line):
//! - first line: `{"t_ms":0,"kind":"meta","payload":{...}}`
//! - events: `{"t_ms":..,"kind":"<event kind>","payload":..}`
//! - state changes: `{"t_ms":..,"kind":"state_change","payload":{"from":..,"to":..}}`
//! - camera frames: `{"t_ms":..,"kind":"camera_frame","payload":{"detections":N}}`
//! - last line: the outcome record with timing and energy metrics.

use super::{Controller, ControllerEvent, ControllerState, EventKind, TickInputs};
use crate::models::{
    infer_gesture, infer_grasp_force, GestureWindow, GraspDecision, ModelError, ModelGraph,
    GESTURE_WINDOW_LEN,
};
use crate::objects::NUM_CLASSES;
use crate::plant::{
    force_read, plant_step, stub_detect, tof_read, HandState, ImuSynth, SimClock, NUM_GROUPS,
};
use crate::power::{module_states_for, power_step, BatteryState};
use crate::rng::{self, tags};
use crate::scenario::{Scenario, ScenarioError};
use serde::{Deserialize, Serialize};
use serde_json::json;
use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The two trained networks an episode needs.
#[derive(Debug, Clone)]
pub struct EpisodeModels {
    pub gesture: ModelGraph,
    pub grasp: ModelGraph,
}

/// Final disposition of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeOutcome {
    Success,
    Broken,
    Timeout,
    Aborted,
}

/// One log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogLine {
    pub t_ms: u64,
    pub kind: String,
    pub payload: serde_json::Value,
}

/// Outcome record appended as the final log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub outcome: EpisodeOutcome,
    pub end_ms: u64,
    pub close_duration_ms: Option<u64>,
    pub open_duration_ms: Option<u64>,
    pub time_to_grasp_ms: Option<u64>,
    pub energy_mwh: f64,
    pub camera_frames: u64,
    pub max_measured_force_n: [f64; NUM_GROUPS],
    pub predicted_max_force: Option<f64>,
    pub seed: u64,
    pub scenario: String,
    pub produced_by: String,
}

/// Full episode log: meta, records, outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub lines: Vec<LogLine>,
    pub outcome: OutcomeRecord,
}

impl EpisodeLog {
    /// Serializes to JSONL, outcome record last.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&serde_json::to_string(line).expect("log line serializes"));
            out.push('\n');
        }
        let outcome = LogLine {
            t_ms: self.outcome.end_ms,
            kind: "outcome".into(),
            payload: serde_json::to_value(&self.outcome).expect("outcome serializes"),
        };
        out.push_str(&serde_json::to_string(&outcome).expect("outcome line"));
        out.push('\n');
        out
    }

    /// Timestamps and kinds of all domain events, in order.
    pub fn event_kinds(&self) -> Vec<(u64, String)> {
        self.lines
            .iter()
            .filter(|l| l.kind != "meta" && l.kind != "state_change" && l.kind != "camera_frame")
            .map(|l| (l.t_ms, l.kind.clone()))
            .collect()
    }

    /// State-change records as `(t_ms, from, to)`.
    pub fn state_changes(&self) -> Vec<(u64, ControllerState, ControllerState)> {
        self.lines
            .iter()
            .filter(|l| l.kind == "state_change")
            .map(|l| {
                let from = serde_json::from_value(l.payload["from"].clone()).expect("valid state");
                let to = serde_json::from_value(l.payload["to"].clone()).expect("valid state");
                (l.t_ms, from, to)
            })
            .collect()
    }

    /// Times of camera frames.
    pub fn camera_frames(&self) -> Vec<u64> {
        self.lines
            .iter()
            .filter(|l| l.kind == "camera_frame")
            .map(|l| l.t_ms)
            .collect()
    }
}

fn event_to_log_line(event: &ControllerEvent) -> LogLine {
    let value = serde_json::to_value(event).expect("event serializes");
    let kind = value["kind"].as_str().expect("tagged kind").to_string();
    let payload = value.get("payload").cloned().unwrap_or(serde_json::Value::Null);
    LogLine {
        t_ms: event.t_ms,
        kind,
        payload,
    }
}

/// Runs one episode. Deterministic: identical (scenario, models, seed)
/// produce byte-identical logs.
pub fn run_episode(
    scenario: &Scenario,
    models: &EpisodeModels,
    seed_override: Option<u64>,
) -> Result<EpisodeLog, EpisodeError> {
    scenario.validate()?;
    let seed = seed_override.unwrap_or(scenario.seed);
    let plant_cfg = scenario.plant_config();
    let ctrl_cfg = scenario.controller_config();
    let power_profile = scenario.power_profile();
    let gen_cfg = scenario.gesture_gen_config();

    let scene = scenario.scene_objects();
    let mut alive: Vec<bool> = vec![true; scene.len()];
    let script: Vec<(u64, crate::models::GestureClass)> = scenario
        .gesture_script
        .iter()
        .map(|c| (c.t_ms, c.gesture))
        .collect();

    let mut imu = ImuSynth::new(&script, seed, &gen_cfg);
    let mut tof_rng = rng::stream_rng(seed, tags::TOF);
    let mut force_rng = rng::stream_rng(seed, tags::FORCE);
    let mut detect_rng = rng::stream_rng(seed, tags::DETECT);
    let mut fp_counter = 0u32;

    let mut controller = Controller::new(ctrl_cfg.clone());
    let mut hand = HandState::default();
    let mut battery = BatteryState::default();
    let mut clock = SimClock::new(plant_cfg.tick_ms);

    let mut lines = vec![LogLine {
        t_ms: 0,
        kind: "meta".into(),
        payload: json!({
            "log_version": 1,
            "scenario": scenario.name,
            "seed": seed,
            "produced_by": format!("graspstack {}", crate::VERSION),
        }),
    }];

    let end_ms = scenario.doffed_at_ms.unwrap_or(scenario.max_duration_ms);
    let mut window: VecDeque<[f64; 6]> = VecDeque::with_capacity(GESTURE_WINDOW_LEN);
    let mut samples_since_classify = 0usize;
    let mut decision_cache: Vec<Option<GraspDecision>> = vec![None; NUM_CLASSES];

    let mut outcome: Option<EpisodeOutcome> = None;
    let mut energy_mwh = 0.0;
    let mut camera_frames = 0u64;
    let mut max_force = [0.0f64; NUM_GROUPS];
    let mut predicted: Option<f64> = None;
    let mut activation_at: Option<u64> = None;
    let mut grasp_entered_at: Option<u64> = None;
    let mut release_entered_at: Option<u64> = None;
    let mut close_duration: Option<u64> = None;
    let mut open_duration: Option<u64> = None;
    let mut time_to_grasp: Option<u64> = None;
    let mut broke_last_step = false;

    while outcome.is_none() {
        clock.advance();
        let t = clock.t_ms;

        // Charge the battery for the state held over (t - dt, t].
        let (debit, _) = power_step(
            &mut battery,
            &power_profile,
            &module_states_for(controller.state()),
            plant_cfg.tick_ms as f64,
            ctrl_cfg.battery_low_fraction,
        );
        energy_mwh += debit;

        let donned = t >= scenario.donned_at_ms && t < end_ms;

        // 30 Hz IMU; the palm IMU always samples (it is the wake source).
        let mut gesture = None;
        if clock.fires(plant_cfg.imu_rate_hz) {
            let sample = imu.sample_at(t, &plant_cfg);
            hand.tilt_rad += sample.gyro[0].to_radians() / plant_cfg.imu_rate_hz as f64;
            if window.len() == GESTURE_WINDOW_LEN {
                window.pop_front();
            }
            window.push_back(sample.as_row());
            samples_since_classify += 1;
            if window.len() == GESTURE_WINDOW_LEN
                && controller.wants_gesture()
                && samples_since_classify >= ctrl_cfg.classify_stride_samples
            {
                samples_since_classify = 0;
                let gw = GestureWindow {
                    samples: window.iter().copied().collect(),
                    label: None,
                };
                let (class, _) = infer_gesture(&models.gesture, &gw)?;
                gesture = Some(class);
            }
        }

        // 9 FPS camera while the controller has it capturing.
        let mut frame: Option<Vec<crate::detection::TrackedDetection>> = None;
        if controller.camera_capturing() && clock.fires(plant_cfg.camera_fps) {
            let visible_indices: Vec<usize> = (0..scene.len()).filter(|&i| alive[i]).collect();
            let visible: Vec<crate::plant::SceneObject> =
                visible_indices.iter().map(|&i| scene[i].clone()).collect();
            let raw = stub_detect(&visible, &plant_cfg.detect, &mut detect_rng, &mut fp_counter);
            // Stub ids index the per-call slice; remap to scene indices so
            // selection state survives across frames.
            let dets: Vec<crate::detection::TrackedDetection> = raw
                .into_iter()
                .map(|d| match visible_indices.get(d.id as usize) {
                    Some(&scene_idx) => crate::detection::TrackedDetection {
                        id: scene_idx as u32,
                        detection: d.detection,
                    },
                    None => d, // injected false positive
                })
                .collect();
            camera_frames += 1;
            lines.push(LogLine {
                t_ms: t,
                kind: "camera_frame".into(),
                payload: json!({ "detections": dets.len() }),
            });
            frame = Some(dets);
        }

        // TOF toward the selected target in Approach.
        let target_scene = controller.target().and_then(|sel| {
            let idx = sel.id as usize;
            if idx < scene.len() && alive[idx] {
                Some(&scene[idx])
            } else {
                None
            }
        });
        let tof = if controller.state() == ControllerState::Approach {
            Some(tof_read(
                target_scene,
                plant_cfg.tof_noise_sigma_mm,
                plant_cfg.tof_ceiling_mm,
                &mut tof_rng,
            ))
        } else {
            None
        };

        // Measured group forces (representative finger per group) while
        // the force sensors are active.
        let mut forces_n = [0.0; NUM_GROUPS];
        if matches!(
            controller.state(),
            ControllerState::Grasp | ControllerState::Hold
        ) {
            for (g, finger) in [0usize, 1, 3].iter().enumerate() {
                forces_n[g] =
                    force_read(&hand, *finger, plant_cfg.force_noise_sigma_n, &mut force_rng);
                max_force[g] = max_force[g].max(forces_n[g]);
            }
        }

        // Grasp plan for the selected target's class.
        let grasp_decision = match controller.target() {
            Some(sel) => {
                let class = sel.detection.class_id as usize;
                if decision_cache[class].is_none() {
                    decision_cache[class] = Some(infer_grasp_force(&models.grasp, class)?);
                }
                decision_cache[class].as_ref()
            }
            None => None,
        };

        let inputs = TickInputs {
            t_ms: t,
            donned,
            gesture,
            detections: frame.as_deref(),
            tof,
            forces_n,
            closure: hand.closure,
            battery_fraction: battery.fraction(),
            object_broken: broke_last_step,
            grasp_decision,
        };
        let out = controller.tick(&inputs);

        for event in &out.events {
            match &event.kind {
                EventKind::ActivationGesture => activation_at = Some(event.t_ms),
                EventKind::GraspComplete => {
                    if let Some(start) = grasp_entered_at {
                        close_duration = Some(event.t_ms - start);
                    }
                    if let Some(start) = activation_at {
                        time_to_grasp = Some(event.t_ms - start);
                    }
                }
                EventKind::ObjectBroken => outcome = Some(EpisodeOutcome::Broken),
                EventKind::Timeout { .. } => outcome = Some(EpisodeOutcome::Timeout),
                EventKind::BatteryLow | EventKind::Doffed => {
                    outcome = Some(EpisodeOutcome::Aborted)
                }
                _ => {}
            }
            lines.push(event_to_log_line(event));
        }
        for (from, to) in &out.transitions {
            if *to == ControllerState::Grasp {
                grasp_entered_at = Some(t);
            }
            if *to == ControllerState::Release {
                release_entered_at = Some(t);
            }
            if *from == ControllerState::Release && *to == ControllerState::Idle {
                if let Some(start) = release_entered_at {
                    open_duration = Some(t - start);
                }
                if outcome.is_none() {
                    outcome = Some(EpisodeOutcome::Success);
                }
            }
            lines.push(LogLine {
                t_ms: t,
                kind: "state_change".into(),
                payload: json!({ "from": from, "to": to }),
            });
        }
        if let Some(d) = grasp_decision {
            if controller.state() == ControllerState::Grasp && predicted.is_none() {
                predicted = Some(d.max_force);
            }
        }

        // Plant step against the selected target's object.
        hand.donned = donned;
        let target_idx = controller.target().map(|sel| sel.id as usize);
        let contact_obj = target_idx
            .filter(|&i| i < scene.len() && alive[i])
            .map(|i| &scene[i]);
        let step = plant_step(
            &mut hand,
            &out.command,
            contact_obj,
            plant_cfg.tick_ms as f64,
            &plant_cfg,
        );
        broke_last_step = step.broke_object;
        if step.broke_object {
            if let Some(i) = target_idx {
                if i < alive.len() {
                    alive[i] = false;
                }
            }
        }

        if outcome.is_none() && t >= end_ms {
            outcome = Some(EpisodeOutcome::Aborted);
        }
    }

    let end = clock.t_ms;
    let outcome_record = OutcomeRecord {
        outcome: outcome.expect("loop exits with an outcome"),
        end_ms: end,
        close_duration_ms: close_duration,
        open_duration_ms: open_duration,
        time_to_grasp_ms: time_to_grasp,
        energy_mwh,
        camera_frames,
        max_measured_force_n: max_force,
        predicted_max_force: predicted,
        seed,
        scenario: scenario.name.clone(),
        produced_by: format!("graspstack {}", crate::VERSION),
    };
    Ok(EpisodeLog {
        lines,
        outcome: outcome_record,
    })
}
