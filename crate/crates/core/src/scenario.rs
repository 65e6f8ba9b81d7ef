//! Scenario and report schemas.
//!
//! Scenarios are versioned JSON documents parsed closed-world: any field
//! outside the schema is rejected, and validation errors name the
//! offending path. Reports are flat metric maps with deterministic key
//! order; every key is documented in `docs/metrics.md`.

use crate::controller::ControllerConfig;
use crate::models::GestureClass;
use crate::objects::ObjectClass;
use crate::plant::{GestureGenConfig, PlantConfig, SceneObject};
use crate::power::PowerProfile;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Current scenario schema version.
pub const SCENARIO_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: unknown object class {class:?} (expected one of ball, cup, bottle, pen, spoon, cube)")]
    UnknownClass { path: String, class: String },
    #[error("{path}: {detail}")]
    Invalid { path: String, detail: String },
    #[error("unsupported scenario version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("scenario does not parse: {0}")]
    Parse(#[from] serde_json::Error),
}

/// One object in the scene. Width, breaking force and image position fall
/// back to the class defaults when omitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub class: String,
    pub distance_mm: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub breaking_force_n: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_cx: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_cy: Option<f64>,
}

/// A scripted wrist gesture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureCue {
    pub t_ms: u64,
    pub gesture: GestureClass,
}

fn default_max_duration() -> u64 {
    30_000
}

/// A full episode description: scene, gesture script, wear window and
/// configuration overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub seed: u64,
    pub scene: Vec<SceneEntry>,
    #[serde(default)]
    pub gesture_script: Vec<GestureCue>,
    #[serde(default)]
    pub donned_at_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doffed_at_ms: Option<u64>,
    /// Hard episode end when never doffed.
    #[serde(default = "default_max_duration")]
    pub max_duration_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plant: Option<PlantConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gesture_gen: Option<GestureGenConfig>,
}

impl Scenario {
    /// Parses and validates a scenario document.
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Checks the closed-world constraints beyond what serde enforces.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.version != SCENARIO_VERSION {
            return Err(ScenarioError::Version {
                found: self.version,
                expected: SCENARIO_VERSION,
            });
        }
        for (i, entry) in self.scene.iter().enumerate() {
            if ObjectClass::from_name(&entry.class).is_none() {
                return Err(ScenarioError::UnknownClass {
                    path: format!("scene[{i}].class"),
                    class: entry.class.clone(),
                });
            }
            if entry.distance_mm < 0.0 {
                return Err(ScenarioError::Invalid {
                    path: format!("scene[{i}].distance_mm"),
                    detail: "must be >= 0".into(),
                });
            }
            if entry.width_mm.is_some_and(|w| w <= 0.0) {
                return Err(ScenarioError::Invalid {
                    path: format!("scene[{i}].width_mm"),
                    detail: "must be > 0".into(),
                });
            }
            if entry.breaking_force_n.is_some_and(|f| f <= 0.0) {
                return Err(ScenarioError::Invalid {
                    path: format!("scene[{i}].breaking_force_n"),
                    detail: "must be > 0".into(),
                });
            }
        }
        for w in self.gesture_script.windows(2) {
            if w[1].t_ms < w[0].t_ms {
                return Err(ScenarioError::Invalid {
                    path: "gesture_script".into(),
                    detail: format!("timestamps not sorted: {} after {}", w[1].t_ms, w[0].t_ms),
                });
            }
        }
        if let Some(doffed) = self.doffed_at_ms {
            if doffed <= self.donned_at_ms {
                return Err(ScenarioError::Invalid {
                    path: "doffed_at_ms".into(),
                    detail: "must be after donned_at_ms".into(),
                });
            }
        }
        if let Some(p) = &self.power {
            p.validate().map_err(|e| ScenarioError::Invalid {
                path: "power".into(),
                detail: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Materializes scene entries into plant objects.
    pub fn scene_objects(&self) -> Vec<SceneObject> {
        self.scene
            .iter()
            .map(|e| {
                let class = ObjectClass::from_name(&e.class).expect("validated");
                let mut obj = SceneObject::from_class(class, e.distance_mm);
                if let Some(w) = e.width_mm {
                    obj.width_mm = w;
                }
                if let Some(f) = e.breaking_force_n {
                    obj.breaking_force_n = f;
                }
                if let Some(cx) = e.image_cx {
                    obj.image_cx = cx;
                }
                if let Some(cy) = e.image_cy {
                    obj.image_cy = cy;
                }
                obj
            })
            .collect()
    }

    pub fn controller_config(&self) -> ControllerConfig {
        self.controller.clone().unwrap_or_default()
    }

    pub fn power_profile(&self) -> PowerProfile {
        self.power.unwrap_or_default()
    }

    pub fn plant_config(&self) -> PlantConfig {
        self.plant.clone().unwrap_or_default()
    }

    pub fn gesture_gen_config(&self) -> GestureGenConfig {
        self.gesture_gen.unwrap_or_default()
    }

    /// The canonical bottle scenario: one bottle at 80 mm, activation
    /// tilt at 0.5 s, release tilt at 6 s.
    pub fn canonical_bottle() -> Self {
        Scenario {
            version: SCENARIO_VERSION,
            name: "bottle".into(),
            seed: 42,
            scene: vec![SceneEntry {
                class: "bottle".into(),
                distance_mm: 80.0,
                width_mm: None,
                breaking_force_n: Some(20.0),
                image_cx: None,
                image_cy: None,
            }],
            gesture_script: vec![
                GestureCue {
                    t_ms: 500,
                    gesture: GestureClass::TiltLeft,
                },
                GestureCue {
                    t_ms: 6000,
                    gesture: GestureClass::TiltRight,
                },
            ],
            donned_at_ms: 0,
            doffed_at_ms: None,
            max_duration_ms: 12_000,
            controller: None,
            power: None,
            plant: None,
            gesture_gen: None,
        }
    }
}

/// Metrics report emitted by the CLI, keys sorted for determinism.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub produced_by: String,
    pub seed: u64,
    pub metrics: BTreeMap<String, serde_json::Value>,
}

impl Report {
    pub fn new(seed: u64) -> Self {
        Self {
            produced_by: format!("graspstack {}", crate::VERSION),
            seed,
            metrics: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, key: &str, value: impl Into<serde_json::Value>) {
        self.metrics.insert(key.to_string(), value.into());
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_bottle_validates() {
        let s = Scenario::canonical_bottle();
        s.validate().unwrap();
        let objs = s.scene_objects();
        assert_eq!(objs.len(), 1);
        assert_eq!(objs[0].class, ObjectClass::Bottle);
        assert_eq!(objs[0].width_mm, 65.0);
    }

    #[test]
    fn unknown_class_names_path() {
        let mut s = Scenario::canonical_bottle();
        s.scene[0].class = "banana".into();
        let err = s.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("scene[0].class"), "{msg}");
        assert!(msg.contains("banana"), "{msg}");
    }

    #[test]
    fn unknown_fields_rejected() {
        let text = r#"{
            "version": 1, "name": "x", "seed": 1, "scene": [],
            "frobnicate": true
        }"#;
        let err = Scenario::from_json(text).unwrap_err();
        assert!(err.to_string().contains("frobnicate"), "{err}");
    }

    #[test]
    fn unsorted_gesture_script_rejected() {
        let mut s = Scenario::canonical_bottle();
        s.gesture_script.swap(0, 1);
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("not sorted"));
    }

    #[test]
    fn version_mismatch_rejected() {
        let mut s = Scenario::canonical_bottle();
        s.version = 2;
        assert!(matches!(
            s.validate(),
            Err(ScenarioError::Version { found: 2, .. })
        ));
    }

    #[test]
    fn round_trips_through_json() {
        let s = Scenario::canonical_bottle();
        let text = serde_json::to_string_pretty(&s).unwrap();
        let back = Scenario::from_json(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn report_keys_are_sorted() {
        let mut r = Report::new(7);
        r.insert("zeta", 1.0);
        r.insert("alpha", 2.0);
        let json = r.to_json_pretty();
        assert!(json.find("alpha").unwrap() < json.find("zeta").unwrap());
    }
}
