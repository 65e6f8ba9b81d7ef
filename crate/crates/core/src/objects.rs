//! The six-object vocabulary shared by detection, the grasp network and
//! the plant simulator, plus the canonical object property table.
//!
//! The grasp label and normalized force per object are synthetic fixtures
//! used to generate training data; they live here (rather than inline in
//! the trainer) so they can be swapped without touching model code.

use crate::models::GraspPattern;
use serde::{Deserialize, Serialize};

/// Object classes recognised by the detector, with stable ids 0..=5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectClass {
    Ball = 0,
    Cup = 1,
    Bottle = 2,
    Pen = 3,
    Spoon = 4,
    Cube = 5,
}

/// Number of object classes.
pub const NUM_CLASSES: usize = 6;

pub const ALL_CLASSES: [ObjectClass; NUM_CLASSES] = [
    ObjectClass::Ball,
    ObjectClass::Cup,
    ObjectClass::Bottle,
    ObjectClass::Pen,
    ObjectClass::Spoon,
    ObjectClass::Cube,
];

impl ObjectClass {
    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        ALL_CLASSES.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Ball => "ball",
            ObjectClass::Cup => "cup",
            ObjectClass::Bottle => "bottle",
            ObjectClass::Pen => "pen",
            ObjectClass::Spoon => "spoon",
            ObjectClass::Cube => "cube",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        ALL_CLASSES.iter().copied().find(|c| c.name() == name)
    }

    /// Canonical grasp/force/geometry fixture for this class.
    pub fn properties(self) -> ObjectProperties {
        match self {
            ObjectClass::Ball => ObjectProperties::new(GraspPattern::PowerGrip, 0.5, 55.0, 1.0),
            ObjectClass::Cup => ObjectProperties::new(GraspPattern::PowerGrip, 0.7, 80.0, 1.2),
            ObjectClass::Bottle => ObjectProperties::new(GraspPattern::PowerGrip, 0.8, 65.0, 2.2),
            ObjectClass::Pen => ObjectProperties::new(GraspPattern::Pinch, 0.3, 10.0, 0.15),
            ObjectClass::Spoon => ObjectProperties::new(GraspPattern::Pronated, 0.4, 15.0, 0.25),
            ObjectClass::Cube => ObjectProperties::new(GraspPattern::Pinch, 0.5, 40.0, 1.0),
        }
    }
}

/// Per-class fixture: grasp label, normalized force target (of 5 N full
/// scale), typical width and image aspect ratio (h/w) of the projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectProperties {
    pub grasp: GraspPattern,
    pub force: f64,
    pub width_mm: f64,
    pub aspect: f64,
}

impl ObjectProperties {
    const fn new(grasp: GraspPattern, force: f64, width_mm: f64, aspect: f64) -> Self {
        Self {
            grasp,
            force,
            width_mm,
            aspect,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_names_round_trip() {
        for (i, class) in ALL_CLASSES.iter().enumerate() {
            assert_eq!(class.id(), i);
            assert_eq!(ObjectClass::from_id(i), Some(*class));
            assert_eq!(ObjectClass::from_name(class.name()), Some(*class));
        }
        assert_eq!(ObjectClass::from_id(6), None);
        assert_eq!(ObjectClass::from_name("banana"), None);
    }

    #[test]
    fn forces_are_normalized() {
        for class in ALL_CLASSES {
            let p = class.properties();
            assert!(p.force > 0.0 && p.force <= 1.0);
            assert!(p.width_mm > 0.0);
        }
    }
}
