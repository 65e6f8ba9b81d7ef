//! Battery and per-module power-state accounting.
//!
//! Each module (camera, fpga-core, imu, tof, force sensors, three servos)
//! draws one of three configured rates — sleep, idle, active — chosen per
//! tick from the controller state. Energy integrates piecewise-constant:
//! `mWh -= total_mW * dt_ms / 3_600_000`.

use crate::controller::ControllerState;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PowerError {
    #[error("duty fractions sum to {0}, expected 1 within 1e-9")]
    BadDuty(f64),
    #[error("power profile violates sleep <= idle <= active for module {0}")]
    BadProfile(&'static str),
}

/// Battery defaults: 11.1 V, 1300 mAh LiPo.
pub const BATTERY_VOLTAGE_MV: u32 = 11_100;
pub const BATTERY_CAPACITY_MAH: u32 = 1_300;

/// LiPo battery energy bookkeeping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryState {
    /// Pack voltage in millivolts (kept integral so capacity in mWh is
    /// exact: `mV * mAh / 1000`).
    pub voltage_mv: u32,
    pub capacity_mah: u32,
    pub remaining_mwh: f64,
}

impl Default for BatteryState {
    fn default() -> Self {
        Self::new(BATTERY_VOLTAGE_MV, BATTERY_CAPACITY_MAH)
    }
}

impl BatteryState {
    pub fn new(voltage_mv: u32, capacity_mah: u32) -> Self {
        let mut b = Self {
            voltage_mv,
            capacity_mah,
            remaining_mwh: 0.0,
        };
        b.remaining_mwh = b.capacity_mwh();
        b
    }

    pub fn nominal_voltage(&self) -> f64 {
        self.voltage_mv as f64 / 1000.0
    }

    /// Full capacity in mWh; exact for integral mV/mAh.
    pub fn capacity_mwh(&self) -> f64 {
        (self.voltage_mv as u64 * self.capacity_mah as u64) as f64 / 1000.0
    }

    /// Remaining fraction of capacity in [0, 1].
    pub fn fraction(&self) -> f64 {
        self.remaining_mwh / self.capacity_mwh()
    }

    /// Draw in mW for a current in mA at pack voltage; exact arithmetic.
    pub fn draw_mw_for_ma(&self, current_ma: f64) -> f64 {
        current_ma * self.voltage_mv as f64 / 1000.0
    }
}

/// Power mode of one module at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerMode {
    Sleep,
    Idle,
    Active,
}

/// Draw triple for one module (mW).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModuleDraw {
    pub sleep: f64,
    pub idle: f64,
    pub active: f64,
}

impl ModuleDraw {
    const fn new(sleep: f64, idle: f64, active: f64) -> Self {
        Self {
            sleep,
            idle,
            active,
        }
    }

    pub fn at(&self, mode: PowerMode) -> f64 {
        match mode {
            PowerMode::Sleep => self.sleep,
            PowerMode::Idle => self.idle,
            PowerMode::Active => self.active,
        }
    }

    fn ordered(&self) -> bool {
        self.sleep <= self.idle && self.idle <= self.active
    }
}

/// Per-module draw table. Values are illustrative config fixtures, not
/// measured hardware currents; the camera's sleep draw is zero because
/// the module is fully unpowered until the wake gesture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PowerProfile {
    pub camera: ModuleDraw,
    pub fpga_core: ModuleDraw,
    pub imu: ModuleDraw,
    pub tof: ModuleDraw,
    pub force_sensors: ModuleDraw,
    /// Per-servo draw; three servos are accounted.
    pub servo: ModuleDraw,
}

impl Default for PowerProfile {
    fn default() -> Self {
        Self {
            camera: ModuleDraw::new(0.0, 50.0, 750.0),
            fpga_core: ModuleDraw::new(5.0, 120.0, 1500.0),
            imu: ModuleDraw::new(3.0, 3.0, 3.0),
            tof: ModuleDraw::new(0.2, 5.0, 20.0),
            force_sensors: ModuleDraw::new(0.5, 2.0, 10.0),
            servo: ModuleDraw::new(5.0, 50.0, 2000.0),
        }
    }
}

/// Power mode of every module at one tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModuleStates {
    pub camera: PowerMode,
    pub fpga_core: PowerMode,
    pub imu: PowerMode,
    pub tof: PowerMode,
    pub force_sensors: PowerMode,
    pub servos: PowerMode,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), PowerError> {
        for (name, m) in [
            ("camera", &self.camera),
            ("fpga_core", &self.fpga_core),
            ("imu", &self.imu),
            ("tof", &self.tof),
            ("force_sensors", &self.force_sensors),
            ("servo", &self.servo),
        ] {
            if !m.ordered() {
                return Err(PowerError::BadProfile(name));
            }
        }
        Ok(())
    }

    /// Total draw (mW) for a set of module states; servos count three
    /// times.
    pub fn total_draw_mw(&self, states: &ModuleStates) -> f64 {
        self.camera.at(states.camera)
            + self.fpga_core.at(states.fpga_core)
            + self.imu.at(states.imu)
            + self.tof.at(states.tof)
            + self.force_sensors.at(states.force_sensors)
            + 3.0 * self.servo.at(states.servos)
    }
}

/// Fixed mapping from controller state to module power modes.
///
/// The camera is unpowered in Sleep and Idle (zero frames, zero draw),
/// initializing/capturing through CameraInit and Detect, then idles.
/// The IMU is the wake source and always powered. Servos are active in
/// the motion phases (Grasp, Release).
pub fn module_states_for(state: ControllerState) -> ModuleStates {
    use ControllerState as C;
    use PowerMode as P;
    ModuleStates {
        camera: match state {
            C::Sleep | C::Idle => P::Sleep,
            C::CameraInit | C::Detect => P::Active,
            _ => P::Idle,
        },
        fpga_core: match state {
            C::Sleep => P::Sleep,
            C::Idle => P::Idle,
            _ => P::Active,
        },
        imu: P::Active,
        tof: match state {
            C::Sleep | C::Idle => P::Sleep,
            C::Approach | C::Grasp => P::Active,
            _ => P::Idle,
        },
        force_sensors: match state {
            C::Sleep | C::Idle => P::Sleep,
            C::Grasp | C::Hold | C::Release => P::Active,
            _ => P::Idle,
        },
        servos: match state {
            C::Sleep | C::Idle => P::Sleep,
            C::Grasp | C::Release => P::Active,
            _ => P::Idle,
        },
    }
}

/// Integrates one step of battery drain; returns the debit in mWh and
/// whether the low-battery threshold was crossed by this step.
pub fn power_step(
    battery: &mut BatteryState,
    profile: &PowerProfile,
    states: &ModuleStates,
    dt_ms: f64,
    low_threshold_fraction: f64,
) -> (f64, bool) {
    let draw = profile.total_draw_mw(states);
    let debit = draw * (dt_ms / 3_600_000.0);
    let before = battery.fraction();
    battery.remaining_mwh = (battery.remaining_mwh - debit).max(0.0);
    let after = battery.fraction();
    let crossed = before >= low_threshold_fraction && after < low_threshold_fraction;
    (debit, crossed)
}

/// Runtime estimate for a duty description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuntimeEstimate {
    Hours(f64),
    /// Zero average draw.
    Unbounded,
}

/// Estimates runtime from `(fraction, draw_mw)` duty pairs; fractions must
/// sum to 1. `capacity_mwh / weighted-average draw`.
pub fn estimate_runtime(
    battery: &BatteryState,
    duty: &[(f64, f64)],
) -> Result<RuntimeEstimate, PowerError> {
    let total: f64 = duty.iter().map(|(f, _)| f).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(PowerError::BadDuty(total));
    }
    let avg_draw: f64 = duty.iter().map(|(f, d)| f * d).sum();
    if avg_draw <= 0.0 {
        return Ok(RuntimeEstimate::Unbounded);
    }
    Ok(RuntimeEstimate::Hours(battery.capacity_mwh() / avg_draw))
}
