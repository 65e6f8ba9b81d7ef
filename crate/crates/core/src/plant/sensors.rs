//! Sensor synthesis: IMU gesture waveforms, TOF rangefinder, fingertip
//! force sensors and the ground-truth stub detector behind the camera.

use super::{HandState, PlantConfig, SceneObject};
use crate::detection::{Detection, TrackedDetection};
use crate::models::{GestureClass, GestureWindow, GESTURE_WINDOW_LEN, IMU_SAMPLE_RATE_HZ};
use crate::rng::{self, tags};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// One IMU sample: accel in g, gyro in deg/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub accel: [f64; 3],
    pub gyro: [f64; 3],
}

impl ImuSample {
    pub fn as_row(&self) -> [f64; 6] {
        [
            self.accel[0],
            self.accel[1],
            self.accel[2],
            self.gyro[0],
            self.gyro[1],
            self.gyro[2],
        ]
    }
}

/// Gesture waveform generator parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GestureGenConfig {
    /// Peak gyro-x rate of the tilt pulse (deg/s).
    pub peak_deg_s: f64,
    /// Pulse duration (ms), centered in the window.
    pub pulse_ms: f64,
    pub gyro_noise_sigma: f64,
    pub accel_noise_sigma_g: f64,
}

impl Default for GestureGenConfig {
    fn default() -> Self {
        Self {
            peak_deg_s: 120.0,
            pulse_ms: 500.0,
            gyro_noise_sigma: 5.0,
            accel_noise_sigma_g: 0.02,
        }
    }
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    if sigma <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, sigma).expect("sigma >= 0").sample(rng)
}

/// Ideal (noise-free) tilt pulse value and integrated roll angle at time
/// `t_s` within a window of `len` samples. Sign: +1 tilt right, -1 left.
fn pulse_at(t_s: f64, len: usize, cfg: &GestureGenConfig, sign: f64) -> (f64, f64) {
    let center_s = (len / 2) as f64 / IMU_SAMPLE_RATE_HZ;
    let half = cfg.pulse_ms / 2000.0;
    let start = center_s - half;
    let width = cfg.pulse_ms / 1000.0;
    if t_s < start {
        return (0.0, 0.0);
    }
    if t_s > start + width {
        // Net rotation of the full pulse: 2·A·width/π.
        let theta = sign * 2.0 * cfg.peak_deg_s * width / std::f64::consts::PI;
        return (0.0, theta.to_radians());
    }
    let phase = std::f64::consts::PI * (t_s - start) / width;
    let rate = sign * cfg.peak_deg_s * phase.sin();
    let theta = sign * cfg.peak_deg_s * (width / std::f64::consts::PI) * (1.0 - phase.cos());
    (rate, theta.to_radians())
}

/// Generates one labelled gesture window with the given noise config.
///
/// Tilt gestures are a gyro-x half-sine pulse peaking at `peak_deg_s`
/// (+ right, - left) centered in the window; the accelerometer follows
/// gravity through the integrated roll angle. `NoAction` is pure noise
/// around the rest pose. Deterministic per `(class, seed)`.
pub fn gen_gesture_with(class: GestureClass, seed: u64, cfg: &GestureGenConfig) -> GestureWindow {
    let mut rng = rng::stream_rng(seed, tags::GESTURE_GEN);
    let len = GESTURE_WINDOW_LEN;
    let sign = match class {
        GestureClass::TiltRight => 1.0,
        GestureClass::TiltLeft => -1.0,
        GestureClass::NoAction => 0.0,
    };
    let mut samples = Vec::with_capacity(len);
    for i in 0..len {
        let t_s = i as f64 / IMU_SAMPLE_RATE_HZ;
        let (rate, theta) = if sign == 0.0 {
            (0.0, 0.0)
        } else {
            pulse_at(t_s, len, cfg, sign)
        };
        let gx = rate + normal(&mut rng, cfg.gyro_noise_sigma);
        let gy = normal(&mut rng, cfg.gyro_noise_sigma);
        let gz = normal(&mut rng, cfg.gyro_noise_sigma);
        let ax = normal(&mut rng, cfg.accel_noise_sigma_g);
        let ay = theta.sin() + normal(&mut rng, cfg.accel_noise_sigma_g);
        let az = theta.cos() + normal(&mut rng, cfg.accel_noise_sigma_g);
        samples.push([ax, ay, az, gx, gy, gz]);
    }
    GestureWindow {
        samples,
        label: Some(class),
    }
}

/// [`gen_gesture_with`] under the default generator config.
pub fn gen_gesture(class: GestureClass, seed: u64) -> GestureWindow {
    gen_gesture_with(class, seed, &GestureGenConfig::default())
}

/// The canonical synthetic gesture dataset: `count` windows split evenly
/// over the three classes, each from a seed derived from `seed`.
pub fn make_gesture_dataset(count: usize, seed: u64) -> Vec<GestureWindow> {
    let per_class = count / 3;
    let mut out = Vec::with_capacity(per_class * 3);
    for class in crate::models::ALL_GESTURES {
        for i in 0..per_class {
            let s = rng::derive_seed(seed, (class.id() as u64) << 32 | i as u64);
            out.push(gen_gesture(class, s));
        }
    }
    out
}

/// TOF rangefinder reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToFReading {
    DistanceMm(f64),
    OutOfRange,
}

/// Reads the TOF sensor against an optional object: true distance plus
/// Gaussian noise, clamped non-negative; `OutOfRange` with no object or
/// beyond the sensor ceiling.
pub fn tof_read(
    scene: Option<&SceneObject>,
    noise_sigma_mm: f64,
    ceiling_mm: f64,
    rng: &mut ChaCha8Rng,
) -> ToFReading {
    match scene {
        Some(obj) if obj.distance_mm <= ceiling_mm => {
            let d = obj.distance_mm + normal(rng, noise_sigma_mm);
            ToFReading::DistanceMm(d.max(0.0))
        }
        _ => ToFReading::OutOfRange,
    }
}

/// Ground-truth stub detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StubDetectConfig {
    /// Confidence at zero distance.
    pub base_confidence: f64,
    /// Confidence decay per millimetre of distance.
    pub confidence_decay_per_mm: f64,
    /// Gaussian jitter applied to confidence.
    pub confidence_jitter_sigma: f64,
    /// Probability of injecting one false positive per frame.
    pub false_positive_rate: f64,
}

impl Default for StubDetectConfig {
    fn default() -> Self {
        Self {
            base_confidence: 0.95,
            confidence_decay_per_mm: 0.0005,
            confidence_jitter_sigma: 0.0,
            false_positive_rate: 0.0,
        }
    }
}

/// Id offset for injected false positives so they never collide with
/// scene-object indices.
pub const FALSE_POSITIVE_ID_BASE: u32 = 1000;

/// Projects each scene object to a detection (id = scene index) and
/// optionally injects false positives for robustness scenarios.
pub fn stub_detect(
    scene: &[SceneObject],
    cfg: &StubDetectConfig,
    rng: &mut ChaCha8Rng,
    fp_counter: &mut u32,
) -> Vec<TrackedDetection> {
    let mut out = Vec::with_capacity(scene.len());
    for (i, obj) in scene.iter().enumerate() {
        let conf = (cfg.base_confidence - cfg.confidence_decay_per_mm * obj.distance_mm
            + normal(rng, cfg.confidence_jitter_sigma))
        .clamp(0.05, 1.0);
        out.push(TrackedDetection {
            id: i as u32,
            detection: Detection {
                class_id: obj.class.id() as u8,
                confidence: conf,
                bbox: obj.image_bbox(),
            },
        });
    }
    if cfg.false_positive_rate > 0.0 && rng.gen::<f64>() < cfg.false_positive_rate {
        let id = FALSE_POSITIVE_ID_BASE + *fp_counter;
        *fp_counter += 1;
        out.push(TrackedDetection {
            id,
            detection: Detection {
                class_id: rng.gen_range(0..crate::objects::NUM_CLASSES) as u8,
                confidence: rng.gen_range(0.3..0.7),
                bbox: crate::detection::BBox {
                    cx: rng.gen_range(0.1..0.9),
                    cy: rng.gen_range(0.1..0.9),
                    w: rng.gen_range(0.02..0.08),
                    h: rng.gen_range(0.02..0.08),
                },
            },
        });
    }
    out
}

/// Reads a fingertip force sensor: true group force plus Gaussian noise,
/// clamped non-negative.
pub fn force_read(hand: &HandState, finger: usize, sigma_n: f64, rng: &mut ChaCha8Rng) -> f64 {
    (hand.finger_force_n(finger) + normal(rng, sigma_n)).max(0.0)
}

/// Rest-pose IMU sample: gravity on z plus channel noise.
pub fn imu_rest_sample(cfg: &PlantConfig, rng: &mut ChaCha8Rng) -> ImuSample {
    ImuSample {
        accel: [
            normal(rng, cfg.accel_noise_sigma_g),
            normal(rng, cfg.accel_noise_sigma_g),
            1.0 + normal(rng, cfg.accel_noise_sigma_g),
        ],
        gyro: [
            normal(rng, cfg.gyro_noise_sigma),
            normal(rng, cfg.gyro_noise_sigma),
            normal(rng, cfg.gyro_noise_sigma),
        ],
    }
}

/// Streams the palm IMU for an episode: rest noise, interrupted by
/// scripted gesture windows played back sample-exact from the generator.
#[derive(Debug)]
pub struct ImuSynth {
    script: Vec<(u64, GestureWindow)>,
    rest_rng: ChaCha8Rng,
}

impl ImuSynth {
    /// Builds the stream for a gesture script (`(start_ms, class)` pairs).
    /// Each entry plays the full 2 s generator window for its class, with
    /// a per-entry seed derived from the episode seed.
    pub fn new(script: &[(u64, GestureClass)], episode_seed: u64, gen_cfg: &GestureGenConfig) -> Self {
        let windows = script
            .iter()
            .enumerate()
            .map(|(i, &(t, class))| {
                let seed = rng::derive_seed(episode_seed, tags::GESTURE_GEN ^ (i as u64) << 8);
                (t, gen_gesture_with(class, seed, gen_cfg))
            })
            .collect();
        Self {
            script: windows,
            rest_rng: rng::stream_rng(episode_seed, tags::IMU_NOISE),
        }
    }

    /// Window playback duration (ms).
    pub fn window_ms() -> u64 {
        (GESTURE_WINDOW_LEN as u64 * 1000) / IMU_SAMPLE_RATE_HZ as u64
    }

    /// The IMU sample at sim time `t_ms` (called on the 30 Hz schedule).
    pub fn sample_at(&mut self, t_ms: u64, cfg: &PlantConfig) -> ImuSample {
        for (start, window) in &self.script {
            if t_ms >= *start && t_ms < start + Self::window_ms() {
                let idx =
                    (((t_ms - start) * IMU_SAMPLE_RATE_HZ as u64) / 1000) as usize;
                let idx = idx.min(window.samples.len() - 1);
                let s = window.samples[idx];
                return ImuSample {
                    accel: [s[0], s[1], s[2]],
                    gyro: [s[3], s[4], s[5]],
                };
            }
        }
        imu_rest_sample(cfg, &mut self.rest_rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objects::ObjectClass;

    fn noiseless() -> GestureGenConfig {
        GestureGenConfig {
            gyro_noise_sigma: 0.0,
            accel_noise_sigma_g: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn tilt_right_peaks_at_window_center() {
        let w = gen_gesture_with(GestureClass::TiltRight, 1, &noiseless());
        let gyro_x: Vec<f64> = w.samples.iter().map(|s| s[3]).collect();
        let (peak_idx, peak) = gyro_x
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| {
                if v > acc.1 {
                    (i, v)
                } else {
                    acc
                }
            });
        assert_eq!(peak_idx, GESTURE_WINDOW_LEN / 2);
        assert!((peak - 120.0).abs() < 1e-9, "peak {peak}");
        // Mirrored for tilt left.
        let wl = gen_gesture_with(GestureClass::TiltLeft, 1, &noiseless());
        assert!((wl.samples[GESTURE_WINDOW_LEN / 2][3] + 120.0).abs() < 1e-9);
    }

    #[test]
    fn accel_is_gravity_consistent() {
        let w = gen_gesture_with(GestureClass::TiltRight, 1, &noiseless());
        // Starts upright, ends tilted by 2·120·0.5/π degrees.
        assert!((w.samples[0][2] - 1.0).abs() < 1e-9);
        let theta_end = (2.0 * 120.0 * 0.5 / std::f64::consts::PI).to_radians();
        let last = w.samples.last().unwrap();
        assert!((last[1] - theta_end.sin()).abs() < 1e-9);
        assert!((last[2] - theta_end.cos()).abs() < 1e-9);
    }

    #[test]
    fn no_action_gyro_means_near_zero() {
        let w = gen_gesture(GestureClass::NoAction, 7);
        let t = GESTURE_WINDOW_LEN as f64;
        for ch in 3..6 {
            let mean: f64 = w.samples.iter().map(|s| s[ch]).sum::<f64>() / t;
            let bound = 3.0 * 5.0 / t.sqrt();
            assert!(mean.abs() <= bound, "channel {ch} mean {mean} vs {bound}");
        }
    }

    #[test]
    fn generator_is_deterministic() {
        let a = gen_gesture(GestureClass::TiltLeft, 99);
        let b = gen_gesture(GestureClass::TiltLeft, 99);
        assert_eq!(a, b);
        let c = gen_gesture(GestureClass::TiltLeft, 100);
        assert_ne!(a, c);
    }

    #[test]
    fn tof_reads_distance_and_ceiling() {
        let mut rng = rng::stream_rng(1, tags::TOF);
        let obj = SceneObject::from_class(ObjectClass::Bottle, 80.0);
        assert_eq!(
            tof_read(Some(&obj), 0.0, 200.0, &mut rng),
            ToFReading::DistanceMm(80.0)
        );
        assert_eq!(tof_read(None, 0.0, 200.0, &mut rng), ToFReading::OutOfRange);
        let far = SceneObject::from_class(ObjectClass::Bottle, 300.0);
        assert_eq!(
            tof_read(Some(&far), 0.0, 200.0, &mut rng),
            ToFReading::OutOfRange
        );
    }

    #[test]
    fn tof_noise_sigma_matches_config() {
        let mut rng = rng::stream_rng(5, tags::TOF);
        let obj = SceneObject::from_class(ObjectClass::Cup, 100.0);
        let n = 1000;
        let reads: Vec<f64> = (0..n)
            .map(|_| match tof_read(Some(&obj), 3.0, 200.0, &mut rng) {
                ToFReading::DistanceMm(d) => d,
                ToFReading::OutOfRange => unreachable!(),
            })
            .collect();
        let mean = reads.iter().sum::<f64>() / n as f64;
        let var = reads.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = var.sqrt();
        assert!((2.5..3.5).contains(&sigma), "sample sigma {sigma}");
    }

    #[test]
    fn stub_detect_projects_scene_objects() {
        let scene = vec![
            SceneObject::from_class(ObjectClass::Bottle, 100.0),
            SceneObject::from_class(ObjectClass::Pen, 300.0),
        ];
        let mut rng = rng::stream_rng(1, tags::DETECT);
        let mut fp = 0;
        let dets = stub_detect(&scene, &StubDetectConfig::default(), &mut rng, &mut fp);
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].id, 0);
        assert_eq!(dets[0].detection.class_id, ObjectClass::Bottle.id() as u8);
        assert!(dets[0].detection.bbox.area() > dets[1].detection.bbox.area());
        // Empty scene produces no detections.
        let empty = stub_detect(&[], &StubDetectConfig::default(), &mut rng, &mut fp);
        assert!(empty.is_empty());
    }

    #[test]
    fn force_read_tracks_group_force() {
        let hand = HandState {
            group_force_n: [5.0, 2.0, 0.0],
            ..Default::default()
        };
        let mut rng = rng::stream_rng(1, tags::FORCE);
        // Noise-free reads mirror the plant force for each finger.
        assert_eq!(force_read(&hand, 0, 0.0, &mut rng), 5.0);
        assert_eq!(force_read(&hand, 1, 0.0, &mut rng), 2.0);
        assert_eq!(force_read(&hand, 2, 0.0, &mut rng), 2.0);
        assert_eq!(force_read(&hand, 4, 0.0, &mut rng), 0.0);
        // With noise, stays within 3 sigma almost surely and non-negative.
        for _ in 0..200 {
            let f = force_read(&hand, 4, 0.05, &mut rng);
            assert!(f >= 0.0);
            assert!(f < 0.3);
        }
    }

    #[test]
    fn imu_synth_plays_back_scripted_windows() {
        let cfg = PlantConfig {
            gyro_noise_sigma: 0.0,
            accel_noise_sigma_g: 0.0,
            ..Default::default()
        };
        let gen_cfg = noiseless();
        let script = vec![(500u64, GestureClass::TiltRight)];
        let mut synth = ImuSynth::new(&script, 42, &gen_cfg);
        // Peak lands at script start + 1000 ms (window center).
        let peak = synth.sample_at(1500, &cfg);
        assert!((peak.gyro[0] - 120.0).abs() < 1e-9);
        // Outside playback: rest pose.
        let rest = synth.sample_at(4000, &cfg);
        assert_eq!(rest.gyro[0], 0.0);
        assert_eq!(rest.accel[2], 1.0);
    }

    #[test]
    fn imu_synth_is_deterministic() {
        let cfg = PlantConfig::default();
        let gen_cfg = GestureGenConfig::default();
        let script = vec![(200u64, GestureClass::TiltLeft)];
        let sample = |seed| {
            let mut s = ImuSynth::new(&script, seed, &gen_cfg);
            (0..90)
                .map(|i| s.sample_at(i * 33, &cfg).gyro[0])
                .collect::<Vec<_>>()
        };
        assert_eq!(sample(9), sample(9));
        assert_ne!(sample(9), sample(10));
    }
}
