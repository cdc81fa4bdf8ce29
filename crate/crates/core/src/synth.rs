//! Seeded synthetic indoor scenes: a rectangular room furnished from a small
//! catalog, filmed by a camera circling the room center and looking outward.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{Box3, ObjectInstance, Vec3};
use crate::scene::{CameraPose, Intrinsics, SceneRecord};

/// `(label, width, depth, height, base height)` in meters.
const CATALOG: &[(&str, f64, f64, f64, f64)] = &[
    ("sofa", 2.0, 0.9, 0.8, 0.0),
    ("table", 1.2, 0.8, 0.75, 0.0),
    ("chair", 0.5, 0.5, 0.9, 0.0),
    ("bed", 2.0, 1.6, 0.5, 0.0),
    ("lamp", 0.3, 0.3, 1.6, 0.0),
    ("cabinet", 0.9, 0.5, 1.8, 0.0),
    ("plant", 0.4, 0.4, 0.8, 0.0),
    ("television", 1.2, 0.15, 0.7, 1.0),
    ("shelf", 1.0, 0.3, 0.3, 1.5),
    ("painting", 0.8, 0.05, 0.6, 1.4),
    ("desk", 1.4, 0.7, 0.75, 0.0),
    ("stool", 0.4, 0.4, 0.5, 0.0),
];

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub room_width: f64,
    pub room_depth: f64,
    pub min_objects: usize,
    pub max_objects: usize,
    pub poses: usize,
    pub fps: f64,
    pub camera_height: f64,
    pub orbit_radius: f64,
    /// Full turns the camera makes over the trajectory.
    pub turns: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            room_width: 8.0,
            room_depth: 6.0,
            min_objects: 7,
            max_objects: 11,
            poses: 160,
            fps: 40.0,
            camera_height: 1.4,
            orbit_radius: 1.0,
            turns: 1.0,
        }
    }
}

pub fn synth_scene(seed: u64, cfg: &SynthConfig) -> SceneRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(cfg.min_objects..=cfg.max_objects);
    let mut objects = Vec::with_capacity(n);
    for i in 0..n {
        let (label, w, d, h, z0) = CATALOG[rng.gen_range(0..CATALOG.len())];
        let jitter = |rng: &mut ChaCha8Rng, v: f64| v * rng.gen_range(0.8..1.2);
        let (w, d, h) = (
            jitter(&mut rng, w),
            jitter(&mut rng, d),
            jitter(&mut rng, h),
        );
        let (w, d) = if rng.gen_bool(0.5) { (w, d) } else { (d, w) };
        let x = rng.gen_range(w / 2.0..cfg.room_width - w / 2.0);
        let y = rng.gen_range(d / 2.0..cfg.room_depth - d / 2.0);
        let bbox = Box3::new(
            Vec3::new(x - w / 2.0, y - d / 2.0, z0),
            Vec3::new(x + w / 2.0, y + d / 2.0, z0 + h),
        )
        .expect("positive sizes");
        objects.push(ObjectInstance {
            id: format!("{label}_{i}"),
            label: label.to_string(),
            bbox,
        });
    }

    let (cx, cy) = (cfg.room_width / 2.0, cfg.room_depth / 2.0);
    let phase = rng.gen_range(0.0..360.0);
    let t0 = rng.gen_range(0.0..1.0);
    let intrinsics = Intrinsics::from_array([320.0, 320.0, 320.0, 240.0, 640.0, 480.0]);
    let trajectory = (0..cfg.poses)
        .map(|k| {
            let frac = k as f64 / cfg.poses as f64;
            let ang = phase + 360.0 * cfg.turns * frac;
            let (s, c) = ang.to_radians().sin_cos();
            CameraPose {
                timestamp: t0 + k as f64 / cfg.fps,
                position: Vec3::new(
                    cx - cfg.orbit_radius * c,
                    cy - cfg.orbit_radius * s,
                    cfg.camera_height,
                ),
                yaw_deg: ang.rem_euclid(360.0),
                intrinsics,
            }
        })
        .collect();

    SceneRecord {
        scene_id: format!("synth_{seed:04}"),
        objects,
        trajectory,
        visibility: None,
    }
}
