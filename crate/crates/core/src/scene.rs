//! Scene metadata: loading, trajectory resampling, per-frame visibility and
//! multi-length frame-window sampling.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Box3, ObjectInstance, Vec2, Vec3};

/// Frame counts a sequence may have.
pub const SEQUENCE_LENGTHS: [usize; 5] = [1, 4, 8, 12, 16];

/// Rate trajectories are normalized to before sampling.
pub const DEFAULT_FPS: f64 = 20.0;

/// Default minimum projected-rectangle area, as a fraction of the image.
pub const DEFAULT_MIN_AREA_FRACTION: f64 = 0.005;

const NEAR_PLANE: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum SceneError {
    #[error("scene parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("frame {frame} out of range (trajectory has {len} poses)")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error("unsupported sequence length {0} (allowed: 1, 4, 8, 12, 16)")]
    UnsupportedLength(usize),
    #[error("trajectory of {available} frames too short for sequence lengths {lengths:?}")]
    TooShort {
        lengths: Vec<usize>,
        available: usize,
    },
    #[error("no salient window of length {0}")]
    NoSalientWindow(usize),
    #[error("invalid frame sequence: {0}")]
    BadSequence(String),
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> SceneError {
    SceneError::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            fx: v[0],
            fy: v[1],
            cx: v[2],
            cy: v[3],
            width: v[4],
            height: v[5],
        }
    }

    pub fn to_array(self) -> [f64; 6] {
        [self.fx, self.fy, self.cx, self.cy, self.width, self.height]
    }
}

/// A level camera: yaw only, measured counterclockwise from world `+x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    pub timestamp: f64,
    pub position: Vec3,
    pub yaw_deg: f64,
    pub intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn facing(&self) -> Vec2 {
        let (s, c) = self.yaw_deg.to_radians().sin_cos();
        Vec2::new(c, s)
    }

    /// Camera-space coordinates `(right, up, depth)` of a world point.
    fn camera_coords(&self, p: Vec3) -> (f64, f64, f64) {
        let f = self.facing();
        let (dx, dy, dz) = (
            p.x - self.position.x,
            p.y - self.position.y,
            p.z - self.position.z,
        );
        let depth = dx * f.x + dy * f.y;
        let right = dx * f.y - dy * f.x;
        (right, dz, depth)
    }

    fn project(&self, right: f64, up: f64, depth: f64) -> (f64, f64) {
        let k = &self.intrinsics;
        (k.cx + k.fx * right / depth, k.cy - k.fy * up / depth)
    }

    /// Depth of a world point along the viewing direction.
    pub fn depth_of(&self, p: Vec3) -> f64 {
        self.camera_coords(p).2
    }

    /// Area of the clipped image-space bounding rectangle of `b`, as a
    /// fraction of the image area. Parts of the box behind the near plane
    /// are cut away before projecting.
    pub fn projected_area_fraction(&self, b: &Box3) -> f64 {
        const EDGES: [(usize, usize); 12] = [
            (0, 1),
            (1, 2),
            (2, 3),
            (3, 0),
            (4, 5),
            (5, 6),
            (6, 7),
            (7, 4),
            (0, 4),
            (1, 5),
            (2, 6),
            (3, 7),
        ];
        let cam: Vec<(f64, f64, f64)> = b.corners().iter().map(|&c| self.camera_coords(c)).collect();
        let mut pts: Vec<(f64, f64)> = cam
            .iter()
            .filter(|c| c.2 >= NEAR_PLANE)
            .map(|&(r, u, d)| self.project(r, u, d))
            .collect();
        for (i, j) in EDGES {
            let (a, b) = (cam[i], cam[j]);
            if (a.2 < NEAR_PLANE) != (b.2 < NEAR_PLANE) {
                let t = (NEAR_PLANE - a.2) / (b.2 - a.2);
                let r = a.0 + t * (b.0 - a.0);
                let u = a.1 + t * (b.1 - a.1);
                pts.push(self.project(r, u, NEAR_PLANE));
            }
        }
        if pts.is_empty() {
            return 0.0;
        }
        let k = &self.intrinsics;
        let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (u, v) in pts {
            u0 = u0.min(u);
            v0 = v0.min(v);
            u1 = u1.max(u);
            v1 = v1.max(v);
        }
        let w = (u1.min(k.width) - u0.max(0.0)).max(0.0);
        let h = (v1.min(k.height) - v0.max(0.0)).max(0.0);
        w * h / (k.width * k.height)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub scene_id: String,
    pub objects: Vec<ObjectInstance<Box3>>,
    pub trajectory: Vec<CameraPose>,
    pub visibility: Option<BTreeMap<usize, BTreeSet<String>>>,
}

// Wire format.

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneJson {
    scene_id: String,
    objects: Vec<ObjectJson>,
    trajectory: Vec<PoseJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    visibility: Option<BTreeMap<String, Vec<String>>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ObjectJson {
    id: String,
    label: String,
    box3: [f64; 6],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PoseJson {
    t: f64,
    pos: [f64; 3],
    yaw_deg: f64,
    intrinsics: [f64; 6],
}

/// Parses and validates one scene JSON document.
pub fn load_scene(source: impl std::io::Read) -> Result<SceneRecord, SceneError> {
    let raw: SceneJson = serde_json::from_reader(source)?;
    SceneRecord::from_json(raw)
}

pub fn load_scene_str(s: &str) -> Result<SceneRecord, SceneError> {
    load_scene(s.as_bytes())
}

impl SceneRecord {
    fn from_json(raw: SceneJson) -> Result<Self, SceneError> {
        let mut objects = Vec::with_capacity(raw.objects.len());
        for (i, o) in raw.objects.into_iter().enumerate() {
            let bbox = Box3::from_array(o.box3)
                .map_err(|e| invalid(format!("objects[{i}].box3"), e.to_string()))?;
            objects.push(ObjectInstance {
                id: o.id,
                label: o.label,
                bbox,
            });
        }
        let trajectory = raw
            .trajectory
            .into_iter()
            .map(|p| CameraPose {
                timestamp: p.t,
                position: Vec3::new(p.pos[0], p.pos[1], p.pos[2]),
                yaw_deg: p.yaw_deg,
                intrinsics: Intrinsics::from_array(p.intrinsics),
            })
            .collect();
        let visibility = match raw.visibility {
            None => None,
            Some(map) => {
                let mut out = BTreeMap::new();
                for (k, ids) in map {
                    let frame: usize = k.parse().map_err(|_| {
                        invalid(format!("visibility.{k}"), "key is not a frame index")
                    })?;
                    out.insert(frame, ids.into_iter().collect());
                }
                Some(out)
            }
        };
        let scene = SceneRecord {
            scene_id: raw.scene_id,
            objects,
            trajectory,
            visibility,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        if self.scene_id.is_empty() {
            return Err(invalid("scene_id", "empty"));
        }
        let mut ids = HashSet::new();
        for (i, o) in self.objects.iter().enumerate() {
            if o.label.trim().is_empty() {
                return Err(invalid(format!("objects[{i}].label"), "empty label"));
            }
            if !ids.insert(o.id.as_str()) {
                return Err(invalid(
                    format!("objects[{i}].id"),
                    format!("duplicate id {:?}", o.id),
                ));
            }
        }
        if self.trajectory.is_empty() {
            return Err(invalid("trajectory", "empty trajectory"));
        }
        for (i, p) in self.trajectory.iter().enumerate() {
            if !p.timestamp.is_finite() || !p.position.is_finite() || !p.yaw_deg.is_finite() {
                return Err(invalid(format!("trajectory[{i}]"), "non-finite value"));
            }
            let k = p.intrinsics.to_array();
            if k.iter().any(|v| !v.is_finite() || *v <= 0.0) {
                return Err(invalid(
                    format!("trajectory[{i}].intrinsics"),
                    "intrinsics must be positive",
                ));
            }
            if i > 0 && p.timestamp <= self.trajectory[i - 1].timestamp {
                return Err(invalid(
                    format!("trajectory[{i}].t"),
                    "timestamps must be strictly increasing",
                ));
            }
        }
        if let Some(vis) = &self.visibility {
            for (frame, seen) in vis {
                if *frame >= self.trajectory.len() {
                    return Err(invalid(
                        format!("visibility.{frame}"),
                        "frame index out of range",
                    ));
                }
                if let Some(bad) = seen.iter().find(|id| !ids.contains(id.as_str())) {
                    return Err(invalid(
                        format!("visibility.{frame}"),
                        format!("unknown object id {bad:?}"),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> String {
        let raw = SceneJson {
            scene_id: self.scene_id.clone(),
            objects: self
                .objects
                .iter()
                .map(|o| ObjectJson {
                    id: o.id.clone(),
                    label: o.label.clone(),
                    box3: o.bbox.to_array(),
                })
                .collect(),
            trajectory: self
                .trajectory
                .iter()
                .map(|p| PoseJson {
                    t: p.timestamp,
                    pos: [p.position.x, p.position.y, p.position.z],
                    yaw_deg: p.yaw_deg,
                    intrinsics: p.intrinsics.to_array(),
                })
                .collect(),
            visibility: self.visibility.as_ref().map(|v| {
                v.iter()
                    .map(|(k, ids)| (k.to_string(), ids.iter().cloned().collect()))
                    .collect()
            }),
        };
        serde_json::to_string(&raw).expect("scene serializes")
    }

    pub fn object(&self, id: &str) -> Option<&ObjectInstance<Box3>> {
        self.objects.iter().find(|o| o.id == id)
    }

    /// Copy of the scene with its trajectory resampled to `fps`. Precomputed
    /// visibility entries follow the poses they were recorded for.
    pub fn resampled(&self, fps: f64) -> SceneRecord {
        let picks = resample_indices(&self.trajectory, fps);
        let visibility = self.visibility.as_ref().map(|vis| {
            picks
                .iter()
                .enumerate()
                .filter_map(|(new, old)| vis.get(old).map(|s| (new, s.clone())))
                .collect()
        });
        SceneRecord {
            scene_id: self.scene_id.clone(),
            objects: self.objects.clone(),
            trajectory: picks.iter().map(|&i| self.trajectory[i]).collect(),
            visibility,
        }
    }
}

/// Timestamp differences below this count as ties.
const TIE_TOLERANCE: f64 = 1e-9;

/// Indices of the poses picked by [`resample_fps`].
pub fn resample_indices(traj: &[CameraPose], target_fps: f64) -> Vec<usize> {
    assert!(target_fps > 0.0, "target_fps must be positive");
    let Some(first) = traj.first() else {
        return Vec::new();
    };
    let t0 = first.timestamp;
    let last = traj[traj.len() - 1].timestamp;
    let mut picks: Vec<usize> = Vec::new();
    let mut j = 0;
    let mut k: u64 = 0;
    loop {
        let tick = t0 + k as f64 / target_fps;
        if tick > last + TIE_TOLERANCE {
            break;
        }
        while j + 1 < traj.len()
            && (traj[j + 1].timestamp - tick).abs() + TIE_TOLERANCE
                < (traj[j].timestamp - tick).abs()
        {
            j += 1;
        }
        if picks.last() != Some(&j) {
            picks.push(j);
        }
        k += 1;
    }
    picks
}

/// Nearest-timestamp resampling onto ticks `t0 + k / target_fps`. Ties pick
/// the earlier pose; a pose picked by consecutive ticks appears once.
pub fn resample_fps(traj: &[CameraPose], target_fps: f64) -> Vec<CameraPose> {
    resample_indices(traj, target_fps)
        .into_iter()
        .map(|i| traj[i])
        .collect()
}

/// Ids of the objects considered visible in `frame`.
pub fn frame_visibility(
    scene: &SceneRecord,
    frame: usize,
    min_area_fraction: f64,
) -> Result<BTreeSet<String>, SceneError> {
    let pose = scene
        .trajectory
        .get(frame)
        .ok_or(SceneError::FrameOutOfRange {
            frame,
            len: scene.trajectory.len(),
        })?;
    if let Some(vis) = &scene.visibility {
        return Ok(vis.get(&frame).cloned().unwrap_or_default());
    }
    Ok(scene
        .objects
        .iter()
        .filter(|o| {
            pose.depth_of(o.bbox.center()) > 0.0
                && pose.projected_area_fraction(&o.bbox) >= min_area_fraction
        })
        .map(|o| o.id.clone())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameSequence {
    pub scene_id: String,
    pub frame_indices: Vec<usize>,
}

impl FrameSequence {
    pub fn new(scene_id: impl Into<String>, frame_indices: Vec<usize>) -> Result<Self, SceneError> {
        if !SEQUENCE_LENGTHS.contains(&frame_indices.len()) {
            return Err(SceneError::UnsupportedLength(frame_indices.len()));
        }
        if frame_indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SceneError::BadSequence(
                "indices must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            scene_id: scene_id.into(),
            frame_indices,
        })
    }

    pub fn len(&self) -> usize {
        self.frame_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_indices.is_empty()
    }

    pub fn last_frame(&self) -> usize {
        *self.frame_indices.last().expect("sequences are non-empty")
    }

    pub fn is_contiguous(&self) -> bool {
        self.frame_indices.windows(2).all(|w| w[1] == w[0] + 1)
    }
}

/// Window sampling parameters.
#[derive(Debug, Clone)]
pub struct SequenceSampler {
    pub min_area_fraction: f64,
    /// A window is salient if one of its frames shows at least this many objects.
    pub min_salient_objects: usize,
    pub max_retries: usize,
}

impl Default for SequenceSampler {
    fn default() -> Self {
        Self {
            min_area_fraction: DEFAULT_MIN_AREA_FRACTION,
            min_salient_objects: 2,
            max_retries: 64,
        }
    }
}

impl SequenceSampler {
    /// Draws `per_length` contiguous windows for each requested length
    /// (ascending). Output is a pure function of the inputs and `seed`.
    pub fn sample(
        &self,
        scene: &SceneRecord,
        lengths: &[usize],
        per_length: usize,
        seed: u64,
    ) -> Result<Vec<FrameSequence>, SceneError> {
        let mut lengths: Vec<usize> = lengths.to_vec();
        lengths.sort_unstable();
        lengths.dedup();
        if let Some(&bad) = lengths.iter().find(|l| !SEQUENCE_LENGTHS.contains(l)) {
            return Err(SceneError::UnsupportedLength(bad));
        }
        let n = scene.trajectory.len();
        let short: Vec<usize> = lengths.iter().copied().filter(|&l| l > n).collect();
        if !short.is_empty() {
            return Err(SceneError::TooShort {
                lengths: short,
                available: n,
            });
        }

        // scenes with fewer objects than the threshold need all of them in view
        let need = self.min_salient_objects.min(scene.objects.len()).max(1);
        let salient: Vec<bool> = (0..n)
            .map(|f| frame_visibility(scene, f, self.min_area_fraction).map(|s| s.len() >= need))
            .collect::<Result<_, _>>()?;
        let mut prefix = vec![0usize; n + 1];
        for (i, s) in salient.iter().enumerate() {
            prefix[i + 1] = prefix[i] + usize::from(*s);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(lengths.len() * per_length);
        for &len in &lengths {
            for _ in 0..per_length {
                let mut found = None;
                for _ in 0..self.max_retries.max(1) {
                    let start = rng.gen_range(0..=n - len);
                    if prefix[start + len] > prefix[start] {
                        found = Some(start);
                        break;
                    }
                }
                let start = found.ok_or(SceneError::NoSalientWindow(len))?;
                out.push(FrameSequence::new(
                    scene.scene_id.clone(),
                    (start..start + len).collect(),
                )?);
            }
        }
        Ok(out)
    }
}

/// [`SequenceSampler::sample`] with default parameters.
pub fn sample_sequences(
    scene: &SceneRecord,
    lengths: &[usize],
    per_length: usize,
    seed: u64,
) -> Result<Vec<FrameSequence>, SceneError> {
    SequenceSampler::default().sample(scene, lengths, per_length, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    const K: [f64; 6] = [200.0, 200.0, 160.0, 120.0, 320.0, 240.0];

    fn pose(t: f64, x: f64, y: f64, yaw: f64) -> CameraPose {
        CameraPose {
            timestamp: t,
            position: Vec3::new(x, y, 1.0),
            yaw_deg: yaw,
            intrinsics: Intrinsics::from_array(K),
        }
    }

    fn object(id: &str, label: &str, b: [f64; 6]) -> ObjectInstance<Box3> {
        ObjectInstance {
            id: id.into(),
            label: label.into(),
            bbox: Box3::from_array(b).unwrap(),
        }
    }

    fn traj(n: usize, fps: f64) -> Vec<CameraPose> {
        (0..n)
            .map(|i| pose(i as f64 / fps, i as f64 * 0.01, 0.0, 0.0))
            .collect()
    }

    const MINIMAL: &str = r#"{"scene_id":"s0","objects":[{"id":"o1","label":"sofa","box3":[0,0,0,1,1,1]}],
        "trajectory":[{"t":0.0,"pos":[0,0,1],"yaw_deg":0,"intrinsics":[200,200,160,120,320,240]}]}"#;

    #[test]
    fn loads_minimal_scene() {
        let s = load_scene_str(MINIMAL).unwrap();
        assert_eq!(s.scene_id, "s0");
        assert_eq!(s.objects.len(), 1);
        assert_eq!(s.trajectory.len(), 1);
        assert!(s.visibility.is_none());
    }

    #[test]
    fn missing_objects_is_a_parse_error() {
        let err = load_scene_str(r#"{"scene_id":"s","trajectory":[]}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("objects"), "{msg}");
        assert!(msg.contains("column"), "{msg}");
    }

    #[test]
    fn rejects_non_monotone_timestamps() {
        let bad = MINIMAL.replace(
            r#"[{"t":0.0,"#,
            r#"[{"t":1.0,"pos":[0,0,1],"yaw_deg":0,"intrinsics":[200,200,160,120,320,240]},{"t":0.5,"#,
        );
        match load_scene_str(&bad) {
            Err(SceneError::Invalid { field, .. }) => assert_eq!(field, "trajectory[1].t"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_inverted_box_and_duplicate_ids() {
        let inverted = MINIMAL.replace("[0,0,0,1,1,1]", "[0,0,2,1,1,1]");
        assert!(matches!(
            load_scene_str(&inverted),
            Err(SceneError::Invalid { field, .. }) if field == "objects[0].box3"
        ));
        let dup = MINIMAL.replace(
            r#"[{"id":"o1""#,
            r#"[{"id":"o1","label":"x","box3":[0,0,0,1,1,1]},{"id":"o1""#,
        );
        assert!(matches!(
            load_scene_str(&dup),
            Err(SceneError::Invalid { field, .. }) if field == "objects[1].id"
        ));
    }

    #[test]
    fn rejects_visibility_for_unknown_object() {
        let bad = MINIMAL.replace(
            r#""trajectory""#,
            r#""visibility":{"0":["ghost"]},"trajectory""#,
        );
        assert!(matches!(
            load_scene_str(&bad),
            Err(SceneError::Invalid { .. })
        ));
    }

    #[test]
    fn resample_40_to_20_takes_every_second_pose() {
        let t = traj(41, 40.0);
        let picks = resample_indices(&t, 20.0);
        assert_eq!(picks, (0..41).step_by(2).collect::<Vec<_>>());
    }

    #[test]
    fn resample_identity_and_single_pose() {
        let t = traj(25, 20.0);
        assert_eq!(resample_fps(&t, 20.0), t);
        let one = traj(1, 20.0);
        assert_eq!(resample_fps(&one, 20.0), one);
    }

    #[test]
    fn resample_ties_pick_earlier_pose() {
        // 30 FPS: tick 1/20 lies midway between poses 1 and 2.
        let t: Vec<CameraPose> = (0..7)
            .map(|i| pose(i as f64 / 30.0, 0.0, 0.0, 0.0))
            .collect();
        let picks = resample_indices(&t, 20.0);
        assert_eq!(picks[1], 1);
        assert_eq!(
            resample_fps(&resample_fps(&t, 20.0), 20.0),
            resample_fps(&t, 20.0)
        );
    }

    #[test]
    fn upsampling_never_duplicates_poses() {
        let t = traj(5, 10.0);
        assert_eq!(resample_fps(&t, 20.0), t);
    }

    fn one_frame_scene(objects: Vec<ObjectInstance<Box3>>) -> SceneRecord {
        SceneRecord {
            scene_id: "v".into(),
            objects,
            trajectory: vec![pose(0.0, 0.0, 0.0, 0.0)],
            visibility: None,
        }
    }

    #[test]
    fn precomputed_visibility_passes_through() {
        let mut s = one_frame_scene(vec![object("a", "x", [5.0, -1.0, 0.0, 6.0, 1.0, 2.0])]);
        s.visibility = Some(BTreeMap::from([(0, BTreeSet::new())]));
        assert!(frame_visibility(&s, 0, 0.0).unwrap().is_empty());
        assert!(matches!(
            frame_visibility(&s, 3, 0.0),
            Err(SceneError::FrameOutOfRange { frame: 3, len: 1 })
        ));
    }

    #[test]
    fn object_behind_camera_is_excluded() {
        let s = one_frame_scene(vec![object("a", "x", [-6.0, -1.0, 0.0, -5.0, 1.0, 2.0])]);
        assert!(frame_visibility(&s, 0, 0.0).unwrap().is_empty());
    }

    #[test]
    fn zero_threshold_keeps_every_object_in_front() {
        let s = one_frame_scene(vec![
            object("front", "x", [5.0, -1.0, 0.0, 6.0, 1.0, 2.0]),
            // in front but outside the field of view
            object("side", "x", [1.0, -40.0, 0.0, 1.5, -39.0, 1.0]),
            object("back", "x", [-3.0, 0.0, 0.0, -2.0, 1.0, 1.0]),
        ]);
        let vis = frame_visibility(&s, 0, 0.0).unwrap();
        assert_eq!(
            vis,
            BTreeSet::from(["front".to_string(), "side".to_string()])
        );
        let strict = frame_visibility(&s, 0, 0.01).unwrap();
        assert_eq!(strict, BTreeSet::from(["front".to_string()]));
    }

    /// Casts one ray per pixel and counts hits on the box (slab test).
    fn pixel_coverage(pose: &CameraPose, b: &Box3) -> f64 {
        let k = pose.intrinsics;
        let f = pose.facing();
        let (w, h) = (k.width as usize, k.height as usize);
        let mut hits = 0usize;
        for v in 0..h {
            for u in 0..w {
                let xr = (u as f64 + 0.5 - k.cx) / k.fx;
                let yu = -(v as f64 + 0.5 - k.cy) / k.fy;
                // right = (f.y, -f.x, 0), up = z
                let dir = [f.x + xr * f.y, f.y - xr * f.x, yu];
                let o = [pose.position.x, pose.position.y, pose.position.z];
                let lo = [b.min.x, b.min.y, b.min.z];
                let hi = [b.max.x, b.max.y, b.max.z];
                let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
                let mut miss = false;
                for a in 0..3 {
                    if dir[a].abs() < 1e-15 {
                        if o[a] < lo[a] || o[a] > hi[a] {
                            miss = true;
                        }
                        continue;
                    }
                    let ta = (lo[a] - o[a]) / dir[a];
                    let tb = (hi[a] - o[a]) / dir[a];
                    t0 = t0.max(ta.min(tb));
                    t1 = t1.min(ta.max(tb));
                }
                if !miss && t0 <= t1 {
                    hits += 1;
                }
            }
        }
        hits as f64 / (w * h) as f64
    }

    #[test]
    fn object_filling_view_is_included() {
        let big = object("wall", "cabinet", [3.0, -2.0, 0.0, 3.5, 2.0, 2.5]);
        let small = object("mug", "mug", [6.0, 2.0, 0.9, 6.1, 2.1, 1.0]);
        let s = one_frame_scene(vec![big.clone(), small.clone()]);
        let p = &s.trajectory[0];
        let cov_big = pixel_coverage(p, &big.bbox);
        let cov_small = pixel_coverage(p, &small.bbox);
        assert!(cov_big >= 0.05, "oracle coverage {cov_big}");
        assert!(cov_small < 0.05);
        let vis = frame_visibility(&s, 0, 0.05).unwrap();
        assert!(vis.contains("wall"));
        assert!(!vis.contains("mug"));
        // the bounding rectangle always covers at least the true pixel footprint
        assert!(p.projected_area_fraction(&big.bbox) + 1e-9 >= cov_big);
    }

    #[test]
    fn straddling_box_is_clipped_not_dropped() {
        // box extends behind the camera but its center is in front
        let b = Box3::from_array([-1.0, -0.5, 0.0, 4.0, 0.5, 2.0]).unwrap();
        let p = pose(0.0, 0.0, 0.0, 0.0);
        let frac = p.projected_area_fraction(&b);
        assert!(frac > 0.0 && frac <= 1.0);
    }

    fn sampling_scene(n: usize) -> SceneRecord {
        SceneRecord {
            scene_id: "samp".into(),
            objects: vec![
                object("a", "sofa", [4.0, -1.0, 0.0, 5.0, 0.0, 1.0]),
                object("b", "table", [4.0, 0.5, 0.0, 5.0, 1.5, 1.0]),
            ],
            trajectory: traj(n, 20.0),
            visibility: None,
        }
    }

    #[test]
    fn single_frame_sequences() {
        let s = sampling_scene(30);
        let seqs = sample_sequences(&s, &[1], 3, 7).unwrap();
        assert_eq!(seqs.len(), 3);
        assert!(seqs.iter().all(|q| q.len() == 1));
    }

    #[test]
    fn sampling_is_deterministic_and_contiguous() {
        let s = sampling_scene(40);
        let a = sample_sequences(&s, &[4, 8], 5, 11).unwrap();
        let b = sample_sequences(&s, &[8, 4], 5, 11).unwrap();
        assert_eq!(a, b);
        for q in &a {
            // contiguity checker: each index follows its predecessor
            for w in q.frame_indices.windows(2) {
                assert_eq!(w[1], w[0] + 1);
            }
            assert!(q.last_frame() < s.trajectory.len());
        }
        assert_eq!(a.iter().filter(|q| q.len() == 4).count(), 5);
    }

    #[test]
    fn too_short_and_unsalient() {
        let s = sampling_scene(10);
        match sample_sequences(&s, &[4, 12, 16], 1, 0) {
            Err(SceneError::TooShort { lengths, available }) => {
                assert_eq!(lengths, vec![12, 16]);
                assert_eq!(available, 10);
            }
            other => panic!("unexpected {other:?}"),
        }
        let mut behind = sampling_scene(10);
        behind.objects[1] = object("b", "table", [-5.0, 0.5, 0.0, -4.0, 1.5, 1.0]);
        assert!(matches!(
            sample_sequences(&behind, &[4], 1, 0),
            Err(SceneError::NoSalientWindow(4))
        ));
        // a single-object scene only needs that object in view
        behind.objects.truncate(1);
        assert_eq!(sample_sequences(&behind, &[4], 2, 0).unwrap().len(), 2);
        assert!(matches!(
            sample_sequences(&s, &[3], 1, 0),
            Err(SceneError::UnsupportedLength(3))
        ));
    }

    #[test]
    fn frame_sequence_validation() {
        assert!(FrameSequence::new("s", vec![0, 1, 2]).is_err());
        assert!(FrameSequence::new("s", vec![3, 2, 4, 5]).is_err());
        assert!(FrameSequence::new("s", vec![2, 3, 4, 5])
            .unwrap()
            .is_contiguous());
    }

    #[test]
    fn resampled_scene_remaps_visibility() {
        let mut s = sampling_scene(9);
        s.trajectory = traj(9, 40.0);
        s.visibility = Some(
            (0..9)
                .map(|i| {
                    (
                        i,
                        BTreeSet::from([if i % 2 == 0 { "a" } else { "b" }.to_string()]),
                    )
                })
                .collect(),
        );
        let r = s.resampled(20.0);
        assert_eq!(r.trajectory.len(), 5);
        let vis = r.visibility.unwrap();
        assert!(vis.values().all(|ids| ids.contains("a")));
    }
}
