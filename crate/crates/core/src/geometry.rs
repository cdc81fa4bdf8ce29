//! Axis-aligned BEV geometry and the spatial relations computed on metric maps.
//!
//! Coordinates are meters in an observer-centered bird's-eye-view frame: the
//! observer starts at the origin and `+y` is its initial facing direction,
//! `+x` points to its right. 3D boxes add `z` as the vertical axis, up-positive.

use serde::{Deserialize, Serialize};
use std::fmt;

/// Tolerance for the unit-length check on observer facing vectors.
pub const UNIT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("non-finite coordinate")]
    NonFinite,
    #[error("inverted box: min {min:?} exceeds max {max:?}")]
    Inverted { min: Vec<f64>, max: Vec<f64> },
    #[error("facing vector is not unit length (norm {0})")]
    NotUnit(f64),
    #[error("degenerate direction")]
    DegenerateDirection,
    #[error("degenerate bearing")]
    DegenerateBearing,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product `self × other`.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn scale(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }

    /// Counterclockwise rotation by `radians` about the origin.
    pub fn rotate(self, radians: f64) -> Vec2 {
        let (s, c) = radians.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl std::ops::Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl std::ops::Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

/// Axis-aligned rectangle on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box2 {
    pub min: Vec2,
    pub max: Vec2,
}

impl Box2 {
    pub fn new(min: Vec2, max: Vec2) -> Result<Self, GeometryError> {
        if !min.is_finite() || !max.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if min.x > max.x || min.y > max.y {
            return Err(GeometryError::Inverted {
                min: vec![min.x, min.y],
                max: vec![max.x, max.y],
            });
        }
        Ok(Self { min, max })
    }

    /// Builds a box from `[xmin, ymin, xmax, ymax]`.
    pub fn from_array(v: [f64; 4]) -> Result<Self, GeometryError> {
        Self::new(Vec2::new(v[0], v[1]), Vec2::new(v[2], v[3]))
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.min.x, self.min.y, self.max.x, self.max.y]
    }

    /// Box of the given size centered on `c`. Sizes must be non-negative.
    pub fn centered(c: Vec2, width: f64, depth: f64) -> Result<Self, GeometryError> {
        let h = Vec2::new(width / 2.0, depth / 2.0);
        Self::new(c - h, c + h)
    }

    pub fn center(&self) -> Vec2 {
        center(self)
    }

    pub fn dims(&self) -> (f64, f64) {
        dims(self)
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    /// Smallest box enclosing both.
    pub fn union(&self, other: &Box2) -> Box2 {
        Box2 {
            min: Vec2::new(self.min.x.min(other.min.x), self.min.y.min(other.min.y)),
            max: Vec2::new(self.max.x.max(other.max.x), self.max.y.max(other.max.y)),
        }
    }

    pub fn translate(&self, d: Vec2) -> Box2 {
        Box2 {
            min: self.min + d,
            max: self.max + d,
        }
    }

    /// Rotation by `quarter_turns · 90°` counterclockwise about the origin.
    /// Axis-aligned boxes stay axis-aligned under these rotations.
    pub fn rotate_quarter(&self, quarter_turns: i32) -> Box2 {
        let rot = |p: Vec2| match quarter_turns.rem_euclid(4) {
            0 => p,
            1 => Vec2::new(-p.y, p.x),
            2 => Vec2::new(-p.x, -p.y),
            _ => Vec2::new(p.y, -p.x),
        };
        bounding(self.corners().into_iter().map(rot)).expect("four finite corners")
    }
}

/// Axis-aligned bounding box of a point set, `None` when empty.
pub fn bounding(points: impl IntoIterator<Item = Vec2>) -> Option<Box2> {
    let mut it = points.into_iter();
    let first = it.next()?;
    let mut b = Box2 {
        min: first,
        max: first,
    };
    for p in it {
        b.min.x = b.min.x.min(p.x);
        b.min.y = b.min.y.min(p.y);
        b.max.x = b.max.x.max(p.x);
        b.max.y = b.max.y.max(p.y);
    }
    Some(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn xy(self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Axis-aligned 3D box, `z` up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Box3 {
    pub min: Vec3,
    pub max: Vec3,
}

impl Box3 {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        if !min.is_finite() || !max.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        if min.x > max.x || min.y > max.y || min.z > max.z {
            return Err(GeometryError::Inverted {
                min: vec![min.x, min.y, min.z],
                max: vec![max.x, max.y, max.z],
            });
        }
        Ok(Self { min, max })
    }

    /// Builds a box from `[xmin, ymin, zmin, xmax, ymax, zmax]`.
    pub fn from_array(v: [f64; 6]) -> Result<Self, GeometryError> {
        Self::new(Vec3::new(v[0], v[1], v[2]), Vec3::new(v[3], v[4], v[5]))
    }

    pub fn to_array(self) -> [f64; 6] {
        [
            self.min.x, self.min.y, self.min.z, self.max.x, self.max.y, self.max.z,
        ]
    }

    pub fn center(&self) -> Vec3 {
        Vec3::new(
            (self.min.x + self.max.x) / 2.0,
            (self.min.y + self.max.y) / 2.0,
            (self.min.z + self.max.z) / 2.0,
        )
    }

    pub fn corners(&self) -> [Vec3; 8] {
        let (a, b) = (self.min, self.max);
        [
            Vec3::new(a.x, a.y, a.z),
            Vec3::new(b.x, a.y, a.z),
            Vec3::new(b.x, b.y, a.z),
            Vec3::new(a.x, b.y, a.z),
            Vec3::new(a.x, a.y, b.z),
            Vec3::new(b.x, a.y, b.z),
            Vec3::new(b.x, b.y, b.z),
            Vec3::new(a.x, b.y, b.z),
        ]
    }
}

/// A labeled object. `B` is [`Box2`] on maps and [`Box3`] in scene records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance<B> {
    pub id: String,
    pub label: String,
    pub bbox: B,
}

/// One labeled box on a layout map. Its index in the map is its identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapObject {
    pub label: String,
    pub bbox: Box2,
}

/// Metric-grounded BEV map: labeled axis-aligned boxes in meters. Duplicate
/// labels are allowed (several instances of one category).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayoutMap {
    pub objects: Vec<MapObject>,
}

impl LayoutMap {
    pub fn new(objects: Vec<MapObject>) -> Self {
        Self { objects }
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn push(&mut self, label: impl Into<String>, bbox: Box2) {
        self.objects.push(MapObject {
            label: label.into(),
            bbox,
        });
    }

    /// Bounds of all boxes, `None` for an empty map.
    pub fn bounds(&self) -> Option<Box2> {
        self.objects
            .iter()
            .map(|o| o.bbox)
            .reduce(|a, b| a.union(&b))
    }

    pub fn map_boxes(&self, f: impl Fn(&Box2) -> Box2) -> LayoutMap {
        LayoutMap {
            objects: self
                .objects
                .iter()
                .map(|o| MapObject {
                    label: o.label.clone(),
                    bbox: f(&o.bbox),
                })
                .collect(),
        }
    }
}

/// Observer pose on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserverFrame {
    position: Vec2,
    facing: Vec2,
}

impl ObserverFrame {
    pub fn new(position: Vec2, facing: Vec2) -> Result<Self, GeometryError> {
        if !position.is_finite() || !facing.is_finite() {
            return Err(GeometryError::NonFinite);
        }
        let n = facing.norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(GeometryError::NotUnit(n));
        }
        Ok(Self { position, facing })
    }

    /// Frame facing along `yaw_deg`, measured counterclockwise from `+x`.
    pub fn from_yaw(position: Vec2, yaw_deg: f64) -> Result<Self, GeometryError> {
        let (s, c) = yaw_deg.to_radians().sin_cos();
        Self::new(position, Vec2::new(c, s))
    }

    pub fn position(&self) -> Vec2 {
        self.position
    }

    pub fn facing(&self) -> Vec2 {
        self.facing
    }

    /// Expresses a world point in this observer's frame: facing becomes `+y`,
    /// the observer's right becomes `+x`.
    pub fn to_local(&self, p: Vec2) -> Vec2 {
        let d = p - self.position;
        let f = self.facing;
        Vec2::new(d.x * f.y - d.y * f.x, d.dot(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionClass {
    Front,
    Behind,
    Left,
    Right,
}

impl DirectionClass {
    pub const ALL: [DirectionClass; 4] = [
        DirectionClass::Front,
        DirectionClass::Behind,
        DirectionClass::Left,
        DirectionClass::Right,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DirectionClass::Front => "front",
            DirectionClass::Behind => "behind",
            DirectionClass::Left => "left",
            DirectionClass::Right => "right",
        }
    }
}

impl fmt::Display for DirectionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VerticalClass {
    Above,
    Below,
    SameLevel,
}

impl VerticalClass {
    pub const ALL: [VerticalClass; 3] = [
        VerticalClass::Above,
        VerticalClass::Below,
        VerticalClass::SameLevel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VerticalClass::Above => "above",
            VerticalClass::Below => "below",
            VerticalClass::SameLevel => "same level",
        }
    }
}

impl fmt::Display for VerticalClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn center(b: &Box2) -> Vec2 {
    Vec2::new((b.min.x + b.max.x) / 2.0, (b.min.y + b.max.y) / 2.0)
}

/// `(width, depth)`: extents along x and y.
pub fn dims(b: &Box2) -> (f64, f64) {
    (b.max.x - b.min.x, b.max.y - b.min.y)
}

pub fn center_distance(a: &Box2, b: &Box2) -> f64 {
    let d = center(a) - center(b);
    d.x.hypot(d.y)
}

/// Euclidean gap between two boxes; 0 when they overlap or touch.
pub fn min_box_distance(a: &Box2, b: &Box2) -> f64 {
    let gap_x = 0f64.max(a.min.x - b.max.x).max(b.min.x - a.max.x);
    let gap_y = 0f64.max(a.min.y - b.max.y).max(b.min.y - a.max.y);
    gap_x.hypot(gap_y)
}

/// Classifies `target` into one of four 90° sectors around the observer's
/// facing. Sector boundaries sit at ±45°; exact diagonals go to Front/Behind.
pub fn relative_direction(
    frame: &ObserverFrame,
    target: Vec2,
) -> Result<DirectionClass, GeometryError> {
    let d = target - frame.position;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(GeometryError::DegenerateDirection);
    }
    let fwd = d.dot(frame.facing);
    let lat = frame.facing.cross(d);
    Ok(if fwd.abs() >= lat.abs() {
        if fwd > 0.0 {
            DirectionClass::Front
        } else {
            DirectionClass::Behind
        }
    } else if lat > 0.0 {
        DirectionClass::Left
    } else {
        DirectionClass::Right
    })
}

/// Angle of `to − from` counterclockwise from `+x`, in degrees within `[0, 360)`.
pub fn bearing(from: Vec2, to: Vec2) -> Result<f64, GeometryError> {
    let d = to - from;
    if d.x == 0.0 && d.y == 0.0 {
        return Err(GeometryError::DegenerateBearing);
    }
    let deg = d.y.atan2(d.x).to_degrees();
    let deg = if deg < 0.0 { deg + 360.0 } else { deg };
    // -tiny + 360 rounds to 360
    Ok(if deg >= 360.0 { 0.0 } else { deg })
}

pub fn vertical_relation(a: &Box3, b: &Box3) -> VerticalClass {
    if a.min.z >= b.max.z && a.max.z <= b.min.z {
        // both hold only for two flat boxes at the same height
        VerticalClass::SameLevel
    } else if a.min.z >= b.max.z {
        VerticalClass::Above
    } else if a.max.z <= b.min.z {
        VerticalClass::Below
    } else {
        VerticalClass::SameLevel
    }
}

/// Ground-plane shadow of a 3D box.
pub fn bev_project(b: &Box3) -> Box2 {
    Box2 {
        min: b.min.xy(),
        max: b.max.xy(),
    }
}
