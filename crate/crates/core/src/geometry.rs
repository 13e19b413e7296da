//! Value types shared by every stage: points, clouds, poses, trajectories
//! and axis-aligned boxes. Coordinates are meters in `f64`.

use std::f64::consts::PI;
use std::ops::{Add, AddAssign, Div, Index, Mul, Neg, Sub};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3 {
    pub const ORIGIN: Point3 = Point3 {
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn splat(v: f64) -> Self {
        Self::new(v, v, v)
    }

    #[inline]
    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn dot(&self, o: &Point3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(&self, o: &Point3) -> Point3 {
        Point3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    /// Squared Euclidean distance; the comparison key for every neighbor query.
    #[inline]
    pub fn distance_squared(&self, o: &Point3) -> f64 {
        let dx = self.x - o.x;
        let dy = self.y - o.y;
        let dz = self.z - o.z;
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn distance(&self, o: &Point3) -> f64 {
        self.distance_squared(o).sqrt()
    }

    /// Component-wise product.
    #[inline]
    pub fn hadamard(&self, o: &Point3) -> Point3 {
        Point3::new(self.x * o.x, self.y * o.y, self.z * o.z)
    }

    pub fn normalized(&self) -> Option<Point3> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(*self / n)
        } else {
            None
        }
    }

    #[inline]
    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    #[inline]
    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    #[inline]
    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    #[inline]
    pub fn component_min(&self, o: &Point3) -> Point3 {
        Point3::new(self.x.min(o.x), self.y.min(o.y), self.z.min(o.z))
    }

    #[inline]
    pub fn component_max(&self, o: &Point3) -> Point3 {
        Point3::new(self.x.max(o.x), self.y.max(o.y), self.z.max(o.z))
    }
}

impl From<[f64; 3]> for Point3 {
    fn from(a: [f64; 3]) -> Self {
        Point3::new(a[0], a[1], a[2])
    }
}

impl From<Point3> for [f64; 3] {
    fn from(p: Point3) -> Self {
        p.to_array()
    }
}

impl Index<usize> for Point3 {
    type Output = f64;

    #[inline]
    fn index(&self, axis: usize) -> &f64 {
        match axis {
            0 => &self.x,
            1 => &self.y,
            2 => &self.z,
            _ => panic!("axis {axis} out of range"),
        }
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, o: Point3) -> Point3 {
        Point3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, o: Point3) {
        self.x += o.x;
        self.y += o.y;
        self.z += o.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, o: Point3) -> Point3 {
        Point3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, s: f64) -> Point3 {
        Point3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn div(self, s: f64) -> Point3 {
        Point3::new(self.x / s, self.y / s, self.z / s)
    }
}

/// An ordered, immutable set of finite points.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point3>", into = "Vec<Point3>")]
pub struct PointCloud {
    points: Vec<Point3>,
}

impl PointCloud {
    /// Builds a cloud, rejecting any non-finite coordinate.
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Self { points })
    }

    pub fn empty() -> Self {
        Self { points: Vec::new() }
    }

    #[inline]
    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> Option<&Point3> {
        self.points.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point3> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point3> {
        self.points
    }

    /// Sub-cloud with the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> PointCloud {
        PointCloud {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Translated copy.
    pub fn translated(&self, v: Point3) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|&p| p + v).collect(),
        }
    }

    pub(crate) fn from_finite(points: Vec<Point3>) -> Self {
        debug_assert!(points.iter().all(Point3::is_finite));
        Self { points }
    }
}

impl TryFrom<Vec<Point3>> for PointCloud {
    type Error = Error;
    fn try_from(points: Vec<Point3>) -> Result<Self> {
        PointCloud::new(points)
    }
}

impl From<PointCloud> for Vec<Point3> {
    fn from(c: PointCloud) -> Self {
        c.points
    }
}

impl<'a> IntoIterator for &'a PointCloud {
    type Item = &'a Point3;
    type IntoIter = std::slice::Iter<'a, Point3>;
    fn into_iter(self) -> Self::IntoIter {
        self.points.iter()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn extent(&self) -> Point3 {
        self.max - self.min
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn center(&self) -> Point3 {
        (self.min + self.max) * 0.5
    }

    pub fn contains(&self, p: &Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        Aabb {
            min: self.min - Point3::splat(margin),
            max: self.max + Point3::splat(margin),
        }
    }
}

/// Tightest axis-aligned box around the cloud.
pub fn bounding_box(cloud: &PointCloud) -> Result<Aabb> {
    let (first, rest) = cloud.points().split_first().ok_or(Error::EmptyCloud)?;
    let (min, max) = rest.iter().fold((*first, *first), |(lo, hi), p| {
        (lo.component_min(p), hi.component_max(p))
    });
    Ok(Aabb { min, max })
}

/// Arithmetic mean of the points.
pub fn centroid(cloud: &PointCloud) -> Result<Point3> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    let mut sum = Point3::ORIGIN;
    for p in cloud {
        sum += *p;
    }
    Ok(sum / cloud.len() as f64)
}

/// Orientation angles in radians, Z-Y-X (yaw, then pitch, then roll) order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub pitch: f64,
    pub roll: f64,
    pub yaw: f64,
}

/// Unit quaternion stored as `(x, y, z, w)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quaternion {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub w: f64,
}

impl Quaternion {
    pub const IDENTITY: Quaternion = Quaternion {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        w: 1.0,
    };

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z + self.w * self.w).sqrt()
    }

    pub fn from_euler(e: EulerAngles) -> Quaternion {
        let (sr, cr) = (e.roll * 0.5).sin_cos();
        let (sp, cp) = (e.pitch * 0.5).sin_cos();
        let (sy, cy) = (e.yaw * 0.5).sin_cos();
        Quaternion {
            w: cr * cp * cy + sr * sp * sy,
            x: sr * cp * cy - cr * sp * sy,
            y: cr * sp * cy + sr * cp * sy,
            z: cr * cp * sy - sr * sp * cy,
        }
    }

    pub fn to_euler(&self) -> EulerAngles {
        let Quaternion { x, y, z, w } = *self;
        let roll = (2.0 * (w * x + y * z)).atan2(1.0 - 2.0 * (x * x + y * y));
        let pitch = (2.0 * (w * y - z * x)).clamp(-1.0, 1.0).asin();
        let yaw = (2.0 * (w * z + x * y)).atan2(1.0 - 2.0 * (y * y + z * z));
        EulerAngles {
            pitch: wrap_angle(pitch),
            roll: wrap_angle(roll),
            yaw: wrap_angle(yaw),
        }
    }
}

/// Maps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a % (2.0 * PI);
    if r <= -PI {
        r += 2.0 * PI;
    } else if r > PI {
        r -= 2.0 * PI;
    }
    r
}

/// Quaternions within this distance of unit norm are accepted untouched.
pub const UNIT_QUATERNION_TOLERANCE: f64 = 1e-9;

/// A 6-DOF camera pose at integer time step `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    t: i64,
    translation: Point3,
    orientation: EulerAngles,
    quaternion: Quaternion,
}

impl Pose {
    /// Builds a pose from a quaternion, normalizing it when it is off unit
    /// norm by more than [`UNIT_QUATERNION_TOLERANCE`].
    pub fn from_quaternion(t: i64, translation: Point3, q: Quaternion) -> Result<Pose> {
        if !translation.is_finite() {
            return Err(Error::InvalidParams(format!(
                "pose {t}: non-finite translation"
            )));
        }
        let n = q.norm();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParams(format!(
                "pose {t}: quaternion has zero or non-finite norm"
            )));
        }
        let quaternion = if (n - 1.0).abs() > UNIT_QUATERNION_TOLERANCE {
            Quaternion {
                x: q.x / n,
                y: q.y / n,
                z: q.z / n,
                w: q.w / n,
            }
        } else {
            q
        };
        Ok(Pose {
            t,
            translation,
            orientation: quaternion.to_euler(),
            quaternion,
        })
    }

    pub fn from_euler(t: i64, translation: Point3, e: EulerAngles) -> Result<Pose> {
        Pose::from_quaternion(t, translation, Quaternion::from_euler(e))
    }

    /// Pose with identity orientation.
    pub fn at(t: i64, translation: Point3) -> Result<Pose> {
        Pose::from_quaternion(t, translation, Quaternion::IDENTITY)
    }

    pub fn t(&self) -> i64 {
        self.t
    }

    pub fn translation(&self) -> Point3 {
        self.translation
    }

    pub fn orientation(&self) -> EulerAngles {
        self.orientation
    }

    pub fn quaternion(&self) -> Quaternion {
        self.quaternion
    }

    /// Same orientation and time, different translation.
    pub fn with_translation(&self, translation: Point3) -> Pose {
        Pose {
            translation,
            ..*self
        }
    }
}

/// Poses ordered by strictly increasing time index.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(poses: Vec<Pose>) -> Result<Trajectory> {
        if let Some(w) = poses.windows(2).find(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidParams(format!(
                "trajectory time indices must strictly increase ({} then {})",
                w[0].t, w[1].t
            )));
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    /// Pose with time index `t`, if present.
    pub fn at(&self, t: i64) -> Option<&Pose> {
        self.poses
            .binary_search_by_key(&t, |p| p.t)
            .ok()
            .map(|i| &self.poses[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        PointCloud::new(pts.iter().map(|&a| a.into()).collect()).unwrap()
    }

    #[test]
    fn bbox_single_point() {
        let b = bounding_box(&cloud(&[[0.0, 0.0, 0.0]])).unwrap();
        assert_eq!(b.min, Point3::ORIGIN);
        assert_eq!(b.max, Point3::ORIGIN);
    }

    #[test]
    fn bbox_two_points() {
        let b = bounding_box(&cloud(&[[1.0, 2.0, 3.0], [-1.0, 0.0, 5.0]])).unwrap();
        assert_eq!(b.min, Point3::new(-1.0, 0.0, 3.0));
        assert_eq!(b.max, Point3::new(1.0, 2.0, 5.0));
    }

    #[test]
    fn bbox_random_contains_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<Point3> = (0..1000)
            .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
            .collect();
        let c = PointCloud::new(pts).unwrap();
        let b = bounding_box(&c).unwrap();
        assert!(c.iter().all(|p| b.contains(p)));
        for a in 0..3 {
            assert!(b.min[a] >= 0.0 && b.max[a] <= 1.0);
            // tight: some point touches each face
            assert!(c.iter().any(|p| p[a] == b.min[a]));
            assert!(c.iter().any(|p| p[a] == b.max[a]));
        }
    }

    #[test]
    fn empty_cloud_errors() {
        assert!(matches!(
            bounding_box(&PointCloud::empty()),
            Err(Error::EmptyCloud)
        ));
        assert!(matches!(
            centroid(&PointCloud::empty()),
            Err(Error::EmptyCloud)
        ));
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(
            centroid(&cloud(&[[0.0, 0.0, 0.0], [2.0, 2.0, 2.0]])).unwrap(),
            Point3::splat(1.0)
        );
        let c = centroid(&cloud(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])).unwrap();
        for a in 0..3 {
            assert!((c[a] - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn centroid_matches_naive_accumulation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<[f64; 3]> = (0..500)
            .map(|_| {
                [
                    rng.random_range(-5.0..5.0),
                    rng.random(),
                    rng.random_range(0.0..100.0),
                ]
            })
            .collect();
        let c = centroid(&cloud(&pts)).unwrap();
        for a in 0..3 {
            let mut s = 0.0;
            for p in &pts {
                s += p[a];
            }
            assert!((c[a] - s / 500.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_finite() {
        let r = PointCloud::new(vec![Point3::ORIGIN, Point3::new(f64::NAN, 0.0, 0.0)]);
        assert!(matches!(r, Err(Error::NonFinite { index: 1 })));
    }

    #[test]
    fn euler_quaternion_round_trip() {
        let e = EulerAngles {
            pitch: 0.3,
            roll: -1.2,
            yaw: 2.9,
        };
        let q = Quaternion::from_euler(e);
        assert!((q.norm() - 1.0).abs() < 1e-12);
        let back = q.to_euler();
        assert!((back.pitch - e.pitch).abs() < 1e-12);
        assert!((back.roll - e.roll).abs() < 1e-12);
        assert!((back.yaw - e.yaw).abs() < 1e-12);
    }

    #[test]
    fn yaw_only_quaternion() {
        let q = Quaternion::from_euler(EulerAngles {
            pitch: 0.0,
            roll: 0.0,
            yaw: PI / 2.0,
        });
        assert!((q.z - (PI / 4.0).sin()).abs() < 1e-15);
        assert!((q.w - (PI / 4.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn wrap_angle_half_open() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn pose_normalizes_quaternion() {
        let p = Pose::from_quaternion(
            0,
            Point3::ORIGIN,
            Quaternion {
                x: 0.0,
                y: 0.0,
                z: 0.0,
                w: 2.0,
            },
        )
        .unwrap();
        assert_eq!(p.quaternion(), Quaternion::IDENTITY);
    }

    #[test]
    fn trajectory_requires_increasing_time() {
        let a = Pose::at(1, Point3::ORIGIN).unwrap();
        let b = Pose::at(1, Point3::splat(1.0)).unwrap();
        assert!(Trajectory::new(vec![a, b]).is_err());
        let c = Pose::at(2, Point3::splat(1.0)).unwrap();
        let t = Trajectory::new(vec![a, c]).unwrap();
        assert_eq!(t.at(2).unwrap().translation(), Point3::splat(1.0));
        assert!(t.at(3).is_none());
    }

    proptest::proptest! {
        #[test]
        fn centroid_translation_equivariant(
            pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..200),
            v in (-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3),
        ) {
            let c = PointCloud::new(pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect()).unwrap();
            let v = Point3::new(v.0, v.1, v.2);
            let a = centroid(&c).unwrap() + v;
            let b = centroid(&c.translated(v)).unwrap();
            // relative to coordinate magnitude (1e3 here)
            proptest::prop_assert!((a - b).norm() < 1e-12 * 4e3);
        }

        #[test]
        fn bbox_permutation_invariant(
            pts in proptest::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..200),
            seed in 0u64..1000,
        ) {
            use rand::seq::SliceRandom;
            let mut v: Vec<Point3> = pts.iter().map(|&(x, y, z)| Point3::new(x, y, z)).collect();
            let a = bounding_box(&PointCloud::new(v.clone()).unwrap()).unwrap();
            v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let b = bounding_box(&PointCloud::new(v).unwrap()).unwrap();
            proptest::prop_assert_eq!(a, b);
        }
    }
}
