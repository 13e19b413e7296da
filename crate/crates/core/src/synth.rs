//! Synthetic scenes with analytic ground truth.
//!
//! A scene is a set of surface primitives. The dense ground-truth cloud is
//! sampled uniformly over their area; the sparse estimated map is a random
//! subset with bounded Gaussian noise plus uniform outliers kept at least
//! `outlier_scale` away from every surface, expressed in a frame scaled by
//! `1 / true_scale`. Camera trajectories follow a wavy path through the
//! scene so that every axis has translation spread.

use std::f64::consts::{PI, TAU};
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::align::ScaleFactor;
use crate::error::{Error, Result};
use crate::geometry::{bounding_box, EulerAngles, Point3, PointCloud, Pose, Trajectory};
use crate::io::{self, CloudFormat, Label};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Primitive {
    /// Rectangle `origin + a * edge_u + b * edge_v`, `a, b in [0, 1]`;
    /// the edges must be orthogonal.
    Rect {
        origin: Point3,
        edge_u: Point3,
        edge_v: Point3,
    },
    /// Surface of an axis-aligned box.
    Box {
        min: Point3,
        max: Point3,
    },
    Sphere {
        center: Point3,
        radius: f64,
    },
}

impl Primitive {
    pub fn area(&self) -> f64 {
        match self {
            Primitive::Rect { edge_u, edge_v, .. } => edge_u.cross(edge_v).norm(),
            Primitive::Box { min, max } => {
                let e = *max - *min;
                2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
            }
            Primitive::Sphere { radius, .. } => 2.0 * TAU * radius * radius,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Primitive::Rect {
                origin,
                edge_u,
                edge_v,
            } => {
                origin.is_finite()
                    && edge_u.norm() > 0.0
                    && edge_v.norm() > 0.0
                    && edge_u.dot(edge_v).abs() <= 1e-9 * edge_u.norm() * edge_v.norm()
            }
            Primitive::Box { min, max } => (0..3).all(|a| max[a] > min[a]),
            Primitive::Sphere { center, radius } => center.is_finite() && *radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("malformed primitive {self:?}")))
        }
    }

    /// Box faces as rectangles.
    fn faces(min: &Point3, max: &Point3) -> [Primitive; 6] {
        let e = *max - *min;
        let ex = Point3::new(e.x, 0.0, 0.0);
        let ey = Point3::new(0.0, e.y, 0.0);
        let ez = Point3::new(0.0, 0.0, e.z);
        let rect = |origin, edge_u, edge_v| Primitive::Rect {
            origin,
            edge_u,
            edge_v,
        };
        [
            rect(*min, ey, ez),
            rect(*min + ex, ey, ez),
            rect(*min, ex, ez),
            rect(*min + ey, ex, ez),
            rect(*min, ex, ey),
            rect(*min + ez, ex, ey),
        ]
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Point3 {
        match self {
            Primitive::Rect {
                origin,
                edge_u,
                edge_v,
            } => *origin + *edge_u * rng.random::<f64>() + *edge_v * rng.random::<f64>(),
            Primitive::Box { min, max } => {
                let faces = Self::faces(min, max);
                let total = self.area();
                let mut pick = rng.random::<f64>() * total;
                for f in &faces {
                    let a = f.area();
                    if pick < a {
                        return f.sample(rng);
                    }
                    pick -= a;
                }
                faces[5].sample(rng)
            }
            Primitive::Sphere { center, radius } => loop {
                let d = Point3::new(
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                    rng.sample(StandardNormal),
                );
                if let Some(u) = d.normalized() {
                    break *center + u * *radius;
                }
            },
        }
    }

    /// Exact Euclidean distance from `p` to the surface.
    pub fn distance(&self, p: &Point3) -> f64 {
        match self {
            Primitive::Rect {
                origin,
                edge_u,
                edge_v,
            } => {
                let lu = edge_u.norm();
                let lv = edge_v.norm();
                let u = *edge_u / lu;
                let v = *edge_v / lv;
                let d = *p - *origin;
                let a = d.dot(&u);
                let b = d.dot(&v);
                let w = d.dot(&u.cross(&v));
                let da = a - a.clamp(0.0, lu);
                let db = b - b.clamp(0.0, lv);
                (da * da + db * db + w * w).sqrt()
            }
            Primitive::Box { min, max } => {
                let inside = (0..3).all(|a| p[a] >= min[a] && p[a] <= max[a]);
                if inside {
                    (0..3)
                        .map(|a| (p[a] - min[a]).min(max[a] - p[a]))
                        .fold(f64::INFINITY, f64::min)
                } else {
                    let c = Point3::new(
                        p.x.clamp(min.x, max.x),
                        p.y.clamp(min.y, max.y),
                        p.z.clamp(min.z, max.z),
                    );
                    p.distance(&c)
                }
            }
            Primitive::Sphere { center, radius } => (p.distance(center) - radius).abs(),
        }
    }
}

/// Distance from `p` to the nearest primitive surface.
pub fn surface_distance(primitives: &[Primitive], p: &Point3) -> f64 {
    primitives
        .iter()
        .map(|s| s.distance(p))
        .fold(f64::INFINITY, f64::min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub primitives: Vec<Primitive>,
    /// Ground-truth points per unit area.
    pub gt_density: f64,
    /// Size of the estimated map relative to the ground-truth cloud.
    pub sparse_fraction: f64,
    /// Per-axis standard deviation of the inlier noise (truncated at 4 sigma in norm).
    pub noise_sigma: f64,
    /// Fraction of the estimated map that is injected outliers.
    pub outlier_fraction: f64,
    /// Minimum distance between an outlier and any surface.
    pub outlier_scale: f64,
    /// Ground truth = `true_scale * estimated`, per axis.
    pub true_scale: ScaleFactor,
    pub trajectory_poses: usize,
    /// Per-axis noise on estimated camera translations, ground-truth units.
    pub trajectory_noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    /// A 10 m x 2 m x 2.5 m corridor (floor, ceiling, two walls) with a
    /// crate and a ball, yielding an estimated map of about 9 000 points.
    fn default() -> Self {
        let rect = |origin: [f64; 3], edge_u: [f64; 3], edge_v: [f64; 3]| Primitive::Rect {
            origin: origin.into(),
            edge_u: edge_u.into(),
            edge_v: edge_v.into(),
        };
        SceneSpec {
            primitives: vec![
                rect([0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
                rect([0.0, 0.0, 2.5], [10.0, 0.0, 0.0], [0.0, 2.0, 0.0]),
                rect([0.0, 0.0, 0.0], [10.0, 0.0, 0.0], [0.0, 0.0, 2.5]),
                rect([0.0, 2.0, 0.0], [10.0, 0.0, 0.0], [0.0, 0.0, 2.5]),
                Primitive::Box {
                    min: Point3::new(2.0, 0.0, 0.0),
                    max: Point3::new(3.0, 0.8, 1.0),
                },
                Primitive::Sphere {
                    center: Point3::new(6.0, 1.0, 1.4),
                    radius: 0.5,
                },
            ],
            gt_density: 1000.0,
            sparse_fraction: 0.0915,
            noise_sigma: 0.03,
            outlier_fraction: 0.05,
            outlier_scale: 0.5,
            true_scale: ScaleFactor {
                x: 2.0,
                y: 2.0,
                z: 2.0,
            },
            trajectory_poses: 120,
            trajectory_noise: 0.0,
            seed: 2018,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.primitives.is_empty() {
            return bad("scene has no primitives");
        }
        for p in &self.primitives {
            p.validate()?;
        }
        if !(self.gt_density > 0.0 && self.gt_density.is_finite()) {
            return bad("gt_density must be > 0");
        }
        for (name, f) in [
            ("sparse_fraction", self.sparse_fraction),
            ("outlier_fraction", self.outlier_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::InvalidSpec(format!("{name} = {f} outside [0, 1]")));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be >= 0");
        }
        if !(self.trajectory_noise >= 0.0 && self.trajectory_noise.is_finite()) {
            return bad("trajectory_noise must be >= 0");
        }
        if self.outlier_fraction > 0.0
            && !(self.outlier_scale > 0.0 && self.outlier_scale.is_finite())
        {
            return bad("outlier_scale must be > 0 when outliers are requested");
        }
        ScaleFactor::new(self.true_scale.x, self.true_scale.y, self.true_scale.z)
            .map_err(|e| Error::InvalidSpec(e.to_string()))?;
        if self.trajectory_poses < 2 {
            return bad("trajectory_poses must be >= 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub ground_truth: PointCloud,
    pub estimated: PointCloud,
    pub gt_traj: Trajectory,
    pub est_traj: Trajectory,
    /// One tag per estimated point.
    pub labels: Vec<Label>,
}

impl Scene {
    pub fn outlier_count(&self) -> usize {
        self.labels.iter().filter(|l| **l == Label::Outlier).count()
    }

    /// Writes `ground_truth.ply`, `estimated.ply`, `gt_traj.txt`,
    /// `est_traj.txt` and `labels.txt` into `dir`.
    pub fn write_bundle(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        io::write_cloud(
            &self.ground_truth,
            &dir.join(BUNDLE_GROUND_TRUTH),
            CloudFormat::Ply,
        )?;
        io::write_cloud(
            &self.estimated,
            &dir.join(BUNDLE_ESTIMATED),
            CloudFormat::Ply,
        )?;
        io::write_trajectory(&self.gt_traj, &dir.join(BUNDLE_GT_TRAJ))?;
        io::write_trajectory(&self.est_traj, &dir.join(BUNDLE_EST_TRAJ))?;
        io::write_labels(&self.labels, &dir.join(BUNDLE_LABELS))?;
        Ok(())
    }

    pub fn read_bundle(dir: &Path) -> Result<Scene> {
        Ok(Scene {
            ground_truth: io::read_cloud(&dir.join(BUNDLE_GROUND_TRUTH))?,
            estimated: io::read_cloud(&dir.join(BUNDLE_ESTIMATED))?,
            gt_traj: io::read_trajectory(&dir.join(BUNDLE_GT_TRAJ))?,
            est_traj: io::read_trajectory(&dir.join(BUNDLE_EST_TRAJ))?,
            labels: io::read_labels(&dir.join(BUNDLE_LABELS))?,
        })
    }
}

pub const BUNDLE_GROUND_TRUTH: &str = "ground_truth.ply";
pub const BUNDLE_ESTIMATED: &str = "estimated.ply";
pub const BUNDLE_GT_TRAJ: &str = "gt_traj.txt";
pub const BUNDLE_EST_TRAJ: &str = "est_traj.txt";
pub const BUNDLE_LABELS: &str = "labels.txt";

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const STREAM_SUBSAMPLE: u64 = 1 << 32;
const STREAM_NOISE: u64 = STREAM_SUBSAMPLE + 1;
const STREAM_OUTLIERS: u64 = STREAM_SUBSAMPLE + 2;
const STREAM_SHUFFLE: u64 = STREAM_SUBSAMPLE + 3;
const STREAM_TRAJ: u64 = STREAM_SUBSAMPLE + 4;

fn bounded_noise(rng: &mut ChaCha8Rng, normal: &Normal<f64>, sigma: f64) -> Point3 {
    if sigma == 0.0 {
        return Point3::ORIGIN;
    }
    loop {
        let n = Point3::new(normal.sample(rng), normal.sample(rng), normal.sample(rng));
        if n.norm() <= 4.0 * sigma {
            return n;
        }
    }
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;

    let mut gt = Vec::new();
    for (k, prim) in spec.primitives.iter().enumerate() {
        let n = (prim.area() * spec.gt_density).round() as usize;
        let mut rng = stream(spec.seed, k as u64);
        gt.extend((0..n).map(|_| prim.sample(&mut rng)));
    }
    if gt.is_empty() {
        return Err(Error::InvalidSpec("ground truth would be empty".into()));
    }
    let ground_truth = PointCloud::new(gt)?;

    let total = (spec.sparse_fraction * ground_truth.len() as f64).floor() as usize;
    let n_out = (spec.outlier_fraction * total as f64).floor() as usize;
    let n_in = total - n_out;

    let mut picked = index::sample(
        &mut stream(spec.seed, STREAM_SUBSAMPLE),
        ground_truth.len(),
        n_in,
    )
    .into_vec();
    picked.sort_unstable();
    let normal = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut noise_rng = stream(spec.seed, STREAM_NOISE);
    let mut tagged: Vec<(Point3, Label)> = picked
        .iter()
        .map(|&i| {
            let p =
                ground_truth.points()[i] + bounded_noise(&mut noise_rng, &normal, spec.noise_sigma);
            (p, Label::Inlier)
        })
        .collect();

    if n_out > 0 {
        let bb = bounding_box(&ground_truth)?.inflated(spec.outlier_scale);
        let mut rng = stream(spec.seed, STREAM_OUTLIERS);
        let mut attempts = 0usize;
        let mut placed = 0;
        while placed < n_out {
            attempts += 1;
            if attempts > 10_000 * n_out + 10_000 {
                return Err(Error::InvalidSpec(format!(
                    "could not place {n_out} outliers at distance >= {} from every surface",
                    spec.outlier_scale
                )));
            }
            let p = Point3::new(
                rng.random_range(bb.min.x..=bb.max.x),
                rng.random_range(bb.min.y..=bb.max.y),
                rng.random_range(bb.min.z..=bb.max.z),
            );
            if surface_distance(&spec.primitives, &p) >= spec.outlier_scale {
                tagged.push((p, Label::Outlier));
                placed += 1;
            }
        }
    }
    tagged.shuffle(&mut stream(spec.seed, STREAM_SHUFFLE));

    let inv = spec.true_scale.inverse().as_point();
    let estimated = PointCloud::new(tagged.iter().map(|(p, _)| p.hadamard(&inv)).collect())?;
    let labels = tagged.into_iter().map(|(_, l)| l).collect();

    let (gt_traj, est_traj) = trajectories(spec, &bounding_box(&ground_truth)?)?;
    Ok(Scene {
        ground_truth,
        estimated,
        gt_traj,
        est_traj,
        labels,
    })
}

fn trajectories(spec: &SceneSpec, bb: &crate::geometry::Aabb) -> Result<(Trajectory, Trajectory)> {
    let n = spec.trajectory_poses;
    let ext = bb.extent();
    let c = bb.center();
    let path = |s: f64| {
        Point3::new(
            bb.min.x + ext.x * (0.1 + 0.8 * s),
            c.y + 0.2 * ext.y * (TAU * 1.5 * s).sin(),
            c.z + 0.15 * ext.z * (TAU * s + 0.7).sin(),
        )
    };
    let inv = spec.true_scale.inverse().as_point();
    let normal = Normal::new(0.0, spec.trajectory_noise.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let mut rng = stream(spec.seed, STREAM_TRAJ);
    let mut gt = Vec::with_capacity(n);
    let mut est = Vec::with_capacity(n);
    for i in 0..n {
        let s = i as f64 / (n - 1) as f64;
        let p = path(s);
        let ahead = path((s + 1e-3).min(1.0)) - path((s - 1e-3).max(0.0));
        let yaw = ahead.y.atan2(ahead.x);
        let pitch = -(ahead.z.atan2(ahead.x.hypot(ahead.y))).clamp(-PI / 2.0, PI / 2.0);
        let e = EulerAngles {
            pitch,
            roll: 0.0,
            yaw,
        };
        gt.push(Pose::from_euler(i as i64, p, e)?);
        let noisy = if spec.trajectory_noise > 0.0 {
            p + Point3::new(
                normal.sample(&mut rng),
                normal.sample(&mut rng),
                normal.sample(&mut rng),
            )
        } else {
            p
        };
        est.push(Pose::from_euler(i as i64, noisy.hadamard(&inv), e)?);
    }
    Ok((Trajectory::new(gt)?, Trajectory::new(est)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SceneSpec {
        SceneSpec {
            primitives: vec![
                Primitive::Box {
                    min: Point3::ORIGIN,
                    max: Point3::new(3.0, 2.0, 2.0),
                },
                Primitive::Sphere {
                    center: Point3::new(1.5, 1.0, 1.0),
                    radius: 0.4,
                },
                Primitive::Rect {
                    origin: Point3::new(0.5, 0.5, 0.3),
                    edge_u: Point3::new(1.0, 0.0, 0.0),
                    edge_v: Point3::new(0.0, 0.5, 0.5),
                },
            ],
            gt_density: 400.0,
            sparse_fraction: 0.2,
            ..SceneSpec::default()
        }
    }

    #[test]
    fn clean_scene_is_subset_of_ground_truth() {
        let spec = SceneSpec {
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            true_scale: ScaleFactor::IDENTITY,
            ..small_spec()
        };
        let s = generate_scene(&spec).unwrap();
        assert!(!s.estimated.is_empty());
        let gt: std::collections::HashSet<[u64; 3]> = s
            .ground_truth
            .iter()
            .map(|p| p.to_array().map(f64::to_bits))
            .collect();
        assert!(s
            .estimated
            .iter()
            .all(|p| gt.contains(&p.to_array().map(f64::to_bits))));
        assert_eq!(s.outlier_count(), 0);
    }

    #[test]
    fn exact_outlier_count() {
        // 10 000 estimated points at 5% -> exactly 500 outliers
        let spec = SceneSpec {
            primitives: vec![Primitive::Rect {
                origin: Point3::ORIGIN,
                edge_u: Point3::new(10.0, 0.0, 0.0),
                edge_v: Point3::new(0.0, 10.0, 0.0),
            }],
            gt_density: 200.0,
            sparse_fraction: 0.5,
            outlier_fraction: 0.05,
            outlier_scale: 0.5,
            ..SceneSpec::default()
        };
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.ground_truth.len(), 20_000);
        assert_eq!(s.estimated.len(), 10_000);
        assert_eq!(s.outlier_count(), 500);
        assert_eq!(s.labels.len(), s.estimated.len());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_scene(&small_spec()).unwrap();
        let b = generate_scene(&small_spec()).unwrap();
        assert_eq!(a, b);
        let c = generate_scene(&SceneSpec {
            seed: 99,
            ..small_spec()
        })
        .unwrap();
        assert_ne!(a.estimated, c.estimated);
    }

    #[test]
    fn inliers_near_surface_and_outliers_far() {
        let spec = small_spec();
        let s = generate_scene(&spec).unwrap();
        let scale = spec.true_scale.as_point();
        for (p, l) in s.estimated.iter().zip(&s.labels) {
            let d = surface_distance(&spec.primitives, &p.hadamard(&scale));
            match l {
                Label::Inlier => assert!(d <= 4.0 * spec.noise_sigma + 1e-12, "inlier at {d}"),
                Label::Outlier => assert!(d >= spec.outlier_scale, "outlier at {d}"),
            }
        }
    }

    #[test]
    fn ground_truth_lies_on_primitives() {
        let spec = small_spec();
        let s = generate_scene(&spec).unwrap();
        assert!(s
            .ground_truth
            .iter()
            .all(|p| surface_distance(&spec.primitives, p) < 1e-9));
    }

    #[test]
    fn trajectories_scale_consistently() {
        let spec = small_spec();
        let s = generate_scene(&spec).unwrap();
        assert_eq!(s.gt_traj.len(), spec.trajectory_poses);
        let got = crate::align::estimate_scale(&s.est_traj, &s.gt_traj).unwrap();
        for (a, b) in got.as_array().iter().zip(spec.true_scale.as_array()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn default_scene_size() {
        let s = generate_scene(&SceneSpec::default()).unwrap();
        let n = s.estimated.len();
        assert!((8_500..=9_500).contains(&n), "{n}");
        assert_eq!(s.outlier_count(), n / 20);
    }

    #[test]
    fn primitive_distances() {
        let r = Primitive::Rect {
            origin: Point3::ORIGIN,
            edge_u: Point3::new(1.0, 0.0, 0.0),
            edge_v: Point3::new(0.0, 1.0, 0.0),
        };
        assert!((r.distance(&Point3::new(0.5, 0.5, 0.3)) - 0.3).abs() < 1e-15);
        assert!((r.distance(&Point3::new(2.0, 0.5, 0.0)) - 1.0).abs() < 1e-15);
        let b = Primitive::Box {
            min: Point3::ORIGIN,
            max: Point3::splat(2.0),
        };
        assert!((b.distance(&Point3::splat(1.0)) - 1.0).abs() < 1e-15);
        assert!((b.distance(&Point3::new(3.0, 1.0, 1.0)) - 1.0).abs() < 1e-15);
        let s = Primitive::Sphere {
            center: Point3::ORIGIN,
            radius: 1.0,
        };
        assert!((s.distance(&Point3::new(0.0, 0.0, 0.25)) - 0.75).abs() < 1e-15);
        assert!((b.area() - 24.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs() {
        for spec in [
            SceneSpec {
                primitives: vec![],
                ..SceneSpec::default()
            },
            SceneSpec {
                sparse_fraction: 1.5,
                ..SceneSpec::default()
            },
            SceneSpec {
                gt_density: 0.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                noise_sigma: -1.0,
                ..SceneSpec::default()
            },
            SceneSpec {
                trajectory_poses: 1,
                ..SceneSpec::default()
            },
            SceneSpec {
                primitives: vec![Primitive::Rect {
                    origin: Point3::ORIGIN,
                    edge_u: Point3::new(1.0, 0.0, 0.0),
                    edge_v: Point3::new(1.0, 1.0, 0.0),
                }],
                ..SceneSpec::default()
            },
        ] {
            assert!(matches!(generate_scene(&spec), Err(Error::InvalidSpec(_))));
        }
    }

    #[test]
    fn spec_round_trips_through_toml() {
        let spec = small_spec();
        let text = toml::to_string(&spec).unwrap();
        let back: SceneSpec = toml::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
