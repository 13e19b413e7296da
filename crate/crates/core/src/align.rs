//! Correspondence search, per-axis map scaling and the map error metric.
//!
//! Correspondences are nearest neighbors in map space under a distance gate.
//! Scale is recovered per axis from camera translations after anchoring both
//! trajectories at their first shared pose. No rotation is estimated; the
//! two frames are assumed to share orientation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, Point3, PointCloud, Trajectory};
use crate::par;
use crate::spatial::{median_spacing, KdTree};

/// One matched pair. `deviation = ground_truth - estimated`, per coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub estimated: usize,
    pub ground_truth: usize,
    pub distance: f64,
    pub deviation: Point3,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorrespondenceSet {
    /// Ascending by estimated index; each estimated index at most once.
    pub pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Nearest ground-truth point of every estimated point within `max_dist`.
pub fn find_correspondences(
    estimated: &PointCloud,
    ground_truth: &PointCloud,
    max_dist: f64,
) -> Result<CorrespondenceSet> {
    if estimated.is_empty() || ground_truth.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(max_dist > 0.0) {
        return Err(Error::InvalidParams(format!(
            "max_dist = {max_dist} must be > 0"
        )));
    }
    let tree = KdTree::build(ground_truth);
    let gt = ground_truth.points();
    let est = estimated.points();
    let matched: Vec<Option<Correspondence>> = par::map_range(est.len(), |i| {
        let nn = tree.nearest(&est[i])?;
        (nn.distance <= max_dist).then(|| Correspondence {
            estimated: i,
            ground_truth: nn.index,
            distance: nn.distance,
            deviation: gt[nn.index] - est[i],
        })
    });
    let pairs: Vec<Correspondence> = matched.into_iter().flatten().collect();
    if pairs.is_empty() {
        return Err(Error::NoCorrespondences { max_dist });
    }
    Ok(CorrespondenceSet { pairs })
}

/// Positive per-axis multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactor {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl ScaleFactor {
    pub const IDENTITY: ScaleFactor = ScaleFactor {
        x: 1.0,
        y: 1.0,
        z: 1.0,
    };

    pub fn new(x: f64, y: f64, z: f64) -> Result<Self> {
        let s = ScaleFactor { x, y, z };
        if s.as_array().iter().all(|v| *v > 0.0 && v.is_finite()) {
            Ok(s)
        } else {
            Err(Error::InvalidParams(format!(
                "scale factors must be positive and finite: {s:?}"
            )))
        }
    }

    pub fn uniform(s: f64) -> Result<Self> {
        Self::new(s, s, s)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn as_point(&self) -> Point3 {
        Point3::new(self.x, self.y, self.z)
    }

    pub fn inverse(&self) -> ScaleFactor {
        ScaleFactor {
            x: 1.0 / self.x,
            y: 1.0 / self.y,
            z: 1.0 / self.z,
        }
    }
}

/// Matched, first-pose-anchored translations `(estimated, ground_truth)`.
fn anchored_pairs(
    est: &Trajectory,
    gt: &Trajectory,
) -> Result<(Vec<(Point3, Point3)>, Point3, Point3)> {
    let shared: Vec<(Point3, Point3)> = est
        .poses()
        .iter()
        .filter_map(|e| gt.at(e.t()).map(|g| (e.translation(), g.translation())))
        .collect();
    if shared.len() < 2 {
        return Err(Error::TooFewPoses(shared.len()));
    }
    let (e0, g0) = shared[0];
    Ok((
        shared.iter().map(|&(e, g)| (e - e0, g - g0)).collect(),
        e0,
        g0,
    ))
}

/// Per-axis least-squares ratio `s_c = sum(g_c e_c) / sum(e_c^2)` over
/// anchored translations. An axis without usable spread takes the geometric
/// mean of the other axes.
pub fn estimate_scale(
    estimated_traj: &Trajectory,
    ground_truth_traj: &Trajectory,
) -> Result<ScaleFactor> {
    let (pairs, _, _) = anchored_pairs(estimated_traj, ground_truth_traj)?;
    let mut num = [0.0f64; 3];
    let mut den = [0.0f64; 3];
    let mut gsq = [0.0f64; 3];
    for (e, g) in &pairs {
        for a in 0..3 {
            num[a] += g[a] * e[a];
            den[a] += e[a] * e[a];
            gsq[a] += g[a] * g[a];
        }
    }
    let max_den = den.iter().copied().fold(0.0, f64::max);
    let max_gsq = gsq.iter().copied().fold(0.0, f64::max);
    let eps = 1e-12;
    let s: [Option<f64>; 3] = std::array::from_fn(|a| {
        if den[a] <= eps * max_den || gsq[a] <= eps * max_gsq || den[a] == 0.0 {
            return None;
        }
        let r = num[a] / den[a];
        (r > 0.0 && r.is_finite()).then_some(r)
    });
    let good: Vec<f64> = s.iter().flatten().copied().collect();
    if good.is_empty() {
        return Err(Error::DegenerateTrajectory(
            "no axis has usable translation spread".into(),
        ));
    }
    let fallback = (good.iter().map(|v| v.ln()).sum::<f64>() / good.len() as f64).exp();
    if good.len() < 3 {
        log::warn!("degenerate scale axis, using geometric mean {fallback}");
    }
    ScaleFactor::new(
        s[0].unwrap_or(fallback),
        s[1].unwrap_or(fallback),
        s[2].unwrap_or(fallback),
    )
}

/// `anchor + s * (p - anchor)` component-wise.
pub fn apply_scale(cloud: &PointCloud, s: &ScaleFactor, anchor: Point3) -> PointCloud {
    let sv = s.as_point();
    PointCloud::from_finite(
        cloud
            .iter()
            .map(|&p| anchor + (p - anchor).hadamard(&sv))
            .collect(),
    )
}

/// Maps estimated-frame coordinates into the ground-truth frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub scale: ScaleFactor,
    /// First shared pose translation of the estimated trajectory.
    pub estimated_anchor: Point3,
    /// Matching pose translation of the ground-truth trajectory.
    pub ground_truth_anchor: Point3,
}

impl Alignment {
    pub fn from_trajectories(
        estimated_traj: &Trajectory,
        ground_truth_traj: &Trajectory,
    ) -> Result<Self> {
        let scale = estimate_scale(estimated_traj, ground_truth_traj)?;
        let (_, e0, g0) = anchored_pairs(estimated_traj, ground_truth_traj)?;
        Ok(Alignment {
            scale,
            estimated_anchor: e0,
            ground_truth_anchor: g0,
        })
    }

    pub fn apply(&self, cloud: &PointCloud) -> PointCloud {
        apply_scale(cloud, &self.scale, self.estimated_anchor)
            .translated(self.ground_truth_anchor - self.estimated_anchor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapError {
    /// Mean distance over matched pairs.
    pub mean_error: f64,
    /// `mean_error` relative to the ground-truth bounding-box diagonal, in percent.
    pub percent_error: f64,
    /// Matched pairs over estimated points.
    pub matched_fraction: f64,
    pub matched: usize,
}

/// Default correspondence gate: twice the median spacing of the ground truth.
pub fn default_gate(ground_truth: &PointCloud) -> Result<f64> {
    match median_spacing(ground_truth) {
        Some(s) if s > 0.0 => Ok(2.0 * s),
        Some(_) => Err(Error::DegenerateNeighborhood(
            "ground truth has zero median spacing".into(),
        )),
        None => Err(Error::TooFewPoints {
            required: 1,
            actual: ground_truth.len(),
        }),
    }
}

pub fn map_error(
    estimated: &PointCloud,
    ground_truth: &PointCloud,
    max_dist: f64,
) -> Result<MapError> {
    let corr = find_correspondences(estimated, ground_truth, max_dist)?;
    let mut sum = 0.0;
    for p in &corr.pairs {
        sum += p.distance;
    }
    let mean_error = sum / corr.len() as f64;
    let diag = bounding_box(ground_truth)?.diagonal();
    let percent_error = if diag > 0.0 {
        100.0 * mean_error / diag
    } else {
        0.0
    };
    Ok(MapError {
        mean_error,
        percent_error,
        matched_fraction: corr.len() as f64 / estimated.len() as f64,
        matched: corr.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn random_cloud(n: usize, seed: u64) -> PointCloud {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PointCloud::new(
            (0..n)
                .map(|_| Point3::new(rng.random(), rng.random(), rng.random()))
                .collect(),
        )
        .unwrap()
    }

    fn helix(n: usize) -> Vec<Point3> {
        (0..n)
            .map(|i| {
                let t = i as f64 * 0.1;
                Point3::new(2.0 * t.cos(), 1.5 * t.sin(), 0.3 * t)
            })
            .collect()
    }

    fn traj(pts: &[Point3]) -> Trajectory {
        Trajectory::new(
            pts.iter()
                .enumerate()
                .map(|(i, p)| Pose::at(i as i64, *p).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_clouds_match_themselves() {
        let c = random_cloud(100, 1);
        let cs = find_correspondences(&c, &c, 0.5).unwrap();
        assert_eq!(cs.len(), 100);
        for p in &cs.pairs {
            assert_eq!(p.estimated, p.ground_truth);
            assert_eq!(p.deviation, Point3::ORIGIN);
        }
        let e = map_error(&c, &c, 0.5).unwrap();
        assert_eq!(
            (e.mean_error, e.percent_error, e.matched_fraction),
            (0.0, 0.0, 1.0)
        );
    }

    #[test]
    fn rigid_shift() {
        let gt =
            PointCloud::new((0..20).map(|i| Point3::new(i as f64, 0.0, 0.0)).collect()).unwrap();
        let est = gt.translated(Point3::new(0.0, 0.1, 0.0));
        let cs = find_correspondences(&est, &gt, 1.0).unwrap();
        for p in &cs.pairs {
            assert!((p.distance - 0.1).abs() < 1e-15);
            assert!((p.deviation.y + 0.1).abs() < 1e-15);
        }
        // shift along x on a line of spacing 1: each point still matches itself
        let est = gt.translated(Point3::new(0.1, 0.0, 0.0));
        let cs = find_correspondences(&est, &gt, 1.0).unwrap();
        for p in &cs.pairs {
            assert_eq!(p.estimated, p.ground_truth);
            assert!((p.deviation.x + 0.1).abs() < 1e-12);
        }
        let e = map_error(&est, &gt, 1.0).unwrap();
        assert!((e.mean_error - 0.1).abs() < 1e-12);
    }

    #[test]
    fn correspondences_match_brute_force() {
        let est = random_cloud(200, 2);
        let gt = random_cloud(200, 3);
        let gate = 0.12;
        let cs = find_correspondences(&est, &gt, gate).unwrap();
        let mut want = Vec::new();
        for (i, p) in est.iter().enumerate() {
            let (j, d2) = gt
                .iter()
                .enumerate()
                .map(|(j, q)| (j, p.distance_squared(q)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap();
            if d2.sqrt() <= gate {
                want.push((i, j));
            }
        }
        let got: Vec<(usize, usize)> = cs
            .pairs
            .iter()
            .map(|p| (p.estimated, p.ground_truth))
            .collect();
        assert_eq!(got, want);
    }

    #[test]
    fn correspondence_errors() {
        let c = random_cloud(5, 1);
        assert!(matches!(
            find_correspondences(&PointCloud::empty(), &c, 1.0),
            Err(Error::EmptyCloud)
        ));
        let far = c.translated(Point3::splat(100.0));
        assert!(matches!(
            find_correspondences(&far, &c, 1.0),
            Err(Error::NoCorrespondences { .. })
        ));
        assert!(map_error(&far, &c, 1.0).is_err());
    }

    #[test]
    fn map_error_matches_hand_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let gt = PointCloud::new(
            (0..50)
                .map(|i| Point3::new(i as f64 * 10.0, 0.0, 0.0))
                .collect(),
        )
        .unwrap();
        let mut expected = 0.0;
        let est: Vec<Point3> = gt
            .iter()
            .map(|p| {
                let dir = Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalized()
                .unwrap();
                let len = rng.random_range(0.0..2.0);
                expected += (dir * len).norm();
                *p + dir * len
            })
            .collect();
        let e = map_error(&PointCloud::new(est).unwrap(), &gt, 3.0).unwrap();
        assert!((e.mean_error - expected / 50.0).abs() < 1e-12);
        assert!((e.percent_error - 100.0 * e.mean_error / 490.0).abs() < 1e-12);
    }

    #[test]
    fn identity_and_half_scale() {
        let g = helix(40);
        assert_eq!(
            estimate_scale(&traj(&g), &traj(&g)).unwrap(),
            ScaleFactor::IDENTITY
        );
        let half: Vec<Point3> = g.iter().map(|p| *p * 0.5).collect();
        let s = estimate_scale(&traj(&half), &traj(&g)).unwrap();
        for v in s.as_array() {
            assert!((v - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn noisy_helix_scales() {
        let truth = [0.3, 0.7, 2.0];
        let g = helix(200);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise = Normal::new(0.0, 1e-3).unwrap();
        let e: Vec<Point3> = g
            .iter()
            .map(|p| {
                Point3::new(p.x / truth[0], p.y / truth[1], p.z / truth[2])
                    + Point3::new(
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                        noise.sample(&mut rng),
                    )
            })
            .collect();
        let s = estimate_scale(&traj(&e), &traj(&g)).unwrap();
        for (got, want) in s.as_array().iter().zip(truth) {
            assert!((got - want).abs() < 1e-2, "{got} vs {want}");
        }
    }

    #[test]
    fn degenerate_axis_falls_back() {
        let g: Vec<Point3> = (0..10)
            .map(|i| Point3::new(i as f64, 2.0 * i as f64, 5.0))
            .collect();
        let e: Vec<Point3> = g
            .iter()
            .map(|p| Point3::new(p.x / 2.0, p.y / 8.0, p.z))
            .collect();
        let s = estimate_scale(&traj(&e), &traj(&g)).unwrap();
        assert!((s.x - 2.0).abs() < 1e-12 && (s.y - 8.0).abs() < 1e-12);
        assert!((s.z - 4.0).abs() < 1e-12);
        let still: Vec<Point3> = vec![Point3::ORIGIN; 10];
        assert!(matches!(
            estimate_scale(&traj(&still), &traj(&still)),
            Err(Error::DegenerateTrajectory(_))
        ));
        assert!(matches!(
            estimate_scale(&traj(&g[..1]), &traj(&g[..1])),
            Err(Error::TooFewPoses(1))
        ));
    }

    #[test]
    fn apply_scale_examples() {
        let c = PointCloud::new(vec![Point3::splat(1.0)]).unwrap();
        assert_eq!(apply_scale(&c, &ScaleFactor::IDENTITY, Point3::ORIGIN), c);
        let s2 = ScaleFactor::uniform(2.0).unwrap();
        assert_eq!(
            apply_scale(&c, &s2, Point3::ORIGIN).points()[0],
            Point3::splat(2.0)
        );
        let r = random_cloud(50, 8);
        let s = ScaleFactor::new(0.3, 4.0, 7.5).unwrap();
        let a = Point3::new(0.1, -2.0, 3.0);
        let back = apply_scale(&apply_scale(&r, &s, a), &s.inverse(), a);
        for (p, q) in back.iter().zip(r.iter()) {
            assert!((*p - *q).norm() < 1e-12);
        }
    }

    #[test]
    fn alignment_maps_estimated_frame() {
        let g = helix(30);
        let shift = Point3::new(5.0, -1.0, 2.0);
        let e: Vec<Point3> = g.iter().map(|p| (*p - shift) * 0.25).collect();
        let al = Alignment::from_trajectories(&traj(&e), &traj(&g)).unwrap();
        let mapped = al.apply(&PointCloud::new(e).unwrap());
        for (p, q) in mapped.iter().zip(&g) {
            assert!((*p - *q).norm() < 1e-12);
        }
    }

    proptest::proptest! {
        #[test]
        fn scale_round_trip(sx in 0.1f64..10.0, sy in 0.1f64..10.0, sz in 0.1f64..10.0) {
            let g = helix(60);
            let s = ScaleFactor::new(sx, sy, sz).unwrap();
            let est = apply_scale(&PointCloud::new(g.clone()).unwrap(), &s.inverse(), Point3::ORIGIN);
            let got = estimate_scale(&traj(est.points()), &traj(&g)).unwrap();
            for (a, b) in got.as_array().iter().zip(s.as_array()) {
                proptest::prop_assert!((a - b).abs() < 1e-9);
            }
        }
    }
}
