//! Fixed-depth occupancy octree.
//!
//! The root cube is the cloud's bounding box made cubic and inflated by one
//! resolution unit on every side. Leaves are half-open cells
//! `[min, min + edge)` addressed by Morton code, so coarser levels are
//! obtained by shifting codes and a point on a shared face falls into the
//! cell with larger coordinates.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{bounding_box, Aabb, Point3, PointCloud};

/// Deepest level representable in a 63-bit Morton code.
pub const MAX_DEPTH: u32 = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Octree {
    root: Aabb,
    depth: u32,
    leaf_edge: f64,
    /// Morton code -> number of inserted points.
    leaves: BTreeMap<u64, u32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OccupancyStats {
    pub occupied_leaves: usize,
    /// Fraction of leaves inside the occupied index range that hold no point.
    pub free_volume_fraction: f64,
}

fn spread_bits(v: u32) -> u64 {
    let mut x = u64::from(v) & 0x1f_ffff;
    x = (x | x << 32) & 0x1f00000000ffff;
    x = (x | x << 16) & 0x1f0000ff0000ff;
    x = (x | x << 8) & 0x100f00f00f00f00f;
    x = (x | x << 4) & 0x10c30c30c30c30c3;
    x = (x | x << 2) & 0x1249249249249249;
    x
}

fn compact_bits(v: u64) -> u32 {
    let mut x = v & 0x1249249249249249;
    x = (x | x >> 2) & 0x10c30c30c30c30c3;
    x = (x | x >> 4) & 0x100f00f00f00f00f;
    x = (x | x >> 8) & 0x1f0000ff0000ff;
    x = (x | x >> 16) & 0x1f00000000ffff;
    x = (x | x >> 32) & 0x1f_ffff;
    x as u32
}

pub fn morton_encode(idx: [u32; 3]) -> u64 {
    spread_bits(idx[0]) | spread_bits(idx[1]) << 1 | spread_bits(idx[2]) << 2
}

pub fn morton_decode(code: u64) -> [u32; 3] {
    [
        compact_bits(code),
        compact_bits(code >> 1),
        compact_bits(code >> 2),
    ]
}

pub fn build_octree(cloud: &PointCloud, resolution: f64) -> Result<Octree> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if !(resolution > 0.0 && resolution.is_finite()) {
        return Err(Error::InvalidResolution(resolution));
    }
    let bb = bounding_box(cloud)?;
    let ext = bb.extent();
    let edge = ext.x.max(ext.y).max(ext.z) + 2.0 * resolution;
    let center = bb.center();
    let min = center - Point3::splat(0.5 * edge);
    let root = Aabb {
        min,
        max: min + Point3::splat(edge),
    };
    let mut depth = 0;
    while edge / f64::from(1u32 << depth) > resolution {
        depth += 1;
        if depth > MAX_DEPTH {
            return Err(Error::InvalidResolution(resolution));
        }
    }
    let leaf_edge = edge / f64::from(1u32 << depth);
    let mut tree = Octree {
        root,
        depth,
        leaf_edge,
        leaves: BTreeMap::new(),
    };
    for p in cloud {
        let idx = tree.leaf_index(p).expect("root contains every point");
        *tree.leaves.entry(morton_encode(idx)).or_insert(0) += 1;
    }
    Ok(tree)
}

impl Octree {
    pub fn root(&self) -> Aabb {
        self.root
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn leaf_edge(&self) -> f64 {
        self.leaf_edge
    }

    pub fn cells_per_axis(&self) -> u32 {
        1 << self.depth
    }

    /// Integer leaf coordinates of `p`, `None` outside the root cube.
    pub fn leaf_index(&self, p: &Point3) -> Option<[u32; 3]> {
        let n = self.cells_per_axis();
        let mut idx = [0u32; 3];
        for a in 0..3 {
            if !(p[a] >= self.root.min[a] && p[a] < self.root.max[a]) {
                return None;
            }
            let k = ((p[a] - self.root.min[a]) / self.leaf_edge).floor();
            idx[a] = (k as u32).min(n - 1);
        }
        Some(idx)
    }

    pub fn is_occupied(&self, p: &Point3) -> bool {
        self.leaf_index(p)
            .is_some_and(|idx| self.leaves.contains_key(&morton_encode(idx)))
    }

    /// Points inserted into the leaf containing `p`.
    pub fn point_count(&self, p: &Point3) -> u32 {
        self.leaf_index(p)
            .and_then(|idx| self.leaves.get(&morton_encode(idx)).copied())
            .unwrap_or(0)
    }

    pub fn occupied_leaves(&self) -> usize {
        self.leaves.len()
    }

    /// Occupied leaves as `(index, point count)`, in Morton order.
    pub fn leaves(&self) -> impl Iterator<Item = ([u32; 3], u32)> + '_ {
        self.leaves.iter().map(|(&c, &n)| (morton_decode(c), n))
    }

    pub fn leaf_center(&self, idx: [u32; 3]) -> Point3 {
        self.root.min
            + Point3::new(
                (f64::from(idx[0]) + 0.5) * self.leaf_edge,
                (f64::from(idx[1]) + 0.5) * self.leaf_edge,
                (f64::from(idx[2]) + 0.5) * self.leaf_edge,
            )
    }

    pub fn leaf_centers(&self) -> PointCloud {
        PointCloud::from_finite(self.leaves().map(|(i, _)| self.leaf_center(i)).collect())
    }

    /// Occupied nodes at `level` (0 = root, `depth` = leaves).
    pub fn occupied_nodes_at(&self, level: u32) -> usize {
        let level = level.min(self.depth);
        let shift = 3 * (self.depth - level);
        let mut n = 0;
        let mut last = None;
        for &c in self.leaves.keys() {
            let parent = c >> shift;
            if last != Some(parent) {
                n += 1;
                last = Some(parent);
            }
        }
        n
    }

    pub fn stats(&self) -> OccupancyStats {
        occupancy_stats(self)
    }
}

pub fn occupancy_stats(tree: &Octree) -> OccupancyStats {
    let occupied = tree.leaves.len();
    if occupied == 0 {
        return OccupancyStats {
            occupied_leaves: 0,
            free_volume_fraction: 1.0,
        };
    }
    let mut lo = [u32::MAX; 3];
    let mut hi = [0u32; 3];
    for (idx, _) in tree.leaves() {
        for a in 0..3 {
            lo[a] = lo[a].min(idx[a]);
            hi[a] = hi[a].max(idx[a]);
        }
    }
    let total: f64 = (0..3).map(|a| f64::from(hi[a] - lo[a] + 1)).product();
    OccupancyStats {
        occupied_leaves: occupied,
        free_volume_fraction: 1.0 - occupied as f64 / total,
    }
}

/// One line per occupied leaf: `x y z edge` (leaf center and edge length).
pub fn write_leaf_list(tree: &Octree, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# x y z edge")?;
    for (idx, _) in tree.leaves() {
        let c = tree.leaf_center(idx);
        writeln!(w, "{} {} {} {}", c.x, c.y, c.z, tree.leaf_edge)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    /// Floor-division binning with the same root and leaf edge.
    fn oracle_bins(tree: &Octree, pts: &[Point3]) -> HashSet<(i64, i64, i64)> {
        pts.iter()
            .map(|p| {
                let d = (*p - tree.root().min) / tree.leaf_edge();
                (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64)
            })
            .collect()
    }

    #[test]
    fn morton_round_trip() {
        for idx in [
            [0, 0, 0],
            [1, 2, 3],
            [0x1f_ffff, 5, 0x1f_fffe],
            [12345, 54321, 99999],
        ] {
            assert_eq!(morton_decode(morton_encode(idx)), idx);
        }
        assert_eq!(morton_encode([1, 0, 0]), 1);
        assert_eq!(morton_encode([0, 1, 0]), 2);
        assert_eq!(morton_encode([0, 0, 1]), 4);
    }

    #[test]
    fn single_point() {
        let p = Point3::new(1.0, 2.0, 3.0);
        let t = build_octree(&PointCloud::new(vec![p]).unwrap(), 0.1).unwrap();
        assert_eq!(t.occupied_leaves(), 1);
        assert!(t.is_occupied(&p));
        assert!(!t.is_occupied(&Point3::splat(1e6)));
        assert_eq!(t.stats().occupied_leaves, 1);
        assert!(t.leaf_edge() <= 0.1);
    }

    #[test]
    fn octant_centers() {
        let mut pts = Vec::new();
        for i in 0..8 {
            pts.push(Point3::new(
                if i & 1 == 0 { 0.25 } else { 0.75 },
                if i & 2 == 0 { 0.25 } else { 0.75 },
                if i & 4 == 0 { 0.25 } else { 0.75 },
            ));
        }
        let t = build_octree(&PointCloud::new(pts.clone()).unwrap(), 0.5).unwrap();
        assert_eq!(t.occupied_leaves(), 8);
        assert!(pts.iter().all(|p| t.is_occupied(p)));
    }

    #[test]
    fn random_matches_binning_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Point3> = (0..500)
            .map(|_| {
                Point3::new(
                    rng.random_range(-3.0..3.0),
                    rng.random(),
                    rng.random_range(0.0..10.0),
                )
            })
            .collect();
        let t = build_octree(&PointCloud::new(pts.clone()).unwrap(), 0.3).unwrap();
        let got: HashSet<(i64, i64, i64)> = t
            .leaves()
            .map(|(i, _)| (i64::from(i[0]), i64::from(i[1]), i64::from(i[2])))
            .collect();
        assert_eq!(got, oracle_bins(&t, &pts));
        let total: u32 = t.leaves().map(|(_, n)| n).sum();
        assert_eq!(total, 500);
        // random probes
        for _ in 0..100 {
            let q = Point3::new(
                rng.random_range(-4.0..4.0),
                rng.random_range(-1.0..2.0),
                rng.random_range(-1.0..11.0),
            );
            let d = (q - t.root().min) / t.leaf_edge();
            let key = (d.x.floor() as i64, d.y.floor() as i64, d.z.floor() as i64);
            let inside = t.root().min.x <= q.x
                && q.x < t.root().max.x
                && t.root().min.y <= q.y
                && q.y < t.root().max.y
                && t.root().min.z <= q.z
                && q.z < t.root().max.z;
            assert_eq!(t.is_occupied(&q), inside && got.contains(&key));
        }
    }

    #[test]
    fn shared_face_goes_to_upper_cell() {
        let c = PointCloud::new(vec![Point3::ORIGIN, Point3::splat(2.0)]).unwrap();
        let t = build_octree(&c, 1.0).unwrap();
        let e = t.leaf_edge();
        // a point exactly on a cell boundary
        let idx = t.leaf_index(&Point3::ORIGIN).unwrap();
        let boundary = t.root().min + Point3::splat(e * f64::from(idx[0]));
        assert_eq!(t.leaf_index(&boundary).unwrap()[0], idx[0]);
        let below = Point3::new(boundary.x - 1e-12, boundary.y, boundary.z);
        assert_eq!(t.leaf_index(&below).unwrap()[0], idx[0] - 1);
    }

    #[test]
    fn full_lattice_has_no_free_volume() {
        let c = PointCloud::new(vec![Point3::ORIGIN, Point3::splat(4.0)]).unwrap();
        let probe = build_octree(&c, 1.0).unwrap();
        let e = probe.leaf_edge();
        // put one point at every leaf center inside [0,4]^3
        let mut pts = Vec::new();
        let lo = probe.leaf_index(&Point3::ORIGIN).unwrap();
        let hi = probe.leaf_index(&Point3::splat(4.0)).unwrap();
        for x in lo[0]..=hi[0] {
            for y in lo[1]..=hi[1] {
                for z in lo[2]..=hi[2] {
                    pts.push(probe.leaf_center([x, y, z]));
                }
            }
        }
        let t = build_octree(&PointCloud::new(pts.clone()).unwrap(), 1.0).unwrap();
        assert!((t.leaf_edge() - e).abs() < 1.0);
        let s = t.stats();
        assert_eq!(s.occupied_leaves, pts.len());
        assert_eq!(s.free_volume_fraction, 0.0);
    }

    #[test]
    fn hierarchy_counts() {
        let c = PointCloud::new(vec![
            Point3::ORIGIN,
            Point3::splat(0.01),
            Point3::splat(10.0),
        ])
        .unwrap();
        let t = build_octree(&c, 0.1).unwrap();
        assert_eq!(t.occupied_nodes_at(0), 1);
        assert_eq!(t.occupied_nodes_at(t.depth()), t.occupied_leaves());
        assert!(t.occupied_nodes_at(1) <= t.occupied_nodes_at(2));
    }

    #[test]
    fn errors() {
        assert!(matches!(
            build_octree(&PointCloud::empty(), 0.1),
            Err(Error::EmptyCloud)
        ));
        let c = PointCloud::new(vec![Point3::ORIGIN]).unwrap();
        assert!(matches!(
            build_octree(&c, 0.0),
            Err(Error::InvalidResolution(_))
        ));
        assert!(matches!(
            build_octree(&c, f64::NAN),
            Err(Error::InvalidResolution(_))
        ));
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]

        #[test]
        fn adding_points_never_shrinks(seed in 0u64..1000, n in 1usize..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<Point3> = (0..n).map(|_| Point3::new(rng.random(), rng.random(), rng.random())).collect();
            let a = build_octree(&PointCloud::new(pts.clone()).unwrap(), 0.05).unwrap();
            proptest::prop_assert!(pts.iter().all(|p| a.is_occupied(p)));
            // the extra point is inside the box, so the root grid is unchanged
            let mut more = pts.clone();
            more.push(pts[0] * 0.5 + pts[n - 1] * 0.5);
            let b = build_octree(&PointCloud::new(more).unwrap(), 0.05).unwrap();
            proptest::prop_assert!(b.occupied_leaves() >= a.occupied_leaves());
        }
    }
}
