//! MLS-based upsampling: Sample Local Plane, Random Uniform Density and
//! Voxel Grid Dilation.
//!
//! Every strategy generates candidate points, then moves each candidate onto
//! the MLS surface fitted from the *original* cloud, so the result does not
//! depend on generation order. The input points are carried through
//! (projected when `MlsParams::project_originals` is set) and are never
//! dropped; generated points are merged in deterministic order.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::mls::{fit_local_surface, mls_project, LocalFit, MlsParams};
use crate::par;
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleLocalPlaneParams {
    /// Upsampling radius.
    pub u_r: f64,
    /// Step between rings and along each ring.
    pub u_sz: f64,
    /// Maximum number of rings.
    pub u_s: usize,
}

impl SampleLocalPlaneParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.u_r > 0.0 && self.u_r.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "u_r = {} must be > 0",
                self.u_r
            )));
        }
        if !(self.u_sz > 0.0 && self.u_sz <= self.u_r) {
            return Err(Error::InvalidParams(format!(
                "u_sz = {} must be in (0, u_r = {}]",
                self.u_sz, self.u_r
            )));
        }
        if self.u_s < 1 {
            return Err(Error::InvalidParams("u_s must be >= 1".into()));
        }
        Ok(())
    }

    /// Rings at radii `u_sz, 2 u_sz, ...` up to `min(u_r, u_s * u_sz)`.
    pub fn ring_count(&self) -> usize {
        (((self.u_r / self.u_sz) + 1e-9).floor() as usize).clamp(1, self.u_s)
    }

    /// Samples on ring `k` (1-based); arc spacing is close to `u_sz`.
    pub fn samples_on_ring(&self, k: usize) -> usize {
        ((TAU * k as f64).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomUniformDensityParams {
    /// Target number of points within the MLS search radius of each input point.
    pub d: usize,
    pub seed: u64,
}

impl RandomUniformDensityParams {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::InvalidParams("d must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoxelGridDilationParams {
    /// Voxel edge length.
    pub s_vs: f64,
    /// Number of 26-neighborhood dilation passes.
    pub d_i: usize,
}

impl VoxelGridDilationParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_vs > 0.0 && self.s_vs.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "s_vs = {} must be > 0",
                self.s_vs
            )));
        }
        if self.d_i < 1 {
            return Err(Error::InvalidParams("d_i must be >= 1".into()));
        }
        Ok(())
    }
}

pub type VoxelKey = [i64; 3];

/// Hash grid over accepted points for proximity tests during merging.
struct PointGrid {
    cell: f64,
    cells: HashMap<VoxelKey, Vec<Point3>>,
}

impl PointGrid {
    fn new(cell: f64) -> Self {
        Self {
            cell,
            cells: HashMap::new(),
        }
    }

    fn key(&self, p: &Point3) -> VoxelKey {
        [
            (p.x / self.cell).floor() as i64,
            (p.y / self.cell).floor() as i64,
            (p.z / self.cell).floor() as i64,
        ]
    }

    fn insert(&mut self, p: Point3) {
        self.cells.entry(self.key(&p)).or_default().push(p);
    }

    /// Calls `f` on every stored point in the 27 cells around `p`.
    fn for_each_near(&self, p: &Point3, mut f: impl FnMut(&Point3)) {
        let k = self.key(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(v) = self.cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        v.iter().for_each(&mut f);
                    }
                }
            }
        }
    }

    /// Any stored point strictly closer than `tol` (`tol <= cell`).
    fn has_closer_than(&self, p: &Point3, tol: f64) -> bool {
        let t2 = tol * tol;
        let mut found = false;
        self.for_each_near(p, |q| found |= q.distance_squared(p) < t2);
        found
    }

    /// Stored points within `r` (`r <= cell`).
    fn count_within(&self, p: &Point3, r: f64) -> usize {
        let r2 = r * r;
        let mut n = 0;
        self.for_each_near(p, |q| n += usize::from(q.distance_squared(p) <= r2));
        n
    }
}

fn prepare(cloud: &PointCloud, mls: &MlsParams) -> Result<()> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    mls.validate()
}

/// Input points as carried into the output: projected onto the surface
/// fitted at each point when requested, untouched where the fit fails.
pub fn project_inputs(tree: &KdTree<'_>, mls: &MlsParams) -> Vec<Point3> {
    let pts = tree.points();
    if !mls.project_originals {
        return pts.to_vec();
    }
    par::map_slice(pts, |p| mls_project(tree, p, mls).unwrap_or(*p))
}

/// Projected inputs followed by every candidate not within `tol` of an
/// already accepted point, in order.
fn merge_dedup(
    base: Vec<Point3>,
    candidates: impl IntoIterator<Item = Point3>,
    tol: f64,
) -> PointCloud {
    let mut grid = PointGrid::new(tol);
    for p in &base {
        grid.insert(*p);
    }
    let mut out = base;
    for c in candidates {
        if !grid.has_closer_than(&c, tol) {
            grid.insert(c);
            out.push(c);
        }
    }
    PointCloud::from_finite(out)
}

fn finite_or_none(p: Point3) -> Option<Point3> {
    p.is_finite().then_some(p)
}

pub fn upsample_sample_local_plane(
    cloud: &PointCloud,
    mls: &MlsParams,
    params: &SampleLocalPlaneParams,
) -> Result<PointCloud> {
    prepare(cloud, mls)?;
    params.validate()?;
    let tree = KdTree::build(cloud);
    let pts = cloud.points();
    let rings = params.ring_count();

    let per_point: Vec<(Point3, Vec<Point3>)> = par::map_range(pts.len(), |i| {
        let p = pts[i];
        let Ok(fit) = fit_local_surface(&tree, &p, mls) else {
            return (p, Vec::new());
        };
        let center = fit.project(&p);
        let mut cand = Vec::new();
        for k in 1..=rings {
            let rho = k as f64 * params.u_sz;
            let n = params.samples_on_ring(k);
            for j in 0..n {
                let theta = TAU * j as f64 / n as f64;
                let c = center
                    + fit.tangent_u * (rho * theta.cos())
                    + fit.tangent_v * (rho * theta.sin());
                if let Some(q) = mls_project(&tree, &c, mls).ok().and_then(finite_or_none) {
                    cand.push(q);
                }
            }
        }
        let base = if mls.project_originals { center } else { p };
        (base, cand)
    });

    let (base, cands): (Vec<Point3>, Vec<Vec<Point3>>) = per_point.into_iter().unzip();
    Ok(merge_dedup(
        base,
        cands.into_iter().flatten(),
        0.5 * params.u_sz,
    ))
}

/// Uniform sample in the tangent disc of `fit` around `center`.
fn disc_sample(rng: &mut ChaCha8Rng, fit: &LocalFit, center: &Point3, radius: f64) -> Point3 {
    let rho = radius * rng.random::<f64>().sqrt();
    let theta = TAU * rng.random::<f64>();
    *center + fit.tangent_u * (rho * theta.cos()) + fit.tangent_v * (rho * theta.sin())
}

pub fn upsample_random_uniform_density(
    cloud: &PointCloud,
    mls: &MlsParams,
    params: &RandomUniformDensityParams,
) -> Result<PointCloud> {
    prepare(cloud, mls)?;
    params.validate()?;
    let tree = KdTree::build(cloud);
    let pts = cloud.points();
    let r = mls.search_radius;
    let base = project_inputs(&tree, mls);

    // Points are only added, so the count right before point i is processed
    // is at least its count among the carried inputs; that bounds how many
    // candidates point i can ever need.
    let base_tree = KdTree::from_points(&base);
    let d = params.d;
    let candidates: Vec<Vec<Point3>> = par::map_range(pts.len(), |i| {
        let p = pts[i];
        let have = base_tree.count_within(&p, r).unwrap_or(0);
        if have >= d {
            return Vec::new();
        }
        let need = d - have;
        let Ok(fit) = fit_local_surface(&tree, &p, mls) else {
            return Vec::new();
        };
        let center = fit.project(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(i as u64);
        let mut out = Vec::with_capacity(need);
        let mut attempts = 0;
        while out.len() < need && attempts < 10 * need + 10 {
            attempts += 1;
            let s = disc_sample(&mut rng, &fit, &center, r);
            if let Some(q) = mls_project(&tree, &s, mls).ok().and_then(finite_or_none) {
                if q.distance_squared(&p) <= r * r {
                    out.push(q);
                }
            }
        }
        out
    });

    let mut grid = PointGrid::new(r);
    for q in &base {
        grid.insert(*q);
    }
    let mut out = base;
    for (i, cand) in candidates.into_iter().enumerate() {
        let have = grid.count_within(&pts[i], r);
        for q in cand.into_iter().take(d.saturating_sub(have)) {
            grid.insert(q);
            out.push(q);
        }
    }
    Ok(PointCloud::from_finite(out))
}

pub fn voxel_key(p: &Point3, s: f64) -> VoxelKey {
    [
        (p.x / s).floor() as i64,
        (p.y / s).floor() as i64,
        (p.z / s).floor() as i64,
    ]
}

pub fn voxel_center(k: &VoxelKey, s: f64) -> Point3 {
    Point3::new(
        (k[0] as f64 + 0.5) * s,
        (k[1] as f64 + 0.5) * s,
        (k[2] as f64 + 0.5) * s,
    )
}

/// Occupied voxels of edge `s`, cells `[k s, (k+1) s)` per axis.
pub fn voxelize(points: &[Point3], s: f64) -> BTreeSet<VoxelKey> {
    points.iter().map(|p| voxel_key(p, s)).collect()
}

/// `iterations` passes of 26-neighborhood dilation.
pub fn dilate(occupied: &BTreeSet<VoxelKey>, iterations: usize) -> BTreeSet<VoxelKey> {
    let mut all: HashSet<VoxelKey> = occupied.iter().copied().collect();
    let mut frontier: Vec<VoxelKey> = occupied.iter().copied().collect();
    for _ in 0..iterations {
        let mut next = Vec::new();
        for k in &frontier {
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        let n = [k[0] + dx, k[1] + dy, k[2] + dz];
                        if all.insert(n) {
                            next.push(n);
                        }
                    }
                }
            }
        }
        frontier = next;
    }
    all.into_iter().collect()
}

/// Centers of the voxels that dilation adds, in key order.
pub fn dilation_candidates(
    cloud: &PointCloud,
    params: &VoxelGridDilationParams,
) -> Result<Vec<Point3>> {
    params.validate()?;
    let occupied = voxelize(cloud.points(), params.s_vs);
    Ok(dilate(&occupied, params.d_i)
        .difference(&occupied)
        .map(|k| voxel_center(k, params.s_vs))
        .collect())
}

/// Generated points farther than this many voxel edges from every input
/// point are discarded.
pub const DILATION_REACH: f64 = 2.0;
/// Generated points whose second projection moves them by more than this
/// many voxel edges are discarded.
pub const DILATION_SETTLE: f64 = 0.1;

pub fn upsample_voxel_grid_dilation(
    cloud: &PointCloud,
    mls: &MlsParams,
    params: &VoxelGridDilationParams,
) -> Result<PointCloud> {
    prepare(cloud, mls)?;
    let centers = dilation_candidates(cloud, params)?;
    let tree = KdTree::build(cloud);
    let pts = cloud.points();
    let r = mls.search_radius;
    let fits: Vec<Option<LocalFit>> =
        par::map_slice(pts, |p| fit_local_surface(&tree, p, mls).ok());
    let base: Vec<Point3> = if mls.project_originals {
        pts.iter()
            .zip(&fits)
            .map(|(p, f)| f.as_ref().map_or(*p, |f| f.project(p)))
            .collect()
    } else {
        pts.to_vec()
    };

    // voxel centers may sit several voxels off the surface, where a fresh
    // neighborhood would only graze it: move the center with the fit of the
    // nearest input point first, then project again from there
    let reach = DILATION_REACH * params.s_vs;
    let settle = DILATION_SETTLE * params.s_vs;
    let projected: Vec<Option<Point3>> = par::map_slice(&centers, |c| {
        let nn = tree.nearest(c)?;
        if nn.distance > r {
            return None;
        }
        let fit = fits[nn.index].as_ref()?;
        let first = finite_or_none(fit.project(c))?;
        let q = mls_project(&tree, &first, mls)
            .ok()
            .and_then(finite_or_none)?;
        if q.distance(&first) > settle {
            // the two fits disagree, typically across a crease
            return None;
        }
        (tree.nearest(&q)?.distance <= reach).then_some(q)
    });
    Ok(merge_dedup(
        base,
        projected.into_iter().flatten(),
        0.5 * params.s_vs,
    ))
}
