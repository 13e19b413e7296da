//! Radius-based and statistical outlier removal.
//!
//! Both filters evaluate every point against the neighborhoods of the
//! original cloud in one batch; nothing is re-filtered within a call. A point
//! is never counted as its own neighbor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::PointCloud;
use crate::par;
use crate::spatial::{KdTree, Neighbor};

/// Keep a point iff at least `b` other points lie within distance `r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiusFilterParams {
    pub r: f64,
    pub b: usize,
}

impl RadiusFilterParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "radius filter: r = {} must be > 0",
                self.r
            )));
        }
        if self.b < 1 {
            return Err(Error::InvalidParams("radius filter: b must be >= 1".into()));
        }
        Ok(())
    }
}

/// Keep a point iff its mean distance to its `l` nearest neighbors is at most
/// `mean + h * stddev` over all points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatFilterParams {
    pub l: usize,
    pub h: f64,
}

impl Default for StatFilterParams {
    fn default() -> Self {
        Self { l: 50, h: 1.8 }
    }
}

impl StatFilterParams {
    pub fn validate(&self) -> Result<()> {
        if self.l < 1 {
            return Err(Error::InvalidParams(
                "statistical filter: l must be >= 1".into(),
            ));
        }
        // +inf is allowed and disables removal
        if !(self.h > 0.0) {
            return Err(Error::InvalidParams(format!(
                "statistical filter: h = {} must be > 0",
                self.h
            )));
        }
        Ok(())
    }
}

/// Which input indices survived. `kept` and `removed` partition the input
/// and are both ascending.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<usize>,
    pub removed: Vec<usize>,
    /// Distance threshold applied by the statistical filter.
    pub threshold_used: Option<f64>,
}

impl FilterReport {
    fn from_mask(mask: &[bool], threshold_used: Option<f64>) -> Self {
        let (kept, removed): (Vec<usize>, Vec<usize>) = (0..mask.len()).partition(|&i| mask[i]);
        FilterReport {
            kept,
            removed,
            threshold_used,
        }
    }
}

/// Number of other points within `r` of each point.
pub fn neighbor_counts(cloud: &PointCloud, r: f64) -> Result<Vec<usize>> {
    if !(r > 0.0) {
        return Err(Error::InvalidRadius(r));
    }
    let tree = KdTree::build(cloud);
    let pts = cloud.points();
    // the query point itself is always inside its own ball
    Ok(par::map_range(pts.len(), |i| {
        tree.count_within(&pts[i], r)
            .map_or(0, |c| c.saturating_sub(1))
    }))
}

pub fn radius_filter(
    cloud: &PointCloud,
    params: &RadiusFilterParams,
) -> Result<(PointCloud, FilterReport)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    params.validate()?;
    let counts = neighbor_counts(cloud, params.r)?;
    let mask: Vec<bool> = counts.iter().map(|&c| c >= params.b).collect();
    let report = FilterReport::from_mask(&mask, None);
    Ok((cloud.select(&report.kept), report))
}

/// Mean distance from each point to its `l` nearest other points.
pub fn mean_neighbor_distances(cloud: &PointCloud, l: usize) -> Vec<f64> {
    let tree = KdTree::build(cloud);
    let pts = cloud.points();
    par::map_range(pts.len(), |i| {
        let nn = Neighbor::exclude(tree.knn(&pts[i], l + 1), i);
        let mut sum = 0.0;
        for n in nn.iter().take(l) {
            sum += n.distance;
        }
        sum / l as f64
    })
}

/// Population mean and standard deviation, summed sequentially by index.
pub fn mean_and_stddev(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mut sum = 0.0;
    for v in values {
        sum += v;
    }
    let mean = sum / n;
    let mut sq = 0.0;
    for v in values {
        let d = v - mean;
        sq += d * d;
    }
    (mean, (sq / n).sqrt())
}

pub fn statistical_filter(
    cloud: &PointCloud,
    params: &StatFilterParams,
) -> Result<(PointCloud, FilterReport)> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    params.validate()?;
    if cloud.len() <= params.l {
        return Err(Error::TooFewPoints {
            required: params.l,
            actual: cloud.len(),
        });
    }
    let mean_dists = mean_neighbor_distances(cloud, params.l);
    let (mu, sigma) = mean_and_stddev(&mean_dists);
    let threshold = if params.h.is_infinite() {
        f64::INFINITY
    } else if sigma == 0.0 {
        mu
    } else {
        mu + params.h * sigma
    };
    let mask: Vec<bool> = mean_dists.iter().map(|&a| a <= threshold).collect();
    let report = FilterReport::from_mask(&mask, Some(threshold));
    Ok((cloud.select(&report.kept), report))
}
