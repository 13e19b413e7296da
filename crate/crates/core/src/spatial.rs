//! Exact k-nearest-neighbor and fixed-radius search over a static kd-tree.
//!
//! The tree stores a permutation of point indices; node `mid` of the range
//! `lo..hi` is the median along axis `depth % 3`, with coordinate ties broken
//! by point index so that the layout is fully determined by the input.
//! Results are ordered by `(squared distance, index)`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::geometry::{Point3, PointCloud};
use crate::par;

const LEAF_SIZE: usize = 8;

/// A query result: index into the indexed cloud and Euclidean distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub index: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    d2: f64,
    index: usize,
}

impl Candidate {
    #[inline]
    fn key_cmp(&self, o: &Candidate) -> Ordering {
        self.d2.total_cmp(&o.d2).then(self.index.cmp(&o.index))
    }

    fn into_neighbor(self) -> Neighbor {
        Neighbor {
            index: self.index,
            distance: self.d2.sqrt(),
        }
    }
}

impl PartialEq for Candidate {
    fn eq(&self, o: &Self) -> bool {
        self.key_cmp(o) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Candidate {
    fn cmp(&self, o: &Self) -> Ordering {
        self.key_cmp(o)
    }
}

/// Read-only kd-tree borrowing the points it indexes.
#[derive(Debug, Clone)]
pub struct KdTree<'a> {
    points: &'a [Point3],
    order: Vec<usize>,
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> KdTree<'a> {
        Self::from_points(cloud.points())
    }

    pub fn from_points(points: &'a [Point3]) -> KdTree<'a> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        split(points, &mut order, 0);
        KdTree { points, order }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &'a [Point3] {
        self.points
    }

    /// The `k` closest points, ascending. Returns everything if the tree
    /// holds fewer than `k` points.
    pub fn knn(&self, query: &Point3, k: usize) -> Vec<Neighbor> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(query, k, 0, self.order.len(), 0, &mut heap);
        heap.into_sorted_vec()
            .into_iter()
            .map(Candidate::into_neighbor)
            .collect()
    }

    pub fn nearest(&self, query: &Point3) -> Option<Neighbor> {
        self.knn(query, 1).into_iter().next()
    }

    /// Every point with `distance² <= r²`, ascending. A query located at an
    /// indexed point reports that point too.
    pub fn radius_search(&self, query: &Point3, r: f64) -> Result<Vec<Neighbor>> {
        if !(r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        let mut out = Vec::new();
        self.radius_rec(query, r * r, 0, self.order.len(), 0, &mut out);
        out.sort_unstable();
        Ok(out.into_iter().map(Candidate::into_neighbor).collect())
    }

    /// Number of points within `r` of `query`.
    pub fn count_within(&self, query: &Point3, r: f64) -> Result<usize> {
        if !(r > 0.0) {
            return Err(Error::InvalidRadius(r));
        }
        let mut out = Vec::new();
        self.radius_rec(query, r * r, 0, self.order.len(), 0, &mut out);
        Ok(out.len())
    }

    fn offer(&self, q: &Point3, idx: usize, k: usize, heap: &mut BinaryHeap<Candidate>) {
        let c = Candidate {
            d2: q.distance_squared(&self.points[idx]),
            index: idx,
        };
        if heap.len() < k {
            heap.push(c);
        } else if let Some(top) = heap.peek() {
            if c < *top {
                heap.pop();
                heap.push(c);
            }
        }
    }

    fn knn_rec(
        &self,
        q: &Point3,
        k: usize,
        lo: usize,
        hi: usize,
        depth: usize,
        heap: &mut BinaryHeap<Candidate>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                self.offer(q, idx, k, heap);
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        self.offer(q, pivot, k, heap);
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.knn_rec(q, k, near.0, near.1, depth + 1, heap);
        let d2 = diff * diff;
        if heap.len() < k || heap.peek().is_some_and(|top| d2 <= top.d2) {
            self.knn_rec(q, k, far.0, far.1, depth + 1, heap);
        }
    }

    fn radius_rec(
        &self,
        q: &Point3,
        r2: f64,
        lo: usize,
        hi: usize,
        depth: usize,
        out: &mut Vec<Candidate>,
    ) {
        if hi - lo <= LEAF_SIZE {
            for &idx in &self.order[lo..hi] {
                let d2 = q.distance_squared(&self.points[idx]);
                if d2 <= r2 {
                    out.push(Candidate { d2, index: idx });
                }
            }
            return;
        }
        let mid = lo + (hi - lo) / 2;
        let axis = depth % 3;
        let pivot = self.order[mid];
        let d2 = q.distance_squared(&self.points[pivot]);
        if d2 <= r2 {
            out.push(Candidate { d2, index: pivot });
        }
        let diff = q[axis] - self.points[pivot][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.radius_rec(q, r2, near.0, near.1, depth + 1, out);
        if diff * diff <= r2 {
            self.radius_rec(q, r2, far.0, far.1, depth + 1, out);
        }
    }
}

fn split(points: &[Point3], order: &mut [usize], depth: usize) {
    if order.len() <= LEAF_SIZE {
        return;
    }
    let mid = order.len() / 2;
    let axis = depth % 3;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let (left, rest) = order.split_at_mut(mid);
    split(points, left, depth + 1);
    split(points, &mut rest[1..], depth + 1);
}

impl Neighbor {
    /// Drops the entry whose index equals `self_index`.
    pub fn exclude(list: Vec<Neighbor>, self_index: usize) -> Vec<Neighbor> {
        list.into_iter().filter(|n| n.index != self_index).collect()
    }
}

/// Distance from each point to its nearest other point.
pub fn nearest_neighbor_distances(tree: &KdTree<'_>) -> Vec<f64> {
    let pts = tree.points();
    par::map_range(pts.len(), |i| {
        tree.knn(&pts[i], 2)
            .into_iter()
            .find(|n| n.index != i)
            .map_or(0.0, |n| n.distance)
    })
}

/// Median nearest-neighbor spacing, `None` for clouds under two points.
pub fn median_spacing(cloud: &PointCloud) -> Option<f64> {
    if cloud.len() < 2 {
        return None;
    }
    let tree = KdTree::build(cloud);
    let mut d = nearest_neighbor_distances(&tree);
    d.sort_unstable_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    })
}
