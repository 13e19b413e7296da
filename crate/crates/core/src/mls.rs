//! Moving-least-squares local surface fitting.
//!
//! Around a query point the neighbors within `search_radius` are weighted by
//! `exp(-d^2 / bandwidth^2)`. The weighted centroid and the eigenvector of the
//! weighted covariance with the smallest eigenvalue define a local plane; for
//! second order fits a bivariate quadratic height field over that plane is
//! solved by weighted least squares.

use nalgebra::{Matrix3, SMatrix, SVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point3;
use crate::spatial::{KdTree, Neighbor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum PolynomialOrder {
    #[default]
    #[serde(rename = "1")]
    Plane,
    #[serde(rename = "2")]
    Quadratic,
}

impl PolynomialOrder {
    pub fn from_degree(d: u32) -> Result<Self> {
        match d {
            1 => Ok(PolynomialOrder::Plane),
            2 => Ok(PolynomialOrder::Quadratic),
            _ => Err(Error::InvalidParams(format!(
                "polynomial order must be 1 or 2, got {d}"
            ))),
        }
    }

    pub fn degree(self) -> u32 {
        match self {
            PolynomialOrder::Plane => 1,
            PolynomialOrder::Quadratic => 2,
        }
    }

    /// Minimum neighborhood size for a well-posed fit.
    pub fn min_neighbors(self) -> usize {
        match self {
            PolynomialOrder::Plane => 3,
            PolynomialOrder::Quadratic => 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlsParams {
    pub search_radius: f64,
    pub polynomial_order: PolynomialOrder,
    /// Kernel scale; `None` means `search_radius`.
    pub gaussian_bandwidth: Option<f64>,
    /// Whether upsamplers also project the input points onto the surface.
    pub project_originals: bool,
}

impl MlsParams {
    pub fn new(search_radius: f64) -> Self {
        Self {
            search_radius,
            polynomial_order: PolynomialOrder::Plane,
            gaussian_bandwidth: None,
            project_originals: true,
        }
    }

    pub fn with_order(mut self, order: PolynomialOrder) -> Self {
        self.polynomial_order = order;
        self
    }

    pub fn with_bandwidth(mut self, bandwidth: f64) -> Self {
        self.gaussian_bandwidth = Some(bandwidth);
        self
    }

    pub fn bandwidth(&self) -> f64 {
        self.gaussian_bandwidth.unwrap_or(self.search_radius)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.search_radius > 0.0 && self.search_radius.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "mls: search_radius = {} must be > 0",
                self.search_radius
            )));
        }
        if !(self.bandwidth() > 0.0) {
            return Err(Error::InvalidParams(format!(
                "mls: gaussian_bandwidth = {} must be > 0",
                self.bandwidth()
            )));
        }
        Ok(())
    }
}

/// The local surrogate surface around one query point.
///
/// `coefficients` hold `[c0, cu, cv, cuu, cuv, cvv]` of the height
/// `w(u, v) = c0 + cu*u + cv*v + cuu*u^2 + cuv*u*v + cvv*v^2` measured along
/// `normal` from `origin`, with `(u, v)` the coordinates along `tangent_u`
/// and `tangent_v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalFit {
    pub origin: Point3,
    pub normal: Point3,
    pub tangent_u: Point3,
    pub tangent_v: Point3,
    pub coefficients: Option<[f64; 6]>,
    pub neighbor_count: usize,
}

impl LocalFit {
    /// Local frame coordinates `(u, v, w)` of `p`.
    pub fn to_local(&self, p: &Point3) -> (f64, f64, f64) {
        let d = *p - self.origin;
        (
            d.dot(&self.tangent_u),
            d.dot(&self.tangent_v),
            d.dot(&self.normal),
        )
    }

    pub fn height(&self, u: f64, v: f64) -> f64 {
        match self.coefficients {
            None => 0.0,
            Some(c) => c[0] + c[1] * u + c[2] * v + c[3] * u * u + c[4] * u * v + c[5] * v * v,
        }
    }

    /// Drops `p` onto the plane, then lifts it by the polynomial height.
    pub fn project(&self, p: &Point3) -> Point3 {
        let (u, v, w) = self.to_local(p);
        let h = self.height(u, v);
        *p + self.normal * (h - w)
    }

    /// Point of the surface above tangent coordinates `(u, v)`.
    pub fn surface_point(&self, u: f64, v: f64) -> Point3 {
        self.origin + self.tangent_u * u + self.tangent_v * v + self.normal * self.height(u, v)
    }
}

/// Fits the local surface from an explicit neighbor list.
pub fn fit_neighbors(
    points: &[Point3],
    neighbors: &[Neighbor],
    params: &MlsParams,
) -> Result<LocalFit> {
    let order = params.polynomial_order;
    if neighbors.len() < order.min_neighbors() {
        return Err(Error::DegenerateNeighborhood(format!(
            "{} neighbors, need {}",
            neighbors.len(),
            order.min_neighbors()
        )));
    }
    let bw2 = params.bandwidth() * params.bandwidth();
    let weights: Vec<f64> = neighbors
        .iter()
        .map(|n| (-(n.distance * n.distance) / bw2).exp())
        .collect();
    let wsum: f64 = weights.iter().sum();
    if !(wsum > 0.0) {
        return Err(Error::DegenerateNeighborhood(
            "all kernel weights vanish".into(),
        ));
    }

    let mut origin = Point3::ORIGIN;
    for (n, w) in neighbors.iter().zip(&weights) {
        origin += points[n.index] * *w;
    }
    let origin = origin / wsum;

    let mut cov = Matrix3::<f64>::zeros();
    for (n, w) in neighbors.iter().zip(&weights) {
        let d = (points[n.index] - origin).to_vector();
        cov += d * d.transpose() * *w;
    }
    cov /= wsum;

    let eig = SymmetricEigen::new(cov);
    let mut idx = [0usize, 1, 2];
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let (l_mid, l_max) = (eig.eigenvalues[idx[1]], eig.eigenvalues[idx[2]]);
    if !(l_max > 0.0) || l_mid <= 1e-12 * l_max {
        return Err(Error::DegenerateNeighborhood(
            "neighbors are coincident or collinear".into(),
        ));
    }
    let normal = orient(Point3::from_vector(
        &eig.eigenvectors.column(idx[0]).into_owned(),
    ))
    .ok_or_else(|| Error::DegenerateNeighborhood("zero normal".into()))?;
    let (tangent_u, tangent_v) = tangent_basis(&normal);

    let mut fit = LocalFit {
        origin,
        normal,
        tangent_u,
        tangent_v,
        coefficients: None,
        neighbor_count: neighbors.len(),
    };
    if order == PolynomialOrder::Quadratic {
        fit.coefficients = Some(fit_quadratic(
            points,
            neighbors,
            &weights,
            &fit,
            params.search_radius,
        )?);
    }
    Ok(fit)
}

fn fit_quadratic(
    points: &[Point3],
    neighbors: &[Neighbor],
    weights: &[f64],
    frame: &LocalFit,
    scale: f64,
) -> Result<[f64; 6]> {
    // solved in coordinates divided by `scale` for conditioning
    let mut ata = SMatrix::<f64, 6, 6>::zeros();
    let mut atb = SVector::<f64, 6>::zeros();
    for (n, w) in neighbors.iter().zip(weights) {
        let (u, v, h) = frame.to_local(&points[n.index]);
        let (u, v, h) = (u / scale, v / scale, h / scale);
        let phi = SVector::<f64, 6>::from([1.0, u, v, u * u, u * v, v * v]);
        ata += phi * phi.transpose() * *w;
        atb += phi * (h * *w);
    }
    let svd = ata.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smax > 0.0) || smin <= 1e-12 * smax {
        return Err(Error::DegenerateNeighborhood(
            "quadratic height field is rank deficient".into(),
        ));
    }
    let c = svd
        .solve(&atb, 0.0)
        .map_err(|e| Error::DegenerateNeighborhood(e.to_string()))?;
    Ok([
        c[0] * scale,
        c[1],
        c[2],
        c[3] / scale,
        c[4] / scale,
        c[5] / scale,
    ])
}

/// Sign convention: the component with the largest magnitude is positive.
fn orient(n: Point3) -> Option<Point3> {
    let n = n.normalized()?;
    let a = n.to_array();
    let mut k = 0;
    for i in 1..3 {
        if a[i].abs() > a[k].abs() {
            k = i;
        }
    }
    Some(if a[k] < 0.0 { -n } else { n })
}

/// Orthonormal `(u, v)` with `u x v = normal`.
pub fn tangent_basis(normal: &Point3) -> (Point3, Point3) {
    let a = normal.to_array();
    let mut k = 0;
    for i in 1..3 {
        if a[i].abs() < a[k].abs() {
            k = i;
        }
    }
    let mut e = [0.0; 3];
    e[k] = 1.0;
    let u = normal
        .cross(&Point3::from(e))
        .normalized()
        .expect("normal is unit length");
    let v = normal.cross(&u);
    (u, v)
}

/// Fits the surface to the neighbors of `query` within `search_radius`.
pub fn fit_local_surface(
    tree: &KdTree<'_>,
    query: &Point3,
    params: &MlsParams,
) -> Result<LocalFit> {
    params.validate()?;
    let nb = tree.radius_search(query, params.search_radius)?;
    fit_neighbors(tree.points(), &nb, params)
}

/// Moves `point` onto the surface fitted around it.
pub fn mls_project(tree: &KdTree<'_>, point: &Point3, params: &MlsParams) -> Result<Point3> {
    Ok(fit_local_surface(tree, point, params)?.project(point))
}
