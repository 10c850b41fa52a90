//! Boundary quadrature meshes.
//!
//! Nodes come from a Fibonacci covering of directions, pushed radially
//! onto the surface.  The surface weight of a node is the spherical
//! solid-angle weight times `r^2 / (n . omega)`, the Jacobian of the
//! radial parametrization, so the weights sum to the boundary area.

use super::ConvexDomain;
use crate::interp::PointCloud;
use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub struct BoundaryMesh {
    nodes: Vec<Vec3>,
    normals: Vec<Vec3>,
    weights: Vec<f64>,
    cloud: PointCloud,
}

impl BoundaryMesh {
    pub fn fibonacci(domain: &ConvexDomain, n: usize) -> Self {
        assert!(n >= 16, "boundary mesh needs at least 16 nodes");
        let mut nodes = Vec::with_capacity(n);
        let mut normals = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        let w_dir = 4.0 * std::f64::consts::PI / n as f64;
        for i in 0..n {
            let dir = super::fibonacci_direction(i, n);
            let r = domain.radial_boundary(dir);
            let p = dir * r;
            let nrm = domain.outward_normal(p);
            let cosine = nrm.dot(dir).max(1e-6);
            nodes.push(p);
            normals.push(nrm);
            weights.push(w_dir * r * r / cosine);
        }
        let cloud = PointCloud::build_auto(nodes.clone());
        BoundaryMesh {
            nodes,
            normals,
            weights,
            cloud,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Total quadrature weight; approximates the boundary area.
    pub fn area(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Index of the node closest to `x`.
    pub fn nearest(&self, x: Vec3) -> usize {
        self.cloud.nearest_k(x, 1).first().expect("nonempty mesh").0
    }

    /// The `k` nearest nodes with distances, closest first.
    pub fn nearest_k(&self, x: Vec3, k: usize) -> crate::interp::NearestIter {
        self.cloud.nearest_k(x, k)
    }

    /// Local node spacing near `x`: distance from the nearest node to
    /// its own nearest neighbor.
    pub fn local_spacing(&self, x: Vec3) -> f64 {
        let i = self.nearest(x);
        self.cloud
            .nearest_k(self.nodes[i], 2)
            .find(|&(j, _)| j != i)
            .map(|(_, d)| d)
            .unwrap_or(f64::INFINITY)
    }

    /// Inverse-distance interpolation of nodal values over the three
    /// nearest nodes (adequate for fields no smoother than Hoelder).
    pub fn interpolate(&self, values: &[f64], x: Vec3) -> f64 {
        debug_assert_eq!(values.len(), self.nodes.len());
        let neighbors = self.cloud.nearest_k(x, 3);
        if let Some((i, d)) = neighbors.first() {
            if d < 1e-12 {
                return values[i];
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, d) in neighbors {
            let w = 1.0 / (d * d);
            num += w * values[i];
            den += w;
        }
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sphere_mesh_area_and_residuals() {
        let dom = ConvexDomain::unit_sphere();
        let mesh = BoundaryMesh::fibonacci(&dom, 4000);
        assert_relative_eq!(mesh.area(), 4.0 * std::f64::consts::PI, max_relative = 1e-9);
        for (&p, &n) in mesh.nodes().iter().zip(mesh.normals()).step_by(37) {
            assert!(dom.implicit(p).abs() < 1e-12);
            assert_relative_eq!(n.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ellipsoid_mesh_area_converges() {
        let dom = ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap();
        let coarse = BoundaryMesh::fibonacci(&dom, 4000).area();
        let fine = BoundaryMesh::fibonacci(&dom, 16000).area();
        assert!(
            (coarse - fine).abs() / fine < 1e-3,
            "area not converged: {coarse} vs {fine}"
        );
        // Thomsen's approximation for ellipsoid area, good to ~1%
        let p = 1.6075;
        let (a, b, c) = (1.0f64, 1.5f64, 2.0f64);
        let approx_area = 4.0
            * std::f64::consts::PI
            * (((a * b).powf(p) + (a * c).powf(p) + (b * c).powf(p)) / 3.0).powf(1.0 / p);
        assert!((fine - approx_area).abs() / approx_area < 0.02);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let dom = ConvexDomain::unit_sphere();
        let mesh = BoundaryMesh::fibonacci(&dom, 500);
        let values: Vec<f64> = mesh.nodes().iter().map(|p| p.z * p.z).collect();
        for i in (0..mesh.len()).step_by(41) {
            assert_eq!(mesh.interpolate(&values, mesh.nodes()[i]), values[i]);
        }
    }
}
