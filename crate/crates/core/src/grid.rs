//! Truncated velocity-space quadrature.
//!
//! The grid is a spherical product rule: Gauss–Legendre radial nodes on
//! `(0, zeta_max]` times a direction set built from Gauss nodes in the
//! polar cosine and uniform azimuths.  The origin is excluded by
//! construction (several transport factors carry `1/|zeta|`), and the
//! Gaussian tail beyond `zeta_max` is below quadrature error for the
//! default truncation at 6.

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;
use crate::vec3::Vec3;

#[derive(Debug, Clone)]
pub struct VelocityGrid {
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    speeds: Vec<f64>,
    directions: Vec<Vec3>,
    direction_weights: Vec<f64>,
    radial_nodes: Vec<f64>,
    radial_weights: Vec<f64>,
    zeta_max: f64,
    grazing_cutoff: f64,
    n_polar: usize,
    n_azimuth: usize,
    polar_cosines: Vec<f64>,
}

impl VelocityGrid {
    /// Product rule with `n_radial` radial shells and `n_polar x
    /// n_azimuth` directions.
    pub fn product(
        n_radial: usize,
        n_polar: usize,
        n_azimuth: usize,
        zeta_max: f64,
        grazing_cutoff: f64,
    ) -> Result<Self> {
        if n_radial < 2 || n_polar < 2 || n_azimuth < 4 {
            return Err(Error::InvalidArgument(format!(
                "velocity grid too coarse: {n_radial} radial, {n_polar} polar, {n_azimuth} azimuth"
            )));
        }
        if zeta_max <= 0.0 || grazing_cutoff <= 0.0 {
            return Err(Error::InvalidArgument(
                "zeta_max and grazing_cutoff must be positive".into(),
            ));
        }
        let (xr, wr) = gauss_legendre(n_radial);
        let radial_nodes: Vec<f64> = xr.iter().map(|&t| 0.5 * zeta_max * (t + 1.0)).collect();
        let radial_weights: Vec<f64> = wr.iter().map(|&w| 0.5 * zeta_max * w).collect();

        let (xm, wm) = gauss_legendre(n_polar);
        let mut directions = Vec::with_capacity(n_polar * n_azimuth);
        let mut direction_weights = Vec::with_capacity(n_polar * n_azimuth);
        let dphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
        for i in 0..n_polar {
            let mu = xm[i];
            let s = (1.0 - mu * mu).sqrt();
            for j in 0..n_azimuth {
                let phi = dphi * (j as f64 + 0.5);
                directions.push(Vec3::new(s * phi.cos(), s * phi.sin(), mu));
                // solid-angle weight: dmu dphi
                direction_weights.push(wm[i] * dphi);
            }
        }

        let mut nodes = Vec::with_capacity(n_radial * directions.len());
        let mut weights = Vec::with_capacity(nodes.capacity());
        let mut speeds = Vec::with_capacity(nodes.capacity());
        for k in 0..n_radial {
            let r = radial_nodes[k];
            let wr = radial_weights[k] * r * r;
            for (d, wd) in directions.iter().zip(&direction_weights) {
                nodes.push(*d * r);
                weights.push(wr * wd);
                speeds.push(r);
            }
        }
        Ok(VelocityGrid {
            nodes,
            weights,
            speeds,
            directions,
            direction_weights,
            radial_nodes,
            radial_weights,
            zeta_max,
            grazing_cutoff,
            n_polar,
            n_azimuth,
            polar_cosines: xm,
        })
    }

    /// Desk-scale default: 16 radial shells, 6 x 12 directions
    /// (1152 nodes), truncated at `zeta_max = 6`.
    pub fn default_desk() -> Self {
        VelocityGrid::product(16, 6, 12, 6.0, 1e-3).expect("default grid parameters are valid")
    }

    /// Same rule with every resolution doubled; truncation unchanged.
    pub fn doubled(&self) -> Self {
        VelocityGrid::product(
            2 * self.radial_nodes.len(),
            2 * self.n_polar,
            2 * self.n_azimuth,
            self.zeta_max,
            self.grazing_cutoff,
        )
        .expect("doubling preserves validity")
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

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn zeta_max(&self) -> f64 {
        self.zeta_max
    }

    pub fn grazing_cutoff(&self) -> f64 {
        self.grazing_cutoff
    }

    pub fn n_radial(&self) -> usize {
        self.radial_nodes.len()
    }

    pub fn n_polar(&self) -> usize {
        self.n_polar
    }

    pub fn n_azimuth(&self) -> usize {
        self.n_azimuth
    }

    pub fn n_directions(&self) -> usize {
        self.directions.len()
    }

    pub fn directions(&self) -> &[Vec3] {
        &self.directions
    }

    pub fn direction_weights(&self) -> &[f64] {
        &self.direction_weights
    }

    pub fn radial_nodes(&self) -> &[f64] {
        &self.radial_nodes
    }

    pub fn radial_weights(&self) -> &[f64] {
        &self.radial_weights
    }

    /// Node index for radial shell `k` and direction `d`.
    #[inline]
    pub fn node_index(&self, k: usize, d: usize) -> usize {
        k * self.directions.len() + d
    }

    /// Quadrature check value: `sum w e^{-|zeta|^2}` should equal
    /// `pi^{3/2}` up to truncation and rule error.
    pub fn gaussian_mass(&self) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&z, &w)| w * (-z.norm_squared()).exp())
            .sum()
    }

    /// Interpolation stencil in direction space for an arbitrary unit
    /// direction: bilinear in (polar cosine, azimuth) on the product
    /// lattice.  Returns up to four `(direction index, weight)` pairs.
    ///
    /// Used to read tabulated kernel images `K(f)(x, .)` at velocities
    /// off the grid directions but on the radial shells.
    pub fn direction_stencil(&self, dir: Vec3) -> [(usize, f64); 4] {
        let mu = dir.z.clamp(-1.0, 1.0);
        let phi = dir.y.atan2(dir.x).rem_euclid(2.0 * std::f64::consts::PI);
        let dphi = 2.0 * std::f64::consts::PI / self.n_azimuth as f64;
        // azimuth cell: nodes at (j + 0.5) dphi
        let t = phi / dphi - 0.5;
        let j0 = t.floor();
        let fj = t - j0;
        let ja = (j0.rem_euclid(self.n_azimuth as f64)) as usize % self.n_azimuth;
        let jb = (ja + 1) % self.n_azimuth;
        // polar cell: clamp beyond the outermost Gauss nodes
        let cos = &self.polar_cosines;
        let np = cos.len();
        let (ia, ib, fm) = if mu <= cos[0] {
            (0, 0, 0.0)
        } else if mu >= cos[np - 1] {
            (np - 1, np - 1, 0.0)
        } else {
            let mut i = 0;
            while i + 1 < np && cos[i + 1] < mu {
                i += 1;
            }
            (i, i + 1, (mu - cos[i]) / (cos[i + 1] - cos[i]))
        };
        let idx = |ip: usize, jp: usize| ip * self.n_azimuth + jp;
        [
            (idx(ia, ja), (1.0 - fm) * (1.0 - fj)),
            (idx(ia, jb), (1.0 - fm) * fj),
            (idx(ib, ja), fm * (1.0 - fj)),
            (idx(ib, jb), fm * fj),
        ]
    }

    /// Outgoing hemisphere directions around `normal`: Gauss nodes in
    /// the cosine on `(0, 1]` times uniform azimuths.  Weights are
    /// solid-angle weights.
    pub fn half_space_directions(&self, normal: Vec3) -> Vec<HalfDirection> {
        let n_mu = self.n_polar.max(8);
        let n_phi = self.n_azimuth;
        let (xm, wm) = gauss_legendre(n_mu);
        let (e1, e2) = normal.orthonormal_frame();
        let dphi = 2.0 * std::f64::consts::PI / n_phi as f64;
        let mut dirs = Vec::with_capacity(n_mu * n_phi);
        for (i, &mu_t) in xm.iter().enumerate() {
            let mu = 0.5 * (mu_t + 1.0);
            if mu < self.grazing_cutoff {
                continue;
            }
            let wmu = 0.5 * wm[i];
            let s = (1.0 - mu * mu).sqrt();
            for j in 0..n_phi {
                let phi = dphi * (j as f64 + 0.5);
                dirs.push(HalfDirection {
                    dir: normal * mu + e1 * (s * phi.cos()) + e2 * (s * phi.sin()),
                    mu,
                    weight: wmu * dphi,
                });
            }
        }
        dirs
    }

    /// Half-space quadrature rule for boundary moments over
    /// `{zeta . n > 0}`, sharing the radial rule of the grid.  The polar
    /// cosine relative to `normal` uses a Gauss rule on `(0, 1]`, so no
    /// node is grazing; nodes with cosine below the grazing cutoff are
    /// dropped (none at the default resolutions).
    pub fn half_space(&self, normal: Vec3) -> HalfSpaceRule {
        let dirs = self.half_space_directions(normal);
        let mut nodes = Vec::with_capacity(self.radial_nodes.len() * dirs.len());
        for d in &dirs {
            for (k, &r) in self.radial_nodes.iter().enumerate() {
                nodes.push(HalfSpaceNode {
                    zeta: d.dir * r,
                    weight: self.radial_weights[k] * r * r * d.weight,
                    mu: d.mu,
                    speed: r,
                    radial_index: k,
                });
            }
        }
        HalfSpaceRule { nodes }
    }
}

/// Hemisphere direction with its outgoing cosine and solid-angle weight.
#[derive(Debug, Clone, Copy)]
pub struct HalfDirection {
    pub dir: Vec3,
    pub mu: f64,
    pub weight: f64,
}

/// One node of a half-space rule: velocity, quadrature weight
/// (including the `r^2` volume factor), outgoing cosine, speed, and the
/// index of its radial shell in the parent grid.
#[derive(Debug, Clone, Copy)]
pub struct HalfSpaceNode {
    pub zeta: Vec3,
    pub weight: f64,
    pub mu: f64,
    pub speed: f64,
    pub radial_index: usize,
}

#[derive(Debug, Clone)]
pub struct HalfSpaceRule {
    pub nodes: Vec<HalfSpaceNode>,
}
