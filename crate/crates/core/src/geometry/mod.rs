//! Strictly convex implicit-surface domains and their ray geometry.
//!
//! A domain is `{F < 0}` for a smooth convex `F` with nonvanishing
//! gradient on the boundary and positive-definite Hessian, which makes
//! every backward characteristic `x - t zeta` cross the boundary exactly
//! once.  Exit times are bracketed by marching and polished by
//! bisection plus Newton; boundary projections solve the first-order
//! optimality system for the closest point.

mod checks;
mod mesh;

pub use checks::*;
pub use mesh::BoundaryMesh;

use crate::error::{Error, Result};
use crate::vec3::{Mat3, Vec3};

/// Residual tolerance for exit points, relative to the domain scale.
const SURFACE_TOL: f64 = 1e-12;

/// Catalog of supported convex bodies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    /// `|x|^2 = R^2`
    Sphere { radius: f64 },
    /// `(x/a)^2 + (y/b)^2 + (z/c)^2 = 1`
    Ellipsoid { a: f64, b: f64, c: f64 },
    /// Ellipsoid with a quartic convex perturbation:
    /// `(x/a)^2 + (y/b)^2 + (z/c)^2 - 1 + eps ((x/a)^4 + (y/b)^4 + (z/c)^4)`.
    /// The Hessian stays positive definite for any `eps >= 0`.
    Perturbed { a: f64, b: f64, c: f64, eps: f64 },
}

#[derive(Debug, Clone)]
pub struct ConvexDomain {
    shape: Shape,
    diameter: f64,
    /// smallest and largest principal curvature radius over the boundary
    inner_radius: f64,
    outer_radius: f64,
    geodesic_radius: f64,
}

/// Backward exit data for a ray `x - t zeta`.
#[derive(Debug, Clone, Copy)]
pub struct RayHit {
    /// travel time to the boundary
    pub tau_minus: f64,
    /// `x - tau_minus zeta`, on the boundary
    pub exit_point: Vec3,
    /// `|n(exit) . zeta| / |zeta|`, in (0, 1]
    pub normal_component: f64,
}

impl ConvexDomain {
    pub fn sphere(radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::InvalidArgument("sphere radius must be positive".into()));
        }
        Ok(ConvexDomain {
            shape: Shape::Sphere { radius },
            diameter: 2.0 * radius,
            inner_radius: radius,
            outer_radius: radius,
            geodesic_radius: radius / 4.0,
        })
    }

    pub fn unit_sphere() -> Self {
        ConvexDomain::sphere(1.0).unwrap()
    }

    pub fn ellipsoid(a: f64, b: f64, c: f64) -> Result<Self> {
        for s in [a, b, c] {
            if !(0.1..=10.0).contains(&s) {
                return Err(Error::InvalidArgument(format!(
                    "ellipsoid semi-axis {s} outside the supported range [0.1, 10]"
                )));
            }
        }
        let mut axes = [a, b, c];
        axes.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let [lo, _, hi] = axes;
        // extreme principal radii of an ellipsoid sit at the axis ends
        let inner = lo * lo / hi;
        let outer = hi * hi / lo;
        Ok(ConvexDomain {
            shape: Shape::Ellipsoid { a, b, c },
            diameter: 2.0 * hi,
            inner_radius: inner,
            outer_radius: outer,
            geodesic_radius: inner / 4.0,
        })
    }

    pub fn perturbed(a: f64, b: f64, c: f64, eps: f64) -> Result<Self> {
        if eps < 0.0 || eps > 1.0 {
            return Err(Error::InvalidArgument(format!(
                "perturbation strength {eps} outside [0, 1]"
            )));
        }
        let base = ConvexDomain::ellipsoid(a, b, c)?;
        let mut dom = ConvexDomain {
            shape: Shape::Perturbed { a, b, c, eps },
            ..base
        };
        // curvature radii have no closed form here; sample them
        let (inner, outer) = dom.sample_curvature_radii(4000);
        dom.inner_radius = inner * 0.999;
        dom.outer_radius = outer * 1.001;
        dom.geodesic_radius = dom.inner_radius / 4.0;
        dom.diameter = dom.sample_diameter(4000);
        Ok(dom)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    /// Implicit function `F`; negative inside.
    pub fn implicit(&self, p: Vec3) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => p.norm_squared() - radius * radius,
            Shape::Ellipsoid { a, b, c } => {
                (p.x / a).powi(2) + (p.y / b).powi(2) + (p.z / c).powi(2) - 1.0
            }
            Shape::Perturbed { a, b, c, eps } => {
                let (u, v, w) = (p.x / a, p.y / b, p.z / c);
                u * u + v * v + w * w - 1.0 + eps * (u.powi(4) + v.powi(4) + w.powi(4))
            }
        }
    }

    pub fn gradient(&self, p: Vec3) -> Vec3 {
        match self.shape {
            Shape::Sphere { .. } => p * 2.0,
            Shape::Ellipsoid { a, b, c } => {
                Vec3::new(2.0 * p.x / (a * a), 2.0 * p.y / (b * b), 2.0 * p.z / (c * c))
            }
            Shape::Perturbed { a, b, c, eps } => Vec3::new(
                2.0 * p.x / (a * a) + 4.0 * eps * p.x.powi(3) / a.powi(4),
                2.0 * p.y / (b * b) + 4.0 * eps * p.y.powi(3) / b.powi(4),
                2.0 * p.z / (c * c) + 4.0 * eps * p.z.powi(3) / c.powi(4),
            ),
        }
    }

    pub fn hessian(&self, p: Vec3) -> Mat3 {
        match self.shape {
            Shape::Sphere { .. } => Mat3::diagonal(2.0, 2.0, 2.0),
            Shape::Ellipsoid { a, b, c } => {
                Mat3::diagonal(2.0 / (a * a), 2.0 / (b * b), 2.0 / (c * c))
            }
            Shape::Perturbed { a, b, c, eps } => Mat3::diagonal(
                2.0 / (a * a) + 12.0 * eps * p.x * p.x / a.powi(4),
                2.0 / (b * b) + 12.0 * eps * p.y * p.y / b.powi(4),
                2.0 / (c * c) + 12.0 * eps * p.z * p.z / c.powi(4),
            ),
        }
    }

    pub fn contains(&self, p: Vec3) -> bool {
        self.implicit(p) < 0.0
    }

    /// Outward unit normal; `p` is assumed on (or very near) `partial Omega`.
    pub fn outward_normal(&self, p: Vec3) -> Vec3 {
        self.gradient(p).normalized()
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    /// Radius of the largest sphere that rolls inside the boundary
    /// (smallest principal curvature radius).
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    /// Radius of the smallest sphere that rolls outside (largest
    /// principal curvature radius).
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Admissible geodesic radius `1/(4 b)` with `b` the curvature bound.
    pub fn geodesic_radius(&self) -> f64 {
        self.geodesic_radius
    }

    /// Maximum principal curvature over the boundary.
    pub fn curvature_bound(&self) -> f64 {
        1.0 / self.inner_radius
    }

    /// Boundary radius along a unit direction from the origin:
    /// the positive root of `F(r dir) = 0`.
    pub fn radial_boundary(&self, dir: Vec3) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => radius,
            Shape::Ellipsoid { a, b, c } => {
                let q = (dir.x / a).powi(2) + (dir.y / b).powi(2) + (dir.z / c).powi(2);
                1.0 / q.sqrt()
            }
            Shape::Perturbed { a, b, c, eps } => {
                // F(r dir) = q r^2 + eps p r^4 - 1, a quadratic in r^2
                let q = (dir.x / a).powi(2) + (dir.y / b).powi(2) + (dir.z / c).powi(2);
                let p = (dir.x / a).powi(4) + (dir.y / b).powi(4) + (dir.z / c).powi(4);
                if eps * p < 1e-14 {
                    1.0 / q.sqrt()
                } else {
                    let r2 = (-q + (q * q + 4.0 * eps * p).sqrt()) / (2.0 * eps * p);
                    r2.sqrt()
                }
            }
        }
    }

    /// Unique backward exit of the ray `x - t zeta` for interior `x` (or
    /// boundary `x` with the ray entering the domain).
    ///
    /// Bracketing marches with step `diameter/64` along the ray, then
    /// bisection narrows the bracket and Newton polishes the root to
    /// `|F| <= 1e-12` times the domain scale.
    pub fn exit_ray(&self, x: Vec3, zeta: Vec3) -> Result<RayHit> {
        let speed = zeta.norm();
        if speed <= 0.0 || !zeta.is_finite() {
            return Err(Error::InvalidArgument("exit_ray needs a nonzero velocity".into()));
        }
        let scale = self.diameter * self.diameter;
        let f0 = self.implicit(x);
        if f0 > SURFACE_TOL * scale * 10.0 {
            return Err(Error::OutsideDomain(x));
        }
        let g = |t: f64| self.implicit(x - zeta * t);
        let step = self.diameter / (64.0 * speed);

        // starting on the skin: creep forward until strictly inside, so
        // bisection cannot fall back onto the t = 0 root
        let mut t_lo = 0.0;
        if f0 > -SURFACE_TOL * scale {
            let mut s = step;
            let mut entered = false;
            for _ in 0..60 {
                if g(s) < -SURFACE_TOL * scale {
                    t_lo = s;
                    entered = true;
                    break;
                }
                s *= 0.5;
            }
            if !entered {
                // grazing from the boundary: the chord is numerically zero
                let n = self.outward_normal(x);
                return Ok(RayHit {
                    tau_minus: 0.0,
                    exit_point: x,
                    normal_component: (n.dot(zeta) / speed).abs(),
                });
            }
        }

        // march to bracket the outward crossing
        let mut t_hi = t_lo + step;
        let mut guard = 0;
        while g(t_hi) < 0.0 {
            t_lo = t_hi;
            t_hi += step;
            guard += 1;
            if guard > 200 {
                return Err(Error::InvalidArgument(
                    "exit_ray failed to bracket a boundary crossing".into(),
                ));
            }
        }

        // bisection
        for _ in 0..60 {
            let mid = 0.5 * (t_lo + t_hi);
            if g(mid) < 0.0 {
                t_lo = mid;
            } else {
                t_hi = mid;
            }
            if t_hi - t_lo < 1e-14 * (1.0 + t_hi) {
                break;
            }
        }

        // Newton polish
        let mut t = 0.5 * (t_lo + t_hi);
        for _ in 0..8 {
            let y = x - zeta * t;
            let f = self.implicit(y);
            let df = -self.gradient(y).dot(zeta);
            if df.abs() < 1e-300 {
                break;
            }
            let dt = f / df;
            t -= dt;
            if dt.abs() < 1e-16 * (1.0 + t.abs()) {
                break;
            }
        }
        let exit = x - zeta * t;
        debug_assert!(self.implicit(exit).abs() <= 1e-10 * scale);
        let n = self.outward_normal(exit);
        Ok(RayHit {
            tau_minus: t,
            exit_point: exit,
            normal_component: (n.dot(zeta) / speed).abs().min(1.0),
        })
    }

    /// Distance from `x` (inside the closure) to the boundary.
    pub fn boundary_distance(&self, x: Vec3) -> f64 {
        if let Shape::Sphere { radius } = self.shape {
            return (radius - x.norm()).abs();
        }
        x.distance(self.project_to_boundary(x))
    }

    /// Closest boundary point to `x`.
    ///
    /// Foot-point iteration: march along the surface in the tangential
    /// direction of `x - y` until orthogonality, started from the best
    /// radial candidates of a direction scan (a deep interior point of
    /// a triaxial body has several critical foot points; the scan picks
    /// the right basin).
    pub fn project_to_boundary(&self, x: Vec3) -> Vec3 {
        if let Shape::Sphere { radius } = self.shape {
            let r = x.norm();
            if r < 1e-14 {
                return Vec3::new(radius, 0.0, 0.0);
            }
            return x * (radius / r);
        }
        const SCAN: usize = 128;
        let mut candidates: Vec<(f64, Vec3)> = (0..SCAN)
            .map(|i| {
                let dir = fibonacci_direction(i, SCAN);
                let y = dir * self.radial_boundary(dir);
                (x.distance(y), y)
            })
            .collect();
        candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut best = candidates[0];
        for &(_, seed) in candidates.iter().take(4) {
            if let Some(y) = self.foot_point(x, seed) {
                let d = x.distance(y);
                if d < best.0 {
                    best = (d, y);
                }
            }
        }
        best.1
    }

    fn foot_point(&self, x: Vec3, seed: Vec3) -> Option<Vec3> {
        let mut y = seed;
        let mut dist = x.distance(y);
        let tol = 1e-14 * (1.0 + self.diameter);
        for _ in 0..200 {
            let n = self.outward_normal(y);
            let offset = x - y;
            let tangential = offset - n * offset.dot(n);
            if tangential.norm() < tol {
                return Some(y);
            }
            // damped tangential step with reprojection onto the surface
            let mut step = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let mut trial = y + tangential * step;
                for _ in 0..3 {
                    let g = self.gradient(trial);
                    trial -= g * (self.implicit(trial) / g.norm_squared());
                }
                let trial_dist = x.distance(trial);
                if trial_dist <= dist {
                    y = trial;
                    dist = trial_dist;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return Some(y);
            }
        }
        Some(y)
    }

    /// Surface geodesic from `p0` with tangent direction `v/|v|` and
    /// arclength `|v|` (the exponential map on the boundary).
    ///
    /// Classical RK4 on the geodesic equation with per-step projection
    /// back to the surface; step length `geodesic_radius/128`.
    pub fn exp_map(&self, p0: Vec3, v: Vec3) -> Result<Vec3> {
        let len = v.norm();
        if len == 0.0 {
            return Ok(p0);
        }
        if len > self.geodesic_radius * (1.0 + 1e-12) {
            return Err(Error::GeodesicRange {
                len,
                max: self.geodesic_radius,
            });
        }
        let n = self.outward_normal(p0);
        if v.dot(n).abs() / len > 1e-8 {
            return Err(Error::InvalidArgument(format!(
                "exp_map tangent has normal component {:.2e}",
                v.dot(n).abs() / len
            )));
        }
        let h = self.geodesic_radius / 128.0;
        let steps = (len / h).ceil().max(1.0) as usize;
        let h = len / steps as f64;
        let mut y = p0;
        let mut u = v / len;
        // geodesic acceleration: u' = -(u^T H u / |grad F|^2) grad F
        let accel = |y: Vec3, u: Vec3| -> Vec3 {
            let g = self.gradient(y);
            let q = self.hessian(y).quad(u);
            g * (-q / g.norm_squared())
        };
        for _ in 0..steps {
            let k1y = u;
            let k1u = accel(y, u);
            let k2y = u + k1u * (0.5 * h);
            let k2u = accel(y + k1y * (0.5 * h), u + k1u * (0.5 * h));
            let k3y = u + k2u * (0.5 * h);
            let k3u = accel(y + k2y * (0.5 * h), u + k2u * (0.5 * h));
            let k4y = u + k3u * h;
            let k4u = accel(y + k3y * h, u + k3u * h);
            y += (k1y + k2y * 2.0 + k3y * 2.0 + k4y) * (h / 6.0);
            u += (k1u + k2u * 2.0 + k3u * 2.0 + k4u) * (h / 6.0);
            // re-project to the surface and re-tangentialize
            for _ in 0..2 {
                let g = self.gradient(y);
                y -= g * (self.implicit(y) / g.norm_squared());
            }
            let nn = self.outward_normal(y);
            u -= nn * u.dot(nn);
            u = u.normalized();
        }
        Ok(y)
    }

    /// Random tangent frame utility: a unit tangent at `p` rotated by
    /// `angle` within the tangent plane.
    pub fn tangent_at(&self, p: Vec3, angle: f64) -> Vec3 {
        let n = self.outward_normal(p);
        let (e1, e2) = n.orthonormal_frame();
        e1 * angle.cos() + e2 * angle.sin()
    }

    fn sample_curvature_radii(&self, n: usize) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for i in 0..n {
            let dir = fibonacci_direction(i, n);
            let p = dir * self.radial_boundary(dir);
            let (k1, k2) = self.principal_curvatures(p);
            for k in [k1, k2] {
                let r = 1.0 / k;
                lo = lo.min(r);
                hi = hi.max(r);
            }
        }
        (lo, hi)
    }

    fn sample_diameter(&self, n: usize) -> f64 {
        let mut hi = 0.0f64;
        for i in 0..n {
            let dir = fibonacci_direction(i, n);
            let r1 = self.radial_boundary(dir);
            let r2 = self.radial_boundary(-dir);
            hi = hi.max(r1 + r2);
        }
        hi
    }

    /// Principal curvatures of the boundary at `p` (on the surface).
    pub fn principal_curvatures(&self, p: Vec3) -> (f64, f64) {
        let g = self.gradient(p);
        let gn = g.norm();
        let n = g / gn;
        let (e1, e2) = n.orthonormal_frame();
        let h = self.hessian(p);
        let s11 = e1.dot(h.apply(e1)) / gn;
        let s12 = e1.dot(h.apply(e2)) / gn;
        let s22 = e2.dot(h.apply(e2)) / gn;
        let tr = 0.5 * (s11 + s22);
        let disc = (0.25 * (s11 - s22).powi(2) + s12 * s12).sqrt();
        (tr - disc, tr + disc)
    }
}

/// Direction `i` of an `n`-point Fibonacci covering of the sphere.
pub fn fibonacci_direction(i: usize, n: usize) -> Vec3 {
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let t = (i as f64 + 0.5) / n as f64;
    let z = 1.0 - 2.0 * t;
    let s = (1.0 - z * z).sqrt();
    let phi = golden * (i as f64 + 0.5);
    Vec3::new(s * phi.cos(), s * phi.sin(), z)
}
