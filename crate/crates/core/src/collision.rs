//! Linearized collision operator for a hard-sphere gas.
//!
//! The operator splits as `L(f) = -nu(|zeta|) f + K(f)` with
//!
//! ```text
//! nu(|zeta|) = beta0 * integral e^{-|eta|^2} |eta - zeta| deta
//! K(f)(zeta) = integral k(zeta, zeta*) f(zeta*) dzeta*
//! ```
//!
//! The kernel is the classical gain/loss pair
//!
//! ```text
//! k(z, z*) =   c2 |z-z*|^{-1} exp( -|z-z*|^2/4 - ((|z|^2-|z*|^2)/|z-z*|)^2/4 )
//!            - c1 |z-z*|      exp( -(|z|^2+|z*|^2)/2 )
//! ```
//!
//! With `c1 = beta0` and `c2 = 2 beta0` the discrete operator annihilates
//! all five collision invariants, `K(g) = nu g` for
//! `g in {sqrt(M), zeta_i sqrt(M), |zeta|^2 sqrt(M)}`, which pins the
//! constants and serves as the calibration oracle for the quadrature.

use crate::error::{Error, Result};
use crate::grid::VelocityGrid;
use crate::quadrature::{erf, gauss_legendre_on};
use crate::vec3::Vec3;
use rayon::prelude::*;

const SQRT_PI: f64 = 1.772_453_850_905_516;

/// Equilibrium Maxwellian `M(zeta) = pi^{-3/2} e^{-|zeta|^2}`.
#[inline]
pub fn maxwellian(zeta: Vec3) -> f64 {
    std::f64::consts::PI.powf(-1.5) * (-zeta.norm_squared()).exp()
}

/// `sqrt(M)`, the weight in which the linearized operator is symmetric.
#[inline]
pub fn sqrt_maxwellian(zeta: Vec3) -> f64 {
    std::f64::consts::PI.powf(-0.75) * (-0.5 * zeta.norm_squared()).exp()
}

/// Cross-section parameters of the kinetic model.
///
/// Only the hard-sphere exponent `gamma = 1` is supported; the angular
/// factor enters through `beta0 = integral_0^{pi/2} beta(theta) dtheta`.
/// `nu_scale` rescales the collision frequency only (a test hook for
/// weakly and strongly damped regimes).
#[derive(Debug, Clone, Copy)]
pub struct KineticModel {
    gamma: f64,
    beta0: f64,
    loss_coeff: f64,
    gain_coeff: f64,
    nu_scale: f64,
}

impl Default for KineticModel {
    fn default() -> Self {
        KineticModel::hard_sphere(0.5, 1.0)
    }
}

impl KineticModel {
    /// Hard-sphere model with kernel constants derived from `beta0`.
    pub fn hard_sphere(beta0: f64, nu_scale: f64) -> Self {
        KineticModel {
            gamma: 1.0,
            beta0,
            loss_coeff: beta0,
            gain_coeff: 2.0 * beta0,
            nu_scale,
        }
    }

    /// General constructor.  Rejects anything but `gamma = 1` and
    /// non-positive kernel constants.
    pub fn new(
        gamma: f64,
        beta0: f64,
        kernel_constants: (f64, f64),
        nu_scale: f64,
    ) -> Result<Self> {
        if (gamma - 1.0).abs() > 1e-12 {
            return Err(Error::UnsupportedModel(format!(
                "gamma = {gamma}; only the hard-sphere exponent gamma = 1 is supported"
            )));
        }
        let (c1, c2) = kernel_constants;
        if beta0 <= 0.0 || c1 <= 0.0 || c2 <= 0.0 || nu_scale < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "kinetic constants must be positive (beta0={beta0}, c1={c1}, c2={c2}) \
                 and nu_scale non-negative ({nu_scale})"
            )));
        }
        Ok(KineticModel {
            gamma,
            beta0,
            loss_coeff: c1,
            gain_coeff: c2,
            nu_scale,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn beta0(&self) -> f64 {
        self.beta0
    }

    pub fn nu_scale(&self) -> f64 {
        self.nu_scale
    }

    pub fn kernel_constants(&self) -> (f64, f64) {
        (self.loss_coeff, self.gain_coeff)
    }

    pub fn with_nu_scale(mut self, nu_scale: f64) -> Self {
        self.nu_scale = nu_scale;
        self
    }

    /// Collision frequency `nu(|zeta|)`, evaluated in closed form:
    ///
    /// ```text
    /// nu(c) = beta0 * pi * ( e^{-c^2} + sqrt(pi) (c + 1/(2c)) erf(c) )
    /// ```
    ///
    /// with limit `2 pi beta0` at `c = 0`.  Monotone nondecreasing and
    /// comparable to `1 + c`.
    pub fn collision_frequency(&self, speed: f64) -> Result<f64> {
        if speed < 0.0 || !speed.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "collision frequency needs a finite speed >= 0, got {speed}"
            )));
        }
        Ok(self.nu_scale * self.beta0 * nu_shape(speed))
    }

    /// Infallible variant for speeds already known to be valid.
    #[inline]
    pub fn nu(&self, speed: f64) -> f64 {
        self.nu_scale * self.beta0 * nu_shape(speed)
    }

    /// Collision kernel `k(zeta, zeta*)`.  Symmetric in its arguments;
    /// singular like `|zeta - zeta*|^{-1}` on the diagonal.
    pub fn kernel(&self, zeta: Vec3, zeta_star: Vec3) -> Result<f64> {
        let d = zeta - zeta_star;
        let u2 = d.norm_squared();
        if u2 < 1e-28 {
            return Err(Error::CoincidentVelocities);
        }
        Ok(self.kernel_unchecked(zeta, zeta_star))
    }

    #[inline]
    pub(crate) fn kernel_unchecked(&self, zeta: Vec3, zeta_star: Vec3) -> f64 {
        self.gain_kernel(zeta, zeta_star) - self.loss_kernel(zeta, zeta_star)
    }

    #[inline]
    pub(crate) fn gain_kernel(&self, zeta: Vec3, zeta_star: Vec3) -> f64 {
        let u = (zeta - zeta_star).norm();
        let chi = (zeta.norm_squared() - zeta_star.norm_squared()) / u;
        self.gain_coeff / u * (-0.25 * u * u - 0.25 * chi * chi).exp()
    }

    #[inline]
    pub(crate) fn loss_kernel(&self, zeta: Vec3, zeta_star: Vec3) -> f64 {
        let u = (zeta - zeta_star).norm();
        self.loss_coeff * u * (-0.5 * (zeta.norm_squared() + zeta_star.norm_squared())).exp()
    }

    /// Analytic gradient of the kernel in its first argument.
    pub fn kernel_velocity_gradient(&self, zeta: Vec3, zeta_star: Vec3) -> Result<Vec3> {
        let d = zeta - zeta_star;
        let u2 = d.norm_squared();
        if u2 < 1e-28 {
            return Err(Error::CoincidentVelocities);
        }
        let u = u2.sqrt();
        let chi = (zeta.norm_squared() - zeta_star.norm_squared()) / u;
        let k2 = self.gain_coeff / u * (-0.25 * u2 - 0.25 * chi * chi).exp();
        // d/dzeta [ -ln u - u^2/4 - chi^2/4 ] with
        //   du = d/u,  dchi = 2 zeta / u - chi d / u^2
        let grad2 = (d * (-(1.0 / u + 0.5 * u) / u + 0.5 * chi * chi / u2)
            - zeta * (chi / u))
            * k2;
        let k1 = self.loss_kernel(zeta, zeta_star);
        let grad1 = (d / u2 - zeta) * k1;
        Ok(grad2 - grad1)
    }

    /// Total mass of the gain kernel, `integral k2(zeta, .) dzeta*`,
    /// reduced to a 1-D integral.  Supplies the diagonal of the
    /// singularity-subtracted quadrature.
    pub fn gain_kernel_mass(&self, speed: f64) -> f64 {
        let c = speed;
        if c < 1e-6 {
            // limit 4 pi c2, next order O(c^2)
            return 4.0 * std::f64::consts::PI * self.gain_coeff;
        }
        let (u, w) = gauss_legendre_on(96, 0.0, 18.0);
        let mut acc = 0.0;
        for (ui, wi) in u.iter().zip(&w) {
            let f = ui
                * (-0.25 * ui * ui).exp()
                * (erf(0.5 * (ui + 2.0 * c)) - erf(0.5 * (ui - 2.0 * c)));
            acc += wi * f;
        }
        std::f64::consts::PI.powf(1.5) * self.gain_coeff / c * acc
    }

    /// Quadrature approximation of `K(f)(zeta) = integral k(zeta, .) f`.
    ///
    /// The `|zeta - zeta*|^{-1}` singularity is handled by subtraction:
    /// the gain part integrates `f(zeta)` exactly through
    /// [`gain_kernel_mass`], and the grid only sees the difference
    /// `f(zeta*) - f(zeta)`, which removes the singular contribution.
    /// Grid nodes coinciding with `zeta` drop out.
    pub fn apply_k<F>(&self, grid: &VelocityGrid, mut f_slice: F, zeta: Vec3) -> f64
    where
        F: FnMut(Vec3) -> f64,
    {
        let f_here = f_slice(zeta);
        let mut acc = self.gain_kernel_mass(zeta.norm()) * f_here;
        for (j, &node) in grid.nodes().iter().enumerate() {
            let w = grid.weights()[j];
            let d2 = (zeta - node).norm_squared();
            if d2 < 1e-24 {
                continue;
            }
            let fj = f_slice(node);
            acc += w
                * (self.gain_kernel(zeta, node) * (fj - f_here)
                    - self.loss_kernel(zeta, node) * fj);
        }
        acc
    }

    /// Dense matrix `A` with `(A f)_i ~ K(f)(zeta_i)` for `f` sampled on
    /// the grid nodes.  Row-major, `n x n`.
    pub fn kernel_matrix(&self, grid: &VelocityGrid) -> KernelMatrix {
        let n = grid.len();
        let nodes = grid.nodes();
        let weights = grid.weights();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let zi = nodes[i];
                let mut row = vec![0.0; n];
                let mut gain_sum = 0.0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let g = self.gain_kernel(zi, nodes[j]);
                    row[j] = weights[j] * (g - self.loss_kernel(zi, nodes[j]));
                    gain_sum += weights[j] * g;
                }
                row[i] = self.gain_kernel_mass(zi.norm()) - gain_sum;
                row
            })
            .collect();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            data.extend_from_slice(&row);
        }
        KernelMatrix { n, data }
    }
}

/// Shape function of the collision frequency (`beta0 = 1`, `nu_scale = 1`).
fn nu_shape(c: f64) -> f64 {
    use std::f64::consts::PI;
    if c < 1e-6 {
        return PI * (2.0 + 2.0 * c * c / 3.0);
    }
    PI * ((-c * c).exp() + SQRT_PI * (c + 0.5 / c) * erf(c))
}

/// Precomputed discrete collision operator on a fixed velocity grid.
pub struct KernelMatrix {
    n: usize,
    data: Vec<f64>,
}

impl KernelMatrix {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// `out = A f` for one velocity slice.
    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        debug_assert_eq!(f.len(), self.n);
        debug_assert_eq!(out.len(), self.n);
        for i in 0..self.n {
            let row = self.row(i);
            let mut acc = 0.0;
            for j in 0..self.n {
                acc += row[j] * f[j];
            }
            out[i] = acc;
        }
    }
}

/// One row of the decay table: the Gaussian-weighted singular integral
/// at speed `|eta|` and its product with `(1 + |eta|)`.
#[derive(Debug, Clone, Copy)]
pub struct DecayRow {
    pub speed: f64,
    pub integral: f64,
    pub weighted: f64,
}

/// Evaluates
///
/// ```text
/// J(eta) = integral |eta - z|^{-(3-eps)} e^{ -a1 |eta-z|^2 - a2 ((|eta|^2-|z|^2)/|eta-z|)^2 } dz
/// ```
///
/// for each speed in `speeds` and returns the products `(1+|eta|) J(eta)`
/// whose boundedness is the assertion.  Reduced to a 2-D `(u, mu)`
/// integral; the `u^{eps-1}` endpoint singularity is absorbed by the
/// substitution `u = t^{1/eps}`.
pub fn decay_table(eps: f64, a1: f64, a2: f64, speeds: &[f64]) -> Result<Vec<DecayRow>> {
    if eps <= 0.0 || a1 <= 0.0 || a2 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "decay_table needs eps, a1, a2 > 0 (got {eps}, {a1}, {a2})"
        )));
    }
    let u_max: f64 = 30.0 / a1.sqrt().min(1.0);
    let (t, wt) = gauss_legendre_on(160, 0.0, u_max.powf(eps));
    let rows = speeds
        .iter()
        .map(|&c| {
            if c < 0.0 {
                return Err(Error::InvalidArgument(format!("negative speed {c}")));
            }
            let mut acc = 0.0;
            for (ti, wi) in t.iter().zip(&wt) {
                let u = ti.powf(1.0 / eps);
                // angular factor: integral over mu of e^{-a2 (2 c mu + u)^2}
                let ang = if c < 1e-9 {
                    2.0 * (-a2 * u * u).exp()
                } else {
                    let s = a2.sqrt();
                    SQRT_PI / (4.0 * c * s)
                        * (erf(s * (u + 2.0 * c)) - erf(s * (u - 2.0 * c)))
                };
                // u^{eps-1} du = dt / eps under u = t^{1/eps}
                acc += wi * (-a1 * u * u).exp() * ang / eps;
            }
            let integral = 2.0 * std::f64::consts::PI * acc;
            Ok(DecayRow {
                speed: c,
                integral,
                weighted: (1.0 + c) * integral,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VelocityGrid;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_velocity(rng: &mut ChaCha8Rng, scale: f64) -> Vec3 {
        Vec3::new(
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
            rng.gen_range(-scale..scale),
        )
    }

    #[test]
    fn maxwellian_values() {
        assert_relative_eq!(
            maxwellian(Vec3::new(0.0, 0.0, 0.0)),
            std::f64::consts::PI.powf(-1.5),
            max_relative = 1e-14
        );
        assert_relative_eq!(
            maxwellian(Vec3::new(1.0, 0.0, 0.0)),
            std::f64::consts::PI.powf(-1.5) * (-1.0f64).exp(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn maxwellian_normalizes_on_grid() {
        let grid = VelocityGrid::default_desk();
        let total: f64 = grid
            .nodes()
            .iter()
            .zip(grid.weights())
            .map(|(&z, &w)| w * maxwellian(z))
            .sum();
        assert_relative_eq!(total, 1.0, max_relative = 1e-5);
    }

    /// Independent 1-D radial oracle for nu: the angular average of
    /// |eta - zeta| over the sphere of radius r is
    /// ((r+c)^3 - |r-c|^3) / (3 r c).  The integrand kinks at r = c, so
    /// the quadrature splits there.
    fn nu_radial_oracle(c: f64, beta0: f64) -> f64 {
        let integrate = |a: f64, b: f64| {
            let (r, w) = gauss_legendre_on(120, a, b);
            let mut acc = 0.0;
            for (ri, wi) in r.iter().zip(&w) {
                let ang = if c < 1e-12 {
                    2.0 * ri
                } else {
                    ((ri + c).powi(3) - (ri - c).abs().powi(3)) / (3.0 * ri * c)
                };
                acc += wi * ri * ri * (-ri * ri).exp() * ang;
            }
            acc
        };
        let split = c.clamp(1e-9, 13.0);
        beta0 * 2.0 * std::f64::consts::PI * (integrate(0.0, split) + integrate(split, 14.0))
    }

    #[test]
    fn collision_frequency_closed_form_matches_quadrature() {
        let model = KineticModel::default();
        for c in [0.0, 0.17, 0.5, 1.0, 2.3, 4.0, 6.0] {
            let got = model.collision_frequency(c).unwrap();
            let want = nu_radial_oracle(c, 0.5);
            assert_relative_eq!(got, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn collision_frequency_at_rest_is_pi() {
        let model = KineticModel::default();
        assert_relative_eq!(
            model.collision_frequency(0.0).unwrap(),
            std::f64::consts::PI,
            max_relative = 1e-12
        );
    }

    #[test]
    fn collision_frequency_scaling_and_errors() {
        let zero = KineticModel::hard_sphere(0.5, 0.0);
        for c in [0.0, 1.0, 5.0] {
            assert_eq!(zero.collision_frequency(c).unwrap(), 0.0);
        }
        assert!(KineticModel::default().collision_frequency(-1.0).is_err());
        assert!(KineticModel::new(0.5, 0.5, (0.5, 1.0), 1.0).is_err());
    }

    #[test]
    fn collision_frequency_linear_envelope() {
        // nu0 (1+c) <= nu <= nu1 (1+c) with finite positive nu0, nu1
        let model = KineticModel::default();
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        let mut prev = 0.0;
        for k in 0..=120 {
            let c = 6.0 * k as f64 / 120.0;
            let nu = model.collision_frequency(c).unwrap();
            assert!(nu >= prev, "nu must be nondecreasing");
            prev = nu;
            let ratio = nu / (1.0 + c);
            lo = lo.min(ratio);
            hi = hi.max(ratio);
        }
        assert!(lo > 0.0 && hi.is_finite());
        assert!(hi / lo < 3.0, "envelope spread {} too wide", hi / lo);
    }

    #[test]
    fn kernel_is_symmetric() {
        let model = KineticModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let a = random_velocity(&mut rng, 3.0);
            let b = random_velocity(&mut rng, 3.0);
            if (a - b).norm() < 1e-6 {
                continue;
            }
            let kab = model.kernel(a, b).unwrap();
            let kba = model.kernel(b, a).unwrap();
            assert_relative_eq!(kab, kba, max_relative = 1e-12);
        }
    }

    #[test]
    fn kernel_rejects_coincident_arguments() {
        let model = KineticModel::default();
        let z = Vec3::new(0.3, -0.2, 1.0);
        assert!(matches!(
            model.kernel(z, z),
            Err(Error::CoincidentVelocities)
        ));
        assert!(model.kernel_velocity_gradient(z, z).is_err());
    }

    #[test]
    fn kernel_envelope_bound() {
        // |k| <= C1 |z-z*|^{-1} exp(-(1-delta)/4 [ u^2 + chi^2 ]) with delta = 0.5
        let model = KineticModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let delta = 0.5;
        let mut c1_fit = 0.0f64;
        for _ in 0..2000 {
            let a = random_velocity(&mut rng, 4.0);
            let b = random_velocity(&mut rng, 4.0);
            let u = (a - b).norm();
            if u < 1e-4 {
                continue;
            }
            let chi = (a.norm_squared() - b.norm_squared()) / u;
            let envelope =
                (1.0 / u) * (-(1.0 - delta) / 4.0 * (u * u + chi * chi)).exp();
            let k = model.kernel(a, b).unwrap().abs();
            c1_fit = c1_fit.max(k / envelope);
        }
        assert!(c1_fit.is_finite() && c1_fit > 0.0);
        // the fitted constant stays moderate; blow-up would indicate a
        // wrong exponent in the kernel
        assert!(c1_fit < 10.0, "fitted C1 = {c1_fit}");
    }

    #[test]
    fn kernel_gradient_matches_finite_differences() {
        let model = KineticModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let h = 1e-5;
        let mut checked = 0;
        while checked < 100 {
            let a = random_velocity(&mut rng, 3.0);
            let b = random_velocity(&mut rng, 3.0);
            if (a - b).norm() < 0.3 {
                continue;
            }
            let grad = model.kernel_velocity_gradient(a, b).unwrap();
            for i in 0..3 {
                let e = Vec3::axis(i);
                let kp = model.kernel(a + e * h, b).unwrap();
                let km = model.kernel(a - e * h, b).unwrap();
                let fd = (kp - km) / (2.0 * h);
                let scale = grad.norm().max(1e-10);
                assert!(
                    (grad.component(i) - fd).abs() / scale < 1e-5,
                    "gradient mismatch: analytic {} vs fd {}",
                    grad.component(i),
                    fd
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn kernel_gradient_envelope_bound() {
        let model = KineticModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let delta = 0.5;
        let mut c2_fit = 0.0f64;
        for _ in 0..2000 {
            let a = random_velocity(&mut rng, 4.0);
            let b = random_velocity(&mut rng, 4.0);
            let u = (a - b).norm();
            if u < 1e-3 {
                continue;
            }
            let chi = (a.norm_squared() - b.norm_squared()) / u;
            let envelope = (1.0 + a.norm()) / (u * u)
                * (-(1.0 - delta) / 4.0 * (u * u + chi * chi)).exp();
            let g = model.kernel_velocity_gradient(a, b).unwrap().norm();
            c2_fit = c2_fit.max(g / envelope);
        }
        assert!(c2_fit.is_finite() && c2_fit < 20.0, "fitted C2 = {c2_fit}");
    }

    #[test]
    fn gradient_antisymmetric_speed_case() {
        // equal speeds kill the chi^2 term in the gain exponent
        let model = KineticModel::default();
        let a = Vec3::new(1.3, 0.0, 0.4);
        let b = Vec3::new(-1.3, 0.0, 0.4);
        let u = (a - b).norm();
        let gain = model.gain_kernel(a, b);
        let expect = model.kernel_constants().1 / u * (-0.25 * u * u).exp();
        assert_relative_eq!(gain, expect, max_relative = 1e-13);
    }

    #[test]
    fn apply_k_linearity_zero() {
        let model = KineticModel::default();
        let grid = VelocityGrid::default_desk();
        let z = Vec3::new(0.7, -0.3, 1.1);
        assert_eq!(model.apply_k(&grid, |_| 0.0, z), 0.0);
    }

    #[test]
    fn apply_k_collision_invariants_on_grid() {
        let model = KineticModel::default();
        let grid = VelocityGrid::default_desk();
        let matrix = model.kernel_matrix(&grid);
        let n = grid.len();
        let invariants: Vec<(&str, Vec<f64>)> = vec![
            (
                "sqrtM",
                grid.nodes().iter().map(|&z| sqrt_maxwellian(z)).collect(),
            ),
            (
                "z1 sqrtM",
                grid.nodes()
                    .iter()
                    .map(|&z| z.x * sqrt_maxwellian(z))
                    .collect(),
            ),
            (
                "|z|^2 sqrtM",
                grid.nodes()
                    .iter()
                    .map(|&z| z.norm_squared() * sqrt_maxwellian(z))
                    .collect(),
            ),
        ];
        for (name, f) in invariants {
            let mut out = vec![0.0; n];
            matrix.apply(&f, &mut out);
            let mut worst = 0.0f64;
            let mut scale = 0.0f64;
            for i in 0..n {
                let want = model.nu(grid.speeds()[i]) * f[i];
                worst = worst.max((out[i] - want).abs());
                scale = scale.max(want.abs());
            }
            assert!(
                worst / scale < 1e-2,
                "{name}: invariance error {} at default grid",
                worst / scale
            );
        }
    }

    #[test]
    fn apply_k_matches_matrix_route() {
        let model = KineticModel::default();
        let grid = VelocityGrid::default_desk();
        let matrix = model.kernel_matrix(&grid);
        let f: Vec<f64> = grid
            .nodes()
            .iter()
            .map(|&z| (0.3 + z.x) * sqrt_maxwellian(z))
            .collect();
        let mut out = vec![0.0; grid.len()];
        matrix.apply(&f, &mut out);
        for &i in &[0usize, 57, 311, grid.len() - 1] {
            let z = grid.nodes()[i];
            let direct = model.apply_k(
                &grid,
                |zz| (0.3 + zz.x) * sqrt_maxwellian(zz),
                z,
            );
            assert_relative_eq!(direct, out[i], max_relative = 1e-12, epsilon = 1e-14);
        }
    }

    #[test]
    fn decay_table_radial_oracle_at_rest() {
        // eta = 0 reduces to 4 pi int r^{eps-1} e^{-(a1+a2) r^2} dr
        let rows = decay_table(1.0, 0.25, 0.25, &[0.0]).unwrap();
        let (r, w) = gauss_legendre_on(200, 0.0, 40.0);
        let oracle: f64 = 4.0
            * std::f64::consts::PI
            * r.iter()
                .zip(&w)
                .map(|(&ri, &wi)| wi * (-0.5 * ri * ri).exp())
                .sum::<f64>();
        assert_relative_eq!(rows[0].integral, oracle, max_relative = 1e-8);
        assert!(rows[0].integral.is_finite() && rows[0].integral > 0.0);
    }

    #[test]
    fn decay_products_are_bounded() {
        let rows = decay_table(1.0, 0.25, 0.25, &[0.0, 1.0, 2.0, 4.0, 8.0]).unwrap();
        let lo = rows.iter().map(|r| r.weighted).fold(f64::INFINITY, f64::min);
        let hi = rows.iter().map(|r| r.weighted).fold(0.0, f64::max);
        assert!(hi / lo < 5.0, "weighted products spread {}", hi / lo);
    }

    #[test]
    fn decay_table_rejects_bad_parameters() {
        assert!(decay_table(0.0, 0.25, 0.25, &[1.0]).is_err());
        assert!(decay_table(1.0, -1.0, 0.25, &[1.0]).is_err());
    }
}
