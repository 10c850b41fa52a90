//! Diffuse-reflection wall flux.
//!
//! The outgoing flux `psi(x) = 2 sqrt(pi) int_{zeta.n>0} f |zeta.n| sqrt(M)`
//! decomposes into a boundary-temperature part, a re-emission part and a
//! collision-source part,
//!
//! ```text
//! psi = B_T + B_psi[psi] + D_f[f],
//! ```
//!
//! solved by fixed-point iteration (the re-emission map is damped by
//! `e^{-nu tau} < 1`).  The re-emission and temperature parts are also
//! evaluated in their surface-integral form, where the velocity
//! half-space is traded for boundary points and a scalar speed
//! parameter; the two routes discretize the same integral and their
//! agreement is one of the standing cross-checks.

use crate::collision::{maxwellian, sqrt_maxwellian};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::transport::{KTable, Scene};
use crate::vec3::Vec3;
use rayon::prelude::*;

/// Scalar flux on the boundary mesh.
#[derive(Debug, Clone)]
pub struct WallFlux {
    values: Vec<f64>,
}

impl WallFlux {
    pub fn new(values: Vec<f64>) -> Self {
        WallFlux { values }
    }

    pub fn constant(c: f64, n: usize) -> Self {
        WallFlux {
            values: vec![c; n],
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Boundary temperature profiles with analytic tangential gradients.
#[derive(Debug, Clone, Copy)]
pub enum BoundaryTemperature {
    Constant(f64),
    /// `t0 + g . x`
    Linear { t0: f64, gradient: Vec3 },
    /// `t0 + amplitude exp(-|x - center|^2 / width^2)`
    Bump {
        t0: f64,
        amplitude: f64,
        center: Vec3,
        width: f64,
    },
}

impl BoundaryTemperature {
    pub fn eval(&self, x: Vec3) -> f64 {
        match *self {
            BoundaryTemperature::Constant(t) => t,
            BoundaryTemperature::Linear { t0, gradient } => t0 + gradient.dot(x),
            BoundaryTemperature::Bump {
                t0,
                amplitude,
                center,
                width,
            } => t0 + amplitude * (-(x - center).norm_squared() / (width * width)).exp(),
        }
    }

    /// Ambient gradient projected onto the tangent plane at `x`.
    pub fn tangential_gradient(&self, normal: Vec3, x: Vec3) -> Vec3 {
        let g = match *self {
            BoundaryTemperature::Constant(_) => Vec3::default(),
            BoundaryTemperature::Linear { gradient, .. } => gradient,
            BoundaryTemperature::Bump {
                amplitude,
                center,
                width,
                ..
            } => {
                (x - center)
                    * (-2.0 * amplitude / (width * width)
                        * (-(x - center).norm_squared() / (width * width)).exp())
            }
        };
        g - normal * g.dot(normal)
    }

    /// Sampled boundedness check of the profile and its tangential
    /// derivatives.
    pub fn check_bounded(&self, domain: &crate::geometry::ConvexDomain) -> Result<()> {
        for i in 0..64 {
            let dir = crate::geometry::fibonacci_direction(i, 64);
            let p = dir * domain.radial_boundary(dir);
            let t = self.eval(p);
            let g = self.tangential_gradient(domain.outward_normal(p), p);
            if !t.is_finite() || !g.is_finite() {
                return Err(Error::InvalidArgument(
                    "boundary temperature or its gradient is not finite".into(),
                ));
            }
        }
        if let BoundaryTemperature::Bump { width, .. } = self {
            if *width <= 0.0 {
                return Err(Error::InvalidArgument("bump width must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Outgoing half-space moment `2 sqrt(pi) int_{zeta.n>0} f |zeta.n| sqrt(M)`
/// of a velocity slice at a boundary point.
pub fn psi_moment(scene: &Scene, f: impl Fn(Vec3) -> f64, normal: Vec3) -> f64 {
    let rule = scene.grid.half_space(normal);
    let mut acc = 0.0;
    for n in &rule.nodes {
        acc += n.weight * f(n.zeta) * n.mu * n.speed * sqrt_maxwellian(n.zeta);
    }
    2.0 * std::f64::consts::PI.sqrt() * acc
}

/// Boundary-temperature flux `B_T` at mesh node `i` (velocity form).
pub fn temperature_flux(scene: &Scene, temperature: &BoundaryTemperature, i: usize) -> f64 {
    let cache = scene.boundary_cache(i);
    let mut acc = 0.0;
    for (n, hit) in cache.half.nodes.iter().zip(&cache.rays) {
        let nu = scene.model.nu(n.speed);
        acc += n.weight
            * temperature.eval(hit.exit_point)
            * (n.speed * n.speed - 2.0)
            * maxwellian(n.zeta)
            * (-nu * hit.tau_minus).exp()
            * n.mu
            * n.speed;
    }
    2.0 * std::f64::consts::PI.sqrt() * acc
}

/// `B_T` at an arbitrary boundary point.
pub fn temperature_flux_at(
    scene: &Scene,
    temperature: &BoundaryTemperature,
    x: Vec3,
) -> Result<f64> {
    let normal = scene.domain.outward_normal(x);
    let rule = scene.grid.half_space(normal);
    let mut acc = 0.0;
    for n in &rule.nodes {
        let hit = scene.domain.exit_ray(x, n.zeta)?;
        let nu = scene.model.nu(n.speed);
        acc += n.weight
            * temperature.eval(hit.exit_point)
            * (n.speed * n.speed - 2.0)
            * maxwellian(n.zeta)
            * (-nu * hit.tau_minus).exp()
            * n.mu
            * n.speed;
    }
    Ok(2.0 * std::f64::consts::PI.sqrt() * acc)
}

/// Re-emission flux `B_psi[psi]` at an arbitrary boundary point
/// (velocity form, interpolating `psi` at the exit points).
pub fn reemission_flux_velocity(scene: &Scene, psi: &WallFlux, x: Vec3) -> Result<f64> {
    let normal = scene.domain.outward_normal(x);
    let rule = scene.grid.half_space(normal);
    let mut acc = 0.0;
    for n in &rule.nodes {
        let hit = scene.domain.exit_ray(x, n.zeta)?;
        let nu = scene.model.nu(n.speed);
        acc += n.weight
            * scene.mesh.interpolate(psi.values(), hit.exit_point)
            * maxwellian(n.zeta)
            * (-nu * hit.tau_minus).exp()
            * n.mu
            * n.speed;
    }
    Ok(2.0 * std::f64::consts::PI.sqrt() * acc)
}

/// Speed integral of the surface form:
/// `int_0^inf e^{-z^2} e^{-nu(z) rho / z} poly(z) z^3 dz`.
fn surface_speed_integral(scene: &Scene, rho: f64, energy_weight: bool) -> f64 {
    let (z, w) = gauss_legendre_on(40, 0.0, 8.0);
    let mut acc = 0.0;
    for (&zi, &wi) in z.iter().zip(&w) {
        if zi < 1e-12 {
            continue;
        }
        let nu = scene.model.nu(zi);
        let poly = if energy_weight { zi * zi - 2.0 } else { 1.0 };
        acc += wi * (-zi * zi - nu * rho / zi).exp() * poly * zi * zi * zi;
    }
    acc
}

fn surface_form(scene: &Scene, x: Vec3, value_at: impl Fn(usize) -> f64, energy_weight: bool) -> f64 {
    let nx = scene.domain.outward_normal(x);
    let mut acc = 0.0;
    for j in 0..scene.mesh.len() {
        let y = scene.mesh.nodes()[j];
        let d = x - y;
        let rho2 = d.norm_squared();
        let geom = if rho2 < 1e-18 {
            // coincident node: chord-normal products tend to the squared
            // half-curvature (tangency estimate); use the mean curvature
            let (k1, k2) = scene.domain.principal_curvatures(x);
            let km = 0.5 * (k1 + k2);
            0.25 * km * km
        } else {
            d.dot(nx) * d.dot(scene.mesh.normals()[j]).abs() / (rho2 * rho2)
        };
        let rho = rho2.sqrt();
        acc += scene.mesh.weights()[j]
            * value_at(j)
            * geom
            * surface_speed_integral(scene, rho, energy_weight);
    }
    2.0 / std::f64::consts::PI * acc
}

/// Re-emission flux in the surface-integral form
/// `(2/pi) int_0^inf int_{boundary} psi(y) e^{-l^2 |x-y|^2} e^{-nu(l|x-y|)/l}
///  [(x-y).n(x)] |(x-y).n(y)| l^3 dA(y) dl`.
pub fn reemission_flux_surface(scene: &Scene, psi: &WallFlux, x: Vec3) -> f64 {
    surface_form(scene, x, |j| psi.values()[j], false)
}

/// Temperature flux in the surface-integral form (the `|zeta|^2 - 2`
/// weight becomes `z^2 - 2` in the speed integral).
pub fn temperature_flux_surface(
    scene: &Scene,
    temperature: &BoundaryTemperature,
    x: Vec3,
) -> f64 {
    surface_form(
        scene,
        x,
        |j| temperature.eval(scene.mesh.nodes()[j]),
        true,
    )
}

/// Collision-source flux `D_f` at mesh node `i` (velocity form), using
/// the tabulated kernel image.
pub fn source_flux_velocity(scene: &Scene, ktab: &KTable, i: usize) -> f64 {
    let cache = scene.boundary_cache(i);
    let x = scene.mesh.nodes()[i];
    let mut acc = 0.0;
    for (n, hit) in cache.half.nodes.iter().zip(&cache.rays) {
        let nu = scene.model.nu(n.speed);
        let stencil = scene.grid.direction_stencil(n.zeta / n.speed);
        let mut ray = 0.0;
        for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
            ray += w * ktab_read_shell(scene, ktab, x - n.zeta * s, n.radial_index, &stencil);
        }
        acc += n.weight * ray * sqrt_maxwellian(n.zeta) * n.mu * n.speed;
    }
    2.0 * std::f64::consts::PI.sqrt() * acc
}

/// `D_f` at an arbitrary boundary point (velocity form).
pub fn source_flux_velocity_at(scene: &Scene, ktab: &KTable, x: Vec3) -> Result<f64> {
    let normal = scene.domain.outward_normal(x);
    let rule = scene.grid.half_space(normal);
    let mut acc = 0.0;
    for n in &rule.nodes {
        let hit = scene.domain.exit_ray(x, n.zeta)?;
        let nu = scene.model.nu(n.speed);
        let stencil = scene.grid.direction_stencil(n.zeta / n.speed);
        let mut ray = 0.0;
        for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
            ray += w * ktab_read_shell(scene, ktab, x - n.zeta * s, n.radial_index, &stencil);
        }
        acc += n.weight * ray * sqrt_maxwellian(n.zeta) * n.mu * n.speed;
    }
    Ok(2.0 * std::f64::consts::PI.sqrt() * acc)
}

/// Generic closure variant of the velocity-form `D_f`: the collision
/// image is supplied as a phase-space closure instead of a table
/// (used with exact images in cross-form tests).
pub fn source_flux_velocity_closure(
    scene: &Scene,
    kf: impl Fn(Vec3, Vec3) -> f64,
    x: Vec3,
) -> Result<f64> {
    let normal = scene.domain.outward_normal(x);
    let rule = scene.grid.half_space(normal);
    let mut acc = 0.0;
    for n in &rule.nodes {
        let hit = scene.domain.exit_ray(x, n.zeta)?;
        let nu = scene.model.nu(n.speed);
        let mut ray = 0.0;
        for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
            ray += w * kf(x - n.zeta * s, n.zeta);
        }
        acc += n.weight * ray * sqrt_maxwellian(n.zeta) * n.mu * n.speed;
    }
    Ok(2.0 * std::f64::consts::PI.sqrt() * acc)
}

/// Table read at a fixed radial shell with a precomputed direction
/// stencil.
fn ktab_read_shell(
    scene: &Scene,
    ktab: &KTable,
    y: Vec3,
    radial_index: usize,
    stencil: &[(usize, f64); 4],
) -> f64 {
    let nd = scene.grid.n_directions();
    let spatial = scene.volume.nearest_k(y, 4);
    let mut num = 0.0;
    let mut den = 0.0;
    for &(node, dist) in spatial.as_slice() {
        let w = if dist < 1e-12 { 1e24 } else { 1.0 / (dist * dist) };
        let mut acc = 0.0;
        for &(jd, wd) in stencil {
            acc += wd * ktab.at(node, radial_index * nd + jd);
        }
        num += w * acc;
        den += w;
    }
    num / den
}

/// Collision-source flux `D_f` in the volume form with radially
/// clustered nodes around `x`:
///
/// ```text
/// D_f = 2 pi^{-1/4} int_{omega.n>0} int_0^{r_exit} int drho
///         e^{-nu(rho) r/rho} K(f)(x - r omega, rho omega) (omega.n) e^{-rho^2/2} rho^2
/// ```
pub fn source_flux_volume(scene: &Scene, ktab: &KTable, x: Vec3) -> Result<f64> {
    let normal = scene.domain.outward_normal(x);
    let dirs = scene.grid.half_space_directions(normal);
    let mut total = 0.0;
    for d in &dirs {
        let hit = scene.domain.exit_ray(x, d.dir)?;
        if hit.tau_minus <= 0.0 {
            continue;
        }
        let (rs, wr) = gauss_legendre_on(16, 0.0, hit.tau_minus);
        let stencil = scene.grid.direction_stencil(d.dir);
        for (&r, &wri) in rs.iter().zip(&wr) {
            let y = x - d.dir * r;
            let spatial = scene.volume.nearest_k(y, 4);
            for (k, &rho) in scene.grid.radial_nodes().iter().enumerate() {
                let w_rho = scene.grid.radial_weights()[k];
                let damp = (-scene.model.nu(rho) * r / rho).exp();
                let nd = scene.grid.n_directions();
                let mut num = 0.0;
                let mut den = 0.0;
                for &(node, dist) in spatial.as_slice() {
                    let wsp = if dist < 1e-12 { 1e24 } else { 1.0 / (dist * dist) };
                    let mut acc = 0.0;
                    for &(jd, wd) in &stencil {
                        acc += wd * ktab.at(node, k * nd + jd);
                    }
                    num += wsp * acc;
                    den += wsp;
                }
                let kf = num / den;
                total += d.weight * wri * w_rho * damp * kf * d.mu * (-0.5 * rho * rho).exp()
                    * rho
                    * rho;
            }
        }
    }
    Ok(2.0 * std::f64::consts::PI.powf(-0.25) * total)
}

#[derive(Debug, Clone)]
pub struct FluxOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// mean value pinned when the re-emission map has a neutral constant
    /// mode (nu_scale = 0)
    pub anchor: f64,
}

impl Default for FluxOptions {
    fn default() -> Self {
        FluxOptions {
            tol: 1e-12,
            max_iters: 400,
            anchor: 0.0,
        }
    }
}

#[derive(Debug)]
pub struct FluxSolution {
    pub psi: WallFlux,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    /// observed Lipschitz constant of the re-emission map
    pub contraction: f64,
    /// anchored mean, when the neutral mode was pinned
    pub anchored_mass: Option<f64>,
}

/// Dense re-emission matrix: `(B_psi psi)_i = sum_j W_ij psi_j`, built
/// once per scene from the cached exit rays and the three-point
/// interpolation of `psi` at the exit points.
fn reemission_matrix(scene: &Scene) -> &[f64] {
    scene.reemission.get_or_init(|| {
        let m = scene.mesh.len();
        let rows: Vec<Vec<f64>> = (0..m)
            .into_par_iter()
            .map(|i| {
                let cache = scene.boundary_cache(i);
                let mut row = vec![0.0; m];
                for (n, hit) in cache.half.nodes.iter().zip(&cache.rays) {
                    let nu = scene.model.nu(n.speed);
                    let factor = 2.0
                        * std::f64::consts::PI.sqrt()
                        * n.weight
                        * maxwellian(n.zeta)
                        * (-nu * hit.tau_minus).exp()
                        * n.mu
                        * n.speed;
                    // three-point inverse-distance stencil at the exit point
                    let neighbors = scene.mesh.nearest_k(hit.exit_point, 3);
                    if let Some((j0, d0)) = neighbors.first() {
                        if d0 < 1e-12 {
                            row[j0] += factor;
                            continue;
                        }
                    }
                    let mut den = 0.0;
                    for &(_, d) in neighbors.as_slice() {
                        den += 1.0 / (d * d);
                    }
                    for &(j, d) in neighbors.as_slice() {
                        row[j] += factor * (1.0 / (d * d)) / den;
                    }
                }
                row
            })
            .collect();
        let mut data = Vec::with_capacity(m * m);
        for row in rows {
            data.extend_from_slice(&row);
        }
        data
    })
}

/// Solves `psi = B_T + B_psi[psi] + D_f[f]` on the mesh by fixed-point
/// iteration.  `source` carries the tabulated `K(f)` of the current
/// transport iterate; `None` means `f = 0`.
pub fn solve_wall_flux(
    scene: &Scene,
    temperature: &BoundaryTemperature,
    source: Option<&KTable>,
    opts: &FluxOptions,
) -> Result<FluxSolution> {
    let m = scene.mesh.len();
    let w = reemission_matrix(scene);

    let inhom: Vec<f64> = (0..m)
        .into_par_iter()
        .map(|i| {
            let bt = temperature_flux(scene, temperature, i);
            let df = source.map_or(0.0, |k| source_flux_velocity(scene, k, i));
            bt + df
        })
        .collect();

    let neutral = scene.model.nu_scale() == 0.0;
    let mut psi = inhom.clone();
    if neutral {
        pin_mean(&mut psi, opts.anchor);
    }
    let mut residuals = Vec::new();
    let mut contraction = 0.0;
    let mut prev_update = f64::NAN;
    for iter in 0..opts.max_iters {
        let mut next = vec![0.0; m];
        for i in 0..m {
            let row = &w[i * m..(i + 1) * m];
            let mut acc = inhom[i];
            for j in 0..m {
                acc += row[j] * psi[j];
            }
            next[i] = acc;
        }
        if neutral {
            pin_mean(&mut next, opts.anchor);
        }
        let scale = next.iter().fold(1e-30f64, |s, &v| s.max(v.abs()));
        let update = psi
            .iter()
            .zip(&next)
            .fold(0.0f64, |u, (&a, &b)| u.max((a - b).abs()));
        psi = next;
        residuals.push(update / scale);
        if prev_update.is_finite() && prev_update > 0.0 {
            contraction = update / prev_update;
        }
        prev_update = update;
        if update / scale < opts.tol {
            return Ok(FluxSolution {
                psi: WallFlux::new(psi),
                iterations: iter + 1,
                residuals,
                contraction,
                anchored_mass: neutral.then_some(opts.anchor),
            });
        }
    }
    Err(Error::Diverged {
        iters: opts.max_iters,
        last: *residuals.last().unwrap_or(&f64::NAN),
        residuals,
    })
}

fn pin_mean(values: &mut [f64], anchor: f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v += anchor - mean;
    }
}

/// Modulus-of-continuity row for boundary pair sweeps.
#[derive(Debug, Clone, Copy)]
pub struct ModulusRow {
    pub separation: f64,
    pub difference: f64,
    /// the expected modulus `sep (1 + |ln sep|)`
    pub bound_value: f64,
    pub ratio: f64,
}

/// Sweep of `|D_f(x0) - D_f(x1)|` against the near-Lipschitz modulus
/// `|x0-x1| (1 + |ln |x0-x1||)` over boundary pairs.
pub fn source_flux_modulus_check(
    scene: &Scene,
    ktab: &KTable,
    pairs: &[(Vec3, Vec3)],
) -> Result<Vec<ModulusRow>> {
    pairs
        .iter()
        .map(|&(x0, x1)| {
            let a = source_flux_velocity_at(scene, ktab, x0)?;
            let b = source_flux_velocity_at(scene, ktab, x1)?;
            let sep = x0.distance(x1);
            let bound = sep * (1.0 + sep.ln().abs());
            Ok(ModulusRow {
                separation: sep,
                difference: (a - b).abs(),
                bound_value: bound,
                ratio: (a - b).abs() / bound,
            })
        })
        .collect()
}

/// Finite-difference boundedness data for tangential derivatives of the
/// flux parts.
#[derive(Debug, Clone)]
pub struct GradientQuotientRow {
    pub quantity: &'static str,
    pub sample: usize,
    /// difference quotients at steps h, h/2, h/4
    pub quotients: [f64; 3],
    /// quotients stable under h-refinement to 10%
    pub stable: bool,
}

/// Tangential finite differences of `B_T`, `B_psi` and `D_f` along the
/// boundary; boundedness under step refinement is the assertion.
pub fn boundary_gradient_check(
    scene: &Scene,
    temperature: &BoundaryTemperature,
    psi: &WallFlux,
    ktab: &KTable,
    samples: &[(Vec3, Vec3)],
    h0: f64,
) -> Result<Vec<GradientQuotientRow>> {
    let mut rows = Vec::new();
    for (idx, &(x, tangent)) in samples.iter().enumerate() {
        for (name, eval) in [
            (
                "temperature_flux",
                Box::new(|p: Vec3| temperature_flux_at(scene, temperature, p))
                    as Box<dyn Fn(Vec3) -> Result<f64>>,
            ),
            (
                "reemission_flux",
                Box::new(|p: Vec3| reemission_flux_velocity(scene, psi, p)),
            ),
            (
                "source_flux",
                Box::new(|p: Vec3| source_flux_velocity_at(scene, ktab, p)),
            ),
        ] {
            let mut quotients = [0.0; 3];
            for (k, q) in quotients.iter_mut().enumerate() {
                let h = h0 / 2f64.powi(k as i32);
                let xp = project(scene, x + tangent * h);
                let xm = project(scene, x - tangent * h);
                let sep = xp.distance(xm);
                *q = (eval(xp)? - eval(xm)?).abs() / sep;
            }
            let base = quotients[2].abs().max(1e-12);
            let stable = (quotients[0] - quotients[2]).abs() / base < 0.1
                && (quotients[1] - quotients[2]).abs() / base < 0.1;
            rows.push(GradientQuotientRow {
                quantity: name,
                sample: idx,
                quotients,
                stable,
            });
        }
    }
    Ok(rows)
}

fn project(scene: &Scene, p: Vec3) -> Vec3 {
    // pull a displaced point back to the surface along the gradient
    let mut y = p;
    for _ in 0..4 {
        let g = scene.domain.gradient(y);
        y -= g * (scene.domain.implicit(y) / g.norm_squared());
    }
    y
}
