//! Picard iteration of the damped integral transport equation.
//!
//! The solution satisfies
//!
//! ```text
//! f(x, zeta) = f_b(p(x, zeta), zeta) e^{-nu tau} + int_0^tau e^{-nu s} K(f)(x - s zeta, zeta) ds
//! ```
//!
//! with the diffuse-reflection boundary value
//! `f_b = (psi + T (|zeta|^2 - 2)) sqrt(M)`.  Iterating the equation once
//! more splits `f` into a damped boundary term, a single-collision term
//! and a multiple-collision term; the latter is also expressible as a
//! space integral (the mixing form), which this module evaluates along
//! both routes.

use crate::collision::{sqrt_maxwellian, KernelMatrix, KineticModel};
use crate::error::{Error, Result};
use crate::flux::{self, BoundaryTemperature, FluxOptions, WallFlux};
use crate::geometry::{BoundaryMesh, ConvexDomain, RayHit};
use crate::grid::{HalfSpaceRule, VelocityGrid};
use crate::interp::{halton_point, PointCloud};
use crate::quadrature::{damped_ray_rule, gauss_legendre_on};
use crate::vec3::Vec3;
use rand::Rng;
use rayon::prelude::*;
use std::sync::OnceLock;

/// Interior interpolation nodes filling the domain (Halton sequence
/// restricted to the inside).
#[derive(Debug, Clone)]
pub struct VolumeMesh {
    nodes: Vec<Vec3>,
    cloud: PointCloud,
}

impl VolumeMesh {
    pub fn halton(domain: &ConvexDomain, n: usize) -> Self {
        assert!(n >= 8, "volume mesh needs at least 8 nodes");
        let half = 0.5 * domain.diameter();
        let mut nodes = Vec::with_capacity(n);
        let mut index = 0;
        while nodes.len() < n {
            let u = halton_point(index);
            index += 1;
            let p = Vec3::new(
                (2.0 * u.x - 1.0) * half,
                (2.0 * u.y - 1.0) * half,
                (2.0 * u.z - 1.0) * half,
            );
            if domain.contains(p) {
                nodes.push(p);
            }
            if index > 1000 * n {
                break;
            }
        }
        let cloud = PointCloud::build_auto(nodes.clone());
        VolumeMesh { nodes, cloud }
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

    /// Inverse-distance interpolation over the four nearest nodes.
    pub fn interpolate(&self, x: Vec3, values: impl Fn(usize) -> f64) -> f64 {
        self.cloud.inverse_distance(x, 4, values)
    }

    pub fn nearest_k(&self, x: Vec3, k: usize) -> crate::interp::NearestIter {
        self.cloud.nearest_k(x, k)
    }
}

/// Quadrature controls for characteristic integrals.
#[derive(Debug, Clone, Copy)]
pub struct RayQuadrature {
    /// nodes per damped ray integral (>= 16 by default)
    pub nodes: usize,
    /// geometric grading ratio toward the boundary end
    pub grading: f64,
}

impl Default for RayQuadrature {
    fn default() -> Self {
        RayQuadrature {
            nodes: 16,
            grading: 0.85,
        }
    }
}

/// Per-boundary-node cache: the outgoing half-space rule and the exit
/// data of each of its velocities.
pub(crate) struct BoundaryCache {
    pub half: HalfSpaceRule,
    pub rays: Vec<RayHit>,
}

/// Immutable problem setup shared by the flux and transport solvers:
/// domain, grids, kinetic model, the discrete collision matrix and the
/// boundary ray caches.
pub struct Scene {
    pub domain: ConvexDomain,
    pub grid: VelocityGrid,
    pub model: KineticModel,
    pub mesh: BoundaryMesh,
    pub volume: VolumeMesh,
    pub ray_quadrature: RayQuadrature,
    pub(crate) kernel: KernelMatrix,
    pub(crate) boundary: Vec<BoundaryCache>,
    pub(crate) reemission: OnceLock<Vec<f64>>,
}

impl Scene {
    pub fn new(
        domain: ConvexDomain,
        grid: VelocityGrid,
        model: KineticModel,
        mesh: BoundaryMesh,
        volume: VolumeMesh,
    ) -> Result<Self> {
        let kernel = model.kernel_matrix(&grid);
        let boundary: Vec<BoundaryCache> = mesh
            .nodes()
            .par_iter()
            .zip(mesh.normals().par_iter())
            .map(|(&x, &n)| {
                let half = grid.half_space(n);
                let rays = half
                    .nodes
                    .iter()
                    .map(|hn| domain.exit_ray(x, hn.zeta))
                    .collect::<Result<Vec<_>>>()?;
                Ok(BoundaryCache { half, rays })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Scene {
            domain,
            grid,
            model,
            mesh,
            volume,
            ray_quadrature: RayQuadrature::default(),
            kernel,
            boundary,
            reemission: OnceLock::new(),
        })
    }

    pub fn kernel_matrix(&self) -> &KernelMatrix {
        &self.kernel
    }

    pub(crate) fn boundary_cache(&self, i: usize) -> &BoundaryCache {
        &self.boundary[i]
    }

    /// Ray rule for `int_0^tau e^{-nu s} g(s) ds`.
    pub(crate) fn ray_rule(&self, nu: f64, tau: f64) -> Vec<(f64, f64)> {
        damped_ray_rule(nu, tau, self.ray_quadrature.nodes, self.ray_quadrature.grading)
    }
}

/// Sampled distribution on volume nodes x velocity nodes, stored
/// node-major.
#[derive(Debug, Clone)]
pub struct DistributionField {
    values: Vec<f64>,
    n_nodes: usize,
    n_velocities: usize,
}

impl DistributionField {
    pub fn zeros(n_nodes: usize, n_velocities: usize) -> Self {
        DistributionField {
            values: vec![0.0; n_nodes * n_velocities],
            n_nodes,
            n_velocities,
        }
    }

    /// Samples a closure on the product grid.
    pub fn from_fn(
        volume: &VolumeMesh,
        grid: &VelocityGrid,
        f: impl Fn(Vec3, Vec3) -> f64,
    ) -> Self {
        let n_nodes = volume.len();
        let n_velocities = grid.len();
        let mut values = Vec::with_capacity(n_nodes * n_velocities);
        for &x in volume.nodes() {
            for &z in grid.nodes() {
                values.push(f(x, z));
            }
        }
        DistributionField {
            values,
            n_nodes,
            n_velocities,
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn n_velocities(&self) -> usize {
        self.n_velocities
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn at(&self, node: usize, velocity: usize) -> f64 {
        self.values[node * self.n_velocities + velocity]
    }

    #[inline]
    pub fn node_slice(&self, node: usize) -> &[f64] {
        &self.values[node * self.n_velocities..(node + 1) * self.n_velocities]
    }

    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, &v| m.max(v.abs()))
    }

    /// Spatial interpolation at grid velocity `iv`.
    pub fn eval_grid(&self, volume: &VolumeMesh, x: Vec3, iv: usize) -> f64 {
        volume.interpolate(x, |node| self.at(node, iv))
    }

    /// Full interpolation at an arbitrary velocity: spatial
    /// inverse-distance x angular bilinear x radial linear.
    pub fn eval(&self, scene: &Scene, x: Vec3, zeta: Vec3) -> f64 {
        eval_table(&self.values, self.n_velocities, scene, x, zeta)
    }
}

/// Tabulated collision image `K(f)` on the same layout as the field.
pub struct KTable {
    values: Vec<f64>,
    n_velocities: usize,
}

impl KTable {
    /// Applies the kernel matrix to every spatial slice of `field`.
    pub fn build(scene: &Scene, field: &DistributionField) -> Self {
        let nv = field.n_velocities();
        let values: Vec<f64> = (0..field.n_nodes())
            .into_par_iter()
            .flat_map_iter(|node| {
                let mut out = vec![0.0; nv];
                scene.kernel.apply(field.node_slice(node), &mut out);
                out.into_iter()
            })
            .collect();
        KTable {
            values,
            n_velocities: nv,
        }
    }

    pub fn zeros(scene: &Scene) -> Self {
        KTable {
            values: vec![0.0; scene.volume.len() * scene.grid.len()],
            n_velocities: scene.grid.len(),
        }
    }

    #[inline]
    pub fn at(&self, node: usize, velocity: usize) -> f64 {
        self.values[node * self.n_velocities + velocity]
    }

    /// Spatial interpolation at grid velocity `iv`.
    pub fn eval_grid(&self, scene: &Scene, x: Vec3, iv: usize) -> f64 {
        scene.volume.interpolate(x, |node| self.at(node, iv))
    }

    /// Full phase-space interpolation at arbitrary velocity.
    pub fn eval(&self, scene: &Scene, x: Vec3, zeta: Vec3) -> f64 {
        eval_table(&self.values, self.n_velocities, scene, x, zeta)
    }
}

/// Shared interpolation of node-major (space x velocity) tables at an
/// arbitrary phase point.
fn eval_table(values: &[f64], nv: usize, scene: &Scene, x: Vec3, zeta: Vec3) -> f64 {
    let speed = zeta.norm();
    if speed < 1e-14 {
        // tables exclude the origin; fall back to the slowest shell
        let iv = 0;
        return scene.volume.interpolate(x, |node| values[node * nv + iv]);
    }
    let dir = zeta / speed;
    let stencil = scene.grid.direction_stencil(dir);
    let radial = scene.grid.radial_nodes();
    let nd = scene.grid.n_directions();
    // bracket the speed between radial shells, clamping at the ends
    let (k0, k1, t) = if speed <= radial[0] {
        (0, 0, 0.0)
    } else if speed >= radial[radial.len() - 1] {
        (radial.len() - 1, radial.len() - 1, 0.0)
    } else {
        let mut k = 0;
        while k + 1 < radial.len() && radial[k + 1] < speed {
            k += 1;
        }
        (k, k + 1, (speed - radial[k]) / (radial[k + 1] - radial[k]))
    };
    let spatial = scene.volume.nearest_k(x, 4);
    let spatial = spatial.as_slice();
    let angular = |node: usize| {
        let mut acc = 0.0;
        for &(jd, wd) in &stencil {
            let v0 = values[node * nv + k0 * nd + jd];
            let v1 = values[node * nv + k1 * nd + jd];
            acc += wd * ((1.0 - t) * v0 + t * v1);
        }
        acc
    };
    if let Some(&(node, d)) = spatial.first() {
        if d < 1e-12 {
            return angular(node);
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(node, d) in spatial {
        let w_sp = 1.0 / (d * d);
        num += w_sp * angular(node);
        den += w_sp;
    }
    num / den
}

/// Diffuse-reflection boundary value for an incoming velocity:
/// `(psi + T (|zeta|^2 - 2)) sqrt(M)`.
pub fn boundary_value(psi: f64, temperature: f64, zeta: Vec3, normal: Vec3) -> Result<f64> {
    let dot = zeta.dot(normal);
    if dot >= 0.0 {
        return Err(Error::OutgoingVelocity(dot));
    }
    Ok(boundary_data(psi, temperature, zeta))
}

#[inline]
pub(crate) fn boundary_data(psi: f64, temperature: f64, zeta: Vec3) -> f64 {
    (psi + temperature * (zeta.norm_squared() - 2.0)) * sqrt_maxwellian(zeta)
}

/// One application of the integral-equation right-hand side at
/// `(x, zeta)`.  Returns the value and whether the ray was grazing
/// (in which case only the boundary term is evaluated).
pub fn evaluate_f(
    scene: &Scene,
    psi: &WallFlux,
    temperature: &BoundaryTemperature,
    ktab: Option<&KTable>,
    x: Vec3,
    zeta: Vec3,
) -> Result<(f64, bool)> {
    let hit = scene.domain.exit_ray(x, zeta)?;
    let nu = scene.model.nu(zeta.norm());
    let psi_at = scene.mesh.interpolate(psi.values(), hit.exit_point);
    let t_at = temperature.eval(hit.exit_point);
    let mut value = boundary_data(psi_at, t_at, zeta) * (-nu * hit.tau_minus).exp();
    let grazing = hit.normal_component < scene.grid.grazing_cutoff();
    if !grazing {
        if let Some(tab) = ktab {
            for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
                value += w * tab.eval(scene, x - zeta * s, zeta);
            }
        }
    }
    Ok((value, grazing))
}

/// Fast-path variant for grid velocities (no velocity interpolation).
fn evaluate_f_grid(
    scene: &Scene,
    psi: &[f64],
    temperature: &BoundaryTemperature,
    ktab: &KTable,
    x: Vec3,
    iv: usize,
) -> Result<(f64, bool)> {
    let zeta = scene.grid.nodes()[iv];
    let hit = scene.domain.exit_ray(x, zeta)?;
    let nu = scene.model.nu(scene.grid.speeds()[iv]);
    let psi_at = scene.mesh.interpolate(psi, hit.exit_point);
    let t_at = temperature.eval(hit.exit_point);
    let mut value = boundary_data(psi_at, t_at, zeta) * (-nu * hit.tau_minus).exp();
    let grazing = hit.normal_component < scene.grid.grazing_cutoff();
    if !grazing {
        for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
            value += w * ktab.eval_grid(scene, x - zeta * s, iv);
        }
    }
    Ok((value, grazing))
}

#[derive(Debug, Clone)]
pub struct SolveOptions {
    /// relative max-norm update tolerance
    pub tol: f64,
    pub max_iters: usize,
    /// mean density the neutral Maxwellian mode is pinned to
    pub anchor_mass: f64,
    /// probe points for the a-posteriori equation residual
    pub probe_points: usize,
    pub flux: FluxOptions,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: 1e-6,
            max_iters: 60,
            anchor_mass: 0.0,
            probe_points: 100,
            flux: FluxOptions::default(),
        }
    }
}

pub struct Solution {
    pub field: DistributionField,
    pub psi: WallFlux,
    pub ktable: KTable,
    /// relative max-norm updates per Picard sweep
    pub updates: Vec<f64>,
    pub iterations: usize,
    pub flux_iterations: Vec<usize>,
    pub grazing_fraction: f64,
    pub probe_residual_max: f64,
    pub probe_residual_mean: f64,
}

/// Picard iteration alternating field sweeps with wall-flux solves.
pub fn picard_solve(
    scene: &Scene,
    temperature: &BoundaryTemperature,
    opts: &SolveOptions,
    rng: &mut impl Rng,
) -> Result<Solution> {
    // boundedness precondition on the boundary data
    temperature.check_bounded(&scene.domain)?;

    let nn = scene.volume.len();
    let nv = scene.grid.len();
    let mut field = DistributionField::zeros(nn, nv);
    let mut flux_iterations = Vec::new();

    let first = flux::solve_wall_flux(scene, temperature, None, &opts.flux)?;
    flux_iterations.push(first.iterations);
    let mut psi = first.psi;

    let mut updates = Vec::new();
    let mut grazing_total = 0usize;
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..opts.max_iters {
        iterations += 1;
        let ktab = KTable::build(scene, &field);
        let psi_values = psi.values().to_vec();
        let per_node: Vec<Result<(Vec<f64>, usize)>> = (0..nn)
            .into_par_iter()
            .map(|node| {
                let x = scene.volume.nodes()[node];
                let mut row = vec![0.0; nv];
                let mut grazing = 0usize;
                for iv in 0..nv {
                    let (v, g) =
                        evaluate_f_grid(scene, &psi_values, temperature, &ktab, x, iv)?;
                    row[iv] = v;
                    if g {
                        grazing += 1;
                    }
                }
                Ok((row, grazing))
            })
            .collect();
        let mut new_values = Vec::with_capacity(nn * nv);
        for item in per_node {
            let (row, grazing) = item?;
            new_values.extend_from_slice(&row);
            grazing_total += grazing;
        }
        let mut new_field = DistributionField {
            values: new_values,
            n_nodes: nn,
            n_velocities: nv,
        };
        anchor_mass(scene, &mut new_field, opts.anchor_mass);

        let scale = new_field.max_norm().max(1e-30);
        let update = field
            .values()
            .iter()
            .zip(new_field.values())
            .fold(0.0f64, |m, (&a, &b)| m.max((a - b).abs()))
            / scale;
        field = new_field;

        let ktab_new = KTable::build(scene, &field);
        let fsol = flux::solve_wall_flux(scene, temperature, Some(&ktab_new), &opts.flux)?;
        flux_iterations.push(fsol.iterations);
        psi = fsol.psi;

        updates.push(update);
        if update < opts.tol {
            converged = true;
            break;
        }
    }

    if !converged {
        let last = *updates.last().unwrap_or(&f64::NAN);
        // a shrinking tail is slow convergence, not divergence; only
        // growing updates abort
        if updates.len() >= 2 && last > updates[0] {
            return Err(Error::Diverged {
                iters: iterations,
                last,
                residuals: updates,
            });
        }
    }

    let ktable = KTable::build(scene, &field);

    // a-posteriori residual of the integral equation at off-grid probes
    let mut res_max = 0.0f64;
    let mut res_sum = 0.0f64;
    let mut probes = 0;
    while probes < opts.probe_points {
        let x = crate::geometry::random_interior_point(&scene.domain, rng, 0.02);
        let iv = rng.gen_range(0..nv);
        let (rhs, grazing) = {
            let (v, g) = evaluate_f_grid(scene, psi.values(), temperature, &ktable, x, iv)?;
            (v, g)
        };
        if grazing {
            continue;
        }
        let lhs = field.eval_grid(&scene.volume, x, iv);
        let r = (lhs - rhs).abs();
        res_max = res_max.max(r);
        res_sum += r;
        probes += 1;
    }

    Ok(Solution {
        grazing_fraction: grazing_total as f64 / (nn * nv * iterations.max(1)) as f64,
        field,
        psi,
        ktable,
        updates,
        iterations,
        flux_iterations,
        probe_residual_max: res_max,
        probe_residual_mean: res_sum / opts.probe_points.max(1) as f64,
    })
}

/// Pins the mean Maxwellian density `<f, sqrt M>` to `anchor`; the
/// transport fixed point is neutral along `c sqrt(M)`.
fn anchor_mass(scene: &Scene, field: &mut DistributionField, anchor: f64) {
    let nv = scene.grid.len();
    let mut mean = 0.0;
    for node in 0..field.n_nodes() {
        let slice = field.node_slice(node);
        let mut density = 0.0;
        for iv in 0..nv {
            density +=
                scene.grid.weights()[iv] * slice[iv] * sqrt_maxwellian(scene.grid.nodes()[iv]);
        }
        mean += density;
    }
    mean /= field.n_nodes() as f64;
    let shift = anchor - mean;
    if shift.abs() < 1e-300 {
        return;
    }
    let sq: Vec<f64> = scene
        .grid
        .nodes()
        .iter()
        .map(|&z| sqrt_maxwellian(z))
        .collect();
    for node in 0..field.n_nodes() {
        let base = node * nv;
        for iv in 0..nv {
            field.values_mut()[base + iv] += shift * sq[iv];
        }
    }
}

/// Damped boundary term `I(x, zeta)` of the scattering decomposition.
pub fn direct_term(
    scene: &Scene,
    psi: &WallFlux,
    temperature: &BoundaryTemperature,
    x: Vec3,
    zeta: Vec3,
) -> Result<f64> {
    let hit = scene.domain.exit_ray(x, zeta)?;
    let nu = scene.model.nu(zeta.norm());
    let psi_at = scene.mesh.interpolate(psi.values(), hit.exit_point);
    let t_at = temperature.eval(hit.exit_point);
    Ok(boundary_data(psi_at, t_at, zeta) * (-nu * hit.tau_minus).exp())
}

/// `H(x, zeta) = int k(zeta, .) I(x, .)`: the kernel smoothing of the
/// damped boundary term.
pub fn smoothed_direct_term(
    scene: &Scene,
    psi: &WallFlux,
    temperature: &BoundaryTemperature,
    x: Vec3,
    zeta: Vec3,
) -> Result<f64> {
    let mut err = None;
    let value = scene.model.apply_k(
        &scene.grid,
        |zp| match direct_term(scene, psi, temperature, x, zp) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        zeta,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// Mixing source field along the velocity-grid route:
/// `G(x0, zeta) = int k(zeta, zeta') [int_0^{tau'} e^{-nu' t} K(f) dt] dzeta'`.
pub fn scatter_source_grid(scene: &Scene, ktab: &KTable, x0: Vec3, zeta: Vec3) -> Result<f64> {
    let mut err = None;
    let value = scene.model.apply_k(
        &scene.grid,
        |zp| match ray_collision_integral(scene, ktab, x0, zp) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                0.0
            }
        },
        zeta,
    );
    match err {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

/// `int_0^{tau(x0, zp)} e^{-nu t} K(f)(x0 - t zp, zp) dt`
fn ray_collision_integral(scene: &Scene, ktab: &KTable, x0: Vec3, zp: Vec3) -> Result<f64> {
    let speed = zp.norm();
    if speed < 1e-12 {
        return Ok(0.0);
    }
    let hit = scene.domain.exit_ray(x0, zp)?;
    let nu = scene.model.nu(speed);
    let mut acc = 0.0;
    for (t, w) in scene.ray_rule(nu, hit.tau_minus) {
        acc += w * ktab.eval(scene, x0 - zp * t, zp);
    }
    Ok(acc)
}

/// Mixing source field along the space-integral route, with radially
/// clustered volume nodes around `x0`:
///
/// ```text
/// G(x0, zeta) = int domega int_0^{r_exit} dr int drho
///                 k(zeta, rho omega) e^{-nu(rho) r / rho} K(f)(x0 - r omega, rho omega) rho
/// ```
pub fn scatter_source_volume(
    scene: &Scene,
    ktab: &KTable,
    x0: Vec3,
    zeta: Vec3,
    n_directions: usize,
) -> Result<f64> {
    let dirs = rotated_directions(zeta, n_directions);
    let w_dir = 4.0 * std::f64::consts::PI / n_directions as f64;
    let speed_z = zeta.norm();
    let zmax = scene.grid.zeta_max();
    let mut total = 0.0;
    for dir in dirs {
        let hit = scene.domain.exit_ray(x0, dir)?;
        let r_exit = hit.tau_minus;
        if r_exit <= 0.0 {
            continue;
        }
        let (rs, wr) = gauss_legendre_on(14, 0.0, r_exit);
        // rho rule: refine around the kernel singularity when this
        // direction passes near zeta
        let cos_a = dir.dot(zeta) / speed_z.max(1e-300);
        let rho_star = speed_z * cos_a;
        let min_dist = if rho_star > 0.0 && rho_star < zmax {
            (speed_z * speed_z - rho_star * rho_star).max(0.0).sqrt()
        } else {
            f64::INFINITY
        };
        let rho_rule: Vec<(f64, f64)> = if min_dist < 0.6 {
            let delta = (2.0 * min_dist).clamp(0.05, 1.0);
            let lo = (rho_star - delta).max(1e-4);
            let hi = (rho_star + delta).min(zmax);
            let mut rule = Vec::new();
            if lo > 1e-4 {
                let (a, b) = gauss_legendre_on(8, 1e-4, lo);
                rule.extend(a.into_iter().zip(b));
            }
            let (a, b) = gauss_legendre_on(24, lo, hi);
            rule.extend(a.into_iter().zip(b));
            if hi < zmax {
                let (a, b) = gauss_legendre_on(8, hi, zmax);
                rule.extend(a.into_iter().zip(b));
            }
            rule
        } else {
            scene
                .grid
                .radial_nodes()
                .iter()
                .copied()
                .zip(scene.grid.radial_weights().iter().copied())
                .collect()
        };
        let stencil = scene.grid.direction_stencil(dir);
        for (&r, &wri) in rs.iter().zip(&wr) {
            let y = x0 - dir * r;
            let spatial = scene.volume.nearest_k(y, 4);
            for &(rho, wrho) in &rho_rule {
                let eta = dir * rho;
                let d = (eta - zeta).norm();
                if d < 1e-9 {
                    continue;
                }
                let k = scene.model.kernel_unchecked(zeta, eta);
                let damp = (-scene.model.nu(rho) * r / rho).exp();
                let kf = read_table(ktab, scene, spatial.as_slice(), &stencil, rho);
                total += w_dir * wri * wrho * k * damp * kf * rho;
            }
        }
    }
    Ok(total)
}

/// Table read with precomputed spatial and angular stencils.
fn read_table(
    ktab: &KTable,
    scene: &Scene,
    spatial: &[(usize, f64)],
    stencil: &[(usize, f64); 4],
    speed: f64,
) -> f64 {
    let radial = scene.grid.radial_nodes();
    let nd = scene.grid.n_directions();
    let nv = scene.grid.len();
    let (k0, k1, t) = if speed <= radial[0] {
        (0, 0, 0.0)
    } else if speed >= radial[radial.len() - 1] {
        (radial.len() - 1, radial.len() - 1, 0.0)
    } else {
        let mut k = 0;
        while k + 1 < radial.len() && radial[k + 1] < speed {
            k += 1;
        }
        (k, k + 1, (speed - radial[k]) / (radial[k + 1] - radial[k]))
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for &(node, dist) in spatial {
        let w_sp = if dist < 1e-12 { 1e24 } else { 1.0 / (dist * dist) };
        let mut acc = 0.0;
        for &(jd, wd) in stencil {
            let v0 = ktab.values[node * nv + k0 * nd + jd];
            let v1 = ktab.values[node * nv + k1 * nd + jd];
            acc += wd * ((1.0 - t) * v0 + t * v1);
        }
        num += w_sp * acc;
        den += w_sp;
    }
    num / den
}

/// Fibonacci direction set rotated so no direction aligns with
/// `zeta` (the kernel is singular along that ray).
fn rotated_directions(zeta: Vec3, n: usize) -> Vec<Vec3> {
    let mut dirs: Vec<Vec3> = (0..n)
        .map(|i| crate::geometry::fibonacci_direction(i, n))
        .collect();
    let speed = zeta.norm();
    if speed < 1e-12 {
        return dirs;
    }
    let zhat = zeta / speed;
    let spacing = (4.0 * std::f64::consts::PI / n as f64).sqrt();
    let min_angle = dirs
        .iter()
        .map(|d| d.dot(zhat).clamp(-1.0, 1.0).acos().min((-*d).dot(zhat).clamp(-1.0, 1.0).acos()))
        .fold(f64::INFINITY, f64::min);
    if min_angle < 0.25 * spacing {
        // rotate by half a spacing about an axis orthogonal to zeta
        let (axis, _) = zhat.orthonormal_frame();
        let angle = 0.5 * spacing;
        let (sin, cos) = angle.sin_cos();
        for d in &mut dirs {
            // Rodrigues rotation
            *d = *d * cos + axis.cross(*d) * sin + axis * (axis.dot(*d) * (1.0 - cos));
        }
    }
    dirs
}

/// The three terms of the twice-iterated integral equation at a
/// non-grazing phase point: damped boundary term, single-collision term
/// and multiple-collision term.  Their sum reproduces `f`.
pub fn decompose_scattering(
    scene: &Scene,
    psi: &WallFlux,
    temperature: &BoundaryTemperature,
    ktab: &KTable,
    x: Vec3,
    zeta: Vec3,
) -> Result<(f64, f64, f64)> {
    let hit = scene.domain.exit_ray(x, zeta)?;
    if hit.normal_component < scene.grid.grazing_cutoff() {
        return Err(Error::InvalidArgument(format!(
            "grazing phase point (N = {:.2e})",
            hit.normal_component
        )));
    }
    let nu = scene.model.nu(zeta.norm());
    let direct = direct_term(scene, psi, temperature, x, zeta)?;
    let mut single = 0.0;
    let mut multiple = 0.0;
    for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
        let y = x - zeta * s;
        single += w * smoothed_direct_term(scene, psi, temperature, y, zeta)?;
        multiple += w * scatter_source_grid(scene, ktab, y, zeta)?;
    }
    Ok((direct, single, multiple))
}

/// Time-damped integral of the volume-form mixing field along the ray;
/// the cross-check partner of the multiple-collision term.
pub fn multiple_scattering_volume_route(
    scene: &Scene,
    ktab: &KTable,
    x: Vec3,
    zeta: Vec3,
    n_directions: usize,
) -> Result<f64> {
    let hit = scene.domain.exit_ray(x, zeta)?;
    let nu = scene.model.nu(zeta.norm());
    let mut acc = 0.0;
    for (s, w) in scene.ray_rule(nu, hit.tau_minus) {
        acc += w * scatter_source_volume(scene, ktab, x - zeta * s, zeta, n_directions)?;
    }
    Ok(acc)
}
