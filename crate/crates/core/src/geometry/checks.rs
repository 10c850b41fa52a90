//! Numerical verification of the geometric inequalities used by the
//! transport estimates: the inverse-square surface integral's log
//! growth, the exponential-map lower bound, chord/normal tangency
//! ratios, square-root distance bounds near the boundary, the
//! interior-segment distance bound, and the exit-time derivative
//! bounds.  All are sampled sweeps; each row reports the two sides of
//! an inequality and their ratio.

use super::{BoundaryMesh, ConvexDomain};
use crate::error::{Error, Result};
use crate::vec3::Vec3;
use rand::Rng;

/// Generic per-sample record of an inequality check.
#[derive(Debug, Clone)]
pub struct CheckRow {
    pub check: &'static str,
    pub sample: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
    pub pass: bool,
}

/// Row of the inverse-square surface-integral sweep.
#[derive(Debug, Clone, Copy)]
pub struct InverseSquareRow {
    pub d_x: f64,
    pub integral: f64,
    /// integral / (|ln d_x| + 1); bounded over the sweep
    pub ratio: f64,
}

/// Surface quadrature of `integral |x-y|^{-2} dA(y)` for each interior
/// sample, reported against the expected `|ln d_x| + 1` growth.
///
/// Fails with [`Error::UnderResolved`] when the mesh spacing near the
/// closest boundary point is not finer than `d_x / 4`.
pub fn inverse_square_log_check(
    domain: &ConvexDomain,
    mesh: &BoundaryMesh,
    xs: &[Vec3],
) -> Result<Vec<InverseSquareRow>> {
    let mut rows = Vec::with_capacity(xs.len());
    for &x in xs {
        let d_x = domain.boundary_distance(x);
        if d_x <= 0.0 {
            return Err(Error::InvalidArgument(
                "inverse-square check needs strictly interior samples".into(),
            ));
        }
        let spacing = mesh.local_spacing(domain.project_to_boundary(x));
        if spacing >= d_x / 4.0 {
            return Err(Error::UnderResolved {
                required: d_x / 4.0,
                actual: spacing,
            });
        }
        let mut integral = 0.0;
        for (y, w) in mesh.nodes().iter().zip(mesh.weights()) {
            integral += w / (x - *y).norm_squared();
        }
        rows.push(InverseSquareRow {
            d_x,
            integral,
            ratio: integral / (d_x.ln().abs() + 1.0),
        });
    }
    Ok(rows)
}

/// Max/min of the reported ratios; the boundedness assertion for
/// ratio sweeps.
pub fn ratio_spread(ratios: impl IntoIterator<Item = f64>) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = 0.0f64;
    for r in ratios {
        lo = lo.min(r);
        hi = hi.max(r);
    }
    hi / lo
}

/// Sample for the exponential-map inequality: `x` sits inward of `p0`
/// along the normal, `v` is tangent at `p0`.
#[derive(Debug, Clone, Copy)]
pub struct ExpMapSample {
    pub p0: Vec3,
    pub x: Vec3,
    pub v: Vec3,
}

pub fn sample_exp_map(domain: &ConvexDomain, rng: &mut impl Rng, n: usize) -> Vec<ExpMapSample> {
    let r1 = domain.geodesic_radius();
    (0..n)
        .map(|_| {
            let p0 = random_boundary_point(domain, rng);
            let d = rng.gen_range(0.0..r1);
            let x = p0 - domain.outward_normal(p0) * d;
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let len = rng.gen_range(0.0..r1);
            ExpMapSample {
                p0,
                x,
                v: domain.tangent_at(p0, angle) * len,
            }
        })
        .collect()
}

/// Checks `|x - p0|^2 + |v|^2 / 2 <= |Exp_{p0}(v) - x|^2` on every
/// sample.
pub fn exp_map_lower_bound_check(
    domain: &ConvexDomain,
    samples: &[ExpMapSample],
) -> Result<Vec<CheckRow>> {
    let mut rows = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        let end = domain.exp_map(s.p0, s.v)?;
        let lhs = s.x.distance(s.p0).powi(2) + 0.5 * s.v.norm_squared();
        let rhs = end.distance(s.x).powi(2);
        rows.push(CheckRow {
            check: "exp_map_lower_bound",
            sample: i,
            lhs,
            rhs,
            ratio: lhs / rhs.max(1e-300),
            pass: lhs <= rhs + 1e-12,
        });
    }
    Ok(rows)
}

/// Chord/normal tangency ratios for geodesically close boundary pairs:
///
/// - `|n(x).(x-y)| / |x-y|^2`
/// - `|n(y).(x-y)| / |x-y|^2`
/// - `|n(y).v| / |x-y|` with `v` the unit tangent at `x` toward `y`
///
/// All three stay below `4 b`, `b` the curvature bound.
pub fn tangency_ratio_check(
    domain: &ConvexDomain,
    rng: &mut impl Rng,
    n_pairs: usize,
) -> Result<Vec<CheckRow>> {
    let r1 = domain.geodesic_radius();
    let cap = 4.0 * domain.curvature_bound();
    let mut rows = Vec::with_capacity(3 * n_pairs);
    for i in 0..n_pairs {
        let x = random_boundary_point(domain, rng);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        let v = domain.tangent_at(x, angle);
        // log-spaced separations expose the y -> x limit
        let s = r1 * 10f64.powf(rng.gen_range(-3.0..0.0));
        let y = domain.exp_map(x, v * s)?;
        let chord = (x - y).norm();
        if chord < 1e-12 {
            continue;
        }
        let nx = domain.outward_normal(x);
        let ny = domain.outward_normal(y);
        let triples = [
            ("tangency_nx_chord", nx.dot(x - y).abs() / (chord * chord)),
            ("tangency_ny_chord", ny.dot(x - y).abs() / (chord * chord)),
            ("tangency_ny_tangent", ny.dot(v).abs() / chord),
        ];
        for (name, ratio) in triples {
            rows.push(CheckRow {
                check: name,
                sample: i,
                lhs: ratio,
                rhs: cap,
                ratio: ratio / cap,
                pass: ratio <= cap,
            });
        }
    }
    Ok(rows)
}

/// Near-boundary square-root bounds.  For `y` inside with projection
/// `Y` and any boundary `x`:  `n(Y).(x-y) >= 0` implies
/// `|x-y| <= sqrt(2 R3 d_y)`, and `n(Y).(x-y) <= 0` implies
/// `|x-y| >= sqrt(R2 d_y)`.
pub fn sqrt_distance_check(
    domain: &ConvexDomain,
    rng: &mut impl Rng,
    n_samples: usize,
) -> Result<Vec<CheckRow>> {
    let r0 = domain.inner_radius();
    let c_upper = (2.0 * domain.outer_radius()).sqrt();
    let c_lower = domain.inner_radius().sqrt();
    let mut rows = Vec::with_capacity(n_samples);
    let mut i = 0;
    let mut guard = 0;
    while i < n_samples && guard < 50 * n_samples {
        guard += 1;
        let yb = random_boundary_point(domain, rng);
        let d_y = rng.gen_range(1e-4..r0);
        let y = yb - domain.outward_normal(yb) * d_y;
        let x = random_boundary_point(domain, rng);
        let proj = domain.project_to_boundary(y);
        if proj.distance(yb) > 1e-6 * domain.diameter() {
            // ambiguous projection; skip the sample
            continue;
        }
        let side = domain.outward_normal(proj).dot(x - y);
        let dist = x.distance(y);
        let sqrt_d = d_y.sqrt();
        let (name, lhs, rhs, pass) = if side >= 0.0 {
            let rhs = c_upper * sqrt_d;
            ("sqrt_bound_same_side", dist, rhs, dist <= rhs * (1.0 + 1e-9))
        } else {
            let rhs = c_lower * sqrt_d;
            ("sqrt_bound_far_side", dist, rhs, dist >= rhs * (1.0 - 1e-9))
        };
        rows.push(CheckRow {
            check: name,
            sample: i,
            lhs,
            rhs,
            ratio: lhs / rhs,
            pass,
        });
        i += 1;
    }
    Ok(rows)
}

/// Distance bound along exit segments: for `z` on the segment from `x`
/// to its exit point `X`, `d_z >= (d_x / R) |z - X|`.
pub fn segment_distance_check(
    domain: &ConvexDomain,
    rng: &mut impl Rng,
    n_samples: usize,
) -> Result<Vec<CheckRow>> {
    let diam = domain.diameter();
    let mut rows = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let x = random_interior_point(domain, rng, 0.02);
        let zeta = random_direction(rng) * rng.gen_range(0.2..4.0);
        let hit = domain.exit_ray(x, zeta)?;
        let t = rng.gen_range(0.0..hit.tau_minus);
        let z = x - zeta * t;
        let d_x = domain.boundary_distance(x);
        let d_z = domain.boundary_distance(z);
        let lhs = d_z;
        let rhs = d_x / diam * z.distance(hit.exit_point);
        rows.push(CheckRow {
            check: "segment_distance",
            sample: i,
            lhs,
            rhs,
            ratio: if lhs > 0.0 { rhs / lhs } else { 0.0 },
            pass: lhs >= rhs * (1.0 - 1e-9),
        });
    }
    Ok(rows)
}

/// Central-difference bounds on the exit data.  For non-grazing
/// samples:
///
/// - `|d tau / d x_i| <= 2 / (N |zeta|)`
/// - `|d p / d x_i| <= 1 / N`
/// - `|d tau / d zeta_i| <= tau / (N |zeta|)`
/// - `|d p / d zeta_i| <= tau (1 + 1 / N)`
/// - `tau >= d_x / (N |zeta|)`
///
/// each up to the finite-difference slack factor.  The exit-point
/// velocity derivative follows from the implicit formula
/// `dp/dzeta_i = -tau (e_i - zeta n_i / (n . zeta))`, whose norm is at
/// most `tau (1 + 1/N)`.  Returns the rows and the number of grazing
/// samples excluded.
pub fn exit_derivative_check(
    domain: &ConvexDomain,
    rng: &mut impl Rng,
    n_samples: usize,
    grazing_cutoff: f64,
    slack: f64,
) -> Result<(Vec<CheckRow>, usize)> {
    let mut rows = Vec::new();
    let mut excluded = 0;
    let h_x = 1e-6 * domain.diameter();
    let mut accepted = 0;
    let mut guard = 0;
    while accepted < n_samples && guard < 100 * n_samples {
        guard += 1;
        let x = random_interior_point(domain, rng, 0.03);
        let zeta = random_direction(rng) * rng.gen_range(0.3..3.0);
        let hit = domain.exit_ray(x, zeta)?;
        let nn = hit.normal_component;
        if nn < grazing_cutoff {
            excluded += 1;
            continue;
        }
        // keep the finite-difference stencil strictly interior
        if domain.boundary_distance(x) < 4.0 * h_x {
            continue;
        }
        let speed = zeta.norm();
        let tau = hit.tau_minus;
        let d_x = domain.boundary_distance(x);
        let h_z = 1e-6 * speed.max(1.0);

        for i in 0..3 {
            let e = Vec3::axis(i);
            let hp = domain.exit_ray(x + e * h_x, zeta)?;
            let hm = domain.exit_ray(x - e * h_x, zeta)?;
            let dtau = (hp.tau_minus - hm.tau_minus) / (2.0 * h_x);
            let dp = (hp.exit_point - hm.exit_point) / (2.0 * h_x);
            push_bound(
                &mut rows,
                "exit_dtau_dx",
                accepted,
                dtau.abs(),
                2.0 / (nn * speed) * slack,
            );
            push_bound(&mut rows, "exit_dp_dx", accepted, dp.norm(), 1.0 / nn * slack);

            let gp = domain.exit_ray(x, zeta + e * h_z)?;
            let gm = domain.exit_ray(x, zeta - e * h_z)?;
            let dtau_z = (gp.tau_minus - gm.tau_minus) / (2.0 * h_z);
            let dp_z = (gp.exit_point - gm.exit_point) / (2.0 * h_z);
            push_bound(
                &mut rows,
                "exit_dtau_dzeta",
                accepted,
                dtau_z.abs(),
                tau / (nn * speed) * slack,
            );
            push_bound(
                &mut rows,
                "exit_dp_dzeta",
                accepted,
                dp_z.norm(),
                tau * (1.0 + 1.0 / nn) * slack,
            );
        }
        push_bound(
            &mut rows,
            "exit_tau_lower",
            accepted,
            d_x / (nn * speed),
            tau * (1.0 + 1e-9),
        );
        accepted += 1;
    }
    Ok((rows, excluded))
}

fn push_bound(rows: &mut Vec<CheckRow>, check: &'static str, sample: usize, lhs: f64, rhs: f64) {
    rows.push(CheckRow {
        check,
        sample,
        lhs,
        rhs,
        ratio: lhs / rhs.max(1e-300),
        pass: lhs <= rhs,
    });
}

/// Uniform-ish random boundary point: random direction pushed onto the
/// surface.
pub fn random_boundary_point(domain: &ConvexDomain, rng: &mut impl Rng) -> Vec3 {
    let dir = random_direction(rng);
    dir * domain.radial_boundary(dir)
}

/// Random interior point with boundary distance at least
/// `margin * diameter`.
pub fn random_interior_point(domain: &ConvexDomain, rng: &mut impl Rng, margin: f64) -> Vec3 {
    loop {
        let dir = random_direction(rng);
        let r = domain.radial_boundary(dir);
        let p = dir * (r * rng.gen_range(0.0..1.0f64).powf(1.0 / 3.0));
        if domain.boundary_distance(p) > margin * domain.diameter() {
            return p;
        }
    }
}

pub fn random_direction(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n2 = v.norm_squared();
        if n2 > 0.01 && n2 < 1.0 {
            return v / n2.sqrt();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn inverse_square_center_of_sphere() {
        let dom = ConvexDomain::unit_sphere();
        let mesh = BoundaryMesh::fibonacci(&dom, 8000);
        let rows = inverse_square_log_check(&dom, &mesh, &[Vec3::default()]).unwrap();
        assert_relative_eq!(rows[0].integral, 4.0 * std::f64::consts::PI, max_relative = 1e-6);
    }

    #[test]
    fn inverse_square_sphere_closed_form() {
        // x at distance a from the center: (2 pi / a) ln((1+a)/(1-a))
        let dom = ConvexDomain::unit_sphere();
        let mesh = BoundaryMesh::fibonacci(&dom, 60_000);
        let d = 0.1;
        let a = 1.0 - d;
        let rows =
            inverse_square_log_check(&dom, &mesh, &[Vec3::new(0.0, 0.0, a)]).unwrap();
        let exact = 2.0 * std::f64::consts::PI / a * ((1.0 + a) / (1.0 - a)).ln();
        assert_relative_eq!(rows[0].integral, exact, max_relative = 1e-4);
    }

    #[test]
    fn inverse_square_rejects_under_resolved_mesh() {
        let dom = ConvexDomain::unit_sphere();
        let mesh = BoundaryMesh::fibonacci(&dom, 100);
        let err = inverse_square_log_check(&dom, &mesh, &[Vec3::new(0.0, 0.0, 0.99)]);
        assert!(matches!(err, Err(Error::UnderResolved { .. })));
    }

    #[test]
    fn exp_map_bound_equality_at_zero_tangent() {
        let dom = ConvexDomain::unit_sphere();
        let p0 = Vec3::new(0.0, 0.0, 1.0);
        let samples = [ExpMapSample {
            p0,
            x: Vec3::new(0.0, 0.0, 0.9),
            v: Vec3::default(),
        }];
        let rows = exp_map_lower_bound_check(&dom, &samples).unwrap();
        assert!(rows[0].pass);
        assert_relative_eq!(rows[0].lhs, rows[0].rhs, epsilon = 1e-12);
    }

    #[test]
    fn exp_map_bound_sphere_closed_form() {
        // on the unit sphere the right side is 1 + (1-d)^2 - 2(1-d) cos s
        let dom = ConvexDomain::unit_sphere();
        let p0 = Vec3::new(0.0, 1.0, 0.0);
        let d = 0.15;
        let x = p0 * (1.0 - d);
        let v = dom.tangent_at(p0, 0.4);
        for s in [0.05, 0.12, 0.25] {
            let rows = exp_map_lower_bound_check(
                &dom,
                &[ExpMapSample { p0, x, v: v * s }],
            )
            .unwrap();
            let want = 1.0 + (1.0 - d).powi(2) - 2.0 * (1.0 - d) * s.cos();
            assert_relative_eq!(rows[0].rhs, want, max_relative = 1e-8);
            assert!(rows[0].pass);
        }
    }

    #[test]
    fn exp_map_bound_random_ellipsoid() {
        let dom = ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples = sample_exp_map(&dom, &mut rng, 200);
        let rows = exp_map_lower_bound_check(&dom, &samples).unwrap();
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn tangency_ratio_sphere_is_half() {
        // |n(x).(x-y)| = |x-y|^2 / 2 exactly on the unit sphere
        let dom = ConvexDomain::unit_sphere();
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let rows = tangency_ratio_check(&dom, &mut rng, 50).unwrap();
        for r in rows.iter().filter(|r| r.check == "tangency_nx_chord") {
            assert_relative_eq!(r.lhs, 0.5, max_relative = 1e-5);
        }
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn tangency_ratios_bounded_on_ellipsoid() {
        let dom = ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let rows = tangency_ratio_check(&dom, &mut rng, 400).unwrap();
        assert!(!rows.is_empty());
        assert!(rows.iter().all(|r| r.pass));
    }

    #[test]
    fn sqrt_bounds_sphere_and_ellipsoid() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for dom in [
            ConvexDomain::unit_sphere(),
            ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap(),
        ] {
            let rows = sqrt_distance_check(&dom, &mut rng, 400).unwrap();
            assert!(rows.len() >= 350);
            let failures: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
            assert!(failures.is_empty(), "failures: {failures:?}");
        }
    }

    #[test]
    fn segment_distance_endpoints() {
        let dom = ConvexDomain::unit_sphere();
        // z = x: d_x >= d_x/R |x - X| since |x - X| <= R
        let x = Vec3::new(0.3, 0.1, -0.2);
        let zeta = Vec3::new(1.0, 0.2, 0.0);
        let hit = dom.exit_ray(x, zeta).unwrap();
        let d_x = dom.boundary_distance(x);
        assert!(d_x >= d_x / dom.diameter() * x.distance(hit.exit_point) - 1e-12);
    }

    #[test]
    fn segment_distance_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for dom in [
            ConvexDomain::unit_sphere(),
            ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap(),
        ] {
            let rows = segment_distance_check(&dom, &mut rng, 300).unwrap();
            assert!(rows.iter().all(|r| r.pass));
        }
    }

    #[test]
    fn exit_derivatives_sphere_center_closed_form() {
        // from the center tau = 1/|zeta| and the zeta-derivative bound
        // tau/(N|zeta|) = 1/|zeta|^2 is attained by |zeta_i|/|zeta|^3
        let dom = ConvexDomain::unit_sphere();
        let zeta = Vec3::new(0.8, -0.3, 0.5);
        let speed = zeta.norm();
        let h = 1e-6;
        let e = Vec3::axis(0);
        let tp = dom.exit_ray(Vec3::default(), zeta + e * h).unwrap().tau_minus;
        let tm = dom.exit_ray(Vec3::default(), zeta - e * h).unwrap().tau_minus;
        let dtau = (tp - tm) / (2.0 * h);
        let analytic = -zeta.x / speed.powi(3);
        assert_relative_eq!(dtau, analytic, max_relative = 1e-5);
        assert!(dtau.abs() <= 1.0 / (speed * speed) + 1e-9);
    }

    #[test]
    fn exit_derivative_bounds_random_ellipsoid() {
        let dom = ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let (rows, _excluded) = exit_derivative_check(&dom, &mut rng, 120, 1e-3, 1.05).unwrap();
        let failures: Vec<_> = rows.iter().filter(|r| !r.pass).collect();
        assert!(failures.is_empty(), "failing rows: {failures:?}");
    }

    #[test]
    fn exit_point_lipschitz_in_x() {
        // |X - Y| <= |x - y| / N(x, zeta) whenever |x-X| <= |y-Y|
        let dom = ConvexDomain::ellipsoid(1.0, 1.5, 2.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let x = random_interior_point(&dom, &mut rng, 0.02);
            let y = x + random_direction(&mut rng) * 1e-3;
            if !dom.contains(y) {
                continue;
            }
            let zeta = random_direction(&mut rng);
            let hx = dom.exit_ray(x, zeta).unwrap();
            let hy = dom.exit_ray(y, zeta).unwrap();
            let (near, far, nn) = if hx.tau_minus <= hy.tau_minus {
                (hx, hy, hx.normal_component)
            } else {
                (hy, hx, hy.normal_component)
            };
            if nn < 1e-3 {
                continue;
            }
            let lhs = near.exit_point.distance(far.exit_point);
            let bound = x.distance(y) / nn;
            assert!(lhs <= bound * (1.0 + 1e-6), "{lhs} vs {bound}");
            let travel_diff = ((hx.tau_minus * zeta.norm()) - (hy.tau_minus * zeta.norm())).abs();
            assert!(travel_diff <= 2.0 * x.distance(y) / nn * (1.0 + 1e-6));
        }
    }
}
