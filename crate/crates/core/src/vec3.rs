//! Minimal 3-vector arithmetic.  Points, velocities and normals all use
//! [`Vec3`]; the distinction is carried by the surrounding code.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const ZERO: Vec3 = Vec3 {
    x: 0.0,
    y: 0.0,
    z: 0.0,
};

impl Vec3 {
    #[inline]
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    #[inline]
    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3 {
            x: self.y * o.z - self.z * o.y,
            y: self.z * o.x - self.x * o.z,
            z: self.x * o.y - self.y * o.x,
        }
    }

    #[inline]
    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.norm_squared().sqrt()
    }

    #[inline]
    pub fn distance(self, o: Vec3) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction.  The caller guarantees a
    /// nonzero argument.
    #[inline]
    pub fn normalized(self) -> Vec3 {
        self / self.norm()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    #[inline]
    pub fn component(self, i: usize) -> f64 {
        match i {
            0 => self.x,
            1 => self.y,
            2 => self.z,
            _ => panic!("component index out of range: {i}"),
        }
    }

    /// Standard basis vector `e_i`.
    #[inline]
    pub fn axis(i: usize) -> Vec3 {
        match i {
            0 => Vec3::new(1.0, 0.0, 0.0),
            1 => Vec3::new(0.0, 1.0, 0.0),
            2 => Vec3::new(0.0, 0.0, 1.0),
            _ => panic!("axis index out of range: {i}"),
        }
    }

    /// Deterministic orthonormal frame `(e1, e2)` spanning the plane
    /// orthogonal to `self` (assumed unit length).
    pub fn orthonormal_frame(self) -> (Vec3, Vec3) {
        // seed with the coordinate axis least aligned with self
        let ax = self.x.abs();
        let ay = self.y.abs();
        let az = self.z.abs();
        let seed = if ax <= ay && ax <= az {
            Vec3::axis(0)
        } else if ay <= az {
            Vec3::axis(1)
        } else {
            Vec3::axis(2)
        };
        let e1 = self.cross(seed).normalized();
        let e2 = self.cross(e1);
        (e1, e2)
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    #[inline]
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    #[inline]
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    #[inline]
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl SubAssign for Vec3 {
    #[inline]
    fn sub_assign(&mut self, o: Vec3) {
        *self = *self - o;
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Mul<Vec3> for f64 {
    type Output = Vec3;
    #[inline]
    fn mul(self, v: Vec3) -> Vec3 {
        v * self
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    #[inline]
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    #[inline]
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// Symmetric 3x3 matrix, stored row-major.  Used for implicit-surface
/// Hessians and curvature computations.
#[derive(Debug, Clone, Copy)]
pub struct Mat3 {
    pub m: [[f64; 3]; 3],
}

impl Mat3 {
    pub fn zero() -> Self {
        Mat3 { m: [[0.0; 3]; 3] }
    }

    pub fn diagonal(a: f64, b: f64, c: f64) -> Self {
        let mut m = [[0.0; 3]; 3];
        m[0][0] = a;
        m[1][1] = b;
        m[2][2] = c;
        Mat3 { m }
    }

    #[inline]
    pub fn apply(&self, v: Vec3) -> Vec3 {
        Vec3::new(
            self.m[0][0] * v.x + self.m[0][1] * v.y + self.m[0][2] * v.z,
            self.m[1][0] * v.x + self.m[1][1] * v.y + self.m[1][2] * v.z,
            self.m[2][0] * v.x + self.m[2][1] * v.y + self.m[2][2] * v.z,
        )
    }

    /// Quadratic form v^T M v.
    #[inline]
    pub fn quad(&self, v: Vec3) -> f64 {
        v.dot(self.apply(v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cross_is_orthogonal() {
        let a = Vec3::new(1.0, 2.0, 3.0);
        let b = Vec3::new(-0.5, 0.25, 2.0);
        let c = a.cross(b);
        assert_relative_eq!(c.dot(a), 0.0, epsilon = 1e-14);
        assert_relative_eq!(c.dot(b), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn frame_is_orthonormal() {
        for v in [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.6, -0.8, 0.0),
            Vec3::new(0.577, 0.577, 0.577).normalized(),
        ] {
            let (e1, e2) = v.orthonormal_frame();
            assert_relative_eq!(e1.norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(e2.norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(e1.dot(v), 0.0, epsilon = 1e-12);
            assert_relative_eq!(e2.dot(v), 0.0, epsilon = 1e-12);
            assert_relative_eq!(e1.dot(e2), 0.0, epsilon = 1e-12);
        }
    }
}
