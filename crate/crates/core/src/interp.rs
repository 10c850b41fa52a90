//! Spatial hashing and inverse-distance interpolation over scattered
//! point sets.

use crate::vec3::Vec3;
use std::collections::HashMap;

/// Uniform-cell spatial hash over a fixed point set.  Queries are
/// deterministic: candidates accumulate ring by ring into a small
/// insertion-sorted top-k, ties broken by index.
#[derive(Debug, Clone)]
pub struct PointCloud {
    points: Vec<Vec3>,
    cell: f64,
    buckets: HashMap<(i32, i32, i32), Vec<u32>>,
}

impl PointCloud {
    pub fn build(points: Vec<Vec3>, cell: f64) -> Self {
        assert!(cell > 0.0 && !points.is_empty());
        let mut buckets: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(*p, cell)).or_default().push(i as u32);
        }
        PointCloud {
            points,
            cell,
            buckets,
        }
    }

    /// Cell size near the mean point spacing.
    pub fn build_auto(points: Vec<Vec3>) -> Self {
        let n = points.len().max(1);
        let mut lo = points[0];
        let mut hi = points[0];
        for p in &points {
            lo = Vec3::new(lo.x.min(p.x), lo.y.min(p.y), lo.z.min(p.z));
            hi = Vec3::new(hi.x.max(p.x), hi.y.max(p.y), hi.z.max(p.z));
        }
        let ext = hi - lo;
        let vol = (ext.x.max(1e-9)) * (ext.y.max(1e-9)) * (ext.z.max(1e-9));
        let cell = ((vol / n as f64).cbrt() * 1.5).max(1e-6);
        Self::build(points, cell)
    }

    #[inline]
    fn key(p: Vec3, cell: f64) -> (i32, i32, i32) {
        (
            (p.x / cell).floor() as i32,
            (p.y / cell).floor() as i32,
            (p.z / cell).floor() as i32,
        )
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    /// Indices and distances of the `k` nearest points, closest first
    /// (`k <= 8`).
    pub fn nearest_k(&self, x: Vec3, k: usize) -> NearestIter {
        let k = k.min(self.points.len()).min(8);
        let mut best = NearestIter {
            items: [(usize::MAX, f64::INFINITY); 8],
            len: 0,
            cap: k,
            cursor: 0,
        };
        let center = Self::key(x, self.cell);
        let mut ring = 0i32;
        loop {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(bucket) =
                            self.buckets.get(&(center.0 + dx, center.1 + dy, center.2 + dz))
                        {
                            for &i in bucket {
                                let d = self.points[i as usize].distance(x);
                                best.insert(i as usize, d);
                            }
                        }
                    }
                }
            }
            // every unvisited point is at least ring * cell away
            let covered = ring as f64 * self.cell;
            if best.len == best.cap && best.items[best.cap - 1].1 <= covered {
                return best;
            }
            ring += 1;
            if ring > 1_000_000 {
                return best;
            }
        }
    }

    /// Shepard (inverse-distance-squared) interpolation over the `k`
    /// nearest points.  Reproduces stored values exactly at the points.
    pub fn inverse_distance(&self, x: Vec3, k: usize, values: impl Fn(usize) -> f64) -> f64 {
        let neighbors = self.nearest_k(x, k);
        let items = neighbors.as_slice();
        if let Some(&(i, d)) = items.first() {
            if d < 1e-12 {
                return values(i);
            }
        }
        let mut num = 0.0;
        let mut den = 0.0;
        for &(i, d) in items {
            let w = 1.0 / (d * d);
            num += w * values(i);
            den += w;
        }
        num / den
    }
}

/// Fixed-capacity nearest-neighbor result (at most 8 entries), ordered
/// closest first.
#[derive(Debug, Clone, Copy)]
pub struct NearestIter {
    items: [(usize, f64); 8],
    len: usize,
    cap: usize,
    cursor: usize,
}

impl NearestIter {
    #[inline]
    fn insert(&mut self, idx: usize, dist: f64) {
        if self.len == self.cap && dist >= self.items[self.cap - 1].1 {
            return;
        }
        // insertion position: by distance, ties by index
        let mut pos = self.len.min(self.cap);
        while pos > 0 {
            let (pi, pd) = self.items[pos - 1];
            if dist < pd || (dist == pd && idx < pi) {
                pos -= 1;
            } else {
                break;
            }
        }
        if pos >= self.cap {
            return;
        }
        let end = self.len.min(self.cap - 1);
        let mut j = end;
        while j > pos {
            self.items[j] = self.items[j - 1];
            j -= 1;
        }
        self.items[pos] = (idx, dist);
        self.len = (self.len + 1).min(self.cap);
    }

    #[inline]
    pub fn as_slice(&self) -> &[(usize, f64)] {
        &self.items[..self.len]
    }

    pub fn first(&self) -> Option<(usize, f64)> {
        (self.len > 0).then(|| self.items[0])
    }
}

impl Iterator for NearestIter {
    type Item = (usize, f64);
    fn next(&mut self) -> Option<(usize, f64)> {
        if self.cursor < self.len {
            let item = self.items[self.cursor];
            self.cursor += 1;
            Some(item)
        } else {
            None
        }
    }
}

/// Halton low-discrepancy sequence in the unit cube (bases 2, 3, 5).
pub fn halton_point(index: usize) -> Vec3 {
    fn radical_inverse(mut i: usize, base: usize) -> f64 {
        let mut f = 1.0;
        let mut r = 0.0;
        while i > 0 {
            f /= base as f64;
            r += f * (i % base) as f64;
            i /= base;
        }
        r
    }
    Vec3::new(
        radical_inverse(index + 1, 2),
        radical_inverse(index + 1, 3),
        radical_inverse(index + 1, 5),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nearest_matches_brute_force() {
        let pts: Vec<Vec3> = (0..500).map(halton_point).collect();
        let cloud = PointCloud::build_auto(pts.clone());
        for q in [
            Vec3::new(0.5, 0.5, 0.5),
            Vec3::new(0.01, 0.99, 0.5),
            Vec3::new(1.2, -0.1, 0.4),
            Vec3::new(0.33, 0.21, 0.86),
        ] {
            let got: Vec<(usize, f64)> = cloud.nearest_k(q, 4).collect();
            let mut brute: Vec<(usize, f64)> = pts
                .iter()
                .enumerate()
                .map(|(i, p)| (i, p.distance(q)))
                .collect();
            brute.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
            for (g, b) in got.iter().zip(brute.iter().take(4)) {
                assert_eq!(g.0, b.0, "query {q:?}");
            }
        }
    }

    #[test]
    fn nearest_on_surface_cloud() {
        // degenerate (surface-only) point sets still resolve correctly
        let pts: Vec<Vec3> = (0..800)
            .map(|i| {
                let u = halton_point(i);
                let phi = 2.0 * std::f64::consts::PI * u.x;
                let z = 2.0 * u.y - 1.0;
                let s = (1.0 - z * z).sqrt();
                Vec3::new(s * phi.cos(), s * phi.sin(), z)
            })
            .collect();
        let cloud = PointCloud::build_auto(pts.clone());
        let q = Vec3::new(0.9, 0.1, 0.4);
        let got: Vec<(usize, f64)> = cloud.nearest_k(q, 3).collect();
        let mut brute: Vec<(usize, f64)> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| (i, p.distance(q)))
            .collect();
        brute.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        for (g, b) in got.iter().zip(brute.iter().take(3)) {
            assert_eq!(g.0, b.0);
        }
    }

    #[test]
    fn interpolation_reproduces_node_values() {
        let pts: Vec<Vec3> = (0..100).map(halton_point).collect();
        let vals: Vec<f64> = (0..100).map(|i| (i as f64).sin()).collect();
        let cloud = PointCloud::build_auto(pts.clone());
        for i in (0..100).step_by(7) {
            let v = cloud.inverse_distance(pts[i], 4, |j| vals[j]);
            assert_eq!(v, vals[i]);
        }
    }
}
