use core::ops::{Add, AddAssign, Mul, Neg, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

pub const ORIGIN: Point3 = Point3::new(0.0, 0.0, 0.0);

impl Point3 {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    #[inline]
    pub fn set_coord(&mut self, axis: usize, value: f64) {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
    }

    #[inline]
    pub fn dot(&self, other: &Point3) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn cross(&self, other: &Point3) -> Point3 {
        Point3::new(
            self.y * other.z - self.z * other.y,
            self.z * other.x - self.x * other.z,
            self.x * other.y - self.y * other.x,
        )
    }

    #[inline]
    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    #[inline]
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.norm_squared())
    }

    #[inline]
    pub fn distance(&self, other: &Point3) -> f64 {
        (*self - *other).norm()
    }

    /// `(1 - t) * self + t * other`.
    #[inline]
    pub fn lerp(&self, other: &Point3, t: f64) -> Point3 {
        Point3::new(
            (1.0 - t) * self.x + t * other.x,
            (1.0 - t) * self.y + t * other.y,
            (1.0 - t) * self.z + t * other.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

impl Add for Point3 {
    type Output = Point3;
    #[inline]
    fn add(self, rhs: Point3) -> Point3 {
        Point3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Point3 {
    #[inline]
    fn add_assign(&mut self, rhs: Point3) {
        self.x += rhs.x;
        self.y += rhs.y;
        self.z += rhs.z;
    }
}

impl Sub for Point3 {
    type Output = Point3;
    #[inline]
    fn sub(self, rhs: Point3) -> Point3 {
        Point3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Point3 {
    type Output = Point3;
    #[inline]
    fn neg(self) -> Point3 {
        Point3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Point3 {
    type Output = Point3;
    #[inline]
    fn mul(self, rhs: f64) -> Point3 {
        Point3::new(self.x * rhs, self.y * rhs, self.z * rhs)
    }
}

/// Signed volume of the tetrahedron `(a, b, c, d)`.
#[inline]
pub fn signed_volume(a: &Point3, b: &Point3, c: &Point3, d: &Point3) -> f64 {
    (*b - *a).cross(&(*c - *a)).dot(&(*d - *a)) / 6.0
}

/// Longest edge of a tetrahedron.
pub fn diameter(p: &[Point3; 4]) -> f64 {
    let mut best = 0.0f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            best = best.max(p[i].distance(&p[j]));
        }
    }
    best
}

/// Gradients of the four barycentric coordinates of a tetrahedron, together
/// with its unsigned volume.
pub fn barycentric_gradients(p: &[Point3; 4]) -> ([Point3; 4], f64) {
    let e1 = p[1] - p[0];
    let e2 = p[2] - p[0];
    let e3 = p[3] - p[0];
    let det = e1.cross(&e2).dot(&e3);
    // Rows of the inverse Jacobian.
    let g1 = e2.cross(&e3) * (1.0 / det);
    let g2 = e3.cross(&e1) * (1.0 / det);
    let g3 = e1.cross(&e2) * (1.0 / det);
    let g0 = -(g1 + g2 + g3);
    ([g0, g1, g2, g3], det.abs() / 6.0)
}

/// Physical point for barycentric coordinates `bary` on `p`.
#[inline]
pub fn from_barycentric(p: &[Point3; 4], bary: &[f64; 4]) -> Point3 {
    Point3::new(
        bary[0] * p[0].x + bary[1] * p[1].x + bary[2] * p[2].x + bary[3] * p[3].x,
        bary[0] * p[0].y + bary[1] * p[1].y + bary[2] * p[2].y + bary[3] * p[3].y,
        bary[0] * p[0].z + bary[1] * p[1].z + bary[2] * p[2].z + bary[3] * p[3].z,
    )
}

/// Barycentric coordinates of `q` with respect to `p`.
pub fn to_barycentric(p: &[Point3; 4], q: &Point3) -> [f64; 4] {
    let total = signed_volume(&p[0], &p[1], &p[2], &p[3]);
    let l0 = signed_volume(q, &p[1], &p[2], &p[3]) / total;
    let l1 = signed_volume(&p[0], q, &p[2], &p[3]) / total;
    let l2 = signed_volume(&p[0], &p[1], q, &p[3]) / total;
    let l3 = signed_volume(&p[0], &p[1], &p[2], q) / total;
    [l0, l1, l2, l3]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_tet_gradients() {
        let p = [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ];
        let (g, vol) = barycentric_gradients(&p);
        assert!((vol - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(g[1], Point3::new(1.0, 0.0, 0.0));
        assert_eq!(g[0], Point3::new(-1.0, -1.0, -1.0));
        let q = Point3::new(0.1, 0.2, 0.3);
        let b = to_barycentric(&p, &q);
        assert!((b[0] - 0.4).abs() < 1e-15);
        assert!(from_barycentric(&p, &b).distance(&q) < 1e-15);
    }
}
