//! Quadrature on tetrahedra.
//!
//! Points are barycentric 4-tuples and weights are normalized to sum to one,
//! so `∫_T f ≈ |T| Σ w_q f(x_q)`.

use alloc::vec::Vec;

use crate::linalg::symmetric_eigen;
use crate::refine::{CHILDREN, EDGES};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub points: Vec<[f64; 4]>,
    pub weights: Vec<f64>,
    /// Total polynomial degree integrated exactly.
    pub exactness_degree: u32,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Symmetric 4-point rule, exact for quadratics.
    pub fn four_point() -> QuadRule {
        let a = 0.585_410_196_624_968_5;
        let b = 0.138_196_601_125_010_5;
        QuadRule {
            points: alloc::vec![[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]],
            weights: alloc::vec![0.25; 4],
            exactness_degree: 2,
        }
    }

    /// Conical (collapsed) product of Gauss–Jacobi rules. All weights are
    /// positive and all points interior.
    pub fn conical(degree: u32) -> QuadRule {
        let n = (degree as usize + 2) / 2;
        let (x1, w1) = gauss_jacobi_unit(n, 2);
        let (x2, w2) = gauss_jacobi_unit(n, 1);
        let (x3, w3) = gauss_jacobi_unit(n, 0);
        let mut points = Vec::with_capacity(n * n * n);
        let mut weights = Vec::with_capacity(n * n * n);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let x = x1[i];
                    let y = x2[j] * (1.0 - x);
                    let z = x3[k] * (1.0 - x) * (1.0 - x2[j]);
                    points.push([1.0 - x - y - z, x, y, z]);
                    weights.push(6.0 * w1[i] * w2[j] * w3[k]);
                }
            }
        }
        QuadRule { points, weights, exactness_degree: (2 * n - 1) as u32 }
    }

    /// Rule on the tetrahedron `(x0 + s (y - x0))`, `y` on the face opposite
    /// `x0`: Gauss–Legendre in `s` against the explicit `3 s²` Jacobian and a
    /// collapsed rule on the face. Integrands behaving like `|x - x0|^-2`
    /// times a polynomial become polynomial in `s`.
    pub fn vertex_collapsed(radial: usize, face_degree: u32) -> QuadRule {
        let (s, ws) = gauss_jacobi_unit(radial, 0);
        let m = (face_degree as usize + 2) / 2;
        let (t1, w1) = gauss_jacobi_unit(m, 1);
        let (t2, w2) = gauss_jacobi_unit(m, 0);
        let mut points = Vec::with_capacity(radial * m * m);
        let mut weights = Vec::with_capacity(radial * m * m);
        for a in 0..radial {
            for i in 0..m {
                for j in 0..m {
                    let b1 = t1[i];
                    let b2 = t2[j] * (1.0 - b1);
                    let b3 = 1.0 - b1 - b2;
                    let sa = s[a];
                    points.push([1.0 - sa, sa * b1, sa * b2, sa * b3]);
                    weights.push(3.0 * sa * sa * ws[a] * 2.0 * w1[i] * w2[j]);
                }
            }
        }
        QuadRule { points, weights, exactness_degree: face_degree.min((2 * radial - 3) as u32) }
    }

    /// [`QuadRule::vertex_collapsed`] with the radial variable split at
    /// `2^-1, …, 2^-depth`: the same geometric shells toward vertex 0 as
    /// [`singular_vertex_rule`], each integrated by a tensor rule.
    ///
    /// In collapsed coordinates `x = x0 + s (y - x0)` with `y` on the face
    /// opposite vertex 0, so `r⁻²` times a polynomial is a polynomial in `s`
    /// and a smooth function of `y`.
    pub fn graded_collapsed(radial: usize, face_degree: u32, depth: u32) -> QuadRule {
        QuadRule::graded_collapsed_cut(radial, face_degree, depth, |_| None)
    }

    /// [`QuadRule::graded_collapsed`] with every radial line additionally
    /// split at `cut(y)`, where `y` is the face point in barycentric
    /// coordinates. Used when the integrand has a kink crossing the element.
    pub fn graded_collapsed_cut(
        radial: usize,
        face_degree: u32,
        depth: u32,
        cut: impl Fn(&[f64; 4]) -> Option<f64>,
    ) -> QuadRule {
        let (t, wt) = gauss_jacobi_unit(radial, 0);
        let m = (face_degree as usize + 2) / 2;
        let (t1, w1) = gauss_jacobi_unit(m, 1);
        let (t2, w2) = gauss_jacobi_unit(m, 0);
        let mut breaks = Vec::with_capacity(depth as usize + 3);
        let mut points = Vec::with_capacity((depth as usize + 1) * radial * m * m);
        let mut weights = Vec::with_capacity(points.capacity());
        for i in 0..m {
            for j in 0..m {
                let b1 = t1[i];
                let b2 = t2[j] * (1.0 - b1);
                let y = [0.0, b1, b2, 1.0 - b1 - b2];
                let wf = 2.0 * w1[i] * w2[j];
                breaks.clear();
                breaks.push(0.0);
                breaks.extend((0..=depth).rev().map(|k| libm::ldexp(1.0, -(k as i32))));
                if let Some(c) = cut(&y).filter(|c| *c > 0.0 && *c < 1.0) {
                    if !breaks.contains(&c) {
                        breaks.push(c);
                        breaks.sort_unstable_by(f64::total_cmp);
                    }
                }
                for w in breaks.windows(2) {
                    let (lo, hi) = (w[0], w[1]);
                    for a in 0..radial {
                        let s = lo + (hi - lo) * t[a];
                        points.push([1.0 - s, s * y[1], s * y[2], s * y[3]]);
                        weights.push(3.0 * s * s * (hi - lo) * wt[a] * wf);
                    }
                }
            }
        }
        QuadRule { points, weights, exactness_degree: face_degree.min((2 * radial).saturating_sub(3) as u32) }
    }

    /// Maps this rule onto the sub-tetrahedron with barycentric vertices
    /// `verts`, scaling weights by `fraction` (its share of the volume).
    fn mapped_into(&self, verts: &[[f64; 4]; 4], fraction: f64, out: &mut QuadRule) {
        for (p, w) in self.points.iter().zip(&self.weights) {
            let mut q = [0.0; 4];
            for (c, v) in p.iter().zip(verts) {
                for i in 0..4 {
                    q[i] += c * v[i];
                }
            }
            out.points.push(q);
            out.weights.push(w * fraction);
        }
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// How the innermost tetrahedron of [`singular_vertex_rule`] is integrated.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreRule {
    /// The base rule, unchanged.
    Base,
    /// A vertex-collapsed rule that absorbs an `r⁻²` singularity.
    Collapsed(QuadRule),
}

/// Composite rule for a tetrahedron whose vertex 0 is singular.
///
/// The tetrahedron is cut into geometric shells toward vertex 0: shell `j` is
/// `T_j \ T_{j+1}` with `T_j` the copy of `T` scaled by `2^-j` about vertex 0,
/// realized as the seven non-corner children of a midpoint split of `T_j`.
/// `base` is applied on every shell piece; the residual `T_depth` uses `core`.
pub fn singular_vertex_rule(base: &QuadRule, depth: u32, core: &CoreRule) -> QuadRule {
    let e = |i: usize| {
        let mut v = [0.0; 4];
        v[i] = 1.0;
        v
    };
    let mut out = QuadRule { points: Vec::new(), weights: Vec::new(), exactness_degree: base.exactness_degree };
    let mut verts = [e(0), e(1), e(2), e(3)];
    let mut fraction = 1.0;
    for _ in 0..depth {
        let mut nodes = [[0.0; 4]; 10];
        nodes[..4].copy_from_slice(&verts);
        for (k, &(i, j)) in EDGES.iter().enumerate() {
            for c in 0..4 {
                nodes[4 + k][c] = 0.5 * (verts[i][c] + verts[j][c]);
            }
        }
        fraction /= 8.0;
        for child in CHILDREN.iter().skip(1) {
            base.mapped_into(&child.map(|l| nodes[l]), fraction, &mut out);
        }
        verts = CHILDREN[0].map(|l| nodes[l]);
    }
    match core {
        CoreRule::Base => base.mapped_into(&verts, fraction, &mut out),
        CoreRule::Collapsed(rule) => rule.mapped_into(&verts, fraction, &mut out),
    }
    out
}

/// `base` applied on each of the `8^levels` tetrahedra of repeated midpoint
/// refinement.
pub fn subdivided(base: &QuadRule, levels: u32) -> QuadRule {
    let e = |i: usize| {
        let mut v = [0.0; 4];
        v[i] = 1.0;
        v
    };
    let mut pieces = alloc::vec![[e(0), e(1), e(2), e(3)]];
    for _ in 0..levels {
        let mut next = Vec::with_capacity(8 * pieces.len());
        for verts in &pieces {
            let mut nodes = [[0.0; 4]; 10];
            nodes[..4].copy_from_slice(verts);
            for (k, &(i, j)) in EDGES.iter().enumerate() {
                for c in 0..4 {
                    nodes[4 + k][c] = 0.5 * (verts[i][c] + verts[j][c]);
                }
            }
            next.extend(CHILDREN.iter().map(|child| child.map(|l| nodes[l])));
        }
        pieces = next;
    }
    let fraction = 1.0 / pieces.len() as f64;
    let mut out = QuadRule { points: Vec::new(), weights: Vec::new(), exactness_degree: base.exactness_degree };
    for verts in &pieces {
        base.mapped_into(verts, fraction, &mut out);
    }
    out
}

/// Gauss–Jacobi rule for `∫_0^1 (1 - t)^alpha g(t) dt` (Golub–Welsch).
pub fn gauss_jacobi_unit(n: usize, alpha: u32) -> (Vec<f64>, Vec<f64>) {
    let a = alpha as f64;
    let b = 0.0;
    let mut jm = alloc::vec![0.0; n * n];
    for i in 0..n {
        let k = i as f64;
        let s = 2.0 * k + a + b;
        jm[i * n + i] = if i == 0 {
            (b - a) / (a + b + 2.0)
        } else {
            (b * b - a * a) / (s * (s + 2.0))
        };
        if i + 1 < n {
            let k = k + 1.0;
            let s = 2.0 * k + a + b;
            let off = libm::sqrt(
                4.0 * k * (k + a) * (k + b) * (k + a + b) / (s * s * (s + 1.0) * (s - 1.0)),
            );
            jm[i * n + i + 1] = off;
            jm[(i + 1) * n + i] = off;
        }
    }
    let (vals, vecs) = symmetric_eigen(&jm, n);
    // ∫_{-1}^{1} (1 - x)^a dx
    let mu0 = libm::pow(2.0, a + 1.0) / (a + 1.0);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = vals[i];
            let w = mu0 * vecs[i] * vecs[i];
            // t = (1 + x) / 2, (1 - t)^a = 2^-a (1 - x)^a, dt = dx / 2
            ((1.0 + x) / 2.0, w / libm::pow(2.0, a + 1.0))
        })
        .collect();
    pairs.sort_by(|p, q| p.0.total_cmp(&q.0));
    pairs.into_iter().unzip()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: u32) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// `∫_ref x^a y^b z^c = a! b! c! / (a + b + c + 3)!`, times 6 to normalize.
    fn monomial(a: u32, b: u32, c: u32) -> f64 {
        6.0 * factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
    }

    fn apply(rule: &QuadRule, a: u32, b: u32, c: u32) -> f64 {
        rule.points
            .iter()
            .zip(&rule.weights)
            .map(|(p, w)| w * libm::pow(p[1], a as f64) * libm::pow(p[2], b as f64) * libm::pow(p[3], c as f64))
            .sum()
    }

    fn check_exact(rule: &QuadRule) {
        let d = rule.exactness_degree;
        for a in 0..=d {
            for b in 0..=(d - a) {
                for c in 0..=(d - a - b) {
                    let got = apply(rule, a, b, c);
                    let want = monomial(a, b, c);
                    assert!((got - want).abs() < 1e-13 * want.max(1e-3), "{a} {b} {c}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn gauss_jacobi_moments() {
        for alpha in 0..3u32 {
            let (x, w) = gauss_jacobi_unit(4, alpha);
            for p in 0..8 {
                let got: f64 = x.iter().zip(&w).map(|(x, w)| w * libm::pow(*x, p as f64)).sum();
                // ∫_0^1 (1-t)^alpha t^p dt = p! alpha! / (p + alpha + 1)!
                let want = factorial(p) * factorial(alpha) / factorial(p + alpha + 1);
                assert!((got - want).abs() < 1e-14, "alpha {alpha} p {p}");
            }
        }
    }

    #[test]
    fn standard_rules_are_exact() {
        check_exact(&QuadRule::four_point());
        for d in 1..=9 {
            let r = QuadRule::conical(d);
            assert!(r.exactness_degree >= d);
            assert!(r.weights.iter().all(|&w| w > 0.0));
            check_exact(&r);
        }
    }

    #[test]
    fn composite_rule_partitions_the_tet() {
        let base = QuadRule::conical(4);
        for depth in 0..6 {
            let r = singular_vertex_rule(&base, depth, &CoreRule::Base);
            assert!((r.weight_sum() - 1.0).abs() < 1e-12);
            assert_eq!(r.len(), base.len() * (7 * depth as usize + 1));
            // Polynomials stay exact on the partition.
            check_exact(&QuadRule { exactness_degree: 4, ..r });
        }
    }

    #[test]
    fn subdivided_rule_stays_exact() {
        let r = subdivided(&QuadRule::conical(3), 2);
        assert_eq!(r.len(), 64 * 8);
        check_exact(&r);
    }

    #[test]
    fn graded_collapsed_rule_is_exact() {
        for depth in [0, 3, 8] {
            let r = QuadRule::graded_collapsed(5, 6, depth);
            assert!((r.weight_sum() - 1.0).abs() < 1e-13);
            check_exact(&r);
        }
    }

    #[test]
    fn graded_rule_integrates_inverse_square() {
        // ∫ |x|⁻² over the reference tetrahedron, by high-precision cubature.
        let exact = 1.059_052_035_033_642_959;
        let r = QuadRule::graded_collapsed(4, 14, 8);
        let got: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(b, w)| w / 6.0 / (b[1] * b[1] + b[2] * b[2] + b[3] * b[3]))
            .sum();
        assert!(((got - exact) / exact).abs() < 1e-6, "{got}");
    }

    #[test]
    fn cut_rule_splits_radial_lines() {
        // A kink at s = 1/2 on every line: ∫ |s - 1/2| over the tetrahedron
        // with density 3s² is 9/32, exact once the cut is honoured.
        let r = QuadRule::graded_collapsed_cut(3, 2, 0, |_| Some(0.5));
        let got: f64 = r.points.iter().zip(&r.weights).map(|(b, w)| w * (1.0 - b[0] - 0.5).abs()).sum();
        assert!((got - 9.0 / 32.0).abs() < 1e-14, "{got}");
        assert!((r.weight_sum() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn depth_one_is_one_split() {
        let base = QuadRule::four_point();
        let r = singular_vertex_rule(&base, 1, &CoreRule::Base);
        assert_eq!(r.len(), 8 * base.len());
        assert!(r.weights.iter().all(|&w| (w - 0.25 / 8.0).abs() < 1e-16));
    }

    #[test]
    fn collapsed_rule_integrates_polynomials() {
        let r = QuadRule::vertex_collapsed(6, 8);
        check_exact(&QuadRule { exactness_degree: 8, ..r });
    }
}
