//! Sparse assembly of `a(u, v) = (∇u, ∇v) + ((V + L) u, v)` with
//! `V(x) = Σ_p δ_p ψ(|x - p|) |x - p|⁻²`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::fespace::FeSpace;
use crate::geometry::{self, Point3};
use crate::mesh::{CubeDomain, Mesh};
use crate::quadrature::{singular_vertex_rule, CoreRule, QuadRule};
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Smooth cutoff `ψ(r) = exp(r_c² / (r⁴ - r_c²) + 1)` for `r² < r_c`, zero
/// otherwise. `ψ(0) = 1`.
pub fn cutoff_psi(r: f64, r_c: f64) -> f64 {
    let r2 = r * r;
    if r2 >= r_c {
        return 0.0;
    }
    libm::exp(r_c * r_c / (r2 * r2 - r_c * r_c) + 1.0)
}

/// `dψ/dr`.
pub fn cutoff_psi_derivative(r: f64, r_c: f64) -> f64 {
    let r2 = r * r;
    if r2 >= r_c {
        return 0.0;
    }
    let d = r2 * r2 - r_c * r_c;
    -cutoff_psi(r, r_c) * 4.0 * r_c * r_c * r2 * r / (d * d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PotentialTerm {
    pub center: Point3,
    pub strength: f64,
}

/// `V + L` with `V = Σ_p δ_p ψ(|x - p|) |x - p|⁻²`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PotentialSpec {
    pub terms: Vec<PotentialTerm>,
    /// Cutoff parameter: `ψ` vanishes for `r² ≥ r_c`.
    pub r_c: f64,
    /// Shift `L`.
    pub shift: f64,
}

impl PotentialSpec {
    pub const DEFAULT_RC: f64 = 0.25;

    /// One term of strength `delta` at the origin.
    pub fn single(delta: f64, shift: f64) -> Result<PotentialSpec> {
        let spec = PotentialSpec {
            terms: vec![PotentialTerm { center: geometry::ORIGIN, strength: delta }],
            r_c: Self::DEFAULT_RC,
            shift,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_cutoff(mut self, r_c: f64) -> Result<PotentialSpec> {
        self.r_c = r_c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_c > 0.0) || !self.r_c.is_finite() {
            return Err(Error::InvalidParameter(format!("cutoff r_c = {} must be positive", self.r_c)));
        }
        if !(self.shift >= 0.0) || !self.shift.is_finite() {
            return Err(Error::InvalidParameter(format!("shift L = {} must be finite and nonnegative", self.shift)));
        }
        for (i, t) in self.terms.iter().enumerate() {
            if !(t.strength > -0.25) || !t.strength.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "strength δ = {} of term {i} must exceed -1/4",
                    t.strength
                )));
            }
            for u in &self.terms[..i] {
                // Supports are balls of radius √r_c.
                if (t.center - u.center).norm_squared() < 4.0 * self.r_c {
                    return Err(Error::InvalidParameter(format!(
                        "cutoff balls of term {i} and an earlier term overlap"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Support radius `√r_c` of `ψ`.
    pub fn support_radius(&self) -> f64 {
        libm::sqrt(self.r_c)
    }

    /// `η = min_p √(1/4 + δ_p)`.
    pub fn eta(&self) -> Option<f64> {
        self.terms.iter().map(|t| libm::sqrt(0.25 + t.strength)).reduce(f64::min)
    }

    /// `V(x)` (without the shift).
    pub fn potential(&self, x: &Point3, domain: Option<CubeDomain>) -> f64 {
        let mut v = 0.0;
        for t in &self.terms {
            if t.strength == 0.0 {
                continue;
            }
            let r = separation(x, &t.center, domain).norm();
            let psi = cutoff_psi(r, self.r_c);
            if psi > 0.0 {
                v += t.strength * psi / (r * r);
            }
        }
        v
    }
}

/// `x - p`, reduced to the nearest lattice image on periodic domains.
pub fn separation(x: &Point3, p: &Point3, domain: Option<CubeDomain>) -> Point3 {
    let mut d = *x - *p;
    if let Some(dom) = domain {
        let side = dom.side();
        for a in 0..3 {
            let c = d.coord(a);
            d.set_coord(a, c - side * libm::round(c / side));
        }
    }
    d
}

/// Distance from `x` to the nearest singular point of `mesh` (lattice images
/// included).
pub fn distance_to_singular(mesh: &Mesh, x: &Point3) -> f64 {
    mesh.singular_points()
        .iter()
        .map(|s| separation(x, &s.position, mesh.domain()).norm())
        .fold(f64::INFINITY, f64::min)
}

/// Rule family for elements with a singular vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum SingularScheme {
    /// Vertex-collapsed tensor rule over geometric shells
    /// ([`QuadRule::graded_collapsed`]).
    Graded,
    /// Conical rule on the sub-tetrahedra of each shell
    /// ([`singular_vertex_rule`]), with a collapsed innermost core.
    Shells,
}

/// Quadrature choices for terms with singular or non-polynomial weights.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QuadratureConfig {
    pub singular_scheme: SingularScheme,
    /// Number of geometric shells toward a singular vertex.
    pub shell_depth: u32,
    /// Face degree of the graded rule, or the degree of the rule on every
    /// shell piece.
    pub singular_degree: u32,
    /// Gauss points per shell along the radial direction (graded rule).
    pub radial_points: usize,
    /// Degree of the rule for elements that miss the singular points but meet
    /// a weight that is not polynomial.
    pub regular_degree: u32,
    /// Split elements straddling the `ρ = 1` sphere this many times (midpoint
    /// refinement) when integrating weighted norms.
    pub kink_subdivisions: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            singular_scheme: SingularScheme::Graded,
            shell_depth: 8,
            singular_degree: 18,
            radial_points: 6,
            regular_degree: 4,
            kink_subdivisions: 2,
        }
    }
}

impl QuadratureConfig {
    pub fn singular_rule(&self) -> QuadRule {
        self.singular_rule_cut(|_| None)
    }

    /// Singular rule whose radial lines are also split at `cut`; only the
    /// graded scheme honours the cut.
    pub fn singular_rule_cut(&self, cut: impl Fn(&[f64; 4]) -> Option<f64>) -> QuadRule {
        match self.singular_scheme {
            SingularScheme::Graded => QuadRule::graded_collapsed_cut(
                self.radial_points,
                self.singular_degree,
                self.shell_depth,
                cut,
            ),
            SingularScheme::Shells => {
                let base = QuadRule::conical(self.singular_degree);
                let n = (self.singular_degree as usize + 4) / 2;
                let core = CoreRule::Collapsed(QuadRule::vertex_collapsed(n, self.singular_degree));
                singular_vertex_rule(&base, self.shell_depth, &core)
            }
        }
    }

    pub fn rules(&self) -> ElementRules {
        ElementRules {
            mass: QuadRule::four_point(),
            regular: QuadRule::conical(self.regular_degree),
            singular: self.singular_rule(),
            kink_subdivisions: self.kink_subdivisions,
        }
    }
}

/// Rules built from a [`QuadratureConfig`].
#[derive(Debug, Clone)]
pub struct ElementRules {
    pub mass: QuadRule,
    pub regular: QuadRule,
    /// Composite rule for elements whose local vertex 0 is singular.
    pub singular: QuadRule,
    pub kink_subdivisions: u32,
}

/// Zero matrix with one row per dof and the pattern of the element couplings.
pub fn pattern(space: &FeSpace) -> CsrMatrix {
    let n = space.dim();
    let mut pairs = Vec::with_capacity(6 * space.mesh().tet_count());
    for t in 0..space.mesh().tet_count() {
        let d = space.tet_dofs(t);
        for i in 0..4 {
            for j in (i + 1)..4 {
                pairs.push((d[i] as u32, d[j] as u32));
            }
        }
    }
    CsrMatrix::from_pairs(n, pairs)
}

fn element_geometry(mesh: &Mesh, t: usize) -> Result<([Point3; 4], [Point3; 4], f64)> {
    let p = mesh.tet_points(&mesh.tets()[t]);
    let (g, vol) = geometry::barycentric_gradients(&p);
    if crate::mesh::is_degenerate(&p, vol) {
        return Err(Error::DegenerateTet { tet: t, volume: vol });
    }
    Ok((p, g, vol))
}

fn scatter(a: &mut CsrMatrix, d: &[usize; 4], e: &[[f64; 4]; 4]) {
    for i in 0..4 {
        for j in 0..4 {
            a.add(d[i], d[j], e[i][j]);
        }
    }
}

fn stiffness_into(space: &FeSpace, a: &mut CsrMatrix, scale: f64) -> Result<()> {
    let mesh = space.mesh();
    for t in 0..mesh.tet_count() {
        let (_, g, vol) = element_geometry(mesh, t)?;
        let mut e = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                e[i][j] = scale * vol * g[i].dot(&g[j]);
            }
        }
        scatter(a, &space.tet_dofs(t), &e);
    }
    Ok(())
}

fn mass_into(space: &FeSpace, a: &mut CsrMatrix, scale: f64) -> Result<()> {
    let mesh = space.mesh();
    for t in 0..mesh.tet_count() {
        let (_, _, vol) = element_geometry(mesh, t)?;
        // Exact P1 element mass matrix.
        let off = scale * vol / 20.0;
        let mut e = [[off; 4]; 4];
        for (i, row) in e.iter_mut().enumerate() {
            row[i] = 2.0 * off;
        }
        scatter(a, &space.tet_dofs(t), &e);
    }
    Ok(())
}

/// Checks that every potential centre with nonzero strength is a singular
/// vertex of the mesh.
fn check_centers(mesh: &Mesh, pot: &PotentialSpec) -> Result<()> {
    for (i, term) in pot.terms.iter().enumerate() {
        if term.strength == 0.0 {
            continue;
        }
        let found = mesh
            .singular_points()
            .iter()
            .any(|s| separation(&s.position, &term.center, mesh.domain()).norm() <= 1e-12);
        if !found {
            return Err(Error::Configuration(format!(
                "potential centre {i} at ({}, {}, {}) is not a singular vertex of the mesh",
                term.center.x, term.center.y, term.center.z
            )));
        }
    }
    Ok(())
}

/// Rule to integrate a weight singular at the singular points and supported in
/// the balls of radius `support` around them; `None` when the element misses
/// every ball.
fn weighted_rule<'r>(
    mesh: &Mesh,
    t: usize,
    p: &[Point3; 4],
    support: f64,
    rules: &'r ElementRules,
) -> Option<&'r QuadRule> {
    let tet = &mesh.tets()[t];
    if tet.singular_vertex.is_some() {
        return Some(&rules.singular);
    }
    let c = (p[0] + p[1] + p[2] + p[3]) * 0.25;
    let reach = p.iter().map(|q| q.distance(&c)).fold(0.0, f64::max);
    if distance_to_singular(mesh, &c) - reach < support {
        Some(&rules.regular)
    } else {
        None
    }
}

fn potential_into(
    space: &FeSpace,
    pot: &PotentialSpec,
    rules: &ElementRules,
    a: &mut CsrMatrix,
) -> Result<()> {
    let mesh = space.mesh();
    check_centers(mesh, pot)?;
    if pot.terms.iter().all(|t| t.strength == 0.0) {
        return Ok(());
    }
    let support = pot.support_radius();
    for t in 0..mesh.tet_count() {
        let p = mesh.tet_points(&mesh.tets()[t]);
        let Some(rule) = weighted_rule(mesh, t, &p, support, rules) else {
            continue;
        };
        let (_, _, vol) = element_geometry(mesh, t)?;
        let mut e = [[0.0; 4]; 4];
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = geometry::from_barycentric(&p, b);
            let v = pot.potential(&x, mesh.domain());
            if v == 0.0 {
                continue;
            }
            let s = w * vol * v;
            for i in 0..4 {
                for j in 0..4 {
                    e[i][j] += s * b[i] * b[j];
                }
            }
        }
        scatter(a, &space.tet_dofs(t), &e);
    }
    Ok(())
}

/// `K_ij = ∫ ∇φ_i · ∇φ_j`.
pub fn assemble_stiffness(space: &FeSpace) -> Result<CsrMatrix> {
    let mut a = pattern(space);
    stiffness_into(space, &mut a, 1.0)?;
    Ok(a)
}

/// `M_ij = ∫ φ_i φ_j`.
pub fn assemble_mass(space: &FeSpace) -> Result<CsrMatrix> {
    let mut a = pattern(space);
    mass_into(space, &mut a, 1.0)?;
    Ok(a)
}

/// `P_ij = ∫ V φ_i φ_j`.
pub fn assemble_potential(
    space: &FeSpace,
    pot: &PotentialSpec,
    quad: &QuadratureConfig,
) -> Result<CsrMatrix> {
    pot.validate()?;
    let mut a = pattern(space);
    potential_into(space, pot, &quad.rules(), &mut a)?;
    Ok(a)
}

/// `A = K + P + L M`.
pub fn assemble_system(
    space: &FeSpace,
    pot: &PotentialSpec,
    quad: &QuadratureConfig,
) -> Result<CsrMatrix> {
    pot.validate()?;
    let mut a = pattern(space);
    stiffness_into(space, &mut a, 1.0)?;
    potential_into(space, pot, &quad.rules(), &mut a)?;
    if pot.shift != 0.0 {
        mass_into(space, &mut a, pot.shift)?;
    }
    Ok(a)
}

/// `b_i = ∫ f φ_i` with the 4-point rule.
pub fn assemble_load(space: &FeSpace, f: impl Fn(Point3) -> f64) -> Result<Vec<f64>> {
    let mesh = space.mesh();
    let rule = QuadRule::four_point();
    let mut b = vec![0.0; space.dim()];
    for t in 0..mesh.tet_count() {
        let (p, _, vol) = element_geometry(mesh, t)?;
        let d = space.tet_dofs(t);
        for (q, w) in rule.points.iter().zip(&rule.weights) {
            let fx = f(geometry::from_barycentric(&p, q));
            for i in 0..4 {
                b[d[i]] += w * vol * fx * q[i];
            }
        }
    }
    Ok(b)
}

/// Diameter of the support of every basis function: the largest distance
/// between two nodes of the elements around it. Periodic images of a boundary
/// node are translated onto its representative first.
pub fn patch_diameters(space: &FeSpace) -> Vec<f64> {
    let mesh = space.mesh();
    let points = mesh.points();
    let (offsets, incident) = mesh.node_to_tets();
    let mut patch: Vec<Vec<Point3>> = vec![Vec::new(); space.dim()];
    let mut ids: Vec<u32> = Vec::new();
    for node in 0..mesh.node_count() {
        let d = space.dofs().dof(node as u32);
        let shift = points[space.dofs().representative(d) as usize] - points[node];
        ids.clear();
        for &t in &incident[offsets[node]..offsets[node + 1]] {
            ids.extend_from_slice(&mesh.tets()[t as usize].vertices);
        }
        ids.sort_unstable();
        ids.dedup();
        patch[d].extend(ids.iter().map(|&v| points[v as usize] + shift));
    }
    patch
        .iter()
        .map(|pts| {
            let mut best = 0.0f64;
            for i in 0..pts.len() {
                for j in (i + 1)..pts.len() {
                    best = best.max(pts[i].distance(&pts[j]));
                }
            }
            best
        })
        .collect()
}

/// `D^{-1/2} A D^{-1/2}` with `D_j` the patch diameter of dof `j`: the matrix
/// of `a` in the basis `h_j^{-1/2} φ_j`.
pub fn scaled_system(a: &CsrMatrix, space: &FeSpace) -> Result<CsrMatrix> {
    if a.dim() != space.dim() {
        return Err(Error::InvalidParameter(format!(
            "matrix of size {} for a space of dimension {}",
            a.dim(),
            space.dim()
        )));
    }
    let d: Vec<f64> = patch_diameters(space).iter().map(|h| 1.0 / libm::sqrt(*h)).collect();
    Ok(a.scale_symmetric(&d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORIGIN;
    use crate::refine::{refine_mesh_k, GradingParams};

    fn space(n: u32, k: f64) -> FeSpace {
        let mut m = Mesh::cube(&[ORIGIN]).unwrap();
        for _ in 0..n {
            m = refine_mesh_k(&m, &GradingParams::new(k).unwrap()).unwrap();
        }
        FeSpace::new(m).unwrap()
    }

    #[test]
    fn cutoff_values() {
        assert_eq!(cutoff_psi(0.0, 0.25), 1.0);
        assert_eq!(cutoff_psi(0.5, 0.25), 0.0);
        assert_eq!(cutoff_psi(0.6, 0.25), 0.0);
        // exp(1 - 0.0625/0.0369), evaluated at 50 digits.
        let oracle = 0.499_690_217_450_168_72;
        assert!((cutoff_psi(0.4, 0.25) - oracle).abs() < 1e-15);
        let h = 1e-6;
        let fd = (cutoff_psi(0.3 + h, 0.25) - cutoff_psi(0.3 - h, 0.25)) / (2.0 * h);
        assert!((cutoff_psi_derivative(0.3, 0.25) - fd).abs() < 1e-7);
    }

    #[test]
    fn level_zero_matrices() {
        let s = space(0, 0.5);
        let k = assemble_stiffness(&s).unwrap();
        assert_eq!(k.dim(), 2);
        let expect_k = [8.0, -8.0, -8.0, 8.0];
        for (a, b) in k.to_dense().iter().zip(expect_k) {
            assert!((a - b).abs() < 1e-13, "{:?}", k.to_dense());
        }
        let m = assemble_mass(&s).unwrap();
        let expect_m = [4.8, 1.2, 1.2, 0.8];
        for (a, b) in m.to_dense().iter().zip(expect_m) {
            assert!((a - b).abs() < 1e-13);
        }
        let b = assemble_load(&s, |_| 1.0).unwrap();
        assert!((b[0] - 6.0).abs() < 1e-13 && (b[1] - 2.0).abs() < 1e-13);
    }

    #[test]
    fn zero_strength_gives_zero_potential() {
        let s = space(1, 0.2);
        let p = assemble_potential(&s, &PotentialSpec::single(0.0, 0.0).unwrap(), &Default::default())
            .unwrap();
        assert_eq!(p.max_abs(), 0.0);
    }

    #[test]
    fn centre_off_the_mesh_is_rejected() {
        let s = space(0, 0.5);
        let mut pot = PotentialSpec::single(1.0, 0.0).unwrap();
        pot.terms[0].center = Point3::new(0.1, 0.0, 0.0);
        let err = assemble_potential(&s, &pot, &Default::default()).unwrap_err();
        assert!(matches!(err, Error::Configuration(_)));
    }

    #[test]
    fn strength_bounds() {
        assert!(PotentialSpec::single(-0.25, 20.0).is_err());
        assert!(PotentialSpec::single(-0.1, 20.0).is_ok());
        let two = PotentialSpec {
            terms: vec![
                PotentialTerm { center: ORIGIN, strength: 1.0 },
                PotentialTerm { center: Point3::new(0.4, 0.0, 0.0), strength: 1.0 },
            ],
            r_c: 0.25,
            shift: 0.0,
        };
        assert!(two.validate().is_err());
        let mut apart = two.clone();
        apart.terms[1].center = Point3::new(1.0, 0.0, 0.0);
        assert!(apart.validate().is_ok());
        assert!(PotentialSpec::single(1.0, -1.0).is_err());
    }

    #[test]
    fn patch_diameters_level_one_uniform() {
        // Around the apex the patch is the cube [-1/2, 1/2]^3. The corner
        // patch reaches the face centres on both ends of the face diagonals
        // through the corner images, (-1, 0, 0) and (-1, -2, -2).
        let s = space(1, 0.5);
        let h = patch_diameters(&s);
        let apex = s.dofs().dof(8);
        assert!((h[apex] - 3f64.sqrt()).abs() < 1e-12, "{}", h[apex]);
        assert!((h[s.dofs().dof(0)] - 8f64.sqrt()).abs() < 1e-12, "{}", h[0]);
    }
}

