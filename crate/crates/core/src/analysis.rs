//! Weighted Kondratiev norms and convergence studies.
//!
//! `‖v‖²_{𝒦ᵐₐ} = Σ_{|β|≤m} ‖ρ^{|β|-a} ∂^β v‖²_{L²}` with
//! `ρ = min(r, 1)` and `r` the distance to the nearest singular point.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::assembly::{
    assemble_load, assemble_mass, assemble_potential, assemble_stiffness, assemble_system,
    distance_to_singular, scaled_system, ElementRules, PotentialSpec, QuadratureConfig,
};
use crate::fespace::{FeFunction, FeSpace};
use crate::geometry::{self, Point3};
use crate::mesh::Mesh;
use crate::quadrature::{subdivided, QuadRule};
use crate::refine::{refine_mesh_k, GradingParams};
use crate::sparse::CsrMatrix;
use crate::solve::{extreme_eigs, pcg, smallest_eigenpair, EigenOptions, PcgOptions};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeightedNormParams {
    /// Derivative order, 0 or 1.
    pub m: u32,
    /// Weight exponent.
    pub a: f64,
    /// Keep only the `|β| = m` terms.
    pub seminorm: bool,
}

impl WeightedNormParams {
    pub fn new(m: u32, a: f64) -> Result<Self> {
        if m > 1 {
            return Err(Error::Unsupported(format!("weighted norms of order m = {m}")));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParameter(format!("weight exponent a = {a}")));
        }
        Ok(WeightedNormParams { m, a, seminorm: false })
    }

    /// The `𝒦¹₁` norm.
    pub fn k11() -> Self {
        WeightedNormParams { m: 1, a: 1.0, seminorm: false }
    }

    pub fn seminorm(mut self) -> Self {
        self.seminorm = true;
        self
    }

    /// Exponents of `ρ` multiplying `|v|²` and `|∇v|²`.
    fn exponents(&self) -> (Option<f64>, Option<f64>) {
        let value = (!self.seminorm || self.m == 0).then_some(-2.0 * self.a);
        let grad = (self.m == 1).then_some(2.0 * (1.0 - self.a));
        (value, grad)
    }
}

/// `ρ = min(r, 1)`; identically 1 without singular points.
pub fn rho(mesh: &Mesh, x: &Point3) -> f64 {
    distance_to_singular(mesh, x).min(1.0)
}

/// Rules used for norm integrals.
#[derive(Debug, Clone)]
pub struct NormRules {
    config: QuadratureConfig,
    elements: ElementRules,
    kink: Option<QuadRule>,
}

impl NormRules {
    pub fn new(quad: &QuadratureConfig) -> Self {
        let elements = quad.rules();
        let kink = (quad.kink_subdivisions > 0)
            .then(|| subdivided(&elements.regular, quad.kink_subdivisions));
        NormRules { config: *quad, elements, kink }
    }
}

impl Default for NormRules {
    fn default() -> Self {
        NormRules::new(&QuadratureConfig::default())
    }
}

/// Squared weighted norm of the function given pointwise by `eval(t, bary, x)
/// = (value, gradient)` on every tetrahedron `t` of `mesh`.
///
/// With `piecewise_linear` set, the caller promises that `eval` is linear on
/// each element, so elements where the weights are trivial use the
/// degree-2 rule.
pub fn weighted_norm_squared_with(
    mesh: &Mesh,
    params: &WeightedNormParams,
    rules: &NormRules,
    piecewise_linear: bool,
    eval: impl Fn(usize, &[f64; 4], &Point3) -> (f64, Point3),
) -> Result<f64> {
    if params.m > 1 {
        return Err(Error::Unsupported(format!("weighted norms of order m = {}", params.m)));
    }
    let (value_exp, grad_exp) = params.exponents();
    let flat = value_exp.map_or(true, |e| e == 0.0) && grad_exp.map_or(true, |e| e == 0.0);
    let has_singular = !mesh.singular_points().is_empty();
    let r = &rules.elements;
    let mut total = 0.0;
    for (t, tet) in mesh.tets().iter().enumerate() {
        let p = mesh.tet_points(tet);
        let vol = mesh.volume_of(t)?;
        let c = (p[0] + p[1] + p[2] + p[3]) * 0.25;
        let reach = p.iter().map(|q| q.distance(&c)).fold(0.0, f64::max);
        let (near, far) = if has_singular {
            let d = distance_to_singular(mesh, &c);
            (d - reach < 1.0, d + reach > 1.0)
        } else {
            (false, true)
        };
        let cut_rule;
        let rule = if tet.singular_vertex.is_some() && !flat {
            // ρ has a kink where the radial lines from the singular vertex
            // leave the unit ball.
            if p.iter().any(|q| q.distance(&p[0]) > 1.0) {
                cut_rule = rules.config.singular_rule_cut(|y| {
                    let d = geometry::from_barycentric(&p, y).distance(&p[0]);
                    (d > 1.0).then(|| 1.0 / d)
                });
                &cut_rule
            } else {
                &r.singular
            }
        } else if piecewise_linear && (flat || !near) {
            &r.mass
        } else if near && far {
            rules.kink.as_ref().unwrap_or(&r.regular)
        } else {
            &r.regular
        };
        let mut acc = 0.0;
        for (b, w) in rule.points.iter().zip(&rule.weights) {
            let x = geometry::from_barycentric(&p, b);
            let rho = if has_singular { rho(mesh, &x) } else { 1.0 };
            let (v, g) = eval(t, b, &x);
            let mut f = 0.0;
            if let Some(e) = value_exp {
                f += weight(rho, e) * v * v;
            }
            if let Some(e) = grad_exp {
                f += weight(rho, e) * g.norm_squared();
            }
            acc += w * f;
        }
        total += vol * acc;
    }
    Ok(total)
}

#[inline]
fn weight(rho: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else if e == -2.0 {
        1.0 / (rho * rho)
    } else {
        libm::pow(rho, e)
    }
}

/// Gradients of the barycentric coordinates of every element.
fn element_gradients(mesh: &Mesh) -> Vec<[Point3; 4]> {
    mesh.tets().iter().map(|t| geometry::barycentric_gradients(&mesh.tet_points(t)).0).collect()
}

/// `‖v‖_{𝒦ᵐₐ}` for a finite element function.
pub fn weighted_norm(v: &FeFunction<'_>, params: &WeightedNormParams, rules: &NormRules) -> Result<f64> {
    let mesh = v.space().mesh();
    let grads = element_gradients(mesh);
    let s = weighted_norm_squared_with(mesh, params, rules, true, |t, b, _| {
        let vals = v.tet_values(t);
        let g = &grads[t];
        let value = (0..4).map(|i| vals[i] * b[i]).sum();
        let grad = g[0] * vals[0] + g[1] * vals[1] + g[2] * vals[2] + g[3] * vals[3];
        (value, grad)
    })?;
    Ok(libm::sqrt(s))
}

/// `‖u - I u‖_{𝒦ᵐₐ}` where `u` is given with its gradient and `I u` is the
/// finite element function `interp`.
pub fn weighted_error(
    interp: &FeFunction<'_>,
    exact: impl Fn(&Point3) -> (f64, Point3),
    params: &WeightedNormParams,
    rules: &NormRules,
) -> Result<f64> {
    let mesh = interp.space().mesh();
    let grads = element_gradients(mesh);
    let s = weighted_norm_squared_with(mesh, params, rules, false, |t, b, x| {
        let vals = interp.tet_values(t);
        let g = &grads[t];
        let value: f64 = (0..4).map(|i| vals[i] * b[i]).sum();
        let grad = g[0] * vals[0] + g[1] * vals[1] + g[2] * vals[2] + g[3] * vals[3];
        let (u, du) = exact(x);
        (u - value, du - grad)
    })?;
    Ok(libm::sqrt(s))
}

/// `e_j = log₂(err_j / err_{j+1})` for consecutive errors.
pub fn convergence_rate(errors: &[f64]) -> Result<Vec<f64>> {
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidParameter(format!("error {e} is not positive")));
    }
    Ok(errors.windows(2).map(|w| libm::log2(w[0] / w[1])).collect())
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (libm::log(*a), libm::log(*b)))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Verdict of the embedding inequality
/// `‖v‖_{𝒦^{m'}_{a'}} ≤ bound^{a-a'} ‖v‖_{𝒦^m_a}` for `v` supported where
/// `ρ < bound`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmbeddingCheck {
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

pub fn embedding_bounds_check(
    v: &FeFunction<'_>,
    strong: &WeightedNormParams,
    weak: &WeightedNormParams,
    bound: f64,
    rules: &NormRules,
) -> Result<EmbeddingCheck> {
    if strong.m < weak.m || strong.a < weak.a {
        return Err(Error::InvalidParameter("need m >= m' and a >= a'".into()));
    }
    let lower = weighted_norm(v, weak, rules)?;
    let upper = libm::pow(bound, strong.a - weak.a) * weighted_norm(v, strong, rules)?;
    Ok(EmbeddingCheck { lower, upper, holds: lower <= upper * (1.0 + 1e-12) })
}

/// Both sides of the scaling identity
/// `‖w‖_{𝒦ᵐₐ(D)} = γ^{a-3/2} ‖ŵ‖_{𝒦ᵐₐ(γD)}` with `ŵ(y) = w(p + (y - p)/γ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalingCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl ScalingCheck {
    pub fn relative_gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / self.lhs.abs().max(f64::MIN_POSITIVE)
    }
}

/// Evaluates the scaling identity on the patch `D` given by `patch`, whose
/// single singular point is `p`, and on its copy shrunk by `gamma` about `p`.
/// `w` returns value and gradient. The patch must lie within distance 1 of
/// `p`, where `ρ = r`.
pub fn scaling_identity_check(
    patch: &Mesh,
    gamma: f64,
    params: &WeightedNormParams,
    rules: &NormRules,
    w: impl Fn(&Point3) -> (f64, Point3),
) -> Result<ScalingCheck> {
    let [sp] = patch.singular_points() else {
        return Err(Error::InvalidParameter("the patch needs exactly one singular point".into()));
    };
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::InvalidParameter(format!("scaling factor γ = {gamma} outside (0, 1]")));
    }
    let p = sp.position;
    if patch.points().iter().any(|x| x.distance(&p) >= 1.0) {
        return Err(Error::InvalidParameter("the patch leaves the unit ball around its singular point".into()));
    }
    let points = patch.points().iter().map(|x| p + (*x - p) * gamma).collect();
    let tets = patch.tets().iter().map(|t| t.vertices).collect();
    let shrunk = Mesh::from_tets(points, tets, &[sp.node])?;
    let lhs = weighted_norm_squared_with(patch, params, rules, false, |_, _, x| w(x))?;
    let rhs = weighted_norm_squared_with(&shrunk, params, rules, false, |_, _, y| {
        let (v, g) = w(&(p + (*y - p) * (1.0 / gamma)));
        (v, g * (1.0 / gamma))
    })?;
    Ok(ScalingCheck { lhs: libm::sqrt(lhs), rhs: libm::pow(gamma, params.a - 1.5) * libm::sqrt(rhs) })
}

/// One level of a study.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateRow {
    pub level: u32,
    pub dim: usize,
    pub tets: usize,
    /// Source studies: `‖v_{j-1} - v_j‖`; eigenvalue studies:
    /// `|λ_{j-1} - λ_j|`; interpolation studies: `‖u - I_j u‖`.
    pub error: Option<f64>,
    pub rate: Option<f64>,
    pub kappa: Option<f64>,
    pub iterations: Option<usize>,
    pub eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateTable {
    pub k: f64,
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn row(&self, level: u32) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.level == level)
    }

    pub fn rate(&self, level: u32) -> Option<f64> {
        self.row(level).and_then(|r| r.rate)
    }

    /// Fills `rate` from `error` with `e_j = log₂(err_j / err_{j+1})` for
    /// `j >= first`.
    fn rates_forward(&mut self, first: u32) {
        for i in 0..self.rows.len().saturating_sub(1) {
            if self.rows[i].level < first {
                continue;
            }
            if let (Some(a), Some(b)) = (self.rows[i].error, self.rows[i + 1].error) {
                if a > 0.0 && b > 0.0 {
                    self.rows[i].rate = Some(libm::log2(a / b));
                }
            }
        }
    }

    /// Fills `rate` with `e_j = log₂(err_{j-1} / err_j)`.
    fn rates_backward(&mut self) {
        for i in 1..self.rows.len() {
            if let (Some(a), Some(b)) = (self.rows[i - 1].error, self.rows[i].error) {
                if a > 0.0 && b > 0.0 {
                    self.rows[i].rate = Some(libm::log2(a / b));
                }
            }
        }
    }
}

/// A study that stopped early. `partial` holds the completed levels.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("study failed at level {level}: {source}")]
pub struct StudyError {
    pub level: u32,
    pub partial: RateTable,
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub potential: PotentialSpec,
    pub grading: GradingParams,
    /// Finest level.
    pub levels: u32,
    pub solver: PcgOptions,
    pub quadrature: QuadratureConfig,
    pub norm: WeightedNormParams,
    /// Estimate `κ` of the scaled matrix at every level.
    pub condition: bool,
    pub condition_tol: f64,
    /// Eigenvalue studies: keep iterates orthogonal to constants.
    pub deflate_constants: bool,
    pub eigen_tol: f64,
    /// Block size of the eigenvalue iteration; raise it when the target
    /// eigenvalue may be repeated.
    pub eigen_block: usize,
}

impl StudyConfig {
    pub fn new(potential: PotentialSpec, grading: GradingParams, levels: u32) -> Self {
        StudyConfig {
            potential,
            grading,
            levels,
            solver: PcgOptions::default(),
            quadrature: QuadratureConfig::default(),
            norm: WeightedNormParams::k11(),
            condition: false,
            condition_tol: 1e-6,
            deflate_constants: false,
            eigen_tol: 1e-11,
            eigen_block: 1,
        }
    }

    fn singular_points(&self) -> Vec<Point3> {
        self.potential.terms.iter().map(|t| t.center).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.potential.validate()?;
        if !(self.grading.k > 0.0 && self.grading.k <= 0.5) {
            return Err(Error::InvalidParameter(format!("grading ratio k = {}", self.grading.k)));
        }
        Ok(())
    }
}

/// A finished level, handed to study observers.
#[derive(Debug, Clone, Copy)]
pub struct LevelView<'a> {
    pub level: u32,
    pub space: &'a FeSpace,
    /// The system matrix, when the study assembled one.
    pub matrix: Option<&'a CsrMatrix>,
    /// Solution, eigenvector or interpolant coefficients.
    pub solution: Option<&'a [f64]>,
}

/// Observer that ignores every level.
pub fn ignore_levels(_: LevelView<'_>) {}

/// Walks the refinement chain `T_0, …, T_levels`, calling `visit` with every
/// space and the previous one.
fn for_each_level<S>(
    cfg: &StudyConfig,
    table: &mut RateTable,
    mut visit: impl FnMut(&FeSpace, Option<(&FeSpace, &S)>, &mut RateRow) -> Result<S>,
) -> core::result::Result<(), StudyError> {
    let fail = |level: u32, table: &RateTable, source: Error| StudyError { level, partial: table.clone(), source };
    cfg.validate().map_err(|e| fail(0, table, e))?;
    let mesh = Mesh::cube(&cfg.singular_points()).map_err(|e| fail(0, table, e))?;
    let mut prev: Option<(FeSpace, S)> = None;
    let mut current = Some(mesh);
    for level in 0..=cfg.levels {
        let mesh = current.take().ok_or_else(|| fail(level, table, Error::Invariant("missing mesh".into())))?;
        let space = FeSpace::new(mesh).map_err(|e| fail(level, table, e))?;
        let mut row = RateRow { level, dim: space.dim(), tets: space.mesh().tet_count(), ..Default::default() };
        let state = visit(&space, prev.as_ref().map(|(s, st)| (s, st)), &mut row)
            .map_err(|e| fail(level, table, e))?;
        table.rows.push(row);
        if level < cfg.levels {
            current = Some(refine_mesh_k(space.mesh(), &cfg.grading).map_err(|e| fail(level + 1, table, e))?);
        }
        prev = Some((space, state));
    }
    Ok(())
}

fn condition_number(space: &FeSpace, a: &CsrMatrix, tol: f64) -> Result<f64> {
    let scaled = scaled_system(a, space)?;
    Ok(extreme_eigs(&scaled, tol, 20_000)?.condition_number())
}

/// Solves `(-Δ + V + L) v = 1` on every level and reports
/// `‖v_{j-1} - v_j‖` with rates `e_j = log₂(‖v_{j-1}-v_j‖ / ‖v_j-v_{j+1}‖)`
/// for `j >= 2`.
pub fn rate_study(cfg: &StudyConfig) -> core::result::Result<RateTable, StudyError> {
    rate_study_observed(cfg, ignore_levels)
}

/// [`rate_study`] calling `observe` after every level.
pub fn rate_study_observed(
    cfg: &StudyConfig,
    mut observe: impl FnMut(LevelView<'_>),
) -> core::result::Result<RateTable, StudyError> {
    let mut table = RateTable { k: cfg.grading.k, rows: Vec::new() };
    let rules = NormRules::new(&cfg.quadrature);
    let result = for_each_level::<Vec<f64>>(cfg, &mut table, |space, prev, row| {
        let a = assemble_system(space, &cfg.potential, &cfg.quadrature)?;
        let b = assemble_load(space, |_| 1.0)?;
        let guess = match prev {
            Some((coarse, v)) => Some(space.prolongate_from(&coarse.function(v.clone())?)?),
            None => None,
        };
        let (x, report) = pcg(&a, &b, guess.as_deref(), &cfg.solver)?;
        row.iterations = Some(report.iterations);
        if let Some(g) = guess {
            let diff: Vec<f64> = x.iter().zip(&g).map(|(a, b)| a - b).collect();
            row.error = Some(weighted_norm(&space.function(diff)?, &cfg.norm, &rules)?);
        }
        if cfg.condition {
            row.kappa = Some(condition_number(space, &a, cfg.condition_tol)?);
        }
        observe(LevelView { level: row.level, space, matrix: Some(&a), solution: Some(&x) });
        Ok(x)
    });
    table.rates_forward(2);
    result.map(|_| table).map_err(|mut e| {
        e.partial.rates_forward(2);
        e
    })
}

/// Smallest eigenvalue of `-Δ + V` (or the smallest above the constants when
/// `deflate_constants` is set) on every level, with rates from consecutive
/// differences as in [`rate_study`].
pub fn eig_rate_study(cfg: &StudyConfig) -> core::result::Result<RateTable, StudyError> {
    eig_rate_study_observed(cfg, ignore_levels)
}

/// [`eig_rate_study`] calling `observe` after every level; the matrix is
/// `K + P` and the solution the eigenvector.
pub fn eig_rate_study_observed(
    cfg: &StudyConfig,
    mut observe: impl FnMut(LevelView<'_>),
) -> core::result::Result<RateTable, StudyError> {
    let mut table = RateTable { k: cfg.grading.k, rows: Vec::new() };
    let shift = if cfg.potential.shift > 0.0 { cfg.potential.shift } else { 1.0 };
    let result = for_each_level::<f64>(cfg, &mut table, |space, prev, row| {
        let stiff = assemble_stiffness(space)?;
        let pot = assemble_potential(space, &cfg.potential, &cfg.quadrature)?;
        let k = stiff.add_scaled(1.0, &pot)?;
        let m = assemble_mass(space)?;
        let mut opts = EigenOptions { tol: cfg.eigen_tol, block: cfg.eigen_block, ..Default::default() };
        // Tighter inner solves stall near 1e-11 on the finest meshes; inverse
        // iteration tolerates the inexactness.
        opts.inner.tol = cfg.eigen_tol;
        if cfg.deflate_constants {
            opts.deflate.push(vec![1.0; space.dim()]);
        }
        let pair = smallest_eigenpair(&k, &m, shift, &opts)?;
        row.eigenvalue = Some(pair.value);
        row.iterations = Some(pair.inner_iterations);
        if let Some((_, &lambda)) = prev {
            row.error = Some((lambda - pair.value).abs());
        }
        if cfg.condition {
            let a = assemble_system(space, &cfg.potential, &cfg.quadrature)?;
            row.kappa = Some(condition_number(space, &a, cfg.condition_tol)?);
        }
        observe(LevelView { level: row.level, space, matrix: Some(&k), solution: Some(&pair.vector) });
        Ok(pair.value)
    });
    table.rates_forward(2);
    result.map(|_| table).map_err(|mut e| {
        e.partial.rates_forward(2);
        e
    })
}

/// `κ` of the scaled system matrix on every level.
pub fn condition_study(cfg: &StudyConfig) -> core::result::Result<RateTable, StudyError> {
    condition_study_observed(cfg, ignore_levels)
}

pub fn condition_study_observed(
    cfg: &StudyConfig,
    mut observe: impl FnMut(LevelView<'_>),
) -> core::result::Result<RateTable, StudyError> {
    let mut table = RateTable { k: cfg.grading.k, rows: Vec::new() };
    for_each_level::<()>(cfg, &mut table, |space, _, row| {
        let a = assemble_system(space, &cfg.potential, &cfg.quadrature)?;
        row.kappa = Some(condition_number(space, &a, cfg.condition_tol)?);
        observe(LevelView { level: row.level, space, matrix: Some(&a), solution: None });
        Ok(())
    })?;
    Ok(table)
}

/// Interpolation error `‖u - I_j u‖` of the modified interpolant on every
/// level, with `e_j = log₂(err_{j-1} / err_j)`.
pub fn interpolation_study(
    cfg: &StudyConfig,
    exact: impl Fn(&Point3) -> (f64, Point3),
) -> core::result::Result<RateTable, StudyError> {
    interpolation_study_observed(cfg, exact, ignore_levels)
}

pub fn interpolation_study_observed(
    cfg: &StudyConfig,
    exact: impl Fn(&Point3) -> (f64, Point3),
    mut observe: impl FnMut(LevelView<'_>),
) -> core::result::Result<RateTable, StudyError> {
    let mut table = RateTable { k: cfg.grading.k, rows: Vec::new() };
    let rules = NormRules::new(&cfg.quadrature);
    for_each_level::<()>(cfg, &mut table, |space, _, row| {
        let interp = space.modified_interpolant(|x| exact(&x).0)?;
        row.error = Some(weighted_error(&interp, &exact, &cfg.norm, &rules)?);
        observe(LevelView { level: row.level, space, matrix: None, solution: Some(interp.coefficients()) });
        Ok(())
    })?;
    table.rates_backward();
    Ok(table)
}

/// `u = ψ(r) r^γ` about the origin, with its gradient.
pub fn cutoff_power(gamma: f64, r_c: f64) -> impl Fn(&Point3) -> (f64, Point3) {
    move |x: &Point3| {
        let r = x.norm();
        if r == 0.0 {
            return (0.0, Point3::default());
        }
        let psi = crate::assembly::cutoff_psi(r, r_c);
        if psi == 0.0 {
            return (0.0, Point3::default());
        }
        let dpsi = crate::assembly::cutoff_psi_derivative(r, r_c);
        let rg = libm::pow(r, gamma);
        let du = dpsi * rg + gamma * psi * rg / r;
        (psi * rg, *x * (du / r))
    }
}

/// Human-readable summary of a table, one line per level.
pub fn format_table(table: &RateTable) -> String {
    use core::fmt::Write;
    let sci = |v: Option<f64>| v.map_or(String::from("-"), |v| format!("{v:.4e}"));
    let eig = table.rows.iter().any(|r| r.eigenvalue.is_some());
    let mut s = String::new();
    let _ = write!(s, "level        dim        error   rate        kappa  iters");
    let _ = writeln!(s, "{}", if eig { "    eigenvalue" } else { "" });
    for r in &table.rows {
        let _ = write!(
            s,
            "{:>5} {:>10} {:>12} {:>6} {:>12} {:>6}",
            r.level,
            r.dim,
            sci(r.error),
            r.rate.map_or(String::from("-"), |v| format!("{v:.2}")),
            sci(r.kappa),
            r.iterations.map_or(String::from("-"), |v| format!("{v}")),
        );
        if eig {
            let _ = write!(s, " {:>13}", r.eigenvalue.map_or(String::from("-"), |v| format!("{v:.8}")));
        }
        s.push('\n');
    }
    s
}
