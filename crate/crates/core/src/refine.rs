//! k-graded refinement.
//!
//! Every tetrahedron is split into eight children by placing one node on each
//! edge and cutting the central octahedron along the `x13` diagonal. Edges
//! leaving a singular vertex `x0` are split at ratio `k` from `x0`; every
//! other edge is split at its midpoint. With `k = 1/2` this is uniform red
//! refinement.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::HashMap;

use crate::geometry::{self, Point3};
use crate::mesh::{Mesh, NodeId, RegionLabel, TetId, Tetrahedron};
use crate::{Error, Result};

/// Local edges in the order their nodes are numbered (`x01, x02, x03, x12, x13, x23`).
pub const EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// The eight children as indices into `[x0, x1, x2, x3, x01, x02, x03, x12, x13, x23]`.
/// Child 0 keeps `x0` in local position 0. The corner children list their
/// vertices in Bey's order; with any other order repeated midpoint
/// refinement produces more than three similarity classes.
pub const CHILDREN: [[usize; 4]; 8] = [
    [0, 4, 5, 6],
    [4, 1, 7, 8],
    [5, 7, 2, 9],
    [6, 8, 9, 3],
    [4, 5, 6, 8],
    [4, 5, 7, 8],
    [5, 6, 8, 9],
    [5, 7, 8, 9],
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradingParams {
    /// Ratio used on edges leaving a singular vertex, in `(0, 1/2]`.
    pub k: f64,
    /// Weight exponent the ratio was derived from, if any.
    pub a: Option<f64>,
    /// Polynomial degree.
    pub m: u32,
    /// `min_p sqrt(1/4 + δ_p)`, once a potential is attached.
    pub eta: Option<f64>,
}

impl GradingParams {
    pub fn new(k: f64) -> Result<Self> {
        check_ratio(k)?;
        Ok(Self { k, a: None, m: 1, eta: None })
    }

    pub fn uniform() -> Self {
        Self { k: 0.5, a: None, m: 1, eta: None }
    }

    /// `k = 2^(-m/a)`, which requires `0 < a <= m`.
    pub fn from_weight(a: f64, m: u32) -> Result<Self> {
        if m == 0 || !(a > 0.0 && a <= m as f64) {
            return Err(Error::InvalidParameter(format!(
                "weight exponent a = {a} must satisfy 0 < a <= m = {m}"
            )));
        }
        let k = libm::exp2(-(m as f64) / a);
        check_ratio(k)?;
        Ok(Self { k, a: Some(a), m, eta: None })
    }

    pub fn with_degree(mut self, m: u32) -> Self {
        self.m = m;
        self
    }

    pub fn with_eta(mut self, eta: f64) -> Self {
        self.eta = Some(eta);
        self
    }

    /// `η = min sqrt(1/4 + δ)` over the singular strengths.
    pub fn eta_for(strengths: &[f64]) -> Option<f64> {
        strengths
            .iter()
            .map(|d| libm::sqrt(0.25 + d))
            .fold(None, |acc: Option<f64>, e| Some(acc.map_or(e, |a| a.min(e))))
    }

    /// Largest ratio that still gives the optimal rate: `2^(-m/η)`.
    pub fn threshold(eta: f64, m: u32) -> f64 {
        libm::exp2(-(m as f64) / eta)
    }

    /// Whether some admissible `a < η`, `a <= m` has `k <= 2^(-m/a)`.
    pub fn is_optimal(&self) -> Option<bool> {
        let eta = self.eta?;
        let a_max = eta.min(self.m as f64);
        let strict = eta <= self.m as f64;
        let bound = Self::threshold(a_max, self.m);
        Some(if strict { self.k < bound } else { self.k <= bound })
    }
}

fn check_ratio(k: f64) -> Result<()> {
    if !(k > 0.0 && k <= 0.5) {
        return Err(Error::InvalidParameter(format!("grading ratio k = {k} outside (0, 1/2]")));
    }
    Ok(())
}

/// The ten nodes and eight children of a single k-refined tetrahedron.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TetSplit {
    /// `[x0, x1, x2, x3, x01, x02, x03, x12, x13, x23]`
    pub nodes: [Point3; 10],
    pub children: [[Point3; 4]; 8],
}

/// Splits `p` with ratio `k` toward `p[0]`.
pub fn refine_tet_k(p: &[Point3; 4], k: f64) -> Result<TetSplit> {
    check_ratio(k)?;
    let mut nodes = [Point3::default(); 10];
    nodes[..4].copy_from_slice(p);
    for (e, &(i, j)) in EDGES.iter().enumerate() {
        let t = if i == 0 { k } else { 0.5 };
        nodes[4 + e] = p[i].lerp(&p[j], t);
    }
    let children = CHILDREN.map(|c| c.map(|l| nodes[l]));
    Ok(TetSplit { nodes, children })
}

/// Applies one k-refinement to every tetrahedron of `mesh`: ratio `k` for
/// tetrahedra with a singular vertex, 1/2 otherwise.
pub fn refine_mesh_k(mesh: &Mesh, params: &GradingParams) -> Result<Mesh> {
    check_ratio(params.k)?;
    if !mesh.is_conforming_verified() {
        mesh.check_conformity()?;
    }
    let mut singular = vec![false; mesh.node_count()];
    for s in mesh.singular_points() {
        singular[s.node as usize] = true;
    }
    for (i, t) in mesh.tets().iter().enumerate() {
        match t.singular_vertex {
            Some(0) => {
                if !singular[t.vertices[0] as usize] || t.vertices[1..].iter().any(|&v| singular[v as usize]) {
                    return Err(Error::Invariant(format!(
                        "tetrahedron {i}: singular marker does not match its vertices"
                    )));
                }
            }
            Some(s) => {
                return Err(Error::Invariant(format!(
                    "tetrahedron {i}: singular vertex at local position {s}, expected 0"
                )))
            }
            None => {
                if t.vertices.iter().any(|&v| singular[v as usize]) {
                    return Err(Error::Invariant(format!(
                        "tetrahedron {i} touches a singular point but is not marked"
                    )));
                }
            }
        }
    }
    let mut out = subdivide(mesh, |a, b| {
        if singular[a as usize] {
            params.k
        } else if singular[b as usize] {
            1.0 - params.k
        } else {
            0.5
        }
    });
    out.grading = Some(params.k);
    Ok(out)
}

/// Uniform midpoint refinement that ignores singular markers. Used while
/// building level-0 meshes.
pub(crate) fn midpoint_subdivide(mesh: &Mesh) -> Mesh {
    let mut out = subdivide(mesh, |_, _| 0.5);
    out.grading = Some(0.5);
    out
}

fn subdivide(mesh: &Mesh, ratio: impl Fn(NodeId, NodeId) -> f64) -> Mesh {
    let parent_nodes = mesh.node_count();
    let mut points = Vec::with_capacity(parent_nodes * 8);
    points.extend_from_slice(mesh.points());
    let mut edge_nodes = Vec::with_capacity(parent_nodes * 7);
    let mut edge_map: HashMap<u64, NodeId> = HashMap::with_capacity(parent_nodes * 8);
    let mut tets = Vec::with_capacity(mesh.tet_count() * 8);

    for (ti, t) in mesh.tets().iter().enumerate() {
        let v = t.vertices;
        let mut local = [0 as NodeId; 10];
        local[..4].copy_from_slice(&v);
        for (e, &(i, j)) in EDGES.iter().enumerate() {
            let (a, b) = (v[i], v[j]);
            let key = if a < b { ((a as u64) << 32) | b as u64 } else { ((b as u64) << 32) | a as u64 };
            let id = *edge_map.entry(key).or_insert_with(|| {
                let (lo, hi) = if a < b { (a, b) } else { (b, a) };
                let t = ratio(lo, hi);
                let id = points.len() as NodeId;
                points.push(points[lo as usize].lerp(&points[hi as usize], t));
                edge_nodes.push(crate::mesh::EdgeNode { a: lo, b: hi, t });
                id
            });
            local[4 + e] = id;
        }
        for (c, child) in CHILDREN.iter().enumerate() {
            let keeps_singular = c == 0 && t.singular_vertex.is_some();
            let region = match t.region {
                RegionLabel::Core { point, level } if keeps_singular => {
                    RegionLabel::Core { point, level: level + 1 }
                }
                RegionLabel::Core { point, level } => RegionLabel::Ring { point, layer: level + 1 },
                other => other,
            };
            tets.push(Tetrahedron {
                vertices: child.map(|l| local[l]),
                singular_vertex: if keeps_singular { Some(0) } else { None },
                parent: Some(ti as TetId),
                root: t.root,
                region,
            });
        }
    }

    Mesh {
        points,
        tets,
        singular_points: mesh.singular_points().to_vec(),
        level: mesh.level() + 1,
        grading: None,
        domain: mesh.domain(),
        parent_nodes,
        edge_nodes,
        conforming: true,
    }
}

/// Scale- and congruence-invariant fingerprint of a tetrahedron: the
/// lexicographically smallest vector of squared edge lengths (normalized by
/// the largest) over all 24 vertex orderings, quantized to 1e-9.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimilarityKey(pub [i64; 6]);

pub const SIMILARITY_TOLERANCE: f64 = 1e-9;

const PERMUTATIONS: [[usize; 4]; 24] = [
    [0, 1, 2, 3], [0, 1, 3, 2], [0, 2, 1, 3], [0, 2, 3, 1], [0, 3, 1, 2], [0, 3, 2, 1],
    [1, 0, 2, 3], [1, 0, 3, 2], [1, 2, 0, 3], [1, 2, 3, 0], [1, 3, 0, 2], [1, 3, 2, 0],
    [2, 0, 1, 3], [2, 0, 3, 1], [2, 1, 0, 3], [2, 1, 3, 0], [2, 3, 0, 1], [2, 3, 1, 0],
    [3, 0, 1, 2], [3, 0, 2, 1], [3, 1, 0, 2], [3, 1, 2, 0], [3, 2, 0, 1], [3, 2, 1, 0],
];

pub fn similarity_key(p: &[Point3; 4]) -> SimilarityKey {
    let mut len = [[0.0f64; 4]; 4];
    let mut longest = 0.0f64;
    for i in 0..4 {
        for j in (i + 1)..4 {
            let d = (p[i] - p[j]).norm_squared();
            len[i][j] = d;
            len[j][i] = d;
            longest = longest.max(d);
        }
    }
    let q = |d: f64| libm::round(d / longest / SIMILARITY_TOLERANCE) as i64;
    let mut best: Option<[i64; 6]> = None;
    for perm in PERMUTATIONS {
        let v = EDGES.map(|(i, j)| q(len[perm[i]][perm[j]]));
        if best.map_or(true, |b| v < b) {
            best = Some(v);
        }
    }
    SimilarityKey(best.unwrap_or([0; 6]))
}

/// Number of tetrahedra in each similarity class.
pub fn similarity_class_census(mesh: &Mesh) -> BTreeMap<SimilarityKey, usize> {
    similarity_class_census_where(mesh, |_| true)
}

/// Census restricted to tetrahedra accepted by `filter` (e.g. the
/// descendants of one initial element via [`Tetrahedron::root`]).
pub fn similarity_class_census_where(
    mesh: &Mesh,
    filter: impl Fn(&Tetrahedron) -> bool,
) -> BTreeMap<SimilarityKey, usize> {
    let mut census = BTreeMap::new();
    for t in mesh.tets().iter().filter(|t| filter(t)) {
        *census.entry(similarity_key(&mesh.tet_points(t))).or_insert(0) += 1;
    }
    census
}

/// Largest tetrahedron diameter in each region.
pub fn region_size_audit(mesh: &Mesh) -> BTreeMap<RegionLabel, f64> {
    let mut audit: BTreeMap<RegionLabel, f64> = BTreeMap::new();
    for t in mesh.tets() {
        let d = geometry::diameter(&mesh.tet_points(t));
        let e = audit.entry(t.region).or_insert(0.0);
        *e = e.max(d);
    }
    audit
}
