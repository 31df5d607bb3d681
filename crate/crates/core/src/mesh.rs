//! Tetrahedral meshes of the periodic cube `[-h, h]³`.
//!
//! The level-0 mesh splits every cube face along a diagonal and cones the
//! resulting 12 triangles to an interior apex. The apex is the (first)
//! singular point, so every initial tetrahedron carries exactly one singular
//! vertex. Opposite faces use translated diagonals, which keeps the induced
//! boundary triangulations congruent under the lattice translations.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};

use crate::geometry::{self, Point3};
use crate::{Error, Result};

pub type NodeId = u32;
pub type TetId = u32;

/// Elements with `volume / diameter³` below this are degenerate. The ratio is
/// scale-free, so the tiny elements next to a strongly graded singular point
/// pass as long as their shape is sound.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// Whether a tetrahedron of volume `volume` with vertices `p` is degenerate.
pub fn is_degenerate(p: &[Point3; 4], volume: f64) -> bool {
    let h = geometry::diameter(p);
    !(volume >= DEGENERACY_THRESHOLD * h * h * h) || !(volume > 0.0)
}

/// Grid used to hash coordinates when matching periodic images.
const SNAP: f64 = 1e12;

/// Which part of the decomposition `Ω ∪ (⋃ R_pj ∪ V_pn)` a tetrahedron belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum RegionLabel {
    /// Away from every singular point.
    Omega,
    /// Annular layer `j` around singular point `point`.
    Ring { point: u16, layer: u16 },
    /// The tetrahedra touching singular point `point` at refinement level `level`.
    Core { point: u16, level: u16 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tetrahedron {
    pub vertices: [NodeId; 4],
    /// Local index of the singular vertex; always 0 for meshes built here.
    pub singular_vertex: Option<u8>,
    pub parent: Option<TetId>,
    /// Level-0 ancestor.
    pub root: TetId,
    pub region: RegionLabel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularPoint {
    pub node: NodeId,
    pub position: Point3,
}

/// A node created on the edge `a`-`b` of the parent mesh at
/// `(1 - t) * x_a + t * x_b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeNode {
    pub a: NodeId,
    pub b: NodeId,
    pub t: f64,
}

/// The fundamental cube `[-half_side, half_side]³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubeDomain {
    pub half_side: f64,
}

impl CubeDomain {
    pub fn side(&self) -> f64 {
        2.0 * self.half_side
    }

    pub fn volume(&self) -> f64 {
        let s = self.side();
        s * s * s
    }

    fn on_low(&self, c: f64) -> bool {
        (c + self.half_side).abs() <= 1e-12 * self.half_side.max(1.0)
    }

    fn on_high(&self, c: f64) -> bool {
        (c - self.half_side).abs() <= 1e-12 * self.half_side.max(1.0)
    }

    fn on_boundary(&self, p: &Point3) -> bool {
        (0..3).any(|a| self.on_low(p.coord(a)) || self.on_high(p.coord(a)))
    }

    /// Maps every coordinate sitting on the `+h` face to `-h`.
    fn canonical(&self, p: &Point3) -> Point3 {
        let mut q = *p;
        for a in 0..3 {
            if self.on_high(p.coord(a)) {
                q.set_coord(a, -self.half_side);
            }
        }
        q
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaceCensus {
    pub interior: usize,
    pub boundary: usize,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub(crate) points: Vec<Point3>,
    pub(crate) tets: Vec<Tetrahedron>,
    pub(crate) singular_points: Vec<SingularPoint>,
    pub(crate) level: u32,
    pub(crate) grading: Option<f64>,
    pub(crate) domain: Option<CubeDomain>,
    /// Nodes `0..parent_nodes` are the nodes of the parent mesh, unchanged.
    pub(crate) parent_nodes: usize,
    /// Sources of nodes `parent_nodes..`.
    pub(crate) edge_nodes: Vec<EdgeNode>,
    pub(crate) conforming: bool,
}

fn snap_key(p: &Point3) -> (i64, i64, i64) {
    (
        libm::round(p.x * SNAP) as i64,
        libm::round(p.y * SNAP) as i64,
        libm::round(p.z * SNAP) as i64,
    )
}

fn sorted3(mut f: [NodeId; 3]) -> [NodeId; 3] {
    f.sort_unstable();
    f
}

const FACES: [[usize; 3]; 4] = [[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]];

impl Mesh {
    /// Level-0 mesh of `[-1, 1]³` with the given singular points as vertices.
    pub fn cube(singular_points: &[Point3]) -> Result<Mesh> {
        Self::cube_with_half_side(1.0, singular_points)
    }

    pub fn cube_with_half_side(half_side: f64, singular_points: &[Point3]) -> Result<Mesh> {
        if !(half_side.is_finite() && half_side > 0.0) {
            return Err(Error::InvalidParameter(format!("cube half side {half_side}")));
        }
        let domain = CubeDomain { half_side };
        let h = half_side;
        for (index, p) in singular_points.iter().enumerate() {
            let inside = p.is_finite() && (0..3).all(|a| p.coord(a).abs() < h - 1e-12 * h);
            if !inside {
                return Err(Error::SingularPointOutside { index, x: p.x, y: p.y, z: p.z });
            }
            for q in &singular_points[..index] {
                if q.distance(p) <= 1e-12 * h {
                    return Err(Error::InvalidParameter(format!(
                        "singular point {index} duplicates an earlier point"
                    )));
                }
            }
        }

        let apex = singular_points.first().copied().unwrap_or(geometry::ORIGIN);
        let mut points = Vec::with_capacity(9);
        for i in 0..8 {
            let c = |bit: usize| if i & bit != 0 { h } else { -h };
            points.push(Point3::new(c(1), c(2), c(4)));
        }
        points.push(apex);
        let apex_id = 8;

        let mut raw: Vec<[NodeId; 4]> = Vec::with_capacity(12);
        for axis in 0..3 {
            let (u, v) = ((axis + 1) % 3, (axis + 2) % 3);
            for side in [0usize, 1] {
                // Corner index from the face-plane coordinates (0 = low, 1 = high).
                let corner = |cu: usize, cv: usize| -> NodeId {
                    ((side << axis) | (cu << u) | (cv << v)) as NodeId
                };
                // Same diagonal (low,low)-(high,high) on both opposite faces.
                raw.push([apex_id, corner(0, 0), corner(1, 0), corner(1, 1)]);
                raw.push([apex_id, corner(0, 0), corner(1, 1), corner(0, 1)]);
            }
        }

        let mut mesh = Mesh {
            points,
            tets: Vec::new(),
            singular_points: Vec::new(),
            level: 0,
            grading: None,
            domain: Some(domain),
            parent_nodes: 0,
            edge_nodes: Vec::new(),
            conforming: false,
        };
        if !singular_points.is_empty() {
            mesh.singular_points.push(SingularPoint { node: apex_id, position: apex });
        }
        let mut tets = raw;
        for p in singular_points.iter().skip(1) {
            let node = insert_point(&mut mesh.points, &mut tets, p)?;
            mesh.singular_points.push(SingularPoint { node, position: *p });
        }
        mesh.tets = tets
            .iter()
            .enumerate()
            .map(|(i, v)| Tetrahedron {
                vertices: *v,
                singular_vertex: None,
                parent: None,
                root: i as TetId,
                region: RegionLabel::Omega,
            })
            .collect();

        // Separate singular points that ended up sharing a tetrahedron.
        let mut guard = 0;
        while mesh.tets.iter().any(|t| mesh.singular_count(t) > 1) {
            guard += 1;
            if guard > 16 {
                return Err(Error::MeshIntegrity("singular points cannot be separated".into()));
            }
            mesh = crate::refine::midpoint_subdivide(&mesh);
        }
        mesh.finish_level_zero()?;
        Ok(mesh)
    }

    /// A mesh from explicit tetrahedra, without periodic structure. Singular
    /// vertices are moved to local position 0.
    pub fn from_tets(
        points: Vec<Point3>,
        tets: Vec<[NodeId; 4]>,
        singular_nodes: &[NodeId],
    ) -> Result<Mesh> {
        for &n in singular_nodes {
            if n as usize >= points.len() {
                return Err(Error::InvalidParameter(format!("singular node {n} out of range")));
            }
        }
        for (i, t) in tets.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= points.len()) {
                return Err(Error::MeshIntegrity(format!("tetrahedron {i} references a missing node")));
            }
        }
        let mut mesh = Mesh {
            singular_points: singular_nodes
                .iter()
                .map(|&node| SingularPoint { node, position: points[node as usize] })
                .collect(),
            points,
            tets: tets
                .iter()
                .enumerate()
                .map(|(i, v)| Tetrahedron {
                    vertices: *v,
                    singular_vertex: None,
                    parent: None,
                    root: i as TetId,
                    region: RegionLabel::Omega,
                })
                .collect(),
            level: 0,
            grading: None,
            domain: None,
            parent_nodes: 0,
            edge_nodes: Vec::new(),
            conforming: false,
        };
        if let Some(t) = mesh.tets.iter().position(|t| mesh.singular_count(t) > 1) {
            return Err(Error::MeshIntegrity(format!(
                "tetrahedron {t} has more than one singular vertex"
            )));
        }
        mesh.finish_level_zero()?;
        Ok(mesh)
    }

    fn singular_count(&self, t: &Tetrahedron) -> usize {
        t.vertices
            .iter()
            .filter(|&&v| self.singular_index(v).is_some())
            .count()
    }

    /// Labels, singular markers and volume checks for a fresh level-0 mesh.
    fn finish_level_zero(&mut self) -> Result<()> {
        self.level = 0;
        self.grading = None;
        self.parent_nodes = 0;
        self.edge_nodes.clear();
        for i in 0..self.tets.len() {
            let mut t = self.tets[i];
            t.parent = None;
            t.root = i as TetId;
            t.singular_vertex = None;
            t.region = RegionLabel::Omega;
            if let Some(local) = (0..4).find(|&l| self.singular_index(t.vertices[l]).is_some()) {
                t.vertices.swap(0, local);
                let p = self.singular_index(t.vertices[0]).unwrap_or(0);
                t.singular_vertex = Some(0);
                t.region = RegionLabel::Core { point: p as u16, level: 0 };
            }
            self.tets[i] = t;
            self.volume_of(i)?;
        }
        self.check_conformity()?;
        self.conforming = true;
        Ok(())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn tets(&self) -> &[Tetrahedron] {
        &self.tets
    }

    pub fn singular_points(&self) -> &[SingularPoint] {
        &self.singular_points
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    /// The ratio `k` of the refinement that produced this mesh.
    pub fn grading(&self) -> Option<f64> {
        self.grading
    }

    pub fn domain(&self) -> Option<CubeDomain> {
        self.domain
    }

    pub fn node_count(&self) -> usize {
        self.points.len()
    }

    pub fn tet_count(&self) -> usize {
        self.tets.len()
    }

    /// Number of nodes inherited unchanged from the parent mesh (0 at level 0).
    pub fn parent_node_count(&self) -> usize {
        self.parent_nodes
    }

    /// Sources of the nodes created by the last refinement.
    pub fn edge_nodes(&self) -> &[EdgeNode] {
        &self.edge_nodes
    }

    /// Index into [`Mesh::singular_points`] if `node` is singular.
    pub fn singular_index(&self, node: NodeId) -> Option<usize> {
        self.singular_points.iter().position(|s| s.node == node)
    }

    pub fn tet_points(&self, tet: &Tetrahedron) -> [Point3; 4] {
        let v = tet.vertices;
        [
            self.points[v[0] as usize],
            self.points[v[1] as usize],
            self.points[v[2] as usize],
            self.points[v[3] as usize],
        ]
    }

    pub fn volume_of(&self, index: usize) -> Result<f64> {
        let p = self.tet_points(&self.tets[index]);
        let volume = geometry::signed_volume(&p[0], &p[1], &p[2], &p[3]).abs();
        if is_degenerate(&p, volume) {
            return Err(Error::DegenerateTet { tet: index, volume });
        }
        Ok(volume)
    }

    pub fn total_volume(&self) -> f64 {
        self.tets
            .iter()
            .map(|t| {
                let p = self.tet_points(t);
                geometry::signed_volume(&p[0], &p[1], &p[2], &p[3]).abs()
            })
            .sum()
    }

    pub fn diameter_of(&self, index: usize) -> f64 {
        geometry::diameter(&self.tet_points(&self.tets[index]))
    }

    /// Every interior face must be shared by exactly two tetrahedra and every
    /// boundary face must lie on the cube boundary (when the mesh has one).
    pub fn check_conformity(&self) -> Result<FaceCensus> {
        let mut faces: HashMap<[NodeId; 3], u8> = HashMap::with_capacity(self.tets.len() * 2 + 4);
        for t in &self.tets {
            for f in FACES {
                let key = sorted3([t.vertices[f[0]], t.vertices[f[1]], t.vertices[f[2]]]);
                *faces.entry(key).or_insert(0) += 1;
            }
        }
        let mut census = FaceCensus { interior: 0, boundary: 0 };
        for (face, count) in &faces {
            match count {
                2 => census.interior += 1,
                1 => {
                    if let Some(d) = self.domain {
                        let p = face.map(|n| self.points[n as usize]);
                        let flat = (0..3).any(|a| {
                            p.iter().all(|q| d.on_low(q.coord(a)))
                                || p.iter().all(|q| d.on_high(q.coord(a)))
                        });
                        if !flat {
                            return Err(Error::MeshIntegrity(format!(
                                "face {face:?} is unmatched but not on the cube boundary"
                            )));
                        }
                    }
                    census.boundary += 1;
                }
                n => {
                    return Err(Error::MeshIntegrity(format!("face {face:?} is shared by {n} tetrahedra")))
                }
            }
        }
        Ok(census)
    }

    pub(crate) fn is_conforming_verified(&self) -> bool {
        self.conforming
    }

    /// Boundary nodes grouped by lattice orbit. Only classes of size > 1 are
    /// returned; every class is sorted and classes are ordered by their
    /// smallest node.
    pub fn periodic_classes(&self) -> Result<Vec<Vec<NodeId>>> {
        let d = self.domain.ok_or_else(|| {
            Error::MeshIntegrity("periodic identification needs a cube domain".into())
        })?;
        let mut groups: HashMap<(i64, i64, i64), Vec<NodeId>> = HashMap::new();
        for (i, p) in self.points.iter().enumerate() {
            if d.on_boundary(p) {
                groups.entry(snap_key(&d.canonical(p))).or_default().push(i as NodeId);
            }
        }
        let mut classes: Vec<Vec<NodeId>> = groups.into_values().collect();
        for c in classes.iter_mut() {
            c.sort_unstable();
            let p = self.points[c[0] as usize];
            let on = (0..3)
                .filter(|&a| d.on_low(p.coord(a)) || d.on_high(p.coord(a)))
                .count();
            let expected = 1usize << on;
            if c.len() != expected {
                return Err(Error::MeshIntegrity(format!(
                    "boundary node {} at ({}, {}, {}) has {} periodic images, expected {}",
                    c[0],
                    p.x,
                    p.y,
                    p.z,
                    c.len(),
                    expected
                )));
            }
        }
        classes.sort_unstable_by_key(|c| c[0]);
        Ok(classes)
    }

    /// Pairs `(a, b)` of boundary nodes with `x_b = x_a + 2h e_axis`.
    pub fn opposite_face_pairs(&self) -> Result<Vec<(NodeId, NodeId)>> {
        let d = self.domain.ok_or_else(|| {
            Error::MeshIntegrity("periodic identification needs a cube domain".into())
        })?;
        let mut by_position: HashMap<(i64, i64, i64), NodeId> = HashMap::new();
        for (i, p) in self.points.iter().enumerate() {
            if d.on_boundary(p) {
                by_position.insert(snap_key(p), i as NodeId);
            }
        }
        let mut pairs = Vec::new();
        for (i, p) in self.points.iter().enumerate() {
            for axis in 0..3 {
                if d.on_low(p.coord(axis)) {
                    let mut q = *p;
                    q.set_coord(axis, d.half_side);
                    match by_position.get(&snap_key(&q)) {
                        Some(&j) => pairs.push((i as NodeId, j)),
                        None => {
                            return Err(Error::MeshIntegrity(format!(
                                "boundary node {i} has no partner across axis {axis}"
                            )))
                        }
                    }
                }
                if d.on_high(p.coord(axis)) {
                    let mut q = *p;
                    q.set_coord(axis, -d.half_side);
                    if !by_position.contains_key(&snap_key(&q)) {
                        return Err(Error::MeshIntegrity(format!(
                            "boundary node {i} has no partner across axis {axis}"
                        )));
                    }
                }
            }
        }
        Ok(pairs)
    }

    /// Every boundary face on `x_a = -h` has a translated copy on `x_a = +h`
    /// and vice versa.
    pub fn check_periodic_congruence(&self) -> Result<()> {
        let d = self
            .domain
            .ok_or_else(|| Error::MeshIntegrity("no cube domain".into()))?;
        let mut low: [Vec<[(i64, i64, i64); 3]>; 3] = [Vec::new(), Vec::new(), Vec::new()];
        let mut high: [HashSet<[(i64, i64, i64); 3]>; 3] =
            [HashSet::new(), HashSet::new(), HashSet::new()];
        let mut faces: HashMap<[NodeId; 3], u8> = HashMap::new();
        for t in &self.tets {
            for f in FACES {
                let key = sorted3([t.vertices[f[0]], t.vertices[f[1]], t.vertices[f[2]]]);
                *faces.entry(key).or_insert(0) += 1;
            }
        }
        for (face, count) in faces {
            if count != 1 {
                continue;
            }
            let p = face.map(|n| self.points[n as usize]);
            for a in 0..3 {
                if p.iter().all(|q| d.on_low(q.coord(a))) {
                    let mut keys = p.map(|q| snap_key(&q));
                    keys.sort_unstable();
                    low[a].push(keys);
                } else if p.iter().all(|q| d.on_high(q.coord(a))) {
                    let mut keys = p.map(|mut q| {
                        q.set_coord(a, -d.half_side);
                        snap_key(&q)
                    });
                    keys.sort_unstable();
                    high[a].insert(keys);
                }
            }
        }
        for a in 0..3 {
            if low[a].len() != high[a].len() {
                return Err(Error::MeshIntegrity(format!(
                    "axis {a}: {} faces on the low side, {} on the high side",
                    low[a].len(),
                    high[a].len()
                )));
            }
            for f in &low[a] {
                if !high[a].contains(f) {
                    return Err(Error::MeshIntegrity(format!(
                        "axis {a}: boundary face has no translated partner"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Tetrahedra incident to every node, as a CSR-style adjacency.
    pub fn node_to_tets(&self) -> (Vec<usize>, Vec<TetId>) {
        let n = self.points.len();
        let mut offsets = vec![0usize; n + 1];
        for t in &self.tets {
            for &v in &t.vertices {
                offsets[v as usize + 1] += 1;
            }
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut list = vec![0 as TetId; offsets[n]];
        for (i, t) in self.tets.iter().enumerate() {
            for &v in &t.vertices {
                list[fill[v as usize]] = i as TetId;
                fill[v as usize] += 1;
            }
        }
        (offsets, list)
    }
}

/// Volume of `tet`, rejecting degenerate elements.
pub fn volume(tet: &Tetrahedron, mesh: &Mesh) -> Result<f64> {
    let p = mesh.tet_points(tet);
    let v = geometry::signed_volume(&p[0], &p[1], &p[2], &p[3]).abs();
    if is_degenerate(&p, v) {
        let index = mesh
            .tets
            .iter()
            .position(|t| t == tet)
            .unwrap_or(usize::MAX);
        return Err(Error::DegenerateTet { tet: index, volume: v });
    }
    Ok(v)
}

/// Star-splits every tetrahedron containing `p` (in its interior, on a face
/// or on an edge) by coning `p` to the faces that do not contain it.
fn insert_point(points: &mut Vec<Point3>, tets: &mut Vec<[NodeId; 4]>, p: &Point3) -> Result<NodeId> {
    const EPS: f64 = 1e-12;
    if points.iter().any(|q| q.distance(p) <= EPS) {
        return Err(Error::InvalidParameter(format!(
            "singular point ({}, {}, {}) coincides with a construction vertex",
            p.x, p.y, p.z
        )));
    }
    let node = points.len() as NodeId;
    let mut replacement = Vec::new();
    let mut hit = false;
    let mut kept = Vec::with_capacity(tets.len() + 8);
    for t in tets.iter() {
        let tp = t.map(|v| points[v as usize]);
        let b = geometry::to_barycentric(&tp, p);
        if b.iter().all(|&l| l >= -EPS) {
            hit = true;
            for i in 0..4 {
                if b[i] > EPS {
                    let mut child = *t;
                    child[i] = node;
                    child.swap(0, i);
                    replacement.push(child);
                }
            }
        } else {
            kept.push(*t);
        }
    }
    if !hit {
        return Err(Error::Invariant("singular point not located in the mesh".into()));
    }
    points.push(*p);
    kept.extend(replacement);
    *tets = kept;
    Ok(node)
}
