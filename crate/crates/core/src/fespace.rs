//! Periodic continuous piecewise-linear spaces.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::geometry::Point3;
use crate::mesh::{Mesh, NodeId};
use crate::{Error, Result};

/// Node-to-dof identification. Nodes in one periodic class share a dof;
/// dofs are numbered in order of their smallest node.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    node_to_dof: Vec<u32>,
    representative: Vec<NodeId>,
}

impl DofMap {
    /// Periodic dof map for cube meshes, identity otherwise.
    pub fn build(mesh: &Mesh) -> Result<DofMap> {
        let n = mesh.node_count();
        let mut partner: Vec<NodeId> = (0..n as NodeId).collect();
        if mesh.domain().is_some() {
            for class in mesh.periodic_classes()? {
                for &node in &class[1..] {
                    partner[node as usize] = class[0];
                }
            }
        }
        let mut node_to_dof = vec![u32::MAX; n];
        let mut representative = Vec::with_capacity(n);
        for i in 0..n {
            let head = partner[i] as usize;
            if head == i {
                node_to_dof[i] = representative.len() as u32;
                representative.push(i as NodeId);
            } else {
                node_to_dof[i] = node_to_dof[head];
            }
        }
        Ok(DofMap { node_to_dof, representative })
    }

    pub fn dof_count(&self) -> usize {
        self.representative.len()
    }

    pub fn dof(&self, node: NodeId) -> usize {
        self.node_to_dof[node as usize] as usize
    }

    pub fn node_to_dof(&self) -> &[u32] {
        &self.node_to_dof
    }

    /// Smallest node of each dof's class.
    pub fn representative(&self, dof: usize) -> NodeId {
        self.representative[dof]
    }

    pub fn representatives(&self) -> &[NodeId] {
        &self.representative
    }
}

/// Degree-1 Lagrange space on a mesh. Only `m = 1` is implemented.
#[derive(Debug, Clone)]
pub struct FeSpace {
    mesh: Mesh,
    dofs: DofMap,
    degree: u32,
}

impl FeSpace {
    pub fn new(mesh: Mesh) -> Result<FeSpace> {
        let dofs = DofMap::build(&mesh)?;
        Ok(FeSpace { mesh, dofs, degree: 1 })
    }

    pub fn with_degree(mesh: Mesh, degree: u32) -> Result<FeSpace> {
        if degree != 1 {
            return Err(Error::Unsupported(format!("polynomial degree {degree}")));
        }
        FeSpace::new(mesh)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn into_mesh(self) -> Mesh {
        self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn dim(&self) -> usize {
        self.dofs.dof_count()
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    /// Dofs of the four vertices of tet `t`.
    #[inline]
    pub fn tet_dofs(&self, t: usize) -> [usize; 4] {
        self.mesh.tets()[t].vertices.map(|v| self.dofs.dof(v))
    }

    /// Whether dof `d` is a singular point.
    pub fn is_singular_dof(&self, d: usize) -> bool {
        self.mesh.singular_index(self.dofs.representative(d)).is_some()
    }

    /// Modified Lagrange interpolant: nodal values of `f`, forced to zero at
    /// singular points.
    pub fn modified_interpolant(&self, f: impl Fn(Point3) -> f64) -> Result<FeFunction<'_>> {
        let points = self.mesh.points();
        let mut coefficients = Vec::with_capacity(self.dim());
        for &node in self.dofs.representatives() {
            if self.mesh.singular_index(node).is_some() {
                coefficients.push(0.0);
                continue;
            }
            let value = f(points[node as usize]);
            if !value.is_finite() {
                return Err(Error::Evaluation { node: node as usize, value });
            }
            coefficients.push(value);
        }
        Ok(FeFunction { space: self, coefficients })
    }

    /// Plain nodal interpolant (no modification at singular points).
    pub fn interpolant(&self, f: impl Fn(Point3) -> f64) -> FeFunction<'_> {
        let points = self.mesh.points();
        let coefficients =
            self.dofs.representatives().iter().map(|&n| f(points[n as usize])).collect();
        FeFunction { space: self, coefficients }
    }

    pub fn function(&self, coefficients: Vec<f64>) -> Result<FeFunction<'_>> {
        if coefficients.len() != self.dim() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients for a space of dimension {}",
                coefficients.len(),
                self.dim()
            )));
        }
        Ok(FeFunction { space: self, coefficients })
    }

    pub fn constant(&self, c: f64) -> FeFunction<'_> {
        FeFunction { space: self, coefficients: vec![c; self.dim()] }
    }

    /// Nodal values on every mesh node of a coefficient vector.
    pub fn nodal_values(&self, coefficients: &[f64]) -> Vec<f64> {
        self.dofs.node_to_dof().iter().map(|&d| coefficients[d as usize]).collect()
    }

    /// Coefficients on this space of the coarse function `coarse`, where this
    /// mesh is the refinement of the coarse mesh.
    pub fn prolongate_from(&self, coarse: &FeFunction<'_>) -> Result<Vec<f64>> {
        let fine = &self.mesh;
        let coarse_mesh = coarse.space.mesh();
        let parents = fine.parent_node_count();
        if fine.level() != coarse_mesh.level() + 1
            || parents != coarse_mesh.node_count()
            || parents + fine.edge_nodes().len() != fine.node_count()
        {
            return Err(Error::Usage(format!(
                "mesh at level {} with {} nodes is not the refinement of level {} with {} nodes",
                fine.level(),
                fine.node_count(),
                coarse_mesh.level(),
                coarse_mesh.node_count()
            )));
        }
        let mut values = coarse.nodal_values();
        values.reserve(fine.edge_nodes().len());
        for e in fine.edge_nodes() {
            let (a, b) = (values[e.a as usize], values[e.b as usize]);
            values.push((1.0 - e.t) * a + e.t * b);
        }
        Ok(self.dofs.representatives().iter().map(|&n| values[n as usize]).collect())
    }

    pub fn prolongate<'s>(&'s self, coarse: &FeFunction<'_>) -> Result<FeFunction<'s>> {
        let coefficients = self.prolongate_from(coarse)?;
        Ok(FeFunction { space: self, coefficients })
    }
}

/// A function in an [`FeSpace`], stored as one coefficient per dof.
#[derive(Debug, Clone)]
pub struct FeFunction<'s> {
    space: &'s FeSpace,
    coefficients: Vec<f64>,
}

impl<'s> FeFunction<'s> {
    pub fn space(&self) -> &'s FeSpace {
        self.space
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn into_coefficients(self) -> Vec<f64> {
        self.coefficients
    }

    pub fn nodal_values(&self) -> Vec<f64> {
        self.space.nodal_values(&self.coefficients)
    }

    /// Vertex values on tet `t`.
    #[inline]
    pub fn tet_values(&self, t: usize) -> [f64; 4] {
        self.space.tet_dofs(t).map(|d| self.coefficients[d])
    }

    /// Value at barycentric coordinates `bary` of tet `t`.
    pub fn eval_in_tet(&self, t: usize, bary: &[f64; 4]) -> f64 {
        let v = self.tet_values(t);
        (0..4).map(|i| v[i] * bary[i]).sum()
    }

    pub fn sub(&self, other: &FeFunction<'_>) -> Result<FeFunction<'s>> {
        if other.coefficients.len() != self.coefficients.len() {
            return Err(Error::InvalidParameter("functions live on different spaces".into()));
        }
        let coefficients =
            self.coefficients.iter().zip(&other.coefficients).map(|(a, b)| a - b).collect();
        Ok(FeFunction { space: self.space, coefficients })
    }

    pub fn scaled(&self, c: f64) -> FeFunction<'s> {
        FeFunction { space: self.space, coefficients: self.coefficients.iter().map(|v| c * v).collect() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ORIGIN;
    use crate::refine::{refine_mesh_k, GradingParams};

    fn level(n: u32, k: f64) -> Mesh {
        let mut m = Mesh::cube(&[ORIGIN]).unwrap();
        for _ in 0..n {
            m = refine_mesh_k(&m, &GradingParams::new(k).unwrap()).unwrap();
        }
        m
    }

    #[test]
    fn level_zero_has_two_dofs() {
        let s = FeSpace::new(level(0, 0.5)).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.dofs().dof(8), 1);
        assert!((0..8).all(|c| s.dofs().dof(c) == 0));
    }

    #[test]
    fn level_one_dof_count() {
        // 9 inherited nodes plus 26 edge nodes. Orbits: the corners, 3 classes
        // of cube-edge midpoints, 3 pairs of face centres, 8 interior nodes on
        // the apex-corner edges and the apex.
        let s = FeSpace::new(level(1, 0.2)).unwrap();
        assert_eq!(s.mesh().node_count(), 35);
        assert_eq!(s.dim(), 16);
    }

    #[test]
    fn interpolant_vanishes_at_singular_point() {
        let s = FeSpace::new(level(1, 0.2)).unwrap();
        let f = s.modified_interpolant(|_| 1.0).unwrap();
        let origin_dof = s.dofs().dof(8);
        for (d, &c) in f.coefficients().iter().enumerate() {
            assert_eq!(c, if d == origin_dof { 0.0 } else { 1.0 });
        }
        let err = s.modified_interpolant(|p| 1.0 / p.x).unwrap_err();
        assert!(matches!(err, Error::Evaluation { .. }));
    }

    #[test]
    fn prolongation_reproduces_linear_edge_values() {
        let coarse = FeSpace::new(level(0, 0.2)).unwrap();
        let fine = FeSpace::new(level(1, 0.2)).unwrap();
        let hat = coarse.function(vec![0.0, 1.0]).unwrap();
        let p = fine.prolongate(&hat).unwrap();
        let values = p.nodal_values();
        for (i, x) in fine.mesh().points().iter().enumerate() {
            let linf = x.x.abs().max(x.y.abs()).max(x.z.abs());
            assert!((values[i] - (1.0 - linf)).abs() < 1e-14, "node {i}");
        }
        assert!(coarse.prolongate(&hat).is_err());
    }
}
