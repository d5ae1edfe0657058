use super::{read_mesh, Mesh, TriMesh};
use crate::error::{Error, Result};

/// Hand-made unstructured meshes of the unit square shipped with the crate.
///
/// Each has seven interior nodes adjacent to the outflow boundary. A mixes
/// nodes that satisfy and violate the outflow area condition, B and C
/// satisfy it everywhere (with the last node line at x = 0.8 and 0.9), and
/// `Oversized` is C with one node pulled away from the outflow boundary so
/// that its outflow-touching triangles dominate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnstructuredMesh {
    A,
    B,
    C,
    Oversized,
}

impl UnstructuredMesh {
    pub const ALL: [UnstructuredMesh; 4] =
        [UnstructuredMesh::A, UnstructuredMesh::B, UnstructuredMesh::C, UnstructuredMesh::Oversized];

    pub fn name(self) -> &'static str {
        match self {
            UnstructuredMesh::A => "mesh-a",
            UnstructuredMesh::B => "mesh-b",
            UnstructuredMesh::C => "mesh-c",
            UnstructuredMesh::Oversized => "mesh-oversized",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        let s = s.to_ascii_lowercase().replace('_', "-");
        Self::ALL.into_iter().find(|m| m.name() == s)
    }

    /// The mesh file contents.
    pub fn source(self) -> &'static str {
        match self {
            UnstructuredMesh::A => include_str!("../../data/mesh_a.lqm"),
            UnstructuredMesh::B => include_str!("../../data/mesh_b.lqm"),
            UnstructuredMesh::C => include_str!("../../data/mesh_c.lqm"),
            UnstructuredMesh::Oversized => include_str!("../../data/mesh_oversized.lqm"),
        }
    }

    pub fn load(self) -> Result<TriMesh> {
        match read_mesh(self.source())? {
            Mesh::Triangle(m) => Ok(m),
            Mesh::Interval(_) => Err(Error::InvalidMesh(format!("{} is not a triangle mesh", self.name()))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Marker;

    #[test]
    fn shipped_meshes_load_and_tile_the_square() {
        for m in UnstructuredMesh::ALL {
            let mesh = m.load().unwrap();
            let area: f64 = (0..mesh.num_elements()).map(|t| mesh.area(t)).sum();
            assert!((area - 1.0).abs() < 1e-14, "{}: {area}", m.name());
            assert_eq!(UnstructuredMesh::parse(m.name()), Some(m));
        }
    }

    #[test]
    fn seven_interior_nodes_next_to_outflow() {
        for m in UnstructuredMesh::ALL {
            let mesh = m.load().unwrap();
            let n = (0..mesh.num_nodes())
                .filter(|&v| mesh.markers()[v] == Marker::Interior)
                .filter(|&v| mesh.neighbours(v).iter().any(|&w| mesh.markers()[w] == Marker::Outflow))
                .count();
            assert_eq!(n, 7, "{}", m.name());
        }
    }
}
