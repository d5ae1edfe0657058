use super::{Point, TriMesh};
use crate::error::{Error, Result};

/// The four named meshes of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SquarePattern {
    Mesh1,
    Mesh2,
    Mesh3,
    Mesh4,
}

impl SquarePattern {
    pub fn name(self) -> &'static str {
        match self {
            SquarePattern::Mesh1 => "mesh1",
            SquarePattern::Mesh2 => "mesh2",
            SquarePattern::Mesh3 => "mesh3",
            SquarePattern::Mesh4 => "mesh4",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mesh1" => Some(SquarePattern::Mesh1),
            "mesh2" => Some(SquarePattern::Mesh2),
            "mesh3" => Some(SquarePattern::Mesh3),
            "mesh4" => Some(SquarePattern::Mesh4),
            _ => None,
        }
    }
}

// 3x3 lattice shared by meshes 2-4, row by row from the bottom.
const LATTICE: [Point; 9] = [
    [0.0, 0.0],
    [0.5, 0.0],
    [1.0, 0.0],
    [0.0, 0.5],
    [0.5, 0.5],
    [1.0, 0.5],
    [0.0, 1.0],
    [0.5, 1.0],
    [1.0, 1.0],
];

const MESH2: [[usize; 3]; 8] = [
    [0, 1, 4],
    [0, 4, 3],
    [1, 2, 5],
    [1, 5, 4],
    [3, 4, 7],
    [3, 7, 6],
    [4, 5, 8],
    [4, 8, 7],
];

const MESH3: [[usize; 3]; 8] = [
    [0, 1, 4],
    [0, 4, 3],
    [2, 5, 4],
    [1, 2, 4],
    [4, 7, 6],
    [3, 4, 6],
    [4, 5, 8],
    [4, 8, 7],
];

const MESH4: [[usize; 3]; 8] = [
    [1, 4, 3],
    [0, 1, 3],
    [1, 2, 5],
    [1, 5, 4],
    [3, 4, 7],
    [3, 7, 6],
    [5, 8, 7],
    [4, 5, 7],
];

/// Builds one of the named meshes. Only `Mesh1` can be refined; refinement
/// level `k` yields the criss-cross mesh with `2^k` cells per side.
pub fn structured_square_mesh(pattern: SquarePattern, refine: u32) -> Result<TriMesh> {
    let tris = match pattern {
        SquarePattern::Mesh1 => {
            if refine > 12 {
                return Err(Error::Unsupported(format!("refinement level {refine} is too large")));
            }
            return criss_cross(1usize << refine);
        }
        _ if refine > 0 => {
            return Err(Error::Unsupported(format!(
                "refinement of {} (only mesh1 can be refined)",
                pattern.name()
            )))
        }
        SquarePattern::Mesh2 => MESH2,
        SquarePattern::Mesh3 => MESH3,
        SquarePattern::Mesh4 => MESH4,
    };
    TriMesh::with_inferred_markers(LATTICE.to_vec(), tris.to_vec())
}

/// Unit square split into `n x n` cells, each cut by both diagonals.
///
/// Grid vertices come first (row-major from the bottom), followed by the
/// cell centres. Each cell contributes its bottom, right, top and left
/// triangles in that order.
pub fn criss_cross(n: usize) -> Result<TriMesh> {
    if n == 0 {
        return Err(Error::InvalidMesh("criss-cross mesh needs n >= 1".into()));
    }
    let coord = |i: usize| if i == n { 1.0 } else { i as f64 / n as f64 };
    let mut vertices = Vec::with_capacity((n + 1) * (n + 1) + n * n);
    for j in 0..=n {
        for i in 0..=n {
            vertices.push([coord(i), coord(j)]);
        }
    }
    for j in 0..n {
        for i in 0..n {
            vertices.push([(coord(i) + coord(i + 1)) / 2.0, (coord(j) + coord(j + 1)) / 2.0]);
        }
    }
    let grid = |i: usize, j: usize| j * (n + 1) + i;
    let mut triangles = Vec::with_capacity(4 * n * n);
    for j in 0..n {
        for i in 0..n {
            let c = (n + 1) * (n + 1) + j * n + i;
            let (a, b, d, e) = (grid(i, j), grid(i + 1, j), grid(i + 1, j + 1), grid(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([b, d, c]);
            triangles.push([d, e, c]);
            triangles.push([e, a, c]);
        }
    }
    TriMesh::with_inferred_markers(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Marker;

    fn all() -> Vec<TriMesh> {
        [SquarePattern::Mesh1, SquarePattern::Mesh2, SquarePattern::Mesh3, SquarePattern::Mesh4]
            .iter()
            .map(|&p| structured_square_mesh(p, 0).unwrap())
            .collect()
    }

    #[test]
    fn counts() {
        let m = all();
        assert_eq!((m[0].num_elements(), m[0].num_nodes()), (4, 5));
        for mesh in &m[1..] {
            assert_eq!((mesh.num_elements(), mesh.num_nodes()), (8, 9));
        }
        let r2 = structured_square_mesh(SquarePattern::Mesh1, 2).unwrap();
        assert_eq!(r2.num_elements(), 64);
        for k in 0..4 {
            let n = 1usize << k;
            let m = structured_square_mesh(SquarePattern::Mesh1, k).unwrap();
            assert_eq!(m.num_elements(), 4 * n * n);
            assert_eq!(m.num_nodes(), (n + 1) * (n + 1) + n * n);
        }
    }

    #[test]
    fn areas_sum_to_one() {
        let mut meshes = all();
        meshes.push(criss_cross(7).unwrap());
        for m in &meshes {
            let s: f64 = (0..m.num_elements()).map(|t| m.area(t)).sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn conformity_counts() {
        for m in all().into_iter().chain([criss_cross(3).unwrap()]) {
            let edges = m.edge_map();
            let boundary = edges.values().filter(|t| t.len() == 1).count();
            let interior = edges.values().filter(|t| t.len() == 2).count();
            assert_eq!(boundary + interior, edges.len());
            // Euler: 3T = 2 E_int + E_bnd
            assert_eq!(3 * m.num_elements(), 2 * interior + boundary);
        }
    }

    #[test]
    fn mesh1_congruent_quarters() {
        let m = structured_square_mesh(SquarePattern::Mesh1, 0).unwrap();
        for t in 0..4 {
            assert!((m.area(t) - 0.25).abs() < 1e-15);
            assert!(m.triangles()[t].contains(&4));
        }
        assert_eq!(m.vertices()[4], [0.5, 0.5]);
        assert_eq!(m.markers()[4], Marker::Interior);
    }

    #[test]
    fn interior_line_nodes_on_meshes_2_to_4() {
        for m in &all()[1..] {
            for v in [1, 4, 7] {
                assert_eq!(m.vertices()[v][0], 0.5);
                assert_ne!(m.markers()[v], Marker::Inflow);
                assert_ne!(m.markers()[v], Marker::Outflow);
            }
        }
    }

    #[test]
    fn refine_other_patterns_unsupported() {
        for p in [SquarePattern::Mesh2, SquarePattern::Mesh3, SquarePattern::Mesh4] {
            assert!(matches!(structured_square_mesh(p, 1), Err(Error::Unsupported(_))));
        }
    }
}
